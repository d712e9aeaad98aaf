//! Logistic regression by iteratively reweighted least squares.

use super::{solve_spd, sup_norm, DesignMatrix};
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 100;
const GRADIENT_TOL: f64 = 1e-8;
const SEPARATION_RIDGE: f64 = 1e-6;
/// Coefficients beyond this size signal (quasi-)separation: the maximum sits
/// at infinity and Newton merely stalls where the gradient underflows.
const SEPARATION_BOUND: f64 = 15.0;

/// Hazards are clipped to `[HAZARD_CLIP, 1 − HAZARD_CLIP]` before any logit.
pub const HAZARD_CLIP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    /// Ridge actually used (the requested one, or the automatic separation ridge).
    pub ridge: f64,
    /// Set when separation or a singular information matrix forced the
    /// automatic ridge.
    pub separation_ridge: bool,
}

pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

pub fn logit_clipped(q: f64) -> f64 {
    let q = q.clamp(HAZARD_CLIP, 1.0 - HAZARD_CLIP);
    (q / (1.0 - q)).ln()
}

// log(1 + e^η) without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

struct Problem<'a> {
    a: &'a DesignMatrix,
    y: &'a [f64],
    offset: Option<&'a [f64]>,
    total_weight: f64,
}

impl Problem<'_> {
    fn eta(&self, i: usize, beta: &[f64]) -> f64 {
        let lin: f64 = self.a.row(i).iter().zip(beta).map(|(x, b)| x * b).sum();
        lin + self.offset.map_or(0.0, |o| o[i])
    }

    /// Penalized mean log-likelihood.
    fn objective(&self, beta: &[f64], ridge: f64) -> f64 {
        let ll: f64 = (0..self.a.n_rows())
            .map(|i| {
                let eta = self.eta(i, beta);
                self.a.weight(i) * (self.y[i] * eta - softplus(eta))
            })
            .sum();
        ll / self.total_weight - 0.5 * ridge * beta.iter().map(|b| b * b).sum::<f64>()
    }

    fn gradient_hessian(&self, beta: &[f64], ridge: f64) -> (Vec<f64>, Vec<f64>) {
        let p = beta.len();
        let mut g = vec![0.0; p];
        let mut h = vec![0.0; p * p];
        for i in 0..self.a.n_rows() {
            let w = self.a.weight(i) / self.total_weight;
            if w == 0.0 {
                continue;
            }
            let mu = expit(self.eta(i, beta));
            let row = self.a.row(i);
            let v = w * mu * (1.0 - mu);
            for j in 0..p {
                g[j] += w * (self.y[i] - mu) * row[j];
                for k in j..p {
                    h[j * p + k] += v * row[j] * row[k];
                }
            }
        }
        for j in 0..p {
            g[j] -= ridge * beta[j];
            h[j * p + j] += ridge;
            for k in 0..j {
                h[j * p + k] = h[k * p + j];
            }
        }
        (g, h)
    }
}

enum Outcome {
    Converged(Vec<f64>, usize),
    Separated,
    Failed(Vec<f64>),
}

fn newton(problem: &Problem, ridge: f64) -> Outcome {
    let p = problem.a.n_cols();
    let mut beta = vec![0.0; p];
    let mut value = problem.objective(&beta, ridge);
    let mut trace = Vec::new();
    for iteration in 0..MAX_ITERATIONS {
        let (g, h) = problem.gradient_hessian(&beta, ridge);
        let norm = sup_norm(&g);
        trace.push(norm);
        if norm < GRADIENT_TOL {
            if ridge == 0.0 && sup_norm(&beta) > SEPARATION_BOUND {
                return Outcome::Separated;
            }
            return Outcome::Converged(beta, iteration);
        }
        let Some(step) = solve_spd(&h, &g) else {
            return if ridge > 0.0 { Outcome::Failed(trace) } else { Outcome::Separated };
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let trial_value = problem.objective(&trial, ridge);
            if trial_value >= value - 1e-15 * value.abs().max(1.0) {
                beta = trial;
                value = trial_value;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Outcome::Failed(trace);
        }
        if ridge == 0.0 && sup_norm(&beta) > SEPARATION_BOUND {
            return Outcome::Separated;
        }
    }
    Outcome::Failed(trace)
}

/// Maximizes Σ wᵢ[yᵢηᵢ − log(1 + e^ηᵢ)] / Σ wᵢ − (ridge/2)‖β‖², with
/// ηᵢ = Aᵢβ + offsetᵢ. Convergence: gradient sup-norm below 1e-8.
///
/// Separation (coefficients diverging) or a singular information matrix
/// triggers a refit with ridge 1e-6, flagged in the result.
pub fn logistic_irls(a: &DesignMatrix, y: &[f64], offset: Option<&[f64]>, ridge: Option<f64>) -> Result<LogisticFit> {
    if y.len() != a.n_rows() {
        return Err(Error::invalid(format!("response has {} entries, design has {} rows", y.len(), a.n_rows())));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::invalid("logistic response must be 0 or 1"));
    }
    if offset.is_some_and(|o| o.len() != y.len() || o.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("offset must be finite with one entry per row"));
    }
    let total_weight: f64 = (0..a.n_rows()).map(|i| a.weight(i)).sum();
    if total_weight <= 0.0 {
        return Err(Error::invalid("logistic regression needs rows with positive weight"));
    }
    let requested = ridge.unwrap_or(0.0);
    if !(requested.is_finite() && requested >= 0.0) {
        return Err(Error::invalid("ridge penalty must be non-negative"));
    }
    let problem = Problem { a, y, offset, total_weight };
    match newton(&problem, requested) {
        Outcome::Converged(coefficients, iterations) => {
            Ok(LogisticFit { coefficients, iterations, ridge: requested, separation_ridge: false })
        }
        Outcome::Failed(trace) => Err(Error::NonConvergence { iterations: trace.len(), trace }),
        Outcome::Separated => {
            log::warn!("logistic fit separated or singular; refitting with ridge {SEPARATION_RIDGE}");
            match newton(&problem, SEPARATION_RIDGE) {
                Outcome::Converged(coefficients, iterations) => {
                    Ok(LogisticFit { coefficients, iterations, ridge: SEPARATION_RIDGE, separation_ridge: true })
                }
                Outcome::Failed(trace) => Err(Error::NonConvergence { iterations: trace.len(), trace }),
                Outcome::Separated => unreachable!("ridge fits never report separation"),
            }
        }
    }
}

/// No-intercept logistic stack of logit-transformed learner hazards.
///
/// `hazards` holds one column per learner; entries are clipped before the
/// logit. Coefficients are unconstrained.
pub fn constrained_logit_stack(hazards: &DesignMatrix, outcomes: &[f64]) -> Result<LogisticFit> {
    let transformed: Vec<f64> = hazards.rows().flat_map(|r| r.iter().map(|&q| logit_clipped(q))).collect();
    let mut design = DesignMatrix::new(hazards.n_rows(), hazards.n_cols(), transformed)?;
    if let Some(w) = hazards.weights() {
        design = design.with_weights(w.to_vec())?;
    }
    logistic_irls(&design, outcomes, None, None)
}
