//! Weibull proportional hazards by full maximum likelihood:
//! Λ(t | x) = exp(b₀ + z·β) (t / t_scale)^k with z the standardized covariates.

use serde::{Deserialize, Serialize};

use super::nonparametric::SurvivalTargets;
use crate::error::{Error, Result};
use crate::numerics::{solve_spd, sup_norm, DesignMatrix};

const MAX_ITERATIONS: usize = 200;
const GRADIENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullModel {
    pub shape: f64,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub time_scale: f64,
}

impl WeibullModel {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept
            + x.iter()
                .zip(&self.center)
                .zip(&self.scale)
                .zip(&self.coefficients)
                .map(|(((v, c), s), b)| (v - c) / s * b)
                .sum::<f64>()
    }

    pub fn cumulative_hazard(&self, t: f64, x: &[f64]) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        (self.linear_predictor(x) + self.shape * (t / self.time_scale).ln()).exp()
    }
}

struct Likelihood<'a> {
    z: &'a DesignMatrix,
    log_t: Vec<f64>,
    status: &'a [bool],
    fixed_shape: Option<f64>,
}

impl Likelihood<'_> {
    fn unpack(&self, theta: &[f64]) -> (f64, usize) {
        match self.fixed_shape {
            Some(k) => (k, 0),
            None => (theta[0].exp(), 1),
        }
    }

    fn eta(&self, i: usize, theta: &[f64], offset: usize) -> f64 {
        theta[offset] + self.z.row(i).iter().zip(&theta[offset + 1..]).map(|(a, b)| a * b).sum::<f64>()
    }

    fn loglik(&self, theta: &[f64]) -> f64 {
        let (k, off) = self.unpack(theta);
        (0..self.z.n_rows())
            .map(|i| {
                let eta = self.eta(i, theta, off);
                let u = self.log_t[i];
                let event = if self.status[i] { k.ln() + (k - 1.0) * u + eta } else { 0.0 };
                event - (eta + k * u).exp()
            })
            .sum()
    }

    /// Gradient and negative Hessian in θ = ([log k], b₀, β).
    fn derivatives(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (k, off) = self.unpack(theta);
        let dim = theta.len();
        let mut g = vec![0.0; dim];
        let mut h = vec![0.0; dim * dim];
        let mut basis = vec![0.0; dim - off];
        for i in 0..self.z.n_rows() {
            let eta = self.eta(i, theta, off);
            let u = self.log_t[i];
            let cum = (eta + k * u).exp();
            let delta = f64::from(u8::from(self.status[i]));
            basis[0] = 1.0;
            basis[1..].copy_from_slice(self.z.row(i));
            for a in 0..basis.len() {
                g[off + a] += (delta - cum) * basis[a];
                for b in 0..basis.len() {
                    h[(off + a) * dim + off + b] += cum * basis[a] * basis[b];
                }
            }
            if off == 1 {
                let ku = k * u;
                g[0] += delta * (1.0 + ku) - cum * ku;
                h[0] += cum * (ku + ku * ku) - delta * ku;
                for a in 0..basis.len() {
                    h[off + a] += cum * ku * basis[a];
                    h[(off + a) * dim] += cum * ku * basis[a];
                }
            }
        }
        (g, h)
    }
}

/// Fits the Weibull model (or the exponential one when `fixed_shape = Some(1)`).
pub fn fit_weibull(targets: &SurvivalTargets, x: &DesignMatrix, fixed_shape: Option<f64>) -> Result<WeibullModel> {
    let n = targets.times.len();
    if targets.n_occurrences() == 0 {
        return Err(Error::invalid("parametric fit needs at least one occurrence"));
    }
    let p = x.n_cols();
    let mut center = vec![0.0; p];
    let mut scale = vec![1.0; p];
    for j in 0..p {
        let col = x.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if !(sd > 0.0) {
            return Err(Error::invalid(format!("covariate column {j} has zero variance")));
        }
        center[j] = mean;
        scale[j] = sd;
    }
    let values = x.rows().flat_map(|r| (0..p).map(|j| (r[j] - center[j]) / scale[j]).collect::<Vec<_>>()).collect();
    let z = DesignMatrix::new(n, p, values)?;
    let mut sorted = targets.times.clone();
    sorted.sort_by(f64::total_cmp);
    let time_scale = sorted[n / 2];
    let lik = Likelihood {
        z: &z,
        log_t: targets.times.iter().map(|t| (t / time_scale).ln()).collect(),
        status: &targets.status,
        fixed_shape,
    };
    let off = usize::from(fixed_shape.is_none());
    let mut theta = vec![0.0; off + 1 + p];
    // Exponential-rate start for the intercept.
    let exposure: f64 = targets.times.iter().map(|t| t / time_scale).sum();
    theta[off] = (targets.n_occurrences() as f64 / exposure).ln();
    let mut value = lik.loglik(&theta);
    let mut trace = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let (g, h) = lik.derivatives(&theta);
        let norm = sup_norm(&g) / n as f64;
        trace.push(norm);
        if norm < GRADIENT_TOL {
            let shape = fixed_shape.unwrap_or_else(|| theta[0].exp());
            return Ok(WeibullModel {
                shape,
                intercept: theta[off],
                coefficients: theta[off + 1..].to_vec(),
                center,
                scale,
                time_scale,
            });
        }
        // Newton where the negative Hessian is positive definite, otherwise
        // a damped (Levenberg) step.
        let dim = theta.len();
        let step = solve_spd(&h, &g).unwrap_or_else(|| {
            let mut damped = h.clone();
            let bump = (0..dim).map(|i| h[i * dim + i].abs()).fold(1.0, f64::max);
            for i in 0..dim {
                damped[i * dim + i] += bump;
            }
            solve_spd(&damped, &g).unwrap_or_else(|| g.iter().map(|v| v / bump).collect())
        });
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = theta.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            let trial_value = lik.loglik(&trial);
            if trial_value.is_finite() && trial_value >= value - 1e-12 * value.abs().max(1.0) {
                theta = trial;
                value = trial_value;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(Error::NonConvergence { iterations: trace.len(), trace });
            }
        }
    }
    Err(Error::NonConvergence { iterations: MAX_ITERATIONS, trace })
}
