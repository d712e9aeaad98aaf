//! Cox proportional hazards: Breslow partial likelihood, Newton–Raphson and
//! the Breslow baseline cumulative hazard.

use serde::{Deserialize, Serialize};

use super::{solve_spd, sup_norm, DesignMatrix};
use crate::error::{Error, Result};

const SCORE_TOL: f64 = 1e-8;
const MAX_ITERATIONS: usize = 50;
/// Standardized coefficients beyond this bound signal a monotone likelihood.
pub(crate) const MONOTONE_BOUND: f64 = 15.0;

/// A fitted proportional-hazards model on the original covariate scale:
/// Λ(t | x) = Λ₀(t) · exp((x − center)·β).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub coefficients: Vec<f64>,
    pub center: Vec<f64>,
    /// Distinct event times and Λ₀ just after each.
    pub baseline_times: Vec<f64>,
    pub baseline_cumhaz: Vec<f64>,
    pub loglik: f64,
    pub null_loglik: f64,
    pub iterations: usize,
}

impl CoxModel {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.center).zip(&self.coefficients).map(|((v, c), b)| (v - c) * b).sum()
    }

    /// Λ₀ as a right-continuous step function.
    pub fn baseline_at(&self, t: f64) -> f64 {
        let k = self.baseline_times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.baseline_cumhaz[k - 1]
        }
    }

    pub fn cumulative_hazard(&self, t: f64, x: &[f64]) -> f64 {
        self.baseline_at(t) * self.linear_predictor(x).exp()
    }

    pub fn last_event_time(&self) -> f64 {
        self.baseline_times.last().copied().unwrap_or(0.0)
    }
}

/// Column means and standard deviations; errors on a constant column.
pub(crate) fn standardization(x: &DesignMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = x.n_rows() as f64;
    let mut means = vec![0.0; x.n_cols()];
    let mut sds = vec![0.0; x.n_cols()];
    for j in 0..x.n_cols() {
        let col = x.column(j);
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        if !(var > 1e-24 * mean.abs().max(1.0).powi(2)) {
            return Err(Error::invalid(format!("covariate column {j} has zero variance")));
        }
        means[j] = mean;
        sds[j] = var.sqrt();
    }
    Ok((means, sds))
}

pub(crate) fn standardized(x: &DesignMatrix, means: &[f64], sds: &[f64]) -> DesignMatrix {
    let values = x.rows().flat_map(|r| r.iter().zip(means).zip(sds).map(|((v, m), s)| (v - m) / s)).collect();
    DesignMatrix::new(x.n_rows(), x.n_cols(), values).expect("finite standardized values")
}

/// Risk-set sweep shared by the likelihood, score and information.
pub(crate) struct CoxData<'a> {
    x: &'a DesignMatrix,
    status: &'a [bool],
    /// Indices sorted by decreasing time.
    order: Vec<usize>,
    /// Boundaries of tied-time groups within `order`.
    groups: Vec<(usize, usize)>,
    times: &'a [f64],
}

impl<'a> CoxData<'a> {
    pub(crate) fn new(times: &'a [f64], status: &'a [bool], x: &'a DesignMatrix) -> Result<Self> {
        if times.len() != x.n_rows() || status.len() != x.n_rows() {
            return Err(Error::invalid("times, status and covariates differ in length"));
        }
        if !status.iter().any(|&s| s) {
            return Err(Error::invalid("Cox model needs at least one event"));
        }
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[b].total_cmp(&times[a]).then(a.cmp(&b)));
        let mut groups = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let mut end = start + 1;
            while end < order.len() && times[order[end]] == times[order[start]] {
                end += 1;
            }
            groups.push((start, end));
            start = end;
        }
        Ok(Self { x, status, order, groups, times })
    }

    pub(crate) fn n(&self) -> usize {
        self.x.n_rows()
    }

    pub(crate) fn n_cols(&self) -> usize {
        self.x.n_cols()
    }

    /// (log partial likelihood, score, information) at `beta`.
    pub(crate) fn evaluate(&self, beta: &[f64], want_information: bool) -> (f64, Vec<f64>, Vec<f64>) {
        let p = beta.len();
        let eta: Vec<f64> = (0..self.n()).map(|i| self.x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
        // Shift for overflow safety; cancels in every ratio.
        let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![0.0; if want_information { p * p } else { 0 }];
        let mut loglik = 0.0;
        let mut score = vec![0.0; p];
        let mut info = vec![0.0; if want_information { p * p } else { 0 }];
        for &(start, end) in &self.groups {
            for &i in &self.order[start..end] {
                let r = (eta[i] - shift).exp();
                let row = self.x.row(i);
                s0 += r;
                for j in 0..p {
                    s1[j] += r * row[j];
                    if want_information {
                        for k in j..p {
                            s2[j * p + k] += r * row[j] * row[k];
                        }
                    }
                }
            }
            let events: Vec<usize> = self.order[start..end].iter().copied().filter(|&i| self.status[i]).collect();
            if events.is_empty() {
                continue;
            }
            let d = events.len() as f64;
            loglik += events.iter().map(|&i| eta[i] - shift).sum::<f64>() - d * s0.ln();
            for j in 0..p {
                score[j] += events.iter().map(|&i| self.x.get(i, j)).sum::<f64>() - d * s1[j] / s0;
                if want_information {
                    for k in j..p {
                        info[j * p + k] += d * (s2[j * p + k] / s0 - s1[j] * s1[k] / (s0 * s0));
                    }
                }
            }
        }
        if want_information {
            for j in 0..p {
                for k in 0..j {
                    info[j * p + k] = info[k * p + j];
                }
            }
        }
        (loglik, score, info)
    }

    /// Breslow increments d_k / Σ_{R(t_k)} exp(η) at each distinct event time.
    pub(crate) fn breslow(&self, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let eta: Vec<f64> = (0..self.n()).map(|i| self.x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
        let mut s0 = 0.0;
        let mut increments = Vec::new();
        for &(start, end) in &self.groups {
            for &i in &self.order[start..end] {
                s0 += eta[i].exp();
            }
            let d = self.order[start..end].iter().filter(|&&i| self.status[i]).count();
            if d > 0 {
                increments.push((self.times[self.order[start]], d as f64 / s0));
            }
        }
        increments.reverse();
        let mut cum = 0.0;
        let times = increments.iter().map(|&(t, _)| t).collect();
        let cumhaz = increments
            .iter()
            .map(|&(_, h)| {
                cum += h;
                cum
            })
            .collect();
        (times, cumhaz)
    }
}

/// Breslow log partial likelihood at `beta` on the raw covariates.
pub fn cox_partial_loglik(times: &[f64], status: &[bool], x: &DesignMatrix, beta: &[f64]) -> Result<f64> {
    Ok(CoxData::new(times, status, x)?.evaluate(beta, false).0)
}

/// Analytic score (gradient of the Breslow log partial likelihood).
pub fn cox_score(times: &[f64], status: &[bool], x: &DesignMatrix, beta: &[f64]) -> Result<Vec<f64>> {
    Ok(CoxData::new(times, status, x)?.evaluate(beta, false).1)
}

/// Packages standardized-scale coefficients as a model on the raw scale.
pub(crate) fn model_from_standardized(
    data: &CoxData,
    beta_std: &[f64],
    means: &[f64],
    sds: &[f64],
    null_loglik: f64,
    iterations: usize,
) -> CoxModel {
    let (baseline_times, baseline_cumhaz) = data.breslow(beta_std);
    CoxModel {
        coefficients: beta_std.iter().zip(sds).map(|(b, s)| b / s).collect(),
        center: means.to_vec(),
        baseline_times,
        baseline_cumhaz,
        loglik: data.evaluate(beta_std, false).0,
        null_loglik,
        iterations,
    }
}

/// Maximizes the Breslow partial likelihood by Newton–Raphson with
/// step-halving. Covariates are standardized internally; convergence is a
/// score sup-norm below 1e-8 on that scale.
pub fn newton_cox(times: &[f64], status: &[bool], x: &DesignMatrix) -> Result<CoxModel> {
    let (means, sds) = standardization(x)?;
    let xs = standardized(x, &means, &sds);
    let data = CoxData::new(times, status, &xs)?;
    let p = x.n_cols();
    let mut beta = vec![0.0; p];
    let (mut loglik, _, _) = data.evaluate(&beta, false);
    let null_loglik = loglik;
    let mut trace = Vec::new();
    for iteration in 0..MAX_ITERATIONS {
        let (_, score, info) = data.evaluate(&beta, true);
        let norm = sup_norm(&score);
        trace.push(norm);
        if norm < SCORE_TOL && sup_norm(&beta) <= MONOTONE_BOUND {
            return Ok(model_from_standardized(&data, &beta, &means, &sds, null_loglik, iteration));
        }
        let Some(step) = solve_spd(&info, &score) else {
            // A vanishing information matrix along a diverging coefficient is
            // separation, not a collinear design.
            return Err(if sup_norm(&beta) > 5.0 {
                Error::MonotoneLikelihood("a covariate separates the risk sets and its coefficient diverges".into())
            } else {
                Error::Singular("Cox information matrix is not positive definite".into())
            });
        };
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let trial_ll = data.evaluate(&trial, false).0;
            if trial_ll >= loglik - 1e-12 * loglik.abs().max(1.0) {
                beta = trial;
                loglik = trial_ll;
                break;
            }
            t *= 0.5;
            if t < 1e-10 {
                return Err(Error::NonConvergence { iterations: iteration + 1, trace });
            }
        }
        if sup_norm(&beta) > MONOTONE_BOUND {
            return Err(Error::MonotoneLikelihood(
                "a covariate separates the risk sets and its coefficient diverges".into(),
            ));
        }
    }
    Err(Error::NonConvergence { iterations: MAX_ITERATIONS, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn column(x: &[f64]) -> DesignMatrix {
        DesignMatrix::new(x.len(), 1, x.to_vec()).unwrap()
    }

    const TIMES: [f64; 8] = [2.0, 3.0, 3.0, 5.0, 6.0, 7.0, 9.0, 11.0];
    const STATUS: [bool; 8] = [true, true, false, true, true, false, true, false];
    const X: [f64; 8] = [1.2, 0.4, 1.0, -0.3, 0.8, -1.1, 0.1, -0.6];

    // Breslow partial likelihood written out directly from its definition.
    fn hand_loglik(beta: f64) -> f64 {
        let mut ll = 0.0;
        for i in 0..8 {
            if STATUS[i] {
                let denom: f64 = (0..8).filter(|&j| TIMES[j] >= TIMES[i]).map(|j| (beta * X[j]).exp()).sum();
                ll += beta * X[i] - denom.ln();
            }
        }
        ll
    }

    #[test]
    fn matches_grid_maximization() {
        let fit = newton_cox(&TIMES, &STATUS, &column(&X)).unwrap();
        let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
        for k in 0..=10_000 {
            let b = -5.0 + k as f64 * 1e-3;
            let v = hand_loglik(b);
            if v > best {
                best = v;
                arg = b;
            }
        }
        assert!((fit.coefficients[0] - arg).abs() < 2e-3, "{} vs {arg}", fit.coefficients[0]);
        assert!((fit.loglik - hand_loglik(fit.coefficients[0])).abs() < 1e-10);
        assert!(fit.loglik >= fit.null_loglik);
    }

    #[test]
    fn score_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![X[i], rng.random_range(-1.0..1.0)]).collect();
        let x = DesignMatrix::from_rows(&rows, 2).unwrap();
        for _ in 0..5 {
            let beta = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let score = cox_score(&TIMES, &STATUS, &x, &beta).unwrap();
            for j in 0..2 {
                let h = 1e-5;
                let mut up = beta;
                let mut down = beta;
                up[j] += h;
                down[j] -= h;
                let fd = (cox_partial_loglik(&TIMES, &STATUS, &x, &up).unwrap()
                    - cox_partial_loglik(&TIMES, &STATUS, &x, &down).unwrap())
                    / (2.0 * h);
                assert!((fd - score[j]).abs() / score[j].abs().max(1e-3) < 1e-5, "{fd} vs {}", score[j]);
            }
        }
    }

    #[test]
    fn exchangeable_groups_give_zero() {
        // Same time pattern in both groups: swapping labels leaves data unchanged.
        let times = [1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0];
        let status = [true, false, true, true, true, false, true, true];
        let x = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let fit = newton_cox(&times, &status, &column(&x)).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-10);
        assert_eq!(fit.loglik, fit.null_loglik);
    }

    #[test]
    fn null_baseline_is_nelson_aalen() {
        let times = [1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0];
        let status = [true, false, true, true, true, false, true, true];
        let x = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let fit = newton_cox(&times, &status, &column(&x)).unwrap();
        // Nelson–Aalen: 2/8, then 2/4, then 2/2.
        let expected = [0.25, 0.75, 1.75];
        for (got, want) in fit.baseline_cumhaz.iter().zip(expected) {
            assert!((got - want).abs() < 1e-10);
        }
        assert_eq!(fit.cumulative_hazard(0.5, &[1.0]), 0.0);
        assert!((fit.cumulative_hazard(3.5, &[0.0]) - 0.75).abs() < 1e-10);
    }

    #[test]
    fn separation_and_constant_columns_are_errors() {
        let times = [1.0, 2.0, 3.0, 4.0];
        let status = [true, true, true, true];
        assert!(matches!(
            newton_cox(&times, &status, &column(&[4.0, 3.0, 2.0, 1.0])),
            Err(Error::MonotoneLikelihood(_))
        ));
        assert!(newton_cox(&times, &status, &column(&[1.0; 4])).is_err());
    }
}
