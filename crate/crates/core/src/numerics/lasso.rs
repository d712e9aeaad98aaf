//! L1-penalized Cox regression by proximal Newton with coordinate descent.
//!
//! Objective on standardized covariates: −ℓ(β)/n + λ‖β‖₁, where ℓ is the
//! Breslow log partial likelihood.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::cox::{model_from_standardized, standardization, standardized, CoxData, MONOTONE_BOUND};
use super::{sup_norm, CoxModel, DesignMatrix};
use crate::error::{Error, Result};
use crate::seed;

const PATH_LENGTH: usize = 50;
const PATH_RATIO: f64 = 1e-3;
const CHANGE_TOL: f64 = 1e-7;
const MAX_OUTER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaChoice {
    Fixed(f64),
    /// Cross-validated partial likelihood over the default path.
    CrossValidated { folds: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxLassoFit {
    pub model: CoxModel,
    pub lambda: f64,
    pub lambda_max: f64,
    /// Cross-validated partial log-likelihood per path value (empty for a fixed λ).
    pub path: Vec<f64>,
    pub cv_loglik: Vec<f64>,
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

fn penalized_objective(data: &CoxData, beta: &[f64], lambda: f64) -> f64 {
    let n = data.n() as f64;
    -data.evaluate(beta, false).0 / n + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

fn fit_penalized(data: &CoxData, lambda: f64, warm: &[f64]) -> Result<Vec<f64>> {
    let n = data.n() as f64;
    let p = warm.len();
    let mut beta = warm.to_vec();
    let mut value = penalized_objective(data, &beta, lambda);
    let mut trace = Vec::new();
    for _ in 0..MAX_OUTER {
        let (_, score, info) = data.evaluate(&beta, true);
        let g: Vec<f64> = score.iter().map(|s| -s / n).collect();
        let h: Vec<f64> = info.iter().map(|v| v / n).collect();
        // Coordinate descent on the local quadratic model.
        let mut z = beta.clone();
        for _ in 0..1000 {
            let mut max_change: f64 = 0.0;
            for j in 0..p {
                let hjj = h[j * p + j];
                let old = z[j];
                z[j] = if hjj <= 1e-14 {
                    0.0
                } else {
                    let cross: f64 = (0..p).filter(|&k| k != j).map(|k| h[j * p + k] * (z[k] - beta[k])).sum();
                    let r = g[j] + cross - hjj * beta[j];
                    soft_threshold(-r, lambda) / hjj
                };
                max_change = max_change.max((z[j] - old).abs());
            }
            if max_change < 1e-13 {
                break;
            }
        }
        let d: Vec<f64> = z.iter().zip(&beta).map(|(a, b)| a - b).collect();
        let l1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
        let decrease = g.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() + lambda * (l1(&z) - l1(&beta));
        let mut t = 1.0;
        let mut next = z.clone();
        let mut next_value = penalized_objective(data, &next, lambda);
        while next_value > value + 1e-4 * t * decrease.min(0.0) + 1e-15 * value.abs() && t > 1e-10 {
            t *= 0.5;
            next = beta.iter().zip(&d).map(|(b, dd)| b + t * dd).collect();
            next_value = penalized_objective(data, &next, lambda);
        }
        let change = next.iter().zip(&beta).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        trace.push(change);
        beta = next;
        value = next_value;
        if sup_norm(&beta) > MONOTONE_BOUND {
            return Err(Error::MonotoneLikelihood(format!(
                "lasso coefficients diverge at lambda {lambda:.3e}; increase the penalty"
            )));
        }
        if change < CHANGE_TOL {
            return Ok(beta);
        }
    }
    Err(Error::NonConvergence { iterations: MAX_OUTER, trace })
}

/// Smallest λ giving an all-zero solution: max |∂ℓ/∂β(0)| / n on the
/// standardized scale.
pub fn cox_lasso_path_max(times: &[f64], status: &[bool], x: &DesignMatrix) -> Result<f64> {
    let (means, sds) = standardization(x)?;
    let xs = standardized(x, &means, &sds);
    let data = CoxData::new(times, status, &xs)?;
    Ok(null_gradient_max(&data))
}

fn null_gradient_max(data: &CoxData) -> f64 {
    let p = data_cols(data);
    sup_norm(&data.evaluate(&vec![0.0; p], false).1) / data.n() as f64
}

fn data_cols(data: &CoxData) -> usize {
    data.n_cols()
}

fn lambda_path(lambda_max: f64) -> Vec<f64> {
    (0..PATH_LENGTH)
        .map(|k| lambda_max * PATH_RATIO.powf(k as f64 / (PATH_LENGTH - 1) as f64))
        .collect()
}

/// Fits the path in decreasing order with warm starts; entries after the
/// first failure are `None`.
fn fit_path(data: &CoxData, path: &[f64]) -> Vec<Option<Vec<f64>>> {
    let mut warm = vec![0.0; data_cols(data)];
    let mut out = Vec::with_capacity(path.len());
    let mut failed = false;
    for &lambda in path {
        if failed {
            out.push(None);
            continue;
        }
        match fit_penalized(data, lambda, &warm) {
            Ok(beta) => {
                warm.clone_from(&beta);
                out.push(Some(beta));
            }
            Err(e) => {
                log::debug!("lasso path stopped at lambda {lambda:.3e}: {e}");
                failed = true;
                out.push(None);
            }
        }
    }
    out
}

fn cv_folds(status: &[bool], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed, "lasso-cv");
    let mut events: Vec<usize> = (0..status.len()).filter(|&i| status[i]).collect();
    let mut others: Vec<usize> = (0..status.len()).filter(|&i| !status[i]).collect();
    events.shuffle(&mut rng);
    others.shuffle(&mut rng);
    let mut fold = vec![0; status.len()];
    for (pos, &i) in events.iter().chain(&others).enumerate() {
        fold[i] = pos % k;
    }
    fold
}

/// Lasso-penalized Cox fit. With [`LambdaChoice::CrossValidated`], λ maximizes
/// the cross-validated partial likelihood ℓ(β̂₋ₖ) − ℓ₋ₖ(β̂₋ₖ) summed over
/// folds, along 50 log-spaced values from λ_max to λ_max·1e-3.
pub fn coord_descent_cox_lasso(
    times: &[f64],
    status: &[bool],
    x: &DesignMatrix,
    choice: LambdaChoice,
) -> Result<CoxLassoFit> {
    let (means, sds) = standardization(x)?;
    let xs = standardized(x, &means, &sds);
    let data = CoxData::new(times, status, &xs)?;
    let lambda_max = null_gradient_max(&data);
    let null_loglik = data.evaluate(&vec![0.0; x.n_cols()], false).0;

    let (lambda, path, cv_loglik) = match choice {
        LambdaChoice::Fixed(lambda) => {
            if !(lambda.is_finite() && lambda >= 0.0) {
                return Err(Error::invalid(format!("lasso penalty must be non-negative, got {lambda}")));
            }
            (lambda, Vec::new(), Vec::new())
        }
        LambdaChoice::CrossValidated { folds, seed } => {
            let k = folds.min(status.iter().filter(|&&s| s).count());
            if k < 2 {
                return Err(Error::invalid("lasso cross-validation needs at least two events"));
            }
            let path = lambda_path(lambda_max);
            let fold_of = cv_folds(status, k, seed);
            let mut cv = vec![0.0; path.len()];
            for fold in 0..k {
                let train: Vec<usize> = (0..times.len()).filter(|&i| fold_of[i] != fold).collect();
                let t_times: Vec<f64> = train.iter().map(|&i| times[i]).collect();
                let t_status: Vec<bool> = train.iter().map(|&i| status[i]).collect();
                let t_x = xs.select_rows(&train);
                let Ok(train_data) = CoxData::new(&t_times, &t_status, &t_x) else {
                    cv.iter_mut().for_each(|c| *c = f64::NEG_INFINITY);
                    continue;
                };
                for (c, beta) in cv.iter_mut().zip(fit_path(&train_data, &path)) {
                    *c += match beta {
                        Some(b) => data.evaluate(&b, false).0 - train_data.evaluate(&b, false).0,
                        None => f64::NEG_INFINITY,
                    };
                }
            }
            // First (largest) λ wins ties.
            let best = (0..path.len()).fold(0, |best, i| if cv[i] > cv[best] { i } else { best });
            if !cv[best].is_finite() {
                return Err(Error::NonConvergence { iterations: 0, trace: vec![] }
                    .context("every lasso path fit failed in cross-validation"));
            }
            (path[best], path, cv)
        }
    };

    // Walk down the path to the chosen λ for a stable warm start.
    let mut beta = vec![0.0; x.n_cols()];
    for &l in lambda_path(lambda_max).iter().filter(|&&l| l > lambda) {
        match fit_penalized(&data, l, &beta) {
            Ok(b) => beta = b,
            Err(_) => break,
        }
    }
    let beta = fit_penalized(&data, lambda, &beta)?;
    let model = model_from_standardized(&data, &beta, &means, &sds, null_loglik, 0);
    Ok(CoxLassoFit { model, lambda, lambda_max, path, cv_loglik })
}
