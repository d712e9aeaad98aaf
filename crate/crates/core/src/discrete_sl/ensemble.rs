//! Meta-regressions combining the cross-validated learners.

use serde::{Deserialize, Serialize};

use super::{cv_risk_table, select_best, CensoringCurve, CvHazards, DiscreteLoss};
use crate::data::LongFormatDataset;
use crate::error::{Error, Result};
use crate::numerics::{constrained_logit_stack, expit, logit_clipped, nnls, simplex_normalize, DesignMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintMode {
    /// α ≥ 0, Σα = 1.
    Simplex,
    Unconstrained,
}

/// Ensemble coefficients with the evidence needed to audit them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub loss: DiscreteLoss,
    pub mode: ConstraintMode,
    pub labels: Vec<String>,
    pub weights: Vec<f64>,
    /// Solver coefficients before normalization.
    pub raw: Vec<f64>,
    /// Set when the regression was degenerate and the best single learner
    /// was used instead.
    pub fallback: Option<String>,
    /// Meta-objective at `weights` (smaller is better).
    pub objective: f64,
    /// Meta-objective at each vertex eⱼ.
    pub vertex_objectives: Vec<f64>,
    /// IPCW weights truncated at the cap.
    pub capped_weights: usize,
    /// The logit stack needed a small ridge to converge.
    pub ridge_added: bool,
}

impl EnsembleWeights {
    /// Learners with a non-zero coefficient.
    pub fn active(&self) -> Vec<usize> {
        (0..self.weights.len()).filter(|&j| self.weights[j] != 0.0).collect()
    }
}

fn vertex(p: usize, j: usize) -> Vec<f64> {
    let mut e = vec![0.0; p];
    e[j] = 1.0;
    e
}

fn vertex_objectives(p: usize, objective: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..p).map(|j| objective(&vertex(p, j))).collect()
}

/// Person-period design: one row per at-risk row, one column per learner.
fn long_design(cv: &CvHazards, long: &LongFormatDataset) -> (DesignMatrix, Vec<f64>) {
    let p = cv.n_learners();
    let rows = long.rows();
    let mut values = Vec::with_capacity(rows.len() * p);
    for r in rows {
        values.extend((0..p).map(|j| cv.hazard(j, r.individual, r.period)));
    }
    let y = rows.iter().map(|r| if r.period_event { 1.0 } else { 0.0 }).collect();
    (DesignMatrix::new(rows.len(), p, values).expect("shape is consistent"), y)
}

fn combine(row: &[f64], alpha: &[f64]) -> f64 {
    row.iter().zip(alpha).map(|(a, b)| a * b).sum()
}

/// Σ over person-periods of (Δᵢ(t) − Σⱼ αⱼ ψᵢⱼ(t))².
pub fn meta_objective_l2(cv: &CvHazards, long: &LongFormatDataset, alpha: &[f64]) -> f64 {
    let (a, y) = long_design(cv, long);
    a.weighted_rss(&y, alpha)
}

/// Negative Bernoulli log-likelihood of expit(Σⱼ αⱼ logit ψᵢⱼ(t)) over
/// person-periods.
pub fn meta_objective_loglik(cv: &CvHazards, long: &LongFormatDataset, alpha: &[f64]) -> f64 {
    let (a, y) = long_design(cv, long);
    a.rows()
        .zip(&y)
        .map(|(row, &d)| {
            let eta: f64 = row.iter().zip(alpha).map(|(&q, &w)| w * logit_clipped(q)).sum();
            // log(1 + e^η) computed stably.
            let softplus = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
            softplus - d * eta
        })
        .sum()
}

/// Weighted rows (φᵢ·, I(T̃ᵢ > τ), weight) for individuals whose status at τ
/// is known, and the number of capped weights.
fn ipcw_design(
    cv: &CvHazards,
    long: &LongFormatDataset,
    censoring: &CensoringCurve,
) -> Result<(DesignMatrix, Vec<f64>, usize)> {
    let tau = long.periods().horizon();
    let p = cv.n_learners();
    let (mut values, mut y, mut w) = (Vec::new(), Vec::new(), Vec::new());
    let mut capped = 0;
    for (i, ind) in long.individuals().iter().enumerate() {
        if let Some((weight, outcome, was_capped)) = censoring.weight(ind.time, ind.event, tau) {
            capped += usize::from(was_capped);
            values.extend((0..p).map(|j| cv.survival_at_horizon(j, i)));
            y.push(outcome);
            w.push(weight);
        }
    }
    if y.is_empty() {
        return Err(Error::invalid(
            "no individual has a known status at the horizon: everyone is censored before it",
        ));
    }
    let a = DesignMatrix::new(y.len(), p, values)?.with_weights(w)?;
    Ok((a, y, capped))
}

/// Σᵢ wᵢ (I(T̃ᵢ > τ) − Σⱼ αⱼ φᵢⱼ)² over individuals with known status at τ.
pub fn meta_objective_ipcw(
    cv: &CvHazards,
    long: &LongFormatDataset,
    censoring: &CensoringCurve,
    alpha: &[f64],
) -> Result<f64> {
    let (a, y, _) = ipcw_design(cv, long, censoring)?;
    Ok(a.weighted_rss(&y, alpha))
}

/// Non-negative fit, normalized onto the simplex; an all-zero fit falls
/// back to the best single learner under `loss`.
fn simplex_fit(
    cv: &CvHazards,
    long: &LongFormatDataset,
    loss: DiscreteLoss,
    a: &DesignMatrix,
    y: &[f64],
    objective: impl Fn(&[f64]) -> f64,
) -> Result<EnsembleWeights> {
    let p = cv.n_learners();
    let (raw, fallback, weights) = if p == 1 {
        (vec![1.0], None, vec![1.0])
    } else {
        let sol = nnls(a, y)?;
        match simplex_normalize(&sol.coefficients) {
            Ok(w) => (sol.coefficients, None, w),
            Err(Error::DegenerateEnsemble) => {
                let best = select_best(&cv_risk_table(cv, long, loss)?)?;
                log::warn!("all ensemble coefficients are zero; falling back to learner '{}'", best.label);
                (sol.coefficients, Some(best.label), vertex(p, best.index))
            }
            Err(e) => return Err(e),
        }
    };
    Ok(EnsembleWeights {
        loss,
        mode: ConstraintMode::Simplex,
        labels: cv.labels().to_vec(),
        objective: objective(&weights),
        vertex_objectives: vertex_objectives(p, &objective),
        weights,
        raw,
        fallback,
        capped_weights: 0,
        ridge_added: false,
    })
}

/// Least squares of Δᵢ(t) on the learners' hazards without intercept,
/// non-negative and normalized to sum to one.
pub fn ensemble_l2(cv: &CvHazards, long: &LongFormatDataset) -> Result<EnsembleWeights> {
    cv.check_matches(long)?;
    let (a, y) = long_design(cv, long);
    simplex_fit(cv, long, DiscreteLoss::L2, &a, &y, |alpha| a.weighted_rss(&y, alpha))
}

/// Logistic regression of Δᵢ(t) on logit-transformed hazards, no intercept,
/// unconstrained coefficients.
pub fn ensemble_loglik(cv: &CvHazards, long: &LongFormatDataset) -> Result<EnsembleWeights> {
    cv.check_matches(long)?;
    let p = cv.n_learners();
    let (a, y) = long_design(cv, long);
    let (weights, ridge_added) = if p == 1 {
        (vec![1.0], false)
    } else {
        let fit = constrained_logit_stack(&a, &y)?;
        (fit.coefficients, fit.separation_ridge)
    };
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::invalid("logit stack produced non-finite coefficients"));
    }
    let objective = |alpha: &[f64]| meta_objective_loglik(cv, long, alpha);
    Ok(EnsembleWeights {
        loss: DiscreteLoss::Loglik,
        mode: ConstraintMode::Unconstrained,
        labels: cv.labels().to_vec(),
        objective: objective(&weights),
        vertex_objectives: vertex_objectives(p, objective),
        raw: weights.clone(),
        weights,
        fallback: None,
        capped_weights: 0,
        ridge_added,
    })
}

/// Weighted least squares of I(T̃ᵢ > τ) on φᵢⱼ = Ŝⱼ(τ | xᵢ), one row per
/// individual whose status at τ is known, non-negative and normalized.
pub fn ensemble_ipcw(cv: &CvHazards, long: &LongFormatDataset, censoring: &CensoringCurve) -> Result<EnsembleWeights> {
    cv.check_matches(long)?;
    let (a, y, capped) = ipcw_design(cv, long, censoring)?;
    if capped > 0 {
        log::warn!("{capped} inverse-probability weights were truncated at 20 in the ensemble regression");
    }
    let mut fit = simplex_fit(cv, long, DiscreteLoss::Ipcw, &a, &y, |alpha| a.weighted_rss(&y, alpha))?;
    fit.capped_weights = capped;
    Ok(fit)
}

/// The combined hazard for one person-period under `weights`.
pub(crate) fn combine_hazards(mode: ConstraintMode, hazards: &[f64], weights: &[f64]) -> f64 {
    match mode {
        ConstraintMode::Simplex => combine(hazards, weights).clamp(0.0, 1.0),
        ConstraintMode::Unconstrained => {
            expit(hazards.iter().zip(weights).map(|(&q, &w)| w * logit_clipped(q)).sum::<f64>())
        }
    }
}
