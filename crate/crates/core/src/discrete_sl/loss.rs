//! Fold-wise expected losses and non-ensemble selection.

use serde::{Deserialize, Serialize};

use super::{CensoringCurve, CvHazards, DiscreteLoss};
use crate::data::LongFormatDataset;
use crate::error::{Error, Result};
use crate::numerics::HAZARD_CLIP;

fn check_fold(cv: &CvHazards, long: &LongFormatDataset, k: usize, j: usize) -> Result<Vec<usize>> {
    cv.check_matches(long)?;
    if j >= cv.n_learners() {
        return Err(Error::invalid(format!("learner index {j} out of range")));
    }
    let members = cv.fold_members(k);
    if members.is_empty() {
        return Err(Error::invalid(format!("fold {} has no members", k + 1)));
    }
    Ok(members)
}

/// Sums `f(Δ, Q̂)` over the at-risk rows of fold `k`, divided by |D_k|.
fn per_individual_mean(
    cv: &CvHazards,
    long: &LongFormatDataset,
    k: usize,
    j: usize,
    f: impl Fn(f64, f64) -> f64,
) -> Result<f64> {
    let members = check_fold(cv, long, k, j)?;
    let total: f64 = long
        .rows()
        .iter()
        .filter(|r| cv.fold_of(r.individual) == k)
        .map(|r| f(if r.period_event { 1.0 } else { 0.0 }, cv.hazard(j, r.individual, r.period)))
        .sum();
    Ok(total / members.len() as f64)
}

/// Σ_t (1/|D_k|) Σ_{i ∈ D_k} I(T̃ᵢ ≥ t)(Δᵢ(t) − Q̂ⱼ(t | xᵢ))².
pub fn loss_l2(cv: &CvHazards, long: &LongFormatDataset, k: usize, j: usize) -> Result<f64> {
    per_individual_mean(cv, long, k, j, |d, q| (d - q).powi(2))
}

/// Negated Bernoulli log-likelihood of the at-risk rows, normalized like
/// the squared-error loss; hazards are clipped to [1e-6, 1 − 1e-6].
pub fn loss_loglik(cv: &CvHazards, long: &LongFormatDataset, k: usize, j: usize) -> Result<f64> {
    per_individual_mean(cv, long, k, j, |d, q| {
        let q = q.clamp(HAZARD_CLIP, 1.0 - HAZARD_CLIP);
        -(d * q.ln() + (1.0 - d) * (1.0 - q).ln())
    })
}

/// IPCW Brier loss of Ŝⱼ(τ | x) over fold `k`; `censoring` is Ĝ for that
/// fold. Individuals censored at or before τ contribute zero. Returns the
/// loss and the number of capped weights.
pub fn loss_ipcw(
    cv: &CvHazards,
    long: &LongFormatDataset,
    censoring: &CensoringCurve,
    k: usize,
    j: usize,
) -> Result<(f64, usize)> {
    let members = check_fold(cv, long, k, j)?;
    let tau = long.periods().horizon();
    let mut total = 0.0;
    let mut capped = 0;
    for &i in &members {
        let ind = &long.individuals()[i];
        if let Some((w, y, was_capped)) = censoring.weight(ind.time, ind.event, tau) {
            capped += usize::from(was_capped);
            total += w * (y - cv.survival_at_horizon(j, i)).powi(2);
        }
    }
    Ok((total / members.len() as f64, capped))
}

/// Per-fold and mean expected losses, one row per surviving learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRiskTable {
    pub loss: DiscreteLoss,
    pub labels: Vec<String>,
    /// `per_fold[j][k]` = loss of learner j on validation fold k.
    pub per_fold: Vec<Vec<f64>>,
    /// Average over folds.
    pub mean: Vec<f64>,
    /// IPCW weights truncated at the cap (IPCW loss only).
    pub capped_weights: usize,
}

impl CvRiskTable {
    /// Builds a table from per-fold values, averaging over folds.
    pub fn from_fold_losses(loss: DiscreteLoss, labels: Vec<String>, per_fold: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != per_fold.len() {
            return Err(Error::invalid("one row of fold losses per learner is required"));
        }
        if per_fold.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("cross-validated losses must be finite"));
        }
        let mean = per_fold.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
        Ok(Self { loss, labels, per_fold, mean, capped_weights: 0 })
    }
}

/// Evaluates `loss` for every learner and fold.
///
/// For the IPCW loss, Ĝ is re-estimated within each validation fold.
pub fn cv_risk_table(cv: &CvHazards, long: &LongFormatDataset, loss: DiscreteLoss) -> Result<CvRiskTable> {
    let mut capped = 0;
    let censoring: Vec<CensoringCurve> = (0..cv.n_folds())
        .map(|k| CensoringCurve::from_individuals(cv.fold_members(k).iter().map(|&i| &long.individuals()[i])))
        .collect();
    let mut per_fold = Vec::with_capacity(cv.n_learners());
    for j in 0..cv.n_learners() {
        let mut row = Vec::with_capacity(cv.n_folds());
        for (k, g) in censoring.iter().enumerate() {
            row.push(match loss {
                DiscreteLoss::L2 => loss_l2(cv, long, k, j)?,
                DiscreteLoss::Loglik => loss_loglik(cv, long, k, j)?,
                DiscreteLoss::Ipcw => {
                    let (v, c) = loss_ipcw(cv, long, g, k, j)?;
                    capped += c;
                    v
                }
            });
        }
        per_fold.push(row);
    }
    if capped > 0 {
        log::warn!("{capped} inverse-probability weights were truncated at 20 while scoring learners");
    }
    let mut table = CvRiskTable::from_fold_losses(loss, cv.labels().to_vec(), per_fold)?;
    table.capped_weights = capped;
    Ok(table)
}

/// The learner with the smallest mean loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub index: usize,
    pub label: String,
    /// Another learner had exactly the same mean loss; the earlier one won.
    pub tie: bool,
}

pub fn select_best(table: &CvRiskTable) -> Result<Selection> {
    let mut best: Option<usize> = None;
    for (j, &v) in table.mean.iter().enumerate() {
        if best.is_none_or(|b| v < table.mean[b]) {
            best = Some(j);
        }
    }
    let index = best.ok_or_else(|| Error::invalid("cannot select from an empty risk table"))?;
    let tie = table.mean.iter().enumerate().any(|(j, &v)| j != index && v == table.mean[index]);
    Ok(Selection { index, label: table.labels[index].clone(), tie })
}
