//! Continuous-time super learner with coupled event and censoring
//! ensembles, each scored by an IPCW-weighted integrated Brier loss on a
//! time grid and refitted alternately until the event ensemble settles.

mod iterate;
mod predictor;

#[cfg(test)]
mod tests;

pub use iterate::{
    continue_iteration, fit_censoring_ensemble, fit_event_ensemble, iterate, DualEnsemble, IterationConfig,
    SimplexWeights,
};
pub use predictor::{fit_westling_sl, ContinuousPredictor, WeightedCurves, WestlingConfig, WestlingFit};

use serde::{Deserialize, Serialize};

use crate::data::{FoldAssignment, SurvivalDataset, TimeGrid};
use crate::error::{Error, Result};
use crate::learners::{cross_fit, kaplan_meier, CurveMatrix, DroppedLearner, LearnerSpec, SurvivalTargets, Target};

/// Denominators of the pseudo-outcomes are floored here before division.
pub const DENOMINATOR_FLOOR: f64 = 0.05;

/// Cross-validated survival curves of one learner library on a grid, plus
/// each individual's prediction at their own follow-up time.
#[derive(Debug, Clone, PartialEq)]
pub struct CvCurves {
    pub target: Target,
    pub labels: Vec<String>,
    pub library_index: Vec<usize>,
    /// `curves[j]`: n × |grid| survival values of learner j.
    pub curves: Vec<CurveMatrix>,
    /// `at_own_time[j][i]` = learner j's cross-validated survival at T̃ᵢ.
    pub at_own_time: Vec<Vec<f64>>,
    pub fold_of: Vec<usize>,
    pub n_folds: usize,
}

impl CvCurves {
    pub fn n_learners(&self) -> usize {
        self.labels.len()
    }
    pub fn n_individuals(&self) -> usize {
        self.fold_of.len()
    }
    pub fn fold_members(&self, k: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == k).collect()
    }

    /// Σⱼ wⱼ · curve j, as an n × |grid| matrix.
    pub fn combine(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.curves[0].values().len()];
        for (c, &w) in self.curves.iter().zip(weights) {
            if w != 0.0 {
                out.iter_mut().zip(c.values()).for_each(|(o, v)| *o += w * v);
            }
        }
        out
    }

    /// Σⱼ wⱼ · learner j's survival at each individual's own time.
    pub fn combine_own_time(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_individuals()];
        for (c, &w) in self.at_own_time.iter().zip(weights) {
            out.iter_mut().zip(c).for_each(|(o, v)| *o += w * v);
        }
        out
    }
}

/// Fits `specs` for `target` on each training split and predicts the
/// held-out individuals on `grid` and at their own follow-up times.
pub fn cross_validate_curves(
    data: &SurvivalDataset,
    specs: &[LearnerSpec],
    target: Target,
    folds: &FoldAssignment,
    grid: &TimeGrid,
    master_seed: u64,
) -> Result<(CvCurves, Vec<DroppedLearner>)> {
    if folds.labels().len() != data.len() {
        return Err(Error::invalid("fold assignment does not cover the dataset"));
    }
    if let Some(spec) = specs.iter().find(|s| s.family.is_discrete()) {
        return Err(Error::invalid(format!(
            "learner '{}' is a discrete-time hazard family; continuous-time super learners need survival curves",
            spec.label
        )));
    }
    let (kept, mut dropped) = cross_fit(data, specs, folds, target, master_seed);
    let n = data.len();
    let g = grid.points();
    let mut out = CvCurves {
        target,
        labels: vec![],
        library_index: vec![],
        curves: vec![],
        at_own_time: vec![],
        fold_of: folds.labels().to_vec(),
        n_folds: folds.k(),
    };
    'learners: for ff in kept {
        let mut values = vec![0.0; n * g.len()];
        let mut own = vec![0.0; n];
        for (i, r) in data.records().iter().enumerate() {
            let model = &ff.fits[folds.fold_of(i)];
            let prediction = model
                .predict_survival(&r.covariates, g)
                .and_then(|s| Ok((s, model.predict_survival(&r.covariates, &[r.time])?[0])));
            match prediction {
                Ok((s, at)) => {
                    values[i * g.len()..(i + 1) * g.len()].copy_from_slice(&s);
                    own[i] = at;
                }
                Err(e) => {
                    dropped.push(DroppedLearner {
                        label: ff.label.clone(),
                        reason: format!("fold {}: {e}", folds.fold_of(i) + 1),
                    });
                    continue 'learners;
                }
            }
        }
        out.labels.push(ff.label);
        out.library_index.push(ff.library_index);
        out.curves.push(CurveMatrix::new(g.to_vec(), n, values)?);
        out.at_own_time.push(own);
    }
    if out.labels.is_empty() {
        return Err(Error::invalid(format!("every {target} learner failed during cross-validation")));
    }
    dropped.sort_by_key(|d| specs.iter().position(|s| s.label == d.label));
    Ok((out, dropped))
}

/// Initial Ĝ(T̃ᵢ): the marginal censoring Kaplan–Meier on the full data,
/// evaluated at each individual's own time. Identically 1 without censoring.
pub fn initial_censoring(data: &SurvivalDataset) -> Vec<f64> {
    let km = kaplan_meier(&SurvivalTargets::new(data, Target::Censoring));
    data.records().iter().map(|r| km.at(r.time)).collect()
}

/// Individuals × grid matrix of pseudo-outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoOutcomeMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub values: Vec<f64>,
    /// Denominators raised to the floor.
    pub floored: usize,
}

impl PseudoOutcomeMatrix {
    pub fn get(&self, i: usize, t: usize) -> f64 {
        self.values[i * self.n_cols + t]
    }
}

fn pseudo(
    data: &SurvivalDataset,
    denominators: &[f64],
    grid: &[f64],
    counts: impl Fn(bool, f64, f64) -> bool,
) -> Result<PseudoOutcomeMatrix> {
    if denominators.len() != data.len() {
        return Err(Error::invalid("one denominator per individual is required"));
    }
    let mut values = Vec::with_capacity(data.len() * grid.len());
    let mut floored = 0;
    for (r, &d) in data.records().iter().zip(denominators) {
        let d = if d < DENOMINATOR_FLOOR {
            floored += 1;
            DENOMINATOR_FLOOR
        } else {
            d
        };
        values.extend(grid.iter().map(|&t| if counts(r.event, r.time, t) { 1.0 - 1.0 / d } else { 1.0 }));
    }
    Ok(PseudoOutcomeMatrix { n_rows: data.len(), n_cols: grid.len(), values, floored })
}

/// f_G(i, t) = 1 − Δᵢ I(T̃ᵢ ≤ t) / Ĝ(T̃ᵢ | xᵢ).
pub fn pseudo_fg(data: &SurvivalDataset, censoring_at_own_time: &[f64], grid: &[f64]) -> Result<PseudoOutcomeMatrix> {
    pseudo(data, censoring_at_own_time, grid, |event, time, t| event && time <= t)
}

/// f_S(i, t) = 1 − (1 − Δᵢ) I(T̃ᵢ < t) / Ŝ(T̃ᵢ | xᵢ), with the strict
/// inequality.
pub fn pseudo_fs(data: &SurvivalDataset, survival_at_own_time: &[f64], grid: &[f64]) -> Result<PseudoOutcomeMatrix> {
    pseudo(data, survival_at_own_time, grid, |event, time, t| !event && time < t)
}

/// Σ_{t ∈ V} (v / |D_k|) Σ_{i ∈ D_k} (Ŝ(t | xᵢ) − f(i, t))² for the
/// individuals `members` of one fold.
pub fn event_loss(curves: &[f64], pseudo: &PseudoOutcomeMatrix, spacing: f64, members: &[usize]) -> Result<f64> {
    if curves.len() != pseudo.values.len() {
        return Err(Error::invalid("curves and pseudo-outcomes are not aligned"));
    }
    if members.is_empty() {
        return Err(Error::invalid("loss over an empty fold"));
    }
    let m = pseudo.n_cols;
    let total: f64 = members
        .iter()
        .map(|&i| (0..m).map(|t| (curves[i * m + t] - pseudo.get(i, t)).powi(2)).sum::<f64>())
        .sum();
    Ok(spacing * total / members.len() as f64)
}

/// The censoring analogue of [`event_loss`]: Ĝ curves against f_S.
pub fn censoring_loss(curves: &[f64], pseudo: &PseudoOutcomeMatrix, spacing: f64, members: &[usize]) -> Result<f64> {
    event_loss(curves, pseudo, spacing, members)
}

/// Per-fold and mean losses of a learner library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTable {
    pub labels: Vec<String>,
    pub per_fold: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

impl LossTable {
    pub fn compute(cv: &CvCurves, pseudo: &PseudoOutcomeMatrix, spacing: f64) -> Result<Self> {
        let members: Vec<Vec<usize>> = (0..cv.n_folds).map(|k| cv.fold_members(k)).collect();
        let per_fold: Vec<Vec<f64>> = cv
            .curves
            .iter()
            .map(|c| members.iter().map(|m| event_loss(c.values(), pseudo, spacing, m)).collect())
            .collect::<Result<_>>()?;
        let mean = per_fold.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
        Ok(Self { labels: cv.labels.clone(), per_fold, mean })
    }

    /// Argmin of the mean loss; the earlier learner wins ties.
    pub fn best(&self) -> usize {
        let mut best = 0;
        for (j, &v) in self.mean.iter().enumerate() {
            if v < self.mean[best] {
                best = j;
            }
        }
        best
    }
}
