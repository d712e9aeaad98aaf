//! Discrete-time super learner: cross-validated period hazards, the three
//! loss functions, non-ensemble selection and the three meta-regressions.

mod ensemble;
mod loss;
mod predictor;


pub use ensemble::{
    ensemble_ipcw, ensemble_l2, ensemble_loglik, meta_objective_ipcw, meta_objective_l2, meta_objective_loglik,
    ConstraintMode, EnsembleWeights,
};
pub use loss::{cv_risk_table, loss_ipcw, loss_l2, loss_loglik, select_best, CvRiskTable, Selection};
pub use predictor::{
    finalize, fit_discrete_sl, Combination, DiscreteFit, DiscretePredictor, DiscreteSlConfig, FinalChoice,
};

use serde::{Deserialize, Serialize};

use crate::data::{FoldAssignment, LongFormatDataset, LongIndividual};
use crate::error::{Error, Result};
use crate::learners::{
    cross_fit_with, fit, kaplan_meier, seed_label, DroppedLearner, LearnerSpec, StepCurve, SurvivalTargets, Target,
    TrainingData,
};
use crate::seed;

/// Loss used to score learners and to build the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscreteLoss {
    #[default]
    Ipcw,
    L2,
    Loglik,
}

impl std::fmt::Display for DiscreteLoss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DiscreteLoss::Ipcw => "ipcw",
            DiscreteLoss::L2 => "l2",
            DiscreteLoss::Loglik => "loglik",
        })
    }
}

/// Cross-validated hazards ψᵢⱼ(t): for each surviving learner an n × m
/// matrix, where row i comes from the model that did not see individual i.
///
/// Hazards are kept for every period, not just the at-risk ones, so that
/// Ŝⱼ(τ | xᵢ) is the full product over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CvHazards {
    labels: Vec<String>,
    library_index: Vec<usize>,
    fold_of: Vec<usize>,
    n_folds: usize,
    n_periods: usize,
    hazards: Vec<Vec<f64>>,
}

impl CvHazards {
    /// Assembles hazards computed elsewhere; `hazards[j]` is row-major n × m.
    pub fn from_parts(
        labels: Vec<String>,
        fold_of: Vec<usize>,
        n_periods: usize,
        hazards: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = fold_of.len();
        if labels.len() != hazards.len() {
            return Err(Error::invalid("one hazard matrix per learner label is required"));
        }
        for (label, h) in labels.iter().zip(&hazards) {
            if h.len() != n * n_periods {
                return Err(Error::invalid(format!("hazard matrix of '{label}' has the wrong shape")));
            }
            if let Some(q) = h.iter().find(|q| !(0.0..=1.0).contains(*q)) {
                return Err(Error::invalid(format!("learner '{label}' produced hazard {q} outside [0, 1]")));
            }
        }
        let n_folds = fold_of.iter().max().map_or(0, |&f| f + 1);
        let library_index = (0..labels.len()).collect();
        Ok(Self { labels, library_index, fold_of, n_folds, n_periods, hazards })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
    /// Position of each surviving learner in the original library.
    pub fn library_index(&self) -> &[usize] {
        &self.library_index
    }
    pub fn n_learners(&self) -> usize {
        self.labels.len()
    }
    pub fn n_individuals(&self) -> usize {
        self.fold_of.len()
    }
    pub fn n_periods(&self) -> usize {
        self.n_periods
    }
    pub fn n_folds(&self) -> usize {
        self.n_folds
    }
    /// Fold of the model that produced individual `i`'s predictions.
    pub fn fold_of(&self, i: usize) -> usize {
        self.fold_of[i]
    }
    /// Individuals whose predictions come from fold `k`'s model.
    pub fn fold_members(&self, k: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == k).collect()
    }

    pub fn hazard(&self, j: usize, i: usize, period: usize) -> f64 {
        self.hazards[j][i * self.n_periods + period]
    }
    /// All m hazards of individual `i` under learner `j`.
    pub fn hazards_of(&self, j: usize, i: usize) -> &[f64] {
        &self.hazards[j][i * self.n_periods..(i + 1) * self.n_periods]
    }

    /// φᵢⱼ = Ŝⱼ(τ | xᵢ), the product over every period.
    pub fn survival_at_horizon(&self, j: usize, i: usize) -> f64 {
        self.hazards_of(j, i).iter().fold(1.0, |s, &q| s - s * q)
    }

    /// Keeps only the listed learners (indices into the current order).
    pub fn retain(&self, keep: &[usize]) -> CvHazards {
        CvHazards {
            labels: keep.iter().map(|&j| self.labels[j].clone()).collect(),
            library_index: keep.iter().map(|&j| self.library_index[j]).collect(),
            fold_of: self.fold_of.clone(),
            n_folds: self.n_folds,
            n_periods: self.n_periods,
            hazards: keep.iter().map(|&j| self.hazards[j].clone()).collect(),
        }
    }

    fn check_matches(&self, long: &LongFormatDataset) -> Result<()> {
        if long.individuals().len() != self.n_individuals() || long.periods().n_periods() != self.n_periods {
            return Err(Error::invalid("cross-validated hazards do not match the long-format data"));
        }
        Ok(())
    }
}

/// Fits every discrete learner on each fold's training individuals and
/// predicts every period for the held-out individuals.
///
/// Learners that fail in any fold are dropped and reported; an error is
/// returned only when none survive.
pub fn cross_validate(
    long: &LongFormatDataset,
    specs: &[LearnerSpec],
    folds: &FoldAssignment,
    master_seed: u64,
) -> Result<(CvHazards, Vec<DroppedLearner>)> {
    let n = long.individuals().len();
    if folds.labels().len() != n {
        return Err(Error::invalid("fold assignment does not cover the long-format data"));
    }
    if let Some(spec) = specs.iter().find(|s| !s.family.is_discrete()) {
        return Err(Error::invalid(format!(
            "learner '{}' is not a discrete-time hazard family and cannot enter the discrete super learner",
            spec.label
        )));
    }
    let training: Vec<LongFormatDataset> = (0..folds.k()).map(|f| long.restrict(&folds.training(f))).collect();
    for (f, t) in training.iter().enumerate() {
        if !t.rows().iter().any(|r| r.period_event) {
            return Err(Error::invalid(format!("training split of fold {} has no event rows", f + 1)));
        }
    }
    let (kept, mut dropped) = cross_fit_with(specs, folds.k(), |spec, fold| {
        let s = seed::substream(master_seed, &seed_label(Target::Event, &spec.label, &format!("fold{}", fold + 1)));
        fit(spec, TrainingData::Long(&training[fold]), Target::Event, s)
    });

    let m = long.periods().n_periods();
    let mut labels = Vec::new();
    let mut library_index = Vec::new();
    let mut hazards = Vec::new();
    'learners: for ff in kept {
        let mut h = vec![0.0; n * m];
        for (i, ind) in long.individuals().iter().enumerate() {
            let fold = folds.fold_of(i);
            let model = &ff.fits[fold];
            // The model for fold k was trained on exactly the other folds.
            debug_assert_eq!(model.n_train, training[fold].individuals().len());
            match model.predict_discrete_hazards(&ind.covariates) {
                Ok(q) if q.len() == m && q.iter().all(|v| (0.0..=1.0).contains(v)) => {
                    h[i * m..(i + 1) * m].copy_from_slice(&q);
                }
                Ok(_) => {
                    dropped.push(DroppedLearner {
                        label: ff.label.clone(),
                        reason: format!("fold {}: invalid hazard predictions", fold + 1),
                    });
                    continue 'learners;
                }
                Err(e) => {
                    dropped.push(DroppedLearner { label: ff.label.clone(), reason: format!("fold {}: {e}", fold + 1) });
                    continue 'learners;
                }
            }
        }
        labels.push(ff.label);
        library_index.push(ff.library_index);
        hazards.push(h);
    }
    if labels.is_empty() {
        return Err(Error::invalid("every learner failed during cross-validation"));
    }
    // Keep the report in library order.
    dropped.sort_by_key(|d| specs.iter().position(|s| s.label == d.label));
    let cv = CvHazards {
        labels,
        library_index,
        fold_of: folds.labels().to_vec(),
        n_folds: folds.k(),
        n_periods: m,
        hazards,
    };
    Ok((cv, dropped))
}

/// Marginal censoring survival Ĝ(t) from the Kaplan–Meier estimator with
/// censoring as the occurrence (events leave the risk set first at ties).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoringCurve {
    curve: StepCurve,
}

/// Largest inverse-probability weight; larger weights are truncated.
pub const IPCW_WEIGHT_CAP: f64 = 20.0;

impl CensoringCurve {
    pub fn new(times: &[f64], events: &[bool]) -> Self {
        let targets = SurvivalTargets {
            times: times.to_vec(),
            status: events.iter().map(|e| !e).collect(),
            others_leave_first: true,
        };
        Self { curve: kaplan_meier(&targets) }
    }

    pub fn from_individuals<'a>(individuals: impl IntoIterator<Item = &'a LongIndividual>) -> Self {
        let (times, events): (Vec<f64>, Vec<bool>) = individuals.into_iter().map(|i| (i.time, i.event)).unzip();
        Self::new(&times, &events)
    }

    /// Ĝ(t).
    pub fn at(&self, t: f64) -> f64 {
        self.curve.at(t)
    }
    /// Ĝ(t⁻).
    pub fn left_limit(&self, t: f64) -> f64 {
        self.curve.left_limit(t)
    }
    pub fn curve(&self) -> &StepCurve {
        &self.curve
    }

    /// Inverse-probability weight and outcome I(T̃ > τ) for an individual
    /// whose status at τ is known; `None` if censored at or before τ.
    /// Events use Ĝ(T̃⁻), survivors Ĝ(τ). The flag marks a capped weight.
    pub fn weight(&self, time: f64, event: bool, tau: f64) -> Option<(f64, f64, bool)> {
        let (g, outcome) = if time > tau {
            (self.at(tau), 1.0)
        } else if event {
            (self.left_limit(time), 0.0)
        } else {
            return None;
        };
        let (w, capped) = cap_weight(g);
        Some((w, outcome, capped))
    }
}

pub(crate) fn cap_weight(g: f64) -> (f64, bool) {
    if g <= 0.0 || 1.0 / g > IPCW_WEIGHT_CAP {
        (IPCW_WEIGHT_CAP, true)
    } else {
        (1.0 / g, false)
    }
}
