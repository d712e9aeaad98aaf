//! Full-data refits and the deployable discrete super learner.

use serde::{Deserialize, Serialize};

use super::ensemble::combine_hazards;
use super::{
    cross_validate, cv_risk_table, ensemble_ipcw, ensemble_l2, ensemble_loglik, select_best, CensoringCurve,
    ConstraintMode, CvRiskTable, DiscreteLoss, EnsembleWeights, Selection,
};
use crate::data::{assign_folds, discretize, DiscretizationScheme, LongFormatDataset, PeriodGrid, SurvivalDataset};
use crate::error::{Error, Result};
use crate::learners::{
    fit_full, CurveMatrix, DroppedLearner, FittedLearner, LearnerSpec, SurvivalPredictor, Target, TrainingData,
};
use crate::numerics::HAZARD_CLIP;

/// How the refitted learners are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Combination {
    /// Q(t|x) = Σ αⱼ Q̂ⱼ(t|x).
    LinearHazard,
    /// Q(t|x) = expit(Σ αⱼ logit Q̂ⱼ(t|x)).
    LogitHazard,
    /// S(t|x) = Σ αⱼ Ŝⱼ(t|x).
    Survival,
}

/// The outcome of the cross-validation stage.
#[derive(Debug, Clone, PartialEq)]
pub enum FinalChoice {
    Ensemble(EnsembleWeights),
    Selected(Selection),
}

/// Refitted learners with their coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePredictor {
    periods: PeriodGrid,
    combination: Combination,
    learners: Vec<FittedLearner>,
    weights: Vec<f64>,
}

impl DiscretePredictor {
    pub fn periods(&self) -> &PeriodGrid {
        &self.periods
    }
    pub fn combination(&self) -> Combination {
        self.combination
    }
    pub fn learners(&self) -> &[FittedLearner] {
        &self.learners
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn horizon(&self) -> f64 {
        self.periods.horizon()
    }

    fn learner_hazards(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.learners.iter().map(|l| l.predict_discrete_hazards(x)).collect()
    }

    /// S(t|x) at the end of each period.
    pub fn survival_curve(&self, x: &[f64]) -> Result<Vec<f64>> {
        let per_learner = self.learner_hazards(x)?;
        let m = self.periods.n_periods();
        match self.combination {
            Combination::Survival => {
                let mut out = vec![0.0; m];
                for (q, &w) in per_learner.iter().zip(&self.weights) {
                    let mut s = 1.0;
                    for t in 0..m {
                        s -= s * q[t];
                        out[t] += w * s;
                    }
                }
                Ok(out.into_iter().map(|s| s.clamp(0.0, 1.0)).collect())
            }
            _ => {
                let mut s = 1.0;
                Ok(self
                    .hazards_from(&per_learner)
                    .into_iter()
                    .map(|q| {
                        s -= s * q;
                        s
                    })
                    .collect())
            }
        }
    }

    fn hazards_from(&self, per_learner: &[Vec<f64>]) -> Vec<f64> {
        let mode = match self.combination {
            Combination::LogitHazard => ConstraintMode::Unconstrained,
            _ => ConstraintMode::Simplex,
        };
        let single = self.weights.len() == 1 && self.weights[0] == 1.0;
        (0..self.periods.n_periods())
            .map(|t| {
                let q: Vec<f64> = per_learner.iter().map(|h| h[t]).collect();
                match (single, mode) {
                    (true, ConstraintMode::Unconstrained) => q[0].clamp(HAZARD_CLIP, 1.0 - HAZARD_CLIP),
                    (true, ConstraintMode::Simplex) => q[0],
                    _ => combine_hazards(mode, &q, &self.weights),
                }
            })
            .collect()
    }

    /// Per-period hazards. Under survival-scale combination these are the
    /// hazards implied by consecutive survival ratios.
    pub fn hazards(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.combination {
            Combination::Survival => {
                let s = self.survival_curve(x)?;
                let mut prev = 1.0;
                Ok(s.into_iter()
                    .map(|cur| {
                        let q = if prev > 0.0 { (1.0 - cur / prev).clamp(0.0, 1.0) } else { 0.0 };
                        prev = cur;
                        q
                    })
                    .collect())
            }
            _ => Ok(self.hazards_from(&self.learner_hazards(x)?)),
        }
    }

    /// S(t|x) using whole periods completed by `t`; times beyond the
    /// horizon are clamped to it.
    pub fn survival(&self, x: &[f64], t: f64) -> Result<f64> {
        Ok(self.survival_at(&self.survival_curve(x)?, t))
    }

    pub fn survival_at_horizon(&self, x: &[f64]) -> Result<f64> {
        Ok(*self.survival_curve(x)?.last().expect("at least one period"))
    }

    fn survival_at(&self, curve: &[f64], t: f64) -> f64 {
        match self.periods.completed_periods(t.min(self.horizon())) {
            0 => 1.0,
            k => curve[k - 1],
        }
    }

    /// Survival for many individuals at shared times.
    pub fn survival_matrix(&self, rows: &[&[f64]], times: &[f64]) -> Result<CurveMatrix> {
        if times.iter().any(|&t| t > self.horizon()) {
            log::warn!("discrete super learner: times beyond the horizon {} are clamped to it", self.horizon());
        }
        let mut values = Vec::with_capacity(rows.len() * times.len());
        for x in rows {
            let curve = self.survival_curve(x)?;
            values.extend(times.iter().map(|&t| self.survival_at(&curve, t)));
        }
        CurveMatrix::new(times.to_vec(), rows.len(), values)
    }
}

impl SurvivalPredictor for DiscretePredictor {
    fn survival_matrix(&self, rows: &[&[f64]], times: &[f64]) -> Result<CurveMatrix> {
        DiscretePredictor::survival_matrix(self, rows, times)
    }
}

/// Refits the learners the final choice uses on all of `long`.
pub fn finalize(
    long: &LongFormatDataset,
    specs: &[LearnerSpec],
    choice: &FinalChoice,
    master_seed: u64,
) -> Result<DiscretePredictor> {
    let (labels, weights, combination): (Vec<String>, Vec<f64>, Combination) = match choice {
        FinalChoice::Selected(sel) => (vec![sel.label.clone()], vec![1.0], Combination::LinearHazard),
        FinalChoice::Ensemble(w) => {
            let combination = match (w.fallback.is_some(), w.loss) {
                (true, _) | (false, DiscreteLoss::L2) => Combination::LinearHazard,
                (false, DiscreteLoss::Loglik) => Combination::LogitHazard,
                (false, DiscreteLoss::Ipcw) => Combination::Survival,
            };
            let active = w.active();
            (
                active.iter().map(|&j| w.labels[j].clone()).collect(),
                active.iter().map(|&j| w.weights[j]).collect(),
                combination,
            )
        }
    };
    if labels.is_empty() {
        return Err(Error::DegenerateEnsemble);
    }
    let learners = labels
        .iter()
        .map(|label| {
            let spec = specs
                .iter()
                .find(|s| &s.label == label)
                .ok_or_else(|| Error::invalid(format!("no learner labelled '{label}' in the library")))?;
            fit_full(spec, TrainingData::Long(long), Target::Event, master_seed)
                .map_err(|e| e.context(format!("refitting '{label}' on the full data")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiscretePredictor { periods: long.periods().clone(), combination, learners, weights })
}

/// Settings of one discrete super learner run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSlConfig {
    pub horizon: f64,
    pub periods: usize,
    pub scheme: DiscretizationScheme,
    pub folds: usize,
    pub loss: DiscreteLoss,
    /// Build an ensemble rather than select a single learner.
    pub ensemble: bool,
    pub seed: u64,
}

/// Everything the discrete super learner produced.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFit {
    pub risk: CvRiskTable,
    pub selection: Selection,
    pub ensemble: Option<EnsembleWeights>,
    pub dropped: Vec<DroppedLearner>,
    pub fold_sizes: Vec<usize>,
    pub predictor: DiscretePredictor,
}

/// Discretizes, cross-validates, scores, combines and refits.
pub fn fit_discrete_sl(data: &SurvivalDataset, specs: &[LearnerSpec], config: &DiscreteSlConfig) -> Result<DiscreteFit> {
    let long = discretize(data, config.horizon, config.periods, config.scheme)?;
    let folds = assign_folds(data, config.folds, config.seed)?;
    let (cv, dropped) = cross_validate(&long, specs, &folds, config.seed)?;
    let risk = cv_risk_table(&cv, &long, config.loss)?;
    let selection = select_best(&risk)?;
    let ensemble = if config.ensemble {
        Some(match config.loss {
            DiscreteLoss::L2 => ensemble_l2(&cv, &long)?,
            DiscreteLoss::Loglik => ensemble_loglik(&cv, &long)?,
            DiscreteLoss::Ipcw => ensemble_ipcw(&cv, &long, &CensoringCurve::from_individuals(long.individuals()))?,
        })
    } else {
        None
    };
    let choice = match &ensemble {
        Some(w) => FinalChoice::Ensemble(w.clone()),
        None => FinalChoice::Selected(selection.clone()),
    };
    let predictor = finalize(&long, specs, &choice, config.seed)?;
    Ok(DiscreteFit { risk, selection, ensemble, dropped, fold_sizes: folds.sizes(), predictor })
}
