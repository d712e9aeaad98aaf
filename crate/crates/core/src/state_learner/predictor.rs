//! Full-data refit of the selected pair.

use serde::{Deserialize, Serialize};

use super::{cross_validate_cumhaz, select_pair, PairRiskTable, PairSelection};
use crate::data::{assign_folds, make_grid, SurvivalDataset};
use crate::error::{Error, Result};
use crate::learners::{fit_full, CurveMatrix, DroppedLearner, FittedLearner, LearnerSpec, SurvivalPredictor, Target, TrainingData};

/// The selected event learner deployed as Ŝ(t | x) = exp(−Λ̂(t | x)); the
/// selected censoring learner is kept for weighting downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePredictor {
    pub event: FittedLearner,
    pub censoring: FittedLearner,
}

fn exp_neg(m: CurveMatrix) -> Result<CurveMatrix> {
    let times = m.times().to_vec();
    let values = m.values().iter().map(|h| (-h).exp()).collect();
    CurveMatrix::new(times, m.n_rows(), values)
}

impl StatePredictor {
    /// Ĝ(t | x) = exp(−Γ̂(t | x)).
    pub fn censoring_survival_matrix(&self, rows: &[&[f64]], times: &[f64]) -> Result<CurveMatrix> {
        exp_neg(self.censoring.cumhaz_matrix(rows, times)?)
    }
}

impl SurvivalPredictor for StatePredictor {
    fn survival_matrix(&self, rows: &[&[f64]], times: &[f64]) -> Result<CurveMatrix> {
        exp_neg(self.event.cumhaz_matrix(rows, times)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateLearnerConfig {
    pub horizon: f64,
    pub grid_points: usize,
    pub folds: usize,
    pub seed: u64,
}

impl StateLearnerConfig {
    /// 100 grid points and 5 folds.
    pub fn new(horizon: f64, seed: u64) -> Self {
        Self { horizon, grid_points: 100, folds: 5, seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateLearnerFit {
    pub risk: PairRiskTable,
    pub selection: PairSelection,
    pub event_dropped: Vec<DroppedLearner>,
    pub censoring_dropped: Vec<DroppedLearner>,
    pub fold_sizes: Vec<usize>,
    pub predictor: StatePredictor,
}

fn refit(data: &SurvivalDataset, specs: &[LearnerSpec], label: &str, target: Target, seed: u64) -> Result<FittedLearner> {
    let spec = specs
        .iter()
        .find(|s| s.label == label)
        .ok_or_else(|| Error::invalid(format!("no learner labelled '{label}' in the library")))?;
    fit_full(spec, TrainingData::Survival(data), target, seed)
        .map_err(|e| e.context(format!("refitting '{label}' on the full data")))
}

/// Cross-validates both libraries, scores every pair and refits the best.
pub fn fit_state_learner(
    data: &SurvivalDataset,
    event_specs: &[LearnerSpec],
    censoring_specs: &[LearnerSpec],
    config: &StateLearnerConfig,
) -> Result<StateLearnerFit> {
    let grid = make_grid(config.horizon, config.grid_points)?;
    let folds = assign_folds(data, config.folds, config.seed)?;
    let (event, event_dropped) = cross_validate_cumhaz(data, event_specs, Target::Event, &folds, &grid, config.seed)?;
    let (censoring, censoring_dropped) =
        cross_validate_cumhaz(data, censoring_specs, Target::Censoring, &folds, &grid, config.seed)?;
    let risk = PairRiskTable::compute(&event, &censoring, data, &grid)?;
    let selection = select_pair(&risk)?;
    let predictor = StatePredictor {
        event: refit(data, event_specs, &selection.event_label, Target::Event, config.seed)?,
        censoring: refit(data, censoring_specs, &selection.censoring_label, Target::Censoring, config.seed)?,
    };
    Ok(StateLearnerFit { risk, selection, event_dropped, censoring_dropped, fold_sizes: folds.sizes(), predictor })
}
