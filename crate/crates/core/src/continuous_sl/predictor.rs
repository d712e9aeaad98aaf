//! Full-data refits and the deployable continuous-time super learner.

use serde::{Deserialize, Serialize};

use super::{
    cross_validate_curves, iterate, pseudo_fg, pseudo_fs, DualEnsemble, IterationConfig, LossTable,
};
use crate::data::{assign_folds, make_grid, SurvivalDataset};
use crate::error::{Error, Result};
use crate::learners::{
    fit_full, CurveMatrix, DroppedLearner, FittedLearner, LearnerSpec, SurvivalPredictor, Target, TrainingData,
};

/// A convex combination of refitted survival curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedCurves {
    pub learners: Vec<FittedLearner>,
    pub weights: Vec<f64>,
}

impl WeightedCurves {
    fn refit(
        data: &SurvivalDataset,
        specs: &[LearnerSpec],
        labels: &[String],
        weights: &[f64],
        target: Target,
        master_seed: u64,
    ) -> Result<Self> {
        let mut learners = Vec::new();
        let mut kept = Vec::new();
        for (label, &w) in labels.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            let spec = specs
                .iter()
                .find(|s| &s.label == label)
                .ok_or_else(|| Error::invalid(format!("no learner labelled '{label}' in the library")))?;
            let fitted = fit_full(spec, TrainingData::Survival(data), target, master_seed)
                .map_err(|e| e.context(format!("refitting '{label}' on the full data")))?;
            learners.push(fitted);
            kept.push(w);
        }
        if learners.is_empty() {
            return Err(Error::DegenerateEnsemble);
        }
        Ok(Self { learners, weights: kept })
    }

    /// Σⱼ wⱼ Ŝⱼ(t | x), clamped to [0, 1] and passed through a running
    /// minimum over time (only numerical noise can break monotonicity).
    pub fn survival_matrix(&self, rows: &[&[f64]], times: &[f64]) -> Result<CurveMatrix> {
        let mut values = vec![0.0; rows.len() * times.len()];
        for (l, &w) in self.learners.iter().zip(&self.weights) {
            let m = l.survival_matrix(rows, times)?;
            values.iter_mut().zip(m.values()).for_each(|(v, s)| *v += w * s);
        }
        let mut sorted: Vec<usize> = (0..times.len()).collect();
        sorted.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        for row in values.chunks_mut(times.len().max(1)) {
            let mut floor = 1.0f64;
            for &t in &sorted {
                floor = floor.min(row[t].clamp(0.0, 1.0));
                row[t] = floor;
            }
        }
        CurveMatrix::new(times.to_vec(), rows.len(), values)
    }
}

/// Event and censoring ensembles refitted on the full data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousPredictor {
    pub event: WeightedCurves,
    pub censoring: WeightedCurves,
}

impl ContinuousPredictor {
    /// Ĝ(t | x) from the censoring ensemble.
    pub fn censoring_survival_matrix(&self, rows: &[&[f64]], times: &[f64]) -> Result<CurveMatrix> {
        self.censoring.survival_matrix(rows, times)
    }
}

impl SurvivalPredictor for ContinuousPredictor {
    fn survival_matrix(&self, rows: &[&[f64]], times: &[f64]) -> Result<CurveMatrix> {
        self.event.survival_matrix(rows, times)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WestlingConfig {
    pub horizon: f64,
    pub grid_points: usize,
    pub folds: usize,
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Combine learners; otherwise deploy the single best of each library.
    pub ensemble: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WestlingFit {
    pub event_losses: LossTable,
    pub censoring_losses: LossTable,
    pub dual: DualEnsemble,
    /// Best single event and censoring learners by mean loss.
    pub best_event: String,
    pub best_censoring: String,
    pub event_dropped: Vec<DroppedLearner>,
    pub censoring_dropped: Vec<DroppedLearner>,
    pub fold_sizes: Vec<usize>,
    pub predictor: ContinuousPredictor,
}

fn one_hot(p: usize, j: usize) -> Vec<f64> {
    (0..p).map(|i| if i == j { 1.0 } else { 0.0 }).collect()
}

/// Cross-validates both libraries, iterates the ensembles, scores the
/// learners against the final pseudo-outcomes and refits.
pub fn fit_westling_sl(
    data: &SurvivalDataset,
    event_specs: &[LearnerSpec],
    censoring_specs: &[LearnerSpec],
    config: &WestlingConfig,
) -> Result<WestlingFit> {
    let grid = make_grid(config.horizon, config.grid_points)?;
    let folds = assign_folds(data, config.folds, config.seed)?;
    let (event, event_dropped) =
        cross_validate_curves(data, event_specs, Target::Event, &folds, &grid, config.seed)?;
    let (censoring, censoring_dropped) =
        cross_validate_curves(data, censoring_specs, Target::Censoring, &folds, &grid, config.seed)?;
    let iteration = IterationConfig { epsilon: config.epsilon, max_iterations: config.max_iterations, grid };
    let dual = iterate(&iteration, &event, &censoring, data)?;

    let points = iteration.grid.points();
    let v = iteration.grid.spacing();
    let f_g = pseudo_fg(data, &censoring.combine_own_time(&dual.beta.weights), points)?;
    let f_s = pseudo_fs(data, &event.combine_own_time(&dual.alpha.weights), points)?;
    let event_losses = LossTable::compute(&event, &f_g, v)?;
    let censoring_losses = LossTable::compute(&censoring, &f_s, v)?;
    let (be, bc) = (event_losses.best(), censoring_losses.best());

    let (alpha, beta) = if config.ensemble {
        (dual.alpha.weights.clone(), dual.beta.weights.clone())
    } else {
        (one_hot(event.n_learners(), be), one_hot(censoring.n_learners(), bc))
    };
    let predictor = ContinuousPredictor {
        event: WeightedCurves::refit(data, event_specs, &event.labels, &alpha, Target::Event, config.seed)?,
        censoring: WeightedCurves::refit(
            data,
            censoring_specs,
            &censoring.labels,
            &beta,
            Target::Censoring,
            config.seed,
        )?,
    };
    Ok(WestlingFit {
        best_event: event.labels[be].clone(),
        best_censoring: censoring.labels[bc].clone(),
        event_losses,
        censoring_losses,
        dual,
        event_dropped,
        censoring_dropped,
        fold_sizes: folds.sizes(),
        predictor,
    })
}
