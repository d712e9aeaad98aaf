//! Non-ensemble state learner: every pair of event and censoring
//! cumulative-hazard learners is scored by the integrated Brier score of
//! the three observed states (at risk, event observed, censored), and the
//! best pair is kept.

mod predictor;

#[cfg(test)]
mod tests;

pub use predictor::{fit_state_learner, StateLearnerConfig, StateLearnerFit, StatePredictor};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FoldAssignment, SurvivalDataset, SurvivalRecord, TimeGrid};
use crate::error::{Error, Result};
use crate::learners::{cross_fit, CurveMatrix, DroppedLearner, LearnerSpec, Target};

/// Increments more negative than this are a broken learner, not rounding.
const INCREMENT_TOLERANCE: f64 = 1e-10;

/// Where an individual is observed to be at a given time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObservedState {
    Censored,
    AtRisk,
    Event,
}

impl ObservedState {
    /// −1, 0 or 1.
    pub fn code(self) -> i8 {
        match self {
            ObservedState::Censored => -1,
            ObservedState::AtRisk => 0,
            ObservedState::Event => 1,
        }
    }
}

/// The observed state process of one individual: at risk before their
/// follow-up time, then absorbed in the event or censored state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedStatePath {
    pub time: f64,
    pub event: bool,
}

impl ObservedStatePath {
    pub fn new(time: f64, event: bool) -> Self {
        Self { time, event }
    }

    pub fn of(record: &SurvivalRecord) -> Self {
        Self::new(record.time, record.event)
    }

    /// Right-continuous: the jump happens at the follow-up time itself.
    pub fn at(&self, t: f64) -> ObservedState {
        match (t < self.time, self.event) {
            (true, _) => ObservedState::AtRisk,
            (false, true) => ObservedState::Event,
            (false, false) => ObservedState::Censored,
        }
    }
}

/// State occupation probabilities of one individual on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateOccupancy {
    pub at_risk: Vec<f64>,
    pub event: Vec<f64>,
    pub censored: Vec<f64>,
}

impl StateOccupancy {
    pub fn len(&self) -> usize {
        self.at_risk.len()
    }
    pub fn is_empty(&self) -> bool {
        self.at_risk.is_empty()
    }

    /// Probability assigned to `state` at grid index `t`.
    pub fn probability(&self, t: usize, state: ObservedState) -> f64 {
        match state {
            ObservedState::Censored => self.censored[t],
            ObservedState::AtRisk => self.at_risk[t],
            ObservedState::Event => self.event[t],
        }
    }

    /// max over the grid of |Σₛ F(t, s) − 1|.
    pub fn state_sum_gap(&self) -> f64 {
        (0..self.len()).map(|t| (self.at_risk[t] + self.event[t] + self.censored[t] - 1.0).abs()).fold(0.0, f64::max)
    }
}

fn increments<'a>(label: &'a str, what: &'a str, cumhaz: &'a [f64]) -> impl Iterator<Item = Result<f64>> + 'a {
    cumhaz.iter().enumerate().map(move |(l, &h)| {
        let prev = if l == 0 { 0.0 } else { cumhaz[l - 1] };
        let d = h - prev;
        if !d.is_finite() || d < -INCREMENT_TOLERANCE {
            Err(Error::invalid(format!(
                "learner '{label}' produced a {} {what} cumulative hazard increment ({d:.3e}) at grid point {}",
                if d.is_finite() { "negative" } else { "non-finite" },
                l + 1
            )))
        } else {
            Ok(d.max(0.0))
        }
    })
}

/// F(t, 0) = exp(−Λ(t) − Γ(t)); F(t, 1) and F(t, −1) accumulate
/// F(l − 1, 0) times the event and censoring hazard increments, starting
/// from F(0, 0) = 1 and Λ(0) = Γ(0) = 0.
///
/// `cumhaz_event` and `cumhaz_censoring` are on the same grid; the labels
/// only serve error messages.
pub fn state_occupancy(
    event_label: &str,
    cumhaz_event: &[f64],
    censoring_label: &str,
    cumhaz_censoring: &[f64],
) -> Result<StateOccupancy> {
    if cumhaz_event.len() != cumhaz_censoring.len() {
        return Err(Error::invalid("event and censoring cumulative hazards are on different grids"));
    }
    let m = cumhaz_event.len();
    let mut out = StateOccupancy { at_risk: Vec::with_capacity(m), event: Vec::with_capacity(m), censored: Vec::with_capacity(m) };
    let (mut prev, mut f1, mut fc) = (1.0, 0.0, 0.0);
    let steps = increments(event_label, "event", cumhaz_event).zip(increments(censoring_label, "censoring", cumhaz_censoring));
    for ((dl, dg), (&l, &g)) in steps.zip(cumhaz_event.iter().zip(cumhaz_censoring)) {
        let (dl, dg) = (dl?, dg?);
        f1 += prev * dl;
        fc += prev * dg;
        prev = (-l - g).exp();
        out.at_risk.push(prev);
        out.event.push(f1);
        out.censored.push(fc);
    }
    Ok(out)
}

/// Σₛ (F(t, s) − I(η(t) = s))² for one individual at grid index `t`.
pub fn brier_individual(occupancy: &StateOccupancy, state: ObservedState, t: usize) -> f64 {
    [ObservedState::Censored, ObservedState::AtRisk, ObservedState::Event]
        .into_iter()
        .map(|s| {
            let indicator = if s == state { 1.0 } else { 0.0 };
            (occupancy.probability(t, s) - indicator).powi(2)
        })
        .sum()
}

/// Three-state Brier score at grid time `times[t]`, averaged over the
/// given individuals. Every state is observed, so no censoring weights.
pub fn brier_states(occupancies: &[StateOccupancy], paths: &[ObservedStatePath], times: &[f64], t: usize) -> Result<f64> {
    if occupancies.len() != paths.len() || occupancies.is_empty() {
        return Err(Error::invalid("one occupancy per observed path is required, and at least one individual"));
    }
    let total: f64 = occupancies.iter().zip(paths).map(|(o, p)| brier_individual(o, p.at(times[t]), t)).sum();
    Ok(total / occupancies.len() as f64)
}

/// Σ_{t ∈ V} v · B(t).
pub fn integrated_brier(scores: &[f64], spacing: f64) -> f64 {
    scores.iter().map(|b| spacing * b).sum()
}

/// Cross-validated cumulative hazards of one learner library on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CvCumhaz {
    pub target: Target,
    pub labels: Vec<String>,
    pub library_index: Vec<usize>,
    /// `curves[j]`: n × |grid| cumulative hazards of learner j.
    pub curves: Vec<CurveMatrix>,
    pub fold_of: Vec<usize>,
    pub n_folds: usize,
}

impl CvCumhaz {
    pub fn n_learners(&self) -> usize {
        self.labels.len()
    }
    pub fn n_individuals(&self) -> usize {
        self.fold_of.len()
    }
}

/// Fits `specs` for `target` on every training split and predicts each
/// held-out individual's cumulative hazard on `grid`.
pub fn cross_validate_cumhaz(
    data: &SurvivalDataset,
    specs: &[LearnerSpec],
    target: Target,
    folds: &FoldAssignment,
    grid: &TimeGrid,
    master_seed: u64,
) -> Result<(CvCumhaz, Vec<DroppedLearner>)> {
    if folds.labels().len() != data.len() {
        return Err(Error::invalid("fold assignment does not cover the dataset"));
    }
    if let Some(spec) = specs.iter().find(|s| s.family.is_discrete()) {
        return Err(Error::invalid(format!(
            "learner '{}' is a discrete-time hazard family; the state learner needs cumulative hazards",
            spec.label
        )));
    }
    let (kept, mut dropped) = cross_fit(data, specs, folds, target, master_seed);
    let g = grid.points();
    let mut out = CvCumhaz {
        target,
        labels: vec![],
        library_index: vec![],
        curves: vec![],
        fold_of: folds.labels().to_vec(),
        n_folds: folds.k(),
    };
    'learners: for ff in kept {
        let mut values = Vec::with_capacity(data.len() * g.len());
        for (i, r) in data.records().iter().enumerate() {
            match ff.fits[folds.fold_of(i)].predict_cumhaz(&r.covariates, g) {
                Ok(h) => values.extend(h),
                Err(e) => {
                    dropped.push(DroppedLearner { label: ff.label.clone(), reason: format!("fold {}: {e}", folds.fold_of(i) + 1) });
                    continue 'learners;
                }
            }
        }
        out.labels.push(ff.label);
        out.library_index.push(ff.library_index);
        out.curves.push(CurveMatrix::new(g.to_vec(), data.len(), values)?);
    }
    if out.labels.is_empty() {
        return Err(Error::invalid(format!("every {target} learner failed during cross-validation")));
    }
    dropped.sort_by_key(|d| specs.iter().position(|s| s.label == d.label));
    Ok((out, dropped))
}

/// Integrated three-state Brier scores of every (event, censoring) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRiskTable {
    pub event_labels: Vec<String>,
    pub censoring_labels: Vec<String>,
    /// `per_fold[j][j'][k]`.
    pub per_fold: Vec<Vec<Vec<f64>>>,
    /// `mean[j][j']`, the average over folds.
    pub mean: Vec<Vec<f64>>,
}

/// Scores one pair on every fold.
fn pair_losses(
    event: &CvCumhaz,
    censoring: &CvCumhaz,
    j: usize,
    jc: usize,
    paths: &[ObservedStatePath],
    grid: &TimeGrid,
) -> Result<Vec<f64>> {
    let times = grid.points();
    let mut sums = vec![0.0; event.n_folds];
    let mut counts = vec![0usize; event.n_folds];
    for (i, path) in paths.iter().enumerate() {
        let occ = state_occupancy(&event.labels[j], event.curves[j].row(i), &censoring.labels[jc], censoring.curves[jc].row(i))?;
        let b: f64 = (0..times.len()).map(|t| brier_individual(&occ, path.at(times[t]), t)).sum();
        let k = event.fold_of[i];
        sums[k] += b;
        counts[k] += 1;
    }
    sums.iter()
        .zip(&counts)
        .enumerate()
        .map(|(k, (&s, &c))| {
            if c == 0 {
                Err(Error::invalid(format!("fold {} is empty", k + 1)))
            } else {
                Ok(grid.spacing() * s / c as f64)
            }
        })
        .collect()
}

impl PairRiskTable {
    /// Scores all p × q pairs in parallel; the layout is deterministic.
    pub fn compute(event: &CvCumhaz, censoring: &CvCumhaz, data: &SurvivalDataset, grid: &TimeGrid) -> Result<Self> {
        for cv in [event, censoring] {
            if cv.n_individuals() != data.len() || cv.curves.iter().any(|c| c.times() != grid.points()) {
                return Err(Error::invalid(format!("{} cumulative hazards do not match the data and grid", cv.target)));
            }
        }
        if event.fold_of != censoring.fold_of {
            return Err(Error::invalid("event and censoring libraries were cross-validated on different folds"));
        }
        let paths: Vec<ObservedStatePath> = data.records().iter().map(ObservedStatePath::of).collect();
        let (p, q) = (event.n_learners(), censoring.n_learners());
        let cells: Vec<Result<Vec<f64>>> = (0..p * q)
            .into_par_iter()
            .map(|c| pair_losses(event, censoring, c / q, c % q, &paths, grid))
            .collect();
        let mut per_fold = vec![Vec::with_capacity(q); p];
        for (c, cell) in cells.into_iter().enumerate() {
            per_fold[c / q].push(cell?);
        }
        let mean = per_fold
            .iter()
            .map(|row| row.iter().map(|f| f.iter().sum::<f64>() / f.len() as f64).collect())
            .collect();
        Ok(Self { event_labels: event.labels.clone(), censoring_labels: censoring.labels.clone(), per_fold, mean })
    }
}

/// The chosen (event, censoring) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSelection {
    pub event: usize,
    pub censoring: usize,
    pub event_label: String,
    pub censoring_label: String,
    pub loss: f64,
    /// Another pair had exactly the same mean loss; the first in
    /// (event, censoring) library order was taken.
    pub tie: bool,
}

/// Argmin of the mean loss over all pairs.
pub fn select_pair(table: &PairRiskTable) -> Result<PairSelection> {
    let mut best: Option<(usize, usize, f64)> = None;
    let mut tie = false;
    for (j, row) in table.mean.iter().enumerate() {
        for (jc, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid(format!(
                    "non-finite loss for pair ('{}', '{}')",
                    table.event_labels[j], table.censoring_labels[jc]
                )));
            }
            match best {
                Some((_, _, b)) if v > b => {}
                Some((_, _, b)) if v == b => tie = true,
                _ => {
                    best = Some((j, jc, v));
                    tie = false;
                }
            }
        }
    }
    let (event, censoring, loss) = best.ok_or_else(|| Error::invalid("no learner pairs were evaluated"))?;
    if tie {
        log::warn!("several learner pairs share the lowest loss; keeping the first in library order");
    }
    Ok(PairSelection {
        event,
        censoring,
        event_label: table.event_labels[event].clone(),
        censoring_label: table.censoring_labels[censoring].clone(),
        loss,
        tie,
    })
}
