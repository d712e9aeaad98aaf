//! Candidate learners behind one fitted-model contract.
//!
//! Continuous-time families (Kaplan–Meier, Nelson–Aalen, Cox, Cox lasso,
//! Weibull, exponential, survival forest) train on individual records and
//! emit survival or cumulative-hazard curves at arbitrary times. Discrete-time
//! families (hazard GLM, life-table mean) train on person-period rows and
//! emit per-period hazards.

mod crossfit;
mod discrete;
mod forest;
mod nonparametric;
mod parametric;

pub use crossfit::{cross_fit, cross_fit_with, fit_full, DroppedLearner, FoldFits};
pub(crate) use crossfit::seed_label;
pub use discrete::{fit_discrete_glm, fit_discrete_mean, DiscreteGlmModel, DiscreteMeanModel, TimeEncoding};
pub use forest::{fit_forest, ForestModel, ForestParams};
pub use nonparametric::{kaplan_meier, nelson_aalen, StepCurve, SurvivalTargets};
pub use parametric::{fit_weibull, WeibullModel};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{LongFormatDataset, PeriodGrid, SurvivalDataset};
use crate::error::{Error, Result};
use crate::numerics::{coord_descent_cox_lasso, newton_cox, CoxModel, DesignMatrix, LambdaChoice};

/// Floor applied to survival before taking −log for a cumulative hazard.
pub const SURVIVAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    KaplanMeier,
    NelsonAalen,
    Cox,
    CoxLasso,
    Weibull,
    Exponential,
    DiscreteHazardGlm,
    DiscreteMean,
    SurvivalForest,
}

impl Family {
    pub fn is_discrete(self) -> bool {
        matches!(self, Family::DiscreteHazardGlm | Family::DiscreteMean)
    }

    fn uses_covariates(self) -> bool {
        !matches!(self, Family::KaplanMeier | Family::NelsonAalen | Family::DiscreteMean)
    }
}

/// Which distribution a learner estimates: the event time T or the
/// censoring time C (indicators flipped).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Event,
    Censoring,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Event => "event",
            Target::Censoring => "censoring",
        })
    }
}

/// Family-specific settings; fields not used by a family must be left unset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    /// Covariate subset by name; all covariates when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Vec<String>>,
    /// Fixed lasso penalty; cross-validated when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_folds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trees: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mtry: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_node_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_candidates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_encoding: Option<TimeEncoding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    pub label: String,
    pub family: Family,
    #[serde(default)]
    pub params: Hyperparameters,
}

impl LearnerSpec {
    pub fn new(label: impl Into<String>, family: Family) -> Self {
        Self { label: label.into(), family, params: Hyperparameters::default() }
    }

    pub fn with_params(mut self, params: Hyperparameters) -> Self {
        self.params = params;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(format!("learner '{}': {what}", self.label)));
        if self.label.trim().is_empty() {
            return Err(Error::invalid("learner label must not be empty"));
        }
        let p = &self.params;
        let lasso = self.family == Family::CoxLasso;
        let forest = self.family == Family::SurvivalForest;
        if p.covariates.is_some() && !self.family.uses_covariates() {
            return bad("this family ignores covariates; remove `covariates`");
        }
        if (p.lambda.is_some() || p.lambda_folds.is_some()) && !lasso {
            return bad("`lambda` settings apply to cox-lasso only");
        }
        let forest_keys = [p.trees.is_some(), p.mtry.is_some(), p.min_node_size.is_some(), p.split_candidates.is_some(), p.bootstrap.is_some()];
        if forest_keys.iter().any(|&k| k) && !forest {
            return bad("tree settings apply to survival-forest only");
        }
        if p.time_encoding.is_some() && self.family != Family::DiscreteHazardGlm {
            return bad("`time_encoding` applies to discrete-hazard-glm only");
        }
        if p.lambda.is_some_and(|l| !(l.is_finite() && l >= 0.0)) {
            return bad("`lambda` must be non-negative");
        }
        if p.lambda_folds.is_some_and(|k| k < 2) {
            return bad("`lambda_folds` must be at least 2");
        }
        if p.trees == Some(0) || p.mtry == Some(0) || p.min_node_size == Some(0) || p.split_candidates == Some(0) {
            return bad("trees, mtry, min_node_size and split_candidates must be at least 1");
        }
        Ok(())
    }

    fn forest_params(&self) -> ForestParams {
        let d = ForestParams::default();
        let p = &self.params;
        ForestParams {
            trees: p.trees.unwrap_or(d.trees),
            mtry: p.mtry.or(d.mtry),
            min_node_size: p.min_node_size.unwrap_or(d.min_node_size),
            split_candidates: p.split_candidates.unwrap_or(d.split_candidates),
            bootstrap: p.bootstrap.unwrap_or(d.bootstrap),
        }
    }
}

/// Training input: individual records for continuous families, person-period
/// rows for discrete ones.
#[derive(Debug, Clone, Copy)]
pub enum TrainingData<'a> {
    Survival(&'a SurvivalDataset),
    Long(&'a LongFormatDataset),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum FittedState {
    KaplanMeier { survival: StepCurve },
    NelsonAalen { cumhaz: StepCurve },
    Cox { model: CoxModel },
    CoxLasso { model: CoxModel, lambda: f64 },
    Weibull { model: WeibullModel },
    Forest { model: ForestModel },
    DiscreteGlm { model: DiscreteGlmModel, periods: PeriodGrid },
    DiscreteMean { model: DiscreteMeanModel, periods: PeriodGrid },
}

/// An immutable fitted candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLearner {
    pub spec: LearnerSpec,
    pub target: Target,
    pub n_train: usize,
    pub n_occurrences: usize,
    /// Largest training follow-up time; curves are carried flat beyond it.
    pub support_end: f64,
    covariate_names: Vec<String>,
    selected: Vec<usize>,
    state: FittedState,
}

fn select_covariates(spec: &LearnerSpec, names: &[String]) -> Result<Vec<usize>> {
    match &spec.params.covariates {
        _ if !spec.family.uses_covariates() => Ok(vec![]),
        None => Ok((0..names.len()).collect()),
        Some(wanted) => wanted
            .iter()
            .map(|w| {
                names.iter().position(|n| n == w).ok_or_else(|| {
                    Error::invalid(format!("learner '{}': unknown covariate '{w}'", spec.label))
                })
            })
            .collect(),
    }
}

fn design(rows: &[&[f64]], selected: &[usize]) -> Result<DesignMatrix> {
    let values = rows.iter().flat_map(|r| selected.iter().map(|&j| r[j])).collect();
    DesignMatrix::new(rows.len(), selected.len(), values)
}

/// Replaces generic column positions in an error with covariate names.
fn name_columns(err: Error, selected: &[usize], names: &[String]) -> Error {
    match err {
        Error::Invalid(msg) => {
            for (pos, &j) in selected.iter().enumerate() {
                let needle = format!("covariate column {pos} ");
                if msg.contains(&needle) {
                    return Error::Invalid(msg.replace(&needle, &format!("covariate '{}' ", names[j])));
                }
            }
            Error::Invalid(msg)
        }
        other => other,
    }
}

/// Fits `spec` for `target`. `seed` drives any randomness in the family.
pub fn fit(spec: &LearnerSpec, training: TrainingData<'_>, target: Target, seed: u64) -> Result<FittedLearner> {
    spec.validate()?;
    fit_inner(spec, training, target, seed).map_err(|e| e.context(format!("learner '{}' ({target})", spec.label)))
}

fn fit_inner(spec: &LearnerSpec, training: TrainingData<'_>, target: Target, seed: u64) -> Result<FittedLearner> {
    match (spec.family.is_discrete(), training) {
        (true, TrainingData::Long(long)) => fit_discrete(spec, long, target),
        (false, TrainingData::Survival(data)) => fit_continuous(spec, data, target, seed),
        (true, TrainingData::Survival(_)) => {
            Err(Error::invalid("discrete-time families train on person-period (long format) data"))
        }
        (false, TrainingData::Long(_)) => Err(Error::invalid("continuous-time families train on individual records")),
    }
}

fn fit_continuous(spec: &LearnerSpec, data: &SurvivalDataset, target: Target, seed: u64) -> Result<FittedLearner> {
    let targets = SurvivalTargets::new(data, target);
    let n_occurrences = targets.n_occurrences();
    if n_occurrences == 0 {
        return Err(Error::invalid(format!("training data contain no {target} occurrences")));
    }
    let names = data.covariate_names().to_vec();
    let selected = select_covariates(spec, &names)?;
    let x = design(&data.covariate_rows(), &selected)?;
    let named = |e| name_columns(e, &selected, &names);
    let state = match spec.family {
        Family::KaplanMeier => FittedState::KaplanMeier { survival: kaplan_meier(&targets) },
        Family::NelsonAalen => FittedState::NelsonAalen { cumhaz: nelson_aalen(&targets) },
        Family::Cox => {
            if selected.is_empty() {
                return Err(Error::invalid("Cox model needs at least one covariate"));
            }
            FittedState::Cox { model: newton_cox(&targets.times, &targets.status, &x).map_err(named)? }
        }
        Family::CoxLasso => {
            let choice = match spec.params.lambda {
                Some(l) => LambdaChoice::Fixed(l),
                None => LambdaChoice::CrossValidated { folds: spec.params.lambda_folds.unwrap_or(5), seed },
            };
            let fit = coord_descent_cox_lasso(&targets.times, &targets.status, &x, choice).map_err(named)?;
            FittedState::CoxLasso { model: fit.model, lambda: fit.lambda }
        }
        Family::Weibull => FittedState::Weibull { model: fit_weibull(&targets, &x, None).map_err(named)? },
        Family::Exponential => FittedState::Weibull { model: fit_weibull(&targets, &x, Some(1.0)).map_err(named)? },
        Family::SurvivalForest => {
            let ids: Vec<String> = data.records().iter().map(|r| r.id.clone()).collect();
            FittedState::Forest { model: fit_forest(&x, &targets, &ids, &spec.forest_params(), seed)? }
        }
        Family::DiscreteHazardGlm | Family::DiscreteMean => unreachable!("dispatched to fit_discrete"),
    };
    Ok(FittedLearner {
        spec: spec.clone(),
        target,
        n_train: data.len(),
        n_occurrences,
        support_end: targets.times.iter().cloned().fold(0.0, f64::max),
        covariate_names: names,
        selected,
        state,
    })
}

fn fit_discrete(spec: &LearnerSpec, long: &LongFormatDataset, target: Target) -> Result<FittedLearner> {
    if target != Target::Event {
        return Err(Error::invalid("discrete-time families model the event hazard only"));
    }
    let rows = long.rows();
    let periods: Vec<usize> = rows.iter().map(|r| r.period).collect();
    let outcome: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r.period_event))).collect();
    let n_occurrences = rows.iter().filter(|r| r.period_event).count();
    if n_occurrences == 0 {
        return Err(Error::invalid("training data contain no event periods"));
    }
    let names = long.covariate_names().to_vec();
    let selected = select_covariates(spec, &names)?;
    let grid = long.periods().clone();
    let m = grid.n_periods();
    let state = match spec.family {
        Family::DiscreteMean => FittedState::DiscreteMean { model: fit_discrete_mean(&periods, &outcome, m)?, periods: grid },
        Family::DiscreteHazardGlm => {
            let covs: Vec<&[f64]> = rows.iter().map(|r| long.covariates(r)).collect();
            let x = design(&covs, &selected)?;
            let encoding = spec.params.time_encoding.unwrap_or_default();
            let model = fit_discrete_glm(&periods, &x, &outcome, m, encoding)
                .map_err(|e| name_columns(e, &selected, &names))?;
            FittedState::DiscreteGlm { model, periods: grid }
        }
        _ => unreachable!("dispatched to fit_continuous"),
    };
    Ok(FittedLearner {
        spec: spec.clone(),
        target,
        n_train: long.individuals().len(),
        n_occurrences,
        support_end: long.periods().horizon(),
        covariate_names: names,
        selected,
        state,
    })
}

impl FittedLearner {
    pub fn label(&self) -> &str {
        &self.spec.label
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.covariate_names.len() {
            return Err(Error::invalid(format!(
                "learner '{}' expects {} covariates, got {}",
                self.spec.label,
                self.covariate_names.len(),
                x.len()
            )));
        }
        Ok(self.selected.iter().map(|&j| x[j]).collect())
    }

    fn continuous_only(&self) -> Error {
        Error::invalid(format!(
            "learner '{}' is a discrete-time family; query its per-period hazards instead",
            self.spec.label
        ))
    }

    /// Ŝ(t | x) (or Ĝ for the censoring target) at each time.
    pub fn predict_survival(&self, x: &[f64], times: &[f64]) -> Result<Vec<f64>> {
        let z = self.project(x)?;
        let clamp = |t: f64| t.min(self.support_end);
        Ok(match &self.state {
            FittedState::KaplanMeier { survival } => times.iter().map(|&t| survival.at(clamp(t))).collect(),
            FittedState::Forest { model } => {
                model.survival(&z, &times.iter().map(|&t| clamp(t)).collect::<Vec<_>>())
            }
            FittedState::DiscreteGlm { .. } | FittedState::DiscreteMean { .. } => return Err(self.continuous_only()),
            _ => self.predict_cumhaz_projected(&z, times)?.into_iter().map(|h| (-h).exp()).collect(),
        })
    }

    /// Λ̂(t | x) (or Γ̂) at each time.
    pub fn predict_cumhaz(&self, x: &[f64], times: &[f64]) -> Result<Vec<f64>> {
        let z = self.project(x)?;
        match &self.state {
            FittedState::KaplanMeier { .. } | FittedState::Forest { .. } => Ok(self
                .predict_survival(x, times)?
                .into_iter()
                .map(|s| -s.max(SURVIVAL_FLOOR).ln())
                .collect()),
            _ => self.predict_cumhaz_projected(&z, times),
        }
    }

    fn predict_cumhaz_projected(&self, z: &[f64], times: &[f64]) -> Result<Vec<f64>> {
        let clamp = |t: f64| t.min(self.support_end);
        Ok(match &self.state {
            FittedState::NelsonAalen { cumhaz } => times.iter().map(|&t| cumhaz.at(clamp(t))).collect(),
            FittedState::Cox { model } | FittedState::CoxLasso { model, .. } => {
                let risk = model.linear_predictor(z).exp();
                times.iter().map(|&t| model.baseline_at(clamp(t)) * risk).collect()
            }
            FittedState::Weibull { model } => times.iter().map(|&t| model.cumulative_hazard(clamp(t), z)).collect(),
            FittedState::DiscreteGlm { .. } | FittedState::DiscreteMean { .. } => return Err(self.continuous_only()),
            FittedState::KaplanMeier { .. } | FittedState::Forest { .. } => unreachable!("defined through survival"),
        })
    }

    /// Q̂(t | x) for one period.
    pub fn predict_discrete_hazard(&self, period: usize, x: &[f64]) -> Result<f64> {
        let z = self.project(x)?;
        match &self.state {
            FittedState::DiscreteGlm { model, .. } => Ok(model.hazard(period, &z)),
            FittedState::DiscreteMean { model, .. } => Ok(model.hazards[period.min(model.hazards.len() - 1)]),
            _ => Err(Error::invalid(format!(
                "learner '{}' is a continuous-time family and has no per-period hazards",
                self.spec.label
            ))),
        }
    }

    /// Hazards for every period of the training grid.
    pub fn predict_discrete_hazards(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.state {
            FittedState::DiscreteGlm { periods, .. } | FittedState::DiscreteMean { periods, .. } => {
                (0..periods.n_periods()).map(|t| self.predict_discrete_hazard(t, x)).collect()
            }
            _ => self.predict_discrete_hazard(0, x).map(|_| vec![]),
        }
    }

    fn warn_support(&self, times: &[f64]) {
        if times.iter().any(|&t| t > self.support_end) {
            log::warn!(
                "learner '{}': times beyond the last training time {} carry the last fitted value forward",
                self.spec.label,
                self.support_end
            );
        }
    }

    /// Survival curves for many individuals on shared times.
    pub fn survival_matrix(&self, rows: &[&[f64]], times: &[f64]) -> Result<CurveMatrix> {
        self.warn_support(times);
        let mut values = Vec::with_capacity(rows.len() * times.len());
        for x in rows {
            values.extend(self.predict_survival(x, times)?);
        }
        Ok(CurveMatrix { times: times.to_vec(), n_rows: rows.len(), values })
    }

    pub fn cumhaz_matrix(&self, rows: &[&[f64]], times: &[f64]) -> Result<CurveMatrix> {
        self.warn_support(times);
        let mut values = Vec::with_capacity(rows.len() * times.len());
        for x in rows {
            values.extend(self.predict_cumhaz(x, times)?);
        }
        Ok(CurveMatrix { times: times.to_vec(), n_rows: rows.len(), values })
    }
}

/// Anything that can produce conditional survival curves for new covariates.
pub trait SurvivalPredictor {
    /// Ŝ(t | x) for each row of `rows` (training covariate layout) at `times`.
    fn survival_matrix(&self, rows: &[&[f64]], times: &[f64]) -> Result<CurveMatrix>;
}

impl SurvivalPredictor for FittedLearner {
    fn survival_matrix(&self, rows: &[&[f64]], times: &[f64]) -> Result<CurveMatrix> {
        FittedLearner::survival_matrix(self, rows, times)
    }
}

/// Individuals × times matrix of survival or cumulative-hazard values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMatrix {
    times: Vec<f64>,
    n_rows: usize,
    values: Vec<f64>,
}

pub type SurvivalCurveMatrix = CurveMatrix;
pub type CumulativeHazardMatrix = CurveMatrix;

impl CurveMatrix {
    pub fn new(times: Vec<f64>, n_rows: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != times.len() * n_rows {
            return Err(Error::invalid("curve matrix dimensions do not match its values"));
        }
        Ok(Self { times, n_rows, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }
    pub fn n_cols(&self) -> usize {
        self.times.len()
    }
    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.times.len();
        &self.values[i * m..(i + 1) * m]
    }
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.times.len() + j]
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rows within [0, 1] and non-increasing.
    pub fn is_survival(&self) -> bool {
        (0..self.n_rows).all(|i| {
            let r = self.row(i);
            r.iter().all(|v| (0.0..=1.0).contains(v)) && r.windows(2).all(|w| w[1] <= w[0])
        })
    }

    /// Rows non-negative and non-decreasing.
    pub fn is_cumulative_hazard(&self) -> bool {
        (0..self.n_rows).all(|i| {
            let r = self.row(i);
            r.iter().all(|&v| v >= 0.0) && r.windows(2).all(|w| w[1] >= w[0])
        })
    }
}

#[cfg(test)]
mod tests;
