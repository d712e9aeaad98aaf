//! Run orchestration behind the command line: configuration, fitting,
//! prediction, evaluation, reports and model bundles.

mod bundle;
mod config;
mod report;


pub use bundle::{Bundle, DeployedModel, BUNDLE_MAGIC, BUNDLE_SCHEMA, BUNDLE_VERSION};
pub use config::{ContinuousSettings, DataSource, DiscreteSettings, Method, RunConfig};
pub use report::{collect_warnings, DataSummary, InSamplePrediction, MethodResult, RunReport, REPORT_SCHEMA};

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::continuous_sl::{fit_westling_sl, WestlingConfig};
use crate::data::{load_covariates, load_dataset, simulate_synthetic, write_dataset, ColumnSchema, SurvivalDataset, SyntheticConfig};
use crate::discrete_sl::{fit_discrete_sl, DiscreteSlConfig};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_predictor, MetricReport};
use crate::learners::{CurveMatrix, SurvivalPredictor};
use crate::state_learner::{fit_state_learner, StateLearnerConfig};

pub const REPORT_FILE: &str = "report.json";
pub const BUNDLE_FILE: &str = "model.bundle";

/// Runs the configured method on `train`, scoring on `test` when given.
pub fn fit_run(config: &RunConfig, train: &SurvivalDataset, test: Option<&SurvivalDataset>) -> Result<(RunReport, Bundle)> {
    config.validate()?;
    let tau = config.horizon;
    let (result, model, fold_sizes) = match config.method {
        config::Method::Discrete => {
            let d = &config.discrete;
            let sl = DiscreteSlConfig {
                horizon: tau,
                periods: d.periods,
                scheme: d.scheme,
                folds: config.folds,
                loss: d.loss,
                ensemble: d.ensemble,
                seed: config.seed,
            };
            let fit = fit_discrete_sl(train, &config.event_learners, &sl).map_err(|e| e.context("discrete super learner"))?;
            let result = MethodResult::Discrete {
                combination: fit.predictor.combination(),
                risk: fit.risk,
                selection: fit.selection,
                ensemble: fit.ensemble,
                dropped: fit.dropped,
            };
            (result, DeployedModel::Discrete(fit.predictor), fit.fold_sizes)
        }
        config::Method::Westling => {
            let c = &config.continuous;
            let wc = WestlingConfig {
                horizon: tau,
                grid_points: c.grid_points,
                folds: config.folds,
                epsilon: c.epsilon,
                max_iterations: c.max_iterations,
                ensemble: c.ensemble,
                seed: config.seed,
            };
            let fit = fit_westling_sl(train, &config.event_learners, &config.censoring_learners, &wc)
                .map_err(|e| e.context("continuous-time super learner"))?;
            let result = MethodResult::Westling {
                event_losses: fit.event_losses,
                censoring_losses: fit.censoring_losses,
                ensembles: fit.dual,
                best_event: fit.best_event,
                best_censoring: fit.best_censoring,
                event_dropped: fit.event_dropped,
                censoring_dropped: fit.censoring_dropped,
            };
            (result, DeployedModel::Westling(fit.predictor), fit.fold_sizes)
        }
        config::Method::Statelearner => {
            let sc = StateLearnerConfig {
                horizon: tau,
                grid_points: config.continuous.grid_points,
                folds: config.folds,
                seed: config.seed,
            };
            let fit = fit_state_learner(train, &config.event_learners, &config.censoring_learners, &sc)
                .map_err(|e| e.context("state learner"))?;
            let result = MethodResult::Statelearner {
                risk: fit.risk,
                selection: fit.selection,
                event_dropped: fit.event_dropped,
                censoring_dropped: fit.censoring_dropped,
            };
            (result, DeployedModel::Statelearner(fit.predictor), fit.fold_sizes)
        }
    };

    let rows = train.covariate_rows();
    let at_tau = model.survival_matrix(&rows, &[tau])?;
    let in_sample = train
        .records()
        .iter()
        .zip(at_tau.values())
        .map(|(r, &s)| InSamplePrediction { id: r.id.clone(), survival: s })
        .collect();
    let metrics = match test {
        Some(t) => Some(evaluate_on(&model, train.covariate_names(), t, tau).map_err(|e| e.context("test-set evaluation"))?),
        None => None,
    };
    let report = RunReport {
        schema: REPORT_SCHEMA.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        data: DataSummary::of(train)?,
        fold_sizes,
        warnings: collect_warnings(&result, metrics.as_ref()),
        result,
        in_sample,
        metrics,
    };
    let bundle = Bundle::new(tau, train.covariate_names().to_vec(), model);
    Ok((report, bundle))
}

fn evaluate_on(model: &DeployedModel, names: &[String], test: &SurvivalDataset, tau: f64) -> Result<MetricReport> {
    if test.covariate_names() != names {
        return Err(Error::invalid(format!(
            "test covariates {:?} do not match the model's {:?}",
            test.covariate_names(),
            names
        )));
    }
    let last = test.records().iter().map(|r| r.time).fold(0.0, f64::max);
    if tau > last {
        return Err(Error::invalid(format!("horizon {tau} is beyond the last test-set follow-up time {last}")));
    }
    evaluate_predictor(model, test, tau)
}

/// Reads a dataset whose covariates are pinned to `names`, in that order.
fn load_with_covariates(path: &Path, columns: &ColumnSchema, names: &[String]) -> Result<SurvivalDataset> {
    let mut schema = columns.clone();
    schema.covariates = Some(names.to_vec());
    load_dataset(path, &schema).map_err(|e| e.context(format!("loading {}", path.display())))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::from(e).context(format!("creating {}", dir.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::from(e).context(format!("writing {}", path.display())))
}

/// Writes `<out>/data.csv` and the generating parameters to
/// `<out>/truth.json`.
pub fn cmd_simulate(config: &SyntheticConfig, out_dir: &Path) -> Result<()> {
    let (data, truth) = simulate_synthetic(config)?;
    create_dir(out_dir)?;
    let mut csv = Vec::new();
    write_dataset(&mut csv, &data)?;
    write_file(&out_dir.join("data.csv"), &csv)?;
    let mut json = serde_json::to_string_pretty(&truth)?;
    json.push('\n');
    write_file(&out_dir.join("truth.json"), json.as_bytes())
}

/// Fits from the configured data files and writes the report and bundle
/// into `out_dir`.
pub fn cmd_fit(config: &RunConfig, out_dir: &Path) -> Result<RunReport> {
    config.validate()?;
    let path: &PathBuf =
        config.data.path.as_ref().ok_or_else(|| Error::Config("no training data: set data.path or pass --data".into()))?;
    let train = load_dataset(path, &config.data.columns).map_err(|e| e.context(format!("loading {}", path.display())))?;
    let test = match &config.data.test_path {
        Some(p) => Some(load_with_covariates(p, &config.data.columns, train.covariate_names())?),
        None => None,
    };
    let (report, bundle) = fit_run(config, &train, test.as_ref())?;
    create_dir(out_dir)?;
    write_file(&out_dir.join(REPORT_FILE), report.to_json()?.as_bytes())?;
    write_file(&out_dir.join(BUNDLE_FILE), &bundle.to_bytes()?)?;
    Ok(report)
}

/// Long-format `id,time,survival` rows.
pub fn write_predictions<W: Write>(writer: W, ids: &[String], survival: &CurveMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "time", "survival"])?;
    for (i, id) in ids.iter().enumerate() {
        for (t, &time) in survival.times().iter().enumerate() {
            w.write_record([id.clone(), time.to_string(), survival.get(i, t).to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Predicts Ŝ(t | x) for every row of `covariates_path` at `times`.
/// Returns the number of individuals written.
pub fn cmd_predict(
    bundle_path: &Path,
    covariates_path: &Path,
    times: &[f64],
    id_column: Option<&str>,
    out_path: &Path,
) -> Result<usize> {
    if times.is_empty() || times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::invalid("prediction times must be a non-empty list of non-negative numbers"));
    }
    let bundle = Bundle::read(bundle_path).map_err(|e| e.context(format!("reading {}", bundle_path.display())))?;
    let (ids, rows) = load_covariates(covariates_path, &bundle.covariate_names, id_column)
        .map_err(|e| e.context(format!("loading {}", covariates_path.display())))?;
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let s = bundle.model.survival_matrix(&refs, times)?;
    let mut out = Vec::new();
    write_predictions(&mut out, &ids, &s)?;
    write_file(out_path, &out)?;
    Ok(ids.len())
}

/// Scores a bundle on a labelled test file at `tau`.
pub fn cmd_evaluate(bundle_path: &Path, test_path: &Path, columns: &ColumnSchema, tau: f64) -> Result<MetricReport> {
    let bundle = Bundle::read(bundle_path).map_err(|e| e.context(format!("reading {}", bundle_path.display())))?;
    let test = load_with_covariates(test_path, columns, &bundle.covariate_names)?;
    evaluate_on(&bundle.model, &bundle.covariate_names, &test, tau)
}
