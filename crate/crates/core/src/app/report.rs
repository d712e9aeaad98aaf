use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::continuous_sl::{DualEnsemble, LossTable};
use crate::data::{write_dataset, SurvivalDataset};
use crate::discrete_sl::{Combination, CvRiskTable, EnsembleWeights, Selection};
use crate::error::Result;
use crate::evaluation::MetricReport;
use crate::learners::DroppedLearner;
use crate::state_learner::{PairRiskTable, PairSelection};

pub const REPORT_SCHEMA: &str = "survsl-report";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n: usize,
    pub events: usize,
    pub covariates: Vec<String>,
    /// SHA-256 of the dataset re-written in canonical CSV form.
    pub sha256: String,
}

impl DataSummary {
    pub fn of(data: &SurvivalDataset) -> Result<Self> {
        let mut csv = Vec::new();
        write_dataset(&mut csv, data)?;
        let sha256 = Sha256::digest(&csv).iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self { n: data.len(), events: data.n_events(), covariates: data.covariate_names().to_vec(), sha256 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum MethodResult {
    Discrete {
        risk: CvRiskTable,
        selection: Selection,
        ensemble: Option<EnsembleWeights>,
        combination: Combination,
        dropped: Vec<DroppedLearner>,
    },
    Westling {
        event_losses: LossTable,
        censoring_losses: LossTable,
        ensembles: DualEnsemble,
        best_event: String,
        best_censoring: String,
        event_dropped: Vec<DroppedLearner>,
        censoring_dropped: Vec<DroppedLearner>,
    },
    Statelearner {
        risk: PairRiskTable,
        selection: PairSelection,
        event_dropped: Vec<DroppedLearner>,
        censoring_dropped: Vec<DroppedLearner>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InSamplePrediction {
    pub id: String,
    /// Ŝ(τ | x) from the deployed model.
    pub survival: f64,
}

/// Everything a `fit` run produced, reproducible from `config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub version: String,
    pub config: RunConfig,
    pub data: DataSummary,
    pub fold_sizes: Vec<usize>,
    pub result: MethodResult,
    pub in_sample: Vec<InSamplePrediction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricReport>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

fn dropped_warnings(what: &str, dropped: &[DroppedLearner], out: &mut Vec<String>) {
    out.extend(dropped.iter().map(|d| format!("{what} learner '{}' dropped: {}", d.label, d.reason)));
}

/// Human-readable notes on caps, ties, fallbacks, dropped learners and
/// convergence.
pub fn collect_warnings(result: &MethodResult, metrics: Option<&MetricReport>) -> Vec<String> {
    let mut w = Vec::new();
    match result {
        MethodResult::Discrete { risk, selection, ensemble, dropped, .. } => {
            dropped_warnings("event", dropped, &mut w);
            if risk.capped_weights > 0 {
                w.push(format!("{} IPCW weights in the loss were capped", risk.capped_weights));
            }
            if selection.tie {
                w.push(format!("tie in cross-validated risk; '{}' kept by library order", selection.label));
            }
            if let Some(e) = ensemble {
                if let Some(f) = &e.fallback {
                    w.push(format!("every ensemble coefficient was zero; fell back to '{f}'"));
                }
                if e.capped_weights > 0 {
                    w.push(format!("{} IPCW weights in the ensemble fit were capped", e.capped_weights));
                }
                if e.ridge_added {
                    w.push("separation in the stacking regression; a small ridge penalty was added".into());
                }
            }
        }
        MethodResult::Westling { ensembles, event_losses, censoring_losses, event_dropped, censoring_dropped, .. } => {
            dropped_warnings("event", event_dropped, &mut w);
            dropped_warnings("censoring", censoring_dropped, &mut w);
            if !ensembles.converged {
                w.push(format!(
                    "ensembles did not converge in {} iterations; kept the iterate with the smallest change",
                    ensembles.iterations
                ));
            }
            for (name, s, labels) in [
                ("event", &ensembles.alpha, &event_losses.labels),
                ("censoring", &ensembles.beta, &censoring_losses.labels),
            ] {
                if let Some(j) = s.fallback {
                    w.push(format!("every {name} ensemble coefficient was zero; fell back to '{}'", labels[j]));
                }
            }
            if ensembles.floored_fg + ensembles.floored_fs > 0 {
                w.push(format!(
                    "{} pseudo-outcome denominators were raised to the floor",
                    ensembles.floored_fg + ensembles.floored_fs
                ));
            }
        }
        MethodResult::Statelearner { selection, event_dropped, censoring_dropped, .. } => {
            dropped_warnings("event", event_dropped, &mut w);
            dropped_warnings("censoring", censoring_dropped, &mut w);
            if selection.tie {
                w.push(format!(
                    "tie in cross-validated loss; pair ('{}', '{}') kept by library order",
                    selection.event_label, selection.censoring_label
                ));
            }
        }
    }
    if let Some(m) = metrics {
        if m.capped_weights > 0 {
            w.push(format!("{} test-set censoring weights were capped", m.capped_weights));
        }
        if m.calibration.merged {
            w.push("calibration bins were merged".into());
        }
    }
    w
}
