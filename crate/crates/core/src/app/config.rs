use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};

use crate::data::{ColumnSchema, DiscretizationScheme};
use crate::discrete_sl::DiscreteLoss;
use crate::error::{Error, Result};
use crate::learners::LearnerSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Discrete-time stacked hazard super learner.
    Discrete,
    /// Coupled event/censoring continuous-time ensembles.
    Westling,
    /// Pairwise cumulative-hazard selection by three-state Brier score.
    Statelearner,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Discrete => "discrete",
            Method::Westling => "westling",
            Method::Statelearner => "statelearner",
        })
    }
}

/// Where the training (and optional test) data live.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Held-out data scored at the horizon after fitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
    #[serde(default)]
    pub columns: ColumnSchema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscreteSettings {
    pub periods: usize,
    pub scheme: DiscretizationScheme,
    pub loss: DiscreteLoss,
    pub ensemble: bool,
}

impl Default for DiscreteSettings {
    fn default() -> Self {
        Self { periods: 30, scheme: DiscretizationScheme::EventQuantile, loss: DiscreteLoss::Ipcw, ensemble: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuousSettings {
    pub grid_points: usize,
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Westling only: combine learners rather than keep the best of each.
    pub ensemble: bool,
}

impl Default for ContinuousSettings {
    fn default() -> Self {
        Self { grid_points: 100, epsilon: 1e-5, max_iterations: 20, ensemble: true }
    }
}

fn default_folds() -> usize {
    5
}

/// Everything one `fit` run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    /// Evaluation horizon τ.
    pub horizon: f64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: DataSource,
    #[serde(default)]
    pub discrete: DiscreteSettings,
    #[serde(default)]
    pub continuous: ContinuousSettings,
    pub event_learners: Vec<LearnerSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub censoring_learners: Vec<LearnerSpec>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::from(e).context(format!("reading {}", path.as_ref().display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        if self.event_learners.is_empty() {
            return bad("event_learners must list at least one learner".into());
        }
        for library in [&self.event_learners, &self.censoring_learners] {
            let mut seen = std::collections::HashSet::new();
            for spec in library {
                spec.validate().map_err(|e| Error::Config(e.to_string()))?;
                if !seen.insert(&spec.label) {
                    return bad(format!("learner label '{}' is used twice in one library", spec.label));
                }
            }
        }
        match self.method {
            Method::Discrete => {
                if !self.censoring_learners.is_empty() {
                    return bad("censoring_learners are only used by the westling and statelearner methods".into());
                }
                if self.discrete.periods < 2 {
                    return bad("discrete.periods must be at least 2".into());
                }
                if let Some(s) = self.event_learners.iter().find(|s| !s.family.is_discrete()) {
                    return bad(format!("the discrete method needs discrete-time families; '{}' is continuous", s.label));
                }
            }
            Method::Westling | Method::Statelearner => {
                if self.censoring_learners.is_empty() {
                    return bad(format!("the {} method needs censoring_learners", self.method));
                }
                let all = self.event_learners.iter().chain(&self.censoring_learners);
                if let Some(s) = all.clone().find(|s| s.family.is_discrete()) {
                    return bad(format!("the {} method needs continuous-time families; '{}' is discrete", self.method, s.label));
                }
                if self.continuous.grid_points < 2 {
                    return bad("continuous.grid_points must be at least 2".into());
                }
                if !(self.continuous.epsilon > 0.0) || self.continuous.max_iterations == 0 {
                    return bad("continuous.epsilon must be positive and max_iterations at least 1".into());
                }
            }
        }
        Ok(())
    }
}
