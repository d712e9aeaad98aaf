//! Fitted-model container: the magic line `SURVSLB1`, then one JSON
//! document carrying a schema id, a semantic version and the model.

use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use super::config::Method;
use crate::continuous_sl::ContinuousPredictor;
use crate::discrete_sl::DiscretePredictor;
use crate::error::{Error, Result};
use crate::learners::{CurveMatrix, SurvivalPredictor};
use crate::state_learner::StatePredictor;

pub const BUNDLE_MAGIC: &[u8] = b"SURVSLB1\n";
pub const BUNDLE_SCHEMA: &str = "survsl-bundle";
pub const BUNDLE_VERSION: &str = "1.0.0";

/// The deployable predictor of each method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum DeployedModel {
    Discrete(DiscretePredictor),
    Westling(ContinuousPredictor),
    Statelearner(StatePredictor),
}

impl DeployedModel {
    pub fn method(&self) -> Method {
        match self {
            DeployedModel::Discrete(_) => Method::Discrete,
            DeployedModel::Westling(_) => Method::Westling,
            DeployedModel::Statelearner(_) => Method::Statelearner,
        }
    }
}

impl SurvivalPredictor for DeployedModel {
    fn survival_matrix(&self, rows: &[&[f64]], times: &[f64]) -> Result<CurveMatrix> {
        match self {
            DeployedModel::Discrete(m) => m.survival_matrix(rows, times),
            DeployedModel::Westling(m) => m.survival_matrix(rows, times),
            DeployedModel::Statelearner(m) => m.survival_matrix(rows, times),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub schema: String,
    pub version: String,
    pub horizon: f64,
    /// Covariate layout the model expects, in order.
    pub covariate_names: Vec<String>,
    pub model: DeployedModel,
}

impl Bundle {
    pub fn new(horizon: f64, covariate_names: Vec<String>, model: DeployedModel) -> Self {
        Self { schema: BUNDLE_SCHEMA.into(), version: BUNDLE_VERSION.into(), horizon, covariate_names, model }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = BUNDLE_MAGIC.to_vec();
        serde_json::to_writer(&mut out, self)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let body = bytes
            .strip_prefix(BUNDLE_MAGIC)
            .ok_or_else(|| Error::Bundle("not a survsl bundle (missing SURVSLB1 header)".into()))?;
        // Check the envelope before decoding the model so a newer layout
        // reports a version problem rather than a parse error.
        #[derive(Deserialize)]
        struct Envelope {
            schema: String,
            version: String,
        }
        let env: Envelope = serde_json::from_slice(body).map_err(|e| Error::Bundle(format!("unreadable bundle: {e}")))?;
        if env.schema != BUNDLE_SCHEMA {
            return Err(Error::Bundle(format!("unknown bundle schema '{}'", env.schema)));
        }
        let major = |v: &str| v.split('.').next().and_then(|m| m.parse::<u64>().ok());
        if major(&env.version).is_none() || major(&env.version) != major(BUNDLE_VERSION) {
            return Err(Error::Bundle(format!(
                "bundle version {} is not supported (this build reads {}.x)",
                env.version,
                major(BUNDLE_VERSION).unwrap_or(0)
            )));
        }
        serde_json::from_slice(body).map_err(|e| Error::Bundle(format!("corrupt bundle: {e}")))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path.as_ref())?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path.as_ref())?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
