//! Super learners for right-censored time-to-event prediction: a
//! discrete-time stacked hazard ensemble, an iterative continuous-time
//! ensemble coupling event and censoring models, and the state learner.

pub mod app;
pub mod continuous_sl;
pub mod data;
pub mod discrete_sl;
pub mod error;
pub mod evaluation;
pub mod learners;
pub mod numerics;
pub mod seed;
pub mod state_learner;

pub use error::{Error, Result};
