//! Right-censored survival data: records, datasets, folds, time grids,
//! person-period expansion and a synthetic generator with known truth.

mod csv_io;
mod discretize;
mod folds;
mod grid;
mod synthetic;

pub use csv_io::{load_covariates, load_dataset, read_covariates, read_dataset, write_dataset, ColumnSchema};
pub use discretize::{
    discretize, survival_at_time, survival_from_discrete_hazards, DiscretizationScheme, LongFormatDataset,
    LongFormatRow, LongIndividual, PeriodGrid,
};
pub use folds::{assign_folds, FoldAssignment};
pub use grid::{make_grid, TimeGrid};
pub use synthetic::{simulate_synthetic, Scenario, SyntheticConfig, SyntheticTruth};

use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::error::{Error, Result};

/// One observed triple (T̃, Δ, X).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub id: String,
    /// min(T, C).
    pub time: f64,
    /// Whether the event was observed (T ≤ C).
    pub event: bool,
    pub covariates: Vec<f64>,
}

/// An ordered collection of records sharing one covariate layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDataset {
    records: Vec<SurvivalRecord>,
    covariate_names: Vec<String>,
}

impl SurvivalDataset {
    /// Validates every record and requires at least one observed event.
    pub fn new(records: Vec<SurvivalRecord>, covariate_names: Vec<String>) -> Result<Self> {
        let data = Self::unchecked_events(records, covariate_names)?;
        if !data.records.iter().any(|r| r.event) {
            return Err(Error::invalid("dataset contains no observed events"));
        }
        Ok(data)
    }

    fn unchecked_events(records: Vec<SurvivalRecord>, covariate_names: Vec<String>) -> Result<Self> {
        let p = covariate_names.len();
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let row = i + 1;
            if !r.time.is_finite() || r.time <= 0.0 {
                return Err(Error::row(row, format!("follow-up time must be finite and > 0, got {}", r.time)));
            }
            if r.covariates.len() != p {
                return Err(Error::row(row, format!("expected {p} covariates, got {}", r.covariates.len())));
            }
            if let Some(j) = r.covariates.iter().position(|v| !v.is_finite()) {
                return Err(Error::row(row, format!("covariate '{}' is not finite", covariate_names[j])));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::row(row, format!("duplicate id '{}'", r.id)));
            }
        }
        Ok(Self { records, covariate_names })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &SurvivalRecord {
        &self.records[i]
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.event).collect()
    }

    pub fn covariate_rows(&self) -> Vec<&[f64]> {
        self.records.iter().map(|r| r.covariates.as_slice()).collect()
    }

    /// Records at `indices`, in that order. The result may be event-free
    /// (validation folds can be); learners check their own preconditions.
    pub fn subset(&self, indices: &[usize]) -> SurvivalDataset {
        SurvivalDataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            covariate_names: self.covariate_names.clone(),
        }
    }

    /// Index of a covariate by name.
    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|c| c == name)
    }
}

#[cfg(test)]
pub(crate) fn toy_dataset(rows: &[(f64, bool)]) -> SurvivalDataset {
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, &(time, event))| SurvivalRecord { id: format!("{}", i + 1), time, event, covariates: vec![] })
        .collect();
    SurvivalDataset::new(records, vec![]).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, time: f64, event: bool) -> SurvivalRecord {
        SurvivalRecord { id: id.into(), time, event, covariates: vec![0.0] }
    }

    #[test]
    fn rejects_nonpositive_time_with_row() {
        let err = SurvivalDataset::new(vec![rec("a", 1.0, true), rec("b", 0.0, false)], vec!["x".into()]).unwrap_err();
        assert!(matches!(err, Error::Row { row: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_duplicate_ids_and_event_free_data() {
        let dup = SurvivalDataset::new(vec![rec("a", 1.0, true), rec("a", 2.0, false)], vec!["x".into()]);
        assert!(matches!(dup, Err(Error::Row { row: 2, .. })));
        let none = SurvivalDataset::new(vec![rec("a", 1.0, false)], vec!["x".into()]);
        assert!(none.is_err());
    }

    #[test]
    fn subset_preserves_order() {
        let d = SurvivalDataset::new(vec![rec("a", 1.0, true), rec("b", 2.0, false), rec("c", 3.0, true)], vec!["x".into()])
            .unwrap();
        let s = d.subset(&[2, 0]);
        assert_eq!(s.records()[0].id, "c");
        assert_eq!(s.records()[1].id, "a");
    }
}
