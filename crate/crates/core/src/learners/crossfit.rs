//! Fold-wise fitting of a learner library.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, FittedLearner, LearnerSpec, Target, TrainingData};
use crate::data::{FoldAssignment, SurvivalDataset};
use crate::error::Result;
use crate::seed;

/// One learner's models, one per fold (model k never saw fold k).
#[derive(Debug, Clone)]
pub struct FoldFits {
    pub label: String,
    /// Position of the learner in the library.
    pub library_index: usize,
    pub fits: Vec<FittedLearner>,
}

/// A learner excluded because a fold fit failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedLearner {
    pub label: String,
    pub reason: String,
}

pub(crate) fn seed_label(target: Target, label: &str, part: &str) -> String {
    format!("learner/{target}/{label}/{part}")
}

/// Runs `fit_one(spec, fold)` for every learner and fold in parallel and
/// reassembles the results in library order. A learner failing in any fold
/// is dropped, with the first failure as its reason.
pub fn cross_fit_with<F>(specs: &[LearnerSpec], k: usize, fit_one: F) -> (Vec<FoldFits>, Vec<DroppedLearner>)
where
    F: Fn(&LearnerSpec, usize) -> Result<FittedLearner> + Sync,
{
    let jobs: Vec<(usize, usize)> = (0..specs.len()).flat_map(|j| (0..k).map(move |f| (j, f))).collect();
    let results: Vec<Result<FittedLearner>> = jobs.par_iter().map(|&(j, f)| fit_one(&specs[j], f)).collect();
    let mut results = results.into_iter();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (j, spec) in specs.iter().enumerate() {
        let mut fits = Vec::with_capacity(k);
        let mut failure = None;
        for fold in 0..k {
            match results.next().expect("one result per job") {
                Ok(m) => fits.push(m),
                Err(e) if failure.is_none() => failure = Some(format!("fold {}: {e}", fold + 1)),
                Err(_) => {}
            }
        }
        match failure {
            None => kept.push(FoldFits { label: spec.label.clone(), library_index: j, fits }),
            Some(reason) => {
                log::warn!("dropping learner '{}': {reason}", spec.label);
                dropped.push(DroppedLearner { label: spec.label.clone(), reason });
            }
        }
    }
    (kept, dropped)
}

/// Fits every learner on each fold's training split of `data`.
pub fn cross_fit(
    data: &SurvivalDataset,
    specs: &[LearnerSpec],
    folds: &FoldAssignment,
    target: Target,
    master_seed: u64,
) -> (Vec<FoldFits>, Vec<DroppedLearner>) {
    let training: Vec<SurvivalDataset> = (0..folds.k()).map(|f| data.subset(&folds.training(f))).collect();
    cross_fit_with(specs, folds.k(), |spec, fold| {
        let seed = seed::substream(master_seed, &seed_label(target, &spec.label, &format!("fold{}", fold + 1)));
        fit(spec, TrainingData::Survival(&training[fold]), target, seed)
    })
}

/// Full-data refit with the seed stream reserved for deployment.
pub fn fit_full(spec: &LearnerSpec, training: TrainingData<'_>, target: Target, master_seed: u64) -> Result<FittedLearner> {
    fit(spec, training, target, seed::substream(master_seed, &seed_label(target, &spec.label, "full")))
}
