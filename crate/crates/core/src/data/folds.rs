use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::SurvivalDataset;
use crate::error::{Error, Result};
use crate::seed;

/// Partition of a dataset's individuals into `k` validation folds.
///
/// Fold indices are 0-based. The assignment depends only on the ids, `k` and
/// the seed: records are keyed by id before shuffling, so reordering the
/// input file does not move anyone between folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    k: usize,
    /// Fold of each record, aligned with the dataset order.
    fold_of: Vec<usize>,
    ids: Vec<String>,
    /// True when there were fewer events than folds.
    pub stratification_relaxed: bool,
}

impl FoldAssignment {
    /// Builds an assignment from explicit fold labels (0-based).
    pub fn from_labels(ids: Vec<String>, fold_of: Vec<usize>, k: usize) -> Result<Self> {
        if ids.len() != fold_of.len() {
            return Err(Error::invalid("ids and fold labels differ in length"));
        }
        let mut sizes = vec![0usize; k];
        for &f in &fold_of {
            if f >= k {
                return Err(Error::invalid(format!("fold label {f} out of range for k = {k}")));
            }
            sizes[f] += 1;
        }
        if sizes.contains(&0) {
            return Err(Error::invalid("every fold must be non-empty"));
        }
        Ok(Self { k, fold_of, ids, stratification_relaxed: false })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self, index: usize) -> usize {
        self.fold_of[index]
    }

    pub fn labels(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn fold_of_id(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|i| i == id).map(|p| self.fold_of[p])
    }

    /// Dataset indices in validation fold `fold`.
    pub fn validation(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    /// Dataset indices outside fold `fold`.
    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified, seeded assignment of individuals to `k` folds.
///
/// Events and non-events are shuffled separately and dealt round-robin, so
/// fold sizes differ by at most one and each fold receives an event whenever
/// there are at least `k` of them.
pub fn assign_folds(data: &SurvivalDataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    let n = data.len();
    if k < 2 || k > n {
        return Err(Error::invalid(format!("fold count must satisfy 2 <= K <= n (K = {k}, n = {n})")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| data.record(a).id.cmp(&data.record(b).id));
    let (mut events, mut others): (Vec<usize>, Vec<usize>) = order.into_iter().partition(|&i| data.record(i).event);
    let mut rng = seed::rng(seed, "folds");
    events.shuffle(&mut rng);
    others.shuffle(&mut rng);

    let relaxed = events.len() < k;
    if relaxed {
        log::warn!("only {} events for {k} folds; some validation folds will be event-free", events.len());
    }
    let mut fold_of = vec![0; n];
    for (pos, &i) in events.iter().chain(others.iter()).enumerate() {
        fold_of[i] = pos % k;
    }
    let ids = data.records().iter().map(|r| r.id.clone()).collect();
    Ok(FoldAssignment { k, fold_of, ids, stratification_relaxed: relaxed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SurvivalRecord;
    use proptest::prelude::*;

    fn dataset(n: usize, events_every: usize) -> SurvivalDataset {
        let recs = (0..n)
            .map(|i| SurvivalRecord {
                id: format!("id{i:03}"),
                time: 1.0 + i as f64,
                event: i % events_every == 0,
                covariates: vec![],
            })
            .collect();
        SurvivalDataset::new(recs, vec![]).unwrap()
    }

    #[test]
    fn ten_into_five_gives_pairs() {
        let f = assign_folds(&dataset(10, 2), 5, 1).unwrap();
        assert_eq!(f.sizes(), vec![2; 5]);
    }

    #[test]
    fn seven_into_five_is_balanced() {
        let f = assign_folds(&dataset(7, 2), 5, 3).unwrap();
        let mut sizes = f.sizes();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sizes, vec![2, 2, 1, 1, 1]);
    }

    #[test]
    fn deterministic_and_order_independent() {
        let d = dataset(23, 3);
        let a = assign_folds(&d, 4, 11).unwrap();
        assert_eq!(a, assign_folds(&d, 4, 11).unwrap());
        let reversed: Vec<usize> = (0..d.len()).rev().collect();
        let r = assign_folds(&d.subset(&reversed), 4, 11).unwrap();
        for rec in d.records() {
            assert_eq!(a.fold_of_id(&rec.id), r.fold_of_id(&rec.id));
        }
    }

    #[test]
    fn rejects_bad_k_and_flags_few_events() {
        assert!(assign_folds(&dataset(3, 1), 4, 0).is_err());
        assert!(assign_folds(&dataset(3, 1), 1, 0).is_err());
        let f = assign_folds(&dataset(10, 5), 5, 0).unwrap();
        assert!(f.stratification_relaxed);
    }

    proptest! {
        #[test]
        fn partition_with_events_spread(n in 4usize..60, k in 2usize..6, every in 1usize..4, seed in 0u64..1000) {
            prop_assume!(k <= n);
            let d = dataset(n, every);
            let f = assign_folds(&d, k, seed).unwrap();
            let sizes = f.sizes();
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let mut all: Vec<usize> = (0..k).flat_map(|fold| f.validation(fold)).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            if d.n_events() >= k {
                for fold in 0..k {
                    prop_assert!(f.validation(fold).iter().any(|&i| d.record(i).event));
                }
            }
        }
    }
}
