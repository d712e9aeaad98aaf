//! Random survival forest: bootstrap trees grown with log-rank splits and
//! Nelson–Aalen leaves; the ensemble survival is the average of leaf curves.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::nonparametric::{nelson_aalen, StepCurve, SurvivalTargets};
use crate::error::{Error, Result};
use crate::numerics::DesignMatrix;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    /// Candidate features per split; `None` means ⌈√p⌉.
    pub mtry: Option<usize>,
    pub min_node_size: usize,
    /// Random thresholds tried per candidate feature.
    pub split_candidates: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { trees: 250, mtry: None, min_node_size: 15, split_candidates: 10, bootstrap: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { cumhaz: StepCurve },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, x: &[f64]) -> &StepCurve {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Split { feature, threshold, left, right } => {
                    k = if x[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { cumhaz } => return cumhaz,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<Tree>,
}

impl ForestModel {
    /// Ensemble survival: mean over trees of exp(−Λ̂_leaf(t)).
    pub fn survival(&self, x: &[f64], times: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; times.len()];
        for tree in &self.trees {
            let leaf = tree.leaf(x);
            for (o, &t) in out.iter_mut().zip(times) {
                *o += (-leaf.at(t)).exp();
            }
        }
        let b = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= b);
        out
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

struct Grower<'a> {
    x: &'a DesignMatrix,
    targets: &'a SurvivalTargets,
    params: &'a ForestParams,
    mtry: usize,
}

impl Grower<'_> {
    fn leaf(&self, samples: &[usize]) -> Node {
        let sub = SurvivalTargets {
            times: samples.iter().map(|&i| self.targets.times[i]).collect(),
            status: samples.iter().map(|&i| self.targets.status[i]).collect(),
            others_leave_first: self.targets.others_leave_first,
        };
        Node::Leaf { cumhaz: nelson_aalen(&sub) }
    }

    /// Standardized log-rank statistic |O − E| / √V for the left group.
    fn log_rank(&self, by_time: &[usize], left: &[bool]) -> f64 {
        let mut at_risk = by_time.len() as f64;
        let mut at_risk_left = left.iter().filter(|&&l| l).count() as f64;
        let (mut o_minus_e, mut var) = (0.0, 0.0);
        let mut i = 0;
        while i < by_time.len() {
            let t = self.targets.times[by_time[i]];
            let (mut d, mut d_left, mut out, mut out_left) = (0.0, 0.0, 0.0, 0.0);
            while i < by_time.len() && self.targets.times[by_time[i]] == t {
                let is_left = left[i];
                if self.targets.status[by_time[i]] {
                    d += 1.0;
                    if is_left {
                        d_left += 1.0;
                    }
                }
                out += 1.0;
                if is_left {
                    out_left += 1.0;
                }
                i += 1;
            }
            if d > 0.0 {
                let frac = at_risk_left / at_risk;
                o_minus_e += d_left - d * frac;
                if at_risk > 1.0 {
                    var += d * frac * (1.0 - frac) * (at_risk - d) / (at_risk - 1.0);
                }
            }
            at_risk -= out;
            at_risk_left -= out_left;
        }
        if var > 0.0 {
            o_minus_e.abs() / var.sqrt()
        } else {
            0.0
        }
    }

    fn grow(&self, samples: Vec<usize>, rng: &mut ChaCha8Rng, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        nodes.push(Node::Leaf { cumhaz: StepCurve { initial: 0.0, times: vec![], values: vec![] } });
        let min = self.params.min_node_size;
        let has_event = samples.iter().any(|&i| self.targets.status[i]);
        let split = if samples.len() >= 2 * min && has_event { self.best_split(&samples, rng) } else { None };
        match split {
            None => nodes[id] = self.leaf(&samples),
            Some((feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    samples.iter().partition(|&&i| self.x.get(i, feature) <= threshold);
                let left = self.grow(l, rng, nodes);
                let right = self.grow(r, rng, nodes);
                nodes[id] = Node::Split { feature, threshold, left, right };
            }
        }
        id
    }

    fn best_split(&self, samples: &[usize], rng: &mut ChaCha8Rng) -> Option<(usize, f64)> {
        let mut by_time = samples.to_vec();
        by_time.sort_by(|&a, &b| self.targets.times[a].total_cmp(&self.targets.times[b]).then(a.cmp(&b)));
        let p = self.x.n_cols();
        let mut best: Option<(f64, usize, f64)> = None;
        for feature in sample(rng, p, self.mtry.min(p)).into_vec() {
            let mut values: Vec<f64> = samples.iter().map(|&i| self.x.get(i, feature)).collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            if values.len() < 2 {
                continue;
            }
            // Splits at x ≤ v for any value but the largest.
            let usable = &values[..values.len() - 1];
            let thresholds: Vec<f64> = if usable.len() <= self.params.split_candidates {
                usable.to_vec()
            } else {
                let mut picked = sample(rng, usable.len(), self.params.split_candidates).into_vec();
                picked.sort_unstable();
                picked.into_iter().map(|k| usable[k]).collect()
            };
            for threshold in thresholds {
                let left: Vec<bool> = by_time.iter().map(|&i| self.x.get(i, feature) <= threshold).collect();
                let n_left = left.iter().filter(|&&l| l).count();
                if n_left < self.params.min_node_size || by_time.len() - n_left < self.params.min_node_size {
                    continue;
                }
                let stat = self.log_rank(&by_time, &left);
                if stat > 0.0 && best.is_none_or(|(s, _, _)| stat > s) {
                    best = Some((stat, feature, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Grows the forest. `ids` fix a canonical record order so the fit does not
/// depend on how the training rows happen to be arranged.
pub fn fit_forest(
    x: &DesignMatrix,
    targets: &SurvivalTargets,
    ids: &[String],
    params: &ForestParams,
    master_seed: u64,
) -> Result<ForestModel> {
    let n = x.n_rows();
    if params.trees == 0 || params.min_node_size == 0 || params.split_candidates == 0 {
        return Err(Error::invalid("forest needs trees, min node size and split candidates of at least 1"));
    }
    let p = x.n_cols();
    let mtry = params.mtry.unwrap_or_else(|| (p as f64).sqrt().ceil() as usize);
    if p > 0 && !(1..=p).contains(&mtry) {
        return Err(Error::invalid(format!("mtry must lie in [1, {p}], got {mtry}")));
    }
    if targets.n_occurrences() == 0 {
        return Err(Error::invalid("forest needs at least one occurrence"));
    }
    let mut canonical: Vec<usize> = (0..n).collect();
    canonical.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    let x_sorted = x.select_rows(&canonical);
    let sorted_targets = SurvivalTargets {
        times: canonical.iter().map(|&i| targets.times[i]).collect(),
        status: canonical.iter().map(|&i| targets.status[i]).collect(),
        others_leave_first: targets.others_leave_first,
    };
    if (0..p).all(|j| {
        let c = x_sorted.column(j);
        c.iter().all(|&v| v == c[0])
    }) {
        log::warn!("all covariates are constant; the forest reduces to the marginal Nelson–Aalen curve");
    }
    let grower = Grower { x: &x_sorted, targets: &sorted_targets, params, mtry };
    let trees = (0..params.trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed::rng(master_seed, &format!("tree/{b}"));
            let samples: Vec<usize> =
                if params.bootstrap { (0..n).map(|_| rng.random_range(0..n)).collect() } else { (0..n).collect() };
            let mut nodes = Vec::new();
            grower.grow(samples, &mut rng, &mut nodes);
            Tree { nodes }
        })
        .collect();
    Ok(ForestModel { trees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{simulate_synthetic, Scenario, SyntheticConfig};
    use crate::learners::Target;

    #[test]
    fn single_leaf_tree_is_marginal_nelson_aalen() {
        let (data, _) = simulate_synthetic(&SyntheticConfig::new(60, Scenario::Ph, 2)).unwrap();
        let x = DesignMatrix::from_rows(&data.covariate_rows(), 4).unwrap();
        let targets = SurvivalTargets::new(&data, Target::Event);
        let ids: Vec<String> = data.records().iter().map(|r| r.id.clone()).collect();
        let params = ForestParams { trees: 1, min_node_size: 60, bootstrap: false, ..ForestParams::default() };
        let forest = fit_forest(&x, &targets, &ids, &params, 1).unwrap();
        let na = nelson_aalen(&targets);
        let times = [0.5, 2.0, 4.0, 9.0];
        let got = forest.survival(&data.records()[3].covariates, &times);
        for (g, &t) in got.iter().zip(&times) {
            assert!((g - (-na.at(t)).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn record_order_does_not_matter() {
        let (data, _) = simulate_synthetic(&SyntheticConfig::new(120, Scenario::Interaction, 3)).unwrap();
        let params = ForestParams { trees: 20, ..ForestParams::default() };
        let fit = |order: &[usize]| {
            let d = data.subset(order);
            let x = DesignMatrix::from_rows(&d.covariate_rows(), 4).unwrap();
            let ids: Vec<String> = d.records().iter().map(|r| r.id.clone()).collect();
            fit_forest(&x, &SurvivalTargets::new(&d, Target::Event), &ids, &params, 11).unwrap()
        };
        let forward: Vec<usize> = (0..data.len()).collect();
        let backward: Vec<usize> = (0..data.len()).rev().collect();
        let (a, b) = (fit(&forward), fit(&backward));
        let probe = &data.records()[7].covariates;
        assert_eq!(a.survival(probe, &[1.0, 5.0]), b.survival(probe, &[1.0, 5.0]));
    }

    #[test]
    fn curves_are_monotone_and_bounded() {
        let (data, _) = simulate_synthetic(&SyntheticConfig::new(150, Scenario::Ph, 4)).unwrap();
        let x = DesignMatrix::from_rows(&data.covariate_rows(), 4).unwrap();
        let ids: Vec<String> = data.records().iter().map(|r| r.id.clone()).collect();
        let params = ForestParams { trees: 10, ..ForestParams::default() };
        let forest = fit_forest(&x, &SurvivalTargets::new(&data, Target::Event), &ids, &params, 5).unwrap();
        let times: Vec<f64> = (1..40).map(|k| k as f64 * 0.3).collect();
        for r in data.records() {
            let s = forest.survival(&r.covariates, &times);
            assert!(s.windows(2).all(|w| w[1] <= w[0]) && s.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        let (data, _) = simulate_synthetic(&SyntheticConfig::new(20, Scenario::Ph, 4)).unwrap();
        let x = DesignMatrix::from_rows(&data.covariate_rows(), 4).unwrap();
        let ids: Vec<String> = data.records().iter().map(|r| r.id.clone()).collect();
        let targets = SurvivalTargets::new(&data, Target::Event);
        let bad = ForestParams { trees: 0, ..ForestParams::default() };
        assert!(fit_forest(&x, &targets, &ids, &bad, 1).is_err());
        let bad = ForestParams { mtry: Some(9), ..ForestParams::default() };
        assert!(fit_forest(&x, &targets, &ids, &bad, 1).is_err());
    }
}
