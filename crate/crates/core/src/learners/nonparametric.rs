//! Product-limit and Nelson–Aalen estimators with an explicit tie rule.

use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;

use super::Target;

/// Follow-up times with the indicator of the modeled occurrence (event or
/// censoring) and the tie rule at shared times.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalTargets {
    pub times: Vec<f64>,
    pub status: Vec<bool>,
    /// Whether non-target exits at a time leave the risk set before the
    /// target occurrences at that time. True for the censoring target, so
    /// that events always precede censorings.
    pub others_leave_first: bool,
}

impl SurvivalTargets {
    pub fn new(data: &SurvivalDataset, target: Target) -> Self {
        let flip = target == Target::Censoring;
        Self {
            times: data.times(),
            status: data.events().into_iter().map(|e| e != flip).collect(),
            others_leave_first: flip,
        }
    }

    pub fn n_occurrences(&self) -> usize {
        self.status.iter().filter(|&&s| s).count()
    }

    /// (time, occurrences, at risk) at each distinct occurrence time.
    pub fn risk_table(&self) -> Vec<(f64, f64, f64)> {
        let mut order: Vec<usize> = (0..self.times.len()).collect();
        order.sort_by(|&a, &b| self.times[a].total_cmp(&self.times[b]));
        let mut remaining = self.times.len() as f64;
        let mut table = Vec::new();
        let mut i = 0;
        while i < order.len() {
            let t = self.times[order[i]];
            let mut j = i;
            let (mut hits, mut others) = (0.0, 0.0);
            while j < order.len() && self.times[order[j]] == t {
                if self.status[order[j]] {
                    hits += 1.0;
                } else {
                    others += 1.0;
                }
                j += 1;
            }
            if hits > 0.0 {
                let at_risk = if self.others_leave_first { remaining - others } else { remaining };
                table.push((t, hits, at_risk));
            }
            remaining -= hits + others;
            i = j;
        }
        table
    }
}

/// Right-continuous step function: `values[k]` holds on `[times[k], times[k+1])`
/// and `initial` before `times[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCurve {
    pub initial: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepCurve {
    pub fn at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => self.initial,
            k => self.values[k - 1],
        }
    }

    /// Value just before `t`.
    pub fn left_limit(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s < t) {
            0 => self.initial,
            k => self.values[k - 1],
        }
    }

    pub fn last_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

pub fn kaplan_meier(targets: &SurvivalTargets) -> StepCurve {
    let mut s = 1.0;
    let (times, values) = targets
        .risk_table()
        .into_iter()
        .map(|(t, d, n)| {
            s -= s * d / n;
            (t, s)
        })
        .unzip();
    StepCurve { initial: 1.0, times, values }
}

pub fn nelson_aalen(targets: &SurvivalTargets) -> StepCurve {
    let mut cum = 0.0;
    let (times, values) = targets
        .risk_table()
        .into_iter()
        .map(|(t, d, n)| {
            cum += d / n;
            (t, cum)
        })
        .unzip();
    StepCurve { initial: 0.0, times, values }
}
