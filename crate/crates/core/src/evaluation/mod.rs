//! Test-set performance at a fixed horizon τ: IPCW Brier and scaled
//! Brier scores, Uno's concordance, cumulative/dynamic AUC and a
//! calibration table, plus integrated squared error against known curves.


use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::discrete_sl::cap_weight;
use crate::error::{Error, Result};
use crate::learners::{kaplan_meier, CurveMatrix, SurvivalPredictor, SurvivalTargets, Target};

/// Inverse-probability-of-censoring weights from the test set's own
/// censoring Kaplan–Meier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoringWeights {
    pub horizon: f64,
    /// 1/Ĝ(T̃ᵢ⁻) for events by τ, 1/Ĝ(τ) for those still under
    /// observation after τ, 0 for those censored by τ.
    pub weights: Vec<f64>,
    /// Weights that hit the cap.
    pub capped: usize,
}

impl CensoringWeights {
    /// Whether individual `i` is a case (event by τ).
    fn is_case(data: &SurvivalDataset, i: usize, tau: f64) -> bool {
        let r = data.record(i);
        r.event && r.time <= tau
    }
}

fn check_horizon(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("evaluation horizon must be positive, got {tau}")))
    }
}

pub fn censoring_weights(test: &SurvivalDataset, tau: f64) -> Result<CensoringWeights> {
    check_horizon(tau)?;
    let g = kaplan_meier(&SurvivalTargets::new(test, Target::Censoring));
    let at_tau = g.at(tau);
    if at_tau <= 0.0 {
        return Err(Error::invalid(format!(
            "the test-set censoring survival is zero at the horizon {tau}; choose an earlier horizon"
        )));
    }
    let mut capped = 0;
    let weights = test
        .records()
        .iter()
        .map(|r| {
            let g_value = match (r.time <= tau, r.event) {
                (true, true) => g.left_limit(r.time),
                (true, false) => return 0.0,
                (false, _) => at_tau,
            };
            let (w, hit) = cap_weight(g_value);
            capped += usize::from(hit);
            w
        })
        .collect();
    Ok(CensoringWeights { horizon: tau, weights, capped })
}

fn check_predictions(predictions: &[f64], test: &SurvivalDataset, weights: &CensoringWeights) -> Result<()> {
    if predictions.len() != test.len() || weights.weights.len() != test.len() {
        return Err(Error::invalid("one prediction and one weight per test individual are required"));
    }
    if let Some(p) = predictions.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("survival predictions must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// (1/n) Σ wᵢ (I(T̃ᵢ > τ) − Ŝ(τ | xᵢ))².
pub fn brier_ipcw(predictions: &[f64], test: &SurvivalDataset, weights: &CensoringWeights) -> Result<f64> {
    check_predictions(predictions, test, weights)?;
    let tau = weights.horizon;
    let total: f64 = test
        .records()
        .iter()
        .zip(predictions)
        .zip(&weights.weights)
        .map(|((r, &s), &w)| {
            let alive = if r.time > tau { 1.0 } else { 0.0 };
            w * (alive - s).powi(2)
        })
        .sum();
    Ok(total / test.len() as f64)
}

/// The Brier score when everyone is given the test-set Kaplan–Meier
/// survival at τ.
pub fn reference_brier(test: &SurvivalDataset, weights: &CensoringWeights) -> Result<f64> {
    let km = kaplan_meier(&SurvivalTargets::new(test, Target::Event)).at(weights.horizon);
    brier_ipcw(&vec![km; test.len()], test, weights)
}

/// 100 · (1 − brier / reference), in percent.
pub fn scaled_brier(brier: f64, test: &SurvivalDataset, weights: &CensoringWeights) -> Result<f64> {
    let reference = reference_brier(test, weights)?;
    if reference <= 0.0 {
        return Err(Error::invalid("the Kaplan–Meier reference Brier score is zero; scaling is undefined"));
    }
    Ok(100.0 * (1.0 - brier / reference))
}

/// 1 if `a` is ranked riskier than `b`, ½ for a tie, else 0. Risk is
/// 1 − Ŝ(τ), so lower survival means higher risk.
fn concordance(survival_a: f64, survival_b: f64) -> f64 {
    if survival_a < survival_b {
        1.0
    } else if survival_a == survival_b {
        0.5
    } else {
        0.0
    }
}

/// Uno's C up to τ in percent: pairs with an observed event before the
/// other individual's time, each weighted by Ĝ(T̃ᵢ⁻)⁻².
pub fn uno_c(predictions: &[f64], test: &SurvivalDataset, weights: &CensoringWeights) -> Result<f64> {
    check_predictions(predictions, test, weights)?;
    let tau = weights.horizon;
    let records = test.records();
    let (mut num, mut den) = (0.0, 0.0);
    for (i, ri) in records.iter().enumerate() {
        if !CensoringWeights::is_case(test, i, tau) {
            continue;
        }
        let w = weights.weights[i].powi(2);
        for (j, rj) in records.iter().enumerate() {
            if ri.time < rj.time {
                num += w * concordance(predictions[i], predictions[j]);
                den += w;
            }
        }
    }
    if den == 0.0 {
        return Err(Error::invalid("no comparable pairs before the horizon"));
    }
    Ok(100.0 * num / den)
}

/// Cumulative/dynamic AUC at τ in percent: cases have an event by τ,
/// controls are still under observation after τ; both carry their IPCW
/// weights.
pub fn auc_t(predictions: &[f64], test: &SurvivalDataset, weights: &CensoringWeights) -> Result<f64> {
    check_predictions(predictions, test, weights)?;
    let tau = weights.horizon;
    let cases: Vec<usize> = (0..test.len()).filter(|&i| CensoringWeights::is_case(test, i, tau)).collect();
    let controls: Vec<usize> = (0..test.len()).filter(|&i| test.record(i).time > tau).collect();
    if cases.is_empty() || controls.is_empty() {
        return Err(Error::invalid(format!(
            "AUC at {tau} needs at least one case and one control (found {} and {})",
            cases.len(),
            controls.len()
        )));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &i in &cases {
        for &j in &controls {
            let w = weights.weights[i] * weights.weights[j];
            num += w * concordance(predictions[i], predictions[j]);
            den += w;
        }
    }
    Ok(100.0 * num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    /// Smallest and largest predicted risk 1 − Ŝ(τ) in the bin.
    pub risk_range: (f64, f64),
    pub mean_predicted_risk: f64,
    /// 1 − Kaplan–Meier survival at τ among the bin's members.
    pub observed_risk: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub bins: Vec<CalibrationBin>,
    /// Some quantile bins were empty or held fewer than two individuals
    /// and were merged into a neighbour.
    pub merged: bool,
}

/// Quantile bins of predicted risk; tied predictions never straddle a
/// boundary.
pub fn calibration_table(predictions: &[f64], test: &SurvivalDataset, tau: f64, bins: usize) -> Result<CalibrationTable> {
    check_horizon(tau)?;
    if bins == 0 {
        return Err(Error::invalid("at least one calibration bin is required"));
    }
    if predictions.len() != test.len() || test.is_empty() {
        return Err(Error::invalid("one prediction per test individual is required"));
    }
    if let Some(p) = predictions.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("survival predictions must lie in [0, 1], got {p}")));
    }
    let n = test.len();
    let risk: Vec<f64> = predictions.iter().map(|s| 1.0 - s).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| risk[a].total_cmp(&risk[b]).then(a.cmp(&b)));

    // Group boundaries at the quantile positions, pushed past ties.
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    let mut merged = false;
    for b in 1..=bins {
        let mut end = (b * n).div_ceil(bins).max(start);
        while end > start && end < n && risk[order[end]] == risk[order[end - 1]] {
            end += 1;
        }
        if end > start {
            groups.push((start, end));
            start = end;
        }
    }
    if groups.len() < bins {
        merged = true;
    }
    // Fold groups of fewer than two into their left neighbour (or the right
    // one for the first group).
    let mut i = 0;
    while groups.len() > 1 && i < groups.len() {
        if groups[i].1 - groups[i].0 < 2 {
            merged = true;
            if i == 0 {
                groups[1].0 = groups[0].0;
                groups.remove(0);
            } else {
                groups[i - 1].1 = groups[i].1;
                groups.remove(i);
            }
        } else {
            i += 1;
        }
    }
    if merged {
        log::warn!("calibration: {} of {bins} requested bins remain after merging small or tied groups", groups.len());
    }

    let bins = groups
        .into_iter()
        .map(|(a, b)| {
            let members: Vec<usize> = order[a..b].to_vec();
            let subset = test.subset(&members);
            let km = kaplan_meier(&SurvivalTargets::new(&subset, Target::Event)).at(tau);
            let r: Vec<f64> = members.iter().map(|&i| risk[i]).collect();
            CalibrationBin {
                risk_range: (r[0], r[r.len() - 1]),
                mean_predicted_risk: r.iter().sum::<f64>() / r.len() as f64,
                observed_risk: 1.0 - km,
                count: members.len(),
            }
        })
        .collect();
    Ok(CalibrationTable { bins, merged })
}

/// All test-set metrics at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub horizon: f64,
    pub n: usize,
    pub brier: f64,
    /// Percent.
    pub scaled_brier: f64,
    /// Percent.
    pub c_index: f64,
    /// Percent.
    pub auc_t: f64,
    pub calibration: CalibrationTable,
    pub capped_weights: usize,
}

/// Scores survival predictions at τ on `test`.
pub fn evaluate(predictions: &[f64], test: &SurvivalDataset, tau: f64) -> Result<MetricReport> {
    let weights = censoring_weights(test, tau)?;
    let brier = brier_ipcw(predictions, test, &weights)?;
    Ok(MetricReport {
        horizon: tau,
        n: test.len(),
        scaled_brier: scaled_brier(brier, test, &weights)?,
        brier,
        c_index: uno_c(predictions, test, &weights)?,
        auc_t: auc_t(predictions, test, &weights)?,
        calibration: calibration_table(predictions, test, tau, 10)?,
        capped_weights: weights.capped,
    })
}

/// Predicts Ŝ(τ | x) for every test individual and scores it.
pub fn evaluate_predictor<P: SurvivalPredictor + ?Sized>(
    predictor: &P,
    test: &SurvivalDataset,
    tau: f64,
) -> Result<MetricReport> {
    let s = predictor.survival_matrix(&test.covariate_rows(), &[tau])?;
    evaluate(s.values(), test, tau)
}

/// Mean over individuals of Σₜ v (Ŝ(t | xᵢ) − S(t | xᵢ))² on a shared grid.
pub fn integrated_squared_error(predicted: &CurveMatrix, oracle: &CurveMatrix, spacing: f64) -> Result<f64> {
    if predicted.times() != oracle.times() || predicted.n_rows() != oracle.n_rows() {
        return Err(Error::invalid("predicted and oracle curves are not on the same grid"));
    }
    if predicted.n_rows() == 0 {
        return Err(Error::invalid("integrated squared error over no individuals"));
    }
    let total: f64 = predicted.values().iter().zip(oracle.values()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(spacing * total / predicted.n_rows() as f64)
}
