//! Alternating event/censoring ensemble fits.

use serde::{Deserialize, Serialize};

use super::{initial_censoring, pseudo_fg, pseudo_fs, CvCurves, PseudoOutcomeMatrix};
use crate::data::{SurvivalDataset, TimeGrid};
use crate::error::{Error, Result};
use crate::numerics::{nnls, simplex_normalize, DesignMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationConfig {
    /// Stop once the largest change in the event ensemble's curves over all
    /// person-time pairs falls below this.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub grid: TimeGrid,
}

impl IterationConfig {
    pub fn new(grid: TimeGrid) -> Self {
        Self { epsilon: 1e-5, max_iterations: 20, grid }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid(format!("convergence threshold must be positive, got {}", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("at least one iteration is required"));
        }
        Ok(())
    }
}

/// Simplex-normalized NNLS coefficients with the meta-objective evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights {
    pub weights: Vec<f64>,
    pub raw: Vec<f64>,
    /// Learner used alone when every raw coefficient was zero.
    pub fallback: Option<usize>,
    /// Σ (f(i,t) − Σⱼ wⱼ Ŝⱼ(t|xᵢ))² over person-times at `weights`.
    pub objective: f64,
    pub vertex_objectives: Vec<f64>,
}

fn fit_simplex(pseudo: &PseudoOutcomeMatrix, cv: &CvCurves) -> Result<SimplexWeights> {
    let p = cv.n_learners();
    let rows = pseudo.values.len();
    if cv.curves.iter().any(|c| c.values().len() != rows) {
        return Err(Error::invalid("pseudo-outcomes and curves are not aligned"));
    }
    let mut values = Vec::with_capacity(rows * p);
    for r in 0..rows {
        values.extend(cv.curves.iter().map(|c| c.values()[r]));
    }
    let a = DesignMatrix::new(rows, p, values)?;
    let y = &pseudo.values;
    let vertex = |j: usize| {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        e
    };
    let vertex_objectives: Vec<f64> = (0..p).map(|j| a.weighted_rss(y, &vertex(j))).collect();
    let (raw, weights, fallback) = if p == 1 {
        (vec![1.0], vec![1.0], None)
    } else {
        let sol = nnls(&a, y)?;
        match simplex_normalize(&sol.coefficients) {
            Ok(w) => (sol.coefficients, w, None),
            Err(Error::DegenerateEnsemble) => {
                let best = (0..p).min_by(|&i, &j| vertex_objectives[i].total_cmp(&vertex_objectives[j])).unwrap();
                log::warn!("all {} ensemble coefficients are zero; using learner '{}'", cv.target, cv.labels[best]);
                (sol.coefficients, vertex(best), Some(best))
            }
            Err(e) => return Err(e),
        }
    };
    Ok(SimplexWeights { objective: a.weighted_rss(y, &weights), weights, raw, fallback, vertex_objectives })
}

/// NNLS of f_G on the event learners' curves, pooled over the grid.
pub fn fit_event_ensemble(f_g: &PseudoOutcomeMatrix, event: &CvCurves) -> Result<SimplexWeights> {
    fit_simplex(f_g, event)
}

/// NNLS of f_S on the censoring learners' curves, pooled over the grid.
pub fn fit_censoring_ensemble(f_s: &PseudoOutcomeMatrix, censoring: &CvCurves) -> Result<SimplexWeights> {
    fit_simplex(f_s, censoring)
}

/// Final event (α) and censoring (β) weights with the iteration history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualEnsemble {
    pub alpha: SimplexWeights,
    pub beta: SimplexWeights,
    pub iterations: usize,
    /// Largest change of the event ensemble's curves at each iteration.
    pub deltas: Vec<f64>,
    pub converged: bool,
    /// Pseudo-outcome denominators raised to the floor, summed over
    /// iterations.
    pub floored_fg: usize,
    pub floored_fs: usize,
}

struct Step {
    beta: SimplexWeights,
    alpha: SimplexWeights,
    delta: f64,
    floored_fs: usize,
    floored_fg: usize,
}

/// One pass: f_S from the current event ensemble, refit β, f_G from the
/// censoring ensemble, refit α.
fn step(data: &SurvivalDataset, event: &CvCurves, censoring: &CvCurves, grid: &[f64], alpha: &[f64]) -> Result<Step> {
    let f_s = pseudo_fs(data, &event.combine_own_time(alpha), grid)?;
    let beta = fit_censoring_ensemble(&f_s, censoring)?;
    let f_g = pseudo_fg(data, &censoring.combine_own_time(&beta.weights), grid)?;
    let next = fit_event_ensemble(&f_g, event)?;
    let before = event.combine(alpha);
    let after = event.combine(&next.weights);
    let delta = before.iter().zip(&after).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(Step { beta, alpha: next, delta, floored_fs: f_s.floored, floored_fg: f_g.floored })
}

fn check_inputs(data: &SurvivalDataset, event: &CvCurves, censoring: &CvCurves, grid: &TimeGrid) -> Result<()> {
    for cv in [event, censoring] {
        if cv.n_individuals() != data.len() || cv.curves.iter().any(|c| c.times() != grid.points()) {
            return Err(Error::invalid(format!("{} curves do not match the data and grid", cv.target)));
        }
    }
    Ok(())
}

/// Runs the alternating fits from the marginal censoring Kaplan–Meier start.
///
/// Without convergence the iterate with the smallest change is returned
/// and flagged.
pub fn iterate(
    config: &IterationConfig,
    event: &CvCurves,
    censoring: &CvCurves,
    data: &SurvivalDataset,
) -> Result<DualEnsemble> {
    config.validate()?;
    check_inputs(data, event, censoring, &config.grid)?;
    let grid = config.grid.points();
    let f_g = pseudo_fg(data, &initial_censoring(data), grid)?;
    let mut alpha = fit_event_ensemble(&f_g, event)?;
    let mut floored_fg = f_g.floored;
    let mut floored_fs = 0;
    let mut deltas = Vec::new();
    let mut best: Option<(f64, SimplexWeights, SimplexWeights, usize)> = None;

    for it in 1..=config.max_iterations {
        let s = step(data, event, censoring, grid, &alpha.weights)?;
        floored_fg += s.floored_fg;
        floored_fs += s.floored_fs;
        deltas.push(s.delta);
        alpha = s.alpha;
        if best.as_ref().is_none_or(|b| s.delta < b.0) {
            best = Some((s.delta, alpha.clone(), s.beta.clone(), it));
        }
        if s.delta < config.epsilon {
            return Ok(DualEnsemble {
                alpha,
                beta: s.beta,
                iterations: it,
                deltas,
                converged: true,
                floored_fg,
                floored_fs,
            });
        }
    }
    let (_, alpha, beta, _) = best.expect("at least one iteration ran");
    log::warn!(
        "event/censoring ensembles did not converge within {} iterations (last change {:.3e})",
        config.max_iterations,
        deltas.last().copied().unwrap_or(f64::NAN)
    );
    Ok(DualEnsemble {
        alpha,
        beta,
        iterations: config.max_iterations,
        deltas,
        converged: false,
        floored_fg,
        floored_fs,
    })
}

/// One further pass starting from `dual`'s event weights.
pub fn continue_iteration(
    config: &IterationConfig,
    event: &CvCurves,
    censoring: &CvCurves,
    data: &SurvivalDataset,
    dual: &DualEnsemble,
) -> Result<DualEnsemble> {
    check_inputs(data, event, censoring, &config.grid)?;
    let s = step(data, event, censoring, config.grid.points(), &dual.alpha.weights)?;
    let mut deltas = dual.deltas.clone();
    deltas.push(s.delta);
    Ok(DualEnsemble {
        alpha: s.alpha,
        beta: s.beta,
        iterations: dual.iterations + 1,
        deltas,
        converged: s.delta < config.epsilon,
        floored_fg: dual.floored_fg + s.floored_fg,
        floored_fs: dual.floored_fs + s.floored_fs,
    })
}
