//! Lawson–Hanson active-set non-negative least squares.
//!
//! Works on the weighted Gram system (AᵀWA, AᵀWy) scaled by 1/Σw, which keeps
//! every iteration O(p³) regardless of the number of rows; stacking designs
//! are tall and narrow.

use nalgebra::{DMatrix, DVector};

use super::{sup_norm, DesignMatrix};
use crate::error::{Error, Result};

const KKT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub coefficients: Vec<f64>,
    /// Weighted residual sum of squares Σ wᵢ(yᵢ − Aᵢα)².
    pub objective: f64,
    /// Indices whose coefficient is exactly zero.
    pub active_set: Vec<usize>,
    /// Gradient of ½ Σ wᵢ(yᵢ − Aᵢα)² / Σ wᵢ at the solution.
    pub gradient: Vec<f64>,
}

impl NnlsSolution {
    /// Whether the KKT conditions hold to `1e-8`.
    pub fn satisfies_kkt(&self) -> bool {
        self.coefficients.iter().zip(&self.gradient).all(|(&c, &g)| {
            if c > 0.0 {
                g.abs() <= KKT_TOL
            } else {
                g >= -KKT_TOL
            }
        })
    }
}

struct Gram {
    ata: Vec<f64>,
    aty: Vec<f64>,
    p: usize,
}

impl Gram {
    fn build(a: &DesignMatrix, y: &[f64]) -> Result<Self> {
        let p = a.n_cols();
        let total: f64 = (0..a.n_rows()).map(|i| a.weight(i)).sum();
        if total <= 0.0 {
            return Err(Error::invalid("least squares needs at least one row with positive weight"));
        }
        let mut ata = vec![0.0; p * p];
        let mut aty = vec![0.0; p];
        for i in 0..a.n_rows() {
            let w = a.weight(i) / total;
            if w == 0.0 {
                continue;
            }
            let row = a.row(i);
            for j in 0..p {
                aty[j] += w * row[j] * y[i];
                for k in j..p {
                    ata[j * p + k] += w * row[j] * row[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                ata[j * p + k] = ata[k * p + j];
            }
        }
        Ok(Self { ata, aty, p })
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (0..self.p)
            .map(|j| (0..self.p).map(|k| self.ata[j * self.p + k] * x[k]).sum::<f64>() - self.aty[j])
            .collect()
    }

    /// Unconstrained least squares restricted to the passive columns.
    fn solve_passive(&self, passive: &[usize]) -> Vec<f64> {
        let m = passive.len();
        let sub = DMatrix::from_fn(m, m, |r, c| self.ata[passive[r] * self.p + passive[c]]);
        let rhs = DVector::from_fn(m, |r, _| self.aty[passive[r]]);
        let sol = match sub.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => sub.svd(true, true).solve(&rhs, 1e-13).unwrap_or_else(|_| DVector::zeros(m)),
        };
        let mut full = vec![0.0; self.p];
        for (r, &j) in passive.iter().enumerate() {
            full[j] = sol[r];
        }
        full
    }
}

/// Minimizes Σ wᵢ(yᵢ − Aᵢα)² subject to α ≥ 0, using the design's row weights.
pub fn nnls(a: &DesignMatrix, y: &[f64]) -> Result<NnlsSolution> {
    if a.n_rows() == 0 {
        return Err(Error::invalid("least squares needs at least one row"));
    }
    if y.len() != a.n_rows() {
        return Err(Error::invalid(format!("response has {} entries, design has {} rows", y.len(), a.n_rows())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite response value"));
    }
    let gram = Gram::build(a, y)?;
    let p = gram.p;
    let mut x = vec![0.0; p];
    let mut passive: Vec<usize> = Vec::new();
    let mut blocked = vec![false; p];
    let tol = 1e-14 * (1.0 + sup_norm(&gram.aty));

    for _outer in 0..(3 * p + 30) {
        let grad = gram.gradient(&x);
        // Most negative gradient among zero coefficients enters.
        let candidate = (0..p)
            .filter(|j| !passive.contains(j) && !blocked[*j])
            .map(|j| (j, -grad[j]))
            .filter(|&(_, descent)| descent > tol)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let Some((entering, _)) = candidate else { break };
        passive.push(entering);
        passive.sort_unstable();

        let mut z = gram.solve_passive(&passive);
        if z[entering] <= 0.0 {
            // Numerically dependent column: adding it cannot help.
            passive.retain(|&j| j != entering);
            blocked[entering] = true;
            continue;
        }
        blocked.iter_mut().for_each(|b| *b = false);

        for _inner in 0..(3 * p + 30) {
            if passive.iter().all(|&j| z[j] > 0.0) {
                break;
            }
            let step = passive
                .iter()
                .filter(|&&j| z[j] <= 0.0)
                .map(|&j| x[j] / (x[j] - z[j]))
                .fold(f64::INFINITY, f64::min);
            for &j in &passive {
                x[j] += step * (z[j] - x[j]);
            }
            passive.retain(|&j| x[j] > 1e-15);
            for j in 0..p {
                if !passive.contains(&j) {
                    x[j] = 0.0;
                }
            }
            z = gram.solve_passive(&passive);
        }
        x = z.iter().map(|v| v.max(0.0)).collect();
        for j in 0..p {
            if !passive.contains(&j) {
                x[j] = 0.0;
            }
        }
    }

    let gradient = gram.gradient(&x);
    let active_set = (0..p).filter(|&j| x[j] == 0.0).collect();
    Ok(NnlsSolution { objective: a.weighted_rss(y, &x), coefficients: x, active_set, gradient })
}

/// Rescales non-negative coefficients to sum to one.
pub fn simplex_normalize(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid("simplex normalization needs finite non-negative coefficients"));
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateEnsemble);
    }
    let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    // Push the rounding residue onto the largest weight.
    let residue = 1.0 - w.iter().sum::<f64>();
    if let Some(j) = (0..w.len()).max_by(|&a, &b| w[a].total_cmp(&w[b])) {
        w[j] += residue;
    }
    Ok(w)
}
