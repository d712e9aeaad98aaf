//! Optimization kernels: non-negative least squares, logistic IRLS, Cox
//! partial likelihood (Newton and lasso coordinate descent) and the
//! logit stacking fit.

mod cox;
mod design;
mod lasso;
mod logistic;
mod nnls;

pub use cox::{cox_partial_loglik, cox_score, newton_cox, CoxModel};
pub use design::DesignMatrix;
pub use lasso::{coord_descent_cox_lasso, cox_lasso_path_max, CoxLassoFit, LambdaChoice};
pub use logistic::{constrained_logit_stack, expit, logistic_irls, logit_clipped, LogisticFit, HAZARD_CLIP};
pub use nnls::{nnls, simplex_normalize, NnlsSolution};

use nalgebra::{DMatrix, DVector};

/// Solves `h x = g` for a symmetric positive-definite `h` (row-major p×p).
/// Returns `None` when `h` is not numerically positive definite.
pub(crate) fn solve_spd(h: &[f64], g: &[f64]) -> Option<Vec<f64>> {
    let p = g.len();
    let m = DMatrix::from_row_slice(p, p, h);
    let chol = m.cholesky()?;
    // Reject near-singular systems: the Cholesky pivots square to the
    // eigenvalue scale, so compare their spread.
    let l = chol.l();
    let diag: Vec<f64> = (0..p).map(|i| l[(i, i)]).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if p > 0 && (min / max).powi(2) < 1e-12 {
        return None;
    }
    Some(chol.solve(&DVector::from_column_slice(g)).iter().copied().collect())
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
