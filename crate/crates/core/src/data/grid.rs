use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evenly spaced evaluation times v, 2v, ..., τ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    spacing: f64,
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn points(&self) -> &[f64] {
        &self.points
    }
    pub fn len(&self) -> usize {
        self.points.len()
    }
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Grid of `n_points` equally spaced times ending exactly at `tau`.
pub fn make_grid(tau: f64, n_points: usize) -> Result<TimeGrid> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid(format!("grid horizon must be positive, got {tau}")));
    }
    if n_points < 2 {
        return Err(Error::invalid(format!("grid needs at least 2 points, got {n_points}")));
    }
    let spacing = tau / n_points as f64;
    let mut points: Vec<f64> = (1..=n_points).map(|j| tau * j as f64 / n_points as f64).collect();
    points[n_points - 1] = tau;
    Ok(TimeGrid { horizon: tau, spacing, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_points_to_ten() {
        let g = make_grid(10.0, 100).unwrap();
        assert!((g.spacing() - 0.1).abs() < 1e-15);
        assert_eq!(*g.points().last().unwrap(), 10.0);
        assert!(g.points().windows(2).all(|w| w[1] > w[0]));
        assert!(g.points().windows(2).all(|w| ((w[1] - w[0]) - 0.1).abs() < 1e-12));
    }

    #[test]
    fn two_points_and_too_few() {
        assert_eq!(make_grid(1.0, 2).unwrap().points(), &[0.5, 1.0]);
        assert!(make_grid(10.0, 1).is_err());
        assert!(make_grid(0.0, 5).is_err());
    }
}
