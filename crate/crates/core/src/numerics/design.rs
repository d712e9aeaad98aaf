use crate::error::{Error, Result};

/// Dense row-major design matrix with optional non-negative row weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl DesignMatrix {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::invalid(format!(
                "design matrix has {} values, expected {n_rows}x{n_cols}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite design entry at row {}, column {}",
                i / n_cols.max(1),
                i % n_cols.max(1)
            )));
        }
        Ok(Self { n_rows, n_cols, values, weights: None })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], n_cols: usize) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(Error::invalid(format!("design row {i} has {} columns, expected {n_cols}", r.len())));
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), n_cols, values)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.n_rows {
            return Err(Error::invalid("weight vector length differs from row count"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }
    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }
    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows).map(|i| self.row(i))
    }

    /// Σᵢ wᵢ (yᵢ − Aᵢ·coef)².
    pub fn weighted_rss(&self, y: &[f64], coef: &[f64]) -> f64 {
        (0..self.n_rows)
            .map(|i| {
                let fit: f64 = self.row(i).iter().zip(coef).map(|(a, c)| a * c).sum();
                self.weight(i) * (y[i] - fit).powi(2)
            })
            .sum()
    }

    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        let values = rows.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        let weights = self.weights.as_ref().map(|w| rows.iter().map(|&i| w[i]).collect());
        DesignMatrix { n_rows: rows.len(), n_cols: self.n_cols, values, weights }
    }

    /// Columns restricted to `cols`, keeping weights.
    pub fn select_columns(&self, cols: &[usize]) -> DesignMatrix {
        let mut values = Vec::with_capacity(self.n_rows * cols.len());
        for i in 0..self.n_rows {
            values.extend(cols.iter().map(|&j| self.get(i, j)));
        }
        DesignMatrix { n_rows: self.n_rows, n_cols: cols.len(), values, weights: self.weights.clone() }
    }
}
