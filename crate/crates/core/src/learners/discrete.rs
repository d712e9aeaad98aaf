//! Discrete-time hazard learners fitted on person-period rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{expit, logistic_irls, DesignMatrix};

/// Period count up to which time enters the GLM as a categorical variable.
pub const CATEGORICAL_PERIOD_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeEncoding {
    /// Categorical when the grid has at most 20 periods, cubic otherwise.
    #[default]
    Auto,
    Categorical,
    Cubic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum TimeTerms {
    /// Column index per period; periods without training rows borrow the
    /// nearest earlier period (or the first observed one).
    Categorical { column_of: Vec<usize>, n_columns: usize },
    /// Intercept, s, s², s³ with s = (t + ½) / m.
    Cubic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteGlmModel {
    n_periods: usize,
    time: TimeTerms,
    center: Vec<f64>,
    scale: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub separation_ridge: bool,
}

impl DiscreteGlmModel {
    fn time_width(&self) -> usize {
        match &self.time {
            TimeTerms::Categorical { n_columns, .. } => *n_columns,
            TimeTerms::Cubic => 4,
        }
    }

    fn design_row(&self, period: usize, x: &[f64], out: &mut Vec<f64>) {
        let width = self.time_width();
        out.clear();
        out.resize(width, 0.0);
        match &self.time {
            TimeTerms::Categorical { column_of, .. } => {
                out[column_of[period.min(self.n_periods - 1)]] = 1.0;
            }
            TimeTerms::Cubic => {
                let s = (period as f64 + 0.5) / self.n_periods as f64;
                out.copy_from_slice(&[1.0, s, s * s, s * s * s]);
            }
        }
        out.extend(x.iter().zip(&self.center).zip(&self.scale).map(|((v, c), s)| (v - c) / s));
    }

    pub fn hazard(&self, period: usize, x: &[f64]) -> f64 {
        let mut row = Vec::with_capacity(self.coefficients.len());
        self.design_row(period, x, &mut row);
        expit(row.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum())
    }
}

/// Logistic regression of Δ(t) on time terms plus standardized covariates.
pub fn fit_discrete_glm(
    periods: &[usize],
    x: &DesignMatrix,
    outcome: &[f64],
    n_periods: usize,
    encoding: TimeEncoding,
) -> Result<DiscreteGlmModel> {
    if periods.is_empty() {
        return Err(Error::invalid("discrete hazard model needs person-period rows"));
    }
    let n = periods.len() as f64;
    let p = x.n_cols();
    let (mut center, mut scale) = (vec![0.0; p], vec![1.0; p]);
    for j in 0..p {
        let col = x.column(j);
        let mean = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        if !(sd > 0.0) {
            return Err(Error::invalid(format!("covariate column {j} has zero variance")));
        }
        center[j] = mean;
        scale[j] = sd;
    }
    let categorical = match encoding {
        TimeEncoding::Auto => n_periods <= CATEGORICAL_PERIOD_LIMIT,
        TimeEncoding::Categorical => true,
        TimeEncoding::Cubic => false,
    };
    let time = if categorical {
        let mut seen = vec![false; n_periods];
        for &t in periods {
            seen[t] = true;
        }
        let mut column_of = vec![usize::MAX; n_periods];
        let mut next = 0;
        for t in 0..n_periods {
            if seen[t] {
                column_of[t] = next;
                next += 1;
            } else if t > 0 && column_of[t - 1] != usize::MAX {
                column_of[t] = column_of[t - 1];
            }
        }
        let first = column_of.iter().copied().find(|&c| c != usize::MAX).unwrap_or(0);
        column_of.iter_mut().filter(|c| **c == usize::MAX).for_each(|c| *c = first);
        TimeTerms::Categorical { column_of, n_columns: next }
    } else {
        TimeTerms::Cubic
    };
    let mut model = DiscreteGlmModel { n_periods, time, center, scale, coefficients: vec![], separation_ridge: false };
    let width = model.time_width() + p;
    let mut values = Vec::with_capacity(periods.len() * width);
    let mut row = Vec::with_capacity(width);
    for (i, &t) in periods.iter().enumerate() {
        model.design_row(t, x.row(i), &mut row);
        values.extend_from_slice(&row);
    }
    let fit = logistic_irls(&DesignMatrix::new(periods.len(), width, values)?, outcome, None, None)?;
    model.coefficients = fit.coefficients;
    model.separation_ridge = fit.separation_ridge;
    Ok(model)
}

/// Covariate-free life-table hazards: events / at risk per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeanModel {
    pub hazards: Vec<f64>,
}

pub fn fit_discrete_mean(periods: &[usize], outcome: &[f64], n_periods: usize) -> Result<DiscreteMeanModel> {
    let mut events = vec![0.0; n_periods];
    let mut at_risk = vec![0.0; n_periods];
    for (&t, &y) in periods.iter().zip(outcome) {
        at_risk[t] += 1.0;
        events[t] += y;
    }
    let mut hazards = vec![0.0; n_periods];
    let mut last = None;
    for t in 0..n_periods {
        if at_risk[t] > 0.0 {
            hazards[t] = events[t] / at_risk[t];
            last = Some(hazards[t]);
        } else if let Some(h) = last {
            hazards[t] = h;
        }
    }
    if last.is_none() {
        return Err(Error::invalid("discrete mean model needs person-period rows"));
    }
    Ok(DiscreteMeanModel { hazards })
}
