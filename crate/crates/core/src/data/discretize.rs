//! Person-period expansion for discrete-time hazard models.
//!
//! Periods are half-open on the left: period `t` covers `(b_t, b_{t+1}]`, so an
//! exit exactly on a boundary belongs to the earlier period.

use serde::{Deserialize, Serialize};

use super::SurvivalDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscretizationScheme {
    EqualWidth,
    /// Cut points at quantiles of the uncensored event times up to τ.
    EventQuantile,
}

/// Period boundaries `0 = b_0 < b_1 < ... < b_m = τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodGrid {
    boundaries: Vec<f64>,
}

impl PeriodGrid {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 || boundaries[0] != 0.0 {
            return Err(Error::invalid("period boundaries must start at 0 and contain at least one period"));
        }
        if boundaries.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::invalid("period boundaries must be strictly increasing and finite"));
        }
        Ok(Self { boundaries })
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn n_periods(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.boundaries.last().unwrap()
    }

    /// Period containing time `t` under the closed-right convention, or
    /// `None` when `t` lies beyond the horizon.
    pub fn period_of(&self, t: f64) -> Option<usize> {
        if t > self.horizon() {
            return None;
        }
        Some(self.boundaries[1..].iter().filter(|&&b| b < t).count())
    }

    /// Number of whole periods ending at or before `t`.
    pub fn completed_periods(&self, t: f64) -> usize {
        let slack = 1e-12 * t.abs().max(1.0);
        self.boundaries[1..].iter().filter(|&&b| b <= t + slack).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongIndividual {
    pub id: String,
    pub time: f64,
    pub event: bool,
    pub covariates: Vec<f64>,
    /// Last period in which the individual is at risk.
    pub exit_period: usize,
}

impl LongIndividual {
    pub fn n_rows(&self) -> usize {
        self.exit_period + 1
    }
}

/// One person-period row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongFormatRow {
    /// Index into [`LongFormatDataset::individuals`].
    pub individual: usize,
    pub period: usize,
    /// Δ(t): event observed at the end of this period.
    pub period_event: bool,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongFormatDataset {
    periods: PeriodGrid,
    individuals: Vec<LongIndividual>,
    rows: Vec<LongFormatRow>,
    covariate_names: Vec<String>,
}

impl LongFormatDataset {
    pub fn periods(&self) -> &PeriodGrid {
        &self.periods
    }
    pub fn individuals(&self) -> &[LongIndividual] {
        &self.individuals
    }
    pub fn rows(&self) -> &[LongFormatRow] {
        &self.rows
    }
    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }
    pub fn covariates(&self, row: &LongFormatRow) -> &[f64] {
        &self.individuals[row.individual].covariates
    }

    /// Long data restricted to the given individuals (indices into
    /// `individuals()`), renumbered in the given order.
    pub fn restrict(&self, individuals: &[usize]) -> LongFormatDataset {
        let kept: Vec<LongIndividual> = individuals.iter().map(|&i| self.individuals[i].clone()).collect();
        let rows = expand_rows(&self.periods, &kept);
        LongFormatDataset {
            periods: self.periods.clone(),
            individuals: kept,
            rows,
            covariate_names: self.covariate_names.clone(),
        }
    }

    /// Builds long data on an existing period grid.
    pub fn from_dataset(data: &SurvivalDataset, periods: PeriodGrid) -> Self {
        let tau = periods.horizon();
        let individuals: Vec<LongIndividual> = data
            .records()
            .iter()
            .map(|r| LongIndividual {
                id: r.id.clone(),
                time: r.time,
                event: r.event,
                covariates: r.covariates.clone(),
                exit_period: periods.period_of(r.time).unwrap_or(periods.n_periods() - 1),
            })
            .collect();
        let _ = tau;
        let rows = expand_rows(&periods, &individuals);
        LongFormatDataset { periods, individuals, rows, covariate_names: data.covariate_names().to_vec() }
    }
}

fn expand_rows(periods: &PeriodGrid, individuals: &[LongIndividual]) -> Vec<LongFormatRow> {
    let b = periods.boundaries();
    let tau = periods.horizon();
    let mut rows = Vec::with_capacity(individuals.iter().map(LongIndividual::n_rows).sum());
    for (i, ind) in individuals.iter().enumerate() {
        let exits_with_event = ind.event && ind.time <= tau;
        for t in 0..=ind.exit_period {
            rows.push(LongFormatRow {
                individual: i,
                period: t,
                period_event: exits_with_event && t == ind.exit_period,
                start: b[t],
                end: b[t + 1],
            });
        }
    }
    rows
}

fn quantile_boundaries(data: &SurvivalDataset, tau: f64, m: usize) -> Result<Vec<f64>> {
    let mut event_times: Vec<f64> = data.records().iter().filter(|r| r.event && r.time <= tau).map(|r| r.time).collect();
    event_times.sort_by(f64::total_cmp);
    let mut distinct = event_times.clone();
    distinct.dedup();
    if distinct.len() < m {
        return Err(Error::invalid(format!(
            "only {} distinct event times up to the horizon; quantile bins would be empty, use fewer than {m} periods",
            distinct.len()
        )));
    }
    let n = event_times.len();
    let mut boundaries = vec![0.0];
    for j in 1..m {
        let pos = ((j * n) as f64 / m as f64).ceil() as usize;
        let cut = event_times[pos.saturating_sub(1)];
        // Tied cut points merge their bins.
        if cut > *boundaries.last().unwrap() && cut < tau {
            boundaries.push(cut);
        }
    }
    boundaries.push(tau);
    Ok(boundaries)
}

/// Expands `data` into person-period rows over `m` periods up to `tau`.
pub fn discretize(data: &SurvivalDataset, tau: f64, m: usize, scheme: DiscretizationScheme) -> Result<LongFormatDataset> {
    if m < 2 {
        return Err(Error::invalid(format!("need at least 2 periods, got {m}")));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid(format!("horizon must be positive, got {tau}")));
    }
    let boundaries = match scheme {
        DiscretizationScheme::EqualWidth => {
            let mut b: Vec<f64> = (0..=m).map(|j| tau * j as f64 / m as f64).collect();
            b[m] = tau;
            b
        }
        DiscretizationScheme::EventQuantile => quantile_boundaries(data, tau, m)?,
    };
    Ok(LongFormatDataset::from_dataset(data, PeriodGrid::new(boundaries)?))
}

fn check_hazards(hazards: &[f64]) -> Result<()> {
    match hazards.iter().position(|q| !(0.0..=1.0).contains(q)) {
        Some(i) => Err(Error::invalid(format!("hazard {} at period {i} is outside [0, 1]", hazards[i]))),
        None => Ok(()),
    }
}

/// Product-limit identity S = ∏ (1 − Q(t)) over the first `periods` hazards.
///
/// Accumulated as S ← S − S·Q, the incidence-subtraction form of the same
/// product, which keeps S exactly 0 after an absorbing Q = 1.
pub fn survival_from_discrete_hazards(hazards: &[f64], periods: usize) -> Result<f64> {
    check_hazards(hazards)?;
    if periods > hazards.len() {
        return Err(Error::invalid(format!("requested {periods} periods but only {} hazards given", hazards.len())));
    }
    Ok(hazards[..periods].iter().fold(1.0, |s, &q| s - s * q))
}

/// Survival at an arbitrary time: the product runs over whole periods ending
/// at or before `t` (the floor substitution for off-grid times).
pub fn survival_at_time(hazards: &[f64], periods: &PeriodGrid, t: f64) -> Result<f64> {
    let k = periods.completed_periods(t).min(hazards.len());
    survival_from_discrete_hazards(hazards, k)
}
