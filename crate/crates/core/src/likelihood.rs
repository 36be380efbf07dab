//! Piecewise-exponential survival likelihood under proportional hazards.
//!
//! The survival contribution of subject i is
//! `delta_i * (log h(u_i) + eta_i) - H0(u_i) * exp(eta_i)`, where
//! `eta_i = beta_z' z_i + beta_x x_i` and `H0` integrates the piecewise
//! hazard. Splitting follow-up at the knots turns this into independent
//! Poisson kernels with mean `h_l * e_il * exp(eta_i)` per (subject,
//! interval) cell. The `d_il * log(e_il)` term of those kernels does not
//! involve any parameter and is omitted, so both forms give the same value.

use crate::data::{HazardGrid, SurvivalDataset};
use crate::error::{Error, Result};

/// Largest linear predictor accepted before `exp` is considered to overflow.
pub const MAX_LINEAR_PREDICTOR: f64 = 700.0;

/// One (subject, interval) cell with positive exposure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionRow {
    pub subject: usize,
    pub interval: usize,
    pub exposure: f64,
    pub event: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalExpansion {
    pub rows: Vec<ExpansionRow>,
    pub n_subjects: usize,
    pub n_intervals: usize,
}

pub fn expand_intervals(data: &SurvivalDataset, grid: &HazardGrid) -> IntervalExpansion {
    let mut rows = Vec::new();
    for (i, (&u, &d)) in data.u().iter().zip(data.delta()).enumerate() {
        let last = grid.interval_of(u);
        for l in 0..=last {
            let exposure = grid.exposure(u, l);
            if exposure > 0.0 {
                rows.push(ExpansionRow {
                    subject: i,
                    interval: l,
                    exposure,
                    event: d && l == last,
                });
            }
        }
    }
    IntervalExpansion {
        rows,
        n_subjects: data.n(),
        n_intervals: grid.n_intervals(),
    }
}

/// Linear predictors for every subject, checked against
/// [`MAX_LINEAR_PREDICTOR`].
pub fn linear_predictors(
    data: &SurvivalDataset,
    beta_z: &[f64],
    beta_x: f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    if beta_z.len() != data.n_cov() {
        return Err(Error::LengthMismatch {
            field: "beta_z",
            expected: data.n_cov(),
            found: beta_z.len(),
        });
    }
    if x.len() != data.n() {
        return Err(Error::LengthMismatch {
            field: "x",
            expected: data.n(),
            found: x.len(),
        });
    }
    let z = data.z();
    (0..data.n())
        .map(|i| {
            let eta = beta_z
                .iter()
                .enumerate()
                .map(|(j, b)| b * z[(i, j)])
                .sum::<f64>()
                + beta_x * x[i];
            if eta > MAX_LINEAR_PREDICTOR || !eta.is_finite() {
                Err(Error::PredictorOverflow {
                    subject: i,
                    eta,
                    max: MAX_LINEAR_PREDICTOR,
                })
            } else {
                Ok(eta)
            }
        })
        .collect()
}

fn check_levels(grid: &HazardGrid) -> Result<()> {
    match grid.levels.iter().find(|&&h| !(h > 0.0) || !h.is_finite()) {
        Some(h) => Err(Error::NonFiniteLik(format!("hazard level {h} is not positive"))),
        None => Ok(()),
    }
}

pub fn loglik_direct(
    data: &SurvivalDataset,
    grid: &HazardGrid,
    beta_z: &[f64],
    beta_x: f64,
    x: &[f64],
) -> Result<f64> {
    check_levels(grid)?;
    let eta = linear_predictors(data, beta_z, beta_x, x)?;
    let mut ll = 0.0;
    for i in 0..data.n() {
        let u = data.u()[i];
        if data.delta()[i] {
            ll += grid.hazard_at(u).ln() + eta[i];
        }
        ll -= grid.cumulative(u) * eta[i].exp();
    }
    finite(ll)
}

pub fn loglik_poisson_trick(
    data: &SurvivalDataset,
    expansion: &IntervalExpansion,
    grid: &HazardGrid,
    beta_z: &[f64],
    beta_x: f64,
    x: &[f64],
) -> Result<f64> {
    check_levels(grid)?;
    if expansion.rows.is_empty() {
        return Ok(0.0);
    }
    let eta = linear_predictors(data, beta_z, beta_x, x)?;
    let mut ll = 0.0;
    for r in &expansion.rows {
        let h = grid.levels[r.interval];
        let mean = h * r.exposure * eta[r.subject].exp();
        if r.event {
            ll += h.ln() + eta[r.subject];
        }
        ll -= mean;
    }
    finite(ll)
}

fn finite(ll: f64) -> Result<f64> {
    if ll.is_finite() {
        Ok(ll)
    } else {
        Err(Error::NonFiniteLik(format!("log-likelihood evaluated to {ll}")))
    }
}

/// Per-interval event counts D_l and weighted exposures
/// E_l = sum_i e_il * exp(eta_i).
#[derive(Debug, Clone, PartialEq)]
pub struct HazardStats {
    pub events: Vec<f64>,
    pub exposure: Vec<f64>,
}

pub fn hazard_sufficient_stats(expansion: &IntervalExpansion, eta: &[f64]) -> HazardStats {
    let mut events = vec![0.0; expansion.n_intervals];
    let mut exposure = vec![0.0; expansion.n_intervals];
    for r in &expansion.rows {
        if r.event {
            events[r.interval] += 1.0;
        }
        exposure[r.interval] += r.exposure * eta[r.subject].exp();
    }
    HazardStats { events, exposure }
}
