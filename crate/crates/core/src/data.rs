//! Observed data, baseline hazard grids, priors and sampler configuration.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unvalidated subject records as read from a file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawDataset {
    pub time: Vec<f64>,
    pub event: Vec<f64>,
    pub w: Vec<f64>,
    /// Core areas; `None` means every area is 1.
    pub area: Option<Vec<f64>>,
    /// One row per subject.
    pub z: Vec<Vec<f64>>,
    pub z_names: Vec<String>,
    pub x_true: Option<Vec<f64>>,
}

/// Validated survival data with a count biomarker.
///
/// `u` holds observed times min(T, C), `delta` the event indicators, `z` the
/// n x J matrix of error-free covariates, `w` the biomarker counts observed on
/// cores of area `area`. `x_true` carries the latent densities when the data
/// were simulated.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    u: Vec<f64>,
    delta: Vec<bool>,
    z: DMatrix<f64>,
    z_names: Vec<String>,
    w: Vec<u64>,
    area: Vec<f64>,
    x_true: Option<Vec<f64>>,
}

fn check_len(field: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::LengthMismatch {
            field,
            expected,
            found,
        });
    }
    Ok(())
}

/// Checks every record invariant and returns the typed dataset.
pub fn validate_dataset(raw: RawDataset) -> Result<SurvivalDataset> {
    let n = raw.time.len();
    check_len("event", n, raw.event.len())?;
    check_len("w", n, raw.w.len())?;
    check_len("z", n, raw.z.len())?;
    if let Some(a) = &raw.area {
        check_len("area", n, a.len())?;
    }
    if let Some(x) = &raw.x_true {
        check_len("x_true", n, x.len())?;
    }
    let n_cov = raw.z_names.len();
    for row in &raw.z {
        check_len("z row", n_cov, row.len())?;
    }

    for (index, &value) in raw.time.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveTime {
                field: "time",
                index,
                value,
            });
        }
    }
    let mut delta = Vec::with_capacity(n);
    for (index, &value) in raw.event.iter().enumerate() {
        match value {
            0.0 => delta.push(false),
            1.0 => delta.push(true),
            _ => {
                return Err(Error::InvalidValue {
                    field: "event",
                    index,
                    value,
                })
            }
        }
    }
    let mut w = Vec::with_capacity(n);
    for (index, &value) in raw.w.iter().enumerate() {
        if value < 0.0 {
            return Err(Error::NegativeCount {
                field: "w",
                index,
                value,
            });
        }
        if !value.is_finite() || value.fract() != 0.0 || value > u64::MAX as f64 {
            return Err(Error::NonIntegerCount {
                field: "w",
                index,
                value,
            });
        }
        w.push(value as u64);
    }
    let area = match raw.area {
        Some(a) => {
            for (index, &value) in a.iter().enumerate() {
                if !(value > 0.0) || !value.is_finite() {
                    return Err(Error::NonPositiveArea {
                        field: "area",
                        index,
                        value,
                    });
                }
            }
            a
        }
        None => vec![1.0; n],
    };
    if let Some(x) = &raw.x_true {
        for (index, &value) in x.iter().enumerate() {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::InvalidValue {
                    field: "x_true",
                    index,
                    value,
                });
            }
        }
    }
    for (i, row) in raw.z.iter().enumerate() {
        if let Some(&value) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidValue {
                field: "z",
                index: i,
                value,
            });
        }
    }

    let z = DMatrix::from_fn(n, n_cov, |i, j| raw.z[i][j]);
    Ok(SurvivalDataset {
        u: raw.time,
        delta,
        z,
        z_names: raw.z_names,
        w,
        area,
        x_true: raw.x_true,
    })
}

impl SurvivalDataset {
    pub fn n(&self) -> usize {
        self.u.len()
    }

    /// Number of error-free covariates J.
    pub fn n_cov(&self) -> usize {
        self.z.ncols()
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn delta(&self) -> &[bool] {
        &self.delta
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn z_names(&self) -> &[String] {
        &self.z_names
    }

    pub fn w(&self) -> &[u64] {
        &self.w
    }

    pub fn area(&self) -> &[f64] {
        &self.area
    }

    pub fn x_true(&self) -> Option<&[f64]> {
        self.x_true.as_deref()
    }

    pub fn n_events(&self) -> usize {
        self.delta.iter().filter(|&&d| d).count()
    }

    /// Observed surrogate densities W / A.
    pub fn surrogate(&self) -> Vec<f64> {
        self.w
            .iter()
            .zip(&self.area)
            .map(|(&w, &a)| w as f64 / a)
            .collect()
    }

    pub fn to_raw(&self) -> RawDataset {
        RawDataset {
            time: self.u.clone(),
            event: self.delta.iter().map(|&d| if d { 1.0 } else { 0.0 }).collect(),
            w: self.w.iter().map(|&w| w as f64).collect(),
            area: Some(self.area.clone()),
            z: (0..self.n())
                .map(|i| self.z.row(i).iter().copied().collect())
                .collect(),
            z_names: self.z_names.clone(),
            x_true: self.x_true.clone(),
        }
    }

    /// Subset (with repetition) by subject index, as used by the bootstrap.
    pub fn select(&self, idx: &[usize]) -> SurvivalDataset {
        SurvivalDataset {
            u: idx.iter().map(|&i| self.u[i]).collect(),
            delta: idx.iter().map(|&i| self.delta[i]).collect(),
            z: DMatrix::from_fn(idx.len(), self.n_cov(), |r, j| self.z[(idx[r], j)]),
            z_names: self.z_names.clone(),
            w: idx.iter().map(|&i| self.w[i]).collect(),
            area: idx.iter().map(|&i| self.area[i]).collect(),
            x_true: self
                .x_true
                .as_ref()
                .map(|x| idx.iter().map(|&i| x[i]).collect()),
        }
    }

    /// Copy with replaced outcomes and counts; covariates, areas and
    /// `x_true` are kept. Lengths must match `n`.
    pub fn with_observations(&self, u: Vec<f64>, delta: Vec<bool>, w: Vec<u64>) -> Result<Self> {
        let mut raw = self.to_raw();
        raw.time = u;
        raw.event = delta.iter().map(|&d| if d { 1.0 } else { 0.0 }).collect();
        raw.w = w.iter().map(|&w| w as f64).collect();
        validate_dataset(raw)
    }
}

/// Where inner knots of the baseline hazard are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnotPlacement {
    /// Empirical quantiles k/(m+1) of the observed event times.
    Quantile,
    /// Equally spaced on (0, largest event time].
    EqualLength,
}

/// Piecewise-constant baseline hazard.
///
/// Interval `l` is `(knots[l], knots[l+1]]`, and the last interval is
/// `(knots[m], inf)`. `levels[l]` is the hazard on interval `l` in units of
/// 1/time.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardGrid {
    knots: Vec<f64>,
    pub levels: Vec<f64>,
}

impl HazardGrid {
    pub fn new(knots: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if knots.first() != Some(&0.0) {
            return Err(Error::InvalidConfig("first knot must be exactly 0".into()));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidConfig("knots must be strictly increasing".into()));
        }
        check_len("levels", knots.len(), levels.len())?;
        if let Some((index, &value)) = levels.iter().enumerate().find(|(_, &h)| !(h > 0.0)) {
            return Err(Error::InvalidValue {
                field: "levels",
                index,
                value,
            });
        }
        Ok(Self { knots, levels })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of intervals, m + 1.
    pub fn n_intervals(&self) -> usize {
        self.knots.len()
    }

    /// Index of the interval containing `t` (> 0).
    pub fn interval_of(&self, t: f64) -> usize {
        // number of knots strictly below t, minus one for the zero knot
        self.knots.partition_point(|&k| k < t).saturating_sub(1)
    }

    /// Length of interval `l` intersected with (0, t].
    pub fn exposure(&self, t: f64, l: usize) -> f64 {
        let lo = self.knots[l];
        let hi = self.knots.get(l + 1).copied().unwrap_or(f64::INFINITY);
        (t.min(hi) - lo).max(0.0)
    }

    /// Cumulative baseline hazard H0(t).
    pub fn cumulative(&self, t: f64) -> f64 {
        (0..self.n_intervals())
            .map(|l| self.levels[l] * self.exposure(t, l))
            .sum()
    }

    pub fn hazard_at(&self, t: f64) -> f64 {
        self.levels[self.interval_of(t)]
    }
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Builds a grid with `m` inner knots and levels at the crude hazard
/// sum(delta) / sum(u). Coincident knots (tied event times) are merged.
pub fn make_hazard_grid(
    u: &[f64],
    delta: &[bool],
    m: usize,
    placement: KnotPlacement,
) -> Result<HazardGrid> {
    if m == 0 {
        return Err(Error::InvalidConfig("at least one inner knot is required".into()));
    }
    check_len("delta", u.len(), delta.len())?;
    let mut events: Vec<f64> = u
        .iter()
        .zip(delta)
        .filter(|(_, &d)| d)
        .map(|(&t, _)| t)
        .collect();
    if events.is_empty() {
        return Err(Error::NoEvents);
    }
    events.sort_by(f64::total_cmp);
    let t_max = *events.last().unwrap();

    let mut knots = vec![0.0];
    for k in 1..=m {
        let p = k as f64 / (m + 1) as f64;
        let tau = match placement {
            KnotPlacement::Quantile => quantile_sorted(&events, p),
            KnotPlacement::EqualLength => p * t_max,
        };
        if tau > *knots.last().unwrap() {
            knots.push(tau);
        }
    }
    let crude = events.len() as f64 / u.iter().sum::<f64>();
    let levels = vec![crude; knots.len()];
    HazardGrid::new(knots, levels)
}

/// Prior for the biomarker coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CoefficientPrior {
    Normal { mean: f64, var: f64 },
    Cauchy { location: f64, scale: f64 },
}

impl CoefficientPrior {
    pub fn ln_pdf(&self, b: f64) -> f64 {
        match *self {
            CoefficientPrior::Normal { mean, var } => crate::dist::ln_normal_pdf(b, mean, var),
            CoefficientPrior::Cauchy { location, scale } => {
                crate::dist::ln_cauchy_pdf(b, location, scale)
            }
        }
    }

    pub fn pdf(&self, b: f64) -> f64 {
        self.ln_pdf(b).exp()
    }

    pub fn label(&self) -> String {
        match *self {
            CoefficientPrior::Normal { mean, var } => format!("N({mean}, {var})"),
            CoefficientPrior::Cauchy { location, scale } => format!("Cauchy({location}, {scale})"),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            CoefficientPrior::Normal { var, .. } if !(var > 0.0) => {
                Err(Error::InvalidConfig(format!("prior variance {var} must be positive")))
            }
            CoefficientPrior::Cauchy { scale, .. } if !(scale > 0.0) => {
                Err(Error::InvalidConfig(format!("Cauchy scale {scale} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// Base measure G0 of the mixture: the component shape is
/// Gamma(shape_shape, rate shape_rate) and the component scale is
/// Gamma(scale_shape, rate scale_rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseMeasure {
    pub shape_shape: f64,
    pub shape_rate: f64,
    pub scale_shape: f64,
    pub scale_rate: f64,
}

impl Default for BaseMeasure {
    fn default() -> Self {
        Self {
            shape_shape: 0.1,
            shape_rate: 0.1,
            scale_shape: 0.1,
            scale_rate: 0.1,
        }
    }
}

/// Prior hyperparameters of the joint model. Hazard levels use
/// Gamma(shape, rate); the concentration is log-normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub hazard_shape: f64,
    pub hazard_rate: f64,
    pub beta_z_mean: f64,
    pub beta_z_var: f64,
    pub beta_x: CoefficientPrior,
    pub alpha_log_mean: f64,
    pub alpha_log_var: f64,
    pub base: BaseMeasure,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            hazard_shape: 0.01,
            hazard_rate: 0.01,
            beta_z_mean: 0.0,
            beta_z_var: 1.0,
            beta_x: CoefficientPrior::Normal {
                mean: 0.0,
                var: 100.0,
            },
            alpha_log_mean: 0.0,
            alpha_log_var: 1.0,
            base: BaseMeasure::default(),
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hazard_shape", self.hazard_shape),
            ("hazard_rate", self.hazard_rate),
            ("beta_z_var", self.beta_z_var),
            ("alpha_log_var", self.alpha_log_var),
            ("base.shape_shape", self.base.shape_shape),
            ("base.shape_rate", self.base.shape_rate),
            ("base.scale_shape", self.base.scale_shape),
            ("base.scale_rate", self.base.scale_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} = {v} must be positive")));
            }
        }
        self.beta_x.validate()
    }
}

/// MCMC schedule and model size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Inner knots of the baseline hazard (m); the grid has m + 1 intervals.
    pub m_intervals: usize,
    pub knots: KnotPlacement,
    /// Mixture truncation level K. K = 1 is the single-gamma parametric model.
    pub k_trunc: usize,
    /// Total sweeps including burn-in.
    pub n_iter: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub seed: u64,
    /// Keep latent densities in the draw set.
    pub store_latent: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            m_intervals: 5,
            knots: KnotPlacement::Quantile,
            k_trunc: 5,
            n_iter: 200_000,
            n_burn: 100_000,
            thin: 10,
            seed: 0,
            store_latent: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_intervals < 1 {
            return Err(Error::InvalidConfig("m_intervals must be at least 1".into()));
        }
        if self.k_trunc < 1 {
            return Err(Error::InvalidConfig("k_trunc must be at least 1".into()));
        }
        if self.n_iter == 0 {
            return Err(Error::InvalidConfig("n_iter must be positive".into()));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be at least 1".into()));
        }
        if self.n_burn > self.n_iter {
            return Err(Error::InvalidConfig("n_burn exceeds n_iter".into()));
        }
        Ok(())
    }

    /// Number of retained draws, floor((n_iter - n_burn) / thin).
    pub fn n_retained(&self) -> usize {
        (self.n_iter - self.n_burn) / self.thin
    }
}
