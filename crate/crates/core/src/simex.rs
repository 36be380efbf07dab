//! SIMEX correction for Poisson-gamma measurement error: remeasure the
//! surrogate density with extra pseudo-error at each noise level, refit the
//! Cox model, and extrapolate the coefficient curve back to lambda = -1.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cox::fit_cox;
use crate::data::SurvivalDataset;
use crate::dist::{sample_gamma, sample_poisson, stream_rng};
use crate::error::{Error, Result};

/// Standard deviation of `Y - u` with `u ~ Gamma(1, 1)`, `Y | u ~ Poisson(u)`.
/// Var = E[Var(Y | u)] + Var(E[Y | u] - u) = E[u] = 1, confirmed by the
/// Monte Carlo check in the tests.
pub const PSEUDO_ERROR_SD: f64 = 1.0;

/// Largest fraction of non-converged fits tolerated at one noise level.
pub const MAX_DROP_FRACTION: f64 = 0.2;

pub const MIN_BOOTSTRAP: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimexConfig {
    lambda_grid: Vec<f64>,
    pub b: usize,
    pub seed: u64,
}

impl Default for SimexConfig {
    fn default() -> Self {
        Self {
            lambda_grid: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            b: 100,
            seed: 0,
        }
    }
}

impl SimexConfig {
    /// Sorts the grid; it must contain 0, at least three distinct levels,
    /// and only finite nonnegative values.
    pub fn new(mut lambda_grid: Vec<f64>, b: usize, seed: u64) -> Result<Self> {
        if lambda_grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidConfig(
                "lambda grid values must be finite and nonnegative".into(),
            ));
        }
        lambda_grid.sort_by(f64::total_cmp);
        lambda_grid.dedup();
        if lambda_grid.first() != Some(&0.0) {
            return Err(Error::InvalidConfig("lambda grid must start at 0".into()));
        }
        if lambda_grid.len() < 3 {
            return Err(Error::InvalidConfig(
                "a quadratic extrapolant needs at least three lambda values".into(),
            ));
        }
        if b < 2 {
            return Err(Error::InvalidConfig(format!("B = {b} must be at least 2")));
        }
        Ok(Self { lambda_grid, b, seed })
    }

    pub fn lambda_grid(&self) -> &[f64] {
        &self.lambda_grid
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimexFit {
    /// `beta_x` followed by the covariate names.
    pub names: Vec<String>,
    pub lambdas: Vec<f64>,
    /// Mean coefficients per noise level, in `names` order.
    pub mean_coef: Vec<Vec<f64>>,
    /// Non-converged fits dropped per noise level.
    pub dropped: Vec<usize>,
    /// Quadratic `c0 + c1 lambda + c2 lambda^2` per coefficient.
    pub curve: Vec<[f64; 3]>,
    pub extrapolated: Vec<f64>,
    pub bootstrap_se: Option<Vec<f64>>,
}

/// `W_bar / A_i` with `W_bar` the overall mean count.
pub fn error_variance(data: &SurvivalDataset) -> Vec<f64> {
    let w_bar = data.w().iter().sum::<u64>() as f64 / data.n() as f64;
    data.area().iter().map(|a| w_bar / a).collect()
}

pub fn pseudo_error<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u = sample_gamma(rng, 1.0, 1.0);
    (sample_poisson(rng, u) as f64 - u) / PSEUDO_ERROR_SD
}

/// `surrogate_i + sqrt(lambda * var_i) * xi_i`; lambda = 0 returns the
/// surrogate untouched without drawing.
pub fn remeasure<R: Rng + ?Sized>(surrogate: &[f64], lambda: f64, variances: &[f64], rng: &mut R) -> Vec<f64> {
    if lambda == 0.0 {
        return surrogate.to_vec();
    }
    surrogate
        .iter()
        .zip(variances)
        .map(|(s, v)| s + (lambda * v).sqrt() * pseudo_error(rng))
        .collect()
}

/// Least-squares quadratic through `(x, y)`.
pub fn quadratic_fit(x: &[f64], y: &[f64]) -> Result<[f64; 3]> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::TooFewValues {
            required: 3,
            found: x.len().min(y.len()),
        });
    }
    let design = DMatrix::from_fn(x.len(), 3, |i, j| x[i].powi(j as i32));
    let qr = design.clone().qr();
    let rhs = qr.q().transpose() * DVector::from_column_slice(y);
    let c = qr.r().solve_upper_triangular(&rhs).ok_or(Error::Singular)?;
    Ok([c[0], c[1], c[2]])
}

pub fn eval_quadratic(c: &[f64; 3], x: f64) -> f64 {
    c[0] + c[1] * x + c[2] * x * x
}

fn design_with(x: &[f64], data: &SurvivalDataset) -> DMatrix<f64> {
    let z = data.z();
    DMatrix::from_fn(data.n(), 1 + z.ncols(), |i, j| if j == 0 { x[i] } else { z[(i, j - 1)] })
}

/// Fits at every noise level with error variances `W_bar / A_i`.
pub fn fit_simex(data: &SurvivalDataset, config: &SimexConfig) -> Result<SimexFit> {
    fit_simex_with_variances(data, &error_variance(data), config)
}

pub fn fit_simex_with_variances(
    data: &SurvivalDataset,
    variances: &[f64],
    config: &SimexConfig,
) -> Result<SimexFit> {
    let surrogate = data.surrogate();
    let mut names = vec!["beta_x".to_string()];
    names.extend(data.z_names().iter().cloned());
    let p = names.len();
    let mut mean_coef = Vec::with_capacity(config.lambda_grid.len());
    let mut dropped = Vec::with_capacity(config.lambda_grid.len());
    for (li, &lambda) in config.lambda_grid.iter().enumerate() {
        let reps = if lambda == 0.0 { 1 } else { config.b };
        let fits: Vec<Option<Vec<f64>>> = (0..reps as u64)
            .into_par_iter()
            .map(|b| -> Result<Option<Vec<f64>>> {
                let mut rng = stream_rng(config.seed, &[li as u64, b]);
                let x = remeasure(&surrogate, lambda, variances, &mut rng);
                match fit_cox(data.u(), data.delta(), &design_with(&x, data)) {
                    Ok(f) if f.converged => Ok(Some(f.coef)),
                    Ok(_) | Err(Error::Singular) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<_>>()?;
        let kept: Vec<&Vec<f64>> = fits.iter().flatten().collect();
        let n_drop = reps - kept.len();
        if kept.is_empty() || n_drop as f64 > MAX_DROP_FRACTION * reps as f64 {
            return Err(Error::SimexDropout {
                lambda,
                dropped: n_drop,
                attempted: reps,
            });
        }
        let means: Vec<f64> = (0..p)
            .map(|j| kept.iter().map(|c| c[j]).sum::<f64>() / kept.len() as f64)
            .collect();
        mean_coef.push(means);
        dropped.push(n_drop);
    }
    let mut curve = Vec::with_capacity(p);
    let mut extrapolated = Vec::with_capacity(p);
    for j in 0..p {
        let y: Vec<f64> = mean_coef.iter().map(|m| m[j]).collect();
        let c = quadratic_fit(&config.lambda_grid, &y)?;
        extrapolated.push(eval_quadratic(&c, -1.0));
        curve.push(c);
    }
    Ok(SimexFit {
        names,
        lambdas: config.lambda_grid.clone(),
        mean_coef,
        dropped,
        curve,
        extrapolated,
        bootstrap_se: None,
    })
}

/// Nonparametric bootstrap over subjects: the SD of the extrapolated
/// coefficients across `r` resamples (`r >= 50`).
pub fn simex_bootstrap_se(data: &SurvivalDataset, config: &SimexConfig, r: usize) -> Result<Vec<f64>> {
    if r < MIN_BOOTSTRAP {
        return Err(Error::InvalidConfig(format!(
            "{r} bootstrap resamples requested; at least {MIN_BOOTSTRAP} are required"
        )));
    }
    let n = data.n();
    let resamples: Vec<Vec<usize>> = (0..r as u64)
        .map(|k| {
            let mut rng = stream_rng(config.seed, &[u64::MAX, k]);
            (0..n).map(|_| rng.random_range(0..n)).collect()
        })
        .collect();
    bootstrap_se_from_resamples(data, config, &resamples)
}

/// Bootstrap SE over explicit resample index sets.
pub fn bootstrap_se_from_resamples(
    data: &SurvivalDataset,
    config: &SimexConfig,
    resamples: &[Vec<usize>],
) -> Result<Vec<f64>> {
    if resamples.len() < 2 {
        return Err(Error::TooFewValues {
            required: 2,
            found: resamples.len(),
        });
    }
    let fits: Vec<Vec<f64>> = resamples
        .iter()
        .map(|idx| fit_simex(&data.select(idx), config).map(|f| f.extrapolated))
        .collect::<Result<_>>()?;
    let m = fits.len() as f64;
    Ok((0..fits[0].len())
        .map(|j| {
            let mean = fits.iter().map(|f| f[j]).sum::<f64>() / m;
            (fits.iter().map(|f| (f[j] - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
        })
        .collect())
}

/// Mean coefficients at each noise level, one row per lambda.
pub fn write_curve_csv<W: Write>(fit: &SimexFit, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["lambda".to_string(), "dropped".into()];
    header.extend(fit.names.iter().cloned());
    w.write_record(&header)?;
    for ((l, d), m) in fit.lambdas.iter().zip(&fit.dropped).zip(&fit.mean_coef) {
        let mut row = vec![l.to_string(), d.to_string()];
        row.extend(m.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Extrapolated coefficients with the quadratic fit and, when computed, the
/// bootstrap standard errors (empty otherwise).
pub fn write_fit_csv<W: Write>(fit: &SimexFit, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["param", "coef", "se", "c0", "c1", "c2"])?;
    for (j, name) in fit.names.iter().enumerate() {
        let se = fit
            .bootstrap_se
            .as_ref()
            .map_or_else(String::new, |s| s[j].to_string());
        let c = fit.curve[j];
        w.write_record([
            name.clone(),
            fit.extrapolated[j].to_string(),
            se,
            c[0].to_string(),
            c[1].to_string(),
            c[2].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{validate_dataset, RawDataset};
    use crate::dist::{sample_exponential, sample_std_normal};
    use proptest::prelude::*;

    fn dataset(seed: u64, n: usize, w: Option<Vec<f64>>, area: Option<Vec<f64>>) -> SurvivalDataset {
        let mut rng = stream_rng(seed, &[]);
        let mut raw = RawDataset {
            time: vec![],
            event: vec![],
            w: vec![],
            area,
            z: vec![],
            z_names: vec!["z".into()],
            x_true: None,
        };
        for _ in 0..n {
            let x = sample_gamma(&mut rng, 2.0 / 3.0, 3.0);
            let z = sample_std_normal(&mut rng);
            raw.time.push(sample_exponential(&mut rng, (0.5 * x + 0.1 * z).exp()));
            raw.event.push(1.0);
            raw.w.push(sample_poisson(&mut rng, x) as f64);
            raw.z.push(vec![z]);
        }
        if let Some(w) = w {
            raw.w = w;
        }
        validate_dataset(raw).unwrap()
    }

    #[test]
    fn error_variance_examples() {
        let d = dataset(1, 3, Some(vec![2.0, 2.0, 2.0]), None);
        assert_eq!(error_variance(&d), vec![2.0; 3]);
        let d = dataset(1, 3, Some(vec![4.0, 6.0, 2.0]), Some(vec![2.0, 1.0, 4.0]));
        assert_eq!(error_variance(&d), vec![2.0, 4.0, 1.0]);
    }

    #[test]
    fn error_variance_is_consistent() {
        // X ~ Gamma(2/3, scale 3), A = 1: Var(W - X) = E[X] = 2
        let mut rng = stream_rng(2, &[]);
        let n = 100_000;
        let diffs: Vec<f64> = (0..n)
            .map(|_| {
                let x = sample_gamma(&mut rng, 2.0 / 3.0, 3.0);
                sample_poisson(&mut rng, x) as f64 - x
            })
            .collect();
        let mean = diffs.iter().sum::<f64>() / n as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let fourth = diffs.iter().map(|d| (d - mean).powi(4)).sum::<f64>() / n as f64;
        let se = ((fourth - var * var) / n as f64).sqrt();
        assert!((var - 2.0).abs() < 3.0 * se, "{var} {se}");
    }

    #[test]
    fn pseudo_error_has_unit_variance() {
        let mut rng = stream_rng(3, &[]);
        let n = 1_000_000;
        let d: Vec<f64> = (0..n).map(|_| pseudo_error(&mut rng)).collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let fourth = d.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * (var / n as f64).sqrt(), "{mean}");
        let se = ((fourth - var * var) / n as f64).sqrt();
        assert!((var - 1.0).abs() < 3.0 * se, "{var} {se}");
        assert!(d.iter().any(|v| v.fract() != 0.0));
    }

    #[test]
    fn remeasure_at_zero_is_identity() {
        let s = [0.5, 1.5, 3.0];
        let mut rng = stream_rng(4, &[]);
        assert_eq!(remeasure(&s, 0.0, &[1.0; 3], &mut rng), s.to_vec());
    }

    #[test]
    fn remeasure_noise_variance() {
        let n = 200_000;
        let s = vec![1.0; n];
        let v: Vec<f64> = (0..n).map(|i| 0.5 + (i % 4) as f64).collect();
        let mut rng = stream_rng(5, &[]);
        let r = remeasure(&s, 1.0, &v, &mut rng);
        let noise_var = r.iter().map(|x| (x - 1.0).powi(2)).sum::<f64>() / n as f64;
        let mean_v = v.iter().sum::<f64>() / n as f64;
        assert!((noise_var / mean_v - 1.0).abs() < 0.03, "{noise_var} {mean_v}");
        let mut rng2 = stream_rng(5, &[]);
        assert_eq!(remeasure(&s, 1.0, &v, &mut rng2), r);
    }

    #[test]
    fn quadratic_through_three_points() {
        let c = quadratic_fit(&[0.0, 1.0, 2.0], &[1.0, 2.0, 5.0]).unwrap();
        assert!((eval_quadratic(&c, -1.0) - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn quadratic_reproduces_exact_curves(
            c in prop::array::uniform3(-5.0f64..5.0),
            mut x in prop::collection::vec(0.0f64..3.0, 3..8),
        ) {
            x.sort_by(f64::total_cmp);
            x.dedup_by(|a, b| (*a - *b).abs() < 0.05);
            prop_assume!(x.len() >= 3);
            let y: Vec<f64> = x.iter().map(|&v| c[0] + c[1] * v + c[2] * v * v).collect();
            let fit = quadratic_fit(&x, &y).unwrap();
            for j in 0..3 {
                prop_assert!((fit[j] - c[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn grid_validation() {
        assert!(SimexConfig::new(vec![0.5, 1.0, 2.0], 10, 0).is_err());
        assert!(SimexConfig::new(vec![0.0, 1.0], 10, 0).is_err());
        assert!(SimexConfig::new(vec![0.0, 1.0, 2.0], 1, 0).is_err());
        assert!(SimexConfig::new(vec![0.0, -1.0, 2.0], 10, 0).is_err());
        let c = SimexConfig::new(vec![2.0, 0.0, 1.0], 10, 0).unwrap();
        assert_eq!(c.lambda_grid(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn zero_level_is_naive_fit() {
        let d = dataset(6, 100, None, None);
        let cfg = SimexConfig::new(vec![0.0, 1.0, 2.0], 20, 7).unwrap();
        let fit = fit_simex(&d, &cfg).unwrap();
        let naive = fit_cox(d.u(), d.delta(), &design_with(&d.surrogate(), &d)).unwrap();
        assert_eq!(fit.mean_coef[0], naive.coef);
        // attenuation: the curve falls with lambda and extrapolation moves past naive
        assert!(fit.mean_coef[2][0] < fit.mean_coef[0][0]);
        assert!(fit.extrapolated[0] > naive.coef[0]);
    }

    #[test]
    fn zero_variance_gives_flat_curve() {
        let d = dataset(7, 80, None, None);
        let cfg = SimexConfig::new(vec![0.0, 0.5, 1.0, 2.0], 5, 1).unwrap();
        let fit = fit_simex_with_variances(&d, &vec![0.0; 80], &cfg).unwrap();
        for j in 0..2 {
            assert!((fit.extrapolated[j] - fit.mean_coef[0][j]).abs() < 1e-10);
        }
    }

    #[test]
    fn grid_order_does_not_matter() {
        let d = dataset(8, 60, None, None);
        let a = fit_simex(&d, &SimexConfig::new(vec![0.0, 0.5, 1.0, 2.0], 10, 3).unwrap()).unwrap();
        let b = fit_simex(&d, &SimexConfig::new(vec![2.0, 1.0, 0.0, 0.5], 10, 3).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identical_resamples_give_zero_se() {
        let d = dataset(9, 50, None, None);
        let cfg = SimexConfig::new(vec![0.0, 1.0, 2.0], 5, 3).unwrap();
        let idx: Vec<usize> = (0..50).collect();
        let se = bootstrap_se_from_resamples(&d, &cfg, &[idx.clone(), idx]).unwrap();
        assert!(se.iter().all(|&s| s == 0.0));
        assert!(simex_bootstrap_se(&d, &cfg, 10).is_err());
    }

    #[test]
    fn curve_csv_rows() {
        let d = dataset(10, 50, None, None);
        let cfg = SimexConfig::new(vec![0.0, 1.0, 2.0], 5, 3).unwrap();
        let fit = fit_simex(&d, &cfg).unwrap();
        let mut buf = Vec::new();
        write_curve_csv(&fit, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3);
        assert!(text.starts_with("lambda,dropped,beta_x,z"));

        let mut buf = Vec::new();
        write_fit_csv(&fit, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "param,coef,se,c0,c1,c2");
        assert_eq!(lines.len(), 3);
        // no bootstrap: empty SE field
        assert!(lines[1].starts_with(&format!("beta_x,{},,", fit.extrapolated[0])));
    }
}
