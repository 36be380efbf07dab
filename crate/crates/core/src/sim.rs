//! Simulation studies: data generation under the latent-density scenarios,
//! estimator runs, bias / MSE scoring with batch-means Monte Carlo errors,
//! and the finite-sample study of the Bayes factor.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cox::fit_cox;
use crate::data::{validate_dataset, KnotPlacement, ModelConfig, PriorSpec, RawDataset, SurvivalDataset};
use crate::diagnostics::batch_means_mcse;
use crate::dist::{
    sample_exponential, sample_gamma, sample_poisson, sample_std_normal, stream_rng,
};
use crate::error::{Error, Result};
use crate::inference::{savage_dickey_bf10, DensityMethod};
use crate::mcmc::run_chain_with_rng;
use crate::simex::{fit_simex, SimexConfig};

pub const MCSE_BATCHES: usize = 10;
const PILOT_DRAWS: usize = 100_000;
/// Stream tags that keep pilot and replicate draws apart.
const PILOT_STREAM: u64 = u64::MAX;

/// Distribution of the latent biomarker density X.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum LatentLaw {
    Gamma { shape: f64, scale: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Uniform { upper: f64 },
}

impl LatentLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LatentLaw::Gamma { shape, scale } => sample_gamma(rng, shape, scale),
            LatentLaw::LogNormal { mu, sigma } => (mu + sigma * sample_std_normal(rng)).exp(),
            LatentLaw::Uniform { upper } => upper * rng.random::<f64>(),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            LatentLaw::Gamma { shape, scale } => shape * scale,
            LatentLaw::LogNormal { mu, sigma } => (mu + sigma * sigma / 2.0).exp(),
            LatentLaw::Uniform { upper } => upper / 2.0,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            LatentLaw::Gamma { shape, scale } => shape * scale * scale,
            LatentLaw::LogNormal { mu, sigma } => {
                ((sigma * sigma).exp() - 1.0) * (2.0 * mu + sigma * sigma).exp()
            }
            LatentLaw::Uniform { upper } => upper * upper / 12.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LatentLaw::Gamma { shape, scale } => shape > 0.0 && scale > 0.0,
            LatentLaw::LogNormal { mu, sigma } => mu.is_finite() && sigma > 0.0,
            LatentLaw::Uniform { upper } => upper > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid latent law {self:?}")))
        }
    }
}

impl fmt::Display for LatentLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LatentLaw::Gamma { shape, scale } => write!(f, "gamma({shape}, {scale})"),
            LatentLaw::LogNormal { mu, sigma } => write!(f, "lognormal({mu}, {sigma})"),
            LatentLaw::Uniform { upper } => write!(f, "uniform(0, {upper})"),
        }
    }
}

/// Lognormal parameters with the mean `a b` and variance `a b^2` of a
/// Gamma(a, scale b).
pub fn lognormal_match(a: f64, b: f64) -> (f64, f64) {
    let s2 = (1.0 + 1.0 / a).ln();
    ((a * b).ln() - s2 / 2.0, s2.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub latent_law: LatentLaw,
    pub beta_x: f64,
    pub beta_z: f64,
    pub n: usize,
    pub censor_frac: f64,
    pub n_reps: usize,
    pub weibull_shape: f64,
    pub weibull_scale: f64,
    pub seed: u64,
}

impl Default for SimScenario {
    fn default() -> Self {
        Self {
            latent_law: LatentLaw::Gamma {
                shape: 2.0 / 3.0,
                scale: 3.0,
            },
            beta_x: 0.5,
            beta_z: 0.1,
            n: 100,
            censor_frac: 0.0,
            n_reps: 1000,
            weibull_shape: 1.0,
            weibull_scale: 1.0,
            seed: 0,
        }
    }
}

/// Gamma (shape, scale) pairs of the four main scenarios.
pub const GAMMA_SCENARIOS: [(f64, f64); 4] = [(0.1, 9.0), (2.0 / 3.0, 3.0), (2.0, 1.0), (10.0, 1.0)];
pub const UNIFORM_UPPER: [f64; 3] = [1.8, 4.0, 20.0];

impl SimScenario {
    /// Named latent laws: `gamma1`-`gamma4`, the moment-matched
    /// `lognormal1`-`lognormal4`, and `uniform1`-`uniform3`.
    pub fn preset_law(name: &str) -> Option<LatentLaw> {
        let (family, idx) = name.split_at(name.find(|c: char| c.is_ascii_digit())?);
        let i: usize = idx.parse().ok()?;
        let i = i.checked_sub(1)?;
        match family {
            "gamma" => GAMMA_SCENARIOS.get(i).map(|&(shape, scale)| LatentLaw::Gamma { shape, scale }),
            "lognormal" => GAMMA_SCENARIOS.get(i).map(|&(a, b)| {
                let (mu, sigma) = lognormal_match(a, b);
                LatentLaw::LogNormal { mu, sigma }
            }),
            "uniform" => UNIFORM_UPPER.get(i).map(|&upper| LatentLaw::Uniform { upper }),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.latent_law.validate()?;
        if !(0.0..1.0).contains(&self.censor_frac) {
            return Err(Error::InvalidConfig(format!(
                "censor_frac = {} must lie in [0, 1)",
                self.censor_frac
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidConfig("n must be at least 2".into()));
        }
        if !(self.weibull_shape > 0.0 && self.weibull_scale > 0.0) {
            return Err(Error::InvalidConfig("Weibull shape and scale must be positive".into()));
        }
        if !(self.beta_x.is_finite() && self.beta_z.is_finite()) {
            return Err(Error::InvalidConfig("coefficients must be finite".into()));
        }
        Ok(())
    }

    /// Weibull PH event time: S(t | eta) = exp(-(t / scale)^shape e^eta).
    fn event_time<R: Rng + ?Sized>(&self, rng: &mut R, x: f64, z: f64) -> f64 {
        let eta = self.beta_x * x + self.beta_z * z;
        let e = sample_exponential(rng, 1.0);
        self.weibull_scale * (e * (-eta).exp()).powf(1.0 / self.weibull_shape)
    }

    /// Rate of exponential censoring giving the target censored fraction,
    /// solved by bisection on a pilot sample of event times.
    pub fn censoring_rate(&self) -> Result<Option<f64>> {
        self.validate()?;
        if self.censor_frac == 0.0 {
            return Ok(None);
        }
        let mut rng = stream_rng(self.seed, &[PILOT_STREAM]);
        let times: Vec<f64> = (0..PILOT_DRAWS)
            .map(|_| {
                let x = self.latent_law.sample(&mut rng);
                let z = sample_std_normal(&mut rng);
                self.event_time(&mut rng, x, z)
            })
            .collect();
        // P(C < T) = E[1 - exp(-r T)], increasing in r
        let frac = |r: f64| times.iter().map(|t| -(-r * t).exp_m1()).sum::<f64>() / times.len() as f64;
        let (mut lo, mut hi) = (0.0, 1.0);
        while frac(hi) < self.censor_frac {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::InvalidConfig("censoring rate calibration diverged".into()));
            }
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if frac(mid) < self.censor_frac {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Some(0.5 * (lo + hi)))
    }

    /// One replicate. `censoring_rate` comes from [`Self::censoring_rate`].
    pub fn generate<R: Rng + ?Sized>(&self, censoring_rate: Option<f64>, rng: &mut R) -> Result<SurvivalDataset> {
        let mut raw = RawDataset {
            z_names: vec!["z".into()],
            ..RawDataset::default()
        };
        let mut x_true = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            let x = self.latent_law.sample(rng);
            let z = sample_std_normal(rng);
            let t = self.event_time(rng, x, z);
            let c = censoring_rate.map_or(f64::INFINITY, |r| sample_exponential(rng, r));
            raw.time.push(t.min(c).max(f64::MIN_POSITIVE));
            raw.event.push(if t <= c { 1.0 } else { 0.0 });
            raw.w.push(sample_poisson(rng, x) as f64);
            raw.z.push(vec![z]);
            x_true.push(x);
        }
        raw.x_true = Some(x_true);
        validate_dataset(raw)
    }
}

/// Dataset generation for one scenario replicate, including censoring
/// calibration.
pub fn generate_dataset(scenario: &SimScenario, rng: &mut ChaCha8Rng) -> Result<SurvivalDataset> {
    let rate = scenario.censoring_rate()?;
    scenario.generate(rate, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    True,
    Naive,
    Simex,
    BayesGamma,
    DpMix,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [
        Estimator::True,
        Estimator::Naive,
        Estimator::Simex,
        Estimator::BayesGamma,
        Estimator::DpMix,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::True => "true",
            Estimator::Naive => "naive",
            Estimator::Simex => "simex",
            Estimator::BayesGamma => "bayes_gamma",
            Estimator::DpMix => "dp_mix",
        }
    }

    fn stream(&self) -> u64 {
        *self as u64 + 1
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Estimator::ALL.iter().map(|e| e.name()).collect();
                Error::InvalidConfig(format!(
                    "unknown estimator '{s}'; valid names are {}",
                    names.join(", ")
                ))
            })
    }
}

/// Settings shared by the estimators. `mcmc.seed` is ignored: chains draw
/// from per-replicate streams.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorConfig {
    pub mcmc: ModelConfig,
    pub prior: PriorSpec,
    pub simex: SimexConfig,
}

impl EstimatorConfig {
    /// Shortened chains: 5,000 burn-in sweeps and 5,000 retained draws.
    /// Knots are equally spaced, as in the reference study.
    pub fn desk() -> Self {
        Self {
            mcmc: ModelConfig {
                n_iter: 10_000,
                n_burn: 5_000,
                thin: 1,
                knots: KnotPlacement::EqualLength,
                ..ModelConfig::default()
            },
            prior: PriorSpec::default(),
            simex: SimexConfig::default(),
        }
    }

    /// Full-length chains: 200,000 sweeps, half burn-in, thinned by 10,
    /// with equally spaced knots.
    pub fn parity() -> Self {
        Self {
            mcmc: ModelConfig {
                knots: KnotPlacement::EqualLength,
                ..ModelConfig::default()
            },
            prior: PriorSpec::default(),
            simex: SimexConfig::default(),
        }
    }
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self::desk()
    }
}

fn posterior_means(data: &SurvivalDataset, mcmc: &ModelConfig, prior: &PriorSpec, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let draws = run_chain_with_rng(data, mcmc, prior, 0, rng)?;
    if draws.is_empty() {
        return Err(Error::TooFewDraws { required: 1, found: 0 });
    }
    Ok(draws
        .coefficient_columns()
        .iter()
        .map(|(_, c)| c.iter().sum::<f64>() / c.len() as f64)
        .collect())
}

fn cox_estimate(data: &SurvivalDataset, x: &[f64]) -> Result<Vec<f64>> {
    let z = data.z();
    let design = DMatrix::from_fn(data.n(), 1 + z.ncols(), |i, j| if j == 0 { x[i] } else { z[(i, j - 1)] });
    let fit = fit_cox(data.u(), data.delta(), &design)?;
    if !fit.converged {
        return Err(Error::NotConverged {
            iterations: fit.iterations,
        });
    }
    Ok(fit.coef)
}

/// Point estimate of (beta_x, beta_z...) from one estimator. Bayesian
/// estimators report posterior means.
pub fn estimate(
    estimator: Estimator,
    data: &SurvivalDataset,
    config: &EstimatorConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    match estimator {
        Estimator::True => {
            let x = data
                .x_true()
                .ok_or_else(|| Error::InvalidConfig("the true estimator needs x_true".into()))?;
            cox_estimate(data, x)
        }
        Estimator::Naive => cox_estimate(data, &data.surrogate()),
        Estimator::Simex => {
            let mut simex = config.simex.clone();
            simex.seed = rng.next_u64();
            Ok(fit_simex(data, &simex)?.extrapolated)
        }
        Estimator::BayesGamma => {
            let mcmc = ModelConfig {
                k_trunc: 1,
                ..config.mcmc
            };
            posterior_means(data, &mcmc, &config.prior, rng)
        }
        Estimator::DpMix => posterior_means(data, &config.mcmc, &config.prior, rng),
    }
}

/// One estimator on one replicate: estimates or the failure message.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateEstimate {
    pub replicate: usize,
    pub estimator: Estimator,
    pub estimate: std::result::Result<Vec<f64>, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub estimator: Estimator,
    pub parameter: String,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    pub mse: f64,
    /// `None` when there are fewer successful replicates than batches.
    pub bias_mcse: Option<f64>,
    pub mse_mcse: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn get(&self, estimator: Estimator, parameter: &str) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.parameter == parameter)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "estimator", "parameter", "truth", "mean", "bias", "bias_mcse", "mse", "mse_mcse", "n_ok",
            "n_failed",
        ])?;
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
        for r in &self.rows {
            w.write_record([
                r.estimator.name().to_string(),
                r.parameter.clone(),
                r.truth.to_string(),
                r.mean.to_string(),
                r.bias.to_string(),
                opt(r.bias_mcse),
                r.mse.to_string(),
                opt(r.mse_mcse),
                r.n_ok.to_string(),
                r.n_failed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Bias, MSE and batch-means MCSEs for every estimator and coefficient.
pub fn score(
    estimates: &[ReplicateEstimate],
    estimators: &[Estimator],
    truths: &[(String, f64)],
) -> MetricTable {
    let mut rows = Vec::new();
    for &est in estimators {
        let mut ok: Vec<&Vec<f64>> = Vec::new();
        let mut failed = 0;
        for r in estimates.iter().filter(|r| r.estimator == est) {
            match &r.estimate {
                Ok(v) => ok.push(v),
                Err(_) => failed += 1,
            }
        }
        for (j, (name, truth)) in truths.iter().enumerate() {
            let vals: Vec<f64> = ok.iter().map(|v| v[j]).collect();
            let sq: Vec<f64> = vals.iter().map(|v| (v - truth).powi(2)).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            rows.push(MetricRow {
                estimator: est,
                parameter: name.clone(),
                truth: *truth,
                mean,
                bias: mean - truth,
                mse: sq.iter().sum::<f64>() / n,
                bias_mcse: batch_means_mcse(&vals, MCSE_BATCHES).ok(),
                mse_mcse: batch_means_mcse(&sq, MCSE_BATCHES).ok(),
                n_ok: vals.len(),
                n_failed: failed,
            });
        }
    }
    MetricTable { rows }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub table: MetricTable,
    /// Replicate-major, estimators in the requested order.
    pub raw: Vec<ReplicateEstimate>,
}

impl ScenarioResult {
    /// One row per replicate and estimator; failures leave the values empty.
    pub fn write_raw_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["replicate", "estimator", "beta_x", "beta_z", "error"])?;
        for r in &self.raw {
            let (bx, bz, err) = match &r.estimate {
                Ok(v) => (v[0].to_string(), v[1].to_string(), String::new()),
                Err(e) => (String::new(), String::new(), e.clone()),
            };
            w.write_record([r.replicate.to_string(), r.estimator.name().to_string(), bx, bz, err])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs every estimator on `scenario.n_reps` replicates in parallel. Each
/// replicate's data come from stream (seed, replicate), so all estimators
/// see the same datasets regardless of scheduling.
pub fn run_scenario(
    scenario: &SimScenario,
    estimators: &[Estimator],
    config: &EstimatorConfig,
) -> Result<ScenarioResult> {
    if estimators.is_empty() {
        return Err(Error::InvalidConfig("no estimators requested".into()));
    }
    config.mcmc.validate()?;
    config.prior.validate()?;
    let rate = scenario.censoring_rate()?;
    let per_rep: Vec<Vec<ReplicateEstimate>> = (0..scenario.n_reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<ReplicateEstimate>> {
            let mut rng = stream_rng(scenario.seed, &[rep as u64]);
            let data = scenario.generate(rate, &mut rng)?;
            Ok(estimators
                .iter()
                .map(|&est| {
                    let mut rng = stream_rng(scenario.seed, &[rep as u64, est.stream()]);
                    ReplicateEstimate {
                        replicate: rep,
                        estimator: est,
                        estimate: estimate(est, &data, config, &mut rng).map_err(|e| e.to_string()),
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let raw: Vec<ReplicateEstimate> = per_rep.into_iter().flatten().collect();
    let truths = vec![("beta_x".to_string(), scenario.beta_x), ("beta_z".to_string(), scenario.beta_z)];
    Ok(ScenarioResult {
        table: score(&raw, estimators, &truths),
        raw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    H0,
    H1,
}

/// Quartiles of log BF10 at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BfSummary {
    pub n: usize,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub n_ok: usize,
    /// Replicates where the kernel estimate underflowed and the normal
    /// approximation was used instead.
    pub n_normal_fallback: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BfStudyConfig {
    pub estimator: EstimatorConfig,
    pub density: DensityMethod,
    pub seed: u64,
}

impl Default for BfStudyConfig {
    fn default() -> Self {
        Self {
            estimator: EstimatorConfig::desk(),
            density: DensityMethod::KDE,
            seed: 0,
        }
    }
}

/// Log BF10 for beta_x under the mixture model for one dataset, and whether
/// the normal approximation stood in for an underflowing kernel estimate.
pub fn log_bf10(data: &SurvivalDataset, config: &BfStudyConfig, rng: &mut ChaCha8Rng) -> Result<(f64, bool)> {
    let e = &config.estimator;
    let draws = run_chain_with_rng(data, &e.mcmc, &e.prior, 0, rng)?;
    match savage_dickey_bf10(&draws.beta_x, &e.prior.beta_x, 0.0, config.density) {
        Ok(r) => Ok((r.bf10.ln(), false)),
        Err(Error::ZeroDensity { .. }) => {
            let r = savage_dickey_bf10(&draws.beta_x, &e.prior.beta_x, 0.0, DensityMethod::Normal)?;
            Ok((r.bf10.ln(), true))
        }
        Err(e) => Err(e),
    }
}

/// Sampling distribution of log BF10 over sample sizes: Gamma(2/3, scale 3)
/// latent law, no censoring, beta_z = 0.1 and beta_x = 0.5 (H1) or 0 (H0).
pub fn bf_sampling_study(
    n_grid: &[usize],
    hypothesis: Hypothesis,
    n_reps: usize,
    config: &BfStudyConfig,
) -> Result<Vec<BfSummary>> {
    n_grid
        .iter()
        .enumerate()
        .map(|(gi, &n)| {
            let scenario = SimScenario {
                beta_x: if hypothesis == Hypothesis::H1 { 0.5 } else { 0.0 },
                n,
                n_reps,
                seed: config.seed,
                ..SimScenario::default()
            };
            scenario.validate()?;
            let results: Vec<Result<(f64, bool)>> = (0..n_reps)
                .into_par_iter()
                .map(|rep| {
                    let path = [gi as u64, rep as u64];
                    let mut rng = stream_rng(config.seed, &path);
                    let data = scenario.generate(None, &mut rng)?;
                    let mut chain_rng = stream_rng(config.seed, &[gi as u64, rep as u64, 1]);
                    log_bf10(&data, config, &mut chain_rng)
                })
                .collect();
            let mut values: Vec<f64> = Vec::new();
            let (mut fallback, mut failed) = (0, 0);
            for r in results {
                match r {
                    Ok((v, fb)) => {
                        values.push(v);
                        fallback += fb as usize;
                    }
                    Err(_) => failed += 1,
                }
            }
            values.sort_by(f64::total_cmp);
            let q = |p: f64| {
                if values.is_empty() {
                    f64::NAN
                } else {
                    crate::data::quantile_sorted(&values, p)
                }
            };
            Ok(BfSummary {
                n,
                q25: q(0.25),
                median: q(0.5),
                q75: q(0.75),
                n_ok: values.len(),
                n_normal_fallback: fallback,
                n_failed: failed,
            })
        })
        .collect()
}

pub fn write_bf_csv<W: Write>(rows: &[BfSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "q25_log_bf10", "median_log_bf10", "q75_log_bf10", "n_ok", "n_normal_fallback", "n_failed"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.q25.to_string(),
            r.median.to_string(),
            r.q75.to_string(),
            r.n_ok.to_string(),
            r.n_normal_fallback.to_string(),
            r.n_failed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
    }

    #[test]
    fn lognormal_match_examples() {
        let (mu, s) = lognormal_match(2.0 / 3.0, 3.0);
        assert!((mu - 0.235).abs() < 5e-4 && (s - 0.957).abs() < 5e-4, "{mu} {s}");
        let (mu, s) = lognormal_match(0.1, 9.0);
        assert!((mu + 1.304).abs() < 5e-4 && (s - 1.549).abs() < 5e-4, "{mu} {s}");
        let (mu, s) = lognormal_match(2.0, 1.0);
        assert!((mu - 0.490).abs() < 5e-4 && (s - 0.637).abs() < 5e-4);
        let (mu, s) = lognormal_match(10.0, 1.0);
        assert!((mu - 2.255).abs() < 5e-4 && (s - 0.309).abs() < 5e-4);
    }

    #[test]
    fn lognormal_moment_round_trip() {
        for &(a, b) in &GAMMA_SCENARIOS {
            let (mu, sigma) = lognormal_match(a, b);
            let law = LatentLaw::LogNormal { mu, sigma };
            assert!((law.mean() - a * b).abs() < 1e-10);
            assert!((law.variance() - a * b * b).abs() < 1e-10 * a * b * b);
        }
    }

    #[test]
    fn presets() {
        assert_eq!(
            SimScenario::preset_law("gamma2"),
            Some(LatentLaw::Gamma { shape: 2.0 / 3.0, scale: 3.0 })
        );
        assert_eq!(SimScenario::preset_law("uniform3"), Some(LatentLaw::Uniform { upper: 20.0 }));
        assert!(matches!(SimScenario::preset_law("lognormal4"), Some(LatentLaw::LogNormal { .. })));
        assert_eq!(SimScenario::preset_law("gamma5"), None);
        assert_eq!(SimScenario::preset_law("gamma0"), None);
        assert_eq!(SimScenario::preset_law("beta1"), None);
    }

    /// Kolmogorov-Smirnov statistic against Exp(1).
    fn ks_exp1(mut t: Vec<f64>) -> f64 {
        t.sort_by(f64::total_cmp);
        let n = t.len() as f64;
        t.iter()
            .enumerate()
            .map(|(i, &v)| {
                let f = 1.0 - (-v).exp();
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn null_times_are_unit_exponential() {
        let s = SimScenario {
            beta_x: 0.0,
            beta_z: 0.0,
            n: 10_000,
            ..SimScenario::default()
        };
        let d = generate_dataset(&s, &mut stream_rng(1, &[])).unwrap();
        assert!(d.delta().iter().all(|&e| e));
        // 1% critical value
        assert!(ks_exp1(d.u().to_vec()) < 1.628 / 100.0);
    }

    #[test]
    fn variance_ratio_of_gamma_scenarios() {
        for &(a, b) in &GAMMA_SCENARIOS {
            let law = LatentLaw::Gamma { shape: a, scale: b };
            let mut rng = stream_rng(2, &[]);
            let n = 100_000;
            let mut x = Vec::with_capacity(n);
            let mut w = Vec::with_capacity(n);
            for _ in 0..n {
                let v = law.sample(&mut rng);
                x.push(v);
                w.push(sample_poisson(&mut rng, v) as f64);
            }
            let ratio = var(&x) / var(&w);
            let expect = a * b * b / (a * b + a * b * b);
            // delta-method SE from 20 independent sub-blocks
            let blocks: Vec<f64> = (0..20)
                .map(|k| {
                    let r = k * n / 20..(k + 1) * n / 20;
                    var(&x[r.clone()]) / var(&w[r])
                })
                .collect();
            let se = (var(&blocks) / 20.0).sqrt();
            assert!((ratio - expect).abs() < 3.0 * se.max(1e-4), "{a} {b}: {ratio} {expect} {se}");
        }
    }

    #[test]
    fn censoring_hits_target() {
        let s = SimScenario {
            censor_frac: 0.2,
            n: 50_000,
            seed: 3,
            ..SimScenario::default()
        };
        let d = generate_dataset(&s, &mut stream_rng(3, &[0])).unwrap();
        let frac = 1.0 - d.n_events() as f64 / d.n() as f64;
        assert!((frac - 0.2).abs() < 0.01, "{frac}");
    }

    #[test]
    fn estimator_names_round_trip() {
        for e in Estimator::ALL {
            assert_eq!(e.name().parse::<Estimator>().unwrap(), e);
        }
        let err = "bogus".parse::<Estimator>().unwrap_err().to_string();
        assert!(err.contains("dp_mix") && err.contains("naive"));
    }

    #[test]
    fn single_replicate_has_no_mcse() {
        let s = SimScenario {
            n_reps: 1,
            ..SimScenario::default()
        };
        let r = run_scenario(&s, &[Estimator::True], &EstimatorConfig::desk()).unwrap();
        let row = r.table.get(Estimator::True, "beta_x").unwrap();
        assert!(row.bias.is_finite());
        assert_eq!(row.bias_mcse, None);
    }

    #[test]
    fn frequentist_scenario_is_reproducible() {
        let s = SimScenario {
            n_reps: 20,
            censor_frac: 0.2,
            seed: 9,
            ..SimScenario::default()
        };
        let ests = [Estimator::True, Estimator::Naive];
        let a = run_scenario(&s, &ests, &EstimatorConfig::desk()).unwrap();
        let b = run_scenario(&s, &ests, &EstimatorConfig::desk()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.table.rows.len(), 4);
        for row in &a.table.rows {
            assert!(row.mse >= row.bias * row.bias - 1e-12);
            assert!(row.bias_mcse.unwrap() > 0.0);
        }
        // attenuation of the naive estimate
        let naive = a.table.get(Estimator::Naive, "beta_x").unwrap().mean;
        let truth = a.table.get(Estimator::True, "beta_x").unwrap().mean;
        assert!(naive < truth);
    }

    #[test]
    fn score_by_hand() {
        let raw: Vec<ReplicateEstimate> = (0..3)
            .map(|i| ReplicateEstimate {
                replicate: i,
                estimator: Estimator::Naive,
                estimate: if i == 2 { Err("x".into()) } else { Ok(vec![i as f64, 0.0]) },
            })
            .collect();
        let t = score(&raw, &[Estimator::Naive], &[("beta_x".into(), 0.5), ("beta_z".into(), 0.0)]);
        let r = t.get(Estimator::Naive, "beta_x").unwrap();
        assert_eq!((r.mean, r.bias, r.mse, r.n_ok, r.n_failed), (0.5, 0.0, 0.25, 2, 1));
    }

    #[test]
    fn empty_bf_grid() {
        let r = bf_sampling_study(&[], Hypothesis::H1, 10, &BfStudyConfig::default()).unwrap();
        assert!(r.is_empty());
    }
}
