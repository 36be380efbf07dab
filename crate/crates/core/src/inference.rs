//! Posterior summaries, HPD intervals and Savage-Dickey Bayes factors.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::CoefficientPrior;
use crate::dist::ln_normal_pdf;
use crate::error::{Error, Result};

/// Minimum number of draws for an HPD interval.
pub const MIN_HPD_DRAWS: usize = 100;

fn mean_sd(draws: &[f64]) -> (f64, f64) {
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Shortest interval holding `ceil(level * S)` of the sorted draws. Among
/// windows of equal width the one with the smallest lower bound wins.
pub fn hpd_interval(draws: &[f64], level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("HPD level {level} must lie in (0, 1)")));
    }
    if draws.len() < MIN_HPD_DRAWS {
        return Err(Error::TooFewDraws {
            required: MIN_HPD_DRAWS,
            found: draws.len(),
        });
    }
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let k = ((level * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for i in 0..=n - k {
        let width = s[i + k - 1] - s[i];
        if width < best_width {
            best_width = width;
            best = i;
        }
    }
    Ok((s[best], s[best + k - 1]))
}

/// Silverman's rule-of-thumb bandwidth `0.9 min(sd, IQR/1.34) n^(-1/5)`,
/// falling back to the SD when the IQR is zero.
pub fn silverman_bandwidth(draws: &[f64]) -> f64 {
    let (_, sd) = mean_sd(draws);
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    let iqr = crate::data::quantile_sorted(&s, 0.75) - crate::data::quantile_sorted(&s, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (draws.len() as f64).powf(-0.2)
}

/// Gaussian kernel density estimate at `at`.
pub fn kde_density(draws: &[f64], at: f64, bandwidth: f64) -> f64 {
    let norm = (2.0 * std::f64::consts::PI).sqrt() * bandwidth * draws.len() as f64;
    draws
        .iter()
        .map(|d| (-0.5 * ((at - d) / bandwidth).powi(2)).exp())
        .sum::<f64>()
        / norm
}

/// How the marginal posterior density at the test value is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum DensityMethod {
    /// Gaussian KDE; `None` selects Silverman's bandwidth.
    Kde { bandwidth: Option<f64> },
    /// Normal density with the posterior mean and variance.
    Normal,
}

impl DensityMethod {
    pub const KDE: DensityMethod = DensityMethod::Kde { bandwidth: None };
}

impl Default for DensityMethod {
    fn default() -> Self {
        Self::KDE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesFactorResult {
    pub bf10: f64,
    pub posterior_density: f64,
    pub prior_density: f64,
    /// Kernel bandwidth, absent for the normal approximation.
    pub bandwidth: Option<f64>,
}

/// Savage-Dickey Bayes factor for `beta = test_value` against its
/// complement: BF10 = prior(test_value) / posterior(test_value).
pub fn savage_dickey_bf10(
    draws: &[f64],
    prior: &CoefficientPrior,
    test_value: f64,
    method: DensityMethod,
) -> Result<BayesFactorResult> {
    if draws.len() < 2 {
        return Err(Error::TooFewDraws {
            required: 2,
            found: draws.len(),
        });
    }
    let prior_density = prior.pdf(test_value);
    if !(prior_density > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "prior density at {test_value} is not positive"
        )));
    }
    let (posterior_density, bandwidth) = match method {
        DensityMethod::Kde { bandwidth } => {
            let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(draws));
            if !(h > 0.0) {
                return Err(Error::InvalidConfig(format!("bandwidth {h} must be positive")));
            }
            (kde_density(draws, test_value, h), Some(h))
        }
        DensityMethod::Normal => {
            let (mean, sd) = mean_sd(draws);
            (ln_normal_pdf(test_value, mean, sd * sd).exp(), None)
        }
    };
    if !(posterior_density > 0.0) {
        let min_distance = draws
            .iter()
            .map(|d| (d - test_value).abs())
            .fold(f64::INFINITY, f64::min);
        return Err(Error::ZeroDensity {
            test_value,
            min_distance,
        });
    }
    Ok(BayesFactorResult {
        bf10: prior_density / posterior_density,
        posterior_density,
        prior_density,
        bandwidth,
    })
}

/// Summary of one coefficient. HR columns are the exponentials of the
/// coefficient columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub hpd_lower: f64,
    pub hpd_upper: f64,
    pub hr: f64,
    pub hr_lower: f64,
    pub hr_upper: f64,
}

pub fn summarize(name: &str, draws: &[f64], level: f64) -> Result<ParamSummary> {
    let (lower, upper) = hpd_interval(draws, level)?;
    let (mean, sd) = mean_sd(draws);
    Ok(ParamSummary {
        name: name.to_string(),
        mean,
        sd,
        hpd_lower: lower,
        hpd_upper: upper,
        hr: mean.exp(),
        hr_lower: lower.exp(),
        hr_upper: upper.exp(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub params: Vec<ParamSummary>,
}

impl PosteriorSummary {
    pub fn from_columns(columns: &[(String, Vec<f64>)], level: f64) -> Result<Self> {
        let params = columns
            .iter()
            .map(|(name, d)| summarize(name, d, level))
            .collect::<Result<_>>()?;
        Ok(Self { params })
    }

    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// One line of a results table: coefficient, hazard ratio with interval,
/// and a Bayes factor (Bayesian fits) or p-value (frequentist fits).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub param: String,
    pub coef: f64,
    pub hr: f64,
    pub hr_lower: f64,
    pub hr_upper: f64,
    pub bf10: Option<f64>,
}

impl From<&ParamSummary> for SummaryRow {
    fn from(p: &ParamSummary) -> Self {
        Self {
            param: p.name.clone(),
            coef: p.mean,
            hr: p.hr,
            hr_lower: p.hr_lower,
            hr_upper: p.hr_upper,
            bf10: None,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// CSV with header `param,coef,hr,hr_lower,hr_upper,bf10`.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["param", "coef", "hr", "hr_lower", "hr_upper", "bf10"])?;
    for r in rows {
        w.write_record([
            r.param.clone(),
            r.coef.to_string(),
            r.hr.to_string(),
            r.hr_lower.to_string(),
            r.hr_upper.to_string(),
            opt(r.bf10),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn format_summary_table(rows: &[SummaryRow], last_column: &str) -> String {
    let width = rows.iter().map(|r| r.param.len()).max().unwrap_or(0).max(9);
    let mut s = format!(
        "{:<width$} {:>9} {:>9} {:>9} {:>9} {:>10}\n",
        "Parameter", "Coef", "HR", "HR lower", "HR upper", last_column
    );
    for r in rows {
        let last = r.bf10.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(
            s,
            "{:<width$} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>10}",
            r.param, r.coef, r.hr, r.hr_lower, r.hr_upper, last
        );
    }
    s
}

/// Priors of the sensitivity protocol for the biomarker coefficient.
pub fn sensitivity_priors() -> Vec<CoefficientPrior> {
    let mut v: Vec<CoefficientPrior> = [0.01, 1.0, 10.0, 100.0]
        .into_iter()
        .map(|var| CoefficientPrior::Normal { mean: 0.0, var })
        .collect();
    v.push(CoefficientPrior::Cauchy {
        location: 0.0,
        scale: 1.0,
    });
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub prior: String,
    pub summary: ParamSummary,
    pub bayes_factor: BayesFactorResult,
}

/// One row per prior, each from the draws produced under that prior.
pub fn prior_sensitivity(
    draw_sets: &[(CoefficientPrior, Vec<f64>)],
    test_value: f64,
    level: f64,
    method: DensityMethod,
) -> Result<Vec<SensitivityRow>> {
    draw_sets
        .iter()
        .map(|(prior, draws)| {
            Ok(SensitivityRow {
                prior: prior.label(),
                summary: summarize("beta_x", draws, level)?,
                bayes_factor: savage_dickey_bf10(draws, prior, test_value, method)?,
            })
        })
        .collect()
}

pub fn write_sensitivity_csv<W: Write>(rows: &[SensitivityRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["prior", "coef", "hr", "hr_lower", "hr_upper", "bf10", "bandwidth"])?;
    for r in rows {
        w.write_record([
            r.prior.clone(),
            r.summary.mean.to_string(),
            r.summary.hr.to_string(),
            r.summary.hr_lower.to_string(),
            r.summary.hr_upper.to_string(),
            r.bayes_factor.bf10.to_string(),
            opt(r.bayes_factor.bandwidth),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{sample_std_normal, stream_rng};
    use proptest::prelude::*;

    fn normals(seed: u64, n: usize, mean: f64, sd: f64) -> Vec<f64> {
        let mut rng = stream_rng(seed, &[]);
        (0..n).map(|_| mean + sd * sample_std_normal(&mut rng)).collect()
    }

    #[test]
    fn hpd_of_uniform_grid() {
        let d: Vec<f64> = (1..=100).map(f64::from).collect();
        let (lo, hi) = hpd_interval(&d, 0.95).unwrap();
        assert_eq!(hi - lo, 94.0);
        assert_eq!(lo, 1.0);
    }

    #[test]
    fn hpd_of_identical_draws() {
        assert_eq!(hpd_interval(&[3.0; 200], 0.9).unwrap(), (3.0, 3.0));
    }

    #[test]
    fn hpd_needs_draws_and_a_level() {
        assert!(matches!(hpd_interval(&[1.0; 99], 0.9), Err(Error::TooFewDraws { .. })));
        assert!(hpd_interval(&[1.0; 200], 1.0).is_err());
    }

    #[test]
    fn hpd_of_normal_is_equal_tailed() {
        let d = normals(1, 100_000, 0.0, 1.0);
        let (lo, hi) = hpd_interval(&d, 0.95).unwrap();
        let mut s = d.clone();
        s.sort_by(f64::total_cmp);
        let (q_lo, q_hi) = (
            crate::data::quantile_sorted(&s, 0.025),
            crate::data::quantile_sorted(&s, 0.975),
        );
        // HPD endpoints converge at n^(-1/3), so the slack is wider than for quantiles
        assert!(hi - lo <= q_hi - q_lo + 1e-12);
        assert!((lo - q_lo).abs() < 0.1 && (hi - q_hi).abs() < 0.1, "{lo} {hi} {q_lo} {q_hi}");
        assert!(((hi - lo) / (q_hi - q_lo) - 1.0).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn hpd_is_shortest_window(d in prop::collection::vec(-50.0f64..50.0, 100..300), level in 0.5f64..0.99) {
            let (lo, hi) = hpd_interval(&d, level).unwrap();
            let mut s = d.clone();
            s.sort_by(f64::total_cmp);
            let k = (level * s.len() as f64 - 1e-9).ceil() as usize;
            let inside = s.iter().filter(|&&v| v >= lo && v <= hi).count();
            prop_assert!(inside >= k);
            for i in 0..=s.len() - k {
                prop_assert!(s[i + k - 1] - s[i] >= hi - lo);
            }
        }
    }

    #[test]
    fn prior_draws_give_unit_bayes_factor() {
        let prior = CoefficientPrior::Normal { mean: 0.0, var: 1.0 };
        let d = normals(2, 10_000, 0.0, 1.0);
        let r = savage_dickey_bf10(&d, &prior, 0.0, DensityMethod::KDE).unwrap();
        assert!((r.bf10 - 1.0).abs() < 0.15, "{r:?}");
        let r = savage_dickey_bf10(&d, &prior, 0.0, DensityMethod::Normal).unwrap();
        assert!((r.bf10 - 1.0).abs() < 0.05, "{r:?}");
    }

    #[test]
    fn kde_matches_direct_sum() {
        let d = [0.0, 1.0, 3.0];
        let h = 0.5;
        let phi = |u: f64| (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let expect = (phi(1.0 / h) + phi(0.0) + phi(-2.0 / h)) / (3.0 * h);
        assert!((kde_density(&d, 1.0, h) - expect).abs() < 1e-15);
    }

    #[test]
    fn silverman_on_normal_sample() {
        let d = normals(3, 10_000, 5.0, 2.0);
        let h = silverman_bandwidth(&d);
        let expect = 0.9 * 2.0 * 10_000f64.powf(-0.2);
        assert!((h / expect - 1.0).abs() < 0.05, "{h} {expect}");
    }

    #[test]
    fn bandwidth_override_is_reported() {
        let prior = CoefficientPrior::Normal { mean: 0.0, var: 1.0 };
        let d = normals(4, 1000, 0.0, 1.0);
        let r = savage_dickey_bf10(&d, &prior, 0.0, DensityMethod::Kde { bandwidth: Some(0.3) }).unwrap();
        assert_eq!(r.bandwidth, Some(0.3));
        assert!((r.bf10 - r.prior_density / r.posterior_density).abs() < 1e-15);
    }

    #[test]
    fn underflow_reports_distance() {
        let prior = CoefficientPrior::Normal { mean: 0.0, var: 1.0 };
        let d = normals(5, 1000, 100.0, 0.1);
        match savage_dickey_bf10(&d, &prior, 0.0, DensityMethod::KDE) {
            Err(Error::ZeroDensity { min_distance, .. }) => assert!(min_distance > 99.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bf_is_linear_in_prior_density() {
        let d = normals(6, 2000, 0.4, 0.3);
        let a = CoefficientPrior::Normal { mean: 0.0, var: 0.01 };
        let b = CoefficientPrior::Normal { mean: 0.0, var: 100.0 };
        let ra = savage_dickey_bf10(&d, &a, 0.0, DensityMethod::KDE).unwrap();
        let rb = savage_dickey_bf10(&d, &b, 0.0, DensityMethod::KDE).unwrap();
        assert!((ra.bf10 / rb.bf10 - a.pdf(0.0) / b.pdf(0.0)).abs() < 1e-9);
        assert!((ra.bf10 / rb.bf10 - 100.0).abs() < 1e-9);
    }

    #[test]
    fn cauchy_prior_density_at_zero() {
        let d = normals(7, 2000, 0.0, 1.0);
        let c = CoefficientPrior::Cauchy { location: 0.0, scale: 1.0 };
        let r = savage_dickey_bf10(&d, &c, 0.0, DensityMethod::KDE).unwrap();
        assert!((r.prior_density - std::f64::consts::FRAC_1_PI).abs() < 1e-15);
    }

    #[test]
    fn canned_priors_and_sensitivity_rows() {
        let priors = sensitivity_priors();
        assert_eq!(priors.len(), 5);
        let d = normals(8, 1000, 0.1, 0.2);
        let sets: Vec<_> = priors.iter().map(|p| (*p, d.clone())).collect();
        let rows = prior_sensitivity(&sets, 0.0, 0.95, DensityMethod::KDE).unwrap();
        assert_eq!(rows.len(), 5);
        for w in rows[..4].windows(2) {
            assert!(w[0].bayes_factor.bf10 > w[1].bayes_factor.bf10);
        }
        assert_eq!(rows[4].prior, "Cauchy(0, 1)");
    }

    #[test]
    fn hr_bounds_are_exponentials() {
        let d = normals(9, 500, 0.3, 0.1);
        let s = summarize("beta_x", &d, 0.95).unwrap();
        assert_eq!(s.hr_lower.to_bits(), s.hpd_lower.exp().to_bits());
        assert_eq!(s.hr_upper.to_bits(), s.hpd_upper.exp().to_bits());
        assert!(s.hpd_lower < s.hpd_upper);
    }

    #[test]
    fn summary_csv_columns() {
        let rows = vec![SummaryRow {
            param: "beta_x".into(),
            coef: 0.5,
            hr: 0.5f64.exp(),
            hr_lower: 1.0,
            hr_upper: 2.0,
            bf10: Some(3.0),
        }];
        let mut buf = Vec::new();
        write_summary_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "param,coef,hr,hr_lower,hr_upper,bf10");
        assert!(format_summary_table(&rows, "BF10").contains("beta_x"));
    }
}
