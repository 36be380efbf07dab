//! Flat `key = value` configuration files.
//!
//! One setting per line; `#` starts a comment; blank lines are ignored.
//! Every key must be consumed by the subcommand, so typos are reported.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use poisurv::data::{BaseMeasure, CoefficientPrior, KnotPlacement, ModelConfig, PriorSpec};
use poisurv::inference::DensityMethod;

use crate::CliError;

#[derive(Debug, Default)]
pub struct Config {
    entries: BTreeMap<String, (String, usize)>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Input(format!("config line {}: expected `key = value`", i + 1)))?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(CliError::Input(format!("config line {}: empty key", i + 1)));
            }
            if entries.insert(key.clone(), (value.trim().to_string(), i + 1)).is_some() {
                return Err(CliError::Input(format!("config line {}: `{key}` set twice", i + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: Option<&std::path::Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    /// Removes and parses `key`.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((value, line)) => value
                .parse()
                .map(Some)
                .map_err(|e| CliError::Input(format!("config line {line}: `{key} = {value}`: {e}"))),
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((value, line)) => value
                .split(',')
                .map(|s| s.trim().parse::<T>())
                .collect::<Result<Vec<T>, _>>()
                .map(Some)
                .map_err(|e| CliError::Input(format!("config line {line}: `{key} = {value}`: {e}"))),
        }
    }

    /// Fails on any key no one asked for.
    pub fn finish(self) -> Result<(), CliError> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (_, line))) => Err(CliError::Input(format!(
                "config line {line}: unknown key `{key}` (see --help for accepted keys)"
            ))),
        }
    }
}

fn parse_knots(s: &str) -> Result<KnotPlacement, CliError> {
    match s {
        "quantile" => Ok(KnotPlacement::Quantile),
        "equal_length" => Ok(KnotPlacement::EqualLength),
        _ => Err(CliError::Input(format!(
            "knots = {s}: expected `quantile` or `equal_length`"
        ))),
    }
}

/// Sampler schedule and model size keys.
pub fn model_config(cfg: &mut Config, base: ModelConfig) -> Result<ModelConfig, CliError> {
    let knots = match cfg.take::<String>("knots")? {
        Some(s) => parse_knots(&s)?,
        None => base.knots,
    };
    let out = ModelConfig {
        m_intervals: cfg.take_or("m_intervals", base.m_intervals)?,
        knots,
        k_trunc: cfg.take_or("k_trunc", base.k_trunc)?,
        n_iter: cfg.take_or("n_iter", base.n_iter)?,
        n_burn: cfg.take_or("n_burn", base.n_burn)?,
        thin: cfg.take_or("thin", base.thin)?,
        seed: base.seed,
        store_latent: base.store_latent,
    };
    out.validate()?;
    Ok(out)
}

/// Prior hyperparameter keys.
pub fn prior_spec(cfg: &mut Config, base: PriorSpec) -> Result<PriorSpec, CliError> {
    let beta_x = match cfg.take::<String>("beta_x_prior")?.as_deref() {
        None | Some("normal") => {
            let (mean, var) = match base.beta_x {
                CoefficientPrior::Normal { mean, var } => (mean, var),
                CoefficientPrior::Cauchy { location, .. } => (location, 100.0),
            };
            CoefficientPrior::Normal {
                mean: cfg.take_or("beta_x_mean", mean)?,
                var: cfg.take_or("beta_x_var", var)?,
            }
        }
        Some("cauchy") => CoefficientPrior::Cauchy {
            location: cfg.take_or("beta_x_location", 0.0)?,
            scale: cfg.take_or("beta_x_scale", 1.0)?,
        },
        Some(other) => {
            return Err(CliError::Input(format!(
                "beta_x_prior = {other}: expected `normal` or `cauchy`"
            )))
        }
    };
    let out = PriorSpec {
        hazard_shape: cfg.take_or("hazard_shape", base.hazard_shape)?,
        hazard_rate: cfg.take_or("hazard_rate", base.hazard_rate)?,
        beta_z_mean: cfg.take_or("beta_z_mean", base.beta_z_mean)?,
        beta_z_var: cfg.take_or("beta_z_var", base.beta_z_var)?,
        beta_x,
        alpha_log_mean: cfg.take_or("alpha_log_mean", base.alpha_log_mean)?,
        alpha_log_var: cfg.take_or("alpha_log_var", base.alpha_log_var)?,
        base: BaseMeasure {
            shape_shape: cfg.take_or("g0_shape_shape", base.base.shape_shape)?,
            shape_rate: cfg.take_or("g0_shape_rate", base.base.shape_rate)?,
            scale_shape: cfg.take_or("g0_scale_shape", base.base.scale_shape)?,
            scale_rate: cfg.take_or("g0_scale_rate", base.base.scale_rate)?,
        },
    };
    out.validate()?;
    Ok(out)
}

/// `bf_density` and `bf_bandwidth` keys.
pub fn density_method(cfg: &mut Config) -> Result<DensityMethod, CliError> {
    let bandwidth: Option<f64> = cfg.take("bf_bandwidth")?;
    match cfg.take::<String>("bf_density")?.as_deref() {
        None | Some("kde") => Ok(DensityMethod::Kde { bandwidth }),
        Some("normal") if bandwidth.is_none() => Ok(DensityMethod::Normal),
        Some("normal") => Err(CliError::Input("bf_bandwidth applies only to bf_density = kde".into())),
        Some(other) => Err(CliError::Input(format!(
            "bf_density = {other}: expected `kde` or `normal`"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let mut c = Config::parse("# header\n n_iter = 50 # trailing\n\nknots=equal_length\n").unwrap();
        assert_eq!(c.take::<usize>("n_iter").unwrap(), Some(50));
        assert_eq!(c.take::<String>("knots").unwrap().as_deref(), Some("equal_length"));
        assert_eq!(c.take::<usize>("n_iter").unwrap(), None);
        c.finish().unwrap();
    }

    #[test]
    fn rejects_malformed_lines_and_duplicates() {
        assert!(matches!(Config::parse("n_iter 50"), Err(CliError::Input(_))));
        assert!(matches!(Config::parse("a=1\na=2"), Err(CliError::Input(_))));
        assert!(matches!(Config::parse("=3"), Err(CliError::Input(_))));
    }

    #[test]
    fn bad_values_name_the_line() {
        let mut c = Config::parse("\nthin = many").unwrap();
        let err = c.take::<usize>("thin").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn unknown_keys_are_reported() {
        let c = Config::parse("n_itre = 5").unwrap();
        assert!(c.finish().unwrap_err().to_string().contains("n_itre"));
    }

    #[test]
    fn lists() {
        let mut c = Config::parse("lambda_grid = 0, 1,2.5").unwrap();
        assert_eq!(c.take_list::<f64>("lambda_grid").unwrap(), Some(vec![0.0, 1.0, 2.5]));
    }

    #[test]
    fn model_and_prior_overrides() {
        let mut c = Config::parse(
            "k_trunc = 3\nknots = equal_length\nbeta_x_prior = cauchy\nbeta_x_scale = 2.5\ng0_scale_rate = 4",
        )
        .unwrap();
        let m = model_config(&mut c, ModelConfig::default()).unwrap();
        let p = prior_spec(&mut c, PriorSpec::default()).unwrap();
        c.finish().unwrap();
        assert_eq!(m.k_trunc, 3);
        assert_eq!(m.knots, KnotPlacement::EqualLength);
        assert_eq!(m.n_iter, ModelConfig::default().n_iter);
        assert_eq!(
            p.beta_x,
            CoefficientPrior::Cauchy {
                location: 0.0,
                scale: 2.5
            }
        );
        assert_eq!(p.base.scale_rate, 4.0);
        assert_eq!(p.hazard_shape, PriorSpec::default().hazard_shape);
    }

    #[test]
    fn invalid_model_values_are_input_errors() {
        let mut c = Config::parse("thin = 0").unwrap();
        assert!(matches!(model_config(&mut c, ModelConfig::default()), Err(CliError::Input(_))));
        let mut c = Config::parse("hazard_rate = -1").unwrap();
        assert!(matches!(prior_spec(&mut c, PriorSpec::default()), Err(CliError::Input(_))));
    }
}
