use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::json;

use poisurv::data::{ModelConfig, PriorSpec, SurvivalDataset};
use poisurv::inference::{
    format_summary_table, prior_sensitivity, savage_dickey_bf10, sensitivity_priors, write_sensitivity_csv,
    write_summary_csv, BayesFactorResult, DensityMethod, PosteriorSummary, SummaryRow,
};
use poisurv::io::{read_csv, read_json, write_csv, write_json};
use poisurv::mcmc::{run_chains, write_draws_csv};
use poisurv::sim::{
    bf_sampling_study, run_scenario, write_bf_csv, BfStudyConfig, Estimator, EstimatorConfig, Hypothesis,
    LatentLaw, SimScenario,
};
use poisurv::simex::{fit_simex, simex_bootstrap_se, write_curve_csv, write_fit_csv, SimexConfig};
use poisurv::Error;

use crate::config::{density_method, model_config, prior_spec, Config};
use crate::{create_out_dir, internal, CliError, Common, RunRecord, Status};

const RHAT_WARNING: f64 = 1.05;

fn read_dataset(path: &Path) -> Result<SurvivalDataset, CliError> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let data = if is_json { read_json(reader) } else { read_csv(reader) };
    data.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Internal(format!("cannot create {}: {e}", path.display())))
}

fn write_with<F>(dir: &Path, name: &str, f: F) -> Result<(), CliError>
where
    F: FnOnce(BufWriter<File>) -> poisurv::Result<()>,
{
    f(create(dir, name)?).map_err(internal(name))
}

/// BF10 at 0, falling back to the normal approximation when the kernel
/// estimate underflows.
fn bf10_with_fallback(
    draws: &[f64],
    prior: &poisurv::data::CoefficientPrior,
    method: DensityMethod,
) -> Result<(BayesFactorResult, bool), CliError> {
    match savage_dickey_bf10(draws, prior, 0.0, method) {
        Ok(r) => Ok((r, false)),
        Err(Error::ZeroDensity { .. }) => Ok((savage_dickey_bf10(draws, prior, 0.0, DensityMethod::Normal)?, true)),
        Err(e) => Err(e.into()),
    }
}

#[derive(Args)]
pub struct FitArgs {
    /// Dataset (CSV, or JSON records for a .json path) with columns
    /// time, event, w, optional area and x_true; other columns are covariates.
    pub data: PathBuf,
    /// Output directory.
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
    /// Also refit under each prior of the sensitivity protocol for beta_x
    /// and write prior-sensitivity.csv.
    #[arg(long)]
    pub prior_sensitivity: bool,
    #[command(flatten)]
    pub common: Common,
}

pub fn fit(args: &FitArgs, cfg: &mut Config, seed: u64) -> Result<(RunRecord, Status), CliError> {
    let mut model = model_config(cfg, ModelConfig::default())?;
    model.seed = seed;
    let prior = prior_spec(cfg, PriorSpec::default())?;
    let n_chains: usize = cfg.take_or("chains", 4)?;
    let level: f64 = cfg.take_or("hpd_level", 0.95)?;
    let method = density_method(cfg)?;
    std::mem::take(cfg).finish()?;
    if n_chains == 0 {
        return Err(CliError::Input("chains must be at least 1".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(CliError::Input(format!("hpd_level = {level} must lie in (0, 1)")));
    }

    let data = read_dataset(&args.data)?;
    create_out_dir(&args.out)?;
    let set = run_chains(&data, &model, &prior, n_chains)?;
    write_with(&args.out, "posterior-draws.csv", |w| write_draws_csv(&set.chains, w))?;

    let columns = set.pooled_coefficients();
    let summary = PosteriorSummary::from_columns(&columns, level)?;
    let mut rows = Vec::new();
    let mut fallbacks = Vec::new();
    for ((name, draws), p) in columns.iter().zip(&summary.params) {
        let coef_prior = if name == "beta_x" {
            prior.beta_x
        } else {
            poisurv::data::CoefficientPrior::Normal {
                mean: prior.beta_z_mean,
                var: prior.beta_z_var,
            }
        };
        let (bf, fell_back) = bf10_with_fallback(draws, &coef_prior, method)?;
        if fell_back {
            fallbacks.push(name.clone());
        }
        rows.push(SummaryRow {
            bf10: Some(bf.bf10),
            ..SummaryRow::from(p)
        });
    }
    write_with(&args.out, "summary.csv", |w| write_summary_csv(&rows, w))?;
    let table = format_summary_table(&rows, "BF10");
    std::fs::write(args.out.join("summary.txt"), &table).map_err(internal("summary.txt"))?;
    print!("{table}");
    if !fallbacks.is_empty() {
        eprintln!(
            "note: kernel density underflowed at 0 for {}; BF10 uses the normal approximation",
            fallbacks.join(", ")
        );
    }

    if let Some(diag) = &set.diagnostics {
        write_with(&args.out, "diagnostics.csv", |out| {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["param", "rhat", "ess"])?;
            for d in diag {
                w.write_record([d.name.clone(), d.rhat.to_string(), d.ess.to_string()])?;
            }
            w.flush()?;
            Ok(())
        })?;
    }

    let mut sensitivity_method = None;
    if args.prior_sensitivity {
        let mut sets = Vec::new();
        for p in sensitivity_priors() {
            let alt = PriorSpec { beta_x: p, ..prior };
            let s = run_chains(&data, &model, &alt, n_chains)?;
            let beta_x: Vec<f64> = s.chains.iter().flat_map(|c| c.beta_x.iter().copied()).collect();
            sets.push((p, beta_x));
        }
        let rows = match prior_sensitivity(&sets, 0.0, level, method) {
            Err(Error::ZeroDensity { .. }) => {
                eprintln!("note: kernel density underflowed at 0; sensitivity BF10 uses the normal approximation");
                sensitivity_method = Some(DensityMethod::Normal);
                prior_sensitivity(&sets, 0.0, level, DensityMethod::Normal)?
            }
            r => {
                sensitivity_method = Some(method);
                r?
            }
        };
        write_with(&args.out, "prior-sensitivity.csv", |w| write_sensitivity_csv(&rows, w))?;
    }

    let status = match set.max_rhat() {
        Some(r) if !(r <= RHAT_WARNING) => Status::ConvergenceWarning(format!(
            "max split R-hat {r:.3} exceeds {RHAT_WARNING}; see diagnostics.csv"
        )),
        _ => Status::Ok,
    };
    let record = RunRecord {
        subcommand: "fit",
        input: Some(args.data.clone()),
        out_dir: args.out.clone(),
        settings: json!({
            "model": model,
            "prior": prior,
            "chains": n_chains,
            "hpd_level": level,
            "bf_density": method,
            "bf_fallback_params": fallbacks,
            "prior_sensitivity": args.prior_sensitivity,
            "prior_sensitivity_density": sensitivity_method,
            "max_rhat": set.max_rhat(),
        }),
    };
    Ok((record, status))
}

fn latent_law(cfg: &mut Config) -> Result<LatentLaw, CliError> {
    let name: String = cfg.take_or("latent", "gamma2".to_string())?;
    let missing = |key: &str| CliError::Input(format!("latent = {name} requires `{key}`"));
    let law = match name.as_str() {
        "gamma" => LatentLaw::Gamma {
            shape: cfg.take("latent_shape")?.ok_or_else(|| missing("latent_shape"))?,
            scale: cfg.take("latent_scale")?.ok_or_else(|| missing("latent_scale"))?,
        },
        "lognormal" => LatentLaw::LogNormal {
            mu: cfg.take("latent_mu")?.ok_or_else(|| missing("latent_mu"))?,
            sigma: cfg.take("latent_sigma")?.ok_or_else(|| missing("latent_sigma"))?,
        },
        "uniform" => LatentLaw::Uniform {
            upper: cfg.take("latent_upper")?.ok_or_else(|| missing("latent_upper"))?,
        },
        preset => SimScenario::preset_law(preset).ok_or_else(|| {
            CliError::Input(format!(
                "latent = {preset}: expected gamma1-4, lognormal1-4, uniform1-3, gamma, lognormal or uniform"
            ))
        })?,
    };
    Ok(law)
}

fn scenario(cfg: &mut Config, seed: u64) -> Result<SimScenario, CliError> {
    let d = SimScenario::default();
    Ok(SimScenario {
        latent_law: latent_law(cfg)?,
        beta_x: cfg.take_or("beta_x", d.beta_x)?,
        beta_z: cfg.take_or("beta_z", d.beta_z)?,
        n: cfg.take_or("n", d.n)?,
        censor_frac: cfg.take_or("censor_frac", d.censor_frac)?,
        n_reps: d.n_reps,
        weibull_shape: cfg.take_or("weibull_shape", d.weibull_shape)?,
        weibull_scale: cfg.take_or("weibull_scale", d.weibull_scale)?,
        seed,
    })
}

fn simex_config(cfg: &mut Config, seed: u64) -> Result<SimexConfig, CliError> {
    let d = SimexConfig::default();
    let grid = cfg.take_list("lambda_grid")?.unwrap_or_else(|| d.lambda_grid().to_vec());
    let b = cfg.take_or("simex_b", d.b)?;
    Ok(SimexConfig::new(grid, b, seed)?)
}

fn parse_estimators(list: &str) -> Result<Vec<Estimator>, CliError> {
    let mut out: Vec<Estimator> = Vec::new();
    for name in list.split(',').map(str::trim) {
        let e: Estimator = name.parse()?;
        if !out.contains(&e) {
            out.push(e);
        }
    }
    Ok(out)
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Output directory.
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
    /// Replicates (overrides `n_reps`).
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated estimators (overrides `estimators`).
    #[arg(long)]
    pub estimators: Option<String>,
    /// Expected censored fraction (overrides `censor_frac`).
    #[arg(long)]
    pub censoring: Option<f64>,
    /// Full-length chains (200000 sweeps, half burn-in, thinned by 10) and
    /// 1000 replicates unless overridden.
    #[arg(long)]
    pub parity: bool,
    #[command(flatten)]
    pub common: Common,
}

pub fn simulate(args: &SimulateArgs, cfg: &mut Config, seed: u64) -> Result<(RunRecord, Status), CliError> {
    let mut sc = scenario(cfg, seed)?;
    let cfg_reps: Option<usize> = cfg.take("n_reps")?;
    sc.n_reps = args.reps.or(cfg_reps).unwrap_or(1000);
    if let Some(c) = args.censoring {
        sc.censor_frac = c;
    }
    let cfg_estimators: Option<String> = cfg.take("estimators")?;
    let estimators = match args.estimators.as_deref().or(cfg_estimators.as_deref()) {
        Some(list) => parse_estimators(list)?,
        None => Estimator::ALL.to_vec(),
    };
    let base = if args.parity {
        EstimatorConfig::parity()
    } else {
        EstimatorConfig::desk()
    };
    let mcmc = model_config(cfg, base.mcmc)?;
    let prior = prior_spec(cfg, base.prior)?;
    let simex = simex_config(cfg, seed)?;
    std::mem::take(cfg).finish()?;
    sc.validate()?;
    if sc.n_reps == 0 {
        return Err(CliError::Input("at least one replicate is required".into()));
    }
    let est_config = EstimatorConfig { mcmc, prior, simex };

    create_out_dir(&args.out)?;
    let result = run_scenario(&sc, &estimators, &est_config)?;
    write_with(&args.out, "metrics.csv", |w| result.table.write_csv(w))?;
    write_with(&args.out, "raw-estimates.csv", |w| result.write_raw_csv(w))?;
    let failed: usize = result.table.rows.iter().filter(|r| r.parameter == "beta_x").map(|r| r.n_failed).sum();
    if failed > 0 {
        eprintln!("note: {failed} estimator fits failed; see raw-estimates.csv");
    }
    let record = RunRecord {
        subcommand: "simulate",
        input: None,
        out_dir: args.out.clone(),
        settings: json!({
            "scenario": sc,
            "estimators": estimators,
            "parity": args.parity,
            "estimator_config": est_config,
        }),
    };
    Ok((record, Status::Ok))
}

#[derive(Args)]
pub struct SimexArgs {
    /// Dataset (CSV or JSON), as for `fit`.
    pub data: PathBuf,
    /// Output directory.
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
    /// Bootstrap resamples for standard errors (at least 50).
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

pub fn simex(args: &SimexArgs, cfg: &mut Config, seed: u64) -> Result<(RunRecord, Status), CliError> {
    let config = simex_config(cfg, seed)?;
    std::mem::take(cfg).finish()?;
    if let Some(r) = args.bootstrap {
        if r < poisurv::simex::MIN_BOOTSTRAP {
            return Err(CliError::Input(format!(
                "--bootstrap {r}: at least {} resamples are required",
                poisurv::simex::MIN_BOOTSTRAP
            )));
        }
    }
    let data = read_dataset(&args.data)?;
    create_out_dir(&args.out)?;
    let mut fit = fit_simex(&data, &config)?;
    if let Some(r) = args.bootstrap {
        fit.bootstrap_se = Some(simex_bootstrap_se(&data, &config, r)?);
    }
    write_with(&args.out, "simex-curve.csv", |w| write_curve_csv(&fit, w))?;
    write_with(&args.out, "simex-fit.csv", |w| write_fit_csv(&fit, w))?;
    for (j, name) in fit.names.iter().enumerate() {
        let se = fit
            .bootstrap_se
            .as_ref()
            .map_or_else(String::new, |s| format!(" (SE {:.4})", s[j]));
        println!("{name:<10} {:>9.4}{se}", fit.extrapolated[j]);
    }
    let record = RunRecord {
        subcommand: "simex",
        input: Some(args.data.clone()),
        out_dir: args.out.clone(),
        settings: json!({ "simex": config, "bootstrap": args.bootstrap }),
    };
    Ok((record, Status::Ok))
}

#[derive(Args)]
pub struct BfStudyArgs {
    /// Output directory.
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

pub fn bf_study(args: &BfStudyArgs, cfg: &mut Config, seed: u64) -> Result<(RunRecord, Status), CliError> {
    let n_grid: Vec<usize> = cfg.take_list("n_grid")?.unwrap_or_else(|| vec![50, 100, 200]);
    let hypothesis = match cfg.take_or("hypothesis", "h1".to_string())?.as_str() {
        "h0" => Hypothesis::H0,
        "h1" => Hypothesis::H1,
        other => return Err(CliError::Input(format!("hypothesis = {other}: expected h0 or h1"))),
    };
    let n_reps: usize = cfg.take_or("n_reps", 100)?;
    let density = density_method(cfg)?;
    let base = EstimatorConfig::desk();
    let estimator = EstimatorConfig {
        mcmc: model_config(cfg, base.mcmc)?,
        prior: prior_spec(cfg, base.prior)?,
        simex: base.simex,
    };
    std::mem::take(cfg).finish()?;
    if n_reps == 0 || n_grid.is_empty() {
        return Err(CliError::Input("n_reps and n_grid must be non-empty".into()));
    }
    let config = BfStudyConfig {
        estimator,
        density,
        seed,
    };
    create_out_dir(&args.out)?;
    let rows = bf_sampling_study(&n_grid, hypothesis, n_reps, &config)?;
    write_with(&args.out, "bf-study.csv", |w| write_bf_csv(&rows, w))?;
    let record = RunRecord {
        subcommand: "bf-study",
        input: None,
        out_dir: args.out.clone(),
        settings: json!({ "n_grid": n_grid, "hypothesis": hypothesis, "n_reps": n_reps, "config": config }),
    };
    Ok((record, Status::Ok))
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Output directory.
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
    /// Write dataset.json instead of dataset.csv.
    #[arg(long)]
    pub json: bool,
    /// Omit the x_true column.
    #[arg(long)]
    pub hide_truth: bool,
    #[command(flatten)]
    pub common: Common,
}

pub fn generate(args: &GenerateArgs, cfg: &mut Config, seed: u64) -> Result<(RunRecord, Status), CliError> {
    let sc = scenario(cfg, seed)?;
    std::mem::take(cfg).finish()?;
    let rate = sc.censoring_rate()?;
    let mut data = sc.generate(rate, &mut poisurv::dist::stream_rng(seed, &[0]))?;
    if args.hide_truth {
        let mut raw = data.to_raw();
        raw.x_true = None;
        data = poisurv::data::validate_dataset(raw)?;
    }
    create_out_dir(&args.out)?;
    if args.json {
        write_with(&args.out, "dataset.json", |w| write_json(&data, w))?;
    } else {
        write_with(&args.out, "dataset.csv", |w| write_csv(&data, w))?;
    }
    let record = RunRecord {
        subcommand: "generate",
        input: None,
        out_dir: args.out.clone(),
        settings: json!({ "scenario": sc, "censoring_rate": rate }),
    };
    Ok((record, Status::Ok))
}
