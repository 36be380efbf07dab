use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn demo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo.csv")
}

fn poisurv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poisurv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(str::to_string).collect()];
    rows.extend(r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()));
    rows
}

const SHORT_FIT: &str = "n_iter = 3000\nn_burn = 1000\nthin = 2\nchains = 2\n";

fn fit_demo(dir: &Path, extra: &[&str]) -> Output {
    let cfg = write_config(dir, SHORT_FIT);
    let out = dir.join("out").display().to_string();
    let demo = demo().display().to_string();
    let mut args = vec!["fit", demo.as_str(), "--config", &cfg, "--seed", "11", "--out", &out];
    args.extend_from_slice(extra);
    poisurv(&args)
}

fn succeeded(o: &Output) -> bool {
    // 3 flags a convergence warning with outputs written
    matches!(o.status.code(), Some(0) | Some(3))
}

#[test]
fn fit_writes_summary_draws_and_manifest() {
    let dir = TempDir::new().unwrap();
    let o = fit_demo(dir.path(), &[]);
    assert!(succeeded(&o), "{}", stderr(&o));
    let out = dir.path().join("out");
    let summary = csv_rows(&out.join("summary.csv"));
    assert_eq!(summary[0], ["param", "coef", "hr", "hr_lower", "hr_upper", "bf10"]);
    assert_eq!(summary.len(), 3);
    assert_eq!(summary[1][0], "beta_x");
    assert_eq!(summary[2][0], "z");
    for row in &summary[1..] {
        let hr: f64 = row[2].parse().unwrap();
        let lo: f64 = row[3].parse().unwrap();
        let hi: f64 = row[4].parse().unwrap();
        assert!(lo <= hr && hr <= hi || lo <= hi, "{row:?}");
        assert!(row[5].parse::<f64>().unwrap() > 0.0);
    }
    // 2 chains x 1000 retained draws
    assert_eq!(csv_rows(&out.join("posterior-draws.csv")).len(), 1 + 2000);
    assert_eq!(csv_rows(&out.join("diagnostics.csv"))[0], ["param", "rhat", "ess"]);
    assert!(out.join("summary.txt").exists());

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    for key in ["subcommand", "config_path", "input_path", "output_dir", "seed", "version", "wall_clock_seconds"] {
        assert!(manifest.get(key).is_some(), "manifest lacks {key}");
    }
    assert_eq!(manifest["subcommand"], "fit");
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["settings"]["model"]["n_iter"], 3000);
}

#[test]
fn fit_is_deterministic_under_a_seed() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert!(succeeded(&fit_demo(a.path(), &[])));
    assert!(succeeded(&fit_demo(b.path(), &[])));
    for f in ["posterior-draws.csv", "summary.csv", "diagnostics.csv"] {
        let x = fs::read(a.path().join("out").join(f)).unwrap();
        let y = fs::read(b.path().join("out").join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert!(succeeded(&fit_demo(a.path(), &["--threads", "1"])));
    assert!(succeeded(&fit_demo(b.path(), &["--threads", "2"])));
    let x = fs::read(a.path().join("out/posterior-draws.csv")).unwrap();
    let y = fs::read(b.path().join("out/posterior-draws.csv")).unwrap();
    assert!(x == y);
}

#[test]
fn prior_sensitivity_has_five_rows() {
    let dir = TempDir::new().unwrap();
    let o = fit_demo(dir.path(), &["--prior-sensitivity"]);
    assert!(succeeded(&o), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("out/prior-sensitivity.csv"));
    assert_eq!(rows.len(), 1 + 5);
    assert_eq!(rows[0][..6], ["prior", "coef", "hr", "hr_lower", "hr_upper", "bf10"]);
    let labels: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    assert!(labels[4].to_lowercase().contains("cauchy"), "{labels:?}");
}

#[test]
fn missing_event_column_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "time,w,area\n1.0,3,1\n2.0,1,1\n").unwrap();
    let out = dir.path().join("out").display().to_string();
    let o = poisurv(&["fit", &data.display().to_string(), "--seed", "1", "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("event"), "{}", stderr(&o));
}

#[test]
fn invalid_records_are_input_errors() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "time,event,w\n1.0,1,3\n0.0,1,1\n").unwrap();
    let o = poisurv(&["simex", &data.display().to_string(), "--seed", "1", "-o", &dir.path().display().to_string()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("time[1]"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "n_itre = 10\n");
    let o = poisurv(&["fit", &demo().display().to_string(), "--config", &cfg, "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n_itre"));
}

#[test]
fn json_input_matches_csv_input() {
    let dir = TempDir::new().unwrap();
    let gen = dir.path().join("gen");
    let g = gen.display().to_string();
    let cfg = write_config(dir.path(), "n = 40\ncensor_frac = 0.2\n");
    assert_eq!(poisurv(&["generate", "-c", &cfg, "--seed", "3", "-o", &g]).status.code(), Some(0));
    assert_eq!(poisurv(&["generate", "-c", &cfg, "--seed", "3", "-o", &g, "--json"]).status.code(), Some(0));
    let run = |file: &str, out: &str| {
        let o = poisurv(&[
            "simex",
            &gen.join(file).display().to_string(),
            "--seed",
            "5",
            "-o",
            &dir.path().join(out).display().to_string(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read(dir.path().join(out).join("simex-fit.csv")).unwrap()
    };
    assert_eq!(run("dataset.csv", "a"), run("dataset.json", "b"));
}

#[test]
fn simulate_smoke_table() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = poisurv(&[
        "simulate",
        "--reps",
        "10",
        "--estimators",
        "naive,true",
        "--seed",
        "4",
        "-o",
        &out.display().to_string(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let metrics = csv_rows(&out.join("metrics.csv"));
    assert_eq!(metrics.len(), 1 + 4);
    assert_eq!(metrics[0][..5], ["estimator", "parameter", "truth", "mean", "bias"]);
    let raw = csv_rows(&out.join("raw-estimates.csv"));
    assert_eq!(raw.len(), 1 + 10 * 2);

    let again = dir.path().join("again");
    poisurv(&["simulate", "--reps", "10", "--estimators", "naive,true", "--seed", "4", "-o", &again.display().to_string()]);
    assert_eq!(fs::read(out.join("metrics.csv")).unwrap(), fs::read(again.join("metrics.csv")).unwrap());
    assert_eq!(fs::read(out.join("raw-estimates.csv")).unwrap(), fs::read(again.join("raw-estimates.csv")).unwrap());
}

#[test]
fn simulate_censoring_override_reaches_the_manifest() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "latent = gamma3\nn = 60\n");
    let o = poisurv(&[
        "simulate", "-c", &cfg, "--reps", "5", "--estimators", "naive", "--censoring", "0.2", "--seed", "2", "-o",
        &out.display().to_string(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["settings"]["scenario"]["censor_frac"], 0.2);
    assert_eq!(m["settings"]["scenario"]["n"], 60);
    assert_eq!(m["settings"]["scenario"]["latent_law"]["shape"], 2.0);
}

#[test]
fn unknown_estimator_lists_valid_names() {
    let o = poisurv(&["simulate", "--reps", "2", "--estimators", "naive,oracle", "--seed", "1", "-o", "/tmp"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    for name in ["true", "naive", "simex", "bayes_gamma", "dp_mix"] {
        assert!(e.contains(name), "{e}");
    }
}

#[test]
fn parity_settings_are_recorded() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = poisurv(&["simulate", "--parity", "--reps", "2", "--estimators", "naive", "--seed", "1", "-o", &out.display().to_string()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let mcmc = &m["settings"]["estimator_config"]["mcmc"];
    assert_eq!(mcmc["n_iter"], 200_000);
    assert_eq!(mcmc["n_burn"], 100_000);
    assert_eq!(mcmc["thin"], 10);
    assert_eq!(m["settings"]["parity"], true);
}

#[test]
fn simex_curve_has_one_row_per_lambda() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "lambda_grid = 0, 0.5, 1, 2\nsimex_b = 20\n");
    let o = poisurv(&["simex", &demo().display().to_string(), "-c", &cfg, "--seed", "8", "-o", &out.display().to_string()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let curve = csv_rows(&out.join("simex-curve.csv"));
    assert_eq!(curve.len(), 1 + 4);
    assert_eq!(curve[0], ["lambda", "dropped", "beta_x", "z"]);
    let fit = csv_rows(&out.join("simex-fit.csv"));
    assert_eq!(fit[0][..3], ["param", "coef", "se"]);
    assert!(fit[1][2].is_empty());
}

#[test]
fn simex_bootstrap_fills_standard_errors() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "simex_b = 10\n");
    let o = poisurv(&[
        "simex",
        &demo().display().to_string(),
        "-c",
        &cfg,
        "--bootstrap",
        "200",
        "--seed",
        "8",
        "-o",
        &out.display().to_string(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fit = csv_rows(&out.join("simex-fit.csv"));
    for row in &fit[1..] {
        assert!(row[2].parse::<f64>().unwrap() > 0.0, "{row:?}");
    }
}

#[test]
fn simex_grid_must_contain_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "lambda_grid = 0.5, 1, 2\n");
    let o = poisurv(&["simex", &demo().display().to_string(), "-c", &cfg, "--seed", "1", "-o", &dir.path().display().to_string()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("0"));
}

#[test]
fn missing_seed_is_generated_and_printed() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "simex_b = 5\n");
    let o = poisurv(&["simex", &demo().display().to_string(), "-c", &cfg, "-o", &out.display().to_string()]);
    assert_eq!(o.status.code(), Some(0));
    let e = stderr(&o);
    let seed: u64 = e
        .rsplit("--seed ")
        .next()
        .and_then(|s| s.split_whitespace().next())
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| panic!("no seed in {e}"));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], seed);
}

#[test]
fn bf_study_writes_one_row_per_sample_size() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "n_grid = 30, 60\nn_reps = 3\nhypothesis = h0\nn_iter = 1000\nn_burn = 500\n");
    let o = poisurv(&["bf-study", "-c", &cfg, "--seed", "2", "-o", &out.display().to_string()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&out.join("bf-study.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1][0], "30");
}

#[test]
fn help_documents_config_keys() {
    let fit = String::from_utf8(poisurv(&["fit", "--help"]).stdout).unwrap();
    for key in [
        "m_intervals", "knots", "k_trunc", "n_iter", "n_burn", "thin", "chains", "hpd_level", "bf_density",
        "bf_bandwidth", "hazard_shape", "hazard_rate", "beta_z_mean", "beta_z_var", "beta_x_prior", "beta_x_mean",
        "beta_x_var", "beta_x_location", "beta_x_scale", "alpha_log_mean", "alpha_log_var", "g0_shape_shape",
        "g0_shape_rate", "g0_scale_shape", "g0_scale_rate",
    ] {
        assert!(fit.contains(key), "fit --help lacks {key}");
    }
    let sim = String::from_utf8(poisurv(&["simulate", "--help"]).stdout).unwrap();
    for key in [
        "latent", "latent_shape", "latent_scale", "latent_mu", "latent_sigma", "latent_upper", "beta_x", "beta_z",
        "censor_frac", "weibull_shape", "weibull_scale", "n_reps", "estimators", "lambda_grid", "simex_b",
    ] {
        assert!(sim.contains(key), "simulate --help lacks {key}");
    }
    let simex = String::from_utf8(poisurv(&["simex", "--help"]).stdout).unwrap();
    assert!(simex.contains("lambda_grid") && simex.contains("simex_b"));
    let bf = String::from_utf8(poisurv(&["bf-study", "--help"]).stdout).unwrap();
    for key in ["n_grid", "hypothesis", "n_reps"] {
        assert!(bf.contains(key), "bf-study --help lacks {key}");
    }
}
