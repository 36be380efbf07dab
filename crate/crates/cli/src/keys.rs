//! Config-key reference printed by `--help`.

macro_rules! model_keys {
    () => {
        "Sampler keys:
  m_intervals     inner knots of the baseline hazard [5]
  knots           quantile | equal_length knot placement [quantile]
  k_trunc         mixture truncation level K; 1 gives a single gamma [5]
  n_iter          total sweeps including burn-in
  n_burn          burn-in sweeps
  thin            keep every thin-th post-burn-in draw
"
    };
}

macro_rules! prior_keys {
    () => {
        "Prior keys:
  hazard_shape    gamma shape of each hazard level [0.01]
  hazard_rate     gamma rate of each hazard level [0.01]
  beta_z_mean     normal mean of each covariate coefficient [0]
  beta_z_var      normal variance of each covariate coefficient [1]
  beta_x_prior    normal | cauchy prior for the biomarker coefficient [normal]
  beta_x_mean     normal mean [0]
  beta_x_var      normal variance [100]
  beta_x_location cauchy location [0]
  beta_x_scale    cauchy scale [1]
  alpha_log_mean  mean of log concentration [0]
  alpha_log_var   variance of log concentration [1]
  g0_shape_shape  base measure: gamma shape of the atom shape [0.1]
  g0_shape_rate   base measure: gamma rate of the atom shape [0.1]
  g0_scale_shape  base measure: gamma shape of the atom scale [0.1]
  g0_scale_rate   base measure: gamma rate of the atom scale [0.1]
"
    };
}

macro_rules! simex_keys {
    () => {
        "SIMEX keys:
  lambda_grid     comma-separated noise levels, must include 0 [0,0.5,1,1.5,2]
  simex_b         remeasured datasets per level [100]
"
    };
}

macro_rules! scenario_keys {
    () => {
        "Scenario keys:
  latent          preset gamma1-4, lognormal1-4, uniform1-3, or a family:
                  gamma | lognormal | uniform [gamma2]
  latent_shape    gamma shape (family gamma)
  latent_scale    gamma scale (family gamma)
  latent_mu       log-scale mean (family lognormal)
  latent_sigma    log-scale sd (family lognormal)
  latent_upper    upper bound (family uniform)
  beta_x          true biomarker coefficient [0.5]
  beta_z          true covariate coefficient [0.1]
  n               subjects per replicate [100]
  censor_frac     expected censored fraction, exponential censoring [0]
  weibull_shape   Weibull baseline shape [1]
  weibull_scale   Weibull baseline scale [1]
"
    };
}

pub const FIT: &str = concat!(
    model_keys!(),
    "  chains          independent chains [4]
  hpd_level       credible level of the HPD intervals [0.95]
  bf_density      kde | normal posterior density at 0 for BF10 [kde]
  bf_bandwidth    fixed KDE bandwidth [Silverman rule]

Defaults: n_iter 200000, n_burn 100000, thin 10.

",
    prior_keys!(),
    "
Exit status: 0 success, 1 internal error, 2 input error,
3 convergence warning (max split R-hat above 1.05; outputs still written)."
);

pub const SIMULATE: &str = concat!(
    scenario_keys!(),
    "  n_reps          replicates [1000]
  estimators      comma-separated subset of true,naive,simex,bayes_gamma,dp_mix [all]

",
    model_keys!(),
    "
Defaults: n_iter 10000, n_burn 5000, thin 1 (200000, 100000, 10 with --parity).

",
    prior_keys!(),
    "
",
    simex_keys!()
);

pub const SIMEX: &str = simex_keys!();

pub const BF_STUDY: &str = concat!(
    "Study keys:
  n_grid          comma-separated sample sizes [50,100,200]
  hypothesis      h0 (beta_x = 0) | h1 (beta_x = 0.5) [h1]
  n_reps          replicates per sample size [100]
  bf_density      kde | normal posterior density at 0 [kde]
  bf_bandwidth    fixed KDE bandwidth [Silverman rule]

",
    model_keys!(),
    "
Defaults: n_iter 10000, n_burn 5000, thin 1.

",
    prior_keys!()
);

pub const GENERATE: &str = scenario_keys!();
