//! Gibbs-within-Metropolis sampler for the joint survival / biomarker model.
//!
//! One sweep updates, in order: hazard levels (conjugate gamma), regression
//! coefficients (componentwise random walk), latent densities (gamma
//! independence proposal with the Cox factor in the acceptance ratio),
//! mixture allocations, sticks, atoms and the concentration, followed by a
//! joint rescaling of the latent densities and beta_x. Proposal scales
//! adapt during burn-in and are frozen afterwards, so retained draws come
//! from a time-homogeneous kernel.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{make_hazard_grid, HazardGrid, ModelConfig, PriorSpec, SurvivalDataset};
use crate::diagnostics::{effective_sample_size, split_rhat};
use crate::dist::{
    ln_normal_pdf, sample_gamma_rate, sample_std_normal, stream_rng, POSITIVE_FLOOR,
};
use crate::dp::{self, Atom, DpState, TARGET_ACCEPTANCE};
use crate::error::{Error, Result};
use crate::likelihood::{
    expand_intervals, hazard_sufficient_stats, HazardStats, IntervalExpansion,
    MAX_LINEAR_PREDICTOR,
};
use crate::mh::{mh_accept, AdaptiveScale};

/// Target acceptance for one-dimensional random walks.
const SCALAR_TARGET: f64 = 0.44;
/// Sweeps per monitoring window for the latent-density proposal switch.
const LATENT_WINDOW: u32 = 100;
/// Independence-proposal acceptance below which a subject switches to a
/// log-scale random walk (burn-in only).
const LATENT_SWITCH_RATE: f64 = 0.05;

/// Current value of every model parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub hazard: Vec<f64>,
    pub beta_z: Vec<f64>,
    pub beta_x: f64,
    pub x: Vec<f64>,
    pub dp: DpState,
}

/// Conjugate update `h_l ~ Gamma(a_h + D_l, rate b_h + E_l)`.
pub fn update_hazard<R: Rng + ?Sized>(stats: &HazardStats, prior: &PriorSpec, rng: &mut R) -> Vec<f64> {
    stats
        .events
        .iter()
        .zip(&stats.exposure)
        .map(|(&d, &e)| sample_gamma_rate(rng, prior.hazard_shape + d, prior.hazard_rate + e))
        .collect()
}

/// Per-subject quantities the coefficient update needs. `cumhaz[i]` is the
/// baseline cumulative hazard H0(u_i) under the current hazard levels.
#[derive(Debug, Clone, Copy)]
pub struct CoxTerms<'a> {
    pub delta: &'a [bool],
    pub z: &'a DMatrix<f64>,
    pub x: &'a [f64],
    pub cumhaz: &'a [f64],
}

impl CoxTerms<'_> {
    /// Log-likelihood with every hazard level multiplied by `hazard_mult`,
    /// up to terms free of the coefficients and the multiplier.
    fn loglik(&self, eta: &[f64], hazard_mult: f64) -> f64 {
        let n_events = self.delta.iter().filter(|&&d| d).count() as f64;
        n_events * hazard_mult.ln()
            + eta
                .iter()
                .zip(self.delta)
                .zip(self.cumhaz)
                .map(|((&e, &d), &h)| if d { e } else { 0.0 } - hazard_mult * h * e.exp())
                .sum::<f64>()
    }
}

/// Componentwise random-walk Metropolis over (beta_z, beta_x). `scales` has
/// one entry per beta_z component followed by one for beta_x. Returns the
/// acceptance indicator of each component.
///
/// A step `e` in a coefficient whose covariate has mean `c` is paired with
/// multiplying every hazard level by `exp(-e c)`, which keeps the average
/// linear predictor fixed and removes most of the posterior correlation
/// between coefficients and the baseline level. The Jacobian and the gamma
/// prior on the levels enter the ratio. `hazard` is updated in place;
/// `terms.cumhaz` must match it on entry and is stale on return.
pub fn update_beta<R: Rng + ?Sized>(
    terms: &CoxTerms<'_>,
    hazard: &mut [f64],
    beta_z: &mut [f64],
    beta_x: &mut f64,
    prior: &PriorSpec,
    scales: &mut [AdaptiveScale],
    rng: &mut R,
) -> Result<Vec<bool>> {
    let n = terms.delta.len();
    let n_cov = beta_z.len();
    let n_levels = hazard.len() as f64;
    let level_sum: f64 = hazard.iter().sum();
    let mut eta: Vec<f64> = (0..n)
        .map(|i| {
            (0..n_cov).map(|j| beta_z[j] * terms.z[(i, j)]).sum::<f64>() + *beta_x * terms.x[i]
        })
        .collect();
    let mut mult = 1.0;
    let mut ll = terms.loglik(&eta, mult);
    if !ll.is_finite() {
        return Err(Error::NonFiniteLik(format!(
            "coefficient update started from log-likelihood {ll}"
        )));
    }
    let mut proposal = vec![0.0; n];
    let mut accepted = Vec::with_capacity(n_cov + 1);
    for j in 0..=n_cov {
        let covariate = |i: usize| if j < n_cov { terms.z[(i, j)] } else { terms.x[i] };
        let center = (0..n).map(covariate).sum::<f64>() / n.max(1) as f64;
        let current = if j < n_cov { beta_z[j] } else { *beta_x };
        let step = scales[j].scale() * sample_std_normal(rng);
        let candidate = current + step;
        let ln_k = -step * center;
        let mult_prop = mult * ln_k.exp();
        let mut overflow = !(mult_prop > 0.0 && mult_prop.is_finite());
        for (i, p) in proposal.iter_mut().enumerate() {
            *p = eta[i] + step * covariate(i);
            overflow |= *p > MAX_LINEAR_PREDICTOR;
        }
        let mut ll_prop = f64::NAN;
        let ok = if overflow {
            false
        } else {
            ll_prop = terms.loglik(&proposal, mult_prop);
            let ln_prior = |b: f64| {
                if j < n_cov {
                    ln_normal_pdf(b, prior.beta_z_mean, prior.beta_z_var)
                } else {
                    prior.beta_x.ln_pdf(b)
                }
            };
            // gamma prior on the rescaled levels times the Jacobian k^L
            let hazard_term =
                n_levels * prior.hazard_shape * ln_k - prior.hazard_rate * (mult_prop - mult) * level_sum;
            let ratio = ll_prop - ll + ln_prior(candidate) - ln_prior(current) + hazard_term;
            ll_prop.is_finite() && mh_accept(rng, ratio)
        };
        if ok {
            if j < n_cov {
                beta_z[j] = candidate;
            } else {
                *beta_x = candidate;
            }
            std::mem::swap(&mut eta, &mut proposal);
            mult = mult_prop;
            ll = ll_prop;
        }
        scales[j].record(ok);
        accepted.push(ok);
    }
    hazard.iter_mut().for_each(|h| *h *= mult);
    Ok(accepted)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LatentProposal {
    Independence,
    RandomWalk(AdaptiveScale),
}

/// Per-subject proposal choice for the latent densities.
#[derive(Debug, Clone)]
pub struct LatentTuning {
    modes: Vec<LatentProposal>,
    window_accepts: Vec<u32>,
    window_sweeps: u32,
    adapting: bool,
    proposed: u64,
    accepted: u64,
}

impl LatentTuning {
    pub fn new(n: usize) -> Self {
        Self {
            modes: vec![LatentProposal::Independence; n],
            window_accepts: vec![0; n],
            window_sweeps: 0,
            adapting: true,
            proposed: 0,
            accepted: 0,
        }
    }

    pub fn freeze(&mut self) {
        self.adapting = false;
        self.proposed = 0;
        self.accepted = 0;
        for m in &mut self.modes {
            if let LatentProposal::RandomWalk(s) = m {
                s.freeze();
            }
        }
    }

    /// Subjects that switched to the random-walk proposal.
    pub fn n_random_walk(&self) -> usize {
        self.modes
            .iter()
            .filter(|m| matches!(m, LatentProposal::RandomWalk(_)))
            .count()
    }

    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }

    fn end_sweep(&mut self) {
        if !self.adapting {
            return;
        }
        self.window_sweeps += 1;
        if self.window_sweeps < LATENT_WINDOW {
            return;
        }
        for (mode, acc) in self.modes.iter_mut().zip(&mut self.window_accepts) {
            if matches!(mode, LatentProposal::Independence)
                && (*acc as f64) < LATENT_SWITCH_RATE * LATENT_WINDOW as f64
            {
                *mode = LatentProposal::RandomWalk(AdaptiveScale::new(0.5, SCALAR_TARGET));
            }
            *acc = 0;
        }
        self.window_sweeps = 0;
    }
}

/// Inputs to the latent-density update for one sweep.
#[derive(Debug, Clone, Copy)]
pub struct LatentTerms<'a> {
    pub delta: &'a [bool],
    pub w: &'a [u64],
    pub area: &'a [f64],
    pub cumhaz: &'a [f64],
    /// beta_z' z_i for each subject.
    pub zb: &'a [f64],
    pub beta_x: f64,
}

/// Metropolis-Hastings update of every latent density. The conjugate part
/// `Gamma(a_c + W, rate 1/b_c + A)` is the proposal; the Cox factor
/// `exp(delta * beta_x * x - H0(u) exp(zb + beta_x x))` enters the ratio.
/// Returns per-subject acceptance indicators.
pub fn update_latent_x<R: Rng + ?Sized>(
    terms: &LatentTerms<'_>,
    x: &mut [f64],
    dp: &DpState,
    tuning: &mut LatentTuning,
    rng: &mut R,
) -> Vec<bool> {
    let bx = terms.beta_x;
    let cox = |i: usize, xi: f64| -> f64 {
        let eta = terms.zb[i] + bx * xi;
        if eta > MAX_LINEAR_PREDICTOR {
            return f64::NEG_INFINITY;
        }
        let event = if terms.delta[i] { bx * xi } else { 0.0 };
        event - terms.cumhaz[i] * eta.exp()
    };
    let mut accepted = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let atom = dp.atoms[dp.alloc[i]];
        let shape = atom.shape + terms.w[i] as f64;
        let rate = 1.0 / atom.scale + terms.area[i];
        let current = x[i];
        let ok = match &mut tuning.modes[i] {
            LatentProposal::Independence => {
                let prop = sample_gamma_rate(rng, shape, rate);
                let ok = if bx == 0.0 {
                    true
                } else {
                    mh_accept(rng, cox(i, prop) - cox(i, current))
                };
                if ok {
                    x[i] = prop;
                }
                ok
            }
            LatentProposal::RandomWalk(scale) => {
                let prop = (current * (scale.scale() * sample_std_normal(rng)).exp())
                    .max(POSITIVE_FLOOR);
                // target on ln(x): shape * ln x - rate * x + Cox factor
                let lp = |v: f64| shape * v.ln() - rate * v + cox(i, v);
                let ok = prop.is_finite() && mh_accept(rng, lp(prop) - lp(current));
                if ok {
                    x[i] = prop;
                }
                scale.record(ok);
                ok
            }
        };
        if tuning.adapting && ok {
            tuning.window_accepts[i] += 1;
        }
        tuning.proposed += 1;
        tuning.accepted += ok as u64;
        accepted.push(ok);
    }
    tuning.end_sweep();
    accepted
}

/// Joint rescaling `x_i -> s x_i`, atom scales `b_k -> s b_k`,
/// `beta_x -> beta_x / s` with `ln s` drawn from a normal random walk.
/// Every `beta_x x_i` and the mixture shape of the latent densities are
/// unchanged, so only the counts and the priors on `beta_x` and the atom
/// scales judge the move; it crosses the ridge between the spread of the
/// latent densities and the size of `beta_x` that single-site updates
/// traverse slowly. Returns whether the move was accepted.
pub fn rescale_latent<R: Rng + ?Sized>(
    state: &mut JointState,
    w: &[u64],
    area: &[f64],
    prior: &PriorSpec,
    scale: &mut AdaptiveScale,
    rng: &mut R,
) -> bool {
    let ln_s = scale.scale() * sample_std_normal(rng);
    let s = ln_s.exp();
    let k = state.dp.atoms.len() as f64;
    let total_w: f64 = w.iter().map(|&v| v as f64).sum();
    let exposure: f64 = state.x.iter().zip(area).map(|(x, a)| x * a).sum();
    let scale_sum: f64 = state.dp.atoms.iter().map(|a| a.scale).sum();
    let base = &prior.base;
    // counts, gamma prior of x given its atom, atom-scale prior and the
    // Jacobian s^(n + K - 1) combined
    let ratio = (total_w + k - 1.0) * ln_s - (s - 1.0) * exposure
        + k * (base.scale_shape - 1.0) * ln_s
        - base.scale_rate * (s - 1.0) * scale_sum
        + prior.beta_x.ln_pdf(state.beta_x / s)
        - prior.beta_x.ln_pdf(state.beta_x);
    let ok = ratio.is_finite() && mh_accept(rng, ratio);
    if ok {
        state.x.iter_mut().for_each(|x| *x = (*x * s).max(POSITIVE_FLOOR));
        state.dp.atoms.iter_mut().for_each(|a| a.scale *= s);
        state.beta_x /= s;
    }
    scale.record(ok);
    ok
}

/// Acceptance rates observed since adaptation was frozen.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AcceptanceSummary {
    /// beta_z components followed by beta_x.
    pub beta: Vec<Option<f64>>,
    pub latent: Option<f64>,
    pub latent_random_walk: usize,
    pub atoms: Option<f64>,
    pub alpha: Option<f64>,
    pub rescale: Option<f64>,
}

/// Sampler state and tuning for one chain.
#[derive(Debug, Clone)]
pub struct Sampler {
    data: SurvivalDataset,
    grid: HazardGrid,
    expansion: IntervalExpansion,
    prior: PriorSpec,
    state: JointState,
    beta_scales: Vec<AdaptiveScale>,
    atom_scales: Vec<AdaptiveScale>,
    alpha_scale: AdaptiveScale,
    rescale_scale: AdaptiveScale,
    latent: LatentTuning,
    cumhaz: Vec<f64>,
    zb: Vec<f64>,
    sweeps: usize,
}

impl Sampler {
    /// Initial state: zero coefficients, hazard levels from `grid`,
    /// x_i = (W_i + 0.5) / A_i, uniform random allocations, sticks from the
    /// prior with alpha = exp(prior mean), and every atom moment-matched to
    /// the initial densities.
    pub fn new<R: Rng + ?Sized>(
        data: SurvivalDataset,
        grid: HazardGrid,
        prior: PriorSpec,
        k: usize,
        rng: &mut R,
    ) -> Result<Self> {
        prior.validate()?;
        if k == 0 {
            return Err(Error::InvalidConfig("k_trunc must be at least 1".into()));
        }
        let n = data.n();
        let x: Vec<f64> = data
            .w()
            .iter()
            .zip(data.area())
            .map(|(&w, &a)| (w as f64 + 0.5) / a)
            .collect();
        let alloc: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let alpha = prior.alpha_log_mean.exp();
        let mut dp_state = DpState::from_prior(rng, k, alpha, &prior.base, alloc);
        let atom = moment_matched_atom(&x);
        dp_state.atoms.iter_mut().for_each(|a| *a = atom);
        let state = JointState {
            hazard: grid.levels.clone(),
            beta_z: vec![0.0; data.n_cov()],
            beta_x: 0.0,
            x,
            dp: dp_state,
        };
        let expansion = expand_intervals(&data, &grid);
        let mut sampler = Self {
            beta_scales: vec![AdaptiveScale::new(0.1, SCALAR_TARGET); data.n_cov() + 1],
            atom_scales: vec![AdaptiveScale::new(0.3, TARGET_ACCEPTANCE); k],
            alpha_scale: AdaptiveScale::new(0.5, TARGET_ACCEPTANCE),
            rescale_scale: AdaptiveScale::new(0.05, SCALAR_TARGET),
            latent: LatentTuning::new(n),
            cumhaz: vec![0.0; n],
            zb: vec![0.0; n],
            data,
            grid,
            expansion,
            prior,
            state,
            sweeps: 0,
        };
        sampler.refresh_zb();
        Ok(sampler)
    }

    pub fn state(&self) -> &JointState {
        &self.state
    }

    /// Mutable access for callers that set parameters directly (e.g. a
    /// prior draw); derived caches are refreshed on the next sweep.
    pub fn state_mut(&mut self) -> &mut JointState {
        &mut self.state
    }

    pub fn data(&self) -> &SurvivalDataset {
        &self.data
    }

    pub fn grid(&self) -> &HazardGrid {
        &self.grid
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// Ends adaptation of every proposal and resets acceptance counters.
    pub fn freeze_adaptation(&mut self) {
        self.beta_scales.iter_mut().for_each(AdaptiveScale::freeze);
        self.atom_scales.iter_mut().for_each(AdaptiveScale::freeze);
        self.alpha_scale.freeze();
        self.rescale_scale.freeze();
        self.latent.freeze();
    }

    /// Replaces outcomes and counts while keeping every parameter.
    pub fn replace_observations(&mut self, u: Vec<f64>, delta: Vec<bool>, w: Vec<u64>) -> Result<()> {
        self.data = self.data.with_observations(u, delta, w)?;
        self.expansion = expand_intervals(&self.data, &self.grid);
        Ok(())
    }

    pub fn acceptance(&self) -> AcceptanceSummary {
        let pooled = |scales: &[AdaptiveScale]| {
            let rates: Vec<f64> = scales.iter().filter_map(|s| s.acceptance_rate()).collect();
            (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
        };
        AcceptanceSummary {
            beta: self.beta_scales.iter().map(|s| s.acceptance_rate()).collect(),
            latent: self.latent.acceptance_rate(),
            latent_random_walk: self.latent.n_random_walk(),
            atoms: pooled(&self.atom_scales),
            alpha: self.alpha_scale.acceptance_rate(),
            rescale: self.rescale_scale.acceptance_rate(),
        }
    }

    fn refresh_zb(&mut self) {
        let z = self.data.z();
        for (i, zb) in self.zb.iter_mut().enumerate() {
            *zb = (0..z.ncols()).map(|j| self.state.beta_z[j] * z[(i, j)]).sum();
        }
    }

    fn refresh_cumhaz(&mut self) {
        self.cumhaz.iter_mut().for_each(|c| *c = 0.0);
        for r in &self.expansion.rows {
            self.cumhaz[r.subject] += self.state.hazard[r.interval] * r.exposure;
        }
    }

    /// One full scan in the fixed order hazard, coefficients, latent
    /// densities, allocations, sticks, atoms, concentration, rescaling.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let sweep = self.sweeps;
        self.sweep_inner(rng).map_err(|e| Error::Sweep {
            sweep,
            source: Box::new(e),
        })?;
        self.sweeps += 1;
        Ok(())
    }

    fn sweep_inner<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.refresh_zb();
        let eta: Vec<f64> = self
            .zb
            .iter()
            .zip(&self.state.x)
            .map(|(zb, x)| zb + self.state.beta_x * x)
            .collect();
        let stats = hazard_sufficient_stats(&self.expansion, &eta);
        self.state.hazard = update_hazard(&stats, &self.prior, rng);
        self.refresh_cumhaz();

        let terms = CoxTerms {
            delta: self.data.delta(),
            z: self.data.z(),
            x: &self.state.x,
            cumhaz: &self.cumhaz,
        };
        update_beta(
            &terms,
            &mut self.state.hazard,
            &mut self.state.beta_z,
            &mut self.state.beta_x,
            &self.prior,
            &mut self.beta_scales,
            rng,
        )?;
        self.refresh_cumhaz();
        self.refresh_zb();

        let terms = LatentTerms {
            delta: self.data.delta(),
            w: self.data.w(),
            area: self.data.area(),
            cumhaz: &self.cumhaz,
            zb: &self.zb,
            beta_x: self.state.beta_x,
        };
        update_latent_x(&terms, &mut self.state.x, &self.state.dp, &mut self.latent, rng);

        let dp_state = &mut self.state.dp;
        dp::sample_allocations(&self.state.x, dp_state, rng)?;
        dp::sample_sticks(dp_state, rng);
        dp::sample_atoms(&self.state.x, dp_state, &self.prior.base, &mut self.atom_scales, rng);
        dp::sample_concentration(
            dp_state,
            self.prior.alpha_log_mean,
            self.prior.alpha_log_var,
            &mut self.alpha_scale,
            rng,
        );
        rescale_latent(
            &mut self.state,
            self.data.w(),
            self.data.area(),
            &self.prior,
            &mut self.rescale_scale,
            rng,
        );
        Ok(())
    }
}

fn moment_matched_atom(x: &[f64]) -> Atom {
    let n = x.len().max(1) as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if mean > 0.0 && var > 0.0 {
        Atom {
            shape: mean * mean / var,
            scale: var / mean,
        }
    } else {
        Atom {
            shape: 1.0,
            scale: mean.max(1.0),
        }
    }
}

/// Retained posterior draws of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcDraws {
    pub chain: u64,
    pub seed: u64,
    pub z_names: Vec<String>,
    pub knots: Vec<f64>,
    pub beta_x: Vec<f64>,
    /// One J-vector per draw.
    pub beta_z: Vec<Vec<f64>>,
    pub hazard: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    pub atoms: Vec<Vec<Atom>>,
    pub latent: Option<Vec<Vec<f64>>>,
    pub acceptance: AcceptanceSummary,
}

impl McmcDraws {
    fn empty(chain: u64, seed: u64, data: &SurvivalDataset, grid: &HazardGrid, store_latent: bool) -> Self {
        Self {
            chain,
            seed,
            z_names: data.z_names().to_vec(),
            knots: grid.knots().to_vec(),
            beta_x: vec![],
            beta_z: vec![],
            hazard: vec![],
            alpha: vec![],
            weights: vec![],
            atoms: vec![],
            latent: store_latent.then(Vec::new),
            acceptance: AcceptanceSummary::default(),
        }
    }

    fn push(&mut self, state: &JointState) {
        self.beta_x.push(state.beta_x);
        self.beta_z.push(state.beta_z.clone());
        self.hazard.push(state.hazard.clone());
        self.alpha.push(state.dp.alpha);
        self.weights.push(state.dp.weights.clone());
        self.atoms.push(state.dp.atoms.clone());
        if let Some(latent) = &mut self.latent {
            latent.push(state.x.clone());
        }
    }

    pub fn len(&self) -> usize {
        self.beta_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta_x.is_empty()
    }

    pub fn beta_z_column(&self, j: usize) -> Vec<f64> {
        self.beta_z.iter().map(|b| b[j]).collect()
    }

    /// Coefficient draws by name: `beta_x` first, then each covariate.
    pub fn coefficient_columns(&self) -> Vec<(String, Vec<f64>)> {
        let mut cols = vec![("beta_x".to_string(), self.beta_x.clone())];
        for (j, name) in self.z_names.iter().enumerate() {
            cols.push((name.clone(), self.beta_z_column(j)));
        }
        cols
    }

    /// Header for [`Self::write_csv_rows`].
    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["chain".to_string(), "draw".into(), "beta_x".into()];
        h.extend(self.z_names.iter().cloned());
        h.extend((0..self.knots.len()).map(|l| format!("h{l}")));
        h.push("alpha".into());
        let k = self.weights.first().map_or(0, Vec::len);
        h.extend((1..=k).map(|c| format!("pi{c}")));
        h.extend((1..=k).map(|c| format!("shape{c}")));
        h.extend((1..=k).map(|c| format!("scale{c}")));
        h
    }

    pub fn write_csv_rows<W: Write>(&self, out: &mut csv::Writer<W>) -> Result<()> {
        for s in 0..self.len() {
            let mut row = vec![self.chain.to_string(), s.to_string(), self.beta_x[s].to_string()];
            row.extend(self.beta_z[s].iter().map(f64::to_string));
            row.extend(self.hazard[s].iter().map(f64::to_string));
            row.push(self.alpha[s].to_string());
            row.extend(self.weights[s].iter().map(f64::to_string));
            row.extend(self.atoms[s].iter().map(|a| a.shape.to_string()));
            row.extend(self.atoms[s].iter().map(|a| a.scale.to_string()));
            out.write_record(&row)?;
        }
        Ok(())
    }
}

/// Writes the draws of several chains as one CSV table.
pub fn write_draws_csv<W: Write>(chains: &[McmcDraws], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if let Some(first) = chains.first() {
        w.write_record(first.csv_header())?;
    }
    for c in chains {
        c.write_csv_rows(&mut w)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs one chain from `config.seed` on stream `chain`.
pub fn run_chain(
    data: &SurvivalDataset,
    config: &ModelConfig,
    prior: &PriorSpec,
    chain: u64,
) -> Result<McmcDraws> {
    let mut rng = stream_rng(config.seed, &[chain]);
    run_chain_with_rng(data, config, prior, chain, &mut rng)
}

pub fn run_chain_with_rng(
    data: &SurvivalDataset,
    config: &ModelConfig,
    prior: &PriorSpec,
    chain: u64,
    rng: &mut ChaCha8Rng,
) -> Result<McmcDraws> {
    config.validate()?;
    let grid = make_hazard_grid(data.u(), data.delta(), config.m_intervals, config.knots)?;
    let mut sampler = Sampler::new(data.clone(), grid.clone(), *prior, config.k_trunc, rng)?;
    let mut draws = McmcDraws::empty(chain, config.seed, data, &grid, config.store_latent);
    if config.n_burn == 0 {
        sampler.freeze_adaptation();
    }
    let retained = config.n_retained();
    for it in 0..config.n_iter {
        sampler.sweep(rng)?;
        if it + 1 == config.n_burn {
            sampler.freeze_adaptation();
        }
        if it >= config.n_burn {
            let t = it - config.n_burn + 1;
            if t.is_multiple_of(config.thin) && draws.len() < retained {
                draws.push(sampler.state());
            }
        }
    }
    draws.acceptance = sampler.acceptance();
    Ok(draws)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDiagnostic {
    pub name: String,
    pub rhat: f64,
    pub ess: f64,
}

#[derive(Debug, Clone)]
pub struct ChainSet {
    pub chains: Vec<McmcDraws>,
    /// `None` with a single chain, where split diagnostics are not reported.
    pub diagnostics: Option<Vec<ParamDiagnostic>>,
}

impl ChainSet {
    /// Pooled coefficient draws across chains.
    pub fn pooled_coefficients(&self) -> Vec<(String, Vec<f64>)> {
        let mut pooled: Vec<(String, Vec<f64>)> = Vec::new();
        for c in &self.chains {
            for (j, (name, col)) in c.coefficient_columns().into_iter().enumerate() {
                match pooled.get_mut(j) {
                    Some((_, acc)) => acc.extend(col),
                    None => pooled.push((name, col)),
                }
            }
        }
        pooled
    }

    pub fn max_rhat(&self) -> Option<f64> {
        self.diagnostics
            .as_ref()
            .map(|d| d.iter().map(|p| p.rhat).fold(f64::NAN, f64::max))
    }
}

/// Runs `n_chains` chains on independent streams (in parallel) and computes
/// split-R-hat and effective sample size for every coefficient.
pub fn run_chains(
    data: &SurvivalDataset,
    config: &ModelConfig,
    prior: &PriorSpec,
    n_chains: usize,
) -> Result<ChainSet> {
    if n_chains == 0 {
        return Err(Error::InvalidConfig("at least one chain is required".into()));
    }
    let chains: Vec<McmcDraws> = (0..n_chains as u64)
        .into_par_iter()
        .map(|c| run_chain(data, config, prior, c))
        .collect::<Result<_>>()?;
    let diagnostics = (n_chains > 1 && config.n_retained() >= 4).then(|| {
        let names: Vec<String> = chains[0]
            .coefficient_columns()
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let cols: Vec<Vec<f64>> = chains
                    .iter()
                    .map(|c| c.coefficient_columns().swap_remove(j).1)
                    .collect();
                let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
                ParamDiagnostic {
                    name: name.clone(),
                    rhat: split_rhat(&refs),
                    ess: effective_sample_size(&refs),
                }
            })
            .collect()
    });
    Ok(ChainSet {
        chains,
        diagnostics,
    })
}
