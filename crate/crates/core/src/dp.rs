//! Truncated stick-breaking Dirichlet-process mixture of gamma laws for the
//! latent biomarker densities.
//!
//! With truncation level K the weights are
//! `pi_k = nu_k * prod_{j<k} (1 - nu_j)` for k < K and the last component
//! takes the remaining stick. Components are Gamma(shape, scale) atoms drawn
//! from the base measure. K = 1 degenerates to a single gamma law with no
//! sticks and no concentration update.

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::data::BaseMeasure;
use crate::dist::{
    ln_gamma_pdf, ln_gamma_pdf_rate, ln_normal_pdf, sample_beta, sample_gamma_rate,
    sample_log_categorical, sample_std_normal,
};
use crate::error::{Error, Result};
use crate::mh::{mh_accept, AdaptiveScale};

/// Random-walk steps per occupied component in each atom update.
pub const ATOM_MH_STEPS: usize = 5;
/// Random-walk steps on log(alpha) in each concentration update.
pub const ALPHA_MH_STEPS: usize = 5;
/// Acceptance rate the atom and concentration proposals adapt toward.
pub const TARGET_ACCEPTANCE: f64 = 0.3;

/// Gamma component with shape `a` and scale `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub shape: f64,
    pub scale: f64,
}

impl Atom {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        ln_gamma_pdf(x, self.shape, self.scale)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpState {
    /// Stick fractions nu_1..nu_{K-1}.
    pub sticks: Vec<f64>,
    pub weights: Vec<f64>,
    pub atoms: Vec<Atom>,
    /// Component index (0-based) of each subject.
    pub alloc: Vec<usize>,
    pub alpha: f64,
}

/// K = ceil(1 - alpha * ln(eps)), never below 2.
pub fn truncation_level(alpha: f64, eps: f64) -> usize {
    let k = (1.0 - alpha * eps.ln()).ceil();
    if k.is_finite() && k > 2.0 {
        k as usize
    } else {
        2
    }
}

pub fn weights_from_sticks(sticks: &[f64]) -> Vec<f64> {
    let mut weights = Vec::with_capacity(sticks.len() + 1);
    let mut remaining = 1.0;
    for &nu in sticks {
        weights.push(nu * remaining);
        remaining *= 1.0 - nu;
    }
    weights.push(remaining);
    weights
}

pub fn sample_base_atom<R: Rng + ?Sized>(rng: &mut R, base: &BaseMeasure) -> Atom {
    Atom {
        shape: sample_gamma_rate(rng, base.shape_shape, base.shape_rate),
        scale: sample_gamma_rate(rng, base.scale_shape, base.scale_rate),
    }
}

fn ln_base_density(atom: &Atom, base: &BaseMeasure) -> f64 {
    ln_gamma_pdf_rate(atom.shape, base.shape_shape, base.shape_rate)
        + ln_gamma_pdf_rate(atom.scale, base.scale_shape, base.scale_rate)
}

impl DpState {
    /// Sticks drawn from Beta(1, alpha); atoms from the base measure.
    pub fn from_prior<R: Rng + ?Sized>(
        rng: &mut R,
        k: usize,
        alpha: f64,
        base: &BaseMeasure,
        alloc: Vec<usize>,
    ) -> Self {
        let sticks: Vec<f64> = (0..k.saturating_sub(1))
            .map(|_| sample_beta(rng, 1.0, alpha))
            .collect();
        let weights = weights_from_sticks(&sticks);
        let atoms = (0..k).map(|_| sample_base_atom(rng, base)).collect();
        Self {
            sticks,
            weights,
            atoms,
            alloc,
            alpha,
        }
    }

    pub fn k(&self) -> usize {
        self.atoms.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k()];
        for &c in &self.alloc {
            counts[c] += 1;
        }
        counts
    }
}

/// Draws each allocation from its full conditional
/// `P(c_i = k) ∝ pi_k * Gamma(x_i; a_k, b_k)`.
pub fn sample_allocations<R: Rng + ?Sized>(x: &[f64], state: &mut DpState, rng: &mut R) -> Result<()> {
    let k = state.k();
    if k == 1 {
        state.alloc.iter_mut().for_each(|c| *c = 0);
        return Ok(());
    }
    // pi_k / (Gamma(a_k) b_k^a_k)
    let offset: Vec<f64> = state
        .weights
        .iter()
        .zip(&state.atoms)
        .map(|(&w, a)| w.ln() - ln_gamma(a.shape) - a.shape * a.scale.ln())
        .collect();
    let mut log_w = vec![0.0; k];
    state.alloc.resize(x.len(), 0);
    for (i, &xi) in x.iter().enumerate() {
        let lx = xi.ln();
        for (j, atom) in state.atoms.iter().enumerate() {
            log_w[j] = offset[j] + (atom.shape - 1.0) * lx - xi / atom.scale;
        }
        state.alloc[i] =
            sample_log_categorical(rng, &log_w).ok_or(Error::DegenerateWeights { subject: i })?;
    }
    Ok(())
}

/// Conjugate update `nu_k ~ Beta(1 + n_k, alpha + sum_{j>k} n_j)`.
pub fn sample_sticks<R: Rng + ?Sized>(state: &mut DpState, rng: &mut R) {
    let counts = state.counts();
    let mut tail: usize = counts.iter().sum();
    for (k, nu) in state.sticks.iter_mut().enumerate() {
        tail -= counts[k];
        *nu = sample_beta(rng, 1.0 + counts[k] as f64, state.alpha + tail as f64);
    }
    state.weights = weights_from_sticks(&state.sticks);
}

#[derive(Debug, Clone, Copy, Default)]
struct ComponentStats {
    n: f64,
    sum_x: f64,
    sum_ln_x: f64,
}

fn ln_atom_target(atom: &Atom, s: &ComponentStats, base: &BaseMeasure) -> f64 {
    let (a, b) = (atom.shape, atom.scale);
    let lik = (a - 1.0) * s.sum_ln_x - s.sum_x / b - s.n * (ln_gamma(a) + a * b.ln());
    // + ln a + ln b: Jacobian of the log-scale random walk
    lik + ln_base_density(atom, base) + a.ln() + b.ln()
}

/// Updates component atoms. Occupied components take [`ATOM_MH_STEPS`]
/// random-walk steps on (ln a, ln b); empty components are redrawn from the
/// base measure. `scales` holds one proposal scale per component.
pub fn sample_atoms<R: Rng + ?Sized>(
    x: &[f64],
    state: &mut DpState,
    base: &BaseMeasure,
    scales: &mut [AdaptiveScale],
    rng: &mut R,
) {
    let mut stats = vec![ComponentStats::default(); state.k()];
    for (&xi, &c) in x.iter().zip(&state.alloc) {
        let s = &mut stats[c];
        s.n += 1.0;
        s.sum_x += xi;
        s.sum_ln_x += xi.ln();
    }
    for (k, s) in stats.iter().enumerate() {
        if s.n == 0.0 {
            state.atoms[k] = sample_base_atom(rng, base);
            continue;
        }
        let mut current = state.atoms[k];
        let mut current_lp = ln_atom_target(&current, s, base);
        for _ in 0..ATOM_MH_STEPS {
            let step = scales[k].scale();
            let proposal = Atom {
                shape: current.shape * (step * sample_std_normal(rng)).exp(),
                scale: current.scale * (step * sample_std_normal(rng)).exp(),
            };
            let ok = if proposal.shape > 0.0
                && proposal.scale > 0.0
                && proposal.shape.is_finite()
                && proposal.scale.is_finite()
            {
                let lp = ln_atom_target(&proposal, s, base);
                let ok = mh_accept(rng, lp - current_lp);
                if ok {
                    current = proposal;
                    current_lp = lp;
                }
                ok
            } else {
                false
            };
            scales[k].record(ok);
        }
        state.atoms[k] = current;
    }
}

/// Random-walk update of ln(alpha) targeting
/// `alpha^(K-1) prod_j (1 - nu_j)^(alpha - 1) * LogNormal(alpha; mu, var)`.
pub fn sample_concentration<R: Rng + ?Sized>(
    state: &mut DpState,
    log_mean: f64,
    log_var: f64,
    scale: &mut AdaptiveScale,
    rng: &mut R,
) {
    if state.sticks.is_empty() {
        return;
    }
    let n_sticks = state.sticks.len() as f64;
    let sum_ln_rest: f64 = state.sticks.iter().map(|&nu| (1.0 - nu).ln()).sum();
    // in theta = ln(alpha), the log-normal density times the Jacobian is normal
    let target =
        |theta: f64| n_sticks * theta + (theta.exp() - 1.0) * sum_ln_rest + ln_normal_pdf(theta, log_mean, log_var);
    let mut theta = state.alpha.ln();
    let mut lp = target(theta);
    for _ in 0..ALPHA_MH_STEPS {
        let prop = theta + scale.scale() * sample_std_normal(rng);
        let lp_prop = target(prop);
        let ok = lp_prop.is_finite() && mh_accept(rng, lp_prop - lp);
        if ok {
            theta = prop;
            lp = lp_prop;
        }
        scale.record(ok);
    }
    state.alpha = theta.exp();
}

/// Mixture density `sum_k pi_k Gamma(x; a_k, b_k)` on a grid of positive points.
pub fn mixture_density(grid: &[f64], weights: &[f64], atoms: &[Atom]) -> Vec<f64> {
    grid.iter()
        .map(|&x| {
            weights
                .iter()
                .zip(atoms)
                .filter(|(&w, _)| w > 0.0)
                .map(|(&w, a)| w * a.ln_pdf(x).exp())
                .sum()
        })
        .collect()
}
