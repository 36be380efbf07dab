//! Densities, samplers and RNG stream derivation shared by the samplers and
//! the simulation harness.
//!
//! Gamma laws are written as (shape, scale) unless a function name says
//! `rate`. All generators are ChaCha8 so draws are reproducible across
//! platforms for a given seed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use rand::SeedableRng;
use statrs::function::gamma::ln_gamma;

/// Smallest value a sampled positive quantity is allowed to take.
pub const POSITIVE_FLOOR: f64 = 1e-300;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn ln_gamma_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    (shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()
}

pub fn ln_gamma_pdf_rate(x: f64, shape: f64, rate: f64) -> f64 {
    ln_gamma_pdf(x, shape, 1.0 / rate)
}

pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}

pub fn ln_cauchy_pdf(x: f64, location: f64, scale: f64) -> f64 {
    let d = (x - location) / scale;
    -(std::f64::consts::PI * scale * (1.0 + d * d)).ln()
}

/// Log of a Gamma(shape, 1) draw; stays finite for shapes far below one
/// where the draw itself underflows.
pub fn sample_ln_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        g.max(POSITIVE_FLOOR).ln()
    } else {
        // Gamma(a) = Gamma(a + 1) * U^(1/a)
        let boosted: f64 = Gamma::new(shape + 1.0, 1.0)
            .expect("positive shape")
            .sample(rng);
        let u = 1.0 - rng.random::<f64>();
        boosted.max(POSITIVE_FLOOR).ln() + u.ln() / shape
    }
}

/// Gamma(shape, scale) draw floored at [`POSITIVE_FLOOR`].
pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    (sample_ln_gamma(rng, shape) + scale.ln())
        .exp()
        .max(POSITIVE_FLOOR)
}

pub fn sample_gamma_rate<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    sample_gamma(rng, shape, 1.0 / rate)
}

/// Beta(a, b) draw kept strictly inside (0, 1).
pub fn sample_beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let la = sample_ln_gamma(rng, a);
    let lb = sample_ln_gamma(rng, b);
    let v = 1.0 / (1.0 + (lb - la).exp());
    v.clamp(POSITIVE_FLOOR, 1.0 - f64::EPSILON / 2.0)
}

pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("finite positive mean");
    let v: f64 = d.sample(rng);
    v as u64
}

pub fn sample_std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn sample_exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let u = 1.0 - rng.random::<f64>();
    -u.ln() / rate
}

/// Draws an index from unnormalized log weights. Returns `None` when every
/// weight is zero or non-finite.
pub fn sample_log_categorical<R: Rng + ?Sized>(rng: &mut R, log_w: &[f64]) -> Option<usize> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let total: f64 = log_w.iter().map(|&l| (l - max).exp()).sum();
    let mut target = rng.random::<f64>() * total;
    for (k, &l) in log_w.iter().enumerate() {
        let w = (l - max).exp();
        if target < w {
            return Some(k);
        }
        target -= w;
    }
    log_w.iter().rposition(|l| l.is_finite())
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic generator for a (seed, index path) pair, e.g.
/// `(scenario seed, replicate, estimator)`. Independent of scheduling.
pub fn stream_rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut key = splitmix64(seed);
    for &p in path {
        key = splitmix64(key ^ splitmix64(p.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    ChaCha8Rng::seed_from_u64(key)
}
