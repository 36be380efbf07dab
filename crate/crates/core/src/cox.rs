//! Cox proportional hazards fits by Newton-Raphson on the Breslow partial
//! likelihood, and martingale residuals.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 50;
const GRADIENT_TOL: f64 = 1e-8;
const STEP_TOL: f64 = 1e-6;
const RELATIVE_LL_TOL: f64 = 1e-10;
/// The relative log-likelihood test only counts once Newton steps are this
/// small; under monotone likelihood the log-likelihood rounds to a constant
/// while the coefficient still moves by O(1) per step.
const RELATIVE_LL_STEP: f64 = 1e-4;
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoxFit {
    pub coef: Vec<f64>,
    /// Inverse observed information at `coef`.
    #[serde(skip)]
    pub covariance: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub loglik: f64,
}

impl CoxFit {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.coef.len()).map(|j| self.covariance[(j, j)].max(0.0).sqrt()).collect()
    }

    /// Two-sided Wald p-values with a standard normal reference.
    pub fn p_values(&self) -> Vec<f64> {
        let normal = Normal::standard();
        self.coef
            .iter()
            .zip(self.std_errors())
            .map(|(b, se)| {
                if se > 0.0 {
                    2.0 * normal.sf((b / se).abs())
                } else {
                    f64::NAN
                }
            })
            .collect()
    }

    /// Wald interval `coef +- z * se` at the given level.
    pub fn wald_interval(&self, j: usize, level: f64) -> (f64, f64) {
        let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
        let se = self.std_errors()[j];
        (self.coef[j] - z * se, self.coef[j] + z * se)
    }
}

/// Subject indices in decreasing time order, grouped by tied times.
fn tie_groups(times: &[f64]) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..times.len()).collect();
    idx.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in idx {
        match groups.last_mut() {
            Some(g) if times[g[0]] == times[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

struct Evaluation {
    loglik: f64,
    gradient: DVector<f64>,
    information: DMatrix<f64>,
}

fn evaluate(groups: &[Vec<usize>], events: &[bool], x: &DMatrix<f64>, beta: &DVector<f64>) -> Evaluation {
    let p = x.ncols();
    let eta = x * beta;
    let mut s0 = 0.0;
    let mut s1 = DVector::zeros(p);
    let mut s2 = DMatrix::zeros(p, p);
    let mut loglik = 0.0;
    let mut gradient = DVector::zeros(p);
    let mut information = DMatrix::zeros(p, p);
    for g in groups {
        for &i in g {
            let w = eta[i].exp();
            let xi = x.row(i).transpose();
            s0 += w;
            s1 += w * &xi;
            s2 += w * &xi * xi.transpose();
        }
        let mean = &s1 / s0;
        let cov = &s2 / s0 - &mean * mean.transpose();
        for &i in g.iter().filter(|&&i| events[i]) {
            loglik += eta[i] - s0.ln();
            gradient += x.row(i).transpose() - &mean;
            information += &cov;
        }
    }
    Evaluation {
        loglik,
        gradient,
        information,
    }
}

fn check_inputs(times: &[f64], events: &[bool], x: &DMatrix<f64>) -> Result<()> {
    if events.len() != times.len() {
        return Err(Error::LengthMismatch {
            field: "event",
            expected: times.len(),
            found: events.len(),
        });
    }
    if x.nrows() != times.len() {
        return Err(Error::LengthMismatch {
            field: "covariates",
            expected: times.len(),
            found: x.nrows(),
        });
    }
    if !events.iter().any(|&d| d) {
        return Err(Error::NoEvents);
    }
    Ok(())
}

/// Breslow log partial likelihood at `beta`.
pub fn log_partial_likelihood(times: &[f64], events: &[bool], x: &DMatrix<f64>, beta: &[f64]) -> f64 {
    let groups = tie_groups(times);
    evaluate(&groups, events, x, &DVector::from_column_slice(beta)).loglik
}

/// Score vector and observed information at `beta`.
pub fn score_and_information(
    times: &[f64],
    events: &[bool],
    x: &DMatrix<f64>,
    beta: &[f64],
) -> (Vec<f64>, DMatrix<f64>) {
    let groups = tie_groups(times);
    let e = evaluate(&groups, events, x, &DVector::from_column_slice(beta));
    (e.gradient.as_slice().to_vec(), e.information)
}

fn pseudo_inverse(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    if m.nrows() == 0 {
        return (m.clone(), true);
    }
    let svd = m.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let tol = max_sv * 1e-12 * m.nrows() as f64;
    let full_rank = max_sv > 0.0 && svd.singular_values.iter().all(|&s| s > tol);
    let pinv = svd.pseudo_inverse(tol.max(f64::MIN_POSITIVE)).unwrap_or_else(|_| DMatrix::zeros(m.nrows(), m.ncols()));
    (pinv, full_rank)
}

/// Newton-Raphson from zero with step halving. Converges when the largest
/// score component is below 1e-8 and the Newton step is below 1e-6, or when
/// the relative change of the log partial likelihood is below 1e-10 after a
/// step shorter than 1e-4.
/// A fit that diverges (monotone likelihood) or exhausts the iteration limit
/// comes back with `converged == false` at its best iterate.
pub fn fit_cox(times: &[f64], events: &[bool], x: &DMatrix<f64>) -> Result<CoxFit> {
    check_inputs(times, events, x)?;
    let p = x.ncols();
    // Centering leaves the partial likelihood unchanged and keeps exp(eta) tame.
    let means: Vec<f64> = (0..p).map(|j| x.column(j).mean()).collect();
    let xc = DMatrix::from_fn(x.nrows(), p, |i, j| x[(i, j)] - means[j]);
    let groups = tie_groups(times);
    let mut beta = DVector::zeros(p);
    let mut cur = evaluate(&groups, events, &xc, &beta);
    for iteration in 1..=MAX_ITERATIONS {
        let (cov, full_rank) = pseudo_inverse(&cur.information);
        let step = &cov * &cur.gradient;
        let max_g = cur.gradient.amax();
        let max_s = if p == 0 { 0.0 } else { step.amax() };
        let done = |beta: &DVector<f64>, cov: DMatrix<f64>, ll: f64, converged: bool| CoxFit {
            coef: beta.as_slice().to_vec(),
            covariance: cov,
            converged,
            iterations: iteration,
            loglik: ll,
        };
        if !full_rank && iteration > 1 {
            // information collapsed after moving away from zero: the estimate runs off
            return Ok(done(&beta, cov, cur.loglik, false));
        }
        if max_g < GRADIENT_TOL && max_s < STEP_TOL {
            return Ok(done(&beta, cov, cur.loglik, true));
        }
        if !full_rank {
            return Err(Error::Singular);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = &beta + t * &step;
            let e = evaluate(&groups, events, &xc, &cand);
            if e.loglik.is_finite() && e.loglik >= cur.loglik {
                accepted = Some((cand, e));
                break;
            }
            t *= 0.5;
        }
        let Some((next_beta, next)) = accepted else {
            return Ok(done(&beta, cov, cur.loglik, false));
        };
        let rel = (next.loglik - cur.loglik).abs() / cur.loglik.abs().max(f64::MIN_POSITIVE);
        let taken = if p == 0 { 0.0 } else { (&next_beta - &beta).amax() };
        beta = next_beta;
        cur = next;
        if rel < RELATIVE_LL_TOL && taken < RELATIVE_LL_STEP {
            let (cov, _) = pseudo_inverse(&cur.information);
            return Ok(CoxFit {
                coef: beta.as_slice().to_vec(),
                covariance: cov,
                converged: true,
                iterations: iteration,
                loglik: cur.loglik,
            });
        }
    }
    let (cov, _) = pseudo_inverse(&cur.information);
    Ok(CoxFit {
        coef: beta.as_slice().to_vec(),
        covariance: cov,
        converged: false,
        iterations: MAX_ITERATIONS,
        loglik: cur.loglik,
    })
}

/// Breslow cumulative baseline hazard at each subject's own time, for
/// linear predictors `eta`.
pub fn breslow_cumulative_hazard(times: &[f64], events: &[bool], eta: &[f64]) -> Vec<f64> {
    let groups = tie_groups(times);
    // increments per tied time, in decreasing time order
    let mut s0 = 0.0;
    let mut increments = Vec::with_capacity(groups.len());
    for g in &groups {
        s0 += g.iter().map(|&i| eta[i].exp()).sum::<f64>();
        let d = g.iter().filter(|&&i| events[i]).count() as f64;
        increments.push(d / s0);
    }
    let mut out = vec![0.0; times.len()];
    let mut cum = 0.0;
    for (g, inc) in groups.iter().zip(&increments).rev() {
        cum += inc;
        for &i in g {
            out[i] = cum;
        }
    }
    out
}

/// `r_i = delta_i - H0(u_i) exp(eta_i)` with the Breslow baseline.
pub fn martingale_residuals(fit: &CoxFit, times: &[f64], events: &[bool], x: &DMatrix<f64>) -> Vec<f64> {
    let beta = DVector::from_column_slice(&fit.coef);
    let eta: Vec<f64> = (x * beta).iter().copied().collect();
    let h0 = breslow_cumulative_hazard(times, events, &eta);
    (0..times.len())
        .map(|i| if events[i] { 1.0 } else { 0.0 } - h0[i] * eta[i].exp())
        .collect()
}
