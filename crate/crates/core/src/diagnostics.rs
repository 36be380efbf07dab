//! Convergence and Monte Carlo error diagnostics.

use crate::error::{Error, Result};

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Each chain cut into two halves; the shared length is the shortest half.
fn split_halves<'a>(chains: &[&'a [f64]]) -> Vec<&'a [f64]> {
    let half = chains.iter().map(|c| c.len() / 2).min().unwrap_or(0);
    chains
        .iter()
        .flat_map(|c| {
            let off = c.len() - 2 * half;
            [&c[off..off + half], &c[off + half..]]
        })
        .collect()
}

struct Moments {
    n: usize,
    chain_means: Vec<f64>,
    w: f64,
    var_plus: f64,
}

fn moments(chains: &[&[f64]]) -> Moments {
    let n = chains[0].len();
    let m = chains.len() as f64;
    let chain_means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let grand = mean(&chain_means);
    let w = chains
        .iter()
        .zip(&chain_means)
        .map(|(c, mu)| c.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n as f64 - 1.0))
        .sum::<f64>()
        / m;
    let b_over_n = if m > 1.0 {
        chain_means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b_over_n;
    Moments {
        n,
        chain_means,
        w,
        var_plus,
    }
}

/// Split R-hat over one or more chains. Chains of a constant value give 1.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    let halves = split_halves(chains);
    if halves.is_empty() || halves[0].len() < 2 {
        return f64::NAN;
    }
    let mo = moments(&halves);
    if mo.w <= 0.0 {
        return 1.0;
    }
    (mo.var_plus / mo.w).sqrt()
}

/// Multi-chain effective sample size on split chains, with Geyer's initial
/// monotone positive-sequence truncation of the autocorrelations.
pub fn effective_sample_size(chains: &[&[f64]]) -> f64 {
    let halves = split_halves(chains);
    if halves.is_empty() || halves[0].len() < 4 {
        return f64::NAN;
    }
    let mo = moments(&halves);
    let n = mo.n;
    let total = (n * halves.len()) as f64;
    if mo.w <= 0.0 {
        return total;
    }
    let mean_acov = |t: usize| -> f64 {
        halves
            .iter()
            .zip(&mo.chain_means)
            .map(|(c, mu)| {
                (0..n - t).map(|i| (c[i] - mu) * (c[i + t] - mu)).sum::<f64>() / n as f64
            })
            .sum::<f64>()
            / halves.len() as f64
    };
    let rho = |t: usize| 1.0 - (mo.w - mean_acov(t)) / mo.var_plus;

    let mut pairs: Vec<f64> = Vec::new();
    let mut t = 0;
    while t + 1 < n {
        let p = if t == 0 { 1.0 } else { rho(t) } + rho(t + 1);
        if p <= 0.0 {
            break;
        }
        pairs.push(p);
        t += 2;
    }
    for k in 1..pairs.len() {
        pairs[k] = pairs[k].min(pairs[k - 1]);
    }
    let tau = (-1.0 + 2.0 * pairs.iter().sum::<f64>()).max(1.0 / total.log10());
    total / tau
}

/// Batch-means Monte Carlo standard error of the mean: the SD of the batch
/// means over sqrt(n_batches). Batches are consecutive and of equal length;
/// any remainder joins the last batch.
pub fn batch_means_mcse(values: &[f64], n_batches: usize) -> Result<f64> {
    let n = values.len();
    if n_batches < 2 || n < n_batches {
        return Err(Error::TooFewValues {
            required: n_batches.max(2),
            found: n,
        });
    }
    let size = n / n_batches;
    let means: Vec<f64> = (0..n_batches)
        .map(|b| {
            let end = if b + 1 == n_batches { n } else { (b + 1) * size };
            mean(&values[b * size..end])
        })
        .collect();
    let grand = mean(&means);
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (n_batches as f64 - 1.0);
    Ok((var / n_batches as f64).sqrt())
}
