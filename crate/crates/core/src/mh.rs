//! Random-walk Metropolis helpers.

use rand::Rng;

/// Metropolis-Hastings accept/reject on a log acceptance ratio.
pub fn mh_accept<R: Rng + ?Sized>(rng: &mut R, log_ratio: f64) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if log_ratio.is_nan() {
        return false;
    }
    (1.0 - rng.random::<f64>()).ln() < log_ratio
}

/// Proposal scale tuned by Robbins-Monro steps on its logarithm while
/// adapting, then frozen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveScale {
    log_scale: f64,
    target: f64,
    adapting: bool,
    steps: u64,
    proposed: u64,
    accepted: u64,
}

impl AdaptiveScale {
    pub fn new(scale: f64, target: f64) -> Self {
        Self {
            log_scale: scale.ln(),
            target,
            adapting: true,
            steps: 0,
            proposed: 0,
            accepted: 0,
        }
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
        if self.adapting {
            self.steps += 1;
            let gain = (1.0 + self.steps as f64).powf(-0.6);
            let hit = if accepted { 1.0 } else { 0.0 };
            self.log_scale = (self.log_scale + gain * (hit - self.target)).clamp(-20.0, 10.0);
        }
    }

    /// Stops adaptation and resets the acceptance counters.
    pub fn freeze(&mut self) {
        self.adapting = false;
        self.proposed = 0;
        self.accepted = 0;
    }

    pub fn is_adapting(&self) -> bool {
        self.adapting
    }

    /// Acceptance rate since construction or the last freeze.
    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}
