//! Mixing of real and virtual experience and the adaptive influence ratio.
//!
//! The ratio `rho` weights the virtual-data loss (loss weighting) or is the
//! per-sample probability of drawing from the virtual buffer (distribution
//! mixing). In adaptive mode it is annealed from the disagreement of the
//! value ensemble:
//!
//! ```text
//! omega  = 1 / (1 + sigma2_bar)
//! Omega' = lambda * Omega + (1 - lambda) * omega
//! eta    = (1 - lambda) * Omega'
//! rho'   = max(0, rho * (1 - eta))
//! ```

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::per_sample_stats;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfluenceMode {
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixingApplication {
    LossWeighting,
    Distribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InfluenceConfig {
    pub rho0: f64,
    pub omega0: f64,
    pub lambda: f64,
    pub mode: InfluenceMode,
    pub application: MixingApplication,
}

impl Default for InfluenceConfig {
    fn default() -> Self {
        Self {
            rho0: 0.3,
            omega0: 0.0,
            lambda: 0.9,
            mode: InfluenceMode::Fixed,
            application: MixingApplication::LossWeighting,
        }
    }
}

impl InfluenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho0) {
            return Err(Error::invalid(format!("rho0 must lie in [0, 1], got {}", self.rho0)));
        }
        if !(self.omega0 >= 0.0 && self.omega0.is_finite()) {
            return Err(Error::invalid("omega0 must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!("influence lambda must lie in [0, 1), got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceState {
    pub rho: f64,
    pub omega: f64,
    pub lambda: f64,
    pub mode: InfluenceMode,
    pub application: MixingApplication,
}

/// Result of one adaptation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfluenceUpdate {
    pub sigma2_bar: f64,
    pub omega: f64,
    pub rho: f64,
}

/// One step of the recursion given the batch-mean ensemble variance.
/// Returns `(Omega', rho')`.
pub fn influence_step(rho: f64, omega: f64, lambda: f64, sigma2_bar: f64) -> (f64, f64) {
    let w = 1.0 / (1.0 + sigma2_bar);
    let omega_next = lambda * omega + (1.0 - lambda) * w;
    let eta = (1.0 - lambda) * omega_next;
    (omega_next, (rho * (1.0 - eta)).max(0.0))
}

/// Batch mean of the per-sample population variance across heads of a
/// `B x D` value matrix.
pub fn mean_ensemble_variance(values: &[Vec<f64>]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyBuffer("influence batch"));
    }
    let d = values[0].len();
    if d < 2 {
        return Err(Error::invalid(format!("influence adaptation needs at least 2 value heads, got {d}")));
    }
    let mut acc = 0.0;
    for row in values {
        if row.len() != d {
            return Err(Error::Dimension { what: "value matrix row", expected: d, got: row.len() });
        }
        acc += per_sample_stats(row).1;
    }
    Ok(acc / values.len() as f64)
}

impl InfluenceState {
    pub fn new(cfg: &InfluenceConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { rho: cfg.rho0, omega: cfg.omega0, lambda: cfg.lambda, mode: cfg.mode, application: cfg.application })
    }

    /// Adapts `rho` from a `B x D` value matrix; fixed mode only reports the variance.
    pub fn update(&mut self, values: &[Vec<f64>]) -> Result<InfluenceUpdate> {
        let sigma2_bar = mean_ensemble_variance(values)?;
        if self.mode == InfluenceMode::Adaptive {
            let (omega, rho) = influence_step(self.rho, self.omega, self.lambda, sigma2_bar);
            self.omega = omega;
            self.rho = rho;
        }
        Ok(InfluenceUpdate { sigma2_bar, omega: self.omega, rho: self.rho })
    }
}

/// Which buffer a minibatch entry refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Real(usize),
    Virtual(usize),
}

/// Draws `b` indices: virtual with probability `rho`, uniform within the
/// chosen buffer. Falls back to the other buffer when the chosen one is empty.
pub fn mixed_minibatch(
    n_real: usize,
    n_virtual: usize,
    rho: f64,
    b: usize,
    rng: &mut RngStream,
) -> Result<Vec<Source>> {
    if n_real == 0 && n_virtual == 0 {
        return Err(Error::EmptyBuffer("both rollout buffers"));
    }
    let mut warned = false;
    let mut out = Vec::with_capacity(b);
    for _ in 0..b {
        let virt = rng.bernoulli(rho);
        let pick_virtual = match (virt, n_real, n_virtual) {
            (true, _, 0) | (false, 0, _) => {
                if !warned {
                    warn!("mixed minibatch: requested buffer is empty, drawing from the other");
                    warned = true;
                }
                !virt
            }
            _ => virt,
        };
        out.push(if pick_virtual { Source::Virtual(rng.index(n_virtual)) } else { Source::Real(rng.index(n_real)) });
    }
    Ok(out)
}

/// `(1 - rho) * loss_rl + rho * loss_mppi`.
pub fn mixed_loss(loss_rl: f64, loss_mppi: f64, rho: f64) -> f64 {
    (1.0 - rho) * loss_rl + rho * loss_mppi
}
