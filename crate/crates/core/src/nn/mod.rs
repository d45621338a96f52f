//! Small dense networks with hand-written backpropagation.

mod adam;
mod checkpoint;
mod ensemble;
mod mlp;
pub(crate) mod policy;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use ensemble::{per_sample_stats, EnsembleStats, ValueEnsemble};
pub use mlp::{Mlp, Trace};
pub(crate) use policy::softplus;
pub use policy::{PolicyNet, PolicySample, LOG_STD_MAX, LOG_STD_MIN};

/// Affine input scaling derived from declared observation bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsNormalizer {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ObsNormalizer {
    pub fn identity(dim: usize) -> Self {
        Self { center: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    /// Maps `[low, high]` onto `[-1, 1]`; unbounded dimensions pass through.
    pub fn from_bounds(low: &[f64], high: &[f64]) -> Self {
        let (center, scale) = low
            .iter()
            .zip(high)
            .map(|(&lo, &hi)| {
                if lo.is_finite() && hi.is_finite() && hi > lo {
                    (0.5 * (lo + hi), 2.0 / (hi - lo))
                } else {
                    (0.0, 1.0)
                }
            })
            .unzip();
        Self { center, scale }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.center.iter().zip(&self.scale)).map(|(v, (c, k))| (v - c) * k).collect()
    }
}
