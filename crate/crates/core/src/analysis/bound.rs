//! Upper bound on the value error introduced by mixing approximate-model
//! data into training, evaluated from its constituent constants.

use crate::envs::ApproxModel;
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub rho: f64,
    /// Total-variation distance between true and approximate dynamics, in `[0, 2]`.
    pub alpha_p: f64,
    /// Sup-norm reward model error.
    pub alpha_r: f64,
    pub horizon: usize,
    pub gamma: f64,
    pub span_r: f64,
    pub r_max: f64,
    /// Span of H-step returns seen by the planner.
    pub span_g: f64,
    /// Diameter of the control set.
    pub d_u: f64,
    /// Largest eigenvalue of the inverse noise covariance.
    pub lambda_max: f64,
}

/// The four additive contributions of the bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerms {
    pub dynamics: f64,
    pub reward: f64,
    pub tail: f64,
    pub sampling: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.dynamics + self.reward + self.tail + self.sampling
    }
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid(format!("bound requires gamma in (0, 1), got {}", self.gamma)));
        }
        if !(0.0..=2.0).contains(&self.alpha_p) {
            return Err(Error::invalid(format!("alpha_p must lie in [0, 2], got {}", self.alpha_p)));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("bound horizon must be at least 1"));
        }
        let nonneg = [self.rho, self.alpha_r, self.span_r, self.r_max, self.span_g, self.d_u, self.lambda_max];
        if nonneg.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("bound inputs must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn terms(&self) -> Result<BoundTerms> {
        self.validate()?;
        let g = self.gamma;
        let h = self.horizon as f64;
        let geo = |k: i32| (1.0 - g.powi(k)) / (1.0 - g);
        Ok(BoundTerms {
            dynamics: self.rho * self.alpha_p * h * g * geo(self.horizon as i32 - 1) * self.span_r / 2.0,
            reward: self.rho * self.alpha_r * geo(self.horizon as i32),
            tail: self.r_max * g.powi(self.horizon as i32) / (1.0 - g),
            sampling: self.span_g * self.d_u * (h / 4.0 * self.lambda_max).sqrt(),
        })
    }
}

pub fn theorem_bound(b: &BoundInputs) -> Result<f64> {
    Ok(b.terms()?.total())
}

/// Empirical span (max - min) of discounted H-step model returns under
/// uniformly random controls from `starts`. A sample estimate of a supremum.
pub fn estimate_span_g(
    model: &dyn ApproxModel,
    starts: &[Vec<f64>],
    low: &[f64],
    high: &[f64],
    horizon: usize,
    gamma: f64,
    rollouts_per_start: usize,
    rng: &mut RngStream,
) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for x0 in starts {
        for _ in 0..rollouts_per_start {
            let mut x = x0.clone();
            let mut ret = 0.0;
            let mut disc = 1.0;
            for _ in 0..horizon {
                let u: Vec<f64> = low.iter().zip(high).map(|(l, h)| rng.uniform_range(*l, *h)).collect();
                let next = model.step(&x, &u);
                if next.iter().any(|v| !v.is_finite()) {
                    break;
                }
                ret += disc * model.transition_reward(&x, &u, &next);
                disc *= gamma;
                x = next;
            }
            lo = lo.min(ret);
            hi = hi.max(ret);
        }
    }
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}
