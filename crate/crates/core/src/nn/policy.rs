use std::f64::consts::LN_2;

use super::{Mlp, ObsNormalizer, Trace};
use crate::error::{check_dim, Error, Result};
use crate::rng::RngStream;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

pub(crate) const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Diagonal Gaussian policy squashed through `tanh` into `(-1, 1)^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub mean: Mlp,
    /// State-independent log standard deviation, clamped on use.
    pub log_std: Vec<f64>,
    pub norm: ObsNormalizer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    /// Pre-squash Gaussian draw.
    pub raw: Vec<f64>,
    /// `tanh(raw)`.
    pub action: Vec<f64>,
    pub log_prob: f64,
}

/// `ln(1 - tanh(z)^2)` without cancellation for large `|z|`.
pub(crate) fn log_one_minus_tanh_sq(z: f64) -> f64 {
    2.0 * (LN_2 - z - softplus(-2.0 * z))
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

impl PolicyNet {
    /// 2x64 tanh trunk with orthogonal init: gain sqrt(2) on hidden layers, 0.01 on the mean head.
    pub fn new(norm: ObsNormalizer, action_dim: usize, hidden: &[usize], rng: &mut RngStream) -> Self {
        let mut sizes = vec![norm.dim()];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        let mut gains = vec![2f64.sqrt(); hidden.len()];
        gains.push(0.01);
        Self { mean: Mlp::orthogonal(&sizes, &gains, rng), log_std: vec![0.0; action_dim], norm }
    }

    pub fn obs_dim(&self) -> usize {
        self.mean.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn clamped_log_std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect()
    }

    pub fn mean_raw(&self, s: &[f64]) -> Result<Vec<f64>> {
        check_dim("policy observation", self.obs_dim(), s.len())?;
        self.mean.forward(&self.norm.apply(s))
    }

    pub fn mean_trace(&self, s: &[f64]) -> Result<Trace> {
        check_dim("policy observation", self.obs_dim(), s.len())?;
        self.mean.forward_trace(&self.norm.apply(s))
    }

    /// Deterministic action `tanh(mean)`.
    pub fn mean_action(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok(self.mean_raw(s)?.into_iter().map(f64::tanh).collect())
    }

    pub fn sample(&self, s: &[f64], rng: &mut RngStream) -> Result<PolicySample> {
        let mu = self.mean_raw(s)?;
        let ls = self.clamped_log_std();
        let raw: Vec<f64> = mu.iter().zip(&ls).map(|(m, l)| m + l.exp() * rng.normal()).collect();
        let log_prob = raw_log_prob(&mu, &ls, &raw);
        let action = raw.iter().map(|z| z.tanh()).collect();
        Ok(PolicySample { raw, action, log_prob })
    }

    /// Log-density of a pre-squash sample, including the `tanh` change of variables.
    pub fn log_prob_raw(&self, s: &[f64], raw: &[f64]) -> Result<f64> {
        check_dim("policy action", self.action_dim(), raw.len())?;
        let mu = self.mean_raw(s)?;
        Ok(raw_log_prob(&mu, &self.clamped_log_std(), raw))
    }

    /// Log-density of a squashed action; `a` must lie in the open box.
    pub fn log_prob(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        check_dim("policy action", self.action_dim(), a.len())?;
        if a.iter().any(|x| !(x.abs() < 1.0)) {
            return Err(Error::invalid("action outside the open box (-1, 1)"));
        }
        let raw: Vec<f64> = a.iter().map(|x| x.atanh()).collect();
        self.log_prob_raw(s, &raw)
    }

    /// Entropy of the pre-squash Gaussian; state independent.
    pub fn entropy(&self) -> f64 {
        self.clamped_log_std().iter().map(|l| 0.5 + HALF_LN_2PI + l).sum()
    }
}

pub(crate) fn raw_log_prob(mu: &[f64], log_std: &[f64], raw: &[f64]) -> f64 {
    mu.iter()
        .zip(log_std)
        .zip(raw)
        .map(|((m, l), z)| {
            let u = (z - m) / l.exp();
            -0.5 * u * u - l - HALF_LN_2PI - log_one_minus_tanh_sq(*z)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamId;
    use std::f64::consts::PI;

    fn policy(obs: usize, act: usize) -> PolicyNet {
        let mut rng = RngStream::new(11, StreamId::Init);
        let mut p = PolicyNet::new(ObsNormalizer::identity(obs), act, &[16, 16], &mut rng);
        // make the mean head non-trivial
        for (i, w) in p.mean.params_mut().iter_mut().enumerate() {
            *w += 0.05 * ((i as f64) * 0.37).sin();
        }
        p
    }

    #[test]
    fn half_ln_2pi() {
        assert!((HALF_LN_2PI - 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn same_seed_same_sample() {
        let p = policy(4, 2);
        let s = [0.1, -0.3, 0.7, 0.0];
        let a = p.sample(&s, &mut RngStream::new(5, StreamId::Policy)).unwrap();
        let b = p.sample(&s, &mut RngStream::new(5, StreamId::Policy)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_std_gives_squashed_mean() {
        let mut p = policy(4, 2);
        p.log_std = vec![-50.0; 2]; // clamped to -5
        let s = [0.4, 0.1, -0.2, 0.3];
        let mean = p.mean_action(&s).unwrap();
        let smp = p.sample(&s, &mut RngStream::new(1, StreamId::Policy)).unwrap();
        for (a, m) in smp.action.iter().zip(&mean) {
            assert!((a - m).abs() < 0.05, "{a} vs {m}");
        }
    }

    #[test]
    fn log_prob_consistency() {
        let p = policy(4, 3);
        let s = [0.4, 0.1, -0.2, 0.3];
        let mut rng = RngStream::new(9, StreamId::Policy);
        for _ in 0..50 {
            let smp = p.sample(&s, &mut rng).unwrap();
            assert_eq!(p.log_prob_raw(&s, &smp.raw).unwrap(), smp.log_prob);
            let via_squashed = p.log_prob(&s, &smp.action).unwrap();
            assert!((via_squashed - smp.log_prob).abs() < 1e-6);
        }
    }

    #[test]
    fn squashed_action_outside_open_box_is_an_error() {
        let p = policy(2, 1);
        assert!(p.log_prob(&[0.0, 0.0], &[1.0]).is_err());
        assert!(p.log_prob(&[0.0, 0.0], &[-1.5]).is_err());
    }

    #[test]
    fn entropy_closed_form() {
        let mut p = policy(2, 1);
        p.log_std = vec![-0.7];
        let expected = 0.5 * (2.0 * PI * std::f64::consts::E).ln() - 0.7;
        assert!((p.entropy() - expected).abs() < 1e-14);
    }

    #[test]
    fn squashed_density_normalises() {
        // midpoint rule on atanh-substituted grid: integrate p(a) da over (-1, 1)
        let mut p = policy(2, 1);
        p.log_std = vec![0.3];
        let s = [0.5, -0.5];
        let n = 200_000;
        let (lo, hi) = (-12.0f64, 12.0f64);
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            let z = lo + (i as f64 + 0.5) * h;
            let a = z.tanh();
            let da = (1.0 - a * a) * h;
            if a.abs() < 1.0 {
                total += p.log_prob(&s, &[a]).unwrap().exp() * da;
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn monte_carlo_mean_matches_head() {
        let p = policy(3, 2);
        let s = [0.2, 0.9, -0.4];
        let mu = p.mean_raw(&s).unwrap();
        let sd: Vec<f64> = p.clamped_log_std().iter().map(|l| l.exp()).collect();
        let n = 100_000;
        let mut rng = RngStream::new(42, StreamId::Policy);
        let mut acc = vec![0.0; 2];
        for _ in 0..n {
            let smp = p.sample(&s, &mut rng).unwrap();
            acc.iter_mut().zip(&smp.raw).for_each(|(a, z)| *a += z);
        }
        for j in 0..2 {
            let m = acc[j] / n as f64;
            assert!((m - mu[j]).abs() < 3.0 * sd[j] / (n as f64).sqrt());
        }
    }
}
