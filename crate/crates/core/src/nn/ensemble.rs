use super::{Mlp, ObsNormalizer};
use crate::error::{check_dim, Error, Result};
use crate::rng::RngStream;

/// `D` independent value heads sharing one input normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueEnsemble {
    pub heads: Vec<Mlp>,
    pub norm: ObsNormalizer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub mean: Vec<f64>,
    /// Population variance across heads (divisor `D`).
    pub var: Vec<f64>,
    /// Batch mean of `var`.
    pub sigma2_bar: f64,
}

/// Mean and population variance of one sample's head values.
pub fn per_sample_stats(values: &[f64]) -> (f64, f64) {
    let d = values.len() as f64;
    let mean = values.iter().sum::<f64>() / d;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    (mean, var)
}

impl ValueEnsemble {
    /// Heads differ only by their initialisation sub-stream.
    pub fn new(norm: ObsNormalizer, heads: usize, hidden: &[usize], seed: u64) -> Self {
        let mut sizes = vec![norm.dim()];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut gains = vec![2f64.sqrt(); hidden.len()];
        gains.push(1.0);
        let heads = (0..heads)
            .map(|d| {
                let mut rng = RngStream::with_raw_stream(seed, 1000 + d as u64);
                Mlp::orthogonal(&sizes, &gains, &mut rng)
            })
            .collect();
        Self { heads, norm }
    }

    pub fn size(&self) -> usize {
        self.heads.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.norm.dim()
    }

    pub fn values(&self, s: &[f64]) -> Result<Vec<f64>> {
        check_dim("value observation", self.obs_dim(), s.len())?;
        let x = self.norm.apply(s);
        self.heads.iter().map(|h| Ok(h.forward(&x)?[0])).collect()
    }

    pub fn mean_value(&self, s: &[f64]) -> Result<f64> {
        let v = self.values(s)?;
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Per-sample ensemble mean and variance plus their batch aggregate.
    pub fn stats(&self, batch: &[Vec<f64>]) -> Result<EnsembleStats> {
        if batch.is_empty() {
            return Err(Error::EmptyBuffer("ensemble statistics batch"));
        }
        let mut mean = Vec::with_capacity(batch.len());
        let mut var = Vec::with_capacity(batch.len());
        for s in batch {
            let (m, v) = per_sample_stats(&self.values(s)?);
            mean.push(m);
            var.push(v);
        }
        let sigma2_bar = var.iter().sum::<f64>() / var.len() as f64;
        Ok(EnsembleStats { mean, var, sigma2_bar })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_heads_have_zero_variance() {
        let mut e = ValueEnsemble::new(ObsNormalizer::identity(3), 4, &[8], 1);
        let first = e.heads[0].clone();
        e.heads.iter_mut().for_each(|h| *h = first.clone());
        let st = e.stats(&[vec![0.1, 0.2, 0.3], vec![1.0, -1.0, 0.5]]).unwrap();
        assert_eq!(st.sigma2_bar, 0.0);
    }

    #[test]
    fn two_heads_hand_arithmetic() {
        assert_eq!(per_sample_stats(&[0.0, 2.0]), (1.0, 1.0));
    }

    #[test]
    fn empty_batch_is_an_error() {
        let e = ValueEnsemble::new(ObsNormalizer::identity(3), 2, &[8], 1);
        assert!(e.stats(&[]).is_err());
    }

    #[test]
    fn matches_two_pass_oracle() {
        let e = ValueEnsemble::new(ObsNormalizer::identity(3), 5, &[8, 8], 7);
        let batch: Vec<Vec<f64>> =
            (0..20).map(|i| vec![(i as f64 * 0.3).sin(), (i as f64).cos(), i as f64 * 0.1]).collect();
        let st = e.stats(&batch).unwrap();
        let mut acc = 0.0;
        for (b, s) in batch.iter().enumerate() {
            let vals: Vec<f64> = e.heads.iter().map(|h| h.forward(s).unwrap()[0]).collect();
            // first pass: mean; second pass: squared deviations
            let mut sum = 0.0;
            for v in &vals {
                sum += v;
            }
            let mu = sum / vals.len() as f64;
            let mut ss = 0.0;
            for v in &vals {
                ss += (v - mu).powi(2);
            }
            let var = ss / vals.len() as f64;
            assert!((st.var[b] - var).abs() < 1e-10);
            assert!((st.mean[b] - mu).abs() < 1e-10);
            acc += var;
        }
        assert!((st.sigma2_bar - acc / batch.len() as f64).abs() < 1e-10);
    }

    #[test]
    fn variance_is_permutation_invariant() {
        let mut e = ValueEnsemble::new(ObsNormalizer::identity(2), 5, &[8], 3);
        let s = vec![vec![0.3, -0.8]];
        let before = e.stats(&s).unwrap();
        e.heads.reverse();
        e.heads.swap(0, 2);
        let after = e.stats(&s).unwrap();
        assert!((before.sigma2_bar - after.sigma2_bar).abs() < 1e-15);
    }
}
