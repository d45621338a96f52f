//! Welch's unequal-variance t-test.

use super::special::student_t_sf;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    /// `(mean_a - mean_b) / se`; `a` is the baseline.
    pub t: f64,
    /// Welch-Satterthwaite degrees of freedom.
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
}

fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid(format!(
            "welch test needs at least 2 samples per group, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("welch sample"));
    }
    let (ma, va) = moments(a);
    let (mb, vb) = moments(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (qa, qb) = (va / na, vb / nb);
    let se2 = qa + qb;
    let diff = ma - mb;
    if se2 == 0.0 {
        let df = na + nb - 2.0;
        return Ok(if diff == 0.0 {
            WelchResult { t: 0.0, df, p: 1.0 }
        } else {
            WelchResult { t: diff.signum() * f64::INFINITY, df, p: 0.0 }
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    Ok(WelchResult { t, df, p: student_t_sf(t, df) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Two-sided tail by direct quadrature of the Student-t density, with the
    /// normalising constant itself obtained numerically.
    fn quadrature_p(t: f64, df: f64) -> f64 {
        let g = |x: f64| (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
        // integrate over [0, inf) with x = u / (1 - u)
        let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize| {
            let h = (b - a) / n as f64;
            let mut s = f(a) + f(b);
            for i in 1..n {
                s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        let mapped = |u: f64| {
            if u >= 1.0 {
                0.0
            } else {
                let x = u / (1.0 - u);
                g(x) / ((1.0 - u) * (1.0 - u))
            }
        };
        let half = simpson(&mapped, 0.0, 1.0, 400_000);
        let inner = simpson(&g, 0.0, t.abs(), 400_000);
        1.0 - inner / half
    }

    #[test]
    fn identical_samples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let r = welch_t(&a, &a).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
        let c = [2.0; 4];
        assert_eq!(welch_t(&c, &c).unwrap().p, 1.0);
    }

    #[test]
    fn separated_groups() {
        let a = [0.0, 1e-3, -1e-3, 0.0];
        let b = [1.0, 1.0 + 1e-3, 1.0 - 1e-3, 1.0];
        let r = welch_t(&a, &b).unwrap();
        assert!(r.t < -100.0 && r.p < 1e-3);
    }

    #[test]
    fn matches_quadrature_oracle() {
        let a = [12.1, 9.8, 11.4, 10.9, 13.2, 10.1, 9.5, 12.7, 11.0, 10.4];
        let b = [9.9, 8.7, 10.3, 9.1, 8.2, 10.8, 9.4, 8.9, 9.7, 10.0];
        let r = welch_t(&a, &b).unwrap();
        let want = quadrature_p(r.t, r.df);
        assert!((r.p - want).abs() < 1e-6, "{} vs {want}", r.p);
        assert!(r.p > 1e-4 && r.p < 0.05);
    }

    #[test]
    fn too_few_samples() {
        assert!(welch_t(&[1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn antisymmetric_and_affine_invariant(
            a in proptest::collection::vec(-50.0f64..50.0, 2..12),
            b in proptest::collection::vec(-50.0f64..50.0, 2..12),
            shift in -100.0f64..100.0,
            scale in 0.1f64..10.0,
        ) {
            let r = welch_t(&a, &b).unwrap();
            let s = welch_t(&b, &a).unwrap();
            prop_assume!(r.t.is_finite());
            prop_assert!((r.t + s.t).abs() < 1e-9 * r.t.abs().max(1.0));
            prop_assert!((r.p - s.p).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&r.p));
            let at: Vec<f64> = a.iter().map(|v| scale * v + shift).collect();
            let bt: Vec<f64> = b.iter().map(|v| scale * v + shift).collect();
            let q = welch_t(&at, &bt).unwrap();
            prop_assert!((q.p - r.p).abs() < 1e-8);
        }
    }
}
