use crate::error::{check_dim, Result};
use crate::rng::RngStream;

/// Fully connected network: tanh on hidden layers, identity on the output.
///
/// Parameters live in one flat vector, layer by layer, each layer stored as a
/// row-major `(n_out, n_in)` weight block followed by `n_out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Post-activation outputs of every layer, input included.
#[derive(Debug, Clone)]
pub struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace has input")
    }
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let n = Self::count(sizes);
        Self { sizes: sizes.to_vec(), params: vec![0.0; n] }
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        check_dim("mlp parameters", Self::count(sizes), params.len())?;
        Ok(Self { sizes: sizes.to_vec(), params })
    }

    /// Orthogonal initialisation with one gain per layer and zero biases.
    pub fn orthogonal(sizes: &[usize], gains: &[f64], rng: &mut RngStream) -> Self {
        assert_eq!(gains.len(), sizes.len() - 1);
        let mut net = Self::zeros(sizes);
        for l in 0..sizes.len() - 1 {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let w = orthogonal_matrix(n_out, n_in, rng);
            let off = net.layer_offset(l);
            for (dst, src) in net.params[off..off + n_in * n_out].iter_mut().zip(&w) {
                *dst = gains[l] * src;
            }
        }
        net
    }

    fn count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    fn layer_offset(&self, layer: usize) -> usize {
        Self::count(&self.sizes[..=layer])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("mlp input", self.input_dim(), x.len())?;
        let mut cur = x.to_vec();
        for l in 0..self.n_layers() {
            cur = self.layer(l, &cur);
        }
        Ok(cur)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        check_dim("mlp input", self.input_dim(), x.len())?;
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        for l in 0..self.n_layers() {
            let next = self.layer(l, acts.last().unwrap());
            acts.push(next);
        }
        Ok(Trace { acts })
    }

    fn layer(&self, l: usize, x: &[f64]) -> Vec<f64> {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.layer_offset(l);
        let w = &self.params[off..off + n_in * n_out];
        let b = &self.params[off + n_in * n_out..off + (n_in + 1) * n_out];
        let hidden = l + 1 < self.n_layers();
        (0..n_out)
            .map(|o| {
                let row = &w[o * n_in..(o + 1) * n_in];
                let z = b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                if hidden {
                    z.tanh()
                } else {
                    z
                }
            })
            .collect()
    }

    /// Accumulates `d loss / d params` into `grads` and returns `d loss / d input`.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], grads: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grads.len(), self.params.len());
        debug_assert_eq!(grad_out.len(), self.output_dim());
        let mut delta = grad_out.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < self.n_layers() {
                for (d, y) in delta.iter_mut().zip(&trace.acts[l + 1]) {
                    *d *= 1.0 - y * y;
                }
            }
            let off = self.layer_offset(l);
            let x = &trace.acts[l];
            let w = &self.params[off..off + n_in * n_out];
            let (gw, gb) = grads[off..off + (n_in + 1) * n_out].split_at_mut(n_in * n_out);
            let mut dx = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let grow = &mut gw[o * n_in..(o + 1) * n_in];
                let wrow = &w[o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    grow[i] += d * x[i];
                    dx[i] += d * wrow[i];
                }
            }
            delta = dx;
        }
        delta
    }
}

/// `rows x cols` matrix with orthonormal rows (or columns, whichever is fewer).
fn orthogonal_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> Vec<f64> {
    let (long, short) = (rows.max(cols), rows.min(cols));
    // `short` vectors of length `long`, Gram-Schmidt orthonormalised.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| rng.normal()).collect();
        for _ in 0..2 {
            for q in &basis {
                let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = if rows <= cols { basis[r][c] } else { basis[c][r] };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamId;

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(&[3, 5, 2]);
        assert_eq!(net.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn param_count_formula() {
        let net = Mlp::zeros(&[9, 64, 64, 2]);
        assert_eq!(net.param_count(), 10 * 64 + 65 * 64 + 65 * 2);
    }

    #[test]
    fn identity_layers() {
        // single output layer: identity activation
        let mut p = vec![0.0; 3 * 3 + 3];
        for i in 0..3 {
            p[i * 3 + i] = 1.0;
        }
        let out_layer = Mlp::from_params(&[3, 3], p.clone()).unwrap();
        let x = [0.3, -1.2, 2.0];
        assert_eq!(out_layer.forward(&x).unwrap(), x.to_vec());

        // identity hidden layer followed by identity output: tanh(x)
        let mut p2 = p.clone();
        p2.extend_from_slice(&p);
        let two = Mlp::from_params(&[3, 3, 3], p2).unwrap();
        let y = two.forward(&x).unwrap();
        for (a, b) in y.iter().zip(&x) {
            assert_eq!(*a, b.tanh());
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = Mlp::zeros(&[3, 2]);
        assert!(net.forward(&[1.0]).is_err());
    }

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let mut rng = RngStream::new(3, StreamId::Init);
        let net = Mlp::orthogonal(&[8, 4], &[1.0], &mut rng);
        let w = &net.params()[..32];
        for a in 0..4 {
            for b in 0..4 {
                let dot: f64 = (0..8).map(|i| w[a * 8 + i] * w[b * 8 + i]).sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-12);
            }
        }
    }
}
