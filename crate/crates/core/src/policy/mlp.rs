//! Small dense feed-forward network with ReLU hidden layers and a linear
//! output layer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected layer, weights stored row-major as `out x in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let a = (6.0 / (n_in + n_out) as f64).sqrt();
        let weights = (0..n_in * n_out).map(|_| rng.random_range(-a..a)).collect();
        Dense {
            n_in,
            n_out,
            weights,
            biases: vec![0.0; n_out],
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.n_in).zip(&self.biases) {
            out.push(b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Post-activation values of every layer, input first.
#[derive(Clone, Debug, Default)]
pub struct Activations {
    pub values: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.values.last().map_or(&[], Vec::as_slice)
    }
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::DimensionMismatch(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes.windows(2).map(|w| Dense::glorot(w[0], w[1], rng)).collect();
        Ok(Mlp { layers })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers.first().map_or(0, |l| l.n_in)];
        sizes.extend(self.layers.iter().map(|l| l.n_out));
        sizes
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_out)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    pub fn check(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::DimensionMismatch("network has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.n_in * l.n_out || l.biases.len() != l.n_out {
                return Err(Error::DimensionMismatch(format!("layer {i} arrays do not match {}x{}", l.n_out, l.n_in)));
            }
            if i > 0 && self.layers[i - 1].n_out != l.n_in {
                return Err(Error::DimensionMismatch(format!("layer {i} expects {} inputs", l.n_in)));
            }
            if l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(())
    }

    /// Flat parameters: for each layer, weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.biases);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::DimensionMismatch(format!(
                "parameter vector has {} entries, network has {}",
                p.len(),
                self.n_params()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&p[off..off + nw]);
            off += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&p[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Activations> {
        if x.len() != self.n_inputs() {
            return Err(Error::DimensionMismatch(format!(
                "network expects {} inputs, got {}",
                self.n_inputs(),
                x.len()
            )));
        }
        let last = self.layers.len() - 1;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.n_out);
            layer.apply(&values[i], &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteActivation(i));
            }
            values.push(out);
        }
        Ok(Activations { values })
    }

    /// Gradient of `dout . output` with respect to the flat parameters.
    pub fn backward(&self, acts: &Activations, dout: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.n_params()];
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.n_params();
        }
        let mut delta = dout.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &acts.values[i];
            let base = offsets[i];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    let row = &mut grad[base + o * layer.n_in..base + (o + 1) * layer.n_in];
                    row.iter_mut().zip(input).for_each(|(g, x)| *g = d * x);
                }
                grad[base + layer.weights.len() + o] = d;
            }
            if i > 0 {
                let mut prev = vec![0.0; layer.n_in];
                for (row, &d) in layer.weights.chunks_exact(layer.n_in).zip(&delta) {
                    if d != 0.0 {
                        prev.iter_mut().zip(row).for_each(|(p, w)| *p += w * d);
                    }
                }
                // ReLU gate of the layer below.
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut m = Mlp::new(&[4, 6, 5, 3], &mut rng).unwrap();
        // Nonzero biases keep most ReLUs active at the test point.
        let mut p = m.params();
        let nw0 = 24;
        p[nw0..nw0 + 6].iter_mut().for_each(|b| *b = 0.3);
        m.set_params(&p).unwrap();
        m
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = Dense::glorot(92, 48, &mut rng);
        let a = (6.0f64 / 140.0).sqrt();
        assert!(l.weights.iter().all(|w| w.abs() <= a));
        assert!(l.biases.iter().all(|&b| b == 0.0));
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn forward_matches_manual_matrix_product() {
        let m = net();
        let x = [0.5, -1.0, 0.25, 2.0];
        let out = m.forward(&x).unwrap();
        let mut h = x.to_vec();
        for (i, l) in m.layers.iter().enumerate() {
            let mut next = vec![0.0; l.n_out];
            for o in 0..l.n_out {
                next[o] = l.biases[o];
                for k in 0..l.n_in {
                    next[o] += l.weights[o * l.n_in + k] * h[k];
                }
                if i + 1 < m.layers.len() {
                    next[o] = next[o].max(0.0);
                }
            }
            h = next;
        }
        for (a, b) in out.output().iter().zip(&h) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let m = net();
        let x = [0.5, -1.0, 0.25, 2.0];
        let w = [0.7, -1.3, 0.4];
        let f = |m: &Mlp| -> f64 { m.forward(&x).unwrap().output().iter().zip(&w).map(|(a, b)| a * b).sum() };
        let g = m.backward(&m.forward(&x).unwrap(), &w);
        let p0 = m.params();
        for j in 0..p0.len() {
            let mut mp = m.clone();
            let mut p = p0.clone();
            p[j] += 1e-6;
            mp.set_params(&p).unwrap();
            let up = f(&mp);
            p[j] -= 2e-6;
            mp.set_params(&p).unwrap();
            let dn = f(&mp);
            let fd = (up - dn) / 2e-6;
            assert!((fd - g[j]).abs() < 1e-7 * fd.abs().max(1.0), "param {j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn dimension_errors() {
        let m = net();
        assert!(matches!(m.forward(&[1.0]), Err(Error::DimensionMismatch(_))));
        let mut m2 = m.clone();
        assert!(m2.set_params(&[0.0; 3]).is_err());
        m2.layers[1].n_in = 7;
        assert!(m2.check().is_err());
    }

    #[test]
    fn params_round_trip() {
        let mut m = net();
        let p: Vec<f64> = (0..m.n_params()).map(|i| i as f64 * 0.01).collect();
        m.set_params(&p).unwrap();
        assert_eq!(m.params(), p);
        assert_eq!(m.layer_sizes(), vec![4, 6, 5, 3]);
    }
}
