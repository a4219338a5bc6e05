//! Dense network with tanh hidden layers and a linear output layer.

use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpNetwork {
    sizes: Vec<usize>,
    /// Layer `l` is `sizes[l + 1] x sizes[l]`, row-major.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Activations of every layer, input first.
#[derive(Clone, Debug)]
pub struct MlpTrace {
    activations: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("at least input and output")
    }
}

impl MlpNetwork {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(invalid(format!("layer sizes {sizes:?} need at least two positive entries")));
        }
        let weights = sizes.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = sizes[1..].iter().map(|&s| vec![0.0; s]).collect();
        Ok(Self { sizes: sizes.to_vec(), weights, biases })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random(sizes: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let mut rng = rng::seeded(seed);
        for (l, w) in net.weights.iter_mut().enumerate() {
            let limit = (6.0 / (sizes[l] + sizes[l + 1]) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
            w.iter_mut().for_each(|x| *x = dist.sample(&mut rng));
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.sizes.last().expect("validated")
    }

    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Weights then biases, layer by layer.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::DimensionMismatch { expected: self.n_params(), found: params.len() });
        }
        let mut rest = params;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let (head, tail) = rest.split_at(w.len());
            w.copy_from_slice(head);
            let (head, tail) = tail.split_at(b.len());
            b.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    pub fn trace(&self, input: &[f64]) -> Result<MlpTrace> {
        if input.len() != self.n_inputs() {
            return Err(Error::DimensionMismatch { expected: self.n_inputs(), found: input.len() });
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(invalid("network input must be finite"));
        }
        let last = self.weights.len() - 1;
        let mut activations = vec![input.to_vec()];
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let a = activations.last().expect("nonempty");
            let n_in = a.len();
            let z = b
                .iter()
                .enumerate()
                .map(|(o, bias)| {
                    let s = bias + w[o * n_in..(o + 1) * n_in].iter().zip(a).map(|(wi, ai)| wi * ai).sum::<f64>();
                    if l == last {
                        s
                    } else {
                        s.tanh()
                    }
                })
                .collect();
            activations.push(z);
        }
        Ok(MlpTrace { activations })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(input)?.activations.pop().expect("nonempty"))
    }

    /// Adds the parameter gradient for output gradient `upstream` into
    /// `grads` (laid out as [`Self::params`]).
    pub fn backward(&self, trace: &MlpTrace, upstream: &[f64], grads: &mut [f64]) {
        let last = self.weights.len() - 1;
        let mut offsets = Vec::with_capacity(self.weights.len());
        let mut off = 0;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            offsets.push(off);
            off += w.len() + b.len();
        }
        let mut delta = upstream.to_vec();
        for l in (0..=last).rev() {
            let out = &trace.activations[l + 1];
            if l != last {
                for (d, a) in delta.iter_mut().zip(out) {
                    *d *= 1.0 - a * a;
                }
            }
            let input = &trace.activations[l];
            let n_in = input.len();
            let w = &self.weights[l];
            let (gw, gb) = grads[offsets[l]..offsets[l] + w.len() + delta.len()].split_at_mut(w.len());
            for (o, d) in delta.iter().enumerate() {
                gb[o] += d;
                for (g, a) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l > 0 {
                let mut prev = vec![0.0; n_in];
                for (o, d) in delta.iter().enumerate() {
                    for (p, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *p += d * wi;
                    }
                }
                delta = prev;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn parameter_counts() {
        assert_eq!(MlpNetwork::zeros(&[4, 32, 32, 2]).unwrap().n_params(), 1282);
        assert_eq!(MlpNetwork::zeros(&[4, 2, 2]).unwrap().n_params(), 16);
        assert!(MlpNetwork::zeros(&[4]).is_err());
        assert!(MlpNetwork::zeros(&[4, 0, 2]).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = MlpNetwork::zeros(&[4, 8, 2]).unwrap();
        assert_eq!(net.forward(&[0.3, -1.0, 2.0, 0.1]).unwrap(), [0.0, 0.0]);
        assert!(net.forward(&[f64::NAN, 0.0, 0.0, 0.0]).is_err());
        assert!(net.forward(&[0.0; 3]).is_err());
    }

    #[test]
    fn forward_matches_hand_computation() {
        let mut net = MlpNetwork::zeros(&[2, 2, 1]).unwrap();
        net.set_params(&[0.5, -1.0, 0.25, 2.0, 0.1, -0.2, 1.5, -0.5, 0.3]).unwrap();
        let x = [0.4, 0.7];
        let h0 = (0.5 * 0.4 - 0.7 + 0.1f64).tanh();
        let h1 = (0.25 * 0.4 + 2.0 * 0.7 - 0.2f64).tanh();
        let y = 1.5 * h0 - 0.5 * h1 + 0.3;
        assert!((net.forward(&x).unwrap()[0] - y).abs() < 1e-15);
    }

    #[test]
    fn params_round_trip() {
        let net = MlpNetwork::random(&[4, 5, 3, 2], 2).unwrap();
        let mut other = MlpNetwork::zeros(&[4, 5, 3, 2]).unwrap();
        other.set_params(&net.params()).unwrap();
        assert_eq!(other, net);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let net = MlpNetwork::random(&[4, 2, 2], 9).unwrap();
        let mut rng = rng::seeded(5);
        let h = 1e-6;
        for case in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let up = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let j = case % net.n_params();
            let mut grads = vec![0.0; net.n_params()];
            net.backward(&net.trace(&x).unwrap(), &up, &mut grads);
            let f = |p: &[f64]| {
                let mut n = net.clone();
                n.set_params(p).unwrap();
                let o = n.forward(&x).unwrap();
                o[0] * up[0] + o[1] * up[1]
            };
            let mut p = net.params();
            p[j] += h;
            let fp = f(&p);
            p[j] -= 2.0 * h;
            let fd = (fp - f(&p)) / (2.0 * h);
            assert!((grads[j] - fd).abs() <= 1e-6f64.max(1e-4 * fd.abs()), "{j}: {} vs {fd}", grads[j]);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let net = MlpNetwork::random(&[4, 6, 2], 1).unwrap();
        let mut grads = vec![0.0; net.n_params()];
        net.backward(&net.trace(&[0.1, 0.2, 0.3, 0.4]).unwrap(), &[0.0, 0.0], &mut grads);
        assert!(grads.iter().all(|g| *g == 0.0));
    }
}
