//! Parallel hybrid network: a classical MLP branch and a soft-unitary
//! branch read the same features, and their Q-vectors are added.
//!
//! The quantum branch evaluates `U_2 E(s) U_1 |000>` with feature `j` on
//! qubit `j mod 3`, reads the unnormalized `<Z_q>` of every qubit, and maps
//! those three numbers to two Q-values with an affine layer.

use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::mlp::{MlpNetwork, MlpTrace};
use crate::circuit::z_expectation;
use crate::encoding::EncodingSpec;
use crate::error::{invalid, Error, Result};
use crate::linalg::{ComplexMatrix, ZERO};
use crate::rng;
use crate::softu::{matrices_to_real, state_grad_for_z, ForwardTrace, Regularizer, SoftUnitaryModel};

pub const PHN_QUBITS: usize = 3;
pub const PHN_BLOCKS: usize = 2;
pub const N_ACTIONS: usize = 2;
/// Relative tolerance on classical weight count against the baseline MLP.
pub const WEIGHT_PARITY_TOL: f64 = 0.10;

/// Baseline MLP layer sizes.
pub const MLP_SIZES: [usize; 4] = [4, 32, 32, 2];
/// Classical branch layer sizes: one hidden layer wide enough that the
/// branch carries as many weights as [`MLP_SIZES`] (1283 vs 1282).
pub const PHN_CLASSICAL_SIZES: [usize; 3] = [4, 183, 2];

/// Scales that bring the four cartpole features to comparable angles:
/// the track and pole limits map to about `pi / 2`.
pub const PHN_FEATURE_SCALES: [f64; 4] = [0.65, 0.5, 7.5, 0.5];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhnNetwork {
    pub classical: MlpNetwork,
    pub quantum: SoftUnitaryModel,
    /// `N_ACTIONS x PHN_QUBITS`, row-major.
    pub readout_w: Vec<f64>,
    pub readout_b: Vec<f64>,
}

pub struct PhnTrace {
    classical: MlpTrace,
    quantum: ForwardTrace,
    z: [f64; PHN_QUBITS],
    q: [f64; N_ACTIONS],
}

impl PhnTrace {
    pub fn q_values(&self) -> [f64; N_ACTIONS] {
        self.q
    }
}

pub fn phn_encoder() -> EncodingSpec {
    EncodingSpec::cyclic(PHN_QUBITS, PHN_FEATURE_SCALES.to_vec()).expect("valid constants")
}

pub fn classical_weight_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// `|phn - mlp| / mlp` for the classical layer sizes.
pub fn weight_parity(phn_sizes: &[usize], mlp_sizes: &[usize]) -> f64 {
    let a = classical_weight_count(phn_sizes) as f64;
    let b = classical_weight_count(mlp_sizes) as f64;
    (a - b).abs() / b
}

impl PhnNetwork {
    pub fn new(classical: MlpNetwork, quantum: SoftUnitaryModel, readout_w: Vec<f64>, readout_b: Vec<f64>) -> Result<Self> {
        let net = Self { classical, quantum, readout_w, readout_b };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classical.n_inputs() != 4 || self.classical.n_outputs() != N_ACTIONS {
            return Err(invalid(format!("classical branch must map 4 -> {N_ACTIONS}")));
        }
        let parity = weight_parity(self.classical.sizes(), &MLP_SIZES);
        if parity > WEIGHT_PARITY_TOL {
            return Err(invalid(format!(
                "classical branch has {} weights, {:.1}% away from the baseline's {}",
                self.classical.n_params(),
                100.0 * parity,
                classical_weight_count(&MLP_SIZES)
            )));
        }
        if self.quantum.n_qubits() != PHN_QUBITS {
            return Err(Error::DimensionMismatch { expected: PHN_QUBITS, found: self.quantum.n_qubits() });
        }
        if self.readout_w.len() != N_ACTIONS * PHN_QUBITS {
            return Err(Error::DimensionMismatch { expected: N_ACTIONS * PHN_QUBITS, found: self.readout_w.len() });
        }
        if self.readout_b.len() != N_ACTIONS {
            return Err(Error::DimensionMismatch { expected: N_ACTIONS, found: self.readout_b.len() });
        }
        Ok(())
    }

    /// Glorot classical branch and readout, Haar-random quantum blocks.
    pub fn random(seed: u64) -> Result<Self> {
        let classical = MlpNetwork::random(&PHN_CLASSICAL_SIZES, rng::derive_seed(seed, 0))?;
        let quantum = SoftUnitaryModel::random(PHN_QUBITS, PHN_BLOCKS, phn_encoder(), rng::derive_seed(seed, 1))?;
        let mut r = rng::seeded(rng::derive_seed(seed, 2));
        let limit = (6.0 / (PHN_QUBITS + N_ACTIONS) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        let readout_w = (0..N_ACTIONS * PHN_QUBITS).map(|_| dist.sample(&mut r)).collect();
        Self::new(classical, quantum, readout_w, vec![0.0; N_ACTIONS])
    }

    pub fn n_params(&self) -> usize {
        self.classical.n_params() + self.readout_w.len() + self.readout_b.len() + self.quantum.n_real_params()
    }

    /// Classical branch, readout weights, readout biases, then the quantum
    /// blocks as `(re, im)` pairs.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.classical.params();
        p.extend_from_slice(&self.readout_w);
        p.extend_from_slice(&self.readout_b);
        p.extend(self.quantum.params_real());
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::DimensionMismatch { expected: self.n_params(), found: params.len() });
        }
        let (c, rest) = params.split_at(self.classical.n_params());
        self.classical.set_params(c)?;
        let (w, rest) = rest.split_at(self.readout_w.len());
        self.readout_w.copy_from_slice(w);
        let (b, rest) = rest.split_at(self.readout_b.len());
        self.readout_b.copy_from_slice(b);
        self.quantum.set_params_real(rest)
    }

    fn quantum_offset(&self) -> usize {
        self.classical.n_params() + self.readout_w.len() + self.readout_b.len()
    }

    pub fn trace(&self, features: &[f64; 4]) -> Result<PhnTrace> {
        let classical = self.classical.trace(features)?;
        let quantum = self.quantum.trace(features)?;
        let mut z = [0.0; PHN_QUBITS];
        for (q, zq) in z.iter_mut().enumerate() {
            *zq = z_expectation(quantum.output(), PHN_QUBITS, q);
        }
        let mut q = [0.0; N_ACTIONS];
        for (a, qa) in q.iter_mut().enumerate() {
            let w = &self.readout_w[a * PHN_QUBITS..(a + 1) * PHN_QUBITS];
            *qa = classical.output()[a] + self.readout_b[a] + w.iter().zip(&z).map(|(wi, zi)| wi * zi).sum::<f64>();
        }
        Ok(PhnTrace { classical, quantum, z, q })
    }

    pub fn forward(&self, features: &[f64; 4]) -> Result<[f64; N_ACTIONS]> {
        Ok(self.trace(features)?.q)
    }

    /// Adds the gradient of `upstream . Q` into `grads` (laid out as
    /// [`Self::params`]).
    pub fn backward(&self, trace: &PhnTrace, upstream: &[f64; N_ACTIONS], grads: &mut [f64]) {
        let nc = self.classical.n_params();
        self.classical.backward(&trace.classical, upstream, &mut grads[..nc]);
        let mut dz = [0.0; PHN_QUBITS];
        for (a, &u) in upstream.iter().enumerate() {
            for q in 0..PHN_QUBITS {
                grads[nc + a * PHN_QUBITS + q] += u * trace.z[q];
                dz[q] += u * self.readout_w[a * PHN_QUBITS + q];
            }
            grads[nc + self.readout_w.len() + a] += u;
        }
        if dz.iter().all(|d| *d == 0.0) {
            return;
        }
        let mut g_state = vec![ZERO; self.quantum.dim()];
        for (q, &d) in dz.iter().enumerate() {
            state_grad_for_z(trace.quantum.output(), PHN_QUBITS, q, d, &mut g_state);
        }
        let mut block_grads = self.quantum.zero_grads();
        self.quantum.backward(&trace.quantum, &g_state, &mut block_grads);
        self.add_quantum_grads(&block_grads, grads);
    }

    /// Adds `reg`'s gradient with respect to the quantum blocks into `grads`.
    pub fn penalty_gradient(&self, reg: Regularizer, grads: &mut [f64]) {
        let mut block_grads = self.quantum.zero_grads();
        reg.accumulate_gradient(self.quantum.blocks(), &mut block_grads);
        self.add_quantum_grads(&block_grads, grads);
    }

    fn add_quantum_grads(&self, block_grads: &[ComplexMatrix], grads: &mut [f64]) {
        let off = self.quantum_offset();
        for (g, v) in grads[off..].iter_mut().zip(matrices_to_real(block_grads)) {
            *g += v;
        }
    }

    pub fn unitarity_deviation(&self) -> f64 {
        self.quantum.max_unitarity_deviation()
    }
}
