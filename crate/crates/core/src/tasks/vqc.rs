use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{bce_grad, bce_loss, Predictor, Sample};
use crate::circuit::{basic_entangling_layer, parameter_shift_gradient_from, Circuit, StateVector};
use crate::encoding::EncodingSpec;
use crate::error::{invalid, Error, Result};
use crate::optim::{AdamConfig, AdamState};
use crate::rng;
use crate::softu::{HistoryRow, TrainHistory};

/// Gate-based counterpart of a soft-unitary model: every variational block is
/// a stack of basic entangling layers, with the encoding block re-uploaded
/// between blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VqcBaseline {
    pub n_qubits: usize,
    pub n_blocks: usize,
    pub layers_per_block: usize,
    pub params: Vec<f64>,
    pub encoder: EncodingSpec,
    #[serde(default)]
    pub observable: usize,
}

impl VqcBaseline {
    /// Angles uniform in `[0, 2pi)`.
    pub fn random(n_qubits: usize, n_blocks: usize, layers_per_block: usize, encoder: EncodingSpec, seed: u64) -> Result<Self> {
        let mut rng = rng::seeded(seed);
        let n = n_blocks * layers_per_block * n_qubits;
        let params = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        let baseline = Self { n_qubits, n_blocks, layers_per_block, params, encoder, observable: 0 };
        baseline.validate()?;
        Ok(baseline)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 || self.layers_per_block == 0 {
            return Err(invalid("baseline needs at least one block and one layer"));
        }
        let expected = self.n_blocks * self.layers_per_block * self.n_qubits;
        if self.params.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: self.params.len() });
        }
        if self.encoder.n_qubits != self.n_qubits {
            return Err(Error::DimensionMismatch { expected: self.n_qubits, found: self.encoder.n_qubits });
        }
        if self.observable >= self.n_qubits {
            return Err(Error::QubitOutOfRange { qubit: self.observable, n_qubits: self.n_qubits });
        }
        self.encoder.validate()
    }

    pub fn reuploads(&self) -> usize {
        self.n_blocks - 1
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Full circuit for input `x`: blocks in order with the encoding between.
    pub fn circuit(&self, x: f64) -> Result<Circuit> {
        let n = self.n_qubits;
        let mut gates = Vec::new();
        for b in 0..self.n_blocks {
            if b > 0 {
                gates.extend(self.encoder.gates(&[x])?);
            }
            for l in 0..self.layers_per_block {
                let first = (b * self.layers_per_block + l) * n;
                let slots: Vec<usize> = (first..first + n).collect();
                gates.extend(basic_entangling_layer(n, &slots)?);
            }
        }
        Circuit::new(n, gates, self.params.len())
    }

    fn rescaled(z: f64) -> f64 {
        0.5 * (z + 1.0)
    }
}

impl Predictor for VqcBaseline {
    fn predict(&self, x: f64) -> Result<f64> {
        let c = self.circuit(x)?;
        let z = crate::circuit::circuit_expectation_z(&c, &self.params, self.observable)?;
        Ok(Self::rescaled(z))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VqcTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for VqcTrainConfig {
    fn default() -> Self {
        Self { epochs: 200, learning_rate: AdamConfig::default().learning_rate, batch_size: Some(crate::softu::DEFAULT_BATCH_SIZE), seed: 0 }
    }
}

/// Adam on mean BCE with parameter-shift gradients.
pub fn train_vqc_direct(
    baseline: &VqcBaseline,
    dataset: &[Sample],
    config: &VqcTrainConfig,
) -> Result<(VqcBaseline, TrainHistory)> {
    baseline.validate()?;
    if dataset.is_empty() {
        return Err(invalid("dataset must not be empty"));
    }
    let mut model = baseline.clone();
    let mut adam = AdamState::new(model.params.len(), AdamConfig::with_lr(config.learning_rate));
    let mut rng = rng::seeded(config.seed);
    let batch_size = config.batch_size.unwrap_or(dataset.len()).clamp(1, dataset.len());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let zero = StateVector::zero(model.n_qubits)?;
    let mut history = TrainHistory::default();

    for epoch in 0..config.epochs {
        let start = Instant::now();
        if batch_size < dataset.len() {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(batch_size) {
            let inv_b = 1.0 / chunk.len() as f64;
            let mut grad = vec![0.0; model.params.len()];
            let mut loss = 0.0;
            for &i in chunk {
                let s = dataset[i];
                let circuit = model.circuit(s.x)?;
                let z = crate::circuit::circuit_expectation_z(&circuit, &model.params, model.observable)?;
                let p = VqcBaseline::rescaled(z);
                loss += bce_loss(p, s.label);
                let dz = bce_grad(p, s.label) * 0.5 * inv_b;
                if dz == 0.0 {
                    continue;
                }
                let g = parameter_shift_gradient_from(&circuit, &model.params, model.observable, &zero)?;
                for (acc, gi) in grad.iter_mut().zip(g) {
                    *acc += dz * gi;
                }
            }
            loss *= inv_b;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, detail: format!("task loss {loss}") });
            }
            loss_sum += loss;
            n_batches += 1;
            adam.step(&mut model.params, &grad)?;
        }
        let task = loss_sum / n_batches as f64;
        history.rows.push(HistoryRow {
            epoch,
            task_loss: task,
            unitary_loss: 0.0,
            total_loss: task,
            wall_s: start.elapsed().as_secs_f64(),
            max_udev: 0.0,
        });
    }
    Ok((model, history))
}
