//! Soft-unitary models: raw complex matrices trained directly, kept close to
//! unitary by the penalty `lambda * sum_b ||U_b^dagger U_b - I||`.
//!
//! A model with `M` blocks evaluates
//! `U_M E(x) ... U_2 E(x) U_1 |0...0>` and reads `<Z>` on one qubit. Blocks
//! are not renormalized, so the state is whatever the matrices produce and
//! the readout is `<psi|Z|psi>`; the penalty is what keeps this meaningful.
//!
//! Gradients are reverse-mode through the matrix chain. For a real loss `L`
//! of a complex quantity `z = a + ib` the code carries `dL/da + i dL/db`,
//! so a linear map `psi = U phi` sends an upstream gradient `g` to
//! `U^dagger g` for `phi` and `g phi^dagger` for `U`.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::circuit::{z_expectation, z_sign, MAX_QUBITS};
use crate::encoding::EncodingSpec;
use crate::error::{invalid, Error, Result};
use crate::linalg::{random_unitary, unitarity_deviation, ComplexMatrix, C64, ONE, ZERO};
use crate::optim::{AdamConfig, AdamState};
use crate::rng;
use crate::tasks::{bce_grad, bce_loss, Sample};

/// Deviations below this are treated as exactly unitary when differentiating
/// the (non-squared) norm, whose gradient is singular at zero.
pub const ZERO_DEVIATION_GUARD: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SoftUnitaryModel {
    n_qubits: usize,
    blocks: Vec<ComplexMatrix>,
    encoder: EncodingSpec,
    observable: usize,
    output_rescale: bool,
}

/// Intermediate states of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// State entering each block.
    inputs: Vec<Vec<C64>>,
    /// Diagonal of the encoding block used between blocks.
    diag: Vec<C64>,
    output: Vec<C64>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[C64] {
        &self.output
    }
}

impl SoftUnitaryModel {
    pub fn new(
        n_qubits: usize,
        blocks: Vec<ComplexMatrix>,
        encoder: EncodingSpec,
        observable: usize,
        output_rescale: bool,
    ) -> Result<Self> {
        let model = Self { n_qubits, blocks, encoder, observable, output_rescale };
        model.validate()?;
        Ok(model)
    }

    /// Blocks initialized to Haar-random unitaries with distinct seeds.
    pub fn random(n_qubits: usize, n_blocks: usize, encoder: EncodingSpec, seed: u64) -> Result<Self> {
        let dim = 1usize.checked_shl(n_qubits as u32).ok_or_else(|| invalid("too many qubits"))?;
        let blocks = (0..n_blocks)
            .map(|b| random_unitary(dim, rng::derive_seed(seed, b as u64)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(n_qubits, blocks, encoder, 0, true)
    }

    pub fn identity(n_qubits: usize, n_blocks: usize, encoder: EncodingSpec) -> Result<Self> {
        let blocks = vec![ComplexMatrix::identity(1 << n_qubits); n_blocks];
        Self::new(n_qubits, blocks, encoder, 0, true)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits > MAX_QUBITS {
            return Err(invalid(format!("qubit count {} outside 1..={MAX_QUBITS}", self.n_qubits)));
        }
        if self.blocks.is_empty() {
            return Err(invalid("a soft-unitary model needs at least one block"));
        }
        let dim = 1 << self.n_qubits;
        if let Some(b) = self.blocks.iter().find(|b| b.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: b.dim() });
        }
        if self.encoder.n_qubits != self.n_qubits {
            return Err(Error::DimensionMismatch { expected: self.n_qubits, found: self.encoder.n_qubits });
        }
        self.encoder.validate()?;
        if self.observable >= self.n_qubits {
            return Err(Error::QubitOutOfRange { qubit: self.observable, n_qubits: self.n_qubits });
        }
        Ok(())
    }

    pub fn with_observable(mut self, qubit: usize) -> Result<Self> {
        self.observable = qubit;
        self.validate()?;
        Ok(self)
    }

    pub fn with_rescale(mut self, on: bool) -> Self {
        self.output_rescale = on;
        self
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn blocks(&self) -> &[ComplexMatrix] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ComplexMatrix] {
        &mut self.blocks
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn encoder(&self) -> &EncodingSpec {
        &self.encoder
    }

    pub fn observable(&self) -> usize {
        self.observable
    }

    pub fn output_rescale(&self) -> bool {
        self.output_rescale
    }

    /// `["U", "E", "U", ...]` with `M - 1` encoding insertions.
    pub fn layout(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(2 * self.blocks.len() - 1);
        for b in 0..self.blocks.len() {
            if b > 0 {
                out.push("E".to_string());
            }
            out.push("U".to_string());
        }
        out
    }

    pub fn trace(&self, features: &[f64]) -> Result<ForwardTrace> {
        let diag = self.encoder.diagonal(features)?;
        let mut state = vec![ZERO; self.dim()];
        state[0] = ONE;
        let mut inputs = Vec::with_capacity(self.blocks.len());
        for (b, block) in self.blocks.iter().enumerate() {
            if b > 0 {
                for (s, d) in state.iter_mut().zip(&diag) {
                    *s *= d;
                }
            }
            let next = block.apply_slice(&state);
            inputs.push(std::mem::replace(&mut state, next));
        }
        Ok(ForwardTrace { inputs, diag, output: state })
    }

    /// Adds the block gradients for upstream state gradient `grad_out` into
    /// `grads` (one matrix per block).
    pub fn backward(&self, trace: &ForwardTrace, grad_out: &[C64], grads: &mut [ComplexMatrix]) {
        let mut g = grad_out.to_vec();
        for b in (0..self.blocks.len()).rev() {
            let input = &trace.inputs[b];
            let gm = grads[b].as_mut_slice();
            let n = input.len();
            for (i, gi) in g.iter().enumerate() {
                let row = &mut gm[i * n..(i + 1) * n];
                for (r, x) in row.iter_mut().zip(input) {
                    *r += gi * x.conj();
                }
            }
            if b > 0 {
                g = self.blocks[b].apply_dagger_slice(&g);
                for (gi, d) in g.iter_mut().zip(&trace.diag) {
                    *gi *= d.conj();
                }
            }
        }
    }

    /// Unnormalized `<Z>` on `qubit` of the final state.
    pub fn expectation(&self, features: &[f64], qubit: usize) -> Result<f64> {
        if qubit >= self.n_qubits {
            return Err(Error::QubitOutOfRange { qubit, n_qubits: self.n_qubits });
        }
        Ok(z_expectation(&self.trace(features)?.output, self.n_qubits, qubit))
    }

    /// Model output for a feature vector: `<Z_obs>`, mapped to `(z + 1) / 2`
    /// when rescaling is on.
    pub fn forward_features(&self, features: &[f64]) -> Result<f64> {
        let z = self.expectation(features, self.observable)?;
        Ok(self.rescale(z))
    }

    pub fn forward(&self, x: f64) -> Result<f64> {
        self.forward_features(&[x])
    }

    fn rescale(&self, z: f64) -> f64 {
        if self.output_rescale {
            0.5 * (z + 1.0)
        } else {
            z
        }
    }

    pub fn max_unitarity_deviation(&self) -> f64 {
        self.blocks.iter().map(unitarity_deviation).fold(0.0, f64::max)
    }

    pub fn n_real_params(&self) -> usize {
        2 * self.blocks.len() * self.dim() * self.dim()
    }

    /// Real parameters: `(re, im)` of every entry, block by block, row-major.
    pub fn params_real(&self) -> Vec<f64> {
        matrices_to_real(&self.blocks)
    }

    pub fn set_params_real(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_real_params() {
            return Err(Error::DimensionMismatch { expected: self.n_real_params(), found: params.len() });
        }
        let mut it = params.chunks_exact(2);
        for block in &mut self.blocks {
            for z in block.as_mut_slice() {
                let p = it.next().expect("length checked");
                *z = C64::new(p[0], p[1]);
            }
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> Vec<ComplexMatrix> {
        vec![ComplexMatrix::zeros(self.dim()); self.blocks.len()]
    }
}

pub(crate) fn matrices_to_real(ms: &[ComplexMatrix]) -> Vec<f64> {
    ms.iter().flat_map(|m| m.as_slice().iter().flat_map(|z| [z.re, z.im])).collect()
}

pub(crate) fn state_grad_for_z(state: &[C64], n_qubits: usize, qubit: usize, scale: f64, out: &mut [C64]) {
    for (k, (o, a)) in out.iter_mut().zip(state).enumerate() {
        *o += a * (2.0 * scale * z_sign(k, n_qubits, qubit));
    }
}

/// Whether the unitarity penalty uses the norm as written or its square.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyForm {
    Norm,
    #[default]
    Squared,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regularizer {
    pub lambda: f64,
    pub form: PenaltyForm,
}

impl Regularizer {
    pub fn norm(lambda: f64) -> Self {
        Self { lambda, form: PenaltyForm::Norm }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn value(&self, blocks: &[ComplexMatrix]) -> f64 {
        if self.lambda == 0.0 {
            return 0.0;
        }
        let sum: f64 = blocks
            .iter()
            .map(|u| {
                let d = unitarity_deviation(u);
                match self.form {
                    PenaltyForm::Norm => d,
                    PenaltyForm::Squared => d * d,
                }
            })
            .sum();
        self.lambda * sum
    }

    /// Adds `d(value)/dU_b` into `grads[b]`.
    pub fn accumulate_gradient(&self, blocks: &[ComplexMatrix], grads: &mut [ComplexMatrix]) {
        if self.lambda == 0.0 {
            return;
        }
        for (u, g) in blocks.iter().zip(grads) {
            let pg = unitarity_penalty_gradient(u, self.form);
            for (gi, pi) in g.as_mut_slice().iter_mut().zip(pg.as_slice()) {
                *gi += pi * self.lambda;
            }
        }
    }
}

/// Gradient of `||U^dagger U - I||` (or of its square) with respect to the
/// entries of `u`, as `d/d re + i d/d im`.
///
/// With `D = U^dagger U - I`, `d||D||^2 = 4 Re tr(D U^dagger dU)`, so the
/// squared form has gradient `4 U D` and the norm `2 U D / ||D||`. The norm's
/// gradient is taken as zero below [`ZERO_DEVIATION_GUARD`].
pub fn unitarity_penalty_gradient(u: &ComplexMatrix, form: PenaltyForm) -> ComplexMatrix {
    let d = u.gram_residual();
    let ud = u.matmul(&d).expect("same dimension");
    match form {
        PenaltyForm::Squared => ud.scale(C64::new(4.0, 0.0)),
        PenaltyForm::Norm => {
            let norm = d.frobenius_norm();
            if norm < ZERO_DEVIATION_GUARD {
                ComplexMatrix::zeros(u.dim())
            } else {
                ud.scale(C64::new(2.0 / norm, 0.0))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub task: f64,
    pub unitary: f64,
    pub total: f64,
}

fn check_batch(batch: &[Sample]) -> Result<()> {
    if batch.is_empty() {
        return Err(invalid("batch must not be empty"));
    }
    if let Some(s) = batch.iter().find(|s| s.label > 1) {
        return Err(invalid(format!("label {} is not 0 or 1", s.label)));
    }
    Ok(())
}

/// Mean BCE over `batch` plus the unitarity penalty.
pub fn total_loss(model: &SoftUnitaryModel, batch: &[Sample], reg: Regularizer) -> Result<LossBreakdown> {
    check_batch(batch)?;
    reg.validate()?;
    let mut task = 0.0;
    for s in batch {
        task += bce_loss(model.forward(s.x)?, s.label);
    }
    task /= batch.len() as f64;
    let unitary = reg.value(model.blocks());
    Ok(LossBreakdown { task, unitary, total: task + unitary })
}

/// Loss and its gradient with respect to every block entry, one complex
/// matrix per block holding `dL/d re + i dL/d im`.
pub fn loss_gradients(
    model: &SoftUnitaryModel,
    batch: &[Sample],
    reg: Regularizer,
) -> Result<(LossBreakdown, Vec<ComplexMatrix>)> {
    check_batch(batch)?;
    reg.validate()?;
    let mut grads = model.zero_grads();
    let mut task = 0.0;
    let inv_b = 1.0 / batch.len() as f64;
    let chain = if model.output_rescale { 0.5 } else { 1.0 };
    let mut g_state = vec![ZERO; model.dim()];
    for s in batch {
        let trace = model.trace(&[s.x])?;
        let z = z_expectation(&trace.output, model.n_qubits, model.observable);
        let p = model.rescale(z);
        task += bce_loss(p, s.label);
        let dz = bce_grad(p, s.label) * chain * inv_b;
        if dz == 0.0 {
            continue;
        }
        g_state.iter_mut().for_each(|g| *g = ZERO);
        state_grad_for_z(&trace.output, model.n_qubits, model.observable, dz, &mut g_state);
        model.backward(&trace, &g_state, &mut grads);
    }
    task *= inv_b;
    let unitary = reg.value(model.blocks());
    reg.accumulate_gradient(model.blocks(), &mut grads);
    Ok((LossBreakdown { task, unitary, total: task + unitary }, grads))
}

/// Under Adam the non-squared penalty keeps a gradient of size `~lambda`
/// arbitrarily close to the manifold, which chatters at an amplitude set by
/// the step size and swamps the task gradient in the second-moment estimate.
/// The squared form vanishes smoothly there, so it is the training default.
pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
pub const DEFAULT_BATCH_SIZE: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    #[serde(default)]
    pub penalty: PenaltyForm,
    /// `None` trains full-batch.
    #[serde(default)]
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub udev_threshold: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 200,
            learning_rate: DEFAULT_LEARNING_RATE,
            lambda: 1000.0,
            penalty: PenaltyForm::Squared,
            batch_size: Some(DEFAULT_BATCH_SIZE),
            seed: 0,
            udev_threshold: 1e-2,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, beta1: self.beta1, beta2: self.beta2, epsilon: self.epsilon }
    }

    pub fn regularizer(&self) -> Regularizer {
        Regularizer { lambda: self.lambda, form: self.penalty }
    }
}

/// One row per epoch. Losses are averaged over the epoch's batches as they
/// were evaluated (before each update); `max_udev` is measured after the
/// epoch's last update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub task_loss: f64,
    pub unitary_loss: f64,
    pub total_loss: f64,
    pub wall_s: f64,
    pub max_udev: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub rows: Vec<HistoryRow>,
}

pub const HISTORY_HEADER: [&str; 6] = ["epoch", "task_loss", "unitary_loss", "total_loss", "wall_s", "max_udev"];

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&HistoryRow> {
        self.rows.last()
    }

    pub fn task_losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.task_loss).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        w.write_record(HISTORY_HEADER)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let rows = r.deserialize().collect::<std::result::Result<Vec<HistoryRow>, _>>()?;
        Ok(Self { rows })
    }
}

/// Adam on the total loss. Deterministic for a fixed `config.seed`
/// (the seed only drives mini-batch shuffling).
pub fn train_soft(
    model: &SoftUnitaryModel,
    dataset: &[Sample],
    config: &TrainConfig,
) -> Result<(SoftUnitaryModel, TrainHistory)> {
    if dataset.is_empty() {
        return Err(invalid("dataset must not be empty"));
    }
    let reg = config.regularizer();
    reg.validate()?;
    let mut model = model.clone();
    let mut history = TrainHistory::default();
    let mut params = model.params_real();
    let mut adam = AdamState::new(params.len(), config.adam());
    let mut rng = rng::seeded(config.seed);
    let batch_size = config.batch_size.unwrap_or(dataset.len()).clamp(1, dataset.len());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut batch = Vec::with_capacity(batch_size);

    for epoch in 0..config.epochs {
        let start = Instant::now();
        if batch_size < dataset.len() {
            order.shuffle(&mut rng);
        }
        let mut sums = LossBreakdown::default();
        let mut n_batches = 0usize;
        for chunk in order.chunks(batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| dataset[i]));
            let (loss, grads) = loss_gradients(&model, &batch, reg)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, detail: format!("{loss:?}") });
            }
            sums.task += loss.task;
            sums.unitary += loss.unitary;
            sums.total += loss.total;
            n_batches += 1;
            adam.step(&mut params, &matrices_to_real(&grads))?;
            model.set_params_real(&params)?;
        }
        let wall_s = start.elapsed().as_secs_f64();
        let k = n_batches as f64;
        history.rows.push(HistoryRow {
            epoch,
            task_loss: sums.task / k,
            unitary_loss: sums.unitary / k,
            total_loss: sums.total / k,
            wall_s,
            max_udev: model.max_unitarity_deviation(),
        });
    }
    Ok((model, history))
}

#[derive(Serialize, Deserialize)]
struct SoftModelJson {
    layout: Vec<String>,
    n_qubits: usize,
    encoder: EncodingSpec,
    observable: usize,
    output_rescale: bool,
    blocks: Vec<ComplexMatrix>,
}

impl Serialize for SoftUnitaryModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SoftModelJson {
            layout: self.layout(),
            n_qubits: self.n_qubits,
            encoder: self.encoder.clone(),
            observable: self.observable,
            output_rescale: self.output_rescale,
            blocks: self.blocks.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SoftUnitaryModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = SoftModelJson::deserialize(d)?;
        let model = SoftUnitaryModel::new(j.n_qubits, j.blocks, j.encoder, j.observable, j.output_rescale)
            .map_err(D::Error::custom)?;
        if model.layout() != j.layout {
            return Err(D::Error::custom(format!("layout {:?} does not match {} blocks", j.layout, model.n_blocks())));
        }
        Ok(model)
    }
}
