//! Circuit alignment: fit stacked entangling layers to each target matrix by
//! minimizing `L = (1 / (2^n M)) sum_i ||T_i - U_circuit,i||`.
//!
//! The sum decouples, so each target is fitted on its own with its own Adam
//! state and seed. Alignment never sees training data; only the targets.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::circuit::{circuit_unitary, circuit_unitary_shifted, Angle, Axis, Circuit, Gate, LayerTemplate, Resolved};
use crate::error::{invalid, Error, Result};
use crate::linalg::{unitarity_deviation, ComplexMatrix, C64, ZERO};
use crate::optim::{AdamConfig, AdamState};
use crate::rng;
use crate::softu::{SoftUnitaryModel, ZERO_DEVIATION_GUARD};
use crate::tasks::Predictor;

/// Targets further than this from unitary still align, with a warning.
pub const NEAR_UNITARY_WARN: f64 = 0.1;

/// Layer budget that gives the stacked ansatz about as many angles as a
/// `2^n`-dimensional unitary has real parameters: `ceil(4^n / (3n))`, which
/// is 69 at five qubits.
pub fn default_layers_per_target(n_qubits: usize) -> usize {
    let params = 4f64.powi(n_qubits as i32);
    (params / (3.0 * n_qubits as f64)).ceil() as usize
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignGradient {
    /// Reverse sweep over the gate list, `O(gates * 4^n)` per step.
    #[default]
    Adjoint,
    /// Shift rule on the unitary itself, `O(gates^2 * 4^n)` per step.
    ParameterShift,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    pub layers_per_target: usize,
    pub template: LayerTemplate,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    #[serde(default)]
    pub gradient: AlignGradient,
}

impl AlignConfig {
    pub fn for_qubits(n_qubits: usize) -> Self {
        Self {
            layers_per_target: default_layers_per_target(n_qubits),
            template: LayerTemplate::Rot,
            epochs: 200,
            learning_rate: 0.015,
            seed: 0,
            gradient: AlignGradient::Adjoint,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentProblem {
    pub targets: Vec<ComplexMatrix>,
    pub n_qubits: usize,
    pub config: AlignConfig,
}

impl AlignmentProblem {
    pub fn new(targets: Vec<ComplexMatrix>, n_qubits: usize, config: AlignConfig) -> Result<Self> {
        let p = Self { targets, n_qubits, config };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(invalid("alignment needs at least one target"));
        }
        let dim = 1usize << self.n_qubits;
        if let Some(t) = self.targets.iter().find(|t| t.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: t.dim() });
        }
        if self.config.layers_per_target == 0 {
            return Err(invalid("layers_per_target must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedCircuit {
    pub circuit: Circuit,
    pub params: Vec<f64>,
    pub initial_distance: f64,
    /// `||T - U_circuit||`.
    pub distance: f64,
    /// `min_phi ||T - e^{i phi} U_circuit||`.
    pub phase_invariant_distance: f64,
}

impl AlignedCircuit {
    pub fn unitary(&self) -> Result<ComplexMatrix> {
        circuit_unitary(&self.circuit, &self.params)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRow {
    pub epoch: usize,
    pub loss: f64,
    pub distances: Vec<f64>,
    pub phase_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedCircuitSet {
    pub n_qubits: usize,
    pub config: AlignConfig,
    pub circuits: Vec<AlignedCircuit>,
    /// Row `e` holds the distances evaluated before update `e`.
    pub history: Vec<AlignmentRow>,
}

impl AlignedCircuitSet {
    pub fn loss(&self) -> f64 {
        normalized(self.n_qubits, self.circuits.iter().map(|c| c.distance))
    }

    pub fn phase_invariant_loss(&self) -> f64 {
        normalized(self.n_qubits, self.circuits.iter().map(|c| c.phase_invariant_distance))
    }

    pub fn distances(&self) -> Vec<f64> {
        self.circuits.iter().map(|c| c.distance).collect()
    }

    /// History as CSV: `epoch,loss,d1..dM,phase_loss`, ending with one row
    /// for the returned circuits.
    pub fn write_history_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let m = self.circuits.len();
        let mut header = vec!["epoch".to_string(), "loss".to_string()];
        header.extend((1..=m).map(|i| format!("d{i}")));
        header.push("phase_loss".to_string());
        w.write_record(&header)?;
        let final_row = AlignmentRow {
            epoch: self.history.len(),
            loss: self.loss(),
            distances: self.distances(),
            phase_loss: self.phase_invariant_loss(),
        };
        for row in self.history.iter().chain(std::iter::once(&final_row)) {
            let mut rec = vec![row.epoch.to_string(), row.loss.to_string()];
            rec.extend(row.distances.iter().map(f64::to_string));
            rec.push(row.phase_loss.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn normalized(n_qubits: usize, distances: impl Iterator<Item = f64>) -> f64 {
    let (sum, m) = distances.fold((0.0, 0usize), |(s, m), d| (s + d, m + 1));
    sum / ((1usize << n_qubits) as f64 * m.max(1) as f64)
}

/// `min_phi ||t - e^{i phi} u||`, attained at `phi = arg tr(u^dagger t)`.
pub fn phase_invariant_distance(t: &ComplexMatrix, u: &ComplexMatrix) -> f64 {
    let overlap: C64 = u.as_slice().iter().zip(t.as_slice()).map(|(a, b)| a.conj() * b).sum();
    (t.frobenius_norm_sqr() + u.frobenius_norm_sqr() - 2.0 * overlap.norm()).max(0.0).sqrt()
}

pub fn alignment_loss(targets: &[ComplexMatrix], circuits: &[Circuit], params: &[Vec<f64>]) -> Result<f64> {
    if targets.len() != circuits.len() || targets.len() != params.len() {
        return Err(Error::DimensionMismatch { expected: targets.len(), found: circuits.len().min(params.len()) });
    }
    if targets.is_empty() {
        return Err(invalid("alignment loss needs at least one target"));
    }
    let n_qubits = circuits[0].n_qubits();
    let mut sum = 0.0;
    for ((t, c), p) in targets.iter().zip(circuits).zip(params) {
        if c.n_qubits() != n_qubits {
            return Err(Error::DimensionMismatch { expected: n_qubits, found: c.n_qubits() });
        }
        let u = circuit_unitary(c, p)?;
        sum += t.sub(&u)?.frobenius_norm();
    }
    Ok(sum / ((1usize << n_qubits) as f64 * targets.len() as f64))
}

/// `||t - U(params)||` and its gradient in `params`.
pub fn distance_and_gradient(
    target: &ComplexMatrix,
    circuit: &Circuit,
    params: &[f64],
    method: AlignGradient,
) -> Result<(f64, Vec<f64>)> {
    let u = circuit_unitary(circuit, params)?;
    let residual = target.sub(&u)?;
    let d = residual.frobenius_norm();
    let mut grad = vec![0.0; circuit.n_params()];
    if d < ZERO_DEVIATION_GUARD {
        return Ok((d, grad));
    }
    // d(d)/d(theta) = -Re tr(R^dagger dU/dtheta) / d
    match method {
        AlignGradient::Adjoint => adjoint_sweep(circuit, params, u, residual, -1.0 / d, &mut grad)?,
        AlignGradient::ParameterShift => {
            let s = std::f64::consts::FRAC_PI_2;
            let scale = 1.0 / (4.0 * (s / 2.0).sin());
            for (g, gate) in circuit.gates().iter().enumerate() {
                let Some(slot) = gate.slot() else { continue };
                let plus = circuit_unitary_shifted(circuit, params, Some((g, s)))?;
                let minus = circuit_unitary_shifted(circuit, params, Some((g, -s)))?;
                let mut acc = 0.0;
                for ((r, p), m) in residual.as_slice().iter().zip(plus.as_slice()).zip(minus.as_slice()) {
                    acc += (r.conj() * (p - m)).re;
                }
                grad[slot] -= acc * scale / d;
            }
        }
    }
    Ok((d, grad))
}

/// Adds `scale * Re tr(R^dagger dU/dtheta_slot)` into `grad`.
///
/// Walking the gates backwards keeps `phi = G_j ... G_1` and
/// `lam = (G_L ... G_{j+1})^dagger R`; for a Pauli rotation
/// `dG_j/dtheta G_{j-1} ... G_1 = (-i/2) P phi`.
fn adjoint_sweep(
    circuit: &Circuit,
    params: &[f64],
    mut phi: ComplexMatrix,
    mut lam: ComplexMatrix,
    scale: f64,
    grad: &mut [f64],
) -> Result<()> {
    let n = circuit.n_qubits();
    for gate in circuit.gates().iter().rev() {
        if let Gate::Rotation { axis, qubit, angle: Angle::Slot(slot) } = *gate {
            let overlap = pauli_overlap(&lam, &phi, n, axis, qubit);
            // (-i/2) * overlap
            grad[slot] += scale * (C64::new(0.0, -0.5) * overlap).re;
        }
        let resolved: Resolved<'_> = gate.resolve(params, 0.0)?;
        resolved.apply_rows(&mut phi, n, true);
        resolved.apply_rows(&mut lam, n, true);
    }
    Ok(())
}

/// `tr(lam^dagger P_qubit phi)`.
fn pauli_overlap(lam: &ComplexMatrix, phi: &ComplexMatrix, n_qubits: usize, axis: Axis, qubit: usize) -> C64 {
    let dim = phi.dim();
    let mask = 1usize << (n_qubits - 1 - qubit);
    let dot = |a: usize, b: usize| -> C64 { lam.row(a).iter().zip(phi.row(b)).map(|(x, y)| x.conj() * y).sum() };
    let mut acc = ZERO;
    for i in 0..dim {
        if i & mask != 0 {
            continue;
        }
        let j = i | mask;
        acc += match axis {
            // (X phi)_i = phi_j, (X phi)_j = phi_i
            Axis::X => dot(i, j) + dot(j, i),
            // (Y phi)_i = -i phi_j, (Y phi)_j = i phi_i
            Axis::Y => C64::new(0.0, -1.0) * dot(i, j) + C64::new(0.0, 1.0) * dot(j, i),
            Axis::Z => dot(i, i) - dot(j, j),
        };
    }
    acc
}

struct TargetRun {
    circuit: AlignedCircuit,
    distances: Vec<f64>,
    phase_distances: Vec<f64>,
}

fn align_one(target: &ComplexMatrix, n_qubits: usize, config: &AlignConfig, seed: u64) -> Result<TargetRun> {
    let circuit = config.template.stack(n_qubits, config.layers_per_target)?;
    let mut rng = rng::seeded(seed);
    let tau = std::f64::consts::TAU;
    let mut params: Vec<f64> = (0..circuit.n_params()).map(|_| rng.random_range(0.0..tau)).collect();
    let mut adam = AdamState::new(params.len(), AdamConfig::with_lr(config.learning_rate));
    let mut distances = Vec::with_capacity(config.epochs);
    let mut phase_distances = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for epoch in 0..config.epochs {
        let (d, grad) = distance_and_gradient(target, &circuit, &params, config.gradient)?;
        if !d.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch, detail: format!("alignment distance {d}") });
        }
        distances.push(d);
        phase_distances.push(phase_invariant_distance(target, &circuit_unitary(&circuit, &params)?));
        if best.as_ref().is_none_or(|(b, _)| d < *b) {
            best = Some((d, params.clone()));
        }
        adam.step(&mut params, &grad)?;
    }
    let final_d = target.sub(&circuit_unitary(&circuit, &params)?)?.frobenius_norm();
    if let Some((b, p)) = best {
        if b < final_d {
            params = p;
        }
    }
    let u = circuit_unitary(&circuit, &params)?;
    let distance = target.sub(&u)?.frobenius_norm();
    let initial_distance = distances.first().copied().unwrap_or(distance);
    Ok(TargetRun {
        circuit: AlignedCircuit {
            phase_invariant_distance: phase_invariant_distance(target, &u),
            circuit,
            params,
            initial_distance,
            distance,
        },
        distances,
        phase_distances,
    })
}

/// Fits one circuit per target. The returned parameters are the best seen
/// over the run, so the final loss never exceeds the initial one.
pub fn align(problem: &AlignmentProblem) -> Result<AlignedCircuitSet> {
    problem.validate()?;
    let n = problem.n_qubits;
    let runs = problem
        .targets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let dev = unitarity_deviation(t);
            if dev > NEAR_UNITARY_WARN {
                eprintln!("warning: alignment target {i} deviates from unitarity by {dev:.3e}");
            }
            align_one(t, n, &problem.config, rng::derive_seed(problem.config.seed, i as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let history = (0..problem.config.epochs)
        .map(|e| {
            let distances: Vec<f64> = runs.iter().map(|r| r.distances[e]).collect();
            AlignmentRow {
                epoch: e,
                loss: normalized(n, distances.iter().copied()),
                phase_loss: normalized(n, runs.iter().map(|r| r.phase_distances[e])),
                distances,
            }
        })
        .collect();
    Ok(AlignedCircuitSet {
        n_qubits: n,
        config: problem.config.clone(),
        circuits: runs.into_iter().map(|r| r.circuit).collect(),
        history,
    })
}

/// Soft model with every block replaced by its compiled circuit.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedModel {
    model: SoftUnitaryModel,
    circuits: Vec<(Circuit, Vec<f64>)>,
}

pub fn transfer_model(soft: &SoftUnitaryModel, aligned: &AlignedCircuitSet) -> Result<AlignedModel> {
    if aligned.circuits.len() != soft.n_blocks() {
        return Err(Error::DimensionMismatch { expected: soft.n_blocks(), found: aligned.circuits.len() });
    }
    if aligned.n_qubits != soft.n_qubits() {
        return Err(Error::DimensionMismatch { expected: soft.n_qubits(), found: aligned.n_qubits });
    }
    let mut model = soft.clone();
    for (block, c) in model.blocks_mut().iter_mut().zip(&aligned.circuits) {
        if c.circuit.n_qubits() != soft.n_qubits() {
            return Err(Error::DimensionMismatch { expected: soft.n_qubits(), found: c.circuit.n_qubits() });
        }
        *block = c.unitary()?;
    }
    let circuits = aligned.circuits.iter().map(|c| (c.circuit.clone(), c.params.clone())).collect();
    Ok(AlignedModel { model, circuits })
}

impl AlignedModel {
    pub fn model(&self) -> &SoftUnitaryModel {
        &self.model
    }

    pub fn forward(&self, x: f64) -> Result<f64> {
        self.model.forward(x)
    }

    /// Gate-level circuit for input `x` (compiled blocks with the encoding
    /// between them) and its parameter vector.
    pub fn export_circuit(&self, x: f64) -> Result<(Circuit, Vec<f64>)> {
        let n = self.model.n_qubits();
        let mut full = Circuit::empty(n)?;
        let mut params = Vec::new();
        for (b, (c, p)) in self.circuits.iter().enumerate() {
            if b > 0 {
                let enc = Circuit::new(n, self.model.encoder().gates(&[x])?, 0)?;
                full = full.then(&enc)?;
            }
            full = full.then(c)?;
            params.extend_from_slice(p);
        }
        Ok((full, params))
    }
}

impl Predictor for AlignedModel {
    fn predict(&self, x: f64) -> Result<f64> {
        self.forward(x)
    }
}

/// Upper bound on `|soft(x) - aligned(x)|` for every `x`, monotone in the
/// per-block distances.
///
/// Telescoping the two matrix chains gives
/// `||psi_soft - psi_aligned|| <= sum_b d_b prod_{c>b} ||U_c||_op`, and
/// `||U||_op^2 <= 1 + ||U^dagger U - I||`. The readout then moves by at most
/// `e (||psi_soft|| + 1)`, halved when outputs are rescaled.
pub fn output_deviation_bound(soft: &SoftUnitaryModel, distances: &[f64]) -> f64 {
    let op: Vec<f64> = soft.blocks().iter().map(|u| (1.0 + unitarity_deviation(u)).sqrt()).collect();
    let mut e = 0.0;
    for (b, d) in distances.iter().enumerate() {
        e += d * op[b + 1..].iter().product::<f64>();
    }
    let psi_norm: f64 = op.iter().product();
    let bound = e * (psi_norm + 1.0);
    if soft.output_rescale() {
        0.5 * bound
    } else {
        bound
    }
}
