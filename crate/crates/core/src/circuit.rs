//! Statevector simulation of small gate circuits.
//!
//! Conventions: qubit 0 is the most significant bit of a basis-state index,
//! and rotations are `R_P(theta) = exp(-i theta P / 2)` for `P` in `{X, Y, Z}`.
//! Gates act in place on amplitude pairs, so a one-qubit gate costs `O(2^n)`.
//! [`circuit_unitary`] is the separate dense path.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{unitarity_deviation, ComplexMatrix, ComplexVector, MatrixJson, C64, I, ZERO};

pub const MAX_QUBITS: usize = 12;

/// Tolerance on `||U^dagger U - I||` for matrices inserted as fixed gates.
pub const FIXED_UNITARY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    RX,
    RY,
    RZ,
    H,
    CNOT,
    FixedUnitary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Rotation angle: either an index into the circuit's parameter table or a
/// fixed value in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Angle {
    Slot(usize),
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Gate {
    Rotation { axis: Axis, qubit: usize, angle: Angle },
    Hadamard { qubit: usize },
    Cnot { control: usize, target: usize },
    /// Dense unitary on the whole register.
    Fixed { matrix: ComplexMatrix },
}

impl Gate {
    pub fn rx(qubit: usize, angle: Angle) -> Self {
        Gate::Rotation { axis: Axis::X, qubit, angle }
    }

    pub fn ry(qubit: usize, angle: Angle) -> Self {
        Gate::Rotation { axis: Axis::Y, qubit, angle }
    }

    pub fn rz(qubit: usize, angle: Angle) -> Self {
        Gate::Rotation { axis: Axis::Z, qubit, angle }
    }

    pub fn h(qubit: usize) -> Self {
        Gate::Hadamard { qubit }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Gate::Cnot { control, target }
    }

    pub fn kind(&self) -> GateKind {
        match self {
            Gate::Rotation { axis: Axis::X, .. } => GateKind::RX,
            Gate::Rotation { axis: Axis::Y, .. } => GateKind::RY,
            Gate::Rotation { axis: Axis::Z, .. } => GateKind::RZ,
            Gate::Hadamard { .. } => GateKind::H,
            Gate::Cnot { .. } => GateKind::CNOT,
            Gate::Fixed { .. } => GateKind::FixedUnitary,
        }
    }

    pub fn targets(&self, n_qubits: usize) -> Vec<usize> {
        match *self {
            Gate::Rotation { qubit, .. } | Gate::Hadamard { qubit } => vec![qubit],
            Gate::Cnot { control, target } => vec![control, target],
            Gate::Fixed { .. } => (0..n_qubits).collect(),
        }
    }

    pub fn slot(&self) -> Option<usize> {
        match self {
            Gate::Rotation { angle: Angle::Slot(s), .. } => Some(*s),
            _ => None,
        }
    }

    /// Resolves the gate's numeric action, adding `shift` to a rotation angle.
    pub(crate) fn resolve(&self, params: &[f64], shift: f64) -> Result<Resolved<'_>> {
        Ok(match *self {
            Gate::Rotation { axis, qubit, angle } => {
                let theta = match angle {
                    Angle::Fixed(a) => a,
                    Angle::Slot(s) => *params.get(s).ok_or(Error::MissingParameter { slot: s, len: params.len() })?,
                };
                Resolved::OneQubit { qubit, m: rotation_matrix(axis, theta + shift) }
            }
            Gate::Hadamard { qubit } => {
                let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                Resolved::OneQubit { qubit, m: [h, h, h, -h] }
            }
            Gate::Cnot { control, target } => Resolved::Cnot { control, target },
            Gate::Fixed { ref matrix } => Resolved::Dense(matrix),
        })
    }

    fn check(&self, n_qubits: usize) -> Result<()> {
        let check_q = |q: usize| {
            if q >= n_qubits {
                Err(Error::QubitOutOfRange { qubit: q, n_qubits })
            } else {
                Ok(())
            }
        };
        match *self {
            Gate::Rotation { qubit, angle, .. } => {
                check_q(qubit)?;
                if let Angle::Fixed(a) = angle {
                    if !a.is_finite() {
                        return Err(invalid("rotation angle must be finite"));
                    }
                }
            }
            Gate::Hadamard { qubit } => check_q(qubit)?,
            Gate::Cnot { control, target } => {
                check_q(control)?;
                check_q(target)?;
                if control == target {
                    return Err(invalid("CNOT control and target must differ"));
                }
            }
            Gate::Fixed { ref matrix } => {
                let dim = 1usize << n_qubits;
                if matrix.dim() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: matrix.dim() });
                }
                let dev = unitarity_deviation(matrix);
                if dev > FIXED_UNITARY_TOL {
                    return Err(invalid(format!("fixed gate deviates from unitarity by {dev:e}")));
                }
            }
        }
        Ok(())
    }
}

/// 2x2 matrix of `exp(-i theta P / 2)`, row-major.
pub fn rotation_matrix(axis: Axis, theta: f64) -> [C64; 4] {
    let (s, c) = (theta / 2.0).sin_cos();
    let (cc, ss) = (C64::new(c, 0.0), C64::new(s, 0.0));
    match axis {
        Axis::X => [cc, -I * ss, -I * ss, cc],
        Axis::Y => [cc, -ss, ss, cc],
        Axis::Z => [C64::new(c, -s), ZERO, ZERO, C64::new(c, s)],
    }
}

pub(crate) enum Resolved<'a> {
    OneQubit { qubit: usize, m: [C64; 4] },
    Cnot { control: usize, target: usize },
    Dense(&'a ComplexMatrix),
}

#[inline]
fn bit_mask(n_qubits: usize, qubit: usize) -> usize {
    1 << (n_qubits - 1 - qubit)
}

impl Resolved<'_> {
    pub(crate) fn apply(&self, amps: &mut [C64], n_qubits: usize) {
        match *self {
            Resolved::OneQubit { qubit, m } => {
                let mask = bit_mask(n_qubits, qubit);
                for i in 0..amps.len() {
                    if i & mask == 0 {
                        let j = i | mask;
                        let (a, b) = (amps[i], amps[j]);
                        amps[i] = m[0] * a + m[1] * b;
                        amps[j] = m[2] * a + m[3] * b;
                    }
                }
            }
            Resolved::Cnot { control, target } => {
                let (cm, tm) = (bit_mask(n_qubits, control), bit_mask(n_qubits, target));
                for i in 0..amps.len() {
                    if i & cm != 0 && i & tm == 0 {
                        amps.swap(i, i | tm);
                    }
                }
            }
            Resolved::Dense(u) => {
                let out = u.apply_slice(amps);
                amps.copy_from_slice(&out);
            }
        }
    }

    /// Left-multiplies every column of `m` by the gate (or by its adjoint).
    pub(crate) fn apply_rows(&self, m: &mut ComplexMatrix, n_qubits: usize, adjoint: bool) {
        let dim = m.dim();
        match *self {
            Resolved::OneQubit { qubit, m: g } => {
                let g = if adjoint { [g[0].conj(), g[2].conj(), g[1].conj(), g[3].conj()] } else { g };
                let mask = bit_mask(n_qubits, qubit);
                let data = m.as_mut_slice();
                for i in 0..dim {
                    if i & mask != 0 {
                        continue;
                    }
                    let j = i | mask;
                    let (lo, hi) = data.split_at_mut(j * dim);
                    let ri = &mut lo[i * dim..(i + 1) * dim];
                    let rj = &mut hi[..dim];
                    for (a, b) in ri.iter_mut().zip(rj.iter_mut()) {
                        let (x, y) = (*a, *b);
                        *a = g[0] * x + g[1] * y;
                        *b = g[2] * x + g[3] * y;
                    }
                }
            }
            Resolved::Cnot { control, target } => {
                let (cm, tm) = (bit_mask(n_qubits, control), bit_mask(n_qubits, target));
                let data = m.as_mut_slice();
                for i in 0..dim {
                    if i & cm != 0 && i & tm == 0 {
                        let j = i | tm;
                        let (lo, hi) = data.split_at_mut(j * dim);
                        lo[i * dim..(i + 1) * dim].swap_with_slice(&mut hi[..dim]);
                    }
                }
            }
            Resolved::Dense(u) => {
                let prod = if adjoint { u.dagger().matmul(m) } else { u.matmul(m) };
                *m = prod.expect("fixed gate dimension checked at construction");
            }
        }
    }
}

/// Ordered gate list with a parameter table of `n_params` real angles.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
    n_params: usize,
}

fn check_qubit_count(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(invalid(format!("qubit count {n_qubits} outside 1..={MAX_QUBITS}")));
    }
    Ok(())
}

impl Circuit {
    pub fn new(n_qubits: usize, gates: Vec<Gate>, n_params: usize) -> Result<Self> {
        check_qubit_count(n_qubits)?;
        let mut used = vec![false; n_params];
        for gate in &gates {
            gate.check(n_qubits)?;
            if let Some(s) = gate.slot() {
                if s >= n_params {
                    return Err(Error::MissingParameter { slot: s, len: n_params });
                }
                used[s] = true;
            }
        }
        if let Some(s) = used.iter().position(|u| !u) {
            return Err(invalid(format!("parameter slot {s} is not referenced by any gate")));
        }
        Ok(Self { n_qubits, gates, n_params })
    }

    pub fn empty(n_qubits: usize) -> Result<Self> {
        Self::new(n_qubits, Vec::new(), 0)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// `other` applied after `self`; `other`'s slots are renumbered after
    /// `self`'s, so the combined parameter vector is `self`'s then `other`'s.
    pub fn then(&self, other: &Circuit) -> Result<Circuit> {
        if other.n_qubits != self.n_qubits {
            return Err(Error::DimensionMismatch { expected: self.n_qubits, found: other.n_qubits });
        }
        let offset = self.n_params;
        let mut gates = self.gates.clone();
        gates.extend(other.gates.iter().map(|g| match *g {
            Gate::Rotation { axis, qubit, angle: Angle::Slot(s) } => {
                Gate::Rotation { axis, qubit, angle: Angle::Slot(s + offset) }
            }
            ref g => g.clone(),
        }));
        Circuit::new(self.n_qubits, gates, self.n_params + other.n_params)
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params {
            return Err(Error::DimensionMismatch { expected: self.n_params, found: params.len() });
        }
        Ok(())
    }

    pub fn to_json(&self) -> CircuitJson {
        CircuitJson {
            n_qubits: self.n_qubits,
            n_params: self.n_params,
            gates: self.gates.iter().map(|g| GateRecord::from_gate(g, self.n_qubits)).collect(),
        }
    }

    pub fn from_json(json: &CircuitJson) -> Result<Self> {
        check_qubit_count(json.n_qubits)?;
        let gates = json.gates.iter().map(|r| r.to_gate(json.n_qubits)).collect::<Result<Vec<_>>>()?;
        Circuit::new(json.n_qubits, gates, json.n_params)
    }
}

/// One gate in the circuit wire format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateRecord {
    pub kind: GateKind,
    pub targets: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixJson>,
}

impl GateRecord {
    fn from_gate(gate: &Gate, n_qubits: usize) -> Self {
        let (slot, angle, matrix) = match gate {
            Gate::Rotation { angle: Angle::Slot(s), .. } => (Some(*s), None, None),
            Gate::Rotation { angle: Angle::Fixed(a), .. } => (None, Some(*a), None),
            Gate::Fixed { matrix } => (None, None, Some(matrix.to_json())),
            _ => (None, None, None),
        };
        Self { kind: gate.kind(), targets: gate.targets(n_qubits), slot, angle, matrix }
    }

    fn to_gate(&self, n_qubits: usize) -> Result<Gate> {
        let expect_targets = |n: usize| {
            if self.targets.len() != n {
                Err(invalid(format!("{:?} gate needs {n} target(s), got {}", self.kind, self.targets.len())))
            } else {
                Ok(())
            }
        };
        let rotation = |axis| -> Result<Gate> {
            expect_targets(1)?;
            let angle = match (self.slot, self.angle) {
                (Some(s), None) => Angle::Slot(s),
                (None, Some(a)) => Angle::Fixed(a),
                _ => return Err(invalid("rotation needs exactly one of `slot` or `angle`")),
            };
            Ok(Gate::Rotation { axis, qubit: self.targets[0], angle })
        };
        if !matches!(self.kind, GateKind::RX | GateKind::RY | GateKind::RZ)
            && (self.slot.is_some() || self.angle.is_some())
        {
            return Err(Error::Unsupported(format!("{:?} gates cannot carry a parameter", self.kind)));
        }
        match self.kind {
            GateKind::RX => rotation(Axis::X),
            GateKind::RY => rotation(Axis::Y),
            GateKind::RZ => rotation(Axis::Z),
            GateKind::H => {
                expect_targets(1)?;
                Ok(Gate::h(self.targets[0]))
            }
            GateKind::CNOT => {
                expect_targets(2)?;
                Ok(Gate::cnot(self.targets[0], self.targets[1]))
            }
            GateKind::FixedUnitary => {
                expect_targets(n_qubits)?;
                let m = self.matrix.as_ref().ok_or_else(|| invalid("FixedUnitary gate needs `matrix`"))?;
                Ok(Gate::Fixed { matrix: ComplexMatrix::from_json(m)? })
            }
        }
    }
}

/// Circuit wire format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitJson {
    pub n_qubits: usize,
    pub n_params: usize,
    pub gates: Vec<GateRecord>,
}

impl Serialize for Circuit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Circuit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Circuit::from_json(&CircuitJson::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Pure state of an `n`-qubit register.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: ComplexVector,
}

impl StateVector {
    pub fn zero(n_qubits: usize) -> Result<Self> {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        check_qubit_count(n_qubits)?;
        let dim = 1 << n_qubits;
        if index >= dim {
            return Err(invalid(format!("basis index {index} out of range for dim {dim}")));
        }
        Ok(Self { n_qubits, amps: ComplexVector::basis(dim, index) })
    }

    /// Wraps amplitudes without normalizing them.
    pub fn from_amplitudes(n_qubits: usize, amps: Vec<C64>) -> Result<Self> {
        check_qubit_count(n_qubits)?;
        if amps.len() != 1 << n_qubits {
            return Err(Error::DimensionMismatch { expected: 1 << n_qubits, found: amps.len() });
        }
        Ok(Self { n_qubits, amps: ComplexVector::new(amps)? })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        self.amps.as_slice()
    }

    pub fn as_vector(&self) -> &ComplexVector {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.norm_sqr()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.as_slice().iter().map(|z| z.norm_sqr()).collect()
    }

    /// Applies `gate` in place.
    pub fn apply(&mut self, gate: &Gate, params: &[f64]) -> Result<()> {
        gate.check(self.n_qubits)?;
        gate.resolve(params, 0.0)?.apply(self.amps.as_mut_slice(), self.n_qubits);
        Ok(())
    }

    /// `<Z>` on `qubit`: sum of `±|a_k|^2`, `+` where the qubit's bit is 0.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        if qubit >= self.n_qubits {
            return Err(Error::QubitOutOfRange { qubit, n_qubits: self.n_qubits });
        }
        Ok(z_expectation(self.amps.as_slice(), self.n_qubits, qubit))
    }
}

/// `sum_k s_k |a_k|^2` with `s_k = +1` when `qubit` is 0 in `k`, else `-1`.
/// Not normalized, so this is also `<a|Z|a>` for sub-normalized amplitudes.
pub(crate) fn z_expectation(amps: &[C64], n_qubits: usize, qubit: usize) -> f64 {
    let mask = bit_mask(n_qubits, qubit);
    amps.iter()
        .enumerate()
        .map(|(k, a)| if k & mask == 0 { a.norm_sqr() } else { -a.norm_sqr() })
        .sum()
}

/// `+1` or `-1`: eigenvalue of `Z_qubit` on basis state `k`.
#[inline]
pub(crate) fn z_sign(k: usize, n_qubits: usize, qubit: usize) -> f64 {
    if k & bit_mask(n_qubits, qubit) == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn zero_state(n_qubits: usize) -> Result<StateVector> {
    StateVector::zero(n_qubits)
}

pub fn apply_gate(mut state: StateVector, gate: &Gate, params: &[f64]) -> Result<StateVector> {
    state.apply(gate, params)?;
    Ok(state)
}

pub fn run_circuit(circuit: &Circuit, params: &[f64], input: &StateVector) -> Result<StateVector> {
    circuit.check_params(params)?;
    if input.n_qubits != circuit.n_qubits {
        return Err(Error::DimensionMismatch { expected: circuit.n_qubits, found: input.n_qubits });
    }
    let mut state = input.clone();
    for gate in &circuit.gates {
        gate.resolve(params, 0.0)?.apply(state.amps.as_mut_slice(), circuit.n_qubits);
    }
    Ok(state)
}

/// Dense `2^n x 2^n` unitary of the whole circuit.
pub fn circuit_unitary(circuit: &Circuit, params: &[f64]) -> Result<ComplexMatrix> {
    circuit_unitary_shifted(circuit, params, None)
}

/// As [`circuit_unitary`], with `shift = (gate_index, delta)` added to that
/// gate's angle.
pub(crate) fn circuit_unitary_shifted(
    circuit: &Circuit,
    params: &[f64],
    shift: Option<(usize, f64)>,
) -> Result<ComplexMatrix> {
    circuit.check_params(params)?;
    let mut u = ComplexMatrix::identity(circuit.dim());
    for (idx, gate) in circuit.gates.iter().enumerate() {
        let delta = match shift {
            Some((g, d)) if g == idx => d,
            _ => 0.0,
        };
        gate.resolve(params, delta)?.apply_rows(&mut u, circuit.n_qubits, false);
    }
    Ok(u)
}

pub fn expectation_z(state: &StateVector, qubit: usize) -> Result<f64> {
    state.expectation_z(qubit)
}

/// One RX per qubit (slots in order), then the CNOT ring
/// `(0->1), (1->2), ..., (n-1->0)`. A single qubit gets no CNOT.
pub fn basic_entangling_layer(n_qubits: usize, param_slots: &[usize]) -> Result<Vec<Gate>> {
    if param_slots.len() != n_qubits {
        return Err(Error::DimensionMismatch { expected: n_qubits, found: param_slots.len() });
    }
    let mut gates: Vec<Gate> = param_slots.iter().enumerate().map(|(q, &s)| Gate::rx(q, Angle::Slot(s))).collect();
    gates.extend(cnot_ring(n_qubits));
    Ok(gates)
}

/// `RZ RY RZ` on every qubit (three consecutive slots per qubit), then the
/// same CNOT ring as [`basic_entangling_layer`].
pub fn rot_entangling_layer(n_qubits: usize, param_slots: &[usize]) -> Result<Vec<Gate>> {
    if param_slots.len() != 3 * n_qubits {
        return Err(Error::DimensionMismatch { expected: 3 * n_qubits, found: param_slots.len() });
    }
    let mut gates = Vec::with_capacity(4 * n_qubits);
    for (q, s) in param_slots.chunks(3).enumerate() {
        gates.push(Gate::rz(q, Angle::Slot(s[0])));
        gates.push(Gate::ry(q, Angle::Slot(s[1])));
        gates.push(Gate::rz(q, Angle::Slot(s[2])));
    }
    gates.extend(cnot_ring(n_qubits));
    Ok(gates)
}

fn cnot_ring(n_qubits: usize) -> Vec<Gate> {
    if n_qubits < 2 {
        return Vec::new();
    }
    (0..n_qubits).map(|q| Gate::cnot(q, (q + 1) % n_qubits)).collect()
}

/// Which entangling layer a stacked ansatz is built from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerTemplate {
    /// RX rotations and a CNOT ring.
    #[default]
    Basic,
    /// RZ-RY-RZ rotations and a CNOT ring.
    Rot,
}

impl LayerTemplate {
    pub fn params_per_layer(self, n_qubits: usize) -> usize {
        match self {
            LayerTemplate::Basic => n_qubits,
            LayerTemplate::Rot => 3 * n_qubits,
        }
    }

    pub fn layer(self, n_qubits: usize, first_slot: usize) -> Result<Vec<Gate>> {
        let slots: Vec<usize> = (first_slot..first_slot + self.params_per_layer(n_qubits)).collect();
        match self {
            LayerTemplate::Basic => basic_entangling_layer(n_qubits, &slots),
            LayerTemplate::Rot => rot_entangling_layer(n_qubits, &slots),
        }
    }

    /// `layers` stacked copies with fresh slots in each.
    pub fn stack(self, n_qubits: usize, layers: usize) -> Result<Circuit> {
        let per = self.params_per_layer(n_qubits);
        let mut gates = Vec::new();
        for l in 0..layers {
            gates.extend(self.layer(n_qubits, l * per)?);
        }
        Circuit::new(n_qubits, gates, layers * per)
    }
}

/// Gradient of `<Z_qubit>` after running `circuit` on `|0...0>`.
pub fn parameter_shift_gradient(circuit: &Circuit, params: &[f64], qubit: usize) -> Result<Vec<f64>> {
    parameter_shift_gradient_from(circuit, params, qubit, &StateVector::zero(circuit.n_qubits)?)
}

/// Parameter-shift gradient of `<Z_qubit>` for an arbitrary input state.
///
/// Every use of a slot is shifted by `±pi/2` on its own and the halved
/// differences are summed, which is exact for slots shared between gates.
/// Intermediate states are cached so each shifted run only replays the
/// suffix of the circuit after the shifted gate.
pub fn parameter_shift_gradient_from(
    circuit: &Circuit,
    params: &[f64],
    qubit: usize,
    input: &StateVector,
) -> Result<Vec<f64>> {
    circuit.check_params(params)?;
    if qubit >= circuit.n_qubits {
        return Err(Error::QubitOutOfRange { qubit, n_qubits: circuit.n_qubits });
    }
    if input.n_qubits != circuit.n_qubits {
        return Err(Error::DimensionMismatch { expected: circuit.n_qubits, found: input.n_qubits });
    }
    let n = circuit.n_qubits;
    let resolved = circuit.gates.iter().map(|g| g.resolve(params, 0.0)).collect::<Result<Vec<_>>>()?;
    let mut prefix = Vec::with_capacity(resolved.len());
    let mut state = input.amps.as_slice().to_vec();
    for r in &resolved {
        prefix.push(state.clone());
        r.apply(&mut state, n);
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut grad = vec![0.0; circuit.n_params];
    for (g, gate) in circuit.gates.iter().enumerate() {
        let Some(slot) = gate.slot() else { continue };
        let shifted_expectation = |delta: f64| -> Result<f64> {
            let mut s = prefix[g].clone();
            gate.resolve(params, delta)?.apply(&mut s, n);
            for r in &resolved[g + 1..] {
                r.apply(&mut s, n);
            }
            Ok(z_expectation(&s, n, qubit))
        };
        let plus = shifted_expectation(half_pi)?;
        let minus = shifted_expectation(-half_pi)?;
        grad[slot] += 0.5 * (plus - minus);
    }
    Ok(grad)
}

/// `<Z_qubit>` after running `circuit` on `|0...0>`.
pub fn circuit_expectation_z(circuit: &Circuit, params: &[f64], qubit: usize) -> Result<f64> {
    run_circuit(circuit, params, &StateVector::zero(circuit.n_qubits)?)?.expectation_z(qubit)
}

/// Seeded random circuit mixing every gate kind except `FixedUnitary`,
/// with one fresh slot per parameterized rotation. Returns the circuit and a
/// parameter vector drawn uniformly from `[0, 2pi)`.
pub fn random_circuit(n_qubits: usize, n_gates: usize, seed: u64) -> Result<(Circuit, Vec<f64>)> {
    use rand::Rng;
    let mut rng = crate::rng::seeded(seed);
    let tau = std::f64::consts::TAU;
    let mut gates = Vec::with_capacity(n_gates);
    let mut params = Vec::new();
    for _ in 0..n_gates {
        let q = rng.random_range(0..n_qubits);
        let pick = if n_qubits > 1 { rng.random_range(0..6) } else { rng.random_range(0..5) };
        let gate = match pick {
            0..=2 => {
                let axis = [Axis::X, Axis::Y, Axis::Z][pick];
                let angle = if rng.random_bool(0.75) {
                    params.push(rng.random_range(0.0..tau));
                    Angle::Slot(params.len() - 1)
                } else {
                    Angle::Fixed(rng.random_range(0.0..tau))
                };
                Gate::Rotation { axis, qubit: q, angle }
            }
            3 | 4 => Gate::h(q),
            _ => {
                let t = (q + rng.random_range(1..n_qubits)) % n_qubits;
                Gate::cnot(q, t)
            }
        };
        gates.push(gate);
    }
    let n_params = params.len();
    Ok((Circuit::new(n_qubits, gates, n_params)?, params))
}
