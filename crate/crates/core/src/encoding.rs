//! Parameter-free data-encoding blocks built from fixed-angle RZ gates.

use serde::{Deserialize, Serialize};

use crate::circuit::{Angle, Gate};
use crate::error::{invalid, Error, Result};
use crate::linalg::C64;

pub const DEFAULT_BASE: f64 = 2.0;

/// How input features are routed onto qubits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMap {
    /// A single feature `x` on every qubit; qubit `q` gets `RZ(base^q * x)`.
    Exponential,
    /// Feature `j` gets `RZ(scale_j * f_j)` on qubit `j mod n`, in feature
    /// order. Missing scales default to 1.
    Cyclic {
        #[serde(default)]
        scales: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub n_qubits: usize,
    pub base: f64,
    pub feature_map: FeatureMap,
}

impl EncodingSpec {
    pub fn exponential(n_qubits: usize, base: f64) -> Result<Self> {
        let spec = Self { n_qubits, base, feature_map: FeatureMap::Exponential };
        spec.validate()?;
        Ok(spec)
    }

    pub fn cyclic(n_qubits: usize, scales: Vec<f64>) -> Result<Self> {
        let spec = Self { n_qubits, base: DEFAULT_BASE, feature_map: FeatureMap::Cyclic { scales } };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 {
            return Err(invalid("encoding needs at least one qubit"));
        }
        if !(self.base > 1.0 && self.base.is_finite()) {
            return Err(invalid(format!("encoding base must be > 1, got {}", self.base)));
        }
        if let FeatureMap::Cyclic { scales } = &self.feature_map {
            if scales.iter().any(|s| !s.is_finite()) {
                return Err(invalid("feature scales must be finite"));
            }
        }
        Ok(())
    }

    /// `(qubit, angle)` for each RZ, in application order.
    pub fn rotations(&self, features: &[f64]) -> Result<Vec<(usize, f64)>> {
        if let Some(bad) = features.iter().find(|f| !f.is_finite()) {
            return Err(invalid(format!("non-finite feature {bad}")));
        }
        match &self.feature_map {
            FeatureMap::Exponential => {
                if features.len() != 1 {
                    return Err(Error::DimensionMismatch { expected: 1, found: features.len() });
                }
                let x = features[0];
                Ok((0..self.n_qubits).map(|q| (q, self.base.powi(q as i32) * x)).collect())
            }
            FeatureMap::Cyclic { scales } => Ok(features
                .iter()
                .enumerate()
                .map(|(j, &f)| (j % self.n_qubits, scales.get(j).copied().unwrap_or(1.0) * f))
                .collect()),
        }
    }

    pub fn gates(&self, features: &[f64]) -> Result<Vec<Gate>> {
        Ok(self.rotations(features)?.into_iter().map(|(q, a)| Gate::rz(q, Angle::Fixed(a))).collect())
    }

    /// Diagonal of the block unitary. RZ(a) contributes `exp(-ia/2)` where
    /// the qubit's bit is 0 and `exp(+ia/2)` where it is 1.
    pub fn diagonal(&self, features: &[f64]) -> Result<Vec<C64>> {
        let n = self.n_qubits;
        let mut per_qubit = vec![0.0; n];
        for (q, a) in self.rotations(features)? {
            per_qubit[q] += a;
        }
        Ok((0..1usize << n)
            .map(|k| {
                let phase: f64 = per_qubit
                    .iter()
                    .enumerate()
                    .map(|(q, a)| if (k >> (n - 1 - q)) & 1 == 1 { 0.5 * a } else { -0.5 * a })
                    .sum();
                C64::from_polar(1.0, phase)
            })
            .collect())
    }
}

/// `RZ(base^q * x)` on every qubit `q`.
pub fn exponential_rz_block(x: f64, spec: &EncodingSpec) -> Result<Vec<Gate>> {
    spec.validate()?;
    EncodingSpec { feature_map: FeatureMap::Exponential, ..spec.clone() }.gates(&[x])
}

/// `RZ(f_j)` on qubit `j mod n_qubits` for the four cartpole features.
pub fn angle_encode_features(features: &[f64; 4], n_qubits: usize) -> Result<Vec<Gate>> {
    EncodingSpec::cyclic(n_qubits, Vec::new())?.gates(features)
}
