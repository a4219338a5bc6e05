//! Dense complex linear algebra for the small (at most 4096-dimensional)
//! operators that appear in few-qubit models.
//!
//! Matrices are square and stored row-major. The norm used throughout is the
//! Frobenius norm `sqrt(tr(A^dagger A))`, and the unitarity deviation of `U`
//! is `||U^dagger U - I||` in that norm.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Dense square complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

/// Dense complex vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexVector {
    data: Vec<C64>,
}

impl ComplexVector {
    pub fn new(data: Vec<C64>) -> Result<Self> {
        if data.is_empty() {
            return Err(invalid("vector must have at least one entry"));
        }
        Ok(Self { data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { data: vec![ZERO; dim] }
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.data[index] = ONE;
        v
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(dim: usize, data: Vec<C64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("matrix dimension must be positive"));
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: data.len() });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid("matrix entries must be finite"));
        }
        Ok(Self { dim, data })
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * dim + i] = d;
        }
        m
    }

    pub fn pauli_x() -> Self {
        Self { dim: 2, data: vec![ZERO, ONE, ONE, ZERO] }
    }

    pub fn pauli_y() -> Self {
        Self { dim: 2, data: vec![ZERO, -I, I, ZERO] }
    }

    pub fn pauli_z() -> Self {
        Self { dim: 2, data: vec![ONE, ZERO, ZERO, -ONE] }
    }

    pub fn hadamard() -> Self {
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self { dim: 2, data: vec![h, h, h, -h] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: C64) {
        self.data[row * self.dim + col] = value;
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn row(&self, row: usize) -> &[C64] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn column(&self, col: usize) -> ComplexVector {
        ComplexVector { data: (0..self.dim).map(|r| self.get(r, col)).collect() }
    }

    pub fn set_column(&mut self, col: usize, v: &ComplexVector) {
        for r in 0..self.dim {
            self.set(r, col, v.data[r]);
        }
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        Ok(())
    }

    /// Standard matrix product `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        for i in 0..n {
            let out_row = &mut out[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self { dim: n, data: out })
    }

    pub fn matvec(&self, v: &ComplexVector) -> Result<ComplexVector> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: v.dim() });
        }
        Ok(ComplexVector { data: self.apply_slice(&v.data) })
    }

    /// `self * v` for a raw amplitude slice of matching length.
    pub(crate) fn apply_slice(&self, v: &[C64]) -> Vec<C64> {
        let n = self.dim;
        (0..n)
            .map(|i| self.data[i * n..(i + 1) * n].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `self^dagger * v` for a raw amplitude slice of matching length.
    pub(crate) fn apply_dagger_slice(&self, v: &[C64]) -> Vec<C64> {
        let n = self.dim;
        let mut out = vec![ZERO; n];
        for (i, &vi) in v.iter().enumerate() {
            if vi == ZERO {
                continue;
            }
            for (o, a) in out.iter_mut().zip(&self.data[i * n..(i + 1) * n]) {
                *o += a.conj() * vi;
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                out[j * n + i] = self.data[i * n + j].conj();
            }
        }
        Self { dim: n, data: out }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|z| z * factor).collect() }
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let (a, b) = (self.dim, other.dim);
        let n = a * b;
        let mut out = Self::zeros(n);
        for i in 0..a {
            for j in 0..a {
                let s = self.get(i, j);
                for k in 0..b {
                    for l in 0..b {
                        out.set(i * b + k, j * b + l, s * other.get(k, l));
                    }
                }
            }
        }
        out
    }

    /// `U^dagger U - I`.
    pub fn gram_residual(&self) -> Self {
        let n = self.dim;
        let mut d = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut s = ZERO;
                for k in 0..n {
                    s += self.data[k * n + i].conj() * self.data[k * n + j];
                }
                if i == j {
                    s -= ONE;
                }
                d.data[i * n + j] = s;
                d.data[j * n + i] = s.conj();
            }
        }
        d
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn to_json(&self) -> MatrixJson {
        MatrixJson {
            dim: self.dim,
            re: self.data.iter().map(|z| z.re).collect(),
            im: self.data.iter().map(|z| z.im).collect(),
        }
    }

    pub fn from_json(json: &MatrixJson) -> Result<Self> {
        if json.re.len() != json.im.len() {
            return Err(Error::DimensionMismatch { expected: json.re.len(), found: json.im.len() });
        }
        let data = json.re.iter().zip(&json.im).map(|(&re, &im)| C64::new(re, im)).collect();
        Self::from_row_major(json.dim, data)
    }
}

/// Wire format `{"dim": n, "re": [...], "im": [...]}`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dim: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let json = MatrixJson::deserialize(d)?;
        ComplexMatrix::from_json(&json).map_err(serde::de::Error::custom)
    }
}

pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.matmul(b)
}

pub fn dagger(a: &ComplexMatrix) -> ComplexMatrix {
    a.dagger()
}

pub fn frobenius_norm(a: &ComplexMatrix) -> f64 {
    a.frobenius_norm()
}

/// `||U^dagger U - I||`, zero exactly when `u` is unitary.
pub fn unitarity_deviation(u: &ComplexMatrix) -> f64 {
    u.gram_residual().frobenius_norm()
}

/// Haar-distributed random unitary, deterministic in `seed`.
///
/// Gram-Schmidt on the columns of a complex Gaussian matrix. Gram-Schmidt
/// leaves the triangular factor with a positive real diagonal, which is the
/// phase convention that makes `Q` Haar distributed. Each column is
/// orthogonalized twice to keep the result unitary to machine precision.
pub fn random_unitary(dim: usize, seed: u64) -> Result<ComplexMatrix> {
    if dim == 0 {
        return Err(invalid("random_unitary requires dim >= 1"));
    }
    let mut rng = rng::seeded(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut cols: Vec<Vec<C64>> = (0..dim)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    C64::new(re * scale, im * scale)
                })
                .collect()
        })
        .collect();
    for j in 0..dim {
        for _pass in 0..2 {
            for k in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let q = &done[k];
                let v = &mut rest[0];
                let proj: C64 = q.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= proj * qi;
                }
            }
        }
        let norm = cols[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(invalid("degenerate Gaussian sample in random_unitary"));
        }
        for z in cols[j].iter_mut() {
            *z /= norm;
        }
    }
    let mut m = ComplexMatrix::zeros(dim);
    for (j, col) in cols.iter().enumerate() {
        for (i, &z) in col.iter().enumerate() {
            m.set(i, j, z);
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_matrix(dim: usize, seed: u64) -> ComplexMatrix {
        let mut rng = rng::seeded(seed);
        let data = (0..dim * dim)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                C64::new(re, im)
            })
            .collect();
        ComplexMatrix::from_row_major(dim, data).unwrap()
    }

    fn triple_loop(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
        let n = a.dim();
        let mut out = ComplexMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut s = ZERO;
                for k in 0..n {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn matmul_fixtures() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(i2.matmul(&i2).unwrap(), i2);
        let x = ComplexMatrix::pauli_x();
        assert_eq!(x.matmul(&x).unwrap(), i2);
        let (a, b) = (random_matrix(4, 1), random_matrix(4, 2));
        assert!(a.matmul(&b).unwrap().max_abs_diff(&triple_loop(&a, &b)) <= 1e-12);
    }

    #[test]
    fn matmul_rejects_mismatched_dims() {
        let err = ComplexMatrix::identity(2).matmul(&ComplexMatrix::identity(4));
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn matmul_matches_triple_loop_up_to_16() {
        for dim in 1..=16 {
            let (a, b) = (random_matrix(dim, 10 + dim as u64), random_matrix(dim, 100 + dim as u64));
            assert!(a.matmul(&b).unwrap().max_abs_diff(&triple_loop(&a, &b)) <= 1e-12, "dim {dim}");
        }
    }

    #[test]
    fn dagger_fixtures() {
        assert_eq!(ComplexMatrix::identity(2).dagger(), ComplexMatrix::identity(2));
        assert_eq!(ComplexMatrix::pauli_y().dagger(), ComplexMatrix::pauli_y());
        let m = random_matrix(5, 3);
        assert_eq!(m.dagger().dagger(), m);
    }

    #[test]
    fn frobenius_fixtures() {
        assert_eq!(ComplexMatrix::zeros(4).frobenius_norm(), 0.0);
        assert!((ComplexMatrix::identity(2).frobenius_norm() - 2f64.sqrt()).abs() < 1e-15);
        let mut m = ComplexMatrix::zeros(3);
        m.set(1, 2, C64::new(3.0, 4.0));
        assert_eq!(m.frobenius_norm(), 5.0);
    }

    #[test]
    fn unitarity_deviation_fixtures() {
        let two_i = ComplexMatrix::identity(2).scale(C64::new(2.0, 0.0));
        assert!((unitarity_deviation(&two_i) - 3.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((unitarity_deviation(&ComplexMatrix::zeros(32)) - 32f64.sqrt()).abs() < 1e-12);
        assert!(unitarity_deviation(&random_unitary(8, 3).unwrap()) <= 1e-12);
    }

    #[test]
    fn random_unitary_properties() {
        let one = random_unitary(1, 42).unwrap();
        assert!((one.get(0, 0).norm() - 1.0).abs() < 1e-15);
        assert_eq!(random_unitary(32, 7).unwrap(), random_unitary(32, 7).unwrap());
        assert!(unitarity_deviation(&random_unitary(32, 7).unwrap()) <= 1e-12);
        assert!(random_unitary(0, 1).is_err());
        assert_ne!(random_unitary(4, 1).unwrap(), random_unitary(4, 2).unwrap());
    }

    #[test]
    fn kron_of_identities_is_identity() {
        let k = ComplexMatrix::identity(2).kron(&ComplexMatrix::identity(4));
        assert_eq!(k, ComplexMatrix::identity(8));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let m = random_unitary(8, 11).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: ComplexMatrix = serde_json::from_str(&text).unwrap();
        for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn json_rejects_wrong_length() {
        let text = r#"{"dim": 2, "re": [1, 0, 0], "im": [0, 0, 0]}"#;
        assert!(serde_json::from_str::<ComplexMatrix>(text).is_err());
    }

    proptest! {
        #[test]
        fn frobenius_is_submultiplicative(sa in any::<u64>(), sb in any::<u64>(), dim in 1usize..9) {
            let (a, b) = (random_matrix(dim, sa), random_matrix(dim, sb));
            let ab = a.matmul(&b).unwrap();
            prop_assert!(ab.frobenius_norm() <= a.frobenius_norm() * b.frobenius_norm() * (1.0 + 1e-12));
        }

        #[test]
        fn dagger_preserves_norm(s in any::<u64>(), dim in 1usize..9) {
            let a = random_matrix(dim, s);
            prop_assert!((a.dagger().frobenius_norm() - a.frobenius_norm()).abs() <= 1e-12);
        }

        #[test]
        fn deviation_is_left_invariant(su in any::<u64>(), sv in any::<u64>(), dim in 1usize..9) {
            let u = random_matrix(dim, su);
            let v = random_unitary(dim, sv).unwrap();
            let lhs = unitarity_deviation(&v.matmul(&u).unwrap());
            prop_assert!((lhs - unitarity_deviation(&u)).abs() <= 1e-10);
        }

        #[test]
        fn json_round_trip_bits(entries in proptest::collection::vec((-1e300f64..1e300, -1e300f64..1e300), 9)) {
            let data = entries.iter().map(|&(re, im)| C64::new(re, im)).collect();
            let m = ComplexMatrix::from_row_major(3, data).unwrap();
            let back: ComplexMatrix = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
            prop_assert_eq!(m, back);
        }
    }
}
