//! Dense complex linear algebra over explicitly dimensioned subsystems:
//! tensor products, partial traces, adjoints, projectors and eigensystems.
//!
//! Everything here is exact dense arithmetic on `Complex64`. Basis-label
//! ordering is big-endian: subsystem 0 is the most significant digit of a
//! basis index. A state on dims `[2, 2]` stores |00⟩, |01⟩, |10⟩, |11⟩ in
//! that order.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, Eigh, UPLO};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::tol;

pub type C64 = Complex64;

const ZERO: C64 = Complex64::new(0.0, 0.0);
const ONE: C64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("amplitude count {len} does not match the subsystem dimensions (product {expected})")]
    LengthMismatch { len: usize, expected: usize },
    #[error("subsystem dimension {dim} at position {index} is below 2")]
    BadDimension { index: usize, dim: usize },
    #[error("matrix is {rows}x{cols}, expected square of size {expected}")]
    NotSquare {
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("subsystem index {index} out of range for {count} subsystems")]
    SubsystemOutOfRange { index: usize, count: usize },
    #[error("subsystem index {index} repeated")]
    DuplicateSubsystem { index: usize },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("eigendecomposition did not converge: {0}")]
    EigFailed(String),
    #[error("cannot normalize a vector with norm {0:e}")]
    ZeroNorm(f64),
}

fn check_dims(dims: &[usize]) -> Result<usize, LinalgError> {
    let mut product = 1usize;
    for (index, &dim) in dims.iter().enumerate() {
        if dim < 2 {
            return Err(LinalgError::BadDimension { index, dim });
        }
        product *= dim;
    }
    Ok(product)
}

/// Strides for big-endian digit decomposition of basis indices.
pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut out = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        out[i] = out[i + 1] * dims[i + 1];
    }
    out
}

pub(crate) fn digits(index: usize, dims: &[usize], strides: &[usize]) -> Vec<usize> {
    dims.iter()
        .zip(strides)
        .map(|(&d, &s)| (index / s) % d)
        .collect()
}

/// Dense complex state vector over an ordered list of subsystems.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeVector {
    amplitudes: Array1<C64>,
    dims: Vec<usize>,
}

impl AmplitudeVector {
    pub fn new(amplitudes: Vec<C64>, dims: Vec<usize>) -> Result<Self, LinalgError> {
        let expected = check_dims(&dims)?;
        if amplitudes.len() != expected {
            return Err(LinalgError::LengthMismatch {
                len: amplitudes.len(),
                expected,
            });
        }
        Ok(Self {
            amplitudes: Array1::from_vec(amplitudes),
            dims,
        })
    }

    pub(crate) fn from_array(amplitudes: Array1<C64>, dims: Vec<usize>) -> Self {
        debug_assert_eq!(amplitudes.len(), dims.iter().product::<usize>());
        Self { amplitudes, dims }
    }

    /// The trivial state on zero subsystems (a bare complex amplitude).
    pub fn scalar(value: C64) -> Self {
        Self {
            amplitudes: Array1::from_vec(vec![value]),
            dims: Vec::new(),
        }
    }

    /// Computational basis state |index⟩ on the given subsystems.
    pub fn basis_state(dims: Vec<usize>, index: usize) -> Result<Self, LinalgError> {
        let total = check_dims(&dims)?;
        if index >= total {
            return Err(LinalgError::SubsystemOutOfRange {
                index,
                count: total,
            });
        }
        let mut amplitudes = vec![ZERO; total];
        amplitudes[index] = ONE;
        Ok(Self {
            amplitudes: Array1::from_vec(amplitudes),
            dims,
        })
    }

    pub fn qubit(a0: C64, a1: C64) -> Self {
        Self {
            amplitudes: Array1::from_vec(vec![a0, a1]),
            dims: vec![2],
        }
    }

    /// |0⟩
    pub fn zero() -> Self {
        Self::qubit(ONE, ZERO)
    }

    /// |1⟩
    pub fn one() -> Self {
        Self::qubit(ZERO, ONE)
    }

    /// |+⟩ = (|0⟩+|1⟩)/√2
    pub fn plus() -> Self {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self::qubit(h, h)
    }

    /// |−⟩ = (|0⟩−|1⟩)/√2
    pub fn minus() -> Self {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self::qubit(h, -h)
    }

    /// |Φ+⟩ = Σ_k |kk⟩ / √d on two subsystems of dimension `dim`.
    pub fn bell_phi_plus(dim: usize) -> Self {
        let mut amplitudes = vec![ZERO; dim * dim];
        let a = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
        for k in 0..dim {
            amplitudes[k * dim + k] = a;
        }
        Self {
            amplitudes: Array1::from_vec(amplitudes),
            dims: vec![dim, dim],
        }
    }

    /// |Ψ+⟩ = (|10⟩+|01⟩)/√2 on two qubits.
    pub fn bell_psi_plus() -> Self {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let mut amplitudes = vec![ZERO; 4];
        amplitudes[0b01] = h;
        amplitudes[0b10] = h;
        Self {
            amplitudes: Array1::from_vec(amplitudes),
            dims: vec![2, 2],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn amp(&self, index: usize) -> C64 {
        self.amplitudes[index]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= tol::NORM
    }

    pub fn normalized(&self) -> Result<Self, LinalgError> {
        let n = self.norm();
        if n <= 1e-300 {
            return Err(LinalgError::ZeroNorm(n));
        }
        Ok(Self {
            amplitudes: self.amplitudes.mapv(|a| a / n),
            dims: self.dims.clone(),
        })
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self {
            amplitudes: self.amplitudes.mapv(|a| a * factor),
            dims: self.dims.clone(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.dims != other.dims {
            return Err(LinalgError::DimensionMismatch {
                context: format!("vector add {:?} vs {:?}", self.dims, other.dims),
            });
        }
        Ok(Self {
            amplitudes: &self.amplitudes + &other.amplitudes,
            dims: self.dims.clone(),
        })
    }

    /// ⟨self|other⟩
    pub fn inner(&self, other: &Self) -> Result<C64, LinalgError> {
        if self.dims != other.dims {
            return Err(LinalgError::DimensionMismatch {
                context: format!("inner product {:?} vs {:?}", self.dims, other.dims),
            });
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// |⟨a|b⟩|² / (‖a‖²‖b‖²); 0 when either side is the zero vector.
    /// Global phase never affects the result.
    pub fn fidelity(&self, other: &Self) -> f64 {
        let na = self.norm_sqr();
        let nb = other.norm_sqr();
        if na <= 1e-300 || nb <= 1e-300 {
            return 0.0;
        }
        let ip = match self.inner(other) {
            Ok(v) => v,
            Err(_) => return 0.0,
        };
        ip.norm_sqr() / (na * nb)
    }

    /// Kronecker product; subsystem order is `self` first.
    pub fn tensor(&self, other: &Self) -> Self {
        let n = other.len();
        let mut amplitudes = vec![ZERO; self.len() * n];
        for (i, &a) in self.amplitudes.iter().enumerate() {
            for (j, &b) in other.amplitudes.iter().enumerate() {
                amplitudes[i * n + j] = a * b;
            }
        }
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self {
            amplitudes: Array1::from_vec(amplitudes),
            dims,
        }
    }

    /// Reorder subsystems: entry `k` of `perm` names the old position that
    /// becomes new position `k`.
    pub fn permute_subsystems(&self, perm: &[usize]) -> Result<Self, LinalgError> {
        check_permutation(perm, self.dims.len())?;
        let old_strides = strides(&self.dims);
        let new_dims: Vec<usize> = perm.iter().map(|&p| self.dims[p]).collect();
        let new_strides = strides(&new_dims);
        let mut amplitudes = vec![ZERO; self.len()];
        for (old_index, &a) in self.amplitudes.iter().enumerate() {
            let old_digits = digits(old_index, &self.dims, &old_strides);
            let mut new_index = 0;
            for (k, &p) in perm.iter().enumerate() {
                new_index += old_digits[p] * new_strides[k];
            }
            amplitudes[new_index] = a;
        }
        Ok(Self {
            amplitudes: Array1::from_vec(amplitudes),
            dims: new_dims,
        })
    }

    /// |v⟩⟨v| as an operator.
    pub fn projector(&self) -> Operator {
        let n = self.len();
        let mut entries = Array2::from_elem((n, n), ZERO);
        for i in 0..n {
            for j in 0..n {
                entries[(i, j)] = self.amplitudes[i] * self.amplitudes[j].conj();
            }
        }
        Operator {
            entries,
            dims: self.dims.clone(),
        }
    }
}

/// Dense complex square matrix over an ordered list of subsystems.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    entries: Array2<C64>,
    dims: Vec<usize>,
}

impl Operator {
    pub fn new(entries: Array2<C64>, dims: Vec<usize>) -> Result<Self, LinalgError> {
        let expected = check_dims(&dims)?;
        if entries.nrows() != expected || entries.ncols() != expected {
            return Err(LinalgError::NotSquare {
                rows: entries.nrows(),
                cols: entries.ncols(),
                expected,
            });
        }
        Ok(Self { entries, dims })
    }

    pub fn from_rows(rows: &[&[C64]], dims: Vec<usize>) -> Result<Self, LinalgError> {
        let n = rows.len();
        let mut entries = Array2::from_elem((n, n), ZERO);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(LinalgError::NotSquare {
                    rows: n,
                    cols: row.len(),
                    expected: n,
                });
            }
            for (j, &v) in row.iter().enumerate() {
                entries[(i, j)] = v;
            }
        }
        Self::new(entries, dims)
    }

    pub fn identity(dims: Vec<usize>) -> Result<Self, LinalgError> {
        let n = check_dims(&dims)?;
        Ok(Self {
            entries: Array2::eye(n),
            dims,
        })
    }

    fn qubit_gate(rows: [[C64; 2]; 2]) -> Self {
        let mut entries = Array2::from_elem((2, 2), ZERO);
        for i in 0..2 {
            for j in 0..2 {
                entries[(i, j)] = rows[i][j];
            }
        }
        Self {
            entries,
            dims: vec![2],
        }
    }

    pub fn pauli_x() -> Self {
        Self::qubit_gate([[ZERO, ONE], [ONE, ZERO]])
    }

    pub fn pauli_y() -> Self {
        let i = Complex64::new(0.0, 1.0);
        Self::qubit_gate([[ZERO, -i], [i, ZERO]])
    }

    pub fn pauli_z() -> Self {
        Self::qubit_gate([[ONE, ZERO], [ZERO, -ONE]])
    }

    pub fn hadamard() -> Self {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self::qubit_gate([[h, h], [h, -h]])
    }

    /// CNOT on (control, target), computational basis.
    pub fn cnot() -> Self {
        let mut entries = Array2::from_elem((4, 4), ZERO);
        entries[(0b00, 0b00)] = ONE;
        entries[(0b01, 0b01)] = ONE;
        entries[(0b10, 0b11)] = ONE;
        entries[(0b11, 0b10)] = ONE;
        Self {
            entries,
            dims: vec![2, 2],
        }
    }

    /// SWAP of two subsystems of equal dimension `dim`.
    pub fn swap_gate(dim: usize) -> Self {
        let n = dim * dim;
        let mut entries = Array2::from_elem((n, n), ZERO);
        for a in 0..dim {
            for b in 0..dim {
                entries[(b * dim + a, a * dim + b)] = ONE;
            }
        }
        Self {
            entries,
            dims: vec![dim, dim],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.entries
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.entries[(row, col)]
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.entries[(i, i)]).sum()
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim();
        let mut entries = Array2::from_elem((n, n), ZERO);
        for i in 0..n {
            for j in 0..n {
                entries[(i, j)] = self.entries[(j, i)].conj();
            }
        }
        Self {
            entries,
            dims: self.dims.clone(),
        }
    }

    pub fn mul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.dim() != other.dim() {
            return Err(LinalgError::DimensionMismatch {
                context: format!("matrix product {}x{}", self.dim(), other.dim()),
            });
        }
        Ok(Self {
            entries: self.entries.dot(&other.entries),
            dims: self.dims.clone(),
        })
    }

    pub fn apply(&self, vector: &AmplitudeVector) -> Result<AmplitudeVector, LinalgError> {
        if self.dim() != vector.len() {
            return Err(LinalgError::DimensionMismatch {
                context: format!("operator {} applied to vector {}", self.dim(), vector.len()),
            });
        }
        Ok(AmplitudeVector {
            amplitudes: self.entries.dot(&vector.amplitudes),
            dims: vector.dims.clone(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.dim() != other.dim() {
            return Err(LinalgError::DimensionMismatch {
                context: format!("matrix sum {}x{}", self.dim(), other.dim()),
            });
        }
        Ok(Self {
            entries: &self.entries + &other.entries,
            dims: self.dims.clone(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.dim() != other.dim() {
            return Err(LinalgError::DimensionMismatch {
                context: format!("matrix difference {}x{}", self.dim(), other.dim()),
            });
        }
        Ok(Self {
            entries: &self.entries - &other.entries,
            dims: self.dims.clone(),
        })
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self {
            entries: self.entries.mapv(|a| a * factor),
            dims: self.dims.clone(),
        }
    }

    /// Kronecker product; subsystem order is `self` first.
    pub fn tensor(&self, other: &Self) -> Self {
        let (n0, n1) = (self.dim(), other.dim());
        let mut entries = Array2::from_elem((n0 * n1, n0 * n1), ZERO);
        for i0 in 0..n0 {
            for j0 in 0..n0 {
                let a = self.entries[(i0, j0)];
                if a == ZERO {
                    continue;
                }
                for i1 in 0..n1 {
                    for j1 in 0..n1 {
                        entries[(i0 * n1 + i1, j0 * n1 + j1)] = a * other.entries[(i1, j1)];
                    }
                }
            }
        }
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self { entries, dims }
    }

    /// Trace out every subsystem not named in `keep` (treated as a set;
    /// the result keeps the original subsystem order). An empty `keep`
    /// yields the 1×1 full trace.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self, LinalgError> {
        let count = self.dims.len();
        let mut keep_sorted = keep.to_vec();
        keep_sorted.sort_unstable();
        for pair in keep_sorted.windows(2) {
            if pair[0] == pair[1] {
                return Err(LinalgError::DuplicateSubsystem { index: pair[0] });
            }
        }
        if let Some(&index) = keep_sorted.iter().find(|&&i| i >= count) {
            return Err(LinalgError::SubsystemOutOfRange { index, count });
        }
        let rest: Vec<usize> = (0..count).filter(|i| !keep_sorted.contains(i)).collect();
        let keep_dims: Vec<usize> = keep_sorted.iter().map(|&i| self.dims[i]).collect();
        let rest_dims: Vec<usize> = rest.iter().map(|&i| self.dims[i]).collect();
        let keep_total: usize = keep_dims.iter().product();
        let rest_total: usize = rest_dims.iter().product();

        let full_strides = strides(&self.dims);
        let keep_strides = strides(&keep_dims);
        let rest_strides = strides(&rest_dims);

        // full index = Σ keep-digit·stride + Σ rest-digit·stride
        let compose = |k: usize, t: usize| -> usize {
            let mut index = 0;
            for (pos, &w) in keep_sorted.iter().enumerate() {
                index += ((k / keep_strides[pos]) % keep_dims[pos]) * full_strides[w];
            }
            for (pos, &w) in rest.iter().enumerate() {
                index += ((t / rest_strides[pos]) % rest_dims[pos]) * full_strides[w];
            }
            index
        };

        let mut entries = Array2::from_elem((keep_total.max(1), keep_total.max(1)), ZERO);
        for i in 0..keep_total.max(1) {
            for j in 0..keep_total.max(1) {
                let mut sum = ZERO;
                for t in 0..rest_total {
                    sum += self.entries[(compose(i, t), compose(j, t))];
                }
                entries[(i, j)] = sum;
            }
        }
        Ok(Self {
            entries,
            dims: keep_dims,
        })
    }

    /// Embed a gate acting on the subsystems listed in `targets` (in the
    /// gate's own order) into the identity on all of `full_dims`.
    pub fn embed(&self, targets: &[usize], full_dims: &[usize]) -> Result<Self, LinalgError> {
        let count = full_dims.len();
        if targets.len() != self.dims.len() {
            return Err(LinalgError::DimensionMismatch {
                context: format!(
                    "gate on {} subsystems given {} targets",
                    self.dims.len(),
                    targets.len()
                ),
            });
        }
        let mut seen = vec![false; count];
        for (pos, &t) in targets.iter().enumerate() {
            if t >= count {
                return Err(LinalgError::SubsystemOutOfRange { index: t, count });
            }
            if seen[t] {
                return Err(LinalgError::DuplicateSubsystem { index: t });
            }
            seen[t] = true;
            if full_dims[t] != self.dims[pos] {
                return Err(LinalgError::DimensionMismatch {
                    context: format!(
                        "gate dimension {} does not fit wire {} of dimension {}",
                        self.dims[pos], t, full_dims[t]
                    ),
                });
            }
        }
        let total = check_dims(full_dims)?;
        let full_strides = strides(full_dims);
        let gate_strides = strides(&self.dims);
        let gate_dim = self.dim();

        let mut entries = Array2::from_elem((total, total), ZERO);
        for col in 0..total {
            let col_digits = digits(col, full_dims, &full_strides);
            let mut gate_in = 0;
            for (pos, &t) in targets.iter().enumerate() {
                gate_in += col_digits[t] * gate_strides[pos];
            }
            let base: usize = (0..count)
                .filter(|w| !targets.contains(w))
                .map(|w| col_digits[w] * full_strides[w])
                .sum();
            for gate_out in 0..gate_dim {
                let amp = self.entries[(gate_out, gate_in)];
                if amp == ZERO {
                    continue;
                }
                let mut row = base;
                for (pos, &t) in targets.iter().enumerate() {
                    row += ((gate_out / gate_strides[pos]) % self.dims[pos]) * full_strides[t];
                }
                entries[(row, col)] += amp;
            }
        }
        Ok(Self {
            entries,
            dims: full_dims.to_vec(),
        })
    }

    /// Reorder subsystems; see [`AmplitudeVector::permute_subsystems`].
    pub fn permute_subsystems(&self, perm: &[usize]) -> Result<Self, LinalgError> {
        check_permutation(perm, self.dims.len())?;
        let old_strides = strides(&self.dims);
        let new_dims: Vec<usize> = perm.iter().map(|&p| self.dims[p]).collect();
        let new_strides = strides(&new_dims);
        let n = self.dim();
        let map = |old_index: usize| -> usize {
            let old_digits = digits(old_index, &self.dims, &old_strides);
            perm.iter()
                .enumerate()
                .map(|(k, &p)| old_digits[p] * new_strides[k])
                .sum()
        };
        let mut entries = Array2::from_elem((n, n), ZERO);
        for i in 0..n {
            let ni = map(i);
            for j in 0..n {
                entries[(ni, map(j))] = self.entries[(i, j)];
            }
        }
        Ok(Self {
            entries,
            dims: new_dims,
        })
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.entries.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_unitary(&self, tolerance: f64) -> bool {
        let product = self.entries.dot(&self.adjoint().entries);
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                let expected = if i == j { ONE } else { ZERO };
                if (product[(i, j)] - expected).norm() > tolerance {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_hermitian(&self, tolerance: f64) -> bool {
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                if (self.entries[(i, j)] - self.entries[(j, i)].conj()).norm() > tolerance {
                    return false;
                }
            }
        }
        true
    }

    /// Hermitian within `tol::DENSITY`, unit trace within `tol::DENSITY`,
    /// eigenvalues ≥ −`tol::DENSITY`.
    pub fn is_density(&self) -> bool {
        if !self.is_hermitian(tol::DENSITY) {
            return false;
        }
        if (self.trace() - ONE).norm() > tol::DENSITY {
            return false;
        }
        match self.eigh() {
            Ok((values, _)) => values.iter().all(|&v| v >= -tol::DENSITY),
            Err(_) => false,
        }
    }

    /// Complete eigendecomposition, pairs sorted by descending |λ|
    /// (ties broken by real then imaginary part for determinism).
    /// Eigenvectors come back normalized. Non-convergence is a distinct
    /// error, never a silent wrong answer.
    pub fn eig(&self) -> Result<Vec<(C64, AmplitudeVector)>, LinalgError> {
        let (values, vectors) = self
            .entries
            .eig()
            .map_err(|e| LinalgError::EigFailed(e.to_string()))?;
        let mut pairs: Vec<(C64, AmplitudeVector)> = values
            .iter()
            .enumerate()
            .map(|(k, &value)| {
                let column = vectors.column(k).to_owned();
                let vector = AmplitudeVector::from_array(column, self.dims.clone());
                let vector = vector.normalized().unwrap_or(vector);
                (value, vector)
            })
            .collect();
        pairs.sort_by(|a, b| {
            b.0.norm()
                .partial_cmp(&a.0.norm())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(
                    b.0.re
                        .partial_cmp(&a.0.re)
                        .unwrap_or(std::cmp::Ordering::Equal),
                )
                .then(
                    b.0.im
                        .partial_cmp(&a.0.im)
                        .unwrap_or(std::cmp::Ordering::Equal),
                )
        });
        Ok(pairs)
    }

    /// Eigendecomposition of the Hermitian part, ascending real eigenvalues.
    pub fn eigh(&self) -> Result<(Vec<f64>, Vec<AmplitudeVector>), LinalgError> {
        let n = self.dim();
        let mut herm = Array2::from_elem((n, n), ZERO);
        for i in 0..n {
            for j in 0..n {
                herm[(i, j)] = (self.entries[(i, j)] + self.entries[(j, i)].conj()) * 0.5;
            }
        }
        let (values, vectors) = herm
            .eigh(UPLO::Lower)
            .map_err(|e| LinalgError::EigFailed(e.to_string()))?;
        // Depending on the memory layout handed to LAPACK, the returned
        // eigenvector matrix can come back conjugated (a transposed
        // Hermitian matrix is its conjugate). Detect by residual and fix.
        let residual_for = |conjugate: bool| -> f64 {
            let mut worst = 0.0f64;
            for (k, &value) in values.iter().enumerate() {
                for i in 0..n {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for j in 0..n {
                        let vj = if conjugate {
                            vectors[(j, k)].conj()
                        } else {
                            vectors[(j, k)]
                        };
                        acc += herm[(i, j)] * vj;
                    }
                    let vi = if conjugate {
                        vectors[(i, k)].conj()
                    } else {
                        vectors[(i, k)]
                    };
                    worst = worst.max((acc - vi * value).norm());
                }
            }
            worst
        };
        let conjugate = residual_for(false) > residual_for(true);
        let vecs = (0..n)
            .map(|k| {
                let column = if conjugate {
                    vectors.column(k).mapv(|c| c.conj())
                } else {
                    vectors.column(k).to_owned()
                };
                AmplitudeVector::from_array(column, self.dims.clone())
            })
            .collect();
        Ok((values.to_vec(), vecs))
    }
}

fn check_permutation(perm: &[usize], count: usize) -> Result<(), LinalgError> {
    if perm.len() != count {
        return Err(LinalgError::DimensionMismatch {
            context: format!("permutation of length {} on {} subsystems", perm.len(), count),
        });
    }
    let mut seen = vec![false; count];
    for &p in perm {
        if p >= count {
            return Err(LinalgError::SubsystemOutOfRange {
                index: p,
                count,
            });
        }
        if seen[p] {
            return Err(LinalgError::DuplicateSubsystem { index: p });
        }
        seen[p] = true;
    }
    Ok(())
}

/// Haar-random unitary via QR of a Ginibre matrix with the R-diagonal
/// phase fix.
pub fn haar_random_unitary<R: Rng>(dims: Vec<usize>, rng: &mut R) -> Result<Operator, LinalgError> {
    let n = check_dims(&dims)?;
    let mut m = Array2::from_elem((n, n), ZERO);
    for i in 0..n {
        for j in 0..n {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            m[(i, j)] = Complex64::new(re, im);
        }
    }
    // Gram-Schmidt columns, then fix phases so the "R" diagonal is positive.
    let mut q = m;
    for j in 0..n {
        for k in 0..j {
            let mut proj = ZERO;
            for i in 0..n {
                proj += q[(i, k)].conj() * q[(i, j)];
            }
            for i in 0..n {
                let sub = proj * q[(i, k)];
                q[(i, j)] -= sub;
            }
        }
        let norm: f64 = (0..n).map(|i| q[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if norm <= 1e-300 {
            return Err(LinalgError::ZeroNorm(norm));
        }
        for i in 0..n {
            q[(i, j)] /= norm;
        }
    }
    Operator::new(q, dims)
}

/// Uniformly random pure state of the given shape.
pub fn random_state<R: Rng>(dims: Vec<usize>, rng: &mut R) -> Result<AmplitudeVector, LinalgError> {
    let n = check_dims(&dims)?;
    let amplitudes: Vec<C64> = (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im)
        })
        .collect();
    AmplitudeVector::new(amplitudes, dims)?.normalized()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn tensor_of_basis_states_concatenates_labels() {
        let v = AmplitudeVector::zero().tensor(&AmplitudeVector::one());
        assert_eq!(v.dims(), &[2, 2]);
        let expected = [c(0.0), c(1.0), c(0.0), c(0.0)];
        for (i, &e) in expected.iter().enumerate() {
            assert_eq!(v.amp(i), e, "entry {i}");
        }
    }

    #[test]
    fn tensor_of_uniform_states_is_uniform() {
        let v = AmplitudeVector::plus().tensor(&AmplitudeVector::plus());
        for i in 0..4 {
            assert!((v.amp(i) - c(0.5)).norm() < 1e-15, "entry {i}");
        }
    }

    #[test]
    fn tensor_psi_plus_phi_plus_by_hand_expansion() {
        // Expand (|10⟩+|01⟩)(|00⟩+|11⟩)/2 by explicit enumeration and
        // compare against the library product. Wire order A1 A2 C1 C2.
        let v = AmplitudeVector::bell_psi_plus().tensor(&AmplitudeVector::bell_phi_plus(2));
        let mut expected = vec![C64::new(0.0, 0.0); 16];
        for (a1, a2) in [(1usize, 0usize), (0, 1)] {
            for k in 0..2usize {
                let index = (a1 << 3) | (a2 << 2) | (k << 1) | k;
                expected[index] = c(0.5);
            }
        }
        for label in ["1000", "1011", "0100", "0111"] {
            let index = usize::from_str_radix(label, 2).unwrap();
            assert!((expected[index] - c(0.5)).norm() < 1e-15);
        }
        for i in 0..16 {
            assert!((v.amp(i) - expected[i]).norm() < 1e-15, "entry {i}");
        }
    }

    #[test]
    fn partial_trace_of_traceless_factor_vanishes() {
        let xi = Operator::pauli_x().tensor(&Operator::identity(vec![2]).unwrap());
        let traced = xi.partial_trace(&[1]).unwrap();
        assert!(traced.max_abs_entry() < 1e-15);
    }

    #[test]
    fn partial_trace_of_bell_projector_is_maximally_mixed() {
        let rho = AmplitudeVector::bell_phi_plus(2).projector();
        let traced = rho.partial_trace(&[0]).unwrap();
        let expected = Operator::identity(vec![2]).unwrap().scaled(c(0.5));
        assert!(traced.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn partial_trace_of_swap_matches_brute_force() {
        // Oracle: Σ_k ⟨k|SWAP|k⟩ over the second system, summed entry by
        // entry without using partial_trace.
        let swap = Operator::swap_gate(2);
        let mut oracle = [[C64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    oracle[i][j] += swap.entry(i * 2 + k, j * 2 + k);
                }
            }
        }
        let traced = swap.partial_trace(&[0]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((traced.entry(i, j) - oracle[i][j]).norm() < 1e-15);
            }
        }
        let expected = Operator::identity(vec![2]).unwrap();
        assert!(traced.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn partial_trace_rejects_out_of_range_and_allows_empty_keep() {
        let op = Operator::identity(vec![2, 2]).unwrap();
        assert!(op.partial_trace(&[5]).is_err());
        let full = op.partial_trace(&[]).unwrap();
        assert_eq!(full.dim(), 1);
        assert!((full.entry(0, 0) - c(4.0)).norm() < 1e-15);
    }

    #[test]
    fn eig_of_pauli_z() {
        let pairs = Operator::pauli_z().eig().unwrap();
        assert!((pairs[0].0 - c(1.0)).norm() < 1e-12);
        assert!((pairs[1].0 - c(-1.0)).norm() < 1e-12);
        assert!(pairs[0].1.fidelity(&AmplitudeVector::zero()) > 1.0 - 1e-12);
        assert!(pairs[1].1.fidelity(&AmplitudeVector::one()) > 1.0 - 1e-12);
    }

    #[test]
    fn eig_of_plus_projector() {
        let pairs = AmplitudeVector::plus().projector().eig().unwrap();
        assert!((pairs[0].0 - c(1.0)).norm() < 1e-12);
        assert!(pairs[0].0.norm() > 1e-10 && pairs[1].0.norm() < 1e-10);
        assert!(pairs[0].1.fidelity(&AmplitudeVector::plus()) > 1.0 - 1e-12);
        assert!(pairs[1].1.fidelity(&AmplitudeVector::minus()) > 1.0 - 1e-12);
    }

    #[test]
    fn eig_of_identity_plus_x() {
        // Diagonalized by hand in the ± basis: (I+X)|±⟩ = (1±1)|±⟩.
        let m = Operator::identity(vec![2])
            .unwrap()
            .add(&Operator::pauli_x())
            .unwrap();
        let pairs = m.eig().unwrap();
        assert!((pairs[0].0 - c(2.0)).norm() < 1e-12);
        assert!(pairs[1].0.norm() < 1e-12);
        assert!(pairs[0].1.fidelity(&AmplitudeVector::plus()) > 1.0 - 1e-12);
        assert!(pairs[1].1.fidelity(&AmplitudeVector::minus()) > 1.0 - 1e-12);
    }

    #[test]
    fn bell_psi_plus_amplitudes() {
        let v = AmplitudeVector::bell_psi_plus();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v.amp(0b01) - c(h)).norm() < 1e-15);
        assert!((v.amp(0b10) - c(h)).norm() < 1e-15);
        assert_eq!(v.amp(0b00), C64::new(0.0, 0.0));
        assert_eq!(v.amp(0b11), C64::new(0.0, 0.0));
    }

    #[test]
    fn embed_places_gate_on_named_wires() {
        let x = Operator::pauli_x();
        let full = x.embed(&[1], &[2, 2]).unwrap();
        // X on wire 1 maps |00⟩→|01⟩ and |10⟩→|11⟩.
        assert!((full.entry(0b01, 0b00) - c(1.0)).norm() < 1e-15);
        assert!((full.entry(0b11, 0b10) - c(1.0)).norm() < 1e-15);
        let v = AmplitudeVector::basis_state(vec![2, 2], 0b00).unwrap();
        let out = full.apply(&v).unwrap();
        assert!((out.amp(0b01) - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn embed_with_reversed_targets_transposes_roles() {
        // CNOT embedded as (control=1, target=0) flips wire 0 when wire 1
        // is set.
        let full = Operator::cnot().embed(&[1, 0], &[2, 2]).unwrap();
        let v = AmplitudeVector::basis_state(vec![2, 2], 0b01).unwrap();
        let out = full.apply(&v).unwrap();
        assert!((out.amp(0b11) - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn permute_subsystems_roundtrip() {
        let v = AmplitudeVector::zero().tensor(&AmplitudeVector::plus());
        let swapped = v.permute_subsystems(&[1, 0]).unwrap();
        let back = swapped.permute_subsystems(&[1, 0]).unwrap();
        assert_eq!(v, back);
        assert!(swapped.fidelity(&AmplitudeVector::plus().tensor(&AmplitudeVector::zero())) > 1.0 - 1e-12);
    }

    #[test]
    fn haar_random_is_unitary() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        use rand::SeedableRng;
        for _ in 0..5 {
            let u = haar_random_unitary(vec![2, 2], &mut rng).unwrap();
            assert!(u.is_unitary(tol::UNITARITY));
        }
    }
}
