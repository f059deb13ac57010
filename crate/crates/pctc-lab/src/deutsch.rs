//! Deutsch's self-consistency semantics: the loop state is a density
//! matrix ρ with D(ρ) = Tr_CR[U (ρ_CR ⊗ ρ) U†] = ρ. Fixed points are
//! found two independent ways (Cesàro-averaged iteration and the
//! eigenvalue-1 eigenspace of the vectorized map) and the maximum-entropy
//! representative is selected, following Deutsch's own disambiguation
//! rule.

use ndarray::Array2;
use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{AmplitudeVector, LinalgError, Operator, C64};
use crate::tol;

#[derive(Debug, Error)]
pub enum DeutschError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("interaction unitary has dims {u:?}, incompatible with CR {cr:?} ⊗ loop {lp:?}")]
    DimMismatch {
        u: Vec<usize>,
        cr: Vec<usize>,
        lp: Vec<usize>,
    },
    #[error("operator is not a valid density matrix: {0}")]
    NotDensity(String),
    #[error("interaction operator is not unitary")]
    NotUnitary,
    #[error("no eigenvalue-1 eigenspace found (closest |λ−1| is {0:e}); not trace-preserving?")]
    NoFixedSpace(f64),
}

/// A fixed point of the Deutsch map with convergence diagnostics.
#[derive(Debug, Clone)]
pub struct DeutschSolution {
    /// Maximum-entropy representative of the fixed-point set found.
    pub fixed_state: Operator,
    /// Trace norm of D(ρ) − ρ for the reported state.
    pub residual: f64,
    /// Iterations the averaged fixed-point iteration used.
    pub iterations: usize,
    /// Dimension of the eigenvalue-1 eigenspace of the vectorized map.
    pub multiplicity: usize,
    /// The reported state is the maximum-entropy representative.
    pub selected: bool,
    /// False when the iteration hit its cap and the spectral method was
    /// used alone.
    pub iteration_converged: bool,
    /// Trace distance between the iterative and spectral answers, present
    /// when the fixed point is unique.
    pub agreement: Option<f64>,
}

fn check_density(op: &Operator, what: &str) -> Result<(), DeutschError> {
    if !op.is_density() {
        return Err(DeutschError::NotDensity(what.to_string()));
    }
    Ok(())
}

/// Kraus operators of ρ ↦ Tr_CR[U (ρ_CR ⊗ ρ) U†] on the loop space.
fn kraus_operators(
    unitary: &Operator,
    rho_cr: &Operator,
    loop_dim: usize,
) -> Result<Vec<Array2<C64>>, DeutschError> {
    let cr_dim = rho_cr.dim();
    let (values, vectors) = rho_cr.eigh()?;
    let mut kraus = Vec::new();
    for (a, &p) in values.iter().enumerate() {
        if p < tol::DENSITY {
            continue;
        }
        let weight = p.max(0.0).sqrt();
        let basis_vec = &vectors[a];
        for k in 0..cr_dim {
            let mut m = Array2::from_elem((loop_dim, loop_dim), Complex64::new(0.0, 0.0));
            for i in 0..loop_dim {
                for j in 0..loop_dim {
                    // ⟨k, i| U |a, j⟩ with |a⟩ the CR eigenvector
                    let mut amp = Complex64::new(0.0, 0.0);
                    for c in 0..cr_dim {
                        amp += unitary.entry(k * loop_dim + i, c * loop_dim + j) * basis_vec.amp(c);
                    }
                    m[(i, j)] = amp * weight;
                }
            }
            kraus.push(m);
        }
    }
    Ok(kraus)
}

fn apply_kraus(kraus: &[Array2<C64>], rho: &Array2<C64>) -> Array2<C64> {
    let n = rho.nrows();
    let mut out = Array2::from_elem((n, n), Complex64::new(0.0, 0.0));
    for k in kraus {
        let t = k.dot(rho);
        for i in 0..n {
            for j in 0..n {
                let mut sum = Complex64::new(0.0, 0.0);
                for l in 0..n {
                    sum += t[(i, l)] * k[(j, l)].conj();
                }
                out[(i, j)] += sum;
            }
        }
    }
    out
}

fn split_dims(unitary: &Operator, cr_dim: usize) -> Result<usize, DeutschError> {
    let total = unitary.dim();
    if total % cr_dim != 0 || total / cr_dim < 2 {
        return Err(DeutschError::DimMismatch {
            u: unitary.dims().to_vec(),
            cr: vec![cr_dim],
            lp: vec![],
        });
    }
    Ok(total / cr_dim)
}

/// D(ρ) = Tr_CR[U (ρ_CR ⊗ ρ) U†]. `unitary` acts on (CR, loop) with CR
/// as the leading subsystems.
pub fn deutsch_map(
    unitary: &Operator,
    rho_cr: &Operator,
    rho_loop: &Operator,
) -> Result<Operator, DeutschError> {
    if !unitary.is_unitary(tol::UNITARITY) {
        return Err(DeutschError::NotUnitary);
    }
    check_density(rho_cr, "rho_cr")?;
    check_density(rho_loop, "rho_loop")?;
    let loop_dim = split_dims(unitary, rho_cr.dim())?;
    if loop_dim != rho_loop.dim() {
        return Err(DeutschError::DimMismatch {
            u: unitary.dims().to_vec(),
            cr: rho_cr.dims().to_vec(),
            lp: rho_loop.dims().to_vec(),
        });
    }
    let kraus = kraus_operators(unitary, rho_cr, loop_dim)?;
    let out = apply_kraus(&kraus, rho_loop.entries());
    Ok(Operator::new(out, rho_loop.dims().to_vec())?)
}

/// Σ |eigenvalues| of a Hermitian operator.
pub fn trace_norm(op: &Operator) -> Result<f64, DeutschError> {
    let (values, _) = op.eigh()?;
    Ok(values.iter().map(|v| v.abs()).sum())
}

/// Half the trace norm of a − b.
pub fn trace_distance(a: &Operator, b: &Operator) -> Result<f64, DeutschError> {
    Ok(0.5 * trace_norm(&a.sub(b).map_err(LinalgError::from)?)?)
}

/// −Tr[ρ log ρ] in nats.
pub fn von_neumann_entropy(rho: &Operator) -> Result<f64, DeutschError> {
    let (values, _) = rho.eigh()?;
    Ok(values
        .iter()
        .filter(|&&v| v > 1e-15)
        .map(|&v| -v * v.ln())
        .sum())
}

/// Vectorized superoperator: row-major vec(ρ)[i·d+j] = ρ_ij, so
/// S[(i,j),(k,l)] = Σ_m K_m[i,k] · conj(K_m[j,l]).
fn superoperator(kraus: &[Array2<C64>], dim: usize) -> Array2<C64> {
    let n = dim * dim;
    let mut s = Array2::from_elem((n, n), Complex64::new(0.0, 0.0));
    for m in kraus {
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    for l in 0..dim {
                        s[(i * dim + j, k * dim + l)] += m[(i, k)] * m[(j, l)].conj();
                    }
                }
            }
        }
    }
    s
}

fn devectorize(v: &AmplitudeVector, dim: usize) -> Array2<C64> {
    let mut m = Array2::from_elem((dim, dim), Complex64::new(0.0, 0.0));
    for i in 0..dim {
        for j in 0..dim {
            m[(i, j)] = v.amp(i * dim + j);
        }
    }
    m
}

fn hs_inner(a: &Array2<C64>, b: &Array2<C64>) -> C64 {
    let mut sum = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            sum += a[(i, j)].conj() * b[(i, j)];
        }
    }
    sum
}

fn axpy(target: &mut Array2<C64>, coeff: C64, source: &Array2<C64>) {
    for i in 0..target.nrows() {
        for j in 0..target.ncols() {
            let add = coeff * source[(i, j)];
            target[(i, j)] += add;
        }
    }
}

/// Orthonormal Hermitian basis of the real span of the given matrices
/// under the Hilbert-Schmidt inner product.
fn hermitian_basis(raw: &[Array2<C64>]) -> Vec<Array2<C64>> {
    let mut basis: Vec<Array2<C64>> = Vec::new();
    let push_candidate = |candidate: Array2<C64>, basis: &mut Vec<Array2<C64>>| {
        let mut v = candidate;
        for b in basis.iter() {
            let coeff = hs_inner(b, &v);
            axpy(&mut v, -coeff, b);
        }
        let norm = hs_inner(&v, &v).re.max(0.0).sqrt();
        if norm > 1e-10 {
            v.mapv_inplace(|x| x / norm);
            basis.push(v);
        }
    };
    for m in raw {
        let n = m.nrows();
        let mut herm = Array2::from_elem((n, n), Complex64::new(0.0, 0.0));
        let mut skew = Array2::from_elem((n, n), Complex64::new(0.0, 0.0));
        for i in 0..n {
            for j in 0..n {
                herm[(i, j)] = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                skew[(i, j)] = (m[(i, j)] - m[(j, i)].conj()) * Complex64::new(0.0, 0.5);
            }
        }
        push_candidate(herm, &mut basis);
        push_candidate(skew, &mut basis);
    }
    basis
}

fn project_onto_span(m: &Array2<C64>, basis: &[Array2<C64>]) -> Array2<C64> {
    let n = m.nrows();
    let mut out = Array2::from_elem((n, n), Complex64::new(0.0, 0.0));
    for b in basis {
        let coeff = hs_inner(b, m);
        axpy(&mut out, coeff, b);
    }
    out
}

/// Clip negative eigenvalues and renormalize the trace.
fn clip_to_density(m: &Array2<C64>, dims: &[usize]) -> Result<Operator, DeutschError> {
    let op = Operator::new(m.clone(), dims.to_vec())?;
    let (values, vectors) = op.eigh()?;
    let n = m.nrows();
    let mut out = Array2::from_elem((n, n), Complex64::new(0.0, 0.0));
    let mut total = 0.0;
    for (value, vector) in values.iter().zip(&vectors) {
        let v = value.max(0.0);
        if v == 0.0 {
            continue;
        }
        total += v;
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += Complex64::new(v, 0.0) * vector.amp(i) * vector.amp(j).conj();
            }
        }
    }
    if total <= 1e-300 {
        return Err(DeutschError::NotDensity("clipped state has zero trace".into()));
    }
    out.mapv_inplace(|x| x / total);
    Ok(Operator::new(out, dims.to_vec())?)
}

/// Find ρ with D(ρ) = ρ. Runs (a) Cesàro-averaged iteration from the
/// maximally mixed state and (b) the spectral method on the vectorized
/// map; estimates the fixed-point multiplicity from the eigenvalue-1
/// eigenspace and selects the maximum-entropy representative by projected
/// gradient ascent over the fixed-point set. If the iteration fails to
/// settle within the cap, the spectral answer is used and the solution is
/// flagged.
pub fn fixed_points(unitary: &Operator, rho_cr: &Operator) -> Result<DeutschSolution, DeutschError> {
    if !unitary.is_unitary(tol::UNITARITY) {
        return Err(DeutschError::NotUnitary);
    }
    check_density(rho_cr, "rho_cr")?;
    let loop_dim = split_dims(unitary, rho_cr.dim())?;
    let loop_dims = vec![loop_dim];
    let kraus = kraus_operators(unitary, rho_cr, loop_dim)?;

    // (a) averaged iteration from 1/d: ρ ← (ρ + D(ρ))/2. Plain iteration
    // cycles on unitary-conjugation maps; averaging each iterate with its
    // image damps the cycles and still converges geometrically (a plain
    // running mean would close the gap only like 1/n and could never meet
    // the residual bound within the cap).
    let mut average = Array2::eye(loop_dim).mapv(|x: f64| Complex64::new(x / loop_dim as f64, 0.0));
    let mut iterations = 0usize;
    let mut iteration_converged = false;
    for n in 1..=tol::DEUTSCH_ITERATION_CAP {
        let mapped = apply_kraus(&kraus, &average);
        let diff = Operator::new(&mapped - &average, loop_dims.clone())?;
        iterations = n;
        let residual = trace_norm(&diff)?;
        for i in 0..loop_dim {
            for j in 0..loop_dim {
                average[(i, j)] = (average[(i, j)] + mapped[(i, j)]) * 0.5;
            }
        }
        if residual <= tol::DEUTSCH_RESIDUAL {
            iteration_converged = true;
            break;
        }
    }
    let iterate_state = clip_to_density(&average, &loop_dims)?;

    // (b) spectral method on the vectorized map
    let s = superoperator(&kraus, loop_dim);
    let s_op = Operator::new(s, vec![loop_dim, loop_dim])?;
    let pairs = s_op.eig()?;
    let fixed_raw: Vec<Array2<C64>> = pairs
        .iter()
        .filter(|(value, _)| (value - Complex64::new(1.0, 0.0)).norm() < tol::EIGENVALUE_ONE)
        .map(|(_, vector)| devectorize(vector, loop_dim))
        .collect();
    if fixed_raw.is_empty() {
        let gap = pairs
            .iter()
            .map(|(value, _)| (value - Complex64::new(1.0, 0.0)).norm())
            .fold(f64::INFINITY, f64::min);
        return Err(DeutschError::NoFixedSpace(gap));
    }
    let multiplicity = fixed_raw.len();
    let basis = hermitian_basis(&fixed_raw);

    // base point inside the fixed span
    let base = if iteration_converged {
        clip_to_density(&project_onto_span(iterate_state.entries(), &basis), &loop_dims)?
    } else {
        let projected = project_onto_span(
            &Array2::eye(loop_dim).mapv(|x: f64| Complex64::new(x / loop_dim as f64, 0.0)),
            &basis,
        );
        clip_to_density(&projected, &loop_dims)?
    };

    let selected_state = max_entropy_ascent(&base, &basis, &loop_dims)?;

    let agreement = if multiplicity == 1 {
        Some(trace_distance(&iterate_state, &selected_state)?)
    } else {
        None
    };

    let mapped = apply_kraus(&kraus, selected_state.entries());
    let residual = trace_norm(&Operator::new(
        &mapped - selected_state.entries(),
        loop_dims.clone(),
    )?)?;

    Ok(DeutschSolution {
        fixed_state: selected_state,
        residual,
        iterations,
        multiplicity,
        selected: true,
        iteration_converged,
        agreement,
    })
}

/// Projected gradient ascent of the von Neumann entropy over the affine
/// slice {ρ ∈ span(basis), Tr ρ = 1}, staying inside the density cone.
fn max_entropy_ascent(
    base: &Operator,
    basis: &[Array2<C64>],
    loop_dims: &[usize],
) -> Result<Operator, DeutschError> {
    let n = base.dim();
    let identity = Array2::eye(n).mapv(|x: f64| Complex64::new(x, 0.0));

    // tangent directions: span elements orthogonal to the span's trace
    // direction (so steps preserve Tr ρ = 1)
    let trace_dir = project_onto_span(&identity, basis);
    let trace_norm_sq = hs_inner(&trace_dir, &trace_dir).re;
    let mut tangent: Vec<Array2<C64>> = Vec::new();
    for b in basis {
        let mut t = b.clone();
        if trace_norm_sq > 1e-20 {
            let coeff = hs_inner(&trace_dir, b) / trace_norm_sq;
            axpy(&mut t, -coeff, &trace_dir);
        }
        for prev in &tangent {
            let coeff = hs_inner(prev, &t);
            axpy(&mut t, -coeff, prev);
        }
        let norm = hs_inner(&t, &t).re.max(0.0).sqrt();
        if norm > 1e-9 {
            t.mapv_inplace(|x| x / norm);
            tangent.push(t);
        }
    }
    if tangent.is_empty() {
        return Ok(base.clone());
    }

    let mut rho = base.clone();
    let mut entropy = von_neumann_entropy(&rho)?;
    for _ in 0..500 {
        // ∇S(ρ) = −(log ρ + 1), projected onto the tangent space
        let (values, vectors) = rho.eigh()?;
        let mut grad = Array2::from_elem((n, n), Complex64::new(0.0, 0.0));
        for (value, vector) in values.iter().zip(&vectors) {
            let v = value.max(1e-12);
            let g = -(v.ln() + 1.0);
            for i in 0..n {
                for j in 0..n {
                    grad[(i, j)] += Complex64::new(g, 0.0) * vector.amp(i) * vector.amp(j).conj();
                }
            }
        }
        let mut direction = Array2::from_elem((n, n), Complex64::new(0.0, 0.0));
        let mut grad_norm_sq = 0.0f64;
        for t in &tangent {
            let coeff = hs_inner(t, &grad).re;
            grad_norm_sq += coeff * coeff;
            axpy(&mut direction, Complex64::new(coeff, 0.0), t);
        }
        if grad_norm_sq.sqrt() <= tol::SOLVER_AGREEMENT {
            break;
        }
        let mut step = 0.5;
        let mut advanced = false;
        while step > 1e-12 {
            let mut candidate_entries = rho.entries().clone();
            axpy(&mut candidate_entries, Complex64::new(step, 0.0), &direction);
            let candidate = Operator::new(candidate_entries, loop_dims.to_vec())?;
            let (vals, _) = candidate.eigh()?;
            if vals.iter().all(|&v| v >= -1e-12) {
                let cand_entropy = von_neumann_entropy(&candidate)?;
                if cand_entropy > entropy + 1e-14 {
                    rho = clip_to_density(candidate.entries(), loop_dims)?;
                    entropy = cand_entropy;
                    advanced = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !advanced {
            break;
        }
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn qubit_density(entries: [[f64; 2]; 2]) -> Operator {
        let mut m = Array2::from_elem((2, 2), Complex64::new(0.0, 0.0));
        for i in 0..2 {
            for j in 0..2 {
                m[(i, j)] = Complex64::new(entries[i][j], 0.0);
            }
        }
        Operator::new(m, vec![2]).unwrap()
    }

    fn r(x: f64) -> C64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn identity_interaction_fixes_everything() {
        let u = Operator::identity(vec![2, 2]).unwrap();
        let cr = qubit_density([[1.0, 0.0], [0.0, 0.0]]);
        let rho = qubit_density([[0.7, 0.1], [0.1, 0.3]]);
        let out = deutsch_map(&u, &cr, &rho).unwrap();
        assert!(out.max_abs_diff(&rho) < 1e-12);

        let solution = fixed_points(&u, &cr).unwrap();
        assert_eq!(solution.multiplicity, 4);
        let mixed = Operator::identity(vec![2]).unwrap().scaled(r(0.5));
        assert!(trace_distance(&solution.fixed_state, &mixed).unwrap() < 1e-6);
        assert!(solution.residual <= tol::DEUTSCH_RESIDUAL);
    }

    #[test]
    fn x_conjugation_fixes_plus_projector_and_selects_mixed() {
        // U = 1_CR ⊗ X: D(ρ) = XρX and |+⟩⟨+| is fixed.
        let u = Operator::identity(vec![2]).unwrap().tensor(&Operator::pauli_x());
        let cr = qubit_density([[1.0, 0.0], [0.0, 0.0]]);
        let plus = AmplitudeVector::plus().projector();
        let out = deutsch_map(&u, &cr, &plus).unwrap();
        assert!(out.max_abs_diff(&plus) < 1e-12);

        // fixed set spans {1, X}: multiplicity 2, max-entropy pick 1/2
        let solution = fixed_points(&u, &cr).unwrap();
        assert_eq!(solution.multiplicity, 2);
        let mixed = Operator::identity(vec![2]).unwrap().scaled(r(0.5));
        assert!(trace_distance(&solution.fixed_state, &mixed).unwrap() < 1e-6);
    }

    #[test]
    fn swap_replaces_the_loop_state() {
        // Brute force: D(ρ) = |0⟩⟨0| for every ρ when U = SWAP and
        // ρ_CR = |0⟩⟨0|.
        let u = Operator::swap_gate(2);
        let cr = qubit_density([[1.0, 0.0], [0.0, 0.0]]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..8 {
            let state = crate::linalg::random_state(vec![2], &mut rng).unwrap();
            let out = deutsch_map(&u, &cr, &state.projector()).unwrap();
            assert!(out.max_abs_diff(&cr) < 1e-12);
        }
        let solution = fixed_points(&u, &cr).unwrap();
        assert_eq!(solution.multiplicity, 1);
        assert!(trace_distance(&solution.fixed_state, &cr).unwrap() < 1e-8);
        assert!(solution.agreement.unwrap() <= tol::SOLVER_AGREEMENT);
    }

    #[test]
    fn map_preserves_trace_and_positivity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let u = crate::linalg::haar_random_unitary(vec![2, 2], &mut rng).unwrap();
            let cr_state = crate::linalg::random_state(vec![2], &mut rng).unwrap();
            let loop_state = crate::linalg::random_state(vec![2], &mut rng).unwrap();
            let out = deutsch_map(&u, &cr_state.projector(), &loop_state.projector()).unwrap();
            assert!((out.trace() - r(1.0)).norm() < tol::TRACE);
            let (values, _) = out.eigh().unwrap();
            assert!(values.iter().all(|&v| v >= -tol::DENSITY));
        }
    }

    #[test]
    fn every_unitary_has_a_fixed_point() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let u = crate::linalg::haar_random_unitary(vec![2, 2], &mut rng).unwrap();
            let cr_state = crate::linalg::random_state(vec![2], &mut rng).unwrap();
            let solution = fixed_points(&u, &cr_state.projector()).unwrap();
            assert!(solution.multiplicity >= 1);
            assert!(
                solution.residual <= tol::DEUTSCH_RESIDUAL,
                "residual {:e}",
                solution.residual
            );
            assert!(solution.fixed_state.is_density());
        }
    }
}
