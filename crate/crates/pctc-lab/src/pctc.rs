//! P-CTC semantics: run a circuit with explicit |Φ+⟩ preparation and
//! projection, derive the equivalent traced effective operator, detect
//! paradoxes, and extract the induced loop map on a designated wire.
//!
//! Normalization convention: the explicit path applies the bare projector
//! ⟨Φ+| with no factor of the loop dimension, so the postselection weight
//! stays interpretable as a probability contribution (≤ 1 for normalized
//! inputs). The traced effective operator therefore equals d × the
//! explicit path, and the identity check below carries that d.

use std::collections::BTreeMap;

use ndarray::Array2;
use ndarray_linalg::SVD;
use num_complex::Complex64;
use thiserror::Error;

use crate::circuit::{Circuit, CircuitError, WireRole};
use crate::linalg::{digits, strides, AmplitudeVector, LinalgError, Operator, C64};
use crate::tol;

#[derive(Debug, Error)]
pub enum PctcError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("override targets unknown wire {0:?}")]
    UnknownOverride(String),
    #[error("override on wire {0:?} which is not a chronology wire")]
    OverrideNotChronology(String),
    #[error("probe wire {0:?} is not a chronology wire")]
    ProbeNotChronology(String),
    #[error("probe wire {0:?} does not survive postselection")]
    ProbeConsumed(String),
    #[error("operator is not unitary (required here)")]
    NotUnitary,
    #[error(
        "entangled residue: the non-probe output does not factor out \
         (singular values {first:.3e}, {second:.3e}); classification withheld"
    )]
    EntangledResidue { first: f64, second: f64 },
}

/// Outcome of one postselected run.
#[derive(Debug, Clone)]
pub struct PctcOutcome {
    /// Squared norm of the postselected amplitude vector.
    pub weight: f64,
    /// Normalized surviving state; present exactly when no paradox.
    pub state: Option<AmplitudeVector>,
    /// True when the weight is at or below the zero threshold.
    pub paradox: bool,
    /// Ids of the wires the state lives on, in wire order.
    pub surviving_wires: Vec<String>,
}

/// Contract ⟨Φ+| on the wire pair `(a, b)` of `vector`, dropping those
/// subsystems. `wire_map` tracks which original wire each remaining
/// subsystem belongs to and is updated in place.
fn project_phi_plus(
    vector: &AmplitudeVector,
    wire_map: &mut Vec<usize>,
    a: usize,
    b: usize,
) -> Result<AmplitudeVector, PctcError> {
    let pos_a = wire_map.iter().position(|&w| w == a).expect("wire present");
    let pos_b = wire_map.iter().position(|&w| w == b).expect("wire present");
    let dims = vector.dims().to_vec();
    let d = dims[pos_a];
    let st = strides(&dims);
    let rest: Vec<usize> = (0..dims.len()).filter(|&p| p != pos_a && p != pos_b).collect();
    let rest_dims: Vec<usize> = rest.iter().map(|&p| dims[p]).collect();
    let rest_total: usize = rest_dims.iter().product();
    let rest_strides = strides(&rest_dims);

    let scale = 1.0 / (d as f64).sqrt();
    let mut out = vec![Complex64::new(0.0, 0.0); rest_total.max(1)];
    for (r, slot) in out.iter_mut().enumerate() {
        let mut base = 0usize;
        for (pos, &p) in rest.iter().enumerate() {
            base += ((r / rest_strides[pos]) % rest_dims[pos]) * st[p];
        }
        let mut sum = Complex64::new(0.0, 0.0);
        for k in 0..d {
            sum += vector.amp(base + k * st[pos_a] + k * st[pos_b]);
        }
        *slot = sum * scale;
    }
    *wire_map = wire_map
        .iter()
        .copied()
        .filter(|&w| w != a && w != b)
        .collect();
    Ok(AmplitudeVector::new(out, rest_dims).map_err(LinalgError::from)?)
}

fn resolve_overrides(
    circuit: &Circuit,
    overrides: &BTreeMap<String, AmplitudeVector>,
) -> Result<BTreeMap<usize, AmplitudeVector>, PctcError> {
    let mut resolved = BTreeMap::new();
    for (id, state) in overrides {
        let index = circuit
            .wire_index(id)
            .ok_or_else(|| PctcError::UnknownOverride(id.clone()))?;
        if circuit.wires[index].role != WireRole::Chronology {
            return Err(PctcError::OverrideNotChronology(id.clone()));
        }
        resolved.insert(index, state.clone());
    }
    Ok(resolved)
}

/// The unnormalized postselected amplitude vector together with the
/// indices of the surviving wires. This is the raw quantity the loop-map
/// extraction needs; [`run_postselected`] wraps it.
pub fn postselected_amplitude(
    circuit: &Circuit,
    overrides: &BTreeMap<String, AmplitudeVector>,
) -> Result<(AmplitudeVector, Vec<usize>), PctcError> {
    circuit.ensure_valid()?;
    let resolved = resolve_overrides(circuit, overrides)?;
    let mut state = circuit.initial_state(&resolved)?;
    let unitary = circuit.compile_unitary()?;
    state = unitary.apply(&state).map_err(LinalgError::from)?;
    let mut wire_map: Vec<usize> = (0..circuit.wires.len()).collect();
    for ps in &circuit.postselections {
        state = project_phi_plus(&state, &mut wire_map, ps.pair.0, ps.pair.1)?;
    }
    Ok((state, wire_map))
}

/// Run the circuit under P-CTC semantics with the given epsilon for the
/// paradox threshold.
pub fn run_postselected_with_epsilon(
    circuit: &Circuit,
    overrides: &BTreeMap<String, AmplitudeVector>,
    epsilon: f64,
) -> Result<PctcOutcome, PctcError> {
    let (amplitude, wire_map) = postselected_amplitude(circuit, overrides)?;
    let weight = amplitude.norm_sqr();
    let paradox = weight <= epsilon;
    let state = if paradox {
        None
    } else {
        Some(amplitude.normalized().map_err(LinalgError::from)?)
    };
    Ok(PctcOutcome {
        weight,
        state,
        paradox,
        surviving_wires: wire_map
            .iter()
            .map(|&w| circuit.wires[w].id.clone())
            .collect(),
    })
}

/// Run the circuit under P-CTC semantics: build the full initial vector,
/// apply the compiled unitary, contract ⟨Φ+| on every postselected pair.
/// A paradox (weight ≤ 1e-12) is a normal outcome, never an error.
pub fn run_postselected(
    circuit: &Circuit,
    overrides: &BTreeMap<String, AmplitudeVector>,
) -> Result<PctcOutcome, PctcError> {
    run_postselected_with_epsilon(circuit, overrides, tol::ZERO_WEIGHT)
}

/// Tr over the CTC subsystems of `unitary`: the (generally non-unitary)
/// operator governing the chronology-respecting wires. No normalization
/// is applied.
pub fn effective_operator(unitary: &Operator, ctc: &[usize]) -> Result<Operator, PctcError> {
    if !unitary.is_unitary(tol::UNITARITY) {
        return Err(PctcError::NotUnitary);
    }
    let keep: Vec<usize> = (0..unitary.dims().len())
        .filter(|i| !ctc.contains(i))
        .collect();
    for &i in ctc {
        if i >= unitary.dims().len() {
            return Err(PctcError::Linalg(LinalgError::SubsystemOutOfRange {
                index: i,
                count: unitary.dims().len(),
            }));
        }
    }
    Ok(unitary.partial_trace(&keep)?)
}

/// Internal oracle tying the two semantics paths together: the max-norm
/// difference between d × (explicit |Φ+⟩ prepare/project path) and the
/// traced effective operator, both applied to a full basis of chronology
/// inputs. Contract: below 1e-10 for every unitary.
pub fn teleportation_identity_check(
    unitary: &Operator,
    ctc: &[usize],
) -> Result<f64, PctcError> {
    if !unitary.is_unitary(tol::UNITARITY) {
        return Err(PctcError::NotUnitary);
    }
    let dims = unitary.dims().to_vec();
    let count = dims.len();
    let chron: Vec<usize> = (0..count).filter(|i| !ctc.contains(i)).collect();
    let loop_dim: usize = ctc.iter().map(|&i| dims[i]).product();
    let chron_dims: Vec<usize> = chron.iter().map(|&i| dims[i]).collect();
    let chron_total: usize = chron_dims.iter().product::<usize>().max(1);
    let chron_strides = strides(&chron_dims);

    // extended space: original wires plus one mirror subsystem of the
    // full loop dimension
    let mut ext_dims = dims.clone();
    ext_dims.push(loop_dim);
    let ext_strides = strides(&ext_dims);
    let ctc_dims: Vec<usize> = ctc.iter().map(|&i| dims[i]).collect();
    let ctc_strides = strides(&ctc_dims);
    let embedded = unitary.embed(&(0..count).collect::<Vec<_>>(), &ext_dims)?;

    let traced = effective_operator(unitary, ctc)?;
    let scale = 1.0 / (loop_dim as f64).sqrt();
    let mut worst = 0.0f64;

    for k in 0..chron_total {
        // initial vector: chronology basis |k⟩ ⊗ |Φ+⟩ on (loop, mirror)
        let ext_total: usize = ext_dims.iter().product();
        let mut init = vec![Complex64::new(0.0, 0.0); ext_total];
        let chron_digits = digits(k, &chron_dims, &chron_strides);
        let mut base = 0usize;
        for (pos, &w) in chron.iter().enumerate() {
            base += chron_digits[pos] * ext_strides[w];
        }
        for m in 0..loop_dim {
            let loop_digits = digits(m, &ctc_dims, &ctc_strides);
            let mut index = base + m * ext_strides[count];
            for (pos, &w) in ctc.iter().enumerate() {
                index += loop_digits[pos] * ext_strides[w];
            }
            init[index] = Complex64::new(scale, 0.0);
        }
        let evolved = embedded
            .apply(&AmplitudeVector::new(init, ext_dims.clone()).map_err(LinalgError::from)?)
            .map_err(LinalgError::from)?;

        // contract ⟨Φ+| on (loop wires, mirror), read out the chronology
        for out_k in 0..chron_total {
            let out_digits = digits(out_k, &chron_dims, &chron_strides);
            let mut out_base = 0usize;
            for (pos, &w) in chron.iter().enumerate() {
                out_base += out_digits[pos] * ext_strides[w];
            }
            let mut explicit = Complex64::new(0.0, 0.0);
            for m in 0..loop_dim {
                let loop_digits = digits(m, &ctc_dims, &ctc_strides);
                let mut index = out_base + m * ext_strides[count];
                for (pos, &w) in ctc.iter().enumerate() {
                    index += loop_digits[pos] * ext_strides[w];
                }
                explicit += evolved.amp(index);
            }
            explicit *= scale;
            // partial_trace keeps original wire order, and the chronology
            // wires are already ascending, so coordinates agree directly.
            let traced_entry = traced.entry(out_k, k);
            let diff = (explicit * loop_dim as f64 - traced_entry).norm();
            worst = worst.max(diff);
        }
    }
    Ok(worst)
}

/// Classification of the induced loop map on a probe wire.
#[derive(Debug, Clone)]
pub enum LoopClassification {
    /// The loop map is the zero matrix: the postselection annihilates
    /// every probe input.
    Paradox,
    /// Exactly one eigenvalue survives: a single state can ride the loop.
    Tautology { fixed_state: AmplitudeVector },
    /// The loop supports several independent fixed states.
    Consistent { count: usize },
}

impl LoopClassification {
    pub fn label(&self) -> &'static str {
        match self {
            LoopClassification::Paradox => "paradox",
            LoopClassification::Tautology { .. } => "tautology",
            LoopClassification::Consistent { .. } => "consistent",
        }
    }
}

/// The induced loop map on a designated wire, its eigenstructure and
/// classification.
#[derive(Debug, Clone)]
pub struct LoopAnalysis {
    /// Matrix M with: unnormalized surviving amplitude on the probe wire
    /// = M |probe input⟩.
    pub loop_operator: Operator,
    pub eigenpairs: Vec<(C64, AmplitudeVector)>,
    pub classification: LoopClassification,
    /// Joint state of the other surviving wires (they factor out of the
    /// probe); `None` when the probe is the only survivor.
    pub residual_state: Option<AmplitudeVector>,
    /// True when a nontrivial residual was contracted away.
    pub contracted: bool,
}

/// Extract the loop map on `probe_id` by running the circuit over a full
/// basis of probe inputs. The other surviving wires must factor out of
/// the probe output (they are contracted against their common output
/// state); if they do not, the error reports an entangled residue and the
/// classification is withheld.
pub fn loop_operator(circuit: &Circuit, probe_id: &str) -> Result<LoopAnalysis, PctcError> {
    circuit.ensure_valid()?;
    let probe = circuit
        .wire_index(probe_id)
        .ok_or_else(|| PctcError::UnknownOverride(probe_id.to_string()))?;
    if circuit.wires[probe].role != WireRole::Chronology {
        return Err(PctcError::ProbeNotChronology(probe_id.to_string()));
    }
    let d = circuit.wires[probe].dim;

    let mut runs = Vec::with_capacity(d);
    let mut survivors: Option<Vec<usize>> = None;
    for k in 0..d {
        let mut overrides = BTreeMap::new();
        overrides.insert(
            probe_id.to_string(),
            AmplitudeVector::basis_state(vec![d], k).map_err(LinalgError::from)?,
        );
        let (vector, wire_map) = postselected_amplitude(circuit, &overrides)?;
        if !wire_map.contains(&probe) {
            return Err(PctcError::ProbeConsumed(probe_id.to_string()));
        }
        survivors = Some(wire_map);
        runs.push(vector);
    }
    let survivors = survivors.expect("at least one run");
    let surv_dims: Vec<usize> = survivors.iter().map(|&w| circuit.wires[w].dim).collect();
    let probe_pos = survivors.iter().position(|&w| w == probe).expect("checked");
    let surv_strides = strides(&surv_dims);
    let rest: Vec<usize> = (0..survivors.len()).filter(|&p| p != probe_pos).collect();
    let rest_dims: Vec<usize> = rest.iter().map(|&p| surv_dims[p]).collect();
    let rest_total: usize = rest_dims.iter().product::<usize>().max(1);
    let rest_strides = strides(&rest_dims);

    let all_zero = runs.iter().all(|v| v.norm_sqr() <= tol::ZERO_WEIGHT);
    let zero = Complex64::new(0.0, 0.0);

    let finish = |matrix: Array2<C64>,
                  residual: Option<AmplitudeVector>,
                  contracted: bool|
     -> Result<LoopAnalysis, PctcError> {
        let loop_op = Operator::new(matrix, vec![d]).map_err(LinalgError::from)?;
        let eigenpairs = loop_op.eig()?;
        let classification = if loop_op.max_abs_entry() <= tol::ZERO_WEIGHT {
            LoopClassification::Paradox
        } else {
            let count = eigenpairs
                .iter()
                .filter(|(value, _)| value.norm() > tol::LOOP_RANK)
                .count();
            if count == 1 {
                LoopClassification::Tautology {
                    fixed_state: eigenpairs[0].1.clone(),
                }
            } else {
                LoopClassification::Consistent { count }
            }
        };
        Ok(LoopAnalysis {
            loop_operator: loop_op,
            eigenpairs,
            classification,
            residual_state: residual,
            contracted,
        })
    };

    if all_zero {
        return finish(Array2::from_elem((d, d), zero), None, false);
    }

    // T[rest, probe_out * d + probe_in]
    let mut t = Array2::from_elem((rest_total, d * d), zero);
    for (k, vector) in runs.iter().enumerate() {
        for full in 0..vector.len() {
            let p = (full / surv_strides[probe_pos]) % d;
            let mut r = 0usize;
            for (pos, &sp) in rest.iter().enumerate() {
                r += ((full / surv_strides[sp]) % surv_dims[sp]) * rest_strides[pos];
            }
            t[(r, p * d + k)] = vector.amp(full);
        }
    }

    if rest_total == 1 {
        let mut matrix = Array2::from_elem((d, d), zero);
        for p in 0..d {
            for k in 0..d {
                matrix[(p, k)] = t[(0, p * d + k)];
            }
        }
        return finish(matrix, None, false);
    }

    let (u, s, vt) = t
        .svd(true, true)
        .map_err(|e| PctcError::Linalg(LinalgError::EigFailed(e.to_string())))?;
    let u = u.expect("requested");
    let vt = vt.expect("requested");
    let first = s[0];
    let second = if s.len() > 1 { s[1] } else { 0.0 };
    if second > tol::LOOP_RANK * first.max(1.0) {
        return Err(PctcError::EntangledResidue { first, second });
    }

    // gauge: residual gets unit norm and a real-positive leading entry
    let residual_raw: Vec<C64> = (0..rest_total).map(|r| u[(r, 0)]).collect();
    let lead = residual_raw
        .iter()
        .cloned()
        .max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(Complex64::new(1.0, 0.0));
    let phase = if lead.norm() > 0.0 {
        lead / lead.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let residual: Vec<C64> = residual_raw.iter().map(|&a| a * phase.conj()).collect();
    let mut matrix = Array2::from_elem((d, d), zero);
    for p in 0..d {
        for k in 0..d {
            matrix[(p, k)] = first * vt[(0, p * d + k)] * phase;
        }
    }
    let residual_state =
        AmplitudeVector::new(residual, rest_dims.clone()).map_err(LinalgError::from)?;
    finish(matrix, Some(residual_state), true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{Basis, GateName, GateSpec, InitState, PostSelection, PostselState, Wire};

    fn loop_circuit(gates: Vec<GateSpec>, extra: Vec<Wire>) -> Circuit {
        let mut wires = vec![
            Wire {
                id: "Cp".into(),
                dim: 2,
                role: WireRole::CtcPast { loop_id: "L".into() },
                init: InitState::BellPhiPlus { partner: "Cf".into() },
            },
            Wire {
                id: "Cf".into(),
                dim: 2,
                role: WireRole::CtcFuture { loop_id: "L".into() },
                init: InitState::BellPhiPlus { partner: "Cp".into() },
            },
        ];
        wires.extend(extra);
        Circuit::new(
            wires,
            gates,
            vec![PostSelection {
                pair: (0, 1),
                state: PostselState::PhiPlus,
            }],
        )
    }

    #[test]
    fn bare_loop_has_unit_weight_and_no_surviving_wires() {
        let circuit = loop_circuit(vec![], vec![]);
        let outcome = run_postselected(&circuit, &BTreeMap::new()).unwrap();
        assert!((outcome.weight - 1.0).abs() < 1e-12);
        assert!(!outcome.paradox);
        assert!(outcome.surviving_wires.is_empty());
        let state = outcome.state.unwrap();
        assert_eq!(state.dims(), &[] as &[usize]);
    }

    #[test]
    fn x_on_the_loop_is_a_paradox() {
        // ⟨Φ+|(X⊗1)|Φ+⟩ = Tr[X]/2 = 0: the minimal grandfather paradox.
        let circuit = loop_circuit(
            vec![GateSpec::named(GateName::X, Basis::Computational, vec![0])],
            vec![],
        );
        let outcome = run_postselected(&circuit, &BTreeMap::new()).unwrap();
        assert!(outcome.paradox);
        assert!(outcome.weight <= 1e-12);
        assert!(outcome.state.is_none());
    }

    #[test]
    fn effective_operator_of_swap_is_identity() {
        let swap = Operator::swap_gate(2);
        let traced = effective_operator(&swap, &[1]).unwrap();
        assert!(traced.max_abs_diff(&Operator::identity(vec![2]).unwrap()) < 1e-12);
    }

    #[test]
    fn effective_operator_of_x_on_loop_is_zero() {
        let u = Operator::identity(vec![2]).unwrap().tensor(&Operator::pauli_x());
        let traced = effective_operator(&u, &[1]).unwrap();
        assert!(traced.max_abs_entry() < 1e-12);
    }

    #[test]
    fn effective_operator_of_cnot_then_z_pm_projectors() {
        // wires (A2, C): CNOT control C target A2, then Z^b on C gives
        // I + (−1)^b X on A2.
        for b in [false, true] {
            let cnot = Operator::cnot().embed(&[1, 0], &[2, 2]).unwrap();
            let u = if b {
                Operator::pauli_z()
                    .embed(&[1], &[2, 2])
                    .unwrap()
                    .mul(&cnot)
                    .unwrap()
            } else {
                cnot
            };
            let traced = effective_operator(&u, &[1]).unwrap();
            let sign = if b { -1.0 } else { 1.0 };
            let expected = Operator::identity(vec![2])
                .unwrap()
                .add(&Operator::pauli_x().scaled(Complex64::new(sign, 0.0)))
                .unwrap();
            assert!(traced.max_abs_diff(&expected) < 1e-12, "b = {b}");
        }
    }

    #[test]
    fn teleportation_identity_for_identity_and_swap() {
        let id = Operator::identity(vec![2, 2]).unwrap();
        assert!(teleportation_identity_check(&id, &[1]).unwrap() < 1e-12);
        let swap = Operator::swap_gate(2);
        assert!(teleportation_identity_check(&swap, &[1]).unwrap() < tol::TELEPORT_RESIDUAL);
    }

    #[test]
    fn teleportation_identity_for_random_unitaries() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let u = crate::linalg::haar_random_unitary(vec![2, 2], &mut rng).unwrap();
            let residual = teleportation_identity_check(&u, &[1]).unwrap();
            assert!(residual < tol::TELEPORT_RESIDUAL, "residual {residual:e}");
        }
    }

    #[test]
    fn decoupled_loop_probe_is_consistent_with_count_two() {
        let probe = Wire {
            id: "q".into(),
            dim: 2,
            role: WireRole::Chronology,
            init: InitState::Plus,
        };
        let circuit = loop_circuit(vec![], vec![probe]);
        let analysis = loop_operator(&circuit, "q").unwrap();
        match analysis.classification {
            LoopClassification::Consistent { count } => assert_eq!(count, 2),
            other => panic!("expected Consistent, got {other:?}"),
        }
        // M ∝ I
        let id = Operator::identity(vec![2]).unwrap();
        let scaled = analysis.loop_operator.entry(0, 0);
        assert!(analysis.loop_operator.max_abs_diff(&id.scaled(scaled)) < 1e-12);
    }

    #[test]
    fn overrides_must_hit_chronology_wires() {
        let circuit = loop_circuit(vec![], vec![]);
        let mut overrides = BTreeMap::new();
        overrides.insert("Cp".to_string(), AmplitudeVector::zero());
        let error = run_postselected(&circuit, &overrides).unwrap_err();
        assert!(matches!(error, PctcError::OverrideNotChronology(_)));
    }
}
