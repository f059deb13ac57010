//! Declarative circuit description: role-tagged wires, named and
//! truth-table gates, postselections, and compilation of the gate list
//! into one unitary on the full wire space.
//!
//! Gates listed earlier act earlier: `gates[0]` is applied to the state
//! first. Plus-minus basis gates are the computational gate conjugated by
//! a Hadamard on every wire they touch.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{AmplitudeVector, LinalgError, Operator, C64};
use crate::tol;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("wire id {0:?} not found")]
    UnknownWire(String),
    #[error("wire {index} ({id:?}): {message}")]
    BadWire {
        index: usize,
        id: String,
        message: String,
    },
    #[error("gate {index}: {message}")]
    BadGate { index: usize, message: String },
    #[error("circuit failed validation:\n{0}")]
    Invalid(ViolationList),
    #[error("compiled circuit is not unitary (max deviation {deviation:e}); this is an internal bug")]
    NotUnitaryAfterCompile { deviation: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// What a wire represents in the causal structure of the circuit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireRole {
    Chronology,
    CtcPast { loop_id: String },
    CtcFuture { loop_id: String },
    Environment,
}

/// Initial state of a wire.
#[derive(Debug, Clone, PartialEq)]
pub enum InitState {
    Zero,
    One,
    Plus,
    Minus,
    BellPsiPlus { partner: String },
    BellPhiPlus { partner: String },
    Explicit(AmplitudeVector),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Wire {
    pub id: String,
    pub dim: usize,
    pub role: WireRole,
    pub init: InitState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Computational,
    PlusMinus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateName {
    I,
    X,
    Y,
    Z,
    H,
    Cnot,
    Swap,
}

impl GateName {
    pub fn as_str(&self) -> &'static str {
        match self {
            GateName::I => "I",
            GateName::X => "X",
            GateName::Y => "Y",
            GateName::Z => "Z",
            GateName::H => "H",
            GateName::Cnot => "CNOT",
            GateName::Swap => "SWAP",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "I" => Some(GateName::I),
            "X" => Some(GateName::X),
            "Y" => Some(GateName::Y),
            "Z" => Some(GateName::Z),
            "H" => Some(GateName::H),
            "CNOT" => Some(GateName::Cnot),
            "SWAP" => Some(GateName::Swap),
            _ => None,
        }
    }

    fn arity(&self) -> usize {
        match self {
            GateName::Cnot | GateName::Swap => 2,
            _ => 1,
        }
    }
}

/// One row of a truth-table gate: input label → output label with an
/// amplitude. Labels use 0/1 in the computational basis and +/− in the
/// plus-minus basis, one character per target wire.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub input: String,
    pub output: String,
    pub amp: C64,
}

impl TableRow {
    pub fn unit(input: &str, output: &str) -> Self {
        Self {
            input: input.to_string(),
            output: output.to_string(),
            amp: Complex64::new(1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateKind {
    Named {
        name: GateName,
        basis: Basis,
    },
    /// Inner gate applied when every control wire carries the active
    /// label (read in `control_basis`), identity otherwise.
    Controlled {
        controls: Vec<usize>,
        control_basis: Basis,
        active: Vec<usize>,
        inner: Box<GateKind>,
    },
    Table {
        basis: Basis,
        rows: Vec<TableRow>,
    },
    CustomMatrix {
        operator: Operator,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateSpec {
    pub kind: GateKind,
    pub targets: Vec<usize>,
}

impl GateSpec {
    pub fn named(name: GateName, basis: Basis, targets: Vec<usize>) -> Self {
        Self {
            kind: GateKind::Named { name, basis },
            targets,
        }
    }

    pub fn table(basis: Basis, rows: Vec<TableRow>, targets: Vec<usize>) -> Self {
        Self {
            kind: GateKind::Table { basis, rows },
            targets,
        }
    }

    /// Every wire the gate touches, controls first, in embedding order.
    pub fn wires(&self) -> Vec<usize> {
        match &self.kind {
            GateKind::Controlled { controls, .. } => {
                let mut all = controls.clone();
                all.extend_from_slice(&self.targets);
                all
            }
            _ => self.targets.clone(),
        }
    }

    /// The gate matrix in the computational basis, over `self.wires()`.
    pub fn matrix(&self, wire_dims: &[usize]) -> Result<Operator, CircuitError> {
        build_kind_matrix(&self.kind, &self.targets, wire_dims)
    }
}

fn hadamard_stack(dims: &[usize]) -> Result<Operator, CircuitError> {
    let mut stack = Operator::identity(vec![dims[0]])?;
    if dims[0] != 2 {
        return Err(CircuitError::BadGate {
            index: 0,
            message: "plus-minus basis requires qubit wires".into(),
        });
    }
    stack = Operator::hadamard();
    for &d in &dims[1..] {
        if d != 2 {
            return Err(CircuitError::BadGate {
                index: 0,
                message: "plus-minus basis requires qubit wires".into(),
            });
        }
        stack = stack.tensor(&Operator::hadamard());
    }
    Ok(stack)
}

fn conjugate_pm(op: &Operator) -> Result<Operator, CircuitError> {
    let h = hadamard_stack(op.dims())?;
    Ok(h.mul(op)?.mul(&h)?)
}

fn label_digit(ch: char, basis: Basis) -> Option<usize> {
    match (basis, ch) {
        (Basis::Computational, '0') => Some(0),
        (Basis::Computational, '1') => Some(1),
        (Basis::PlusMinus, '+') => Some(0),
        (Basis::PlusMinus, '-') | (Basis::PlusMinus, '\u{2212}') => Some(1),
        _ => None,
    }
}

fn label_to_index(label: &str, basis: Basis, width: usize) -> Result<usize, String> {
    let chars: Vec<char> = label.chars().collect();
    if chars.len() != width {
        return Err(format!(
            "label {label:?} has {} characters, expected {width}",
            chars.len()
        ));
    }
    let mut index = 0;
    for ch in chars {
        let digit = label_digit(ch, basis)
            .ok_or_else(|| format!("label {label:?} has character {ch:?} invalid for this basis"))?;
        index = index * 2 + digit;
    }
    Ok(index)
}

/// Truth-table matrix in the basis the rows are written in.
pub fn table_basis_matrix(
    basis: Basis,
    rows: &[TableRow],
    width: usize,
) -> Result<Operator, CircuitError> {
    let n = 1usize << width;
    let mut entries = ndarray::Array2::from_elem((n, n), Complex64::new(0.0, 0.0));
    for row in rows {
        let input = label_to_index(&row.input, basis, width).map_err(|message| {
            CircuitError::BadGate { index: 0, message }
        })?;
        let output = label_to_index(&row.output, basis, width).map_err(|message| {
            CircuitError::BadGate { index: 0, message }
        })?;
        entries[(output, input)] += row.amp;
    }
    Ok(Operator::new(entries, vec![2; width])?)
}

fn build_kind_matrix(
    kind: &GateKind,
    targets: &[usize],
    wire_dims: &[usize],
) -> Result<Operator, CircuitError> {
    match kind {
        GateKind::Named { name, basis } => {
            let target_dims: Vec<usize> = targets.iter().map(|&t| wire_dims[t]).collect();
            let base = match name {
                GateName::I => Operator::identity(target_dims.clone())?,
                GateName::X => Operator::pauli_x(),
                GateName::Y => Operator::pauli_y(),
                GateName::Z => Operator::pauli_z(),
                GateName::H => Operator::hadamard(),
                GateName::Cnot => Operator::cnot(),
                GateName::Swap => Operator::swap_gate(target_dims[0]),
            };
            if *name != GateName::I && *name != GateName::Swap {
                for &d in &target_dims {
                    if d != 2 {
                        return Err(CircuitError::BadGate {
                            index: 0,
                            message: format!("gate {} requires qubit wires", name.as_str()),
                        });
                    }
                }
            }
            match basis {
                Basis::Computational => Ok(base),
                Basis::PlusMinus => conjugate_pm(&base),
            }
        }
        GateKind::Table { basis, rows } => {
            let matrix = table_basis_matrix(*basis, rows, targets.len())?;
            match basis {
                Basis::Computational => Ok(matrix),
                Basis::PlusMinus => conjugate_pm(&matrix),
            }
        }
        GateKind::CustomMatrix { operator } => Ok(operator.clone()),
        GateKind::Controlled {
            controls,
            control_basis,
            active,
            inner,
        } => {
            let inner_matrix = build_kind_matrix(inner, targets, wire_dims)?;
            let inner_identity = Operator::identity(inner_matrix.dims().to_vec())?;
            let control_dims: Vec<usize> = controls.iter().map(|&c| wire_dims[c]).collect();
            let full_dim: usize =
                control_dims.iter().product::<usize>() * inner_matrix.dim();
            let mut sum: Option<Operator> = None;
            for assignment in 0..control_dims.iter().product::<usize>() {
                // decompose assignment into per-control digits, big-endian
                let mut digits = Vec::with_capacity(controls.len());
                let mut rem = assignment;
                for &d in control_dims.iter().rev() {
                    digits.push(rem % d);
                    rem /= d;
                }
                digits.reverse();
                let mut proj: Option<Operator> = None;
                for (pos, &digit) in digits.iter().enumerate() {
                    let state = control_state(control_dims[pos], digit, *control_basis)
                        .map_err(|message| CircuitError::BadGate { index: 0, message })?;
                    let p = state.projector();
                    proj = Some(match proj {
                        Some(acc) => acc.tensor(&p),
                        None => p,
                    });
                }
                let proj = proj.expect("at least one control");
                let block = if digits == *active {
                    proj.tensor(&inner_matrix)
                } else {
                    proj.tensor(&inner_identity)
                };
                sum = Some(match sum {
                    Some(acc) => acc.add(&block)?,
                    None => block,
                });
            }
            let result = sum.expect("at least one assignment");
            debug_assert_eq!(result.dim(), full_dim);
            Ok(result)
        }
    }
}

fn control_state(dim: usize, digit: usize, basis: Basis) -> Result<AmplitudeVector, String> {
    match basis {
        Basis::Computational => AmplitudeVector::basis_state(vec![dim], digit)
            .map_err(|e| e.to_string()),
        Basis::PlusMinus => {
            if dim != 2 {
                return Err("plus-minus controls require qubit wires".into());
            }
            Ok(if digit == 0 {
                AmplitudeVector::plus()
            } else {
                AmplitudeVector::minus()
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PostselState {
    PhiPlus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostSelection {
    pub pair: (usize, usize),
    pub state: PostselState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub wires: Vec<Wire>,
    pub gates: Vec<GateSpec>,
    pub postselections: Vec<PostSelection>,
}

/// A single validation failure, with the wire or gate it points at.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub message: String,
    pub wire: Option<usize>,
    pub gate: Option<usize>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.wire, self.gate) {
            (Some(w), _) => write!(f, "wire {w}: {}", self.message),
            (_, Some(g)) => write!(f, "gate {g}: {}", self.message),
            _ => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViolationList(pub Vec<Violation>);

impl fmt::Display for ViolationList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.0 {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

impl Circuit {
    pub fn new(wires: Vec<Wire>, gates: Vec<GateSpec>, postselections: Vec<PostSelection>) -> Self {
        Self {
            wires,
            gates,
            postselections,
        }
    }

    pub fn wire_index(&self, id: &str) -> Option<usize> {
        self.wires.iter().position(|w| w.id == id)
    }

    pub fn wire_dims(&self) -> Vec<usize> {
        self.wires.iter().map(|w| w.dim).collect()
    }

    /// Indices of wires that survive postselection, in wire order.
    pub fn surviving_wires(&self) -> Vec<usize> {
        let mut consumed = vec![false; self.wires.len()];
        for ps in &self.postselections {
            consumed[ps.pair.0] = true;
            consumed[ps.pair.1] = true;
        }
        (0..self.wires.len()).filter(|&i| !consumed[i]).collect()
    }

    /// Every violated invariant, with wire/gate indices. Empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let push_wire = |out: &mut Vec<Violation>, wire, message: String| {
            out.push(Violation {
                message,
                wire: Some(wire),
                gate: None,
            })
        };

        // wires: dims and duplicate ids
        let mut seen_ids: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, wire) in self.wires.iter().enumerate() {
            if wire.dim < 2 {
                push_wire(&mut out, i, format!("dimension {} below 2", wire.dim));
            }
            if let Some(&first) = seen_ids.get(wire.id.as_str()) {
                push_wire(
                    &mut out,
                    i,
                    format!("duplicate wire id {:?} (first at {first})", wire.id),
                );
            } else {
                seen_ids.insert(&wire.id, i);
            }
        }

        // loop pairing
        let mut loops: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
        for (i, wire) in self.wires.iter().enumerate() {
            match &wire.role {
                WireRole::CtcPast { loop_id } => loops.entry(loop_id).or_default().0.push(i),
                WireRole::CtcFuture { loop_id } => loops.entry(loop_id).or_default().1.push(i),
                _ => {}
            }
        }
        for (loop_id, (past, future)) in &loops {
            if past.len() != 1 || future.len() != 1 {
                out.push(Violation {
                    message: format!(
                        "unpaired loop {loop_id:?}: {} past and {} future wires",
                        past.len(),
                        future.len()
                    ),
                    wire: past.first().or(future.first()).copied(),
                    gate: None,
                });
                continue;
            }
            let (p, f) = (past[0], future[0]);
            if self.wires[p].dim != self.wires[f].dim {
                push_wire(
                    &mut out,
                    p,
                    format!("loop {loop_id:?} wires have unequal dimensions"),
                );
            }
            let jointly_bell = matches!(
                &self.wires[p].init,
                InitState::BellPhiPlus { partner } if *partner == self.wires[f].id
            ) && matches!(
                &self.wires[f].init,
                InitState::BellPhiPlus { partner } if *partner == self.wires[p].id
            );
            if !jointly_bell {
                push_wire(
                    &mut out,
                    p,
                    format!("loop {loop_id:?} is not initialized jointly in |Φ+⟩"),
                );
            }
            let count = self
                .postselections
                .iter()
                .filter(|ps| {
                    (ps.pair == (p, f) || ps.pair == (f, p)) && ps.state == PostselState::PhiPlus
                })
                .count();
            if count != 1 {
                push_wire(
                    &mut out,
                    p,
                    format!(
                        "loop {loop_id:?} appears in {count} |Φ+⟩ postselections, expected exactly 1"
                    ),
                );
            }
        }

        // Bell initializations
        let mut pair_use: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, wire) in self.wires.iter().enumerate() {
            let partner_id = match &wire.init {
                InitState::BellPsiPlus { partner } | InitState::BellPhiPlus { partner } => partner,
                InitState::Explicit(state) => {
                    if state.dims() != [wire.dim] {
                        push_wire(
                            &mut out,
                            i,
                            format!(
                                "explicit init has dims {:?}, expected [{}]",
                                state.dims(),
                                wire.dim
                            ),
                        );
                    } else if !state.is_normalized() {
                        push_wire(&mut out, i, "explicit init is not normalized".into());
                    }
                    continue;
                }
                _ => continue,
            };
            let Some(j) = self.wire_index(partner_id) else {
                push_wire(
                    &mut out,
                    i,
                    format!("bell partner {partner_id:?} does not exist"),
                );
                continue;
            };
            if j == i {
                push_wire(&mut out, i, "bell pair references its own wire".into());
                continue;
            }
            let mutual = match (&wire.init, &self.wires[j].init) {
                (InitState::BellPsiPlus { .. }, InitState::BellPsiPlus { partner }) => {
                    *partner == wire.id
                }
                (InitState::BellPhiPlus { .. }, InitState::BellPhiPlus { partner }) => {
                    *partner == wire.id
                }
                _ => false,
            };
            if !mutual {
                push_wire(
                    &mut out,
                    i,
                    format!("bell pair with {partner_id:?} is not declared mutually"),
                );
            }
            if self.wires[j].dim != wire.dim {
                push_wire(&mut out, i, "bell pair wires have unequal dimensions".into());
            }
            if matches!(wire.init, InitState::BellPsiPlus { .. }) && wire.dim != 2 {
                push_wire(&mut out, i, "|Ψ+⟩ initialization requires qubits".into());
            }
            *pair_use.entry(i).or_insert(0) += 1;
            if pair_use[&i] > 1 {
                push_wire(&mut out, i, "wire referenced by more than one bell pair".into());
            }
        }

        // gates
        let dims = self.wire_dims();
        for (g, gate) in self.gates.iter().enumerate() {
            let wires = gate.wires();
            let mut bad_indices = false;
            let mut seen = vec![false; self.wires.len()];
            for &w in &wires {
                if w >= self.wires.len() {
                    out.push(Violation {
                        message: format!("wire index {w} out of range"),
                        wire: None,
                        gate: Some(g),
                    });
                    bad_indices = true;
                } else if seen[w] {
                    out.push(Violation {
                        message: format!("wire index {w} repeated"),
                        wire: None,
                        gate: Some(g),
                    });
                    bad_indices = true;
                } else {
                    seen[w] = true;
                }
            }
            if bad_indices {
                continue;
            }
            if let GateKind::Named { name, .. } = &gate.kind {
                if gate.targets.len() != name.arity() {
                    out.push(Violation {
                        message: format!(
                            "gate {} takes {} targets, given {}",
                            name.as_str(),
                            name.arity(),
                            gate.targets.len()
                        ),
                        wire: None,
                        gate: Some(g),
                    });
                    continue;
                }
                if *name == GateName::Swap && dims[gate.targets[0]] != dims[gate.targets[1]] {
                    out.push(Violation {
                        message: "SWAP requires equal wire dimensions".into(),
                        wire: None,
                        gate: Some(g),
                    });
                    continue;
                }
            }
            if let GateKind::Controlled { controls, active, .. } = &gate.kind {
                if controls.is_empty() || controls.len() != active.len() {
                    out.push(Violation {
                        message: "controlled gate needs one active label per control".into(),
                        wire: None,
                        gate: Some(g),
                    });
                    continue;
                }
                if controls
                    .iter()
                    .zip(active)
                    .any(|(&c, &a)| a >= dims[c])
                {
                    out.push(Violation {
                        message: "active control label out of range".into(),
                        wire: None,
                        gate: Some(g),
                    });
                    continue;
                }
            }
            if let GateKind::Table { .. } = &gate.kind {
                if gate.targets.iter().any(|&t| dims[t] != 2) {
                    out.push(Violation {
                        message: "table gates require qubit wires".into(),
                        wire: None,
                        gate: Some(g),
                    });
                    continue;
                }
            }
            match gate.matrix(&dims) {
                Ok(matrix) => {
                    if !matrix.is_unitary(tol::UNITARITY) {
                        let what = match &gate.kind {
                            GateKind::Table { .. } => "non-unitary table",
                            GateKind::CustomMatrix { .. } => "non-unitary matrix",
                            _ => "non-unitary gate",
                        };
                        out.push(Violation {
                            message: what.into(),
                            wire: None,
                            gate: Some(g),
                        });
                    }
                    let expected: usize = wires.iter().map(|&w| dims[w]).product();
                    if matrix.dim() != expected {
                        out.push(Violation {
                            message: format!(
                                "gate matrix dimension {} does not match wires (expected {expected})",
                                matrix.dim()
                            ),
                            wire: None,
                            gate: Some(g),
                        });
                    }
                }
                Err(e) => out.push(Violation {
                    message: e.to_string(),
                    wire: None,
                    gate: Some(g),
                }),
            }
        }

        // postselections
        let mut post_used = vec![0usize; self.wires.len()];
        for ps in &self.postselections {
            let (a, b) = ps.pair;
            if a >= self.wires.len() || b >= self.wires.len() {
                out.push(Violation {
                    message: "postselection wire out of range".into(),
                    wire: None,
                    gate: None,
                });
                continue;
            }
            if a == b {
                out.push(Violation {
                    message: "postselection pair repeats a wire".into(),
                    wire: Some(a),
                    gate: None,
                });
                continue;
            }
            if self.wires[a].dim != self.wires[b].dim {
                out.push(Violation {
                    message: "postselection pair has unequal dimensions".into(),
                    wire: Some(a),
                    gate: None,
                });
            }
            post_used[a] += 1;
            post_used[b] += 1;
        }
        for (i, &n) in post_used.iter().enumerate() {
            if n > 1 {
                push_wire(&mut out, i, "wire appears in more than one postselection".into());
            }
        }

        out
    }

    pub fn ensure_valid(&self) -> Result<(), CircuitError> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(CircuitError::Invalid(ViolationList(violations)))
        }
    }

    /// Product of the gate matrices in listed order (index 0 acts first),
    /// each embedded on the full wire space. The result is checked to be
    /// unitary; a failure there is an internal bug and is reported loudly.
    pub fn compile_unitary(&self) -> Result<Operator, CircuitError> {
        let dims = self.wire_dims();
        let mut total = Operator::identity(dims.clone())?;
        for gate in &self.gates {
            let matrix = gate.matrix(&dims)?;
            let embedded = matrix.embed(&gate.wires(), &dims)?;
            total = embedded.mul(&total)?;
        }
        let product = total.mul(&total.adjoint())?;
        let identity = Operator::identity(dims)?;
        let deviation = product.max_abs_diff(&identity);
        if deviation > tol::UNITARITY {
            return Err(CircuitError::NotUnitaryAfterCompile { deviation });
        }
        Ok(total)
    }

    /// Assemble the initial state, honoring Bell pairings and per-wire
    /// overrides (override key = wire index). Bell-paired wires cannot be
    /// overridden.
    pub fn initial_state(
        &self,
        overrides: &BTreeMap<usize, AmplitudeVector>,
    ) -> Result<AmplitudeVector, CircuitError> {
        for (&w, state) in overrides {
            if w >= self.wires.len() {
                return Err(CircuitError::UnknownWire(format!("index {w}")));
            }
            if state.dims() != [self.wires[w].dim] {
                return Err(CircuitError::BadWire {
                    index: w,
                    id: self.wires[w].id.clone(),
                    message: format!(
                        "override has dims {:?}, wire has dimension {}",
                        state.dims(),
                        self.wires[w].dim
                    ),
                });
            }
            if matches!(
                self.wires[w].init,
                InitState::BellPsiPlus { .. } | InitState::BellPhiPlus { .. }
            ) {
                return Err(CircuitError::BadWire {
                    index: w,
                    id: self.wires[w].id.clone(),
                    message: "cannot override a Bell-paired wire".into(),
                });
            }
        }

        let mut visited = vec![false; self.wires.len()];
        let mut order: Vec<usize> = Vec::with_capacity(self.wires.len());
        let mut state: Option<AmplitudeVector> = None;
        let push = |state: &mut Option<AmplitudeVector>, part: AmplitudeVector| {
            *state = Some(match state.take() {
                Some(acc) => acc.tensor(&part),
                None => part,
            });
        };
        for i in 0..self.wires.len() {
            if visited[i] {
                continue;
            }
            visited[i] = true;
            let wire = &self.wires[i];
            if let Some(s) = overrides.get(&i) {
                order.push(i);
                push(&mut state, s.clone());
                continue;
            }
            match &wire.init {
                InitState::Zero => {
                    order.push(i);
                    push(&mut state, AmplitudeVector::basis_state(vec![wire.dim], 0)?);
                }
                InitState::One => {
                    order.push(i);
                    push(&mut state, AmplitudeVector::basis_state(vec![wire.dim], 1)?);
                }
                InitState::Plus => {
                    order.push(i);
                    if wire.dim != 2 {
                        return Err(CircuitError::BadWire {
                            index: i,
                            id: wire.id.clone(),
                            message: "|+⟩ init requires a qubit".into(),
                        });
                    }
                    push(&mut state, AmplitudeVector::plus());
                }
                InitState::Minus => {
                    order.push(i);
                    if wire.dim != 2 {
                        return Err(CircuitError::BadWire {
                            index: i,
                            id: wire.id.clone(),
                            message: "|−⟩ init requires a qubit".into(),
                        });
                    }
                    push(&mut state, AmplitudeVector::minus());
                }
                InitState::Explicit(s) => {
                    order.push(i);
                    push(&mut state, s.clone());
                }
                InitState::BellPsiPlus { partner } | InitState::BellPhiPlus { partner } => {
                    let j = self
                        .wire_index(partner)
                        .ok_or_else(|| CircuitError::UnknownWire(partner.clone()))?;
                    visited[j] = true;
                    order.push(i);
                    order.push(j);
                    let pair = match &wire.init {
                        InitState::BellPsiPlus { .. } => AmplitudeVector::bell_psi_plus(),
                        _ => AmplitudeVector::bell_phi_plus(wire.dim),
                    };
                    push(&mut state, pair);
                }
            }
        }
        let assembled = state.unwrap_or_else(|| AmplitudeVector::scalar(Complex64::new(1.0, 0.0)));
        // order[k] = wire sitting at tensor slot k; invert to wire order
        let mut perm = vec![0usize; order.len()];
        for (slot, &wire) in order.iter().enumerate() {
            perm[wire] = slot;
        }
        Ok(assembled.permute_subsystems(&perm)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qubit_wire(id: &str, init: InitState) -> Wire {
        Wire {
            id: id.to_string(),
            dim: 2,
            role: WireRole::Chronology,
            init,
        }
    }

    fn loop_pair(loop_id: &str) -> Vec<Wire> {
        vec![
            Wire {
                id: format!("{loop_id}_past"),
                dim: 2,
                role: WireRole::CtcPast {
                    loop_id: loop_id.into(),
                },
                init: InitState::BellPhiPlus {
                    partner: format!("{loop_id}_future"),
                },
            },
            Wire {
                id: format!("{loop_id}_future"),
                dim: 2,
                role: WireRole::CtcFuture {
                    loop_id: loop_id.into(),
                },
                init: InitState::BellPhiPlus {
                    partner: format!("{loop_id}_past"),
                },
            },
        ]
    }

    #[test]
    fn unpaired_loop_is_a_violation() {
        let circuit = Circuit::new(
            vec![Wire {
                id: "c".into(),
                dim: 2,
                role: WireRole::CtcPast {
                    loop_id: "L".into(),
                },
                init: InitState::Zero,
            }],
            vec![],
            vec![],
        );
        let violations = circuit.validate();
        assert!(violations.iter().any(|v| v.message.contains("unpaired loop")));
    }

    #[test]
    fn non_injective_table_is_a_violation() {
        let gate = GateSpec::table(
            Basis::Computational,
            vec![TableRow::unit("0", "0"), TableRow::unit("1", "0")],
            vec![0],
        );
        let circuit = Circuit::new(vec![qubit_wire("q", InitState::Zero)], vec![gate], vec![]);
        let violations = circuit.validate();
        assert!(violations.iter().any(|v| v.message.contains("non-unitary table")));
    }

    #[test]
    fn empty_gate_list_compiles_to_identity() {
        let circuit = Circuit::new(
            vec![
                qubit_wire("a", InitState::Zero),
                qubit_wire("b", InitState::Zero),
            ],
            vec![],
            vec![],
        );
        let u = circuit.compile_unitary().unwrap();
        assert!(u.max_abs_diff(&Operator::identity(vec![2, 2]).unwrap()) < 1e-15);
    }

    #[test]
    fn single_cnot_compiles_to_the_permutation() {
        let circuit = Circuit::new(
            vec![
                qubit_wire("c", InitState::Zero),
                qubit_wire("t", InitState::Zero),
            ],
            vec![GateSpec::named(
                GateName::Cnot,
                Basis::Computational,
                vec![0, 1],
            )],
            vec![],
        );
        let u = circuit.compile_unitary().unwrap();
        assert!((u.entry(0b10, 0b11).re - 1.0).abs() < 1e-15);
        assert!((u.entry(0b11, 0b10).re - 1.0).abs() < 1e-15);
        assert!((u.entry(0b00, 0b00).re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cnot_then_z_traces_to_one_minus_x() {
        // Wires: loop wire C (index 0), chronology A2 (index 1).
        // Brute-force matrix product oracle, then trace over C.
        let circuit = Circuit::new(
            vec![
                qubit_wire("c", InitState::Zero),
                qubit_wire("a2", InitState::Zero),
            ],
            vec![
                GateSpec::named(GateName::Cnot, Basis::Computational, vec![0, 1]),
                GateSpec::named(GateName::Z, Basis::Computational, vec![0]),
            ],
            vec![],
        );
        let u = circuit.compile_unitary().unwrap();
        let traced = u.partial_trace(&[1]).unwrap();
        let expected = Operator::identity(vec![2])
            .unwrap()
            .sub(&Operator::pauli_x())
            .unwrap();
        assert!(traced.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn pm_conjugation_is_an_involution() {
        for name in [GateName::X, GateName::Z, GateName::H, GateName::Cnot] {
            let targets: Vec<usize> = (0..name.arity()).collect();
            let dims = vec![2; name.arity()];
            let plain = GateSpec::named(name, Basis::Computational, targets.clone())
                .matrix(&dims)
                .unwrap();
            let pm = GateSpec::named(name, Basis::PlusMinus, targets)
                .matrix(&dims)
                .unwrap();
            let twice = conjugate_pm(&pm).unwrap();
            assert!(twice.max_abs_diff(&plain) < 1e-12, "{}", name.as_str());
        }
    }

    #[test]
    fn gate_list_product_matches_singleton_products() {
        let wires = vec![
            qubit_wire("a", InitState::Zero),
            qubit_wire("b", InitState::Zero),
        ];
        let g1 = GateSpec::named(GateName::H, Basis::Computational, vec![0]);
        let g2 = GateSpec::named(GateName::Cnot, Basis::Computational, vec![0, 1]);
        let g3 = GateSpec::named(GateName::Z, Basis::PlusMinus, vec![1]);
        let whole = Circuit::new(wires.clone(), vec![g1.clone(), g2.clone(), g3.clone()], vec![])
            .compile_unitary()
            .unwrap();
        let mut product = Operator::identity(vec![2, 2]).unwrap();
        for g in [g1, g2, g3] {
            let single = Circuit::new(wires.clone(), vec![g], vec![])
                .compile_unitary()
                .unwrap();
            product = single.mul(&product).unwrap();
        }
        assert!(whole.max_abs_diff(&product) < 1e-12);
    }

    #[test]
    fn bijective_unit_table_compiles_to_permutation() {
        let rows = vec![
            TableRow::unit("00", "01"),
            TableRow::unit("01", "00"),
            TableRow::unit("10", "11"),
            TableRow::unit("11", "10"),
        ];
        let gate = GateSpec::table(Basis::Computational, rows, vec![0, 1]);
        let circuit = Circuit::new(
            vec![
                qubit_wire("a", InitState::Zero),
                qubit_wire("b", InitState::Zero),
            ],
            vec![gate],
            vec![],
        );
        let u = circuit.compile_unitary().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let v = u.entry(i, j);
                assert!(
                    v.norm() < 1e-15 || (v - Complex64::new(1.0, 0.0)).norm() < 1e-15,
                    "entry ({i},{j}) = {v}"
                );
            }
        }
    }

    #[test]
    fn controlled_on_plus_applies_inner_only_on_plus() {
        // Control on |+⟩ applying Z: this is |+⟩⟨+|⊗Z + |−⟩⟨−|⊗I.
        let gate = GateSpec {
            kind: GateKind::Controlled {
                controls: vec![0],
                control_basis: Basis::PlusMinus,
                active: vec![0],
                inner: Box::new(GateKind::Named {
                    name: GateName::Z,
                    basis: Basis::Computational,
                }),
            },
            targets: vec![1],
        };
        let m = gate.matrix(&[2, 2]).unwrap();
        let plus = AmplitudeVector::plus();
        let minus = AmplitudeVector::minus();
        let expected = plus
            .projector()
            .tensor(&Operator::pauli_z())
            .add(&minus.projector().tensor(&Operator::identity(vec![2]).unwrap()))
            .unwrap();
        assert!(m.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn initial_state_handles_nonadjacent_bell_pairs() {
        // Wires a, x, b with (a, b) in |Φ+⟩ and x in |1⟩.
        let wires = vec![
            Wire {
                id: "a".into(),
                dim: 2,
                role: WireRole::Chronology,
                init: InitState::BellPhiPlus { partner: "b".into() },
            },
            qubit_wire("x", InitState::One),
            Wire {
                id: "b".into(),
                dim: 2,
                role: WireRole::Chronology,
                init: InitState::BellPhiPlus { partner: "a".into() },
            },
        ];
        let circuit = Circuit::new(wires, vec![], vec![]);
        let state = circuit.initial_state(&BTreeMap::new()).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // Expect (|010⟩ + |111⟩)/√2 in wire order (a, x, b).
        assert!((state.amp(0b010).re - h).abs() < 1e-15);
        assert!((state.amp(0b111).re - h).abs() < 1e-15);
        assert!(state.amp(0b000).norm() < 1e-15);
    }

    #[test]
    fn valid_loop_circuit_has_no_violations() {
        let mut wires = loop_pair("L");
        wires.push(qubit_wire("q", InitState::Plus));
        let circuit = Circuit::new(
            wires,
            vec![GateSpec::named(GateName::X, Basis::Computational, vec![0])],
            vec![PostSelection {
                pair: (0, 1),
                state: PostselState::PhiPlus,
            }],
        );
        assert_eq!(circuit.validate(), vec![]);
    }
}
