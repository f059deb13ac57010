//! Circuit JSON: the single on-disk format. Parsing reports the JSON path
//! of the offending field; serialization is deterministic (sorted keys)
//! so fixtures diff cleanly and identical circuits produce identical
//! bytes.

use num_complex::Complex64;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::circuit::{
    Basis, Circuit, GateKind, GateName, GateSpec, InitState, PostSelection, PostselState,
    TableRow, Wire, WireRole,
};
use crate::linalg::{AmplitudeVector, Operator, C64};

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("cannot serialize: {0}")]
    Unserializable(String),
}

fn err<T>(path: &str, message: impl Into<String>) -> Result<T, SchemaError> {
    Err(SchemaError::Schema {
        path: path.to_string(),
        message: message.into(),
    })
}

fn as_object<'a>(value: &'a Value, path: &str) -> Result<&'a Map<String, Value>, SchemaError> {
    value.as_object().map_or_else(|| err(path, "expected an object"), Ok)
}

fn as_array<'a>(value: &'a Value, path: &str) -> Result<&'a Vec<Value>, SchemaError> {
    value.as_array().map_or_else(|| err(path, "expected an array"), Ok)
}

fn as_str<'a>(value: &'a Value, path: &str) -> Result<&'a str, SchemaError> {
    value.as_str().map_or_else(|| err(path, "expected a string"), Ok)
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value, SchemaError> {
    obj.get(key)
        .map_or_else(|| err(&format!("{path}.{key}"), "missing required field"), Ok)
}

fn parse_complex(value: &Value, path: &str) -> Result<C64, SchemaError> {
    let pair = as_array(value, path)?;
    if pair.len() != 2 {
        return err(path, "expected [re, im]");
    }
    let re = pair[0]
        .as_f64()
        .map_or_else(|| err(&format!("{path}[0]"), "expected a number"), Ok)?;
    let im = pair[1]
        .as_f64()
        .map_or_else(|| err(&format!("{path}[1]"), "expected a number"), Ok)?;
    Ok(Complex64::new(re, im))
}

fn parse_basis(value: &Value, path: &str) -> Result<Basis, SchemaError> {
    match as_str(value, path)? {
        "z" => Ok(Basis::Computational),
        "pm" => Ok(Basis::PlusMinus),
        other => err(path, format!("unknown basis {other:?} (expected \"z\" or \"pm\")")),
    }
}

fn parse_role(role: &str, path: &str) -> Result<WireRole, SchemaError> {
    if role == "chronology" {
        return Ok(WireRole::Chronology);
    }
    if role == "environment" {
        return Ok(WireRole::Environment);
    }
    if let Some(loop_id) = role.strip_prefix("ctc_past:") {
        if loop_id.is_empty() {
            return err(path, "ctc_past role needs a loop id");
        }
        return Ok(WireRole::CtcPast {
            loop_id: loop_id.to_string(),
        });
    }
    if let Some(loop_id) = role.strip_prefix("ctc_future:") {
        if loop_id.is_empty() {
            return err(path, "ctc_future role needs a loop id");
        }
        return Ok(WireRole::CtcFuture {
            loop_id: loop_id.to_string(),
        });
    }
    err(path, format!("unknown role {role:?}"))
}

fn parse_init(value: &Value, path: &str) -> Result<InitState, SchemaError> {
    if let Some(text) = value.as_str() {
        return match text {
            "zero" => Ok(InitState::Zero),
            "one" => Ok(InitState::One),
            "plus" => Ok(InitState::Plus),
            "minus" => Ok(InitState::Minus),
            other => {
                if let Some(partner) = other.strip_prefix("bell:psi_plus:") {
                    Ok(InitState::BellPsiPlus {
                        partner: partner.to_string(),
                    })
                } else if let Some(partner) = other.strip_prefix("bell:phi_plus:") {
                    Ok(InitState::BellPhiPlus {
                        partner: partner.to_string(),
                    })
                } else {
                    err(path, format!("unknown init {other:?}"))
                }
            }
        };
    }
    let obj = as_object(value, path)?;
    let amps_value = field(obj, "amplitudes", path)?;
    let amps_path = format!("{path}.amplitudes");
    let raw = as_array(amps_value, &amps_path)?;
    let mut amplitudes = Vec::with_capacity(raw.len());
    for (k, entry) in raw.iter().enumerate() {
        amplitudes.push(parse_complex(entry, &format!("{amps_path}[{k}]"))?);
    }
    let len = amplitudes.len();
    AmplitudeVector::new(amplitudes, vec![len])
        .map(InitState::Explicit)
        .or_else(|e| err(&amps_path, e.to_string()))
}

fn parse_wire(value: &Value, path: &str) -> Result<Wire, SchemaError> {
    let obj = as_object(value, path)?;
    let id = as_str(field(obj, "id", path)?, &format!("{path}.id"))?.to_string();
    let dim = field(obj, "dim", path)?
        .as_u64()
        .map_or_else(|| err(&format!("{path}.dim"), "expected a positive integer"), Ok)?
        as usize;
    let role_path = format!("{path}.role");
    let role = parse_role(as_str(field(obj, "role", path)?, &role_path)?, &role_path)?;
    let init = parse_init(field(obj, "init", path)?, &format!("{path}.init"))?;
    Ok(Wire { id, dim, role, init })
}

fn wire_index(
    ids: &[String],
    id_value: &Value,
    path: &str,
) -> Result<usize, SchemaError> {
    let id = as_str(id_value, path)?;
    ids.iter()
        .position(|w| w == id)
        .map_or_else(|| err(path, format!("unknown wire id {id:?}")), Ok)
}

fn parse_targets(
    obj: &Map<String, Value>,
    key: &str,
    ids: &[String],
    path: &str,
) -> Result<Vec<usize>, SchemaError> {
    let list_path = format!("{path}.{key}");
    let raw = as_array(field(obj, key, path)?, &list_path)?;
    raw.iter()
        .enumerate()
        .map(|(k, v)| wire_index(ids, v, &format!("{list_path}[{k}]")))
        .collect()
}

fn parse_active_labels(
    text: &str,
    basis: Basis,
    count: usize,
    path: &str,
) -> Result<Vec<usize>, SchemaError> {
    let chars: Vec<char> = text.chars().collect();
    if chars.len() != count {
        return err(path, format!("expected {count} label characters, got {}", chars.len()));
    }
    chars
        .into_iter()
        .map(|ch| match (basis, ch) {
            (Basis::Computational, '0') => Ok(0),
            (Basis::Computational, '1') => Ok(1),
            (Basis::PlusMinus, '+') => Ok(0),
            (Basis::PlusMinus, '-') | (Basis::PlusMinus, '\u{2212}') => Ok(1),
            _ => err(path, format!("label character {ch:?} invalid for this basis")),
        })
        .collect()
}

fn parse_gate(value: &Value, ids: &[String], path: &str) -> Result<GateSpec, SchemaError> {
    let obj = as_object(value, path)?;
    let kind = as_str(field(obj, "kind", path)?, &format!("{path}.kind"))?;
    match kind {
        "named" => {
            let name_path = format!("{path}.name");
            let name_str = as_str(field(obj, "name", path)?, &name_path)?;
            let name = GateName::parse(name_str)
                .map_or_else(|| err(&name_path, format!("unknown gate name {name_str:?}")), Ok)?;
            let basis = parse_basis(field(obj, "basis", path)?, &format!("{path}.basis"))?;
            let targets = parse_targets(obj, "targets", ids, path)?;
            let controls = if obj.contains_key("controls") {
                parse_targets(obj, "controls", ids, path)?
            } else {
                Vec::new()
            };
            if controls.is_empty() {
                return Ok(GateSpec::named(name, basis, targets));
            }
            let control_basis = match obj.get("control_basis") {
                Some(v) => parse_basis(v, &format!("{path}.control_basis"))?,
                None => basis,
            };
            let active = match obj.get("active") {
                Some(v) => {
                    let active_path = format!("{path}.active");
                    parse_active_labels(
                        as_str(v, &active_path)?,
                        control_basis,
                        controls.len(),
                        &active_path,
                    )?
                }
                None => vec![1; controls.len()],
            };
            Ok(GateSpec {
                kind: GateKind::Controlled {
                    controls,
                    control_basis,
                    active,
                    inner: Box::new(GateKind::Named { name, basis }),
                },
                targets,
            })
        }
        "table" => {
            let basis = parse_basis(field(obj, "basis", path)?, &format!("{path}.basis"))?;
            let targets = parse_targets(obj, "targets", ids, path)?;
            let rows_path = format!("{path}.rows");
            let raw = as_array(field(obj, "rows", path)?, &rows_path)?;
            let mut rows = Vec::with_capacity(raw.len());
            for (k, r) in raw.iter().enumerate() {
                let row_path = format!("{rows_path}[{k}]");
                let row = as_object(r, &row_path)?;
                rows.push(TableRow {
                    input: as_str(field(row, "in", &row_path)?, &format!("{row_path}.in"))?
                        .replace('\u{2212}', "-"),
                    output: as_str(field(row, "out", &row_path)?, &format!("{row_path}.out"))?
                        .replace('\u{2212}', "-"),
                    amp: parse_complex(field(row, "amp", &row_path)?, &format!("{row_path}.amp"))?,
                });
            }
            Ok(GateSpec::table(basis, rows, targets))
        }
        "matrix" => {
            let targets = parse_targets(obj, "targets", ids, path)?;
            let entries_path = format!("{path}.entries");
            let raw = as_array(field(obj, "entries", path)?, &entries_path)?;
            let n = raw.len();
            let mut entries = ndarray::Array2::from_elem((n, n), Complex64::new(0.0, 0.0));
            for (i, row_value) in raw.iter().enumerate() {
                let row_path = format!("{entries_path}[{i}]");
                let row = as_array(row_value, &row_path)?;
                if row.len() != n {
                    return err(&row_path, format!("expected {n} entries, got {}", row.len()));
                }
                for (j, cell) in row.iter().enumerate() {
                    entries[(i, j)] = parse_complex(cell, &format!("{row_path}[{j}]"))?;
                }
            }
            let operator = Operator::new(entries, vec![n.max(2)])
                .or_else(|e| err(&entries_path, e.to_string()))?;
            Ok(GateSpec {
                kind: GateKind::CustomMatrix { operator },
                targets,
            })
        }
        other => err(
            &format!("{path}.kind"),
            format!("unknown gate kind {other:?} (expected \"named\", \"table\" or \"matrix\")"),
        ),
    }
}

/// Parse a circuit document. Errors name the JSON path of the offending
/// field. A Bell pairing declared on only one wire is completed on the
/// partner when the partner carries a plain default init; conflicting
/// declarations are errors.
pub fn parse_circuit(text: &str) -> Result<Circuit, SchemaError> {
    let root: Value = serde_json::from_str(text)?;
    let obj = as_object(&root, "$")?;
    let wires_raw = as_array(field(obj, "wires", "$")?, "$.wires")?;
    let mut wires = Vec::with_capacity(wires_raw.len());
    for (i, w) in wires_raw.iter().enumerate() {
        wires.push(parse_wire(w, &format!("$.wires[{i}]"))?);
    }
    let ids: Vec<String> = wires.iter().map(|w| w.id.clone()).collect();
    for (i, id) in ids.iter().enumerate() {
        if ids[..i].contains(id) {
            return err(&format!("$.wires[{i}].id"), format!("duplicate wire id {id:?}"));
        }
    }

    // complete one-sided bell declarations
    for i in 0..wires.len() {
        let (state_name, partner) = match &wires[i].init {
            InitState::BellPsiPlus { partner } => ("psi", partner.clone()),
            InitState::BellPhiPlus { partner } => ("phi", partner.clone()),
            _ => continue,
        };
        let Some(j) = ids.iter().position(|id| *id == partner) else {
            return err(
                &format!("$.wires[{i}].init"),
                format!("bell partner {partner:?} does not exist"),
            );
        };
        let mirror = if state_name == "psi" {
            InitState::BellPsiPlus {
                partner: ids[i].clone(),
            }
        } else {
            InitState::BellPhiPlus {
                partner: ids[i].clone(),
            }
        };
        match &wires[j].init {
            InitState::BellPsiPlus { .. } | InitState::BellPhiPlus { .. } => {
                if wires[j].init != mirror {
                    return err(
                        &format!("$.wires[{j}].init"),
                        format!("conflicting bell declaration against wire {:?}", ids[i]),
                    );
                }
            }
            InitState::Zero => wires[j].init = mirror,
            _ => {
                return err(
                    &format!("$.wires[{j}].init"),
                    format!(
                        "wire is bell-paired with {:?} but declares its own init",
                        ids[i]
                    ),
                )
            }
        }
    }

    let gates_raw = as_array(field(obj, "gates", "$")?, "$.gates")?;
    let mut gates = Vec::with_capacity(gates_raw.len());
    for (g, value) in gates_raw.iter().enumerate() {
        gates.push(parse_gate(value, &ids, &format!("$.gates[{g}]"))?);
    }

    let post_raw = as_array(field(obj, "postselect", "$")?, "$.postselect")?;
    let mut postselections = Vec::with_capacity(post_raw.len());
    for (p, value) in post_raw.iter().enumerate() {
        let path = format!("$.postselect[{p}]");
        let entry = as_object(value, &path)?;
        let pair_path = format!("{path}.pair");
        let pair = as_array(field(entry, "pair", &path)?, &pair_path)?;
        if pair.len() != 2 {
            return err(&pair_path, "expected exactly two wire ids");
        }
        let a = wire_index(&ids, &pair[0], &format!("{pair_path}[0]"))?;
        let b = wire_index(&ids, &pair[1], &format!("{pair_path}[1]"))?;
        let state_path = format!("{path}.state");
        let state = match as_str(field(entry, "state", &path)?, &state_path)? {
            "phi_plus" => PostselState::PhiPlus,
            other => return err(&state_path, format!("unknown postselection state {other:?}")),
        };
        postselections.push(PostSelection { pair: (a, b), state });
    }

    Ok(Circuit::new(wires, gates, postselections))
}

fn complex_value(c: C64) -> Value {
    json!([c.re, c.im])
}

fn basis_value(basis: Basis) -> Value {
    match basis {
        Basis::Computational => json!("z"),
        Basis::PlusMinus => json!("pm"),
    }
}

fn init_value(init: &InitState) -> Value {
    match init {
        InitState::Zero => json!("zero"),
        InitState::One => json!("one"),
        InitState::Plus => json!("plus"),
        InitState::Minus => json!("minus"),
        InitState::BellPsiPlus { partner } => json!(format!("bell:psi_plus:{partner}")),
        InitState::BellPhiPlus { partner } => json!(format!("bell:phi_plus:{partner}")),
        InitState::Explicit(state) => json!({
            "amplitudes": state.amplitudes().iter().map(|&a| complex_value(a)).collect::<Vec<_>>()
        }),
    }
}

fn role_value(role: &WireRole) -> Value {
    match role {
        WireRole::Chronology => json!("chronology"),
        WireRole::Environment => json!("environment"),
        WireRole::CtcPast { loop_id } => json!(format!("ctc_past:{loop_id}")),
        WireRole::CtcFuture { loop_id } => json!(format!("ctc_future:{loop_id}")),
    }
}

fn active_string(active: &[usize], basis: Basis) -> String {
    active
        .iter()
        .map(|&digit| match (basis, digit) {
            (Basis::Computational, d) => char::from_digit(d as u32, 10).unwrap_or('?'),
            (Basis::PlusMinus, 0) => '+',
            (Basis::PlusMinus, _) => '-',
        })
        .collect()
}

fn gate_value(gate: &GateSpec, ids: &[String]) -> Result<Value, SchemaError> {
    let targets: Vec<&String> = gate.targets.iter().map(|&t| &ids[t]).collect();
    match &gate.kind {
        GateKind::Named { name, basis } => Ok(json!({
            "kind": "named",
            "name": name.as_str(),
            "basis": basis_value(*basis),
            "targets": targets,
        })),
        GateKind::Controlled {
            controls,
            control_basis,
            active,
            inner,
        } => {
            let GateKind::Named { name, basis } = inner.as_ref() else {
                return Err(SchemaError::Unserializable(
                    "controlled gates with non-named inner gates have no JSON form".into(),
                ));
            };
            let control_ids: Vec<&String> = controls.iter().map(|&c| &ids[c]).collect();
            Ok(json!({
                "kind": "named",
                "name": name.as_str(),
                "basis": basis_value(*basis),
                "targets": targets,
                "controls": control_ids,
                "control_basis": basis_value(*control_basis),
                "active": active_string(active, *control_basis),
            }))
        }
        GateKind::Table { basis, rows } => Ok(json!({
            "kind": "table",
            "basis": basis_value(*basis),
            "targets": targets,
            "rows": rows.iter().map(|r| json!({
                "in": r.input,
                "out": r.output,
                "amp": complex_value(r.amp),
            })).collect::<Vec<_>>(),
        })),
        GateKind::CustomMatrix { operator } => {
            let n = operator.dim();
            let entries: Vec<Value> = (0..n)
                .map(|i| {
                    Value::Array((0..n).map(|j| complex_value(operator.entry(i, j))).collect())
                })
                .collect();
            Ok(json!({
                "kind": "matrix",
                "targets": targets,
                "entries": entries,
            }))
        }
    }
}

/// Serialize a circuit to its canonical JSON document.
pub fn serialize_circuit(circuit: &Circuit) -> Result<String, SchemaError> {
    let ids: Vec<String> = circuit.wires.iter().map(|w| w.id.clone()).collect();
    let wires: Vec<Value> = circuit
        .wires
        .iter()
        .map(|w| {
            json!({
                "id": w.id,
                "dim": w.dim,
                "role": role_value(&w.role),
                "init": init_value(&w.init),
            })
        })
        .collect();
    let gates = circuit
        .gates
        .iter()
        .map(|g| gate_value(g, &ids))
        .collect::<Result<Vec<_>, _>>()?;
    let postselect: Vec<Value> = circuit
        .postselections
        .iter()
        .map(|ps| {
            json!({
                "pair": [ids[ps.pair.0], ids[ps.pair.1]],
                "state": "phi_plus",
            })
        })
        .collect();
    let doc = json!({
        "wires": wires,
        "gates": gates,
        "postselect": postselect,
    });
    Ok(serde_json::to_string_pretty(&doc).expect("json serialization cannot fail"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_parses() {
        let text = r#"{"wires":[{"id":"q0","dim":2,"role":"chronology","init":"zero"}],"gates":[],"postselect":[]}"#;
        let circuit = parse_circuit(text).unwrap();
        assert_eq!(circuit.wires.len(), 1);
        assert_eq!(circuit.wires[0].id, "q0");
        assert_eq!(circuit.wires[0].init, InitState::Zero);
        assert!(circuit.gates.is_empty());
    }

    #[test]
    fn one_sided_bell_declaration_is_completed() {
        let text = r#"{"wires":[
            {"id":"q0","dim":2,"role":"chronology","init":"bell:psi_plus:q1"},
            {"id":"q1","dim":2,"role":"chronology","init":"zero"}],
            "gates":[],"postselect":[]}"#;
        let circuit = parse_circuit(text).unwrap();
        assert_eq!(
            circuit.wires[1].init,
            InitState::BellPsiPlus { partner: "q0".into() }
        );
        let state = circuit.initial_state(&Default::default()).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(state.amp(0b00).norm() < 1e-15);
        assert!((state.amp(0b01).re - h).abs() < 1e-15);
        assert!((state.amp(0b10).re - h).abs() < 1e-15);
        assert!(state.amp(0b11).norm() < 1e-15);
    }

    #[test]
    fn malformed_basis_names_the_field() {
        let text = r#"{"wires":[{"id":"q0","dim":2,"role":"chronology","init":"zero"}],
            "gates":[{"kind":"named","name":"X","basis":"pm2","targets":["q0"]}],
            "postselect":[]}"#;
        let error = parse_circuit(text).unwrap_err();
        let message = error.to_string();
        assert!(message.contains("$.gates[0].basis"), "{message}");
        assert!(message.contains("pm2"), "{message}");
    }

    #[test]
    fn unknown_gate_name_is_rejected() {
        let text = r#"{"wires":[{"id":"q0","dim":2,"role":"chronology","init":"zero"}],
            "gates":[{"kind":"named","name":"FOO","basis":"z","targets":["q0"]}],
            "postselect":[]}"#;
        let error = parse_circuit(text).unwrap_err();
        assert!(error.to_string().contains("unknown gate name"));
    }

    #[test]
    fn duplicate_wire_ids_are_rejected() {
        let text = r#"{"wires":[
            {"id":"q0","dim":2,"role":"chronology","init":"zero"},
            {"id":"q0","dim":2,"role":"chronology","init":"zero"}],
            "gates":[],"postselect":[]}"#;
        let error = parse_circuit(text).unwrap_err();
        assert!(error.to_string().contains("duplicate wire id"));
    }

    #[test]
    fn roundtrip_is_structurally_stable() {
        let text = r#"{"wires":[
            {"id":"a","dim":2,"role":"chronology","init":"plus"},
            {"id":"p","dim":2,"role":"ctc_past:L","init":"bell:phi_plus:f"},
            {"id":"f","dim":2,"role":"ctc_future:L","init":"bell:phi_plus:p"}],
            "gates":[
              {"kind":"named","name":"CNOT","basis":"z","targets":["p","a"]},
              {"kind":"named","name":"Z","basis":"z","targets":["p"],"controls":["a"],"control_basis":"pm","active":"+"},
              {"kind":"table","basis":"pm","targets":["a","p"],"rows":[
                 {"in":"++","out":"+-","amp":[1.0,0.0]},
                 {"in":"+-","out":"++","amp":[1.0,0.0]},
                 {"in":"-+","out":"-+","amp":[1.0,0.0]},
                 {"in":"--","out":"--","amp":[1.0,0.0]}]}],
            "postselect":[{"pair":["p","f"],"state":"phi_plus"}]}"#;
        let circuit = parse_circuit(text).unwrap();
        let serialized = serialize_circuit(&circuit).unwrap();
        let reparsed = parse_circuit(&serialized).unwrap();
        assert_eq!(circuit, reparsed);
        let reserialized = serialize_circuit(&reparsed).unwrap();
        assert_eq!(serialized, reserialized);
    }
}
