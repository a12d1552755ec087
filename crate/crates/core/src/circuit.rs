//! Circuit data model and its JSON interchange format.
//!
//! Qubit `i` occupies bit `i` of a packed basis-state index, so qubit 0 is
//! the least significant bit. A circuit always starts from `|0…0⟩`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Largest supported register. Indices and masks stay non-negative in a
/// signed 64-bit SQL integer column.
pub const MAX_QUBITS: usize = 62;

/// Tolerance used when checking that an explicit matrix is unitary.
pub const UNITARY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GateKind {
    H,
    X,
    Y,
    Z,
    S,
    Sdg,
    T,
    Tdg,
    Rx,
    Ry,
    Rz,
    Cx,
    Cz,
    Swap,
    Ccx,
    /// Explicit 2×2 unitary.
    U1,
    /// Explicit 4×4 unitary.
    U2,
}

impl GateKind {
    pub const ALL: [GateKind; 17] = [
        GateKind::H,
        GateKind::X,
        GateKind::Y,
        GateKind::Z,
        GateKind::S,
        GateKind::Sdg,
        GateKind::T,
        GateKind::Tdg,
        GateKind::Rx,
        GateKind::Ry,
        GateKind::Rz,
        GateKind::Cx,
        GateKind::Cz,
        GateKind::Swap,
        GateKind::Ccx,
        GateKind::U1,
        GateKind::U2,
    ];

    /// Kinds fully determined by their name and angle parameters.
    pub const NAMED: [GateKind; 15] = [
        GateKind::H,
        GateKind::X,
        GateKind::Y,
        GateKind::Z,
        GateKind::S,
        GateKind::Sdg,
        GateKind::T,
        GateKind::Tdg,
        GateKind::Rx,
        GateKind::Ry,
        GateKind::Rz,
        GateKind::Cx,
        GateKind::Cz,
        GateKind::Swap,
        GateKind::Ccx,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GateKind::H => "h",
            GateKind::X => "x",
            GateKind::Y => "y",
            GateKind::Z => "z",
            GateKind::S => "s",
            GateKind::Sdg => "sdg",
            GateKind::T => "t",
            GateKind::Tdg => "tdg",
            GateKind::Rx => "rx",
            GateKind::Ry => "ry",
            GateKind::Rz => "rz",
            GateKind::Cx => "cx",
            GateKind::Cz => "cz",
            GateKind::Swap => "swap",
            GateKind::Ccx => "ccx",
            GateKind::U1 => "u1",
            GateKind::U2 => "u2",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            GateKind::Cx | GateKind::Cz | GateKind::Swap | GateKind::U2 => 2,
            GateKind::Ccx => 3,
            _ => 1,
        }
    }

    /// Number of angle parameters the kind takes.
    pub fn num_params(self) -> usize {
        match self {
            GateKind::Rx | GateKind::Ry | GateKind::Rz => 1,
            _ => 0,
        }
    }

    pub fn has_matrix(self) -> bool {
        matches!(self, GateKind::U1 | GateKind::U2)
    }

    /// True for kinds whose unitary is diagonal for every parameter value.
    pub fn is_diagonal(self) -> bool {
        matches!(
            self,
            GateKind::Z
                | GateKind::S
                | GateKind::Sdg
                | GateKind::T
                | GateKind::Tdg
                | GateKind::Rz
                | GateKind::Cz
        )
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GateKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown gate `{s}`"))
    }
}

/// One gate application.
#[derive(Clone, Debug, PartialEq)]
pub struct GateInstance {
    pub kind: GateKind,
    /// Ordered target qubits. For controlled kinds the controls come first.
    pub qubits: Vec<usize>,
    /// Angles in radians.
    pub params: Vec<f64>,
    /// Row-major explicit matrix for `u1`/`u2`.
    pub matrix: Option<Vec<Complex64>>,
}

impl GateInstance {
    pub fn new(kind: GateKind, qubits: &[usize], params: &[f64]) -> Self {
        GateInstance {
            kind,
            qubits: qubits.to_vec(),
            params: params.to_vec(),
            matrix: None,
        }
    }

    /// An explicit unitary on one (`u1`) or two (`u2`) qubits.
    pub fn unitary(qubits: &[usize], matrix: Vec<Complex64>) -> Self {
        let kind = if qubits.len() == 2 {
            GateKind::U2
        } else {
            GateKind::U1
        };
        GateInstance {
            kind,
            qubits: qubits.to_vec(),
            params: Vec::new(),
            matrix: Some(matrix),
        }
    }

    pub fn h(q: usize) -> Self {
        Self::new(GateKind::H, &[q], &[])
    }

    pub fn x(q: usize) -> Self {
        Self::new(GateKind::X, &[q], &[])
    }

    pub fn cx(control: usize, target: usize) -> Self {
        Self::new(GateKind::Cx, &[control, target], &[])
    }

    pub fn rz(q: usize, theta: f64) -> Self {
        Self::new(GateKind::Rz, &[q], &[theta])
    }

    /// Checks this gate against a register of `num_qubits`; `index` is the
    /// gate's position used in error messages.
    pub fn validate(&self, index: usize, num_qubits: usize) -> Result<()> {
        let kind = self.kind;
        if self.qubits.len() != kind.arity() {
            return Err(Error::validation(
                index,
                format!(
                    "{kind} expects {} qubit(s), got {}",
                    kind.arity(),
                    self.qubits.len()
                ),
            ));
        }
        for (p, &q) in self.qubits.iter().enumerate() {
            if q >= num_qubits {
                return Err(Error::validation(
                    index,
                    format!("qubit {q} out of range for {num_qubits} qubit(s)"),
                ));
            }
            if self.qubits[..p].contains(&q) {
                return Err(Error::validation(index, format!("duplicate qubit {q}")));
            }
        }
        if self.params.len() != kind.num_params() {
            return Err(Error::validation(
                index,
                format!(
                    "{kind} expects {} parameter(s), got {}",
                    kind.num_params(),
                    self.params.len()
                ),
            ));
        }
        if let Some(p) = self.params.iter().find(|p| !p.is_finite()) {
            return Err(Error::validation(index, format!("non-finite angle {p}")));
        }
        match (&self.matrix, kind.has_matrix()) {
            (None, true) => {
                return Err(Error::validation(index, format!("{kind} requires a matrix")));
            }
            (Some(_), false) => {
                return Err(Error::validation(
                    index,
                    format!("{kind} does not take a matrix"),
                ));
            }
            (Some(m), true) => {
                let dim = 1usize << kind.arity();
                if m.len() != dim * dim {
                    return Err(Error::validation(
                        index,
                        format!("{kind} matrix needs {} entries, got {}", dim * dim, m.len()),
                    ));
                }
                if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::validation(index, "non-finite matrix entry"));
                }
                let dev = unitarity_deviation(m, dim);
                if dev > UNITARY_TOLERANCE {
                    return Err(Error::validation(
                        index,
                        format!("{kind} matrix is not unitary (max |M†M - I| = {dev:e})"),
                    ));
                }
            }
            (None, false) => {}
        }
        Ok(())
    }
}

/// `max |M†M − I|` over all entries of a row-major `dim × dim` matrix.
/// Non-finite entries give `f64::INFINITY`.
pub fn unitarity_deviation(m: &[Complex64], dim: usize) -> f64 {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return f64::INFINITY;
    }
    let mut worst = 0.0f64;
    for a in 0..dim {
        for b in 0..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..dim {
                acc += m[k * dim + a].conj() * m[k * dim + b];
            }
            if a == b {
                acc -= 1.0;
            }
            worst = worst.max(acc.norm());
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    pub num_qubits: usize,
    pub gates: Vec<GateInstance>,
    pub name: Option<String>,
}

impl Circuit {
    /// Builds and validates a circuit.
    pub fn new(num_qubits: usize, gates: Vec<GateInstance>) -> Result<Self> {
        let c = Circuit {
            num_qubits,
            gates,
            name: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_qubits == 0 || self.num_qubits > MAX_QUBITS {
            return Err(Error::validation(
                None,
                format!(
                    "num_qubits must be in 1..={MAX_QUBITS}, got {}",
                    self.num_qubits
                ),
            ));
        }
        for (i, g) in self.gates.iter().enumerate() {
            g.validate(i, self.num_qubits)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        parse_circuit_json(text)
    }

    pub fn to_json(&self) -> String {
        serialize_circuit_json(self)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GateWire {
    name: String,
    qubits: Vec<i64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<[f64; 2]>>,
}

#[derive(Serialize)]
struct CircuitWire<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<&'a str>,
    num_qubits: usize,
    gates: Vec<GateWire>,
}

/// Converts a `serde_json` error position into a byte offset in `text`.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

/// Parses and validates a circuit from its JSON form.
pub fn parse_circuit_json(text: &str) -> Result<Circuit> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Json {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    circuit_from_value(&value)
}

/// Validates an already-parsed JSON value as a circuit.
pub fn circuit_from_value(value: &Value) -> Result<Circuit> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::validation(None, "circuit must be a JSON object"))?;
    if let Some(key) = obj
        .keys()
        .find(|k| !matches!(k.as_str(), "name" | "num_qubits" | "gates"))
    {
        return Err(Error::validation(None, format!("unknown field `{key}`")));
    }
    let name = match obj.get("name") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(Error::validation(None, "`name` must be a string")),
    };
    let num_qubits = obj
        .get("num_qubits")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::validation(None, "`num_qubits` must be a positive integer"))?;
    if num_qubits == 0 || num_qubits > MAX_QUBITS as u64 {
        return Err(Error::validation(
            None,
            format!("num_qubits must be in 1..={MAX_QUBITS}, got {num_qubits}"),
        ));
    }
    let num_qubits = num_qubits as usize;
    let gates_json = obj
        .get("gates")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::validation(None, "`gates` must be an array"))?;

    let mut gates = Vec::with_capacity(gates_json.len());
    for (index, g) in gates_json.iter().enumerate() {
        let wire: GateWire = serde_json::from_value(g.clone())
            .map_err(|e| Error::validation(index, e.to_string()))?;
        let kind: GateKind = wire
            .name
            .parse()
            .map_err(|e: String| Error::validation(index, e))?;
        let mut qubits = Vec::with_capacity(wire.qubits.len());
        for q in wire.qubits {
            if q < 0 || q as u64 >= num_qubits as u64 {
                return Err(Error::validation(
                    index,
                    format!("qubit {q} out of range for {num_qubits} qubit(s)"),
                ));
            }
            qubits.push(q as usize);
        }
        let gate = GateInstance {
            kind,
            qubits,
            params: wire.params,
            matrix: wire
                .matrix
                .map(|m| m.into_iter().map(|[re, im]| Complex64::new(re, im)).collect()),
        };
        gate.validate(index, num_qubits)?;
        gates.push(gate);
    }
    Ok(Circuit {
        num_qubits,
        gates,
        name,
    })
}

/// Canonical compact JSON: fields in schema order, angles as shortest
/// round-trip decimals.
pub fn serialize_circuit_json(c: &Circuit) -> String {
    let wire = CircuitWire {
        name: c.name.as_deref(),
        num_qubits: c.num_qubits,
        gates: c
            .gates
            .iter()
            .map(|g| GateWire {
                name: g.kind.name().to_string(),
                qubits: g.qubits.iter().map(|&q| q as i64).collect(),
                params: g.params.clone(),
                matrix: g
                    .matrix
                    .as_ref()
                    .map(|m| m.iter().map(|z| [z.re, z.im]).collect()),
            })
            .collect(),
    };
    serde_json::to_string(&wire).expect("circuit serialization is infallible")
}
