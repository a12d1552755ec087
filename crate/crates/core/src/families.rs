//! Parameterized circuit families.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, GateInstance, GateKind, MAX_QUBITS};
use crate::error::{Error, Result};

/// A parameter value as it arrives from JSON or the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(u64),
    Bits(Vec<u8>),
    Text(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Bits(bits) => bits.iter().try_for_each(|b| write!(f, "{b}")),
            ParamValue::Text(s) => f.write_str(s),
        }
    }
}

impl ParamValue {
    /// Interprets command-line text: plain integers become `Int`.
    pub fn from_cli(text: &str) -> Self {
        match text.parse::<u64>() {
            // A leading zero keeps the value as text so `input_bits=01` keeps its width.
            Ok(v) if !(text.len() > 1 && text.starts_with('0')) => ParamValue::Int(v),
            _ => ParamValue::Text(text.to_string()),
        }
    }
}

/// A family name plus parameter bindings, the wire form of a family reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, ParamValue>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CircuitFamily {
    Ghz { n: usize },
    EqualSuperposition { n: usize },
    /// Qubit `n - 1` is the ancilla that ends up holding the parity of
    /// `input_bits`. When `ancilla_init` is set the ancilla starts in `|1⟩`.
    ParityCheck {
        n: usize,
        input_bits: Vec<bool>,
        ancilla_init: bool,
    },
    SparseChain { n: usize, depth: usize, seed: u64 },
    RandomDense { n: usize, depth: usize, seed: u64 },
}

pub const FAMILY_NAMES: [&str; 5] = [
    "ghz",
    "equal_superposition",
    "parity_check",
    "sparse_chain",
    "random_dense",
];

fn int_param(params: &BTreeMap<String, ParamValue>, key: &str) -> Result<Option<u64>> {
    match params.get(key) {
        None => Ok(None),
        Some(ParamValue::Int(v)) => Ok(Some(*v)),
        Some(ParamValue::Text(s)) => s
            .parse()
            .map(Some)
            .map_err(|_| Error::Family(format!("parameter `{key}` must be an integer, got `{s}`"))),
        Some(other) => Err(Error::Family(format!(
            "parameter `{key}` must be an integer, got `{other}`"
        ))),
    }
}

fn required(params: &BTreeMap<String, ParamValue>, key: &str) -> Result<u64> {
    int_param(params, key)?.ok_or_else(|| Error::Family(format!("missing parameter `{key}`")))
}

fn bits_param(params: &BTreeMap<String, ParamValue>, key: &str) -> Result<Vec<bool>> {
    let bad = |v: &dyn fmt::Display| {
        Error::Family(format!("parameter `{key}` must be a bit string, got `{v}`"))
    };
    match params.get(key) {
        None => Err(Error::Family(format!("missing parameter `{key}`"))),
        Some(ParamValue::Bits(bits)) => bits
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(bad(&b)),
            })
            .collect(),
        Some(ParamValue::Text(s)) => s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(bad(s)),
            })
            .collect(),
        // Command-line bit strings without a leading zero arrive as integers.
        Some(ParamValue::Int(v)) => v
            .to_string()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(bad(v)),
            })
            .collect(),
    }
}

impl CircuitFamily {
    pub fn from_spec(spec: &FamilySpec) -> Result<Self> {
        let p = &spec.params;
        let allowed: &[&str] = match spec.name.as_str() {
            "ghz" | "equal_superposition" => &["n"],
            "parity_check" => &["n", "input_bits"],
            "sparse_chain" | "random_dense" => &["n", "depth", "seed"],
            other => {
                return Err(Error::Family(format!(
                    "unknown family `{other}` (known: {})",
                    FAMILY_NAMES.join(", ")
                )));
            }
        };
        if let Some(k) = p.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Family(format!(
                "family `{}` has no parameter `{k}`",
                spec.name
            )));
        }
        let n = required(p, "n")? as usize;
        let family = match spec.name.as_str() {
            "ghz" => CircuitFamily::Ghz { n },
            "equal_superposition" => CircuitFamily::EqualSuperposition { n },
            "parity_check" => {
                let mut input_bits = bits_param(p, "input_bits")?;
                // A full-register string carries the ancilla's initial value last.
                let ancilla_init = if input_bits.len() == n && n >= 1 {
                    input_bits.pop().unwrap_or(false)
                } else {
                    false
                };
                CircuitFamily::ParityCheck {
                    n,
                    input_bits,
                    ancilla_init,
                }
            }
            "sparse_chain" => CircuitFamily::SparseChain {
                n,
                depth: required(p, "depth")? as usize,
                seed: int_param(p, "seed")?.unwrap_or(0),
            },
            _ => CircuitFamily::RandomDense {
                n,
                depth: required(p, "depth")? as usize,
                seed: int_param(p, "seed")?.unwrap_or(0),
            },
        };
        family.check()?;
        Ok(family)
    }

    pub fn name(&self) -> &'static str {
        match self {
            CircuitFamily::Ghz { .. } => "ghz",
            CircuitFamily::EqualSuperposition { .. } => "equal_superposition",
            CircuitFamily::ParityCheck { .. } => "parity_check",
            CircuitFamily::SparseChain { .. } => "sparse_chain",
            CircuitFamily::RandomDense { .. } => "random_dense",
        }
    }

    pub fn num_qubits(&self) -> usize {
        match *self {
            CircuitFamily::Ghz { n }
            | CircuitFamily::EqualSuperposition { n }
            | CircuitFamily::ParityCheck { n, .. }
            | CircuitFamily::SparseChain { n, .. }
            | CircuitFamily::RandomDense { n, .. } => n,
        }
    }

    fn check(&self) -> Result<()> {
        let n = self.num_qubits();
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::Family(format!(
                "{}: n must be in 1..={MAX_QUBITS}, got {n}",
                self.name()
            )));
        }
        if let CircuitFamily::ParityCheck { input_bits, .. } = self {
            if n < 2 {
                return Err(Error::Family("parity_check: n must be at least 2".into()));
            }
            if input_bits.len() != n - 1 {
                return Err(Error::Family(format!(
                    "parity_check: input_bits must have length n-1 = {}, got {}",
                    n - 1,
                    input_bits.len()
                )));
            }
        }
        Ok(())
    }
}

/// Instantiates a family as a concrete circuit.
pub fn generate_family(family: &CircuitFamily) -> Result<Circuit> {
    family.check()?;
    let n = family.num_qubits();
    let mut gates = Vec::new();
    match family {
        CircuitFamily::Ghz { .. } => {
            gates.push(GateInstance::h(0));
            gates.extend((0..n - 1).map(|q| GateInstance::cx(q, q + 1)));
        }
        CircuitFamily::EqualSuperposition { .. } => {
            gates.extend((0..n).map(GateInstance::h));
        }
        CircuitFamily::ParityCheck {
            input_bits,
            ancilla_init,
            ..
        } => {
            let ancilla = n - 1;
            gates.extend(
                input_bits
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| **b)
                    .map(|(q, _)| GateInstance::x(q)),
            );
            if *ancilla_init {
                gates.push(GateInstance::x(ancilla));
            }
            gates.extend((0..ancilla).map(|q| GateInstance::cx(q, ancilla)));
        }
        CircuitFamily::SparseChain { depth, seed, .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for _ in 0..*depth {
                if n >= 2 && rng.random_bool(0.5) {
                    let [c, t] = distinct_qubits::<2>(&mut rng, n);
                    gates.push(GateInstance::cx(c, t));
                } else {
                    gates.push(GateInstance::x(rng.random_range(0..n)));
                }
            }
        }
        CircuitFamily::RandomDense { depth, seed, .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let kinds: Vec<GateKind> = GateKind::NAMED
                .into_iter()
                .filter(|k| k.arity() <= n)
                .collect();
            for _ in 0..*depth {
                let kind = kinds[rng.random_range(0..kinds.len())];
                let qubits: Vec<usize> = match kind.arity() {
                    1 => vec![rng.random_range(0..n)],
                    2 => distinct_qubits::<2>(&mut rng, n).to_vec(),
                    _ => distinct_qubits::<3>(&mut rng, n).to_vec(),
                };
                let params: Vec<f64> = (0..kind.num_params())
                    .map(|_| rng.random_range(0.0..TAU))
                    .collect();
                gates.push(GateInstance::new(kind, &qubits, &params));
            }
        }
    }
    let circuit = Circuit::new(n, gates)?;
    Ok(circuit.with_name(describe(family)))
}

fn distinct_qubits<const K: usize>(rng: &mut impl Rng, n: usize) -> [usize; K] {
    let mut out = [0usize; K];
    for i in 0..K {
        loop {
            let q = rng.random_range(0..n);
            if !out[..i].contains(&q) {
                out[i] = q;
                break;
            }
        }
    }
    out
}

fn describe(family: &CircuitFamily) -> String {
    match family {
        CircuitFamily::Ghz { n } => format!("ghz(n={n})"),
        CircuitFamily::EqualSuperposition { n } => format!("equal_superposition(n={n})"),
        CircuitFamily::ParityCheck {
            n,
            input_bits,
            ancilla_init,
        } => {
            let bits: String = input_bits
                .iter()
                .chain(ancilla_init.then_some(&true))
                .map(|&b| if b { '1' } else { '0' })
                .collect();
            format!("parity_check(n={n},input_bits={bits})")
        }
        CircuitFamily::SparseChain { n, depth, seed } => {
            format!("sparse_chain(n={n},depth={depth},seed={seed})")
        }
        CircuitFamily::RandomDense { n, depth, seed } => {
            format!("random_dense(n={n},depth={depth},seed={seed})")
        }
    }
}

/// Describes one family parameter for catalogs and UIs.
#[derive(Clone, Debug, Serialize)]
pub struct ParamDescriptor {
    pub name: &'static str,
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub min: Option<u64>,
    pub max: Option<u64>,
    pub default: Option<u64>,
    pub description: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilyDescriptor {
    pub name: &'static str,
    pub description: &'static str,
    pub parameters: Vec<ParamDescriptor>,
}

fn qubits_param(min: u64) -> ParamDescriptor {
    ParamDescriptor {
        name: "n",
        kind: "int",
        min: Some(min),
        max: Some(MAX_QUBITS as u64),
        default: None,
        description: "number of qubits",
    }
}

fn depth_params() -> [ParamDescriptor; 2] {
    [
        ParamDescriptor {
            name: "depth",
            kind: "int",
            min: Some(0),
            max: None,
            default: None,
            description: "number of gates",
        },
        ParamDescriptor {
            name: "seed",
            kind: "int",
            min: Some(0),
            max: None,
            default: Some(0),
            description: "pseudorandom seed",
        },
    ]
}

/// Static catalog of the built-in families.
pub fn catalog() -> Vec<FamilyDescriptor> {
    vec![
        FamilyDescriptor {
            name: "ghz",
            description: "H on qubit 0 followed by a CX ladder; two nonzero amplitudes",
            parameters: vec![qubits_param(1)],
        },
        FamilyDescriptor {
            name: "equal_superposition",
            description: "H on every qubit; all 2^n amplitudes equal",
            parameters: vec![qubits_param(1)],
        },
        FamilyDescriptor {
            name: "parity_check",
            description: "X on set input bits, then CX from every input qubit into the ancilla (qubit n-1)",
            parameters: vec![
                qubits_param(2),
                ParamDescriptor {
                    name: "input_bits",
                    kind: "bits",
                    min: None,
                    max: None,
                    default: None,
                    description: "bit string of length n-1, character i sets qubit i; an n-th character sets the ancilla",
                },
            ],
        },
        FamilyDescriptor {
            name: "sparse_chain",
            description: "random X and CX gates only; the state stays a single basis state",
            parameters: [vec![qubits_param(1)], depth_params().to_vec()].concat(),
        },
        FamilyDescriptor {
            name: "random_dense",
            description: "random gates over the full named gate set with uniform angles",
            parameters: [vec![qubits_param(1)], depth_params().to_vec()].concat(),
        },
    ]
}
