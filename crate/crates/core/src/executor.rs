//! Runs SQL plans on a backend session and collects states and metrics.
//!
//! A run owns its session from start to finish. Nothing here is meant to be
//! shared across threads mid-run; concurrent simulations open separate
//! sessions.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::backend::{database_size, BackendAdapter, BackendKind, Location};
use crate::circuit::Circuit;
use crate::codegen::{SqlPlan, StatementKind};
use crate::error::{Error, Result};
use crate::oracle::{DenseState, MAX_DENSE_QUBITS};
use crate::parallel::ExecPolicy;
use crate::state::{probabilities, total_probability, StateRow};

/// Tolerance on total probability accepted by [`sample_counts`].
pub const SAMPLING_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    InMemory,
    OnDisk,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in_memory" | "in-memory" | "memory" => Ok(Mode::InMemory),
            "on_disk" | "on-disk" | "disk" => Ok(Mode::OnDisk),
            _ => Err(Error::validation(None, format!("unknown mode `{s}` (use in_memory or on_disk)"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunMetrics {
    pub backend: String,
    pub backend_version: String,
    pub mode: Mode,
    /// Wall time of each apply step, in plan order.
    pub step_wall_ns: Vec<u64>,
    /// Row count of each step's output table.
    pub step_rows: Vec<u64>,
    /// Sum of `step_wall_ns`.
    pub apply_wall_ns: u64,
    /// Whole run including table creation, loading and read-back.
    pub total_wall_ns: u64,
    /// Largest state table seen, `state_0` included.
    pub peak_rows: u64,
    pub final_rows: u64,
    pub db_file_bytes: Option<u64>,
    /// Process peak resident set during the run. `None` where the platform
    /// does not expose it.
    pub peak_rss_bytes: Option<u64>,
}

/// State after one plan step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepState {
    pub step: usize,
    pub gate_indices: Vec<usize>,
    pub rows: Vec<StateRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunOutput {
    pub final_state: Vec<StateRow>,
    /// Present only when the plan kept its intermediate tables.
    pub steps: Option<Vec<StepState>>,
    pub metrics: RunMetrics,
}

impl RunOutput {
    /// The export document: final state, probabilities and metrics, plus
    /// per-step states when they were kept.
    pub fn to_json(&self) -> serde_json::Value {
        let mut doc = json!({
            "final_state": self.final_state,
            "probabilities": probabilities(&self.final_state),
            "metrics": self.metrics,
        });
        if let Some(steps) = &self.steps {
            doc["steps"] = json!(steps);
        }
        doc
    }
}

fn elapsed_ns(start: Instant) -> u64 {
    start.elapsed().as_nanos().min(u64::MAX as u128) as u64
}

/// Executes every statement of `plan` in order on an open session.
pub fn run_plan(plan: &SqlPlan, backend: &mut dyn BackendAdapter) -> Result<RunOutput> {
    let caps = backend.capabilities();
    let started = Instant::now();
    let mut metrics = RunMetrics {
        backend: caps.name,
        backend_version: caps.version,
        ..RunMetrics::default()
    };

    for (k, st) in plan.statements.iter().enumerate() {
        let t = Instant::now();
        backend.execute(&st.sql).map_err(|e| e.at_statement(k))?;
        let ns = elapsed_ns(t);
        match st.kind {
            StatementKind::ApplyStep => {
                metrics.step_wall_ns.push(ns);
                let step = st.step_index.unwrap_or(metrics.step_rows.len() + 1);
                let rows = backend
                    .table_row_count(&crate::codegen::state_table(step))
                    .map_err(|e| e.at_statement(k))?;
                metrics.step_rows.push(rows);
                metrics.peak_rows = metrics.peak_rows.max(rows);
            }
            StatementKind::InsertState => {
                let rows = backend
                    .table_row_count(&plan.state_table_names[0])
                    .map_err(|e| e.at_statement(k))?;
                metrics.peak_rows = metrics.peak_rows.max(rows);
            }
            _ => {}
        }
    }
    metrics.apply_wall_ns = metrics.step_wall_ns.iter().sum();

    let final_state = backend.query_state(plan.final_table())?;
    let steps = if plan.keep_intermediates {
        let mut out = Vec::with_capacity(plan.steps.len());
        for step in &plan.steps {
            out.push(StepState {
                step: step.index,
                gate_indices: step.gate_indices.clone(),
                rows: backend.query_state(&plan.state_table_names[step.index])?,
            });
        }
        Some(out)
    } else {
        None
    };
    metrics.final_rows = final_state.len() as u64;
    metrics.total_wall_ns = elapsed_ns(started);
    Ok(RunOutput {
        final_state,
        steps,
        metrics,
    })
}

/// Opens a fresh session on `kind`, runs the plan and closes the session.
/// On-disk runs use a temporary database file that is removed afterwards.
pub fn simulate_plan(plan: &SqlPlan, kind: BackendKind, mode: Mode) -> Result<RunOutput> {
    let dir = match mode {
        Mode::InMemory => None,
        Mode::OnDisk => Some(tempfile::tempdir()?),
    };
    let location = match &dir {
        None => Location::InMemory,
        Some(d) => Location::File(d.path().join(format!("{}.db", kind.name()))),
    };
    let rss_tracked = reset_peak_rss();
    let mut session = kind.open(&location)?;
    let result = run_plan(plan, session.as_mut());
    let closed = session.close();
    let mut out = result?;
    closed?;
    out.metrics.mode = mode;
    if let Location::File(path) = &location {
        out.metrics.db_file_bytes = database_size(path);
    }
    out.metrics.peak_rss_bytes = if rss_tracked { peak_rss() } else { None };
    Ok(out)
}

/// Runs `circuit` on the dense state-vector simulator and reports it in the
/// same shape as a SQL run. Per-step entries are per gate.
pub fn simulate_oracle(circuit: &Circuit, epsilon: f64, keep_intermediates: bool) -> Result<RunOutput> {
    if circuit.num_qubits > MAX_DENSE_QUBITS {
        return Err(Error::OracleRefused {
            qubits: circuit.num_qubits,
            limit: MAX_DENSE_QUBITS,
        });
    }
    circuit.validate()?;
    let started = Instant::now();
    let mut state = DenseState::zero(circuit.num_qubits)?;
    let dim = 1u64 << circuit.num_qubits;
    let mut metrics = RunMetrics {
        backend: "oracle".into(),
        backend_version: env!("CARGO_PKG_VERSION").into(),
        peak_rows: dim,
        ..RunMetrics::default()
    };
    let mut steps = keep_intermediates.then(Vec::new);
    let policy = ExecPolicy::default();
    for (k, gate) in circuit.gates.iter().enumerate() {
        let t = Instant::now();
        state.apply_with(gate, policy)?;
        metrics.step_wall_ns.push(elapsed_ns(t));
        metrics.step_rows.push(dim);
        if let Some(steps) = &mut steps {
            steps.push(StepState {
                step: k + 1,
                gate_indices: vec![k],
                rows: state.to_rows(epsilon),
            });
        }
    }
    metrics.apply_wall_ns = metrics.step_wall_ns.iter().sum();
    let final_state = state.to_rows(epsilon);
    metrics.final_rows = final_state.len() as u64;
    metrics.total_wall_ns = elapsed_ns(started);
    Ok(RunOutput {
        final_state,
        steps,
        metrics,
    })
}

/// Draws `shots` measurement outcomes from the Born distribution of `rows`.
/// Deterministic for a fixed seed.
pub fn sample_counts(rows: &[StateRow], shots: u64, seed: u64) -> Result<BTreeMap<u64, u64>> {
    if rows.is_empty() {
        return Err(Error::Unnormalized(0.0));
    }
    let total = total_probability(rows);
    if (total - 1.0).abs().is_nan() || (total - 1.0).abs() > SAMPLING_TOLERANCE {
        return Err(Error::Unnormalized(total));
    }
    if shots == 0 {
        return Err(Error::validation(None, "shots must be at least 1"));
    }
    let probs = probabilities(rows);
    let mut cumulative = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p.p;
        cumulative.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = BTreeMap::new();
    for _ in 0..shots {
        let u = rng.random::<f64>() * acc;
        let k = cumulative.partition_point(|&c| c <= u).min(probs.len() - 1);
        *counts.entry(probs[k].s).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Resets the kernel's peak-RSS counter for this process. Returns whether
/// the reset took effect, which makes a later [`peak_rss`] reading
/// specific to the work done since.
fn reset_peak_rss() -> bool {
    cfg!(target_os = "linux") && std::fs::write("/proc/self/clear_refs", "5").is_ok()
}

/// Peak resident set size of this process, from `/proc/self/status`.
pub fn peak_rss() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}
