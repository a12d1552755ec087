//! Parameter sweeps over circuit families and backends.
//!
//! Runs are strictly sequential, each in a fresh session, so timings are not
//! contaminated by concurrent work.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backend::BackendKind;
use crate::circuit::Circuit;
use crate::codegen::{translate_circuit, CodegenOptions, SqlPlan};
use crate::error::{Error, Result};
use crate::executor::{simulate_oracle, simulate_plan, Mode, RunOutput};
use crate::families::{generate_family, CircuitFamily, FamilySpec, ParamValue};

/// Name under which the dense simulator appears in scenarios and reports.
pub const ORACLE: &str = "oracle";

/// Fixed CSV column order.
pub const CSV_HEADER: [&str; 10] = [
    "family",
    "params",
    "backend",
    "rep",
    "wall_ns",
    "step_wall_ns",
    "final_rows",
    "peak_rows",
    "mem_bytes",
    "status",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioOptions {
    pub fusion_window: usize,
    pub epsilon: f64,
    pub mode: Mode,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        let d = CodegenOptions::default();
        ScenarioOptions {
            fusion_window: d.fusion_window,
            epsilon: d.epsilon,
            mode: Mode::InMemory,
        }
    }
}

/// A sweep: one family, a value list per parameter, the backends to run and
/// how often to repeat each run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scenario {
    pub family: String,
    pub params: BTreeMap<String, Vec<ParamValue>>,
    pub backends: Vec<String>,
    pub repetitions: usize,
    pub options: ScenarioOptions,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioWire {
    family: String,
    #[serde(default)]
    params: BTreeMap<String, Value>,
    backends: Vec<String>,
    #[serde(default = "one")]
    repetitions: usize,
    #[serde(default)]
    options: ScenarioOptions,
}

fn one() -> usize {
    1
}

/// Expands one parameter's JSON form: a scalar, a list, `{from, to, step}`,
/// or an inclusive `"a..b"` range string.
fn param_axis(key: &str, v: &Value) -> Result<Vec<ParamValue>> {
    let bad = || Error::Scenario(format!("parameter `{key}`: unsupported value {v}"));
    match v {
        Value::Object(map) => {
            let get = |k: &str| map.get(k).and_then(Value::as_u64);
            if let Some(extra) = map.keys().find(|k| !["from", "to", "step"].contains(&k.as_str())) {
                return Err(Error::Scenario(format!("parameter `{key}`: unknown range field `{extra}`")));
            }
            let (from, to) = (get("from").ok_or_else(bad)?, get("to").ok_or_else(bad)?);
            let step = match map.get("step") {
                Some(s) => s.as_u64().ok_or_else(bad)?,
                None => 1,
            };
            int_range(key, from, to, step)
        }
        Value::Array(items) if items.iter().all(|x| x.is_u64()) => {
            Ok(items.iter().map(|x| ParamValue::Int(x.as_u64().unwrap())).collect())
        }
        Value::Array(items) if items.iter().all(|x| x.is_array() || x.is_string()) => items
            .iter()
            .map(|x| serde_json::from_value(x.clone()).map_err(|_| bad()))
            .collect(),
        Value::String(s) => match s.split_once("..") {
            Some((a, b)) => {
                let parse = |t: &str| t.trim().parse::<u64>().map_err(|_| bad());
                int_range(key, parse(a)?, parse(b)?, 1)
            }
            None => Ok(vec![ParamValue::Text(s.clone())]),
        },
        _ => serde_json::from_value(v.clone()).map(|p| vec![p]).map_err(|_| bad()),
    }
}

fn int_range(key: &str, from: u64, to: u64, step: u64) -> Result<Vec<ParamValue>> {
    if step == 0 || from > to {
        return Err(Error::Scenario(format!(
            "parameter `{key}`: empty range {from}..{to} step {step}"
        )));
    }
    Ok((from..=to).step_by(step as usize).map(ParamValue::Int).collect())
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::Scenario(format!("malformed JSON: {e}")))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let wire: ScenarioWire =
            serde_json::from_value(value).map_err(|e| Error::Scenario(e.to_string()))?;
        let params = wire
            .params
            .iter()
            .map(|(k, v)| Ok((k.clone(), param_axis(k, v)?)))
            .collect::<Result<_>>()?;
        let s = Scenario {
            family: wire.family,
            params,
            backends: wire.backends,
            repetitions: wire.repetitions,
            options: wire.options,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn codegen_options(&self) -> CodegenOptions {
        CodegenOptions {
            fusion_window: self.options.fusion_window,
            epsilon: self.options.epsilon,
            ..CodegenOptions::default()
        }
    }

    /// Cartesian product of the parameter axes, keys in sorted order.
    pub fn points(&self) -> Vec<BTreeMap<String, ParamValue>> {
        let mut points = vec![BTreeMap::new()];
        for (key, values) in &self.params {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.insert(key.clone(), v.clone());
                        q
                    })
                })
                .collect();
        }
        points
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Scenario("repetitions must be at least 1".into()));
        }
        if self.backends.is_empty() {
            return Err(Error::Scenario("no backends listed".into()));
        }
        for name in &self.backends {
            if name == ORACLE {
                continue;
            }
            let kind: BackendKind = name.parse().map_err(|e: Error| Error::Scenario(e.to_string()))?;
            if self.options.mode == Mode::OnDisk && !kind.supports_on_disk() {
                return Err(Error::Scenario(format!("backend `{name}` has no on-disk mode")));
            }
        }
        if self.params.values().any(Vec::is_empty) {
            return Err(Error::Scenario("a parameter has no values".into()));
        }
        self.codegen_options()
            .validate()
            .map_err(|e| Error::Scenario(e.to_string()))?;
        for point in self.points() {
            let spec = FamilySpec {
                name: self.family.clone(),
                params: point,
            };
            CircuitFamily::from_spec(&spec).map_err(|e| Error::Scenario(e.to_string()))?;
        }
        Ok(())
    }

    /// Number of report rows a run produces.
    pub fn run_count(&self) -> usize {
        self.points().len() * self.backends.len() * self.repetitions
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Success,
    Refused,
    Failed,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Success => "success",
            RunStatus::Refused => "refused",
            RunStatus::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub family: String,
    pub params: String,
    pub backend: String,
    /// Repetition number, starting at 1.
    pub rep: usize,
    pub wall_ns: Option<u64>,
    pub step_wall_ns: Option<u64>,
    pub final_rows: Option<u64>,
    pub peak_rows: Option<u64>,
    pub mem_bytes: Option<u64>,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub message: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

/// Renders parameters as `k=v;k=v` so the CSV cell needs no quoting.
pub fn format_params(point: &BTreeMap<String, ParamValue>) -> String {
    point
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

fn run_one(circuit: &Circuit, plan: &Result<SqlPlan>, backend: &str, s: &Scenario) -> Result<RunOutput> {
    if backend == ORACLE {
        let mut out = simulate_oracle(circuit, s.options.epsilon, false)?;
        // The amplitude array itself.
        out.metrics.peak_rss_bytes = Some(16u64 << circuit.num_qubits);
        Ok(out)
    } else {
        let plan = plan.as_ref().map_err(|e| Error::Scenario(e.to_string()))?;
        simulate_plan(plan, backend.parse()?, s.options.mode)
    }
}

/// Runs every (point, backend, repetition) in order. Failures and refusals
/// are recorded and the sweep continues. `progress` sees each row as soon as
/// it is produced, with the number of rows done so far and the total.
pub fn run_benchmark_with(
    scenario: &Scenario,
    mut progress: impl FnMut(&BenchRow, usize, usize),
) -> Result<BenchReport> {
    scenario.validate()?;
    let total = scenario.run_count();
    let opts = scenario.codegen_options();
    let mut report = BenchReport::default();
    for point in scenario.points() {
        let params = format_params(&point);
        let spec = FamilySpec {
            name: scenario.family.clone(),
            params: point,
        };
        let circuit = generate_family(&CircuitFamily::from_spec(&spec)?)?;
        let plan = translate_circuit(&circuit, &opts);
        for backend in &scenario.backends {
            for rep in 1..=scenario.repetitions {
                let result = run_one(&circuit, &plan, backend, scenario);
                let mut row = BenchRow {
                    family: scenario.family.clone(),
                    params: params.clone(),
                    backend: backend.clone(),
                    rep,
                    wall_ns: None,
                    step_wall_ns: None,
                    final_rows: None,
                    peak_rows: None,
                    mem_bytes: None,
                    status: RunStatus::Success,
                    message: None,
                };
                match result {
                    Ok(out) => {
                        let m = &out.metrics;
                        row.wall_ns = Some(m.total_wall_ns);
                        row.step_wall_ns = Some(m.apply_wall_ns);
                        row.final_rows = Some(m.final_rows);
                        row.peak_rows = Some(m.peak_rows);
                        row.mem_bytes = m.db_file_bytes.or(m.peak_rss_bytes);
                    }
                    Err(e) => {
                        row.status = match e {
                            Error::OracleRefused { .. } => RunStatus::Refused,
                            _ => RunStatus::Failed,
                        };
                        row.message = Some(e.to_string());
                    }
                }
                report.rows.push(row);
                progress(report.rows.last().unwrap(), report.rows.len(), total);
            }
        }
    }
    Ok(report)
}

pub fn run_benchmark(scenario: &Scenario) -> Result<BenchReport> {
    run_benchmark_with(scenario, |_, _, _| {})
}

fn cell(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl BenchReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.family.clone(),
                r.params.clone(),
                r.backend.clone(),
                r.rep.to_string(),
                cell(r.wall_ns),
                cell(r.step_wall_ns),
                cell(r.final_rows),
                cell(r.peak_rows),
                cell(r.mem_bytes),
                r.status.as_str().to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.rows).expect("report serializes")
    }
}

/// One cell of the summary table: a (family, point, backend) triple.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub family: String,
    pub params: String,
    pub backend: String,
    pub runs: usize,
    /// `refused` or `failed` if any repetition was, else `success`.
    pub status: RunStatus,
    pub median_wall_ns: Option<u64>,
    pub min_wall_ns: Option<u64>,
    pub max_wall_ns: Option<u64>,
    pub mean_final_rows: Option<f64>,
    pub mean_peak_rows: Option<f64>,
}

fn median(sorted: &[u64]) -> Option<u64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some(((sorted[n / 2 - 1] as u128 + sorted[n / 2] as u128) / 2) as u64),
    }
}

fn mean(values: &[u64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64)
}

/// Aggregates repetitions. Cells keep first-appearance order.
pub fn summarize(report: &BenchReport) -> Vec<SummaryRow> {
    let mut order: Vec<(&str, &str, &str)> = Vec::new();
    let mut cells: BTreeMap<(&str, &str, &str), Vec<&BenchRow>> = BTreeMap::new();
    for r in &report.rows {
        let key = (r.family.as_str(), r.params.as_str(), r.backend.as_str());
        let slot = cells.entry(key).or_default();
        if slot.is_empty() {
            order.push(key);
        }
        slot.push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rows = &cells[&key];
            let ok: Vec<&BenchRow> = rows.iter().copied().filter(|r| r.status == RunStatus::Success).collect();
            let status = if rows.iter().any(|r| r.status == RunStatus::Failed) {
                RunStatus::Failed
            } else if rows.iter().any(|r| r.status == RunStatus::Refused) {
                RunStatus::Refused
            } else {
                RunStatus::Success
            };
            let mut walls: Vec<u64> = ok.iter().filter_map(|r| r.wall_ns).collect();
            walls.sort_unstable();
            let finals: Vec<u64> = ok.iter().filter_map(|r| r.final_rows).collect();
            let peaks: Vec<u64> = ok.iter().filter_map(|r| r.peak_rows).collect();
            SummaryRow {
                family: key.0.to_string(),
                params: key.1.to_string(),
                backend: key.2.to_string(),
                runs: rows.len(),
                status,
                median_wall_ns: median(&walls),
                min_wall_ns: walls.first().copied(),
                max_wall_ns: walls.last().copied(),
                mean_final_rows: mean(&finals),
                mean_peak_rows: mean(&peaks),
            }
        })
        .collect()
}

/// Plain-text rendering of a summary for terminals.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let ms = |v: Option<u64>| v.map_or("-".to_string(), |ns| format!("{:.3}", ns as f64 / 1e6));
    let num = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x}"));
    let mut table = vec![[
        "family".to_string(),
        "params".into(),
        "backend".into(),
        "status".into(),
        "median_ms".into(),
        "min_ms".into(),
        "max_ms".into(),
        "final_rows".into(),
        "peak_rows".into(),
    ]];
    for r in rows {
        table.push([
            r.family.clone(),
            r.params.clone(),
            r.backend.clone(),
            r.status.as_str().into(),
            ms(r.median_wall_ns),
            ms(r.min_wall_ns),
            ms(r.max_wall_ns),
            num(r.mean_final_rows),
            num(r.mean_peak_rows),
        ]);
    }
    let mut widths = [0usize; 9];
    for line in &table {
        for (w, c) in widths.iter_mut().zip(line) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    for line in &table {
        let cells: Vec<String> = line
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}
