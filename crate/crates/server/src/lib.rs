//! JSON-over-HTTP front end: translation, simulation, the family catalog and
//! benchmark runs, plus static serving of the web UI bundle.
//!
//! Every simulation gets its own backend session. Benchmarks are queued
//! behind one lock so that two sweeps never run at the same time.

use std::collections::{BTreeMap, HashMap};
use std::convert::Infallible;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::stream::{self, Stream};
use qsql_core::bench::{run_benchmark_with, summarize, BenchReport, BenchRow, Scenario, ORACLE};
use qsql_core::circuit::{circuit_from_value, Circuit};
use qsql_core::codegen::{emit_sql, translate_circuit, CodegenOptions, SqlPlan};
use qsql_core::error::Error;
use qsql_core::executor::{sample_counts, simulate_oracle, simulate_plan, Mode, RunOutput, StepState};
use qsql_core::families::{catalog, generate_family, CircuitFamily, FamilySpec};
use qsql_core::state::probabilities;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::mpsc;

mod config;

pub use config::{Config, ConfigError};

/// Largest number of rows returned per intermediate state.
pub const STEP_ROW_CAP: usize = 4096;

pub struct AppState {
    config: Config,
    bench_lock: tokio::sync::Mutex<()>,
    runs: Mutex<HashMap<u64, RunRecord>>,
    next_run: AtomicU64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum RunPhase {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, Serialize)]
struct RunRecord {
    run_id: u64,
    status: RunPhase,
    done: usize,
    total: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Error body: `{"error": {"code", "message", ...}}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    extra: serde_json::Map<String, Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            extra: serde_json::Map::new(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn with(mut self, key: &str, value: Value) -> Self {
        self.extra.insert(key.to_string(), value);
        self
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Json { offset, .. } => {
                Self::new(StatusCode::BAD_REQUEST, "malformed_json", message).with("offset", json!(offset))
            }
            Error::Validation { gate, .. } => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_circuit", message)
                .with("gate", json!(gate)),
            Error::Family(_) | Error::Relation(_) | Error::FusionRefused { .. } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_circuit", message)
            }
            Error::UnknownBackend { available, .. } => {
                Self::new(StatusCode::BAD_REQUEST, "unknown_backend", message).with("available", json!(available))
            }
            Error::Backend { backend, statement, .. } => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "backend_error", message)
                    .with("backend", json!(backend))
                    .with("statement", json!(statement))
            }
            Error::OracleRefused { qubits, limit } => {
                Self::new(StatusCode::INSUFFICIENT_STORAGE, "oracle_refused", message)
                    .with("qubits", json!(qubits))
                    .with("limit", json!(limit))
            }
            Error::Scenario(_) => Self::new(StatusCode::BAD_REQUEST, "invalid_scenario", message),
            Error::Numeric(_) | Error::Unnormalized(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "numeric_error", message)
            }
            Error::Io(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "io_error", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = self.extra;
        body.insert("code".into(), json!(self.code));
        body.insert("message".into(), json!(self.message));
        (self.status, Json(json!({ "error": body }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateRequest {
    circuit: Option<Value>,
    family: Option<FamilySpec>,
    backend: Option<String>,
    #[serde(default)]
    options: RequestOptions,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RequestOptions {
    fusion_window: Option<usize>,
    max_fused_qubits: Option<usize>,
    epsilon: Option<f64>,
    keep_intermediates: bool,
    shots: Option<u64>,
    seed: Option<u64>,
    mode: Option<Mode>,
}

struct Prepared {
    circuit: Circuit,
    plan: SqlPlan,
    options: RequestOptions,
    backend: Option<String>,
}

impl AppState {
    pub fn new(config: Config) -> Self {
        AppState {
            config,
            bench_lock: tokio::sync::Mutex::new(()),
            runs: Mutex::new(HashMap::new()),
            next_run: AtomicU64::new(1),
        }
    }

    fn codegen_options(&self, o: &RequestOptions) -> CodegenOptions {
        let d = CodegenOptions::default();
        CodegenOptions {
            fusion_window: o.fusion_window.unwrap_or(d.fusion_window),
            max_fused_qubits: o.max_fused_qubits.unwrap_or(d.max_fused_qubits),
            epsilon: o.epsilon.unwrap_or(self.config.default_epsilon),
            keep_intermediates: o.keep_intermediates,
        }
    }

    fn check_backend(&self, name: &str) -> ApiResult<()> {
        if self.config.backends.iter().any(|b| b == name) {
            Ok(())
        } else {
            Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "unknown_backend",
                format!(
                    "unknown backend `{name}` (configured: {})",
                    self.config.backends.join(", ")
                ),
            )
            .with("available", json!(self.config.backends)))
        }
    }

    fn prepare(&self, body: &[u8]) -> ApiResult<Prepared> {
        let value: Value = serde_json::from_slice(body)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_json", e.to_string()))?;
        let req: SimulateRequest =
            serde_json::from_value(value).map_err(|e| ApiError::bad_request(e.to_string()))?;
        let circuit = match (&req.circuit, &req.family) {
            (Some(c), None) => circuit_from_value(c)?,
            (None, Some(f)) => generate_family(&CircuitFamily::from_spec(f)?)?,
            (Some(_), Some(_)) => return Err(ApiError::bad_request("give either `circuit` or `family`, not both")),
            (None, None) => return Err(ApiError::bad_request("one of `circuit` or `family` is required")),
        };
        let opts = self.codegen_options(&req.options);
        opts.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;
        if req.options.shots == Some(0) {
            return Err(ApiError::bad_request("shots must be at least 1"));
        }
        if let Some(name) = &req.backend {
            self.check_backend(name)?;
        }
        let plan = translate_circuit(&circuit, &opts)?;
        Ok(Prepared {
            circuit,
            plan,
            options: req.options,
            backend: req.backend,
        })
    }

    fn update_run(&self, id: u64, f: impl FnOnce(&mut RunRecord)) {
        if let Some(r) = self.runs.lock().unwrap().get_mut(&id) {
            f(r);
        }
    }
}

pub fn router(config: Config) -> Router {
    let static_dir = config.static_dir.clone();
    let state = Arc::new(AppState::new(config));
    let app = Router::new()
        .route("/translate", post(translate))
        .route("/simulate", post(simulate))
        .route("/families", get(families))
        .route("/benchmark", post(benchmark))
        .route("/benchmark/runs", post(start_run))
        .route("/benchmark/runs/{id}", get(poll_run))
        .with_state(state);
    match static_dir {
        Some(dir) if dir.is_dir() => app.fallback_service(tower_http::services::ServeDir::new(dir)),
        _ => app.route("/", get(index_stub)),
    }
}

/// Serves until the process is stopped.
pub async fn serve(listener: tokio::net::TcpListener, config: Config) -> std::io::Result<()> {
    axum::serve(listener, router(config)).await
}

async fn index_stub() -> Html<&'static str> {
    Html(
        "<!doctype html><title>qsql</title><p>No UI bundle configured. \
         Endpoints: POST /translate, POST /simulate, GET /families, POST /benchmark.</p>",
    )
}

async fn families() -> Json<Value> {
    Json(json!(catalog()))
}

async fn translate(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<Value>> {
    let p = state.prepare(&body)?;
    Ok(Json(json!({
        "sql": emit_sql(&p.plan),
        "statement_count": p.plan.statements.len(),
        "apply_step_count": p.plan.apply_step_count(),
        "state_tables": p.plan.state_table_names,
        "gate_tables": p.plan.gate_table_names,
        "steps": p.plan.steps,
    })))
}

fn capped_steps(steps: &[StepState]) -> Vec<Value> {
    steps
        .iter()
        .map(|s| {
            json!({
                "step": s.step,
                "gate_indices": s.gate_indices,
                "rows": &s.rows[..s.rows.len().min(STEP_ROW_CAP)],
                "total_rows": s.rows.len(),
                "truncated": s.rows.len() > STEP_ROW_CAP,
            })
        })
        .collect()
}

async fn simulate(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<Value>> {
    let p = state.prepare(&body)?;
    let backend = p.backend.clone().unwrap_or_else(|| state.config.backends[0].clone());
    let epsilon = state.codegen_options(&p.options).epsilon;
    let mode = p.options.mode.unwrap_or_default();
    let run_backend = backend.clone();
    let (p, out) = tokio::task::spawn_blocking(move || {
        let out: Result<RunOutput, Error> = if run_backend == ORACLE {
            simulate_oracle(&p.circuit, epsilon, p.options.keep_intermediates)
        } else {
            run_backend
                .parse()
                .and_then(|kind| simulate_plan(&p.plan, kind, mode))
        };
        (p, out)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", e.to_string()))?;
    let out = out?;
    let histogram = match p.options.shots {
        Some(shots) => {
            let counts = sample_counts(&out.final_state, shots, p.options.seed.unwrap_or(0))?;
            Some(counts.into_iter().map(|(s, c)| (s.to_string(), c)).collect::<BTreeMap<_, _>>())
        }
        None => None,
    };
    let mut body = json!({
        "backend": backend,
        "num_qubits": p.circuit.num_qubits,
        "final_state": out.final_state,
        "probabilities": probabilities(&out.final_state),
        "sql": emit_sql(&p.plan),
        "metrics": out.metrics,
    });
    if let Some(steps) = &out.steps {
        body["steps"] = json!(capped_steps(steps));
    }
    if let Some(h) = histogram {
        body["histogram"] = json!(h);
    }
    Ok(Json(body))
}

enum BenchEvent {
    Progress { done: usize, total: usize, row: BenchRow },
    Report(Value),
    Failed(String),
}

fn report_json(run_id: u64, report: &BenchReport) -> Value {
    json!({
        "run_id": run_id,
        "rows": report.rows,
        "summary": summarize(report),
        "csv": report.to_csv(),
    })
}

fn parse_scenario(state: &AppState, body: &[u8]) -> ApiResult<Scenario> {
    let text = std::str::from_utf8(body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let scenario = Scenario::from_json(text)?;
    for b in &scenario.backends {
        state.check_backend(b)?;
    }
    Ok(scenario)
}

/// Queues a sweep and returns its id plus a channel of progress events.
fn start_benchmark(state: &Arc<AppState>, scenario: Scenario) -> (u64, mpsc::UnboundedReceiver<BenchEvent>) {
    let id = state.next_run.fetch_add(1, Ordering::Relaxed);
    state.runs.lock().unwrap().insert(
        id,
        RunRecord {
            run_id: id,
            status: RunPhase::Queued,
            done: 0,
            total: scenario.run_count(),
            report: None,
            error: None,
        },
    );
    let (tx, rx) = mpsc::unbounded_channel();
    let state = Arc::clone(state);
    tokio::spawn(async move {
        let _turn = state.bench_lock.lock().await;
        state.update_run(id, |r| r.status = RunPhase::Running);
        let worker = Arc::clone(&state);
        let progress_tx = tx.clone();
        let result = tokio::task::spawn_blocking(move || {
            run_benchmark_with(&scenario, |row, done, total| {
                worker.update_run(id, |r| r.done = done);
                let _ = progress_tx.send(BenchEvent::Progress {
                    done,
                    total,
                    row: row.clone(),
                });
            })
        })
        .await;
        match result {
            Ok(Ok(report)) => {
                let doc = report_json(id, &report);
                state.update_run(id, |r| {
                    r.status = RunPhase::Done;
                    r.report = Some(doc.clone());
                });
                let _ = tx.send(BenchEvent::Report(doc));
            }
            Ok(Err(e)) => fail_run(&state, &tx, id, e.to_string()),
            Err(e) => fail_run(&state, &tx, id, e.to_string()),
        }
    });
    (id, rx)
}

fn fail_run(state: &AppState, tx: &mpsc::UnboundedSender<BenchEvent>, id: u64, message: String) {
    state.update_run(id, |r| {
        r.status = RunPhase::Failed;
        r.error = Some(message.clone());
    });
    let _ = tx.send(BenchEvent::Failed(message));
}

fn wants_stream(headers: &HeaderMap) -> bool {
    headers
        .get_all(header::ACCEPT)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .any(|v| v.contains("text/event-stream"))
}

fn sse_events(
    run_id: u64,
    rx: mpsc::UnboundedReceiver<BenchEvent>,
) -> impl Stream<Item = Result<Event, Infallible>> {
    let started = Event::default()
        .event("started")
        .data(json!({ "run_id": run_id }).to_string());
    let rest = stream::unfold(rx, |mut rx| async move {
        let event = match rx.recv().await? {
            BenchEvent::Progress { done, total, row } => Event::default()
                .event("progress")
                .data(json!({ "done": done, "total": total, "row": row }).to_string()),
            BenchEvent::Report(doc) => Event::default().event("report").data(doc.to_string()),
            BenchEvent::Failed(msg) => Event::default()
                .event("error")
                .data(json!({ "message": msg }).to_string()),
        };
        Some((Ok(event), rx))
    });
    futures_util::StreamExt::chain(stream::once(async { Ok(started) }), rest)
}

async fn benchmark(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    let scenario = parse_scenario(&state, &body)?;
    let (id, mut rx) = start_benchmark(&state, scenario);
    if wants_stream(&headers) {
        return Ok(Sse::new(sse_events(id, rx))
            .keep_alive(KeepAlive::default())
            .into_response());
    }
    while let Some(event) = rx.recv().await {
        match event {
            BenchEvent::Progress { .. } => {}
            BenchEvent::Report(doc) => return Ok(Json(doc).into_response()),
            BenchEvent::Failed(msg) => {
                return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "benchmark_failed", msg))
            }
        }
    }
    Err(ApiError::new(
        StatusCode::INTERNAL_SERVER_ERROR,
        "benchmark_failed",
        "benchmark worker stopped without a report",
    ))
}

async fn start_run(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let scenario = parse_scenario(&state, &body)?;
    let (id, _) = start_benchmark(&state, scenario);
    Ok((StatusCode::ACCEPTED, Json(json!({ "run_id": id }))).into_response())
}

async fn poll_run(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult<Json<Value>> {
    let runs = state.runs.lock().unwrap();
    match runs.get(&id) {
        Some(r) => Ok(Json(json!(r))),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "unknown_run", format!("no benchmark run {id}"))),
    }
}
