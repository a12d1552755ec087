use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qsql_core::backend::BackendKind;
use qsql_core::bench::{render_summary, run_benchmark_with, summarize, Scenario, ORACLE};
use qsql_core::circuit::Circuit;
use qsql_core::codegen::{emit_sql, translate_circuit, CodegenOptions};
use qsql_core::executor::{sample_counts, simulate_oracle, simulate_plan, Mode};
use qsql_core::families::{catalog, generate_family, CircuitFamily, FamilySpec, ParamValue};
use qsql_core::state::probabilities;
use serde_json::json;

/// Compile quantum circuits to SQL and run them on embedded databases.
#[derive(Parser)]
#[command(name = "qsql", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the SQL plan for a circuit.
    Translate {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        codegen: Codegen,
        /// Write the SQL here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Translate and execute a circuit, writing the result as JSON.
    Simulate {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        codegen: Codegen,
        /// Backend to run on, or `oracle` for the dense simulator.
        #[arg(short, long, default_value = "reference")]
        backend: String,
        /// Keep a database file on disk instead of working in memory.
        #[arg(long)]
        on_disk: bool,
        /// Number of measurement samples to draw from the final state.
        #[arg(long)]
        shots: Option<u64>,
        /// Seed for sampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the result JSON.
        #[arg(short, long, default_value = "result.json")]
        output: PathBuf,
    },
    /// Run a benchmark sweep and write CSV and JSON reports.
    Bench {
        /// Scenario file (JSON).
        #[arg(long, conflicts_with_all = ["family", "param", "backend"])]
        scenario: Option<PathBuf>,
        /// Family to sweep when no scenario file is given.
        #[arg(long, requires = "backend")]
        family: Option<String>,
        /// Family parameter `key=value`; integers may be given as `a..b`.
        #[arg(long = "param", value_name = "KEY=VALUE")]
        param: Vec<String>,
        /// Backend to include; repeat for several. `oracle` is allowed.
        #[arg(long)]
        backend: Vec<String>,
        /// Repetitions per point and backend.
        #[arg(long, default_value_t = 1)]
        reps: usize,
        /// CSV report path. The JSON report goes next to it.
        #[arg(short, long, default_value = "report.csv")]
        output: PathBuf,
    },
    /// Start the HTTP service.
    Serve {
        /// Port to listen on; 0 picks a free one. Overrides the config file.
        #[arg(long)]
        port: Option<u16>,
        /// Address to bind.
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// JSON config file.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// List the circuit families and their parameters.
    Families {
        /// Print the catalog as JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct Input {
    /// Circuit file (JSON).
    #[arg(long, conflicts_with = "family", required_unless_present = "family")]
    circuit: Option<PathBuf>,
    /// Circuit family to generate.
    #[arg(long)]
    family: Option<String>,
    /// Family parameter `key=value`; repeat for several.
    #[arg(long = "param", value_name = "KEY=VALUE", requires = "family")]
    param: Vec<String>,
}

#[derive(Args)]
struct Codegen {
    /// Largest number of consecutive gates fused into one step.
    #[arg(long, default_value_t = CodegenOptions::default().fusion_window)]
    fusion: usize,
    /// Largest qubit support of a fused step (1 to 3).
    #[arg(long, default_value_t = CodegenOptions::default().max_fused_qubits)]
    max_fused_qubits: usize,
    /// Amplitudes with magnitude at or below this are dropped.
    #[arg(long, default_value = "1e-12")]
    epsilon: f64,
    /// Keep every intermediate state table.
    #[arg(long)]
    keep_intermediates: bool,
}

impl Codegen {
    fn options(&self) -> CodegenOptions {
        CodegenOptions {
            fusion_window: self.fusion,
            max_fused_qubits: self.max_fused_qubits,
            epsilon: self.epsilon,
            keep_intermediates: self.keep_intermediates,
        }
    }
}

/// Marks failures that happened while executing, as opposed to bad input.
#[derive(Debug)]
struct ExecutionFailed;

impl fmt::Display for ExecutionFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("execution failed")
    }
}

fn split_param(text: &str) -> Result<(String, &str)> {
    let (k, v) = text
        .split_once('=')
        .ok_or_else(|| anyhow!("--param expects key=value, got `{text}`"))?;
    if k.is_empty() {
        bail!("--param `{text}` has an empty key");
    }
    Ok((k.to_string(), v))
}

fn load_circuit(input: &Input) -> Result<Circuit> {
    if let Some(path) = &input.circuit {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        return Circuit::from_json(&text).with_context(|| format!("invalid circuit {}", path.display()));
    }
    let name = input.family.clone().expect("clap requires circuit or family");
    let mut params = BTreeMap::new();
    for p in &input.param {
        let (k, v) = split_param(p)?;
        params.insert(k, ParamValue::from_cli(v));
    }
    let spec = FamilySpec { name, params };
    Ok(generate_family(&CircuitFamily::from_spec(&spec)?)?)
}

fn write_output(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn translate(input: Input, codegen: Codegen, output: Option<PathBuf>) -> Result<()> {
    let circuit = load_circuit(&input)?;
    let plan = translate_circuit(&circuit, &codegen.options())?;
    let sql = emit_sql(&plan);
    match output {
        Some(path) => {
            write_output(&path, &sql)?;
            eprintln!(
                "{} statements ({} apply steps) written to {}",
                plan.statements.len(),
                plan.apply_step_count(),
                path.display()
            );
        }
        None => {
            print!("{sql}");
            eprintln!("{} statements ({} apply steps)", plan.statements.len(), plan.apply_step_count());
        }
    }
    Ok(())
}

struct SimulateArgs {
    backend: String,
    on_disk: bool,
    shots: Option<u64>,
    seed: u64,
    output: PathBuf,
}

fn simulate(input: Input, codegen: Codegen, args: SimulateArgs) -> Result<()> {
    let kind = match args.backend.as_str() {
        ORACLE => None,
        name => Some(name.parse::<BackendKind>()?),
    };
    let mode = if args.on_disk { Mode::OnDisk } else { Mode::InMemory };
    if let Some(kind) = kind {
        if args.on_disk && !kind.supports_on_disk() {
            bail!("backend `{kind}` has no on-disk mode");
        }
    }
    if args.shots == Some(0) {
        bail!("--shots must be at least 1");
    }
    let circuit = load_circuit(&input)?;
    let opts = codegen.options();
    let plan = translate_circuit(&circuit, &opts)?;
    let out = match kind {
        Some(kind) => simulate_plan(&plan, kind, mode),
        None => simulate_oracle(&circuit, opts.epsilon, opts.keep_intermediates),
    }
    .context(ExecutionFailed)?;

    let mut doc = out.to_json();
    if let Some(shots) = args.shots {
        let counts = sample_counts(&out.final_state, shots, args.seed).context(ExecutionFailed)?;
        let hist: BTreeMap<String, u64> = counts.into_iter().map(|(s, c)| (s.to_string(), c)).collect();
        doc["histogram"] = json!(hist);
    }
    write_output(&args.output, &serde_json::to_string_pretty(&doc)?)?;

    let probs = probabilities(&out.final_state);
    let width = circuit.num_qubits.max(1);
    println!("{:>12}  {:>w$}  probability", "s", "bits", w = width);
    for p in probs.iter().take(16) {
        println!("{:>12}  {:0>w$b}  {:.9}", p.s, p.s, p.p, w = width);
    }
    if probs.len() > 16 {
        println!("... {} more rows", probs.len() - 16);
    }
    eprintln!(
        "{} rows on {} in {:.3} ms; result written to {}",
        out.final_state.len(),
        out.metrics.backend,
        out.metrics.total_wall_ns as f64 / 1e6,
        args.output.display()
    );
    Ok(())
}

/// Turns `--param` flags into scenario JSON, expanding `a..b` ranges.
fn scenario_from_flags(family: String, params: &[String], backends: Vec<String>, reps: usize) -> Result<Scenario> {
    let mut map = serde_json::Map::new();
    for p in params {
        let (k, v) = split_param(p)?;
        let value = if v.contains("..") {
            json!(v)
        } else {
            serde_json::to_value(ParamValue::from_cli(v))?
        };
        map.insert(k, value);
    }
    Ok(Scenario::from_value(json!({
        "family": family,
        "params": map,
        "backends": backends,
        "repetitions": reps,
    }))?)
}

fn bench(
    scenario: Option<PathBuf>,
    family: Option<String>,
    params: Vec<String>,
    backends: Vec<String>,
    reps: usize,
    output: PathBuf,
) -> Result<()> {
    let scenario = match (scenario, family) {
        (Some(path), _) => {
            let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
            Scenario::from_json(&text)?
        }
        (None, Some(family)) => scenario_from_flags(family, &params, backends, reps)?,
        (None, None) => bail!("give --scenario or --family"),
    };
    let report = run_benchmark_with(&scenario, |row, done, total| {
        eprintln!("[{done}/{total}] {} {} rep {}: {}", row.params, row.backend, row.rep, row.status.as_str());
    })
    .context(ExecutionFailed)?;
    write_output(&output, &report.to_csv())?;
    let json_path = output.with_extension("json");
    write_output(&json_path, &report.to_json())?;
    print!("{}", render_summary(&summarize(&report)));
    eprintln!("reports written to {} and {}", output.display(), json_path.display());
    Ok(())
}

fn serve(port: Option<u16>, host: String, config: Option<PathBuf>) -> Result<()> {
    let mut config = qsql_server::Config::load(config.as_deref())?;
    if let Some(port) = port {
        config.port = port;
    }
    let runtime = tokio::runtime::Runtime::new().context(ExecutionFailed)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host.as_str(), config.port))
            .await
            .with_context(|| format!("cannot bind {host}:{}", config.port))
            .context(ExecutionFailed)?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        qsql_server::serve(listener, config).await.context(ExecutionFailed)
    })
}

fn families(as_json: bool) -> Result<()> {
    let list = catalog();
    if as_json {
        println!("{}", serde_json::to_string_pretty(&list)?);
        return Ok(());
    }
    for f in list {
        println!("{}  {}", f.name, f.description);
        for p in f.parameters {
            let range = match (p.min, p.max) {
                (Some(lo), Some(hi)) => format!(" [{lo}..{hi}]"),
                (Some(lo), None) => format!(" [{lo}..]"),
                _ => String::new(),
            };
            let default = p.default.map(|d| format!(" (default {d})")).unwrap_or_default();
            println!("    {}: {}{range}{default}  {}", p.name, p.kind, p.description);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Translate { input, codegen, output } => translate(input, codegen, output),
        Command::Simulate {
            input,
            codegen,
            backend,
            on_disk,
            shots,
            seed,
            output,
        } => simulate(
            input,
            codegen,
            SimulateArgs {
                backend,
                on_disk,
                shots,
                seed,
                output,
            },
        ),
        Command::Bench {
            scenario,
            family,
            param,
            backend,
            reps,
            output,
        } => bench(scenario, family, param, backend, reps, output),
        Command::Serve { port, host, config } => serve(port, host, config),
        Command::Families { json } => families(json),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors count as validation failures.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ExecutionFailed>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
