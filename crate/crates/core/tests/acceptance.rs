//! End-to-end acceptance checks. Prints one PASS/FAIL line per check and
//! exits nonzero if any fails.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

mod common;

use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use qsql_core::backend::BackendKind;
use qsql_core::bench::{run_benchmark, Scenario, CSV_HEADER, ORACLE};
use qsql_core::circuit::{unitarity_deviation, Circuit, GateInstance, GateKind};
use qsql_core::codegen::{emit_sql, translate_circuit, CodegenOptions};
use qsql_core::error::Error;
use qsql_core::executor::{sample_counts, simulate_plan, Mode};
use qsql_core::families::{generate_family, CircuitFamily};
use qsql_core::oracle::{compare_states, simulate_dense};
use qsql_core::relation::{fuse, relation_for, union_support};
use qsql_core::state::{probabilities, total_probability, StateRow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn close(row: &StateRow, s: u64, r: f64, i: f64) -> bool {
    row.s == s && (row.r - r).abs() <= 1e-9 && (row.i - i).abs() <= 1e-9
}

fn within(started: Instant, limit: Duration) -> Check {
    let took = started.elapsed();
    ensure!(took < limit, "took {took:?}, limit {limit:?}");
    Ok(())
}

fn ghz_end_to_end() -> Check {
    let started = Instant::now();
    let c = generate_family(&CircuitFamily::Ghz { n: 3 }).map_err(|e| e.to_string())?;
    let opts = CodegenOptions {
        keep_intermediates: true,
        ..CodegenOptions::unfused()
    };
    let plan = translate_circuit(&c, &opts).map_err(|e| e.to_string())?;
    ensure!(plan.apply_step_count() == 3, "{} apply steps", plan.apply_step_count());
    for kind in BackendKind::available() {
        let out = simulate_plan(&plan, kind, Mode::InMemory).map_err(|e| e.to_string())?;
        let f = &out.final_state;
        ensure!(
            f.len() == 2 && close(&f[0], 0, FRAC_1_SQRT_2, 0.0) && close(&f[1], 7, FRAC_1_SQRT_2, 0.0),
            "{kind}: final state {f:?}"
        );
        let steps = out.steps.ok_or("no step states")?;
        let first = &steps[0].rows;
        ensure!(
            first.len() == 2
                && close(&first[0], 0, FRAC_1_SQRT_2, 0.0)
                && close(&first[1], 1, FRAC_1_SQRT_2, 0.0),
            "{kind}: state after H {first:?}"
        );
    }
    within(started, Duration::from_secs(1))
}

fn oracle_equivalence() -> Check {
    let started = Instant::now();
    let kinds = BackendKind::available();
    for seed in 0..100u64 {
        let n = 1 + (seed % 10) as usize;
        let depth = 1 + (seed % 20) as usize;
        let c = common::random_circuit(seed, n, depth);
        let dense = simulate_dense(&c).map_err(|e| e.to_string())?;
        let plan = translate_circuit(&c, &CodegenOptions::default()).map_err(|e| e.to_string())?;
        for &kind in &kinds {
            let out = simulate_plan(&plan, kind, Mode::InMemory).map_err(|e| format!("seed {seed}: {e}"))?;
            let diff = compare_states(&out.final_state, n, &dense).map_err(|e| e.to_string())?;
            ensure!(diff <= 1e-9, "seed {seed} on {kind}: max diff {diff:e}");
        }
    }
    within(started, Duration::from_secs(120))
}

fn has_fusable_pair(c: &Circuit) -> bool {
    c.gates
        .windows(2)
        .any(|w| union_support(&w[0].qubits, &w[1].qubits).len() <= 3)
}

fn fusion_invariance() -> Check {
    for seed in 0..25u64 {
        let n = 2 + (seed % 5) as usize;
        let c = common::random_circuit(500 + seed, n, 12);
        let mut finals = Vec::new();
        let mut counts = Vec::new();
        for window in [1, 2, 4, 8] {
            let opts = CodegenOptions {
                fusion_window: window,
                ..CodegenOptions::default()
            };
            let plan = translate_circuit(&c, &opts).map_err(|e| e.to_string())?;
            counts.push(plan.apply_step_count());
            let out = simulate_plan(&plan, BackendKind::Reference, Mode::InMemory).map_err(|e| e.to_string())?;
            finals.push(out.final_state);
        }
        for a in 0..finals.len() {
            for b in a + 1..finals.len() {
                let d = common::padded_diff(&finals[a], &finals[b]);
                ensure!(d <= 1e-9, "seed {seed}: windows #{a} and #{b} differ by {d:e}");
            }
        }
        if has_fusable_pair(&c) {
            ensure!(counts[3] < counts[0], "seed {seed}: step counts {counts:?}");
        }
    }
    Ok(())
}

/// Tracks the single basis state of an X/CX circuit bit by bit.
fn permute_basis(c: &Circuit) -> u64 {
    let mut s = 0u64;
    for g in &c.gates {
        match (g.kind, g.qubits.as_slice()) {
            (GateKind::X, [q]) => s ^= 1 << q,
            (GateKind::Cx, [ctl, tgt]) => {
                if s >> ctl & 1 == 1 {
                    s ^= 1 << tgt;
                }
            }
            _ => panic!("not a permutation gate: {:?}", g.kind),
        }
    }
    s
}

fn sparse_advantage() -> Check {
    let started = Instant::now();
    let c = generate_family(&CircuitFamily::SparseChain { n: 40, depth: 200, seed: 1 }).map_err(|e| e.to_string())?;
    let expected = permute_basis(&c);
    for kind in BackendKind::available() {
        let plan = translate_circuit(&c, &CodegenOptions::default()).map_err(|e| e.to_string())?;
        let out = simulate_plan(&plan, kind, Mode::InMemory).map_err(|e| e.to_string())?;
        ensure!(out.metrics.peak_rows == 1, "{kind}: peak rows {}", out.metrics.peak_rows);
        ensure!(out.final_state.len() == 1, "{kind}: {} final rows", out.final_state.len());
        let norm = total_probability(&out.final_state);
        ensure!((norm - 1.0).abs() <= 1e-9, "{kind}: norm {norm}");
        ensure!(out.final_state[0].s == expected, "{kind}: index {} vs {expected}", out.final_state[0].s);
    }
    match simulate_dense(&c) {
        Err(Error::OracleRefused { qubits: 40, limit: 26 }) => {}
        other => return Err(format!("oracle did not refuse: {:?}", other.map(|_| ()))),
    }
    within(started, Duration::from_secs(30))
}

fn dense_law() -> Check {
    let c = generate_family(&CircuitFamily::EqualSuperposition { n: 12 }).map_err(|e| e.to_string())?;
    let plan = translate_circuit(&c, &CodegenOptions::default()).map_err(|e| e.to_string())?;
    for kind in BackendKind::available() {
        let out = simulate_plan(&plan, kind, Mode::InMemory).map_err(|e| e.to_string())?;
        ensure!(out.final_state.len() == 4096, "{kind}: {} rows", out.final_state.len());
        let amp = 2f64.powi(-6);
        for (k, row) in out.final_state.iter().enumerate() {
            ensure!(close(row, k as u64, amp, 0.0), "{kind}: row {row:?}");
        }
        let total: f64 = probabilities(&out.final_state).iter().map(|p| p.p).sum();
        ensure!((total - 1.0).abs() <= 1e-9, "{kind}: total probability {total}");
    }
    Ok(())
}

fn parity_check() -> Check {
    for bits in [[false, false], [false, true], [true, false], [true, true]] {
        let family = CircuitFamily::ParityCheck {
            n: 3,
            input_bits: bits.to_vec(),
            ancilla_init: false,
        };
        let c = generate_family(&family).map_err(|e| e.to_string())?;
        let dense = simulate_dense(&c).map_err(|e| e.to_string())?;
        let plan = translate_circuit(&c, &CodegenOptions::default()).map_err(|e| e.to_string())?;
        let out = simulate_plan(&plan, BackendKind::Reference, Mode::InMemory).map_err(|e| e.to_string())?;
        ensure!(out.final_state.len() == 1, "{bits:?}: {} rows", out.final_state.len());
        let s = out.final_state[0].s;
        let parity = (bits[0] ^ bits[1]) as u64;
        ensure!(s >> 2 & 1 == parity, "{bits:?}: ancilla bit of {s} is not {parity}");
        ensure!(
            (s & 1 == bits[0] as u64) && (s >> 1 & 1 == bits[1] as u64),
            "{bits:?}: inputs disturbed in {s}"
        );
        let diff = compare_states(&out.final_state, 3, &dense).map_err(|e| e.to_string())?;
        ensure!(diff <= 1e-9, "{bits:?}: oracle diff {diff:e}");
        let counts = sample_counts(&out.final_state, 1000, 7).map_err(|e| e.to_string())?;
        ensure!(
            counts.len() == 1 && counts.get(&s) == Some(&1000),
            "{bits:?}: histogram {counts:?}"
        );
    }
    Ok(())
}

fn unitarity_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let named: Vec<GateKind> = GateKind::ALL.into_iter().filter(|k| !k.has_matrix()).collect();
    for &kind in &named {
        for _ in 0..1000 {
            let params: Vec<f64> = (0..kind.num_params()).map(|_| rng.random_range(0.0..TAU)).collect();
            let rel = relation_for(kind, &params, None).map_err(|e| e.to_string())?;
            let dev = unitarity_deviation(&rel.to_matrix(), 1 << kind.arity());
            ensure!(dev <= 1e-12, "{kind}{params:?}: deviation {dev:e}");
        }
    }
    for _ in 0..1000 {
        let pick = |rng: &mut ChaCha8Rng| {
            let kind = named[rng.random_range(0..named.len())];
            let mut qubits = vec![0usize, 1, 2];
            rand::seq::SliceRandom::shuffle(qubits.as_mut_slice(), rng);
            qubits.truncate(kind.arity());
            let params: Vec<f64> = (0..kind.num_params()).map(|_| rng.random_range(0.0..TAU)).collect();
            GateInstance::new(kind, &qubits, &params)
        };
        let (a, b) = (pick(&mut rng), pick(&mut rng));
        let ra = relation_for(a.kind, &a.params, None).map_err(|e| e.to_string())?;
        let rb = relation_for(b.kind, &b.params, None).map_err(|e| e.to_string())?;
        let (fused, support) = fuse((&ra, &a.qubits), (&rb, &b.qubits)).map_err(|e| e.to_string())?;
        let dev = unitarity_deviation(&fused.to_matrix(), 1 << support.len());
        ensure!(dev <= 1e-12, "{} then {}: deviation {dev:e}", a.kind, b.kind);
    }
    Ok(())
}

fn golden_sql() -> Check {
    let c = generate_family(&CircuitFamily::Ghz { n: 3 }).map_err(|e| e.to_string())?;
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for (file, opts) in [
        ("ghz3_fusion1.sql", CodegenOptions::unfused()),
        ("ghz3_fusion4.sql", CodegenOptions::default()),
    ] {
        let sql = emit_sql(&translate_circuit(&c, &opts).map_err(|e| e.to_string())?);
        let expected = std::fs::read_to_string(dir.join(file)).map_err(|e| format!("{file}: {e}"))?;
        ensure!(sql == expected, "{file} does not match");
    }
    let sql = emit_sql(&translate_circuit(&c, &CodegenOptions::unfused()).map_err(|e| e.to_string())?);
    // The H step on qubit 0 of three: join on the extracted bit, then OR the
    // scattered output bit into the index with that bit cleared.
    for pattern in [
        "ON g.in_s = ((t.s >> 0) & 1)",
        "SELECT ((t.s & 6) | (((g.out_s >> 0) & 1) << 0)) AS s",
        "ON g.in_s = ((((t.s >> 0) & 1) << 1) | ((t.s >> 1) & 1))",
        "SELECT ((t.s & 4) | (((g.out_s >> 1) & 1) << 0) | (((g.out_s >> 0) & 1) << 1)) AS s",
    ] {
        ensure!(sql.contains(pattern), "missing `{pattern}`");
    }
    Ok(())
}

fn bench_contract() -> Check {
    let scenario = Scenario::from_json(&format!(
        r#"{{"family":"ghz","params":{{"n":[4,8,12]}},"backends":["reference","{ORACLE}"],"repetitions":3}}"#
    ))
    .map_err(|e| e.to_string())?;
    let report = run_benchmark(&scenario).map_err(|e| e.to_string())?;
    let csv = report.to_csv();
    let mut lines = csv.lines();
    ensure!(lines.next() == Some(CSV_HEADER.join(",").as_str()), "header mismatch");
    let rows: Vec<&str> = lines.collect();
    ensure!(rows.len() == 18, "{} rows", rows.len());
    for r in &report.rows {
        ensure!(r.status.as_str() == "success", "{}/{}: {:?}", r.params, r.backend, r.message);
        if r.backend != ORACLE {
            ensure!(r.final_rows == Some(2), "{}: final rows {:?}", r.params, r.final_rows);
        }
    }
    Ok(())
}

fn main() {
    let checks: [(&str, fn() -> Check); 9] = [
        ("GHZ end-to-end", ghz_end_to_end),
        ("oracle equivalence", oracle_equivalence),
        ("fusion invariance", fusion_invariance),
        ("sparse advantage", sparse_advantage),
        ("dense law", dense_law),
        ("parity check", parity_check),
        ("unitarity suite", unitarity_suite),
        ("golden SQL", golden_sql),
        ("benchmark report contract", bench_contract),
    ];
    println!(
        "acceptance: backends = {}",
        BackendKind::available_names().join(", ")
    );
    let mut failed = 0;
    for (name, check) in checks {
        let started = Instant::now();
        match check() {
            Ok(()) => println!("PASS  {name} ({:.2?})", started.elapsed()),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {name}: {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
