//! Compiles circuits into SQL plans over integer-encoded state tables.
//!
//! Every state table has schema `(s, r, i)`: the packed basis index and the
//! real and imaginary amplitude. Every gate table has schema
//! `(in_s, out_s, r, i)`. A step joins the current state with a gate table
//! on the gate's local input index, scatters the local output index back
//! into the packed index, and aggregates colliding outputs.

use std::collections::HashSet;
use std::fmt::Write;

use serde::Serialize;

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::relation::{fuse, relation_for_gate, union_support, GateRelation, MAX_RELATION_QUBITS};

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct CodegenOptions {
    /// How many consecutive gates may be fused into one step.
    pub fusion_window: usize,
    /// Largest support (in qubits) of a fused step, at most 3.
    pub max_fused_qubits: usize,
    /// Output rows with `|amplitude| <= epsilon` are pruned.
    pub epsilon: f64,
    /// Keep every intermediate state table instead of dropping it.
    pub keep_intermediates: bool,
}

impl Default for CodegenOptions {
    fn default() -> Self {
        CodegenOptions {
            fusion_window: 4,
            max_fused_qubits: MAX_RELATION_QUBITS,
            epsilon: 1e-12,
            keep_intermediates: false,
        }
    }
}

impl CodegenOptions {
    pub fn unfused() -> Self {
        CodegenOptions {
            fusion_window: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fusion_window == 0 {
            return Err(Error::validation(None, "fusion_window must be at least 1"));
        }
        if !(1..=MAX_RELATION_QUBITS).contains(&self.max_fused_qubits) {
            return Err(Error::validation(
                None,
                format!("max_fused_qubits must be in 1..={MAX_RELATION_QUBITS}"),
            ));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::validation(None, "epsilon must be a finite value >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StatementKind {
    CreateState,
    InsertState,
    CreateGate,
    InsertGate,
    ApplyStep,
    Cleanup,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Statement {
    pub sql: String,
    pub kind: StatementKind,
    /// The step this statement belongs to; step `k` produces `state_k`.
    pub step_index: Option<usize>,
}

/// One (possibly fused) gate application.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlanStep {
    /// Step number, starting at 1. The step writes `state_{index}`.
    pub index: usize,
    /// Indices of the circuit gates this step covers.
    pub gate_indices: Vec<usize>,
    /// Ordered support of the step's relation.
    pub qubits: Vec<usize>,
    pub gate_table: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SqlPlan {
    pub num_qubits: usize,
    pub statements: Vec<Statement>,
    /// `state_0 … state_m` in creation order.
    pub state_table_names: Vec<String>,
    pub gate_table_names: Vec<String>,
    pub steps: Vec<PlanStep>,
    pub keep_intermediates: bool,
}

pub fn state_table(step: usize) -> String {
    format!("state_{step}")
}

impl SqlPlan {
    pub fn final_table(&self) -> &str {
        self.state_table_names
            .last()
            .expect("a plan always has state_0")
    }

    pub fn apply_step_count(&self) -> usize {
        self.statements
            .iter()
            .filter(|s| s.kind == StatementKind::ApplyStep)
            .count()
    }

    /// Statically checks that every table a statement mentions was created
    /// by an earlier statement and not dropped since.
    pub fn verify_references(&self) -> Result<(), String> {
        let mut live: HashSet<String> = HashSet::new();
        for (k, st) in self.statements.iter().enumerate() {
            let names = table_mentions(&st.sql);
            let created = match st.kind {
                StatementKind::CreateState | StatementKind::CreateGate | StatementKind::ApplyStep => {
                    names.first().cloned()
                }
                _ => None,
            };
            for name in names.iter().skip(created.is_some() as usize) {
                if !live.contains(name) {
                    return Err(format!("statement {k} references `{name}` before it exists"));
                }
            }
            if let Some(name) = created {
                if !live.insert(name.clone()) {
                    return Err(format!("statement {k} creates `{name}` twice"));
                }
            }
            if st.kind == StatementKind::Cleanup {
                for name in &names {
                    live.remove(name);
                }
            }
        }
        if !live.contains(self.final_table()) {
            return Err(format!("final table `{}` is not live", self.final_table()));
        }
        Ok(())
    }
}

/// Table identifiers (`state_N`, `gate_H…`) in order of appearance.
fn table_mentions(sql: &str) -> Vec<String> {
    sql.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|w| {
            let digits = |rest: &str, hex: bool| {
                !rest.is_empty()
                    && rest
                        .chars()
                        .all(|c| if hex { c.is_ascii_hexdigit() } else { c.is_ascii_digit() })
            };
            w.strip_prefix("state_").is_some_and(|r| digits(r, false))
                || w.strip_prefix("gate_").is_some_and(|r| digits(r, true))
        })
        .map(str::to_string)
        .collect()
}

fn render_f64(v: f64) -> String {
    format!("{v:e}")
}

/// SQL expression extracting a gate's local input index from a packed
/// state column. Position `p` of `qubits` becomes local bit `len - 1 - p`.
pub fn local_index_expr(qubits: &[usize], state_col: &str) -> String {
    let k = qubits.len();
    let terms: Vec<String> = qubits
        .iter()
        .enumerate()
        .map(|(p, &q)| {
            let bit = format!("(({state_col} >> {q}) & 1)");
            match k - 1 - p {
                0 => bit,
                local => format!("({bit} << {local})"),
            }
        })
        .collect();
    match terms.as_slice() {
        [single] => single.clone(),
        _ => format!("({})", terms.join(" | ")),
    }
}

/// SQL expression composing the output packed index: `cleared` (the input
/// index with the gate's bits zeroed) OR each local output bit moved to its
/// global position. Fully parenthesized, since some engines give `|`, `&`
/// and the shifts equal precedence.
pub fn scatter_expr(qubits: &[usize], cleared: &str, out_col: &str) -> String {
    let k = qubits.len();
    let mut expr = format!("({cleared}");
    for (p, &q) in qubits.iter().enumerate() {
        let local = k - 1 - p;
        let _ = write!(expr, " | ((({out_col} >> {local}) & 1) << {q})");
    }
    expr.push(')');
    expr
}

/// `s & mask` with the gate's qubits cleared. The mask is a literal so the
/// emitted SQL needs no complement operator.
pub fn cleared_index_expr(qubits: &[usize], num_qubits: usize, state_col: &str) -> String {
    let full: u64 = if num_qubits >= 64 {
        u64::MAX
    } else {
        (1u64 << num_qubits) - 1
    };
    let gate: u64 = qubits.iter().map(|&q| 1u64 << q).sum();
    format!("({state_col} & {})", full ^ gate)
}

/// The apply statement for step `step`, reading `state_{step-1}` and
/// creating `state_{step}`.
pub fn translate_gate_step(
    step: usize,
    rel: &GateRelation,
    qubits: &[usize],
    num_qubits: usize,
    opts: &CodegenOptions,
) -> Statement {
    assert!(step >= 1, "step 0 is the initial state");
    assert_eq!(rel.arity(), qubits.len(), "relation and qubit list disagree");
    let index = scatter_expr(
        qubits,
        &cleared_index_expr(qubits, num_qubits, "t.s"),
        "g.out_s",
    );
    let re = "SUM(t.r * g.r - t.i * g.i)";
    let im = "SUM(t.r * g.i + t.i * g.r)";
    let threshold = render_f64(opts.epsilon * opts.epsilon);
    let sql = format!(
        "CREATE TABLE {out} AS\n\
         SELECT {index} AS s,\n       {re} AS r,\n       {im} AS i\n\
         FROM {input} AS t\n\
         JOIN {gate} AS g ON g.in_s = {local}\n\
         GROUP BY {index}\n\
         HAVING {re} * {re} + {im} * {im} > {threshold}",
        out = state_table(step),
        input = state_table(step - 1),
        gate = rel.table_name(),
        local = local_index_expr(qubits, "t.s"),
    );
    Statement {
        sql,
        kind: StatementKind::ApplyStep,
        step_index: Some(step),
    }
}

/// Groups consecutive gates into fused steps, greedily extending each group
/// while it stays within the window and the support cap.
/// (qubits, fused relation, gate indices)
type Group = (Vec<usize>, GateRelation, Vec<usize>);

fn group_gates(c: &Circuit, opts: &CodegenOptions) -> Result<Vec<Group>> {
    let mut groups = Vec::new();
    let mut i = 0;
    while i < c.gates.len() {
        let first = &c.gates[i];
        let mut rel = relation_for_gate(first).map_err(|e| Error::validation(i, e.to_string()))?;
        let mut support = first.qubits.clone();
        let mut covered = vec![i];
        let mut j = i + 1;
        while j < c.gates.len() && covered.len() < opts.fusion_window {
            let next = &c.gates[j];
            if union_support(&support, &next.qubits).len() > opts.max_fused_qubits {
                break;
            }
            let next_rel =
                relation_for_gate(next).map_err(|e| Error::validation(j, e.to_string()))?;
            let (fused, fused_support) = fuse((&rel, &support), (&next_rel, &next.qubits))?;
            rel = fused;
            support = fused_support;
            covered.push(j);
            j += 1;
        }
        groups.push((covered, rel, support));
        i = j;
    }
    Ok(groups)
}

fn create_state_sql(table: &str) -> String {
    format!("CREATE TABLE {table} (s BIGINT, r DOUBLE, i DOUBLE)")
}

/// Translates a validated circuit into an executable plan.
pub fn translate_circuit(c: &Circuit, opts: &CodegenOptions) -> Result<SqlPlan> {
    c.validate()?;
    opts.validate()?;
    let mut statements = Vec::new();
    let mut gate_table_names = Vec::new();
    let mut state_table_names = vec![state_table(0)];
    let mut steps = Vec::new();

    statements.push(Statement {
        sql: create_state_sql(&state_table(0)),
        kind: StatementKind::CreateState,
        step_index: Some(0),
    });
    statements.push(Statement {
        sql: format!("INSERT INTO {} (s, r, i) VALUES (0, 1e0, 0e0)", state_table(0)),
        kind: StatementKind::InsertState,
        step_index: Some(0),
    });

    for (k, (covered, rel, support)) in group_gates(c, opts)?.into_iter().enumerate() {
        let step = k + 1;
        let gate_table = rel.table_name();
        if !gate_table_names.contains(&gate_table) {
            statements.push(Statement {
                sql: format!(
                    "CREATE TABLE {gate_table} (in_s BIGINT, out_s BIGINT, r DOUBLE, i DOUBLE)"
                ),
                kind: StatementKind::CreateGate,
                step_index: Some(step),
            });
            let values: Vec<String> = rel
                .rows()
                .iter()
                .map(|row| {
                    format!(
                        "({}, {}, {}, {})",
                        row.in_s,
                        row.out_s,
                        render_f64(row.r),
                        render_f64(row.i)
                    )
                })
                .collect();
            statements.push(Statement {
                sql: format!(
                    "INSERT INTO {gate_table} (in_s, out_s, r, i) VALUES\n  {}",
                    values.join(",\n  ")
                ),
                kind: StatementKind::InsertGate,
                step_index: Some(step),
            });
            gate_table_names.push(gate_table.clone());
        }
        statements.push(translate_gate_step(step, &rel, &support, c.num_qubits, opts));
        if !opts.keep_intermediates {
            statements.push(Statement {
                sql: format!("DROP TABLE {}", state_table(step - 1)),
                kind: StatementKind::Cleanup,
                step_index: Some(step),
            });
        }
        state_table_names.push(state_table(step));
        steps.push(PlanStep {
            index: step,
            gate_indices: covered,
            qubits: support,
            gate_table,
        });
    }

    Ok(SqlPlan {
        num_qubits: c.num_qubits,
        statements,
        state_table_names,
        gate_table_names,
        steps,
        keep_intermediates: opts.keep_intermediates,
    })
}

/// Renders the plan as one script, each statement terminated by `;\n`.
pub fn emit_sql(plan: &SqlPlan) -> String {
    let mut out = String::new();
    for st in &plan.statements {
        out.push_str(&st.sql);
        out.push_str(";\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{GateInstance, GateKind};
    use crate::families::{generate_family, CircuitFamily};
    use crate::relation::relation_for;

    fn ghz3() -> Circuit {
        generate_family(&CircuitFamily::Ghz { n: 3 }).unwrap()
    }

    #[test]
    fn local_index_examples() {
        assert_eq!(local_index_expr(&[0], "s"), "((s >> 0) & 1)");
        assert_eq!(
            local_index_expr(&[1, 0], "s"),
            "((((s >> 1) & 1) << 1) | ((s >> 0) & 1))"
        );
        assert_eq!(local_index_expr(&[2], "s"), "((s >> 2) & 1)");
    }

    #[test]
    fn scatter_examples() {
        assert_eq!(
            scatter_expr(&[0], "cleared", "out_s"),
            "(cleared | (((out_s >> 0) & 1) << 0))"
        );
        assert_eq!(
            scatter_expr(&[1, 0], "cleared", "out_s"),
            "(cleared | (((out_s >> 1) & 1) << 1) | (((out_s >> 0) & 1) << 0))"
        );
        assert_eq!(
            scatter_expr(&[2], "cleared", "out_s"),
            "(cleared | (((out_s >> 0) & 1) << 2))"
        );
    }

    #[test]
    fn cleared_mask_is_literal() {
        assert_eq!(cleared_index_expr(&[0], 3, "t.s"), "(t.s & 6)");
        assert_eq!(cleared_index_expr(&[2, 0], 3, "t.s"), "(t.s & 2)");
        assert_eq!(
            cleared_index_expr(&[61], 62, "t.s"),
            format!("(t.s & {})", (1u64 << 61) - 1)
        );
    }

    #[test]
    fn hadamard_step_shape() {
        let rel = relation_for(GateKind::H, &[], None).unwrap();
        let st = translate_gate_step(1, &rel, &[0], 3, &CodegenOptions::default());
        assert_eq!(st.kind, StatementKind::ApplyStep);
        assert!(st.sql.starts_with("CREATE TABLE state_1 AS"));
        assert!(st.sql.contains("FROM state_0 AS t"));
        assert!(st
            .sql
            .contains(&format!("JOIN {} AS g ON g.in_s = ((t.s >> 0) & 1)", rel.table_name())));
        assert!(st.sql.contains("((t.s & 6) | (((g.out_s >> 0) & 1) << 0)) AS s"));
        assert!(st.sql.contains("> 1e-24"));
    }

    #[test]
    fn ghz_unfused_has_three_steps() {
        let plan = translate_circuit(&ghz3(), &CodegenOptions::unfused()).unwrap();
        assert_eq!(plan.apply_step_count(), 3);
        assert_eq!(plan.final_table(), "state_3");
        // H and one shared CX table.
        assert_eq!(plan.gate_table_names.len(), 2);
        plan.verify_references().unwrap();
    }

    #[test]
    fn ghz_fused_steps() {
        let plan = translate_circuit(&ghz3(), &CodegenOptions::default()).unwrap();
        assert_eq!(plan.apply_step_count(), 1);
        assert_eq!(plan.steps[0].gate_indices, vec![0, 1, 2]);

        let capped = CodegenOptions {
            max_fused_qubits: 2,
            ..CodegenOptions::default()
        };
        let plan = translate_circuit(&ghz3(), &capped).unwrap();
        assert_eq!(plan.apply_step_count(), 2);
        assert_eq!(plan.steps[0].gate_indices, vec![0, 1]);
        assert_eq!(plan.steps[0].qubits, vec![0, 1]);
        assert_eq!(plan.steps[1].gate_indices, vec![2]);
    }

    #[test]
    fn empty_circuit_plan() {
        let c = Circuit::new(1, vec![]).unwrap();
        let plan = translate_circuit(&c, &CodegenOptions::default()).unwrap();
        assert_eq!(plan.final_table(), "state_0");
        let sql = emit_sql(&plan);
        assert_eq!(sql.matches("CREATE").count(), 1);
        assert_eq!(sql.matches("INSERT").count(), 1);
        assert!(sql.contains("VALUES (0, 1e0, 0e0);\n"));
    }

    #[test]
    fn repeated_gate_creates_one_table() {
        let gates = vec![GateInstance::rz(0, 0.25); 6];
        let c = Circuit::new(2, gates).unwrap();
        let plan = translate_circuit(&c, &CodegenOptions::unfused()).unwrap();
        assert_eq!(plan.gate_table_names.len(), 1);
        let creates = plan
            .statements
            .iter()
            .filter(|s| s.kind == StatementKind::CreateGate)
            .count();
        assert_eq!(creates, 1);
        assert_eq!(plan.apply_step_count(), 6);
    }

    #[test]
    fn keep_intermediates_skips_cleanup() {
        let opts = CodegenOptions {
            keep_intermediates: true,
            ..CodegenOptions::unfused()
        };
        let plan = translate_circuit(&ghz3(), &opts).unwrap();
        assert!(plan.statements.iter().all(|s| s.kind != StatementKind::Cleanup));
        let plan = translate_circuit(&ghz3(), &CodegenOptions::unfused()).unwrap();
        let drops = plan
            .statements
            .iter()
            .filter(|s| s.kind == StatementKind::Cleanup)
            .count();
        assert_eq!(drops, 3);
    }

    #[test]
    fn emitted_sql_is_deterministic() {
        let a = emit_sql(&translate_circuit(&ghz3(), &CodegenOptions::unfused()).unwrap());
        let b = emit_sql(&translate_circuit(&ghz3(), &CodegenOptions::unfused()).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.matches("JOIN gate_").count(), 3);
        assert!(a.lines().all(|l| !l.contains('~') && !l.contains('^')));
    }

    #[test]
    fn zero_epsilon_still_drops_exact_zeros() {
        let opts = CodegenOptions {
            epsilon: 0.0,
            ..CodegenOptions::unfused()
        };
        let rel = relation_for(GateKind::H, &[], None).unwrap();
        let st = translate_gate_step(1, &rel, &[0], 1, &opts);
        assert!(st.sql.ends_with("> 0e0"));
    }

    #[test]
    fn invalid_options_rejected() {
        let c = ghz3();
        for opts in [
            CodegenOptions {
                fusion_window: 0,
                ..Default::default()
            },
            CodegenOptions {
                max_fused_qubits: 4,
                ..Default::default()
            },
            CodegenOptions {
                epsilon: -1.0,
                ..Default::default()
            },
        ] {
            assert!(translate_circuit(&c, &opts).is_err());
        }
    }

    #[test]
    fn reference_check_catches_dangling_table() {
        let mut plan = translate_circuit(&ghz3(), &CodegenOptions::unfused()).unwrap();
        plan.statements.remove(0);
        assert!(plan.verify_references().is_err());
    }
}
