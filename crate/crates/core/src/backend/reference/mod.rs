//! In-process reference engine for the SQL subset emitted by the code
//! generator: `CREATE TABLE` (plain and `AS SELECT`), multi-row
//! `INSERT … VALUES`, `INSERT … SELECT`, `DROP TABLE`, and `SELECT` with one
//! inner join, `WHERE`, `GROUP BY`, `HAVING`, `SUM` and `COUNT(*)`.
//!
//! Values follow SQLite's dynamic typing closely enough for the generated
//! queries: integer arithmetic stays integral, mixing in a real promotes to
//! real, and the bitwise operators work on 64-bit integers. Result sets are
//! sorted, so output is deterministic under either execution policy.

mod sql;

use std::cmp::Ordering;
use std::collections::HashMap;

use self::sql::{Affinity, BinOp, Expr, InsertSource, Select, Statement};
use super::{check_finite, check_table_name, BackendAdapter, Capabilities};
use crate::error::{Error, Result};
use crate::parallel::{ExecPolicy, PAR_THRESHOLD};
use crate::state::StateRow;

const NAME: &str = "reference";

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    Null,
    Int(i64),
    Real(f64),
}

impl Value {
    fn truthy(self) -> bool {
        match self {
            Value::Null => false,
            Value::Int(v) => v != 0,
            Value::Real(v) => v != 0.0,
        }
    }

    fn as_f64(self) -> Option<f64> {
        match self {
            Value::Null => None,
            Value::Int(v) => Some(v as f64),
            Value::Real(v) => Some(v),
        }
    }

    fn as_i64(self) -> Option<i64> {
        match self {
            Value::Null => None,
            Value::Int(v) => Some(v),
            Value::Real(v) => Some(v as i64),
        }
    }

    fn key(self) -> Key {
        match self {
            Value::Null => Key::Null,
            Value::Int(v) => Key::Int(v),
            Value::Real(v) if v.fract() == 0.0 && v.abs() < 9.2e18 => Key::Int(v as i64),
            Value::Real(v) => Key::Real(v.to_bits()),
        }
    }

    fn coerce(self, affinity: Affinity) -> Value {
        match (affinity, self) {
            (Affinity::Real, Value::Int(v)) => Value::Real(v as f64),
            (Affinity::Integer, Value::Real(v)) if v.fract() == 0.0 && v.abs() < 9.2e18 => {
                Value::Int(v as i64)
            }
            _ => self,
        }
    }

    /// Total order used to sort result sets: NULL first, then numeric.
    fn total_cmp(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Null, Value::Null) => Ordering::Equal,
            (Value::Null, _) => Ordering::Less,
            (_, Value::Null) => Ordering::Greater,
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (a, b) => a.as_f64().unwrap().total_cmp(&b.as_f64().unwrap()),
        }
    }
}

/// Hashable form of a value for grouping and hash joins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Key {
    Null,
    Int(i64),
    Real(u64),
}

type Row = Box<[Value]>;

#[derive(Clone, Debug)]
struct Table {
    columns: Vec<String>,
    affinities: Vec<Affinity>,
    rows: Vec<Row>,
}

impl Table {
    fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Expression with column references resolved to (source, index).
#[derive(Clone, Debug)]
enum Compiled {
    Const(Value),
    Column(usize, usize),
    Neg(Box<Compiled>),
    Binary(BinOp, Box<Compiled>, Box<Compiled>),
    Aggregate(usize),
}

#[derive(Clone, Debug)]
enum AggSpec {
    Sum(Compiled),
    Count,
}

#[derive(Clone, Copy, Debug, Default)]
struct Accumulator {
    int: i64,
    real: f64,
    seen_real: bool,
    overflow: bool,
    count: u64,
}

impl Accumulator {
    fn add(&mut self, v: Value) {
        match v {
            Value::Null => return,
            Value::Int(x) => match self.int.checked_add(x) {
                Some(s) => self.int = s,
                None => {
                    self.overflow = true;
                    self.real += x as f64;
                }
            },
            Value::Real(x) => {
                self.seen_real = true;
                self.real += x;
            }
        }
        self.count += 1;
    }

    fn merge(&mut self, other: &Accumulator) {
        match self.int.checked_add(other.int) {
            Some(s) => self.int = s,
            None => {
                self.overflow = true;
                self.real += other.int as f64;
            }
        }
        self.real += other.real;
        self.seen_real |= other.seen_real;
        self.overflow |= other.overflow;
        self.count += other.count;
    }

    fn sum(&self) -> Value {
        if self.count == 0 {
            Value::Null
        } else if self.seen_real || self.overflow {
            Value::Real(self.int as f64 + self.real)
        } else {
            Value::Int(self.int)
        }
    }
}

fn eval_binary(op: BinOp, a: Value, b: Value) -> Value {
    use Value::*;
    if a == Null || b == Null {
        return Null;
    }
    let real = |f: fn(f64, f64) -> f64| Real(f(a.as_f64().unwrap(), b.as_f64().unwrap()));
    let cmp = |pred: fn(Ordering) -> bool| Int(pred(a.total_cmp(&b)) as i64);
    match op {
        BinOp::Add | BinOp::Sub | BinOp::Mul => match (a, b) {
            (Int(x), Int(y)) => {
                let exact = match op {
                    BinOp::Add => x.checked_add(y),
                    BinOp::Sub => x.checked_sub(y),
                    _ => x.checked_mul(y),
                };
                exact.map(Int).unwrap_or_else(|| match op {
                    BinOp::Add => real(|x, y| x + y),
                    BinOp::Sub => real(|x, y| x - y),
                    _ => real(|x, y| x * y),
                })
            }
            _ => match op {
                BinOp::Add => real(|x, y| x + y),
                BinOp::Sub => real(|x, y| x - y),
                _ => real(|x, y| x * y),
            },
        },
        BinOp::Div | BinOp::Rem => match (a, b) {
            (_, Int(0)) => Null,
            (_, Real(0.0)) => Null,
            (Int(x), Int(y)) => {
                if op == BinOp::Div {
                    Int(x.wrapping_div(y))
                } else {
                    Int(x.wrapping_rem(y))
                }
            }
            _ => {
                if op == BinOp::Div {
                    real(|x, y| x / y)
                } else {
                    real(|x, y| x % y)
                }
            }
        },
        BinOp::BitAnd | BinOp::BitOr | BinOp::BitXor | BinOp::Shl | BinOp::Shr => {
            let (x, y) = (a.as_i64().unwrap(), b.as_i64().unwrap());
            Int(match op {
                BinOp::BitAnd => x & y,
                BinOp::BitOr => x | y,
                BinOp::BitXor => x ^ y,
                BinOp::Shl => shift_left(x, y),
                _ => shift_left(x, y.checked_neg().unwrap_or(i64::MAX)),
            })
        }
        BinOp::Eq => cmp(|o| o == Ordering::Equal),
        BinOp::Ne => cmp(|o| o != Ordering::Equal),
        BinOp::Lt => cmp(|o| o == Ordering::Less),
        BinOp::Le => cmp(|o| o != Ordering::Greater),
        BinOp::Gt => cmp(|o| o == Ordering::Greater),
        BinOp::Ge => cmp(|o| o != Ordering::Less),
    }
}

/// SQLite shift semantics: negative amounts shift the other way, shifts of
/// 64 or more saturate.
fn shift_left(x: i64, by: i64) -> i64 {
    if by >= 64 {
        0
    } else if by >= 0 {
        x.wrapping_shl(by as u32)
    } else if by <= -64 {
        if x < 0 { -1 } else { 0 }
    } else {
        x >> (-by)
    }
}

/// Row context for evaluation: one row per source table.
struct Ctx<'a> {
    rows: [&'a [Value]; 2],
    aggregates: &'a [Value],
}

impl Compiled {
    fn eval(&self, ctx: &Ctx<'_>) -> Value {
        match self {
            Compiled::Const(v) => *v,
            Compiled::Column(src, idx) => ctx.rows[*src][*idx],
            Compiled::Neg(e) => match e.eval(ctx) {
                Value::Int(v) => v.checked_neg().map_or(Value::Real(-(v as f64)), Value::Int),
                Value::Real(v) => Value::Real(-v),
                Value::Null => Value::Null,
            },
            Compiled::Binary(op, a, b) => eval_binary(*op, a.eval(ctx), b.eval(ctx)),
            Compiled::Aggregate(k) => ctx.aggregates[*k],
        }
    }

    /// Sources referenced by the expression, as a bit set.
    fn sources(&self) -> u8 {
        match self {
            Compiled::Column(src, _) => 1 << src,
            Compiled::Neg(e) => e.sources(),
            Compiled::Binary(_, a, b) => a.sources() | b.sources(),
            Compiled::Const(_) | Compiled::Aggregate(_) => 0,
        }
    }
}

struct Scope<'a> {
    sources: Vec<(&'a str, &'a Table)>,
}

impl Scope<'_> {
    fn resolve(&self, table: Option<&str>, name: &str) -> std::result::Result<Compiled, String> {
        let mut hits = self
            .sources
            .iter()
            .enumerate()
            .filter(|(_, (alias, _))| table.is_none_or(|t| t == *alias))
            .filter_map(|(src, (_, t))| t.column(name).map(|idx| Compiled::Column(src, idx)));
        let found = hits.next();
        if hits.next().is_some() {
            return Err(format!("ambiguous column `{name}`"));
        }
        found.ok_or_else(|| match table {
            Some(t) => format!("no such column `{t}.{name}`"),
            None => format!("no such column `{name}`"),
        })
    }

    /// Compiles an expression. With `aggregates` set, `SUM`/`COUNT` are
    /// collected into it; with `row_refs` false, bare column references
    /// outside aggregates are rejected.
    fn compile(
        &self,
        expr: &Expr,
        aggregates: Option<&mut Vec<AggSpec>>,
        row_refs: bool,
    ) -> std::result::Result<Compiled, String> {
        let mut aggs = aggregates;
        self.compile_inner(expr, &mut aggs, row_refs)
    }

    fn compile_inner(
        &self,
        expr: &Expr,
        aggs: &mut Option<&mut Vec<AggSpec>>,
        row_refs: bool,
    ) -> std::result::Result<Compiled, String> {
        Ok(match expr {
            Expr::Int(v) => Compiled::Const(Value::Int(*v)),
            Expr::Real(v) => Compiled::Const(Value::Real(*v)),
            Expr::Column { table, name } => {
                if !row_refs {
                    return Err(format!(
                        "column `{name}` must appear inside an aggregate here"
                    ));
                }
                self.resolve(table.as_deref(), name)?
            }
            Expr::Neg(e) => Compiled::Neg(Box::new(self.compile_inner(e, aggs, row_refs)?)),
            Expr::Binary(op, a, b) => Compiled::Binary(
                *op,
                Box::new(self.compile_inner(a, aggs, row_refs)?),
                Box::new(self.compile_inner(b, aggs, row_refs)?),
            ),
            Expr::Sum(_) | Expr::CountStar => {
                let list = aggs
                    .as_deref_mut()
                    .ok_or_else(|| "aggregate not allowed here".to_string())?;
                let spec = match expr {
                    Expr::Sum(arg) => AggSpec::Sum(self.compile(arg, None, true)?),
                    _ => AggSpec::Count,
                };
                list.push(spec);
                Compiled::Aggregate(list.len() - 1)
            }
        })
    }
}

struct Group {
    /// Non-aggregate select items evaluated on the group's first row.
    first: Vec<Value>,
    accumulators: Vec<Accumulator>,
}

/// Output of one chunk of driving rows.
enum Partial {
    Rows(Vec<Row>),
    Groups(Vec<(Vec<Key>, Group)>),
}

pub struct ReferenceBackend {
    tables: HashMap<String, Table>,
    policy: ExecPolicy,
}

impl Default for ReferenceBackend {
    fn default() -> Self {
        Self::new()
    }
}

fn err(message: impl ToString) -> Error {
    Error::backend(NAME, message)
}

impl ReferenceBackend {
    pub fn new() -> Self {
        Self::with_policy(ExecPolicy::default())
    }

    pub fn with_policy(policy: ExecPolicy) -> Self {
        ReferenceBackend {
            tables: HashMap::new(),
            policy,
        }
    }

    fn table(&self, name: &str) -> Result<&Table> {
        self.tables
            .get(name)
            .ok_or_else(|| err(format!("no such table: {name}")))
    }

    fn create(&mut self, name: String, table: Table) -> Result<()> {
        if self.tables.contains_key(&name) {
            return Err(err(format!("table {name} already exists")));
        }
        self.tables.insert(name, table);
        Ok(())
    }

    /// Runs a SELECT and returns its column names and sorted rows.
    fn run_select(&self, select: &Select) -> std::result::Result<(Vec<String>, Vec<Row>), String> {
        let left = self
            .tables
            .get(&select.from.name)
            .ok_or_else(|| format!("no such table: {}", select.from.name))?;
        let mut scope = Scope {
            sources: vec![(select.from.alias.as_str(), left)],
        };
        let right = match &select.join {
            Some((r, _)) => {
                let t = self
                    .tables
                    .get(&r.name)
                    .ok_or_else(|| format!("no such table: {}", r.name))?;
                if r.alias == select.from.alias {
                    return Err(format!("duplicate table alias `{}`", r.alias));
                }
                scope.sources.push((r.alias.as_str(), t));
                Some(t)
            }
            None => None,
        };

        let grouped = !select.group_by.is_empty()
            || select.items.iter().any(|i| i.expr.is_aggregate())
            || select.having.is_some();
        let mut aggs = Vec::new();
        // (compiled, is_aggregate) per item.
        let mut items = Vec::with_capacity(select.items.len());
        for item in &select.items {
            if grouped && item.expr.is_aggregate() {
                items.push((scope.compile(&item.expr, Some(&mut aggs), false)?, true));
            } else {
                items.push((scope.compile(&item.expr, None, true)?, false));
            }
        }
        let having = match &select.having {
            Some(h) => Some(scope.compile(h, Some(&mut aggs), false)?),
            None => None,
        };
        let group_by = select
            .group_by
            .iter()
            .map(|e| scope.compile(e, None, true))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let filter = match &select.filter {
            Some(f) => Some(scope.compile(f, None, true)?),
            None => None,
        };

        let columns: Vec<String> = select
            .items
            .iter()
            .enumerate()
            .map(|(k, item)| match (&item.alias, &item.expr) {
                (Some(a), _) => a.clone(),
                (None, Expr::Column { name, .. }) => name.clone(),
                _ => format!("column{}", k + 1),
            })
            .collect();

        // Join plan: hash join on `left_expr = right_expr` when possible.
        enum JoinPlan {
            None,
            Hash {
                probe: Compiled,
                index: HashMap<Key, Vec<usize>>,
            },
            Loop(Compiled),
        }
        let join = match (&select.join, right) {
            (Some((_, on)), Some(rt)) => {
                let on = scope.compile(on, None, true)?;
                let split = match &on {
                    Compiled::Binary(BinOp::Eq, a, b) => match (a.sources(), b.sources()) {
                        (0b01, 0b10) => Some((a.as_ref().clone(), b.as_ref().clone())),
                        (0b10, 0b01) => Some((b.as_ref().clone(), a.as_ref().clone())),
                        _ => None,
                    },
                    _ => None,
                };
                match split {
                    Some((probe, build)) => {
                        let mut index: HashMap<Key, Vec<usize>> = HashMap::new();
                        let empty: [Value; 0] = [];
                        for (k, row) in rt.rows.iter().enumerate() {
                            let ctx = Ctx {
                                rows: [&empty, row],
                                aggregates: &[],
                            };
                            let key = build.eval(&ctx);
                            if key != Value::Null {
                                index.entry(key.key()).or_default().push(k);
                            }
                        }
                        JoinPlan::Hash { probe, index }
                    }
                    None => JoinPlan::Loop(on),
                }
            }
            _ => JoinPlan::None,
        };

        let no_aggs: [Value; 0] = [];
        let process_chunk = |chunk: &[Row]| -> Partial {
            let mut out_rows = Vec::new();
            let mut groups: Vec<(Vec<Key>, Group)> = Vec::new();
            let mut lookup: HashMap<Vec<Key>, usize> = HashMap::new();
            let mut visit = |l: &[Value], r: &[Value]| {
                let ctx = Ctx {
                    rows: [l, r],
                    aggregates: &no_aggs,
                };
                if let Some(f) = &filter {
                    if !f.eval(&ctx).truthy() {
                        return;
                    }
                }
                if !grouped {
                    out_rows.push(items.iter().map(|(e, _)| e.eval(&ctx)).collect());
                    return;
                }
                let key: Vec<Key> = group_by.iter().map(|g| g.eval(&ctx).key()).collect();
                let slot = match lookup.get(&key) {
                    Some(&k) => k,
                    None => {
                        let first = items
                            .iter()
                            .map(|(e, agg)| if *agg { Value::Null } else { e.eval(&ctx) })
                            .collect();
                        groups.push((
                            key.clone(),
                            Group {
                                first,
                                accumulators: vec![Accumulator::default(); aggs.len()],
                            },
                        ));
                        lookup.insert(key, groups.len() - 1);
                        groups.len() - 1
                    }
                };
                let group = &mut groups[slot].1;
                for (acc, spec) in group.accumulators.iter_mut().zip(&aggs) {
                    match spec {
                        AggSpec::Sum(e) => acc.add(e.eval(&ctx)),
                        AggSpec::Count => acc.add(Value::Int(1)),
                    }
                }
            };
            let empty: [Value; 0] = [];
            for l in chunk {
                match (&join, right) {
                    (JoinPlan::None, _) => visit(l, &empty),
                    (JoinPlan::Hash { probe, index }, Some(rt)) => {
                        let ctx = Ctx {
                            rows: [l, &empty],
                            aggregates: &no_aggs,
                        };
                        let key = probe.eval(&ctx);
                        if key == Value::Null {
                            continue;
                        }
                        if let Some(matches) = index.get(&key.key()) {
                            for &k in matches {
                                visit(l, &rt.rows[k]);
                            }
                        }
                    }
                    (JoinPlan::Loop(on), Some(rt)) => {
                        for r in &rt.rows {
                            let ctx = Ctx {
                                rows: [l, r],
                                aggregates: &no_aggs,
                            };
                            if on.eval(&ctx).truthy() {
                                visit(l, r);
                            }
                        }
                    }
                    _ => unreachable!("join plan without right table"),
                }
            }
            if grouped {
                Partial::Groups(groups)
            } else {
                Partial::Rows(out_rows)
            }
        };

        let partials = self.policy.map_chunks(&left.rows, PAR_THRESHOLD, process_chunk);

        let mut rows: Vec<Row> = Vec::new();
        if grouped {
            // Merge in chunk order so "first row" and float sums are stable.
            let mut merged: Vec<(Vec<Key>, Group)> = Vec::new();
            let mut lookup: HashMap<Vec<Key>, usize> = HashMap::new();
            for part in partials {
                let Partial::Groups(groups) = part else {
                    unreachable!()
                };
                for (key, group) in groups {
                    match lookup.get(&key) {
                        Some(&k) => {
                            for (a, b) in merged[k].1.accumulators.iter_mut().zip(&group.accumulators) {
                                a.merge(b);
                            }
                        }
                        None => {
                            lookup.insert(key.clone(), merged.len());
                            merged.push((key, group));
                        }
                    }
                }
            }
            if merged.is_empty() && select.group_by.is_empty() {
                merged.push((
                    Vec::new(),
                    Group {
                        first: vec![Value::Null; items.len()],
                        accumulators: vec![Accumulator::default(); aggs.len()],
                    },
                ));
            }
            for (_, group) in merged {
                let values: Vec<Value> = group
                    .accumulators
                    .iter()
                    .zip(&aggs)
                    .map(|(acc, spec)| match spec {
                        AggSpec::Sum(_) => acc.sum(),
                        AggSpec::Count => Value::Int(acc.count as i64),
                    })
                    .collect();
                let empty: [Value; 0] = [];
                let ctx = Ctx {
                    rows: [&empty, &empty],
                    aggregates: &values,
                };
                if let Some(h) = &having {
                    if !h.eval(&ctx).truthy() {
                        continue;
                    }
                }
                rows.push(
                    items
                        .iter()
                        .zip(&group.first)
                        .map(|((e, agg), first)| if *agg { e.eval(&ctx) } else { *first })
                        .collect(),
                );
            }
        } else {
            for part in partials {
                let Partial::Rows(r) = part else { unreachable!() };
                rows.extend(r);
            }
        }
        rows.sort_by(|a, b| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        });
        Ok((columns, rows))
    }

    fn run(&mut self, stmt: Statement) -> Result<u64> {
        match stmt {
            Statement::CreateTable { name, columns } => {
                let (columns, affinities) = columns.into_iter().unzip();
                self.create(
                    name,
                    Table {
                        columns,
                        affinities,
                        rows: Vec::new(),
                    },
                )?;
                Ok(0)
            }
            Statement::CreateTableAs { name, select } => {
                if self.tables.contains_key(&name) {
                    return Err(err(format!("table {name} already exists")));
                }
                let (columns, rows) = self.run_select(&select).map_err(err)?;
                let n = rows.len() as u64;
                let affinities = vec![Affinity::None; columns.len()];
                self.create(
                    name,
                    Table {
                        columns,
                        affinities,
                        rows,
                    },
                )?;
                Ok(n)
            }
            Statement::Insert {
                table,
                columns,
                source,
            } => {
                let target = self.table(&table)?;
                let positions: Vec<usize> = match &columns {
                    Some(cols) => cols
                        .iter()
                        .map(|c| {
                            target
                                .column(c)
                                .ok_or_else(|| err(format!("table {table} has no column named {c}")))
                        })
                        .collect::<Result<_>>()?,
                    None => (0..target.columns.len()).collect(),
                };
                let width = target.columns.len();
                let affinities = target.affinities.clone();
                let incoming: Vec<Vec<Value>> = match source {
                    InsertSource::Values(rows) => {
                        let scope = Scope { sources: vec![] };
                        let empty: [Value; 0] = [];
                        let ctx = Ctx {
                            rows: [&empty, &empty],
                            aggregates: &[],
                        };
                        rows.iter()
                            .map(|row| {
                                row.iter()
                                    .map(|e| scope.compile(e, None, true).map(|c| c.eval(&ctx)))
                                    .collect::<std::result::Result<Vec<_>, _>>()
                            })
                            .collect::<std::result::Result<_, _>>()
                            .map_err(err)?
                    }
                    InsertSource::Select(select) => {
                        let (_, rows) = self.run_select(&select).map_err(err)?;
                        rows.into_iter().map(Vec::from).collect()
                    }
                };
                let mut built = Vec::with_capacity(incoming.len());
                for values in incoming {
                    if values.len() != positions.len() {
                        return Err(err(format!(
                            "{} values for {} columns",
                            values.len(),
                            positions.len()
                        )));
                    }
                    let mut row = vec![Value::Null; width];
                    for (v, &p) in values.into_iter().zip(&positions) {
                        row[p] = v.coerce(affinities[p]);
                    }
                    built.push(row.into_boxed_slice());
                }
                let n = built.len() as u64;
                self.tables
                    .get_mut(&table)
                    .expect("checked above")
                    .rows
                    .extend(built);
                Ok(n)
            }
            Statement::DropTable { name, if_exists } => {
                if self.tables.remove(&name).is_none() && !if_exists {
                    return Err(err(format!("no such table: {name}")));
                }
                Ok(0)
            }
            Statement::Select(select) => {
                let (_, rows) = self.run_select(&select).map_err(err)?;
                Ok(rows.len() as u64)
            }
        }
    }
}

impl BackendAdapter for ReferenceBackend {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            name: NAME.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            in_memory: true,
            on_disk: false,
        }
    }

    fn execute(&mut self, sql: &str) -> Result<u64> {
        let stmt = sql::parse(sql).map_err(err)?;
        self.run(stmt)
    }

    fn query_state(&mut self, table: &str) -> Result<Vec<StateRow>> {
        check_table_name(NAME, table)?;
        let t = self.table(table)?;
        let cols = ["s", "r", "i"].map(|c| t.column(c));
        let [Some(s), Some(r), Some(i)] = cols else {
            return Err(err(format!("table {table} is not a state table")));
        };
        let mut rows = t
            .rows
            .iter()
            .map(|row| {
                let index = match row[s] {
                    Value::Int(v) if v >= 0 => v as u64,
                    other => return Err(err(format!("invalid basis index {other:?}"))),
                };
                let amp = |v: Value| v.as_f64().ok_or_else(|| err("NULL amplitude"));
                Ok(StateRow::new(index, amp(row[r])?, amp(row[i])?))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.sort_by_key(|row| row.s);
        check_finite(NAME, &rows)?;
        Ok(rows)
    }

    fn table_row_count(&mut self, table: &str) -> Result<u64> {
        Ok(self.table(table)?.rows.len() as u64)
    }

    fn close(self: Box<Self>) -> Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn engine() -> ReferenceBackend {
        ReferenceBackend::with_policy(ExecPolicy::Sequential)
    }

    fn select(db: &ReferenceBackend, sql: &str) -> Vec<Vec<Value>> {
        let Statement::Select(s) = sql::parse(sql).unwrap() else {
            panic!()
        };
        db.run_select(&s)
            .unwrap()
            .1
            .into_iter()
            .map(Vec::from)
            .collect()
    }

    #[test]
    fn bitwise_semantics_match_sqlite() {
        let mut db = engine();
        db.execute("CREATE TABLE t (s BIGINT)").unwrap();
        db.execute("INSERT INTO t VALUES (5)").unwrap();
        let rows = select(
            &db,
            "SELECT ((s >> 2) & 1) | (1 << 3), s ^ 3, s << 64, -8 >> 1, 1 << -1, 7 / 2, 7.0 / 2 FROM t",
        );
        assert_eq!(
            rows,
            vec![vec![
                Value::Int(9),
                Value::Int(6),
                Value::Int(0),
                Value::Int(-4),
                Value::Int(0),
                Value::Int(3),
                Value::Real(3.5)
            ]]
        );
    }

    #[test]
    fn affinity_coerces_inserts() {
        let mut db = engine();
        db.execute("CREATE TABLE t (s BIGINT, r DOUBLE, i DOUBLE)").unwrap();
        assert_eq!(db.execute("INSERT INTO t (s, r, i) VALUES (0, 1, 0e0), (3, 5e-1, -2)").unwrap(), 2);
        assert_eq!(
            db.query_state("t").unwrap(),
            vec![StateRow::new(0, 1.0, 0.0), StateRow::new(3, 0.5, -2.0)]
        );
    }

    #[test]
    fn grouped_join_sums_interference() {
        // H applied to (|0⟩ + |1⟩)/√2 must give |0⟩.
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut db = engine();
        db.execute("CREATE TABLE st (s BIGINT, r DOUBLE, i DOUBLE)").unwrap();
        db.execute(&format!("INSERT INTO st VALUES (0, {h:e}, 0e0), (1, {h:e}, 0e0)")).unwrap();
        db.execute("CREATE TABLE g (in_s BIGINT, out_s BIGINT, r DOUBLE, i DOUBLE)").unwrap();
        db.execute(&format!(
            "INSERT INTO g VALUES (0, 0, {h:e}, 0e0), (0, 1, {h:e}, 0e0), (1, 0, {h:e}, 0e0), (1, 1, {:e}, 0e0)",
            -h
        ))
        .unwrap();
        let n = db
            .execute(
                "CREATE TABLE out AS SELECT ((t.s & 0) | (((g.out_s >> 0) & 1) << 0)) AS s, \
                 SUM(t.r * g.r - t.i * g.i) AS r, SUM(t.r * g.i + t.i * g.r) AS i \
                 FROM st AS t JOIN g AS g ON g.in_s = ((t.s >> 0) & 1) \
                 GROUP BY ((t.s & 0) | (((g.out_s >> 0) & 1) << 0)) \
                 HAVING SUM(t.r * g.r - t.i * g.i) * SUM(t.r * g.r - t.i * g.i) + SUM(t.r * g.i + t.i * g.r) * SUM(t.r * g.i + t.i * g.r) > 1e-24",
            )
            .unwrap();
        assert_eq!(n, 1);
        let rows = db.query_state("out").unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].s, 0);
        assert!((rows[0].r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nested_loop_join_and_where() {
        let mut db = engine();
        db.execute("CREATE TABLE a (x INT)").unwrap();
        db.execute("CREATE TABLE b (y INT)").unwrap();
        db.execute("INSERT INTO a VALUES (1), (2), (3)").unwrap();
        db.execute("INSERT INTO b VALUES (1), (2)").unwrap();
        let rows = select(&db, "SELECT a.x, b.y FROM a JOIN b ON a.x > b.y WHERE a.x < 3");
        assert_eq!(rows, vec![vec![Value::Int(2), Value::Int(1)]]);
        let rows = select(&db, "SELECT COUNT(*), SUM(x) FROM a");
        assert_eq!(rows, vec![vec![Value::Int(3), Value::Int(6)]]);
        let rows = select(&db, "SELECT COUNT(*), SUM(x) FROM a WHERE x > 10");
        assert_eq!(rows, vec![vec![Value::Int(0), Value::Null]]);
    }

    #[test]
    fn errors_are_reported() {
        let mut db = engine();
        assert!(db.execute("DROP TABLE nope").is_err());
        db.execute("DROP TABLE IF EXISTS nope").unwrap();
        db.execute("CREATE TABLE t (s BIGINT)").unwrap();
        assert!(db.execute("CREATE TABLE t (s BIGINT)").is_err());
        assert!(db.execute("INSERT INTO t VALUES (1, 2)").is_err());
        assert!(db.execute("INSERT INTO t (q) VALUES (1)").is_err());
        assert!(db.execute("SELECT q FROM t").is_err());
        assert!(db.execute("SELECT s FROM t JOIN t ON s = s").is_err());
        assert!(db.query_state("t").is_err());
        assert!(db.query_state("missing").is_err());
    }

    #[test]
    fn insert_select_and_row_count() {
        let mut db = engine();
        db.execute("CREATE TABLE t (s BIGINT, r DOUBLE, i DOUBLE)").unwrap();
        db.execute("INSERT INTO t VALUES (2, 1e0, 0e0), (1, 0e0, 1e0)").unwrap();
        db.execute("CREATE TABLE u (s BIGINT, r DOUBLE, i DOUBLE)").unwrap();
        assert_eq!(db.execute("INSERT INTO u SELECT s + 1, r, i FROM t").unwrap(), 2);
        assert_eq!(db.table_row_count("u").unwrap(), 2);
        let rows = db.query_state("u").unwrap();
        assert_eq!(rows.iter().map(|r| r.s).collect::<Vec<_>>(), vec![2, 3]);
    }
}
