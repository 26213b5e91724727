//! Physical plans: compilation from RA and evaluation over in-memory tables.
//!
//! Scan, select, project, join, times, sort and limit keep duplicates (bag
//! semantics). Union, minus, intersect, divide and distinct return sets.
//! Every operator produces rows in a defined order: products iterate the
//! left input in the outer loop, set operators and grouping keep first
//! appearances, and sorting is stable. Rewrites in [`crate::optimizer`]
//! preserve that order.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use thiserror::Error;

use crate::ast::{AggFn, BinaryOp, CmpOp, Predicate, RaExpr, Term};
use crate::relation::{Database, Relation};
use crate::schema::{Catalog, TableSchema};
use crate::typecheck::{self, coerce_literal, node_schema, term_type, SchemaError, TermType};
use crate::value::{ColumnKind, RowKey, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("table `{0}` is missing from the database")]
    MissingTable(String),
    #[error("table `{table}` does not have the cataloged schema: {detail}")]
    SchemaMismatch { table: String, detail: String },
    #[error("runtime type error: {0}")]
    RuntimeTypeError(String),
    #[error("numeric overflow in {0}")]
    NumericOverflow(String),
}

/// A compiled, executable plan.
#[derive(Debug)]
pub struct Plan {
    root: PlanNode,
}

#[derive(Debug)]
pub struct PlanNode {
    op: PhysicalOp,
    schema: TableSchema,
    children: Vec<PlanNode>,
    rows_in: AtomicU64,
}

#[derive(Debug, Clone)]
enum PhysicalOp {
    Scan { table: String },
    Filter { predicate: CompiledPredicate },
    Project { indices: Vec<usize> },
    Rename,
    Union { promote: Vec<(bool, bool)> },
    Minus { promote: Vec<(bool, bool)> },
    Intersect { promote: Vec<(bool, bool)> },
    Product,
    HashJoin {
        keys: Vec<(usize, usize)>,
        residual: Option<CompiledPredicate>,
    },
    NestedLoopJoin { predicate: CompiledPredicate },
    Divide {
        quotient: Vec<usize>,
        divisor: Vec<usize>,
    },
    Aggregate {
        keys: Vec<usize>,
        aggregates: Vec<CompiledAggregate>,
    },
    Distinct,
    Sort { keys: Vec<(usize, bool)> },
    Limit { count: u64 },
}

#[derive(Debug, Clone)]
enum CompiledTerm {
    Column(usize),
    Literal(Value),
    Lower(Box<CompiledTerm>),
}

#[derive(Debug, Clone)]
enum CompiledPredicate {
    And(Box<CompiledPredicate>, Box<CompiledPredicate>),
    Or(Box<CompiledPredicate>, Box<CompiledPredicate>),
    Not(Box<CompiledPredicate>),
    Compare {
        op: CmpOp,
        left: CompiledTerm,
        right: CompiledTerm,
    },
    In { column: usize, values: Vec<Value> },
    Contains { term: CompiledTerm, needle: String },
}

#[derive(Debug, Clone)]
struct CompiledAggregate {
    func: AggFn,
    input: Option<usize>,
    kind: Option<ColumnKind>,
}

/// Per-node execution statistics, in pre-order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeStats {
    pub operator: &'static str,
    pub rows_in: u64,
}

/// Compiles a type-checked expression in one pass. All schema and type
/// errors surface here; execution of the returned plan cannot hit them.
pub fn compile_plan(expr: &RaExpr, catalog: &Catalog) -> Result<Plan, SchemaError> {
    Ok(Plan {
        root: compile_node(expr, catalog)?,
    })
}

fn compile_node(expr: &RaExpr, catalog: &Catalog) -> Result<PlanNode, SchemaError> {
    let children = expr
        .children()
        .into_iter()
        .map(|c| compile_node(c, catalog))
        .collect::<Result<Vec<_>, _>>()?;
    let child_schemas: Vec<TableSchema> = children.iter().map(|c| c.schema.clone()).collect();
    let schema = node_schema(expr, &child_schemas, catalog)?;
    let idx = |s: &TableSchema, name: &str| s.index_of(name).expect("checked by node_schema");
    let op = match expr {
        RaExpr::Scan(table) => PhysicalOp::Scan {
            table: table.clone(),
        },
        RaExpr::Select { predicate, .. } => PhysicalOp::Filter {
            predicate: compile_predicate(predicate, &child_schemas[0])?,
        },
        RaExpr::Project { columns, .. } => PhysicalOp::Project {
            indices: columns.iter().map(|c| idx(&child_schemas[0], c)).collect(),
        },
        RaExpr::Rename { .. } => PhysicalOp::Rename,
        RaExpr::Binary { op, .. } => {
            let (l, r) = (&child_schemas[0], &child_schemas[1]);
            let promote = || {
                schema
                    .columns
                    .iter()
                    .zip(l.columns.iter().zip(&r.columns))
                    .map(|(out, (a, b))| (out.ty.kind != a.ty.kind, out.ty.kind != b.ty.kind))
                    .collect()
            };
            match op {
                BinaryOp::Union => PhysicalOp::Union { promote: promote() },
                BinaryOp::Minus => PhysicalOp::Minus { promote: promote() },
                BinaryOp::Intersect => PhysicalOp::Intersect { promote: promote() },
                BinaryOp::Times => PhysicalOp::Product,
                BinaryOp::Divide => PhysicalOp::Divide {
                    quotient: schema.columns.iter().map(|c| idx(l, &c.name)).collect(),
                    divisor: r.columns.iter().map(|c| idx(l, &c.name)).collect(),
                },
            }
        }
        RaExpr::Join { predicate, .. } => compile_join(predicate, &child_schemas, &schema)?,
        RaExpr::GroupBy {
            keys, aggregates, ..
        } => {
            let input = &child_schemas[0];
            PhysicalOp::Aggregate {
                keys: keys.iter().map(|k| idx(input, k)).collect(),
                aggregates: aggregates
                    .iter()
                    .map(|a| {
                        let i = a.input.as_ref().map(|c| idx(input, c));
                        CompiledAggregate {
                            func: a.func,
                            input: i,
                            kind: i.map(|i| input.columns[i].ty.kind),
                        }
                    })
                    .collect(),
            }
        }
        RaExpr::Distinct(_) => PhysicalOp::Distinct,
        RaExpr::Sort { keys, .. } => PhysicalOp::Sort {
            keys: keys
                .iter()
                .map(|k| (idx(&child_schemas[0], &k.column), k.descending))
                .collect(),
        },
        RaExpr::Limit { count, .. } => PhysicalOp::Limit { count: *count },
    };
    Ok(PlanNode {
        op,
        schema,
        children,
        rows_in: AtomicU64::new(0),
    })
}

fn compile_join(
    predicate: &Predicate,
    inputs: &[TableSchema],
    combined: &TableSchema,
) -> Result<PhysicalOp, SchemaError> {
    typecheck::check_predicate(predicate, combined)?;
    let left_width = inputs[0].len();
    let mut keys = Vec::new();
    let mut residual = Vec::new();
    for conjunct in predicate.conjuncts() {
        if let Predicate::Compare {
            op: CmpOp::Eq,
            left: Term::Column(a),
            right: Term::Column(b),
        } = conjunct
        {
            let (ia, ib) = (
                combined.index_of(a).unwrap(),
                combined.index_of(b).unwrap(),
            );
            match (ia < left_width, ib < left_width) {
                (true, false) => {
                    keys.push((ia, ib - left_width));
                    continue;
                }
                (false, true) => {
                    keys.push((ib, ia - left_width));
                    continue;
                }
                _ => {}
            }
        }
        residual.push(conjunct.clone());
    }
    if keys.is_empty() {
        return Ok(PhysicalOp::NestedLoopJoin {
            predicate: compile_predicate(predicate, combined)?,
        });
    }
    let residual = match Predicate::conjoin(residual) {
        Some(p) => Some(compile_predicate(&p, combined)?),
        None => None,
    };
    Ok(PhysicalOp::HashJoin { keys, residual })
}

fn compile_term(term: &Term, schema: &TableSchema, other: &TermType) -> CompiledTerm {
    match term {
        Term::Column(c) => CompiledTerm::Column(schema.index_of(c).unwrap()),
        Term::Literal(v) => match other {
            TermType::Typed(k) => CompiledTerm::Literal(coerce_literal(v, *k)),
            _ => CompiledTerm::Literal(v.clone()),
        },
        Term::Lower(inner) => CompiledTerm::Lower(Box::new(compile_term(inner, schema, &TermType::Null))),
    }
}

fn compile_predicate(pred: &Predicate, schema: &TableSchema) -> Result<CompiledPredicate, SchemaError> {
    typecheck::check_predicate(pred, schema)?;
    Ok(match pred {
        Predicate::And(l, r) => CompiledPredicate::And(
            Box::new(compile_predicate(l, schema)?),
            Box::new(compile_predicate(r, schema)?),
        ),
        Predicate::Or(l, r) => CompiledPredicate::Or(
            Box::new(compile_predicate(l, schema)?),
            Box::new(compile_predicate(r, schema)?),
        ),
        Predicate::Not(p) => CompiledPredicate::Not(Box::new(compile_predicate(p, schema)?)),
        Predicate::Compare { op, left, right } => {
            let (lt, rt) = (term_type(left, schema)?, term_type(right, schema)?);
            CompiledPredicate::Compare {
                op: *op,
                left: compile_term(left, schema, &rt),
                right: compile_term(right, schema, &lt),
            }
        }
        Predicate::In { column, values } => {
            let i = schema.index_of(column).unwrap();
            let kind = schema.columns[i].ty.kind;
            CompiledPredicate::In {
                column: i,
                values: values.iter().map(|v| coerce_literal(v, kind)).collect(),
            }
        }
        Predicate::Contains { term, needle } => CompiledPredicate::Contains {
            term: compile_term(term, schema, &TermType::Null),
            needle: needle.clone(),
        },
    })
}

impl CompiledTerm {
    fn eval(&self, row: &[Value]) -> Value {
        match self {
            CompiledTerm::Column(i) => row[*i].clone(),
            CompiledTerm::Literal(v) => v.clone(),
            CompiledTerm::Lower(t) => match t.eval(row) {
                Value::Text(s) => Value::Text(s.to_lowercase()),
                other => other,
            },
        }
    }
}

impl CompiledPredicate {
    fn eval(&self, row: &[Value]) -> bool {
        match self {
            CompiledPredicate::And(l, r) => l.eval(row) && r.eval(row),
            CompiledPredicate::Or(l, r) => l.eval(row) || r.eval(row),
            CompiledPredicate::Not(p) => !p.eval(row),
            CompiledPredicate::Compare { op, left, right } => {
                match left.eval(row).compare(&right.eval(row)) {
                    Some(ord) => op.holds(ord),
                    None => false,
                }
            }
            CompiledPredicate::In { column, values } => {
                let v = &row[*column];
                values.iter().any(|x| v.sql_eq(x))
            }
            CompiledPredicate::Contains { term, needle } => match term.eval(row) {
                Value::Text(s) => s.contains(needle.as_str()),
                _ => false,
            },
        }
    }
}

impl Plan {
    pub fn schema(&self) -> &TableSchema {
        &self.root.schema
    }

    /// Rows-in counters for every node, pre-order.
    pub fn stats(&self) -> Vec<NodeStats> {
        let mut out = Vec::new();
        fn walk(n: &PlanNode, out: &mut Vec<NodeStats>) {
            out.push(NodeStats {
                operator: n.op.name(),
                rows_in: n.rows_in.load(AtomicOrdering::Relaxed),
            });
            for c in &n.children {
                walk(c, out);
            }
        }
        walk(&self.root, &mut out);
        out
    }

    /// Rows that entered each product or join node, pre-order.
    pub fn join_rows_in(&self) -> Vec<u64> {
        self.stats()
            .into_iter()
            .filter(|s| matches!(s.operator, "product" | "hash_join" | "nested_loop_join"))
            .map(|s| s.rows_in)
            .collect()
    }

    pub fn reset_stats(&self) {
        fn walk(n: &PlanNode) {
            n.rows_in.store(0, AtomicOrdering::Relaxed);
            n.children.iter().for_each(walk);
        }
        walk(&self.root);
    }
}

impl PhysicalOp {
    fn name(&self) -> &'static str {
        match self {
            PhysicalOp::Scan { .. } => "scan",
            PhysicalOp::Filter { .. } => "filter",
            PhysicalOp::Project { .. } => "project",
            PhysicalOp::Rename => "rename",
            PhysicalOp::Union { .. } => "union",
            PhysicalOp::Minus { .. } => "minus",
            PhysicalOp::Intersect { .. } => "intersect",
            PhysicalOp::Product => "product",
            PhysicalOp::HashJoin { .. } => "hash_join",
            PhysicalOp::NestedLoopJoin { .. } => "nested_loop_join",
            PhysicalOp::Divide { .. } => "divide",
            PhysicalOp::Aggregate { .. } => "aggregate",
            PhysicalOp::Distinct => "distinct",
            PhysicalOp::Sort { .. } => "sort",
            PhysicalOp::Limit { .. } => "limit",
        }
    }
}

impl fmt::Display for Plan {
    /// Indented operator tree with output columns and rows-in counters.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn walk(n: &PlanNode, depth: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            let detail = match &n.op {
                PhysicalOp::Scan { table } => format!(" {table}"),
                PhysicalOp::HashJoin { keys, residual } => format!(
                    " keys={:?}{}",
                    keys,
                    if residual.is_some() { " +residual" } else { "" }
                ),
                PhysicalOp::Limit { count } => format!(" {count}"),
                _ => String::new(),
            };
            writeln!(
                f,
                "{}{}{} -> [{}] rows_in={}",
                "  ".repeat(depth),
                n.op.name(),
                detail,
                n.schema.column_names().join(", "),
                n.rows_in.load(AtomicOrdering::Relaxed)
            )?;
            for c in &n.children {
                walk(c, depth + 1, f)?;
            }
            Ok(())
        }
        walk(&self.root, 0, f)
    }
}

type Rows = Vec<Vec<Value>>;

/// Runs a plan against a database.
pub fn execute(plan: &Plan, database: &Database) -> Result<Relation, ExecError> {
    let rows = run(&plan.root, database)?;
    Ok(Relation::new_unchecked(plan.root.schema.clone(), rows))
}

fn run(node: &PlanNode, db: &Database) -> Result<Rows, ExecError> {
    let inputs = node
        .children
        .iter()
        .map(|c| run(c, db))
        .collect::<Result<Vec<_>, _>>()?;
    let entering: usize = inputs.iter().map(Vec::len).sum();
    node.rows_in.fetch_add(entering as u64, AtomicOrdering::Relaxed);
    let mut inputs = inputs.into_iter();
    let mut next = || inputs.next().expect("arity checked at compile time");
    Ok(match &node.op {
        PhysicalOp::Scan { table } => {
            let rel = db
                .get(table)
                .ok_or_else(|| ExecError::MissingTable(table.clone()))?;
            check_scan_schema(table, rel.schema(), &node.schema)?;
            node.rows_in.fetch_add(rel.len() as u64, AtomicOrdering::Relaxed);
            rel.rows().to_vec()
        }
        PhysicalOp::Filter { predicate } => {
            next().into_iter().filter(|r| predicate.eval(r)).collect()
        }
        PhysicalOp::Project { indices } => next()
            .into_iter()
            .map(|r| indices.iter().map(|&i| r[i].clone()).collect())
            .collect(),
        PhysicalOp::Rename => next(),
        PhysicalOp::Union { promote } => {
            let (l, r) = (next(), next());
            let l = promote_rows(l, promote, true);
            let r = promote_rows(r, promote, false);
            dedup(l.into_iter().chain(r))
        }
        PhysicalOp::Minus { promote } => {
            let (l, r) = (promote_rows(next(), promote, true), promote_rows(next(), promote, false));
            let exclude: HashSet<RowKey> = r.into_iter().map(RowKey).collect();
            dedup(l.into_iter().filter(|row| !exclude.contains(&RowKey(row.clone()))))
        }
        PhysicalOp::Intersect { promote } => {
            let (l, r) = (promote_rows(next(), promote, true), promote_rows(next(), promote, false));
            let keep: HashSet<RowKey> = r.into_iter().map(RowKey).collect();
            dedup(l.into_iter().filter(|row| keep.contains(&RowKey(row.clone()))))
        }
        PhysicalOp::Product => {
            let (l, r) = (next(), next());
            let mut out = Vec::with_capacity(l.len() * r.len());
            for a in &l {
                for b in &r {
                    out.push(concat(a, b));
                }
            }
            out
        }
        PhysicalOp::NestedLoopJoin { predicate } => {
            let (l, r) = (next(), next());
            let mut out = Vec::new();
            for a in &l {
                for b in &r {
                    let row = concat(a, b);
                    if predicate.eval(&row) {
                        out.push(row);
                    }
                }
            }
            out
        }
        PhysicalOp::HashJoin { keys, residual } => {
            let (l, r) = (next(), next());
            let mut table: HashMap<RowKey, Vec<usize>> = HashMap::new();
            for (i, b) in r.iter().enumerate() {
                let key: Vec<Value> = keys.iter().map(|&(_, ri)| b[ri].clone()).collect();
                if key.iter().any(Value::is_null) {
                    continue;
                }
                table.entry(RowKey(key)).or_default().push(i);
            }
            let mut out = Vec::new();
            for a in &l {
                let key: Vec<Value> = keys.iter().map(|&(li, _)| a[li].clone()).collect();
                if key.iter().any(Value::is_null) {
                    continue;
                }
                if let Some(matches) = table.get(&RowKey(key)) {
                    for &i in matches {
                        let row = concat(a, &r[i]);
                        if residual.as_ref().map_or(true, |p| p.eval(&row)) {
                            out.push(row);
                        }
                    }
                }
            }
            out
        }
        PhysicalOp::Divide { quotient, divisor } => {
            let (l, r) = (next(), next());
            let pairs: HashSet<(RowKey, RowKey)> = l
                .iter()
                .map(|row| (pick(row, quotient), pick(row, divisor)))
                .collect();
            let divisors: Vec<RowKey> = dedup(r).into_iter().map(RowKey).collect();
            let candidates = dedup(l.iter().map(|row| pick(row, quotient).0));
            candidates
                .into_iter()
                .filter(|a| {
                    let a = RowKey(a.clone());
                    divisors
                        .iter()
                        .all(|b| pairs.contains(&(a.clone(), b.clone())))
                })
                .collect()
        }
        PhysicalOp::Aggregate { keys, aggregates } => aggregate(next(), keys, aggregates)?,
        PhysicalOp::Distinct => dedup(next()),
        PhysicalOp::Sort { keys } => {
            let mut rows = next();
            rows.sort_by(|a, b| {
                for &(i, desc) in keys {
                    let o = a[i].total_cmp(&b[i]);
                    let o = if desc { o.reverse() } else { o };
                    if o != Ordering::Equal {
                        return o;
                    }
                }
                Ordering::Equal
            });
            rows
        }
        PhysicalOp::Limit { count } => {
            let mut rows = next();
            rows.truncate(usize::try_from(*count).unwrap_or(usize::MAX));
            rows
        }
    })
}

fn check_scan_schema(table: &str, actual: &TableSchema, expected: &TableSchema) -> Result<(), ExecError> {
    let same = actual.len() == expected.len()
        && actual
            .columns
            .iter()
            .zip(&expected.columns)
            .all(|(a, e)| a.name == e.name && a.ty.kind == e.ty.kind);
    if same {
        Ok(())
    } else {
        Err(ExecError::SchemaMismatch {
            table: table.to_string(),
            detail: format!(
                "expected ({}), found ({})",
                expected.column_names().join(", "),
                actual.column_names().join(", ")
            ),
        })
    }
}

fn concat(a: &[Value], b: &[Value]) -> Vec<Value> {
    let mut row = Vec::with_capacity(a.len() + b.len());
    row.extend_from_slice(a);
    row.extend_from_slice(b);
    row
}

fn pick(row: &[Value], indices: &[usize]) -> RowKey {
    RowKey(indices.iter().map(|&i| row[i].clone()).collect())
}

fn promote_rows(rows: Rows, promote: &[(bool, bool)], left: bool) -> Rows {
    let mask: Vec<bool> = promote.iter().map(|&(l, r)| if left { l } else { r }).collect();
    if !mask.iter().any(|m| *m) {
        return rows;
    }
    rows.into_iter()
        .map(|row| {
            row.into_iter()
                .zip(&mask)
                .map(|(v, &m)| if m { v.promote_to_float() } else { v })
                .collect()
        })
        .collect()
}

/// Removes duplicate rows, keeping first occurrences in order.
fn dedup(rows: impl IntoIterator<Item = Vec<Value>>) -> Rows {
    let mut seen = HashSet::new();
    rows.into_iter()
        .filter(|r| seen.insert(RowKey(r.clone())))
        .collect()
}

fn aggregate(rows: Rows, keys: &[usize], aggs: &[CompiledAggregate]) -> Result<Rows, ExecError> {
    let mut order: Vec<RowKey> = Vec::new();
    let mut groups: HashMap<RowKey, Vec<usize>> = HashMap::new();
    for (i, row) in rows.iter().enumerate() {
        let k = pick(row, keys);
        groups
            .entry(k.clone())
            .or_insert_with(|| {
                order.push(k);
                Vec::new()
            })
            .push(i);
    }
    if keys.is_empty() && rows.is_empty() {
        order.push(RowKey(Vec::new()));
        groups.insert(RowKey(Vec::new()), Vec::new());
    }
    order
        .into_iter()
        .map(|k| {
            let members = &groups[&k];
            let mut out = k.0;
            for a in aggs {
                out.push(aggregate_one(a, members.iter().map(|&i| &rows[i]))?);
            }
            Ok(out)
        })
        .collect()
}

fn aggregate_one<'a>(
    agg: &CompiledAggregate,
    rows: impl Iterator<Item = &'a Vec<Value>>,
) -> Result<Value, ExecError> {
    let Some(col) = agg.input else {
        return Ok(Value::Int(rows.count() as i64));
    };
    let values: Vec<&Value> = rows.map(|r| &r[col]).filter(|v| !v.is_null()).collect();
    Ok(match agg.func {
        AggFn::CountStar => unreachable!("count(*) has no input column"),
        AggFn::Count => Value::Int(values.len() as i64),
        _ if values.is_empty() => Value::Null,
        AggFn::Sum => match agg.kind {
            Some(ColumnKind::Int) => {
                let mut total: i64 = 0;
                for v in &values {
                    let Value::Int(i) = v else {
                        return Err(ExecError::RuntimeTypeError(format!("sum over {v:?}")));
                    };
                    total = total
                        .checked_add(*i)
                        .ok_or_else(|| ExecError::NumericOverflow("sum".into()))?;
                }
                Value::Int(total)
            }
            _ => Value::Float(values.iter().map(|v| v.as_f64().unwrap_or(0.0)).sum()),
        },
        AggFn::Avg => {
            let total: f64 = match agg.kind {
                Some(ColumnKind::Int) => values
                    .iter()
                    .map(|v| match v {
                        Value::Int(i) => *i as i128,
                        _ => 0,
                    })
                    .sum::<i128>() as f64,
                _ => values.iter().map(|v| v.as_f64().unwrap_or(0.0)).sum(),
            };
            Value::Float(total / values.len() as f64)
        }
        AggFn::Min => (*values
            .iter()
            .copied()
            .min_by(|a, b| a.total_cmp(b))
            .unwrap())
        .clone(),
        AggFn::Max => (*values
            .iter()
            .copied()
            .reduce(|best, v| if v.total_cmp(best) == Ordering::Greater { v } else { best })
            .unwrap())
        .clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;
    use crate::schema::Column;
    use crate::value::ColumnType;

    fn catalog() -> Catalog {
        let text = ColumnType::required(ColumnKind::Text);
        let int = ColumnType::required(ColumnKind::Int);
        Catalog::new("")
            .with_table(TableSchema::new(
                "results",
                vec![Column::new("name", text), Column::new("test_result", text)],
            ))
            .unwrap()
            .with_table(TableSchema::new(
                "l",
                vec![Column::new("a", int), Column::new("b", text)],
            ))
            .unwrap()
            .with_table(TableSchema::new("r", vec![Column::new("b", text)]))
            .unwrap()
            .with_table(TableSchema::new(
                "m",
                vec![
                    Column::new("g", ColumnType::nullable(ColumnKind::Text)),
                    Column::new("d", ColumnType::nullable(ColumnKind::Float)),
                    Column::new("n", ColumnType::nullable(ColumnKind::Int)),
                ],
            ))
            .unwrap()
    }

    fn t(s: &str) -> Value {
        Value::text(s)
    }

    fn database(m_rows: Vec<Vec<Value>>, r_rows: Vec<Vec<Value>>) -> Database {
        let cat = catalog();
        let mut db = Database::new();
        let mut add = |name: &str, rows| {
            db.insert(
                name.to_string(),
                Relation::new(cat.table(name).unwrap().clone(), rows).unwrap(),
            );
        };
        add(
            "results",
            vec![vec![t("truck1"), t("OK")], vec![t("truck2"), t("NOK")]],
        );
        add(
            "l",
            vec![
                vec![Value::Int(1), t("x")],
                vec![Value::Int(1), t("y")],
                vec![Value::Int(2), t("x")],
            ],
        );
        add("r", r_rows);
        add("m", m_rows);
        db
    }

    fn run_ra(src: &str, db: &Database) -> Relation {
        let plan = compile_plan(&parse(src).unwrap(), &catalog()).unwrap();
        execute(&plan, db).unwrap()
    }

    fn default_db() -> Database {
        database(vec![], vec![vec![t("x")], vec![t("y")]])
    }

    #[test]
    fn selects_nok_rows() {
        let out = run_ra(r#"select[test_result == "NOK"](results)"#, &default_db());
        assert_eq!(out.rows(), [vec![t("truck2"), t("NOK")]]);
    }

    #[test]
    fn division_keeps_fully_paired_tuples() {
        let out = run_ra("divide(l, r)", &default_db());
        assert_eq!(out.schema().column_names(), ["a"]);
        assert_eq!(out.rows(), [vec![Value::Int(1)]]);
    }

    #[test]
    fn division_by_empty_divisor_is_vacuous() {
        let db = database(vec![], vec![]);
        let out = run_ra("divide(l, r)", &db);
        assert_eq!(out.rows(), [vec![Value::Int(1)], vec![Value::Int(2)]]);
    }

    #[test]
    fn empty_aggregates() {
        let db = default_db();
        let out = run_ra("groupby[; count(*) as n, avg(d) as a, count(n) as c](m)", &db);
        assert_eq!(out.rows(), [vec![Value::Int(0), Value::Null, Value::Int(0)]]);
        let out = run_ra("groupby[g; avg(d) as a](m)", &db);
        assert!(out.is_empty());
    }

    #[test]
    fn aggregates_skip_nulls() {
        let db = database(
            vec![
                vec![t("a"), Value::Float(1.0), Value::Int(2)],
                vec![t("a"), Value::Null, Value::Int(4)],
                vec![t("b"), Value::Null, Value::Null],
                vec![Value::Null, Value::Float(3.0), Value::Int(1)],
            ],
            vec![],
        );
        let out = run_ra(
            "groupby[g; count(*) as n, count(d) as c, avg(d) as a, sum(n) as s, min(n) as lo, max(d) as hi](m)",
            &db,
        );
        assert_eq!(
            out.rows(),
            [
                vec![t("a"), Value::Int(2), Value::Int(1), Value::Float(1.0), Value::Int(6), Value::Int(2), Value::Float(1.0)],
                vec![t("b"), Value::Int(1), Value::Int(0), Value::Null, Value::Null, Value::Null, Value::Null],
                vec![Value::Null, Value::Int(1), Value::Int(1), Value::Float(3.0), Value::Int(1), Value::Int(1), Value::Float(3.0)],
            ]
        );
    }

    #[test]
    fn comparisons_with_null_are_false() {
        let db = database(
            vec![vec![Value::Null, Value::Null, Value::Null], vec![t("a"), Value::Float(1.0), Value::Int(1)]],
            vec![],
        );
        assert_eq!(run_ra("select[d == null](m)", &db).len(), 0);
        assert_eq!(run_ra("select[d != 1.0](m)", &db).len(), 0);
        assert_eq!(run_ra("select[not (d == 1.0)](m)", &db).len(), 1);
        assert_eq!(run_ra("select[n in [1, null]](m)", &db).len(), 1);
        assert_eq!(run_ra(r#"select[contains(g, "")](m)"#, &db).len(), 1);
    }

    #[test]
    fn sort_is_stable_with_nulls_first() {
        let db = database(
            vec![
                vec![t("b"), Value::Float(1.0), Value::Int(1)],
                vec![t("a"), Value::Float(1.0), Value::Int(2)],
                vec![Value::Null, Value::Float(0.0), Value::Int(3)],
                vec![t("c"), Value::Float(0.5), Value::Int(4)],
            ],
            vec![],
        );
        let ns = |rel: Relation| rel.column_values("n").unwrap().into_iter().cloned().collect::<Vec<_>>();
        assert_eq!(ns(run_ra("sort[d desc](m)", &db)), [Value::Int(1), Value::Int(2), Value::Int(4), Value::Int(3)]);
        assert_eq!(ns(run_ra("sort[g](m)", &db)), [Value::Int(3), Value::Int(2), Value::Int(1), Value::Int(4)]);
        assert_eq!(ns(run_ra("limit[2](sort[d](m))", &db)), [Value::Int(3), Value::Int(4)]);
    }

    #[test]
    fn set_operators_deduplicate() {
        let db = default_db();
        assert_eq!(run_ra("union(r, r)", &db).len(), 2);
        assert_eq!(run_ra("union(project[b](l), r)", &db).len(), 2);
        assert_eq!(run_ra("minus(project[b](l), select[b == \"y\"](r))", &db).rows(), [vec![t("x")]]);
        assert_eq!(run_ra("intersect(project[b](l), r)", &db).len(), 2);
        assert_eq!(run_ra("project[b](l)", &db).len(), 3);
        assert_eq!(run_ra("distinct(project[b](l))", &db).len(), 2);
    }

    #[test]
    fn hash_and_nested_loop_joins_agree() {
        let db = default_db();
        let hash = run_ra("join[b == c](l, rename[b -> c](r))", &db);
        let nested = run_ra("join[b <= c and b >= c](l, rename[b -> c](r))", &db);
        let product = run_ra("select[b == c](times(l, rename[b -> c](r)))", &db);
        assert_eq!(hash.rows(), nested.rows());
        assert_eq!(hash.rows(), product.rows());
        assert_eq!(hash.len(), 3);
    }

    #[test]
    fn join_counts_rows_in() {
        let db = default_db();
        let plan = compile_plan(&parse("times(l, rename[b -> c](r))").unwrap(), &catalog()).unwrap();
        execute(&plan, &db).unwrap();
        assert_eq!(plan.join_rows_in(), [5]);
        assert!(plan.to_string().contains("product"));
    }

    #[test]
    fn compile_errors_follow_schema_taxonomy() {
        let cat = catalog();
        let err = compile_plan(&parse("join[b == b](l, r)").unwrap(), &cat).unwrap_err();
        assert!(matches!(err, SchemaError::DuplicateOutputColumn { .. }));
        let err = compile_plan(&parse("divide(r, l)").unwrap(), &cat).unwrap_err();
        assert!(matches!(err, SchemaError::InvalidDivision(_)));
        let err = compile_plan(&parse("join[a == c](l, rename[b -> c](r))").unwrap(), &cat).unwrap_err();
        assert!(matches!(err, SchemaError::TypeMismatch(_)));
    }

    #[test]
    fn scan_requires_cataloged_schema() {
        let mut db = default_db();
        let wrong = db["r"].clone();
        db.insert("l".into(), Relation::new(TableSchema::new("l", wrong.schema().columns.clone()), vec![]).unwrap());
        let plan = compile_plan(&parse("l").unwrap(), &catalog()).unwrap();
        assert!(matches!(execute(&plan, &db), Err(ExecError::SchemaMismatch { .. })));
        db.remove("l");
        assert!(matches!(execute(&plan, &db), Err(ExecError::MissingTable(_))));
    }

    #[test]
    fn sum_overflow_is_reported() {
        let cat = Catalog::new("")
            .with_table(TableSchema::new("big", vec![Column::new("v", ColumnType::required(ColumnKind::Int))]))
            .unwrap();
        let mut db = Database::new();
        db.insert(
            "big".into(),
            Relation::new(cat.table("big").unwrap().clone(), vec![vec![Value::Int(i64::MAX)], vec![Value::Int(1)]]).unwrap(),
        );
        let plan = compile_plan(&parse("groupby[; sum(v) as s](big)").unwrap(), &cat).unwrap();
        assert!(matches!(execute(&plan, &db), Err(ExecError::NumericOverflow(_))));
    }
}
