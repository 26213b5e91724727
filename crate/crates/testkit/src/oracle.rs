//! Naive reference evaluator.
//!
//! Evaluates an expression straight from the operator definitions: nested
//! loops for every binary operator, linear scans for duplicate detection and
//! grouping, no hashing, no planning. Row order follows the same conventions
//! as the engine (left input in the outer loop, first occurrence wins,
//! stable sorting) so ordered results can be compared too.

use std::cmp::Ordering;

use relq::ast::{AggFn, BinaryOp, CmpOp, Predicate, RaExpr, Term};
use relq::value::parse_date;
use relq::{infer_schema, Catalog, ColumnKind, Database, Relation, Value};

struct Table {
    names: Vec<String>,
    rows: Vec<Vec<Value>>,
}

/// Evaluates `expr` over `db`. The output schema comes from the type
/// checker; every value is computed here.
pub fn reference_eval(expr: &RaExpr, catalog: &Catalog, db: &Database) -> Result<Relation, String> {
    let schema = infer_schema(expr, catalog).map_err(|e| e.to_string())?;
    let table = eval(expr, db)?;
    if table.names != schema.column_names() {
        return Err(format!(
            "reference columns {:?} differ from inferred {:?}",
            table.names,
            schema.column_names()
        ));
    }
    let rows = table
        .rows
        .into_iter()
        .map(|row| {
            row.into_iter()
                .zip(&schema.columns)
                .map(|(v, c)| match (v, c.ty.kind) {
                    (Value::Int(i), ColumnKind::Float) => Value::Float(i as f64),
                    (v, _) => v,
                })
                .collect()
        })
        .collect();
    Relation::new(schema, rows).map_err(|e| e.to_string())
}

fn eval(expr: &RaExpr, db: &Database) -> Result<Table, String> {
    Ok(match expr {
        RaExpr::Scan(name) => {
            let rel = db.get(name).ok_or_else(|| format!("no table {name}"))?;
            Table {
                names: rel.schema().columns.iter().map(|c| c.name.clone()).collect(),
                rows: rel.rows().to_vec(),
            }
        }
        RaExpr::Select { predicate, input } => {
            let t = eval(input, db)?;
            let rows = t
                .rows
                .iter()
                .filter(|r| holds(predicate, &t.names, r))
                .cloned()
                .collect();
            Table { names: t.names, rows }
        }
        RaExpr::Project { columns, input } => {
            let t = eval(input, db)?;
            let rows = t
                .rows
                .iter()
                .map(|r| columns.iter().map(|c| get(&t.names, r, c)).collect())
                .collect();
            Table {
                names: columns.clone(),
                rows,
            }
        }
        RaExpr::Rename { pairs, input } => {
            let t = eval(input, db)?;
            let names = t
                .names
                .iter()
                .map(|n| {
                    pairs
                        .iter()
                        .find(|(old, _)| old == n)
                        .map_or_else(|| n.clone(), |(_, new)| new.clone())
                })
                .collect();
            Table { names, rows: t.rows }
        }
        RaExpr::Binary { op, left, right } => {
            let (l, r) = (eval(left, db)?, eval(right, db)?);
            match op {
                BinaryOp::Union => {
                    let mut out = Vec::new();
                    for row in l.rows.iter().chain(&r.rows) {
                        add_unique(&mut out, row);
                    }
                    Table { names: l.names, rows: out }
                }
                BinaryOp::Minus | BinaryOp::Intersect => {
                    let want = *op == BinaryOp::Intersect;
                    let mut out = Vec::new();
                    for row in &l.rows {
                        if r.rows.iter().any(|x| same_row(x, row)) == want {
                            add_unique(&mut out, row);
                        }
                    }
                    Table { names: l.names, rows: out }
                }
                BinaryOp::Times => product(l, r, None),
                BinaryOp::Divide => divide(l, r),
            }
        }
        RaExpr::Join {
            predicate,
            left,
            right,
        } => product(eval(left, db)?, eval(right, db)?, Some(predicate)),
        RaExpr::GroupBy {
            keys,
            aggregates,
            input,
        } => {
            let t = eval(input, db)?;
            let mut groups: Vec<(Vec<Value>, Vec<Vec<Value>>)> = Vec::new();
            for row in &t.rows {
                let key: Vec<Value> = keys.iter().map(|k| get(&t.names, row, k)).collect();
                match groups.iter_mut().find(|(k, _)| same_row(k, &key)) {
                    Some((_, members)) => members.push(row.clone()),
                    None => groups.push((key, vec![row.clone()])),
                }
            }
            if keys.is_empty() && groups.is_empty() {
                groups.push((Vec::new(), Vec::new()));
            }
            let mut rows = Vec::new();
            for (key, members) in groups {
                let mut row = key;
                for a in aggregates {
                    let values: Vec<Value> = match &a.input {
                        Some(c) => members
                            .iter()
                            .map(|m| get(&t.names, m, c))
                            .filter(|v| *v != Value::Null)
                            .collect(),
                        None => Vec::new(),
                    };
                    row.push(aggregate(a.func, members.len(), &values)?);
                }
                rows.push(row);
            }
            let mut names = keys.clone();
            names.extend(aggregates.iter().map(|a| a.output.clone()));
            Table { names, rows }
        }
        RaExpr::Distinct(input) => {
            let t = eval(input, db)?;
            let mut out = Vec::new();
            for row in &t.rows {
                add_unique(&mut out, row);
            }
            Table { names: t.names, rows: out }
        }
        RaExpr::Sort { keys, input } => {
            let mut t = eval(input, db)?;
            let idx: Vec<(usize, bool)> = keys
                .iter()
                .map(|k| (position(&t.names, &k.column), k.descending))
                .collect();
            // insertion sort: stable by construction
            let mut sorted: Vec<Vec<Value>> = Vec::new();
            for row in t.rows.drain(..) {
                let at = sorted
                    .iter()
                    .position(|s| sort_cmp(&idx, &row, s) == Ordering::Less)
                    .unwrap_or(sorted.len());
                sorted.insert(at, row);
            }
            Table {
                names: t.names,
                rows: sorted,
            }
        }
        RaExpr::Limit { count, input } => {
            let mut t = eval(input, db)?;
            t.rows = t.rows.into_iter().take(*count as usize).collect();
            t
        }
    })
}

fn position(names: &[String], column: &str) -> usize {
    names
        .iter()
        .position(|n| n == column)
        .unwrap_or_else(|| panic!("unknown column {column} in {names:?}"))
}

fn get(names: &[String], row: &[Value], column: &str) -> Value {
    row[position(names, column)].clone()
}

fn product(l: Table, r: Table, predicate: Option<&Predicate>) -> Table {
    let mut names = l.names;
    names.extend(r.names);
    let mut rows = Vec::new();
    for a in &l.rows {
        for b in &r.rows {
            let row: Vec<Value> = a.iter().chain(b).cloned().collect();
            if predicate.is_none_or(|p| holds(p, &names, &row)) {
                rows.push(row);
            }
        }
    }
    Table { names, rows }
}

fn divide(l: Table, r: Table) -> Table {
    let quotient: Vec<String> = l
        .names
        .iter()
        .filter(|n| !r.names.contains(n))
        .cloned()
        .collect();
    let mut candidates = Vec::new();
    for row in &l.rows {
        let a: Vec<Value> = quotient.iter().map(|c| get(&l.names, row, c)).collect();
        add_unique(&mut candidates, &a);
    }
    let rows = candidates
        .into_iter()
        .filter(|a| {
            r.rows.iter().all(|b| {
                l.rows.iter().any(|row| {
                    quotient
                        .iter()
                        .zip(a)
                        .all(|(c, v)| same(&get(&l.names, row, c), v))
                        && r
                            .names
                            .iter()
                            .zip(b)
                            .all(|(c, v)| same(&get(&l.names, row, c), v))
                })
            })
        })
        .collect();
    Table {
        names: quotient,
        rows,
    }
}

fn aggregate(func: AggFn, group_size: usize, values: &[Value]) -> Result<Value, String> {
    let floats = || values.iter().map(|v| number(v).unwrap());
    Ok(match func {
        AggFn::CountStar => Value::Int(group_size as i64),
        AggFn::Count => Value::Int(values.len() as i64),
        _ if values.is_empty() => Value::Null,
        AggFn::Sum if values.iter().all(|v| matches!(v, Value::Int(_))) => {
            let total: i128 = values
                .iter()
                .map(|v| match v {
                    Value::Int(i) => *i as i128,
                    _ => 0,
                })
                .sum();
            Value::Int(i64::try_from(total).map_err(|_| "sum overflow".to_string())?)
        }
        AggFn::Sum => Value::Float(floats().sum()),
        AggFn::Avg => Value::Float(floats().sum::<f64>() / values.len() as f64),
        AggFn::Min | AggFn::Max => {
            let mut best = values[0].clone();
            for v in &values[1..] {
                let o = order(v, &best);
                if (func == AggFn::Min && o == Ordering::Less) || (func == AggFn::Max && o == Ordering::Greater) {
                    best = v.clone();
                }
            }
            best
        }
    })
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Int(i) => Some(*i as f64),
        Value::Float(x) => Some(*x),
        _ => None,
    }
}

fn rank(v: &Value) -> u8 {
    match v {
        Value::Null => 0,
        Value::Bool(_) => 1,
        Value::Int(_) | Value::Float(_) => 2,
        Value::Text(_) => 3,
        Value::Date(_) => 4,
    }
}

/// Sorting order: null < bool < number < text < date.
fn order(a: &Value, b: &Value) -> Ordering {
    match (a, b) {
        (Value::Bool(x), Value::Bool(y)) => x.cmp(y),
        (Value::Int(x), Value::Int(y)) => x.cmp(y),
        (Value::Text(x), Value::Text(y)) => x.as_bytes().cmp(y.as_bytes()),
        (Value::Date(x), Value::Date(y)) => x.cmp(y),
        _ => match (number(a), number(b)) {
            (Some(x), Some(y)) => x.partial_cmp(&y).unwrap_or(Ordering::Equal),
            _ => rank(a).cmp(&rank(b)),
        },
    }
}

fn sort_cmp(keys: &[(usize, bool)], a: &[Value], b: &[Value]) -> Ordering {
    for &(i, desc) in keys {
        let o = order(&a[i], &b[i]);
        let o = if desc { o.reverse() } else { o };
        if o != Ordering::Equal {
            return o;
        }
    }
    Ordering::Equal
}

/// Identity used by set operators and grouping: null matches null.
fn same(a: &Value, b: &Value) -> bool {
    order(a, b) == Ordering::Equal
}

fn same_row(a: &[Value], b: &[Value]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| same(x, y))
}

fn add_unique(out: &mut Vec<Vec<Value>>, row: &[Value]) {
    if !out.iter().any(|x| same_row(x, row)) {
        out.push(row.to_vec());
    }
}

fn term(t: &Term, names: &[String], row: &[Value]) -> Value {
    match t {
        Term::Column(c) => get(names, row, c),
        Term::Literal(v) => v.clone(),
        Term::Lower(inner) => match term(inner, names, row) {
            Value::Text(s) => Value::Text(s.to_lowercase()),
            other => other,
        },
    }
}

/// Predicate comparison; `None` means the comparison is false.
fn compare(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Null, _) | (_, Value::Null) => None,
        (Value::Date(_), Value::Text(s)) => compare(a, &Value::Date(parse_date(s)?)),
        (Value::Text(s), Value::Date(_)) => compare(&Value::Date(parse_date(s)?), b),
        _ if rank(a) == rank(b) => Some(order(a, b)),
        _ => None,
    }
}

fn holds(p: &Predicate, names: &[String], row: &[Value]) -> bool {
    match p {
        Predicate::And(l, r) => holds(l, names, row) && holds(r, names, row),
        Predicate::Or(l, r) => holds(l, names, row) || holds(r, names, row),
        Predicate::Not(q) => !holds(q, names, row),
        Predicate::Compare { op, left, right } => {
            let Some(o) = compare(&term(left, names, row), &term(right, names, row)) else {
                return false;
            };
            match op {
                CmpOp::Eq => o == Ordering::Equal,
                CmpOp::Ne => o != Ordering::Equal,
                CmpOp::Lt => o == Ordering::Less,
                CmpOp::Le => o != Ordering::Greater,
                CmpOp::Gt => o == Ordering::Greater,
                CmpOp::Ge => o != Ordering::Less,
            }
        }
        Predicate::In { column, values } => {
            let v = get(names, row, column);
            values.iter().any(|x| compare(&v, x) == Some(Ordering::Equal))
        }
        Predicate::Contains { term: t, needle } => match term(t, names, row) {
            Value::Text(s) => s.contains(needle.as_str()),
            _ => false,
        },
    }
}
