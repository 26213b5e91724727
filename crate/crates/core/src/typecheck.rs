//! Static schema inference and type checking for RA expressions.

use thiserror::Error;

use crate::ast::{AggFn, Aggregate, BinaryOp, Predicate, RaExpr, Term};
use crate::schema::{Catalog, Column, TableSchema};
use crate::value::{parse_date, ColumnKind, ColumnType, Value};

/// Name given to the output of binary operators.
pub const DERIVED_NAME: &str = "result";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown column `{column}` (available: {})", available.join(", "))]
    UnknownColumn {
        column: String,
        available: Vec<String>,
    },
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("inputs are not union-compatible: {0}")]
    NotUnionCompatible(String),
    #[error("invalid division: {0}")]
    InvalidDivision(String),
    #[error("duplicate output column `{column}`{}", hint_text(.hint))]
    DuplicateOutputColumn { column: String, hint: Option<String> },
    #[error("malformed expression: {0}")]
    Malformed(String),
}

fn hint_text(hint: &Option<String>) -> String {
    hint.as_ref().map(|h| format!("; {h}")).unwrap_or_default()
}

/// Output schema of `expr` against `catalog`.
pub fn infer_schema(expr: &RaExpr, catalog: &Catalog) -> Result<TableSchema, SchemaError> {
    let children = expr
        .children()
        .into_iter()
        .map(|c| infer_schema(c, catalog))
        .collect::<Result<Vec<_>, _>>()?;
    node_schema(expr, &children, catalog)
}

/// Checks a single node given the already-inferred schemas of its children.
pub fn node_schema(
    expr: &RaExpr,
    children: &[TableSchema],
    catalog: &Catalog,
) -> Result<TableSchema, SchemaError> {
    match expr {
        RaExpr::Scan(table) => catalog
            .table(table)
            .cloned()
            .ok_or_else(|| SchemaError::UnknownTable(table.clone())),
        RaExpr::Select { predicate, .. } => {
            check_predicate(predicate, &children[0])?;
            Ok(children[0].clone())
        }
        RaExpr::Project { columns, .. } => {
            let input = &children[0];
            if columns.is_empty() {
                return Err(SchemaError::Malformed("projection lists no columns".into()));
            }
            let mut out = Vec::with_capacity(columns.len());
            for c in columns {
                if columns.iter().filter(|x| *x == c).count() > 1 {
                    return Err(duplicate(c, None));
                }
                out.push(lookup(input, c)?.clone());
            }
            Ok(TableSchema::new(input.name.clone(), out))
        }
        RaExpr::Rename { pairs, .. } => {
            let input = &children[0];
            if pairs.is_empty() {
                return Err(SchemaError::Malformed("rename lists no pairs".into()));
            }
            let mut cols = input.columns.clone();
            for (i, (old, new)) in pairs.iter().enumerate() {
                if pairs[..i].iter().any(|(o, _)| o == old) {
                    return Err(SchemaError::Malformed(format!(
                        "column `{old}` renamed twice"
                    )));
                }
                let idx = input.index_of(old).ok_or_else(|| unknown(input, old))?;
                cols[idx].name = new.clone();
                cols[idx].synonyms.clear();
            }
            check_unique(&cols, None)?;
            Ok(TableSchema::new(input.name.clone(), cols))
        }
        RaExpr::Binary { op, .. } => {
            let (l, r) = (&children[0], &children[1]);
            match op {
                BinaryOp::Union | BinaryOp::Minus | BinaryOp::Intersect => {
                    let columns = union_columns(l, r)?;
                    Ok(TableSchema::new(DERIVED_NAME, columns))
                }
                BinaryOp::Times => {
                    let cols = concat_columns(l, r)?;
                    Ok(TableSchema::new(DERIVED_NAME, cols))
                }
                BinaryOp::Divide => divide_columns(l, r).map(|c| TableSchema::new(DERIVED_NAME, c)),
            }
        }
        RaExpr::Join { predicate, .. } => {
            let cols = concat_columns(&children[0], &children[1])?;
            let schema = TableSchema::new(DERIVED_NAME, cols);
            check_predicate(predicate, &schema)?;
            Ok(schema)
        }
        RaExpr::GroupBy {
            keys, aggregates, ..
        } => {
            let input = &children[0];
            if aggregates.is_empty() {
                return Err(SchemaError::Malformed("groupby lists no aggregates".into()));
            }
            let mut cols = Vec::new();
            for k in keys {
                if keys.iter().filter(|x| *x == k).count() > 1 {
                    return Err(duplicate(k, None));
                }
                cols.push(lookup(input, k)?.clone());
            }
            for a in aggregates {
                cols.push(aggregate_column(a, input)?);
            }
            check_unique(&cols, None)?;
            Ok(TableSchema::new(input.name.clone(), cols))
        }
        RaExpr::Distinct(_) | RaExpr::Limit { .. } => Ok(children[0].clone()),
        RaExpr::Sort { keys, .. } => {
            if keys.is_empty() {
                return Err(SchemaError::Malformed("sort lists no keys".into()));
            }
            for k in keys {
                lookup(&children[0], &k.column)?;
            }
            Ok(children[0].clone())
        }
    }
}

fn lookup<'a>(schema: &'a TableSchema, name: &str) -> Result<&'a Column, SchemaError> {
    schema.column(name).ok_or_else(|| unknown(schema, name))
}

fn unknown(schema: &TableSchema, name: &str) -> SchemaError {
    SchemaError::UnknownColumn {
        column: name.to_string(),
        available: schema.columns.iter().map(|c| c.name.clone()).collect(),
    }
}

fn duplicate(name: &str, hint: Option<String>) -> SchemaError {
    SchemaError::DuplicateOutputColumn {
        column: name.to_string(),
        hint,
    }
}

fn check_unique(cols: &[Column], hint: Option<&str>) -> Result<(), SchemaError> {
    for (i, c) in cols.iter().enumerate() {
        if cols[..i].iter().any(|p| p.name == c.name) {
            return Err(duplicate(&c.name, hint.map(str::to_string)));
        }
    }
    Ok(())
}

fn concat_columns(l: &TableSchema, r: &TableSchema) -> Result<Vec<Column>, SchemaError> {
    let mut cols = l.columns.clone();
    cols.extend(r.columns.iter().cloned());
    check_unique(
        &cols,
        Some("column names must be disjoint; rename the right-hand columns with rename[old -> new] first"),
    )?;
    Ok(cols)
}

fn union_columns(l: &TableSchema, r: &TableSchema) -> Result<Vec<Column>, SchemaError> {
    if l.len() != r.len() {
        return Err(SchemaError::NotUnionCompatible(format!(
            "{} columns versus {}",
            l.len(),
            r.len()
        )));
    }
    l.columns
        .iter()
        .zip(&r.columns)
        .map(|(a, b)| {
            let kind = a.ty.kind.unify(b.ty.kind).ok_or_else(|| {
                SchemaError::NotUnionCompatible(format!(
                    "`{}` is {} but `{}` is {}",
                    a.name, a.ty.kind, b.name, b.ty.kind
                ))
            })?;
            let mut c = a.clone();
            c.ty = ColumnType::new(kind, a.ty.nullable || b.ty.nullable);
            Ok(c)
        })
        .collect()
}

fn divide_columns(l: &TableSchema, r: &TableSchema) -> Result<Vec<Column>, SchemaError> {
    if r.len() >= l.len() {
        return Err(SchemaError::InvalidDivision(format!(
            "divisor columns ({}) must be a strict subset of dividend columns ({})",
            r.column_names().join(", "),
            l.column_names().join(", ")
        )));
    }
    for c in &r.columns {
        let lc = l.column(&c.name).ok_or_else(|| {
            SchemaError::InvalidDivision(format!(
                "divisor column `{}` does not appear in the dividend ({})",
                c.name,
                l.column_names().join(", ")
            ))
        })?;
        if !lc.ty.kind.comparable_with(c.ty.kind) {
            return Err(SchemaError::InvalidDivision(format!(
                "column `{}` is {} in the dividend but {} in the divisor",
                c.name, lc.ty.kind, c.ty.kind
            )));
        }
    }
    Ok(l.columns
        .iter()
        .filter(|c| r.index_of(&c.name).is_none())
        .cloned()
        .collect())
}

fn aggregate_column(a: &Aggregate, input: &TableSchema) -> Result<Column, SchemaError> {
    let source = match (&a.func, &a.input) {
        (AggFn::CountStar, None) => None,
        (AggFn::CountStar, Some(_)) | (_, None) => {
            return Err(SchemaError::Malformed(format!(
                "aggregate `{}` has the wrong input",
                a.output
            )))
        }
        (_, Some(col)) => Some(lookup(input, col)?),
    };
    let ty = match a.func {
        AggFn::CountStar | AggFn::Count => ColumnType::required(ColumnKind::Int),
        AggFn::Sum | AggFn::Avg => {
            let src = source.unwrap();
            if !src.ty.kind.is_numeric() {
                return Err(SchemaError::TypeMismatch(format!(
                    "{}({}) needs a numeric column, `{}` is {}",
                    a.func.keyword(),
                    src.name,
                    src.name,
                    src.ty.kind
                )));
            }
            let kind = if a.func == AggFn::Avg {
                ColumnKind::Float
            } else {
                src.ty.kind
            };
            ColumnType::nullable(kind)
        }
        AggFn::Min | AggFn::Max => {
            let src = source.unwrap();
            if !src.ty.kind.is_ordered() {
                return Err(SchemaError::TypeMismatch(format!(
                    "{}({}) needs an ordered column, `{}` is {}",
                    a.func.keyword(),
                    src.name,
                    src.name,
                    src.ty.kind
                )));
            }
            ColumnType::nullable(src.ty.kind)
        }
    };
    Ok(Column::new(a.output.clone(), ty))
}

/// Static type of a predicate term.
#[derive(Debug, Clone, PartialEq)]
pub enum TermType {
    Typed(ColumnKind),
    /// A `null` literal, compatible with everything.
    Null,
    /// A text literal that may stand for a date when compared with one.
    TextLiteral(String),
}

impl TermType {
    fn kind(&self) -> Option<ColumnKind> {
        match self {
            TermType::Typed(k) => Some(*k),
            TermType::TextLiteral(_) => Some(ColumnKind::Text),
            TermType::Null => None,
        }
    }
}

pub fn term_type(term: &Term, schema: &TableSchema) -> Result<TermType, SchemaError> {
    match term {
        Term::Column(c) => Ok(TermType::Typed(lookup(schema, c)?.ty.kind)),
        Term::Literal(Value::Null) => Ok(TermType::Null),
        Term::Literal(Value::Text(s)) => Ok(TermType::TextLiteral(s.clone())),
        Term::Literal(v) => Ok(TermType::Typed(v.kind().unwrap())),
        Term::Lower(inner) => match term_type(inner, schema)? {
            TermType::Null => Ok(TermType::Null),
            t if t.kind() == Some(ColumnKind::Text) => Ok(TermType::Typed(ColumnKind::Text)),
            t => Err(SchemaError::TypeMismatch(format!(
                "lower() needs text, got {}",
                t.kind().unwrap()
            ))),
        },
    }
}

/// Whether two term types may be compared; text literals compared with a
/// date must be valid `YYYY-MM-DD` dates.
pub fn comparable(a: &TermType, b: &TermType) -> Result<(), SchemaError> {
    match (a, b) {
        (TermType::Null, _) | (_, TermType::Null) => Ok(()),
        (TermType::TextLiteral(s), TermType::Typed(ColumnKind::Date))
        | (TermType::Typed(ColumnKind::Date), TermType::TextLiteral(s)) => {
            if parse_date(s).is_some() {
                Ok(())
            } else {
                Err(SchemaError::TypeMismatch(format!(
                    "{s:?} is not a YYYY-MM-DD date"
                )))
            }
        }
        _ => {
            let (ka, kb) = (a.kind().unwrap(), b.kind().unwrap());
            if ka.comparable_with(kb) {
                Ok(())
            } else {
                Err(SchemaError::TypeMismatch(format!("cannot compare {ka} with {kb}")))
            }
        }
    }
}

/// Converts a literal compared against a column of `kind` into that kind's
/// representation (text literals against dates become dates).
pub fn coerce_literal(value: &Value, kind: ColumnKind) -> Value {
    match (value, kind) {
        (Value::Text(s), ColumnKind::Date) => parse_date(s).map(Value::Date).unwrap_or(Value::Null),
        _ => value.clone(),
    }
}

pub fn check_predicate(pred: &Predicate, schema: &TableSchema) -> Result<(), SchemaError> {
    match pred {
        Predicate::And(l, r) | Predicate::Or(l, r) => {
            check_predicate(l, schema)?;
            check_predicate(r, schema)
        }
        Predicate::Not(p) => check_predicate(p, schema),
        Predicate::Compare { left, right, .. } => {
            comparable(&term_type(left, schema)?, &term_type(right, schema)?)
        }
        Predicate::In { column, values } => {
            if values.is_empty() {
                return Err(SchemaError::Malformed("empty `in` list".into()));
            }
            let col = TermType::Typed(lookup(schema, column)?.ty.kind);
            for v in values {
                comparable(&col, &term_type(&Term::Literal(v.clone()), schema)?)?;
            }
            Ok(())
        }
        Predicate::Contains { term, .. } => match term_type(term, schema)? {
            TermType::Null => Ok(()),
            t if t.kind() == Some(ColumnKind::Text) => Ok(()),
            t => Err(SchemaError::TypeMismatch(format!(
                "contains() needs text, got {}",
                t.kind().unwrap()
            ))),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::SortKey;
    use crate::parser::parse;

    fn catalog() -> Catalog {
        let text = ColumnType::required(ColumnKind::Text);
        Catalog::new("")
            .with_table(TableSchema::new(
                "results",
                vec![
                    Column::new("name", text),
                    Column::new("test_result", ColumnType::nullable(ColumnKind::Text)),
                    Column::new("duration", ColumnType::nullable(ColumnKind::Float)),
                    Column::new("runs", ColumnType::required(ColumnKind::Int)),
                    Column::new("day", ColumnType::required(ColumnKind::Date)),
                ],
            ))
            .unwrap()
            .with_table(TableSchema::new(
                "a",
                vec![Column::new("name", text), Column::new("test_result", text)],
            ))
            .unwrap()
            .with_table(TableSchema::new("b", vec![Column::new("test_result", text)]))
            .unwrap()
    }

    fn infer(src: &str) -> Result<TableSchema, SchemaError> {
        infer_schema(&parse(src).unwrap(), &catalog())
    }

    #[test]
    fn scan_and_projection() {
        let cat = catalog();
        assert_eq!(infer("results").unwrap(), *cat.table("results").unwrap());
        let s = infer("project[name](a)").unwrap();
        assert_eq!(s.column_names(), ["name"]);
        assert_eq!(s.columns[0].ty, ColumnType::required(ColumnKind::Text));
    }

    #[test]
    fn union_takes_left_names() {
        let s = infer("union(project[name](a), project[test_result](a))").unwrap();
        assert_eq!(s.column_names(), ["name"]);
        assert_eq!(s.columns[0].ty.kind, ColumnKind::Text);
    }

    #[test]
    fn union_promotes_numeric_kinds() {
        let s = infer("union(project[runs](results), project[duration](results))").unwrap();
        assert_eq!(s.columns[0].ty, ColumnType::nullable(ColumnKind::Float));
        assert!(matches!(
            infer("union(project[runs](results), project[name](results))"),
            Err(SchemaError::NotUnionCompatible(_))
        ));
        assert!(matches!(infer("minus(a, b)"), Err(SchemaError::NotUnionCompatible(_))));
    }

    #[test]
    fn product_collisions_need_rename() {
        let err = infer("times(a, b)").unwrap_err();
        assert!(matches!(err, SchemaError::DuplicateOutputColumn { ref column, .. } if column == "test_result"));
        assert!(err.to_string().contains("rename"));
        let s = infer("times(a, rename[test_result -> other](b))").unwrap();
        assert_eq!(s.column_names(), ["name", "test_result", "other"]);
        assert!(matches!(
            infer("join[name == name](a, b)"),
            Err(SchemaError::DuplicateOutputColumn { .. })
        ));
    }

    #[test]
    fn division_shapes() {
        assert_eq!(infer("divide(a, b)").unwrap().column_names(), ["name"]);
        assert!(matches!(infer("divide(b, a)"), Err(SchemaError::InvalidDivision(_))));
        assert!(matches!(infer("divide(a, a)"), Err(SchemaError::InvalidDivision(_))));
        assert!(matches!(
            infer("divide(a, project[runs](results))"),
            Err(SchemaError::InvalidDivision(_))
        ));
    }

    #[test]
    fn predicate_types() {
        assert!(infer("select[runs > 1.5](results)").is_ok());
        assert!(infer(r#"select[day >= "2024-01-31"](results)"#).is_ok());
        assert!(matches!(
            infer(r#"select[day >= "2024-13-31"](results)"#),
            Err(SchemaError::TypeMismatch(_))
        ));
        assert!(matches!(
            infer(r#"select[runs == "3"](results)"#),
            Err(SchemaError::TypeMismatch(_))
        ));
        assert!(matches!(
            infer(r#"select[contains(runs, "3")](results)"#),
            Err(SchemaError::TypeMismatch(_))
        ));
        assert!(matches!(
            infer(r#"select[lower(runs) == "x"](results)"#),
            Err(SchemaError::TypeMismatch(_))
        ));
        assert!(infer(r#"select[lower(name) == lower("X") and test_result != null](results)"#).is_ok());
        assert!(matches!(
            infer("select[nope == 1](results)"),
            Err(SchemaError::UnknownColumn { .. })
        ));
        assert!(matches!(infer("nope"), Err(SchemaError::UnknownTable(_))));
    }

    #[test]
    fn aggregate_types() {
        let s = infer("groupby[name; count(*) as n, avg(runs) as m, max(day) as last, sum(runs) as s](results)").unwrap();
        let kinds: Vec<_> = s.columns.iter().map(|c| c.ty).collect();
        assert_eq!(
            kinds,
            [
                ColumnType::required(ColumnKind::Text),
                ColumnType::required(ColumnKind::Int),
                ColumnType::nullable(ColumnKind::Float),
                ColumnType::nullable(ColumnKind::Date),
                ColumnType::nullable(ColumnKind::Int),
            ]
        );
        assert!(matches!(
            infer("groupby[; sum(name) as s](results)"),
            Err(SchemaError::TypeMismatch(_))
        ));
        assert!(matches!(
            infer("groupby[name; count(*) as name](results)"),
            Err(SchemaError::DuplicateOutputColumn { .. })
        ));
    }

    #[test]
    fn malformed_nodes_are_rejected() {
        let cat = catalog();
        let e = RaExpr::sort(vec![], RaExpr::scan("a"));
        assert!(matches!(infer_schema(&e, &cat), Err(SchemaError::Malformed(_))));
        let e = RaExpr::sort(vec![SortKey::asc("zzz")], RaExpr::scan("a"));
        assert!(matches!(infer_schema(&e, &cat), Err(SchemaError::UnknownColumn { .. })));
        assert!(matches!(
            infer("rename[name -> test_result](a)"),
            Err(SchemaError::DuplicateOutputColumn { .. })
        ));
        assert!(matches!(infer("project[name, name](a)"), Err(SchemaError::DuplicateOutputColumn { .. })));
    }
}
