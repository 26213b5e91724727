//! Schema knowledge base: prompt rendering, identifier resolution and the
//! binder that repairs or rejects references before compilation.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::ast::RaExpr;
use crate::schema::{Catalog, Column, TableSchema};
use crate::typecheck::{node_schema, SchemaError};

/// Largest edit distance accepted as a repair.
pub const MAX_EDIT_DISTANCE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionMethod {
    Exact,
    CaseFold,
    Synonym,
    Normalized,
    EditDistance,
}

impl ResolutionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ResolutionMethod::Exact => "exact",
            ResolutionMethod::CaseFold => "case_fold",
            ResolutionMethod::Synonym => "synonym",
            ResolutionMethod::Normalized => "normalized",
            ResolutionMethod::EditDistance => "edit_distance",
        }
    }
}

/// How a requested identifier was mapped onto a canonical name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Resolution {
    pub requested: String,
    pub resolved: String,
    pub method: ResolutionMethod,
    /// Non-zero only for [`ResolutionMethod::EditDistance`].
    pub distance: usize,
}

impl std::fmt::Display for Resolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} -> {} ({}", self.requested, self.resolved, self.method.as_str())?;
        if self.distance > 0 {
            write!(f, ", distance {}", self.distance)?;
        }
        f.write_str(")")
    }
}

/// A name that references may resolve to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub name: String,
    pub synonyms: Vec<String>,
}

impl Candidate {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            synonyms: Vec::new(),
        }
    }

    pub fn with_synonyms<S: Into<String>>(mut self, synonyms: impl IntoIterator<Item = S>) -> Self {
        self.synonyms = synonyms.into_iter().map(Into::into).collect();
        self
    }
}

impl From<&Column> for Candidate {
    fn from(c: &Column) -> Self {
        Candidate::new(c.name.clone()).with_synonyms(c.synonyms.iter().cloned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("unresolved identifier `{0}`")]
    Unresolved(String),
    #[error("ambiguous identifier `{requested}`: could be {}", .candidates.join(", "))]
    Ambiguous {
        requested: String,
        candidates: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BindError {
    #[error("unresolved {kind} `{identifier}`")]
    Unresolved { kind: RefKind, identifier: String },
    #[error("ambiguous {kind} `{identifier}`: could be {}", .candidates.join(", "))]
    Ambiguous {
        kind: RefKind,
        identifier: String,
        candidates: Vec<String>,
    },
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefKind {
    Table,
    Column,
}

impl std::fmt::Display for RefKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RefKind::Table => "table",
            RefKind::Column => "column",
        })
    }
}

fn fold(s: &str) -> String {
    s.to_lowercase()
}

fn normalize(s: &str) -> String {
    s.chars()
        .filter(|c| !matches!(c, ' ' | '_' | '-'))
        .flat_map(char::to_lowercase)
        .collect()
}

/// Resolves `requested` against `candidates` in order: exact, case-insensitive,
/// synonym, normalized (spaces, underscores and hyphens stripped, case folded),
/// then a unique closest name within [`MAX_EDIT_DISTANCE`]. Ties at any
/// stage are ambiguous. The result does not depend on candidate order.
pub fn resolve_identifier(requested: &str, candidates: &[Candidate]) -> Result<Resolution, ResolveError> {
    let found = |resolved: &str, method, distance| Resolution {
        requested: requested.to_string(),
        resolved: resolved.to_string(),
        method,
        distance,
    };
    let unique = |mut names: Vec<&str>, method| -> Option<Result<Resolution, ResolveError>> {
        names.sort_unstable();
        names.dedup();
        match names.as_slice() {
            [] => None,
            [one] => Some(Ok(found(one, method, 0))),
            many => Some(Err(ResolveError::Ambiguous {
                requested: requested.to_string(),
                candidates: many.iter().map(|s| s.to_string()).collect(),
            })),
        }
    };
    let matching = |pred: &dyn Fn(&Candidate) -> bool| -> Vec<&str> {
        candidates
            .iter()
            .filter(|c| pred(c))
            .map(|c| c.name.as_str())
            .collect()
    };

    let folded = fold(requested);
    let normal = normalize(requested);
    let stages: [(ResolutionMethod, Vec<&str>); 4] = [
        (ResolutionMethod::Exact, matching(&|c| c.name == requested)),
        (ResolutionMethod::CaseFold, matching(&|c| fold(&c.name) == folded)),
        (
            ResolutionMethod::Synonym,
            matching(&|c| c.synonyms.iter().any(|s| fold(s) == folded)),
        ),
        (
            ResolutionMethod::Normalized,
            matching(&|c| {
                std::iter::once(&c.name)
                    .chain(&c.synonyms)
                    .any(|s| normalize(s) == normal)
            }),
        ),
    ];
    for (method, names) in stages {
        if let Some(result) = unique(names, method) {
            return result;
        }
    }

    let distances: Vec<(&str, usize)> = candidates
        .iter()
        .map(|c| {
            let d = std::iter::once(&c.name)
                .chain(&c.synonyms)
                .map(|s| strsim::levenshtein(&folded, &fold(s)))
                .min()
                .unwrap_or(usize::MAX);
            (c.name.as_str(), d)
        })
        .collect();
    let best = distances.iter().map(|(_, d)| *d).min();
    match best {
        Some(d) if d <= MAX_EDIT_DISTANCE => {
            let names = distances
                .iter()
                .filter(|(_, x)| *x == d)
                .map(|(n, _)| *n)
                .collect();
            match unique(names, ResolutionMethod::EditDistance) {
                Some(Ok(mut r)) => {
                    r.distance = d;
                    Ok(r)
                }
                Some(Err(e)) => Err(e),
                None => unreachable!("minimum comes from a candidate"),
            }
        }
        _ => Err(ResolveError::Unresolved(requested.to_string())),
    }
}

/// Human-readable catalog description for prompts and the schema endpoint.
/// Only names, types, descriptions, synonyms and the domain context appear;
/// no row data is ever read.
pub fn render_schema_prompt(catalog: &Catalog) -> String {
    let mut out = String::new();
    if !catalog.domain_context.trim().is_empty() {
        let _ = writeln!(out, "Domain context:\n{}\n", catalog.domain_context.trim());
    }
    if catalog.is_empty() {
        out.push_str("No tables are available.\n");
        return out;
    }
    out.push_str("Tables:\n");
    for table in catalog.tables() {
        let _ = writeln!(out, "\ntable {}", table.name);
        for c in &table.columns {
            let _ = write!(
                out,
                "  - {}: {}{}",
                c.name,
                c.ty.kind,
                if c.ty.nullable { ", nullable" } else { ", not null" }
            );
            if !c.description.is_empty() {
                let _ = write!(out, ". {}", c.description);
            }
            if !c.synonyms.is_empty() {
                let _ = write!(out, " (also called: {})", c.synonyms.join(", "));
            }
            out.push('\n');
        }
    }
    out
}

/// Rewrites every table and column reference to its canonical name.
///
/// References are resolved against the columns actually in scope at each
/// operator, so names introduced by `rename` or aggregate outputs bind too.
/// Only non-exact resolutions are reported, each once. Any unresolved or
/// ambiguous reference rejects the whole expression.
pub fn bind_and_repair(expr: &RaExpr, catalog: &Catalog) -> Result<(RaExpr, Vec<Resolution>), BindError> {
    let mut binder = Binder {
        catalog,
        resolutions: Vec::new(),
    };
    let (bound, _) = binder.bind(expr)?;
    Ok((bound, binder.resolutions))
}

struct Binder<'a> {
    catalog: &'a Catalog,
    resolutions: Vec<Resolution>,
}

impl Binder<'_> {
    fn record(&mut self, r: Resolution) -> String {
        let name = r.resolved.clone();
        if r.method != ResolutionMethod::Exact && !self.resolutions.contains(&r) {
            self.resolutions.push(r);
        }
        name
    }

    fn resolve(&mut self, requested: &str, candidates: &[Candidate], kind: RefKind) -> Result<String, BindError> {
        match resolve_identifier(requested, candidates) {
            Ok(r) => Ok(self.record(r)),
            Err(ResolveError::Unresolved(identifier)) => Err(BindError::Unresolved { kind, identifier }),
            Err(ResolveError::Ambiguous {
                requested,
                candidates,
            }) => Err(BindError::Ambiguous {
                kind,
                identifier: requested,
                candidates,
            }),
        }
    }

    fn column(&mut self, requested: &str, scope: &[Candidate]) -> Result<String, BindError> {
        self.resolve(requested, scope, RefKind::Column)
    }

    fn bind(&mut self, e: &RaExpr) -> Result<(RaExpr, TableSchema), BindError> {
        let mut children = Vec::new();
        let mut schemas = Vec::new();
        for c in e.children() {
            let (bound, schema) = self.bind(c)?;
            children.push(bound);
            schemas.push(schema);
        }
        let scope = |i: usize| -> Vec<Candidate> { schemas[i].columns.iter().map(Candidate::from).collect() };
        let mut kids = children.into_iter();
        let mut next = || Box::new(kids.next().expect("arity"));
        let bound = match e {
            RaExpr::Scan(name) => {
                let tables: Vec<Candidate> = self.catalog.tables().map(|t| Candidate::new(t.name.clone())).collect();
                RaExpr::Scan(self.resolve(name, &tables, RefKind::Table)?)
            }
            RaExpr::Select { predicate, .. } => {
                let s = scope(0);
                RaExpr::Select {
                    predicate: predicate.try_map_columns(&mut |c| self.column(c, &s))?,
                    input: next(),
                }
            }
            RaExpr::Project { columns, .. } => {
                let s = scope(0);
                RaExpr::Project {
                    columns: columns.iter().map(|c| self.column(c, &s)).collect::<Result<_, _>>()?,
                    input: next(),
                }
            }
            RaExpr::Rename { pairs, .. } => {
                let s = scope(0);
                RaExpr::Rename {
                    pairs: pairs
                        .iter()
                        .map(|(old, new)| Ok((self.column(old, &s)?, new.clone())))
                        .collect::<Result<_, BindError>>()?,
                    input: next(),
                }
            }
            RaExpr::Binary { op, .. } => RaExpr::Binary {
                op: *op,
                left: next(),
                right: next(),
            },
            RaExpr::Join { predicate, .. } => {
                let mut s = scope(0);
                s.extend(scope(1));
                RaExpr::Join {
                    predicate: predicate.try_map_columns(&mut |c| self.column(c, &s))?,
                    left: next(),
                    right: next(),
                }
            }
            RaExpr::GroupBy { keys, aggregates, .. } => {
                let s = scope(0);
                let keys = keys.iter().map(|k| self.column(k, &s)).collect::<Result<_, _>>()?;
                let mut aggs = aggregates.clone();
                for a in &mut aggs {
                    if let Some(input) = &a.input {
                        a.input = Some(self.column(input, &s)?);
                    }
                }
                RaExpr::GroupBy {
                    keys,
                    aggregates: aggs,
                    input: next(),
                }
            }
            RaExpr::Distinct(_) => RaExpr::Distinct(next()),
            RaExpr::Sort { keys, .. } => {
                let s = scope(0);
                let mut keys = keys.clone();
                for k in &mut keys {
                    k.column = self.column(&k.column, &s)?;
                }
                RaExpr::Sort { keys, input: next() }
            }
            RaExpr::Limit { count, .. } => RaExpr::Limit {
                count: *count,
                input: next(),
            },
        };
        let schema = node_schema(&bound, &schemas, self.catalog)?;
        Ok((bound, schema))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;
    use crate::value::{ColumnKind, ColumnType};

    fn candidates() -> Vec<Candidate> {
        vec![
            Candidate::new("name").with_synonyms(["truck", "trucks"]),
            Candidate::new("test_result"),
        ]
    }

    fn method(requested: &str) -> Result<(String, ResolutionMethod, usize), ResolveError> {
        resolve_identifier(requested, &candidates()).map(|r| (r.resolved, r.method, r.distance))
    }

    #[test]
    fn resolution_order() {
        assert_eq!(method("name").unwrap(), ("name".into(), ResolutionMethod::Exact, 0));
        assert_eq!(method("NAME").unwrap(), ("name".into(), ResolutionMethod::CaseFold, 0));
        assert_eq!(method("Trucks").unwrap(), ("name".into(), ResolutionMethod::Synonym, 0));
        assert_eq!(method("Test Result").unwrap(), ("test_result".into(), ResolutionMethod::Normalized, 0));
        assert_eq!(method("test-result").unwrap().1, ResolutionMethod::Normalized);
        assert_eq!(method("TESTRESULT").unwrap().1, ResolutionMethod::Normalized);
        assert_eq!(method("tst_result").unwrap(), ("test_result".into(), ResolutionMethod::EditDistance, 1));
        assert_eq!(method("xyz"), Err(ResolveError::Unresolved("xyz".into())));
    }

    #[test]
    fn ties_are_ambiguous_in_any_order() {
        let mut c = vec![Candidate::new("cat"), Candidate::new("car"), Candidate::new("dog")];
        let a = resolve_identifier("cax", &c);
        c.reverse();
        assert_eq!(a, resolve_identifier("cax", &c));
        assert_eq!(
            a,
            Err(ResolveError::Ambiguous {
                requested: "cax".into(),
                candidates: vec!["car".into(), "cat".into()]
            })
        );
    }

    fn catalog() -> Catalog {
        let text = ColumnType::required(ColumnKind::Text);
        Catalog::new("Truck tests.")
            .with_table(TableSchema::new(
                "results",
                vec![
                    Column::new("name", text)
                        .with_description("Truck identifier")
                        .with_synonyms(["truck", "trucks"]),
                    Column::new("test_result", text),
                ],
            ))
            .unwrap()
    }

    #[test]
    fn binds_case_variants() {
        let (e, res) = bind_and_repair(&parse(r#"select[Test_Result == "NOK"](Results)"#).unwrap(), &catalog()).unwrap();
        assert_eq!(e.to_string(), r#"select[test_result == "NOK"](results)"#);
        assert_eq!(res.len(), 2);
        let (again, none) = bind_and_repair(&e, &catalog()).unwrap();
        assert_eq!(again, e);
        assert!(none.is_empty());
    }

    #[test]
    fn binds_derived_names_in_scope() {
        let src = "select[N > 1](groupby[truck; count(*) as n](results))";
        let (e, res) = bind_and_repair(&parse(src).unwrap(), &catalog()).unwrap();
        assert_eq!(e.to_string(), "select[n > 1](groupby[name; count(*) as n](results))");
        assert_eq!(res.len(), 2);
    }

    #[test]
    fn rejects_unknown_references() {
        let err = bind_and_repair(&parse("select[beauty == 1](results)").unwrap(), &catalog()).unwrap_err();
        assert_eq!(
            err,
            BindError::Unresolved {
                kind: RefKind::Column,
                identifier: "beauty".into()
            }
        );
        let err = bind_and_repair(&parse("cars").unwrap(), &catalog()).unwrap_err();
        assert!(matches!(err, BindError::Unresolved { kind: RefKind::Table, .. }));
    }

    #[test]
    fn renders_schema_without_data() {
        let text = render_schema_prompt(&catalog());
        assert!(text.contains("test_result: text"));
        assert!(text.contains("truck"));
        assert!(text.contains("Truck tests."));
        assert!(render_schema_prompt(&Catalog::new("")).contains("No tables"));
    }
}
