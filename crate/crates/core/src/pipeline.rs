//! End-to-end query flow: question → interpreter → parse → bind/repair →
//! optimize → compile → execute. The model is called at most once per query
//! and every failure folds into a [`QueryOutcome`].

use std::time::Instant;

use serde::ser::{Serialize, SerializeMap, Serializer};

use crate::ast::{format_ra, RaExpr};
use crate::executor::{compile_plan, execute, ExecError};
use crate::kb::{bind_and_repair, BindError, Resolution};
use crate::llm::{
    build_interpreter_prompt, complete, parse_interpreter_output, FewShotExample, InterpreterOutput,
    LlmError, Provider, DEFAULT_MODEL,
};
use crate::optimizer::optimize;
use crate::parser::parse;
use crate::relation::{Database, Relation};
use crate::schema::Catalog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Interpreter,
    Parse,
    Binder,
    Optimize,
    Compile,
    Execute,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Interpreter => "interpreter",
            Stage::Parse => "parse",
            Stage::Binder => "binder",
            Stage::Optimize => "optimize",
            Stage::Compile => "compile",
            Stage::Execute => "execute",
        }
    }
}

impl Serialize for Stage {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// Wall-clock time per completed stage, in execution order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timings(pub Vec<(Stage, u64)>);

impl Timings {
    fn time<T>(&mut self, stage: Stage, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.push((stage, start.elapsed().as_micros() as u64));
        out
    }

    pub fn micros(&self, stage: Stage) -> Option<u64> {
        self.0.iter().find(|(s, _)| *s == stage).map(|(_, t)| *t)
    }

    pub fn total_micros(&self) -> u64 {
        self.0.iter().map(|(_, t)| t).sum()
    }
}

impl Serialize for Timings {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (stage, micros) in &self.0 {
            map.serialize_entry(stage.as_str(), micros)?;
        }
        map.end()
    }
}

/// Failure classification, kept so callers can react without parsing messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FailureKind {
    FixtureMiss { key: String },
    Timeout,
    Transport,
    ProviderRejection,
    MalformedResponse,
    Syntax { line: usize, column: usize },
    Schema,
    Execution,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    /// The expression as the model (or expert) wrote it.
    pub ra_text: String,
    /// Canonical text after identifier repair.
    pub bound_ra_text: String,
    /// Canonical text of the expression that was executed.
    pub optimized_ra_text: String,
    pub resolutions: Vec<Resolution>,
    pub result: Relation,
    /// Whether row order is part of the answer (top-level sort).
    pub ordered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryOutcome {
    Answered { answer: Box<Answer>, timings: Timings },
    Rejected { reason: String, stage: Stage, timings: Timings },
    Failed { error: String, kind: FailureKind, stage: Stage, timings: Timings },
}

impl QueryOutcome {
    pub fn verdict(&self) -> &'static str {
        match self {
            QueryOutcome::Answered { .. } => "answered",
            QueryOutcome::Rejected { .. } => "rejected",
            QueryOutcome::Failed { .. } => "failed",
        }
    }

    pub fn answer(&self) -> Option<&Answer> {
        match self {
            QueryOutcome::Answered { answer, .. } => Some(answer),
            _ => None,
        }
    }

    pub fn timings(&self) -> &Timings {
        match self {
            QueryOutcome::Answered { timings, .. }
            | QueryOutcome::Rejected { timings, .. }
            | QueryOutcome::Failed { timings, .. } => timings,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            QueryOutcome::Answered { .. } => None,
            QueryOutcome::Rejected { stage, .. } | QueryOutcome::Failed { stage, .. } => Some(*stage),
        }
    }
}

/// JSON shape shared by the CLI and the HTTP API. Cells are strings (null
/// stays null) with a parallel `types` array.
impl Serialize for QueryOutcome {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(None)?;
        map.serialize_entry("verdict", self.verdict())?;
        match self {
            QueryOutcome::Answered { answer, .. } => {
                map.serialize_entry("ra_text", &answer.ra_text)?;
                map.serialize_entry("bound_ra_text", &answer.bound_ra_text)?;
                map.serialize_entry("optimized_ra_text", &answer.optimized_ra_text)?;
                map.serialize_entry("resolutions", &answer.resolutions)?;
                let table = TableView::from(&answer.result);
                map.serialize_entry("columns", &table.columns)?;
                map.serialize_entry("types", &table.types)?;
                map.serialize_entry("rows", &table.rows)?;
                map.serialize_entry("ordered", &answer.ordered)?;
            }
            QueryOutcome::Rejected { reason, stage, .. } => {
                map.serialize_entry("stage", stage)?;
                map.serialize_entry("reason", reason)?;
            }
            QueryOutcome::Failed { error, kind, stage, .. } => {
                map.serialize_entry("stage", stage)?;
                map.serialize_entry("error", error)?;
                if let FailureKind::Syntax { line, column } = kind {
                    map.serialize_entry("line", line)?;
                    map.serialize_entry("column", column)?;
                }
            }
        }
        map.serialize_entry("timings", self.timings())?;
        map.end()
    }
}

/// Column names, kinds and string cells of a relation.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TableView {
    pub columns: Vec<String>,
    pub types: Vec<String>,
    pub rows: Vec<Vec<Option<String>>>,
}

impl From<&Relation> for TableView {
    fn from(rel: &Relation) -> Self {
        let schema = rel.schema();
        Self {
            columns: schema.columns.iter().map(|c| c.name.clone()).collect(),
            types: schema.columns.iter().map(|c| c.ty.kind.to_string()).collect(),
            rows: rel
                .rows()
                .iter()
                .map(|r| r.iter().map(|v| (!v.is_null()).then(|| v.render())).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub examples: Vec<FewShotExample>,
    pub optimize: bool,
    pub model: String,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            examples: Vec::new(),
            optimize: true,
            model: DEFAULT_MODEL.to_string(),
        }
    }
}

fn llm_failure(e: &LlmError) -> FailureKind {
    match e {
        LlmError::FixtureMiss { key } => FailureKind::FixtureMiss { key: key.clone() },
        LlmError::Timeout => FailureKind::Timeout,
        LlmError::Transport(_) => FailureKind::Transport,
        LlmError::ProviderRejection(_) => FailureKind::ProviderRejection,
        LlmError::MalformedResponse(_) => FailureKind::MalformedResponse,
        LlmError::InvalidRequest(_) | LlmError::Store(_) => FailureKind::Other,
    }
}

/// Answers a natural-language question with a single model call.
pub fn run_query(
    query: &str,
    catalog: &Catalog,
    database: &Database,
    provider: &dyn Provider,
    options: &RunOptions,
) -> QueryOutcome {
    let mut timings = Timings::default();
    let request = build_interpreter_prompt(catalog, query, &options.examples).with_model(options.model.clone());
    let reply = timings.time(Stage::Interpreter, || {
        complete(&request, provider).and_then(|raw| parse_interpreter_output(&raw))
    });
    match reply {
        Ok(InterpreterOutput::RaText(ra)) => run_ra_timed(&ra, catalog, database, options.optimize, timings),
        Ok(InterpreterOutput::OutOfScope(reason)) => QueryOutcome::Rejected {
            reason,
            stage: Stage::Interpreter,
            timings,
        },
        Err(e) => QueryOutcome::Failed {
            error: e.to_string(),
            kind: llm_failure(&e),
            stage: Stage::Interpreter,
            timings,
        },
    }
}

/// Runs RA text directly (expert mode); the model is not involved.
pub fn run_ra(ra_text: &str, catalog: &Catalog, database: &Database, optimize: bool) -> QueryOutcome {
    run_ra_timed(ra_text, catalog, database, optimize, Timings::default())
}

fn run_ra_timed(
    ra_text: &str,
    catalog: &Catalog,
    database: &Database,
    optimize_on: bool,
    mut timings: Timings,
) -> QueryOutcome {
    let failed = |error: String, kind, stage, timings| QueryOutcome::Failed {
        error,
        kind,
        stage,
        timings,
    };
    let parsed = match timings.time(Stage::Parse, || parse(ra_text)) {
        Ok(e) => e,
        Err(e) => {
            let kind = FailureKind::Syntax {
                line: e.line,
                column: e.column,
            };
            return failed(e.to_string(), kind, Stage::Parse, timings);
        }
    };
    let (bound, resolutions) = match timings.time(Stage::Binder, || bind_and_repair(&parsed, catalog)) {
        Ok(b) => b,
        Err(BindError::Schema(e)) => return failed(e.to_string(), FailureKind::Schema, Stage::Binder, timings),
        Err(e) => {
            return QueryOutcome::Rejected {
                reason: e.to_string(),
                stage: Stage::Binder,
                timings,
            }
        }
    };
    let executed: RaExpr = if optimize_on {
        timings.time(Stage::Optimize, || optimize(&bound, catalog))
    } else {
        bound.clone()
    };
    let plan = match timings.time(Stage::Compile, || compile_plan(&executed, catalog)) {
        Ok(p) => p,
        Err(e) => return failed(e.to_string(), FailureKind::Schema, Stage::Compile, timings),
    };
    let result = match timings.time(Stage::Execute, || execute(&plan, database)) {
        Ok(r) => r,
        Err(e) => {
            let kind = match e {
                ExecError::MissingTable(_) | ExecError::SchemaMismatch { .. } => FailureKind::Schema,
                _ => FailureKind::Execution,
            };
            return failed(e.to_string(), kind, Stage::Execute, timings);
        }
    };
    QueryOutcome::Answered {
        answer: Box::new(Answer {
            ra_text: ra_text.to_string(),
            bound_ra_text: format_ra(&bound),
            optimized_ra_text: format_ra(&executed),
            resolutions,
            result,
            ordered: bound.is_ordered(),
        }),
        timings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatRequest, CountingProvider};
    use crate::schema::{Column, TableSchema};
    use crate::value::{ColumnKind, ColumnType, Value};

    struct Canned(&'static str);

    impl Provider for Canned {
        fn complete_once(&self, _: &ChatRequest) -> Result<String, LlmError> {
            Ok(self.0.to_string())
        }
    }

    fn setup() -> (Catalog, Database) {
        let text = ColumnType::required(ColumnKind::Text);
        let schema = TableSchema::new(
            "results",
            vec![
                Column::new("name", text).with_synonyms(["truck"]),
                Column::new("test_result", text),
            ],
        );
        let cat = Catalog::new("").with_table(schema.clone()).unwrap();
        let rows = vec![
            vec![Value::text("truck1"), Value::text("OK")],
            vec![Value::text("truck2"), Value::text("NOK")],
        ];
        let mut db = Database::new();
        db.insert("results".into(), Relation::new(schema, rows).unwrap());
        (cat, db)
    }

    #[test]
    fn answers_with_one_call() {
        let (cat, db) = setup();
        let p = CountingProvider::new(Canned("```ra\nproject[Truck](select[test_result == \"NOK\"](results))\n```"));
        let out = run_query("Find some trucks for cases that are NOK", &cat, &db, &p, &RunOptions::default());
        assert_eq!(p.calls(), 1);
        let a = out.answer().unwrap();
        assert_eq!(a.result.rows(), [vec![Value::text("truck2")]]);
        assert_eq!(a.resolutions.len(), 1);
        let json = serde_json::to_value(&out).unwrap();
        assert_eq!(json["verdict"], "answered");
        assert_eq!(json["rows"][0][0], "truck2");
        assert_eq!(json["types"][0], "text");
    }

    #[test]
    fn rejections_and_failures() {
        let (cat, db) = setup();
        let opts = RunOptions::default();
        let out = run_query("q", &cat, &db, &Canned("OUT_OF_SCOPE: subjective"), &opts);
        assert_eq!(out.stage(), Some(Stage::Interpreter));
        assert_eq!(out.verdict(), "rejected");
        let out = run_query("q", &cat, &db, &Canned("```ra\nselect[beauty == 1](results)\n```"), &opts);
        assert_eq!((out.verdict(), out.stage()), ("rejected", Some(Stage::Binder)));
        let out = run_query("q", &cat, &db, &Canned("prose"), &opts);
        assert_eq!((out.verdict(), out.stage()), ("failed", Some(Stage::Interpreter)));
        let out = run_ra("select[(results)", &cat, &db, true);
        assert!(matches!(out, QueryOutcome::Failed { kind: FailureKind::Syntax { line: 1, .. }, .. }));
    }
}
