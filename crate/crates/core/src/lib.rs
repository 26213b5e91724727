//! Release analytics over relational algebra.
//!
//! Natural-language questions are translated by a language model into
//! relational algebra text; everything after that text is deterministic:
//! parsing, identifier repair against the catalog, heuristic optimization,
//! compilation into a physical plan and execution over CSV-backed tables.
//! The [`eval`] module scores whole benchmark runs with precision, recall
//! and F1.

pub mod ast;
pub mod eval;
pub mod executor;
pub mod kb;
pub mod llm;
pub mod optimizer;
pub mod parser;
pub mod pipeline;
pub mod relation;
pub mod schema;
pub mod typecheck;
pub mod value;

pub use ast::{format_ra, AggFn, Aggregate, BinaryOp, CmpOp, Predicate, RaExpr, SortKey, Term};
pub use eval::{
    compute_metrics, f1, load_benchmark, run_benchmark, score_outcome, BenchmarkOptions, BenchmarkRun, EvalError,
    EvalRecord, Expected, MetricsReport, Score,
};
pub use executor::{compile_plan, execute, ExecError, Plan};
pub use kb::{bind_and_repair, render_schema_prompt, resolve_identifier, BindError, Resolution, ResolutionMethod};
pub use llm::{
    ChatRequest, CountingProvider, FewShotExample, FixtureProvider, HttpProvider, InterpreterOutput, LlmError,
    Provider,
};
pub use optimizer::optimize;
pub use parser::{parse, ParseError};
pub use pipeline::{run_query, run_ra, Answer, FailureKind, QueryOutcome, RunOptions, Stage, TableView};
pub use relation::{canonical_eq, load_csv, load_database, CsvError, Database, Relation};
pub use schema::{Catalog, CatalogError, Column, TableSchema};
pub use typecheck::{infer_schema, SchemaError};
pub use value::{ColumnKind, ColumnType, Value};
