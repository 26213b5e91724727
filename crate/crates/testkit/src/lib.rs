//! Test support for the `relq` workspace: a naive reference evaluator,
//! random generators for catalogs, databases and expressions, and the
//! property checks built from them.

pub mod checks;
pub mod gen;
pub mod oracle;

pub use gen::{random_ast, random_case, random_database, Case};
pub use oracle::reference_eval;
