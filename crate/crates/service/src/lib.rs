//! Command-line interface and HTTP API for the `relq` engine.
//!
//! Both are thin adapters: every response is built from a
//! [`relq::QueryOutcome`] or a [`relq::MetricsReport`].

pub mod cli;
pub mod http;

pub use cli::{run, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};
pub use http::{router, AppState};
