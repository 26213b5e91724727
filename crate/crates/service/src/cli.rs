use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use relq::eval::{load_benchmark, load_examples, run_benchmark, BenchmarkOptions, BenchmarkRun};
use relq::llm::{model_from_env, FixtureProvider, HttpProvider};
use relq::{
    format_ra, load_database, parse, run_query, run_ra, Catalog, Database, Provider, QueryOutcome, Relation,
    RunOptions, TableView,
};

use crate::http::{self, AppState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderMode {
    Live,
    Replay,
    Record,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Jsonl,
}

#[derive(Debug, Parser)]
#[command(name = "relq", version, about = "Ask questions of release-validation test data")]
pub struct Cli {
    /// Execute expressions exactly as written
    #[arg(long, global = true)]
    pub no_optimize: bool,
    /// Where model completions come from
    #[arg(long, global = true, value_enum, default_value = "replay")]
    pub provider: ProviderMode,
    /// Fixture directory for replay and record
    #[arg(long, global = true)]
    pub fixtures: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "text")]
    pub format: Format,
    /// Model name sent to the provider (default: $GATELENS_MODEL or gpt-4o)
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct DataArgs {
    /// Catalog JSON file
    #[arg(long)]
    pub catalog: PathBuf,
    /// Directory holding one CSV per table
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the canonical form of an RA expression
    Parse {
        /// File to read, or `-` for stdin
        input: String,
    },
    /// Run an RA expression directly
    Exec {
        #[arg(long)]
        ra: String,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Answer a question through the model
    Query {
        #[arg(long = "q")]
        query: String,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0)]
        shots: usize,
        /// Few-shot pool (JSON array of {query, ra})
        #[arg(long)]
        examples: Option<PathBuf>,
    },
    /// Score a benchmark
    Eval {
        #[arg(long)]
        bench: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        shots: Vec<usize>,
        #[arg(long)]
        examples: Option<PathBuf>,
    },
    /// Serve the HTTP API
    Serve {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = http::DEFAULT_PORT)]
        port: u16,
        #[arg(long)]
        examples: Option<PathBuf>,
        /// Allowed CORS origin; any origin when omitted
        #[arg(long)]
        cors_origin: Option<String>,
    },
}

/// A failure with its exit code.
struct Exit(i32, String);

fn fail(msg: impl std::fmt::Display) -> Exit {
    Exit(EXIT_FAILURE, msg.to_string())
}

fn usage(msg: impl std::fmt::Display) -> Exit {
    Exit(EXIT_USAGE, msg.to_string())
}

/// Runs the CLI. `argv[0]` is the program name.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(&cli, out, err) {
        Ok(code) => code,
        Err(Exit(code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Exit> {
    let optimize = !cli.no_optimize;
    match &cli.command {
        Command::Parse { input } => {
            let text = read_input(input)?;
            let expr = parse(&text).map_err(|e| fail(format!("{input}:{e}")))?;
            match cli.format {
                Format::Jsonl => emit(out, &serde_json::json!({ "ra": format_ra(&expr) }).to_string()),
                _ => emit(out, &format_ra(&expr)),
            }?;
            Ok(EXIT_OK)
        }
        Command::Exec { ra, data } => {
            let (catalog, db) = load_data(data)?;
            let outcome = run_ra(ra, &catalog, &db, optimize);
            print_outcome(cli.format, &outcome, out, err)?;
            Ok(if outcome.answer().is_some() { EXIT_OK } else { EXIT_FAILURE })
        }
        Command::Query {
            query,
            data,
            shots,
            examples,
        } => {
            let (catalog, db) = load_data(data)?;
            let pool = load_pool(examples.as_deref())?;
            if *shots > pool.len() {
                return Err(usage(format!("--shots {shots} but the example pool has {}", pool.len())));
            }
            let provider = make_provider(cli)?;
            let options = RunOptions {
                examples: pool[..*shots].to_vec(),
                optimize,
                model: model(cli),
            };
            let outcome = run_query(query, &catalog, &db, provider.as_ref(), &options);
            print_outcome(cli.format, &outcome, out, err)?;
            Ok(match outcome {
                QueryOutcome::Failed { .. } => EXIT_FAILURE,
                _ => EXIT_OK,
            })
        }
        Command::Eval {
            bench,
            data,
            shots,
            examples,
        } => {
            let (catalog, db) = load_data(data)?;
            let records = load_benchmark(bench).map_err(fail)?;
            let provider = make_provider(cli)?;
            let options = BenchmarkOptions {
                shots: shots.clone(),
                example_pool: load_pool(examples.as_deref())?,
                optimize,
                model: Some(model(cli)),
            };
            let runs = run_benchmark(&records, &catalog, &db, provider.as_ref(), &options).map_err(fail)?;
            print_runs(cli.format, &runs, out)?;
            let failed: usize = runs.iter().map(BenchmarkRun::failed).sum();
            Ok(if failed > 0 && cli.provider == ProviderMode::Replay {
                EXIT_FAILURE
            } else {
                EXIT_OK
            })
        }
        Command::Serve {
            data,
            port,
            examples,
            cors_origin,
        } => {
            let (catalog, database) = load_data(data)?;
            let origin = cors_origin
                .as_deref()
                .map(|o| o.parse().map_err(|_| usage(format!("bad --cors-origin `{o}`"))))
                .transpose()?;
            let state = Arc::new(AppState {
                catalog,
                database,
                provider: make_provider(cli)?,
                example_pool: load_pool(examples.as_deref())?,
                optimize,
                model: model(cli),
            });
            let rt = tokio::runtime::Runtime::new().map_err(fail)?;
            emit(out, &format!("listening on 0.0.0.0:{port}"))?;
            rt.block_on(http::serve(state, *port, origin)).map_err(fail)?;
            Ok(EXIT_OK)
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Exit> {
    writeln!(out, "{text}").map_err(|e| fail(format!("cannot write output: {e}")))
}

fn read_input(input: &str) -> Result<String, Exit> {
    let mut text = String::new();
    if input == "-" {
        std::io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| fail(format!("cannot read stdin: {e}")))?;
    } else {
        text = std::fs::read_to_string(input).map_err(|e| fail(format!("cannot read {input}: {e}")))?;
    }
    Ok(text)
}

fn load_data(args: &DataArgs) -> Result<(Catalog, Database), Exit> {
    let catalog = Catalog::load(&args.catalog).map_err(|e| fail(format!("{}: {e}", args.catalog.display())))?;
    let db = load_database(&args.data, &catalog).map_err(|e| fail(format!("{}: {e}", args.data.display())))?;
    Ok((catalog, db))
}

fn load_pool(path: Option<&Path>) -> Result<Vec<relq::FewShotExample>, Exit> {
    match path {
        Some(p) => load_examples(p).map_err(fail),
        None => Ok(Vec::new()),
    }
}

fn model(cli: &Cli) -> String {
    cli.model.clone().unwrap_or_else(model_from_env)
}

fn make_provider(cli: &Cli) -> Result<Box<dyn Provider>, Exit> {
    let fixtures = || {
        cli.fixtures
            .clone()
            .ok_or_else(|| usage("--fixtures is required for the replay and record providers"))
    };
    Ok(match cli.provider {
        ProviderMode::Replay => Box::new(FixtureProvider::replay(fixtures()?)),
        ProviderMode::Record => {
            let dir = fixtures()?;
            let live = HttpProvider::from_env().map_err(fail)?;
            Box::new(FixtureProvider::record(dir, Box::new(live)))
        }
        ProviderMode::Live => Box::new(HttpProvider::from_env().map_err(fail)?),
    })
}

/// Aligned text table with a row count footer.
pub fn render_table(rel: &Relation) -> String {
    let view = TableView::from(rel);
    let cells: Vec<Vec<String>> = view
        .rows
        .iter()
        .map(|r| r.iter().map(|c| c.clone().unwrap_or_else(|| "null".into())).collect())
        .collect();
    let mut widths: Vec<usize> = view.columns.iter().map(|c| c.chars().count()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |items: &[String]| -> String {
        items
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_string()
    };
    let mut out = line(&view.columns);
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    out.push('\n');
    for row in &cells {
        out.push_str(&line(row));
        out.push('\n');
    }
    out.push_str(&format!("({} row{})", cells.len(), if cells.len() == 1 { "" } else { "s" }));
    out
}

/// Answers go to `out`; rejections and failures go to `err` unless the
/// format is jsonl, where the serialized outcome always goes to `out`.
fn print_outcome(format: Format, outcome: &QueryOutcome, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Exit> {
    if format == Format::Jsonl {
        return emit(out, &serde_json::to_string(outcome).expect("outcomes serialize"));
    }
    match outcome {
        QueryOutcome::Answered { answer, .. } => {
            if format == Format::Csv {
                let csv = answer.result.to_csv();
                return out
                    .write_all(csv.as_bytes())
                    .map_err(|e| fail(format!("cannot write output: {e}")));
            }
            emit(out, &format!("ra: {}", answer.bound_ra_text))?;
            if answer.optimized_ra_text != answer.bound_ra_text {
                emit(out, &format!("optimized: {}", answer.optimized_ra_text))?;
            }
            for r in &answer.resolutions {
                emit(out, &format!("resolved: {r}"))?;
            }
            emit(out, &render_table(&answer.result))
        }
        QueryOutcome::Rejected { reason, stage, .. } => {
            emit(err, &format!("rejected at {}: {reason}", stage.as_str()))
        }
        QueryOutcome::Failed { error, stage, .. } => {
            emit(err, &format!("failed at {}: {error}", stage.as_str()))
        }
    }
}

fn print_runs(format: Format, runs: &[BenchmarkRun], out: &mut dyn Write) -> Result<(), Exit> {
    match format {
        Format::Text => {
            for run in runs {
                emit(out, &format!("shots={}", run.shots))?;
                emit(out, &run.metrics.to_string())?;
            }
            Ok(())
        }
        Format::Csv => {
            let mut text = String::from("shots,slice,tp,fp,fn,precision,recall,f1\n");
            for run in runs {
                for line in run.metrics.to_csv().lines().skip(1) {
                    text.push_str(&format!("{},{line}\n", run.shots));
                }
            }
            out.write_all(text.as_bytes())
                .map_err(|e| fail(format!("cannot write output: {e}")))
        }
        Format::Jsonl => {
            for run in runs {
                let line = serde_json::json!({
                    "shots": run.shots,
                    "metrics": run.metrics.rows,
                    "failed": run.failed(),
                });
                emit(out, &line.to_string())?;
            }
            Ok(())
        }
    }
}
