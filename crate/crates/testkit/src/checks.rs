//! Whole-property checks shared by the per-crate test suites and the
//! acceptance target. Each returns a one-line summary on success and the
//! first counterexample on failure.

use std::collections::BTreeMap;
use std::fs;
use std::panic;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use relq::eval::{run_benchmark, BenchAssets, BenchmarkOptions, Expected, Score};
use relq::llm::{build_interpreter_prompt, fixture_path, ChatRequest, CountingProvider, FixtureProvider, LlmError, Provider};
use relq::parser::parse_bytes;
use relq::{
    canonical_eq, compile_plan, execute, format_ra, infer_schema, optimize, parse, Catalog, Column, ColumnKind,
    ColumnType, Database, RaExpr, Relation, TableSchema, Value,
};

use crate::gen::{operators, rng, OPERATORS};
use crate::{random_ast, random_case, reference_eval};

pub type CheckResult = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Compiled execution equals the reference evaluator on `cases` random
/// (expression, database) pairs, with every operator generated.
pub fn executor_matches_oracle(cases: u64) -> CheckResult {
    let start = Instant::now();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for seed in 0..cases {
        let case = random_case(seed);
        for op in operators(&case.expr) {
            *seen.entry(op).or_default() += 1;
        }
        let plan = compile_plan(&case.expr, &case.catalog).map_err(|e| format!("seed {seed}: {e}\n{}", case.expr))?;
        let got = execute(&plan, &case.database);
        let want = reference_eval(&case.expr, &case.catalog, &case.database);
        match (got, want) {
            (Ok(got), Ok(want)) => {
                // the executor's output must satisfy its own schema
                Relation::new(got.schema().clone(), got.rows().to_vec())
                    .map_err(|e| format!("seed {seed}: ill-typed output: {e}\n{}", case.expr))?;
                ensure(canonical_eq(&got, &want, case.expr.is_ordered()), || {
                    format!(
                        "seed {seed}: {}\nengine:\n{}\nreference:\n{}",
                        case.expr,
                        got.to_csv(),
                        want.to_csv()
                    )
                })?;
            }
            (Err(_), Err(_)) => {}
            (got, want) => return Err(format!("seed {seed}: {}\nengine {got:?}\nreference {want:?}", case.expr)),
        }
    }
    for op in OPERATORS {
        ensure(seen.get(op).copied().unwrap_or(0) > 0, || format!("operator {op} never generated"))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!("{cases} cases, {} operators covered, {secs:.2}s", OPERATORS.len()))
}

fn run_plan(expr: &RaExpr, catalog: &Catalog, db: &Database) -> (Result<Relation, relq::ExecError>, Vec<u64>) {
    let plan = compile_plan(expr, catalog).expect("well-typed expression compiles");
    let out = execute(&plan, db);
    (out, plan.join_rows_in())
}

/// `eval(optimize(e)) == eval(e)` with the same schema and row order, and no
/// product or join node reads more rows than before.
pub fn optimizer_is_sound(cases: u64) -> CheckResult {
    let mut changed = 0;
    for seed in 0..cases {
        let case = random_case(seed);
        let opt = optimize(&case.expr, &case.catalog);
        if opt != case.expr {
            changed += 1;
        }
        let ctx = || format!("seed {seed}: {} => {opt}", case.expr);
        ensure(
            infer_schema(&opt, &case.catalog).ok() == infer_schema(&case.expr, &case.catalog).ok(),
            || format!("{}: schema changed", ctx()),
        )?;
        let (before, work_before) = run_plan(&case.expr, &case.catalog, &case.database);
        let (after, work_after) = run_plan(&opt, &case.catalog, &case.database);
        match (before, after) {
            (Ok(b), Ok(a)) => {
                // operators are order-deterministic, so even unsorted output keeps its order
                ensure(canonical_eq(&b, &a, true), || {
                    format!("{}\nbefore:\n{}\nafter:\n{}", ctx(), b.to_csv(), a.to_csv())
                })?;
            }
            (Err(_), Err(_)) => {}
            (b, a) => return Err(format!("{}\n{b:?}\n{a:?}", ctx())),
        }
        ensure(work_before.len() == work_after.len(), || format!("{}: join count changed", ctx()))?;
        for (b, a) in work_before.iter().zip(&work_after) {
            ensure(a <= b, || format!("{}: join input grew {b} -> {a}", ctx()))?;
        }
    }
    ensure(changed > cases / 10, || format!("only {changed} expressions were rewritten"))?;
    Ok(format!("{cases} expressions, {changed} rewritten"))
}

pub fn optimizer_is_idempotent(cases: u64) -> CheckResult {
    for seed in 0..cases {
        let case = random_case(seed);
        let once = optimize(&case.expr, &case.catalog);
        let twice = optimize(&once, &case.catalog);
        ensure(once == twice, || format!("seed {seed}: {} => {once} => {twice}", case.expr))?;
    }
    Ok(format!("{cases} expressions"))
}

/// Two integer tables `a(a1, a2)` and `b(b1, b2)`.
pub fn two_table_catalog() -> Catalog {
    let int = ColumnType::required(ColumnKind::Int);
    Catalog::new("")
        .with_table(TableSchema::new("a", vec![Column::new("a1", int), Column::new("a2", int)]))
        .expect("valid table")
        .with_table(TableSchema::new("b", vec![Column::new("b1", int), Column::new("b2", int)]))
        .expect("valid table")
}

/// Databases for [`two_table_catalog`] whose tables hold three rows with
/// 0/1 cells: all 64 contents of `a` crossed with every third content of `b`.
pub fn small_databases(catalog: &Catalog) -> impl Iterator<Item = Database> + '_ {
    let rows: Vec<Vec<Value>> = (0..4).map(|i| vec![Value::Int(i & 1), Value::Int(i >> 1)]).collect();
    let tables: Vec<Vec<Vec<Value>>> = (0..64)
        .map(|m: usize| (0..3).map(|k| rows[(m >> (2 * k)) & 3].clone()).collect())
        .collect();
    let tables2 = tables.clone();
    tables.into_iter().flat_map(move |ta| {
        let tables2 = tables2.clone();
        tables2.into_iter().step_by(3).map(move |tb| {
            let mut db = Database::new();
            let schema = |t: &str| catalog.table(t).expect("table exists").clone();
            db.insert("a".into(), Relation::new(schema("a"), ta.clone()).expect("valid rows"));
            db.insert("b".into(), Relation::new(schema("b"), tb).expect("valid rows"));
            db
        })
    })
}

/// Selective filters over products and joins.
pub const PUSHDOWN_CORPUS: [&str; 8] = [
    "select[a1 == 1](times(a, b))",
    "select[b2 == 0](times(a, b))",
    "select[a1 == 1 and b1 == 0](times(a, b))",
    "select[a1 == b1 and a2 == 1](times(a, b))",
    "select[a1 == b1](times(a, b))",
    "project[a1](select[a2 == 1 and a1 == b1](times(a, b)))",
    "select[a1 == 0](join[a2 == b2](a, b))",
    "select[a1 == 0](union(project[a1](a), project[b1](b)))",
];

/// On the corpus, every product/join node reads no more rows after
/// optimization, and some read strictly fewer.
pub fn pushdown_reduces_join_input() -> CheckResult {
    let catalog = two_table_catalog();
    let mut strictly_less = 0;
    let mut compared = 0;
    for src in PUSHDOWN_CORPUS {
        let expr = parse(src).map_err(|e| format!("{src}: {e}"))?;
        let opt = optimize(&expr, &catalog);
        for db in small_databases(&catalog).step_by(7) {
            let (before, wb) = run_plan(&expr, &catalog, &db);
            let (after, wa) = run_plan(&opt, &catalog, &db);
            let (before, after) = (before.map_err(|e| e.to_string())?, after.map_err(|e| e.to_string())?);
            ensure(canonical_eq(&before, &after, false), || format!("{src}: results differ"))?;
            ensure(wb.len() == wa.len(), || format!("{src}: join count changed"))?;
            for (b, a) in wb.iter().zip(&wa) {
                ensure(a <= b, || format!("{src}: {b} -> {a}"))?;
                compared += 1;
                if a < b {
                    strictly_less += 1;
                }
            }
        }
    }
    ensure(strictly_less > 0, || "pushdown never reduced any join input".into())?;
    Ok(format!("{compared} node comparisons, {strictly_less} strictly smaller"))
}

pub fn parser_round_trips(cases: usize) -> CheckResult {
    let mut rng = rng(7);
    for i in 0..cases {
        let ast = random_ast(&mut rng, 5);
        let text = format_ra(&ast);
        let back = parse(&text).map_err(|e| format!("case {i}: {e}\n{text}"))?;
        ensure(back == ast, || format!("case {i}: {text}"))?;
        ensure(format_ra(&back) == text, || format!("case {i}: reprint differs: {text}"))?;
    }
    Ok(format!("{cases} generated trees"))
}

fn to_greek(text: &str) -> String {
    text.replace("select[", "σ[")
        .replace("project[", "π[")
        .replace("rename[", "ρ[")
        .replace("groupby[", "γ[")
}

pub fn greek_matches_ascii(cases: usize) -> CheckResult {
    let mut rng = rng(3);
    let mut greek_seen = 0;
    for _ in 0..cases {
        let ast = random_ast(&mut rng, 4);
        let ascii = format_ra(&ast);
        let greek = to_greek(&ascii);
        if greek != ascii {
            greek_seen += 1;
        }
        let back = parse(&greek).map_err(|e| format!("{greek}: {e}"))?;
        ensure(back == ast, || format!("{greek} parsed differently"))?;
    }
    ensure(greek_seen > cases / 5, || format!("only {greek_seen} inputs used greek operators"))?;
    Ok(format!("{cases} trees, {greek_seen} with greek operators"))
}

/// Random byte strings, random token soups and mutated valid inputs.
fn fuzz_input(rng: &mut impl Rng, seeds: &[String]) -> Vec<u8> {
    const TOKENS: &[&str] = &[
        "select", "σ", "project", "π", "rename", "ρ", "groupby", "γ", "union", "minus", "intersect", "times",
        "divide", "join", "distinct", "sort", "limit", "and", "or", "not", "in", "contains", "lower", "count",
        "sum", "avg", "min", "max", "as", "asc", "desc", "null", "true", "false", "[", "]", "(", ")", ",", ";",
        "->", "==", "!=", "<", "<=", ">", ">=", "*", "\"", "\\", "`", "x", "results", "1", "-2", "3.5", "1e9",
        "\"a\"", " ", "\n", "\t", "é", "-", "=", "!",
    ];
    match rng.gen_range(0..3) {
        0 => (0..rng.gen_range(0..64)).map(|_| rng.gen()).collect(),
        1 => (0..rng.gen_range(0..40))
            .flat_map(|_| TOKENS[rng.gen_range(0..TOKENS.len())].bytes())
            .collect(),
        _ => {
            let mut bytes = seeds[rng.gen_range(0..seeds.len())].clone().into_bytes();
            for _ in 0..rng.gen_range(1..4) {
                if bytes.is_empty() {
                    break;
                }
                let at = rng.gen_range(0..bytes.len());
                match rng.gen_range(0..3) {
                    0 => {
                        bytes.remove(at);
                    }
                    1 => bytes.insert(at, rng.gen()),
                    _ => bytes.truncate(at),
                }
            }
            bytes
        }
    }
}

/// The parser never panics, and every error position lies inside the input.
pub fn parser_survives_fuzzing(cases: usize) -> CheckResult {
    let mut rng = rng(99);
    let seeds: Vec<String> = (0..50).map(|_| format_ra(&random_ast(&mut rng, 4))).collect();
    let mut errors = 0;
    for i in 0..cases {
        let input = fuzz_input(&mut rng, &seeds);
        let result = panic::catch_unwind(|| parse_bytes(&input))
            .map_err(|_| format!("case {i}: parser panicked on {:?}", String::from_utf8_lossy(&input)))?;
        if let Err(e) = result {
            errors += 1;
            let lines = input.iter().filter(|b| **b == b'\n').count() + 1;
            ensure(e.line >= 1 && e.column >= 1 && e.line <= lines, || format!("case {i}: {e:?}"))?;
        }
    }
    ensure(errors > cases / 2, || format!("only {errors} inputs were rejected"))?;
    Ok(format!("{cases} inputs, {errors} rejected, no panics"))
}

fn bench_options(shots: Vec<usize>, assets: &BenchAssets) -> BenchmarkOptions {
    BenchmarkOptions {
        shots,
        example_pool: assets.examples.clone(),
        optimize: true,
        model: None,
    }
}

/// Replaying the bundled gold fixtures scores F1 = 100 at every shot count,
/// with exactly one model call per record per pass.
pub fn bundled_benchmark_is_perfect(assets: &BenchAssets, shots: &[usize]) -> CheckResult {
    let provider = CountingProvider::new(FixtureProvider::replay(&assets.fixtures_dir));
    let runs = run_benchmark(
        &assets.records,
        &assets.catalog,
        &assets.database,
        &provider,
        &bench_options(shots.to_vec(), assets),
    )
    .map_err(|e| e.to_string())?;
    for run in &runs {
        let overall = run.metrics.overall();
        ensure(overall.f1 == Some(100.0), || format!("shots={}:\n{}", run.shots, run.metrics))?;
    }
    let expected_calls = shots.len() * assets.records.len();
    ensure(provider.calls() == expected_calls, || {
        format!("{} provider calls for {expected_calls} queries", provider.calls())
    })?;
    Ok(format!(
        "{} records x shots {shots:?}: F1 100.00, {} provider calls",
        assets.records.len(),
        provider.calls()
    ))
}

/// Overwrites one answer-mode fixture with prose in a copy of the fixture
/// directory; exactly that record must become a false negative.
pub fn prose_fixture_flips_one_record(assets: &BenchAssets, victim: &str) -> CheckResult {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    for entry in fs::read_dir(&assets.fixtures_dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        fs::copy(entry.path(), tmp.path().join(entry.file_name())).map_err(|e| e.to_string())?;
    }
    let rec = assets
        .records
        .iter()
        .find(|r| r.id == victim)
        .ok_or_else(|| format!("no record {victim}"))?;
    ensure(matches!(rec.expected, Expected::Table { .. }), || format!("{victim} is not answer-mode"))?;
    let req = build_interpreter_prompt(&assets.catalog, &rec.query, &[]);
    fs::write(fixture_path(tmp.path(), &req), "Most of the trucks failed, as far as I can tell.\n")
        .map_err(|e| e.to_string())?;
    let provider = FixtureProvider::replay(tmp.path());
    let run = run_benchmark(
        &assets.records,
        &assets.catalog,
        &assets.database,
        &provider,
        &bench_options(vec![0], assets),
    )
    .map_err(|e| e.to_string())?
    .remove(0);
    let flipped: Vec<(&str, Score)> = run
        .records
        .iter()
        .filter(|r| r.score != Score::TP)
        .map(|r| (r.id.as_str(), r.score))
        .collect();
    ensure(flipped == [(victim, Score::FN)], || format!("non-TP records: {flipped:?}"))?;
    let c = run.metrics.overall().counts;
    Ok(format!("{victim} -> FN; overall tp={} fp={} fn={}", c.tp, c.fp, c.fn_))
}

/// Records every request it forwards.
pub struct Recording<P> {
    inner: P,
    seen: std::sync::Mutex<Vec<ChatRequest>>,
}

impl<P> Recording<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            seen: std::sync::Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.seen.lock().expect("lock").clone()
    }
}

impl<P: Provider> Provider for Recording<P> {
    fn complete_once(&self, request: &ChatRequest) -> Result<String, LlmError> {
        self.seen.lock().expect("lock").push(request.clone());
        self.inner.complete_once(request)
    }
}

/// Sentinel cell values, one per text column of `catalog`.
pub fn plant_sentinels(catalog: &Catalog, db: &mut Database) -> Vec<String> {
    let mut planted = Vec::new();
    for table in catalog.tables() {
        let rel = db.get(&table.name).expect("table loaded");
        let mut rows = rel.rows().to_vec();
        let Some(template) = rows.first().cloned() else { continue };
        let mut row = template;
        for (i, col) in table.columns.iter().enumerate() {
            if col.ty.kind == ColumnKind::Text {
                let s = format!("SENTINEL_{}_{}_q7x", table.name, col.name);
                row[i] = Value::text(s.clone());
                planted.push(s);
            }
        }
        rows.push(row);
        db.insert(table.name.clone(), Relation::new(table.clone(), rows).expect("valid row"));
    }
    planted
}

/// Runs every benchmark query against a database holding sentinel values
/// and checks no constructed prompt mentions them.
pub fn prompts_never_contain_data(assets: &BenchAssets, shots: &[usize]) -> CheckResult {
    let mut db = assets.database.clone();
    let sentinels = plant_sentinels(&assets.catalog, &mut db);
    let provider = Recording::new(FixtureProvider::replay(&assets.fixtures_dir));
    let runs = run_benchmark(
        &assets.records,
        &assets.catalog,
        &db,
        &provider,
        &bench_options(shots.to_vec(), assets),
    )
    .map_err(|e| e.to_string())?;
    let answered = runs.iter().flat_map(|r| &r.records).filter(|r| r.outcome.answer().is_some()).count();
    let leaked_into_results = runs
        .iter()
        .flat_map(|r| &r.records)
        .filter_map(|r| r.outcome.answer())
        .any(|a| a.result.to_csv().contains("SENTINEL_"));
    // the sentinels are reachable by queries, so the check is not vacuous
    ensure(leaked_into_results, || "no query result touched a sentinel row".into())?;
    let requests = provider.requests();
    for req in &requests {
        for s in &sentinels {
            ensure(!req.system.contains(s.as_str()) && !req.user.contains(s.as_str()), || {
                format!("prompt for {:?} contains {s}", req.user)
            })?;
        }
    }
    Ok(format!(
        "{} sentinels, {} prompts, {answered} answered queries",
        sentinels.len(),
        requests.len()
    ))
}

pub fn bundled_assets() -> Result<BenchAssets, String> {
    BenchAssets::load(Path::new(relq::eval::BUNDLED_BENCH_DIR)).map_err(|e| e.to_string())
}
