//! Benchmark ingestion, TP/FP/FN scoring and precision/recall/F1 reports.
//!
//! Records whose `expected` is a table are scored in answer mode; records that
//! expect a rejection are scored in reject mode:
//!
//! | outcome  | expected table        | expected reject |
//! |----------|-----------------------|-----------------|
//! | answered | TP if rows match, FP  | FP              |
//! | rejected | FN                    | TP              |
//! | failed   | FN                    | FN              |

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::llm::{FewShotExample, Provider};
use crate::pipeline::{run_query, Answer, FailureKind, QueryOutcome, RunOptions};
use crate::relation::{canonical_eq, load_csv, load_database, Database};
use crate::schema::Catalog;
use crate::value::ColumnType;

/// The synthetic truck-test benchmark shipped with the crate.
pub const BUNDLED_BENCH_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/bench");

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    InvalidRecord { line: usize, message: String },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("no fixture for record `{id}` (key {key})")]
    FixtureMiss { id: String, key: String },
    #[error("{shots} shots requested but the example pool has {available}")]
    NotEnoughExamples { shots: usize, available: usize },
    #[error("few-shot example `{0}` is also a benchmark query")]
    ExampleOverlap(String),
    #[error(transparent)]
    Catalog(#[from] crate::schema::CatalogError),
    #[error(transparent)]
    Csv(#[from] crate::relation::CsvError),
    #[error("{path}: {message}")]
    Examples { path: String, message: String },
}

/// A benchmark directory: `catalog.json`, `data/<table>.csv`,
/// `benchmark.jsonl`, `examples.json` (few-shot pool, optional) and
/// `fixtures/`.
#[derive(Debug, Clone)]
pub struct BenchAssets {
    pub catalog: Catalog,
    pub database: Database,
    pub records: Vec<EvalRecord>,
    pub examples: Vec<FewShotExample>,
    pub fixtures_dir: PathBuf,
}

impl BenchAssets {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, EvalError> {
        let dir = dir.as_ref();
        let catalog = Catalog::load(dir.join("catalog.json"))?;
        let database = load_database(dir.join("data"), &catalog)?;
        let records = load_benchmark(dir.join("benchmark.jsonl"))?;
        let examples = load_examples(dir.join("examples.json"))?;
        Ok(Self {
            catalog,
            database,
            records,
            examples,
            fixtures_dir: dir.join("fixtures"),
        })
    }

    pub fn bundled() -> Result<Self, EvalError> {
        Self::load(BUNDLED_BENCH_DIR)
    }
}

/// Reads a JSON array of few-shot examples; a missing file is an empty pool.
pub fn load_examples(path: impl AsRef<Path>) -> Result<Vec<FewShotExample>, EvalError> {
    let path = path.as_ref();
    let bad = |message: String| EvalError::Examples {
        path: path.display().to_string(),
        message,
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(bad(e.to_string())),
    };
    let examples: Vec<FewShotExample> = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    for ex in &examples {
        ex.validate().map_err(|e| bad(format!("example `{}`: {e}", ex.query)))?;
    }
    Ok(examples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Mechanical,
    Project,
    Software,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Mechanical => "mechanical",
            Role::Project => "project",
            Role::Software => "software",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Expected {
    Table { csv: String },
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub id: String,
    pub query: String,
    #[serde(default)]
    pub level: Option<u8>,
    #[serde(default)]
    pub category: Option<String>,
    #[serde(default)]
    pub role: Option<Role>,
    pub expected: Expected,
}

impl EvalRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.query.trim().is_empty() {
            return Err(format!("record `{}` has an empty query", self.id));
        }
        if let Some(level) = self.level {
            if !(1..=4).contains(&level) {
                return Err(format!("record `{}` has level {level}, expected 1..4", self.id));
            }
        }
        if let Expected::Table { csv } = &self.expected {
            check_csv(csv).map_err(|e| format!("record `{}`: expected csv: {e}", self.id))?;
        }
        Ok(())
    }
}

fn check_csv(text: &str) -> Result<(), String> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    if header.is_empty() {
        return Err("missing header".into());
    }
    let mut seen = HashSet::new();
    for h in &header {
        if h.is_empty() || !seen.insert(h.to_ascii_lowercase()) {
            return Err(format!("bad or repeated column `{h}`"));
        }
    }
    for r in rdr.records() {
        r.map_err(|e| e.to_string())?;
    }
    Ok(())
}

/// Parses benchmark JSON Lines. Blank lines are skipped.
pub fn parse_benchmark(text: &str) -> Result<Vec<EvalRecord>, EvalError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |message: String| EvalError::InvalidRecord { line: i + 1, message };
        let rec: EvalRecord = serde_json::from_str(line).map_err(|e| invalid(e.to_string()))?;
        rec.validate().map_err(invalid)?;
        if !ids.insert(rec.id.clone()) {
            return Err(EvalError::DuplicateId(rec.id));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_benchmark(path: impl AsRef<Path>) -> Result<Vec<EvalRecord>, EvalError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_benchmark(&text)
}

pub fn to_jsonl(records: &[EvalRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Score {
    TP,
    FP,
    FN,
}

/// Scores one outcome. Pure: the same inputs always give the same score.
pub fn score_outcome(outcome: &QueryOutcome, expected: &Expected) -> Score {
    match (outcome, expected) {
        (QueryOutcome::Answered { answer, .. }, Expected::Table { csv }) => {
            if table_matches(answer, csv) {
                Score::TP
            } else {
                Score::FP
            }
        }
        (QueryOutcome::Answered { .. }, Expected::Reject) => Score::FP,
        (QueryOutcome::Rejected { .. }, Expected::Reject) => Score::TP,
        (QueryOutcome::Rejected { .. }, Expected::Table { .. }) | (QueryOutcome::Failed { .. }, _) => Score::FN,
    }
}

/// Reads the expected CSV with the result's column kinds, then compares
/// canonically. A header or type mismatch is a mismatch.
fn table_matches(answer: &Answer, csv: &str) -> bool {
    let mut relaxed = answer.result.schema().clone();
    for c in &mut relaxed.columns {
        c.ty = ColumnType::nullable(c.ty.kind);
    }
    match load_csv(csv.as_bytes(), &relaxed) {
        Ok(expected) => canonical_eq(&answer.result, &expected, answer.ordered),
        Err(_) => false,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, s: Score) {
        match s {
            Score::TP => self.tp += 1,
            Score::FP => self.fp += 1,
            Score::FN => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_
    }

    /// Percentage, or `None` when nothing was answered.
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> Option<f64> {
        f1(self.precision()?, self.recall()?)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// Harmonic mean of precision and recall, both in percent.
pub fn f1(precision: f64, recall: f64) -> Option<f64> {
    let sum = precision + recall;
    (sum > 0.0).then(|| 2.0 * precision * recall / sum)
}

/// Rounds a percentage to the two decimals used in reports.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceMetrics {
    pub slice: String,
    #[serde(flatten)]
    pub counts: Counts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl SliceMetrics {
    fn new(slice: String, counts: Counts) -> Self {
        Self {
            slice,
            counts,
            precision: counts.precision().map(round2),
            recall: counts.recall().map(round2),
            f1: counts.f1().map(round2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub rows: Vec<SliceMetrics>,
}

/// A scored record with its slice labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredRecord {
    pub id: String,
    pub level: Option<u8>,
    pub category: Option<String>,
    pub role: Option<Role>,
    pub score: Score,
}

impl ScoredRecord {
    pub fn new(record: &EvalRecord, score: Score) -> Self {
        Self {
            id: record.id.clone(),
            level: record.level,
            category: record.category.clone(),
            role: record.role,
            score,
        }
    }
}

/// Overall row first, then `level=N`, `category=X` and `role=X` slices in
/// sorted order. Input order does not affect the result.
pub fn compute_metrics(scored: &[ScoredRecord]) -> MetricsReport {
    let mut overall = Counts::default();
    let mut levels: BTreeMap<u8, Counts> = BTreeMap::new();
    let mut categories: BTreeMap<&str, Counts> = BTreeMap::new();
    let mut roles: BTreeMap<Role, Counts> = BTreeMap::new();
    for r in scored {
        overall.add(r.score);
        if let Some(l) = r.level {
            levels.entry(l).or_default().add(r.score);
        }
        if let Some(c) = &r.category {
            categories.entry(c).or_default().add(r.score);
        }
        if let Some(role) = r.role {
            roles.entry(role).or_default().add(r.score);
        }
    }
    let mut rows = vec![SliceMetrics::new("overall".into(), overall)];
    rows.extend(levels.into_iter().map(|(l, c)| SliceMetrics::new(format!("level={l}"), c)));
    rows.extend(categories.into_iter().map(|(k, c)| SliceMetrics::new(format!("category={k}"), c)));
    rows.extend(roles.into_iter().map(|(r, c)| SliceMetrics::new(format!("role={}", r.as_str()), c)));
    MetricsReport { rows }
}

fn pct(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.2}")).unwrap_or_default()
}

impl MetricsReport {
    pub fn overall(&self) -> &SliceMetrics {
        &self.rows[0]
    }

    pub fn slice(&self, name: &str) -> Option<&SliceMetrics> {
        self.rows.iter().find(|r| r.slice == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("slice,tp,fp,fn,precision,recall,f1\n");
        for r in &self.rows {
            let slice = if r.slice.contains([',', '"']) {
                format!("\"{}\"", r.slice.replace('"', "\"\""))
            } else {
                r.slice.clone()
            };
            out.push_str(&format!(
                "{slice},{},{},{},{},{},{}\n",
                r.counts.tp,
                r.counts.fp,
                r.counts.fn_,
                pct(r.precision),
                pct(r.recall),
                pct(r.f1)
            ));
        }
        out
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.slice.len()).max().unwrap_or(0).max(5);
        writeln!(
            f,
            "{:<width$}  {:>4}  {:>4}  {:>4}  {:>9}  {:>7}  {:>7}",
            "slice", "tp", "fp", "fn", "precision", "recall", "f1"
        )?;
        for r in &self.rows {
            let show = |x: Option<f64>| x.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
            writeln!(
                f,
                "{:<width$}  {:>4}  {:>4}  {:>4}  {:>9}  {:>7}  {:>7}",
                r.slice,
                r.counts.tp,
                r.counts.fp,
                r.counts.fn_,
                show(r.precision),
                show(r.recall),
                show(r.f1)
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct BenchmarkOptions {
    pub shots: Vec<usize>,
    /// Examples are taken from the front of the pool.
    pub example_pool: Vec<FewShotExample>,
    pub optimize: bool,
    pub model: Option<String>,
}

/// Per-record detail of one pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordResult {
    pub id: String,
    pub score: Score,
    pub outcome: QueryOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRun {
    pub shots: usize,
    pub records: Vec<RecordResult>,
    pub metrics: MetricsReport,
}

impl BenchmarkRun {
    pub fn failed(&self) -> usize {
        self.records.iter().filter(|r| r.outcome.verdict() == "failed").count()
    }
}

fn normalize_query(q: &str) -> String {
    q.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// One full pass over `records` per shot count. Records run in parallel;
/// results keep record order.
pub fn run_benchmark(
    records: &[EvalRecord],
    catalog: &Catalog,
    database: &Database,
    provider: &dyn Provider,
    options: &BenchmarkOptions,
) -> Result<Vec<BenchmarkRun>, EvalError> {
    let queries: HashSet<String> = records.iter().map(|r| normalize_query(&r.query)).collect();
    let mut runs = Vec::with_capacity(options.shots.len());
    for &shots in &options.shots {
        if shots > options.example_pool.len() {
            return Err(EvalError::NotEnoughExamples {
                shots,
                available: options.example_pool.len(),
            });
        }
        let examples = options.example_pool[..shots].to_vec();
        if let Some(ex) = examples.iter().find(|e| queries.contains(&normalize_query(&e.query))) {
            return Err(EvalError::ExampleOverlap(ex.query.clone()));
        }
        let mut run_opts = RunOptions {
            examples,
            optimize: options.optimize,
            ..RunOptions::default()
        };
        if let Some(m) = &options.model {
            run_opts.model = m.clone();
        }
        let results: Vec<RecordResult> = records
            .par_iter()
            .map(|rec| {
                let outcome = run_query(&rec.query, catalog, database, provider, &run_opts);
                RecordResult {
                    id: rec.id.clone(),
                    score: score_outcome(&outcome, &rec.expected),
                    outcome,
                }
            })
            .collect();
        if let Some((r, key)) = results.iter().find_map(|r| match &r.outcome {
            QueryOutcome::Failed {
                kind: FailureKind::FixtureMiss { key },
                ..
            } => Some((r, key)),
            _ => None,
        }) {
            return Err(EvalError::FixtureMiss {
                id: r.id.clone(),
                key: key.clone(),
            });
        }
        let scored: Vec<ScoredRecord> = records
            .iter()
            .zip(&results)
            .map(|(rec, res)| ScoredRecord::new(rec, res.score))
            .collect();
        runs.push(BenchmarkRun {
            shots,
            metrics: compute_metrics(&scored),
            records: results,
        });
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_records() {
        let text = r#"{"id":"q1","query":"x","level":2,"category":"Filtering","role":"software","expected":{"kind":"table","csv":"name\ntruck1\n"}}

{"id":"q2","query":"y","expected":{"kind":"reject"}}
"#;
        let recs = parse_benchmark(text).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].role, Some(Role::Software));
        assert_eq!(recs[1].expected, Expected::Reject);
        assert_eq!(parse_benchmark(&to_jsonl(&recs)).unwrap(), recs);
    }

    #[test]
    fn rejects_bad_records() {
        let bad_level = r#"{"id":"q","query":"x","level":5,"expected":{"kind":"reject"}}"#;
        assert!(matches!(parse_benchmark(bad_level), Err(EvalError::InvalidRecord { line: 1, .. })));
        let ragged = r#"{"id":"q","query":"x","expected":{"kind":"table","csv":"a,b\n1\n"}}"#;
        assert!(parse_benchmark(ragged).is_err());
        let dup = "{\"id\":\"q\",\"query\":\"x\",\"expected\":{\"kind\":\"reject\"}}\n".repeat(2);
        assert!(matches!(parse_benchmark(&dup), Err(EvalError::DuplicateId(_))));
        let unknown_role = r#"{"id":"q","query":"x","role":"manager","expected":{"kind":"reject"}}"#;
        assert!(parse_benchmark(unknown_role).is_err());
    }

    #[test]
    fn undefined_ratios_are_none() {
        let c = Counts { tp: 0, fp: 0, fn_: 3 };
        assert_eq!(c.precision(), None);
        assert_eq!(c.recall(), Some(0.0));
        assert_eq!(c.f1(), None);
        assert_eq!(f1(0.0, 0.0), None);
    }

    #[test]
    fn report_formats() {
        let rec = |id: &str, level, score| ScoredRecord {
            id: id.into(),
            level: Some(level),
            category: None,
            role: None,
            score,
        };
        let report = compute_metrics(&[rec("a", 1, Score::TP), rec("b", 2, Score::FN)]);
        let csv = report.to_csv();
        assert_eq!(
            csv,
            "slice,tp,fp,fn,precision,recall,f1\noverall,1,0,1,100.00,50.00,66.67\nlevel=1,1,0,0,100.00,100.00,100.00\nlevel=2,0,0,1,,0.00,\n"
        );
        assert!(report.to_string().contains("level=2"));
    }
}
