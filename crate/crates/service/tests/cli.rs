use std::fs;
use std::path::PathBuf;

use relq::eval::BUNDLED_BENCH_DIR;
use relq_service::{run, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn relq(args: &[&str]) -> Out {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("relq").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Out {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn bench(file: &str) -> String {
    PathBuf::from(BUNDLED_BENCH_DIR).join(file).display().to_string()
}

fn data_args() -> Vec<String> {
    vec!["--catalog".into(), bench("catalog.json"), "--data".into(), bench("data")]
}

fn with(head: &[&str], tail: &[String]) -> Out {
    let mut args: Vec<&str> = head.to_vec();
    args.extend(tail.iter().map(String::as_str));
    relq(&args)
}

#[test]
fn parse_echoes_canonical_form() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("q.ra");
    fs::write(&file, "σ[ x==1 ]( t )\n").unwrap();
    let out = relq(&["parse", file.to_str().unwrap()]);
    assert_eq!((out.code, out.stdout.as_str()), (EXIT_OK, "select[x == 1](t)\n"));

    fs::write(&file, "select[x == 1](t").unwrap();
    let out = relq(&["parse", file.to_str().unwrap()]);
    assert_eq!(out.code, EXIT_FAILURE);
    assert!(out.stderr.contains(":1:16:"), "{}", out.stderr);

    let out = relq(&["parse", "/definitely/not/here.ra"]);
    assert_eq!(out.code, EXIT_FAILURE);
}

#[test]
fn exec_runs_ra_without_the_model() {
    let out = with(&["exec", "--ra", r#"sort[name](select[model == "FMX"](trucks))"#], &data_args());
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    assert!(out.stdout.contains("name "), "{}", out.stdout);
    assert!(out.stdout.contains("row"));

    let out = with(&["--format", "csv", "exec", "--ra", r#"project[name](select[model == "FMX"](trucks))"#], &data_args());
    assert!(out.stdout.starts_with("name\r\n"), "{:?}", out.stdout);

    let out = with(&["exec", "--ra", "project[name](lorries)"], &data_args());
    assert_eq!(out.code, EXIT_FAILURE);
    assert!(out.stderr.contains("lorries"), "{}", out.stderr);
}

#[test]
fn no_optimize_runs_the_expression_as_written() {
    let ra = r#"select[test_result == "NOK" and name == "truck03"](results)"#;
    let on = with(&["exec", "--ra", ra], &data_args());
    let off = with(&["--no-optimize", "exec", "--ra", ra], &data_args());
    assert!(on.stdout.contains("optimized:"));
    assert!(!off.stdout.contains("optimized:"));
    let table = |s: &str| s.lines().skip_while(|l| !l.starts_with("run_id")).collect::<Vec<_>>().join("\n");
    assert_eq!(table(&on.stdout), table(&off.stdout));
}

#[test]
fn query_replays_fixtures() {
    let fixtures = bench("fixtures");
    let head = ["--fixtures", fixtures.as_str(), "--format", "jsonl", "query", "--q", "Find some trucks for cases that are NOK"];
    let out = with(&head, &data_args());
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let v: serde_json::Value = serde_json::from_str(out.stdout.trim()).unwrap();
    assert_eq!(v["verdict"], "answered");
    assert_eq!(v["resolutions"].as_array().unwrap().len(), 2);

    let out = with(&["--fixtures", fixtures.as_str(), "query", "--q", "What is the most beautiful truck?"], &data_args());
    assert_eq!(out.code, EXIT_OK);
    assert!(out.stderr.contains("rejected at interpreter"));

    let out = with(&["--fixtures", fixtures.as_str(), "query", "--q", "A question nobody recorded"], &data_args());
    assert_eq!(out.code, EXIT_FAILURE);
    assert!(out.stderr.contains("no fixture"), "{}", out.stderr);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(relq(&["bogus"]).code, EXIT_USAGE);
    assert_eq!(relq(&["exec", "--ra", "t"]).code, EXIT_USAGE);
    assert_eq!(relq(&["--provider", "carrier-pigeon", "parse", "-"]).code, EXIT_USAGE);
    let out = with(&["query", "--q", "x"], &data_args());
    assert_eq!(out.code, EXIT_USAGE, "replay without --fixtures");
    let fixtures = bench("fixtures");
    let out = with(&["--fixtures", fixtures.as_str(), "query", "--q", "x", "--shots", "2"], &data_args());
    assert_eq!(out.code, EXIT_USAGE, "shots without an example pool");
    let help = relq(&["--help"]);
    assert_eq!(help.code, EXIT_OK);
    assert!(help.stdout.contains("eval"));
}

#[test]
fn eval_prints_metrics_for_each_shot_count() {
    let fixtures = bench("fixtures");
    let head = [
        "--fixtures",
        fixtures.as_str(),
        "--format",
        "csv",
        "eval",
        "--shots",
        "0,2,4",
    ];
    let mut tail = vec!["--bench".into(), bench("benchmark.jsonl"), "--examples".into(), bench("examples.json")];
    tail.extend(data_args());
    let out = with(&head, &tail);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let lines: Vec<&str> = out.stdout.lines().collect();
    assert_eq!(lines[0], "shots,slice,tp,fp,fn,precision,recall,f1");
    for shots in ["0", "2", "4"] {
        assert!(lines.contains(&format!("{shots},overall,50,0,0,100.00,100.00,100.00").as_str()), "{}", out.stdout);
    }

    let text = with(&["--fixtures", fixtures.as_str(), "eval"], &tail);
    assert_eq!(text.code, EXIT_OK);
    assert!(text.stdout.contains("shots=0"));
    assert!(text.stdout.contains("overall"));
}

#[test]
fn eval_exits_1_when_replayed_records_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let mut bad = 0;
    for entry in fs::read_dir(bench("fixtures")).unwrap() {
        let entry = entry.unwrap();
        let text = fs::read_to_string(entry.path()).unwrap();
        let text = if text.contains("sort[") && bad == 0 {
            bad += 1;
            "I would sort them by date.".to_string()
        } else {
            text
        };
        fs::write(tmp.path().join(entry.file_name()), text).unwrap();
    }
    let fixtures = tmp.path().display().to_string();
    let mut tail = vec!["--bench".into(), bench("benchmark.jsonl"), "--examples".into(), bench("examples.json")];
    tail.extend(data_args());
    let out = with(&["--fixtures", fixtures.as_str(), "eval", "--shots", "0,2,4"], &tail);
    assert_eq!(out.code, EXIT_FAILURE);
    assert!(out.stdout.contains("overall"));

    let missing = tempfile::tempdir().unwrap();
    let fixtures = missing.path().display().to_string();
    let out = with(&["--fixtures", fixtures.as_str(), "eval"], &tail);
    assert_eq!(out.code, EXIT_FAILURE);
    assert!(out.stderr.contains("q01"), "{}", out.stderr);
}
