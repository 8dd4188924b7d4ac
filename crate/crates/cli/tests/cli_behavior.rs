//! CLI contract tests: exit codes, config precedence, idempotence.

use std::path::Path;
use std::process::Output;

fn revrank(dir: &Path, args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_revrank"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn revrank")
}

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures")).join(name)
}

#[test]
fn usage_error_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = revrank(dir.path(), &["no-such-subcommand"]);
    assert_eq!(out.status.code(), Some(1));
    let out = revrank(dir.path(), &["ingest", "--no-such-flag", "x"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let out = revrank(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn data_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    // Missing input file is a data problem, not a usage problem.
    let out = revrank(dir.path(), &["ingest", "--corpus", "nope.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error[ingest]"), "stage missing: {stderr}");
}

#[test]
fn external_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(fixture("corpus_40.jsonl"), dir.path().join("corpus.jsonl")).unwrap();
    let out = revrank(dir.path(), &["ingest", "--corpus", "corpus.jsonl"]);
    assert!(out.status.success());
    let out = revrank(dir.path(), &["disambiguate", "--mentions", "mentions.jsonl"]);
    assert!(out.status.success());
    std::fs::write(dir.path().join("tpl.txt"), "{title} {abstract} {N}").unwrap();
    // Nobody listens on this endpoint; profiling must fail as external.
    let out = revrank(
        dir.path(),
        &[
            "profile",
            "--papers", "papers.jsonl",
            "--authors", "authors.jsonl",
            "--backend", "http",
            "--keyword-endpoint", "http://127.0.0.1:9/",
            "--prompt-template", "tpl.txt",
            "--retries", "0",
            "--timeout-secs", "2",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error[profile]"), "{stderr}");
}

#[test]
fn missing_required_setting_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    // recall's threshold deliberately has no default.
    let out = revrank(dir.path(), &["recall", "--query", "p1"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("required setting"), "{stderr}");
    // An invalid enum-like flag value is a usage problem too.
    let out = revrank(
        dir.path(),
        &[
            "rank",
            "--papers", "p.jsonl",
            "--authors", "a.jsonl",
            "--profiles", "r.jsonl",
            "--query", "p1",
            "--scorer", "bogus",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown scorer"), "{stderr}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"corups": "typo.jsonl"}"#).unwrap();
    let out = revrank(dir.path(), &["--config", "cfg.json", "ingest"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown field"), "{stderr}");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(fixture("corpus_40.jsonl"), dir.path().join("real.jsonl")).unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"corpus": "missing.jsonl"}"#).unwrap();
    // The config file points at a missing corpus; the flag must win.
    let out = revrank(
        dir.path(),
        &["--config", "cfg.json", "ingest", "--corpus", "real.jsonl"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // And without the flag the config file value is used (and fails).
    let out = revrank(dir.path(), &["--config", "cfg.json", "ingest"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn subcommands_are_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(fixture("corpus_40.jsonl"), dir.path().join("corpus.jsonl")).unwrap();
    let out = revrank(dir.path(), &["ingest", "--corpus", "corpus.jsonl"]);
    assert!(out.status.success());
    let first = std::fs::read(dir.path().join("papers.jsonl")).unwrap();
    let input_before = std::fs::read(dir.path().join("corpus.jsonl")).unwrap();
    let out = revrank(dir.path(), &["ingest", "--corpus", "corpus.jsonl"]);
    assert!(out.status.success());
    let second = std::fs::read(dir.path().join("papers.jsonl")).unwrap();
    assert_eq!(first, second, "re-running ingest changed its output");
    let input_after = std::fs::read(dir.path().join("corpus.jsonl")).unwrap();
    assert_eq!(input_before, input_after, "ingest mutated its input");
}

#[test]
fn eval_on_perfect_ranking_fixture_reports_zero_loss() {
    let dir = tempfile::tempdir().unwrap();
    // A corpus engineered so lexical scoring agrees with the ratings:
    // reviewer RA shares the query's vocabulary, RB is disjoint.
    let corpus = concat!(
        r#"{"id":"qa","title":"alpha beta alpha","abstract":"alpha beta study","authors":[{"name":"Quinn","email":"q@x"}],"last_revised":"2024-06-01"}"#, "\n",
        r#"{"id":"ra1","title":"alpha beta methods","abstract":"alpha alpha beta","authors":[{"name":"Rae","email":"ra@x"}],"last_revised":"2024-05-01"}"#, "\n",
        r#"{"id":"rb1","title":"gamma delta methods","abstract":"gamma gamma delta","authors":[{"name":"Bix","email":"rb@x"}],"last_revised":"2024-04-01"}"#, "\n",
    );
    std::fs::write(dir.path().join("corpus.jsonl"), corpus).unwrap();
    let benchmark = concat!(
        r#"{"paper_id":"qa","reviewer_id":"ra1#0","rating":5}"#, "\n",
        r#"{"paper_id":"qa","reviewer_id":"rb1#0","rating":1}"#, "\n",
    );
    std::fs::write(dir.path().join("bench.jsonl"), benchmark).unwrap();
    for args in [
        vec!["ingest", "--corpus", "corpus.jsonl"],
        vec!["disambiguate", "--mentions", "mentions.jsonl"],
        vec!["profile", "--papers", "papers.jsonl", "--authors", "authors.jsonl"],
        vec!["index", "--papers", "papers.jsonl", "--profiles", "profiles.jsonl"],
    ] {
        let out = revrank(dir.path(), &args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = revrank(
        dir.path(),
        &[
            "eval",
            "--benchmark", "bench.jsonl",
            "--papers", "papers.jsonl",
            "--authors", "authors.jsonl",
            "--profiles", "profiles.jsonl",
            "--paper-index", "paper_index.json",
            "--profile-index", "profile_index.json",
            "--scorer", "bm25",
            "--report", "report.json",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("loss=0 "), "summary: {stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["overall"]["loss"], 0.0);
    assert_eq!(report["overall"]["precision"], 1.0);
}
