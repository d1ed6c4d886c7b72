use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use labelprob::fixtures::WORKED_TOY_MODEL;
use tempfile::TempDir;

fn labelprob(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_labelprob")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        ws.write("model.json", WORKED_TOY_MODEL);
        ws.write(
            "data.jsonl",
            "{\"id\":\"a\",\"text\":\"X\",\"gold_labels\":[\"S1\",\"S3\"]}\n\
             {\"id\":\"b\",\"text\":\"Y\",\"gold_labels\":[]}\n",
        );
        ws
    }

    fn write(&self, name: &str, contents: &str) -> PathBuf {
        let path = self.dir.path().join(name);
        std::fs::write(&path, contents).unwrap();
        path
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }
}

fn read(path: &str) -> String {
    std::fs::read_to_string(Path::new(path)).unwrap()
}

#[test]
fn score_prints_each_method() {
    let ws = Workspace::new();
    let out = labelprob(&["score", "X", "--model", &ws.path("model.json"), "--methods", "marginal,joint"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("S1=0.4200"), "{text}");
    assert!(text.contains("nodes="), "{text}");
    assert!(text.lines().any(|l| l.starts_with("joint")));
}

#[test]
fn evaluate_writes_report() {
    let ws = Workspace::new();
    let report = ws.path("report.json");
    let out = labelprob(&[
        "evaluate", "--dataset", &ws.path("data.jsonl"), "--model", &ws.path("model.json"), "--out", &report,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&read(&report)).unwrap();
    assert_eq!(json["records_evaluated"], 2);
    assert_eq!(json["methods"].as_array().unwrap().len(), 4);
    assert!(json["config"].get("out").is_none());
}

#[test]
fn oracle_compare_reports_summary() {
    let ws = Workspace::new();
    let out = labelprob(&["oracle-compare", "--dataset", &ws.path("data.jsonl"), "--model", &ws.path("model.json")]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("max |error|"), "{}", stdout(&out));
}

#[test]
fn sweep_reads_scores_and_reports() {
    let ws = Workspace::new();
    let scores = ws.write(
        "scores.jsonl",
        "{\"id\":\"a\",\"gold_labels\":[\"S1\"],\"scores\":{\"S1\":0.9,\"S2\":0.1}}\n\
         {\"id\":\"b\",\"gold_labels\":[],\"scores\":{\"S1\":0.2,\"S2\":0.3}}\n",
    );
    ws.write("tax.json", r#"["S1","S2"]"#);
    let out = labelprob(&[
        "sweep", "--scores", scores.to_str().unwrap(), "--taxonomy", &ws.path("tax.json"), "--grid", "0.25,0.5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("best: threshold 0.5000 micro-F1 1.0000"), "{}", stdout(&out));

    let report = ws.path("report.json");
    labelprob(&[
        "evaluate", "--dataset", &ws.path("data.jsonl"), "--model", &ws.path("model.json"), "--out", &report,
    ]);
    let out = labelprob(&["sweep", "--scores", &report, "--method", "marginal", "--grid", "0.4"]);
    assert!(stdout(&out).contains("best: threshold 0.4000 micro-F1 1.0000"), "{}", stdout(&out));
}

#[test]
fn exit_codes() {
    let ws = Workspace::new();
    assert_eq!(labelprob(&["--help"]).status.code(), Some(0));
    assert_eq!(labelprob(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(labelprob(&["score", "X", "--model", &ws.path("missing.json")]).status.code(), Some(1));
    assert_eq!(
        labelprob(&["score", "X", "--model", &ws.path("model.json"), "--top-p", "1.5"]).status.code(),
        Some(1)
    );
    assert_eq!(
        labelprob(&["score", "X", "--model", &ws.path("model.json"), "--methods", "marginal", "--budget", "2"])
            .status
            .code(),
        Some(3)
    );
    let bad = ws.write("bad.jsonl", "{\"id\":\"a\",\"text\":\"X\",\"gold_labels\":[\"S99\"]}\n");
    let out = labelprob(&["evaluate", "--dataset", bad.to_str().unwrap(), "--model", &ws.path("model.json")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("records: a"));
    let out = labelprob(&["score", "X", "--model", "http://127.0.0.1:9", "--methods", "joint"]);
    assert_eq!(out.status.code(), Some(2));
}
