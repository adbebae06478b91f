use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use smn_cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE, EXIT_VERIFY};
use tempfile::TempDir;

const MODEL: &str = r#"{"tdatlen": 8, "comlen": 8, "e_dim": 8, "l_dim": 8, "h": 2, "n": 8, "y": 12, "batch": 32, "projection_dim": 8}"#;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    /// Writes a config whose paths all point into the workspace; `extra` is
    /// spliced into the top-level object.
    fn config(&self, name: &str, extra: &str) -> String {
        self.config_with_predictions(name, &self.p("m.pred"), extra)
    }

    fn config_with_predictions(&self, name: &str, predictions: &str, extra: &str) -> String {
        let text = format!(
            r#"{{"seed": 3, "data_dir": "{}", "checkpoint": "{}", "predictions": "{}", "report": "{}",
                "ablation_dir": "{}", "model": {MODEL}, "train": {{"max_epochs": 2}}{extra}}}"#,
            self.p("data"),
            self.p("m.ckpt"),
            predictions,
            self.p("m.report"),
            self.p("abl"),
        );
        let path = self.path(name);
        fs::write(&path, text).unwrap();
        path.display().to_string()
    }

    fn smn(&self, args: &[&str]) -> i32 {
        run(std::iter::once("smn").chain(args.iter().copied()))
    }

    fn read(&self, name: &str) -> Vec<u8> {
        fs::read(self.path(name)).unwrap()
    }
}

fn prepared() -> (Workspace, String) {
    let ws = Workspace::new();
    let cfg = ws.config("run.json", "");
    assert_eq!(ws.smn(&["prepare", "--config", &cfg]), EXIT_OK);
    (ws, cfg)
}

fn lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn prepare_is_deterministic_and_keeps_every_sample() {
    let (ws, cfg) = prepared();
    let total: usize = ["train.tsv", "val.tsv", "test.tsv"]
        .iter()
        .map(|f| lines(&ws.path("data").join(f)))
        .sum();
    assert_eq!(total, 200);
    let first: Vec<Vec<u8>> = ["train.tsv", "code.vocab", "summary.vocab"]
        .iter()
        .map(|f| ws.read(&format!("data/{f}")))
        .collect();
    assert_eq!(ws.smn(&["prepare", "--config", &cfg]), EXIT_OK);
    for (f, before) in ["train.tsv", "code.vocab", "summary.vocab"].iter().zip(first) {
        assert_eq!(ws.read(&format!("data/{f}")), before, "{f}");
    }
}

#[test]
fn bad_ratios_fail_before_any_output() {
    let ws = Workspace::new();
    let cfg = ws.config("run.json", r#", "split_ratios": [0.5, 0.2, 0.2]"#);
    assert_eq!(ws.smn(&["prepare", "--config", &cfg]), EXIT_USAGE);
    assert!(!ws.path("data").exists());
}

#[test]
fn config_errors_are_usage_errors() {
    let ws = Workspace::new();
    let cfg = ws.config("run.json", r#", "hops": 3"#);
    assert_eq!(ws.smn(&["prepare", "--config", &cfg]), EXIT_USAGE);
    assert_eq!(ws.smn(&["prepare", "--config", &ws.p("missing.json")]), EXIT_USAGE);
    assert_eq!(ws.smn(&["prepare"]), EXIT_USAGE);
    assert_eq!(ws.smn(&["frobnicate", "--config", &cfg]), EXIT_USAGE);
}

#[test]
fn missing_upstream_artifact_is_a_data_error() {
    let ws = Workspace::new();
    let cfg = ws.config("run.json", "");
    assert_eq!(ws.smn(&["train", "--config", &cfg]), EXIT_DATA);
}

#[test]
fn train_predict_evaluate_pipeline() {
    let (ws, cfg) = prepared();
    assert_eq!(ws.smn(&["train", "--config", &cfg]), EXIT_OK);
    let log = fs::read_to_string(ws.path("m.ckpt.log")).unwrap();
    assert_eq!(log.lines().count(), 2);

    assert_eq!(ws.smn(&["predict", "--config", &cfg, "--dump-gates"]), EXIT_OK);
    let test_samples = lines(&ws.path("data/test.tsv"));
    assert_eq!(lines(&ws.path("m.pred")), test_samples);
    let gates = fs::read_to_string(ws.path("m.pred.gates")).unwrap();
    // A header per sample and one line per hop (h = 2).
    assert_eq!(gates.lines().count(), 3 * test_samples);

    // Ensembling a model with itself changes nothing.
    let ckpt = ws.p("m.ckpt");
    let out = ws.p("twice.pred");
    let args = ["predict", "--config", &cfg, "--checkpoint", &ckpt, "--checkpoint", &ckpt, "--out", &out];
    assert_eq!(ws.smn(&args), EXIT_OK);
    assert_eq!(ws.read("twice.pred"), ws.read("m.pred"));

    assert_eq!(ws.smn(&["evaluate", "--config", &cfg]), EXIT_OK);
    let report = fs::read_to_string(ws.path("m.report")).unwrap();
    assert!(report.starts_with("system\tMETEOR\tUSE\tBLEU\tt\tp\n"));
    assert!(ws.path("m.report.json").exists());
}

#[test]
fn training_and_prediction_are_bitwise_reproducible() {
    let (ws, cfg) = prepared();
    let mut artifacts = Vec::new();
    for _ in 0..2 {
        assert_eq!(ws.smn(&["train", "--config", &cfg]), EXIT_OK);
        assert_eq!(ws.smn(&["predict", "--config", &cfg]), EXIT_OK);
        assert_eq!(ws.smn(&["evaluate", "--config", &cfg]), EXIT_OK);
        artifacts.push(["m.ckpt", "m.ckpt.log", "m.pred", "m.report", "m.report.json"].map(|f| ws.read(f)));
    }
    assert_eq!(artifacts[0], artifacts[1]);

    // A different seed gives different weights.
    let other = ws.p("other.ckpt");
    assert_eq!(ws.smn(&["train", "--config", &cfg, "--seed", "4", "--out", &other]), EXIT_OK);
    assert_ne!(ws.read("other.ckpt"), artifacts[0][0]);
}

/// A prediction file that repeats the references of the test split.
fn perfect_predictions(ws: &Workspace) -> PathBuf {
    let text = fs::read_to_string(ws.path("data/test.tsv")).unwrap();
    let out: String = text
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            format!("{}\t{}\n", f[0], f[3])
        })
        .collect();
    let path = ws.path("perfect.pred");
    fs::write(&path, out).unwrap();
    path
}

#[test]
fn perfect_predictions_score_bleu_100() {
    let (ws, _) = prepared();
    let perfect = perfect_predictions(&ws);
    let cfg = ws.config_with_predictions("eval.json", &perfect.display().to_string(), "");
    assert_eq!(ws.smn(&["evaluate", "--config", &cfg]), EXIT_OK);
    let report = fs::read_to_string(ws.path("m.report")).unwrap();
    let row: Vec<&str> = report.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row[0], "perfect");
    assert_eq!(row[3], "100.00");
}

#[test]
fn analyzing_a_system_against_itself_has_empty_difference_set() {
    let (ws, _) = prepared();
    let perfect = perfect_predictions(&ws).display().to_string();
    let cfg = ws.config("an.json", &format!(r#", "compare": ["{perfect}", "{perfect}"]"#));
    assert_eq!(ws.smn(&["analyze", "--config", &cfg]), EXIT_OK);
    let report = fs::read_to_string(ws.path("m.report")).unwrap();
    let diff_rows: Vec<&str> = report.lines().filter(|l| l.starts_with("difference\t")).collect();
    assert_eq!(diff_rows.len(), 2);
    for row in diff_rows {
        let f: Vec<&str> = row.split('\t').collect();
        assert_eq!((f[2], f[3]), ("0", "0.00"));
    }
}

#[test]
fn ablation_over_three_hop_counts() {
    let (ws, _) = prepared();
    let sweep = r#", "sweep": [{"name": "default"}, {"name": "h1", "h": 1}, {"name": "h2", "h": 2}]"#;
    let cfg = ws.config("abl.json", sweep);
    assert_eq!(ws.smn(&["ablate", "--config", &cfg]), EXIT_OK);
    let ckpts = fs::read_dir(ws.path("abl"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "ckpt"))
        .count();
    assert_eq!(ckpts, 3);
    let report = fs::read_to_string(ws.path("abl/report.txt")).unwrap();
    let mut rows = report.lines().skip(1).take(3);
    let baseline: Vec<&str> = rows.next().unwrap().split('\t').collect();
    assert_eq!(baseline[0], "default (baseline)");
    assert_eq!((baseline[4], baseline[5]), ("\u{2014}", "\u{2014}"));
    for row in rows {
        let f: Vec<&str> = row.split('\t').collect();
        assert!(f[4].parse::<f64>().is_ok(), "{row}");
    }
    // Hops reuse one episodic GRU, so h does not change the parameter count.
    let params: Vec<&str> = report
        .lines()
        .skip_while(|l| !l.starts_with("system\tparams"))
        .skip(1)
        .map(|l| l.split('\t').nth(1).unwrap())
        .collect();
    assert_eq!(params.len(), 3);
    assert!(params.iter().all(|p| *p == params[0]));
}

#[test]
fn gradcheck_passes_and_catches_a_broken_gate() {
    let ws = Workspace::new();
    let cfg = ws.config("gc.json", r#", "gradcheck": {"trials": 25}"#);
    let out = ws.p("gc.txt");
    assert_eq!(ws.smn(&["gradcheck", "--config", &cfg, "--out", &out]), EXIT_OK);
    let report = fs::read_to_string(&out).unwrap();
    assert!(report.lines().skip(1).all(|l| l.ends_with("PASS")));
    assert!(report.contains("model/smn_positional"));
    assert_eq!(ws.smn(&["gradcheck", "--config", &cfg, "--inject-fault", "detach-gate"]), EXIT_VERIFY);
}

#[test]
fn gradcheck_rejects_full_size_dimensions() {
    let ws = Workspace::new();
    let cfg = ws.config("gc.json", r#", "gradcheck": {"model": {}}"#);
    assert_eq!(ws.smn(&["gradcheck", "--config", &cfg]), EXIT_USAGE);
}

#[test]
fn binary_reports_exit_codes() {
    let ws = Workspace::new();
    let cfg = ws.config("run.json", "");
    let status = Command::new(env!("CARGO_BIN_EXE_smn"))
        .args(["train", "--config", &cfg])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_DATA));
    let stderr = String::from_utf8_lossy(&status.stderr);
    assert!(stderr.contains("smn prepare"), "{stderr}");
}
