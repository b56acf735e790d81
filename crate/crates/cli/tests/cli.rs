use std::path::Path;
use std::process::{Command, Output};

use finnger_core::dataset::Image;
use finnger_core::eval::read_json_report;

fn finnger(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finnger"))
        .args(args)
        .env_remove("FINNGER_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn blank_image_is_no_hand() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("blank.png");
    Image::filled(64, 64, [0, 0, 0]).unwrap().save_png(&img).unwrap();
    let o = finnger(&["count", "--image", p(&img)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "no-hand");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(finnger(&["count", "--bogus"]).status.code(), Some(1));
    assert_eq!(finnger(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(finnger(&[]).status.code(), Some(1));
    let o = finnger(&["count", "--image", "x.png", "--hsv-lower", "1,2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn help_lists_defaults() {
    let o = finnger(&["train", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for needle in ["--epochs", "[default: 100]", "[default: 32]", "0.0003", "--width-scale"] {
        assert!(text.contains(needle), "missing {needle}:\n{text}");
    }
}

#[test]
fn runtime_errors_exit_two() {
    let o = finnger(&["count", "--image", "/nonexistent/hand.png"]);
    assert_eq!(o.status.code(), Some(2));
    let o = finnger(&["eval", "--model", "/nonexistent.fngr", "--data", "/nonexistent", "--report", "/tmp/r.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "circleRatio = 0.7\nnotAKey = 1\n").unwrap();
    let img = dir.path().join("blank.png");
    Image::filled(8, 8, [0, 0, 0]).unwrap().save_png(&img).unwrap();
    let o = finnger(&["--config", p(&cfg), "count", "--image", p(&img)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("notAKey"));
}

#[test]
fn synth_then_edge_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    let o = finnger(&["--seed", "3", "synth", "--per-class", "50", "--out", p(&data)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = dir.path().join("edge.json");
    let o = finnger(&["eval", "--method", "edge", "--data", p(&data), "--report", p(&report)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = read_json_report(&report).unwrap();
    assert_eq!(doc.report.samples, 300);
    assert_eq!(doc.confusion.row_sums(), [50; 6]);
    assert!(doc.report.accuracy >= 0.9, "{:?}", doc.report);
    assert!(stdout(&o).starts_with("accuracy"));
}

#[test]
fn seed_env_is_the_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str, env: Option<&str>, flag: Option<&str>| {
        let out = dir.path().join(sub);
        let mut c = Command::new(env!("CARGO_BIN_EXE_finnger"));
        c.env_remove("FINNGER_SEED");
        if let Some(s) = env {
            c.env("FINNGER_SEED", s);
        }
        if let Some(s) = flag {
            c.args(["--seed", s]);
        }
        assert!(c.args(["synth", "--per-class", "1", "--out", p(&out)]).status().unwrap().success());
        std::fs::read(out.join("3/00000.png")).unwrap()
    };
    let from_env = run("a", Some("7"), None);
    assert_eq!(from_env, run("b", None, Some("7")));
    assert_ne!(from_env, run("c", Some("7"), Some("8")));
}

#[test]
fn train_and_cnn_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    let o = finnger(&["--seed", "1", "synth", "--per-class", "4", "--val-per-class", "1", "--out", p(&data)]);
    assert_eq!(o.status.code(), Some(0));
    let model = dir.path().join("m.fngr");
    let series = dir.path().join("train.csv");
    let o = finnger(&[
        "--seed", "1", "train", "--data", p(&data), "--out", p(&model), "--width-scale", "0.125",
        "--epochs", "2", "--batch-size", "6", "--report", p(&series),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("best epoch"));
    assert_eq!(std::fs::read_to_string(&series).unwrap().lines().count(), 3);
    assert!(dir.path().join("train.confusion.csv").exists());

    let report = dir.path().join("cnn.json");
    let o = finnger(&["eval", "--model", p(&model), "--data", p(&data), "--split", "val", "--report", p(&report)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = read_json_report(&report).unwrap();
    assert_eq!(doc.report.samples, 6);
    assert_eq!(doc.confusion.column_sum(6), 0);

    let o = finnger(&["eval", "--data", p(&data), "--report", p(&report)]);
    assert_eq!(o.status.code(), Some(1));
}
