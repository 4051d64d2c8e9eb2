use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = "\
# small world
users = 200
items = 400
epochs = 1
batch_size = 64
";

fn maria(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maria"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", stderr(o)))
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("small.cfg"), SMALL).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        maria(self.dir.path(), args)
    }

    fn ok(&self, args: &[&str]) -> Output {
        let o = self.run(args);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
        o
    }

    fn data(&self, name: &str, count: usize, seed: u64) {
        self.ok(&[
            "gen-data",
            "--config",
            "small.cfg",
            "--out",
            name,
            "--count",
            &count.to_string(),
            "--seed",
            &seed.to_string(),
        ]);
    }
}

fn close(a: &Value, b: &Value, tol: f64, at: &str) {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            assert!((x - y).abs() <= tol, "{at}: {x} vs {y}");
        }
        (Value::Array(x), Value::Array(y)) => {
            assert_eq!(x.len(), y.len(), "{at}");
            for (i, (p, q)) in x.iter().zip(y).enumerate() {
                close(p, q, tol, &format!("{at}[{i}]"));
            }
        }
        (Value::Object(x), Value::Object(y)) => {
            assert_eq!(x.keys().collect::<Vec<_>>(), y.keys().collect::<Vec<_>>(), "{at}");
            for (k, p) in x {
                close(p, &y[k], tol, &format!("{at}.{k}"));
            }
        }
        _ => assert_eq!(a, b, "{at}"),
    }
}

#[test]
fn gen_data_writes_count_lines_and_manifest() {
    let f = Fixture::new();
    let o = f.ok(&["gen-data", "--out", "d.jsonl", "--count", "1000"]);
    let text = std::fs::read_to_string(f.path("d.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 1000);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(f.path("d.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["count"], 1000);
    assert_eq!(manifest["profiles"].as_array().unwrap().len(), 3);
    let counts: u64 = manifest["scenario_counts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c.as_u64().unwrap())
        .sum();
    assert_eq!(counts, 1000);
    let summary = String::from_utf8(o.stdout).unwrap();
    assert!(summary.contains("Bayes AUC"), "{summary}");
    assert!(summary.contains("positive_rate"), "{summary}");
}

#[test]
fn gen_data_is_byte_identical_for_the_same_flags() {
    let f = Fixture::new();
    f.data("a.jsonl", 300, 7);
    f.data("b.jsonl", 300, 7);
    f.data("c.jsonl", 300, 8);
    let read = |n: &str| std::fs::read(f.path(n)).unwrap();
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    assert_ne!(read("a.jsonl"), read("c.jsonl"));
    let strip = |n: &str| {
        let mut m: Value = serde_json::from_slice(&read(n)).unwrap();
        m.as_object_mut().unwrap().remove("seed");
        m
    };
    assert_eq!(read("a.manifest.json"), read("b.manifest.json"));
    assert_ne!(strip("a.manifest.json"), strip("c.manifest.json"));
}

#[test]
fn share_vector_not_summing_to_one_exits_2_naming_the_key() {
    let f = Fixture::new();
    std::fs::write(f.path("bad.cfg"), "scenarios = 2\ntraffic_share = 0.5, 0.6\n").unwrap();
    let o = f.run(&["gen-data", "--config", "bad.cfg", "--out", "d.jsonl"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("traffic_share"), "{}", stderr(&o));
    assert!(!f.path("d.jsonl").exists());
}

#[test]
fn config_errors_exit_2_and_io_errors_exit_3() {
    let f = Fixture::new();
    let o = f.run(&["gen-data", "--out", "d.jsonl", "--set", "bogus_key=1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bogus_key"));

    std::fs::write(f.path("bad.cfg"), "users = 10\nlambda = two\n").unwrap();
    let o = f.run(&["gen-data", "--config", "bad.cfg", "--out", "d.jsonl"]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("lambda") && err.contains("line 2"), "{err}");

    let o = f.run(&["gen-data", "--config", "missing.cfg", "--out", "d.jsonl"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("missing.cfg"));

    let o = f.run(&["train", "--data", "missing.jsonl", "--model-out", "m.bin"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("missing"));

    let o = f.run(&["gen-data", "--out", "no/such/dir/d.jsonl", "--count", "3"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn flags_win_over_config_file_and_set_wins_over_file() {
    let f = Fixture::new();
    std::fs::write(f.path("c.cfg"), "count = 5\nusers = 50\n").unwrap();
    f.ok(&["gen-data", "--config", "c.cfg", "--out", "a.jsonl", "--count", "7"]);
    assert_eq!(std::fs::read_to_string(f.path("a.jsonl")).unwrap().lines().count(), 7);
    f.ok(&["gen-data", "--config", "c.cfg", "--out", "b.jsonl", "--set", "users=60"]);
    let m: Value = serde_json::from_slice(&std::fs::read(f.path("b.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["count"], 5);
    assert_eq!(m["schema"]["users"], 60);
}

#[test]
fn omitted_model_out_exits_2_naming_the_flag() {
    let f = Fixture::new();
    f.data("d.jsonl", 50, 1);
    let o = f.run(&["train", "--config", "small.cfg", "--data", "d.jsonl"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--model-out"), "{}", stderr(&o));
}

#[test]
fn manifest_config_mismatch_exits_2() {
    let f = Fixture::new();
    f.data("d.jsonl", 50, 1);
    let o = f.run(&["train", "--data", "d.jsonl", "--model-out", "m.bin"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("schema"));
    assert!(!f.path("m.bin").exists());
}

#[test]
fn fully_disabled_model_trains_and_reports() {
    let f = Fixture::new();
    f.data("d.jsonl", 400, 1);
    f.ok(&[
        "train",
        "--config",
        "small.cfg",
        "--data",
        "d.jsonl",
        "--model-out",
        "full.bin",
    ]);
    let o = f.ok(&[
        "train",
        "--config",
        "small.cfg",
        "--data",
        "d.jsonl",
        "--model-out",
        "abl.bin",
        "--disable",
        "fs,fr,fcm,nl,st,gs",
        "--json",
    ]);
    let m = json(&o);
    let disabled: Vec<&str> = m["disabled"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(disabled, ["fs", "fr", "fcm", "nl", "st", "gs"]);
    assert_eq!(m["model"], "maria");
    let full: Value = serde_json::from_slice(&std::fs::read(f.path("full.bin.metrics.json")).unwrap()).unwrap();
    assert!(m["param_count"].as_u64().unwrap() < full["param_count"].as_u64().unwrap());
    assert!(m["report"]["refiner_histograms"].as_array().unwrap().is_empty());
    assert!(!full["report"]["refiner_histograms"].as_array().unwrap().is_empty());
    let steps = m["outcome"]["step_losses"].as_array().unwrap();
    assert_eq!(steps.len(), 400usize.div_ceil(64));
    assert!(steps.iter().all(|l| l.as_f64().unwrap().is_finite()));
    assert!(f.path("abl.bin").exists());
}

#[test]
fn baseline_flag_trains_the_mmoe_comparator() {
    let f = Fixture::new();
    f.data("d.jsonl", 300, 1);
    f.ok(&[
        "train",
        "--config",
        "small.cfg",
        "--data",
        "d.jsonl",
        "--model-out",
        "m.bin",
        "--baseline",
        "mmoe",
        "--metrics-out",
        "metrics.json",
    ]);
    let m: Value = serde_json::from_slice(&std::fs::read(f.path("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["model"], "mmoe");
    assert_eq!(m["report"]["model"], "mmoe");
    assert_eq!(m["report"]["scenarios"].as_array().unwrap().len(), 3);
    let o = f.ok(&["eval", "--model", "m.bin", "--data", "d.jsonl", "--json"]);
    assert_eq!(json(&o)["model"], "mmoe");

    let o = f.run(&[
        "train",
        "--config",
        "small.cfg",
        "--data",
        "d.jsonl",
        "--model-out",
        "x.bin",
        "--baseline",
        "gbdt",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn eval_reproduces_the_training_report() {
    let f = Fixture::new();
    f.data("train.jsonl", 600, 1);
    f.data("test.jsonl", 300, 2);
    f.ok(&[
        "train",
        "--config",
        "small.cfg",
        "--data",
        "train.jsonl",
        "--eval-data",
        "test.jsonl",
        "--model-out",
        "m.bin",
    ]);
    let metrics: Value = serde_json::from_slice(&std::fs::read(f.path("m.bin.metrics.json")).unwrap()).unwrap();
    let o = f.ok(&["eval", "--model", "m.bin", "--data", "test.jsonl", "--json"]);
    let report = json(&o);
    close(&metrics["report"], &report, 1e-12, "report");

    let o4 = f.ok(&[
        "eval",
        "--model",
        "m.bin",
        "--data",
        "test.jsonl",
        "--json",
        "--workers",
        "4",
        "--batch-size",
        "37",
    ]);
    close(&report, &json(&o4), 1e-12, "workers");

    for field in ["behavior", "user", "item", "trigger", "context"] {
        for s in 0..3 {
            let h = report["refiner_histograms"]
                .as_array()
                .unwrap()
                .iter()
                .find(|h| h["field"] == field && h["scenario"] == s)
                .unwrap_or_else(|| panic!("no histogram for {field} S{s}"));
            let n: u64 = h["counts"]
                .as_array()
                .unwrap()
                .iter()
                .map(|c| c.as_u64().unwrap())
                .sum();
            assert_eq!(n, report["scenarios"][s]["count"].as_u64().unwrap());
        }
    }

    let text = String::from_utf8(f.ok(&["eval", "--model", "m.bin", "--data", "test.jsonl"]).stdout).unwrap();
    assert!(
        text.contains("refiner selection") && text.contains("mean scenario AUC"),
        "{text}"
    );
}

#[test]
fn single_class_scenario_reports_na() {
    let f = Fixture::new();
    f.data("d.jsonl", 200, 1);
    f.ok(&[
        "train",
        "--config",
        "small.cfg",
        "--data",
        "d.jsonl",
        "--model-out",
        "m.bin",
    ]);
    f.ok(&[
        "gen-data",
        "--config",
        "small.cfg",
        "--set",
        "label_bias=60",
        "--set",
        "label_mode=threshold",
        "--out",
        "pos.jsonl",
        "--count",
        "100",
    ]);
    let o = f.ok(&["eval", "--model", "m.bin", "--data", "pos.jsonl", "--json"]);
    let r = json(&o);
    for s in r["scenarios"].as_array().unwrap() {
        assert_eq!(s["positives"], s["count"]);
        assert_eq!(s["auc"], "n/a");
    }
    assert_eq!(r["overall_auc"], "n/a");
    assert_eq!(r["mean_scenario_auc"], "n/a");
    assert!(!r["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn gradcheck_default_passes_with_per_group_errors() {
    let f = Fixture::new();
    let o = f.ok(&["gradcheck", "--json"]);
    let r = json(&o);
    assert_eq!(r["passed"], true);
    let groups = r["groups"].as_array().unwrap();
    for name in [
        "emb", "enc", "trig", "fs", "fr", "fcm", "moe", "tower", "shared", "head",
    ] {
        let g = groups
            .iter()
            .find(|g| g["group"] == name)
            .unwrap_or_else(|| panic!("group {name}"));
        let e = g["max_rel_err"].as_f64().unwrap();
        assert!(e <= 1e-4, "{name}: {e}");
        assert!(g["checked"].as_u64().unwrap() > 0);
    }
    let text = String::from_utf8(f.ok(&["gradcheck", "--seed", "3"]).stdout).unwrap();
    assert!(text.contains("max_rel_err") && text.contains("PASS"), "{text}");
}

#[test]
fn corrupted_backward_exits_1_naming_a_group() {
    let f = Fixture::new();
    let o = f.run(&["gradcheck", "--inject-fault", "softmax:1.5", "--json"]);
    assert_eq!(code(&o), 1);
    let r = json(&o);
    assert_eq!(r["passed"], false);
    let failing: Vec<&str> = r["groups"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|g| g["passed"] == false)
        .map(|g| g["group"].as_str().unwrap())
        .collect();
    assert!(!failing.is_empty());
    let err = stderr(&o);
    assert!(failing.iter().all(|g| err.contains(g)), "{err}");

    let o = f.run(&["gradcheck", "--inject-fault", "no_such_op"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn help_lists_every_key_with_its_default() {
    let f = Fixture::new();
    let text = String::from_utf8(f.ok(&["--help"]).stdout).unwrap();
    for sub in ["gen-data", "train", "eval", "ablate", "gradcheck"] {
        assert!(text.contains(sub), "{sub}");
    }
    let keys = [
        ("users", "1000"),
        ("traffic_share", "auto"),
        ("importance", "disjoint"),
        ("learning_rate", ""),
        ("disable", "none"),
        ("refiners", ""),
        ("workers", "1"),
    ];
    for (k, default) in keys {
        let line = text
            .lines()
            .find(|l| l.split_whitespace().next() == Some(k))
            .unwrap_or_else(|| panic!("key {k} missing from help"));
        assert!(line.contains(default), "{line}");
        assert!(line.split_whitespace().count() >= 3, "{line}");
    }
    let text = String::from_utf8(f.ok(&["train", "--help"]).stdout).unwrap();
    assert!(text.contains("--model-out") && text.contains("validation_fraction"));
    let text = String::from_utf8(f.ok(&["gradcheck", "--help"]).stdout).unwrap();
    let users = text
        .lines()
        .find(|l| l.split_whitespace().next() == Some("users"))
        .unwrap();
    assert!(users.contains(" 6 "), "{users}");
}

#[test]
fn ablate_emits_one_row_per_variant() {
    let f = Fixture::new();
    f.data("train.jsonl", 300, 1);
    f.data("test.jsonl", 200, 2);
    let o = f.ok(&[
        "ablate",
        "--config",
        "small.cfg",
        "--data",
        "train.jsonl",
        "--test",
        "test.jsonl",
        "--variants",
        "st,gs",
    ]);
    let text = String::from_utf8(o.stdout).unwrap();
    let labels: Vec<&str> = text
        .lines()
        .skip(2)
        .map(|l| l.split("  ").next().unwrap().trim())
        .collect();
    assert_eq!(labels, ["MARIA", "w/o ST", "w/o GS"], "{text}");
    let o = f.run(&[
        "ablate",
        "--config",
        "small.cfg",
        "--data",
        "train.jsonl",
        "--test",
        "test.jsonl",
        "--variants",
        "xx",
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("xx"));
}
