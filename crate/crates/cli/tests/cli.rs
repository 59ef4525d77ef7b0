use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const FLAGS: [&str; 18] = [
    "--seed", "--out", "--data", "--model", "--layers", "--channels", "--kernel", "--folds", "--repeats", "--epochs", "--lr",
    "--batch", "--layer-pct", "--step-pct", "--jobs", "--checkpoint", "--series", "--config",
];
const SUBCOMMANDS: [&str; 7] = ["gen-data", "train", "eval", "cv", "explain", "baseline", "plot"];

fn hatcn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hatcn")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A small dataset: the first `n` patient and healthy series of the default cohort.
fn small_dataset(dir: &Path, per_class: usize) -> std::path::PathBuf {
    let data = dir.join("data");
    assert_eq!(code(&hatcn(&["gen-data", "--out", p(&data)])), 0);
    let text = std::fs::read_to_string(data.join("dataset.csv")).unwrap();
    let mut lines = text.lines();
    let mut out = String::from(lines.next().unwrap());
    out.push('\n');
    let keep = |id: &str| {
        let subject = &id[..4];
        let n: usize = subject[1..].parse().unwrap();
        n < per_class
    };
    for line in lines {
        if keep(line.split(',').next().unwrap()) {
            out.push_str(line);
            out.push('\n');
        }
    }
    let path = dir.join("small.csv");
    std::fs::write(&path, out).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_data_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = hatcn(&["gen-data", "--seed", "7", "--out", p(d)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["dataset.csv", "annotations.json"] {
        let (x, y) = (std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        assert!(!x.is_empty());
        assert!(x == y, "{f} differs between runs");
    }
    let other = dir.path().join("c");
    assert_eq!(code(&hatcn(&["gen-data", "--seed", "8", "--out", p(&other)])), 0);
    assert_ne!(std::fs::read(a.join("dataset.csv")).unwrap(), std::fs::read(other.join("dataset.csv")).unwrap());
}

fn is_fraction(v: &Value) -> bool {
    v.as_f64().is_some_and(|x| (0.0..=1.0).contains(&x))
}

/// Independent structural check of the documented metrics contract.
fn check_metrics_schema(doc: &Value, folds: u64, repeats: u64) {
    let reports = doc["reports"].as_array().expect("reports array");
    assert!(!reports.is_empty());
    for r in reports {
        assert!(matches!(r["variant"].as_str(), Some("hatcn" | "tcn")));
        for key in ["layers", "channels", "kernel_size", "master_seed"] {
            assert!(r[key].is_u64(), "{key}");
        }
        assert_eq!(r["folds"].as_u64(), Some(folds));
        assert_eq!(r["repeats"].as_u64(), Some(repeats));
        let runs = r["runs"].as_array().expect("runs");
        assert_eq!(runs.len() as u64, folds * repeats);
        for run in runs {
            for key in ["repeat", "fold", "seed", "n_train", "n_test"] {
                assert!(run[key].is_u64(), "run.{key}");
            }
            assert!(run["final_loss"].is_f64());
            let test: Vec<&str> = run["test_subjects"].as_array().unwrap().iter().map(|s| s.as_str().unwrap()).collect();
            let train: Vec<&str> = run["train_subjects"].as_array().unwrap().iter().map(|s| s.as_str().unwrap()).collect();
            assert!(!test.is_empty() && test.iter().all(|s| !train.contains(s)), "subject leak");
            let m = &run["metrics"];
            assert!(is_fraction(&m["accuracy"]) && is_fraction(&m["f1"]) && m["f1_degenerate"].is_boolean());
            let c = &m["confusion"];
            let total: u64 = ["tp", "fp", "tn", "fn"].iter().map(|k| c[k].as_u64().unwrap()).sum();
            assert_eq!(total, run["n_test"].as_u64().unwrap());
        }
        for metric in ["accuracy", "f1"] {
            let s = &r["summary"][metric];
            assert!(is_fraction(&s["mean"]) && s["std"].as_f64().unwrap() >= 0.0);
            let values: Vec<f64> = runs.iter().map(|run| run["metrics"][metric].as_f64().unwrap()).collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            assert!((mean - s["mean"].as_f64().unwrap()).abs() < 1e-12, "stored mean matches runs");
        }
    }
    let b = &doc["baseline"];
    assert_eq!(b["per_fold"].as_array().unwrap().len() as u64, folds);
    assert!(is_fraction(&b["summary"]["accuracy"]["mean"]));
}

#[test]
fn cv_writes_documented_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cv");
    let o = hatcn(&[
        "cv", "--model", "hatcn", "--layers", "2", "--kernel", "50", "--folds", "10", "--repeats", "5", "--channels", "2",
        "--epochs", "1", "--out", p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    check_metrics_schema(&read_json(&out.join("metrics.json")), 10, 5);
    let results = read_json(&out.join("results.json"));
    assert_eq!(results["metrics"], read_json(&out.join("metrics.json")));
    assert_eq!(results["settings"]["epochs"].as_u64(), Some(1));
    assert_eq!(results["timings"][0]["run_seconds"].as_array().unwrap().len(), 50);
    assert_eq!(results["sweep"][0]["depth"].as_u64(), Some(2));
    let table = std::fs::read_to_string(out.join("table.csv")).unwrap();
    let mut rows = table.lines();
    assert_eq!(rows.next(), Some("model,accuracy_mean,accuracy_std,f1_mean,f1_std"));
    assert!(rows.next().unwrap().starts_with("hatcn-K2,"));
    assert!(rows.next().unwrap().starts_with("rt90_5-margin,"));
    let sweep = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(sweep.starts_with("variant,depth,accuracy_mean,accuracy_std,f1_mean,total_seconds\nhatcn,2,"));

    let o = hatcn(&["plot", "--data", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(out.join("sweep.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn cv_metrics_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path(), 3);
    let mut docs = Vec::new();
    for (name, jobs) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let out = dir.path().join(name);
        let o = hatcn(&[
            "cv", "--data", p(&data), "--folds", "3", "--repeats", "2", "--channels", "2", "--kernel", "5", "--epochs", "2",
            "--seed", "99", "--jobs", jobs, "--out", p(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        docs.push(std::fs::read(out.join("metrics.json")).unwrap());
    }
    assert!(docs[0] == docs[1], "same seed, different metrics");
    assert!(docs[0] == docs[2], "worker count changed the metrics");
}

#[test]
fn explain_segments_lie_inside_the_series() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path(), 2);
    let model = dir.path().join("m.bin");
    let o = hatcn(&["train", "--data", p(&data), "--channels", "2", "--epochs", "2", "--checkpoint", p(&model), "--out", p(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("ex");
    let o = hatcn(&["explain", "--checkpoint", p(&model), "--series", p(&data), "--layer-pct", "0.1", "--step-pct", "0.1", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out.join("P000-00.explanation.json"));
    assert_eq!(report["series_id"], "P000-00");
    let segments = report["segments"].as_array().unwrap();
    assert!(!segments.is_empty());
    for s in segments {
        let (a, b) = (s["start"].as_u64().unwrap(), s["end"].as_u64().unwrap());
        assert!(a <= b && b <= 749, "segment [{a}, {b}]");
    }
    assert_eq!(report["freq"].as_array().unwrap().len(), 750);
    assert!(out.join("P000-00.explanation.svg").exists());
    assert!(out.join("class_mean_freq.csv").exists());
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path(), 1);
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "channels = 3\nkernel = 4\nepochs = 1\nmodel = \"tcn\"\n").unwrap();
    let model = dir.path().join("m.bin");
    let o = hatcn(&["train", "--config", p(&cfg), "--channels", "2", "--data", p(&data), "--checkpoint", p(&model), "--out", p(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ck = hatcn::Checkpoint::load(&model).unwrap();
    assert_eq!(ck.model.config.channels, 2, "flag wins over config");
    assert_eq!(ck.model.config.kernel_size, 4, "config wins over default");
    assert_eq!(ck.model.config.layers, 2, "default when neither is given");
    assert_eq!(ck.variant, hatcn::Variant::Tcn);
    assert_eq!(ck.epochs, 1);

    std::fs::write(&cfg, "chanels = 3\n").unwrap();
    assert_eq!(code(&hatcn(&["train", "--config", p(&cfg), "--data", p(&data)])), 1);
}

#[test]
fn help_documents_every_flag() {
    let top = String::from_utf8(hatcn(&["--help"]).stdout).unwrap();
    for sub in SUBCOMMANDS {
        assert!(top.contains(sub), "top-level help misses {sub}");
    }
    let mut documented = String::new();
    for sub in SUBCOMMANDS {
        let o = hatcn(&[sub, "--help"]);
        assert_eq!(code(&o), 0);
        let text = String::from_utf8(o.stdout).unwrap();
        // every option line carries a description
        for line in text.lines().filter(|l| l.trim_start().starts_with("--")) {
            let words = line.split_whitespace().count();
            assert!(words >= 3, "{sub}: undocumented option line '{line}'");
        }
        documented.push_str(&text);
    }
    for flag in FLAGS {
        assert!(documented.contains(&format!("{flag} ")), "no subcommand documents {flag}");
    }
}

#[test]
fn unknown_flags_and_commands_are_usage_errors() {
    assert_eq!(code(&hatcn(&["train", "--bogus"])), 1);
    assert_eq!(code(&hatcn(&["gen-data", "--checkpoint", "x"])), 1);
    assert_eq!(code(&hatcn(&["frobnicate"])), 1);
    assert_eq!(code(&hatcn(&[])), 1);
    assert_eq!(code(&hatcn(&["cv", "--model", "lstm"])), 1);
    assert_eq!(code(&hatcn(&["cv", "--layers", "2,x"])), 1);
    assert_eq!(code(&hatcn(&["explain", "--series", "s.csv"])), 1, "missing --checkpoint");
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    assert_eq!(code(&hatcn(&["baseline", "--data", p(&missing), "--out", p(dir.path())])), 2);
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,b\n1,2\n").unwrap();
    assert_eq!(code(&hatcn(&["baseline", "--data", p(&bad), "--out", p(dir.path())])), 2);
    assert_eq!(code(&hatcn(&["eval", "--checkpoint", p(&bad), "--out", p(dir.path())])), 2);

    let data = small_dataset(dir.path(), 1);
    let text = std::fs::read_to_string(&data).unwrap();
    let patients: String = text.lines().filter(|l| !l.starts_with('H')).map(|l| format!("{l}\n")).collect();
    let one_class = dir.path().join("patients.csv");
    std::fs::write(&one_class, patients).unwrap();
    let o = hatcn(&["train", "--data", p(&one_class), "--channels", "2", "--epochs", "1", "--out", p(dir.path())]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}
