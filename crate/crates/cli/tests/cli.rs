use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_embedalign"));
    c.env_remove("EMBEDALIGN_SEED").env_remove("RUST_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small world: quick to train on.
fn small_world(dir: &Path) -> PathBuf {
    let out = run(&["gen-synth", "--out", s(dir), "--dim", "8", "--n", "300"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    dir.join("manifest.json")
}

const QUICK: [&str; 4] = ["--max-epochs", "3", "--patience", "2"];

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn gen_synth_writes_world_and_is_seeded() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for d in [&a, &b] {
        let out = run(&["gen-synth", "--out", s(d.path()), "--seed", "3"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let files = [
        "manifest.json",
        "aligner_src.embd",
        "aligner_tgt.embd",
        "task_train.embd",
        "task_test.embd",
        "aligner.labels.json",
        "task_train.labels.json",
        "task_test.labels.json",
        "ground_truth.json",
        "config.json",
    ];
    for f in files {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    // 4000 rows split 40/40/20; d = 64 f32 values plus a 16-byte header.
    let len = |f: &str| fs::metadata(a.path().join(f)).unwrap().len();
    assert_eq!(len("aligner_src.embd"), 16 + 1600 * 64 * 4);
    assert_eq!(len("task_test.embd"), 16 + 800 * 64 * 4);
}

#[test]
fn seed_falls_back_to_environment() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let out = bin()
        .args(["gen-synth", "--out", s(a.path()), "--dim", "4", "--n", "40"])
        .env("EMBEDALIGN_SEED", "5")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    run(&["gen-synth", "--out", s(b.path()), "--dim", "4", "--n", "40", "--seed", "5"]);
    assert_eq!(
        fs::read(a.path().join("aligner_src.embd")).unwrap(),
        fs::read(b.path().join("aligner_src.embd")).unwrap()
    );
    let bad = bin()
        .args(["gen-synth", "--out", s(a.path())])
        .env("EMBEDALIGN_SEED", "seven")
        .output()
        .unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn usage_errors_exit_2() {
    let d = TempDir::new().unwrap();
    let out = run(&["gen-synth", "--out", s(d.path()), "--sigma", "-1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("sigma"));
    assert_eq!(code(&run(&["gen-synth", "--out", s(d.path()), "--frobnicate"])), 2);
    assert_eq!(code(&run(&["no-such-command"])), 2);
    assert_eq!(code(&run(&["pipeline", "--out", s(d.path())])), 2);
}

#[test]
fn missing_files_exit_1_with_path() {
    let d = TempDir::new().unwrap();
    let missing = d.path().join("absent.json");
    let out = run(&["pipeline", "--manifest", s(&missing), "--arch", "fc", "--out", s(d.path())]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("absent.json"), "{}", stderr(&out));
}

#[test]
fn pipeline_twice_gives_identical_eval() {
    let w = TempDir::new().unwrap();
    let manifest = small_world(w.path());
    let runs = [TempDir::new().unwrap(), TempDir::new().unwrap()];
    for r in &runs {
        let mut args = vec!["pipeline", "--manifest", s(&manifest), "--arch", "ae", "--seed", "7", "--out", s(r.path())];
        args.extend(QUICK);
        let out = run(&args);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(String::from_utf8_lossy(&out.stdout).contains("test accuracy"));
    }
    for f in ["eval.json", "aligner.lamd", "head.lamd", "config.json"] {
        assert_eq!(
            fs::read(runs[0].path().join(f)).unwrap(),
            fs::read(runs[1].path().join(f)).unwrap(),
            "{f}"
        );
    }
    for f in ["report_step2.json", "report_step3.json"] {
        assert!(runs[0].path().join(f).exists());
    }
    assert!(!runs[0].path().join("INCOMPLETE").exists());

    // Replaying the logged config reproduces the run.
    let replay = TempDir::new().unwrap();
    let cfg = runs[0].path().join("config.json");
    let out = run(&["pipeline", "--config", s(&cfg), "--out", s(replay.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        fs::read(runs[0].path().join("eval.json")).unwrap(),
        fs::read(replay.path().join("eval.json")).unwrap()
    );
}

#[test]
fn stage_commands_use_their_default_learning_rates() {
    let w = TempDir::new().unwrap();
    let manifest = small_world(w.path());
    let (al, task) = (TempDir::new().unwrap(), TempDir::new().unwrap());

    let mut args = vec!["train-aligner", "--manifest", s(&manifest), "--arch", "fc", "--out", s(al.path())];
    args.extend(QUICK);
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(json(&al.path().join("config.json"))["lr"], 1e-5);

    let ckpt = al.path().join("aligner.lamd");
    let mut args = vec!["train-task", "--manifest", s(&manifest), "--aligner", s(&ckpt), "--out", s(task.path())];
    args.extend(QUICK);
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(json(&task.path().join("config.json"))["lr"], 1e-4);
    assert!(task.path().join("head.lamd").exists());
    // Frozen by default: no tuned aligner is written.
    assert!(!task.path().join("aligner.lamd").exists());

    let ev = TempDir::new().unwrap();
    let head = task.path().join("head.lamd");
    let out = run(&[
        "evaluate", "--manifest", s(&manifest), "--aligner", s(&ckpt), "--head", s(&head), "--out", s(ev.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json(&ev.path().join("evaluation.json"));
    assert_eq!(report["n"], 60);
    assert!(report["accuracy"].as_f64().unwrap() >= 0.0);

    let cos = TempDir::new().unwrap();
    let out = run(&["cosine", "--aligner", s(&ckpt), "--manifest", s(&manifest), "--out", s(cos.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(json(&cos.path().join("cosine.json"))["n"], 120);

    // A head is not an aligner.
    let out = run(&["cosine", "--aligner", s(&head), "--manifest", s(&manifest)]);
    assert_eq!(code(&out), 1);
}

#[test]
fn reverse_infer_runs_target_inputs_through_aligner() {
    let w = TempDir::new().unwrap();
    let manifest = small_world(w.path());
    let (al, task, inf) = (TempDir::new().unwrap(), TempDir::new().unwrap(), TempDir::new().unwrap());
    let mut args = vec![
        "train-aligner", "--manifest", s(&manifest), "--arch", "ae", "--direction", "reverse", "--out", s(al.path()),
    ];
    args.extend(QUICK);
    assert_eq!(code(&run(&args)), 0);
    let mut args = vec!["train-task", "--manifest", s(&manifest), "--out", s(task.path())];
    args.extend(QUICK);
    assert_eq!(code(&run(&args)), 0);
    let test = w.path().join("task_test.embd");
    let out = run(&[
        "reverse-infer",
        "--input",
        s(&test),
        "--aligner",
        s(&al.path().join("aligner.lamd")),
        "--head",
        s(&task.path().join("head.lamd")),
        "--out",
        s(inf.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json(&inf.path().join("predictions.json"));
    assert_eq!(report["labels"].as_array().unwrap().len(), 60);
    assert!(report.get("accuracy").is_none());
}

#[test]
fn shared_rows_need_allow_shared() {
    let w = TempDir::new().unwrap();
    let manifest = small_world(w.path());
    let mut m = json(&manifest);
    m["task_train"] = "aligner_src.embd".into();
    m["task_train_labels"] = "aligner.labels.json".into();
    let leaky = w.path().join("leaky.json");
    fs::write(&leaky, serde_json::to_vec_pretty(&m).unwrap()).unwrap();

    let out_dir = TempDir::new().unwrap();
    let mut args = vec!["pipeline", "--manifest", s(&leaky), "--arch", "fc", "--out", s(out_dir.path())];
    args.extend(QUICK);
    let out = run(&args);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("unseen"), "{}", stderr(&out));
    assert!(out_dir.path().join("INCOMPLETE").exists());

    args.push("--allow-shared");
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("sharing is allowed"), "{}", stderr(&out));
    assert!(!out_dir.path().join("INCOMPLETE").exists());
}

#[test]
fn ablation_reports_four_rows() {
    let w = TempDir::new().unwrap();
    let manifest = small_world(w.path());
    let out_dir = TempDir::new().unwrap();
    let mut args = vec!["ablation", "--manifest", s(&manifest), "--arch", "fc", "--out", s(out_dir.path())];
    args.extend(QUICK);
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json(&out_dir.path().join("ablation.json"));
    assert_eq!(report["rows"].as_array().unwrap().len(), 4);
    assert_eq!(code(&run(&["ablation", "--manifest", s(&manifest), "--arch", "identity", "--out", s(out_dir.path())])), 2);
}
