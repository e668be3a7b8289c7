use std::fs;
use std::path::{Path, PathBuf};

use embedalign::data::{load_embeddings, load_labels, Dataset, DatasetManifest, LabeledEmbeddingSet};
use embedalign::eval::{
    ablation_suite, accuracy, cosine_report, f1, CosineReport, F1Scheme, F1Score,
};
use embedalign::models::{Aligner, Arch, Checkpoint, Model, TaskHead};
use embedalign::numkernel::Matrix;
use embedalign::pipeline::{
    aligner_validation_split, enforce_unseen, infer, run_pipeline_on, train_aligner, train_task,
    Direction, TrainConfig, TrainReport, ALIGNER_CHECKPOINT, CONFIG_FILE, HEAD_CHECKPOINT,
    STEP2_REPORT, STEP3_REPORT,
};
use embedalign::synth::{generate_world, write_world, OracleSpec};
use serde::Serialize;
use serde_json::json;

use crate::args::{CosineArgs, GenSynthArgs, InferArgs, PipelineArgs, TrainAlignerArgs, TrainTaskArgs};
use crate::resolve::{env_seed, pipeline_config, stage_config, ConfigFile, PipelineFlags};
use crate::CliError;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Run(format!("{}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Run(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))
}

/// Recorded paths must stay valid when a run is replayed from elsewhere.
fn absolute(p: &Path) -> PathBuf {
    fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

fn load_dataset(manifest: &Path) -> Result<Dataset, CliError> {
    Ok(DatasetManifest::load(manifest)?.load_dataset()?)
}

fn save_model(model: Model, cfg: &TrainConfig, report: &TrainReport, path: &Path) -> Result<(), CliError> {
    let training = serde_json::to_value(cfg).map_err(|e| CliError::Run(e.to_string()))?;
    Checkpoint::new(model)
        .with_seed(cfg.seed)
        .with_training(training, report.best_epoch, report.best_val_loss)
        .save(path)?;
    Ok(())
}

fn load_aligner(path: &Path) -> Result<(Aligner, Option<Direction>), CliError> {
    let ck = Checkpoint::load(path)?;
    let direction = ck
        .meta
        .training
        .as_ref()
        .and_then(|t| t.get("direction"))
        .and_then(|d| serde_json::from_value(d.clone()).ok());
    Ok((ck.into_aligner()?, direction))
}

fn load_head(path: &Path) -> Result<TaskHead, CliError> {
    Ok(Checkpoint::load(path)?.into_head()?)
}

pub fn gen_synth(args: &GenSynthArgs) -> Result<(), CliError> {
    let d = OracleSpec::default();
    let seed = match args.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(d.seed),
    };
    let spec = OracleSpec {
        dim: args.dim.unwrap_or(d.dim),
        n: args.n.unwrap_or(d.n),
        classes: args.classes.unwrap_or(d.classes),
        kind: args.kind.unwrap_or(d.kind),
        sigma: args.sigma.unwrap_or(d.sigma),
        separation: args.separation.unwrap_or(d.separation),
        seed,
    };
    spec.validate()?;
    let world = generate_world(&spec)?;
    let manifest = write_world(&world, &args.out)?;
    write_json(
        &args.out.join(CONFIG_FILE),
        &json!({"command": "gen-synth", "spec": spec}),
    )?;
    println!(
        "world: d={} n={} classes={} kind={} sigma={} seed={}",
        spec.dim, spec.n, spec.classes, spec.kind, spec.sigma, spec.seed
    );
    println!("manifest: {}", manifest.display());
    Ok(())
}

pub fn train_aligner_cmd(args: &TrainAlignerArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.input.config.as_deref())?;
    let arch = file.arch(args.arch)?;
    if !arch.is_aligner() {
        return Err(CliError::Usage(format!("--arch {arch} is not an aligner")));
    }
    let manifest = file.manifest(args.input.manifest.as_deref())?;
    let cfg = stage_config(TrainConfig::aligner_default(), &file, args.lr, &args.stage)?;
    let ds = load_dataset(&manifest)?;
    let out = &args.input.out;
    create_dir(out)?;
    write_json(
        &out.join(CONFIG_FILE),
        &record(&cfg, json!({"command": "train-aligner", "manifest": absolute(&manifest), "arch": arch}))?,
    )?;

    let (aligner, report) = train_aligner(&ds.parallel, arch, &cfg)?;
    let (_, val) = aligner_validation_split(&ds.parallel, &cfg)?;
    let cosine = cosine_report(val.source(), val.target(), &aligner.infer(val.source())?)?;
    save_model(Model::Aligner(aligner), &cfg, &report, &out.join(ALIGNER_CHECKPOINT))?;
    write_json(&out.join(STEP2_REPORT), &report)?;
    write_json(&out.join("cosine.json"), &cosine)?;
    println!(
        "aligner {arch} ({}): best epoch {} of {}, val mse {:.6}, stop: {:?}",
        cfg.direction,
        report.best_epoch,
        report.epochs.len(),
        report.best_val_loss,
        report.stop_reason
    );
    print_cosine(&cosine);
    println!("wrote {}", out.join(ALIGNER_CHECKPOINT).display());
    Ok(())
}

pub fn train_task_cmd(args: &TrainTaskArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.input.config.as_deref())?;
    let manifest = file.manifest(args.input.manifest.as_deref())?;
    let cfg = stage_config(TrainConfig::task_default(), &file, args.lr, &args.stage)?;
    let ds = load_dataset(&manifest)?;
    let data_share = args.data_share || file.flag("data_share");
    let allow_shared = args.allow_shared || file.flag("allow_shared");
    let aligner_path = match &args.aligner {
        Some(p) => Some(p.clone()),
        None => file.path("aligner"),
    };
    let task = if data_share {
        ds.aligner_source_labeled()?
    } else {
        ds.task_train.clone()
    };
    enforce_unseen(&ds.parallel, &task, "task_train", allow_shared || data_share || ds.share_allowed)?;

    let mut aligner = match &aligner_path {
        Some(p) => Some(load_aligner(p)?.0),
        None => None,
    };
    let out = &args.input.out;
    create_dir(out)?;
    write_json(
        &out.join(CONFIG_FILE),
        &record(
            &cfg,
            json!({
                "command": "train-task",
                "manifest": absolute(&manifest),
                "aligner": aligner_path.as_deref().map(absolute),
                "data_share": data_share,
                "allow_shared": allow_shared,
            }),
        )?,
    )?;
    let (head, report) = train_task(&task, aligner.as_mut(), &cfg)?;
    save_model(Model::Head(head), &cfg, &report, &out.join(HEAD_CHECKPOINT))?;
    if let (Some(a), false) = (aligner, cfg.freeze_aligner_in_step3) {
        save_model(Model::Aligner(a), &cfg, &report, &out.join(ALIGNER_CHECKPOINT))?;
    }
    write_json(&out.join(STEP3_REPORT), &report)?;
    println!(
        "head: best epoch {} of {}, val xent {:.6}, val accuracy {:.4}",
        report.best_epoch,
        report.epochs.len(),
        report.best_val_loss,
        report.final_metrics.get("val_accuracy").copied().unwrap_or(f64::NAN)
    );
    println!("wrote {}", out.join(HEAD_CHECKPOINT).display());
    Ok(())
}

struct ResolvedRun {
    manifest: PathBuf,
    arch: Arch,
    cfg: embedalign::PipelineConfig,
}

fn resolve_run(args: &PipelineArgs) -> Result<ResolvedRun, CliError> {
    let file = ConfigFile::load(args.input.config.as_deref())?;
    let arch = file.arch(args.arch)?;
    let manifest = file.manifest(args.input.manifest.as_deref())?;
    let cfg = pipeline_config(
        &file,
        PipelineFlags {
            aligner_lr: args.aligner_lr,
            task_lr: args.task_lr,
            stage: &args.stage,
            data_share: args.data_share,
            allow_shared: args.allow_shared,
        },
    )?;
    Ok(ResolvedRun { manifest, arch, cfg })
}

/// Resolved config with the run's own fields alongside, in a shape that
/// `--config` accepts back.
fn record<T: Serialize>(cfg: &T, extra: serde_json::Value) -> Result<serde_json::Value, CliError> {
    let mut v = serde_json::to_value(cfg).map_err(|e| CliError::Run(e.to_string()))?;
    let obj = v.as_object_mut().expect("config serializes to an object");
    if let serde_json::Value::Object(extra) = extra {
        obj.extend(extra);
    }
    Ok(v)
}

fn run_record(command: &str, run: &ResolvedRun) -> Result<serde_json::Value, CliError> {
    record(
        &run.cfg,
        json!({"command": command, "manifest": absolute(&run.manifest), "arch": run.arch}),
    )
}

pub fn pipeline_cmd(args: &PipelineArgs) -> Result<(), CliError> {
    let run = resolve_run(args)?;
    if !run.arch.is_aligner() {
        return Err(CliError::Usage(format!("--arch {} is not an aligner", run.arch)));
    }
    let ds = load_dataset(&run.manifest)?;
    let out = &args.input.out;
    let outcome = run_pipeline_on(&ds, run.arch, &run.cfg, Some(out))?;
    write_json(&out.join(CONFIG_FILE), &run_record("pipeline", &run)?)?;
    let e = &outcome.eval;
    println!(
        "pipeline {} ({}{}): test accuracy {:.4}, f1 {:.4} on {} rows",
        e.arch,
        e.direction,
        if e.data_share { ", shared data" } else { "" },
        e.accuracy,
        e.f1.value,
        e.n_test
    );
    print_cosine(&e.cosine);
    println!("wrote {}", out.display());
    Ok(())
}

pub fn ablation_cmd(args: &PipelineArgs) -> Result<(), CliError> {
    let run = resolve_run(args)?;
    if !matches!(run.arch, Arch::Fc | Arch::Ae) {
        return Err(CliError::Usage("ablation needs --arch fc or ae".into()));
    }
    let ds = load_dataset(&run.manifest)?;
    let out = &args.input.out;
    create_dir(out)?;
    write_json(&out.join(CONFIG_FILE), &run_record("ablation", &run)?)?;
    let report = ablation_suite(&ds, run.arch, &run.cfg)?;
    write_json(&out.join("ablation.json"), &report)?;
    println!("{:<10} {:<9} {:>8} {:>8}  fingerprint", "aligner", "data", "accuracy", "f1");
    for r in &report.rows {
        println!(
            "{:<10} {:<9} {:>8.4} {:>8.4}  {}",
            r.aligner.as_str(),
            format!("{:?}", r.data).to_lowercase(),
            r.accuracy,
            r.f1,
            r.fingerprint
        );
    }
    println!(
        "omission gap {:+.4}, share gap {:.4}",
        report.omission_gap, report.share_gap
    );
    Ok(())
}

#[derive(Serialize)]
struct InferReport {
    n: usize,
    aligner: Option<PathBuf>,
    head: PathBuf,
    labels: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    f1: Option<F1Score>,
}

fn infer_inputs(args: &InferArgs) -> Result<(Matrix, Option<LabeledEmbeddingSet>), CliError> {
    if let Some(input) = &args.input {
        let emb = load_embeddings(input)?;
        let labeled = match &args.labels {
            Some(p) => {
                let lf = load_labels(p)?;
                Some(LabeledEmbeddingSet::new(emb.clone(), lf.labels, lf.num_classes)?)
            }
            None => None,
        };
        return Ok((emb, labeled));
    }
    let manifest = args
        .manifest
        .as_ref()
        .ok_or_else(|| CliError::Usage("either --manifest or --input is required".into()))?;
    let test = load_dataset(manifest)?.task_test;
    Ok((test.embeddings().clone(), Some(test)))
}

fn classify(args: &InferArgs, command: &str, require_labels: bool) -> Result<(), CliError> {
    let (emb, labeled) = infer_inputs(args)?;
    if require_labels && labeled.is_none() {
        return Err(CliError::Usage("evaluate needs labels (--manifest, or --input with --labels)".into()));
    }
    let head = load_head(&args.head)?;
    let aligner = match &args.aligner {
        Some(p) => {
            let (a, direction) = load_aligner(p)?;
            if command == "reverse-infer" && direction == Some(Direction::Forward) {
                log::warn!("{} was trained in the forward direction", p.display());
            }
            Some(a)
        }
        None => None,
    };
    let pred = infer(&emb, aligner.as_ref(), &head)?;
    let (acc, f) = match &labeled {
        Some(set) => {
            if set.num_classes() != head.num_classes() {
                return Err(CliError::Run(format!(
                    "labels declare {} classes but the head predicts {}",
                    set.num_classes(),
                    head.num_classes()
                )));
            }
            let scheme = F1Scheme::default_for(set.num_classes());
            (
                Some(accuracy(&pred.labels, set.labels())?),
                Some(f1(&pred.labels, set.labels(), set.num_classes(), scheme)?),
            )
        }
        None => (None, None),
    };
    create_dir(&args.out)?;
    write_json(
        &args.out.join(CONFIG_FILE),
        &json!({
            "command": command,
            "manifest": args.manifest,
            "input": args.input,
            "labels": args.labels,
            "aligner": args.aligner,
            "head": args.head,
        }),
    )?;
    let report = InferReport {
        n: pred.labels.len(),
        aligner: args.aligner.clone(),
        head: args.head.clone(),
        labels: pred.labels,
        accuracy: acc,
        f1: f.clone(),
    };
    let name = if command == "evaluate" { "evaluation.json" } else { "predictions.json" };
    write_json(&args.out.join(name), &report)?;
    match (acc, f) {
        (Some(a), Some(f)) => println!("{command}: {} rows, accuracy {a:.4}, f1 {:.4}", report.n, f.value),
        _ => println!("{command}: classified {} rows", report.n),
    }
    println!("wrote {}", args.out.join(name).display());
    Ok(())
}

pub fn reverse_infer_cmd(args: &InferArgs) -> Result<(), CliError> {
    if args.aligner.is_none() {
        return Err(CliError::Usage("reverse-infer needs --aligner".into()));
    }
    classify(args, "reverse-infer", false)
}

pub fn evaluate_cmd(args: &InferArgs) -> Result<(), CliError> {
    classify(args, "evaluate", true)
}

fn print_cosine(c: &CosineReport) {
    println!(
        "cosine over {} pairs: tgt-src {:.4}, tgt-aligned {:.4}, src-aligned {:.4}",
        c.n, c.tgt_vs_src.mean, c.tgt_vs_aligned.mean, c.src_vs_aligned.mean
    );
}

pub fn cosine_cmd(args: &CosineArgs) -> Result<(), CliError> {
    let (src, tgt) = match (&args.src, &args.tgt, &args.manifest) {
        (Some(s), Some(t), _) => (load_embeddings(s)?, load_embeddings(t)?),
        (None, None, Some(m)) => {
            let p = load_dataset(m)?.parallel;
            (p.source().clone(), p.target().clone())
        }
        _ => {
            return Err(CliError::Usage(
                "cosine needs --src and --tgt, or --manifest".into(),
            ))
        }
    };
    let (aligner, _) = load_aligner(&args.aligner)?;
    let report = cosine_report(&src, &tgt, &aligner.infer(&src)?)?;
    print_cosine(&report);
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_json(&out.join("cosine.json"), &report)?;
        write_json(
            &out.join(CONFIG_FILE),
            &json!({"command": "cosine", "aligner": args.aligner, "manifest": args.manifest, "src": args.src, "tgt": args.tgt}),
        )?;
    }
    Ok(())
}
