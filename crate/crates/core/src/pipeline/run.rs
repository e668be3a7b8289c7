use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Direction, TrainConfig, TrainReport};
use super::train::{aligner_validation_split, infer, train_aligner, train_task};
use crate::data::{check_disjoint, Dataset, DatasetManifest, LabeledEmbeddingSet};
use crate::error::{Error, Result};
use crate::eval::{accuracy, cosine_report, f1, CosineReport, F1Scheme, F1Score};
use crate::models::{Aligner, Arch, Checkpoint, Model, TaskHead};
use crate::numkernel::fnv1a64;

pub const ALIGNER_CHECKPOINT: &str = "aligner.lamd";
pub const HEAD_CHECKPOINT: &str = "head.lamd";
pub const STEP2_REPORT: &str = "report_step2.json";
pub const STEP3_REPORT: &str = "report_step3.json";
pub const EVAL_REPORT: &str = "eval.json";
pub const CONFIG_FILE: &str = "config.json";
/// Present while a run is in progress; left behind when a run fails.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub aligner: TrainConfig,
    pub task: TrainConfig,
    /// Tune the head on the labeled source side of the aligner corpus
    /// instead of the separate task-train set.
    pub data_share: bool,
    /// Continue with a warning when task rows also occur in the aligner
    /// corpus.
    pub allow_shared: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            aligner: TrainConfig::aligner_default(),
            task: TrainConfig::task_default(),
            data_share: false,
            allow_shared: false,
        }
    }
}

impl PipelineConfig {
    pub fn direction(&self) -> Direction {
        self.aligner.direction
    }

    /// Stable identifier of everything that determines a run's outputs.
    pub fn fingerprint(&self, arch: Arch) -> Result<String> {
        #[derive(Serialize)]
        struct Keyed<'a> {
            arch: Arch,
            config: &'a PipelineConfig,
        }
        let bytes = serde_json::to_vec(&Keyed { arch, config: self })?;
        Ok(format!("{:016x}", fnv1a64(&bytes)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub arch: Arch,
    pub direction: Direction,
    pub data_share: bool,
    pub n_test: usize,
    pub accuracy: f64,
    pub f1: F1Score,
    /// Over the aligner's held-out validation pairs.
    pub cosine: CosineReport,
    pub fingerprint: String,
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub aligner: Aligner,
    pub head: TaskHead,
    pub step2: TrainReport,
    pub step3: TrainReport,
    pub eval: EvalReport,
}

/// A trained Step-2 aligner together with its diagnostics, reusable across
/// several Step-3 runs.
#[derive(Clone, Debug)]
pub struct AlignerStage {
    pub aligner: Aligner,
    pub report: TrainReport,
    pub cosine: CosineReport,
}

/// Task rows must be unseen by the aligner. Returns an error naming the
/// overlap unless sharing is permitted, in which case it only warns.
pub fn enforce_unseen(parallel: &crate::data::ParallelEmbeddingSet, task: &LabeledEmbeddingSet, role: &str, allowed: bool) -> Result<()> {
    let report = check_disjoint(parallel, task)?;
    if report.is_ok() {
        return Ok(());
    }
    let shared = report.violations.len();
    if allowed {
        log::warn!("{shared} {role} row(s) also occur in the aligner corpus; continuing because sharing is allowed");
        Ok(())
    } else {
        let first = report.violations[0];
        log::error!(
            "{role} row {} equals aligner {:?} row {}",
            first.task_index,
            first.side,
            first.parallel_index
        );
        Err(Error::Disjointness(shared))
    }
}

pub fn train_step2(dataset: &Dataset, arch: Arch, cfg: &PipelineConfig) -> Result<AlignerStage> {
    if !arch.is_aligner() {
        return Err(Error::Parameter(format!("'{arch}' is not an aligner architecture")));
    }
    let (aligner, report) = train_aligner(&dataset.parallel, arch, &cfg.aligner)?;
    let (_, val) = aligner_validation_split(&dataset.parallel, &cfg.aligner)?;
    let cosine = cosine_report(val.source(), val.target(), &aligner.infer(val.source())?)?;
    Ok(AlignerStage {
        aligner,
        report,
        cosine,
    })
}

/// Step 3 and evaluation on top of a finished Step 2.
pub fn finish_pipeline(
    dataset: &Dataset,
    stage: AlignerStage,
    cfg: &PipelineConfig,
) -> Result<PipelineOutcome> {
    let task_train = if cfg.data_share {
        dataset.aligner_source_labeled()?
    } else {
        dataset.task_train.clone()
    };
    let allowed = cfg.allow_shared || cfg.data_share || dataset.share_allowed;
    enforce_unseen(&dataset.parallel, &task_train, "task_train", allowed)?;
    enforce_unseen(&dataset.parallel, &dataset.task_test, "task_test", cfg.allow_shared || dataset.share_allowed)?;

    let AlignerStage {
        mut aligner,
        report: step2,
        cosine,
    } = stage;
    let (head, step3) = match cfg.direction() {
        Direction::Forward => train_task(&task_train, Some(&mut aligner), &cfg.task)?,
        // The head is an ordinary source-language model; the aligner is
        // only applied to target inputs at inference.
        Direction::Reverse => train_task(&task_train, None, &cfg.task)?,
    };

    let test = &dataset.task_test;
    let pred = infer(test.embeddings(), Some(&aligner), &head)?;
    let eval = EvalReport {
        arch: aligner.arch(),
        direction: cfg.direction(),
        data_share: cfg.data_share,
        n_test: test.len(),
        accuracy: accuracy(&pred.labels, test.labels())?,
        f1: f1(
            &pred.labels,
            test.labels(),
            test.num_classes(),
            F1Scheme::default_for(test.num_classes()),
        )?,
        cosine,
        fingerprint: cfg.fingerprint(aligner.arch())?,
    };
    Ok(PipelineOutcome {
        aligner,
        head,
        step2,
        step3,
        eval,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn checkpoint(model: Model, cfg: &TrainConfig, report: &TrainReport) -> Result<Checkpoint> {
    Ok(Checkpoint::new(model)
        .with_seed(cfg.seed)
        .with_training(serde_json::to_value(cfg)?, report.best_epoch, report.best_val_loss))
}

/// Writes checkpoints and reports for a finished run.
pub fn write_outcome(outcome: &PipelineOutcome, cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    checkpoint(Model::Aligner(outcome.aligner.clone()), &cfg.aligner, &outcome.step2)?
        .save(dir.join(ALIGNER_CHECKPOINT))?;
    checkpoint(Model::Head(outcome.head.clone()), &cfg.task, &outcome.step3)?
        .save(dir.join(HEAD_CHECKPOINT))?;
    write_json(&dir.join(STEP2_REPORT), &outcome.step2)?;
    write_json(&dir.join(STEP3_REPORT), &outcome.step3)?;
    write_json(&dir.join(EVAL_REPORT), &outcome.eval)
}

/// Runs Step 2, Step 3 and evaluation. With `out_dir`, artifacts are
/// written there and an `INCOMPLETE` marker remains if any stage fails.
pub fn run_pipeline_on(
    dataset: &Dataset,
    arch: Arch,
    cfg: &PipelineConfig,
    out_dir: Option<&Path>,
) -> Result<PipelineOutcome> {
    cfg.aligner.validate()?;
    cfg.task.validate()?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let marker = dir.join(INCOMPLETE_MARKER);
        fs::write(&marker, b"run in progress or failed\n").map_err(|e| Error::io(&marker, e))?;
        #[derive(Serialize)]
        struct Resolved<'a> {
            arch: Arch,
            #[serde(flatten)]
            config: &'a PipelineConfig,
        }
        write_json(&dir.join(CONFIG_FILE), &Resolved { arch, config: cfg })?;
    }
    let stage = train_step2(dataset, arch, cfg)?;
    log::info!(
        "step 2 ({arch}): best epoch {}, val mse {:.6}",
        stage.report.best_epoch,
        stage.report.best_val_loss
    );
    let outcome = finish_pipeline(dataset, stage, cfg)?;
    log::info!("test accuracy {:.4}", outcome.eval.accuracy);
    if let Some(dir) = out_dir {
        write_outcome(&outcome, cfg, dir)?;
        let marker = dir.join(INCOMPLETE_MARKER);
        fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    Ok(outcome)
}

pub fn run_pipeline(
    manifest: impl AsRef<Path>,
    arch: Arch,
    cfg: &PipelineConfig,
    out_dir: Option<PathBuf>,
) -> Result<PipelineOutcome> {
    let dataset = DatasetManifest::load(manifest)?.load_dataset()?;
    run_pipeline_on(&dataset, arch, cfg, out_dir.as_deref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_world, OracleSpec};

    fn small() -> (Dataset, PipelineConfig) {
        let world = generate_world(&OracleSpec {
            dim: 8,
            n: 200,
            ..OracleSpec::default()
        })
        .unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.aligner.lr = 1e-3;
        cfg.aligner.max_epochs = 4;
        cfg.task.max_epochs = 4;
        (world.dataset().unwrap(), cfg)
    }

    #[test]
    fn same_inputs_same_artifacts() {
        let (ds, cfg) = small();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_pipeline_on(&ds, Arch::Ae, &cfg, Some(a.path())).unwrap();
        run_pipeline_on(&ds, Arch::Ae, &cfg, Some(b.path())).unwrap();
        for f in [ALIGNER_CHECKPOINT, HEAD_CHECKPOINT, EVAL_REPORT, CONFIG_FILE] {
            assert_eq!(
                fs::read(a.path().join(f)).unwrap(),
                fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
        assert!(!a.path().join(INCOMPLETE_MARKER).exists());
    }

    #[test]
    fn overlap_is_rejected_unless_allowed() {
        let (mut ds, cfg) = small();
        let leaked = ds.parallel.source().select_rows(&[0, 1]);
        let mut rows = ds.task_train.embeddings().clone();
        for c in 0..rows.cols() {
            rows.set(0, c, leaked.get(0, c));
        }
        ds.task_train = ds.task_train.with_embeddings(rows).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let err = run_pipeline_on(&ds, Arch::Fc, &cfg, Some(dir.path())).unwrap_err();
        assert!(matches!(err, Error::Disjointness(1)));
        assert!(err.to_string().contains("unseen"));
        assert!(dir.path().join(INCOMPLETE_MARKER).exists());

        let allowed = PipelineConfig {
            allow_shared: true,
            ..cfg
        };
        run_pipeline_on(&ds, Arch::Fc, &allowed, None).unwrap();
    }

    #[test]
    fn data_share_mode_completes() {
        let (ds, cfg) = small();
        let shared = PipelineConfig {
            data_share: true,
            ..cfg
        };
        let out = run_pipeline_on(&ds, Arch::Fc, &shared, None).unwrap();
        assert!(out.eval.data_share);
        assert_eq!(out.eval.n_test, ds.task_test.len());
    }

    #[test]
    fn fingerprint_tracks_config() {
        let cfg = PipelineConfig::default();
        let mut other = cfg.clone();
        other.task.seed = 1;
        assert_eq!(cfg.fingerprint(Arch::Fc).unwrap(), cfg.fingerprint(Arch::Fc).unwrap());
        assert_ne!(cfg.fingerprint(Arch::Fc).unwrap(), cfg.fingerprint(Arch::Ae).unwrap());
        assert_ne!(cfg.fingerprint(Arch::Fc).unwrap(), other.fingerprint(Arch::Fc).unwrap());
    }

    #[test]
    fn head_arch_is_not_an_aligner() {
        let (ds, cfg) = small();
        assert!(run_pipeline_on(&ds, Arch::Head, &cfg, None).is_err());
    }
}
