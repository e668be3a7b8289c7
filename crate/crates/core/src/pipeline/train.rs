use std::collections::BTreeMap;
use std::time::Instant;

use super::config::{Direction, EpochRecord, StopReason, TrainConfig, TrainReport};
use crate::data::{batch_indices, split_indices, LabeledEmbeddingSet, ParallelEmbeddingSet};
use crate::error::{Error, Result};
use crate::eval::accuracy;
use crate::models::{Aligner, Arch, TaskHead};
use crate::numkernel::{
    mse_loss, row_nll, softmax_cross_entropy, squared_error_sum, AdamW, AdamWConfig, Matrix,
    Mode, Param, RngStream,
};

/// Rows per chunk when evaluating a whole set; results do not depend on it.
const EVAL_CHUNK: usize = 512;

fn optimizer(cfg: &TrainConfig) -> AdamW {
    AdamW::new(AdamWConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    })
}

fn step(opt: &mut AdamW, params: &mut [Param<'_>], epoch: usize) -> Result<()> {
    opt.step(params).map_err(|e| match e {
        Error::State(msg) => Error::NonFinite {
            epoch,
            location: msg,
        },
        other => other,
    })
}

fn check_loss(loss: f64, epoch: usize, what: &str) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            epoch,
            location: format!("{what} is {loss}"),
        })
    }
}

fn chunks(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n)
        .step_by(EVAL_CHUNK)
        .map(move |s| (s..(s + EVAL_CHUNK).min(n)).collect())
}

/// Mean squared error of `f(inputs)` against `targets` over all elements.
pub(crate) fn mse_over(
    f: impl Fn(&Matrix) -> Result<Matrix>,
    inputs: &Matrix,
    targets: &Matrix,
) -> Result<f64> {
    let mut sum = 0.0;
    for idx in chunks(inputs.rows()) {
        sum += squared_error_sum(&f(&inputs.select_rows(&idx))?, &targets.select_rows(&idx))?;
    }
    Ok(sum / (inputs.rows() * inputs.cols()) as f64)
}

fn xent_over(
    f: impl Fn(&Matrix) -> Result<Matrix>,
    set: &LabeledEmbeddingSet,
) -> Result<(f64, Vec<usize>)> {
    let mut total = 0.0;
    let mut preds = Vec::with_capacity(set.len());
    for idx in chunks(set.len()) {
        let logits = f(&set.embeddings().select_rows(&idx))?;
        let labels: Vec<usize> = idx.iter().map(|&i| set.labels()[i]).collect();
        total += row_nll(&logits, &labels)?.iter().sum::<f64>();
        preds.extend(argmax_rows(&logits));
    }
    Ok((total / set.len() as f64, preds))
}

fn argmax_rows(logits: &Matrix) -> Vec<usize> {
    logits
        .iter_rows()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f32::NEG_INFINITY), |best, (i, &v)| {
                    if v > best.1 {
                        (i, v)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}

/// Early-stopping driver shared by both stages. Runs epochs until the
/// validation loss has failed to improve for `patience` consecutive epochs
/// or `max_epochs` is reached, and returns the best-epoch state.
fn fit<S: Clone>(
    stage: &str,
    cfg: &TrainConfig,
    state: &mut S,
    mut run_epoch: impl FnMut(&mut S, usize) -> Result<f64>,
    validate: impl Fn(&S) -> Result<f64>,
) -> Result<(S, TrainReport)> {
    let started = Instant::now();
    let mut best = state.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        let train_loss = run_epoch(state, epoch)?;
        let val_loss = validate(state)?;
        check_loss(val_loss, epoch, "validation loss")?;
        log::debug!("{stage} epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best = state.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stop_reason = StopReason::Patience;
                break;
            }
        }
    }
    let report = TrainReport {
        stage: stage.to_string(),
        epochs,
        best_epoch,
        best_val_loss: best_val,
        stop_reason,
        wall_time_secs: started.elapsed().as_secs_f64(),
        final_metrics: BTreeMap::new(),
    };
    Ok((best, report))
}

/// Training examples for the aligner: every `(source → target)` pair plus,
/// with consistency pairs on, every `(target → target)` pair.
fn aligner_examples(set: &ParallelEmbeddingSet, consistency: bool) -> Result<(Matrix, Matrix)> {
    if consistency {
        Ok((
            Matrix::vstack(&[set.source(), set.target()])?,
            Matrix::vstack(&[set.target(), set.target()])?,
        ))
    } else {
        Ok((set.source().clone(), set.target().clone()))
    }
}

/// Deterministic validation split of the parallel corpus used by
/// [`train_aligner`], returned in the aligner's own orientation (reverse
/// runs see the swapped corpus).
pub fn aligner_validation_split(
    parallel: &ParallelEmbeddingSet,
    cfg: &TrainConfig,
) -> Result<(ParallelEmbeddingSet, ParallelEmbeddingSet)> {
    let oriented = match cfg.direction {
        Direction::Forward => parallel.clone(),
        Direction::Reverse => parallel.swapped(),
    };
    let (tr, va) = split_indices(
        oriented.len(),
        cfg.val_fraction,
        &mut RngStream::new(cfg.seed, "aligner/split"),
    )?;
    Ok((oriented.select(&tr), oriented.select(&va)))
}

/// Step 2: fit an aligner with MSE so that `A(source) ≈ target`.
///
/// A reverse-direction config trains on the swapped corpus, which makes it
/// the same computation as a forward run with source and target exchanged.
pub fn train_aligner(
    parallel: &ParallelEmbeddingSet,
    arch: Arch,
    cfg: &TrainConfig,
) -> Result<(Aligner, TrainReport)> {
    cfg.validate()?;
    if parallel.len() < 2 {
        return Err(Error::Data(format!(
            "aligner training needs at least 2 parallel pairs, got {}",
            parallel.len()
        )));
    }
    let (train, val) = aligner_validation_split(parallel, cfg)?;
    let (train_x, train_y) = aligner_examples(&train, cfg.consistency_pairs)?;
    let (val_x, val_y) = aligner_examples(&val, cfg.consistency_pairs)?;

    let mut aligner = Aligner::new(arch, parallel.dim(), &mut RngStream::new(cfg.seed, "aligner/init"))?;
    let validate = |a: &Aligner| mse_over(|x| a.infer(x), &val_x, &val_y);

    if arch == Arch::Identity {
        let val_loss = validate(&aligner)?;
        let report = TrainReport {
            stage: "step2".into(),
            epochs: Vec::new(),
            best_epoch: 0,
            best_val_loss: val_loss,
            stop_reason: StopReason::NoTrainableParameters,
            wall_time_secs: 0.0,
            final_metrics: BTreeMap::from([("val_mse".to_string(), val_loss)]),
        };
        return Ok((aligner, report));
    }

    let mut opt = optimizer(cfg);
    let mut dropout_rng = RngStream::new(cfg.seed, "aligner/dropout");
    let run_epoch = |a: &mut Aligner, epoch: usize| -> Result<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for batch in batch_indices(train_x.rows(), cfg.batch_size, cfg.seed, "aligner/shuffle", epoch)? {
            let x = train_x.select_rows(&batch);
            let y = train_y.select_rows(&batch);
            let net = a.network_mut();
            net.zero_grad();
            let pred = net.forward(&x, Mode::Train, &mut dropout_rng)?;
            let (loss, grad) = mse_loss(&pred, &y)?;
            check_loss(loss, epoch, "training loss")?;
            net.backward(&grad)?;
            step(&mut opt, &mut net.params(""), epoch)?;
            sum += loss * y.data().len() as f64;
            count += y.data().len();
        }
        Ok(sum / count as f64)
    };
    let (mut best, mut report) = fit("step2", cfg, &mut aligner, run_epoch, validate)?;
    best.network_mut().clear_caches();
    report
        .final_metrics
        .insert("val_mse".into(), report.best_val_loss);
    let cross_only = mse_over(|x| best.infer(x), val.source(), val.target())?;
    report.final_metrics.insert("val_mse_alignment_pairs".into(), cross_only);
    Ok((best, report))
}

#[derive(Clone)]
struct TaskState {
    aligner: Option<Aligner>,
    head: TaskHead,
}

/// Step 3: train a freshly initialized head on (aligned) task embeddings
/// with softmax cross-entropy.
///
/// With `freeze_aligner_in_step3` the aligner runs in eval mode and is
/// never updated. Otherwise it is fine-tuned jointly with the head and
/// `aligner` is overwritten with its best-epoch weights.
pub fn train_task(
    task: &LabeledEmbeddingSet,
    aligner: Option<&mut Aligner>,
    cfg: &TrainConfig,
) -> Result<(TaskHead, TrainReport)> {
    cfg.validate()?;
    if let Some(a) = aligner.as_deref() {
        if a.dim() != task.dim() {
            return Err(Error::Dimension {
                op: "train_task",
                left: task.embeddings().shape(),
                right: (a.dim(), a.dim()),
            });
        }
    }
    let (tr, va) = split_indices(
        task.len(),
        cfg.val_fraction,
        &mut RngStream::new(cfg.seed, "task/split"),
    )?;
    let (mut train, mut val) = (task.select(&tr), task.select(&va));

    let head = TaskHead::new(
        task.dim(),
        task.num_classes(),
        cfg.head_dropout as f32,
        &mut RngStream::new(cfg.seed, "task/init"),
    )?;

    let frozen = cfg.freeze_aligner_in_step3 || aligner.is_none();
    let mut state = TaskState {
        aligner: None,
        head,
    };
    if frozen {
        if let Some(a) = aligner.as_deref() {
            train = train.with_embeddings(a.infer(train.embeddings())?)?;
            val = val.with_embeddings(a.infer(val.embeddings())?)?;
        }
    } else {
        state.aligner = aligner.as_deref().cloned();
    }

    let mut opt = optimizer(cfg);
    let mut head_rng = RngStream::new(cfg.seed, "task/dropout");
    let mut aligner_rng = RngStream::new(cfg.seed, "task/aligner-dropout");
    let run_epoch = |s: &mut TaskState, epoch: usize| -> Result<f64> {
        let mut sum = 0.0;
        for batch in batch_indices(train.len(), cfg.batch_size, cfg.seed, "task/shuffle", epoch)? {
            let mut x = train.embeddings().select_rows(&batch);
            let labels: Vec<usize> = batch.iter().map(|&i| train.labels()[i]).collect();
            if let Some(a) = s.aligner.as_mut() {
                a.network_mut().zero_grad();
                x = a.forward(&x, Mode::Train, &mut aligner_rng)?;
            }
            s.head.network_mut().zero_grad();
            let logits = s.head.forward(&x, Mode::Train, &mut head_rng)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &labels)?;
            check_loss(loss, epoch, "training loss")?;
            let g = s.head.network_mut().backward(&grad)?;
            let mut params = s.head.network_mut().params("head.");
            if let Some(a) = s.aligner.as_mut() {
                a.network_mut().backward(&g)?;
                params.extend(a.network_mut().params("aligner."));
            }
            step(&mut opt, &mut params, epoch)?;
            sum += loss * batch.len() as f64;
        }
        Ok(sum / train.len() as f64)
    };
    let forward_eval = |s: &TaskState, x: &Matrix| -> Result<Matrix> {
        match &s.aligner {
            Some(a) => s.head.infer(&a.infer(x)?),
            None => s.head.infer(x),
        }
    };
    let validate = |s: &TaskState| Ok(xent_over(|x| forward_eval(s, x), &val)?.0);
    let (mut best, mut report) = fit("step3", cfg, &mut state, run_epoch, validate)?;

    best.head.network_mut().clear_caches();
    let (_, val_pred) = xent_over(|x| forward_eval(&best, x), &val)?;
    let (train_loss, train_pred) = xent_over(|x| forward_eval(&best, x), &train)?;
    report.final_metrics.extend([
        ("val_xent".to_string(), report.best_val_loss),
        ("val_accuracy".to_string(), accuracy(&val_pred, val.labels())?),
        ("train_xent".to_string(), train_loss),
        ("train_accuracy".to_string(), accuracy(&train_pred, train.labels())?),
    ]);
    if let (Some(mut tuned), Some(a)) = (best.aligner.take(), aligner) {
        tuned.network_mut().clear_caches();
        *a = tuned;
    }
    Ok((best.head, report))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    pub logits: Matrix,
}

/// Eval-mode classification: optional aligner, then head, then argmax
/// (ties go to the lower class index).
pub fn infer(embeddings: &Matrix, aligner: Option<&Aligner>, head: &TaskHead) -> Result<Prediction> {
    let x = match aligner {
        Some(a) => a.infer(embeddings)?,
        None => embeddings.clone(),
    };
    let logits = head.infer(&x)?;
    Ok(Prediction {
        labels: argmax_rows(&logits),
        logits,
    })
}
