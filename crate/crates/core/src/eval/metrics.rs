use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{cosine_similarity, Matrix};

pub fn accuracy(pred: &[usize], gold: &[usize]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::Dimension {
            op: "accuracy",
            left: (pred.len(), 1),
            right: (gold.len(), 1),
        });
    }
    if pred.is_empty() {
        return Err(Error::Data("accuracy of an empty prediction set".into()));
    }
    let hits = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / pred.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum F1Scheme {
    /// F1 of class 1 in a two-class problem.
    BinaryPositive,
    /// Unweighted mean of per-class F1.
    Macro,
}

impl F1Scheme {
    /// Binary-positive for two classes, macro otherwise.
    pub fn default_for(num_classes: usize) -> Self {
        if num_classes == 2 {
            F1Scheme::BinaryPositive
        } else {
            F1Scheme::Macro
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub value: f64,
    pub scheme: F1Scheme,
    /// Classes that had neither predictions nor gold instances; they count
    /// as F1 = 0.
    pub degenerate_classes: Vec<usize>,
}

fn class_f1(pred: &[usize], gold: &[usize], class: usize) -> (f64, bool) {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gold) {
        match (p == class, g == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        (0.0, true)
    } else {
        (2.0 * tp as f64 / denom as f64, false)
    }
}

pub fn f1(pred: &[usize], gold: &[usize], num_classes: usize, scheme: F1Scheme) -> Result<F1Score> {
    accuracy(pred, gold)?;
    if let Some(&y) = pred.iter().chain(gold).find(|&&y| y >= num_classes) {
        return Err(Error::Data(format!(
            "class {y} out of range for {num_classes} classes"
        )));
    }
    let classes: Vec<usize> = match scheme {
        F1Scheme::BinaryPositive => {
            if num_classes != 2 {
                return Err(Error::Parameter(format!(
                    "binary-positive F1 needs exactly 2 classes, got {num_classes}"
                )));
            }
            vec![1]
        }
        F1Scheme::Macro => (0..num_classes).collect(),
    };
    let mut degenerate = Vec::new();
    let mut total = 0.0;
    for &c in &classes {
        let (v, empty) = class_f1(pred, gold, c);
        if empty {
            log::warn!("class {c} has no predicted and no gold instances; its F1 is taken as 0");
            degenerate.push(c);
        }
        total += v;
    }
    Ok(F1Score {
        value: total / classes.len() as f64,
        scheme,
        degenerate_classes: degenerate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingStats {
    pub mean: f64,
    pub std: f64,
}

/// Row-wise cosine similarities between the three views of one set of
/// sentences: source embeddings, target embeddings, and aligned source
/// embeddings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineReport {
    pub n: usize,
    pub tgt_vs_src: PairingStats,
    pub src_vs_aligned: PairingStats,
    pub tgt_vs_aligned: PairingStats,
    /// Rows where some vector was exactly zero (cosine taken as 0).
    pub zero_vector_rows: usize,
}

fn pairing(a: &Matrix, b: &Matrix, zero_rows: &mut [bool]) -> Result<PairingStats> {
    let values = a
        .iter_rows()
        .zip(b.iter_rows())
        .zip(zero_rows.iter_mut())
        .map(|((x, y), z)| {
            let c = cosine_similarity(x, y)?;
            *z |= c.zero_vector;
            Ok(c.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(PairingStats {
        mean,
        std: var.sqrt(),
    })
}

pub fn cosine_report(src: &Matrix, tgt: &Matrix, aligned: &Matrix) -> Result<CosineReport> {
    src.ensure_same_shape(tgt, "cosine_report")?;
    src.ensure_same_shape(aligned, "cosine_report")?;
    if src.rows() == 0 {
        return Err(Error::Data("cosine report over zero rows".into()));
    }
    let mut zero = vec![false; src.rows()];
    let report = CosineReport {
        n: src.rows(),
        tgt_vs_src: pairing(tgt, src, &mut zero)?,
        src_vs_aligned: pairing(src, aligned, &mut zero)?,
        tgt_vs_aligned: pairing(tgt, aligned, &mut zero)?,
        zero_vector_rows: zero.iter().filter(|&&z| z).count(),
    };
    if report.zero_vector_rows > 0 {
        log::warn!(
            "{} row(s) contained a zero vector; their cosine was taken as 0",
            report.zero_vector_rows
        );
    }
    Ok(report)
}
