use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{fnv1a64, Matrix, RngStream};

pub type EmbeddingMatrix = Matrix;

/// Row-paired source and target embeddings: row `i` of each side encodes
/// the same sentence meaning.
#[derive(Clone, Debug, PartialEq)]
pub struct ParallelEmbeddingSet {
    source: EmbeddingMatrix,
    target: EmbeddingMatrix,
}

impl ParallelEmbeddingSet {
    pub fn new(source: EmbeddingMatrix, target: EmbeddingMatrix) -> Result<Self> {
        if source.shape() != target.shape() {
            return Err(Error::Dimension {
                op: "parallel_set",
                left: source.shape(),
                right: target.shape(),
            });
        }
        Ok(Self { source, target })
    }

    pub fn source(&self) -> &EmbeddingMatrix {
        &self.source
    }

    pub fn target(&self) -> &EmbeddingMatrix {
        &self.target
    }

    pub fn len(&self) -> usize {
        self.source.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.source.cols()
    }

    /// The same pairs with source and target roles exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            source: self.target.clone(),
            target: self.source.clone(),
        }
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            source: self.source.select_rows(indices),
            target: self.target.select_rows(indices),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledEmbeddingSet {
    embeddings: EmbeddingMatrix,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledEmbeddingSet {
    pub fn new(embeddings: EmbeddingMatrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.len() != embeddings.rows() {
            return Err(Error::Data(format!(
                "{} labels for {} embedding rows",
                labels.len(),
                embeddings.rows()
            )));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::Data(format!(
                "label {y} at row {i} is out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            embeddings,
            labels,
            num_classes,
        })
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            embeddings: self.embeddings.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Same labels, different embeddings (e.g. after passing through an
    /// aligner).
    pub fn with_embeddings(&self, embeddings: EmbeddingMatrix) -> Result<Self> {
        Self::new(embeddings, self.labels.clone(), self.num_classes)
    }
}

/// On-disk label file: `{"num_classes": C, "labels": [..]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelFile {
    pub num_classes: usize,
    pub labels: Vec<usize>,
}

pub fn save_labels(labels: &[usize], num_classes: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = LabelFile {
        num_classes,
        labels: labels.to_vec(),
    };
    fs::write(path, serde_json::to_vec(&file)?).map_err(|e| Error::io(path, e))
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let file: LabelFile = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if let Some(&y) = file.labels.iter().find(|&&y| y >= file.num_classes) {
        return Err(Error::Data(format!(
            "{}: label {y} out of range for {} classes",
            path.display(),
            file.num_classes
        )));
    }
    Ok(file)
}

/// Shuffled train/validation index partition. The validation part holds
/// `round(n·fraction)` indices, at least 1 and at most `n − 1`.
pub fn split_indices(
    n: usize,
    val_fraction: f64,
    rng: &mut RngStream,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "validation fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::Data(format!(
            "cannot split {n} example(s) into train and validation"
        )));
    }
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let perm = rng.permutation(n);
    let (val, train) = perm.split_at(n_val);
    Ok((train.to_vec(), val.to_vec()))
}

pub fn split_parallel(
    set: &ParallelEmbeddingSet,
    val_fraction: f64,
    rng: &mut RngStream,
) -> Result<(ParallelEmbeddingSet, ParallelEmbeddingSet)> {
    let (tr, va) = split_indices(set.len(), val_fraction, rng)?;
    Ok((set.select(&tr), set.select(&va)))
}

pub fn split_labeled(
    set: &LabeledEmbeddingSet,
    val_fraction: f64,
    rng: &mut RngStream,
) -> Result<(LabeledEmbeddingSet, LabeledEmbeddingSet)> {
    let (tr, va) = split_indices(set.len(), val_fraction, rng)?;
    Ok((set.select(&tr), set.select(&va)))
}

/// Mini-batch index lists for one epoch. Order is a fresh permutation drawn
/// from `(seed, label, epoch)`; the last batch may be short.
pub fn batch_indices(
    n: usize,
    batch_size: usize,
    seed: u64,
    label: &str,
    epoch: usize,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Parameter("batch size must be at least 1".into()));
    }
    if n == 0 {
        return Err(Error::Data("cannot iterate batches over an empty set".into()));
    }
    let mut rng = RngStream::new(seed, format!("{label}/epoch-{epoch}"));
    let perm = rng.permutation(n);
    Ok(perm.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParallelSide {
    Source,
    Target,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedRow {
    pub side: ParallelSide,
    pub parallel_index: usize,
    pub task_index: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisjointReport {
    pub violations: Vec<SharedRow>,
}

impl DisjointReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn row_bytes(row: &[f32]) -> Vec<u8> {
    row.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Finds task rows whose exact bytes also occur on either side of the
/// parallel corpus. Rows are bucketed by FNV-1a hash and confirmed by a
/// byte comparison, so there are neither false negatives nor false
/// positives.
pub fn check_disjoint(
    parallel: &ParallelEmbeddingSet,
    task: &LabeledEmbeddingSet,
) -> Result<DisjointReport> {
    if parallel.dim() != task.dim() {
        return Err(Error::Dimension {
            op: "check_disjoint",
            left: parallel.source().shape(),
            right: task.embeddings().shape(),
        });
    }
    let mut index: HashMap<u64, Vec<(ParallelSide, usize)>> = HashMap::new();
    for (side, m) in [
        (ParallelSide::Source, parallel.source()),
        (ParallelSide::Target, parallel.target()),
    ] {
        for (i, row) in m.iter_rows().enumerate() {
            index
                .entry(fnv1a64(&row_bytes(row)))
                .or_default()
                .push((side, i));
        }
    }
    let mut violations = Vec::new();
    for (t, row) in task.embeddings().iter_rows().enumerate() {
        let bytes = row_bytes(row);
        if let Some(hits) = index.get(&fnv1a64(&bytes)) {
            for &(side, p) in hits {
                let other = match side {
                    ParallelSide::Source => parallel.source().row(p),
                    ParallelSide::Target => parallel.target().row(p),
                };
                if row_bytes(other) == bytes {
                    violations.push(SharedRow {
                        side,
                        parallel_index: p,
                        task_index: t,
                    });
                }
            }
        }
    }
    Ok(DisjointReport { violations })
}
