//! Synthetic bilingual embeddings with a known ground truth.
//!
//! Class centers sit on a sphere of radius `separation`. A source embedding
//! is its class center plus unit-variance Gaussian noise; its target
//! counterpart is `G(source) + N(0, σ²)` with `G(x) = Qx` or `tanh(Qx)` for a
//! random orthogonal `Q`. Labels therefore survive the transform, and a
//! classifier fit on one side is meaningful on the other only after
//! alignment.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    save_embeddings, save_labels, Dataset, DatasetManifest, LabeledEmbeddingSet,
    ParallelEmbeddingSet,
};
use crate::error::{Error, Result};
use crate::numkernel::{Matrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    OrthogonalLinear,
    OrthogonalTanh,
}

impl std::fmt::Display for TransformKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::OrthogonalLinear => "orthogonal-linear",
            Self::OrthogonalTanh => "orthogonal-tanh",
        })
    }
}

impl std::str::FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "orthogonal-linear" => Ok(Self::OrthogonalLinear),
            "tanh" | "orthogonal-tanh" => Ok(Self::OrthogonalTanh),
            other => Err(Error::Parameter(format!("unknown transform kind '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub dim: usize,
    pub n: usize,
    pub classes: usize,
    pub kind: TransformKind,
    pub sigma: f64,
    pub separation: f64,
    pub seed: u64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            dim: 64,
            n: 4000,
            classes: 3,
            kind: TransformKind::OrthogonalTanh,
            sigma: 0.05,
            separation: 4.0,
            seed: 7,
        }
    }
}

impl OracleSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if self.dim < 2 {
            return bad(format!("dim must be ≥ 2, got {}", self.dim));
        }
        if self.classes < 2 {
            return bad(format!("classes must be ≥ 2, got {}", self.classes));
        }
        if self.n < self.classes {
            return bad(format!(
                "n ({}) must be at least the class count ({})",
                self.n, self.classes
            ));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be a finite value ≥ 0, got {}", self.sigma));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return bad(format!("separation must be > 0, got {}", self.separation));
        }
        Ok(())
    }
}

/// Ground truth of a generated world. Only tests and diagnostics should
/// look at this.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub kind: TransformKind,
    /// Row-major `d × d` orthogonal matrix.
    pub q: Vec<Vec<f32>>,
    /// Row-major `C × d` class centers.
    pub centers: Vec<Vec<f32>>,
}

impl GroundTruth {
    pub fn q_matrix(&self) -> Matrix {
        Matrix::from_rows(&self.q)
    }

    pub fn centers_matrix(&self) -> Matrix {
        Matrix::from_rows(&self.centers)
    }

    /// The noise-free transform `G` applied row-wise.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let q = self.q_matrix();
        let mut out = Matrix::zeros(x.rows(), q.rows());
        if x.cols() != q.cols() {
            return Err(Error::Dimension {
                op: "ground_truth_apply",
                left: x.shape(),
                right: q.shape(),
            });
        }
        for r in 0..x.rows() {
            let row = transform_row(&q, x.row(r), self.kind);
            for (o, v) in out.row_mut(r).iter_mut().zip(row) {
                *o = v as f32;
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct World {
    pub spec: OracleSpec,
    pub parallel: ParallelEmbeddingSet,
    pub labels: Vec<usize>,
    pub ground_truth: GroundTruth,
}

/// Random orthogonal matrix: QR of a standard Gaussian matrix via modified
/// Gram-Schmidt in `f64`, which yields `diag(R) > 0` directly. At `d = 1`
/// the result is normalized to `[[1]]`.
pub fn gen_orthogonal(d: usize, rng: &mut RngStream) -> Matrix {
    if d == 1 {
        return Matrix::identity(1);
    }
    let mut cols: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..d).map(|_| rng.normal()).collect())
        .collect();
    for j in 0..d {
        for k in 0..j {
            let (done, rest) = cols.split_at_mut(j);
            let qk = &done[k];
            let proj: f64 = qk.iter().zip(&rest[0]).map(|(a, b)| a * b).sum();
            for (v, q) in rest[0].iter_mut().zip(qk) {
                *v -= proj * q;
            }
        }
        let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        cols[j].iter_mut().for_each(|v| *v /= norm);
    }
    let mut q = Matrix::zeros(d, d);
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            q.set(i, j, v as f32);
        }
    }
    q
}

fn transform_row(q: &Matrix, x: &[f32], kind: TransformKind) -> Vec<f64> {
    q.iter_rows()
        .map(|qr| {
            let v: f64 = qr
                .iter()
                .zip(x)
                .map(|(&a, &b)| f64::from(a) * f64::from(b))
                .sum();
            match kind {
                TransformKind::OrthogonalLinear => v,
                TransformKind::OrthogonalTanh => v.tanh(),
            }
        })
        .collect()
}

pub fn generate_world(spec: &OracleSpec) -> Result<World> {
    spec.validate()?;
    let OracleSpec {
        dim: d,
        n,
        classes,
        ..
    } = *spec;
    let root = RngStream::new(spec.seed, "synth");

    let q = gen_orthogonal(d, &mut root.substream("orthogonal"));

    let mut rng = root.substream("centers");
    let mut centers = Matrix::zeros(classes, d);
    for c in 0..classes {
        let raw: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (o, v) in centers.row_mut(c).iter_mut().zip(&raw) {
            *o = (v / norm * spec.separation) as f32;
        }
    }

    let mut rng = root.substream("labels");
    let labels: Vec<usize> = (0..n).map(|_| rng.below(classes)).collect();

    let mut rng = root.substream("source");
    let mut source = Matrix::zeros(n, d);
    for (i, &y) in labels.iter().enumerate() {
        let center = centers.row(y).to_vec();
        for (o, c) in source.row_mut(i).iter_mut().zip(center) {
            *o = (f64::from(c) + rng.normal()) as f32;
        }
    }

    let mut rng = root.substream("target");
    let mut target = Matrix::zeros(n, d);
    for i in 0..n {
        let g = transform_row(&q, source.row(i), spec.kind);
        for (o, v) in target.row_mut(i).iter_mut().zip(g) {
            let noise = if spec.sigma > 0.0 {
                spec.sigma * rng.normal()
            } else {
                0.0
            };
            *o = (v + noise) as f32;
        }
    }

    let to_rows = |m: &Matrix| m.iter_rows().map(<[f32]>::to_vec).collect();
    Ok(World {
        spec: *spec,
        ground_truth: GroundTruth {
            kind: spec.kind,
            q: to_rows(&q),
            centers: to_rows(&centers),
        },
        parallel: ParallelEmbeddingSet::new(source, target)?,
        labels,
    })
}

/// How the rows of a world are divided among dataset roles: the first 40%
/// form the aligner's parallel corpus, the next 40% the source-language
/// task-tuning set, the rest the target-language test set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RolePartition {
    pub aligner: std::ops::Range<usize>,
    pub task_train: std::ops::Range<usize>,
    pub task_test: std::ops::Range<usize>,
}

impl RolePartition {
    pub fn for_rows(n: usize) -> Result<Self> {
        let a = n * 2 / 5;
        let t = n * 2 / 5;
        let p = Self {
            aligner: 0..a,
            task_train: a..a + t,
            task_test: a + t..n,
        };
        if p.aligner.len() < 2 || p.task_train.len() < 2 || p.task_test.is_empty() {
            return Err(Error::Parameter(format!(
                "{n} rows are too few to form aligner, task-train and test roles"
            )));
        }
        Ok(p)
    }
}

impl World {
    /// Splits the world into the roles a pipeline run consumes.
    pub fn dataset(&self) -> Result<Dataset> {
        let part = RolePartition::for_rows(self.parallel.len())?;
        let idx = |r: &std::ops::Range<usize>| r.clone().collect::<Vec<_>>();
        let (ai, ti, ei) = (idx(&part.aligner), idx(&part.task_train), idx(&part.task_test));
        let labels = |ix: &[usize]| ix.iter().map(|&i| self.labels[i]).collect::<Vec<_>>();
        let c = self.spec.classes;
        Ok(Dataset {
            parallel: self.parallel.select(&ai),
            aligner_labels: Some(labels(&ai)),
            task_train: LabeledEmbeddingSet::new(
                self.parallel.source().select_rows(&ti),
                labels(&ti),
                c,
            )?,
            task_test: LabeledEmbeddingSet::new(
                self.parallel.target().select_rows(&ei),
                labels(&ei),
                c,
            )?,
            num_classes: c,
            share_allowed: false,
        })
    }

    /// Target-language embeddings of the task-train rows, i.e. what a
    /// natively target-language training set would look like.
    pub fn native_task_train(&self) -> Result<LabeledEmbeddingSet> {
        let part = RolePartition::for_rows(self.parallel.len())?;
        let ti: Vec<usize> = part.task_train.collect();
        LabeledEmbeddingSet::new(
            self.parallel.target().select_rows(&ti),
            ti.iter().map(|&i| self.labels[i]).collect(),
            self.spec.classes,
        )
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

#[derive(Serialize)]
struct GroundTruthSidecar<'a> {
    spec: &'a OracleSpec,
    #[serde(flatten)]
    truth: &'a GroundTruth,
}

/// Writes the world as embedding and label files plus `manifest.json` and
/// `ground_truth.json` into `dir`. Returns the manifest path.
pub fn write_world(world: &World, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ds = world.dataset()?;
    let c = ds.num_classes;

    save_embeddings(ds.parallel.source(), dir.join("aligner_src.embd"))?;
    save_embeddings(ds.parallel.target(), dir.join("aligner_tgt.embd"))?;
    save_labels(
        ds.aligner_labels.as_deref().unwrap_or_default(),
        c,
        dir.join("aligner.labels.json"),
    )?;
    save_embeddings(ds.task_train.embeddings(), dir.join("task_train.embd"))?;
    save_labels(ds.task_train.labels(), c, dir.join("task_train.labels.json"))?;
    save_embeddings(ds.task_test.embeddings(), dir.join("task_test.embd"))?;
    save_labels(ds.task_test.labels(), c, dir.join("task_test.labels.json"))?;

    let mut manifest = DatasetManifest::new(
        c,
        "aligner_src.embd",
        "aligner_tgt.embd",
        "task_train.embd",
        "task_train.labels.json",
        "task_test.embd",
        "task_test.labels.json",
    );
    manifest.aligner_labels = Some("aligner.labels.json".into());
    let manifest_path = dir.join(MANIFEST_FILE);
    manifest.save(&manifest_path)?;

    let sidecar = GroundTruthSidecar {
        spec: &world.spec,
        truth: &world.ground_truth,
    };
    let gt_path = dir.join(GROUND_TRUTH_FILE);
    fs::write(&gt_path, serde_json::to_vec(&sidecar)?).map_err(|e| Error::io(&gt_path, e))?;
    Ok(manifest_path)
}
