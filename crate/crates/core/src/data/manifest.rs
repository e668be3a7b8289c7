//! JSON dataset manifest naming each file by its role. Relative paths are
//! resolved against the manifest's own directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::embfile::load_embeddings;
use super::sets::{load_labels, LabeledEmbeddingSet, ParallelEmbeddingSet};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub num_classes: usize,
    /// Permits the aligner corpus and the task-tuning data to overlap.
    #[serde(default)]
    pub share_allowed: bool,
    pub aligner_src: PathBuf,
    pub aligner_tgt: PathBuf,
    /// Class labels for the parallel rows. Needed for the data-share
    /// ablation and the native-language reference head.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aligner_labels: Option<PathBuf>,
    pub task_train: PathBuf,
    pub task_train_labels: PathBuf,
    pub task_test: PathBuf,
    pub task_test_labels: PathBuf,
    #[serde(skip)]
    base_dir: PathBuf,
}

/// Everything a manifest refers to, loaded and cross-checked.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub parallel: ParallelEmbeddingSet,
    pub aligner_labels: Option<Vec<usize>>,
    /// Source-language task data.
    pub task_train: LabeledEmbeddingSet,
    /// Target-language evaluation data.
    pub task_test: LabeledEmbeddingSet,
    pub num_classes: usize,
    pub share_allowed: bool,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.parallel.dim()
    }

    /// Source side of the parallel corpus with its labels.
    pub fn aligner_source_labeled(&self) -> Result<LabeledEmbeddingSet> {
        let labels = self.require_aligner_labels()?;
        LabeledEmbeddingSet::new(self.parallel.source().clone(), labels, self.num_classes)
    }

    /// Target side of the parallel corpus with its labels: natively
    /// target-language training data.
    pub fn aligner_target_labeled(&self) -> Result<LabeledEmbeddingSet> {
        let labels = self.require_aligner_labels()?;
        LabeledEmbeddingSet::new(self.parallel.target().clone(), labels, self.num_classes)
    }

    fn require_aligner_labels(&self) -> Result<Vec<usize>> {
        self.aligner_labels.clone().ok_or_else(|| {
            Error::Data("manifest has no aligner_labels entry".into())
        })
    }
}

impl DatasetManifest {
    pub fn new(
        num_classes: usize,
        aligner_src: impl Into<PathBuf>,
        aligner_tgt: impl Into<PathBuf>,
        task_train: impl Into<PathBuf>,
        task_train_labels: impl Into<PathBuf>,
        task_test: impl Into<PathBuf>,
        task_test_labels: impl Into<PathBuf>,
    ) -> Self {
        Self {
            version: MANIFEST_VERSION,
            num_classes,
            share_allowed: false,
            aligner_src: aligner_src.into(),
            aligner_tgt: aligner_tgt.into(),
            aligner_labels: None,
            task_train: task_train.into(),
            task_train_labels: task_train_labels.into(),
            task_test: task_test.into(),
            task_test_labels: task_test_labels.into(),
            base_dir: PathBuf::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Version {
                found: m.version,
                expected: MANIFEST_VERSION,
            });
        }
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.check_files_exist()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn set_base_dir(&mut self, dir: impl Into<PathBuf>) {
        self.base_dir = dir.into();
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn roles(&self) -> Vec<(&'static str, &Path)> {
        let mut v: Vec<(&'static str, &Path)> = vec![
            ("aligner_src", &self.aligner_src),
            ("aligner_tgt", &self.aligner_tgt),
            ("task_train", &self.task_train),
            ("task_train_labels", &self.task_train_labels),
            ("task_test", &self.task_test),
            ("task_test_labels", &self.task_test_labels),
        ];
        if let Some(p) = &self.aligner_labels {
            v.push(("aligner_labels", p));
        }
        v
    }

    fn check_files_exist(&self) -> Result<()> {
        for (role, p) in self.roles() {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(Error::io(
                    full,
                    std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        format!("file for role '{role}' not found"),
                    ),
                ));
            }
        }
        Ok(())
    }

    fn labeled(&self, emb: &Path, labels: &Path) -> Result<LabeledEmbeddingSet> {
        let m = load_embeddings(self.resolve(emb))?;
        let lf = load_labels(self.resolve(labels))?;
        if lf.num_classes != self.num_classes {
            return Err(Error::Data(format!(
                "{} declares {} classes, manifest says {}",
                labels.display(),
                lf.num_classes,
                self.num_classes
            )));
        }
        LabeledEmbeddingSet::new(m, lf.labels, self.num_classes)
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        if self.num_classes < 2 {
            return Err(Error::Data(format!(
                "manifest declares {} class(es); at least 2 are needed",
                self.num_classes
            )));
        }
        let parallel = ParallelEmbeddingSet::new(
            load_embeddings(self.resolve(&self.aligner_src))?,
            load_embeddings(self.resolve(&self.aligner_tgt))?,
        )?;
        let aligner_labels = match &self.aligner_labels {
            Some(p) => {
                let lf = load_labels(self.resolve(p))?;
                if lf.labels.len() != parallel.len() || lf.num_classes != self.num_classes {
                    return Err(Error::Data(format!(
                        "aligner labels ({} rows, {} classes) do not match the parallel corpus ({} rows, {} classes)",
                        lf.labels.len(),
                        lf.num_classes,
                        parallel.len(),
                        self.num_classes
                    )));
                }
                Some(lf.labels)
            }
            None => None,
        };
        let task_train = self.labeled(&self.task_train, &self.task_train_labels)?;
        let task_test = self.labeled(&self.task_test, &self.task_test_labels)?;
        let d = parallel.dim();
        for (role, set) in [("task_train", &task_train), ("task_test", &task_test)] {
            if set.dim() != d {
                return Err(Error::Data(format!(
                    "{role} has dimension {}, aligner corpus has {d}",
                    set.dim()
                )));
            }
        }
        Ok(Dataset {
            parallel,
            aligner_labels,
            task_train,
            task_test,
            num_classes: self.num_classes,
            share_allowed: self.share_allowed,
        })
    }
}
