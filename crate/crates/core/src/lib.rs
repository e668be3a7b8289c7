//! Learned embedding aligners between two sentence-embedding spaces.
//!
//! A small network maps embeddings of one language onto the embedding space
//! of another, so a classification head trained on plentiful source-language
//! data can serve target-language inputs (and, in reverse, target inputs can
//! be fed to a source-language head). Everything runs on the CPU in `f32`
//! with `f64` accumulation and is reproducible from a seed.

pub mod data;
pub mod error;
pub mod eval;
pub mod models;
pub mod numkernel;
pub mod pipeline;
pub mod synth;

pub use data::{Dataset, DatasetManifest, LabeledEmbeddingSet, ParallelEmbeddingSet};
pub use error::{Error, Result};
pub use eval::{CosineReport, F1Score};
pub use models::{Aligner, Arch, Checkpoint, Model, TaskHead};
pub use numkernel::{Matrix, RngStream};
pub use pipeline::{Direction, PipelineConfig, TrainConfig, TrainReport};
pub use synth::{OracleSpec, TransformKind, World};
