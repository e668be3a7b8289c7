//! Embedding datasets: file formats, splits, batching, and the rule that
//! task-tuning rows stay unseen by the aligner.

mod embfile;
mod manifest;
mod sets;

pub use embfile::{
    decode_embeddings, encode_embeddings, load_embeddings, save_embeddings, EMBEDDING_HEADER_LEN,
    EMBEDDING_MAGIC, EMBEDDING_VERSION,
};
pub use manifest::{Dataset, DatasetManifest, MANIFEST_VERSION};
pub use sets::{
    batch_indices, check_disjoint, load_labels, save_labels, split_indices, split_labeled,
    split_parallel, DisjointReport, EmbeddingMatrix, LabelFile, LabeledEmbeddingSet,
    ParallelEmbeddingSet, ParallelSide, SharedRow,
};
