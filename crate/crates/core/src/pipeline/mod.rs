//! Training stages and end-to-end runs.
//!
//! Step 2 fits an aligner on the parallel corpus. Step 3 trains a fresh
//! task head on source-language data passed through the (frozen) aligner.
//! Target-language test inputs are classified by aligner then head.

mod config;
mod run;
mod train;

pub use config::{Direction, EpochRecord, StopReason, TrainConfig, TrainReport};
pub use run::{
    enforce_unseen, finish_pipeline, run_pipeline, run_pipeline_on, train_step2, write_outcome,
    AlignerStage, EvalReport, PipelineConfig, PipelineOutcome, ALIGNER_CHECKPOINT, CONFIG_FILE,
    EVAL_REPORT, HEAD_CHECKPOINT, INCOMPLETE_MARKER, STEP2_REPORT, STEP3_REPORT,
};
pub use train::{aligner_validation_split, infer, train_aligner, train_task, Prediction};
