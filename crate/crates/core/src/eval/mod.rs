//! Metrics, the cosine diagnostic, and the ablation suite.

mod ablation;
mod metrics;

pub use ablation::{ablation_from_manifest, ablation_suite, AblationReport, AblationRow, DataMode};
pub use metrics::{accuracy, cosine_report, f1, CosineReport, F1Scheme, F1Score, PairingStats};
