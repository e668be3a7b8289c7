use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetManifest};
use crate::error::{Error, Result};
use crate::models::Arch;
use crate::pipeline::{finish_pipeline, train_step2, PipelineConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataMode {
    /// Aligner corpus and task-tuning data are separate sets.
    Disjoint,
    /// The head is tuned on the aligner corpus itself.
    Shared,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub aligner: Arch,
    pub data: DataMode,
    pub accuracy: f64,
    pub f1: f64,
    pub fingerprint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub arch: Arch,
    pub rows: Vec<AblationRow>,
    /// acc(arch, disjoint) − acc(identity, disjoint).
    pub omission_gap: f64,
    /// |acc(arch, shared) − acc(arch, disjoint)|.
    pub share_gap: f64,
}

impl AblationReport {
    pub fn row(&self, aligner: Arch, data: DataMode) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.aligner == aligner && r.data == data)
    }
}

/// Runs `{arch, identity} × {disjoint, shared}` with identical seeds.
///
/// Step 2 does not depend on the task data, so each aligner is trained once
/// and shared by its two rows.
pub fn ablation_suite(dataset: &Dataset, arch: Arch, cfg: &PipelineConfig) -> Result<AblationReport> {
    if !matches!(arch, Arch::Fc | Arch::Ae) {
        return Err(Error::Parameter(format!(
            "ablation compares a trained aligner against identity; got '{arch}'"
        )));
    }
    let mut rows = Vec::with_capacity(4);
    for aligner in [arch, Arch::Identity] {
        let stage = train_step2(dataset, aligner, cfg)?;
        for data in [DataMode::Disjoint, DataMode::Shared] {
            let run_cfg = PipelineConfig {
                data_share: data == DataMode::Shared,
                ..cfg.clone()
            };
            let out = finish_pipeline(dataset, stage.clone(), &run_cfg)?;
            log::info!("ablation {aligner}/{data:?}: accuracy {:.4}", out.eval.accuracy);
            rows.push(AblationRow {
                aligner,
                data,
                accuracy: out.eval.accuracy,
                f1: out.eval.f1.value,
                fingerprint: out.eval.fingerprint,
            });
        }
    }
    let acc = |a, d| rows.iter().find(|r: &&AblationRow| r.aligner == a && r.data == d).map_or(f64::NAN, |r| r.accuracy);
    let omission_gap = acc(arch, DataMode::Disjoint) - acc(Arch::Identity, DataMode::Disjoint);
    let share_gap = (acc(arch, DataMode::Shared) - acc(arch, DataMode::Disjoint)).abs();
    Ok(AblationReport {
        arch,
        rows,
        omission_gap,
        share_gap,
    })
}

pub fn ablation_from_manifest(
    manifest: impl AsRef<Path>,
    arch: Arch,
    cfg: &PipelineConfig,
) -> Result<AblationReport> {
    ablation_suite(&DatasetManifest::load(manifest)?.load_dataset()?, arch, cfg)
}
