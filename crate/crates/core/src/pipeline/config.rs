use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Map source-language embeddings onto the target language.
    #[default]
    Forward,
    /// Map target-language embeddings onto the source language, so a
    /// source-trained head can classify target inputs.
    Reverse,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Reverse => "reverse",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Direction::Forward),
            "reverse" => Ok(Direction::Reverse),
            other => Err(Error::Parameter(format!("unknown direction '{other}'"))),
        }
    }
}

/// Hyperparameters for one training stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub direction: Direction,
    pub consistency_pairs: bool,
    pub freeze_aligner_in_step3: bool,
    pub weight_decay: f64,
    pub head_dropout: f64,
}

impl TrainConfig {
    /// Aligner training: AdamW at 1e-5, batch 16, MSE.
    pub fn aligner_default() -> Self {
        Self {
            lr: 1e-5,
            batch_size: 16,
            max_epochs: 200,
            patience: 10,
            val_fraction: 0.1,
            seed: 42,
            direction: Direction::Forward,
            consistency_pairs: true,
            freeze_aligner_in_step3: true,
            weight_decay: 0.01,
            head_dropout: 0.1,
        }
    }

    /// Task-head training: AdamW at 1e-4, batch 16, cross-entropy.
    pub fn task_default() -> Self {
        Self {
            lr: 1e-4,
            ..Self::aligner_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be ≥ 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be ≥ 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be ≥ 1".into());
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad(format!(
                "val_fraction must lie in (0, 1), got {}",
                self.val_fraction
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be ≥ 0, got {}", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.head_dropout) {
            return bad(format!("head_dropout must lie in [0, 1), got {}", self.head_dropout));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
    /// Nothing to optimize (identity aligner).
    NoTrainableParameters,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub stage: String,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept (0 when nothing was trained).
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
    pub wall_time_secs: f64,
    pub final_metrics: BTreeMap<String, f64>,
}
