//! Layering of defaults, config file, environment and flags.

use std::fs;
use std::path::{Path, PathBuf};

use embedalign::models::Arch;
use embedalign::pipeline::{PipelineConfig, TrainConfig};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::args::StageFlags;
use crate::CliError;

pub const SEED_ENV: &str = "EMBEDALIGN_SEED";

/// Seed from `EMBEDALIGN_SEED`, if set.
pub fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// A config file as raw JSON, plus the fields the CLI itself records.
pub struct ConfigFile {
    raw: Value,
    path: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self {
                raw: Value::Object(Default::default()),
                path: None,
            });
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
        let raw: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: not valid JSON: {e}", path.display())))?;
        if !raw.is_object() {
            return Err(CliError::Usage(format!("{}: expected a JSON object", path.display())));
        }
        Ok(Self {
            raw,
            path: Some(path.to_path_buf()),
        })
    }

    fn get(&self, key: &str) -> Option<&Value> {
        self.raw.get(key)
    }

    /// `defaults` overlaid with the file's values.
    pub fn overlay<T: Serialize + DeserializeOwned>(&self, defaults: &T) -> Result<T, CliError> {
        let mut v = serde_json::to_value(defaults).map_err(|e| CliError::Run(e.to_string()))?;
        merge(&mut v, &self.raw);
        serde_json::from_value(v).map_err(|e| {
            CliError::Usage(format!(
                "{}: {e}",
                self.path.as_deref().unwrap_or(Path::new("config")).display()
            ))
        })
    }

    pub fn flag(&self, key: &str) -> bool {
        self.get(key).and_then(Value::as_bool).unwrap_or(false)
    }

    /// A path entry, relative to the config file's directory.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let p = PathBuf::from(self.get(key)?.as_str()?);
        Some(match (&self.path, p.is_relative()) {
            (Some(cfg), true) => cfg.parent().unwrap_or(Path::new(".")).join(p),
            _ => p,
        })
    }

    pub fn has_seed(&self) -> bool {
        self.get("seed").is_some()
            || ["aligner", "task"]
                .iter()
                .any(|s| self.get(s).and_then(|v| v.get("seed")).is_some())
    }

    pub fn arch(&self, flag: Option<Arch>) -> Result<Arch, CliError> {
        if let Some(a) = flag {
            return Ok(a);
        }
        match self.get("arch") {
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| CliError::Usage(format!("config arch: {e}"))),
            None => Err(CliError::Usage("--arch is required (fc, ae or identity)".into())),
        }
    }

    /// `flag`, else the config's `manifest` entry (relative to the config file).
    pub fn manifest(&self, flag: Option<&Path>) -> Result<PathBuf, CliError> {
        if let Some(p) = flag {
            return Ok(p.to_path_buf());
        }
        self.path("manifest")
            .ok_or_else(|| CliError::Usage("--manifest is required".into()))
    }
}

impl StageFlags {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        set!(
            batch_size,
            max_epochs,
            patience,
            val_fraction,
            seed,
            direction,
            consistency_pairs,
            freeze_aligner_in_step3,
            weight_decay,
            head_dropout
        );
    }
}

/// Single-stage config: defaults, then file, then env seed, then flags.
pub fn stage_config(
    defaults: TrainConfig,
    file: &ConfigFile,
    lr: Option<f64>,
    flags: &StageFlags,
) -> Result<TrainConfig, CliError> {
    let mut cfg = file.overlay(&defaults)?;
    if !file.has_seed() {
        if let Some(seed) = env_seed()? {
            cfg.seed = seed;
        }
    }
    flags.apply(&mut cfg);
    if let Some(lr) = lr {
        cfg.lr = lr;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub struct PipelineFlags<'a> {
    pub aligner_lr: Option<f64>,
    pub task_lr: Option<f64>,
    pub stage: &'a StageFlags,
    pub data_share: bool,
    pub allow_shared: bool,
}

pub fn pipeline_config(file: &ConfigFile, flags: PipelineFlags<'_>) -> Result<PipelineConfig, CliError> {
    let mut cfg = file.overlay(&PipelineConfig::default())?;
    if !file.has_seed() {
        if let Some(seed) = env_seed()? {
            cfg.aligner.seed = seed;
            cfg.task.seed = seed;
        }
    }
    flags.stage.apply(&mut cfg.aligner);
    flags.stage.apply(&mut cfg.task);
    if let Some(lr) = flags.aligner_lr {
        cfg.aligner.lr = lr;
    }
    if let Some(lr) = flags.task_lr {
        cfg.task.lr = lr;
    }
    // The task stage follows the aligner's direction.
    cfg.task.direction = cfg.aligner.direction;
    cfg.data_share |= flags.data_share;
    cfg.allow_shared |= flags.allow_shared;
    cfg.aligner.validate()?;
    cfg.task.validate()?;
    Ok(cfg)
}
