//! Binary checkpoint format.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "LAMD"
//! 4       4     format version, u32 LE (currently 1)
//! 8       4     metadata length L, u32 LE
//! 12      L     metadata, UTF-8 JSON (see CheckpointMeta)
//! 12+L    4·P   parameters as f32 LE, layer by layer: weight (row-major), bias
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ae_dims, fc_dims, Aligner, Arch, Model, TaskHead, FC_DROPOUT};
use crate::error::{Error, Result};
use crate::numkernel::RngStream;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"LAMD";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub arch: Arch,
    pub dim: usize,
    pub layer_dims: Vec<usize>,
    pub dropout: f64,
    #[serde(default)]
    pub num_classes: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Training hyperparameters, as recorded by whoever produced the model.
    #[serde(default)]
    pub training: Option<serde_json::Value>,
    #[serde(default)]
    pub epoch: Option<usize>,
    #[serde(default)]
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: Model,
}

impl Checkpoint {
    pub fn new(model: Model) -> Self {
        let net = model.network();
        let (dropout, num_classes) = match &model {
            Model::Aligner(a) if a.arch() == Arch::Fc => (f64::from(FC_DROPOUT), None),
            Model::Aligner(_) => (0.0, None),
            Model::Head(h) => (f64::from(h.dropout()), Some(h.num_classes())),
        };
        let meta = CheckpointMeta {
            arch: model.arch(),
            dim: net.input_dim(),
            layer_dims: net.dims(),
            dropout,
            num_classes,
            seed: 0,
            training: None,
            epoch: None,
            val_loss: None,
        };
        Self { meta, model }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.meta.seed = seed;
        self
    }

    pub fn with_training(mut self, training: serde_json::Value, epoch: usize, val_loss: f64) -> Self {
        self.meta.training = Some(training);
        self.meta.epoch = Some(epoch);
        self.meta.val_loss = Some(val_loss);
        self
    }

    pub fn into_aligner(self) -> Result<Aligner> {
        match self.model {
            Model::Aligner(a) => Ok(a),
            Model::Head(_) => Err(Error::Format(
                "checkpoint holds a task head, not an aligner".into(),
            )),
        }
    }

    pub fn into_head(self) -> Result<TaskHead> {
        match self.model {
            Model::Head(h) => Ok(h),
            Model::Aligner(a) => Err(Error::Format(format!(
                "checkpoint holds a '{}' aligner, not a task head",
                a.arch()
            ))),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta)?;
        let params = self.model.network().flat_params();
        let meta_len = u32::try_from(meta.len())
            .map_err(|_| Error::Format("checkpoint metadata exceeds 4 GiB".into()))?;
        let mut out = Vec::with_capacity(HEADER_LEN + meta.len() + 4 * params.len());
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&meta_len.to_le_bytes());
        out.extend_from_slice(&meta);
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Format("missing LAMD magic".into()));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Corruption("checkpoint header is truncated".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let meta_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let meta_end = HEADER_LEN
            .checked_add(meta_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::Corruption("checkpoint metadata is truncated".into()))?;
        let meta: CheckpointMeta = serde_json::from_slice(&bytes[HEADER_LEN..meta_end])
            .map_err(|e| Error::Corruption(format!("unreadable checkpoint metadata: {e}")))?;

        let mut model = skeleton(&meta)?;
        let payload = &bytes[meta_end..];
        let expected = model.network().param_count();
        if payload.len() != 4 * expected {
            return Err(Error::Corruption(format!(
                "payload holds {} bytes but a '{}' model with dims {:?} needs {}",
                payload.len(),
                meta.arch,
                meta.layer_dims,
                4 * expected
            )));
        }
        let values: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Corruption(format!("non-finite parameter at index {i}")));
        }
        model.network_mut().load_flat_params(&values)?;
        Ok(Self { meta, model })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// An uninitialized model whose layout is implied by the metadata.
fn skeleton(meta: &CheckpointMeta) -> Result<Model> {
    let mut rng = RngStream::new(0, "checkpoint-skeleton");
    let expected_dims = match meta.arch {
        Arch::Fc => fc_dims(meta.dim)?,
        Arch::Ae => ae_dims(meta.dim)?,
        Arch::Identity => vec![meta.dim],
        Arch::Head => {
            let c = meta.num_classes.ok_or_else(|| {
                Error::Corruption("head checkpoint without a class count".into())
            })?;
            vec![meta.dim, meta.dim, c]
        }
    };
    if expected_dims != meta.layer_dims {
        return Err(Error::Corruption(format!(
            "architecture '{}' at d={} implies dims {:?}, metadata says {:?}",
            meta.arch, meta.dim, expected_dims, meta.layer_dims
        )));
    }
    let model = match meta.arch {
        Arch::Head => {
            let dropout = meta.dropout as f32;
            Model::Head(TaskHead::new(
                meta.dim,
                meta.num_classes.unwrap_or_default(),
                dropout,
                &mut rng,
            )?)
        }
        arch => Model::Aligner(Aligner::new(arch, meta.dim, &mut rng)?),
    };
    debug_assert_eq!(model.network().dims(), expected_dims);
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    Checkpoint::new(model.clone()).save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    Ok(Checkpoint::load(path)?.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::init_model;
    use crate::numkernel::Matrix;

    fn fc() -> Model {
        init_model(Arch::Fc, 12, None, &mut RngStream::new(3, "init")).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical_and_forward_equal() {
        let ck = Checkpoint::new(fc()).with_training(serde_json::json!({"lr": 1e-5}), 4, 0.123456789);
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        let x = Matrix::filled(2, 12, 0.25);
        assert_eq!(
            back.model.network().infer(&x).unwrap(),
            ck.model.network().infer(&x).unwrap()
        );
    }

    #[test]
    fn bad_magic() {
        let mut bytes = Checkpoint::new(fc()).to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn unknown_version() {
        let mut bytes = Checkpoint::new(fc()).to_bytes().unwrap();
        bytes[4] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Version { found: 9, .. })
        ));
    }

    #[test]
    fn truncation_is_corruption_at_every_length() {
        let bytes = Checkpoint::new(fc()).to_bytes().unwrap();
        for cut in [4, 8, 11, 20, bytes.len() - 1, bytes.len() - 4] {
            assert!(
                matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Corruption(_))),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn arch_tag_must_match_payload() {
        let mut ck = Checkpoint::new(fc());
        ck.meta.arch = Arch::Ae;
        let bytes = ck.to_bytes().unwrap();
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Corruption(_))));
    }

    #[test]
    fn identity_checkpoint_has_empty_payload() {
        let model = Model::Aligner(Aligner::identity(5));
        let ck = Checkpoint::new(model.clone());
        let bytes = ck.to_bytes().unwrap();
        let meta_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), 12 + meta_len);
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap().model, model);
    }

    #[test]
    fn head_round_trip() {
        let head = init_model(Arch::Head, 6, Some(4), &mut RngStream::new(1, "init")).unwrap();
        let ck = Checkpoint::new(head);
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert!(back.into_aligner().is_err());
    }
}
