//! Aligner architectures, the classification head, and checkpoints.
//!
//! Hidden widths scale with the embedding dimension `d`:
//!
//! * FC: `d → 4d/3 → 2d/3 → d/3 → 2d/3 → 4d/3 → d` (rounded), ReLU after
//!   every layer but the last, dropout 0.5 after layers 1, 2 and 4.
//! * AE: encoder `d → h → h/2 → h/4`, decoder `h/4 → h/2 → h → d` with
//!   `h = round(2d/3)` and floor halving, ReLU after every layer but the last.
//!
//! At `d = 768` these give 768→1024→512→256→512→1024→768 and
//! 768→512→256→128→256→512→768.

mod checkpoint;
mod network;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use network::{Activation, Network, StageSpec};

use crate::error::{Error, Result};
use crate::numkernel::{Matrix, Mode, RngStream};

/// Dropout probability between FC aligner layers.
pub const FC_DROPOUT: f32 = 0.5;
/// Default dropout probability inside the task head.
pub const HEAD_DROPOUT: f32 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Fc,
    Ae,
    Identity,
    Head,
}

impl Arch {
    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Fc => "fc",
            Arch::Ae => "ae",
            Arch::Identity => "identity",
            Arch::Head => "head",
        }
    }

    pub fn is_aligner(self) -> bool {
        !matches!(self, Arch::Head)
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fc" => Ok(Arch::Fc),
            "ae" => Ok(Arch::Ae),
            "identity" | "none" => Ok(Arch::Identity),
            "head" => Ok(Arch::Head),
            other => Err(Error::Parameter(format!("unknown architecture '{other}'"))),
        }
    }
}

/// `round(k·d/3)`. Multiples of a third never land on .5, so the integer
/// form is exact.
fn thirds(k: usize, d: usize) -> usize {
    (k * d + 1) / 3
}

pub fn fc_dims(d: usize) -> Result<Vec<usize>> {
    if d < 2 {
        return Err(Error::Parameter(format!(
            "embedding dimension {d} is too small for the FC aligner"
        )));
    }
    let (h1, h2, h3) = (thirds(4, d), thirds(2, d), thirds(1, d));
    Ok(vec![d, h1, h2, h3, h2, h1, d])
}

pub fn ae_dims(d: usize) -> Result<Vec<usize>> {
    let h = thirds(2, d);
    if d < 2 || h / 4 == 0 {
        return Err(Error::Parameter(format!(
            "embedding dimension {d} is too small for the AE aligner (bottleneck would be empty)"
        )));
    }
    Ok(vec![d, h, h / 2, h / 4, h / 2, h, d])
}

fn fc_specs(d: usize) -> Result<Vec<StageSpec>> {
    let dims = fc_dims(d)?;
    Ok((0..6)
        .map(|i| StageSpec {
            in_dim: dims[i],
            out_dim: dims[i + 1],
            activation: if i < 5 {
                Activation::Relu
            } else {
                Activation::Linear
            },
            // after fc1, fc2 and fc4 only
            dropout: matches!(i, 0 | 1 | 3).then_some(FC_DROPOUT),
        })
        .collect())
}

fn ae_specs(d: usize) -> Result<Vec<StageSpec>> {
    let dims = ae_dims(d)?;
    Ok((0..6)
        .map(|i| StageSpec {
            in_dim: dims[i],
            out_dim: dims[i + 1],
            activation: if i < 5 {
                Activation::Relu
            } else {
                Activation::Linear
            },
            dropout: None,
        })
        .collect())
}

fn head_specs(d: usize, classes: usize, dropout: f32) -> Vec<StageSpec> {
    vec![
        StageSpec {
            in_dim: d,
            out_dim: d,
            activation: Activation::Tanh,
            dropout: (dropout > 0.0).then_some(dropout),
        },
        StageSpec {
            in_dim: d,
            out_dim: classes,
            activation: Activation::Linear,
            dropout: None,
        },
    ]
}

/// A trainable map from one embedding space to another of the same width.
#[derive(Clone, Debug, PartialEq)]
pub struct Aligner {
    arch: Arch,
    net: Network,
}

impl Aligner {
    pub fn new(arch: Arch, d: usize, rng: &mut RngStream) -> Result<Self> {
        let net = match arch {
            Arch::Fc => Network::init(&fc_specs(d)?, rng)?,
            Arch::Ae => Network::init(&ae_specs(d)?, rng)?,
            Arch::Identity => {
                if d == 0 {
                    return Err(Error::Parameter("identity aligner needs d ≥ 1".into()));
                }
                Network::identity(d)
            }
            Arch::Head => {
                return Err(Error::Parameter(
                    "'head' is not an aligner architecture".into(),
                ))
            }
        };
        Ok(Self { arch, net })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            arch: Arch::Identity,
            net: Network::identity(d),
        }
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn forward(&mut self, x: &Matrix, mode: Mode, rng: &mut RngStream) -> Result<Matrix> {
        self.net.forward(x, mode, rng)
    }

    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        self.net.infer(x)
    }
}

/// Classification head: dense `d → d`, tanh, dropout, dense `d → C`.
/// Produces raw logits.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskHead {
    net: Network,
    dropout: f32,
}

impl TaskHead {
    pub fn new(d: usize, classes: usize, dropout: f32, rng: &mut RngStream) -> Result<Self> {
        if d < 2 {
            return Err(Error::Parameter(format!("head input dimension {d} is too small")));
        }
        if classes < 2 {
            return Err(Error::Parameter(format!(
                "a classification head needs at least 2 classes, got {classes}"
            )));
        }
        Ok(Self {
            net: Network::init(&head_specs(d, classes, dropout), rng)?,
            dropout,
        })
    }

    pub fn dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.net.output_dim()
    }

    pub fn dropout(&self) -> f32 {
        self.dropout
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn forward(&mut self, x: &Matrix, mode: Mode, rng: &mut RngStream) -> Result<Matrix> {
        self.net.forward(x, mode, rng)
    }

    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        self.net.infer(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Aligner(Aligner),
    Head(TaskHead),
}

impl Model {
    pub fn arch(&self) -> Arch {
        match self {
            Model::Aligner(a) => a.arch(),
            Model::Head(_) => Arch::Head,
        }
    }

    pub fn network(&self) -> &Network {
        match self {
            Model::Aligner(a) => a.network(),
            Model::Head(h) => h.network(),
        }
    }

    pub fn network_mut(&mut self) -> &mut Network {
        match self {
            Model::Aligner(a) => a.network_mut(),
            Model::Head(h) => h.network_mut(),
        }
    }
}

/// Builds a freshly initialized model. `classes` is required for heads and
/// rejected for aligners.
pub fn init_model(
    arch: Arch,
    d: usize,
    classes: Option<usize>,
    rng: &mut RngStream,
) -> Result<Model> {
    match (arch, classes) {
        (Arch::Head, Some(c)) => Ok(Model::Head(TaskHead::new(d, c, HEAD_DROPOUT, rng)?)),
        (Arch::Head, None) => Err(Error::Parameter("a head needs a class count".into())),
        (_, Some(_)) => Err(Error::Parameter(format!(
            "class count given for aligner architecture '{arch}'"
        ))),
        (_, None) => Ok(Model::Aligner(Aligner::new(arch, d, rng)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> RngStream {
        RngStream::new(7, "init")
    }

    #[test]
    fn fc_dims_at_768_and_96() {
        assert_eq!(fc_dims(768).unwrap(), [768, 1024, 512, 256, 512, 1024, 768]);
        assert_eq!(fc_dims(96).unwrap(), [96, 128, 64, 32, 64, 128, 96]);
        let a = Aligner::new(Arch::Fc, 96, &mut rng()).unwrap();
        assert_eq!(a.network().dims(), [96, 128, 64, 32, 64, 128, 96]);
    }

    #[test]
    fn ae_dims_at_768() {
        assert_eq!(ae_dims(768).unwrap(), [768, 512, 256, 128, 256, 512, 768]);
    }

    #[test]
    fn too_small_dims_rejected() {
        assert!(fc_dims(1).is_err());
        assert!(ae_dims(2).is_err());
        assert!(init_model(Arch::Fc, 1, None, &mut rng()).is_err());
    }

    #[test]
    fn class_count_required_only_for_heads() {
        assert!(init_model(Arch::Head, 8, None, &mut rng()).is_err());
        assert!(init_model(Arch::Fc, 8, Some(3), &mut rng()).is_err());
        let Model::Head(h) = init_model(Arch::Head, 8, Some(3), &mut rng()).unwrap() else {
            panic!("expected head");
        };
        assert_eq!(h.num_classes(), 3);
    }

    #[test]
    fn same_seed_same_weights() {
        let a = init_model(Arch::Ae, 48, None, &mut rng()).unwrap();
        let b = init_model(Arch::Ae, 48, None, &mut rng()).unwrap();
        let (fa, fb) = (a.network().flat_params(), b.network().flat_params());
        assert!(fa.iter().zip(&fb).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn biases_start_at_zero_and_weights_within_bounds() {
        let a = Aligner::new(Arch::Fc, 24, &mut rng()).unwrap();
        for (i, layer) in a.network().layers().enumerate() {
            assert!(layer.bias.iter().all(|&b| b == 0.0));
            let (fan_out, fan_in) = layer.weight.shape();
            let bound = if i < 5 {
                (6.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            };
            assert!(layer
                .weight
                .data()
                .iter()
                .all(|&w| f64::from(w).abs() <= bound));
        }
    }

    #[test]
    fn forward_shapes() {
        let x = Matrix::filled(16, 24, 0.3);
        for arch in [Arch::Fc, Arch::Ae, Arch::Identity] {
            let a = Aligner::new(arch, 24, &mut rng()).unwrap();
            assert_eq!(a.infer(&x).unwrap().shape(), (16, 24));
        }
        let a = Aligner::new(Arch::Fc, 24, &mut rng()).unwrap();
        assert!(a.infer(&Matrix::zeros(2, 23)).is_err());
    }

    #[test]
    fn head_with_zero_weights_gives_zero_logits() {
        let mut h = TaskHead::new(4, 3, 0.1, &mut rng()).unwrap();
        for l in h.network_mut().layers_mut() {
            l.weight.data_mut().fill(0.0);
        }
        let logits = h.infer(&Matrix::filled(1, 4, 2.0)).unwrap();
        assert_eq!(logits, Matrix::zeros(1, 3));
    }

    #[test]
    fn eval_forward_is_rng_independent() {
        let mut a = Aligner::new(Arch::Fc, 12, &mut rng()).unwrap();
        let x = Matrix::filled(3, 12, 0.7);
        let y1 = a.forward(&x, Mode::Eval, &mut RngStream::new(1, "d")).unwrap();
        let y2 = a.forward(&x, Mode::Eval, &mut RngStream::new(2, "d")).unwrap();
        assert_eq!(y1, y2);
    }

    #[test]
    fn arch_parses() {
        assert_eq!("FC".parse::<Arch>().unwrap(), Arch::Fc);
        assert_eq!("none".parse::<Arch>().unwrap(), Arch::Identity);
        assert!("lstm".parse::<Arch>().is_err());
    }
}
