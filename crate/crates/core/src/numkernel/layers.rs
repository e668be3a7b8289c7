//! The hand-differentiated building blocks: affine layers, ReLU, tanh and
//! inverted dropout.

use serde::{Deserialize, Serialize};

use super::matrix::{matmul, matmul_at, matmul_bt, Matrix};
use super::rng::RngStream;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Input remembered by a forward pass so the matching backward can run.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache {
    input: Option<Matrix>,
}

impl ForwardCache {
    pub fn clear(&mut self) {
        self.input = None;
    }

    pub fn is_empty(&self) -> bool {
        self.input.is_none()
    }
}

/// `y = x · Wᵀ + b` with `W` stored as `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearLayer {
    pub weight: Matrix,
    pub bias: Vec<f32>,
    pub grad_weight: Matrix,
    pub grad_bias: Vec<f32>,
}

impl LinearLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
            grad_weight: Matrix::zeros(out_dim, in_dim),
            grad_bias: vec![0.0; out_dim],
        }
    }

    pub fn from_parts(weight: Matrix, bias: Vec<f32>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::Dimension {
                op: "linear_from_parts",
                left: weight.shape(),
                right: (bias.len(), 1),
            });
        }
        let (o, i) = weight.shape();
        Ok(Self {
            weight,
            bias,
            grad_weight: Matrix::zeros(o, i),
            grad_bias: vec![0.0; o],
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weight.data().len() + self.bias.len()
    }

    /// Forward pass without recording anything.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::Dimension {
                op: "linear_forward",
                left: x.shape(),
                right: self.weight.shape(),
            });
        }
        let mut y = matmul_bt(x, &self.weight)?;
        for r in 0..y.rows() {
            for (v, &b) in y.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(y)
    }

    pub fn forward(&self, x: &Matrix, cache: &mut ForwardCache) -> Result<Matrix> {
        let y = self.infer(x)?;
        cache.input = Some(x.clone());
        Ok(y)
    }

    /// Accumulates parameter gradients and returns the gradient with respect
    /// to the layer input.
    pub fn backward(&mut self, grad_out: &Matrix, cache: &ForwardCache) -> Result<Matrix> {
        let x = cache
            .input
            .as_ref()
            .ok_or_else(|| Error::State("linear backward called without a forward cache".into()))?;
        if grad_out.shape() != (x.rows(), self.out_dim()) {
            return Err(Error::Dimension {
                op: "linear_backward",
                left: grad_out.shape(),
                right: (x.rows(), self.out_dim()),
            });
        }
        let gw = matmul_at(grad_out, x)?;
        for (acc, &g) in self.grad_weight.data_mut().iter_mut().zip(gw.data()) {
            *acc += g;
        }
        for (c, acc) in self.grad_bias.iter_mut().enumerate() {
            let col: f64 = (0..grad_out.rows())
                .map(|r| f64::from(grad_out.get(r, c)))
                .sum();
            *acc += col as f32;
        }
        matmul(grad_out, &self.weight)
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.data_mut().fill(0.0);
        self.grad_bias.fill(0.0);
    }
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| v.max(0.0))
}

/// Gradient of ReLU given the forward input (or output; both have the same
/// sign pattern). The subgradient at exactly zero is zero.
pub fn relu_backward(x: &Matrix, grad: &Matrix) -> Result<Matrix> {
    x.ensure_same_shape(grad, "relu_backward")?;
    let data = x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Matrix::from_vec(x.rows(), x.cols(), data)
}

pub fn tanh(x: &Matrix) -> Matrix {
    x.map(f32::tanh)
}

/// Gradient of tanh given its forward output `y`: `g · (1 − y²)`.
pub fn tanh_backward(y: &Matrix, grad: &Matrix) -> Result<Matrix> {
    y.ensure_same_shape(grad, "tanh_backward")?;
    let data = y
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&v, &g)| g * (1.0 - v * v))
        .collect();
    Matrix::from_vec(y.rows(), y.cols(), data)
}

#[derive(Clone, Debug, Default)]
pub struct DropoutCache {
    mask: Option<Vec<f32>>,
}

/// Inverted dropout: survivors are scaled by `1/(1−p)` during training, so
/// evaluation is the identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dropout {
    p: f32,
}

impl Dropout {
    pub fn new(p: f32) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Parameter(format!(
                "dropout probability must lie in [0, 1), got {p}"
            )));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f32 {
        self.p
    }

    pub fn forward(
        &self,
        x: &Matrix,
        mode: Mode,
        rng: &mut RngStream,
        cache: &mut DropoutCache,
    ) -> Matrix {
        if mode == Mode::Eval || self.p == 0.0 {
            cache.mask = None;
            return x.clone();
        }
        let p = f64::from(self.p);
        let scale = (1.0 / (1.0 - p)) as f32;
        let mask: Vec<f32> = (0..x.data().len())
            .map(|_| if rng.uniform() < p { 0.0 } else { scale })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        cache.mask = Some(mask);
        Matrix::from_vec(x.rows(), x.cols(), data).expect("shape preserved")
    }

    pub fn backward(&self, grad: &Matrix, cache: &DropoutCache) -> Result<Matrix> {
        match &cache.mask {
            None => Ok(grad.clone()),
            Some(mask) if mask.len() == grad.data().len() => {
                let data = grad.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
                Matrix::from_vec(grad.rows(), grad.cols(), data)
            }
            Some(mask) => Err(Error::State(format!(
                "dropout mask covers {} values but gradient has {}",
                mask.len(),
                grad.data().len()
            ))),
        }
    }
}

/// Functional dropout for one-off use; the mask is discarded.
pub fn dropout(x: &Matrix, p: f32, mode: Mode, rng: &mut RngStream) -> Result<Matrix> {
    let layer = Dropout::new(p)?;
    Ok(layer.forward(x, mode, rng, &mut DropoutCache::default()))
}
