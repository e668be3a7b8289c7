use crate::error::{Error, Result};
use crate::numkernel::{
    relu, relu_backward, tanh, tanh_backward, Dropout, DropoutCache, ForwardCache, LinearLayer,
    Matrix, Mode, Param, RngStream,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

/// How one stage of a [`Network`] is laid out: an affine layer, an
/// activation, and optional dropout after the activation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub dropout: Option<f32>,
}

#[derive(Clone, Debug)]
struct Stage {
    linear: LinearLayer,
    activation: Activation,
    dropout: Option<Dropout>,
    linear_cache: ForwardCache,
    activation_out: Option<Matrix>,
    dropout_cache: DropoutCache,
}

impl Stage {
    fn clear_caches(&mut self) {
        self.linear_cache.clear();
        self.activation_out = None;
        self.dropout_cache = DropoutCache::default();
    }
}

/// A feed-forward stack of stages. An empty stack is the identity map.
#[derive(Clone, Debug)]
pub struct Network {
    dim_in: usize,
    stages: Vec<Stage>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.dim_in == other.dim_in
            && self.stages.len() == other.stages.len()
            && self.stages.iter().zip(&other.stages).all(|(a, b)| {
                a.activation == b.activation
                    && a.dropout == b.dropout
                    && a.linear.weight == b.linear.weight
                    && a.linear.bias == b.linear.bias
            })
    }
}

impl Network {
    pub fn identity(dim: usize) -> Self {
        Self {
            dim_in: dim,
            stages: Vec::new(),
        }
    }

    /// Builds a network with the given layout. Layers feeding a ReLU get
    /// He-uniform weights (bound √(6/fan_in)); every other layer gets
    /// Xavier-uniform weights (bound √(6/(fan_in+fan_out))). Biases start
    /// at zero.
    pub fn init(specs: &[StageSpec], rng: &mut RngStream) -> Result<Self> {
        let first = specs
            .first()
            .ok_or_else(|| Error::Parameter("a network needs at least one stage".into()))?;
        let mut stages = Vec::with_capacity(specs.len());
        let mut width = first.in_dim;
        for (i, spec) in specs.iter().enumerate() {
            if spec.in_dim != width || spec.in_dim == 0 || spec.out_dim == 0 {
                return Err(Error::Parameter(format!(
                    "stage {} has invalid dims {}→{} (expected input {width})",
                    i + 1,
                    spec.in_dim,
                    spec.out_dim
                )));
            }
            let bound = match spec.activation {
                Activation::Relu => (6.0 / spec.in_dim as f64).sqrt(),
                _ => (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt(),
            };
            let mut linear = LinearLayer::zeros(spec.in_dim, spec.out_dim);
            for w in linear.weight.data_mut() {
                *w = rng.symmetric(bound) as f32;
            }
            let dropout = spec.dropout.map(Dropout::new).transpose()?;
            stages.push(Stage {
                linear,
                activation: spec.activation,
                dropout,
                linear_cache: ForwardCache::default(),
                activation_out: None,
                dropout_cache: DropoutCache::default(),
            });
            width = spec.out_dim;
        }
        Ok(Self {
            dim_in: first.in_dim,
            stages,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.dim_in
    }

    pub fn output_dim(&self) -> usize {
        self.stages
            .last()
            .map_or(self.dim_in, |s| s.linear.out_dim())
    }

    /// Width sequence `[in, h1, …, out]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.dim_in)
            .chain(self.stages.iter().map(|s| s.linear.out_dim()))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.stages.iter().map(|s| s.linear.param_count()).sum()
    }

    pub fn layers(&self) -> impl Iterator<Item = &LinearLayer> + '_ {
        self.stages.iter().map(|s| &s.linear)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut LinearLayer> + '_ {
        self.stages.iter_mut().map(|s| &mut s.linear)
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.dim_in {
            return Err(Error::Dimension {
                op: "network_forward",
                left: x.shape(),
                right: (x.rows(), self.dim_in),
            });
        }
        Ok(())
    }

    /// Eval-mode forward pass. Needs no mutable state, so a trained network
    /// can be shared across threads for inference.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for stage in &self.stages {
            h = stage.linear.infer(&h)?;
            h = match stage.activation {
                Activation::Relu => relu(&h),
                Activation::Tanh => tanh(&h),
                Activation::Linear => h,
            };
        }
        Ok(h)
    }

    /// Forward pass that records what [`Network::backward`] needs.
    pub fn forward(&mut self, x: &Matrix, mode: Mode, rng: &mut RngStream) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for stage in &mut self.stages {
            h = stage.linear.forward(&h, &mut stage.linear_cache)?;
            h = match stage.activation {
                Activation::Relu => relu(&h),
                Activation::Tanh => tanh(&h),
                Activation::Linear => h,
            };
            stage.activation_out = Some(h.clone());
            if let Some(d) = &stage.dropout {
                h = d.forward(&h, mode, rng, &mut stage.dropout_cache);
            } else {
                stage.dropout_cache = DropoutCache::default();
            }
        }
        Ok(h)
    }

    /// Back-propagates `grad` through the last recorded forward pass,
    /// accumulating parameter gradients. Returns the gradient with respect
    /// to the network input.
    pub fn backward(&mut self, grad: &Matrix) -> Result<Matrix> {
        let mut g = grad.clone();
        for stage in self.stages.iter_mut().rev() {
            if let Some(d) = &stage.dropout {
                g = d.backward(&g, &stage.dropout_cache)?;
            }
            let out = stage.activation_out.as_ref().ok_or_else(|| {
                Error::State("network backward called without a forward pass".into())
            })?;
            g = match stage.activation {
                Activation::Relu => relu_backward(out, &g)?,
                Activation::Tanh => tanh_backward(out, &g)?,
                Activation::Linear => g,
            };
            g = stage.linear.backward(&g, &stage.linear_cache)?;
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        for s in &mut self.stages {
            s.linear.zero_grad();
        }
    }

    pub fn clear_caches(&mut self) {
        for s in &mut self.stages {
            s.clear_caches();
        }
    }

    /// Parameters in declared order: `fc1.weight`, `fc1.bias`, `fc2.weight`, …
    pub fn params(&mut self, prefix: &str) -> Vec<Param<'_>> {
        let mut out = Vec::with_capacity(2 * self.stages.len());
        for (i, s) in self.stages.iter_mut().enumerate() {
            let LinearLayer {
                weight,
                bias,
                grad_weight,
                grad_bias,
            } = &mut s.linear;
            out.push(Param {
                name: format!("{prefix}fc{}.weight", i + 1),
                value: weight.data_mut(),
                grad: grad_weight.data(),
            });
            out.push(Param {
                name: format!("{prefix}fc{}.bias", i + 1),
                value: bias.as_mut_slice(),
                grad: grad_bias.as_slice(),
            });
        }
        out
    }

    /// All parameter values, flattened in declared order.
    pub fn flat_params(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.param_count());
        for s in &self.stages {
            out.extend_from_slice(s.linear.weight.data());
            out.extend_from_slice(&s.linear.bias);
        }
        out
    }

    /// Overwrites all parameters from a flat buffer in declared order.
    pub fn load_flat_params(&mut self, values: &[f32]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Corruption(format!(
                "expected {} parameters, found {}",
                self.param_count(),
                values.len()
            )));
        }
        let mut offset = 0;
        for s in &mut self.stages {
            let w = s.linear.weight.data_mut();
            w.copy_from_slice(&values[offset..offset + w.len()]);
            offset += w.len();
            let b = &mut s.linear.bias;
            let n = b.len();
            b.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }
}
