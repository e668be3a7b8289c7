//! AdamW with decoupled weight decay.
//!
//! ```text
//! m ← β₁m + (1−β₁)g          v ← β₂v + (1−β₂)g²
//! m̂ = m/(1−β₁ᵗ)              v̂ = v/(1−β₂ᵗ)
//! θ ← θ − lr·wd·θ − lr·m̂/(√v̂ + ε)
//! ```
//!
//! Arithmetic is done in `f64` per element; parameters and moments are
//! stored as `f32`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamWConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// A parameter tensor viewed as a flat slice, paired with its gradient.
pub struct Param<'a> {
    pub name: String,
    pub value: &'a mut [f32],
    pub grad: &'a [f32],
}

#[derive(Clone, Debug, PartialEq)]
struct Moments {
    m: Vec<f32>,
    v: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    config: AdamWConfig,
    step: u64,
    moments: Vec<Moments>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.config
    }

    /// Number of completed steps.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter. The parameter list must have
    /// the same layout on every call. A non-finite gradient aborts the step
    /// before anything is modified.
    pub fn step(&mut self, params: &mut [Param<'_>]) -> Result<()> {
        for p in params.iter() {
            if p.value.len() != p.grad.len() {
                return Err(Error::Dimension {
                    op: "adamw_step",
                    left: (p.value.len(), 1),
                    right: (p.grad.len(), 1),
                });
            }
            if let Some(i) = p.grad.iter().position(|g| !g.is_finite()) {
                return Err(Error::State(format!(
                    "non-finite gradient in {} at index {i}",
                    p.name
                )));
            }
        }
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| Moments {
                    m: vec![0.0; p.value.len()],
                    v: vec![0.0; p.value.len()],
                })
                .collect();
        } else if self.moments.len() != params.len()
            || self
                .moments
                .iter()
                .zip(params.iter())
                .any(|(mo, p)| mo.m.len() != p.value.len())
        {
            return Err(Error::State(
                "parameter layout changed between optimizer steps".into(),
            ));
        }

        self.step += 1;
        let AdamWConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        for (p, mo) in params.iter_mut().zip(&mut self.moments) {
            for (((theta, &g), m), v) in p
                .value
                .iter_mut()
                .zip(p.grad)
                .zip(&mut mo.m)
                .zip(&mut mo.v)
            {
                let g = f64::from(g);
                let m_new = beta1 * f64::from(*m) + (1.0 - beta1) * g;
                let v_new = beta2 * f64::from(*v) + (1.0 - beta2) * g * g;
                *m = m_new as f32;
                *v = v_new as f32;
                let m_hat = m_new / bc1;
                let v_hat = v_new / bc2;
                let th = f64::from(*theta);
                let updated = th - lr * weight_decay * th - lr * m_hat / (v_hat.sqrt() + eps);
                *theta = updated as f32;
            }
        }
        Ok(())
    }
}
