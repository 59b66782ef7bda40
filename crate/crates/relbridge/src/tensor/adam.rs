//! Named trainable parameters and the Adam update rule.

use std::collections::HashMap;

use crate::error::{Error, Result};

use super::Tensor;

/// A named leaf tensor owned by a model. Names must be unique within one
/// model; the optimizer keys its moment state on them.
#[derive(Clone)]
pub struct Parameter {
    name: String,
    tensor: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, tensor: Tensor) -> Result<Parameter> {
        if !tensor.requires_grad() || tensor.node().is_some() {
            return Err(Error::InvalidArgument(
                "parameters must be trainable leaf tensors".into(),
            ));
        }
        Ok(Parameter { name: name.into(), tensor })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn grad_norm(&self) -> f64 {
        self.tensor
            .grad()
            .map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt())
            .unwrap_or(0.0)
    }

    pub fn snapshot(&self) -> Vec<f64> {
        self.tensor.to_vec()
    }

    pub fn restore(&self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.tensor.len() {
            return Err(Error::dim(
                "restore",
                format!(
                    "parameter '{}' holds {} values, snapshot has {}",
                    self.name,
                    self.tensor.len(),
                    values.len()
                ),
            ));
        }
        self.tensor.set_values(values);
        Ok(())
    }
}

impl std::fmt::Debug for Parameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Parameter({} {:?})", self.name, self.tensor.shape())
    }
}

/// Give every parameter a zeroed gradient buffer so that parameters a loss
/// never reaches still end the backward pass with an explicit zero gradient.
pub fn zero_grads(params: &[Parameter]) {
    for p in params {
        p.tensor().zero_grad();
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam with bias correction; moment state is keyed by parameter name and
/// lives across steps. Gradients are consumed (cleared) by each step.
pub struct Adam {
    lr: f64,
    hyper: AdamHyper,
    step_count: u64,
    moments: HashMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Adam {
        Adam::with_hyper(lr, AdamHyper::default())
    }

    pub fn with_hyper(lr: f64, hyper: AdamHyper) -> Adam {
        Adam { lr, hyper, step_count: 0, moments: HashMap::new() }
    }

    pub fn step(&mut self, params: &[Parameter]) -> Result<()> {
        self.step_count += 1;
        let t = self.step_count as i32;
        let AdamHyper { beta1, beta2, epsilon } = self.hyper;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for p in params {
            let grad = p.tensor().take_grad().ok_or_else(|| {
                Error::Precondition(format!(
                    "parameter '{}' has no gradient; run backward first",
                    p.name()
                ))
            })?;
            let n = p.tensor().len();
            let (m, v) = self
                .moments
                .entry(p.name().to_string())
                .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            let (lr, eps) = (self.lr, epsilon);
            p.tensor().update_values(|vals| {
                for i in 0..n {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    vals[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            });
        }
        Ok(())
    }
}
