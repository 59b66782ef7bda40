//! Graph-convolution encoder: a stack of `act(A_hat @ X @ W)` layers over a
//! normalized adjacency, with dropout between layers while training.

use std::rc::Rc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseMatrix;
use crate::init;
use crate::tensor::{spmm, Parameter, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GcnConfig {
    /// Output width of each layer; the input width is inferred from data.
    pub layer_dims: Vec<usize>,
    pub dropout_p: f64,
    /// One activation per layer; the final one must be `none` so the stack
    /// can feed logits.
    pub activations: Vec<Activation>,
}

impl GcnConfig {
    /// Relu on every layer but the last.
    pub fn new(layer_dims: Vec<usize>, dropout_p: f64) -> GcnConfig {
        let n = layer_dims.len();
        let activations = (0..n)
            .map(|i| if i + 1 < n { Activation::Relu } else { Activation::None })
            .collect();
        GcnConfig { layer_dims, dropout_p, activations }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.is_empty() {
            return Err(Error::Configuration("graph encoder needs at least one layer".into()));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::Configuration("graph layer widths must be positive".into()));
        }
        if self.activations.len() != self.layer_dims.len() {
            return Err(Error::Configuration(format!(
                "{} activations for {} layers",
                self.activations.len(),
                self.layer_dims.len()
            )));
        }
        if self.activations.last() != Some(&Activation::None) {
            return Err(Error::Configuration(
                "final graph layer must have no activation".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Configuration(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout_p
            )));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated non-empty")
    }
}

impl Default for GcnConfig {
    fn default() -> Self {
        GcnConfig::new(vec![64, 64], 0.5)
    }
}

/// One graph convolution: `act(A_hat @ X @ W)`. `A_hat` is constant;
/// gradients flow to `X` and `W`. No bias, which keeps the layer exactly
/// permutation-equivariant.
pub fn gcn_layer(
    x: &Tensor,
    a_hat: &Rc<SparseMatrix>,
    w: &Parameter,
    activation: Activation,
) -> Result<Tensor> {
    let projected = x.matmul(w.tensor())?;
    let propagated = spmm(a_hat, &projected)?;
    Ok(match activation {
        Activation::Relu => propagated.relu(),
        Activation::None => propagated,
    })
}

pub struct GcnEncoder {
    weights: Vec<Parameter>,
    cfg: GcnConfig,
}

impl GcnEncoder {
    /// Glorot-initialized stack; parameter names are `{prefix}.layer{i}.w`.
    pub fn new(input_dim: usize, cfg: GcnConfig, run_seed: u64, prefix: &str) -> Result<GcnEncoder> {
        cfg.validate()?;
        if input_dim == 0 {
            return Err(Error::Configuration("graph encoder input width must be positive".into()));
        }
        let mut weights = Vec::with_capacity(cfg.layer_dims.len());
        let mut fan_in = input_dim;
        for (i, &fan_out) in cfg.layer_dims.iter().enumerate() {
            weights.push(init::glorot_param(
                &format!("{prefix}.layer{i}.w"),
                fan_in,
                fan_out,
                run_seed,
            )?);
            fan_in = fan_out;
        }
        Ok(GcnEncoder { weights, cfg })
    }

    pub fn params(&self) -> Vec<Parameter> {
        self.weights.clone()
    }

    pub fn output_dim(&self) -> usize {
        self.cfg.output_dim()
    }

    /// Full stack with dropout between layers while training. Deterministic
    /// given the dropout rng state.
    pub fn encode(
        &self,
        x: &Tensor,
        a_hat: &Rc<SparseMatrix>,
        training: bool,
        dropout_rng: &mut ChaCha8Rng,
    ) -> Result<Tensor> {
        let mut h = x.clone();
        for (i, w) in self.weights.iter().enumerate() {
            h = gcn_layer(&h, a_hat, w, self.cfg.activations[i])?;
            if training && self.cfg.dropout_p > 0.0 && i + 1 < self.weights.len() {
                h = h.dropout(self.cfg.dropout_p, dropout_rng)?;
            }
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::backward;
    use rand::SeedableRng;

    fn rc_identity(n: usize) -> Rc<SparseMatrix> {
        Rc::new(SparseMatrix::identity(n))
    }

    fn param(name: &str, shape: &[usize], values: Vec<f64>) -> Parameter {
        Parameter::new(name, Tensor::new_trainable(shape, values).unwrap()).unwrap()
    }

    #[test]
    fn identity_setup_propagates_input_unchanged() {
        let x = Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = param("w", &[2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let out = gcn_layer(&x, &rc_identity(2), &w, Activation::None).unwrap();
        assert_eq!(out.to_vec(), x.to_vec());
    }

    #[test]
    fn two_node_path_averages_features() {
        // Oracle: hand product of [[.5,.5],[.5,.5]] @ [[2,0],[0,2]] @ I.
        let a_hat = Rc::new(
            SparseMatrix::from_coo(
                2,
                2,
                vec![(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.5)],
            )
            .unwrap(),
        );
        let x = Tensor::new(&[2, 2], vec![2.0, 0.0, 0.0, 2.0]).unwrap();
        let w = param("w", &[2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let out = gcn_layer(&x, &a_hat, &w, Activation::None).unwrap();
        assert_eq!(out.to_vec(), vec![1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn relu_with_negated_identity_annihilates_nonnegative_input() {
        let x = Tensor::new(&[2, 2], vec![1.0, 0.5, 0.0, 3.0]).unwrap();
        let w = param("w", &[2, 2], vec![-1.0, 0.0, 0.0, -1.0]);
        let out = gcn_layer(&x, &rc_identity(2), &w, Activation::Relu).unwrap();
        assert_eq!(out.to_vec(), vec![0.0; 4]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let x = Tensor::new(&[2, 3], vec![0.0; 6]).unwrap();
        let w = param("w", &[2, 2], vec![0.0; 4]);
        assert!(gcn_layer(&x, &rc_identity(2), &w, Activation::None).is_err());
    }

    #[test]
    fn config_validation_rejects_bad_stacks() {
        assert!(GcnConfig::new(vec![], 0.5).validate().is_err());
        let mut cfg = GcnConfig::new(vec![8, 4], 0.5);
        cfg.activations = vec![Activation::Relu, Activation::Relu];
        assert!(cfg.validate().is_err());
        assert!(GcnConfig::new(vec![8], 1.0).validate().is_err());
        assert!(GcnConfig::new(vec![8], 0.0).validate().is_ok());
    }

    #[test]
    fn single_identity_layer_is_identity() {
        let cfg = GcnConfig::new(vec![2], 0.0);
        let enc = GcnEncoder::new(2, cfg, 3, "g").unwrap();
        enc.weights[0].restore(vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let x = Tensor::new(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = enc.encode(&x, &rc_identity(3), false, &mut rng).unwrap();
        assert_eq!(out.to_vec(), x.to_vec());
    }

    #[test]
    fn two_layer_stack_has_right_shape_and_reachable_grads() {
        let cfg = GcnConfig::new(vec![5, 3], 0.0);
        let enc = GcnEncoder::new(4, cfg, 9, "g").unwrap();
        let x = Tensor::new_trainable(&[6, 4], (0..24).map(|i| i as f64 / 7.0).collect()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = enc.encode(&x, &rc_identity(6), false, &mut rng).unwrap();
        assert_eq!(out.shape(), &[6, 3]);
        backward(&out.sum_all()).unwrap();
        for w in enc.params() {
            assert!(w.tensor().grad().is_some(), "missing grad on {}", w.name());
        }
    }

    #[test]
    fn training_dropout_is_seed_deterministic_and_off_at_eval() {
        let cfg = GcnConfig::new(vec![4, 4], 0.5);
        let enc = GcnEncoder::new(4, cfg, 1, "g").unwrap();
        let x = Tensor::new(&[5, 4], (0..20).map(|i| i as f64).collect()).unwrap();
        let a = rc_identity(5);
        let mut r1 = ChaCha8Rng::seed_from_u64(42);
        let mut r2 = ChaCha8Rng::seed_from_u64(42);
        let t1 = enc.encode(&x, &a, true, &mut r1).unwrap();
        let t2 = enc.encode(&x, &a, true, &mut r2).unwrap();
        assert_eq!(t1.to_vec(), t2.to_vec());
        let mut r3 = ChaCha8Rng::seed_from_u64(7);
        let mut r4 = ChaCha8Rng::seed_from_u64(8);
        let e1 = enc.encode(&x, &a, false, &mut r3).unwrap();
        let e2 = enc.encode(&x, &a, false, &mut r4).unwrap();
        assert_eq!(e1.to_vec(), e2.to_vec());
    }

    #[test]
    fn identity_adjacency_degenerates_to_an_mlp() {
        // With A_hat = I the stack is relu(X W1) W2; compare against a
        // direct dense computation.
        let cfg = GcnConfig::new(vec![3, 2], 0.0);
        let enc = GcnEncoder::new(2, cfg, 23, "g").unwrap();
        let x: Vec<f64> = (0..10).map(|i| (i as f64) / 3.0 - 1.5).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let got = enc
            .encode(&Tensor::new(&[5, 2], x.clone()).unwrap(), &rc_identity(5), false, &mut rng)
            .unwrap()
            .to_vec();

        let w1 = enc.weights[0].snapshot();
        let w2 = enc.weights[1].snapshot();
        let mut hidden = [0.0; 5 * 3];
        for i in 0..5 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..2 {
                    acc += x[i * 2 + k] * w1[k * 3 + j];
                }
                hidden[i * 3 + j] = acc.max(0.0);
            }
        }
        let mut want = [0.0; 5 * 2];
        for i in 0..5 {
            for j in 0..2 {
                for k in 0..3 {
                    want[i * 2 + j] += hidden[i * 3 + k] * w2[k * 2 + j];
                }
            }
        }
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn permuting_nodes_permutes_output_rows_exactly() {
        // 6-node graph, permutation oracle: encode(PX, P A P^T) == P encode(X, A).
        let edges = [(0usize, 1usize), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (1, 4)];
        let mut entries = Vec::new();
        for &(u, v) in &edges {
            entries.push((u, v, 1.0));
            entries.push((v, u, 1.0));
        }
        let adj = SparseMatrix::from_coo(6, 6, entries).unwrap();
        let a_hat = Rc::new(adj.gcn_normalize(true).unwrap());

        let perm = [2usize, 4, 0, 5, 1, 3];
        let permuted_adj = SparseMatrix::from_coo(
            6,
            6,
            adj.entries().iter().map(|&(r, c, v)| (perm[r], perm[c], v)).collect(),
        )
        .unwrap();
        let a_hat_p = Rc::new(permuted_adj.gcn_normalize(true).unwrap());

        let cfg = GcnConfig::new(vec![4, 3], 0.0);
        let enc = GcnEncoder::new(2, cfg, 17, "g").unwrap();
        let xv: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let x = Tensor::new(&[6, 2], xv.clone()).unwrap();
        let mut px = vec![0.0; 12];
        for i in 0..6 {
            px[perm[i] * 2..perm[i] * 2 + 2].copy_from_slice(&xv[i * 2..i * 2 + 2]);
        }
        let x_p = Tensor::new(&[6, 2], px).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let base = enc.encode(&x, &a_hat, false, &mut rng).unwrap().to_vec();
        let permuted = enc.encode(&x_p, &a_hat_p, false, &mut rng).unwrap().to_vec();
        for i in 0..6 {
            assert_eq!(
                &permuted[perm[i] * 3..perm[i] * 3 + 3],
                &base[i * 3..i * 3 + 3],
                "row {i} must map to row {} bit-exactly",
                perm[i]
            );
        }
    }
}
