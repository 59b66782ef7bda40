//! Shared oracles for the integration suites. Everything here recomputes
//! expected values through an independent route (dense loops, finite
//! differences, direct enumeration), never through the library's own path.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relbridge::datasets::RelationalDataset;
use relbridge::tensor::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Values bounded away from zero, so kinked ops (relu) never straddle the
/// finite-difference step.
pub fn rand_vec_offzero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let magnitude = rng.random_range(0.1..1.5);
            if rng.random::<bool>() {
                magnitude
            } else {
                -magnitude
            }
        })
        .collect()
}

/// Central-difference gradient check. Builds trainable leaves, runs the
/// scalar loss under `f`, backpropagates, then perturbs every input element
/// by +/- h and compares. Returns the worst relative error seen.
pub fn check_gradients(inputs: &[(Vec<usize>, Vec<f64>)], f: &dyn Fn(&[Tensor]) -> Tensor) -> f64 {
    let h = 1e-5;
    let leaves: Vec<Tensor> = inputs
        .iter()
        .map(|(shape, values)| Tensor::new_trainable(shape, values.clone()).unwrap())
        .collect();
    let loss = f(&leaves);
    assert!(loss.is_scalar(), "gradient check needs a scalar loss");
    relbridge::tensor::backward(&loss).unwrap();
    let grads: Vec<Vec<f64>> = leaves
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();

    let eval = |which: usize, values: &[f64]| -> f64 {
        let rebuilt: Vec<Tensor> = inputs
            .iter()
            .enumerate()
            .map(|(k, (shape, original))| {
                let data = if k == which { values.to_vec() } else { original.clone() };
                Tensor::new_trainable(shape, data).unwrap()
            })
            .collect();
        f(&rebuilt).item()
    };

    let mut worst = 0.0f64;
    for (i, (_, values)) in inputs.iter().enumerate() {
        for j in 0..values.len() {
            let mut plus = values.clone();
            plus[j] += h;
            let mut minus = values.clone();
            minus[j] -= h;
            let numeric = (eval(i, &plus) - eval(i, &minus)) / (2.0 * h);
            let analytic = grads[i][j];
            let denom = analytic.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    worst
}

/// Central-difference check over named parameters: `f` re-evaluates the
/// loss from the parameters' current values, which are nudged in place.
pub fn check_gradients_params(
    params: &[relbridge::tensor::Parameter],
    f: &dyn Fn() -> Tensor,
) -> f64 {
    let h = 1e-5;
    relbridge::tensor::zero_grads(params);
    let loss = f();
    relbridge::tensor::backward(&loss).unwrap();
    let grads: Vec<Vec<f64>> = params.iter().map(|p| p.tensor().grad().unwrap()).collect();
    let mut worst = 0.0f64;
    for (i, p) in params.iter().enumerate() {
        let original = p.snapshot();
        for j in 0..original.len() {
            let mut plus = original.clone();
            plus[j] += h;
            p.restore(plus).unwrap();
            let up = f().item();
            let mut minus = original.clone();
            minus[j] -= h;
            p.restore(minus).unwrap();
            let down = f().item();
            p.restore(original.clone()).unwrap();
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads[i][j];
            let denom = analytic.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    worst
}

/// Dense symmetric normalization oracle.
pub fn dense_normalize(n: usize, dense: &[f64], add_self_loops: bool) -> Vec<f64> {
    let mut a = dense.to_vec();
    if add_self_loops {
        for i in 0..n {
            a[i * n + i] += 1.0;
        }
    }
    let mut inv = vec![0.0; n];
    for i in 0..n {
        let d: f64 = (0..n).map(|j| a[i * n + j]).sum();
        inv[i] = if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 };
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = a[i * n + j] * inv[i] * inv[j];
        }
    }
    out
}

/// Eigenvalues of a dense symmetric matrix (independent eigen-oracle).
pub fn sym_eigenvalues(n: usize, dense: &[f64]) -> Vec<f64> {
    let m = nalgebra::DMatrix::from_row_slice(n, n, dense);
    m.symmetric_eigen().eigenvalues.iter().copied().collect()
}

/// Degrees of A + I (the self-loop-augmented adjacency).
pub fn tilde_degrees(n: usize, dense: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|i| (0..n).map(|j| dense[i * n + j]).sum::<f64>() + 1.0)
        .collect()
}

/// Explicit neighbor-majority classifier over a generated relational
/// dataset: for each target row, the most common latent class among its
/// linked aux rows (read straight off the tables).
pub fn neighbor_majority_oracle(ds: &RelationalDataset) -> Vec<usize> {
    let target = &ds.tables["target"];
    let aux = &ds.tables["aux"];
    let rel = &ds.tables["links"];
    let aux_index = aux.key_index().unwrap();
    let target_index = target.key_index().unwrap();
    let trait_col = aux.column("trait").unwrap();
    let mut counts = vec![vec![0usize; ds.n_classes()]; target.row_count()];
    let tcol = rel.column("t_id").unwrap();
    let acol = rel.column("a_id").unwrap();
    for row in 0..rel.row_count() {
        let t = target_index[tcol.cell(row).unwrap()];
        let a = aux_index[acol.cell(row).unwrap()];
        let z: usize = trait_col.cell(a).unwrap()[1..].parse().unwrap();
        counts[t][z] += 1;
    }
    counts
        .into_iter()
        .map(|cs| {
            let best = *cs.iter().max().unwrap();
            cs.iter().position(|&c| c == best).unwrap()
        })
        .collect()
}

/// Accuracy of an oracle prediction vector over split indices.
pub fn oracle_accuracy(predictions: &[usize], labels: &[Option<usize>], indices: &[usize]) -> f64 {
    let correct = indices
        .iter()
        .filter(|&&i| labels[i] == Some(predictions[i]))
        .count();
    correct as f64 / indices.len() as f64
}
