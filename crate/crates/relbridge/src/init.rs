//! Seeded, name-keyed parameter initialization.
//!
//! Each parameter draws from its own stream derived from (run seed, name),
//! so adding or removing parameters elsewhere in a model never shifts the
//! initialization of the ones that remain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{Parameter, Tensor};

fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn seed_for(run_seed: u64, name: &str) -> u64 {
    splitmix64(run_seed ^ fnv1a64(name))
}

pub fn rng_for(run_seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed_for(run_seed, name))
}

/// Glorot-uniform weight matrix `[fan_in, fan_out]`.
pub fn glorot_param(name: &str, fan_in: usize, fan_out: usize, run_seed: u64) -> Result<Parameter> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform_param(name, &[fan_in, fan_out], limit, run_seed)
}

pub fn uniform_param(name: &str, shape: &[usize], limit: f64, run_seed: u64) -> Result<Parameter> {
    let mut rng = rng_for(run_seed, name);
    let n: usize = shape.iter().product();
    let values: Vec<f64> = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
    Parameter::new(name, Tensor::new_trainable(shape, values)?)
}

pub fn const_param(name: &str, shape: &[usize], value: f64) -> Result<Parameter> {
    let n: usize = shape.iter().product();
    Parameter::new(name, Tensor::new_trainable(shape, vec![value; n])?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_name_same_seed_same_draw() {
        let a = glorot_param("m.w", 4, 3, 11).unwrap();
        let b = glorot_param("m.w", 4, 3, 11).unwrap();
        assert_eq!(a.tensor().to_vec(), b.tensor().to_vec());
    }

    #[test]
    fn different_names_decorrelate() {
        let a = glorot_param("m.w1", 4, 3, 11).unwrap();
        let b = glorot_param("m.w2", 4, 3, 11).unwrap();
        assert_ne!(a.tensor().to_vec(), b.tensor().to_vec());
    }

    #[test]
    fn glorot_respects_limit() {
        let p = glorot_param("w", 8, 8, 0).unwrap();
        let limit = (6.0 / 16.0f64).sqrt();
        assert!(p.tensor().to_vec().iter().all(|v| v.abs() < limit));
    }
}
