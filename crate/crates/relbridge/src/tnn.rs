//! Column-attention table encoder: categorical columns become learned tokens
//! that attend to each other; numerical columns bypass attention and join
//! after per-row normalization; a final projection emits row embeddings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init;
use crate::table::EncodedFeatures;
use crate::tensor::{concat_last, embedding_lookup, stack_mid, Parameter, Tensor};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TnnConfig {
    /// Token width d.
    pub token_dim: usize,
    /// Attention heads h; d must be divisible by h.
    pub heads: usize,
    pub n_blocks: usize,
    /// Row embedding width.
    pub output_dim: usize,
}

impl Default for TnnConfig {
    fn default() -> Self {
        TnnConfig { token_dim: 32, heads: 4, n_blocks: 2, output_dim: 64 }
    }
}

impl TnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.token_dim == 0 || self.heads == 0 || self.output_dim == 0 {
            return Err(Error::Configuration("table encoder extents must be positive".into()));
        }
        if !self.token_dim.is_multiple_of(self.heads) {
            return Err(Error::Configuration(format!(
                "token dim {} is not divisible by {} heads",
                self.token_dim, self.heads
            )));
        }
        Ok(())
    }
}

/// Per-categorical-column embedding tables; row 0 of each table is reserved
/// for missing/unseen values.
pub struct ColumnTokenizer {
    tables: Vec<Parameter>,
    token_dim: usize,
}

impl ColumnTokenizer {
    pub fn new(
        columns: &[(String, usize)],
        token_dim: usize,
        run_seed: u64,
        prefix: &str,
    ) -> Result<ColumnTokenizer> {
        let tables = columns
            .iter()
            .map(|(name, vocab_size)| {
                init::glorot_param(
                    &format!("{prefix}.embed.{name}"),
                    vocab_size + 1,
                    token_dim,
                    run_seed,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ColumnTokenizer { tables, token_dim })
    }

    pub fn tables(&self) -> &[Parameter] {
        &self.tables
    }

    /// Embed each categorical column and stack the per-row tokens: `[n,c,d]`.
    pub fn tokenize(&self, features: &EncodedFeatures) -> Result<Tensor> {
        if features.categorical.len() != self.tables.len() {
            return Err(Error::dim(
                "tokenize",
                format!(
                    "{} categorical columns, tokenizer built for {}",
                    features.categorical.len(),
                    self.tables.len()
                ),
            ));
        }
        let mut tokens = Vec::with_capacity(self.tables.len());
        for (col, table) in features.categorical.iter().zip(&self.tables) {
            let codes: Vec<usize> = col.codes.iter().map(|&c| c as usize).collect();
            tokens.push(embedding_lookup(table.tensor(), &codes)?);
        }
        stack_mid(&tokens)
    }

    pub fn token_dim(&self) -> usize {
        self.token_dim
    }
}

/// Pre-norm transformer block over the column axis: rows are independent,
/// columns within a row attend to each other.
pub struct AttentionBlock {
    wq: Parameter,
    wk: Parameter,
    wv: Parameter,
    wo: Parameter,
    ff1: Parameter,
    ff2: Parameter,
    ln1_gain: Parameter,
    ln1_shift: Parameter,
    ln2_gain: Parameter,
    ln2_shift: Parameter,
    heads: usize,
    dim: usize,
}

impl AttentionBlock {
    pub fn new(dim: usize, heads: usize, run_seed: u64, prefix: &str) -> Result<AttentionBlock> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::Configuration(format!(
                "token dim {dim} is not divisible by {heads} heads"
            )));
        }
        let p = |suffix: &str| format!("{prefix}.{suffix}");
        Ok(AttentionBlock {
            wq: init::glorot_param(&p("wq"), dim, dim, run_seed)?,
            wk: init::glorot_param(&p("wk"), dim, dim, run_seed)?,
            wv: init::glorot_param(&p("wv"), dim, dim, run_seed)?,
            wo: init::glorot_param(&p("wo"), dim, dim, run_seed)?,
            ff1: init::glorot_param(&p("ff1"), dim, 4 * dim, run_seed)?,
            ff2: init::glorot_param(&p("ff2"), 4 * dim, dim, run_seed)?,
            ln1_gain: init::const_param(&p("ln1.gain"), &[dim], 1.0)?,
            ln1_shift: init::const_param(&p("ln1.shift"), &[dim], 0.0)?,
            ln2_gain: init::const_param(&p("ln2.gain"), &[dim], 1.0)?,
            ln2_shift: init::const_param(&p("ln2.shift"), &[dim], 0.0)?,
            heads,
            dim,
        })
    }

    pub fn params(&self) -> Vec<Parameter> {
        vec![
            self.wq.clone(),
            self.wk.clone(),
            self.wv.clone(),
            self.wo.clone(),
            self.ff1.clone(),
            self.ff2.clone(),
            self.ln1_gain.clone(),
            self.ln1_shift.clone(),
            self.ln2_gain.clone(),
            self.ln2_shift.clone(),
        ]
    }

    /// `x + MHA(LN(x))` then `h + FF(LN(h))`; input and output are `[n,c,d]`.
    pub fn forward(&self, tokens: &Tensor) -> Result<Tensor> {
        if tokens.rank() != 3 || tokens.shape()[2] != self.dim {
            return Err(Error::dim(
                "attention_block",
                format!("expected [n,c,{}], got {:?}", self.dim, tokens.shape()),
            ));
        }
        let normed = tokens.layer_norm(self.ln1_gain.tensor(), self.ln1_shift.tensor(), LN_EPS)?;
        let q = normed.matmul(self.wq.tensor())?;
        let k = normed.matmul(self.wk.tensor())?;
        let v = normed.matmul(self.wv.tensor())?;

        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut contexts = Vec::with_capacity(self.heads);
        for head in 0..self.heads {
            let qh = q.slice_last(head * dh, dh)?;
            let kh = k.slice_last(head * dh, dh)?.transpose_last()?;
            let vh = v.slice_last(head * dh, dh)?;
            let attn = qh.bmm(&kh)?.scale(scale).softmax_last();
            contexts.push(attn.bmm(&vh)?);
        }
        let mixed = concat_last(&contexts)?.matmul(self.wo.tensor())?;
        let h = tokens.add(&mixed)?;

        let normed2 = h.layer_norm(self.ln2_gain.tensor(), self.ln2_shift.tensor(), LN_EPS)?;
        let ff = normed2.matmul(self.ff1.tensor())?.relu().matmul(self.ff2.tensor())?;
        h.add(&ff)
    }
}

/// Shape contract an encoder instance is bound to.
#[derive(Clone, Debug, PartialEq, Eq)]
struct FeatureLayout {
    categorical: Vec<(String, usize)>,
    n_numerical: usize,
}

impl FeatureLayout {
    fn of(features: &EncodedFeatures) -> FeatureLayout {
        FeatureLayout {
            categorical: features
                .categorical
                .iter()
                .map(|c| (c.name.clone(), c.vocab_size))
                .collect(),
            n_numerical: features.n_numerical(),
        }
    }
}

pub struct TnnEncoder {
    tokenizer: Option<ColumnTokenizer>,
    blocks: Vec<AttentionBlock>,
    num_gain: Option<Parameter>,
    num_shift: Option<Parameter>,
    proj_w: Parameter,
    proj_b: Parameter,
    layout: FeatureLayout,
    cfg: TnnConfig,
}

impl TnnEncoder {
    /// Build for the column layout of `features`; at least one usable feature
    /// column is required (encoding enforces that upstream).
    pub fn new(
        features: &EncodedFeatures,
        cfg: TnnConfig,
        run_seed: u64,
        prefix: &str,
    ) -> Result<TnnEncoder> {
        cfg.validate()?;
        let layout = FeatureLayout::of(features);
        if layout.categorical.is_empty() && layout.n_numerical == 0 {
            return Err(Error::Configuration(
                "table encoder needs at least one feature column".into(),
            ));
        }
        let tokenizer = if layout.categorical.is_empty() {
            None
        } else {
            Some(ColumnTokenizer::new(
                &layout.categorical,
                cfg.token_dim,
                run_seed,
                prefix,
            )?)
        };
        let blocks = if tokenizer.is_some() {
            (0..cfg.n_blocks)
                .map(|i| AttentionBlock::new(cfg.token_dim, cfg.heads, run_seed, &format!("{prefix}.block{i}")))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let (num_gain, num_shift) = if layout.n_numerical > 0 {
            (
                Some(init::const_param(&format!("{prefix}.num_ln.gain"), &[layout.n_numerical], 1.0)?),
                Some(init::const_param(&format!("{prefix}.num_ln.shift"), &[layout.n_numerical], 0.0)?),
            )
        } else {
            (None, None)
        };
        let flat_dim = layout.categorical.len() * cfg.token_dim + layout.n_numerical;
        let proj_w = init::glorot_param(&format!("{prefix}.proj.w"), flat_dim, cfg.output_dim, run_seed)?;
        let proj_b = init::const_param(&format!("{prefix}.proj.b"), &[cfg.output_dim], 0.0)?;
        Ok(TnnEncoder {
            tokenizer,
            blocks,
            num_gain,
            num_shift,
            proj_w,
            proj_b,
            layout,
            cfg,
        })
    }

    pub fn params(&self) -> Vec<Parameter> {
        let mut out = Vec::new();
        if let Some(tok) = &self.tokenizer {
            out.extend(tok.tables().iter().cloned());
        }
        for b in &self.blocks {
            out.extend(b.params());
        }
        out.extend(self.num_gain.clone());
        out.extend(self.num_shift.clone());
        out.push(self.proj_w.clone());
        out.push(self.proj_b.clone());
        out
    }

    pub fn output_dim(&self) -> usize {
        self.cfg.output_dim
    }

    /// Encode every row: tokenize, run the attention stack, flatten, join the
    /// normalized numerical features, and project. Rows never mix.
    pub fn encode(&self, features: &EncodedFeatures) -> Result<Tensor> {
        if FeatureLayout::of(features) != self.layout {
            return Err(Error::Integrity(
                "feature layout does not match the encoder's layout".into(),
            ));
        }
        let n = features.n_rows;
        if n == 0 {
            return Err(Error::InvalidArgument("cannot encode a table with no rows".into()));
        }
        let mut parts: Vec<Tensor> = Vec::new();
        if let Some(tok) = &self.tokenizer {
            let mut tokens = tok.tokenize(features)?;
            for block in &self.blocks {
                tokens = block.forward(&tokens)?;
            }
            let c = self.layout.categorical.len();
            parts.push(tokens.reshape(&[n, c * self.cfg.token_dim])?);
        }
        if self.layout.n_numerical > 0 {
            let q = self.layout.n_numerical;
            let mut flat = vec![0.0; n * q];
            for (j, col) in features.numerical.iter().enumerate() {
                for (row, &v) in col.values.iter().enumerate() {
                    flat[row * q + j] = v;
                }
            }
            let raw = Tensor::new(&[n, q], flat)?;
            parts.push(raw.layer_norm(
                self.num_gain.as_ref().expect("layout has numericals").tensor(),
                self.num_shift.as_ref().expect("layout has numericals").tensor(),
                LN_EPS,
            )?);
        }
        let joined = if parts.len() == 1 { parts.pop().expect("one part") } else { concat_last(&parts)? };
        Ok(joined.matmul(self.proj_w.tensor())?.add(self.proj_b.tensor())?.relu())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{CatColumn, EncodedFeatures, EncodingReport, NumColumn};
    use crate::tensor::backward;

    fn features(cats: &[(&str, usize, Vec<u32>)], nums: &[(&str, Vec<f64>)]) -> EncodedFeatures {
        let n_rows = cats
            .first()
            .map(|c| c.2.len())
            .or_else(|| nums.first().map(|c| c.1.len()))
            .unwrap_or(0);
        EncodedFeatures {
            n_rows,
            categorical: cats
                .iter()
                .map(|(name, vocab, codes)| CatColumn {
                    name: name.to_string(),
                    vocab_size: *vocab,
                    codes: codes.clone(),
                })
                .collect(),
            numerical: nums
                .iter()
                .map(|(name, values)| NumColumn { name: name.to_string(), values: values.clone() })
                .collect(),
            report: EncodingReport::default(),
        }
    }

    #[test]
    fn tokenize_is_table_lookup() {
        let f = features(&[("c", 1, vec![1])], &[]);
        let tok = ColumnTokenizer::new(&[("c".into(), 1)], 2, 0, "t").unwrap();
        tok.tables()[0].restore(vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let out = tok.tokenize(&f).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2]);
        assert_eq!(out.to_vec(), vec![1.0, 1.0]);
    }

    #[test]
    fn all_missing_rows_share_the_reserved_token() {
        let f = features(&[("c", 3, vec![0, 0, 0])], &[]);
        let tok = ColumnTokenizer::new(&[("c".into(), 3)], 4, 5, "t").unwrap();
        let out = tok.tokenize(&f).unwrap();
        let row0 = tok.tables()[0].snapshot()[0..4].to_vec();
        let v = out.to_vec();
        for r in 0..3 {
            assert_eq!(&v[r * 4..(r + 1) * 4], row0.as_slice());
        }
    }

    #[test]
    fn tokenize_shape_is_rows_by_columns_by_dim() {
        let f = features(&[("a", 2, vec![1, 2, 0]), ("b", 1, vec![0, 1, 1])], &[]);
        let tok = ColumnTokenizer::new(&[("a".into(), 2), ("b".into(), 1)], 4, 0, "t").unwrap();
        assert_eq!(tok.tokenize(&f).unwrap().shape(), &[3, 2, 4]);
    }

    #[test]
    fn out_of_range_code_is_an_invalid_argument() {
        let f = features(&[("c", 1, vec![5])], &[]);
        let tok = ColumnTokenizer::new(&[("c".into(), 1)], 2, 0, "t").unwrap();
        assert!(matches!(tok.tokenize(&f), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn block_rejects_indivisible_heads() {
        assert!(AttentionBlock::new(6, 4, 0, "b").is_err());
        assert!(AttentionBlock::new(8, 4, 0, "b").is_ok());
    }

    /// Brute-force attention block oracle on plain nested loops.
    fn dense_block_oracle(block: &AttentionBlock, x: &[f64], n: usize, c: usize, d: usize) -> Vec<f64> {
        let ln = |x: &[f64], gain: &[f64], shift: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; x.len()];
            for r in 0..x.len() / d {
                let row = &x[r * d..(r + 1) * d];
                let mean = row.iter().sum::<f64>() / d as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                let inv = 1.0 / (var + LN_EPS).sqrt();
                for j in 0..d {
                    out[r * d + j] = gain[j] * (row[j] - mean) * inv + shift[j];
                }
            }
            out
        };
        let mm = |a: &[f64], b: &[f64], m: usize, k: usize, nn: usize| -> Vec<f64> {
            let mut out = vec![0.0; m * nn];
            for i in 0..m {
                for j in 0..nn {
                    for t in 0..k {
                        out[i * nn + j] += a[i * k + t] * b[t * nn + j];
                    }
                }
            }
            out
        };
        let (wq, wk, wv, wo) = (
            block.wq.snapshot(),
            block.wk.snapshot(),
            block.wv.snapshot(),
            block.wo.snapshot(),
        );
        let (ff1, ff2) = (block.ff1.snapshot(), block.ff2.snapshot());
        let normed = ln(x, &block.ln1_gain.snapshot(), &block.ln1_shift.snapshot());
        let q = mm(&normed, &wq, n * c, d, d);
        let k = mm(&normed, &wk, n * c, d, d);
        let v = mm(&normed, &wv, n * c, d, d);
        let h = block.heads;
        let dh = d / h;
        let mut ctx = vec![0.0; n * c * d];
        for row in 0..n {
            for head in 0..h {
                for i in 0..c {
                    let qi = &q[(row * c + i) * d + head * dh..(row * c + i) * d + (head + 1) * dh];
                    let mut scores = vec![0.0; c];
                    for j in 0..c {
                        let kj = &k[(row * c + j) * d + head * dh..(row * c + j) * d + (head + 1) * dh];
                        scores[j] =
                            qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() / (dh as f64).sqrt();
                    }
                    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
                    for j in 0..c {
                        let a = (scores[j] - m).exp() / z;
                        let vj = &v[(row * c + j) * d + head * dh..(row * c + j) * d + (head + 1) * dh];
                        for t in 0..dh {
                            ctx[(row * c + i) * d + head * dh + t] += a * vj[t];
                        }
                    }
                }
            }
        }
        let mixed = mm(&ctx, &wo, n * c, d, d);
        let hx: Vec<f64> = x.iter().zip(&mixed).map(|(a, b)| a + b).collect();
        let normed2 = ln(&hx, &block.ln2_gain.snapshot(), &block.ln2_shift.snapshot());
        let mut ff_in = mm(&normed2, &ff1, n * c, d, 4 * d);
        for v in &mut ff_in {
            *v = v.max(0.0);
        }
        let ff_out = mm(&ff_in, &ff2, n * c, 4 * d, d);
        hx.iter().zip(&ff_out).map(|(a, b)| a + b).collect()
    }

    #[test]
    fn block_matches_dense_brute_force_attention() {
        let (n, c, d) = (2, 3, 8);
        let block = AttentionBlock::new(d, 2, 13, "b").unwrap();
        let x: Vec<f64> = (0..n * c * d).map(|i| ((i * 37 % 23) as f64 - 11.0) / 7.0).collect();
        let tokens = Tensor::new(&[n, c, d], x.clone()).unwrap();
        let got = block.forward(&tokens).unwrap().to_vec();
        let want = dense_block_oracle(&block, &x, n, c, d);
        for (i, (a, b)) in got.iter().zip(&want).enumerate() {
            assert!((a - b).abs() < 1e-10, "index {i}: {a} vs {b}");
        }
    }

    #[test]
    fn single_column_attention_is_a_pass_through_plus_ff() {
        // With one key the softmax weight is exactly 1, so the context is
        // just the value projection; verify against the dense oracle.
        let (n, c, d) = (3, 1, 4);
        let block = AttentionBlock::new(d, 2, 3, "b").unwrap();
        let x: Vec<f64> = (0..n * c * d).map(|i| (i as f64).cos()).collect();
        let tokens = Tensor::new(&[n, c, d], x.clone()).unwrap();
        let got = block.forward(&tokens).unwrap().to_vec();
        let want = dense_block_oracle(&block, &x, n, c, d);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_tokens_get_identical_attention_outputs() {
        let d = 8;
        let block = AttentionBlock::new(d, 4, 21, "b").unwrap();
        let token: Vec<f64> = (0..d).map(|i| (i as f64) / 3.0 - 1.0).collect();
        let mut x = token.clone();
        x.extend_from_slice(&token);
        let tokens = Tensor::new(&[1, 2, d], x).unwrap();
        let out = block.forward(&tokens).unwrap().to_vec();
        assert_eq!(&out[0..d], &out[d..2 * d]);
    }

    #[test]
    fn permuting_columns_permutes_block_outputs() {
        let (n, c, d) = (2, 4, 8);
        let block = AttentionBlock::new(d, 2, 11, "b").unwrap();
        let x: Vec<f64> = (0..n * c * d).map(|i| ((i % 17) as f64 - 8.0) / 5.0).collect();
        let perm = [2usize, 0, 3, 1];
        let mut px = vec![0.0; x.len()];
        for row in 0..n {
            for j in 0..c {
                px[(row * c + perm[j]) * d..(row * c + perm[j] + 1) * d]
                    .copy_from_slice(&x[(row * c + j) * d..(row * c + j + 1) * d]);
            }
        }
        let base = block.forward(&Tensor::new(&[n, c, d], x).unwrap()).unwrap().to_vec();
        let permuted = block.forward(&Tensor::new(&[n, c, d], px).unwrap()).unwrap().to_vec();
        for row in 0..n {
            for j in 0..c {
                let a = &base[(row * c + j) * d..(row * c + j + 1) * d];
                let b = &permuted[(row * c + perm[j]) * d..(row * c + perm[j] + 1) * d];
                for (x1, x2) in a.iter().zip(b) {
                    assert!((x1 - x2).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn encoder_shapes_and_grads() {
        let f = features(
            &[("a", 3, vec![1, 2, 0, 3]), ("b", 2, vec![0, 1, 2, 1])],
            &[("x", vec![0.5, -1.0, 2.0, 0.0])],
        );
        let enc = TnnEncoder::new(&f, TnnConfig { token_dim: 8, heads: 2, n_blocks: 2, output_dim: 6 }, 7, "t").unwrap();
        let out = enc.encode(&f).unwrap();
        assert_eq!(out.shape(), &[4, 6]);
        backward(&out.sum_all()).unwrap();
        for p in enc.params() {
            assert!(p.tensor().grad().is_some(), "no grad on {}", p.name());
        }
    }

    #[test]
    fn zero_blocks_project_raw_embeddings() {
        let f = features(&[("a", 2, vec![1, 2])], &[]);
        let cfg = TnnConfig { token_dim: 4, heads: 1, n_blocks: 0, output_dim: 3 };
        let enc = TnnEncoder::new(&f, cfg, 1, "t").unwrap();
        let out = enc.encode(&f).unwrap();
        assert_eq!(out.shape(), &[2, 3]);
        // No attention parameters exist.
        assert!(enc.params().iter().all(|p| !p.name().contains("block")));
    }

    #[test]
    fn numerical_only_table_skips_the_token_path() {
        let f = features(&[], &[("x", vec![1.0, 2.0]), ("y", vec![-1.0, 0.5])]);
        let enc = TnnEncoder::new(&f, TnnConfig::default(), 2, "t").unwrap();
        let out = enc.encode(&f).unwrap();
        assert_eq!(out.shape(), &[2, TnnConfig::default().output_dim]);
        assert!(enc.params().iter().all(|p| !p.name().contains("embed")));
    }

    #[test]
    fn rows_encode_independently() {
        let f = features(
            &[("a", 3, vec![1, 2, 3, 0, 2])],
            &[("x", vec![0.1, -0.4, 2.0, 1.0, 0.0])],
        );
        let enc = TnnEncoder::new(&f, TnnConfig { token_dim: 8, heads: 2, n_blocks: 1, output_dim: 5 }, 9, "t").unwrap();
        let full = enc.encode(&f).unwrap().to_vec();
        let subset = enc.encode(&f.rows(&[3, 1])).unwrap().to_vec();
        assert_eq!(&subset[0..5], &full[3 * 5..4 * 5]);
        assert_eq!(&subset[5..10], &full[5..10]);
    }

    #[test]
    fn layout_mismatch_is_an_integrity_error() {
        let f = features(&[("a", 2, vec![1])], &[]);
        let other = features(&[("a", 5, vec![1])], &[]);
        let enc = TnnEncoder::new(&f, TnnConfig::default(), 0, "t").unwrap();
        assert!(matches!(enc.encode(&other), Err(Error::Integrity(_))));
    }
}
