//! Differentiable operations and their vector-Jacobian products.

use std::rc::Rc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::SparseMatrix;

use super::Tensor;

/// How a binary elementwise op pairs its operands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Broadcast {
    /// Identical shapes.
    Same,
    /// Right operand is a vector applied along the last axis of the left.
    RowVector,
}

pub(crate) enum Op {
    Matmul,
    Bmm,
    Add(Broadcast),
    Mul(Broadcast),
    Relu,
    Scale(f64),
    Dropout { mask: Vec<f64> },
    SoftmaxLast,
    LayerNorm { eps: f64 },
    Embedding { codes: Vec<usize> },
    StackMid,
    ConcatLast { parts: Vec<usize> },
    ConcatRows { parts: Vec<usize> },
    SliceLast { start: usize, len: usize },
    SliceRows { start: usize, len: usize },
    TransposeLast,
    Reshape,
    SumAll,
    Spmm { matrix: Rc<SparseMatrix> },
    CrossEntropy { labels: Vec<usize>, mask: Vec<usize>, probs: Vec<f64> },
}

fn broadcast_kind(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    if a.shape() == b.shape() {
        Ok(Broadcast::Same)
    } else if b.rank() == 1 && b.last_dim() == a.last_dim() {
        Ok(Broadcast::RowVector)
    } else {
        Err(Error::dim(
            op,
            format!("shapes {:?} and {:?} are not broadcastable", a.shape(), b.shape()),
        ))
    }
}

/// Reduce a full-shape gradient onto a last-axis vector operand.
fn reduce_to_row(dout_full: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for (i, v) in dout_full.iter().enumerate() {
        out[i % d] += v;
    }
    out
}

fn matmul_2d(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for kk in 0..k {
            let aik = a[i * k + kk];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += aik * brow[j];
            }
        }
    }
    out
}

/// dB = A^T @ dOut accumulated into `db`.
fn accumulate_at_dout(a: &[f64], dout: &[f64], m: usize, k: usize, n: usize, db: &mut [f64]) {
    for i in 0..m {
        for kk in 0..k {
            let aik = a[i * k + kk];
            if aik == 0.0 {
                continue;
            }
            let drow = &dout[i * n..(i + 1) * n];
            let brow = &mut db[kk * n..(kk + 1) * n];
            for j in 0..n {
                brow[j] += aik * drow[j];
            }
        }
    }
}

/// dA = dOut @ B^T accumulated into `da`.
fn accumulate_dout_bt(dout: &[f64], b: &[f64], m: usize, k: usize, n: usize, da: &mut [f64]) {
    for i in 0..m {
        for kk in 0..k {
            let brow = &b[kk * n..(kk + 1) * n];
            let drow = &dout[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += drow[j] * brow[j];
            }
            da[i * k + kk] += acc;
        }
    }
}

impl Tensor {
    /// Matrix product. The left side may be rank 3, in which case its leading
    /// two axes are flattened, multiplied, and restored: `[b,m,k]@[k,n] -> [b,m,n]`.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        if rhs.rank() != 2 {
            return Err(Error::dim(
                "matmul",
                format!("right operand must be rank 2, got {:?}", rhs.shape()),
            ));
        }
        let (k, n) = (rhs.shape()[0], rhs.shape()[1]);
        if self.rank() == 1 || self.last_dim() != k {
            return Err(Error::dim(
                "matmul",
                format!("inner extents differ: {:?} vs {:?}", self.shape(), rhs.shape()),
            ));
        }
        let m = self.lead_len();
        let values = matmul_2d(&self.values(), &rhs.values(), m, k, n);
        let mut shape = self.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        Ok(Tensor::from_op(shape, values, Op::Matmul, vec![self.clone(), rhs.clone()]))
    }

    /// Batched matrix product of two rank-3 tensors: `[b,m,k]@[b,k,n] -> [b,m,n]`.
    pub fn bmm(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.rank() != 3 || rhs.rank() != 3 {
            return Err(Error::dim(
                "bmm",
                format!("expects rank-3 operands, got {:?} and {:?}", self.shape(), rhs.shape()),
            ));
        }
        let (b, m, k) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (b2, k2, n) = (rhs.shape()[0], rhs.shape()[1], rhs.shape()[2]);
        if b != b2 || k != k2 {
            return Err(Error::dim(
                "bmm",
                format!("shapes {:?} and {:?} do not chain", self.shape(), rhs.shape()),
            ));
        }
        let av = self.values();
        let bv = rhs.values();
        let mut values = vec![0.0; b * m * n];
        for batch in 0..b {
            let block = matmul_2d(
                &av[batch * m * k..(batch + 1) * m * k],
                &bv[batch * k * n..(batch + 1) * k * n],
                m,
                k,
                n,
            );
            values[batch * m * n..(batch + 1) * m * n].copy_from_slice(&block);
        }
        drop(av);
        drop(bv);
        Ok(Tensor::from_op(
            vec![b, m, n],
            values,
            Op::Bmm,
            vec![self.clone(), rhs.clone()],
        ))
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        let kind = broadcast_kind("add", self, rhs)?;
        let a = self.values();
        let b = rhs.values();
        let d = self.last_dim();
        let values: Vec<f64> = match kind {
            Broadcast::Same => a.iter().zip(b.iter()).map(|(x, y)| x + y).collect(),
            Broadcast::RowVector => a.iter().enumerate().map(|(i, x)| x + b[i % d]).collect(),
        };
        drop(a);
        drop(b);
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            values,
            Op::Add(kind),
            vec![self.clone(), rhs.clone()],
        ))
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        let kind = broadcast_kind("mul", self, rhs)?;
        let a = self.values();
        let b = rhs.values();
        let d = self.last_dim();
        let values: Vec<f64> = match kind {
            Broadcast::Same => a.iter().zip(b.iter()).map(|(x, y)| x * y).collect(),
            Broadcast::RowVector => a.iter().enumerate().map(|(i, x)| x * b[i % d]).collect(),
        };
        drop(a);
        drop(b);
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            values,
            Op::Mul(kind),
            vec![self.clone(), rhs.clone()],
        ))
    }

    pub fn relu(&self) -> Tensor {
        let values: Vec<f64> = self.values().iter().map(|&x| x.max(0.0)).collect();
        Tensor::from_op(self.shape().to_vec(), values, Op::Relu, vec![self.clone()])
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let values: Vec<f64> = self.values().iter().map(|&x| c * x).collect();
        Tensor::from_op(self.shape().to_vec(), values, Op::Scale(c), vec![self.clone()])
    }

    /// Inverted-scaling dropout: kept entries are multiplied by `1/(1-p)` so
    /// the expectation is unchanged. Callers skip this op at evaluation time.
    pub fn dropout(&self, p: f64, rng: &mut impl Rng) -> Result<Tensor> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "dropout probability must lie in [0, 1), got {p}"
            )));
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let values: Vec<f64> = self.values().iter().zip(&mask).map(|(x, m)| x * m).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            values,
            Op::Dropout { mask },
            vec![self.clone()],
        ))
    }

    /// Numerically stabilized softmax over the last axis.
    pub fn softmax_last(&self) -> Tensor {
        let d = self.last_dim();
        let x = self.values();
        let mut values = vec![0.0; x.len()];
        for r in 0..self.lead_len() {
            let row = &x[r * d..(r + 1) * d];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - m).exp();
                values[r * d + j] = e;
                z += e;
            }
            for j in 0..d {
                values[r * d + j] /= z;
            }
        }
        drop(x);
        Tensor::from_op(self.shape().to_vec(), values, Op::SoftmaxLast, vec![self.clone()])
    }

    /// Layer normalization over the last axis with learned gain and shift.
    pub fn layer_norm(&self, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
        let d = self.last_dim();
        if gamma.shape() != [d] || beta.shape() != [d] {
            return Err(Error::dim(
                "layer_norm",
                format!(
                    "gain/shift must have shape [{d}], got {:?} and {:?}",
                    gamma.shape(),
                    beta.shape()
                ),
            ));
        }
        let x = self.values();
        let g = gamma.values();
        let bb = beta.values();
        let mut values = vec![0.0; x.len()];
        for r in 0..self.lead_len() {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for j in 0..d {
                values[r * d + j] = g[j] * (row[j] - mean) * inv + bb[j];
            }
        }
        drop(x);
        drop(g);
        drop(bb);
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            values,
            Op::LayerNorm { eps },
            vec![self.clone(), gamma.clone(), beta.clone()],
        ))
    }

    /// Window along the last axis.
    pub fn slice_last(&self, start: usize, len: usize) -> Result<Tensor> {
        let d = self.last_dim();
        if len == 0 || start + len > d {
            return Err(Error::dim(
                "slice_last",
                format!("window {start}..{} exceeds last extent {d}", start + len),
            ));
        }
        let x = self.values();
        let mut values = Vec::with_capacity(self.lead_len() * len);
        for r in 0..self.lead_len() {
            values.extend_from_slice(&x[r * d + start..r * d + start + len]);
        }
        drop(x);
        let mut shape = self.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        Ok(Tensor::from_op(shape, values, Op::SliceLast { start, len }, vec![self.clone()]))
    }

    /// Contiguous row window of a rank-2 tensor.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::dim(
                "slice_rows",
                format!("expects rank 2, got {:?}", self.shape()),
            ));
        }
        let (rows, cols) = (self.shape()[0], self.shape()[1]);
        if len == 0 || start + len > rows {
            return Err(Error::dim(
                "slice_rows",
                format!("window {start}..{} exceeds {rows} rows", start + len),
            ));
        }
        let values = self.values()[start * cols..(start + len) * cols].to_vec();
        Ok(Tensor::from_op(
            vec![len, cols],
            values,
            Op::SliceRows { start, len },
            vec![self.clone()],
        ))
    }

    /// Swap the last two axes.
    pub fn transpose_last(&self) -> Result<Tensor> {
        if self.rank() < 2 {
            return Err(Error::dim(
                "transpose_last",
                format!("expects rank >= 2, got {:?}", self.shape()),
            ));
        }
        let shape = self.shape();
        let (m, n) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let batches = self.len() / (m * n);
        let x = self.values();
        let mut values = vec![0.0; x.len()];
        for b in 0..batches {
            let src = &x[b * m * n..(b + 1) * m * n];
            let dst = &mut values[b * m * n..(b + 1) * m * n];
            for i in 0..m {
                for j in 0..n {
                    dst[j * m + i] = src[i * n + j];
                }
            }
        }
        drop(x);
        let mut out_shape = shape.to_vec();
        let r = out_shape.len();
        out_shape.swap(r - 2, r - 1);
        Ok(Tensor::from_op(out_shape, values, Op::TransposeLast, vec![self.clone()]))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if shape.is_empty() || shape.len() > 3 || shape.contains(&0) || n != self.len() {
            return Err(Error::dim(
                "reshape",
                format!("cannot view {:?} as {:?}", self.shape(), shape),
            ));
        }
        Ok(Tensor::from_op(shape.to_vec(), self.to_vec(), Op::Reshape, vec![self.clone()]))
    }

    pub fn sum_all(&self) -> Tensor {
        let s = self.values().iter().sum();
        Tensor::from_op(vec![1], vec![s], Op::SumAll, vec![self.clone()])
    }
}

/// Gather rows of `table` by index: `table[v,d] x codes[n] -> [n,d]`;
/// gradients scatter-add back into the table.
pub fn embedding_lookup(table: &Tensor, codes: &[usize]) -> Result<Tensor> {
    if table.rank() != 2 {
        return Err(Error::dim(
            "embedding",
            format!("table must be rank 2, got {:?}", table.shape()),
        ));
    }
    let (v, d) = (table.shape()[0], table.shape()[1]);
    if codes.is_empty() {
        return Err(Error::InvalidArgument("embedding with no codes".into()));
    }
    if let Some(&bad) = codes.iter().find(|&&c| c >= v) {
        return Err(Error::InvalidArgument(format!(
            "code {bad} out of range for vocabulary of size {v}"
        )));
    }
    let t = table.values();
    let mut values = Vec::with_capacity(codes.len() * d);
    for &c in codes {
        values.extend_from_slice(&t[c * d..(c + 1) * d]);
    }
    drop(t);
    Ok(Tensor::from_op(
        vec![codes.len(), d],
        values,
        Op::Embedding { codes: codes.to_vec() },
        vec![table.clone()],
    ))
}

/// Stack `c` rank-2 tensors of shape `[n,d]` into `[n,c,d]`.
pub fn stack_mid(parts: &[Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("stack_mid with no inputs".into()))?;
    if first.rank() != 2 {
        return Err(Error::dim("stack_mid", format!("expects rank 2, got {:?}", first.shape())));
    }
    let (n, d) = (first.shape()[0], first.shape()[1]);
    for p in parts {
        if p.shape() != [n, d] {
            return Err(Error::dim(
                "stack_mid",
                format!("mixed shapes {:?} and {:?}", first.shape(), p.shape()),
            ));
        }
    }
    let c = parts.len();
    let mut values = vec![0.0; n * c * d];
    for (j, p) in parts.iter().enumerate() {
        let pv = p.values();
        for i in 0..n {
            values[(i * c + j) * d..(i * c + j + 1) * d].copy_from_slice(&pv[i * d..(i + 1) * d]);
        }
    }
    Ok(Tensor::from_op(vec![n, c, d], values, Op::StackMid, parts.to_vec()))
}

/// Concatenate along the last axis; all leading axes must agree.
pub fn concat_last(parts: &[Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("concat_last with no inputs".into()))?;
    let lead_shape = &first.shape()[..first.rank() - 1];
    let rows = first.lead_len();
    let mut widths = Vec::with_capacity(parts.len());
    for p in parts {
        if &p.shape()[..p.rank() - 1] != lead_shape {
            return Err(Error::dim(
                "concat_last",
                format!("leading axes differ: {:?} vs {:?}", first.shape(), p.shape()),
            ));
        }
        widths.push(p.last_dim());
    }
    let total: usize = widths.iter().sum();
    let mut values = vec![0.0; rows * total];
    let mut offset = 0;
    for (p, &w) in parts.iter().zip(&widths) {
        let pv = p.values();
        for r in 0..rows {
            values[r * total + offset..r * total + offset + w]
                .copy_from_slice(&pv[r * w..(r + 1) * w]);
        }
        offset += w;
    }
    let mut shape = lead_shape.to_vec();
    shape.push(total);
    Ok(Tensor::from_op(shape, values, Op::ConcatLast { parts: widths }, parts.to_vec()))
}

/// Concatenate rank-2 tensors along rows; column counts must agree.
pub fn concat_rows(parts: &[Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("concat_rows with no inputs".into()))?;
    if first.rank() != 2 {
        return Err(Error::dim("concat_rows", format!("expects rank 2, got {:?}", first.shape())));
    }
    let cols = first.shape()[1];
    let mut row_counts = Vec::with_capacity(parts.len());
    let mut values = Vec::new();
    for p in parts {
        if p.rank() != 2 || p.shape()[1] != cols {
            return Err(Error::dim(
                "concat_rows",
                format!("column counts differ: {:?} vs {:?}", first.shape(), p.shape()),
            ));
        }
        row_counts.push(p.shape()[0]);
        values.extend_from_slice(&p.values());
    }
    let rows: usize = row_counts.iter().sum();
    Ok(Tensor::from_op(
        vec![rows, cols],
        values,
        Op::ConcatRows { parts: row_counts },
        parts.to_vec(),
    ))
}

/// Sparse-dense product `A @ X`; `A` is constant, gradients flow to `X`.
pub fn spmm(matrix: &Rc<SparseMatrix>, x: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 {
        return Err(Error::dim("spmm", format!("dense side must be rank 2, got {:?}", x.shape())));
    }
    let (n, d) = (x.shape()[0], x.shape()[1]);
    if matrix.n_cols() != n {
        return Err(Error::dim(
            "spmm",
            format!("{}x{} sparse vs {:?} dense", matrix.n_rows(), matrix.n_cols(), x.shape()),
        ));
    }
    // Each output element sums its terms in value order (not column order),
    // so relabeling graph nodes permutes the output rows bit-exactly.
    let xv = x.values();
    let mut values = vec![0.0; matrix.n_rows() * d];
    let entries = matrix.entries();
    let mut row_start = 0;
    let mut terms: Vec<f64> = Vec::new();
    while row_start < entries.len() {
        let i = entries[row_start].0;
        let mut row_end = row_start;
        while row_end < entries.len() && entries[row_end].0 == i {
            row_end += 1;
        }
        let row = &entries[row_start..row_end];
        let dst = &mut values[i * d..(i + 1) * d];
        if row.len() == 1 {
            let (_, j, v) = row[0];
            let src = &xv[j * d..(j + 1) * d];
            for c in 0..d {
                dst[c] = v * src[c];
            }
        } else {
            for (c, slot) in dst.iter_mut().enumerate() {
                terms.clear();
                terms.extend(row.iter().map(|&(_, j, v)| v * xv[j * d + c]));
                terms.sort_unstable_by(f64::total_cmp);
                *slot = terms.iter().sum();
            }
        }
        row_start = row_end;
    }
    drop(xv);
    Ok(Tensor::from_op(
        vec![matrix.n_rows(), d],
        values,
        Op::Spmm { matrix: Rc::clone(matrix) },
        vec![x.clone()],
    ))
}

/// Mean of `-log softmax(logits)[i, labels[i]]` over the masked rows,
/// stabilized by per-row max subtraction.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize], mask: &[usize]) -> Result<Tensor> {
    if logits.rank() != 2 {
        return Err(Error::dim(
            "cross_entropy",
            format!("logits must be rank 2, got {:?}", logits.shape()),
        ));
    }
    let (n, c) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {n} logit rows",
            labels.len()
        )));
    }
    if mask.is_empty() {
        return Err(Error::InvalidArgument("cross-entropy mask is empty".into()));
    }
    for &row in mask {
        if row >= n {
            return Err(Error::InvalidArgument(format!("mask index {row} out of {n} rows")));
        }
        if labels[row] >= c {
            return Err(Error::InvalidArgument(format!(
                "label {} at row {row} out of range for {c} classes",
                labels[row]
            )));
        }
    }
    let x = logits.values();
    let mut probs = vec![0.0; mask.len() * c];
    let mut total = 0.0;
    for (mi, &row) in mask.iter().enumerate() {
        let r = &x[row * c..(row + 1) * c];
        let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (j, &v) in r.iter().enumerate() {
            let e = (v - m).exp();
            probs[mi * c + j] = e;
            z += e;
        }
        for j in 0..c {
            probs[mi * c + j] /= z;
        }
        total += m + z.ln() - r[labels[row]];
    }
    drop(x);
    let loss = total / mask.len() as f64;
    Ok(Tensor::from_op(
        vec![1],
        vec![loss],
        Op::CrossEntropy { labels: labels.to_vec(), mask: mask.to_vec(), probs },
        vec![logits.clone()],
    ))
}

impl Op {
    /// Vector-Jacobian product: map the output cotangent `dout` to one
    /// optional cotangent per input.
    pub(crate) fn vjp(
        &self,
        out: &Tensor,
        inputs: &[Tensor],
        dout: &[f64],
    ) -> Result<Vec<Option<Vec<f64>>>> {
        match self {
            Op::Matmul => {
                let (a, b) = (&inputs[0], &inputs[1]);
                let (k, n) = (b.shape()[0], b.shape()[1]);
                let m = a.lead_len();
                let mut da = vec![0.0; a.len()];
                let mut db = vec![0.0; b.len()];
                accumulate_dout_bt(dout, &b.values(), m, k, n, &mut da);
                accumulate_at_dout(&a.values(), dout, m, k, n, &mut db);
                Ok(vec![Some(da), Some(db)])
            }
            Op::Bmm => {
                let (a, b) = (&inputs[0], &inputs[1]);
                let (bs, m, k) = (a.shape()[0], a.shape()[1], a.shape()[2]);
                let n = b.shape()[2];
                let av = a.values();
                let bv = b.values();
                let mut da = vec![0.0; a.len()];
                let mut db = vec![0.0; b.len()];
                for batch in 0..bs {
                    let d_blk = &dout[batch * m * n..(batch + 1) * m * n];
                    accumulate_dout_bt(
                        d_blk,
                        &bv[batch * k * n..(batch + 1) * k * n],
                        m,
                        k,
                        n,
                        &mut da[batch * m * k..(batch + 1) * m * k],
                    );
                    accumulate_at_dout(
                        &av[batch * m * k..(batch + 1) * m * k],
                        d_blk,
                        m,
                        k,
                        n,
                        &mut db[batch * k * n..(batch + 1) * k * n],
                    );
                }
                Ok(vec![Some(da), Some(db)])
            }
            Op::Add(kind) => {
                let da = dout.to_vec();
                let db = match kind {
                    Broadcast::Same => dout.to_vec(),
                    Broadcast::RowVector => reduce_to_row(dout, inputs[1].last_dim()),
                };
                Ok(vec![Some(da), Some(db)])
            }
            Op::Mul(kind) => {
                let a = inputs[0].values();
                let b = inputs[1].values();
                match kind {
                    Broadcast::Same => {
                        let da: Vec<f64> = dout.iter().zip(b.iter()).map(|(d, y)| d * y).collect();
                        let db: Vec<f64> = dout.iter().zip(a.iter()).map(|(d, x)| d * x).collect();
                        Ok(vec![Some(da), Some(db)])
                    }
                    Broadcast::RowVector => {
                        let d = inputs[1].last_dim();
                        let da: Vec<f64> =
                            dout.iter().enumerate().map(|(i, g)| g * b[i % d]).collect();
                        let mut db = vec![0.0; d];
                        for (i, g) in dout.iter().enumerate() {
                            db[i % d] += g * a[i];
                        }
                        Ok(vec![Some(da), Some(db)])
                    }
                }
            }
            Op::Relu => {
                let x = inputs[0].values();
                let dx = dout
                    .iter()
                    .zip(x.iter())
                    .map(|(d, &v)| if v > 0.0 { *d } else { 0.0 })
                    .collect();
                Ok(vec![Some(dx)])
            }
            Op::Scale(c) => Ok(vec![Some(dout.iter().map(|d| c * d).collect())]),
            Op::Dropout { mask } => {
                Ok(vec![Some(dout.iter().zip(mask).map(|(d, m)| d * m).collect())])
            }
            Op::SoftmaxLast => {
                let s = out.values();
                let d = out.last_dim();
                let mut dx = vec![0.0; s.len()];
                for r in 0..out.lead_len() {
                    let sr = &s[r * d..(r + 1) * d];
                    let dr = &dout[r * d..(r + 1) * d];
                    let dot: f64 = sr.iter().zip(dr).map(|(a, b)| a * b).sum();
                    for j in 0..d {
                        dx[r * d + j] = sr[j] * (dr[j] - dot);
                    }
                }
                Ok(vec![Some(dx)])
            }
            Op::LayerNorm { eps } => {
                let x = inputs[0].values();
                let g = inputs[1].values();
                let d = inputs[0].last_dim();
                let rows = inputs[0].lead_len();
                let mut dx = vec![0.0; x.len()];
                let mut dgamma = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                for r in 0..rows {
                    let row = &x[r * d..(r + 1) * d];
                    let dr = &dout[r * d..(r + 1) * d];
                    let mean = row.iter().sum::<f64>() / d as f64;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv).collect();
                    let dg: Vec<f64> = dr.iter().zip(&g[..]).map(|(dy, gz)| dy * gz).collect();
                    let mean_dg = dg.iter().sum::<f64>() / d as f64;
                    let mean_dg_xhat =
                        dg.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for j in 0..d {
                        dbeta[j] += dr[j];
                        dgamma[j] += dr[j] * xhat[j];
                        dx[r * d + j] = inv * (dg[j] - mean_dg - xhat[j] * mean_dg_xhat);
                    }
                }
                Ok(vec![Some(dx), Some(dgamma), Some(dbeta)])
            }
            Op::Embedding { codes } => {
                let d = out.last_dim();
                let mut dt = vec![0.0; inputs[0].len()];
                for (r, &c) in codes.iter().enumerate() {
                    let src = &dout[r * d..(r + 1) * d];
                    let dst = &mut dt[c * d..(c + 1) * d];
                    for j in 0..d {
                        dst[j] += src[j];
                    }
                }
                Ok(vec![Some(dt)])
            }
            Op::StackMid => {
                let c = inputs.len();
                let d = out.last_dim();
                let n = out.shape()[0];
                let mut grads = Vec::with_capacity(c);
                for j in 0..c {
                    let mut dp = vec![0.0; n * d];
                    for i in 0..n {
                        dp[i * d..(i + 1) * d]
                            .copy_from_slice(&dout[(i * c + j) * d..(i * c + j + 1) * d]);
                    }
                    grads.push(Some(dp));
                }
                Ok(grads)
            }
            Op::ConcatLast { parts } => {
                let total: usize = parts.iter().sum();
                let rows = out.lead_len();
                let mut grads = Vec::with_capacity(parts.len());
                let mut offset = 0;
                for &w in parts {
                    let mut dp = vec![0.0; rows * w];
                    for r in 0..rows {
                        dp[r * w..(r + 1) * w]
                            .copy_from_slice(&dout[r * total + offset..r * total + offset + w]);
                    }
                    grads.push(Some(dp));
                    offset += w;
                }
                Ok(grads)
            }
            Op::ConcatRows { parts } => {
                let cols = out.shape()[1];
                let mut grads = Vec::with_capacity(parts.len());
                let mut offset = 0;
                for &rows in parts {
                    grads.push(Some(dout[offset * cols..(offset + rows) * cols].to_vec()));
                    offset += rows;
                }
                Ok(grads)
            }
            Op::SliceLast { start, len } => {
                let d = inputs[0].last_dim();
                let rows = inputs[0].lead_len();
                let mut dx = vec![0.0; inputs[0].len()];
                for r in 0..rows {
                    dx[r * d + start..r * d + start + len]
                        .copy_from_slice(&dout[r * len..(r + 1) * len]);
                }
                Ok(vec![Some(dx)])
            }
            Op::SliceRows { start, len } => {
                let cols = inputs[0].shape()[1];
                let mut dx = vec![0.0; inputs[0].len()];
                dx[start * cols..(start + len) * cols].copy_from_slice(dout);
                Ok(vec![Some(dx)])
            }
            Op::TransposeLast => {
                let shape = out.shape();
                let (m, n) = (shape[shape.len() - 2], shape[shape.len() - 1]);
                let batches = out.len() / (m * n);
                let mut dx = vec![0.0; out.len()];
                for b in 0..batches {
                    let src = &dout[b * m * n..(b + 1) * m * n];
                    let dst = &mut dx[b * m * n..(b + 1) * m * n];
                    for i in 0..m {
                        for j in 0..n {
                            dst[j * m + i] = src[i * n + j];
                        }
                    }
                }
                Ok(vec![Some(dx)])
            }
            Op::Reshape => Ok(vec![Some(dout.to_vec())]),
            Op::SumAll => Ok(vec![Some(vec![dout[0]; inputs[0].len()])]),
            Op::Spmm { matrix } => {
                let d = out.last_dim();
                let mut dx = vec![0.0; matrix.n_cols() * d];
                for &(i, j, v) in matrix.entries() {
                    let src = &dout[i * d..(i + 1) * d];
                    let dst = &mut dx[j * d..(j + 1) * d];
                    for c in 0..d {
                        dst[c] += v * src[c];
                    }
                }
                Ok(vec![Some(dx)])
            }
            Op::CrossEntropy { labels, mask, probs } => {
                let c = inputs[0].shape()[1];
                let scale = dout[0] / mask.len() as f64;
                let mut dx = vec![0.0; inputs[0].len()];
                for (mi, &row) in mask.iter().enumerate() {
                    for j in 0..c {
                        let indicator = if labels[row] == j { 1.0 } else { 0.0 };
                        dx[row * c + j] = (probs[mi * c + j] - indicator) * scale;
                    }
                }
                Ok(vec![Some(dx)])
            }
        }
    }
}
