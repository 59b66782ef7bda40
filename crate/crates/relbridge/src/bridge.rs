//! The co-trained relational model: a table encoder embeds the target
//! table's rows, other entity tables enter through learned projections, a
//! graph encoder propagates all node embeddings over the normalized
//! foreign-key adjacency, and a linear head classifies the target rows from
//! the combined table and graph views.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;
use std::rc::Rc;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{RelationalDataset, Split};
use crate::error::{Error, Result};
use crate::gnn::{GcnConfig, GcnEncoder};
use crate::graph::{build_fk_graph, to_homogeneous, GraphBuildReport, SparseMatrix};
use crate::init;
use crate::table::{encode_features, ColumnKind, EncodeOptions, EncodedFeatures};
use crate::tensor::{
    concat_last, concat_rows, softmax_cross_entropy, zero_grads, Adam, Parameter, Tensor,
};
use crate::tnn::{TnnConfig, TnnEncoder};

/// How the table embedding and the graph output of a target row combine
/// before the head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    Concat,
    Add,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BridgeConfig {
    /// Shared embedding width: the table encoder's output and the graph
    /// encoder's input.
    pub d_table: usize,
    pub tnn: TnnConfig,
    /// `None` disables graph propagation entirely (table-only model).
    pub graph: Option<GcnConfig>,
    pub lr: f64,
    pub epochs: usize,
    /// Dropout between graph layers; copied into the graph config at build.
    pub dropout_p: f64,
    pub seed: u64,
    /// Epochs without a validation-accuracy improvement before stopping.
    pub patience: usize,
    pub combine: Combine,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        BridgeConfig {
            d_table: 64,
            tnn: TnnConfig::default(),
            graph: Some(GcnConfig::new(vec![64, 64], 0.5)),
            lr: 0.01,
            epochs: 200,
            dropout_p: 0.5,
            seed: 0,
            patience: 40,
            combine: Combine::Concat,
        }
    }
}

impl BridgeConfig {
    pub fn validate(&self) -> Result<()> {
        self.tnn.validate()?;
        if self.tnn.output_dim != self.d_table {
            return Err(Error::Configuration(format!(
                "table encoder output {} must equal d_table {}",
                self.tnn.output_dim, self.d_table
            )));
        }
        if let Some(g) = &self.graph {
            g.validate()?;
            if self.combine == Combine::Add && g.output_dim() != self.d_table {
                return Err(Error::Configuration(format!(
                    "additive combination needs graph output {} == d_table {}",
                    g.output_dim(),
                    self.d_table
                )));
            }
        }
        if self.epochs == 0 {
            return Err(Error::Configuration("epochs must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Configuration(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout_p
            )));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Configuration(format!("learning rate {} is not positive", self.lr)));
        }
        Ok(())
    }

    /// Width entering the classification head.
    fn head_input_dim(&self) -> usize {
        let graph_out = self.graph.as_ref().map_or(self.d_table, GcnConfig::output_dim);
        match self.combine {
            Combine::Concat => self.d_table + graph_out,
            Combine::Add => self.d_table,
        }
    }
}

/// Everything a training run needs, with tensors stripped out so it is
/// cheap to share across seed workers.
pub struct PreparedDataset {
    pub label: String,
    /// Encoded features per entity table; absent for tables with no usable
    /// feature column (they get a learned type embedding instead).
    pub features: BTreeMap<String, EncodedFeatures>,
    /// One-hot feature matrices for non-target tables: (width, row-major).
    pub onehot: BTreeMap<String, (usize, Vec<f64>)>,
    /// Target first, remaining entity tables in name order.
    pub type_order: Vec<String>,
    pub offsets: BTreeMap<String, usize>,
    pub counts: BTreeMap<String, usize>,
    pub a_hat: Arc<SparseMatrix>,
    pub n_nodes: usize,
    pub n_target: usize,
    pub target_table: String,
    pub labels: Vec<Option<usize>>,
    pub classes: Vec<String>,
    pub split: Split,
    pub graph_report: GraphBuildReport,
}

impl PreparedDataset {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn target_offset(&self) -> usize {
        self.offsets[&self.target_table]
    }
}

fn encode_options_for(ds: &RelationalDataset, table: &str) -> EncodeOptions {
    let mut opts = EncodeOptions::default();
    if table == ds.target_table {
        opts.target = Some(ds.target_column.clone());
    }
    opts.exclude = ds.feature_exclusions.iter().cloned().collect();
    for (key, &k) in &ds.prefix_hints {
        if let Some((t, column)) = key.split_once('.') {
            if t == table {
                opts.prefix.insert(column.to_string(), k);
            }
        }
    }
    opts
}

fn has_usable_features(ds: &RelationalDataset, table: &str, opts: &EncodeOptions) -> bool {
    ds.tables[table].columns().iter().any(|c| {
        matches!(c.kind(), ColumnKind::Categorical | ColumnKind::Numerical)
            && opts.target.as_deref() != Some(c.name())
            && !opts.exclude.contains(c.name())
    })
}

/// Build the homogeneous normalized adjacency, block offsets, and encoded
/// features for every entity table.
pub fn prepare(ds: &RelationalDataset, label: &str) -> Result<PreparedDataset> {
    ds.validate()?;
    let (graph, graph_report) = build_fk_graph(&ds.tables, &ds.fk_specs)?;
    if !graph.node_types().contains_key(&ds.target_table) {
        return Err(Error::Configuration(format!(
            "target table '{}' is a relation table, not an entity table",
            ds.target_table
        )));
    }
    let mut type_order = vec![ds.target_table.clone()];
    type_order.extend(graph.node_types().keys().filter(|n| **n != ds.target_table).cloned());
    let (adj, offsets) = to_homogeneous(&graph, &type_order, false)?;
    let a_hat = Arc::new(adj.gcn_normalize(true)?);

    let mut features = BTreeMap::new();
    let mut onehot = BTreeMap::new();
    for name in &type_order {
        let opts = encode_options_for(ds, name);
        if !has_usable_features(ds, name, &opts) {
            if *name == ds.target_table {
                return Err(Error::Configuration(format!(
                    "target table '{name}' has no usable feature columns"
                )));
            }
            continue;
        }
        let encoded = encode_features(&ds.tables[name], &opts)?;
        if encoded.n_rows != graph.node_types()[name] {
            return Err(Error::Integrity(format!(
                "feature rows ({}) misaligned with node count ({}) for '{name}'",
                encoded.n_rows,
                graph.node_types()[name]
            )));
        }
        if *name != ds.target_table {
            onehot.insert(name.clone(), (encoded.onehot_dim(), encoded.to_onehot_matrix()));
        }
        features.insert(name.clone(), encoded);
    }

    let counts = graph.node_types().clone();
    let n_target = counts[&ds.target_table];
    Ok(PreparedDataset {
        label: label.to_string(),
        features,
        onehot,
        type_order,
        offsets,
        n_nodes: counts.values().sum(),
        counts,
        a_hat,
        n_target,
        target_table: ds.target_table.clone(),
        labels: ds.labels(),
        classes: ds.classes.clone(),
        split: ds.split.clone(),
        graph_report,
    })
}

/// The target table alone under an identity adjacency: the table-only
/// ablation trains on exactly this.
pub fn prepare_target_only(ds: &RelationalDataset, label: &str) -> Result<PreparedDataset> {
    ds.validate()?;
    let opts = encode_options_for(ds, &ds.target_table);
    let encoded = encode_features(&ds.tables[&ds.target_table], &opts)?;
    let n_target = encoded.n_rows;
    let mut features = BTreeMap::new();
    features.insert(ds.target_table.clone(), encoded);
    Ok(PreparedDataset {
        label: label.to_string(),
        features,
        onehot: BTreeMap::new(),
        type_order: vec![ds.target_table.clone()],
        offsets: [(ds.target_table.clone(), 0)].into_iter().collect(),
        counts: [(ds.target_table.clone(), n_target)].into_iter().collect(),
        a_hat: Arc::new(SparseMatrix::identity(n_target)),
        n_nodes: n_target,
        n_target,
        target_table: ds.target_table.clone(),
        labels: ds.labels(),
        classes: ds.classes.clone(),
        split: ds.split.clone(),
        graph_report: GraphBuildReport::default(),
    })
}

enum AuxEncoder {
    /// Linear projection of the table's one-hot features into d_table.
    Projection(Parameter),
    /// Learned shared embedding for tables with no usable features.
    TypeRow(Parameter),
}

pub struct BridgeModel {
    cfg: BridgeConfig,
    tnn: TnnEncoder,
    aux: Vec<(String, AuxEncoder)>,
    gcn: Option<GcnEncoder>,
    head_w: Parameter,
    head_b: Parameter,
    params: Vec<Parameter>,
}

impl BridgeModel {
    pub fn new(data: &PreparedDataset, cfg: &BridgeConfig) -> Result<BridgeModel> {
        cfg.validate()?;
        let seed = cfg.seed;
        let mut tnn_cfg = cfg.tnn;
        tnn_cfg.output_dim = cfg.d_table;
        let target_features = data.features.get(&data.target_table).ok_or_else(|| {
            Error::Configuration(format!("no features for target table '{}'", data.target_table))
        })?;
        let tnn = TnnEncoder::new(target_features, tnn_cfg, seed, "tnn")?;

        let mut aux = Vec::new();
        for name in data.type_order.iter().filter(|n| **n != data.target_table) {
            let encoder = match data.onehot.get(name) {
                Some((dim, _)) => AuxEncoder::Projection(init::glorot_param(
                    &format!("aux.{name}.proj"),
                    *dim,
                    cfg.d_table,
                    seed,
                )?),
                None => AuxEncoder::TypeRow(init::uniform_param(
                    &format!("aux.{name}.row"),
                    &[cfg.d_table],
                    0.1,
                    seed,
                )?),
            };
            aux.push((name.clone(), encoder));
        }

        let gcn = match &cfg.graph {
            Some(gcfg) => {
                let mut gcfg = gcfg.clone();
                gcfg.dropout_p = cfg.dropout_p;
                Some(GcnEncoder::new(cfg.d_table, gcfg, seed, "gcn")?)
            }
            None => None,
        };

        // Small head weights keep initial logits near uniform (first-epoch
        // loss starts at ~ln C); zero bias.
        let head_w = init::uniform_param("head.w", &[cfg.head_input_dim(), data.n_classes()], 0.01, seed)?;
        let head_b = init::const_param("head.b", &[data.n_classes()], 0.0)?;

        let mut params = tnn.params();
        for (_, enc) in &aux {
            params.push(match enc {
                AuxEncoder::Projection(p) | AuxEncoder::TypeRow(p) => p.clone(),
            });
        }
        if let Some(g) = &gcn {
            params.extend(g.params());
        }
        params.push(head_w.clone());
        params.push(head_b.clone());
        let mut names = BTreeSet::new();
        for p in &params {
            if !names.insert(p.name().to_string()) {
                return Err(Error::Integrity(format!("duplicate parameter name '{}'", p.name())));
            }
        }
        Ok(BridgeModel { cfg: cfg.clone(), tnn, aux, gcn, head_w, head_b, params })
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn config(&self) -> &BridgeConfig {
        &self.cfg
    }

    /// Node features for the whole graph, aligned with the block offsets:
    /// target rows carry table-encoder embeddings, other entity tables a
    /// learned projection of their encoded features. Also returns the target
    /// embedding block itself.
    pub fn assemble_node_features(&self, data: &PreparedDataset) -> Result<(Tensor, Tensor)> {
        let target_emb = self.tnn.encode(&data.features[&data.target_table])?;
        let mut parts: Vec<Tensor> = vec![target_emb.clone()];
        for (name, encoder) in &self.aux {
            let n = data.counts[name];
            let block = match encoder {
                AuxEncoder::Projection(w) => {
                    let (dim, matrix) = &data.onehot[name];
                    Tensor::new(&[n, *dim], matrix.clone())?.matmul(w.tensor())?
                }
                AuxEncoder::TypeRow(row) => Tensor::zeros(&[n, self.cfg.d_table])?.add(row.tensor())?,
            };
            parts.push(block);
        }
        let all = if parts.len() == 1 { parts[0].clone() } else { concat_rows(&parts)? };
        if all.shape()[0] != data.n_nodes {
            return Err(Error::Integrity(format!(
                "assembled {} node rows, graph has {}",
                all.shape()[0],
                data.n_nodes
            )));
        }
        Ok((all, target_emb))
    }

    /// Logits over the target rows.
    pub fn forward(
        &self,
        data: &PreparedDataset,
        training: bool,
        dropout_rng: &mut ChaCha8Rng,
    ) -> Result<Tensor> {
        let (all, target_emb) = self.assemble_node_features(data)?;
        let a_hat = Rc::new((*data.a_hat).clone());
        let propagated = match &self.gcn {
            Some(g) => g.encode(&all, &a_hat, training, dropout_rng)?,
            None => all,
        };
        let target_block = propagated.slice_rows(data.target_offset(), data.n_target)?;
        let combined = match self.cfg.combine {
            Combine::Concat => concat_last(&[target_emb, target_block])?,
            Combine::Add => target_emb.add(&target_block)?,
        };
        combined.matmul(self.head_w.tensor())?.add(self.head_b.tensor())
    }

    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.params.iter().map(Parameter::snapshot).collect()
    }

    pub fn restore(&self, snapshot: &[Vec<f64>]) -> Result<()> {
        if snapshot.len() != self.params.len() {
            return Err(Error::dim(
                "restore",
                format!("{} blobs for {} parameters", snapshot.len(), self.params.len()),
            ));
        }
        for (p, values) in self.params.iter().zip(snapshot) {
            p.restore(values.clone())?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

fn part_indices(split: &Split, part: SplitPart) -> &[usize] {
    match part {
        SplitPart::Train => &split.train,
        SplitPart::Val => &split.val,
        SplitPart::Test => &split.test,
    }
}

/// Per-epoch training record (`{"epoch": k, "train_loss": x, "val_acc": y}`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: Option<f64>,
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    for record in history {
        writeln!(out, "{}", serde_json::to_string(record)?)?;
    }
    Ok(())
}

/// Full-batch supervised training: forward, masked cross-entropy on the
/// train indices, backward, Adam. Keeps the parameters of the best
/// validation epoch. Deterministic given the config seed.
pub fn train(data: &PreparedDataset, cfg: &BridgeConfig) -> Result<(BridgeModel, Vec<EpochRecord>)> {
    if data.split.train.is_empty() {
        return Err(Error::Precondition("training mask is empty".into()));
    }
    for &i in &data.split.train {
        if data.labels.get(i).copied().flatten().is_none() {
            return Err(Error::Precondition(format!("train row {i} has no label")));
        }
    }
    let model = BridgeModel::new(data, cfg)?;
    let labels: Vec<usize> = data.labels.iter().map(|l| l.unwrap_or(0)).collect();
    let mut adam = Adam::new(cfg.lr);
    let mut dropout_rng = init::rng_for(cfg.seed, "dropout");
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Vec<Vec<f64>>, usize)> = None;
    let mut stale_epochs = 0;

    for epoch in 0..cfg.epochs {
        zero_grads(&model.params);
        let logits = model.forward(data, true, &mut dropout_rng)?;
        let loss = softmax_cross_entropy(&logits, &labels, &data.split.train)?;
        let loss_value = loss.item();
        if !loss_value.is_finite() {
            let _ = loss.backward();
            let mut grad_norms: Vec<(String, f64)> =
                model.params.iter().map(|p| (p.name().to_string(), p.grad_norm())).collect();
            grad_norms.sort_by(|a, b| b.1.total_cmp(&a.1));
            grad_norms.truncate(8);
            return Err(Error::NonFinite { epoch, loss: loss_value, grad_norms });
        }
        loss.backward()?;
        adam.step(&model.params)?;

        let val_acc = if data.split.val.is_empty() {
            None
        } else {
            Some(evaluate(&model, data, SplitPart::Val)?)
        };
        history.push(EpochRecord { epoch, train_loss: loss_value, val_acc });

        if let Some(acc) = val_acc {
            let improved = best.as_ref().is_none_or(|(b, _, _)| acc > *b);
            if improved {
                best = Some((acc, model.snapshot(), epoch));
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if stale_epochs >= cfg.patience {
                    break;
                }
            }
        }
    }

    if let Some((_, snapshot, _)) = &best {
        model.restore(snapshot)?;
    }
    Ok((model, history))
}

pub(crate) fn argmax_tie_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Accuracy of argmax predictions (ties resolve to the lowest class index)
/// over one split part.
pub fn evaluate(model: &BridgeModel, data: &PreparedDataset, part: SplitPart) -> Result<f64> {
    let indices = part_indices(&data.split, part);
    accuracy_of_logits(model, data, indices)
}

fn accuracy_of_logits(model: &BridgeModel, data: &PreparedDataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("evaluation split is empty".into()));
    }
    let mut rng = init::rng_for(model.cfg.seed, "eval");
    let logits = model.forward(data, false, &mut rng)?;
    let values = logits.to_vec();
    let c = data.n_classes();
    let mut correct = 0usize;
    for &i in indices {
        let truth = data.labels[i].ok_or_else(|| {
            Error::InvalidArgument(format!("row {i} in the evaluation split has no label"))
        })?;
        if argmax_tie_lowest(&values[i * c..(i + 1) * c]) == truth {
            correct += 1;
        }
    }
    Ok(correct as f64 / indices.len() as f64)
}

/// Uniform-random predictor accuracy over the given rows.
pub fn random_accuracy(
    n_classes: usize,
    labels: &[Option<usize>],
    indices: &[usize],
    seed: u64,
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("evaluation split is empty".into()));
    }
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut correct = 0usize;
    for &i in indices {
        let truth = labels[i]
            .ok_or_else(|| Error::InvalidArgument(format!("row {i} has no label")))?;
        if rng.random_range(0..n_classes) == truth {
            correct += 1;
        }
    }
    Ok(correct as f64 / indices.len() as f64)
}

// ---------------------------------------------------------------------------
// Checkpoints: named parameter blobs with shape headers
// ---------------------------------------------------------------------------

const CHECKPOINT_MAGIC: &[u8; 8] = b"RBCK0001";
const MAX_NAME_LEN: usize = 4096;
const MAX_VALUES: usize = 100_000_000;

pub fn save_checkpoint(params: &[Parameter], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params {
        let name = p.name().as_bytes();
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name)?;
        let shape = p.tensor().shape();
        out.write_all(&[shape.len() as u8])?;
        for &d in shape {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in p.tensor().to_vec() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub type CheckpointBlob = (String, Vec<usize>, Vec<f64>);

pub fn load_checkpoint(path: &Path) -> Result<Vec<CheckpointBlob>> {
    decode_checkpoint(&std::fs::read(path)?)
}

/// Decode the binary checkpoint format; every length is validated before it
/// is trusted, so arbitrary bytes fail cleanly instead of allocating wildly.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<CheckpointBlob>> {
    let mut cursor = bytes;
    let bad = |msg: &str| Error::InvalidArgument(format!("checkpoint: {msg}"));
    let mut magic = [0u8; 8];
    cursor.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("wrong magic"));
    }
    let mut u32buf = [0u8; 4];
    cursor.read_exact(&mut u32buf).map_err(|_| bad("truncated count"))?;
    let count = u32::from_le_bytes(u32buf) as usize;
    if count > 1_000_000 {
        return Err(bad("implausible parameter count"));
    }
    let mut blobs = Vec::new();
    for _ in 0..count {
        cursor.read_exact(&mut u32buf).map_err(|_| bad("truncated name length"))?;
        let name_len = u32::from_le_bytes(u32buf) as usize;
        if name_len > MAX_NAME_LEN || name_len > cursor.len() {
            return Err(bad("bad name length"));
        }
        let mut name_bytes = vec![0u8; name_len];
        cursor.read_exact(&mut name_bytes).map_err(|_| bad("truncated name"))?;
        let name = String::from_utf8(name_bytes).map_err(|_| bad("name is not utf-8"))?;
        let mut rank_buf = [0u8; 1];
        cursor.read_exact(&mut rank_buf).map_err(|_| bad("truncated rank"))?;
        let rank = rank_buf[0] as usize;
        if rank == 0 || rank > 3 {
            return Err(bad("rank out of range"));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut u64buf = [0u8; 8];
        let mut total: usize = 1;
        for _ in 0..rank {
            cursor.read_exact(&mut u64buf).map_err(|_| bad("truncated extent"))?;
            let d = u64::from_le_bytes(u64buf) as usize;
            if d == 0 {
                return Err(bad("zero extent"));
            }
            total = total.checked_mul(d).ok_or_else(|| bad("extent overflow"))?;
            if total > MAX_VALUES {
                return Err(bad("implausible value count"));
            }
            shape.push(d);
        }
        if cursor.len() < total * 8 {
            return Err(bad("truncated values"));
        }
        let mut values = Vec::with_capacity(total);
        for _ in 0..total {
            cursor.read_exact(&mut u64buf).map_err(|_| bad("truncated value"))?;
            values.push(f64::from_le_bytes(u64buf));
        }
        blobs.push((name, shape, values));
    }
    if !cursor.is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok(blobs)
}

/// Load checkpoint blobs into matching parameters (by name and shape).
pub fn apply_checkpoint(params: &[Parameter], blobs: &[CheckpointBlob]) -> Result<()> {
    let by_name: BTreeMap<&str, &CheckpointBlob> =
        blobs.iter().map(|b| (b.0.as_str(), b)).collect();
    for p in params {
        let (_, shape, values) = by_name.get(p.name()).ok_or_else(|| {
            Error::InvalidArgument(format!("checkpoint is missing parameter '{}'", p.name()))
        })?;
        if shape.as_slice() != p.tensor().shape() {
            return Err(Error::dim(
                "apply_checkpoint",
                format!(
                    "parameter '{}' has shape {:?}, checkpoint holds {:?}",
                    p.name(),
                    p.tensor().shape(),
                    shape
                ),
            ));
        }
        p.restore(values.clone())?;
    }
    Ok(())
}
