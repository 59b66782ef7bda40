//! Heterogeneous graphs from foreign-key relations, and the sparse adjacency
//! machinery the graph encoder runs on.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{ForeignKeySpec, Table};

/// Coordinate-list sparse matrix in canonical form: entries strictly sorted
/// by (row, col), duplicates merged by summation, exact zeros dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
    symmetric: bool,
}

impl SparseMatrix {
    pub fn from_coo(
        n_rows: usize,
        n_cols: usize,
        mut entries: Vec<(usize, usize, f64)>,
    ) -> Result<SparseMatrix> {
        for &(r, c, _) in &entries {
            if r >= n_rows || c >= n_cols {
                return Err(Error::InvalidArgument(format!(
                    "entry ({r}, {c}) out of bounds for a {n_rows}x{n_cols} matrix"
                )));
            }
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        // Duplicate runs are summed in value order so the result does not
        // depend on the order entries arrived in.
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        let mut run: Vec<f64> = Vec::new();
        let mut i = 0;
        while i < entries.len() {
            let (r, c, _) = entries[i];
            let mut j = i;
            while j < entries.len() && entries[j].0 == r && entries[j].1 == c {
                j += 1;
            }
            if j - i == 1 {
                merged.push(entries[i]);
            } else {
                run.clear();
                run.extend(entries[i..j].iter().map(|&(_, _, v)| v));
                run.sort_unstable_by(f64::total_cmp);
                merged.push((r, c, run.iter().sum()));
            }
            i = j;
        }
        merged.retain(|&(_, _, v)| v != 0.0);
        let symmetric = check_symmetric(n_rows, n_cols, &merged);
        Ok(SparseMatrix { n_rows, n_cols, entries: merged, symmetric })
    }

    pub fn identity(n: usize) -> SparseMatrix {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            entries: (0..n).map(|i| (i, i, 1.0)).collect(),
            symmetric: true,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn transpose(&self) -> SparseMatrix {
        let flipped = self.entries.iter().map(|&(r, c, v)| (c, r, v)).collect();
        SparseMatrix::from_coo(self.n_cols, self.n_rows, flipped)
            .expect("transpose of valid matrix is valid")
    }

    /// All entries set to 1 (edge pattern only).
    pub fn binarized(&self) -> SparseMatrix {
        SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            entries: self.entries.iter().map(|&(r, c, _)| (r, c, 1.0)).collect(),
            symmetric: self.symmetric,
        }
    }

    /// A + I (square only).
    pub fn add_identity(&self) -> Result<SparseMatrix> {
        if self.n_rows != self.n_cols {
            return Err(Error::dim(
                "add_identity",
                format!("matrix is {}x{}", self.n_rows, self.n_cols),
            ));
        }
        let mut entries = self.entries.clone();
        entries.extend((0..self.n_rows).map(|i| (i, i, 1.0)));
        SparseMatrix::from_coo(self.n_rows, self.n_cols, entries)
    }

    /// Row sums. Each row is accumulated in value order, not column order,
    /// so relabeling nodes cannot perturb the rounding of a degree.
    pub fn degrees(&self) -> Vec<f64> {
        let mut per_row: Vec<Vec<f64>> = vec![Vec::new(); self.n_rows];
        for &(r, _, v) in &self.entries {
            per_row[r].push(v);
        }
        per_row
            .into_iter()
            .map(|mut vals| {
                vals.sort_unstable_by(f64::total_cmp);
                vals.iter().sum()
            })
            .collect()
    }

    /// Symmetric normalization `D^{-1/2} (A + I) D^{-1/2}` (self-loops
    /// optional). Nodes of degree zero keep a unit scaling factor.
    pub fn gcn_normalize(&self, add_self_loops: bool) -> Result<SparseMatrix> {
        if self.n_rows != self.n_cols {
            return Err(Error::dim(
                "gcn_normalize",
                format!("adjacency must be square, got {}x{}", self.n_rows, self.n_cols),
            ));
        }
        if let Some(&(r, c, v)) = self.entries.iter().find(|&&(_, _, v)| v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "negative weight {v} at ({r}, {c})"
            )));
        }
        if !self.symmetric {
            return Err(Error::InvalidArgument("adjacency must be symmetric".into()));
        }
        let tilde = if add_self_loops { self.add_identity()? } else { self.clone() };
        let inv_sqrt: Vec<f64> = tilde
            .degrees()
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 })
            .collect();
        // v * (s_r * s_c): the scale product is commutative, so the mirrored
        // entry gets the bit-identical value and symmetry is exact.
        let entries = tilde
            .entries
            .iter()
            .map(|&(r, c, v)| (r, c, v * (inv_sqrt[r] * inv_sqrt[c])))
            .collect();
        Ok(SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            entries,
            symmetric: true,
        })
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.n_rows * self.n_cols];
        for &(r, c, v) in &self.entries {
            dense[r * self.n_cols + c] = v;
        }
        dense
    }

    /// Text export: one header line `n_rows,n_cols,nnz`, then one
    /// `row,col,value` line per entry in canonical order.
    pub fn write_coo(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{},{},{}", self.n_rows, self.n_cols, self.nnz())?;
        for &(r, c, v) in &self.entries {
            writeln!(w, "{r},{c},{v}")?;
        }
        Ok(())
    }

    pub fn to_coo_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_coo(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("coo text is ascii")
    }
}

fn check_symmetric(n_rows: usize, n_cols: usize, canonical: &[(usize, usize, f64)]) -> bool {
    if n_rows != n_cols {
        return false;
    }
    let lookup: HashMap<(usize, usize), f64> =
        canonical.iter().map(|&(r, c, v)| ((r, c), v)).collect();
    canonical
        .iter()
        .all(|&(r, c, v)| lookup.get(&(c, r)).is_some_and(|&m| m == v))
}

/// Parse the `write_coo` text format. Entries may arrive unsorted or with
/// duplicates; the result is canonicalized.
pub fn parse_coo(text: &str) -> Result<SparseMatrix> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("coo: empty input".into()))?;
    let dims: Vec<&str> = header.split(',').collect();
    if dims.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "coo: header must be 'n_rows,n_cols,nnz', got '{header}'"
        )));
    }
    let parse_extent = |s: &str, what: &str| -> Result<usize> {
        s.trim()
            .parse::<usize>()
            .map_err(|_| Error::InvalidArgument(format!("coo: bad {what} '{s}'")))
    };
    let n_rows = parse_extent(dims[0], "n_rows")?;
    let n_cols = parse_extent(dims[1], "n_cols")?;
    let nnz = parse_extent(dims[2], "nnz")?;
    if nnz > text.len() {
        return Err(Error::InvalidArgument(format!(
            "coo: claimed {nnz} entries exceeds input size"
        )));
    }

    let mut entries = Vec::with_capacity(nnz);
    for i in 0..nnz {
        let line = lines.next().ok_or_else(|| {
            Error::InvalidArgument(format!("coo: expected {nnz} entries, found {i}"))
        })?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "coo: line {}: expected 'row,col,value', got '{line}'",
                i + 2
            )));
        }
        let r = parse_extent(fields[0], "row")?;
        let c = parse_extent(fields[1], "col")?;
        let v = fields[2].trim().parse::<f64>().map_err(|_| {
            Error::InvalidArgument(format!("coo: line {}: bad value '{}'", i + 2, fields[2]))
        })?;
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "coo: line {}: value must be finite",
                i + 2
            )));
        }
        entries.push((r, c, v));
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(Error::InvalidArgument("coo: trailing data after entries".into()));
    }
    SparseMatrix::from_coo(n_rows, n_cols, entries)
}

// ---------------------------------------------------------------------------
// Heterogeneous graphs
// ---------------------------------------------------------------------------

/// Typed node sets with typed edge lists. Entity tables become node types;
/// relation tables contribute edges only.
#[derive(Clone, Debug)]
pub struct HeteroGraph {
    node_types: BTreeMap<String, usize>,
    edge_types: Vec<EdgeType>,
}

#[derive(Clone, Debug)]
pub struct EdgeType {
    pub src_type: String,
    pub relation: String,
    pub dst_type: String,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub weight: Option<Vec<f64>>,
}

impl HeteroGraph {
    pub fn node_types(&self) -> &BTreeMap<String, usize> {
        &self.node_types
    }

    pub fn edge_types(&self) -> &[EdgeType] {
        &self.edge_types
    }

    pub fn edge_count(&self) -> usize {
        self.edge_types.iter().map(|e| e.src.len()).sum()
    }

    /// Degree of a node counting both directions across all edge types.
    pub fn degree(&self, node_type: &str, index: usize) -> usize {
        let mut d = 0;
        for et in &self.edge_types {
            if et.src_type == node_type {
                d += et.src.iter().filter(|&&s| s == index).count();
            }
            if et.dst_type == node_type {
                d += et.dst.iter().filter(|&&t| t == index).count();
            }
        }
        d
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphBuildReport {
    /// Relation rows dropped because a referenced id was absent (or missing).
    pub dangling_dropped: usize,
    /// Relation rows merged into an existing edge.
    pub duplicates_merged: usize,
}

/// Build one node type per entity table and one edge per distinct relation
/// row. Dangling references are dropped and counted, never errors: real
/// exports contain them. Duplicate rows merge (weights sum).
pub fn build_fk_graph(
    tables: &BTreeMap<String, Table>,
    fk_specs: &[ForeignKeySpec],
) -> Result<(HeteroGraph, GraphBuildReport)> {
    for spec in fk_specs {
        spec.validate(tables)?;
    }
    let relation_names: BTreeSet<&str> =
        fk_specs.iter().map(|s| s.relation_table.as_str()).collect();
    let node_types: BTreeMap<String, usize> = tables
        .iter()
        .filter(|(name, _)| !relation_names.contains(name.as_str()))
        .map(|(name, t)| (name.clone(), t.row_count()))
        .collect();

    let mut report = GraphBuildReport::default();
    let mut edge_types = Vec::with_capacity(fk_specs.len());
    for spec in fk_specs {
        let rel = &tables[&spec.relation_table];
        let src_link = &spec.links[0];
        let dst_link = &spec.links[1];
        let src_index = tables[&src_link.table].key_index()?;
        let dst_index = tables[&dst_link.table].key_index()?;
        let src_col = rel.column(&src_link.column).expect("validated");
        let dst_col = rel.column(&dst_link.column).expect("validated");
        let weight_col = spec.weight_column.as_deref().map(|w| rel.column(w).expect("validated"));

        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for row in 0..rel.row_count() {
            let (Some(sv), Some(dv)) = (src_col.cell(row), dst_col.cell(row)) else {
                report.dangling_dropped += 1;
                continue;
            };
            let (Some(&s), Some(&d)) = (src_index.get(sv), dst_index.get(dv)) else {
                report.dangling_dropped += 1;
                continue;
            };
            let w = weight_col.and_then(|c| c.numbers()[row]).unwrap_or(1.0);
            match merged.entry((s, d)) {
                std::collections::btree_map::Entry::Occupied(mut e) => {
                    *e.get_mut() += w;
                    report.duplicates_merged += 1;
                }
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(w);
                }
            }
        }
        let mut src = Vec::with_capacity(merged.len());
        let mut dst = Vec::with_capacity(merged.len());
        let mut weights = Vec::with_capacity(merged.len());
        for ((s, d), w) in merged {
            src.push(s);
            dst.push(d);
            weights.push(w);
        }
        edge_types.push(EdgeType {
            src_type: src_link.table.clone(),
            relation: spec.relation_table.clone(),
            dst_type: dst_link.table.clone(),
            src,
            dst,
            weight: spec.weight_column.is_some().then_some(weights),
        });
    }
    Ok((HeteroGraph { node_types, edge_types }, report))
}

/// Flatten to a symmetric adjacency over the disjoint union of node sets.
/// Every hetero edge contributes both (u,v) and (v,u); with `use_weights`
/// false the result is a binary adjacency. Returns the block offset of each
/// node type in `type_order`.
pub fn to_homogeneous(
    graph: &HeteroGraph,
    type_order: &[String],
    use_weights: bool,
) -> Result<(SparseMatrix, BTreeMap<String, usize>)> {
    let ordered: BTreeSet<&str> = type_order.iter().map(String::as_str).collect();
    let known: BTreeSet<&str> = graph.node_types.keys().map(String::as_str).collect();
    if ordered != known || type_order.len() != graph.node_types.len() {
        return Err(Error::Configuration(format!(
            "type order {type_order:?} must cover node types {known:?} exactly once"
        )));
    }
    let mut offsets = BTreeMap::new();
    let mut total = 0;
    for name in type_order {
        offsets.insert(name.clone(), total);
        total += graph.node_types[name];
    }
    let mut entries = Vec::new();
    for et in &graph.edge_types {
        let so = offsets[&et.src_type];
        let d_o = offsets[&et.dst_type];
        for (i, (&s, &d)) in et.src.iter().zip(&et.dst).enumerate() {
            let w = if use_weights {
                et.weight.as_ref().map_or(1.0, |ws| ws[i])
            } else {
                1.0
            };
            entries.push((so + s, d_o + d, w));
            entries.push((d_o + d, so + s, w));
        }
    }
    let matrix = SparseMatrix::from_coo(total, total, entries)?;
    let matrix = if use_weights { matrix } else { matrix.binarized() };
    Ok((matrix, offsets))
}

// ---------------------------------------------------------------------------
// Composable transforms
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphTransform {
    AddSelfLoops,
    /// Symmetric degree normalization of the matrix as-is (no self-loops).
    SymNormalize,
}

impl GraphTransform {
    pub fn apply(&self, m: &SparseMatrix) -> Result<SparseMatrix> {
        match self {
            GraphTransform::AddSelfLoops => m.add_identity(),
            GraphTransform::SymNormalize => m.gcn_normalize(false),
        }
    }
}

/// Left-to-right composition; an empty pipeline is the identity.
#[derive(Clone, Debug, Default)]
pub struct TransformPipeline {
    steps: Vec<GraphTransform>,
}

pub fn compose_transforms(steps: Vec<GraphTransform>) -> TransformPipeline {
    TransformPipeline { steps }
}

impl TransformPipeline {
    pub fn steps(&self) -> &[GraphTransform] {
        &self.steps
    }

    pub fn apply(&self, m: &SparseMatrix) -> Result<SparseMatrix> {
        let mut out = m.clone();
        for step in &self.steps {
            out = step.apply(&out)?;
        }
        Ok(out)
    }
}
