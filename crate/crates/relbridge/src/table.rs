//! Typed table storage: loading, validation, and feature encoding.
//!
//! Tables are immutable after load. Cells keep their raw text so writing a
//! table back out reproduces every non-missing cell exactly; kind-specific
//! views (parsed numbers, categorical vocabularies) are built once at load.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Identifier,
    Categorical,
    Numerical,
    Text,
    Timestamp,
}

/// One named, homogeneously-typed column. Missing cells are `None`.
#[derive(Clone, Debug)]
pub struct Column {
    name: String,
    kind: ColumnKind,
    cells: Vec<Option<String>>,
    /// Distinct non-missing values in first-occurrence order (categorical only).
    vocab: Vec<String>,
    /// Parsed view (numerical only).
    numbers: Vec<Option<f64>>,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind, cells: Vec<Option<String>>) -> Column {
        let name = name.into();
        let mut col = Column { name, kind, cells, vocab: Vec::new(), numbers: Vec::new() };
        col.rebuild_views();
        col
    }

    fn rebuild_views(&mut self) {
        self.vocab.clear();
        self.numbers.clear();
        match self.kind {
            ColumnKind::Categorical => {
                let mut seen = HashSet::new();
                for cell in self.cells.iter().flatten() {
                    if seen.insert(cell.clone()) {
                        self.vocab.push(cell.clone());
                    }
                }
            }
            ColumnKind::Numerical => {
                self.numbers = self
                    .cells
                    .iter()
                    .map(|c| c.as_ref().and_then(|s| s.parse::<f64>().ok()))
                    .collect();
            }
            _ => {}
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ColumnKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, row: usize) -> Option<&str> {
        self.cells[row].as_deref()
    }

    pub fn cells(&self) -> &[Option<String>] {
        &self.cells
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn numbers(&self) -> &[Option<f64>] {
        &self.numbers
    }
}

/// Schema sidecar for one table file:
/// `{"table": name, "primary_key": col, "columns": {name: kind}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableSchema {
    pub table: String,
    #[serde(default)]
    pub primary_key: Option<String>,
    pub columns: BTreeMap<String, ColumnKind>,
}

pub fn parse_table_schema(json: &str) -> Result<TableSchema> {
    let schema: TableSchema = serde_json::from_str(json)?;
    validate_table_schema(&schema)?;
    Ok(schema)
}

pub fn validate_table_schema(schema: &TableSchema) -> Result<()> {
    if schema.table.is_empty() {
        return Err(Error::Configuration("schema has an empty table name".into()));
    }
    if schema.columns.is_empty() {
        return Err(Error::Configuration(format!("schema for '{}' lists no columns", schema.table)));
    }
    if let Some(pk) = &schema.primary_key {
        match schema.columns.get(pk) {
            None => {
                return Err(Error::Configuration(format!(
                    "primary key '{pk}' is not a column of '{}'",
                    schema.table
                )))
            }
            Some(kind) if *kind != ColumnKind::Identifier => {
                return Err(Error::Configuration(format!(
                    "primary key '{pk}' of '{}' must be an identifier column",
                    schema.table
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

/// An immutable table: ordered columns, optional primary key, one row per sample.
/// Relation tables (edge lists) have no single-column primary key.
#[derive(Clone, Debug)]
pub struct Table {
    name: String,
    columns: Vec<Column>,
    primary_key: Option<String>,
    row_count: usize,
}

impl Table {
    pub fn new(
        name: impl Into<String>,
        columns: Vec<Column>,
        primary_key: Option<String>,
    ) -> Result<Table> {
        let name = name.into();
        let row_count = columns.first().map_or(0, Column::len);
        let mut seen = HashSet::new();
        for col in &columns {
            if col.len() != row_count {
                return Err(Error::Integrity(format!(
                    "column '{}' of '{name}' has {} cells, expected {row_count}",
                    col.name(),
                    col.len()
                )));
            }
            if !seen.insert(col.name().to_string()) {
                return Err(Error::Integrity(format!(
                    "duplicate column name '{}' in '{name}'",
                    col.name()
                )));
            }
        }
        let table = Table { name, columns, primary_key, row_count };
        table.validate_primary_key()?;
        Ok(table)
    }

    fn validate_primary_key(&self) -> Result<()> {
        let Some(pk) = &self.primary_key else { return Ok(()) };
        let col = self.column(pk).ok_or_else(|| {
            Error::Configuration(format!("primary key '{pk}' missing from '{}'", self.name))
        })?;
        if col.kind() != ColumnKind::Identifier {
            return Err(Error::Configuration(format!(
                "primary key '{pk}' of '{}' must be an identifier column",
                self.name
            )));
        }
        let mut seen = HashSet::with_capacity(self.row_count);
        for (row, cell) in col.cells().iter().enumerate() {
            let Some(value) = cell else {
                return Err(Error::Integrity(format!(
                    "missing primary key in '{}' at row {}",
                    self.name,
                    row + 1
                )));
            };
            if !seen.insert(value.as_str()) {
                return Err(Error::Integrity(format!(
                    "duplicate primary key '{value}' in '{}'",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name() == name)
    }

    pub fn primary_key(&self) -> Option<&str> {
        self.primary_key.as_deref()
    }

    pub fn primary_key_column(&self) -> Option<&Column> {
        self.primary_key.as_deref().and_then(|pk| self.column(pk))
    }

    /// Map from primary-key value to row index.
    pub fn key_index(&self) -> Result<HashMap<String, usize>> {
        let col = self.primary_key_column().ok_or_else(|| {
            Error::Configuration(format!("table '{}' has no primary key", self.name))
        })?;
        let mut index = HashMap::with_capacity(self.row_count);
        for (row, cell) in col.cells().iter().enumerate() {
            if let Some(value) = cell {
                index.insert(value.clone(), row);
            }
        }
        Ok(index)
    }
}

/// A binary relation realized by a relation table: two link columns, each
/// referencing the primary key of an entity table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FkLink {
    pub column: String,
    pub table: String,
    pub key: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ForeignKeySpec {
    pub relation_table: String,
    pub links: Vec<FkLink>,
    #[serde(default)]
    pub weight_column: Option<String>,
}

impl ForeignKeySpec {
    pub fn validate(&self, tables: &BTreeMap<String, Table>) -> Result<()> {
        if self.links.len() != 2 {
            return Err(Error::Configuration(format!(
                "relation '{}' must have exactly two links, got {}",
                self.relation_table,
                self.links.len()
            )));
        }
        let rel = tables.get(&self.relation_table).ok_or_else(|| {
            Error::Configuration(format!("relation table '{}' not found", self.relation_table))
        })?;
        for link in &self.links {
            if rel.column(&link.column).is_none() {
                return Err(Error::Configuration(format!(
                    "relation '{}' has no column '{}'",
                    self.relation_table, link.column
                )));
            }
            let target = tables.get(&link.table).ok_or_else(|| {
                Error::Configuration(format!("link target table '{}' not found", link.table))
            })?;
            match target.primary_key() {
                Some(pk) if pk == link.key => {}
                _ => {
                    return Err(Error::Configuration(format!(
                        "'{}' is not the primary key of '{}'",
                        link.key, link.table
                    )))
                }
            }
        }
        if let Some(wc) = &self.weight_column {
            match rel.column(wc) {
                Some(col) if col.kind() == ColumnKind::Numerical => {}
                Some(_) => {
                    return Err(Error::Configuration(format!(
                        "weight column '{wc}' of '{}' must be numerical",
                        self.relation_table
                    )))
                }
                None => {
                    return Err(Error::Configuration(format!(
                        "weight column '{wc}' missing from '{}'",
                        self.relation_table
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Load a comma-separated UTF-8 file (one header row) against a schema.
/// Empty fields are missing cells and are recorded, not dropped.
pub fn load_table(path: &Path, schema: &TableSchema) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Configuration(format!("cannot open '{}': {e}", path.display()))
    })?;
    let source = path.display().to_string();
    load_table_from_reader(io::BufReader::new(file), schema, &source)
}

pub fn load_table_from_reader(
    reader: impl io::Read,
    schema: &TableSchema,
    source_name: &str,
) -> Result<Table> {
    validate_table_schema(schema)?;
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();

    let header_set: BTreeSet<&str> = headers.iter().map(String::as_str).collect();
    let schema_set: BTreeSet<&str> = schema.columns.keys().map(String::as_str).collect();
    if header_set != schema_set || headers.len() != schema.columns.len() {
        return Err(Error::SchemaDrift(format!(
            "{source_name}: header {headers:?} does not match schema columns {schema_set:?}"
        )));
    }

    let mut cells: Vec<Vec<Option<String>>> = vec![Vec::new(); headers.len()];
    for (row_idx, record) in csv.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::SchemaDrift(format!(
                "{source_name}: row {} has {} fields, expected {}",
                row_idx + 1,
                record.len(),
                headers.len()
            )));
        }
        for (col_idx, field) in record.iter().enumerate() {
            let kind = schema.columns[&headers[col_idx]];
            let cell = if field.is_empty() { None } else { Some(field.to_string()) };
            if let Some(value) = &cell {
                check_cell(value, kind).map_err(|message| Error::Cell {
                    source_name: source_name.to_string(),
                    row: row_idx + 1,
                    column: headers[col_idx].clone(),
                    message,
                })?;
            }
            cells[col_idx].push(cell);
        }
    }

    let columns = headers
        .iter()
        .zip(cells)
        .map(|(name, col_cells)| Column::new(name.clone(), schema.columns[name], col_cells))
        .collect();
    Table::new(schema.table.clone(), columns, schema.primary_key.clone())
}

fn check_cell(value: &str, kind: ColumnKind) -> std::result::Result<(), String> {
    match kind {
        ColumnKind::Numerical => value
            .parse::<f64>()
            .map(drop)
            .map_err(|_| format!("'{value}' is not a number")),
        ColumnKind::Timestamp => value
            .parse::<i64>()
            .map(drop)
            .map_err(|_| format!("'{value}' is not an integer timestamp")),
        _ => Ok(()),
    }
}

/// Write a table as CSV; missing cells become empty fields.
pub fn write_table(table: &Table, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(table.columns().iter().map(Column::name))?;
    for row in 0..table.row_count() {
        writer.write_record(table.columns().iter().map(|c| c.cell(row).unwrap_or("")))?;
    }
    writer.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Feature encoding
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Default)]
pub struct EncodeOptions {
    /// The prediction target, always excluded.
    pub target: Option<String>,
    /// Task-level exclusions (columns present but off-limits).
    pub exclude: BTreeSet<String>,
    /// Categorical columns encoded on a leading character prefix
    /// (near-unique raw values such as postal codes).
    pub prefix: BTreeMap<String, usize>,
}

/// Integer-coded categorical column; code 0 is reserved for missing/unseen,
/// real values take 1..=vocab_size.
#[derive(Clone, Debug, PartialEq)]
pub struct CatColumn {
    pub name: String,
    pub vocab_size: usize,
    pub codes: Vec<u32>,
}

/// Z-scored numerical column; missing cells are 0 after scoring.
#[derive(Clone, Debug, PartialEq)]
pub struct NumColumn {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EncodingReport {
    pub used_categorical: Vec<(String, usize, Option<String>)>,
    pub used_numerical: Vec<String>,
    pub excluded: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedFeatures {
    pub n_rows: usize,
    pub categorical: Vec<CatColumn>,
    pub numerical: Vec<NumColumn>,
    pub report: EncodingReport,
}

impl EncodedFeatures {
    pub fn n_categorical(&self) -> usize {
        self.categorical.len()
    }

    pub fn n_numerical(&self) -> usize {
        self.numerical.len()
    }

    /// Row subset in the given order (used for row-locality checks).
    pub fn rows(&self, idx: &[usize]) -> EncodedFeatures {
        EncodedFeatures {
            n_rows: idx.len(),
            categorical: self
                .categorical
                .iter()
                .map(|c| CatColumn {
                    name: c.name.clone(),
                    vocab_size: c.vocab_size,
                    codes: idx.iter().map(|&i| c.codes[i]).collect(),
                })
                .collect(),
            numerical: self
                .numerical
                .iter()
                .map(|c| NumColumn {
                    name: c.name.clone(),
                    values: idx.iter().map(|&i| c.values[i]).collect(),
                })
                .collect(),
            report: self.report.clone(),
        }
    }

    /// Width of the dense one-hot layout: one slot per categorical code
    /// (including the reserved 0) plus one per numerical column.
    pub fn onehot_dim(&self) -> usize {
        self.categorical.iter().map(|c| c.vocab_size + 1).sum::<usize>() + self.numerical.len()
    }

    /// Dense row-major `[n_rows x onehot_dim]` view for linear projections.
    pub fn to_onehot_matrix(&self) -> Vec<f64> {
        let dim = self.onehot_dim();
        let mut out = vec![0.0; self.n_rows * dim];
        for row in 0..self.n_rows {
            let mut offset = 0;
            for cat in &self.categorical {
                out[row * dim + offset + cat.codes[row] as usize] = 1.0;
                offset += cat.vocab_size + 1;
            }
            for num in &self.numerical {
                out[row * dim + offset] = num.values[row];
                offset += 1;
            }
        }
        out
    }
}

/// Encode usable feature columns: categorical to integer codes against the
/// load-time vocabulary (missing -> 0), numerical to z-scores (missing -> 0
/// after scoring). Identifier/text/timestamp columns and the target are
/// excluded and listed in the report.
pub fn encode_features(table: &Table, opts: &EncodeOptions) -> Result<EncodedFeatures> {
    let mut report = EncodingReport::default();
    let mut categorical = Vec::new();
    let mut numerical = Vec::new();

    for col in table.columns() {
        let name = col.name().to_string();
        if opts.target.as_deref() == Some(col.name()) {
            report.excluded.push((name, "target column".into()));
            continue;
        }
        if opts.exclude.contains(col.name()) {
            report.excluded.push((name, "excluded by task configuration".into()));
            continue;
        }
        match col.kind() {
            ColumnKind::Identifier => report.excluded.push((name, "identifier column".into())),
            ColumnKind::Text => report.excluded.push((name, "text column".into())),
            ColumnKind::Timestamp => report.excluded.push((name, "timestamp column".into())),
            ColumnKind::Categorical => {
                let (cat, note) = encode_categorical(col, opts.prefix.get(col.name()).copied());
                report.used_categorical.push((name, cat.vocab_size, note));
                categorical.push(cat);
            }
            ColumnKind::Numerical => {
                report.used_numerical.push(name.clone());
                numerical.push(NumColumn { name, values: z_score(col.numbers()) });
            }
        }
    }

    if categorical.is_empty() && numerical.is_empty() {
        return Err(Error::Configuration(format!(
            "table '{}' has no usable feature columns",
            table.name()
        )));
    }
    Ok(EncodedFeatures { n_rows: table.row_count(), categorical, numerical, report })
}

fn prefix_of(value: &str, k: usize) -> String {
    value.chars().take(k).collect()
}

fn encode_categorical(col: &Column, prefix: Option<usize>) -> (CatColumn, Option<String>) {
    // The effective vocabulary derives deterministically from the load-time
    // vocabulary order, so prefixing keeps first-occurrence semantics.
    let (mapping, vocab_size, note) = match prefix {
        Some(k) => {
            let mut prefix_vocab: Vec<String> = Vec::new();
            let mut codes: HashMap<String, u32> = HashMap::new();
            for value in col.vocab() {
                let p = prefix_of(value, k);
                if let std::collections::hash_map::Entry::Vacant(e) = codes.entry(p) {
                    prefix_vocab.push(e.key().clone());
                    e.insert(prefix_vocab.len() as u32);
                }
            }
            let mapping: HashMap<String, u32> = col
                .vocab()
                .iter()
                .map(|v| (v.clone(), codes[&prefix_of(v, k)]))
                .collect();
            (mapping, prefix_vocab.len(), Some(format!("prefix({k})")))
        }
        None => {
            let mapping: HashMap<String, u32> = col
                .vocab()
                .iter()
                .enumerate()
                .map(|(i, v)| (v.clone(), (i + 1) as u32))
                .collect();
            (mapping, col.vocab().len(), None)
        }
    };
    let codes = col
        .cells()
        .iter()
        .map(|cell| cell.as_ref().and_then(|v| mapping.get(v).copied()).unwrap_or(0))
        .collect();
    (CatColumn { name: col.name().to_string(), vocab_size, codes }, note)
}

fn z_score(numbers: &[Option<f64>]) -> Vec<f64> {
    let present: Vec<f64> = numbers.iter().flatten().copied().collect();
    if present.is_empty() {
        return vec![0.0; numbers.len()];
    }
    let n = present.len() as f64;
    let mean = present.iter().sum::<f64>() / n;
    let var = present.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let divisor = if var > 0.0 { var.sqrt() } else { 1.0 };
    numbers
        .iter()
        .map(|cell| cell.map_or(0.0, |v| (v - mean) / divisor))
        .collect()
}
