//! Relational datasets: fixed-release loaders, balanced splits, a synthetic
//! generator with planted signal, and the on-disk directory layout
//! (one CSV per table, `schema.json`, optional `split.json`).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{
    load_table, write_table, Column, ColumnKind, FkLink, ForeignKeySpec, Table, TableSchema,
};

/// Tables plus foreign-key structure plus a classification task on one
/// target table, with a fixed train/val/test split.
#[derive(Clone, Debug)]
pub struct RelationalDataset {
    pub tables: BTreeMap<String, Table>,
    pub fk_specs: Vec<ForeignKeySpec>,
    pub target_table: String,
    pub target_column: String,
    /// Ordered label vocabulary; class index = position.
    pub classes: Vec<String>,
    pub split: Split,
    /// Columns that exist but must not be used as features for this task.
    pub feature_exclusions: Vec<String>,
    /// `"table.column" -> k`: encode this categorical column on its first
    /// k characters.
    pub prefix_hints: BTreeMap<String, usize>,
    /// Seed used if the split was generated rather than shipped.
    pub split_seed: Option<u64>,
    /// Loader observations (schema variants seen, synthesized tables, ...).
    pub notes: Vec<String>,
}

impl RelationalDataset {
    pub fn target(&self) -> &Table {
        &self.tables[&self.target_table]
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Class index per target row; `None` for missing/unknown labels.
    pub fn labels(&self) -> Vec<Option<usize>> {
        let by_name: BTreeMap<&str, usize> =
            self.classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let col = self.target().column(&self.target_column).expect("validated");
        col.cells()
            .iter()
            .map(|cell| cell.as_deref().and_then(|v| by_name.get(v).copied()))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let target = self.tables.get(&self.target_table).ok_or_else(|| {
            Error::Configuration(format!("target table '{}' not found", self.target_table))
        })?;
        let col = target.column(&self.target_column).ok_or_else(|| {
            Error::Configuration(format!(
                "target column '{}' missing from '{}'",
                self.target_column, self.target_table
            ))
        })?;
        let class_set: BTreeSet<&str> = self.classes.iter().map(String::as_str).collect();
        for cell in col.cells().iter().flatten() {
            if !class_set.contains(cell.as_str()) {
                return Err(Error::Integrity(format!(
                    "target value '{cell}' is not in the class vocabulary"
                )));
            }
        }
        for spec in &self.fk_specs {
            spec.validate(&self.tables)?;
        }
        let labels = self.labels();
        self.split.validate(target.row_count(), &labels)?;
        Ok(())
    }
}

/// Index lists into the target table.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn is_empty(&self) -> bool {
        self.train.is_empty() && self.val.is_empty() && self.test.is_empty()
    }

    /// Disjointness, index range, and label presence on every carried index.
    pub fn validate(&self, n_rows: usize, labels: &[Option<usize>]) -> Result<()> {
        let mut seen = HashSet::new();
        for (part, idx) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &i in idx.iter() {
                if i >= n_rows {
                    return Err(Error::Integrity(format!(
                        "{part} index {i} out of {n_rows} target rows"
                    )));
                }
                if !seen.insert(i) {
                    return Err(Error::Integrity(format!(
                        "index {i} appears in more than one split part"
                    )));
                }
                if labels[i].is_none() {
                    return Err(Error::Integrity(format!(
                        "{part} index {i} carries a missing label"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `split.json` payload.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitFile {
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn parse_split_file(text: &str) -> Result<SplitFile> {
    Ok(serde_json::from_str(text)?)
}

/// Numeric-aware total order on key strings, so "10" sorts after "9".
fn key_sort_key(key: &str) -> (u8, u64, String) {
    match key.parse::<u64>() {
        Ok(n) => (0, n, String::new()),
        Err(_) => (1, 0, key.to_string()),
    }
}

/// Balanced fixed split: `per_class` labeled rows per class into train, then
/// `n_val`/`n_test` sampled from the labeled remainder. Rows are ordered by
/// primary key before any sampling, so the selection is independent of file
/// row order.
pub fn fixed_split(
    keys: &[String],
    labels: &[Option<String>],
    classes: &[String],
    per_class: usize,
    n_val: usize,
    n_test: usize,
    seed: u64,
) -> Result<Split> {
    if keys.len() != labels.len() {
        return Err(Error::dim(
            "fixed_split",
            format!("{} keys vs {} labels", keys.len(), labels.len()),
        ));
    }
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by_key(|&i| key_sort_key(&keys[i]));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(per_class * classes.len());
    let mut taken: HashSet<usize> = HashSet::new();
    for class in classes {
        let mut candidates: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&i| labels[i].as_deref() == Some(class.as_str()))
            .collect();
        if candidates.len() < per_class {
            return Err(Error::InvalidArgument(format!(
                "class '{class}' has {} labeled rows, needs {per_class}",
                candidates.len()
            )));
        }
        candidates.shuffle(&mut rng);
        for &i in &candidates[..per_class] {
            train.push(i);
            taken.insert(i);
        }
    }

    let mut remainder: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| labels[i].is_some() && !taken.contains(&i))
        .collect();
    if remainder.len() < n_val + n_test {
        return Err(Error::InvalidArgument(format!(
            "{} labeled rows remain after training selection, need {} for val+test",
            remainder.len(),
            n_val + n_test
        )));
    }
    remainder.shuffle(&mut rng);
    let mut val: Vec<usize> = remainder[..n_val].to_vec();
    let mut test: Vec<usize> = remainder[n_val..n_val + n_test].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, val, test })
}

/// Convenience wrapper pulling keys and labels out of the target table.
pub fn fixed_split_for(
    target: &Table,
    target_column: &str,
    classes: &[String],
    per_class: usize,
    n_val: usize,
    n_test: usize,
    seed: u64,
) -> Result<Split> {
    let pk = target.primary_key_column().ok_or_else(|| {
        Error::Configuration(format!("table '{}' has no primary key", target.name()))
    })?;
    let keys: Vec<String> = pk.cells().iter().map(|c| c.clone().unwrap_or_default()).collect();
    let labels: Vec<Option<String>> = target
        .column(target_column)
        .ok_or_else(|| Error::Configuration(format!("no column '{target_column}'")))?
        .cells()
        .to_vec();
    fixed_split(&keys, &labels, classes, per_class, n_val, n_test, seed)
}

fn derive_classes(target: &Table, target_column: &str) -> Result<Vec<String>> {
    let col = target.column(target_column).ok_or_else(|| {
        Error::Configuration(format!("target column '{target_column}' not found"))
    })?;
    let mut classes: Vec<String> =
        col.cells().iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    classes.sort_by_key(|k| key_sort_key(k));
    if classes.is_empty() {
        return Err(Error::Integrity(format!("target column '{target_column}' has no labels")));
    }
    Ok(classes)
}

// ---------------------------------------------------------------------------
// Fixed-release loaders
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SjtuName {
    Tml1m,
    Tlf2k,
    Tacm12k,
}

impl FromStr for SjtuName {
    type Err = Error;

    fn from_str(s: &str) -> Result<SjtuName> {
        match s.to_ascii_uppercase().as_str() {
            "TML1M" => Ok(SjtuName::Tml1m),
            "TLF2K" => Ok(SjtuName::Tlf2k),
            "TACM12K" => Ok(SjtuName::Tacm12k),
            other => Err(Error::Configuration(format!(
                "unknown dataset '{other}' (expected TML1M, TLF2K, or TACM12K)"
            ))),
        }
    }
}

impl std::fmt::Display for SjtuName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SjtuName::Tml1m => "TML1M",
            SjtuName::Tlf2k => "TLF2K",
            SjtuName::Tacm12k => "TACM12K",
        })
    }
}

#[derive(Clone, Copy)]
enum ColCount {
    Exact(usize),
    /// Released variants disagree; accept either and record which was seen.
    OneOf(&'static [usize]),
}

struct TableExpectation {
    file: &'static str,
    table: &'static str,
    primary_key: Option<&'static str>,
    /// Known columns with kinds. With `extra_as_text`, header columns beyond
    /// these are accepted as text.
    columns: &'static [(&'static str, ColumnKind)],
    extra_as_text: bool,
    rows: usize,
    cols: ColCount,
}

/// (table name, id column, (source table, source column) list).
type SynthesizedEntity =
    (&'static str, &'static str, &'static [(&'static str, &'static str)]);

struct DatasetExpectation {
    tables: &'static [TableExpectation],
    fk_specs: fn() -> Vec<ForeignKeySpec>,
    target_table: &'static str,
    target_column: &'static str,
    n_classes: usize,
    feature_exclusions: &'static [&'static str],
    prefix_hints: &'static [(&'static str, usize)],
    /// Entity table synthesized from distinct ids in relation columns
    /// (node set with no table of its own): (table, id column, sources).
    synthesized_entity: Option<SynthesizedEntity>,
}

#[allow(clippy::too_many_arguments)]
fn fk(relation: &str, c0: &str, t0: &str, k0: &str, c1: &str, t1: &str, k1: &str, weight: Option<&str>) -> ForeignKeySpec {
    ForeignKeySpec {
        relation_table: relation.to_string(),
        links: vec![
            FkLink { column: c0.to_string(), table: t0.to_string(), key: k0.to_string() },
            FkLink { column: c1.to_string(), table: t1.to_string(), key: k1.to_string() },
        ],
        weight_column: weight.map(str::to_string),
    }
}

use ColumnKind::{Categorical, Identifier, Numerical, Text, Timestamp};

static TML1M: DatasetExpectation = DatasetExpectation {
    tables: &[
        TableExpectation {
            file: "users.csv",
            table: "users",
            primary_key: Some("UserID"),
            columns: &[
                ("UserID", Identifier),
                ("Gender", Categorical),
                ("Age", Categorical),
                ("Occupation", Categorical),
                ("Zip-code", Categorical),
            ],
            extra_as_text: false,
            rows: 6040,
            cols: ColCount::Exact(5),
        },
        TableExpectation {
            file: "movies.csv",
            table: "movies",
            primary_key: Some("MovieID"),
            columns: &[
                ("MovieID", Identifier),
                ("Title", Text),
                ("Year", Numerical),
                ("Genre", Categorical),
                ("Director", Text),
                ("Cast", Text),
                ("Runtime", Numerical),
                ("Languages", Text),
                ("Certificate", Categorical),
                ("Plot", Text),
                ("Url", Text),
            ],
            extra_as_text: false,
            rows: 3883,
            cols: ColCount::Exact(11),
        },
        TableExpectation {
            file: "ratings.csv",
            table: "ratings",
            primary_key: None,
            columns: &[
                ("UserID", Identifier),
                ("MovieID", Identifier),
                ("Rating", Numerical),
                ("Timestamp", Timestamp),
            ],
            extra_as_text: false,
            rows: 1_000_209,
            cols: ColCount::Exact(4),
        },
    ],
    fk_specs: || vec![fk("ratings", "UserID", "users", "UserID", "MovieID", "movies", "MovieID", None)],
    target_table: "users",
    target_column: "Age",
    n_classes: 7,
    feature_exclusions: &[],
    prefix_hints: &[("users.Zip-code", 2)],
    synthesized_entity: None,
};

static TLF2K: DatasetExpectation = DatasetExpectation {
    tables: &[
        TableExpectation {
            file: "artists.csv",
            table: "artists",
            primary_key: Some("artistID"),
            columns: &[
                ("artistID", Identifier),
                ("type", Categorical),
                ("name", Text),
                ("born", Categorical),
                ("yearsActive", Categorical),
                ("location", Text),
                ("genre", Categorical),
                ("tag_list", Text),
                ("biography", Text),
                ("url", Text),
            ],
            extra_as_text: false,
            rows: 9047,
            cols: ColCount::Exact(10),
        },
        TableExpectation {
            file: "user_artists.csv",
            table: "user_artists",
            primary_key: None,
            columns: &[
                ("userID", Identifier),
                ("artistID", Identifier),
                ("weight", Numerical),
            ],
            extra_as_text: false,
            rows: 80_009,
            cols: ColCount::Exact(3),
        },
        TableExpectation {
            file: "user_friends.csv",
            table: "user_friends",
            primary_key: None,
            columns: &[("userID", Identifier), ("friendID", Identifier)],
            extra_as_text: true,
            rows: 12_717,
            cols: ColCount::OneOf(&[2, 3]),
        },
    ],
    fk_specs: || {
        vec![
            fk("user_artists", "userID", "users", "userID", "artistID", "artists", "artistID", Some("weight")),
            fk("user_friends", "userID", "users", "userID", "friendID", "users", "userID", None),
        ]
    },
    target_table: "artists",
    target_column: "genre",
    n_classes: 11,
    // The released tags were distilled into the genre label itself, so they
    // are off-limits as features for this task.
    feature_exclusions: &["tag_list"],
    prefix_hints: &[],
    synthesized_entity: Some((
        "users",
        "userID",
        &[("user_artists", "userID"), ("user_friends", "userID"), ("user_friends", "friendID")],
    )),
};

static TACM12K: DatasetExpectation = DatasetExpectation {
    tables: &[
        TableExpectation {
            file: "papers.csv",
            table: "papers",
            primary_key: Some("paper_id"),
            columns: &[
                ("paper_id", Identifier),
                ("year", Numerical),
                ("conference", Categorical),
                ("title", Text),
                ("abstract", Text),
            ],
            extra_as_text: false,
            rows: 12_499,
            cols: ColCount::Exact(5),
        },
        TableExpectation {
            file: "authors.csv",
            table: "authors",
            primary_key: Some("author_id"),
            columns: &[
                ("author_id", Identifier),
                ("name", Text),
                ("firm", Categorical),
            ],
            extra_as_text: false,
            rows: 17_431,
            cols: ColCount::Exact(3),
        },
        TableExpectation {
            file: "citations.csv",
            table: "citations",
            primary_key: None,
            columns: &[("paper_id", Identifier), ("paper_id_cited", Identifier)],
            extra_as_text: false,
            rows: 30_789,
            cols: ColCount::Exact(2),
        },
        TableExpectation {
            file: "writings.csv",
            table: "writings",
            primary_key: None,
            columns: &[("paper_id", Identifier), ("author_id", Identifier)],
            extra_as_text: false,
            rows: 37_055,
            cols: ColCount::Exact(2),
        },
    ],
    fk_specs: || {
        vec![
            fk("citations", "paper_id", "papers", "paper_id", "paper_id_cited", "papers", "paper_id", None),
            fk("writings", "paper_id", "papers", "paper_id", "author_id", "authors", "author_id", None),
        ]
    },
    target_table: "papers",
    target_column: "conference",
    n_classes: 14,
    feature_exclusions: &[],
    prefix_hints: &[],
    synthesized_entity: None,
};

fn expectation_for(name: SjtuName) -> &'static DatasetExpectation {
    match name {
        SjtuName::Tml1m => &TML1M,
        SjtuName::Tlf2k => &TLF2K,
        SjtuName::Tacm12k => &TACM12K,
    }
}

/// Load one of the fixed releases, hard-asserting its published row and
/// column counts: these datasets never change, so a count mismatch means the
/// wrong file. Generates and writes `split.json` (seed 0) when absent.
pub fn load_sjtu(name: SjtuName, dir: &Path) -> Result<RelationalDataset> {
    load_sjtu_with_expectations(expectation_for(name), dir, None)
}

/// Like [`load_sjtu`] but regenerates the split with the given seed,
/// overwriting any existing `split.json`.
pub fn load_sjtu_with_split_seed(
    name: SjtuName,
    dir: &Path,
    seed: u64,
) -> Result<RelationalDataset> {
    load_sjtu_with_expectations(expectation_for(name), dir, Some(seed))
}

fn read_header(path: &Path) -> Result<Vec<String>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Configuration(format!("cannot open '{}': {e}", path.display())))?;
    let mut reader = csv::Reader::from_reader(file);
    Ok(reader.headers()?.iter().map(str::to_string).collect())
}

fn load_sjtu_with_expectations(
    exp: &DatasetExpectation,
    dir: &Path,
    split_override: Option<u64>,
) -> Result<RelationalDataset> {
    let mut tables = BTreeMap::new();
    let mut notes = Vec::new();
    for te in exp.tables {
        let path = dir.join(te.file);
        let header = read_header(&path)?;
        match te.cols {
            ColCount::Exact(n) if header.len() != n => {
                return Err(Error::SchemaDrift(format!(
                    "{}: expected {n} columns, found {}",
                    te.file,
                    header.len()
                )))
            }
            ColCount::OneOf(allowed) if !allowed.contains(&header.len()) => {
                return Err(Error::SchemaDrift(format!(
                    "{}: expected one of {allowed:?} columns, found {}",
                    te.file,
                    header.len()
                )))
            }
            _ => {}
        }
        if let ColCount::OneOf(_) = te.cols {
            notes.push(format!("{}: {}-column variant", te.file, header.len()));
        }

        let mut columns: BTreeMap<String, ColumnKind> =
            te.columns.iter().map(|(n, k)| (n.to_string(), *k)).collect();
        if te.extra_as_text {
            for name in &header {
                columns.entry(name.clone()).or_insert(ColumnKind::Text);
            }
        }
        let schema = TableSchema {
            table: te.table.to_string(),
            primary_key: te.primary_key.map(str::to_string),
            columns,
        };
        let table = load_table(&path, &schema)?;
        if table.row_count() != te.rows {
            return Err(Error::SchemaDrift(format!(
                "{}: expected {} rows, found {}",
                te.file,
                te.rows,
                table.row_count()
            )));
        }
        tables.insert(te.table.to_string(), table);
    }

    if let Some((name, id_col, sources)) = exp.synthesized_entity {
        let mut ids: BTreeSet<String> = BTreeSet::new();
        for (table, column) in sources {
            let col = tables[*table]
                .column(column)
                .ok_or_else(|| Error::Configuration(format!("no column '{column}' in '{table}'")))?;
            ids.extend(col.cells().iter().flatten().cloned());
        }
        let mut ordered: Vec<String> = ids.into_iter().collect();
        ordered.sort_by_key(|k| key_sort_key(k));
        notes.push(format!("{name}: synthesized from {} distinct ids", ordered.len()));
        let column = Column::new(id_col, ColumnKind::Identifier, ordered.into_iter().map(Some).collect());
        tables.insert(name.to_string(), Table::new(name, vec![column], Some(id_col.to_string()))?);
    }

    let target = &tables[exp.target_table];
    let classes = derive_classes(target, exp.target_column)?;
    if classes.len() != exp.n_classes {
        return Err(Error::SchemaDrift(format!(
            "{}.{}: expected {} classes, found {}",
            exp.target_table,
            exp.target_column,
            exp.n_classes,
            classes.len()
        )));
    }

    let split_path = dir.join("split.json");
    let (split, split_seed) = if split_override.is_none() && split_path.exists() {
        let sf = parse_split_file(&std::fs::read_to_string(&split_path)?)?;
        (Split { train: sf.train, val: sf.val, test: sf.test }, Some(sf.seed))
    } else {
        let seed = split_override.unwrap_or(0);
        let split = fixed_split_for(target, exp.target_column, &classes, 20, 500, 1000, seed)?;
        let sf = SplitFile {
            seed,
            train: split.train.clone(),
            val: split.val.clone(),
            test: split.test.clone(),
        };
        std::fs::write(&split_path, serde_json::to_string_pretty(&sf)?)?;
        (split, Some(seed))
    };

    let dataset = RelationalDataset {
        tables,
        fk_specs: (exp.fk_specs)(),
        target_table: exp.target_table.to_string(),
        target_column: exp.target_column.to_string(),
        classes,
        split,
        feature_exclusions: exp.feature_exclusions.iter().map(|s| s.to_string()).collect(),
        prefix_hints: exp.prefix_hints.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        split_seed,
        notes,
    };
    dataset.validate()?;
    Ok(dataset)
}

// ---------------------------------------------------------------------------
// Synthetic relational data with planted signal
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    /// Labels are a function of the target table's own columns.
    Table,
    /// Labels are the majority latent class of linked aux rows; target-table
    /// features carry no label information at all.
    Graph,
    /// Graph labels, with the target column revealing them half the time.
    Both,
}

fn default_n_aux() -> usize {
    200
}
fn default_edges() -> usize {
    6
}
fn default_per_class() -> usize {
    20
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_target: usize,
    #[serde(default = "default_n_aux")]
    pub n_aux: usize,
    pub classes: usize,
    #[serde(default = "default_edges")]
    pub edges_per_node: usize,
    pub signal: Signal,
    #[serde(default = "default_per_class")]
    pub per_class_train: usize,
    #[serde(default)]
    pub n_val: Option<usize>,
    #[serde(default)]
    pub n_test: Option<usize>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_target == 0 || self.n_aux == 0 || self.classes < 2 || self.edges_per_node == 0 {
            return Err(Error::InvalidArgument(
                "synthetic spec extents must be positive (>=2 classes)".into(),
            ));
        }
        if self.edges_per_node > self.n_aux {
            return Err(Error::InvalidArgument(format!(
                "cannot link {} distinct aux rows out of {}",
                self.edges_per_node, self.n_aux
            )));
        }
        Ok(())
    }
}

pub fn class_name(c: usize) -> String {
    format!("class_{c:02}")
}

/// Sample `k` distinct indices from `0..n`.
fn sample_distinct(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, n, k).into_vec()
}

/// Majority class with strict-majority guarantee via resampling, so the
/// neighbor-majority rule is an exact oracle for the generated labels.
fn strict_majority_links(
    rng: &mut ChaCha8Rng,
    n_aux: usize,
    k: usize,
    aux_class: &[usize],
    n_classes: usize,
) -> Result<(Vec<usize>, usize)> {
    for _ in 0..10_000 {
        let links = sample_distinct(rng, n_aux, k);
        let mut counts = vec![0usize; n_classes];
        for &a in &links {
            counts[aux_class[a]] += 1;
        }
        let best = *counts.iter().max().expect("nonempty");
        if counts.iter().filter(|&&c| c == best).count() == 1 {
            let label = counts.iter().position(|&c| c == best).expect("max exists");
            return Ok((links, label));
        }
    }
    Err(Error::InvalidArgument(
        "could not draw a strict-majority neighborhood; raise edges_per_node or classes".into(),
    ))
}

/// Generate a two-entity-table dataset (target, aux) plus one relation
/// table, with the label signal planted in the table, the graph, or both.
/// Bit-identical for equal (spec, seed).
pub fn synth_relational(spec: &SynthSpec, seed: u64) -> Result<RelationalDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = spec.classes;

    // Aux rows: latent class revealed by the `trait` column, plus pure noise.
    // Classes are assigned round-robin then shuffled: an imbalanced aux pool
    // would skew every majority vote toward its most common class.
    let mut aux_class: Vec<usize> = (0..spec.n_aux).map(|i| i % c).collect();
    aux_class.shuffle(&mut rng);
    let aux_noise: Vec<usize> = (0..spec.n_aux).map(|_| rng.random_range(0..8)).collect();

    // Links and labels.
    let mut links: Vec<Vec<usize>> = Vec::with_capacity(spec.n_target);
    let mut label_idx: Vec<usize> = Vec::with_capacity(spec.n_target);
    for _ in 0..spec.n_target {
        match spec.signal {
            Signal::Table => {
                links.push(sample_distinct(&mut rng, spec.n_aux, spec.edges_per_node));
                label_idx.push(rng.random_range(0..c));
            }
            Signal::Graph | Signal::Both => {
                let (l, y) =
                    strict_majority_links(&mut rng, spec.n_aux, spec.edges_per_node, &aux_class, c)?;
                links.push(l);
                label_idx.push(y);
            }
        }
    }

    // Target features. For the graph signal these are drawn without ever
    // reading the labels, so their mutual information with the labels is
    // zero by construction.
    let mut feat_a: Vec<String> = Vec::with_capacity(spec.n_target);
    let mut feat_b: Vec<String> = Vec::with_capacity(spec.n_target);
    let mut num_x: Vec<f64> = Vec::with_capacity(spec.n_target);
    for &label in label_idx.iter().take(spec.n_target) {
        let a = match spec.signal {
            Signal::Graph => format!("v{}", rng.random_range(0..6)),
            Signal::Table => format!("v{label}"),
            Signal::Both => {
                if rng.random::<f64>() < 0.5 {
                    format!("v{label}")
                } else {
                    format!("v{}", rng.random_range(0..c))
                }
            }
        };
        feat_a.push(a);
        feat_b.push(format!("w{}", rng.random_range(0..5)));
        num_x.push(rng.random_range(-1.0..1.0));
    }

    let classes: Vec<String> = (0..c).map(class_name).collect();
    let target_ids: Vec<String> = (0..spec.n_target).map(|i| format!("t{i}")).collect();
    let aux_ids: Vec<String> = (0..spec.n_aux).map(|i| format!("a{i}")).collect();

    let some = |v: Vec<String>| -> Vec<Option<String>> { v.into_iter().map(Some).collect() };
    let target = Table::new(
        "target",
        vec![
            Column::new("target_id", Identifier, some(target_ids.clone())),
            Column::new("feat_a", Categorical, some(feat_a)),
            Column::new("feat_b", Categorical, some(feat_b)),
            Column::new("num_x", Numerical, some(num_x.iter().map(f64::to_string).collect())),
            Column::new("label", Categorical, some(label_idx.iter().map(|&y| class_name(y)).collect())),
        ],
        Some("target_id".into()),
    )?;
    let aux = Table::new(
        "aux",
        vec![
            Column::new("aux_id", Identifier, some(aux_ids.clone())),
            Column::new("trait", Categorical, some(aux_class.iter().map(|z| format!("k{z}")).collect())),
            Column::new("shade", Categorical, some(aux_noise.iter().map(|s| format!("s{s}")).collect())),
        ],
        Some("aux_id".into()),
    )?;
    let mut link_t = Vec::new();
    let mut link_a = Vec::new();
    for (t, row_links) in links.iter().enumerate() {
        for &a in row_links {
            link_t.push(Some(target_ids[t].clone()));
            link_a.push(Some(aux_ids[a].clone()));
        }
    }
    let relation = Table::new(
        "links",
        vec![
            Column::new("t_id", Identifier, link_t),
            Column::new("a_id", Identifier, link_a),
        ],
        None,
    )?;

    let remaining = spec
        .n_target
        .checked_sub(spec.per_class_train * c)
        .filter(|&r| r >= 2)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "n_target {} cannot hold {} training rows per class",
                spec.n_target,
                spec.per_class_train
            ))
        })?;
    let n_val = spec.n_val.unwrap_or_else(|| (remaining / 3).min(500));
    let n_test = spec.n_test.unwrap_or(remaining - n_val);

    let split = fixed_split_for(&target, "label", &classes, spec.per_class_train, n_val, n_test, seed)?;

    let tables: BTreeMap<String, Table> = [
        ("target".to_string(), target),
        ("aux".to_string(), aux),
        ("links".to_string(), relation),
    ]
    .into_iter()
    .collect();
    let dataset = RelationalDataset {
        tables,
        fk_specs: vec![fk("links", "t_id", "target", "target_id", "a_id", "aux", "aux_id", None)],
        target_table: "target".into(),
        target_column: "label".into(),
        classes,
        split,
        feature_exclusions: vec![],
        prefix_hints: BTreeMap::new(),
        split_seed: Some(seed),
        notes: vec![format!(
            "synthetic: signal={:?} n_target={} n_aux={} k={} seed={seed}",
            spec.signal, spec.n_target, spec.n_aux, spec.edges_per_node
        )],
    };
    dataset.validate()?;
    Ok(dataset)
}

// ---------------------------------------------------------------------------
// Directory layout: one CSV per table, schema.json, optional split.json
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetTableEntry {
    #[serde(flatten)]
    pub schema: TableSchema,
    /// CSV file name; defaults to `<table>.csv`.
    #[serde(default)]
    pub file: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub tables: Vec<DatasetTableEntry>,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKeySpec>,
    pub target_table: String,
    pub target_column: String,
    #[serde(default)]
    pub classes: Option<Vec<String>>,
    #[serde(default)]
    pub feature_exclusions: Vec<String>,
    #[serde(default)]
    pub prefix_hints: BTreeMap<String, usize>,
}

pub fn parse_dataset_schema(text: &str) -> Result<DatasetSchema> {
    let schema: DatasetSchema = serde_json::from_str(text)?;
    if schema.tables.is_empty() {
        return Err(Error::Configuration("dataset schema lists no tables".into()));
    }
    for entry in &schema.tables {
        crate::table::validate_table_schema(&entry.schema)?;
    }
    if !schema.tables.iter().any(|t| t.schema.table == schema.target_table) {
        return Err(Error::Configuration(format!(
            "target table '{}' is not among the listed tables",
            schema.target_table
        )));
    }
    Ok(schema)
}

/// Load a dataset directory laid out by [`write_dataset`].
pub fn load_dir(dir: &Path) -> Result<RelationalDataset> {
    let schema_text = std::fs::read_to_string(dir.join("schema.json"))
        .map_err(|e| Error::Configuration(format!("cannot read schema.json: {e}")))?;
    let schema = parse_dataset_schema(&schema_text)?;
    let mut tables = BTreeMap::new();
    for entry in &schema.tables {
        let file = entry.file.clone().unwrap_or_else(|| format!("{}.csv", entry.schema.table));
        let table = load_table(&dir.join(file), &entry.schema)?;
        tables.insert(entry.schema.table.clone(), table);
    }
    let classes = match &schema.classes {
        Some(c) => c.clone(),
        None => derive_classes(&tables[&schema.target_table], &schema.target_column)?,
    };
    let split_path = dir.join("split.json");
    let (split, split_seed) = if split_path.exists() {
        let sf = parse_split_file(&std::fs::read_to_string(&split_path)?)?;
        (Split { train: sf.train, val: sf.val, test: sf.test }, Some(sf.seed))
    } else {
        (Split::default(), None)
    };
    let dataset = RelationalDataset {
        tables,
        fk_specs: schema.foreign_keys.clone(),
        target_table: schema.target_table.clone(),
        target_column: schema.target_column.clone(),
        classes,
        split,
        feature_exclusions: schema.feature_exclusions.clone(),
        prefix_hints: schema.prefix_hints.clone(),
        split_seed,
        notes: vec![],
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Write a dataset as one CSV per table plus `schema.json` and `split.json`.
pub fn write_dataset(ds: &RelationalDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for (name, table) in &ds.tables {
        let file = format!("{name}.csv");
        write_table(table, &dir.join(&file))?;
        entries.push(DatasetTableEntry {
            schema: TableSchema {
                table: name.clone(),
                primary_key: table.primary_key().map(str::to_string),
                columns: table
                    .columns()
                    .iter()
                    .map(|c| (c.name().to_string(), c.kind()))
                    .collect(),
            },
            file: Some(file),
        });
    }
    let schema = DatasetSchema {
        tables: entries,
        foreign_keys: ds.fk_specs.clone(),
        target_table: ds.target_table.clone(),
        target_column: ds.target_column.clone(),
        classes: Some(ds.classes.clone()),
        feature_exclusions: ds.feature_exclusions.clone(),
        prefix_hints: ds.prefix_hints.clone(),
    };
    std::fs::write(dir.join("schema.json"), serde_json::to_string_pretty(&schema)?)?;
    let sf = SplitFile {
        seed: ds.split_seed.unwrap_or(0),
        train: ds.split.train.clone(),
        val: ds.split.val.clone(),
        test: ds.split.test.clone(),
    };
    std::fs::write(dir.join("split.json"), serde_json::to_string_pretty(&sf)?)?;
    Ok(())
}
