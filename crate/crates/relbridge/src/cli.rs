//! Command-line orchestration: load a dataset, build the graph, train one
//! model per seed on a bounded worker pool, and report mean +/- std test
//! accuracy in a plain-text table plus an append-safe JSONL row file.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bridge::{
    evaluate, prepare, prepare_target_only, random_accuracy, save_checkpoint, train, write_history,
    BridgeConfig, PreparedDataset, SplitPart,
};
use crate::datasets::{
    load_dir, load_sjtu, load_sjtu_with_split_seed, synth_relational, write_dataset, SjtuName,
    SynthSpec,
};
use crate::error::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "relbridge", version, about = "Relational table learning over foreign-key graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train and evaluate per a JSON run config; writes runs.jsonl and report.txt.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Regenerate the fixed split file of a released dataset directory.
    Split {
        /// TML1M, TLF2K, or TACM12K.
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a synthetic dataset directory from a spec file.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Bridge,
    TnnOnly,
    Random,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Bridge => "bridge",
            ModelKind::TnnOnly => "tnn_only",
            ModelKind::Random => "random",
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    /// One of the released datasets in `dir`.
    Sjtu { name: String, dir: PathBuf },
    /// Synthetic dataset generated in-process.
    Synth {
        spec: SynthSpec,
        #[serde(default)]
        seed: u64,
    },
    /// A dataset directory with schema.json.
    Dir { dir: PathBuf },
}

impl DatasetSpec {
    fn label(&self) -> String {
        match self {
            DatasetSpec::Sjtu { name, .. } => name.to_uppercase(),
            DatasetSpec::Synth { spec, seed } => {
                format!("synth-{:?}-c{}-n{}-s{seed}", spec.signal, spec.classes, spec.n_target)
                    .to_lowercase()
            }
            DatasetSpec::Dir { dir } => dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| dir.display().to_string()),
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

fn default_workers() -> usize {
    4
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub model: ModelKind,
    #[serde(default)]
    pub bridge: BridgeConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text)?;
    validate_run_config(&cfg)?;
    Ok(cfg)
}

/// Everything checkable before any work starts.
fn validate_run_config(cfg: &RunConfig) -> Result<()> {
    if cfg.seeds.is_empty() {
        return Err(Error::Configuration("seeds list is empty".into()));
    }
    let mut seen = BTreeSet::new();
    for &s in &cfg.seeds {
        if !seen.insert(s) {
            return Err(Error::Configuration(format!("seed {s} listed twice")));
        }
    }
    if cfg.workers == 0 {
        return Err(Error::Configuration("workers must be >= 1".into()));
    }
    match cfg.model {
        ModelKind::Bridge | ModelKind::TnnOnly => cfg.bridge.validate()?,
        ModelKind::Random => {}
    }
    if let DatasetSpec::Sjtu { name, .. } = &cfg.dataset {
        name.parse::<SjtuName>()?;
    }
    if let DatasetSpec::Synth { spec, .. } = &cfg.dataset {
        spec.validate()?;
    }
    Ok(())
}

/// One row of runs.jsonl: the outcome of a single (model, dataset, seed)
/// run plus the fully resolved configuration that produced it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedResult {
    pub dataset: String,
    pub model: ModelKind,
    pub seed: u64,
    pub test_acc: f64,
    #[serde(default)]
    pub val_acc: Option<f64>,
    #[serde(default)]
    pub epochs_run: usize,
    #[serde(default)]
    pub config: Option<BridgeConfig>,
}

/// Train/evaluate one seed. Pure apart from optional artifact files.
pub fn run_one_seed(
    data: &PreparedDataset,
    model: ModelKind,
    base: &BridgeConfig,
    seed: u64,
    artifacts_dir: Option<&Path>,
) -> Result<SeedResult> {
    match model {
        ModelKind::Random => {
            let acc = random_accuracy(data.n_classes(), &data.labels, &data.split.test, seed)?;
            Ok(SeedResult {
                dataset: data.label.clone(),
                model,
                seed,
                test_acc: acc,
                val_acc: None,
                epochs_run: 0,
                config: None,
            })
        }
        ModelKind::Bridge | ModelKind::TnnOnly => {
            let mut cfg = base.clone();
            cfg.seed = seed;
            if model == ModelKind::TnnOnly {
                cfg.graph = None;
            }
            let (trained, history) = train(data, &cfg)?;
            let test_acc = evaluate(&trained, data, SplitPart::Test)?;
            let val_acc = if data.split.val.is_empty() {
                None
            } else {
                Some(evaluate(&trained, data, SplitPart::Val)?)
            };
            if let Some(dir) = artifacts_dir {
                write_history(&dir.join(format!("history_{model}_seed{seed}.jsonl")), &history)?;
                save_checkpoint(trained.params(), &dir.join(format!("{model}_seed{seed}.ckpt")))?;
            }
            Ok(SeedResult {
                dataset: data.label.clone(),
                model,
                seed,
                test_acc,
                val_acc,
                epochs_run: history.len(),
                config: Some(cfg),
            })
        }
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

/// Plain-text accuracy table grouped by (dataset, model).
pub fn render_report(rows: &[SeedResult]) -> String {
    let mut groups: BTreeSet<(String, String)> = BTreeSet::new();
    for r in rows {
        groups.insert((r.dataset.clone(), r.model.to_string()));
    }
    let mut out = String::new();
    out.push_str(&format!(
        "{:<28} {:<10} {:>6} {:>14}\n",
        "dataset", "model", "seeds", "test acc"
    ));
    for (dataset, model) in groups {
        let accs: Vec<f64> = rows
            .iter()
            .filter(|r| r.dataset == dataset && r.model.to_string() == model)
            .map(|r| r.test_acc)
            .collect();
        let (mean, std) = mean_std(&accs);
        out.push_str(&format!(
            "{:<28} {:<10} {:>6} {:>8.3}\u{b1}{:.3}\n",
            dataset,
            model,
            accs.len(),
            mean,
            std
        ));
    }
    out
}

fn read_existing_rows(path: &Path) -> Result<Vec<SeedResult>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: SeedResult = serde_json::from_str(line).map_err(|e| {
            Error::InvalidArgument(format!("{}:{}: bad result row: {e}", path.display(), i + 1))
        })?;
        rows.push(row);
    }
    Ok(rows)
}

fn load_dataset(spec: &DatasetSpec) -> Result<crate::datasets::RelationalDataset> {
    match spec {
        DatasetSpec::Sjtu { name, dir } => load_sjtu(name.parse()?, dir),
        DatasetSpec::Synth { spec, seed } => synth_relational(spec, *seed),
        DatasetSpec::Dir { dir } => load_dir(dir),
    }
}

/// Execute a run config: per-seed results are flushed to runs.jsonl as they
/// finish; rerunning with more seeds extends the file, never overwrites.
pub fn execute_run(cfg: &RunConfig) -> Result<String> {
    let dataset = load_dataset(&cfg.dataset)?;
    let label = cfg.dataset.label();
    let prepared = Arc::new(match cfg.model {
        ModelKind::Bridge => prepare(&dataset, &label)?,
        ModelKind::TnnOnly | ModelKind::Random => prepare_target_only(&dataset, &label)?,
    });

    let mut existing = Vec::new();
    let mut writer: Option<std::fs::File> = None;
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("runs.jsonl");
        existing = read_existing_rows(&path)?;
        writer = Some(std::fs::OpenOptions::new().create(true).append(true).open(path)?);
    }
    let done: BTreeSet<(String, String, u64)> = existing
        .iter()
        .map(|r| (r.dataset.clone(), r.model.to_string(), r.seed))
        .collect();
    let pending: Vec<u64> = cfg
        .seeds
        .iter()
        .copied()
        .filter(|s| !done.contains(&(label.clone(), cfg.model.to_string(), *s)))
        .collect();

    let (tx, rx) = mpsc::channel::<std::result::Result<SeedResult, String>>();
    let queue = Arc::new(Mutex::new(pending.clone()));
    let n_workers = cfg.workers.min(pending.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..n_workers {
            let queue = Arc::clone(&queue);
            let tx = tx.clone();
            let prepared = Arc::clone(&prepared);
            let base = cfg.bridge.clone();
            let model = cfg.model;
            let artifacts = cfg.output_dir.clone();
            scope.spawn(move || loop {
                let seed = { queue.lock().expect("queue lock").pop() };
                let Some(seed) = seed else { break };
                let outcome = run_one_seed(&prepared, model, &base, seed, artifacts.as_deref())
                    .map_err(|e| format!("seed {seed}: {e}"));
                if tx.send(outcome).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut rows = existing.clone();
        let mut first_error: Option<String> = None;
        for outcome in rx {
            match outcome {
                Ok(result) => {
                    if let Some(w) = writer.as_mut() {
                        // Flush each row as it lands so partial progress
                        // survives a later failure.
                        writeln!(w, "{}", serde_json::to_string(&result)?)
                            .and_then(|()| w.flush())?;
                    }
                    rows.push(result);
                }
                Err(message) => first_error = first_error.or(Some(message)),
            }
        }
        if let Some(message) = first_error {
            return Err(Error::InvalidArgument(format!("run failed: {message}")));
        }
        rows.sort_by(|a, b| {
            (&a.dataset, a.model.to_string(), a.seed).cmp(&(&b.dataset, b.model.to_string(), b.seed))
        });
        let report = render_report(&rows);
        if let Some(dir) = &cfg.output_dir {
            std::fs::write(dir.join("report.txt"), &report)?;
        }
        Ok(report)
    })
}

/// Exit code 1: configuration problems. Exit code 2: runtime failures.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(output) => {
            print!("{output}");
            0
        }
        Err((code, err)) => {
            eprintln!("error: {err}");
            code
        }
    }
}

fn dispatch(command: &Command) -> std::result::Result<String, (i32, Error)> {
    match command {
        Command::Run { config } => {
            let text = std::fs::read_to_string(config)
                .map_err(|e| (1, Error::Configuration(format!("cannot read config: {e}"))))?;
            let cfg = parse_run_config(&text).map_err(|e| (1, e))?;
            execute_run(&cfg).map_err(|e| (2, e))
        }
        Command::Split { dataset, dir, seed } => {
            let name: SjtuName = dataset.parse().map_err(|e| (1, e))?;
            let ds = load_sjtu_with_split_seed(name, dir, *seed).map_err(|e| (2, e))?;
            Ok(format!(
                "{name}: wrote split.json (seed {seed}): train {} / val {} / test {}\n",
                ds.split.train.len(),
                ds.split.val.len(),
                ds.split.test.len()
            ))
        }
        Command::Synth { spec, out } => {
            let text = std::fs::read_to_string(spec)
                .map_err(|e| (1, Error::Configuration(format!("cannot read spec: {e}"))))?;
            let file: SynthFileSpec = serde_json::from_str(&text).map_err(|e| (1, e.into()))?;
            file.spec.validate().map_err(|e| (1, e))?;
            let ds = synth_relational(&file.spec, file.seed).map_err(|e| (2, e))?;
            write_dataset(&ds, out).map_err(|e| (2, e))?;
            Ok(format!(
                "wrote synthetic dataset to {} ({} classes, {} target rows)\n",
                out.display(),
                ds.n_classes(),
                ds.target().row_count()
            ))
        }
    }
}

/// Spec file for `relbridge synth`: generator parameters plus a seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthFileSpec {
    #[serde(flatten)]
    pub spec: SynthSpec,
    #[serde(default)]
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::Signal;

    fn synth_config(model: ModelKind, out: Option<PathBuf>) -> RunConfig {
        RunConfig {
            dataset: DatasetSpec::Synth {
                spec: SynthSpec {
                    n_target: 60,
                    n_aux: 24,
                    classes: 3,
                    edges_per_node: 5,
                    signal: Signal::Graph,
                    per_class_train: 5,
                    n_val: Some(15),
                    n_test: Some(20),
                },
                seed: 3,
            },
            model,
            bridge: BridgeConfig {
                d_table: 8,
                tnn: crate::tnn::TnnConfig { token_dim: 8, heads: 2, n_blocks: 1, output_dim: 8 },
                graph: Some(crate::gnn::GcnConfig::new(vec![8, 8], 0.0)),
                lr: 0.02,
                epochs: 2,
                dropout_p: 0.0,
                seed: 0,
                patience: 5,
                combine: crate::bridge::Combine::Concat,
            },
            seeds: vec![0, 1],
            output_dir: out,
            workers: 2,
        }
    }

    #[test]
    fn config_parsing_applies_defaults() {
        let cfg = parse_run_config(
            r#"{"dataset": {"kind": "synth", "spec": {"n_target": 100, "classes": 3, "signal": "graph"}},
                "model": "random"}"#,
        )
        .unwrap();
        assert_eq!(cfg.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(cfg.workers, 4);
        assert!(cfg.output_dir.is_none());
    }

    #[test]
    fn partial_bridge_overrides_keep_other_defaults() {
        let cfg = parse_run_config(
            r#"{"dataset": {"kind": "synth", "spec": {"n_target": 100, "classes": 3, "signal": "graph"}},
                "model": "bridge", "bridge": {"lr": 0.05}}"#,
        )
        .unwrap();
        assert_eq!(cfg.bridge.lr, 0.05);
        assert_eq!(cfg.bridge.d_table, BridgeConfig::default().d_table);
    }

    #[test]
    fn invalid_model_name_is_a_config_error() {
        let err = parse_run_config(
            r#"{"dataset": {"kind": "synth", "spec": {"n_target": 10, "classes": 2, "signal": "table"}},
                "model": "gbm"}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Json(_)), "{err}");
    }

    #[test]
    fn duplicate_seeds_are_rejected() {
        let mut cfg = synth_config(ModelKind::Random, None);
        cfg.seeds = vec![1, 1];
        assert!(validate_run_config(&cfg).is_err());
    }

    #[test]
    fn unknown_sjtu_name_is_rejected_before_any_work() {
        let cfg = RunConfig {
            dataset: DatasetSpec::Sjtu { name: "NOPE".into(), dir: PathBuf::from("/tmp") },
            ..synth_config(ModelKind::Random, None)
        };
        assert!(validate_run_config(&cfg).is_err());
    }

    #[test]
    fn mean_std_matches_hand_computation() {
        let (m, s) = mean_std(&[0.2, 0.4]);
        assert!((m - 0.3).abs() < 1e-12);
        assert!((s - (0.02f64).sqrt()).abs() < 1e-12); // sample std of {0.2,0.4}
        let (m1, s1) = mean_std(&[0.7]);
        assert_eq!((m1, s1), (0.7, 0.0));
    }

    #[test]
    fn random_run_reports_near_one_over_c() {
        let report = execute_run(&synth_config(ModelKind::Random, None)).unwrap();
        assert!(report.contains("random"), "{report}");
    }

    #[test]
    fn rerunning_with_more_seeds_extends_the_row_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = synth_config(ModelKind::Random, Some(dir.path().to_path_buf()));
        execute_run(&cfg).unwrap();
        let first = read_existing_rows(&dir.path().join("runs.jsonl")).unwrap();
        assert_eq!(first.len(), 2);

        cfg.seeds = vec![0, 1, 2];
        execute_run(&cfg).unwrap();
        let second = read_existing_rows(&dir.path().join("runs.jsonl")).unwrap();
        assert_eq!(second.len(), 3, "only the new seed may be appended");
        let seeds: BTreeSet<u64> = second.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, BTreeSet::from([0, 1, 2]));
        // Existing rows are untouched (prefix preserved).
        for (a, b) in first.iter().zip(&second) {
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.test_acc, b.test_acc);
        }
    }

    #[test]
    fn trained_run_writes_history_checkpoint_and_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = synth_config(ModelKind::TnnOnly, Some(dir.path().to_path_buf()));
        cfg.seeds = vec![7];
        let report = execute_run(&cfg).unwrap();
        assert!(report.contains("tnn_only"), "{report}");
        assert!(dir.path().join("history_tnn_only_seed7.jsonl").exists());
        assert!(dir.path().join("tnn_only_seed7.ckpt").exists());
        let rows = read_existing_rows(&dir.path().join("runs.jsonl")).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert_eq!(row.seed, 7);
        let embedded = row.config.as_ref().expect("config embedded in output");
        assert_eq!(embedded.seed, 7);
        assert!(embedded.graph.is_none(), "table-only run must disable the graph path");
        assert!(row.epochs_run > 0);
        assert!(dir.path().join("report.txt").exists());
    }
}
