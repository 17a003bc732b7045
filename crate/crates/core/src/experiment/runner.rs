use std::fs::{self, File};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::families::{efficiency_models, key_ablation_rows, qk_assignments, reference_mm_hsd};
use super::spec::{default_decrease_rows, ExperimentSpec, Family, SpecError};
use super::table::{Cell, ColumnKind, Table};
use crate::metrics::{Aggregate, MetricsReport};
use crate::models::{AttentionConfig, Model, ModelConfig, ModelError, ModelMode};
use crate::nn::encode_checkpoint;
use crate::store::{load_manifest, split_dataset, Dataset, SplitPlan, StoreError};
use crate::train::{grid_search, run_cv, CvResult, FoldResult, HyperParams, SeedResult, TrainError};
use crate::ModalitySet;

/// Environment variable that overrides the output root of every run.
pub const OUTPUT_ENV: &str = "CMAFUSE_OUT";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid spec: {0}")]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed report {path}: {message}")]
    Report { path: PathBuf, message: String },
}

impl ExperimentError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentError::Spec(_) => "spec",
            ExperimentError::Store(_) => "data",
            ExperimentError::Train(_) => "training",
            ExperimentError::Model(_) => "model",
            ExperimentError::Io { .. } => "io",
            ExperimentError::Report { .. } => "report",
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> ExperimentError {
    let context = context.into();
    move |source| ExperimentError::Io { context, source }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(io_err(path.display().to_string()))
}

/// Everything trained for one model configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub label: String,
    pub dataset: String,
    pub config: ModelConfig,
    pub hyper: HyperParams,
    pub param_count: usize,
    pub seeds: Vec<SeedResult>,
    pub folds: Vec<FoldResult>,
    pub aggregate: Aggregate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub family: Family,
    pub tables: Vec<Table>,
    pub runs: Vec<ConfigRecord>,
}

/// Result of a finished run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub report: RunReport,
}

/// `$CMAFUSE_OUT`, else the spec's `output`, else `runs`.
pub fn output_root(spec: &ExperimentSpec) -> PathBuf {
    match std::env::var_os(OUTPUT_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => spec.output.clone().unwrap_or_else(|| PathBuf::from("runs")),
    }
}

/// Creates `<root>/<name>-NNN` with the first free number.
fn create_run_dir(root: &Path, name: &str) -> Result<PathBuf, ExperimentError> {
    fs::create_dir_all(root).map_err(io_err(root.display().to_string()))?;
    for n in 1.. {
        let dir = root.join(format!("{name}-{n:03}"));
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(io_err(dir.display().to_string())(e)),
        }
    }
    unreachable!("run numbers are unbounded")
}

fn slug(label: &str) -> String {
    let mut out = String::new();
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

struct Source {
    name: String,
    data: Dataset,
    plan: SplitPlan,
}

fn load_source(name: &str, path: &Path, split_seed: u64) -> Result<Source, ExperimentError> {
    let manifest = load_manifest(path)?;
    let data = Dataset::load(&manifest)?;
    let plan = split_dataset(&manifest, split_seed)?;
    Ok(Source {
        name: name.into(),
        data,
        plan,
    })
}

struct Runner<'a> {
    spec: &'a ExperimentSpec,
    dir: PathBuf,
    log: File,
    seeds: Vec<u64>,
    runs: Vec<ConfigRecord>,
}

impl Runner<'_> {
    fn note(&mut self, line: &str) -> Result<(), ExperimentError> {
        log::info!("{line}");
        writeln!(self.log, "{line}").map_err(io_err("run.log"))
    }

    fn prepare(&self, mut config: ModelConfig) -> ModelConfig {
        if let Some(dims) = self.spec.dims() {
            config.dims = dims;
        }
        config
    }

    /// Tunes (when a grid is given), cross-validates over all seeds and
    /// writes the per-configuration artifacts.
    fn run_config(&mut self, source: &Source, config: ModelConfig) -> Result<CvResult, ExperimentError> {
        let config = self.prepare(config);
        let label = config.label();
        let index = self.runs.len() + 1;
        let sub = self.dir.join("runs").join(format!("{index:02}-{}", slug(&label)));
        fs::create_dir_all(&sub).map_err(io_err(sub.display().to_string()))?;
        self.note(&format!("[{index}] {label} on {}", source.name))?;

        let hyper = match &self.spec.grid {
            Some(grid) => {
                let result = grid_search(&source.data, &source.plan, &config, grid, self.seeds[0], self.spec.execution)?;
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["rank", "lr", "l1", "l2", "dropout", "patience", "mean_val_m_f1"])
                    .expect("in-memory write");
                for (rank, e) in result.leaderboard.iter().enumerate() {
                    w.write_record([
                        (rank + 1).to_string(),
                        e.hp.lr.to_string(),
                        e.hp.l1.to_string(),
                        e.hp.l2.to_string(),
                        e.hp.dropout.to_string(),
                        e.hp.patience.to_string(),
                        e.mean_val_m_f1.to_string(),
                    ])
                    .expect("in-memory write");
                }
                write_file(&sub.join("grid.csv"), w.into_inner().expect("flush to memory"))?;
                result.best
            }
            None => self.spec.hyper.clone(),
        };

        let ckpt_dir = sub.join("checkpoints");
        if self.spec.checkpoints {
            fs::create_dir_all(&ckpt_dir).map_err(io_err(ckpt_dir.display().to_string()))?;
        }
        let cv = run_cv(
            &source.data,
            &source.plan,
            &config,
            &hyper,
            &self.seeds,
            self.spec.execution,
            self.spec.checkpoints.then_some(ckpt_dir.as_path()),
        )?;

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["seed", "fold", "epoch", "lr", "train_loss", "val_loss", "val_m_f1"])
            .expect("in-memory write");
        for f in &cv.folds {
            for h in &f.history {
                w.write_record([
                    f.seed.to_string(),
                    f.fold.to_string(),
                    h.epoch.to_string(),
                    h.lr.to_string(),
                    h.train_loss.to_string(),
                    h.val_loss.to_string(),
                    h.val_m_f1.to_string(),
                ])
                .expect("in-memory write");
            }
        }
        write_file(&sub.join("history.csv"), w.into_inner().expect("flush to memory"))?;

        let mut config = config;
        config.dropout = hyper.dropout;
        let record = ConfigRecord {
            label: label.clone(),
            dataset: source.name.clone(),
            config,
            hyper,
            param_count: cv.param_count,
            seeds: cv.seeds.clone(),
            folds: cv.folds.clone(),
            aggregate: cv.aggregate,
        };
        let json = serde_json::to_string_pretty(&record).expect("record serializes");
        write_file(&sub.join("result.json"), json + "\n")?;
        let cells = cv.aggregate.cells();
        self.note(&format!("[{index}] {label}: M-F1 {}", cells[1]))?;
        self.runs.push(record);
        Ok(cv)
    }
}

const METRIC_HEADERS: [&str; 7] = ["ACC", "M-F1", "F1(H)", "P(H)", "R(H)", "P(M)", "R(M)"];

fn stat_cells(agg: &Aggregate, count: usize) -> Vec<Cell> {
    let (m, s) = (agg.mean.values(), agg.std.values());
    (0..count).map(|i| Cell::Stat([m[i], s[i]])).collect()
}

fn mean_cells(mean: &MetricsReport, idx: &[usize]) -> Vec<Cell> {
    let v = mean.values();
    idx.iter().map(|&i| Cell::Number(v[i])).collect()
}

fn model_table(name: &str, title: &str) -> Table {
    let mut cols = vec![("Model", ColumnKind::Text)];
    cols.extend(METRIC_HEADERS.iter().map(|&h| (h, ColumnKind::Stat)));
    Table::new(name, title, &cols)
}

fn run_models(runner: &mut Runner, source: &Source, models: Vec<ModelConfig>, table: &mut Table) -> Result<(), ExperimentError> {
    for config in models {
        let label = config.label();
        let cv = runner.run_config(source, config)?;
        let mut row = vec![Cell::Text(label)];
        row.extend(stat_cells(&cv.aggregate, 7));
        table.push(row);
    }
    Ok(())
}

fn family_tables(runner: &mut Runner) -> Result<Vec<Table>, ExperimentError> {
    let spec = runner.spec;
    let source = load_source("main", &spec.manifest, spec.split_seed)?;
    let seeds_note = format!("mean (std) over {} seed(s)", runner.seeds.len());
    let pool = spec.modalities.unwrap_or(ModalitySet::FULL);
    match spec.family {
        Family::Single => {
            let mut t = model_table("results", &format!("Model results, {seeds_note}"));
            run_models(runner, &source, spec.models.clone(), &mut t)?;
            Ok(vec![t])
        }
        Family::UnimodalSuite => {
            let mut t = model_table("unimodal", &format!("Unimodal baselines, {seeds_note}"));
            let models = pool.iter().map(ModelConfig::unimodal).collect();
            run_models(runner, &source, models, &mut t)?;
            Ok(vec![t])
        }
        Family::ModalityDecrease => {
            let rows = if spec.subsets.is_empty() {
                default_decrease_rows()
            } else {
                spec.subsets.clone()
            };
            let mut cols = vec![("Mod.", ColumnKind::Text), ("K", ColumnKind::Text), ("Q", ColumnKind::Text)];
            cols.extend(METRIC_HEADERS[..5].iter().map(|&h| (h, ColumnKind::Stat)));
            let mut t = Table::new("modality_decrease", &format!("MM-HSD across modality subsets, {seeds_note}"), &cols);
            for row in rows {
                let (config, k, q) = match (row.keys, row.query) {
                    (Some(keys), Some(query)) => (
                        ModelConfig::attention(ModelMode::MMHSD, AttentionConfig::new(query, keys)),
                        keys.to_string(),
                        query.to_string(),
                    ),
                    _ => {
                        let only = row.modalities.iter().next().expect("nonempty subset");
                        (ModelConfig::unimodal(only), "-".into(), "-".into())
                    }
                };
                let cv = runner.run_config(&source, config)?;
                let mut cells = vec![Cell::Text(row.modalities.to_string()), Cell::Text(k), Cell::Text(q)];
                cells.extend(stat_cells(&cv.aggregate, 5));
                t.push(cells);
            }
            Ok(vec![t])
        }
        Family::QkSweep => {
            let mode = spec.mode.expect("validated");
            let mut cols = vec![("Modality", ColumnKind::Text), ("K", ColumnKind::Text), ("Q", ColumnKind::Text)];
            cols.extend(METRIC_HEADERS[..5].iter().map(|&h| (h, ColumnKind::Ratio)));
            let title = format!("{} over every query/key assignment, mean over {} seed(s)", mode.label(), runner.seeds.len());
            let mut t = Table::new("qk_sweep", &title, &cols);
            for a in qk_assignments(pool) {
                let config = ModelConfig::attention(mode, AttentionConfig::new(a.query, a.keys));
                let cv = runner.run_config(&source, config)?;
                let mut cells = vec![
                    Cell::Text(a.modalities.to_string()),
                    Cell::Text(a.keys.to_string()),
                    Cell::Text(a.query.to_string()),
                ];
                cells.extend(mean_cells(&cv.aggregate.mean, &[0, 1, 2, 3, 4]));
                t.push(cells);
            }
            Ok(vec![t])
        }
        Family::CmaKeyAblation => {
            let cols = [("Modality", ColumnKind::Text), ("M-F1", ColumnKind::Ratio), ("F1(H)", ColumnKind::Ratio)];
            let title = format!("Attention key ablation with O as query, mean over {} seed(s)", runner.seeds.len());
            let mut t = Table::new("cma_key_ablation", &title, &cols);
            for (label, keys) in key_ablation_rows() {
                let config = reference_mm_hsd().with_key_subset(keys);
                let cv = runner.run_config(&source, config)?;
                let mut cells = vec![Cell::Text(label.into())];
                cells.extend(mean_cells(&cv.aggregate.mean, &[1, 2]));
                t.push(cells);
            }
            Ok(vec![t])
        }
        Family::StopwordAblation => {
            let alt_path = spec.alt_manifest.as_ref().expect("validated");
            let alt = load_source("stopwords-removed", alt_path, spec.split_seed)?;
            let config = spec.models.first().cloned().unwrap_or_else(reference_mm_hsd);
            let base_label = config.label();
            let mut cols = vec![("Model", ColumnKind::Text)];
            cols.extend(METRIC_HEADERS[..5].iter().map(|&h| (h, ColumnKind::Stat)));
            let mut t = Table::new("stopword_ablation", &format!("Stopword removal, {seeds_note}"), &cols);
            for (src, label) in [(&source, base_label.clone()), (&alt, format!("{base_label} (removing stopwords)"))] {
                let cv = runner.run_config(src, config.clone())?;
                let mut cells = vec![Cell::Text(label)];
                cells.extend(stat_cells(&cv.aggregate, 5));
                t.push(cells);
            }
            Ok(vec![t])
        }
        Family::Efficiency => {
            let models = if spec.models.is_empty() {
                efficiency_models()
            } else {
                spec.models.clone()
            };
            let cols = [
                ("Model", ColumnKind::Text),
                ("TTE (s)", ColumnKind::Decimal),
                ("TTT (s)", ColumnKind::Decimal),
                ("TT (s)", ColumnKind::Decimal),
                ("# Par (M)", ColumnKind::Decimal),
                ("Size (MB)", ColumnKind::Decimal),
                ("Params", ColumnKind::Integer),
                ("Bytes", ColumnKind::Integer),
            ];
            let mut t = Table::new("efficiency", "Efficiency on this host, averaged over fold runs", &cols);
            for config in models {
                let label = config.label();
                let prepared = runner.prepare(config.clone());
                let bytes = encode_checkpoint(Model::<f32>::build(prepared, 0)?.params()).len();
                let cv = runner.run_config(&source, config)?;
                let n = cv.folds.len() as f64;
                let tte = cv.folds.iter().map(|f| f.train_seconds / f.epochs.max(1) as f64).sum::<f64>() / n;
                let ttt = cv.folds.iter().map(|f| f.train_seconds).sum::<f64>() / n;
                let tt = cv.folds.iter().map(|f| f.test_seconds).sum::<f64>() / n;
                t.push(vec![
                    Cell::Text(label),
                    Cell::Number(tte),
                    Cell::Number(ttt),
                    Cell::Number(tt),
                    Cell::Number(cv.param_count as f64 / 1e6),
                    Cell::Number(bytes as f64 / (1024.0 * 1024.0)),
                    Cell::Number(cv.param_count as f64),
                    Cell::Number(bytes as f64),
                ]);
            }
            Ok(vec![t])
        }
    }
}

/// Runs a spec under [`output_root`].
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunOutput, ExperimentError> {
    run_experiment_in(spec, &output_root(spec))
}

/// Runs a spec in a fresh numbered directory under `root`: config snapshot,
/// split, per-model checkpoints/history/results, tables as CSV and text,
/// `report.json` and `run.log`.
pub fn run_experiment_in(spec: &ExperimentSpec, root: &Path) -> Result<RunOutput, ExperimentError> {
    spec.validate()?;
    let dir = create_run_dir(root, &spec.name)?;
    let mut snapshot = spec.clone();
    snapshot.seeds = Some(spec.seeds());
    snapshot.output = None;
    for p in std::iter::once(&mut snapshot.manifest).chain(snapshot.alt_manifest.as_mut()) {
        if let Ok(abs) = fs::canonicalize(&*p) {
            *p = abs;
        }
    }
    let json = serde_json::to_string_pretty(&snapshot).expect("spec serializes");
    write_file(&dir.join("spec.json"), json + "\n")?;
    let log_path = dir.join("run.log");
    let log = File::create(&log_path).map_err(io_err(log_path.display().to_string()))?;
    let mut runner = Runner {
        spec,
        dir: dir.clone(),
        log,
        seeds: spec.seeds(),
        runs: Vec::new(),
    };
    runner.note(&format!("{} ({}) seeds {:?}", spec.name, spec.family, runner.seeds))?;

    let tables = family_tables(&mut runner)?;
    let table_dir = dir.join("tables");
    fs::create_dir_all(&table_dir).map_err(io_err(table_dir.display().to_string()))?;
    for t in &tables {
        write_file(&table_dir.join(format!("{}.csv", t.name)), t.to_csv())?;
        write_file(&table_dir.join(format!("{}.txt", t.name)), t.to_text())?;
    }
    let report = RunReport {
        name: spec.name.clone(),
        family: spec.family,
        tables,
        runs: runner.runs,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&dir.join("report.json"), json + "\n")?;
    Ok(RunOutput { dir, report })
}

/// Reads `report.json` from a finished run directory.
pub fn load_report(dir: &Path) -> Result<RunReport, ExperimentError> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(io_err(path.display().to_string()))?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Report {
        path,
        message: e.to_string(),
    })
}
