//! Experiment matrices, resumable results files and report tables.
//!
//! Results are JSON lines, one [`RunResult`] per line, keyed by
//! `(condition, arch, dataset, seed)`. Re-running a matrix skips every key
//! already present, so an interrupted run resumes where it stopped. Reports
//! are always derived from the results file.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::corpus::{generate_synthetic, load_corpus, Corpus, CorpusError, SyntheticProfile};
use crate::model::{Arch, ModelSpec};
use crate::schedule::{schedule_by_name, ScheduleError};
use crate::stats::{paired_test, summarize, PairedTestResult, StatsError, Summary};
use crate::trainer::{train, RunKey, RunResult, TrainConfig};

pub const DEFAULT_SEEDS: [u64; 3] = [42, 123, 456];
pub const PARALLELISM_ENV: &str = "CURRICULUM_PARALLELISM";

pub const PRIMARY_CONDITIONS: [&str; 3] = ["standard-10", "curriculum-10", "standard-7"];
pub const ABLATION_CONDITIONS: [&str; 3] = ["two-phase", "reverse", "random"];

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Config(String),
    #[error("{path} line {line}: {detail}")]
    ResultsFormat { path: String, line: usize, detail: String },
    #[error("duplicate result key {0}")]
    DuplicateKey(RunKey),
    #[error("results file {0} does not exist")]
    MissingResults(String),
    #[error("results are missing {} cells: {}", .0.len(), .0.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(", "))]
    MissingCells(Vec<RunKey>),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Where a corpus comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetRef {
    Synthetic {
        #[serde(default)]
        name: Option<String>,
        profile: SyntheticProfile,
        num_sequences: usize,
        #[serde(default)]
        seed: u64,
    },
    Conll {
        name: String,
        train: PathBuf,
        test: PathBuf,
        #[serde(default)]
        has_boxes: bool,
    },
}

impl DatasetRef {
    pub fn synthetic(profile: SyntheticProfile, num_sequences: usize, seed: u64) -> Self {
        DatasetRef::Synthetic {
            name: None,
            profile,
            num_sequences,
            seed,
        }
    }

    pub fn name(&self) -> String {
        match self {
            DatasetRef::Synthetic { name: Some(n), .. } | DatasetRef::Conll { name: n, .. } => n.clone(),
            DatasetRef::Synthetic { profile, .. } => profile.as_str().to_string(),
        }
    }

    pub fn load(&self) -> Result<Corpus, CorpusError> {
        let mut corpus = match self {
            DatasetRef::Synthetic {
                profile,
                num_sequences,
                seed,
                ..
            } => generate_synthetic(*profile, *num_sequences, *seed)?,
            DatasetRef::Conll {
                name,
                train,
                test,
                has_boxes,
            } => load_corpus(name.clone(), train, test, *has_boxes)?,
        };
        corpus.name = self.name();
        Ok(corpus)
    }
}

/// Optional overrides of the shared model hyperparameters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelOverrides {
    pub hash_vocab: Option<usize>,
    pub embed_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub context_window: Option<usize>,
    pub num_box_buckets: Option<usize>,
}

impl ModelOverrides {
    pub fn spec(&self, arch: Arch, num_labels: usize) -> ModelSpec {
        let base = ModelSpec::new(arch, num_labels);
        ModelSpec {
            hash_vocab: self.hash_vocab.unwrap_or(base.hash_vocab),
            embed_dim: self.embed_dim.unwrap_or(base.embed_dim),
            hidden_dim: self.hidden_dim.unwrap_or(base.hidden_dim),
            context_window: self.context_window.unwrap_or(base.context_window),
            num_box_buckets: self.num_box_buckets.unwrap_or(base.num_box_buckets),
            ..base
        }
    }
}

/// Missing `train_config` fields fall back to [`TrainConfig::desk_scale`].
fn desk_overlay<'de, D: Deserializer<'de>>(d: D) -> Result<TrainConfig, D::Error> {
    use serde::de::Error;
    let patch = serde_json::Map::<String, serde_json::Value>::deserialize(d)?;
    let mut base = match serde_json::to_value(TrainConfig::desk_scale()) {
        Ok(serde_json::Value::Object(m)) => m,
        _ => unreachable!("TrainConfig serializes to an object"),
    };
    for (k, v) in patch {
        if !base.contains_key(&k) {
            return Err(D::Error::custom(format!("unknown train_config field `{k}`")));
        }
        base.insert(k, v);
    }
    serde_json::from_value(serde_json::Value::Object(base)).map_err(D::Error::custom)
}

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentMatrix {
    pub conditions: Vec<String>,
    pub architectures: Vec<Arch>,
    pub datasets: Vec<DatasetRef>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "TrainConfig::desk_scale", deserialize_with = "desk_overlay")]
    pub train_config: TrainConfig,
    #[serde(default)]
    pub model: ModelOverrides,
    pub output: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
}

pub const FORMS_SEQUENCES: usize = 400;
pub const RECEIPTS_SEQUENCES: usize = 700;
pub const CORPUS_SEED: u64 = 7;

impl ExperimentMatrix {
    /// 3 conditions × 2 architectures × 2 corpora × 3 seeds = 36 cells.
    pub fn primary(output: impl Into<PathBuf>) -> Self {
        ExperimentMatrix {
            conditions: PRIMARY_CONDITIONS.iter().map(|s| s.to_string()).collect(),
            architectures: vec![Arch::TextOnly, Arch::LayoutAware],
            datasets: vec![
                DatasetRef::synthetic(SyntheticProfile::Forms, FORMS_SEQUENCES, CORPUS_SEED),
                DatasetRef::synthetic(SyntheticProfile::Receipts, RECEIPTS_SEQUENCES, CORPUS_SEED),
            ],
            seeds: default_seeds(),
            train_config: TrainConfig::desk_scale(),
            model: ModelOverrides::default(),
            output: output.into(),
            parallelism: None,
        }
    }

    /// 3 ablation schedules × 2 architectures × receipts × 3 seeds = 18 cells.
    pub fn ablation(output: impl Into<PathBuf>) -> Self {
        ExperimentMatrix {
            conditions: ABLATION_CONDITIONS.iter().map(|s| s.to_string()).collect(),
            datasets: vec![DatasetRef::synthetic(SyntheticProfile::Receipts, RECEIPTS_SEQUENCES, CORPUS_SEED)],
            ..ExperimentMatrix::primary(output)
        }
    }

    pub fn from_json(s: &str) -> Result<Self, RunnerError> {
        let m: ExperimentMatrix = serde_json::from_str(s).map_err(|e| RunnerError::Config(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunnerError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let fail = |m: &str| Err(RunnerError::Config(m.to_string()));
        if self.conditions.is_empty() || self.architectures.is_empty() || self.datasets.is_empty() || self.seeds.is_empty() {
            return fail("conditions, architectures, datasets and seeds must be non-empty");
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return fail("seeds must be distinct");
        }
        let names: BTreeSet<String> = self.datasets.iter().map(|d| d.name()).collect();
        if names.len() != self.datasets.len() {
            return fail("dataset names must be distinct");
        }
        if self.architectures.iter().collect::<BTreeSet<_>>().len() != self.architectures.len() {
            return fail("architectures must be distinct");
        }
        for c in &self.conditions {
            schedule_by_name(c, 0)?;
        }
        self.train_config
            .validate()
            .map_err(|e| RunnerError::Config(e.to_string()))?;
        Ok(())
    }

    /// Every cell in execution order: dataset, architecture, condition, seed.
    pub fn cells(&self) -> Result<Vec<Cell>, RunnerError> {
        let mut cells = Vec::new();
        let mut seen = BTreeSet::new();
        for (dataset_index, d) in self.datasets.iter().enumerate() {
            for &arch in &self.architectures {
                for condition in &self.conditions {
                    for &seed in &self.seeds {
                        let schedule = schedule_by_name(condition, seed)?;
                        let key = RunKey {
                            condition: schedule.name.clone(),
                            arch: arch.to_string(),
                            dataset: d.name(),
                            seed,
                        };
                        if !seen.insert(key.clone()) {
                            return Err(RunnerError::Config(format!("conditions resolve to duplicate cell {key}")));
                        }
                        cells.push(Cell {
                            key,
                            condition: condition.clone(),
                            arch,
                            dataset_index,
                        });
                    }
                }
            }
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub key: RunKey,
    pub condition: String,
    pub arch: Arch,
    pub dataset_index: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker cap; falls back to the environment, then the config, then all
    /// cores.
    pub parallelism: Option<usize>,
    /// Stop after this many new cells (used to simulate interruption).
    pub max_cells: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct MatrixOutcome {
    pub completed: Vec<RunKey>,
    pub skipped: Vec<RunKey>,
    pub failed: Vec<(RunKey, String)>,
}

pub fn resolve_parallelism(explicit: Option<usize>, config: Option<usize>) -> usize {
    let env = std::env::var(PARALLELISM_ENV).ok().and_then(|v| v.parse::<usize>().ok());
    explicit
        .or(env)
        .or(config)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1)
}

/// Reads a results file, dropping a truncated final line left by an
/// interrupted write.
pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<RunResult>, RunnerError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(RunnerError::MissingResults(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_results(&text, &path.display().to_string())
}

fn parse_results(text: &str, path: &str) -> Result<Vec<RunResult>, RunnerError> {
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    let mut out = Vec::new();
    let mut keys = BTreeSet::new();
    for (i, line) in complete.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: RunResult = serde_json::from_str(line).map_err(|e| RunnerError::ResultsFormat {
            path: path.to_string(),
            line: i + 1,
            detail: e.to_string(),
        })?;
        if !keys.insert(r.key()) {
            return Err(RunnerError::DuplicateKey(r.key()));
        }
        out.push(r);
    }
    Ok(out)
}

/// Opens the results file for appending, first cutting any partial line.
fn open_results(path: &Path) -> Result<File, RunnerError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    if path.exists() {
        let text = std::fs::read(path).map_err(io_err(path))?;
        let keep = text.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if keep != text.len() {
            let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
            f.set_len(keep as u64).map_err(io_err(path))?;
        }
    }
    OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))
}

/// Runs every cell not yet present in the results file.
pub fn run_matrix(matrix: &ExperimentMatrix, options: &RunOptions) -> Result<MatrixOutcome, RunnerError> {
    matrix.validate()?;
    let cells = matrix.cells()?;
    let path = matrix.output.as_path();
    let done: BTreeSet<RunKey> = if path.exists() {
        read_results(path)?.into_iter().map(|r| r.key()).collect()
    } else {
        BTreeSet::new()
    };
    let file = Mutex::new(open_results(path)?);
    let (skipped, mut pending): (Vec<Cell>, Vec<Cell>) = cells.into_iter().partition(|c| done.contains(&c.key));
    if let Some(max) = options.max_cells {
        pending.truncate(max);
    }

    let needed: BTreeSet<usize> = pending.iter().map(|c| c.dataset_index).collect();
    let mut corpora: HashMap<usize, Result<Arc<Corpus>, String>> = HashMap::new();
    for i in needed {
        corpora.insert(i, matrix.datasets[i].load().map(Arc::new).map_err(|e| e.to_string()));
    }

    let completed = Mutex::new(Vec::new());
    let failed = Mutex::new(Vec::new());
    let threads = resolve_parallelism(options.parallelism, matrix.parallelism);
    crate::par::for_each_capped(pending, threads, |cell| {
        let outcome = run_cell(matrix, &cell, &corpora[&cell.dataset_index]).and_then(|result| {
            let mut line = serde_json::to_string(&result).map_err(|e| e.to_string())?;
            line.push('\n');
            let mut f = file.lock().expect("results lock");
            f.write_all(line.as_bytes()).and_then(|_| f.flush()).map_err(|e| e.to_string())
        });
        match outcome {
            Ok(()) => completed.lock().expect("lock").push(cell.key),
            Err(e) => failed.lock().expect("lock").push((cell.key, e)),
        }
    });
    let mut completed = completed.into_inner().expect("lock");
    let mut failed = failed.into_inner().expect("lock");
    completed.sort();
    failed.sort();
    Ok(MatrixOutcome {
        completed,
        skipped: skipped.into_iter().map(|c| c.key).collect(),
        failed,
    })
}

fn run_cell(matrix: &ExperimentMatrix, cell: &Cell, corpus: &Result<Arc<Corpus>, String>) -> Result<RunResult, String> {
    let corpus = corpus.as_ref().map_err(|e| format!("loading dataset: {e}"))?;
    let spec = matrix.model.spec(cell.arch, corpus.schema.num_labels());
    let schedule = schedule_by_name(&cell.condition, cell.key.seed).map_err(|e| e.to_string())?;
    train(&spec, corpus, &schedule, &matrix.train_config, cell.key.seed)
        .map(|o| o.result)
        .map_err(|e| e.to_string())
}

/// Human-readable execution plan.
pub fn describe_plan(matrix: &ExperimentMatrix) -> Result<String, RunnerError> {
    let cells = matrix.cells()?;
    let mut out = String::new();
    let _ = writeln!(out, "{} cells -> {}", cells.len(), matrix.output.display());
    for (i, c) in cells.iter().enumerate() {
        let _ = writeln!(out, "{:>4}  {}", i + 1, c.key);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionRow {
    pub dataset: String,
    pub arch: String,
    pub condition: String,
    pub effective_epochs: f64,
    pub final_loss: Summary,
    pub f1: Summary,
    pub precision: Summary,
    pub recall: Summary,
    pub wall_time_s: Summary,
    pub gradient_updates: Summary,
    /// Wall-time speedup vs Standard-10 of the same cell.
    pub speedup_time: Option<f64>,
    /// Update-count speedup vs Standard-10.
    pub speedup_updates: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub dataset: String,
    pub arch: String,
    pub metric: String,
    pub candidate: String,
    pub baseline: String,
    pub test: PairedTestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportBundle {
    pub runs: Vec<RunResult>,
    pub rows: Vec<ConditionRow>,
    /// Curriculum-10 vs Standard-10: time and update savings.
    pub panel_a: Vec<Comparison>,
    /// Curriculum-10 vs Standard-7: F1 at matched compute.
    pub panel_b: Vec<Comparison>,
    /// Rows for datasets that carry ablation schedules.
    pub ablation: Vec<ConditionRow>,
}

fn condition_rank(c: &str) -> (usize, String) {
    let rank = ["standard-10", "curriculum-10", "standard-7", "two-phase", "reverse", "random"]
        .iter()
        .position(|x| *x == c)
        .unwrap_or(6);
    (rank, c.to_string())
}

fn arch_rank(a: &str) -> (usize, String) {
    (usize::from(a != "text_only"), a.to_string())
}

type CellGroup = BTreeMap<(String, (usize, String), (usize, String)), Vec<RunResult>>;

pub fn build_report(path: impl AsRef<Path>) -> Result<ReportBundle, RunnerError> {
    report_from_results(read_results(path)?)
}

pub fn report_from_results(mut runs: Vec<RunResult>) -> Result<ReportBundle, RunnerError> {
    runs.sort_by(|a, b| {
        (&a.dataset, arch_rank(&a.arch), condition_rank(&a.condition), a.seed)
            .cmp(&(&b.dataset, arch_rank(&b.arch), condition_rank(&b.condition), b.seed))
    });
    let seeds: BTreeSet<u64> = runs.iter().map(|r| r.seed).collect();
    let mut groups: CellGroup = BTreeMap::new();
    for r in &runs {
        groups
            .entry((r.dataset.clone(), arch_rank(&r.arch), condition_rank(&r.condition)))
            .or_default()
            .push(r.clone());
    }

    // Expected: every condition seen on a dataset, for every architecture
    // seen on it, at every seed.
    let mut missing = Vec::new();
    let mut per_dataset: BTreeMap<&str, (BTreeSet<&str>, BTreeSet<&str>)> = BTreeMap::new();
    for r in &runs {
        let e = per_dataset.entry(&r.dataset).or_default();
        e.0.insert(&r.condition);
        e.1.insert(&r.arch);
    }
    let present: BTreeSet<RunKey> = runs.iter().map(|r| r.key()).collect();
    for (dataset, (conditions, archs)) in &per_dataset {
        for c in conditions {
            for a in archs {
                for &seed in &seeds {
                    let key = RunKey {
                        condition: c.to_string(),
                        arch: a.to_string(),
                        dataset: dataset.to_string(),
                        seed,
                    };
                    if !present.contains(&key) {
                        missing.push(key);
                    }
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(RunnerError::MissingCells(missing));
    }

    let field = |rs: &[RunResult], f: fn(&RunResult) -> f64| -> Result<Summary, RunnerError> {
        Ok(summarize(&rs.iter().map(f).collect::<Vec<_>>())?)
    };
    let mut rows = Vec::new();
    for ((dataset, (_, arch), (_, condition)), rs) in &groups {
        let baseline = groups.get(&(dataset.clone(), arch_rank(arch), condition_rank("standard-10")));
        let base_time = baseline.map(|b| field(b, |r| r.wall_time_s)).transpose()?;
        let base_updates = baseline.map(|b| field(b, |r| r.gradient_updates as f64)).transpose()?;
        let wall = field(rs, |r| r.wall_time_s)?;
        let updates = field(rs, |r| r.gradient_updates as f64)?;
        let is_base = condition == "standard-10";
        rows.push(ConditionRow {
            dataset: dataset.clone(),
            arch: arch.clone(),
            condition: condition.clone(),
            effective_epochs: rs[0].effective_epochs,
            final_loss: field(rs, |r| r.final_loss)?,
            f1: field(rs, |r| r.f1)?,
            precision: field(rs, |r| r.precision)?,
            recall: field(rs, |r| r.recall)?,
            wall_time_s: wall,
            gradient_updates: updates,
            speedup_time: base_time
                .filter(|b| !is_base && b.mean > 0.0)
                .map(|b| 1.0 - wall.mean / b.mean),
            speedup_updates: base_updates
                .filter(|b| !is_base && b.mean > 0.0)
                .map(|b| 1.0 - updates.mean / b.mean),
        });
    }

    let paired = |dataset: &str, arch: &str, cand: &str, base: &str, metric: &str, f: fn(&RunResult) -> f64, flip: bool| -> Result<Option<Comparison>, RunnerError> {
        let (Some(c), Some(b)) = (
            groups.get(&(dataset.to_string(), arch_rank(arch), condition_rank(cand))),
            groups.get(&(dataset.to_string(), arch_rank(arch), condition_rank(base))),
        ) else {
            return Ok(None);
        };
        // Both groups are sorted by seed and complete.
        let xs: Vec<f64> = c.iter().map(f).collect();
        let ys: Vec<f64> = b.iter().map(f).collect();
        let test = if flip { paired_test(&ys, &xs)? } else { paired_test(&xs, &ys)? };
        Ok(Some(Comparison {
            dataset: dataset.to_string(),
            arch: arch.to_string(),
            metric: metric.to_string(),
            candidate: cand.to_string(),
            baseline: base.to_string(),
            test,
        }))
    };
    let cells: BTreeSet<(String, (usize, String))> = groups.keys().map(|(d, a, _)| (d.clone(), a.clone())).collect();
    let mut panel_a = Vec::new();
    let mut panel_b = Vec::new();
    for (dataset, (_, arch)) in &cells {
        if seeds.len() < 2 {
            break;
        }
        // Differences are baseline − curriculum so savings come out positive.
        if let Some(c) = paired(dataset, arch, "curriculum-10", "standard-10", "time_s", |r| r.wall_time_s, true)? {
            panel_a.push(c);
        }
        if let Some(c) = paired(dataset, arch, "curriculum-10", "standard-10", "updates", |r| r.gradient_updates as f64, true)? {
            panel_a.push(c);
        }
        if let Some(c) = paired(dataset, arch, "curriculum-10", "standard-7", "f1", |r| r.f1, false)? {
            panel_b.push(c);
        }
    }

    let ablation_datasets: BTreeSet<&str> = rows
        .iter()
        .filter(|r| ABLATION_CONDITIONS.contains(&r.condition.as_str()))
        .map(|r| r.dataset.as_str())
        .collect();
    let ablation = rows
        .iter()
        .filter(|r| ablation_datasets.contains(r.dataset.as_str()))
        .cloned()
        .collect();
    let rows = rows
        .into_iter()
        .filter(|r| !ABLATION_CONDITIONS.contains(&r.condition.as_str()))
        .collect();
    Ok(ReportBundle {
        runs,
        rows,
        panel_a,
        panel_b,
        ablation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" | "txt" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format `{other}` (text, csv)")),
        }
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "--".to_string(), |v| format!("{:.1}%", v * 100.0))
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "degenerate".to_string(), |v| format!("{v:.digits$}"))
}

fn p_text(p: Option<f64>) -> String {
    match p {
        None => "degenerate".into(),
        Some(p) if p < 0.001 => "<0.001".into(),
        Some(p) => format!("{p:.3}"),
    }
}

fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<String>| -> String {
        let mut s = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect::<Vec<_>>()
            .join("  ");
        s.truncate(s.trim_end().len());
        s
    };
    let mut out = line(header.iter().map(|s| s.to_string()).collect());
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r.clone()));
        out.push('\n');
    }
    out
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

fn main_rows(rows: &[ConditionRow], csv: bool) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            let s = |x: &Summary, d: usize| if csv { format!("{:.*}", d, x.mean) } else { x.format(d) };
            let mut v = vec![
                r.dataset.clone(),
                r.arch.clone(),
                r.condition.clone(),
                format!("{:.2}", r.effective_epochs),
                s(&r.final_loss, 3),
                s(&r.f1, 3),
            ];
            if csv {
                v.push(format!("{:.3}", r.f1.std));
                v.push(format!("{:.3}", r.precision.mean));
                v.push(format!("{:.3}", r.recall.mean));
            } else {
                v.push(format!("{:.3} / {:.3}", r.precision.mean, r.recall.mean));
            }
            v.push(s(&r.wall_time_s, 2));
            v.push(format!("{:.1}", r.gradient_updates.mean));
            v.push(pct(r.speedup_time));
            v.push(pct(r.speedup_updates));
            v
        })
        .collect()
}

fn panel_rows(cmps: &[Comparison], digits: usize) -> Vec<Vec<String>> {
    cmps.iter()
        .map(|c| {
            let t = &c.test;
            let sign = if t.mean_diff >= 0.0 { "+" } else { "" };
            vec![
                c.dataset.clone(),
                c.arch.clone(),
                c.metric.clone(),
                format!("{sign}{:.*} ± {:.*}", digits, t.mean_diff, digits, t.std_diff),
                opt(t.t_stat, 2),
                p_text(t.p_two_tailed),
                opt(t.d_z, 2),
            ]
        })
        .collect()
}

const MAIN_HEADER: [&str; 11] = [
    "Dataset", "Arch", "Condition", "Eff.Ep", "FinalLoss", "EntityF1", "P / R", "Time(s)", "Updates", "Speedup(time)", "Speedup(updates)",
];
const MAIN_CSV_HEADER: [&str; 13] = [
    "dataset", "arch", "condition", "effective_epochs", "final_loss", "f1", "f1_std", "precision", "recall", "time_s", "updates",
    "speedup_time", "speedup_updates",
];
const PANEL_HEADER: [&str; 7] = ["Dataset", "Arch", "Metric", "Delta", "t", "p", "d_z"];

pub fn render_report(bundle: &ReportBundle, format: ReportFormat) -> String {
    let mut out = String::new();
    let panel_a: Vec<Comparison> = bundle.panel_a.clone();
    match format {
        ReportFormat::Text => {
            out.push_str("Conditions (mean ± std across seeds). Speedup relative to standard-10.\n");
            out.push_str(&aligned(&MAIN_HEADER, &main_rows(&bundle.rows, false)));
            out.push_str("\nPaired t-tests across seeds. d_z = t / sqrt(n).\n");
            out.push_str("Panel A: training cost saved (standard-10 minus curriculum-10)\n");
            out.push_str(&aligned(&PANEL_HEADER, &panel_rows(&panel_a, 2)));
            out.push_str("Panel B: entity F1 at matched compute (curriculum-10 minus standard-7)\n");
            out.push_str(&aligned(&PANEL_HEADER, &panel_rows(&bundle.panel_b, 3)));
            if !bundle.ablation.is_empty() {
                out.push_str("\nSchedule ablations (mean ± std across seeds).\n");
                out.push_str(&aligned(&MAIN_HEADER, &main_rows(&bundle.ablation, false)));
            }
        }
        ReportFormat::Csv => {
            let csv_panel = |cmps: &[Comparison]| -> Vec<Vec<String>> {
                cmps.iter()
                    .map(|c| {
                        let t = &c.test;
                        let o = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.6}"));
                        vec![
                            c.dataset.clone(),
                            c.arch.clone(),
                            c.metric.clone(),
                            format!("{:.6}", t.mean_diff),
                            format!("{:.6}", t.std_diff),
                            o(t.t_stat),
                            t.df.to_string(),
                            o(t.p_two_tailed),
                            o(t.d_z),
                            t.degenerate().to_string(),
                        ]
                    })
                    .collect()
            };
            let panel_header = ["dataset", "arch", "metric", "mean_diff", "std_diff", "t", "df", "p", "d_z", "degenerate"];
            out.push_str("# table1\n");
            out.push_str(&csv_table(&MAIN_CSV_HEADER, &main_rows(&bundle.rows, true)));
            out.push_str("\n# panel_a\n");
            out.push_str(&csv_table(&panel_header, &csv_panel(&panel_a)));
            out.push_str("\n# panel_b\n");
            out.push_str(&csv_table(&panel_header, &csv_panel(&bundle.panel_b)));
            if !bundle.ablation.is_empty() {
                out.push_str("\n# ablation\n");
                out.push_str(&csv_table(&MAIN_CSV_HEADER, &main_rows(&bundle.ablation, true)));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(condition: &str, arch: &str, dataset: &str, seed: u64, f1: f64, updates: usize) -> RunResult {
        RunResult {
            condition: condition.into(),
            arch: arch.into(),
            dataset: dataset.into(),
            seed,
            final_loss: 0.5,
            precision: f1,
            recall: f1,
            f1,
            wall_time_s: updates as f64 * 0.01 + seed as f64 * 1e-4,
            gradient_updates: updates,
            effective_epochs: 1.0,
            realized_exposure: 1.0,
            diverged: false,
            diagnostic: None,
        }
    }

    fn full_results() -> Vec<RunResult> {
        let mut v = Vec::new();
        for (i, seed) in DEFAULT_SEEDS.iter().enumerate() {
            for arch in ["text_only", "layout_aware"] {
                v.push(result("standard-10", arch, "forms", *seed, 0.8, 320));
                v.push(result("curriculum-10", arch, "forms", *seed, 0.78 + 0.01 * i as f64, 213));
                v.push(result("standard-7", arch, "forms", *seed, 0.75 + 0.003 * (i * i) as f64, 224));
            }
        }
        v
    }

    #[test]
    fn config_parsing() {
        let json = r#"{
            "conditions": ["curriculum-10", "standard-7"],
            "architectures": ["text_only"],
            "datasets": [{"source": "synthetic", "profile": "forms", "num_sequences": 20, "seed": 1}],
            "train_config": {"batch_size": 4},
            "output": "out.jsonl"
        }"#;
        let m = ExperimentMatrix::from_json(json).unwrap();
        assert_eq!(m.seeds, DEFAULT_SEEDS.to_vec());
        assert_eq!(m.train_config.batch_size, 4);
        assert_eq!(m.train_config.peak_lr, TrainConfig::desk_scale().peak_lr);
        assert_eq!(m.cells().unwrap().len(), 2 * 3);
        assert!(ExperimentMatrix::from_json(&json.replace("\"curriculum-10\"", "\"cosine\"")).is_err());
        assert!(ExperimentMatrix::from_json(&json.replace("\"batch_size\"", "\"batchsize\"")).is_err());
        assert!(ExperimentMatrix::from_json("{").is_err());
        let dup = json.replace("\"output\"", "\"seeds\": [1, 1], \"output\"");
        assert!(matches!(ExperimentMatrix::from_json(&dup), Err(RunnerError::Config(_))));
    }

    #[test]
    fn presets_enumerate_expected_counts() {
        assert_eq!(ExperimentMatrix::primary("x").cells().unwrap().len(), 36);
        assert_eq!(ExperimentMatrix::ablation("x").cells().unwrap().len(), 18);
    }

    #[test]
    fn truncated_tail_is_ignored() {
        let r = result("standard-10", "text_only", "forms", 42, 0.5, 10);
        let line = serde_json::to_string(&r).unwrap();
        let text = format!("{line}\n{}", &line[..20]);
        assert_eq!(parse_results(&text, "mem").unwrap(), vec![r.clone()]);
        let dup = format!("{line}\n{line}\n");
        assert!(matches!(parse_results(&dup, "mem"), Err(RunnerError::DuplicateKey(_))));
        assert!(matches!(parse_results("{bad}\n", "mem"), Err(RunnerError::ResultsFormat { line: 1, .. })));
    }

    #[test]
    fn run_result_json_fields() {
        let r = result("standard-10", "text_only", "forms", 42, 0.5, 10);
        let v = serde_json::to_value(&r).unwrap();
        let keys: BTreeSet<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
        let expected: BTreeSet<&str> = [
            "condition", "arch", "dataset", "seed", "final_loss", "precision", "recall", "f1", "wall_time_s",
            "gradient_updates", "effective_epochs", "realized_exposure",
        ]
        .into_iter()
        .collect();
        assert_eq!(keys, expected);
    }

    #[test]
    fn report_panels() {
        let bundle = report_from_results(full_results()).unwrap();
        assert_eq!(bundle.rows.len(), 6);
        assert_eq!(bundle.panel_b.len(), 2);
        for c in &bundle.panel_b {
            let t = c.test.t_stat.unwrap();
            assert!((c.test.d_z.unwrap() - t / 3f64.sqrt()).abs() < 1e-12);
        }
        let updates: Vec<&Comparison> = bundle.panel_a.iter().filter(|c| c.metric == "updates").collect();
        assert_eq!(updates.len(), 2);
        assert!(updates.iter().all(|c| c.test.degenerate() && c.test.mean_diff == 107.0));
        let curr = bundle.rows.iter().find(|r| r.condition == "curriculum-10").unwrap();
        assert!((curr.speedup_updates.unwrap() - (1.0 - 213.0 / 320.0)).abs() < 1e-12);
        let text = render_report(&bundle, ReportFormat::Text);
        assert!(text.contains("Panel B"));
        assert!(text.contains("degenerate"));
        assert_eq!(text, render_report(&report_from_results(full_results()).unwrap(), ReportFormat::Text));
        let csv = render_report(&bundle, ReportFormat::Csv);
        assert!(csv.starts_with("# table1\ndataset,arch,condition"));
    }

    #[test]
    fn identical_f1_is_degenerate() {
        let mut runs = full_results();
        for r in runs.iter_mut() {
            if r.condition != "standard-10" {
                r.f1 = 0.7;
            }
        }
        let bundle = report_from_results(runs).unwrap();
        assert!(bundle.panel_b.iter().all(|c| c.test.degenerate()));
    }

    #[test]
    fn missing_cells_are_named() {
        let mut runs = full_results();
        runs.retain(|r| !(r.condition == "standard-7" && r.seed == 123 && r.arch == "text_only"));
        match report_from_results(runs) {
            Err(RunnerError::MissingCells(keys)) => {
                assert_eq!(keys.len(), 1);
                assert_eq!(keys[0].to_string(), "forms/text_only/standard-7/seed=123");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_results_file() {
        assert!(matches!(build_report("/nonexistent/results.jsonl"), Err(RunnerError::MissingResults(_))));
    }
}
