//! Corpus generation, on-disk layout and test sets.
//!
//! A dataset directory holds three files:
//!
//! - `dataset.json`: configuration, seed, rewrite-set version, counts and
//!   failure tallies;
//! - `manifest.jsonl`: one [`OdeRecord`] per line, ordered by `id`;
//! - `trajectories.f64le`: little-endian binary64 blocks `[times..., values...]`,
//!   addressed by each record's `traj_offset` (in values) and `traj_len`.

mod stats;
mod testsets;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonicalize::{simplify, REWRITE_SET_VERSION};
use crate::codec::{GRID_MAX, GRID_MIN};
use crate::expr::{parse_infix, skeletonize, Expr, ParseError};
use crate::sampler::{resample_constants, sample_skeleton_pool, GenerationConfig, SampleError};
use crate::seed;
use crate::solver::{solve_checked, SolveConfig, SolveStatus, Qc, Trajectory};

pub use stats::{dataset_stats, DatasetStats};
pub use testsets::{
    build_large_testset, load_equation_list, textbook_entries, textbook_testset, LargeTestConfig, TextbookEntry,
};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const DATASET_FILE: &str = "dataset.json";
pub const STORE_FILE: &str = "trajectories.f64le";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {path} line {line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: ParseError,
    },
    #[error("line {line}: {message}")]
    Equation { line: usize, message: String },
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("no trajectories survived generation (failures: {failures:?})")]
    EmptyYield { failures: BTreeMap<String, usize> },
    #[error("test-set budget exhausted after {attempts} attempts with {found} of {target} records")]
    BudgetExhausted { attempts: usize, found: usize, target: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Everything needed to regenerate a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Number of distinct skeletons to sample.
    pub skeletons: usize,
    /// Keep at most this many records (in id order).
    pub max_records: Option<usize>,
    pub generation: GenerationConfig,
    pub solve: SolveConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            skeletons: 100,
            max_records: None,
            generation: GenerationConfig::default(),
            solve: SolveConfig::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        self.generation.validate()?;
        self.solve.validate().map_err(|e| DatasetError::Config(e.to_string()))?;
        if self.skeletons == 0 {
            return Err(DatasetError::Config("skeletons must be positive".into()));
        }
        Ok(())
    }
}

/// One stored initial value problem and its solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeRecord {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub skeleton: String,
    pub infix: String,
    pub prefix: Vec<String>,
    pub constants: Vec<f64>,
    pub complexity: usize,
    pub ops: BTreeMap<String, usize>,
    pub y0: f64,
    /// (skeleton index, constant-set index, initial-value index).
    pub seed: [u64; 3],
    pub traj_offset: u64,
    pub traj_len: usize,
    pub qc_err: f64,
}

impl OdeRecord {
    pub fn expr(&self) -> Result<Expr, ParseError> {
        parse_infix(&self.infix)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub skeletons: usize,
    pub expressions: usize,
    pub trajectories: usize,
}

/// Header stored in `dataset.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub config: DatasetConfig,
    pub seed: u64,
    pub rewrite_set_version: u32,
    pub counts: Counts,
    pub failures: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: DatasetHeader,
    pub records: Vec<OdeRecord>,
}

/// Manifest plus the trajectory store, in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub store: Vec<f64>,
}

impl Dataset {
    pub fn records(&self) -> &[OdeRecord] {
        &self.manifest.records
    }

    pub fn len(&self) -> usize {
        self.manifest.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.records.is_empty()
    }

    /// `(times, values)` of record `r`.
    pub fn trajectory(&self, r: &OdeRecord) -> (&[f64], &[f64]) {
        let start = r.traj_offset as usize;
        let mid = start + r.traj_len;
        (&self.store[start..mid], &self.store[mid..mid + r.traj_len])
    }

    pub fn trajectory_of(&self, r: &OdeRecord) -> Trajectory {
        let (times, values) = self.trajectory(r);
        Trajectory {
            times: times.to_vec(),
            values: values.to_vec(),
            y0: r.y0,
            status: SolveStatus::Ok,
            qc: Qc::Pass { max_error: r.qc_err },
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), DatasetError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let header_path = dir.join(DATASET_FILE);
        let mut header = serde_json::to_string_pretty(&self.manifest.header).expect("header serializes");
        header.push('\n');
        fs::write(&header_path, header).map_err(io_err(&header_path))?;

        let manifest_path = dir.join(MANIFEST_FILE);
        let file = fs::File::create(&manifest_path).map_err(io_err(&manifest_path))?;
        let mut w = BufWriter::new(file);
        for r in &self.manifest.records {
            let line = serde_json::to_string(r).expect("record serializes");
            writeln!(w, "{line}").map_err(io_err(&manifest_path))?;
        }
        w.flush().map_err(io_err(&manifest_path))?;

        let store_path = dir.join(STORE_FILE);
        let mut bytes = Vec::with_capacity(self.store.len() * 8);
        for v in &self.store {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&store_path, bytes).map_err(io_err(&store_path))
    }

    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let header_path = dir.join(DATASET_FILE);
        let text = fs::read_to_string(&header_path).map_err(io_err(&header_path))?;
        let header: DatasetHeader = serde_json::from_str(&text).map_err(|e| DatasetError::Format {
            path: header_path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;

        let manifest_path = dir.join(MANIFEST_FILE);
        let file = fs::File::open(&manifest_path).map_err(io_err(&manifest_path))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(&manifest_path))?;
            if line.trim().is_empty() {
                continue;
            }
            let r: OdeRecord = serde_json::from_str(&line).map_err(|e| DatasetError::Format {
                path: manifest_path.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(r);
        }
        records.sort_by_key(|r| r.id);

        let store_path = dir.join(STORE_FILE);
        let bytes = fs::read(&store_path).map_err(io_err(&store_path))?;
        if bytes.len() % 8 != 0 {
            return Err(DatasetError::Format {
                path: store_path,
                line: 0,
                message: "length is not a multiple of 8".into(),
            });
        }
        let store: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        for r in &records {
            if r.traj_offset as usize + 2 * r.traj_len > store.len() {
                return Err(DatasetError::Format {
                    path: store_path,
                    line: r.id,
                    message: format!("record {} points past the end of the store", r.id),
                });
            }
        }
        Ok(Self {
            manifest: DatasetManifest { header, records },
            store,
        })
    }
}

/// Builds records and the store from solved trajectories, in order.
pub(crate) struct Builder {
    records: Vec<OdeRecord>,
    store: Vec<f64>,
}

impl Builder {
    pub(crate) fn new() -> Self {
        Self {
            records: Vec::new(),
            store: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, e: &Expr, traj: &Trajectory, seed: [u64; 3], name: Option<String>) {
        let (skeleton, _) = skeletonize(e);
        let qc_err = match traj.qc {
            Qc::Pass { max_error } | Qc::Fail { max_error } => max_error,
            Qc::NotRun => f64::NAN,
        };
        let record = OdeRecord {
            id: self.records.len(),
            name,
            skeleton: skeleton.key().to_string(),
            infix: e.to_infix(),
            prefix: e.to_prefix(),
            constants: e.constants().iter().map(|c| c.value).collect(),
            complexity: e.complexity(),
            ops: e.operator_histogram(),
            y0: traj.y0,
            seed,
            traj_offset: self.store.len() as u64,
            traj_len: traj.len(),
            qc_err,
        };
        self.store.extend_from_slice(&traj.times);
        self.store.extend_from_slice(&traj.values);
        self.records.push(record);
    }

    pub(crate) fn len(&self) -> usize {
        self.records.len()
    }

    pub(crate) fn finish(self, header: DatasetHeader) -> Dataset {
        Dataset {
            manifest: DatasetManifest {
                header,
                records: self.records,
            },
            store: self.store,
        }
    }
}

/// True if every constant of `e` can be two-hot encoded.
pub fn constants_in_grid(e: &Expr) -> bool {
    e.constants().iter().all(|c| (GRID_MIN..=GRID_MAX).contains(&c.value))
}

pub(crate) fn tally(failures: &mut BTreeMap<String, usize>, key: &str) {
    *failures.entry(key.to_string()).or_insert(0) += 1;
}

pub(crate) fn status_key(traj: &Trajectory) -> Option<&'static str> {
    match (traj.status, traj.qc) {
        (SolveStatus::Ok, Qc::Pass { .. }) => None,
        (SolveStatus::Ok, _) => Some("qc_fail"),
        (SolveStatus::Nonfinite, _) => Some("solve_nonfinite"),
        (SolveStatus::StepFailure, _) => Some("solve_step_failure"),
        (SolveStatus::BudgetExceeded, _) => Some("solve_budget"),
    }
}

/// Draws a uniform initial value from `range` for a record's stream.
pub(crate) fn draw_y0(range: (f64, f64), domain: &str, seed: u64, indices: &[u64]) -> f64 {
    let mut rng = seed::stream(domain, seed, indices);
    rng.random_range(range.0..range.1)
}

enum ExprOutcome {
    Failed(&'static str),
    Ready(Expr),
}

type Failure = &'static str;

struct SolvedExpr {
    skeleton_idx: usize,
    const_idx: usize,
    outcome: Result<(Expr, Vec<(usize, Trajectory)>), Failure>,
}

fn instantiate(
    cfg: &DatasetConfig,
    seed: u64,
    s: usize,
    c: usize,
    skeleton: &crate::expr::Skeleton,
    original: &[crate::expr::Constant],
) -> ExprOutcome {
    let mut rng = seed::stream("constants", seed, &[s as u64, c as u64]);
    let raw = match resample_constants(skeleton, original, &cfg.generation, &mut rng) {
        Ok(e) => e,
        Err(_) => return ExprOutcome::Failed("constant_retries"),
    };
    let Ok(e) = simplify(&raw) else {
        return ExprOutcome::Failed("simplify_nonfinite");
    };
    if skeletonize(&e).0.key() != skeleton.key() {
        return ExprOutcome::Failed("skeleton_changed");
    }
    if !constants_in_grid(&e) {
        return ExprOutcome::Failed("constant_out_of_grid");
    }
    ExprOutcome::Ready(e)
}

/// Samples skeletons, constants and initial values, solves and filters, and
/// returns the in-memory corpus. Deterministic in `(cfg, seed)` regardless
/// of the rayon thread count.
pub fn generate_dataset(cfg: &DatasetConfig, seed: u64) -> Result<Dataset, DatasetError> {
    cfg.validate()?;
    let pool = sample_skeleton_pool(&cfg.generation, cfg.skeletons, seed)?;
    let n_const = cfg.generation.constant_sets_per_skeleton;
    let n_iv = cfg.generation.initial_values_per_ode;

    let jobs: Vec<(usize, usize)> = (0..pool.skeletons.len())
        .flat_map(|s| (0..n_const).map(move |c| (s, c)))
        .collect();
    let solved: Vec<SolvedExpr> = jobs
        .par_iter()
        .map(|&(s, c)| {
            let (skeleton, original) = &pool.skeletons[s];
            let outcome = match instantiate(cfg, seed, s, c, skeleton, original) {
                ExprOutcome::Failed(why) => Err(why),
                ExprOutcome::Ready(e) => {
                    let trajectories = (0..n_iv)
                        .map(|v| {
                            let y0 =
                                draw_y0(cfg.solve.y0_range, "initial-value", seed, &[s as u64, c as u64, v as u64]);
                            (v, solve_checked(&e, y0, &cfg.solve))
                        })
                        .collect();
                    Ok((e, trajectories))
                }
            };
            SolvedExpr {
                skeleton_idx: s,
                const_idx: c,
                outcome,
            }
        })
        .collect();

    let mut failures = BTreeMap::new();
    let mut builder = Builder::new();
    let mut expressions = 0;
    let mut used_skeletons = std::collections::BTreeSet::new();
    let cap = cfg.max_records.unwrap_or(usize::MAX);
    for job in solved {
        let (e, trajectories) = match job.outcome {
            Err(why) => {
                tally(&mut failures, why);
                continue;
            }
            Ok(t) => t,
        };
        let mut kept_any = false;
        for (v, traj) in trajectories {
            if let Some(key) = status_key(&traj) {
                tally(&mut failures, key);
                continue;
            }
            if builder.len() >= cap {
                tally(&mut failures, "truncated");
                continue;
            }
            builder.push(&e, &traj, [job.skeleton_idx as u64, job.const_idx as u64, v as u64], None);
            kept_any = true;
        }
        if kept_any {
            expressions += 1;
            used_skeletons.insert(job.skeleton_idx);
        } else {
            tally(&mut failures, "ode_without_solution");
        }
    }
    if builder.len() == 0 {
        return Err(DatasetError::EmptyYield { failures });
    }
    let header = DatasetHeader {
        config: cfg.clone(),
        seed,
        rewrite_set_version: REWRITE_SET_VERSION,
        counts: Counts {
            skeletons: used_skeletons.len(),
            expressions,
            trajectories: builder.len(),
        },
        failures,
    };
    Ok(builder.finish(header))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetConfig {
        let mut cfg = DatasetConfig {
            skeletons: 10,
            ..DatasetConfig::default()
        };
        cfg.generation.max_internal_nodes = 3;
        cfg.generation.constant_sets_per_skeleton = 2;
        cfg.generation.initial_values_per_ode = 2;
        cfg.solve.n_grid = 128;
        cfg
    }

    #[test]
    fn small_corpus_bounds_and_invariants() {
        let ds = generate_dataset(&small(), 3).unwrap();
        assert!(ds.len() <= 40 && !ds.is_empty());
        let h = &ds.manifest.header;
        assert_eq!(h.counts.trajectories, ds.len());
        for r in ds.records() {
            let e = r.expr().unwrap();
            assert_eq!(simplify(&e).unwrap(), e);
            assert_eq!(r.traj_len, 128);
            let traj = ds.trajectory_of(r);
            assert!(crate::solver::quality_check(&traj, &e, 1.0).passed);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let ds = generate_dataset(&small(), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn record_cap() {
        let cfg = DatasetConfig {
            max_records: Some(5),
            ..small()
        };
        let ds = generate_dataset(&cfg, 3).unwrap();
        assert_eq!(ds.len(), 5);
    }
}
