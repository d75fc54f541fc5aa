//! Command-line front end. Every failure prints one line of the form
//! `error[category]: message` on stderr and maps to a fixed exit code.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use crate::codec::encode_input;
use crate::dataset::{
    dataset_stats, generate_dataset, load_equation_list, textbook_testset, Dataset, DatasetConfig, DatasetError,
};
use crate::evalbench::{emit_report, run_benchmark, EvalConfig, EvalError, ModelPredictor, OraclePredictor, Predictor};
use crate::expr::parse_infix;
use crate::model::{beam_search, load_model, save_model, train, ArchConfig, Model, ModelError, TrainConfig, TrainError};
use crate::solver::{fd_weights, integrate, quality_check, SolveConfig, STENCIL_POINTS};

#[derive(Debug)]
pub struct CliError {
    pub category: &'static str,
    pub message: String,
}

impl CliError {
    fn new(category: &'static str, message: impl Into<String>) -> Self {
        Self {
            category,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category {
            "usage" => 2,
            "io" => 3,
            "config" => 4,
            "data" => 5,
            "generation" => 6,
            "model" => 7,
            "train" => 8,
            "eval" => 9,
            "selftest" => 10,
            _ => 1,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        let category = match &e {
            DatasetError::Io { .. } => "io",
            DatasetError::Format { .. } | DatasetError::Parse { .. } | DatasetError::Equation { .. } => "data",
            DatasetError::Config(_) | DatasetError::Sample(_) => "config",
            DatasetError::EmptyYield { .. } | DatasetError::BudgetExhausted { .. } => "generation",
        };
        Self::new(category, e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let category = if matches!(e, ModelError::Io(_)) { "io" } else { "model" };
        Self::new(category, e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(m) => m.into(),
            TrainError::Io(e) => Self::new("io", e.to_string()),
            TrainError::Config(m) => Self::new("config", m),
            other => Self::new("train", other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let category = if matches!(e, EvalError::Config(_)) { "config" } else { "eval" };
        Self::new(category, e.to_string())
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::new("io", format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "symode", version, about = "Symbolic ODE corpora, models and benchmarks")]
struct Cli {
    /// Global seed; every random choice derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for generate/evaluate (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ArchPreset {
    Desk,
    #[value(alias = "paper")]
    Full,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a training corpus.
    Generate {
        /// DatasetConfig JSON; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write complexity/operator/skeleton histograms for a corpus.
    Stats {
        dir: PathBuf,
        /// Output directory (default: the corpus directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model on a corpus.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "desk")]
        arch: ArchPreset,
        /// TrainConfig JSON; defaults when omitted. `--seed` overrides its seed.
        #[arg(long)]
        train_config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-step CSV log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Rank candidate equations for a trajectory CSV (columns t, y).
    Predict {
        #[arg(long, required_unless_present = "oracle")]
        model: Option<PathBuf>,
        /// Skip the model and propose this expression.
        #[arg(long, conflicts_with = "model")]
        oracle: Option<String>,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long, default_value_t = 32)]
        beams: usize,
        #[arg(long, default_value_t = 64)]
        max_len: usize,
    },
    /// Run the benchmark protocol on a test set.
    Evaluate {
        #[arg(long, required_unless_present = "oracle")]
        model: Option<PathBuf>,
        /// Use the ground-truth stub instead of a model.
        #[arg(long, conflicts_with = "model")]
        oracle: bool,
        /// With `--oracle`, also propose fixed wrong candidates.
        #[arg(long, requires = "oracle")]
        distractors: bool,
        /// `textbook`, a corpus directory, or an equation list file.
        #[arg(long)]
        testset: String,
        /// EvalConfig JSON; defaults when omitted.
        #[arg(long)]
        eval_config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the built-in textbook test set.
    Textbook {
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the 9-point stencil and run the quality-check self-test.
    FdCheck,
}

/// Tracks an output path and deletes it on failure if this run created it.
struct Output {
    path: PathBuf,
    existed: bool,
    done: bool,
}

impl Output {
    fn new(path: &Path) -> Self {
        Self {
            path: path.to_path_buf(),
            existed: path.exists(),
            done: false,
        }
    }

    fn finish(mut self) {
        self.done = true;
    }
}

impl Drop for Output {
    fn drop(&mut self) {
        if self.done || self.existed {
            return;
        }
        if self.path.is_dir() {
            let _ = fs::remove_dir_all(&self.path);
        } else {
            let _ = fs::remove_file(&self.path);
        }
    }
}

fn read_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::new("usage", "--threads must be positive"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::new("config", e.to_string()))?;
    Ok(pool.install(f))
}

/// Two-column `t,y` CSV; a non-numeric first row is treated as a header.
pub fn read_trajectory_csv(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::new("data", format!("{}: {e}", path.display())))?;
        let parsed = (rec.len() == 2)
            .then(|| Some((rec[0].parse::<f64>().ok()?, rec[1].parse::<f64>().ok()?)))
            .flatten();
        match parsed {
            Some(p) => out.push(p),
            None if i == 0 => continue,
            None => {
                return Err(CliError::new(
                    "data",
                    format!("{}: line {}: expected two numbers", path.display(), i + 1),
                ))
            }
        }
    }
    if out.len() < 2 || out.windows(2).any(|w| !(w[0].0 < w[1].0)) {
        return Err(CliError::new(
            "data",
            format!("{}: need at least two rows with increasing t", path.display()),
        ));
    }
    Ok(out)
}

fn load_testset(spec: &str, solve: &SolveConfig, seed: u64) -> Result<Dataset, CliError> {
    if spec == "textbook" {
        return Ok(textbook_testset(solve));
    }
    let path = Path::new(spec);
    if path.is_dir() {
        Ok(Dataset::load(path)?)
    } else if path.is_file() {
        Ok(load_equation_list(path, solve, seed)?)
    } else {
        Err(CliError::new("usage", format!("test set {spec}: not `textbook`, a directory or a file")))
    }
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let seed = cli.seed;
    let out_err = |e: std::io::Error| CliError::new("io", e.to_string());
    match cli.command {
        Command::Generate { config, out } => {
            let cfg: DatasetConfig = read_json(config.as_deref())?;
            let guard = Output::new(&out);
            let ds = with_threads(cli.threads, || generate_dataset(&cfg, seed))??;
            ds.save(&out)?;
            guard.finish();
            writeln!(stdout, "{} records written to {}", ds.len(), out.display()).map_err(out_err)?;
        }
        Command::Stats { dir, out } => {
            let ds = Dataset::load(&dir)?;
            let stats = dataset_stats(&ds.manifest);
            let target = out.unwrap_or_else(|| dir.clone());
            stats.write(&target)?;
            writeln!(
                stdout,
                "{} records, {} skeletons; stats in {}",
                stats.records,
                stats.trajectories_per_skeleton.len(),
                target.display()
            )
            .map_err(out_err)?;
        }
        Command::Train {
            data,
            arch,
            train_config,
            out,
            log,
        } => {
            let mut cfg: TrainConfig = read_json(train_config.as_deref())?;
            cfg.seed = seed;
            let arch = match arch {
                ArchPreset::Desk => ArchConfig::desk(),
                ArchPreset::Full => ArchConfig::full(),
            };
            let ds = Dataset::load(&data)?;
            let mut model = Model::new(arch, seed)?;
            let outcome = train(&mut model, &ds, &cfg)?;
            let guard = Output::new(&out);
            save_model(&model, &out)?;
            guard.finish();
            if let Some(log) = log {
                outcome.write_log(&log).map_err(io_error(&log))?;
            }
            writeln!(
                stdout,
                "{} steps, {} epochs, last-epoch token accuracy {:.4}; model written to {}",
                outcome.steps,
                outcome.epochs,
                outcome.last_epoch_token_acc,
                out.display()
            )
            .map_err(out_err)?;
        }
        Command::Predict {
            model,
            oracle,
            traj,
            beams,
            max_len,
        } => {
            let obs = read_trajectory_csv(&traj)?;
            let ranked: Vec<(f64, Result<String, String>)> = match (oracle, model) {
                (Some(expr), _) => {
                    let e = parse_infix(&expr).map_err(|e| CliError::new("usage", format!("--oracle: {e}")))?;
                    vec![(0.0, Ok(e.to_infix()))]
                }
                (None, Some(path)) => {
                    let model = load_model(&path)?;
                    beam_search(&model, &encode_input(&obs), beams, max_len)?
                        .into_iter()
                        .map(|c| {
                            let text = match &c.expr {
                                Some(e) => Ok(e.to_infix()),
                                None => Err(c.tokens.join(" ")),
                            };
                            (c.score, text)
                        })
                        .collect()
                }
                (None, None) => return Err(CliError::new("usage", "predict needs --model or --oracle")),
            };
            for (score, text) in ranked {
                match text {
                    Ok(infix) => writeln!(stdout, "{score:.6}\t{infix}"),
                    Err(tokens) => writeln!(stdout, "{score:.6}\t# unparseable: {tokens}"),
                }
                .map_err(out_err)?;
            }
        }
        Command::Evaluate {
            model,
            oracle,
            distractors,
            testset,
            eval_config,
            out,
        } => {
            let cfg: EvalConfig = read_json(eval_config.as_deref())?;
            cfg.validate()?;
            let ds = load_testset(&testset, &cfg.solve, seed)?;
            let predictor: Box<dyn Predictor> = match (oracle, model) {
                (true, _) => Box::new(OraclePredictor { distractors }),
                (false, Some(path)) => Box::new(ModelPredictor {
                    model: load_model(&path)?,
                }),
                (false, None) => return Err(CliError::new("usage", "evaluate needs --model or --oracle")),
            };
            let guard = Output::new(&out);
            let report = with_threads(cli.threads, || run_benchmark(predictor.as_ref(), &ds, &cfg, seed))??;
            emit_report(&report, &out).map_err(|e| CliError::new("io", e.to_string()))?;
            guard.finish();
            writeln!(stdout, "{} rows written to {}", report.rows.len(), out.display()).map_err(out_err)?;
        }
        Command::Textbook { out } => {
            let guard = Output::new(&out);
            let ds = textbook_testset(&SolveConfig::default());
            ds.save(&out)?;
            guard.finish();
            writeln!(stdout, "{} equations written to {}", ds.len(), out.display()).map_err(out_err)?;
        }
        Command::FdCheck => fd_check(stdout)?,
    }
    Ok(())
}

fn fd_check(stdout: &mut dyn Write) -> Result<(), CliError> {
    let out_err = |e: std::io::Error| CliError::new("io", e.to_string());
    let half = (STENCIL_POINTS / 2) as i64;
    let offsets: Vec<i64> = (-half..=half).collect();
    let w = fd_weights(&offsets, 1).map_err(|e| CliError::new("selftest", e.to_string()))?;
    writeln!(stdout, "offset\tweight").map_err(out_err)?;
    for (o, w) in offsets.iter().zip(&w) {
        writeln!(stdout, "{o}\t{w:.17e}").map_err(out_err)?;
    }
    let cfg = SolveConfig::default();
    let e = parse_infix("0.1*y").expect("literal parses");
    let mut traj = integrate(&e, 4.9, (0.0, cfg.t_end), cfg.n_grid, &cfg);
    let clean = quality_check(&traj, &e, cfg.qc_epsilon);
    let mid = traj.len() / 2;
    traj.values[mid] += 10.0;
    let spiked = quality_check(&traj, &e, cfg.qc_epsilon);
    writeln!(stdout, "qc clean: passed={} max_error={:e}", clean.passed, clean.max_error).map_err(out_err)?;
    writeln!(stdout, "qc spike: passed={} max_error={:e}", spiked.passed, spiked.max_error).map_err(out_err)?;
    if !clean.passed || spiked.passed {
        return Err(CliError::new("selftest", "quality check self-test failed"));
    }
    writeln!(stdout, "self-test ok").map_err(out_err)?;
    Ok(())
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return 2;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category, e.message);
            e.exit_code()
        }
    }
}
