use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    constants_in_grid, draw_y0, io_err, status_key, tally, Builder, Counts, Dataset, DatasetConfig, DatasetError,
    DatasetHeader, DatasetManifest,
};
use crate::canonicalize::{in_support, simplify, REWRITE_SET_VERSION};
use crate::expr::{parse_infix, skeletonize, Expr};
use crate::sampler::{sample_expr, GenerationConfig};
use crate::seed;
use crate::solver::{solve_checked, SolveConfig, Trajectory};

/// A named reference equation with its initial value.
#[derive(Debug, Clone, PartialEq)]
pub struct TextbookEntry {
    pub name: &'static str,
    /// Right-hand side as usually written.
    pub original: &'static str,
    /// Form handed to the simplifier.
    pub simplified: &'static str,
    pub y0: f64,
}

const TEXTBOOK: [(&str, &str, &str, f64); 12] = [
    ("autonomous Riccati", "0.6*y**2 + 2*y + 0.1", "0.6*y**2 + 2*y + 0.1", -0.2),
    ("autonomous Stuart-Landau", "-2.2/2*y**3 + 1.31*y", "-1.1*y**3 + 1.31*y", 0.1),
    ("autonomous Bernoulli", "-1.3*y + 2.1*y**2.2", "-1.3*y + 2.1*y**2.2", 0.6),
    ("compound interest", "0.1*y", "0.1*y", 4.9),
    ("Newton's law of cooling", "-0.1*(y - 3)", "0.3 - 0.1*y", 4.9),
    ("Logistic equation", "0.23*y*(1 - y)", "0.23*y*(1 - y)", 4.9),
    // the expanded quadratic coefficient is 0.23*0.33; the simplifier folds it
    (
        "Logistic equation with harvesting",
        "0.23*y*(1 - 0.33*y) - 0.5",
        "0.23*y*(1 - 0.33*y) - 0.5",
        3.5,
    ),
    ("Logistic equation with harvesting 2", "2*y*(1 - y/3) - 0.5", "2*y - 0.66*y**2 - 0.5", 0.7),
    ("Solow-Swan", "y**0.5*(0.9*8 - (3 + 2.5)*y**(1 - 0.5))", "7.2*y**0.5 - 5.5*y", 0.1),
    ("Tank draining", "-sqrt(2*9.81)*(2/9)**2*sqrt(y)", "-0.21*y**0.5", 1.0),
    (
        "Draining water through a funnel",
        "-(0.5**2/4)*sqrt(2*9.81)*(sin(1)/cos(1))**2*y**(-1.5)",
        "-0.67/y**1.5",
        3.0,
    ),
    ("velocity of a body thrown vertically upwards", "-9.81 - 0.9*y/8.2", "-0.10*y - 9.81", 0.1),
];

pub fn textbook_entries() -> Vec<TextbookEntry> {
    TEXTBOOK
        .iter()
        .map(|&(name, original, simplified, y0)| TextbookEntry {
            name,
            original,
            simplified,
            y0,
        })
        .collect()
}

fn header(config: DatasetConfig, seed: u64, builder: &Builder, failures: BTreeMap<String, usize>) -> DatasetHeader {
    let skeletons: HashSet<&str> = builder.records.iter().map(|r| r.skeleton.as_str()).collect();
    let expressions: HashSet<&str> = builder.records.iter().map(|r| r.infix.as_str()).collect();
    DatasetHeader {
        config,
        seed,
        rewrite_set_version: REWRITE_SET_VERSION,
        counts: Counts {
            skeletons: skeletons.len(),
            expressions: expressions.len(),
            trajectories: builder.len(),
        },
        failures,
    }
}

/// The twelve built-in reference equations, simplified and solved on `[0, T]`.
pub fn textbook_testset(solve: &SolveConfig) -> Dataset {
    let mut builder = Builder::new();
    let mut failures = BTreeMap::new();
    for (i, entry) in textbook_entries().into_iter().enumerate() {
        let e = simplify(&parse_infix(entry.simplified).expect("built-in equation parses"))
            .expect("built-in equation simplifies");
        let traj = solve_checked(&e, entry.y0, solve);
        match status_key(&traj) {
            Some(key) => tally(&mut failures, key),
            None => builder.push(&e, &traj, [i as u64, 0, 0], Some(entry.name.to_string())),
        }
    }
    let config = DatasetConfig {
        skeletons: TEXTBOOK.len(),
        solve: solve.clone(),
        ..DatasetConfig::default()
    };
    let h = header(config, 0, &builder, failures);
    builder.finish(h)
}

/// Size and diversity limits for a held-out test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LargeTestConfig {
    pub target: usize,
    pub max_per_complexity: usize,
    pub max_attempts: usize,
}

impl Default for LargeTestConfig {
    fn default() -> Self {
        Self {
            target: 162,
            max_per_complexity: 10,
            max_attempts: 100_000,
        }
    }
}

struct Candidate {
    expr: Expr,
    key: String,
    traj: Trajectory,
}

fn large_candidate(gen: &GenerationConfig, solve: &SolveConfig, seed: u64, i: u64) -> Option<Candidate> {
    let mut rng = seed::stream("large-testset", seed, &[i]);
    let e = simplify(&sample_expr(gen, &mut rng)).ok()?;
    if !in_support(&e, gen) || !e.contains_var() || !constants_in_grid(&e) {
        return None;
    }
    let key = skeletonize(&e).0.key().to_string();
    let y0 = draw_y0(solve.y0_range, "large-testset-iv", seed, &[i]);
    let traj = solve_checked(&e, y0, solve);
    status_key(&traj).is_none().then_some(Candidate { expr: e, key, traj })
}

/// Rejection-samples fresh records from the training distribution with
/// skeletons unseen in `train`, no skeleton twice and at most
/// `max_per_complexity` records per complexity value.
pub fn build_large_testset(train: &DatasetManifest, cfg: &LargeTestConfig, seed: u64) -> Result<Dataset, DatasetError> {
    let gen = &train.header.config.generation;
    let solve = &train.header.config.solve;
    let mut seen: HashSet<String> = train.records.iter().map(|r| r.skeleton.clone()).collect();
    let mut per_complexity: BTreeMap<usize, usize> = BTreeMap::new();
    let mut builder = Builder::new();
    let mut failures = BTreeMap::new();
    let mut attempts = 0;
    const CHUNK: usize = 256;
    while builder.len() < cfg.target && attempts < cfg.max_attempts {
        let end = (attempts + CHUNK).min(cfg.max_attempts);
        let start = attempts;
        let batch: Vec<Option<Candidate>> = (start..end)
            .into_par_iter()
            .map(|i| large_candidate(gen, solve, seed, i as u64))
            .collect();
        for (offset, c) in batch.into_iter().enumerate() {
            if builder.len() >= cfg.target {
                break;
            }
            attempts = start + offset + 1;
            let Some(c) = c else {
                tally(&mut failures, "rejected");
                continue;
            };
            let bucket = per_complexity.entry(c.expr.complexity()).or_insert(0);
            if *bucket >= cfg.max_per_complexity {
                tally(&mut failures, "complexity_full");
                continue;
            }
            if !seen.insert(c.key.clone()) {
                tally(&mut failures, "duplicate_skeleton");
                continue;
            }
            *bucket += 1;
            let idx = builder.len() as u64;
            builder.push(&c.expr, &c.traj, [idx, 0, 0], None);
        }
    }
    if builder.len() < cfg.target {
        return Err(DatasetError::BudgetExhausted {
            attempts,
            found: builder.len(),
            target: cfg.target,
        });
    }
    let config = train.header.config.clone();
    let h = header(config, seed, &builder, failures);
    Ok(builder.finish(h))
}

/// Reads one equation per line, `EXPR` or `EXPR, Y0`; blank lines and `#`
/// comments are skipped. Missing initial values are drawn from the solve
/// config's range, keyed by line number.
pub fn load_equation_list(path: &Path, solve: &SolveConfig, seed: u64) -> Result<Dataset, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut builder = Builder::new();
    let mut failures = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (expr_text, y0) = match line.rsplit_once(',') {
            Some((e, v)) => {
                let y0: f64 = v.trim().parse().map_err(|_| DatasetError::Equation {
                    line: line_no,
                    message: format!("bad initial value {:?}", v.trim()),
                })?;
                (e.trim(), y0)
            }
            None => (line, draw_y0(solve.y0_range, "equation-list", seed, &[line_no as u64])),
        };
        let parsed = parse_infix(expr_text).map_err(|source| DatasetError::Parse { line: line_no, source })?;
        let e = simplify(&parsed).map_err(|err| DatasetError::Equation {
            line: line_no,
            message: err.to_string(),
        })?;
        let traj = solve_checked(&e, y0, solve);
        match status_key(&traj) {
            Some(key) => tally(&mut failures, key),
            None => builder.push(&e, &traj, [line_no as u64, 0, 0], None),
        }
    }
    let config = DatasetConfig {
        solve: solve.clone(),
        ..DatasetConfig::default()
    };
    let h = header(config, seed, &builder, failures);
    Ok(builder.finish(h))
}
