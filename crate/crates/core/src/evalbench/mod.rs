//! Benchmark protocol: corrupt and subsample a trajectory, propose
//! candidate equations, select one by fit to the observations, then score it
//! against noiseless ground truth on the observed and the adjacent span.

mod predictor;
mod report;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, OdeRecord};
use crate::expr::Expr;
use crate::solver::{integrate, solve_at, SolveConfig, SolveStatus};

pub use predictor::{ModelPredictor, OraclePredictor, Predictor, Proposal};
pub use report::{
    emit_report, read_rows, recompute_aggregates, run_benchmark, Aggregate, EvalReport, MetricRow, RowStatus, Selection, Timing,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub sigmas: Vec<f64>,
    pub ns: Vec<usize>,
    pub atol: f64,
    pub rtol: f64,
    pub beam_width: usize,
    pub max_len: usize,
    /// Spans and solver settings for both regimes.
    pub solve: SolveConfig,
    /// Record wall-clock inference times. Off by default so reports are
    /// byte-reproducible.
    pub timing: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            sigmas: vec![0.001, 0.005, 0.01, 0.015, 0.02],
            ns: vec![128, 192, 256],
            atol: 1e-10,
            rtol: 0.05,
            beam_width: 32,
            max_len: 64,
            solve: SolveConfig::default(),
            timing: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let fail = |m: String| Err(EvalError::Config(m));
        self.solve.validate().map_err(|e| EvalError::Config(e.to_string()))?;
        if self.sigmas.is_empty() || self.ns.is_empty() {
            return fail("sigmas and ns must be non-empty".into());
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return fail(format!("noise level {s} must be finite and non-negative"));
        }
        if let Some(n) = self.ns.iter().find(|&&n| n < 2 || n > self.solve.n_grid) {
            return fail(format!("point count {n} must lie in [2, {}]", self.solve.n_grid));
        }
        if !(self.atol > 0.0 && self.rtol > 0.0) {
            return fail("tolerances must be positive".into());
        }
        if self.beam_width == 0 || self.max_len == 0 {
            return fail("beam_width and max_len must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("invalid eval config: {0}")]
    Config(String),
    #[error("cannot take {n} points from a trajectory of {len}")]
    TooManyPoints { n: usize, len: usize },
    #[error("metric inputs need equal lengths >= 2 (got {pred} and {truth})")]
    Length { pred: usize, truth: usize },
    #[error("ground truth is not finite")]
    NonfiniteTruth,
    #[error("no candidates to select from")]
    NoCandidates,
    #[error("every candidate failed to integrate")]
    SelectionFailed,
    #[error("ground truth unavailable: {0}")]
    Truth(String),
}

/// Picks `n` distinct grid points uniformly at random (in time order) and
/// multiplies each value by an independent `N(1, sigma)` draw.
pub fn corrupt_and_subsample<R: Rng + ?Sized>(
    times: &[f64],
    values: &[f64],
    sigma: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(f64, f64)>, EvalError> {
    assert_eq!(times.len(), values.len());
    if n > times.len() || n == 0 {
        return Err(EvalError::TooManyPoints { n, len: times.len() });
    }
    let mut idx = rand::seq::index::sample(rng, times.len(), n).into_vec();
    idx.sort_unstable();
    if sigma == 0.0 {
        return Ok(idx.iter().map(|&i| (times[i], values[i])).collect());
    }
    let noise = Normal::new(1.0, sigma).map_err(|e| EvalError::Config(e.to_string()))?;
    Ok(idx.iter().map(|&i| (times[i], values[i] * noise.sample(rng))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// `-inf` when the prediction is not finite, NaN when the truth is constant.
    pub r2: f64,
    pub l1: f64,
    pub linf: f64,
    /// Fraction of points within `atol + rtol * |truth|`.
    pub isclose: f64,
    pub zero_variance: bool,
}

impl Metrics {
    /// Scores of a prediction that could not be produced.
    pub fn failure() -> Self {
        Self {
            r2: f64::NEG_INFINITY,
            l1: f64::INFINITY,
            linf: f64::INFINITY,
            isclose: 0.0,
            zero_variance: false,
        }
    }
}

pub fn metrics(pred: &[f64], truth: &[f64], atol: f64, rtol: f64) -> Result<Metrics, EvalError> {
    if pred.len() != truth.len() || truth.len() < 2 {
        return Err(EvalError::Length {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if truth.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonfiniteTruth);
    }
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    let finite = pred.iter().all(|p| p.is_finite());
    let mut ss_res = 0.0;
    let mut l1 = 0.0;
    let mut linf: f64 = 0.0;
    let mut close = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        let d = if p.is_finite() { (p - t).abs() } else { f64::INFINITY };
        ss_res += d * d;
        l1 += d;
        linf = linf.max(d);
        if d <= atol + rtol * t.abs() {
            close += 1;
        }
    }
    let zero_variance = ss_tot == 0.0;
    let r2 = if !finite {
        f64::NEG_INFINITY
    } else if zero_variance {
        f64::NAN
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(Metrics {
        r2,
        l1,
        linf,
        isclose: close as f64 / n,
        zero_variance,
    })
}

/// Index of the best-fitting candidate and every candidate's score.
#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub index: usize,
    /// R² at the observations (negated squared error if they are constant);
    /// `-inf` for candidates that fail to integrate.
    pub scores: Vec<f64>,
}

fn fit_score(e: &Expr, obs: &[(f64, f64)], solve: &SolveConfig) -> f64 {
    let (t0, y0) = obs[0];
    let times: Vec<f64> = obs.iter().map(|o| o.0).collect();
    let out = solve_at(|y| e.evaluate(y), y0, t0, &times, solve);
    if out.status != SolveStatus::Ok || out.values.len() != obs.len() {
        return f64::NEG_INFINITY;
    }
    let observed: Vec<f64> = obs.iter().map(|o| o.1).collect();
    match metrics(&out.values, &observed, 1e-10, 0.05) {
        Ok(m) if m.zero_variance => -out.values.iter().zip(&observed).map(|(p, o)| (p - o) * (p - o)).sum::<f64>(),
        Ok(m) => m.r2,
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Integrates each candidate from the first observation and keeps the one
/// with the highest R² against the observations. Ties go to the earlier
/// candidate.
pub fn select_candidate(candidates: &[Expr], obs: &[(f64, f64)], solve: &SolveConfig) -> Result<Choice, EvalError> {
    if candidates.is_empty() {
        return Err(EvalError::NoCandidates);
    }
    if obs.len() < 2 {
        return Err(EvalError::Length {
            pred: obs.len(),
            truth: obs.len(),
        });
    }
    let scores: Vec<f64> = candidates.iter().map(|e| fit_score(e, obs, solve)).collect();
    let mut index = None;
    for (i, &s) in scores.iter().enumerate() {
        if s == f64::NEG_INFINITY || s.is_nan() {
            continue;
        }
        if index.is_none_or(|b: usize| s > scores[b]) {
            index = Some(i);
        }
    }
    index
        .map(|index| Choice { index, scores })
        .ok_or(EvalError::SelectionFailed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Interpolation,
    Extrapolation,
}

impl Regime {
    pub const ALL: [Regime; 2] = [Regime::Interpolation, Regime::Extrapolation];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Interpolation => "interpolation",
            Regime::Extrapolation => "extrapolation",
        }
    }
}

/// Noiseless reference solutions for both regimes.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub y0: f64,
    pub interp_times: Vec<f64>,
    pub interp_values: Vec<f64>,
    pub extra_times: Vec<f64>,
    pub extra_values: Vec<f64>,
}

impl GroundTruth {
    /// Uses the stored trajectory on `[0, T]` and solves the true equation
    /// on `[T, T_extra]` from the stored value at `T`.
    pub fn for_record(ds: &Dataset, record: &OdeRecord, solve: &SolveConfig) -> Result<Self, EvalError> {
        let (times, values) = ds.trajectory(record);
        let (Some(&t_last), Some(&y_last)) = (times.last(), values.last()) else {
            return Err(EvalError::Truth("empty trajectory".into()));
        };
        if t_last != solve.t_end {
            return Err(EvalError::Truth(format!(
                "trajectory ends at {t_last}, eval span ends at {}",
                solve.t_end
            )));
        }
        let truth = record.expr().map_err(|e| EvalError::Truth(e.to_string()))?;
        let extra = integrate(&truth, y_last, (solve.t_end, solve.t_extra), solve.n_grid, solve);
        if !extra.is_ok() {
            return Err(EvalError::Truth(format!("extrapolation solve: {:?}", extra.status)));
        }
        Ok(Self {
            y0: values[0],
            interp_times: times.to_vec(),
            interp_values: values.to_vec(),
            extra_times: extra.times,
            extra_values: extra.values,
        })
    }

    fn regime(&self, r: Regime) -> (&[f64], &[f64]) {
        match r {
            Regime::Interpolation => (&self.interp_times, &self.interp_values),
            Regime::Extrapolation => (&self.extra_times, &self.extra_values),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeScore {
    pub regime: Regime,
    pub metrics: Metrics,
    /// Whether the prediction integrated over the whole span.
    pub integrated: bool,
}

/// Scores `pred` in both regimes. Each span starts from the true state at
/// its left end.
pub fn evaluate_prediction(pred: &Expr, truth: &GroundTruth, cfg: &EvalConfig) -> Result<[RegimeScore; 2], EvalError> {
    let score = |regime: Regime| -> Result<RegimeScore, EvalError> {
        let (times, values) = truth.regime(regime);
        let out = solve_at(|y| pred.evaluate(y), values[0], times[0], times, &cfg.solve);
        if out.status != SolveStatus::Ok || out.values.len() != times.len() {
            return Ok(RegimeScore {
                regime,
                metrics: Metrics::failure(),
                integrated: false,
            });
        }
        Ok(RegimeScore {
            regime,
            metrics: metrics(&out.values, values, cfg.atol, cfg.rtol)?,
            integrated: true,
        })
    };
    Ok([score(Regime::Interpolation)?, score(Regime::Extrapolation)?])
}
