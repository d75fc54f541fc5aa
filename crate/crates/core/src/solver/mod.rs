//! Initial value problems on equidistant grids, finite differences and the
//! trajectory quality check.

mod dopri;
mod fd;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Expr;

pub use dopri::{solve_at, SolveOutcome};
pub use fd::{approx_derivative, fd_weights, quality_check, FdError, QualityReport, STENCIL_POINTS};

/// Numerical solution parameters. Defaults: `T = 2`, `T_extra = 4`,
/// `N_grid = 1024`, tolerances `1e-9`, `y0 ~ U(-5, 5)`, QC `eps = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub t_end: f64,
    pub t_extra: f64,
    pub n_grid: usize,
    pub rtol: f64,
    pub atol: f64,
    pub y0_range: (f64, f64),
    pub max_steps: usize,
    pub time_budget_secs: f64,
    pub qc_epsilon: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            t_end: 2.0,
            t_extra: 4.0,
            n_grid: 1024,
            rtol: 1e-9,
            atol: 1e-9,
            y0_range: (-5.0, 5.0),
            max_steps: 100_000,
            time_budget_secs: 10.0,
            qc_epsilon: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid solve config: {0}")]
pub struct SolveConfigError(pub String);

impl SolveConfig {
    pub fn validate(&self) -> Result<(), SolveConfigError> {
        let fail = |m: &str| Err(SolveConfigError(m.to_string()));
        if !(0.0 < self.t_end && self.t_end < self.t_extra) {
            return fail("need 0 < t_end < t_extra");
        }
        if self.n_grid < 16 {
            return fail("n_grid must be at least 16");
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return fail("tolerances must be positive");
        }
        if !(self.y0_range.0 < self.y0_range.1) {
            return fail("y0_range is empty");
        }
        if self.qc_epsilon <= 0.0 || self.max_steps == 0 || self.time_budget_secs <= 0.0 {
            return fail("qc_epsilon, max_steps and time_budget_secs must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Ok,
    /// `f` or the solution left the finite reals.
    Nonfinite,
    /// Step size fell below round-off resolution.
    StepFailure,
    /// Step count or wall-clock budget exhausted.
    BudgetExceeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Qc {
    NotRun,
    Pass { max_error: f64 },
    Fail { max_error: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub y0: f64,
    pub status: SolveStatus,
    pub qc: Qc,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_ok(&self) -> bool {
        self.status == SolveStatus::Ok
    }
}

/// `n` equidistant points from `start` to `end`, both included exactly.
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => {
            // double-double evaluation of start + (end - start) * i / (n - 1),
            // rounded once at the end
            let (span, span_err) = two_sum(end, -start);
            let last = (n - 1) as f64;
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        return end;
                    }
                    let i = i as f64;
                    let f = i / last;
                    let f_err = (-f).mul_add(last, i) / last;
                    let p = span * f;
                    let p_err = span.mul_add(f, -p) + span * f_err + span_err * f;
                    let (s, s_err) = two_sum(start, p);
                    s + (s_err + p_err)
                })
                .collect()
        }
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Solves `y' = e(y)`, `y(t_start) = y0` and samples the solution at
/// `n_points` equidistant times on `[t_start, t_end]`. Failures truncate the
/// output after the last grid point reached and set the status.
pub fn integrate(e: &Expr, y0: f64, span: (f64, f64), n_points: usize, cfg: &SolveConfig) -> Trajectory {
    let times = linspace(span.0, span.1, n_points);
    let outcome = solve_at(|y| e.evaluate(y), y0, span.0, &times, cfg);
    let mut times = times;
    times.truncate(outcome.values.len());
    Trajectory {
        times,
        values: outcome.values,
        y0,
        status: outcome.status,
        qc: Qc::NotRun,
    }
}

/// Integrates on `[0, T]` over the configured grid and runs the quality check.
pub fn solve_checked(e: &Expr, y0: f64, cfg: &SolveConfig) -> Trajectory {
    let mut traj = integrate(e, y0, (0.0, cfg.t_end), cfg.n_grid, cfg);
    if traj.is_ok() {
        let report = quality_check(&traj, e, cfg.qc_epsilon);
        traj.qc = if report.passed {
            Qc::Pass {
                max_error: report.max_error,
            }
        } else {
            Qc::Fail {
                max_error: report.max_error,
            }
        };
    }
    traj
}
