//! Finite-difference weights and the derivative-consistency filter.

use thiserror::Error;

use super::Trajectory;
use crate::expr::Expr;

/// Points in the derivative stencil used by [`approx_derivative`].
pub const STENCIL_POINTS: usize = 9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FdError {
    #[error("stencil needs more than {order} points, got {points}")]
    TooFewOffsets { points: usize, order: usize },
    #[error("stencil offsets must be distinct")]
    RepeatedOffset,
    #[error("trajectory has {0} points, need at least {STENCIL_POINTS}")]
    TooFewPoints(usize),
    #[error("trajectory grid is not equidistant")]
    IrregularGrid,
}

/// Weights `w` such that `sum_j w[j] * u(x0 + offsets[j])` approximates the
/// `order`-th derivative of `u` at `x0` on a unit-spaced grid.
pub fn fd_weights(offsets: &[i64], order: usize) -> Result<Vec<f64>, FdError> {
    let n = offsets.len();
    if n <= order {
        return Err(FdError::TooFewOffsets { points: n, order });
    }
    for (i, a) in offsets.iter().enumerate() {
        if offsets[..i].contains(a) {
            return Err(FdError::RepeatedOffset);
        }
    }
    let x: Vec<f64> = offsets.iter().map(|&o| o as f64).collect();
    // c[j][k]: weight of node j for derivative k, using nodes 0..=i
    let mut c = vec![vec![0.0f64; order + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = x[0];
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i];
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    let mut w: Vec<f64> = c.into_iter().map(|row| row[order]).collect();
    // symmetric stencils have exact parity (-1)^order; remove the round-off
    let mirror: Option<Vec<usize>> = offsets.iter().map(|&o| offsets.iter().position(|&p| p == -o)).collect();
    if let Some(mirror) = mirror {
        let sign = if order.is_multiple_of(2) { 1.0 } else { -1.0 };
        let sym: Vec<f64> = (0..n).map(|j| 0.5 * (w[j] + sign * w[mirror[j]])).collect();
        w = sym;
    }
    Ok(w)
}

/// First derivative at every grid point from a 9-point stencil: central in
/// the interior, shifted one-sided windows near the ends.
pub fn approx_derivative(traj: &Trajectory) -> Result<Vec<f64>, FdError> {
    derivative_on_grid(&traj.times, &traj.values)
}

pub(crate) fn derivative_on_grid(times: &[f64], values: &[f64]) -> Result<Vec<f64>, FdError> {
    let n = values.len();
    if n < STENCIL_POINTS || times.len() != n {
        return Err(FdError::TooFewPoints(n.min(times.len())));
    }
    let h = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(h > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0)) {
        return Err(FdError::IrregularGrid);
    }
    let half = STENCIL_POINTS / 2;
    // one weight table per distinct window position relative to the point
    let tables: Vec<Vec<f64>> = (0..STENCIL_POINTS)
        .map(|pos| {
            let offsets: Vec<i64> = (0..STENCIL_POINTS as i64).map(|j| j - pos as i64).collect();
            fd_weights(&offsets, 1).expect("distinct offsets")
        })
        .collect();
    Ok((0..n)
        .map(|i| {
            let start = i.saturating_sub(half).min(n - STENCIL_POINTS);
            let w = &tables[i - start];
            // weights sum to zero, so differencing against y_i is exact on constants
            let yi = values[i];
            let acc: f64 = w
                .iter()
                .zip(&values[start..start + STENCIL_POINTS])
                .map(|(a, b)| a * (b - yi))
                .sum();
            acc / h
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    pub passed: bool,
    /// Supremum of `|y'_fd - e(y)|`; infinite when anything is non-finite.
    pub max_error: f64,
}

/// Compares the finite-difference derivative of `traj` with `e` evaluated
/// along it; fails if the sup-norm gap exceeds `epsilon` or a NaN appears.
pub fn quality_check(traj: &Trajectory, e: &Expr, epsilon: f64) -> QualityReport {
    let fail = QualityReport {
        passed: false,
        max_error: f64::INFINITY,
    };
    let Ok(fd) = approx_derivative(traj) else {
        return fail;
    };
    let mut max_error: f64 = 0.0;
    for (d, &y) in fd.iter().zip(&traj.values) {
        let gap = (d - e.evaluate(y)).abs();
        if !gap.is_finite() {
            return fail;
        }
        max_error = max_error.max(gap);
    }
    QualityReport {
        passed: max_error <= epsilon,
        max_error,
    }
}
