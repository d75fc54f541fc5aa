//! Dormand-Prince 5(4) with PI step control and 4th-order dense output.

use std::time::Instant;

use super::{SolveConfig, SolveStatus};

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// difference between the 5th and embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const NAN_SHRINK: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    /// Solution at the requested times, truncated on failure.
    pub values: Vec<f64>,
    pub status: SolveStatus,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

struct Dense {
    t: f64,
    h: f64,
    r: [f64; 5],
}

impl Dense {
    fn eval(&self, t: f64) -> f64 {
        let theta = ((t - self.t) / self.h).clamp(0.0, 1.0);
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = self.r;
        r1 + theta * (r2 + theta1 * (r3 + theta * (r4 + theta1 * r5)))
    }
}

fn initial_step<F: Fn(f64) -> f64>(f: &F, t0: f64, y0: f64, f0: f64, t_end: f64, cfg: &SolveConfig) -> f64 {
    let sc = cfg.atol + cfg.rtol * y0.abs();
    let d0 = y0.abs() / sc;
    let d1 = f0.abs() / sc;
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(t_end - t0);
    let f1 = f(y0 + h0 * f0);
    let d2 = if f1.is_finite() { (f1 - f0).abs() / sc / h0 } else { f64::INFINITY };
    let dmax = d1.max(d2);
    let h1 = if dmax <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dmax).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(t_end - t0)
}

/// Integrates `y' = f(y)` from `(t0, y0)` and returns the dense solution at
/// `times` (ascending, all `>= t0`).
pub fn solve_at<F: Fn(f64) -> f64>(f: F, y0: f64, t0: f64, times: &[f64], cfg: &SolveConfig) -> SolveOutcome {
    let mut out = SolveOutcome {
        values: Vec::with_capacity(times.len()),
        status: SolveStatus::Ok,
        accepted_steps: 0,
        rejected_steps: 0,
    };
    let Some(&t_end) = times.last() else {
        return out;
    };
    let mut cursor = 0;
    while cursor < times.len() && times[cursor] <= t0 {
        out.values.push(y0);
        cursor += 1;
    }
    if !y0.is_finite() {
        out.values.clear();
        out.status = SolveStatus::Nonfinite;
        return out;
    }
    if cursor == times.len() {
        return out;
    }
    let mut k1 = f(y0);
    if !k1.is_finite() {
        out.status = SolveStatus::Nonfinite;
        return out;
    }

    let started = Instant::now();
    let mut t = t0;
    let mut y = y0;
    let mut h = initial_step(&f, t0, y0, k1, t_end, cfg);
    let mut err_old: f64 = 1e-4;
    let mut last_rejected = false;
    let mut nan_retry = false;
    let mut steps = 0usize;

    loop {
        if steps >= cfg.max_steps || started.elapsed().as_secs_f64() > cfg.time_budget_secs {
            out.status = SolveStatus::BudgetExceeded;
            return out;
        }
        steps += 1;
        let h_min = 16.0 * f64::EPSILON * t.abs().max(1.0);
        if h < h_min {
            out.status = if nan_retry {
                SolveStatus::Nonfinite
            } else {
                SolveStatus::StepFailure
            };
            return out;
        }
        if t + h > t_end || (t_end - (t + h)) < h_min {
            h = t_end - t;
        }

        let k2 = f(y + h * A21 * k1);
        let k3 = f(y + h * (A31 * k1 + A32 * k2));
        let k4 = f(y + h * (A41 * k1 + A42 * k2 + A43 * k3));
        let k5 = f(y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4));
        let k6 = f(y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5));
        let y_new = y + h * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6);
        let k7 = f(y_new);

        if ![k2, k3, k4, k5, k6, k7, y_new].iter().all(|v| v.is_finite()) {
            // stage left the domain; retry with a smaller step
            nan_retry = true;
            last_rejected = true;
            out.rejected_steps += 1;
            h *= NAN_SHRINK;
            continue;
        }

        let err = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
        let sc = cfg.atol + cfg.rtol * y.abs().max(y_new.abs());
        let err_norm = (err / sc).abs();
        let fac11 = err_norm.powf(0.2 - BETA * 0.75);

        if err_norm <= 1.0 {
            nan_retry = false;
            out.accepted_steps += 1;
            let ydiff = y_new - y;
            let bspl = h * k1 - ydiff;
            let dense = Dense {
                t,
                h,
                r: [
                    y,
                    ydiff,
                    bspl,
                    ydiff - h * k7 - bspl,
                    h * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7),
                ],
            };
            let t_new = t + h;
            let at_end = t_new >= t_end;
            while cursor < times.len() && (times[cursor] <= t_new || at_end) {
                let v = if at_end && cursor == times.len() - 1 {
                    y_new
                } else {
                    dense.eval(times[cursor])
                };
                if !v.is_finite() {
                    out.status = SolveStatus::Nonfinite;
                    return out;
                }
                out.values.push(v);
                cursor += 1;
            }
            if cursor == times.len() {
                return out;
            }
            let mut fac = fac11 / err_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            err_old = err_norm.max(1e-4);
            t = t_new;
            y = y_new;
            k1 = k7;
            h = h_new;
            last_rejected = false;
        } else {
            out.rejected_steps += 1;
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            last_rejected = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn final_error_shrinks_with_tolerance() {
        let exact = 4.9 * 0.2f64.exp();
        let mut last = f64::INFINITY;
        for tol in [1e-6, 1e-7, 1e-8, 1e-9] {
            let cfg = SolveConfig {
                rtol: tol,
                atol: tol,
                ..SolveConfig::default()
            };
            let out = solve_at(|y| 0.1 * y, 4.9, 0.0, &[2.0], &cfg);
            let err = (out.values[0] - exact).abs();
            assert!(err <= last * 1.01 + 1e-15, "tol {tol}: {err} > {last}");
            assert!(err < 100.0 * tol * exact);
            last = err;
        }
    }

    #[test]
    fn dense_output_between_steps() {
        let cfg = SolveConfig::default();
        let times: Vec<f64> = (1..=50).map(|i| i as f64 * 0.03).collect();
        let out = solve_at(|y| -y, 1.0, 0.0, &times, &cfg);
        for (t, v) in times.iter().zip(&out.values) {
            assert!((v - (-t).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn start_time_offset() {
        let cfg = SolveConfig::default();
        let out = solve_at(|y| 0.1 * y, 2.0, 2.0, &[2.0, 3.0, 4.0], &cfg);
        assert_eq!(out.values[0], 2.0);
        assert!((out.values[2] - 2.0 * 0.2f64.exp()).abs() < 1e-8);
    }
}
