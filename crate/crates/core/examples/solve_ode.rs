//! Integrates y' = f(y) on [0, T] and runs the finite-difference quality
//! check on the result.
//!
//! cargo run -p symode --example solve_ode -- "0.23*y*(1 - y)" 4.9

use symode::expr::parse_infix;
use symode::solver::{integrate, solve_checked, SolveConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let src = args.get(1).map(String::as_str).unwrap_or("0.1*y");
    let y0: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(4.9);
    let e = parse_infix(src).expect("expression");
    let cfg = SolveConfig::default();

    let traj = solve_checked(&e, y0, &cfg);
    println!("y' = {}, y(0) = {y0}: {:?}, QC {:?}", e.to_infix(), traj.status, traj.qc);
    for i in (0..traj.len()).step_by((traj.len() / 8).max(1)) {
        println!("  t = {:.4}  y = {:.10}", traj.times[i], traj.values[i]);
    }
    if let (Some(t), Some(y)) = (traj.times.last(), traj.values.last()) {
        println!("  t = {t:.4}  y = {y:.10}");
    }

    let extra = integrate(&e, *traj.values.last().unwrap_or(&y0), (cfg.t_end, cfg.t_extra), 5, &cfg);
    println!("continued to T_extra: {:?} {:?}", extra.status, extra.values);
}
