//! Finite-difference weights for arbitrary integer stencils, and the
//! quality check catching a corrupted trajectory.
//!
//! cargo run -p symode --example fd_stencil -- -2 -1 0 1 2

use symode::expr::parse_infix;
use symode::solver::{fd_weights, quality_check, solve_checked, SolveConfig};

fn main() {
    let mut offsets: Vec<i64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    if offsets.is_empty() {
        offsets = (-4..=4).collect();
    }
    for order in 1..=2 {
        match fd_weights(&offsets, order) {
            Ok(w) => println!("d{order} on {offsets:?}: {w:.6?}"),
            Err(e) => println!("d{order} on {offsets:?}: {e}"),
        }
    }

    let e = parse_infix("0.3 - 0.1*y").unwrap();
    let mut traj = solve_checked(&e, 4.9, &SolveConfig::default());
    println!("\nclean trajectory: {:?}", quality_check(&traj, &e, 1.0));
    let mid = traj.len() / 2;
    traj.values[mid] += 10.0;
    println!("with a +10 spike: {:?}", quality_check(&traj, &e, 1.0));
}
