//! The built-in textbook equations: as written, simplified, and solved.
//!
//! cargo run -p symode --example textbook

use symode::dataset::{textbook_entries, textbook_testset};
use symode::solver::SolveConfig;

fn main() {
    for e in textbook_entries() {
        println!("{:<48} {:<56} y0 = {}", e.name, e.original, e.y0);
    }
    let ds = textbook_testset(&SolveConfig::default());
    println!("\n{} solved:", ds.len());
    for r in ds.records() {
        let (_, y) = ds.trajectory(r);
        println!(
            "  {:<48} y' = {:<28} y(T) = {:.6}",
            r.name.as_deref().unwrap_or("?"),
            r.infix,
            y.last().unwrap()
        );
    }
}
