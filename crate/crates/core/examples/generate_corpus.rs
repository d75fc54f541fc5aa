//! Generates a small corpus, writes it to disk and prints its tallies.
//!
//! cargo run --release -p symode --example generate_corpus -- out_dir [skeletons] [seed]

use std::path::PathBuf;

use symode::dataset::{dataset_stats, generate_dataset, Dataset, DatasetConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let dir = PathBuf::from(args.get(1).map(String::as_str).unwrap_or("corpus"));
    let skeletons: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(20);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);

    let cfg = DatasetConfig {
        skeletons,
        ..DatasetConfig::default()
    };
    let ds = generate_dataset(&cfg, seed).expect("generation");
    ds.save(&dir).expect("save");
    let back = Dataset::load(&dir).expect("load");
    assert_eq!(back, ds);

    let h = &ds.manifest.header;
    println!("{} trajectories in {}", ds.len(), dir.display());
    println!("counts {:?}", h.counts);
    println!("discarded {:?}", h.failures);
    let stats = dataset_stats(&ds.manifest);
    println!("complexity histogram {:?}", stats.complexity);
    for r in ds.records().iter().take(5) {
        println!("  #{:<4} y' = {:<32} y0 = {:+.3}  qc {:.2e}", r.id, r.infix, r.y0, r.qc_err);
    }
}
