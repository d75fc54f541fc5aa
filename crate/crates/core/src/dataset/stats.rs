use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, DatasetError, DatasetManifest};

/// Complexity and operator distributions of a corpus.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub records: usize,
    pub complexity: BTreeMap<usize, usize>,
    pub operators: BTreeMap<String, usize>,
    pub trajectories_per_skeleton: BTreeMap<String, usize>,
}

pub fn dataset_stats(manifest: &DatasetManifest) -> DatasetStats {
    let mut s = DatasetStats::default();
    for r in &manifest.records {
        s.records += 1;
        *s.complexity.entry(r.complexity).or_insert(0) += 1;
        for (op, n) in &r.ops {
            *s.operators.entry(op.clone()).or_insert(0) += n;
        }
        *s.trajectories_per_skeleton.entry(r.skeleton.clone()).or_insert(0) += 1;
    }
    s
}

impl DatasetStats {
    /// Writes `stats.json` and `stats.csv` (columns `kind,key,count`).
    pub fn write(&self, dir: &Path) -> Result<(), DatasetError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let json_path = dir.join("stats.json");
        let mut text = serde_json::to_string_pretty(self).expect("stats serialize");
        text.push('\n');
        fs::write(&json_path, text).map_err(io_err(&json_path))?;

        let csv_path = dir.join("stats.csv");
        let mut w = csv::Writer::from_path(&csv_path).map_err(|e| csv_err(&csv_path, e))?;
        w.write_record(["kind", "key", "count"]).map_err(|e| csv_err(&csv_path, e))?;
        let mut row = |kind: &str, key: &str, count: usize| {
            w.write_record([kind, key, &count.to_string()]).map_err(|e| csv_err(&csv_path, e))
        };
        for (k, v) in &self.complexity {
            row("complexity", &k.to_string(), *v)?;
        }
        for (k, v) in &self.operators {
            row("operator", k, *v)?;
        }
        for (k, v) in &self.trajectories_per_skeleton {
            row("skeleton", k, *v)?;
        }
        w.flush().map_err(io_err(&csv_path))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> DatasetError {
    DatasetError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}
