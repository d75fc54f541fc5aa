use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    corrupt_and_subsample, evaluate_prediction, select_candidate, EvalConfig, EvalError, GroundTruth, Metrics,
    Predictor, Regime,
};
use crate::dataset::{Dataset, OdeRecord};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    /// Constant ground truth: R² undefined and left out of the medians.
    ZeroVariance,
    IntegrationFailure,
    NoCandidate,
    SelectionFailure,
    PredictorError,
    /// Reference solution missing; the row carries NaN metrics.
    TruthUnavailable,
}

/// One `(record, sigma, n, regime)` result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub id: usize,
    pub sigma: f64,
    pub n: usize,
    pub regime: Regime,
    pub r2: f64,
    pub l1: f64,
    pub linf: f64,
    pub isclose: f64,
    pub complexity: usize,
    pub seconds: f64,
    pub status: RowStatus,
}

/// Which candidate was kept for one `(record, sigma, n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub id: usize,
    pub sigma: f64,
    pub n: usize,
    pub truth: String,
    pub selected: Option<String>,
    pub index: Option<usize>,
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub id: usize,
    pub sigma: f64,
    pub n: usize,
    /// Candidate generation only.
    pub beam_seconds: f64,
    /// Encoding through selection.
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub sigma: f64,
    pub n: usize,
    pub regime: Regime,
    pub metric: String,
    /// `None` when no value entered the median or the median is not finite.
    pub median: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<MetricRow>,
    pub aggregates: Vec<Aggregate>,
    pub selections: Vec<Selection>,
    pub timings: Vec<Timing>,
}

const METRICS: [&str; 6] = ["r2", "l1", "linf", "isclose", "complexity", "seconds"];

fn metric_value(row: &MetricRow, metric: &str) -> f64 {
    match metric {
        "r2" if row.status == RowStatus::ZeroVariance => f64::NAN,
        "r2" => row.r2,
        "l1" => row.l1,
        "linf" => row.linf,
        "isclose" => row.isclose,
        "complexity" => row.complexity as f64,
        "seconds" => row.seconds,
        _ => unreachable!("unknown metric {metric}"),
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    let med = if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) };
    med.is_finite().then_some(med)
}

/// Medians per `(sigma, n, regime, metric)`, ignoring NaN entries.
pub fn recompute_aggregates(rows: &[MetricRow]) -> Vec<Aggregate> {
    let mut keys: Vec<(f64, usize, Regime)> = rows.iter().map(|r| (r.sigma, r.n, r.regime)).collect();
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    keys.dedup();
    let mut out = Vec::with_capacity(keys.len() * METRICS.len());
    for (sigma, n, regime) in keys {
        let group: Vec<&MetricRow> = rows
            .iter()
            .filter(|r| r.sigma.to_bits() == sigma.to_bits() && r.n == n && r.regime == regime)
            .collect();
        for metric in METRICS {
            let values: Vec<f64> = group.iter().map(|r| metric_value(r, metric)).filter(|v| !v.is_nan()).collect();
            out.push(Aggregate {
                sigma,
                n,
                regime,
                metric: metric.to_string(),
                count: values.len(),
                median: median(values),
            });
        }
    }
    out
}

struct Cell {
    rows: [MetricRow; 2],
    selection: Selection,
    timing: Timing,
}

#[allow(clippy::too_many_arguments)]
fn row(id: usize, sigma: f64, n: usize, regime: Regime, m: Metrics, complexity: usize, seconds: f64, status: RowStatus) -> MetricRow {
    MetricRow {
        id,
        sigma,
        n,
        regime,
        r2: m.r2,
        l1: m.l1,
        linf: m.linf,
        isclose: m.isclose,
        complexity,
        seconds,
        status,
    }
}

fn nan_metrics() -> Metrics {
    Metrics {
        r2: f64::NAN,
        l1: f64::NAN,
        linf: f64::NAN,
        isclose: f64::NAN,
        zero_variance: false,
    }
}

fn evaluate_cell(
    predictor: &dyn Predictor,
    record: &OdeRecord,
    truth: &Result<GroundTruth, EvalError>,
    sigma: f64,
    n: usize,
    cfg: &EvalConfig,
    seed: u64,
) -> Cell {
    let id = record.id;
    let both = |m: [Metrics; 2], complexity: usize, seconds: f64, status: [RowStatus; 2]| {
        [
            row(id, sigma, n, Regime::Interpolation, m[0], complexity, seconds, status[0]),
            row(id, sigma, n, Regime::Extrapolation, m[1], complexity, seconds, status[1]),
        ]
    };
    let mut selection = Selection {
        id,
        sigma,
        n,
        truth: record.infix.clone(),
        selected: None,
        index: None,
        candidates: 0,
    };
    let mut timing = Timing {
        id,
        sigma,
        n,
        beam_seconds: 0.0,
        total_seconds: 0.0,
    };
    let fail = |status: RowStatus, selection: Selection, timing: Timing| {
        let m = if status == RowStatus::TruthUnavailable { nan_metrics() } else { Metrics::failure() };
        Cell {
            rows: both([m, m], 0, timing.total_seconds, [status, status]),
            selection,
            timing,
        }
    };
    let truth = match truth {
        Ok(t) => t,
        Err(_) => return fail(RowStatus::TruthUnavailable, selection, timing),
    };

    let mut rng = seed::stream("eval-corrupt", seed, &[id as u64, sigma.to_bits(), n as u64]);
    let Ok(obs) = corrupt_and_subsample(&truth.interp_times, &truth.interp_values, sigma, n, &mut rng) else {
        return fail(RowStatus::TruthUnavailable, selection, timing);
    };

    let start = Instant::now();
    let proposal = predictor.propose(record, &obs, cfg);
    let proposal = match proposal {
        Ok(p) => p,
        Err(_) => return fail(RowStatus::PredictorError, selection, timing),
    };
    selection.candidates = proposal.candidates.len();
    timing.beam_seconds = proposal.seconds;
    let choice = select_candidate(&proposal.candidates, &obs, &cfg.solve);
    if cfg.timing {
        timing.total_seconds = start.elapsed().as_secs_f64();
    }
    let choice = match choice {
        Ok(c) => c,
        Err(EvalError::NoCandidates) => return fail(RowStatus::NoCandidate, selection, timing),
        Err(_) => return fail(RowStatus::SelectionFailure, selection, timing),
    };
    let pred = &proposal.candidates[choice.index];
    selection.index = Some(choice.index);
    selection.selected = Some(pred.to_infix());

    let complexity = pred.complexity();
    let scores = match evaluate_prediction(pred, truth, cfg) {
        Ok(s) => s,
        Err(_) => return fail(RowStatus::IntegrationFailure, selection, timing),
    };
    let status = scores.map(|s| {
        if !s.integrated {
            RowStatus::IntegrationFailure
        } else if s.metrics.zero_variance {
            RowStatus::ZeroVariance
        } else {
            RowStatus::Ok
        }
    });
    Cell {
        rows: both(scores.map(|s| s.metrics), complexity, timing.total_seconds, status),
        selection,
        timing,
    }
}

/// Runs the full protocol for every `(record, sigma, n)`. Per-record
/// problems become failure rows; only an invalid config is an error.
pub fn run_benchmark(predictor: &dyn Predictor, ds: &Dataset, cfg: &EvalConfig, seed: u64) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let per_record: Vec<Vec<Cell>> = ds
        .records()
        .par_iter()
        .map(|record| {
            let truth = GroundTruth::for_record(ds, record, &cfg.solve);
            let mut cells = Vec::with_capacity(cfg.sigmas.len() * cfg.ns.len());
            for &sigma in &cfg.sigmas {
                for &n in &cfg.ns {
                    cells.push(evaluate_cell(predictor, record, &truth, sigma, n, cfg, seed));
                }
            }
            cells
        })
        .collect();
    let mut report = EvalReport::default();
    for cell in per_record.into_iter().flatten() {
        report.rows.extend(cell.rows);
        report.selections.push(cell.selection);
        report.timings.push(cell.timing);
    }
    report.aggregates = recompute_aggregates(&report.rows);
    Ok(report)
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> std::io::Error + '_ {
    move |e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
}

fn write_csv<T: Serialize>(path: &Path, items: &[T], header: &[&str]) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_io)?;
    w.write_record(header).map_err(csv_io)?;
    for item in items {
        w.serialize(item).map_err(csv_io)?;
    }
    w.flush()
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e.to_string())
}

const ROW_HEADER: [&str; 11] = ["id", "sigma", "n", "regime", "r2", "l1", "linf", "isclose", "complexity", "seconds", "status"];

/// Writes `rows.csv`, `aggregates.json`, `selections.csv`, `timings.csv`
/// and one `fig_{regime}_{metric}.csv` per regime and metric (median versus
/// sigma, one column per point count).
pub fn emit_report(report: &EvalReport, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    write_csv(&dir.join("rows.csv"), &report.rows, &ROW_HEADER)?;
    write_csv(
        &dir.join("selections.csv"),
        &report.selections,
        &["id", "sigma", "n", "truth", "selected", "index", "candidates"],
    )?;
    write_csv(
        &dir.join("timings.csv"),
        &report.timings,
        &["id", "sigma", "n", "beam_seconds", "total_seconds"],
    )?;
    let mut json = serde_json::to_string_pretty(&report.aggregates).expect("aggregates serialize");
    json.push('\n');
    let path = dir.join("aggregates.json");
    fs::write(&path, json).map_err(io(&path))?;

    let mut ns: Vec<usize> = report.aggregates.iter().map(|a| a.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut sigmas: Vec<f64> = report.aggregates.iter().map(|a| a.sigma).collect();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup();
    for regime in Regime::ALL {
        for metric in METRICS {
            let path = dir.join(format!("fig_{}_{}.csv", regime.name(), metric));
            let mut w = csv::Writer::from_path(&path).map_err(csv_io)?;
            let mut header = vec!["sigma".to_string()];
            header.extend(ns.iter().map(|n| format!("n={n}")));
            w.write_record(&header).map_err(csv_io)?;
            for &sigma in &sigmas {
                let mut rec = vec![sigma.to_string()];
                for &n in &ns {
                    let cell = report
                        .aggregates
                        .iter()
                        .find(|a| a.sigma == sigma && a.n == n && a.regime == regime && a.metric == metric)
                        .and_then(|a| a.median);
                    rec.push(cell.map(|m| m.to_string()).unwrap_or_default());
                }
                w.write_record(&rec).map_err(csv_io)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn read_rows(path: &Path) -> std::io::Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_io)?;
    r.deserialize().map(|row| row.map_err(csv_io)).collect()
}
