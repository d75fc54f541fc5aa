use std::time::Instant;

use super::EvalConfig;
use crate::codec::encode_input;
use crate::dataset::OdeRecord;
use crate::expr::Expr;
use crate::model::{beam_search, Model};

/// Candidate equations for one set of observations, best guess first.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub candidates: Vec<Expr>,
    /// Time spent producing the candidates (0 unless timing is on).
    pub seconds: f64,
}

pub trait Predictor: Sync {
    /// `record` is available for stubs that cheat; real predictors must only
    /// look at `obs`.
    fn propose(&self, record: &OdeRecord, obs: &[(f64, f64)], cfg: &EvalConfig) -> Result<Proposal, String>;
}

/// Stub that proposes the ground truth, optionally followed by fixed
/// distractors (`y + 7`, `0`, `-f`, `f + 1`), so the harness can be
/// exercised without a trained model.
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePredictor {
    pub distractors: bool,
}

impl OraclePredictor {
    pub fn candidates(truth: &Expr, distractors: bool) -> Vec<Expr> {
        let mut out = vec![truth.clone()];
        if distractors {
            out.push(Expr::add(Expr::var(), Expr::int(7)));
            out.push(Expr::int(0));
            out.push(Expr::neg(truth.clone()));
            out.push(Expr::add(truth.clone(), Expr::int(1)));
        }
        out
    }
}

impl Predictor for OraclePredictor {
    fn propose(&self, record: &OdeRecord, _obs: &[(f64, f64)], _cfg: &EvalConfig) -> Result<Proposal, String> {
        let truth = record.expr().map_err(|e| e.to_string())?;
        Ok(Proposal {
            candidates: Self::candidates(&truth, self.distractors),
            seconds: 0.0,
        })
    }
}

/// Beam search over a trained model; unparseable beams are dropped.
#[derive(Debug, Clone)]
pub struct ModelPredictor {
    pub model: Model,
}

impl Predictor for ModelPredictor {
    fn propose(&self, _record: &OdeRecord, obs: &[(f64, f64)], cfg: &EvalConfig) -> Result<Proposal, String> {
        let start = Instant::now();
        let bits = encode_input(obs);
        let beams = beam_search(&self.model, &bits, cfg.beam_width, cfg.max_len).map_err(|e| e.to_string())?;
        let seconds = if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 };
        Ok(Proposal {
            candidates: beams.into_iter().filter_map(|c| c.expr).collect(),
            seconds,
        })
    }
}
