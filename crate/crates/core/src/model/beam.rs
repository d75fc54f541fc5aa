use std::cmp::Ordering;

use super::tape::{Graph, Mat};
use super::{Model, ModelError};
use crate::codec::{decode_constant, Decoded, Row, BOS, EOS, INPUT_BITS, PAD};
use crate::expr::{parse_prefix, Expr};

/// One decoded hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub tokens: Vec<String>,
    /// Sum of token log-probabilities, `EOS` included when terminated.
    pub log_prob: f64,
    /// `log_prob` divided by the number of scored tokens.
    pub score: f64,
    pub terminated: bool,
    /// Parsed expression; `None` for unterminated or malformed sequences.
    pub expr: Option<Expr>,
}

impl Candidate {
    fn new(tokens: Vec<String>, log_prob: f64, scored: usize, terminated: bool) -> Self {
        let expr = if terminated { parse_prefix(&tokens).ok() } else { None };
        Self {
            tokens,
            log_prob,
            score: log_prob / scored.max(1) as f64,
            terminated,
            expr,
        }
    }
}

struct Decoder<'m> {
    model: &'m Model,
    memory: Mat,
    n: usize,
}

impl<'m> Decoder<'m> {
    fn new(model: &'m Model, bits: &[[u8; INPUT_BITS]]) -> Result<Self, ModelError> {
        let mut g = Graph::new(&model.params);
        let mem = model.encode(&mut g, bits, bits.len(), 1)?;
        Ok(Self {
            model,
            memory: g.value(mem).clone(),
            n: bits.len(),
        })
    }

    /// Last-position logits for each prefix (all of equal length).
    fn next_logits(&self, prefixes: &[&[Row]]) -> Vec<Vec<f64>> {
        let groups = prefixes.len();
        let t = prefixes[0].len();
        let mut mem = Mat::zeros(groups * self.n, self.memory.cols);
        for gi in 0..groups {
            mem.data[gi * self.memory.data.len()..(gi + 1) * self.memory.data.len()].copy_from_slice(&self.memory.data);
        }
        let rows: Vec<Row> = prefixes.iter().flat_map(|p| p.iter().copied()).collect();
        let mut g = Graph::new(&self.model.params);
        let m = g.input(mem);
        let logits = self.model.decode(&mut g, m, self.n, &rows, t, groups);
        let lm = g.value(logits);
        (0..groups).map(|gi| lm.row(gi * t + t - 1).to_vec()).collect()
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}

fn length_cap(model: &Model, max_len: usize) -> usize {
    max_len.min(model.arch.max_target_len)
}

/// Argmax decoding with blended constant feedback.
pub fn greedy_decode(model: &Model, bits: &[[u8; INPUT_BITS]], max_len: usize) -> Result<Candidate, ModelError> {
    let dec = Decoder::new(model, bits)?;
    let mut rows = vec![Row::one_hot(BOS)];
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    for _ in 0..length_cap(model, max_len) {
        let logits = dec.next_logits(&[&rows]).remove(0);
        let lsm = log_softmax(&logits);
        // Same expansion set as the beam: never emit PAD or BOS.
        let idx = first_argmax_allowed(&logits);
        let d = if model.vocab.grid_position(idx).is_some() {
            decode_constant(&model.vocab, &logits, idx)
        } else {
            Decoded::Symbol(idx)
        };
        log_prob += lsm[idx];
        if d == Decoded::Symbol(EOS) {
            return Ok(Candidate::new(tokens.clone(), log_prob, tokens.len() + 1, true));
        }
        tokens.push(d.token(&model.vocab));
        rows.push(d.feedback());
    }
    let n = tokens.len();
    Ok(Candidate::new(tokens, log_prob, n, false))
}

fn first_argmax_allowed(v: &[f64]) -> usize {
    let mut best = EOS;
    for (i, &x) in v.iter().enumerate().skip(EOS) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

struct Beam {
    rows: Vec<Row>,
    tokens: Vec<String>,
    log_prob: f64,
}

/// Length-normalized beam search. Grid tokens are scored by their own
/// log-probability and expanded into constants by neighbour pairing.
/// Returns at most `width` candidates, best first; unterminated beams fill
/// the list only when fewer than `width` hypotheses finished.
pub fn beam_search(
    model: &Model,
    bits: &[[u8; INPUT_BITS]],
    width: usize,
    max_len: usize,
) -> Result<Vec<Candidate>, ModelError> {
    let width = width.max(1);
    let dec = Decoder::new(model, bits)?;
    let mut alive = vec![Beam {
        rows: vec![Row::one_hot(BOS)],
        tokens: vec![],
        log_prob: 0.0,
    }];
    let mut finished: Vec<Candidate> = Vec::new();
    for _ in 0..length_cap(model, max_len) {
        if alive.is_empty() {
            break;
        }
        let prefixes: Vec<&[Row]> = alive.iter().map(|b| b.rows.as_slice()).collect();
        let logits = dec.next_logits(&prefixes);
        let mut expansions: Vec<(f64, usize, usize)> = Vec::new();
        for (bi, (beam, l)) in alive.iter().zip(&logits).enumerate() {
            let lsm = log_softmax(l);
            for (tok, &lp) in lsm.iter().enumerate() {
                if tok == PAD || tok == BOS || !lp.is_finite() {
                    continue;
                }
                expansions.push((beam.log_prob + lp, bi, tok));
            }
        }
        expansions.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        // EOS expansions ranked above the last kept beam finish; the rest
        // of the ranking refills the beam.
        let mut next = Vec::with_capacity(width);
        for (lp, bi, tok) in expansions {
            if next.len() >= width {
                break;
            }
            let beam = &alive[bi];
            if tok == EOS {
                finished.push(Candidate::new(beam.tokens.clone(), lp, beam.tokens.len() + 1, true));
                continue;
            }
            let d = if model.vocab.grid_position(tok).is_some() {
                decode_constant(&model.vocab, &logits[bi], tok)
            } else {
                Decoded::Symbol(tok)
            };
            let mut rows = beam.rows.clone();
            rows.push(d.feedback());
            let mut tokens = beam.tokens.clone();
            tokens.push(d.token(&model.vocab));
            next.push(Beam {
                rows,
                tokens,
                log_prob: lp,
            });
        }
        alive = next;
        sort_by_score(&mut finished);
        finished.truncate(width);
        // Done once the pool is full and no live beam currently scores
        // above its worst member.
        if finished.len() >= width {
            let worst = finished[width - 1].score;
            if alive.iter().all(|b| b.log_prob / b.tokens.len().max(1) as f64 <= worst) {
                break;
            }
        }
    }
    for beam in alive {
        if finished.len() >= width {
            break;
        }
        let n = beam.tokens.len();
        finished.push(Candidate::new(beam.tokens, beam.log_prob, n, false));
    }
    sort_by_score(&mut finished);
    finished.truncate(width);
    Ok(finished)
}

fn sort_by_score(c: &mut [Candidate]) {
    c.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::encode_input;
    use crate::model::ArchConfig;

    fn small_model() -> Model {
        let arch = ArchConfig {
            d_model: 16,
            d_ff: 32,
            heads: 2,
            max_target_len: 12,
            ..ArchConfig::desk()
        };
        Model::new(arch, 9).unwrap()
    }

    #[test]
    fn width_one_is_greedy() {
        let m = small_model();
        let bits = encode_input(&[(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)]);
        let g = greedy_decode(&m, &bits, 12).unwrap();
        let b = beam_search(&m, &bits, 1, 12).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].tokens, g.tokens);
        assert_eq!(b[0].terminated, g.terminated);
        assert!((b[0].score - g.score).abs() < 1e-12);
    }

    #[test]
    fn beams_sorted_and_bounded() {
        let m = small_model();
        let bits = encode_input(&[(0.0, -1.0), (1.0, 0.5)]);
        let c = beam_search(&m, &bits, 8, 12).unwrap();
        assert!(!c.is_empty() && c.len() <= 8);
        assert!(c.windows(2).all(|w| w[0].score >= w[1].score));
    }
}
