//! Input bit encoding, the token vocabulary and two-hot constant targets.
//!
//! Trajectory points enter the model as raw binary64 bit patterns. Targets
//! are pre-order token words in which every constant becomes a probability
//! row spread over the two neighbouring tokens of a fixed equidistant grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{format_constant, BinaryOp, Constant, UnaryOp};

/// Features per trajectory point: 64 bits of `t`, then 64 bits of `y`.
pub const INPUT_BITS: usize = 128;
/// Number of constant grid tokens.
pub const GRID_SIZE: usize = 21;
pub const GRID_MIN: f64 = -10.0;
pub const GRID_MAX: f64 = 10.0;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("constant {0} lies outside the grid [{GRID_MIN}, {GRID_MAX}]")]
    OutOfGrid(f64),
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("vocabulary mismatch: {0}")]
    Vocabulary(String),
}

/// Ordered token list. Indices are stable: specials, binary operators,
/// sampled unary operators, unary minus, the variable, then the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    grid: Vec<f64>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::standard()
    }
}

impl Vocabulary {
    pub fn standard() -> Self {
        let mut tokens: Vec<String> = ["<pad>", "<bos>", "<eos>"].iter().map(|s| s.to_string()).collect();
        tokens.extend(BinaryOp::ALL.iter().map(|op| op.name().to_string()));
        tokens.extend(UnaryOp::SAMPLED.iter().map(|op| op.name().to_string()));
        tokens.push(UnaryOp::Neg.name().to_string());
        tokens.push("y".to_string());
        let spacing = (GRID_MAX - GRID_MIN) / (GRID_SIZE - 1) as f64;
        let grid: Vec<f64> = (0..GRID_SIZE).map(|k| GRID_MIN + spacing * k as f64).collect();
        tokens.extend(grid.iter().map(|&x| format_constant(Constant::real(x))));
        Self { tokens, grid }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn spacing(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    /// Vocabulary index of the first grid token.
    pub fn grid_start(&self) -> usize {
        self.tokens.len() - self.grid.len()
    }

    /// Grid position of vocabulary index `idx`, if it is a grid token.
    pub fn grid_position(&self, idx: usize) -> Option<usize> {
        let start = self.grid_start();
        (idx >= start && idx < self.tokens.len()).then(|| idx - start)
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.tokens[idx]
    }

    /// Index of a symbol token (specials, operators, `y`). Numbers never
    /// resolve here; they go through [`two_hot`].
    pub fn symbol_index(&self, token: &str) -> Option<usize> {
        self.tokens[..self.grid_start()].iter().position(|t| t == token)
    }

    /// Checks that `self` has the standard layout this crate was built with.
    pub fn check_standard(&self) -> Result<(), CodecError> {
        if *self == Self::standard() {
            Ok(())
        } else {
            Err(CodecError::Vocabulary("token list differs from the standard layout".into()))
        }
    }
}

/// Big-endian bit expansion, most significant bit first.
pub fn f64_bits(v: f64) -> [u8; 64] {
    let raw = v.to_bits();
    let mut out = [0u8; 64];
    for (k, b) in out.iter_mut().enumerate() {
        *b = ((raw >> (63 - k)) & 1) as u8;
    }
    out
}

pub fn f64_from_bits(bits: &[u8]) -> f64 {
    let raw = bits.iter().take(64).fold(0u64, |acc, &b| (acc << 1) | (b & 1) as u64);
    f64::from_bits(raw)
}

/// One row of [`INPUT_BITS`] features per `(t, y)` point.
pub fn encode_input(points: &[(f64, f64)]) -> Vec<[u8; INPUT_BITS]> {
    points
        .iter()
        .map(|&(t, y)| {
            let mut row = [0u8; INPUT_BITS];
            row[..64].copy_from_slice(&f64_bits(t));
            row[64..].copy_from_slice(&f64_bits(y));
            row
        })
        .collect()
}

pub fn decode_input_row(row: &[u8; INPUT_BITS]) -> (f64, f64) {
    (f64_from_bits(&row[..64]), f64_from_bits(&row[64..]))
}

/// Two-hot cell: weight `alpha` on grid point `i`, `beta` on `i + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoHot {
    pub i: usize,
    pub alpha: f64,
    pub beta: f64,
}

/// Locates `c` between grid points `x_i <= c < x_{i+1}`; the grid maximum
/// falls into the last cell with `beta = 1`.
pub fn two_hot(c: f64) -> Result<TwoHot, CodecError> {
    if !(GRID_MIN..=GRID_MAX).contains(&c) {
        return Err(CodecError::OutOfGrid(c));
    }
    let spacing = (GRID_MAX - GRID_MIN) / (GRID_SIZE - 1) as f64;
    let i = (((c - GRID_MIN) / spacing).floor() as usize).min(GRID_SIZE - 2);
    let upper = GRID_MIN + spacing * (i + 1) as f64;
    let alpha = ((upper - c) / spacing).clamp(0.0, 1.0);
    Ok(TwoHot {
        i,
        alpha,
        beta: 1.0 - alpha,
    })
}

/// Sparse probability row over the vocabulary with at most two entries.
/// Also describes the decoder-input blend for the same position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub first: (usize, f64),
    pub second: Option<(usize, f64)>,
}

impl Row {
    pub fn one_hot(idx: usize) -> Self {
        Self {
            first: (idx, 1.0),
            second: None,
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        std::iter::once(self.first).chain(self.second)
    }

    pub fn is_constant(&self, vocab: &Vocabulary) -> bool {
        vocab.grid_position(self.first.0).is_some()
    }

    /// Dense row of length `vocab_len`.
    pub fn dense(&self, vocab_len: usize) -> Vec<f64> {
        let mut out = vec![0.0; vocab_len];
        for (idx, w) in self.entries() {
            out[idx] += w;
        }
        out
    }

    /// Constant value encoded by a grid row.
    pub fn constant_value(&self, vocab: &Vocabulary) -> Option<f64> {
        vocab.grid_position(self.first.0)?;
        Some(
            self.entries()
                .map(|(idx, w)| w * vocab.grid()[vocab.grid_position(idx).expect("grid entry")])
                .sum(),
        )
    }
}

pub fn constant_row(vocab: &Vocabulary, c: f64) -> Result<Row, CodecError> {
    let th = two_hot(c)?;
    let base = vocab.grid_start() + th.i;
    Ok(if th.beta == 0.0 {
        Row::one_hot(base)
    } else if th.alpha == 0.0 {
        Row::one_hot(base + 1)
    } else {
        Row {
            first: (base, th.alpha),
            second: Some((base + 1, th.beta)),
        }
    })
}

/// `BOS`, one row per prefix token, `EOS`. Row `k` is both the target at
/// step `k - 1` and the decoder input at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetEncoding {
    pub rows: Vec<Row>,
}

impl TargetEncoding {
    /// Decoder inputs: every row but the last.
    pub fn inputs(&self) -> &[Row] {
        &self.rows[..self.rows.len() - 1]
    }

    /// Targets: every row but `BOS`.
    pub fn targets(&self) -> &[Row] {
        &self.rows[1..]
    }
}

pub fn encode_target<S: AsRef<str>>(vocab: &Vocabulary, prefix: &[S]) -> Result<TargetEncoding, CodecError> {
    let mut rows = Vec::with_capacity(prefix.len() + 2);
    rows.push(Row::one_hot(BOS));
    for token in prefix {
        let token = token.as_ref();
        if let Some(idx) = vocab.symbol_index(token).filter(|&i| i > EOS) {
            rows.push(Row::one_hot(idx));
            continue;
        }
        match token.parse::<f64>() {
            Ok(c) if c.is_finite() => rows.push(constant_row(vocab, c)?),
            _ => return Err(CodecError::UnknownToken(token.to_string())),
        }
    }
    rows.push(Row::one_hot(EOS));
    Ok(TargetEncoding { rows })
}

/// Result of decoding one output position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decoded {
    Symbol(usize),
    Constant { value: f64, row: Row },
}

impl Decoded {
    /// Decoder-input row to feed back for this output.
    pub fn feedback(&self) -> Row {
        match *self {
            Decoded::Symbol(idx) => Row::one_hot(idx),
            Decoded::Constant { row, .. } => row,
        }
    }

    /// Prefix token text.
    pub fn token(&self, vocab: &Vocabulary) -> String {
        match *self {
            Decoded::Symbol(idx) => vocab.name(idx).to_string(),
            Decoded::Constant { value, .. } => constant_token(value),
        }
    }
}

pub(crate) fn constant_token(value: f64) -> String {
    let integer = value.fract() == 0.0 && value.abs() <= GRID_MAX;
    format_constant(Constant { value, integer })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Softmax probabilities; `-inf` logits get probability zero.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Turns a grid token `idx` into a constant by pairing it with its
/// larger-logit neighbour and renormalizing the two softmax probabilities.
pub fn decode_constant(vocab: &Vocabulary, logits: &[f64], idx: usize) -> Decoded {
    let start = vocab.grid_start();
    let k = vocab.grid_position(idx).expect("grid token");
    let neighbour = match (k > 0, k + 1 < GRID_SIZE) {
        (true, true) => {
            if logits[idx + 1] >= logits[idx - 1] {
                idx + 1
            } else {
                idx - 1
            }
        }
        (true, false) => idx - 1,
        (false, _) => idx + 1,
    };
    let p = softmax(logits);
    let (pi, pn) = (p[idx], p[neighbour]);
    let alpha = pi / (pi + pn);
    let beta = 1.0 - alpha;
    let xi = vocab.grid()[k];
    let xn = vocab.grid()[neighbour - start];
    let value = if beta == 0.0 { xi } else { alpha * xi + beta * xn };
    let row = if beta == 0.0 {
        Row::one_hot(idx)
    } else {
        let (lo, hi) = if neighbour > idx {
            ((idx, alpha), (neighbour, beta))
        } else {
            ((neighbour, beta), (idx, alpha))
        };
        Row {
            first: lo,
            second: Some(hi),
        }
    };
    Decoded::Constant { value, row }
}

pub fn decode_step(vocab: &Vocabulary, logits: &[f64]) -> Decoded {
    let idx = argmax(logits);
    if vocab.grid_position(idx).is_some() {
        decode_constant(vocab, logits, idx)
    } else {
        Decoded::Symbol(idx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedSequence {
    /// Prefix tokens before `EOS`.
    pub tokens: Vec<String>,
    /// Whether an `EOS` was produced.
    pub terminated: bool,
}

/// Greedy per-row decoding of a logit matrix (one row per position).
pub fn decode_sequence<R: AsRef<[f64]>>(vocab: &Vocabulary, logits: &[R]) -> DecodedSequence {
    let mut tokens = Vec::new();
    for row in logits {
        match decode_step(vocab, row.as_ref()) {
            Decoded::Symbol(EOS) => {
                return DecodedSequence {
                    tokens,
                    terminated: true,
                }
            }
            d => tokens.push(d.token(vocab)),
        }
    }
    DecodedSequence {
        tokens,
        terminated: false,
    }
}

/// Log-space logits that reproduce `row` exactly under softmax.
pub fn row_logits(row: &Row, vocab_len: usize) -> Vec<f64> {
    row.dense(vocab_len)
        .into_iter()
        .map(|p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_layout() {
        let v = Vocabulary::standard();
        assert_eq!(v.len(), 36);
        assert_eq!(v.grid_start(), 15);
        assert_eq!(v.name(v.grid_start()), "-10.0");
        assert_eq!(v.name(35), "10.0");
        assert_eq!(v.symbol_index("neg"), Some(13));
        assert_eq!(v.symbol_index("y"), Some(14));
        assert!(v.grid().windows(2).all(|w| w[1] - w[0] == 1.0));
    }

    #[test]
    fn input_bits() {
        let rows = encode_input(&[(1.0, -2.0), (0.0, f64::NAN)]);
        let hex = |b: &[u8]| f64_from_bits(b).to_bits();
        assert_eq!(hex(&rows[0][..64]), 0x3FF0_0000_0000_0000);
        assert_eq!(hex(&rows[0][64..]), 0xC000_0000_0000_0000);
        assert!(rows[1][..64].iter().all(|&b| b == 0));
        assert_eq!(rows[0][2], 1);
        assert_eq!(rows[0][0], 0);
        assert!(decode_input_row(&rows[1]).1.is_nan());
    }

    #[test]
    fn two_hot_examples() {
        let t = two_hot(1.64).unwrap();
        assert_eq!(t.i, 11);
        assert!((t.alpha - 0.36).abs() < 1e-12 && (t.beta - 0.64).abs() < 1e-12);
        assert_eq!(two_hot(-10.0).unwrap(), TwoHot { i: 0, alpha: 1.0, beta: 0.0 });
        assert_eq!(two_hot(0.0).unwrap(), TwoHot { i: 10, alpha: 1.0, beta: 0.0 });
        assert_eq!(two_hot(10.0).unwrap(), TwoHot { i: 19, alpha: 0.0, beta: 1.0 });
        assert!(two_hot(10.5).is_err());
    }

    #[test]
    fn target_rows() {
        let v = Vocabulary::standard();
        let enc = encode_target(&v, &["mul", "0.1", "y"]).unwrap();
        assert_eq!(enc.rows.len(), 5);
        assert_eq!(enc.rows[1], Row::one_hot(v.symbol_index("mul").unwrap()));
        let c = enc.rows[2];
        assert_eq!(c.first.0, v.grid_start() + 10);
        assert!((c.first.1 - 0.9).abs() < 1e-12);
        assert_eq!(enc.rows[4], Row::one_hot(EOS));
        assert_eq!(encode_target(&v, &["y"]).unwrap().rows.len(), 3);
        assert!(matches!(encode_target(&v, &["tan"]), Err(CodecError::UnknownToken(_))));
        assert!(matches!(encode_target(&v, &["11"]), Err(CodecError::OutOfGrid(_))));
    }

    #[test]
    fn decode_pair_rule() {
        let v = Vocabulary::standard();
        let g = v.grid_start();
        // p(1) = 0.5, p(2) = 0.3, remainder spread elsewhere
        let mut p = vec![0.2f64 / 34.0; v.len()];
        p[g + 11] = 0.5;
        p[g + 12] = 0.3;
        let logits: Vec<f64> = p.iter().map(|x| x.ln()).collect();
        match decode_step(&v, &logits) {
            Decoded::Constant { value, .. } => assert!((value - 1.375).abs() < 1e-12),
            d => panic!("{d:?}"),
        }
        let row = constant_row(&v, 1.64).unwrap();
        match decode_step(&v, &row_logits(&row, v.len())) {
            Decoded::Constant { value, .. } => assert!((value - 1.64).abs() < 1e-12),
            d => panic!("{d:?}"),
        }
    }

    #[test]
    fn sequence_round_trip() {
        let v = Vocabulary::standard();
        let enc = encode_target(&v, &["mul", "0.1", "y"]).unwrap();
        let logits: Vec<Vec<f64>> = enc.targets().iter().map(|r| row_logits(r, v.len())).collect();
        let dec = decode_sequence(&v, &logits);
        assert!(dec.terminated);
        assert_eq!(dec.tokens.len(), 3);
        assert_eq!(dec.tokens[0], "mul");
        assert!((dec.tokens[1].parse::<f64>().unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(dec.tokens[2], "y");
        let eos = row_logits(&Row::one_hot(EOS), v.len());
        assert_eq!(decode_sequence(&v, &[eos]).tokens.len(), 0);
        let y = row_logits(&Row::one_hot(14), v.len());
        assert!(!decode_sequence(&v, &[y.clone(), y]).terminated);
    }
}
