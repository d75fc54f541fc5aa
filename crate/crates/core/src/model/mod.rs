//! Encoder-decoder attention model over bit-encoded trajectories.
//!
//! The encoder reads one 128-bit row per observed point through a learned
//! linear map; the decoder reads blended token embeddings, so a two-hot
//! constant enters as the same convex combination of grid embeddings that
//! its target row describes. Layers use pre-normalization and GELU
//! feed-forward blocks; attention is dense.

mod beam;
mod checkpoint;
pub mod tape;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{Row, Vocabulary, INPUT_BITS};
use crate::seed;
use tape::{AttnShape, Graph, Mat, Var};

pub use beam::{beam_search, greedy_decode, Candidate};
pub use checkpoint::{load_model, save_model, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{
    evaluate_token_accuracy, prepare_example, subsample_indices, token_accuracy, train, Example, StepLog, Subsampling, TrainConfig, TrainError,
    TrainOutcome,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub activation: Activation,
    pub max_input_len: usize,
    pub max_target_len: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ArchConfig {
    /// Small default that trains on a single CPU core.
    pub fn desk() -> Self {
        Self {
            encoder_layers: 2,
            decoder_layers: 2,
            heads: 4,
            d_model: 128,
            d_ff: 512,
            activation: Activation::Gelu,
            max_input_len: 256,
            max_target_len: 64,
        }
    }

    /// Full-scale reference dimensions (6/6 layers, 16 heads, 512/2048).
    pub fn full() -> Self {
        Self {
            encoder_layers: 6,
            decoder_layers: 6,
            heads: 16,
            d_model: 512,
            d_ff: 2048,
            activation: Activation::Gelu,
            max_input_len: 1024,
            max_target_len: 64,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidArch(m.to_string()));
        if self.heads == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(self.heads) {
            return bad("d_model must be a positive multiple of heads");
        }
        if self.d_ff == 0 || self.max_input_len == 0 || self.max_target_len < 2 {
            return bad("d_ff and max_input_len must be positive, max_target_len at least 2");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("input has {got} points, model accepts at most {max}")]
    InputTooLong { got: usize, max: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy)]
struct Ln {
    g: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct Attn {
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
}

#[derive(Debug, Clone, Copy)]
struct Ff {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone, Copy)]
struct EncLayer {
    ln1: Ln,
    attn: Attn,
    ln2: Ln,
    ff: Ff,
}

#[derive(Debug, Clone, Copy)]
struct DecLayer {
    ln1: Ln,
    self_attn: Attn,
    ln2: Ln,
    cross: Attn,
    ln3: Ln,
    ff: Ff,
}

#[derive(Debug, Clone)]
struct Layout {
    w_in: usize,
    b_in: usize,
    pos_in: usize,
    embed: usize,
    pos_out: usize,
    enc: Vec<EncLayer>,
    enc_ln: Ln,
    dec: Vec<DecLayer>,
    dec_ln: Ln,
    w_out: usize,
    b_out: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Xavier,
    Zero,
    One,
    Small,
}

/// Parameter names, shapes and initializers in storage order.
#[derive(Default)]
struct Specs(Vec<(String, usize, usize, Init)>);

impl Specs {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        self.0.push((name, rows, cols, init));
        self.0.len() - 1
    }

    fn ln(&mut self, name: &str, d: usize) -> Ln {
        Ln {
            g: self.add(format!("{name}.gain"), 1, d, Init::One),
            b: self.add(format!("{name}.bias"), 1, d, Init::Zero),
        }
    }

    fn attn(&mut self, name: &str, d: usize) -> Attn {
        let mut lin = |part: &str| {
            (
                self.add(format!("{name}.{part}.weight"), d, d, Init::Xavier),
                self.add(format!("{name}.{part}.bias"), 1, d, Init::Zero),
            )
        };
        let (wq, bq) = lin("q");
        let (wk, bk) = lin("k");
        let (wv, bv) = lin("v");
        let (wo, bo) = lin("out");
        Attn {
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
        }
    }

    fn ff(&mut self, name: &str, d: usize, hidden: usize) -> Ff {
        Ff {
            w1: self.add(format!("{name}.fc1.weight"), d, hidden, Init::Xavier),
            b1: self.add(format!("{name}.fc1.bias"), 1, hidden, Init::Zero),
            w2: self.add(format!("{name}.fc2.weight"), hidden, d, Init::Xavier),
            b2: self.add(format!("{name}.fc2.bias"), 1, d, Init::Zero),
        }
    }
}

fn layout(arch: &ArchConfig, vocab_len: usize) -> (Layout, Specs) {
    let d = arch.d_model;
    let mut s = Specs::default();
    let w_in = s.add("input.weight".into(), INPUT_BITS, d, Init::Xavier);
    let b_in = s.add("input.bias".into(), 1, d, Init::Zero);
    let pos_in = s.add("input.positions".into(), arch.max_input_len, d, Init::Small);
    let embed = s.add("target.embedding".into(), vocab_len, d, Init::Xavier);
    let pos_out = s.add("target.positions".into(), arch.max_target_len, d, Init::Small);
    let enc = (0..arch.encoder_layers)
        .map(|l| {
            let n = format!("encoder.{l}");
            EncLayer {
                ln1: s.ln(&format!("{n}.norm1"), d),
                attn: s.attn(&format!("{n}.self_attn"), d),
                ln2: s.ln(&format!("{n}.norm2"), d),
                ff: s.ff(&format!("{n}.ff"), d, arch.d_ff),
            }
        })
        .collect();
    let enc_ln = s.ln("encoder.norm", d);
    let dec = (0..arch.decoder_layers)
        .map(|l| {
            let n = format!("decoder.{l}");
            DecLayer {
                ln1: s.ln(&format!("{n}.norm1"), d),
                self_attn: s.attn(&format!("{n}.self_attn"), d),
                ln2: s.ln(&format!("{n}.norm2"), d),
                cross: s.attn(&format!("{n}.cross_attn"), d),
                ln3: s.ln(&format!("{n}.norm3"), d),
                ff: s.ff(&format!("{n}.ff"), d, arch.d_ff),
            }
        })
        .collect();
    let dec_ln = s.ln("decoder.norm", d);
    let w_out = s.add("output.weight".into(), d, vocab_len, Init::Xavier);
    let b_out = s.add("output.bias".into(), 1, vocab_len, Init::Zero);
    (
        Layout {
            w_in,
            b_in,
            pos_in,
            embed,
            pos_out,
            enc,
            enc_ln,
            dec,
            dec_ln,
            w_out,
            b_out,
        },
        s,
    )
}

/// Parameters plus their architecture and vocabulary.
#[derive(Debug, Clone)]
pub struct Model {
    pub arch: ArchConfig,
    pub vocab: Vocabulary,
    pub names: Vec<String>,
    pub params: Vec<Mat>,
    layout: Layout,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.vocab == other.vocab && self.names == other.names && self.params == other.params
    }
}

/// Inputs of one forward pass: `groups` sequences of equal length.
pub struct ForwardInput<'a> {
    /// `groups * n` rows of input bits.
    pub bits: &'a [[u8; INPUT_BITS]],
    pub n: usize,
    /// `groups * t` decoder-input rows.
    pub dec_rows: &'a [Row],
    pub t: usize,
    pub groups: usize,
}

impl Model {
    /// Deterministic initialization: each tensor draws from its own stream.
    pub fn new(arch: ArchConfig, seed: u64) -> Result<Self, ModelError> {
        arch.validate()?;
        let vocab = Vocabulary::standard();
        let (layout, specs) = layout(&arch, vocab.len());
        let mut names = Vec::with_capacity(specs.0.len());
        let mut params = Vec::with_capacity(specs.0.len());
        for (i, (name, rows, cols, init)) in specs.0.into_iter().enumerate() {
            let mut rng = seed::stream("model-init", seed, &[i as u64]);
            let data: Vec<f64> = match init {
                Init::Zero => vec![0.0; rows * cols],
                Init::One => vec![1.0; rows * cols],
                Init::Xavier => {
                    let a = (6.0 / (rows + cols) as f64).sqrt();
                    (0..rows * cols).map(|_| rng.random_range(-a..a)).collect()
                }
                Init::Small => (0..rows * cols).map(|_| rng.random_range(-0.035..0.035)).collect(),
            };
            names.push(name);
            params.push(Mat::from_vec(rows, cols, data));
        }
        Ok(Self {
            arch,
            vocab,
            names,
            params,
            layout,
        })
    }

    pub(crate) fn from_parts(arch: ArchConfig, vocab: Vocabulary, params: Vec<Mat>) -> Result<Self, ModelError> {
        arch.validate()?;
        let (layout, specs) = layout(&arch, vocab.len());
        if specs.0.len() != params.len() {
            return Err(ModelError::Checkpoint("tensor count does not match the architecture".into()));
        }
        for ((name, rows, cols, _), p) in specs.0.iter().zip(&params) {
            if (p.rows, p.cols) != (*rows, *cols) {
                return Err(ModelError::Checkpoint(format!("tensor {name} has the wrong shape")));
            }
        }
        Ok(Self {
            arch,
            vocab,
            names: specs.0.into_iter().map(|s| s.0).collect(),
            params,
            layout,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    fn linear(&self, g: &mut Graph, x: Var, w: usize, b: usize) -> Var {
        let wv = g.param(w);
        let bv = g.param(b);
        let h = g.matmul(x, wv);
        g.add_row(h, bv)
    }

    fn norm(&self, g: &mut Graph, x: Var, ln: Ln) -> Var {
        let gv = g.param(ln.g);
        let bv = g.param(ln.b);
        g.layer_norm(x, gv, bv)
    }

    fn attention(&self, g: &mut Graph, x: Var, memory: Var, a: Attn, shape: AttnShape) -> Var {
        let q = self.linear(g, x, a.wq, a.bq);
        let k = self.linear(g, memory, a.wk, a.bk);
        let v = self.linear(g, memory, a.wv, a.bv);
        let o = g.attention(q, k, v, shape);
        self.linear(g, o, a.wo, a.bo)
    }

    fn feed_forward(&self, g: &mut Graph, x: Var, f: Ff) -> Var {
        let h = self.linear(g, x, f.w1, f.b1);
        let h = g.gelu(h);
        self.linear(g, h, f.w2, f.b2)
    }

    /// Encoder states for `groups * n` input rows.
    pub(crate) fn encode(&self, g: &mut Graph, bits: &[[u8; INPUT_BITS]], n: usize, groups: usize) -> Result<Var, ModelError> {
        if n > self.arch.max_input_len {
            return Err(ModelError::InputTooLong {
                got: n,
                max: self.arch.max_input_len,
            });
        }
        assert_eq!(bits.len(), n * groups);
        let data: Vec<f64> = bits.iter().flat_map(|r| r.iter().map(|&b| b as f64)).collect();
        let x = g.input(Mat::from_vec(bits.len(), INPUT_BITS, data));
        let h = self.linear(g, x, self.layout.w_in, self.layout.b_in);
        let p = g.param(self.layout.pos_in);
        let mut h = g.add_positions(h, p, n);
        let shape = AttnShape {
            groups,
            q_len: n,
            k_len: n,
            heads: self.arch.heads,
            causal: false,
        };
        for layer in &self.layout.enc {
            let x = self.norm(g, h, layer.ln1);
            let a = self.attention(g, x, x, layer.attn, shape);
            h = g.add(h, a);
            let x = self.norm(g, h, layer.ln2);
            let f = self.feed_forward(g, x, layer.ff);
            h = g.add(h, f);
        }
        Ok(self.norm(g, h, self.layout.enc_ln))
    }

    /// Next-token logits (`groups * t` rows) given encoder memory of
    /// `groups * n` rows.
    pub(crate) fn decode(&self, g: &mut Graph, memory: Var, n: usize, dec_rows: &[Row], t: usize, groups: usize) -> Var {
        assert!(t <= self.arch.max_target_len, "target longer than the position table");
        assert_eq!(dec_rows.len(), t * groups);
        let e = g.param(self.layout.embed);
        let h = g.blend(e, dec_rows.to_vec());
        let p = g.param(self.layout.pos_out);
        let mut h = g.add_positions(h, p, t);
        let self_shape = AttnShape {
            groups,
            q_len: t,
            k_len: t,
            heads: self.arch.heads,
            causal: true,
        };
        let cross_shape = AttnShape {
            groups,
            q_len: t,
            k_len: n,
            heads: self.arch.heads,
            causal: false,
        };
        for layer in &self.layout.dec {
            let x = self.norm(g, h, layer.ln1);
            let a = self.attention(g, x, x, layer.self_attn, self_shape);
            h = g.add(h, a);
            let x = self.norm(g, h, layer.ln2);
            let c = self.attention(g, x, memory, layer.cross, cross_shape);
            h = g.add(h, c);
            let x = self.norm(g, h, layer.ln3);
            let f = self.feed_forward(g, x, layer.ff);
            h = g.add(h, f);
        }
        let h = self.norm(g, h, self.layout.dec_ln);
        self.linear(g, h, self.layout.w_out, self.layout.b_out)
    }

    /// Teacher-forced logits, `(groups * t) x vocab`.
    pub fn forward(&self, input: &ForwardInput) -> Result<Mat, ModelError> {
        let mut g = Graph::new(&self.params);
        let mem = self.encode(&mut g, input.bits, input.n, input.groups)?;
        let logits = self.decode(&mut g, mem, input.n, input.dec_rows, input.t, input.groups);
        Ok(g.value(logits).clone())
    }

    /// Mean soft cross-entropy, its parameter gradients and the logits.
    /// `targets[r]` is `None` at padding positions.
    pub fn loss_and_grads(&self, input: &ForwardInput, targets: &[Option<Row>]) -> Result<(f64, Vec<Mat>, Mat), ModelError> {
        let mut g = Graph::new(&self.params);
        let mem = self.encode(&mut g, input.bits, input.n, input.groups)?;
        let logits = self.decode(&mut g, mem, input.n, input.dec_rows, input.t, input.groups);
        let loss = g.cross_entropy(logits, targets.to_vec());
        let grads = g.backward(loss);
        Ok((g.value(loss).data[0], grads, g.value(logits).clone()))
    }

    /// Loss only (for finite-difference checks).
    pub fn loss(&self, input: &ForwardInput, targets: &[Option<Row>]) -> Result<f64, ModelError> {
        let mut g = Graph::new(&self.params);
        let mem = self.encode(&mut g, input.bits, input.n, input.groups)?;
        let logits = self.decode(&mut g, mem, input.n, input.dec_rows, input.t, input.groups);
        let loss = g.cross_entropy(logits, targets.to_vec());
        Ok(g.value(loss).data[0])
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::codec::{encode_input, encode_target, BOS};

    pub(crate) fn tiny() -> ArchConfig {
        ArchConfig {
            encoder_layers: 1,
            decoder_layers: 1,
            heads: 3,
            d_model: 3,
            d_ff: 4,
            activation: Activation::Gelu,
            max_input_len: 4,
            max_target_len: 6,
        }
    }

    #[test]
    fn deterministic_init_and_count() {
        let a = Model::new(ArchConfig::desk(), 1).unwrap();
        let b = Model::new(ArchConfig::desk(), 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.param_count(), b.param_count());
        assert!(Model::new(tiny(), 0).unwrap().param_count() < 1000);
        let c = Model::new(ArchConfig::desk(), 2).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn forward_shape() {
        let m = Model::new(ArchConfig::desk(), 0).unwrap();
        let bits = encode_input(&[(0.0, 1.0)]);
        let rows = [Row::one_hot(BOS)];
        let logits = m
            .forward(&ForwardInput {
                bits: &bits,
                n: 1,
                dec_rows: &rows,
                t: 1,
                groups: 1,
            })
            .unwrap();
        assert_eq!((logits.rows, logits.cols), (1, m.vocab.len()));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut m = Model::new(tiny(), 3).unwrap();
        let points = [(0.0, 1.0), (0.5, 1.2), (1.0, 1.5)];
        let bits = encode_input(&points);
        let enc = encode_target(&m.vocab, &["mul", "1.64", "y"]).unwrap();
        let input = ForwardInput {
            bits: &bits,
            n: 3,
            dec_rows: enc.inputs(),
            t: 4,
            groups: 1,
        };
        let targets: Vec<Option<Row>> = enc.targets().iter().copied().map(Some).collect();
        let (_, grads, _) = m.loss_and_grads(&input, &targets).unwrap();
        let h = 1e-5;
        for (p, grad) in grads.iter().enumerate() {
            for i in 0..m.params[p].data.len() {
                let orig = m.params[p].data[i];
                m.params[p].data[i] = orig + h;
                let up = m.loss(&input, &targets).unwrap();
                m.params[p].data[i] = orig - h;
                let down = m.loss(&input, &targets).unwrap();
                m.params[p].data[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grad.data[i];
                let scale = numeric.abs().max(analytic.abs());
                assert!(
                    (numeric - analytic).abs() <= 1e-4 * scale + 1e-8,
                    "{}[{i}]: analytic {analytic} numeric {numeric}",
                    m.names[p]
                );
            }
        }
    }
}
