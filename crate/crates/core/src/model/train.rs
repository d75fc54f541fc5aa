use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::index;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tape::Mat;
use super::{ForwardInput, Model, ModelError};
use crate::codec::{encode_input, encode_target, CodecError, Row, TargetEncoding, Vocabulary, INPUT_BITS, PAD};
use crate::dataset::{Dataset, OdeRecord};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subsampling {
    /// `n` grid points at (rounded) equal index spacing, both ends included.
    Equidistant,
    /// `n` distinct grid points uniformly at random, sorted by time.
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub warmup_steps: usize,
    pub peak_lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Standard deviation of the multiplicative noise factor (mean 1).
    pub noise_sigma: f64,
    pub n_points: usize,
    pub subsampling: Subsampling,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm clip.
    pub clip_norm: Option<f64>,
    /// Stop once an epoch's running token accuracy reaches this value.
    pub stop_at_token_accuracy: Option<f64>,
    pub time_budget_secs: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            warmup_steps: 200,
            peak_lr: 3e-4,
            epochs: 25,
            seed: 0,
            noise_sigma: 0.0,
            n_points: 256,
            subsampling: Subsampling::Equidistant,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: Some(1.0),
            stop_at_token_accuracy: None,
            time_budget_secs: None,
        }
    }
}

impl TrainConfig {
    /// The noisy, randomly subsampled variant (`sigma = 0.01`, `n = 128`).
    pub fn noisy() -> Self {
        Self {
            noise_sigma: 0.01,
            n_points: 128,
            subsampling: Subsampling::UniformRandom,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 || self.n_points < 2 {
            return bad("batch_size must be positive and n_points at least 2");
        }
        if !(self.noise_sigma >= 0.0) || !(self.peak_lr > 0.0) {
            return bad("noise_sigma must be >= 0 and peak_lr > 0");
        }
        Ok(())
    }

    pub fn learning_rate(&self, step: usize) -> f64 {
        if self.warmup_steps == 0 || step >= self.warmup_steps {
            self.peak_lr
        } else {
            self.peak_lr * (step + 1) as f64 / self.warmup_steps as f64
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("record {id}: {source}")]
    Encoding {
        id: usize,
        #[source]
        source: CodecError,
    },
    #[error("record {id} has {len} target rows, the model accepts {max}")]
    TargetTooLong { id: usize, len: usize, max: usize },
    #[error("record {id} has {len} points, fewer than n_points = {n}")]
    TooFewPoints { id: usize, len: usize, n: usize },
    #[error("non-finite loss at step {step} (epoch {epoch}, lr {lr:e}, records {records:?})")]
    NonFiniteLoss {
        step: usize,
        epoch: usize,
        lr: f64,
        records: Vec<usize>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub token_acc: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub log: Vec<StepLog>,
    pub steps: usize,
    pub epochs: usize,
    /// Running token accuracy of the last epoch.
    pub last_epoch_token_acc: f64,
    pub seconds: f64,
}

impl TrainOutcome {
    /// CSV with columns `step,loss,token_acc`.
    pub fn write_log(&self, path: &Path) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "step,loss,token_acc")?;
        for s in &self.log {
            writeln!(w, "{},{},{}", s.step, s.loss, s.token_acc)?;
        }
        w.flush()
    }
}

/// Grid indices for `n` of `len` points.
pub fn subsample_indices<R: rand::Rng + ?Sized>(len: usize, n: usize, mode: Subsampling, rng: &mut R) -> Vec<usize> {
    assert!(n <= len && n >= 1);
    if n == 1 {
        return vec![0];
    }
    match mode {
        Subsampling::Equidistant => (0..n)
            .map(|i| ((i * (len - 1)) as f64 / (n - 1) as f64).round() as usize)
            .collect(),
        Subsampling::UniformRandom => {
            let mut v = index::sample(rng, len, n).into_vec();
            v.sort_unstable();
            v
        }
    }
}

/// Encoded input and target of one training record.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: usize,
    pub bits: Vec<[u8; INPUT_BITS]>,
    pub target: TargetEncoding,
}

/// Subsamples, corrupts and encodes `record`. The augmentation stream is
/// keyed by `(seed, record id, epoch)`.
pub fn prepare_example(
    ds: &Dataset,
    record: &OdeRecord,
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<Example, TrainError> {
    let (times, values) = ds.trajectory(record);
    if times.len() < cfg.n_points {
        return Err(TrainError::TooFewPoints {
            id: record.id,
            len: times.len(),
            n: cfg.n_points,
        });
    }
    let mut rng = seed::stream("train-augment", cfg.seed, &[record.id as u64, epoch as u64]);
    let idx = subsample_indices(times.len(), cfg.n_points, cfg.subsampling, &mut rng);
    let noise = (cfg.noise_sigma > 0.0).then(|| Normal::new(1.0, cfg.noise_sigma).expect("sigma validated"));
    let points: Vec<(f64, f64)> = idx
        .iter()
        .map(|&i| {
            let factor = noise.as_ref().map_or(1.0, |d| d.sample(&mut rng));
            (times[i], values[i] * factor)
        })
        .collect();
    let target = encode_target(vocab, &record.prefix).map_err(|source| TrainError::Encoding { id: record.id, source })?;
    Ok(Example {
        id: record.id,
        bits: encode_input(&points),
        target,
    })
}

/// Correct and total counts of teacher-forced argmax predictions. A
/// constant row counts as correct when the argmax lies in its support.
pub fn token_accuracy(logits: &Mat, targets: &[Option<Row>]) -> (usize, usize) {
    let mut correct = 0;
    let mut total = 0;
    for (r, t) in targets.iter().enumerate() {
        let Some(t) = t else { continue };
        let row = logits.row(r);
        let mut best = 0;
        for (i, &x) in row.iter().enumerate() {
            if x > row[best] {
                best = i;
            }
        }
        total += 1;
        if t.entries().any(|(idx, w)| idx == best && w > 0.0) {
            correct += 1;
        }
    }
    (correct, total)
}

pub(crate) struct Batch {
    pub bits: Vec<[u8; INPUT_BITS]>,
    pub n: usize,
    pub dec_rows: Vec<Row>,
    pub targets: Vec<Option<Row>>,
    pub t: usize,
    pub groups: usize,
}

impl Batch {
    pub(crate) fn new(examples: &[&Example]) -> Self {
        let n = examples[0].bits.len();
        let t = examples.iter().map(|e| e.target.rows.len() - 1).max().unwrap_or(1);
        let mut bits = Vec::with_capacity(n * examples.len());
        let mut dec_rows = Vec::with_capacity(t * examples.len());
        let mut targets = Vec::with_capacity(t * examples.len());
        for e in examples {
            assert_eq!(e.bits.len(), n, "equal point counts within a batch");
            bits.extend_from_slice(&e.bits);
            let inputs = e.target.inputs();
            let outs = e.target.targets();
            for k in 0..t {
                dec_rows.push(inputs.get(k).copied().unwrap_or(Row::one_hot(PAD)));
                targets.push(outs.get(k).copied());
            }
        }
        Self {
            bits,
            n,
            dec_rows,
            targets,
            t,
            groups: examples.len(),
        }
    }

    pub(crate) fn input(&self) -> ForwardInput<'_> {
        ForwardInput {
            bits: &self.bits,
            n: self.n,
            dec_rows: &self.dec_rows,
            t: self.t,
            groups: self.groups,
        }
    }
}

struct Adam {
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: i32,
}

impl Adam {
    fn new(params: &[Mat]) -> Self {
        let zeros = || params.iter().map(|p| Mat::zeros(p.rows, p.cols)).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [Mat], grads: &[Mat], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
                v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                p.data[i] -= lr * mh / (vh.sqrt() + cfg.adam_eps);
            }
        }
    }
}

fn clip(grads: &mut [Mat], max_norm: f64) {
    let norm = grads
        .iter()
        .flat_map(|g| g.data.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads {
            for x in &mut g.data {
                *x *= s;
            }
        }
    }
}

/// Mini-batch training with Adam, linear warmup then a constant rate.
/// Batch composition is a seed-fixed permutation reused every epoch; with
/// deterministic augmentation every epoch sees identical batches.
pub fn train(model: &mut Model, ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let started = Instant::now();
    let mut order: Vec<usize> = (0..ds.len()).collect();
    {
        use rand::seq::SliceRandom;
        let mut rng = seed::stream("train-order", cfg.seed, &[]);
        order.shuffle(&mut rng);
    }
    let fixed_augmentation = cfg.noise_sigma == 0.0 && cfg.subsampling == Subsampling::Equidistant;
    let prepare_all = |epoch: usize| -> Result<Vec<Example>, TrainError> {
        ds.records()
            .iter()
            .map(|r| prepare_example(ds, r, &model.vocab, cfg, epoch))
            .collect()
    };
    let mut examples = prepare_all(0)?;
    for e in &examples {
        if e.target.rows.len() - 1 > model.arch.max_target_len {
            return Err(TrainError::TargetTooLong {
                id: e.id,
                len: e.target.rows.len() - 1,
                max: model.arch.max_target_len,
            });
        }
    }

    let mut adam = Adam::new(&model.params);
    let mut log = Vec::new();
    let mut step = 0;
    let mut epochs = 0;
    let mut last_acc = 0.0;
    for epoch in 0..cfg.epochs {
        if epoch > 0 && !fixed_augmentation {
            examples = prepare_all(epoch)?;
        }
        let mut correct = 0;
        let mut total = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let members: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let batch = Batch::new(&members);
            let (loss, mut grads, logits) = model.loss_and_grads(&batch.input(), &batch.targets)?;
            let lr = cfg.learning_rate(step);
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    step,
                    epoch,
                    lr,
                    records: members.iter().map(|e| e.id).collect(),
                });
            }
            let (c, t) = token_accuracy(&logits, &batch.targets);
            correct += c;
            total += t;
            if let Some(max_norm) = cfg.clip_norm {
                clip(&mut grads, max_norm);
            }
            adam.step(&mut model.params, &grads, lr, cfg);
            log.push(StepLog {
                step,
                epoch,
                loss,
                token_acc: c as f64 / t.max(1) as f64,
                lr,
            });
            step += 1;
        }
        epochs = epoch + 1;
        last_acc = correct as f64 / total.max(1) as f64;
        if cfg.stop_at_token_accuracy.is_some_and(|a| last_acc >= a) {
            break;
        }
        if cfg.time_budget_secs.is_some_and(|b| started.elapsed().as_secs_f64() > b) {
            break;
        }
    }
    Ok(TrainOutcome {
        log,
        steps: step,
        epochs,
        last_epoch_token_acc: last_acc,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Teacher-forced token accuracy of `model` over prepared examples.
pub fn evaluate_token_accuracy(model: &Model, examples: &[Example], batch_size: usize) -> Result<f64, ModelError> {
    let mut correct = 0;
    let mut total = 0;
    for chunk in examples.chunks(batch_size.max(1)) {
        let members: Vec<&Example> = chunk.iter().collect();
        let batch = Batch::new(&members);
        let logits = model.forward(&batch.input())?;
        let (c, t) = token_accuracy(&logits, &batch.targets);
        correct += c;
        total += t;
    }
    Ok(correct as f64 / total.max(1) as f64)
}
