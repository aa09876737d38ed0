//! One-hidden-layer ReLU network with a sigmoid output, trained with Adam
//! on the logistic loss.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tune_threshold;
use crate::metrics::{aupr, prf1_binary};
use crate::rng::{seeded_shuffle, SplitMix64};

const MAGIC: &str = "promptlab-mlp v1";

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("training data needs both classes")]
    SingleClass,
    #[error("feature width {found} does not match model input {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("{0} features but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneMetric {
    #[default]
    Aupr,
    F1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub seed: u64,
    pub tune_metric: TuneMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, max_epochs: 30, patience: 5, batch_size: 32, hidden: 50, seed: 0, tune_metric: TuneMetric::Aupr }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), MlpError> {
        let bad = |m: &str| Err(MlpError::InvalidConfig(m.into()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.batch_size == 0 || self.hidden == 0 || self.patience == 0 {
            return bad("batch_size, hidden and patience must be positive");
        }
        Ok(())
    }
}

/// `FFN(z) = max(0, z W1 + b1) W2 + b2`. `w1` is row-major `input x hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub input: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.w1.len() + 2 * self.b1.len() + 1);
        v.extend(&self.w1);
        v.extend(&self.b1);
        v.extend(&self.w2);
        v.push(self.b2);
        v
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-[y ln σ(l) + (1-y) ln(1-σ(l))]` without overflow.
fn logistic_loss(logit: f64, y: bool) -> f64 {
    logit.max(0.0) - if y { logit } else { 0.0 } + (-logit.abs()).exp().ln_1p()
}

impl MlpModel {
    /// Uniform Glorot initialization; zero biases.
    pub fn init(input: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let mut uniform = |n: usize, limit: f64| -> Vec<f64> { (0..n).map(|_| (rng.next_f64() * 2.0 - 1.0) * limit).collect() };
        let w1 = uniform(input * hidden, (6.0 / (input + hidden) as f64).sqrt());
        let w2 = uniform(hidden, (6.0 / (hidden + 1) as f64).sqrt());
        Self { input, hidden, w1, b1: vec![0.0; hidden], w2, b2: 0.0 }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self { input, hidden, w1: vec![0.0; input * hidden], b1: vec![0.0; hidden], w2: vec![0.0; hidden], b2: 0.0 }
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend(&self.w1);
        v.extend(&self.b1);
        v.extend(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let (a, rest) = flat.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.hidden);
        let (c, d) = rest.split_at(self.hidden);
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2 = d[0];
    }

    fn hidden_activations(&self, z: &[f64]) -> Vec<f64> {
        let mut h = self.b1.clone();
        for (i, &zi) in z.iter().enumerate() {
            let row = &self.w1[i * self.hidden..(i + 1) * self.hidden];
            for (hj, w) in h.iter_mut().zip(row) {
                *hj += zi * w;
            }
        }
        h.iter_mut().for_each(|x| *x = x.max(0.0));
        h
    }

    pub fn logit(&self, z: &[f64]) -> f64 {
        let h = self.hidden_activations(z);
        h.iter().zip(&self.w2).map(|(a, b)| a * b).sum::<f64>() + self.b2
    }

    pub fn score(&self, z: &[f64]) -> f64 {
        sigmoid(self.logit(z))
    }

    fn check_width(&self, rows: &[Vec<f64>]) -> Result<(), MlpError> {
        match rows.iter().find(|r| r.len() != self.input) {
            Some(r) => Err(MlpError::WidthMismatch { expected: self.input, found: r.len() }),
            None => Ok(()),
        }
    }

    /// Mean logistic loss over the batch and its gradient.
    pub fn loss_and_grad(&self, xs: &[Vec<f64>], ys: &[bool]) -> (f64, Gradients) {
        let mut g = Gradients { w1: vec![0.0; self.w1.len()], b1: vec![0.0; self.hidden], w2: vec![0.0; self.hidden], b2: 0.0 };
        let mut loss = 0.0;
        let n = xs.len() as f64;
        for (z, &y) in xs.iter().zip(ys) {
            let pre: Vec<f64> = {
                let mut p = self.b1.clone();
                for (i, &zi) in z.iter().enumerate() {
                    for (pj, w) in p.iter_mut().zip(&self.w1[i * self.hidden..(i + 1) * self.hidden]) {
                        *pj += zi * w;
                    }
                }
                p
            };
            let h: Vec<f64> = pre.iter().map(|x| x.max(0.0)).collect();
            let logit = h.iter().zip(&self.w2).map(|(a, b)| a * b).sum::<f64>() + self.b2;
            loss += logistic_loss(logit, y);
            let dl = (sigmoid(logit) - if y { 1.0 } else { 0.0 }) / n;
            g.b2 += dl;
            for j in 0..self.hidden {
                g.w2[j] += dl * h[j];
                if pre[j] > 0.0 {
                    let dpre = dl * self.w2[j];
                    g.b1[j] += dpre;
                    for (i, &zi) in z.iter().enumerate() {
                        g.w1[i * self.hidden + j] += dpre * zi;
                    }
                }
            }
        }
        (loss / n, g)
    }
}

/// `σ(FFN(z))` for every row.
pub fn score_candidates(model: &MlpModel, rows: &[Vec<f64>]) -> Result<Vec<f64>, MlpError> {
    model.check_width(rows)?;
    Ok(rows.iter().map(|r| model.score(r)).collect())
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * mhat / (vhat.sqrt() + Self::EPS);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub stopped_early: bool,
}

fn dev_metric(model: &MlpModel, xs: &[Vec<f64>], ys: &[bool], metric: TuneMetric) -> f64 {
    let scores: Vec<f64> = xs.iter().map(|r| model.score(r)).collect();
    match metric {
        TuneMetric::Aupr => aupr(&scores, ys).unwrap_or(0.0),
        TuneMetric::F1 => prf1_binary(&scores, ys, tune_threshold(&scores, ys)).map(|m| m.f1).unwrap_or(0.0),
    }
}

/// Trains on `(xs, ys)` and evaluates on `dev` (the training set when
/// `None`) after every epoch. Training stops once `patience` consecutive
/// epochs fail to beat the best score; the best epoch's parameters are
/// returned.
pub fn train_mlp(
    xs: &[Vec<f64>],
    ys: &[bool],
    dev: Option<(&[Vec<f64>], &[bool])>,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainTrace), MlpError> {
    cfg.validate()?;
    if xs.len() != ys.len() {
        return Err(MlpError::LengthMismatch(xs.len(), ys.len()));
    }
    if !ys.iter().any(|&y| y) || ys.iter().all(|&y| y) {
        return Err(MlpError::SingleClass);
    }
    let width = xs[0].len();
    let mut model = MlpModel::init(width, cfg.hidden, cfg.seed);
    model.check_width(xs)?;
    let (dev_x, dev_y) = dev.unwrap_or((xs, ys));
    model.check_width(dev_x)?;
    if dev_x.len() != dev_y.len() {
        return Err(MlpError::LengthMismatch(dev_x.len(), dev_y.len()));
    }

    let mut params = model.flat();
    let mut adam = Adam::new(params.len());
    let mut best = (model.clone(), f64::NEG_INFINITY, 0usize);
    let mut epochs = Vec::new();
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let order = seeded_shuffle((0..xs.len()).collect::<Vec<_>>(), SplitMix64::stream(cfg.seed, epoch as u64).next_u64());
        let mut total_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let bx: Vec<Vec<f64>> = chunk.iter().map(|&i| xs[i].clone()).collect();
            let by: Vec<bool> = chunk.iter().map(|&i| ys[i]).collect();
            let (loss, grad) = model.loss_and_grad(&bx, &by);
            total_loss += loss * chunk.len() as f64;
            adam.step(&mut params, &grad.flat(), cfg.learning_rate);
            model.set_flat(&params);
        }
        let metric = dev_metric(&model, dev_x, dev_y, cfg.tune_metric);
        log::debug!("epoch {epoch}: loss {:.6} dev {metric:.6}", total_loss / xs.len() as f64);
        epochs.push(EpochRecord { epoch, train_loss: total_loss / xs.len() as f64, dev_metric: metric });
        if metric > best.1 {
            best = (model.clone(), metric, epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (best_model, best_metric, best_epoch) = best;
    Ok((best_model, TrainTrace { epochs, best_epoch, best_metric, stopped_early }))
}

/// Text header line, then little-endian f64 values: `w1` (row-major),
/// `b1`, `w2`, `b2`.
pub fn save_model<W: Write>(model: &MlpModel, mut w: W) -> io::Result<()> {
    writeln!(w, "{MAGIC} input={} hidden={}", model.input, model.hidden)?;
    for x in model.flat() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()
}

pub fn load_model<R: BufRead>(mut r: R) -> Result<MlpModel, MlpError> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let rest = header
        .trim_end()
        .strip_prefix(MAGIC)
        .ok_or_else(|| MlpError::Format("missing header".into()))?;
    let field = |name: &str| -> Result<usize, MlpError> {
        rest.split_whitespace()
            .find_map(|kv| kv.strip_prefix(name).and_then(|v| v.strip_prefix('=')))
            .ok_or_else(|| MlpError::Format(format!("header lacks {name}")))?
            .parse()
            .map_err(|_| MlpError::Format(format!("bad {name}")))
    };
    let mut model = MlpModel::zeros(field("input")?, field("hidden")?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != model.param_count() * 8 {
        return Err(MlpError::Format(format!("expected {} parameters", model.param_count())));
    }
    let flat: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    model.set_flat(&flat);
    Ok(model)
}
