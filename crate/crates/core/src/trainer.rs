//! Joint training of the class prototypes and the attention binding vectors.
//!
//! Real-valued shadow parameters in `[-1, 1]` are kept for every binary
//! parameter. The forward pass uses their signs; the backward pass pushes
//! gradients through each hard nonlinearity with a straight-through
//! estimator:
//!
//! * `sign(x)` on a shadow parameter or a bundle: `1[|x| <= 1]`, where the
//!   bundle's argument is the mean of the selected values;
//! * the attention mask `[s > 0]`: `1[|s| <= D_head] / D_head`, or no
//!   gradient at all with [`MaskGrad::Detach`].
//!
//! Logits are `logit_scale * (C . h)` for the final attention token `h`, and
//! the loss is softmax cross-entropy. Shadow parameters are updated with
//! Adam plus decoupled weight decay and clipped back to `[-1, 1]`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{forward_last_traced, head_dim, HeadParams, HeadTrace};
use crate::classifier::AssociativeMemory;
use crate::encoder::TokenSequence;
use crate::error::{Error, Result};
use crate::hv::Hypervector;
use crate::rng::RngStream;

/// Stream ids derived from the master seed.
pub(crate) mod streams {
    pub const POSITION: u64 = 1;
    pub const LEVEL: u64 = 2;
    pub const INIT: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const DROPOUT: u64 = 5;
}

const INIT_SCALE: f64 = 0.1;

/// Gradient treatment of the binary attention mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskGrad {
    /// Scaled straight-through estimate, `1[|s| <= D_head] / D_head`.
    Ste,
    /// No gradient reaches the query and key vectors.
    Detach,
}

impl std::str::FromStr for MaskGrad {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ste" => Ok(Self::Ste),
            "detach" => Ok(Self::Detach),
            other => Err(Error::Config(format!(
                "unknown mask gradient mode {other:?} (expected ste or detach)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub dim: usize,
    pub heads: usize,
    pub quant_levels: usize,
    /// `None` means `1 / sqrt(dim)`.
    pub logit_scale: Option<f64>,
    pub mask_grad: MaskGrad,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 5e-2,
            dropout: 0.2,
            batch_size: 4,
            epochs: 50,
            seed: 0,
            dim: 10_000,
            heads: 10,
            quant_levels: 256,
            logit_scale: None,
            mask_grad: MaskGrad::Ste,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight decay must be non-negative, got {}", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1".into());
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.quant_levels < 2 {
            return fail(format!("quant_levels must be at least 2, got {}", self.quant_levels));
        }
        if let Some(s) = self.logit_scale {
            if !(s > 0.0 && s.is_finite()) {
                return fail(format!("logit scale must be positive, got {s}"));
            }
        }
        head_dim(self.dim, self.heads)?;
        Ok(())
    }

    pub fn logit_scale(&self) -> f64 {
        self.logit_scale.unwrap_or(1.0 / (self.dim as f64).sqrt())
    }
}

/// Index of a binding-vector family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bv {
    Q = 0,
    K = 1,
    V = 2,
    A = 3,
}

/// Real-valued parameters whose signs are the deployed binary model.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowParams {
    classes: usize,
    dim: usize,
    heads: usize,
    /// `classes x dim`, row-major.
    pub c_dense: Vec<f64>,
    /// One `dim`-long array per [`Bv`]; head `h` owns entries
    /// `h * D_head .. (h + 1) * D_head`.
    pub bv_dense: [Vec<f64>; 4],
    generation: u64,
}

impl ShadowParams {
    /// Uniform initialization in `[-0.1, 0.1]`.
    pub fn init(classes: usize, dim: usize, heads: usize, stream: RngStream) -> Result<Self> {
        head_dim(dim, heads)?;
        if classes < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 classes, got {classes}")));
        }
        let mut rng = stream.rng();
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-INIT_SCALE..=INIT_SCALE)).collect()
        };
        let c_dense = draw(classes * dim);
        let bv_dense = [draw(dim), draw(dim), draw(dim), draw(dim)];
        Ok(Self {
            classes,
            dim,
            heads,
            c_dense,
            bv_dense,
            generation: 0,
        })
    }

    /// Builds from explicit values (clipped to `[-1, 1]`).
    pub fn from_values(classes: usize, heads: usize, c_dense: Vec<f64>, bv_dense: [Vec<f64>; 4]) -> Result<Self> {
        let dim = bv_dense[0].len();
        head_dim(dim, heads)?;
        if bv_dense.iter().any(|b| b.len() != dim) || c_dense.len() != classes * dim || classes < 2 {
            return Err(Error::Shape("inconsistent shadow parameter shapes".into()));
        }
        let mut s = Self {
            classes,
            dim,
            heads,
            c_dense,
            bv_dense,
            generation: 0,
        };
        s.clip();
        Ok(s)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    /// Incremented by every optimizer step.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    fn clip(&mut self) {
        for x in self.c_dense.iter_mut().chain(self.bv_dense.iter_mut().flatten()) {
            *x = x.clamp(-1.0, 1.0);
        }
    }

    /// Signs of every parameter, ready for the forward pass.
    pub fn binarize(&self) -> Result<BinaryParams> {
        let dh = self.dim / self.heads;
        let heads = (0..self.heads)
            .map(|h| {
                let slice = |b: Bv| Hypervector::from_signs(&self.bv_dense[b as usize][h * dh..(h + 1) * dh]);
                HeadParams::new(slice(Bv::Q)?, slice(Bv::K)?, slice(Bv::V)?, slice(Bv::A)?)
            })
            .collect::<Result<Vec<_>>>()?;
        let c_sign = self.c_dense.iter().map(|&x| if x >= 0.0 { 1.0 } else { -1.0 }).collect();
        Ok(BinaryParams {
            heads,
            c_sign,
            classes: self.classes,
            dim: self.dim,
            generation: self.generation,
        })
    }
}

/// Binarized view of a [`ShadowParams`] snapshot.
#[derive(Debug, Clone)]
pub struct BinaryParams {
    pub heads: Vec<HeadParams>,
    /// `sign(C_d)` as ±1.0, `classes x dim`.
    pub c_sign: Vec<f64>,
    classes: usize,
    dim: usize,
    generation: u64,
}

impl BinaryParams {
    pub fn associative_memory(&self) -> Result<AssociativeMemory> {
        let rows = self
            .c_sign
            .chunks(self.dim)
            .map(Hypervector::from_signs)
            .collect::<Result<Vec<_>>>()?;
        AssociativeMemory::new(rows)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }
}

/// Intermediates recorded by [`forward_train`].
#[derive(Debug, Clone)]
pub struct Tape {
    generation: u64,
    tokens: TokenSequence,
    traces: Vec<HeadTrace>,
    /// Attention output for the final token, before dropout.
    pub output: Hypervector,
    /// Per-component dropout multipliers (`0` or `1 / (1 - p)`); empty when
    /// dropout is off.
    pub dropout: Vec<f64>,
}

impl Tape {
    /// Final token activation as seen by the classifier (dropout applied).
    pub fn activation(&self) -> Vec<f64> {
        let mut h = self.output.to_f64();
        if !self.dropout.is_empty() {
            for (x, m) in h.iter_mut().zip(&self.dropout) {
                *x *= m;
            }
        }
        h
    }
}

/// Binarized forward pass for one encoded sample. Dropout is drawn from
/// `dropout_stream` when the configured rate is positive and a stream is
/// given; pass `None` for evaluation.
pub fn forward_train(
    tokens: &TokenSequence,
    params: &BinaryParams,
    cfg: &TrainConfig,
    dropout_stream: Option<RngStream>,
) -> Result<(Vec<f64>, Tape)> {
    if tokens.dim() != params.dim {
        return Err(Error::DimensionMismatch {
            left: params.dim,
            right: tokens.dim(),
        });
    }
    let (output, traces) = forward_last_traced(tokens, &params.heads)?;
    let dropout = match dropout_stream {
        Some(stream) if cfg.dropout > 0.0 => {
            let keep = 1.0 / (1.0 - cfg.dropout);
            let mut rng = stream.rng();
            (0..params.dim)
                .map(|_| if rng.gen::<f64>() < cfg.dropout { 0.0 } else { keep })
                .collect()
        }
        _ => Vec::new(),
    };
    let tape = Tape {
        generation: params.generation,
        tokens: tokens.clone(),
        traces,
        output,
        dropout,
    };
    let h = tape.activation();
    let scale = cfg.logit_scale();
    let logits = params
        .c_sign
        .chunks(params.dim)
        .map(|row| scale * row.iter().zip(&h).map(|(c, x)| c * x).sum::<f64>())
        .collect();
    Ok((logits, tape))
}

/// Softmax cross-entropy and its gradient with respect to the logits.
pub fn loss_and_grad(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::LabelRange {
            label,
            classes: logits.len(),
            split: "train".into(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let loss = total.ln() + max - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / total).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Gradients with the same layout as [`ShadowParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub c: Vec<f64>,
    pub bv: [Vec<f64>; 4],
}

impl Grads {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            c: vec![0.0; classes * dim],
            bv: std::array::from_fn(|_| vec![0.0; dim]),
        }
    }

    fn add_scaled(&mut self, other: &Grads, w: f64) {
        for (a, b) in self.c.iter_mut().zip(&other.c) {
            *a += w * b;
        }
        for (ga, gb) in self.bv.iter_mut().zip(&other.bv) {
            for (a, b) in ga.iter_mut().zip(gb) {
                *a += w * b;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().chain(self.bv.iter().flatten()).all(|&g| g == 0.0)
    }
}

/// Straight-through backward pass for one sample.
pub fn backward_ste(
    tape: &Tape,
    dlogits: &[f64],
    shadow: &ShadowParams,
    params: &BinaryParams,
    cfg: &TrainConfig,
) -> Result<Grads> {
    if tape.generation != shadow.generation || params.generation != shadow.generation {
        return Err(Error::StaleTape {
            tape: tape.generation,
            params: shadow.generation,
        });
    }
    let (k_classes, dim) = (shadow.classes, shadow.dim);
    if dlogits.len() != k_classes {
        return Err(Error::Shape(format!(
            "{} logit gradients for {k_classes} classes",
            dlogits.len()
        )));
    }
    let scale = cfg.logit_scale();
    let h = tape.activation();
    let mut grads = Grads::zeros(k_classes, dim);

    // Classifier: dL/dC[k] = dL/dlogit_k * scale * h.
    for (k, &g) in dlogits.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        for (gc, x) in grads.c[k * dim..(k + 1) * dim].iter_mut().zip(&h) {
            *gc = g * scale * x;
        }
    }

    // Gradient reaching the attention output.
    let mut g_out = vec![0.0; dim];
    for (k, &g) in dlogits.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        for (go, c) in g_out.iter_mut().zip(&params.c_sign[k * dim..(k + 1) * dim]) {
            *go += g * scale * c;
        }
    }
    if !tape.dropout.is_empty() {
        for (go, m) in g_out.iter_mut().zip(&tape.dropout) {
            *go *= m;
        }
    }

    let tokens: Vec<Vec<i8>> = tape.tokens.tokens().iter().map(Hypervector::to_bipolar).collect();
    let last = tokens.len() - 1;
    let dh = dim / shadow.heads;
    for (hd, (trace, head)) in tape.traces.iter().zip(&params.heads).enumerate() {
        let off = hd * dh;
        let g_slice = &g_out[off..off + dh];
        let (bq, bk, bv, ba) = (
            head.bv_q.to_bipolar(),
            head.bv_k.to_bipolar(),
            head.bv_v.to_bipolar(),
            head.bv_a.to_bipolar(),
        );
        let bundled = trace.bundled.to_bipolar();

        // Output binding c = a * bv_a.
        let mut g_a = vec![0.0; dh];
        for d in 0..dh {
            grads.bv[Bv::A as usize][off + d] = g_slice[d] * bundled[d] as f64;
            g_a[d] = g_slice[d] * ba[d] as f64;
        }

        let gv = &mut grads.bv[Bv::V as usize];
        if trace.fallback {
            let tl = &tokens[last][off..off + dh];
            for d in 0..dh {
                gv[off + d] += g_a[d] * tl[d] as f64;
            }
            continue;
        }

        // a = sign(mean of selected values); identity STE on the mean.
        let n = trace.mask.iter().filter(|&&m| m).count() as f64;
        for (i, &m) in trace.mask.iter().enumerate() {
            if !m {
                continue;
            }
            let ti = &tokens[i][off..off + dh];
            for d in 0..dh {
                gv[off + d] += g_a[d] * ti[d] as f64 / n;
            }
        }

        if cfg.mask_grad == MaskGrad::Detach {
            continue;
        }
        let tl = &tokens[last][off..off + dh];
        for (i, &s) in trace.dots.iter().enumerate() {
            let ti = &tokens[i][off..off + dh];
            let g_mask: f64 = (0..dh)
                .map(|d| g_a[d] * (ti[d] * bv[d]) as f64)
                .sum::<f64>()
                / n;
            if s.unsigned_abs() as usize > dh {
                continue;
            }
            let g_score = g_mask / dh as f64;
            if g_score == 0.0 {
                continue;
            }
            for d in 0..dh {
                let hh = (tl[d] * ti[d]) as f64;
                grads.bv[Bv::Q as usize][off + d] += g_score * hh * bk[d] as f64;
                grads.bv[Bv::K as usize][off + d] += g_score * hh * bq[d] as f64;
            }
        }
    }

    // sign() on the shadow parameters: pass-through inside [-1, 1].
    for (g, x) in grads.c.iter_mut().zip(&shadow.c_dense) {
        if x.abs() > 1.0 {
            *g = 0.0;
        }
    }
    for (gb, xb) in grads.bv.iter_mut().zip(&shadow.bv_dense) {
        for (g, x) in gb.iter_mut().zip(xb) {
            if x.abs() > 1.0 {
                *g = 0.0;
            }
        }
    }
    Ok(grads)
}

/// Adam with decoupled weight decay over a flat parameter slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, weight_decay: f64) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * (m_hat / (v_hat.sqrt() + self.eps) + weight_decay * *p);
        }
    }
}

/// Moment estimates for every shadow tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    c: Adam,
    bv: [Adam; 4],
}

impl OptimizerState {
    pub fn new(shadow: &ShadowParams) -> Self {
        Self {
            c: Adam::new(shadow.c_dense.len()),
            bv: std::array::from_fn(|_| Adam::new(shadow.dim)),
        }
    }

    pub fn steps(&self) -> u64 {
        self.c.steps()
    }
}

/// One Adam step on every shadow tensor followed by clipping to `[-1, 1]`.
pub fn optimizer_step(shadow: &mut ShadowParams, grads: &Grads, state: &mut OptimizerState, cfg: &TrainConfig) -> Result<()> {
    if grads.c.len() != shadow.c_dense.len() || grads.bv.iter().any(|g| g.len() != shadow.dim) {
        return Err(Error::Shape("gradient shapes do not match parameters".into()));
    }
    let (lr, wd) = (cfg.learning_rate, cfg.weight_decay);
    state.c.step(&mut shadow.c_dense, &grads.c, lr, wd);
    for ((adam, p), g) in state.bv.iter_mut().zip(&mut shadow.bv_dense).zip(&grads.bv) {
        adam.step(p, g, lr, wd);
    }
    shadow.clip();
    shadow.generation += 1;
    Ok(())
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub wall_seconds: f64,
}

impl EpochLog {
    pub const HEADER: &'static str = "epoch\tmean_loss\ttrain_accuracy\twall_seconds";

    pub fn to_line(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.4}\t{:.3}",
            self.epoch, self.mean_loss, self.train_accuracy, self.wall_seconds
        )
    }
}

/// Output of [`fit`].
#[derive(Debug, Clone)]
pub struct Fitted {
    pub heads: Vec<HeadParams>,
    pub am: AssociativeMemory,
    pub shadow: ShadowParams,
    pub log: Vec<EpochLog>,
}

/// Trains on pre-encoded `(tokens, label)` pairs.
///
/// Every sample in a batch is processed independently (in parallel) and the
/// per-sample gradients are averaged in input order, so results do not
/// depend on thread scheduling. `on_epoch` is called after each epoch.
pub fn fit(
    data: &[(TokenSequence, usize)],
    classes: usize,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Fitted> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset("no training samples".into()));
    }
    let (dim, len) = (data[0].0.dim(), data[0].0.len());
    if dim != cfg.dim {
        return Err(Error::Shape(format!(
            "samples encoded at dimension {dim}, config says {}",
            cfg.dim
        )));
    }
    for (i, (t, label)) in data.iter().enumerate() {
        if t.dim() != dim || t.len() != len {
            return Err(Error::Shape(format!(
                "sample {i} has shape ({}, {}), expected ({dim}, {len})",
                t.dim(),
                t.len()
            )));
        }
        if *label >= classes {
            return Err(Error::LabelRange {
                label: *label,
                classes,
                split: "train".into(),
            });
        }
    }

    let mut shadow = ShadowParams::init(classes, dim, cfg.heads, RngStream::new(cfg.seed, streams::INIT))?;
    let mut state = OptimizerState::new(&shadow);
    let shuffle_root = RngStream::new(cfg.seed, streams::SHUFFLE);
    let dropout_root = RngStream::new(cfg.seed, streams::DROPOUT);
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng = ChaCha12Rng::from_rng(shuffle_root.substream(epoch as u64).rng())
            .expect("chacha reseed");
        order.shuffle(&mut rng);
        let epoch_dropout = dropout_root.substream(epoch as u64);

        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let params = shadow.binarize()?;
            let results = batch
                .par_iter()
                .map(|&i| {
                    let (tokens, label) = &data[i];
                    let (logits, tape) =
                        forward_train(tokens, &params, cfg, Some(epoch_dropout.substream(i as u64)))?;
                    let (loss, dlogits) = loss_and_grad(&logits, *label)?;
                    let grads = backward_ste(&tape, &dlogits, &shadow, &params, cfg)?;
                    Ok((loss, grads))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut total = Grads::zeros(classes, dim);
            let w = 1.0 / batch.len() as f64;
            for (loss, g) in &results {
                loss_sum += loss;
                total.add_scaled(g, w);
            }
            optimizer_step(&mut shadow, &total, &mut state, cfg)?;
        }

        let params = shadow.binarize()?;
        let am = params.associative_memory()?;
        let correct: usize = data
            .par_iter()
            .map(|(tokens, label)| -> Result<usize> {
                let out = crate::attention::forward_last(tokens, &params.heads)?;
                Ok((am.infer(&out)?.label == *label) as usize)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum();
        let row = EpochLog {
            epoch,
            mean_loss: loss_sum / data.len() as f64,
            train_accuracy: correct as f64 / data.len() as f64,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&row);
        log.push(row);
    }

    let params = shadow.binarize()?;
    Ok(Fitted {
        am: params.associative_memory()?,
        heads: params.heads,
        shadow,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::forward_last;

    fn random_tokens(seed: u64, len: usize, dim: usize) -> TokenSequence {
        let mut rng = RngStream::new(seed, 0).rng();
        TokenSequence::new(
            (0..len)
                .map(|_| Hypervector::random_with(&mut rng, dim).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn cfg(dim: usize, heads: usize) -> TrainConfig {
        TrainConfig {
            dim,
            heads,
            dropout: 0.0,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn uniform_logits_loss() {
        let (loss, grad) = loss_and_grad(&[0.3; 4], 2).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((grad.iter().sum::<f64>()).abs() < 1e-12);
        let (loss, _) = loss_and_grad(&[0.0, 80.0, 0.0], 1).unwrap();
        assert!(loss < 1e-30);
        assert!(loss_and_grad(&[0.0, 1.0], 2).is_err());
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(12, 0).rng();
        for _ in 0..20 {
            let k = rng.gen_range(2..8);
            let z: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let y = rng.gen_range(0..k);
            let (_, g) = loss_and_grad(&z, y).unwrap();
            for j in 0..k {
                let h = 1e-5;
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[j] += h;
                zm[j] -= h;
                let fd = (loss_and_grad(&zp, y).unwrap().0 - loss_and_grad(&zm, y).unwrap().0) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1e-3), "{fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn prototype_query_gives_unit_logit() {
        let dim = 256;
        let toks = random_tokens(1, 1, dim);
        // Identity bindings: output equals the single token.
        let mut bv = [vec![0.5; dim], vec![0.5; dim], vec![0.5; dim], vec![0.5; dim]];
        bv[3] = vec![0.5; dim];
        let mut c = vec![-0.5; 3 * dim];
        let target = toks.tokens()[0].to_f64();
        for d in 0..dim {
            c[dim + d] = 0.5 * target[d];
        }
        let shadow = ShadowParams::from_values(3, 1, c, bv).unwrap();
        let mut cf = cfg(dim, 1);
        cf.logit_scale = Some(1.0 / dim as f64);
        let params = shadow.binarize().unwrap();
        let (logits, _) = forward_train(&toks, &params, &cf, None).unwrap();
        assert!((logits[1] - 1.0).abs() < 1e-12);
        assert!(logits[1] > logits[0] && logits[1] > logits[2]);
    }

    #[test]
    fn positive_shadows_give_identity_attention() {
        let dim = 300;
        let shadow = ShadowParams::from_values(2, 3, vec![0.2; 2 * dim], std::array::from_fn(|_| vec![0.3; dim])).unwrap();
        let params = shadow.binarize().unwrap();
        for h in &params.heads {
            assert_eq!(h, &HeadParams::identity(100).unwrap());
        }
        let toks = random_tokens(2, 1, dim);
        let (_, tape) = forward_train(&toks, &params, &cfg(dim, 3), None).unwrap();
        assert_eq!(tape.output, toks.tokens()[0]);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let dim = 200;
        let shadow = ShadowParams::init(3, dim, 2, RngStream::new(3, 3)).unwrap();
        let params = shadow.binarize().unwrap();
        let toks = random_tokens(3, 6, dim);
        let cf = cfg(dim, 2);
        let (_, tape) = forward_train(&toks, &params, &cf, None).unwrap();
        let g = backward_ste(&tape, &[0.0; 3], &shadow, &params, &cf).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn frozen_attention_matches_closed_forms() {
        let dim = 400;
        let c: Vec<f64> = (0..3 * dim).map(|i| if i % 7 < 3 { -0.4 } else { 0.6 }).collect();
        let shadow = ShadowParams::from_values(3, 4, c, std::array::from_fn(|_| vec![0.5; dim])).unwrap();
        let params = shadow.binarize().unwrap();
        let toks = random_tokens(4, 1, dim);
        let cf = cfg(dim, 4);
        let (logits, tape) = forward_train(&toks, &params, &cf, None).unwrap();
        let (_, dl) = loss_and_grad(&logits, 1).unwrap();
        let g = backward_ste(&tape, &dl, &shadow, &params, &cf).unwrap();
        let h = toks.tokens()[0].to_f64();
        let scale = cf.logit_scale();
        for k in 0..3 {
            for d in 0..dim {
                assert_eq!(g.c[k * dim + d], dl[k] * scale * h[d]);
            }
        }
        // bv_a: dL/dO . sign(C) . H
        for d in 0..dim {
            let mut want = 0.0;
            for k in 0..3 {
                want += dl[k] * scale * params.c_sign[k * dim + d];
            }
            want *= h[d];
            assert!((g.bv[Bv::A as usize][d] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn stale_tape_is_rejected() {
        let dim = 100;
        let cf = cfg(dim, 1);
        let mut shadow = ShadowParams::init(2, dim, 1, RngStream::new(5, 5)).unwrap();
        let params = shadow.binarize().unwrap();
        let toks = random_tokens(5, 3, dim);
        let (logits, tape) = forward_train(&toks, &params, &cf, None).unwrap();
        let (_, dl) = loss_and_grad(&logits, 0).unwrap();
        let g = backward_ste(&tape, &dl, &shadow, &params, &cf).unwrap();
        let mut state = OptimizerState::new(&shadow);
        optimizer_step(&mut shadow, &g, &mut state, &cf).unwrap();
        assert!(matches!(
            backward_ste(&tape, &dl, &shadow, &params, &cf),
            Err(Error::StaleTape { tape: 0, params: 1 })
        ));
    }

    #[test]
    fn zero_gradient_step_is_a_no_op() {
        let dim = 100;
        let mut cf = cfg(dim, 1);
        cf.weight_decay = 0.0;
        let mut shadow = ShadowParams::init(2, dim, 1, RngStream::new(6, 6)).unwrap();
        let before = shadow.clone();
        let mut state = OptimizerState::new(&shadow);
        optimizer_step(&mut shadow, &Grads::zeros(2, dim), &mut state, &cf).unwrap();
        assert_eq!(shadow.c_dense, before.c_dense);
        assert_eq!(shadow.bv_dense, before.bv_dense);
    }

    #[test]
    fn steps_keep_parameters_clipped() {
        let dim = 50;
        let mut cf = cfg(dim, 1);
        cf.learning_rate = 0.5;
        let mut shadow = ShadowParams::init(2, dim, 1, RngStream::new(7, 7)).unwrap();
        let mut state = OptimizerState::new(&shadow);
        let mut rng = RngStream::new(7, 8).rng();
        for _ in 0..20 {
            let mut g = Grads::zeros(2, dim);
            for x in g.c.iter_mut().chain(g.bv.iter_mut().flatten()) {
                *x = rng.gen_range(-5.0..5.0);
            }
            optimizer_step(&mut shadow, &g, &mut state, &cf).unwrap();
            assert!(shadow.c_dense.iter().chain(shadow.bv_dense.iter().flatten()).all(|x| x.abs() <= 1.0));
        }
    }

    #[test]
    fn adam_solves_a_quadratic() {
        let mut x = vec![0.0];
        let mut adam = Adam::new(1);
        for _ in 0..500 {
            let g = [2.0 * (x[0] - 0.7)];
            adam.step(&mut x, &g, 0.01, 0.0);
        }
        assert!((x[0] - 0.7).abs() < 1e-3, "{}", x[0]);
    }

    #[test]
    fn binarized_logits_agree_with_inference() {
        let dim = 600;
        let cf = cfg(dim, 3);
        for seed in 0..10 {
            let shadow = ShadowParams::init(4, dim, 3, RngStream::new(seed, 1)).unwrap();
            let params = shadow.binarize().unwrap();
            let toks = random_tokens(seed + 100, 5, dim);
            let (logits, _) = forward_train(&toks, &params, &cf, None).unwrap();
            let am = params.associative_memory().unwrap();
            let pred = am.infer(&forward_last(&toks, &params.heads).unwrap()).unwrap();
            let best = logits
                .iter()
                .enumerate()
                .fold(0, |b, (k, &z)| if z > logits[b] { k } else { b });
            assert_eq!(best, pred.label);
            for (z, dist) in logits.iter().zip(&pred.distances) {
                let want = cf.logit_scale() * dim as f64 * (1.0 - 2.0 * dist);
                assert!((z - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mask_gradient_matches_directional_derivative_of_surrogate() {
        // With every mask bit on and identity bundle STE, dL/dbv_q is the
        // chain rule through s_i / D_head; check one coordinate by hand.
        let dim = 64;
        let shadow = ShadowParams::init(2, dim, 1, RngStream::new(9, 9)).unwrap();
        let params = shadow.binarize().unwrap();
        let toks = random_tokens(9, 3, dim);
        let cf = cfg(dim, 1);
        let (logits, tape) = forward_train(&toks, &params, &cf, None).unwrap();
        let (_, dl) = loss_and_grad(&logits, 0).unwrap();
        let g = backward_ste(&tape, &dl, &shadow, &params, &cf).unwrap();
        let mut detached = cf.clone();
        detached.mask_grad = MaskGrad::Detach;
        let g2 = backward_ste(&tape, &dl, &shadow, &params, &detached).unwrap();
        assert!(g2.bv[Bv::Q as usize].iter().all(|&x| x == 0.0));
        assert_eq!(g.bv[Bv::V as usize], g2.bv[Bv::V as usize]);
        assert_eq!(g.c, g2.c);
    }

    #[test]
    fn training_reduces_loss_on_a_toy_problem() {
        let dim = 2000;
        let protos: Vec<Hypervector> = (0..2)
            .map(|k| Hypervector::random(&RngStream::new(10, k), dim).unwrap())
            .collect();
        let mut data = Vec::new();
        for i in 0..10u64 {
            let k = (i % 2) as usize;
            let mut tok = protos[k].clone();
            let mut rng = RngStream::new(11, i).rng();
            let flips: Vec<usize> = (0..dim).filter(|_| rng.gen::<f64>() < 0.1).collect();
            tok.flip_many(&flips);
            data.push((TokenSequence::new(vec![tok]).unwrap(), k));
        }
        let cf = TrainConfig {
            dim,
            heads: 1,
            dropout: 0.0,
            learning_rate: 1e-2,
            batch_size: 10,
            epochs: 50,
            ..TrainConfig::default()
        };
        let fitted = fit(&data, 2, &cf, |_| {}).unwrap();
        let first = fitted.log[0].mean_loss;
        let last = fitted.log.last().unwrap().mean_loss;
        assert!(last < 0.25 * first, "{first} -> {last}");
        assert_eq!(fitted.log.last().unwrap().train_accuracy, 1.0);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let cf = cfg(64, 1);
        assert!(matches!(fit(&[], 2, &cf, |_| {}), Err(Error::EmptyDataset(_))));
        let toks = random_tokens(1, 2, 64);
        assert!(fit(&[(toks.clone(), 5)], 2, &cf, |_| {}).is_err());
        let mut zero = cf.clone();
        zero.epochs = 0;
        assert!(matches!(fit(&[(toks, 0)], 2, &zero, |_| {}), Err(Error::Config(_))));
    }

    #[test]
    fn one_epoch_one_sample_logs_one_row() {
        let cf = TrainConfig {
            epochs: 1,
            ..cfg(64, 1)
        };
        let fitted = fit(&[(random_tokens(2, 3, 64), 1)], 2, &cf, |_| {}).unwrap();
        assert_eq!(fitted.log.len(), 1);
    }
}
