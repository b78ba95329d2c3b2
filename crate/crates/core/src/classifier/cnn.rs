//! One-dimensional CNN: blocks of (conv, ReLU, conv, ReLU, max-pool), then a
//! single dense layer and softmax. Valid convolutions, stride 1. Trained with
//! categorical cross-entropy and Adam, in f64.
//!
//! All parameters live in one flat vector; [`Layout`] maps layers to offsets.
//! Weights of a conv layer are indexed `[out][in][tap]`, dense weights
//! `[class][feature]`, and feature maps `[channel][position]`.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::monitored_vectors;
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::trace::Dataset;

pub const CHECKPOINT_FORMAT: &str = "wfbench-cnn";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Samples per gradient chunk. Fixed so the summation order, and hence the
/// result, does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnArchitecture {
    pub input_len: usize,
    /// Output channels of each block; both convs of a block share it.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub pool: usize,
    pub classes: usize,
}

impl CnnArchitecture {
    /// Four blocks of 32, 64, 128 and 256 channels, kernel width 5, pool 2.
    pub fn standard(input_len: usize, classes: usize) -> Self {
        CnnArchitecture { input_len, channels: vec![32, 64, 128, 256], kernel: 5, pool: 2, classes }
    }

    pub fn with_channels(input_len: usize, classes: usize, channels: Vec<usize>) -> Self {
        CnnArchitecture { channels, ..Self::standard(input_len, classes) }
    }

    /// Sequence length after each block.
    pub fn block_lengths(&self) -> Result<Vec<usize>> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::ShapeMismatch("every block needs at least one channel".into()));
        }
        if self.kernel == 0 || self.pool == 0 || self.classes == 0 {
            return Err(Error::ShapeMismatch("kernel, pool and classes must be positive".into()));
        }
        let mut len = self.input_len;
        let mut out = Vec::with_capacity(self.channels.len());
        for (b, _) in self.channels.iter().enumerate() {
            let shrink = 2 * (self.kernel - 1);
            if len < shrink + self.pool {
                return Err(Error::ShapeMismatch(format!(
                    "input length {} too short: block {b} receives {len} positions",
                    self.input_len
                )));
            }
            len = (len - shrink) / self.pool;
            out.push(len);
        }
        Ok(out)
    }

    pub fn flat_len(&self) -> Result<usize> {
        let lens = self.block_lengths()?;
        Ok(lens.last().unwrap() * self.channels.last().unwrap())
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(Layout::new(self)?.total)
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvSpec {
    cin: usize,
    cout: usize,
    in_len: usize,
    out_len: usize,
    w: usize,
    b: usize,
}

#[derive(Clone, Debug)]
struct Layout {
    convs: Vec<ConvSpec>,
    dense_in: usize,
    dense_w: usize,
    dense_b: usize,
    kernel: usize,
    pool: usize,
    classes: usize,
    total: usize,
}

impl Layout {
    fn new(arch: &CnnArchitecture) -> Result<Self> {
        arch.block_lengths()?;
        let k = arch.kernel;
        let mut convs = Vec::with_capacity(2 * arch.channels.len());
        let mut off = 0;
        let mut cin = 1;
        let mut len = arch.input_len;
        for &c in &arch.channels {
            for _ in 0..2 {
                let spec = ConvSpec { cin, cout: c, in_len: len, out_len: len - k + 1, w: off, b: off + c * cin * k };
                off = spec.b + c;
                convs.push(spec);
                cin = c;
                len = spec.out_len;
            }
            len /= arch.pool;
        }
        let dense_in = cin * len;
        let dense_w = off;
        let dense_b = dense_w + arch.classes * dense_in;
        Ok(Layout {
            convs,
            dense_in,
            dense_w,
            dense_b,
            kernel: k,
            pool: arch.pool,
            classes: arch.classes,
            total: dense_b + arch.classes,
        })
    }
}

/// Intermediate activations of one forward pass.
struct Activations {
    /// Post-ReLU output of every conv layer.
    conv_out: Vec<Vec<f64>>,
    /// Max-pool output and argmax source index of every block.
    pooled: Vec<Vec<f64>>,
    argmax: Vec<Vec<usize>>,
    probs: Vec<f64>,
}

fn conv_forward(s: &ConvSpec, k: usize, params: &[f64], x: &[f64], z: &mut Vec<f64>) {
    z.clear();
    z.resize(s.cout * s.out_len, 0.0);
    for o in 0..s.cout {
        let zrow = &mut z[o * s.out_len..(o + 1) * s.out_len];
        zrow.fill(params[s.b + o]);
        for i in 0..s.cin {
            let xrow = &x[i * s.in_len..(i + 1) * s.in_len];
            let wrow = &params[s.w + (o * s.cin + i) * k..][..k];
            for (tap, &w) in wrow.iter().enumerate() {
                for (zv, xv) in zrow.iter_mut().zip(&xrow[tap..tap + s.out_len]) {
                    *zv += w * xv;
                }
            }
        }
    }
    for v in z.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// `dz` is the gradient w.r.t. the post-ReLU output; it is masked in place.
fn conv_backward(
    s: &ConvSpec,
    k: usize,
    params: &[f64],
    x: &[f64],
    out: &[f64],
    dz: &mut [f64],
    grad: &mut [f64],
    dx: Option<&mut Vec<f64>>,
) {
    for (d, &o) in dz.iter_mut().zip(out) {
        if o <= 0.0 {
            *d = 0.0;
        }
    }
    let mut dx = dx;
    if let Some(dx) = dx.as_deref_mut() {
        dx.clear();
        dx.resize(s.cin * s.in_len, 0.0);
    }
    for o in 0..s.cout {
        let dzrow = &dz[o * s.out_len..(o + 1) * s.out_len];
        grad[s.b + o] += dzrow.iter().sum::<f64>();
        for i in 0..s.cin {
            let xrow = &x[i * s.in_len..(i + 1) * s.in_len];
            let widx = s.w + (o * s.cin + i) * k;
            for tap in 0..k {
                let xs = &xrow[tap..tap + s.out_len];
                grad[widx + tap] += dzrow.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
            }
            if let Some(dx) = dx.as_deref_mut() {
                let dxrow = &mut dx[i * s.in_len..(i + 1) * s.in_len];
                for tap in 0..k {
                    let w = params[widx + tap];
                    for (d, g) in dxrow[tap..tap + s.out_len].iter_mut().zip(dzrow) {
                        *d += w * g;
                    }
                }
            }
        }
    }
}

fn max_pool(x: &[f64], channels: usize, len: usize, pool: usize) -> (Vec<f64>, Vec<usize>) {
    let out_len = len / pool;
    let mut y = Vec::with_capacity(channels * out_len);
    let mut idx = Vec::with_capacity(channels * out_len);
    for c in 0..channels {
        let row = &x[c * len..(c + 1) * len];
        for t in 0..out_len {
            let mut best = t * pool;
            for j in t * pool + 1..(t + 1) * pool {
                if row[j] > row[best] {
                    best = j;
                }
            }
            y.push(row[best]);
            idx.push(c * len + best);
        }
    }
    (y, idx)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn forward(layout: &Layout, params: &[f64], x: &[f64]) -> Activations {
    let k = layout.kernel;
    let mut conv_out: Vec<Vec<f64>> = Vec::with_capacity(layout.convs.len());
    let mut pooled: Vec<Vec<f64>> = Vec::with_capacity(layout.convs.len() / 2);
    let mut argmax = Vec::with_capacity(layout.convs.len() / 2);
    for (j, s) in layout.convs.iter().enumerate() {
        let input: &[f64] = if j == 0 {
            x
        } else if j % 2 == 0 {
            &pooled[j / 2 - 1]
        } else {
            &conv_out[j - 1]
        };
        let mut z = Vec::new();
        conv_forward(s, k, params, input, &mut z);
        conv_out.push(z);
        if j % 2 == 1 {
            let (y, idx) = max_pool(&conv_out[j], s.cout, s.out_len, layout.pool);
            pooled.push(y);
            argmax.push(idx);
        }
    }
    let flat = pooled.last().expect("at least one block");
    let probs = softmax(&dense_forward(layout, params, flat));
    Activations { conv_out, pooled, argmax, probs }
}

fn dense_forward(layout: &Layout, params: &[f64], flat: &[f64]) -> Vec<f64> {
    (0..layout.classes)
        .map(|c| {
            let w = &params[layout.dense_w + c * layout.dense_in..][..layout.dense_in];
            params[layout.dense_b + c] + w.iter().zip(flat).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect()
}

/// Adds `scale * d(-log p[label])/dθ` to `grad`; returns the sample loss.
fn backward(layout: &Layout, params: &[f64], x: &[f64], label: usize, scale: f64, grad: &mut [f64]) -> f64 {
    let fw = forward(layout, params, x);
    let loss = -fw.probs[label].max(f64::MIN_POSITIVE).ln();
    let k = layout.kernel;

    let dlogits: Vec<f64> = fw
        .probs
        .iter()
        .enumerate()
        .map(|(c, &p)| scale * (p - if c == label { 1.0 } else { 0.0 }))
        .collect();
    let flat = fw.pooled.last().unwrap();
    let mut dflat = vec![0.0; layout.dense_in];
    for (c, &g) in dlogits.iter().enumerate() {
        grad[layout.dense_b + c] += g;
        let wi = layout.dense_w + c * layout.dense_in;
        for f in 0..layout.dense_in {
            grad[wi + f] += g * flat[f];
            dflat[f] += g * params[wi + f];
        }
    }

    // Walk blocks backwards: unpool, then the two convs.
    let mut dpool = dflat;
    let mut dx = Vec::new();
    for b in (0..layout.convs.len() / 2).rev() {
        let second = &layout.convs[2 * b + 1];
        let first = &layout.convs[2 * b];
        let mut dz2 = vec![0.0; second.cout * second.out_len];
        for (&src, &g) in fw.argmax[b].iter().zip(&dpool) {
            dz2[src] += g;
        }
        let mut dz1 = Vec::new();
        conv_backward(second, k, params, &fw.conv_out[2 * b], &fw.conv_out[2 * b + 1], &mut dz2, grad, Some(&mut dz1));
        let input: &[f64] = if b == 0 { x } else { &fw.pooled[b - 1] };
        let want_dx = b > 0;
        conv_backward(
            first,
            k,
            params,
            input,
            &fw.conv_out[2 * b],
            &mut dz1,
            grad,
            if want_dx { Some(&mut dx) } else { None },
        );
        if want_dx {
            dpool = std::mem::take(&mut dx);
        }
    }
    loss
}

/// Flat parameter gradient.
pub type Gradients = Vec<f64>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnModel {
    arch: CnnArchitecture,
    params: Vec<f64>,
}

impl CnnModel {
    /// Fan-in scaled uniform weights `U(-sqrt(3/fan_in), sqrt(3/fan_in))`, zero biases.
    pub fn init(arch: CnnArchitecture, seed: u64) -> Result<Self> {
        let layout = Layout::new(&arch)?;
        let mut params = vec![0.0; layout.total];
        let mut rng = SeededRng::new(seed);
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, params: &mut [f64]| {
            let a = (3.0 / fan_in as f64).sqrt();
            for p in &mut params[range] {
                *p = (2.0 * rng.randr() - 1.0) * a;
            }
        };
        for s in &layout.convs {
            fill(s.w..s.b, s.cin * layout.kernel, &mut params);
        }
        fill(layout.dense_w..layout.dense_b, layout.dense_in, &mut params);
        Ok(CnnModel { arch, params })
    }

    pub fn arch(&self) -> &CnnArchitecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layout(&self) -> Layout {
        Layout::new(&self.arch).expect("validated at construction")
    }

    fn check_input(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.arch.input_len {
            return Err(Error::ShapeMismatch(format!(
                "input has {} features, model expects {}",
                v.len(),
                self.arch.input_len
            )));
        }
        Ok(())
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let layout = self.layout();
        for x in xs {
            self.check_input(x)?;
        }
        Ok(xs.par_iter().map(|x| forward(&layout, &self.params, x).probs).collect())
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, xs: &[Vec<f64>], ys: &[usize]) -> Result<f64> {
        let probs = self.predict_batch(xs)?;
        let n = xs.len().max(1) as f64;
        Ok(probs
            .iter()
            .zip(ys)
            .map(|(p, &y)| -p[y].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / n)
    }

    /// Mean cross-entropy and its gradient w.r.t. every parameter.
    pub fn loss_and_gradient(&self, xs: &[Vec<f64>], ys: &[usize]) -> Result<(f64, Gradients)> {
        for (x, &y) in xs.iter().zip(ys) {
            self.check_input(x)?;
            if y >= self.arch.classes {
                return Err(Error::ShapeMismatch(format!("label {y} for {} classes", self.arch.classes)));
            }
        }
        let layout = self.layout();
        let scale = 1.0 / xs.len().max(1) as f64;
        let idx: Vec<usize> = (0..xs.len()).collect();
        let partial: Vec<(f64, Vec<f64>)> = idx
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut g = vec![0.0; layout.total];
                let mut loss = 0.0;
                for &i in chunk {
                    loss += backward(&layout, &self.params, &xs[i], ys[i], scale, &mut g);
                }
                (loss, g)
            })
            .collect();
        let mut grad = vec![0.0; layout.total];
        let mut loss = 0.0;
        for (l, g) in partial {
            loss += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        Ok((loss * scale, grad))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            arch: self.arch.clone(),
            params: self.params.clone(),
        };
        fs::write(path, serde_json::to_vec(&ck)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_slice(&fs::read(path)?)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::BadConfig(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        let want = ck.arch.param_count()?;
        if ck.params.len() != want {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint has {} parameters, architecture needs {want}",
                ck.params.len()
            )));
        }
        Ok(CnnModel { arch: ck.arch, params: ck.params })
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    arch: CnnArchitecture,
    params: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Train fraction when a dataset is split for training and testing.
    pub split_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            split_ratio: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Full-set loss before the first update.
    pub initial_loss: f64,
    /// Mean batch loss during each epoch.
    pub epoch_losses: Vec<f64>,
    /// Full-set loss after the last update.
    pub final_loss: f64,
}

impl TrainReport {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "loss"])?;
        out.write_record(["0".to_string(), format!("{}", self.initial_loss)])?;
        for (e, l) in self.epoch_losses.iter().enumerate() {
            out.write_record([(e + 1).to_string(), format!("{l}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, cfg: &TrainConfig, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
        }
    }
}

pub fn cnn_train(train: &Dataset, arch: &CnnArchitecture, cfg: &TrainConfig) -> Result<(CnnModel, TrainReport)> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if arch.classes != train.class_count() {
        return Err(Error::ShapeMismatch(format!(
            "architecture has {} outputs, dataset has {} classes",
            arch.classes,
            train.class_count()
        )));
    }
    let (xs, ys) = monitored_vectors(train, arch.input_len)?;
    train_vectors(&xs, &ys, arch, cfg)
}

/// Training on pre-vectorized inputs.
pub fn train_vectors(
    xs: &[Vec<f64>],
    ys: &[usize],
    arch: &CnnArchitecture,
    cfg: &TrainConfig,
) -> Result<(CnnModel, TrainReport)> {
    if cfg.batch_size == 0 {
        return Err(Error::BadConfig("batch size must be positive".into()));
    }
    let mut model = CnnModel::init(arch.clone(), cfg.seed)?;
    let initial_loss = model.loss(xs, ys)?;
    let mut adam = Adam::new(model.params.len());
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = SeededRng::derived(cfg.seed, epoch as u64 + 1);
        order.shuffle(rng.inner());
        let mut sum = 0.0;
        let mut batches = 0;
        for batch in order.chunks(cfg.batch_size) {
            let bx: Vec<Vec<f64>> = batch.iter().map(|&i| xs[i].clone()).collect();
            let by: Vec<usize> = batch.iter().map(|&i| ys[i]).collect();
            let (loss, grad) = model.loss_and_gradient(&bx, &by)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::DivergedLoss { epoch, loss });
            }
            adam.step(cfg, &mut model.params, &grad);
            sum += loss;
            batches += 1;
        }
        let mean = sum / batches as f64;
        log::debug!("epoch {epoch}: loss {mean:.5}");
        epoch_losses.push(mean);
    }
    let final_loss = model.loss(xs, ys)?;
    if !final_loss.is_finite() {
        return Err(Error::DivergedLoss { epoch: cfg.epochs, loss: final_loss });
    }
    Ok((model, TrainReport { initial_loss, epoch_losses, final_loss }))
}

/// Class probabilities for one feature vector.
pub fn cnn_predict(m: &CnnModel, v: &[f64]) -> Result<Vec<f64>> {
    m.check_input(v)?;
    Ok(forward(&m.layout(), &m.params, v).probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> CnnArchitecture {
        CnnArchitecture::with_channels(32, 3, vec![2, 3])
    }

    fn random_inputs(n: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = SeededRng::new(seed);
        (0..n).map(|_| (0..len).map(|_| 2.0 * rng.randr() - 1.0).collect()).collect()
    }

    #[test]
    fn shape_calculator() {
        let a = CnnArchitecture::standard(1000, 100);
        assert_eq!(a.block_lengths().unwrap(), vec![496, 244, 118, 55]);
        assert_eq!(a.flat_len().unwrap(), 55 * 256);
        assert!(matches!(
            CnnArchitecture::standard(60, 10).block_lengths(),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // Off the ReLU kinks that zero biases create in dead regions.
        let mut m = CnnModel::init(tiny(), 3).unwrap();
        let mut rng = SeededRng::new(4);
        for p in m.params.iter_mut() {
            *p += 0.1 * (rng.randr() - 0.5);
        }
        let xs = random_inputs(4, 32, 9);
        let ys = vec![0, 2, 1, 2];
        let (_, g) = m.loss_and_gradient(&xs, &ys).unwrap();
        let h = 1e-4;
        let mut probe = m.clone();
        let mut worst: f64 = 0.0;
        for i in 0..g.len() {
            let orig = probe.params[i];
            probe.params[i] = orig + h;
            let up = probe.loss(&xs, &ys).unwrap();
            probe.params[i] = orig - h;
            let down = probe.loss(&xs, &ys).unwrap();
            probe.params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - g[i]).abs() / (fd.abs() + g[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn softmax_sums_to_one_and_is_pure() {
        let m = CnnModel::init(CnnArchitecture::with_channels(64, 5, vec![4, 4]), 1).unwrap();
        for x in random_inputs(20, 64, 2) {
            let p = cnn_predict(&m, &x).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(p.iter().all(|&v| v >= 0.0));
            assert_eq!(p, cnn_predict(&m, &x).unwrap());
        }
        assert!(matches!(cnn_predict(&m, &[0.0; 3]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn zero_input_gives_uniform_output() {
        let m = CnnModel::init(CnnArchitecture::with_channels(64, 7, vec![4, 8]), 5).unwrap();
        let p = cnn_predict(&m, &[0.0; 64]).unwrap();
        for v in p {
            assert!((v - 1.0 / 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_equals_per_sample() {
        let m = CnnModel::init(tiny(), 4).unwrap();
        let xs = random_inputs(5, 32, 6);
        let batch = m.predict_batch(&xs).unwrap();
        for (x, p) in xs.iter().zip(&batch) {
            assert_eq!(&cnn_predict(&m, x).unwrap(), p);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = CnnModel::init(tiny(), 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        assert_eq!(CnnModel::load(&path).unwrap(), m);
        std::fs::write(&path, br#"{"format":"wfbench-cnn","version":1,"arch":{"input_len":32,"channels":[2,3],"kernel":5,"pool":2,"classes":3},"params":[1.0]}"#).unwrap();
        assert!(matches!(CnnModel::load(&path), Err(Error::ShapeMismatch(_))));
    }
}
