//! Compact convolutional regressor, written from scratch.
//!
//! Three 3x3 stride-2 convolution blocks (16/32/64 filters by default) with
//! ReLU, global average pooling, and one dense layer to the output. Small
//! enough that the analytic gradients are checked against central finite
//! differences in double precision, which a deep residual stack would not
//! allow. Training is mini-batch gradient descent on mean absolute error
//! with the Adam per-parameter step-size rule, single-threaded and seeded,
//! so a fixed seed reproduces the run bit for bit.

use ndarray::{linalg::general_mat_mul, s, Array2, ArrayView2, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::blendshape::{BlendshapeVector, BLENDSHAPE_COUNT, BLENDSHAPE_MAX};
use crate::dataset::{vertical_shift_values, SessionFeatures, WINDOW_FEATURES};
use crate::error::{Error, Result};
use crate::ridge::{AugmentOptions, NormStats, TargetSelection};
use crate::window::{EchoWindow, WINDOW_FRAMES, WINDOW_ROWS};

const KERNEL: usize = 3;
const PAD: usize = 1;
/// The dense head's output is multiplied by this fixed scale so the network
/// works in unit-ish internal ranges while targets live on 0..1000; without
/// it, Adam's normalized steps would need tens of thousands of iterations
/// just to move the output bias to the target mean.
const OUT_SCALE: f64 = BLENDSHAPE_MAX;

/// One convolution block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlockCfg {
    pub filters: usize,
    pub stride: usize,
}

/// Network architecture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvConfig {
    pub blocks: Vec<ConvBlockCfg>,
    pub out_dim: usize,
}

impl Default for ConvConfig {
    fn default() -> Self {
        Self {
            blocks: vec![
                ConvBlockCfg { filters: 16, stride: 2 },
                ConvBlockCfg { filters: 32, stride: 2 },
                ConvBlockCfg { filters: 64, stride: 2 },
            ],
            out_dim: BLENDSHAPE_COUNT,
        }
    }
}

impl ConvConfig {
    /// Two tiny blocks; small enough for finite-difference gradient checks.
    pub fn tiny(out_dim: usize) -> Self {
        Self {
            blocks: vec![
                ConvBlockCfg { filters: 4, stride: 2 },
                ConvBlockCfg { filters: 4, stride: 2 },
            ],
            out_dim,
        }
    }

    /// Reduced stack for the two blink outputs.
    pub fn blink() -> Self {
        Self {
            blocks: vec![
                ConvBlockCfg { filters: 8, stride: 2 },
                ConvBlockCfg { filters: 16, stride: 2 },
                ConvBlockCfg { filters: 32, stride: 2 },
            ],
            out_dim: 2,
        }
    }

    /// Feature-map sizes per layer, starting from 60 x 84.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![(WINDOW_ROWS, WINDOW_FRAMES)];
        for b in &self.blocks {
            let (h, w) = *dims.last().unwrap();
            dims.push(conv_out_dim(h, w, b.stride));
        }
        dims
    }

    /// Channel counts per layer, starting from the single input plane.
    fn channels(&self) -> Vec<usize> {
        let mut c = vec![1usize];
        c.extend(self.blocks.iter().map(|b| b.filters));
        c
    }

    /// Flat parameter layout: per block (weights, bias), then the dense head.
    fn param_spans(&self) -> Vec<(usize, usize)> {
        let chans = self.channels();
        let mut spans = Vec::new();
        let mut offset = 0;
        for (i, b) in self.blocks.iter().enumerate() {
            let w = b.filters * chans[i] * KERNEL * KERNEL;
            spans.push((offset, w));
            offset += w;
            spans.push((offset, b.filters));
            offset += b.filters;
        }
        let c_last = *chans.last().unwrap();
        spans.push((offset, self.out_dim * c_last));
        offset += self.out_dim * c_last;
        spans.push((offset, self.out_dim));
        spans
    }

    pub fn n_params(&self) -> usize {
        let spans = self.param_spans();
        let (off, len) = *spans.last().unwrap();
        off + len
    }
}

fn conv_out_dim(h: usize, w: usize, stride: usize) -> (usize, usize) {
    (
        (h + 2 * PAD - KERNEL) / stride + 1,
        (w + 2 * PAD - KERNEL) / stride + 1,
    )
}

/// Trained network: architecture, normalization, flat parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvModel {
    pub cfg: ConvConfig,
    pub norm: NormStats,
    pub params: Vec<f64>,
}

impl ConvModel {
    pub fn out_dim(&self) -> usize {
        self.cfg.out_dim
    }

    /// Raw prediction for one window, clamped to scaled units.
    pub fn predict_raw(&self, window: &EchoWindow) -> Result<Vec<f64>> {
        if window.values.dim() != (WINDOW_ROWS, WINDOW_FRAMES) {
            return Err(Error::Shape(crate::error::ShapeError::new(format!(
                "expected {WINDOW_ROWS} x {WINDOW_FRAMES} window, got {:?}",
                window.values.dim()
            ))));
        }
        let mut x = Array2::zeros((1, WINDOW_FEATURES));
        for r in 0..WINDOW_ROWS {
            for t in 0..WINDOW_FRAMES {
                x[[0, r * WINDOW_FRAMES + t]] =
                    (window.values[[r, t]] - self.norm.mean) / self.norm.scale;
            }
        }
        let (out, _) = forward(&self.cfg, &self.params, &x);
        Ok((0..self.cfg.out_dim)
            .map(|o| out[[o, 0]].clamp(0.0, BLENDSHAPE_MAX))
            .collect())
    }

    /// Full 52-parameter prediction (the model must have 52 outputs).
    pub fn predict(&self, window: &EchoWindow) -> Result<BlendshapeVector> {
        if self.cfg.out_dim != BLENDSHAPE_COUNT {
            return Err(Error::data(format!(
                "model has {} outputs, expected {BLENDSHAPE_COUNT}",
                self.cfg.out_dim
            )));
        }
        let raw = self.predict_raw(window)?;
        Ok(BlendshapeVector::from_scaled(&raw)?.0)
    }
}

fn view(params: &[f64], off: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), &params[off..off + rows * cols]).unwrap()
}

struct LayerCache {
    /// im2col matrix [C_in * 9, B * OH * OW].
    cols: Array2<f64>,
    /// Pre-activation output [C_out, B * OH * OW].
    pre: Array2<f64>,
}

struct Cache {
    batch: usize,
    layers: Vec<LayerCache>,
    /// Pooled features [C_last, B].
    pooled: Array2<f64>,
}

fn im2col(
    input: &ArrayView2<f64>,
    b: usize,
    h: usize,
    w: usize,
    stride: usize,
    cols: &mut Array2<f64>,
) {
    let c_in = input.nrows();
    let (oh, ow) = conv_out_dim(h, w, stride);
    for ci in 0..c_in {
        let in_row = input.row(ci);
        for kh in 0..KERNEL {
            for kw in 0..KERNEL {
                let row = ci * KERNEL * KERNEL + kh * KERNEL + kw;
                let mut out_row = cols.row_mut(row);
                for bi in 0..b {
                    let in_base = bi * h * w;
                    let out_base = bi * oh * ow;
                    for oy in 0..oh {
                        let iy = (oy * stride + kh) as isize - PAD as isize;
                        if iy < 0 || iy >= h as isize {
                            for ox in 0..ow {
                                out_row[out_base + oy * ow + ox] = 0.0;
                            }
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * stride + kw) as isize - PAD as isize;
                            out_row[out_base + oy * ow + ox] = if ix < 0 || ix >= w as isize {
                                0.0
                            } else {
                                in_row[in_base + iy as usize * w + ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

fn col2im(
    dcols: &ArrayView2<f64>,
    b: usize,
    h: usize,
    w: usize,
    stride: usize,
    c_in: usize,
    dinput: &mut ArrayViewMut2<f64>,
) {
    let (oh, ow) = conv_out_dim(h, w, stride);
    dinput.fill(0.0);
    for ci in 0..c_in {
        let mut din_row = dinput.row_mut(ci);
        for kh in 0..KERNEL {
            for kw in 0..KERNEL {
                let row = ci * KERNEL * KERNEL + kh * KERNEL + kw;
                let drow = dcols.row(row);
                for bi in 0..b {
                    let in_base = bi * h * w;
                    let out_base = bi * oh * ow;
                    for oy in 0..oh {
                        let iy = (oy * stride + kh) as isize - PAD as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * stride + kw) as isize - PAD as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            din_row[in_base + iy as usize * w + ix as usize] +=
                                drow[out_base + oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Forward pass over a normalized batch `[B, 5040]`; returns `[out_dim, B]`.
fn forward(cfg: &ConvConfig, params: &[f64], x: &Array2<f64>) -> (Array2<f64>, Cache) {
    let b = x.nrows();
    let dims = cfg.layer_dims();
    let chans = cfg.channels();
    let spans = cfg.param_spans();

    // Input plane as [1, B*H*W].
    let mut act = Array2::zeros((1, b * WINDOW_FEATURES));
    for bi in 0..b {
        for f in 0..WINDOW_FEATURES {
            act[[0, bi * WINDOW_FEATURES + f]] = x[[bi, f]];
        }
    }

    let mut layers = Vec::with_capacity(cfg.blocks.len());
    for (i, blk) in cfg.blocks.iter().enumerate() {
        let (h, w) = dims[i];
        let (oh, ow) = dims[i + 1];
        let c_in = chans[i];
        let k = c_in * KERNEL * KERNEL;
        let mut cols = Array2::zeros((k, b * oh * ow));
        im2col(&act.view(), b, h, w, blk.stride, &mut cols);

        let (w_off, _) = spans[2 * i];
        let (b_off, _) = spans[2 * i + 1];
        let weights = view(params, w_off, blk.filters, k);
        let mut pre = Array2::zeros((blk.filters, b * oh * ow));
        general_mat_mul(1.0, &weights, &cols.view(), 0.0, &mut pre);
        for (c, mut row) in pre.rows_mut().into_iter().enumerate() {
            let bias = params[b_off + c];
            row.mapv_inplace(|v| v + bias);
        }

        act = pre.mapv(|v| v.max(0.0));
        layers.push(LayerCache { cols, pre });
    }

    // Global average pool to [C_last, B].
    let (fh, fw) = *dims.last().unwrap();
    let hw = fh * fw;
    let c_last = *chans.last().unwrap();
    let mut pooled = Array2::zeros((c_last, b));
    for c in 0..c_last {
        for bi in 0..b {
            let mut acc = 0.0;
            for p in 0..hw {
                acc += act[[c, bi * hw + p]];
            }
            pooled[[c, bi]] = acc / hw as f64;
        }
    }

    let n_spans = spans.len();
    let (dw_off, _) = spans[n_spans - 2];
    let (db_off, _) = spans[n_spans - 1];
    let dense_w = view(params, dw_off, cfg.out_dim, c_last);
    let mut out = Array2::zeros((cfg.out_dim, b));
    general_mat_mul(1.0, &dense_w, &pooled.view(), 0.0, &mut out);
    for (o, mut row) in out.rows_mut().into_iter().enumerate() {
        let bias = params[db_off + o];
        row.mapv_inplace(|v| (v + bias) * OUT_SCALE);
    }

    (
        out,
        Cache {
            batch: b,
            layers,
            pooled,
        },
    )
}

/// Mean absolute error and its gradient with respect to the predictions.
fn mae_loss(pred: &Array2<f64>, target: &Array2<f64>) -> (f64, Array2<f64>) {
    let count = (pred.nrows() * pred.ncols()) as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(pred.raw_dim());
    for ((i, j), p) in pred.indexed_iter() {
        let r = p - target[[i, j]];
        loss += r.abs();
        grad[[i, j]] = r.signum() / count;
    }
    (loss / count, grad)
}

/// Loss and flat parameter gradient on a normalized batch.
///
/// `x` is `[B, 5040]`, `y` is `[B, out_dim]`.
pub fn batch_loss_and_grad(
    cfg: &ConvConfig,
    params: &[f64],
    x: &Array2<f64>,
    y: &Array2<f64>,
) -> (f64, Vec<f64>) {
    let (out, cache) = forward(cfg, params, x);
    let target = y.t().to_owned();
    let (loss, dout) = mae_loss(&out, &target);
    let grad = backward(cfg, params, x, &cache, &dout);
    (loss, grad)
}

/// Loss alone (used by the finite-difference oracle).
pub fn batch_loss(cfg: &ConvConfig, params: &[f64], x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let (out, _) = forward(cfg, params, x);
    let target = y.t().to_owned();
    mae_loss(&out, &target).0
}

fn backward(
    cfg: &ConvConfig,
    params: &[f64],
    _x: &Array2<f64>,
    cache: &Cache,
    dout: &Array2<f64>,
) -> Vec<f64> {
    let b = cache.batch;
    let dims = cfg.layer_dims();
    let chans = cfg.channels();
    let spans = cfg.param_spans();
    let mut grad = vec![0.0; cfg.n_params()];

    // Dense head; the output scale multiplies straight into its gradient.
    let dout = &(dout * OUT_SCALE);
    let c_last = *chans.last().unwrap();
    let n_spans = spans.len();
    let (dw_off, dw_len) = spans[n_spans - 2];
    let (db_off, _) = spans[n_spans - 1];
    {
        let mut dw = ArrayViewMut2::from_shape((cfg.out_dim, c_last), &mut grad[dw_off..dw_off + dw_len]).unwrap();
        general_mat_mul(1.0, dout, &cache.pooled.t(), 0.0, &mut dw);
    }
    for o in 0..cfg.out_dim {
        grad[db_off + o] = dout.row(o).sum();
    }
    let dense_w = view(params, dw_off, cfg.out_dim, c_last);
    let mut dpooled = Array2::zeros((c_last, b));
    general_mat_mul(1.0, &dense_w.t(), dout, 0.0, &mut dpooled);

    // Un-pool onto the last feature map.
    let (fh, fw) = *dims.last().unwrap();
    let hw = fh * fw;
    let mut dact = Array2::zeros((c_last, b * hw));
    for c in 0..c_last {
        for bi in 0..b {
            let g = dpooled[[c, bi]] / hw as f64;
            for p in 0..hw {
                dact[[c, bi * hw + p]] = g;
            }
        }
    }

    // Walk the blocks backwards.
    for i in (0..cfg.blocks.len()).rev() {
        let blk = cfg.blocks[i];
        let (h, w) = dims[i];
        let c_in = chans[i];
        let k = c_in * KERNEL * KERNEL;
        let layer = &cache.layers[i];

        // Through the ReLU.
        let mut dpre = dact;
        for ((c, p), v) in dpre.indexed_iter_mut() {
            if layer.pre[[c, p]] <= 0.0 {
                *v = 0.0;
            }
        }

        let (w_off, w_len) = spans[2 * i];
        let (b_off, _) = spans[2 * i + 1];
        {
            let mut dw = ArrayViewMut2::from_shape((blk.filters, k), &mut grad[w_off..w_off + w_len]).unwrap();
            general_mat_mul(1.0, &dpre.view(), &layer.cols.t(), 0.0, &mut dw);
        }
        for c in 0..blk.filters {
            grad[b_off + c] = dpre.row(c).sum();
        }

        if i == 0 {
            break; // no gradient flows to the input itself
        }
        let weights = view(params, w_off, blk.filters, k);
        let mut dcols = Array2::zeros((k, dpre.ncols()));
        general_mat_mul(1.0, &weights.t(), &dpre.view(), 0.0, &mut dcols);
        let mut dinput = Array2::zeros((c_in, b * h * w));
        col2im(&dcols.view(), b, h, w, blk.stride, c_in, &mut dinput.view_mut());
        dact = dinput;
    }

    grad
}

/// Smallest |pre-activation| across the network for a batch; the
/// finite-difference oracle is only exact when no ReLU kink sits within the
/// probe step, so checks assert this margin first.
pub fn min_abs_preactivation(cfg: &ConvConfig, params: &[f64], x: &Array2<f64>) -> f64 {
    let (_, cache) = forward(cfg, params, x);
    cache
        .layers
        .iter()
        .flat_map(|l| l.pre.iter())
        .fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

/// A deterministic gradient-check problem: tiny config, sparse inputs so
/// almost every pre-activation sits at its bias, biases pushed away from
/// zero. Panics if the setup ever drifts onto a kink.
pub fn gradient_check_setup() -> (ConvConfig, Vec<f64>, Array2<f64>, Array2<f64>) {
    let cfg = ConvConfig::tiny(5);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut params = init_params(&cfg, &mut rng);
    // Push the conv biases away from zero so inactive positions are far
    // from the ReLU kink.
    let spans = cfg.param_spans();
    for (i, _) in cfg.blocks.iter().enumerate() {
        let (b_off, b_len) = spans[2 * i + 1];
        for (j, p) in params[b_off..b_off + b_len].iter_mut().enumerate() {
            *p = if j % 2 == 0 { 0.35 } else { -0.3 };
        }
    }
    let b = 8;
    // Sparse inputs: one random 8x8 patch per window.
    let mut x = Array2::zeros((b, WINDOW_FEATURES));
    for bi in 0..b {
        let r0 = rng.gen_range(0..WINDOW_ROWS - 8);
        let t0 = rng.gen_range(0..WINDOW_FRAMES - 8);
        for r in r0..r0 + 8 {
            for t in t0..t0 + 8 {
                x[[bi, r * WINDOW_FRAMES + t]] = rng.gen_range(0.5..1.5)
                    * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            }
        }
    }
    let y = Array2::from_shape_fn((b, 5), |_| rng.gen_range(100.0..900.0));

    let margin = min_abs_preactivation(&cfg, &params, &x);
    assert!(
        margin > 1e-3,
        "gradient-check setup too close to a ReLU kink (margin {margin:.2e})"
    );
    (cfg, params, x, y)
}

/// Worst relative error between analytic gradients and central finite
/// differences over a spread of probe parameters.
pub fn gradient_check_worst_error(
    cfg: &ConvConfig,
    params: &[f64],
    x: &Array2<f64>,
    y: &Array2<f64>,
) -> f64 {
    let (_, grad) = batch_loss_and_grad(cfg, params, x, y);
    let spans = cfg.param_spans();
    let mut probes: Vec<usize> = spans.iter().map(|(off, _)| *off).collect();
    for i in 0..40 {
        probes.push((i * 131) % params.len());
    }
    probes.sort_unstable();
    probes.dedup();

    let eps = 1e-5;
    let mut worst = 0.0f64;
    for &pi in &probes {
        let mut plus = params.to_vec();
        plus[pi] += eps;
        let mut minus = params.to_vec();
        minus[pi] -= eps;
        let fd = (batch_loss(cfg, &plus, x, y) - batch_loss(cfg, &minus, x, y)) / (2.0 * eps);
        let denom = fd.abs().max(grad[pi].abs()).max(1e-8);
        worst = worst.max((fd - grad[pi]).abs() / denom);
    }
    worst
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Adam step size.
    pub lr: f64,
    /// Per-epoch learning-rate multiplier (1.0 = constant).
    pub lr_decay: f64,
    pub seed: u64,
    /// Take every `stride`-th window of each session.
    pub window_stride: usize,
    pub augment: AugmentOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 6,
            batch_size: 32,
            lr: 3e-3,
            lr_decay: 0.7,
            seed: 0,
            window_stride: 1,
            augment: AugmentOptions::default(),
        }
    }
}

/// Loss trace per epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let b1c = 1.0 - Self::BETA1.powi(self.t as i32);
        let b2c = 1.0 - Self::BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let mh = self.m[i] / b1c;
            let vh = self.v[i] / b2c;
            params[i] -= lr * mh / (vh.sqrt() + Self::EPS);
        }
    }
}

fn init_params(cfg: &ConvConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let spans = cfg.param_spans();
    let chans = cfg.channels();
    let mut params = vec![0.0; cfg.n_params()];
    for (i, blk) in cfg.blocks.iter().enumerate() {
        let fan_in = (chans[i] * KERNEL * KERNEL) as f64;
        let std = (2.0 / fan_in).sqrt();
        let (off, len) = spans[2 * i];
        for p in params[off..off + len].iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *p = std * z;
        }
        let _ = blk;
    }
    let c_last = *chans.last().unwrap();
    let n_spans = spans.len();
    let (dw_off, dw_len) = spans[n_spans - 2];
    let std = (1.0 / c_last as f64).sqrt();
    for p in params[dw_off..dw_off + dw_len].iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *p = std * z;
    }
    params
}

fn collect_pairs(sessions: &[SessionFeatures], stride: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (si, s) in sessions.iter().enumerate() {
        for w in (0..s.n_windows()).step_by(stride.max(1)) {
            pairs.push((si, w));
        }
    }
    pairs
}

fn fill_example(
    sessions: &[SessionFeatures],
    pair: (usize, usize),
    augment: &AugmentOptions,
    rng: &mut ChaCha8Rng,
    x_row: &mut [f64],
    y_row: &mut [f64],
    target_idx: &[usize],
) {
    let (si, w) = pair;
    let features = &sessions[si];
    features.fill_window(w, x_row);
    if augment.enabled() {
        let mut values = Array2::zeros((WINDOW_ROWS, WINDOW_FRAMES));
        for r in 0..WINDOW_ROWS {
            for t in 0..WINDOW_FRAMES {
                values[[r, t]] = x_row[r * WINDOW_FRAMES + t];
            }
        }
        if augment.vertical_shift_max != 0 {
            let k = rng.gen_range(-augment.vertical_shift_max..=augment.vertical_shift_max);
            values = vertical_shift_values(&values, k).expect("shift within budget");
        }
        if let Some((bank, scale)) = &augment.motion {
            if !bank.is_empty() && *scale != 0.0 {
                let excerpt = bank.sample(rng);
                values += &(excerpt * *scale);
            }
        }
        for r in 0..WINDOW_ROWS {
            for t in 0..WINDOW_FRAMES {
                x_row[r * WINDOW_FRAMES + t] = values[[r, t]];
            }
        }
    }
    let frame = features.window_frame(w);
    for (c, &j) in target_idx.iter().enumerate() {
        y_row[c] = features.targets[[frame, j]];
    }
}

/// Train from scratch on whole sessions.
pub fn train_conv(
    sessions: &[SessionFeatures],
    model_cfg: &ConvConfig,
    train_cfg: &TrainConfig,
    targets: &TargetSelection,
) -> Result<(ConvModel, Vec<EpochStats>)> {
    let target_idx = targets.indices();
    if target_idx.len() != model_cfg.out_dim {
        return Err(Error::data(format!(
            "target selection has {} columns but the model outputs {}",
            target_idx.len(),
            model_cfg.out_dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let params = init_params(model_cfg, &mut rng);
    let norm = compute_norm(sessions, train_cfg.window_stride);
    let model = ConvModel {
        cfg: model_cfg.clone(),
        norm,
        params,
    };
    continue_training(model, sessions, train_cfg, &target_idx, &mut rng)
}

/// Continue training an existing model (reduced learning rate is the
/// caller's choice). The input model is never mutated; zero epochs returns
/// an identical copy. Normalization statistics stay those of the base model.
pub fn fine_tune(
    model: &ConvModel,
    sessions: &[SessionFeatures],
    train_cfg: &TrainConfig,
    targets: &TargetSelection,
) -> Result<(ConvModel, Vec<EpochStats>)> {
    let target_idx = targets.indices();
    if target_idx.len() != model.cfg.out_dim {
        return Err(Error::data(format!(
            "target selection has {} columns but the model outputs {}",
            target_idx.len(),
            model.cfg.out_dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    continue_training(model.clone(), sessions, train_cfg, &target_idx, &mut rng)
}

fn compute_norm(sessions: &[SessionFeatures], stride: usize) -> NormStats {
    let mut sum = 0.0;
    let mut sq = 0.0;
    let mut count = 0usize;
    let mut row = vec![0.0; WINDOW_FEATURES];
    for s in sessions {
        for w in (0..s.n_windows()).step_by(stride.max(1)) {
            s.fill_window(w, &mut row);
            for &v in &row {
                sum += v;
                sq += v * v;
            }
            count += WINDOW_FEATURES;
        }
    }
    if count == 0 {
        return NormStats::identity();
    }
    let mean = sum / count as f64;
    let var = (sq / count as f64 - mean * mean).max(0.0);
    NormStats {
        mean,
        scale: var.sqrt().max(1e-12),
    }
}

fn continue_training(
    mut model: ConvModel,
    sessions: &[SessionFeatures],
    cfg: &TrainConfig,
    target_idx: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<(ConvModel, Vec<EpochStats>)> {
    let pairs = collect_pairs(sessions, cfg.window_stride);
    if pairs.is_empty() && cfg.epochs > 0 {
        return Err(Error::data("no training windows"));
    }
    let out_dim = model.cfg.out_dim;
    let bsz = cfg.batch_size.max(1);
    let mut adam = Adam::new(model.params.len());
    let mut stats = Vec::with_capacity(cfg.epochs);
    let mut lr = cfg.lr;
    let inv_scale = 1.0 / model.norm.scale;

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for epoch in 0..cfg.epochs {
        // Fisher-Yates with the run RNG keeps batch composition seeded.
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        let mut x = Array2::zeros((bsz, WINDOW_FEATURES));
        let mut y = Array2::zeros((bsz, out_dim));
        let mut start = 0;
        while start < order.len() {
            let take = bsz.min(order.len() - start);
            for i in 0..take {
                let pair = pairs[order[start + i]];
                let (mut xr, mut yr) = (x.row_mut(i), y.row_mut(i));
                fill_example(
                    sessions,
                    pair,
                    &cfg.augment,
                    rng,
                    xr.as_slice_mut().unwrap(),
                    yr.as_slice_mut().unwrap(),
                    target_idx,
                );
            }
            let xb = x
                .slice(s![0..take, ..])
                .mapv(|v| (v - model.norm.mean) * inv_scale);
            let yb = y.slice(s![0..take, ..]).to_owned();
            let (loss, grad) = batch_loss_and_grad(&model.cfg, &model.params, &xb, &yb);
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "loss became {loss} in epoch {epoch} (batch {batches}, lr {lr:.2e})"
                )));
            }
            adam.step(&mut model.params, &grad, lr);
            epoch_loss += loss;
            batches += 1;
            start += take;
        }
        stats.push(EpochStats {
            epoch,
            loss: epoch_loss / batches.max(1) as f64,
            lr,
        });
        lr *= cfg.lr_decay;
    }
    Ok((model, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn toy_sessions(n_frames: usize, seed: u64) -> Vec<SessionFeatures> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let diffs = Array2::from_shape_fn((WINDOW_ROWS, n_frames - 1), |_| rng.gen_range(-1.0..1.0));
        let mut targets = Array2::zeros((n_frames, BLENDSHAPE_COUNT));
        for k in 1..n_frames {
            let probe: f64 = (0..WINDOW_ROWS).map(|r| diffs[[r, k - 1]]).sum();
            for j in 0..BLENDSHAPE_COUNT {
                targets[[k, j]] = (500.0 + 30.0 * probe).clamp(0.0, 1000.0);
            }
        }
        vec![SessionFeatures {
            session_id: "toy".into(),
            diffs,
            targets,
        }]
    }

    #[test]
    fn forward_shapes_are_total() {
        let cfg = ConvConfig::default();
        let dims = cfg.layer_dims();
        assert_eq!(dims, vec![(60, 84), (30, 42), (15, 21), (8, 11)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = init_params(&cfg, &mut rng);
        let x = Array2::zeros((3, WINDOW_FEATURES));
        let (out, _) = forward(&cfg, &params, &x);
        assert_eq!(out.dim(), (52, 3));
    }

    #[test]
    fn predict_rejects_bad_shapes_before_arithmetic() {
        let cfg = ConvConfig::tiny(52);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = ConvModel {
            params: init_params(&cfg, &mut rng),
            cfg,
            norm: NormStats::identity(),
        };
        let bad = EchoWindow {
            values: Array2::zeros((59, 84)),
            frame_index: 84,
        };
        assert!(model.predict_raw(&bad).is_err());
        let good = EchoWindow::zeros(84);
        let out = model.predict_raw(&good).unwrap();
        assert_eq!(out.len(), 52);
        assert!(out.iter().all(|v| (0.0..=1000.0).contains(v)));
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let (cfg, params, x, y) = gradient_check_setup();
        let worst = gradient_check_worst_error(&cfg, &params, &x, &y);
        assert!(worst < 1e-4, "worst relative gradient error {worst:.3e}");
    }

    #[test]
    fn overfits_a_handful_of_windows() {
        // Memorization check: 32 windows, the default architecture (its
        // 64-channel pooled features can interpolate 32 examples), enough
        // epochs to drive the training MAE under 5.
        let sessions = toy_sessions(84 + 32, 3);
        assert_eq!(sessions[0].n_windows(), 32);
        let cfg = ConvConfig::default();
        let train = TrainConfig {
            epochs: 320,
            batch_size: 8,
            lr: 1e-2,
            lr_decay: 0.99,
            seed: 4,
            window_stride: 1,
            augment: AugmentOptions::default(),
        };
        let (model, stats) = train_conv(&sessions, &cfg, &train, &TargetSelection::All).unwrap();

        let f = &sessions[0];
        let mut total = 0.0;
        for w in 0..f.n_windows() {
            let pred = model.predict(&f.window(w)).unwrap();
            total += crate::metrics::mae(&pred, &f.target(w));
        }
        let mae = total / f.n_windows() as f64;
        assert!(
            mae < 5.0,
            "training MAE {mae} (final loss {})",
            stats.last().unwrap().loss
        );
    }

    #[test]
    fn seeded_training_is_bit_reproducible() {
        let sessions = toy_sessions(100, 5);
        let cfg = ConvConfig::tiny(52);
        let train = TrainConfig {
            epochs: 3,
            batch_size: 4,
            lr: 1e-3,
            lr_decay: 1.0,
            seed: 9,
            window_stride: 1,
            augment: AugmentOptions::default(),
        };
        let (m1, s1) = train_conv(&sessions, &cfg, &train, &TargetSelection::All).unwrap();
        let (m2, s2) = train_conv(&sessions, &cfg, &train, &TargetSelection::All).unwrap();
        assert_eq!(m1.params, m2.params);
        assert_eq!(s1.last().unwrap().loss.to_bits(), s2.last().unwrap().loss.to_bits());
    }

    #[test]
    fn zero_epoch_fine_tune_is_identity_and_never_mutates() {
        let sessions = toy_sessions(100, 6);
        let cfg = ConvConfig::tiny(52);
        let train = TrainConfig {
            epochs: 2,
            batch_size: 4,
            lr: 1e-3,
            lr_decay: 1.0,
            seed: 10,
            window_stride: 1,
            augment: AugmentOptions::default(),
        };
        let (base, _) = train_conv(&sessions, &cfg, &train, &TargetSelection::All).unwrap();
        let snapshot = base.clone();

        let zero = TrainConfig {
            epochs: 0,
            ..train.clone()
        };
        let (same, stats) = fine_tune(&base, &sessions, &zero, &TargetSelection::All).unwrap();
        assert_eq!(same.params, base.params);
        assert!(stats.is_empty());

        let more = TrainConfig {
            epochs: 1,
            lr: 1e-4,
            ..train
        };
        let (tuned, _) = fine_tune(&base, &sessions, &more, &TargetSelection::All).unwrap();
        assert_ne!(tuned.params, base.params);
        // The base model object is untouched.
        assert_eq!(base, snapshot);
    }

    #[test]
    fn batch_composition_does_not_change_predictions() {
        let sessions = toy_sessions(100, 7);
        let cfg = ConvConfig::tiny(52);
        let train = TrainConfig {
            epochs: 1,
            batch_size: 4,
            lr: 1e-3,
            lr_decay: 1.0,
            seed: 11,
            window_stride: 1,
            augment: AugmentOptions::default(),
        };
        let (model, _) = train_conv(&sessions, &cfg, &train, &TargetSelection::All).unwrap();
        let f = &sessions[0];
        let w = f.window(3);
        let alone = model.predict(&w).unwrap();
        // Predicting the same window repeatedly or alongside others is pure.
        let again = model.predict(&w).unwrap();
        assert_eq!(alone, again);
    }
}
