//! Closed-form ridge regression from flattened windows to blendshapes.
//!
//! The trainer accumulates raw second moments per session (Gram matrix,
//! feature sums, target cross products), so cross-validation folds assemble
//! their normal equations by adding cached per-session statistics instead of
//! re-streaming the data. Input standardization is folded in algebraically:
//! the raw Gram converts exactly to the normalized-feature Gram through
//! rank-one updates, so the solved system is identical to one built from
//! explicitly normalized features. The bias is unpenalized, which gives the
//! textbook limits: lambda -> 0 reproduces least squares, lambda -> infinity
//! drives the weights to zero and predictions to the target mean.

use ndarray::{linalg::general_mat_mul, s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blendshape::{BlendshapeVector, BLENDSHAPE_COUNT, BLENDSHAPE_MAX};
use crate::dataset::{vertical_shift_values, MotionBank, SessionFeatures, WINDOW_FEATURES};
use crate::error::{Error, Result};
use crate::linalg::{accumulate_gram_upper, cholesky_in_place, mirror_upper_to_lower, solve_cholesky};
use crate::window::{EchoWindow, WINDOW_FRAMES, WINDOW_ROWS};

/// Scalar input standardization, stored with every model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub scale: f64,
}

impl NormStats {
    pub fn identity() -> Self {
        Self {
            mean: 0.0,
            scale: 1.0,
        }
    }
}

/// Augmentation settings shared by the trainers.
#[derive(Debug, Clone, Default)]
pub struct AugmentOptions {
    /// Maximum vertical shift in bins; 0 disables the augmentation.
    pub vertical_shift_max: i32,
    /// Additive motion excerpts and their scale.
    pub motion: Option<(MotionBank, f64)>,
    /// Seed for the augmentation draws.
    pub seed: u64,
}

impl AugmentOptions {
    pub fn enabled(&self) -> bool {
        self.vertical_shift_max != 0 || self.motion.is_some()
    }
}

/// Ridge training options.
#[derive(Debug, Clone)]
pub struct RidgeOptions {
    pub lambda: f64,
    /// Take every `stride`-th window (1 = all).
    pub window_stride: usize,
    pub augment: AugmentOptions,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        Self {
            lambda: default_lambda(),
            window_stride: 1,
            augment: AugmentOptions::default(),
        }
    }
}

/// Default ridge penalty, calibrated on the default simulator scene; on
/// standardized features the Gram diagonal is about the window count, so
/// this is a mild penalty.
pub fn default_lambda() -> f64 {
    10.0
}

/// Trained ridge model.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    /// `[5040 x out_dim]` weights on standardized features.
    pub weights: Array2<f64>,
    /// Per-output intercepts.
    pub bias: Vec<f64>,
    pub lambda: f64,
    pub norm: NormStats,
}

impl RidgeModel {
    pub fn out_dim(&self) -> usize {
        self.bias.len()
    }

    /// Predict raw outputs for a flattened window (row-major 60 x 84).
    pub fn predict_flat(&self, flat: &[f64]) -> Result<Vec<f64>> {
        if flat.len() != WINDOW_FEATURES {
            return Err(Error::Shape(crate::error::ShapeError::new(format!(
                "expected {WINDOW_FEATURES} features, got {}",
                flat.len()
            ))));
        }
        let mut out = self.bias.clone();
        let inv = 1.0 / self.norm.scale;
        for (f, &x) in flat.iter().enumerate() {
            let xn = (x - self.norm.mean) * inv;
            if xn != 0.0 {
                let row = self.weights.row(f);
                for (o, w) in out.iter_mut().zip(row.iter()) {
                    *o += w * xn;
                }
            }
        }
        Ok(out)
    }

    /// Predict a blendshape frame, clamped to [0, 1000].
    pub fn predict(&self, window: &EchoWindow) -> Result<BlendshapeVector> {
        if window.values.dim() != (WINDOW_ROWS, WINDOW_FRAMES) {
            return Err(Error::Shape(crate::error::ShapeError::new(format!(
                "expected {WINDOW_ROWS} x {WINDOW_FRAMES} window, got {:?}",
                window.values.dim()
            ))));
        }
        if self.out_dim() != BLENDSHAPE_COUNT {
            return Err(Error::data(format!(
                "model has {} outputs, expected {BLENDSHAPE_COUNT}",
                self.out_dim()
            )));
        }
        let mut flat = vec![0.0; WINDOW_FEATURES];
        for r in 0..WINDOW_ROWS {
            for t in 0..WINDOW_FRAMES {
                flat[r * WINDOW_FRAMES + t] = window.values[[r, t]];
            }
        }
        let raw = self.predict_flat(&flat)?;
        let clamped: Vec<f64> = raw.iter().map(|v| v.clamp(0.0, BLENDSHAPE_MAX)).collect();
        Ok(BlendshapeVector::from_scaled(&clamped)?.0)
    }
}

/// Raw per-session training statistics; fold assembly just adds these.
pub struct SessionGram {
    pub session_id: String,
    /// `[d x d]` raw feature second moments (full symmetric).
    pub gram: Array2<f64>,
    /// `[d x out_dim]` raw feature-target cross products.
    pub xty: Array2<f64>,
    /// Per-feature sums.
    pub feat_sum: Vec<f64>,
    /// Per-output target sums.
    pub target_sum: Vec<f64>,
    /// Windows accumulated.
    pub n: usize,
}

/// Selects which target columns a model regresses (all 52, or a subset such
/// as the two blink parameters).
#[derive(Debug, Clone)]
pub enum TargetSelection {
    All,
    Columns(Vec<usize>),
}

impl TargetSelection {
    pub fn indices(&self) -> Vec<usize> {
        match self {
            TargetSelection::All => (0..BLENDSHAPE_COUNT).collect(),
            TargetSelection::Columns(c) => c.clone(),
        }
    }
}

const GRAM_BATCH: usize = 512;

/// Stream a session's windows (with augmentation) into raw statistics.
pub fn session_gram(
    features: &SessionFeatures,
    opts: &RidgeOptions,
    targets: &TargetSelection,
) -> SessionGram {
    let d = WINDOW_FEATURES;
    let target_idx = targets.indices();
    let out_dim = target_idx.len();
    let mut gram = Array2::zeros((d, d));
    let mut xty = Array2::zeros((d, out_dim));
    let mut feat_sum = vec![0.0; d];
    let mut target_sum = vec![0.0; out_dim];
    let mut n = 0usize;

    let windows: Vec<usize> = (0..features.n_windows())
        .step_by(opts.window_stride.max(1))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.augment.seed);

    let mut batch = Array2::zeros((GRAM_BATCH, d));
    let mut batch_y = Array2::zeros((GRAM_BATCH, out_dim));
    let mut fill = 0usize;

    let flush = |batch: &mut Array2<f64>,
                     batch_y: &mut Array2<f64>,
                     fill: &mut usize,
                     gram: &mut Array2<f64>,
                     xty: &mut Array2<f64>,
                     feat_sum: &mut [f64],
                     target_sum: &mut [f64]| {
        if *fill == 0 {
            return;
        }
        let x = batch.slice(s![0..*fill, ..]);
        let y = batch_y.slice(s![0..*fill, ..]);
        accumulate_gram_upper(gram, &x);
        general_mat_mul(1.0, &x.t(), &y, 1.0, xty);
        for row in x.rows() {
            for (s, v) in feat_sum.iter_mut().zip(row.iter()) {
                *s += v;
            }
        }
        for row in y.rows() {
            for (s, v) in target_sum.iter_mut().zip(row.iter()) {
                *s += v;
            }
        }
        *fill = 0;
    };

    for &w in &windows {
        {
            let mut row = batch.row_mut(fill);
            features.fill_window(w, row.as_slice_mut().expect("contiguous row"));
        }
        if opts.augment.enabled() {
            let values = window_from_flat(batch.row(fill).as_slice().unwrap());
            let mut values = values;
            if opts.augment.vertical_shift_max != 0 {
                let k = rng.gen_range(-opts.augment.vertical_shift_max..=opts.augment.vertical_shift_max);
                values = vertical_shift_values(&values, k).expect("shift within budget");
            }
            if let Some((bank, scale)) = &opts.augment.motion {
                if !bank.is_empty() && *scale != 0.0 {
                    let excerpt = bank.sample(&mut rng);
                    values += &(excerpt * *scale);
                }
            }
            let mut row = batch.row_mut(fill);
            let out = row.as_slice_mut().unwrap();
            for r in 0..WINDOW_ROWS {
                for t in 0..WINDOW_FRAMES {
                    out[r * WINDOW_FRAMES + t] = values[[r, t]];
                }
            }
        }
        let frame = features.window_frame(w);
        for (c, &j) in target_idx.iter().enumerate() {
            batch_y[[fill, c]] = features.targets[[frame, j]];
        }
        fill += 1;
        n += 1;
        if fill == GRAM_BATCH {
            flush(&mut batch, &mut batch_y, &mut fill, &mut gram, &mut xty, &mut feat_sum, &mut target_sum);
        }
    }
    flush(&mut batch, &mut batch_y, &mut fill, &mut gram, &mut xty, &mut feat_sum, &mut target_sum);
    mirror_upper_to_lower(&mut gram);

    SessionGram {
        session_id: features.session_id.clone(),
        gram,
        xty,
        feat_sum,
        target_sum,
        n,
    }
}

fn window_from_flat(flat: &[f64]) -> Array2<f64> {
    let mut values = Array2::zeros((WINDOW_ROWS, WINDOW_FRAMES));
    for r in 0..WINDOW_ROWS {
        for t in 0..WINDOW_FRAMES {
            values[[r, t]] = flat[r * WINDOW_FRAMES + t];
        }
    }
    values
}

/// Solve the normal equations from cached per-session statistics.
pub fn train_ridge_from_grams(grams: &[&SessionGram], lambda: f64) -> Result<RidgeModel> {
    if grams.is_empty() {
        return Err(Error::data("no training sessions"));
    }
    if lambda < 0.0 {
        return Err(Error::data("lambda must be >= 0"));
    }
    let d = WINDOW_FEATURES;
    let out_dim = grams[0].xty.ncols();
    let n_total: usize = grams.iter().map(|g| g.n).sum();
    if n_total == 0 {
        return Err(Error::data("no training windows"));
    }

    // Standardization statistics over all raw feature entries.
    let entry_count = (n_total * d) as f64;
    let entry_sum: f64 = grams.iter().map(|g| g.feat_sum.iter().sum::<f64>()).sum();
    let sq_sum: f64 = grams
        .iter()
        .map(|g| (0..d).map(|i| g.gram[[i, i]]).sum::<f64>())
        .sum();
    let mean = entry_sum / entry_count;
    let var = (sq_sum / entry_count - mean * mean).max(0.0);
    let scale = var.sqrt().max(1e-12);
    let norm = NormStats { mean, scale };

    // Assemble the (d+1) x (d+1) system on normalized features with an
    // unpenalized bias.
    let da = d + 1;
    let mut a = Array2::zeros((da, da));
    for g in grams {
        a.slice_mut(s![0..d, 0..d]).zip_mut_with(&g.gram, |acc, &v| *acc += v);
    }
    let mut s_vec = vec![0.0; d];
    for g in grams {
        for (acc, v) in s_vec.iter_mut().zip(&g.feat_sum) {
            *acc += v;
        }
    }
    let nf = n_total as f64;
    let inv_s2 = 1.0 / (scale * scale);
    for i in 0..d {
        for j in 0..d {
            let v = a[[i, j]];
            a[[i, j]] = (v - mean * s_vec[j] - mean * s_vec[i] + nf * mean * mean) * inv_s2;
        }
        a[[i, i]] += lambda;
    }
    for i in 0..d {
        let c = (s_vec[i] - nf * mean) / scale;
        a[[i, d]] = c;
        a[[d, i]] = c;
    }
    a[[d, d]] = nf;

    let mut b = Array2::zeros((da, out_dim));
    for g in grams {
        b.slice_mut(s![0..d, ..]).zip_mut_with(&g.xty, |acc, &v| *acc += v);
    }
    let mut t_vec = vec![0.0; out_dim];
    for g in grams {
        for (acc, v) in t_vec.iter_mut().zip(&g.target_sum) {
            *acc += v;
        }
    }
    for i in 0..d {
        for o in 0..out_dim {
            b[[i, o]] = (b[[i, o]] - mean * t_vec[o]) / scale;
        }
    }
    for o in 0..out_dim {
        b[[d, o]] = t_vec[o];
    }

    cholesky_in_place(&mut a).map_err(|_| {
        Error::data(
            "normal matrix is singular; use lambda > 0 to regularize the solve",
        )
    })?;
    let sol = solve_cholesky(&a, &b);

    Ok(RidgeModel {
        weights: sol.slice(s![0..d, ..]).to_owned(),
        bias: sol.row(d).to_vec(),
        lambda,
        norm,
    })
}

/// Train on whole sessions: accumulate per-session statistics, then solve.
pub fn train_ridge(
    sessions: &[SessionFeatures],
    opts: &RidgeOptions,
    targets: &TargetSelection,
) -> Result<RidgeModel> {
    let grams: Vec<SessionGram> = sessions
        .iter()
        .map(|s| session_gram(s, opts, targets))
        .collect();
    let refs: Vec<&SessionGram> = grams.iter().collect();
    train_ridge_from_grams(&refs, opts.lambda)
}

/// Batched raw predictions for all (strided) windows of a session.
pub fn predict_session(
    model: &RidgeModel,
    features: &SessionFeatures,
    stride: usize,
) -> (Vec<usize>, Array2<f64>) {
    let d = WINDOW_FEATURES;
    let windows: Vec<usize> = (0..features.n_windows()).step_by(stride.max(1)).collect();
    let out_dim = model.out_dim();
    let mut preds = Array2::zeros((windows.len(), out_dim));

    let mut batch = Array2::zeros((GRAM_BATCH, d));
    let inv = 1.0 / model.norm.scale;
    let mut row_of = 0usize;
    while row_of < windows.len() {
        let take = GRAM_BATCH.min(windows.len() - row_of);
        for i in 0..take {
            let mut row = batch.row_mut(i);
            features.fill_window(windows[row_of + i], row.as_slice_mut().unwrap());
        }
        let mut x = batch.slice_mut(s![0..take, ..]);
        x.mapv_inplace(|v| (v - model.norm.mean) * inv);
        let mut out = preds.slice_mut(s![row_of..row_of + take, ..]);
        general_mat_mul(1.0, &x.view(), &model.weights.view(), 0.0, &mut out);
        for i in 0..take {
            for o in 0..out_dim {
                preds[[row_of + i, o]] += model.bias[o];
            }
        }
        row_of += take;
    }
    preds.mapv_inplace(|v| v.clamp(0.0, BLENDSHAPE_MAX));
    (windows, preds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn toy_features(n_frames: usize, seed: u64) -> SessionFeatures {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let diffs = Array2::from_shape_fn((WINDOW_ROWS, n_frames - 1), |_| rng.gen_range(-1.0..1.0));
        // Targets linear in a handful of diff columns so ridge can recover
        // them through the window.
        let mut targets = Array2::zeros((n_frames, BLENDSHAPE_COUNT));
        for k in 1..n_frames {
            let probe: f64 = (0..WINDOW_ROWS).map(|r| diffs[[r, k - 1]]).sum();
            for j in 0..BLENDSHAPE_COUNT {
                targets[[k, j]] = 500.0 + 40.0 * probe * ((j % 5) as f64 - 2.0);
            }
        }
        targets.mapv_inplace(|v| v.clamp(0.0, 1000.0));
        SessionFeatures {
            session_id: format!("toy-{seed}"),
            diffs,
            targets,
        }
    }

    #[test]
    fn constant_targets_solve_to_the_intercept() {
        let mut f = toy_features(200, 1);
        f.targets.fill(321.0);
        let model = train_ridge(
            &[f.clone()],
            &RidgeOptions {
                lambda: 1e-6,
                ..RidgeOptions::default()
            },
            &TargetSelection::All,
        )
        .unwrap();
        let pred = model.predict(&f.window(5)).unwrap();
        for j in 0..BLENDSHAPE_COUNT {
            assert!((pred.get(j) - 321.0).abs() < 1e-6, "output {j}: {}", pred.get(j));
        }
    }

    #[test]
    fn huge_lambda_predicts_the_target_mean() {
        let f = toy_features(300, 2);
        let model = train_ridge(
            &[f.clone()],
            &RidgeOptions {
                lambda: 1e12,
                ..RidgeOptions::default()
            },
            &TargetSelection::All,
        )
        .unwrap();
        let w_norm: f64 = model.weights.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(w_norm < 1e-3, "weight norm {w_norm}");
        let n = f.n_windows();
        let mut mean0 = 0.0;
        for w in 0..n {
            mean0 += f.targets[[f.window_frame(w), 0]];
        }
        mean0 /= n as f64;
        let pred = model.predict(&f.window(3)).unwrap();
        assert!((pred.get(0) - mean0).abs() < 0.5, "{} vs {mean0}", pred.get(0));
    }

    #[test]
    fn recovers_a_linear_map_on_clean_data() {
        let f = toy_features(400, 3);
        let model = train_ridge(
            &[f.clone()],
            &RidgeOptions {
                lambda: 1e-6,
                ..RidgeOptions::default()
            },
            &TargetSelection::All,
        )
        .unwrap();
        let mut worst = 0.0f64;
        for w in (0..f.n_windows()).step_by(7) {
            let pred = model.predict(&f.window(w)).unwrap();
            let gt = f.target(w);
            worst = worst.max(crate::metrics::mae(&pred, &gt));
        }
        assert!(worst < 1.0, "training MAE {worst}");
    }

    #[test]
    fn predict_matches_a_manual_matrix_product() {
        let f = toy_features(150, 4);
        let model = train_ridge(&[f.clone()], &RidgeOptions::default(), &TargetSelection::All).unwrap();
        let w = f.window(9);
        let fast = model.predict(&w).unwrap();

        // Manual route: normalize, dot each weight column, add bias, clamp.
        let mut manual = vec![0.0; BLENDSHAPE_COUNT];
        for o in 0..BLENDSHAPE_COUNT {
            let mut acc = model.bias[o];
            for r in 0..WINDOW_ROWS {
                for t in 0..WINDOW_FRAMES {
                    let xn = (w.values[[r, t]] - model.norm.mean) / model.norm.scale;
                    acc += model.weights[[r * WINDOW_FRAMES + t, o]] * xn;
                }
            }
            manual[o] = acc.clamp(0.0, BLENDSHAPE_MAX);
        }
        for o in 0..BLENDSHAPE_COUNT {
            assert!((fast.get(o) - manual[o]).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_system_asks_for_regularization() {
        // One window cannot determine 5040 weights at lambda = 0.
        let f = toy_features(86, 5);
        let err = train_ridge(
            &[f],
            &RidgeOptions {
                lambda: 0.0,
                ..RidgeOptions::default()
            },
            &TargetSelection::All,
        )
        .unwrap_err();
        assert!(err.to_string().contains("lambda"), "{err}");
    }

    #[test]
    fn duplicating_the_dataset_never_raises_training_loss() {
        // With fixed lambda, duplicating data weakens the relative penalty,
        // so training loss (on the same windows) cannot increase.
        let f = toy_features(120, 6);
        let opts = RidgeOptions {
            lambda: 100.0,
            ..RidgeOptions::default()
        };
        let train_loss = |sessions: &[SessionFeatures]| -> f64 {
            let model = train_ridge(sessions, &opts, &TargetSelection::All).unwrap();
            let mut total = 0.0;
            let mut count = 0;
            for w in 0..f.n_windows() {
                let pred = model.predict(&f.window(w)).unwrap();
                total += crate::metrics::mae(&pred, &f.target(w));
                count += 1;
            }
            total / count as f64
        };
        let one = train_loss(&[f.clone()]);
        let two = train_loss(&[f.clone(), f.clone()]);
        let four = train_loss(&[f.clone(), f.clone(), f.clone(), f.clone()]);
        assert!(two <= one + 1e-9, "{two} > {one}");
        assert!(four <= two + 1e-9, "{four} > {two}");
    }

    #[test]
    fn stride_and_gram_caching_agree_with_direct_training() {
        let a = toy_features(200, 7);
        let b = toy_features(180, 8);
        let opts = RidgeOptions::default();
        let direct = train_ridge(&[a.clone(), b.clone()], &opts, &TargetSelection::All).unwrap();

        let ga = session_gram(&a, &opts, &TargetSelection::All);
        let gb = session_gram(&b, &opts, &TargetSelection::All);
        let cached = train_ridge_from_grams(&[&ga, &gb], opts.lambda).unwrap();
        let max_dw = direct
            .weights
            .iter()
            .zip(cached.weights.iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert_eq!(max_dw, 0.0, "cached and direct training must be identical");
    }
}
