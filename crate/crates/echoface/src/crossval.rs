//! Session-level cross-validation.
//!
//! Folds are assigned by whole sessions: a session's windows never appear on
//! both sides of a split. For the ridge path, per-session statistics are
//! computed once and each fold's normal equations assemble by addition, so
//! a 6-fold run costs one pass over the data plus six solves.

use serde::Serialize;

use crate::blendshape::BlendshapeVector;
use crate::conv::{train_conv, ConvConfig, TrainConfig};
use crate::dataset::SessionFeatures;
use crate::error::{Error, Result};
use crate::metrics::{
    bucketize, deformation_degree, degree_bucket, lmae, mae, pl40, pu60, umae, DEGREE_BUCKETS,
};
use crate::model::Model;
use crate::ridge::{predict_session, session_gram, train_ridge_from_grams, RidgeOptions, TargetSelection};

/// Fold scheme; `KFold(6)` with 12 sessions is the 10-train / 2-test split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    KFold(usize),
}

/// Which model the folds train.
#[derive(Debug, Clone)]
pub enum ModelChoice {
    Ridge(RidgeOptions),
    Conv(ConvConfig, TrainConfig),
}

/// Metrics of one fold (or of an aggregate).
#[derive(Debug, Clone, Serialize)]
pub struct FoldMetrics {
    pub mae: f64,
    pub lmae: f64,
    pub umae: f64,
    pub pl40: f64,
    pub pu60: f64,
    /// Mean MAE per deformation bucket; NaN when a bucket is empty.
    pub bucket_mae: [f64; 4],
    /// Fraction of frames per bucket.
    pub bucket_frac: [f64; 4],
    pub n_frames: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_sessions: Vec<String>,
    pub metrics: FoldMetrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossvalReport {
    pub folds: Vec<FoldReport>,
    /// Unweighted mean of the per-fold metrics.
    pub mean: FoldMetrics,
    /// Metrics over all test frames pooled together.
    pub pooled: FoldMetrics,
}

/// Accumulates per-frame errors into the report metrics.
#[derive(Default)]
pub struct MetricsAccumulator {
    frame_maes: Vec<f64>,
    frame_lmaes: Vec<f64>,
    frame_umaes: Vec<f64>,
    degrees: Vec<f64>,
}

impl MetricsAccumulator {
    pub fn push(&mut self, pred: &BlendshapeVector, gt: &BlendshapeVector) {
        self.frame_maes.push(mae(pred, gt));
        self.frame_lmaes.push(lmae(pred, gt));
        self.frame_umaes.push(umae(pred, gt));
        self.degrees.push(deformation_degree(gt));
    }

    pub fn merge(&mut self, other: &MetricsAccumulator) {
        self.frame_maes.extend_from_slice(&other.frame_maes);
        self.frame_lmaes.extend_from_slice(&other.frame_lmaes);
        self.frame_umaes.extend_from_slice(&other.frame_umaes);
        self.degrees.extend_from_slice(&other.degrees);
    }

    pub fn is_empty(&self) -> bool {
        self.frame_maes.is_empty()
    }

    pub fn finish(&self) -> Result<FoldMetrics> {
        if self.is_empty() {
            return Err(Error::data("no frames to score"));
        }
        let n = self.frame_maes.len();
        let mut bucket_sum = [0.0f64; 4];
        let mut bucket_count = [0usize; 4];
        for (d, m) in self.degrees.iter().zip(&self.frame_maes) {
            let b = degree_bucket(*d);
            bucket_sum[b] += m;
            bucket_count[b] += 1;
        }
        let mut bucket_mae = [f64::NAN; 4];
        for b in 0..4 {
            if bucket_count[b] > 0 {
                bucket_mae[b] = bucket_sum[b] / bucket_count[b] as f64;
            }
        }
        Ok(FoldMetrics {
            mae: self.frame_maes.iter().sum::<f64>() / n as f64,
            lmae: self.frame_lmaes.iter().sum::<f64>() / n as f64,
            umae: self.frame_umaes.iter().sum::<f64>() / n as f64,
            pl40: pl40(&self.frame_lmaes)?,
            pu60: pu60(&self.frame_umaes)?,
            bucket_mae,
            bucket_frac: bucketize(&self.degrees)?,
            n_frames: n,
        })
    }
}

/// Evaluate a model on one session, frame by frame.
pub fn evaluate_session(
    model: &Model,
    features: &SessionFeatures,
    acc: &mut MetricsAccumulator,
) -> Result<()> {
    match model {
        Model::Ridge(m) => {
            let (windows, preds) = predict_session(m, features, 1);
            for (row, &w) in windows.iter().enumerate() {
                let pred = BlendshapeVector::from_scaled(&preds.row(row).to_vec())?.0;
                acc.push(&pred, &features.target(w));
            }
        }
        Model::Conv(m) => {
            for w in 0..features.n_windows() {
                let pred = m.predict(&features.window(w))?;
                acc.push(&pred, &features.target(w));
            }
        }
    }
    Ok(())
}

/// Deterministic fold assignment: sessions in input order, split into `k`
/// equal contiguous groups; each group is one fold's test set.
pub fn fold_assignment(n_sessions: usize, k: usize) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::data("need at least 2 folds"));
    }
    if n_sessions < k || n_sessions % k != 0 {
        return Err(Error::data(format!(
            "cannot split {n_sessions} sessions into {k} equal folds"
        )));
    }
    let per = n_sessions / k;
    Ok((0..k)
        .map(|f| (f * per..(f + 1) * per).collect())
        .collect())
}

/// Run session-level k-fold cross-validation.
pub fn crossval(
    sessions: &[SessionFeatures],
    scheme: Scheme,
    choice: &ModelChoice,
) -> Result<CrossvalReport> {
    let Scheme::KFold(k) = scheme;
    let folds = fold_assignment(sessions.len(), k)?;

    // Ridge: one pass to cache per-session statistics.
    let grams = match choice {
        ModelChoice::Ridge(opts) => Some(
            sessions
                .iter()
                .map(|s| session_gram(s, opts, &TargetSelection::All))
                .collect::<Vec<_>>(),
        ),
        ModelChoice::Conv(..) => None,
    };

    let mut reports = Vec::with_capacity(k);
    let mut pooled = MetricsAccumulator::default();
    for (fi, test_idx) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = (0..sessions.len()).filter(|i| !test_idx.contains(i)).collect();
        // Split hygiene: a session id never appears on both sides.
        for ti in test_idx {
            assert!(!train_idx.contains(ti), "session in both train and test");
        }

        let model = match choice {
            ModelChoice::Ridge(opts) => {
                let g = grams.as_ref().unwrap();
                let train_grams: Vec<_> = train_idx.iter().map(|&i| &g[i]).collect();
                Model::Ridge(train_ridge_from_grams(&train_grams, opts.lambda)?)
            }
            ModelChoice::Conv(cfg, tc) => {
                let train_sessions: Vec<SessionFeatures> =
                    train_idx.iter().map(|&i| sessions[i].clone()).collect();
                let (m, _) = train_conv(&train_sessions, cfg, tc, &TargetSelection::All)?;
                Model::Conv(m)
            }
        };

        let mut acc = MetricsAccumulator::default();
        for &ti in test_idx {
            evaluate_session(&model, &sessions[ti], &mut acc)?;
        }
        pooled.merge(&acc);
        reports.push(FoldReport {
            fold: fi,
            test_sessions: test_idx.iter().map(|&i| sessions[i].session_id.clone()).collect(),
            metrics: acc.finish()?,
        });
    }

    let mean = mean_metrics(&reports);
    Ok(CrossvalReport {
        folds: reports,
        mean,
        pooled: pooled.finish()?,
    })
}

fn mean_metrics(folds: &[FoldReport]) -> FoldMetrics {
    let k = folds.len() as f64;
    let mut m = FoldMetrics {
        mae: 0.0,
        lmae: 0.0,
        umae: 0.0,
        pl40: 0.0,
        pu60: 0.0,
        bucket_mae: [0.0; 4],
        bucket_frac: [0.0; 4],
        n_frames: 0,
    };
    let mut bucket_n = [0usize; 4];
    for f in folds {
        m.mae += f.metrics.mae / k;
        m.lmae += f.metrics.lmae / k;
        m.umae += f.metrics.umae / k;
        m.pl40 += f.metrics.pl40 / k;
        m.pu60 += f.metrics.pu60 / k;
        m.n_frames += f.metrics.n_frames;
        for b in 0..4 {
            if f.metrics.bucket_mae[b].is_finite() {
                m.bucket_mae[b] += f.metrics.bucket_mae[b];
                bucket_n[b] += 1;
            }
            m.bucket_frac[b] += f.metrics.bucket_frac[b] / k;
        }
    }
    for b in 0..4 {
        m.bucket_mae[b] = if bucket_n[b] > 0 {
            m.bucket_mae[b] / bucket_n[b] as f64
        } else {
            f64::NAN
        };
    }
    m
}

/// Human-readable report: headline metrics plus the per-bucket table.
pub fn render_report(report: &CrossvalReport) -> String {
    let mut out = String::new();
    out.push_str("fold  test sessions                 MAE    LMAE   UMAE   PL40    PU60\n");
    for f in &report.folds {
        out.push_str(&format!(
            "{:<5} {:<28} {:>6.2} {:>6.2} {:>6.2} {:>6.2}% {:>6.2}%\n",
            f.fold,
            f.test_sessions.join(","),
            f.metrics.mae,
            f.metrics.lmae,
            f.metrics.umae,
            f.metrics.pl40,
            f.metrics.pu60
        ));
    }
    out.push_str(&format!(
        "mean  {:<28} {:>6.2} {:>6.2} {:>6.2} {:>6.2}% {:>6.2}%\n",
        "",
        report.mean.mae,
        report.mean.lmae,
        report.mean.umae,
        report.mean.pl40,
        report.mean.pu60
    ));
    out.push_str("\ndegree bucket   MAE     frames\n");
    for b in 0..4 {
        out.push_str(&format!(
            "{:<15} {:>6.2}  [{:.1}%]\n",
            DEGREE_BUCKETS[b],
            report.pooled.bucket_mae[b],
            100.0 * report.pooled.bucket_frac[b]
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_session(id: usize, seed: u64) -> SessionFeatures {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_frames = 150;
        let diffs = Array2::from_shape_fn((60, n_frames - 1), |_| rng.gen_range(-1.0..1.0));
        let mut targets = Array2::zeros((n_frames, 52));
        for k in 1..n_frames {
            let probe: f64 = (0..60).map(|r| diffs[[r, k - 1]]).sum();
            for j in 0..52 {
                targets[[k, j]] = (300.0 + 25.0 * probe).clamp(0.0, 1000.0);
            }
        }
        SessionFeatures {
            session_id: format!("s{id:02}"),
            diffs,
            targets,
        }
    }

    #[test]
    fn fold_assignment_covers_every_session_once() {
        let folds = fold_assignment(12, 6).unwrap();
        assert_eq!(folds.len(), 6);
        let mut seen: Vec<usize> = folds.concat();
        seen.sort_unstable();
        assert_eq!(seen, (0..12).collect::<Vec<_>>());
        assert!(fold_assignment(11, 6).is_err());
        assert!(fold_assignment(12, 1).is_err());
    }

    #[test]
    fn ridge_crossval_runs_and_reports() {
        let sessions: Vec<SessionFeatures> = (0..4).map(|i| toy_session(i, i as u64)).collect();
        let report = crossval(
            &sessions,
            Scheme::KFold(2),
            &ModelChoice::Ridge(RidgeOptions::default()),
        )
        .unwrap();
        assert_eq!(report.folds.len(), 2);
        for f in &report.folds {
            assert_eq!(f.test_sessions.len(), 2);
            assert!(f.metrics.n_frames > 0);
        }
        let text = render_report(&report);
        assert!(text.contains("PL40"));
        assert!(text.contains("50-100"));

        // Same data, same scheme: bit-identical report.
        let again = crossval(
            &sessions,
            Scheme::KFold(2),
            &ModelChoice::Ridge(RidgeOptions::default()),
        )
        .unwrap();
        assert_eq!(report.mean.mae.to_bits(), again.mean.mae.to_bits());
    }
}
