use clap::Parser;
use std::path::PathBuf;

use echoface::conv::{fine_tune, TrainConfig};
use echoface::dataset::SessionFeatures;
use echoface::error::{Error, Result};
use echoface::metrics::DEGREE_BUCKETS;
use echoface::model::{load_model, Model};
use echoface::crossval::{evaluate_session, MetricsAccumulator};
use echoface::waveio::read_features;

use crate::manifest::{collect_feature_files, Manifest};

#[derive(Parser)]
pub struct Args {
    #[arg(long)]
    pub model: PathBuf,
    /// Test feature files (.eeds) or directories.
    #[arg(long, required = true, num_args = 1..)]
    pub features: Vec<PathBuf>,
    /// Fine-tune on exactly the first N seconds of each test session before
    /// scoring it (conv models only; 0 = off).
    #[arg(long, default_value_t = 0.0)]
    pub fine_tune_seconds: f64,
    /// Fine-tuning epochs.
    #[arg(long, default_value_t = 2)]
    pub fine_tune_epochs: usize,
    /// Fine-tuning learning rate (a tenth of the training default).
    #[arg(long, default_value_t = 3e-4)]
    pub fine_tune_lr: f64,
    /// Write the metrics as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Split off the leading `seconds` of a session as its own feature set.
pub fn session_head(features: &SessionFeatures, seconds: f64, frame_rate: f64) -> SessionFeatures {
    let head_frames = ((seconds * frame_rate).round() as usize).min(features.n_frames());
    SessionFeatures {
        session_id: format!("{}-head", features.session_id),
        diffs: features
            .diffs
            .slice(ndarray::s![.., 0..head_frames.saturating_sub(1)])
            .to_owned(),
        targets: features
            .targets
            .slice(ndarray::s![0..head_frames, ..])
            .to_owned(),
    }
}

pub fn run(args: Args) -> Result<i32> {
    let model = load_model(&args.model)?;
    let files = collect_feature_files(&args.features)?;
    let frame_rate = 50_000.0 / 600.0;

    let mut acc = MetricsAccumulator::default();
    for file in &files {
        let features = read_features(file)?;
        let scoring_model = if args.fine_tune_seconds > 0.0 {
            match &model {
                Model::Conv(m) => {
                    let head = session_head(&features, args.fine_tune_seconds, frame_rate);
                    let tc = TrainConfig {
                        epochs: args.fine_tune_epochs,
                        batch_size: 32,
                        lr: args.fine_tune_lr,
                        lr_decay: 1.0,
                        seed: args.seed,
                        window_stride: 1,
                        augment: Default::default(),
                    };
                    let (tuned, _) = fine_tune(m, &[head], &tc, &echoface::ridge::TargetSelection::All)?;
                    Model::Conv(tuned)
                }
                Model::Ridge(_) => {
                    return Err(Error::data(
                        "--fine-tune-seconds applies to conv models; ridge refits instead",
                    ))
                }
            }
        } else {
            model.clone()
        };
        evaluate_session(&scoring_model, &features, &mut acc)?;
    }
    let metrics = acc.finish()?;

    println!(
        "MAE {:.2}  LMAE {:.2}  UMAE {:.2}  PL40 {:.2}%  PU60 {:.2}%  ({} frames)",
        metrics.mae, metrics.lmae, metrics.umae, metrics.pl40, metrics.pu60, metrics.n_frames
    );
    println!("degree bucket   MAE     frames");
    for b in 0..4 {
        println!(
            "{:<15} {:>6.2}  [{:.1}%]",
            DEGREE_BUCKETS[b],
            metrics.bucket_mae[b],
            100.0 * metrics.bucket_frac[b]
        );
    }

    if let Some(out) = &args.out {
        let json = serde_json::to_string_pretty(&metrics).map_err(|e| Error::data(e.to_string()))?;
        std::fs::write(out, json)?;
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            Manifest::new(
                "eval",
                Some(args.seed),
                serde_json::json!({
                    "model": args.model,
                    "features": files,
                    "fine_tune_seconds": args.fine_tune_seconds,
                }),
            )
            .write(dir)?;
        }
    }
    Ok(0)
}
