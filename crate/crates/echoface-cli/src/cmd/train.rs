use clap::Parser;
use std::path::PathBuf;

use echoface::blendshape::{EYE_BLINK_L, EYE_BLINK_R};
use echoface::conv::{train_conv, ConvConfig, TrainConfig};
use echoface::dataset::{synth_motion_bank, SessionFeatures};
use echoface::error::{Error, Result};
use echoface::model::{save_model, Model};
use echoface::ridge::{train_ridge, AugmentOptions, RidgeOptions, TargetSelection};
use echoface::waveio::read_features;

use crate::manifest::{collect_feature_files, ensure_writable, Manifest};

#[derive(Parser)]
pub struct Args {
    /// Feature files (.eeds) or directories of them.
    #[arg(long, required = true, num_args = 1..)]
    pub features: Vec<PathBuf>,
    /// Output model artifact.
    #[arg(long)]
    pub out: PathBuf,
    /// Model kind: ridge or conv.
    #[arg(long, default_value = "ridge")]
    pub model: String,
    /// Ridge penalty.
    #[arg(long, default_value_t = echoface::ridge::default_lambda())]
    pub lambda: f64,
    /// Conv training epochs.
    #[arg(long, default_value_t = 6)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.7)]
    pub lr_decay: f64,
    /// Take every Nth window.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random vertical shifts up to +-N bins (0 = off).
    #[arg(long, default_value_t = 0)]
    pub augment_shift: i32,
    /// Additive motion augmentation at this scale (0 = off).
    #[arg(long, default_value_t = 0.0)]
    pub augment_motion: f64,
    /// Train only the two blink outputs.
    #[arg(long)]
    pub blink_head: bool,
    /// Write the conv training curve here as CSV.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: Args) -> Result<i32> {
    ensure_writable(&args.out, args.force)?;
    let files = collect_feature_files(&args.features)?;
    let sessions: Vec<SessionFeatures> = files
        .iter()
        .map(|p| read_features(p))
        .collect::<Result<_>>()?;

    let targets = if args.blink_head {
        TargetSelection::Columns(vec![EYE_BLINK_L, EYE_BLINK_R])
    } else {
        TargetSelection::All
    };
    let augment = AugmentOptions {
        vertical_shift_max: args.augment_shift,
        motion: if args.augment_motion != 0.0 {
            Some((synth_motion_bank(4, 400, args.seed ^ 0x6D6F)?, args.augment_motion))
        } else {
            None
        },
        seed: args.seed,
    };

    let model = match args.model.as_str() {
        "ridge" => {
            if args.blink_head {
                return Err(Error::data("ridge training uses all 52 outputs; the blink head is a conv option"));
            }
            let opts = RidgeOptions {
                lambda: args.lambda,
                window_stride: args.stride,
                augment,
            };
            Model::Ridge(train_ridge(&sessions, &opts, &targets)?)
        }
        "conv" => {
            let cfg = if args.blink_head {
                ConvConfig::blink()
            } else {
                ConvConfig::default()
            };
            let tc = TrainConfig {
                epochs: args.epochs,
                batch_size: args.batch_size,
                lr: args.lr,
                lr_decay: args.lr_decay,
                seed: args.seed,
                window_stride: args.stride,
                augment,
            };
            let (m, curve) = train_conv(&sessions, &cfg, &tc, &targets)?;
            if let Some(report) = &args.report {
                ensure_writable(report, args.force)?;
                let mut text = String::from("epoch,loss,lr\n");
                for e in &curve {
                    text.push_str(&format!("{},{},{}\n", e.epoch, e.loss, e.lr));
                }
                std::fs::write(report, text)?;
            }
            Model::Conv(m)
        }
        other => return Err(Error::data(format!("unknown model kind {other:?}"))),
    };

    save_model(&args.out, &model)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
        Manifest::new(
            "train",
            Some(args.seed),
            serde_json::json!({
                "model": args.model,
                "features": files,
                "lambda": args.lambda,
                "epochs": args.epochs,
                "stride": args.stride,
                "augment_shift": args.augment_shift,
                "augment_motion": args.augment_motion,
                "blink_head": args.blink_head,
            }),
        )
        .write(dir)?;
    }
    println!("trained {} model on {} sessions -> {}", model.kind(), sessions.len(), args.out.display());
    Ok(0)
}
