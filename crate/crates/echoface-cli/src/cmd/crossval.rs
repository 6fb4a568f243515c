use clap::Parser;
use std::path::PathBuf;

use echoface::conv::{ConvConfig, TrainConfig};
use echoface::crossval::{crossval, render_report, ModelChoice, Scheme};
use echoface::dataset::SessionFeatures;
use echoface::error::{Error, Result};
use echoface::ridge::RidgeOptions;
use echoface::waveio::read_features;

use crate::manifest::{collect_feature_files, Manifest};

#[derive(Parser)]
pub struct Args {
    /// Feature files (.eeds) or directories.
    #[arg(long, required = true, num_args = 1..)]
    pub features: Vec<PathBuf>,
    #[arg(long, default_value_t = 6)]
    pub folds: usize,
    /// Model kind: ridge or conv.
    #[arg(long, default_value = "ridge")]
    pub model: String,
    #[arg(long, default_value_t = echoface::ridge::default_lambda())]
    pub lambda: f64,
    #[arg(long, default_value_t = 4)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2)]
    pub stride: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the full report as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<i32> {
    let files = collect_feature_files(&args.features)?;
    let sessions: Vec<SessionFeatures> = files
        .iter()
        .map(|p| read_features(p))
        .collect::<Result<_>>()?;

    let choice = match args.model.as_str() {
        "ridge" => ModelChoice::Ridge(RidgeOptions {
            lambda: args.lambda,
            ..RidgeOptions::default()
        }),
        "conv" => ModelChoice::Conv(
            ConvConfig::default(),
            TrainConfig {
                epochs: args.epochs,
                seed: args.seed,
                window_stride: args.stride,
                ..TrainConfig::default()
            },
        ),
        other => return Err(Error::data(format!("unknown model kind {other:?}"))),
    };

    let report = crossval(&sessions, Scheme::KFold(args.folds), &choice)?;
    print!("{}", render_report(&report));

    if let Some(out) = &args.out {
        let json = serde_json::to_string_pretty(&report).map_err(|e| Error::data(e.to_string()))?;
        std::fs::write(out, json)?;
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            Manifest::new(
                "crossval",
                Some(args.seed),
                serde_json::json!({
                    "features": files,
                    "folds": args.folds,
                    "model": args.model,
                    "lambda": args.lambda,
                }),
            )
            .write(dir)?;
        }
    }
    Ok(0)
}
