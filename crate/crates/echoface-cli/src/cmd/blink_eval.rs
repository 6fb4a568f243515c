use clap::Parser;
use std::path::PathBuf;

use echoface::blendshape::{EYE_BLINK_L, EYE_BLINK_R};
use echoface::blink::{blink_signal_rows, extract_events, match_and_f1, BlinkConfig};
use echoface::error::{Error, Result};
use echoface::model::load_model;
use echoface::waveio::{read_features, write_events_csv};

use crate::manifest::{collect_feature_files, prepare_out_dir, Manifest};

#[derive(Parser)]
pub struct Args {
    #[arg(long)]
    pub model: PathBuf,
    /// Feature files (.eeds) or directories.
    #[arg(long, required = true, num_args = 1..)]
    pub features: Vec<PathBuf>,
    /// Output directory for event CSVs and the score report.
    #[arg(long)]
    pub out: PathBuf,
    /// Onset matching tolerance, seconds.
    #[arg(long, default_value_t = 0.15)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 250.0)]
    pub on_threshold: f64,
    #[arg(long, default_value_t = 150.0)]
    pub off_threshold: f64,
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: Args) -> Result<i32> {
    let model = load_model(&args.model)?;
    let files = collect_feature_files(&args.features)?;
    prepare_out_dir(&args.out, args.force)?;
    let frame_rate = 50_000.0 / 600.0;
    let cfg = BlinkConfig {
        on_threshold: args.on_threshold,
        off_threshold: args.off_threshold,
        ..BlinkConfig::default()
    };

    let mut total_f1 = 0.0;
    let mut rows = Vec::new();
    for file in &files {
        let features = read_features(file)?;
        let preds = super::predict::predict_all(&model, &features)?;

        // Predicted blink signal per window frame.
        let pred_signal: Vec<f64> = (0..preds.nrows())
            .map(|w| {
                if preds.ncols() == 2 {
                    0.5 * (preds[[w, 0]] + preds[[w, 1]])
                } else {
                    0.5 * (preds[[w, EYE_BLINK_L]] + preds[[w, EYE_BLINK_R]])
                }
            })
            .collect();
        // Reference signal over the same frames (from window 0 onward).
        let gt_signal: Vec<f64> = {
            let all = blink_signal_rows(&features.targets);
            all[echoface::window::WINDOW_FRAMES..].to_vec()
        };

        let pred_events = extract_events(&pred_signal, frame_rate, &cfg);
        let gt_events = extract_events(&gt_signal, frame_rate, &cfg);
        let report = match_and_f1(&pred_events, &gt_events, args.tolerance, frame_rate);
        total_f1 += report.f1;

        let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("session");
        write_events_csv(&args.out.join(format!("{stem}_pred_events.csv")), &pred_events, frame_rate)?;
        write_events_csv(&args.out.join(format!("{stem}_gt_events.csv")), &gt_events, frame_rate)?;
        println!(
            "{stem}: F1 {:.3} (tp {} fp {} fn {}), {} predicted / {} reference events",
            report.f1,
            report.tp,
            report.fp,
            report.fn_,
            pred_events.len(),
            gt_events.len()
        );
        rows.push(serde_json::json!({
            "session": stem,
            "f1": report.f1,
            "tp": report.tp,
            "fp": report.fp,
            "fn": report.fn_,
        }));
    }
    let mean_f1 = total_f1 / files.len() as f64;
    println!("mean F1 {mean_f1:.3} over {} sessions", files.len());

    let report = serde_json::json!({ "mean_f1": mean_f1, "sessions": rows });
    std::fs::write(
        args.out.join("blink_report.json"),
        serde_json::to_string_pretty(&report).map_err(|e| Error::data(e.to_string()))?,
    )?;
    Manifest::new(
        "blink-eval",
        None,
        serde_json::json!({
            "model": args.model,
            "features": files,
            "tolerance_s": args.tolerance,
            "on_threshold": args.on_threshold,
            "off_threshold": args.off_threshold,
        }),
    )
    .write(&args.out)?;
    Ok(0)
}
