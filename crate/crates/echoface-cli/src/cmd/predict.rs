use clap::Parser;
use ndarray::Array2;
use std::path::PathBuf;

use echoface::error::Result;
use echoface::model::{load_model, Model};
use echoface::ridge::predict_session;
use echoface::waveio::{read_features, write_blendshape_csv};

use crate::manifest::{ensure_writable, Manifest};

#[derive(Parser)]
pub struct Args {
    #[arg(long)]
    pub model: PathBuf,
    /// Feature file (.eeds).
    #[arg(long)]
    pub features: PathBuf,
    /// Output predictions CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

/// Predict every window of a session; rows align to window frame indices.
pub fn predict_all(model: &Model, features: &echoface::dataset::SessionFeatures) -> Result<Array2<f64>> {
    match model {
        Model::Ridge(m) => {
            let (_, preds) = predict_session(m, features, 1);
            Ok(preds)
        }
        Model::Conv(m) => {
            let mut preds = Array2::zeros((features.n_windows(), m.out_dim()));
            for w in 0..features.n_windows() {
                let raw = m.predict_raw(&features.window(w))?;
                for (o, v) in raw.into_iter().enumerate() {
                    preds[[w, o]] = v;
                }
            }
            Ok(preds)
        }
    }
}

pub fn run(args: Args) -> Result<i32> {
    ensure_writable(&args.out, args.force)?;
    let model = load_model(&args.model)?;
    let features = read_features(&args.features)?;
    let preds = predict_all(&model, &features)?;
    let frame_rate = 50_000.0 / 600.0;

    if model.out_dim() == echoface::blendshape::BLENDSHAPE_COUNT {
        write_blendshape_csv(&args.out, &preds, frame_rate, echoface::window::WINDOW_FRAMES)?;
    } else {
        // Blink-head models: a narrow CSV with the two blink parameters.
        let mut text = String::from("frame_index,timestamp_s,eyeBlink_L,eyeBlink_R\n");
        for w in 0..preds.nrows() {
            let frame = features.window_frame(w);
            text.push_str(&format!(
                "{},{},{},{}\n",
                frame,
                frame as f64 / frame_rate,
                preds[[w, 0]],
                preds[[w, 1]]
            ));
        }
        std::fs::write(&args.out, text)?;
    }
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        Manifest::new(
            "predict",
            None,
            serde_json::json!({
                "model": args.model,
                "features": args.features,
                "windows": preds.nrows(),
            }),
        )
        .write(dir)?;
    }
    println!("{} predictions -> {}", preds.nrows(), args.out.display());
    Ok(0)
}
