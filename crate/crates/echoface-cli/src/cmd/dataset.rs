use clap::Parser;
use std::path::PathBuf;

use echoface::dataset::extract_features;
use echoface::error::{Error, Result};
use echoface::waveio::{read_trajectory_csv, write_features, WaveFile};
use echoface::wire::{align, detect_clap};

use crate::manifest::{prepare_out_dir, Manifest};

#[derive(Parser)]
pub struct Args {
    /// Session directories produced by `simulate` (signal.eewv + gt.csv +
    /// manifest.json).
    #[arg(long, required = true, num_args = 1..)]
    pub sessions: Vec<PathBuf>,
    /// Output directory for .eeds feature files.
    #[arg(long)]
    pub out: PathBuf,
    /// Operating band: default or high.
    #[arg(long, default_value = "default")]
    pub profile: String,
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: Args) -> Result<i32> {
    let chirp = super::chirp_profile(&args.profile)?;
    prepare_out_dir(&args.out, args.force)?;
    let mut written = Vec::new();
    for session_dir in &args.sessions {
        let name = session_dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::data("bad session path"))?
            .to_string();
        let wave = WaveFile::read(&session_dir.join("signal.eewv"))?;
        let audio = wave.to_stereo()?;
        let gt = read_trajectory_csv(&session_dir.join("gt.csv"))?;
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(session_dir.join("manifest.json"))?)
                .map_err(|e| Error::data(format!("bad session manifest: {e}")))?;
        let clap_gt_frame = manifest["config"]["clap_gt_frame"]
            .as_u64()
            .ok_or_else(|| Error::data("manifest missing clap_gt_frame"))? as usize;

        let clap_idx = detect_clap(&audio.channel(0))
            .ok_or_else(|| Error::data(format!("{name}: no clap found; session rejected")))?;
        let aligned = align(&audio, &gt, clap_idx, clap_gt_frame, chirp.n_samples)?;
        let features = extract_features(&aligned, &chirp, &name)?;
        let out_path = args.out.join(format!("{name}.eeds"));
        write_features(&out_path, &features)?;
        println!(
            "{name}: clap at sample {clap_idx}, {} aligned frames, {} windows",
            features.n_frames(),
            features.n_windows()
        );
        written.push(out_path);
    }
    Manifest::new(
        "dataset",
        None,
        serde_json::json!({
            "profile": args.profile,
            "sessions": args.sessions,
            "outputs": written,
        }),
    )
    .write(&args.out)?;
    Ok(0)
}
