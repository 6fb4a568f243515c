use clap::Parser;
use std::path::PathBuf;

use echoface::chirp::generate_chirp;
use echoface::error::Result;
use echoface::waveio::WaveFile;

use crate::manifest::{ensure_writable, Manifest};

#[derive(Parser)]
pub struct Args {
    /// Operating band: default (16-20 kHz) or high (20-24 kHz).
    #[arg(long, default_value = "default")]
    pub profile: String,
    /// Output sample file (.eewv).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the samples as a one-column CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: Args) -> Result<i32> {
    let spec = super::chirp_profile(&args.profile)?;
    ensure_writable(&args.out, args.force)?;
    let wave = generate_chirp(&spec)?;
    WaveFile::from_mono_f64(&wave).write(&args.out)?;
    if let Some(csv) = &args.csv {
        ensure_writable(csv, args.force)?;
        let mut text = String::from("sample\n");
        for s in &wave.samples {
            text.push_str(&format!("{s}\n"));
        }
        std::fs::write(csv, text)?;
    }
    if let Some(dir) = args.out.parent() {
        if dir.as_os_str().is_empty() {
            Manifest::new("chirp", None, serde_json::json!({ "profile": args.profile, "spec": spec }))
                .write(std::path::Path::new("."))?;
        } else {
            std::fs::create_dir_all(dir)?;
            Manifest::new("chirp", None, serde_json::json!({ "profile": args.profile, "spec": spec }))
                .write(dir)?;
        }
    }
    println!(
        "wrote {} ({} samples at {} Hz, {:.4} s frame, {:.1} frames/s)",
        args.out.display(),
        wave.len(),
        wave.fs,
        spec.frame_duration(),
        spec.frame_rate()
    );
    Ok(0)
}
