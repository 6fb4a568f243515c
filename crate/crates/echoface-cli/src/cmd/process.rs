use clap::Parser;
use ndarray::Array2;
use std::path::PathBuf;

use echoface::error::{Error, Result};
use echoface::pipeline::FrameProcessor;
use echoface::waveio::{write_matrix_csv, write_window, WaveFile};

use crate::manifest::{prepare_out_dir, Manifest};

#[derive(Parser)]
pub struct Args {
    /// Session directory (uses signal.eewv inside it) or a .eewv file.
    #[arg(long)]
    pub session: PathBuf,
    /// Output directory for dumps.
    #[arg(long)]
    pub out: PathBuf,
    /// Operating band: default or high.
    #[arg(long, default_value = "default")]
    pub profile: String,
    /// Dump the full echo window ending at this frame.
    #[arg(long)]
    pub window_at: Option<usize>,
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: Args) -> Result<i32> {
    let chirp = super::chirp_profile(&args.profile)?;
    let signal_path = if args.session.is_dir() {
        args.session.join("signal.eewv")
    } else {
        args.session.clone()
    };
    let audio = WaveFile::read(&signal_path)?.to_stereo()?;
    prepare_out_dir(&args.out, args.force)?;

    let n = chirp.n_samples;
    let n_frames = audio.len() / n;
    if n_frames < 2 {
        return Err(Error::data("session too short to difference"));
    }
    let mut proc = FrameProcessor::new(&chirp)?;

    // Magnitudes of the truncated differential profiles over time, one
    // column per frame, for plotting. Signed values stay internal; exports
    // are absolute values.
    let mut diff_map = Array2::zeros((60, n_frames - 1));
    let mut window_dump = None;
    let dump_frame = args.window_at.unwrap_or(n_frames - 1);

    for f in 0..n_frames {
        let out = proc.push_frame([&audio.ch[0][f * n..(f + 1) * n], &audio.ch[1][f * n..(f + 1) * n]])?;
        if let Some(d) = &out.diff {
            let t = echoface::profile::truncate_bins(d, echoface::profile::TRUNCATED_BINS)?;
            for bin in 0..30 {
                diff_map[[bin, f - 1]] = t[[bin, 0]].abs();
                diff_map[[30 + bin, f - 1]] = t[[bin, 1]].abs();
            }
        }
        if f == dump_frame {
            if let Some(w) = &out.window {
                window_dump = Some(w.clone());
            }
        }
    }
    write_matrix_csv(&args.out.join("diff_profile_map.csv"), &diff_map)?;

    // Raw echo profile of the chosen frame, full lag range, magnitudes.
    {
        let template = echoface::chirp::generate_chirp(&chirp)?;
        let corr = echoface::profile::Correlator::new(&template);
        let f = dump_frame.min(n_frames - 1);
        let prof = echoface::profile::echo_profile_stereo(
            &corr,
            [&audio.ch[0][f * n..(f + 1) * n], &audio.ch[1][f * n..(f + 1) * n]],
            f,
        )?;
        let dump = prof.values.mapv(f64::abs);
        write_matrix_csv(&args.out.join(format!("echo_profile_{f:05}.csv")), &dump)?;
    }

    if let Some(w) = &window_dump {
        write_window(&args.out.join(format!("window_{:05}.bin", w.frame_index)), w)?;
        write_matrix_csv(
            &args.out.join(format!("window_{:05}.csv", w.frame_index)),
            &w.values,
        )?;
    }

    Manifest::new(
        "process",
        None,
        serde_json::json!({
            "profile": args.profile,
            "session": args.session,
            "frames": n_frames,
            "window_at": args.window_at,
        }),
    )
    .write(&args.out)?;
    println!("processed {n_frames} frames");
    Ok(0)
}
