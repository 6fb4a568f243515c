use clap::Parser;
use std::path::PathBuf;

use echoface::error::{Error, Result};
use echoface::sim::{
    inject_noise_stereo, render_received, synth_blink_trajectory, synth_trajectory, BlinkMode,
    Scene, SynthConfig,
};
use echoface::waveio::{write_blendshape_csv, WaveFile};

use crate::manifest::{prepare_out_dir, Manifest};

#[derive(Parser)]
pub struct Args {
    /// Output directory; each session lands in session_XX/ inside it.
    #[arg(long)]
    pub out: PathBuf,
    /// Scene description JSON; defaults to the built-in face scene.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Session length in minutes.
    #[arg(long, default_value_t = 2.0)]
    pub minutes: f64,
    /// Number of sessions to render.
    #[arg(long, default_value_t = 1)]
    pub sessions: usize,
    /// Base seed; session k uses seed + k.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Operating band: default or high.
    #[arg(long, default_value = "default")]
    pub profile: String,
    /// Rounds through the expression presets per session.
    #[arg(long, default_value_t = 6)]
    pub repetitions: usize,
    /// Blink placement: "rate" (spontaneous), "off", or an exact count.
    #[arg(long, default_value = "rate")]
    pub blinks: String,
    /// Render a blink-only session (no instructed expressions).
    #[arg(long)]
    pub blink_only: bool,
    /// Ground-truth stream rate in Hz.
    #[arg(long, default_value_t = 30.0)]
    pub gt_rate: f64,
    /// Clap time within the lead-in, seconds.
    #[arg(long, default_value_t = 1.0)]
    pub clap_at: f64,
    #[arg(long)]
    pub force: bool,
}

fn parse_blinks(s: &str) -> Result<BlinkMode> {
    match s {
        "rate" => Ok(BlinkMode::SpontaneousRate),
        "off" => Ok(BlinkMode::Off),
        n => n
            .parse::<usize>()
            .map(BlinkMode::Count)
            .map_err(|_| Error::data(format!("bad --blinks value {n:?} (rate|off|COUNT)"))),
    }
}

pub fn run(args: Args) -> Result<i32> {
    let chirp = super::chirp_profile(&args.profile)?;
    let scene: Scene = match &args.scene {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::data(format!("bad scene json: {e}")))?,
        None => Scene::default_face(),
    };
    scene.validate_face()?;
    let blinks = parse_blinks(&args.blinks)?;
    prepare_out_dir(&args.out, args.force)?;

    for s in 0..args.sessions {
        let seed = args.seed + s as u64;
        let session_dir = args.out.join(format!("session_{s:02}"));
        prepare_out_dir(&session_dir, args.force)?;

        // Trajectory on the native frame grid, including the quiet lead-in
        // that the clap lands in.
        let traj = if args.blink_only {
            let n = match blinks {
                BlinkMode::Count(n) => n,
                _ => ((args.minutes * 60.0) / 3.0) as usize,
            };
            synth_blink_trajectory(args.minutes * 60.0, n, chirp.frame_rate(), seed)?
        } else {
            synth_trajectory(&SynthConfig {
                repetitions: args.repetitions,
                frame_rate: chirp.frame_rate(),
                seed,
                min_duration_s: Some(args.minutes * 60.0),
                blinks,
                ..SynthConfig::default()
            })?
        };

        // Render, clap, then optional scene noise.
        let mut render_scene = scene.clone();
        render_scene.noise = Default::default();
        render_scene.clap_times = vec![];
        let clean = render_received(&render_scene, &traj, &chirp)?;
        let mut ch0 = echoface::chirp::Waveform::new(clean.ch[0].clone(), clean.fs);
        let mut ch1 = echoface::chirp::Waveform::new(clean.ch[1].clone(), clean.fs);
        ch0 = echoface::sim::inject_clap(&ch0, args.clap_at)?;
        ch1 = echoface::sim::inject_clap(&ch1, args.clap_at)?;
        let mut audio =
            echoface::chirp::StereoWaveform::new(ch0.samples, ch1.samples, clean.fs);
        if !scene.noise.is_off() {
            audio = inject_noise_stereo(&audio, &scene.noise, seed);
        }

        let (wave, saturated) = WaveFile::from_stereo_quantized(&audio);
        wave.write(&session_dir.join("signal.eewv"))?;

        // Ground truth at the acquisition rate, same epoch as the signal.
        let gt = traj.resampled(args.gt_rate);
        write_blendshape_csv(&session_dir.join("gt.csv"), &gt.frames, args.gt_rate, 0)?;
        let clap_gt_frame = (args.clap_at * args.gt_rate).round() as usize;

        Manifest::new(
            "simulate",
            Some(seed),
            serde_json::json!({
                "profile": args.profile,
                "minutes": args.minutes,
                "repetitions": args.repetitions,
                "blinks": args.blinks,
                "blink_only": args.blink_only,
                "gt_rate": args.gt_rate,
                "clap_time_s": args.clap_at,
                "clap_gt_frame": clap_gt_frame,
                "saturated_samples": saturated,
                "scene": scene,
            }),
        )
        .write(&session_dir)?;
        println!(
            "session_{s:02}: {:.1} s, {} frames of ground truth, clap at {} s",
            traj.duration(),
            gt.n_frames(),
            args.clap_at
        );
    }
    Ok(0)
}
