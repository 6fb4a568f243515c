//! Closed-loop calibration harness: simulate sessions, cross-validate the
//! ridge model across a lambda sweep, and print the metrics that the
//! acceptance thresholds freeze.

use echoface::chirp::ChirpSpec;
use echoface::crossval::{crossval, ModelChoice, Scheme};
use echoface::dataset::{extract_features, SessionFeatures};
use echoface::ridge::{RidgeOptions, TargetSelection};
use echoface::sim::{synth_trajectory, BlinkMode, Scene, SynthConfig};
use echoface::waveio::WaveFile;
use echoface::wire::{align, detect_clap};
use std::time::Instant;

fn simulate_session(chirp: &ChirpSpec, seed: u64, minutes: f64, quantize: bool) -> SessionFeatures {
    let scene = Scene::default_face();
    let traj = synth_trajectory(&SynthConfig {
        repetitions: 6,
        frame_rate: chirp.frame_rate(),
        seed,
        min_duration_s: Some(minutes * 60.0),
        blinks: BlinkMode::SpontaneousRate,
        ..SynthConfig::default()
    })
    .unwrap();
    let clean = echoface::sim::render_received(&scene, &traj, chirp).unwrap();
    let ch0 = echoface::sim::inject_clap(
        &echoface::chirp::Waveform::new(clean.ch[0].clone(), clean.fs),
        1.0,
    )
    .unwrap();
    let ch1 = echoface::sim::inject_clap(
        &echoface::chirp::Waveform::new(clean.ch[1].clone(), clean.fs),
        1.0,
    )
    .unwrap();
    let audio = echoface::chirp::StereoWaveform::new(ch0.samples, ch1.samples, clean.fs);
    let audio = if quantize {
        let (w, _) = WaveFile::from_stereo_quantized(&audio);
        w.to_stereo().unwrap()
    } else {
        audio
    };
    let gt = traj.resampled(30.0);
    let clap_idx = detect_clap(&audio.channel(0)).expect("clap");
    let aligned = align(&audio, &gt, clap_idx, 30, chirp.n_samples).unwrap();
    extract_features(&aligned, chirp, &format!("s{seed:02}")).unwrap()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_sessions: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let minutes: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let folds: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(2);
    let quantize: bool = args.get(4).map(|s| s == "q").unwrap_or(true);
    let high_band: bool = args.get(5).map(|s| s == "high").unwrap_or(false);

    let chirp = if high_band {
        ChirpSpec::high_band()
    } else {
        ChirpSpec::default()
    };
    eprintln!(
        "simulating {n_sessions} x {minutes} min (quantize={quantize}, band {}-{} kHz)",
        chirp.f_lo / 1e3,
        chirp.f_hi / 1e3
    );
    let t = Instant::now();
    let sessions: Vec<SessionFeatures> = (0..n_sessions)
        .map(|s| {
            let f = simulate_session(&chirp, s as u64, minutes, quantize);
            eprintln!("  session {s}: {} windows ({:.1}s elapsed)", f.n_windows(), t.elapsed().as_secs_f64());
            f
        })
        .collect();

    for lambda in [1.0, 10.0, 100.0, 1000.0, 10_000.0] {
        let t = Instant::now();
        let report = crossval(
            &sessions,
            Scheme::KFold(folds),
            &ModelChoice::Ridge(RidgeOptions {
                lambda,
                ..RidgeOptions::default()
            }),
        )
        .unwrap();
        println!(
            "lambda {lambda:>8}: mean MAE {:.2} LMAE {:.2} UMAE {:.2} PL40 {:.2}% PU60 {:.2}% ({:.0}s)",
            report.mean.mae,
            report.mean.lmae,
            report.mean.umae,
            report.mean.pl40,
            report.mean.pu60,
            t.elapsed().as_secs_f64()
        );
    }
    let _ = TargetSelection::All;
}
