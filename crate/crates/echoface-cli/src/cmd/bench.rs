//! Per-stage latency benchmark with hard real-time gates.
//!
//! Budgets: the DSP stage must sustain the native frame rate (83.3 frames/s,
//! p99 under the 12 ms frame length) and the full prediction path must
//! sustain at least 29 predictions per second. Violations exit with code 3.

use clap::Parser;
use ndarray::Array2;
use std::path::PathBuf;
use std::time::Instant;

use echoface::chirp::{generate_chirp, ChirpSpec};
use echoface::error::{Error, Result};
use echoface::pipeline::FrameProcessor;
use echoface::ridge::{NormStats, RidgeModel};
use echoface::sim::{render_received, Scene, Trajectory};

use super::stream::{percentiles, LatencyStats};
use crate::manifest::Manifest;

#[derive(Parser)]
pub struct Args {
    /// Frames to push through the DSP stage.
    #[arg(long, default_value_t = 600)]
    pub frames: usize,
    /// Predictions to time.
    #[arg(long, default_value_t = 400)]
    pub predictions: usize,
    /// Write the report JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn hardware_description() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .map(|l| l.split(':').nth(1).unwrap_or("").trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".to_string());
    let cores = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(0);
    format!("{cpu} ({cores} logical cores)")
}

pub struct BenchReport {
    pub chirp_ms: f64,
    pub dsp: LatencyStats,
    pub dsp_rate_per_s: f64,
    pub ridge_predict: LatencyStats,
    pub prediction_rate_per_s: f64,
    pub violations: Vec<String>,
}

pub fn run_bench(frames: usize, predictions: usize) -> Result<BenchReport> {
    let chirp = ChirpSpec::default();

    // Chirp generation.
    let t = Instant::now();
    let template = generate_chirp(&chirp)?;
    let chirp_ms = t.elapsed().as_secs_f64() * 1e3;
    drop(template);

    // A moving scene so the DSP path does representative work.
    let mut traj_frames = Array2::zeros((frames, echoface::blendshape::BLENDSHAPE_COUNT));
    for k in 0..frames {
        traj_frames[[k, 24]] = 300.0 + 200.0 * ((k as f64) * 0.05).sin();
        traj_frames[[k, 8]] = 150.0 + 150.0 * ((k as f64) * 0.11).cos();
    }
    let traj = Trajectory {
        frames: traj_frames,
        frame_rate: chirp.frame_rate(),
    };
    let audio = render_received(&Scene::default_face(), &traj, &chirp)?;

    let n = chirp.n_samples;
    let mut proc = FrameProcessor::new(&chirp)?;
    let mut dsp_ms = Vec::with_capacity(frames);
    let mut windows = Vec::new();
    let t_total = Instant::now();
    for f in 0..frames {
        let t = Instant::now();
        let out = proc.push_frame([&audio.ch[0][f * n..(f + 1) * n], &audio.ch[1][f * n..(f + 1) * n]])?;
        dsp_ms.push(t.elapsed().as_secs_f64() * 1e3);
        if let Some(w) = out.window {
            if windows.len() < 8 {
                windows.push(w);
            }
        }
    }
    let dsp_elapsed = t_total.elapsed().as_secs_f64();
    let dsp_rate = frames as f64 / dsp_elapsed;
    let dsp = percentiles(&mut dsp_ms);

    if windows.is_empty() {
        return Err(Error::data("benchmark session produced no windows"));
    }

    // Ridge prediction latency: the cost is independent of the weights, so
    // a synthetic model measures the honest path.
    let d = echoface::dataset::WINDOW_FEATURES;
    let weights = Array2::from_shape_fn((d, 52), |(i, j)| ((i * 53 + j) % 97) as f64 * 1e-4);
    let model = RidgeModel {
        weights,
        bias: vec![500.0; 52],
        lambda: 1.0,
        norm: NormStats {
            mean: 0.0,
            scale: 1.0,
        },
    };
    let mut ridge_ms = Vec::with_capacity(predictions);
    let t_rate = Instant::now();
    for i in 0..predictions {
        let w = &windows[i % windows.len()];
        let t = Instant::now();
        let _ = model.predict(w)?;
        ridge_ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let predict_elapsed = t_rate.elapsed().as_secs_f64();
    let ridge_predict = percentiles(&mut ridge_ms);

    // Full path rate: DSP plus prediction per frame.
    let frame_cost_s = dsp_elapsed / frames as f64 + predict_elapsed / predictions as f64;
    let prediction_rate = 1.0 / frame_cost_s;

    let mut violations = Vec::new();
    if dsp.p99_ms >= 12.0 {
        violations.push(format!("DSP p99 {:.3} ms >= 12 ms frame budget", dsp.p99_ms));
    }
    if dsp_rate < chirp.frame_rate() {
        violations.push(format!(
            "DSP rate {:.1}/s under the native frame rate {:.1}/s",
            dsp_rate,
            chirp.frame_rate()
        ));
    }
    if ridge_predict.p99_ms >= 1.0 {
        violations.push(format!(
            "ridge predict p99 {:.3} ms >= 1 ms",
            ridge_predict.p99_ms
        ));
    }
    if prediction_rate < 29.0 {
        violations.push(format!(
            "end-to-end prediction rate {prediction_rate:.1}/s under 29/s"
        ));
    }

    Ok(BenchReport {
        chirp_ms,
        dsp,
        dsp_rate_per_s: dsp_rate,
        ridge_predict,
        prediction_rate_per_s: prediction_rate,
        violations,
    })
}

pub fn run(args: Args) -> Result<i32> {
    let report = run_bench(args.frames, args.predictions)?;
    let hardware = hardware_description();

    println!("hardware: {hardware}");
    println!("chirp generation: {:.3} ms", report.chirp_ms);
    println!(
        "dsp per frame: p50 {:.3} / p95 {:.3} / p99 {:.3} ms ({:.1} frames/s)",
        report.dsp.p50_ms, report.dsp.p95_ms, report.dsp.p99_ms, report.dsp_rate_per_s
    );
    println!(
        "ridge predict: p50 {:.3} / p99 {:.3} ms",
        report.ridge_predict.p50_ms, report.ridge_predict.p99_ms
    );
    println!("end-to-end prediction rate: {:.1}/s", report.prediction_rate_per_s);

    if let Some(out) = &args.out {
        let json = serde_json::json!({
            "hardware": hardware,
            "chirp_ms": report.chirp_ms,
            "dsp_per_frame_ms": report.dsp,
            "dsp_rate_per_s": report.dsp_rate_per_s,
            "ridge_predict_ms": report.ridge_predict,
            "prediction_rate_per_s": report.prediction_rate_per_s,
            "violations": report.violations,
        });
        std::fs::write(out, serde_json::to_string_pretty(&json).map_err(|e| Error::data(e.to_string()))?)?;
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            Manifest::new(
                "bench",
                None,
                serde_json::json!({ "hardware": hardware, "frames": args.frames }),
            )
            .write(dir)?;
        }
    }

    if report.violations.is_empty() {
        println!("all real-time budgets met");
        Ok(0)
    } else {
        for v in &report.violations {
            eprintln!("budget violation: {v}");
        }
        Ok(3)
    }
}
