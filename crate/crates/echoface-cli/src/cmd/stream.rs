//! Loopback streaming: replay a session as wire packets over TCP and run
//! capture/decode, DSP, and inference as a three-stage pipeline.
//!
//! Stage boundaries are bounded queues. The capture queue drops its oldest
//! chunk when full (and counts the drop); the window queue applies
//! back-pressure instead, so frame order within the session is never
//! violated. With zero loss and as-fast-as-possible pacing the pipeline
//! produces bit-identical predictions to the offline path.

use clap::Parser;
use std::collections::VecDeque;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use echoface::chirp::Waveform;
use echoface::error::{Error, Result};
use echoface::model::{load_model, Model};
use echoface::pipeline::FrameProcessor;
use echoface::wire::{detect_clap, packetize, Packet, PACKET_HEADER_LEN, PACKET_MAGIC, REORDER_WINDOW};

use crate::manifest::Manifest;

#[derive(Parser)]
pub struct Args {
    /// Session directory from `simulate`.
    #[arg(long)]
    pub session: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Output directory (predictions.csv, latency.json, manifest.json).
    #[arg(long)]
    pub out: PathBuf,
    /// Pacing: "realtime" (800 kbps schedule) or "fast".
    #[arg(long, default_value = "fast")]
    pub pace: String,
    /// Random packet loss probability on the replay link.
    #[arg(long, default_value_t = 0.0)]
    pub loss: f64,
    /// Sample pairs per packet.
    #[arg(long, default_value_t = 120)]
    pub samples_per_packet: usize,
    /// Operating band: default or high.
    #[arg(long, default_value = "default")]
    pub profile: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub force: bool,
}

/// Drop-oldest bounded queue for decoded sample chunks.
struct CaptureQueue {
    inner: Mutex<CaptureState>,
    ready: Condvar,
    capacity: usize,
}

struct CaptureState {
    chunks: VecDeque<Vec<i8>>,
    dropped: usize,
    closed: bool,
}

impl CaptureQueue {
    fn new(capacity: usize) -> Self {
        Self {
            inner: Mutex::new(CaptureState {
                chunks: VecDeque::new(),
                dropped: 0,
                closed: false,
            }),
            ready: Condvar::new(),
            capacity,
        }
    }

    fn push(&self, chunk: Vec<i8>) {
        let mut st = self.inner.lock().unwrap();
        if st.chunks.len() == self.capacity {
            st.chunks.pop_front();
            st.dropped += 1;
        }
        st.chunks.push_back(chunk);
        self.ready.notify_one();
    }

    fn pop(&self) -> Option<Vec<i8>> {
        let mut st = self.inner.lock().unwrap();
        loop {
            if let Some(c) = st.chunks.pop_front() {
                return Some(c);
            }
            if st.closed {
                return None;
            }
            st = self.ready.wait(st).unwrap();
        }
    }

    fn close(&self) {
        self.inner.lock().unwrap().closed = true;
        self.ready.notify_all();
    }

    fn dropped(&self) -> usize {
        self.inner.lock().unwrap().dropped
    }
}

/// Incremental packet reassembly with the same semantics as the offline
/// decoder: in-order emission, a 16-packet reorder window, zero-fill for
/// packets declared lost.
struct StreamReassembler {
    expected: Option<u16>,
    pending: Vec<Packet>,
    payload_len: usize,
    lost: usize,
    reordered: usize,
}

impl StreamReassembler {
    fn new() -> Self {
        Self {
            expected: None,
            pending: Vec::new(),
            payload_len: 0,
            lost: 0,
            reordered: 0,
        }
    }

    fn push(&mut self, p: Packet, mut emit: impl FnMut(Vec<i8>)) {
        if self.expected.is_none() {
            self.expected = Some(p.seq);
            self.payload_len = p.payload.len().max(2);
        }
        if p.seq != self.expected.unwrap() {
            self.reordered += 1;
        }
        self.pending.push(p);
        loop {
            let expected = self.expected.unwrap();
            if let Some(pos) = self.pending.iter().position(|q| q.seq == expected) {
                let q = self.pending.swap_remove(pos);
                emit(q.payload);
                self.expected = Some(expected.wrapping_add(1));
            } else if self
                .pending
                .iter()
                .any(|q| q.seq.wrapping_sub(expected) as usize > REORDER_WINDOW)
            {
                self.lost += 1;
                emit(vec![0i8; self.payload_len]);
                self.expected = Some(expected.wrapping_add(1));
            } else {
                break;
            }
        }
    }

    fn flush(&mut self, mut emit: impl FnMut(Vec<i8>)) {
        while !self.pending.is_empty() {
            let expected = self.expected.unwrap();
            if let Some(pos) = self.pending.iter().position(|q| q.seq == expected) {
                let q = self.pending.swap_remove(pos);
                emit(q.payload);
            } else {
                self.lost += 1;
                emit(vec![0i8; self.payload_len]);
            }
            self.expected = Some(expected.wrapping_add(1));
        }
    }
}

/// Latency percentiles in milliseconds.
#[derive(serde::Serialize)]
pub struct LatencyStats {
    pub count: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub mean_ms: f64,
}

pub fn percentiles(samples_ms: &mut [f64]) -> LatencyStats {
    samples_ms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| -> f64 {
        if samples_ms.is_empty() {
            return f64::NAN;
        }
        let idx = ((samples_ms.len() as f64 - 1.0) * p).round() as usize;
        samples_ms[idx]
    };
    LatencyStats {
        count: samples_ms.len(),
        p50_ms: q(0.50),
        p95_ms: q(0.95),
        p99_ms: q(0.99),
        mean_ms: samples_ms.iter().sum::<f64>() / samples_ms.len().max(1) as f64,
    }
}

pub struct StreamOutcome {
    pub predictions: Vec<(usize, Vec<f64>)>,
    pub dsp_ms: Vec<f64>,
    pub prediction_period_ms: Vec<f64>,
    pub capture_drops: usize,
    pub lost_packets: usize,
    pub elapsed_s: f64,
}

/// Run the replay pipeline; separated from the CLI wrapper so tests and the
/// benchmark can call it directly.
pub fn run_stream(
    session_dir: &std::path::Path,
    model: &Model,
    chirp: &echoface::chirp::ChirpSpec,
    pace_realtime: bool,
    loss: f64,
    samples_per_packet: usize,
    seed: u64,
) -> Result<StreamOutcome> {
    let wave = echoface::waveio::WaveFile::read(&session_dir.join("signal.eewv"))?;
    let interleaved = match &wave.data {
        echoface::waveio::WaveData::I8(v) => v.clone(),
        _ => return Err(Error::data("stream replay expects an 8-bit session file")),
    };
    let fs = wave.fs as f64;
    let packets = packetize(&interleaved, samples_per_packet)?;

    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;

    // Producer: serialize packets over the socket, optionally dropping some
    // and pacing to the nominal bit rate.
    let producer = std::thread::spawn(move || -> std::io::Result<()> {
        let mut sock = TcpStream::connect(addr)?;
        let start = Instant::now();
        let packet_duration = samples_per_packet as f64 / fs;
        let mut rng_state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let mut next_u64 = move || {
            // SplitMix64; deterministic loss pattern per seed.
            rng_state = rng_state.wrapping_add(0x9E3779B97F4A7C15);
            let mut z = rng_state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            z ^ (z >> 31)
        };
        for (k, p) in packets.iter().enumerate() {
            if loss > 0.0 && (next_u64() as f64 / u64::MAX as f64) < loss {
                continue;
            }
            if pace_realtime {
                let target = start + Duration::from_secs_f64(k as f64 * packet_duration);
                if let Some(sleep) = target.checked_duration_since(Instant::now()) {
                    std::thread::sleep(sleep);
                }
            }
            sock.write_all(&p.encode())?;
        }
        Ok(())
    });

    let (mut sock, _) = listener.accept()?;
    let capture = Arc::new(CaptureQueue::new(256));

    // Stage 1: capture and decode.
    let capture_in = Arc::clone(&capture);
    let decoder = std::thread::spawn(move || -> Result<usize> {
        let mut reasm = StreamReassembler::new();
        let mut buf = Vec::new();
        let mut tmp = [0u8; 4096];
        loop {
            let n = sock.read(&mut tmp)?;
            if n == 0 {
                break;
            }
            buf.extend_from_slice(&tmp[..n]);
            let mut pos = 0;
            while buf.len() - pos >= PACKET_HEADER_LEN {
                if buf[pos..pos + 2] != PACKET_MAGIC {
                    pos += 1;
                    continue;
                }
                match Packet::decode(&buf[pos..]) {
                    Ok((p, used)) => {
                        reasm.push(p, |payload| capture_in.push(payload));
                        pos += used;
                    }
                    Err(_) => break, // wait for more bytes
                }
            }
            buf.drain(0..pos);
        }
        reasm.flush(|payload| capture_in.push(payload));
        capture_in.close();
        Ok(reasm.lost)
    });

    // Stage 2: alignment + DSP. Buffers the stream until the clap appears,
    // then frames from the clap onward.
    let (window_tx, window_rx) = std::sync::mpsc::sync_channel::<(usize, echoface::window::EchoWindow, f64)>(64);
    let capture_out = Arc::clone(&capture);
    let chirp_dsp = chirp.clone();
    let dsp = std::thread::spawn(move || -> Result<Vec<f64>> {
        let n = chirp_dsp.n_samples;
        let mut proc = FrameProcessor::new(&chirp_dsp)?;
        let mut dsp_ms = Vec::new();
        let mut ch0: Vec<f64> = Vec::new();
        let mut ch1: Vec<f64> = Vec::new();
        let mut clap: Option<usize> = None;
        let mut next_frame_start = 0usize;
        let mut last_detect_len = 0usize;
        while let Some(chunk) = capture_out.pop() {
            for pair in chunk.chunks_exact(2) {
                ch0.push(pair[0] as f64 / 127.0);
                ch1.push(pair[1] as f64 / 127.0);
            }
            if clap.is_none() {
                // Re-run detection only on meaningful growth.
                if ch0.len() >= 30_000 && ch0.len() - last_detect_len >= 12_500 {
                    last_detect_len = ch0.len();
                    if let Some(idx) = detect_clap(&Waveform::new(ch0.clone(), chirp_dsp.fs)) {
                        clap = Some(idx);
                        next_frame_start = idx;
                    }
                }
            }
            if let Some(_) = clap {
                while ch0.len() >= next_frame_start + n {
                    let t = Instant::now();
                    let out = proc.push_frame([
                        &ch0[next_frame_start..next_frame_start + n],
                        &ch1[next_frame_start..next_frame_start + n],
                    ])?;
                    dsp_ms.push(t.elapsed().as_secs_f64() * 1e3);
                    if let Some(w) = out.window {
                        // Blocking send: back-pressure, never reordering.
                        let _ = window_tx.send((out.frame_index, w, 0.0));
                    }
                    next_frame_start += n;
                }
            }
        }
        Ok(dsp_ms)
    });

    // Stage 3: inference on this thread.
    let start = Instant::now();
    let mut predictions = Vec::new();
    let mut period_ms = Vec::new();
    let mut last_pred: Option<Instant> = None;
    while let Ok((frame, window, _)) = window_rx.recv() {
        let raw = model.predict_raw(&window)?;
        if let Some(prev) = last_pred {
            period_ms.push(prev.elapsed().as_secs_f64() * 1e3);
        }
        last_pred = Some(Instant::now());
        predictions.push((frame, raw));
    }
    let elapsed_s = start.elapsed().as_secs_f64();

    let dsp_ms = dsp.join().map_err(|_| Error::data("dsp stage panicked"))??;
    let lost = decoder.join().map_err(|_| Error::data("decode stage panicked"))??;
    producer
        .join()
        .map_err(|_| Error::data("producer panicked"))?
        .map_err(Error::Io)?;

    Ok(StreamOutcome {
        predictions,
        dsp_ms,
        prediction_period_ms: period_ms,
        capture_drops: capture.dropped(),
        lost_packets: lost,
        elapsed_s,
    })
}

pub fn run(args: Args) -> Result<i32> {
    let chirp = super::chirp_profile(&args.profile)?;
    let model = load_model(&args.model)?;
    crate::manifest::prepare_out_dir(&args.out, args.force)?;
    let pace_realtime = match args.pace.as_str() {
        "realtime" => true,
        "fast" => false,
        other => return Err(Error::data(format!("unknown pace {other:?} (realtime|fast)"))),
    };

    let mut outcome = run_stream(
        &args.session,
        &model,
        &chirp,
        pace_realtime,
        args.loss,
        args.samples_per_packet,
        args.seed,
    )?;

    // Predictions CSV in the same layout as offline predict.
    let frame_rate = chirp.frame_rate();
    let out_dim = model.out_dim();
    let mut rows = ndarray::Array2::zeros((outcome.predictions.len(), out_dim));
    for (i, (_, raw)) in outcome.predictions.iter().enumerate() {
        for (o, v) in raw.iter().enumerate() {
            rows[[i, o]] = *v;
        }
    }
    if out_dim == echoface::blendshape::BLENDSHAPE_COUNT && !outcome.predictions.is_empty() {
        echoface::waveio::write_blendshape_csv(
            &args.out.join("predictions.csv"),
            &rows,
            frame_rate,
            outcome.predictions[0].0,
        )?;
    }

    let n_pred = outcome.predictions.len();
    let rate = n_pred as f64 / outcome.elapsed_s;
    let dsp = percentiles(&mut outcome.dsp_ms);
    let period = percentiles(&mut outcome.prediction_period_ms);
    let stats = serde_json::json!({
        "predictions": n_pred,
        "prediction_rate_per_s": rate,
        "dsp_per_frame_ms": dsp,
        "prediction_period_ms": period,
        "capture_drops": outcome.capture_drops,
        "lost_packets": outcome.lost_packets,
        "elapsed_s": outcome.elapsed_s,
    });
    std::fs::write(
        args.out.join("latency.json"),
        serde_json::to_string_pretty(&stats).map_err(|e| Error::data(e.to_string()))?,
    )?;
    Manifest::new(
        "stream",
        Some(args.seed),
        serde_json::json!({
            "session": args.session,
            "model": args.model,
            "pace": args.pace,
            "loss": args.loss,
            "samples_per_packet": args.samples_per_packet,
            "profile": args.profile,
        }),
    )
    .write(&args.out)?;
    println!(
        "{n_pred} predictions at {rate:.1}/s; dsp p99 {:.3} ms; {} drops, {} lost packets",
        dsp.p99_ms, outcome.capture_drops, outcome.lost_packets
    );
    Ok(0)
}
