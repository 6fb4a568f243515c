//! Clap synchronization and ground-truth alignment.
//!
//! Sessions are recorded by two unsynchronized systems: the acoustic stream
//! and the blendshape ground truth. A hand clap lands in both; finding it in
//! the audio and knowing its ground-truth frame pins the two timelines
//! together. After trimming, ground truth is resampled to one row per
//! 600-sample frame by linear interpolation, so every frame is paired with
//! a target at exactly its own start time.

use ndarray::Array2;

use crate::blendshape::BLENDSHAPE_COUNT;
use crate::chirp::{StereoWaveform, Waveform};
use crate::error::Error;
use crate::sim::Trajectory;
use crate::window::WINDOW_FRAMES;

/// Clap detector parameters.
#[derive(Debug, Clone, Copy)]
pub struct ClapDetector {
    /// RMS window, seconds.
    pub window_s: f64,
    /// Hop between candidate windows, seconds.
    pub hop_s: f64,
    /// Span of history used for the median reference, seconds.
    pub history_s: f64,
    /// Detection threshold as a multiple of the median window RMS.
    pub threshold: f64,
}

impl Default for ClapDetector {
    fn default() -> Self {
        Self {
            window_s: 0.005,
            hop_s: 0.001,
            history_s: 0.5,
            threshold: 4.0,
        }
    }
}

impl ClapDetector {
    /// First sample index whose 5 ms RMS exceeds `threshold` times the
    /// median 5 ms RMS of the preceding half second, or `None`.
    pub fn detect(&self, x: &Waveform) -> Option<usize> {
        let n = x.len();
        let win = (self.window_s * x.fs).round() as usize;
        let hop = (self.hop_s * x.fs).round() as usize;
        let history = (self.history_s * x.fs).round() as usize;
        if n < history + win || win == 0 || hop == 0 {
            return None;
        }

        // Prefix sums of x^2 for O(1) window energies.
        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(0.0f64);
        for &v in &x.samples {
            prefix.push(prefix.last().unwrap() + v * v);
        }
        let window_rms =
            |start: usize| ((prefix[start + win] - prefix[start]) / win as f64).sqrt();

        // Median reference over non-overlapping windows in the history span.
        let hist_windows = history / win;
        let mut scratch: Vec<f64> = Vec::with_capacity(hist_windows);

        let mut start = history;
        while start + win <= n {
            scratch.clear();
            let hist_base = start - history;
            for k in 0..hist_windows {
                scratch.push(window_rms(hist_base + k * win));
            }
            scratch.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = scratch[scratch.len() / 2];
            if median > 0.0 && window_rms(start) > self.threshold * median {
                return Some(start);
            }
            start += hop;
        }
        None
    }
}

/// [`ClapDetector::detect`] with default parameters.
pub fn detect_clap(x: &Waveform) -> Option<usize> {
    ClapDetector::default().detect(x)
}

/// A session with the acoustic stream and ground truth on one timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSession {
    /// Trimmed signal, an exact multiple of the frame length.
    pub signal: StereoWaveform,
    /// One ground-truth row per frame, `[n_frames x 52]`.
    pub gt: Array2<f64>,
    /// Frame rate of the original ground-truth stream, Hz.
    pub gt_rate: f64,
    /// Samples trimmed off the front of the signal.
    pub offset: usize,
    /// Samples per frame.
    pub frame_len: usize,
}

impl AlignedSession {
    pub fn n_frames(&self) -> usize {
        self.gt.nrows()
    }

    pub fn frame(&self, k: usize) -> [&[f64]; 2] {
        let r = k * self.frame_len..(k + 1) * self.frame_len;
        [&self.signal.ch[0][r.clone()], &self.signal.ch[1][r]]
    }

    /// View the per-frame ground truth as a trajectory at the frame rate.
    pub fn gt_trajectory(&self) -> Trajectory {
        Trajectory {
            frames: self.gt.clone(),
            frame_rate: self.signal.fs / self.frame_len as f64,
        }
    }
}

/// Trim both streams to their common span after the clap and resample the
/// ground truth to one row per frame.
///
/// `clap_signal_idx` is the clap's sample in the signal;
/// `clap_gt_frame` its frame in the ground-truth stream. Frame `k` of the
/// result starts at signal sample `clap_signal_idx + k * frame_len` and its
/// target is the ground truth linearly interpolated at that instant.
pub fn align(
    signal: &StereoWaveform,
    gt: &Trajectory,
    clap_signal_idx: usize,
    clap_gt_frame: usize,
    frame_len: usize,
) -> Result<AlignedSession, Error> {
    if frame_len == 0 {
        return Err(Error::data("frame length must be nonzero"));
    }
    if clap_signal_idx >= signal.len() {
        return Err(Error::data("clap index beyond the signal"));
    }
    if clap_gt_frame >= gt.n_frames() {
        return Err(Error::data("clap frame beyond the ground truth"));
    }
    let frame_dur = frame_len as f64 / signal.fs;
    let signal_frames = (signal.len() - clap_signal_idx) / frame_len;
    let gt_span_s = (gt.n_frames() - 1 - clap_gt_frame) as f64 / gt.frame_rate;
    let gt_frames = (gt_span_s / frame_dur).floor() as usize + 1;
    let n_frames = signal_frames.min(gt_frames);
    if n_frames < WINDOW_FRAMES + 1 {
        return Err(Error::data(format!(
            "session too short: {n_frames} frames after alignment, need {}",
            WINDOW_FRAMES + 1
        )));
    }

    let end = clap_signal_idx + n_frames * frame_len;
    let trimmed = StereoWaveform::new(
        signal.ch[0][clap_signal_idx..end].to_vec(),
        signal.ch[1][clap_signal_idx..end].to_vec(),
        signal.fs,
    );

    let clap_gt_time = clap_gt_frame as f64 / gt.frame_rate;
    let mut rows = Array2::zeros((n_frames, BLENDSHAPE_COUNT));
    for k in 0..n_frames {
        let t = clap_gt_time + k as f64 * frame_dur;
        let row = gt.sample_at(t);
        for (j, v) in row.into_iter().enumerate() {
            rows[[k, j]] = v;
        }
    }

    Ok(AlignedSession {
        signal: trimmed,
        gt: rows,
        gt_rate: gt.frame_rate,
        offset: clap_signal_idx,
        frame_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::inject_clap;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quiet_noise(n: usize, fs: f64, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..n).map(|_| rng.gen_range(-0.01..0.01)).collect(), fs)
    }

    #[test]
    fn detects_an_injected_clap() {
        let x = quiet_noise(100_000, 50_000.0, 1);
        let y = inject_clap(&x, 1.0).unwrap();
        let idx = detect_clap(&y).expect("clap not found");
        assert!((idx as i64 - 50_000).unsigned_abs() <= 250, "found at {idx}");
    }

    #[test]
    fn silence_yields_absent() {
        let x = quiet_noise(100_000, 50_000.0, 2);
        assert_eq!(detect_clap(&x), None);
        // Outright zero signal has no median reference either.
        let z = Waveform::new(vec![0.0; 100_000], 50_000.0);
        assert_eq!(detect_clap(&z), None);
    }

    #[test]
    fn first_of_two_claps_wins() {
        let x = quiet_noise(250_000, 50_000.0, 3);
        let y = inject_clap(&x, 1.0).unwrap();
        let y = inject_clap(&y, 3.0).unwrap();
        let idx = detect_clap(&y).unwrap();
        assert!((idx as i64 - 50_000).unsigned_abs() <= 250, "found at {idx}");
    }

    fn ramp_trajectory(n: usize, rate: f64) -> Trajectory {
        let mut frames = Array2::zeros((n, BLENDSHAPE_COUNT));
        for k in 0..n {
            frames[[k, 0]] = k as f64 * 1000.0 / (n - 1) as f64;
            frames[[k, 1]] = 500.0;
        }
        Trajectory {
            frames,
            frame_rate: rate,
        }
    }

    #[test]
    fn constant_ground_truth_stays_constant() {
        let fs = 50_000.0;
        let signal = StereoWaveform::new(vec![0.0; 120_000], vec![0.0; 120_000], fs);
        let mut frames = Array2::zeros((70, BLENDSHAPE_COUNT));
        frames.fill(500.0);
        let gt = Trajectory {
            frames,
            frame_rate: 30.0,
        };
        let aligned = align(&signal, &gt, 600, 3, 600).unwrap();
        assert!(aligned.gt.iter().all(|&v| v == 500.0));
    }

    #[test]
    fn linear_ground_truth_resamples_exactly() {
        let fs = 50_000.0;
        let n_samples = 300_000;
        let signal = StereoWaveform::new(vec![0.0; n_samples], vec![0.0; n_samples], fs);
        let gt = ramp_trajectory(180, 30.0); // 6 s ramp
        let aligned = align(&signal, &gt, 1_234, 0, 600).unwrap();
        let slope = 1000.0 / (179.0 / 30.0); // units per second
        for k in 0..aligned.n_frames() {
            let t = k as f64 * 0.012;
            let want = (slope * t).min(1000.0);
            assert!(
                (aligned.gt[[k, 0]] - want).abs() < 1e-9,
                "frame {k}: {} vs {want}",
                aligned.gt[[k, 0]]
            );
        }
    }

    #[test]
    fn two_minute_session_scale() {
        let fs = 50_000.0;
        let n = (120.0 * fs) as usize;
        let signal = StereoWaveform::new(vec![0.0; n], vec![0.0; n], fs);
        let gt = ramp_trajectory(3_620, 30.0); // a hair over 120 s
        let aligned = align(&signal, &gt, 0, 0, 600).unwrap();
        assert!((9_900..=10_000).contains(&aligned.n_frames()), "{}", aligned.n_frames());
    }

    #[test]
    fn alignment_is_idempotent() {
        let fs = 50_000.0;
        let signal = StereoWaveform::new(vec![0.1; 120_000], vec![0.2; 120_000], fs);
        let gt = ramp_trajectory(90, 30.0);
        let first = align(&signal, &gt, 600, 2, 600).unwrap();
        let again = align(&first.signal, &first.gt_trajectory(), 0, 0, 600).unwrap();
        assert_eq!(first.signal, again.signal);
        let max_dev = first
            .gt
            .iter()
            .zip(again.gt.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 1e-9, "gt deviation {max_dev}");
    }

    #[test]
    fn short_sessions_are_rejected() {
        let fs = 50_000.0;
        let signal = StereoWaveform::new(vec![0.0; 30_000], vec![0.0; 30_000], fs);
        let gt = ramp_trajectory(60, 30.0);
        assert!(align(&signal, &gt, 0, 0, 600).is_err());
    }

    #[test]
    fn clap_recovery_is_within_five_ms_on_random_sessions() {
        let fs = 50_000.0;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..30 {
            let n = 110_000;
            let x = quiet_noise(n, fs, 1_000 + trial);
            let clap_t = rng.gen_range(0.6..1.4);
            let y = inject_clap(&x, clap_t).unwrap();
            let idx = detect_clap(&y).expect("clap not found");
            let want = (clap_t * fs).round() as i64;
            assert!(
                (idx as i64 - want).unsigned_abs() <= 250,
                "trial {trial}: found {idx}, injected {want}"
            );
        }
    }
}
