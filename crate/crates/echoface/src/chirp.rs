//! FMCW chirp synthesis and sample-domain bookkeeping.
//!
//! The transmitted signal is a linear frequency sweep repeated back to back.
//! One sweep is one *frame*; every downstream quantity (echo profiles,
//! differential profiles, model windows) is indexed in frames.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Speed of sound used for bin/distance conversions, m/s.
pub const SPEED_OF_SOUND: f64 = 340.0;

/// Parameters of the transmitted FMCW sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChirpSpec {
    /// Sweep start frequency, Hz.
    pub f_lo: f64,
    /// Sweep end frequency, Hz.
    pub f_hi: f64,
    /// Sample rate, Hz.
    pub fs: f64,
    /// Samples per frame.
    pub n_samples: usize,
    /// Peak amplitude, in (0, 1].
    pub amplitude: f64,
}

impl Default for ChirpSpec {
    fn default() -> Self {
        Self {
            f_lo: 16_000.0,
            f_hi: 20_000.0,
            fs: 50_000.0,
            n_samples: 600,
            amplitude: 1.0,
        }
    }
}

impl ChirpSpec {
    /// The alternate operating band, shifted above most adults' hearing range.
    pub fn high_band() -> Self {
        Self {
            f_lo: 20_000.0,
            f_hi: 24_000.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.f_lo > 0.0) {
            return Err(ConfigError::new(format!("f_lo must be > 0, got {}", self.f_lo)));
        }
        if !(self.f_hi > self.f_lo) {
            return Err(ConfigError::new(format!(
                "f_hi must exceed f_lo, got f_lo={} f_hi={}",
                self.f_lo, self.f_hi
            )));
        }
        if !(self.f_hi < self.fs / 2.0) {
            return Err(ConfigError::new(format!(
                "f_hi must be below fs/2 = {}, got {}",
                self.fs / 2.0,
                self.f_hi
            )));
        }
        if self.n_samples < 2 {
            return Err(ConfigError::new(format!(
                "n_samples must be >= 2, got {}",
                self.n_samples
            )));
        }
        if !(self.amplitude > 0.0 && self.amplitude <= 1.0) {
            return Err(ConfigError::new(format!(
                "amplitude must be in (0, 1], got {}",
                self.amplitude
            )));
        }
        Ok(())
    }

    /// Frame duration in seconds (`n_samples / fs`).
    pub fn frame_duration(&self) -> f64 {
        self.n_samples as f64 / self.fs
    }

    /// Frames per second (`fs / n_samples`).
    pub fn frame_rate(&self) -> f64 {
        self.fs / self.n_samples as f64
    }
}

/// A sampled signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub fs: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, fs: f64) -> Self {
        Self { samples, fs }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64).sqrt()
    }
}

/// Two microphone channels sampled on a common clock.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoWaveform {
    pub ch: [Vec<f64>; 2],
    pub fs: f64,
}

impl StereoWaveform {
    pub fn new(ch0: Vec<f64>, ch1: Vec<f64>, fs: f64) -> Self {
        assert_eq!(ch0.len(), ch1.len(), "channel lengths must match");
        Self { ch: [ch0, ch1], fs }
    }

    pub fn len(&self) -> usize {
        self.ch[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.ch[0].is_empty()
    }

    pub fn channel(&self, i: usize) -> Waveform {
        Waveform::new(self.ch[i].clone(), self.fs)
    }
}

/// Generate one frame of the transmitted sweep.
///
/// Sample `i` is `amplitude * sin(2 pi (f_lo t + (f_hi - f_lo) t^2 / 2T))` with
/// `t = i / fs` and `T = n_samples / fs`, so the instantaneous frequency runs
/// linearly from `f_lo` at the first sample to `f_hi` at the end of the frame.
pub fn generate_chirp(spec: &ChirpSpec) -> Result<Waveform, ConfigError> {
    spec.validate()?;
    let t_total = spec.frame_duration();
    let slope = (spec.f_hi - spec.f_lo) / (2.0 * t_total);
    let samples = (0..spec.n_samples)
        .map(|i| {
            let t = i as f64 / spec.fs;
            let phase = 2.0 * std::f64::consts::PI * (spec.f_lo * t + slope * t * t);
            spec.amplitude * phase.sin()
        })
        .collect();
    Ok(Waveform::new(samples, spec.fs))
}

/// Split a signal into consecutive non-overlapping frames of `n` samples.
/// A trailing partial frame is discarded.
pub fn frame_stream(x: &Waveform, n: usize) -> Result<impl Iterator<Item = &[f64]>, ConfigError> {
    if n == 0 {
        return Err(ConfigError::new("frame length must be nonzero"));
    }
    Ok(x.samples.chunks_exact(n))
}

/// One-way distance of an echo bin in meters: `bin * (c / fs) / 2`.
pub fn bin_to_distance(bin: usize, fs: f64) -> f64 {
    bin_to_distance_with(bin, fs, SPEED_OF_SOUND)
}

/// [`bin_to_distance`] with an explicit speed of sound.
pub fn bin_to_distance_with(bin: usize, fs: f64, c: f64) -> f64 {
    bin as f64 * (c / fs) / 2.0
}

/// Round-trip delay of a reflector at one-way distance `d`, in samples.
pub fn distance_to_delay_samples(d: f64, fs: f64, c: f64) -> f64 {
    2.0 * d / c * fs
}
