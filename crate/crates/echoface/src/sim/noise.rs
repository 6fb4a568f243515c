//! Noise and clap injection.
//!
//! Environmental noise is modeled two ways: broadband white noise at a given
//! SNR, and audible-band noise built from random tones below a cutoff. The
//! tonal model keeps the noise strictly band-limited, which is what the
//! band-pass rejection property measures. Claps are short full-band bursts
//! scaled against the running signal level.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::chirp::{StereoWaveform, Waveform};
use crate::error::ConfigError;

/// Band-limited audible noise: random tones below `f_max`, scaled to sit
/// `snr_db` below the signal RMS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AudibleBand {
    pub f_max: f64,
    pub snr_db: f64,
}

/// Noise configuration; both components default to off.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// White-noise SNR in dB, `None` = off.
    pub white_snr_db: Option<f64>,
    /// Audible-band tonal noise, `None` = off.
    pub audible_band: Option<AudibleBand>,
}

impl NoiseSpec {
    pub fn is_off(&self) -> bool {
        self.white_snr_db.is_none() && self.audible_band.is_none()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(band) = &self.audible_band {
            if band.f_max > 15_000.0 {
                return Err(ConfigError::new(format!(
                    "audible band cutoff {} Hz exceeds 15 kHz",
                    band.f_max
                )));
            }
            if band.f_max <= 0.0 {
                return Err(ConfigError::new("audible band cutoff must be positive"));
            }
        }
        Ok(())
    }
}

fn snr_to_rms(signal_rms: f64, snr_db: f64) -> f64 {
    signal_rms * 10f64.powf(-snr_db / 20.0)
}

/// Add noise per `spec`; deterministic in `seed`, identity when off.
pub fn inject_noise(x: &Waveform, spec: &NoiseSpec, seed: u64) -> Waveform {
    if spec.is_off() {
        return x.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let signal_rms = x.rms();
    let mut samples = x.samples.clone();

    if let Some(snr_db) = spec.white_snr_db {
        let sigma = snr_to_rms(signal_rms, snr_db);
        if sigma > 0.0 && sigma.is_finite() {
            for s in samples.iter_mut() {
                let n: f64 = rng.sample(StandardNormal);
                *s += sigma * n;
            }
        }
    }

    if let Some(band) = spec.audible_band {
        let target_rms = snr_to_rms(signal_rms, band.snr_db);
        if target_rms > 0.0 && target_rms.is_finite() {
            let n_tones = 64;
            let tones: Vec<(f64, f64, f64)> = (0..n_tones)
                .map(|_| {
                    let f = rng.gen_range(40.0..band.f_max * 0.98);
                    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                    let amp = rng.gen_range(0.2..1.0);
                    (f, phase, amp)
                })
                .collect();
            // Scale the tone mixture to the exact target RMS; each tone
            // contributes amp^2/2 to the mean square.
            let ms: f64 = tones.iter().map(|(_, _, a)| a * a / 2.0).sum();
            let scale = target_rms / ms.sqrt();
            for (i, s) in samples.iter_mut().enumerate() {
                let t = i as f64 / x.fs;
                let mut v = 0.0;
                for (f, phase, amp) in &tones {
                    v += amp * (std::f64::consts::TAU * f * t + phase).sin();
                }
                *s += scale * v;
            }
        }
    }

    Waveform::new(samples, x.fs)
}

/// Per-channel noise with independent streams derived from `seed`.
pub fn inject_noise_stereo(x: &StereoWaveform, spec: &NoiseSpec, seed: u64) -> StereoWaveform {
    let ch0 = inject_noise(&Waveform::new(x.ch[0].clone(), x.fs), spec, seed.wrapping_mul(2));
    let ch1 = inject_noise(
        &Waveform::new(x.ch[1].clone(), x.fs),
        spec,
        seed.wrapping_mul(2).wrapping_add(1),
    );
    StereoWaveform::new(ch0.samples, ch1.samples, x.fs)
}

/// Duration of the injected clap burst, seconds.
pub const CLAP_DURATION_S: f64 = 0.010;

/// Add a 10 ms full-band burst at `at` seconds, scaled to 5x the running
/// RMS of the preceding half second. Deterministic: the burst is seeded by
/// its own sample position.
pub fn inject_clap(x: &Waveform, at: f64) -> Result<Waveform, ConfigError> {
    let n = x.len();
    let start = (at * x.fs).round() as i64;
    let burst_len = (CLAP_DURATION_S * x.fs).round() as usize;
    if start < 0 || (start as usize) + burst_len > n {
        return Err(ConfigError::new(format!(
            "clap at {at} s does not fit in a {:.3} s signal",
            x.duration()
        )));
    }
    let start = start as usize;

    // Reference level: RMS of up to 0.5 s before the clap; a silent lead-in
    // falls back to a small floor so the burst still exists.
    let ref_start = start.saturating_sub((0.5 * x.fs) as usize);
    let reference = &x.samples[ref_start..start.max(ref_start + 1).min(n)];
    let mut ref_rms = (reference.iter().map(|v| v * v).sum::<f64>() / reference.len() as f64).sqrt();
    if !(ref_rms > 0.0) {
        ref_rms = 1e-4;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0xC1A9 ^ start as u64);
    let raw: Vec<f64> = (0..burst_len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let raw_rms = (raw.iter().map(|v| v * v).sum::<f64>() / raw.len() as f64).sqrt();
    let scale = 5.0 * ref_rms / raw_rms;

    let mut samples = x.samples.clone();
    for (i, b) in raw.into_iter().enumerate() {
        samples[start + i] += scale * b;
    }
    Ok(Waveform::new(samples, x.fs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(n: usize, fs: f64, f: f64, amp: f64) -> Waveform {
        Waveform::new(
            (0..n)
                .map(|i| amp * (std::f64::consts::TAU * f * i as f64 / fs).sin())
                .collect(),
            fs,
        )
    }

    #[test]
    fn off_spec_is_identity() {
        let x = tone(5_000, 50_000.0, 18_000.0, 0.4);
        let y = inject_noise(&x, &NoiseSpec::default(), 3);
        assert_eq!(x, y);
    }

    #[test]
    fn infinite_snr_is_identity() {
        let x = tone(5_000, 50_000.0, 18_000.0, 0.4);
        let spec = NoiseSpec {
            white_snr_db: Some(f64::INFINITY),
            audible_band: None,
        };
        let y = inject_noise(&x, &spec, 3);
        assert_eq!(x, y);
    }

    #[test]
    fn white_noise_hits_the_requested_snr() {
        let x = tone(50_000, 50_000.0, 18_000.0, 0.5);
        let spec = NoiseSpec {
            white_snr_db: Some(20.0),
            audible_band: None,
        };
        let y = inject_noise(&x, &spec, 7);
        let noise_rms = (x
            .samples
            .iter()
            .zip(&y.samples)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / x.len() as f64)
            .sqrt();
        let want = x.rms() * 0.1;
        assert!((noise_rms / want - 1.0).abs() < 0.05, "noise rms {noise_rms} vs {want}");
    }

    #[test]
    fn audible_band_stays_below_cutoff() {
        // All energy is tonal below f_max, so correlating against any
        // passband tone should find essentially nothing after filtering.
        let x = Waveform::new(vec![0.0; 50_000], 50_000.0);
        let spec = NoiseSpec {
            white_snr_db: None,
            audible_band: Some(AudibleBand {
                f_max: 5_000.0,
                snr_db: -10.0,
            }),
        };
        // Zero signal: RMS reference is 0, so nothing is added.
        let y = inject_noise(&x, &spec, 9);
        assert_eq!(x, y);

        let x = tone(50_000, 50_000.0, 18_000.0, 0.5);
        let y = inject_noise(&x, &spec, 9);
        let coeffs = crate::filter::design_bandpass(&crate::filter::BandpassSpec::default()).unwrap();
        let filtered = crate::filter::apply_filter(&coeffs, &y);
        // After the band-pass, the noisy signal should match the clean tone
        // closely in steady state.
        let clean = crate::filter::apply_filter(&coeffs, &x);
        let err: f64 = filtered.samples[5_000..]
            .iter()
            .zip(&clean.samples[5_000..])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.01 * 0.5, "post-filter residual {err}");
    }

    #[test]
    fn audible_band_cutoff_is_bounded() {
        let spec = NoiseSpec {
            white_snr_db: None,
            audible_band: Some(AudibleBand {
                f_max: 16_000.0,
                snr_db: 0.0,
            }),
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn clap_lands_where_asked() {
        let x = tone(100_000, 50_000.0, 18_000.0, 0.02);
        let y = inject_clap(&x, 1.0).unwrap();
        let peak_idx = y
            .samples
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap()
            .0;
        assert!((peak_idx as i64 - 50_000).unsigned_abs() <= 500);

        assert!(inject_clap(&x, 2.5).is_err());
        assert!(inject_clap(&x, -0.1).is_err());
    }

    #[test]
    fn clap_burst_level_tracks_the_signal() {
        let x = tone(100_000, 50_000.0, 18_000.0, 0.2);
        let y = inject_clap(&x, 1.0).unwrap();
        let burst: Vec<f64> = (50_000..50_500)
            .map(|i| y.samples[i] - x.samples[i])
            .collect();
        let burst_rms = (burst.iter().map(|v| v * v).sum::<f64>() / burst.len() as f64).sqrt();
        let sig_rms = x.rms();
        assert!((burst_rms / sig_rms - 5.0).abs() < 0.1, "ratio {}", burst_rms / sig_rms);
    }
}
