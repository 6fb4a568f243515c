//! Echo profiles: circular cross-correlation of received frames against the
//! transmitted sweep, and differential profiles between adjacent frames.
//!
//! Transmission repeats the same frame back to back, so within a frame the
//! previous frame's tail is the identical waveform wrapped around; circular
//! correlation is therefore the natural lag domain. Lag `l` holds the raw
//! inner product at a candidate round-trip delay of `l` samples, unnormalized
//! and signed.

use ndarray::Array2;
use rustfft::{num_complex::Complex64, Fft, FftPlanner};
use std::sync::Arc;

use crate::chirp::Waveform;
use crate::error::{ConfigError, ShapeError};

/// Number of truncated echo bins kept per channel.
pub const TRUNCATED_BINS: usize = 30;

/// Cross-correlation lags of one frame, `[n_lags x n_channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoProfile {
    pub values: Array2<f64>,
    pub frame_index: usize,
}

/// Difference between two adjacent frames' echo profiles; `frame_index` is
/// the later frame's.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffProfile {
    pub values: Array2<f64>,
    pub frame_index: usize,
}

/// Circular cross-correlator against a fixed template, with the template
/// spectrum precomputed.
pub struct Correlator {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    template_conj: Vec<Complex64>,
}

impl Correlator {
    pub fn new(template: &Waveform) -> Self {
        let n = template.len();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut spec: Vec<Complex64> = template
            .samples
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect();
        fwd.process(&mut spec);
        let template_conj = spec.into_iter().map(|c| c.conj()).collect();
        Self {
            n,
            fwd,
            inv,
            template_conj,
        }
    }

    pub fn n_lags(&self) -> usize {
        self.n
    }

    /// `values[l] = sum_i frame[(i + l) mod n] * template[i]`.
    pub fn correlate(&self, frame: &[f64]) -> Result<Vec<f64>, ShapeError> {
        if frame.len() != self.n {
            return Err(ShapeError::new(format!(
                "frame length {} != template length {}",
                frame.len(),
                self.n
            )));
        }
        let mut buf: Vec<Complex64> = frame.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fwd.process(&mut buf);
        for (b, t) in buf.iter_mut().zip(&self.template_conj) {
            *b *= t;
        }
        self.inv.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        Ok(buf.into_iter().map(|c| c.re * scale).collect())
    }
}

/// One-shot single-channel echo profile (plans an FFT per call; use
/// [`Correlator`] for streaming).
pub fn echo_profile(frame: &[f64], template: &Waveform) -> Result<Vec<f64>, ShapeError> {
    Correlator::new(template).correlate(frame)
}

/// Correlate both channels of one frame into an [`EchoProfile`].
pub fn echo_profile_stereo(
    correlator: &Correlator,
    frame: [&[f64]; 2],
    frame_index: usize,
) -> Result<EchoProfile, ShapeError> {
    let c0 = correlator.correlate(frame[0])?;
    let c1 = correlator.correlate(frame[1])?;
    let n = correlator.n_lags();
    let mut values = Array2::zeros((n, 2));
    for l in 0..n {
        values[[l, 0]] = c0[l];
        values[[l, 1]] = c1[l];
    }
    Ok(EchoProfile {
        values,
        frame_index,
    })
}

/// `cur - prev` for adjacent frames.
pub fn differential(prev: &EchoProfile, cur: &EchoProfile) -> Result<DiffProfile, ShapeError> {
    if prev.values.dim() != cur.values.dim() {
        return Err(ShapeError::new(format!(
            "profile shapes differ: {:?} vs {:?}",
            prev.values.dim(),
            cur.values.dim()
        )));
    }
    if cur.frame_index != prev.frame_index + 1 {
        return Err(ShapeError::new(format!(
            "frames not adjacent: prev {} cur {}",
            prev.frame_index, cur.frame_index
        )));
    }
    Ok(DiffProfile {
        values: &cur.values - &prev.values,
        frame_index: cur.frame_index,
    })
}

/// Keep lags `0..n_bins`, dropping everything farther than `n_bins` bins.
pub fn truncate_bins(p: &DiffProfile, n_bins: usize) -> Result<Array2<f64>, ConfigError> {
    let (n_lags, _) = p.values.dim();
    if n_bins > n_lags {
        return Err(ConfigError::new(format!(
            "cannot keep {n_bins} bins of a {n_lags}-lag profile"
        )));
    }
    Ok(p.values.slice(ndarray::s![0..n_bins, ..]).to_owned())
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Brute-force O(n^2) circular correlation, independent of the FFT path.

    pub fn circular_correlation(frame: &[f64], template: &[f64]) -> Vec<f64> {
        let n = frame.len();
        assert_eq!(n, template.len());
        (0..n)
            .map(|l| (0..n).map(|i| frame[(i + l) % n] * template[i]).sum())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chirp::{generate_chirp, ChirpSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn argmax(v: &[f64]) -> usize {
        v.iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0
    }

    #[test]
    fn autocorrelation_peaks_at_zero_lag() {
        let chirp = generate_chirp(&ChirpSpec::default()).unwrap();
        let prof = echo_profile(&chirp.samples, &chirp).unwrap();
        assert_eq!(argmax(&prof), 0);
    }

    #[test]
    fn circular_delay_moves_the_peak() {
        let chirp = generate_chirp(&ChirpSpec::default()).unwrap();
        let n = chirp.len();
        let delayed: Vec<f64> = (0..n).map(|i| chirp.samples[(i + n - 50) % n]).collect();
        let prof = echo_profile(&delayed, &chirp).unwrap();
        assert_eq!(argmax(&prof), 50);
    }

    #[test]
    fn fft_path_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 600;
        let frame: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let template: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fft = echo_profile(&frame, &Waveform::new(template.clone(), 50_000.0)).unwrap();
        let brute = oracle::circular_correlation(&frame, &template);
        let peak = brute.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, b) in fft.iter().zip(&brute) {
            assert!((a - b).abs() < 1e-10 * peak.max(1.0));
        }
    }

    #[test]
    fn shift_equivariance_exhaustive_small_n() {
        // Rotating the input rotates the profile the same number of lags.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 16;
        for _ in 0..8 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let template = Waveform::new(s, 50_000.0);
            let base = echo_profile(&x, &template).unwrap();
            for k in 0..n {
                // shifted[i] = x[(i + k) mod n]
                let shifted: Vec<f64> = (0..n).map(|i| x[(i + k) % n]).collect();
                let prof = echo_profile(&shifted, &template).unwrap();
                for l in 0..n {
                    let want = base[(l + k) % n];
                    assert!((prof[l] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn correlation_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 600;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let template = Waveform::new(s, 50_000.0);
        let (a, b) = (1.7, -0.4);
        let mixed: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| a * xi + b * yi).collect();

        let px = echo_profile(&x, &template).unwrap();
        let py = echo_profile(&y, &template).unwrap();
        let pm = echo_profile(&mixed, &template).unwrap();
        let scale = pm.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for l in 0..n {
            let want = a * px[l] + b * py[l];
            assert!((pm[l] - want).abs() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn differential_requires_adjacent_frames() {
        let values = Array2::zeros((600, 2));
        let p0 = EchoProfile {
            values: values.clone(),
            frame_index: 3,
        };
        let p1 = EchoProfile {
            values: values.clone(),
            frame_index: 4,
        };
        assert!(differential(&p0, &p1).is_ok());
        assert!(differential(&p1, &p0).is_err());

        let narrow = EchoProfile {
            values: Array2::zeros((500, 2)),
            frame_index: 4,
        };
        assert!(differential(&p0, &narrow).is_err());
    }

    #[test]
    fn identical_frames_difference_to_exact_zero() {
        let chirp = generate_chirp(&ChirpSpec::default()).unwrap();
        let corr = Correlator::new(&chirp);
        let frame: Vec<f64> = chirp.samples.iter().map(|x| x * 0.3).collect();
        let p0 = echo_profile_stereo(&corr, [&frame, &frame], 0).unwrap();
        let mut p1 = echo_profile_stereo(&corr, [&frame, &frame], 0).unwrap();
        p1.frame_index = 1;
        let d = differential(&p0, &p1).unwrap();
        assert!(d.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn truncation_keeps_the_near_field() {
        let values = Array2::from_shape_fn((600, 2), |(l, c)| (l * 2 + c) as f64);
        let d = DiffProfile {
            values,
            frame_index: 1,
        };
        let t = truncate_bins(&d, TRUNCATED_BINS).unwrap();
        assert_eq!(t.dim(), (30, 2));
        assert_eq!(t[[29, 1]], 59.0);
        assert!(truncate_bins(&d, 601).is_err());
    }
}
