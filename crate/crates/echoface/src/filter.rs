//! Butterworth band-pass design and second-order-section filtering.
//!
//! The receive path keeps only the transmitted band: a 5th-order analog
//! Butterworth low-pass prototype is band-transformed and discretized with
//! the bilinear transform, pre-warped so the two cutoffs land exactly at
//! their -3 dB points. The result is a cascade of five second-order
//! sections realizing a 10th-order band-pass transfer.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::chirp::{ChirpSpec, Waveform};
use crate::error::ConfigError;

/// Band-pass design parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandpassSpec {
    /// Order of the low-pass prototype (sections in the cascade).
    pub order: usize,
    /// Low cutoff, Hz.
    pub f_low_cut: f64,
    /// High cutoff, Hz.
    pub f_high_cut: f64,
    /// Sample rate, Hz.
    pub fs: f64,
}

impl Default for BandpassSpec {
    fn default() -> Self {
        Self {
            order: 5,
            f_low_cut: 15_500.0,
            f_high_cut: 20_500.0,
            fs: 50_000.0,
        }
    }
}

impl BandpassSpec {
    /// Cutoffs bracketing a chirp band by 500 Hz on each side, matching the
    /// default band's 15.5-20.5 kHz window around the 16-20 kHz sweep.
    pub fn for_chirp(chirp: &ChirpSpec) -> Self {
        Self {
            order: 5,
            f_low_cut: chirp.f_lo - 500.0,
            f_high_cut: chirp.f_hi + 500.0,
            fs: chirp.fs,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.order == 0 {
            return Err(ConfigError::new("filter order must be >= 1"));
        }
        if !(self.f_low_cut > 0.0) {
            return Err(ConfigError::new(format!(
                "low cutoff must be > 0, got {}",
                self.f_low_cut
            )));
        }
        if !(self.f_high_cut > self.f_low_cut) {
            return Err(ConfigError::new(format!(
                "high cutoff must exceed low cutoff, got {} <= {}",
                self.f_high_cut, self.f_low_cut
            )));
        }
        if !(self.f_high_cut < self.fs / 2.0) {
            return Err(ConfigError::new(format!(
                "high cutoff must be below fs/2 = {}, got {}",
                self.fs / 2.0,
                self.f_high_cut
            )));
        }
        Ok(())
    }
}

/// One second-order section, denominator normalized to `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sos {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

/// A cascade of second-order sections with its sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterCoefficients {
    pub sections: Vec<Sos>,
    pub fs: f64,
}

impl FilterCoefficients {
    /// Magnitude of the cascade at `f_hz`, evaluated on the unit circle.
    pub fn magnitude_at(&self, f_hz: f64) -> f64 {
        let theta = 2.0 * PI * f_hz / self.fs;
        let z_inv = Complex64::from_polar(1.0, -theta);
        let z_inv2 = z_inv * z_inv;
        let mut h = Complex64::new(1.0, 0.0);
        for s in &self.sections {
            let num = Complex64::new(s.b[0], 0.0) + s.b[1] * z_inv + s.b[2] * z_inv2;
            let den = Complex64::new(1.0, 0.0) + s.a[0] * z_inv + s.a[1] * z_inv2;
            h *= num / den;
        }
        h.norm()
    }

    /// Magnitude in dB, floored well below double-precision noise.
    pub fn magnitude_db_at(&self, f_hz: f64) -> f64 {
        20.0 * self.magnitude_at(f_hz).max(1e-300).log10()
    }
}

/// Poles of the normalized (cutoff 1 rad/s) Butterworth low-pass prototype.
fn butterworth_prototype_poles(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            let theta = PI * (2.0 * k as f64 + n as f64 + 1.0) / (2.0 * n as f64);
            Complex64::new(theta.cos(), theta.sin())
        })
        .collect()
}

/// Design the band-pass cascade for `spec`.
///
/// Each prototype pole `p` maps to the two roots of
/// `s^2 - p*BW*s + w0^2 = 0` under the low-pass-to-band-pass transform
/// `s_lp = (s^2 + w0^2) / (BW s)`; `w0` and `BW` are computed from the
/// pre-warped cutoffs so the bilinear transform puts the -3 dB points
/// exactly on the requested frequencies.
pub fn design_bandpass(spec: &BandpassSpec) -> Result<FilterCoefficients, ConfigError> {
    spec.validate()?;
    let k = 2.0 * spec.fs; // bilinear constant
    let w_lo = k * (PI * spec.f_low_cut / spec.fs).tan();
    let w_hi = k * (PI * spec.f_high_cut / spec.fs).tan();
    let w0_sq = w_lo * w_hi;
    let bw = w_hi - w_lo;

    // Band-transform every prototype pole; each yields two analog poles.
    let mut analog_poles: Vec<Complex64> = Vec::with_capacity(2 * spec.order);
    for p in butterworth_prototype_poles(spec.order) {
        let half = p * bw / 2.0;
        let disc = (half * half - w0_sq).sqrt();
        analog_poles.push(half + disc);
        analog_poles.push(half - disc);
    }

    // Pair poles into real-coefficient quadratics: each complex pole with its
    // conjugate (the prototype conjugate maps to the conjugate pair), real
    // poles with the nearest remaining real pole.
    let mut complex_up: Vec<Complex64> = Vec::new();
    let mut reals: Vec<f64> = Vec::new();
    for q in analog_poles {
        if q.im.abs() > 1e-9 * q.norm().max(1.0) {
            if q.im > 0.0 {
                complex_up.push(q);
            }
        } else {
            reals.push(q.re);
        }
    }
    reals.sort_by(|x, y| x.partial_cmp(y).unwrap());

    // Denominator quadratics s^2 + a1 s + a0.
    let mut quads: Vec<(f64, f64)> = Vec::with_capacity(spec.order);
    for q in &complex_up {
        quads.push((-2.0 * q.re, q.norm_sqr()));
    }
    let mut it = reals.chunks_exact(2);
    for pair in &mut it {
        quads.push((-(pair[0] + pair[1]), pair[0] * pair[1]));
    }
    if quads.len() != spec.order {
        return Err(ConfigError::new(
            "internal pole pairing failed; cutoffs too close to the Nyquist limit",
        ));
    }

    // Each section takes one numerator factor BW*s; bilinear maps it to
    // BW*K*(1 - z^-2) and the quadratic to the standard three-term form.
    let sections = quads
        .into_iter()
        .map(|(a1, a0)| {
            let d0 = k * k + a1 * k + a0;
            let d1 = -2.0 * k * k + 2.0 * a0;
            let d2 = k * k - a1 * k + a0;
            let g = bw * k;
            Sos {
                b: [g / d0, 0.0, -g / d0],
                a: [d1 / d0, d2 / d0],
            }
        })
        .collect();

    Ok(FilterCoefficients {
        sections,
        fs: spec.fs,
    })
}

/// Causal SOS cascade in transposed direct form II; state is owned by the
/// caller so one filter instance serves one channel of one session.
#[derive(Debug, Clone)]
pub struct SosFilter {
    coeffs: FilterCoefficients,
    state: Vec<[f64; 2]>,
}

impl SosFilter {
    pub fn new(coeffs: FilterCoefficients) -> Self {
        let state = vec![[0.0; 2]; coeffs.sections.len()];
        Self { coeffs, state }
    }

    pub fn coefficients(&self) -> &FilterCoefficients {
        &self.coeffs
    }

    pub fn reset(&mut self) {
        for s in &mut self.state {
            *s = [0.0; 2];
        }
    }

    #[inline]
    pub fn process_sample(&mut self, x: f64) -> f64 {
        let mut v = x;
        for (sec, st) in self.coeffs.sections.iter().zip(self.state.iter_mut()) {
            let y = sec.b[0] * v + st[0];
            st[0] = sec.b[1] * v - sec.a[0] * y + st[1];
            st[1] = sec.b[2] * v - sec.a[1] * y;
            v = y;
        }
        v
    }

    /// Filter a block in place, carrying state across calls.
    pub fn process_block(&mut self, x: &mut [f64]) {
        for v in x.iter_mut() {
            *v = self.process_sample(*v);
        }
    }
}

/// Filter a whole waveform from zero initial state.
pub fn apply_filter(coeffs: &FilterCoefficients, x: &Waveform) -> Waveform {
    let mut filter = SosFilter::new(coeffs.clone());
    let mut samples = x.samples.clone();
    filter.process_block(&mut samples);
    Waveform::new(samples, x.fs)
}
