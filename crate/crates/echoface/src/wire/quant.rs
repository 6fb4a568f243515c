//! Symmetric 8-bit sample codes.
//!
//! Codes span -127..127 (never -128) so negation is exact; the round-trip
//! error is at most 1/254 per sample for inputs in [-1, 1]. Out-of-range
//! samples clamp and are counted rather than rejected.

use crate::chirp::Waveform;

/// Quantized samples plus a saturation count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Quantized {
    pub codes: Vec<i8>,
    /// Samples that fell outside [-1, 1] and were clamped.
    pub saturated: usize,
}

/// `q = round(x * 127)` clamped to [-127, 127].
pub fn quantize8(x: &Waveform) -> Quantized {
    let mut saturated = 0;
    let codes = x
        .samples
        .iter()
        .map(|&v| {
            if !(-1.0..=1.0).contains(&v) {
                saturated += 1;
            }
            (v * 127.0).round().clamp(-127.0, 127.0) as i8
        })
        .collect();
    Quantized { codes, saturated }
}

/// Back to amplitudes: `x = q / 127`.
pub fn dequantize8(codes: &[i8], fs: f64) -> Waveform {
    Waveform::new(codes.iter().map(|&q| q as f64 / 127.0).collect(), fs)
}

/// Interleave two equal-length channels as ch0, ch1, ch0, ch1, ...
pub fn interleave(ch0: &[i8], ch1: &[i8]) -> Vec<i8> {
    assert_eq!(ch0.len(), ch1.len(), "channel lengths must match");
    let mut out = Vec::with_capacity(ch0.len() * 2);
    for (a, b) in ch0.iter().zip(ch1) {
        out.push(*a);
        out.push(*b);
    }
    out
}

/// Undo [`interleave`]; odd trailing bytes are dropped.
pub fn split_channels(interleaved: &[i8]) -> (Vec<i8>, Vec<i8>) {
    let pairs = interleaved.len() / 2;
    let mut ch0 = Vec::with_capacity(pairs);
    let mut ch1 = Vec::with_capacity(pairs);
    for p in 0..pairs {
        ch0.push(interleaved[2 * p]);
        ch1.push(interleaved[2 * p + 1]);
    }
    (ch0, ch1)
}

/// Nominal stream rate in bits per second: channels x fs x 8.
pub fn nominal_bit_rate(channels: u32, fs: f64) -> f64 {
    channels as f64 * fs * 8.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn endpoints_round_trip_exactly() {
        let w = Waveform::new(vec![1.0, 0.0, -1.0], 50_000.0);
        let q = quantize8(&w);
        assert_eq!(q.codes, vec![127, 0, -127]);
        assert_eq!(q.saturated, 0);
        let back = dequantize8(&q.codes, 50_000.0);
        assert_eq!(back.samples, vec![1.0, 0.0, -1.0]);
    }

    #[test]
    fn out_of_range_clamps_and_counts() {
        let w = Waveform::new(vec![1.5, -2.0, 0.5], 50_000.0);
        let q = quantize8(&w);
        assert_eq!(q.codes[0], 127);
        assert_eq!(q.codes[1], -127);
        assert_eq!(q.saturated, 2);
    }

    #[test]
    fn stream_rate_is_800_kbps() {
        assert_eq!(nominal_bit_rate(2, 50_000.0), 800_000.0);
    }

    proptest! {
        #[test]
        fn round_trip_error_is_bounded(x in -1.0f64..=1.0) {
            let w = Waveform::new(vec![x], 50_000.0);
            let q = quantize8(&w);
            prop_assert_eq!(q.saturated, 0);
            let back = dequantize8(&q.codes, 50_000.0);
            prop_assert!((x - back.samples[0]).abs() <= 1.0 / 254.0 + 1e-15);
        }

        #[test]
        fn negation_is_exact(x in -1.0f64..=1.0) {
            let q_pos = quantize8(&Waveform::new(vec![x], 50_000.0));
            let q_neg = quantize8(&Waveform::new(vec![-x], 50_000.0));
            prop_assert_eq!(q_pos.codes[0], -q_neg.codes[0]);
        }
    }

    #[test]
    fn interleave_round_trips() {
        let ch0 = vec![1i8, 2, 3];
        let ch1 = vec![-1i8, -2, -3];
        let mixed = interleave(&ch0, &ch1);
        assert_eq!(mixed, vec![1, -1, 2, -2, 3, -3]);
        let (a, b) = split_channels(&mixed);
        assert_eq!(a, ch0);
        assert_eq!(b, ch1);
    }
}
