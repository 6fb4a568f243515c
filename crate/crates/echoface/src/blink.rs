//! Blink signals, event extraction, and event-level scoring.
//!
//! The blink signal is the mean of the two eyeBlink parameters per frame.
//! Events come out of a hysteresis detector: an event opens when the signal
//! reaches the on threshold and closes when it falls to the off threshold;
//! events outside the physiological duration band are discarded. Predicted
//! and reference events match greedily by nearest onset within a tolerance,
//! one to one.

use serde::Serialize;

use crate::blendshape::{BlendshapeVector, EYE_BLINK_L, EYE_BLINK_R};

/// One detected blink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlinkEvent {
    /// Frame where the signal crossed the on threshold.
    pub onset: usize,
    /// Frame where the signal fell back to the off threshold.
    pub offset: usize,
    /// Peak signal value inside the event, scaled units.
    pub peak: f64,
}

/// Extraction thresholds and duration bounds.
#[derive(Debug, Clone, Copy)]
pub struct BlinkConfig {
    pub on_threshold: f64,
    pub off_threshold: f64,
    /// Minimum event duration, seconds.
    pub min_duration_s: f64,
    /// Maximum event duration, seconds.
    pub max_duration_s: f64,
}

impl Default for BlinkConfig {
    fn default() -> Self {
        Self {
            on_threshold: 250.0,
            off_threshold: 150.0,
            min_duration_s: 0.08,
            max_duration_s: 0.5,
        }
    }
}

/// Mean of the two eyeBlink parameters per frame.
pub fn blink_signal(frames: &[BlendshapeVector]) -> Vec<f64> {
    frames
        .iter()
        .map(|v| 0.5 * (v.get(EYE_BLINK_L) + v.get(EYE_BLINK_R)))
        .collect()
}

/// [`blink_signal`] over raw rows (each at least 10 columns wide).
pub fn blink_signal_rows(rows: &ndarray::Array2<f64>) -> Vec<f64> {
    (0..rows.nrows())
        .map(|k| 0.5 * (rows[[k, EYE_BLINK_L]] + rows[[k, EYE_BLINK_R]]))
        .collect()
}

/// Hysteresis event extraction at `frame_rate` frames per second.
pub fn extract_events(signal: &[f64], frame_rate: f64, cfg: &BlinkConfig) -> Vec<BlinkEvent> {
    let min_frames = (cfg.min_duration_s * frame_rate).round() as usize;
    let max_frames = (cfg.max_duration_s * frame_rate).round() as usize;
    let mut events = Vec::new();
    let mut open: Option<(usize, f64)> = None;
    for (k, &v) in signal.iter().enumerate() {
        match open {
            None => {
                if v >= cfg.on_threshold {
                    open = Some((k, v));
                }
            }
            Some((onset, peak)) => {
                let peak = peak.max(v);
                if v <= cfg.off_threshold {
                    let duration = k - onset;
                    if duration >= min_frames.max(1) && duration <= max_frames {
                        events.push(BlinkEvent {
                            onset,
                            offset: k,
                            peak,
                        });
                    }
                    open = None;
                } else {
                    open = Some((onset, peak));
                }
            }
        }
    }
    events
}

/// Event-level match counts and scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchReport {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Greedy one-to-one matching by nearest onset within `tolerance_s`.
///
/// F1 is 0 when predictions are empty but references are not; two empty
/// lists score a perfect 1.
pub fn match_and_f1(
    pred: &[BlinkEvent],
    gt: &[BlinkEvent],
    tolerance_s: f64,
    frame_rate: f64,
) -> MatchReport {
    let tol_frames = tolerance_s * frame_rate;
    // All candidate pairs within tolerance, nearest first.
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let dist = (p.onset as f64 - g.onset as f64).abs();
            if dist <= tol_frames {
                pairs.push((i, j, dist));
            }
        }
    }
    pairs.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap().then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));

    let mut pred_used = vec![false; pred.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut tp = 0usize;
    for (i, j, _) in pairs {
        if !pred_used[i] && !gt_used[j] {
            pred_used[i] = true;
            gt_used[j] = true;
            tp += 1;
        }
    }
    let fp = pred.len() - tp;
    let fn_ = gt.len() - tp;
    let precision = if pred.is_empty() {
        if gt.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        tp as f64 / pred.len() as f64
    };
    let recall = if gt.is_empty() {
        1.0
    } else {
        tp as f64 / gt.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    MatchReport {
        tp,
        fp,
        fn_,
        precision,
        recall,
        f1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blendshape::BlendshapeVector;

    const FR: f64 = 50_000.0 / 600.0;

    fn pulse(len: usize, start: usize, dur: usize, peak: f64) -> Vec<f64> {
        let mut s = vec![0.0; len];
        for k in 0..dur {
            let phase = k as f64 / (dur - 1) as f64;
            s[start + k] = peak * 0.5 * (1.0 - (std::f64::consts::TAU * phase).cos());
        }
        s
    }

    #[test]
    fn blink_signal_is_the_blink_mean() {
        let mut v = BlendshapeVector::zeros();
        v.set(EYE_BLINK_L, 400.0);
        v.set(EYE_BLINK_R, 400.0);
        assert_eq!(blink_signal(&[v]), vec![400.0]);
        assert_eq!(blink_signal(&[BlendshapeVector::zeros()]), vec![0.0]);

        // Symmetric under a left/right swap.
        let mut a = BlendshapeVector::zeros();
        a.set(EYE_BLINK_L, 100.0);
        a.set(EYE_BLINK_R, 500.0);
        let mut b = BlendshapeVector::zeros();
        b.set(EYE_BLINK_L, 500.0);
        b.set(EYE_BLINK_R, 100.0);
        assert_eq!(blink_signal(&[a]), blink_signal(&[b]));
    }

    #[test]
    fn flat_signal_has_no_events() {
        assert!(extract_events(&vec![0.0; 500], FR, &BlinkConfig::default()).is_empty());
        assert!(extract_events(&vec![200.0; 500], FR, &BlinkConfig::default()).is_empty());
    }

    #[test]
    fn one_clean_pulse_is_one_event() {
        // 200 ms pulse at 83.3 fps is about 17 frames; the raised cosine
        // crosses the 250 threshold a quarter of the way up.
        let s = pulse(400, 100, 17, 500.0);
        let events = extract_events(&s, FR, &BlinkConfig::default());
        assert_eq!(events.len(), 1);
        let e = events[0];
        assert!((103..=106).contains(&e.onset), "onset {}", e.onset);
        assert!(e.offset > e.onset);
        assert!(e.peak > 400.0);
    }

    #[test]
    fn too_short_and_too_long_events_are_discarded() {
        // 3 frames is under the 80 ms minimum.
        let s = pulse(300, 50, 3, 500.0);
        assert!(extract_events(&s, FR, &BlinkConfig::default()).is_empty());
        // A 60-frame (720 ms) plateau exceeds the maximum.
        let mut long = vec![0.0; 400];
        for k in 100..160 {
            long[k] = 500.0;
        }
        assert!(extract_events(&long, FR, &BlinkConfig::default()).is_empty());
    }

    #[test]
    fn rescaling_that_preserves_crossings_preserves_events() {
        // The invariant holds exactly at the crossing level: every sample
        // must keep its side of both thresholds. This signal keeps clear of
        // [150/c, 150) and [250/c, 250) for c = 1.1, so scaling by 1.1
        // cannot flip any comparison.
        let mut s = vec![0.0; 200];
        for (k, v) in [120.0, 300.0, 500.0, 500.0, 500.0, 500.0, 500.0, 500.0, 500.0, 500.0, 300.0, 120.0]
            .iter()
            .enumerate()
        {
            s[60 + k] = *v;
        }
        let scaled: Vec<f64> = s.iter().map(|v| v * 1.1).collect();
        let a = extract_events(&s, FR, &BlinkConfig::default());
        let b = extract_events(&scaled, FR, &BlinkConfig::default());
        assert_eq!(a.len(), 1);
        assert_eq!(a.len(), b.len());
        assert_eq!(a[0].onset, b[0].onset);
        assert_eq!(a[0].offset, b[0].offset);
    }

    #[test]
    fn identical_lists_score_perfect_f1() {
        let s = pulse(600, 100, 17, 500.0);
        let events = extract_events(&s, FR, &BlinkConfig::default());
        let report = match_and_f1(&events, &events, 0.15, FR);
        assert_eq!(report.f1, 1.0);
        assert_eq!(report.tp, events.len());
    }

    #[test]
    fn empty_predictions_score_zero_against_nonempty_truth() {
        let gt = vec![BlinkEvent {
            onset: 10,
            offset: 20,
            peak: 400.0,
        }];
        let report = match_and_f1(&[], &gt, 0.15, FR);
        assert_eq!(report.f1, 0.0);
        assert_eq!(report.fn_, 1);

        let empty = match_and_f1(&[], &[], 0.15, FR);
        assert_eq!(empty.f1, 1.0);
    }

    #[test]
    fn matching_is_one_to_one() {
        // Two predictions near one reference: only one true positive.
        let gt = vec![BlinkEvent {
            onset: 100,
            offset: 110,
            peak: 400.0,
        }];
        let pred = vec![
            BlinkEvent {
                onset: 98,
                offset: 108,
                peak: 350.0,
            },
            BlinkEvent {
                onset: 103,
                offset: 113,
                peak: 380.0,
            },
        ];
        let report = match_and_f1(&pred, &gt, 0.15, FR);
        assert_eq!(report.tp, 1);
        assert_eq!(report.fp, 1);
        assert!(report.tp <= pred.len().min(gt.len()));
    }

    #[test]
    fn f1_is_invariant_under_a_common_time_shift() {
        let gt = vec![
            BlinkEvent {
                onset: 100,
                offset: 112,
                peak: 400.0,
            },
            BlinkEvent {
                onset: 300,
                offset: 315,
                peak: 500.0,
            },
        ];
        let pred = vec![BlinkEvent {
            onset: 104,
            offset: 114,
            peak: 420.0,
        }];
        let base = match_and_f1(&pred, &gt, 0.15, FR);
        let shift = 1_000usize;
        let gt_s: Vec<BlinkEvent> = gt
            .iter()
            .map(|e| BlinkEvent {
                onset: e.onset + shift,
                offset: e.offset + shift,
                peak: e.peak,
            })
            .collect();
        let pred_s: Vec<BlinkEvent> = pred
            .iter()
            .map(|e| BlinkEvent {
                onset: e.onset + shift,
                offset: e.offset + shift,
                peak: e.peak,
            })
            .collect();
        let shifted = match_and_f1(&pred_s, &gt_s, 0.15, FR);
        assert_eq!(base, shifted);
    }
}
