//! Blendshape trajectory synthesis.
//!
//! Sessions mimic the in-lab protocol: the face rests in a neutral pose,
//! then each expression ramps to a peak, holds, and relaxes, with brief
//! pauses in between and spontaneous blinks throughout. The neutral pose is
//! not all-zero; a resting face keeps many parameters slightly active, which
//! is what puts the bulk of frames in the 50-100 deformation bucket.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::str::FromStr;

use super::Trajectory;
use crate::blendshape::{blendshape_index, BLENDSHAPE_COUNT, BLENDSHAPE_MAX, EYE_BLINK_L, EYE_BLINK_R};
use crate::error::ConfigError;

/// The nine tracked expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ExpressionId {
    OpenMouth,
    OMouth,
    OpenEyes,
    CloseEyes,
    CloseLeftEye,
    CloseRightEye,
    SmileFace,
    SneerLeft,
    SneerRight,
}

impl ExpressionId {
    pub const ALL: [ExpressionId; 9] = [
        ExpressionId::OpenMouth,
        ExpressionId::OMouth,
        ExpressionId::OpenEyes,
        ExpressionId::CloseEyes,
        ExpressionId::CloseLeftEye,
        ExpressionId::CloseRightEye,
        ExpressionId::SmileFace,
        ExpressionId::SneerLeft,
        ExpressionId::SneerRight,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExpressionId::OpenMouth => "open-mouth",
            ExpressionId::OMouth => "o-mouth",
            ExpressionId::OpenEyes => "open-eyes",
            ExpressionId::CloseEyes => "close-eyes",
            ExpressionId::CloseLeftEye => "close-left-eye",
            ExpressionId::CloseRightEye => "close-right-eye",
            ExpressionId::SmileFace => "smile-face",
            ExpressionId::SneerLeft => "sneer-left",
            ExpressionId::SneerRight => "sneer-right",
        }
    }

    /// Activation pattern: (parameter, weight), dominant parameter at 1.0.
    fn pattern(&self) -> &'static [(&'static str, f64)] {
        match self {
            ExpressionId::OpenMouth => &[
                ("jawOpen", 1.0),
                ("mouthLowerDown_L", 0.5),
                ("mouthLowerDown_R", 0.5),
                ("mouthUpperUp_L", 0.3),
                ("mouthUpperUp_R", 0.3),
                ("mouthStretch_L", 0.2),
                ("mouthStretch_R", 0.2),
            ],
            ExpressionId::OMouth => &[
                ("mouthFunnel", 1.0),
                ("mouthPucker", 0.8),
                ("jawOpen", 0.45),
                ("mouthRollLower", 0.3),
                ("mouthRollUpper", 0.3),
            ],
            ExpressionId::OpenEyes => &[
                ("eyeWide_L", 1.0),
                ("eyeWide_R", 1.0),
                ("browOuterUp_L", 0.6),
                ("browOuterUp_R", 0.6),
                ("browInnerUp", 0.5),
            ],
            ExpressionId::CloseEyes => &[
                ("eyeBlink_L", 1.0),
                ("eyeBlink_R", 1.0),
                ("eyeSquint_L", 0.4),
                ("eyeSquint_R", 0.4),
                ("browDown_L", 0.2),
                ("browDown_R", 0.2),
            ],
            ExpressionId::CloseLeftEye => &[
                ("eyeBlink_L", 1.0),
                ("eyeSquint_L", 0.5),
                ("cheekSquint_L", 0.35),
                ("browDown_L", 0.25),
            ],
            ExpressionId::CloseRightEye => &[
                ("eyeBlink_R", 1.0),
                ("eyeSquint_R", 0.5),
                ("cheekSquint_R", 0.35),
                ("browDown_R", 0.25),
            ],
            ExpressionId::SmileFace => &[
                ("mouthSmile_L", 1.0),
                ("mouthSmile_R", 1.0),
                ("cheekSquint_L", 0.5),
                ("cheekSquint_R", 0.5),
                ("mouthDimple_L", 0.4),
                ("mouthDimple_R", 0.4),
                ("eyeSquint_L", 0.3),
                ("eyeSquint_R", 0.3),
            ],
            ExpressionId::SneerLeft => &[
                ("noseSneer_L", 1.0),
                ("mouthUpperUp_L", 0.6),
                ("cheekSquint_L", 0.4),
                ("mouthSmile_L", 0.2),
            ],
            ExpressionId::SneerRight => &[
                ("noseSneer_R", 1.0),
                ("mouthUpperUp_R", 0.6),
                ("cheekSquint_R", 0.4),
                ("mouthSmile_R", 0.2),
            ],
        }
    }
}

impl FromStr for ExpressionId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExpressionId::ALL
            .iter()
            .find(|e| e.name() == s)
            .copied()
            .ok_or_else(|| ConfigError::new(format!("unknown expression preset {s:?}")))
    }
}

/// Resting-face pose; a neutral human face keeps many parameters slightly
/// active, so its deformation degree is near 60 rather than 0.
const BASE_POSE: &[(&str, f64)] = &[
    ("mouthClose", 300.0),
    ("mouthPress_L", 180.0),
    ("mouthPress_R", 180.0),
    ("mouthRollLower", 160.0),
    ("mouthRollUpper", 160.0),
    ("mouthShrugUpper", 150.0),
    ("mouthShrugLower", 120.0),
    ("browDown_L", 150.0),
    ("browDown_R", 150.0),
    ("browInnerUp", 140.0),
    ("eyeSquint_L", 130.0),
    ("eyeSquint_R", 130.0),
    ("cheekSquint_L", 120.0),
    ("cheekSquint_R", 120.0),
    ("mouthFrown_L", 110.0),
    ("mouthFrown_R", 110.0),
    ("jawForward", 100.0),
    ("mouthDimple_L", 100.0),
    ("mouthDimple_R", 100.0),
    ("noseSneer_L", 80.0),
    ("noseSneer_R", 80.0),
    ("mouthStretch_L", 90.0),
    ("mouthStretch_R", 90.0),
];

fn base_pose() -> Vec<f64> {
    let mut v = vec![0.0; BLENDSHAPE_COUNT];
    for (name, val) in BASE_POSE {
        v[blendshape_index(name).expect("known name")] = *val;
    }
    v
}

/// How spontaneous blinks are placed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlinkMode {
    /// No spontaneous blinks.
    Off,
    /// Random blinks at 10-25 per minute.
    SpontaneousRate,
    /// Exactly this many blinks, spread over the session with jitter.
    Count(usize),
}

/// Trajectory synthesis parameters.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub presets: Vec<ExpressionId>,
    /// Rounds through the (shuffled) preset list.
    pub repetitions: usize,
    pub frame_rate: f64,
    pub seed: u64,
    /// Neutral lead-in before the first expression, seconds.
    pub lead_in_s: f64,
    /// Pad with neutral frames up to this duration if the expressions end
    /// earlier.
    pub min_duration_s: Option<f64>,
    pub blinks: BlinkMode,
    /// Pause before each expression, seconds (uniform draw).
    pub pause_s: (f64, f64),
    /// Rise time to the peak, seconds.
    pub ramp_s: (f64, f64),
    /// Hold at the peak, seconds.
    pub hold_s: (f64, f64),
    /// Relax back to neutral, seconds.
    pub fall_s: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            presets: ExpressionId::ALL.to_vec(),
            repetitions: 6,
            frame_rate: 50_000.0 / 600.0,
            seed: 0,
            lead_in_s: 1.5,
            min_duration_s: None,
            blinks: BlinkMode::SpontaneousRate,
            // Gestures fit within the one-second model window, so a window
            // almost always contains the motion it must explain.
            pause_s: (0.7, 1.1),
            ramp_s: (0.22, 0.35),
            hold_s: (0.25, 0.40),
            fall_s: (0.22, 0.35),
        }
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Synthesize a session trajectory.
///
/// Each repetition plays every preset once in a random order: neutral, ramp
/// to a peak whose deformation degree is drawn from [50, 200], hold, ramp
/// back. Values are clamped to [0, 1000].
pub fn synth_trajectory(config: &SynthConfig) -> Result<Trajectory, ConfigError> {
    if config.presets.is_empty() && config.repetitions > 0 {
        return Err(ConfigError::new("preset list is empty"));
    }
    if config.frame_rate <= 0.0 {
        return Err(ConfigError::new("frame rate must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let base = base_pose();
    let base_degree = base.iter().sum::<f64>() / BLENDSHAPE_COUNT as f64;
    let fr = config.frame_rate;

    // Build the expression schedule as (start_frame, len, preset, scale).
    struct Segment {
        start: usize,
        ramp: usize,
        hold: usize,
        fall: usize,
        pattern: Vec<(usize, f64)>,
        scale: f64,
    }
    let mut segments: Vec<Segment> = Vec::new();
    let mut cursor = (config.lead_in_s * fr).round() as usize;
    for _ in 0..config.repetitions {
        let mut order = config.presets.clone();
        order.shuffle(&mut rng);
        for preset in order {
            let pause = rng.gen_range(config.pause_s.0..config.pause_s.1);
            let ramp_s = rng.gen_range(config.ramp_s.0..config.ramp_s.1);
            let hold_s = rng.gen_range(config.hold_s.0..config.hold_s.1);
            let fall_s = rng.gen_range(config.fall_s.0..config.fall_s.1);
            cursor += (pause * fr).round() as usize;

            let pattern: Vec<(usize, f64)> = preset
                .pattern()
                .iter()
                .map(|(name, w)| (blendshape_index(name).expect("known name"), *w))
                .collect();
            let pattern_sum: f64 = pattern.iter().map(|(_, w)| w).sum();
            let target_degree = rng.gen_range(50.0..200.0);
            // Scale so the peak's degree hits the target; a target below the
            // resting degree degenerates to holding the neutral pose.
            let scale = ((target_degree - base_degree) * BLENDSHAPE_COUNT as f64 / pattern_sum)
                .max(0.0);

            segments.push(Segment {
                start: cursor,
                ramp: (ramp_s * fr).round() as usize,
                hold: (hold_s * fr).round() as usize,
                fall: (fall_s * fr).round() as usize,
                pattern,
                scale,
            });
            cursor = segments.last().map(|s| s.start + s.ramp + s.hold + s.fall).unwrap();
        }
    }
    cursor += (0.8 * fr).round() as usize; // trailing pause

    let mut n_frames = cursor;
    if let Some(min_s) = config.min_duration_s {
        n_frames = n_frames.max((min_s * fr).round() as usize);
    }

    let mut frames = Array2::zeros((n_frames, BLENDSHAPE_COUNT));
    for k in 0..n_frames {
        for (j, v) in base.iter().enumerate() {
            frames[[k, j]] = *v;
        }
    }
    for seg in &segments {
        let total = seg.ramp + seg.hold + seg.fall;
        for off in 0..total {
            let k = seg.start + off;
            if k >= n_frames {
                break;
            }
            let env = if off < seg.ramp {
                smoothstep(off as f64 / seg.ramp.max(1) as f64)
            } else if off < seg.ramp + seg.hold {
                1.0
            } else {
                smoothstep(1.0 - (off - seg.ramp - seg.hold) as f64 / seg.fall.max(1) as f64)
            };
            for &(j, w) in &seg.pattern {
                frames[[k, j]] += env * seg.scale * w;
            }
        }
    }

    add_blinks(&mut frames, fr, config.blinks, &mut rng);

    frames.mapv_inplace(|v| v.clamp(0.0, BLENDSHAPE_MAX));
    Ok(Trajectory {
        frames,
        frame_rate: fr,
    })
}

/// A session with no instructed expressions, only spontaneous blinks.
pub fn synth_blink_trajectory(
    duration_s: f64,
    n_blinks: usize,
    frame_rate: f64,
    seed: u64,
) -> Result<Trajectory, ConfigError> {
    let config = SynthConfig {
        presets: Vec::new(),
        repetitions: 0,
        frame_rate,
        seed,
        lead_in_s: 0.0,
        min_duration_s: Some(duration_s),
        blinks: BlinkMode::Count(n_blinks),
        ..SynthConfig::default()
    };
    synth_trajectory(&config)
}

fn add_blinks(frames: &mut Array2<f64>, fr: f64, mode: BlinkMode, rng: &mut ChaCha8Rng) {
    let n_frames = frames.nrows();
    if n_frames == 0 {
        return;
    }
    let mut place = |start_frame: usize, rng: &mut ChaCha8Rng| {
        let dur_s = rng.gen_range(0.15..0.30);
        let peak = rng.gen_range(300.0..600.0);
        let len = ((dur_s * fr).round() as usize).max(2);
        for off in 0..len {
            let k = start_frame + off;
            if k >= n_frames {
                break;
            }
            // Raised-cosine pulse peaking mid-blink.
            let phase = off as f64 / (len - 1) as f64;
            let env = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * phase).cos());
            frames[[k, EYE_BLINK_L]] += peak * env;
            frames[[k, EYE_BLINK_R]] += peak * env;
        }
    };
    match mode {
        BlinkMode::Off => {}
        BlinkMode::SpontaneousRate => {
            let mut t = rng.gen_range(0.5..2.0);
            loop {
                let k = (t * fr) as usize;
                if k + 2 >= n_frames {
                    break;
                }
                place(k, rng);
                // 10-25 blinks per minute.
                t += rng.gen_range(60.0 / 25.0..60.0 / 10.0);
            }
        }
        BlinkMode::Count(n) => {
            if n == 0 {
                return;
            }
            let duration = n_frames as f64 / fr;
            let slot = duration / n as f64;
            for i in 0..n {
                // Keep a 0.4 s guard so jitter cannot merge adjacent blinks
                // or push one off the end of the session.
                let lo = i as f64 * slot + 0.05 * slot;
                let hi = (i as f64 + 1.0) * slot - 0.35_f64.min(0.3 * slot);
                let t = rng.gen_range(lo..hi.max(lo + 1e-3));
                let k = ((t * fr) as usize).min(n_frames.saturating_sub(3));
                place(k, rng);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{bucketize, deformation_degree};

    #[test]
    fn zero_repetitions_is_all_neutral() {
        let config = SynthConfig {
            repetitions: 0,
            blinks: BlinkMode::Off,
            min_duration_s: Some(2.0),
            ..SynthConfig::default()
        };
        let traj = synth_trajectory(&config).unwrap();
        assert!(traj.n_frames() > 100);
        let base = base_pose();
        for k in 0..traj.n_frames() {
            for j in 0..BLENDSHAPE_COUNT {
                assert_eq!(traj.frames[[k, j]], base[j]);
            }
        }
    }

    #[test]
    fn values_stay_in_bounds() {
        let config = SynthConfig {
            seed: 3,
            ..SynthConfig::default()
        };
        let traj = synth_trajectory(&config).unwrap();
        for v in traj.frames.iter() {
            assert!((0.0..=BLENDSHAPE_MAX).contains(v));
        }
    }

    #[test]
    fn default_two_minutes_concentrates_in_the_50_100_bucket() {
        let config = SynthConfig {
            seed: 42,
            min_duration_s: Some(120.0),
            ..SynthConfig::default()
        };
        let traj = synth_trajectory(&config).unwrap();
        assert!(traj.duration() >= 120.0);
        let degrees: Vec<f64> = (0..traj.n_frames())
            .map(|k| {
                let (v, _) =
                    crate::blendshape::BlendshapeVector::from_scaled(&traj.frames.row(k).to_vec())
                        .unwrap();
                deformation_degree(&v)
            })
            .collect();
        let hist = bucketize(&degrees).unwrap();
        assert!(hist[1] > 0.5, "50-100 bucket fraction {}", hist[1]);
    }

    #[test]
    fn unknown_preset_name_is_rejected() {
        assert!("frown-hard".parse::<ExpressionId>().is_err());
        assert_eq!("sneer-left".parse::<ExpressionId>().unwrap(), ExpressionId::SneerLeft);
    }

    #[test]
    fn blink_count_mode_places_the_requested_number() {
        let traj = synth_blink_trajectory(60.0, 20, 50_000.0 / 600.0, 9).unwrap();
        // Count rising crossings of the blink mean over a 250 threshold.
        let signal: Vec<f64> = (0..traj.n_frames())
            .map(|k| 0.5 * (traj.frames[[k, EYE_BLINK_L]] + traj.frames[[k, EYE_BLINK_R]]))
            .collect();
        let mut events = 0;
        let mut above = false;
        for &s in &signal {
            if !above && s >= 250.0 {
                events += 1;
                above = true;
            } else if above && s <= 150.0 {
                above = false;
            }
        }
        assert!((19..=21).contains(&events), "found {events} blink events");
    }

    #[test]
    fn synthesis_is_deterministic() {
        let config = SynthConfig {
            seed: 7,
            ..SynthConfig::default()
        };
        let a = synth_trajectory(&config).unwrap();
        let b = synth_trajectory(&config).unwrap();
        assert_eq!(a, b);
    }
}
