//! Synthetic reflector scenes.
//!
//! The face is modeled as a handful of point reflectors per channel whose
//! one-way distances are driven linearly by blendshape values. That linear
//! map is an artifact convention, not physiology: it makes ground truth
//! recoverable by construction, so the regression stages can be validated
//! closed-loop without hardware.

mod noise;
mod render;
mod trajectory;

pub use noise::{inject_clap, inject_noise, inject_noise_stereo, AudibleBand, NoiseSpec};
pub use render::{render_received, render_received_seeded, unambiguous_range};
pub use trajectory::{
    synth_blink_trajectory, synth_trajectory, BlinkMode, ExpressionId, SynthConfig,
};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::blendshape::BLENDSHAPE_COUNT;
use crate::error::ConfigError;

/// A moving face reflector: its one-way distance is
/// `base_distance + gain * (mix . b) / 1000` for blendshape frame `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflector {
    /// Microphone channel the echo lands in (0 or 1).
    pub channel: usize,
    /// Resting one-way distance, meters.
    pub base_distance: f64,
    /// Echo strength, 0..1.
    pub reflectivity: f64,
    /// Weight per blendshape parameter (length 52).
    pub mix: Vec<f64>,
    /// Meters of displacement per unit of normalized mixed blendshape.
    pub gain: f64,
}

/// A static environment reflector beyond the face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clutter {
    pub channel: usize,
    pub distance: f64,
    pub reflectivity: f64,
}

/// Reflector scene: face reflectors, static clutter, noise, and clap times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub reflectors: Vec<Reflector>,
    #[serde(default)]
    pub clutter: Vec<Clutter>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub clap_times: Vec<f64>,
}

impl Scene {
    /// Validate a face scene: at least one reflector per channel, face
    /// reflectors within 0.5-15 cm, clutter beyond 12 cm.
    pub fn validate_face(&self) -> Result<(), ConfigError> {
        for ch in 0..2 {
            if !self.reflectors.iter().any(|r| r.channel == ch) {
                return Err(ConfigError::new(format!(
                    "face scene needs at least one reflector on channel {ch}"
                )));
            }
        }
        for r in &self.reflectors {
            if r.channel > 1 {
                return Err(ConfigError::new(format!("bad channel {}", r.channel)));
            }
            if !(0.005..=0.15).contains(&r.base_distance) {
                return Err(ConfigError::new(format!(
                    "face reflector base distance {} outside [0.005, 0.15] m",
                    r.base_distance
                )));
            }
            if !(0.0..=1.0).contains(&r.reflectivity) {
                return Err(ConfigError::new("reflectivity must be in [0, 1]".to_string()));
            }
            if r.mix.len() != BLENDSHAPE_COUNT {
                return Err(ConfigError::new(format!(
                    "mix must have {BLENDSHAPE_COUNT} weights, got {}",
                    r.mix.len()
                )));
            }
        }
        for c in &self.clutter {
            if c.distance <= 0.12 {
                return Err(ConfigError::new(format!(
                    "clutter at {} m is inside the face region",
                    c.distance
                )));
            }
        }
        self.noise.validate()
    }

    /// The default desk scene: four moving reflectors per channel spanning
    /// 2-10 cm plus two clutter reflectors at 0.5-1.5 m. Clutter exists to
    /// show that bin truncation removes the background.
    pub fn default_face() -> Self {
        let mix_for = |names: &[(&str, f64)]| -> Vec<f64> {
            let mut m = vec![0.0; BLENDSHAPE_COUNT];
            for (name, w) in names {
                let i = crate::blendshape::blendshape_index(name).expect("known name");
                m[i] = *w;
            }
            m
        };
        // Channel 0 listens to the left side of the face, channel 1 to the
        // right; eye reflectors sit nearer than mouth reflectors.
        let reflectors = vec![
            Reflector {
                channel: 0,
                base_distance: 0.024,
                reflectivity: 0.16,
                mix: mix_for(&[
                    ("eyeBlink_L", 1.0),
                    ("eyeSquint_L", 0.4),
                    ("browDown_L", 0.3),
                    ("eyeWide_L", -0.6),
                    ("browOuterUp_L", -0.3),
                ]),
                gain: 0.006,
            },
            Reflector {
                channel: 0,
                base_distance: 0.041,
                reflectivity: 0.14,
                mix: mix_for(&[
                    ("cheekSquint_L", 1.0),
                    ("mouthSmile_L", 0.7),
                    ("noseSneer_L", 0.8),
                    ("cheekPuff", 0.5),
                    ("eyeBlink_L", 0.25),
                ]),
                gain: 0.008,
            },
            Reflector {
                channel: 0,
                base_distance: 0.062,
                reflectivity: 0.13,
                mix: mix_for(&[
                    ("jawOpen", 1.0),
                    ("mouthFunnel", 0.6),
                    ("mouthLowerDown_L", 0.5),
                    ("mouthStretch_L", 0.4),
                    ("mouthClose", -0.3),
                ]),
                gain: 0.010,
            },
            Reflector {
                channel: 0,
                base_distance: 0.088,
                reflectivity: 0.11,
                mix: mix_for(&[
                    ("mouthPucker", 1.0),
                    ("mouthPress_L", 0.5),
                    ("mouthDimple_L", 0.5),
                    ("mouthFrown_L", 0.4),
                    ("browInnerUp", 0.2),
                ]),
                gain: 0.007,
            },
            Reflector {
                channel: 1,
                base_distance: 0.026,
                reflectivity: 0.16,
                mix: mix_for(&[
                    ("eyeBlink_R", 1.0),
                    ("eyeSquint_R", 0.4),
                    ("browDown_R", 0.3),
                    ("eyeWide_R", -0.6),
                    ("browOuterUp_R", -0.3),
                ]),
                gain: 0.006,
            },
            Reflector {
                channel: 1,
                base_distance: 0.043,
                reflectivity: 0.14,
                mix: mix_for(&[
                    ("cheekSquint_R", 1.0),
                    ("mouthSmile_R", 0.7),
                    ("noseSneer_R", 0.8),
                    ("cheekPuff", 0.5),
                    ("eyeBlink_R", 0.25),
                ]),
                gain: 0.008,
            },
            Reflector {
                channel: 1,
                base_distance: 0.064,
                reflectivity: 0.13,
                mix: mix_for(&[
                    ("jawOpen", 1.0),
                    ("mouthFunnel", 0.6),
                    ("mouthLowerDown_R", 0.5),
                    ("mouthStretch_R", 0.4),
                    ("mouthClose", -0.3),
                ]),
                gain: 0.010,
            },
            Reflector {
                channel: 1,
                base_distance: 0.091,
                reflectivity: 0.11,
                mix: mix_for(&[
                    ("mouthPucker", 1.0),
                    ("mouthPress_R", 0.5),
                    ("mouthDimple_R", 0.5),
                    ("mouthFrown_R", 0.4),
                    ("browInnerUp", 0.2),
                ]),
                gain: 0.007,
            },
        ];
        let clutter = vec![
            Clutter {
                channel: 0,
                distance: 0.62,
                reflectivity: 0.08,
            },
            Clutter {
                channel: 1,
                distance: 1.31,
                reflectivity: 0.06,
            },
        ];
        Self {
            reflectors,
            clutter,
            noise: NoiseSpec::default(),
            clap_times: Vec::new(),
        }
    }
}

/// Time-varying blendshape drive: one row per frame, values 0..1000.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `[n_frames x 52]`, scaled units.
    pub frames: Array2<f64>,
    /// Rows per second (83.3 native, 30 when emulating ground truth).
    pub frame_rate: f64,
}

impl Trajectory {
    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn duration(&self) -> f64 {
        self.n_frames() as f64 / self.frame_rate
    }

    /// Row interpolated at time `t` seconds (row `k` is at `k / frame_rate`).
    /// Clamps beyond the ends.
    pub fn sample_at(&self, t: f64) -> Vec<f64> {
        let n = self.n_frames();
        assert!(n > 0, "empty trajectory");
        let pos = t * self.frame_rate;
        if pos <= 0.0 {
            return self.frames.row(0).to_vec();
        }
        let max = (n - 1) as f64;
        if pos >= max {
            return self.frames.row(n - 1).to_vec();
        }
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        let a = self.frames.row(lo);
        let b = self.frames.row(lo + 1);
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x + frac * (y - x))
            .collect()
    }

    /// Resample to `rate` by linear interpolation at frame-start times,
    /// covering the same duration.
    pub fn resampled(&self, rate: f64) -> Trajectory {
        if (rate - self.frame_rate).abs() < 1e-9 {
            return self.clone();
        }
        let n_out = (self.duration() * rate).floor() as usize;
        let mut frames = Array2::zeros((n_out, BLENDSHAPE_COUNT));
        for k in 0..n_out {
            let row = self.sample_at(k as f64 / rate);
            for (j, v) in row.into_iter().enumerate() {
                frames[[k, j]] = v;
            }
        }
        Trajectory {
            frames,
            frame_rate: rate,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scene_validates() {
        Scene::default_face().validate_face().unwrap();
    }

    #[test]
    fn scene_json_round_trips() {
        let scene = Scene::default_face();
        let json = serde_json::to_string_pretty(&scene).unwrap();
        let back: Scene = serde_json::from_str(&json).unwrap();
        assert_eq!(scene, back);
    }

    #[test]
    fn face_scene_needs_both_channels() {
        let mut scene = Scene::default_face();
        scene.reflectors.retain(|r| r.channel == 0);
        assert!(scene.validate_face().is_err());
    }

    #[test]
    fn clutter_must_sit_beyond_the_face() {
        let mut scene = Scene::default_face();
        scene.clutter[0].distance = 0.09;
        assert!(scene.validate_face().is_err());
    }

    #[test]
    fn trajectory_interpolation_is_exact_on_ramps() {
        let n = 100;
        let mut frames = Array2::zeros((n, BLENDSHAPE_COUNT));
        for k in 0..n {
            frames[[k, 0]] = k as f64 * 10.0;
        }
        let traj = Trajectory {
            frames,
            frame_rate: 30.0,
        };
        let resampled = traj.resampled(50_000.0 / 600.0);
        for k in 0..resampled.n_frames() {
            let t = k as f64 / resampled.frame_rate;
            let want = (t * 30.0).min((n - 1) as f64) * 10.0;
            assert!((resampled.frames[[k, 0]] - want).abs() < 1e-9);
        }
    }
}
