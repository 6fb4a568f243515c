//! Dataset assembly and augmentation.
//!
//! A session is stored compactly as its truncated differential-profile
//! columns plus per-frame targets; each 60 x 84 training window is a view of
//! 84 consecutive columns, so ten thousand windows cost the memory of one
//! column sequence. Windows flatten row-major (row r, column t at
//! `r * 84 + t`) wherever a flat feature vector is needed.

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blendshape::{BlendshapeVector, BLENDSHAPE_COUNT};
use crate::chirp::ChirpSpec;
use crate::error::{ConfigError, Error, Result};
use crate::pipeline::FrameProcessor;
use crate::profile::TRUNCATED_BINS;
use crate::window::{EchoWindow, WINDOW_FRAMES, WINDOW_ROWS};
use crate::wire::AlignedSession;

/// Flattened window length: 60 x 84.
pub const WINDOW_FEATURES: usize = WINDOW_ROWS * WINDOW_FRAMES;

/// One training example.
#[derive(Debug, Clone)]
pub struct DatasetWindow {
    pub input: EchoWindow,
    pub target: BlendshapeVector,
    pub session_id: String,
    pub frame_index: usize,
}

/// A processed session: differential columns and aligned targets.
#[derive(Debug, Clone)]
pub struct SessionFeatures {
    pub session_id: String,
    /// `[60 x n_diffs]`; column `j` is the truncated differential profile at
    /// frame `j + 1` (channel 0's bins above channel 1's).
    pub diffs: Array2<f64>,
    /// `[n_frames x 52]` targets aligned to frames.
    pub targets: Array2<f64>,
}

impl SessionFeatures {
    pub fn n_frames(&self) -> usize {
        self.targets.nrows()
    }

    /// Windows exist for frames 84 .. n_frames-1.
    pub fn n_windows(&self) -> usize {
        self.n_frames().saturating_sub(WINDOW_FRAMES)
    }

    /// Frame index of window `w`.
    pub fn window_frame(&self, w: usize) -> usize {
        w + WINDOW_FRAMES
    }

    /// Copy window `w` into a flat row, row-major.
    pub fn fill_window(&self, w: usize, out: &mut [f64]) {
        assert_eq!(out.len(), WINDOW_FEATURES);
        // Window at frame k spans diffs at frames k-83..k, i.e. diff
        // columns k-84..k-1 in storage.
        let c0 = w; // == window_frame(w) - WINDOW_FRAMES - 1 + 1
        for r in 0..WINDOW_ROWS {
            for t in 0..WINDOW_FRAMES {
                out[r * WINDOW_FRAMES + t] = self.diffs[[r, c0 + t]];
            }
        }
    }

    pub fn window(&self, w: usize) -> EchoWindow {
        let c0 = w;
        EchoWindow {
            values: self.diffs.slice(s![.., c0..c0 + WINDOW_FRAMES]).to_owned(),
            frame_index: self.window_frame(w),
        }
    }

    pub fn target(&self, w: usize) -> BlendshapeVector {
        let row = self.targets.row(self.window_frame(w)).to_vec();
        BlendshapeVector::from_scaled(&row).expect("aligned targets are in range").0
    }
}

/// Run the DSP pipeline over an aligned session.
pub fn extract_features(
    session: &AlignedSession,
    chirp: &ChirpSpec,
    session_id: &str,
) -> Result<SessionFeatures> {
    let n_frames = session.n_frames();
    if n_frames < WINDOW_FRAMES + 1 {
        return Err(Error::data(format!(
            "session {session_id} has {n_frames} frames, need at least {}",
            WINDOW_FRAMES + 1
        )));
    }
    let mut proc = FrameProcessor::new(chirp)?;
    let mut diffs = Array2::zeros((WINDOW_ROWS, n_frames - 1));
    for k in 0..n_frames {
        let out = proc.push_frame(session.frame(k))?;
        if let Some(d) = out.diff {
            let col = d.frame_index - 1;
            for bin in 0..TRUNCATED_BINS {
                diffs[[bin, col]] = d.values[[bin, 0]];
                diffs[[TRUNCATED_BINS + bin, col]] = d.values[[bin, 1]];
            }
        }
    }
    Ok(SessionFeatures {
        session_id: session_id.to_string(),
        diffs,
        targets: session.gt.clone(),
    })
}

/// Materialize every window of a session, one per frame from 84 onward.
pub fn assemble_dataset(features: &SessionFeatures) -> Vec<DatasetWindow> {
    (0..features.n_windows())
        .map(|w| DatasetWindow {
            input: features.window(w),
            target: features.target(w),
            session_id: features.session_id.clone(),
            frame_index: features.window_frame(w),
        })
        .collect()
}

/// Shift each channel's 30-row block by `k` rows (positive = toward larger
/// bins), zero-filling vacated rows. Models device remounting.
pub fn vertical_shift_values(values: &Array2<f64>, k: i32) -> Result<Array2<f64>, ConfigError> {
    if k.unsigned_abs() as usize > 3 {
        return Err(ConfigError::new(format!(
            "vertical shift {k} exceeds the +-3 bin budget"
        )));
    }
    let (rows, cols) = values.dim();
    assert_eq!(rows, WINDOW_ROWS);
    let mut out = Array2::zeros((rows, cols));
    let bins = TRUNCATED_BINS as i32;
    for block in 0..2 {
        let base = block * TRUNCATED_BINS;
        for r in 0..bins {
            let src = r - k;
            if (0..bins).contains(&src) {
                for c in 0..cols {
                    out[[base + r as usize, c]] = values[[base + src as usize, c]];
                }
            }
        }
    }
    Ok(out)
}

/// [`vertical_shift_values`] on a full example; the target never changes.
pub fn augment_vertical_shift(w: &DatasetWindow, k: i32) -> Result<DatasetWindow, ConfigError> {
    Ok(DatasetWindow {
        input: EchoWindow {
            values: vertical_shift_values(&w.input.values, k)?,
            frame_index: w.input.frame_index,
        },
        target: w.target.clone(),
        session_id: w.session_id.clone(),
        frame_index: w.frame_index,
    })
}

/// A bank of motion differential-profile sequences for additive
/// augmentation (walking and other whole-body movement patterns).
#[derive(Debug, Clone, Default)]
pub struct MotionBank {
    /// Each `[60 x n]` with n >= 84.
    pub sequences: Vec<Array2<f64>>,
}

impl MotionBank {
    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// A random 60 x 84 excerpt.
    pub fn sample(&self, rng: &mut impl Rng) -> Array2<f64> {
        assert!(!self.is_empty(), "motion bank is empty");
        let seq = &self.sequences[rng.gen_range(0..self.sequences.len())];
        let max_start = seq.ncols() - WINDOW_FRAMES;
        let start = if max_start == 0 { 0 } else { rng.gen_range(0..=max_start) };
        seq.slice(s![.., start..start + WINDOW_FRAMES]).to_owned()
    }
}

/// Add a scaled random motion excerpt to the input; the target never changes.
/// Scale 0 is the identity.
pub fn augment_motion(
    w: &DatasetWindow,
    bank: &MotionBank,
    scale: f64,
    rng: &mut impl Rng,
) -> DatasetWindow {
    let mut values = w.input.values.clone();
    if scale != 0.0 && !bank.is_empty() {
        let excerpt = bank.sample(rng);
        values += &(excerpt * scale);
    }
    DatasetWindow {
        input: EchoWindow {
            values,
            frame_index: w.input.frame_index,
        },
        target: w.target.clone(),
        session_id: w.session_id.clone(),
        frame_index: w.frame_index,
    }
}

/// Build a motion bank by simulating scenes where loosely mixed reflectors
/// drift under a smooth random drive, standing in for walking clutter.
pub fn synth_motion_bank(n_sequences: usize, frames_per_seq: usize, seed: u64) -> Result<MotionBank> {
    use crate::sim::{render_received, Reflector, Scene, Trajectory};

    let chirp = ChirpSpec::default();
    let mut sequences = Vec::with_capacity(n_sequences);
    for s in 0..n_sequences {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s as u64).wrapping_mul(0x9E37))
            ;
        let mut reflectors = Vec::new();
        for ch in 0..2 {
            for _ in 0..2 {
                let mut mix = vec![0.0; BLENDSHAPE_COUNT];
                for m in mix.iter_mut() {
                    *m = rng.gen_range(-0.3..0.3);
                }
                reflectors.push(Reflector {
                    channel: ch,
                    base_distance: rng.gen_range(0.015..0.095),
                    reflectivity: rng.gen_range(0.05..0.15),
                    mix,
                    gain: rng.gen_range(0.004..0.012),
                });
            }
        }
        let scene = Scene {
            reflectors,
            clutter: vec![],
            noise: Default::default(),
            clap_times: vec![],
        };
        // Smooth random walk drive.
        let n_frames = frames_per_seq + 1;
        let mut frames = Array2::zeros((n_frames, BLENDSHAPE_COUNT));
        let mut state = vec![300.0f64; BLENDSHAPE_COUNT];
        let mut vel = vec![0.0; BLENDSHAPE_COUNT];
        for k in 0..n_frames {
            for j in 0..BLENDSHAPE_COUNT {
                vel[j] = 0.95 * vel[j] + rng.gen_range(-3.0..3.0);
                state[j] = (state[j] + vel[j]).clamp(0.0, 1000.0);
                frames[[k, j]] = state[j];
            }
        }
        let traj = Trajectory {
            frames,
            frame_rate: chirp.frame_rate(),
        };
        let audio = render_received(&scene, &traj, &chirp)?;

        let mut proc = FrameProcessor::new(&chirp)?;
        let mut diffs = Array2::zeros((WINDOW_ROWS, n_frames - 1));
        for k in 0..n_frames {
            let out = proc.push_frame([
                &audio.ch[0][k * 600..(k + 1) * 600],
                &audio.ch[1][k * 600..(k + 1) * 600],
            ])?;
            if let Some(d) = out.diff {
                let col = d.frame_index - 1;
                for bin in 0..TRUNCATED_BINS {
                    diffs[[bin, col]] = d.values[[bin, 0]];
                    diffs[[TRUNCATED_BINS + bin, col]] = d.values[[bin, 1]];
                }
            }
        }
        sequences.push(diffs);
    }
    Ok(MotionBank { sequences })
}
