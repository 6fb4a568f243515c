//! Forward model: reflector scene plus trajectory to received audio.
//!
//! The transmitted sweep repeats back to back, so within a frame a delayed
//! copy is a circular fractional shift of the template. Reflector distances
//! are held constant across each 12 ms frame (sampled from the trajectory at
//! the frame start), which keeps every frame an exact snapshot of the scene
//! and makes a static scene produce bit-identical frames.

use crate::chirp::{distance_to_delay_samples, generate_chirp, ChirpSpec, StereoWaveform, SPEED_OF_SOUND};
use crate::error::ConfigError;
use crate::sim::{inject_clap, Scene, Trajectory};

/// Maximum unambiguous one-way distance: half a frame of round-trip delay.
pub fn unambiguous_range(spec: &ChirpSpec) -> f64 {
    spec.n_samples as f64 * SPEED_OF_SOUND / spec.fs / 2.0
}

/// Add a circularly delayed copy of `template` into `out`, linearly
/// interpolating the fractional part of the delay.
fn add_delayed(out: &mut [f64], template: &[f64], delay_samples: f64, gain: f64) {
    let n = template.len();
    let floor = delay_samples.floor();
    let frac = delay_samples - floor;
    let d = (floor as i64).rem_euclid(n as i64) as usize;
    // out[i] += gain * ((1-frac) * tpl[i - d] + frac * tpl[i - d - 1]), circular.
    for (i, o) in out.iter_mut().enumerate() {
        let j0 = (i + n - d) % n;
        let j1 = (j0 + n - 1) % n;
        *o += gain * ((1.0 - frac) * template[j0] + frac * template[j1]);
    }
}

/// Render the two received channels for a scene driven by a trajectory.
///
/// The trajectory is resampled to the chirp frame rate; reflector `k`'s
/// one-way distance in frame `f` is
/// `base_distance + gain * (mix . b_f) / 1000`. Claps and noise from the
/// scene description are applied after the echoes.
pub fn render_received(
    scene: &Scene,
    traj: &Trajectory,
    chirp: &ChirpSpec,
) -> Result<StereoWaveform, ConfigError> {
    chirp.validate()?;
    scene.noise.validate()?;
    let template = generate_chirp(chirp)?;
    let n = chirp.n_samples;
    let max_range = unambiguous_range(chirp);

    let drive = traj.resampled(chirp.frame_rate());
    let n_frames = drive.n_frames();
    if n_frames == 0 {
        return Err(ConfigError::new("trajectory spans zero frames"));
    }
    let total = n_frames * n;
    let mut ch = [vec![0.0f64; total], vec![0.0f64; total]];

    // Static clutter: one delayed template per clutter reflector, reused
    // for every frame.
    let mut clutter_frames: [Vec<f64>; 2] = [vec![0.0; n], vec![0.0; n]];
    for c in &scene.clutter {
        if c.channel > 1 {
            return Err(ConfigError::new(format!("bad clutter channel {}", c.channel)));
        }
        if c.distance >= max_range || c.distance < 0.0 {
            return Err(ConfigError::new(format!(
                "clutter distance {} m outside the unambiguous range {:.3} m",
                c.distance, max_range
            )));
        }
        let delay = distance_to_delay_samples(c.distance, chirp.fs, SPEED_OF_SOUND);
        add_delayed(&mut clutter_frames[c.channel], &template.samples, delay, c.reflectivity);
    }

    for f in 0..n_frames {
        let b = drive.frames.row(f);
        let out_range = f * n..(f + 1) * n;
        for r in &scene.reflectors {
            if r.channel > 1 {
                return Err(ConfigError::new(format!("bad reflector channel {}", r.channel)));
            }
            let mixed: f64 = r.mix.iter().zip(b.iter()).map(|(m, v)| m * v).sum();
            let d = r.base_distance + r.gain * mixed / 1000.0;
            if d < 0.0 || d >= max_range {
                return Err(ConfigError::new(format!(
                    "reflector distance {d:.4} m outside [0, {max_range:.3}) m in frame {f}"
                )));
            }
            let delay = distance_to_delay_samples(d, chirp.fs, SPEED_OF_SOUND);
            add_delayed(&mut ch[r.channel][out_range.clone()], &template.samples, delay, r.reflectivity);
        }
        for c in 0..2 {
            for (o, v) in ch[c][out_range.clone()].iter_mut().zip(&clutter_frames[c]) {
                *o += v;
            }
        }
    }

    let mut stereo = StereoWaveform::new(ch[0].clone(), ch[1].clone(), chirp.fs);
    for &t in &scene.clap_times {
        for c in 0..2 {
            let mut w = crate::chirp::Waveform::new(std::mem::take(&mut stereo.ch[c]), chirp.fs);
            w = inject_clap(&w, t)?;
            stereo.ch[c] = w.samples;
        }
    }
    stereo = inject_noise_if_enabled(stereo, scene)?;
    Ok(stereo)
}

fn inject_noise_if_enabled(stereo: StereoWaveform, scene: &Scene) -> Result<StereoWaveform, ConfigError> {
    if scene.noise.is_off() {
        return Ok(stereo);
    }
    Ok(crate::sim::inject_noise_stereo(&stereo, &scene.noise, 0))
}

/// Render with an explicit noise seed (the scene's own noise spec applies).
pub fn render_received_seeded(
    scene: &Scene,
    traj: &Trajectory,
    chirp: &ChirpSpec,
    noise_seed: u64,
) -> Result<StereoWaveform, ConfigError> {
    let mut quiet = scene.clone();
    quiet.noise = crate::sim::NoiseSpec::default();
    let clean = render_received(&quiet, traj, chirp)?;
    if scene.noise.is_off() {
        return Ok(clean);
    }
    Ok(crate::sim::inject_noise_stereo(&clean, &scene.noise, noise_seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blendshape::BLENDSHAPE_COUNT;
    use crate::profile::{differential, echo_profile_stereo, oracle, Correlator};
    use crate::sim::{NoiseSpec, Reflector};
    use ndarray::Array2;

    fn static_trajectory(n_frames: usize) -> Trajectory {
        Trajectory {
            frames: Array2::zeros((n_frames, BLENDSHAPE_COUNT)),
            frame_rate: 50_000.0 / 600.0,
        }
    }

    fn single_reflector_scene(d: f64) -> Scene {
        Scene {
            reflectors: vec![Reflector {
                channel: 0,
                base_distance: d,
                reflectivity: 0.5,
                mix: vec![0.0; BLENDSHAPE_COUNT],
                gain: 0.0,
            }],
            clutter: vec![],
            noise: NoiseSpec::default(),
            clap_times: vec![],
        }
    }

    #[test]
    fn reflector_at_17cm_peaks_at_lag_50() {
        let chirp = ChirpSpec::default();
        // 2 * 0.17 / 340 * 50000 = 50 samples round trip.
        let mut scene = single_reflector_scene(0.17);
        scene.reflectors[0].base_distance = 0.17;
        let traj = static_trajectory(3);
        let audio = render_received(&scene, &traj, &chirp).unwrap();

        let template = generate_chirp(&chirp).unwrap();
        let frame = &audio.ch[0][600..1200];
        let prof = oracle::circular_correlation(frame, &template.samples);
        let argmax = prof
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 50);
    }

    #[test]
    fn static_scene_has_identical_frames_and_zero_diffs() {
        let chirp = ChirpSpec::default();
        let mut scene = Scene::default_face();
        scene.noise = NoiseSpec::default();
        let traj = static_trajectory(6);
        let audio = render_received(&scene, &traj, &chirp).unwrap();

        let template = generate_chirp(&chirp).unwrap();
        let corr = Correlator::new(&template);
        let mut prev = None;
        for f in 0..6 {
            let fr = [&audio.ch[0][f * 600..(f + 1) * 600], &audio.ch[1][f * 600..(f + 1) * 600]];
            let prof = echo_profile_stereo(&corr, fr, f).unwrap();
            if let Some(p) = prev {
                let d = differential(&p, &prof).unwrap();
                assert!(d.values.iter().all(|&v| v == 0.0), "nonzero diff at frame {f}");
            }
            prev = Some(prof);
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let chirp = ChirpSpec::default();
        let mut scene = Scene::default_face();
        scene.noise = NoiseSpec {
            white_snr_db: Some(30.0),
            audible_band: None,
        };
        scene.clap_times = vec![0.01];
        let traj = static_trajectory(4);
        let a = render_received_seeded(&scene, &traj, &chirp, 5).unwrap();
        let b = render_received_seeded(&scene, &traj, &chirp, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn superposition_of_reflector_sets() {
        let chirp = ChirpSpec::default();
        let traj = static_trajectory(3);
        let mut both = single_reflector_scene(0.05);
        both.reflectors.push(Reflector {
            channel: 0,
            base_distance: 0.09,
            reflectivity: 0.3,
            mix: vec![0.0; BLENDSHAPE_COUNT],
            gain: 0.0,
        });
        let first = single_reflector_scene(0.05);
        let mut second = single_reflector_scene(0.09);
        second.reflectors[0].reflectivity = 0.3;

        let sum_scene = render_received(&both, &traj, &chirp).unwrap();
        let a = render_received(&first, &traj, &chirp).unwrap();
        let b = render_received(&second, &traj, &chirp).unwrap();
        for i in 0..sum_scene.len() {
            let want = a.ch[0][i] + b.ch[0][i];
            assert!((sum_scene.ch[0][i] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn one_sided_motion_lands_in_the_matching_channel() {
        let chirp = ChirpSpec::default();
        // All moving reflectors on channel 0; channel 1 gets a static one.
        let mut mix = vec![0.0; BLENDSHAPE_COUNT];
        mix[0] = 1.0;
        let scene = Scene {
            reflectors: vec![
                Reflector {
                    channel: 0,
                    base_distance: 0.05,
                    reflectivity: 0.4,
                    mix: mix.clone(),
                    gain: 0.01,
                },
                Reflector {
                    channel: 1,
                    base_distance: 0.05,
                    reflectivity: 0.4,
                    mix: vec![0.0; BLENDSHAPE_COUNT],
                    gain: 0.0,
                },
            ],
            clutter: vec![],
            noise: NoiseSpec::default(),
            clap_times: vec![],
        };
        // Ramp blendshape 0 across frames.
        let n_frames = 40;
        let mut frames = Array2::zeros((n_frames, BLENDSHAPE_COUNT));
        for k in 0..n_frames {
            frames[[k, 0]] = k as f64 * 20.0;
        }
        let traj = Trajectory {
            frames,
            frame_rate: 50_000.0 / 600.0,
        };
        let audio = render_received(&scene, &traj, &chirp).unwrap();

        let template = generate_chirp(&chirp).unwrap();
        let corr = Correlator::new(&template);
        let mut energy = [0.0f64; 2];
        let mut prev: Option<crate::profile::EchoProfile> = None;
        for f in 0..n_frames {
            let fr = [&audio.ch[0][f * 600..(f + 1) * 600], &audio.ch[1][f * 600..(f + 1) * 600]];
            let prof = echo_profile_stereo(&corr, fr, f).unwrap();
            if let Some(p) = &prev {
                let d = differential(p, &prof).unwrap();
                let t = crate::profile::truncate_bins(&d, 30).unwrap();
                for bin in 0..30 {
                    energy[0] += t[[bin, 0]] * t[[bin, 0]];
                    energy[1] += t[[bin, 1]] * t[[bin, 1]];
                }
            }
            prev = Some(prof);
        }
        assert!(
            energy[0] >= 5.0 * energy[1],
            "channel energies {energy:?} not one-sided"
        );
    }

    #[test]
    fn moving_reflector_diff_energy_stays_near_its_bin() {
        let chirp = ChirpSpec::default();
        let mut mix = vec![0.0; BLENDSHAPE_COUNT];
        mix[0] = 1.0;
        let scene = Scene {
            reflectors: vec![
                Reflector {
                    channel: 0,
                    base_distance: 0.051,
                    reflectivity: 0.5,
                    mix,
                    gain: 0.004,
                },
                Reflector {
                    channel: 1,
                    base_distance: 0.051,
                    reflectivity: 0.5,
                    mix: vec![0.0; BLENDSHAPE_COUNT],
                    gain: 0.0,
                },
            ],
            clutter: vec![],
            noise: NoiseSpec::default(),
            clap_times: vec![],
        };
        let mut frames = Array2::zeros((3, BLENDSHAPE_COUNT));
        frames[[1, 0]] = 100.0;
        frames[[2, 0]] = 200.0;
        let traj = Trajectory {
            frames,
            frame_rate: chirp.frame_rate(),
        };
        let audio = render_received(&scene, &traj, &chirp).unwrap();
        let template = generate_chirp(&chirp).unwrap();
        let corr = Correlator::new(&template);
        let p0 = echo_profile_stereo(&corr, [&audio.ch[0][0..600], &audio.ch[1][0..600]], 0).unwrap();
        let p1 = echo_profile_stereo(&corr, [&audio.ch[0][600..1200], &audio.ch[1][600..1200]], 1).unwrap();
        let d = differential(&p0, &p1).unwrap();

        // The diff magnitude peaks within +-2 bins of the reflector's bin
        // (15), and the surrounding correlation lobe holds the energy.
        let bin = (2.0_f64 * 0.051 / 340.0 * 50_000.0).round() as usize;
        let peak_lag = (0..600)
            .max_by(|&a, &b| {
                d.values[[a, 0]]
                    .abs()
                    .partial_cmp(&d.values[[b, 0]].abs())
                    .unwrap()
            })
            .unwrap();
        assert!(
            (peak_lag as i64 - bin as i64).unsigned_abs() <= 2,
            "diff peak at lag {peak_lag}, reflector bin {bin}"
        );
        let all: f64 = (0..600).map(|l| d.values[[l, 0]].powi(2)).sum();
        let lobe: f64 = (bin.saturating_sub(13)..=bin + 13)
            .map(|l| d.values[[l, 0]].powi(2))
            .sum();
        assert!(lobe / all > 0.8, "lobe energy fraction {}", lobe / all);
    }

    #[test]
    fn out_of_range_reflector_is_rejected() {
        let chirp = ChirpSpec::default();
        let scene = single_reflector_scene(2.1);
        let traj = static_trajectory(2);
        assert!(render_received(&scene, &traj, &chirp).is_err());
    }
}
