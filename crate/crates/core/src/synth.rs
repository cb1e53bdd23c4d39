//! Synthetic pulse videos with exact ground truth.
//!
//! The pulse is a two-harmonic sinusoid whose phase is the closed-form
//! integral of the heart-rate trajectory. It tints a static central disc
//! along a green-dominant skin direction, under per-pixel noise and a slow
//! multiplicative illumination drift.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array4;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{write_frames_dir, write_json, write_landmarks_json, write_waveform_csv, SessionManifest};
use crate::rng::RngState;
use crate::types::{LandmarkTrack, VideoClip, Waveform};

/// Fastest heart-rate change a trajectory may contain, BPM/s.
pub const MAX_SLOPE_BPM_S: f64 = 7.0;
pub const HR_RANGE_BPM: (f64, f64) = (40.0, 180.0);

/// Skin color change per unit pulse, before normalization.
pub const SKIN_DIRECTION: [f64; 3] = [0.3, 1.0, 0.5];

/// Face disc radius as a fraction of the frame size (about 64% coverage).
const DISC_RADIUS: f64 = 0.45;
const BACKGROUND: [f64; 3] = [0.25, 0.25, 0.25];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HrTrajectory {
    Constant {
        bpm: f64,
        duration_s: f64,
    },
    LinearRamp {
        start_bpm: f64,
        slope_bpm_s: f64,
        duration_s: f64,
    },
    Sinusoidal {
        base_bpm: f64,
        depth_bpm: f64,
        period_s: f64,
        duration_s: f64,
    },
}

impl HrTrajectory {
    pub fn constant(bpm: f64, duration_s: f64) -> Result<Self> {
        HrTrajectory::Constant { bpm, duration_s }.validated()
    }

    pub fn linear_ramp(start_bpm: f64, slope_bpm_s: f64, duration_s: f64) -> Result<Self> {
        HrTrajectory::LinearRamp {
            start_bpm,
            slope_bpm_s,
            duration_s,
        }
        .validated()
    }

    pub fn sinusoidal(base_bpm: f64, depth_bpm: f64, period_s: f64, duration_s: f64) -> Result<Self> {
        HrTrajectory::Sinusoidal {
            base_bpm,
            depth_bpm,
            period_s,
            duration_s,
        }
        .validated()
    }

    /// Checks the slope cap and that the rate stays within 40..=180 BPM.
    pub fn validated(self) -> Result<Self> {
        let d = self.duration_s();
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::invalid(format!("duration must be positive, got {d}")));
        }
        if let HrTrajectory::Sinusoidal { period_s, .. } = self {
            if !(period_s > 0.0) {
                return Err(Error::invalid("modulation period must be positive"));
            }
        }
        let slope = self.max_slope();
        if !(slope <= MAX_SLOPE_BPM_S + 1e-12) {
            return Err(Error::invalid(format!(
                "heart-rate slope {slope} BPM/s exceeds {MAX_SLOPE_BPM_S} BPM/s"
            )));
        }
        let (lo, hi) = self.bpm_extent();
        if !(lo >= HR_RANGE_BPM.0 - 1e-9 && hi <= HR_RANGE_BPM.1 + 1e-9) {
            return Err(Error::invalid(format!(
                "heart rate spans [{lo}, {hi}] BPM, outside [{}, {}]",
                HR_RANGE_BPM.0, HR_RANGE_BPM.1
            )));
        }
        Ok(self)
    }

    pub fn duration_s(&self) -> f64 {
        match *self {
            HrTrajectory::Constant { duration_s, .. }
            | HrTrajectory::LinearRamp { duration_s, .. }
            | HrTrajectory::Sinusoidal { duration_s, .. } => duration_s,
        }
    }

    /// Instantaneous heart rate at `t` seconds.
    pub fn bpm_at(&self, t: f64) -> f64 {
        match *self {
            HrTrajectory::Constant { bpm, .. } => bpm,
            HrTrajectory::LinearRamp {
                start_bpm,
                slope_bpm_s,
                ..
            } => start_bpm + slope_bpm_s * t,
            HrTrajectory::Sinusoidal {
                base_bpm,
                depth_bpm,
                period_s,
                ..
            } => base_bpm + depth_bpm * (2.0 * PI * t / period_s).sin(),
        }
    }

    /// Pulse phase in radians: `2 pi` times the integral of `bpm / 60`.
    pub fn phase_at(&self, t: f64) -> f64 {
        let beats = match *self {
            HrTrajectory::Constant { bpm, .. } => bpm * t,
            HrTrajectory::LinearRamp {
                start_bpm,
                slope_bpm_s,
                ..
            } => start_bpm * t + 0.5 * slope_bpm_s * t * t,
            HrTrajectory::Sinusoidal {
                base_bpm,
                depth_bpm,
                period_s,
                ..
            } => base_bpm * t + depth_bpm * period_s / (2.0 * PI) * (1.0 - (2.0 * PI * t / period_s).cos()),
        };
        2.0 * PI * beats / 60.0
    }

    pub fn max_slope(&self) -> f64 {
        match *self {
            HrTrajectory::Constant { .. } => 0.0,
            HrTrajectory::LinearRamp { slope_bpm_s, .. } => slope_bpm_s.abs(),
            HrTrajectory::Sinusoidal {
                depth_bpm,
                period_s,
                ..
            } => depth_bpm.abs() * 2.0 * PI / period_s,
        }
    }

    fn bpm_extent(&self) -> (f64, f64) {
        match *self {
            HrTrajectory::Constant { bpm, .. } => (bpm, bpm),
            HrTrajectory::LinearRamp { duration_s, .. } => {
                let (a, b) = (self.bpm_at(0.0), self.bpm_at(duration_s));
                (a.min(b), a.max(b))
            }
            HrTrajectory::Sinusoidal {
                base_bpm,
                depth_bpm,
                period_s,
                duration_s,
            } => {
                if duration_s >= period_s / 2.0 {
                    (base_bpm - depth_bpm.abs(), base_bpm + depth_bpm.abs())
                } else {
                    let samples = (0..=1000).map(|i| self.bpm_at(duration_s * i as f64 / 1000.0));
                    samples.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
                }
            }
        }
    }
}

/// Peak of `|sin x + h sin 2x|` over a period.
fn two_harmonic_peak(h: f64) -> f64 {
    let grid = 20_000;
    (0..grid)
        .map(|i| {
            let x = 2.0 * PI * i as f64 / grid as f64;
            (x.sin() + h * (2.0 * x).sin()).abs()
        })
        .fold(0.0, f64::max)
}

fn pulse_value(phase: f64, harmonic_ratio: f64, peak: f64) -> f64 {
    (phase.sin() + harmonic_ratio * (2.0 * phase).sin()) / peak
}

/// Samples the peak-normalized pulse of `traj` at `fs` Hz.
pub fn synth_waveform_with(traj: &HrTrajectory, fs: f64, harmonic_ratio: f64) -> Result<Waveform> {
    if !(0.0..1.0).contains(&harmonic_ratio) {
        return Err(Error::invalid("harmonic ratio must lie in [0, 1)"));
    }
    let n = ((traj.duration_s() * fs).round() as usize).max(1);
    let peak = two_harmonic_peak(harmonic_ratio);
    let samples = (0..n)
        .map(|i| pulse_value(traj.phase_at(i as f64 / fs), harmonic_ratio, peak))
        .collect();
    Waveform::new(samples, fs)
}

/// Pure fundamental pulse (no harmonic).
pub fn synth_waveform(traj: &HrTrajectory, fs: f64) -> Result<Waveform> {
    synth_waveform_with(traj, fs, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub trajectory: HrTrajectory,
    pub fps: f64,
    /// Ground-truth waveform rate.
    pub gt_fs: f64,
    pub size: usize,
    pub base_rgb: [f64; 3],
    pub pulse_amplitude: f64,
    pub harmonic_ratio: f64,
    pub noise_sigma: f64,
    /// Relative amplitude of the multiplicative illumination drift.
    pub illum_drift_amplitude: f64,
    pub illum_drift_period_s: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(trajectory: HrTrajectory) -> Self {
        SynthSpec {
            trajectory,
            fps: 30.0,
            gt_fs: 30.0,
            size: 64,
            base_rgb: [0.62, 0.45, 0.38],
            pulse_amplitude: 0.02,
            harmonic_ratio: 0.3,
            noise_sigma: 0.02,
            illum_drift_amplitude: 0.03,
            illum_drift_period_s: 20.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.trajectory.validated()?;
        if !(self.fps > 0.0 && self.gt_fs > 0.0) {
            return Err(Error::invalid("frame and waveform rates must be positive"));
        }
        if self.size < 8 {
            return Err(Error::invalid("frame size must be at least 8"));
        }
        if !(self.pulse_amplitude >= 0.0) {
            return Err(Error::invalid("pulse amplitude must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.harmonic_ratio) {
            return Err(Error::invalid("harmonic ratio must lie in [0, 1)"));
        }
        if !(self.noise_sigma >= 0.0 && self.illum_drift_amplitude >= 0.0 && self.illum_drift_period_s > 0.0) {
            return Err(Error::invalid("noise and drift parameters must be non-negative"));
        }
        Ok(())
    }
}

/// Generated video, ground truth, face boxes and a manifest whose paths are
/// relative to the dataset directory.
#[derive(Debug, Clone)]
pub struct SynthSession {
    pub video: VideoClip,
    pub gt: Waveform,
    pub landmarks: LandmarkTrack,
    pub manifest: SessionManifest,
}

/// Whether pixel `(y, x)` lies on the face disc of a `size`-pixel frame.
pub fn on_face(y: usize, x: usize, size: usize) -> bool {
    let c = size as f64 / 2.0;
    let r = DISC_RADIUS * size as f64;
    let (dx, dy) = (x as f64 + 0.5 - c, y as f64 + 0.5 - c);
    dx * dx + dy * dy <= r * r
}

pub fn synth_session(spec: &SynthSpec, session_id: &str) -> Result<SynthSession> {
    spec.validate()?;
    let traj = &spec.trajectory;
    let n = ((traj.duration_s() * spec.fps).round() as usize).max(1);
    let size = spec.size;
    let norm = SKIN_DIRECTION.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dir: Vec<f64> = SKIN_DIRECTION.iter().map(|v| v / norm).collect();
    let peak = two_harmonic_peak(spec.harmonic_ratio);
    let face: Vec<bool> = (0..size * size).map(|i| on_face(i / size, i % size, size)).collect();
    let noise = if spec.noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };
    let root = RngState::new(spec.seed, "synth/noise");
    let per = size * size * 3;
    let mut data = vec![0f32; n * per];
    data.par_chunks_mut(per).enumerate().for_each(|(i, frame)| {
        let t = i as f64 / spec.fps;
        let pulse = spec.pulse_amplitude * pulse_value(traj.phase_at(t), spec.harmonic_ratio, peak);
        let gain = 1.0 + spec.illum_drift_amplitude * (2.0 * PI * t / spec.illum_drift_period_s).sin();
        let mut rng = root.substream(&i.to_string());
        for (p, px) in frame.chunks_exact_mut(3).enumerate() {
            for c in 0..3 {
                let clean = if face[p] {
                    spec.base_rgb[c] + pulse * dir[c]
                } else {
                    BACKGROUND[c]
                };
                let jitter = noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
                px[c] = (clean * gain + jitter).clamp(0.0, 1.0) as f32;
            }
        }
    });
    let frames = Array4::from_shape_vec((n, size, size, 3), data).expect("shape");
    let video = VideoClip::new(frames, spec.fps)?;
    let gt = synth_waveform_with(traj, spec.gt_fs, spec.harmonic_ratio)?;
    let (c, r) = (size as f64 / 2.0, DISC_RADIUS * size as f64);
    let landmarks = LandmarkTrack::Boxes(vec![[c - r, c - r, c + r, c + r]; n]);
    let manifest = SessionManifest {
        session_id: session_id.to_string(),
        subject_id: format!("subject-{session_id}"),
        frames_dir: PathBuf::from(session_id).join("frames"),
        fps: spec.fps,
        gt_waveform: PathBuf::from(session_id).join("gt.csv"),
        gt_fs: spec.gt_fs,
        landmarks: Some(PathBuf::from(session_id).join("landmarks.json")),
        base_dir: PathBuf::new(),
    };
    Ok(SynthSession {
        video,
        gt,
        landmarks,
        manifest,
    })
}

/// Writes frames, waveform CSV, landmarks and `<session_id>.json` into
/// `dataset`, in the layout [`crate::io::load_session`] reads.
pub fn write_session(dataset: &Path, session: &SynthSession) -> Result<PathBuf> {
    let m = &session.manifest;
    let dir = dataset.join(&m.session_id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_frames_dir(&dataset.join(&m.frames_dir), &session.video)?;
    write_waveform_csv(&dataset.join(&m.gt_waveform), &session.gt)?;
    if let Some(l) = &m.landmarks {
        write_landmarks_json(&dataset.join(l), &session.landmarks)?;
    }
    let path = dataset.join(format!("{}.json", m.session_id));
    write_json(&path, m)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_cap_enforced() {
        assert!(HrTrajectory::linear_ramp(60.0, 8.0, 2.0).is_err());
        assert!(HrTrajectory::linear_ramp(60.0, 1.0, 30.0).is_ok());
        assert!(HrTrajectory::constant(200.0, 10.0).is_err());
        assert!(HrTrajectory::sinusoidal(80.0, 20.0, 10.0, 60.0).is_err());
        assert!(HrTrajectory::sinusoidal(80.0, 10.0, 10.0, 60.0).is_ok());
    }

    #[test]
    fn phase_is_integral_of_rate() {
        let trajs = [
            HrTrajectory::constant(72.0, 30.0).unwrap(),
            HrTrajectory::linear_ramp(60.0, 1.0, 30.0).unwrap(),
            HrTrajectory::sinusoidal(90.0, 10.0, 12.0, 30.0).unwrap(),
        ];
        for tr in trajs {
            // trapezoid integration of the rate
            let steps = 30_000;
            let dt = 30.0 / steps as f64;
            let mut acc = 0.0;
            for i in 0..steps {
                let (a, b) = (tr.bpm_at(i as f64 * dt), tr.bpm_at((i + 1) as f64 * dt));
                acc += 0.5 * (a + b) * dt;
            }
            let expected = 2.0 * PI * acc / 60.0;
            assert!((tr.phase_at(30.0) - expected).abs() < 1e-6, "{tr:?}");
        }
    }

    #[test]
    fn waveform_peak_normalized() {
        let tr = HrTrajectory::constant(72.0, 20.0).unwrap();
        let w = synth_waveform_with(&tr, 300.0, 0.3).unwrap();
        let peak = w.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak <= 1.0 + 1e-12 && peak > 0.99);
    }

    #[test]
    fn face_disc_coverage() {
        let size = 64;
        let on = (0..size * size).filter(|&i| on_face(i / size, i % size, size)).count();
        assert!(on as f64 / (size * size) as f64 >= 0.6);
    }

    #[test]
    fn seed_changes_noise_not_truth() {
        let tr = HrTrajectory::constant(72.0, 2.0).unwrap();
        let mut a = SynthSpec::new(tr);
        a.size = 16;
        let mut b = a;
        b.seed = 9;
        let sa = synth_session(&a, "a").unwrap();
        let sb = synth_session(&b, "b").unwrap();
        assert_ne!(sa.video, sb.video);
        assert_eq!(sa.gt, sb.gt);
        let again = synth_session(&a, "a").unwrap();
        assert_eq!(sa.video, again.video);
    }
}
