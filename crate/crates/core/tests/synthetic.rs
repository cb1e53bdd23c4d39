//! End-to-end checks on generated sessions: generator ground truth,
//! estimator accuracy and augmentation labels.

use rppg::augment::{sample_target_hr, source_hr, speed_augment, SpeedAugSpec};
use rppg::estimate::{run_chunked, ChunkConfig, Method};
use rppg::postprocess::{hr_full, hr_series, overlap_add, StftConfig};
use rppg::synth::{synth_session, synth_waveform, HrTrajectory, SynthSpec};
use rppg::{RngState, VideoClip, Waveform};

fn median_hr(wave: &Waveform) -> f64 {
    let hr = hr_series(wave, &StftConfig::default()).unwrap();
    let mut v: Vec<f64> = hr.valid_window_values().collect();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn estimated_hr(method: Method, clip: &VideoClip) -> f64 {
    let cfg = ChunkConfig::default();
    let chunks = run_chunked(&method, clip, &cfg).unwrap();
    let wave = overlap_add(&chunks, cfg.covered_len(clip.len()), clip.fps()).unwrap();
    median_hr(&wave)
}

#[test]
fn generator_truth_matches_stft() {
    let w = synth_waveform(&HrTrajectory::constant(72.0, 30.0).unwrap(), 30.0).unwrap();
    let hr = hr_series(&w, &StftConfig::default()).unwrap();
    assert!(hr.valid_window_values().all(|v| (v - 72.0).abs() <= 0.06));

    for traj in [
        HrTrajectory::linear_ramp(60.0, 1.0, 30.0).unwrap(),
        HrTrajectory::sinusoidal(90.0, 10.0, 20.0, 60.0).unwrap(),
    ] {
        let w = synth_waveform(&traj, 30.0).unwrap();
        let hr = hr_series(&w, &StftConfig::default()).unwrap();
        for i in hr.windows() {
            let truth = traj.bpm_at(i as f64 / 30.0);
            assert!((hr.bpm()[i] - truth).abs() <= 1.5, "{traj:?} at {i}: {} vs {truth}", hr.bpm()[i]);
        }
    }
}

#[test]
fn estimators_recover_constant_rates() {
    for bpm in [45.0, 72.0, 120.0, 170.0] {
        let mut spec = SynthSpec::new(HrTrajectory::constant(bpm, 30.0).unwrap());
        spec.noise_sigma = 0.01;
        let s = synth_session(&spec, "x").unwrap();
        for m in Method::ALL {
            let got = estimated_hr(m, &s.video);
            assert!((got - bpm).abs() <= 2.0, "{m:?} at {bpm}: {got}");
        }
    }
}

#[test]
fn chrom_survives_strong_illumination_drift() {
    let mut spec = SynthSpec::new(HrTrajectory::constant(72.0, 60.0).unwrap());
    spec.illum_drift_amplitude = 0.2;
    let s = synth_session(&spec, "drift").unwrap();
    let got = estimated_hr(Method::Chrom, &s.video);
    assert!((got - 72.0).abs() <= 2.0, "{got}");
}

#[test]
fn scaled_video_keeps_estimates() {
    let spec = SynthSpec::new(HrTrajectory::constant(84.0, 20.0).unwrap());
    let s = synth_session(&spec, "scale").unwrap();
    let scaled = VideoClip::new(s.video.frames().mapv(|v| v * 0.8 + 0.05), s.video.fps()).unwrap();
    for m in Method::ALL {
        assert_eq!(estimated_hr(m, &s.video), estimated_hr(m, &scaled), "{m:?}");
    }
}

#[test]
fn zero_pulse_is_a_negative_control() {
    let mut spec = SynthSpec::new(HrTrajectory::constant(72.0, 20.0).unwrap());
    spec.pulse_amplitude = 0.0;
    let s = synth_session(&spec, "null").unwrap();
    // runs to completion; the recovered rate carries no information
    let _ = estimated_hr(Method::Green, &s.video);
}

#[test]
fn chirp_source_rate_is_its_mean() {
    // 60 -> 66 BPM across a 136-frame clip placed mid-session
    let (fs, n, start) = (30.0, 136usize, 300usize);
    let slope = 6.0 / (n as f64 / fs);
    let t0 = start as f64 / fs;
    let traj = HrTrajectory::linear_ramp(60.0 - slope * t0, slope, 30.0).unwrap();
    let w = synth_waveform(&traj, fs).unwrap();
    let hr = source_hr(&w, start, n, &StftConfig::default()).unwrap();
    assert!((hr - 63.0).abs() <= 1.0, "{hr}");
}

#[test]
fn doubled_speed_doubles_rate() {
    let mut spec = SynthSpec::new(HrTrajectory::constant(72.0, 30.0).unwrap());
    spec.size = 16;
    let s = synth_session(&spec, "speed").unwrap();
    let cfg = StftConfig::default();
    let src = source_hr(&s.gt, 400, 136, &cfg).unwrap();
    let aug = speed_augment(&s.video, &s.gt, 400, src, 144.0, 136).unwrap();
    assert_eq!(aug.provenance.source_len, 272);
    assert!((hr_full(&aug.wave, &cfg).unwrap() - 144.0).abs() <= 1.0);
    let g: Vec<f64> = aug.video.channel_means().iter().map(|c| c[1]).collect();
    let video_hr = hr_full(&Waveform::new(g, 30.0).unwrap(), &cfg).unwrap();
    assert!((video_hr - 144.0).abs() <= 1.0, "{video_hr}");
}

#[test]
fn target_draws_are_uniform() {
    let spec = SpeedAugSpec::default();
    let mut rng = RngState::new(1, "targets");
    let n = 100_000;
    let mean = (0..n).map(|_| sample_target_hr(&mut rng, &spec)).sum::<f64>() / n as f64;
    assert!((mean - 110.0).abs() < 1.0);
}
