//! Writes a small synthetic dataset (frames, ground truth, face boxes and a
//! manifest per session) and reads one session back.
//!
//! cargo run --release --example synth_dataset -- /tmp/rppg-demo

use std::path::PathBuf;

use rppg::io::{list_manifests, load_session};
use rppg::synth::{synth_session, write_session, HrTrajectory, SynthSpec};

fn main() -> rppg::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("rppg-demo"));
    let trajectories = [
        ("steady", HrTrajectory::constant(72.0, 20.0)?),
        ("ramp", HrTrajectory::linear_ramp(60.0, 1.0, 20.0)?),
        ("wave", HrTrajectory::sinusoidal(90.0, 8.0, 10.0, 20.0)?),
    ];
    for (i, (id, traj)) in trajectories.into_iter().enumerate() {
        let mut spec = SynthSpec::new(traj);
        spec.seed = i as u64;
        write_session(&out, &synth_session(&spec, id)?)?;
    }
    for m in list_manifests(&out)? {
        let s = load_session(&m)?;
        println!(
            "{:>6}: {} frames {}x{} at {} fps, {} ground-truth samples",
            m.session_id,
            s.video.len(),
            s.video.height(),
            s.video.width(),
            s.video.fps(),
            s.gt.len()
        );
    }
    println!("dataset in {}", out.display());
    Ok(())
}
