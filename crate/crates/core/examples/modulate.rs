//! Heart-rate modulation: the allowed factor range under the 7 BPM/s cap and
//! the warped positions that sweep the rate linearly across a clip.

use rppg::augment::{modulate_within, modulation_bounds, modulation_positions, modulation_rates, ModulationSpec};
use rppg::synth::{synth_session, HrTrajectory, SynthSpec};

fn main() -> rppg::Result<()> {
    let spec = ModulationSpec::default();
    let (n, fps) = (spec.clip_len, 30.0);
    for hr in [50.0, 80.0, 120.0, 170.0] {
        let (lo, hi) = modulation_bounds(hr, n, fps, &spec);
        println!("{hr:5.1} BPM: f in [{lo:.4}, {hi:.4}]");
    }

    let f = 1.5;
    let p = modulation_positions(f, n, n + 1);
    let (s, e) = modulation_rates(f);
    println!("f = {f}: s = {s}, e = {e}, P(68) = {:.4}, P(136) = {:.4}", p[68], p[n]);

    let mut sspec = SynthSpec::new(HrTrajectory::constant(60.0, 10.0)?);
    sspec.size = 16;
    let session = synth_session(&sspec, "mod")?;
    let (video, wave) = modulate_within(&session.video, &session.gt, f, 60.0, &spec)?;
    println!(
        "modulated clip: {} frames, {} samples, rate {:.1} -> {:.1} BPM",
        video.len(),
        wave.len(),
        60.0 * s,
        60.0 * e
    );
    Ok(())
}
