//! Speed augmentation: a 72 BPM clip resampled to a 120 BPM target, with the
//! label recomputed from the interval length.

use rppg::augment::{source_hr, speed_augment, speed_source_len};
use rppg::postprocess::{hr_full, StftConfig};
use rppg::synth::{synth_session, HrTrajectory, SynthSpec};

fn main() -> rppg::Result<()> {
    let mut spec = SynthSpec::new(HrTrajectory::constant(72.0, 30.0)?);
    spec.size = 32;
    let s = synth_session(&spec, "demo")?;
    let cfg = StftConfig::default();
    let (start, n) = (300, 136);

    let src = source_hr(&s.gt, start, n, &cfg)?;
    for target in [40.0, 90.0, 120.0, 180.0] {
        let aug = speed_augment(&s.video, &s.gt, start, src, target, n)?;
        let measured = hr_full(&aug.wave, &cfg)?;
        println!(
            "target {target:5.1}: L = {:3} (floor {:3}), label {:7.3} BPM, measured {:7.3} BPM, source frames {}..{}",
            aug.provenance.source_len,
            speed_source_len(n, src, target),
            aug.realized_hr_start,
            measured,
            aug.provenance.source_start,
            aug.provenance.source_start + aug.provenance.source_len
        );
    }
    Ok(())
}
