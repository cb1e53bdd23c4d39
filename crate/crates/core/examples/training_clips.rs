//! Draws a reproducible schedule of augmented training clips: random speed
//! target, then a random modulation factor, then spatial jitter.

use rppg::augment::{augment_clip, spatial_augment, ModulationSpec, SpatialAugSpec, SpeedAugSpec, TemporalAugOptions};
use rppg::postprocess::{hr_series, StftConfig};
use rppg::synth::{synth_session, HrTrajectory, SynthSpec};
use rppg::RngState;

fn main() -> rppg::Result<()> {
    let mut spec = SynthSpec::new(HrTrajectory::sinusoidal(75.0, 6.0, 15.0, 40.0)?);
    spec.size = 32;
    let s = synth_session(&spec, "train")?;
    let gt_hr = hr_series(&s.gt, &StftConfig::default())?;
    let (speed, modulation) = (SpeedAugSpec::default(), ModulationSpec::default());
    let options = TemporalAugOptions { speed: true, modulation: true };
    let root = RngState::new(2024, "epoch0");

    for (k, start) in (150..1000).step_by(136).enumerate() {
        let mut rng = root.substream(&format!("clip{k}"));
        let aug = augment_clip(&s.video, &s.gt, &gt_hr, start, &speed, &modulation, options, &mut rng)?;
        let video = spatial_augment(&aug.video, &mut rng, &SpatialAugSpec::default())?;
        let p = aug.provenance;
        println!(
            "clip {k} @ {start:4}: source {:6.2} BPM, target {:6.2}, L {:3}, f {:.3}, labels {:6.2} -> {:6.2}, {} frames",
            p.hr_source,
            p.hr_target,
            p.source_len,
            p.factor,
            aug.realized_hr_start,
            aug.realized_hr_end,
            video.len()
        );
    }
    Ok(())
}
