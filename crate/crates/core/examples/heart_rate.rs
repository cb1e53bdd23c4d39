//! STFT heart-rate extraction with 10 s, 30 s and whole-signal windows, and
//! masking of ground-truth segments around an abrupt rate change.

use std::f64::consts::PI;

use rppg::postprocess::{hr_series, mask_unstable_gt, PostVariant, StftConfig};
use rppg::Waveform;

fn main() -> rppg::Result<()> {
    let fs = 30.0;
    // 70 BPM for 30 s, then 100 BPM
    let mut phase = 0.0f64;
    let samples: Vec<f64> = (0..1800)
        .map(|i| {
            let v = phase.sin();
            phase += 2.0 * PI * if i < 900 { 70.0 } else { 100.0 } / 60.0 / fs;
            v
        })
        .collect();
    let wave = Waveform::new(samples, fs)?;

    for variant in [PostVariant::W10, PostVariant::W30, PostVariant::WFull] {
        let hr = variant.hr(&wave)?;
        let vals: Vec<f64> = hr.valid_window_values().collect();
        println!(
            "{}: {} values, first {:.2}, last {:.2}",
            variant.name(),
            vals.len(),
            vals[0],
            vals[vals.len() - 1]
        );
    }

    let hr = hr_series(&wave, &StftConfig::default())?;
    let masked = mask_unstable_gt(&hr, 7.0, 10.0);
    let dropped: Vec<usize> = hr.windows().filter(|&i| !masked.valid()[i]).collect();
    println!(
        "masking drops {} windows, centers {}..={}",
        dropped.len(),
        dropped[0],
        dropped[dropped.len() - 1]
    );
    Ok(())
}
