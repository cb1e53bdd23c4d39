//! GREEN, CHROM and POS over 136-frame chunks with stride 68, overlap-added
//! into one waveform and reduced to heart rate.

use rppg::estimate::{run_chunked, ChunkConfig, Method};
use rppg::metrics::pearson;
use rppg::postprocess::{hr_full, overlap_add, StftConfig};
use rppg::synth::{synth_session, HrTrajectory, SynthSpec};

fn main() -> rppg::Result<()> {
    let s = synth_session(&SynthSpec::new(HrTrajectory::constant(84.0, 30.0)?), "est")?;
    let cfg = ChunkConfig::default();
    for method in Method::ALL {
        let chunks = run_chunked(&method, &s.video, &cfg)?;
        let wave = overlap_add(&chunks, cfg.covered_len(s.video.len()), s.video.fps())?;
        let hr = hr_full(&wave, &StftConfig::default())?;
        let r = pearson(&wave.masked_zeroed(), &s.gt.samples()[..wave.len()]).unwrap_or(f64::NAN);
        println!("{method:?}: {} chunks, HR {hr:.2} BPM, r vs truth {r:+.3}", chunks.len());
    }
    Ok(())
}
