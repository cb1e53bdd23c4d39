//! The chunk-prediction exchange format used to score models trained
//! elsewhere: write, reload (bit-exact) and overlap-add.

use rppg::estimate::{load_external_predictions, write_predictions, ChunkConfig, ChunkPrediction, PredictionsFile};
use rppg::postprocess::{hr_full, overlap_add, StftConfig};

fn main() -> rppg::Result<()> {
    let cfg = ChunkConfig::default();
    let fps = 30.0;
    let pulse = |i: usize| (2.0 * std::f64::consts::PI * 1.1 * i as f64 / fps).sin();
    let chunks = cfg
        .starts(600)
        .into_iter()
        .map(|start| ChunkPrediction {
            start,
            values: (start..start + cfg.chunk_len).map(pulse).collect(),
        })
        .collect();
    let file = PredictionsFile {
        chunk_len: cfg.chunk_len,
        stride: cfg.stride,
        fps,
        chunks,
    };
    let path = std::env::temp_dir().join("rppg-predictions.json");
    write_predictions(&path, &file)?;
    let (back, warnings) = load_external_predictions(&path)?;
    println!("round trip identical: {}, warnings: {warnings:?}", back == file);

    let wave = overlap_add(&back.chunks, cfg.covered_len(600), fps)?;
    println!("HR {:.2} BPM (expected 66)", hr_full(&wave, &StftConfig::default())?);
    Ok(())
}
