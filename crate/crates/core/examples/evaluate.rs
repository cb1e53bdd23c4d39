//! Heart-rate and waveform metrics for a few predicted sessions, aggregated
//! with 95% confidence intervals, plus the zero-effort baseline.

use rppg::metrics::{dataset_mean_hr, session_metrics, zero_effort, MetricsReport, SessionRecord};
use rppg::postprocess::{hr_series, StftConfig};
use rppg::synth::{synth_waveform, HrTrajectory};
use rppg::Waveform;

fn main() -> rppg::Result<()> {
    let cfg = StftConfig::default();
    let mut records = Vec::new();
    let mut truths = Vec::new();
    for (i, bpm) in [60.0, 70.0, 80.0, 90.0, 100.0].into_iter().enumerate() {
        let gt = synth_waveform(&HrTrajectory::constant(bpm, 60.0)?, 30.0)?;
        // a prediction 1.5 BPM fast and 3 samples late; its phase drifts away
        // from the truth, so r_wave stays low even at the best lag
        let fast = synth_waveform(&HrTrajectory::constant(bpm + 1.5, 60.0)?, 30.0)?;
        let mut shifted = vec![0.0; 3];
        shifted.extend_from_slice(&fast.samples()[..fast.len() - 3]);
        let pred = Waveform::new(shifted, 30.0)?;
        let (hp, hg) = (hr_series(&pred, &cfg)?, hr_series(&gt, &cfg)?);
        records.push(SessionRecord {
            session_id: format!("s{i:02}"),
            metrics: session_metrics(&hp, &hg, &pred, &gt, 1.0)?,
        });
        truths.push(hg);
    }
    let report = MetricsReport::new(serde_json::json!({"variant": "w10", "max_lag_s": 1.0}), records, false)?;
    print!("{}", report.to_csv()?);

    let mean = dataset_mean_hr(&truths)?;
    let z = zero_effort(&truths, mean)?;
    println!("zero-effort at {mean:.2} BPM: ME {:.3}, MAE {:.3}, RMSE {:.3}", z.me, z.mae, z.rmse);
    Ok(())
}
