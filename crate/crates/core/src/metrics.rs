//! Heart-rate error metrics, lag-compensated waveform correlation, the
//! negative Pearson loss and cross-session aggregation.
//!
//! Heart-rate metrics run over STFT windows that are valid in both series
//! (pairwise masking); filled edge entries of an [`HrSeries`] never count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{HrSeries, Waveform};

/// Multiplier for a two-sided 95% normal confidence interval.
pub const Z95: f64 = 1.96;

/// Mean with 95% confidence half-width `1.96 * s / sqrt(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub ci95: f64,
}

/// Sample-std-based CI; a single value has width 0.
pub fn mean_ci(values: &[f64]) -> MeanCi {
    let n = values.len();
    if n == 0 {
        return MeanCi {
            mean: f64::NAN,
            ci95: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanCi { mean, ci95: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    MeanCi {
        mean,
        ci95: Z95 * var.sqrt() / (n as f64).sqrt(),
    }
}

/// Differences `pred - gt` over jointly valid computed windows.
fn paired_errors(pred: &HrSeries, gt: &HrSeries) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!(
            "heart-rate series differ in length ({} vs {})",
            pred.len(),
            gt.len()
        )));
    }
    let (pw, gw) = (pred.windows(), gt.windows());
    let range = pw.start.max(gw.start)..pw.end.min(gw.end);
    let errors: Vec<f64> = range
        .filter(|&i| pred.valid()[i] && gt.valid()[i])
        .map(|i| pred.bpm()[i] - gt.bpm()[i])
        .collect();
    if errors.is_empty() {
        return Err(Error::NoValidWindows);
    }
    Ok(errors)
}

/// Bias: mean of `HR' - HR`.
pub fn mean_error(pred: &HrSeries, gt: &HrSeries) -> Result<f64> {
    let e = paired_errors(pred, gt)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

pub fn mean_absolute_error(pred: &HrSeries, gt: &HrSeries) -> Result<f64> {
    let e = paired_errors(pred, gt)?;
    Ok(e.iter().map(|v| v.abs()).sum::<f64>() / e.len() as f64)
}

pub fn rmse(pred: &HrSeries, gt: &HrSeries) -> Result<f64> {
    let e = paired_errors(pred, gt)?;
    Ok((e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt())
}

/// Pearson correlation of two equal-length slices; `None` if either has
/// zero variance or fewer than two samples.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x[..n].iter().zip(&y[..n]) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn variance_of_valid(w: &Waveform) -> f64 {
    let vals: Vec<f64> = (0..w.len())
        .filter(|&i| w.is_valid(i))
        .map(|i| w.samples()[i])
        .collect();
    if vals.len() < 2 {
        return 0.0;
    }
    let m = vals.iter().sum::<f64>() / vals.len() as f64;
    vals.iter().map(|v| (v - m).powi(2)).sum::<f64>()
}

/// Pearson r between predicted and ground-truth waves, maximized over
/// integer lags `k` in `[-L, L]` with `L = floor(max_lag_s * fs)`.
///
/// At lag `k`, `pred[i + k]` is paired with `gt[i]`. Pairs where either
/// sample is masked are skipped. Ties keep the smaller `|k|`, then the
/// negative lag.
pub fn r_wave(pred: &Waveform, gt: &Waveform, max_lag_s: f64) -> Result<(f64, i64)> {
    if pred.fs() != gt.fs() {
        return Err(Error::RateMismatch(pred.fs(), gt.fs()));
    }
    if !(max_lag_s.is_finite() && max_lag_s >= 0.0) {
        return Err(Error::invalid("maximum lag must be non-negative"));
    }
    if variance_of_valid(pred) <= 0.0 {
        return Err(Error::ZeroVariance("predicted waveform"));
    }
    if variance_of_valid(gt) <= 0.0 {
        return Err(Error::ZeroVariance("ground-truth waveform"));
    }
    let max_lag = (max_lag_s * pred.fs() + 1e-9).floor() as i64;
    let mut best: Option<(f64, i64)> = None;
    let mut lags = vec![0i64];
    for k in 1..=max_lag {
        lags.push(-k);
        lags.push(k);
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for k in lags {
        xs.clear();
        ys.clear();
        for i in 0..gt.len() as i64 {
            let j = i + k;
            if j < 0 || j >= pred.len() as i64 {
                continue;
            }
            let (i, j) = (i as usize, j as usize);
            if gt.is_valid(i) && pred.is_valid(j) {
                xs.push(pred.samples()[j]);
                ys.push(gt.samples()[i]);
            }
        }
        if let Some(r) = pearson(&xs, &ys) {
            if best.is_none_or(|(b, _)| r > b) {
                best = Some((r, k));
            }
        }
    }
    best.ok_or(Error::TooShort {
        needed: 2,
        available: 0,
    })
}

/// `-r(pred, target)`, the training criterion for pulse waveforms.
pub fn neg_pearson_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::invalid(format!(
            "loss inputs differ in length ({} vs {})",
            pred.len(),
            target.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            available: pred.len(),
        });
    }
    pearson(pred, target)
        .map(|r| -r)
        .ok_or(Error::ZeroVariance("loss input"))
}

/// Metrics for one evaluated session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub me: f64,
    pub mae: f64,
    pub rmse: f64,
    pub r_wave: f64,
    pub n_windows: usize,
    pub lag_used: i64,
}

pub fn session_metrics(
    hr_pred: &HrSeries,
    hr_gt: &HrSeries,
    wave_pred: &Waveform,
    wave_gt: &Waveform,
    max_lag_s: f64,
) -> Result<SessionMetrics> {
    let errors = paired_errors(hr_pred, hr_gt)?;
    let n = errors.len() as f64;
    let (r, lag) = r_wave(wave_pred, wave_gt, max_lag_s)?;
    Ok(SessionMetrics {
        me: errors.iter().sum::<f64>() / n,
        mae: errors.iter().map(|v| v.abs()).sum::<f64>() / n,
        rmse: (errors.iter().map(|v| v * v).sum::<f64>() / n).sqrt(),
        r_wave: r,
        n_windows: errors.len(),
        lag_used: lag,
    })
}

/// Aggregated metrics over sessions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub sessions: usize,
    pub me: MeanCi,
    pub mae: MeanCi,
    pub rmse: MeanCi,
    pub r_wave: MeanCi,
    /// True when ME was averaged as `|ME|` per session.
    pub abs_me: bool,
}

pub fn aggregate(sessions: &[SessionMetrics], abs_me: bool) -> Result<AggregateMetrics> {
    if sessions.is_empty() {
        return Err(Error::Empty("session metrics"));
    }
    let col = |f: &dyn Fn(&SessionMetrics) -> f64| -> Vec<f64> { sessions.iter().map(f).collect() };
    Ok(AggregateMetrics {
        sessions: sessions.len(),
        me: mean_ci(&col(&|s| if abs_me { s.me.abs() } else { s.me })),
        mae: mean_ci(&col(&|s| s.mae)),
        rmse: mean_ci(&col(&|s| s.rmse)),
        r_wave: mean_ci(&col(&|s| s.r_wave)),
        abs_me,
    })
}

/// Per-session entry of a [`MetricsReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    #[serde(flatten)]
    pub metrics: SessionMetrics,
}

/// Per-session and aggregate metrics plus the configuration that produced
/// them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: serde_json::Value,
    pub sessions: Vec<SessionRecord>,
    pub aggregate: AggregateMetrics,
}

impl MetricsReport {
    /// Builds a report; sessions are sorted by id so the output does not
    /// depend on evaluation order.
    pub fn new(config: serde_json::Value, mut sessions: Vec<SessionRecord>, abs_me: bool) -> Result<Self> {
        sessions.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        let metrics: Vec<SessionMetrics> = sessions.iter().map(|s| s.metrics).collect();
        let aggregate = aggregate(&metrics, abs_me)?;
        Ok(MetricsReport {
            config,
            sessions,
            aggregate,
        })
    }

    /// CSV with one row per session followed by `mean` and `ci95` rows.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["session_id", "me", "mae", "rmse", "r_wave", "n_windows", "lag_used"])?;
        for s in &self.sessions {
            let m = &s.metrics;
            w.write_record([
                s.session_id.clone(),
                m.me.to_string(),
                m.mae.to_string(),
                m.rmse.to_string(),
                m.r_wave.to_string(),
                m.n_windows.to_string(),
                m.lag_used.to_string(),
            ])?;
        }
        let a = &self.aggregate;
        for (label, pick) in [("mean", 0), ("ci95", 1)] {
            let f = |c: &MeanCi| if pick == 0 { c.mean } else { c.ci95 }.to_string();
            w.write_record([
                label.to_string(),
                f(&a.me),
                f(&a.mae),
                f(&a.rmse),
                f(&a.r_wave),
                String::new(),
                String::new(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Errors of a constant predictor against every session's ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroEffort {
    pub constant_bpm: f64,
    pub me: f64,
    pub mae: f64,
    pub rmse: f64,
}

/// Mean over sessions of each session's mean valid ground-truth heart rate.
pub fn dataset_mean_hr(gt_sessions: &[HrSeries]) -> Result<f64> {
    if gt_sessions.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let means = gt_sessions
        .iter()
        .map(|s| {
            let v: Vec<f64> = s.valid_window_values().collect();
            if v.is_empty() {
                Err(Error::NoValidWindows)
            } else {
                Ok(v.iter().sum::<f64>() / v.len() as f64)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(means.iter().sum::<f64>() / means.len() as f64)
}

/// Scores the predictor that always answers `constant_bpm`; per-session
/// metrics are averaged across sessions.
pub fn zero_effort(gt_sessions: &[HrSeries], constant_bpm: f64) -> Result<ZeroEffort> {
    if gt_sessions.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut me = Vec::new();
    let mut mae = Vec::new();
    let mut rm = Vec::new();
    for gt in gt_sessions {
        let pred = HrSeries::new(
            vec![constant_bpm; gt.len()],
            vec![true; gt.len()],
            gt.fs(),
            gt.band(),
            gt.windows(),
        )?;
        me.push(mean_error(&pred, gt)?);
        mae.push(mean_absolute_error(&pred, gt)?);
        rm.push(rmse(&pred, gt)?);
    }
    let n = gt_sessions.len() as f64;
    Ok(ZeroEffort {
        constant_bpm,
        me: me.iter().sum::<f64>() / n,
        mae: mae.iter().sum::<f64>() / n,
        rmse: rm.iter().sum::<f64>() / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Band;

    fn series(v: &[f64]) -> HrSeries {
        HrSeries::from_values(v.to_vec(), 1.0, Band::DEFAULT).unwrap()
    }

    #[test]
    fn worked_examples() {
        let p = series(&[72.0, 74.0, 76.0]);
        let g = series(&[70.0, 70.0, 70.0]);
        assert_eq!(mean_error(&p, &g).unwrap(), 4.0);
        assert_eq!(mean_absolute_error(&p, &g).unwrap(), 4.0);
        assert!((rmse(&p, &g).unwrap() - 4.320_493_798_938_574).abs() < 1e-12);
        assert_eq!(mean_error(&g, &g).unwrap(), 0.0);

        let p = series(&[68.0, 72.0]);
        let g = series(&[70.0, 70.0]);
        assert_eq!(mean_error(&p, &g).unwrap(), 0.0);
        assert_eq!(mean_absolute_error(&p, &g).unwrap(), 2.0);

        let g = series(&[80.0; 10]);
        let mut pv = vec![80.0; 10];
        pv[3] = 90.0;
        let p = series(&pv);
        assert!((rmse(&p, &g).unwrap() - 10f64.sqrt()).abs() < 1e-12);
        assert_eq!(mean_absolute_error(&p, &g).unwrap(), 1.0);

        let shifted: Vec<f64> = [80.0, 90.0, 100.0].iter().map(|v| v - 5.0).collect();
        assert_eq!(mean_error(&series(&shifted), &series(&[80.0, 90.0, 100.0])).unwrap(), -5.0);
    }

    #[test]
    fn no_joint_windows_is_error() {
        let p = HrSeries::new(vec![70.0, f64::NAN], vec![true, false], 1.0, Band::DEFAULT, 0..2).unwrap();
        let g = HrSeries::new(vec![f64::NAN, 70.0], vec![false, true], 1.0, Band::DEFAULT, 0..2).unwrap();
        assert!(matches!(mean_error(&p, &g), Err(Error::NoValidWindows)));
    }

    #[test]
    fn r_wave_recovers_shift() {
        let gt: Vec<f64> = (0..300).map(|i| ((i * 37 % 101) as f64).sin()).collect();
        let mut pred = vec![0.0; 300];
        pred[15..300].copy_from_slice(&gt[..285]);
        let g = Waveform::new(gt.clone(), 30.0).unwrap();
        let p = Waveform::new(pred, 30.0).unwrap();
        let (r, lag) = r_wave(&p, &g, 1.0).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert_eq!(lag, 15);

        let neg = Waveform::new(gt.iter().map(|v| -v).collect(), 30.0).unwrap();
        let (r, lag) = r_wave(&neg, &g, 0.0).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
        assert_eq!(lag, 0);
        assert!((r_wave(&g, &g, 0.0).unwrap().0 - 1.0).abs() < 1e-12);
        let flat = Waveform::new(vec![1.0; 300], 30.0).unwrap();
        assert!(matches!(r_wave(&flat, &g, 1.0), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn loss_values() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        assert!((neg_pearson_loss(&x, &x).unwrap() + 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((neg_pearson_loss(&neg, &x).unwrap() - 1.0).abs() < 1e-12);
        let affine: Vec<f64> = x.iter().map(|v| 3.5 * v + 2.0).collect();
        assert!((neg_pearson_loss(&affine, &x).unwrap() + 1.0).abs() < 1e-12);
        assert!(neg_pearson_loss(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn aggregation() {
        let mk = |me: f64, mae: f64| SessionMetrics {
            me,
            mae,
            rmse: mae,
            r_wave: 0.5,
            n_windows: 1,
            lag_used: 0,
        };
        let a = aggregate(&[mk(0.0, 1.0), mk(0.0, 2.0), mk(0.0, 3.0)], false).unwrap();
        assert_eq!(a.mae.mean, 2.0);
        assert!((a.mae.ci95 - 1.96 / 3f64.sqrt()).abs() < 1e-12);
        let one = aggregate(&[mk(1.0, 1.0)], false).unwrap();
        assert_eq!(one.mae.ci95, 0.0);
        let abs = aggregate(&[mk(-3.0, 3.0), mk(3.0, 3.0)], true).unwrap();
        assert_eq!(abs.me.mean, 3.0);
        let signed = aggregate(&[mk(-3.0, 3.0), mk(3.0, 3.0)], false).unwrap();
        assert_eq!(signed.me.mean, 0.0);
    }

    #[test]
    fn zero_effort_two_sessions() {
        let gt = vec![series(&[60.0; 5]), series(&[100.0; 5])];
        let z = zero_effort(&gt, 80.0).unwrap();
        assert_eq!((z.me, z.mae, z.rmse), (0.0, 20.0, 20.0));
        let z = zero_effort(&gt[..1], 60.0).unwrap();
        assert_eq!(z.mae, 0.0);
        assert_eq!(dataset_mean_hr(&gt).unwrap(), 80.0);
    }
}
