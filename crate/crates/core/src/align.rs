//! Bringing ground-truth and predicted waveforms onto a common time base.

use crate::error::{Error, Result};
use crate::types::Waveform;

/// Linear-interpolation resampling to `target_fs`.
///
/// The output has `round(len * target_fs / fs)` samples; sample `j` reads the
/// input at position `j * fs / target_fs`, clamped to the last sample. An
/// output sample is invalid if either flanking input sample is invalid.
pub fn resample_waveform(w: &Waveform, target_fs: f64) -> Result<Waveform> {
    if !(target_fs.is_finite() && target_fs > 0.0) {
        return Err(Error::invalid(format!("target rate must be positive, got {target_fs}")));
    }
    if target_fs == w.fs() {
        return Ok(w.clone());
    }
    let src = w.samples();
    let last = src.len() - 1;
    let out_len = ((src.len() as f64 * target_fs / w.fs()).round() as usize).max(1);
    let step = w.fs() / target_fs;
    let mut samples = Vec::with_capacity(out_len);
    let mut mask = w.mask().map(|_| Vec::with_capacity(out_len));
    for j in 0..out_len {
        let pos = (j as f64 * step).min(last as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(last);
        let frac = pos - i0 as f64;
        samples.push(src[i0] + (src[i1] - src[i0]) * frac);
        if let Some(m) = mask.as_mut() {
            let exact = frac == 0.0;
            m.push(w.is_valid(i0) && (exact || w.is_valid(i1)));
        }
    }
    Waveform::with_mask(samples, target_fs, mask)
}

/// Trims the longer of two same-rate waveforms from its end so both have
/// equal length.
pub fn truncate_to_match(gt: &Waveform, pred: &Waveform) -> Result<(Waveform, Waveform)> {
    if gt.fs() != pred.fs() {
        return Err(Error::RateMismatch(gt.fs(), pred.fs()));
    }
    let n = gt.len().min(pred.len());
    Ok((gt.truncated(n), pred.truncated(n)))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct piecewise-linear evaluation on an explicit time axis.
    fn interp_oracle(xs: &[f64], fs: f64, t: f64) -> f64 {
        let times: Vec<f64> = (0..xs.len()).map(|i| i as f64 / fs).collect();
        if t >= *times.last().unwrap() {
            return *xs.last().unwrap();
        }
        let k = times.iter().rposition(|&ti| ti <= t).unwrap();
        let a = (t - times[k]) / (times[k + 1] - times[k]);
        xs[k] * (1.0 - a) + xs[k + 1] * a
    }

    #[test]
    fn ramp_upsampling_matches_oracle() {
        let w = Waveform::new(vec![0.0, 1.0, 2.0, 3.0], 2.0).unwrap();
        let up = resample_waveform(&w, 4.0).unwrap();
        let expected: Vec<f64> = (0..8).map(|j| interp_oracle(w.samples(), 2.0, j as f64 / 4.0)).collect();
        assert_eq!(expected, vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.0]);
        assert_eq!(up.samples(), expected.as_slice());
    }

    #[test]
    fn length_ratio_and_identity() {
        let w = Waveform::new((0..600).map(|i| (i as f64 * 0.1).sin()).collect(), 60.0).unwrap();
        assert_eq!(resample_waveform(&w, 30.0).unwrap().len(), 300);
        assert_eq!(resample_waveform(&w, 60.0).unwrap(), w);
        assert!(resample_waveform(&w, 0.0).is_err());
    }

    #[test]
    fn sinusoid_down_up_error_is_small() {
        let f = 1.5;
        let w = Waveform::new(
            (0..1200).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / 60.0).sin()).collect(),
            60.0,
        )
        .unwrap();
        let back = resample_waveform(&resample_waveform(&w, 30.0).unwrap(), 60.0).unwrap();
        assert_eq!(back.len(), w.len());
        let err = w
            .samples()
            .iter()
            .zip(back.samples())
            .take(w.len() - 2)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.05, "max error {err}");
    }

    #[test]
    fn mask_is_conservative() {
        let w = Waveform::with_mask(vec![0.0, 1.0, 2.0, 3.0], 1.0, Some(vec![true, false, true, true]))
            .unwrap();
        let up = resample_waveform(&w, 2.0).unwrap();
        // positions 0, .5, 1, 1.5, 2, 2.5, 3, 3
        assert_eq!(
            up.mask().unwrap(),
            &[true, false, false, false, true, true, true, true]
        );
    }

    #[test]
    fn truncation_drops_tail_of_longer() {
        let gt = Waveform::new((0..340).map(f64::from).collect(), 30.0).unwrap();
        let pred = Waveform::new(vec![0.0; 272], 30.0).unwrap();
        let (g, p) = truncate_to_match(&gt, &pred).unwrap();
        assert_eq!((g.len(), p.len()), (272, 272));
        assert_eq!(g.samples(), &gt.samples()[..272]);
        let (g2, p2) = truncate_to_match(&g, &p).unwrap();
        assert_eq!((g2, p2), (g, p));

        let a = Waveform::new(vec![1.0; 10], 30.0).unwrap();
        let b = Waveform::new(vec![2.0; 12], 30.0).unwrap();
        let (a2, b2) = truncate_to_match(&a, &b).unwrap();
        assert_eq!((a2.len(), b2.len()), (10, 10));
        let c = Waveform::new(vec![2.0; 12], 60.0).unwrap();
        assert!(matches!(truncate_to_match(&a, &c), Err(Error::RateMismatch(..))));
    }
}
