//! Waveform reassembly and heart-rate extraction.
//!
//! Chunk predictions are stitched back together with periodic-Hann
//! overlap-add. Heart rate is read from the highest in-band peak of a
//! zero-padded, Hann-tapered spectrum, either per frame over a sliding
//! window or once over the whole waveform.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::ChunkPrediction;
use crate::metrics::{mean_ci, MeanCi};
use crate::types::{Band, HrSeries, Waveform};

/// Accumulated window weight below which an overlap-added sample is masked.
pub const MIN_OLA_WEIGHT: f64 = 1e-3;
const OLA_EPS: f64 = 1e-6;

/// Sliding-window spectral analysis settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_s: f64,
    pub stride_frames: usize,
    pub bin_hz: f64,
    pub band: Band,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            window_s: 10.0,
            stride_frames: 1,
            bin_hz: 0.001,
            band: Band::DEFAULT,
        }
    }
}

impl StftConfig {
    pub fn with_window(window_s: f64) -> Self {
        StftConfig {
            window_s,
            ..Default::default()
        }
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(self.window_s.is_finite() && self.window_s * fs >= 2.0) {
            return Err(Error::invalid(format!(
                "STFT window of {} s holds fewer than 2 samples at {fs} Hz",
                self.window_s
            )));
        }
        if self.stride_frames == 0 {
            return Err(Error::invalid("STFT stride must be at least one frame"));
        }
        if !(self.bin_hz.is_finite() && self.bin_hz > 0.0) {
            return Err(Error::invalid("STFT bin width must be positive"));
        }
        Band::new(self.band.lo, self.band.hi)?;
        Ok(())
    }

    pub fn window_len(&self, fs: f64) -> usize {
        (self.window_s * fs).round() as usize
    }

    /// Transform length giving a bin width no wider than `bin_hz`.
    pub fn fft_len(&self, fs: f64, signal_len: usize) -> usize {
        ((fs / self.bin_hz - 1e-9).ceil() as usize).max(signal_len)
    }
}

/// How heart rate is read from a waveform for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PostVariant {
    /// 10 s sliding window.
    W10,
    /// 30 s sliding window.
    W30,
    /// One transform over the whole waveform.
    WFull,
}

impl PostVariant {
    pub fn stft(self) -> StftConfig {
        match self {
            PostVariant::W10 => StftConfig::with_window(10.0),
            PostVariant::W30 => StftConfig::with_window(30.0),
            PostVariant::WFull => StftConfig::default(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PostVariant::W10 => "w10",
            PostVariant::W30 => "w30",
            PostVariant::WFull => "wfull",
        }
    }

    /// Heart-rate series under this variant; `WFull` yields a single entry.
    pub fn hr(self, wave: &Waveform) -> Result<HrSeries> {
        match self {
            PostVariant::WFull => {
                let cfg = self.stft();
                let bpm = hr_full(wave, &cfg)?;
                HrSeries::new(vec![bpm], vec![true], 1.0 / wave.duration_s(), cfg.band, 0..1)
            }
            _ => hr_series(wave, &self.stft()),
        }
    }
}

impl std::str::FromStr for PostVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "w10" => Ok(PostVariant::W10),
            "w30" => Ok(PostVariant::W30),
            "wfull" => Ok(PostVariant::WFull),
            _ => Err(Error::invalid(format!("unknown postprocess variant `{s}`"))),
        }
    }
}

/// Periodic Hann window of length `n`.
pub fn periodic_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos())
        .collect()
}

/// Hann-weighted overlap-add of chunk predictions into one waveform.
pub fn overlap_add(chunks: &[ChunkPrediction], total_len: usize, fs: f64) -> Result<Waveform> {
    if chunks.is_empty() {
        return Err(Error::Empty("chunk list"));
    }
    let end = chunks
        .iter()
        .map(|c| c.start + c.values.len())
        .max()
        .unwrap_or(0);
    if total_len < end {
        return Err(Error::invalid(format!(
            "total length {total_len} is shorter than the last chunk end {end}"
        )));
    }
    let mut acc = vec![0.0; total_len];
    let mut weight = vec![0.0; total_len];
    for chunk in chunks {
        let window = periodic_hann(chunk.values.len());
        for (k, (&v, &w)) in chunk.values.iter().zip(&window).enumerate() {
            acc[chunk.start + k] += v * w;
            weight[chunk.start + k] += w;
        }
    }
    let samples = acc
        .iter()
        .zip(&weight)
        .map(|(&a, &w)| a / w.max(OLA_EPS))
        .collect();
    let mask = weight.iter().map(|&w| w >= MIN_OLA_WEIGHT).collect();
    Waveform::with_mask(samples, fs, Some(mask))
}

struct Spectrum {
    fft: Arc<dyn Fft<f64>>,
    len: usize,
    fs: f64,
    band: Band,
}

impl Spectrum {
    fn new(len: usize, fs: f64, band: Band) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(len);
        Spectrum { fft, len, fs, band }
    }

    fn band_bins(&self) -> (usize, usize) {
        let df = self.fs / self.len as f64;
        let lo = (self.band.lo / df - 1e-9).ceil() as usize;
        let hi = ((self.band.hi / df + 1e-9).floor() as usize).min(self.len / 2);
        (lo, hi)
    }

    /// In-band peak frequency in BPM of the tapered segment, or `None` when
    /// the band holds no energy. Ties go to the lower frequency.
    fn peak_bpm(&self, segment: &[f64], buf: &mut Vec<Complex<f64>>, scratch: &mut Vec<Complex<f64>>) -> Option<f64> {
        buf.clear();
        buf.extend(segment.iter().map(|&v| Complex::new(v, 0.0)));
        buf.resize(self.len, Complex::new(0.0, 0.0));
        scratch.resize(self.fft.get_inplace_scratch_len(), Complex::new(0.0, 0.0));
        self.fft.process_with_scratch(buf, scratch);
        let (lo, hi) = self.band_bins();
        let mut best: Option<(usize, f64)> = None;
        for (k, c) in buf.iter().enumerate().take(hi + 1).skip(lo) {
            let p = c.norm_sqr();
            if best.is_none_or(|(_, b)| p > b) {
                best = Some((k, p));
            }
        }
        let (k, p) = best?;
        if !(p > 0.0) || !p.is_finite() {
            return None;
        }
        Some(60.0 * k as f64 * self.fs / self.len as f64)
    }
}

/// Mean-removes and Hann-tapers `x`; `None` when the segment is constant.
fn taper(x: &[f64], window: &[f64]) -> Option<Vec<f64>> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    if x.iter().all(|&v| (v - mean).abs() <= 1e-12 * (1.0 + mean.abs())) {
        return None;
    }
    Some(x.iter().zip(window).map(|(&v, &w)| (v - mean) * w).collect())
}

/// Per-frame heart rate from a sliding window.
///
/// Each window's estimate is assigned to its center frame; frames before the
/// first or after the last center copy the nearest computed entry. Windows
/// touching a masked sample, or holding a constant signal, are invalid.
pub fn hr_series(wave: &Waveform, cfg: &StftConfig) -> Result<HrSeries> {
    let fs = wave.fs();
    cfg.validate(fs)?;
    let win = cfg.window_len(fs);
    if wave.len() < win {
        return Err(Error::TooShort {
            needed: win,
            available: wave.len(),
        });
    }
    let samples = wave.samples();
    let mut bad_prefix = vec![0usize; wave.len() + 1];
    for i in 0..wave.len() {
        bad_prefix[i + 1] = bad_prefix[i] + usize::from(!wave.is_valid(i) || !samples[i].is_finite());
    }
    let spectrum = Spectrum::new(cfg.fft_len(fs, win), fs, cfg.band);
    let window = periodic_hann(win);
    let starts: Vec<usize> = (0..=wave.len() - win).step_by(cfg.stride_frames).collect();
    let estimates: Vec<Option<f64>> = starts
        .par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(buf, scratch), &s| {
                if bad_prefix[s + win] - bad_prefix[s] > 0 {
                    return None;
                }
                let seg = taper(&samples[s..s + win], &window)?;
                spectrum.peak_bpm(&seg, buf, scratch)
            },
        )
        .collect();

    let half = win / 2;
    let first_center = starts[0] + half;
    let last_center = starts[starts.len() - 1] + half;
    let mut bpm = vec![f64::NAN; wave.len()];
    let mut valid = vec![false; wave.len()];
    let mut assigned = vec![false; wave.len()];
    for (&s, est) in starts.iter().zip(&estimates) {
        let c = s + half;
        assigned[c] = true;
        if let Some(v) = est {
            bpm[c] = *v;
            valid[c] = true;
        }
    }
    // stride > 1 leaves gaps between centers; every frame takes its nearest
    // computed center, ties to the earlier one
    let mut prev: Option<usize> = None;
    let mut next_of = vec![None; wave.len()];
    let mut nxt = None;
    for i in (0..wave.len()).rev() {
        if assigned[i] {
            nxt = Some(i);
        }
        next_of[i] = nxt;
    }
    for i in 0..wave.len() {
        if assigned[i] {
            prev = Some(i);
            continue;
        }
        let src = match (prev, next_of[i]) {
            (Some(p), Some(n)) => {
                if i - p <= n - i {
                    p
                } else {
                    n
                }
            }
            (Some(p), None) => p,
            (None, Some(n)) => n,
            (None, None) => unreachable!("at least one window exists"),
        };
        bpm[i] = bpm[src];
        valid[i] = valid[src];
    }
    HrSeries::new(bpm, valid, fs, cfg.band, first_center..last_center + 1)
}

/// One heart rate from a single transform over the whole waveform.
/// Masked samples are zeroed after mean removal.
pub fn hr_full(wave: &Waveform, cfg: &StftConfig) -> Result<f64> {
    if wave.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            available: wave.len(),
        });
    }
    if !(cfg.bin_hz.is_finite() && cfg.bin_hz > 0.0) {
        return Err(Error::invalid("bin width must be positive"));
    }
    let valid: Vec<f64> = (0..wave.len())
        .filter(|&i| wave.is_valid(i) && wave.samples()[i].is_finite())
        .map(|i| wave.samples()[i])
        .collect();
    if valid.len() < 2 {
        return Err(Error::Degenerate("fewer than two valid samples".into()));
    }
    let mean = valid.iter().sum::<f64>() / valid.len() as f64;
    let centered: Vec<f64> = (0..wave.len())
        .map(|i| {
            let v = wave.samples()[i];
            if wave.is_valid(i) && v.is_finite() {
                v - mean
            } else {
                0.0
            }
        })
        .collect();
    let window = periodic_hann(wave.len());
    let seg = taper(&centered, &window)
        .ok_or_else(|| Error::Degenerate("constant waveform has no spectral peak".into()))?;
    let spectrum = Spectrum::new(cfg.fft_len(wave.fs(), wave.len()), wave.fs(), cfg.band);
    spectrum
        .peak_bpm(&seg, &mut Vec::new(), &mut Vec::new())
        .ok_or_else(|| Error::Degenerate("no in-band spectral energy".into()))
}

/// Invalidates every segment of `segment_s` seconds (centered on each entry)
/// that contains a heart-rate change faster than `threshold` BPM/s, measured
/// over one-second steps.
pub fn mask_unstable_gt(hr: &HrSeries, threshold: f64, segment_s: f64) -> HrSeries {
    let n = hr.len();
    let lag = (hr.fs().round() as usize).max(1);
    let limit = threshold * lag as f64 / hr.fs();
    let windows = hr.windows();
    // covered[i] = 1 when sample i lies inside a too-fast one-second step
    let mut diff = vec![0i64; n + 1];
    for i in windows.clone() {
        let j = i + lag;
        if j >= windows.end || !hr.valid()[i] || !hr.valid()[j] {
            continue;
        }
        if (hr.bpm()[j] - hr.bpm()[i]).abs() > limit {
            diff[i] += 1;
            diff[j + 1] -= 1;
        }
    }
    let mut covered_prefix = vec![0usize; n + 1];
    let mut running = 0i64;
    for i in 0..n {
        running += diff[i];
        covered_prefix[i + 1] = covered_prefix[i] + usize::from(running > 0);
    }
    let half = (segment_s * hr.fs() / 2.0).round() as usize;
    let invalidate: Vec<bool> = (0..n)
        .map(|j| {
            let lo = j.saturating_sub(half);
            let hi = (j + half).min(n - 1);
            covered_prefix[hi + 1] - covered_prefix[lo] > 0
        })
        .collect();
    hr.with_invalidated(&invalidate)
}

/// Per-session summary used by [`dataset_stats`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub duration_s: f64,
    pub mean_hr: f64,
    /// Mean over consecutive 60 s windows of the within-window HR standard
    /// deviation.
    pub hr_sd_60s: f64,
}

/// Dataset-level duration, heart rate and heart-rate variability with 95%
/// confidence intervals across sessions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub sessions: usize,
    pub duration_s: MeanCi,
    pub mean_hr: MeanCi,
    pub hr_sd_60s: MeanCi,
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Summarizes one session's ground-truth heart-rate series.
pub fn session_stats(hr: &HrSeries, duration_s: f64) -> Result<SessionStats> {
    let values: Vec<f64> = hr.valid_window_values().collect();
    if values.is_empty() {
        return Err(Error::NoValidWindows);
    }
    let mean_hr = values.iter().sum::<f64>() / values.len() as f64;
    let span = ((60.0 * hr.fs()).round() as usize).max(1);
    let entries: Vec<usize> = hr.windows().collect();
    let mut sds = Vec::new();
    for block in entries.chunks(span) {
        if block.len() < span && !sds.is_empty() {
            break;
        }
        let vals: Vec<f64> = block
            .iter()
            .filter(|&&i| hr.valid()[i])
            .map(|&i| hr.bpm()[i])
            .collect();
        if !vals.is_empty() {
            sds.push(population_std(&vals));
        }
        if block.len() < span {
            break;
        }
    }
    let hr_sd_60s = if sds.is_empty() {
        0.0
    } else {
        sds.iter().sum::<f64>() / sds.len() as f64
    };
    Ok(SessionStats {
        duration_s,
        mean_hr,
        hr_sd_60s,
    })
}

pub fn dataset_stats(sessions: &[SessionStats]) -> Result<DatasetStats> {
    if sessions.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let col = |f: fn(&SessionStats) -> f64| -> Vec<f64> { sessions.iter().map(f).collect() };
    Ok(DatasetStats {
        sessions: sessions.len(),
        duration_s: mean_ci(&col(|s| s.duration_s)),
        mean_hr: mean_ci(&col(|s| s.mean_hr)),
        hr_sd_60s: mean_ci(&col(|s| s.hr_sd_60s)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(bpm: f64, fs: f64, n: usize, amp: f64) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * PI * bpm / 60.0 * i as f64 / fs).sin())
            .collect()
    }

    #[test]
    fn hann_cola_at_half_hop() {
        let w = periodic_hann(136);
        for k in 0..68 {
            assert!((w[k] + w[k + 68] - 1.0).abs() < 1e-12);
        }
        assert_eq!(w[0], 0.0);
    }

    #[test]
    fn single_chunk_ola() {
        let chunk = ChunkPrediction {
            start: 0,
            values: (0..136).map(|i| i as f64).collect(),
        };
        let w = overlap_add(std::slice::from_ref(&chunk), 136, 30.0).unwrap();
        let mask = w.mask().unwrap();
        // w[1] = w[135] ~ 5.3e-4 falls under the weight threshold
        assert!(!mask[0] && !mask[1] && !mask[135]);
        for (i, &m) in mask.iter().enumerate().take(135).skip(2) {
            assert!(m);
            assert!((w.samples()[i] - chunk.values[i]).abs() < 1e-9);
        }
        assert!(overlap_add(&[], 10, 30.0).is_err());
    }

    #[test]
    fn all_ones_chunks() {
        let chunks: Vec<_> = [0, 68, 136]
            .iter()
            .map(|&s| ChunkPrediction {
                start: s,
                values: vec![1.0; 136],
            })
            .collect();
        let w = overlap_add(&chunks, 272, 30.0).unwrap();
        for i in 1..271 {
            assert!((w.samples()[i] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sinusoid_hr_is_constant() {
        let wave = Waveform::new(sine(72.0, 30.0, 900, 1.0), 30.0).unwrap();
        let hr = hr_series(&wave, &StftConfig::default()).unwrap();
        assert_eq!(hr.len(), 900);
        assert_eq!(hr.windows(), 150..751);
        for i in 0..900 {
            assert!(hr.valid()[i]);
            assert!((hr.bpm()[i] - 72.0).abs() <= 0.06 + 1e-9, "{} at {i}", hr.bpm()[i]);
        }
    }

    #[test]
    fn out_of_band_component_loses() {
        let a = sine(120.0, 30.0, 600, 1.0);
        let b = sine(192.0, 30.0, 600, 0.5);
        let wave = Waveform::new(a.iter().zip(&b).map(|(x, y)| x + y).collect(), 30.0).unwrap();
        let hr = hr_series(&wave, &StftConfig::default()).unwrap();
        assert!(hr.valid_window_values().all(|v| (v - 120.0).abs() <= 0.06 + 1e-9));
    }

    #[test]
    fn zero_signal_is_invalid_not_error() {
        let wave = Waveform::new(vec![0.0; 400], 30.0).unwrap();
        let hr = hr_series(&wave, &StftConfig::default()).unwrap();
        assert!(hr.valid().iter().all(|v| !v));
        let short = Waveform::new(vec![0.0; 100], 30.0).unwrap();
        assert!(matches!(hr_series(&short, &StftConfig::default()), Err(Error::TooShort { .. })));
    }

    #[test]
    fn masked_windows_invalid() {
        let mut mask = vec![true; 600];
        mask[400] = false;
        let wave = Waveform::with_mask(sine(72.0, 30.0, 600, 1.0), 30.0, Some(mask)).unwrap();
        let hr = hr_series(&wave, &StftConfig::default()).unwrap();
        // windows with start in [101, 400] touch sample 400; centers [251, 550]
        for c in hr.windows() {
            assert_eq!(hr.valid()[c], !(251..=550).contains(&c), "center {c}");
        }
    }

    #[test]
    fn full_transform_hr() {
        let wave = Waveform::new(sine(72.0, 30.0, 1800, 1.0), 30.0).unwrap();
        let bpm = hr_full(&wave, &StftConfig::default()).unwrap();
        assert!((bpm - 72.0).abs() <= 0.06);
        let dc = Waveform::new(vec![3.0; 100], 30.0).unwrap();
        assert!(hr_full(&dc, &StftConfig::default()).is_err());
    }

    #[test]
    fn masking_constant_series_is_identity() {
        let hr = HrSeries::from_values(vec![80.0; 900], 30.0, Band::DEFAULT).unwrap();
        assert_eq!(mask_unstable_gt(&hr, 7.0, 10.0), hr);
        let mut jump = vec![80.0; 900];
        for v in &mut jump[450..] {
            *v = 100.0;
        }
        let hr = HrSeries::from_values(jump, 30.0, Band::DEFAULT).unwrap();
        assert_eq!(mask_unstable_gt(&hr, f64::INFINITY, 10.0), hr);
        let masked = mask_unstable_gt(&hr, 7.0, 10.0);
        // flagged steps span samples [420, 479]; segments reach 150 entries
        for j in 0..900 {
            let expect_invalid = (270..=629).contains(&j);
            assert_eq!(!masked.valid()[j], expect_invalid, "entry {j}");
        }
    }

    #[test]
    fn stats_single_constant_session() {
        let hr = HrSeries::from_values(vec![72.0; 1800], 30.0, Band::DEFAULT).unwrap();
        let s = session_stats(&hr, 60.0).unwrap();
        assert_eq!(s.hr_sd_60s, 0.0);
        let d = dataset_stats(&[s]).unwrap();
        assert_eq!(d.mean_hr.mean, 72.0);
        assert_eq!(d.mean_hr.ci95, 0.0);
        assert!(dataset_stats(&[]).is_err());
    }

    #[test]
    fn stats_five_sessions() {
        let sessions: Vec<_> = [60.0, 70.0, 80.0, 90.0, 100.0]
            .iter()
            .map(|&b| {
                let hr = HrSeries::from_values(vec![b; 600], 30.0, Band::DEFAULT).unwrap();
                session_stats(&hr, 20.0).unwrap()
            })
            .collect();
        let d = dataset_stats(&sessions).unwrap();
        assert_eq!(d.mean_hr.mean, 80.0);
        // sample std of 60..100 step 10 is sqrt(250)
        let ci = 1.96 * 250f64.sqrt() / 5f64.sqrt();
        assert!((d.mean_hr.ci95 - ci).abs() < 1e-12);
    }
}
