//! Pulse estimators and the chunked inference driver.
//!
//! The classical estimators work on the spatially averaged RGB trace of a
//! chunk (the whole crop is averaged, no skin segmentation). Predictions from
//! external models enter through the JSON predictions file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::types::VideoClip;

/// Chunk geometry for chunked inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkConfig {
    pub chunk_len: usize,
    pub stride: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        ChunkConfig {
            chunk_len: 136,
            stride: 68,
        }
    }
}

impl ChunkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride < 1 || self.stride > self.chunk_len {
            return Err(Error::invalid(format!(
                "stride {} must lie in [1, chunk_len = {}]",
                self.stride, self.chunk_len
            )));
        }
        Ok(())
    }

    /// Start indices of every full chunk in a clip of `len` frames.
    pub fn starts(&self, len: usize) -> Vec<usize> {
        if len < self.chunk_len {
            return Vec::new();
        }
        (0..=len - self.chunk_len).step_by(self.stride).collect()
    }

    /// Length covered by the chunks of a `len`-frame clip.
    pub fn covered_len(&self, len: usize) -> usize {
        self.starts(len).last().map_or(0, |s| s + self.chunk_len)
    }
}

/// One chunk of predicted pulse signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkPrediction {
    pub start: usize,
    pub values: Vec<f64>,
}

/// Maps a spatially averaged RGB trace to a pulse signal of equal length.
pub trait PulseEstimator: Sync {
    fn name(&self) -> &'static str;

    fn estimate_trace(&self, rgb: &[[f64; 3]], fps: f64) -> Result<Vec<f64>>;

    fn estimate(&self, chunk: &VideoClip) -> Result<Vec<f64>> {
        self.estimate_trace(&chunk.channel_means(), chunk.fps())
    }
}

/// The built-in classical estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Green,
    Chrom,
    Pos,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Green, Method::Chrom, Method::Pos];
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "green" => Ok(Method::Green),
            "chrom" => Ok(Method::Chrom),
            "pos" => Ok(Method::Pos),
            _ => Err(Error::invalid(format!("unknown estimator `{s}`"))),
        }
    }
}

impl PulseEstimator for Method {
    fn name(&self) -> &'static str {
        match self {
            Method::Green => "green",
            Method::Chrom => "chrom",
            Method::Pos => "pos",
        }
    }

    fn estimate_trace(&self, rgb: &[[f64; 3]], fps: f64) -> Result<Vec<f64>> {
        match self {
            Method::Green => Ok(green_trace(rgb)),
            Method::Chrom => Ok(chrom_trace(rgb).0),
            Method::Pos => pos_trace(rgb, fps),
        }
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn std_pop(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

fn remove_mean(mut x: Vec<f64>) -> Vec<f64> {
    let m = mean(&x);
    x.iter_mut().for_each(|v| *v -= m);
    x
}

/// Zero mean, unit variance; a constant input becomes all zeros.
pub fn standardize(x: &[f64]) -> Vec<f64> {
    let m = mean(x);
    let s = std_pop(x);
    if !(s > 1e-15 * (1.0 + m.abs())) {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| (v - m) / s).collect()
}

fn green_trace(rgb: &[[f64; 3]]) -> Vec<f64> {
    remove_mean(rgb.iter().map(|c| c[1]).collect())
}

/// Mean-removed spatial average of the green channel.
pub fn estimate_green(chunk: &VideoClip) -> Vec<f64> {
    green_trace(&chunk.channel_means())
}

/// What the chrominance estimator did with a chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChromDiagnostics {
    /// The Y chrominance signal was unusable (zero variance, or collinear
    /// with X so the combination vanished) and X alone was returned.
    pub fallback: bool,
}

fn chrom_trace(rgb: &[[f64; 3]]) -> (Vec<f64>, ChromDiagnostics) {
    let norm = |c: usize| -> Vec<f64> {
        let ch: Vec<f64> = rgb.iter().map(|p| p[c]).collect();
        let m = mean(&ch);
        if m > 0.0 {
            ch.iter().map(|v| v / m).collect()
        } else {
            vec![1.0; ch.len()]
        }
    };
    let (r, g, b) = (norm(0), norm(1), norm(2));
    let x: Vec<f64> = r.iter().zip(&g).map(|(r, g)| 3.0 * r - 2.0 * g).collect();
    let y: Vec<f64> = r
        .iter()
        .zip(&g)
        .zip(&b)
        .map(|((r, g), b)| 1.5 * r + g - 1.5 * b)
        .collect();
    let (sx, sy) = (std_pop(&x), std_pop(&y));
    if sy <= 1e-12 {
        return (remove_mean(x), ChromDiagnostics { fallback: true });
    }
    let alpha = sx / sy;
    let s: Vec<f64> = x.iter().zip(&y).map(|(x, y)| x - alpha * y).collect();
    if std_pop(&s) <= 1e-9 * sx {
        return (remove_mean(x), ChromDiagnostics { fallback: true });
    }
    (remove_mean(s), ChromDiagnostics::default())
}

/// Chrominance combination `X - (sd X / sd Y) Y` over the whole chunk, with
/// `X = 3R - 2G`, `Y = 1.5R + G - 1.5B` on mean-normalized channels.
pub fn estimate_chrom(chunk: &VideoClip) -> (Vec<f64>, ChromDiagnostics) {
    chrom_trace(&chunk.channel_means())
}

/// Sliding window length for POS, 1.6 s.
pub fn pos_window(fps: f64) -> usize {
    ((1.6 * fps).round() as usize).max(2)
}

fn pos_trace(rgb: &[[f64; 3]], fps: f64) -> Result<Vec<f64>> {
    let n = rgb.len();
    let l = pos_window(fps);
    if n < l {
        return Err(Error::TooShort {
            needed: l,
            available: n,
        });
    }
    let mut h = vec![0.0; n];
    let mut s1 = vec![0.0; l];
    let mut s2 = vec![0.0; l];
    for m in 0..=n - l {
        let win = &rgb[m..m + l];
        let mut mu = [0.0; 3];
        for p in win {
            for c in 0..3 {
                mu[c] += p[c];
            }
        }
        for v in &mut mu {
            *v /= l as f64;
        }
        if mu.iter().any(|&v| v <= 0.0) {
            continue;
        }
        for (k, p) in win.iter().enumerate() {
            let (r, g, b) = (p[0] / mu[0], p[1] / mu[1], p[2] / mu[2]);
            s1[k] = g - b;
            s2[k] = -2.0 * r + g + b;
        }
        let sd2 = std_pop(&s2);
        let alpha = if sd2 > 1e-15 { std_pop(&s1) / sd2 } else { 0.0 };
        let hw: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| a + alpha * b).collect();
        let hm = mean(&hw);
        for (k, v) in hw.iter().enumerate() {
            h[m + k] += v - hm;
        }
    }
    Ok(remove_mean(h))
}

/// Plane-orthogonal-to-skin projection, overlap-added over 1.6 s windows.
pub fn estimate_pos(chunk: &VideoClip) -> Result<Vec<f64>> {
    pos_trace(&chunk.channel_means(), chunk.fps())
}

/// Runs `estimator` over every full chunk of `clip`; each chunk's output is
/// standardized. Frames past the last full chunk are not predicted.
pub fn run_chunked(
    estimator: &dyn PulseEstimator,
    clip: &VideoClip,
    cfg: &ChunkConfig,
) -> Result<Vec<ChunkPrediction>> {
    cfg.validate()?;
    if clip.len() < cfg.chunk_len {
        return Err(Error::TooShort {
            needed: cfg.chunk_len,
            available: clip.len(),
        });
    }
    let trace = clip.channel_means();
    cfg.starts(clip.len())
        .into_iter()
        .map(|start| {
            let values = estimator.estimate_trace(&trace[start..start + cfg.chunk_len], clip.fps())?;
            Ok(ChunkPrediction {
                start,
                values: standardize(&values),
            })
        })
        .collect()
}

/// JSON exchange format for chunk predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionsFile {
    pub chunk_len: usize,
    pub stride: usize,
    pub fps: f64,
    pub chunks: Vec<ChunkPrediction>,
}

impl PredictionsFile {
    /// Checks lengths and values and orders chunks by start. Returns a
    /// warning for every start that is off the stride grid.
    pub fn validate(&mut self) -> Result<Vec<String>> {
        ChunkConfig {
            chunk_len: self.chunk_len,
            stride: self.stride,
        }
        .validate()?;
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::invalid(format!("predictions fps must be positive, got {}", self.fps)));
        }
        if self.chunks.is_empty() {
            return Err(Error::Empty("predictions file has no chunks"));
        }
        let mut warnings = Vec::new();
        for c in &self.chunks {
            if c.values.len() != self.chunk_len {
                return Err(Error::Chunk {
                    start: c.start,
                    reason: format!("has {} values, expected {}", c.values.len(), self.chunk_len),
                });
            }
            if let Some(i) = c.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Chunk {
                    start: c.start,
                    reason: format!("value {i} is not finite"),
                });
            }
            if c.start % self.stride != 0 {
                warnings.push(format!(
                    "chunk start {} is not on the stride-{} grid",
                    c.start, self.stride
                ));
            }
        }
        self.chunks.sort_by_key(|c| c.start);
        Ok(warnings)
    }
}

/// Reads and validates a predictions file; also returns any warnings.
pub fn load_external_predictions(path: &Path) -> Result<(PredictionsFile, Vec<String>)> {
    let mut file: PredictionsFile = read_json(path)?;
    let warnings = file.validate()?;
    Ok((file, warnings))
}

pub fn write_predictions(path: &Path, file: &PredictionsFile) -> Result<()> {
    write_json(path, file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;
    use std::f64::consts::PI;

    fn uniform_clip(n: usize, fps: f64, f: impl Fn(usize) -> [f32; 3]) -> VideoClip {
        let frames = Array4::from_shape_fn((n, 4, 4, 3), |(t, _, _, c)| f(t)[c]);
        VideoClip::new(frames, fps).unwrap()
    }

    #[test]
    fn green_constant_is_zero() {
        let clip = uniform_clip(50, 30.0, |_| [0.4, 0.5, 0.6]);
        assert!(estimate_green(&clip).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn green_tracks_sinusoid() {
        let truth: Vec<f64> = (0..300).map(|t| (2.0 * PI * 1.2 * t as f64 / 30.0).sin()).collect();
        let clip = uniform_clip(300, 30.0, |t| [0.5, (0.5 + 0.1 * truth[t]) as f32, 0.5]);
        let out = estimate_green(&clip);
        let r = crate::metrics::pearson(&out, &truth).unwrap();
        assert!(r > 0.999, "r = {r}");
    }

    #[test]
    fn chrom_gray_pulse_takes_fallback() {
        let clip = uniform_clip(100, 30.0, |t| {
            let v = 0.5 + 0.05 * (t as f32 * 0.25).sin();
            [v, v, v]
        });
        let (out, diag) = estimate_chrom(&clip);
        assert!(diag.fallback);
        assert!(out.iter().any(|v| v.abs() > 1e-6));
    }

    #[test]
    fn pos_constant_is_zero_and_short_errors() {
        let clip = uniform_clip(60, 30.0, |_| [0.6, 0.5, 0.4]);
        assert!(estimate_pos(&clip).unwrap().iter().all(|v| v.abs() < 1e-12));
        let short = uniform_clip(47, 30.0, |_| [0.6, 0.5, 0.4]);
        assert!(matches!(estimate_pos(&short), Err(Error::TooShort { needed: 48, .. })));
    }

    #[test]
    fn chunk_starts() {
        let cfg = ChunkConfig::default();
        assert_eq!(cfg.starts(340), vec![0, 68, 136, 204]);
        assert_eq!(cfg.starts(136), vec![0]);
        assert!(cfg.starts(135).is_empty());
        let clip = uniform_clip(135, 30.0, |_| [0.5; 3]);
        assert!(run_chunked(&Method::Green, &clip, &cfg).is_err());
        assert!(ChunkConfig { chunk_len: 10, stride: 11 }.validate().is_err());
    }

    #[test]
    fn chunks_are_standardized() {
        let clip = uniform_clip(340, 30.0, |t| [0.5, 0.5 + 0.01 * (t as f32 * 0.3).sin(), 0.5]);
        let chunks = run_chunked(&Method::Green, &clip, &ChunkConfig::default()).unwrap();
        assert_eq!(chunks.len(), 4);
        for c in chunks {
            assert_eq!(c.values.len(), 136);
            assert!(mean(&c.values).abs() < 1e-12);
            assert!((std_pop(&c.values) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn predictions_validation() {
        let mut f = PredictionsFile {
            chunk_len: 136,
            stride: 68,
            fps: 30.0,
            chunks: vec![
                ChunkPrediction { start: 136, values: vec![0.0; 136] },
                ChunkPrediction { start: 0, values: vec![0.0; 136] },
                ChunkPrediction { start: 68, values: vec![0.0; 136] },
            ],
        };
        assert!(f.validate().unwrap().is_empty());
        assert_eq!(f.chunks.iter().map(|c| c.start).collect::<Vec<_>>(), vec![0, 68, 136]);
        f.chunks.push(ChunkPrediction { start: 70, values: vec![0.0; 136] });
        assert_eq!(f.validate().unwrap().len(), 1);
        f.chunks[1].values.pop();
        match f.validate() {
            Err(Error::Chunk { start, .. }) => assert_eq!(start, 68),
            other => panic!("{other:?}"),
        }
    }
}
