//! Domain types shared by every stage of the pipeline.

use std::ops::Range;

use ndarray::{Array4, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Heart-rate band used for peak picking, in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    /// 40 to 180 BPM.
    pub const DEFAULT: Band = Band {
        lo: 2.0 / 3.0,
        hi: 3.0,
    };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
            return Err(Error::invalid(format!("band [{lo}, {hi}] Hz must satisfy 0 < lo < hi")));
        }
        Ok(Band { lo, hi })
    }

    pub fn bpm_range(&self) -> (f64, f64) {
        (self.lo * 60.0, self.hi * 60.0)
    }
}

impl Default for Band {
    fn default() -> Self {
        Band::DEFAULT
    }
}

/// A stack of RGB frames `[T, H, W, 3]` with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    frames: Array4<f32>,
    fps: f64,
}

impl VideoClip {
    pub fn new(frames: Array4<f32>, fps: f64) -> Result<Self> {
        let (t, h, w, c) = frames.dim();
        if t == 0 || h == 0 || w == 0 {
            return Err(Error::invalid(format!("video shape [{t}, {h}, {w}, {c}] has an empty axis")));
        }
        if c != 3 {
            return Err(Error::invalid(format!("video must have 3 channels, got {c}")));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::invalid(format!("fps must be positive, got {fps}")));
        }
        if let Some(v) = frames.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("intensity {v} outside [0, 1]")));
        }
        let frames = if frames.is_standard_layout() {
            frames
        } else {
            frames.as_standard_layout().to_owned()
        };
        Ok(VideoClip { frames, fps })
    }

    /// Builds a clip from frames the caller guarantees to be in range.
    /// Values are clamped into `[0, 1]` so the invariant always holds.
    pub(crate) fn from_clamped(mut frames: Array4<f32>, fps: f64) -> Result<Self> {
        frames.mapv_inplace(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
        VideoClip::new(frames, fps)
    }

    pub fn frames(&self) -> &Array4<f32> {
        &self.frames
    }

    pub fn into_frames(self) -> Array4<f32> {
        self.frames
    }

    pub fn frame(&self, index: usize) -> ArrayView3<'_, f32> {
        self.frames.index_axis(Axis(0), index)
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn len(&self) -> usize {
        self.frames.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn height(&self) -> usize {
        self.frames.dim().1
    }

    pub fn width(&self) -> usize {
        self.frames.dim().2
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.fps
    }

    /// Frames `[start, end)` as a new clip.
    pub fn slice(&self, range: Range<usize>) -> Result<VideoClip> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::invalid(format!(
                "frame range {range:?} outside clip of {} frames",
                self.len()
            )));
        }
        let frames = self
            .frames
            .slice(ndarray::s![range.start..range.end, .., .., ..])
            .to_owned();
        Ok(VideoClip {
            frames,
            fps: self.fps,
        })
    }

    /// Spatial mean of each channel for every frame, `[T][3]`.
    pub fn channel_means(&self) -> Vec<[f64; 3]> {
        let (_, h, w, _) = self.frames.dim();
        let per_frame = h * w * 3;
        let data = self.frames.as_slice().expect("standard layout");
        data.chunks_exact(per_frame)
            .map(|frame| {
                let mut acc = [0.0f64; 3];
                for px in frame.chunks_exact(3) {
                    acc[0] += px[0] as f64;
                    acc[1] += px[1] as f64;
                    acc[2] += px[2] as f64;
                }
                let n = (h * w) as f64;
                [acc[0] / n, acc[1] / n, acc[2] / n]
            })
            .collect()
    }
}

/// A uniformly sampled 1-D signal with an optional validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    fs: f64,
    mask: Option<Vec<bool>>,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self> {
        Waveform::with_mask(samples, fs, None)
    }

    pub fn with_mask(samples: Vec<f64>, fs: f64, mask: Option<Vec<bool>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("waveform"));
        }
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::invalid(format!("sample rate must be positive, got {fs}")));
        }
        if let Some(m) = &mask {
            if m.len() != samples.len() {
                return Err(Error::invalid(format!(
                    "mask length {} differs from sample count {}",
                    m.len(),
                    samples.len()
                )));
            }
        }
        Ok(Waveform { samples, fs, mask })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_valid(&self, index: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[index])
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.fs
    }

    /// First `len` samples (and mask entries).
    pub fn truncated(&self, len: usize) -> Waveform {
        let len = len.min(self.len()).max(1);
        Waveform {
            samples: self.samples[..len].to_vec(),
            fs: self.fs,
            mask: self.mask.as_ref().map(|m| m[..len].to_vec()),
        }
    }

    /// Samples with masked entries replaced by zero.
    pub fn masked_zeroed(&self) -> Vec<f64> {
        match &self.mask {
            None => self.samples.clone(),
            Some(m) => self
                .samples
                .iter()
                .zip(m)
                .map(|(&v, &ok)| if ok { v } else { 0.0 })
                .collect(),
        }
    }
}

/// Per-frame heart rate in BPM, as produced by sliding-window spectral
/// peak picking.
///
/// `windows` is the range of indices that carry a value computed from a
/// window centered on them; entries outside it are filled copies and are not
/// counted by the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrSeries {
    bpm: Vec<f64>,
    valid: Vec<bool>,
    fs: f64,
    band: Band,
    windows: Range<usize>,
}

impl HrSeries {
    pub fn new(
        bpm: Vec<f64>,
        valid: Vec<bool>,
        fs: f64,
        band: Band,
        windows: Range<usize>,
    ) -> Result<Self> {
        if bpm.is_empty() {
            return Err(Error::Empty("heart-rate series"));
        }
        if valid.len() != bpm.len() {
            return Err(Error::invalid("validity flags and bpm differ in length"));
        }
        if windows.end > bpm.len() || windows.start > windows.end {
            return Err(Error::invalid(format!(
                "window range {windows:?} outside series of {}",
                bpm.len()
            )));
        }
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::invalid(format!("series rate must be positive, got {fs}")));
        }
        let (lo, hi) = band.bpm_range();
        for (i, (&v, &ok)) in bpm.iter().zip(&valid).enumerate() {
            if ok && !(v.is_finite() && v >= lo - 1e-9 && v <= hi + 1e-9) {
                return Err(Error::invalid(format!(
                    "entry {i}: {v} BPM outside band [{lo}, {hi}]"
                )));
            }
        }
        Ok(HrSeries {
            bpm,
            valid,
            fs,
            band,
            windows,
        })
    }

    /// A series in which every entry is its own window. Values outside the
    /// default band are rejected unless a wider band is given.
    pub fn from_values(bpm: Vec<f64>, fs: f64, band: Band) -> Result<Self> {
        let n = bpm.len();
        let valid = bpm.iter().map(|v| v.is_finite()).collect();
        HrSeries::new(bpm, valid, fs, band, 0..n)
    }

    pub fn bpm(&self) -> &[f64] {
        &self.bpm
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn band(&self) -> Band {
        self.band
    }

    pub fn windows(&self) -> Range<usize> {
        self.windows.clone()
    }

    pub fn len(&self) -> usize {
        self.bpm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bpm.is_empty()
    }

    /// Values of valid entries inside the computed-window range.
    pub fn valid_window_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.windows
            .clone()
            .filter(|&i| self.valid[i])
            .map(|i| self.bpm[i])
    }

    /// Copy with entries whose flag in `invalidate` is true marked invalid.
    pub fn with_invalidated(&self, invalidate: &[bool]) -> HrSeries {
        let mut out = self.clone();
        for (v, &bad) in out.valid.iter_mut().zip(invalidate) {
            if bad {
                *v = false;
            }
        }
        out
    }

    /// First `len` entries.
    pub fn truncated(&self, len: usize) -> HrSeries {
        let len = len.min(self.len());
        HrSeries {
            bpm: self.bpm[..len].to_vec(),
            valid: self.valid[..len].to_vec(),
            fs: self.fs,
            band: self.band,
            windows: self.windows.start.min(len)..self.windows.end.min(len),
        }
    }
}

/// Face geometry for one frame.
#[derive(Debug, Clone, PartialEq)]
pub enum FaceRegion {
    Points(Vec<[f64; 2]>),
    /// `[x0, y0, x1, y1]`
    Box([f64; 4]),
}

/// Precomputed per-frame face landmarks or boxes.
#[derive(Debug, Clone, PartialEq)]
pub enum LandmarkTrack {
    Points(Vec<Vec<[f64; 2]>>),
    Boxes(Vec<[f64; 4]>),
}

impl LandmarkTrack {
    pub fn len(&self) -> usize {
        match self {
            LandmarkTrack::Points(p) => p.len(),
            LandmarkTrack::Boxes(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn region(&self, frame: usize) -> FaceRegion {
        match self {
            LandmarkTrack::Points(p) => FaceRegion::Points(p[frame].clone()),
            LandmarkTrack::Boxes(b) => FaceRegion::Box(b[frame]),
        }
    }

    /// Checks coordinates are finite and the frame count matches `frames`.
    pub fn validate(&self, frames: usize) -> Result<()> {
        if self.len() != frames {
            return Err(Error::LandmarkMismatch {
                landmarks: self.len(),
                frames,
            });
        }
        let finite = match self {
            LandmarkTrack::Points(p) => p.iter().flatten().flatten().all(|v| v.is_finite()),
            LandmarkTrack::Boxes(b) => b.iter().flatten().all(|v| v.is_finite()),
        };
        if !finite {
            return Err(Error::invalid("landmark coordinates must be finite"));
        }
        Ok(())
    }

    /// Keeps every `factor`-th frame starting at 0, one per averaging group.
    pub fn every_nth(&self, factor: usize, groups: usize) -> LandmarkTrack {
        match self {
            LandmarkTrack::Points(p) => {
                LandmarkTrack::Points((0..groups).map(|g| p[g * factor].clone()).collect())
            }
            LandmarkTrack::Boxes(b) => {
                LandmarkTrack::Boxes((0..groups).map(|g| b[g * factor]).collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn video_rejects_out_of_range_intensity() {
        let mut frames = Array4::<f32>::zeros((2, 2, 2, 3));
        frames[[1, 0, 0, 1]] = 1.5;
        assert!(VideoClip::new(frames, 30.0).is_err());
        assert!(VideoClip::new(Array4::zeros((0, 2, 2, 3)), 30.0).is_err());
        assert!(VideoClip::new(Array4::zeros((1, 2, 2, 3)), 0.0).is_err());
    }

    #[test]
    fn waveform_mask_length_must_match() {
        assert!(Waveform::with_mask(vec![1.0, 2.0], 30.0, Some(vec![true])).is_err());
        assert!(Waveform::new(vec![], 30.0).is_err());
        assert!(Waveform::new(vec![1.0], -1.0).is_err());
    }

    #[test]
    fn hr_series_enforces_band() {
        assert!(HrSeries::from_values(vec![39.0], 30.0, Band::DEFAULT).is_err());
        assert!(HrSeries::from_values(vec![40.0, 180.0], 30.0, Band::DEFAULT).is_ok());
        // invalid entries are exempt
        let s = HrSeries::new(vec![f64::NAN, 72.0], vec![false, true], 30.0, Band::DEFAULT, 0..2);
        assert!(s.is_ok());
    }

    #[test]
    fn landmark_frame_count_checked() {
        let track = LandmarkTrack::Boxes(vec![[0.0, 0.0, 1.0, 1.0]; 299]);
        match track.validate(300) {
            Err(Error::LandmarkMismatch { landmarks: 299, frames: 300 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
