//! Temporal speed and modulation augmentation of video clips together with
//! their ground-truth pulse waveforms, plus spatial augmentations.
//!
//! Speed augmentation resamples a window of `L = floor(n * hr_target /
//! hr_source)` frames centered on the clip to exactly `n` frames, moving the
//! pulse rate to about `hr_target`. Modulation warps time so the normalized
//! rate sweeps linearly from `s = 2 / (1 + f)` to `e = s f` across the clip:
//! frame `x` of the output reads the source at
//! `P(x) = x s + x^2 (e - s) / (2 n)`, which keeps `P(n) = n`.
//!
//! Video and waveform always go through the same positions with the same
//! linear interpolation, so they stay in lockstep.

use ndarray::{Array4, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::postprocess::{hr_series, StftConfig};
use crate::rng::RngState;
use crate::types::{HrSeries, VideoClip, Waveform};

/// Number of target re-draws after an insufficient-context failure before
/// the clip is used without speed augmentation.
pub const SPEED_RETRIES: usize = 10;

/// Used as `f_max` when the slope cap does not bound the factor at all.
pub const UNBOUNDED_FACTOR: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedAugSpec {
    pub hr_min: f64,
    pub hr_max: f64,
    pub clip_len: usize,
}

impl Default for SpeedAugSpec {
    fn default() -> Self {
        SpeedAugSpec {
            hr_min: 40.0,
            hr_max: 180.0,
            clip_len: 136,
        }
    }
}

impl SpeedAugSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.hr_min > 0.0 && self.hr_min <= self.hr_max && self.hr_max.is_finite()) {
            return Err(Error::invalid(format!(
                "target range [{}, {}] BPM must satisfy 0 < min <= max",
                self.hr_min, self.hr_max
            )));
        }
        if self.clip_len < 2 {
            return Err(Error::invalid("clip length must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationSpec {
    /// Largest allowed heart-rate change, BPM per second.
    pub max_slope: f64,
    pub clip_len: usize,
}

impl Default for ModulationSpec {
    fn default() -> Self {
        ModulationSpec {
            max_slope: 7.0,
            clip_len: 136,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialAugSpec {
    pub p_flip: f64,
    pub sigma_illum: f64,
    pub sigma_noise: f64,
}

impl Default for SpatialAugSpec {
    fn default() -> Self {
        SpatialAugSpec {
            p_flip: 0.5,
            sigma_illum: 0.1,
            sigma_noise: 0.05,
        }
    }
}

impl SpatialAugSpec {
    pub const IDENTITY: SpatialAugSpec = SpatialAugSpec {
        p_flip: 0.0,
        sigma_illum: 0.0,
        sigma_noise: 0.0,
    };
}

/// Where an augmented clip came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// First source frame of the resampled interval.
    pub source_start: usize,
    /// Interval length `L` in source frames.
    pub source_len: usize,
    pub hr_source: f64,
    pub hr_target: f64,
    /// Modulation factor; 1 when no modulation was applied.
    pub factor: f64,
}

/// An `n`-frame clip and its `n`-sample waveform after augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedClip {
    pub video: VideoClip,
    pub wave: Waveform,
    pub realized_hr_start: f64,
    pub realized_hr_end: f64,
    pub provenance: Provenance,
}

fn check_lockstep(video: &VideoClip, wave: &Waveform) -> Result<usize> {
    if (video.fps() - wave.fs()).abs() > 1e-9 * video.fps() {
        return Err(Error::RateMismatch(video.fps(), wave.fs()));
    }
    Ok(video.len().min(wave.len()))
}

/// Linear interpolation of every pixel at fractional frame positions,
/// clamped to the last frame.
pub fn interpolate_frames(video: &VideoClip, positions: &[f64]) -> Result<VideoClip> {
    let (t, h, w, _) = video.frames().dim();
    let per = h * w * 3;
    let src = video.frames().as_slice().expect("standard layout");
    let mut out = Vec::with_capacity(positions.len() * per);
    for &p in positions {
        let p = p.clamp(0.0, (t - 1) as f64);
        let i0 = p.floor() as usize;
        let i1 = (i0 + 1).min(t - 1);
        let a = (p - i0 as f64) as f32;
        let f0 = &src[i0 * per..(i0 + 1) * per];
        if a == 0.0 {
            out.extend_from_slice(f0);
        } else {
            let f1 = &src[i1 * per..(i1 + 1) * per];
            out.extend(f0.iter().zip(f1).map(|(x, y)| x + (y - x) * a));
        }
    }
    let frames = Array4::from_shape_vec((positions.len(), h, w, 3), out).expect("shape");
    VideoClip::from_clamped(frames, video.fps())
}

/// Linear interpolation of samples at fractional positions, clamped to the
/// last sample. Mask handling matches [`crate::align::resample_waveform`].
pub fn interpolate_wave(wave: &Waveform, positions: &[f64]) -> Result<Waveform> {
    let x = wave.samples();
    let last = x.len() - 1;
    let mut samples = Vec::with_capacity(positions.len());
    let mut mask = wave.mask().map(|_| Vec::with_capacity(positions.len()));
    for &p in positions {
        let p = p.clamp(0.0, last as f64);
        let i0 = p.floor() as usize;
        let i1 = (i0 + 1).min(last);
        let a = p - i0 as f64;
        samples.push(if a == 0.0 { x[i0] } else { x[i0] + (x[i1] - x[i0]) * a });
        if let Some(m) = mask.as_mut() {
            m.push(wave.is_valid(i0) && (a == 0.0 || wave.is_valid(i1)));
        }
    }
    Waveform::with_mask(samples, wave.fs(), mask)
}

/// Mean of the computed, valid heart-rate entries whose window centers lie
/// in `[clip_start, clip_start + n)`.
pub fn mean_hr_over(hr: &HrSeries, clip_start: usize, n: usize) -> Result<f64> {
    let w = hr.windows();
    let lo = clip_start.max(w.start);
    let hi = (clip_start + n).min(w.end);
    if lo >= hi {
        return Err(Error::NoWindowCenter {
            start: clip_start,
            end: clip_start + n,
            first: w.start,
            last: w.end,
        });
    }
    let vals: Vec<f64> = (lo..hi)
        .filter(|&i| hr.valid()[i])
        .map(|i| hr.bpm()[i])
        .collect();
    if vals.is_empty() {
        return Err(Error::NoSourceHr);
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Ground-truth heart rate of an `n`-frame clip: the STFT series of `wave`
/// averaged over the clip.
pub fn source_hr(wave: &Waveform, clip_start: usize, n: usize, cfg: &StftConfig) -> Result<f64> {
    mean_hr_over(&hr_series(wave, cfg)?, clip_start, n)
}

/// Source interval length `floor(n * hr_target / hr_source)`.
pub fn speed_source_len(n: usize, hr_source: f64, hr_target: f64) -> usize {
    (n as f64 * hr_target / hr_source + 1e-9).floor() as usize
}

/// First frame of an `len`-frame interval centered on the `n`-frame clip at
/// `clip_start`, shifted inward to fit a `total`-frame session.
fn centered_start(clip_start: usize, n: usize, len: usize, total: usize) -> Result<usize> {
    if len > total || len == 0 {
        return Err(Error::InsufficientContext {
            needed: len,
            available: total,
        });
    }
    let start = clip_start as i64 + (n as i64 - len as i64).div_euclid(2);
    Ok(start.clamp(0, (total - len) as i64) as usize)
}

/// Resamples the `source_len`-frame interval centered on the clip to
/// `n_out` frames spaced `source_len / n` apart.
fn speed_resample(
    video: &VideoClip,
    wave: &Waveform,
    clip_start: usize,
    n: usize,
    source_len: usize,
    n_out: usize,
) -> Result<(VideoClip, Waveform, usize)> {
    let total = check_lockstep(video, wave)?;
    let start = centered_start(clip_start, n, source_len, total)?;
    let step = source_len as f64 / n as f64;
    let last = (total - 1) as f64;
    let positions: Vec<f64> = (0..n_out)
        .map(|j| (start as f64 + j as f64 * step).min(last))
        .collect();
    Ok((
        interpolate_frames(video, &positions)?,
        interpolate_wave(wave, &positions)?,
        start,
    ))
}

/// Speed augmentation of the `n`-frame clip starting at `clip_start`.
///
/// The realized heart rate is `hr_source * L / n`. Fails with
/// [`Error::InsufficientContext`] when `L` exceeds the session.
pub fn speed_augment(
    video: &VideoClip,
    wave: &Waveform,
    clip_start: usize,
    hr_source: f64,
    hr_target: f64,
    n: usize,
) -> Result<AugmentedClip> {
    if !(hr_source > 0.0 && hr_target > 0.0) {
        return Err(Error::invalid("heart rates must be positive"));
    }
    if n < 2 {
        return Err(Error::invalid("clip length must be at least 2"));
    }
    let len = speed_source_len(n, hr_source, hr_target);
    let (v, w, start) = speed_resample(video, wave, clip_start, n, len, n)?;
    let realized = hr_source * len as f64 / n as f64;
    Ok(AugmentedClip {
        video: v,
        wave: w,
        realized_hr_start: realized,
        realized_hr_end: realized,
        provenance: Provenance {
            source_start: start,
            source_len: len,
            hr_source,
            hr_target,
            factor: 1.0,
        },
    })
}

/// Uniform target heart rate on `[hr_min, hr_max]`.
pub fn sample_target_hr(rng: &mut RngState, spec: &SpeedAugSpec) -> f64 {
    rng.uniform(spec.hr_min, spec.hr_max)
}

/// Widest `[1 / f_max, f_max]` for which a clip at `hr` BPM, modulated by
/// `f`, changes rate by at most `max_slope` BPM/s over `n / fps` seconds.
pub fn modulation_bounds(hr: f64, n: usize, fps: f64, spec: &ModulationSpec) -> (f64, f64) {
    if !(spec.max_slope > 0.0) || !(hr > 0.0) {
        return (1.0, 1.0);
    }
    let duration = n as f64 / fps;
    // 2 hr (f - 1) / (1 + f) <= max_slope * duration
    let ratio = spec.max_slope * duration / (2.0 * hr);
    let f_max = if ratio >= 1.0 {
        UNBOUNDED_FACTOR
    } else {
        ((1.0 + ratio) / (1.0 - ratio)).min(UNBOUNDED_FACTOR)
    };
    (1.0 / f_max, f_max)
}

/// Start and end normalized rates `(s, e)` for factor `f`.
pub fn modulation_rates(f: f64) -> (f64, f64) {
    let s = 2.0 / (1.0 + f);
    (s, s * f)
}

/// Source positions `P(x)` for `x = 0..count`.
pub fn modulation_positions(f: f64, n: usize, count: usize) -> Vec<f64> {
    let (s, e) = modulation_rates(f);
    let nf = n as f64;
    (0..count)
        .map(|x| {
            let x = x as f64;
            x * s + x * x * (e - s) / (2.0 * nf)
        })
        .collect()
}

/// Time-warps the first frames of `video`/`wave` into an `n`-frame clip
/// whose normalized rate sweeps linearly from `s` to `e`.
///
/// The source needs at least `n` frames; reads past the last frame clamp to
/// it, so `n + 1` frames avoid clamping entirely.
pub fn modulate(video: &VideoClip, wave: &Waveform, f: f64, n: usize) -> Result<(VideoClip, Waveform)> {
    if !(f.is_finite() && f > 0.0) {
        return Err(Error::invalid(format!("modulation factor must be positive, got {f}")));
    }
    let total = check_lockstep(video, wave)?;
    if total < n {
        return Err(Error::InsufficientContext {
            needed: n,
            available: total,
        });
    }
    let positions = modulation_positions(f, n, n);
    Ok((interpolate_frames(video, &positions)?, interpolate_wave(wave, &positions)?))
}

/// [`modulate`] after checking `f` against [`modulation_bounds`] for a clip
/// at `hr` BPM.
pub fn modulate_within(
    video: &VideoClip,
    wave: &Waveform,
    f: f64,
    hr: f64,
    spec: &ModulationSpec,
) -> Result<(VideoClip, Waveform)> {
    let (lo, hi) = modulation_bounds(hr, spec.clip_len, video.fps(), spec);
    if !(f >= lo * (1.0 - 1e-12) && f <= hi * (1.0 + 1e-12)) {
        return Err(Error::invalid(format!(
            "modulation factor {f} outside [{lo}, {hi}] for {hr} BPM"
        )));
    }
    modulate(video, wave, f, spec.clip_len)
}

/// Mirror, global illumination offset and per-pixel Gaussian noise.
pub fn spatial_augment(clip: &VideoClip, rng: &mut RngState, spec: &SpatialAugSpec) -> Result<VideoClip> {
    let mut frames = clip.frames().clone();
    if rng.bernoulli(spec.p_flip) {
        frames.invert_axis(Axis(2));
        frames = frames.as_standard_layout().to_owned();
    }
    let offset = if spec.sigma_illum > 0.0 {
        Normal::new(0.0, spec.sigma_illum)
            .map_err(|e| Error::invalid(e.to_string()))?
            .sample(rng) as f32
    } else {
        0.0
    };
    if spec.sigma_noise > 0.0 {
        let noise = Normal::new(0.0f32, spec.sigma_noise as f32).map_err(|e| Error::invalid(e.to_string()))?;
        frames.mapv_inplace(|v| v + offset + noise.sample(rng));
    } else if offset != 0.0 {
        frames.mapv_inplace(|v| v + offset);
    }
    VideoClip::from_clamped(frames, clip.fps())
}

/// Which temporal augmentations a training clip receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TemporalAugOptions {
    pub speed: bool,
    pub modulation: bool,
}

/// Draws and applies the temporal augmentations for one `n`-frame training
/// clip: speed first (target re-drawn up to [`SPEED_RETRIES`] times when the
/// session is too short, then left unaugmented), then modulation with a
/// log-uniform factor inside the slope cap and the target band.
///
/// `gt_hr` is the ground-truth heart-rate series of `wave`.
#[allow(clippy::too_many_arguments)]
pub fn augment_clip(
    video: &VideoClip,
    wave: &Waveform,
    gt_hr: &HrSeries,
    clip_start: usize,
    speed: &SpeedAugSpec,
    modulation: &ModulationSpec,
    options: TemporalAugOptions,
    rng: &mut RngState,
) -> Result<AugmentedClip> {
    speed.validate()?;
    let n = speed.clip_len;
    let total = check_lockstep(video, wave)?;
    if clip_start + n > total {
        return Err(Error::InsufficientContext {
            needed: clip_start + n,
            available: total,
        });
    }
    let hr_source = mean_hr_over(gt_hr, clip_start, n)?;
    // one extra frame of context for modulation
    let n_out = if options.modulation { n + 1 } else { n };

    let mut picked = None;
    if options.speed {
        for _ in 0..SPEED_RETRIES {
            let target = sample_target_hr(rng, speed);
            let mut len = speed_source_len(n, hr_source, target);
            if hr_source * (len as f64) / (n as f64) < speed.hr_min {
                len += 1;
            }
            match speed_resample(video, wave, clip_start, n, len, n_out) {
                Ok((v, w, start)) => {
                    picked = Some((v, w, start, len, target));
                    break;
                }
                Err(Error::InsufficientContext { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    let (v, w, start, len, target) = match picked {
        Some(p) => p,
        None => {
            let (v, w, start) = speed_resample(video, wave, clip_start, n, n, n_out)?;
            (v, w, start, n, hr_source)
        }
    };
    let realized = hr_source * len as f64 / n as f64;
    let mut out = AugmentedClip {
        video: v,
        wave: w,
        realized_hr_start: realized,
        realized_hr_end: realized,
        provenance: Provenance {
            source_start: start,
            source_len: len,
            hr_source,
            hr_target: target,
            factor: 1.0,
        },
    };
    if options.modulation {
        let (lo, hi) = banded_modulation_bounds(realized, n, video.fps(), modulation, speed);
        let f = if hi > lo {
            rng.uniform(lo.ln(), hi.ln()).exp()
        } else {
            1.0
        };
        let (mv, mw) = modulate(&out.video, &out.wave, f, n)?;
        let (s, e) = modulation_rates(f);
        out.video = mv;
        out.wave = mw;
        out.realized_hr_start = realized * s;
        out.realized_hr_end = realized * e;
        out.provenance.factor = f;
    }
    Ok(out)
}

/// [`modulation_bounds`] further narrowed so both endpoint rates stay in
/// `[hr_min, hr_max]`.
pub fn banded_modulation_bounds(
    hr: f64,
    n: usize,
    fps: f64,
    modulation: &ModulationSpec,
    speed: &SpeedAugSpec,
) -> (f64, f64) {
    let (mut lo, mut hi) = modulation_bounds(hr, n, fps, modulation);
    let a = speed.hr_max / hr;
    let b = speed.hr_min / hr;
    // f > 1: e = 2f/(1+f) <= a and s = 2/(1+f) >= b
    if a < 2.0 {
        hi = hi.min(a / (2.0 - a));
    }
    if b > 0.0 {
        hi = hi.min(2.0 / b - 1.0);
    }
    // f < 1: s <= a and e >= b
    lo = lo.max(2.0 / a - 1.0);
    if b < 2.0 {
        lo = lo.max(b / (2.0 - b));
    }
    if lo > 1.0 || hi < 1.0 {
        return (1.0, 1.0);
    }
    (lo, hi)
}
