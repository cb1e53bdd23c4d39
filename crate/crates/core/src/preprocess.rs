//! Face cropping, cubic resizing and frame-rate reduction by averaging.

use ndarray::{Array3, Array4, ArrayView3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{FaceRegion, LandmarkTrack, VideoClip};

/// Padding applied around the landmark extremes, as fractions of the box
/// height (top/bottom) and width (sides), and the output edge length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropSpec {
    pub pad_top: f64,
    pub pad_sides: f64,
    pub pad_bottom: f64,
    pub out_size: usize,
}

impl Default for CropSpec {
    fn default() -> Self {
        CropSpec {
            pad_top: 0.30,
            pad_sides: 0.05,
            pad_bottom: 0.05,
            out_size: 64,
        }
    }
}

impl CropSpec {
    pub fn validate(&self) -> Result<()> {
        let pads = [self.pad_top, self.pad_sides, self.pad_bottom];
        if pads.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("crop padding fractions must be finite and non-negative"));
        }
        if self.out_size < 8 {
            return Err(Error::invalid(format!("crop size {} is below 8", self.out_size)));
        }
        Ok(())
    }
}

/// Integer pixel square `[x0, x0 + side) x [y0, y0 + side)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub x0: usize,
    pub y0: usize,
    pub side: usize,
}

/// Padded, squared box in continuous pixel coordinates `[x0, y0, x1, y1]`.
pub fn padded_square(region: &FaceRegion, spec: &CropSpec) -> Result<[f64; 4]> {
    let [x0, y0, x1, y1] = match region {
        FaceRegion::Points(points) => {
            if points.is_empty() {
                return Err(Error::DegenerateRegion("empty landmark set".into()));
            }
            points.iter().fold(
                [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
                |[a, b, c, d], [x, y]| [a.min(*x), b.min(*y), c.max(*x), d.max(*y)],
            )
        }
        FaceRegion::Box(b) => *b,
    };
    if !(x1 > x0 && y1 > y0) {
        return Err(Error::DegenerateRegion(format!(
            "zero-area box [{x0}, {y0}, {x1}, {y1}]"
        )));
    }
    let (w, h) = (x1 - x0, y1 - y0);
    let mut bx0 = x0 - spec.pad_sides * w;
    let mut bx1 = x1 + spec.pad_sides * w;
    let mut by0 = y0 - spec.pad_top * h;
    let mut by1 = y1 + spec.pad_bottom * h;
    let (pw, ph) = (bx1 - bx0, by1 - by0);
    if pw < ph {
        let grow = (ph - pw) / 2.0;
        bx0 -= grow;
        bx1 += grow;
    } else if ph < pw {
        let grow = (pw - ph) / 2.0;
        by0 -= grow;
        by1 += grow;
    }
    Ok([bx0, by0, bx1, by1])
}

/// Rounds a continuous square outward to pixels, restores squareness by
/// trimming the max side, and fits it inside a `width x height` image by
/// shifting inward (shrinking about its center only when larger than the
/// image).
pub fn pixel_window(square: [f64; 4], width: usize, height: usize) -> CropWindow {
    let [x0, y0, x1, y1] = square;
    let (mut ix0, ix1) = (x0.floor() as i64, x1.ceil() as i64);
    let (mut iy0, iy1) = (y0.floor() as i64, y1.ceil() as i64);
    let mut side = (ix1 - ix0).min(iy1 - iy0).max(1);
    let limit = width.min(height) as i64;
    if side > limit {
        let shrink = side - limit;
        ix0 += shrink / 2;
        iy0 += shrink / 2;
        side = limit;
    }
    let fit = |start: i64, extent: usize| start.clamp(0, extent as i64 - side) as usize;
    CropWindow {
        x0: fit(ix0, width),
        y0: fit(iy0, height),
        side: side as usize,
    }
}

/// Cubic convolution kernel with `a = -0.75`.
fn cubic_weight(t: f64) -> f64 {
    const A: f64 = -0.75;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Per-output-index source taps (indices clamped into `[lo, lo + len)`) and
/// their weights for a 1-D bicubic resize.
fn cubic_taps(lo: usize, len: usize, out: usize) -> Vec<([usize; 4], [f64; 4])> {
    let scale = len as f64 / out as f64;
    (0..out)
        .map(|i| {
            let src = (i as f64 + 0.5) * scale - 0.5;
            let base = src.floor();
            let frac = src - base;
            let mut idx = [0usize; 4];
            let mut wts = [0f64; 4];
            for k in 0..4 {
                let off = k as i64 - 1;
                let p = (base as i64 + off).clamp(0, len as i64 - 1);
                idx[k] = lo + p as usize;
                wts[k] = cubic_weight(frac - off as f64);
            }
            (idx, wts)
        })
        .collect()
}

/// Bicubic resize of `window` within `frame` to `out x out`, clamped to `[0, 1]`.
pub fn resize_bicubic(frame: ArrayView3<'_, f32>, window: CropWindow, out: usize) -> Array3<f32> {
    let xs = cubic_taps(window.x0, window.side, out);
    let ys = cubic_taps(window.y0, window.side, out);
    let mut result = Array3::<f32>::zeros((out, out, 3));
    for (oy, (yi, yw)) in ys.iter().enumerate() {
        for (ox, (xi, xw)) in xs.iter().enumerate() {
            for c in 0..3 {
                let mut acc = 0.0f64;
                for (ky, &y) in yi.iter().enumerate() {
                    let mut row = 0.0f64;
                    for (kx, &x) in xi.iter().enumerate() {
                        row += xw[kx] * frame[[y, x, c]] as f64;
                    }
                    acc += yw[ky] * row;
                }
                result[[oy, ox, c]] = acc.clamp(0.0, 1.0) as f32;
            }
        }
    }
    result
}

/// Crops the padded, squared face region of one frame and resizes it to
/// `spec.out_size` square.
pub fn crop_face(frame: ArrayView3<'_, f32>, region: &FaceRegion, spec: &CropSpec) -> Result<Array3<f32>> {
    spec.validate()?;
    let (h, w, _) = frame.dim();
    if h == 0 || w == 0 {
        return Err(Error::invalid("empty frame"));
    }
    let window = pixel_window(padded_square(region, spec)?, w, h);
    Ok(resize_bicubic(frame, window, spec.out_size))
}

/// Averages consecutive groups of `factor` frames; leftover frames are dropped.
pub fn average_downsample_fps(clip: &VideoClip, factor: usize) -> Result<VideoClip> {
    if factor < 1 {
        return Err(Error::invalid("averaging factor must be at least 1"));
    }
    if factor == 1 {
        return Ok(clip.clone());
    }
    let groups = clip.len() / factor;
    if groups == 0 {
        return Err(Error::TooShort {
            needed: factor,
            available: clip.len(),
        });
    }
    let (_, h, w, _) = clip.frames().dim();
    let per_frame = h * w * 3;
    let src = clip.frames().as_slice().expect("standard layout");
    let mut data = vec![0f32; groups * per_frame];
    data.par_chunks_mut(per_frame).enumerate().for_each(|(g, out)| {
        let mut acc = vec![0f64; per_frame];
        for k in 0..factor {
            let f = &src[(g * factor + k) * per_frame..(g * factor + k + 1) * per_frame];
            for (a, &v) in acc.iter_mut().zip(f) {
                *a += v as f64;
            }
        }
        for (o, a) in out.iter_mut().zip(acc) {
            *o = (a / factor as f64) as f32;
        }
    });
    let frames = Array4::from_shape_vec((groups, h, w, 3), data).expect("shape");
    VideoClip::from_clamped(frames, clip.fps() / factor as f64)
}

/// Integer averaging factor taking `fps` to `target`, if one exists.
pub fn averaging_factor(fps: f64, target: f64) -> Result<usize> {
    if !(target.is_finite() && target > 0.0) {
        return Err(Error::invalid(format!("target fps must be positive, got {target}")));
    }
    if fps < target - 1e-9 {
        return Err(Error::invalid(format!(
            "cannot raise frame rate from {fps} to {target} fps"
        )));
    }
    let ratio = fps / target;
    let factor = ratio.round();
    if (ratio - factor).abs() > 1e-6 {
        return Err(Error::invalid(format!(
            "{fps} fps is not an integer multiple of {target} fps"
        )));
    }
    Ok(factor as usize)
}

/// Full preprocessing: rate reduction by averaging first, then a per-frame
/// face crop using the first landmark frame of each averaging group. Without
/// landmarks the central square of each frame is used.
pub fn preprocess_session(
    clip: &VideoClip,
    landmarks: Option<&LandmarkTrack>,
    spec: &CropSpec,
    fps_target: f64,
) -> Result<VideoClip> {
    spec.validate()?;
    if let Some(track) = landmarks {
        track.validate(clip.len())?;
    }
    let factor = averaging_factor(clip.fps(), fps_target)?;
    let averaged = average_downsample_fps(clip, factor)?;
    let track = landmarks.map(|t| t.every_nth(factor, averaged.len()));
    let (h, w) = (averaged.height(), averaged.width());
    let out = spec.out_size;
    let crops: Vec<Array3<f32>> = (0..averaged.len())
        .into_par_iter()
        .map(|i| {
            let frame = averaged.frame(i);
            match &track {
                Some(t) => crop_face(frame, &t.region(i), spec),
                None => {
                    let side = h.min(w);
                    let window = CropWindow {
                        x0: (w - side) / 2,
                        y0: (h - side) / 2,
                        side,
                    };
                    Ok(resize_bicubic(frame, window, out))
                }
            }
        })
        .collect::<Result<_>>()?;
    let views: Vec<_> = crops.iter().map(|c| c.view()).collect();
    let frames = ndarray::stack(Axis(0), &views).expect("equal crop shapes");
    VideoClip::new(frames, fps_target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn points_box(x0: f64, y0: f64, x1: f64, y1: f64) -> FaceRegion {
        FaceRegion::Points(vec![[x0, y0], [x1, y1], [(x0 + x1) / 2.0, (y0 + y1) / 2.0]])
    }

    #[test]
    fn padding_arithmetic() {
        let sq = padded_square(&points_box(100.0, 120.0, 200.0, 220.0), &CropSpec::default()).unwrap();
        let expect = [82.5, 90.0, 217.5, 225.0];
        for (a, b) in sq.iter().zip(expect) {
            assert!((a - b).abs() < 1e-9, "{sq:?}");
        }
        // floor/ceil gives x [82, 218) (136 wide), y [90, 225) (135 tall); trimmed to 135
        let win = pixel_window(sq, 640, 480);
        assert_eq!(win, CropWindow { x0: 82, y0: 90, side: 135 });
    }

    #[test]
    fn already_square_box_is_not_extended() {
        // width 100 -> 110 padded; height h -> 1.35h; 1.35h = 110
        let h = 110.0 / 1.35;
        let sq = padded_square(&FaceRegion::Box([0.0, 0.0, 100.0, h]), &CropSpec::default()).unwrap();
        assert!(((sq[2] - sq[0]) - 110.0).abs() < 1e-9);
        assert!(((sq[3] - sq[1]) - 110.0).abs() < 1e-9);
        assert!((sq[0] + 5.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_regions_rejected() {
        let spec = CropSpec::default();
        assert!(matches!(
            padded_square(&FaceRegion::Points(vec![[5.0, 5.0]]), &spec),
            Err(Error::DegenerateRegion(_))
        ));
        assert!(matches!(
            padded_square(&FaceRegion::Points(vec![]), &spec),
            Err(Error::DegenerateRegion(_))
        ));
        assert!(padded_square(&FaceRegion::Box([1.0, 1.0, 1.0, 5.0]), &spec).is_err());
    }

    #[test]
    fn overhanging_window_shifts_inward() {
        let win = pixel_window([-10.0, -4.0, 30.0, 36.0], 100, 100);
        assert_eq!(win, CropWindow { x0: 0, y0: 0, side: 40 });
        let win = pixel_window([80.0, 70.0, 120.0, 110.0], 100, 100);
        assert_eq!(win, CropWindow { x0: 60, y0: 60, side: 40 });
        let win = pixel_window([-20.0, -20.0, 120.0, 120.0], 100, 80);
        assert_eq!(win.side, 80);
        assert!(win.x0 + win.side <= 100);
    }

    #[test]
    fn same_size_bicubic_is_identity() {
        let frame = Array3::from_shape_fn((64, 64, 3), |(y, x, c)| ((y * 7 + x * 3 + c) % 17) as f32 / 16.0);
        let out = resize_bicubic(frame.view(), CropWindow { x0: 0, y0: 0, side: 64 }, 64);
        assert_eq!(out, frame);
    }

    #[test]
    fn averaging_constant_frames() {
        let mut frames = Array4::<f32>::zeros((3, 2, 2, 3));
        frames.index_axis_mut(Axis(0), 1).fill(0.3);
        frames.index_axis_mut(Axis(0), 2).fill(0.6);
        let clip = VideoClip::new(frames, 90.0).unwrap();
        let out = average_downsample_fps(&clip, 3).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.fps(), 30.0);
        assert!(out.frames().iter().all(|&v| (v - 0.3).abs() < 1e-7));
        assert_eq!(average_downsample_fps(&clip, 1).unwrap(), clip);
        assert!(average_downsample_fps(&clip, 0).is_err());
    }

    #[test]
    fn averaging_270_frames() {
        let clip = VideoClip::new(Array4::from_elem((271, 2, 2, 3), 0.5f32), 90.0).unwrap();
        let out = average_downsample_fps(&clip, 3).unwrap();
        assert_eq!((out.len(), out.fps()), (90, 30.0));
    }

    #[test]
    fn frame_rate_factor_rules() {
        assert_eq!(averaging_factor(90.0, 30.0).unwrap(), 3);
        assert_eq!(averaging_factor(30.0, 30.0).unwrap(), 1);
        assert!(averaging_factor(25.0, 30.0).is_err());
        assert!(averaging_factor(50.0, 30.0).is_err());
    }

    #[test]
    fn preprocess_orders_average_then_crop() {
        let frames = Array4::from_shape_fn((9, 40, 50, 3), |(t, y, x, _)| {
            ((t % 3) as f32 * 0.2 + (x + y) as f32 / 200.0).min(1.0)
        });
        let clip = VideoClip::new(frames, 90.0).unwrap();
        let track = LandmarkTrack::Boxes(vec![[10.0, 10.0, 30.0, 30.0]; 9]);
        let out = preprocess_session(&clip, Some(&track), &CropSpec::default(), 30.0).unwrap();
        assert_eq!((out.len(), out.height(), out.width(), out.fps()), (3, 64, 64, 30.0));
        assert!(preprocess_session(&clip, Some(&track), &CropSpec::default(), 60.0).is_err());
        let short = LandmarkTrack::Boxes(vec![[10.0, 10.0, 30.0, 30.0]; 8]);
        assert!(preprocess_session(&clip, Some(&short), &CropSpec::default(), 30.0).is_err());
    }

    proptest! {
        #[test]
        fn crop_is_square_and_in_bounds(
            w in 20usize..200, h in 20usize..200,
            pts in prop::collection::vec((-50.0f64..250.0, -50.0f64..250.0), 2..12),
        ) {
            let region = FaceRegion::Points(pts.iter().map(|&(x, y)| [x, y]).collect());
            if let Ok(sq) = padded_square(&region, &CropSpec::default()) {
                prop_assert!(((sq[2] - sq[0]) - (sq[3] - sq[1])).abs() < 1e-6);
                let win = pixel_window(sq, w, h);
                prop_assert!(win.side >= 1);
                prop_assert!(win.x0 + win.side <= w && win.y0 + win.side <= h);
            }
        }
    }
}
