//! On-disk formats: session manifests, frame directories, waveform CSV,
//! landmark JSON, the raw clip tensor and heart-rate CSV.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array4;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::types::{HrSeries, LandmarkTrack, VideoClip, Waveform};

/// Description of one recording. Relative paths are resolved against the
/// directory holding the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub session_id: String,
    pub subject_id: String,
    pub frames_dir: PathBuf,
    pub fps: f64,
    pub gt_waveform: PathBuf,
    pub gt_fs: f64,
    pub landmarks: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl SessionManifest {
    /// Parses manifest JSON, naming the offending field on schema errors.
    pub fn from_json(text: &str, base_dir: &Path, context: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Json {
            path: PathBuf::from(context),
            source: e,
        })?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::schema(context, "<root>", "expected a JSON object"))?;
        let string = |field: &str| -> Result<String> {
            obj.get(field)
                .and_then(Value::as_str)
                .map(str::to_owned)
                .ok_or_else(|| Error::schema(context, field, "missing or not a string"))
        };
        let positive = |field: &str| -> Result<f64> {
            let v = obj
                .get(field)
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::schema(context, field, "missing or not a number"))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::schema(context, field, format!("must be positive, got {v}")));
            }
            Ok(v)
        };
        let landmarks = match obj.get("landmarks") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(PathBuf::from(s)),
            Some(_) => return Err(Error::schema(context, "landmarks", "must be a string or null")),
        };
        Ok(SessionManifest {
            session_id: string("session_id")?,
            subject_id: string("subject_id")?,
            frames_dir: PathBuf::from(string("frames_dir")?),
            fps: positive("fps")?,
            gt_waveform: PathBuf::from(string("gt_waveform")?),
            gt_fs: positive("gt_fs")?,
            landmarks,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        SessionManifest::from_json(&text, base, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn frames_path(&self) -> PathBuf {
        self.resolve(&self.frames_dir)
    }

    pub fn waveform_path(&self) -> PathBuf {
        self.resolve(&self.gt_waveform)
    }

    pub fn landmarks_path(&self) -> Option<PathBuf> {
        self.landmarks.as_deref().map(|p| self.resolve(p))
    }
}

/// A loaded session: video, native-rate ground truth and optional landmarks.
#[derive(Debug, Clone)]
pub struct Session {
    pub manifest: SessionManifest,
    pub video: VideoClip,
    pub gt: Waveform,
    pub landmarks: Option<LandmarkTrack>,
}

/// Loads the frames, ground-truth waveform and landmarks a manifest names.
pub fn load_session(manifest: &SessionManifest) -> Result<Session> {
    let video = read_frames_dir(&manifest.frames_path(), manifest.fps)?;
    let gt = read_waveform_csv(&manifest.waveform_path(), manifest.gt_fs)?;
    let landmarks = match manifest.landmarks_path() {
        Some(p) => {
            let track = read_landmarks_json(&p)?;
            track.validate(video.len())?;
            Some(track)
        }
        None => None,
    };
    Ok(Session {
        manifest: manifest.clone(),
        video,
        gt,
        landmarks,
    })
}

/// Lists every `*.json` manifest in a dataset directory, sorted by file name.
pub fn list_manifests(dataset: &Path) -> Result<Vec<SessionManifest>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dataset)
        .map_err(|e| Error::io(dataset, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| SessionManifest::load(p)).collect()
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Reads a directory of numbered PNG frames; lexicographic order is temporal
/// order. 8-bit values are scaled into `[0, 1]`.
pub fn read_frames_dir(dir: &Path, fps: f64) -> Result<VideoClip> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_image(p))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Frame {
            index: 0,
            path: dir.to_path_buf(),
            reason: "no frame files found".into(),
        });
    }
    let decoded: Vec<image::RgbImage> = files
        .par_iter()
        .enumerate()
        .map(|(index, path)| {
            image::open(path)
                .map(|img| img.to_rgb8())
                .map_err(|e| Error::Frame {
                    index,
                    path: path.clone(),
                    reason: e.to_string(),
                })
        })
        .collect::<Result<_>>()?;
    let (w, h) = decoded[0].dimensions();
    let mut data = Vec::with_capacity(decoded.len() * (w * h * 3) as usize);
    for (index, img) in decoded.iter().enumerate() {
        if img.dimensions() != (w, h) {
            return Err(Error::Frame {
                index,
                path: files[index].clone(),
                reason: format!("size {:?} differs from first frame {:?}", img.dimensions(), (w, h)),
            });
        }
        data.extend(img.as_raw().iter().map(|&v| v as f32 / 255.0));
    }
    let frames = Array4::from_shape_vec((decoded.len(), h as usize, w as usize, 3), data)
        .expect("shape matches decoded data");
    VideoClip::new(frames, fps)
}

/// Writes each frame as `{index:06}.png`, rounding intensities to 8 bits.
pub fn write_frames_dir(dir: &Path, clip: &VideoClip) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (h, w) = (clip.height() as u32, clip.width() as u32);
    (0..clip.len()).into_par_iter().try_for_each(|i| {
        let frame = clip.frame(i);
        let raw: Vec<u8> = frame
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let img = image::RgbImage::from_raw(w, h, raw).expect("frame buffer size");
        img.save(dir.join(format!("{i:06}.png")))?;
        Ok(())
    })
}

/// One sample per line; an optional first line `value` is skipped.
pub fn parse_waveform_csv(reader: impl Read, fs: f64, context: &Path) -> Result<Waveform> {
    let mut samples = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(context, e))?;
        let t = line.trim();
        if t.is_empty() || (lineno == 0 && t.eq_ignore_ascii_case("value")) {
            continue;
        }
        let v: f64 = t.parse().map_err(|_| {
            Error::schema(
                context.display().to_string(),
                format!("line {}", lineno + 1),
                format!("`{t}` is not a number"),
            )
        })?;
        samples.push(v);
    }
    Waveform::new(samples, fs)
}

pub fn read_waveform_csv(path: &Path, fs: f64) -> Result<Waveform> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_waveform_csv(f, fs, path)
}

/// Writes the `value` header and one sample per line; masked samples are
/// written as `NaN`.
pub fn write_waveform_csv(path: &Path, wave: &Waveform) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let write = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        writeln!(w, "value")?;
        for (i, v) in wave.samples().iter().enumerate() {
            if wave.is_valid(i) {
                writeln!(w, "{v}")?;
            } else {
                writeln!(w, "NaN")?;
            }
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}

/// Landmarks JSON: an array per frame of `[x, y]` pairs, or an array of
/// `[x0, y0, x1, y1]` boxes.
pub fn parse_landmarks_json(text: &str, context: &Path) -> Result<LandmarkTrack> {
    let ctx = context.display().to_string();
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Json {
        path: context.to_path_buf(),
        source: e,
    })?;
    let frames = value
        .as_array()
        .ok_or_else(|| Error::schema(&ctx, "<root>", "expected an array of frames"))?;
    let num = |v: &Value, field: &str| -> Result<f64> {
        v.as_f64()
            .ok_or_else(|| Error::schema(&ctx, field, "expected a number"))
    };
    let is_box = frames
        .first()
        .and_then(Value::as_array)
        .is_some_and(|f| f.len() == 4 && f.iter().all(Value::is_number));
    if is_box {
        let boxes = frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let field = format!("[{i}]");
                let arr = f
                    .as_array()
                    .filter(|a| a.len() == 4)
                    .ok_or_else(|| Error::schema(&ctx, &field, "expected [x0, y0, x1, y1]"))?;
                Ok([
                    num(&arr[0], &field)?,
                    num(&arr[1], &field)?,
                    num(&arr[2], &field)?,
                    num(&arr[3], &field)?,
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LandmarkTrack::Boxes(boxes))
    } else {
        let points = frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let field = format!("[{i}]");
                f.as_array()
                    .ok_or_else(|| Error::schema(&ctx, &field, "expected an array of points"))?
                    .iter()
                    .map(|p| {
                        let xy = p
                            .as_array()
                            .filter(|a| a.len() == 2)
                            .ok_or_else(|| Error::schema(&ctx, &field, "expected [x, y]"))?;
                        Ok([num(&xy[0], &field)?, num(&xy[1], &field)?])
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LandmarkTrack::Points(points))
    }
}

pub fn read_landmarks_json(path: &Path) -> Result<LandmarkTrack> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_landmarks_json(&text, path)
}

pub fn write_landmarks_json(path: &Path, track: &LandmarkTrack) -> Result<()> {
    let value = match track {
        LandmarkTrack::Points(p) => serde_json::to_value(p),
        LandmarkTrack::Boxes(b) => serde_json::to_value(b),
    }
    .expect("landmarks serialize");
    write_json(path, &value)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

pub const TENSOR_MAGIC: &[u8; 4] = b"RPPG";
pub const TENSOR_VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 1;

/// JSON sidecar stored next to a raw clip tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipSidecar {
    pub fps: f64,
}

/// Serializes a clip as the 16-byte header followed by little-endian f32
/// frame data, frame-major.
pub fn encode_clip_tensor(clip: &VideoClip) -> Result<Vec<u8>> {
    let (t, h, w) = (clip.len(), clip.height(), clip.width());
    let t32 = u32::try_from(t).map_err(|_| Error::invalid("too many frames for tensor header"))?;
    let h16 = u16::try_from(h).map_err(|_| Error::invalid("frame height exceeds u16"))?;
    let w16 = u16::try_from(w).map_err(|_| Error::invalid("frame width exceeds u16"))?;
    let mut out = Vec::with_capacity(16 + t * h * w * 12);
    out.extend_from_slice(TENSOR_MAGIC);
    out.push(TENSOR_VERSION);
    out.push(DTYPE_F32);
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&t32.to_le_bytes());
    out.extend_from_slice(&h16.to_le_bytes());
    out.extend_from_slice(&w16.to_le_bytes());
    for v in clip.frames().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_clip_tensor(bytes: &[u8], fps: f64) -> Result<VideoClip> {
    let bad = |reason: &str| Error::schema("clip tensor", "header", reason);
    if bytes.len() < 16 {
        return Err(bad("shorter than 16 bytes"));
    }
    if &bytes[0..4] != TENSOR_MAGIC {
        return Err(bad("bad magic"));
    }
    if bytes[4] != TENSOR_VERSION {
        return Err(bad("unsupported version"));
    }
    if bytes[5] != DTYPE_F32 {
        return Err(bad("unsupported dtype"));
    }
    let t = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let h = u16::from_le_bytes(bytes[12..14].try_into().unwrap()) as usize;
    let w = u16::from_le_bytes(bytes[14..16].try_into().unwrap()) as usize;
    let n = t * h * w * 3;
    if bytes.len() != 16 + 4 * n {
        return Err(bad("payload size does not match header"));
    }
    let data: Vec<f32> = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let frames = Array4::from_shape_vec((t, h, w, 3), data).expect("size checked");
    VideoClip::new(frames, fps)
}

/// Writes `<stem>.rppg` and its `<stem>.json` sidecar.
pub fn write_clip(dir: &Path, stem: &str, clip: &VideoClip) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("{stem}.rppg"));
    fs::write(&path, encode_clip_tensor(clip)?).map_err(|e| Error::io(&path, e))?;
    write_json(&dir.join(format!("{stem}.json")), &ClipSidecar { fps: clip.fps() })?;
    Ok(path)
}

/// Reads a `.rppg` tensor using the fps from its sidecar.
pub fn read_clip(tensor_path: &Path) -> Result<VideoClip> {
    let sidecar: ClipSidecar = read_json(&tensor_path.with_extension("json"))?;
    let bytes = fs::read(tensor_path).map_err(|e| Error::io(tensor_path, e))?;
    decode_clip_tensor(&bytes, sidecar.fps)
}

/// Columns `frame_index,bpm,valid`.
pub fn write_hr_csv(path: &Path, hr: &HrSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["frame_index", "bpm", "valid"])?;
    for (i, (&bpm, &ok)) in hr.bpm().iter().zip(hr.valid()).enumerate() {
        w.write_record([i.to_string(), bpm.to_string(), (ok as u8).to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
