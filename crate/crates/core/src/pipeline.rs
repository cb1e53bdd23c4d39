//! File-to-file commands behind the `rppg` binary.
//!
//! Each command reads the previous stage's outputs and writes the next
//! stage's inputs. Session-level work runs on a bounded thread pool, and
//! results are collected in session order so reports do not depend on
//! `jobs`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::align::{resample_waveform, truncate_to_match};
use crate::augment::{
    augment_clip, mean_hr_over, modulate_within, modulation_rates, spatial_augment, speed_augment, AugmentedClip,
    ModulationSpec, Provenance, SpatialAugSpec, SpeedAugSpec, TemporalAugOptions,
};
use crate::error::{Error, Result};
use crate::estimate::{load_external_predictions, run_chunked, write_predictions, ChunkConfig, Method, PredictionsFile};
use crate::io::{
    list_manifests, load_session, read_clip, read_waveform_csv, write_clip, write_json, write_waveform_csv,
    SessionManifest,
};
use crate::metrics::{session_metrics, MetricsReport, SessionRecord};
use crate::postprocess::{
    dataset_stats, hr_series, mask_unstable_gt, overlap_add, session_stats, DatasetStats, PostVariant, SessionStats,
    StftConfig,
};
use crate::preprocess::{preprocess_session, CropSpec};
use crate::rng::RngState;
use crate::synth::{synth_session, write_session, HrTrajectory, SynthSpec};
use crate::types::{VideoClip, Waveform};

/// Name of the configuration echo written next to command outputs.
pub const RUN_CONFIG: &str = "run_config.json";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {jobs} workers: {e}")))
}

/// Runs `f` over `items` on `jobs` workers (0 = all cores). Results keep
/// the item order. Without `keep_going` the first failure in item order is
/// returned; with it, failures are reported on stderr and skipped.
fn for_each_session<I: Sync, T: Send>(
    items: &[I],
    label: impl Fn(&I) -> String + Sync,
    jobs: usize,
    keep_going: bool,
    f: impl Fn(&I) -> Result<T> + Sync,
) -> Result<Vec<(String, T)>> {
    if items.is_empty() {
        return Err(Error::Empty("dataset has no sessions"));
    }
    let results: Vec<(String, Result<T>)> =
        pool(jobs)?.install(|| items.par_iter().map(|it| (label(it), f(it))).collect());
    let mut done = Vec::with_capacity(results.len());
    for (id, r) in results {
        match r {
            Ok(v) => done.push((id, v)),
            Err(e) if keep_going => eprintln!("warning: skipping session {id}: {e}"),
            Err(e) => return Err(e.in_session(id)),
        }
    }
    if done.is_empty() {
        return Err(Error::Empty("every session failed"));
    }
    Ok(done)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Constant,
    LinearRamp,
    Sinusoidal,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthConfig {
    /// Dataset directory to create.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub sessions: usize,
    /// Comma-separated base heart rates in BPM, cycled over sessions.
    #[arg(long, value_delimiter = ',', default_values_t = [60.0, 70.0, 80.0, 90.0, 100.0])]
    pub hr: Vec<f64>,
    #[arg(long, value_enum, default_value = "constant")]
    pub trajectory: TrajectoryKind,
    /// Ramp slope, BPM/s.
    #[arg(long, default_value_t = 0.5)]
    pub slope: f64,
    /// Sinusoidal trajectory depth, BPM.
    #[arg(long, default_value_t = 10.0)]
    pub depth: f64,
    /// Sinusoidal trajectory period, seconds.
    #[arg(long, default_value_t = 20.0)]
    pub period: f64,
    /// Session length in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    /// Ground-truth sample rate; defaults to the frame rate.
    #[arg(long)]
    pub gt_fs: Option<f64>,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long)]
    pub pulse_amplitude: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub harmonic_ratio: Option<f64>,
    #[arg(long)]
    pub illum_drift: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    #[serde(skip)]
    pub jobs: usize,
}

impl SynthConfig {
    /// Per-session generator specs, ids `s00`, `s01`, ...
    pub fn specs(&self) -> Result<Vec<(String, SynthSpec)>> {
        if self.sessions == 0 {
            return Err(Error::invalid("--sessions must be at least 1"));
        }
        if self.hr.is_empty() {
            return Err(Error::invalid("--hr needs at least one value"));
        }
        (0..self.sessions)
            .map(|i| {
                let id = format!("s{i:02}");
                let hr = self.hr[i % self.hr.len()];
                let trajectory = match self.trajectory {
                    TrajectoryKind::Constant => HrTrajectory::constant(hr, self.duration),
                    TrajectoryKind::LinearRamp => HrTrajectory::linear_ramp(hr, self.slope, self.duration),
                    TrajectoryKind::Sinusoidal => {
                        HrTrajectory::sinusoidal(hr, self.depth, self.period, self.duration)
                    }
                }?;
                let mut spec = SynthSpec::new(trajectory);
                spec.fps = self.fps;
                spec.gt_fs = self.gt_fs.unwrap_or(self.fps);
                spec.size = self.size;
                spec.pulse_amplitude = self.pulse_amplitude.unwrap_or(spec.pulse_amplitude);
                spec.noise_sigma = self.noise_sigma.unwrap_or(spec.noise_sigma);
                spec.harmonic_ratio = self.harmonic_ratio.unwrap_or(spec.harmonic_ratio);
                spec.illum_drift_amplitude = self.illum_drift.unwrap_or(spec.illum_drift_amplitude);
                spec.seed = RngState::new(self.seed, format!("synth/{id}")).next_u64();
                spec.validate()?;
                Ok((id, spec))
            })
            .collect()
    }
}

/// Writes a synthetic dataset and returns the manifest paths.
pub fn cmd_synth(cfg: &SynthConfig) -> Result<Vec<PathBuf>> {
    let specs = cfg.specs()?;
    create_dir(&cfg.out)?;
    let done = for_each_session(
        &specs,
        |(id, _)| id.clone(),
        cfg.jobs,
        false,
        |(id, spec)| write_session(&cfg.out, &synth_session(spec, id)?),
    )?;
    Ok(done.into_iter().map(|(_, p)| p).collect())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PreprocessConfig {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory for the clip tensors.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.30)]
    pub pad_top: f64,
    #[arg(long, default_value_t = 0.05)]
    pub pad_sides: f64,
    #[arg(long, default_value_t = 0.05)]
    pub pad_bottom: f64,
    #[arg(long, default_value_t = 64)]
    pub out_size: usize,
    #[arg(long, default_value_t = 30.0)]
    pub fps_target: f64,
    #[arg(long, default_value_t = 0)]
    #[serde(skip)]
    pub jobs: usize,
    #[arg(long)]
    pub keep_going: bool,
}

impl PreprocessConfig {
    pub fn crop(&self) -> CropSpec {
        CropSpec {
            pad_top: self.pad_top,
            pad_sides: self.pad_sides,
            pad_bottom: self.pad_bottom,
            out_size: self.out_size,
        }
    }
}

/// Crops and rate-normalizes every session into `<out>/<session_id>.rppg`.
pub fn cmd_preprocess(cfg: &PreprocessConfig) -> Result<Vec<PathBuf>> {
    let crop = cfg.crop();
    crop.validate()?;
    let manifests = list_manifests(&cfg.dataset)?;
    create_dir(&cfg.out)?;
    write_json(&cfg.out.join(RUN_CONFIG), &json!({"command": "preprocess", "params": cfg}))?;
    let done = for_each_session(
        &manifests,
        |m| m.session_id.clone(),
        cfg.jobs,
        cfg.keep_going,
        |m| {
            let s = load_session(m)?;
            let clip = preprocess_session(&s.video, s.landmarks.as_ref(), &crop, cfg.fps_target)?;
            write_clip(&cfg.out, &m.session_id, &clip)
        },
    )?;
    Ok(done.into_iter().map(|(_, p)| p).collect())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateConfig {
    /// Directory of clip tensors written by `preprocess`.
    #[arg(long)]
    pub clips: PathBuf,
    /// Directory for the per-session predictions.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "green")]
    pub method: Method,
    #[arg(long, default_value_t = 136)]
    pub chunk_len: usize,
    #[arg(long, default_value_t = 68)]
    pub stride: usize,
    #[arg(long, default_value_t = 0)]
    #[serde(skip)]
    pub jobs: usize,
    #[arg(long)]
    pub keep_going: bool,
}

fn clip_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "rppg") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Chunked predictions for one clip.
pub fn estimate_clip(clip: &VideoClip, method: Method, chunk: &ChunkConfig) -> Result<PredictionsFile> {
    Ok(PredictionsFile {
        chunk_len: chunk.chunk_len,
        stride: chunk.stride,
        fps: clip.fps(),
        chunks: run_chunked(&method, clip, chunk)?,
    })
}

/// Runs an estimator over every clip, writing `<out>/<session_id>.json`.
pub fn cmd_estimate(cfg: &EstimateConfig) -> Result<Vec<PathBuf>> {
    let chunk = ChunkConfig {
        chunk_len: cfg.chunk_len,
        stride: cfg.stride,
    };
    chunk.validate()?;
    let clips = clip_files(&cfg.clips)?;
    create_dir(&cfg.out)?;
    write_json(&cfg.out.join(RUN_CONFIG), &json!({"command": "estimate", "params": cfg}))?;
    let done = for_each_session(&clips, |p| file_stem(p), cfg.jobs, cfg.keep_going, |p| {
        let preds = estimate_clip(&read_clip(p)?, cfg.method, &chunk)?;
        let path = cfg.out.join(format!("{}.json", file_stem(p)));
        write_predictions(&path, &preds)?;
        Ok(path)
    })?;
    Ok(done.into_iter().map(|(_, p)| p).collect())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateConfig {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory of `<session_id>.json` predictions.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, default_value = "w10")]
    pub variant: PostVariant,
    /// Largest waveform lag searched for r_wave, seconds.
    #[arg(long, default_value_t = 0.0)]
    pub max_lag_s: f64,
    /// Drop ground-truth windows around heart-rate jumps.
    #[arg(long)]
    pub mask_unstable: bool,
    /// Jump threshold for `--mask-unstable`, BPM per second.
    #[arg(long, default_value_t = 7.0)]
    pub mask_threshold: f64,
    /// Aggregate per-session |ME| instead of ME.
    #[arg(long)]
    pub abs_me: bool,
    /// Also write box plots of per-session |ME| and MAE.
    #[arg(long)]
    pub svg: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    #[serde(skip)]
    pub jobs: usize,
    #[arg(long)]
    pub keep_going: bool,
}

/// Prediction and ground-truth waveforms on a common rate and length.
pub fn aligned_waves(preds: &PredictionsFile, gt: &Waveform) -> Result<(Waveform, Waveform)> {
    let last = preds.chunks.last().ok_or(Error::Empty("predictions file has no chunks"))?;
    let pred = overlap_add(&preds.chunks, last.start + preds.chunk_len, preds.fps)?;
    let gt = resample_waveform(gt, preds.fps)?;
    let (gt, pred) = truncate_to_match(&gt, &pred)?;
    Ok((pred, gt))
}

/// Metrics for one session from its predictions and native-rate ground truth.
pub fn evaluate_session(preds: &PredictionsFile, gt: &Waveform, cfg: &EvaluateConfig) -> Result<SessionRecord> {
    let (pred, gt) = aligned_waves(preds, gt)?;
    let hr_pred = cfg.variant.hr(&pred)?;
    let mut hr_gt = cfg.variant.hr(&gt)?;
    if cfg.mask_unstable && cfg.variant != PostVariant::WFull {
        hr_gt = mask_unstable_gt(&hr_gt, cfg.mask_threshold, cfg.variant.stft().window_s);
    }
    Ok(SessionRecord {
        session_id: String::new(),
        metrics: session_metrics(&hr_pred, &hr_gt, &pred, &gt, cfg.max_lag_s)?,
    })
}

fn evaluate_config_echo(cfg: &EvaluateConfig) -> serde_json::Value {
    json!({
        "command": "evaluate",
        "params": cfg,
        "stft": cfg.variant.stft(),
    })
}

/// Evaluates every session and writes `report.json`, `report.csv` and,
/// when asked, `box_plot.svg` into `cfg.out`.
pub fn cmd_evaluate(cfg: &EvaluateConfig) -> Result<MetricsReport> {
    if !(cfg.max_lag_s >= 0.0) {
        return Err(Error::invalid("--max-lag-s must be non-negative"));
    }
    let manifests = list_manifests(&cfg.dataset)?;
    let done = for_each_session(
        &manifests,
        |m| m.session_id.clone(),
        cfg.jobs,
        cfg.keep_going,
        |m| {
            let path = cfg.predictions.join(format!("{}.json", m.session_id));
            let (preds, warnings) = load_external_predictions(&path)?;
            for w in warnings {
                eprintln!("warning: {}: {w}", m.session_id);
            }
            let gt = read_waveform_csv(&m.waveform_path(), m.gt_fs)?;
            evaluate_session(&preds, &gt, cfg)
        },
    )?;
    let records = done
        .into_iter()
        .map(|(id, mut r)| {
            r.session_id = id;
            r
        })
        .collect();
    let report = MetricsReport::new(evaluate_config_echo(cfg), records, cfg.abs_me)?;
    create_dir(&cfg.out)?;
    write_json(&cfg.out.join("report.json"), &report)?;
    let csv_path = cfg.out.join("report.csv");
    fs::write(&csv_path, report.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
    if cfg.svg {
        let abs_me: Vec<f64> = report.sessions.iter().map(|s| s.metrics.me.abs()).collect();
        let mae: Vec<f64> = report.sessions.iter().map(|s| s.metrics.mae).collect();
        let svg = box_plot_svg(&[("|ME|", &abs_me), ("MAE", &mae)], "BPM");
        let svg_path = cfg.out.join("box_plot.svg");
        fs::write(&svg_path, svg).map_err(|e| Error::io(&svg_path, e))?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StatsConfig {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output JSON path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// STFT window for the ground-truth heart rate, seconds.
    #[arg(long, default_value_t = 10.0)]
    pub window_s: f64,
    #[arg(long, default_value_t = 0)]
    #[serde(skip)]
    pub jobs: usize,
    #[arg(long)]
    pub keep_going: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionStatsRecord {
    pub session_id: String,
    #[serde(flatten)]
    pub stats: SessionStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub config: serde_json::Value,
    pub sessions: Vec<SessionStatsRecord>,
    pub dataset: DatasetStats,
}

/// Duration, heart-rate and variability summary of a dataset's ground truth.
pub fn cmd_stats(cfg: &StatsConfig) -> Result<StatsReport> {
    let stft = StftConfig::with_window(cfg.window_s);
    let manifests = list_manifests(&cfg.dataset)?;
    let done = for_each_session(
        &manifests,
        |m| m.session_id.clone(),
        cfg.jobs,
        cfg.keep_going,
        |m| {
            let gt = read_waveform_csv(&m.waveform_path(), m.gt_fs)?;
            session_stats(&hr_series(&gt, &stft)?, gt.duration_s())
        },
    )?;
    let stats: Vec<SessionStats> = done.iter().map(|(_, s)| *s).collect();
    let report = StatsReport {
        config: json!({"command": "stats", "params": cfg, "stft": stft}),
        dataset: dataset_stats(&stats)?,
        sessions: done
            .into_iter()
            .map(|(session_id, stats)| SessionStatsRecord { session_id, stats })
            .collect(),
    };
    if let Some(out) = &cfg.out {
        write_json(out, &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AugmentConfig {
    /// Session manifest supplying the ground truth (and raw frames when
    /// `--clip` is absent).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Preprocessed clip tensor; the raw session is preprocessed with the
    /// default crop otherwise.
    #[arg(long)]
    pub clip: Option<PathBuf>,
    /// First clip frame; defaults to the first STFT window center, the
    /// earliest start with a defined source heart rate.
    #[arg(long)]
    pub clip_start: Option<usize>,
    #[arg(long, default_value_t = 136)]
    pub clip_len: usize,
    /// Fixed speed target, BPM. Drawn at random when absent.
    #[arg(long)]
    pub target_hr: Option<f64>,
    /// Fixed modulation factor.
    #[arg(long)]
    pub factor: Option<f64>,
    /// Apply random speed augmentation.
    #[arg(long)]
    pub speed: bool,
    /// Apply random modulation.
    #[arg(long)]
    pub modulate: bool,
    /// Also apply flip, illumination and noise augmentation.
    #[arg(long)]
    pub spatial: bool,
    #[arg(long, default_value_t = 40.0)]
    pub hr_min: f64,
    #[arg(long, default_value_t = 180.0)]
    pub hr_max: f64,
    #[arg(long, default_value_t = 7.0)]
    pub max_slope: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Provenance record written next to an augmented clip.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentRecord {
    pub session_id: String,
    pub clip_start: usize,
    pub target_hr: f64,
    pub source_hr: f64,
    #[serde(rename = "L")]
    pub source_len: usize,
    pub source_start: usize,
    pub f: f64,
    pub realized_hr_start: f64,
    pub realized_hr_end: f64,
    pub seed: u64,
}

fn modulated(aug: AugmentedClip, f: f64, spec: &ModulationSpec) -> Result<AugmentedClip> {
    let hr = aug.realized_hr_start;
    let (video, wave) = modulate_within(&aug.video, &aug.wave, f, hr, spec)?;
    let (s, e) = modulation_rates(f);
    Ok(AugmentedClip {
        video,
        wave,
        realized_hr_start: hr * s,
        realized_hr_end: hr * e,
        provenance: Provenance {
            factor: f,
            ..aug.provenance
        },
    })
}

/// Augments one clip of a session and writes `<id>_aug.rppg` (plus sidecar),
/// `<id>_aug.csv` and `<id>_aug.provenance.json` into `cfg.out`.
pub fn cmd_augment(cfg: &AugmentConfig) -> Result<AugmentRecord> {
    let speed = SpeedAugSpec {
        hr_min: cfg.hr_min,
        hr_max: cfg.hr_max,
        clip_len: cfg.clip_len,
    };
    speed.validate()?;
    let modulation = ModulationSpec {
        max_slope: cfg.max_slope,
        clip_len: cfg.clip_len,
    };
    let manifest = SessionManifest::load(&cfg.manifest)?;
    let id = manifest.session_id.clone();
    let run = || -> Result<AugmentRecord> {
        let (video, gt) = match &cfg.clip {
            Some(p) => (read_clip(p)?, read_waveform_csv(&manifest.waveform_path(), manifest.gt_fs)?),
            None => {
                let s = load_session(&manifest)?;
                let clip = preprocess_session(&s.video, s.landmarks.as_ref(), &CropSpec::default(), 30.0)?;
                (clip, s.gt)
            }
        };
        let gt = resample_waveform(&gt, video.fps())?;
        let gt_hr = hr_series(&gt, &StftConfig::default())?;
        let n = cfg.clip_len;
        let clip_start = cfg.clip_start.unwrap_or(gt_hr.windows().start);
        let mut rng = RngState::new(cfg.seed, "augment");
        let aug = match (cfg.target_hr, cfg.factor) {
            (Some(target), factor) => {
                let hr_source = mean_hr_over(&gt_hr, clip_start, n)?;
                let aug = speed_augment(&video, &gt, clip_start, hr_source, target, n)?;
                match factor {
                    Some(f) => modulated(aug, f, &modulation)?,
                    None => aug,
                }
            }
            (None, Some(f)) => {
                let total = video.len().min(gt.len());
                if clip_start + n > total {
                    return Err(Error::InsufficientContext {
                        needed: clip_start + n,
                        available: total,
                    });
                }
                let hr = mean_hr_over(&gt_hr, clip_start, n)?;
                let end = (clip_start + n + 1).min(total);
                let positions: Vec<f64> = (clip_start..end).map(|i| i as f64).collect();
                let base = AugmentedClip {
                    video: video.slice(clip_start..end)?,
                    wave: crate::augment::interpolate_wave(&gt, &positions)?,
                    realized_hr_start: hr,
                    realized_hr_end: hr,
                    provenance: Provenance {
                        source_start: clip_start,
                        source_len: n,
                        hr_source: hr,
                        hr_target: hr,
                        factor: 1.0,
                    },
                };
                modulated(base, f, &modulation)?
            }
            (None, None) => {
                let options = if cfg.speed || cfg.modulate {
                    TemporalAugOptions {
                        speed: cfg.speed,
                        modulation: cfg.modulate,
                    }
                } else {
                    TemporalAugOptions {
                        speed: true,
                        modulation: true,
                    }
                };
                augment_clip(&video, &gt, &gt_hr, clip_start, &speed, &modulation, options, &mut rng)?
            }
        };
        let video = if cfg.spatial {
            spatial_augment(&aug.video, &mut rng.substream("spatial"), &SpatialAugSpec::default())?
        } else {
            aug.video.clone()
        };
        create_dir(&cfg.out)?;
        let stem = format!("{id}_aug");
        write_clip(&cfg.out, &stem, &video)?;
        write_waveform_csv(&cfg.out.join(format!("{stem}.csv")), &aug.wave)?;
        let p = aug.provenance;
        let record = AugmentRecord {
            session_id: id.clone(),
            clip_start,
            target_hr: p.hr_target,
            source_hr: p.hr_source,
            source_len: p.source_len,
            source_start: p.source_start,
            f: p.factor,
            realized_hr_start: aug.realized_hr_start,
            realized_hr_end: aug.realized_hr_end,
            seed: cfg.seed,
        };
        write_json(&cfg.out.join(format!("{stem}.provenance.json")), &record)?;
        Ok(record)
    };
    run().map_err(|e| e.in_session(id.clone()))
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Minimal SVG box plot: quartile box, median, min/max whiskers and the
/// individual points of each group.
pub fn box_plot_svg(groups: &[(&str, &[f64])], y_label: &str) -> String {
    let (w_group, height, left, top, bottom) = (140.0, 320.0, 60.0, 20.0, 40.0);
    let width = left + w_group * groups.len() as f64 + 20.0;
    let ymax = groups
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let ymax = if ymax > 0.0 { ymax * 1.1 } else { 1.0 };
    let plot_h = height - top - bottom;
    let y = |v: f64| top + plot_h * (1.0 - v / ymax);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#,
        height - bottom
    );
    for k in 0..=4 {
        let v = ymax * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
            left - 4.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">{y_label}</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );
    for (g, (name, values)) in groups.iter().enumerate() {
        let cx = left + w_group * (g as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{cx}" y="{}" text-anchor="middle">{name}</text>"#,
            height - bottom + 18.0
        );
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            continue;
        }
        v.sort_by(f64::total_cmp);
        let (q1, med, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let half = 30.0;
        let _ = writeln!(
            s,
            r#"<line x1="{cx}" y1="{:.1}" x2="{cx}" y2="{:.1}" stroke="black"/>"#,
            y(v[0]),
            y(v[v.len() - 1])
        );
        let _ = writeln!(
            s,
            r##"<rect x="{}" y="{:.1}" width="{}" height="{:.1}" fill="#cfe2f3" stroke="black"/>"##,
            cx - half,
            y(q3),
            2.0 * half,
            (y(q1) - y(q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{:.1}" x2="{}" y2="{:.1}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            y(med),
            cx + half,
            y(med)
        );
        for p in &v {
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{:.1}" r="2"/>"#, y(*p));
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&[5.0], 0.75), 5.0);
    }

    #[test]
    fn svg_has_one_box_per_group() {
        let svg = box_plot_svg(&[("a", &[1.0, 2.0, 3.0]), ("b", &[0.5])], "BPM");
        assert_eq!(svg.matches("<rect").count(), 2);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn synth_config_rejects_out_of_range_hr() {
        let cfg = SynthConfig {
            out: PathBuf::from("unused"),
            sessions: 1,
            hr: vec![200.0],
            trajectory: TrajectoryKind::Constant,
            slope: 0.5,
            depth: 10.0,
            period: 20.0,
            duration: 10.0,
            fps: 30.0,
            gt_fs: None,
            size: 16,
            pulse_amplitude: None,
            noise_sigma: None,
            harmonic_ratio: None,
            illum_drift: None,
            seed: 0,
            jobs: 1,
        };
        let err = cfg.specs().unwrap_err();
        assert!(err.is_validation());
    }
}
