//! Remote photoplethysmography toolkit.
//!
//! Frame-level preprocessing, speed and modulation augmentation with exact
//! label bookkeeping, classical pulse estimators (GREEN, CHROM, POS),
//! STFT heart-rate extraction and evaluation metrics. A synthetic generator
//! produces sessions with known ground truth.

// `!(x > 0.0)` style checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod augment;
pub mod error;
pub mod estimate;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod postprocess;
pub mod preprocess;
pub mod rng;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use rng::RngState;
pub use types::{Band, FaceRegion, HrSeries, LandmarkTrack, VideoClip, Waveform};
