//! FAIR: frequency-aware image restoration for visual anomaly detection.
//!
//! The pipeline trains a restoration network to rebuild clean images from
//! their high-frequency components. At test time the reconstruction error
//! between the input and its restoration, measured by gradient-magnitude
//! similarity and CIELAB color difference, localizes anomalies.
//!
//! Module map:
//! - [`imagecore`]: image container, color conversion, resizing, pyramids
//! - [`freqfilter`]: 2D DFT filtering (ideal/Gaussian/Butterworth) and
//!   frequency-domain diagnostics
//! - [`gradfilter`]: spatial gradient extractors (Sobel, central difference)
//! - [`synth`]: training-time anomaly synthesis (Perlin blending, CutPaste)
//! - [`extractor`]: the high-frequency extractor abstraction shared by
//!   training and inference
//! - [`restoration`]: the UNet restoration model, loss, optimizer, checkpoints
//! - [`pipeline`]: training loop and inference orchestration
//! - [`scoring`]: anomaly maps and evaluation metrics (AUROC, AUPRO)

pub mod error;
pub mod extractor;
pub mod freqfilter;
pub mod gradfilter;
pub mod imagecore;
pub mod pipeline;
pub mod restoration;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};
