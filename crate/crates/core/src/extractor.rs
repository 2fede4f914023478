//! High-frequency extractor abstraction.
//!
//! The restoration network never sees raw images; it sees the output of one
//! of these extractors. The same configured extractor must be applied at
//! training and test time, so the enum is serializable and travels inside
//! checkpoints.

use ndarray::Array3;

use crate::error::Result;
use crate::freqfilter::{highpass, FilterSpec};
use crate::gradfilter::{gradient_extract, GradientSpec};
use crate::imagecore::Image;

/// Which high-frequency extractor feeds the network.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExtractorSpec {
    Frequency(FilterSpec),
    Gradient(GradientSpec),
}

impl ExtractorSpec {
    /// Channels produced for an image with `in_channels` planes.
    pub fn out_channels(&self, in_channels: usize) -> usize {
        match self {
            ExtractorSpec::Frequency(_) => in_channels,
            ExtractorSpec::Gradient(g) => g.out_channels(in_channels),
        }
    }

    /// Extracts the high-frequency representation. Outputs are signed and
    /// unclamped.
    pub fn extract(&self, img: &Image) -> Result<Array3<f64>> {
        match self {
            ExtractorSpec::Frequency(spec) => Ok(highpass(img, spec)),
            ExtractorSpec::Gradient(spec) => gradient_extract(img, spec),
        }
    }
}
