//! Preprocessing of raw multi-modal streams: filtering, ECG polarity repair,
//! entropy and template quality gating, normalization, degradation
//! constructors and segmentation.

mod degrade;
mod entropy;
mod filter;
mod normalize;
mod pipeline;
mod quality;
mod segment;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use degrade::{add_noise_at_snr, apply_mask, gap_mask_with_fraction, gen_gap_mask, ObservationMask};
pub use entropy::{sample_entropy, sample_entropy_default, SampleEntropy};
pub use filter::{decimate, filtfilt, highpass, notch_powerline, Biquad, Sos};
pub use normalize::{denormalize, normalize, NormMode, NormStats, NormTable};
pub use pipeline::{preprocess, PreparedData, PreprocessConfig};
pub use quality::{
    ecg_template_sqi, quality_gate, rectify_ecg_inversion, skewness, GateReport, GateRow,
    GateThresholds,
};
pub use segment::{segment_and_split, AlignedSegment, DatasetSplit, MultiStream, SplitRatios};

/// Signal modality. `Am` is the auxiliary placeholder slot; it never carries
/// raw data and never appears as a condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    Ppg,
    Ecg,
    Bp,
    Am,
}

impl Modality {
    /// Physical modalities in slot order.
    pub const PHYSICAL: [Modality; 3] = [Modality::Ppg, Modality::Ecg, Modality::Bp];
    /// All slots, AM last.
    pub const SLOTS: [Modality; 4] = [Modality::Ppg, Modality::Ecg, Modality::Bp, Modality::Am];

    pub fn index(self) -> usize {
        match self {
            Modality::Ppg => 0,
            Modality::Ecg => 1,
            Modality::Bp => 2,
            Modality::Am => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Modality> {
        Modality::SLOTS.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Ppg => "PPG",
            Modality::Ecg => "ECG",
            Modality::Bp => "BP",
            Modality::Am => "AM",
        }
    }

    pub fn parse(s: &str) -> Result<Modality> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PPG" => Ok(Modality::Ppg),
            "ECG" => Ok(Modality::Ecg),
            "BP" | "ABP" => Ok(Modality::Bp),
            "AM" => Ok(Modality::Am),
            other => Err(Error::param(format!("unknown modality `{other}`"))),
        }
    }

    pub fn is_physical(self) -> bool {
        self != Modality::Am
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which value space a segment's samples live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnitSpace {
    Raw,
    Zscored,
    Minmax,
    Mmhg,
}

/// One fixed-length recording of a single modality.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSegment {
    pub samples: Vec<f64>,
    pub fs: f64,
    pub modality: Modality,
    pub unit_space: UnitSpace,
}

impl SignalSegment {
    pub fn new(samples: Vec<f64>, fs: f64, modality: Modality, unit_space: UnitSpace) -> Self {
        Self {
            samples,
            fs,
            modality,
            unit_space,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            samples,
            ..self.clone()
        }
    }

    /// Errors when any sample is NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        match self.samples.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::NonFinite(format!(
                "{} sample {i} is {}",
                self.modality, self.samples[i]
            ))),
        }
    }
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
pub(crate) fn std_dev(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

pub(crate) fn power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}
