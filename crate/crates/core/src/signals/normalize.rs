//! Per-modality normalization statistics fitted on the training split.

use serde::{Deserialize, Serialize};

use super::{Modality, SignalSegment, UnitSpace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    Zscore,
    Minmax,
}

/// Frozen statistics of one modality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl NormStats {
    /// Fits over all samples of all given series.
    pub fn fit<'a>(series: impl IntoIterator<Item = &'a [f64]>) -> Result<NormStats> {
        let (mut n, mut sum, mut sum2) = (0usize, 0.0f64, 0.0f64);
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        let all: Vec<&[f64]> = series.into_iter().collect();
        for s in &all {
            for &v in s.iter() {
                n += 1;
                sum += v;
                min = min.min(v);
                max = max.max(v);
            }
        }
        if n == 0 {
            return Err(Error::DegenerateStats("no samples to fit".into()));
        }
        let mean = sum / n as f64;
        for s in &all {
            for &v in s.iter() {
                sum2 += (v - mean) * (v - mean);
            }
        }
        let stats = NormStats {
            mean,
            std: (sum2 / n as f64).sqrt(),
            min,
            max,
        };
        Ok(stats)
    }

    fn check(&self, mode: NormMode) -> Result<()> {
        match mode {
            NormMode::Zscore if !(self.std > 0.0) => {
                Err(Error::DegenerateStats(format!("std = {}", self.std)))
            }
            NormMode::Minmax if !(self.max > self.min) => Err(Error::DegenerateStats(format!(
                "max {} <= min {}",
                self.max, self.min
            ))),
            _ => Ok(()),
        }
    }
}

/// Statistics and mode for every physical modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormTable {
    pub ppg: (NormMode, NormStats),
    pub ecg: (NormMode, NormStats),
    pub bp: (NormMode, NormStats),
}

impl NormTable {
    pub fn get(&self, m: Modality) -> Option<(NormMode, NormStats)> {
        match m {
            Modality::Ppg => Some(self.ppg),
            Modality::Ecg => Some(self.ecg),
            Modality::Bp => Some(self.bp),
            Modality::Am => None,
        }
    }

    /// Identity-like table for data that is already normalized.
    pub fn identity() -> NormTable {
        let unit = NormStats {
            mean: 0.0,
            std: 1.0,
            min: 0.0,
            max: 1.0,
        };
        NormTable {
            ppg: (NormMode::Minmax, unit),
            ecg: (NormMode::Minmax, unit),
            bp: (NormMode::Zscore, unit),
        }
    }
}

pub fn normalize(seg: &SignalSegment, stats: &NormStats, mode: NormMode) -> Result<SignalSegment> {
    stats.check(mode)?;
    let (samples, space) = match mode {
        NormMode::Zscore => (
            seg.samples.iter().map(|v| (v - stats.mean) / stats.std).collect(),
            UnitSpace::Zscored,
        ),
        NormMode::Minmax => {
            let span = stats.max - stats.min;
            (
                seg.samples.iter().map(|v| (v - stats.min) / span).collect(),
                UnitSpace::Minmax,
            )
        }
    };
    Ok(SignalSegment {
        samples,
        unit_space: space,
        ..seg.clone()
    })
}

/// Inverse of [`normalize`]; BP returns to mmHg, others to raw units.
pub fn denormalize(seg: &SignalSegment, stats: &NormStats, mode: NormMode) -> Result<SignalSegment> {
    stats.check(mode)?;
    let samples = match mode {
        NormMode::Zscore => seg.samples.iter().map(|v| v * stats.std + stats.mean).collect(),
        NormMode::Minmax => {
            let span = stats.max - stats.min;
            seg.samples.iter().map(|v| v * span + stats.min).collect()
        }
    };
    let unit_space = if seg.modality == Modality::Bp {
        UnitSpace::Mmhg
    } else {
        UnitSpace::Raw
    };
    Ok(SignalSegment {
        samples,
        unit_space,
        ..seg.clone()
    })
}
