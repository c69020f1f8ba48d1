//! Segmentation of aligned streams and seeded train/val/test splitting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Modality, SignalSegment, UnitSpace};
use crate::error::{Error, Result};

/// Time-aligned, equal-length continuous recordings.
#[derive(Debug, Clone)]
pub struct MultiStream {
    pub fs: f64,
    pub unit_space: UnitSpace,
    pub channels: Vec<(Modality, Vec<f64>)>,
}

/// One segment per modality, all cut from the same stream offset.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSegment {
    pub id: usize,
    pub offset: usize,
    pub signals: Vec<SignalSegment>,
}

impl AlignedSegment {
    pub fn get(&self, m: Modality) -> Option<&SignalSegment> {
        self.signals.iter().find(|s| s.modality == m)
    }

    pub fn len(&self) -> usize {
        self.signals.first().map_or(0, |s| s.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DatasetSplit {
    pub train: Vec<AlignedSegment>,
    pub val: Vec<AlignedSegment>,
    pub test: Vec<AlignedSegment>,
}

/// Cuts non-overlapping `seconds`-long aligned segments and splits them with a
/// seeded shuffle. Train and val counts are rounded, test takes the rest.
pub fn segment_and_split(
    stream: &MultiStream,
    seconds: f64,
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetSplit> {
    let records = segment_stream(stream, seconds)?;
    split_records(records, ratios, seed)
}

pub(crate) fn segment_stream(stream: &MultiStream, seconds: f64) -> Result<Vec<AlignedSegment>> {
    let len = stream.channels.first().map_or(0, |c| c.1.len());
    if stream.channels.iter().any(|c| c.1.len() != len) {
        return Err(Error::param("modality streams differ in length"));
    }
    if !(seconds > 0.0) || !(stream.fs > 0.0) {
        return Err(Error::param("segment length and fs must be positive"));
    }
    let seg_len = (seconds * stream.fs).round() as usize;
    if seg_len == 0 || len < seg_len {
        log::warn!("stream of {len} samples is shorter than one {seg_len}-sample segment");
        return Ok(Vec::new());
    }
    Ok((0..len / seg_len)
        .map(|i| {
            let offset = i * seg_len;
            AlignedSegment {
                id: i,
                offset,
                signals: stream
                    .channels
                    .iter()
                    .map(|(m, x)| {
                        SignalSegment::new(
                            x[offset..offset + seg_len].to_vec(),
                            stream.fs,
                            *m,
                            stream.unit_space,
                        )
                    })
                    .collect(),
            }
        })
        .collect())
}

pub(crate) fn split_records(
    mut records: Vec<AlignedSegment>,
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetSplit> {
    let sum = ratios.train + ratios.val + ratios.test;
    if [ratios.train, ratios.val, ratios.test].iter().any(|r| *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::param(format!("split ratios {ratios:?} must be >= 0 and sum to 1")));
    }
    let n = records.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records.shuffle(&mut rng);
    let n_train = ((ratios.train * n as f64).round() as usize).min(n);
    let n_val = ((ratios.val * n as f64).round() as usize).min(n - n_train);
    let test = records.split_off(n_train + n_val);
    let val = records.split_off(n_train);
    Ok(DatasetSplit {
        train: records,
        val,
        test,
    })
}
