//! End-to-end preprocessing of aligned raw segments into normalized
//! train/val/test splits.

use serde::{Deserialize, Serialize};

use super::filter::{decimate, highpass, notch_powerline};
use super::normalize::{normalize, NormMode, NormStats, NormTable};
use super::quality::{quality_gate, rectify_ecg_inversion, GateReport, GateThresholds};
use super::segment::{split_records, AlignedSegment, DatasetSplit, SplitRatios};
use super::{Modality, SignalSegment};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub highpass_hz: f64,
    pub highpass_order: usize,
    /// Powerline notch frequency; skipped when `None` or at or above Nyquist.
    pub notch_hz: Option<f64>,
    pub gate: GateThresholds,
    /// Integer downsampling applied after gating.
    pub decimate: usize,
    pub ratios: SplitRatios,
    pub ppg_mode: NormMode,
    pub ecg_mode: NormMode,
    pub bp_mode: NormMode,
    pub split_seed: u64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            highpass_hz: 0.5,
            highpass_order: 5,
            notch_hz: None,
            gate: GateThresholds::default(),
            decimate: 4,
            ratios: SplitRatios::default(),
            ppg_mode: NormMode::Minmax,
            ecg_mode: NormMode::Minmax,
            bp_mode: NormMode::Zscore,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub split: DatasetSplit,
    pub norm: NormTable,
    pub gate: GateReport,
}

fn clean_signal(s: &SignalSegment, cfg: &PreprocessConfig) -> Result<SignalSegment> {
    let mut s = s.clone();
    if matches!(s.modality, Modality::Ppg | Modality::Ecg) {
        if let Some(f) = cfg.notch_hz {
            if f < s.fs / 2.0 {
                s = notch_powerline(&s, f)?;
            }
        }
        s = highpass(&s, cfg.highpass_hz, cfg.highpass_order)?;
    }
    if s.modality == Modality::Ecg {
        s = rectify_ecg_inversion(&s);
    }
    Ok(s)
}

fn map_signals(
    records: Vec<AlignedSegment>,
    mut f: impl FnMut(&SignalSegment) -> Result<SignalSegment>,
) -> Result<Vec<AlignedSegment>> {
    records
        .into_iter()
        .map(|r| {
            Ok(AlignedSegment {
                signals: r.signals.iter().map(&mut f).collect::<Result<_>>()?,
                ..r
            })
        })
        .collect()
}

/// Filters, rectifies and gates at the native rate, decimates, splits, then
/// fits normalization on the training split only and applies it everywhere.
pub fn preprocess(records: Vec<AlignedSegment>, cfg: &PreprocessConfig) -> Result<PreparedData> {
    for r in &records {
        for m in crate::signals::Modality::PHYSICAL {
            if r.get(m).is_none() {
                return Err(Error::param(format!("record {} lacks {}", r.id, m.name())));
            }
        }
    }
    let cleaned = map_signals(records, |s| clean_signal(s, cfg))?;
    let (kept, gate) = quality_gate(&cleaned, &cfg.gate);
    let small = map_signals(kept, |s| decimate(s, cfg.decimate))?;
    let split = split_records(small, cfg.ratios, cfg.split_seed)?;
    if split.train.is_empty() {
        return Err(Error::param("no training segments survived preprocessing"));
    }
    let fit = |m: Modality, mode: NormMode| -> Result<(NormMode, NormStats)> {
        let stats = NormStats::fit(split.train.iter().map(|r| r.get(m).expect("checked").samples.as_slice()))?;
        Ok((mode, stats))
    };
    let norm = NormTable {
        ppg: fit(Modality::Ppg, cfg.ppg_mode)?,
        ecg: fit(Modality::Ecg, cfg.ecg_mode)?,
        bp: fit(Modality::Bp, cfg.bp_mode)?,
    };
    let apply = |recs: Vec<AlignedSegment>| {
        map_signals(recs, |s| {
            let (mode, stats) = norm.get(s.modality).ok_or_else(|| Error::param("AM carries no data"))?;
            normalize(s, &stats, mode)
        })
    };
    let DatasetSplit { train, val, test } = split;
    Ok(PreparedData {
        split: DatasetSplit {
            train: apply(train)?,
            val: apply(val)?,
            test: apply(test)?,
        },
        norm,
        gate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{synth_trimodal, SynthConfig};

    #[test]
    fn synthetic_corpus_survives_and_is_normalized() {
        let cfg = SynthConfig {
            n_segments: 40,
            ..Default::default()
        };
        let data = preprocess(synth_trimodal(&cfg).unwrap(), &PreprocessConfig::default()).unwrap();
        let kept = data.gate.n_kept;
        assert!(kept >= 32, "{}", data.gate.to_csv());
        let s = &data.split;
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), kept);
        for r in &data.split.train {
            assert_eq!(r.len(), 128);
            for s in &r.signals {
                assert_eq!(s.fs, 32.0);
                if s.modality != Modality::Bp {
                    assert!(s.samples.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
                }
            }
        }
        let bp: Vec<f64> = data
            .split
            .train
            .iter()
            .flat_map(|r| r.get(Modality::Bp).unwrap().samples.clone())
            .collect();
        let m = bp.iter().sum::<f64>() / bp.len() as f64;
        assert!(m.abs() < 1e-9);
    }
}
