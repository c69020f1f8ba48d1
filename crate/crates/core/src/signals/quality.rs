//! Quality control: ECG polarity repair, beat-template SQI and the
//! sample-entropy gate.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::entropy::sample_entropy_default;
use super::segment::AlignedSegment;
use super::{mean, Modality, SignalSegment};

/// Sample skewness `m3 / m2^1.5`; zero for constant input.
pub fn skewness(x: &[f64]) -> f64 {
    let m = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    if m2 <= 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// Flips the segment when its skewness is negative; upright R-peaks put the
/// heavy tail on the positive side.
pub fn rectify_ecg_inversion(seg: &SignalSegment) -> SignalSegment {
    if skewness(&seg.samples) < 0.0 {
        seg.with_samples(seg.samples.iter().map(|v| -v).collect())
    } else {
        seg.clone()
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Local maxima above half the segment range, at least 0.3 s apart.
pub(crate) fn detect_r_peaks(x: &[f64], fs: f64) -> Vec<usize> {
    if x.len() < 3 {
        return Vec::new();
    }
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let thr = lo + 0.5 * (hi - lo);
    let refractory = (0.3 * fs).round().max(1.0) as usize;
    let mut peaks: Vec<usize> = Vec::new();
    for i in 1..x.len() - 1 {
        if x[i] > thr && x[i] >= x[i - 1] && x[i] > x[i + 1] {
            match peaks.last() {
                Some(&p) if i - p < refractory => {
                    if x[i] > x[p] {
                        *peaks.last_mut().unwrap() = i;
                    }
                }
                _ => peaks.push(i),
            }
        }
    }
    peaks
}

/// Mean Pearson correlation between each beat window (±0.25 s around an
/// R-peak) and the average beat template. Returns 0 with fewer than two
/// complete beats.
pub fn ecg_template_sqi(seg: &SignalSegment) -> f64 {
    let half = (0.25 * seg.fs).round() as usize;
    let x = &seg.samples;
    let beats: Vec<&[f64]> = detect_r_peaks(x, seg.fs)
        .into_iter()
        .filter(|&p| p >= half && p + half < x.len())
        .map(|p| &x[p - half..=p + half])
        .collect();
    if beats.len() < 2 {
        return 0.0;
    }
    let w = 2 * half + 1;
    let template: Vec<f64> = (0..w)
        .map(|i| beats.iter().map(|b| b[i]).sum::<f64>() / beats.len() as f64)
        .collect();
    beats.iter().map(|b| pearson(b, &template)).sum::<f64>() / beats.len() as f64
}

/// Per-modality entropy ceilings and the optional ECG template-SQI floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateThresholds {
    pub ppg: f64,
    pub ecg: f64,
    pub bp: f64,
    pub ecg_sqi: Option<f64>,
}

impl Default for GateThresholds {
    fn default() -> Self {
        Self {
            ppg: 0.2,
            ecg: 0.3,
            bp: 0.2,
            ecg_sqi: Some(0.8),
        }
    }
}

impl GateThresholds {
    pub fn for_modality(&self, m: Modality) -> f64 {
        match m {
            Modality::Ppg => self.ppg,
            Modality::Ecg => self.ecg,
            Modality::Bp => self.bp,
            Modality::Am => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateRow {
    pub segment_id: usize,
    pub modality: Modality,
    pub entropy: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, Default)]
pub struct GateReport {
    pub rows: Vec<GateRow>,
    pub n_in: usize,
    pub n_kept: usize,
}

impl GateReport {
    pub fn removal_rate(&self) -> f64 {
        if self.n_in == 0 {
            0.0
        } else {
            (self.n_in - self.n_kept) as f64 / self.n_in as f64
        }
    }

    /// Set when every segment was removed.
    pub fn is_empty_output(&self) -> bool {
        self.n_kept == 0
    }

    /// `segment_id,modality,entropy,kept`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("segment_id,modality,entropy,kept\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.segment_id, r.modality, r.entropy, r.kept);
        }
        out
    }
}

/// Keeps a record only when every modality's sample entropy is at or below
/// its threshold (and, when configured, the ECG template SQI clears its
/// floor). Gating is per segment.
pub fn quality_gate(
    records: &[AlignedSegment],
    thresholds: &GateThresholds,
) -> (Vec<AlignedSegment>, GateReport) {
    let mut kept = Vec::new();
    let mut report = GateReport {
        n_in: records.len(),
        ..Default::default()
    };
    for rec in records {
        let entropies: Vec<(Modality, f64)> = rec
            .signals
            .iter()
            .map(|s| {
                let e = sample_entropy_default(&s.samples)
                    .map(|e| e.value)
                    .unwrap_or(f64::INFINITY);
                (s.modality, e)
            })
            .collect();
        let entropy_ok = entropies
            .iter()
            .all(|&(m, e)| e <= thresholds.for_modality(m));
        let sqi_ok = match thresholds.ecg_sqi {
            Some(floor) => rec
                .signals
                .iter()
                .filter(|s| s.modality == Modality::Ecg)
                .all(|s| ecg_template_sqi(s) >= floor),
            None => true,
        };
        let keep = entropy_ok && sqi_ok;
        report.rows.extend(entropies.into_iter().map(|(modality, entropy)| GateRow {
            segment_id: rec.id,
            modality,
            entropy,
            kept: keep,
        }));
        if keep {
            kept.push(rec.clone());
        }
    }
    report.n_kept = kept.len();
    if report.is_empty_output() && report.n_in > 0 {
        log::warn!("quality gate removed all {} segments", report.n_in);
    }
    (kept, report)
}
