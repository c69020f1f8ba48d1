//! Synthetic tri-modal corpus. A shared beat-time process drives an ECG made
//! of Gaussian P/Q/R/S/T bumps, a PPG pulse wave lagging each R peak by a fixed
//! transit delay, and an arterial pressure wave scaled into a per-segment
//! systolic/diastolic range.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::{AlignedSegment, Modality, SignalSegment, UnitSpace};

/// One Gaussian component of a beat template: amplitude, center offset from
/// the beat time (s) and width (s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub amplitude: f64,
    pub offset: f64,
    pub width: f64,
}

const fn bump(amplitude: f64, offset: f64, width: f64) -> Bump {
    Bump {
        amplitude,
        offset,
        width,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_segments: usize,
    pub seq_len: usize,
    pub fs: f64,
    pub hr_range_bpm: (f64, f64),
    /// Standard deviation of beat-to-beat interval changes, as a fraction of
    /// the mean interval.
    pub rr_jitter: f64,
    /// Delay from the R peak to the PPG systolic peak (s).
    pub pulse_transit_s: f64,
    /// Delay from the R peak to the pressure peak (s).
    pub pressure_delay_s: f64,
    pub ecg_template: Vec<Bump>,
    /// Pulse template relative to the systolic peak.
    pub pulse_template: Vec<Bump>,
    pub sbp_range: (f64, f64),
    pub dbp_range: (f64, f64),
    /// Per-segment multiplicative amplitude spread of ECG and PPG.
    pub amplitude_jitter: f64,
    /// Additive white noise, relative to the unit template amplitude
    /// (mmHg-scaled for pressure).
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_segments: 500,
            seq_len: 512,
            fs: 128.0,
            hr_range_bpm: (60.0, 100.0),
            rr_jitter: 0.02,
            pulse_transit_s: 0.25,
            pressure_delay_s: 0.2,
            ecg_template: vec![
                bump(0.12, -0.18, 0.03),
                bump(-0.12, -0.035, 0.012),
                bump(1.0, 0.0, 0.022),
                bump(-0.22, 0.04, 0.014),
                bump(0.3, 0.28, 0.06),
            ],
            pulse_template: vec![bump(1.0, 0.0, 0.11), bump(0.2, 0.3, 0.1)],
            sbp_range: (110.0, 140.0),
            dbp_range: (60.0, 85.0),
            amplitude_jitter: 0.1,
            noise_std: 0.005,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let (lo, hi) = self.hr_range_bpm;
        if !(40.0..=180.0).contains(&lo) || !(40.0..=180.0).contains(&hi) || lo > hi {
            return bad(format!("hr_range_bpm {:?} must lie within [40, 180]", self.hr_range_bpm));
        }
        if !(self.fs > 0.0) || self.seq_len < 2 {
            return bad("fs and seq_len must be positive".into());
        }
        // At least two beats at the slowest rate.
        if (self.seq_len as f64 / self.fs) < 2.0 * 60.0 / lo {
            return bad(format!(
                "{} samples at {} Hz hold fewer than two beats at {lo} bpm",
                self.seq_len, self.fs
            ));
        }
        if self.sbp_range.0 > self.sbp_range.1 || self.dbp_range.0 > self.dbp_range.1 || self.dbp_range.1 >= self.sbp_range.0 {
            return bad("pressure ranges must be ordered with diastolic below systolic".into());
        }
        if self.rr_jitter < 0.0 || self.amplitude_jitter < 0.0 || self.noise_std < 0.0 {
            return bad("jitter and noise levels must be non-negative".into());
        }
        Ok(())
    }
}

fn uniform<R: Rng>(range: (f64, f64), rng: &mut R) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0..range.1)
    }
}

fn template(t: f64, beats: &[f64], delay: f64, bumps: &[Bump]) -> f64 {
    let mut v = 0.0;
    for &b in beats {
        for k in bumps {
            let d = t - (b + delay + k.offset);
            if d.abs() < 6.0 * k.width {
                v += k.amplitude * (-0.5 * (d / k.width).powi(2)).exp();
            }
        }
    }
    v
}

/// Beat times covering `[-2 s, duration + 2 s]` with a random phase.
fn beat_times<R: Rng>(rr: f64, jitter: f64, duration: f64, rng: &mut R) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, jitter.max(0.0)).map_err(|e| Error::param(e.to_string()))?;
    let mut t = -2.0 - rng.random_range(0.0..rr);
    let mut beats = Vec::new();
    while t < duration + 2.0 {
        beats.push(t);
        t += rr * (1.0 + normal.sample(rng)).max(0.5);
    }
    Ok(beats)
}

/// Per-segment ground-truth parameters, useful for oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTruth {
    pub hr_bpm: f64,
    pub beats: Vec<f64>,
    pub sbp: f64,
    pub dbp: f64,
}

/// Generates one aligned (PPG, ECG, BP) segment: PPG and ECG in raw units,
/// BP in mmHg.
pub fn synth_segment<R: Rng>(cfg: &SynthConfig, id: usize, rng: &mut R) -> Result<(AlignedSegment, SegmentTruth)> {
    let duration = cfg.seq_len as f64 / cfg.fs;
    let hr = uniform(cfg.hr_range_bpm, rng);
    let beats = beat_times(60.0 / hr, cfg.rr_jitter, duration, rng)?;
    let sbp = uniform(cfg.sbp_range, rng);
    let dbp = uniform(cfg.dbp_range, rng);
    let a_ecg = 1.0 + cfg.amplitude_jitter * rng.random_range(-1.0..1.0);
    let a_ppg = 1.0 + cfg.amplitude_jitter * rng.random_range(-1.0..1.0);
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::param(e.to_string()))?;
    let times: Vec<f64> = (0..cfg.seq_len).map(|i| i as f64 / cfg.fs).collect();
    let ecg: Vec<f64> = times
        .iter()
        .map(|&t| a_ecg * template(t, &beats, 0.0, &cfg.ecg_template) + noise.sample(rng))
        .collect();
    let ppg: Vec<f64> = times
        .iter()
        .map(|&t| a_ppg * template(t, &beats, cfg.pulse_transit_s, &cfg.pulse_template) + noise.sample(rng))
        .collect();
    // The pressure wave is the pulse template rescaled so its highest peak
    // reaches the systolic value and its lowest trough the diastolic value.
    let wave: Vec<f64> = times
        .iter()
        .map(|&t| template(t, &beats, cfg.pressure_delay_s, &cfg.pulse_template))
        .collect();
    let lo = wave.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = wave.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(f64::EPSILON);
    let bp: Vec<f64> = wave
        .iter()
        .map(|&w| dbp + (sbp - dbp) * ((w - lo) / span + noise.sample(rng)))
        .collect();
    let seg = AlignedSegment {
        id,
        offset: 0,
        signals: vec![
            SignalSegment::new(ppg, cfg.fs, Modality::Ppg, UnitSpace::Raw),
            SignalSegment::new(ecg, cfg.fs, Modality::Ecg, UnitSpace::Raw),
            SignalSegment::new(bp, cfg.fs, Modality::Bp, UnitSpace::Mmhg),
        ],
    };
    Ok((
        seg,
        SegmentTruth {
            hr_bpm: hr,
            beats,
            sbp,
            dbp,
        },
    ))
}

/// `n_segments` independent segments; deterministic in `cfg.seed`.
pub fn synth_trimodal(cfg: &SynthConfig) -> Result<Vec<AlignedSegment>> {
    Ok(synth_with_truth(cfg)?.into_iter().map(|(s, _)| s).collect())
}

pub fn synth_with_truth(cfg: &SynthConfig) -> Result<Vec<(AlignedSegment, SegmentTruth)>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.n_segments).map(|id| synth_segment(cfg, id, &mut rng)).collect()
}
