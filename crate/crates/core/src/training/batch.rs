//! Task-homogeneous training batches.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::StandardNormal;

use super::curriculum::CurriculumConfig;
use crate::diffusion::{forward_marginal, NoiseSchedule};
use crate::error::{Error, Result};
use crate::model::{build_attention_mask, AttentionMask, BatchInput, ModelConfig, N_SLOTS};
use crate::signals::{add_noise_at_snr, apply_mask, gen_gap_mask, AlignedSegment, Modality, ObservationMask, SignalSegment};
use crate::tasks::{ConditionKind, TaskSpec};

/// How degraded conditions are produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Degradation {
    pub snr_db: (f64, f64),
    pub gap_fraction: (f64, f64),
}

impl From<&CurriculumConfig> for Degradation {
    fn from(c: &CurriculumConfig) -> Self {
        Degradation {
            snr_db: c.snr_db,
            gap_fraction: c.gap_fraction,
        }
    }
}

/// A condition as fed to the network plus, for imputation, its gap mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradedCondition {
    pub segment: SignalSegment,
    pub mask: Option<ObservationMask>,
}

/// Builds the condition of kind `kind` from a clean segment.
pub fn degrade<R: Rng + ?Sized>(
    clean: &SignalSegment,
    kind: ConditionKind,
    deg: &Degradation,
    rng: &mut R,
) -> Result<DegradedCondition> {
    match kind {
        ConditionKind::Clean => Ok(DegradedCondition {
            segment: clean.clone(),
            mask: None,
        }),
        ConditionKind::Noisy => {
            let (lo, hi) = deg.snr_db;
            let snr = if lo == hi { lo } else { rng.random_range(lo..=hi) };
            Ok(DegradedCondition {
                segment: add_noise_at_snr(clean, snr, rng)?,
                mask: None,
            })
        }
        ConditionKind::Masked => {
            let mask = gen_gap_mask(clean.len(), deg.gap_fraction, rng)?;
            Ok(DegradedCondition {
                segment: apply_mask(clean, &mask)?,
                mask: Some(mask),
            })
        }
    }
}

/// Places condition signals into their slots; everything else stays zero.
/// `conditions` is parallel to `task.conditions`.
pub fn condition_slots(task: &TaskSpec, conditions: &[&[f64]], seq_len: usize) -> Result<Array2<f64>> {
    if conditions.len() != task.conditions.len() {
        return Err(Error::InvalidTask(format!(
            "{task} needs {} condition signals, got {}",
            task.conditions.len(),
            conditions.len()
        )));
    }
    let mut slots = Array2::zeros((N_SLOTS, seq_len));
    for (c, x) in task.conditions.iter().zip(conditions) {
        crate::error::check_len(seq_len, x.len())?;
        slots.row_mut(c.modality.index()).assign(&ndarray::ArrayView1::from(*x));
    }
    Ok(slots)
}

#[derive(Debug, Clone)]
pub struct TrainingBatch {
    pub task: TaskSpec,
    pub mask: AttentionMask,
    pub input: BatchInput<f32>,
    /// `(B, L)` noise that produced the generation-slot input.
    pub eps: Array2<f32>,
    /// `(B, L)` clean target.
    pub x0: Array2<f64>,
    /// Whether any condition went through a degradation constructor.
    pub degraded: bool,
}

fn target_of<'a>(seg: &'a AlignedSegment, m: Modality) -> Result<&'a SignalSegment> {
    seg.get(m)
        .ok_or_else(|| Error::InvalidTask(format!("segment {} has no {} channel", seg.id, m.name())))
}

/// Draws `t ~ U{1..T}` and `eps ~ N(0, I)` per sample, noises the target into
/// the generation slot and fills the condition slots.
pub fn build_training_batch<R: Rng + ?Sized>(
    dataset: &[AlignedSegment],
    indices: &[usize],
    task: &TaskSpec,
    sched: &NoiseSchedule,
    deg: &Degradation,
    cfg: &ModelConfig,
    full_attention: bool,
    rng: &mut R,
) -> Result<TrainingBatch> {
    if indices.is_empty() {
        return Err(Error::param("empty batch"));
    }
    let l = cfg.seq_len;
    let b = indices.len();
    let gen_slot = task.generation_slot().index();
    let mut slots = Array3::<f32>::zeros((b, N_SLOTS, l));
    let mut eps = Array2::<f32>::zeros((b, l));
    let mut x0 = Array2::<f64>::zeros((b, l));
    let mut ts = Vec::with_capacity(b);
    let mut degraded = false;
    for (row, &i) in indices.iter().enumerate() {
        let seg = dataset
            .get(i)
            .ok_or_else(|| Error::param(format!("segment index {i} out of range")))?;
        let target = target_of(seg, task.target)?;
        crate::error::check_len(l, target.len())?;
        let mut conds = Vec::with_capacity(task.conditions.len());
        for c in &task.conditions {
            let d = degrade(target_of(seg, c.modality)?, c.kind, deg, rng)?;
            degraded |= c.kind != ConditionKind::Clean;
            conds.push(d.segment.samples);
        }
        let views: Vec<&[f64]> = conds.iter().map(|v| v.as_slice()).collect();
        let cs = condition_slots(task, &views, l)?;
        let t = rng.random_range(1..=sched.steps());
        let e: Vec<f64> = (0..l).map(|_| rng.sample(StandardNormal)).collect();
        let xt = forward_marginal(&target.samples, t, &e, sched)?;
        for s in 0..N_SLOTS {
            for j in 0..l {
                slots[[row, s, j]] = cs[[s, j]] as f32;
            }
        }
        for j in 0..l {
            slots[[row, gen_slot, j]] = xt[j] as f32;
            eps[[row, j]] = e[j] as f32;
            x0[[row, j]] = target.samples[j];
        }
        ts.push(t);
    }
    let mask = if full_attention {
        AttentionMask::full(l, cfg.neg_mask_value)
    } else {
        build_attention_mask(task, cfg)?
    };
    Ok(TrainingBatch {
        task: task.clone(),
        mask,
        input: BatchInput { slots, t: ts },
        eps,
        x0,
        degraded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::UnitSpace;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dataset(n: usize, l: usize) -> Vec<AlignedSegment> {
        (0..n)
            .map(|id| AlignedSegment {
                id,
                offset: 0,
                signals: Modality::PHYSICAL
                    .iter()
                    .enumerate()
                    .map(|(k, &m)| {
                        let x = (0..l).map(|j| ((j + id) as f64 * 0.3 + k as f64).sin()).collect();
                        SignalSegment::new(x, 32.0, m, UnitSpace::Minmax)
                    })
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn translation_batch_layout() {
        let cfg = ModelConfig::tiny();
        let data = dataset(4, cfg.seq_len);
        let sched = NoiseSchedule::default_schedule();
        let deg = Degradation::from(&CurriculumConfig::default());
        let task = TaskSpec::parse("trans:ECG|cond:PPG").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = build_training_batch(&data, &[2, 0], &task, &sched, &deg, &cfg, false, &mut rng).unwrap();
        assert!(!b.degraded);
        for (row, &i) in [2usize, 0].iter().enumerate() {
            let ppg = &data[i].get(Modality::Ppg).unwrap().samples;
            let ecg = &data[i].get(Modality::Ecg).unwrap().samples;
            for j in 0..cfg.seq_len {
                assert_eq!(b.input.slots[[row, 0, j]], ppg[j] as f32);
                assert_eq!(b.input.slots[[row, 2, j]], 0.0);
                assert_eq!(b.input.slots[[row, 3, j]], 0.0);
            }
            let e: Vec<f64> = b.eps.row(row).iter().map(|&v| v as f64).collect();
            let xt = forward_marginal(ecg, b.input.t[row], &e, &sched).unwrap();
            for j in 0..cfg.seq_len {
                assert!((b.input.slots[[row, 1, j]] as f64 - xt[j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn imputation_batch_zero_fills_gap() {
        let cfg = ModelConfig::tiny();
        let data = dataset(2, cfg.seq_len);
        let sched = NoiseSchedule::default_schedule();
        let deg = Degradation {
            snr_db: (15.0, 15.0),
            gap_fraction: (0.5, 0.5),
        };
        let task = TaskSpec::parse("imp:BP|cond:BP~mask").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = build_training_batch(&data, &[1], &task, &sched, &deg, &cfg, false, &mut rng).unwrap();
        assert!(b.degraded);
        let bp = &data[1].get(Modality::Bp).unwrap().samples;
        let zeros = (0..cfg.seq_len)
            .filter(|&j| b.input.slots[[0, 2, j]] == 0.0 && bp[j] != 0.0)
            .count();
        assert_eq!(zeros, cfg.seq_len / 2);
        assert!(b.input.slots.slice(ndarray::s![0, 0..2, ..]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn timesteps_are_uniform() {
        let cfg = ModelConfig {
            seq_len: 4,
            ..ModelConfig::tiny()
        };
        let data = dataset(1, 4);
        let sched = NoiseSchedule::default_schedule();
        let deg = Degradation::from(&CurriculumConfig::default());
        let task = TaskSpec::parse("trans:PPG|cond:BP").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts = vec![0usize; 51];
        let idx = vec![0usize; 100];
        for _ in 0..100 {
            let b = build_training_batch(&data, &idx, &task, &sched, &deg, &cfg, false, &mut rng).unwrap();
            for t in b.input.t {
                counts[t] += 1;
            }
        }
        assert_eq!(counts[0], 0);
        let expected = 10_000.0 / 50.0;
        let chi2: f64 = counts[1..].iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99th percentile of chi-square with 49 degrees of freedom.
        assert!(chi2 < 74.92, "chi2 = {chi2}");
    }
}
