//! Phase structure, learning-rate schedule and task sampling of the
//! continual-learning curriculum.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::optim::OptimizerConfig;
use crate::error::{Error, Result};
use crate::signals::Modality;
use crate::tasks::{TaskFamily, TaskSpec};

/// Switches that remove one curriculum ingredient each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablations {
    /// Constant first learning rate throughout.
    pub disable_lrs: bool,
    /// Each phase trains only on the condition count it introduces.
    pub disable_tbc: bool,
    /// All-zero attention masks (every token sees every token).
    pub disable_tam: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumConfig {
    /// Total epochs `e`.
    pub epochs: usize,
    pub k_phases: usize,
    /// Initial, middle and final learning rate.
    pub lr_values: [f64; 3],
    /// The first drop happens at `lr_drop_fraction * e / k`.
    pub lr_drop_fraction: f64,
    /// Per phase: probabilities of 1, 2 and 3 conditions.
    pub phase_mixtures: Vec<[f64; 3]>,
    /// Per phase: probability that a one- or two-condition draw is a
    /// restoration task (three-condition tasks are always restoration).
    pub task_type_threshold: Vec<f64>,
    /// Probability that a restoration task is denoising rather than imputation.
    pub denoise_fraction: f64,
    pub batch_size: usize,
    /// SNR range (dB) of noisy conditions.
    pub snr_db: (f64, f64),
    /// Range of the missing fraction of imputation conditions.
    pub gap_fraction: (f64, f64),
    pub optimizer: OptimizerConfig,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    #[serde(skip)]
    pub ablations: Ablations,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            k_phases: 4,
            lr_values: [1e-3, 1e-4, 1e-5],
            lr_drop_fraction: 0.7,
            phase_mixtures: vec![
                [1.0, 0.0, 0.0],
                [0.5, 0.5, 0.0],
                [0.25, 0.25, 0.5],
                [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            ],
            task_type_threshold: vec![0.5; 4],
            denoise_fraction: 0.5,
            batch_size: 16,
            snr_db: (15.0, 15.0),
            gap_fraction: (0.1, 0.5),
            optimizer: OptimizerConfig::default(),
            grad_clip: None,
            ablations: Ablations::default(),
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.k_phases == 0 || self.batch_size == 0 {
            return bad("epochs, k_phases and batch_size must be positive".into());
        }
        if self.epochs < self.k_phases {
            return bad(format!("{} epochs cannot hold {} phases", self.epochs, self.k_phases));
        }
        if self.phase_mixtures.len() != self.k_phases || self.task_type_threshold.len() != self.k_phases {
            return bad("phase_mixtures and task_type_threshold need one entry per phase".into());
        }
        for (i, m) in self.phase_mixtures.iter().enumerate() {
            let s: f64 = m.iter().sum();
            if m.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (s - 1.0).abs() > 1e-9 {
                return bad(format!("phase {} mixture {m:?} is not a distribution", i + 1));
            }
        }
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if !self.task_type_threshold.iter().all(|&p| unit(p)) || !unit(self.denoise_fraction) {
            return bad("probabilities must lie in [0, 1]".into());
        }
        if !unit(self.lr_drop_fraction) || self.lr_values.iter().any(|&v| !(v > 0.0)) {
            return bad("invalid learning-rate schedule".into());
        }
        let (lo, hi) = self.gap_fraction;
        if !(lo > 0.0 && hi < 1.0 && lo <= hi) {
            return bad(format!("gap_fraction {:?} outside (0, 1)", self.gap_fraction));
        }
        if !(self.snr_db.0 <= self.snr_db.1) {
            return bad(format!("snr_db range {:?} is empty", self.snr_db));
        }
        Ok(())
    }

    /// Length of one phase in epochs, `e / k`.
    fn phase_len(&self) -> f64 {
        self.epochs as f64 / self.k_phases as f64
    }

    /// One-based phase of a zero-based epoch.
    pub fn phase_of_epoch(&self, epoch: usize) -> usize {
        ((epoch as f64 / self.phase_len()).floor() as usize + 1).min(self.k_phases)
    }

    /// Last epoch (exclusive) of a one-based phase.
    pub fn phase_end(&self, phase: usize) -> usize {
        (0..self.epochs)
            .find(|&e| self.phase_of_epoch(e) > phase)
            .unwrap_or(self.epochs)
    }
}

/// Learning rate of a zero-based epoch: the first value until
/// `lr_drop_fraction * e / k`, the second until `e - e / k`, then the third.
pub fn lr_at_epoch(epoch: usize, cfg: &CurriculumConfig) -> Result<f64> {
    if epoch >= cfg.epochs {
        return Err(Error::param(format!("epoch {epoch} outside [0, {})", cfg.epochs)));
    }
    if cfg.ablations.disable_lrs {
        return Ok(cfg.lr_values[0]);
    }
    let e = epoch as f64;
    let len = cfg.phase_len();
    Ok(if e < cfg.lr_drop_fraction * len {
        cfg.lr_values[0]
    } else if e < cfg.epochs as f64 - len {
        cfg.lr_values[1]
    } else {
        cfg.lr_values[2]
    })
}

/// Condition-count probabilities actually used in `phase`, after ablations.
pub fn effective_mixture(phase: usize, cfg: &CurriculumConfig) -> Result<[f64; 3]> {
    if phase == 0 || phase > cfg.k_phases {
        return Err(Error::param(format!("phase {phase} outside [1, {}]", cfg.k_phases)));
    }
    let mix = cfg.phase_mixtures[phase - 1];
    if !cfg.ablations.disable_tbc {
        return Ok(mix);
    }
    // Without batch composition only the largest condition count present in
    // the phase is trained; later phases that add nothing new keep it.
    let newest = (0..3).rev().find(|&i| mix[i] > 0.0).unwrap_or(0);
    let mut out = [0.0; 3];
    out[newest] = 1.0;
    Ok(out)
}

fn pick<R: Rng + ?Sized, T: Copy>(items: &[T], rng: &mut R) -> T {
    items[rng.random_range(0..items.len())]
}

/// Draws one task for a training batch of `phase` (one-based).
pub fn sample_task<R: Rng + ?Sized>(phase: usize, rng: &mut R, cfg: &CurriculumConfig) -> Result<TaskSpec> {
    let mix = effective_mixture(phase, cfg)?;
    let u: f64 = rng.random();
    let n_cond = if u < mix[0] {
        1
    } else if u < mix[0] + mix[1] {
        2
    } else {
        3
    };
    let target = pick(&Modality::PHYSICAL, rng);
    let others: Vec<Modality> = Modality::PHYSICAL.iter().copied().filter(|&m| m != target).collect();
    let restoration = n_cond == 3 || rng.random::<f64>() < cfg.task_type_threshold[phase - 1];
    if restoration {
        let family = if rng.random::<f64>() < cfg.denoise_fraction {
            TaskFamily::Denoising
        } else {
            TaskFamily::Imputation
        };
        let extra: Vec<Modality> = match n_cond {
            1 => vec![],
            2 => vec![pick(&others, rng)],
            _ => others,
        };
        TaskSpec::restoration(target, family, &extra)
    } else {
        let sources = match n_cond {
            1 => vec![pick(&others, rng)],
            _ => others,
        };
        TaskSpec::translation(target, &sources)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn eight_hundred_epochs() -> CurriculumConfig {
        CurriculumConfig {
            epochs: 800,
            ..Default::default()
        }
    }

    #[test]
    fn lr_breakpoints() {
        let c = eight_hundred_epochs();
        let lr = |e| lr_at_epoch(e, &c).unwrap();
        assert_eq!(lr(0), 1e-3);
        assert_eq!(lr(139), 1e-3);
        assert_eq!(lr(140), 1e-4);
        assert_eq!(lr(599), 1e-4);
        assert_eq!(lr(600), 1e-5);
        assert_eq!(lr(799), 1e-5);
        assert!(lr_at_epoch(800, &c).is_err());
        let mut flat = eight_hundred_epochs();
        flat.ablations.disable_lrs = true;
        assert_eq!(lr_at_epoch(700, &flat).unwrap(), 1e-3);
    }

    #[test]
    fn lr_is_non_increasing() {
        let c = eight_hundred_epochs();
        let trace: Vec<f64> = (0..800).map(|e| lr_at_epoch(e, &c).unwrap()).collect();
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn phases() {
        let c = CurriculumConfig::default();
        assert_eq!(c.phase_of_epoch(0), 1);
        assert_eq!(c.phase_of_epoch(9), 1);
        assert_eq!(c.phase_of_epoch(10), 2);
        assert_eq!(c.phase_of_epoch(39), 4);
        assert_eq!(c.phase_end(1), 10);
        assert_eq!(c.phase_end(4), 40);
    }

    #[test]
    fn phase_one_has_single_conditions() {
        let c = CurriculumConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..2000 {
            assert_eq!(sample_task(1, &mut rng, &c).unwrap().n_conditions(), 1);
        }
    }

    #[test]
    fn tbc_ablation_uses_newest_count() {
        let mut c = CurriculumConfig::default();
        c.ablations.disable_tbc = true;
        assert_eq!(effective_mixture(2, &c).unwrap(), [0.0, 1.0, 0.0]);
        assert_eq!(effective_mixture(3, &c).unwrap(), [0.0, 0.0, 1.0]);
        assert_eq!(effective_mixture(4, &c).unwrap(), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn config_validation() {
        assert!(CurriculumConfig::default().validate().is_ok());
        let mut c = CurriculumConfig::default();
        c.phase_mixtures[1] = [0.5, 0.6, 0.0];
        assert!(c.validate().is_err());
        let mut c = CurriculumConfig::default();
        c.k_phases = 3;
        assert!(c.validate().is_err());
    }
}
