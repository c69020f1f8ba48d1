//! Curriculum training: phases with a growing number of condition
//! modalities, task-homogeneous batches and the noise-prediction loss.

mod batch;
mod curriculum;
mod optim;

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::model::{forward_backward, save_checkpoint, ModelConfig, ModelParams};
use crate::signals::AlignedSegment;
use crate::tasks::TaskSpec;

pub use batch::{build_training_batch, condition_slots, degrade, DegradedCondition, Degradation, TrainingBatch};
pub use curriculum::{effective_mixture, lr_at_epoch, sample_task, Ablations, CurriculumConfig};
pub use optim::{clip_grad_norm, grad_norm, Optimizer, OptimizerConfig};

/// One optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iter: usize,
    pub epoch: usize,
    pub phase: usize,
    pub lr: f64,
    pub task: String,
    pub loss: f64,
}

impl TrainRecord {
    pub const CSV_HEADER: &'static str = "iter,epoch,phase,lr,task,loss";

    pub fn csv_row(&self) -> String {
        // Task names contain commas, so the field is quoted.
        format!("{},{},{},{:e},\"{}\",{}", self.iter, self.epoch, self.phase, self.lr, self.task, self.loss)
    }
}

/// Mean loss per epoch, in epoch order.
pub fn epoch_means(records: &[TrainRecord]) -> Vec<f64> {
    let n = records.iter().map(|r| r.epoch + 1).max().unwrap_or(0);
    let mut sum = vec![0.0; n];
    let mut cnt = vec![0usize; n];
    for r in records {
        sum[r.epoch] += r.loss;
        cnt[r.epoch] += 1;
    }
    sum.iter().zip(&cnt).map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN }).collect()
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Phase-boundary checkpoints `phase{p}.uckpt`, the final `final.uckpt`
    /// and, on divergence, `last_good.uckpt` are written here.
    pub checkpoint_dir: Option<PathBuf>,
    /// Stop after this (one-based) phase.
    pub stop_after_phase: Option<usize>,
    /// Start from these weights instead of a fresh initialization.
    pub init: Option<ModelParams<f32>>,
    /// Training log destination (CSV).
    pub log_path: Option<PathBuf>,
    /// Train every batch on this task instead of sampling the curriculum
    /// (task-specific fine-tuning).
    pub fixed_task: Option<TaskSpec>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub records: Vec<TrainRecord>,
    /// Weights at the end of each completed phase.
    pub phase_params: Vec<ModelParams<f32>>,
}

fn save(dir: &Option<PathBuf>, name: &str, cfg: &ModelConfig, p: &ModelParams<f32>) -> Result<Option<PathBuf>> {
    match dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            let path = d.join(name);
            save_checkpoint(&path, cfg, p)?;
            Ok(Some(path))
        }
        None => Ok(None),
    }
}

/// Runs the curriculum on normalized aligned segments. Deterministic given
/// `seed`.
pub fn train(
    model_cfg: &ModelConfig,
    cur: &CurriculumConfig,
    sched: &NoiseSchedule,
    dataset: &[AlignedSegment],
    seed: u64,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    cur.validate()?;
    if dataset.is_empty() {
        return Err(Error::param("empty training set"));
    }
    if sched.steps() != model_cfg.diffusion_steps {
        return Err(Error::Config(format!(
            "schedule has {} steps but the model expects {}",
            sched.steps(),
            model_cfg.diffusion_steps
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = match &opts.init {
        Some(p) => p.clone(),
        None => ModelParams::<f32>::init(model_cfg, seed),
    };
    let mut opt = Optimizer::new(cur.optimizer, &params);
    let deg = Degradation::from(cur);
    let mut log = match &opts.log_path {
        Some(p) => {
            let mut f = std::io::BufWriter::new(std::fs::File::create(p)?);
            writeln!(f, "{}", TrainRecord::CSV_HEADER)?;
            Some(f)
        }
        None => None,
    };
    let last_phase = opts.stop_after_phase.unwrap_or(cur.k_phases).min(cur.k_phases);
    let mut records = Vec::new();
    let mut phase_params = Vec::new();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut iter = 0;
    for epoch in 0..cur.epochs {
        let phase = cur.phase_of_epoch(epoch);
        if phase > last_phase {
            break;
        }
        let lr = lr_at_epoch(epoch, cur)?;
        order.shuffle(&mut rng);
        for chunk in order.chunks(cur.batch_size) {
            let task = match &opts.fixed_task {
                Some(t) => t.clone(),
                None => sample_task(phase, &mut rng, cur)?,
            };
            let batch = build_training_batch(
                dataset,
                chunk,
                &task,
                sched,
                &deg,
                model_cfg,
                cur.ablations.disable_tam,
                &mut rng,
            )?;
            let step = forward_backward(&params, model_cfg, &task, &batch.mask, &batch.input, &batch.eps);
            let (loss, mut grads) = match step {
                Ok(v) if v.0.is_finite() => v,
                Ok((loss, _)) => return Err(diverged(iter, &format!("loss {loss}"), opts, model_cfg, &params)),
                Err(Error::NonFinite(m)) => return Err(diverged(iter, &m, opts, model_cfg, &params)),
                Err(e) => return Err(e),
            };
            if let Some(c) = cur.grad_clip {
                clip_grad_norm(&mut grads, c);
            }
            opt.step(&mut params, &grads, lr);
            let rec = TrainRecord {
                iter,
                epoch,
                phase,
                lr,
                task: task.name(),
                loss,
            };
            if let Some(f) = log.as_mut() {
                writeln!(f, "{}", rec.csv_row())?;
            }
            log::debug!("{}", rec.csv_row());
            records.push(rec);
            iter += 1;
        }
        if epoch + 1 == cur.phase_end(phase) {
            let means = epoch_means(&records);
            log::info!("phase {phase} done at epoch {epoch}: epoch loss {:.4}", means[epoch]);
            save(&opts.checkpoint_dir, &format!("phase{phase}.uckpt"), model_cfg, &params)?;
            phase_params.push(params.clone());
        }
    }
    save(&opts.checkpoint_dir, "final.uckpt", model_cfg, &params)?;
    if let Some(mut f) = log {
        f.flush()?;
    }
    Ok(TrainOutcome {
        params,
        records,
        phase_params,
    })
}

fn diverged(iter: usize, what: &str, opts: &TrainOptions, cfg: &ModelConfig, params: &ModelParams<f32>) -> Error {
    let saved = save(&opts.checkpoint_dir, "last_good.uckpt", cfg, params)
        .ok()
        .flatten()
        .map(|p: PathBuf| format!("; last good weights in {}", p.display()))
        .unwrap_or_default();
    Error::Diverged {
        iter,
        reason: format!("{what}{saved}"),
    }
}

/// Reads a training log written by [`train`].
pub fn read_log(path: &Path) -> Result<Vec<TrainRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(TrainRecord::CSV_HEADER) {
        return Err(Error::Format("missing training log header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let bad = || Error::Format(format!("bad log line: {l}"));
            let f: Vec<&str> = l.splitn(5, ',').collect();
            if f.len() != 5 {
                return Err(bad());
            }
            let (task, loss) = f[4].rsplit_once(',').ok_or_else(bad)?;
            let task = task.strip_prefix('"').and_then(|t| t.strip_suffix('"')).ok_or_else(bad)?;
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(TrainRecord {
                iter: num(f[0])? as usize,
                epoch: num(f[1])? as usize,
                phase: num(f[2])? as usize,
                lr: num(f[3])?,
                task: task.to_string(),
                loss: num(loss)?,
            })
        })
        .collect()
}
