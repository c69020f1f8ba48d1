//! Conditional sampling: start from Gaussian noise in the generation slot and
//! walk the reverse chain with DDIM or DDPM updates.

use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diffusion::{ddim_update, ddpm_step, predict_x0, NoiseSchedule, SamplerConfig, SamplerKind};
use crate::error::{check_len, Error, Result};
use crate::model::{build_attention_mask, model_forward, AttentionMask, BatchInput, ModelConfig, ModelParams, N_SLOTS};
use crate::signals::{denormalize, Modality, NormTable, ObservationMask, SignalSegment, UnitSpace};
use crate::tasks::TaskSpec;
use crate::training::condition_slots;

/// Intermediate state after one reverse step.
#[derive(Debug, Clone)]
pub struct StepDump {
    /// Timestep the network was evaluated at.
    pub t: usize,
    /// `(B, L)` clean-signal estimate at this step.
    pub x0_hat: Array2<f64>,
    /// `(B, L)` state after the update.
    pub x_next: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct Generated {
    /// `(B, L)` samples in normalized space.
    pub samples: Array2<f64>,
    /// Network evaluations spent.
    pub nfe: usize,
    pub steps: Vec<StepDump>,
}

/// Options that are not part of the sampler itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct GenerateOptions {
    /// Replace the task mask by the all-zero mask (matches models trained
    /// with the attention-mask ablation).
    pub full_attention: bool,
    pub record_steps: bool,
}

fn check_compatible(cfg: &ModelConfig, sched: &NoiseSchedule, conditions: &Array3<f64>) -> Result<()> {
    if sched.steps() != cfg.diffusion_steps {
        return Err(Error::Config(format!(
            "schedule has {} steps but the model expects {}",
            sched.steps(),
            cfg.diffusion_steps
        )));
    }
    let (_, k, l) = conditions.dim();
    if k != N_SLOTS || l != cfg.seq_len {
        return Err(Error::param(format!(
            "conditions must be (B, {N_SLOTS}, {}), got {:?}",
            cfg.seq_len,
            conditions.dim()
        )));
    }
    Ok(())
}

/// Runs the reverse chain for a batch. `conditions` is `(B, 4, L)` with the
/// condition signals in their slots; the generation slot is overwritten.
/// Deterministic given `sampler.seed` (and, for `eta = 0` DDIM, independent of
/// it apart from the initial noise).
pub fn generate_batch(
    params: &ModelParams<f32>,
    cfg: &ModelConfig,
    sched: &NoiseSchedule,
    task: &TaskSpec,
    conditions: &Array3<f64>,
    sampler: &SamplerConfig,
    opts: GenerateOptions,
) -> Result<Generated> {
    task.validate()?;
    check_compatible(cfg, sched, conditions)?;
    let times = sampler.timesteps(sched.steps())?;
    let mask = if opts.full_attention {
        AttentionMask::full(cfg.seq_len, cfg.neg_mask_value)
    } else {
        build_attention_mask(task, cfg)?
    };
    let (b, _, l) = conditions.dim();
    let gen = task.generation_slot().index();
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let mut x: Vec<Vec<f64>> = (0..b)
        .map(|_| (0..l).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let mut slots = conditions.mapv(|v| v as f32);
    let mut nfe = 0;
    let mut steps = Vec::new();
    for w in times.windows(2) {
        let (t, t_prev) = (w[0], w[1]);
        for (row, xr) in x.iter().enumerate() {
            for j in 0..l {
                slots[[row, gen, j]] = xr[j] as f32;
            }
        }
        let input = BatchInput {
            slots: slots.clone(),
            t: vec![t; b],
        };
        let eps = model_forward(params, cfg, task, &mask, &input)?;
        nfe += 1;
        let mut x0_hat = Array2::zeros((b, l));
        for (row, xr) in x.iter_mut().enumerate() {
            let e: Vec<f64> = eps.row(row).iter().map(|&v| v as f64).collect();
            if opts.record_steps {
                let x0 = predict_x0(xr, &e, t, sched)?;
                x0_hat.row_mut(row).assign(&ndarray::ArrayView1::from(&x0));
            }
            *xr = match sampler.kind {
                SamplerKind::Ddim => ddim_update(xr, &e, t, t_prev, sched, sampler.eta, &mut rng)?,
                SamplerKind::Ddpm => ddpm_step(xr, &e, t, sched, sampler.variance, &mut rng)?,
            };
        }
        if opts.record_steps {
            steps.push(StepDump {
                t,
                x0_hat,
                x_next: rows_to_array(&x, l),
            });
        }
    }
    Ok(Generated {
        samples: rows_to_array(&x, l),
        nfe,
        steps,
    })
}

fn rows_to_array(rows: &[Vec<f64>], l: usize) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), l));
    for (i, r) in rows.iter().enumerate() {
        out.row_mut(i).assign(&ndarray::ArrayView1::from(r));
    }
    out
}

/// Maps a normalized output to its reporting space: BP back to mmHg, PPG and
/// ECG stay in min-max space.
pub fn to_output_space(seg: &SignalSegment, norm: &NormTable) -> Result<SignalSegment> {
    if seg.modality != Modality::Bp {
        return Ok(seg.clone());
    }
    let (mode, stats) = norm
        .get(Modality::Bp)
        .ok_or_else(|| Error::param("no BP normalization stats"))?;
    denormalize(seg, &stats, mode)
}

/// Single-segment generation. `conditions` is parallel to `task.conditions`
/// and must already be normalized.
pub fn generate(
    params: &ModelParams<f32>,
    cfg: &ModelConfig,
    sched: &NoiseSchedule,
    task: &TaskSpec,
    conditions: &[&SignalSegment],
    sampler: &SamplerConfig,
    norm: &NormTable,
) -> Result<(SignalSegment, usize)> {
    let views: Vec<&[f64]> = conditions.iter().map(|s| s.samples.as_slice()).collect();
    let fs = conditions.first().map(|s| s.fs).unwrap_or(1.0);
    for (c, s) in task.conditions.iter().zip(conditions) {
        if c.modality != s.modality {
            return Err(Error::InvalidTask(format!(
                "{task}: condition {} given a {} segment",
                c.modality, s.modality
            )));
        }
    }
    let slots = condition_slots(task, &views, cfg.seq_len)?;
    let cond = slots.insert_axis(ndarray::Axis(0));
    let out = generate_batch(params, cfg, sched, task, &cond, sampler, GenerateOptions::default())?;
    let space = match task.target {
        Modality::Bp => UnitSpace::Zscored,
        _ => UnitSpace::Minmax,
    };
    let seg = SignalSegment::new(out.samples.row(0).to_vec(), fs, task.target, space);
    Ok((to_output_space(&seg, norm)?, out.nfe))
}

/// With `composite`, observed samples come from the condition and only the
/// missing ones from the generation.
pub fn impute_composite(
    generated: &SignalSegment,
    condition: &SignalSegment,
    mask: &ObservationMask,
    composite: bool,
) -> Result<SignalSegment> {
    check_len(generated.len(), mask.len())?;
    check_len(generated.len(), condition.len())?;
    if !composite {
        return Ok(generated.clone());
    }
    let samples = generated
        .samples
        .iter()
        .zip(&condition.samples)
        .zip(&mask.observed)
        .map(|((&g, &c), &o)| if o { c } else { g })
        .collect();
    Ok(generated.with_samples(samples))
}
