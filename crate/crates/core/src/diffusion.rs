//! Noise schedules, closed-form forward marginals and DDPM/DDIM reverse steps.
//!
//! Time indices run over `0..=T`; `alpha_bar(0)` is defined as 1 so the last
//! DDIM step lands on the predicted clean signal.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear,
    Quadratic,
}

/// Reverse-step variance for ancestral sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReverseVariance {
    /// `sigma_t^2 = beta_t`
    #[default]
    Beta,
    /// `sigma_t^2 = (1 - abar_{t-1}) / (1 - abar_t) * beta_t`
    Posterior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// `T` steps of `beta` from `beta_start` to `beta_end`; quadratic spacing
    /// interpolates `sqrt(beta)` linearly.
    pub fn new(t: usize, kind: ScheduleKind, beta_start: f64, beta_end: f64) -> Result<Self> {
        if t == 0 {
            return Err(Error::param("schedule needs T >= 1"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::param(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
            )));
        }
        let frac = |i: usize| if t == 1 { 0.0 } else { i as f64 / (t - 1) as f64 };
        let beta: Vec<f64> = (0..t)
            .map(|i| match kind {
                ScheduleKind::Linear => beta_start + (beta_end - beta_start) * frac(i),
                ScheduleKind::Quadratic => {
                    let (a, b) = (beta_start.sqrt(), beta_end.sqrt());
                    (a + (b - a) * frac(i)).powi(2)
                }
            })
            .collect();
        Self::from_betas(beta)
    }

    /// Default: `T = 50`, quadratic from 1e-4 to 0.5.
    pub fn default_schedule() -> Self {
        Self::new(50, ScheduleKind::Quadratic, 1e-4, 0.5).expect("valid default schedule")
    }

    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() || beta.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(Error::param("every beta must lie in (0, 1)"));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(alpha.len());
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        Ok(Self {
            beta,
            alpha,
            alpha_bar,
        })
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    /// `beta_t` for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// `abar_t` for `t` in `0..=T`, with `abar_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            Err(Error::param(format!("t = {t} outside [1, {}]", self.steps())))
        } else {
            Ok(())
        }
    }

    /// `t,beta,alpha,alpha_bar`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,beta,alpha,alpha_bar\n");
        for t in 1..=self.steps() {
            let _ = writeln!(
                out,
                "{t},{:e},{:e},{:e}",
                self.beta(t),
                self.alpha(t),
                self.alpha_bar(t)
            );
        }
        out
    }
}

/// `x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`
pub fn forward_marginal(x0: &[f64], t: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    sched.check_t(t)?;
    check_len(x0.len(), eps.len())?;
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
}

/// One step of the forward chain `q(x_t | x_{t-1})`.
pub fn forward_step<R: Rng + ?Sized>(
    x_prev: &[f64],
    t: usize,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<Vec<f64>> {
    sched.check_t(t)?;
    let (a, b) = (sched.alpha(t).sqrt(), sched.beta(t).sqrt());
    Ok(x_prev
        .iter()
        .map(|x| a * x + b * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// Mean squared error between predicted and true noise.
pub fn noise_prediction_loss(eps_hat: &[f64], eps: &[f64]) -> f64 {
    debug_assert_eq!(eps_hat.len(), eps.len());
    if eps.is_empty() {
        return 0.0;
    }
    eps_hat
        .iter()
        .zip(eps)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / eps.len() as f64
}

/// Mean of the ancestral step: `(x_t - beta_t / sqrt(1 - abar_t) eps_hat) / sqrt(alpha_t)`.
pub fn ddpm_mean(x_t: &[f64], eps_hat: &[f64], t: usize, sched: &NoiseSchedule) -> Result<Vec<f64>> {
    sched.check_t(t)?;
    check_len(x_t.len(), eps_hat.len())?;
    let coef = sched.beta(t) / (1.0 - sched.alpha_bar(t)).sqrt();
    let inv = 1.0 / sched.alpha(t).sqrt();
    Ok(x_t
        .iter()
        .zip(eps_hat)
        .map(|(x, e)| (x - coef * e) * inv)
        .collect())
}

pub fn ddpm_sigma(t: usize, sched: &NoiseSchedule, variance: ReverseVariance) -> f64 {
    match variance {
        ReverseVariance::Beta => sched.beta(t).sqrt(),
        ReverseVariance::Posterior => {
            let var = (1.0 - sched.alpha_bar(t - 1)) / (1.0 - sched.alpha_bar(t)) * sched.beta(t);
            var.sqrt()
        }
    }
}

/// Ancestral step `x_{t-1} = mu + sigma_t z`; no noise is drawn at `t = 1`.
pub fn ddpm_step<R: Rng + ?Sized>(
    x_t: &[f64],
    eps_hat: &[f64],
    t: usize,
    sched: &NoiseSchedule,
    variance: ReverseVariance,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut mu = ddpm_mean(x_t, eps_hat, t, sched)?;
    if t > 1 {
        let sigma = ddpm_sigma(t, sched, variance);
        for v in mu.iter_mut() {
            *v += sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(mu)
}

/// Predicted clean signal `(x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)`.
pub fn predict_x0(x_t: &[f64], eps_hat: &[f64], t: usize, sched: &NoiseSchedule) -> Result<Vec<f64>> {
    if t > sched.steps() {
        return Err(Error::param(format!("t = {t} outside [0, {}]", sched.steps())));
    }
    check_len(x_t.len(), eps_hat.len())?;
    let ab = sched.alpha_bar(t);
    let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x_t.iter().zip(eps_hat).map(|(x, e)| (x - n * e) / s).collect())
}

/// Deterministic DDIM update from `t` to `t_prev`.
pub fn ddim_step_ode(
    x_t: &[f64],
    eps_hat: &[f64],
    t: usize,
    t_prev: usize,
    sched: &NoiseSchedule,
) -> Result<Vec<f64>> {
    check_ddim_times(t, t_prev, sched)?;
    let x0 = predict_x0(x_t, eps_hat, t, sched)?;
    let ab_prev = sched.alpha_bar(t_prev);
    let (a, b) = (ab_prev.sqrt(), (1.0 - ab_prev).sqrt());
    Ok(x0.iter().zip(eps_hat).map(|(x, e)| a * x + b * e).collect())
}

/// Generalized DDIM update with stochasticity `eta`:
/// `sqrt(abar_prev) x0_hat + sqrt(1 - abar_prev - eta^2) eps_hat + eta z`.
/// With `eta = 0` no random numbers are drawn.
pub fn ddim_step<R: Rng + ?Sized>(
    x_t: &[f64],
    eps_hat: &[f64],
    t: usize,
    t_prev: usize,
    sched: &NoiseSchedule,
    eta: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_ddim_times(t, t_prev, sched)?;
    ddim_update(x_t, eps_hat, t, t_prev, sched, eta, rng)
}

fn check_ddim_times(t: usize, t_prev: usize, sched: &NoiseSchedule) -> Result<()> {
    if !(t_prev < t && t <= sched.steps()) {
        return Err(Error::param(format!(
            "DDIM step needs 0 <= t_prev < t <= T, got t = {t}, t_prev = {t_prev}"
        )));
    }
    Ok(())
}

pub(crate) fn ddim_update<R: Rng + ?Sized>(
    x_t: &[f64],
    eps_hat: &[f64],
    t: usize,
    t_prev: usize,
    sched: &NoiseSchedule,
    eta: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(eta >= 0.0) {
        return Err(Error::param(format!("eta must be >= 0, got {eta}")));
    }
    let ab_prev = sched.alpha_bar(t_prev);
    let dir_var = 1.0 - ab_prev - eta * eta;
    if dir_var < 0.0 {
        return Err(Error::param(format!(
            "eta^2 = {} exceeds 1 - abar_prev = {}",
            eta * eta,
            1.0 - ab_prev
        )));
    }
    let x0 = predict_x0(x_t, eps_hat, t, sched)?;
    let (a, b) = (ab_prev.sqrt(), dir_var.sqrt());
    let mut out: Vec<f64> = x0.iter().zip(eps_hat).map(|(x, e)| a * x + b * e).collect();
    if eta > 0.0 {
        for v in out.iter_mut() {
            *v += eta * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(out)
}

/// `n + 1` descending integers linearly spaced from `T` to 0, endpoints
/// included, duplicates collapsed.
pub fn select_subset_timesteps(t_max: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > t_max {
        return Err(Error::param(format!("need 1 <= n <= T, got n = {n}, T = {t_max}")));
    }
    let step = t_max as f64 / n as f64;
    let mut out: Vec<usize> = (0..=n)
        .map(|i| (t_max as f64 - i as f64 * step).round().max(0.0) as usize)
        .collect();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Ddpm,
    Ddim,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub n_steps: usize,
    pub eta: f64,
    pub seed: u64,
    pub variance: ReverseVariance,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            kind: SamplerKind::Ddim,
            n_steps: 6,
            eta: 0.0,
            seed: 0,
            variance: ReverseVariance::Beta,
        }
    }
}

impl SamplerConfig {
    pub fn ddpm(steps: usize, seed: u64) -> Self {
        Self {
            kind: SamplerKind::Ddpm,
            n_steps: steps,
            seed,
            ..Default::default()
        }
    }

    pub fn ddim(steps: usize, seed: u64) -> Self {
        Self {
            kind: SamplerKind::Ddim,
            n_steps: steps,
            seed,
            ..Default::default()
        }
    }

    /// Time indices at which the network is evaluated, then the terminal 0.
    pub fn timesteps(&self, t_max: usize) -> Result<Vec<usize>> {
        match self.kind {
            SamplerKind::Ddim => select_subset_timesteps(t_max, self.n_steps),
            SamplerKind::Ddpm => {
                if self.n_steps != t_max {
                    return Err(Error::param(format!(
                        "DDPM runs every step: n_steps must equal T = {t_max}, got {}",
                        self.n_steps
                    )));
                }
                Ok((0..=t_max).rev().collect())
            }
        }
    }
}
