//! Unified multi-modal conditional diffusion transformer for cardiovascular
//! signals (PPG, ECG, BP).
//!
//! One network handles all 33 restoration (denoising, imputation) and
//! translation tasks over the three modalities. Task-specific attention masks
//! select which modality slots exchange information, an auxiliary slot carries
//! the diffusion state when the target slot holds its own degraded copy, and a
//! four-phase curriculum introduces tasks with one, two and three conditions.
//!
//! Crate layout:
//! - [`signals`]: filtering, entropy gating, normalization, degradations, splits
//! - [`diffusion`]: noise schedules, forward marginals, DDPM/DDIM reverse steps
//! - [`tasks`]: the 33 task specs and slot assignment
//! - [`model`]: encoders, masked transformer modules, decoders, backprop
//! - [`training`]: curriculum, batch construction, optimizers, training loop
//! - [`generation`]: subset-step sampling for any task
//! - [`metrics`]: RMSE/MAE, shift-tolerant variants, KS, SNR, confusion ratios
//! - [`synthdata`]: coupled tri-modal synthetic corpus
//! - [`cli`]: file formats, config, manifests, SVG plots, subcommands

pub mod cli;
pub mod diffusion;
pub mod error;
pub mod generation;
pub mod metrics;
pub mod model;
pub mod real;
pub mod signals;
pub mod synthdata;
pub mod tasks;
pub mod training;

pub use error::{Error, Result};
pub use real::Real;
pub use signals::{Modality, SignalSegment, UnitSpace};
pub use tasks::{TaskFamily, TaskSpec};
