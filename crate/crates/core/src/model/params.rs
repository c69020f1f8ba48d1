//! Learnable tensors and their named, ordered view.

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::embed::sinusoid_table;
use super::{ModelConfig, N_SLOTS};
use crate::real::Real;
use crate::signals::Modality;
use crate::tasks::TaskSpec;

/// Affine map `y = x w + b` with `w` of shape `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
}

impl<T: Real> Linear<T> {
    fn init<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Linear {
            w: Array2::from_shape_fn((fan_in, fan_out), |_| T::lit(rng.random_range(-bound..bound))),
            b: Array1::from_shape_fn(fan_out, |_| T::lit(rng.random_range(-bound..bound))),
        }
    }

    fn zeros_like(&self) -> Self {
        Linear {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }
}

/// One convolution per kernel size; kernel `j` has weights `(k_j, C / n_kernels)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T> {
    pub kernels: Vec<Linear<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModuleParams<T> {
    pub wq: Array2<T>,
    pub wk: Array2<T>,
    pub wv: Array2<T>,
    pub out: Linear<T>,
    /// `C -> 2C` before the gate.
    pub f1: Linear<T>,
    /// `C -> 2C` after the gate: residual and skip halves.
    pub f2: Linear<T>,
}

/// Two affine layers with a ReLU between: `C -> C -> 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams<T> {
    pub l1: Linear<T>,
    pub l2: Linear<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    /// Indexed by slot; AM has its own encoder.
    pub encoders: Vec<EncoderParams<T>>,
    /// `(T + 1, C)`, row `t` is the diffusion step embedding.
    pub diffusion_table: Array2<T>,
    /// Sinusoidal position code (`C` wide) to `2C`.
    pub time_proj: Linear<T>,
    pub modules: Vec<ModuleParams<T>>,
    pub f3: Linear<T>,
    /// PPG, ECG, BP. AM has no decoder of its own.
    pub decoders: Vec<DecoderParams<T>>,
}

impl<T: Real> ModelParams<T> {
    /// Uniform `±1/sqrt(fan_in)` weights; the diffusion table starts from a
    /// sinusoidal code of the step index and is trained from there.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = cfg.channels;
        let cpk = cfg.channels_per_kernel();
        let encoders = (0..N_SLOTS)
            .map(|_| EncoderParams {
                kernels: cfg
                    .kernel_sizes
                    .iter()
                    .map(|&k| Linear::init(k, cpk, &mut rng))
                    .collect(),
            })
            .collect();
        let steps: Vec<f64> = (0..=cfg.diffusion_steps).map(|t| t as f64).collect();
        let diffusion_table = sinusoid_table(&steps, c, 100.0).mapv(T::lit);
        let time_proj = Linear::init(c, 2 * c, &mut rng);
        let modules = (0..cfg.n_modules)
            .map(|_| {
                let bound = 1.0 / (c as f64).sqrt();
                let mut sq = || Array2::from_shape_fn((c, c), |_| T::lit(rng.random_range(-bound..bound)));
                let (wq, wk, wv) = (sq(), sq(), sq());
                ModuleParams {
                    wq,
                    wk,
                    wv,
                    out: Linear::init(c, c, &mut rng),
                    f1: Linear::init(c, 2 * c, &mut rng),
                    f2: Linear::init(c, 2 * c, &mut rng),
                }
            })
            .collect();
        let f3 = Linear::init(c, c, &mut rng);
        let decoders = (0..3)
            .map(|_| DecoderParams {
                l1: Linear::init(c, c, &mut rng),
                l2: Linear::init(c, 1, &mut rng),
            })
            .collect();
        ModelParams {
            encoders,
            diffusion_table,
            time_proj,
            modules,
            f3,
            decoders,
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            encoders: self
                .encoders
                .iter()
                .map(|e| EncoderParams {
                    kernels: e.kernels.iter().map(Linear::zeros_like).collect(),
                })
                .collect(),
            diffusion_table: Array2::zeros(self.diffusion_table.raw_dim()),
            time_proj: self.time_proj.zeros_like(),
            modules: self
                .modules
                .iter()
                .map(|m| ModuleParams {
                    wq: Array2::zeros(m.wq.raw_dim()),
                    wk: Array2::zeros(m.wk.raw_dim()),
                    wv: Array2::zeros(m.wv.raw_dim()),
                    out: m.out.zeros_like(),
                    f1: m.f1.zeros_like(),
                    f2: m.f2.zeros_like(),
                })
                .collect(),
            f3: self.f3.zeros_like(),
            decoders: self
                .decoders
                .iter()
                .map(|d| DecoderParams {
                    l1: d.l1.zeros_like(),
                    l2: d.l2.zeros_like(),
                })
                .collect(),
        }
    }

    /// Decoder applied to a slot's rows: physical slots use their own, AM is
    /// bound by reference to the decoder of the task's target modality.
    pub fn decoder_for(&self, slot: Modality, task: &TaskSpec) -> &DecoderParams<T> {
        let m = if slot == Modality::Am { task.target } else { slot };
        &self.decoders[m.index()]
    }

    /// Every tensor with a stable dotted name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        let mut out: Vec<(String, ArrayViewD<'_, T>)> = Vec::new();
        for (s, e) in self.encoders.iter().enumerate() {
            let slot = Modality::SLOTS[s].name();
            for (j, k) in e.kernels.iter().enumerate() {
                out.push((format!("encoder.{slot}.conv{j}.w"), k.w.view().into_dyn()));
                out.push((format!("encoder.{slot}.conv{j}.b"), k.b.view().into_dyn()));
            }
        }
        out.push(("diffusion_table".into(), self.diffusion_table.view().into_dyn()));
        out.push(("time_proj.w".into(), self.time_proj.w.view().into_dyn()));
        out.push(("time_proj.b".into(), self.time_proj.b.view().into_dyn()));
        for (i, m) in self.modules.iter().enumerate() {
            out.push((format!("module{i}.wq"), m.wq.view().into_dyn()));
            out.push((format!("module{i}.wk"), m.wk.view().into_dyn()));
            out.push((format!("module{i}.wv"), m.wv.view().into_dyn()));
            for (n, l) in [("out", &m.out), ("f1", &m.f1), ("f2", &m.f2)] {
                out.push((format!("module{i}.{n}.w"), l.w.view().into_dyn()));
                out.push((format!("module{i}.{n}.b"), l.b.view().into_dyn()));
            }
        }
        out.push(("f3.w".into(), self.f3.w.view().into_dyn()));
        out.push(("f3.b".into(), self.f3.b.view().into_dyn()));
        for (d, dec) in self.decoders.iter().enumerate() {
            let m = Modality::PHYSICAL[d].name();
            out.push((format!("decoder.{m}.l1.w"), dec.l1.w.view().into_dyn()));
            out.push((format!("decoder.{m}.l1.b"), dec.l1.b.view().into_dyn()));
            out.push((format!("decoder.{m}.l2.w"), dec.l2.w.view().into_dyn()));
            out.push((format!("decoder.{m}.l2.b"), dec.l2.b.view().into_dyn()));
        }
        out
    }

    /// Mutable views in the same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        let mut out: Vec<ArrayViewMutD<'_, T>> = Vec::new();
        for e in self.encoders.iter_mut() {
            for k in e.kernels.iter_mut() {
                out.push(k.w.view_mut().into_dyn());
                out.push(k.b.view_mut().into_dyn());
            }
        }
        out.push(self.diffusion_table.view_mut().into_dyn());
        out.push(self.time_proj.w.view_mut().into_dyn());
        out.push(self.time_proj.b.view_mut().into_dyn());
        for m in self.modules.iter_mut() {
            out.push(m.wq.view_mut().into_dyn());
            out.push(m.wk.view_mut().into_dyn());
            out.push(m.wv.view_mut().into_dyn());
            for l in [&mut m.out, &mut m.f1, &mut m.f2] {
                out.push(l.w.view_mut().into_dyn());
                out.push(l.b.view_mut().into_dyn());
            }
        }
        out.push(self.f3.w.view_mut().into_dyn());
        out.push(self.f3.b.view_mut().into_dyn());
        for dec in self.decoders.iter_mut() {
            out.push(dec.l1.w.view_mut().into_dyn());
            out.push(dec.l1.b.view_mut().into_dyn());
            out.push(dec.l2.w.view_mut().into_dyn());
            out.push(dec.l2.b.view_mut().into_dyn());
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// SHA-256 over the little-endian `f32` image of every tensor.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.tensors() {
            h.update(name.as_bytes());
            for v in t.iter() {
                h.update((v.as_f64() as f32).to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Element-type conversion (e.g. `f32` training weights to `f64`).
    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U> {
            encoders: Vec::new(),
            diffusion_table: self.diffusion_table.mapv(|v| U::lit(v.as_f64())),
            time_proj: cast_linear(&self.time_proj),
            modules: Vec::new(),
            f3: cast_linear(&self.f3),
            decoders: Vec::new(),
        };
        out.encoders = self
            .encoders
            .iter()
            .map(|e| EncoderParams {
                kernels: e.kernels.iter().map(cast_linear).collect(),
            })
            .collect();
        out.modules = self
            .modules
            .iter()
            .map(|m| ModuleParams {
                wq: m.wq.mapv(|v| U::lit(v.as_f64())),
                wk: m.wk.mapv(|v| U::lit(v.as_f64())),
                wv: m.wv.mapv(|v| U::lit(v.as_f64())),
                out: cast_linear(&m.out),
                f1: cast_linear(&m.f1),
                f2: cast_linear(&m.f2),
            })
            .collect();
        out.decoders = self
            .decoders
            .iter()
            .map(|d| DecoderParams {
                l1: cast_linear(&d.l1),
                l2: cast_linear(&d.l2),
            })
            .collect();
        out
    }
}

fn cast_linear<T: Real, U: Real>(l: &Linear<T>) -> Linear<U> {
    Linear {
        w: l.w.mapv(|v| U::lit(v.as_f64())),
        b: l.b.mapv(|v| U::lit(v.as_f64())),
    }
}
