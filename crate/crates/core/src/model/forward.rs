//! Block-sparse forward pass over the slots the generation slot depends on,
//! with a recorded tape for backpropagation.
//!
//! Tokens are laid out as rows `b * N + a * L + l`, where `a` indexes the
//! active slots and `N = n_active * L`. Attention for a query slot only visits
//! the key slots its mask block allows, which is exact: blocked logits carry
//! `neg_mask_value <= -1e9` and their softmax weight underflows to zero.

use ndarray::{concatenate, s, Array1, Array2, Array3, ArrayView2, Axis};

use super::embed::sinusoid_table;
use super::mask::{AttentionMask, SlotLayout};
use super::params::{DecoderParams, Linear, ModelParams};
use super::{ModelConfig, N_SLOTS};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tasks::TaskSpec;

/// A batch of slot signals sharing one task and mask.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchInput<T> {
    /// `(B, N_SLOTS, L)`. Slots outside the active set are never read.
    pub slots: Array3<T>,
    /// Diffusion step per sample.
    pub t: Vec<usize>,
}

impl<T: Real> BatchInput<T> {
    pub fn batch_size(&self) -> usize {
        self.slots.dim().0
    }
}

/// Gradients share the parameter layout.
pub type Grads<T> = ModelParams<T>;

struct Plan {
    layout: SlotLayout,
    keys: Vec<Vec<usize>>,
    batch: usize,
    seq_len: usize,
    /// Rows per sample.
    n: usize,
}

impl Plan {
    fn new(cfg: &ModelConfig, task: &TaskSpec, mask: &AttentionMask, input_dim: (usize, usize, usize), t: &[usize]) -> Result<Plan> {
        task.validate()?;
        let (batch, n_slots, l) = input_dim;
        if n_slots != N_SLOTS {
            return Err(Error::param(format!("expected {N_SLOTS} slots, got {n_slots}")));
        }
        if l != cfg.seq_len || mask.seq_len != cfg.seq_len {
            return Err(Error::LengthMismatch {
                expected: cfg.seq_len,
                got: if l != cfg.seq_len { l } else { mask.seq_len },
            });
        }
        if batch == 0 {
            return Err(Error::param("empty batch"));
        }
        if t.len() != batch {
            return Err(Error::LengthMismatch { expected: batch, got: t.len() });
        }
        if let Some(&bad) = t.iter().find(|&&v| v > cfg.diffusion_steps) {
            return Err(Error::param(format!("diffusion step {bad} outside [0, {}]", cfg.diffusion_steps)));
        }
        let layout = SlotLayout::from_mask(mask, task.generation_slot().index())?;
        let keys = (0..layout.active.len()).map(|qi| layout.keys_of(qi)).collect();
        let n = layout.active.len() * l;
        Ok(Plan {
            layout,
            keys,
            batch,
            seq_len: l,
            n,
        })
    }

    fn rows(&self) -> usize {
        self.batch * self.n
    }

    fn start(&self, b: usize, ai: usize) -> usize {
        b * self.n + ai * self.seq_len
    }
}

struct ModuleTape<T> {
    u: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    /// Softmax weights, indexed `(b * heads + h) * n_active + qi`.
    weights: Vec<Array2<T>>,
    att: Array2<T>,
    a: Array2<T>,
    g1: Array2<T>,
    g2: Array2<T>,
    g: Array2<T>,
}

struct Tape<T> {
    patches: Vec<Array2<T>>,
    code: Array2<T>,
    modules: Vec<ModuleTape<T>>,
    gen_skip: Array2<T>,
    hs: Array2<T>,
    pre: Array2<T>,
    d1: Array2<T>,
}

fn affine<T: Real>(x: &ArrayView2<'_, T>, lin: &Linear<T>) -> Array2<T> {
    x.dot(&lin.w) + &lin.b
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn softmax_rows<T: Real>(x: &mut Array2<T>) {
    for mut row in x.rows_mut() {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row /= sum;
    }
}

/// `(B L, k_max)` sliding windows over one slot with zero padding, so the
/// window of kernel size `k` is columns `[r_max - r, r_max + r]`.
fn patches<T: Real>(slots: &Array3<T>, slot: usize, kmax: usize) -> Array2<T> {
    let (batch, _, l) = slots.dim();
    let r = (kmax / 2) as isize;
    Array2::from_shape_fn((batch * l, kmax), |(row, c)| {
        let (b, i) = (row / l, row % l);
        let src = i as isize + c as isize - r;
        if src < 0 || src >= l as isize {
            T::zero()
        } else {
            slots[[b, slot, src as usize]]
        }
    })
}

/// Multi-scale encoder on precomputed patches: `(B L, C)`.
fn encode_patches<T: Real>(p: &Array2<T>, params: &ModelParams<T>, slot: usize, cfg: &ModelConfig) -> Array2<T> {
    let cpk = cfg.channels_per_kernel();
    let rmax = cfg.max_kernel() / 2;
    let mut out = Array2::zeros((p.nrows(), cfg.channels));
    for (j, (&k, lin)) in cfg.kernel_sizes.iter().zip(&params.encoders[slot].kernels).enumerate() {
        let r = k / 2;
        let window = p.slice(s![.., rmax - r..rmax + r + 1]);
        out.slice_mut(s![.., j * cpk..(j + 1) * cpk]).assign(&affine(&window, lin));
    }
    out
}

/// Encodes one signal into `(L, C)` features with the encoder of `slot`.
pub fn encode_modality<T: Real>(params: &ModelParams<T>, cfg: &ModelConfig, slot: usize, x: &[T]) -> Result<Array2<T>> {
    if slot >= N_SLOTS {
        return Err(Error::param(format!("slot {slot} out of range")));
    }
    let l = x.len();
    let mut slots = Array3::zeros((1, N_SLOTS, l));
    slots.slice_mut(s![0, slot, ..]).assign(&ndarray::ArrayView1::from(x));
    Ok(encode_patches(&patches(&slots, slot, cfg.max_kernel()), params, slot, cfg))
}

/// `relu(x W1 + b1) W2 + b2` for every row.
pub fn decode<T: Real>(dec: &DecoderParams<T>, features: &ArrayView2<'_, T>) -> Array1<T> {
    let d1 = affine(features, &dec.l1).mapv(|v| v.max(T::zero()));
    affine(&d1.view(), &dec.l2).column(0).to_owned()
}

fn check_finite<T: Real>(x: &Array2<T>, what: &str) -> Result<()> {
    if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "{what}: element {pos} of {:?} is {}",
            x.dim(),
            x.iter().nth(pos).copied().unwrap_or_else(T::nan)
        )));
    }
    Ok(())
}

fn gather_rows<T: Real>(x: &Array2<T>, plan: &Plan, b: usize, keys: &[usize], cols: std::ops::Range<usize>) -> Array2<T> {
    let l = plan.seq_len;
    let views: Vec<_> = keys
        .iter()
        .map(|&ki| {
            let r = plan.start(b, ki);
            x.slice(s![r..r + l, cols.clone()])
        })
        .collect();
    concatenate(Axis(0), &views).expect("uniform key blocks")
}

fn forward_impl<T: Real>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    task: &TaskSpec,
    mask: &AttentionMask,
    input: &BatchInput<T>,
    keep_tape: bool,
) -> Result<(Array2<T>, Option<Tape<T>>)> {
    let plan = Plan::new(cfg, task, mask, input.slots.dim(), &input.t)?;
    let (l, c, heads, dk) = (plan.seq_len, cfg.channels, cfg.n_heads, cfg.head_dim());
    let na = plan.layout.active.len();
    let scale = T::lit(1.0 / (dk as f64).sqrt());

    let mut h = Array2::<T>::zeros((plan.rows(), c));
    let mut all_patches = Vec::with_capacity(na);
    for (ai, &slot) in plan.layout.active.iter().enumerate() {
        let x = input.slots.index_axis(Axis(1), slot);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("slot {slot} input")));
        }
        let p = patches(&input.slots, slot, cfg.max_kernel());
        let e = encode_patches(&p, params, slot, cfg);
        for b in 0..plan.batch {
            let r = plan.start(b, ai);
            h.slice_mut(s![r..r + l, ..]).assign(&e.slice(s![b * l..(b + 1) * l, ..]));
        }
        all_patches.push(p);
    }

    let pos: Vec<f64> = (0..l).map(|v| v as f64).collect();
    let code = sinusoid_table(&pos, c, 10_000.0).mapv(T::lit);
    let te = affine(&code.view(), &params.time_proj);

    let mut skip = Array2::<T>::zeros((plan.rows(), c));
    let mut tapes = Vec::new();
    for (mi, m) in params.modules.iter().enumerate() {
        let mut u = h.clone();
        for b in 0..plan.batch {
            let mut rows = u.slice_mut(s![b * plan.n..(b + 1) * plan.n, ..]);
            rows += &params.diffusion_table.row(input.t[b]);
        }
        let q = u.dot(&m.wq);
        let k = u.dot(&m.wk);
        let v = u.dot(&m.wv);
        let mut att = Array2::<T>::zeros((plan.rows(), c));
        let mut weights = Vec::with_capacity(if keep_tape { plan.batch * heads * na } else { 0 });
        for b in 0..plan.batch {
            for hd in 0..heads {
                let hc = hd * dk..(hd + 1) * dk;
                for qi in 0..na {
                    let r = plan.start(b, qi);
                    let qb = q.slice(s![r..r + l, hc.clone()]);
                    let kcat = gather_rows(&k, &plan, b, &plan.keys[qi], hc.clone());
                    let vcat = gather_rows(&v, &plan, b, &plan.keys[qi], hc.clone());
                    let mut w = qb.dot(&kcat.t()) * scale;
                    softmax_rows(&mut w);
                    att.slice_mut(s![r..r + l, hc.clone()]).assign(&w.dot(&vcat));
                    if keep_tape {
                        weights.push(w);
                    }
                }
            }
        }
        let a = affine(&att.view(), &m.out);
        let mut f = affine(&a.view(), &m.f1);
        for b in 0..plan.batch {
            for ai in 0..na {
                let r = plan.start(b, ai);
                let mut rows = f.slice_mut(s![r..r + l, ..]);
                rows += &te;
            }
        }
        let g1 = f.slice(s![.., ..c]).mapv(|x| x.tanh());
        let g2 = f.slice(s![.., c..]).mapv(sigmoid);
        let g = &g1 * &g2;
        let z = affine(&g.view(), &m.f2);
        h += &z.slice(s![.., ..c]);
        skip += &z.slice(s![.., c..]);
        check_finite(&h, &format!("module {mi} residual stream"))?;
        if keep_tape {
            tapes.push(ModuleTape {
                u,
                q,
                k,
                v,
                weights,
                att,
                a,
                g1,
                g2,
                g,
            });
        }
    }

    let gi = plan.layout.active_index(plan.layout.generation).expect("generation slot is active");
    let mut gen_skip = Array2::<T>::zeros((plan.batch * l, c));
    for b in 0..plan.batch {
        let r = plan.start(b, gi);
        gen_skip.slice_mut(s![b * l..(b + 1) * l, ..]).assign(&skip.slice(s![r..r + l, ..]));
    }
    let hs = affine(&gen_skip.view(), &params.f3);
    let dec = params.decoder_for(task.generation_slot(), task);
    let pre = affine(&hs.view(), &dec.l1);
    let d1 = pre.mapv(|v| v.max(T::zero()));
    let out = affine(&d1.view(), &dec.l2);
    check_finite(&out, "decoder output")?;
    let out = out.into_shape_with_order((plan.batch, l)).expect("B x L output");
    let tape = keep_tape.then(|| Tape {
        patches: all_patches,
        code,
        modules: tapes,
        gen_skip,
        hs,
        pre,
        d1,
    });
    Ok((out, tape))
}

/// Predicted noise `(B, L)` for the generation slot of every sample.
pub fn model_forward<T: Real>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    task: &TaskSpec,
    mask: &AttentionMask,
    input: &BatchInput<T>,
) -> Result<Array2<T>> {
    forward_impl(params, cfg, task, mask, input, false).map(|(out, _)| out)
}

/// Mean squared error against `eps` `(B, L)` and its gradient for every parameter.
pub fn forward_backward<T: Real>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    task: &TaskSpec,
    mask: &AttentionMask,
    input: &BatchInput<T>,
    eps: &Array2<T>,
) -> Result<(f64, Grads<T>)> {
    let (out, tape) = forward_impl(params, cfg, task, mask, input, true)?;
    if eps.dim() != out.dim() {
        return Err(Error::param(format!("eps shape {:?} != output {:?}", eps.dim(), out.dim())));
    }
    let tape = tape.expect("tape requested");
    let plan = Plan::new(cfg, task, mask, input.slots.dim(), &input.t)?;
    let (l, c, heads, dk) = (plan.seq_len, cfg.channels, cfg.n_heads, cfg.head_dim());
    let na = plan.layout.active.len();
    let scale = T::lit(1.0 / (dk as f64).sqrt());
    let count = (plan.batch * l) as f64;

    let diff = &out - eps;
    let loss = diff.iter().map(|d| d.as_f64() * d.as_f64()).sum::<f64>() / count;
    let dout = (diff * T::lit(2.0 / count))
        .into_shape_with_order((plan.batch * l, 1))
        .expect("column");

    let mut gr = params.zeros_like();
    let target = task.generation_slot();
    let dec = params.decoder_for(target, task);
    let dec_idx = if target.is_physical() { target.index() } else { task.target.index() };
    {
        let gd = &mut gr.decoders[dec_idx];
        gd.l2.w += &tape.d1.t().dot(&dout);
        gd.l2.b += &dout.sum_axis(Axis(0));
        let mut dpre = dout.dot(&dec.l2.w.t());
        dpre.zip_mut_with(&tape.pre, |d, &p| {
            if p <= T::zero() {
                *d = T::zero()
            }
        });
        gd.l1.w += &tape.hs.t().dot(&dpre);
        gd.l1.b += &dpre.sum_axis(Axis(0));
        let dhs = dpre.dot(&dec.l1.w.t());
        gr.f3.w += &tape.gen_skip.t().dot(&dhs);
        gr.f3.b += &dhs.sum_axis(Axis(0));
        let dgen = dhs.dot(&params.f3.w.t());
        // Only generation rows feed the output; every module's skip half
        // receives the same gradient.
        let gi = plan.layout.active_index(plan.layout.generation).expect("active");
        let mut dz = Array2::<T>::zeros((plan.rows(), 2 * c));
        for b in 0..plan.batch {
            let r = plan.start(b, gi);
            dz.slice_mut(s![r..r + l, c..]).assign(&dgen.slice(s![b * l..(b + 1) * l, ..]));
        }
        let mut dh = Array2::<T>::zeros((plan.rows(), c));
        let mut dte = Array2::<T>::zeros((l, 2 * c));
        for (mi, m) in params.modules.iter().enumerate().rev() {
            let tp = &tape.modules[mi];
            let gm = &mut gr.modules[mi];
            dz.slice_mut(s![.., ..c]).assign(&dh);
            gm.f2.w += &tp.g.t().dot(&dz);
            gm.f2.b += &dz.sum_axis(Axis(0));
            let dg = dz.dot(&m.f2.w.t());
            let mut df = Array2::<T>::zeros((plan.rows(), 2 * c));
            {
                let one = T::one();
                let mut d1 = df.slice_mut(s![.., ..c]);
                ndarray::Zip::from(&mut d1)
                    .and(&dg)
                    .and(&tp.g1)
                    .and(&tp.g2)
                    .for_each(|o, &d, &a, &b| *o = d * b * (one - a * a));
            }
            {
                let one = T::one();
                let mut d2 = df.slice_mut(s![.., c..]);
                ndarray::Zip::from(&mut d2)
                    .and(&dg)
                    .and(&tp.g1)
                    .and(&tp.g2)
                    .for_each(|o, &d, &a, &b| *o = d * a * b * (one - b));
            }
            gm.f1.w += &tp.a.t().dot(&df);
            gm.f1.b += &df.sum_axis(Axis(0));
            for b in 0..plan.batch {
                for ai in 0..na {
                    let r = plan.start(b, ai);
                    dte += &df.slice(s![r..r + l, ..]);
                }
            }
            let da = df.dot(&m.f1.w.t());
            gm.out.w += &tp.att.t().dot(&da);
            gm.out.b += &da.sum_axis(Axis(0));
            let datt = da.dot(&m.out.w.t());

            let mut dq = Array2::<T>::zeros((plan.rows(), c));
            let mut dk_ = Array2::<T>::zeros((plan.rows(), c));
            let mut dv = Array2::<T>::zeros((plan.rows(), c));
            for b in 0..plan.batch {
                for hd in 0..heads {
                    let hc = hd * dk..(hd + 1) * dk;
                    for qi in 0..na {
                        let w = &tp.weights[(b * heads + hd) * na + qi];
                        let r = plan.start(b, qi);
                        let keys = &plan.keys[qi];
                        let d_o = datt.slice(s![r..r + l, hc.clone()]);
                        let qb = tp.q.slice(s![r..r + l, hc.clone()]);
                        let kcat = gather_rows(&tp.k, &plan, b, keys, hc.clone());
                        let vcat = gather_rows(&tp.v, &plan, b, keys, hc.clone());
                        let dw = d_o.dot(&vcat.t());
                        let dvcat = w.t().dot(&d_o);
                        let mut ds = &dw * w;
                        let rowdot = ds.sum_axis(Axis(1));
                        ds = w * &(dw - &rowdot.insert_axis(Axis(1)));
                        let dqb = ds.dot(&kcat) * scale;
                        let dkcat = ds.t().dot(&qb) * scale;
                        let mut dqv = dq.slice_mut(s![r..r + l, hc.clone()]);
                        dqv += &dqb;
                        for (j, &ki) in keys.iter().enumerate() {
                            let rk = plan.start(b, ki);
                            let mut dkv = dk_.slice_mut(s![rk..rk + l, hc.clone()]);
                            dkv += &dkcat.slice(s![j * l..(j + 1) * l, ..]);
                            let mut dvv = dv.slice_mut(s![rk..rk + l, hc.clone()]);
                            dvv += &dvcat.slice(s![j * l..(j + 1) * l, ..]);
                        }
                    }
                }
            }
            gm.wq += &tp.u.t().dot(&dq);
            gm.wk += &tp.u.t().dot(&dk_);
            gm.wv += &tp.u.t().dot(&dv);
            let du = dq.dot(&m.wq.t()) + dk_.dot(&m.wk.t()) + dv.dot(&m.wv.t());
            for b in 0..plan.batch {
                let rows = du.slice(s![b * plan.n..(b + 1) * plan.n, ..]);
                let mut trow = gr.diffusion_table.row_mut(input.t[b]);
                trow += &rows.sum_axis(Axis(0));
            }
            dh += &du;
        }
        gr.time_proj.w += &tape.code.t().dot(&dte);
        gr.time_proj.b += &dte.sum_axis(Axis(0));

        let cpk = cfg.channels_per_kernel();
        let rmax = cfg.max_kernel() / 2;
        for (ai, &slot) in plan.layout.active.iter().enumerate() {
            let mut de = Array2::<T>::zeros((plan.batch * l, c));
            for b in 0..plan.batch {
                let r = plan.start(b, ai);
                de.slice_mut(s![b * l..(b + 1) * l, ..]).assign(&dh.slice(s![r..r + l, ..]));
            }
            let p = &tape.patches[ai];
            for (j, &k) in cfg.kernel_sizes.iter().enumerate() {
                let r = k / 2;
                let window = p.slice(s![.., rmax - r..rmax + r + 1]);
                let dcol = de.slice(s![.., j * cpk..(j + 1) * cpk]);
                let gk = &mut gr.encoders[slot].kernels[j];
                gk.w += &window.t().dot(&dcol);
                gk.b += &dcol.sum_axis(Axis(0));
            }
        }
    }
    Ok((loss, gr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_attention_mask;
    use crate::signals::Modality;
    use crate::tasks::enumerate_tasks;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_input(cfg: &ModelConfig, batch: usize, seed: u64) -> BatchInput<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BatchInput {
            slots: Array3::from_shape_fn((batch, N_SLOTS, cfg.seq_len), |_| rng.random_range(-1.0..1.0)),
            t: (0..batch).map(|_| rng.random_range(1..=cfg.diffusion_steps)).collect(),
        }
    }

    #[test]
    fn output_shape_for_every_task() {
        let cfg = ModelConfig::tiny();
        let p = ModelParams::<f64>::init(&cfg, 1);
        let x = random_input(&cfg, 2, 2);
        for task in enumerate_tasks() {
            let mask = build_attention_mask(&task, &cfg).unwrap();
            let out = model_forward(&p, &cfg, &task, &mask, &x).unwrap();
            assert_eq!(out.dim(), (2, cfg.seq_len));
        }
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_features() {
        let cfg = ModelConfig::default();
        let mut p = ModelParams::<f64>::init(&cfg, 0);
        for k in p.encoders[1].kernels.iter_mut() {
            k.b.fill(0.0);
        }
        for &l in &[32usize, 500] {
            let f = encode_modality(&p, &cfg, 1, &vec![0.0; l]).unwrap();
            assert_eq!(f.dim(), (l, cfg.channels));
            assert!(f.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn kernel_one_is_affine() {
        let cfg = ModelConfig::default();
        let p = ModelParams::<f64>::init(&cfg, 5);
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let f = encode_modality(&p, &cfg, 0, &x).unwrap();
        let k0 = &p.encoders[0].kernels[0];
        for (l, &xv) in x.iter().enumerate() {
            for ch in 0..cfg.channels_per_kernel() {
                let want = xv * k0.w[[0, ch]] + k0.b[ch];
                assert!((f[[l, ch]] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let cfg = ModelConfig::default();
        let p = ModelParams::<f64>::init(&cfg, 6);
        let x: Vec<f64> = (0..20).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
        let f = encode_modality(&p, &cfg, 2, &x).unwrap();
        let cpk = cfg.channels_per_kernel();
        for (j, &k) in cfg.kernel_sizes.iter().enumerate() {
            let lin = &p.encoders[2].kernels[j];
            let r = (k / 2) as isize;
            for l in 0..x.len() {
                for ch in 0..cpk {
                    let mut acc = lin.b[ch];
                    for i in 0..k {
                        let src = l as isize + i as isize - r;
                        if src >= 0 && (src as usize) < x.len() {
                            acc += lin.w[[i, ch]] * x[src as usize];
                        }
                    }
                    assert!((f[[l, j * cpk + ch]] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gate_values() {
        assert_eq!(0f64.tanh() * sigmoid(0f64), 0.0);
        assert!((30f64.tanh() * sigmoid(30f64) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic() {
        let cfg = ModelConfig::tiny();
        let p = ModelParams::<f32>::init(&cfg, 3);
        let x64 = random_input(&cfg, 3, 4);
        let x = BatchInput {
            slots: x64.slots.mapv(|v| v as f32),
            t: x64.t.clone(),
        };
        let task = TaskSpec::parse("trans:BP|cond:PPG,ECG").unwrap();
        let mask = build_attention_mask(&task, &cfg).unwrap();
        let a = model_forward(&p, &cfg, &task, &mask, &x).unwrap();
        let b = model_forward(&p, &cfg, &task, &mask, &x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn am_binding_decodes_like_target_decoder() {
        let cfg = ModelConfig::tiny();
        let p = ModelParams::<f64>::init(&cfg, 8);
        let x = random_input(&cfg, 2, 9);
        let task = TaskSpec::parse("den:ECG|cond:ECG~noise").unwrap();
        let mask = build_attention_mask(&task, &cfg).unwrap();
        let (out, tape) = forward_impl(&p, &cfg, &task, &mask, &x, true).unwrap();
        let direct = decode(&p.decoders[Modality::Ecg.index()], &tape.unwrap().hs.view());
        assert_eq!(out.iter().copied().collect::<Vec<_>>(), direct.to_vec());
    }

    #[test]
    fn slot_permutation_permutes_consistently() {
        // Moving the PPG condition into the BP slot, with the encoders and the
        // mask moved along, must not change the prediction.
        let cfg = ModelConfig::tiny();
        let p = ModelParams::<f64>::init(&cfg, 10);
        let x = random_input(&cfg, 2, 11);
        let task = TaskSpec::parse("trans:ECG|cond:PPG").unwrap();
        let mask = build_attention_mask(&task, &cfg).unwrap();
        let base = model_forward(&p, &cfg, &task, &mask, &x).unwrap();

        let mut pp = p.clone();
        pp.encoders.swap(0, 2);
        let mut xp = x.clone();
        for b in 0..2 {
            for l in 0..cfg.seq_len {
                xp.slots.swap([b, 0, l], [b, 2, l]);
            }
        }
        let permuted_mask = build_attention_mask(&TaskSpec::parse("trans:ECG|cond:BP").unwrap(), &cfg).unwrap();
        let moved = model_forward(&pp, &cfg, &task, &permuted_mask, &xp).unwrap();
        for (a, b) in base.iter().zip(moved.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let cfg = ModelConfig::tiny();
        let p = ModelParams::<f64>::init(&cfg, 0);
        let task = TaskSpec::parse("trans:ECG|cond:PPG").unwrap();
        let mask = build_attention_mask(&task, &cfg).unwrap();
        let mut x = random_input(&cfg, 2, 0);
        x.t.pop();
        assert!(model_forward(&p, &cfg, &task, &mask, &x).is_err());
        let mut x = random_input(&cfg, 2, 0);
        x.t[0] = cfg.diffusion_steps + 1;
        assert!(model_forward(&p, &cfg, &task, &mask, &x).is_err());
        let mut x = random_input(&cfg, 1, 0);
        x.slots[[0, 0, 0]] = f64::NAN;
        assert!(matches!(model_forward(&p, &cfg, &task, &mask, &x), Err(Error::NonFinite(_))));
    }
}
