//! Literal evaluation of the network over all `kL` tokens with the materialized
//! additive mask. Slow; used to cross-check the block-sparse path.

use ndarray::{s, Array1, Array2, Axis};

use super::embed::time_embedding;
use super::forward::{decode, encode_modality, BatchInput};
use super::mask::AttentionMask;
use super::params::{Linear, ModelParams};
use super::{ModelConfig, N_SLOTS};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tasks::TaskSpec;

fn affine<T: Real>(x: &Array2<T>, lin: &Linear<T>) -> Array2<T> {
    x.dot(&lin.w) + &lin.b
}

fn masked_softmax<T: Real>(scores: &mut Array2<T>, mask: &Array2<T>) {
    *scores += mask;
    for mut row in scores.rows_mut() {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Runs one sample; `capture` receives the per-head attention weights of the
/// first module.
fn forward_sample<T: Real>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    task: &TaskSpec,
    mask: &Array2<T>,
    slots: &Array2<T>,
    t: usize,
    mut capture: Option<&mut Vec<Array2<T>>>,
) -> Result<Array1<T>> {
    let (l, c, dk) = (cfg.seq_len, cfg.channels, cfg.head_dim());
    let n = N_SLOTS * l;
    let mut h = Array2::<T>::zeros((n, c));
    for slot in 0..N_SLOTS {
        let x = slots.row(slot).to_vec();
        h.slice_mut(s![slot * l..(slot + 1) * l, ..])
            .assign(&encode_modality(params, cfg, slot, &x)?);
    }
    let te = time_embedding(params, l);
    let scale = T::lit(1.0 / (dk as f64).sqrt());
    let mut skip = Array2::<T>::zeros((n, c));
    for (mi, m) in params.modules.iter().enumerate() {
        let u = &h + &params.diffusion_table.row(t);
        let (q, k, v) = (u.dot(&m.wq), u.dot(&m.wk), u.dot(&m.wv));
        let mut att = Array2::<T>::zeros((n, c));
        for hd in 0..cfg.n_heads {
            let hc = hd * dk..(hd + 1) * dk;
            let mut w = q.slice(s![.., hc.clone()]).dot(&k.slice(s![.., hc.clone()]).t()) * scale;
            masked_softmax(&mut w, mask);
            att.slice_mut(s![.., hc.clone()]).assign(&w.dot(&v.slice(s![.., hc])));
            if mi == 0 {
                if let Some(cap) = capture.as_deref_mut() {
                    cap.push(w);
                }
            }
        }
        let a = affine(&att, &m.out);
        let mut f = affine(&a, &m.f1);
        for mut blk in f.axis_chunks_iter_mut(Axis(0), l) {
            blk += &te;
        }
        let g = f.slice(s![.., ..c]).mapv(|x| x.tanh()) * f.slice(s![.., c..]).mapv(|x| T::one() / (T::one() + (-x).exp()));
        let z = affine(&g, &m.f2);
        h += &z.slice(s![.., ..c]);
        skip += &z.slice(s![.., c..]);
    }
    let hs = affine(&skip, &params.f3);
    let g = task.generation_slot().index();
    let rows = hs.slice(s![g * l..(g + 1) * l, ..]);
    Ok(decode(params.decoder_for(task.generation_slot(), task), &rows))
}

fn check<T: Real>(cfg: &ModelConfig, mask: &AttentionMask, input: &BatchInput<T>) -> Result<()> {
    let (_, k, l) = input.slots.dim();
    if k != N_SLOTS || l != cfg.seq_len || mask.seq_len != cfg.seq_len {
        return Err(Error::param("dense forward: shape mismatch"));
    }
    if input.t.len() != input.batch_size() {
        return Err(Error::LengthMismatch {
            expected: input.batch_size(),
            got: input.t.len(),
        });
    }
    Ok(())
}

/// Predicted noise `(B, L)` evaluated over all four slots.
pub fn dense_forward<T: Real>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    task: &TaskSpec,
    mask: &AttentionMask,
    input: &BatchInput<T>,
) -> Result<Array2<T>> {
    check(cfg, mask, input)?;
    let m = mask.values.mapv(T::lit);
    let mut out = Array2::zeros((input.batch_size(), cfg.seq_len));
    for b in 0..input.batch_size() {
        let slots = input.slots.index_axis(Axis(0), b).to_owned();
        let eps = forward_sample(params, cfg, task, &m, &slots, input.t[b], None)?;
        out.row_mut(b).assign(&eps);
    }
    Ok(out)
}

/// Per-head `(kL, kL)` attention weights of the first module for sample 0.
pub fn first_module_attention<T: Real>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    task: &TaskSpec,
    mask: &AttentionMask,
    input: &BatchInput<T>,
) -> Result<Vec<Array2<T>>> {
    check(cfg, mask, input)?;
    let m = mask.values.mapv(T::lit);
    let slots = input.slots.index_axis(Axis(0), 0).to_owned();
    let mut cap = Vec::new();
    forward_sample(params, cfg, task, &m, &slots, input.t[0], Some(&mut cap))?;
    Ok(cap)
}
