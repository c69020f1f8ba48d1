//! Sinusoidal codes and the two embeddings added inside every module.

use ndarray::{Array1, Array2};

use super::ModelParams;
use crate::error::{Error, Result};
use crate::real::Real;

/// Rows `[sin(p w_0), cos(p w_0), sin(p w_1), ...]` for each position `p`, with
/// `w_i = base^(-2i / dim)`.
pub fn sinusoid_table(positions: &[f64], dim: usize, base: f64) -> Array2<f64> {
    let half = dim / 2;
    Array2::from_shape_fn((positions.len(), dim), |(r, c)| {
        let i = c / 2;
        let w = base.powf(-(2.0 * i as f64) / (2 * half) as f64);
        let arg = positions[r] * w;
        if c % 2 == 0 {
            arg.sin()
        } else {
            arg.cos()
        }
    })
}

/// `(L, 2C)` time embedding: the sinusoidal code of each sample index passed
/// through the learnable projection. Identical for every slot.
pub fn time_embedding<T: Real>(params: &ModelParams<T>, seq_len: usize) -> Array2<T> {
    let c = params.time_proj.w.nrows();
    let pos: Vec<f64> = (0..seq_len).map(|l| l as f64).collect();
    let code = sinusoid_table(&pos, c, 10_000.0).mapv(T::lit);
    code.dot(&params.time_proj.w) + &params.time_proj.b
}

/// Row `t` of the learnable diffusion table.
pub fn diffusion_embedding<T: Real>(params: &ModelParams<T>, t: usize) -> Result<Array1<T>> {
    if t >= params.diffusion_table.nrows() {
        return Err(Error::param(format!(
            "diffusion step {t} outside [0, {}]",
            params.diffusion_table.nrows() - 1
        )));
    }
    Ok(params.diffusion_table.row(t).to_owned())
}
