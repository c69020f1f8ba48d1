//! The additive `(kL x kL)` attention mask and its slot-level block structure.

use ndarray::Array2;

use super::{ModelConfig, N_SLOTS};
use crate::error::{Error, Result};
use crate::tasks::TaskSpec;

/// Dense additive mask: `0` where attention is allowed, `neg_value` elsewhere.
/// Slot `i` occupies token rows and columns `[i L, (i + 1) L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask {
    pub values: Array2<f64>,
    pub seq_len: usize,
    pub neg_value: f64,
}

impl AttentionMask {
    /// All-zero mask: every token attends to every token.
    pub fn full(seq_len: usize, neg_value: f64) -> Self {
        let n = N_SLOTS * seq_len;
        AttentionMask {
            values: Array2::zeros((n, n)),
            seq_len,
            neg_value,
        }
    }

    pub fn n_zeros(&self) -> usize {
        self.values.iter().filter(|&&v| v == 0.0).count()
    }

    /// True if query slot `q` may attend to key slot `k`; errors on a block
    /// that mixes allowed and blocked entries.
    fn block_allowed(&self, q: usize, k: usize) -> Result<bool> {
        let l = self.seq_len;
        let block = self.values.slice(ndarray::s![q * l..(q + 1) * l, k * l..(k + 1) * l]);
        let zeros = block.iter().filter(|&&v| v == 0.0).count();
        if zeros == l * l {
            Ok(true)
        } else if zeros == 0 && block.iter().all(|&v| v <= -1e9) {
            Ok(false)
        } else {
            Err(Error::param(format!("mask block ({q}, {k}) is not uniform")))
        }
    }
}

/// Builds the task mask: each condition attends to itself, the generation
/// slot attends to itself and to every condition, all else is blocked.
pub fn build_attention_mask(task: &TaskSpec, cfg: &ModelConfig) -> Result<AttentionMask> {
    task.validate()?;
    let l = cfg.seq_len;
    let n = N_SLOTS * l;
    let mut values = Array2::from_elem((n, n), cfg.neg_mask_value);
    let mut open = |q: usize, k: usize| {
        values
            .slice_mut(ndarray::s![q * l..(q + 1) * l, k * l..(k + 1) * l])
            .fill(0.0);
    };
    let g = task.generation_slot().index();
    open(g, g);
    for c in task.condition_modalities() {
        open(c.index(), c.index());
        open(g, c.index());
    }
    Ok(AttentionMask {
        values,
        seq_len: l,
        neg_value: cfg.neg_mask_value,
    })
}

/// Slot-level view of a block-uniform mask restricted to the slots the
/// generation slot depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotLayout {
    /// `allow[q][k]`: query slot `q` attends to key slot `k`.
    pub allow: [[bool; N_SLOTS]; N_SLOTS],
    /// Slots reachable from the generation slot along allowed edges, in slot order.
    pub active: Vec<usize>,
    pub generation: usize,
}

impl SlotLayout {
    pub fn from_mask(mask: &AttentionMask, generation: usize) -> Result<Self> {
        if mask.values.nrows() != N_SLOTS * mask.seq_len || mask.values.ncols() != N_SLOTS * mask.seq_len {
            return Err(Error::param("mask shape does not match 4 slots of seq_len"));
        }
        let mut allow = [[false; N_SLOTS]; N_SLOTS];
        for q in 0..N_SLOTS {
            for k in 0..N_SLOTS {
                allow[q][k] = mask.block_allowed(q, k)?;
            }
        }
        let mut reached = [false; N_SLOTS];
        reached[generation] = true;
        let mut stack = vec![generation];
        while let Some(q) = stack.pop() {
            for k in 0..N_SLOTS {
                if allow[q][k] && !reached[k] {
                    reached[k] = true;
                    stack.push(k);
                }
            }
        }
        let active: Vec<usize> = (0..N_SLOTS).filter(|&s| reached[s]).collect();
        for &q in &active {
            if !active.iter().any(|&k| allow[q][k]) {
                return Err(Error::param(format!("slot {q} has no key it may attend to")));
            }
        }
        Ok(SlotLayout {
            allow,
            active,
            generation,
        })
    }

    /// Position of `slot` within [`SlotLayout::active`].
    pub fn active_index(&self, slot: usize) -> Option<usize> {
        self.active.iter().position(|&s| s == slot)
    }

    /// Active key slots (as active indices) visible from active query index `qi`.
    pub fn keys_of(&self, qi: usize) -> Vec<usize> {
        let q = self.active[qi];
        (0..self.active.len()).filter(|&ki| self.allow[q][self.active[ki]]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::Modality;
    use crate::tasks::enumerate_tasks;

    fn cfg(l: usize) -> ModelConfig {
        ModelConfig {
            seq_len: l,
            ..ModelConfig::default()
        }
    }

    fn zero_blocks(m: &AttentionMask) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for q in 0..4 {
            for k in 0..4 {
                if m.block_allowed(q, k).unwrap() {
                    out.push((q, k));
                }
            }
        }
        out
    }

    #[test]
    fn ppg_to_ecg() {
        let task = TaskSpec::parse("trans:ECG|cond:PPG").unwrap();
        let m = build_attention_mask(&task, &cfg(4)).unwrap();
        assert_eq!(m.n_zeros(), 48);
        for r in 0..16 {
            for c in 0..16 {
                let open = (r < 4 && c < 4) || ((4..8).contains(&r) && c < 8);
                assert_eq!(m.values[[r, c]] == 0.0, open, "({r}, {c})");
            }
        }
    }

    #[test]
    fn ecg_imputation() {
        let task = TaskSpec::parse("imp:ECG|cond:ECG~mask").unwrap();
        let m = build_attention_mask(&task, &cfg(4)).unwrap();
        assert_eq!(zero_blocks(&m), vec![(1, 1), (3, 1), (3, 3)]);
        assert_eq!(m.n_zeros(), 48);
    }

    #[test]
    fn two_condition_translation() {
        let task = TaskSpec::parse("trans:ECG|cond:PPG,BP").unwrap();
        let m = build_attention_mask(&task, &cfg(4)).unwrap();
        assert_eq!(m.n_zeros(), 5 * 16);
        assert_eq!(zero_blocks(&m), vec![(0, 0), (1, 0), (1, 1), (1, 2), (2, 2)]);
    }

    #[test]
    fn layout_covers_generation_and_conditions() {
        for task in enumerate_tasks() {
            let m = build_attention_mask(&task, &cfg(3)).unwrap();
            let g = task.generation_slot().index();
            let lay = SlotLayout::from_mask(&m, g).unwrap();
            let mut want: Vec<usize> = task.condition_modalities().iter().map(|c| c.index()).collect();
            want.push(g);
            want.sort();
            want.dedup();
            assert_eq!(lay.active, want, "{task}");
            // Zero count: one block per condition, one for generation, one per
            // generation-from-condition edge.
            assert_eq!(m.n_zeros(), (2 * task.n_conditions() + 1) * 9);
        }
    }

    #[test]
    fn full_mask_activates_all_slots() {
        let m = AttentionMask::full(5, -1e9);
        let lay = SlotLayout::from_mask(&m, Modality::Am.index()).unwrap();
        assert_eq!(lay.active, vec![0, 1, 2, 3]);
        assert_eq!(lay.keys_of(0), vec![0, 1, 2, 3]);
    }

    #[test]
    fn non_uniform_block_is_rejected() {
        let mut m = AttentionMask::full(3, -1e9);
        m.values[[0, 4]] = -1e9;
        assert!(SlotLayout::from_mask(&m, 0).is_err());
    }
}
