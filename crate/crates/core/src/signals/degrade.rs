//! Degradation constructors for restoration tasks: additive Gaussian noise at
//! an exact SNR and contiguous missing-sample gaps.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{power, SignalSegment};
use crate::error::{Error, Result};

/// Adds white Gaussian noise scaled so that
/// `10 log10(P_signal / P_noise)` equals `snr_db` exactly. `+inf` adds nothing.
pub fn add_noise_at_snr<R: Rng + ?Sized>(
    seg: &SignalSegment,
    snr_db: f64,
    rng: &mut R,
) -> Result<SignalSegment> {
    let ps = power(&seg.samples);
    if !(ps > 0.0) {
        return Err(Error::param("cannot set SNR on a zero-power segment"));
    }
    if snr_db.is_nan() {
        return Err(Error::param("SNR is NaN"));
    }
    if snr_db == f64::INFINITY {
        return Ok(seg.clone());
    }
    let noise: Vec<f64> = (0..seg.len()).map(|_| rng.sample(StandardNormal)).collect();
    let pn = power(&noise);
    if !(pn > 0.0) {
        return Ok(seg.clone());
    }
    let target = ps / 10f64.powf(snr_db / 10.0);
    let scale = (target / pn).sqrt();
    Ok(seg.with_samples(
        seg.samples
            .iter()
            .zip(&noise)
            .map(|(s, n)| s + scale * n)
            .collect(),
    ))
}

/// `true` marks an observed sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationMask {
    pub observed: Vec<bool>,
}

impl ObservationMask {
    pub fn all_observed(len: usize) -> Self {
        Self {
            observed: vec![true; len],
        }
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn n_missing(&self) -> usize {
        self.observed.iter().filter(|o| !**o).count()
    }

    pub fn missing_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.observed[i]).collect()
    }
}

/// One contiguous missing run of `round(fraction * len)` samples (clamped to
/// leave at least one observed and one missing sample) at a uniform offset.
pub fn gap_mask_with_fraction<R: Rng + ?Sized>(
    len: usize,
    fraction: f64,
    rng: &mut R,
) -> Result<ObservationMask> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::param(format!("gap fraction {fraction} outside (0, 1)")));
    }
    if len < 2 {
        return Err(Error::param("gap mask needs at least two samples"));
    }
    let run = ((fraction * len as f64).round() as usize).clamp(1, len - 1);
    let start = rng.random_range(0..=len - run);
    let mut observed = vec![true; len];
    observed[start..start + run].iter_mut().for_each(|o| *o = false);
    Ok(ObservationMask { observed })
}

/// Draws the gap fraction uniformly from `range` then builds the mask.
pub fn gen_gap_mask<R: Rng + ?Sized>(
    len: usize,
    range: (f64, f64),
    rng: &mut R,
) -> Result<ObservationMask> {
    let (lo, hi) = range;
    if !(lo > 0.0 && hi < 1.0 && lo <= hi) {
        return Err(Error::param(format!("gap fraction range {range:?} outside (0, 1)")));
    }
    let f = if lo == hi { lo } else { rng.random_range(lo..=hi) };
    gap_mask_with_fraction(len, f, rng)
}

/// Zero-fills missing samples (values are in normalized space).
pub fn apply_mask(seg: &SignalSegment, mask: &ObservationMask) -> Result<SignalSegment> {
    crate::error::check_len(seg.len(), mask.len())?;
    Ok(seg.with_samples(
        seg.samples
            .iter()
            .zip(&mask.observed)
            .map(|(&v, &o)| if o { v } else { 0.0 })
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{Modality, UnitSpace};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gap_of_thirty_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = gap_mask_with_fraction(500, 0.3, &mut rng).unwrap();
        let missing = m.missing_indices();
        assert_eq!(missing.len(), 150);
        assert_eq!(missing.last().unwrap() - missing[0], 149);
    }

    #[test]
    fn bad_fractions_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(gap_mask_with_fraction(500, 0.0, &mut rng).is_err());
        assert!(gap_mask_with_fraction(500, 1.0, &mut rng).is_err());
        assert!(gen_gap_mask(500, (0.0, 0.5), &mut rng).is_err());
        assert!(gen_gap_mask(500, (0.6, 0.5), &mut rng).is_err());
    }

    #[test]
    fn zero_power_rejected_and_infinite_snr_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = SignalSegment::new(vec![0.0; 16], 32.0, Modality::Ppg, UnitSpace::Minmax);
        assert!(add_noise_at_snr(&z, 10.0, &mut rng).is_err());
        let s = z.with_samples((0..16).map(|i| i as f64).collect());
        assert_eq!(add_noise_at_snr(&s, f64::INFINITY, &mut rng).unwrap(), s);
    }

    #[test]
    fn apply_mask_zero_fills_and_checks_length() {
        let s = SignalSegment::new(vec![1.0; 4], 32.0, Modality::Ppg, UnitSpace::Minmax);
        let m = ObservationMask { observed: vec![true, false, false, true] };
        assert_eq!(apply_mask(&s, &m).unwrap().samples, vec![1.0, 0.0, 0.0, 1.0]);
        assert!(apply_mask(&s, &ObservationMask::all_observed(3)).is_err());
    }
}
