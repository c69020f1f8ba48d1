//! IIR filters as cascaded biquads, applied forward-backward for zero phase.

use std::f64::consts::PI;

use super::{Modality, SignalSegment};
use crate::error::{Error, Result};

/// Second-order section in direct form II transposed; `a0` is normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    fn nyquist_gain(&self) -> f64 {
        (self.b[0] - self.b[1] + self.b[2]) / (1.0 - self.a[0] + self.a[1])
    }

    /// State that makes the section sit at steady state for a constant input `u`.
    fn steady_state(&self, u: f64) -> [f64; 2] {
        let y = self.dc_gain() * u;
        let z2 = self.b[2] * u - self.a[1] * y;
        let z1 = self.b[1] * u - self.a[0] * y + z2;
        [z1, z2]
    }

    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + z[0];
            z[0] = self.b[1] * input - self.a[0] * y + z[1];
            z[1] = self.b[2] * input - self.a[1] * y;
            *v = y;
        }
    }

    /// Complex frequency response at normalized angular frequency `w` (rad/sample).
    pub fn response(&self, w: f64) -> f64 {
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let nr = self.b[0] + self.b[1] * c1 + self.b[2] * c2;
        let ni = self.b[1] * s1 + self.b[2] * s2;
        let dr = 1.0 + self.a[0] * c1 + self.a[1] * c2;
        let di = self.a[0] * s1 + self.a[1] * s2;
        ((nr * nr + ni * ni) / (dr * dr + di * di)).sqrt()
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

impl Sos {
    /// Butterworth high-pass via bilinear transform with frequency prewarping.
    pub fn butter_highpass(order: usize, cutoff_hz: f64, fs: f64) -> Result<Sos> {
        if order == 0 {
            return Err(Error::param("filter order must be >= 1"));
        }
        if !(cutoff_hz > 0.0) || fs <= 2.0 * cutoff_hz {
            return Err(Error::param(format!(
                "high-pass cutoff {cutoff_hz} Hz invalid for fs {fs} Hz"
            )));
        }
        let k = 2.0 * fs;
        let wc = k * (PI * cutoff_hz / fs).tan();
        let mut sections = Vec::new();
        // Prototype poles in the upper-left quadrant pair with their conjugates.
        for i in 0..order / 2 {
            let theta = PI * (2 * i + order + 1) as f64 / (2 * order) as f64;
            let (pr, pi) = (theta.cos(), theta.sin());
            // high-pass transform: s = wc / p
            let mag2 = pr * pr + pi * pi;
            let (sr, si) = (wc * pr / mag2, -wc * pi / mag2);
            // bilinear: z = (k + s) / (k - s)
            let (nr, ni) = (k + sr, si);
            let (dr, di) = (k - sr, -si);
            let dm = dr * dr + di * di;
            let zr = (nr * dr + ni * di) / dm;
            let zi = (ni * dr - nr * di) / dm;
            let mut bq = Biquad {
                b: [1.0, -2.0, 1.0],
                a: [-2.0 * zr, zr * zr + zi * zi],
            };
            let g = bq.nyquist_gain();
            bq.b.iter_mut().for_each(|v| *v /= g);
            sections.push(bq);
        }
        if order % 2 == 1 {
            let s = -wc;
            let z = (k + s) / (k - s);
            let mut bq = Biquad {
                b: [1.0, -1.0, 0.0],
                a: [-z, 0.0],
            };
            let g = bq.nyquist_gain();
            bq.b.iter_mut().for_each(|v| *v /= g);
            sections.push(bq);
        }
        Ok(Sos { sections })
    }

    /// Second-order IIR notch with quality factor `q`.
    pub fn notch(freq_hz: f64, q: f64, fs: f64) -> Result<Sos> {
        if !(freq_hz > 0.0) || freq_hz >= fs / 2.0 {
            return Err(Error::param(format!(
                "notch frequency {freq_hz} Hz must lie in (0, fs/2) for fs {fs} Hz"
            )));
        }
        if !(q > 0.0) {
            return Err(Error::param("notch Q must be positive"));
        }
        let w0 = 2.0 * PI * freq_hz / fs;
        let bw = w0 / q;
        let gain = 1.0 / (1.0 + (bw / 2.0).tan());
        let c = w0.cos();
        let bq = Biquad {
            b: [gain, -2.0 * gain * c, gain],
            a: [-2.0 * gain * c, 2.0 * gain - 1.0],
        };
        Ok(Sos { sections: vec![bq] })
    }

    /// Magnitude response at `f_hz`.
    pub fn magnitude(&self, f_hz: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f_hz / fs;
        self.sections.iter().map(|s| s.response(w)).product()
    }

    fn run_steady(&self, x: &mut [f64]) {
        let Some(&first) = x.first() else { return };
        let mut u = first;
        for s in &self.sections {
            let z = s.steady_state(u);
            s.run(x, z);
            u *= s.dc_gain();
        }
    }
}

/// Zero-phase forward-backward filtering with odd-extension padding and
/// steady-state initial conditions.
pub fn filtfilt(sos: &Sos, x: &[f64]) -> Vec<f64> {
    if x.len() < 2 {
        return x.to_vec();
    }
    let n = x.len();
    let pad = (3 * (2 * sos.sections.len() + 1)).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=pad {
        ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    sos.run_steady(&mut ext);
    ext.reverse();
    sos.run_steady(&mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Zero-phase Butterworth high-pass for PPG/ECG segments.
pub fn highpass(seg: &SignalSegment, cutoff_hz: f64, order: usize) -> Result<SignalSegment> {
    if !matches!(seg.modality, Modality::Ppg | Modality::Ecg) {
        return Err(Error::param(format!(
            "high-pass applies to PPG/ECG only, got {}",
            seg.modality
        )));
    }
    seg.check_finite()?;
    let sos = Sos::butter_highpass(order, cutoff_hz, seg.fs)?;
    Ok(seg.with_samples(filtfilt(&sos, &seg.samples)))
}

/// Zero-phase powerline notch (Q = 30).
pub fn notch_powerline(seg: &SignalSegment, freq_hz: f64) -> Result<SignalSegment> {
    seg.check_finite()?;
    let sos = Sos::notch(freq_hz, 30.0, seg.fs)?;
    Ok(seg.with_samples(filtfilt(&sos, &seg.samples)))
}

/// Downsamples by an integer factor, replacing each block of `factor`
/// samples with its mean (a boxcar anti-alias filter). A trailing partial
/// block is dropped.
pub fn decimate(seg: &SignalSegment, factor: usize) -> Result<SignalSegment> {
    if factor == 0 {
        return Err(Error::param("decimation factor must be >= 1"));
    }
    seg.check_finite()?;
    let samples = seg
        .samples
        .chunks_exact(factor)
        .map(|c| c.iter().sum::<f64>() / factor as f64)
        .collect();
    Ok(SignalSegment {
        samples,
        fs: seg.fs / factor as f64,
        ..seg.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::UnitSpace;

    #[test]
    fn decimate_block_means() {
        let s = seg((0..10).map(|v| v as f64).collect(), 128.0);
        let d = decimate(&s, 4).unwrap();
        assert_eq!(d.samples, vec![1.5, 5.5]);
        assert_eq!(d.fs, 32.0);
        assert_eq!(decimate(&s, 1).unwrap(), s);
        assert!(decimate(&s, 0).is_err());
    }

    fn seg(samples: Vec<f64>, fs: f64) -> SignalSegment {
        SignalSegment::new(samples, fs, Modality::Ppg, UnitSpace::Raw)
    }

    #[test]
    fn butterworth_magnitude_matches_analytic() {
        let fs = 125.0;
        let sos = Sos::butter_highpass(5, 0.5, fs).unwrap();
        assert_eq!(sos.sections.len(), 3);
        for &f in &[0.1, 0.3, 0.5, 1.0, 5.0, 20.0] {
            // analytic magnitude of the prewarped digital Butterworth
            let ratio = (PI * 0.5 / fs).tan() / (PI * f / fs).tan();
            let expected = 1.0 / (1.0 + ratio.powi(10)).sqrt();
            let got = sos.magnitude(f, fs);
            assert!((got - expected).abs() < 1e-9, "f={f}: {got} vs {expected}");
        }
    }

    #[test]
    fn constant_is_removed() {
        let out = highpass(&seg(vec![5.0; 1000], 125.0), 0.5, 5).unwrap();
        let m = out.samples[200..800].iter().map(|v| v.abs()).sum::<f64>() / 600.0;
        assert!(m < 1e-3, "{m}");
    }

    #[test]
    fn rejects_non_finite_and_bad_params() {
        let mut x = vec![0.0; 100];
        x[3] = f64::NAN;
        assert!(matches!(highpass(&seg(x, 125.0), 0.5, 5), Err(Error::NonFinite(_))));
        assert!(notch_powerline(&seg(vec![0.0; 100], 100.0), 50.0).is_err());
        assert!(highpass(&seg(vec![0.0; 100], 0.8), 0.5, 5).is_err());
        let bp = SignalSegment::new(vec![0.0; 10], 125.0, Modality::Bp, UnitSpace::Mmhg);
        assert!(highpass(&bp, 0.5, 5).is_err());
    }

    #[test]
    fn notch_of_zero_is_zero() {
        let out = notch_powerline(&seg(vec![0.0; 500], 125.0), 50.0).unwrap();
        assert!(out.samples.iter().all(|&v| v == 0.0));
    }
}
