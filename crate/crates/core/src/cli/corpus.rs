//! Corpus files: the `UCS1` binary layout and its CSV equivalent.
//!
//! Binary: magic `UCS1`, little-endian `u32` fields `n_modalities`,
//! `n_segments`, `L`, `fs * 1000`, then per segment and per modality `L`
//! little-endian `f32` samples.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::signals::{AlignedSegment, Modality, SignalSegment, UnitSpace};

pub const CORPUS_MAGIC: &[u8; 4] = b"UCS1";

/// Dense `(segment, modality, index)` sample block.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub n_modalities: usize,
    pub seq_len: usize,
    pub fs_milli: u32,
    pub data: Vec<f32>,
}

impl Corpus {
    pub fn n_segments(&self) -> usize {
        if self.n_modalities == 0 || self.seq_len == 0 {
            0
        } else {
            self.data.len() / (self.n_modalities * self.seq_len)
        }
    }

    pub fn fs(&self) -> f64 {
        self.fs_milli as f64 / 1000.0
    }

    pub fn samples(&self, segment: usize, modality: usize) -> &[f32] {
        let start = (segment * self.n_modalities + modality) * self.seq_len;
        &self.data[start..start + self.seq_len]
    }

    /// Packs `modalities` of every record, in that order.
    pub fn from_aligned(records: &[AlignedSegment], modalities: &[Modality]) -> Result<Self> {
        let first = records.first().ok_or_else(|| Error::Format("no segments to write".into()))?;
        let seq_len = first.len();
        let fs = first.signals.first().map_or(0.0, |s| s.fs);
        let mut data = Vec::with_capacity(records.len() * modalities.len() * seq_len);
        for r in records {
            for &m in modalities {
                let s = r
                    .get(m)
                    .ok_or_else(|| Error::Format(format!("segment {} lacks {}", r.id, m.name())))?;
                crate::error::check_len(seq_len, s.len())?;
                if s.fs != fs {
                    return Err(Error::Format(format!("mixed sampling rates {fs} and {}", s.fs)));
                }
                data.extend(s.samples.iter().map(|&v| v as f32));
            }
        }
        Ok(Self {
            n_modalities: modalities.len(),
            seq_len,
            fs_milli: (fs * 1000.0).round() as u32,
            data,
        })
    }

    /// Unpacks into aligned records; `spaces[i]` labels modality column `i`.
    pub fn to_aligned(&self, spaces: &[(Modality, UnitSpace)]) -> Result<Vec<AlignedSegment>> {
        if spaces.len() != self.n_modalities {
            return Err(Error::Format(format!(
                "corpus has {} modalities, {} labels given",
                self.n_modalities,
                spaces.len()
            )));
        }
        Ok((0..self.n_segments())
            .map(|seg| AlignedSegment {
                id: seg,
                offset: 0,
                signals: spaces
                    .iter()
                    .enumerate()
                    .map(|(k, &(m, u))| {
                        let x = self.samples(seg, k).iter().map(|&v| v as f64).collect();
                        SignalSegment::new(x, self.fs(), m, u)
                    })
                    .collect(),
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 4 * self.data.len());
        out.extend_from_slice(CORPUS_MAGIC);
        for v in [
            self.n_modalities as u32,
            self.n_segments() as u32,
            self.seq_len as u32,
            self.fs_milli,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..4] != CORPUS_MAGIC {
            return Err(Error::Format("not a UCS1 corpus".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
        let (n_mod, n_seg, seq_len, fs_milli) = (word(0), word(1), word(2), word(3) as u32);
        let n = n_mod
            .checked_mul(n_seg)
            .and_then(|v| v.checked_mul(seq_len))
            .ok_or_else(|| Error::Format("corpus header overflows".into()))?;
        let body = &bytes[20..];
        if body.len() != 4 * n {
            return Err(Error::Format(format!(
                "corpus body has {} bytes, header implies {}",
                body.len(),
                4 * n
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(Self {
            n_modalities: n_mod,
            seq_len,
            fs_milli,
            data,
        })
    }

    /// `segment,modality,index,value`; `names[i]` labels modality column `i`.
    pub fn to_csv(&self, names: &[Modality]) -> Result<String> {
        if names.len() != self.n_modalities {
            return Err(Error::Format("one modality name per column needed".into()));
        }
        let mut out = String::from("segment,modality,index,value\n");
        for seg in 0..self.n_segments() {
            for (k, m) in names.iter().enumerate() {
                for (i, v) in self.samples(seg, k).iter().enumerate() {
                    let _ = writeln!(out, "{seg},{},{i},{v}", m.name());
                }
            }
        }
        Ok(out)
    }

    /// Parses the CSV form; modality columns follow first appearance. The
    /// sampling rate is not part of the CSV and must be supplied.
    pub fn from_csv(text: &str, fs: f64) -> Result<(Self, Vec<Modality>)> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("segment,modality,index,value") {
            return Err(Error::Format("missing corpus CSV header".into()));
        }
        let mut names: Vec<Modality> = Vec::new();
        let mut rows: Vec<(usize, usize, usize, f32)> = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = || Error::Format(format!("corpus CSV line {}: {line:?}", n + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            let m = Modality::parse(f[1].trim())?;
            let k = match names.iter().position(|&x| x == m) {
                Some(k) => k,
                None => {
                    names.push(m);
                    names.len() - 1
                }
            };
            rows.push((
                f[0].trim().parse().map_err(|_| bad())?,
                k,
                f[2].trim().parse().map_err(|_| bad())?,
                f[3].trim().parse().map_err(|_| bad())?,
            ));
        }
        let n_seg = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let seq_len = rows.iter().map(|r| r.2 + 1).max().unwrap_or(0);
        let n_mod = names.len();
        if rows.len() != n_seg * n_mod * seq_len {
            return Err(Error::Format(format!(
                "corpus CSV has {} values, expected {n_seg} x {n_mod} x {seq_len}",
                rows.len()
            )));
        }
        let mut data = vec![f32::NAN; rows.len()];
        for (s, k, i, v) in rows {
            data[(s * n_mod + k) * seq_len + i] = v;
        }
        Ok((
            Self {
                n_modalities: n_mod,
                seq_len,
                fs_milli: (fs * 1000.0).round() as u32,
                data,
            },
            names,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Corpus {
        Corpus {
            n_modalities: 3,
            seq_len: 4,
            fs_milli: 32000,
            data: (0..24).map(|i| i as f32 * 0.25 - 1.5).collect(),
        }
    }

    #[test]
    fn binary_roundtrip_is_byte_identical() {
        let c = sample();
        let bytes = c.to_bytes();
        assert_eq!(&bytes[..4], b"UCS1");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        let back = Corpus::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
        assert!(Corpus::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Corpus::from_bytes(b"UCS2aaaaaaaaaaaaaaaa").is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let c = sample();
        let names = [Modality::Ppg, Modality::Ecg, Modality::Bp];
        let text = c.to_csv(&names).unwrap();
        assert!(text.starts_with("segment,modality,index,value\n0,PPG,0,-1.5\n"));
        let (back, got) = Corpus::from_csv(&text, 32.0).unwrap();
        assert_eq!(back, c);
        assert_eq!(got, names);
    }

    #[test]
    fn aligned_roundtrip() {
        let c = sample();
        let spaces = [
            (Modality::Ppg, UnitSpace::Raw),
            (Modality::Ecg, UnitSpace::Raw),
            (Modality::Bp, UnitSpace::Mmhg),
        ];
        let recs = c.to_aligned(&spaces).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].get(Modality::Bp).unwrap().samples[0], 3.5);
        let back = Corpus::from_aligned(&recs, &[Modality::Ppg, Modality::Ecg, Modality::Bp]).unwrap();
        assert_eq!(back, c);
    }
}
