//! Fixed-point binary encoding of the design vector over a calibrated box.
//!
//! Each parameter gets its own MSB-first substring; substrings are
//! concatenated in parameter order.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blackhole::SearchRegion;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodingError {
    #[error("bitstring has {got} bits, allocation expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Bits in parameter order; entries are 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bitstring(pub Vec<u8>);

impl Bitstring {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    /// Integer value reading position 0 as the most significant bit.
    pub fn to_index(&self) -> u64 {
        self.0.iter().fold(0u64, |acc, b| (acc << 1) | (*b as u64))
    }

    pub fn from_index(index: u64, n: usize) -> Self {
        Self((0..n).map(|r| ((index >> (n - 1 - r)) & 1) as u8).collect())
    }

    pub fn parse(s: &str) -> Option<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Some(0),
                '1' => Some(1),
                _ => None,
            })
            .collect::<Option<Vec<u8>>>()
            .map(Self)
    }

    /// Spin of each bit under `b = (1 - z) / 2`.
    pub fn spins(&self) -> Vec<i8> {
        self.0.iter().map(|b| 1 - 2 * (*b as i8)).collect()
    }
}

impl fmt::Display for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingMode {
    /// `clamp(ceil(log2(width / δ)), 2, 4)` bits per parameter.
    Adaptive,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitAllocation {
    pub bits_per_param: Vec<usize>,
    pub offsets: Vec<usize>,
    pub n_total: usize,
}

impl BitAllocation {
    pub fn from_bits(bits_per_param: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(bits_per_param.len());
        let mut total = 0;
        for b in &bits_per_param {
            offsets.push(total);
            total += b;
        }
        Self {
            bits_per_param,
            offsets,
            n_total: total,
        }
    }
}

pub const ADAPTIVE_MIN_BITS: usize = 2;
pub const ADAPTIVE_MAX_BITS: usize = 4;

pub fn allocate_bits(region: &SearchRegion, thresholds: &[f64], mode: EncodingMode) -> BitAllocation {
    let bits = (0..region.dim())
        .map(|j| match mode {
            EncodingMode::Fixed(n) => n,
            EncodingMode::Adaptive => {
                let w = region.width(j);
                if w <= 0.0 {
                    ADAPTIVE_MIN_BITS
                } else {
                    let raw = (w / thresholds[j]).log2().ceil();
                    if raw <= ADAPTIVE_MIN_BITS as f64 {
                        ADAPTIVE_MIN_BITS
                    } else if raw >= ADAPTIVE_MAX_BITS as f64 {
                        ADAPTIVE_MAX_BITS
                    } else {
                        raw as usize
                    }
                }
            }
        })
        .collect();
    BitAllocation::from_bits(bits)
}

fn code_value(lower: f64, upper: f64, nu: u64, n_bits: usize) -> f64 {
    let max = (1u64 << n_bits) - 1;
    let width = upper - lower;
    if width <= 0.0 || nu == 0 {
        lower
    } else if nu == max {
        upper
    } else {
        (lower + width / max as f64 * nu as f64).min(upper)
    }
}

pub fn decode(b: &Bitstring, alloc: &BitAllocation, region: &SearchRegion) -> Result<Vec<f64>, EncodingError> {
    if b.len() != alloc.n_total {
        return Err(EncodingError::LengthMismatch {
            expected: alloc.n_total,
            got: b.len(),
        });
    }
    Ok(alloc
        .bits_per_param
        .iter()
        .zip(&alloc.offsets)
        .enumerate()
        .map(|(j, (&n, &off))| {
            let nu = b.0[off..off + n]
                .iter()
                .fold(0u64, |acc, bit| (acc << 1) | (*bit as u64));
            code_value(region.lower[j], region.upper[j], nu, n)
        })
        .collect())
}

/// Nearest code for each (clamped) coordinate; exact half steps round up.
pub fn encode_nearest(p: &[f64], alloc: &BitAllocation, region: &SearchRegion) -> Bitstring {
    let p = region.clamp(p);
    let mut bits = Vec::with_capacity(alloc.n_total);
    for (j, &n) in alloc.bits_per_param.iter().enumerate() {
        let max = (1u64 << n) - 1;
        let width = region.width(j);
        let nu = if width <= 0.0 {
            0
        } else {
            let scaled = (p[j] - region.lower[j]) * max as f64 / width;
            ((scaled + 0.5).floor().max(0.0) as u64).min(max)
        };
        for l in 0..n {
            bits.push(((nu >> (n - 1 - l)) & 1) as u8);
        }
    }
    Bitstring(bits)
}

/// Quantization step of each parameter.
pub fn steps(alloc: &BitAllocation, region: &SearchRegion) -> Vec<f64> {
    alloc
        .bits_per_param
        .iter()
        .enumerate()
        .map(|(j, &n)| region.width(j) / ((1u64 << n) - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn region1(lo: f64, hi: f64) -> SearchRegion {
        SearchRegion::new(vec![lo], vec![hi]).unwrap()
    }

    #[test]
    fn adaptive_allocation() {
        let r = SearchRegion::new(vec![0.0; 4], vec![40.0, 4.0, 500.0, 0.0]).unwrap();
        let a = allocate_bits(&r, &[5.0; 4], EncodingMode::Adaptive);
        assert_eq!(a.bits_per_param, vec![3, 2, 4, 2]);
        assert_eq!(a.offsets, vec![0, 3, 5, 9]);
        assert_eq!(a.n_total, 11);
        let f = allocate_bits(&r, &[5.0; 4], EncodingMode::Fixed(3));
        assert_eq!(f.bits_per_param, vec![3; 4]);
    }

    #[test]
    fn decode_examples() {
        let r = region1(0.0, 50.0);
        let a = BitAllocation::from_bits(vec![3]);
        let d = |s: &str| decode(&Bitstring::parse(s).unwrap(), &a, &r).unwrap()[0];
        assert_eq!(d("000"), 0.0);
        assert_eq!(d("111"), 50.0);
        assert!((d("100") - 200.0 / 7.0).abs() < 1e-12);
        assert!(matches!(
            decode(&Bitstring::parse("10").unwrap(), &a, &r),
            Err(EncodingError::LengthMismatch { .. })
        ));
        let flat = region1(2.5, 2.5);
        assert_eq!(decode(&Bitstring::parse("101").unwrap(), &a, &flat).unwrap()[0], 2.5);
    }

    #[test]
    fn encode_examples() {
        let r = region1(0.0, 50.0);
        let a = BitAllocation::from_bits(vec![3]);
        assert_eq!(encode_nearest(&[25.0], &a, &r).to_string(), "100");
        assert_eq!(encode_nearest(&[-100.0], &a, &r).to_string(), "000");
        assert_eq!(encode_nearest(&[1e9], &a, &r).to_string(), "111");
    }

    #[test]
    fn roundtrip_on_every_code() {
        let r = SearchRegion::new(vec![-3.0, 0.0, 10.0], vec![7.0, 2.0, 10.0]).unwrap();
        let a = BitAllocation::from_bits(vec![3, 2, 2]);
        for idx in 0..(1u64 << a.n_total) {
            let b = Bitstring::from_index(idx, a.n_total);
            let p = decode(&b, &a, &r).unwrap();
            let back = encode_nearest(&p, &a, &r);
            // Zero-width parameters always re-encode to the all-zero code.
            let mut want = b.clone();
            want.0[5] = 0;
            want.0[6] = 0;
            assert_eq!(back, want);
        }
    }

    #[test]
    fn index_roundtrip() {
        let b = Bitstring::parse("0010110").unwrap();
        assert_eq!(b.to_index(), 0b0010110);
        assert_eq!(Bitstring::from_index(b.to_index(), 7), b);
        assert_eq!(b.spins(), vec![1, 1, -1, 1, -1, -1, 1]);
    }

    proptest! {
        #[test]
        fn quantization_error_within_half_step(
            lo in -50.0..50.0f64, w in 0.1..100.0f64, n in 2usize..5, u in 0.0..1.0f64,
        ) {
            let r = region1(lo, lo + w);
            let a = BitAllocation::from_bits(vec![n]);
            let p = lo + u * w;
            let q = decode(&encode_nearest(&[p], &a, &r), &a, &r).unwrap()[0];
            let step = steps(&a, &r)[0];
            prop_assert!((q - p).abs() <= step / 2.0 + 1e-12);
            prop_assert!(r.contains(&[q]));
        }

        #[test]
        fn decode_injective(lo in -10.0..10.0f64, w in 0.01..30.0f64, n in 1usize..6) {
            let r = region1(lo, lo + w);
            let a = BitAllocation::from_bits(vec![n]);
            let vals: Vec<f64> = (0..(1u64 << n))
                .map(|i| decode(&Bitstring::from_index(i, n), &a, &r).unwrap()[0])
                .collect();
            for v in vals.windows(2) {
                prop_assert!(v[1] > v[0]);
            }
        }
    }
}
