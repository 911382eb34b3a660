//! Periodic puncturing of the two parity streams. Systematic and termination
//! bits are always transmitted.
//!
//! Masks are strings of `0`/`1` applied cyclically over the information-bit
//! index: parity `p1_k` survives when `mask_p1[k mod len]` is `1`. The
//! default 2/3 masks are a superset of the 3/4 masks, so the parity added when
//! stepping from 3/4 to 2/3 is a well-defined set of extra positions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fec::turbo::TAIL_BITS;

/// Nominal code rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CodeRate {
    #[serde(rename = "1/3")]
    OneThird,
    #[serde(rename = "2/3")]
    TwoThirds,
    #[serde(rename = "3/4")]
    ThreeQuarters,
}

impl CodeRate {
    pub fn value(&self) -> f64 {
        match self {
            CodeRate::OneThird => 1.0 / 3.0,
            CodeRate::TwoThirds => 2.0 / 3.0,
            CodeRate::ThreeQuarters => 0.75,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CodeRate::OneThird => "1/3",
            CodeRate::TwoThirds => "2/3",
            CodeRate::ThreeQuarters => "3/4",
        }
    }

    /// Default `(p1, p2)` masks. Period 25 keeps the realized rate within 1%
    /// of nominal once the 12 termination bits are counted.
    pub fn default_masks(&self) -> (PunctureMask, PunctureMask) {
        let (a, b) = match self {
            CodeRate::OneThird => ("1", "1"),
            CodeRate::TwoThirds => ("1000100010001000100010000", "0010001000100010001000100"),
            CodeRate::ThreeQuarters => ("1000000010001000000010000", "0010001000000010001000000"),
        };
        (a.parse().expect("valid mask"), b.parse().expect("valid mask"))
    }
}

impl FromStr for CodeRate {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1/3" => Ok(CodeRate::OneThird),
            "2/3" => Ok(CodeRate::TwoThirds),
            "3/4" => Ok(CodeRate::ThreeQuarters),
            other => Err(Error::config(format!("unknown code rate {other:?}"))),
        }
    }
}

/// Cyclic bit-selection mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PunctureMask(pub Vec<bool>);

impl PunctureMask {
    #[inline]
    pub fn keeps(&self, k: usize) -> bool {
        self.0[k % self.0.len()]
    }
}

impl FromStr for PunctureMask {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::config(format!("invalid puncture mask character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if bits.is_empty() {
            return Err(Error::config("empty puncture mask"));
        }
        Ok(Self(bits))
    }
}

impl fmt::Display for PunctureMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Puncturer/depuncturer for a fixed block length.
#[derive(Clone, Debug)]
pub struct RateMatcher {
    pub target_rate: CodeRate,
    pub mask_p1: PunctureMask,
    pub mask_p2: PunctureMask,
    block_length: usize,
    kept: Vec<usize>,
}

impl RateMatcher {
    pub fn new(target_rate: CodeRate, block_length: usize) -> Self {
        let (a, b) = target_rate.default_masks();
        Self::with_masks(target_rate, a, b, block_length)
    }

    pub fn with_masks(target_rate: CodeRate, mask_p1: PunctureMask, mask_p2: PunctureMask, block_length: usize) -> Self {
        let k = block_length;
        let mut kept = Vec::new();
        for i in 0..k {
            kept.push(3 * i);
            if mask_p1.keeps(i) {
                kept.push(3 * i + 1);
            }
            if mask_p2.keeps(i) {
                kept.push(3 * i + 2);
            }
        }
        kept.extend(3 * k..3 * k + TAIL_BITS);
        Self { target_rate, mask_p1, mask_p2, block_length, kept }
    }

    pub fn block_length(&self) -> usize {
        self.block_length
    }

    pub fn mother_len(&self) -> usize {
        3 * self.block_length + TAIL_BITS
    }

    /// Transmitted length.
    pub fn output_len(&self) -> usize {
        self.kept.len()
    }

    /// `K / transmitted bits`, termination included.
    pub fn realized_rate(&self) -> f64 {
        self.block_length as f64 / self.output_len() as f64
    }

    /// Mother-codeword positions that are transmitted, in order.
    pub fn kept_positions(&self) -> &[usize] {
        &self.kept
    }

    /// Positions kept by `other` but not by `self`, in mother order.
    pub fn extra_positions(&self, other: &RateMatcher) -> Vec<usize> {
        let mut mine = vec![false; self.mother_len()];
        for &p in &self.kept {
            mine[p] = true;
        }
        other.kept.iter().copied().filter(|&p| !mine[p]).collect()
    }

    pub fn puncture<T: Copy>(&self, codeword: &[T]) -> Result<Vec<T>> {
        if codeword.len() != self.mother_len() {
            return Err(Error::DimensionMismatch { expected: self.mother_len(), got: codeword.len() });
        }
        Ok(self.kept.iter().map(|&p| codeword[p]).collect())
    }

    /// Scatters received LLRs back to mother positions; punctured positions
    /// get zero.
    pub fn depuncture(&self, llrs: &[f64]) -> Result<Vec<f64>> {
        if llrs.len() != self.output_len() {
            return Err(Error::DimensionMismatch { expected: self.output_len(), got: llrs.len() });
        }
        let mut out = vec![0.0; self.mother_len()];
        for (&p, &v) in self.kept.iter().zip(llrs) {
            out[p] = v;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn realized_rates_within_one_percent() {
        for k in [796, 1596] {
            for r in [CodeRate::OneThird, CodeRate::TwoThirds, CodeRate::ThreeQuarters] {
                let m = RateMatcher::new(r, k);
                let rel = (m.realized_rate() / r.value() - 1.0).abs();
                assert!(rel < 0.01, "K={k} rate {} realized {}", r.as_str(), m.realized_rate());
            }
        }
        assert_eq!(RateMatcher::new(CodeRate::OneThird, 796).output_len(), 3 * 796 + 12);
    }

    #[test]
    fn two_thirds_masks_contain_three_quarter_masks() {
        let (a34, b34) = CodeRate::ThreeQuarters.default_masks();
        let (a23, b23) = CodeRate::TwoThirds.default_masks();
        for i in 0..25 {
            assert!(!a34.keeps(i) || a23.keeps(i));
            assert!(!b34.keeps(i) || b23.keeps(i));
        }
        let m34 = RateMatcher::new(CodeRate::ThreeQuarters, 796);
        let m23 = RateMatcher::new(CodeRate::TwoThirds, 796);
        assert_eq!(m34.extra_positions(&m23).len(), m23.output_len() - m34.output_len());
    }

    #[test]
    fn depuncture_restores_surviving_positions() {
        let m = RateMatcher::new(CodeRate::ThreeQuarters, 100);
        let mother: Vec<f64> = (0..m.mother_len()).map(|i| i as f64 + 1.0).collect();
        let sent = m.puncture(&mother).unwrap();
        let back = m.depuncture(&sent).unwrap();
        for (i, (&a, &b)) in mother.iter().zip(&back).enumerate() {
            if m.kept_positions().contains(&i) {
                assert_eq!(a, b);
            } else {
                assert_eq!(b, 0.0);
            }
        }
        // Systematic and tail bits always survive.
        for i in 0..100 {
            assert_eq!(back[3 * i], mother[3 * i]);
        }
        assert!(back[300..].iter().all(|&v| v != 0.0));
    }

    #[test]
    fn masks_parse_and_print() {
        let m: PunctureMask = "1000100".parse().unwrap();
        assert_eq!(m.to_string(), "1000100");
        assert!("10x".parse::<PunctureMask>().is_err());
        assert!("".parse::<PunctureMask>().is_err());
        assert_eq!("3/4".parse::<CodeRate>().unwrap(), CodeRate::ThreeQuarters);
        assert!("1/2".parse::<CodeRate>().is_err());
    }
}
