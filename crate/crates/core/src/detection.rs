//! Gray-labelled QAM constellations and the offset-corrected joint LLR
//! detector: Max-Log-MAP over the super-constellation of the desired tower
//! and all interferers, each weighted by its phase ramp and channel gain.
//!
//! LLR orientation: positive means bit 0 is more likely,
//! `LLR = (min_{b=1} d - min_{b=0} d) / sigma2` with `d = |y - sum_m C_m H_m X_m|^2`.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::C64;

/// Modulation order of a square QAM alphabet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modulation {
    #[serde(rename = "qam4")]
    Qam4,
    #[serde(rename = "qam16")]
    Qam16,
}

impl Modulation {
    pub fn order(&self) -> usize {
        match self {
            Modulation::Qam4 => 4,
            Modulation::Qam16 => 16,
        }
    }

    pub fn bits_per_symbol(&self) -> usize {
        match self {
            Modulation::Qam4 => 2,
            Modulation::Qam16 => 4,
        }
    }

    pub fn constellation(&self) -> Constellation {
        match self {
            Modulation::Qam4 => Constellation::qam4(),
            Modulation::Qam16 => Constellation::qam16(),
        }
    }
}

/// Unit-energy Gray-labelled constellation. `points[label]` is the point for
/// the bit label `label`, first bit in the most significant position.
#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    pub order: usize,
    pub points: Vec<C64>,
    pub bits_per_symbol: usize,
}

impl Constellation {
    /// Bits `[I sign, Q sign]`, 0 meaning positive; `00 -> (1 + j)/sqrt(2)`.
    pub fn qam4() -> Self {
        let points = (0..4u32)
            .map(|label| {
                let i = if label & 0b10 == 0 { 1.0 } else { -1.0 };
                let q = if label & 0b01 == 0 { 1.0 } else { -1.0 };
                C64::new(i * FRAC_1_SQRT_2, q * FRAC_1_SQRT_2)
            })
            .collect();
        Self { order: 4, points, bits_per_symbol: 2 }
    }

    /// Bits `[I sign, Q sign, I magnitude, Q magnitude]`: sign bit 0 means
    /// positive, magnitude bit 0 means the inner level, over levels
    /// `{+-1, +-3} / sqrt(10)`.
    pub fn qam16() -> Self {
        let level = |sign: u32, mag: u32| -> f64 {
            let a = if mag == 0 { 1.0 } else { 3.0 };
            if sign == 0 {
                a
            } else {
                -a
            }
        };
        let scale = 1.0 / 10f64.sqrt();
        let points = (0..16u32)
            .map(|label| {
                let (si, sq, mi, mq) = ((label >> 3) & 1, (label >> 2) & 1, (label >> 1) & 1, label & 1);
                C64::new(level(si, mi) * scale, level(sq, mq) * scale)
            })
            .collect();
        Self { order: 16, points, bits_per_symbol: 4 }
    }

    /// Bit `lambda` (0 = first) of `label`.
    #[inline]
    pub fn bit(&self, label: usize, lambda: usize) -> usize {
        (label >> (self.bits_per_symbol - 1 - lambda)) & 1
    }

    /// Label of the nearest point.
    pub fn nearest(&self, y: C64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Maps bits (`0`/`1` bytes) to points, `bits_per_symbol` bits per point.
pub fn map_bits(bits: &[u8], c: &Constellation) -> Result<Vec<C64>> {
    if bits.len() % c.bits_per_symbol != 0 {
        return Err(Error::DimensionMismatch {
            expected: bits.len().div_ceil(c.bits_per_symbol) * c.bits_per_symbol,
            got: bits.len(),
        });
    }
    Ok(bits
        .chunks(c.bits_per_symbol)
        .map(|chunk| c.points[chunk.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize)])
        .collect())
}

/// Nearest-point hard demapping back to bits.
pub fn demap_hard(symbols: &[C64], c: &Constellation) -> Vec<u8> {
    let mut out = Vec::with_capacity(symbols.len() * c.bits_per_symbol);
    for &y in symbols {
        let label = c.nearest(y);
        for lambda in 0..c.bits_per_symbol {
            out.push(c.bit(label, lambda) as u8);
        }
    }
    out
}

/// Everything the joint detector needs for one bin. Tower 0 is desired.
#[derive(Clone, Debug)]
pub struct DetectionContext<'a> {
    pub cfr_row: Vec<C64>,
    pub phase_ramps: Vec<C64>,
    pub sigma2: f64,
    pub constellations: Vec<&'a Constellation>,
}

impl DetectionContext<'_> {
    fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) {
            return Err(Error::invalid(format!("sigma2 must be > 0, got {}", self.sigma2)));
        }
        let m = self.cfr_row.len();
        if m == 0 || self.phase_ramps.len() != m || self.constellations.len() != m {
            return Err(Error::DimensionMismatch { expected: m.max(1), got: self.phase_ramps.len() });
        }
        Ok(())
    }

    /// Effective gains `C_m H_m`.
    pub fn gains(&self) -> Vec<C64> {
        self.cfr_row.iter().zip(&self.phase_ramps).map(|(h, c)| h * c).collect()
    }
}

/// Joint LLRs of the desired symbol's bits for one bin. Enumerates the full
/// super-constellation (`prod_m |X_m|` hypotheses).
pub fn ocjllr_bin(y_d: C64, ctx: &DetectionContext) -> Result<Vec<f64>> {
    ctx.validate()?;
    let mut det = JointDetector::new(ctx.constellations.iter().map(|c| (*c).clone()).collect())?;
    let mut out = vec![0.0; ctx.constellations[0].bits_per_symbol];
    det.llrs(y_d, &ctx.gains(), ctx.sigma2, &mut out)?;
    Ok(out)
}

/// Single-tower Max-Log LLRs (no interferer modelling).
pub fn conventional_llr_bin(y: C64, h: C64, sigma2: f64, c: &Constellation) -> Result<Vec<f64>> {
    ocjllr_bin(
        y,
        &DetectionContext {
            cfr_row: vec![h],
            phase_ramps: vec![C64::new(1.0, 0.0)],
            sigma2,
            constellations: vec![c],
        },
    )
}

/// Reusable joint detector. The interferer sum set
/// `S = { sum_{m>=1} g_m x_m }` is built once per bin, then each desired
/// point scans it, which is the full super-constellation search reordered.
#[derive(Clone, Debug)]
pub struct JointDetector {
    constellations: Vec<Constellation>,
    sums: Vec<C64>,
    scratch: Vec<C64>,
    scaled: Vec<C64>,
    dist: Vec<f64>,
}

impl JointDetector {
    pub fn new(constellations: Vec<Constellation>) -> Result<Self> {
        if constellations.is_empty() {
            return Err(Error::invalid("detector needs at least the desired constellation"));
        }
        let n: usize = constellations[1..].iter().map(|c| c.order).product();
        let d0 = constellations[0].order;
        Ok(Self {
            constellations,
            sums: Vec::with_capacity(n),
            scratch: Vec::with_capacity(n),
            scaled: Vec::new(),
            dist: vec![0.0; d0],
        })
    }

    pub fn n_towers(&self) -> usize {
        self.constellations.len()
    }

    /// Number of joint hypotheses `prod_m |X_m|`.
    pub fn hypothesis_count(&self) -> usize {
        self.constellations.iter().map(|c| c.order).product()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.constellations[0].bits_per_symbol
    }

    /// Writes the desired symbol's LLRs into `out` for effective gains `g`.
    pub fn llrs(&mut self, y: C64, g: &[C64], sigma2: f64, out: &mut [f64]) -> Result<()> {
        if !(sigma2 > 0.0) {
            return Err(Error::invalid(format!("sigma2 must be > 0, got {sigma2}")));
        }
        if g.len() != self.constellations.len() {
            return Err(Error::DimensionMismatch { expected: self.constellations.len(), got: g.len() });
        }
        let bps = self.constellations[0].bits_per_symbol;
        if out.len() != bps {
            return Err(Error::DimensionMismatch { expected: bps, got: out.len() });
        }
        self.sums.clear();
        self.sums.push(C64::new(0.0, 0.0));
        for (c, &gm) in self.constellations[1..].iter().zip(&g[1..]) {
            self.scaled.clear();
            self.scaled.extend(c.points.iter().map(|p| gm * p));
            self.scratch.clear();
            for s in &self.sums {
                self.scratch.extend(self.scaled.iter().map(|p| s + p));
            }
            std::mem::swap(&mut self.sums, &mut self.scratch);
        }
        let c0 = &self.constellations[0];
        for (label, p) in c0.points.iter().enumerate() {
            let r = y - g[0] * p;
            self.dist[label] = self
                .sums
                .iter()
                .map(|s| (r.re - s.re) * (r.re - s.re) + (r.im - s.im) * (r.im - s.im))
                .fold(f64::INFINITY, f64::min);
        }
        for (lambda, o) in out.iter_mut().enumerate() {
            let mut d0 = f64::INFINITY;
            let mut d1 = f64::INFINITY;
            for (label, &d) in self.dist.iter().enumerate() {
                if c0.bit(label, lambda) == 0 {
                    d0 = d0.min(d);
                } else {
                    d1 = d1.min(d);
                }
            }
            *o = (d1 - d0) / sigma2;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::complex_gaussian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constellations_have_unit_energy_and_gray_labels() {
        for c in [Constellation::qam4(), Constellation::qam16()] {
            let e = c.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / c.order as f64;
            assert!((e - 1.0).abs() < 1e-12);
            let dmin = (0..c.order)
                .flat_map(|i| (0..c.order).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| (c.points[i] - c.points[j]).norm())
                .fold(f64::INFINITY, f64::min);
            for i in 0..c.order {
                for j in 0..c.order {
                    if i != j && ((c.points[i] - c.points[j]).norm() - dmin).abs() < 1e-9 {
                        assert_eq!((i ^ j).count_ones(), 1, "{i} {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn map_bits_examples() {
        let c = Constellation::qam4();
        let s = map_bits(&[0, 0], &c).unwrap();
        assert!((s[0] - C64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2)).norm() < 1e-15);
        assert!(map_bits(&[0, 0, 1], &c).is_err());
        for c in [Constellation::qam4(), Constellation::qam16()] {
            for label in 0..c.order {
                let bits: Vec<u8> = (0..c.bits_per_symbol).map(|l| c.bit(label, l) as u8).collect();
                assert_eq!(demap_hard(&map_bits(&bits, &c).unwrap(), &c), bits);
            }
        }
    }

    #[test]
    fn mapped_random_bits_have_unit_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = Constellation::qam16();
        let bits: Vec<u8> = (0..400_000).map(|_| rng.random_range(0..2)).collect();
        let s = map_bits(&bits, &c).unwrap();
        let e = s.iter().map(|p| p.norm_sqr()).sum::<f64>() / s.len() as f64;
        assert!((e - 1.0).abs() < 0.01);
    }

    #[test]
    fn single_tower_on_point_llr() {
        let c = Constellation::qam4();
        let y = c.points[0];
        let llr = conventional_llr_bin(y, C64::new(1.0, 0.0), 1.0, &c).unwrap();
        // Nearest point with the opposite bit is at distance sqrt(2).
        for v in llr {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn equidistant_input_gives_zero_llr() {
        let c = Constellation::qam4();
        // On the imaginary axis: bit 0 (I sign) is undecided.
        let llr = conventional_llr_bin(C64::new(0.0, 0.3), C64::new(1.0, 0.0), 0.5, &c).unwrap();
        assert!(llr[0].abs() < 1e-15);
        assert!(llr[1] > 0.0);
    }

    #[test]
    fn errors_on_bad_sigma() {
        let c = Constellation::qam4();
        assert!(conventional_llr_bin(C64::new(0.0, 0.0), C64::new(1.0, 0.0), 0.0, &c).is_err());
    }

    /// Exhaustive max-log and exact-sum LLRs by direct enumeration.
    fn brute_force(y: C64, g: &[C64], s2: f64, cs: &[&Constellation]) -> (Vec<f64>, Vec<f64>) {
        let total: usize = cs.iter().map(|c| c.order).product();
        let bps = cs[0].bits_per_symbol;
        let mut min = vec![[f64::INFINITY; 2]; bps];
        let mut sum = vec![[0.0f64; 2]; bps];
        for h in 0..total {
            let mut rem = h;
            let mut labels = vec![0; cs.len()];
            for (m, c) in cs.iter().enumerate().rev() {
                labels[m] = rem % c.order;
                rem /= c.order;
            }
            let x: C64 = (0..cs.len()).map(|m| g[m] * cs[m].points[labels[m]]).sum();
            let d = (y - x).norm_sqr();
            for lambda in 0..bps {
                let b = cs[0].bit(labels[0], lambda);
                min[lambda][b] = min[lambda][b].min(d);
                sum[lambda][b] += (-d / s2).exp();
            }
        }
        (
            min.iter().map(|m| (m[1] - m[0]) / s2).collect(),
            sum.iter().map(|s| (s[0] / s[1]).ln()).collect(),
        )
    }

    #[test]
    fn two_tower_matches_exhaustive_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (q4, q16) = (Constellation::qam4(), Constellation::qam16());
        for trial in 0..200 {
            let cs: Vec<&Constellation> = if trial % 2 == 0 { vec![&q4, &q4] } else { vec![&q16, &q4] };
            let h: Vec<C64> = (0..2).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
            let c: Vec<C64> = (0..2).map(|_| C64::from_polar(1.0, rng.random_range(0.0..6.3))).collect();
            let s2 = rng.random_range(0.05..1.0);
            let y = complex_gaussian(&mut rng, 2.0);
            let ctx = DetectionContext { cfr_row: h.clone(), phase_ramps: c.clone(), sigma2: s2, constellations: cs.clone() };
            let got = ocjllr_bin(y, &ctx).unwrap();
            let g: Vec<C64> = h.iter().zip(&c).map(|(a, b)| a * b).collect();
            let (maxlog, exact) = brute_force(y, &g, s2, &cs);
            let gap = ((cs[0].order * cs[1].order / 2) as f64).ln();
            for lambda in 0..got.len() {
                assert!((got[lambda] - maxlog[lambda]).abs() <= 1e-9 * (1.0 + maxlog[lambda].abs()));
                assert!((got[lambda] - exact[lambda]).abs() <= gap + 1e-9);
            }
        }
    }

    #[test]
    fn hypothesis_counts() {
        let q4 = Constellation::qam4();
        let q16 = Constellation::qam16();
        assert_eq!(JointDetector::new(vec![q4.clone(); 4]).unwrap().hypothesis_count(), 256);
        assert_eq!(JointDetector::new(vec![q16.clone(); 4]).unwrap().hypothesis_count(), 65536);
    }

    #[test]
    fn conventional_equals_single_tower_joint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = Constellation::qam16();
        for _ in 0..50 {
            let y = complex_gaussian(&mut rng, 1.0);
            let h = complex_gaussian(&mut rng, 1.0);
            let a = conventional_llr_bin(y, h, 0.3, &c).unwrap();
            let ctx = DetectionContext { cfr_row: vec![h], phase_ramps: vec![C64::new(1.0, 0.0)], sigma2: 0.3, constellations: vec![&c] };
            assert_eq!(a, ocjllr_bin(y, &ctx).unwrap());
        }
    }

    #[test]
    fn rotation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = Constellation::qam16();
        for _ in 0..50 {
            let y = complex_gaussian(&mut rng, 1.0);
            let h = complex_gaussian(&mut rng, 1.0);
            let r = C64::from_polar(1.0, rng.random_range(0.0..6.3));
            let a = conventional_llr_bin(y, h, 0.3, &c).unwrap();
            let b = conventional_llr_bin(y * r, h * r, 0.3, &c).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12 * (1.0 + u.abs()));
            }
        }
    }

    #[test]
    fn high_snr_hard_decisions_are_nearest_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = Constellation::qam16();
        for _ in 0..1000 {
            let h = complex_gaussian(&mut rng, 1.0);
            let y = complex_gaussian(&mut rng, 1.0);
            let llr = conventional_llr_bin(y, h, 1e-4, &c).unwrap();
            let hard: Vec<u8> = llr.iter().map(|&v| u8::from(v < 0.0)).collect();
            let label = (0..16)
                .min_by(|&a, &b| (y - h * c.points[a]).norm_sqr().partial_cmp(&(y - h * c.points[b]).norm_sqr()).unwrap())
                .unwrap();
            let want: Vec<u8> = (0..4).map(|l| c.bit(label, l) as u8).collect();
            assert_eq!(hard, want);
        }
    }

    #[test]
    fn llr_orientation_flip_is_exact_negation() {
        // Swapping the roles of the two hypotheses negates every LLR exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = Constellation::qam4();
        for _ in 0..50 {
            let y = complex_gaussian(&mut rng, 1.0);
            let llr = conventional_llr_bin(y, C64::new(1.0, 0.0), 0.7, &c).unwrap();
            let flipped = conventional_llr_bin(-y, C64::new(1.0, 0.0), 0.7, &c).unwrap();
            // Negating y swaps every sign bit of 4-QAM.
            for (a, b) in llr.iter().zip(&flipped) {
                assert_eq!(*a, -*b);
            }
        }
    }
}
