//! Forward error correction: the turbo codec, rate matching, and placement of
//! extra parity on pilot-symbol bins freed by a reduced joint pilot plan.

pub mod ratematch;
pub mod turbo;

pub use ratematch::{CodeRate, PunctureMask, RateMatcher};
pub use turbo::{turbo_decode, turbo_encode, TurboCodec, TurboConfig};

use crate::detection::{map_bits, Constellation};
use crate::error::{Error, Result};
use crate::ofdm::ResourceGrid;

/// Bits that fit on `n_bins` freed bins.
pub fn freed_capacity_bits(n_bins: usize, c: &Constellation) -> usize {
    n_bins * c.bits_per_symbol
}

/// Maps `parity_bits` onto the first freed bins (indices into the used band)
/// of the frame's estimation symbol. The bit count is zero-padded to a whole
/// number of symbols; freed bins beyond the parity stay untouched.
pub fn place_rate_improvement_parity(
    parity_bits: &[u8],
    freed_bins: &[usize],
    frame: &ResourceGrid,
    c: &Constellation,
) -> Result<ResourceGrid> {
    let n_sym = parity_bits.len().div_ceil(c.bits_per_symbol);
    if n_sym > freed_bins.len() {
        return Err(Error::CapacityExceeded {
            needed: n_sym,
            available: freed_bins.len(),
        });
    }
    let mut padded = parity_bits.to_vec();
    padded.resize(n_sym * c.bits_per_symbol, 0);
    let symbols = map_bits(&padded, c)?;
    let mut out = frame.clone();
    let est = out
        .symbols
        .first_mut()
        .ok_or_else(|| Error::invalid("frame has no estimation symbol"))?;
    for (&bin, s) in freed_bins.iter().zip(symbols) {
        let size = est.len();
        let slot = est.get_mut(bin).ok_or(Error::IndexOutOfRange { index: bin, size })?;
        *slot = s;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::demap_hard;
    use crate::numerics::C64;
    use crate::ofdm::OfdmConfig;
    use crate::pilots::{make_reduced_joint_plan, PilotFamily};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn full_scale_freed_capacity() {
        let cfg = OfdmConfig::full_scale();
        let plan = make_reduced_joint_plan(4, &cfg.used_subcarriers, 8, 2048, PilotFamily::Zc, 0).unwrap();
        assert_eq!(plan.freed.len(), 900);
        assert_eq!(freed_capacity_bits(plan.freed.len(), &Constellation::qam4()), 1800);
    }

    #[test]
    fn empty_parity_leaves_frame_unchanged() {
        let cfg = OfdmConfig::desk();
        let plan = make_reduced_joint_plan(4, &cfg.used_subcarriers, 8, 256, PilotFamily::Zc, 0).unwrap();
        let mut frame = ResourceGrid::zeros(&cfg);
        plan.write_pilots(0, &mut frame.symbols[0]).unwrap();
        let out = place_rate_improvement_parity(&[], &plan.freed, &frame, &Constellation::qam4()).unwrap();
        assert_eq!(out, frame);
    }

    #[test]
    fn loopback_recovers_parity() {
        let cfg = OfdmConfig::desk();
        let plan = make_reduced_joint_plan(4, &cfg.used_subcarriers, 8, 256, PilotFamily::Zc, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bits: Vec<u8> = (0..226).map(|_| rng.random_range(0..2)).collect();
        let mut frame = ResourceGrid::zeros(&cfg);
        plan.write_pilots(0, &mut frame.symbols[0]).unwrap();
        let c = Constellation::qam4();
        let out = place_rate_improvement_parity(&bits, &plan.freed, &frame, &c).unwrap();
        let rx: Vec<C64> = plan.freed.iter().map(|&b| out.symbols[0][b]).collect();
        assert_eq!(demap_hard(&rx, &c), bits);
        // Pilots untouched.
        for &p in &plan.positions[0] {
            assert_eq!(out.symbols[0][p], frame.symbols[0][p]);
        }
        assert!(matches!(
            place_rate_improvement_parity(&[0; 228], &plan.freed, &frame, &c),
            Err(Error::CapacityExceeded { needed: 114, available: 113 })
        ));
    }
}
