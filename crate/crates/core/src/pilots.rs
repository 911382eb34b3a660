//! Pilot sequences and placements for joint (pilot-on-pilot) and orthogonal
//! (frequency-interleaved) estimation.
//!
//! A plan lives on a *band*: an ordered list of FFT bins. Positions are indices
//! into that band, so the same plan type describes the used-subcarrier band of
//! an OFDM symbol and the all-bins band used by the full-band MSE experiments.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::C64;

/// Pilot placement strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotScheme {
    /// Every tower transmits on the same bins with its own sequence.
    Joint,
    /// Towers use disjoint interleaved bins.
    Orthogonal,
}

/// Pilot sequence family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotFamily {
    /// Zadoff-Chu sequences of the largest prime length not exceeding the
    /// pilot count, cyclically extended, one root per tower.
    Zc,
    /// Seeded random QPSK, redrawn until pairwise correlation is low.
    RandomQpsk,
    /// One unit-modulus base sequence with a per-tower linear phase
    /// `exp(-j 2 pi b m L / N)`: tower `m` appears delayed by `m L` samples.
    /// On a band covering all `N` bins the joint Gram matrix is exactly
    /// `N I`.
    CyclicShift,
}

impl PilotFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            PilotFamily::Zc => "zc",
            PilotFamily::RandomQpsk => "random_qpsk",
            PilotFamily::CyclicShift => "cyclic_shift",
        }
    }
}

/// Zadoff-Chu roots handed out to towers in order.
pub const ZC_ROOTS: [usize; 8] = [1, 7, 11, 13, 3, 5, 17, 19];

/// Largest acceptable pairwise normalized correlation between joint
/// sequences of length `n`: 0.1, relaxed to `1.2 / sqrt(n)` for short
/// sequences where no polyphase family can reach 0.1.
pub fn correlation_limit(n: usize) -> f64 {
    (1.2 / (n as f64).sqrt()).max(0.1)
}

/// Pilot placement and sequences for `M` towers.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotPlan {
    pub scheme: PilotScheme,
    pub family: PilotFamily,
    /// FFT bins of the band the plan is defined on.
    pub band: Vec<usize>,
    /// Per-tower pilot positions as indices into `band`.
    pub positions: Vec<Vec<usize>>,
    /// Per-tower unit-modulus sequences, aligned with `positions`.
    pub sequences: Vec<Vec<C64>>,
    /// Amplitude applied to every pilot at transmission.
    pub boost: f64,
    /// Total pilot bins N_p (the union over towers).
    pub n_pilots_total: usize,
    /// Band indices not used by any pilot (nonempty only for reduced plans).
    pub freed: Vec<usize>,
    /// Number of CIR taps per tower the plan was validated for.
    pub l_taps: usize,
}

impl PilotPlan {
    pub fn n_towers(&self) -> usize {
        self.positions.len()
    }

    /// FFT bins carrying tower `m`'s pilots.
    pub fn pilot_bins(&self, m: usize) -> Vec<usize> {
        self.positions[m].iter().map(|&p| self.band[p]).collect()
    }

    /// Transmitted pilot values of tower `m` (sequence times boost).
    pub fn tx_values(&self, m: usize) -> Vec<C64> {
        self.sequences[m].iter().map(|&s| s * self.boost).collect()
    }

    /// FFT bins observed by the estimator, in row order: the shared set for a
    /// joint plan, the concatenation of every tower's set for an orthogonal
    /// plan.
    pub fn observation_bins(&self) -> Vec<usize> {
        match self.scheme {
            PilotScheme::Joint => self.pilot_bins(0),
            PilotScheme::Orthogonal => (0..self.n_towers()).flat_map(|m| self.pilot_bins(m)).collect(),
        }
    }

    /// Picks the observation bins out of a full `N`-bin spectrum.
    pub fn gather(&self, spectrum: &[C64]) -> Result<Vec<C64>> {
        self.observation_bins()
            .into_iter()
            .map(|b| {
                spectrum
                    .get(b)
                    .copied()
                    .ok_or(Error::IndexOutOfRange { index: b, size: spectrum.len() })
            })
            .collect()
    }

    /// Total transmitted pilot energy summed over towers.
    pub fn total_energy(&self) -> f64 {
        (0..self.n_towers())
            .map(|m| self.tx_values(m).iter().map(|v| v.norm_sqr()).sum::<f64>())
            .sum()
    }

    /// Writes tower `m`'s pilots into a band-indexed symbol.
    pub fn write_pilots(&self, m: usize, symbol: &mut [C64]) -> Result<()> {
        if symbol.len() != self.band.len() {
            return Err(Error::DimensionMismatch { expected: self.band.len(), got: symbol.len() });
        }
        for (&p, v) in self.positions[m].iter().zip(self.tx_values(m)) {
            symbol[p] = v;
        }
        Ok(())
    }

    /// Largest pairwise normalized inner product between tower sequences.
    pub fn max_cross_correlation(&self) -> f64 {
        max_cross_correlation(&self.sequences)
    }
}

/// `|<a, b>| / (|a| |b|)` maximized over distinct pairs (0 for one sequence).
pub fn max_cross_correlation(seqs: &[Vec<C64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..seqs.len() {
        for j in i + 1..seqs.len() {
            let dot: C64 = seqs[i].iter().zip(&seqs[j]).map(|(a, b)| a.conj() * b).sum();
            let na = seqs[i].iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            let nb = seqs[j].iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            worst = worst.max(dot.norm() / (na * nb));
        }
    }
    worst
}

fn is_prime(n: usize) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
}

/// Zadoff-Chu sequence of length `n_zc` (odd) with root `u`, cyclically
/// extended to `len` samples.
pub fn zadoff_chu(u: usize, n_zc: usize, len: usize) -> Vec<C64> {
    (0..len)
        .map(|k| {
            let n = (k % n_zc) as u64;
            // n (n + 1) u mod 2 n_zc keeps the phase argument exact.
            let arg = (n * (n + 1) % (2 * n_zc as u64)) * u as u64 % (2 * n_zc as u64);
            C64::from_polar(1.0, -PI * arg as f64 / n_zc as f64)
        })
        .collect()
}

fn zc_family(m: usize, len: usize) -> Result<Vec<Vec<C64>>> {
    let n_zc = (2..=len).rev().find(|&n| is_prime(n)).unwrap_or(1);
    if n_zc < 2 {
        // A single pilot: every tower sends 1.
        return Ok(vec![vec![C64::new(1.0, 0.0); len]; m]);
    }
    let roots: Vec<usize> = ZC_ROOTS.iter().copied().filter(|&r| r < n_zc).take(m).collect();
    let roots = if roots.len() == m {
        roots
    } else {
        (1..n_zc).take(m).collect::<Vec<_>>()
    };
    if roots.len() < m {
        return Err(Error::invalid(format!("no {m} distinct Zadoff-Chu roots for length {n_zc}")));
    }
    Ok(roots.into_iter().map(|u| zadoff_chu(u, n_zc, len)).collect())
}

fn qpsk_family(m: usize, len: usize, seed: u64) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let limit = correlation_limit(len);
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let draw = |rng: &mut ChaCha8Rng| -> Vec<Vec<C64>> {
        (0..m)
            .map(|_| {
                (0..len)
                    .map(|_| C64::new(if rng.random() { a } else { -a }, if rng.random() { a } else { -a }))
                    .collect()
            })
            .collect()
    };
    let mut best = draw(&mut rng);
    for _ in 0..200 {
        if max_cross_correlation(&best) < limit {
            break;
        }
        let next = draw(&mut rng);
        if max_cross_correlation(&next) < max_cross_correlation(&best) {
            best = next;
        }
    }
    best
}

/// Chu base sequence `exp(-j pi k^2 / N)` over FFT bins, shifted by `m L`
/// samples per tower.
fn cyclic_shift_family(m: usize, bins: &[usize], l: usize, n_fft: usize) -> Vec<Vec<C64>> {
    (0..m)
        .map(|t| {
            bins.iter()
                .map(|&b| {
                    let base = (b as u64 * b as u64) % (2 * n_fft as u64);
                    let shift = (2 * b as u64 * (t * l) as u64) % (2 * n_fft as u64);
                    let arg = (base + shift) % (2 * n_fft as u64);
                    C64::from_polar(1.0, -PI * arg as f64 / n_fft as f64)
                })
                .collect()
        })
        .collect()
}

fn sequences_for(
    family: PilotFamily,
    m: usize,
    bins: &[usize],
    l: usize,
    n_fft: usize,
    seed: u64,
) -> Result<Vec<Vec<C64>>> {
    match family {
        PilotFamily::Zc => zc_family(m, bins.len()),
        PilotFamily::RandomQpsk => Ok(qpsk_family(m, bins.len(), seed)),
        PilotFamily::CyclicShift => Ok(cyclic_shift_family(m, bins, l, n_fft)),
    }
}

fn check_feasible(unknowns: usize, pilots: usize) -> Result<()> {
    if unknowns >= pilots {
        return Err(Error::Infeasible { unknowns, pilots });
    }
    Ok(())
}

fn check_band(band: &[usize], n_fft: usize) -> Result<()> {
    if let Some(&b) = band.iter().find(|&&b| b >= n_fft) {
        return Err(Error::IndexOutOfRange { index: b, size: n_fft });
    }
    if band.is_empty() {
        return Err(Error::invalid("empty pilot band"));
    }
    Ok(())
}

/// Joint plan: all `m` towers share `pilot_positions` (indices into `band`).
///
/// Requires `L M < N_p`. Sequences of the `zc` and `random_qpsk` families must
/// have pairwise correlation below [`correlation_limit`].
pub fn make_joint_plan(
    m: usize,
    band: &[usize],
    pilot_positions: &[usize],
    l: usize,
    n_fft: usize,
    family: PilotFamily,
    seed: u64,
) -> Result<PilotPlan> {
    if m == 0 || l == 0 {
        return Err(Error::invalid("joint plan needs M >= 1 and L >= 1"));
    }
    check_band(band, n_fft)?;
    if let Some(&p) = pilot_positions.iter().find(|&&p| p >= band.len()) {
        return Err(Error::IndexOutOfRange { index: p, size: band.len() });
    }
    let np = pilot_positions.len();
    check_feasible(l * m, np)?;
    let bins: Vec<usize> = pilot_positions.iter().map(|&p| band[p]).collect();
    let sequences = sequences_for(family, m, &bins, l, n_fft, seed)?;
    let xc = max_cross_correlation(&sequences);
    if family != PilotFamily::CyclicShift && xc >= correlation_limit(np) {
        return Err(Error::invalid(format!(
            "joint pilot sequences not pseudo-orthogonal: correlation {xc:.3} for length {np}"
        )));
    }
    Ok(PilotPlan {
        scheme: PilotScheme::Joint,
        family,
        band: band.to_vec(),
        positions: vec![pilot_positions.to_vec(); m],
        sequences,
        boost: 1.0,
        n_pilots_total: np,
        freed: Vec::new(),
        l_taps: l,
    })
}

/// Interleaved positions `{t, t + M, t + 2M, ...}` inside `N_p = floor(n/M) M`.
pub fn interleaved_positions(m: usize, n_used: usize) -> Result<Vec<Vec<usize>>> {
    if m == 0 || m > n_used {
        return Err(Error::invalid(format!("cannot interleave {m} towers over {n_used} bins")));
    }
    let np = n_used / m * m;
    Ok((0..m).map(|t| (t..np).step_by(m).collect()).collect())
}

/// Orthogonal plan: tower `t` owns band indices `{t, t + M, ...}`, each pilot
/// sent with amplitude `boost`.
pub fn make_orthogonal_plan(
    m: usize,
    band: &[usize],
    l: usize,
    n_fft: usize,
    boost: f64,
    family: PilotFamily,
    seed: u64,
) -> Result<PilotPlan> {
    check_band(band, n_fft)?;
    if !(boost > 0.0) {
        return Err(Error::invalid(format!("boost must be positive, got {boost}")));
    }
    let positions = interleaved_positions(m, band.len())?;
    let np = positions.iter().map(Vec::len).sum::<usize>();
    check_feasible(l * m, np)?;
    let per_tower = positions[0].len();
    check_feasible(l, per_tower)?;
    // Each tower gets a distinct sequence (its own Zadoff-Chu root). With a
    // shared sequence, carrier-offset leakage from the neighbouring combs
    // looks like a smooth channel and passes straight into the estimates.
    // Combs too short for `m` roots fall back to a shared one.
    let zc = match family {
        PilotFamily::Zc => zc_family(m, per_tower).ok(),
        _ => None,
    };
    let sequences = positions
        .iter()
        .enumerate()
        .map(|(t, pos)| match &zc {
            Some(z) => Ok(z[t].clone()),
            None => {
                let bins: Vec<usize> = pos.iter().map(|&p| band[p]).collect();
                sequences_for(family, 1, &bins, l, n_fft, seed.wrapping_add(t as u64)).map(|mut v| v.remove(0))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PilotPlan {
        scheme: PilotScheme::Orthogonal,
        family,
        band: band.to_vec(),
        positions,
        sequences,
        boost,
        n_pilots_total: np,
        freed: Vec::new(),
        l_taps: l,
    })
}

/// Joint plan on tower 0's interleaved set only (`N_p / M` shared bins); the
/// remaining band indices are returned in `freed` for extra parity.
pub fn make_reduced_joint_plan(
    m: usize,
    band: &[usize],
    l: usize,
    n_fft: usize,
    family: PilotFamily,
    seed: u64,
) -> Result<PilotPlan> {
    let shared = interleaved_positions(m, band.len())?.swap_remove(0);
    let mut plan = make_joint_plan(m, band, &shared, l, n_fft, family, seed)?;
    let mut is_pilot = vec![false; band.len()];
    for &p in &shared {
        is_pilot[p] = true;
    }
    plan.freed = (0..band.len()).filter(|&i| !is_pilot[i]).collect();
    Ok(plan)
}
