//! Carrier frequency offset handling: mean-offset derotation, per-symbol phase
//! ramps and the analytic inter-carrier interference model.
//!
//! Index convention: derotation uses the same running sample index as the
//! channel, `exp(-j 2 pi eps_star (start + n) / N)`, continuous across cyclic
//! prefixes and symbols. After derotating a frame from its first sample, tower
//! `m` carries the residual offset `eps_m - eps_star` everywhere, so its phase
//! ramp on symbol `i` is `exp(j 2 pi i (N + N_cp) (eps_m - eps_star) / N)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel::{cfo_rotation, cfo_rotations};
use crate::error::{Error, Result};
use crate::numerics::C64;
use crate::ofdm::OfdmConfig;

/// How the received stream is derotated before the FFT.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerotationMode {
    None,
    Mean,
    Max,
}

impl DerotationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DerotationMode::None => "none",
            DerotationMode::Mean => "mean",
            DerotationMode::Max => "max",
        }
    }

    /// The offset removed from the stream: 0, the mean of `eps`, or the
    /// configured bound `eps_max`.
    pub fn offset(&self, eps: &[f64], eps_max: f64) -> Result<f64> {
        match self {
            DerotationMode::None => Ok(0.0),
            DerotationMode::Mean => mean_offset(eps),
            DerotationMode::Max => Ok(eps_max),
        }
    }
}

/// Normalized offsets of every tower together with their mean and residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct CfoSet {
    pub eps: Vec<f64>,
    pub eps_bar: f64,
    pub eps_residual: Vec<f64>,
}

impl CfoSet {
    pub fn new(eps: Vec<f64>) -> Result<Self> {
        let eps_bar = mean_offset(&eps)?;
        let eps_residual = eps.iter().map(|e| e - eps_bar).collect();
        Ok(Self {
            eps,
            eps_bar,
            eps_residual,
        })
    }

    /// Residuals after removing an arbitrary offset.
    pub fn residuals_after(&self, eps_star: f64) -> Vec<f64> {
        self.eps.iter().map(|e| e - eps_star).collect()
    }
}

/// Arithmetic mean of the offsets: the minimizer of `sum_m (eps_m - e)^2`.
pub fn mean_offset(eps: &[f64]) -> Result<f64> {
    if eps.is_empty() {
        return Err(Error::invalid("mean offset of an empty list"));
    }
    Ok(eps.iter().sum::<f64>() / eps.len() as f64)
}

/// Multiplies sample `n` by `exp(-j 2 pi eps_bar (start_sample_index + n) / N)`.
pub fn derotate_stream(
    samples: &[C64],
    eps_bar: f64,
    start_sample_index: usize,
    cfg: &OfdmConfig,
) -> Vec<C64> {
    if eps_bar == 0.0 {
        return samples.to_vec();
    }
    let rot = cfo_rotations(-eps_bar, start_sample_index, samples.len(), cfg.n_fft);
    samples.iter().zip(&rot).map(|(s, r)| s * r).collect()
}

/// `C_m = exp(j 2 pi i (N + N_cp) eps_residual / N)`.
pub fn phase_ramp(eps_residual_m: f64, symbol_index_i: usize, cfg: &OfdmConfig) -> C64 {
    cfo_rotation(eps_residual_m, symbol_index_i * cfg.symbol_len(), cfg.n_fft)
}

/// Phase ramps of all towers for one symbol index.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseRamp {
    pub values: Vec<C64>,
}

impl PhaseRamp {
    pub fn new(eps_residual: &[f64], symbol_index_i: usize, cfg: &OfdmConfig) -> Self {
        Self {
            values: eps_residual
                .iter()
                .map(|&e| phase_ramp(e, symbol_index_i, cfg))
                .collect(),
        }
    }

    /// All ones, i.e. no phase tracking.
    pub fn identity(m: usize) -> Self {
        Self {
            values: vec![C64::new(1.0, 0.0); m],
        }
    }
}

/// `exp(j pi x (N-1)/N) sin(pi x) / (N sin(pi x / N))`, the leakage kernel of
/// a tone displaced by `x` bins. Equals 1 at `x = 0` and 0 at other integers.
pub fn leakage_kernel(x: f64, n_fft: usize) -> C64 {
    let n = n_fft as f64;
    let den = n * (PI * x / n).sin();
    let mag = if den.abs() < 1e-300 {
        1.0
    } else {
        (PI * x).sin() / den
    };
    C64::from_polar(mag, PI * x * (n - 1.0) / n)
}

/// Common factor of every bin of a symbol with residual offset `eps`, apart
/// from the phase ramp: `exp(j 2 pi N_cp eps / N)`.
pub fn cp_phase(eps: f64, cfg: &OfdmConfig) -> C64 {
    cfo_rotation(eps, cfg.n_cp, cfg.n_fft)
}

/// Gain on the wanted bin: `exp(j 2 pi N_cp eps / N) * leakage_kernel(eps)`.
/// The channel estimate of a tower with residual offset `eps` converges to
/// this factor times its true response.
pub fn signal_gain(eps: f64, cfg: &OfdmConfig) -> C64 {
    cp_phase(eps, cfg) * leakage_kernel(eps, cfg.n_fft)
}

/// Leakage from bin `l` into bin `k` for one tower, without the phase ramp:
/// `exp(j 2 pi N_cp eps / N) K(l - k + eps) H[l] X[l]`.
///
/// `cfr_row` and `tx_symbol` are indexed by FFT bin over all `N` bins.
pub fn ici_term(
    l: usize,
    k: usize,
    eps_m: f64,
    cfr_row: &[C64],
    tx_symbol: &[C64],
    cfg: &OfdmConfig,
) -> C64 {
    if l == k || eps_m == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let x = l as f64 - k as f64 + eps_m;
    cp_phase(eps_m, cfg) * leakage_kernel(x, cfg.n_fft) * cfr_row[l] * tx_symbol[l]
}

/// Sum of [`ici_term`] over every `l != k`.
pub fn ici_total(k: usize, eps_m: f64, cfr_row: &[C64], tx_symbol: &[C64], cfg: &OfdmConfig) -> C64 {
    if eps_m == 0.0 {
        return C64::new(0.0, 0.0);
    }
    (0..cfg.n_fft)
        .filter(|&l| l != k)
        .map(|l| ici_term(l, k, eps_m, cfr_row, tx_symbol, cfg))
        .sum()
}

/// Noise-free demodulated bin `k` of symbol `i` for one tower with offset
/// `eps` (after any derotation): `C (signal_gain H[k] X[k] + ici_total)`.
pub fn analytic_bin(
    k: usize,
    eps: f64,
    symbol_index_i: usize,
    cfr_row: &[C64],
    tx_symbol: &[C64],
    cfg: &OfdmConfig,
) -> C64 {
    let ramp = phase_ramp(eps, symbol_index_i, cfg);
    ramp * (signal_gain(eps, cfg) * cfr_row[k] * tx_symbol[k] + ici_total(k, eps, cfr_row, tx_symbol, cfg))
}

/// Total ICI power over a set of bins for one tower (diagnostic, O(N^2)).
pub fn ici_power(eps: f64, cfr_row: &[C64], tx_symbol: &[C64], bins: &[usize], cfg: &OfdmConfig) -> f64 {
    bins.iter()
        .map(|&k| ici_total(k, eps, cfr_row, tx_symbol, cfg).norm_sqr())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_downlink, realize_cir, PowerDelayProfile, TowerLink};
    use crate::numerics::fft;
    use crate::ofdm::{demodulate_full, demodulate_symbol, modulate_symbol, spectrum_from_grid, ResourceGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn qpsk(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        (0..n)
            .map(|_| C64::new(if rng.random() { a } else { -a }, if rng.random() { a } else { -a }))
            .collect()
    }

    fn full_cfr(h: &[C64], n: usize) -> Vec<C64> {
        let mut padded = vec![C64::new(0.0, 0.0); n];
        padded[..h.len()].copy_from_slice(h);
        fft(&padded).unwrap()
    }

    #[test]
    fn mean_offset_examples() {
        assert!((mean_offset(&[0.03, 0.05]).unwrap() - 0.04).abs() < 1e-15);
        let s = CfoSet::new(vec![0.07]).unwrap();
        assert_eq!(s.eps_bar, 0.07);
        assert_eq!(s.eps_residual, vec![0.0]);
        assert!(mean_offset(&[]).is_err());
    }

    #[test]
    fn mean_minimizes_squared_error_on_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let eps: Vec<f64> = (0..rng.random_range(1..6)).map(|_| rng.random_range(0.0..0.1)).collect();
            let cost = |e: f64| eps.iter().map(|x| (x - e).powi(2)).sum::<f64>();
            let best = (0..=10_000)
                .map(|j| j as f64 * 0.1 / 10_000.0)
                .min_by(|a, b| cost(*a).partial_cmp(&cost(*b)).unwrap())
                .unwrap();
            let m = mean_offset(&eps).unwrap();
            assert!((m - best).abs() <= 0.1 / 10_000.0);
            assert!(cost(m) <= cost(best) + 1e-15);
        }
    }

    #[test]
    fn residuals_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let eps: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..0.1)).collect();
            let s = CfoSet::new(eps).unwrap();
            assert!(s.eps_residual.iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn derotation_identity_and_inverse() {
        let cfg = OfdmConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = modulate_symbol(&qpsk(&mut rng, 150), &cfg).unwrap();
        assert_eq!(derotate_stream(&x, 0.0, 5, &cfg), x);
        let there = derotate_stream(&x, 0.037, 1000, &cfg);
        let back = derotate_stream(&there, -0.037, 1000, &cfg);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn derotation_restores_single_tower_constellation() {
        let cfg = OfdmConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = realize_cir(&PowerDelayProfile::uniform4(), 0.0, 0.0, cfg.sample_rate_hz, 18, &mut rng).unwrap();
        let mut grid = ResourceGrid::zeros(&cfg);
        for s in grid.symbols.iter_mut() {
            *s = qpsk(&mut rng, 150);
        }
        let tx = grid.modulate(&cfg).unwrap();
        let eps = 0.043;
        let with_cfo = apply_downlink(&[tx.clone()], &[TowerLink { eps, ..TowerLink::new(0, h.clone(), 0.0, 0.0, 0.0, &cfg) }], &cfg, 0).unwrap();
        let reference = apply_downlink(&[tx], &[TowerLink::new(0, h, 0.0, 0.0, 0.0, &cfg)], &cfg, 0).unwrap();
        let fixed = derotate_stream(&with_cfo, eps, 0, &cfg);
        let sl = cfg.symbol_len();
        for s in 0..cfg.frame_period {
            let a = demodulate_symbol(&fixed[s * sl..(s + 1) * sl], &cfg).unwrap();
            let b = demodulate_symbol(&reference[s * sl..(s + 1) * sl], &cfg).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn phase_ramp_examples() {
        let cfg = OfdmConfig::desk();
        assert_eq!(phase_ramp(0.05, 0, &cfg), C64::new(1.0, 0.0));
        for i in 0..7 {
            assert!((phase_ramp(0.0, i, &cfg) - C64::new(1.0, 0.0)).norm() < 1e-15);
            assert!((phase_ramp(0.031, i, &cfg).norm() - 1.0).abs() < 1e-15);
        }
        let want = C64::from_polar(1.0, 2.0 * PI * 3.0 * 274.0 * 0.05 / 256.0);
        assert!((phase_ramp(0.05, 3, &cfg) - want).norm() < 1e-12);
        assert!(PhaseRamp::new(&[0.01, -0.02], 0, &cfg).values.iter().all(|c| *c == C64::new(1.0, 0.0)));
    }

    #[test]
    fn phase_ramp_matches_simulated_drift() {
        // Noiseless single tower: bin ratio between symbol 3 and symbol 0 with
        // identical payloads is exactly the phase ramp.
        let cfg = OfdmConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let payload = qpsk(&mut rng, 150);
        let mut grid = ResourceGrid::zeros(&cfg);
        for s in grid.symbols.iter_mut() {
            *s = payload.clone();
        }
        let tx = grid.modulate(&cfg).unwrap();
        let link = TowerLink { eps: 0.05, ..TowerLink::new(0, vec![C64::new(1.0, 0.0)], 0.0, 0.0, 0.0, &cfg) };
        let y = apply_downlink(&[tx], &[link], &cfg, 0).unwrap();
        let sl = cfg.symbol_len();
        let y0 = demodulate_full(&y[..sl], &cfg).unwrap();
        let y3 = demodulate_full(&y[3 * sl..4 * sl], &cfg).unwrap();
        let k = cfg.used_subcarriers[40];
        let measured = y3[k] / y0[k];
        assert!((measured - phase_ramp(0.05, 3, &cfg)).norm() < 1e-9);
    }

    #[test]
    fn single_subcarrier_gain_and_phase() {
        let cfg = OfdmConfig::desk();
        let mut grid = vec![C64::new(0.0, 0.0); 150];
        grid[100] = C64::new(1.0, 0.0);
        let k = cfg.used_subcarriers[100];
        let eps = 0.08;
        let i = 2;
        let x = modulate_symbol(&grid, &cfg).unwrap();
        let link = TowerLink { eps, ..TowerLink::new(0, vec![C64::new(1.0, 0.0)], 0.0, 0.0, 0.0, &cfg) };
        let y = apply_downlink(&[x], &[link], &cfg, i).unwrap();
        let yk = demodulate_full(&y, &cfg).unwrap()[k];
        let n = 256.0;
        let amp = (PI * eps).sin() / (n * (PI * eps / n).sin());
        let phase = PI * eps * (n - 1.0) / n + 2.0 * PI * ((i * 274 + 18) as f64) * eps / n;
        assert!((yk - C64::from_polar(amp, phase)).norm() < 1e-9);
    }

    #[test]
    fn ici_vanishes_without_offset_and_grows_with_it() {
        let cfg = OfdmConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = realize_cir(&PowerDelayProfile::uniform4(), 0.0, 0.0, cfg.sample_rate_hz, 18, &mut rng).unwrap();
        let cfr = full_cfr(&h, 256);
        let x = spectrum_from_grid(&qpsk(&mut rng, 150), &cfg).unwrap();
        assert_eq!(ici_term(3, 5, 0.0, &cfr, &x, &cfg), C64::new(0.0, 0.0));
        assert_eq!(ici_total(5, 0.0, &cfr, &x, &cfg), C64::new(0.0, 0.0));
        let powers: Vec<f64> = [0.01, 0.02, 0.05, 0.1]
            .iter()
            .map(|&e| ici_power(e, &cfr, &x, &cfg.used_subcarriers, &cfg))
            .collect();
        assert!(powers.windows(2).all(|w| w[1] >= w[0]), "{powers:?}");
    }

    #[test]
    fn analytic_form_matches_time_domain() {
        let cfg = OfdmConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = 3;
        let i = 4;
        let mut streams = Vec::new();
        let mut links = Vec::new();
        let mut spectra = Vec::new();
        for t in 0..m {
            let h = realize_cir(&PowerDelayProfile::uniform4(), 0.0, 0.0, cfg.sample_rate_hz, 18, &mut rng).unwrap();
            let g = qpsk(&mut rng, 150);
            spectra.push((full_cfr(&h, 256), spectrum_from_grid(&g, &cfg).unwrap()));
            streams.push(modulate_symbol(&g, &cfg).unwrap());
            let eps = rng.random_range(0.0..0.1);
            links.push(TowerLink { eps, ..TowerLink::new(t, h, 0.0, 0.0, 0.0, &cfg) });
        }
        let y = demodulate_full(&apply_downlink(&streams, &links, &cfg, i).unwrap(), &cfg).unwrap();
        for k in 0..256 {
            let model: C64 = links
                .iter()
                .zip(&spectra)
                .map(|(l, (cfr, x))| analytic_bin(k, l.eps, i, cfr, x, &cfg))
                .sum();
            let scale = y[k].norm().max(1e-3);
            assert!((y[k] - model).norm() / scale < 1e-8, "bin {k}");
        }
    }

    #[test]
    fn symmetric_offsets_after_mean_derotation() {
        // Towers at +d and -d: residual ICI power equals the analytic value at +/-d.
        let cfg = OfdmConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = 0.04;
        let mut streams = Vec::new();
        let mut links = Vec::new();
        let mut spectra = Vec::new();
        for (t, eps) in [d, -d].into_iter().enumerate() {
            let h = realize_cir(&PowerDelayProfile::uniform4(), 0.0, 0.0, cfg.sample_rate_hz, 18, &mut rng).unwrap();
            let g = qpsk(&mut rng, 150);
            spectra.push((full_cfr(&h, 256), spectrum_from_grid(&g, &cfg).unwrap()));
            streams.push(modulate_symbol(&g, &cfg).unwrap());
            links.push(TowerLink { eps, ..TowerLink::new(t, h, 0.0, 0.0, 0.0, &cfg) });
        }
        let eps_bar = mean_offset(&[d, -d]).unwrap();
        let y = derotate_stream(&apply_downlink(&streams, &links, &cfg, 0).unwrap(), eps_bar, 0, &cfg);
        let y = demodulate_full(&y, &cfg).unwrap();
        let mut sim = 0.0;
        let mut ana = 0.0;
        for &k in &cfg.used_subcarriers {
            let signal: C64 = links
                .iter()
                .zip(&spectra)
                .map(|(l, (cfr, x))| signal_gain(l.eps, &cfg) * cfr[k] * x[k])
                .sum();
            sim += (y[k] - signal).norm_sqr();
            let ici: C64 = links
                .iter()
                .zip(&spectra)
                .map(|(l, (cfr, x))| ici_total(k, l.eps, cfr, x, &cfg))
                .sum();
            ana += ici.norm_sqr();
        }
        assert!((sim / ana - 1.0).abs() < 0.01);
    }

    #[test]
    fn mean_derotation_minimizes_analytic_ici() {
        let cfg = OfdmConfig::new(64, 5, 40, 960e3, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let eps_max = 0.05;
        // Channel gains weight each tower's leakage differently, so the
        // ordering is a statement about the average over realizations.
        let (mut acc_mean, mut acc_none, mut acc_max) = (0.0, 0.0, 0.0);
        for _ in 0..100 {
            let m = 4;
            let towers: Vec<(Vec<C64>, Vec<C64>)> = (0..m)
                .map(|_| {
                    let h = realize_cir(&PowerDelayProfile::uniform4(), 0.0, 0.0, cfg.sample_rate_hz, 5, &mut rng).unwrap();
                    (full_cfr(&h, 64), spectrum_from_grid(&qpsk(&mut rng, 40), &cfg).unwrap())
                })
                .collect();
            let eps: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..eps_max)).collect();
            let total = |star: f64| -> f64 {
                towers
                    .iter()
                    .zip(&eps)
                    .map(|((cfr, x), e)| ici_power(e - star, cfr, x, &cfg.used_subcarriers, &cfg))
                    .sum()
            };
            acc_mean += total(mean_offset(&eps).unwrap());
            acc_none += total(0.0);
            acc_max += total(eps_max);
        }
        assert!(acc_mean < acc_none && acc_none < acc_max, "{acc_mean} {acc_none} {acc_max}");
    }
}
