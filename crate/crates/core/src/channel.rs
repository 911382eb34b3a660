//! Multipath Rayleigh links with bulk delay, power scaling, carrier frequency
//! offset and additive noise.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::C64;
use crate::ofdm::OfdmConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerDelayProfile {
    pub name: String,
    pub delays_s: Vec<f64>,
    pub powers_db: Vec<f64>,
}

impl PowerDelayProfile {
    pub fn new(name: impl Into<String>, delays_s: Vec<f64>, powers_db: Vec<f64>) -> Result<Self> {
        if delays_s.is_empty() || delays_s.len() != powers_db.len() {
            return Err(Error::config("power delay profile needs matching, nonempty delays and powers"));
        }
        if delays_s[0] < 0.0 || delays_s.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::config("path delays must be nonnegative and ascending"));
        }
        Ok(Self {
            name: name.into(),
            delays_s,
            powers_db,
        })
    }

    /// Pedestrian-A path positions with four equal-power taps.
    pub fn uniform4() -> Self {
        Self::new("uniform4", vec![0.0, 110e-9, 190e-9, 410e-9], vec![0.0; 4]).unwrap()
    }

    /// ITU Pedestrian-A.
    pub fn peda() -> Self {
        Self::new(
            "peda",
            vec![0.0, 110e-9, 190e-9, 410e-9],
            vec![0.0, -9.7, -19.2, -22.8],
        )
        .unwrap()
    }

    /// ITU Vehicular-A.
    pub fn veha() -> Self {
        Self::new(
            "veha",
            vec![0.0, 310e-9, 710e-9, 1090e-9, 1730e-9, 2510e-9],
            vec![0.0, -1.0, -9.0, -10.0, -15.0, -20.0],
        )
        .unwrap()
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "uniform4" => Ok(Self::uniform4()),
            "peda" => Ok(Self::peda()),
            "veha" => Ok(Self::veha()),
            other => Err(Error::config(format!("unknown power delay profile {other:?}"))),
        }
    }

    /// Same profile with every delay multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            name: self.name.clone(),
            delays_s: self.delays_s.iter().map(|d| d * factor).collect(),
            powers_db: self.powers_db.clone(),
        }
    }

    pub fn max_delay_s(&self) -> f64 {
        *self.delays_s.last().unwrap()
    }

    /// Tap index of each path after rounding to the sample grid.
    pub fn tap_indices(&self, extra_delay_s: f64, sample_rate_hz: f64) -> Vec<usize> {
        self.delays_s
            .iter()
            .map(|d| ((d + extra_delay_s) * sample_rate_hz).round() as usize)
            .collect()
    }
}

/// One tower-to-UE path.
#[derive(Clone, Debug, PartialEq)]
pub struct TowerLink {
    pub tower_id: usize,
    pub cir: Vec<C64>,
    pub extra_delay_s: f64,
    pub cfo_hz: f64,
    /// CFO as a fraction of the subcarrier spacing.
    pub eps: f64,
    pub power_db: f64,
}

impl TowerLink {
    pub fn new(tower_id: usize, cir: Vec<C64>, extra_delay_s: f64, cfo_hz: f64, power_db: f64, cfg: &OfdmConfig) -> Self {
        Self {
            tower_id,
            cir,
            extra_delay_s,
            cfo_hz,
            eps: cfg.normalized_cfo(cfo_hz),
            power_db,
        }
    }
}

/// Complex AWGN with total variance `sigma2` per time-domain sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    sigma2: f64,
}

impl NoiseModel {
    pub fn new(sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) {
            return Err(Error::invalid(format!("noise variance must be positive, got {sigma2}")));
        }
        Ok(Self { sigma2 })
    }

    /// No noise at all.
    pub fn bypass() -> Self {
        Self { sigma2: 0.0 }
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn is_bypass(&self) -> bool {
        self.sigma2 == 0.0
    }
}

/// Draws one Rayleigh CIR on the receiver sample grid.
///
/// Each path becomes a circularly-symmetric Gaussian tap at
/// `round((delay + extra_delay) * sample_rate)`; paths landing on the same
/// sample add. Tap variances follow the profile and sum to
/// `10^(power_db / 10)`.
pub fn realize_cir<R: Rng + ?Sized>(
    pdp: &PowerDelayProfile,
    extra_delay_s: f64,
    power_db: f64,
    sample_rate_hz: f64,
    max_delay_samples: usize,
    rng: &mut R,
) -> Result<Vec<C64>> {
    let idx = pdp.tap_indices(extra_delay_s, sample_rate_hz);
    let last = *idx.iter().max().unwrap();
    if last > max_delay_samples {
        return Err(Error::DelayExceedsCp {
            delay_samples: last,
            n_cp: max_delay_samples,
        });
    }
    let linear: Vec<f64> = pdp.powers_db.iter().map(|p| 10f64.powf(p / 10.0)).collect();
    let norm = 10f64.powf(power_db / 10.0) / linear.iter().sum::<f64>();
    let mut cir = vec![C64::new(0.0, 0.0); last + 1];
    for (&k, &p) in idx.iter().zip(&linear) {
        cir[k] += complex_gaussian(rng, p * norm);
    }
    Ok(cir)
}

/// Circularly-symmetric complex Gaussian with total variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let sd = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * sd, im * sd)
}

/// Linear convolution truncated to the input length.
pub fn convolve_truncated(x: &[C64], h: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); x.len()];
    for (d, &tap) in h.iter().enumerate() {
        if tap == C64::new(0.0, 0.0) {
            continue;
        }
        for (o, &v) in out[d.min(x.len())..].iter_mut().zip(x) {
            *o += tap * v;
        }
    }
    out
}

/// `exp(j 2 pi eps * index / N)` with the phase reduced before evaluation.
pub fn cfo_rotation(eps: f64, index: usize, n_fft: usize) -> C64 {
    let whole = (index / n_fft) as f64;
    let frac = (index % n_fft) as f64 / n_fft as f64;
    let cycles = (eps * whole).fract() + eps * frac;
    C64::from_polar(1.0, 2.0 * PI * cycles)
}

/// [`cfo_rotation`] for the indices `start .. start + len`. Consecutive values
/// come from a phasor recursion re-anchored every 64 samples, which keeps the
/// error within a few ulps of the direct evaluation.
pub fn cfo_rotations(eps: f64, start: usize, len: usize, n_fft: usize) -> Vec<C64> {
    const ANCHOR: usize = 64;
    let step = C64::from_polar(1.0, 2.0 * PI * eps / n_fft as f64);
    let mut out = Vec::with_capacity(len);
    for k in (0..len).step_by(ANCHOR) {
        let mut v = cfo_rotation(eps, start + k, n_fft);
        for _ in k..(k + ANCHOR).min(len) {
            out.push(v);
            v *= step;
        }
    }
    out
}

/// Superposes every tower's stream after its channel and carrier offset.
///
/// The streams start at OFDM symbol `symbol_index_i`; sample `n` of the stream
/// is rotated by `exp(j 2 pi (i (N + N_cp) + n) eps_m / N)`, so the phase runs
/// continuously across cyclic prefixes and symbols. Noise is added separately
/// with [`add_awgn`].
pub fn apply_downlink(
    tx_streams: &[Vec<C64>],
    links: &[TowerLink],
    cfg: &OfdmConfig,
    symbol_index_i: usize,
) -> Result<Vec<C64>> {
    if tx_streams.len() != links.len() || tx_streams.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: links.len(),
            got: tx_streams.len(),
        });
    }
    let len = tx_streams[0].len();
    if let Some(bad) = tx_streams.iter().find(|s| s.len() != len) {
        return Err(Error::DimensionMismatch {
            expected: len,
            got: bad.len(),
        });
    }
    let start = symbol_index_i * cfg.symbol_len();
    let mut out = vec![C64::new(0.0, 0.0); len];
    for (stream, link) in tx_streams.iter().zip(links) {
        let faded = convolve_truncated(stream, &link.cir);
        if link.eps == 0.0 {
            out.iter_mut().zip(&faded).for_each(|(o, v)| *o += v);
        } else {
            let rot = cfo_rotations(link.eps, start, len, cfg.n_fft);
            for ((o, v), r) in out.iter_mut().zip(&faded).zip(&rot) {
                *o += v * r;
            }
        }
    }
    Ok(out)
}

pub fn add_awgn<R: Rng + ?Sized>(samples: &[C64], noise: &NoiseModel, rng: &mut R) -> Vec<C64> {
    if noise.is_bypass() {
        return samples.to_vec();
    }
    samples
        .iter()
        .map(|&s| s + complex_gaussian(rng, noise.sigma2))
        .collect()
}

/// Per-sample noise variance from the mean power of the unused bins of a
/// demodulated symbol. `full_bins` holds all `N` bins produced by the unscaled
/// forward FFT, so the per-bin power is divided by `N`.
pub fn estimate_noise_variance(full_bins: &[C64], guard_bins: &[usize]) -> Result<f64> {
    if guard_bins.is_empty() {
        return Err(Error::invalid("noise estimation needs at least one guard bin"));
    }
    let n = full_bins.len();
    let mut acc = 0.0;
    for &k in guard_bins {
        let v = full_bins.get(k).ok_or(Error::IndexOutOfRange { index: k, size: n })?;
        acc += v.norm_sqr();
    }
    Ok(acc / guard_bins.len() as f64 / n as f64)
}
