//! OFDM symbol assembly and frame timing.
//!
//! Used subcarriers form a contiguous block split around DC with DC nulled.
//! Grid order is ascending frequency: the negative-frequency half (FFT bins
//! `N - n_neg .. N`) first, then bins `1 ..= n_pos`, where `n_neg = n_used / 2`
//! and `n_pos = n_used - n_neg`. Everything else is guard band.

use crate::error::{Error, Result};
use crate::numerics::{fft_in_place, ifft_in_place, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct OfdmConfig {
    pub n_fft: usize,
    pub n_cp: usize,
    /// FFT bin of each grid position.
    pub used_subcarriers: Vec<usize>,
    pub sample_rate_hz: f64,
    pub subcarrier_spacing_hz: f64,
    /// Symbols per frame: one estimation symbol followed by `p - 1` data symbols.
    pub frame_period: usize,
}

impl OfdmConfig {
    pub fn new(
        n_fft: usize,
        n_cp: usize,
        n_used: usize,
        sample_rate_hz: f64,
        frame_period: usize,
    ) -> Result<Self> {
        if n_fft < 4 || !n_fft.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(n_fft));
        }
        if n_used == 0 || n_used >= n_fft {
            return Err(Error::config(format!(
                "used subcarriers must be in 1..{n_fft} (DC excluded), got {n_used}"
            )));
        }
        if n_cp >= n_fft {
            return Err(Error::config(format!("cyclic prefix {n_cp} >= FFT size {n_fft}")));
        }
        if frame_period < 2 {
            return Err(Error::config(format!("frame period must be >= 2, got {frame_period}")));
        }
        if !(sample_rate_hz > 0.0) {
            return Err(Error::config("sample rate must be positive"));
        }
        Ok(Self {
            n_fft,
            n_cp,
            used_subcarriers: symmetric_used_bins(n_fft, n_used),
            sample_rate_hz,
            subcarrier_spacing_hz: sample_rate_hz / n_fft as f64,
            frame_period,
        })
    }

    /// N = 256, 150 used bins, 18-sample CP, 15 kHz spacing, p = 7.
    pub fn desk() -> Self {
        Self::new(256, 18, 150, 3.84e6, 7).expect("valid desk profile")
    }

    /// N = 2048, 1200 used bins, 144-sample CP, 30.72 MHz, p = 7.
    pub fn full_scale() -> Self {
        Self::new(2048, 144, 1200, 30.72e6, 7).expect("valid full-scale profile")
    }

    /// Default CP: 144 samples at N = 2048, scaled proportionally.
    pub fn default_cp(n_fft: usize) -> usize {
        (144 * n_fft + 1024) / 2048
    }

    pub fn n_used(&self) -> usize {
        self.used_subcarriers.len()
    }

    /// Samples per symbol including the cyclic prefix.
    pub fn symbol_len(&self) -> usize {
        self.n_fft + self.n_cp
    }

    pub fn frame_len(&self) -> usize {
        self.frame_period * self.symbol_len()
    }

    /// Converts a frequency offset in Hz to a fraction of the subcarrier spacing.
    pub fn normalized_cfo(&self, cfo_hz: f64) -> f64 {
        cfo_hz / self.subcarrier_spacing_hz
    }

    pub fn guard_band_bins(&self) -> Vec<usize> {
        guard_band_bins(self)
    }
}

pub fn symmetric_used_bins(n_fft: usize, n_used: usize) -> Vec<usize> {
    let n_neg = n_used / 2;
    let n_pos = n_used - n_neg;
    (n_fft - n_neg..n_fft).chain(1..=n_pos).collect()
}

/// All bins that carry nothing: guard band plus DC, ascending.
pub fn guard_band_bins(cfg: &OfdmConfig) -> Vec<usize> {
    let mut used = vec![false; cfg.n_fft];
    for &k in &cfg.used_subcarriers {
        used[k] = true;
    }
    (0..cfg.n_fft).filter(|&k| !used[k]).collect()
}

/// Scatters a grid symbol into a full `N`-bin spectrum.
pub fn spectrum_from_grid(grid_symbol: &[C64], cfg: &OfdmConfig) -> Result<Vec<C64>> {
    if grid_symbol.len() != cfg.n_used() {
        return Err(Error::DimensionMismatch {
            expected: cfg.n_used(),
            got: grid_symbol.len(),
        });
    }
    let mut spec = vec![C64::new(0.0, 0.0); cfg.n_fft];
    for (&k, &v) in cfg.used_subcarriers.iter().zip(grid_symbol) {
        spec[k] = v;
    }
    Ok(spec)
}

/// Inverse transform of a full spectrum with the last `n_cp` samples prepended.
pub fn modulate_spectrum(spectrum: &[C64], n_cp: usize) -> Result<Vec<C64>> {
    let n = spectrum.len();
    if n_cp > n {
        return Err(Error::invalid("cyclic prefix longer than symbol"));
    }
    let mut body = spectrum.to_vec();
    ifft_in_place(&mut body)?;
    let mut out = Vec::with_capacity(n + n_cp);
    out.extend_from_slice(&body[n - n_cp..]);
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn modulate_symbol(grid_symbol: &[C64], cfg: &OfdmConfig) -> Result<Vec<C64>> {
    let spec = spectrum_from_grid(grid_symbol, cfg)?;
    modulate_spectrum(&spec, cfg.n_cp)
}

/// CP removal and forward transform; returns all `N` bins.
pub fn demodulate_full(samples: &[C64], cfg: &OfdmConfig) -> Result<Vec<C64>> {
    if samples.len() != cfg.symbol_len() {
        return Err(Error::DimensionMismatch {
            expected: cfg.symbol_len(),
            got: samples.len(),
        });
    }
    let mut body = samples[cfg.n_cp..].to_vec();
    fft_in_place(&mut body)?;
    Ok(body)
}

/// Used bins of a full spectrum, in grid order.
pub fn extract_used(full: &[C64], cfg: &OfdmConfig) -> Vec<C64> {
    cfg.used_subcarriers.iter().map(|&k| full[k]).collect()
}

pub fn demodulate_symbol(samples: &[C64], cfg: &OfdmConfig) -> Result<Vec<C64>> {
    let full = demodulate_full(samples, cfg)?;
    Ok(extract_used(&full, cfg))
}

/// One frame of grid symbols; position 0 is the estimation symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct ResourceGrid {
    pub symbols: Vec<Vec<C64>>,
}

impl ResourceGrid {
    pub fn zeros(cfg: &OfdmConfig) -> Self {
        Self {
            symbols: vec![vec![C64::new(0.0, 0.0); cfg.n_used()]; cfg.frame_period],
        }
    }

    pub fn n_symbols(&self) -> usize {
        self.symbols.len()
    }

    pub fn estimation_symbol(&self) -> &[C64] {
        &self.symbols[0]
    }

    /// Concatenated CP-bearing samples of every symbol in the frame.
    pub fn modulate(&self, cfg: &OfdmConfig) -> Result<Vec<C64>> {
        let mut out = Vec::with_capacity(self.symbols.len() * cfg.symbol_len());
        for s in &self.symbols {
            out.extend(modulate_symbol(s, cfg)?);
        }
        Ok(out)
    }
}

/// Symbol index `i` of the `pos`-th symbol in a stream of frames: `0` at every
/// estimation symbol, then `1 .. p - 1`.
pub fn symbol_index(pos: usize, frame_period: usize) -> usize {
    pos % frame_period
}
