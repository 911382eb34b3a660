//! Scenario-driven Monte Carlo engine.
//!
//! A [`ScenarioConfig`] describes one experiment; [`run`] sweeps its Eb/N0
//! grid and returns one or more [`MetricRecord`]s per point. Trials are
//! independent and seeded from `(master_seed, scenario_id, trial)` alone, so
//! results do not depend on the worker count.

pub mod bler;
pub mod config;
mod link;
pub mod mse;
pub mod presets;
pub mod records;
pub mod seeding;

pub use config::{
    DesiredCfo, DetectorKind, EstimatorKind, ExperimentKind, FecSection, PilotBand, ResolvedScenario, ScenarioConfig,
    TowerSection,
};
pub use records::{read_csv, wilson_interval, write_csv, MetricKind, MetricRecord, CSV_COLUMNS};
pub use seeding::{trial_rng, trial_seed};

use crate::error::{Error, Result};

/// Text of the Eb/N0 mapping, written into run metadata.
pub const SIGMA2_FORMULA: &str = "sigma2_bin = E_sym / (R * b * 10^(EbN0_dB / 10)), E_sym = 10^(P_0 / 10) = 1, \
R = nominal code rate, b = bits per desired symbol; per-sample time-domain variance = sigma2_bin / N";

/// Per-bin noise variance for an Eb/N0 point.
///
/// Only the desired tower's energy counts as signal. `E_sym` is the desired
/// symbol energy per used bin (unit constellations, unit-power channel,
/// 0 dB tower power), `R` the configured nominal code rate and `b` the
/// desired constellation's bits per symbol. Under the unscaled forward FFT
/// the matching per-sample noise variance is this value divided by `N`.
pub fn derive_sigma2(eb_n0_db: f64, cfg: &ScenarioConfig) -> Result<f64> {
    let bits = cfg
        .towers
        .first()
        .ok_or_else(|| Error::config("scenario has no towers"))?
        .constellation
        .bits_per_symbol();
    sigma2_from_ebn0(eb_n0_db, 1.0, cfg.fec.rate.value(), bits)
}

/// `e_sym / (rate * bits * 10^(eb_n0_db / 10))`.
pub fn sigma2_from_ebn0(eb_n0_db: f64, e_sym: f64, rate: f64, bits_per_symbol: usize) -> Result<f64> {
    if !(rate > 0.0) || bits_per_symbol == 0 {
        return Err(Error::invalid(format!("nonpositive rate {rate} or bits per symbol {bits_per_symbol}")));
    }
    Ok(e_sym / (rate * bits_per_symbol as f64 * 10f64.powf(eb_n0_db / 10.0)))
}

/// Execution options that do not affect results.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `None` or `0` uses the global rayon pool.
    pub workers: Option<usize>,
}

/// Runs the scenario's experiment over its whole sweep.
pub fn run(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<MetricRecord>> {
    let body = || match cfg.experiment {
        ExperimentKind::Mse => mse::run_mse_experiment(cfg),
        ExperimentKind::Bler => bler::run_bler_experiment(cfg),
    };
    match opts.workers {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {n} workers: {e}")))?
            .install(body),
        _ => body(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma2_mapping() {
        assert_eq!(sigma2_from_ebn0(0.0, 1.0, 1.0, 2).unwrap(), 0.5);
        let a = sigma2_from_ebn0(0.0, 1.0, 1.0 / 3.0, 2).unwrap();
        let b = sigma2_from_ebn0(0.0, 1.0, 1.0, 2).unwrap();
        assert!((a / b - 3.0).abs() < 1e-12);
        let c = sigma2_from_ebn0(3.0, 1.0, 1.0, 2).unwrap();
        assert!((b / c - 10f64.powf(0.3)).abs() < 1e-12);
        assert!(sigma2_from_ebn0(0.0, 1.0, 0.0, 2).is_err());
    }
}
