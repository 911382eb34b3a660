//! Channel-estimation MSE sweeps.
//!
//! Full-band plans are simulated directly in the frequency domain
//! (`Y = sum_m X_m H_m + W` on the observation bins), which is exact without
//! carrier offsets. Used-band plans run the whole time-domain chain: channel,
//! offsets, noise, derotation, FFT, guard-bin noise estimate, estimation.

use rand::Rng;
use rayon::prelude::*;

use crate::cfo::derotate_stream;
use crate::channel::{add_awgn, apply_downlink, complex_gaussian, estimate_noise_variance, NoiseModel};
use crate::error::Result;
use crate::estimation::{cir_to_cfr, crlb_general, mse_cfr_per_bin, mse_total, ChannelEstimateSet};
use crate::numerics::C64;
use crate::ofdm::{demodulate_full, modulate_symbol};

use super::config::{PilotBand, ResolvedScenario, ScenarioConfig};
use super::link::{Estimator, Factors, FrameChannel, OffsetView};
use super::records::{MetricKind, MetricRecord};
use super::{derive_sigma2, trial_rng};

/// Squared errors of one trial: total CIR error and per-bin CFR error.
type TrialError = (f64, f64);

struct MseSetup<'a> {
    cfg: &'a ScenarioConfig,
    res: ResolvedScenario,
    est: Estimator,
    full_band: bool,
    /// Full-band: each tower's pilot value on every observation bin.
    obs_tx: Vec<Vec<C64>>,
    obs_bins: Vec<usize>,
    /// Used-band: each tower's CP-bearing estimation symbol.
    tx_streams: Vec<Vec<C64>>,
    guard: Vec<usize>,
}

impl<'a> MseSetup<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self> {
        let res = cfg.resolve()?;
        let plan = &res.plan;
        let n = res.ofdm.n_fft;
        let full_band = cfg.pilots.band == PilotBand::Full;
        let est = Estimator::new(cfg.estimator.kind, plan, res.l_taps, n, &plan.band)?;
        let obs_bins = plan.observation_bins();
        let mut obs_tx = Vec::new();
        let mut tx_streams = Vec::new();
        if full_band {
            for m in 0..plan.n_towers() {
                let mut spec = vec![C64::new(0.0, 0.0); n];
                for (b, v) in plan.pilot_bins(m).into_iter().zip(plan.tx_values(m)) {
                    spec[b] = v;
                }
                obs_tx.push(obs_bins.iter().map(|&b| spec[b]).collect());
            }
        } else {
            for m in 0..plan.n_towers() {
                let mut sym = vec![C64::new(0.0, 0.0); res.ofdm.n_used()];
                plan.write_pilots(m, &mut sym)?;
                tx_streams.push(modulate_symbol(&sym, &res.ofdm)?);
            }
        }
        let guard = res.ofdm.guard_band_bins();
        Ok(Self { cfg, res, est, full_band, obs_tx, obs_bins, tx_streams, guard })
    }

    fn truth(&self, cirs: &[Vec<C64>]) -> Result<ChannelEstimateSet> {
        ChannelEstimateSet::from_cirs(cirs, self.res.l_taps, &self.res.plan.band, self.res.ofdm.n_fft)
    }

    /// Frequency-domain trial; `factors` are fixed for the point.
    fn full_band_trial<R: Rng>(&self, rng: &mut R, sigma2_bin: f64, factors: &Factors) -> Result<TrialError> {
        let ch = FrameChannel::draw(self.cfg, &self.res, rng)?;
        let n = self.res.ofdm.n_fft;
        let mut y = vec![C64::new(0.0, 0.0); self.obs_bins.len()];
        for (cir, tx) in ch.cirs.iter().zip(&self.obs_tx) {
            let h = cir_to_cfr(cir, &self.obs_bins, n);
            for ((yr, hr), xr) in y.iter_mut().zip(&h).zip(tx) {
                *yr += hr * xr;
            }
        }
        if sigma2_bin > 0.0 {
            for yr in &mut y {
                *yr += complex_gaussian(rng, sigma2_bin);
            }
        }
        let est = self.est.estimate(factors, &y)?;
        let truth = self.truth(&ch.cirs)?;
        Ok((mse_total(&est, &truth)?, mse_cfr_per_bin(&est, &truth)?))
    }

    /// Time-domain trial with offsets, derotation and estimated noise.
    fn used_band_trial<R: Rng>(&self, rng: &mut R, sigma2_bin: f64, fixed: Option<&Factors>) -> Result<TrialError> {
        let ofdm = &self.res.ofdm;
        let ch = FrameChannel::draw(self.cfg, &self.res, rng)?;
        let view = OffsetView::new(self.cfg, &ch.eps)?;
        let rx = apply_downlink(&self.tx_streams, &ch.links(self.cfg, ofdm), ofdm, 0)?;
        let noise = if sigma2_bin > 0.0 { NoiseModel::new(sigma2_bin / ofdm.n_fft as f64)? } else { NoiseModel::bypass() };
        let rx = add_awgn(&rx, &noise, rng);
        let rx = derotate_stream(&rx, view.derotation, 0, ofdm);
        let full = demodulate_full(&rx, ofdm)?;
        let y = self.res.plan.gather(&full)?;
        let est = match fixed {
            Some(f) => self.est.estimate(f, &y)?,
            None => {
                let s2 = estimate_noise_variance(&full, &self.guard)? * ofdm.n_fft as f64;
                let alpha = self.res.alpha_mode.resolve(s2, self.est.gram_trace(), self.est.unknowns(), false);
                self.est.estimate(&self.est.factors(alpha)?, &y)?
            }
        };
        let truth = view.scaled_truth(self.truth(&ch.cirs)?, ofdm);
        Ok((mse_total(&est, &truth)?, mse_cfr_per_bin(&est, &truth)?))
    }
}

/// Runs every Eb/N0 point for `trials.max_trials` trials each and returns a
/// `mse_cir_total` record (with the bound) and a `mse_cfr_per_bin` record per
/// point.
pub fn run_mse_experiment(cfg: &ScenarioConfig) -> Result<Vec<MetricRecord>> {
    let setup = MseSetup::new(cfg)?;
    let res = &setup.res;
    let n = res.ofdm.n_fft;
    let trials = cfg.trials.max_trials;
    let mut out = Vec::with_capacity(2 * cfg.sweep.eb_n0_db.len());
    for &eb in &cfg.sweep.eb_n0_db {
        let sigma2 = if cfg.sweep.noiseless { 0.0 } else { derive_sigma2(eb, cfg)? };
        let trace = setup.est.gram_trace();
        let unknowns = setup.est.unknowns();
        // The ridge only varies per trial when it follows the noise estimate.
        let fixed = if setup.full_band {
            Some(setup.est.factors(res.alpha_mode.resolve(sigma2, trace, unknowns, true))?)
        } else {
            match res.alpha_mode {
                crate::estimation::AlphaMode::Jitter | crate::estimation::AlphaMode::Fixed(_) => {
                    Some(setup.est.factors(res.alpha_mode.resolve(0.0, trace, unknowns, false))?)
                }
                _ => None,
            }
        };
        let errors: Vec<TrialError> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = trial_rng(cfg.master_seed, &cfg.scenario_id, t);
                if setup.full_band {
                    setup.full_band_trial(&mut rng, sigma2, fixed.as_ref().expect("full band factors"))
                } else {
                    setup.used_band_trial(&mut rng, sigma2, fixed.as_ref())
                }
            })
            .collect::<Result<_>>()?;
        // Summed in trial order so the result is independent of scheduling.
        let (cir_sum, cfr_sum) = errors.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        let crlb = crlb_general(&res.plan, res.l_taps, sigma2, n)?;
        let record = |kind, value, crlb_value| MetricRecord {
            scenario_id: cfg.scenario_id.clone(),
            metric_kind: kind,
            eb_n0_db: eb,
            value,
            crlb_value,
            trials,
            error_blocks: None,
            seed: cfg.master_seed,
        };
        out.push(record(MetricKind::MseCirTotal, cir_sum / trials as f64, Some(crlb)));
        out.push(record(MetricKind::MseCfrPerBin, cfr_sum / trials as f64, None));
    }
    Ok(out)
}
