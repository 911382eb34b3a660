//! Coded block-error-rate sweeps over the full link.
//!
//! A frame is one estimation symbol followed by `p - 1` data symbols. Coded
//! blocks are bit-interleaved, mapped onto the desired tower's data resource
//! elements and may straddle frames; a trial simulates the smallest number of
//! frames (at most 8) that wastes the least capacity. Interferers send random
//! symbols on every data element. Channels and offsets are redrawn per frame.
//!
//! With `parity_fill`, the parity bits that distinguish the rate-2/3 pattern
//! from the transmitted rate-3/4 pattern ride on the bins a reduced joint
//! pilot plan leaves free in the estimation symbol; interferers fill those
//! bins too.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cfo::{derotate_stream, PhaseRamp};
use crate::channel::{add_awgn, apply_downlink, estimate_noise_variance, NoiseModel};
use crate::detection::{map_bits, Constellation, JointDetector};
use crate::error::{Error, Result};
use crate::fec::{place_rate_improvement_parity, CodeRate, RateMatcher, TurboCodec};
use crate::numerics::C64;
use crate::ofdm::{demodulate_full, ResourceGrid};

use super::config::{DetectorKind, ResolvedScenario, ScenarioConfig};
use super::link::{Estimator, FrameChannel, OffsetView};
use super::records::MetricRecord;
use super::seeding::splitmix64;
use super::{derive_sigma2, trial_rng};

/// Most frames a single trial may span.
pub const MAX_FRAMES_PER_TRIAL: usize = 8;

/// Largest batch of trials evaluated between stopping checks.
const MAX_BATCH: u64 = 64;

/// Floor on the detector's noise variance (noiseless runs).
const SIGMA2_FLOOR: f64 = 1e-9;

/// How coded blocks are packed onto frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameLayout {
    pub frames_per_trial: usize,
    pub blocks_per_trial: usize,
    /// Resource elements occupied by one coded block.
    pub block_res: usize,
    /// Data resource elements per frame.
    pub data_res_per_frame: usize,
}

impl FrameLayout {
    /// Picks the frame count in `1..=8` with the smallest unused fraction
    /// (ties to fewer frames).
    pub fn choose(block_res: usize, data_res_per_frame: usize) -> Result<Self> {
        let mut best: Option<(f64, usize, usize)> = None;
        for f in 1..=MAX_FRAMES_PER_TRIAL {
            let cap = f * data_res_per_frame;
            let b = cap / block_res;
            if b == 0 {
                continue;
            }
            let waste = (cap - b * block_res) as f64 / cap as f64;
            if best.is_none_or(|(w, _, _)| waste < w - 1e-12) {
                best = Some((waste, f, b));
            }
        }
        let (_, f, b) = best.ok_or_else(|| {
            Error::config(format!(
                "a coded block needs {block_res} resource elements; {MAX_FRAMES_PER_TRIAL} frames hold {}",
                MAX_FRAMES_PER_TRIAL * data_res_per_frame
            ))
        })?;
        Ok(Self { frames_per_trial: f, blocks_per_trial: b, block_res, data_res_per_frame })
    }
}

/// Everything that stays fixed across trials of a scenario.
pub struct BlerEngine<'a> {
    cfg: &'a ScenarioConfig,
    res: ResolvedScenario,
    est: Estimator,
    constellations: Vec<Constellation>,
    codec: TurboCodec,
    matcher: RateMatcher,
    /// Mother positions sent on freed bins (parity fill only).
    extras: Vec<usize>,
    /// Channel interleaver: transmitted bit `i` is punctured output `perm[i]`.
    perm: Vec<usize>,
    layout: FrameLayout,
    guard: Vec<usize>,
}

impl<'a> BlerEngine<'a> {
    pub fn new(cfg: &'a ScenarioConfig) -> Result<Self> {
        let res = cfg.resolve()?;
        let ofdm = &res.ofdm;
        let est = Estimator::new(cfg.estimator.kind, &res.plan, res.l_taps, ofdm.n_fft, &ofdm.used_subcarriers)?;
        let constellations: Vec<Constellation> = cfg.towers.iter().map(|t| t.constellation.constellation()).collect();
        let codec = TurboCodec::new(cfg.fec.turbo())?;
        let matcher = cfg.fec.rate_matcher()?;
        let bps = constellations[0].bits_per_symbol;
        let block_bits = matcher.output_len();
        let layout = FrameLayout::choose(block_bits.div_ceil(bps), ofdm.n_used() * (ofdm.frame_period - 1))?;
        let extras = if cfg.pilots.parity_fill {
            let fill = RateMatcher::new(CodeRate::TwoThirds, cfg.fec.block_length);
            let extras = matcher.extra_positions(&fill);
            let needed = extras.len() * layout.blocks_per_trial;
            let available = res.plan.freed.len() * bps * layout.frames_per_trial;
            if needed > available {
                return Err(Error::config(format!(
                    "parity fill needs {needed} bits per trial but the freed bins hold {available}"
                )));
            }
            extras
        } else {
            Vec::new()
        };
        let mut perm: Vec<usize> = (0..block_bits).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(splitmix64(cfg.fec.interleaver_seed ^ 0x6368_616e_6e65_6c)));
        let guard = ofdm.guard_band_bins();
        Ok(Self { cfg, res, est, constellations, codec, matcher, extras, perm, layout, guard })
    }

    pub fn layout(&self) -> FrameLayout {
        self.layout
    }

    pub fn resolved(&self) -> &ResolvedScenario {
        &self.res
    }

    fn bps(&self) -> usize {
        self.constellations[0].bits_per_symbol
    }

    /// Runs trial `t` at per-bin noise variance `sigma2_bin` (0 = noiseless);
    /// returns `(blocks, block errors)`.
    pub fn trial(&self, t: u64, sigma2_bin: f64) -> Result<(u64, u64)> {
        let cfg = self.cfg;
        let ofdm = &self.res.ofdm;
        let plan = &self.res.plan;
        let lay = self.layout;
        let bps = self.bps();
        let n_used = ofdm.n_used();
        let p = ofdm.frame_period;
        let k = cfg.fec.block_length;
        let mut rng = trial_rng(cfg.master_seed, &cfg.scenario_id, t);

        // Transmit side: blocks onto the desired data stream.
        let block_bits = self.matcher.output_len();
        let mut info = Vec::with_capacity(lay.blocks_per_trial);
        let mut data_bits = Vec::with_capacity(lay.frames_per_trial * lay.data_res_per_frame * bps);
        let mut extra_bits = Vec::new();
        for _ in 0..lay.blocks_per_trial {
            let u: Vec<u8> = (0..k).map(|_| rng.random::<bool>() as u8).collect();
            let cw = self.codec.encode(&u)?;
            let tx = self.matcher.puncture(&cw)?;
            data_bits.extend(self.perm.iter().map(|&q| tx[q]));
            data_bits.extend((block_bits..lay.block_res * bps).map(|_| rng.random::<bool>() as u8));
            extra_bits.extend(self.extras.iter().map(|&q| cw[q]));
            info.push(u);
        }
        data_bits.extend((data_bits.len()..lay.frames_per_trial * lay.data_res_per_frame * bps).map(|_| rng.random::<bool>() as u8));
        let data_syms = map_bits(&data_bits, &self.constellations[0])?;
        let fill_cap = plan.freed.len() * bps;
        if cfg.pilots.parity_fill {
            extra_bits.extend((extra_bits.len()..lay.frames_per_trial * fill_cap).map(|_| rng.random::<bool>() as u8));
        }

        let mut data_llrs = Vec::with_capacity(data_bits.len());
        let mut extra_llrs = Vec::with_capacity(extra_bits.len());
        let mut joint = JointDetector::new(self.constellations.clone())?;
        let mut single = JointDetector::new(vec![self.constellations[0].clone()])?;
        let mut llr = vec![0.0; bps];
        for f in 0..lay.frames_per_trial {
            let grids = self.frame_grids(f, &data_syms, &extra_bits[..], fill_cap, &mut rng)?;
            let streams = grids.iter().map(|g| g.modulate(ofdm)).collect::<Result<Vec<_>>>()?;
            let ch = FrameChannel::draw(cfg, &self.res, &mut rng)?;
            let view = OffsetView::new(cfg, &ch.eps)?;
            let rx = apply_downlink(&streams, &ch.links(cfg, ofdm), ofdm, 0)?;
            let noise =
                if sigma2_bin > 0.0 { NoiseModel::new(sigma2_bin / ofdm.n_fft as f64)? } else { NoiseModel::bypass() };
            let rx = derotate_stream(&add_awgn(&rx, &noise, &mut rng), view.derotation, 0, ofdm);
            let spectra = rx
                .chunks(ofdm.symbol_len())
                .map(|s| demodulate_full(s, ofdm))
                .collect::<Result<Vec<_>>>()?;
            let mut s2 = 0.0;
            for s in &spectra {
                s2 += estimate_noise_variance(s, &self.guard)?;
            }
            let s2 = s2 / spectra.len() as f64 * ofdm.n_fft as f64;
            let alpha = self.res.alpha_mode.resolve(s2, self.est.gram_trace(), self.est.unknowns(), false);
            let est = self.est.estimate(&self.est.factors(alpha)?, &plan.gather(&spectra[0])?)?;
            let s2_det = s2.max(SIGMA2_FLOOR);

            let mut detect = |i: usize, idx: usize, out: &mut Vec<f64>| -> Result<()> {
                let ramps = if cfg.detector.phase_ramps {
                    view.ramps(i, ofdm)
                } else {
                    PhaseRamp::identity(self.constellations.len())
                };
                let g: Vec<C64> =
                    est.per_tower_cfr.iter().zip(&ramps.values).map(|(h, c)| h[idx] * c).collect();
                let y = spectra[i][ofdm.used_subcarriers[idx]];
                match cfg.detector.kind {
                    DetectorKind::Ocjllr => joint.llrs(y, &g, s2_det, &mut llr)?,
                    DetectorKind::Conventional => {
                        let interference: f64 = g[1..].iter().map(|v| v.norm_sqr()).sum();
                        single.llrs(y, &g[..1], s2_det + interference, &mut llr)?
                    }
                }
                out.extend_from_slice(&llr);
                Ok(())
            };
            for i in 1..p {
                for idx in 0..n_used {
                    detect(i, idx, &mut data_llrs)?;
                }
            }
            if cfg.pilots.parity_fill {
                for &idx in &plan.freed {
                    detect(0, idx, &mut extra_llrs)?;
                }
            }
        }

        // Receive side: de-interleave, depuncture, decode.
        let mut errors = 0;
        let stride = lay.block_res * bps;
        for (b, u) in info.iter().enumerate() {
            let rx = &data_llrs[b * stride..b * stride + block_bits];
            let mut tx = vec![0.0; block_bits];
            for (i, &q) in self.perm.iter().enumerate() {
                tx[q] = rx[i];
            }
            let mut mother = self.matcher.depuncture(&tx)?;
            let e = self.extras.len();
            for (&q, &v) in self.extras.iter().zip(&extra_llrs[b * e..(b + 1) * e]) {
                mother[q] = v;
            }
            let (decoded, _) = self.codec.decode(&mother)?;
            if decoded != *u {
                errors += 1;
            }
        }
        Ok((lay.blocks_per_trial as u64, errors))
    }

    /// Transmit grids of every tower for frame `f`.
    fn frame_grids<R: Rng>(
        &self,
        f: usize,
        data_syms: &[C64],
        extra_bits: &[u8],
        fill_cap: usize,
        rng: &mut R,
    ) -> Result<Vec<ResourceGrid>> {
        let ofdm = &self.res.ofdm;
        let plan = &self.res.plan;
        let n_used = ofdm.n_used();
        let d = self.layout.data_res_per_frame;
        let mut grids = Vec::with_capacity(self.constellations.len());
        for (m, c) in self.constellations.iter().enumerate() {
            let mut grid = ResourceGrid::zeros(ofdm);
            plan.write_pilots(m, &mut grid.symbols[0])?;
            if m == 0 {
                for (i, sym) in grid.symbols[1..].iter_mut().enumerate() {
                    sym.copy_from_slice(&data_syms[f * d + i * n_used..f * d + (i + 1) * n_used]);
                }
                if self.cfg.pilots.parity_fill {
                    grid = place_rate_improvement_parity(&extra_bits[f * fill_cap..(f + 1) * fill_cap], &plan.freed, &grid, c)?;
                }
            } else {
                for sym in &mut grid.symbols[1..] {
                    sym.iter_mut().for_each(|v| *v = c.points[rng.random_range(0..c.order)]);
                }
                if self.cfg.pilots.parity_fill {
                    for &idx in &plan.freed {
                        grid.symbols[0][idx] = c.points[rng.random_range(0..c.order)];
                    }
                }
            }
            grids.push(grid);
        }
        Ok(grids)
    }

    /// Runs one Eb/N0 point until `target_error_blocks` failures or
    /// `max_trials` blocks, whichever comes first. Trials are evaluated in
    /// deterministic batches and counted strictly in order, so the stopping
    /// trial is the same for any worker count.
    pub fn run_point(&self, sigma2_bin: f64) -> Result<(u64, u64)> {
        let target = self.cfg.trials.target_error_blocks.max(1);
        let block_cap = self.cfg.trials.max_trials;
        let per_trial = self.layout.blocks_per_trial as u64;
        let (mut blocks, mut errors, mut next) = (0u64, 0u64, 0u64);
        while errors < target && blocks < block_cap {
            let remaining_trials = (block_cap - blocks).div_ceil(per_trial);
            let batch = if next == 0 {
                1
            } else if errors == 0 {
                next
            } else {
                ((target - errors) as f64 * next as f64 / errors as f64).ceil() as u64
            }
            .clamp(1, MAX_BATCH)
            .min(remaining_trials);
            let results: Vec<(u64, u64)> =
                (next..next + batch).into_par_iter().map(|t| self.trial(t, sigma2_bin)).collect::<Result<_>>()?;
            next += batch;
            for (b, e) in results {
                blocks += b;
                errors += e;
                if errors >= target || blocks >= block_cap {
                    break;
                }
            }
        }
        Ok((blocks, errors))
    }
}

/// One `bler` record per Eb/N0 point.
pub fn run_bler_experiment(cfg: &ScenarioConfig) -> Result<Vec<MetricRecord>> {
    let engine = BlerEngine::new(cfg)?;
    cfg.sweep
        .eb_n0_db
        .iter()
        .map(|&eb| {
            let sigma2 = if cfg.sweep.noiseless { 0.0 } else { derive_sigma2(eb, cfg)? };
            let (blocks, errors) = engine.run_point(sigma2)?;
            Ok(MetricRecord::bler(&cfg.scenario_id, eb, blocks, errors, cfg.master_seed))
        })
        .collect()
}
