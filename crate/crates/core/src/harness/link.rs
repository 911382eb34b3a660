//! Pieces shared by the MSE and BLER engines: per-frame channel draws, the
//! receiver's view of the carrier offsets, and a uniform wrapper over the two
//! estimators.

use rand::Rng;

use crate::cfo::{signal_gain, PhaseRamp};
use crate::channel::{realize_cir, TowerLink};
use crate::error::Result;
use crate::estimation::{ChannelEstimateSet, JmlsEstimator, OmlsEstimator};
use crate::numerics::{GramFactor, C64};
use crate::ofdm::OfdmConfig;
use crate::pilots::PilotPlan;

use super::config::{DesiredCfo, EstimatorKind, ResolvedScenario, ScenarioConfig};

/// One frame's propagation: CIRs and true normalized offsets per tower.
#[derive(Clone, Debug)]
pub(crate) struct FrameChannel {
    pub cirs: Vec<Vec<C64>>,
    pub eps: Vec<f64>,
}

impl FrameChannel {
    /// Draws CIRs (tower order) then offsets uniformly in `[0, max_fraction]`.
    pub fn draw<R: Rng + ?Sized>(cfg: &ScenarioConfig, res: &ResolvedScenario, rng: &mut R) -> Result<Self> {
        let ofdm = &res.ofdm;
        let cirs = cfg
            .towers
            .iter()
            .zip(&res.profiles)
            .map(|(t, pdp)| realize_cir(pdp, t.delay_ns * 1e-9, t.power_db, ofdm.sample_rate_hz, ofdm.n_cp, rng))
            .collect::<Result<Vec<_>>>()?;
        let eps_max = cfg.cfo.max_fraction;
        let mut eps: Vec<f64> = (0..cirs.len()).map(|_| rng.random::<f64>() * eps_max).collect();
        if cfg.cfo.desired == DesiredCfo::Zero {
            eps[0] = 0.0;
        }
        Ok(Self { cirs, eps })
    }

    pub fn links(&self, cfg: &ScenarioConfig, ofdm: &OfdmConfig) -> Vec<TowerLink> {
        self.cirs
            .iter()
            .zip(&self.eps)
            .zip(&cfg.towers)
            .enumerate()
            .map(|(m, ((cir, &eps), t))| TowerLink {
                tower_id: m,
                cir: cir.clone(),
                extra_delay_s: t.delay_ns * 1e-9,
                cfo_hz: eps * ofdm.subcarrier_spacing_hz,
                eps,
                power_db: t.power_db,
            })
            .collect()
    }
}

/// Derotation offset and residuals, true and as known to the receiver.
#[derive(Clone, Debug)]
pub(crate) struct OffsetView {
    /// Applied derotation `eps*`.
    pub derotation: f64,
    /// `eps_m - eps*` (what the signal actually experiences).
    pub true_residual: Vec<f64>,
    /// Residuals the receiver believes, including any configured bias.
    pub known_residual: Vec<f64>,
}

impl OffsetView {
    pub fn new(cfg: &ScenarioConfig, eps: &[f64]) -> Result<Self> {
        let known: Vec<f64> = eps.iter().map(|e| e + cfg.cfo.perturbation).collect();
        let derotation = cfg.cfo.derotation.offset(&known, cfg.cfo.max_fraction)?;
        Ok(Self {
            derotation,
            true_residual: eps.iter().map(|e| e - derotation).collect(),
            known_residual: known.iter().map(|e| e - derotation).collect(),
        })
    }

    /// Phase ramps for symbol `i` from the known residuals.
    pub fn ramps(&self, i: usize, ofdm: &OfdmConfig) -> PhaseRamp {
        PhaseRamp::new(&self.known_residual, i, ofdm)
    }

    /// Ground truth the estimator converges to: each tower scaled by the
    /// wanted-bin gain of its true residual offset.
    pub fn scaled_truth(&self, mut truth: ChannelEstimateSet, ofdm: &OfdmConfig) -> ChannelEstimateSet {
        for (m, &e) in self.true_residual.iter().enumerate() {
            if e != 0.0 {
                truth.scale_tower(m, signal_gain(e, ofdm));
            }
        }
        truth
    }
}

pub(crate) enum Estimator {
    Joint(JmlsEstimator),
    Orthogonal(OmlsEstimator),
}

pub(crate) enum Factors {
    Joint(GramFactor),
    Orthogonal(Vec<GramFactor>),
}

impl Estimator {
    pub fn new(kind: EstimatorKind, plan: &PilotPlan, l: usize, n_fft: usize, cfr_bins: &[usize]) -> Result<Self> {
        Ok(match kind {
            EstimatorKind::Jmls => Estimator::Joint(JmlsEstimator::new(plan, l, n_fft, cfr_bins)?),
            EstimatorKind::Omls => Estimator::Orthogonal(OmlsEstimator::new(plan, l, n_fft, cfr_bins)?),
        })
    }

    pub fn gram_trace(&self) -> f64 {
        match self {
            Estimator::Joint(e) => e.gram_trace(),
            Estimator::Orthogonal(e) => e.gram_trace(),
        }
    }

    pub fn unknowns(&self) -> usize {
        match self {
            Estimator::Joint(e) => e.unknowns(),
            Estimator::Orthogonal(e) => e.unknowns(),
        }
    }

    pub fn factors(&self, alpha: f64) -> Result<Factors> {
        Ok(match self {
            Estimator::Joint(e) => Factors::Joint(e.factor(alpha)?),
            Estimator::Orthogonal(e) => Factors::Orthogonal(e.factors(alpha)?),
        })
    }

    pub fn estimate(&self, f: &Factors, y: &[C64]) -> Result<ChannelEstimateSet> {
        match (self, f) {
            (Estimator::Joint(e), Factors::Joint(f)) => e.estimate_with(f, y),
            (Estimator::Orthogonal(e), Factors::Orthogonal(f)) => e.estimate_with(f, y),
            _ => unreachable!("factors built by a different estimator"),
        }
    }
}
