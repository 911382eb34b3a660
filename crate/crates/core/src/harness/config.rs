//! Scenario files: a versioned TOML schema, `key=value` overrides, and
//! validation against every module's preconditions.

use serde::{Deserialize, Serialize};

use crate::cfo::DerotationMode;
use crate::channel::PowerDelayProfile;
use crate::detection::Modulation;
use crate::error::{Error, Result};
use crate::estimation::{l_from_delay, AlphaMode, LMode};
use crate::fec::{CodeRate, PunctureMask, RateMatcher, TurboConfig};
use crate::ofdm::OfdmConfig;
use crate::pilots::{make_joint_plan, make_orthogonal_plan, make_reduced_joint_plan, PilotFamily, PilotPlan, PilotScheme};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Mse,
    Bler,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfdmSection {
    pub n_fft: usize,
    /// Defaults to 144 samples at N = 2048, scaled with N.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_cp: Option<usize>,
    pub n_used: usize,
    pub sample_rate_hz: f64,
    #[serde(default = "default_frame_period")]
    pub frame_period: usize,
}

fn default_frame_period() -> usize {
    7
}

impl OfdmSection {
    pub fn desk() -> Self {
        Self { n_fft: 256, n_cp: Some(18), n_used: 150, sample_rate_hz: 3.84e6, frame_period: 7 }
    }

    pub fn full_scale() -> Self {
        Self { n_fft: 2048, n_cp: Some(144), n_used: 1200, sample_rate_hz: 30.72e6, frame_period: 7 }
    }

    pub fn to_config(&self) -> Result<OfdmConfig> {
        let n_cp = self.n_cp.unwrap_or_else(|| OfdmConfig::default_cp(self.n_fft));
        OfdmConfig::new(self.n_fft, n_cp, self.n_used, self.sample_rate_hz, self.frame_period)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TowerSection {
    /// Power relative to the desired tower (tower 0 must be 0 dB).
    #[serde(default)]
    pub power_db: f64,
    /// Bulk delay relative to the desired tower.
    #[serde(default)]
    pub delay_ns: f64,
    #[serde(default = "default_pdp")]
    pub pdp: String,
    /// Multiplier on the profile's path delays.
    #[serde(default = "one")]
    pub delay_scale: f64,
    #[serde(default = "default_modulation")]
    pub constellation: Modulation,
}

fn default_pdp() -> String {
    "uniform4".into()
}

fn one() -> f64 {
    1.0
}

fn default_modulation() -> Modulation {
    Modulation::Qam4
}

impl TowerSection {
    pub fn new(power_db: f64, delay_ns: f64, pdp: &str, constellation: Modulation) -> Self {
        Self { power_db, delay_ns, pdp: pdp.into(), delay_scale: 1.0, constellation }
    }

    pub fn profile(&self) -> Result<PowerDelayProfile> {
        Ok(PowerDelayProfile::from_name(&self.pdp)?.scaled(self.delay_scale))
    }

    /// Bulk delay plus the profile's last path.
    pub fn max_delay_s(&self) -> Result<f64> {
        Ok(self.delay_ns * 1e-9 + self.profile()?.max_delay_s())
    }
}

/// Carrier offset of the desired tower.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesiredCfo {
    /// Offsets are measured relative to the desired tower.
    Zero,
    /// The desired tower draws its offset like the interferers.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CfoSection {
    /// Largest offset as a fraction of the subcarrier spacing; offsets are
    /// drawn uniformly in `[0, max_fraction]` every frame.
    #[serde(default)]
    pub max_fraction: f64,
    #[serde(default = "default_derotation")]
    pub derotation: DerotationMode,
    #[serde(default = "default_desired")]
    pub desired: DesiredCfo,
    /// Error added to every offset the receiver is told about.
    #[serde(default)]
    pub perturbation: f64,
}

fn default_derotation() -> DerotationMode {
    DerotationMode::Mean
}

fn default_desired() -> DesiredCfo {
    DesiredCfo::Zero
}

impl Default for CfoSection {
    fn default() -> Self {
        Self { max_fraction: 0.0, derotation: default_derotation(), desired: default_desired(), perturbation: 0.0 }
    }
}

/// Bins a pilot plan spans.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotBand {
    /// The used subcarriers of an OFDM symbol.
    Used,
    /// All `N` bins (frequency-domain MSE experiments only).
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotSection {
    pub scheme: PilotScheme,
    #[serde(default = "default_family")]
    pub family: PilotFamily,
    #[serde(default = "default_band")]
    pub band: PilotBand,
    /// Pilot amplitude factor (orthogonal scheme).
    #[serde(default = "one")]
    pub boost: f64,
    /// Joint pilots on `N_p / M` shared bins only, freeing the rest.
    #[serde(default)]
    pub reduced: bool,
    /// Send the extra rate-2/3 parity on the freed bins.
    #[serde(default)]
    pub parity_fill: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_family() -> PilotFamily {
    PilotFamily::Zc
}

fn default_band() -> PilotBand {
    PilotBand::Used
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Jmls,
    Omls,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaModeName {
    Auto,
    Noise,
    Jitter,
    Fixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LModeName {
    Auto,
    Cp,
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    pub kind: EstimatorKind,
    #[serde(default = "default_alpha_mode")]
    pub alpha_mode: AlphaModeName,
    /// Ridge for `alpha_mode = "fixed"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "default_l_mode")]
    pub l_mode: LModeName,
    /// Taps for `l_mode = "fixed"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_taps: Option<usize>,
}

fn default_alpha_mode() -> AlphaModeName {
    AlphaModeName::Auto
}

fn default_l_mode() -> LModeName {
    LModeName::Auto
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self { kind: EstimatorKind::Jmls, alpha_mode: AlphaModeName::Auto, alpha: None, l_mode: LModeName::Auto, l_taps: None }
    }
}

impl EstimatorSection {
    pub fn alpha_mode(&self) -> Result<AlphaMode> {
        Ok(match self.alpha_mode {
            AlphaModeName::Auto => AlphaMode::Auto,
            AlphaModeName::Noise => AlphaMode::Noise,
            AlphaModeName::Jitter => AlphaMode::Jitter,
            AlphaModeName::Fixed => match self.alpha {
                Some(a) if a >= 0.0 => AlphaMode::Fixed(a),
                other => return Err(Error::config(format!("alpha_mode = \"fixed\" needs alpha >= 0, got {other:?}"))),
            },
        })
    }

    pub fn l_mode(&self) -> Result<LMode> {
        Ok(match self.l_mode {
            LModeName::Auto => LMode::Auto,
            LModeName::Cp => LMode::Cp,
            LModeName::Fixed => match self.l_taps {
                Some(l) if l > 0 => LMode::Fixed(l),
                other => return Err(Error::config(format!("l_mode = \"fixed\" needs l_taps >= 1, got {other:?}"))),
            },
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    /// Joint Max-Log detection over all towers.
    Ocjllr,
    /// Desired tower only; interference treated as noise.
    Conventional,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub kind: DetectorKind,
    /// Apply the per-symbol phase ramps; `false` forces them to 1.
    #[serde(default = "yes")]
    pub phase_ramps: bool,
}

fn yes() -> bool {
    true
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self { kind: DetectorKind::Ocjllr, phase_ramps: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FecSection {
    pub block_length: usize,
    pub rate: CodeRate,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub interleaver_seed: u64,
    #[serde(default = "default_extrinsic_scale")]
    pub extrinsic_scale: f64,
    /// Parity-1 puncture mask; defaults depend on the rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_p1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_p2: Option<String>,
}

fn default_iterations() -> usize {
    8
}

fn default_extrinsic_scale() -> f64 {
    0.75
}

impl FecSection {
    pub fn new(block_length: usize, rate: CodeRate) -> Self {
        Self {
            block_length,
            rate,
            iterations: default_iterations(),
            interleaver_seed: 0,
            extrinsic_scale: default_extrinsic_scale(),
            mask_p1: None,
            mask_p2: None,
        }
    }

    pub fn turbo(&self) -> TurboConfig {
        TurboConfig {
            block_length: self.block_length,
            iterations: self.iterations,
            interleaver_seed: self.interleaver_seed,
            extrinsic_scale: self.extrinsic_scale,
        }
    }

    pub fn rate_matcher(&self) -> Result<RateMatcher> {
        let (d1, d2) = self.rate.default_masks();
        let m1 = match &self.mask_p1 {
            Some(s) => s.parse::<PunctureMask>()?,
            None => d1,
        };
        let m2 = match &self.mask_p2 {
            Some(s) => s.parse::<PunctureMask>()?,
            None => d2,
        };
        Ok(RateMatcher::with_masks(self.rate, m1, m2, self.block_length))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub eb_n0_db: Vec<f64>,
    /// Bypass the noise entirely (sanity runs).
    #[serde(default)]
    pub noiseless: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialsSection {
    /// MSE: trials per point. BLER: block cap per point.
    #[serde(default = "default_max_trials")]
    pub max_trials: u64,
    /// BLER: stop a point once this many blocks have failed.
    #[serde(default = "default_target_errors")]
    pub target_error_blocks: u64,
}

fn default_max_trials() -> u64 {
    20_000
}

fn default_target_errors() -> u64 {
    100
}

impl Default for TrialsSection {
    fn default() -> Self {
        Self { max_trials: default_max_trials(), target_error_blocks: default_target_errors() }
    }
}

/// One experiment's full parameterization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub scenario_id: String,
    pub master_seed: u64,
    pub experiment: ExperimentKind,
    pub ofdm: OfdmSection,
    pub towers: Vec<TowerSection>,
    #[serde(default)]
    pub cfo: CfoSection,
    pub pilots: PilotSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub detector: DetectorSection,
    pub fec: FecSection,
    pub sweep: SweepSection,
    #[serde(default)]
    pub trials: TrialsSection,
}

/// Everything derived from a validated config that the engines need.
#[derive(Clone, Debug)]
pub struct ResolvedScenario {
    pub ofdm: OfdmConfig,
    pub plan: PilotPlan,
    pub l_taps: usize,
    pub alpha_mode: AlphaMode,
    pub profiles: Vec<PowerDelayProfile>,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_str_with_overrides(text, &[])
    }

    /// Parses, applies `key=value` overrides (dotted paths, array elements by
    /// index, e.g. `towers.1.power_db=-9`), then validates.
    pub fn from_toml_str_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::config(format!("TOML parse error: {e}")))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(format!("invalid scenario: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>, overrides: &[String]) -> Result<Self> {
        Self::from_toml_str_with_overrides(&std::fs::read_to_string(path)?, overrides)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialize scenario: {e}")))
    }

    pub fn n_towers(&self) -> usize {
        self.towers.len()
    }

    /// Checks the config and builds its derived objects.
    pub fn resolve(&self) -> Result<ResolvedScenario> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.scenario_id.is_empty()
            || !self.scenario_id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return Err(Error::config(format!("scenario_id {:?} must be nonempty [A-Za-z0-9._-]", self.scenario_id)));
        }
        let ofdm = self.ofdm.to_config()?;
        let m = self.towers.len();
        if m == 0 {
            return Err(Error::config("at least one tower is required"));
        }
        if self.towers[0].power_db != 0.0 || self.towers[0].delay_ns != 0.0 {
            return Err(Error::config("tower 0 is the reference: power_db and delay_ns must be 0"));
        }
        let mut profiles = Vec::with_capacity(m);
        let mut max_delay: f64 = 0.0;
        for (i, t) in self.towers.iter().enumerate() {
            if !t.power_db.is_finite() || !(t.delay_ns >= 0.0) || !(t.delay_scale > 0.0) {
                return Err(Error::config(format!("tower {i}: invalid power, delay or delay_scale")));
            }
            let pdp = t.profile()?;
            let last = *pdp.tap_indices(t.delay_ns * 1e-9, ofdm.sample_rate_hz).iter().max().unwrap();
            if last > ofdm.n_cp {
                return Err(Error::DelayExceedsCp { delay_samples: last, n_cp: ofdm.n_cp });
            }
            max_delay = max_delay.max(t.max_delay_s()?);
            profiles.push(pdp);
        }
        let hypotheses: usize = self.towers.iter().map(|t| t.constellation.order()).product();
        if self.experiment == ExperimentKind::Bler && hypotheses > 1 << 16 {
            return Err(Error::config(format!("{hypotheses} joint hypotheses exceeds the 65536 limit")));
        }
        let c = &self.cfo;
        if !(0.0..0.5).contains(&c.max_fraction) || !c.perturbation.is_finite() {
            return Err(Error::config("cfo.max_fraction must be in [0, 0.5) and perturbation finite"));
        }
        let p = &self.pilots;
        if !(p.boost > 0.0 && p.boost.is_finite()) {
            return Err(Error::config("pilots.boost must be positive"));
        }
        match (self.estimator.kind, p.scheme) {
            (EstimatorKind::Jmls, PilotScheme::Joint) | (EstimatorKind::Omls, PilotScheme::Orthogonal) => {}
            (k, s) => return Err(Error::config(format!("estimator {k:?} does not match pilot scheme {s:?}"))),
        }
        if p.reduced && p.scheme != PilotScheme::Joint {
            return Err(Error::config("reduced pilots require the joint scheme"));
        }
        if p.parity_fill && !(p.reduced && self.fec.rate == CodeRate::ThreeQuarters && self.experiment == ExperimentKind::Bler) {
            return Err(Error::config("parity_fill requires reduced joint pilots, rate 3/4 and a BLER experiment"));
        }
        if p.band == PilotBand::Full && (self.experiment != ExperimentKind::Mse || c.max_fraction != 0.0) {
            return Err(Error::config("full-band pilots are only supported for MSE runs without CFO"));
        }
        let l_taps = self.estimator.l_mode()?.resolve(max_delay, ofdm.sample_rate_hz, ofdm.n_cp);
        let alpha_mode = self.estimator.alpha_mode()?;
        let band: Vec<usize> = match p.band {
            PilotBand::Used => ofdm.used_subcarriers.clone(),
            PilotBand::Full => (0..ofdm.n_fft).collect(),
        };
        let plan = match (p.scheme, p.reduced) {
            (PilotScheme::Joint, false) => {
                let pos: Vec<usize> = (0..band.len()).collect();
                make_joint_plan(m, &band, &pos, l_taps, ofdm.n_fft, p.family, p.seed)?
            }
            (PilotScheme::Joint, true) => make_reduced_joint_plan(m, &band, l_taps, ofdm.n_fft, p.family, p.seed)?,
            (PilotScheme::Orthogonal, _) => make_orthogonal_plan(m, &band, l_taps, ofdm.n_fft, p.boost, p.family, p.seed)?,
        };
        let f = &self.fec;
        f.turbo().validate()?;
        f.rate_matcher()?;
        if self.sweep.eb_n0_db.is_empty() || self.sweep.eb_n0_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("sweep.eb_n0_db must be a nonempty list of finite values"));
        }
        if self.trials.max_trials == 0 {
            return Err(Error::config("trials.max_trials must be positive"));
        }
        Ok(ResolvedScenario { ofdm, plan, l_taps, alpha_mode, profiles })
    }

    pub fn validate(&self) -> Result<()> {
        self.resolve().map(|_| ())
    }

    /// Largest composite delay among the towers.
    pub fn max_delay_s(&self) -> Result<f64> {
        self.towers.iter().try_fold(0.0f64, |acc, t| Ok(acc.max(t.max_delay_s()?)))
    }

    /// `L` from the composite delay, ignoring `l_mode`.
    pub fn auto_l_taps(&self) -> Result<usize> {
        Ok(l_from_delay(self.max_delay_s()?, self.ofdm.sample_rate_hz))
    }
}

/// Sets `path=value` in a TOML table. The value is parsed as a TOML value,
/// falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, ov: &str) -> Result<()> {
    let (path, raw) = ov
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override {ov:?} is not key=value")))?;
    let value: toml::Value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::config(format!("bad override path {path:?}")));
    }
    let mut cur: &mut toml::Value = table
        .entry(keys[0].to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    for key in &keys[1..] {
        cur = match cur {
            toml::Value::Table(t) => t.entry(key.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new())),
            toml::Value::Array(a) => {
                let i: usize = key.parse().map_err(|_| Error::config(format!("override {path:?}: {key:?} is not an index")))?;
                let len = a.len();
                a.get_mut(i).ok_or_else(|| Error::config(format!("override {path:?}: index {i} out of {len}")))?
            }
            _ => return Err(Error::config(format!("override {path:?} descends into a scalar"))),
        };
    }
    *cur = value;
    Ok(())
}
