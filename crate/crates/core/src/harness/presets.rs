//! Bundled experiment presets.
//!
//! Each preset is a base scenario file plus a list of series variants
//! derived from it. Every variant carries its own `scenario_id` (base id and
//! a suffix), so their records can share one CSV.

use crate::cfo::DerotationMode;
use crate::detection::Modulation;
use crate::error::{Error, Result};
use crate::pilots::PilotScheme;

use super::config::{DetectorKind, EstimatorKind, OfdmSection, ScenarioConfig};

pub const PRESET_NAMES: [&str; 6] = ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7"];

/// Base scenario text of a preset.
pub fn preset_source(name: &str) -> Result<&'static str> {
    Ok(match name {
        "fig2" => include_str!("../../presets/fig2.toml"),
        "fig3" => include_str!("../../presets/fig3.toml"),
        "fig4" => include_str!("../../presets/fig4.toml"),
        "fig5" => include_str!("../../presets/fig5.toml"),
        "fig6" => include_str!("../../presets/fig6.toml"),
        "fig7" => include_str!("../../presets/fig7.toml"),
        other => return Err(Error::config(format!("unknown preset {other:?}; expected one of {PRESET_NAMES:?}"))),
    })
}

/// Base scenario of a preset, optionally switched to the full-scale
/// numerology (`N = 2048`, 1200 used bins, 30.72 MHz).
pub fn base_scenario(name: &str, full_scale: bool) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::from_toml_str(preset_source(name)?)?;
    if full_scale {
        cfg.ofdm = OfdmSection::full_scale();
        // Block sizes follow the resource grid: keep blocks per frame fixed.
        cfg.fec.block_length = scale_block(cfg.fec.block_length);
    }
    Ok(cfg)
}

fn scale_block(k: usize) -> usize {
    // 8x the elements per frame; keep K + tail a multiple of the grid.
    (k + 4) * 8 - 4
}

/// All series of a preset with `overrides` applied to each, then validated.
pub fn load_preset(name: &str, full_scale: bool, overrides: &[String]) -> Result<Vec<ScenarioConfig>> {
    let base = base_scenario(name, full_scale)?;
    let variants = match name {
        "fig2" => fig2(&base),
        "fig3" => fig3(&base),
        "fig4" => fig4(&base),
        "fig5" => fig5(&base),
        "fig6" => fig6(&base, full_scale),
        "fig7" => fig7(&base),
        _ => unreachable!("checked by preset_source"),
    };
    variants
        .into_iter()
        .map(|v| ScenarioConfig::from_toml_str_with_overrides(&v.to_toml_string()?, overrides))
        .collect()
}

fn variant(base: &ScenarioConfig, suffix: &str, edit: impl FnOnce(&mut ScenarioConfig)) -> ScenarioConfig {
    let mut c = base.clone();
    c.scenario_id = format!("{}_{suffix}", base.scenario_id);
    edit(&mut c);
    c
}

fn orthogonal(c: &mut ScenarioConfig, boost: f64) {
    c.pilots.scheme = PilotScheme::Orthogonal;
    c.pilots.reduced = false;
    c.pilots.parity_fill = false;
    c.pilots.boost = boost;
    c.estimator.kind = EstimatorKind::Omls;
}

fn fig2(base: &ScenarioConfig) -> Vec<ScenarioConfig> {
    let mut out: Vec<ScenarioConfig> = (1..=4)
        .map(|m| variant(base, &format!("jmls_m{m}"), |c| c.towers.truncate(m)))
        .collect();
    for m in 2..=4 {
        out.push(variant(base, &format!("omls_m{m}"), |c| {
            c.towers.truncate(m);
            orthogonal(c, 1.0);
        }));
    }
    out.push(variant(base, "omls_boost_m4", |c| orthogonal(c, 2.0)));
    out
}

fn fig3(base: &ScenarioConfig) -> Vec<ScenarioConfig> {
    let mut out: Vec<ScenarioConfig> = [DerotationMode::Mean, DerotationMode::None, DerotationMode::Max]
        .into_iter()
        .map(|d| variant(base, d.as_str(), |c| c.cfo.derotation = d))
        .collect();
    out.push(variant(base, "cfo0", |c| c.cfo.max_fraction = 0.0));
    out
}

fn fig4(base: &ScenarioConfig) -> Vec<ScenarioConfig> {
    [DerotationMode::Mean, DerotationMode::None, DerotationMode::Max]
        .into_iter()
        .map(|d| variant(base, d.as_str(), |c| c.cfo.derotation = d))
        .collect()
}

fn fig5(base: &ScenarioConfig) -> Vec<ScenarioConfig> {
    let mut out = vec![variant(base, "cfo0", |c| c.cfo.max_fraction = 0.0)];
    for pct in [5, 10] {
        for d in [DerotationMode::Mean, DerotationMode::None] {
            out.push(variant(base, &format!("cfo{pct}_{}", d.as_str()), |c| {
                c.cfo.max_fraction = pct as f64 / 100.0;
                c.cfo.derotation = d;
            }));
        }
    }
    out
}

fn fig6(base: &ScenarioConfig, full_scale: bool) -> Vec<ScenarioConfig> {
    let k = |k: usize| if full_scale { scale_block(k) } else { k };
    let mut out: Vec<ScenarioConfig> =
        (2..=4).map(|m| variant(base, &format!("m{m}_3db"), |c| c.towers.truncate(m))).collect();
    out.push(variant(base, "m4_9db", |c| c.towers[1..].iter_mut().for_each(|t| t.power_db = -9.0)));
    out.push(variant(base, "m1_conventional", |c| {
        c.towers.truncate(1);
        c.detector.kind = DetectorKind::Conventional;
    }));
    out.push(variant(base, "q16_i4", |c| {
        c.towers[0].constellation = Modulation::Qam16;
        c.fec.block_length = k(796);
    }));
    out.push(variant(base, "q16_i16", |c| {
        c.towers.iter_mut().for_each(|t| t.constellation = Modulation::Qam16);
        c.fec.block_length = k(1596);
    }));
    out
}

fn fig7(base: &ScenarioConfig) -> Vec<ScenarioConfig> {
    let mut out = Vec::new();
    for (profile, scale) in [("peda", 1.0), ("veha", 0.8)] {
        for pct in [0, 5] {
            let tag = format!("{profile}_cfo{pct}");
            let setup = |c: &mut ScenarioConfig| {
                for t in &mut c.towers {
                    t.pdp = profile.to_string();
                    t.delay_scale = scale;
                }
                c.cfo.max_fraction = pct as f64 / 100.0;
            };
            out.push(variant(base, &format!("{tag}_jmls_fill"), setup));
            out.push(variant(base, &format!("{tag}_omls_boost"), |c| {
                setup(c);
                orthogonal(c, 2.0);
            }));
            out.push(variant(base, &format!("{tag}_jmls"), |c| {
                setup(c);
                c.pilots.parity_fill = false;
            }));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_desk_preset_validates() {
        for name in PRESET_NAMES {
            let v = load_preset(name, false, &[]).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(!v.is_empty());
            let mut ids: Vec<&str> = v.iter().map(|c| c.scenario_id.as_str()).collect();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), v.len(), "{name}: duplicate scenario ids");
        }
        assert!(load_preset("fig9", false, &[]).unwrap_err().is_config_error());
    }

    #[test]
    fn overrides_reach_every_variant() {
        let v = load_preset("fig4", false, &["master_seed=9".into()]).unwrap();
        assert!(v.iter().all(|c| c.master_seed == 9));
    }
}
