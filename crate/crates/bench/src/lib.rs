//! Fixtures shared by the benchmarks: desk-scale inputs built once, outside
//! the timed loops.

use itisim::channel::{complex_gaussian, realize_cir, PowerDelayProfile};
use itisim::detection::Constellation;
use itisim::estimation::{cir_to_cfr, JmlsEstimator};
use itisim::fec::{TurboCodec, TurboConfig};
use itisim::pilots::{make_joint_plan, PilotFamily, PilotPlan};
use itisim::{OfdmConfig, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Joint four-tower plan on the desk-scale used band with `L = 9`.
pub fn joint_plan(cfg: &OfdmConfig) -> PilotPlan {
    let pos: Vec<usize> = (0..cfg.n_used()).collect();
    make_joint_plan(4, &cfg.used_subcarriers, &pos, 9, cfg.n_fft, PilotFamily::Zc, 0).expect("feasible plan")
}

/// Estimator plus one noisy pilot observation for it.
pub fn jmls_fixture(cfg: &OfdmConfig) -> (JmlsEstimator, Vec<C64>) {
    let plan = joint_plan(cfg);
    let est = JmlsEstimator::new(&plan, 9, cfg.n_fft, &cfg.used_subcarriers).expect("estimator");
    let mut r = rng(1);
    let bins = plan.observation_bins();
    let mut y = vec![C64::new(0.0, 0.0); bins.len()];
    for m in 0..4 {
        let cir = realize_cir(&PowerDelayProfile::uniform4(), 0.0, 0.0, cfg.sample_rate_hz, cfg.n_cp, &mut r).unwrap();
        for ((v, h), x) in y.iter_mut().zip(cir_to_cfr(&cir, &bins, cfg.n_fft)).zip(&plan.sequences[m]) {
            *v += h * x;
        }
    }
    for v in &mut y {
        *v += complex_gaussian(&mut r, 0.01);
    }
    (est, y)
}

/// Random received values and per-tower gains for `m` towers.
pub fn detection_inputs(m: usize, n: usize) -> (Vec<C64>, Vec<Vec<C64>>) {
    let mut r = rng(2);
    let y = (0..n).map(|_| complex_gaussian(&mut r, 2.0)).collect();
    let g = (0..n).map(|_| (0..m).map(|_| complex_gaussian(&mut r, 1.0)).collect()).collect();
    (y, g)
}

pub fn constellations(m: usize, c: Constellation) -> Vec<Constellation> {
    vec![c; m]
}

/// Codec and channel LLRs of one rate-1/3 block at moderate SNR.
pub fn turbo_fixture(k: usize) -> (TurboCodec, Vec<f64>) {
    let codec = TurboCodec::new(TurboConfig::new(k)).expect("codec");
    let mut r = rng(3);
    let bits: Vec<u8> = (0..k).map(|_| r.random::<bool>() as u8).collect();
    let cw = codec.encode(&bits).unwrap();
    let llrs = cw
        .iter()
        .map(|&b| {
            let s = if b == 0 { 1.0 } else { -1.0 };
            let n: f64 = complex_gaussian(&mut r, 2.0 * 0.6).re;
            2.0 * (s + n) / 0.6
        })
        .collect();
    (codec, llrs)
}
