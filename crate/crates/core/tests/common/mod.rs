//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the library's numerics, so the tests compare the
//! simulator against code paths it does not share.

#![allow(dead_code)]

use std::f64::consts::PI;

use itisim::C64;

/// 95% two-sided normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `k` errors out of `n` trials.
pub fn wilson(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let z2 = Z95 * Z95;
    let centre = (k + z2 / 2.0) / (n + z2);
    let half = Z95 * n.sqrt() / (n + z2) * (p * (1.0 - p) + z2 / (4.0 * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// True when the two 95% intervals do not overlap.
pub fn disjoint(a: (u64, u64), b: (u64, u64)) -> bool {
    let (la, ha) = wilson(a.1, a.0);
    let (lb, hb) = wilson(b.1, b.0);
    ha < lb || hb < la
}

/// Abscissa where the straight line through `(x1, log p1)` and
/// `(x2, log p2)` reaches `log target`.
pub fn log_crossing(x1: f64, p1: f64, x2: f64, p2: f64, target: f64) -> f64 {
    let (l1, l2, lt) = (p1.ln(), p2.ln(), target.ln());
    x1 + (l1 - lt) / (l1 - l2) * (x2 - x1)
}

pub fn db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

/// Direct `N`-point DFT of a CIR at bin `k`: `sum_d h[d] exp(-j 2 pi k d / N)`.
pub fn dft_bin(h: &[C64], k: usize, n: usize) -> C64 {
    h.iter()
        .enumerate()
        .map(|(d, &v)| v * C64::from_polar(1.0, -2.0 * PI * (k * d % n) as f64 / n as f64))
        .sum()
}

/// Leakage of a tone displaced by `x` bins through an `N`-point DFT window,
/// written out as the geometric sum `(1/N) sum_n exp(j 2 pi x n / N)`.
pub fn window_leakage(x: f64, n: usize) -> C64 {
    let nf = n as f64;
    (0..n).map(|t| C64::from_polar(1.0, 2.0 * PI * x * t as f64 / nf)).sum::<C64>() / nf
}

/// Sample mean and standard error of the mean.
pub fn mean_sem(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
