//! Joint (JmLS) and orthogonal (OmLS) regularized least-squares channel
//! estimation, CRLB calculators and MSE metrics.
//!
//! Unknowns are stacked tower by tower: entry `m L + c` of the solution is tap
//! `c` of tower `m`. Row `r` of the design matrix corresponds to FFT bin `b_r`
//! of the plan's observation bins and holds `X_m[r] exp(-j 2 pi b_r c / N)`.
//! Noise variances here are per-bin (frequency-domain) values.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{dft_twiddle, fft_in_place, regularized_ls_solve, GramFactor, RegularizedLsProblem, C64};
use crate::pilots::{PilotPlan, PilotScheme};

/// Stacked CIR estimates and their frequency responses.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelEstimateSet {
    pub stacked_cir: Vec<C64>,
    pub per_tower_cir: Vec<Vec<C64>>,
    /// CFR of each tower on `cfr_bins`.
    pub per_tower_cfr: Vec<Vec<C64>>,
    pub cfr_bins: Vec<usize>,
    pub l_taps: usize,
    pub regularization: f64,
}

impl ChannelEstimateSet {
    /// Splits a stacked `L M` vector and evaluates each tower's CFR.
    pub fn from_stacked(
        stacked: Vec<C64>,
        l: usize,
        cfr_bins: &[usize],
        n_fft: usize,
        regularization: f64,
    ) -> Result<Self> {
        if l == 0 || stacked.len() % l != 0 {
            return Err(Error::DimensionMismatch { expected: l.max(1), got: stacked.len() });
        }
        let per_tower_cir: Vec<Vec<C64>> = stacked.chunks(l).map(<[C64]>::to_vec).collect();
        let per_tower_cfr = per_tower_cir.iter().map(|h| cir_to_cfr(h, cfr_bins, n_fft)).collect();
        Ok(Self {
            stacked_cir: stacked,
            per_tower_cir,
            per_tower_cfr,
            cfr_bins: cfr_bins.to_vec(),
            l_taps: l,
            regularization,
        })
    }

    /// Ground-truth set from per-tower CIRs, zero-padded to `l` taps.
    pub fn from_cirs(cirs: &[Vec<C64>], l: usize, cfr_bins: &[usize], n_fft: usize) -> Result<Self> {
        let mut stacked = Vec::with_capacity(cirs.len() * l);
        for h in cirs {
            if h.len() > l {
                if h[l..].iter().any(|v| v.norm_sqr() > 0.0) {
                    return Err(Error::DimensionMismatch { expected: l, got: h.len() });
                }
                stacked.extend_from_slice(&h[..l]);
            } else {
                stacked.extend_from_slice(h);
                stacked.extend(std::iter::repeat_n(C64::new(0.0, 0.0), l - h.len()));
            }
        }
        Self::from_stacked(stacked, l, cfr_bins, n_fft, 0.0)
    }

    pub fn n_towers(&self) -> usize {
        self.per_tower_cir.len()
    }

    /// Multiplies tower `m`'s CIR and CFR by a complex factor.
    pub fn scale_tower(&mut self, m: usize, factor: C64) {
        let l = self.l_taps;
        for v in &mut self.stacked_cir[m * l..(m + 1) * l] {
            *v *= factor;
        }
        for v in &mut self.per_tower_cir[m] {
            *v *= factor;
        }
        for v in &mut self.per_tower_cfr[m] {
            *v *= factor;
        }
    }
}

/// `H[b] = sum_c h[c] exp(-j 2 pi b c / N)` for every `b` in `bins`.
///
/// Evaluated through a zero-padded FFT when that is cheaper than the direct
/// sums.
pub fn cir_to_cfr(cir: &[C64], bins: &[usize], n_fft: usize) -> Vec<C64> {
    if cir.len() <= n_fft && bins.len() * cir.len() > 4 * n_fft && n_fft.is_power_of_two() {
        let mut buf = vec![C64::new(0.0, 0.0); n_fft];
        buf[..cir.len()].copy_from_slice(cir);
        if fft_in_place(&mut buf).is_ok() {
            return bins.iter().map(|&b| buf[b % n_fft]).collect();
        }
    }
    bins.iter()
        .map(|&b| cir.iter().enumerate().map(|(c, &h)| h * dft_twiddle(b, c, n_fft)).sum())
        .collect()
}

/// Design matrix `X F_LM` over the plan's observation bins.
pub fn design_matrix(plan: &PilotPlan, l: usize, n_fft: usize) -> DMatrix<C64> {
    let m = plan.n_towers();
    let rows = plan.observation_bins();
    let mut a = DMatrix::zeros(rows.len(), l * m);
    match plan.scheme {
        PilotScheme::Joint => {
            for t in 0..m {
                let x = plan.tx_values(t);
                for (r, &b) in rows.iter().enumerate() {
                    for c in 0..l {
                        a[(r, t * l + c)] = x[r] * dft_twiddle(b, c, n_fft);
                    }
                }
            }
        }
        PilotScheme::Orthogonal => {
            let mut r0 = 0;
            for t in 0..m {
                let x = plan.tx_values(t);
                for (j, b) in plan.pilot_bins(t).into_iter().enumerate() {
                    for c in 0..l {
                        a[(r0 + j, t * l + c)] = x[j] * dft_twiddle(b, c, n_fft);
                    }
                }
                r0 += x.len();
            }
        }
    }
    a
}

/// Ridge selection for the regularized solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaMode {
    /// Noise-matched ridge on partial-band plans, numerical jitter on
    /// full-band plans.
    Auto,
    /// Ridge equal to the estimated per-bin noise variance.
    Noise,
    /// `1e-12 trace(G) / (L M)`.
    Jitter,
    Fixed(f64),
}

impl AlphaMode {
    /// Resolves the ridge. `full_band` marks plans whose Gram matrix is well
    /// conditioned by construction.
    pub fn resolve(&self, sigma2_bin: f64, gram_trace: f64, unknowns: usize, full_band: bool) -> f64 {
        let jitter = 1e-12 * gram_trace / unknowns.max(1) as f64;
        match *self {
            AlphaMode::Auto if full_band => jitter,
            AlphaMode::Auto | AlphaMode::Noise => sigma2_bin.max(jitter),
            AlphaMode::Jitter => jitter,
            AlphaMode::Fixed(a) => a,
        }
    }
}

/// Number of CIR taps modelled per tower.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LMode {
    /// `round(T_m F_s) + 1` from the largest composite delay.
    Auto,
    /// `L = N_cp`.
    Cp,
    Fixed(usize),
}

impl LMode {
    pub fn resolve(&self, max_delay_s: f64, sample_rate_hz: f64, n_cp: usize) -> usize {
        match *self {
            LMode::Auto => l_from_delay(max_delay_s, sample_rate_hz),
            LMode::Cp => n_cp,
            LMode::Fixed(l) => l,
        }
    }
}

/// `round(T_m F_s) + 1`.
pub fn l_from_delay(max_delay_s: f64, sample_rate_hz: f64) -> usize {
    (max_delay_s * sample_rate_hz).round() as usize + 1
}

/// Joint estimator with `A^H` and `A^H A` precomputed for a fixed plan and `L`.
#[derive(Clone, Debug)]
pub struct JmlsEstimator {
    l: usize,
    n_fft: usize,
    n_towers: usize,
    cfr_bins: Vec<usize>,
    adjoint: DMatrix<C64>,
    gram: DMatrix<C64>,
}

impl JmlsEstimator {
    pub fn new(plan: &PilotPlan, l: usize, n_fft: usize, cfr_bins: &[usize]) -> Result<Self> {
        let rows = plan.observation_bins().len();
        let unknowns = l * plan.n_towers();
        if unknowns >= rows {
            return Err(Error::Infeasible { unknowns, pilots: rows });
        }
        let design = design_matrix(plan, l, n_fft);
        let adjoint = design.adjoint();
        let gram = &adjoint * &design;
        Ok(Self {
            l,
            n_fft,
            n_towers: plan.n_towers(),
            cfr_bins: cfr_bins.to_vec(),
            adjoint,
            gram,
        })
    }

    pub fn l_taps(&self) -> usize {
        self.l
    }

    pub fn gram(&self) -> &DMatrix<C64> {
        &self.gram
    }

    pub fn gram_trace(&self) -> f64 {
        self.gram.diagonal().iter().map(|v| v.re).sum()
    }

    pub fn unknowns(&self) -> usize {
        self.l * self.n_towers
    }

    /// Factors `A^H A + alpha I`; reuse the result across frames with equal
    /// `alpha`.
    pub fn factor(&self, alpha: f64) -> Result<GramFactor> {
        GramFactor::from_parts(self.adjoint.clone(), self.gram.clone(), alpha)
    }

    pub fn estimate(&self, y_pilot: &[C64], alpha: f64) -> Result<ChannelEstimateSet> {
        self.estimate_with(&self.factor(alpha)?, y_pilot)
    }

    pub fn estimate_with(&self, factor: &GramFactor, y_pilot: &[C64]) -> Result<ChannelEstimateSet> {
        let h = factor.solve(&DVector::from_column_slice(y_pilot))?;
        ChannelEstimateSet::from_stacked(h.as_slice().to_vec(), self.l, &self.cfr_bins, self.n_fft, factor.ridge())
    }
}

/// Direct JmLS: builds the design and solves the regularized problem once.
pub fn jmls_estimate(
    y_pilot: &[C64],
    plan: &PilotPlan,
    l: usize,
    alpha: f64,
    n_fft: usize,
    cfr_bins: &[usize],
) -> Result<ChannelEstimateSet> {
    let rows = plan.observation_bins().len();
    if l * plan.n_towers() >= rows {
        return Err(Error::Infeasible { unknowns: l * plan.n_towers(), pilots: rows });
    }
    let problem = RegularizedLsProblem::new(
        design_matrix(plan, l, n_fft),
        DVector::from_column_slice(y_pilot),
        alpha,
    )?;
    let h = regularized_ls_solve(&problem)?;
    ChannelEstimateSet::from_stacked(h.as_slice().to_vec(), l, cfr_bins, n_fft, alpha)
}

/// Orthogonal estimator: one precomputed single-tower problem per tower.
#[derive(Clone, Debug)]
pub struct OmlsEstimator {
    l: usize,
    n_fft: usize,
    cfr_bins: Vec<usize>,
    /// `(A_m^H, A_m^H A_m)` and the row count of each tower.
    towers: Vec<(DMatrix<C64>, DMatrix<C64>, usize)>,
}

impl OmlsEstimator {
    pub fn new(plan: &PilotPlan, l: usize, n_fft: usize, cfr_bins: &[usize]) -> Result<Self> {
        if plan.scheme != PilotScheme::Orthogonal {
            return Err(Error::invalid("OmLS requires an orthogonal pilot plan"));
        }
        let towers = (0..plan.n_towers())
            .map(|t| {
                let bins = plan.pilot_bins(t);
                if l >= bins.len() {
                    return Err(Error::Infeasible { unknowns: l, pilots: bins.len() });
                }
                let x = plan.tx_values(t);
                let a = DMatrix::from_fn(bins.len(), l, |r, c| x[r] * dft_twiddle(bins[r], c, n_fft));
                let adj = a.adjoint();
                let g = &adj * &a;
                Ok((adj, g, bins.len()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { l, n_fft, cfr_bins: cfr_bins.to_vec(), towers })
    }

    pub fn gram_trace(&self) -> f64 {
        self.towers.iter().map(|(_, g, _)| g.diagonal().iter().map(|v| v.re).sum::<f64>()).sum()
    }

    pub fn unknowns(&self) -> usize {
        self.l * self.towers.len()
    }

    pub fn factors(&self, alpha: f64) -> Result<Vec<GramFactor>> {
        self.towers
            .iter()
            .map(|(adj, g, _)| GramFactor::from_parts(adj.clone(), g.clone(), alpha))
            .collect()
    }

    pub fn estimate(&self, y_pilot: &[C64], alpha: f64) -> Result<ChannelEstimateSet> {
        self.estimate_with(&self.factors(alpha)?, y_pilot)
    }

    /// `y_pilot` is the concatenation of every tower's pilot observations.
    pub fn estimate_with(&self, factors: &[GramFactor], y_pilot: &[C64]) -> Result<ChannelEstimateSet> {
        let total: usize = self.towers.iter().map(|t| t.2).sum();
        if y_pilot.len() != total {
            return Err(Error::DimensionMismatch { expected: total, got: y_pilot.len() });
        }
        let mut stacked = Vec::with_capacity(self.unknowns());
        let mut r0 = 0;
        for ((_, _, rows), f) in self.towers.iter().zip(factors) {
            let h = f.solve(&DVector::from_column_slice(&y_pilot[r0..r0 + rows]))?;
            stacked.extend_from_slice(h.as_slice());
            r0 += rows;
        }
        let ridge = factors.first().map_or(0.0, GramFactor::ridge);
        ChannelEstimateSet::from_stacked(stacked, self.l, &self.cfr_bins, self.n_fft, ridge)
    }
}

/// One-shot OmLS estimate.
pub fn omls_estimate(
    y_pilot: &[C64],
    plan: &PilotPlan,
    l: usize,
    alpha: f64,
    n_fft: usize,
    cfr_bins: &[usize],
) -> Result<ChannelEstimateSet> {
    OmlsEstimator::new(plan, l, n_fft, cfr_bins)?.estimate(y_pilot, alpha)
}

/// `trace((A^H A)^{-1}) sigma2` for the plan's design. Falls back to a
/// jitter ridge of `1e-12 trace(G) / (L M)` when the Gram matrix is singular.
pub fn crlb_general(plan: &PilotPlan, l: usize, sigma2: f64, n_fft: usize) -> Result<f64> {
    if !(sigma2 >= 0.0) {
        return Err(Error::invalid(format!("sigma2 must be >= 0, got {sigma2}")));
    }
    let a = design_matrix(plan, l, n_fft);
    let factor = match GramFactor::new(&a, 0.0) {
        Ok(f) => f,
        Err(Error::IllConditioned { .. }) => {
            let g = a.adjoint() * &a;
            let tr: f64 = g.diagonal().iter().map(|v| v.re).sum();
            GramFactor::new(&a, 1e-12 * tr / (l * plan.n_towers()) as f64)?
        }
        Err(e) => return Err(e),
    };
    let inv = factor.inverse();
    Ok(inv.diagonal().iter().map(|v| v.re).sum::<f64>() * sigma2)
}

/// Joint scheme with full-band unit pilots: `M L / N sigma2`.
pub fn crlb_joint_closed_form(m: usize, l: usize, n: usize, sigma2: f64) -> f64 {
    (m * l) as f64 / n as f64 * sigma2
}

/// Orthogonal scheme, `N_p` pilots split over `M` towers, pilot amplitude
/// `boost`: `M * L M / (N_p boost^2) sigma2` in total.
pub fn crlb_orthogonal_approx(m: usize, l: usize, n_pilots: usize, boost: f64, sigma2: f64) -> f64 {
    m as f64 * (l * m) as f64 / (n_pilots as f64 * boost * boost) * sigma2
}

/// Total squared CIR error summed over all `L M` entries.
pub fn mse_total(estimate: &ChannelEstimateSet, truth: &ChannelEstimateSet) -> Result<f64> {
    if estimate.stacked_cir.len() != truth.stacked_cir.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.stacked_cir.len(),
            got: estimate.stacked_cir.len(),
        });
    }
    Ok(estimate
        .stacked_cir
        .iter()
        .zip(&truth.stacked_cir)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum())
}

/// CFR squared error averaged over bins and summed over towers.
pub fn mse_cfr_per_bin(estimate: &ChannelEstimateSet, truth: &ChannelEstimateSet) -> Result<f64> {
    if estimate.per_tower_cfr.len() != truth.per_tower_cfr.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.per_tower_cfr.len(),
            got: estimate.per_tower_cfr.len(),
        });
    }
    let mut total = 0.0;
    for (a, b) in estimate.per_tower_cfr.iter().zip(&truth.per_tower_cfr) {
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::DimensionMismatch { expected: b.len(), got: a.len() });
        }
        total += a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() / a.len() as f64;
    }
    Ok(total)
}
