//! Complex linear algebra and DFT primitives.
//!
//! FFT convention: the forward transform is unscaled,
//! `X[k] = sum_n x[n] exp(-j 2 pi k n / N)`, and the inverse carries the `1/N`
//! factor. With this convention a time-domain signal of per-sample variance
//! `s2` has per-bin variance `N * s2` after [`fft`], and [`DftSubmatrix`]
//! entries are pure exponentials.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Pivot ratio above which an unregularized Gram matrix is rejected.
pub const MAX_PIVOT_RATIO: f64 = 1e12;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Result<Arc<dyn Fft<f64>>> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    Ok(PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    }))
}

/// Unscaled forward DFT.
pub fn fft(x: &[C64]) -> Result<Vec<C64>> {
    let mut buf = x.to_vec();
    fft_in_place(&mut buf)?;
    Ok(buf)
}

/// Inverse DFT including the `1/N` factor.
pub fn ifft(x: &[C64]) -> Result<Vec<C64>> {
    let mut buf = x.to_vec();
    ifft_in_place(&mut buf)?;
    Ok(buf)
}

pub fn fft_in_place(buf: &mut [C64]) -> Result<()> {
    plan(buf.len(), false)?.process(buf);
    Ok(())
}

pub fn ifft_in_place(buf: &mut [C64]) -> Result<()> {
    let n = buf.len();
    plan(n, true)?.process(buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|v| *v *= scale);
    Ok(())
}

/// `exp(-j 2 pi k c / n)`, with the product reduced modulo `n` first so large
/// indices keep full precision.
pub fn dft_twiddle(k: usize, c: usize, n: usize) -> C64 {
    let r = ((k as u128 * c as u128) % n as u128) as f64;
    C64::from_polar(1.0, -2.0 * PI * r / n as f64)
}

/// Rows of the `N`-point DFT matrix at selected bins, restricted to the first
/// `n_cols` columns.
#[derive(Clone, Debug)]
pub struct DftSubmatrix {
    n_fft: usize,
    row_indices: Vec<usize>,
    n_cols: usize,
    entries: DMatrix<C64>,
}

impl DftSubmatrix {
    pub fn new(n_fft: usize, row_indices: &[usize], n_cols: usize) -> Result<Self> {
        if n_cols == 0 || n_cols > n_fft {
            return Err(Error::invalid(format!(
                "n_cols must lie in 1..={n_fft}, got {n_cols}"
            )));
        }
        if let Some(&bad) = row_indices.iter().find(|&&k| k >= n_fft) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                size: n_fft,
            });
        }
        let entries = DMatrix::from_fn(row_indices.len(), n_cols, |r, c| {
            dft_twiddle(row_indices[r], c, n_fft)
        });
        Ok(Self {
            n_fft,
            row_indices: row_indices.to_vec(),
            n_cols,
            entries,
        })
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn row_indices(&self) -> &[usize] {
        &self.row_indices
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn entry(&self, r: usize, c: usize) -> C64 {
        self.entries[(r, c)]
    }

    /// Maps `n_cols` time-domain taps to the selected frequency bins.
    pub fn apply(&self, taps: &[C64]) -> Result<Vec<C64>> {
        if taps.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                got: taps.len(),
            });
        }
        let v = DVector::from_column_slice(taps);
        Ok((&self.entries * v).as_slice().to_vec())
    }
}

/// Ridge-regularized least squares: minimize `|y - A x|^2 + ridge |x|^2`.
#[derive(Clone, Debug)]
pub struct RegularizedLsProblem {
    pub design: DMatrix<C64>,
    pub observation: DVector<C64>,
    pub ridge: f64,
}

impl RegularizedLsProblem {
    pub fn new(design: DMatrix<C64>, observation: DVector<C64>, ridge: f64) -> Result<Self> {
        if design.nrows() != observation.len() {
            return Err(Error::DimensionMismatch {
                expected: design.nrows(),
                got: observation.len(),
            });
        }
        if !(ridge >= 0.0) {
            return Err(Error::invalid(format!("ridge must be >= 0, got {ridge}")));
        }
        Ok(Self {
            design,
            observation,
            ridge,
        })
    }

    pub fn solve(&self) -> Result<DVector<C64>> {
        regularized_ls_solve(self)
    }
}

pub fn regularized_ls_solve(problem: &RegularizedLsProblem) -> Result<DVector<C64>> {
    let factor = GramFactor::new(&problem.design, problem.ridge)?;
    factor.solve(&problem.observation)
}

/// Cholesky factorization of `A^H A + ridge I`, reusable for any observation
/// vector with the same design.
#[derive(Clone, Debug)]
pub struct GramFactor {
    design_adjoint: DMatrix<C64>,
    cholesky: Cholesky<C64, Dyn>,
    ridge: f64,
    pivot_ratio: f64,
}

impl GramFactor {
    pub fn new(design: &DMatrix<C64>, ridge: f64) -> Result<Self> {
        let adjoint = design.adjoint();
        let gram = &adjoint * design;
        Self::from_parts(adjoint, gram, ridge)
    }

    /// Builds the factor from a precomputed `A^H` and `A^H A`.
    pub fn from_parts(design_adjoint: DMatrix<C64>, gram: DMatrix<C64>, ridge: f64) -> Result<Self> {
        if !(ridge >= 0.0) {
            return Err(Error::invalid(format!("ridge must be >= 0, got {ridge}")));
        }
        let n = gram.nrows();
        if gram.ncols() != n || design_adjoint.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: design_adjoint.nrows(),
            });
        }
        let mut regularized = gram;
        for i in 0..n {
            regularized[(i, i)] += C64::new(ridge, 0.0);
        }
        let cholesky = match Cholesky::new(regularized) {
            Some(c) => c,
            None if ridge == 0.0 => {
                return Err(Error::IllConditioned {
                    pivot_ratio: f64::INFINITY,
                })
            }
            None => {
                return Err(Error::Numerical(
                    "regularized Gram matrix is not positive definite".into(),
                ))
            }
        };
        let pivots: Vec<f64> = {
            let l = cholesky.l_dirty();
            (0..n).map(|i| l[(i, i)].norm_sqr()).collect()
        };
        let max = pivots.iter().cloned().fold(0.0, f64::max);
        let min = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
        let pivot_ratio = if n == 0 { 1.0 } else { max / min };
        if ridge == 0.0 && !(pivot_ratio <= MAX_PIVOT_RATIO) {
            return Err(Error::IllConditioned { pivot_ratio });
        }
        Ok(Self {
            design_adjoint,
            cholesky,
            ridge,
            pivot_ratio,
        })
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    pub fn dim(&self) -> usize {
        self.design_adjoint.nrows()
    }

    pub fn solve(&self, y: &DVector<C64>) -> Result<DVector<C64>> {
        if y.len() != self.design_adjoint.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.design_adjoint.ncols(),
                got: y.len(),
            });
        }
        let rhs = &self.design_adjoint * y;
        Ok(self.cholesky.solve(&rhs))
    }

    /// `(A^H A + ridge I)^{-1}`.
    pub fn inverse(&self) -> DMatrix<C64> {
        self.cholesky.inverse()
    }
}

/// Hermitian Gram matrix `A^H A`.
pub fn gram(design: &DMatrix<C64>) -> DMatrix<C64> {
    design.adjoint() * design
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn full_dft_case() {
        let f = DftSubmatrix::new(4, &[0, 1, 2, 3], 4).unwrap();
        assert!((f.entry(1, 1) - C64::new(0.0, -1.0)).norm() < 1e-15);
        for r in 0..4 {
            for c in 0..4 {
                let want = C64::from_polar(1.0, -2.0 * PI * (r * c) as f64 / 4.0);
                assert!((f.entry(r, c) - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_row_is_all_ones() {
        let f = DftSubmatrix::new(8, &[0], 3).unwrap();
        for c in 0..3 {
            assert_eq!(f.entry(0, c), C64::new(1.0, 0.0));
        }
    }

    #[test]
    fn sampled_rows_match_direct_exponential() {
        let rows: Vec<usize> = (0..2048).step_by(4).collect();
        let f = DftSubmatrix::new(2048, &rows, 13).unwrap();
        assert_eq!(f.matrix().shape(), (512, 13));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let r = rng.random_range(0..rows.len());
            let c = rng.random_range(0..13);
            let phase = -2.0 * PI * (rows[r] as f64) * (c as f64) / 2048.0;
            let direct = C64::new(phase.cos(), phase.sin());
            assert!((f.entry(r, c) - direct).norm() < 1e-9);
            assert!((f.entry(r, c).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dft_submatrix_rejects_bad_shapes() {
        assert!(matches!(
            DftSubmatrix::new(8, &[8], 2),
            Err(Error::IndexOutOfRange { index: 8, size: 8 })
        ));
        assert!(DftSubmatrix::new(8, &[0], 9).is_err());
        assert!(DftSubmatrix::new(8, &[0], 0).is_err());
    }

    #[test]
    fn uniformly_spaced_rows_have_scaled_identity_gram() {
        // N = 256, every 4th bin, first 8 columns: eigenvalues are N_p = 64.
        let rows: Vec<usize> = (0..256).step_by(4).collect();
        let f = DftSubmatrix::new(256, &rows, 8).unwrap();
        let g = gram(f.matrix());
        let eig = g.symmetric_eigenvalues();
        for &e in eig.iter() {
            assert!((e - 64.0).abs() / 64.0 < 0.05, "eigenvalue {e}");
        }
    }

    #[test]
    fn identity_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = DVector::from_vec(random_vec(&mut rng, 5));
        let a = DMatrix::<C64>::identity(5, 5);
        let p = RegularizedLsProblem::new(a.clone(), y.clone(), 0.0).unwrap();
        assert!((p.solve().unwrap() - &y).norm() < 1e-14);
        let p = RegularizedLsProblem::new(a, y.clone(), 1.0).unwrap();
        assert!((p.solve().unwrap() - y.scale(0.5)).norm() < 1e-14);
    }

    #[test]
    fn recovers_exact_solution_against_qr_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = DMatrix::from_vec(16, 4, random_vec(&mut rng, 64));
        let x0 = DVector::from_vec(random_vec(&mut rng, 4));
        let y = &a * &x0;
        let x = RegularizedLsProblem::new(a.clone(), y.clone(), 0.0)
            .unwrap()
            .solve()
            .unwrap();
        // Independent route: Householder QR of A, then R x = Q^H y.
        let qr = a.qr();
        let rhs = qr.q().adjoint() * &y;
        let x_qr = qr.r().solve_upper_triangular(&rhs).unwrap();
        assert!((&x - &x0).norm() < 1e-10);
        assert!((&x - &x_qr).norm() < 1e-10);
    }

    #[test]
    fn orthogonal_columns_match_explicit_construction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            // Two orthogonal (unnormalized) columns on 8 rows.
            let u = DVector::from_vec(random_vec(&mut rng, 8));
            let v0 = DVector::from_vec(random_vec(&mut rng, 8));
            let proj = u.dotc(&v0) / u.dotc(&u);
            let v = &v0 - &u * proj;
            let mut a = DMatrix::zeros(8, 2);
            a.set_column(0, &u);
            a.set_column(1, &v);
            let y = DVector::from_vec(random_vec(&mut rng, 8));
            let x = RegularizedLsProblem::new(a.clone(), y.clone(), 0.0)
                .unwrap()
                .solve()
                .unwrap();
            let explicit0 = u.dotc(&y) / u.norm_squared();
            let explicit1 = v.dotc(&y) / v.norm_squared();
            assert!((x[0] - explicit0).norm() < 1e-12);
            assert!((x[1] - explicit1).norm() < 1e-12);
        }
    }

    #[test]
    fn singular_system_without_ridge_is_rejected() {
        let mut a = DMatrix::<C64>::zeros(4, 2);
        for r in 0..4 {
            a[(r, 0)] = C64::new(1.0, 0.0);
            a[(r, 1)] = C64::new(1.0, 0.0);
        }
        let y = DVector::from_element(4, C64::new(1.0, 0.0));
        let err = RegularizedLsProblem::new(a.clone(), y.clone(), 0.0)
            .unwrap()
            .solve()
            .unwrap_err();
        assert!(matches!(err, Error::IllConditioned { .. }));
        // A positive ridge makes the same system solvable.
        let x = RegularizedLsProblem::new(a, y, 1e-3).unwrap().solve().unwrap();
        assert!((x[0] - x[1]).norm() < 1e-12);
    }

    #[test]
    fn fft_examples() {
        let mut delta = vec![C64::new(0.0, 0.0); 8];
        delta[0] = C64::new(1.0, 0.0);
        for v in fft(&delta).unwrap() {
            assert!((v - C64::new(1.0, 0.0)).norm() < 1e-15);
        }
        let tone: Vec<C64> = (0..8)
            .map(|n| C64::from_polar(1.0, 2.0 * PI * 3.0 * n as f64 / 8.0))
            .collect();
        let spec = fft(&tone).unwrap();
        for (k, v) in spec.iter().enumerate() {
            if k == 3 {
                assert!((v - C64::new(8.0, 0.0)).norm() < 1e-12);
            } else {
                assert!(v.norm() < 1e-12);
            }
        }
        assert!(matches!(fft(&[C64::new(0.0, 0.0); 6]), Err(Error::NotPowerOfTwo(6))));
        assert!(ifft(&[C64::new(0.0, 0.0); 12]).is_err());
    }

    #[test]
    fn fft_roundtrip_and_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_vec(&mut rng, 256);
        let back = ifft(&fft(&x).unwrap()).unwrap();
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
        for _ in 0..100 {
            let x = random_vec(&mut rng, 64);
            let e_t: f64 = x.iter().map(|v| v.norm_sqr()).sum();
            let e_f: f64 = fft(&x).unwrap().iter().map(|v| v.norm_sqr()).sum();
            assert!((e_f - 64.0 * e_t).abs() < 1e-9 * e_f);
        }
    }
}
