//! Gaussian measures on R^n, PSD matrix square roots, the closed-form
//! 2-Wasserstein distance, and linear pushforwards.
//!
//! A Dirac mass is the degenerate case with a zero covariance, so the classic
//! vector-valued signal embeds here with its Euclidean geometry intact.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;

/// Gaussian measure N(mean, cov) with a symmetric PSD covariance.
/// `cov = 0` represents the Dirac mass at `mean`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianMeasure {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "mean has dim {n} but cov is {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().any(|x| !x.is_finite()) || cov.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite mean or covariance".into()));
        }
        if linalg::asymmetry(&cov) > 1e-10 {
            return Err(Error::InvalidInput("covariance not symmetric (tol 1e-10)".into()));
        }
        let cov = linalg::symmetrize(&cov);
        let eigmin = linalg::min_eigenvalue(&cov);
        // Tolerance scales with the covariance magnitude; at unit scale this
        // is the absolute 1e-10 bound. Slightly negative eigenvalues are kept
        // and clamped to zero wherever a square root is taken.
        let tol = 1e-10f64.max(1e-12 * linalg::max_abs(&cov));
        if eigmin < -tol {
            return Err(Error::InvalidInput(format!(
                "covariance not PSD (min eigenvalue {eigmin:.3e})"
            )));
        }
        Ok(GaussianMeasure { mean, cov })
    }

    /// Dirac mass at `x` (zero covariance).
    pub fn dirac(x: DVector<f64>) -> Self {
        let n = x.len();
        GaussianMeasure {
            mean: x,
            cov: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Draws `count` samples as columns of a dim x count matrix, via the
    /// eigenvalue square root of the covariance (valid for degenerate cov).
    pub fn sample<R: Rng>(&self, count: usize, rng: &mut R) -> DMatrix<f64> {
        let n = self.dim();
        let root = sqrtm_psd(&self.cov).expect("stored covariance is symmetric PSD");
        let mut out = DMatrix::zeros(n, count);
        for t in 0..count {
            let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
            out.set_column(t, &(&self.mean + &root * z));
        }
        out
    }
}

/// Symmetric PSD square root via eigendecomposition, clamping eigenvalues at
/// zero. Requires eigmin >= -1e-8.
pub fn sqrtm_psd(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if s.nrows() != s.ncols() {
        return Err(Error::InvalidInput("sqrtm_psd needs a square matrix".into()));
    }
    if linalg::asymmetry(s) > 1e-8 * (1.0 + linalg::max_abs(s)) {
        return Err(Error::InvalidInput("sqrtm_psd input not symmetric".into()));
    }
    let (vals, vecs) = linalg::sym_eigen_sorted(&linalg::symmetrize(s));
    if vals[0] < -1e-8 * (1.0 + linalg::max_abs(s)) {
        return Err(Error::InvalidInput(format!(
            "sqrtm_psd input not PSD (min eigenvalue {:.3e})",
            vals[0]
        )));
    }
    let sqrt_vals = vals.map(|l| l.max(0.0).sqrt());
    let root = &vecs * DMatrix::from_diagonal(&sqrt_vals) * vecs.transpose();
    Ok(linalg::symmetrize(&root))
}

/// Closed-form 2-Wasserstein distance between Gaussian measures:
/// W2^2 = |m1 - m2|^2 + Tr(S1 + S2 - 2 (S2^{1/2} S1 S2^{1/2})^{1/2}),
/// with the trace term clamped at zero against round-off.
pub fn w2(mu1: &GaussianMeasure, mu2: &GaussianMeasure) -> Result<f64> {
    if mu1.dim() != mu2.dim() {
        return Err(Error::DimensionMismatch(format!(
            "w2 between dims {} and {}",
            mu1.dim(),
            mu2.dim()
        )));
    }
    let dm = mu1.mean() - mu2.mean();
    let mean_term = dm.norm_squared();

    let root2 = sqrtm_psd(mu2.cov())?;
    let inner = &root2 * mu1.cov() * &root2;
    let cross = sqrtm_psd(&inner)?;
    let trace_term = (mu1.cov().trace() + mu2.cov().trace() - 2.0 * cross.trace()).max(0.0);

    Ok((mean_term + trace_term).sqrt())
}

/// Linear pushforward of a Gaussian: x ~ N(m, S) maps to F x ~ N(Fm, FSF^T).
/// `f` may be rectangular (output dim = rows of `f`).
pub fn pushforward(f: &DMatrix<f64>, mu: &GaussianMeasure) -> Result<GaussianMeasure> {
    if f.ncols() != mu.dim() {
        return Err(Error::DimensionMismatch(format!(
            "filter is {}x{} but measure has dim {}",
            f.nrows(),
            f.ncols(),
            mu.dim()
        )));
    }
    let mean = f * mu.mean();
    let cov = linalg::symmetrize(&(f * mu.cov() * f.transpose()));
    GaussianMeasure::new(mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::empirical_w2_oracle;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_gaussian(n: usize, rng: &mut ChaCha8Rng) -> GaussianMeasure {
        let mean = DVector::from_iterator(n, (0..n).map(|_| rng.random_range(-2.0..2.0)));
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let cov = &m * m.transpose();
        GaussianMeasure::new(mean, cov).unwrap()
    }

    #[test]
    fn sqrtm_identity_and_diagonal() {
        let i3 = DMatrix::identity(3, 3);
        assert!(linalg::max_abs(&(&sqrtm_psd(&i3).unwrap() - &i3)) < 1e-14);

        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let r = sqrtm_psd(&d).unwrap();
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        assert!(linalg::max_abs(&(&r - &expect)) < 1e-12);
    }

    #[test]
    fn sqrtm_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = DMatrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
        let s = m.transpose() * &m;
        let r = sqrtm_psd(&s).unwrap();
        let err = linalg::max_abs(&(&r * &r - &s));
        assert!(err <= 1e-8 * (1.0 + linalg::max_abs(&s)), "err = {err:.3e}");
        assert!(linalg::asymmetry(&r) == 0.0);
        assert!(linalg::min_eigenvalue(&r) > -1e-10);
    }

    #[test]
    fn sqrtm_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(sqrtm_psd(&m).is_err());
    }

    #[test]
    fn w2_identical_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mu = random_gaussian(4, &mut rng);
        assert!(w2(&mu, &mu).unwrap() < 1e-10);
    }

    #[test]
    fn w2_between_diracs_is_euclidean() {
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let y = DVector::from_vec(vec![0.0, 1.0, 2.5]);
        let d = w2(&GaussianMeasure::dirac(x.clone()), &GaussianMeasure::dirac(y.clone())).unwrap();
        assert!((d - (x - y).norm()).abs() < 1e-12);
    }

    #[test]
    fn w2_scalar_case() {
        // N(0,1) vs N(0,4): distance |sigma1 - sigma2| = 1.
        let a = GaussianMeasure::new(DVector::zeros(1), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let b = GaussianMeasure::new(DVector::zeros(1), DMatrix::from_element(1, 1, 4.0)).unwrap();
        assert!((w2(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn w2_dimension_mismatch() {
        let a = GaussianMeasure::dirac(DVector::zeros(2));
        let b = GaussianMeasure::dirac(DVector::zeros(3));
        assert!(w2(&a, &b).is_err());
    }

    #[test]
    fn w2_matches_sampling_oracle_2d_anisotropic() {
        let a = GaussianMeasure::new(
            DVector::from_vec(vec![0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.8, 0.8, 0.5]),
        )
        .unwrap();
        let b = GaussianMeasure::new(
            DVector::from_vec(vec![3.0, -1.0]),
            DMatrix::from_row_slice(2, 2, &[0.6, -0.2, -0.2, 1.5]),
        )
        .unwrap();
        let closed = w2(&a, &b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let xs = a.sample(2000, &mut rng);
        let ys = b.sample(2000, &mut rng);
        let emp = empirical_w2_oracle(&xs, &ys, 0.0).unwrap();
        let rel = (closed - emp).abs() / closed;
        assert!(rel < 0.05, "closed {closed:.4} vs empirical {emp:.4} (rel {rel:.4})");
    }

    #[test]
    fn pushforward_identity_and_dirac() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mu = random_gaussian(3, &mut rng);
        let id = DMatrix::identity(3, 3);
        let out = pushforward(&id, &mu).unwrap();
        assert!(linalg::max_abs(&(out.cov() - mu.cov())) < 1e-14);
        assert!((out.mean() - mu.mean()).amax() < 1e-14);

        let f = DMatrix::from_fn(3, 3, |i, j| (i + 2 * j) as f64 * 0.1);
        let x = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let pushed = pushforward(&f, &GaussianMeasure::dirac(x.clone())).unwrap();
        assert!((pushed.mean() - &f * x).amax() < 1e-14);
        assert!(linalg::max_abs(pushed.cov()) == 0.0);
    }

    #[test]
    fn pushforward_monte_carlo() {
        // Empirical mean/cov of pushed samples vs closed form, within 3 SEs.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mu = random_gaussian(3, &mut rng);
        let f = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let out = pushforward(&f, &mu).unwrap();

        let n = 100_000usize;
        let samples = mu.sample(n, &mut rng);
        let pushed = &f * samples;
        let emp_mean = pushed.column_mean();
        let centered = {
            let mut c = pushed.clone();
            for mut col in c.column_iter_mut() {
                col -= &emp_mean;
            }
            c
        };
        let emp_cov = &centered * centered.transpose() / (n as f64 - 1.0);

        for i in 0..3 {
            let se = (out.cov()[(i, i)] / n as f64).sqrt();
            assert!((emp_mean[i] - out.mean()[i]).abs() <= 3.0 * se);
            for j in 0..3 {
                let var_ij =
                    out.cov()[(i, i)] * out.cov()[(j, j)] + out.cov()[(i, j)].powi(2);
                let se_cov = (var_ij / n as f64).sqrt();
                assert!((emp_cov[(i, j)] - out.cov()[(i, j)]).abs() <= 3.0 * se_cov);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn w2_is_symmetric_and_triangular(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_gaussian(3, &mut rng);
            let b = random_gaussian(3, &mut rng);
            let c = random_gaussian(3, &mut rng);
            let ab = w2(&a, &b).unwrap();
            let ba = w2(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-10);
            let ac = w2(&a, &c).unwrap();
            let cb = w2(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-8);
        }

        #[test]
        fn pushforward_composes(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mu = random_gaussian(4, &mut rng);
            let f1 = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
            let f2 = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
            let two_step = pushforward(&f2, &pushforward(&f1, &mu).unwrap()).unwrap();
            let one_step = pushforward(&(&f2 * &f1), &mu).unwrap();
            prop_assert!((two_step.mean() - one_step.mean()).amax() < 1e-10);
            prop_assert!(linalg::max_abs(&(two_step.cov() - one_step.cov())) < 1e-10);
        }

        #[test]
        fn w2_invariant_under_orthogonal_maps(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_gaussian(3, &mut rng);
            let b = random_gaussian(3, &mut rng);
            // Orthogonal factor from the eigenbasis of a random symmetric matrix.
            let m = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            let (_, q) = linalg::sym_eigen_sorted(&linalg::symmetrize(&m));
            let da = w2(&a, &b).unwrap();
            let db = w2(&pushforward(&q, &a).unwrap(), &pushforward(&q, &b).unwrap()).unwrap();
            prop_assert!((da - db).abs() < 1e-8);
        }
    }
}
