//! Copula-based graph filter learning: minimize the squared Bures-Wasserstein
//! distance between the filtered joint Gaussian and a target Gaussian, by
//! alternating gradient steps on the Chebyshev coefficients and the copula
//! correlation matrix, with a correlation projection after every step.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::copula::{project_correlation, CorrelationMatrix, Marginals};
use crate::error::{Error, Result};
use crate::graph::{cheb_basis, ChebFilter, SpectralDecomp};
use crate::linalg;

/// Eigenvalue floor inside the derivative of the matrix square root.
const SQRT_DERIV_FLOOR: f64 = 1e-12;

/// Learning problem: spectral context, node marginals, and target moments.
/// The target covariance is floored to eigmin >= 1e-8 on construction so the
/// matrix-square-root term stays differentiable.
#[derive(Debug, Clone)]
pub struct GdsCopProblem {
    sd: SpectralDecomp,
    marg: Marginals,
    target_mean: DVector<f64>,
    target_cov: DMatrix<f64>,
    basis: [DMatrix<f64>; 3],
    target_sqrt: DMatrix<f64>,
}

impl GdsCopProblem {
    pub fn new(
        sd: SpectralDecomp,
        marg: Marginals,
        target_mean: DVector<f64>,
        target_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let n = sd.n();
        if marg.n() != n
            || target_mean.len() != n
            || target_cov.nrows() != n
            || target_cov.ncols() != n
        {
            return Err(Error::DimensionMismatch(format!(
                "graph size {n}, {} marginals, target mean {}, target cov {}x{}",
                marg.n(),
                target_mean.len(),
                target_cov.nrows(),
                target_cov.ncols()
            )));
        }
        if target_mean.iter().any(|x| !x.is_finite()) || target_cov.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite target statistics".into()));
        }
        if linalg::asymmetry(&target_cov) > 1e-8 * (1.0 + linalg::max_abs(&target_cov)) {
            return Err(Error::InvalidInput("target covariance not symmetric".into()));
        }
        let mut target_cov = linalg::symmetrize(&target_cov);
        let eigmin = linalg::min_eigenvalue(&target_cov);
        if eigmin < -1e-6 * (1.0 + linalg::max_abs(&target_cov)) {
            return Err(Error::InvalidInput(format!(
                "target covariance has eigenvalue {eigmin:.3e}"
            )));
        }
        if eigmin < 1e-8 {
            for i in 0..n {
                target_cov[(i, i)] += 1e-8 - eigmin;
            }
        }
        let basis = cheb_basis(&sd);
        let target_sqrt = crate::gauss::sqrtm_psd(&target_cov)?;
        Ok(GdsCopProblem {
            sd,
            marg,
            target_mean,
            target_cov,
            basis,
            target_sqrt,
        })
    }

    pub fn n(&self) -> usize {
        self.sd.n()
    }

    pub fn sd(&self) -> &SpectralDecomp {
        &self.sd
    }

    pub fn marginals(&self) -> &Marginals {
        &self.marg
    }

    pub fn target_mean(&self) -> &DVector<f64> {
        &self.target_mean
    }

    /// Target covariance after the eigenvalue floor.
    pub fn target_cov(&self) -> &DMatrix<f64> {
        &self.target_cov
    }

    fn filter(&self, theta: &[f64; 3]) -> DMatrix<f64> {
        let m = theta[0] * &self.basis[0] + theta[1] * &self.basis[1] + theta[2] * &self.basis[2];
        linalg::symmetrize(&m)
    }

    fn model_cov(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.marg.scale_matrix();
        &d * r * &d
    }

    /// Objective on raw inputs (no symmetry validation); the finite-difference
    /// oracles perturb single entries.
    fn objective_raw(&self, theta: &[f64; 3], r: &DMatrix<f64>) -> f64 {
        let f = self.filter(theta);
        let sigma = self.model_cov(r);
        let fm = &f * self.marg.means();
        let mean_term = (&fm - &self.target_mean).norm_squared();

        let pushed = &f * &sigma * f.transpose();
        let a = &self.target_sqrt * &pushed * &self.target_sqrt;
        let (vals, _) = linalg::sym_eigen_sorted(&linalg::symmetrize(&a));
        let cross_trace: f64 = vals.iter().map(|l| l.max(0.0).sqrt()).sum();
        let trace_term = (pushed.trace() + self.target_cov.trace() - 2.0 * cross_trace).max(0.0);

        mean_term + trace_term
    }
}

/// Gradient evaluation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradMode {
    /// Chain rule through the eigendecomposition of the square-root term.
    Analytic,
    /// Central finite differences of the objective (slow; oracle/fallback).
    FiniteDifference,
}

/// Step sizes, tolerances, and iteration caps for [`learn_gds_cop`].
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LearnSettings {
    /// Step size for the filter coefficients.
    pub eta1: f64,
    /// Step size for the correlation matrix.
    pub eta2: f64,
    /// Convergence tolerance on |loss(u) - loss(u-1)|.
    pub epsilon: f64,
    /// Eigenvalue clamp in the correlation projection.
    pub delta: f64,
    pub max_iters: usize,
    /// Reserved for randomized initialization; the default initialization
    /// (identity filter, independence copula) ignores it.
    pub seed: u64,
    pub grad_mode: GradMode,
}

impl Default for LearnSettings {
    fn default() -> Self {
        LearnSettings {
            eta1: 1e-3,
            eta2: 1e-3,
            epsilon: 1e-8,
            delta: 1e-6,
            max_iters: 5000,
            seed: 0,
            grad_mode: GradMode::Analytic,
        }
    }
}

impl LearnSettings {
    fn validate(&self) -> Result<()> {
        if !(self.eta1 >= 0.0 && self.eta2 >= 0.0) {
            return Err(Error::InvalidInput("step sizes must be nonnegative".into()));
        }
        if self.epsilon <= 0.0 || self.delta <= 0.0 {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Optimization record: per-iteration losses and the final iterate.
#[derive(Debug, Clone)]
pub struct LearnTrace {
    pub loss_history: Vec<f64>,
    pub final_theta: ChebFilter,
    pub final_r: CorrelationMatrix,
    pub iterations: usize,
    pub converged: bool,
}

/// Rows "iter,loss" for external plotting.
pub fn export_trace_csv(trace: &LearnTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("iter,loss\n");
    for (i, loss) in trace.loss_history.iter().enumerate() {
        out.push_str(&format!("{i},{loss}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Squared Bures-Wasserstein distance between the filtered model Gaussian and
/// the target: |Fm - m*|^2 + Tr(FSF^T + S* - 2 (S*^{1/2} FSF^T S*^{1/2})^{1/2})
/// with S = D R D.
pub fn bures_objective(p: &GdsCopProblem, theta: &ChebFilter, r: &CorrelationMatrix) -> Result<f64> {
    if r.n() != p.n() {
        return Err(Error::DimensionMismatch(format!(
            "correlation {}x{} vs graph size {}",
            r.n(),
            r.n(),
            p.n()
        )));
    }
    Ok(p.objective_raw(&theta.coeffs, r.matrix()))
}

/// A^{-1/2} via eigendecomposition with a floor on the eigenvalues.
fn inv_sqrt_floor(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = linalg::sym_eigen_sorted(&linalg::symmetrize(a));
    let inv = vals.map(|l| 1.0 / l.max(SQRT_DERIV_FLOOR).sqrt());
    linalg::symmetrize(&(&vecs * DMatrix::from_diagonal(&inv) * vecs.transpose()))
}

/// Gradient of the objective with respect to the dense filter F, shared by
/// both parameter gradients:
/// dL/dF = 2 (Fm - m*) m^T + 2 F S - 2 B A^{-1/2} B F S, with B = S*^{1/2}
/// and A = B F S F^T B.
fn grad_filter(
    p: &GdsCopProblem,
    theta: &[f64; 3],
    r: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let f = p.filter(theta);
    let sigma = p.model_cov(r);
    let b = &p.target_sqrt;

    let fm = &f * p.marg.means();
    let residual = &fm - &p.target_mean;
    let fs = &f * &sigma;
    let a = b * &fs * f.transpose() * b;
    let a_inv_sqrt = inv_sqrt_floor(&a);
    let correction = b * &a_inv_sqrt * b;

    let grad =
        2.0 * &residual * p.marg.means().transpose() + 2.0 * &fs - 2.0 * &correction * &fs;
    (grad, f, sigma)
}

/// Gradient with respect to the three filter coefficients.
pub fn grad_theta(
    p: &GdsCopProblem,
    theta: &ChebFilter,
    r: &CorrelationMatrix,
) -> Result<[f64; 3]> {
    grad_theta_raw(p, &theta.coeffs, r.matrix(), GradMode::Analytic)
}

/// Gradient with respect to the correlation matrix (free-matrix gradient; the
/// projection handles the constraint set).
pub fn grad_r(
    p: &GdsCopProblem,
    theta: &ChebFilter,
    r: &CorrelationMatrix,
) -> Result<DMatrix<f64>> {
    grad_r_raw(p, &theta.coeffs, r.matrix(), GradMode::Analytic)
}

fn grad_theta_raw(
    p: &GdsCopProblem,
    theta: &[f64; 3],
    r: &DMatrix<f64>,
    mode: GradMode,
) -> Result<[f64; 3]> {
    let g = match mode {
        GradMode::Analytic => {
            let (gf, _, _) = grad_filter(p, theta, r);
            [
                linalg::frob_inner(&gf, &p.basis[0]),
                linalg::frob_inner(&gf, &p.basis[1]),
                linalg::frob_inner(&gf, &p.basis[2]),
            ]
        }
        GradMode::FiniteDifference => {
            let mut g = [0.0f64; 3];
            for k in 0..3 {
                let h = 1e-5 * (1.0 + theta[k].abs());
                let mut plus = *theta;
                plus[k] += h;
                let mut minus = *theta;
                minus[k] -= h;
                g[k] = (p.objective_raw(&plus, r) - p.objective_raw(&minus, r)) / (2.0 * h);
            }
            g
        }
    };
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite filter-coefficient gradient".into()));
    }
    Ok(g)
}

fn grad_r_raw(
    p: &GdsCopProblem,
    theta: &[f64; 3],
    r: &DMatrix<f64>,
    mode: GradMode,
) -> Result<DMatrix<f64>> {
    let g = match mode {
        GradMode::Analytic => {
            let (_, f, sigma) = grad_filter(p, theta, r);
            let b = &p.target_sqrt;
            let a = b * &f * &sigma * f.transpose() * b;
            let a_inv_sqrt = inv_sqrt_floor(&a);
            // dL/dS = F^T F - F^T B A^{-1/2} B F, then dL/dR = D (dL/dS) D.
            let ds = f.transpose() * &f - f.transpose() * b * &a_inv_sqrt * b * &f;
            let d = p.marg.scale_matrix();
            &d * ds * &d
        }
        GradMode::FiniteDifference => {
            let n = p.n();
            let mut g = DMatrix::zeros(n, n);
            let mut work = r.clone();
            for i in 0..n {
                for j in 0..n {
                    let h = 1e-5 * (1.0 + r[(i, j)].abs());
                    let orig = work[(i, j)];
                    work[(i, j)] = orig + h;
                    let plus = p.objective_raw(theta, &work);
                    work[(i, j)] = orig - h;
                    let minus = p.objective_raw(theta, &work);
                    work[(i, j)] = orig;
                    g[(i, j)] = (plus - minus) / (2.0 * h);
                }
            }
            g
        }
    };
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite correlation gradient".into()));
    }
    Ok(g)
}

/// Alternating minimization: evaluate the loss, step the filter coefficients,
/// step the correlation at the same iterate, project the correlation, repeat
/// until |loss(u) - loss(u-1)| <= epsilon or the iteration cap. Starts from
/// the identity filter and the independence copula; deterministic.
pub fn learn_gds_cop(p: &GdsCopProblem, s: &LearnSettings) -> Result<LearnTrace> {
    s.validate()?;
    let mut theta = [1.0f64, 0.0, 0.0];
    let mut r = CorrelationMatrix::identity(p.n());
    let mut loss_history: Vec<f64> = Vec::new();
    let mut converged = false;

    for u in 0..s.max_iters {
        let loss = p.objective_raw(&theta, r.matrix());
        if !loss.is_finite() || loss > 1e12 {
            let last = loss_history.last().copied().unwrap_or(f64::NAN);
            return Err(Error::Numerical(format!(
                "diverged at iteration {u}: loss {loss:.3e} (last finite loss {last:.6e})"
            )));
        }
        loss_history.push(loss);
        if u >= 1 && (loss_history[u] - loss_history[u - 1]).abs() <= s.epsilon {
            converged = true;
            break;
        }

        let g_theta = grad_theta_raw(p, &theta, r.matrix(), s.grad_mode)?;
        let g_r = grad_r_raw(p, &theta, r.matrix(), s.grad_mode)?;
        for k in 0..3 {
            theta[k] -= s.eta1 * g_theta[k];
        }
        let stepped = r.matrix() - s.eta2 * g_r;
        r = project_correlation(&stepped, s.delta)?;
    }

    Ok(LearnTrace {
        iterations: loss_history.len(),
        loss_history,
        final_theta: ChebFilter::new(theta)?,
        final_r: r,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::assemble_joint;
    use crate::gauss::{pushforward, w2, GaussianMeasure};
    use crate::graph::{build_laplacian, materialize_filter, Graph};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ring_decomp(n: usize) -> SpectralDecomp {
        let mut edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        if n > 2 {
            edges.push((0, n - 1));
        }
        build_laplacian(&Graph::from_edge_list(n, &edges).unwrap()).unwrap()
    }

    fn random_problem(n: usize, seed: u64) -> (GdsCopProblem, [f64; 3], CorrelationMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = ring_decomp(n);
        let means = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let stds = DVector::from_fn(n, |_, _| rng.random_range(0.5..1.5));
        let marg = Marginals::new(means, stds).unwrap();
        // Mild dependence keeps the model covariance well away from the
        // projection clamp, where finite differences of the square root
        // lose accuracy.
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.2..0.2));
        let r = project_correlation(&(DMatrix::identity(n, n) + m), 1e-6).unwrap();
        let tm = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let w = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.6..0.6));
        let tc = &w * w.transpose() + DMatrix::identity(n, n) * 0.5;
        // Filter response bounded away from zero on [-1, 1], so the
        // square-root term stays differentiable at the test point.
        let theta = [
            rng.random_range(0.7..1.3),
            rng.random_range(-0.25..0.25),
            rng.random_range(-0.25..0.25),
        ];
        (GdsCopProblem::new(sd, marg, tm, tc).unwrap(), theta, r)
    }

    #[test]
    fn objective_zero_at_perfect_match() {
        let n = 5;
        let sd = ring_decomp(n);
        let marg = Marginals::new(
            DVector::from_element(n, 1.0),
            DVector::from_element(n, 1.0),
        )
        .unwrap();
        let r = CorrelationMatrix::identity(n);
        let joint = assemble_joint(&marg, &r).unwrap();
        let p = GdsCopProblem::new(sd, marg, joint.mean().clone(), joint.cov().clone()).unwrap();
        let loss = bures_objective(&p, &ChebFilter::identity(), &r).unwrap();
        assert!(loss.abs() < 1e-10, "loss = {loss:.3e}");
    }

    #[test]
    fn objective_reduces_to_least_squares_for_diracs() {
        // Near-Dirac marginals and a zero target covariance: the trace term
        // collapses and the objective is the classical residual |Fm - m*|^2.
        let n = 4;
        let sd = ring_decomp(n);
        let means = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let floor = crate::copula::sigma_floor(&means);
        let marg = Marginals::new(means.clone(), DVector::from_element(n, floor)).unwrap();
        let p = GdsCopProblem::new(
            sd.clone(),
            marg,
            DVector::from_vec(vec![0.5, 1.0, -1.0, 2.0]),
            DMatrix::zeros(n, n),
        )
        .unwrap();
        let theta = ChebFilter::new([0.7, -0.2, 0.1]).unwrap();
        let loss = bures_objective(&p, &theta, &CorrelationMatrix::identity(n)).unwrap();
        let f = materialize_filter(&sd, &theta);
        let expect = (&f * &means - p.target_mean()).norm_squared();
        assert!((loss - expect).abs() < 1e-5, "loss {loss} vs {expect}");
    }

    #[test]
    fn objective_matches_w2_squared() {
        for seed in 0..10u64 {
            let (p, theta, r) = random_problem(5, seed);
            let loss = p.objective_raw(&theta, r.matrix());
            let f = materialize_filter(p.sd(), &ChebFilter::new(theta).unwrap());
            let model = assemble_joint(p.marginals(), &r).unwrap();
            let pushed = pushforward(&f, &model).unwrap();
            let target =
                GaussianMeasure::new(p.target_mean().clone(), p.target_cov().clone()).unwrap();
            let d = w2(&pushed, &target).unwrap();
            assert!(
                (loss - d * d).abs() <= 1e-8 * (1.0 + d * d),
                "seed {seed}: loss {loss} vs w2^2 {}",
                d * d
            );
        }
    }

    #[test]
    fn gradient_vanishes_at_global_minimum() {
        let n = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let sd = ring_decomp(n);
        let means = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let stds = DVector::from_fn(n, |_, _| rng.random_range(0.5..1.5));
        let marg = Marginals::new(means, stds).unwrap();
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.4..0.4));
        let r = project_correlation(&(DMatrix::identity(n, n) + m), 1e-6).unwrap();
        let theta = ChebFilter::new([0.8, 0.3, -0.2]).unwrap();
        // target = exact pushforward of the current model
        let f = materialize_filter(&sd, &theta);
        let model = assemble_joint(&marg, &r).unwrap();
        let pushed = pushforward(&f, &model).unwrap();
        let p = GdsCopProblem::new(sd, marg, pushed.mean().clone(), pushed.cov().clone()).unwrap();
        let gt = grad_theta(&p, &theta, &r).unwrap();
        let gr = grad_r(&p, &theta, &r).unwrap();
        let gt_norm = gt.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(gt_norm <= 1e-6, "grad_theta norm {gt_norm:.3e}");
        assert!(
            linalg::max_abs(&gr) <= 1e-6,
            "grad_r max {:.3e}",
            linalg::max_abs(&gr)
        );
    }

    #[test]
    fn scalar_problem_matches_hand_gradient() {
        // Single node: F = theta_0 (other basis terms left at zero), so
        // L = (theta0 m - m*)^2 + (theta0 s - s*)^2 and
        // dL/dtheta0 = 2m(theta0 m - m*) + 2s(theta0 s - s*).
        let g = Graph::new(DMatrix::zeros(1, 1)).unwrap();
        let sd = build_laplacian(&g).unwrap();
        let (m, s, m_star, s_star) = (2.0, 0.7, 1.3, 0.9);
        let marg =
            Marginals::new(DVector::from_element(1, m), DVector::from_element(1, s)).unwrap();
        let p = GdsCopProblem::new(
            sd,
            marg,
            DVector::from_element(1, m_star),
            DMatrix::from_element(1, 1, s_star * s_star),
        )
        .unwrap();
        let theta0 = 0.6;
        let theta = ChebFilter::new([theta0, 0.0, 0.0]).unwrap();
        let g = grad_theta(&p, &theta, &CorrelationMatrix::identity(1)).unwrap();
        let hand = 2.0 * m * (theta0 * m - m_star) + 2.0 * s * (theta0 * s - s_star);
        assert!((g[0] - hand).abs() < 1e-6, "{} vs {hand}", g[0]);
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        for seed in 0..8u64 {
            let (p, theta, r) = random_problem(5, seed + 100);
            let ga = grad_theta_raw(&p, &theta, r.matrix(), GradMode::Analytic).unwrap();
            let gf = grad_theta_raw(&p, &theta, r.matrix(), GradMode::FiniteDifference).unwrap();
            let scale = gf.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-10);
            for k in 0..3 {
                assert!(
                    (ga[k] - gf[k]).abs() / scale <= 1e-4,
                    "seed {seed} theta[{k}]: {} vs {}",
                    ga[k],
                    gf[k]
                );
            }

            let ga = grad_r_raw(&p, &theta, r.matrix(), GradMode::Analytic).unwrap();
            let gf = grad_r_raw(&p, &theta, r.matrix(), GradMode::FiniteDifference).unwrap();
            let scale = linalg::max_abs(&gf).max(1e-10);
            let err = linalg::max_abs(&(&ga - &gf)) / scale;
            assert!(err <= 1e-4, "seed {seed}: grad_r rel err {err:.3e}");
        }
    }

    #[test]
    fn synthetic_recovery_drives_loss_down() {
        let n = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sd = ring_decomp(n);
        let means = DVector::from_fn(n, |_, _| rng.random_range(0.5..1.5));
        let stds = DVector::from_fn(n, |_, _| rng.random_range(0.6..1.2));
        let marg = Marginals::new(means, stds).unwrap();
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.3..0.3));
        let r_true = project_correlation(&(DMatrix::identity(n, n) + m), 1e-6).unwrap();
        let theta_true = ChebFilter::new([0.6, 0.25, 0.1]).unwrap();
        let f_true = materialize_filter(&sd, &theta_true);
        let joint = assemble_joint(&marg, &r_true).unwrap();
        let target = pushforward(&f_true, &joint).unwrap();
        let p = GdsCopProblem::new(sd, marg, target.mean().clone(), target.cov().clone()).unwrap();

        let settings = LearnSettings {
            eta1: 1e-2,
            eta2: 1e-2,
            epsilon: 1e-14,
            max_iters: 12_000,
            ..LearnSettings::default()
        };
        let trace = learn_gds_cop(&p, &settings).unwrap();
        let initial = trace.loss_history[0];
        let last = *trace.loss_history.last().unwrap();
        assert!(
            last <= 1e-5 * initial,
            "loss went {initial:.3e} -> {last:.3e} in {} iterations",
            trace.iterations
        );

        // Recovered pushforward statistics approach the target.
        let f_hat = materialize_filter(p.sd(), &trace.final_theta);
        let model = assemble_joint(p.marginals(), &trace.final_r).unwrap();
        let pushed = pushforward(&f_hat, &model).unwrap();
        let mean_err = (pushed.mean() - p.target_mean()).norm() / p.target_mean().norm();
        assert!(mean_err < 1e-2, "mean err {mean_err:.3e}");
    }

    #[test]
    fn already_optimal_start_converges_immediately() {
        let n = 4;
        let sd = ring_decomp(n);
        let marg = Marginals::new(
            DVector::from_element(n, 1.0),
            DVector::from_element(n, 0.8),
        )
        .unwrap();
        let joint = assemble_joint(&marg, &CorrelationMatrix::identity(n)).unwrap();
        let p = GdsCopProblem::new(sd, marg, joint.mean().clone(), joint.cov().clone()).unwrap();
        let trace = learn_gds_cop(&p, &LearnSettings::default()).unwrap();
        assert!(trace.converged);
        assert!(trace.iterations <= 2, "iterations = {}", trace.iterations);
        assert!(*trace.loss_history.last().unwrap() < 1e-10);
    }

    #[test]
    fn zero_step_sizes_freeze_the_dynamics() {
        let (p, _, _) = random_problem(4, 55);
        let settings = LearnSettings {
            eta1: 0.0,
            eta2: 0.0,
            ..LearnSettings::default()
        };
        let trace = learn_gds_cop(&p, &settings).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.iterations, 2);
        assert_eq!(trace.loss_history[0], trace.loss_history[1]);
        assert_eq!(trace.final_theta.coeffs, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn small_steps_do_not_increase_the_loss() {
        for seed in 0..5u64 {
            let (p, _, _) = random_problem(5, seed + 300);
            let settings = LearnSettings {
                eta1: 1e-4,
                eta2: 1e-4,
                epsilon: 1e-14,
                max_iters: 200,
                ..LearnSettings::default()
            };
            let trace = learn_gds_cop(&p, &settings).unwrap();
            let first = trace.loss_history[0];
            let last = *trace.loss_history.last().unwrap();
            assert!(last <= first + 1e-9, "seed {seed}: {first} -> {last}");
        }
    }

    #[test]
    fn trace_csv_export() {
        let (p, _, _) = random_problem(4, 9);
        let settings = LearnSettings {
            max_iters: 5,
            ..LearnSettings::default()
        };
        let trace = learn_gds_cop(&p, &settings).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        export_trace_csv(&trace, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iter,loss"));
        assert_eq!(lines.count(), trace.loss_history.len());
    }
}
