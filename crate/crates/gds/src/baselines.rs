//! Classical graph-filter learners used for comparison: plain least squares,
//! l1-regularized least squares, least squares with covariance matching, and
//! log-evidence maximization over a mixture of heat kernels. All share the
//! degree-2 Chebyshev parameterization except the heat-kernel mixture, which
//! has its own filter form.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::graph::{cheb_basis, ChebFilter, SpectralDecomp};
use crate::linalg;

/// Column-aligned input/target signal matrices (columns are days).
#[derive(Debug, Clone)]
pub struct PairedData {
    x: DMatrix<f64>,
    x_star: DMatrix<f64>,
}

impl PairedData {
    pub fn new(x: DMatrix<f64>, x_star: DMatrix<f64>) -> Result<Self> {
        if x.shape() != x_star.shape() {
            return Err(Error::DimensionMismatch(format!(
                "input {}x{} vs target {}x{}",
                x.nrows(),
                x.ncols(),
                x_star.nrows(),
                x_star.ncols()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidInput("paired data needs at least one column".into()));
        }
        if x.iter().chain(x_star.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite paired data".into()));
        }
        Ok(PairedData { x, x_star })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn x_star(&self) -> &DMatrix<f64> {
        &self.x_star
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn t_len(&self) -> usize {
        self.x.ncols()
    }
}

/// Gram system of the Chebyshev least-squares problem:
/// G_jk = <T_j X, T_k X>_F and b_j = <T_j X, X*>_F, so that
/// |F(theta) X - X*|_F^2 = theta^T G theta - 2 b^T theta + |X*|_F^2.
fn gram_system(sd: &SpectralDecomp, d: &PairedData) -> (Matrix3<f64>, Vector3<f64>) {
    let basis = cheb_basis(sd);
    let tx: Vec<DMatrix<f64>> = basis.iter().map(|t| t * &d.x).collect();
    let mut g = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for j in 0..3 {
        for k in 0..3 {
            g[(j, k)] = linalg::frob_inner(&tx[j], &tx[k]);
        }
        b[j] = linalg::frob_inner(&tx[j], &d.x_star);
    }
    (g, b)
}

/// Least-squares filter: solves min |F(theta) X - X*|_F^2 through the 3x3
/// normal equations, with a tiny ridge for rank-deficient Gram matrices.
pub fn gsp_ls(sd: &SpectralDecomp, d: &PairedData) -> Result<ChebFilter> {
    check_dims(sd, d)?;
    let (mut g, b) = gram_system(sd, d);
    let ridge = 1e-10 * g.trace() / 3.0;
    for k in 0..3 {
        g[(k, k)] += ridge;
    }
    let theta = g
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical("singular Gram system".into()))?;
    ChebFilter::new([theta[0], theta[1], theta[2]])
}

fn check_dims(sd: &SpectralDecomp, d: &PairedData) -> Result<()> {
    if d.n() != sd.n() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} rows but graph has {} nodes",
            d.n(),
            sd.n()
        )));
    }
    Ok(())
}

/// Data-driven default for the l1 weight: a tenth of the sup-norm of the
/// least-squares gradient at theta = 0.
pub fn default_rls_lambda(sd: &SpectralDecomp, d: &PairedData) -> f64 {
    match check_dims(sd, d) {
        Ok(()) => {
            let (_, b) = gram_system(sd, d);
            0.1 * (2.0 * b.amax())
        }
        Err(_) => 0.1,
    }
}

/// l1-regularized least squares via proximal gradient (soft thresholding) on
/// the coefficients, step 1/(2 lambda_max(G)), until the parameter change
/// drops below 1e-10 or 10^4 iterations.
pub fn gsp_rls(sd: &SpectralDecomp, d: &PairedData, lambda: f64) -> Result<ChebFilter> {
    check_dims(sd, d)?;
    if lambda < 0.0 {
        return Err(Error::InvalidInput("lambda must be nonnegative".into()));
    }
    let (g, b) = gram_system(sd, d);
    let gmax = g
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, &x| a.max(x));
    if gmax <= 0.0 {
        // X = 0: every coefficient is irrelevant, shrink to zero.
        return ChebFilter::new([0.0; 3]);
    }
    let step = 1.0 / (2.0 * gmax);
    let soft = |x: f64, t: f64| x.signum() * (x.abs() - t).max(0.0);

    let mut theta = Vector3::zeros();
    for _ in 0..10_000 {
        let grad = 2.0 * (g * theta - b);
        let mut next = Vector3::zeros();
        for k in 0..3 {
            next[k] = soft(theta[k] - step * grad[k], step * lambda);
        }
        let delta = (next - theta).amax();
        theta = next;
        if delta <= 1e-10 {
            break;
        }
    }
    ChebFilter::new([theta[0], theta[1], theta[2]])
}

/// Column-sample covariance with 1/(T-1) normalization and a 1e-8 diagonal
/// jitter.
fn column_covariance(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let t = x.ncols();
    if t < 2 {
        return Err(Error::InvalidInput("covariance needs >= 2 columns".into()));
    }
    let mean = x.column_mean();
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let mut cov = &centered * centered.transpose() / (t as f64 - 1.0);
    for i in 0..cov.nrows() {
        cov[(i, i)] += 1e-8;
    }
    Ok(linalg::symmetrize(&cov))
}

fn lscm_objective(
    basis: &[DMatrix<f64>; 3],
    d: &PairedData,
    cov_x: &DMatrix<f64>,
    cov_star: &DMatrix<f64>,
    lambda: f64,
    theta: &Vector3<f64>,
) -> f64 {
    let f = theta[0] * &basis[0] + theta[1] * &basis[1] + theta[2] * &basis[2];
    let fit = linalg::frob_sq(&(&f * &d.x - &d.x_star));
    let m = &f * cov_x * f.transpose() - cov_star;
    fit + lambda * linalg::frob_sq(&m)
}

/// Least squares plus covariance matching:
/// min |F X - X*|_F^2 + lambda |F Sx F^T - Sx*|_F^2, by gradient descent with
/// a fixed 1e-3 step, up to 10^4 iterations or |delta loss| <= 1e-10.
pub fn gsp_lscm(sd: &SpectralDecomp, d: &PairedData, lambda: f64) -> Result<ChebFilter> {
    check_dims(sd, d)?;
    if lambda < 0.0 {
        return Err(Error::InvalidInput("lambda must be nonnegative".into()));
    }
    let cov_x = column_covariance(&d.x)?;
    let cov_star = column_covariance(&d.x_star)?;
    let basis = cheb_basis(sd);
    let (g, b) = gram_system(sd, d);

    let mut theta = Vector3::zeros();
    let mut prev_loss = lscm_objective(&basis, d, &cov_x, &cov_star, lambda, &theta);
    for _ in 0..10_000 {
        let f = theta[0] * &basis[0] + theta[1] * &basis[1] + theta[2] * &basis[2];
        let m = &f * &cov_x * f.transpose() - &cov_star;
        let fit_grad = 2.0 * (g * theta - b);
        // d/dtheta_k of |M|_F^2 is 4 lambda Tr(M F Sx T_k); every factor is
        // symmetric so the two chain-rule terms coincide.
        let mfs = &m * &f * &cov_x;
        let mut grad = fit_grad;
        for k in 0..3 {
            grad[k] += 4.0 * lambda * linalg::frob_inner(&mfs, &basis[k]);
        }
        theta -= 1e-3 * grad;
        let loss = lscm_objective(&basis, d, &cov_x, &cov_star, lambda, &theta);
        if !loss.is_finite() {
            return Err(Error::Numerical("covariance-matching descent diverged".into()));
        }
        if (loss - prev_loss).abs() <= 1e-10 {
            break;
        }
        prev_loss = loss;
    }
    ChebFilter::new([theta[0], theta[1], theta[2]])
}

/// Heat-kernel mixture filter with learned weights and noise precisions.
#[derive(Debug, Clone)]
pub struct LevModel {
    pub taus: Vec<f64>,
    /// Mixture weights over `taus` (nonnegative, summing to one).
    pub weights: Vec<f64>,
    pub alpha: f64,
    pub gamma: f64,
    /// Materialized filter H = sum_tau pi_tau e^{-tau L}.
    pub filter: DMatrix<f64>,
    pub log_evidence: f64,
}

/// Evidence maximization for a convex combination of heat kernels:
/// maximize sum_t log N(x*_t | H x_t, C) with C = alpha^{-1} I
/// + gamma^{-1} X X^T, jointly over the mixture weights (softmax
/// reparameterization) and the precisions (log-space), by gradient ascent
/// with step 1e-2 until |delta log-evidence| <= 1e-9 or 5*10^3 iterations.
pub fn gsp_lev(sd: &SpectralDecomp, d: &PairedData, taus: &[f64]) -> Result<LevModel> {
    check_dims(sd, d)?;
    if taus.is_empty() {
        return Err(Error::InvalidInput("need at least one diffusion scale".into()));
    }
    if taus.iter().any(|&t| t < 0.0 || !t.is_finite()) {
        return Err(Error::InvalidInput("diffusion scales must be nonnegative".into()));
    }
    let n = sd.n();
    let t_len = d.t_len() as f64;
    let kernels: Vec<DMatrix<f64>> = taus.iter().map(|&tau| sd.heat_kernel(tau)).collect();
    let xxt = linalg::symmetrize(&(&d.x * d.x.transpose()));

    const PRECISION_FLOOR: f64 = 1e-8;
    // Realizable data sends the precisions to infinity (the residual is
    // exactly zero); a ceiling keeps the evidence covariance invertible.
    const PRECISION_CEIL: f64 = 1e12;
    let min_log = PRECISION_FLOOR.ln();
    let max_log = PRECISION_CEIL.ln();
    let k = taus.len();
    let mut logits = vec![0.0f64; k];
    let mut log_alpha = 0.0f64;
    let mut log_gamma = 0.0f64;

    let softmax = |logits: &[f64]| {
        let mx = logits.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x));
        let mut w: Vec<f64> = logits.iter().map(|&x| (x - mx).exp()).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        w
    };

    let evaluate = |weights: &[f64], alpha: f64, gamma: f64| -> Result<(f64, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let mut h = DMatrix::zeros(n, n);
        for (w, kern) in weights.iter().zip(&kernels) {
            h += *w * kern;
        }
        let c = DMatrix::identity(n, n) / alpha + &xxt / gamma;
        let chol = c
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("evidence covariance not positive definite".into()))?;
        let logdet = 2.0 * (0..n).map(|i| chol.l()[(i, i)].ln()).sum::<f64>();
        let c_inv = chol.inverse();
        let resid = &d.x_star - &h * &d.x;
        let quad = linalg::frob_inner(&(&c_inv * &resid), &resid);
        let ll = -0.5 * quad
            - 0.5 * t_len * logdet
            - 0.5 * t_len * n as f64 * (2.0 * std::f64::consts::PI).ln();
        Ok((ll, h, c_inv, resid))
    };

    let mut weights = softmax(&logits);
    let (mut ll, mut h, mut c_inv, mut resid) =
        evaluate(&weights, log_alpha.exp(), log_gamma.exp())?;

    for _ in 0..5_000 {
        let alpha = log_alpha.exp();
        let gamma = log_gamma.exp();

        // dLL/dH = C^{-1} R X^T, lifted to the weights through each kernel.
        let dh = &c_inv * &resid * d.x.transpose();
        let gw: Vec<f64> = kernels.iter().map(|kern| linalg::frob_inner(&dh, kern)).collect();
        let avg: f64 = weights.iter().zip(&gw).map(|(w, g)| w * g).sum();
        let glogits: Vec<f64> = weights
            .iter()
            .zip(&gw)
            .map(|(w, g)| w * (g - avg))
            .collect();

        // dLL/dC = (C^{-1} S C^{-1} - T C^{-1}) / 2 with S = R R^T.
        let s = &resid * resid.transpose();
        let dc = 0.5 * (&c_inv * &s * &c_inv - t_len * &c_inv);
        let d_log_alpha = -dc.trace() / alpha;
        let d_log_gamma = -linalg::frob_inner(&dc, &xxt) / gamma;

        for (l, g) in logits.iter_mut().zip(&glogits) {
            *l += 1e-2 * g;
        }
        log_alpha = (log_alpha + 1e-2 * d_log_alpha).clamp(min_log, max_log);
        log_gamma = (log_gamma + 1e-2 * d_log_gamma).clamp(min_log, max_log);

        weights = softmax(&logits);
        let (next_ll, next_h, next_cinv, next_resid) =
            evaluate(&weights, log_alpha.exp(), log_gamma.exp())?;
        if !next_ll.is_finite() {
            return Err(Error::Numerical("evidence ascent diverged".into()));
        }
        let delta = (next_ll - ll).abs();
        ll = next_ll;
        h = next_h;
        c_inv = next_cinv;
        resid = next_resid;
        if delta <= 1e-9 {
            break;
        }
    }

    Ok(LevModel {
        taus: taus.to_vec(),
        weights,
        alpha: log_alpha.exp(),
        gamma: log_gamma.exp(),
        filter: h,
        log_evidence: ll,
    })
}

/// Applies a learned filter matrix to input signals.
pub fn predict(filter: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if filter.ncols() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "filter {}x{} applied to {}x{} signals",
            filter.nrows(),
            filter.ncols(),
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(filter * x)
}
