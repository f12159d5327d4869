//! Gaussian-copula assembly of joint measures from per-node marginals, and
//! projection onto valid correlation matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gauss::GaussianMeasure;
use crate::linalg;

/// Default eigenvalue threshold for the correlation projection.
pub const DEFAULT_DELTA: f64 = 1e-6;

/// Smallest allowed marginal standard deviation, relative to the mean scale.
/// Constant-valued nodes would otherwise produce a singular copula scaling.
pub fn sigma_floor(means: &DVector<f64>) -> f64 {
    1e-6 * (1.0 + means.amax())
}

/// Per-node Gaussian marginals: means and standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    means: DVector<f64>,
    stds: DVector<f64>,
}

impl Marginals {
    pub fn new(means: DVector<f64>, stds: DVector<f64>) -> Result<Self> {
        if means.len() != stds.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} means vs {} stds",
                means.len(),
                stds.len()
            )));
        }
        if means.iter().chain(stds.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite marginal parameters".into()));
        }
        let floor = sigma_floor(&means);
        if stds.iter().any(|&s| s < floor) {
            return Err(Error::InvalidInput(format!(
                "marginal std below the floor {floor:.3e}"
            )));
        }
        Ok(Marginals { means, stds })
    }

    /// Same as [`Marginals::new`] but silently raising stds to the floor.
    pub fn with_floor(means: DVector<f64>, stds: DVector<f64>) -> Result<Self> {
        let floor = sigma_floor(&means);
        let stds = stds.map(|s| s.max(floor));
        Marginals::new(means, stds)
    }

    pub fn n(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &DVector<f64> {
        &self.means
    }

    pub fn stds(&self) -> &DVector<f64> {
        &self.stds
    }

    /// D = diag(sigma_1, ..., sigma_n).
    pub fn scale_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.stds)
    }
}

/// Symmetric PSD matrix with exactly unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    r: DMatrix<f64>,
}

impl CorrelationMatrix {
    pub fn new(r: DMatrix<f64>) -> Result<Self> {
        let n = r.nrows();
        if n == 0 || r.ncols() != n {
            return Err(Error::InvalidInput("correlation matrix must be square".into()));
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite correlation entries".into()));
        }
        if linalg::asymmetry(&r) > 1e-10 {
            return Err(Error::InvalidInput("correlation matrix not symmetric".into()));
        }
        for i in 0..n {
            if r[(i, i)] != 1.0 {
                return Err(Error::InvalidInput(format!(
                    "correlation diagonal entry {i} is {} (must be exactly 1)",
                    r[(i, i)]
                )));
            }
        }
        let eigmin = linalg::min_eigenvalue(&r);
        if eigmin < -1e-8 {
            return Err(Error::InvalidInput(format!(
                "correlation matrix not PSD (min eigenvalue {eigmin:.3e})"
            )));
        }
        Ok(CorrelationMatrix { r })
    }

    pub fn identity(n: usize) -> Self {
        CorrelationMatrix {
            r: DMatrix::identity(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.r.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.r
    }
}

/// Joint Gaussian N(m, D R D) from marginals and a copula correlation.
/// Because diag(R) = 1 exactly, the i-th marginal of the joint is exactly
/// N(m_i, sigma_i^2) (Sklar consistency).
pub fn assemble_joint(marg: &Marginals, r: &CorrelationMatrix) -> Result<GaussianMeasure> {
    if marg.n() != r.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} marginals vs {}x{} correlation",
            marg.n(),
            r.n(),
            r.n()
        )));
    }
    let d = marg.scale_matrix();
    let cov = &d * r.matrix() * &d;
    GaussianMeasure::new(marg.means().clone(), cov)
}

/// Coordinate marginal (mean_i, cov_ii) of a Gaussian: the pushforward under
/// the projection onto coordinate i.
pub fn marginal_of(mu: &GaussianMeasure, i: usize) -> Result<(f64, f64)> {
    if i >= mu.dim() {
        return Err(Error::InvalidInput(format!(
            "marginal index {i} out of range for dim {}",
            mu.dim()
        )));
    }
    Ok((mu.mean()[i], mu.cov()[(i, i)]))
}

/// Projects an arbitrary square matrix onto a valid correlation matrix:
/// symmetrize, clamp eigenvalues at `delta`, rescale to unit diagonal, then
/// set the diagonal to exactly one. Single pass; the diagonal rescaling can
/// push the smallest eigenvalue marginally below `delta` again, which the
/// [`CorrelationMatrix`] tolerance absorbs.
pub fn project_correlation(m: &DMatrix<f64>, delta: f64) -> Result<CorrelationMatrix> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::InvalidInput("projection input must be square".into()));
    }
    if delta <= 0.0 {
        return Err(Error::InvalidInput("delta must be positive".into()));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite projection input".into()));
    }
    let n = m.nrows();

    let sym = linalg::symmetrize(m);
    let (vals, vecs) = linalg::sym_eigen_sorted(&sym);
    let clamped = vals.map(|l| l.max(delta));
    let psd = &vecs * DMatrix::from_diagonal(&clamped) * vecs.transpose();
    let psd = linalg::symmetrize(&psd);

    // diag of a PSD matrix with eigmin >= delta is >= delta > 0
    let mut scale = DVector::zeros(n);
    for i in 0..n {
        let di = psd[(i, i)];
        assert!(di > 0.0, "PSD projection produced nonpositive diagonal");
        scale[i] = 1.0 / di.sqrt();
    }
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = scale[i] * psd[(i, j)] * scale[j];
        }
    }
    let out = linalg::symmetrize(&out);
    let mut out = out;
    for i in 0..n {
        out[(i, i)] = 1.0;
    }
    CorrelationMatrix::new(out)
}
