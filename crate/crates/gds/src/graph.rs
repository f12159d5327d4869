//! Graph representation, Laplacian spectral decomposition, and Chebyshev
//! polynomial filters.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Simple undirected weighted graph: symmetric nonnegative adjacency with a
/// zero diagonal, connected on its nonzero pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    adjacency: DMatrix<f64>,
}

impl Graph {
    /// Validates and wraps an adjacency matrix.
    ///
    /// Symmetry is required to 1e-12, the diagonal must be exactly zero,
    /// weights nonnegative, and the nonzero pattern connected.
    pub fn new(adjacency: DMatrix<f64>) -> Result<Self> {
        let n = adjacency.nrows();
        if n == 0 || adjacency.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "adjacency must be square and nonempty, got {}x{}",
                adjacency.nrows(),
                adjacency.ncols()
            )));
        }
        if adjacency.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("adjacency has non-finite entries".into()));
        }
        if adjacency.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidInput("adjacency has negative weights".into()));
        }
        if linalg::asymmetry(&adjacency) > 1e-12 {
            return Err(Error::InvalidInput("adjacency not symmetric (tol 1e-12)".into()));
        }
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::InvalidInput(format!("self-loop at node {i}")));
            }
        }
        let g = Graph { n, adjacency };
        if !g.is_connected() {
            return Err(Error::NotConnected);
        }
        Ok(g)
    }

    /// Unit-weight graph from an edge list. Duplicate and mirrored pairs are
    /// deduplicated; self-loops are rejected.
    pub fn from_edge_list(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = DMatrix::zeros(n, n);
        let mut seen = BTreeSet::new();
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!(
                    "edge ({i},{j}) out of range for {n} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidInput(format!("self-loop at node {i}")));
            }
            let key = (i.min(j), i.max(j));
            if seen.insert(key) {
                adjacency[(i, j)] = 1.0;
                adjacency[(j, i)] = 1.0;
            }
        }
        Graph::new(adjacency)
    }

    /// Reads an edge-list file: one "i j" pair per line, 0-based ids,
    /// '#' starts a comment. Node count is max id + 1.
    pub fn from_edge_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let edges = parse_edge_list(&text)?;
        let n = edges
            .iter()
            .flat_map(|&(i, j)| [i, j])
            .max()
            .ok_or_else(|| Error::Data(format!("{}: no edges", path.display())))?
            + 1;
        Graph::from_edge_list(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn degrees(&self) -> DVector<f64> {
        DVector::from_iterator(self.n, self.adjacency.column_iter().map(|c| c.sum()))
    }

    /// Edge list with i < j, unit of iteration for serialization.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.adjacency[(i, j)] != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for j in 0..self.n {
                if !seen[j] && self.adjacency[(i, j)] != 0.0 {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == self.n
    }
}

fn parse_edge_list(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let (a, b) = (it.next(), it.next());
        if it.next().is_some() {
            return Err(Error::Data(format!("edge list line {}: expected 'i j'", lineno + 1)));
        }
        match (a, b) {
            (Some(a), Some(b)) => {
                let i = a.parse::<usize>().map_err(|_| {
                    Error::Data(format!("edge list line {}: bad node id '{a}'", lineno + 1))
                })?;
                let j = b.parse::<usize>().map_err(|_| {
                    Error::Data(format!("edge list line {}: bad node id '{b}'", lineno + 1))
                })?;
                edges.push((i, j));
            }
            _ => {
                return Err(Error::Data(format!("edge list line {}: expected 'i j'", lineno + 1)))
            }
        }
    }
    Ok(edges)
}

/// Writes the "i j" edge-list format produced by [`Graph::edges`].
pub fn write_edge_list(g: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("# edge list: one 'i j' pair per line, 0-based ids\n");
    for (i, j) in g.edges() {
        out.push_str(&format!("{i} {j}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Laplacian L = D - A with its full symmetric eigendecomposition.
///
/// Columns of `eigvecs` are orthonormal, eigenvalues ascend, and each
/// eigenvector carries the deterministic sign convention from
/// [`linalg::sym_eigen_sorted`], so repeated construction is bit-identical.
#[derive(Debug, Clone)]
pub struct SpectralDecomp {
    laplacian: DMatrix<f64>,
    eigvecs: DMatrix<f64>,
    eigvals: DVector<f64>,
    lambda_max: f64,
}

/// Builds L = D - A and its eigendecomposition, checking the spectral
/// invariants of a connected graph.
pub fn build_laplacian(g: &Graph) -> Result<SpectralDecomp> {
    let n = g.n();
    let degrees = g.degrees();
    let laplacian = DMatrix::from_diagonal(&degrees) - g.adjacency();
    let (eigvals, eigvecs) = linalg::sym_eigen_sorted(&laplacian);

    let gram_err = linalg::max_abs(&(eigvecs.transpose() * &eigvecs - DMatrix::identity(n, n)));
    if gram_err > 1e-10 {
        return Err(Error::Numerical(format!(
            "eigenvector basis not orthonormal (err {gram_err:.3e})"
        )));
    }
    let rec = &eigvecs * DMatrix::from_diagonal(&eigvals) * eigvecs.transpose();
    let rec_err = linalg::max_abs(&(&rec - &laplacian));
    if rec_err > 1e-8 * linalg::max_abs(&laplacian).max(1.0) {
        return Err(Error::Numerical(format!(
            "Laplacian reconstruction error {rec_err:.3e}"
        )));
    }
    if eigvals[0].abs() > 1e-8 {
        return Err(Error::Numerical(format!(
            "smallest Laplacian eigenvalue {:.3e} not ~0",
            eigvals[0]
        )));
    }
    let lambda_max = eigvals[n - 1];
    Ok(SpectralDecomp {
        laplacian,
        eigvecs,
        eigvals,
        lambda_max,
    })
}

impl SpectralDecomp {
    pub fn n(&self) -> usize {
        self.laplacian.nrows()
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    pub fn eigvecs(&self) -> &DMatrix<f64> {
        &self.eigvecs
    }

    pub fn eigvals(&self) -> &DVector<f64> {
        &self.eigvals
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// Rescaled Laplacian 2L/lambda_max - I, spectrum in [-1, 1].
    /// A single-node graph has L = 0 and the rescaling degenerates to -I.
    pub fn scaled_laplacian(&self) -> DMatrix<f64> {
        let n = self.n();
        if self.lambda_max < 1e-12 {
            return -DMatrix::<f64>::identity(n, n);
        }
        2.0 / self.lambda_max * &self.laplacian - DMatrix::identity(n, n)
    }

    /// Rescaled eigenvalues 2*lambda_i/lambda_max - 1.
    pub fn scaled_eigvals(&self) -> DVector<f64> {
        if self.lambda_max < 1e-12 {
            return DVector::from_element(self.n(), -1.0);
        }
        self.eigvals.map(|l| 2.0 * l / self.lambda_max - 1.0)
    }

    /// Heat kernel e^{-tau L} = U e^{-tau Lambda} U^T.
    pub fn heat_kernel(&self, tau: f64) -> DMatrix<f64> {
        let exp = DMatrix::from_diagonal(&self.eigvals.map(|l| (-tau * l).exp()));
        linalg::symmetrize(&(&self.eigvecs * exp * self.eigvecs.transpose()))
    }
}

/// Degree-2 Chebyshev filter, defined by three coefficients applied to the
/// rescaled Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChebFilter {
    pub coeffs: [f64; 3],
}

impl ChebFilter {
    pub fn new(coeffs: [f64; 3]) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("filter coefficients must be finite".into()));
        }
        Ok(ChebFilter { coeffs })
    }

    /// Identity filter (1, 0, 0).
    pub fn identity() -> Self {
        ChebFilter { coeffs: [1.0, 0.0, 0.0] }
    }

    /// Scalar frequency response at a rescaled eigenvalue x in [-1, 1]:
    /// theta_0 + theta_1 x + theta_2 (2x^2 - 1).
    pub fn response(&self, x: f64) -> f64 {
        self.coeffs[0] + self.coeffs[1] * x + self.coeffs[2] * (2.0 * x * x - 1.0)
    }
}

/// Chebyshev basis {T_0, T_1, T_2} evaluated on the rescaled Laplacian:
/// T_0 = I, T_1 = L~, T_2 = 2 L~^2 - I.
pub fn cheb_basis(sd: &SpectralDecomp) -> [DMatrix<f64>; 3] {
    let n = sd.n();
    let t0 = DMatrix::identity(n, n);
    let t1 = sd.scaled_laplacian();
    let t2 = 2.0 * &t1 * &t1 - DMatrix::identity(n, n);
    [t0, t1, linalg::symmetrize(&t2)]
}

/// Dense filter matrix F = sum_k theta_k T_k(L~).
pub fn materialize_filter(sd: &SpectralDecomp, f: &ChebFilter) -> DMatrix<f64> {
    let [t0, t1, t2] = cheb_basis(sd);
    let m = f.coeffs[0] * t0 + f.coeffs[1] * t1 + f.coeffs[2] * t2;
    linalg::symmetrize(&m)
}
