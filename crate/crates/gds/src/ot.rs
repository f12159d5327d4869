//! Discrete optimal-transport oracle on empirical point clouds.
//!
//! This is the independent reference the closed-form Gaussian distance is
//! validated against; nothing on the learning path depends on it. Point sets
//! are uniform empirical measures given as columns of a `dim x count` matrix.
//! Up to 64 points the transport problem is solved exactly as an assignment
//! problem; larger instances use entropically regularized transport with
//! epsilon annealing and debiasing.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Maximum supported point-cloud size.
pub const MAX_POINTS: usize = 4000;
/// At or below this size the exact assignment solver is used.
pub const EXACT_LIMIT: usize = 64;

/// W2 distance between the uniform empirical measures on two equal-size point
/// sets (points are columns). `reg` is the Sinkhorn regularization epsilon;
/// any value <= 0 selects the default 0.01 * median pairwise squared distance.
pub fn empirical_w2_oracle(xs: &DMatrix<f64>, ys: &DMatrix<f64>, reg: f64) -> Result<f64> {
    if xs.ncols() == 0 || ys.ncols() == 0 {
        return Err(Error::InvalidInput("empty point set".into()));
    }
    if xs.nrows() != ys.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "point dims {} vs {}",
            xs.nrows(),
            ys.nrows()
        )));
    }
    if xs.ncols() != ys.ncols() {
        return Err(Error::InvalidInput(format!(
            "point sets must have equal size, got {} vs {}",
            xs.ncols(),
            ys.ncols()
        )));
    }
    let n = xs.ncols();
    if n > MAX_POINTS {
        return Err(Error::InvalidInput(format!(
            "point sets larger than {MAX_POINTS} are not supported"
        )));
    }

    let cost_ab = sq_dist_matrix(xs, ys);
    if n <= EXACT_LIMIT {
        let assign = hungarian(&cost_ab, n);
        let total: f64 = assign.iter().enumerate().map(|(i, &j)| cost_ab[i * n + j]).sum();
        return Ok((total / n as f64).max(0.0).sqrt());
    }

    let eps = if reg > 0.0 { reg } else { 0.01 * median(&cost_ab) };
    let cost_aa = sq_dist_matrix(xs, xs);
    let cost_bb = sq_dist_matrix(ys, ys);

    let ot_ab = sinkhorn_cost(&cost_ab, n, n, eps)?;
    let ot_aa = sinkhorn_symmetric_cost(&cost_aa, n, eps)?;
    let ot_bb = sinkhorn_symmetric_cost(&cost_bb, n, eps)?;

    // Debiased divergence; cancels both the entropic and the empirical
    // self-transport bias.
    let sq = (ot_ab - 0.5 * (ot_aa + ot_bb)).max(0.0);
    Ok(sq.sqrt())
}

/// Median squared Euclidean distance between the two column sets, estimated
/// on an evenly strided subsample of at most 512 points per side. Handy for
/// choosing a regularization on the scale of the data.
pub fn median_sq_dist(xs: &DMatrix<f64>, ys: &DMatrix<f64>) -> f64 {
    let sub = |m: &DMatrix<f64>| {
        let n = m.ncols();
        if n <= 512 {
            return m.clone();
        }
        let stride = n.div_ceil(512);
        let cols: Vec<usize> = (0..n).step_by(stride).collect();
        m.select_columns(&cols)
    };
    let (xs, ys) = (sub(xs), sub(ys));
    median(&sq_dist_matrix(&xs, &ys))
}

#[doc(hidden)]
pub fn debug_parts(xs: &DMatrix<f64>, ys: &DMatrix<f64>, reg: f64) -> (f64, f64, f64, f64) {
    let n = xs.ncols();
    let cost_ab = sq_dist_matrix(xs, ys);
    let eps = if reg > 0.0 { reg } else { 0.01 * median(&cost_ab) };
    let cost_aa = sq_dist_matrix(xs, xs);
    let cost_bb = sq_dist_matrix(ys, ys);
    let ot_ab = sinkhorn_cost(&cost_ab, n, n, eps).unwrap();
    let ot_aa = sinkhorn_symmetric_cost(&cost_aa, n, eps).unwrap();
    let ot_bb = sinkhorn_symmetric_cost(&cost_bb, n, eps).unwrap();
    (eps, ot_ab, ot_aa, ot_bb)
}

/// Row-major squared-Euclidean cost matrix between column sets.
fn sq_dist_matrix(xs: &DMatrix<f64>, ys: &DMatrix<f64>) -> Vec<f64> {
    let (d, n, m) = (xs.nrows(), xs.ncols(), ys.ncols());
    let xcols: Vec<&[f64]> = (0..n).map(|i| &xs.as_slice()[i * d..(i + 1) * d]).collect();
    let ycols: Vec<&[f64]> = (0..m).map(|j| &ys.as_slice()[j * d..(j + 1) * d]).collect();
    let mut cost = vec![0.0f64; n * m];
    cost.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let xi = xcols[i];
        for (j, c) in row.iter_mut().enumerate() {
            let yj = ycols[j];
            let mut s = 0.0;
            for k in 0..d {
                let diff = xi[k] - yj[k];
                s += diff * diff;
            }
            *c = s;
        }
    });
    cost
}

fn median(values: &[f64]) -> f64 {
    let mut buf: Vec<f64> = values.to_vec();
    let mid = buf.len() / 2;
    let (_, m, _) = buf.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m
}

/// Exact assignment solver (Jonker-Volgonant style shortest augmenting
/// paths, O(n^3)). Returns, for each row, its assigned column. For uniform
/// equal-size empirical measures the optimal transport plan is a matching,
/// so this solves the LP exactly.
fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut assigned_row = vec![0usize; n + 1]; // column -> 1-based row
    let mut path = vec![0usize; n + 1];

    for row in 1..=n {
        assigned_row[0] = row;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = assigned_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < min_slack[j] {
                    min_slack[j] = cur;
                    path[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[assigned_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if assigned_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = path[j0];
            assigned_row[j0] = assigned_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[assigned_row[j] - 1] = j - 1;
    }
    assign
}

// --- Entropic transport ----------------------------------------------------
//
// Stabilized scaling-form Sinkhorn with epsilon annealing. Scaling vectors
// are periodically absorbed into dual potentials so the f32 Gibbs kernel
// never under- or overflows. Kernels at successive annealing levels satisfy
// K(eps/2) = (diag(u) K(eps) diag(v))^2 after absorption, so intermediate
// levels square the kernel elementwise instead of re-exponentiating.

const LEVEL_ITERS: usize = 5;
const FINAL_MAX_ITERS: usize = 400;
const MARGINAL_TOL: f64 = 4e-3;
/// Scaling magnitude that triggers absorption into the potentials.
const ABSORB_THRESHOLD: f64 = 1e100;

/// ln of a scaling factor, clamped so one absorption step cannot push a
/// potential past recoverable range.
fn absorb_ln(x: f64) -> f64 {
    if x.is_finite() {
        x.max(f64::MIN_POSITIVE).ln().clamp(-60.0, 60.0)
    } else {
        0.0
    }
}

struct Kernel {
    n: usize,
    m: usize,
    k: Vec<f32>,  // row-major n x m
    kt: Vec<f32>, // transpose, row-major m x n; empty when symmetric
    symmetric: bool,
}

impl Kernel {
    fn from_cost(
        cost: &[f64],
        n: usize,
        m: usize,
        f: &[f64],
        g: &[f64],
        eps: f64,
        symmetric: bool,
    ) -> Self {
        let mut k = vec![0.0f32; n * m];
        k.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
            let fi = f[i];
            for (j, out) in row.iter_mut().enumerate() {
                // exponent capped below f32 overflow; oversized potentials
                // are corrected by the next scaling update
                *out = ((fi + g[j] - cost[i * m + j]) / eps).min(60.0).exp() as f32;
            }
        });
        let mut kernel = Kernel { n, m, k, kt: Vec::new(), symmetric };
        kernel.refresh_transpose();
        kernel
    }

    fn refresh_transpose(&mut self) {
        if self.symmetric {
            return;
        }
        let (n, m) = (self.n, self.m);
        if self.kt.len() != n * m {
            self.kt = vec![0.0f32; n * m];
        }
        let k = &self.k;
        self.kt.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            for (i, out) in row.iter_mut().enumerate() {
                *out = k[i * m + j];
            }
        });
    }

    /// Absorb scaling vectors and square: kernel for eps/2. Returns ln of the
    /// rescaling applied to keep the max entry at 1; the caller must shift
    /// its potentials by it so that K = exp((f + g - C)/eps) stays exact.
    fn absorb_and_square(&mut self, u: &[f64], v: &[f64]) -> f64 {
        let m = self.m;
        self.k.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
            let ui = u[i] as f32;
            for (j, out) in row.iter_mut().enumerate() {
                let scaled = ui * *out * v[j] as f32;
                *out = scaled * scaled;
            }
        });
        let mx = self.k.par_iter().cloned().reduce(|| 0.0f32, f32::max);
        let mut ln_mx = 0.0f64;
        if mx > 0.0 && mx.is_finite() {
            let inv = 1.0 / mx;
            self.k.par_iter_mut().for_each(|x| *x *= inv);
            ln_mx = (mx as f64).ln();
        }
        self.refresh_transpose();
        ln_mx
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let m = self.m;
        let k = &self.k;
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let row = &k[i * m..(i + 1) * m];
            let mut s = 0.0f64;
            for j in 0..m {
                s += row[j] as f64 * v[j];
            }
            *o = s;
        });
    }

    fn apply_t(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        let kt = if self.symmetric { &self.k } else { &self.kt };
        out.par_iter_mut().enumerate().for_each(|(j, o)| {
            let row = &kt[j * n..(j + 1) * n];
            let mut s = 0.0f64;
            for i in 0..n {
                s += row[i] as f64 * u[i];
            }
            *o = s;
        });
    }

    fn plan_cost(&self, u: &[f64], v: &[f64], cost: &[f64]) -> f64 {
        let m = self.m;
        let k = &self.k;
        (0..self.n)
            .into_par_iter()
            .map(|i| {
                let row = &k[i * m..(i + 1) * m];
                let crow = &cost[i * m..(i + 1) * m];
                let mut s = 0.0f64;
                for j in 0..m {
                    s += u[i] * row[j] as f64 * v[j] * crow[j];
                }
                s
            })
            .sum()
    }
}

fn annealing_schedule(cost: &[f64], eps: f64) -> Vec<f64> {
    let start = 0.5 * median(cost);
    let mut levels = Vec::new();
    let mut e = start;
    while e > 2.0 * eps {
        levels.push(e);
        e *= 0.5;
    }
    levels.push(eps);
    levels
}

/// <C, P> for the entropic plan between uniform marginals.
fn sinkhorn_cost(cost: &[f64], n: usize, m: usize, eps: f64) -> Result<f64> {
    let a = 1.0 / n as f64;
    let b = 1.0 / m as f64;
    let mut f = vec![0.0f64; n];
    let mut g = vec![0.0f64; m];
    let mut u = vec![1.0f64; n];
    let mut v = vec![1.0f64; m];
    let mut kv = vec![0.0f64; n];
    let mut ku = vec![0.0f64; m];

    let levels = annealing_schedule(cost, eps);
    let mut kernel = Kernel::from_cost(cost, n, m, &f, &g, levels[0], false);

    for (li, &level) in levels.iter().enumerate() {
        if li > 0 {
            let prev = levels[li - 1];
            // Absorb the scaling vectors into the dual potentials, then move
            // to the next level: exact halving squares the kernel in place,
            // any other ratio re-exponentiates from the warm potentials.
            for i in 0..n {
                f[i] += prev * absorb_ln(u[i]);
            }
            for j in 0..m {
                g[j] += prev * absorb_ln(v[j]);
            }
            if (prev - 2.0 * level).abs() < 1e-12 * level {
                let ln_mx = kernel.absorb_and_square(&u, &v);
                let shift = 0.5 * level * ln_mx;
                f.iter_mut().for_each(|x| *x -= shift);
                g.iter_mut().for_each(|x| *x -= shift);
            } else {
                kernel = Kernel::from_cost(cost, n, m, &f, &g, level, false);
            }
            u.iter_mut().for_each(|x| *x = 1.0);
            v.iter_mut().for_each(|x| *x = 1.0);
        }

        let final_level = li + 1 == levels.len();
        let max_iters = if final_level { FINAL_MAX_ITERS } else { LEVEL_ITERS };
        let mut rebuilds = 0usize;
        for it in 0..max_iters {
            kernel.apply(&v, &mut kv);
            for i in 0..n {
                u[i] = a / kv[i].max(f64::MIN_POSITIVE);
            }
            kernel.apply_t(&u, &mut ku);
            for j in 0..m {
                v[j] = b / ku[j].max(f64::MIN_POSITIVE);
            }
            let unstable = u
                .iter()
                .chain(v.iter())
                .any(|x| !x.is_finite() || x.abs() > ABSORB_THRESHOLD);
            if unstable {
                // Stabilize: fold the current scalings into the potentials
                // and re-center the kernel at this level.
                rebuilds += 1;
                if rebuilds > 8 {
                    return Err(Error::Numerical("sinkhorn scaling overflow".into()));
                }
                for i in 0..n {
                    f[i] += level * absorb_ln(u[i]);
                }
                for j in 0..m {
                    g[j] += level * absorb_ln(v[j]);
                }
                kernel = Kernel::from_cost(cost, n, m, &f, &g, level, false);
                u.iter_mut().for_each(|x| *x = 1.0);
                v.iter_mut().for_each(|x| *x = 1.0);
                continue;
            }
            if final_level && (it + 1) % 4 == 0 {
                kernel.apply(&v, &mut kv);
                let err: f64 = (0..n).map(|i| (u[i] * kv[i] - a).abs()).sum();
                if err < MARGINAL_TOL {
                    break;
                }
            }
        }
    }

    Ok(kernel.plan_cost(&u, &v, cost))
}

/// Self-transport cost OT(a, a) for a symmetric cost matrix, using the damped
/// symmetric fixed-point update (a single scaling vector).
fn sinkhorn_symmetric_cost(cost: &[f64], n: usize, eps: f64) -> Result<f64> {
    let a = 1.0 / n as f64;
    let mut f = vec![0.0f64; n];
    let mut u = vec![1.0f64; n];
    let mut w = vec![0.0f64; n];

    let levels = annealing_schedule(cost, eps);
    let mut kernel = Kernel::from_cost(cost, n, n, &f, &f, levels[0], true);

    for (li, &level) in levels.iter().enumerate() {
        if li > 0 {
            let prev = levels[li - 1];
            for i in 0..n {
                f[i] += prev * absorb_ln(u[i]);
            }
            if (prev - 2.0 * level).abs() < 1e-12 * level {
                let ln_mx = kernel.absorb_and_square(&u, &u);
                let shift = 0.25 * level * ln_mx;
                f.iter_mut().for_each(|x| *x -= shift);
            } else {
                kernel = Kernel::from_cost(cost, n, n, &f, &f, level, true);
            }
            u.iter_mut().for_each(|x| *x = 1.0);
        }

        let final_level = li + 1 == levels.len();
        let max_iters = if final_level { FINAL_MAX_ITERS } else { LEVEL_ITERS };
        let mut rebuilds = 0usize;
        for it in 0..max_iters {
            kernel.apply(&u, &mut w);
            for i in 0..n {
                u[i] = (u[i] * a / w[i].max(f64::MIN_POSITIVE)).sqrt();
            }
            let unstable = u.iter().any(|x| !x.is_finite() || x.abs() > ABSORB_THRESHOLD);
            if unstable {
                rebuilds += 1;
                if rebuilds > 8 {
                    return Err(Error::Numerical("sinkhorn scaling overflow".into()));
                }
                for i in 0..n {
                    f[i] += level * absorb_ln(u[i]);
                }
                kernel = Kernel::from_cost(cost, n, n, &f, &f, level, true);
                u.iter_mut().for_each(|x| *x = 1.0);
                continue;
            }
            if final_level && (it + 1) % 4 == 0 {
                kernel.apply(&u, &mut w);
                let err: f64 = (0..n).map(|i| (u[i] * w[i] - a).abs()).sum();
                if err < MARGINAL_TOL {
                    break;
                }
            }
        }
    }

    Ok(kernel.plan_cost(&u, &u, cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_force_assignment(cost: &[f64], n: usize) -> f64 {
        fn rec(cost: &[f64], n: usize, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == n {
                *best = best.min(acc);
                return;
            }
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    rec(cost, n, row + 1, used, acc + cost[row * n + j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, n, 0, &mut vec![false; n], 0.0, &mut best);
        best
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 2..=6 {
            for _ in 0..20 {
                let cost: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..10.0)).collect();
                let assign = hungarian(&cost, n);
                let total: f64 = assign.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
                let best = brute_force_assignment(&cost, n);
                assert!((total - best).abs() < 1e-10, "n={n}: {total} vs {best}");
            }
        }
    }

    #[test]
    fn identical_point_sets_have_zero_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs = DMatrix::from_fn(3, 40, |_, _| rng.random_range(-1.0..1.0));
        let d = empirical_w2_oracle(&xs, &xs, 0.0).unwrap();
        assert!(d < 1e-9, "d = {d}");
        // Large clouds go through the debiased Sinkhorn path, where the cross
        // and self terms cancel only up to solver tolerance.
        let xs = DMatrix::from_fn(2, 300, |_, _| rng.random_range(-1.0..1.0));
        let d = empirical_w2_oracle(&xs, &xs, 0.0).unwrap();
        assert!(d < 2e-2, "d = {d}");
    }

    #[test]
    fn single_points_give_euclidean_distance() {
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]);
        let y = DMatrix::from_column_slice(3, 1, &[1.0, -1.0, 2.0]);
        let d = empirical_w2_oracle(&x, &y, 0.0).unwrap();
        assert!((d - 5.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn shifted_1d_gaussians() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let xs = DMatrix::from_fn(1, 2000, |_, _| {
            rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng)
        });
        let ys = DMatrix::from_fn(1, 2000, |_, _| {
            3.0 + rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng)
        });
        let d = empirical_w2_oracle(&xs, &ys, 0.0).unwrap();
        assert!((d - 3.0).abs() / 3.0 < 0.05, "d = {d}");
    }

    #[test]
    fn input_validation() {
        let x = DMatrix::<f64>::zeros(2, 3);
        let y = DMatrix::<f64>::zeros(3, 3);
        assert!(empirical_w2_oracle(&x, &y, 0.0).is_err());
        let y = DMatrix::<f64>::zeros(2, 4);
        assert!(empirical_w2_oracle(&x, &y, 0.0).is_err());
        let empty = DMatrix::<f64>::zeros(2, 0);
        assert!(empirical_w2_oracle(&empty, &empty, 0.0).is_err());
    }
}
