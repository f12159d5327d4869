use gds::copula::{assemble_joint, project_correlation, Marginals};
use gds::gauss::pushforward;
use gds::graph::{build_laplacian, materialize_filter, ChebFilter, Graph};
use gds::learn::{learn_gds_cop, GdsCopProblem, LearnSettings};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let n = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    edges.push((0, n - 1));
    for i in 0..n {
        for j in (i + 2)..n {
            if rng.random_range(0.0..1.0) < 0.25 {
                edges.push((i, j));
            }
        }
    }
    let sd = build_laplacian(&Graph::from_edge_list(n, &edges).unwrap()).unwrap();
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

    for (eta, iters) in [(1e-3, 20000), (5e-3, 20000), (1e-2, 20000), (2e-2, 20000)] {
        let settings = LearnSettings {
            eta1: eta,
            eta2: eta,
            epsilon: 1e-14,
            max_iters: iters,
            ..LearnSettings::default()
        };
        let t0 = std::time::Instant::now();
        match learn_gds_cop(&p, &settings) {
            Ok(trace) => {
                let first = trace.loss_history[0];
                let last = *trace.loss_history.last().unwrap();
                println!(
                    "eta {eta:.0e} iters {}: {first:.3e} -> {last:.3e} (ratio {:.1e}) in {:?}",
                    trace.iterations,
                    last / first,
                    t0.elapsed()
                );
            }
            Err(e) => println!("eta {eta:.0e}: {e}"),
        }
    }
}
