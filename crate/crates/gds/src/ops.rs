//! Fourier transform and convolutional filtering for distribution-valued
//! signals, realized as linear pushforwards of Gaussian measures.

use crate::error::{Error, Result};
use crate::gauss::{pushforward, GaussianMeasure};
use crate::graph::{materialize_filter, ChebFilter, SpectralDecomp};

fn check_dim(mu: &GaussianMeasure, sd: &SpectralDecomp) -> Result<()> {
    if mu.dim() != sd.n() {
        return Err(Error::DimensionMismatch(format!(
            "measure dim {} vs graph size {}",
            mu.dim(),
            sd.n()
        )));
    }
    Ok(())
}

/// Frequency-domain representation: the pushforward under U^T. A Dirac input
/// reproduces the classical transform U^T x.
pub fn gds_ft(mu: &GaussianMeasure, sd: &SpectralDecomp) -> Result<GaussianMeasure> {
    check_dim(mu, sd)?;
    pushforward(&sd.eigvecs().transpose(), mu)
}

/// Inverse transform: pushforward under U; inverts [`gds_ft`].
pub fn gds_ift(mu_hat: &GaussianMeasure, sd: &SpectralDecomp) -> Result<GaussianMeasure> {
    check_dim(mu_hat, sd)?;
    pushforward(sd.eigvecs(), mu_hat)
}

/// Convolutional filtering: pushforward under the materialized Chebyshev
/// filter. A Dirac input reproduces the classical filtered vector F x.
pub fn gds_filter(
    mu: &GaussianMeasure,
    sd: &SpectralDecomp,
    f: &ChebFilter,
) -> Result<GaussianMeasure> {
    check_dim(mu, sd)?;
    pushforward(&materialize_filter(sd, f), mu)
}
