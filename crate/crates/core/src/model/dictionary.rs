use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::Zeta;
use crate::C64;

/// Unit-norm object steering column φ(ζ), fast-time-major.
///
/// Entry p·N + n is `exp(-j2π ν p) exp(-j2π φ n) / sqrt(P·N)` with φ, ν the
/// normalized beat and Doppler frequencies.
pub fn object_steering_vector(zeta: Zeta, n_fast: usize, n_ramps: usize) -> Result<DVector<C64>> {
    zeta.check()?;
    if n_fast == 0 || n_ramps == 0 {
        return Err(Error::Input("empty steering vector".into()));
    }
    Ok(steering(zeta, n_fast, n_ramps))
}

/// Steering column without domain checks; frequencies are used as given.
pub(crate) fn steering(zeta: Zeta, n_fast: usize, n_ramps: usize) -> DVector<C64> {
    let scale = 1.0 / ((n_fast * n_ramps) as f64).sqrt();
    let fast = phasors(-2.0 * PI * zeta.beat, n_fast);
    let slow = phasors(-2.0 * PI * zeta.doppler, n_ramps);
    DVector::from_fn(n_fast * n_ramps, |i, _| {
        slow[i / n_fast] * fast[i % n_fast] * scale
    })
}

/// `exp(j w m)` for m = 0..len.
pub(crate) fn phasors(w: f64, len: usize) -> Vec<C64> {
    (0..len).map(|m| C64::from_polar(1.0, w * m as f64)).collect()
}

/// Normalized frequency ϑ_k·T_s of interference grid bin `k`.
pub fn grid_frequency(k: usize, grid_size: usize) -> f64 {
    -0.5 + k as f64 / grid_size as f64
}

/// Nearest grid bin to a normalized frequency.
pub fn nearest_grid_index(freq: f64, grid_size: usize) -> usize {
    let k = ((crate::model::wrap_half(freq) + 0.5) * grid_size as f64).round() as usize;
    k % grid_size
}

/// One interference delay column ψ(ϑ) of length N (unit norm).
pub fn delay_column(freq: f64, n_fast: usize) -> DVector<C64> {
    let scale = 1.0 / (n_fast as f64).sqrt();
    DVector::from_iterator(
        n_fast,
        phasors(-2.0 * PI * freq, n_fast).into_iter().map(|z| z * scale),
    )
}

/// The N×K interference delay dictionary Ψ; column k is ψ(-1/2 + k/K).
pub fn interference_grid(grid_size: usize, n_fast: usize) -> Result<DMatrix<C64>> {
    if grid_size < n_fast {
        return Err(Error::Config(format!(
            "grid size K = {grid_size} must be at least N = {n_fast}"
        )));
    }
    let mut m = DMatrix::zeros(n_fast, grid_size);
    for k in 0..grid_size {
        m.set_column(k, &delay_column(grid_frequency(k, grid_size), n_fast));
    }
    Ok(m)
}
