use std::f64::consts::PI;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{modified_aaf_transfer, AafModel, ChirpParams, ModifiedAaf, RampConfig};
use crate::C64;

/// u(t; f, k) = exp(j(2πft + πkt²)).
pub fn chirp_phasor(t: f64, f: f64, k: f64) -> C64 {
    C64::from_polar(1.0, 2.0 * PI * f * t + PI * k * t * t)
}

/// Diagonal of U(θ): entry n is u(T_s n; Δf0, Δk)·Ḡ(Δf0 + Δk T_s n).
pub fn envelope_matrix(theta: ChirpParams, aaf: &AafModel, config: &RampConfig) -> Result<DVector<C64>> {
    if !(theta.delta_f0.is_finite() && theta.delta_k.is_finite()) {
        return Err(Error::Domain(format!("non-finite chirp parameters {theta:?}")));
    }
    let gbar = modified_aaf_transfer(aaf, theta.delta_k, config.f_s)?;
    Ok(envelope_with(theta, &gbar, config))
}

/// Same as [`envelope_matrix`] with a precomputed Ḡ table (must match θ's Δk).
pub fn envelope_with(theta: ChirpParams, gbar: &ModifiedAaf, config: &RampConfig) -> DVector<C64> {
    debug_assert!(gbar.delta_k() == theta.delta_k);
    let ts = config.t_s();
    DVector::from_fn(config.n_fast, |n, _| {
        let t = n as f64 * ts;
        chirp_phasor(t, theta.delta_f0, theta.delta_k) * gbar.eval(theta.delta_f0 + theta.delta_k * t)
    })
}
