//! Interference chirp estimation.
//!
//! θ = (Δf0, Δk) is searched in crossing-time coordinates (t_c, ln|Δk|) with
//! t_c = -Δf0/Δk, the instant the demixed chirp sweeps through DC. A burst of
//! slope Δk lasts D = 2·f_edge/|Δk| inside the AAF band, so t_c is confined to
//! [-D/2, T_obs + D/2]; bursts further out never touch the sampled window.
//! The first search on a ramp scans a coarse grid (uniform in t_c and 1/|Δk|,
//! both slope signs) with the single-column detection statistic and polishes
//! the best cell by Nelder–Mead. Later calls only run the local search on the
//! evidence of the current active set.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{chol_logdet, hpd_factor};
use crate::model::{
    envelope_with, grid_frequency, delay_column, AafModel, ChirpParams, GbarCache,
    RampConfig,
};
use crate::vsep::optim::nelder_mead_max;
use crate::C64;

/// Admissible slopes and crossing times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaBox {
    /// Smallest |Δk| as a fraction of the victim slope.
    pub dk_min_rel: f64,
    /// Largest |Δk| as a fraction of the victim slope.
    pub dk_max_rel: f64,
    /// Crossing time may lie this many burst durations outside the window.
    pub crossing_margin: f64,
}

impl Default for ThetaBox {
    fn default() -> Self {
        ThetaBox {
            dk_min_rel: 0.01,
            dk_max_rel: 0.2,
            crossing_margin: 0.5,
        }
    }
}

/// Coarse grid resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoarseGridSize {
    pub crossing: usize,
    /// Slopes per sign.
    pub slope: usize,
}

impl Default for CoarseGridSize {
    fn default() -> Self {
        CoarseGridSize {
            crossing: 24,
            slope: 24,
        }
    }
}

/// Local search settings for θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaRefinement {
    pub max_evals: usize,
    /// Simplex spread at which the search stops, in units of the coarse grid
    /// half-step of each coordinate.
    pub xtol: f64,
}

impl Default for ThetaRefinement {
    fn default() -> Self {
        ThetaRefinement {
            max_evals: 120,
            xtol: 1e-4,
        }
    }
}

/// ψ_kᴴ x for every grid bin k, via one K-point inverse FFT of x_n(-1)^n.
pub struct GridTransform {
    n: usize,
    k: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl GridTransform {
    pub fn new(n_fast: usize, grid_size: usize) -> Self {
        GridTransform {
            n: n_fast,
            k: grid_size,
            fft: FftPlanner::new().plan_fft_inverse(grid_size),
        }
    }

    pub fn grid_size(&self) -> usize {
        self.k
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        debug_assert_eq!(x.len(), self.n);
        let mut buf = vec![C64::new(0.0, 0.0); self.k];
        for (i, v) in x.iter().enumerate() {
            buf[i] = if i % 2 == 0 { *v } else { -*v };
        }
        self.fft.process(&mut buf);
        let s = 1.0 / (self.n as f64).sqrt();
        for v in &mut buf {
            *v *= s;
        }
        buf
    }

    /// Σ_n w_n exp(j2π d n / K) for d = 0..K. With w = |u|², the Gram matrix of
    /// diag(u)Ψ is (DᴴD)_ij = out[(k_i - k_j) mod K] / N.
    pub fn gram_kernel(&self, w: &[f64]) -> Vec<C64> {
        debug_assert_eq!(w.len(), self.n);
        let mut buf = vec![C64::new(0.0, 0.0); self.k];
        for (b, v) in buf.iter_mut().zip(w) {
            b.re = *v;
        }
        self.fft.process(&mut buf);
        buf
    }
}

/// Largest frequency at which |G| still exceeds 1e-3 (f_s/2 for an all-pass).
pub fn aaf_band_edge(aaf: &AafModel, f_s: f64) -> f64 {
    if matches!(aaf, AafModel::AllPass) {
        return f_s / 2.0;
    }
    let steps = 4096;
    let mut edge = 0.0;
    for i in 0..=steps {
        let f = 4.0 * f_s * i as f64 / steps as f64;
        if aaf.transfer(f).norm() > 1e-3 || aaf.transfer(-f).norm() > 1e-3 {
            edge = f;
        }
    }
    edge.max(f_s / 64.0)
}

/// Geometry of the θ search for one ramp configuration and AAF, plus the
/// precomputed coarse-grid envelopes. Shared read-only across trials.
pub struct ThetaSpace {
    pub config: RampConfig,
    pub aaf: AafModel,
    pub bounds: ThetaBox,
    band_edge: f64,
    dk_min: f64,
    dk_max: f64,
    coarse: Vec<(ChirpParams, DVector<C64>, f64)>,
    coarse_dims: CoarseGridSize,
}

impl ThetaSpace {
    pub fn new(config: RampConfig, aaf: AafModel, bounds: ThetaBox, dims: CoarseGridSize) -> Result<Self> {
        if !(bounds.dk_min_rel > 0.0 && bounds.dk_max_rel > bounds.dk_min_rel) {
            return Err(Error::Config(format!("bad slope box {bounds:?}")));
        }
        if dims.crossing < 2 || dims.slope < 2 {
            return Err(Error::Config("coarse θ grid needs at least 2 points per dimension".into()));
        }
        let band_edge = aaf_band_edge(&aaf, config.f_s);
        let mut space = ThetaSpace {
            config,
            aaf,
            bounds,
            band_edge,
            dk_min: bounds.dk_min_rel * config.slope_k,
            dk_max: bounds.dk_max_rel * config.slope_k,
            coarse: Vec::new(),
            coarse_dims: dims,
        };
        let mut cache = GbarCache::default();
        let (u_lo, u_hi) = (1.0 / space.dk_max, 1.0 / space.dk_min);
        for sign in [-1.0, 1.0] {
            for j in 0..dims.slope {
                let u = u_lo + (u_hi - u_lo) * j as f64 / (dims.slope - 1) as f64;
                let dk = sign / u;
                let gbar = cache.get(&space.aaf, dk, config.f_s)?;
                let (t_lo, t_hi) = space.crossing_range(dk);
                for i in 0..dims.crossing {
                    let tc = t_lo + (t_hi - t_lo) * i as f64 / (dims.crossing - 1) as f64;
                    let theta = ChirpParams::from_crossing(tc, dk);
                    let env = envelope_with(theta, &gbar, &config);
                    let energy = env.norm_squared();
                    space.coarse.push((theta, env, energy));
                }
            }
        }
        Ok(space)
    }

    pub fn slope_range(&self) -> (f64, f64) {
        (self.dk_min, self.dk_max)
    }

    /// Admissible crossing times for slope `dk`.
    pub fn crossing_range(&self, dk: f64) -> (f64, f64) {
        let d = 2.0 * self.band_edge / dk.abs();
        let m = self.bounds.crossing_margin * d;
        (-m, self.config.observation_time() + m)
    }

    /// Projects θ into the admissible box.
    pub fn clamp(&self, theta: ChirpParams) -> ChirpParams {
        let sign = if theta.delta_k < 0.0 { -1.0 } else { 1.0 };
        let dk = sign * theta.delta_k.abs().clamp(self.dk_min, self.dk_max);
        let (lo, hi) = self.crossing_range(dk);
        let tc = if theta.delta_k == 0.0 { 0.0 } else { theta.crossing_time() };
        ChirpParams::from_crossing(tc.clamp(lo, hi), dk)
    }

    pub fn contains(&self, theta: ChirpParams) -> bool {
        let a = theta.delta_k.abs();
        if !(a >= self.dk_min * (1.0 - 1e-12) && a <= self.dk_max * (1.0 + 1e-12)) {
            return false;
        }
        let (lo, hi) = self.crossing_range(theta.delta_k);
        let tc = theta.crossing_time();
        tc >= lo - 1e-15 && tc <= hi + 1e-15
    }

    pub fn coarse_len(&self) -> usize {
        self.coarse.len()
    }

    /// Initial local-search step (t_c, ln|Δk|) matching the coarse spacing.
    pub fn coarse_step(&self, theta: ChirpParams) -> [f64; 2] {
        let (lo, hi) = self.crossing_range(theta.delta_k);
        let dt = (hi - lo) / (self.coarse_dims.crossing - 1) as f64;
        let du = (1.0 / self.dk_min - 1.0 / self.dk_max) / (self.coarse_dims.slope - 1) as f64;
        let dlog = (du * theta.delta_k.abs()).min(0.5);
        [0.5 * dt, 0.5 * dlog]
    }

    pub fn envelope(&self, theta: ChirpParams, cache: &mut GbarCache) -> Result<DVector<C64>> {
        let gbar = cache.get(&self.aaf, theta.delta_k, self.config.f_s)?;
        Ok(envelope_with(theta, &gbar, &self.config))
    }

    /// Best single-column detection statistic λ|ψ_kᴴUᴴe|²/‖Uψ_k‖² over the
    /// coarse grid and all bins. Returns (θ, k, statistic).
    pub fn coarse_search(&self, e: &DVector<C64>, lambda: f64, grid: &GridTransform) -> (ChirpParams, usize, f64) {
        let mut best = (self.coarse[0].0, 0usize, f64::NEG_INFINITY);
        let mut buf = vec![C64::new(0.0, 0.0); self.config.n_fast];
        for (theta, env, energy) in &self.coarse {
            if let Some((k, s)) = detection_statistic(env, *energy, e, lambda, grid, &mut buf) {
                if s > best.2 {
                    best = (*theta, k, s);
                }
            }
        }
        best
    }

    /// Nelder–Mead maximization of `objective` over (t_c, ln|Δk|) with the
    /// slope sign of `seed`. Returns the better of the seed and the result.
    pub fn refine<F: FnMut(ChirpParams) -> f64>(
        &self,
        seed: ChirpParams,
        step: [f64; 2],
        settings: &ThetaRefinement,
        mut objective: F,
    ) -> (ChirpParams, f64) {
        let sign = if seed.delta_k < 0.0 { -1.0 } else { 1.0 };
        let seed = self.clamp(seed);
        let f_seed = objective(seed);
        let (t_lo, _) = self.crossing_range(self.dk_min);
        let (_, t_hi) = self.crossing_range(self.dk_min);
        let lo = [t_lo, self.dk_min.ln()];
        let hi = [t_hi, self.dk_max.ln()];
        let to_theta = |x: &[f64]| self.clamp(ChirpParams::from_crossing(x[0], sign * x[1].exp()));
        let x0 = [seed.crossing_time(), seed.delta_k.abs().ln()];
        let step = [step[0].max(1e-12), step[1].max(1e-9)];
        let coarse = self.coarse_step(seed);
        let xtol = [settings.xtol * coarse[0], settings.xtol * coarse[1]];
        let (x, fx) = nelder_mead_max(
            |x| objective(to_theta(x)),
            &x0,
            &step,
            &lo,
            &hi,
            &xtol,
            settings.max_evals,
        );
        if fx > f_seed {
            (to_theta(&x), fx)
        } else {
            (seed, f_seed)
        }
    }
}

/// max over k of λ|ψ_kᴴ(u* ∘ e)|² / (‖u‖²/N); `None` for an envelope with no energy.
pub fn detection_statistic(
    env: &DVector<C64>,
    energy: f64,
    e: &DVector<C64>,
    lambda: f64,
    grid: &GridTransform,
    buf: &mut [C64],
) -> Option<(usize, f64)> {
    let n = env.len();
    let col_energy = energy / n as f64;
    if col_energy < 1e-9 {
        return None;
    }
    for i in 0..n {
        buf[i] = env[i].conj() * e[i];
    }
    let z = grid.apply(buf);
    let mut best = (0usize, f64::NEG_INFINITY);
    for (k, v) in z.iter().enumerate() {
        let s = v.norm_sqr();
        if s > best.1 {
            best = (k, s);
        }
    }
    Some((best.0, lambda * best.1 / col_energy))
}

/// Effective interference columns U(θ)ψ_k for the given bins.
pub fn ramp_dictionary(env: &DVector<C64>, bins: &[usize], grid_size: usize) -> DMatrix<C64> {
    modulate(env, &grid_columns(bins, grid_size, env.len()))
}

/// Ψ restricted to `bins`.
pub fn grid_columns(bins: &[usize], grid_size: usize, n_fast: usize) -> DMatrix<C64> {
    let mut psi = DMatrix::zeros(n_fast, bins.len());
    for (j, &k) in bins.iter().enumerate() {
        psi.set_column(j, &delay_column(grid_frequency(k, grid_size), n_fast));
    }
    psi
}

/// diag(env)·psi
pub fn modulate(env: &DVector<C64>, psi: &DMatrix<C64>) -> DMatrix<C64> {
    let mut d = psi.clone();
    for mut col in d.column_iter_mut() {
        col.component_mul_assign(env);
    }
    d
}

/// log det C(θ) + λ²‖L⁻¹Dᴴr‖², the evidence of a group with dictionary `d`
/// (C = (λDᴴD + Γ)⁻¹ = (LLᴴ)⁻¹). -∞ if the system is not positive definite.
pub fn group_evidence(d: &DMatrix<C64>, gammas: &[f64], lambda: f64, r: &DVector<C64>) -> f64 {
    if d.ncols() == 0 {
        return 0.0;
    }
    let mut a = d.ad_mul(d) * C64::new(lambda, 0.0);
    for (i, g) in gammas.iter().enumerate() {
        a[(i, i)] += C64::new(*g, 0.0);
    }
    crate::linalg::hermitize(&mut a);
    let Ok(ch) = hpd_factor(&a) else {
        return f64::NEG_INFINITY;
    };
    let y = d.ad_mul(r);
    let w = ch.l().solve_lower_triangular(&y).unwrap_or_else(|| DVector::zeros(y.len()));
    -chol_logdet(&ch) + lambda * lambda * w.norm_squared()
}

/// [`group_evidence`] for D = diag(env)·Ψ_bins, computed through the grid
/// transform instead of forming D.
pub fn group_evidence_on_grid(
    env: &DVector<C64>,
    bins: &[usize],
    gammas: &[f64],
    lambda: f64,
    r: &DVector<C64>,
    grid: &GridTransform,
) -> f64 {
    if bins.is_empty() {
        return 0.0;
    }
    let n = env.len();
    let k = grid.grid_size();
    let w: Vec<f64> = env.iter().map(|u| u.norm_sqr()).collect();
    let kern = grid.gram_kernel(&w);
    let x: Vec<C64> = env.iter().zip(r.iter()).map(|(u, v)| u.conj() * v).collect();
    let proj = grid.apply(&x);
    let s = bins.len();
    let scale = lambda / n as f64;
    let mut a = DMatrix::from_fn(s, s, |i, j| kern[(bins[i] + k - bins[j]) % k] * scale);
    for (i, g) in gammas.iter().enumerate() {
        a[(i, i)] += C64::new(*g, 0.0);
    }
    crate::linalg::hermitize(&mut a);
    let Ok(ch) = hpd_factor(&a) else {
        return f64::NEG_INFINITY;
    };
    let y = DVector::from_iterator(s, bins.iter().map(|&b| proj[b]));
    let w = ch.l().solve_lower_triangular(&y).unwrap_or_else(|| DVector::zeros(s));
    -chol_logdet(&ch) + lambda * lambda * w.norm_squared()
}
