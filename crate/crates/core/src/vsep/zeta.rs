//! Object frequency estimation: the per-component cost and its maximization.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::linalg::quad_form;
use crate::model::{steering, wrap_half, Zeta};
use crate::vsep::optim::brent_max;
use crate::C64;

/// Local search settings for ζ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZetaRefinement {
    /// Coordinate-ascent sweeps (beat, then Doppler).
    pub cycles: usize,
    /// Half width of each line search, in DFT bins (1/N resp. 1/P).
    pub half_width_bins: f64,
    /// Absolute tolerance of the line searches.
    pub tol: f64,
    /// Zero-padding factor of the proposal DFT.
    pub pad_factor: usize,
}

impl Default for ZetaRefinement {
    fn default() -> Self {
        ZetaRefinement {
            cycles: 4,
            half_width_bins: 0.5,
            tol: 1e-11,
            pad_factor: 4,
        }
    }
}

/// Everything the ζ cost of one column needs besides ζ itself.
pub struct ZetaContext {
    n_fast: usize,
    n_ramps: usize,
    others: DMatrix<C64>,
    cov_others: DMatrix<C64>,
    lambda: f64,
    gamma: f64,
    /// r - Φ_l̄ α̂_l̄
    e: DVector<C64>,
    /// Frequencies of `others` when every column is a steering vector.
    others_zetas: Option<Vec<Zeta>>,
}

impl ZetaContext {
    /// `others`/`cov_others` exclude the column being estimated; `gamma` is its
    /// current precision (0 for a proposal).
    pub fn new(
        residual: &DVector<C64>,
        others: DMatrix<C64>,
        cov_others: DMatrix<C64>,
        lambda: f64,
        gamma: f64,
        n_fast: usize,
        n_ramps: usize,
    ) -> Self {
        let e = if others.ncols() == 0 {
            residual.clone()
        } else {
            let alpha = (&cov_others * others.ad_mul(residual)) * C64::new(lambda, 0.0);
            residual - &others * alpha
        };
        ZetaContext {
            n_fast,
            n_ramps,
            others,
            cov_others,
            lambda,
            gamma,
            e,
            others_zetas: None,
        }
    }

    /// Declares that column i of `others` is φ(zetas[i]), so that φᴴ(ζ_i)φ(ζ)
    /// can be taken in closed form instead of from the dense product.
    pub fn with_steering_others(mut self, zetas: Vec<Zeta>) -> Self {
        debug_assert_eq!(zetas.len(), self.others.ncols());
        self.others_zetas = Some(zetas);
        self
    }

    /// Effective residual r - Φ_l̄ α̂_l̄.
    pub fn effective_residual(&self) -> &DVector<C64> {
        &self.e
    }

    /// log c′ + c′λ²|φᴴ(ζ) e|² with c′ = (1/ρ(ζ) + γ)⁻¹.
    pub fn objective(&self, z: Zeta) -> f64 {
        let phi = steering(z.wrapped(), self.n_fast, self.n_ramps);
        let lam = self.lambda;
        let mut inv_rho = lam * phi.norm_squared();
        if self.others.ncols() > 0 {
            let b = match &self.others_zetas {
                Some(zs) => {
                    let scale = 1.0 / (self.n_fast * self.n_ramps) as f64;
                    DVector::from_iterator(
                        zs.len(),
                        zs.iter().map(|zi| {
                            geometric_sum(zi.beat - z.beat, self.n_fast)
                                * geometric_sum(zi.doppler - z.doppler, self.n_ramps)
                                * scale
                        }),
                    )
                }
                None => self.others.ad_mul(&phi),
            };
            inv_rho -= lam * lam * quad_form(&self.cov_others, &b);
        }
        if !(inv_rho > 0.0) {
            return f64::NEG_INFINITY;
        }
        let c = 1.0 / (inv_rho + self.gamma);
        let q = phi.dotc(&self.e).norm_sqr();
        c.ln() + c * lam * lam * q
    }
}

/// Σ_{m<len} exp(j2πxm).
fn geometric_sum(x: f64, len: usize) -> C64 {
    let s = (PI * x).sin();
    if s.abs() < 1e-6 {
        return (0..len).map(|m| C64::from_polar(1.0, 2.0 * PI * x * m as f64)).sum();
    }
    C64::from_polar((PI * x * len as f64).sin() / s, PI * x * (len as f64 - 1.0))
}

/// Peak of the zero-padded 2D DFT magnitude of `e` (P×N, fast time along rows).
/// Ties go to the lowest flat index.
pub fn propose_zeta(e: &DVector<C64>, n_fast: usize, n_ramps: usize, pad: usize) -> Zeta {
    let nf = n_fast * pad;
    let np = if n_ramps > 1 { n_ramps * pad } else { 1 };
    let mut grid = vec![C64::new(0.0, 0.0); nf * np];
    for p in 0..n_ramps {
        for n in 0..n_fast {
            grid[p * nf + n] = e[p * n_fast + n];
        }
    }
    let mut planner = FftPlanner::new();
    // inverse transforms: the steering phase is exp(-j2π(νp + φn))
    let fast = planner.plan_fft_inverse(nf);
    for row in grid.chunks_mut(nf).take(n_ramps) {
        fast.process(row);
    }
    if np > 1 {
        let slow = planner.plan_fft_inverse(np);
        let mut col = vec![C64::new(0.0, 0.0); np];
        for b in 0..nf {
            for a in 0..np {
                col[a] = grid[a * nf + b];
            }
            slow.process(&mut col);
            for a in 0..np {
                grid[a * nf + b] = col[a];
            }
        }
    }
    let mut best = (0usize, -1.0f64);
    for (i, v) in grid.iter().enumerate() {
        let m = v.norm_sqr();
        if m > best.1 {
            best = (i, m);
        }
    }
    let (a, b) = (best.0 / nf, best.0 % nf);
    Zeta::new(wrap_half(b as f64 / nf as f64), wrap_half(a as f64 / np as f64))
}

/// Coordinate-wise Brent ascent of the ζ cost from `seed`; never returns a
/// point with lower cost than the seed.
pub fn estimate_zeta(ctx: &ZetaContext, seed: Zeta, settings: &ZetaRefinement) -> (Zeta, f64) {
    let mut best = seed;
    let mut f_best = ctx.objective(seed);
    let hb = settings.half_width_bins / ctx.n_fast as f64;
    let hd = settings.half_width_bins / ctx.n_ramps as f64;
    for _ in 0..settings.cycles {
        let start = best;
        let (x, fx) = brent_max(
            |x| ctx.objective(Zeta::new(x, best.doppler)),
            best.beat - hb,
            best.beat + hb,
            settings.tol,
            100,
        );
        if fx > f_best {
            best.beat = x;
            f_best = fx;
        }
        if ctx.n_ramps > 1 {
            let (y, fy) = brent_max(
                |y| ctx.objective(Zeta::new(best.beat, y)),
                best.doppler - hd,
                best.doppler + hd,
                settings.tol,
                100,
            );
            if fy > f_best {
                best.doppler = y;
                f_best = fy;
            }
        }
        let moved = (best.beat - start.beat).abs() + (best.doppler - start.doppler).abs();
        if moved < 10.0 * settings.tol {
            break;
        }
    }
    (best.wrapped(), f_best)
}
