//! Sparse Bayesian weight posteriors and the fast component test.
//!
//! A [`WeightGroup`] holds one dictionary block D with precisions Γ, its
//! posterior covariance C = (λDᴴD + Γ)⁻¹ and mean λCDᴴr. Objects form one
//! group; each interfered ramp forms its own.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{hermitize, hpd_factor, quad_form};
use crate::C64;

/// Upper bound on any precision; keeps the covariance finite until pruning.
pub const PRECISION_CAP: f64 = 1e12;

/// dB to linear power ratio.
pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Outcome of testing one column against the rest of its group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastTest {
    pub rho: f64,
    pub omega2: f64,
    pub keep: bool,
    /// 1/(ω² - ρ) capped at [`PRECISION_CAP`]; `None` when not kept.
    pub gamma: Option<f64>,
}

impl FastTest {
    /// Estimated component SNR ω²/ρ - 1.
    pub fn snr(&self) -> f64 {
        self.omega2 / self.rho - 1.0
    }
}

/// ρ, ω² and the verdict against threshold `t` (linear).
pub fn decide(rho: f64, omega2: f64, t: f64) -> Result<FastTest> {
    if !(rho.is_finite() && rho > 0.0) {
        return Ok(FastTest {
            rho,
            omega2,
            keep: false,
            gamma: None,
        });
    }
    let keep = omega2 / rho > t;
    let gamma = if keep {
        let gap = omega2 - rho;
        if !(gap > 0.0) {
            return Err(Error::Invariant(format!(
                "kept component with ω² = {omega2:e} <= ρ = {rho:e}"
            )));
        }
        Some((1.0 / gap).min(PRECISION_CAP))
    } else {
        None
    };
    Ok(FastTest {
        rho,
        omega2,
        keep,
        gamma,
    })
}

/// Which column the fast test is applied to.
#[derive(Debug, Clone, Copy)]
pub enum Candidate<'a> {
    /// A column not yet in the dictionary.
    New(&'a DVector<C64>),
    /// Column `index` of the dictionary, possibly replaced by `column`.
    Existing { index: usize, column: &'a DVector<C64> },
}

/// Schur downdate: inverse of A with row/column `l` removed, from C = A⁻¹.
pub fn leave_one_out(cov: &DMatrix<C64>, l: usize) -> DMatrix<C64> {
    let n = cov.nrows();
    let cll = cov[(l, l)].re;
    let keep: Vec<usize> = (0..n).filter(|&i| i != l).collect();
    let mut out = DMatrix::zeros(n - 1, n - 1);
    for (a, &i) in keep.iter().enumerate() {
        for (b, &j) in keep.iter().enumerate() {
            out[(a, b)] = cov[(i, j)] - cov[(i, l)] * cov[(l, j)] / cll;
        }
    }
    hermitize(&mut out);
    out
}

fn drop_column(m: &DMatrix<C64>, l: usize) -> DMatrix<C64> {
    m.clone().remove_column(l)
}

/// Fast test of `cand` given dictionary `dict`, covariance `cov` (of `dict`),
/// noise precision λ, the group's target `residual` and linear threshold `t`.
///
/// ρ = 1/(λ‖φ‖² - λ²bᴴC b), ω² = λ²ρ²|φᴴ(r - D α̂)|², both evaluated with the
/// tested column removed from D and C.
pub fn fast_component_test(
    residual: &DVector<C64>,
    dict: &DMatrix<C64>,
    cov: &DMatrix<C64>,
    lambda: f64,
    cand: Candidate<'_>,
    t: f64,
) -> Result<FastTest> {
    let (phi, others, c_o) = match cand {
        Candidate::New(phi) => (phi, None, None),
        Candidate::Existing { index, column } => {
            if index >= dict.ncols() {
                return Err(Error::Invariant(format!("no column {index} in dictionary")));
            }
            (column, Some(drop_column(dict, index)), Some(leave_one_out(cov, index)))
        }
    };
    let d = others.as_ref().unwrap_or(dict);
    let c = c_o.as_ref().unwrap_or(cov);
    let (rho, omega2) = rho_omega(residual, d, c, lambda, phi);
    decide(rho, omega2, t)
}

/// ρ and ω² of column φ against dictionary `d` with covariance `c`.
pub(crate) fn rho_omega(
    residual: &DVector<C64>,
    d: &DMatrix<C64>,
    c: &DMatrix<C64>,
    lambda: f64,
    phi: &DVector<C64>,
) -> (f64, f64) {
    let phi_r = phi.dotc(residual);
    let (inv_rho, q) = if d.ncols() == 0 {
        (lambda * phi.norm_squared(), phi_r)
    } else {
        let b = d.ad_mul(phi);
        let dr = d.ad_mul(residual);
        let cdr = c * &dr;
        (
            lambda * phi.norm_squared() - lambda * lambda * quad_form(c, &b),
            phi_r - b.dotc(&cdr) * lambda,
        )
    };
    let rho = 1.0 / inv_rho;
    (rho, lambda * lambda * rho * rho * q.norm_sqr())
}

/// One block of weights with its dictionary and Gaussian posterior.
#[derive(Debug, Clone)]
pub struct WeightGroup {
    pub dict: DMatrix<C64>,
    pub gammas: Vec<f64>,
    pub cov: DMatrix<C64>,
    pub mean: DVector<C64>,
}

impl WeightGroup {
    pub fn empty(rows: usize) -> Self {
        WeightGroup {
            dict: DMatrix::zeros(rows, 0),
            gammas: Vec::new(),
            cov: DMatrix::zeros(0, 0),
            mean: DVector::zeros(0),
        }
    }

    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    /// λDᴴD + Γ.
    pub fn system_matrix(&self, lambda: f64) -> DMatrix<C64> {
        let mut a = self.dict.ad_mul(&self.dict) * C64::new(lambda, 0.0);
        for (i, g) in self.gammas.iter().enumerate() {
            a[(i, i)] += C64::new(*g, 0.0);
        }
        hermitize(&mut a);
        a
    }

    /// From-scratch covariance and mean for target `residual`.
    pub fn refresh(&mut self, lambda: f64, residual: &DVector<C64>) -> Result<()> {
        if self.is_empty() {
            self.cov = DMatrix::zeros(0, 0);
            self.mean = DVector::zeros(0);
            return Ok(());
        }
        let ch = hpd_factor(&self.system_matrix(lambda))?;
        let mut cov = ch.inverse();
        hermitize(&mut cov);
        self.cov = cov;
        self.refresh_mean(lambda, residual);
        Ok(())
    }

    /// Mean λCDᴴr with the current covariance.
    pub fn refresh_mean(&mut self, lambda: f64, residual: &DVector<C64>) {
        self.mean = if self.is_empty() {
            DVector::zeros(0)
        } else {
            (&self.cov * self.dict.ad_mul(residual)) * C64::new(lambda, 0.0)
        };
    }

    /// D·mean.
    pub fn fitted(&self) -> DVector<C64> {
        if self.is_empty() {
            DVector::zeros(self.dict.nrows())
        } else {
            &self.dict * &self.mean
        }
    }

    /// Re tr(C DᴴD).
    pub fn trace_term(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        crate::linalg::trace_product(&self.cov, &self.dict.ad_mul(&self.dict))
    }

    /// |mean_l|² + C_ll.
    pub fn second_moment(&self, l: usize) -> f64 {
        self.mean[l].norm_sqr() + self.cov[(l, l)].re
    }

    /// Mean-field precision update 1/(|mean_l|² + C_ll) (flat Gamma prior).
    pub fn slow_precision(&self, l: usize) -> f64 {
        1.0 / self.second_moment(l)
    }

    pub fn test(
        &self,
        lambda: f64,
        residual: &DVector<C64>,
        cand: Candidate<'_>,
        t: f64,
    ) -> Result<FastTest> {
        fast_component_test(residual, &self.dict, &self.cov, lambda, cand, t)
    }

    /// Appends a column with precision γ; bordered update of C (mean untouched).
    pub fn push(&mut self, column: &DVector<C64>, gamma: f64, lambda: f64) {
        let l = self.len();
        let b = self.dict.ad_mul(column);
        let cb = &self.cov * &b;
        let s = lambda * column.norm_squared() - lambda * lambda * b.dotc(&cb).re + gamma;
        let mut cov = DMatrix::zeros(l + 1, l + 1);
        let lam = C64::new(lambda, 0.0);
        for i in 0..l {
            for j in 0..l {
                cov[(i, j)] = self.cov[(i, j)] + cb[i] * cb[j].conj() * (lambda * lambda / s);
            }
            cov[(i, l)] = -cb[i] * lam / s;
            cov[(l, i)] = cov[(i, l)].conj();
        }
        cov[(l, l)] = C64::new(1.0 / s, 0.0);
        hermitize(&mut cov);
        self.cov = cov;
        self.dict = self.dict.clone().insert_column(l, C64::new(0.0, 0.0));
        self.dict.set_column(l, column);
        self.gammas.push(gamma);
        self.mean = self.mean.clone().push(C64::new(0.0, 0.0));
    }

    /// Removes column `l`; Schur downdate of C.
    pub fn remove(&mut self, l: usize) {
        self.cov = leave_one_out(&self.cov, l);
        self.dict = self.dict.clone().remove_column(l);
        self.gammas.remove(l);
        self.mean = self.mean.clone().remove_row(l);
    }

    /// Changes precision l to `gamma`; rank-one update of C.
    pub fn set_gamma(&mut self, l: usize, gamma: f64) {
        let delta = gamma - self.gammas[l];
        if delta == 0.0 {
            return;
        }
        let cl = self.cov.column(l).into_owned();
        let denom = 1.0 + delta * self.cov[(l, l)].re;
        self.cov -= (&cl * cl.adjoint()) * C64::new(delta / denom, 0.0);
        hermitize(&mut self.cov);
        self.gammas[l] = gamma;
    }

    /// Replaces column `l` (γ unchanged). Only row/column l of λDᴴD + Γ move,
    /// a Hermitian rank-2 change, so C gets a 2×2 Woodbury update. Falls back
    /// to a full rebuild if the update looks ill-conditioned.
    pub fn replace_column(&mut self, l: usize, column: &DVector<C64>, lambda: f64) -> Result<()> {
        let old_row = self.dict.ad_mul(&self.dict.column(l));
        self.dict.set_column(l, column);
        let new_row = self.dict.ad_mul(column);
        // ΔA = e_l dᴴ + d e_lᴴ with d = λ(new - old) - (Δ_ll / 2) e_l.
        let mut d = (new_row - old_row) * C64::new(lambda, 0.0);
        let half_ll = d[l].re / 2.0;
        d[l] = C64::new(half_ll, 0.0);
        let cd = &self.cov * &d;
        let ce = self.cov.column(l).into_owned();
        // S = J + UᴴCU with U = [e_l, d], J = [[0,1],[1,0]].
        let s00 = ce[l];
        let s01 = C64::new(1.0, 0.0) + cd[l];
        let s10 = s01.conj();
        let s11 = d.dotc(&cd);
        let det = s00 * s11 - s01 * s10;
        let scale = s00.norm() * s11.norm() + s01.norm_sqr();
        if !(det.norm() > 1e-8 * scale) {
            return self.rebuild_cov(lambda);
        }
        let (i00, i01, i10, i11) = (s11 / det, -s01 / det, -s10 / det, s00 / det);
        let mut cov = self.cov.clone();
        for j in 0..cov.ncols() {
            let (a, b) = (ce[j].conj(), cd[j].conj());
            let left0 = i00 * a + i01 * b;
            let left1 = i10 * a + i11 * b;
            for i in 0..cov.nrows() {
                cov[(i, j)] -= ce[i] * left0 + cd[i] * left1;
            }
        }
        hermitize(&mut cov);
        if (0..cov.nrows()).any(|i| !(cov[(i, i)].re > 0.0) || !cov[(i, i)].re.is_finite()) {
            return self.rebuild_cov(lambda);
        }
        self.cov = cov;
        Ok(())
    }

    fn rebuild_cov(&mut self, lambda: f64) -> Result<()> {
        let ch = hpd_factor(&self.system_matrix(lambda))?;
        self.cov = ch.inverse();
        hermitize(&mut self.cov);
        Ok(())
    }

    /// Applies a fast-test verdict to column `l` or, for `l == None`, a new `column`.
    /// Returns true if the support changed.
    pub fn apply(
        &mut self,
        l: Option<usize>,
        column: &DVector<C64>,
        test: &FastTest,
        lambda: f64,
        allow_support_change: bool,
    ) -> Result<bool> {
        match (l, test.gamma) {
            (None, Some(g)) if allow_support_change => {
                self.push(column, g, lambda);
                Ok(true)
            }
            (None, _) => Ok(false),
            (Some(l), Some(g)) => {
                self.set_gamma(l, g);
                Ok(false)
            }
            (Some(l), None) if allow_support_change => {
                self.remove(l);
                Ok(true)
            }
            (Some(l), None) => {
                // Support frozen: move γ to the marginal-likelihood optimum instead.
                let gap = test.omega2 - test.rho;
                let g = if gap > 0.0 && test.rho > 0.0 {
                    (1.0 / gap).min(PRECISION_CAP)
                } else {
                    PRECISION_CAP
                };
                self.set_gamma(l, g);
                Ok(false)
            }
        }
    }
}
