use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::norm_sqr;
use crate::model::{steering, ChirpParams, GbarCache, SignalFrame, Zeta};
use crate::vsep::elbo::{group_term, noise_term};
use crate::vsep::sbl::{db_to_lin, decide, Candidate, WeightGroup};
use crate::vsep::theta::{detection_statistic, group_evidence_on_grid, ramp_dictionary, GridTransform};
use crate::vsep::zeta::{estimate_zeta, propose_zeta, ZetaContext};
use crate::vsep::{LedgerEntry, PosteriorState, RampPosterior, VsepEngine};
use crate::C64;

/// λ̂ = 2(NP - 1)/‖r‖², half the received power as noise.
pub fn initial_noise_precision(r: &DVector<C64>) -> Result<f64> {
    let e = norm_sqr(r);
    if !(e > 0.0) || !e.is_finite() {
        return Err(Error::Input("frame has zero or non-finite energy".into()));
    }
    Ok(2.0 * (r.len() as f64 - 1.0) / e)
}

/// λ̂ = PN / (‖r - Φα̂ - UΨβ̂‖² + Σ_groups tr(C DᴴD)).
pub fn update_noise_precision(r: &DVector<C64>, fitted: &DVector<C64>, traces: f64) -> Result<f64> {
    let denom = norm_sqr(&(r - fitted)) + traces;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::Numerical(format!(
            "noise precision denominator {denom:e} (degenerate exact fit)"
        )));
    }
    Ok(r.len() as f64 / denom)
}

pub(crate) struct RampState {
    pub bins: Vec<usize>,
    pub theta: Option<ChirpParams>,
    pub env: DVector<C64>,
    pub group: WeightGroup,
    pub step: [f64; 2],
}

impl RampState {
    fn empty(n: usize) -> Self {
        RampState {
            bins: Vec::new(),
            theta: None,
            env: DVector::zeros(n),
            group: WeightGroup::empty(n),
            step: [0.0, 0.0],
        }
    }
}

struct Run<'a> {
    eng: &'a VsepEngine,
    r: &'a DVector<C64>,
    n: usize,
    p: usize,
    k: usize,
    lambda: f64,
    objects: WeightGroup,
    zetas: Vec<Zeta>,
    ramps: Vec<RampState>,
    cache: GbarCache,
    grid: GridTransform,
    t_alpha: f64,
    t_beta: f64,
    iteration: usize,
    ledger: Vec<LedgerEntry>,
}

/// Checks the frame against the engine; returns (N, P, K).
pub(crate) fn check_frame(eng: &VsepEngine, frame: &SignalFrame) -> Result<(usize, usize, usize)> {
    let ramp = eng.ramp();
    if frame.config.n_fast != ramp.n_fast || frame.config.n_ramps != ramp.n_ramps {
        return Err(Error::Input("frame geometry differs from the engine's".into()));
    }
    if frame.samples.len() != ramp.len() {
        return Err(Error::Input("frame length differs from N·P".into()));
    }
    frame.check_finite()?;
    let (n, p) = (ramp.n_fast, ramp.n_ramps);
    let k = eng.config.grid_size(n);
    if k < n {
        return Err(Error::Config(format!("grid size {k} below N = {n}")));
    }
    Ok((n, p, k))
}

/// Runs `iterate(it)`, which returns the ELBO after iteration `it`, until the
/// relative change stays below tolerance for `patience` iterations.
/// Returns (iterations, converged, ELBO trace).
pub(crate) fn converge(
    cfg: &crate::vsep::VsepConfig,
    mut iterate: impl FnMut(usize) -> Result<f64>,
) -> Result<(usize, bool, Vec<f64>)> {
    let mut trace: Vec<f64> = Vec::new();
    let mut calm = 0usize;
    for it in 0..cfg.max_iterations {
        let elbo = iterate(it)?;
        if let Some(&prev) = trace.last() {
            let rel = ((elbo - prev) / f64::max(prev.abs(), 1e-300)).abs();
            if rel < cfg.convergence_tol {
                calm += 1;
            } else {
                calm = 0;
            }
        }
        trace.push(elbo);
        if calm >= cfg.convergence_patience {
            return Ok((it + 1, true, trace));
        }
    }
    Ok((cfg.max_iterations, false, trace))
}

pub(crate) fn run(eng: &VsepEngine, frame: &SignalFrame) -> Result<PosteriorState> {
    if eng.config.joint_dictionary {
        return crate::vsep::joint::run(eng, frame);
    }
    let cfg = &eng.config;
    let (n, p, k) = check_frame(eng, frame)?;
    let r = &frame.samples;
    let mut run = Run {
        eng,
        r,
        n,
        p,
        k,
        lambda: initial_noise_precision(r)?,
        objects: WeightGroup::empty(n * p),
        zetas: Vec::new(),
        ramps: (0..p).map(|_| RampState::empty(n)).collect(),
        cache: GbarCache::default(),
        grid: GridTransform::new(n, k),
        t_alpha: db_to_lin(cfg.threshold_object_db),
        t_beta: db_to_lin(cfg.threshold_interference_db),
        iteration: 0,
        ledger: Vec::new(),
    };
    let (iterations, converged, trace) = converge(cfg, |it| {
        run.iteration = it;
        run.iterate()?;
        Ok(run.elbo())
    })?;
    Ok(run.finish(iterations, converged, trace))
}

impl<'a> Run<'a> {
    fn frozen(&self) -> bool {
        self.eng
            .config
            .freeze_support_after
            .map_or(false, |f| self.iteration >= f)
    }

    fn record(&mut self, step: &str, support_changed: bool) {
        if self.eng.config.record_ledger {
            let elbo = self.elbo();
            self.ledger.push(LedgerEntry {
                iteration: self.iteration,
                step: step.to_string(),
                elbo,
                support_changed,
            });
        }
    }

    fn segment(&self, v: &DVector<C64>, p: usize) -> DVector<C64> {
        v.rows(p * self.n, self.n).into_owned()
    }

    fn interference_full(&self) -> DVector<C64> {
        let mut out = DVector::zeros(self.n * self.p);
        for (p, st) in self.ramps.iter().enumerate() {
            if !st.group.is_empty() {
                out.rows_mut(p * self.n, self.n).copy_from(&st.group.fitted());
            }
        }
        out
    }

    fn fitted(&self) -> DVector<C64> {
        self.objects.fitted() + self.interference_full()
    }

    fn traces(&self) -> f64 {
        self.objects.trace_term() + self.ramps.iter().map(|s| s.group.trace_term()).sum::<f64>()
    }

    fn elbo(&self) -> f64 {
        let e = norm_sqr(&(self.r - self.fitted())) + self.traces();
        let mut acc = noise_term(self.r.len(), self.lambda, e);
        acc += group_term(&self.objects);
        for st in &self.ramps {
            acc += group_term(&st.group);
        }
        acc
    }

    fn update_lambda(&mut self) -> Result<()> {
        self.lambda = update_noise_precision(self.r, &self.fitted(), self.traces())?;
        self.record("lambda", false);
        Ok(())
    }

    fn iterate(&mut self) -> Result<()> {
        if self.eng.config.interference_enabled {
            let obj = self.objects.fitted();
            let target = self.r - obj;
            for p in 0..self.p {
                let rp = self.segment(&target, p);
                self.ramp_step(p, &rp)?;
            }
            self.update_lambda()?;
        }
        let r_alpha = self.r - self.interference_full();
        self.objects.refresh(self.lambda, &r_alpha)?;
        self.record("alpha", false);
        self.object_step(&r_alpha)?;
        self.update_lambda()?;
        if self.eng.config.interference_enabled {
            let r_beta = self.r - self.objects.fitted();
            for p in 0..self.p {
                let rp = self.segment(&r_beta, p);
                self.ramps[p].group.refresh(self.lambda, &rp)?;
            }
            self.record("beta", false);
        }
        Ok(())
    }

    // ----- interference ---------------------------------------------------

    fn ramp_step(&mut self, p: usize, rp: &DVector<C64>) -> Result<()> {
        let frozen = self.frozen();
        if self.ramps[p].bins.is_empty() {
            if frozen {
                return Ok(());
            }
            self.detect_burst(p, rp)?;
        } else {
            self.refine_theta(p, rp)?;
        }
        // add the best passive column if it passes
        if !frozen {
            if let Some((k, rho, omega2)) = self.best_candidate(p, rp) {
                let test = decide(rho, omega2, self.t_beta)?;
                if test.keep {
                    let st = &mut self.ramps[p];
                    let col = ramp_dictionary(&st.env, &[k], self.k).column(0).into_owned();
                    st.group.apply(None, &col, &test, self.lambda, true)?;
                    st.bins.push(k);
                    st.group.refresh_mean(self.lambda, rp);
                    self.record("interference-add", true);
                }
            }
        }
        // re-test active columns
        let mut l = 0;
        while l < self.ramps[p].bins.len() {
            let st = &mut self.ramps[p];
            let col = st.group.dict.column(l).into_owned();
            let test = st.group.test(self.lambda, rp, Candidate::Existing { index: l, column: &col }, self.t_beta)?;
            let changed = st.group.apply(Some(l), &col, &test, self.lambda, !frozen)?;
            if changed {
                st.bins.remove(l);
            } else {
                l += 1;
            }
            let st = &mut self.ramps[p];
            st.group.refresh_mean(self.lambda, rp);
            self.record("interference-test", changed);
        }
        self.ramps[p].group.refresh(self.lambda, rp)?;
        self.record("beta-ramp", false);
        if self.ramps[p].bins.is_empty() {
            self.ramps[p].theta = None;
            self.ramps[p].env = DVector::zeros(self.n);
        } else {
            self.refine_theta(p, rp)?;
        }
        Ok(())
    }

    fn detect_burst(&mut self, p: usize, rp: &DVector<C64>) -> Result<()> {
        let (theta, env, step) = detect_theta(self.eng, &mut self.cache, &self.grid, self.lambda, rp)?;
        let st = &mut self.ramps[p];
        st.theta = Some(theta);
        st.env = env;
        st.step = step;
        Ok(())
    }

    /// Local θ refinement with the current active set; q(β) refreshed after.
    fn refine_theta(&mut self, p: usize, rp: &DVector<C64>) -> Result<()> {
        let st = &self.ramps[p];
        let Some(seed) = st.theta else {
            return Ok(());
        };
        let (theta, env, step) = refine_theta(
            self.eng,
            &mut self.cache,
            &self.grid,
            self.lambda,
            rp,
            seed,
            st.step,
            &st.bins,
            &st.group.gammas,
        )?;
        let st = &mut self.ramps[p];
        st.step = step;
        st.theta = Some(theta);
        st.group.dict = ramp_dictionary(&env, &st.bins, self.k);
        st.env = env;
        st.group.refresh(self.lambda, rp)?;
        self.record("theta", false);
        Ok(())
    }

    /// Highest ω²/ρ among passive grid columns of ramp `p` (ties: lowest bin).
    fn best_candidate(&self, p: usize, rp: &DVector<C64>) -> Option<(usize, f64, f64)> {
        let st = &self.ramps[p];
        st.theta?;
        let scan = scan_candidates(&st.env, &st.group.dict, &st.group.cov, self.lambda, rp, &self.grid);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut best_stat = f64::NEG_INFINITY;
        for (kk, (rho, omega2)) in scan.into_iter().enumerate() {
            if st.bins.contains(&kk) || !(rho > 0.0) || !rho.is_finite() {
                continue;
            }
            let stat = omega2 / rho;
            if stat > best_stat {
                best_stat = stat;
                best = Some((kk, rho, omega2));
            }
        }
        best
    }

    // ----- objects --------------------------------------------------------

    fn object_step(&mut self, r_alpha: &DVector<C64>) -> Result<()> {
        let settings = self.eng.config.zeta_refinement;
        let frozen = self.frozen();
        let (n, p, lambda) = (self.n, self.p, self.lambda);
        if !frozen {
            let ctx = ZetaContext::new(
                r_alpha,
                self.objects.dict.clone(),
                self.objects.cov.clone(),
                lambda,
                0.0,
                n,
                p,
            )
            .with_steering_others(self.zetas.clone());
            let seed = propose_zeta(ctx.effective_residual(), n, p, settings.pad_factor);
            let (z, _) = estimate_zeta(&ctx, seed, &settings);
            let phi = steering(z, n, p);
            let test = self.objects.test(lambda, r_alpha, Candidate::New(&phi), self.t_alpha)?;
            if self.objects.apply(None, &phi, &test, lambda, true)? {
                self.zetas.push(z);
                self.objects.refresh_mean(lambda, r_alpha);
                self.record("object-add", true);
            }
        }
        let mut l = 0;
        while l < self.zetas.len() {
            let others = self.objects.dict.clone().remove_column(l);
            let cov_o = crate::vsep::sbl::leave_one_out(&self.objects.cov, l);
            let mut zs = self.zetas.clone();
            zs.remove(l);
            let ctx = ZetaContext::new(r_alpha, others, cov_o, lambda, self.objects.gammas[l], n, p)
                .with_steering_others(zs);
            let (z, _) = estimate_zeta(&ctx, self.zetas[l], &settings);
            if z != self.zetas[l] {
                let phi = steering(z, n, p);
                self.objects.replace_column(l, &phi, lambda)?;
                self.zetas[l] = z;
                self.objects.refresh_mean(lambda, r_alpha);
                self.record("zeta", false);
            }
            let col = self.objects.dict.column(l).into_owned();
            let test = self
                .objects
                .test(lambda, r_alpha, Candidate::Existing { index: l, column: &col }, self.t_alpha)?;
            let changed = self.objects.apply(Some(l), &col, &test, lambda, !frozen)?;
            if changed {
                self.zetas.remove(l);
            } else {
                l += 1;
            }
            self.objects.refresh_mean(lambda, r_alpha);
            self.record("object-test", changed);
        }
        Ok(())
    }

    fn finish(self, iterations: usize, converged: bool, elbo_trace: Vec<f64>) -> PosteriorState {
        let ramps = self
            .ramps
            .into_iter()
            .map(|st| RampPosterior {
                chirp: if st.bins.is_empty() { None } else { st.theta },
                active: st.bins,
                beta_mean: st.group.mean,
                beta_cov: st.group.cov,
                beta_precisions: st.group.gammas,
            })
            .collect();
        PosteriorState {
            object_zetas: self.zetas,
            alpha_mean: self.objects.mean,
            alpha_cov: self.objects.cov,
            alpha_precisions: self.objects.gammas,
            ramps,
            noise_precision: self.lambda,
            joint_cov: None,
            grid_size: self.k,
            iterations,
            converged,
            elbo_trace,
            ledger: self.ledger,
        }
    }
}

/// Coarse search plus local polish of the single-column detection statistic.
pub(crate) fn detect_theta(
    eng: &VsepEngine,
    cache: &mut GbarCache,
    grid: &GridTransform,
    lambda: f64,
    rp: &DVector<C64>,
) -> Result<(ChirpParams, DVector<C64>, [f64; 2])> {
    let space = &eng.space;
    let (theta0, _, _) = space.coarse_search(rp, lambda, grid);
    let step = space.coarse_step(theta0);
    let mut buf = vec![C64::new(0.0, 0.0); rp.len()];
    let (theta, _) = space.refine(theta0, step, &eng.config.theta_refinement, |th| {
        match space.envelope(th, cache) {
            Ok(env) => {
                let energy = env.norm_squared();
                detection_statistic(&env, energy, rp, lambda, grid, &mut buf).map_or(f64::NEG_INFINITY, |(_, s)| s)
            }
            Err(_) => f64::NEG_INFINITY,
        }
    });
    let env = space.envelope(theta, cache)?;
    Ok((theta, env, step))
}

/// Local refinement of the ramp evidence for active `bins` with precisions
/// `gammas`. Returns θ, its envelope and the next simplex step, which shrinks
/// with the distance moved.
#[allow(clippy::too_many_arguments)]
pub(crate) fn refine_theta(
    eng: &VsepEngine,
    cache: &mut GbarCache,
    grid: &GridTransform,
    lambda: f64,
    rp: &DVector<C64>,
    seed: ChirpParams,
    step: [f64; 2],
    bins: &[usize],
    gammas: &[f64],
) -> Result<(ChirpParams, DVector<C64>, [f64; 2])> {
    let space = &eng.space;
    let (theta, _) = space.refine(seed, step, &eng.config.theta_refinement, |th| {
        match space.envelope(th, cache) {
            Ok(env) => group_evidence_on_grid(&env, bins, gammas, lambda, rp, grid),
            Err(_) => f64::NEG_INFINITY,
        }
    });
    let env = space.envelope(theta, cache)?;
    let coarse = space.coarse_step(theta);
    let moved = [
        (theta.crossing_time() - seed.crossing_time()).abs(),
        (theta.delta_k.abs().ln() - seed.delta_k.abs().ln()).abs(),
    ];
    let mut next = [0.0; 2];
    for i in 0..2 {
        next[i] = (2.0 * moved[i]).clamp(1e-3 * coarse[i], coarse[i]);
    }
    Ok((theta, env, next))
}

/// (ρ_k, ω²_k) for every grid column U(θ)ψ_k of one ramp, given the other
/// columns `dict` (rows of this ramp) with covariance `cov` and target `rp`.
pub(crate) fn scan_candidates(
    env: &DVector<C64>,
    dict: &DMatrix<C64>,
    cov: &DMatrix<C64>,
    lambda: f64,
    rp: &DVector<C64>,
    grid: &GridTransform,
) -> Vec<(f64, f64)> {
    let e = if dict.ncols() == 0 {
        rp.clone()
    } else {
        let mean = (cov * dict.ad_mul(rp)) * C64::new(lambda, 0.0);
        rp - dict * mean
    };
    scan_with_residual(env, dict, cov, lambda, &e, grid)
}

/// As [`scan_candidates`] with the posterior residual e = r - Dμ given; `dict`
/// holds the ramp's rows of every other column.
pub(crate) fn scan_with_residual(
    env: &DVector<C64>,
    dict: &DMatrix<C64>,
    cov: &DMatrix<C64>,
    lambda: f64,
    e: &DVector<C64>,
    grid: &GridTransform,
) -> Vec<(f64, f64)> {
    let n = env.len();
    let col_energy = env.norm_squared() / n as f64;
    let modulate = |x: &DVector<C64>| -> Vec<C64> { (0..n).map(|i| env[i].conj() * x[i]).collect() };
    let z = grid.apply(&modulate(e));
    // y_j[k] = (U ψ_k)ᴴ d_j, so b_k[j] = conj(y_j[k]).
    let ys: Vec<Vec<C64>> = (0..dict.ncols())
        .map(|j| grid.apply(&modulate(&dict.column(j).into_owned())))
        .collect();
    let kk = grid.grid_size();
    let mut out = Vec::with_capacity(kk);
    let mut b = DVector::zeros(dict.ncols());
    for k in 0..kk {
        let mut inv_rho = lambda * col_energy;
        if dict.ncols() > 0 {
            for j in 0..dict.ncols() {
                b[j] = ys[j][k].conj();
            }
            inv_rho -= lambda * lambda * b.dotc(&(cov * &b)).re;
        }
        let rho = 1.0 / inv_rho;
        out.push((rho, lambda * lambda * rho * rho * z[k].norm_sqr()));
    }
    out
}
