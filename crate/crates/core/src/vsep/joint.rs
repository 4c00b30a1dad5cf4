//! Joint-dictionary variant: objects and all interference columns share one
//! weight vector with a full covariance, so every fast test and every mean
//! accounts for the cross terms between the two dictionaries. The θ search
//! still scores each ramp against its own block, with the object part of the
//! joint mean removed from the target.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::norm_sqr;
use crate::model::{steering, ChirpParams, GbarCache, SignalFrame, Zeta};
use crate::vsep::elbo::{group_term, noise_term};
use crate::vsep::engine::{
    check_frame, converge, detect_theta, initial_noise_precision, refine_theta, scan_with_residual,
    update_noise_precision,
};
use crate::vsep::sbl::{db_to_lin, decide, leave_one_out, Candidate, WeightGroup};
use crate::vsep::theta::{ramp_dictionary, GridTransform};
use crate::vsep::zeta::{estimate_zeta, propose_zeta, ZetaContext};
use crate::vsep::{LedgerEntry, PosteriorState, RampPosterior, VsepEngine};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tag {
    Object(Zeta),
    Interference { ramp: usize, bin: usize },
}

#[derive(Clone)]
struct RampTheta {
    theta: Option<ChirpParams>,
    env: DVector<C64>,
    step: [f64; 2],
}

struct JointRun<'a> {
    eng: &'a VsepEngine,
    r: &'a DVector<C64>,
    n: usize,
    p: usize,
    k: usize,
    lambda: f64,
    group: WeightGroup,
    tags: Vec<Tag>,
    ramps: Vec<RampTheta>,
    cache: GbarCache,
    grid: GridTransform,
    t_alpha: f64,
    t_beta: f64,
    iteration: usize,
    ledger: Vec<LedgerEntry>,
}

pub(crate) fn run(eng: &VsepEngine, frame: &SignalFrame) -> Result<PosteriorState> {
    let cfg = &eng.config;
    let (n, p, k) = check_frame(eng, frame)?;
    let r = &frame.samples;
    let mut run = JointRun {
        eng,
        r,
        n,
        p,
        k,
        lambda: initial_noise_precision(r)?,
        group: WeightGroup::empty(n * p),
        tags: Vec::new(),
        ramps: vec![
            RampTheta {
                theta: None,
                env: DVector::zeros(n),
                step: [0.0; 2],
            };
            p
        ],
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

impl<'a> JointRun<'a> {
    fn frozen(&self) -> bool {
        self.eng.config.freeze_support_after.map_or(false, |f| self.iteration >= f)
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

    fn elbo(&self) -> f64 {
        let e = norm_sqr(&(self.r - self.group.fitted())) + self.group.trace_term();
        noise_term(self.r.len(), self.lambda, e) + group_term(&self.group)
    }

    fn update_lambda(&mut self) -> Result<()> {
        self.lambda = update_noise_precision(self.r, &self.group.fitted(), self.group.trace_term())?;
        self.record("lambda", false);
        Ok(())
    }

    fn refresh(&mut self) -> Result<()> {
        self.group.refresh(self.lambda, self.r)
    }

    /// Full-length column for bin `bin` of ramp `p` under the ramp's envelope.
    fn padded(&self, p: usize, bin: usize) -> DVector<C64> {
        let col = ramp_dictionary(&self.ramps[p].env, &[bin], self.k);
        let mut out = DVector::zeros(self.n * self.p);
        out.rows_mut(p * self.n, self.n).copy_from(&col.column(0));
        out
    }

    fn ramp_columns(&self, p: usize) -> Vec<(usize, usize)> {
        self.tags
            .iter()
            .enumerate()
            .filter_map(|(i, t)| match t {
                Tag::Interference { ramp, bin } if *ramp == p => Some((i, *bin)),
                _ => None,
            })
            .collect()
    }

    /// Segment of ramp `p` of the target with the object part of the mean removed.
    fn theta_target(&self, p: usize) -> DVector<C64> {
        let mut obj = DVector::zeros(self.n * self.p);
        for (i, t) in self.tags.iter().enumerate() {
            if matches!(t, Tag::Object(_)) {
                obj += self.group.dict.column(i) * self.group.mean[i];
            }
        }
        (self.r - obj).rows(p * self.n, self.n).into_owned()
    }

    fn set_theta(&mut self, p: usize, theta: ChirpParams, env: DVector<C64>, step: [f64; 2]) -> Result<()> {
        self.ramps[p] = RampTheta {
            theta: Some(theta),
            env,
            step,
        };
        for (i, bin) in self.ramp_columns(p) {
            let col = self.padded(p, bin);
            self.group.dict.set_column(i, &col);
        }
        self.refresh()
    }

    fn refine(&mut self, p: usize) -> Result<()> {
        let Some(seed) = self.ramps[p].theta else {
            return Ok(());
        };
        let cols = self.ramp_columns(p);
        let bins: Vec<usize> = cols.iter().map(|c| c.1).collect();
        let gammas: Vec<f64> = cols.iter().map(|c| self.group.gammas[c.0]).collect();
        let target = self.theta_target(p);
        let (theta, env, step) = refine_theta(
            self.eng,
            &mut self.cache,
            &self.grid,
            self.lambda,
            &target,
            seed,
            self.ramps[p].step,
            &bins,
            &gammas,
        )?;
        self.set_theta(p, theta, env, step)?;
        self.record("theta", false);
        Ok(())
    }

    fn iterate(&mut self) -> Result<()> {
        if self.eng.config.interference_enabled {
            for p in 0..self.p {
                self.ramp_step(p)?;
            }
            self.update_lambda()?;
        }
        self.refresh()?;
        self.record("weights", false);
        self.object_step()?;
        self.update_lambda()?;
        self.refresh()?;
        self.record("weights", false);
        Ok(())
    }

    fn ramp_step(&mut self, p: usize) -> Result<()> {
        let frozen = self.frozen();
        if self.ramp_columns(p).is_empty() {
            if frozen {
                return Ok(());
            }
            let target = self.theta_target(p);
            let (theta, env, step) = detect_theta(self.eng, &mut self.cache, &self.grid, self.lambda, &target)?;
            self.set_theta(p, theta, env, step)?;
        } else {
            self.refine(p)?;
        }
        if !frozen {
            let e = self.r - self.group.fitted();
            let ep = e.rows(p * self.n, self.n).into_owned();
            let rows = self.group.dict.rows(p * self.n, self.n).into_owned();
            let scan = scan_with_residual(&self.ramps[p].env, &rows, &self.group.cov, self.lambda, &ep, &self.grid);
            let active: Vec<usize> = self.ramp_columns(p).iter().map(|c| c.1).collect();
            let mut best: Option<(usize, f64, f64)> = None;
            let mut best_stat = f64::NEG_INFINITY;
            for (kk, (rho, omega2)) in scan.into_iter().enumerate() {
                if active.contains(&kk) || !(rho > 0.0) || !rho.is_finite() {
                    continue;
                }
                if omega2 / rho > best_stat {
                    best_stat = omega2 / rho;
                    best = Some((kk, rho, omega2));
                }
            }
            if let Some((kk, rho, omega2)) = best {
                let test = decide(rho, omega2, self.t_beta)?;
                if test.keep {
                    let col = self.padded(p, kk);
                    self.group.apply(None, &col, &test, self.lambda, true)?;
                    self.tags.push(Tag::Interference { ramp: p, bin: kk });
                    self.group.refresh_mean(self.lambda, self.r);
                    self.record("interference-add", true);
                }
            }
        }
        let mut idx = 0;
        while idx < self.tags.len() {
            if !matches!(self.tags[idx], Tag::Interference { ramp, .. } if ramp == p) {
                idx += 1;
                continue;
            }
            let col = self.group.dict.column(idx).into_owned();
            let test = self
                .group
                .test(self.lambda, self.r, Candidate::Existing { index: idx, column: &col }, self.t_beta)?;
            let changed = self.group.apply(Some(idx), &col, &test, self.lambda, !frozen)?;
            if changed {
                self.tags.remove(idx);
            } else {
                idx += 1;
            }
            self.group.refresh_mean(self.lambda, self.r);
            self.record("interference-test", changed);
        }
        self.refresh()?;
        if self.ramp_columns(p).is_empty() {
            self.ramps[p].theta = None;
            self.ramps[p].env = DVector::zeros(self.n);
        } else {
            self.refine(p)?;
        }
        Ok(())
    }

    fn object_step(&mut self) -> Result<()> {
        let settings = self.eng.config.zeta_refinement;
        let frozen = self.frozen();
        let (n, p, lambda) = (self.n, self.p, self.lambda);
        if !frozen {
            let ctx = ZetaContext::new(self.r, self.group.dict.clone(), self.group.cov.clone(), lambda, 0.0, n, p);
            let seed = propose_zeta(ctx.effective_residual(), n, p, settings.pad_factor);
            let (z, _) = estimate_zeta(&ctx, seed, &settings);
            let phi = steering(z, n, p);
            let test = self.group.test(lambda, self.r, Candidate::New(&phi), self.t_alpha)?;
            if self.group.apply(None, &phi, &test, lambda, true)? {
                self.tags.push(Tag::Object(z));
                self.group.refresh_mean(lambda, self.r);
                self.record("object-add", true);
            }
        }
        let mut idx = 0;
        while idx < self.tags.len() {
            let Tag::Object(z0) = self.tags[idx] else {
                idx += 1;
                continue;
            };
            let others = self.group.dict.clone().remove_column(idx);
            let cov_o = leave_one_out(&self.group.cov, idx);
            let ctx = ZetaContext::new(self.r, others, cov_o, lambda, self.group.gammas[idx], n, p);
            let (z, _) = estimate_zeta(&ctx, z0, &settings);
            if z != z0 {
                self.group.replace_column(idx, &steering(z, n, p), lambda)?;
                self.tags[idx] = Tag::Object(z);
                self.group.refresh_mean(lambda, self.r);
                self.record("zeta", false);
            }
            let col = self.group.dict.column(idx).into_owned();
            let test = self
                .group
                .test(lambda, self.r, Candidate::Existing { index: idx, column: &col }, self.t_alpha)?;
            let changed = self.group.apply(Some(idx), &col, &test, lambda, !frozen)?;
            if changed {
                self.tags.remove(idx);
            } else {
                idx += 1;
            }
            self.group.refresh_mean(lambda, self.r);
            self.record("object-test", changed);
        }
        Ok(())
    }

    fn finish(self, iterations: usize, converged: bool, elbo_trace: Vec<f64>) -> PosteriorState {
        // reorder: objects first, then ramps in order
        let mut order: Vec<usize> = (0..self.tags.len()).filter(|&i| matches!(self.tags[i], Tag::Object(_))).collect();
        let n_obj = order.len();
        let mut ramp_ranges = Vec::with_capacity(self.p);
        for p in 0..self.p {
            let start = order.len();
            order.extend(self.ramp_columns(p).iter().map(|c| c.0));
            ramp_ranges.push(start..order.len());
        }
        let cov = DMatrix::from_fn(order.len(), order.len(), |i, j| self.group.cov[(order[i], order[j])]);
        let mean = DVector::from_fn(order.len(), |i, _| self.group.mean[order[i]]);
        let gammas: Vec<f64> = order.iter().map(|&i| self.group.gammas[i]).collect();
        let zetas: Vec<Zeta> = order[..n_obj]
            .iter()
            .map(|&i| match self.tags[i] {
                Tag::Object(z) => z,
                Tag::Interference { .. } => unreachable!(),
            })
            .collect();
        let ramps = ramp_ranges
            .iter()
            .enumerate()
            .map(|(p, rg)| {
                let active: Vec<usize> = order[rg.clone()]
                    .iter()
                    .map(|&i| match self.tags[i] {
                        Tag::Interference { bin, .. } => bin,
                        Tag::Object(_) => unreachable!(),
                    })
                    .collect();
                RampPosterior {
                    chirp: if active.is_empty() { None } else { self.ramps[p].theta },
                    active,
                    beta_mean: mean.rows(rg.start, rg.len()).into_owned(),
                    beta_cov: cov.view((rg.start, rg.start), (rg.len(), rg.len())).into_owned(),
                    beta_precisions: gammas[rg.clone()].to_vec(),
                }
            })
            .collect();
        PosteriorState {
            object_zetas: zetas,
            alpha_mean: mean.rows(0, n_obj).into_owned(),
            alpha_cov: cov.view((0, 0), (n_obj, n_obj)).into_owned(),
            alpha_precisions: gammas[..n_obj].to_vec(),
            ramps,
            noise_precision: self.lambda,
            joint_cov: Some(cov),
            grid_size: self.k,
            iterations,
            converged,
            elbo_trace,
            ledger: self.ledger,
        }
    }
}
