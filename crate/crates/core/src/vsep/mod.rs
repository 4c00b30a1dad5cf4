//! Variational signal separation.
//!
//! The received frame is modelled as r = Φ(ζ)α + U(θ)Ψβ + η. Objects share one
//! sparse weight block over all ramps; every interfered ramp carries its own
//! block over the delay grid, modulated by the envelope U(θ^(p)). Inference
//! starts from empty dictionaries and alternates, per iteration:
//!
//! 1. per ramp: θ update, then the interference subroutine (add the best grid
//!    column if it passes the fast test, re-test all active ones, refresh β̂, θ);
//! 2. noise precision;
//! 3. object residual, q(α), then the object subroutine (propose one component
//!    from the zero-padded 2D DFT of the residual, refine ζ, fast test; then
//!    re-estimate ζ and re-test every active component);
//! 4. noise precision;
//! 5. interference residual and q(β).
//!
//! The ELBO is evaluated after each iteration for convergence; with
//! `record_ledger` it is also recorded after every coordinate step.

mod elbo;
mod engine;
mod joint;
pub mod optim;
pub mod sbl;
pub mod theta;
pub mod zeta;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    grid_frequency, nearest_grid_index, AafModel, ChirpParams, InterferenceBurst, ObjectComponent, RampConfig,
    SignalFrame, Zeta,
};
use crate::C64;

pub use elbo::{group_term, noise_term};
pub use engine::{initial_noise_precision, update_noise_precision};
pub use sbl::{
    db_to_lin, decide, fast_component_test, leave_one_out, Candidate, FastTest, WeightGroup, PRECISION_CAP,
};
pub use theta::{
    grid_columns, group_evidence, group_evidence_on_grid, modulate, ramp_dictionary, CoarseGridSize, GridTransform, ThetaBox, ThetaRefinement, ThetaSpace,
};
pub use zeta::{estimate_zeta, propose_zeta, ZetaContext, ZetaRefinement};

/// Inference settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VsepConfig {
    /// T_α in dB.
    pub threshold_object_db: f64,
    /// T_β in dB.
    pub threshold_interference_db: f64,
    pub max_iterations: usize,
    /// Relative ELBO change below which an iteration counts as converged.
    pub convergence_tol: f64,
    /// Consecutive converged iterations required to stop.
    pub convergence_patience: usize,
    /// Delay grid size K; `None` means 2N.
    pub grid_size_k: Option<usize>,
    pub theta_box: ThetaBox,
    pub theta_coarse_grid: CoarseGridSize,
    pub theta_refinement: ThetaRefinement,
    pub zeta_refinement: ZetaRefinement,
    /// Disable the interference branch (object-only inference).
    pub interference_enabled: bool,
    /// Stop adding and pruning components after this many iterations.
    pub freeze_support_after: Option<usize>,
    /// Record the ELBO after every coordinate step.
    pub record_ledger: bool,
    /// One concatenated dictionary [Φ, UΨ] with a joint covariance instead of
    /// separate object and interference factors.
    #[serde(default)]
    pub joint_dictionary: bool,
}

impl Default for VsepConfig {
    fn default() -> Self {
        VsepConfig {
            threshold_object_db: 9.0,
            threshold_interference_db: 3.0,
            max_iterations: 50,
            convergence_tol: 1e-6,
            convergence_patience: 3,
            grid_size_k: None,
            theta_box: ThetaBox::default(),
            theta_coarse_grid: CoarseGridSize::default(),
            theta_refinement: ThetaRefinement::default(),
            zeta_refinement: ZetaRefinement::default(),
            interference_enabled: true,
            freeze_support_after: None,
            record_ledger: false,
            joint_dictionary: false,
        }
    }
}

impl VsepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_object_db > 0.0 && self.threshold_interference_db > 0.0) {
            return Err(Error::Config("thresholds must be above 0 dB".into()));
        }
        if self.threshold_object_db < self.threshold_interference_db {
            return Err(Error::Config(format!(
                "object threshold {} dB below interference threshold {} dB",
                self.threshold_object_db, self.threshold_interference_db
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::Config("convergence_tol must be positive".into()));
        }
        if self.zeta_refinement.pad_factor == 0 {
            return Err(Error::Config("zeta pad_factor must be positive".into()));
        }
        Ok(())
    }

    pub fn grid_size(&self, n_fast: usize) -> usize {
        self.grid_size_k.unwrap_or(2 * n_fast)
    }
}

/// Posterior of one ramp's interference block.
#[derive(Debug, Clone)]
pub struct RampPosterior {
    /// Active grid bins, in dictionary order.
    pub active: Vec<usize>,
    pub beta_mean: DVector<C64>,
    pub beta_cov: DMatrix<C64>,
    pub beta_precisions: Vec<f64>,
    /// `None` for a ramp declared interference-free.
    pub chirp: Option<ChirpParams>,
}

/// One entry of the per-step ELBO ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub iteration: usize,
    pub step: String,
    pub elbo: f64,
    /// The step added or removed a component.
    pub support_changed: bool,
}

/// Result of inference.
#[derive(Debug, Clone)]
pub struct PosteriorState {
    pub object_zetas: Vec<Zeta>,
    pub alpha_mean: DVector<C64>,
    pub alpha_cov: DMatrix<C64>,
    pub alpha_precisions: Vec<f64>,
    pub ramps: Vec<RampPosterior>,
    pub noise_precision: f64,
    /// Full covariance of the joint-dictionary variant, objects first.
    pub joint_cov: Option<DMatrix<C64>>,
    pub grid_size: usize,
    pub iterations: usize,
    pub converged: bool,
    pub elbo_trace: Vec<f64>,
    pub ledger: Vec<LedgerEntry>,
}

impl PosteriorState {
    pub fn num_objects(&self) -> usize {
        self.object_zetas.len()
    }

    pub fn objects(&self) -> Vec<ObjectComponent> {
        self.object_zetas
            .iter()
            .zip(self.alpha_mean.iter())
            .map(|(z, w)| ObjectComponent { zeta: *z, weight: *w })
            .collect()
    }

    /// Estimated bursts (interfered ramps only).
    pub fn bursts(&self) -> Vec<InterferenceBurst> {
        self.ramps
            .iter()
            .enumerate()
            .filter_map(|(p, r)| {
                let chirp = r.chirp?;
                if r.active.is_empty() {
                    return None;
                }
                Some(InterferenceBurst {
                    ramp_index: p,
                    chirp,
                    grid_indices: r.active.clone(),
                    freqs: r.active.iter().map(|&k| grid_frequency(k, self.grid_size)).collect(),
                    weights: r.beta_mean.iter().copied().collect(),
                })
            })
            .collect()
    }

    /// Total number of active interference components.
    pub fn num_interference_components(&self) -> usize {
        self.ramps.iter().map(|r| r.active.len()).sum()
    }
}

/// Reusable inference engine: configuration plus precomputed θ search tables.
pub struct VsepEngine {
    pub config: VsepConfig,
    pub space: Arc<ThetaSpace>,
}

impl VsepEngine {
    pub fn new(config: VsepConfig, ramp: RampConfig, aaf: AafModel) -> Result<Self> {
        config.validate()?;
        ramp.validate()?;
        aaf.validate(ramp.f_s)?;
        let space = ThetaSpace::new(ramp, aaf, config.theta_box, config.theta_coarse_grid)?;
        Ok(VsepEngine {
            config,
            space: Arc::new(space),
        })
    }

    /// Engine sharing another engine's θ tables (same ramp, AAF and box).
    pub fn with_space(config: VsepConfig, space: Arc<ThetaSpace>) -> Result<Self> {
        config.validate()?;
        if config.theta_box != space.bounds {
            return Err(Error::Config("θ box differs from the shared search tables".into()));
        }
        Ok(VsepEngine { config, space })
    }

    pub fn ramp(&self) -> &RampConfig {
        &self.space.config
    }

    pub fn run(&self, frame: &SignalFrame) -> Result<PosteriorState> {
        engine::run(self, frame)
    }
}

/// Runs inference on one frame with a freshly built engine.
pub fn run_vsep(frame: &SignalFrame, config: &VsepConfig, aaf: &AafModel) -> Result<PosteriorState> {
    VsepEngine::new(config.clone(), frame.config, aaf.clone())?.run(frame)
}

/// q(α) for target `residual`: (α̂, Ĉ_α).
pub fn update_object_weights(
    dict: &DMatrix<C64>,
    gammas: &[f64],
    lambda: f64,
    residual: &DVector<C64>,
) -> Result<(DVector<C64>, DMatrix<C64>)> {
    check_group_dims(dict, gammas, residual)?;
    let mut g = WeightGroup {
        dict: dict.clone(),
        gammas: gammas.to_vec(),
        cov: DMatrix::zeros(0, 0),
        mean: DVector::zeros(0),
    };
    g.refresh(lambda, residual)?;
    Ok((g.mean, g.cov))
}

/// q(β^(p)) for every ramp; `ramps[p]` = (envelope, active bins, precisions).
/// Empty ramps yield empty blocks.
pub fn update_interference_weights(
    ramps: &[(DVector<C64>, Vec<usize>, Vec<f64>)],
    grid_size: usize,
    lambda: f64,
    residual: &DVector<C64>,
) -> Result<Vec<(DVector<C64>, DMatrix<C64>)>> {
    let n_ramps = ramps.len();
    if n_ramps == 0 || residual.len() % n_ramps != 0 {
        return Err(Error::Input("residual length is not a multiple of the ramp count".into()));
    }
    let n = residual.len() / n_ramps;
    ramps
        .iter()
        .enumerate()
        .map(|(p, (env, bins, gammas))| {
            if bins.is_empty() {
                return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
            }
            let d = ramp_dictionary(env, bins, grid_size);
            let rp = residual.rows(p * n, n).into_owned();
            update_object_weights(&d, gammas, lambda, &rp)
        })
        .collect()
}

fn check_group_dims(dict: &DMatrix<C64>, gammas: &[f64], residual: &DVector<C64>) -> Result<()> {
    if dict.ncols() != gammas.len() || dict.nrows() != residual.len() {
        return Err(Error::Input("dictionary, precisions and residual sizes disagree".into()));
    }
    if gammas.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::Input("precisions must be non-negative".into()));
    }
    Ok(())
}

/// Grid bin of a normalized delay frequency, for reporting.
pub fn grid_bin(freq: f64, grid_size: usize) -> usize {
    nearest_grid_index(freq, grid_size)
}
