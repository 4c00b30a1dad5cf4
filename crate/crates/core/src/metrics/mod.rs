//! Evaluation: SNR/SIR, beat-frequency CRLB, cutoff-capped assignment metrics
//! and the object/interference coherence condition.

mod crlb;
mod gospa;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{steering, RampConfig, Zeta};
use crate::synth::{synth_object, GroundTruth, Generator};
use crate::vsep::PosteriorState;

pub use crlb::{
    crlb_beat_frequencies, crlb_beat_frequency, crlb_single_tone, fisher_information, invert_fim, jacobian,
    FdSteps, JacobianMode, ParamLayout,
};
pub use gospa::{gospa_assign, gospa_eval, hungarian, zeta_distance, GospaResult};

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// λ‖Φα̃‖² in dB.
pub fn snr_of(truth: &GroundTruth, config: &RampConfig) -> f64 {
    db(truth.noise_precision * synth_object(&truth.objects, config).norm_squared())
}

/// ‖Φα̃‖²/‖UΨβ̃‖² in dB (+∞ without interference).
pub fn sir_of(truth: &GroundTruth, config: &RampConfig, generator: &Generator) -> Result<f64> {
    let e_obj = synth_object(&truth.objects, config).norm_squared();
    let e_int = generator.interference(&truth.bursts, config)?.norm_squared();
    Ok(db(e_obj / e_int))
}

/// (‖Φ̃ᴴΦ̃α̃‖, ‖Φ̃ᴴU(θ̃)Ψ̃β̃‖): how much of the interference leaks into the
/// span of the true object dictionary, compared with the object itself.
pub fn coherence_measure(truth: &GroundTruth, config: &RampConfig, generator: &Generator) -> Result<(f64, f64)> {
    let l = truth.objects.len();
    if l == 0 {
        return Err(Error::Input("coherence needs at least one true object".into()));
    }
    let mut phi = DMatrix::zeros(config.len(), l);
    for (i, o) in truth.objects.iter().enumerate() {
        phi.set_column(i, &steering(o.zeta.wrapped(), config.n_fast, config.n_ramps));
    }
    let alpha = DVector::from_iterator(l, truth.objects.iter().map(|o| o.weight));
    let lhs = phi.ad_mul(&(&phi * alpha)).norm();
    let interference = generator.interference(&truth.bursts, config)?;
    let rhs = phi.ad_mul(&interference).norm();
    Ok((lhs, rhs))
}

/// Default assignment cutoff, 3/N in normalized beat frequency.
pub fn default_cutoff(n_fast: usize) -> f64 {
    3.0 / n_fast as f64
}

/// Per-trial evaluation of one method's estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Root mean squared distance over assigned pairs (normalized frequency).
    pub rmse_assigned: f64,
    /// Mean distance over assigned pairs.
    pub mean_assigned_error: f64,
    pub n_misdetections: usize,
    pub n_false_alarms: usize,
    /// Assigned true objects over all true objects.
    pub detection_rate: f64,
    /// Estimated object count equals the true one.
    pub order_correct: bool,
    pub n_objects_est: usize,
    pub n_interference_est: usize,
    /// Root of the mean beat-frequency CRLB over the true objects.
    pub crlb_root: Option<f64>,
    /// ‖Φ̃ᴴUΨ̃β̃‖ / ‖Φ̃ᴴΦ̃α̃‖.
    pub coherence_value: Option<f64>,
    pub runtime_ms: f64,
}

impl MetricsReport {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.detection_rate) {
            return Err(Error::Invariant(format!("detection rate {} outside [0, 1]", self.detection_rate)));
        }
        Ok(())
    }
}

/// Options of [`evaluate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub cutoff: f64,
    pub with_crlb: bool,
    pub with_coherence: bool,
}

/// Scores an estimate against the ground truth. The CRLB is computed with the
/// inference AAF; a singular FIM leaves it unset instead of failing the trial.
pub fn evaluate(
    truth: &GroundTruth,
    est: &PosteriorState,
    config: &RampConfig,
    generator: &Generator,
    inference_aaf: &crate::model::AafModel,
    opts: EvalOptions,
    runtime_ms: f64,
) -> Result<MetricsReport> {
    let true_z: Vec<Zeta> = truth.objects.iter().map(|o| o.zeta).collect();
    let g = gospa_eval(&true_z, &est.object_zetas, opts.cutoff, 2.0);
    let crlb_root = if opts.with_crlb && !truth.objects.is_empty() {
        crlb_beat_frequencies(truth, config, inference_aaf)
            .ok()
            .map(|v| (v.iter().sum::<f64>() / v.len() as f64).sqrt())
    } else {
        None
    };
    let coherence_value = if opts.with_coherence && !truth.objects.is_empty() {
        let (lhs, rhs) = coherence_measure(truth, config, generator)?;
        Some(rhs / lhs)
    } else {
        None
    };
    let report = MetricsReport {
        rmse_assigned: g.rms_assigned_error,
        mean_assigned_error: g.mean_assigned_error,
        n_misdetections: g.n_misdetections,
        n_false_alarms: g.n_false_alarms,
        detection_rate: if true_z.is_empty() { 1.0 } else { g.n_assigned as f64 / true_z.len() as f64 },
        order_correct: est.object_zetas.len() == true_z.len(),
        n_objects_est: est.object_zetas.len(),
        n_interference_est: est.num_interference_components(),
        crlb_root,
        coherence_value,
        runtime_ms,
    };
    report.validate()?;
    Ok(report)
}
