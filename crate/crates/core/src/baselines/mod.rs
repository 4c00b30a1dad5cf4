//! Comparison methods: ideal zeroing, MCA preprocessing, object-only inference
//! and the joint-dictionary variant. Preprocessed frames are handed to
//! object-only inference, so every method ends in a [`PosteriorState`].

mod mca;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{AafModel, SignalFrame};
use crate::vsep::{PosteriorState, VsepConfig, VsepEngine};
use crate::C64;

pub use mca::{mca_separate, McaConfig, McaDomain, Stft};

/// Samples flagged as interfered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterferenceMask {
    pub mask: Vec<bool>,
}

impl InterferenceMask {
    /// Marks every sample where the true interference magnitude exceeds
    /// `sigmas` noise standard deviations (E|η|² = 1/λ).
    pub fn from_truth(interference: &DVector<C64>, noise_precision: f64, sigmas: f64) -> Result<Self> {
        if !(noise_precision > 0.0) {
            return Err(Error::Domain(format!("noise precision {noise_precision} must be positive")));
        }
        let level = sigmas / noise_precision.sqrt();
        Ok(InterferenceMask {
            mask: interference.iter().map(|v| v.norm() > level).collect(),
        })
    }

    /// Mask of a synthetic frame with its decomposition attached.
    pub fn from_frame(frame: &SignalFrame, noise_precision: f64, sigmas: f64) -> Result<Self> {
        let parts = frame
            .parts
            .as_ref()
            .ok_or_else(|| Error::Input("ideal zeroing needs the true interference part".into()))?;
        Self::from_truth(&parts.interference, noise_precision, sigmas)
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

/// Sets masked samples to zero. The decomposition, if any, is dropped.
pub fn zeroing(frame: &SignalFrame, mask: &InterferenceMask) -> Result<SignalFrame> {
    if mask.mask.len() != frame.samples.len() {
        return Err(Error::Input(format!(
            "mask has {} entries, frame {}",
            mask.mask.len(),
            frame.samples.len()
        )));
    }
    let mut out = frame.samples.clone();
    for (v, m) in out.iter_mut().zip(&mask.mask) {
        if *m {
            *v = C64::new(0.0, 0.0);
        }
    }
    SignalFrame::new(frame.config, out)
}

/// Inference with the interference branch removed.
pub fn object_only_vsep(frame: &SignalFrame, config: &VsepConfig, aaf: &AafModel) -> Result<PosteriorState> {
    let mut cfg = config.clone();
    cfg.interference_enabled = false;
    crate::vsep::run_vsep(frame, &cfg, aaf)
}

/// Inference with one concatenated dictionary and a joint covariance.
pub fn joint_dictionary_vsep(frame: &SignalFrame, config: &VsepConfig, aaf: &AafModel) -> Result<PosteriorState> {
    let mut cfg = config.clone();
    cfg.joint_dictionary = true;
    crate::vsep::run_vsep(frame, &cfg, aaf)
}

/// Ideal zeroing followed by object-only inference.
pub fn zeroing_then_detect(frame: &SignalFrame, mask: &InterferenceMask, engine: &VsepEngine) -> Result<PosteriorState> {
    check_object_only(engine)?;
    engine.run(&zeroing(frame, mask)?)
}

/// MCA interference removal followed by object-only inference on r - î.
pub fn mca_then_detect(frame: &SignalFrame, mca: &McaConfig, engine: &VsepEngine) -> Result<PosteriorState> {
    check_object_only(engine)?;
    let (_, interference) = mca_separate(frame, mca)?;
    engine.run(&SignalFrame::new(frame.config, &frame.samples - interference)?)
}

fn check_object_only(engine: &VsepEngine) -> Result<()> {
    if engine.config.interference_enabled {
        return Err(Error::Config("preprocessing baselines expect an object-only engine".into()));
    }
    Ok(())
}
