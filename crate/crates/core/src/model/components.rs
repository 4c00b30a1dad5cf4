use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RampConfig;
use crate::C64;

/// Normalized object frequencies: beat φ·T_s and Doppler ν·T_p, each in [-1/2, 1/2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zeta {
    pub beat: f64,
    pub doppler: f64,
}

impl Zeta {
    pub fn new(beat: f64, doppler: f64) -> Self {
        Zeta { beat, doppler }
    }

    pub fn check(&self) -> Result<()> {
        for (name, v) in [("beat", self.beat), ("doppler", self.doppler)] {
            if !v.is_finite() || !(-0.5..0.5).contains(&v) {
                return Err(Error::Domain(format!(
                    "normalized {name} frequency {v} outside [-1/2, 1/2)"
                )));
            }
        }
        Ok(())
    }

    /// Both coordinates wrapped into [-1/2, 1/2).
    pub fn wrapped(&self) -> Self {
        Zeta {
            beat: wrap_half(self.beat),
            doppler: wrap_half(self.doppler),
        }
    }
}

/// Wraps a normalized frequency into [-1/2, 1/2).
pub fn wrap_half(x: f64) -> f64 {
    let y = x - x.round();
    if y >= 0.5 {
        y - 1.0
    } else {
        y
    }
}

/// One point-like object: normalized frequencies and complex weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectComponent {
    pub zeta: Zeta,
    pub weight: C64,
}

/// Demixed interference chirp parameters θ = (Δf0, Δk) on one victim ramp.
///
/// The demixed instantaneous frequency is `Δf0 + Δk·t`; it crosses zero at
/// `t_c = -Δf0/Δk`, which is where the burst sits in the ramp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpParams {
    pub delta_f0: f64,
    pub delta_k: f64,
}

impl ChirpParams {
    pub fn new(delta_f0: f64, delta_k: f64) -> Self {
        ChirpParams { delta_f0, delta_k }
    }

    pub fn from_crossing(t_c: f64, delta_k: f64) -> Self {
        ChirpParams {
            delta_f0: -delta_k * t_c,
            delta_k,
        }
    }

    pub fn crossing_time(&self) -> f64 {
        -self.delta_f0 / self.delta_k
    }
}

/// Interference on a single ramp: a chirp envelope shared by a few delay components.
///
/// Estimated bursts only use grid frequencies. Synthetic ground truth may carry
/// off-grid delay frequencies in `freqs`; `grid_indices` then holds the nearest
/// grid bins for reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceBurst {
    pub ramp_index: usize,
    pub chirp: ChirpParams,
    pub grid_indices: Vec<usize>,
    /// Normalized delay frequencies ϑ·T_s of the components, same order as `weights`.
    pub freqs: Vec<f64>,
    pub weights: Vec<C64>,
}

impl InterferenceBurst {
    pub fn validate(&self, grid_size: usize, n_ramps: usize) -> Result<()> {
        if self.ramp_index >= n_ramps {
            return Err(Error::Invariant(format!(
                "burst ramp index {} >= {n_ramps}",
                self.ramp_index
            )));
        }
        if self.freqs.len() != self.weights.len() || self.grid_indices.len() != self.weights.len()
        {
            return Err(Error::Invariant("burst component vectors differ in length".into()));
        }
        let mut seen = vec![false; grid_size];
        for &k in &self.grid_indices {
            if k >= grid_size || seen[k] {
                return Err(Error::Invariant(format!("bad or duplicate grid index {k}")));
            }
            seen[k] = true;
        }
        Ok(())
    }
}

/// Ground-truth decomposition of a synthetic frame.
#[derive(Debug, Clone)]
pub struct FrameParts {
    pub object: DVector<C64>,
    pub interference: DVector<C64>,
    pub noise: DVector<C64>,
}

/// A received frame `r` with its geometry, stored fast-time-major (index p·N + n).
#[derive(Debug, Clone)]
pub struct SignalFrame {
    pub config: RampConfig,
    pub samples: DVector<C64>,
    pub parts: Option<FrameParts>,
}

impl SignalFrame {
    pub fn new(config: RampConfig, samples: DVector<C64>) -> Result<Self> {
        if samples.len() != config.len() {
            return Err(Error::Input(format!(
                "frame has {} samples, expected N·P = {}",
                samples.len(),
                config.len()
            )));
        }
        Ok(SignalFrame {
            config,
            samples,
            parts: None,
        })
    }

    /// Frame assembled as object + interference + noise, keeping the parts.
    pub fn from_parts(config: RampConfig, parts: FrameParts) -> Result<Self> {
        let n = config.len();
        if parts.object.len() != n || parts.interference.len() != n || parts.noise.len() != n {
            return Err(Error::Input("frame parts differ from N·P in length".into()));
        }
        let samples = &parts.object + &parts.interference + &parts.noise;
        Ok(SignalFrame {
            config,
            samples,
            parts: Some(parts),
        })
    }

    pub fn zeros(config: RampConfig) -> Self {
        SignalFrame {
            config,
            samples: DVector::zeros(config.len()),
            parts: None,
        }
    }

    pub fn ramp(&self, p: usize) -> nalgebra::DVectorView<'_, C64> {
        let n = self.config.n_fast;
        self.samples.rows(p * n, n)
    }

    pub fn check_finite(&self) -> Result<()> {
        if let Some(i) = self.samples.iter().position(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(Error::Input(format!("non-finite sample at index {i}")));
        }
        Ok(())
    }
}
