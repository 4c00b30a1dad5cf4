use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack when checking that the sampled window fits in the sweep.
const SWEEP_FIT_TOL: f64 = 1e-9;

/// Victim ramp parameters.
///
/// The sampled window spans `(n_fast - 1) / f_s` seconds and must fit inside
/// the sweep duration `t_sw`, which in turn must fit inside the ramp period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampConfig {
    /// Start frequency in Hz.
    pub f0: f64,
    /// Chirp slope in Hz/s.
    pub slope_k: f64,
    /// Sweep duration in s.
    pub t_sw: f64,
    /// Ramp repetition period in s.
    pub t_p: f64,
    /// Fast-time samples per ramp (N).
    pub n_fast: usize,
    /// Ramps per frame (P).
    pub n_ramps: usize,
    /// Sampling frequency in Hz.
    pub f_s: f64,
}

impl RampConfig {
    pub fn new(
        f0: f64,
        slope_k: f64,
        t_sw: f64,
        t_p: f64,
        n_fast: usize,
        n_ramps: usize,
        f_s: f64,
    ) -> Result<Self> {
        let cfg = RampConfig {
            f0,
            slope_k,
            t_sw,
            t_p,
            n_fast,
            n_ramps,
            f_s,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("f0", self.f0),
            ("slope_k", self.slope_k),
            ("t_sw", self.t_sw),
            ("t_p", self.t_p),
            ("f_s", self.f_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.n_fast < 2 {
            return Err(Error::Config(format!("n_fast must be at least 2, got {}", self.n_fast)));
        }
        if self.n_ramps < 1 {
            return Err(Error::Config("n_ramps must be at least 1".into()));
        }
        let window = (self.n_fast - 1) as f64 / self.f_s;
        if window > self.t_sw * (1.0 + SWEEP_FIT_TOL) {
            return Err(Error::Config(format!(
                "sampled window {window:e} s exceeds sweep duration {:e} s",
                self.t_sw
            )));
        }
        if self.t_sw > self.t_p * (1.0 + SWEEP_FIT_TOL) {
            return Err(Error::Config(format!(
                "sweep duration {:e} s exceeds ramp period {:e} s",
                self.t_sw, self.t_p
            )));
        }
        Ok(())
    }

    /// Sampling interval T_s.
    pub fn t_s(&self) -> f64 {
        1.0 / self.f_s
    }

    /// Total number of samples N·P.
    pub fn len(&self) -> usize {
        self.n_fast * self.n_ramps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Duration of the sampled window, (N-1)·T_s.
    pub fn observation_time(&self) -> f64 {
        (self.n_fast - 1) as f64 / self.f_s
    }

    /// Flat index of fast-time sample `n` on ramp `p`.
    pub fn index(&self, p: usize, n: usize) -> usize {
        p * self.n_fast + n
    }

    /// Single-ramp setup used for the interference-separation experiments.
    pub fn simulation1() -> Self {
        RampConfig {
            f0: 79e9,
            slope_k: 1e13,
            t_sw: 25e-6,
            t_p: 25e-6,
            n_fast: 256,
            n_ramps: 1,
            f_s: 10.2e6,
        }
    }

    /// Multi-ramp setup used for the detection experiments.
    pub fn simulation2() -> Self {
        RampConfig {
            f0: 79e9,
            slope_k: 1e13,
            t_sw: 25e-6,
            t_p: 25e-6,
            n_fast: 128,
            n_ramps: 16,
            f_s: 5.1e6,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        RampConfig::simulation1().validate().unwrap();
        RampConfig::simulation2().validate().unwrap();
        assert_eq!(RampConfig::simulation1().len(), 256);
        assert_eq!(RampConfig::simulation2().len(), 2048);
    }

    #[test]
    fn rejects_window_longer_than_sweep() {
        let mut c = RampConfig::simulation1();
        c.n_fast = 300;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_sweep_longer_than_period() {
        let mut c = RampConfig::simulation1();
        c.t_sw = 30e-6;
        c.n_fast = 200;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_nonpositive() {
        let mut c = RampConfig::simulation2();
        c.f_s = 0.0;
        assert!(c.validate().is_err());
        let mut c = RampConfig::simulation2();
        c.n_ramps = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn index_is_fast_time_major() {
        let c = RampConfig::simulation2();
        assert_eq!(c.index(0, 5), 5);
        assert_eq!(c.index(3, 5), 3 * 128 + 5);
    }
}
