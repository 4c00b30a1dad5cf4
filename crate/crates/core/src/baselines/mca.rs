//! Morphological component analysis with two tight frames: the unitary DFT and
//! a Hann-windowed STFT. Hard thresholds fall linearly from the largest
//! coefficient magnitude to a multiple of the noise scale.

use std::sync::Arc;

use nalgebra::DVector;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SignalFrame;
use crate::C64;

/// Which transform carries the object signal; the interference takes the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McaDomain {
    Dft,
    Stft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McaConfig {
    pub iterations: usize,
    /// STFT window length; `None` means N/8. Must be a multiple of 4.
    pub window_len: Option<usize>,
    /// Final threshold in units of the estimated noise standard deviation.
    pub lambda_min_sigmas: f64,
    pub object_domain: McaDomain,
    /// Redundancy of the DFT frame (zero-padding factor).
    pub dft_oversampling: usize,
}

impl Default for McaConfig {
    fn default() -> Self {
        McaConfig {
            iterations: 100,
            window_len: None,
            lambda_min_sigmas: 3.0,
            object_domain: McaDomain::Dft,
            dft_oversampling: 1,
        }
    }
}

impl McaConfig {
    pub fn window(&self, n: usize) -> usize {
        self.window_len.unwrap_or(n / 8)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let w = self.window(n);
        if w < 4 || w % 4 != 0 || w > n {
            return Err(Error::Config(format!(
                "STFT window {w} must be a positive multiple of 4 and at most N = {n}"
            )));
        }
        if self.dft_oversampling == 0 {
            return Err(Error::Config("dft_oversampling must be positive".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("MCA needs at least one iteration".into()));
        }
        if !(self.lambda_min_sigmas >= 0.0) {
            return Err(Error::Config("lambda_min_sigmas must be non-negative".into()));
        }
        Ok(())
    }
}

/// Zero-padded DFT of length N·Q scaled to a tight frame (unitary for Q = 1).
struct Dft {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl Dft {
    fn new(planner: &mut FftPlanner<f64>, n: usize, q: usize) -> Self {
        Dft {
            n,
            fwd: planner.plan_fft_forward(n * q),
            inv: planner.plan_fft_inverse(n * q),
            scale: 1.0 / ((n * q) as f64).sqrt(),
        }
    }

    fn analyze(&self, x: &[C64]) -> Vec<C64> {
        let mut buf = vec![C64::new(0.0, 0.0); self.fwd.len()];
        for (b, v) in buf.iter_mut().zip(x) {
            *b = v * self.scale;
        }
        self.fwd.process(&mut buf);
        buf
    }

    fn synthesize(&self, c: &[C64]) -> Vec<C64> {
        let mut buf: Vec<C64> = c.iter().map(|v| v * self.scale).collect();
        self.inv.process(&mut buf);
        buf.truncate(self.n);
        buf
    }
}

/// Hann STFT with hop W/4, frames overhanging both ends so every sample is
/// covered by four windows. The window is scaled so that Σ_m w²(n - mH) = 1,
/// which makes analysis an isometry and synthesis its adjoint.
pub struct Stft {
    n: usize,
    w: usize,
    hop: usize,
    window: Vec<f64>,
    starts: Vec<isize>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(n: usize, w: usize) -> Result<Self> {
        if w < 4 || w % 4 != 0 || w > n {
            return Err(Error::Config(format!("STFT window {w} invalid for N = {n}")));
        }
        let hop = w / 4;
        // periodic Hann: Σ over 4 shifts of sin⁴ is 3/2
        let norm = (1.0f64 / 1.5).sqrt() / (w as f64).sqrt();
        let window = (0..w)
            .map(|k| (std::f64::consts::PI * k as f64 / w as f64).sin().powi(2) * norm)
            .collect();
        let mut starts = Vec::new();
        let mut s = -((w - hop) as isize);
        while s < n as isize {
            starts.push(s);
            s += hop as isize;
        }
        let mut planner = FftPlanner::new();
        Ok(Stft {
            n,
            w,
            hop,
            window,
            starts,
            fwd: planner.plan_fft_forward(w),
            inv: planner.plan_fft_inverse(w),
        })
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn num_coefficients(&self) -> usize {
        self.starts.len() * self.w
    }

    pub fn analyze(&self, x: &[C64]) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.num_coefficients());
        let mut buf = vec![C64::new(0.0, 0.0); self.w];
        for &s in &self.starts {
            for (k, b) in buf.iter_mut().enumerate() {
                let i = s + k as isize;
                *b = if i >= 0 && (i as usize) < self.n {
                    x[i as usize] * self.window[k]
                } else {
                    C64::new(0.0, 0.0)
                };
            }
            self.fwd.process(&mut buf);
            out.extend_from_slice(&buf);
        }
        out
    }

    pub fn synthesize(&self, c: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.n];
        let mut buf = vec![C64::new(0.0, 0.0); self.w];
        for (m, &s) in self.starts.iter().enumerate() {
            buf.copy_from_slice(&c[m * self.w..(m + 1) * self.w]);
            self.inv.process(&mut buf);
            for (k, b) in buf.iter().enumerate() {
                let i = s + k as isize;
                if i >= 0 && (i as usize) < self.n {
                    out[i as usize] += b * self.window[k];
                }
            }
        }
        out
    }
}

fn hard_threshold(c: &mut [C64], level: f64) {
    for v in c.iter_mut() {
        if v.norm() <= level {
            *v = C64::new(0.0, 0.0);
        }
    }
}

fn max_abs(c: &[C64]) -> f64 {
    c.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Noise standard deviation (E|η|² = σ²) from the median coefficient magnitude,
/// assuming circular Gaussian noise dominates most coefficients.
fn mad_sigma(c: &[C64]) -> f64 {
    let mut mags: Vec<f64> = c.iter().map(|v| v.norm()).collect();
    mags.sort_by(|a, b| a.total_cmp(b));
    let med = if mags.is_empty() { 0.0 } else { mags[mags.len() / 2] };
    med / std::f64::consts::LN_2.sqrt()
}

fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Splits every ramp into (object, interference) estimates.
pub fn mca_separate(frame: &SignalFrame, cfg: &McaConfig) -> Result<(DVector<C64>, DVector<C64>)> {
    let n = frame.config.n_fast;
    cfg.validate(n)?;
    frame.check_finite()?;
    let mut planner = FftPlanner::new();
    let dft = Dft::new(&mut planner, n, cfg.dft_oversampling);
    let stft = Stft::new(n, cfg.window(n))?;
    let mut obj = DVector::zeros(frame.samples.len());
    let mut int = DVector::zeros(frame.samples.len());
    for p in 0..frame.config.n_ramps {
        let r: Vec<C64> = frame.ramp(p).iter().copied().collect();
        let (o, i) = separate_ramp(&r, &dft, &stft, cfg);
        obj.rows_mut(p * n, n).copy_from_slice(&o);
        int.rows_mut(p * n, n).copy_from_slice(&i);
    }
    Ok((obj, int))
}

fn separate_ramp(r: &[C64], dft: &Dft, stft: &Stft, cfg: &McaConfig) -> (Vec<C64>, Vec<C64>) {
    let n = r.len();
    let zero = vec![C64::new(0.0, 0.0); n];
    let stft_r = stft.analyze(r);
    let lambda_max = max_abs(&dft.analyze(r)).max(max_abs(&stft_r));
    if lambda_max == 0.0 {
        return (zero.clone(), zero);
    }
    let lambda_min = (cfg.lambda_min_sigmas * mad_sigma(&stft_r)).min(lambda_max);
    // a: object transform, b: interference transform
    let (a_an, a_syn, b_an, b_syn): (
        Box<dyn Fn(&[C64]) -> Vec<C64> + '_>,
        Box<dyn Fn(&[C64]) -> Vec<C64> + '_>,
        Box<dyn Fn(&[C64]) -> Vec<C64> + '_>,
        Box<dyn Fn(&[C64]) -> Vec<C64> + '_>,
    ) = match cfg.object_domain {
        McaDomain::Dft => (
            Box::new(|x| dft.analyze(x)),
            Box::new(|c| dft.synthesize(c)),
            Box::new(|x| stft.analyze(x)),
            Box::new(|c| stft.synthesize(c)),
        ),
        McaDomain::Stft => (
            Box::new(|x| stft.analyze(x)),
            Box::new(|c| stft.synthesize(c)),
            Box::new(|x| dft.analyze(x)),
            Box::new(|c| dft.synthesize(c)),
        ),
    };
    let mut obj = zero.clone();
    let mut int = zero;
    let iters = cfg.iterations;
    for it in 0..iters {
        let level = if iters == 1 {
            lambda_min
        } else {
            lambda_max - (lambda_max - lambda_min) * it as f64 / (iters - 1) as f64
        };
        let mut c = b_an(&sub(r, &obj));
        hard_threshold(&mut c, level);
        int = b_syn(&c);
        let mut c = a_an(&sub(r, &int));
        hard_threshold(&mut c, level);
        obj = a_syn(&c);
    }
    (obj, int)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RampConfig;
    use std::f64::consts::PI;

    fn tone(n: usize, f: f64, a: f64) -> Vec<C64> {
        (0..n).map(|k| C64::from_polar(a, 2.0 * PI * f * k as f64)).collect()
    }

    #[test]
    fn stft_is_isometric() {
        let n = 64;
        let s = Stft::new(n, 8).unwrap();
        let x: Vec<C64> = (0..n).map(|k| C64::new((k as f64 * 0.37).sin(), (k as f64 * 1.3).cos())).collect();
        let c = s.analyze(&x);
        let e_x: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        let e_c: f64 = c.iter().map(|v| v.norm_sqr()).sum();
        assert!((e_x - e_c).abs() < 1e-10 * e_x);
        let y = s.synthesize(&c);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn noise_free_tone_goes_to_object() {
        // a tone on a DFT bin, exactly sparse in the object frame
        let x = tone(256, 37.0 / 256.0, 1.0);
        let frame = SignalFrame::new(RampConfig::simulation1(), DVector::from_vec(x.clone())).unwrap();
        let cfg = McaConfig {
            iterations: 50,
            ..McaConfig::default()
        };
        let (o, i) = mca_separate(&frame, &cfg).unwrap();
        let x = DVector::from_vec(x);
        let captured = o.dotc(&x).norm_sqr() / x.norm_squared().powi(2);
        assert!(captured > 0.99, "{captured}");
        assert!((&x - &o - &i).norm() < x.norm());
    }

    #[test]
    fn zero_in_zero_out() {
        let frame = SignalFrame::zeros(RampConfig::simulation1());
        let (o, i) = mca_separate(&frame, &McaConfig::default()).unwrap();
        assert_eq!(o.norm(), 0.0);
        assert_eq!(i.norm(), 0.0);
    }

    #[test]
    fn rejects_bad_window() {
        let cfg = McaConfig {
            window_len: Some(6),
            ..McaConfig::default()
        };
        assert!(cfg.validate(64).is_err());
    }
}
