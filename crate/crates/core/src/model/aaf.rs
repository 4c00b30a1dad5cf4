//! Anti-aliasing filter models and the chirp-modulated transfer function Ḡ.
//!
//! Ḡ(f) is the Fourier transform of g(t)·exp(jπΔk t²). It is computed by
//! sampling g on a grid eight times finer than the ADC rate, applying the
//! quadratic phase, and taking a dense FFT. Evaluation interpolates linearly
//! and returns zero beyond the tabulated band (±4·f_s), where every supported
//! filter is negligible.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Time-grid oversampling relative to f_s used for Ḡ.
pub const GBAR_OVERSAMPLING: usize = 8;
/// Minimum FFT length for Ḡ; gives a frequency step of f_s/1024.
const GBAR_MIN_FFT: usize = 8192;
/// Ḡ is tabulated on |f| <= GBAR_SPAN·f_s and taken as zero beyond.
const GBAR_SPAN: f64 = 2.0;
/// Raised-cosine impulse response is truncated at this many symbol periods.
const RC_SUPPORT_PERIODS: f64 = 64.0;
/// Butterworth response is truncated after exp(-40) decay of its slowest pole.
const BUTTERWORTH_DECAY: f64 = 40.0;

/// Receiver anti-aliasing filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AafModel {
    /// Ideal, G ≡ 1.
    AllPass,
    /// Zero-phase raised cosine: flat up to (1-β)·B, zero beyond (1+β)·B.
    RaisedCosine { nyquist_bw: f64, rolloff: f64 },
    /// Causal analog Butterworth lowpass, -3 dB at `cutoff`.
    Butterworth { order: usize, cutoff: f64 },
    /// Linearly interpolated samples of G on an ascending frequency grid.
    Tabulated { freqs: Vec<f64>, values: Vec<C64> },
}

/// g(t) sampled at `t0 + m·dt`, with per-tap quadrature weights folded in.
pub(crate) struct SampledImpulse {
    pub t0: f64,
    pub dt: f64,
    pub taps: Vec<C64>,
}

impl AafModel {
    /// Raised cosine with Nyquist bandwidth f_s/4 and roll-off 0.25.
    pub fn default_raised_cosine(f_s: f64) -> Self {
        AafModel::RaisedCosine {
            nyquist_bw: f_s / 4.0,
            rolloff: 0.25,
        }
    }

    /// Eighth-order Butterworth with its -3 dB point at the raised cosine's Nyquist bandwidth.
    pub fn matched_butterworth(f_s: f64) -> Self {
        AafModel::Butterworth {
            order: 8,
            cutoff: f_s / 4.0,
        }
    }

    pub fn validate(&self, f_s: f64) -> Result<()> {
        match self {
            AafModel::AllPass => Ok(()),
            AafModel::RaisedCosine { nyquist_bw, rolloff } => {
                if !(nyquist_bw.is_finite() && *nyquist_bw > 0.0) {
                    return Err(Error::Config(format!("raised-cosine bandwidth {nyquist_bw} must be positive")));
                }
                if !(*rolloff > 0.0 && *rolloff <= 1.0) {
                    return Err(Error::Config(format!("raised-cosine roll-off {rolloff} outside (0, 1]")));
                }
                Ok(())
            }
            AafModel::Butterworth { order, cutoff } => {
                if *order == 0 || *order > 32 {
                    return Err(Error::Config(format!("Butterworth order {order} outside 1..=32")));
                }
                if !(cutoff.is_finite() && *cutoff > 0.0) {
                    return Err(Error::Config(format!("Butterworth cutoff {cutoff} must be positive")));
                }
                Ok(())
            }
            AafModel::Tabulated { freqs, values } => {
                if freqs.len() != values.len() || freqs.len() < 2 {
                    return Err(Error::Config("tabulated AAF needs matching grids of at least 2 points".into()));
                }
                if freqs.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Config("tabulated AAF frequencies must be strictly ascending".into()));
                }
                let span = freqs[freqs.len() - 1] - freqs[0];
                if span < 4.0 * f_s {
                    return Err(Error::Config(format!(
                        "tabulated AAF spans {span:e} Hz, below 4·f_s = {:e} Hz",
                        4.0 * f_s
                    )));
                }
                Ok(())
            }
        }
    }

    /// G(f).
    pub fn transfer(&self, f: f64) -> C64 {
        match self {
            AafModel::AllPass => C64::new(1.0, 0.0),
            AafModel::RaisedCosine { nyquist_bw, rolloff } => {
                C64::new(raised_cosine_spectrum(f, *nyquist_bw, *rolloff), 0.0)
            }
            AafModel::Butterworth { order, cutoff } => {
                let poles = butterworth_poles(*order, *cutoff);
                let s = C64::new(0.0, 2.0 * PI * f);
                poles.iter().fold(C64::new(1.0, 0.0), |acc, &p| acc * (-p) / (s - p))
            }
            AafModel::Tabulated { freqs, values } => interp(freqs, values, f),
        }
    }

    /// Samples of g on a grid of spacing 1/(oversampling·f_s) covering its effective support.
    pub(crate) fn sampled_impulse(&self, f_s: f64, oversampling: usize) -> Result<SampledImpulse> {
        self.validate(f_s)?;
        let dt = 1.0 / (oversampling as f64 * f_s);
        match self {
            AafModel::AllPass => Ok(SampledImpulse {
                t0: 0.0,
                dt,
                taps: vec![C64::new(1.0, 0.0)],
            }),
            AafModel::RaisedCosine { nyquist_bw, rolloff } => {
                let period = 1.0 / (2.0 * nyquist_bw);
                let half = (RC_SUPPORT_PERIODS * period / dt).ceil() as i64;
                let taps = (-half..=half)
                    .map(|m| C64::new(raised_cosine_impulse(m as f64 * dt, period, *rolloff) * dt, 0.0))
                    .collect();
                Ok(SampledImpulse {
                    t0: -half as f64 * dt,
                    dt,
                    taps,
                })
            }
            AafModel::Butterworth { order, cutoff } => {
                let (poles, residues) = butterworth_partial_fractions(*order, *cutoff);
                let slowest = poles.iter().map(|p| -p.re).fold(f64::INFINITY, f64::min);
                let len = (BUTTERWORTH_DECAY / slowest / dt).ceil() as usize + 1;
                let taps = (0..len)
                    .map(|m| {
                        let t = m as f64 * dt;
                        let h: C64 = poles
                            .iter()
                            .zip(&residues)
                            .map(|(&p, &r)| r * (p * t).exp())
                            .sum();
                        // trapezoid weight at the jump t = 0
                        let w = if m == 0 { 0.5 } else { 1.0 };
                        C64::new(h.re * dt * w, 0.0)
                    })
                    .collect();
                Ok(SampledImpulse { t0: 0.0, dt, taps })
            }
            AafModel::Tabulated { .. } => {
                // g(t) = ∫ G(f) e^{j2πft} df on a dense grid over ±4·f_s.
                let m = GBAR_MIN_FFT;
                let df = 1.0 / (m as f64 * dt);
                let mut buf: Vec<C64> = (0..m)
                    .map(|q| {
                        let f = (q as f64 - (m / 2) as f64) * df;
                        self.transfer(f)
                    })
                    .collect();
                FftPlanner::new().plan_fft_inverse(m).process(&mut buf);
                // f_q t_m = (q - M/2) m / M  →  multiply by (-1)^m.
                let half = (m / 2) as i64;
                let taps = (-half..half)
                    .map(|i| {
                        let v = buf[i.rem_euclid(m as i64) as usize];
                        let sign = if i.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                        v * (sign * df * dt)
                    })
                    .collect();
                Ok(SampledImpulse {
                    t0: -half as f64 * dt,
                    dt,
                    taps,
                })
            }
        }
    }
}

fn raised_cosine_spectrum(f: f64, b: f64, beta: f64) -> f64 {
    let a = f.abs();
    let lo = (1.0 - beta) * b;
    let hi = (1.0 + beta) * b;
    if a <= lo {
        1.0
    } else if a >= hi {
        0.0
    } else {
        0.5 * (1.0 + (PI / (2.0 * beta * b) * (a - lo)).cos())
    }
}

/// Raised-cosine impulse response with unit DC gain; `period` = 1/(2B).
pub(crate) fn raised_cosine_impulse(t: f64, period: f64, beta: f64) -> f64 {
    let x = t / period;
    let d = 1.0 - (2.0 * beta * x).powi(2);
    if d.abs() < 1e-10 {
        return PI / (4.0 * period) * sinc(1.0 / (2.0 * beta));
    }
    sinc(x) * (PI * beta * x).cos() / d / period
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn butterworth_poles(order: usize, cutoff: f64) -> Vec<C64> {
    let wc = 2.0 * PI * cutoff;
    (0..order)
        .map(|k| {
            let ang = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            C64::from_polar(wc, ang)
        })
        .collect()
}

/// Poles and residues of H(s) = Π(-p_k)/(s - p_k).
fn butterworth_partial_fractions(order: usize, cutoff: f64) -> (Vec<C64>, Vec<C64>) {
    let poles = butterworth_poles(order, cutoff);
    let gain: C64 = poles.iter().map(|p| -p).product();
    let residues = (0..order)
        .map(|k| {
            let den: C64 = (0..order)
                .filter(|&j| j != k)
                .map(|j| poles[k] - poles[j])
                .product();
            gain / den
        })
        .collect();
    (poles, residues)
}

fn interp(xs: &[f64], ys: &[C64], x: f64) -> C64 {
    let last = xs.len() - 1;
    if x < xs[0] || x > xs[last] {
        return C64::new(0.0, 0.0);
    }
    let i = match xs.partition_point(|&v| v <= x) {
        0 => 0,
        i if i > last => last - 1,
        i => i - 1,
    };
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] * (1.0 - w) + ys[i + 1] * w
}

/// Tabulated Ḡ(f) for one slope difference Δk.
#[derive(Debug, Clone)]
pub struct ModifiedAaf {
    delta_k: f64,
    f_start: f64,
    df: f64,
    values: Vec<C64>,
    all_pass: bool,
}

impl ModifiedAaf {
    pub fn delta_k(&self) -> f64 {
        self.delta_k
    }

    /// Ḡ(f); zero outside the tabulated band.
    pub fn eval(&self, f: f64) -> C64 {
        if self.all_pass {
            return C64::new(1.0, 0.0);
        }
        let pos = (f - self.f_start) / self.df;
        if !(pos >= 0.0) || pos > (self.values.len() - 1) as f64 {
            return C64::new(0.0, 0.0);
        }
        let i = (pos.floor() as usize).min(self.values.len() - 2);
        let w = pos - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    /// Largest |Ḡ| over the table.
    pub fn peak(&self) -> f64 {
        if self.all_pass {
            return 1.0;
        }
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Builds Ḡ for the given AAF and slope difference.
pub fn modified_aaf_transfer(aaf: &AafModel, delta_k: f64, f_s: f64) -> Result<ModifiedAaf> {
    GbarBuilder::new(aaf, f_s)?.build(delta_k)
}

/// Reusable pieces of the Ḡ computation that do not depend on Δk.
struct GbarBuilder {
    imp: SampledImpulse,
    all_pass: bool,
    fft: Arc<dyn rustfft::Fft<f64>>,
    /// exp(-j2π f t0) per output bin, in table order
    shift: Vec<C64>,
    /// Bins kept on each side of f = 0.
    keep: usize,
    buf: Vec<C64>,
    scratch: Vec<C64>,
}

impl GbarBuilder {
    fn new(aaf: &AafModel, f_s: f64) -> Result<Self> {
        let imp = aaf.sampled_impulse(f_s, GBAR_OVERSAMPLING)?;
        let all_pass = matches!(aaf, AafModel::AllPass);
        let m = if all_pass {
            1
        } else {
            imp.taps.len().next_power_of_two().max(GBAR_MIN_FFT)
        };
        let df = 1.0 / (m as f64 * imp.dt);
        let keep = ((GBAR_SPAN * f_s / df).ceil() as usize).min((m / 2).saturating_sub(1));
        let shift = (0..=2 * keep)
            .map(|j| {
                let f = (j as i64 - keep as i64) as f64 * df;
                C64::from_polar(1.0, -2.0 * PI * f * imp.t0)
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(m);
        Ok(GbarBuilder {
            buf: vec![C64::new(0.0, 0.0); m],
            scratch: vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
            fft,
            imp,
            all_pass,
            shift,
            keep,
        })
    }

    fn build(&mut self, delta_k: f64) -> Result<ModifiedAaf> {
        if !delta_k.is_finite() {
            return Err(Error::Domain(format!("non-finite slope difference {delta_k}")));
        }
        if self.all_pass {
            return Ok(ModifiedAaf {
                delta_k,
                f_start: 0.0,
                df: 1.0,
                values: vec![C64::new(1.0, 0.0); 2],
                all_pass: true,
            });
        }
        let imp = &self.imp;
        let m = self.fft.len();
        let buf = &mut self.buf;
        buf.fill(C64::new(0.0, 0.0));
        // exp(jπΔk t²) by a second-order phase recurrence, re-anchored every 128 taps
        let dt = imp.dt;
        let chirp = |t: f64| C64::from_polar(1.0, PI * delta_k * t * t);
        let rot = C64::from_polar(1.0, 2.0 * PI * delta_k * dt * dt);
        let (mut z, mut w) = (C64::new(1.0, 0.0), C64::new(1.0, 0.0));
        for (i, &g) in imp.taps.iter().enumerate() {
            if i % 128 == 0 {
                let t = imp.t0 + i as f64 * dt;
                z = chirp(t);
                w = C64::from_polar(1.0, PI * delta_k * (2.0 * t * dt + dt * dt));
            }
            buf[i] = g * z;
            z *= w;
            w *= rot;
        }
        self.fft.process_with_scratch(buf, &mut self.scratch);
        let df = 1.0 / (m as f64 * dt);
        let keep = self.keep;
        let values = (0..=2 * keep).map(|j| buf[(j + m - keep) % m] * self.shift[j]).collect();
        Ok(ModifiedAaf {
            delta_k,
            f_start: -(keep as f64) * df,
            df,
            values,
            all_pass: false,
        })
    }
}

/// Shared Ḡ tables keyed by the exact Δk bit pattern, for one AAF and f_s.
#[derive(Default)]
pub struct GbarCache {
    builder: Option<(AafModel, u64, GbarBuilder)>,
    tables: std::collections::HashMap<u64, Arc<ModifiedAaf>>,
}

impl std::fmt::Debug for GbarCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GbarCache").field("tables", &self.tables.len()).finish()
    }
}

impl GbarCache {
    pub fn get(&mut self, aaf: &AafModel, delta_k: f64, f_s: f64) -> Result<Arc<ModifiedAaf>> {
        let stale = match &self.builder {
            Some((a, fs_bits, _)) => a != aaf || *fs_bits != f_s.to_bits(),
            None => true,
        };
        if stale {
            self.builder = Some((aaf.clone(), f_s.to_bits(), GbarBuilder::new(aaf, f_s)?));
            self.tables.clear();
        }
        if let Some(t) = self.tables.get(&delta_k.to_bits()) {
            return Ok(t.clone());
        }
        let builder = &mut self.builder.as_mut().expect("builder set above").2;
        let t = Arc::new(builder.build(delta_k)?);
        // bound memory during long local searches
        if self.tables.len() > 4096 {
            self.tables.clear();
        }
        self.tables.insert(delta_k.to_bits(), t.clone());
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = 10.2e6;

    #[test]
    fn raised_cosine_magnitude_bounds() {
        let aaf = AafModel::default_raised_cosine(FS);
        for i in -200..=200 {
            let g = aaf.transfer(i as f64 * FS / 400.0).re;
            assert!((0.0..=1.0).contains(&g));
        }
        assert_eq!(aaf.transfer(0.0).re, 1.0);
        assert!((aaf.transfer(FS / 4.0).re - 0.5).abs() < 1e-12);
        assert_eq!(aaf.transfer(0.32 * FS).re, 0.0);
    }

    #[test]
    fn butterworth_response() {
        let aaf = AafModel::Butterworth { order: 4, cutoff: 1e6 };
        assert!((aaf.transfer(0.0) - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((aaf.transfer(1e6).norm() - 0.5f64.sqrt()).abs() < 1e-12);
        // conjugate symmetry of a real filter
        assert!((aaf.transfer(-3e5) - aaf.transfer(3e5).conj()).norm() < 1e-12);
    }

    #[test]
    fn zero_slope_recovers_transfer_function() {
        for aaf in [
            AafModel::default_raised_cosine(FS),
            AafModel::matched_butterworth(FS),
        ] {
            let gbar = modified_aaf_transfer(&aaf, 0.0, FS).unwrap();
            for i in -40..=40 {
                let f = i as f64 * FS / 100.0;
                let err = (gbar.eval(f) - aaf.transfer(f)).norm();
                assert!(err < 2e-4, "{aaf:?} f={f} err={err}");
            }
        }
    }

    #[test]
    fn tabulated_roundtrip() {
        let rc = AafModel::default_raised_cosine(FS);
        let freqs: Vec<f64> = (-400..=400).map(|i| i as f64 * FS / 100.0).collect();
        let values = freqs.iter().map(|&f| rc.transfer(f)).collect();
        let tab = AafModel::Tabulated { freqs, values };
        let a = modified_aaf_transfer(&rc, -0.8e12, FS).unwrap();
        let b = modified_aaf_transfer(&tab, -0.8e12, FS).unwrap();
        for i in -30..=30 {
            let f = i as f64 * FS / 90.0;
            assert!((a.eval(f) - b.eval(f)).norm() < 5e-3, "f={f}");
        }
    }

    #[test]
    fn coarse_table_rejected() {
        let tab = AafModel::Tabulated {
            freqs: vec![-FS, 0.0, FS],
            values: vec![C64::new(1.0, 0.0); 3],
        };
        assert!(matches!(modified_aaf_transfer(&tab, 0.0, FS), Err(Error::Config(_))));
    }

    /// Direct quadrature of g(t)·exp(jπΔk t²)·exp(-j2πft), no FFT or interpolation.
    fn gbar_direct(delta_k: f64, f: f64) -> C64 {
        let period = 2.0 / FS;
        let dt = 1.0 / (32.0 * FS);
        let half = (200.0 * period / dt) as i64;
        (-half..=half)
            .map(|m| {
                let t = m as f64 * dt;
                let g = raised_cosine_impulse(t, period, 0.25);
                C64::from_polar(g * dt, PI * delta_k * t * t - 2.0 * PI * f * t)
            })
            .sum()
    }

    #[test]
    fn chirped_raised_cosine_matches_direct_quadrature() {
        let gbar = modified_aaf_transfer(&AafModel::default_raised_cosine(FS), -0.8e12, FS).unwrap();
        for f in [0.0, 0.7e6, 1.9e6, -2.4e6, 3.825e6, 6e6] {
            let err = (gbar.eval(f) - gbar_direct(-0.8e12, f)).norm();
            assert!(err < 1e-4, "f={f} err={err}");
        }
    }

    #[test]
    fn raised_cosine_tail_is_small() {
        let edge = 1.25 * FS / 4.0 + 0.25 * FS / 4.0;
        // Without chirp modulation the response vanishes past the roll-off band.
        let flat = modified_aaf_transfer(&AafModel::default_raised_cosine(FS), 0.0, FS).unwrap();
        for i in 0..200 {
            let f = edge + i as f64 * FS / 100.0;
            assert!(flat.eval(f).norm() < 1e-3 * flat.peak());
        }
        // The chirp spreads the band by about sqrt(|Δk|) and maps the slow
        // impulse-response tail onto frequency, so the -60 dB point moves out.
        let gbar = modified_aaf_transfer(&AafModel::default_raised_cosine(FS), -0.8e12, FS).unwrap();
        for i in 0..200 {
            let f = 6e6 + i as f64 * FS / 100.0;
            assert!(gbar.eval(f).norm() < 1e-3 * gbar.peak());
            assert!(gbar.eval(-f).norm() < 1e-3 * gbar.peak());
        }
    }

    #[test]
    fn table_span_covers_steep_chirps() {
        // the full FFT band reaches ±4·f_s; the kept table stops at ±2·f_s
        let aaf = AafModel::default_raised_cosine(FS);
        for dk in [-2e12, 2e12] {
            let imp = aaf.sampled_impulse(FS, GBAR_OVERSAMPLING).unwrap();
            let g = modified_aaf_transfer(&aaf, dk, FS).unwrap();
            for i in 0..40 {
                let f = 2.0 * FS + i as f64 * 0.05 * FS;
                for f in [f, -f] {
                    let direct: C64 = imp
                        .taps
                        .iter()
                        .enumerate()
                        .map(|(m, tap)| {
                            let t = imp.t0 + m as f64 * imp.dt;
                            tap * C64::from_polar(1.0, PI * dk * t * t - 2.0 * PI * f * t)
                        })
                        .sum();
                    assert!(direct.norm() < 1e-3 * g.peak(), "{dk} {f} {}", direct.norm());
                }
            }
        }
    }

    #[test]
    fn all_pass_gbar_is_one() {
        let g = modified_aaf_transfer(&AafModel::AllPass, 3e12, FS).unwrap();
        assert_eq!(g.eval(1e9), C64::new(1.0, 0.0));
    }
}
