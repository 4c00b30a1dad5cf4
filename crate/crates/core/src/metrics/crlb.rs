//! Cramér–Rao bound for the beat frequencies under the Gaussian frame model.
//!
//! Real parameter vector, in this order: per object (Re α, Im α, φ, ν if P > 1),
//! then per burst (Re β_k, Im β_k for every component, Δf0, Δk). Delay-grid
//! frequencies of the interference are treated as known.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{delay_column, envelope_with, steering, AafModel, GbarCache, RampConfig};
use crate::synth::{synth_interference, synth_object, GroundTruth};
use crate::vsep::ThetaBox;
use crate::C64;

/// How the Jacobian columns are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    /// Closed form for weights and phase parameters, central differences for θ.
    Mixed,
    /// Central differences for every column.
    FiniteDifference,
}

/// Central-difference step as a fraction of each parameter's reference width:
/// the θ box width for Δk (and the matching crossing shift for Δf0), the
/// largest weight magnitude for weights, one cycle for frequencies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSteps {
    pub rel: f64,
}

impl Default for FdSteps {
    fn default() -> Self {
        FdSteps { rel: 1e-5 }
    }
}

/// Parameter layout of the Fisher matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    /// Index of φ_l for every object l.
    pub beat: Vec<usize>,
    pub len: usize,
}

fn layout(truth: &GroundTruth, n_ramps: usize) -> ParamLayout {
    let per_obj = if n_ramps > 1 { 4 } else { 3 };
    let beat = (0..truth.objects.len()).map(|l| l * per_obj + 2).collect();
    let mut len = truth.objects.len() * per_obj;
    for b in &truth.bursts {
        len += 2 * b.weights.len() + 2;
    }
    ParamLayout { beat, len }
}

/// Mean of the frame model with real parameter `index.0` shifted by `index.1`.
fn mean_with(
    truth: &GroundTruth,
    config: &RampConfig,
    aaf: &AafModel,
    index: Option<(usize, f64)>,
) -> Result<DVector<C64>> {
    let mut t = truth.clone();
    if let Some((mut i, h)) = index {
        let per_obj = if config.n_ramps > 1 { 4 } else { 3 };
        let n_obj = per_obj * t.objects.len();
        if i < n_obj {
            let o = &mut t.objects[i / per_obj];
            match i % per_obj {
                0 => o.weight.re += h,
                1 => o.weight.im += h,
                2 => o.zeta.beat += h,
                _ => o.zeta.doppler += h,
            }
        } else {
            i -= n_obj;
            for b in &mut t.bursts {
                let nb = 2 * b.weights.len() + 2;
                if i < nb {
                    let k = b.weights.len();
                    if i < 2 * k {
                        if i % 2 == 0 {
                            b.weights[i / 2].re += h;
                        } else {
                            b.weights[i / 2].im += h;
                        }
                    } else if i == 2 * k {
                        b.chirp.delta_f0 += h;
                    } else {
                        b.chirp.delta_k += h;
                    }
                    break;
                }
                i -= nb;
            }
        }
    }
    Ok(synth_object(&t.objects, config) + synth_interference(&t.bursts, aaf, config)?)
}

/// Step for real parameter `i` (weights, phases, Δf0, Δk).
fn fd_step(truth: &GroundTruth, config: &RampConfig, i: usize, steps: FdSteps) -> f64 {
    let per_obj = if config.n_ramps > 1 { 4 } else { 3 };
    let n_obj = per_obj * truth.objects.len();
    let dk_width = 2.0 * ThetaBox::default().dk_max_rel * config.slope_k;
    if i < n_obj {
        return match i % per_obj {
            0 | 1 => steps.rel * truth.objects[i / per_obj].weight.norm().max(1e-300),
            _ => steps.rel,
        };
    }
    let mut j = i - n_obj;
    for b in &truth.bursts {
        let k = b.weights.len();
        let nb = 2 * k + 2;
        if j < nb {
            let wmax = b.weights.iter().map(|w| w.norm()).fold(0.0, f64::max).max(1e-300);
            return if j < 2 * k {
                steps.rel * wmax
            } else if j == 2 * k {
                // Δf0 moves the crossing by h/|Δk|; scale so that shift matches the Δk step
                steps.rel * dk_width * config.observation_time()
            } else {
                steps.rel * dk_width
            };
        }
        j -= nb;
    }
    steps.rel
}

fn central_column(
    truth: &GroundTruth,
    config: &RampConfig,
    aaf: &AafModel,
    i: usize,
    steps: FdSteps,
) -> Result<DVector<C64>> {
    let h = fd_step(truth, config, i, steps);
    let plus = mean_with(truth, config, aaf, Some((i, h)))?;
    let minus = mean_with(truth, config, aaf, Some((i, -h)))?;
    Ok((plus - minus) / C64::new(2.0 * h, 0.0))
}

/// Jacobian of the noise-free frame with respect to the real parameters.
pub fn jacobian(
    truth: &GroundTruth,
    config: &RampConfig,
    aaf: &AafModel,
    mode: JacobianMode,
    steps: FdSteps,
) -> Result<(DMatrix<C64>, ParamLayout)> {
    let lay = layout(truth, config.n_ramps);
    let m = config.len();
    let mut jac = DMatrix::zeros(m, lay.len);
    if mode == JacobianMode::FiniteDifference {
        for i in 0..lay.len {
            jac.set_column(i, &central_column(truth, config, aaf, i, steps)?);
        }
        return Ok((jac, lay));
    }
    let (n, p) = (config.n_fast, config.n_ramps);
    let j = C64::new(0.0, 1.0);
    let mut col = 0;
    for o in &truth.objects {
        let phi = steering(o.zeta, n, p);
        jac.set_column(col, &phi);
        jac.set_column(col + 1, &(&phi * j));
        let d_beat = DVector::from_fn(m, |idx, _| phi[idx] * o.weight * j * (-2.0 * PI * (idx % n) as f64));
        jac.set_column(col + 2, &d_beat);
        col += 3;
        if p > 1 {
            let d_dop = DVector::from_fn(m, |idx, _| phi[idx] * o.weight * j * (-2.0 * PI * (idx / n) as f64));
            jac.set_column(col, &d_dop);
            col += 1;
        }
    }
    let mut cache = GbarCache::default();
    for b in &truth.bursts {
        let env = cache
            .get(aaf, b.chirp.delta_k, config.f_s)
            .map(|g| envelope_with(b.chirp, &g, config))?;
        for &f in &b.freqs {
            let mut c = DVector::zeros(m);
            c.rows_mut(b.ramp_index * n, n)
                .copy_from(&env.component_mul(&delay_column(f, n)));
            jac.set_column(col + 1, &(&c * j));
            jac.set_column(col, &c);
            col += 2;
        }
        for _ in 0..2 {
            jac.set_column(col, &central_column(truth, config, aaf, col, steps)?);
            col += 1;
        }
    }
    debug_assert_eq!(col, lay.len);
    Ok((jac, lay))
}

/// FIM = 2λ·Re(JᴴJ).
pub fn fisher_information(jac: &DMatrix<C64>, lambda: f64) -> DMatrix<f64> {
    let g = jac.ad_mul(jac);
    g.map(|v| 2.0 * lambda * v.re)
}

/// Inverse of a real symmetric FIM; numerical error when it is singular.
pub fn invert_fim(fim: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    // scale to unit diagonal so that wildly different parameter units do not
    // spoil the factorization
    let d: Vec<f64> = fim.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect();
    if d.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Numerical("FIM has a zero diagonal entry (unidentifiable parameter)".into()));
    }
    let scaled = DMatrix::from_fn(fim.nrows(), fim.ncols(), |i, j| fim[(i, j)] / (d[i] * d[j]));
    let ch = nalgebra::Cholesky::new(scaled)
        .ok_or_else(|| Error::Numerical("FIM is singular (unidentifiable configuration)".into()))?;
    let inv = ch.inverse();
    let out = DMatrix::from_fn(fim.nrows(), fim.ncols(), |i, j| inv[(i, j)] / (d[i] * d[j]));
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("FIM inverse is not finite".into()));
    }
    Ok(out)
}

/// Bound on var(φ̂T_s) for every object of `truth`, in object order.
pub fn crlb_beat_frequencies(truth: &GroundTruth, config: &RampConfig, aaf: &AafModel) -> Result<Vec<f64>> {
    let (jac, lay) = jacobian(truth, config, aaf, JacobianMode::Mixed, FdSteps::default())?;
    let inv = invert_fim(&fisher_information(&jac, truth.noise_precision))?;
    Ok(lay.beat.iter().map(|&i| inv[(i, i)]).collect())
}

/// Bound on var(φ̂T_s) of the first object.
pub fn crlb_beat_frequency(truth: &GroundTruth, config: &RampConfig, aaf: &AafModel) -> Result<f64> {
    crlb_beat_frequencies(truth, config, aaf)?
        .first()
        .copied()
        .ok_or_else(|| Error::Input("ground truth has no object".into()))
}

/// Unknown amplitude and phase single tone in white noise, per-sample SNR `s`.
pub fn crlb_single_tone(snr_per_sample: f64, n: usize) -> f64 {
    let n = n as f64;
    6.0 / ((2.0 * PI).powi(2) * snr_per_sample * n * (n * n - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ObjectComponent, Zeta};

    #[test]
    fn single_tone_matches_closed_form() {
        let mut cfg = RampConfig::simulation1();
        cfg.n_fast = 64;
        let truth = GroundTruth {
            objects: vec![ObjectComponent {
                zeta: Zeta::new(0.123, 0.0),
                weight: C64::from_polar(8.0, 0.7),
            }],
            bursts: vec![],
            noise_precision: 1.0,
            grid_size: 128,
        };
        let got = crlb_beat_frequency(&truth, &cfg, &AafModel::AllPass).unwrap();
        // ‖φ‖ = 1, so the per-sample SNR is |α|²/N
        let want = crlb_single_tone(64.0 / 64.0, 64);
        assert!((got / want - 1.0).abs() < 1e-6, "{got} {want}");
        let mut t2 = truth.clone();
        t2.noise_precision = 2.0;
        let half = crlb_beat_frequency(&t2, &cfg, &AafModel::AllPass).unwrap();
        assert!((half / got - 0.5).abs() < 1e-12);
    }

    fn sim1_truth() -> (GroundTruth, RampConfig, AafModel) {
        use rand::SeedableRng;
        let sc = crate::synth::preset("simulation1").unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (truth, frame) = crate::synth::sample_scenario(&sc, &mut rng).unwrap();
        (truth, frame.config, sc.aaf_inference)
    }

    #[test]
    fn mixed_jacobian_matches_finite_differences() {
        let (truth, cfg, aaf) = sim1_truth();
        assert!(!truth.bursts.is_empty());
        let (ja, _) = jacobian(&truth, &cfg, &aaf, JacobianMode::Mixed, FdSteps::default()).unwrap();
        let (jf, lay) = jacobian(&truth, &cfg, &aaf, JacobianMode::FiniteDifference, FdSteps::default()).unwrap();
        let fa = fisher_information(&ja, truth.noise_precision);
        let ff = fisher_information(&jf, truth.noise_precision);
        for i in 0..lay.len {
            for j in 0..lay.len {
                let scale = (fa[(i, i)] * fa[(j, j)]).sqrt();
                assert!((fa[(i, j)] - ff[(i, j)]).abs() < 1e-3 * scale, "({i},{j})");
            }
        }
        let b = lay.beat[0];
        let (ia, if_) = (invert_fim(&fa).unwrap(), invert_fim(&ff).unwrap());
        assert!((ia[(b, b)] / if_[(b, b)] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn global_phase_leaves_bound_unchanged() {
        let (truth, cfg, aaf) = sim1_truth();
        let base = crlb_beat_frequency(&truth, &cfg, &aaf).unwrap();
        let mut rot = truth.clone();
        let ph = C64::from_polar(1.0, 1.1);
        for o in &mut rot.objects {
            o.weight *= ph;
        }
        for b in &mut rot.bursts {
            for w in &mut b.weights {
                *w *= ph;
            }
        }
        let got = crlb_beat_frequency(&rot, &cfg, &aaf).unwrap();
        assert!((got / base - 1.0).abs() < 1e-6, "{got} {base}");
    }

    #[test]
    fn unidentifiable_is_reported() {
        let mut cfg = RampConfig::simulation1();
        cfg.n_fast = 16;
        let o = ObjectComponent {
            zeta: Zeta::new(0.1, 0.0),
            weight: C64::new(1.0, 0.0),
        };
        let truth = GroundTruth {
            objects: vec![o, o],
            bursts: vec![],
            noise_precision: 1.0,
            grid_size: 32,
        };
        assert!(matches!(
            crlb_beat_frequency(&truth, &cfg, &AafModel::AllPass),
            Err(Error::Numerical(_))
        ));
    }
}
