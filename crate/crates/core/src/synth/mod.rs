//! Synthetic frames: ground truth, the two interference generators, noise and
//! SNR/SIR scaling.

mod scenario;

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{
    chirp_phasor, envelope_matrix, steering, AafModel, FrameParts, InterferenceBurst, ObjectComponent, RampConfig,
    SignalFrame,
};
use crate::C64;

pub use scenario::{
    preset, preset_names, sample_scenario, GenerationMode, InterferenceMode, ObjectMode, ScenarioConfig,
    SPEED_OF_LIGHT,
};

/// True parameters of a synthetic frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub objects: Vec<ObjectComponent>,
    pub bursts: Vec<InterferenceBurst>,
    /// λ̃ = 1 / noise power per sample.
    pub noise_precision: f64,
    /// Grid size used for `grid_indices` of the bursts.
    pub grid_size: usize,
}

/// Φ(ζ)α.
pub fn synth_object(objects: &[ObjectComponent], config: &RampConfig) -> DVector<C64> {
    let mut out = DVector::zeros(config.len());
    for c in objects {
        out += steering(c.zeta.wrapped(), config.n_fast, config.n_ramps) * c.weight;
    }
    out
}

fn check_unique_ramps(bursts: &[InterferenceBurst], config: &RampConfig) -> Result<()> {
    let mut seen = vec![false; config.n_ramps];
    for b in bursts {
        if b.ramp_index >= config.n_ramps {
            return Err(Error::Scenario(format!(
                "burst on ramp {} but the frame has {} ramps",
                b.ramp_index, config.n_ramps
            )));
        }
        if std::mem::replace(&mut seen[b.ramp_index], true) {
            return Err(Error::Scenario(format!("two bursts on ramp {}", b.ramp_index)));
        }
        if b.freqs.len() != b.weights.len() {
            return Err(Error::Scenario("burst frequencies and weights differ in length".into()));
        }
    }
    Ok(())
}

/// Ψβ for one burst, using its exact (possibly off-grid) frequencies.
fn tone_sum(b: &InterferenceBurst, n_fast: usize) -> DVector<C64> {
    let scale = 1.0 / (n_fast as f64).sqrt();
    DVector::from_fn(n_fast, |n, _| {
        b.freqs
            .iter()
            .zip(&b.weights)
            .map(|(f, w)| w * C64::from_polar(scale, -2.0 * PI * f * n as f64))
            .sum()
    })
}

/// Per interfered ramp U(θ)Ψβ, zero elsewhere.
pub fn synth_interference(
    bursts: &[InterferenceBurst],
    aaf: &AafModel,
    config: &RampConfig,
) -> Result<DVector<C64>> {
    check_unique_ramps(bursts, config)?;
    let n = config.n_fast;
    let mut out = DVector::zeros(config.len());
    for b in bursts {
        let env = envelope_matrix(b.chirp, aaf, config)?;
        let seg = env.component_mul(&tone_sum(b, n));
        out.rows_mut(b.ramp_index * n, n).copy_from(&seg);
    }
    Ok(out)
}

/// Interference generated by filtering the demixed burst with g(t) in the time
/// domain: a Riemann sum over the impulse response sampled at f_s·oversampling,
/// evaluated at the sampling instants. The tone shift of each channel component
/// passes through the filter as well, which the envelope model ignores.
pub fn synth_interference_convolved(
    bursts: &[InterferenceBurst],
    aaf: &AafModel,
    config: &RampConfig,
    oversampling: usize,
) -> Result<DVector<C64>> {
    if oversampling < 4 {
        return Err(Error::Config(format!("oversampling factor {oversampling} below 4")));
    }
    check_unique_ramps(bursts, config)?;
    let n_fast = config.n_fast;
    let mut out = DVector::zeros(config.len());
    if bursts.is_empty() {
        return Ok(out);
    }
    let imp = aaf.sampled_impulse(config.f_s, oversampling)?;
    let ts = config.t_s();
    let scale = 1.0 / (n_fast as f64).sqrt();
    for b in bursts {
        let (df, dk) = (b.chirp.delta_f0, b.chirp.delta_k);
        // unfiltered demixed burst at continuous time t
        let x = |t: f64| -> C64 {
            let tones: C64 = b
                .freqs
                .iter()
                .zip(&b.weights)
                .map(|(f, w)| w * C64::from_polar(scale, -2.0 * PI * f * config.f_s * t))
                .sum();
            chirp_phasor(t, df, dk) * tones
        };
        for n in 0..n_fast {
            let t = n as f64 * ts;
            let mut acc = C64::new(0.0, 0.0);
            for (m, g) in imp.taps.iter().enumerate() {
                acc += g * x(t - imp.t0 - m as f64 * imp.dt);
            }
            out[b.ramp_index * n_fast + n] = acc;
        }
    }
    Ok(out)
}

/// Circular complex Gaussian noise of per-sample variance 1/λ̃.
pub fn noise_vector<R: Rng + ?Sized>(len: usize, noise_precision: f64, rng: &mut R) -> Result<DVector<C64>> {
    if !(noise_precision > 0.0) {
        return Err(Error::Domain(format!("noise precision {noise_precision} must be positive")));
    }
    let sd = (0.5 / noise_precision).sqrt();
    Ok(DVector::from_fn(len, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(sd * re, sd * im)
    }))
}

/// `signal` plus AWGN; the returned frame keeps `signal` as its object part.
pub fn add_noise<R: Rng + ?Sized>(
    signal: &DVector<C64>,
    config: &RampConfig,
    noise_precision: f64,
    rng: &mut R,
) -> Result<SignalFrame> {
    let noise = noise_vector(signal.len(), noise_precision, rng)?;
    SignalFrame::from_parts(
        *config,
        FrameParts {
            object: signal.clone(),
            interference: DVector::zeros(signal.len()),
            noise,
        },
    )
}

/// How interference samples are produced from the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    /// The envelope model U(θ)Ψβ with the given AAF.
    Model(AafModel),
    /// Time-domain filtering with the given AAF at this oversampling factor.
    Convolved(AafModel, usize),
}

impl Generator {
    pub fn interference(&self, bursts: &[InterferenceBurst], config: &RampConfig) -> Result<DVector<C64>> {
        match self {
            Generator::Model(aaf) => synth_interference(bursts, aaf, config),
            Generator::Convolved(aaf, os) => synth_interference_convolved(bursts, aaf, config, *os),
        }
    }
}

/// Rescales the weights so that λ̃‖Φα‖² hits `snr_db` and, when given,
/// ‖Φα‖²/‖UΨβ‖² hits `sir_db`. Noise precision is set to 1.
pub fn scale_to_snr_sir(
    truth: &GroundTruth,
    snr_db: f64,
    sir_db: Option<f64>,
    config: &RampConfig,
    generator: &Generator,
) -> Result<GroundTruth> {
    if !snr_db.is_finite() {
        return Err(Error::Scenario(format!("SNR {snr_db} dB is not finite")));
    }
    let lambda = 1.0;
    let mut out = truth.clone();
    out.noise_precision = lambda;
    let e_obj = synth_object(&truth.objects, config).norm_squared();
    if !(e_obj > 0.0) {
        return Err(Error::Scenario("object energy is zero, SNR cannot be set".into()));
    }
    let target_obj = 10f64.powf(snr_db / 10.0) / lambda;
    let a = (target_obj / e_obj).sqrt();
    for c in &mut out.objects {
        c.weight *= a;
    }
    if let Some(sir) = sir_db {
        if !sir.is_finite() {
            return Err(Error::Scenario(format!("SIR {sir} dB is not finite")));
        }
        let e_int = generator.interference(&truth.bursts, config)?.norm_squared();
        if !(e_int > 0.0) {
            return Err(Error::Scenario("interference energy is zero, SIR cannot be set".into()));
        }
        let b = (target_obj / 10f64.powf(sir / 10.0) / e_int).sqrt();
        for burst in &mut out.bursts {
            for w in &mut burst.weights {
                *w *= b;
            }
        }
    }
    Ok(out)
}

/// Noisy frame for a ground truth, keeping the decomposition.
pub fn render_frame<R: Rng + ?Sized>(
    truth: &GroundTruth,
    config: &RampConfig,
    generator: &Generator,
    rng: &mut R,
) -> Result<SignalFrame> {
    let object = synth_object(&truth.objects, config);
    let interference = generator.interference(&truth.bursts, config)?;
    let noise = noise_vector(config.len(), truth.noise_precision, rng)?;
    SignalFrame::from_parts(
        *config,
        FrameParts {
            object,
            interference,
            noise,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChirpParams, Zeta};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(n: usize, p: usize) -> RampConfig {
        let mut c = RampConfig::simulation1();
        c.n_fast = n;
        c.n_ramps = p;
        c
    }

    fn burst(ramp: usize, chirp: ChirpParams, freqs: &[f64], weights: &[C64], grid: usize) -> InterferenceBurst {
        InterferenceBurst {
            ramp_index: ramp,
            chirp,
            grid_indices: freqs.iter().map(|&f| crate::model::nearest_grid_index(f, grid)).collect(),
            freqs: freqs.to_vec(),
            weights: weights.to_vec(),
        }
    }

    #[test]
    fn object_examples() {
        let cfg = small(2, 2);
        assert_eq!(synth_object(&[], &cfg).norm(), 0.0);
        let one = ObjectComponent {
            zeta: Zeta::new(0.0, 0.0),
            weight: C64::new(1.0, 0.0),
        };
        let v = synth_object(&[one], &cfg);
        assert!(v.iter().all(|x| (x - C64::new(0.5, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn flat_burst_is_constant() {
        let cfg = small(16, 2);
        let b = burst(1, ChirpParams::new(0.0, 0.0), &[0.0], &[C64::new(1.0, 0.0)], 32);
        let v = synth_interference(&[b], &AafModel::AllPass, &cfg).unwrap();
        assert!(v.rows(0, 16).norm() == 0.0);
        assert!(v.rows(16, 16).iter().all(|x| (x - C64::new(0.25, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn duplicate_ramp_rejected() {
        let cfg = small(16, 2);
        let b = burst(1, ChirpParams::new(0.0, 0.0), &[0.0], &[C64::new(1.0, 0.0)], 32);
        let err = synth_interference(&[b.clone(), b], &AafModel::AllPass, &cfg).unwrap_err();
        assert!(matches!(err, Error::Scenario(_)));
    }

    #[test]
    fn convolved_all_pass_matches_model() {
        let cfg = RampConfig::simulation1();
        let b = burst(
            0,
            ChirpParams::new(10e6, -0.8e12),
            &[0.0, 0.1],
            &[C64::new(1.0, 0.0), C64::new(0.0, 0.5)],
            512,
        );
        let a = synth_interference(std::slice::from_ref(&b), &AafModel::AllPass, &cfg).unwrap();
        let c = synth_interference_convolved(&[b], &AafModel::AllPass, &cfg, 8).unwrap();
        assert!((&a - &c).norm() / c.norm() < 1e-12);
    }

    #[test]
    fn convolved_raised_cosine_matches_model_for_zero_delay() {
        // with a single delay-0 component the envelope model is exact
        let cfg = RampConfig::simulation1();
        let aaf = AafModel::default_raised_cosine(cfg.f_s);
        let b = burst(0, ChirpParams::new(10e6, -0.8e12), &[0.0], &[C64::new(1.0, 0.0)], 512);
        let a = synth_interference(std::slice::from_ref(&b), &aaf, &cfg).unwrap();
        let c = synth_interference_convolved(&[b], &aaf, &cfg, 8).unwrap();
        let rel = (&a - &c).norm() / a.norm();
        assert!(rel < 1e-3, "{rel}");
    }

    #[test]
    fn low_oversampling_rejected() {
        let cfg = small(16, 1);
        let err = synth_interference_convolved(&[], &AafModel::AllPass, &cfg, 3).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn noise_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sig = DVector::from_element(8, C64::new(1.0, -2.0));
        let cfg = small(8, 1);
        let f = add_noise(&sig, &cfg, 1e30, &mut rng).unwrap();
        assert!((&f.samples - &sig).norm() < 1e-12);
        assert!(matches!(add_noise(&sig, &cfg, 0.0, &mut rng), Err(Error::Domain(_))));
        assert!(matches!(add_noise(&sig, &cfg, -1.0, &mut rng), Err(Error::Domain(_))));
        let a = noise_vector(64, 1.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = noise_vector(64, 1.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_power() {
        let v = noise_vector(1_000_000, 1.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let p = v.norm_squared() / v.len() as f64;
        assert!((0.99..=1.01).contains(&p), "{p}");
    }

    #[test]
    fn scaling_hits_targets() {
        let cfg = RampConfig::simulation1();
        let gen = Generator::Model(AafModel::default_raised_cosine(cfg.f_s));
        let truth = GroundTruth {
            objects: vec![ObjectComponent {
                zeta: Zeta::new(0.08, 0.0),
                weight: C64::new(0.3, 0.1),
            }],
            bursts: vec![burst(0, ChirpParams::new(10e6, -0.8e12), &[0.0], &[C64::new(2.0, 0.0)], 512)],
            noise_precision: 1.0,
            grid_size: 512,
        };
        let s = scale_to_snr_sir(&truth, 30.0, Some(-15.0), &cfg, &gen).unwrap();
        let eo = synth_object(&s.objects, &cfg).norm_squared();
        let ei = gen.interference(&s.bursts, &cfg).unwrap().norm_squared();
        assert!((eo / 1e3 - 1.0).abs() < 1e-10);
        assert!((ei / 10f64.powf(4.5) - 1.0).abs() < 1e-10);
        let s2 = scale_to_snr_sir(&s, 30.0, Some(-15.0), &cfg, &gen).unwrap();
        assert!((s2.objects[0].weight - s.objects[0].weight).norm() < 1e-12 * s.objects[0].weight.norm());
        assert!(
            (s2.bursts[0].weights[0] - s.bursts[0].weights[0]).norm() < 1e-12 * s.bursts[0].weights[0].norm()
        );
        let zero = GroundTruth {
            objects: vec![],
            ..truth
        };
        assert!(matches!(
            scale_to_snr_sir(&zero, 0.0, None, &cfg, &gen),
            Err(Error::Scenario(_))
        ));
    }
}
