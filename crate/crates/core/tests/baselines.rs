use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fmcw_vsep::baselines::{
    joint_dictionary_vsep, mca_separate, object_only_vsep, zeroing, InterferenceMask, McaConfig,
};
use fmcw_vsep::metrics::gospa_eval;
use fmcw_vsep::model::{RampConfig, SignalFrame};
use fmcw_vsep::synth::{sample_scenario, ScenarioConfig};
use fmcw_vsep::vsep::{run_vsep, VsepConfig};
use fmcw_vsep::C64;

fn energy(v: &DVector<C64>) -> f64 {
    v.norm_squared()
}

#[test]
fn zeroing_removes_exactly_the_masked_energy() {
    // at SIR 0 the burst rarely clears 3 sigma per sample
    let mut sc = ScenarioConfig::simulation1();
    sc.sir_db = Some(-20.0);
    let (truth, frame) = sample_scenario(&sc, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let mask = InterferenceMask::from_frame(&frame, truth.noise_precision, 3.0).unwrap();
    assert!(mask.count() > 0 && mask.count() < frame.samples.len());
    let out = zeroing(&frame, &mask).unwrap();
    let masked: f64 = frame
        .samples
        .iter()
        .zip(&mask.mask)
        .filter(|(_, m)| **m)
        .map(|(v, _)| v.norm_sqr())
        .sum();
    let want = energy(&frame.samples) - masked;
    assert!((energy(&out.samples) - want).abs() <= 1e-12 * energy(&frame.samples));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zeroing_is_idempotent(
        re in prop::collection::vec(-5.0f64..5.0, 32),
        im in prop::collection::vec(-5.0f64..5.0, 32),
        mask in prop::collection::vec(any::<bool>(), 32),
    ) {
        let cfg = RampConfig { n_fast: 32, ..RampConfig::simulation1() };
        let x = DVector::from_fn(32, |i, _| C64::new(re[i], im[i]));
        let frame = SignalFrame::new(cfg, x).unwrap();
        let m = InterferenceMask { mask };
        let once = zeroing(&frame, &m).unwrap();
        let twice = zeroing(&once, &m).unwrap();
        prop_assert_eq!(&once.samples, &twice.samples);
        for (i, v) in once.samples.iter().enumerate() {
            if m.mask[i] {
                prop_assert_eq!(*v, C64::new(0.0, 0.0));
            } else {
                prop_assert_eq!(*v, frame.samples[i]);
            }
        }
    }
}

#[test]
fn mca_on_simulation1_mix_leaves_a_small_residual() {
    let sc = ScenarioConfig::simulation1();
    for seed in 0..3 {
        let (_, frame) = sample_scenario(&sc, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let (obj, int) = mca_separate(&frame, &McaConfig::default()).unwrap();
        let residual = &frame.samples - &obj - &int;
        assert!(residual.norm() < frame.samples.norm(), "seed {seed}");
        // the split is additive by construction
        let back = &obj + &int + &residual;
        assert!((&back - &frame.samples).norm() <= 1e-12 * frame.samples.norm());
        // the bursty part should carry the interference
        let parts = frame.parts.as_ref().unwrap();
        let err_split = (&int - &parts.interference).norm();
        assert!(err_split < parts.interference.norm(), "seed {seed}: {err_split}");
    }
}

#[test]
fn mca_keeps_ramps_separate() {
    let mut sc = ScenarioConfig::simulation2_reduced();
    sc.sir_db = Some(-10.0);
    let (_, frame) = sample_scenario(&sc, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let n = frame.config.n_fast;
    let (obj, int) = mca_separate(&frame, &McaConfig::default()).unwrap();
    for p in 0..frame.config.n_ramps {
        let mut single = DVector::zeros(frame.samples.len());
        single.rows_mut(p * n, n).copy_from(&frame.samples.rows(p * n, n));
        let (o1, i1) = mca_separate(&SignalFrame::new(frame.config, single).unwrap(), &McaConfig::default()).unwrap();
        assert!((o1.rows(p * n, n) - obj.rows(p * n, n)).norm() < 1e-10);
        assert!((i1.rows(p * n, n) - int.rows(p * n, n)).norm() < 1e-10);
    }
}

/// Frame with objects and noise only.
fn interference_free(seed: u64) -> (fmcw_vsep::synth::GroundTruth, SignalFrame) {
    let mut sc = ScenarioConfig::simulation1();
    sc.snr_db = 25.0;
    let (truth, frame) = sample_scenario(&sc, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let parts = frame.parts.clone().unwrap();
    let clean = SignalFrame::new(frame.config, &frame.samples - &parts.interference).unwrap();
    (truth, clean)
}

#[test]
fn joint_variant_matches_object_only_without_interference() {
    let cfg = VsepConfig::default();
    let aaf = ScenarioConfig::simulation1().aaf_inference;
    for seed in 0..3 {
        let (truth, frame) = interference_free(seed);
        let oo = object_only_vsep(&frame, &cfg, &aaf).unwrap();
        let joint = joint_dictionary_vsep(&frame, &cfg, &aaf).unwrap();
        let tz: Vec<_> = truth.objects.iter().map(|o| o.zeta).collect();
        let c = 3.0 / frame.config.n_fast as f64;
        let a = gospa_eval(&tz, &oo.object_zetas, c, 2.0);
        let b = gospa_eval(&tz, &joint.object_zetas, c, 2.0);
        assert_eq!(a.n_misdetections, b.n_misdetections, "seed {seed}");
        assert_eq!(a.n_misdetections, 0, "seed {seed}");
    }
}

#[test]
fn object_only_equals_full_run_when_no_interference_is_found() {
    let mut sc = ScenarioConfig::simulation1();
    sc.snr_db = 70.0;
    let aaf = sc.aaf_inference.clone();
    let (_, frame) = sample_scenario(&sc, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let clean = SignalFrame::new(frame.config, &frame.samples - &frame.parts.as_ref().unwrap().interference).unwrap();
    // the noise precision starts from the frame energy, so the test statistic
    // of the lone object is about 24 dB here
    let mut cfg = VsepConfig::default();
    cfg.threshold_interference_db = 20.0;
    cfg.threshold_object_db = 20.0;
    let full = run_vsep(&clean, &cfg, &aaf).unwrap();
    assert_eq!(full.num_interference_components(), 0);
    let oo = object_only_vsep(&clean, &cfg, &aaf).unwrap();
    assert_eq!(oo.num_objects(), 1, "{:?}", oo.object_zetas);
    assert_eq!(full.num_objects(), 1, "{:?}", full.object_zetas);
    // equal up to the frequency refinement tolerance
    let (a, b) = (full.object_zetas[0], oo.object_zetas[0]);
    assert!((a.beat - b.beat).abs() < 1e-8 && (a.doppler - b.doppler).abs() < 1e-8, "{a:?} {b:?}");
    assert!((&full.alpha_mean - &oo.alpha_mean).norm() <= 1e-6 * oo.alpha_mean.norm());
}
