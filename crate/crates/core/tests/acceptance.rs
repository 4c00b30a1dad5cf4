//! Acceptance criteria 1-11. Runs as a plain binary (no libtest harness) and
//! prints one PASS/FAIL line per criterion; exits non-zero if any fails.
//!
//!     cargo test --release --test acceptance            # all criteria
//!     cargo test --release --test acceptance -- 1 4 9   # a selection

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use fmcw_vsep::baselines::joint_dictionary_vsep;
use fmcw_vsep::harness::{run_sweep, run_sweep_records, summarize, Axis, Method, SweepSpec, SweepSummary};
use fmcw_vsep::metrics::{
    crlb_beat_frequency, fisher_information, gospa_assign, gospa_eval, invert_fim, jacobian,
    zeta_distance, FdSteps, JacobianMode,
};
use fmcw_vsep::model::{
    delay_column, envelope_matrix, grid_frequency, object_steering_vector, ObjectComponent, RampConfig, Zeta,
};
use fmcw_vsep::synth::{sample_scenario, GroundTruth, ScenarioConfig};
use fmcw_vsep::vsep::{
    db_to_lin, fast_component_test, update_interference_weights, update_object_weights, Candidate, VsepConfig,
    VsepEngine, WeightGroup,
};
use fmcw_vsep::C64;

type Outcome = std::result::Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn cn(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) / 2f64.sqrt()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| cn(rng))
}

fn random_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<C64> {
    DVector::from_fn(len, |_, _| cn(rng))
}

fn rel_err(got: &DMatrix<C64>, want: &DMatrix<C64>) -> f64 {
    (got - want).norm() / want.norm()
}

/// (λDᴴD + Γ)⁻¹ by LU and λCDᴴr.
fn dense_posterior(d: &DMatrix<C64>, gammas: &[f64], lambda: f64, r: &DVector<C64>) -> (DVector<C64>, DMatrix<C64>) {
    let mut a = d.adjoint() * d * C64::new(lambda, 0.0);
    for (i, g) in gammas.iter().enumerate() {
        a[(i, i)] += C64::new(*g, 0.0);
    }
    let c = a.try_inverse().expect("dense system is invertible");
    let mean = &c * d.adjoint() * r * C64::new(lambda, 0.0);
    (mean, c)
}

/// (ρ, ω²) from the M×M marginal covariance Σ = λ⁻¹I + Σ_j γ_j⁻¹ d_j d_jᴴ of the
/// other columns: ρ = 1/s, ω² = |q|²/s² with s = φᴴΣ⁻¹φ, q = φᴴΣ⁻¹r.
fn marginal_rho_omega(others: &DMatrix<C64>, gammas: &[f64], lambda: f64, phi: &DVector<C64>, r: &DVector<C64>) -> (f64, f64) {
    let m = phi.len();
    let mut sigma = DMatrix::<C64>::identity(m, m) * C64::new(1.0 / lambda, 0.0);
    for (j, g) in gammas.iter().enumerate() {
        let c = others.column(j);
        sigma += &c * c.adjoint() * C64::new(1.0 / g, 0.0);
    }
    let inv = sigma.try_inverse().expect("marginal covariance is invertible");
    let s = phi.dotc(&(&inv * phi)).re;
    let q = phi.dotc(&(&inv * r));
    (1.0 / s, q.norm_sqr() / (s * s))
}

fn crit1_linear_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let tol = 1e-10;
    let mut worst = 0.0f64;
    let mut note = |e: f64, what: &str| -> std::result::Result<(), String> {
        worst = worst.max(e);
        if e < tol {
            Ok(())
        } else {
            Err(format!("{what}: relative error {e:.2e}"))
        }
    };
    for _ in 0..20 {
        let m = 24;
        let l = rng.gen_range(3..=8);
        let d = random_matrix(&mut rng, m, l);
        let gammas: Vec<f64> = (0..l).map(|_| rng.gen_range(0.1..10.0)).collect();
        let lambda = rng.gen_range(0.5..5.0);
        let r = random_vector(&mut rng, m);

        let (mean, cov) = update_object_weights(&d, &gammas, lambda, &r).map_err(|e| e.to_string())?;
        let (want_mean, want_cov) = dense_posterior(&d, &gammas, lambda, &r);
        note(rel_err(&cov, &want_cov), "object covariance")?;
        note((&mean - &want_mean).norm() / want_mean.norm(), "object mean")?;

        // fast test: a new column and an existing one, the latter also with a replaced column
        let phi = random_vector(&mut rng, m);
        let t = fast_component_test(&r, &d, &cov, lambda, Candidate::New(&phi), 1.0).map_err(|e| e.to_string())?;
        let (rho, om) = marginal_rho_omega(&d, &gammas, lambda, &phi, &r);
        note(((t.rho - rho) / rho).abs(), "rho (new)")?;
        note(((t.omega2 - om) / om).abs(), "omega2 (new)")?;
        let idx = rng.gen_range(0..l);
        let others = d.clone().remove_column(idx);
        let mut g_others = gammas.clone();
        g_others.remove(idx);
        for column in [d.column(idx).into_owned(), phi.clone()] {
            let t = fast_component_test(&r, &d, &cov, lambda, Candidate::Existing { index: idx, column: &column }, 1.0)
                .map_err(|e| e.to_string())?;
            let (rho, om) = marginal_rho_omega(&others, &g_others, lambda, &column, &r);
            note(((t.rho - rho) / rho).abs(), "rho (existing)")?;
            note(((t.omega2 - om) / om).abs(), "omega2 (existing)")?;
        }

        // interference blocks of a two-ramp frame, dictionary built from ψ directly
        let (n, k) = (12, 24);
        let mut ramps = Vec::new();
        for _ in 0..2 {
            let env = random_vector(&mut rng, n);
            let kk = rng.gen_range(3..=8);
            let mut bins: Vec<usize> = (0..k).collect();
            for i in 0..kk {
                let j = rng.gen_range(i..k);
                bins.swap(i, j);
            }
            bins.truncate(kk);
            let g: Vec<f64> = (0..kk).map(|_| rng.gen_range(0.1..10.0)).collect();
            ramps.push((env, bins, g));
        }
        let rr = random_vector(&mut rng, 2 * n);
        let got = update_interference_weights(&ramps, k, lambda, &rr).map_err(|e| e.to_string())?;
        for (p, ((env, bins, g), (mean, cov))) in ramps.iter().zip(&got).enumerate() {
            let dp = DMatrix::from_fn(n, bins.len(), |i, j| env[i] * delay_column(grid_frequency(bins[j], k), n)[i]);
            let rp = rr.rows(p * n, n).into_owned();
            let (wm, wc) = dense_posterior(&dp, g, lambda, &rp);
            note(rel_err(cov, &wc), "interference covariance")?;
            note((mean - &wm).norm() / wm.norm(), "interference mean")?;
        }
    }

    // joint variant: final covariance against the dense inverse over the
    // dictionary rebuilt from the returned estimate
    let sc = ScenarioConfig::simulation1();
    let ramp = sc.ramp();
    let (n, p) = (ramp.n_fast, ramp.n_ramps);
    let mut sizes = Vec::new();
    for seed in 0..3 {
        let (_, frame) = sample_scenario(&sc, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
        let est = joint_dictionary_vsep(&frame, &VsepConfig::default(), &sc.aaf_inference).map_err(|e| e.to_string())?;
        let mut cols: Vec<DVector<C64>> = Vec::new();
        let mut gammas = est.alpha_precisions.clone();
        for z in &est.object_zetas {
            cols.push(object_steering_vector(*z, n, p).map_err(|e| e.to_string())?);
        }
        for (pp, rp) in est.ramps.iter().enumerate() {
            if rp.active.is_empty() {
                continue;
            }
            let chirp = rp.chirp.ok_or("active ramp without chirp")?;
            let env = envelope_matrix(chirp, &sc.aaf_inference, &ramp).map_err(|e| e.to_string())?;
            for &b in &rp.active {
                let mut c = DVector::zeros(n * p);
                c.rows_mut(pp * n, n)
                    .copy_from(&env.component_mul(&delay_column(grid_frequency(b, est.grid_size), n)));
                cols.push(c);
            }
            gammas.extend_from_slice(&rp.beta_precisions);
        }
        let d = DMatrix::from_columns(&cols);
        let (_, want) = dense_posterior(&d, &gammas, est.noise_precision, &frame.samples);
        let got = est.joint_cov.as_ref().ok_or("joint variant returned no joint covariance")?;
        note(rel_err(got, &want), "joint covariance")?;
        sizes.push(cols.len());
    }
    Ok(format!("worst relative error {worst:.1e}; joint dictionaries of {sizes:?} columns"))
}

fn crit2_gamma_fixed_point() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (m, t) = (32, db_to_lin(3.0));
    let (mut accepted, mut tries, mut worst) = (0, 0, 0.0f64);
    while accepted < 100 {
        tries += 1;
        if tries > 10_000 {
            return Err(format!("only {accepted} accepted components in {tries} draws"));
        }
        let lambda = rng.gen_range(0.5..5.0);
        let mut g = WeightGroup::empty(m);
        for _ in 0..rng.gen_range(3..=8) {
            g.push(&random_vector(&mut rng, m), rng.gen_range(0.1..10.0), lambda);
        }
        let phi = random_vector(&mut rng, m).normalize();
        let amp = rng.gen_range(0.3..3.0);
        let noise = random_vector(&mut rng, m) * C64::new((1.0 / lambda).sqrt(), 0.0);
        let r = g.dict.clone() * random_vector(&mut rng, g.len()) + &phi * (cn(&mut rng) * amp) + noise;
        g.refresh(lambda, &r).map_err(|e| e.to_string())?;
        let test = g.test(lambda, &r, Candidate::New(&phi), t).map_err(|e| e.to_string())?;
        let Some(gamma) = test.gamma else { continue };
        if gamma >= fmcw_vsep::vsep::PRECISION_CAP {
            continue;
        }
        g.apply(None, &phi, &test, lambda, true).map_err(|e| e.to_string())?;
        g.refresh(lambda, &r).map_err(|e| e.to_string())?;
        let slow = g.slow_precision(g.len() - 1);
        let e = ((slow - gamma) / gamma).abs();
        worst = worst.max(e);
        if !(e < 1e-6) {
            return Err(format!("γ̂ = {gamma:.6e} moved to {slow:.6e} (relative {e:.2e})"));
        }
        accepted += 1;
    }
    Ok(format!("100 components ({tries} draws), worst relative change {worst:.1e}"))
}

fn crit3_elbo_monotone() -> Outcome {
    let sc = ScenarioConfig::simulation1();
    let mut cfg = VsepConfig::default();
    cfg.record_ledger = true;
    let eng = VsepEngine::new(cfg, sc.ramp(), sc.aaf_inference.clone()).map_err(|e| e.to_string())?;
    let (mut checked, mut worst) = (0usize, 0.0f64);
    for seed in 0..20 {
        let (_, frame) = sample_scenario(&sc, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
        let est = eng.run(&frame).map_err(|e| e.to_string())?;
        for w in est.ledger.windows(2) {
            if w[1].support_changed {
                continue;
            }
            checked += 1;
            let drop = (w[0].elbo - w[1].elbo) / w[0].elbo.abs().max(1.0);
            worst = worst.max(drop);
            if drop > 1e-8 {
                return Err(format!(
                    "seed {seed}, iteration {}: ELBO {} after `{}` fell to {} after `{}`",
                    w[1].iteration, w[0].elbo, w[0].step, w[1].elbo, w[1].step
                ));
            }
        }
    }
    Ok(format!("{checked} steps checked, largest relative decrease {worst:.1e}"))
}

fn crit4_crlb() -> Outcome {
    // single tone, unknown amplitude and phase
    let (n, lambda) = (64usize, 2.0);
    let alpha = C64::from_polar(8.0, 0.3);
    let ramp = RampConfig {
        n_fast: n,
        ..RampConfig::simulation1()
    };
    let truth = GroundTruth {
        objects: vec![ObjectComponent {
            zeta: Zeta::new(0.1234, 0.0),
            weight: alpha,
        }],
        bursts: vec![],
        noise_precision: lambda,
        grid_size: 2 * n,
    };
    let got = crlb_beat_frequency(&truth, &ramp, &ScenarioConfig::simulation1().aaf_inference)
        .map_err(|e| e.to_string())?;
    // per-sample SNR of a unit-norm steering vector scaled by α
    let snr = alpha.norm_sqr() * lambda / n as f64;
    let nf = n as f64;
    let want = 6.0 / ((2.0 * PI).powi(2) * snr * nf * (nf * nf - 1.0));
    let tone = (got - want).abs() / want;
    if !(tone < 1e-6) {
        return Err(format!("single tone: {got:.6e} vs closed form {want:.6e}"));
    }

    // Simulation-I: mixed analytic/FD Jacobian against all-FD
    let sc = ScenarioConfig::simulation1();
    let ramp = sc.ramp();
    let (truth, _) = sample_scenario(&sc, &mut ChaCha8Rng::seed_from_u64(3)).map_err(|e| e.to_string())?;
    let aaf = &sc.aaf_inference;
    let (jm, lay) = jacobian(&truth, &ramp, aaf, JacobianMode::Mixed, FdSteps::default()).map_err(|e| e.to_string())?;
    let (jf, _) = jacobian(&truth, &ramp, aaf, JacobianMode::FiniteDifference, FdSteps::default()).map_err(|e| e.to_string())?;
    let fm = fisher_information(&jm, truth.noise_precision);
    let ff = fisher_information(&jf, truth.noise_precision);
    let mut fim_err = 0.0f64;
    for i in 0..fm.nrows() {
        for j in 0..fm.ncols() {
            let scale = (fm[(i, i)] * fm[(j, j)]).sqrt();
            fim_err = fim_err.max((fm[(i, j)] - ff[(i, j)]).abs() / scale);
        }
    }
    let bm = invert_fim(&fm).map_err(|e| e.to_string())?;
    let bf = invert_fim(&ff).map_err(|e| e.to_string())?;
    let b = lay.beat[0];
    let bound_err = (bm[(b, b)] - bf[(b, b)]).abs() / bf[(b, b)];
    if !(fim_err < 1e-3 && bound_err < 1e-3) {
        return Err(format!("FIM entries differ by {fim_err:.2e}, bound by {bound_err:.2e}"));
    }
    Ok(format!(
        "single tone {tone:.1e}; Simulation-I ({} parameters) FIM {fim_err:.1e}, bound {bound_err:.1e}",
        lay.len
    ))
}

fn mean_of(summary: &SweepSummary, x: f64, m: Method, metric: &str) -> std::result::Result<f64, String> {
    summary
        .point(x, m)
        .and_then(|p| p.mean(metric))
        .ok_or_else(|| format!("no `{metric}` for {m} at {x} dB"))
}

fn sweep(sc: ScenarioConfig, axis: Axis, values: Vec<f64>, trials: usize, methods: Vec<Method>, crlb: bool) -> std::result::Result<SweepSummary, String> {
    let mut spec = SweepSpec::new(sc, axis, values, trials, methods);
    spec.with_crlb = crlb;
    spec.with_coherence = false;
    let records = run_sweep_records(&spec).map_err(|e| e.to_string())?;
    if let Some(r) = records.iter().find(|r| !r.is_valid()) {
        return Err(format!("trial {} of {} failed: {:?}", r.trial_id, r.method, r.failure));
    }
    Ok(summarize(&spec, &records))
}

fn crit5_crlb_attainment() -> Outcome {
    let mut sc = ScenarioConfig::simulation1();
    sc.snr_db = 25.0;
    let s = sweep(sc, Axis::Sir, vec![0.0], 100, vec![Method::Vsep], true)?;
    let rmse = mean_of(&s, 0.0, Method::Vsep, "rmse_pooled")?;
    let crlb = mean_of(&s, 0.0, Method::Vsep, "crlb_root")?;
    let det = mean_of(&s, 0.0, Method::Vsep, "detection_rate")?;
    let msg = format!("RMSE {rmse:.3e} = {:.2}× root-CRLB {crlb:.3e}, detection rate {det:.2}", rmse / crlb);
    if rmse <= 2.0 * crlb && det >= 0.95 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn crit6_strong_interference() -> Outcome {
    let mut sc = ScenarioConfig::simulation1();
    sc.snr_db = 30.0;
    let s = sweep(sc, Axis::Sir, vec![-30.0], 100, vec![Method::Vsep, Method::ObjectOnly], true)?;
    let rmse = mean_of(&s, -30.0, Method::Vsep, "rmse_pooled")?;
    let crlb = mean_of(&s, -30.0, Method::Vsep, "crlb_root")?;
    let det = mean_of(&s, -30.0, Method::Vsep, "detection_rate")?;
    let det_oo = mean_of(&s, -30.0, Method::ObjectOnly, "detection_rate")?;
    let msg = format!(
        "vsep detection {det:.2}, RMSE {:.2}× root-CRLB; object-only detection {det_oo:.2}",
        rmse / crlb
    );
    if det >= 0.9 && rmse <= 3.0 * crlb && det_oo <= 0.1 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn crit7_model_error() -> Outcome {
    let mut sc = ScenarioConfig::simulation1().with_butterworth_model_error();
    sc.snr_db = 30.0;
    let values = vec![-30.0, -15.0, 0.0];
    let s = sweep(sc, Axis::Sir, values.clone(), 100, vec![Method::Vsep], true)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for &x in &values {
        let ratio = mean_of(&s, x, Method::Vsep, "rmse_pooled")? / mean_of(&s, x, Method::Vsep, "crlb_root")?;
        ok &= ratio <= 5.0;
        parts.push(format!("{x} dB: {ratio:.2}×"));
    }
    let k = mean_of(&s, -15.0, Method::Vsep, "n_interference_est")?;
    ok &= k >= 2.0;
    let msg = format!("RMSE/root-CRLB {}; mean K̂ at -15 dB {k:.1}", parts.join(", "));
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn crit8_multi_target() -> Outcome {
    let mut sc = ScenarioConfig::simulation2_reduced();
    sc.snr_db = 40.0;
    let methods = vec![Method::Vsep, Method::Zeroing, Method::Mca, Method::ObjectOnly, Method::NoInterference];
    let s = sweep(sc, Axis::Sir, vec![-20.0], 100, methods, false)?;
    let x = -20.0;
    let fa = |m| mean_of(&s, x, m, "n_false_alarms");
    let miss = |m| mean_of(&s, x, m, "n_misdetections");
    let rmse = |m| mean_of(&s, x, m, "rmse_assigned");
    let (fa_v, fa_z, fa_m) = (fa(Method::Vsep)?, fa(Method::Zeroing)?, fa(Method::Mca)?);
    let (miss_v, miss_o) = (miss(Method::Vsep)?, miss(Method::ObjectOnly)?);
    let (rmse_v, rmse_n) = (rmse(Method::Vsep)?, rmse(Method::NoInterference)?);
    let msg = format!(
        "false alarms vsep {fa_v:.2} / zeroing {fa_z:.2} / mca {fa_m:.2}; misdetections vsep {miss_v:.2} / object-only {miss_o:.2}; assigned RMSE vsep {rmse_v:.2e} / no-interference {rmse_n:.2e}"
    );
    if fa_v <= fa_z && fa_v <= fa_m && miss_v <= miss_o && rmse_v <= 1.5 * rmse_n {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn crit9_gospa() -> Outcome {
    let z = |b: f64| Zeta::new(b, 0.0);
    let cases = [
        (vec![z(0.1)], vec![z(0.1)], (0.0, 0, 0)),
        (vec![z(0.1), z(0.5)], vec![z(0.1)], (0.0, 1, 0)),
        (vec![z(0.10)], vec![z(0.11), z(0.40)], (0.01, 0, 1)),
    ];
    for (truth, est, (e, miss, fa)) in &cases {
        let r = gospa_eval(truth, est, 0.05, 2.0);
        if !((r.mean_assigned_error - e).abs() < 1e-12 && r.n_misdetections == *miss && r.n_false_alarms == *fa) {
            return Err(format!("hand case {truth:?} / {est:?} gave {r:?}"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut draws = 0;
    for nt in 0..=6usize {
        for ne in 0..=6usize {
            for _ in 0..4 {
                let mut pt = || Zeta::new(rng.gen_range(-0.5..0.5) * 0.1, rng.gen_range(-0.5..0.5) * 0.1);
                let truth: Vec<Zeta> = (0..nt).map(|_| pt()).collect();
                let est: Vec<Zeta> = (0..ne).map(|_| pt()).collect();
                let c = 0.02;
                let got: f64 = gospa_assign(&truth, &est, c, 2.0).iter().map(|p| p.2 * p.2).sum::<f64>()
                    + (nt.max(ne) - gospa_assign(&truth, &est, c, 2.0).len()) as f64 * c * c;
                let want = brute_force(&truth, &est, c);
                if (got - want).abs() > 1e-12 {
                    return Err(format!("{nt}×{ne}: assignment cost {got} vs brute force {want}"));
                }
                draws += 1;
            }
        }
    }
    Ok(format!("hand cases exact; {draws} random instances match brute force"))
}

/// Minimum over all injections of the smaller set into the larger of the
/// capped squared cost, with c² per unmatched element of the larger set.
fn brute_force(a: &[Zeta], b: &[Zeta], c: f64) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    fn go(i: usize, small: &[Zeta], large: &[Zeta], used: &mut Vec<bool>, c: f64) -> f64 {
        if i == small.len() {
            return used.iter().filter(|u| !**u).count() as f64 * c * c;
        }
        let mut best = f64::INFINITY;
        for j in 0..large.len() {
            if used[j] {
                continue;
            }
            used[j] = true;
            let d = zeta_distance(small[i], large[j]).min(c);
            best = best.min(d * d + go(i + 1, small, large, used, c));
            used[j] = false;
        }
        best
    }
    go(0, small, large, &mut vec![false; large.len()], c)
}

fn crit10_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut sc = ScenarioConfig::simulation1();
    sc.snr_db = 20.0;
    let run = |threads: usize, sub: &str| -> std::result::Result<Vec<u8>, String> {
        let mut spec = SweepSpec::new(
            sc.clone(),
            Axis::Sir,
            vec![-10.0, 0.0],
            3,
            vec![Method::Vsep, Method::ObjectOnly, Method::Zeroing, Method::Mca],
        );
        spec.threads = Some(threads);
        let out = dir.path().join(sub);
        run_sweep(&spec, &out).map_err(|e| e.to_string())?;
        std::fs::read(out.join("trials.csv")).map_err(|e| e.to_string())
    };
    let a = run(1, "one")?;
    let b = run(2, "two")?;
    if a == b {
        Ok(format!("trials.csv identical ({} bytes)", a.len()))
    } else {
        Err("trials.csv differs between 1 and 2 workers".into())
    }
}

fn crit11_false_alarms() -> Outcome {
    let sc = ScenarioConfig::noise_only();
    let mut spec = SweepSpec::new(sc.clone(), Axis::Snr, vec![sc.snr_db], 500, vec![Method::Vsep, Method::ObjectOnly]);
    spec.with_crlb = false;
    spec.with_coherence = false;
    let records = run_sweep_records(&spec).map_err(|e| e.to_string())?;
    let rate = |m: Method| {
        let rs: Vec<_> = records.iter().filter(|r| r.method == m).collect();
        let hits = rs
            .iter()
            .filter(|r| r.metrics.as_ref().map_or(true, |x| x.n_false_alarms > 0))
            .count();
        hits as f64 / rs.len() as f64
    };
    let (v, o) = (rate(Method::Vsep), rate(Method::ObjectOnly));
    let msg = format!("per-frame false-alarm rate vsep {:.1}% (object-only {:.1}%)", 100.0 * v, 100.0 * o);
    if v < 0.05 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "linear-algebra oracles", budget: Duration::from_secs(1), run: crit1_linear_algebra },
        Criterion { id: 2, name: "γ fixed point", budget: Duration::from_secs(1), run: crit2_gamma_fixed_point },
        Criterion { id: 3, name: "ELBO monotonicity", budget: Duration::from_secs(30), run: crit3_elbo_monotone },
        Criterion { id: 4, name: "CRLB correctness", budget: Duration::from_secs(10), run: crit4_crlb },
        Criterion { id: 5, name: "CRLB attainment", budget: Duration::from_secs(300), run: crit5_crlb_attainment },
        Criterion { id: 6, name: "strong interference", budget: Duration::from_secs(600), run: crit6_strong_interference },
        Criterion { id: 7, name: "model error", budget: Duration::from_secs(900), run: crit7_model_error },
        Criterion { id: 8, name: "multi-target ordering", budget: Duration::from_secs(1200), run: crit8_multi_target },
        Criterion { id: 9, name: "GOSPA", budget: Duration::from_secs(1), run: crit9_gospa },
        Criterion { id: 10, name: "determinism", budget: Duration::from_secs(120), run: crit10_determinism },
        Criterion { id: 11, name: "false-alarm calibration", budget: Duration::from_secs(120), run: crit11_false_alarms },
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let in_time = took <= c.budget;
        let (ok, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        println!(
            "{} criterion {:>2} {:<24} {:>8.2} s (budget {} s{}) {}",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            took.as_secs_f64(),
            c.budget.as_secs(),
            if in_time { "" } else { ", exceeded" },
            detail
        );
        if !ok {
            failed.push(c.id);
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
