//! Monte Carlo sweeps over SNR or SIR.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{mca_then_detect, zeroing_then_detect, InterferenceMask, McaConfig};
use crate::error::{Error, Result};
use crate::metrics::{coherence_measure, crlb_beat_frequencies, default_cutoff, evaluate, EvalOptions, MetricsReport};
use crate::model::SignalFrame;
use crate::synth::{sample_scenario, GroundTruth, ScenarioConfig};
use crate::vsep::{PosteriorState, ThetaSpace, VsepConfig, VsepEngine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Vsep,
    ObjectOnly,
    Joint,
    Zeroing,
    Mca,
    /// Object-only inference on the frame with the true interference removed.
    NoInterference,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Vsep,
        Method::ObjectOnly,
        Method::Joint,
        Method::Zeroing,
        Method::Mca,
        Method::NoInterference,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Vsep => "vsep",
            Method::ObjectOnly => "object-only",
            Method::Joint => "joint",
            Method::Zeroing => "zeroing",
            Method::Mca => "mca",
            Method::NoInterference => "no-interference",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .find(|m| m.name() == s)
            .copied()
            .ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::Input(format!("unknown method `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    Snr,
    Sir,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snr" => Ok(Axis::Snr),
            "sir" => Ok(Axis::Sir),
            _ => Err(Error::Input(format!("unknown sweep axis `{s}` (snr or sir)"))),
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::Snr => "snr",
            Axis::Sir => "sir",
        })
    }
}

/// What to run. Every method sees the same frames: the scenario seed depends
/// on (base seed, point, trial) only.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub scenario: ScenarioConfig,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub trials_per_point: usize,
    pub methods: Vec<Method>,
    pub vsep: VsepConfig,
    pub mca: McaConfig,
    pub base_seed: u64,
    /// Assignment cutoff; `None` means 3/N.
    pub cutoff: Option<f64>,
    pub with_crlb: bool,
    pub with_coherence: bool,
    /// Ideal zeroing flags samples above this many noise standard deviations.
    pub mask_sigmas: f64,
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
}

impl SweepSpec {
    pub fn new(scenario: ScenarioConfig, axis: Axis, values: Vec<f64>, trials: usize, methods: Vec<Method>) -> Self {
        SweepSpec {
            base_seed: scenario.seed,
            scenario,
            axis,
            values,
            trials_per_point: trials,
            methods,
            vsep: VsepConfig::default(),
            mca: McaConfig::default(),
            cutoff: None,
            with_crlb: true,
            with_coherence: true,
            mask_sigmas: 3.0,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep has no points".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("sweep has no methods".into()));
        }
        if self.trials_per_point == 0 {
            return Err(Error::Config("trials_per_point must be positive".into()));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!("sweep value {} is not finite", self.values[i])));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::Config(format!("method {m} listed twice")));
            }
        }
        self.vsep.validate()?;
        self.mca.validate(self.scenario.n_fast)?;
        self.scenario_at(self.values[0]).validate()
    }

    /// The scenario at sweep value `x`.
    pub fn scenario_at(&self, x: f64) -> ScenarioConfig {
        let mut c = self.scenario.clone();
        match self.axis {
            Axis::Snr => c.snr_db = x,
            Axis::Sir => c.sir_db = Some(x),
        }
        c
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff.unwrap_or_else(|| default_cutoff(self.scenario.n_fast))
    }
}

/// One (point, method, trial) outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub point_index: usize,
    pub x_value_db: f64,
    pub trial_id: usize,
    pub seed: u64,
    pub scenario_name: String,
    pub method: Method,
    pub snr_db: f64,
    pub sir_db: Option<f64>,
    /// `None` on success, otherwise the error or panic message.
    pub failure: Option<String>,
    pub metrics: Option<MetricsReport>,
    /// K̂ per ramp.
    pub k_hat_per_ramp: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_ms: f64,
}

impl TrialRecord {
    pub fn is_valid(&self) -> bool {
        self.failure.is_none() && self.metrics.is_some()
    }
}

/// splitmix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scenario seed of a trial: splitmix64(splitmix64(splitmix64(base) ^ point) ^ trial).
pub fn trial_seed(base_seed: u64, point: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ point as u64) ^ trial as u64)
}

struct Engines {
    full: VsepEngine,
    object_only: VsepEngine,
    joint: VsepEngine,
}

impl Engines {
    fn new(spec: &SweepSpec) -> Result<Self> {
        let sc = &spec.scenario;
        let space = Arc::new(ThetaSpace::new(
            sc.ramp(),
            sc.aaf_inference.clone(),
            spec.vsep.theta_box,
            spec.vsep.theta_coarse_grid,
        )?);
        let mut full = spec.vsep.clone();
        full.interference_enabled = true;
        full.joint_dictionary = false;
        let mut oo = full.clone();
        oo.interference_enabled = false;
        let mut joint = full.clone();
        joint.joint_dictionary = true;
        Ok(Engines {
            full: VsepEngine::with_space(full, space.clone())?,
            object_only: VsepEngine::with_space(oo, space.clone())?,
            joint: VsepEngine::with_space(joint, space)?,
        })
    }
}

fn run_method(
    method: Method,
    frame: &SignalFrame,
    truth: &GroundTruth,
    spec: &SweepSpec,
    eng: &Engines,
) -> Result<PosteriorState> {
    match method {
        Method::Vsep => eng.full.run(frame),
        Method::ObjectOnly => eng.object_only.run(frame),
        Method::Joint => eng.joint.run(frame),
        Method::Zeroing => {
            let mask = InterferenceMask::from_frame(frame, truth.noise_precision, spec.mask_sigmas)?;
            zeroing_then_detect(frame, &mask, &eng.object_only)
        }
        Method::Mca => mca_then_detect(frame, &spec.mca, &eng.object_only),
        Method::NoInterference => {
            let parts = frame
                .parts
                .as_ref()
                .ok_or_else(|| Error::Input("frame has no decomposition".into()))?;
            eng.object_only
                .run(&SignalFrame::new(frame.config, &frame.samples - &parts.interference)?)
        }
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = p.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic".into()
    }
}

/// All methods on one (point, trial) frame.
fn run_trial(spec: &SweepSpec, eng: &Engines, point: usize, trial: usize) -> Vec<TrialRecord> {
    let x = spec.values[point];
    let sc = spec.scenario_at(x);
    let seed = trial_seed(spec.base_seed, point, trial);
    let base = |method: Method| TrialRecord {
        point_index: point,
        x_value_db: x,
        trial_id: trial,
        seed,
        scenario_name: sc.name.clone(),
        method,
        snr_db: sc.snr_db,
        sir_db: sc.sir_db,
        failure: None,
        metrics: None,
        k_hat_per_ramp: Vec::new(),
        iterations: 0,
        converged: false,
        wall_time_ms: 0.0,
    };
    let sampled = catch_unwind(AssertUnwindSafe(|| sample_scenario(&sc, &mut ChaCha8Rng::seed_from_u64(seed))))
        .unwrap_or_else(|p| Err(Error::Invariant(panic_message(p))));
    let (truth, frame) = match sampled {
        Ok(v) => v,
        Err(e) => {
            return spec
                .methods
                .iter()
                .map(|&m| TrialRecord {
                    failure: Some(format!("scenario: {e}")),
                    ..base(m)
                })
                .collect()
        }
    };
    let ramp = sc.ramp();
    let gen = sc.generator();
    let crlb_root = if spec.with_crlb && !truth.objects.is_empty() {
        catch_unwind(AssertUnwindSafe(|| crlb_beat_frequencies(&truth, &ramp, &sc.aaf_inference)))
            .ok()
            .and_then(|r| r.ok())
            .map(|v| (v.iter().sum::<f64>() / v.len() as f64).sqrt())
    } else {
        None
    };
    let coherence = if spec.with_coherence && !truth.objects.is_empty() {
        coherence_measure(&truth, &ramp, &gen).ok().map(|(l, r)| r / l)
    } else {
        None
    };
    let opts = EvalOptions {
        cutoff: spec.cutoff(),
        with_crlb: false,
        with_coherence: false,
    };
    spec.methods
        .iter()
        .map(|&m| {
            let start = Instant::now();
            let out = catch_unwind(AssertUnwindSafe(|| run_method(m, &frame, &truth, spec, eng)))
                .unwrap_or_else(|p| Err(Error::Invariant(panic_message(p))));
            let ms = start.elapsed().as_secs_f64() * 1e3;
            let mut rec = base(m);
            rec.wall_time_ms = ms;
            match out.and_then(|est| {
                evaluate(&truth, &est, &ramp, &gen, &sc.aaf_inference, opts, ms).map(|r| (est, r))
            }) {
                Ok((est, mut report)) => {
                    report.crlb_root = crlb_root;
                    report.coherence_value = coherence;
                    rec.k_hat_per_ramp = est.ramps.iter().map(|r| r.active.len()).collect();
                    rec.iterations = est.iterations;
                    rec.converged = est.converged;
                    rec.metrics = Some(report);
                }
                Err(e) => rec.failure = Some(e.to_string()),
            }
            rec
        })
        .collect()
}

/// Runs every (point, trial) job on a worker pool and returns the records in
/// (point, method, trial) order.
pub fn run_sweep_records(spec: &SweepSpec) -> Result<Vec<TrialRecord>> {
    spec.validate()?;
    let eng = Engines::new(spec)?;
    let jobs: Vec<(usize, usize)> = (0..spec.values.len())
        .flat_map(|p| (0..spec.trials_per_point).map(move |t| (p, t)))
        .collect();
    let work = || -> Vec<Vec<TrialRecord>> { jobs.par_iter().map(|&(p, t)| run_trial(spec, &eng, p, t)).collect() };
    let per_job = match spec.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut out: Vec<TrialRecord> = per_job.into_iter().flatten().collect();
    let method_rank = |m: Method| spec.methods.iter().position(|x| *x == m).unwrap_or(usize::MAX);
    out.sort_by_key(|r| (r.point_index, method_rank(r.method), r.trial_id));
    Ok(out)
}
