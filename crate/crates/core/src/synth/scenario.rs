//! Scenario descriptions and random ground-truth draws.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    nearest_grid_index, wrap_half, AafModel, ChirpParams, InterferenceBurst, ObjectComponent, RampConfig, SignalFrame,
    Zeta,
};
use crate::synth::{render_frame, scale_to_snr_sir, Generator, GroundTruth};
use crate::vsep::theta::aaf_band_edge;
use crate::C64;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectMode {
    /// Components listed in `object_delays_ns` etc., random phases.
    Fixed,
    /// `n_objects` components with uniform delays/Dopplers and path-loss magnitudes.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterferenceMode {
    None,
    /// Bursts listed in `burst_*`, channel from `interference_delays_ns`.
    Fixed,
    /// One interferer drawn from the `interferer_*` parameter sets; which
    /// ramps it hits follows from a random time offset.
    Interferer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenerationMode {
    /// Interference from the envelope model with `aaf_generation`.
    Model,
    /// Interference from time-domain filtering with `aaf_generation`.
    Convolved,
}

/// Everything needed to draw a frame. Every field is a key of the scenario
/// file; see [`crate::harness::load_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,

    pub f0: f64,
    pub slope_k: f64,
    pub t_sw: f64,
    pub t_p: f64,
    pub n_fast: usize,
    pub n_ramps: usize,
    pub f_s: f64,

    pub object_mode: ObjectMode,
    pub object_delays_ns: Vec<f64>,
    pub object_dopplers_hz: Vec<f64>,
    pub object_magnitudes: Vec<f64>,
    pub n_objects: usize,
    pub object_delay_range_ns: [f64; 2],
    pub object_doppler_range_hz: [f64; 2],
    /// |α|² in dB is −`object_path_loss`·log10(τc₀ + 1) + U(jitter).
    pub object_path_loss: f64,
    pub object_jitter_db: [f64; 2],

    pub interference_mode: InterferenceMode,
    pub burst_ramps: Vec<usize>,
    pub burst_delta_f0: Vec<f64>,
    pub burst_delta_k: Vec<f64>,
    pub interference_delays_ns: Vec<f64>,
    pub interference_magnitudes: Vec<f64>,
    /// Channel size in interferer mode; the first component sits at delay 0.
    pub n_interference_components: usize,
    pub interference_delay_range_ns: [f64; 2],
    pub interference_path_loss: f64,
    pub interference_jitter_db: [f64; 2],
    pub interferer_f0: Vec<f64>,
    pub interferer_slope: Vec<f64>,
    pub interferer_t_p: Vec<f64>,
    pub interferer_n_ramps: Vec<usize>,
    pub interferer_t_sw: f64,

    pub aaf_inference: AafModel,
    pub aaf_generation: AafModel,
    pub generation: GenerationMode,
    pub oversampling: usize,

    pub snr_db: f64,
    /// Absent: interference weights are not rescaled.
    pub sir_db: Option<f64>,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn ramp(&self) -> RampConfig {
        RampConfig {
            f0: self.f0,
            slope_k: self.slope_k,
            t_sw: self.t_sw,
            t_p: self.t_p,
            n_fast: self.n_fast,
            n_ramps: self.n_ramps,
            f_s: self.f_s,
        }
    }

    /// Interference grid size used for ground-truth bin indices (2N).
    pub fn grid_size(&self) -> usize {
        2 * self.n_fast
    }

    pub fn generator(&self) -> Generator {
        match self.generation {
            GenerationMode::Model => Generator::Model(self.aaf_generation.clone()),
            GenerationMode::Convolved => Generator::Convolved(self.aaf_generation.clone(), self.oversampling),
        }
    }

    /// Switches generation to a Butterworth filter applied by convolution
    /// while inference keeps its AAF.
    pub fn with_butterworth_model_error(mut self) -> Self {
        self.aaf_generation = AafModel::matched_butterworth(self.f_s);
        self.generation = GenerationMode::Convolved;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ramp = self.ramp();
        ramp.validate()?;
        self.aaf_inference.validate(self.f_s)?;
        self.aaf_generation.validate(self.f_s)?;
        if !self.snr_db.is_finite() {
            return Err(Error::Config(format!("snr_db {} is not finite", self.snr_db)));
        }
        if self.generation == GenerationMode::Convolved && self.oversampling < 4 {
            return Err(Error::Config(format!("oversampling {} below 4", self.oversampling)));
        }
        let range_ok = |r: &[f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        match self.object_mode {
            ObjectMode::Fixed => {
                let l = self.object_delays_ns.len();
                if self.object_dopplers_hz.len() != l || self.object_magnitudes.len() != l {
                    return Err(Error::Config(
                        "object_delays_ns, object_dopplers_hz and object_magnitudes differ in length".into(),
                    ));
                }
            }
            ObjectMode::Random => {
                for (key, r) in [
                    ("object_delay_range_ns", &self.object_delay_range_ns),
                    ("object_doppler_range_hz", &self.object_doppler_range_hz),
                    ("object_jitter_db", &self.object_jitter_db),
                ] {
                    if !range_ok(r) {
                        return Err(Error::Config(format!("{key} is not an ascending finite range")));
                    }
                }
            }
        }
        match self.interference_mode {
            InterferenceMode::None => {}
            InterferenceMode::Fixed => {
                let b = self.burst_ramps.len();
                if self.burst_delta_f0.len() != b || self.burst_delta_k.len() != b {
                    return Err(Error::Config("burst_ramps, burst_delta_f0 and burst_delta_k differ in length".into()));
                }
                let mut seen = vec![false; self.n_ramps];
                for &p in &self.burst_ramps {
                    if p >= self.n_ramps {
                        return Err(Error::Config(format!("burst ramp {p} outside the frame")));
                    }
                    if std::mem::replace(&mut seen[p], true) {
                        return Err(Error::Config(format!("two bursts on ramp {p}")));
                    }
                }
                if self.interference_delays_ns.len() != self.interference_magnitudes.len()
                    || self.interference_delays_ns.is_empty()
                {
                    return Err(Error::Config(
                        "interference_delays_ns and interference_magnitudes must be non-empty and equally long".into(),
                    ));
                }
            }
            InterferenceMode::Interferer => {
                let m = self.interferer_f0.len();
                if m == 0
                    || self.interferer_slope.len() != m
                    || self.interferer_t_p.len() != m
                    || self.interferer_n_ramps.len() != m
                {
                    return Err(Error::Config("interferer_* parameter lists must be non-empty and equally long".into()));
                }
                if self.n_interference_components == 0 {
                    return Err(Error::Config("n_interference_components must be positive".into()));
                }
                if self.interferer_slope.iter().any(|&k| k == self.slope_k) {
                    return Err(Error::Config("interferer slope equals the victim slope".into()));
                }
                for (key, r) in [
                    ("interference_delay_range_ns", &self.interference_delay_range_ns),
                    ("interference_jitter_db", &self.interference_jitter_db),
                ] {
                    if !range_ok(r) {
                        return Err(Error::Config(format!("{key} is not an ascending finite range")));
                    }
                }
            }
        }
        Ok(())
    }

    fn base(name: &str, ramp: RampConfig) -> Self {
        ScenarioConfig {
            name: name.into(),
            f0: ramp.f0,
            slope_k: ramp.slope_k,
            t_sw: ramp.t_sw,
            t_p: ramp.t_p,
            n_fast: ramp.n_fast,
            n_ramps: ramp.n_ramps,
            f_s: ramp.f_s,
            object_mode: ObjectMode::Fixed,
            object_delays_ns: vec![],
            object_dopplers_hz: vec![],
            object_magnitudes: vec![],
            n_objects: 0,
            object_delay_range_ns: [3.97, 127.0],
            object_doppler_range_hz: [-5e3, 5e3],
            object_path_loss: 40.0,
            object_jitter_db: [-3.0, 3.0],
            interference_mode: InterferenceMode::None,
            burst_ramps: vec![],
            burst_delta_f0: vec![],
            burst_delta_k: vec![],
            interference_delays_ns: vec![],
            interference_magnitudes: vec![],
            n_interference_components: 0,
            interference_delay_range_ns: [3.97, 127.0],
            interference_path_loss: 20.0,
            interference_jitter_db: [-10.0, 0.0],
            interferer_f0: vec![],
            interferer_slope: vec![],
            interferer_t_p: vec![],
            interferer_n_ramps: vec![],
            interferer_t_sw: ramp.t_sw,
            aaf_inference: AafModel::default_raised_cosine(ramp.f_s),
            aaf_generation: AafModel::default_raised_cosine(ramp.f_s),
            generation: GenerationMode::Model,
            oversampling: 8,
            snr_db: 25.0,
            sir_db: None,
            seed: 0,
        }
    }

    /// One object at 80.06 ns, one burst with a single delay-0 component.
    pub fn simulation1() -> Self {
        let mut c = Self::base("simulation1", RampConfig::simulation1());
        c.object_delays_ns = vec![80.06];
        c.object_dopplers_hz = vec![0.0];
        c.object_magnitudes = vec![1.0];
        c.interference_mode = InterferenceMode::Fixed;
        // interferer at 79.01 GHz with slope 9.2e12 Hz/s
        c.burst_ramps = vec![0];
        c.burst_delta_f0 = vec![10e6];
        c.burst_delta_k = vec![-0.8e12];
        c.interference_delays_ns = vec![0.0];
        c.interference_magnitudes = vec![1.0];
        c.snr_db = 25.0;
        c.sir_db = Some(0.0);
        c
    }

    /// Ten random objects over 16 ramps, one interferer from three parameter sets.
    pub fn simulation2() -> Self {
        let mut c = Self::base("simulation2", RampConfig::simulation2());
        c.object_mode = ObjectMode::Random;
        c.n_objects = 10;
        c.interference_mode = InterferenceMode::Interferer;
        c.n_interference_components = 10;
        c.interferer_f0 = vec![79.002e9, 79.004e9, 79.008e9];
        c.interferer_slope = vec![9.8321e12, 9.7122e12, 9.3925e12];
        c.interferer_t_p = vec![75.01e-6, 50.01e-6, 25.02e-6];
        c.interferer_n_ramps = vec![2, 4, 8];
        c.interferer_t_sw = 25.02e-6;
        c.snr_db = 40.0;
        c.sir_db = Some(-20.0);
        c
    }

    /// Smaller multi-target geometry: N = 64, P = 8, five objects and five
    /// channel components.
    pub fn simulation2_reduced() -> Self {
        let mut c = Self::simulation2();
        c.name = "simulation2-reduced".into();
        c.n_fast = 64;
        c.n_ramps = 8;
        c.n_objects = 5;
        c.n_interference_components = 5;
        c
    }

    /// Pure noise on the single-ramp geometry.
    pub fn noise_only() -> Self {
        let mut c = Self::base("noise-only", RampConfig::simulation1());
        c.snr_db = 0.0;
        c
    }
}

pub fn preset_names() -> &'static [&'static str] {
    &["simulation1", "simulation2", "simulation2-reduced", "noise-only"]
}

pub fn preset(name: &str) -> Option<ScenarioConfig> {
    match name {
        "simulation1" => Some(ScenarioConfig::simulation1()),
        "simulation2" => Some(ScenarioConfig::simulation2()),
        "simulation2-reduced" => Some(ScenarioConfig::simulation2_reduced()),
        "noise-only" => Some(ScenarioConfig::noise_only()),
        _ => None,
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..r[1])
    }
}

fn random_phase<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI))
}

fn draw_objects<R: Rng + ?Sized>(c: &ScenarioConfig, rng: &mut R) -> Vec<ObjectComponent> {
    let ramp = c.ramp();
    let make = |tau: f64, nu: f64, mag: f64, ph: C64| ObjectComponent {
        zeta: Zeta::new(wrap_half(c.slope_k * tau / c.f_s), wrap_half(nu * ramp.t_p)),
        weight: ph * mag,
    };
    match c.object_mode {
        ObjectMode::Fixed => (0..c.object_delays_ns.len())
            .map(|i| {
                let ph = random_phase(rng);
                make(c.object_delays_ns[i] * 1e-9, c.object_dopplers_hz[i], c.object_magnitudes[i], ph)
            })
            .collect(),
        ObjectMode::Random => (0..c.n_objects)
            .map(|_| {
                let tau = uniform(rng, c.object_delay_range_ns) * 1e-9;
                let nu = if c.n_ramps > 1 {
                    uniform(rng, c.object_doppler_range_hz)
                } else {
                    0.0
                };
                let db = -c.object_path_loss * (tau * SPEED_OF_LIGHT + 1.0).log10() + uniform(rng, c.object_jitter_db);
                let ph = random_phase(rng);
                make(tau, nu, 10f64.powf(db / 20.0), ph)
            })
            .collect(),
    }
}

/// Delays (s) and complex weights of the interference channel.
fn draw_channel<R: Rng + ?Sized>(c: &ScenarioConfig, rng: &mut R) -> (Vec<f64>, Vec<C64>) {
    match c.interference_mode {
        InterferenceMode::Fixed => c
            .interference_delays_ns
            .iter()
            .zip(&c.interference_magnitudes)
            .map(|(d, m)| (d * 1e-9, random_phase(rng) * *m))
            .unzip(),
        _ => {
            let mut delays = vec![0.0];
            let mut weights = vec![random_phase(rng)];
            for _ in 1..c.n_interference_components {
                let tau = uniform(rng, c.interference_delay_range_ns) * 1e-9;
                let db = -c.interference_path_loss * (tau * SPEED_OF_LIGHT + 1.0).log10()
                    + uniform(rng, c.interference_jitter_db);
                delays.push(tau);
                weights.push(random_phase(rng) * 10f64.powf(db / 20.0));
            }
            (delays, weights)
        }
    }
}

fn make_burst(
    ramp_index: usize,
    chirp: ChirpParams,
    slope_i: f64,
    delays: &[f64],
    weights: &[C64],
    f_s: f64,
    grid_size: usize,
    phase: C64,
) -> InterferenceBurst {
    let freqs: Vec<f64> = delays.iter().map(|&tau| wrap_half(slope_i * tau / f_s)).collect();
    InterferenceBurst {
        ramp_index,
        chirp,
        grid_indices: freqs.iter().map(|&f| nearest_grid_index(f, grid_size)).collect(),
        freqs,
        weights: weights.iter().map(|w| w * phase).collect(),
    }
}

/// Bursts of one interferer. A start ramp p0 and a crossing time inside the
/// sampled window of p0 are drawn; the interferer timing offset follows from
/// them, and every later interferer ramp whose burst crosses the victim's
/// filter band within some ramp's window adds a burst there (first one wins).
fn draw_interferer<R: Rng + ?Sized>(
    c: &ScenarioConfig,
    delays: &[f64],
    weights: &[C64],
    rng: &mut R,
) -> Vec<InterferenceBurst> {
    let ramp = c.ramp();
    let j = rng.gen_range(0..c.interferer_f0.len());
    let (f_i, k_i, tp_i, p_i) = (
        c.interferer_f0[j],
        c.interferer_slope[j],
        c.interferer_t_p[j],
        c.interferer_n_ramps[j],
    );
    let df0 = f_i - c.f0;
    let dk = k_i - c.slope_k;
    let spacing = ((tp_i / c.t_p).round() as usize).max(1);
    let span = spacing * (p_i.saturating_sub(1));
    let last_start = c.n_ramps.saturating_sub(1).saturating_sub(span);
    let p0 = rng.gen_range(0..=last_start);
    let t_obs = ramp.observation_time();
    // the interferer must be transmitting at the crossing: t_c·k/k_I − Δf0/k_I ∈ [0, T_swI]
    let lo = (df0 / c.slope_k).max(0.0);
    let hi = ((c.interferer_t_sw * k_i + df0) / c.slope_k).min(t_obs);
    let t_c0 = if lo < hi { rng.gen_range(lo..hi) } else { rng.gen_range(0.0..t_obs) };
    // T̄0(p, p_I) = T_p·p − T̄ − T_pI·p_I; the burst on ramp p crosses at −Δf̃0/Δk
    let tbar0_start = (-dk * t_c0 - df0) / k_i;
    let tbar = c.t_p * p0 as f64 - tbar0_start;
    let edge = aaf_band_edge(&c.aaf_generation, c.f_s);
    let half_dur = edge / dk.abs();
    let mut bursts: Vec<InterferenceBurst> = Vec::new();
    for pi in 0..p_i {
        for p in 0..c.n_ramps {
            if bursts.iter().any(|b| b.ramp_index == p) {
                continue;
            }
            let tbar0 = c.t_p * p as f64 - tbar - tp_i * pi as f64;
            let df = df0 + k_i * tbar0;
            let chirp = ChirpParams::new(df, dk);
            let t_c = chirp.crossing_time();
            let t_tx = t_c + tbar0;
            if t_c < -half_dur || t_c > t_obs + half_dur || !(0.0..=c.interferer_t_sw).contains(&t_tx) {
                continue;
            }
            let phase = random_phase(rng);
            bursts.push(make_burst(p, chirp, k_i, delays, weights, c.f_s, c.grid_size(), phase));
        }
    }
    bursts.sort_by_key(|b| b.ramp_index);
    bursts
}

/// Unscaled ground truth.
pub(crate) fn draw_truth<R: Rng + ?Sized>(c: &ScenarioConfig, rng: &mut R) -> GroundTruth {
    let objects = draw_objects(c, rng);
    let bursts = match c.interference_mode {
        InterferenceMode::None => vec![],
        InterferenceMode::Fixed => {
            let (delays, weights) = draw_channel(c, rng);
            c.burst_ramps
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    let chirp = ChirpParams::new(c.burst_delta_f0[i], c.burst_delta_k[i]);
                    let slope_i = c.slope_k + chirp.delta_k;
                    let phase = if i == 0 { C64::new(1.0, 0.0) } else { random_phase(rng) };
                    make_burst(p, chirp, slope_i, &delays, &weights, c.f_s, c.grid_size(), phase)
                })
                .collect()
        }
        InterferenceMode::Interferer => {
            let (delays, weights) = draw_channel(c, rng);
            draw_interferer(c, &delays, &weights, rng)
        }
    };
    GroundTruth {
        objects,
        bursts,
        noise_precision: 1.0,
        grid_size: c.grid_size(),
    }
}

/// Draws ground truth, scales it to the configured SNR/SIR (noise precision 1)
/// and renders the noisy frame. Without objects the weights stay unscaled.
pub fn sample_scenario<R: Rng + ?Sized>(c: &ScenarioConfig, rng: &mut R) -> Result<(GroundTruth, SignalFrame)> {
    c.validate()?;
    let ramp = c.ramp();
    let gen = c.generator();
    let raw = draw_truth(c, rng);
    let truth = if raw.objects.is_empty() {
        raw
    } else {
        let sir = if raw.bursts.is_empty() { None } else { c.sir_db };
        scale_to_snr_sir(&raw, c.snr_db, sir, &ramp, &gen)?
    };
    let frame = render_frame(&truth, &ramp, &gen, rng)?;
    Ok((truth, frame))
}
