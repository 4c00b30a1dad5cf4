use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fmcw_vsep::harness::{
    load_mca_config, load_scenario, load_vsep_config, parse_values, run_sweep, Axis, Method, SweepSpec,
};
use fmcw_vsep::metrics::crlb_beat_frequencies;
use fmcw_vsep::synth::{preset, preset_names, sample_scenario};
use fmcw_vsep::Result;

#[derive(Parser)]
#[command(name = "vsep", about = "Interference-aware FMCW radar signal separation: simulation and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelError {
    Butterworth,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo sweep over SNR or SIR.
    Run {
        /// Preset name or scenario TOML file.
        #[arg(long)]
        scenario: String,
        /// Swept quantity: snr or sir.
        #[arg(long, default_value = "snr")]
        sweep: String,
        /// "a,b,c" or "start:stop:step" in dB.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Comma-separated: vsep, object-only, joint, zeroing, mca, no-interference.
        #[arg(long, default_value = "vsep")]
        methods: String,
        /// Base seed; defaults to the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Generate interference with a different filter than inference assumes.
        #[arg(long, value_enum)]
        model_error: Option<ModelError>,
        #[arg(long)]
        threads: Option<usize>,
        /// Inference settings TOML.
        #[arg(long)]
        vsep_config: Option<PathBuf>,
        /// MCA settings TOML.
        #[arg(long)]
        mca_config: Option<PathBuf>,
        /// Assignment cutoff in normalized frequency (default 3/N).
        #[arg(long)]
        cutoff: Option<f64>,
        /// Skip the per-trial CRLB.
        #[arg(long)]
        no_crlb: bool,
    },
    /// Scenario presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Beat-frequency CRLB of one drawn scenario.
    Crlb {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        sir: Option<f64>,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// List preset names.
    List,
    /// Print a preset as TOML.
    Show { name: String },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            sweep,
            values,
            trials,
            methods,
            seed,
            out,
            model_error,
            threads,
            vsep_config,
            mca_config,
            cutoff,
            no_crlb,
        } => {
            let mut sc = load_scenario(&scenario)?;
            if model_error.is_some() {
                sc = sc.with_butterworth_model_error();
            }
            let methods = methods
                .split(',')
                .map(|m| m.trim().parse::<Method>())
                .collect::<Result<Vec<_>>>()?;
            let mut spec = SweepSpec::new(sc, sweep.parse::<Axis>()?, parse_values(&values)?, trials, methods);
            if let Some(s) = seed {
                spec.base_seed = s;
            }
            if let Some(p) = vsep_config {
                spec.vsep = load_vsep_config(&p)?;
            }
            if let Some(p) = mca_config {
                spec.mca = load_mca_config(&p)?;
            }
            spec.cutoff = cutoff;
            spec.with_crlb = !no_crlb;
            spec.threads = threads;
            let (summary, records) = run_sweep(&spec, &out)?;
            let failed = records.iter().filter(|r| !r.is_valid()).count();
            println!(
                "{} records ({} failed), {} aggregate rows, written to {}",
                records.len(),
                failed,
                summary.points.len(),
                out.display()
            );
            for p in &summary.points {
                let f = |m: &str| p.mean(m).map_or("-".to_string(), |v| format!("{v:.3e}"));
                println!(
                    "{:>7.2} dB {:<16} det {} miss {} fa {} rmse {} crlb {}",
                    p.x_value_db,
                    p.method.name(),
                    f("detection_rate"),
                    f("n_misdetections"),
                    f("n_false_alarms"),
                    f("rmse_pooled"),
                    f("crlb_root"),
                );
            }
            Ok(())
        }
        Command::Presets { action } => {
            match action {
                PresetAction::List => {
                    for name in preset_names() {
                        println!("{name}");
                    }
                }
                PresetAction::Show { name } => {
                    let c = preset(&name).ok_or_else(|| {
                        fmcw_vsep::Error::Input(format!("no preset `{name}` ({})", preset_names().join(", ")))
                    })?;
                    let text = toml::to_string(&c).map_err(|e| fmcw_vsep::Error::Schema(e.to_string()))?;
                    print!("{text}");
                }
            }
            Ok(())
        }
        Command::Crlb { scenario, seed, snr, sir } => {
            let mut sc = load_scenario(&scenario)?;
            if let Some(s) = snr {
                sc.snr_db = s;
            }
            if sir.is_some() {
                sc.sir_db = sir;
            }
            let seed = seed.unwrap_or(sc.seed);
            let (truth, frame) = sample_scenario(&sc, &mut ChaCha8Rng::seed_from_u64(seed))?;
            let bounds = crlb_beat_frequencies(&truth, &frame.config, &sc.aaf_inference)?;
            for (o, v) in truth.objects.iter().zip(&bounds) {
                println!(
                    "beat {:+.6} doppler {:+.6} |alpha| {:.3e} root-CRLB {:.3e}",
                    o.zeta.beat,
                    o.zeta.doppler,
                    o.weight.norm(),
                    v.sqrt()
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
