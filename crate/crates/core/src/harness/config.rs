//! TOML scenario and inference settings. A file either lists every field or
//! names a preset under `base` and overrides some of its fields.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::baselines::McaConfig;
use crate::error::{Error, Result};
use crate::synth::{preset, preset_names, ScenarioConfig};
use crate::vsep::VsepConfig;

const BASE_KEY: &str = "base";

fn merge<T: Serialize + DeserializeOwned>(
    text: &str,
    what: &str,
    base_of: impl Fn(&str) -> Option<T>,
) -> Result<T> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Schema(format!("{what}: {}", e.message())))?;
    let merged = match table.remove(BASE_KEY) {
        Some(toml::Value::String(name)) => {
            let base = base_of(&name).ok_or_else(|| Error::Schema(format!("{what}: unknown base `{name}`")))?;
            let mut base_table = toml::Table::try_from(&base)
                .map_err(|e| Error::Schema(format!("{what}: cannot serialize base `{name}`: {e}")))?;
            for (k, v) in table {
                base_table.insert(k, v);
            }
            base_table
        }
        Some(_) => return Err(Error::Schema(format!("{what}: `{BASE_KEY}` must be a string"))),
        None => table,
    };
    T::deserialize(merged).map_err(|e| Error::Schema(format!("{what}: {}", e.message())))
}

/// Scenario from TOML text.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let c: ScenarioConfig = merge(text, "scenario", preset)?;
    c.validate()?;
    Ok(c)
}

/// Scenario from a file, or a preset when `name_or_path` is a preset name.
pub fn load_scenario(name_or_path: &str) -> Result<ScenarioConfig> {
    if let Some(c) = preset(name_or_path) {
        return Ok(c);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(Error::Input(format!(
            "`{name_or_path}` is neither a preset ({}) nor a file",
            preset_names().join(", ")
        )));
    }
    parse_scenario(&std::fs::read_to_string(path)?)
}

/// Inference settings from TOML text; the only base is `default`.
pub fn parse_vsep_config(text: &str) -> Result<VsepConfig> {
    let c: VsepConfig = merge(text, "vsep config", |n| (n == "default").then(VsepConfig::default))?;
    c.validate()?;
    Ok(c)
}

pub fn load_vsep_config(path: &Path) -> Result<VsepConfig> {
    parse_vsep_config(&std::fs::read_to_string(path)?)
}

/// MCA settings from TOML text; the only base is `default`.
pub fn parse_mca_config(text: &str) -> Result<McaConfig> {
    merge(text, "mca config", |n| (n == "default").then(McaConfig::default))
}

pub fn load_mca_config(path: &Path) -> Result<McaConfig> {
    parse_mca_config(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_by_name() {
        let c = load_scenario("simulation1").unwrap();
        assert_eq!((c.n_fast, c.n_ramps, c.f_s), (256, 1, 10.2e6));
        assert_eq!(c.object_delays_ns, vec![80.06]);
        let c = load_scenario("simulation2").unwrap();
        assert_eq!((c.n_fast, c.n_ramps, c.n_objects, c.n_interference_components), (128, 16, 10, 10));
    }

    #[test]
    fn base_and_override() {
        let c = parse_scenario("base = \"simulation1\"\nsnr_db = 12.5\nsir_db = -3.0\n").unwrap();
        assert_eq!(c.snr_db, 12.5);
        assert_eq!(c.sir_db, Some(-3.0));
        assert_eq!(c.n_fast, 256);
    }

    #[test]
    fn misspelled_key_is_named() {
        let e = parse_scenario("base = \"simulation1\"\nsnr_bd = 12.5\n").unwrap_err();
        assert!(matches!(&e, Error::Schema(m) if m.contains("snr_bd")), "{e}");
        let e = parse_vsep_config("base = \"default\"\nmax_iteration = 3\n").unwrap_err();
        assert!(matches!(&e, Error::Schema(m) if m.contains("max_iteration")), "{e}");
    }

    #[test]
    fn missing_key_is_named() {
        let full = toml::to_string(&ScenarioConfig::simulation1()).unwrap();
        assert_eq!(parse_scenario(&full).unwrap(), ScenarioConfig::simulation1());
        let without: String = full.lines().filter(|l| !l.starts_with("slope_k")).collect::<Vec<_>>().join("\n");
        let e = parse_scenario(&without).unwrap_err();
        assert!(matches!(&e, Error::Schema(m) if m.contains("slope_k")), "{e}");
    }

    #[test]
    fn vsep_overrides() {
        let c = parse_vsep_config("base = \"default\"\nthreshold_object_db = 12.0\n[theta_box]\ndk_min_rel = 0.02\ndk_max_rel = 0.3\ncrossing_margin = 0.5\n").unwrap();
        assert_eq!(c.threshold_object_db, 12.0);
        assert_eq!(c.theta_box.dk_max_rel, 0.3);
        let m = parse_mca_config("base = \"default\"\niterations = 7\n").unwrap();
        assert_eq!(m.iterations, 7);
    }
}
