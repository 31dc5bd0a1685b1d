//! The engine config file: the search parameters plus paths — device
//! profiles by bundled name or JSON path, and an optional default run
//! directory. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cellsearch::costmodel::MacroConfig;
use cellsearch::devices::DeviceProfile;
use cellsearch::engine::{EvaluatorConfig, SearchConfig, SelectionMode};

use crate::CliError;

fn default_start_depth() -> usize {
    2
}

fn default_end_depth() -> usize {
    4
}

fn default_k() -> usize {
    128
}

fn default_evaluator() -> EvaluatorConfig {
    EvaluatorConfig::Oracle { noise: true }
}

fn default_profiles() -> Vec<String> {
    vec!["gpu-like".to_string(), "mobile-like".to_string()]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: SelectionMode,
    #[serde(default = "default_start_depth")]
    pub start_depth: usize,
    #[serde(default = "default_end_depth")]
    pub end_depth: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_evaluator")]
    pub evaluator: EvaluatorConfig,
    /// Defaults to the 32x32 three-stage macro.
    #[serde(default)]
    pub macro_config: Option<MacroConfig>,
    /// Bundled profile names or JSON file paths (relative to the config
    /// file's directory).
    #[serde(default = "default_profiles")]
    pub device_profiles: Vec<String>,
    #[serde(default)]
    pub measure_host_latency: bool,
    #[serde(default)]
    pub hard_constraints: BTreeMap<String, f64>,
    /// Default run directory, overridable by --out or CELLSEARCH_RUN_DIR.
    #[serde(default)]
    pub run_dir: Option<PathBuf>,
}

fn default_mode() -> SelectionMode {
    SelectionMode::Pareto
}

pub fn load_profile(spec: &str, base_dir: &Path) -> Result<DeviceProfile, CliError> {
    if let Some(profile) = DeviceProfile::bundled(spec) {
        return Ok(profile);
    }
    let path = {
        let p = Path::new(spec);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    };
    let text = fs::read_to_string(&path).map_err(|e| {
        CliError::Usage(format!(
            "cannot read device profile {} (not a bundled name either): {e}",
            path.display()
        ))
    })?;
    DeviceProfile::from_json(&text).map_err(|e| CliError::Usage(e.to_string()))
}

impl EngineConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let config: EngineConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok((config, base_dir))
    }

    /// Resolves profile references and assembles the engine config.
    pub fn into_search_config(self, base_dir: &Path) -> Result<SearchConfig, CliError> {
        let devices = self
            .device_profiles
            .iter()
            .map(|spec| load_profile(spec, base_dir))
            .collect::<Result<Vec<_>, _>>()?;
        let config = SearchConfig {
            seed: self.seed,
            mode: self.mode,
            start_depth: self.start_depth,
            end_depth: self.end_depth,
            k: self.k,
            evaluator: self.evaluator,
            macro_config: self.macro_config.unwrap_or_else(MacroConfig::cifar_like),
            devices,
            measure_host_latency: self.measure_host_latency,
            hard_constraints: self.hard_constraints,
            ..SearchConfig::default()
        };
        config.validate().map_err(CliError::from)?;
        Ok(config)
    }
}

/// Loads a macro config JSON, or the default when no path is given.
pub fn load_macro(path: Option<&Path>) -> Result<MacroConfig, CliError> {
    match path {
        None => Ok(MacroConfig::cifar_like()),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read macro config {}: {e}", path.display()))
            })?;
            let config: MacroConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("macro config {}: {e}", path.display())))?;
            config
                .validate()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(config)
        }
    }
}
