use std::env;
use std::path::{Path, PathBuf};

use cellsearch::engine::{self, ledger, SelectionMode};

use crate::config::EngineConfig;
use crate::CliError;

/// Loads the config, applies CLI overrides, runs the search and writes the
/// run directory. Precedence for the run dir: --out, then CELLSEARCH_RUN_DIR,
/// then the config's run_dir.
pub fn run(
    config_path: &Path,
    out: Option<&Path>,
    seed: Option<u64>,
    mode: Option<SelectionMode>,
) -> Result<(), CliError> {
    let (engine_config, base_dir) = EngineConfig::load(config_path)?;
    let config_run_dir = engine_config.run_dir.clone();
    let mut config = engine_config.into_search_config(&base_dir)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(mode) = mode {
        config.mode = mode;
    }

    let run_dir: PathBuf = match out {
        Some(path) => path.to_path_buf(),
        None => match env::var_os("CELLSEARCH_RUN_DIR") {
            Some(dir) => PathBuf::from(dir),
            None => config_run_dir.ok_or_else(|| {
                CliError::Usage(
                    "no run directory: pass --out, set CELLSEARCH_RUN_DIR or put run_dir in the config"
                        .to_string(),
                )
            })?,
        },
    };

    let run_ledger = engine::run(&config)?;
    ledger::write_run_dir(&run_ledger, &run_dir)?;

    println!("run directory: {}", run_dir.display());
    println!(
        "candidates scored: {} front: {}",
        run_ledger.candidates.len(),
        run_ledger.front.len()
    );
    for (device, cell) in &run_ledger.report.device_picks {
        println!("device-pick[{device}]: {cell}");
    }
    println!("panacea-pick: {}", run_ledger.report.panacea_pick);
    Ok(())
}
