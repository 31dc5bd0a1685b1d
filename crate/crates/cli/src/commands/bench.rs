use std::fs;
use std::path::PathBuf;

use cellsearch::cellspace::{enumerate, CellSpec};
use cellsearch::devices::{measure_latency, profile_latency, DeviceProfile, LatencyReport};
use cellsearch::parallel::map_batch;

use crate::config::{load_macro, load_profile};
use crate::CliError;

pub struct Args {
    pub cell: Option<String>,
    pub macro_config: Option<PathBuf>,
    pub profiles: Vec<String>,
    pub measure: bool,
    pub repeats: usize,
    pub warmup: usize,
    pub all_depth: Option<usize>,
    pub out: Option<PathBuf>,
}

fn report_row(report: &LatencyReport) -> String {
    format!(
        "{},{},{},{},{}",
        report.device_name,
        report.cell.canonical(),
        report.seconds,
        report.method.as_str(),
        report.repeats
    )
}

pub fn run(args: Args) -> Result<(), CliError> {
    let has_profiles = !args.profiles.is_empty();
    if args.measure == has_profiles {
        return Err(CliError::Usage(
            "exactly one of --profile or --measure is required".to_string(),
        ));
    }
    if args.measure && args.repeats < 3 {
        return Err(CliError::Usage(format!(
            "--repeats must be at least 3 for measurement, got {}",
            args.repeats
        )));
    }
    let macro_cfg = load_macro(args.macro_config.as_deref())?;
    let profiles: Vec<DeviceProfile> = args
        .profiles
        .iter()
        .map(|spec| load_profile(spec, std::path::Path::new(".")))
        .collect::<Result<Vec<_>, _>>()?;

    if let Some(depth) = args.all_depth {
        return sweep(&args, depth, &macro_cfg, &profiles);
    }

    let Some(cell_text) = &args.cell else {
        return Err(CliError::Usage(
            "either --cell or --all-depth is required".to_string(),
        ));
    };
    let cell: CellSpec = cell_text
        .parse()
        .map_err(|e| CliError::Usage(format!("cell: {e}")))?;

    println!("device,cell,seconds,method,repeats");
    if args.measure {
        let report = measure_latency(&cell, &macro_cfg, args.repeats, args.warmup)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        println!("{}", report_row(&report));
        if let Some(iqr) = report.iqr_seconds {
            eprintln!("iqr_seconds: {iqr}");
        }
    } else {
        for profile in &profiles {
            let report = profile_latency(profile, &cell, &macro_cfg)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            println!("{}", report_row(&report));
        }
    }
    Ok(())
}

/// Sweeps every cell of the depth and writes one CSV row per cell with a
/// seconds column per device, sorted ascending by the first device.
fn sweep(
    args: &Args,
    depth: usize,
    macro_cfg: &cellsearch::MacroConfig,
    profiles: &[DeviceProfile],
) -> Result<(), CliError> {
    let cells = enumerate(depth).map_err(|e| CliError::Usage(e.to_string()))?;

    let mut rows: Vec<(Vec<f64>, String)> = if args.measure {
        // measured sweeps serialize internally; keep the loop sequential
        let mut rows = Vec::with_capacity(cells.len());
        for cell in &cells {
            let report = measure_latency(cell, macro_cfg, args.repeats, args.warmup)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            rows.push((vec![report.seconds], cell.canonical()));
        }
        rows
    } else {
        let results = map_batch(&cells, |cell| {
            profiles
                .iter()
                .map(|p| profile_latency(p, cell, macro_cfg).map(|r| r.seconds))
                .collect::<Result<Vec<f64>, _>>()
                .map(|seconds| (seconds, cell.canonical()))
        });
        results
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Runtime(e.to_string()))?
    };

    rows.sort_by(|a, b| {
        a.0[0]
            .partial_cmp(&b.0[0])
            .unwrap()
            .then_with(|| a.1.cmp(&b.1))
    });

    let mut out = String::from("cell");
    if args.measure {
        out.push_str(",host");
    } else {
        for profile in profiles {
            out.push(',');
            out.push_str(&profile.name);
        }
    }
    out.push('\n');
    for (seconds, cell) in &rows {
        out.push_str(cell);
        for s in seconds {
            out.push(',');
            out.push_str(&s.to_string());
        }
        out.push('\n');
    }

    match &args.out {
        Some(path) => fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(())
}
