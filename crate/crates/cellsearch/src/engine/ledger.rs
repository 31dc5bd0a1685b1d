//! Rendering a [`RunLedger`](super::RunLedger) into its on-disk run
//! directory: a config snapshot, a one-row-per-candidate CSV, a
//! machine-readable front file, per-iteration surrogate checkpoints and a
//! short human-readable report. All output is deterministic: re-running the
//! same config produces byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use super::{latency_objective, RunLedger};

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// The ledger CSV: one row per scored candidate in (iteration, canonical
/// cell) order. Latency columns appear per configured device; the measured
/// column appears only when host measurement was enabled.
pub fn ledger_csv(ledger: &RunLedger) -> String {
    let mut header = vec![
        "iteration".to_string(),
        "depth".to_string(),
        "cell".to_string(),
        "accuracy".to_string(),
        "predicted".to_string(),
        "params".to_string(),
        "macs".to_string(),
    ];
    for device in &ledger.config.devices {
        header.push(latency_objective(&device.name));
    }
    header.push("memory_bytes".to_string());
    if ledger.config.measure_host_latency {
        header.push("measured_seconds".to_string());
    }
    header.push("selected".to_string());

    let mut out = header.join(",");
    out.push('\n');
    for candidate in &ledger.candidates {
        let mut row = vec![
            candidate.iteration.to_string(),
            candidate.depth.to_string(),
            candidate.cell.canonical(),
            fmt_opt(candidate.evaluation.as_ref().map(|e| e.accuracy)),
            fmt_opt(candidate.predicted_accuracy),
            candidate.cost.params.to_string(),
            candidate.cost.macs.to_string(),
        ];
        for report in &candidate.latencies {
            row.push(report.seconds.to_string());
        }
        row.push(candidate.memory_bytes.to_string());
        if ledger.config.measure_host_latency {
            row.push(fmt_opt(candidate.measured.as_ref().map(|m| m.seconds)));
        }
        row.push(if candidate.selected { "1" } else { "0" }.to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Every latency report of the run, one row per (device, candidate):
/// `device, cell, seconds, method, repeats`. Measured host rows appear after
/// the profile rows of their candidate.
pub fn latencies_csv(ledger: &RunLedger) -> String {
    let mut out = String::from("device,cell,seconds,method,repeats\n");
    for candidate in &ledger.candidates {
        for report in candidate
            .latencies
            .iter()
            .chain(candidate.measured.iter())
        {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                report.device_name,
                report.cell.canonical(),
                report.seconds,
                report.method.as_str(),
                report.repeats
            ));
        }
    }
    out
}

#[derive(Serialize)]
struct FrontMember {
    cell: String,
    values: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct FrontFile {
    objectives: Vec<String>,
    members: Vec<FrontMember>,
    device_picks: BTreeMap<String, String>,
    panacea_pick: String,
}

/// The machine-readable final front with per-member objective values and the
/// named picks.
pub fn front_json(ledger: &RunLedger) -> String {
    let schema = ledger.config.objective_schema();
    let members = ledger
        .front
        .iter()
        .map(|&i| {
            let candidate = &ledger.candidates[i];
            let vector = candidate
                .objective_vector(&schema, true)
                .expect("front members are truly evaluated");
            let values = schema
                .names()
                .zip(vector.values().iter().copied())
                .map(|(n, v)| (n.to_string(), v))
                .collect();
            FrontMember {
                cell: candidate.cell.canonical(),
                values,
            }
        })
        .collect();
    let file = FrontFile {
        objectives: schema.names().map(str::to_string).collect(),
        members,
        device_picks: ledger.report.device_picks.clone(),
        panacea_pick: ledger.report.panacea_pick.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("front serialization");
    text.push('\n');
    text
}

/// Plain-text run summary: the front table plus the named picks.
pub fn report_text(ledger: &RunLedger) -> String {
    let schema = ledger.config.objective_schema();
    let mut out = String::new();
    let evaluated = ledger
        .candidates
        .iter()
        .filter(|c| c.evaluation.is_some())
        .count();
    out.push_str(&format!(
        "candidates scored: {} (truly evaluated: {evaluated})\n",
        ledger.candidates.len()
    ));
    out.push_str(&format!("final front: {} members\n\n", ledger.front.len()));

    out.push_str(&format!("{:<42}", "cell"));
    for name in schema.names() {
        out.push_str(&format!(" {name:>18}"));
    }
    out.push('\n');
    for &i in &ledger.front {
        let candidate = &ledger.candidates[i];
        let vector = candidate.objective_vector(&schema, true).unwrap();
        out.push_str(&format!("{:<42}", candidate.cell.canonical()));
        for value in vector.values() {
            out.push_str(&format!(" {value:>18.9}"));
        }
        out.push('\n');
    }
    out.push('\n');
    for (device, cell) in &ledger.report.device_picks {
        out.push_str(&format!("device-pick[{device}]: {cell}\n"));
    }
    out.push_str(&format!("panacea-pick: {}\n", ledger.report.panacea_pick));
    out
}

/// Writes the full run directory layout.
pub fn write_run_dir(ledger: &RunLedger, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut config = serde_json::to_string_pretty(&ledger.config).expect("config serialization");
    config.push('\n');
    fs::write(dir.join("config.json"), config)?;
    fs::write(dir.join("ledger.csv"), ledger_csv(ledger))?;
    fs::write(dir.join("latencies.csv"), latencies_csv(ledger))?;
    fs::write(dir.join("front.json"), front_json(ledger))?;
    fs::write(dir.join("report.txt"), report_text(ledger))?;
    for (log, checkpoint) in ledger
        .surrogate_logs
        .iter()
        .zip(&ledger.surrogate_checkpoints)
    {
        let name = format!("surrogate_{:03}.json", log.iteration);
        fs::write(dir.join(name), checkpoint)?;
    }
    let losses: BTreeMap<usize, &[f64]> = ledger
        .surrogate_logs
        .iter()
        .map(|l| (l.iteration, l.epoch_loss.as_slice()))
        .collect();
    let mut log_json = serde_json::to_string_pretty(&losses).expect("loss serialization");
    log_json.push('\n');
    fs::write(dir.join("surrogate_losses.json"), log_json)?;
    Ok(())
}
