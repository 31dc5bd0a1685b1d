use std::fs;
use std::path::Path;

use cellsearch::cellspace::CellSpec;
use cellsearch::costmodel::{cell_cost, network_cost, op_macs, op_params, shape_cell};

use crate::config::load_macro;
use crate::CliError;

/// Prints the shaped cell's per-layer costs (in the first-cell context:
/// stem-width input, first-stage growth, input resolution) and the assembled
/// network totals. Totals are the cost model's own numbers, verbatim.
pub fn run(cell: &str, macro_path: Option<&Path>, csv: Option<&Path>) -> Result<(), CliError> {
    let cell: CellSpec = cell.parse().map_err(|e| {
        CliError::Usage(format!("cell: {e}"))
    })?;
    let macro_cfg = load_macro(macro_path)?;
    macro_cfg
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let in_channels = macro_cfg.stem_channels();
    let growth = macro_cfg.stages[0].growth;
    let (h, w, _) = macro_cfg.input;
    let shaped = shape_cell(&cell, in_channels, growth, &macro_cfg)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let mut rows: Vec<(String, String, usize, usize, usize, u64, u64)> = Vec::new();
    for (i, layer) in shaped.layers.iter().enumerate() {
        let params = op_params(layer.op, layer.c_in, layer.c_out, layer.groups)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let macs = op_macs(layer.op, layer.c_in, layer.c_out, h, w, layer.groups)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        rows.push((
            i.to_string(),
            layer.op.name().to_string(),
            layer.c_in,
            layer.c_out,
            layer.groups,
            params,
            macs,
        ));
    }
    if let Some(t) = &shaped.transition {
        let params = op_params(t.op, t.c_in, t.c_out, t.groups)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let macs = op_macs(t.op, t.c_in, t.c_out, h, w, t.groups)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        rows.push((
            "transition".to_string(),
            t.op.name().to_string(),
            t.c_in,
            t.c_out,
            t.groups,
            params,
            macs,
        ));
    }

    let cell_report = cell_cost(&shaped, h, w).map_err(|e| CliError::Runtime(e.to_string()))?;
    let net = network_cost(&macro_cfg, &cell).map_err(|e| CliError::Runtime(e.to_string()))?;

    println!("cell {cell} (first-cell context: {in_channels} -> {growth} channels at {h}x{w})");
    println!(
        "{:<12} {:<10} {:>6} {:>6} {:>7} {:>12} {:>14}",
        "layer", "op", "c_in", "c_out", "groups", "params", "macs"
    );
    for (idx, op, c_in, c_out, groups, params, macs) in &rows {
        println!("{idx:<12} {op:<10} {c_in:>6} {c_out:>6} {groups:>7} {params:>12} {macs:>14}");
    }
    println!(
        "cell totals: params {} macs {}",
        cell_report.params, cell_report.macs
    );
    println!(
        "network totals: params {} macs {} param_bytes {} peak_activation_bytes {} memory {}",
        net.params,
        net.macs,
        net.param_bytes,
        net.peak_activation_bytes,
        net.param_bytes + net.peak_activation_bytes
    );

    if let Some(csv_path) = csv {
        let mut out = String::from("layer,op,c_in,c_out,groups,params,macs\n");
        for (idx, op, c_in, c_out, groups, params, macs) in &rows {
            out.push_str(&format!("{idx},{op},{c_in},{c_out},{groups},{params},{macs}\n"));
        }
        out.push_str(&format!(
            "network_total,,,,,{},{}\n",
            net.params, net.macs
        ));
        fs::write(csv_path, out)?;
    }
    Ok(())
}
