use cellsearch::cellspace::{self, DEFAULT_ENUMERATION_CAP};

use crate::CliError;

pub fn run(layers: usize, count_only: bool, cap: Option<u128>) -> Result<(), CliError> {
    if count_only {
        let size = cellspace::space_size(layers).map_err(|e| CliError::Usage(e.to_string()))?;
        println!("{size}");
        return Ok(());
    }
    let cap = cap.unwrap_or(DEFAULT_ENUMERATION_CAP);
    let cells = cellspace::enumerate_with_cap(layers, cap)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut out = String::new();
    for cell in &cells {
        out.push_str(&cell.canonical());
        out.push('\n');
    }
    print!("{out}");
    Ok(())
}
