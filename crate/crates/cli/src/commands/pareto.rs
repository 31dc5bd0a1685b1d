use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use cellsearch::engine::SelectionMode;
use cellsearch::pareto::{
    self, Direction, HardConstraint, HardConstraintSet, ObjectiveSchema, ObjectiveVector,
};

use crate::CliError;

pub struct Args {
    pub input: PathBuf,
    pub objectives: String,
    pub hard: Option<String>,
    pub k: Option<usize>,
    pub mode: String,
    pub accuracy: Option<String>,
    pub out: Option<PathBuf>,
}

/// Parses "name:min,name2:max" into a schema.
fn parse_objectives(spec: &str) -> Result<Vec<(String, Direction)>, CliError> {
    let mut objectives = Vec::new();
    for entry in spec.split(',') {
        let (name, dir) = entry.rsplit_once(':').ok_or_else(|| {
            CliError::Usage(format!("objective entry {entry:?} is not name:min|max"))
        })?;
        let direction = match dir {
            "min" => Direction::Min,
            "max" => Direction::Max,
            other => {
                return Err(CliError::Usage(format!(
                    "objective direction {other:?} is not min or max"
                )))
            }
        };
        objectives.push((name.to_string(), direction));
    }
    Ok(objectives)
}

fn parse_hard(
    spec: &str,
    schema: &Arc<ObjectiveSchema>,
) -> Result<HardConstraintSet, CliError> {
    let mut constraints = Vec::new();
    for entry in spec.split(',') {
        let (name, bound) = entry.rsplit_once(':').ok_or_else(|| {
            CliError::Usage(format!("hard constraint {entry:?} is not name:bound"))
        })?;
        let bound: f64 = bound
            .parse()
            .map_err(|_| CliError::Usage(format!("hard constraint bound {bound:?}")))?;
        let index = schema
            .index_of(name)
            .ok_or_else(|| CliError::Usage(format!("hard constraint on unknown column {name:?}")))?;
        constraints.push(HardConstraint {
            name: name.to_string(),
            bound,
            direction: schema.direction(index),
        });
    }
    Ok(HardConstraintSet { constraints })
}

pub fn run(args: Args) -> Result<(), CliError> {
    let objectives = parse_objectives(&args.objectives)?;
    let schema = ObjectiveSchema::new(objectives).map_err(|e| CliError::Usage(e.to_string()))?;

    let mut reader = csv::Reader::from_path(&args.input)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.input.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Usage(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    for name in schema.names() {
        if !headers.iter().any(|h| h == name) {
            return Err(CliError::Usage(format!("unknown column {name:?} in input")));
        }
    }
    let column_index: Vec<usize> = schema
        .names()
        .map(|name| headers.iter().position(|h| h == name).unwrap())
        .collect();

    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Usage(e.to_string()))?;
        rows.push(record.iter().map(str::to_string).collect());
    }

    let vectors: Vec<ObjectiveVector> = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let values = column_index
                .iter()
                .map(|&c| {
                    row.get(c)
                        .and_then(|v| v.parse::<f64>().ok())
                        .ok_or_else(|| {
                            CliError::Usage(format!("row {}: non-numeric objective value", i + 1))
                        })
                })
                .collect::<Result<Vec<f64>, _>>()?;
            ObjectiveVector::new(schema.clone(), values)
                .map_err(|e| CliError::Usage(format!("row {}: {e}", i + 1)))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let constraints = match &args.hard {
        Some(spec) => parse_hard(spec, &schema)?,
        None => HardConstraintSet::empty(),
    };
    let feasible =
        pareto::filter_hard(&vectors, &constraints).map_err(|e| CliError::Runtime(e.to_string()))?;

    // fronts over the feasible subset only
    let feasible_vectors: Vec<ObjectiveVector> =
        feasible.iter().map(|&i| vectors[i].clone()).collect();
    let mut front_rank: Vec<Option<usize>> = vec![None; rows.len()];
    if !feasible_vectors.is_empty() {
        let fronts = pareto::nondominated_sort(&feasible_vectors)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        for (rank, front) in fronts.iter().enumerate() {
            for &local in front {
                front_rank[feasible[local]] = Some(rank + 1);
            }
        }
    }

    let selected: Vec<bool> = match args.k {
        None => front_rank.iter().map(|r| *r == Some(1)).collect(),
        Some(k) => {
            if k == 0 {
                return Err(CliError::Usage("--k must be at least 1".to_string()));
            }
            let mode = match args.mode.parse::<SelectionMode>() {
                Ok(SelectionMode::Pareto) => pareto::SelectionMode::Pareto,
                Ok(SelectionMode::TopAccuracy) => pareto::SelectionMode::TopObjective,
                Err(e) => return Err(CliError::Usage(e)),
            };
            let key = match &args.accuracy {
                Some(name) => {
                    if schema.index_of(name).is_none() {
                        return Err(CliError::Usage(format!(
                            "--accuracy column {name:?} is not an objective"
                        )));
                    }
                    name.clone()
                }
                None => schema.names().next().unwrap().to_string(),
            };
            let tie_keys: Vec<String> = (0..rows.len()).map(|i| format!("{i:08}")).collect();
            let chosen = pareto::select_k(&vectors, k, mode, &constraints, &tie_keys, &key)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let mut flags = vec![false; rows.len()];
            for i in chosen {
                flags[i] = true;
            }
            flags
        }
    };

    let mut out = headers.join(",");
    out.push_str(",front_rank,selected\n");
    for (i, row) in rows.iter().enumerate() {
        out.push_str(&row.join(","));
        out.push(',');
        if let Some(rank) = front_rank[i] {
            out.push_str(&rank.to_string());
        }
        out.push(',');
        out.push_str(if selected[i] { "1" } else { "0" });
        out.push('\n');
    }
    match &args.out {
        Some(path) => fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(())
}
