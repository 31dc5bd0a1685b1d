//! Search-loop behavior: population arithmetic, selection semantics,
//! determinism, constraint handling and the final report's picks.

use std::collections::BTreeMap;
use std::collections::HashSet;

use cellsearch::cellspace::CellSpec;
use cellsearch::costmodel::{network_cost, MacroConfig};
use cellsearch::devices::{profile_latency, DeviceProfile, LatencyMethod, LatencyReport};
use cellsearch::engine::{
    self, ledger, Candidate, EngineError, EvaluatorConfig, SearchConfig, SelectionMode,
};
use cellsearch::evaluator::Evaluation;
use cellsearch::pareto::dominates;

fn small_config() -> SearchConfig {
    SearchConfig {
        end_depth: 3,
        k: 16,
        macro_config: MacroConfig::desk(),
        ..SearchConfig::default()
    }
}

#[test]
fn population_arithmetic_and_dedup() {
    let config = small_config();
    let result = engine::run(&config).unwrap();

    // base truncated to K=16 of the 18 depth-2 cells; a depth-2 parent
    // appends at index 2, a Norm position, so each has 3 children
    let base: Vec<&Candidate> = result
        .candidates
        .iter()
        .filter(|c| c.iteration == 0)
        .collect();
    assert_eq!(base.len(), 16);
    assert!(base.iter().all(|c| c.depth == 2 && c.selected));
    assert!(base.iter().all(|c| c.evaluation.is_some()));

    let children: Vec<&Candidate> = result
        .candidates
        .iter()
        .filter(|c| c.iteration == 1)
        .collect();
    assert_eq!(children.len(), 16 * 3);
    assert!(children.iter().all(|c| c.depth == 3));
    assert!(children.iter().all(|c| c.predicted_accuracy.is_some()));
    assert_eq!(children.iter().filter(|c| c.selected).count(), 16);
    assert_eq!(
        children.iter().filter(|c| c.evaluation.is_some()).count(),
        16
    );

    // every cell appears exactly once
    let unique: HashSet<String> = result
        .candidates
        .iter()
        .map(|c| c.cell.canonical())
        .collect();
    assert_eq!(unique.len(), result.candidates.len());

    // rows are ordered by (iteration, canonical cell)
    let keys: Vec<(usize, String)> = result
        .candidates
        .iter()
        .map(|c| (c.iteration, c.cell.canonical()))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn top_accuracy_mode_matches_rerank_oracle() {
    let config = SearchConfig {
        mode: SelectionMode::TopAccuracy,
        ..small_config()
    };
    let result = engine::run(&config).unwrap();

    let children: Vec<&Candidate> = result
        .candidates
        .iter()
        .filter(|c| c.iteration == 1)
        .collect();
    // brute-force re-rank of the ledger's predictions
    let mut ranked: Vec<(&Candidate, f64)> = children
        .iter()
        .map(|c| (*c, c.predicted_accuracy.unwrap()))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| a.0.cell.canonical().cmp(&b.0.cell.canonical()))
    });
    let expected: HashSet<String> = ranked[..config.k]
        .iter()
        .map(|(c, _)| c.cell.canonical())
        .collect();
    let selected: HashSet<String> = children
        .iter()
        .filter(|c| c.selected)
        .map(|c| c.cell.canonical())
        .collect();
    assert_eq!(selected, expected);
}

#[test]
fn identical_configs_produce_identical_ledgers() {
    let config = small_config();
    let a = engine::run(&config).unwrap();
    let b = engine::run(&config).unwrap();
    assert_eq!(ledger::ledger_csv(&a), ledger::ledger_csv(&b));
    assert_eq!(ledger::front_json(&a), ledger::front_json(&b));
    assert_eq!(ledger::report_text(&a), ledger::report_text(&b));
}

#[test]
fn impossible_constraint_halts_with_infeasible_report() {
    let mut config = small_config();
    config
        .hard_constraints
        .insert("latency_gpu-like".to_string(), 0.0);
    match engine::run(&config) {
        Err(EngineError::Infeasible { depth, violations }) => {
            assert_eq!(depth, 3);
            assert_eq!(violations.len(), 1);
            assert_eq!(violations[0].0, "latency_gpu-like");
            assert_eq!(violations[0].1, 48);
        }
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn selected_candidates_respect_hard_constraints() {
    let mut config = small_config();
    // keep the constraint binding but satisfiable: cut the candidate set
    // roughly in half by parameter count
    let median_params = {
        let unconstrained = engine::run(&config).unwrap();
        let mut params: Vec<u64> = unconstrained
            .candidates
            .iter()
            .filter(|c| c.iteration == 1)
            .map(|c| c.cost.params)
            .collect();
        params.sort_unstable();
        params[params.len() / 2] as f64
    };
    config
        .hard_constraints
        .insert("params".to_string(), median_params);
    let result = engine::run(&config).unwrap();
    for candidate in result.candidates.iter().filter(|c| c.iteration > 0) {
        if candidate.selected {
            assert!(
                candidate.cost.params as f64 <= median_params,
                "{} selected with params {} above bound {median_params}",
                candidate.cell,
                candidate.cost.params
            );
        }
    }
}

#[test]
fn config_validation_rejects_bad_setups() {
    let mut config = small_config();
    config.start_depth = 5;
    assert!(matches!(
        engine::run(&config),
        Err(EngineError::Config(_))
    ));

    let mut config = small_config();
    config.k = 0;
    assert!(matches!(engine::run(&config), Err(EngineError::Config(_))));

    let mut config = small_config();
    config
        .hard_constraints
        .insert("wattage".to_string(), 1.0);
    assert!(matches!(engine::run(&config), Err(EngineError::Config(_))));

    let mut config = small_config();
    config.devices.clear();
    assert!(matches!(engine::run(&config), Err(EngineError::Config(_))));
}

#[test]
fn memory_objective_follows_device_declarations() {
    let mut config = small_config();
    let schema = config.objective_schema();
    let names: Vec<&str> = schema.names().collect();
    assert_eq!(
        names,
        vec![
            "error",
            "params",
            "macs",
            "latency_gpu-like",
            "latency_mobile-like",
            "memory"
        ]
    );
    config.devices.retain(|d| d.name == "gpu-like");
    let schema = config.objective_schema();
    let names: Vec<&str> = schema.names().collect();
    assert_eq!(names, vec!["error", "params", "macs", "latency_gpu-like"]);
}

#[test]
fn final_front_has_no_dominated_member_and_uses_observed_error() {
    let config = small_config();
    let result = engine::run(&config).unwrap();
    let schema = config.objective_schema();
    let evaluated: Vec<&Candidate> = result
        .candidates
        .iter()
        .filter(|c| c.evaluation.is_some())
        .collect();
    let front: HashSet<String> = result.report.front.iter().cloned().collect();
    assert!(!front.is_empty());
    for &i in &result.front {
        let member = &result.candidates[i];
        let mv = member.objective_vector(&schema, true).unwrap();
        for other in &evaluated {
            let ov = other.objective_vector(&schema, true).unwrap();
            assert!(
                !dominates(&ov, &mv).unwrap(),
                "{} dominates front member {}",
                other.cell,
                member.cell
            );
        }
        assert!(front.contains(&member.cell.canonical()));
    }
}

fn synthetic_candidate(
    cell: &str,
    config: &SearchConfig,
    accuracy: f64,
    latency_scale: f64,
) -> Candidate {
    let cell: CellSpec = cell.parse().unwrap();
    let cost = network_cost(&config.macro_config, &cell).unwrap();
    let latencies: Vec<LatencyReport> = config
        .devices
        .iter()
        .map(|d| {
            let mut report = profile_latency(d, &cell, &config.macro_config).unwrap();
            report.seconds *= latency_scale;
            report
        })
        .collect();
    Candidate {
        depth: cell.depth(),
        iteration: 0,
        evaluation: Some(Evaluation {
            accuracy,
            epochs_used: 0,
            evaluator_id: "oracle".to_string(),
            seed: 0,
        }),
        predicted_accuracy: None,
        memory_bytes: cost.param_bytes + cost.peak_activation_bytes,
        cost,
        latencies,
        measured: None,
        selected: true,
        cell,
    }
}

#[test]
fn single_candidate_front_is_every_pick() {
    let config = small_config();
    let schema = config.objective_schema();
    let candidates = vec![synthetic_candidate("bn|conv1x1", &config, 0.7, 1.0)];
    let report = engine::final_report(&candidates, &[0], &schema, &config).unwrap();
    assert_eq!(report.front, vec!["bn|conv1x1".to_string()]);
    for pick in report.device_picks.values() {
        assert_eq!(pick, "bn|conv1x1");
    }
    assert_eq!(report.panacea_pick, "bn|conv1x1");
}

#[test]
fn device_and_panacea_picks_can_differ() {
    // three front members: A has the best error (and so owns the best-error
    // decile, making it every device pick), C balances every rank, B is the
    // all-around extreme. Constructed so the panacea pick differs from the
    // device picks.
    let config = small_config();
    let schema = config.objective_schema();
    let candidates = vec![
        synthetic_candidate("bn|conv3x3", &config, 0.90, 1.0), // A: best error, heavy
        synthetic_candidate("bn|gconv1x1", &config, 0.60, 0.5), // B: cheap, bad error
        synthetic_candidate("bn|gconv3x3", &config, 0.80, 0.8), // C: middle on everything
    ];
    let front = vec![0, 1, 2];
    let report = engine::final_report(&candidates, &front, &schema, &config).unwrap();
    // decile of 3 = 1 eligible member: the best-error one
    for pick in report.device_picks.values() {
        assert_eq!(pick, "bn|conv3x3");
    }
    assert_eq!(report.panacea_pick, "bn|gconv3x3");
    assert!(report.front.contains(&report.panacea_pick));
}

#[test]
fn measured_latency_lands_in_ledger_when_enabled() {
    let config = SearchConfig {
        measure_host_latency: true,
        measure_repeats: 3,
        measure_warmup: 1,
        start_depth: 1,
        end_depth: 1,
        k: 3,
        macro_config: MacroConfig::desk(),
        evaluator: EvaluatorConfig::Oracle { noise: true },
        hard_constraints: BTreeMap::new(),
        ..SearchConfig::default()
    };
    let result = engine::run(&config).unwrap();
    assert_eq!(result.candidates.len(), 3);
    for candidate in &result.candidates {
        let measured = candidate.measured.as_ref().expect("measured latency");
        assert_eq!(measured.method, LatencyMethod::Measured);
        assert!(measured.seconds > 0.0);
    }
    let csv = ledger::ledger_csv(&result);
    assert!(csv.lines().next().unwrap().contains("measured_seconds"));

    // bundled profiles and the measured toggle round-trip through the
    // config snapshot
    let snapshot = serde_json::to_string(&result.config).unwrap();
    let restored: SearchConfig = serde_json::from_str(&snapshot).unwrap();
    assert_eq!(restored, result.config);

    assert!(DeviceProfile::bundled("gpu-like").is_some());
}
