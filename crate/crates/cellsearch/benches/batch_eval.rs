//! Parallel vs sequential batch scoring. The search loop's inner work —
//! oracle evaluation plus analytic costing of a candidate batch, and
//! profile-latency sweeps — is data-parallel across cells; this suite
//! compares the rayon path against the plain sequential loop on the same
//! workloads.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cellsearch::cellspace::enumerate;
use cellsearch::costmodel::{network_cost, MacroConfig};
use cellsearch::devices::{profile_latency, DeviceProfile};
use cellsearch::evaluator::oracle::oracle_accuracy;
use cellsearch::parallel::{map_batch, map_batch_sequential};

fn score_batch(c: &mut Criterion) {
    let cells = enumerate(4).expect("depth-4 space");
    let macro_cfg = MacroConfig::cifar_like();
    let profile = DeviceProfile::bundled("mobile-like").unwrap();

    let score = |cell: &cellsearch::CellSpec| {
        let cost = network_cost(&macro_cfg, cell).unwrap();
        let accuracy = oracle_accuracy(cell, &macro_cfg, 0, true).unwrap();
        let latency = profile_latency(&profile, cell, &macro_cfg).unwrap().seconds;
        (cost.macs, accuracy, latency)
    };

    let mut group = c.benchmark_group("score_depth4_space");
    group.bench_with_input(BenchmarkId::new("parallel", cells.len()), &cells, |b, cells| {
        b.iter(|| map_batch(cells, score))
    });
    group.bench_with_input(
        BenchmarkId::new("sequential", cells.len()),
        &cells,
        |b, cells| b.iter(|| map_batch_sequential(cells, score)),
    );
    group.finish();
}

fn latency_sweep(c: &mut Criterion) {
    let cells = enumerate(3).expect("depth-3 space");
    let macro_cfg = MacroConfig::desk();
    let gpu = DeviceProfile::bundled("gpu-like").unwrap();
    let mobile = DeviceProfile::bundled("mobile-like").unwrap();

    let sweep = |cell: &cellsearch::CellSpec| {
        (
            profile_latency(&gpu, cell, &macro_cfg).unwrap().seconds,
            profile_latency(&mobile, cell, &macro_cfg).unwrap().seconds,
        )
    };

    let mut group = c.benchmark_group("two_device_latency_sweep");
    group.bench_function("parallel", |b| b.iter(|| map_batch(&cells, sweep)));
    group.bench_function("sequential", |b| {
        b.iter(|| map_batch_sequential(&cells, sweep))
    });
    group.finish();
}

criterion_group!(benches, score_batch, latency_sweep);
criterion_main!(benches);
