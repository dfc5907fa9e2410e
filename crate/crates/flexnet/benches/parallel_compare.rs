//! Benchmarks for the data-parallel hot loops: stationary sweeps, simulation
//! replications and the stability subset enumeration.
//!
//! With the default `parallel` feature each group is additionally measured on
//! a single-threaded rayon pool, so one run shows the parallel speedup. Build
//! with `--no-default-features` to benchmark the plain sequential code path.

use criterion::{criterion_group, criterion_main, Criterion};

use flexnet::exact::{build_generator, solve_model, SolveOptions};
use flexnet::model::{family_g1, parse_model, NetworkModel};
use flexnet::sim::{estimate_occupancy, SimConfig};
use flexnet::stability::check_ergodic;

fn three_server_model() -> NetworkModel {
    parse_model(
        r#"{
            "dispatchers": [
                {"id": "d1", "rate": 0.5},
                {"id": "d2", "rate": 0.4},
                {"id": "d3", "rate": 0.6}
            ],
            "servers": [
                {"id": "u1", "rate": 1.0},
                {"id": "u2", "rate": 1.0},
                {"id": "u3", "rate": 1.0}
            ],
            "edges": [
                ["d1", "u1"], ["d1", "u2"],
                ["d2", "u2"], ["d2", "u3"],
                ["d3", "u1"], ["d3", "u3"]
            ]
        }"#,
    )
    .unwrap()
}

fn bench_with_pools(c: &mut Criterion, name: &str, f: impl Fn() + Send + Sync) {
    c.bench_function(&format!("{name}/default"), |b| b.iter(&f));
    #[cfg(feature = "parallel")]
    {
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        c.bench_function(&format!("{name}/threads=1"), |b| {
            b.iter(|| single.install(&f))
        });
    }
}

fn stationary_sweeps(c: &mut Criterion) {
    let model = three_server_model();
    let chain = build_generator(&model, 40).unwrap();
    bench_with_pools(c, "stationary/3x3_cap40", move || {
        let solution = chain.stationary(1e-8).unwrap();
        criterion::black_box(solution.residual);
    });
}

fn solver_auto(c: &mut Criterion) {
    let model = three_server_model();
    bench_with_pools(c, "solve_model/3x3_auto", move || {
        let occ = solve_model(
            &model,
            &SolveOptions {
                boundary_target: 1e-8,
                tol: 1e-8,
                i_max: 8,
                ..SolveOptions::default()
            },
        )
        .unwrap();
        criterion::black_box(occ.mean_total_tasks);
    });
}

fn simulation_replications(c: &mut Criterion) {
    let model = family_g1(8).unwrap();
    let model = flexnet::model::scale_arrivals(&model, 0.4).unwrap();
    let config = SimConfig::new(2e4, 17, 8);
    bench_with_pools(c, "simulate/g1_8_reps4", move || {
        let result = estimate_occupancy(&model, &config, 4).unwrap();
        criterion::black_box(result.events);
    });
}

fn stability_enumeration(c: &mut Criterion) {
    let model = flexnet::model::scale_arrivals(&family_g1(18).unwrap(), 0.4).unwrap();
    bench_with_pools(c, "check_ergodic/g1_18", move || {
        let verdict = check_ergodic(&model).unwrap();
        criterion::black_box(verdict.margin);
    });
}

criterion_group!(
    benches,
    stationary_sweeps,
    solver_auto,
    simulation_replications,
    stability_enumeration
);
criterion_main!(benches);
