use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64;

use fbsopf::opf::{assemble_single_period, run_fbs_opf, FbsOpfOptions};
use fbsopf::powerflow::{solve_power_flow, PowerFlowOptions};
use fbsopf::scenario::{load_scenario, Configuration};
use fbsopf::storage::{assemble_multiperiod, solve_multiperiod, StorageMode};

fn power_flow(c: &mut Criterion) {
    let scenario = load_scenario("bundled:table1").unwrap();
    let case = scenario.single_period(0).unwrap();
    let p: Vec<f64> = case.generators.iter().map(|g| if g.bus == 0 { 0.0 } else { g.p_max }).collect();
    let inj = case.injections(&p, &vec![0.0; p.len()]);
    c.bench_function("powerflow/cigre_lv", |b| {
        b.iter(|| {
            solve_power_flow(&case.net, &case.bibc, black_box(&inj), Complex64::new(1.0, 0.0), PowerFlowOptions::default())
                .unwrap()
        })
    });
}

fn single_period(c: &mut Criterion) {
    let scenario = load_scenario("bundled:table1").unwrap();
    let case = scenario.single_period(0).unwrap();
    let flat = vec![case.v_s; case.net.bus_count()];
    c.bench_function("linearize+assemble/cigre_lv", |b| {
        b.iter(|| {
            let model = case.linear_model(black_box(&flat)).unwrap();
            assemble_single_period(&case, &model).unwrap()
        })
    });
    c.bench_function("fbs_opf/table1", |b| {
        b.iter(|| run_fbs_opf(black_box(&case), &FbsOpfOptions::default()).unwrap())
    });
}

fn multiperiod(c: &mut Criterion) {
    let scenario = load_scenario("bundled:cigre_month").unwrap();
    let full = scenario.with_configuration(Configuration::Distributed, 100.0).to_case().unwrap();
    let mut group = c.benchmark_group("sizing");
    group.sample_size(10);
    for steps in [24, 96] {
        let case = full.truncated(steps).unwrap();
        let model = case.linear_model().unwrap();
        let mode = StorageMode::Sizing { capacity_cost: None };
        group.bench_with_input(BenchmarkId::new("assemble", steps), &case, |b, case| {
            b.iter(|| assemble_multiperiod(case, &model, mode).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("solve", steps), &case, |b, case| {
            b.iter(|| solve_multiperiod(case, mode, &Default::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, power_flow, single_period, multiperiod);
criterion_main!(benches);
