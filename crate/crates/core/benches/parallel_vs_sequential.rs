use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use msnoma::allocator::{equal_power, Problem};
use msnoma::config::ExperimentConfig;
use msnoma::experiments::ranging_points;
use msnoma::scenario::build_scenario;
use msnoma::signal::{interference_all, OverlapTable};
use msnoma::Exec;

const POLICIES: [(&str, Exec); 2] = [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)];

fn bench_interference(c: &mut Criterion) {
    let cfg = ExperimentConfig::default();
    let plan = cfg.plan().unwrap();
    let scenario = build_scenario(&cfg.scenario_config(), &plan, 1).unwrap();
    let cons = cfg.constraints();
    let dll = cfg.dll();
    let table = OverlapTable::new(&plan);
    let problem = Problem::new(&plan, &dll, &scenario, &cons, cfg.solver_options(Exec::Sequential, 1)).unwrap();
    let powers = equal_power(&problem).powers;

    let mut group = c.benchmark_group("interference_all");
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| interference_all(&plan, &scenario.gains, &table, &powers, exec))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("evaluate");
    for (name, exec) in POLICIES {
        let p = Problem::new(&plan, &dll, &scenario, &cons, cfg.solver_options(exec, 1)).unwrap();
        group.bench_function(name, |b| b.iter(|| p.evaluate(&powers)));
    }
    group.finish();
}

fn bench_ranging(c: &mut Criterion) {
    let cfg = ExperimentConfig::default().with_overrides([("cpr_step_db", "5")]).unwrap();
    let mut group = c.benchmark_group("ranging_points");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_function(name, |b| b.iter(|| ranging_points(&cfg, 50e6, 1, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, bench_interference, bench_ranging);
criterion_main!(benches);
