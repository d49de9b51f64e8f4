use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use paradin::harness::{table_grids, NodeCount};
use paradin::runtime::default_threads;
use paradin::solvers::{build_initial_guess, paradin_parareal_solve, paradin_solve};
use paradin::{BlockLayout, Mode, NewtonConfig, ProblemKind, ProblemSpec, Runtime, WorkerTopology};

fn modes(c: &mut Criterion) {
    let kind = ProblemKind::NonlinearHeat;
    let p = ProblemSpec::heat();
    let g = table_grids(kind)[1].grid(kind, NodeCount::Total, 1.0).unwrap();
    let cfg = NewtonConfig::for_problem(kind);
    let guess = build_initial_guess(&p, &g, 4, &cfg).unwrap();
    let threads = default_threads();

    let mut group = c.benchmark_group("heat_60x8x8");
    group.sample_size(10);
    for mode in [Mode::Emulated, Mode::Parallel] {
        let topo = WorkerTopology::new(g.nt, mode, threads);
        group.bench_function(BenchmarkId::new("paradin", mode.name()), |b| {
            b.iter(|| {
                let mut rt = Runtime::new(topo).unwrap();
                paradin_solve(&p, &g, &cfg, guess.clone(), &mut rt).unwrap()
            })
        });
        group.bench_function(BenchmarkId::new("paradin_parareal_M4", mode.name()), |b| {
            b.iter(|| {
                let mut rt = Runtime::new(topo).unwrap();
                let layout = BlockLayout::new(g.nt, 4).unwrap();
                paradin_parareal_solve(&p, &g, &cfg, layout, guess.clone(), None, &mut rt).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, modes);
criterion_main!(benches);
