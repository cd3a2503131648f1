//! Sequential vs rayon execution of a diffusion/baseline pair on the default grid.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use decpomdp::evaluation::{FeatureMap, LearnerConfig};
use decpomdp::filtering::Marginalization;
use decpomdp::gridworld::GridConfig;
use decpomdp::harness::{build_setup, simulate_pair, NetworkRecipe, ResolvedModel, SimParams};
use decpomdp::Exec;

fn pair(c: &mut Criterion) {
    let grid = GridConfig::default();
    let gamma = grid.gamma;
    let model = ResolvedModel::Grid(grid);
    let recipe = NetworkRecipe::Positions {
        positions: None,
        threshold: None,
    };
    let setup = build_setup(&model, &recipe, 1).unwrap();
    let mut group = c.benchmark_group("simulate_pair");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let params = SimParams {
            learner: LearnerConfig {
                alpha: 0.1,
                rho: 0.0001,
                gamma,
                beta: 8.0,
            },
            features: FeatureMap::Identity,
            marginalization: Marginalization::MonteCarlo { samples: 1000 },
            exec,
            iterations: 20,
            sbe_window: 20,
        };
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &params, |b, p| {
            b.iter(|| simulate_pair(&setup, p, 1).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, pair);
criterion_main!(benches);
