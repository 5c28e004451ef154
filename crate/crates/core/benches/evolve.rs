use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;

use dcprune_core::arch::{build_preset, partition_by_resolution};
use dcprune_core::eval::{Evaluator, SurrogateEvaluator, SurrogateParams};
use dcprune_core::exec::Exec;
use dcprune_core::moo::{EvolutionConfig, PruneProblem, SubnetContext};
use dcprune_core::pipeline::{Pipeline, RunConfig};
use dcprune_core::rng::seeded;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn batch_evaluation(c: &mut Criterion) {
    let arch = Arc::new(build_preset("resnet110", 10, 32).unwrap());
    let part = Arc::new(partition_by_resolution(&arch));
    let ctx = SubnetContext::new(arch.clone(), part.clone(), 1).unwrap();
    let mut rng = seeded(5);
    let batch: Vec<Vec<u32>> = (0..256)
        .map(|_| ctx.bounds().iter().map(|&b| rng.random_range(1..=b)).collect())
        .collect();
    let mut group = c.benchmark_group("surrogate_batch_256");
    for (name, exec) in MODES {
        let eval = SurrogateEvaluator::new(arch.clone(), part.clone(), SurrogateParams::default())
            .unwrap()
            .with_exec(exec);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(eval.evaluate_batch(1, &batch)))
        });
    }
    group.finish();
}

fn pipeline_search(c: &mut Criterion) {
    let mut group = c.benchmark_group("resnet56_search");
    group.sample_size(10);
    for (name, exec) in MODES {
        let mut config = RunConfig::for_preset("resnet56");
        config.serial = exec == Exec::Sequential;
        config.cache = false;
        config.evolution = Some(EvolutionConfig {
            population_size: 40,
            offspring_per_iteration: 20,
            iterations: 7,
            ..Default::default()
        });
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let dir = tempfile::tempdir().unwrap();
                let pipeline = Pipeline::new(config.clone(), Some(dir.path().to_path_buf())).unwrap();
                black_box(pipeline.run().unwrap())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, batch_evaluation, pipeline_search);
criterion_main!(benches);
