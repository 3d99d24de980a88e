use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use pivotmatch::evaluation::{synthetic_instance, SyntheticSpec};
use pivotmatch::matcher::evaluate_with;
use pivotmatch::par::map_range;
use pivotmatch::similarity::{build_matrix_with, MatrixOptions};
use pivotmatch::{ExecMode, HashingEmbedder, UnpivotOperator};

const MODES: [ExecMode; 2] = [ExecMode::Sequential, ExecMode::Parallel];

fn opts(exec: ExecMode) -> MatrixOptions {
    MatrixOptions {
        row_cap: 1000,
        exec,
    }
}

fn similarity_matrix(c: &mut Criterion) {
    let (source, _, _) = synthetic_instance(&SyntheticSpec {
        entities: 200,
        metrics: 120,
        seed: 1,
    });
    let mut g = c.benchmark_group("similarity_matrix_123x123");
    for mode in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &mode| {
            b.iter(|| build_matrix_with(black_box(&source), &source, &HashingEmbedder, &opts(mode)).unwrap())
        });
    }
    g.finish();
}

fn candidate_batch(c: &mut Criterion) {
    let (source, target, gt) = synthetic_instance(&SyntheticSpec {
        entities: 100,
        metrics: 40,
        seed: 2,
    });
    // the true set with one indicator dropped at a time
    let ops: Vec<UnpivotOperator> = (0..gt.unpivot_set.len())
        .map(|skip| {
            let set: Vec<String> = gt
                .unpivot_set
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != skip)
                .map(|(_, a)| a.clone())
                .collect();
            UnpivotOperator::new(set, "Indicator", "Reading")
        })
        .collect();
    let mut g = c.benchmark_group("evaluate_40_candidates");
    g.sample_size(10);
    for mode in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &mode| {
            b.iter(|| {
                // outer batch and inner matrix use the same mode
                map_range(mode, ops.len(), |i| {
                    evaluate_with(&source, &target, &ops[i], &HashingEmbedder, &opts(mode))
                        .unwrap()
                        .reward()
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, similarity_matrix, candidate_batch);
criterion_main!(benches);
