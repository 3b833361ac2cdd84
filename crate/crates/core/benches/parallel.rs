use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use c2aug::bagdata::{synth_generate, SynthConfig};
use c2aug::crossbag::{build_mask, MaskSpec, MaskStrategy};
use c2aug::harness::evaluate;
use c2aug::milmodel::{cross_entropy_traced, mil_forward_traced, MilParams, ModelConfig};
use c2aug::numkernel::{finite_diff_report, Tensor};
use c2aug::{rng, Exec};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn bench_evaluate(c: &mut Criterion) {
    let bags = synth_generate(&SynthConfig {
        normal_bags: 24,
        tumor_bags: 16,
        bag_size_min: 200,
        bag_size_max: 400,
        ..SynthConfig::default()
    })
    .expect("synthetic data");
    let params = MilParams::init(32, &ModelConfig::default(), &mut rng::stream(0, rng::INIT));
    let mut g = c.benchmark_group("evaluate_40_bags");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate(&params, black_box(&bags), exec).expect("evaluate"))
        });
    }
    g.finish();
}

fn bench_gradcheck(c: &mut Criterion) {
    let cfg = ModelConfig {
        hidden: 8,
        attention: 4,
        classes: 2,
    };
    let params = MilParams::init(8, &cfg, &mut rng::stream(0, rng::INIT));
    let x = Tensor::matrix(4, 8, (0..32).map(|i| (i as f64 * 0.37).sin()).collect());
    let mut g = c.benchmark_group("finite_differences");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                finite_diff_report(
                    |tape, p| {
                        let xv = tape.constant(x.clone());
                        let t = mil_forward_traced(tape, xv, p, "")?;
                        cross_entropy_traced(tape, t.logits, 1)
                    },
                    &params.set,
                    1e-6,
                    exec,
                )
                .expect("gradcheck")
            })
        });
    }
    g.finish();
}

fn bench_masks(c: &mut Criterion) {
    let spec = MaskSpec {
        strategy: MaskStrategy::ElementWise,
        ..MaskSpec::default()
    };
    let logits = Tensor::matrix(1000, 4, vec![0.0; 4000]);
    let mut g = c.benchmark_group("mask_monte_carlo_64k_rows");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let counts: Vec<usize> = exec.map_range(64, |chunk| {
                    let mut r = rng::substream(1, "bench-mask", chunk as u64);
                    build_mask(&spec, &logits, &mut r).drawn.iter().sum()
                });
                counts.iter().sum::<usize>()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, bench_evaluate, bench_gradcheck, bench_masks);
criterion_main!(benches);
