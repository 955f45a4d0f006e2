use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tubeflock::dynamics::{total_rhs_with, IntegratorConfig};
use tubeflock::initial_data::{sample_configuration, SamplerSpec};
use tubeflock::partial::run_ladder;
use tubeflock::{Exec, ModelParams};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn rhs(c: &mut Criterion) {
    let params = ModelParams::default();
    let mut group = c.benchmark_group("rhs");
    for half_span in [100.0, 1000.0, 10_000.0] {
        let spec = SamplerSpec {
            half_span,
            ..SamplerSpec::default()
        };
        let config = sample_configuration(&spec, &params.geometry).unwrap();
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, config.len()), &config, |b, cfg| {
                b.iter(|| total_rhs_with(black_box(cfg), &params, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn ladder(c: &mut Criterion) {
    let params = ModelParams::default();
    let full = sample_configuration(&SamplerSpec::default(), &params.geometry).unwrap();
    let mut group = c.benchmark_group("ladder");
    group.sample_size(10);
    for (name, exec) in MODES {
        let icfg = IntegratorConfig {
            exec,
            ..IntegratorConfig::default()
        };
        group.bench_function(name, |b| {
            b.iter(|| run_ladder(black_box(&full), &[40, 80, 160], &params, &icfg, 0.25, 0.05).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, rhs, ladder);
criterion_main!(benches);
