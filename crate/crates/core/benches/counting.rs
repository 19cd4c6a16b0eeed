use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use incidence_lab::gen::sheaf_config;
use incidence_lab::incidence::{incidences_with, CountMode};
use incidence_lab::Exec;

fn counting(c: &mut Criterion) {
    let mut group = c.benchmark_group("incidences");
    group.sample_size(10);
    for m in [8u32, 10, 12] {
        let cfg = sheaf_config(1.0, 1.0, m, 1, Default::default()).unwrap();
        group.throughput(Throughput::Elements(cfg.l.len() as u64));
        for (name, exec) in [("parallel", Exec::Auto), ("sequential", Exec::Sequential)] {
            group.bench_with_input(BenchmarkId::new(name, m), &cfg, |b, cfg| {
                b.iter(|| incidences_with(&cfg.p, &cfg.l, CountMode::Sweep, exec).unwrap().len())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, counting);
criterion_main!(benches);
