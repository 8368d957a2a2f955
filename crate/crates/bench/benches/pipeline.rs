use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rslicer_bench::fixture;
use rslicer_core::fusion::{fuse_all, init_params, loss_and_grad, Batch};
use rslicer_core::pipeline::embed;
use rslicer_core::states::partition;

fn bench_embed(c: &mut Criterion) {
    let (cfg, corpus, _) = fixture(1024);
    c.bench_function("embed corpus (hash, 1024)", |b| b.iter(|| embed(&corpus, &cfg).unwrap()));
}

fn bench_loss_and_grad(c: &mut Criterion) {
    let (cfg, _, set) = fixture(1024);
    let tc = cfg.train_config();
    let params = init_params(&tc, set.dim);
    let batch = Batch::new(&set.windows, (0..tc.batch_size).collect(), true);
    c.bench_function("loss_and_grad (B=32)", |b| b.iter(|| loss_and_grad(&batch, &params, &tc).unwrap()));
}

fn bench_partition(c: &mut Criterion) {
    let (cfg, _, set) = fixture(256);
    let params = init_params(&cfg.train_config(), set.dim);
    let states = fuse_all(&params, &set.windows).unwrap();
    let mut g = c.benchmark_group("partition");
    g.sample_size(10);
    g.bench_function("k in 2..=6", |b| {
        b.iter_batched(|| states.clone(), |s| partition(&s, 2, 6, 0).unwrap(), BatchSize::LargeInput)
    });
    g.finish();
}

criterion_group!(benches, bench_embed, bench_loss_and_grad, bench_partition);
criterion_main!(benches);
