use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use spc_rdh::fwht::{fwht_par, fwht_seq};
use spc_rdh::par;
use spc_rdh::synthetic::synthetic_patches;
use spc_rdh::{build_operator, embed_stream, EmbedParams, KeySpec, MatrixKind};

fn bench_fwht(c: &mut Criterion) {
    let mut group = c.benchmark_group("fwht");
    for log in [12u32, 14, 16, 18] {
        let n = 1usize << log;
        let data: Vec<i64> = (0..n as i64).map(|i| (i * 7919) % 1001 - 500).collect();
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("seq", n), &data, |b, d| {
            b.iter_batched_ref(|| d.clone(), |v| fwht_seq(black_box(v)), criterion::BatchSize::LargeInput)
        });
        group.bench_with_input(BenchmarkId::new("par", n), &data, |b, d| {
            b.iter_batched_ref(|| d.clone(), |v| fwht_par(black_box(v)), criterion::BatchSize::LargeInput)
        });
    }
    group.finish();
}

fn bench_patches(c: &mut Criterion) {
    let patches = synthetic_patches(32, 64, 1);
    let op = build_operator(MatrixKind::ScrambledHadamard, 4096, 1638, 3).unwrap();
    let key = KeySpec::new(b"bench-key-material").unwrap();
    let params = EmbedParams::loose(10, 4096).unwrap();
    let work = |img: &spc_rdh::SceneImage| {
        let s = op.project(img).unwrap();
        embed_stream(&s, &params, key.stream()).unwrap().values.len()
    };

    let mut group = c.benchmark_group("acquire_embed_32_patches");
    group.throughput(Throughput::Elements(patches.len() as u64));
    group.bench_function("seq", |b| b.iter(|| par::map_seq(black_box(&patches), work)));
    group.bench_function("par", |b| b.iter(|| par::map(black_box(&patches), work)));
    group.finish();
}

criterion_group!(benches, bench_fwht, bench_patches);
criterion_main!(benches);
