use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use leakprobe::aes::{gen_oracle, Block, InterestingPoint, PointKind};
use leakprobe::dpa::cpa_attack;
use leakprobe::ingest::parse_vcd;
use leakprobe::metrics::{svf_all, SvfOptions};
use leakprobe::obfuscation::{obfuscate32, AffineSpec, RoundKeys};
use leakprobe::sim::{emit_vcd, run_batch, run_logs, run_set_from_logs, BatchOptions, SimConfig};

fn feistel(c: &mut Criterion) {
    let spec = AffineSpec::default_v1();
    let keys = RoundKeys::new([0x1111, 0x2222, 0x3333, 0x4444]);
    let mut g = c.benchmark_group("feistel");
    g.throughput(Throughput::Elements(1024));
    g.bench_function("obfuscate32 x1024", |b| {
        b.iter(|| (0..1024u32).fold(0u32, |acc, x| acc ^ obfuscate32(black_box(x.wrapping_mul(0x9e37_79b9)), &keys, &spec)))
    });
    g.finish();
}

fn inputs(n: usize) -> (Block, Vec<Block>) {
    let mut r = ChaCha8Rng::seed_from_u64(7);
    let key: Block = r.random();
    (key, (0..n).map(|_| r.random()).collect())
}

fn svf(c: &mut Criterion) {
    let (key, pts) = inputs(24);
    let logs = run_logs(&SimConfig::baseline(), &pts, &key, Some(200)).unwrap();
    let runs = run_set_from_logs(&logs).unwrap();
    let oracle = gen_oracle(&pts, &key, &InterestingPoint::new(PointKind::SboxOut, 0).unwrap());
    let mut g = c.benchmark_group("svf");
    g.sample_size(10);
    g.bench_function("24 runs x 200 cycles, no shuffles", |b| {
        b.iter(|| svf_all(&runs, std::slice::from_ref(&oracle), &SvfOptions { shuffles: 0, ..Default::default() }).unwrap())
    });
    g.finish();
}

fn cpa(c: &mut Criterion) {
    let (key, pts) = inputs(2000);
    let opts = BatchOptions { window: Some((0, 250)), stop_at_window_end: true, module: None };
    let traces: Vec<Vec<f64>> = run_batch(&SimConfig::baseline(), &pts, &key, &opts).unwrap().runs.into_iter().map(|r| r.samples).collect();
    let mut g = c.benchmark_group("cpa");
    g.sample_size(10);
    g.bench_function("2000 traces x 250 samples", |b| b.iter(|| cpa_attack(&traces, &pts, 0, PointKind::SboxOut).unwrap()));
    g.finish();
}

fn vcd(c: &mut Criterion) {
    let (key, pts) = inputs(1);
    let text = emit_vcd(&run_logs(&SimConfig::baseline(), &pts, &key, None).unwrap()[0]);
    let mut g = c.benchmark_group("vcd");
    g.throughput(Throughput::Bytes(text.len() as u64));
    g.sample_size(20);
    g.bench_function("parse full run", |b| b.iter(|| parse_vcd(black_box(&text)).unwrap()));
    g.finish();
}

criterion_group!(benches, feistel, svf, cpa, vcd);
criterion_main!(benches);
