use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use metroqkd_core::bits::Bits;
use metroqkd_core::fixtures::table2_records;
use metroqkd_core::link_sim::{calibrate_link, simulate_session, CalibrationMode, FiberScheme};
use metroqkd_core::postprocessing::{cascade_reconcile, seed_len, toeplitz_hash, SiftedKeyPair};
use metroqkd_core::{key_rate, ProtocolParams};

fn noisy_pair(n: usize, qber: f64, seed: u64) -> SiftedKeyPair {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tx = Bits::random(n, &mut rng);
    let mut rx = tx.clone();
    for i in 0..n {
        if rng.gen_bool(qber) {
            rx.flip(i);
        }
    }
    SiftedKeyPair::new(tx, rx, qber).unwrap()
}

fn key_rate_table(c: &mut Criterion) {
    let records = table2_records();
    let params = ProtocolParams::default();
    c.bench_function("key_rate/nine_routes", |b| {
        b.iter(|| records.iter().map(|r| key_rate(&r.stats, &params).final_rate_bps).sum::<f64>())
    });
}

fn link_session(c: &mut Criterion) {
    let params = ProtocolParams::default();
    let record = &table2_records()[4];
    let link = calibrate_link(&record.stats, &params, FiberScheme::FourFiber, CalibrationMode::SignalAndDecoy).unwrap();
    let mut group = c.benchmark_group("simulate_session");
    group.sample_size(10);
    for n in [100_000u64, 1_000_000] {
        group.throughput(Throughput::Elements(n));
        group.bench_function(format!("{n}_pulses"), |b| b.iter(|| simulate_session(&link, &params, n, 3)));
    }
    group.finish();
}

fn cascade(c: &mut Criterion) {
    let mut group = c.benchmark_group("cascade");
    for (n, qber) in [(10_000usize, 0.02), (10_000, 0.05), (100_000, 0.02)] {
        group.throughput(Throughput::Elements(n as u64));
        group.bench_function(format!("{n}_bits_{}pct", qber * 100.0), |b| {
            b.iter_batched(|| noisy_pair(n, qber, 9), |pair| cascade_reconcile(&pair, 1), BatchSize::LargeInput)
        });
    }
    group.finish();
}

fn toeplitz(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut group = c.benchmark_group("toeplitz");
    for (n, m) in [(4_096usize, 1_024usize), (16_384, 4_096)] {
        let input = Bits::random(n, &mut rng);
        let seed = Bits::random(seed_len(n, m), &mut rng);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_function(format!("{n}_to_{m}"), |b| b.iter(|| toeplitz_hash(&input, &seed, m).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, key_rate_table, link_session, cascade, toeplitz);
criterion_main!(benches);
