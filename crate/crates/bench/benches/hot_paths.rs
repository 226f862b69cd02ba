use criterion::{black_box, criterion_group, criterion_main, Criterion};

use banksim_core::channel::{decode_bit, DecodeState};
use banksim_core::memsys::{DramTiming, MemorySubsystem, Origin};
use banksim_core::presets;
use banksim_core::simkernel::{Engine, RngStream, SimTime};

fn bench_engine(c: &mut Criterion) {
    c.bench_function("engine_schedule_pop_64k", |b| {
        b.iter(|| {
            let mut eng: Engine<u64> = Engine::new();
            let mut rng = RngStream::new(1, "bench");
            use rand::Rng;
            for _ in 0..65_536u64 {
                let t = rng.rng().gen_range(0..1_000_000_000u64);
                eng.schedule(SimTime::from_ps(t), t);
            }
            let mut acc = 0u64;
            eng.run_until(SimTime::from_ms(1), |_, t, _| acc ^= t.as_ps());
            black_box(acc)
        })
    });
}

fn bench_route(c: &mut Criterion) {
    let scheme = presets::private_scheme();
    c.bench_function("route_1m_addresses", |b| {
        b.iter(|| {
            let mut acc = 0u32;
            for i in 0..1_000_000u64 {
                acc ^= scheme.route_aligned(black_box(i * 64));
            }
            black_box(acc)
        })
    });
}

fn bench_submit(c: &mut Criterion) {
    c.bench_function("bank_submit_256k", |b| {
        b.iter(|| {
            let mut mem =
                MemorySubsystem::new(DramTiming::default(), presets::private_scheme()).unwrap();
            let mut done = SimTime::ZERO;
            for i in 0..262_144u64 {
                done = mem.submit_to_bank((i % 64) as u32, SimTime::from_ns(i), Origin::LocalLoad);
            }
            black_box(done)
        })
    });
}

fn bench_decode(c: &mut Criterion) {
    let state = DecodeState::new(SimTime::from_ns(2_000));
    let window: Vec<(SimTime, SimTime)> = (0..13)
        .map(|i| (SimTime::from_ns(500 * i), SimTime::from_ns(2_000 + (i % 3) * 200)))
        .collect();
    c.bench_function("decode_bit_window13", |b| {
        b.iter(|| black_box(decode_bit(black_box(&window), &state, SimTime::ZERO)))
    });
}

criterion_group!(benches, bench_engine, bench_route, bench_submit, bench_decode);
criterion_main!(benches);
