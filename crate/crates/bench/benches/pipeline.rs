use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use sentinel_bench::{first_view, grids, scenario, sensed_frame};
use sentinel_core::fusion::fuse_grids;
use sentinel_core::sensing::sense_frame;
use sentinel_core::v2x::{decode_message, encode_message};
use sentinel_core::{CorpusStore, GridSpec, MockLlm, RunOptions, Session};

fn fusion(c: &mut Criterion) {
    for n in [2, 4] {
        let gs = grids(n);
        c.bench_function(&format!("fuse_grids/{n}x100x100"), |b| b.iter(|| fuse_grids(black_box(&gs)).unwrap()));
    }
}

fn sensing(c: &mut Criterion) {
    let (world, agent) = first_view("occlusion_t_junction");
    let spec = GridSpec::default();
    c.bench_function("sense_frame/t_junction", |b| b.iter(|| sense_frame(black_box(&world), &agent, &spec, 1)));
}

fn codec(c: &mut Criterion) {
    let frame = sensed_frame("occlusion_t_junction");
    let bytes = encode_message(&frame, 0.1);
    c.bench_function("codec/encode", |b| b.iter(|| encode_message(black_box(&frame), 0.1)));
    c.bench_function("codec/decode", |b| b.iter(|| decode_message(black_box(&bytes)).unwrap()));
}

fn session(c: &mut Criterion) {
    let s = scenario("straight_road_clear");
    let client = MockLlm::default();
    let store = CorpusStore::in_memory();
    c.bench_function("session/first_20_ticks", |b| {
        b.iter_batched(
            || Session::new(s.clone(), RunOptions::default()).unwrap(),
            |mut session| {
                for _ in 0..20 {
                    session.step(&client, &store).unwrap();
                }
                session
            },
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, fusion, sensing, codec, session);
criterion_main!(benches);
