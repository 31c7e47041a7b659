use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use neurocap_bench::{default_dims, random_decoder, random_source, rng};
use neurocap_core::attention::Mechanism;
use neurocap_core::decoder::{beam_decode, caption_loss_and_grad, greedy_decode};
use neurocap_core::CaptionRecord;
use std::hint::black_box;

const VOCAB: usize = 120;
const MAX_LEN: usize = 20;

fn greedy(c: &mut Criterion) {
    let mut r = rng(10);
    let params = random_decoder(&mut r, default_dims(VOCAB));
    let src = random_source(&mut r, 9, params.dims.d_s);
    let mut group = c.benchmark_group("greedy");
    for m in Mechanism::ALL {
        group.bench_function(m.name(), |b| {
            b.iter(|| greedy_decode(black_box(&src), &params, m, MAX_LEN).unwrap())
        });
    }
    group.finish();
}

fn beam(c: &mut Criterion) {
    let mut r = rng(11);
    let params = random_decoder(&mut r, default_dims(VOCAB));
    let src = random_source(&mut r, 9, params.dims.d_s);
    let mut group = c.benchmark_group("beam/multi");
    group.sample_size(20);
    for width in [1, 5, 10] {
        group.bench_with_input(BenchmarkId::from_parameter(width), &width, |b, &w| {
            b.iter(|| beam_decode(black_box(&src), &params, Mechanism::Multi, w, MAX_LEN).unwrap())
        });
    }
    group.finish();
}

fn loss_and_grad(c: &mut Criterion) {
    let mut r = rng(12);
    let params = random_decoder(&mut r, default_dims(VOCAB));
    let src = random_source(&mut r, 9, params.dims.d_s);
    // BOS, eight body tokens, EOS, then padding.
    let mut ids = vec![1];
    ids.extend((0..8).map(|i| 4 + i * 7));
    ids.push(2);
    ids.resize(MAX_LEN, 0);
    let caption = CaptionRecord {
        text: String::new(),
        mask: (0..MAX_LEN).map(|i| i <= 9).collect(),
        ids,
    };
    let mut group = c.benchmark_group("loss_and_grad");
    group.sample_size(20);
    for m in Mechanism::ALL {
        group.bench_function(m.name(), |b| {
            b.iter(|| caption_loss_and_grad(&params, m, black_box(&src), &caption).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, greedy, beam, loss_and_grad);
criterion_main!(benches);
