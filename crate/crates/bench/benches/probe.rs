use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use gedprobe::embed::{synthesize_store, Signal};
use gedprobe::eval::f1_score;
use gedprobe::m2::parse_m2;
use gedprobe::probe::{loss_and_grad, train, LabeledVectors, LinearProbe, TrainConfig};
use gedprobe::{AnnotatedSentence, Label};

const M2: &str = include_str!("../../core/tests/fixtures/m2_200.m2");

fn sentences(n: usize, len: usize) -> Vec<AnnotatedSentence> {
    (0..n)
        .map(|i| {
            let mut s = AnnotatedSentence::grammatical(format!("s{i}"), (0..len).map(|j| format!("w{j}")).collect());
            s.labels[(i * 7) % len] = Label::sva();
            s
        })
        .collect()
}

fn vectors(n: usize, dim: u16, seed: u64) -> LabeledVectors {
    let s = sentences(n, 24);
    let store = synthesize_store(&s, dim, 1, Signal::LinearSeparable { margin: 0.5 }, 1.0, seed).unwrap();
    let mut out = LabeledVectors::new(dim as usize);
    for x in &s {
        let m = store.word_vectors(&x.id, 1).unwrap();
        for (i, l) in x.labels.iter().enumerate() {
            out.push(m.row(i), l.is_error()).unwrap();
        }
    }
    out
}

fn probe(c: &mut Criterion) {
    let tr = vectors(200, 768, 1);
    let dev = vectors(50, 768, 2);
    let p = LinearProbe::zeros(768);
    c.bench_function("loss_and_grad 4800x768", |b| b.iter(|| loss_and_grad(black_box(&p), &tr, 1e-4)));
    let cfg = TrainConfig {
        max_epochs: 2,
        patience: 1,
        ..TrainConfig::default()
    };
    c.bench_function("train 2 epochs 4800x768", |b| b.iter(|| train(&tr, &dev, black_box(&cfg)).unwrap()));
}

fn eval(c: &mut Criterion) {
    let n = 100_000;
    let pred: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
    let gold: Vec<bool> = (0..n).map(|i| i % 5 == 0).collect();
    c.bench_function("f1_score 100k", |b| b.iter(|| f1_score(black_box(&pred), &gold, None).unwrap()));
}

fn store(c: &mut Criterion) {
    let s = sentences(500, 24);
    let store = synthesize_store(&s, 768, 12, Signal::Random, 1.0, 3).unwrap();
    c.bench_function("word_vectors 500 sentences", |b| {
        b.iter(|| {
            for x in &s {
                black_box(store.word_vectors(&x.id, 7).unwrap());
            }
        })
    });
    c.bench_function("store from_bytes", |b| {
        b.iter_batched(
            || store.to_bytes(),
            |bytes| gedprobe::embed::EmbeddingStore::from_bytes(bytes).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

fn m2(c: &mut Criterion) {
    c.bench_function("parse_m2 200 entries", |b| b.iter(|| parse_m2(black_box(M2)).unwrap()));
}

criterion_group!(benches, probe, eval, store, m2);
criterion_main!(benches);
