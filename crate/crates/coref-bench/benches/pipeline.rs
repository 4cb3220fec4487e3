use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use coref_bench::{synthetic_corpus, synthetic_entry};
use coref_core::codec::{
    encode_actions, encode_input, parse_actions, EncodeOptions, WhitespaceCounter,
};
use coref_core::conll::{read_conll, write_corpus};
use coref_core::metrics::{conll_score_corpus, SingletonMode};
use coref_core::oracle::oracle_run;
use coref_core::predictor::OraclePredictor;
use coref_core::runner::infer;
use coref_core::transition::SystemKind;

fn bench_oracle(c: &mut Criterion) {
    let mut group = c.benchmark_group("oracle_run");
    for sentences in [8, 32, 64] {
        let entry = synthetic_entry(1, sentences);
        group.bench_with_input(
            BenchmarkId::from_parameter(sentences),
            &entry,
            |b, entry| {
                b.iter(|| {
                    oracle_run(SystemKind::LinkAppend, &entry.document, &entry.gold).unwrap()
                })
            },
        );
    }
    group.finish();
}

fn bench_codec(c: &mut Criterion) {
    let entry = synthetic_entry(2, 32);
    let steps = oracle_run(SystemKind::LinkAppend, &entry.document, &entry.gold).unwrap();
    let opts = EncodeOptions::inference();
    let last = steps.last().unwrap();

    c.bench_function("encode_input_32_sentences", |b| {
        b.iter(|| encode_input(&last.state_before, &opts, &WhitespaceCounter).unwrap())
    });

    let busiest = steps
        .iter()
        .max_by_key(|s| s.actions.len())
        .expect("non-empty");
    let (_, window) = encode_input(&busiest.state_before, &opts, &WhitespaceCounter).unwrap();
    let target = encode_actions(&busiest.actions, &entry.document);
    c.bench_function("parse_actions_oracle_target", |b| {
        b.iter(|| parse_actions(&target, &busiest.state_before, &window))
    });
}

fn bench_inference(c: &mut Criterion) {
    let corpus = synthetic_corpus(8, 16);
    let predictor = OraclePredictor::from_corpus(SystemKind::LinkAppend, &corpus).unwrap();
    let opts = EncodeOptions::inference();
    c.bench_function("infer_oracle_8_docs", |b| {
        b.iter(|| {
            infer(
                &corpus,
                &predictor,
                SystemKind::LinkAppend,
                &opts,
                &WhitespaceCounter,
                1,
            )
        })
    });
}

fn bench_scoring(c: &mut Criterion) {
    let corpus = synthetic_corpus(32, 16);
    let pairs: Vec<_> = corpus.iter().map(|e| (&e.gold, &e.gold)).collect();
    c.bench_function("conll_score_32_docs", |b| {
        b.iter(|| conll_score_corpus(pairs.iter().copied(), SingletonMode::INCLUDE_BOTH))
    });
}

fn bench_conll_io(c: &mut Criterion) {
    let corpus = synthetic_corpus(16, 16);
    let mut buffer = Vec::new();
    write_corpus(
        corpus.iter().map(|e| (&e.document, &e.gold, e.part)),
        &mut buffer,
    )
    .unwrap();
    c.bench_function("read_conll_16_docs", |b| {
        b.iter(|| read_conll(buffer.as_slice()).unwrap())
    });
}

criterion_group!(
    benches,
    bench_oracle,
    bench_codec,
    bench_inference,
    bench_scoring,
    bench_conll_io
);
criterion_main!(benches);
