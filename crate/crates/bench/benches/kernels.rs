use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use hetembed_core::online::{update_new_node, Overlay};
use hetembed_core::seed;
use hetembed_core::synth::{generate, SynthConfig};
use hetembed_core::text::{encode_backward, encode_forward, GruParams};
use hetembed_core::train::{prepare, AdamConfig, AdamState, Objective};
use hetembed_core::walk::generate_corpus;
use hetembed_core::{train, FrozenModel, OnlineConfig, TrainConfig, Variant, WalkConfig};
use ndarray::{Array1, Array2};

fn gru(c: &mut Criterion) {
    let (d, dw, len) = (128, 100, 50);
    let mut rng = seed::rng(0, "bench-gru", 0, 0);
    let p = GruParams::random(d, dw, &mut rng);
    let x = Array2::from_shape_fn((len, dw), |(i, j)| ((i * dw + j) as f64 * 0.01).sin());
    let dout = Array1::from_elem(d, 0.1);
    c.bench_function("gru_forward_d128_len50", |b| {
        b.iter(|| encode_forward(black_box(&p), x.view()).unwrap())
    });
    let enc = encode_forward(&p, x.view()).unwrap();
    c.bench_function("gru_backward_d128_len50", |b| {
        b.iter(|| encode_backward(black_box(&enc.cache), &p, dout.view(), false).unwrap())
    });
}

fn walks(c: &mut Criterion) {
    let data = generate(&SynthConfig::default()).unwrap();
    let cfg = WalkConfig::default();
    c.bench_function("metapath_corpus_default_fixture", |b| {
        b.iter(|| generate_corpus(black_box(&data.graph), &cfg).unwrap())
    });
}

fn batch_step(c: &mut Criterion) {
    let data = generate(&SynthConfig::default()).unwrap();
    let walk_cfg = WalkConfig {
        walks_per_node: 2,
        ..WalkConfig::default()
    };
    for variant in [Variant::Hsg, Variant::SeHsg] {
        let cfg = TrainConfig {
            variant,
            dim: 64,
            ..TrainConfig::default()
        };
        let setup = prepare(&data.graph, &cfg, &walk_cfg, Some(&data.words)).unwrap();
        let batch = setup.triplets[..cfg.batch_size].to_vec();
        let objective = Objective {
            variant,
            gamma: cfg.gamma,
            content: &setup.content,
        };
        c.bench_function(&format!("batch_step_{variant}_512"), |b| {
            b.iter_batched(
                || (setup.params.clone(), AdamState::new(&setup.params)),
                |(mut params, mut adam)| {
                    let out = objective.evaluate(&params, &batch).unwrap();
                    adam.apply(&mut params, &out.grads, &AdamConfig::default()).unwrap();
                    params
                },
                BatchSize::LargeInput,
            )
        });
    }
}

fn online(c: &mut Criterion) {
    let data = generate(&SynthConfig::default()).unwrap();
    let cfg = TrainConfig {
        variant: Variant::Hsg,
        dim: 64,
        max_epochs: 2,
        ..TrainConfig::default()
    };
    let model = train(&data.graph, &cfg, &WalkConfig::default(), None).unwrap().model;
    let frozen = FrozenModel::new(&model).unwrap();
    let mut g = data.graph.clone();
    let added = data.delta.apply(&mut g).unwrap();
    let paper = added[1];
    let author = added[0];
    let overlay = Overlay::from([(paper, model.representation(g.lookup("P1").unwrap()).to_owned())]);
    let ocfg = OnlineConfig {
        scheme: Some("APVPA".into()),
        ..OnlineConfig::for_model(&model)
    };
    c.bench_function("online_update_one_author", |b| {
        b.iter(|| update_new_node(black_box(&g), author, &frozen, &overlay, &ocfg).unwrap())
    });
}

criterion_group!(benches, gru, walks, batch_step, online);
criterion_main!(benches);
