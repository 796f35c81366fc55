use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use macp_core::adapter::{delta_weight, init_adapter};
use macp_core::trainer::{backward_model, train};
use macp_core::{ExperimentConfig, Method};

fn backward(c: &mut Criterion) {
    let config = ExperimentConfig::default();
    let (data, model) = config.fixture(0).unwrap();
    let state = init_adapter(model.hidden_base(), &config.macp, 0).unwrap();
    let delta = delta_weight(&state);
    c.bench_function("backward_model 1600 samples", |b| {
        b.iter(|| backward_model(&model, black_box(&delta), &data).unwrap())
    });
}

fn epochs(c: &mut Criterion) {
    let mut config = ExperimentConfig::default();
    config.train.epochs = 20;
    let (data, model) = config.fixture(0).unwrap();
    let mut group = c.benchmark_group("train 20 epochs");
    group.sample_size(10);
    for method in Method::ALL {
        let method_config = config.method_config(method);
        group.bench_function(method.name(), |b| {
            b.iter(|| train(&model, &method_config, &config.train, black_box(&data)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, backward, epochs);
criterion_main!(benches);
