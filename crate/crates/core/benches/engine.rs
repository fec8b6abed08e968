//! Run once per build to compare data-parallel and sequential execution:
//!
//! ```sh
//! cargo bench -p diffscope-core
//! cargo bench -p diffscope-core --no-default-features
//! ```
//!
//! Benchmark ids carry the mode, so both runs land side by side in the report.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use diffscope::denoiser::predict_noise;
use diffscope::image_decoder::upscale_decode;
use diffscope::nn::{Conv2d, FeatureMap};
use diffscope::pipeline::{prompt_catalog, Engine};
use diffscope::{generate, guidance_sweep, par, seeded_rng, standard_normal_tensor, GenerationConfig};

fn mode() -> &'static str {
    if par::is_parallel() {
        "parallel"
    } else {
        "sequential"
    }
}

fn kernels(c: &mut Criterion) {
    let engine = Engine::new_default().unwrap();
    let prompt = &prompt_catalog()[0].text;
    let text = engine
        .text_encoder()
        .encode(&engine.tokenizer().encode(prompt).unwrap())
        .unwrap();
    let latent = standard_normal_tensor(&mut seeded_rng(1), &[4, 8, 8]).unwrap();

    c.bench_function(&format!("predict_noise/{}", mode()), |b| {
        b.iter(|| predict_noise(black_box(&latent), 3.0, &text, engine.denoiser()).unwrap())
    });
    c.bench_function(&format!("upscale_decode/{}", mode()), |b| {
        b.iter(|| upscale_decode(black_box(&latent), engine.decoder()).unwrap())
    });
    c.bench_function(&format!("tokenize_catalog/{}", mode()), |b| {
        b.iter(|| {
            for p in prompt_catalog() {
                black_box(engine.tokenizer().encode(&p.text).unwrap());
            }
        })
    });

    let mut rng = seeded_rng(2);
    let conv = Conv2d::init(&mut rng, 64, 64, 3, 1, 1).unwrap();
    let x = FeatureMap::from_tensor(&standard_normal_tensor(&mut rng, &[64, 16, 16]).unwrap()).unwrap();
    c.bench_function(&format!("conv3x3_64x16x16/{}", mode()), |b| {
        b.iter(|| conv.forward(black_box(&x)))
    });
}

fn end_to_end(c: &mut Criterion) {
    let engine = Engine::new_default().unwrap();
    let prompt = prompt_catalog()[0].text.clone();
    let cfg = GenerationConfig::new(prompt.clone(), 1, 7.0).unwrap();
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.bench_function(format!("generate/{}", mode()), |b| {
        b.iter(|| generate(&engine, black_box(&cfg)).unwrap())
    });
    group.bench_function(format!("guidance_sweep/{}", mode()), |b| {
        b.iter(|| guidance_sweep(&engine, black_box(&prompt), 1).unwrap())
    });
    group.finish();
}

criterion_group!(benches, kernels, end_to_end);
criterion_main!(benches);
