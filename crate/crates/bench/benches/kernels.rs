use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use iidm::denoiser::{Architecture, DenoiserParams, NoisePredictor};
use iidm::diffusion::reverse_step;
use iidm::imaging::color_transfer;
use iidm::metrics::{frechet_distance, gaussian_fit};
use iidm::rng::normal_latent;
use iidm::toy::{dataset, LabelGaussian};
use iidm::{Codec, Domain, NoiseSchedule, SamplerMode, Seed, Shape};

fn bench_reverse_step(c: &mut Criterion) {
    let s = NoiseSchedule::standard();
    let shape = Shape::new(4, 32, 32);
    let mut rng = Seed(0).stream(Domain::User, 0, 0);
    let z = normal_latent(&mut rng, shape);
    let eps = normal_latent(&mut rng, shape);
    let noise = normal_latent(&mut rng, shape);
    c.bench_function("reverse_step 4x32x32", |b| {
        b.iter(|| reverse_step(black_box(&z), &eps, 320, &noise, &s, SamplerMode::DdpmStandard).unwrap())
    });
}

fn bench_mlp(c: &mut Criterion) {
    let (image, mask) = dataset(&LabelGaussian::landscape(), 1, 8, 8, Seed(1)).unwrap().remove(0);
    let codec = Codec::Identity;
    let z = codec.encode_signed(&image).unwrap();
    let params = DenoiserParams::init(Architecture::standard(Shape::new(3, 8, 8), 3), Seed(2), false).unwrap();
    let input = params.features(&z, &mask, 500).unwrap();
    c.bench_function("mlp predict 3x8x8", |b| b.iter(|| params.predict(black_box(&z), &mask, 500).unwrap()));
    let cache = params.forward(&input).unwrap();
    let grad = vec![1.0; cache.output().len()];
    c.bench_function("mlp backward 3x8x8", |b| b.iter(|| params.backward(black_box(&cache), &grad).unwrap()));
}

fn bench_color_transfer(c: &mut Criterion) {
    let data = dataset(&LabelGaussian::landscape(), 2, 64, 64, Seed(3)).unwrap();
    let (src, reference) = (data[0].0.clamp_unit(), data[1].0.clamp_unit());
    c.bench_function("color_transfer 64x64", |b| b.iter(|| color_transfer(black_box(&src), &reference)));
}

fn bench_frechet(c: &mut Criterion) {
    let mut rng = Seed(4).stream(Domain::User, 0, 0);
    let mut set = |n: usize| -> Vec<Vec<f64>> {
        (0..n).map(|_| normal_latent(&mut rng, Shape::new(1, 1, 30)).as_slice().to_vec()).collect()
    };
    let (m1, c1) = gaussian_fit(&set(200)).unwrap();
    let (m2, c2) = gaussian_fit(&set(200)).unwrap();
    c.bench_function("frechet_distance d=30", |b| {
        b.iter(|| frechet_distance(black_box(&m1), &c1, &m2, &c2).unwrap())
    });
}

criterion_group!(kernels, bench_reverse_step, bench_mlp, bench_color_transfer, bench_frechet);
criterion_main!(kernels);
