//! Hot-path benchmarks: the bilateral filter, plane extraction + mutual
//! information (the registration inner loop), k-means, and a forward pass of
//! the segmentation net.

use criterion::{criterion_group, criterion_main, Criterion};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use xfct::cluster::{kmeans, FeatureStack};
use xfct::grid::{Grid2, Grid3};
use xfct::image::ScalarImage;
use xfct::preprocess::{bilateral_filter, BilateralParams};
use xfct::register::{extract_plane_slice, joint_histogram, mutual_information};
use xfct::segnet::{Tensor, UNet, UNetConfig};
use xfct::transform::RigidTransform;
use xfct::volume::{ScalarVolume, VoxelData};

fn random_image(dims: [usize; 2], seed: u64) -> ScalarImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid2::isotropic(dims, 1.0).unwrap();
    let px: Vec<f32> = (0..dims[0] * dims[1]).map(|_| rng.random::<f32>() * 255.0).collect();
    ScalarImage::new(grid, px).unwrap()
}

fn random_volume(n: usize, seed: u64) -> ScalarVolume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid3::isotropic([n, n, n], 10.0).unwrap();
    let vox: Vec<f32> = (0..n * n * n).map(|_| rng.random::<f32>() * 255.0).collect();
    ScalarVolume::new(grid, VoxelData::F32(vox)).unwrap()
}

fn bench_bilateral(c: &mut Criterion) {
    let img = random_image([64, 64], 11);
    let params = BilateralParams::new(1.5, 25.0).unwrap();
    c.bench_function("bilateral_64x64", |b| {
        b.iter(|| bilateral_filter(black_box(&img), &params).unwrap())
    });
}

fn bench_registration_inner_loop(c: &mut Criterion) {
    let vol = random_volume(128, 12);
    let target = Grid2::new([128, 128], [10.0, 10.0], [0.0, 0.0]).unwrap();
    let fixed = random_image([128, 128], 13);
    let pose = RigidTransform {
        rotation_deg: [1.0, 0.5, -0.5],
        translation_um: [640.0, 6.0, -4.0],
    };
    c.bench_function("plane_extraction_128", |b| {
        b.iter(|| extract_plane_slice(black_box(&vol), &pose, target))
    });
    let moving = extract_plane_slice(&vol, &pose, target);
    c.bench_function("mutual_information_128_b32", |b| {
        b.iter(|| {
            let h =
                joint_histogram(black_box(&moving.image), &fixed, 32, Some(&moving.valid)).unwrap();
            mutual_information(&h)
        })
    });
}

fn bench_kmeans(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let grid = Grid2::isotropic([128, 128], 10.0).unwrap();
    let channels: Vec<String> = (0..9).map(|i| format!("ch{i}")).collect();
    let data: Vec<f64> =
        (0..grid.pixel_count() * 9).map(|_| rng.random::<f64>() * 255.0).collect();
    let stack = FeatureStack::new(grid, channels, data, None).unwrap();
    c.bench_function("kmeans_128x128_9ch_k7", |b| {
        b.iter(|| kmeans(black_box(&stack), 7, 1, 0).unwrap())
    });
}

fn bench_unet_forward(c: &mut Criterion) {
    let cfg = UNetConfig { depth: 3, base_channels: 16, classes: 7, patch_size: 64, in_channels: 1 };
    let net = UNet::new(cfg, 15).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let img = Tensor::from_vec(1, 64, 64, (0..64 * 64).map(|_| rng.random::<f64>()).collect());
    c.bench_function("unet_forward_d3_b16_64", |b| {
        b.iter(|| net.forward(black_box(&img)).unwrap())
    });
}

criterion_group!(
    benches,
    bench_bilateral,
    bench_registration_inner_loop,
    bench_kmeans,
    bench_unet_forward
);
criterion_main!(benches);
