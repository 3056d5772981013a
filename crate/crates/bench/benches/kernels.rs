use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::Array2;
use std::hint::black_box;
use vfxaug::attention::{extend, select_anchors, AnchorSelection, StandardProcessor};
use vfxaug::dit::{DiTConfig, DiTModel};
use vfxaug::metrics::masked_ssim;
use vfxaug::rng;
use vfxaug::tensor::{LatentClip, PixelMask, VideoClip};

fn matrix(rows: usize, cols: usize, seed: u64) -> Array2<f32> {
    let mut r = rng::stream(seed, &[]);
    Array2::from_shape_vec((rows, cols), rng::gaussian_vec(&mut r, rows * cols)).unwrap()
}

fn attention(c: &mut Criterion) {
    let (q, k, v) = (matrix(256, 24, 1), matrix(264, 24, 2), matrix(264, 24, 3));
    let (ke, ve) = (matrix(77, 24, 4), matrix(77, 24, 5));
    c.bench_function("extended_attention_256x(264+77)", |b| {
        b.iter(|| extend(&q.view(), &k.view(), &v.view(), &ke.view(), &ve.view(), 24).unwrap())
    });
    let mask: Vec<bool> = (0..256).map(|i| i % 5 == 0).collect();
    let sel = AnchorSelection::default();
    c.bench_function("anchor_selection_256", |b| {
        b.iter(|| select_anchors(black_box(&mask), &sel, 3, 1).unwrap())
    });
}

fn forward(c: &mut Criterion) {
    let model = DiTModel::new(DiTConfig::default()).unwrap();
    let mut r = rng::stream(7, &[]);
    let x = LatentClip::new(4, 16, 16, 3, rng::gaussian_vec(&mut r, 4 * 16 * 16 * 3)).unwrap();
    let text = [0, 35, 30, 13, 16];
    c.bench_function("dit_forward_default", |b| {
        b.iter(|| model.forward(&x, 500, &text, 25, &mut StandardProcessor).unwrap())
    });
}

fn ssim(c: &mut Criterion) {
    let n = 8 * 64 * 64 * 3;
    let a = VideoClip::new(8, 64, 64, 3, (0..n).map(|i| (i % 97) as f32 / 97.0).collect()).unwrap();
    let b2 = VideoClip::new(8, 64, 64, 3, (0..n).map(|i| (i % 89) as f32 / 89.0).collect()).unwrap();
    let m = PixelMask::from_fn(8, 64, 64, |_, y, x| (20..40).contains(&y) && (20..40).contains(&x));
    c.bench_function("masked_ssim_8x64x64", |b| b.iter(|| masked_ssim(&a, &b2, &m).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = attention, forward, ssim
}
criterion_main!(benches);
