use ndarray::{Array2, Axis};
use proptest::prelude::*;
use vfxaug::attention::{
    extend, select_anchors, softmax_rows, AnchorSelection, AttentionCache, AttentionInputs, AttentionMode,
    AttentionProcessor, CaptureProcessor, ExtendedProcessor,
};
use vfxaug::dit::rope::{apply_rope, RopeConfig};
use vfxaug::dit::{DiTConfig, DiTModel};
use vfxaug::metrics::{directional_score, masked_ssim, Embedder, HistogramEmbedder};
use vfxaug::pipeline::residual_update;
use vfxaug::tensor::{
    latent_mask_from_pixel_mask, latent_mask_to_pixels, vae_encode, LatentClip, LatentMask, PixelMask, VaeFactors,
    VideoClip,
};

fn matrix(rows: usize, cols: usize, vals: &[f32]) -> Array2<f32> {
    Array2::from_shape_fn((rows, cols), |(i, j)| vals[(i * cols + j) % vals.len()])
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

fn tiny_model(seed: u64) -> DiTModel {
    DiTModel::new(DiTConfig {
        blocks: 2,
        dim: 24,
        heads: 2,
        mlp_hidden: 32,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn latent(seed: u64) -> LatentClip {
    let v: Vec<f32> = (0..2 * 4 * 4 * 3)
        .map(|i| ((i as u64 * 2654435761 + (seed % 100_000) * 97) % 1000) as f32 / 1000.0)
        .collect();
    LatentClip::new(2, 4, 4, 3, v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rope_preserves_norms(
        vals in prop::collection::vec(-3.0f32..3.0, 12),
        pos in prop::array::uniform3(-50.0f32..50.0),
    ) {
        let cfg = RopeConfig::new(100.0, [4, 4, 4]).unwrap();
        let x = matrix(1, 12, &vals);
        let y = apply_rope(&x, &[pos], &cfg).unwrap();
        let (nx, ny) = (dot(x.row(0).as_slice().unwrap(), x.row(0).as_slice().unwrap()), dot(y.row(0).as_slice().unwrap(), y.row(0).as_slice().unwrap()));
        prop_assert!((nx.sqrt() - ny.sqrt()).abs() <= 1e-6 * nx.sqrt().max(1.0) * 4.0);
    }

    #[test]
    fn rope_scores_depend_only_on_offsets(
        q in prop::collection::vec(-1.0f32..1.0, 12),
        k in prop::collection::vec(-1.0f32..1.0, 12),
        pq in prop::array::uniform3(0.0f32..16.0),
        pk in prop::array::uniform3(0.0f32..16.0),
        axis in 0usize..3,
        shift in -8.0f32..8.0,
    ) {
        let cfg = RopeConfig::new(100.0, [4, 4, 4]).unwrap();
        let (q, k) = (matrix(1, 12, &q), matrix(1, 12, &k));
        let score = |a: [f32; 3], b: [f32; 3]| {
            let rq = apply_rope(&q, &[a], &cfg).unwrap();
            let rk = apply_rope(&k, &[b], &cfg).unwrap();
            dot(rq.row(0).as_slice().unwrap(), rk.row(0).as_slice().unwrap())
        };
        let (mut sq, mut sk) = (pq, pk);
        sq[axis] += shift;
        sk[axis] += shift;
        prop_assert!((score(pq, pk) - score(sq, sk)).abs() <= 1e-5);
    }

    #[test]
    fn softmax_rows_are_normalized(vals in prop::collection::vec(-30.0f32..30.0, 1..40), cols in 1usize..8) {
        let rows = vals.len().div_ceil(cols);
        let mut m = matrix(rows, cols, &vals);
        softmax_rows(&mut m);
        for r in m.axis_iter(Axis(0)) {
            prop_assert!((r.sum() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn extension_rows_permute_jointly(
        vals in prop::collection::vec(-2.0f32..2.0, 8..64),
        ext in 1usize..8,
        rot in 0usize..8,
    ) {
        let d = 4;
        let q = matrix(3, d, &vals);
        let k = matrix(2, d, &vals[1..]);
        let v = matrix(2, d, &vals[2..]);
        let ke = matrix(ext, d, &vals[3..]);
        let ve = matrix(ext, d, &vals[5..]);
        let perm: Vec<usize> = (0..ext).map(|i| (i + rot) % ext).collect();
        let pk = ke.select(Axis(0), &perm);
        let pv = ve.select(Axis(0), &perm);
        let a = extend(&q.view(), &k.view(), &v.view(), &ke.view(), &ve.view(), d).unwrap();
        let b = extend(&q.view(), &k.view(), &v.view(), &pk.view(), &pv.view(), d).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn anchor_pools_counts_and_determinism(
        mask in prop::collection::vec(any::<bool>(), 0..300),
        keep_fg in 0.0f64..=1.0,
        keep_bg in 0.0f64..=1.0,
        seed in any::<u64>(),
        step in 0usize..60,
        block in 0usize..8,
    ) {
        let sel = AnchorSelection::new(keep_fg, keep_bg, seed).unwrap();
        let picked = select_anchors(&mask, &sel, step, block).unwrap();
        prop_assert_eq!(&picked, &select_anchors(&mask, &sel, step, block).unwrap());
        prop_assert!(picked.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(picked.iter().all(|&i| i < mask.len()));
        let fg_pool = mask.iter().filter(|&&m| m).count();
        let fg = picked.iter().filter(|&&i| mask[i]).count();
        let bg = picked.len() - fg;
        let round = |f: f64, n: usize| (f * n as f64 + 0.5).floor() as usize;
        prop_assert_eq!(fg, round(keep_fg, fg_pool).min(fg_pool));
        prop_assert_eq!(bg, round(keep_bg, mask.len() - fg_pool).min(mask.len() - fg_pool));
    }

    #[test]
    fn vae_encode_is_linear(
        a in -2.0f32..2.0,
        b in -2.0f32..2.0,
        s1 in any::<u32>(),
        s2 in any::<u32>(),
    ) {
        let f = VaeFactors::default();
        let gen = |s: u32| -> Vec<f32> {
            (0..4 * 8 * 8 * 3).map(|i| ((i as u64 * 48271 + s as u64) % 997) as f32 / 997.0).collect()
        };
        let (v1, v2) = (gen(s1), gen(s2));
        let comb: Vec<f32> = v1.iter().zip(&v2).map(|(x, y)| a * x + b * y).collect();
        let lo = comb.iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = comb.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let span = (hi - lo).max(1e-3);
        let norm: Vec<f32> = comb.iter().map(|c| (c - lo) / span).collect();
        let enc = |v: Vec<f32>| vae_encode(&VideoClip::new(4, 8, 8, 3, v).unwrap(), f).unwrap();
        let (e1, e2, en) = (enc(v1), enc(v2), enc(norm));
        for ((x, y), z) in e1.data().iter().zip(e2.data()).zip(en.data()) {
            let lhs = z * span + lo;
            prop_assert!((lhs - (a * x + b * y)).abs() <= 1e-5);
        }
    }

    #[test]
    fn latent_mask_survives_pixel_expansion(bits in prop::collection::vec(any::<bool>(), 2 * 4 * 4), ft in 1usize..3, fh in 1usize..5) {
        let f = VaeFactors { t: ft, h: fh, w: fh };
        let m = LatentMask::new(2, 4, 4, bits.iter().map(|&b| u8::from(b)).collect()).unwrap();
        let px = latent_mask_to_pixels(&m, f);
        prop_assert_eq!(latent_mask_from_pixel_mask(&px, f).unwrap(), m);
    }

    #[test]
    fn residual_update_is_a_per_cell_select(bits in prop::collection::vec(any::<bool>(), 2 * 4 * 4), s in any::<u64>()) {
        let (x_orig, x_hat) = (latent(s), latent(s.wrapping_add(7)));
        let m = LatentMask::new(2, 4, 4, bits.iter().map(|&b| u8::from(b)).collect()).unwrap();
        let (res, comp) = residual_update(&x_orig, &x_hat, &m).unwrap();
        for (i, cell) in comp.data().chunks(3).enumerate() {
            let src = if bits[i] { &x_hat } else { &x_orig };
            prop_assert_eq!(cell, &src.data()[i * 3..i * 3 + 3]);
        }
        for ((r, o), c) in res.data().iter().zip(x_orig.data()).zip(comp.data()) {
            prop_assert_eq!(*r, c - o);
        }
    }

    #[test]
    fn masked_ssim_is_symmetric(s1 in any::<u32>(), s2 in any::<u32>(), cut in 0usize..5) {
        let gen = |s: u32| VideoClip::new(2, 16, 16, 3, (0..2 * 16 * 16 * 3).map(|i| ((i as u64 * 7919 + s as u64) % 101) as f32 / 100.0).collect()).unwrap();
        let (a, b) = (gen(s1), gen(s2));
        let m = PixelMask::from_fn(2, 16, 16, |_, y, _| y < cut);
        let (x, y) = (masked_ssim(&a, &b, &m).unwrap(), masked_ssim(&b, &a, &m).unwrap());
        prop_assert!((x - y).abs() <= 1e-12);
    }

    #[test]
    fn directional_score_ignores_embedding_scale(s1 in any::<u32>(), s2 in any::<u32>(), scale in 0.01f32..100.0) {
        struct Scaled(f32);
        impl Embedder for Scaled {
            fn dim(&self) -> usize { HistogramEmbedder.dim() }
            fn embed_image(&self, f: &[f32]) -> Vec<f32> { HistogramEmbedder.embed_image(f).iter().map(|v| v * self.0).collect() }
            fn embed_text(&self, t: &str) -> Vec<f32> { HistogramEmbedder.embed_text(t).iter().map(|v| v * self.0).collect() }
        }
        let gen = |s: u32| VideoClip::new(2, 8, 8, 3, (0..2 * 8 * 8 * 3).map(|i| ((i as u64 * 131 + s as u64) % 53) as f32 / 52.0).collect()).unwrap();
        let (a, b) = (gen(s1), gen(s2));
        let x = directional_score(&a, &b, "a blue square", "a blue square and a red ball", &HistogramEmbedder).unwrap();
        let y = directional_score(&a, &b, "a blue square", "a blue square and a red ball", &Scaled(scale)).unwrap();
        prop_assert!((x - y).abs() <= 1e-5);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn vocabulary_permutation_leaves_output_unchanged(seed in 0u64..1000, shift in 1usize..60, t in 1usize..1000) {
        let model = tiny_model(seed);
        let n = model.weights.vocab.nrows();
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let mut w = model.weights.clone();
        for (old, &new) in perm.iter().enumerate() {
            w.vocab.row_mut(new).assign(&model.weights.vocab.row(old));
        }
        let permuted = DiTModel::from_weights(model.config.clone(), w).unwrap();
        let ids = vec![1, 5, 9, 2];
        let pids: Vec<usize> = ids.iter().map(|&i| perm[i]).collect();
        let x = latent(seed);
        let mut p = vfxaug::attention::StandardProcessor;
        let a = model.forward(&x, t, &ids, 0, &mut p).unwrap();
        let b = permuted.forward(&x, t, &pids, 0, &mut p).unwrap();
        prop_assert_eq!(a.data(), b.data());
    }

    #[test]
    fn degenerate_keep_rates_match_fixed_modes(seed in 0u64..1000, anchor_seed in any::<u64>(), bits in prop::collection::vec(any::<bool>(), 8)) {
        let model = tiny_model(seed);
        let rope = model.rope();
        let x = latent(seed);
        let mut cache = AttentionCache::new(model.video_positions(x.grid()).unwrap());
        model.forward(&x, 500, &[], 3, &mut CaptureProcessor { cache: &mut cache }).unwrap();
        let y = latent(seed + 1);
        let run = |mode, keep: (f64, f64)| {
            let sel = AnchorSelection::new(keep.0, keep.1, anchor_seed).unwrap();
            let mut p = ExtendedProcessor::new(mode, Some(&cache), Some(bits.clone()), sel, &rope).unwrap();
            model.forward(&y, 500, &[3, 4], 3, &mut p).unwrap()
        };
        let standard = model.forward(&y, 500, &[3, 4], 3, &mut vfxaug::attention::StandardProcessor).unwrap();
        let full = run(AttentionMode::FullExtended, (0.3, 0.05));
        let (all, none) = (run(AttentionMode::AnchorExtended, (1.0, 1.0)), run(AttentionMode::AnchorExtended, (0.0, 0.0)));
        let (masked, fg_only) = (run(AttentionMode::MaskedExtended, (0.3, 0.05)), run(AttentionMode::AnchorExtended, (1.0, 0.0)));
        prop_assert_eq!(all.data(), full.data());
        prop_assert_eq!(none.data(), standard.data());
        prop_assert_eq!(masked.data(), fg_only.data());
    }

    #[test]
    fn cached_keys_rotate_like_live_keys(seed in 0u64..1000, t in 1usize..1000) {
        struct Recorder<'c> {
            inner: CaptureProcessor<'c>,
            rotated: Vec<Array2<f32>>,
        }
        impl AttentionProcessor for Recorder<'_> {
            fn process(&mut self, inputs: &AttentionInputs<'_>) -> vfxaug::Result<Array2<f32>> {
                self.rotated.push(inputs.video_rope.apply(&inputs.video_k.to_owned())?);
                self.inner.process(inputs)
            }
        }
        let model = tiny_model(seed);
        let x = latent(seed);
        let mut cache = AttentionCache::new(model.video_positions(x.grid()).unwrap());
        let mut rec = Recorder { inner: CaptureProcessor { cache: &mut cache }, rotated: Vec::new() };
        model.forward(&x, t, &[], 1, &mut rec).unwrap();
        let live = rec.rotated;
        for (b, l) in live.iter().enumerate() {
            let k = cache.rotated_keys(1, b, &model.rope()).unwrap();
            for (p, q) in k.iter().zip(l.iter()) {
                prop_assert!((p - q).abs() <= 1e-6);
            }
        }
    }
}
