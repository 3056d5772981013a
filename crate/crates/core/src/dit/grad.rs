//! Training-time forward pass with an activation tape, and its backward pass.
//!
//! Only standard joint attention is supported here; training never extends
//! attention.

use ndarray::{s, Array2, ArrayView2, Axis};

use super::model::{gelu, gelu_grad, layer_norm, linear, linear_split, sinusoid, DiTModel, DiTWeights, ModalityWeights};
use super::rope::RopeTable;
use crate::attention::kernel::attention_probs;
use crate::error::Result;
use crate::tensor::LatentClip;

struct BlockTape {
    a: Array2<f32>,
    a_inv: Vec<f32>,
    q: Array2<f32>,
    k: Array2<f32>,
    v: Array2<f32>,
    probs: Vec<Array2<f32>>,
    o: Array2<f32>,
    m: Array2<f32>,
    m_inv: Vec<f32>,
    z: Array2<f32>,
    g: Array2<f32>,
}

pub struct ForwardTape {
    text_ids: Vec<usize>,
    time_features: ndarray::Array1<f32>,
    patches: Array2<f32>,
    rope: RopeTable,
    blocks: Vec<BlockTape>,
    head_n: Array2<f32>,
    head_inv: Vec<f32>,
    token_grid: [usize; 3],
    /// Predicted noise in token layout.
    pub output_tokens: Array2<f32>,
}

impl ForwardTape {
    pub fn output(&self, model: &DiTModel) -> Result<LatentClip> {
        super::patch::unpatchify(
            &self.output_tokens,
            self.token_grid,
            model.config.patch,
            model.config.latent_channels,
        )
    }
}

/// Forward pass recording every activation needed by [`backward`].
pub fn forward_with_tape(model: &DiTModel, x: &LatentClip, timestep: usize, text_ids: &[usize]) -> Result<ForwardTape> {
    let cfg = &model.config;
    let emb = model.embed(x, timestep, text_ids)?;
    let rope = RopeTable::from_grid(&model.rope(), &emb.positions);
    let split = emb.text_len;
    let heads = cfg.heads;
    let hd = cfg.head_dim();
    let mut h = emb.h;
    let mut blocks = Vec::with_capacity(cfg.blocks);
    for bw in &model.weights.blocks {
        let (a, a_inv) = layer_norm(&h.view());
        let mut q = linear_split(&a.view(), split, |m| (&m.wq, None), bw);
        let mut k = linear_split(&a.view(), split, |m| (&m.wk, None), bw);
        let v = linear_split(&a.view(), split, |m| (&m.wv, None), bw);
        // Same arithmetic as the inference path: rotate video rows in place.
        {
            let mut qv = q.slice_mut(s![split.., ..]).to_owned();
            rope.apply_in_place(&mut qv, false)?;
            q.slice_mut(s![split.., ..]).assign(&qv);
            let mut kv = k.slice_mut(s![split.., ..]).to_owned();
            rope.apply_in_place(&mut kv, false)?;
            k.slice_mut(s![split.., ..]).assign(&kv);
        }
        let mut o = Array2::<f32>::zeros(h.dim());
        let mut probs = Vec::with_capacity(heads);
        for hh in 0..heads {
            let cols = s![.., hh * hd..(hh + 1) * hd];
            let p = attention_probs(&q.slice(cols), &k.slice(cols), hd);
            o.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
            probs.push(p);
        }
        h += &linear_split(&o.view(), split, |m| (&m.wo, None), bw);
        let (m, m_inv) = layer_norm(&h.view());
        let z = linear_split(&m.view(), split, |w| (&w.w1, Some(&w.b1)), bw);
        let g = z.mapv(gelu);
        h += &linear_split(&g.view(), split, |w| (&w.w2, Some(&w.b2)), bw);
        blocks.push(BlockTape {
            a,
            a_inv,
            q,
            k,
            v,
            probs,
            o,
            m,
            m_inv,
            z,
            g,
        });
    }
    let (head_n, head_inv) = layer_norm(&h.slice(s![split.., ..]));
    let output_tokens = linear(&head_n.view(), &model.weights.out_w, Some(&model.weights.out_b));
    Ok(ForwardTape {
        text_ids: text_ids.to_vec(),
        time_features: sinusoid(timestep as f32, cfg.time_features),
        patches: emb.patches_tokens,
        rope,
        blocks,
        head_n,
        head_inv,
        token_grid: emb.token_grid,
        output_tokens,
    })
}

fn layer_norm_backward(y: &Array2<f32>, inv: &[f32], dy: &Array2<f32>) -> Array2<f32> {
    let d = y.ncols() as f32;
    let mut dx = Array2::<f32>::zeros(y.dim());
    for (i, ((yr, dyr), mut dxr)) in y.rows().into_iter().zip(dy.rows()).zip(dx.rows_mut()).enumerate() {
        let mean_dy = dyr.sum() / d;
        let mean_dyy = yr.iter().zip(dyr.iter()).map(|(a, b)| a * b).sum::<f32>() / d;
        for ((o, &yy), &g) in dxr.iter_mut().zip(yr.iter()).zip(dyr.iter()) {
            *o = inv[i] * (g - mean_dy - yy * mean_dyy);
        }
    }
    dx
}

fn accumulate(dst: &mut Array2<f32>, src: &Array2<f32>) {
    *dst += src;
}

fn col_sum(x: &ArrayView2<f32>) -> Array2<f32> {
    x.sum_axis(Axis(0)).insert_axis(Axis(0))
}

/// Backward through a per-modality linear map `y = x W (+ b)`.
/// Accumulates weight gradients and returns `dx`.
fn linear_split_backward(
    x: &Array2<f32>,
    dy: &Array2<f32>,
    split: usize,
    w: impl Fn(&ModalityWeights) -> &Array2<f32>,
    gw: impl Fn(&mut ModalityWeights) -> (&mut Array2<f32>, Option<&mut Array2<f32>>),
    block: &super::model::BlockWeights,
    gblock: &mut super::model::BlockWeights,
) -> Array2<f32> {
    let parts = [(0..split, true), (split..x.nrows(), false)];
    let mut dx = Array2::<f32>::zeros((x.nrows(), w(&block.text).nrows()));
    for (range, is_text) in parts {
        if range.is_empty() {
            continue;
        }
        let xs = x.slice(s![range.clone(), ..]);
        let dys = dy.slice(s![range.clone(), ..]);
        let (wm, gm) = if is_text {
            (w(&block.text), gw(&mut gblock.text))
        } else {
            (w(&block.video), gw(&mut gblock.video))
        };
        accumulate(gm.0, &xs.t().dot(&dys));
        if let Some(gb) = gm.1 {
            accumulate(gb, &col_sum(&dys));
        }
        dx.slice_mut(s![range, ..]).assign(&dys.dot(&wm.t()));
    }
    dx
}

/// Accumulates into `grads` the gradient of `sum(d_out * output)` and
/// returns nothing else; `d_out` is in token layout.
pub fn backward(model: &DiTModel, tape: &ForwardTape, d_out: &Array2<f32>, grads: &mut DiTWeights) {
    let cfg = &model.config;
    let wts = &model.weights;
    let split = tape.text_ids.len();
    let hd = cfg.head_dim();
    let n_rows = split + tape.patches.nrows();

    // Output head.
    accumulate(&mut grads.out_w, &tape.head_n.t().dot(d_out));
    accumulate(&mut grads.out_b, &col_sum(&d_out.view()));
    let dn = d_out.dot(&wts.out_w.t());
    let mut dh = Array2::<f32>::zeros((n_rows, cfg.dim));
    dh.slice_mut(s![split.., ..])
        .assign(&layer_norm_backward(&tape.head_n, &tape.head_inv, &dn));

    for (bi, bt) in tape.blocks.iter().enumerate().rev() {
        let bw = &wts.blocks[bi];
        let gb = &mut grads.blocks[bi];

        // MLP: h2 = h1 + gelu(m W1 + b1) W2 + b2.
        let dg = linear_split_backward(&bt.g, &dh, split, |m| &m.w2, |m| (&mut m.w2, Some(&mut m.b2)), bw, gb);
        let mut dz = dg;
        dz.zip_mut_with(&bt.z, |d, &z| *d *= gelu_grad(z));
        let dm = linear_split_backward(&bt.m, &dz, split, |m| &m.w1, |m| (&mut m.w1, Some(&mut m.b1)), bw, gb);
        dh += &layer_norm_backward(&bt.m, &bt.m_inv, &dm);

        // Attention output projection: h1 = h0 + o Wo.
        let d_o = linear_split_backward(&bt.o, &dh, split, |m| &m.wo, |m| (&mut m.wo, None), bw, gb);

        let mut dq = Array2::<f32>::zeros(bt.q.dim());
        let mut dk = Array2::<f32>::zeros(bt.k.dim());
        let mut dv = Array2::<f32>::zeros(bt.v.dim());
        let scale = 1.0 / (hd as f32).sqrt();
        for (hh, p) in bt.probs.iter().enumerate() {
            let cols = s![.., hh * hd..(hh + 1) * hd];
            let doh = d_o.slice(cols);
            dv.slice_mut(cols).assign(&p.t().dot(&doh));
            let dp = doh.dot(&bt.v.slice(cols).t());
            let mut ds = dp;
            for (mut dsr, pr) in ds.rows_mut().into_iter().zip(p.rows()) {
                let dot: f32 = dsr.iter().zip(pr.iter()).map(|(a, b)| a * b).sum();
                dsr.zip_mut_with(&pr, |d, &pv| *d = pv * (*d - dot) * scale);
            }
            dq.slice_mut(cols).assign(&ds.dot(&bt.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&bt.q.slice(cols)));
        }
        // Undo RoPE on video rows (rotation transpose).
        for g in [&mut dq, &mut dk] {
            let mut gv = g.slice(s![split.., ..]).to_owned();
            tape.rope.apply_in_place(&mut gv, true).expect("shapes checked in forward");
            g.slice_mut(s![split.., ..]).assign(&gv);
        }
        let mut da = linear_split_backward(&bt.a, &dq, split, |m| &m.wq, |m| (&mut m.wq, None), bw, gb);
        da += &linear_split_backward(&bt.a, &dk, split, |m| &m.wk, |m| (&mut m.wk, None), bw, gb);
        da += &linear_split_backward(&bt.a, &dv, split, |m| &m.wv, |m| (&mut m.wv, None), bw, gb);
        dh += &layer_norm_backward(&bt.a, &bt.a_inv, &da);
    }

    // Embeddings: every row received the time embedding.
    let dtemb = dh.sum_axis(Axis(0));
    let tf = tape.time_features.view().insert_axis(Axis(1));
    accumulate(&mut grads.time_w, &tf.dot(&dtemb.view().insert_axis(Axis(0))));
    grads.time_b.row_mut(0).scaled_add(1.0, &dtemb);
    for (i, &id) in tape.text_ids.iter().enumerate() {
        grads.vocab.row_mut(id).scaled_add(1.0, &dh.row(i));
    }
    let dvid = dh.slice(s![split.., ..]);
    accumulate(&mut grads.patch_w, &tape.patches.t().dot(&dvid));
    accumulate(&mut grads.patch_b, &col_sum(&dvid));
}
