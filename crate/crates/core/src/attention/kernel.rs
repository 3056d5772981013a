//! Scaled dot-product attention and its key/value-extended form.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

fn check_finite(name: &str, x: &ArrayView2<f32>) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue(format!("{name} contains NaN or infinity")));
    }
    Ok(())
}

/// Numerically stable in-place row softmax.
pub fn softmax_rows(scores: &mut Array2<f32>) {
    for mut row in scores.rows_mut() {
        let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0f32;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = 1.0 / sum;
        row.mapv_inplace(|v| v * inv);
    }
}

/// Attention probabilities `softmax(Q K^T / sqrt(d))`.
pub fn attention_probs(q: &ArrayView2<f32>, k: &ArrayView2<f32>, d: usize) -> Array2<f32> {
    let mut scores = q.dot(&k.t());
    let scale = 1.0 / (d as f32).sqrt();
    scores.mapv_inplace(|v| v * scale);
    softmax_rows(&mut scores);
    scores
}

/// `softmax(Q K^T / sqrt(d)) V` for a single head.
pub fn attention(q: &ArrayView2<f32>, k: &ArrayView2<f32>, v: &ArrayView2<f32>, d: usize) -> Result<Array2<f32>> {
    if q.ncols() != k.ncols() {
        return Err(Error::Shape(format!("query width {} != key width {}", q.ncols(), k.ncols())));
    }
    if k.nrows() != v.nrows() {
        return Err(Error::Shape(format!("{} keys but {} values", k.nrows(), v.nrows())));
    }
    if k.nrows() == 0 {
        return Err(Error::Shape("attention over an empty key set".into()));
    }
    check_finite("Q", q)?;
    check_finite("K", k)?;
    check_finite("V", v)?;
    Ok(attention_probs(q, k, d).dot(v))
}

/// Attention of `q` over `[k; k_ext]` / `[v; v_ext]`.
pub fn extend(
    q: &ArrayView2<f32>,
    k: &ArrayView2<f32>,
    v: &ArrayView2<f32>,
    k_ext: &ArrayView2<f32>,
    v_ext: &ArrayView2<f32>,
    d: usize,
) -> Result<Array2<f32>> {
    if k_ext.nrows() != v_ext.nrows() {
        return Err(Error::Shape(format!(
            "extension has {} keys but {} values",
            k_ext.nrows(),
            v_ext.nrows()
        )));
    }
    if k_ext.ncols() != k.ncols() || v_ext.ncols() != v.ncols() {
        return Err(Error::Shape("extension width differs from keys/values".into()));
    }
    let kk = concatenate(Axis(0), &[k.view(), k_ext.view()]).map_err(|e| Error::Shape(e.to_string()))?;
    let vv = concatenate(Axis(0), &[v.view(), v_ext.view()]).map_err(|e| Error::Shape(e.to_string()))?;
    attention(q, &kk.view(), &vv.view(), d)
}

/// Multi-head attention over full-width rows; heads are contiguous column blocks.
pub fn multi_head(q: &ArrayView2<f32>, k: &ArrayView2<f32>, v: &ArrayView2<f32>, heads: usize) -> Result<Array2<f32>> {
    let d = q.ncols();
    if heads == 0 || d % heads != 0 || k.ncols() != d || v.ncols() != d {
        return Err(Error::Shape(format!("width {d} incompatible with {heads} heads")));
    }
    let hd = d / heads;
    let mut out = Array2::<f32>::zeros((q.nrows(), d));
    for h in 0..heads {
        let cols = s![.., h * hd..(h + 1) * hd];
        let o = attention(&q.slice(cols), &k.slice(cols), &v.slice(cols), hd)?;
        out.slice_mut(cols).assign(&o);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn singleton_key_returns_its_value() {
        let q = array![[0.3f32, -2.0]];
        let k = array![[5.0f32, 1.0]];
        let v = array![[7.0f32, -1.5, 0.25]];
        let o = attention(&q.view(), &k.view(), &v.view(), 2).unwrap();
        assert_eq!(o, v);
    }

    #[test]
    fn two_key_example_matches_scalar_oracle() {
        let q = array![[1.0f32, 0.0]];
        let k = array![[1.0f32, 0.0], [0.0, 1.0]];
        let v = array![[1.0f32, 0.0], [0.0, 1.0]];
        let o = attention(&q.view(), &k.view(), &v.view(), 2).unwrap();
        let a = (1.0f64 / 2f64.sqrt()).exp();
        let w0 = a / (a + 1.0);
        assert!((o[[0, 0]] as f64 - w0).abs() < 1e-6);
        assert!((o[[0, 1]] as f64 - (1.0 - w0)).abs() < 1e-6);
    }

    #[test]
    fn identical_keys_average_values() {
        let q = array![[0.4f32, 1.0], [-3.0, 2.0]];
        let k = array![[1.0f32, 2.0], [1.0, 2.0], [1.0, 2.0]];
        let v = array![[1.0f32], [2.0], [6.0]];
        let o = attention(&q.view(), &k.view(), &v.view(), 2).unwrap();
        for r in 0..2 {
            assert!((o[[r, 0]] - 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_extension_is_bitwise_standard() {
        let q = array![[0.1f32, 0.7], [1.2, -0.4]];
        let k = array![[0.5f32, 0.2], [-1.0, 0.3], [0.0, 0.9]];
        let v = array![[1.0f32, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let e = Array2::<f32>::zeros((0, 2));
        let a = attention(&q.view(), &k.view(), &v.view(), 2).unwrap();
        let b = extend(&q.view(), &k.view(), &v.view(), &e.view(), &e.view(), 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors_on_bad_inputs() {
        let q = array![[f32::NAN, 0.0]];
        let k = array![[1.0f32, 0.0]];
        assert!(attention(&q.view(), &k.view(), &k.view(), 2).is_err());
        let q = array![[1.0f32, 0.0, 0.0]];
        assert!(matches!(attention(&q.view(), &k.view(), &k.view(), 2), Err(Error::Shape(_))));
        let ke = Array2::<f32>::zeros((2, 2));
        let ve = Array2::<f32>::zeros((1, 2));
        assert!(extend(&k.view(), &k.view(), &k.view(), &ke.view(), &ve.view(), 2).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut s = array![[1000.0f32, 999.0, -5.0], [0.0, 0.0, 0.0]];
        softmax_rows(&mut s);
        for row in s.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
        }
    }
}
