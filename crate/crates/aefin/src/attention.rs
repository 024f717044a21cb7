//! Parameter-free cross-attention that fuses the unstable component (queries)
//! with the stable component (keys and values), one L×D problem per batch
//! element with the channel axis as D. Single head, no masks, no learned
//! projections in the default configuration.

use crate::error::{Error, Result};
use crate::parallel;
use crate::tensor::{dot, Mat, SeriesWindow};

/// Raw scores M and row-softmaxed weights α of one attention evaluation.
#[derive(Debug, Clone)]
pub struct AttentionMatrices {
    pub scores: Mat,
    pub weights: Mat,
}

/// scores[i][j] = (q_i · k_j) / √D for row sets of a shared feature width D.
pub fn attention_scores(q_rows: &Mat, k_rows: &Mat) -> Result<Mat> {
    if q_rows.cols != k_rows.cols || q_rows.cols == 0 {
        return Err(Error::invalid(format!(
            "query width {} and key width {} must match and be ≥ 1",
            q_rows.cols, k_rows.cols
        )));
    }
    let inv_sqrt_d = 1.0 / (q_rows.cols as f64).sqrt();
    let mut scores = q_rows.matmul_nt(k_rows);
    for v in scores.data.iter_mut() {
        *v *= inv_sqrt_d;
    }
    Ok(scores)
}

/// Row-wise softmax with per-row max subtraction. Rejects non-finite input.
pub fn softmax_rows(scores: &Mat) -> Result<Mat> {
    if scores.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite attention score".to_string()));
    }
    let mut weights = Mat::zeros(scores.rows, scores.cols);
    for i in 0..scores.rows {
        let row = scores.row(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let out = weights.row_mut(i);
        let mut sum = 0.0;
        for (o, &s) in out.iter_mut().zip(row) {
            let e = (s - max).exp();
            *o = e;
            sum += e;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
    }
    Ok(weights)
}

/// Scores plus weights for one query/key pair.
pub fn attention_matrices(q_rows: &Mat, k_rows: &Mat) -> Result<AttentionMatrices> {
    let scores = attention_scores(q_rows, k_rows)?;
    let weights = softmax_rows(&scores)?;
    Ok(AttentionMatrices { scores, weights })
}

/// Full scaled dot-product attention: softmax(Q·Kᵀ/√D)·V.
pub fn attention(q: &Mat, k: &Mat, v: &Mat) -> Result<Mat> {
    if k.rows != v.rows {
        return Err(Error::invalid(format!(
            "key count {} != value count {}",
            k.rows, v.rows
        )));
    }
    let m = attention_matrices(q, k)?;
    Ok(m.weights.matmul(v))
}

/// Cross-attention of the decomposition: queries from the unstable component,
/// keys and values both from the stable component. Shapes must match exactly.
pub fn cross_attention(x_non_stable: &Mat, x_stable: &Mat) -> Result<Mat> {
    if x_non_stable.rows != x_stable.rows || x_non_stable.cols != x_stable.cols {
        return Err(Error::shape(format!(
            "component shapes {}×{} vs {}×{} differ",
            x_non_stable.rows, x_non_stable.cols, x_stable.rows, x_stable.cols
        )));
    }
    attention(x_non_stable, x_stable, x_stable)
}

/// `cross_attention` applied independently per batch element of B×C×L windows,
/// treating time positions as attention rows and channels as the feature axis.
pub fn cross_attention_batched(
    w_non_stable: &SeriesWindow,
    w_stable: &SeriesWindow,
) -> Result<SeriesWindow> {
    if !w_non_stable.same_shape(w_stable) {
        return Err(Error::shape(format!(
            "window shapes {} vs {} differ",
            w_non_stable.shape_str(),
            w_stable.shape_str()
        )));
    }
    let per_batch = parallel::map_indexed(w_non_stable.batch, |b| {
        cross_attention(&w_non_stable.batch_mat(b), &w_stable.batch_mat(b))
    });
    let mut out = SeriesWindow::zeros(w_non_stable.batch, w_non_stable.channels, w_non_stable.len);
    for (b, m) in per_batch.into_iter().enumerate() {
        out.set_batch_mat(b, &m?);
    }
    Ok(out)
}

/// Gradients of `attention(q, k, v)` w.r.t. all three inputs, given the
/// forward weights α and the upstream gradient on the output.
///
/// dV = αᵀ·dO; dα = dO·Vᵀ; softmax backward per row
/// dM_i = α_i ⊙ (dα_i − ⟨α_i, dα_i⟩); dQ = dM·K/√D; dK = dMᵀ·Q/√D.
pub fn attention_backward(
    q: &Mat,
    k: &Mat,
    v: &Mat,
    weights: &Mat,
    d_out: &Mat,
) -> (Mat, Mat, Mat) {
    let inv_sqrt_d = 1.0 / (q.cols as f64).sqrt();
    let d_v = weights.transpose().matmul(d_out);
    let d_alpha = d_out.matmul_nt(v);
    let mut d_scores = Mat::zeros(weights.rows, weights.cols);
    for i in 0..weights.rows {
        let a = weights.row(i);
        let da = d_alpha.row(i);
        let inner = dot(a, da);
        let ds = d_scores.row_mut(i);
        for j in 0..a.len() {
            ds[j] = a[j] * (da[j] - inner);
        }
    }
    let mut d_q = d_scores.matmul(k);
    let mut d_k = d_scores.transpose().matmul(q);
    for v in d_q.data.iter_mut() {
        *v *= inv_sqrt_d;
    }
    for v in d_k.data.iter_mut() {
        *v *= inv_sqrt_d;
    }
    (d_q, d_k, d_v)
}

/// Input gradients of `cross_attention`: the stable component receives both
/// the key and the value paths.
pub fn cross_attention_backward(
    x_non_stable: &Mat,
    x_stable: &Mat,
    d_out: &Mat,
) -> Result<(Mat, Mat)> {
    let m = attention_matrices(x_non_stable, x_stable)?;
    let (d_q, d_k, d_v) = attention_backward(x_non_stable, x_stable, x_stable, &m.weights, d_out);
    let mut d_stable = d_k;
    d_stable.add_assign(&d_v);
    Ok((d_q, d_stable))
}
