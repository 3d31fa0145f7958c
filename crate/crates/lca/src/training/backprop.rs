//! Cached forward pass and exact reverse-mode gradients through the encoder.
//!
//! The forward here mirrors [`crate::encoder::forward_pooled`] operation for
//! operation (a unit test pins the two paths to identical output); it
//! additionally records every activation the backward pass needs. Gradients
//! are accumulated into an [`LcaEncoderParams`]-shaped container.

use crate::data::ShotSequence;
use crate::encoder::{
    self, gelu, gelu_prime, matvec, EncoderParams, LcaEncoderParams,
};
use crate::error::Result;

/// Per-token layer-norm record: normalized values before gain/bias, the
/// inverse stddev per token, and the post-gain output fed onward.
struct NormTape {
    x_hat: Vec<f64>,
    inv_std: Vec<f64>,
    out: Vec<f64>,
}

struct LayerTape {
    ln1: NormTape,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Softmaxed attention weights, `[head][query][key]` flattened.
    attn: Vec<f64>,
    /// Concatenated head outputs before the output projection.
    concat: Vec<f64>,
    ln2: NormTape,
    h1: Vec<f64>,
    h1a: Vec<f64>,
}

/// Activations of one sequence's forward pass.
pub struct Tape {
    pooled: Vec<Vec<f64>>,
    layers: Vec<LayerTape>,
    x_final: Vec<f64>,
    final_hat: Vec<f64>,
    final_inv_std: f64,
    cls_normed: Vec<f64>,
    head_h: Vec<f64>,
    head_ha: Vec<f64>,
    pub embedding: Vec<f64>,
    pub seq_len: usize,
}

fn layer_norm_cached(x: &[f64], gain: &[f64], bias: &[f64]) -> (Vec<f64>, f64, Vec<f64>) {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let inv_std = (var + encoder::LAYER_NORM_EPS).sqrt().recip();
    let mut hat = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for (i, &xv) in x.iter().enumerate() {
        hat[i] = (xv - mean) * inv_std;
        out[i] = gain[i] * hat[i] + bias[i];
    }
    (hat, inv_std, out)
}

/// Forward pass over validated, pooled shot embeddings, recording the tape.
pub fn forward_cached_pooled(params: &LcaEncoderParams, pooled: Vec<Vec<f64>>) -> Tape {
    let cfg = &params.config;
    let d = cfg.d_model;
    let n = pooled.len();
    let tokens = n + 1;

    let mut x = vec![0.0; tokens * d];
    for (xi, (c, pos)) in x.iter_mut().zip(params.cls_token.iter().zip(&params.positional)) {
        *xi = *c + *pos;
    }
    let mut projected = vec![0.0; d];
    for (s, shot) in pooled.iter().enumerate() {
        matvec(&params.input_projection, d, cfg.input_dim, shot, None, &mut projected);
        for i in 0..d {
            x[(s + 1) * d + i] = projected[i] + params.positional[(s + 1) * d + i];
        }
    }
    let heads = cfg.num_heads;
    let hd = cfg.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();
    let mut layers = Vec::with_capacity(cfg.num_layers);

    for layer in &params.layers {
        // pre-norm attention
        let mut ln1 = NormTape {
            x_hat: vec![0.0; tokens * d],
            inv_std: vec![0.0; tokens],
            out: vec![0.0; tokens * d],
        };
        for t in 0..tokens {
            let (hat, inv, out) =
                layer_norm_cached(&x[t * d..(t + 1) * d], &layer.ln1_gain, &layer.ln1_bias);
            ln1.x_hat[t * d..(t + 1) * d].copy_from_slice(&hat);
            ln1.inv_std[t] = inv;
            ln1.out[t * d..(t + 1) * d].copy_from_slice(&out);
        }
        let mut q = vec![0.0; tokens * d];
        let mut k = vec![0.0; tokens * d];
        let mut v = vec![0.0; tokens * d];
        for t in 0..tokens {
            let row = &ln1.out[t * d..(t + 1) * d];
            matvec(&layer.wq, d, d, row, Some(&layer.bq), &mut q[t * d..(t + 1) * d]);
            matvec(&layer.wk, d, d, row, Some(&layer.bk), &mut k[t * d..(t + 1) * d]);
            matvec(&layer.wv, d, d, row, Some(&layer.bv), &mut v[t * d..(t + 1) * d]);
        }
        let mut attn = vec![0.0; heads * tokens * tokens];
        let mut concat = vec![0.0; tokens * d];
        for h in 0..heads {
            let off = h * hd;
            for t in 0..tokens {
                let qt = &q[t * d + off..t * d + off + hd];
                let weights = &mut attn[(h * tokens + t) * tokens..(h * tokens + t + 1) * tokens];
                for u in 0..tokens {
                    let ku = &k[u * d + off..u * d + off + hd];
                    let mut acc = 0.0;
                    for i in 0..hd {
                        acc += qt[i] * ku[i];
                    }
                    weights[u] = acc * scale;
                }
                encoder::softmax_in_place(weights);
                let out = &mut concat[t * d + off..t * d + off + hd];
                for i in 0..hd {
                    let mut acc = 0.0;
                    for (u, w) in weights.iter().enumerate() {
                        acc += *w * v[u * d + off + i];
                    }
                    out[i] = acc;
                }
            }
        }
        let mut proj = vec![0.0; d];
        for t in 0..tokens {
            matvec(&layer.wo, d, d, &concat[t * d..(t + 1) * d], Some(&layer.bo), &mut proj);
            for i in 0..d {
                x[t * d + i] += proj[i];
            }
        }

        // pre-norm feed-forward
        let mut ln2 = NormTape {
            x_hat: vec![0.0; tokens * d],
            inv_std: vec![0.0; tokens],
            out: vec![0.0; tokens * d],
        };
        let mut h1 = vec![0.0; tokens * cfg.d_ff];
        let mut h1a = vec![0.0; tokens * cfg.d_ff];
        let mut ff = vec![0.0; d];
        for t in 0..tokens {
            let (hat, inv, out) =
                layer_norm_cached(&x[t * d..(t + 1) * d], &layer.ln2_gain, &layer.ln2_bias);
            ln2.x_hat[t * d..(t + 1) * d].copy_from_slice(&hat);
            ln2.inv_std[t] = inv;
            ln2.out[t * d..(t + 1) * d].copy_from_slice(&out);
            let h1_t = &mut h1[t * cfg.d_ff..(t + 1) * cfg.d_ff];
            matvec(&layer.ff_w1, cfg.d_ff, d, &out, Some(&layer.ff_b1), h1_t);
            let h1a_t = &mut h1a[t * cfg.d_ff..(t + 1) * cfg.d_ff];
            for i in 0..cfg.d_ff {
                h1a_t[i] = gelu(h1_t[i]);
            }
            matvec(&layer.ff_w2, d, cfg.d_ff, h1a_t, Some(&layer.ff_b2), &mut ff);
            for i in 0..d {
                x[t * d + i] += ff[i];
            }
        }

        layers.push(LayerTape { ln1, q, k, v, attn, concat, ln2, h1, h1a });
    }

    // final normalization, then the MLP head on CLS
    let (final_hat, final_inv_std, cls_normed) =
        layer_norm_cached(&x[0..d], &params.final_gain, &params.final_bias);
    let mut head_h = vec![0.0; d];
    matvec(&params.head.w1, d, d, &cls_normed, Some(&params.head.b1), &mut head_h);
    let head_ha: Vec<f64> = head_h.iter().map(|&h| gelu(h)).collect();
    let mut embedding = vec![0.0; cfg.d_out];
    matvec(&params.head.w2, cfg.d_out, d, &head_ha, Some(&params.head.b2), &mut embedding);

    Tape {
        seq_len: n,
        pooled,
        layers,
        x_final: x,
        final_hat,
        final_inv_std,
        cls_normed,
        head_h,
        head_ha,
        embedding,
    }
}

/// Validate, pool, and run the cached forward.
pub fn forward_cached(params: &LcaEncoderParams, v: &ShotSequence) -> Result<Tape> {
    let pooled = encoder::pooled_inputs(&params.config, v)?;
    Ok(forward_cached_pooled(params, pooled))
}

fn outer_acc(grad_w: &mut [f64], dy: &[f64], x: &[f64]) {
    debug_assert_eq!(grad_w.len(), dy.len() * x.len());
    for (r, dyr) in dy.iter().enumerate() {
        let row = &mut grad_w[r * x.len()..(r + 1) * x.len()];
        for (c, xc) in x.iter().enumerate() {
            row[c] += dyr * xc;
        }
    }
}

fn add_acc(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// out_acc[c] += sum_r w[r, c] * dy[r]
fn matvec_transpose_acc(w: &[f64], rows: usize, cols: usize, dy: &[f64], out_acc: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    for (r, dyr) in dy.iter().enumerate().take(rows) {
        let row = &w[r * cols..(r + 1) * cols];
        for c in 0..cols {
            out_acc[c] += row[c] * dyr;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn layer_norm_backward(
    dy: &[f64],
    x_hat: &[f64],
    inv_std: f64,
    gain: &[f64],
    d_gain: &mut [f64],
    d_bias: &mut [f64],
    dx_acc: &mut [f64],
) {
    let d = dy.len();
    let mut d_hat = vec![0.0; d];
    for i in 0..d {
        d_gain[i] += dy[i] * x_hat[i];
        d_bias[i] += dy[i];
        d_hat[i] = dy[i] * gain[i];
    }
    let mean_dhat = d_hat.iter().sum::<f64>() / d as f64;
    let mean_dhat_hat = d_hat.iter().zip(x_hat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
    for i in 0..d {
        dx_acc[i] += inv_std * (d_hat[i] - mean_dhat - x_hat[i] * mean_dhat_hat);
    }
}

/// Accumulate gradients of a scalar objective into `grads`, given the
/// objective's gradient with respect to the sequence embedding.
pub fn backward(
    params: &LcaEncoderParams,
    tape: &Tape,
    d_embedding: &[f64],
    grads: &mut LcaEncoderParams,
) {
    let cfg = &params.config;
    let d = cfg.d_model;
    let tokens = tape.seq_len + 1;
    let heads = cfg.num_heads;
    let hd = cfg.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();

    // head backward
    outer_acc(&mut grads.head.w2, d_embedding, &tape.head_ha);
    add_acc(&mut grads.head.b2, d_embedding);
    let mut d_ha = vec![0.0; d];
    matvec_transpose_acc(&params.head.w2, cfg.d_out, d, d_embedding, &mut d_ha);
    let d_h: Vec<f64> = d_ha
        .iter()
        .zip(&tape.head_h)
        .map(|(g, h)| g * gelu_prime(*h))
        .collect();
    outer_acc(&mut grads.head.w1, &d_h, &tape.cls_normed);
    add_acc(&mut grads.head.b1, &d_h);
    let mut d_cls_normed = vec![0.0; d];
    matvec_transpose_acc(&params.head.w1, d, d, &d_h, &mut d_cls_normed);

    let mut d_x = vec![0.0; tokens * d];
    layer_norm_backward(
        &d_cls_normed,
        &tape.final_hat,
        tape.final_inv_std,
        &params.final_gain,
        &mut grads.final_gain,
        &mut grads.final_bias,
        &mut d_x[0..d],
    );

    for ((layer, tape_l), gl) in params
        .layers
        .iter()
        .zip(&tape.layers)
        .zip(grads.layers.iter_mut())
        .rev()
    {
        // feed-forward sublayer backward (residual: d_x flows through both)
        let d_ff_dim = cfg.d_ff;
        for t in 0..tokens {
            let d_out_t = d_x[t * d..(t + 1) * d].to_vec();
            outer_acc(&mut gl.ff_w2, &d_out_t, &tape_l.h1a[t * d_ff_dim..(t + 1) * d_ff_dim]);
            add_acc(&mut gl.ff_b2, &d_out_t);
            let mut d_h1a = vec![0.0; d_ff_dim];
            matvec_transpose_acc(&layer.ff_w2, d, d_ff_dim, &d_out_t, &mut d_h1a);
            let h1_t = &tape_l.h1[t * d_ff_dim..(t + 1) * d_ff_dim];
            let d_h1: Vec<f64> = d_h1a
                .iter()
                .zip(h1_t)
                .map(|(g, h)| g * gelu_prime(*h))
                .collect();
            outer_acc(&mut gl.ff_w1, &d_h1, &tape_l.ln2.out[t * d..(t + 1) * d]);
            add_acc(&mut gl.ff_b1, &d_h1);
            let mut d_xn2 = vec![0.0; d];
            matvec_transpose_acc(&layer.ff_w1, d_ff_dim, d, &d_h1, &mut d_xn2);
            layer_norm_backward(
                &d_xn2,
                &tape_l.ln2.x_hat[t * d..(t + 1) * d],
                tape_l.ln2.inv_std[t],
                &layer.ln2_gain,
                &mut gl.ln2_gain,
                &mut gl.ln2_bias,
                &mut d_x[t * d..(t + 1) * d],
            );
        }

        // attention sublayer backward
        let mut d_concat = vec![0.0; tokens * d];
        for t in 0..tokens {
            let d_attn_out = d_x[t * d..(t + 1) * d].to_vec();
            outer_acc(&mut gl.wo, &d_attn_out, &tape_l.concat[t * d..(t + 1) * d]);
            add_acc(&mut gl.bo, &d_attn_out);
            matvec_transpose_acc(&layer.wo, d, d, &d_attn_out, &mut d_concat[t * d..(t + 1) * d]);
        }

        let mut d_q = vec![0.0; tokens * d];
        let mut d_k = vec![0.0; tokens * d];
        let mut d_v = vec![0.0; tokens * d];
        for h in 0..heads {
            let off = h * hd;
            for t in 0..tokens {
                let weights = &tape_l.attn[(h * tokens + t) * tokens..(h * tokens + t + 1) * tokens];
                let d_concat_t = &d_concat[t * d + off..t * d + off + hd];
                // weighted-sum backward
                let mut d_weights = vec![0.0; tokens];
                for (u, dw) in d_weights.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (i, &dc) in d_concat_t.iter().enumerate() {
                        acc += dc * tape_l.v[u * d + off + i];
                        d_v[u * d + off + i] += weights[u] * dc;
                    }
                    *dw = acc;
                }
                // softmax backward
                let dot: f64 = weights.iter().zip(&d_weights).map(|(w, g)| w * g).sum();
                for u in 0..tokens {
                    let d_logit = weights[u] * (d_weights[u] - dot);
                    for i in 0..hd {
                        d_q[t * d + off + i] += d_logit * tape_l.k[u * d + off + i] * scale;
                        d_k[u * d + off + i] += d_logit * tape_l.q[t * d + off + i] * scale;
                    }
                }
            }
        }

        let mut d_xn1 = vec![0.0; tokens * d];
        for t in 0..tokens {
            let xn1_t = &tape_l.ln1.out[t * d..(t + 1) * d];
            outer_acc(&mut gl.wq, &d_q[t * d..(t + 1) * d], xn1_t);
            add_acc(&mut gl.bq, &d_q[t * d..(t + 1) * d]);
            outer_acc(&mut gl.wk, &d_k[t * d..(t + 1) * d], xn1_t);
            add_acc(&mut gl.bk, &d_k[t * d..(t + 1) * d]);
            outer_acc(&mut gl.wv, &d_v[t * d..(t + 1) * d], xn1_t);
            add_acc(&mut gl.bv, &d_v[t * d..(t + 1) * d]);
            let row = &mut d_xn1[t * d..(t + 1) * d];
            matvec_transpose_acc(&layer.wq, d, d, &d_q[t * d..(t + 1) * d], row);
            matvec_transpose_acc(&layer.wk, d, d, &d_k[t * d..(t + 1) * d], row);
            matvec_transpose_acc(&layer.wv, d, d, &d_v[t * d..(t + 1) * d], row);
        }
        for t in 0..tokens {
            layer_norm_backward(
                &d_xn1[t * d..(t + 1) * d],
                &tape_l.ln1.x_hat[t * d..(t + 1) * d],
                tape_l.ln1.inv_std[t],
                &layer.ln1_gain,
                &mut gl.ln1_gain,
                &mut gl.ln1_bias,
                &mut d_x[t * d..(t + 1) * d],
            );
        }
    }

    // embedding backward
    add_acc(&mut grads.cls_token, &d_x[0..d]);
    add_acc(&mut grads.positional[0..d], &d_x[0..d]);
    for s in 0..tape.seq_len {
        let row = &d_x[(s + 1) * d..(s + 2) * d];
        add_acc(&mut grads.positional[(s + 1) * d..(s + 2) * d], row);
        outer_acc(&mut grads.input_projection, row, &tape.pooled[s]);
    }
}

/// Backward through the regression head and then the encoder, given the
/// gradient of the objective with respect to the scalar score.
pub fn backward_score(
    params: &LcaEncoderParams,
    tape: &Tape,
    d_score: f64,
    grads: &mut LcaEncoderParams,
) {
    for (gw, e) in grads.regression.weight.iter_mut().zip(&tape.embedding) {
        *gw += d_score * e;
    }
    grads.regression.bias += d_score;
    let d_embedding: Vec<f64> = params.regression.weight.iter().map(|w| w * d_score).collect();
    backward(params, tape, &d_embedding, grads);
}

/// Elementwise `acc += scale * other` over every tensor.
pub fn add_scaled(acc: &mut LcaEncoderParams, other: &EncoderParams<f64>, scale: f64) {
    for (a, o) in acc.tensors_mut().into_iter().zip(other.tensors()) {
        for (x, y) in a.iter_mut().zip(o) {
            *x += scale * y;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{forward, init_params, EncoderConfig};
    use crate::synthdata::gen_coherent_video;

    fn tiny_config() -> EncoderConfig {
        EncoderConfig {
            d_model: 8,
            num_layers: 1,
            num_heads: 1,
            d_ff: 12,
            d_out: 4,
            max_seq_len: 8,
            input_dim: 6,
        }
    }

    #[test]
    fn cached_forward_matches_inference_forward() {
        let cfg = EncoderConfig {
            d_model: 16,
            num_layers: 2,
            num_heads: 2,
            d_ff: 24,
            d_out: 8,
            max_seq_len: 10,
            input_dim: 12,
        };
        let params = init_params(cfg, 4).unwrap();
        for n in [1usize, 3, 7] {
            let v = gen_coherent_video(n as u64 + 10, n, cfg.input_dim, 0.1, 0.02).unwrap();
            let inference = forward(&params, &v).unwrap();
            let tape = forward_cached(&params, &v).unwrap();
            assert_eq!(inference.values(), tape.embedding.as_slice());
        }
    }

    /// Central finite differences of an arbitrary scalar objective of the
    /// embedding, checked against the analytic backward, over every
    /// parameter. This is the core gradient oracle for the whole crate.
    #[test]
    fn backward_matches_finite_differences() {
        let cfg = tiny_config();
        let params = init_params(cfg, 7).unwrap();
        let v = gen_coherent_video(3, 4, cfg.input_dim, 0.1, 0.02).unwrap();

        // objective: weighted sum of embedding components (arbitrary fixed w)
        let w: Vec<f64> = (0..cfg.d_out).map(|i| 0.3 + 0.1 * i as f64).collect();
        let objective = |p: &LcaEncoderParams| -> f64 {
            let e = forward(p, &v).unwrap();
            e.values().iter().zip(&w).map(|(a, b)| a * b).sum()
        };

        let tape = forward_cached(&params, &v).unwrap();
        let mut grads = LcaEncoderParams::zeros(cfg);
        backward(&params, &tape, &w, &mut grads);

        let flat = params.to_flat();
        let analytic = grads.to_flat();
        let h = 1e-5;
        let mut worst = 0.0f64;
        let mut scratch = params.clone();
        for i in 0..flat.len() {
            let mut up = flat.clone();
            up[i] += h;
            scratch.set_flat(&up);
            let fu = objective(&scratch);
            let mut down = flat.clone();
            down[i] -= h;
            scratch.set_flat(&down);
            let fd_val = objective(&scratch);
            let fd = (fu - fd_val) / (2.0 * h);
            let diff = (analytic[i] - fd).abs();
            if diff <= 1e-8 {
                continue; // machine-precision zero; fd noise only
            }
            let denom = analytic[i].abs().max(fd.abs()).max(1e-6);
            worst = worst.max(diff / denom);
        }
        assert!(worst < 1e-4, "worst relative gradient error {worst}");
    }
}
