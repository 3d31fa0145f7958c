//! Loss functions over sequence embeddings, with closed-form gradients with
//! respect to the embeddings. Gradients with respect to encoder parameters
//! are chained through [`crate::training::backprop`].

use crate::error::{Error, Result};
use crate::linalg;

/// Cosine similarity in the learned embedding space.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cosine_sim over mismatched lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let na = linalg::norm(a);
    let nb = linalg::norm(b);
    if na <= 0.0 || nb <= 0.0 {
        return Err(Error::Numerical("cosine_sim on a zero vector is degenerate".into()));
    }
    Ok(linalg::dot(a, b) / (na * nb))
}

/// Cosine similarity plus its gradients with respect to both arguments.
fn cosine_sim_grad(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let s = cosine_sim(a, b)?;
    let na = linalg::norm(a);
    let nb = linalg::norm(b);
    let inv = 1.0 / (na * nb);
    let da: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(ai, bi)| bi * inv - s * ai / (na * na))
        .collect();
    let db: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(ai, bi)| ai * inv - s * bi / (nb * nb))
        .collect();
    Ok((s, da, db))
}

/// Noise-contrastive loss: softmax over the anchor's similarity to the
/// positive versus every negative, at temperature `tau`, stabilized with
/// log-sum-exp. Always positive.
pub fn nce_loss(anchor: &[f64], positive: &[f64], negatives: &[&[f64]], tau: f64) -> Result<f64> {
    let logits = nce_logits(anchor, positive, negatives, tau)?;
    Ok(log_sum_exp(&logits) - logits[0])
}

fn nce_logits(anchor: &[f64], positive: &[f64], negatives: &[&[f64]], tau: f64) -> Result<Vec<f64>> {
    if tau <= 0.0 {
        return Err(Error::Param(format!("temperature {tau} must be positive")));
    }
    if negatives.is_empty() {
        return Err(Error::Param("nce_loss needs at least one negative".into()));
    }
    let mut logits = Vec::with_capacity(1 + negatives.len());
    logits.push(cosine_sim(anchor, positive)? / tau);
    for n in negatives {
        logits.push(cosine_sim(anchor, n)? / tau);
    }
    Ok(logits)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// NCE loss and its gradients with respect to every embedding involved.
pub struct NceGrads {
    pub loss: f64,
    pub d_anchor: Vec<f64>,
    pub d_positive: Vec<f64>,
    pub d_negatives: Vec<Vec<f64>>,
}

pub fn nce_loss_grads(
    anchor: &[f64],
    positive: &[f64],
    negatives: &[&[f64]],
    tau: f64,
) -> Result<NceGrads> {
    let logits = nce_logits(anchor, positive, negatives, tau)?;
    let lse = log_sum_exp(&logits);
    let loss = lse - logits[0];
    // d loss / d logit_j = softmax_j - [j == 0]
    let probs: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();

    let mut d_anchor = vec![0.0; anchor.len()];
    let (_, da_p, d_positive_raw) = cosine_sim_grad(anchor, positive)?;
    let w_pos = (probs[0] - 1.0) / tau;
    linalg::axpy(&mut d_anchor, w_pos, &da_p);
    let d_positive: Vec<f64> = d_positive_raw.iter().map(|g| g * w_pos).collect();

    let mut d_negatives = Vec::with_capacity(negatives.len());
    for (i, neg) in negatives.iter().enumerate() {
        let (_, da_n, dn) = cosine_sim_grad(anchor, neg)?;
        let w = probs[i + 1] / tau;
        linalg::axpy(&mut d_anchor, w, &da_n);
        d_negatives.push(dn.iter().map(|g| g * w).collect());
    }
    Ok(NceGrads { loss, d_anchor, d_positive, d_negatives })
}

/// Plain mean squared error.
pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Shape(format!(
            "mse_loss over mismatched lengths {} and {}",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Shape("mse_loss needs at least one sample".into()));
    }
    let n = predictions.len() as f64;
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

const VAR_EPS: f64 = 1e-12;

/// Sequence-length decorrelation penalty: z-score the lengths and each
/// embedding dimension over the batch, then average the squared
/// per-dimension covariance with the lengths. Zero-variance batches (all
/// lengths equal) contribute nothing.
pub fn length_decorrelation(embeddings: &[&[f64]], lengths: &[usize]) -> Result<f64> {
    decorrelation_core(embeddings, lengths, None)
}

/// Penalty plus gradients with respect to each embedding.
pub fn length_decorrelation_grads(
    embeddings: &[&[f64]],
    lengths: &[usize],
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut grads = vec![vec![0.0; embeddings[0].len()]; embeddings.len()];
    let penalty = decorrelation_core(embeddings, lengths, Some(&mut grads))?;
    Ok((penalty, grads))
}

fn decorrelation_core(
    embeddings: &[&[f64]],
    lengths: &[usize],
    mut grads: Option<&mut Vec<Vec<f64>>>,
) -> Result<f64> {
    let batch = embeddings.len();
    if batch < 2 {
        return Err(Error::Param("length decorrelation needs a batch of at least 2".into()));
    }
    if lengths.len() != batch {
        return Err(Error::Shape("one length per embedding required".into()));
    }
    let dim = embeddings[0].len();
    if embeddings.iter().any(|e| e.len() != dim) {
        return Err(Error::Shape("embeddings must share a dimension".into()));
    }
    let b = batch as f64;

    // z-scored lengths (population variance; eps keeps it smooth)
    let lens: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    let mean_len = lens.iter().sum::<f64>() / b;
    let var_len = lens.iter().map(|l| (l - mean_len) * (l - mean_len)).sum::<f64>() / b;
    let inv_std_len = 1.0 / (var_len + VAR_EPS).sqrt();
    let zl: Vec<f64> = lens.iter().map(|l| (l - mean_len) * inv_std_len).collect();

    let mut penalty = 0.0;
    let mut col = vec![0.0; batch];
    let mut zcol = vec![0.0; batch];
    for j in 0..dim {
        for (bi, e) in embeddings.iter().enumerate() {
            col[bi] = e[j];
        }
        let mean = col.iter().sum::<f64>() / b;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / b;
        let inv_std = 1.0 / (var + VAR_EPS).sqrt();
        for bi in 0..batch {
            zcol[bi] = (col[bi] - mean) * inv_std;
        }
        let cov = zcol.iter().zip(&zl).map(|(z, l)| z * l).sum::<f64>() / b;
        penalty += cov * cov;

        if let Some(grads) = grads.as_deref_mut() {
            // dP/dz_b = (2 / dim) * cov * zl_b / batch, then back through
            // the z-score (same shape as a layer-norm backward).
            let upstream: Vec<f64> =
                zl.iter().map(|l| 2.0 * cov * l / (dim as f64 * b)).collect();
            let mean_up = upstream.iter().sum::<f64>() / b;
            let mean_up_z = upstream.iter().zip(&zcol).map(|(u, z)| u * z).sum::<f64>() / b;
            for bi in 0..batch {
                grads[bi][j] += inv_std * (upstream[bi] - mean_up - zcol[bi] * mean_up_z);
            }
        }
    }
    Ok(penalty / dim as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn cosine_basics() {
        let u = vec![0.3, -0.4, 0.5];
        assert!((cosine_sim(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        assert!((cosine_sim(&u, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!((cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap()).abs() < 1e-12);
        assert!(cosine_sim(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine_sim(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn nce_equal_similarities_is_log_k_plus_one() {
        // anchor equidistant from positive and 4 negatives -> softmax 1/5
        let anchor = vec![1.0, 0.0, 0.0];
        let other = vec![0.0, 1.0, 0.0];
        let negs: Vec<&[f64]> = vec![&other, &other, &other, &other];
        let loss = nce_loss(&anchor, &other, &negs, 0.1).unwrap();
        assert!((loss - 5.0f64.ln()).abs() < 1e-12, "loss {loss}");
    }

    #[test]
    fn nce_wide_margin_closed_form() {
        let anchor = vec![1.0, 0.0];
        let positive = vec![1.0, 0.0];
        let negative = vec![-1.0, 0.0];
        let negs: Vec<&[f64]> = vec![&negative];
        let loss = nce_loss(&anchor, &positive, &negs, 0.1).unwrap();
        let expected = (1.0 + (-20.0f64).exp()).ln();
        assert!((loss - expected).abs() < 1e-15, "loss {loss} vs {expected}");
    }

    #[test]
    fn nce_invariant_to_negative_order_and_positive() {
        let mut rng = Rng::new(5);
        let vecs: Vec<Vec<f64>> = (0..5).map(|_| rng.gaussian_vec(8, 1.0)).collect();
        let negs_a: Vec<&[f64]> = vec![&vecs[1], &vecs[2], &vecs[3]];
        let negs_b: Vec<&[f64]> = vec![&vecs[3], &vecs[1], &vecs[2]];
        let a = nce_loss(&vecs[0], &vecs[4], &negs_a, 0.1).unwrap();
        let b = nce_loss(&vecs[0], &vecs[4], &negs_b, 0.1).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(a > 0.0);
    }

    #[test]
    fn nce_monotone_in_similarities() {
        // raising the positive similarity lowers the loss; raising a negative
        // similarity raises it
        let tau = 0.2;
        let anchor = vec![1.0, 0.0];
        let neg = vec![0.0, 1.0];
        let mk = |angle: f64| vec![angle.cos(), angle.sin()];
        let mut last = f64::INFINITY;
        for deg in [60.0f64, 40.0, 20.0, 5.0] {
            let pos = mk(deg.to_radians());
            let negs: Vec<&[f64]> = vec![&neg];
            let loss = nce_loss(&anchor, &pos, &negs, tau).unwrap();
            assert!(loss < last);
            last = loss;
        }

        let pos = mk(30.0f64.to_radians());
        let mut last = 0.0;
        for deg in [80.0f64, 60.0, 40.0, 10.0] {
            let neg = mk(deg.to_radians()); // closer negative -> higher loss
            let negs: Vec<&[f64]> = vec![&neg];
            let loss = nce_loss(&anchor, &pos, &negs, tau).unwrap();
            assert!(loss > last);
            last = loss;
        }
    }

    #[test]
    fn nce_rejects_bad_inputs() {
        let u = vec![1.0, 0.0];
        let empty: Vec<&[f64]> = vec![];
        assert!(nce_loss(&u, &u, &empty, 0.1).is_err());
        let negs: Vec<&[f64]> = vec![&u];
        assert!(nce_loss(&u, &u, &negs, 0.0).is_err());
    }

    #[test]
    fn nce_grad_step_reduces_loss() {
        // positive == anchor, negatives orthogonal: one small descent step on
        // the anchor must strictly reduce the loss
        let anchor = vec![1.0, 0.0, 0.0, 0.0];
        let positive = anchor.clone();
        let n1 = vec![0.0, 1.0, 0.0, 0.0];
        let n2 = vec![0.0, 0.0, 1.0, 0.0];
        let negs: Vec<&[f64]> = vec![&n1, &n2];
        let g = nce_loss_grads(&anchor, &positive, &negs, 0.5).unwrap();
        let stepped: Vec<f64> = anchor.iter().zip(&g.d_anchor).map(|(a, d)| a - 1e-3 * d).collect();
        let after = nce_loss(&stepped, &positive, &negs, 0.5).unwrap();
        assert!(after < g.loss, "{after} !< {}", g.loss);
    }

    #[test]
    fn nce_grads_match_finite_differences() {
        let mut rng = Rng::new(11);
        let anchor = rng.gaussian_vec(6, 1.0);
        let positive = rng.gaussian_vec(6, 1.0);
        let n1 = rng.gaussian_vec(6, 1.0);
        let n2 = rng.gaussian_vec(6, 1.0);
        let tau = 0.3;
        let loss_fn = |a: &[f64], p: &[f64], x1: &[f64], x2: &[f64]| {
            let negs: Vec<&[f64]> = vec![x1, x2];
            nce_loss(a, p, &negs, tau).unwrap()
        };
        let negs: Vec<&[f64]> = vec![&n1, &n2];
        let g = nce_loss_grads(&anchor, &positive, &negs, tau).unwrap();
        let h = 1e-6;
        for i in 0..6 {
            let mut ap = anchor.clone();
            let mut am = anchor.clone();
            ap[i] += h;
            am[i] -= h;
            let fd = (loss_fn(&ap, &positive, &n1, &n2) - loss_fn(&am, &positive, &n1, &n2)) / (2.0 * h);
            assert!((fd - g.d_anchor[i]).abs() < 1e-6, "anchor[{i}]: fd {fd} vs {}", g.d_anchor[i]);

            let mut pp = positive.clone();
            let mut pm = positive.clone();
            pp[i] += h;
            pm[i] -= h;
            let fd = (loss_fn(&anchor, &pp, &n1, &n2) - loss_fn(&anchor, &pm, &n1, &n2)) / (2.0 * h);
            assert!((fd - g.d_positive[i]).abs() < 1e-6);

            let mut np = n1.clone();
            let mut nm = n1.clone();
            np[i] += h;
            nm[i] -= h;
            let fd = (loss_fn(&anchor, &positive, &np, &n2) - loss_fn(&anchor, &positive, &nm, &n2)) / (2.0 * h);
            assert!((fd - g.d_negatives[0][i]).abs() < 1e-6);
        }
    }

    #[test]
    fn mse_basics() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 2.5);
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mse_loss(&[], &[]).is_err());
        // residual scaling by c scales loss by c^2
        let base = mse_loss(&[3.0, -1.0], &[1.0, 1.0]).unwrap();
        let scaled = mse_loss(&[5.0, -3.0], &[1.0, 1.0]).unwrap();
        assert!((scaled - 4.0 * base).abs() < 1e-12);
    }

    #[test]
    fn decorrelation_reference_case() {
        // two samples, one dimension: both z-scores are (-1, 1), covariance 1
        let e1 = [-1.0];
        let e2 = [1.0];
        let embeddings: Vec<&[f64]> = vec![&e1, &e2];
        let p = length_decorrelation(&embeddings, &[3, 5]).unwrap();
        assert!((p - 1.0).abs() < 1e-9, "penalty {p}");
    }

    #[test]
    fn decorrelation_zero_when_lengths_equal() {
        let e1 = [0.3, -2.0];
        let e2 = [1.5, 0.7];
        let embeddings: Vec<&[f64]> = vec![&e1, &e2];
        assert_eq!(length_decorrelation(&embeddings, &[4, 4]).unwrap(), 0.0);
    }

    #[test]
    fn decorrelation_invariant_to_affine_length_rescaling() {
        let mut rng = Rng::new(2);
        let embeds: Vec<Vec<f64>> = (0..6).map(|_| rng.gaussian_vec(4, 1.0)).collect();
        let views: Vec<&[f64]> = embeds.iter().map(|e| e.as_slice()).collect();
        let a = length_decorrelation(&views, &[3, 5, 7, 9, 11, 13]).unwrap();
        // affine rescale: l -> 10*l + 4
        let b = length_decorrelation(&views, &[34, 54, 74, 94, 114, 134]).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn decorrelation_vanishes_for_independent_data() {
        let mut rng = Rng::new(8);
        let batch = 10_000;
        let embeds: Vec<Vec<f64>> = (0..batch).map(|_| rng.gaussian_vec(4, 1.0)).collect();
        let views: Vec<&[f64]> = embeds.iter().map(|e| e.as_slice()).collect();
        let lengths: Vec<usize> = (0..batch).map(|_| 3 + rng.below(10)).collect();
        let p = length_decorrelation(&views, &lengths).unwrap();
        assert!(p < 0.01, "penalty {p}");
    }

    #[test]
    fn decorrelation_needs_two_samples() {
        let e1 = [1.0];
        let embeddings: Vec<&[f64]> = vec![&e1];
        assert!(length_decorrelation(&embeddings, &[3]).is_err());
    }

    #[test]
    fn decorrelation_grads_match_finite_differences() {
        let mut rng = Rng::new(21);
        let mut embeds: Vec<Vec<f64>> = (0..5).map(|_| rng.gaussian_vec(3, 1.0)).collect();
        let lengths = [3usize, 5, 8, 4, 11];
        let views: Vec<&[f64]> = embeds.iter().map(|e| e.as_slice()).collect();
        let (_, grads) = length_decorrelation_grads(&views, &lengths).unwrap();
        let h = 1e-6;
        for b in 0..5 {
            for j in 0..3 {
                let orig = embeds[b][j];
                embeds[b][j] = orig + h;
                let views: Vec<&[f64]> = embeds.iter().map(|e| e.as_slice()).collect();
                let up = length_decorrelation(&views, &lengths).unwrap();
                embeds[b][j] = orig - h;
                let views: Vec<&[f64]> = embeds.iter().map(|e| e.as_slice()).collect();
                let down = length_decorrelation(&views, &lengths).unwrap();
                embeds[b][j] = orig;
                let fd = (up - down) / (2.0 * h);
                assert!(
                    (fd - grads[b][j]).abs() < 1e-7,
                    "grad[{b}][{j}]: fd {fd} vs analytic {}",
                    grads[b][j]
                );
            }
        }
    }
}
