//! Batch gradients for the two training objectives and their joint form.
//!
//! Per-sample forward/backward passes run in parallel; the reduction into a
//! single gradient always happens sequentially in dataset order, so results
//! are deterministic regardless of thread schedule.

use rayon::prelude::*;

use crate::data::{ContrastiveTriplet, RatedSequence};
use crate::encoder::LcaEncoderParams;
use crate::error::{Error, Result};
use crate::training::backprop::{add_scaled, backward, backward_score, forward_cached, Tape};
use crate::training::loss::{
    length_decorrelation_grads, mse_loss, nce_loss_grads, NceGrads,
};

/// Loss breakdown and full-parameter gradient for one batch.
pub struct BatchGrads {
    pub loss: f64,
    pub nce_mean: f64,
    pub decorrelation_penalty: f64,
    pub grads: LcaEncoderParams,
}

struct TripletWork {
    anchor: Tape,
    positive: Tape,
    negatives: Vec<Tape>,
    nce: NceGrads,
}

/// Gradient of `mean NCE + lambda * length_decorrelation(anchors)` over a
/// batch of triplets. The decorrelation term is defined for batches of at
/// least two; smaller batches contribute zero penalty.
pub fn coherence_batch_grad(
    params: &LcaEncoderParams,
    batch: &[&ContrastiveTriplet],
    tau: f64,
    lambda: f64,
) -> Result<BatchGrads> {
    if batch.is_empty() {
        return Err(Error::Param("empty batch".into()));
    }
    let works: Vec<TripletWork> = batch
        .par_iter()
        .map(|triplet| -> Result<TripletWork> {
            let anchor = forward_cached(params, &triplet.anchor)?;
            let positive = forward_cached(params, &triplet.positive)?;
            let negatives = triplet
                .negatives
                .iter()
                .map(|n| forward_cached(params, n))
                .collect::<Result<Vec<_>>>()?;
            let neg_views: Vec<&[f64]> = negatives.iter().map(|t| t.embedding.as_slice()).collect();
            let nce = nce_loss_grads(&anchor.embedding, &positive.embedding, &neg_views, tau)?;
            Ok(TripletWork { anchor, positive, negatives, nce })
        })
        .collect::<Result<Vec<_>>>()?;

    let b = batch.len() as f64;
    let nce_mean = works.iter().map(|w| w.nce.loss).sum::<f64>() / b;

    let (penalty, decorr_grads) = if lambda > 0.0 && works.len() >= 2 {
        let anchors: Vec<&[f64]> = works.iter().map(|w| w.anchor.embedding.as_slice()).collect();
        let lengths: Vec<usize> = works.iter().map(|w| w.anchor.seq_len).collect();
        length_decorrelation_grads(&anchors, &lengths)?
    } else {
        (0.0, Vec::new())
    };

    let per_triplet: Vec<LcaEncoderParams> = works
        .par_iter()
        .enumerate()
        .map(|(i, work)| {
            let mut grads = LcaEncoderParams::zeros(params.config);
            let mut d_anchor: Vec<f64> = work.nce.d_anchor.iter().map(|g| g / b).collect();
            if let Some(dec) = decorr_grads.get(i) {
                for (a, d) in d_anchor.iter_mut().zip(dec) {
                    *a += lambda * d;
                }
            }
            backward(params, &work.anchor, &d_anchor, &mut grads);
            let d_pos: Vec<f64> = work.nce.d_positive.iter().map(|g| g / b).collect();
            backward(params, &work.positive, &d_pos, &mut grads);
            for (neg_tape, d_neg) in work.negatives.iter().zip(&work.nce.d_negatives) {
                let scaled: Vec<f64> = d_neg.iter().map(|g| g / b).collect();
                backward(params, neg_tape, &scaled, &mut grads);
            }
            grads
        })
        .collect();

    let mut grads = LcaEncoderParams::zeros(params.config);
    for g in &per_triplet {
        add_scaled(&mut grads, g, 1.0);
    }

    Ok(BatchGrads {
        loss: nce_mean + lambda * penalty,
        nce_mean,
        decorrelation_penalty: penalty,
        grads,
    })
}

/// Full-model gradient of the mean squared error between predicted scores
/// and ratings; gradients flow through the regression head and the encoder.
pub fn regression_batch_grad(
    params: &LcaEncoderParams,
    batch: &[&RatedSequence],
) -> Result<(f64, LcaEncoderParams)> {
    if batch.is_empty() {
        return Err(Error::Param("empty batch".into()));
    }
    let tapes: Vec<Tape> = batch
        .par_iter()
        .map(|sample| forward_cached(params, &sample.sequence))
        .collect::<Result<Vec<_>>>()?;
    let predictions: Vec<f64> = tapes
        .iter()
        .map(|t| crate::encoder::score_embedding(params, &t.embedding))
        .collect();
    let targets: Vec<f64> = batch.iter().map(|s| s.rating).collect();
    let loss = mse_loss(&predictions, &targets)?;

    let n = batch.len() as f64;
    let per_sample: Vec<LcaEncoderParams> = tapes
        .par_iter()
        .enumerate()
        .map(|(i, tape)| {
            let mut grads = LcaEncoderParams::zeros(params.config);
            let d_score = 2.0 * (predictions[i] - targets[i]) / n;
            backward_score(params, tape, d_score, &mut grads);
            grads
        })
        .collect();
    let mut grads = LcaEncoderParams::zeros(params.config);
    for g in &per_sample {
        add_scaled(&mut grads, g, 1.0);
    }
    Ok((loss, grads))
}

/// Joint objective for the end-to-end baseline:
/// `mean NCE + lambda * decorrelation + MSE`.
pub fn end_to_end_batch_grad(
    params: &LcaEncoderParams,
    triplets: &[&ContrastiveTriplet],
    rated: &[&RatedSequence],
    tau: f64,
    lambda: f64,
) -> Result<BatchGrads> {
    let coherence = coherence_batch_grad(params, triplets, tau, lambda)?;
    let (mse, mse_grads) = regression_batch_grad(params, rated)?;
    let mut grads = coherence.grads;
    add_scaled(&mut grads, &mse_grads, 1.0);
    Ok(BatchGrads {
        loss: coherence.loss + mse,
        nce_mean: coherence.nce_mean,
        decorrelation_penalty: coherence.decorrelation_penalty,
        grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_params, EncoderConfig};
    use crate::synthdata::{gen_coherent_video, make_triplet};

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

    fn donor_pool(dim: usize) -> Vec<crate::data::Shot> {
        let mut donors = Vec::new();
        for seed in 200..208 {
            donors.extend_from_slice(gen_coherent_video(seed, 6, dim, 0.1, 0.02).unwrap().shots());
        }
        donors
    }

    fn tiny_triplets(dim: usize) -> Vec<ContrastiveTriplet> {
        let donors = donor_pool(dim);
        vec![
            make_triplet(
                &gen_coherent_video(1, 3, dim, 0.1, 0.02).unwrap(),
                &donors,
                2,
                0.01,
                0.4,
                0.2,
                50,
            )
            .unwrap(),
            make_triplet(
                &gen_coherent_video(2, 5, dim, 0.1, 0.02).unwrap(),
                &donors,
                2,
                0.01,
                0.4,
                0.2,
                60,
            )
            .unwrap(),
        ]
    }

    /// Central finite differences over every parameter for the three batch
    /// objectives. Differences below 1e-8 are machine-precision zeros (the
    /// fd noise floor is eps * |loss| / h); the relative-error denominator
    /// floor guards near-zero components.
    fn gradcheck(analytic: &[f64], numeric: impl Fn(&LcaEncoderParams) -> f64, params: &LcaEncoderParams) -> f64 {
        let flat = params.to_flat();
        let mut scratch = params.clone();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..flat.len() {
            let mut up = flat.clone();
            up[i] += h;
            scratch.set_flat(&up);
            let fu = numeric(&scratch);
            let mut dn = flat.clone();
            dn[i] -= h;
            scratch.set_flat(&dn);
            let fdn = numeric(&scratch);
            let fd = (fu - fdn) / (2.0 * h);
            let diff = (analytic[i] - fd).abs();
            if diff <= 1e-8 {
                continue;
            }
            let denom = analytic[i].abs().max(fd.abs()).max(1e-6);
            worst = worst.max(diff / denom);
        }
        worst
    }

    #[test]
    fn coherence_grad_matches_finite_differences() {
        let cfg = tiny_config();
        let params = init_params(cfg, 13).unwrap();
        let triplets = tiny_triplets(cfg.input_dim);
        let views: Vec<&ContrastiveTriplet> = triplets.iter().collect();
        let tau = 0.1;
        let lambda = 0.5;
        let out = coherence_batch_grad(&params, &views, tau, lambda).unwrap();
        let worst = gradcheck(
            &out.grads.to_flat(),
            |p| coherence_batch_grad(p, &views, tau, lambda).unwrap().loss,
            &params,
        );
        assert!(worst < 1e-4, "worst rel err {worst}");
    }

    #[test]
    fn regression_grad_matches_finite_differences() {
        let cfg = tiny_config();
        let params = init_params(cfg, 13).unwrap();
        let donors = donor_pool(cfg.input_dim);
        let rated: Vec<RatedSequence> = [0.0, 0.4]
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                let v = gen_coherent_video(30 + i as u64, 4, cfg.input_dim, 0.1, 0.02).unwrap();
                crate::synthdata::gen_rated_sequence(&v, &donors, f, 70 + i as u64).unwrap()
            })
            .collect();
        let views: Vec<&RatedSequence> = rated.iter().collect();
        let (_, grads) = regression_batch_grad(&params, &views).unwrap();
        let worst = gradcheck(
            &grads.to_flat(),
            |p| regression_batch_grad(p, &views).unwrap().0,
            &params,
        );
        assert!(worst < 1e-4, "worst rel err {worst}");
    }

    #[test]
    fn regression_grad_zero_at_perfect_fit() {
        // bias-only head that already predicts the target: head-bias gradient
        // must vanish
        let cfg = tiny_config();
        let mut params = init_params(cfg, 13).unwrap();
        params.regression.weight.iter_mut().for_each(|w| *w = 0.0);
        params.regression.bias = 3.0;
        let v = gen_coherent_video(40, 4, cfg.input_dim, 0.1, 0.02).unwrap();
        let rated = RatedSequence::new(v, 3.0).unwrap();
        let (loss, grads) = regression_batch_grad(&params, &[&rated]).unwrap();
        assert!(loss.abs() < 1e-24);
        assert!(grads.regression.bias.abs() < 1e-12);
        assert!(grads.to_flat().iter().all(|g| g.abs() < 1e-9));
    }
}
