//! The coherence encoder: a pre-normalization transformer over shot-level
//! embeddings with a CLS token, learned positional embeddings, an MLP head
//! producing the sequence embedding, and an affine regression head producing
//! the scalar LCA score.
//!
//! Inference is generic over `f32`/`f64`; training (in [`crate::training`])
//! always runs in `f64`.

use num_traits::Float;

use crate::data::{Shot, ShotSequence};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Scalar type for encoder arithmetic.
pub trait Real:
    Float + num_traits::FromPrimitive + std::iter::Sum + std::fmt::Debug + Send + Sync + 'static
{
    fn from_f64_exact(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable")
    }
}
impl Real for f32 {}
impl Real for f64 {}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_ff: usize,
    pub d_out: usize,
    pub max_seq_len: usize,
    pub input_dim: usize,
}

impl EncoderConfig {
    /// Published full-scale sizes: 4 layers, 8 heads, hidden 512, FF 2048,
    /// 768-dimensional sequence embedding, up to 50 shots.
    pub fn full_scale(input_dim: usize) -> Self {
        Self {
            d_model: 512,
            num_layers: 4,
            num_heads: 8,
            d_ff: 2048,
            d_out: 768,
            max_seq_len: 50,
            input_dim,
        }
    }

    /// Desk-scale sizes used by the test suite and synthetic experiments.
    pub fn desk_scale(input_dim: usize) -> Self {
        Self {
            d_model: 64,
            num_layers: 2,
            num_heads: 4,
            d_ff: 128,
            d_out: 32,
            max_seq_len: 50,
            input_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0
            || self.num_layers == 0
            || self.num_heads == 0
            || self.d_ff == 0
            || self.d_out == 0
            || self.input_dim == 0
        {
            return Err(Error::Param("encoder dimensions must be positive".into()));
        }
        if !self.d_model.is_multiple_of(self.num_heads) {
            return Err(Error::Param(format!(
                "d_model {} not divisible by num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        if self.max_seq_len < 1 {
            return Err(Error::Param("max_seq_len must be at least 1".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.num_heads
    }

    /// Named tensors with shapes, in canonical (checkpoint) order.
    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        let d = self.d_model;
        let mut specs = vec![
            TensorSpec::new("input_projection", vec![d, self.input_dim]),
            TensorSpec::new("cls_token", vec![d]),
            TensorSpec::new("positional", vec![self.max_seq_len + 1, d]),
        ];
        for l in 0..self.num_layers {
            for (suffix, dims) in [
                ("ln1_gain", vec![d]),
                ("ln1_bias", vec![d]),
                ("wq", vec![d, d]),
                ("bq", vec![d]),
                ("wk", vec![d, d]),
                ("bk", vec![d]),
                ("wv", vec![d, d]),
                ("bv", vec![d]),
                ("wo", vec![d, d]),
                ("bo", vec![d]),
                ("ln2_gain", vec![d]),
                ("ln2_bias", vec![d]),
                ("ff_w1", vec![self.d_ff, d]),
                ("ff_b1", vec![self.d_ff]),
                ("ff_w2", vec![d, self.d_ff]),
                ("ff_b2", vec![d]),
            ] {
                specs.push(TensorSpec::new(format!("layer{l}.{suffix}"), dims));
            }
        }
        specs.push(TensorSpec::new("final_gain", vec![d]));
        specs.push(TensorSpec::new("final_bias", vec![d]));
        specs.push(TensorSpec::new("head.w1", vec![d, d]));
        specs.push(TensorSpec::new("head.b1", vec![d]));
        specs.push(TensorSpec::new("head.w2", vec![self.d_out, d]));
        specs.push(TensorSpec::new("head.b2", vec![self.d_out]));
        specs.push(TensorSpec::new("regression.weight", vec![self.d_out]));
        specs.push(TensorSpec::new("regression.bias", vec![1]));
        specs
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub dims: Vec<usize>,
}

impl TensorSpec {
    fn new(name: impl Into<String>, dims: Vec<usize>) -> Self {
        Self { name: name.into(), dims }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One transformer layer's parameters. Weight matrices are row-major
/// `[out, in]`; projections compute `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub ln1_gain: Vec<T>,
    pub ln1_bias: Vec<T>,
    pub wq: Vec<T>,
    pub bq: Vec<T>,
    pub wk: Vec<T>,
    pub bk: Vec<T>,
    pub wv: Vec<T>,
    pub bv: Vec<T>,
    pub wo: Vec<T>,
    pub bo: Vec<T>,
    pub ln2_gain: Vec<T>,
    pub ln2_bias: Vec<T>,
    pub ff_w1: Vec<T>,
    pub ff_b1: Vec<T>,
    pub ff_w2: Vec<T>,
    pub ff_b2: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpHeadParams<T> {
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionParams<T> {
    pub weight: Vec<T>,
    pub bias: T,
}

/// All learnable tensors of the encoder plus heads.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T> {
    pub config: EncoderConfig,
    pub input_projection: Vec<T>,
    pub cls_token: Vec<T>,
    pub positional: Vec<T>,
    pub layers: Vec<LayerParams<T>>,
    pub final_gain: Vec<T>,
    pub final_bias: Vec<T>,
    pub head: MlpHeadParams<T>,
    pub regression: RegressionParams<T>,
}

/// The f64 parameter set used everywhere outside the optional f32 fast path.
pub type LcaEncoderParams = EncoderParams<f64>;

impl<T: Real> EncoderParams<T> {
    pub fn zeros(config: EncoderConfig) -> Self {
        let z = |n: usize| vec![T::zero(); n];
        let d = config.d_model;
        let layers = (0..config.num_layers)
            .map(|_| LayerParams {
                ln1_gain: z(d),
                ln1_bias: z(d),
                wq: z(d * d),
                bq: z(d),
                wk: z(d * d),
                bk: z(d),
                wv: z(d * d),
                bv: z(d),
                wo: z(d * d),
                bo: z(d),
                ln2_gain: z(d),
                ln2_bias: z(d),
                ff_w1: z(config.d_ff * d),
                ff_b1: z(config.d_ff),
                ff_w2: z(d * config.d_ff),
                ff_b2: z(d),
            })
            .collect();
        Self {
            input_projection: z(d * config.input_dim),
            cls_token: z(d),
            positional: z((config.max_seq_len + 1) * d),
            layers,
            final_gain: z(d),
            final_bias: z(d),
            head: MlpHeadParams {
                w1: z(d * d),
                b1: z(d),
                w2: z(config.d_out * d),
                b2: z(config.d_out),
            },
            regression: RegressionParams { weight: z(config.d_out), bias: T::zero() },
            config,
        }
    }

    /// Tensor slices in the same order as [`EncoderConfig::tensor_specs`].
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = vec![&self.input_projection, &self.cls_token, &self.positional];
        for layer in &self.layers {
            out.push(&layer.ln1_gain);
            out.push(&layer.ln1_bias);
            out.push(&layer.wq);
            out.push(&layer.bq);
            out.push(&layer.wk);
            out.push(&layer.bk);
            out.push(&layer.wv);
            out.push(&layer.bv);
            out.push(&layer.wo);
            out.push(&layer.bo);
            out.push(&layer.ln2_gain);
            out.push(&layer.ln2_bias);
            out.push(&layer.ff_w1);
            out.push(&layer.ff_b1);
            out.push(&layer.ff_w2);
            out.push(&layer.ff_b2);
        }
        out.push(&self.final_gain);
        out.push(&self.final_bias);
        out.push(&self.head.w1);
        out.push(&self.head.b1);
        out.push(&self.head.w2);
        out.push(&self.head.b2);
        out.push(&self.regression.weight);
        out.push(std::slice::from_ref(&self.regression.bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = vec![
            &mut self.input_projection,
            &mut self.cls_token,
            &mut self.positional,
        ];
        for layer in &mut self.layers {
            out.push(&mut layer.ln1_gain);
            out.push(&mut layer.ln1_bias);
            out.push(&mut layer.wq);
            out.push(&mut layer.bq);
            out.push(&mut layer.wk);
            out.push(&mut layer.bk);
            out.push(&mut layer.wv);
            out.push(&mut layer.bv);
            out.push(&mut layer.wo);
            out.push(&mut layer.bo);
            out.push(&mut layer.ln2_gain);
            out.push(&mut layer.ln2_bias);
            out.push(&mut layer.ff_w1);
            out.push(&mut layer.ff_b1);
            out.push(&mut layer.ff_w2);
            out.push(&mut layer.ff_b2);
        }
        out.push(&mut self.final_gain);
        out.push(&mut self.final_bias);
        out.push(&mut self.head.w1);
        out.push(&mut self.head.b1);
        out.push(&mut self.head.w2);
        out.push(&mut self.head.b2);
        out.push(&mut self.regression.weight);
        out.push(std::slice::from_mut(&mut self.regression.bias));
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut flat = Vec::with_capacity(self.num_scalars());
        for t in self.tensors() {
            flat.extend_from_slice(t);
        }
        flat
    }

    pub fn set_flat(&mut self, flat: &[T]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

impl LcaEncoderParams {
    pub fn to_f32(&self) -> EncoderParams<f32> {
        let mut out = EncoderParams::<f32>::zeros(self.config);
        for (dst, src) in out.tensors_mut().into_iter().zip(self.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = *s as f32;
            }
        }
        out
    }
}

/// Gaussian init: weight matrices scale 1/sqrt(fan_in); CLS, positional and
/// bias-like tensors are small (sigma 0.02); norm gains sit around 1.
pub fn init_params(config: EncoderConfig, rng_seed: u64) -> Result<LcaEncoderParams> {
    config.validate()?;
    let mut params = LcaEncoderParams::zeros(config);
    let specs = config.tensor_specs();
    let mut rng = Rng::new(rng_seed);
    for (spec, tensor) in specs.iter().zip(params.tensors_mut()) {
        let leaf = spec.name.rsplit('.').next().unwrap_or(&spec.name);
        let (mean, sigma) = match leaf {
            "input_projection" | "wq" | "wk" | "wv" | "wo" | "ff_w1" | "ff_w2" | "w1" | "w2"
            | "weight" => {
                let fan_in = *spec.dims.last().unwrap() as f64;
                (0.0, 1.0 / fan_in.sqrt())
            }
            "ln1_gain" | "ln2_gain" | "final_gain" => (1.0, 0.02),
            _ => (0.0, 0.02), // cls, positional, biases
        };
        for v in tensor.iter_mut() {
            *v = mean + rng.gaussian() * sigma;
        }
    }
    Ok(params)
}

/// Sequence-level embedding produced by the encoder's MLP head.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEmbedding {
    values: Vec<f64>,
}

impl SequenceEmbedding {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Frame-to-shot aggregation: mean of the frame embeddings, unit-normalized.
pub fn shot_pool(shot: &Shot) -> Result<Vec<f64>> {
    shot.mean_embedding()
}

/// Validate a sequence against the encoder config and pool its shots.
pub(crate) fn pooled_inputs(config: &EncoderConfig, v: &ShotSequence) -> Result<Vec<Vec<f64>>> {
    if v.len() > config.max_seq_len {
        return Err(Error::Capacity(format!(
            "sequence length {} exceeds max_seq_len {}",
            v.len(),
            config.max_seq_len
        )));
    }
    if v.dim() != config.input_dim {
        return Err(Error::Shape(format!(
            "sequence dimension {} does not match encoder input_dim {}",
            v.dim(),
            config.input_dim
        )));
    }
    v.shots().iter().map(shot_pool).collect()
}

// ---------------------------------------------------------------------------
// generic math kernels
// ---------------------------------------------------------------------------

pub(crate) fn matvec<T: Real>(w: &[T], rows: usize, cols: usize, x: &[T], bias: Option<&[T]>, out: &mut [T]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = T::zero();
        for (a, b) in row.iter().zip(x) {
            acc = acc + *a * *b;
        }
        if let Some(b) = bias {
            acc = acc + b[r];
        }
        out[r] = acc;
    }
}

pub(crate) fn layer_norm<T: Real>(x: &[T], gain: &[T], bias: &[T], out: &mut [T]) -> (T, T) {
    let d = T::from_f64_exact(x.len() as f64);
    let mean = x.iter().copied().sum::<T>() / d;
    let var = x
        .iter()
        .map(|v| (*v - mean) * (*v - mean))
        .sum::<T>()
        / d;
    let inv_std = (var + T::from_f64_exact(LAYER_NORM_EPS)).sqrt().recip();
    for i in 0..x.len() {
        let hat = (x[i] - mean) * inv_std;
        out[i] = gain[i] * hat + bias[i];
    }
    (mean, inv_std)
}

pub(crate) fn softmax_in_place<T: Real>(x: &mut [T]) {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in x.iter_mut() {
        *v = *v / sum;
    }
}

/// Smooth GELU (tanh form).
pub(crate) fn gelu<T: Real>(x: T) -> T {
    let half = T::from_f64_exact(0.5);
    let c = T::from_f64_exact(0.797_884_560_802_865_4); // sqrt(2/pi)
    let a = T::from_f64_exact(0.044_715);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

pub(crate) fn gelu_prime(x: f64) -> f64 {
    let c = 0.797_884_560_802_865_4;
    let a = 0.044_715;
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * a * x * x)
}

// ---------------------------------------------------------------------------
// forward pass
// ---------------------------------------------------------------------------

/// Run the encoder on pre-pooled shot embeddings. `pooled` is one unit-norm
/// vector of `input_dim` per shot.
pub fn forward_pooled<T: Real>(params: &EncoderParams<T>, pooled: &[Vec<f64>]) -> Vec<T> {
    let cfg = &params.config;
    let d = cfg.d_model;
    let n = pooled.len();
    let tokens = n + 1;

    // token 0 is CLS; shots follow in order, each with its positional row
    let mut x = vec![T::zero(); tokens * d];
    for (xi, (c, pos)) in x.iter_mut().zip(params.cls_token.iter().zip(&params.positional)) {
        *xi = *c + *pos;
    }
    let mut projected = vec![T::zero(); d];
    for (s, shot) in pooled.iter().enumerate() {
        let input: Vec<T> = shot.iter().map(|v| T::from_f64_exact(*v)).collect();
        matvec(&params.input_projection, d, cfg.input_dim, &input, None, &mut projected);
        let row = &mut x[(s + 1) * d..(s + 2) * d];
        let pos = &params.positional[(s + 1) * d..(s + 2) * d];
        for i in 0..d {
            row[i] = projected[i] + pos[i];
        }
    }

    let heads = cfg.num_heads;
    let hd = cfg.head_dim();
    let scale = T::from_f64_exact(1.0 / (hd as f64).sqrt());

    let mut xn = vec![T::zero(); tokens * d];
    let mut q = vec![T::zero(); tokens * d];
    let mut k = vec![T::zero(); tokens * d];
    let mut v = vec![T::zero(); tokens * d];
    let mut attn_concat = vec![T::zero(); tokens * d];
    let mut proj = vec![T::zero(); d];
    let mut h1 = vec![T::zero(); cfg.d_ff];
    let mut ff = vec![T::zero(); d];

    for layer in &params.layers {
        // attention sublayer (pre-norm)
        for t in 0..tokens {
            layer_norm(
                &x[t * d..(t + 1) * d],
                &layer.ln1_gain,
                &layer.ln1_bias,
                &mut xn[t * d..(t + 1) * d],
            );
        }
        for t in 0..tokens {
            let row = &xn[t * d..(t + 1) * d];
            matvec(&layer.wq, d, d, row, Some(&layer.bq), &mut q[t * d..(t + 1) * d]);
            matvec(&layer.wk, d, d, row, Some(&layer.bk), &mut k[t * d..(t + 1) * d]);
            matvec(&layer.wv, d, d, row, Some(&layer.bv), &mut v[t * d..(t + 1) * d]);
        }
        for h in 0..heads {
            let off = h * hd;
            for t in 0..tokens {
                let qt = &q[t * d + off..t * d + off + hd];
                let mut weights = vec![T::zero(); tokens];
                for (u, w) in weights.iter_mut().enumerate() {
                    let ku = &k[u * d + off..u * d + off + hd];
                    let mut acc = T::zero();
                    for i in 0..hd {
                        acc = acc + qt[i] * ku[i];
                    }
                    *w = acc * scale;
                }
                softmax_in_place(&mut weights);
                let out = &mut attn_concat[t * d + off..t * d + off + hd];
                for i in 0..hd {
                    let mut acc = T::zero();
                    for (u, w) in weights.iter().enumerate() {
                        acc = acc + *w * v[u * d + off + i];
                    }
                    out[i] = acc;
                }
            }
        }
        for t in 0..tokens {
            matvec(
                &layer.wo,
                d,
                d,
                &attn_concat[t * d..(t + 1) * d],
                Some(&layer.bo),
                &mut proj,
            );
            for i in 0..d {
                x[t * d + i] = x[t * d + i] + proj[i];
            }
        }

        // feed-forward sublayer (pre-norm)
        for t in 0..tokens {
            layer_norm(
                &x[t * d..(t + 1) * d],
                &layer.ln2_gain,
                &layer.ln2_bias,
                &mut xn[t * d..(t + 1) * d],
            );
            matvec(&layer.ff_w1, cfg.d_ff, d, &xn[t * d..(t + 1) * d], Some(&layer.ff_b1), &mut h1);
            for h in h1.iter_mut() {
                *h = gelu(*h);
            }
            matvec(&layer.ff_w2, d, cfg.d_ff, &h1, Some(&layer.ff_b2), &mut ff);
            for i in 0..d {
                x[t * d + i] = x[t * d + i] + ff[i];
            }
        }
    }

    // final pre-norm-stack normalization, then the MLP head on CLS
    let mut cls = vec![T::zero(); d];
    layer_norm(&x[0..d], &params.final_gain, &params.final_bias, &mut cls);
    let mut hidden = vec![T::zero(); d];
    matvec(&params.head.w1, d, d, &cls, Some(&params.head.b1), &mut hidden);
    for h in hidden.iter_mut() {
        *h = gelu(*h);
    }
    let mut out = vec![T::zero(); cfg.d_out];
    matvec(&params.head.w2, cfg.d_out, d, &hidden, Some(&params.head.b2), &mut out);
    out
}

/// Encode a sequence into its fixed-size embedding.
pub fn forward(params: &LcaEncoderParams, v: &ShotSequence) -> Result<SequenceEmbedding> {
    let pooled = pooled_inputs(&params.config, v)?;
    Ok(SequenceEmbedding::new(forward_pooled(params, &pooled)))
}

/// Scalar coherence score: affine regression head over [`forward`].
pub fn lca_score(params: &LcaEncoderParams, v: &ShotSequence) -> Result<f64> {
    let embedding = forward(params, v)?;
    Ok(score_embedding(params, embedding.values()))
}

pub fn score_embedding(params: &LcaEncoderParams, embedding: &[f64]) -> f64 {
    crate::linalg::dot(&params.regression.weight, embedding) + params.regression.bias
}

/// f32 fast path used by the CLI's `--f32` flag: same architecture, 32-bit
/// arithmetic, score widened back to f64 at the boundary.
pub fn lca_score_f32(params: &EncoderParams<f32>, v: &ShotSequence) -> Result<f64> {
    let pooled = pooled_inputs(&params.config, v)?;
    let embedding = forward_pooled(params, &pooled);
    let score: f32 = embedding
        .iter()
        .zip(&params.regression.weight)
        .map(|(e, w)| e * w)
        .sum::<f32>()
        + params.regression.bias;
    Ok(score as f64)
}

/// Encode a sequence assembled from borrowed shots (the beam-search hot path
/// scores partial sequences without materializing a `ShotSequence`).
pub fn forward_shots<T: Real>(params: &EncoderParams<T>, shots: &[&Shot]) -> Result<Vec<T>> {
    if shots.is_empty() {
        return Err(Error::Shape("cannot encode an empty sequence".into()));
    }
    if shots.len() > params.config.max_seq_len {
        return Err(Error::Capacity(format!(
            "sequence length {} exceeds max_seq_len {}",
            shots.len(),
            params.config.max_seq_len
        )));
    }
    let pooled: Vec<Vec<f64>> = shots
        .iter()
        .map(|s| {
            if s.dim() != params.config.input_dim {
                return Err(Error::Shape(format!(
                    "shot dimension {} does not match encoder input_dim {}",
                    s.dim(),
                    params.config.input_dim
                )));
            }
            shot_pool(s)
        })
        .collect::<Result<_>>()?;
    Ok(forward_pooled(params, &pooled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FrameEmbedding;
    use crate::linalg;
    use crate::synthdata::gen_coherent_video;

    fn tiny_config() -> EncoderConfig {
        EncoderConfig {
            d_model: 16,
            num_layers: 2,
            num_heads: 2,
            d_ff: 24,
            d_out: 8,
            max_seq_len: 10,
            input_dim: 12,
        }
    }

    #[test]
    fn config_validation() {
        assert!(EncoderConfig::full_scale(512).validate().is_ok());
        let mut bad = tiny_config();
        bad.num_heads = 3; // 16 % 3 != 0
        assert!(bad.validate().is_err());
    }

    #[test]
    fn tensor_specs_match_tensors() {
        let cfg = tiny_config();
        let params = init_params(cfg, 1).unwrap();
        let specs = cfg.tensor_specs();
        let tensors = params.tensors();
        assert_eq!(specs.len(), tensors.len());
        for (spec, tensor) in specs.iter().zip(&tensors) {
            assert_eq!(spec.len(), tensor.len(), "{}", spec.name);
        }
    }

    #[test]
    fn init_deterministic_and_nondegenerate() {
        let cfg = tiny_config();
        let a = init_params(cfg, 9).unwrap();
        let b = init_params(cfg, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.all_finite());
        for (spec, tensor) in cfg.tensor_specs().iter().zip(a.tensors()) {
            if tensor.len() < 2 {
                continue;
            }
            let mean = tensor.iter().sum::<f64>() / tensor.len() as f64;
            let var =
                tensor.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / tensor.len() as f64;
            assert!(var > 0.0, "tensor {} has zero variance", spec.name);
        }
    }

    #[test]
    fn forward_shape_and_finiteness() {
        let cfg = EncoderConfig::full_scale(64);
        let params = init_params(cfg, 3).unwrap();
        let v = gen_coherent_video(7, 4, 64, 0.1, 0.02).unwrap();
        let e = forward(&params, &v).unwrap();
        assert_eq!(e.dim(), 768);
        assert!(e.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn forward_all_legal_lengths() {
        let cfg = tiny_config();
        let params = init_params(cfg, 3).unwrap();
        for n in 1..=cfg.max_seq_len {
            let v = gen_coherent_video(n as u64, n, cfg.input_dim, 0.1, 0.02).unwrap();
            let e = forward(&params, &v).unwrap();
            assert_eq!(e.dim(), cfg.d_out);
        }
    }

    #[test]
    fn forward_rejects_overlong_and_mismatched() {
        let cfg = tiny_config();
        let params = init_params(cfg, 3).unwrap();
        let long = gen_coherent_video(1, cfg.max_seq_len + 1, cfg.input_dim, 0.1, 0.02).unwrap();
        assert!(matches!(forward(&params, &long), Err(Error::Capacity(_))));
        let wrong_dim = gen_coherent_video(1, 3, cfg.input_dim + 2, 0.1, 0.02).unwrap();
        assert!(matches!(forward(&params, &wrong_dim), Err(Error::Shape(_))));
    }

    #[test]
    fn shot_pool_identities() {
        let u = vec![0.6, 0.8];
        let frames = vec![
            FrameEmbedding::new(u.clone()).unwrap(),
            FrameEmbedding::new(u.clone()).unwrap(),
        ];
        let shot = Shot::new("s", frames).unwrap();
        let pooled = shot_pool(&shot).unwrap();
        assert!((pooled[0] - 0.6).abs() < 1e-12 && (pooled[1] - 0.8).abs() < 1e-12);

        // permutation invariance of the mean
        let e1 = FrameEmbedding::new(vec![1.0, 0.0]).unwrap();
        let e2 = FrameEmbedding::new(vec![0.0, 1.0]).unwrap();
        let a = Shot::new("a", vec![e1.clone(), e2.clone()]).unwrap();
        let b = Shot::new("b", vec![e2, e1]).unwrap();
        assert_eq!(shot_pool(&a).unwrap(), shot_pool(&b).unwrap());
    }

    fn permuted(v: &ShotSequence, perm: &[usize]) -> ShotSequence {
        let shots: Vec<Shot> = perm.iter().map(|&i| v.shots()[i].clone()).collect();
        ShotSequence::new(v.source_id.clone(), shots).unwrap()
    }

    #[test]
    fn cls_permutation_invariance_without_positions() {
        let cfg = tiny_config();
        let mut params = init_params(cfg, 5).unwrap();
        params.positional.iter_mut().for_each(|p| *p = 0.0);
        let v = gen_coherent_video(2, 6, cfg.input_dim, 0.1, 0.02).unwrap();
        let base = forward(&params, &v).unwrap();
        let swapped = permuted(&v, &[5, 3, 1, 4, 0, 2]);
        let other = forward(&params, &swapped).unwrap();
        let drift = base
            .values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(drift < 1e-5, "drift {drift}");
    }

    #[test]
    fn positional_embeddings_break_permutation_invariance() {
        let cfg = tiny_config();
        let params = init_params(cfg, 5).unwrap();
        let v = gen_coherent_video(2, 6, cfg.input_dim, 0.1, 0.02).unwrap();
        let base = forward(&params, &v).unwrap();
        let reversed = permuted(&v, &[5, 4, 3, 2, 1, 0]);
        let other = forward(&params, &reversed).unwrap();
        let diff = base
            .values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(diff > 1e-3, "diff {diff}");
    }

    #[test]
    fn score_is_affine_in_embedding() {
        let cfg = tiny_config();
        let mut params = init_params(cfg, 8).unwrap();
        let v = gen_coherent_video(4, 4, cfg.input_dim, 0.1, 0.02).unwrap();
        let e = forward(&params, &v).unwrap();
        let expected = linalg::dot(&params.regression.weight, e.values()) + params.regression.bias;
        assert_eq!(lca_score(&params, &v).unwrap(), expected);

        // zero weights -> constant head
        params.regression.weight.iter_mut().for_each(|w| *w = 0.0);
        params.regression.bias = 0.25;
        assert_eq!(lca_score(&params, &v).unwrap(), 0.25);
        let other = gen_coherent_video(5, 7, cfg.input_dim, 0.1, 0.02).unwrap();
        assert_eq!(lca_score(&params, &other).unwrap(), 0.25);
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = tiny_config();
        let params = init_params(cfg, 8).unwrap();
        let v = gen_coherent_video(4, 5, cfg.input_dim, 0.1, 0.02).unwrap();
        let a = forward(&params, &v).unwrap();
        let b = forward(&params, &v).unwrap();
        assert_eq!(a, b);
        assert_eq!(lca_score(&params, &v).unwrap(), lca_score(&params, &v).unwrap());
    }

    #[test]
    fn f32_path_tracks_f64() {
        let cfg = tiny_config();
        let params = init_params(cfg, 8).unwrap();
        let params32 = params.to_f32();
        let v = gen_coherent_video(4, 5, cfg.input_dim, 0.1, 0.02).unwrap();
        let s64 = lca_score(&params, &v).unwrap();
        let s32 = lca_score_f32(&params32, &v).unwrap();
        assert!((s64 - s32).abs() < 1e-3, "f64 {s64} vs f32 {s32}");
    }

    #[test]
    fn flat_round_trip() {
        let cfg = tiny_config();
        let params = init_params(cfg, 8).unwrap();
        let flat = params.to_flat();
        let mut other = LcaEncoderParams::zeros(cfg);
        other.set_flat(&flat);
        assert_eq!(params, other);
    }
}
