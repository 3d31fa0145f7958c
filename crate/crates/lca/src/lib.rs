//! Learned Clip Assembly: a sequence-coherence score over ordered sets of
//! shot embeddings, trained in two stages (contrastive coherence learning,
//! then score regression), driving a beam-search assembler that picks the
//! most coherent multi-shot sequence from per-position candidate pools —
//! optionally blended with per-candidate text similarity.
//!
//! - [`synthdata`]: synthetic coherent videos, contrastive triplets, rated
//!   samples, and candidate pools with known ground truth.
//! - [`encoder`]: the transformer encoder, its parameters, and the scalar
//!   score head.
//! - [`training`]: losses (NCE, MSE, length decorrelation), exact
//!   reverse-mode gradients, AdamW, and the two-stage / end-to-end loops.
//! - [`assembly`]: beam search with deterministic tie-breaking, exhaustive /
//!   greedy / random baselines, and scorer-call accounting.
//! - [`metrics`]: IoU, SMS, Recall@K.
//! - [`io`] and [`cli`]: binary formats, JSON manifests, and the `lca`
//!   command-line surface.

pub mod assembly;
pub mod cli;
pub mod data;
pub mod encoder;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod synthdata;
pub mod training;

pub use data::{ContrastiveTriplet, FrameEmbedding, RatedSequence, Shot, ShotSequence};
pub use encoder::{EncoderConfig, LcaEncoderParams, SequenceEmbedding};
pub use error::{Error, Result};
