//! Core domain types: frames, shots, sequences, and training samples.

use crate::error::{Error, Result};
use crate::linalg;

/// Unit-norm embedding of a single video frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEmbedding {
    values: Vec<f64>,
}

impl FrameEmbedding {
    /// Wrap an already-normalized vector; the norm must be 1 within 1e-6.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Shape("frame embedding must be non-empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("frame embedding contains non-finite values".into()));
        }
        let n = linalg::norm(&values);
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!(
                "frame embedding norm {n} is not unit within 1e-6"
            )));
        }
        Ok(Self { values })
    }

    /// Normalize an arbitrary non-zero vector into a frame embedding.
    pub fn from_unnormalized(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Shape("frame embedding must be non-empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("frame embedding contains non-finite values".into()));
        }
        let n = linalg::normalize(&mut values);
        if n <= 1e-12 {
            return Err(Error::Numerical("cannot normalize a zero frame embedding".into()));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// A continuous take, represented by F frame embeddings of equal dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Shot {
    pub id: String,
    frames: Vec<FrameEmbedding>,
}

impl Shot {
    pub fn new(id: impl Into<String>, frames: Vec<FrameEmbedding>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Shape("a shot needs at least one frame".into()));
        }
        let dim = frames[0].dim();
        if frames.iter().any(|f| f.dim() != dim) {
            return Err(Error::Shape("all frames in a shot must share a dimension".into()));
        }
        Ok(Self { id: id.into(), frames })
    }

    pub fn frames(&self) -> &[FrameEmbedding] {
        &self.frames
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn dim(&self) -> usize {
        self.frames[0].dim()
    }

    /// Mean of the frame embeddings, re-normalized to unit length.
    /// This is the shot-level representation fed to the encoder.
    pub fn mean_embedding(&self) -> Result<Vec<f64>> {
        let dim = self.dim();
        let mut mean = linalg::mean_rows(self.frames.iter().map(|f| f.as_slice()), dim);
        let n = linalg::normalize(&mut mean);
        if n <= 1e-12 {
            return Err(Error::Numerical(format!(
                "shot {} has a degenerate (zero-mean) embedding",
                self.id
            )));
        }
        Ok(mean)
    }
}

/// Ordered shots from one source video; the unit the coherence score rates.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotSequence {
    pub source_id: String,
    shots: Vec<Shot>,
}

impl ShotSequence {
    pub fn new(source_id: impl Into<String>, shots: Vec<Shot>) -> Result<Self> {
        if shots.is_empty() {
            return Err(Error::Shape("a shot sequence needs at least one shot".into()));
        }
        let dim = shots[0].dim();
        if shots.iter().any(|s| s.dim() != dim) {
            return Err(Error::Shape("all shots in a sequence must share a dimension".into()));
        }
        Ok(Self { source_id: source_id.into(), shots })
    }

    pub fn shots(&self) -> &[Shot] {
        &self.shots
    }

    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.shots[0].dim()
    }

    pub fn shot_ids(&self) -> Vec<String> {
        self.shots.iter().map(|s| s.id.clone()).collect()
    }

    /// Replace the shot at `index`, keeping everything else untouched.
    pub fn with_shot_replaced(&self, index: usize, shot: Shot) -> Result<Self> {
        if index >= self.shots.len() {
            return Err(Error::Param(format!(
                "replace index {index} out of range for length {}",
                self.shots.len()
            )));
        }
        if shot.dim() != self.dim() {
            return Err(Error::Shape("replacement shot dimension mismatch".into()));
        }
        let mut shots = self.shots.clone();
        shots[index] = shot;
        Ok(Self { source_id: self.source_id.clone(), shots })
    }
}

/// One contrastive training sample: anchor, a coherence-preserving positive,
/// and at least one coherence-breaking negative of the same length.
#[derive(Debug, Clone)]
pub struct ContrastiveTriplet {
    pub anchor: ShotSequence,
    pub positive: ShotSequence,
    pub negatives: Vec<ShotSequence>,
}

impl ContrastiveTriplet {
    pub fn new(
        anchor: ShotSequence,
        positive: ShotSequence,
        negatives: Vec<ShotSequence>,
    ) -> Result<Self> {
        if negatives.is_empty() {
            return Err(Error::Param("a triplet needs at least one negative".into()));
        }
        if positive.len() != anchor.len() {
            return Err(Error::Shape("positive length must match anchor length".into()));
        }
        if negatives.iter().any(|n| n.len() != anchor.len()) {
            return Err(Error::Shape("negative lengths must match anchor length".into()));
        }
        Ok(Self { anchor, positive, negatives })
    }
}

/// A sequence with a coherence rating on the 1..=5 scale.
#[derive(Debug, Clone)]
pub struct RatedSequence {
    pub sequence: ShotSequence,
    pub rating: f64,
}

impl RatedSequence {
    pub fn new(sequence: ShotSequence, rating: f64) -> Result<Self> {
        if !(1.0..=5.0).contains(&rating) {
            return Err(Error::Param(format!("rating {rating} outside [1, 5]")));
        }
        Ok(Self { sequence, rating })
    }
}
