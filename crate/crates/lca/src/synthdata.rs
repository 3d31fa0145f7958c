//! Synthetic dataset generation.
//!
//! Coherent "videos" are latent random walks on the embedding sphere: shots
//! from one walk stay similar to their neighbors, shots from different walks
//! are near-orthogonal. Positives jitter frames without touching structure;
//! negatives splice in low-similarity donor shots to break continuity; rated
//! sequences substitute a controlled fraction and attach the matching rating.

use crate::assembly::{CandidatePool, PoolPosition};
use crate::data::{ContrastiveTriplet, FrameEmbedding, RatedSequence, Shot, ShotSequence};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::Rng;

pub const DEFAULT_FRAMES_PER_SHOT: usize = 5;
pub const DEFAULT_STEP_SIGMA: f64 = 0.1;
pub const DEFAULT_FRAME_SIGMA: f64 = 0.02;
pub const DEFAULT_JITTER_SIGMA: f64 = 0.01;
pub const DEFAULT_REPLACE_FRAC: f64 = 0.4;
pub const DEFAULT_SIM_THRESHOLD: f64 = 0.2;

/// Generate a coherent video of `n` shots with embedding dimension `dim`.
///
/// The latent walk starts at a spherical Gaussian and drifts by
/// `step_sigma` per shot; each shot gets [`DEFAULT_FRAMES_PER_SHOT`] frames
/// perturbed by `frame_sigma` and normalized to the unit sphere.
pub fn gen_coherent_video(
    rng_seed: u64,
    n: usize,
    dim: usize,
    step_sigma: f64,
    frame_sigma: f64,
) -> Result<ShotSequence> {
    if n < 1 {
        return Err(Error::Param("a video needs at least one shot".into()));
    }
    if dim < 2 {
        return Err(Error::Param(format!("embedding dimension {dim} must be >= 2")));
    }
    if step_sigma <= 0.0 || frame_sigma <= 0.0 {
        return Err(Error::Param("step_sigma and frame_sigma must be positive".into()));
    }
    let mut rng = Rng::new(rng_seed);
    let mut latent = rng.gaussian_vec(dim, 1.0);
    let mut shots = Vec::with_capacity(n);
    for i in 0..n {
        let mut frames = Vec::with_capacity(DEFAULT_FRAMES_PER_SHOT);
        for _ in 0..DEFAULT_FRAMES_PER_SHOT {
            let mut frame = latent.clone();
            let noise = rng.gaussian_vec(dim, frame_sigma);
            linalg::axpy(&mut frame, 1.0, &noise);
            frames.push(FrameEmbedding::from_unnormalized(frame)?);
        }
        shots.push(Shot::new(format!("v{rng_seed}_s{i:03}"), frames)?);
        let step = rng.gaussian_vec(dim, step_sigma);
        linalg::axpy(&mut latent, 1.0, &step);
    }
    ShotSequence::new(format!("v{rng_seed}"), shots)
}

/// Coherence-preserving positive: every frame embedding is perturbed by
/// Gaussian noise of scale `jitter_sigma` and re-normalized. Shot order and
/// count are unchanged. `jitter_sigma == 0` returns the input verbatim.
pub fn make_positive(v: &ShotSequence, rng_seed: u64, jitter_sigma: f64) -> Result<ShotSequence> {
    if jitter_sigma < 0.0 {
        return Err(Error::Param("jitter_sigma must be non-negative".into()));
    }
    if jitter_sigma == 0.0 {
        return Ok(v.clone());
    }
    let mut rng = Rng::new(rng_seed);
    let dim = v.dim();
    let mut shots = Vec::with_capacity(v.len());
    for shot in v.shots() {
        let mut frames = Vec::with_capacity(shot.num_frames());
        for frame in shot.frames() {
            let mut values = frame.as_slice().to_vec();
            let noise = rng.gaussian_vec(dim, jitter_sigma);
            linalg::axpy(&mut values, 1.0, &noise);
            frames.push(FrameEmbedding::from_unnormalized(values)?);
        }
        shots.push(Shot::new(format!("{}+j{rng_seed}", shot.id), frames)?);
    }
    ShotSequence::new(format!("{}+pos{rng_seed}", v.source_id), shots)
}

/// Coherence-breaking negative: replaces `ceil(replace_frac * n)` uniformly
/// chosen positions with donor shots whose mean-embedding cosine against the
/// original shot is below `sim_threshold`.
pub fn make_negative(
    v: &ShotSequence,
    donors: &[Shot],
    replace_frac: f64,
    sim_threshold: f64,
    rng_seed: u64,
) -> Result<ShotSequence> {
    if !(replace_frac > 0.0 && replace_frac <= 1.0) {
        return Err(Error::Param(format!("replace_frac {replace_frac} outside (0, 1]")));
    }
    let count = (replace_frac * v.len() as f64).ceil() as usize;
    let mut rng = Rng::new(rng_seed);
    let (seq, _) = substitute_shots(v, donors, count, sim_threshold, &mut rng)?;
    ShotSequence::new(format!("{}+neg{rng_seed}", v.source_id), seq.shots().to_vec())
}

/// Substitution-rated sample: substitutes `substituted_frac` of the shots
/// (one of 0.0, 0.2, 0.4, 0.6, 0.8) and rates the result on the 5-point
/// ladder — 5 for untouched, one point lost per 20% substituted.
pub fn gen_rated_sequence(
    v: &ShotSequence,
    donors: &[Shot],
    substituted_frac: f64,
    rng_seed: u64,
) -> Result<RatedSequence> {
    let level = substitution_level(substituted_frac)?;
    let rating = 5.0 - level as f64;
    if level == 0 {
        return RatedSequence::new(v.clone(), rating);
    }
    let count = (substituted_frac * v.len() as f64).ceil() as usize;
    let mut rng = Rng::new(rng_seed);
    let (seq, _) = substitute_shots(v, donors, count, DEFAULT_SIM_THRESHOLD, &mut rng)?;
    let seq = ShotSequence::new(format!("{}+r{rng_seed}", v.source_id), seq.shots().to_vec())?;
    RatedSequence::new(seq, rating)
}

fn substitution_level(frac: f64) -> Result<usize> {
    for (level, supported) in [0.0, 0.2, 0.4, 0.6, 0.8].iter().enumerate() {
        if (frac - supported).abs() < 1e-9 {
            return Ok(level);
        }
    }
    Err(Error::Param(format!(
        "substituted_frac {frac} not one of 0.0, 0.2, 0.4, 0.6, 0.8"
    )))
}

/// Replace `count` uniformly chosen positions with qualifying donors.
/// Returns the new sequence and the replaced positions (ascending).
fn substitute_shots(
    v: &ShotSequence,
    donors: &[Shot],
    count: usize,
    sim_threshold: f64,
    rng: &mut Rng,
) -> Result<(ShotSequence, Vec<usize>)> {
    if count > v.len() {
        return Err(Error::Param(format!(
            "cannot replace {count} shots in a sequence of {}",
            v.len()
        )));
    }
    if donors.is_empty() {
        return Err(Error::Sampling("donor pool is empty".into()));
    }
    let donor_means: Vec<Vec<f64>> = donors
        .iter()
        .map(|d| d.mean_embedding())
        .collect::<Result<_>>()?;
    let mut positions = rng.sample_without_replacement(v.len(), count);
    let mut seq = v.clone();
    for &pos in &positions {
        let original_mean = v.shots()[pos].mean_embedding()?;
        let qualifying: Vec<usize> = donor_means
            .iter()
            .enumerate()
            .filter(|(_, m)| linalg::dot(&original_mean, m) < sim_threshold)
            .map(|(i, _)| i)
            .collect();
        if qualifying.is_empty() {
            return Err(Error::Sampling(format!(
                "no donor below similarity {sim_threshold} for position {pos}"
            )));
        }
        let pick = qualifying[rng.below(qualifying.len())];
        seq = seq.with_shot_replaced(pos, donors[pick].clone())?;
    }
    positions.sort_unstable();
    Ok((seq, positions))
}

/// Build one contrastive triplet from a coherent video and a donor pool.
pub fn make_triplet(
    v: &ShotSequence,
    donors: &[Shot],
    num_negatives: usize,
    jitter_sigma: f64,
    replace_frac: f64,
    sim_threshold: f64,
    rng_seed: u64,
) -> Result<ContrastiveTriplet> {
    let positive = make_positive(v, rng_seed.wrapping_add(1), jitter_sigma)?;
    let negatives = (0..num_negatives)
        .map(|i| {
            make_negative(
                v,
                donors,
                replace_frac,
                sim_threshold,
                rng_seed.wrapping_add(2 + i as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    ContrastiveTriplet::new(v.clone(), positive, negatives)
}

/// Knobs for candidate-pool generation.
#[derive(Debug, Clone)]
pub struct PoolGenConfig {
    pub positions: usize,
    pub candidates_per_position: usize,
    pub dim: usize,
    pub step_sigma: f64,
    pub frame_sigma: f64,
    /// Max blend weight of the ground-truth latent inside a distractor;
    /// distractors draw a blend uniformly in [0, blend_max].
    pub blend_max: f64,
    /// Attach per-candidate text similarities, maximal at the ground truth.
    pub with_text: bool,
}

impl Default for PoolGenConfig {
    fn default() -> Self {
        Self {
            positions: 8,
            candidates_per_position: 5,
            dim: 64,
            step_sigma: DEFAULT_STEP_SIGMA,
            frame_sigma: DEFAULT_FRAME_SIGMA,
            blend_max: 0.5,
            with_text: false,
        }
    }
}

/// A generated assembly problem with its hidden answer.
#[derive(Debug, Clone)]
pub struct GeneratedPool {
    pub pool: CandidatePool,
    /// Index of the ground-truth candidate at each position.
    pub gt_indices: Vec<usize>,
    /// Shot ids of the ground-truth sequence, in order.
    pub gt_ids: Vec<String>,
}

/// Build a test pool the way the evaluation sets are built: one ground-truth
/// coherent sequence plus `k - 1` distractors per position, where each
/// distractor blends an unrelated latent with the ground-truth latent by a
/// per-distractor random amount (so some distractors are near-misses and
/// some are clearly off-topic).
pub fn gen_candidate_pool(config: &PoolGenConfig, rng_seed: u64) -> Result<GeneratedPool> {
    if config.candidates_per_position < 1 {
        return Err(Error::Param("need at least one candidate per position".into()));
    }
    let gt = gen_coherent_video(
        rng_seed,
        config.positions,
        config.dim,
        config.step_sigma,
        config.frame_sigma,
    )?;
    let mut rng = Rng::derive(rng_seed, 0x706f_6f6c);
    let mut positions = Vec::with_capacity(config.positions);
    let mut gt_indices = Vec::with_capacity(config.positions);
    for (pos, gt_shot) in gt.shots().iter().enumerate() {
        let gt_mean = gt_shot.mean_embedding()?;
        let mut candidates = vec![gt_shot.clone()];
        for j in 1..config.candidates_per_position {
            let blend = rng.uniform() * config.blend_max;
            let mut latent = rng.gaussian_vec(config.dim, 1.0);
            let scale = linalg::norm(&gt_mean);
            // unrelated latent, pulled toward the ground truth by `blend`
            for (l, g) in latent.iter_mut().zip(&gt_mean) {
                *l = (1.0 - blend) * *l + blend * g * (config.dim as f64).sqrt() / scale.max(1e-12);
            }
            let mut frames = Vec::with_capacity(DEFAULT_FRAMES_PER_SHOT);
            for _ in 0..DEFAULT_FRAMES_PER_SHOT {
                let mut frame = latent.clone();
                let noise = rng.gaussian_vec(config.dim, config.frame_sigma);
                linalg::axpy(&mut frame, 1.0, &noise);
                frames.push(FrameEmbedding::from_unnormalized(frame)?);
            }
            candidates.push(Shot::new(format!("d{rng_seed}_p{pos:02}_c{j}"), frames)?);
        }
        // hide the ground truth at a random slot
        let gt_slot = rng.below(config.candidates_per_position);
        candidates.swap(0, gt_slot);
        gt_indices.push(gt_slot);

        let text_similarity = if config.with_text {
            Some(
                (0..config.candidates_per_position)
                    .map(|c| if c == gt_slot { 1.0 } else { rng.uniform() * 0.4 })
                    .collect(),
            )
        } else {
            None
        };
        positions.push(PoolPosition {
            candidates,
            text_similarity,
            caption_embeddings: None,
        });
    }
    let pool = CandidatePool::new(positions)?;
    Ok(GeneratedPool {
        pool,
        gt_indices,
        gt_ids: gt.shot_ids(),
    })
}

/// Mean cosine similarity between mean embeddings of adjacent shots.
pub fn mean_adjacent_similarity(v: &ShotSequence) -> Result<f64> {
    if v.len() < 2 {
        return Ok(1.0);
    }
    let means: Vec<Vec<f64>> = v
        .shots()
        .iter()
        .map(|s| s.mean_embedding())
        .collect::<Result<_>>()?;
    let total: f64 = means.windows(2).map(|w| linalg::dot(&w[0], &w[1])).sum();
    Ok(total / (v.len() - 1) as f64)
}
