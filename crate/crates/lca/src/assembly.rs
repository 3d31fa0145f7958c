//! Beam-search assembly over per-position candidate pools, with exhaustive,
//! greedy, and random baselines, plus exact scorer-call accounting.
//!
//! The search scores partial sequences with the same scorer used for full
//! sequences (the length-decorrelation regularizer is what licenses that),
//! seeds the beam with an exhaustive scan of the first three positions, and
//! extends position by position keeping the top-m frontier. Ties break
//! deterministically: score descending, then candidate-index tuple ascending.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::data::{Shot, ShotSequence};
use crate::encoder::{forward_shots, EncoderParams, Real};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const DEFAULT_BEAM_WIDTH: usize = 20;
pub const DEFAULT_GAMMA: f64 = 0.5;
pub const DEFAULT_EXHAUSTIVE_CAP: u128 = 1_000_000;

/// Scoring interface over a (partial) sequence of borrowed shots.
/// Implementations must be pure: the same input scores identically for the
/// duration of one assembly run.
pub trait Scorer: Sync {
    fn score(&self, shots: &[&Shot]) -> Result<f64>;
}

/// The trained scorer: encoder forward plus regression head, generic over
/// the arithmetic width (f64 default, f32 behind the CLI flag).
pub struct LcaScorer<T: Real> {
    params: EncoderParams<T>,
}

impl<T: Real> LcaScorer<T> {
    pub fn new(params: EncoderParams<T>) -> Self {
        Self { params }
    }

    pub fn params(&self) -> &EncoderParams<T> {
        &self.params
    }
}

impl<T: Real> Scorer for LcaScorer<T> {
    fn score(&self, shots: &[&Shot]) -> Result<f64> {
        let embedding = forward_shots(&self.params, shots)?;
        let score = embedding
            .iter()
            .zip(&self.params.regression.weight)
            .map(|(e, w)| *e * *w)
            .sum::<T>()
            + self.params.regression.bias;
        Ok(score.to_f64().expect("score representable"))
    }
}

/// One slot of the pool: `k` candidate shots, optionally with precomputed
/// text similarities and/or caption embeddings.
#[derive(Debug, Clone)]
pub struct PoolPosition {
    pub candidates: Vec<Shot>,
    pub text_similarity: Option<Vec<f64>>,
    pub caption_embeddings: Option<Vec<Vec<f64>>>,
}

/// The n-positions-by-k-candidates assembly problem.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    positions: Vec<PoolPosition>,
}

impl CandidatePool {
    pub fn new(positions: Vec<PoolPosition>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Param("a pool needs at least one position".into()));
        }
        let dim = positions[0].candidates.first().map(|s| s.dim());
        let mut with_text = 0usize;
        for (i, p) in positions.iter().enumerate() {
            if p.candidates.is_empty() {
                return Err(Error::Param(format!("position {i} has no candidates")));
            }
            for shot in &p.candidates {
                if Some(shot.dim()) != dim {
                    return Err(Error::Shape(
                        "all candidate shots must share an embedding dimension".into(),
                    ));
                }
            }
            if let Some(sims) = &p.text_similarity {
                if sims.len() != p.candidates.len() {
                    return Err(Error::Shape(format!(
                        "position {i}: {} text similarities for {} candidates",
                        sims.len(),
                        p.candidates.len()
                    )));
                }
                if sims.iter().any(|s| !s.is_finite()) {
                    return Err(Error::Validation(format!(
                        "position {i}: non-finite text similarity"
                    )));
                }
            }
            if let Some(caps) = &p.caption_embeddings {
                if caps.len() != p.candidates.len() {
                    return Err(Error::Shape(format!(
                        "position {i}: {} caption embeddings for {} candidates",
                        caps.len(),
                        p.candidates.len()
                    )));
                }
            }
            if p.text_similarity.is_some() || p.caption_embeddings.is_some() {
                with_text += 1;
            }
        }
        if with_text != 0 && with_text != positions.len() {
            return Err(Error::Param(
                "text information must be present at all positions or none".into(),
            ));
        }
        Ok(Self { positions })
    }

    pub fn positions(&self) -> &[PoolPosition] {
        &self.positions
    }

    pub fn num_positions(&self) -> usize {
        self.positions.len()
    }

    pub fn num_candidates(&self, position: usize) -> usize {
        self.positions[position].candidates.len()
    }

    pub fn shot(&self, position: usize, candidate: usize) -> &Shot {
        &self.positions[position].candidates[candidate]
    }

    pub fn has_text(&self) -> bool {
        self.positions[0].text_similarity.is_some()
            || self.positions[0].caption_embeddings.is_some()
    }

    /// Text similarity of one candidate: the precomputed value if present,
    /// otherwise the cosine between its caption embedding and its pooled
    /// shot embedding.
    pub fn candidate_text_similarity(&self, position: usize, candidate: usize) -> Result<f64> {
        let p = &self.positions[position];
        if let Some(sims) = &p.text_similarity {
            return Ok(sims[candidate]);
        }
        if let Some(caps) = &p.caption_embeddings {
            let pooled = p.candidates[candidate].mean_embedding()?;
            return crate::training::cosine_sim(&caps[candidate], &pooled);
        }
        Err(Error::Param(format!(
            "position {position} has no text information"
        )))
    }

    /// Total number of full sequences, `prod k_i`.
    pub fn sequence_count(&self) -> u128 {
        self.positions
            .iter()
            .map(|p| p.candidates.len() as u128)
            .product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssemblyMode {
    VisualOnly,
    TextAugmented,
}

impl std::str::FromStr for AssemblyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "visual_only" | "visual-only" | "visual" => Ok(Self::VisualOnly),
            "text_augmented" | "text-augmented" | "text" => Ok(Self::TextAugmented),
            other => Err(Error::Param(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssemblyConfig {
    pub beam_width: usize,
    pub gamma: f64,
    pub mode: AssemblyMode,
    /// Record the kept frontier after every step.
    pub record_trace: bool,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        Self {
            beam_width: DEFAULT_BEAM_WIDTH,
            gamma: DEFAULT_GAMMA,
            mode: AssemblyMode::VisualOnly,
            record_trace: false,
        }
    }
}

impl AssemblyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width < 1 {
            return Err(Error::Param("beam width must be at least 1".into()));
        }
        if self.gamma < 0.0 || !self.gamma.is_finite() {
            return Err(Error::Param(format!("gamma {} must be finite and >= 0", self.gamma)));
        }
        Ok(())
    }
}

/// One retained partial sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontierEntry {
    /// Candidate index per filled position.
    pub indices: Vec<usize>,
    /// Ranking key: scorer output plus any accumulated text term.
    pub score: f64,
}

/// Frontier kept after filling `positions_filled` positions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeamStep {
    pub positions_filled: usize,
    pub kept: Vec<FrontierEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssemblyResult {
    /// Chosen candidate index per position.
    pub chosen: Vec<usize>,
    /// Final score of the chosen sequence; absent for the random baseline,
    /// which never invokes a scorer.
    pub score: Option<f64>,
    /// Exact number of scorer invocations performed.
    pub scorer_calls: u64,
    /// Final kept frontier, best first (top-m sequences).
    pub final_frontier: Vec<FrontierEntry>,
    /// Per-step frontiers, when tracing was requested.
    pub beam_trace: Option<Vec<BeamStep>>,
}

struct SearchState<'a> {
    pool: &'a CandidatePool,
    scorer: &'a dyn Scorer,
    gamma: f64,
    text: bool,
    calls: u64,
}

impl<'a> SearchState<'a> {
    fn score_prefix(&mut self, indices: &[usize], acc_sim: f64) -> Result<FrontierEntry> {
        let shots: Vec<&Shot> = indices
            .iter()
            .enumerate()
            .map(|(pos, &c)| self.pool.shot(pos, c))
            .collect();
        let lca = self.scorer.score(&shots)?;
        self.calls += 1;
        // gamma == 0 must reproduce the pure visual score exactly
        let score = if self.text && self.gamma != 0.0 {
            lca + self.gamma * acc_sim
        } else {
            lca
        };
        Ok(FrontierEntry { indices: indices.to_vec(), score })
    }

    fn sim(&self, position: usize, candidate: usize) -> Result<f64> {
        if self.text {
            self.pool.candidate_text_similarity(position, candidate)
        } else {
            Ok(0.0)
        }
    }
}

fn sort_frontier(entries: &mut [(FrontierEntry, f64)]) {
    entries.sort_by(|a, b| {
        b.0.score
            .total_cmp(&a.0.score)
            .then_with(|| a.0.indices.cmp(&b.0.indices))
    });
}

/// Beam search: exhaustive over the first `min(n, 3)` positions, then top-m
/// extension steps. Returns the best final sequence, the exact scorer-call
/// count, and (optionally) the per-step trace.
pub fn beam_search(
    pool: &CandidatePool,
    scorer: &dyn Scorer,
    config: &AssemblyConfig,
) -> Result<AssemblyResult> {
    config.validate()?;
    let text = match config.mode {
        AssemblyMode::VisualOnly => false,
        AssemblyMode::TextAugmented => {
            if !pool.has_text() {
                return Err(Error::Param(
                    "text_augmented mode needs text similarities or caption embeddings".into(),
                ));
            }
            true
        }
    };

    let n = pool.num_positions();
    let seed_len = n.min(3);
    let mut state = SearchState { pool, scorer, gamma: config.gamma, text, calls: 0 };
    let mut trace: Option<Vec<BeamStep>> = config.record_trace.then(Vec::new);

    // exhaustive seed over the first positions, lexicographic order
    let mut frontier: Vec<(FrontierEntry, f64)> = Vec::new();
    let mut counter = vec![0usize; seed_len];
    loop {
        let mut acc_sim = 0.0;
        for (pos, &c) in counter.iter().enumerate() {
            acc_sim += state.sim(pos, c)?;
        }
        let entry = state.score_prefix(&counter, acc_sim)?;
        frontier.push((entry, acc_sim));
        // increment mixed-radix counter
        let mut pos = seed_len;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            counter[pos] += 1;
            if counter[pos] < pool.num_candidates(pos) {
                break;
            }
            counter[pos] = 0;
            if pos == 0 {
                pos = usize::MAX;
                break;
            }
        }
        if pos == usize::MAX {
            break;
        }
    }
    sort_frontier(&mut frontier);
    frontier.truncate(config.beam_width);
    if let Some(t) = trace.as_mut() {
        t.push(BeamStep {
            positions_filled: seed_len,
            kept: frontier.iter().map(|(e, _)| e.clone()).collect(),
        });
    }

    // extension steps
    for t_pos in seed_len..n {
        let mut extensions: Vec<(FrontierEntry, f64)> =
            Vec::with_capacity(frontier.len() * pool.num_candidates(t_pos));
        for (entry, acc_sim) in &frontier {
            for c in 0..pool.num_candidates(t_pos) {
                let mut indices = entry.indices.clone();
                indices.push(c);
                let acc = acc_sim + state.sim(t_pos, c)?;
                let scored = state.score_prefix(&indices, acc)?;
                extensions.push((scored, acc));
            }
        }
        sort_frontier(&mut extensions);
        extensions.truncate(config.beam_width);
        frontier = extensions;
        if let Some(t) = trace.as_mut() {
            t.push(BeamStep {
                positions_filled: t_pos + 1,
                kept: frontier.iter().map(|(e, _)| e.clone()).collect(),
            });
        }
    }

    let best = &frontier[0].0;
    Ok(AssemblyResult {
        chosen: best.indices.clone(),
        score: Some(best.score),
        scorer_calls: state.calls,
        final_frontier: frontier.iter().map(|(e, _)| e.clone()).collect(),
        beam_trace: trace,
    })
}

/// Score one extension step: the scorer on `partial + candidate` plus the
/// gamma-weighted text similarity of the appended candidate.
pub fn combined_score(
    scorer: &dyn Scorer,
    partial: &ShotSequence,
    candidate: &Shot,
    text_similarity: f64,
    gamma: f64,
) -> Result<f64> {
    if !text_similarity.is_finite() {
        return Err(Error::Param("text similarity must be finite".into()));
    }
    let mut shots: Vec<&Shot> = partial.shots().iter().collect();
    shots.push(candidate);
    Ok(scorer.score(&shots)? + gamma * text_similarity)
}

/// Global argmax over every full sequence; the oracle the beam is tested
/// against. Refuses pools above `cap` sequences.
pub fn exhaustive_search_with_cap(
    pool: &CandidatePool,
    scorer: &dyn Scorer,
    cap: u128,
) -> Result<AssemblyResult> {
    let total = pool.sequence_count();
    if total > cap {
        return Err(Error::Capacity(format!(
            "exhaustive search over {total} sequences exceeds the cap of {cap}"
        )));
    }
    let n = pool.num_positions();
    let mut counter = vec![0usize; n];
    let mut calls = 0u64;
    let mut best: Option<FrontierEntry> = None;
    loop {
        let shots: Vec<&Shot> = counter
            .iter()
            .enumerate()
            .map(|(pos, &c)| pool.shot(pos, c))
            .collect();
        let score = scorer.score(&shots)?;
        calls += 1;
        let better = match &best {
            None => true,
            // strict improvement only: lexicographic order of enumeration
            // makes the first maximum the tie-break winner
            Some(b) => score.total_cmp(&b.score) == std::cmp::Ordering::Greater,
        };
        if better {
            best = Some(FrontierEntry { indices: counter.clone(), score });
        }
        let mut pos = n;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            counter[pos] += 1;
            if counter[pos] < pool.num_candidates(pos) {
                break;
            }
            counter[pos] = 0;
            if pos == 0 {
                pos = usize::MAX;
                break;
            }
        }
        if pos == usize::MAX {
            break;
        }
    }
    let best = best.expect("pool is non-empty");
    Ok(AssemblyResult {
        chosen: best.indices.clone(),
        score: Some(best.score),
        scorer_calls: calls,
        final_frontier: vec![best],
        beam_trace: None,
    })
}

pub fn exhaustive_search(pool: &CandidatePool, scorer: &dyn Scorer) -> Result<AssemblyResult> {
    exhaustive_search_with_cap(pool, scorer, DEFAULT_EXHAUSTIVE_CAP)
}

/// Greedy baseline: beam search with a width-1 frontier.
pub fn greedy_search(pool: &CandidatePool, scorer: &dyn Scorer) -> Result<AssemblyResult> {
    beam_search(
        pool,
        scorer,
        &AssemblyConfig { beam_width: 1, ..AssemblyConfig::default() },
    )
}

/// Random baseline: uniform independent choice per position, no scoring.
pub fn random_assembly(pool: &CandidatePool, rng_seed: u64) -> AssemblyResult {
    let mut rng = Rng::new(rng_seed);
    let chosen: Vec<usize> = (0..pool.num_positions())
        .map(|p| rng.below(pool.num_candidates(p)))
        .collect();
    AssemblyResult {
        chosen,
        score: None,
        scorer_calls: 0,
        final_frontier: Vec::new(),
        beam_trace: None,
    }
}

/// Expected call count for uniform-k pools when `m <= k^3`:
/// `k^3 + (n - 3) * m * k` (with the full `k^n` for `n <= 3`).
pub fn expected_scorer_calls(n: usize, k: usize, m: usize) -> u64 {
    if n <= 3 {
        (k as u64).pow(n as u32)
    } else {
        (k as u64).pow(3) + (n as u64 - 3) * (m as u64) * (k as u64)
    }
}

// ---------------------------------------------------------------------------
// stub scorers (benchmarks and tests)
// ---------------------------------------------------------------------------

/// Additive stub scorer: each (position, candidate) pair owns a fixed value
/// and a prefix scores the sum of its entries. Mirrors the length-comparable
/// structure the decorrelated trained scorer is meant to have, and makes the
/// exhaustive optimum provably reachable by the beam.
pub struct TableScorer {
    tables: Vec<HashMap<String, f64>>,
}

impl TableScorer {
    /// Values drawn uniformly from [0, 1).
    pub fn random(pool: &CandidatePool, rng_seed: u64) -> Self {
        let mut rng = Rng::new(rng_seed);
        Self::build(pool, |_, _| rng.uniform())
    }

    /// Values quantized to `levels` distinct levels; adversarially tie-heavy.
    pub fn quantized(pool: &CandidatePool, rng_seed: u64, levels: usize) -> Self {
        let mut rng = Rng::new(rng_seed);
        Self::build(pool, |_, _| (rng.below(levels.max(1))) as f64)
    }

    /// The same constant everywhere: every sequence ties.
    pub fn constant(pool: &CandidatePool, value: f64) -> Self {
        Self::build(pool, |_, _| value)
    }

    fn build(pool: &CandidatePool, mut value: impl FnMut(usize, usize) -> f64) -> Self {
        let tables = pool
            .positions()
            .iter()
            .enumerate()
            .map(|(pos, p)| {
                p.candidates
                    .iter()
                    .enumerate()
                    .map(|(c, shot)| (shot.id.clone(), value(pos, c)))
                    .collect()
            })
            .collect();
        Self { tables }
    }
}

impl Scorer for TableScorer {
    fn score(&self, shots: &[&Shot]) -> Result<f64> {
        let mut total = 0.0;
        for (pos, shot) in shots.iter().enumerate() {
            total += self.tables[pos].get(&shot.id).ok_or_else(|| {
                Error::Param(format!("shot {} unknown at position {pos}", shot.id))
            })?;
        }
        Ok(total)
    }
}

/// Wrapper that counts invocations of an inner scorer.
pub struct CountingScorer<'a> {
    inner: &'a dyn Scorer,
    calls: AtomicU64,
}

impl<'a> CountingScorer<'a> {
    pub fn new(inner: &'a dyn Scorer) -> Self {
        Self { inner, calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl Scorer for CountingScorer<'_> {
    fn score(&self, shots: &[&Shot]) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.score(shots)
    }
}

/// Build a minimal pool for stub-scored benchmarks: `n` positions, `k`
/// candidates each, one 2-dimensional frame per shot.
pub fn stub_pool(n: usize, k: usize) -> Result<CandidatePool> {
    let positions = (0..n)
        .map(|pos| {
            let candidates = (0..k)
                .map(|c| {
                    let angle = (pos * k + c) as f64;
                    let frame =
                        crate::data::FrameEmbedding::new(vec![angle.cos(), angle.sin()])?;
                    Shot::new(format!("p{pos}_c{c}"), vec![frame])
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PoolPosition { candidates, text_similarity: None, caption_embeddings: None })
        })
        .collect::<Result<Vec<_>>>()?;
    CandidatePool::new(positions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_validation() {
        assert!(matches!(CandidatePool::new(vec![]), Err(Error::Param(_))));

        let mut positions = stub_pool(3, 2).unwrap().positions.clone();
        positions[1].candidates.clear();
        assert!(matches!(CandidatePool::new(positions), Err(Error::Param(_))));

        // text info on some positions but not all is rejected
        let mut positions = stub_pool(3, 2).unwrap().positions.clone();
        positions[0].text_similarity = Some(vec![0.5, 0.5]);
        assert!(matches!(CandidatePool::new(positions), Err(Error::Param(_))));

        // similarity arity must match the candidate count
        let mut positions = stub_pool(2, 2).unwrap().positions.clone();
        for p in &mut positions {
            p.text_similarity = Some(vec![0.5]);
        }
        assert!(matches!(CandidatePool::new(positions), Err(Error::Shape(_))));
    }

    #[test]
    fn exhaustive_call_count_is_k_to_the_n() {
        let pool = stub_pool(4, 3).unwrap();
        let table = TableScorer::random(&pool, 2);
        let counting = CountingScorer::new(&table);
        let result = exhaustive_search(&pool, &counting).unwrap();
        assert_eq!(result.scorer_calls, 81);
        assert_eq!(counting.calls(), 81);
    }

    #[test]
    fn combined_score_rejects_non_finite_similarity() {
        let pool = stub_pool(2, 2).unwrap();
        let table = TableScorer::random(&pool, 8);
        let partial = ShotSequence::new("p", vec![pool.shot(0, 0).clone()]).unwrap();
        let err = combined_score(&table, &partial, pool.shot(1, 1), f64::NAN, 0.5).unwrap_err();
        assert!(matches!(err, Error::Param(_)));
    }

    #[test]
    fn counting_matches_closed_form() {
        let pool = stub_pool(5, 3).unwrap();
        let table = TableScorer::random(&pool, 1);
        let counting = CountingScorer::new(&table);
        let result = beam_search(
            &pool,
            &counting,
            &AssemblyConfig { beam_width: 2, ..AssemblyConfig::default() },
        )
        .unwrap();
        assert_eq!(result.scorer_calls, 39); // 27 + 2 * (2 * 3)
        assert_eq!(counting.calls(), 39);
        assert_eq!(expected_scorer_calls(5, 3, 2), 39);
    }

    #[test]
    fn greedy_call_count_and_equivalence() {
        let pool = stub_pool(5, 3).unwrap();
        let table = TableScorer::random(&pool, 7);
        let greedy = greedy_search(&pool, &table).unwrap();
        assert_eq!(greedy.scorer_calls, 33); // 27 + 2 * 3
        let beam1 = beam_search(
            &pool,
            &table,
            &AssemblyConfig { beam_width: 1, ..AssemblyConfig::default() },
        )
        .unwrap();
        assert_eq!(greedy.chosen, beam1.chosen);
        assert_eq!(greedy.score, beam1.score);
        assert_eq!(greedy.scorer_calls, beam1.scorer_calls);
    }

    #[test]
    fn short_pool_is_exhaustive() {
        let pool = stub_pool(3, 2).unwrap();
        let table = TableScorer::random(&pool, 3);
        let beam = beam_search(&pool, &table, &AssemblyConfig::default()).unwrap();
        let oracle = exhaustive_search(&pool, &table).unwrap();
        assert_eq!(beam.scorer_calls, 8);
        assert_eq!(oracle.scorer_calls, 8);
        assert_eq!(beam.chosen, oracle.chosen);
        assert_eq!(beam.score, oracle.score);
    }

    #[test]
    fn single_position_pool() {
        let pool = stub_pool(1, 4).unwrap();
        let table = TableScorer::random(&pool, 9);
        let beam = beam_search(&pool, &table, &AssemblyConfig::default()).unwrap();
        let oracle = exhaustive_search(&pool, &table).unwrap();
        assert_eq!(beam.chosen, oracle.chosen);
        assert_eq!(beam.scorer_calls, 4);
        assert_eq!(oracle.scorer_calls, 4);
    }

    #[test]
    fn beam_equals_oracle_for_additive_scorers() {
        for seed in 0..20 {
            let n = 4 + (seed as usize % 4);
            let k = 2 + (seed as usize % 3);
            let pool = stub_pool(n, k).unwrap();
            let table = TableScorer::random(&pool, 100 + seed);
            for m in [1usize, 2, k * k * k] {
                let beam = beam_search(
                    &pool,
                    &table,
                    &AssemblyConfig { beam_width: m, ..AssemblyConfig::default() },
                )
                .unwrap();
                let oracle = exhaustive_search(&pool, &table).unwrap();
                assert_eq!(beam.chosen, oracle.chosen, "n {n} k {k} m {m} seed {seed}");
                assert_eq!(beam.score, oracle.score);
            }
        }
    }

    #[test]
    fn tie_handling_matches_oracle() {
        // constant scorer: everything ties; both must pick all-zeros
        let pool = stub_pool(5, 3).unwrap();
        let constant = TableScorer::constant(&pool, 0.25);
        let beam = beam_search(
            &pool,
            &constant,
            &AssemblyConfig { beam_width: 4, ..AssemblyConfig::default() },
        )
        .unwrap();
        let oracle = exhaustive_search(&pool, &constant).unwrap();
        assert_eq!(beam.chosen, vec![0; 5]);
        assert_eq!(oracle.chosen, vec![0; 5]);

        // quantized additive scorer: heavy ties, still exact
        for seed in 0..10 {
            let quant = TableScorer::quantized(&pool, seed, 2);
            let beam = beam_search(
                &pool,
                &quant,
                &AssemblyConfig { beam_width: 27, ..AssemblyConfig::default() },
            )
            .unwrap();
            let oracle = exhaustive_search(&pool, &quant).unwrap();
            assert_eq!(beam.chosen, oracle.chosen, "seed {seed}");
            assert_eq!(beam.score, oracle.score);
        }
    }

    #[test]
    fn frontier_shrinks_when_beam_exceeds_candidates() {
        let pool = stub_pool(5, 2).unwrap();
        let table = TableScorer::random(&pool, 5);
        let result = beam_search(
            &pool,
            &table,
            &AssemblyConfig { beam_width: 100, record_trace: true, ..AssemblyConfig::default() },
        )
        .unwrap();
        let trace = result.beam_trace.unwrap();
        assert_eq!(trace[0].kept.len(), 8); // k^3 = 8 < 100
        // extension of 8 by k=2 gives 16 candidates, still < 100
        assert_eq!(trace[1].kept.len(), 16);
        // accounting uses actual frontier sizes: 8 + 8*2 + 16*2 = 48
        assert_eq!(result.scorer_calls, 8 + 16 + 32);
    }

    #[test]
    fn beam_subset_monotonicity_via_traces() {
        for seed in 0..10 {
            let pool = stub_pool(6, 3).unwrap();
            let table = TableScorer::random(&pool, 400 + seed);
            let trace_for = |m: usize| {
                beam_search(
                    &pool,
                    &table,
                    &AssemblyConfig { beam_width: m, record_trace: true, ..AssemblyConfig::default() },
                )
                .unwrap()
                .beam_trace
                .unwrap()
            };
            let small = trace_for(2);
            let large = trace_for(5);
            for (s_step, l_step) in small.iter().zip(&large) {
                for kept in &s_step.kept {
                    assert!(
                        l_step.kept.iter().any(|e| e.indices == kept.indices),
                        "prefix {:?} kept at m=2 but dropped at m=5",
                        kept.indices
                    );
                }
            }
        }
    }

    #[test]
    fn random_assembly_contract() {
        let pool = stub_pool(4, 5).unwrap();
        let a = random_assembly(&pool, 11);
        let b = random_assembly(&pool, 11);
        assert_eq!(a.chosen, b.chosen);
        assert_eq!(a.scorer_calls, 0);
        assert!(a.score.is_none());
        assert!(a.chosen.iter().all(|&c| c < 5));

        // k = 1 everywhere: the unique sequence
        let single = stub_pool(3, 1).unwrap();
        assert_eq!(random_assembly(&single, 3).chosen, vec![0; 3]);
    }

    #[test]
    fn random_assembly_is_uniform() {
        let pool = stub_pool(1, 5).unwrap();
        let mut counts = [0usize; 5];
        let draws = 10_000;
        for seed in 0..draws {
            counts[random_assembly(&pool, seed as u64).chosen[0]] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.2).abs() < 0.02, "freq {freq}");
        }
    }

    #[test]
    fn combined_score_behaviour() {
        let pool = stub_pool(4, 2).unwrap();
        let table = TableScorer::random(&pool, 8);
        let partial = ShotSequence::new(
            "partial",
            vec![pool.shot(0, 0).clone(), pool.shot(1, 1).clone(), pool.shot(2, 0).clone()],
        )
        .unwrap();
        let candidate = pool.shot(3, 1);
        let base = combined_score(&table, &partial, candidate, 0.6, 0.0).unwrap();
        let full: Vec<&Shot> = partial.shots().iter().chain(std::iter::once(candidate)).collect();
        assert_eq!(base, table.score(&full).unwrap());
        let with_text = combined_score(&table, &partial, candidate, 0.6, 0.5).unwrap();
        assert!((with_text - (base + 0.3)).abs() < 1e-12);
        // higher similarity wins at equal visual score for any gamma > 0
        let lower = combined_score(&table, &partial, candidate, 0.2, 0.5).unwrap();
        assert!(with_text > lower);
    }

    #[test]
    fn text_mode_gamma_zero_is_bit_identical_to_visual() {
        let mut pool = stub_pool(5, 3).unwrap();
        // attach arbitrary text similarities
        let mut rng = Rng::new(2);
        for p in &mut pool.positions {
            p.text_similarity = Some((0..p.candidates.len()).map(|_| rng.uniform()).collect());
        }
        let table = TableScorer::random(&pool, 77);
        let visual = beam_search(
            &pool,
            &table,
            &AssemblyConfig { beam_width: 3, ..AssemblyConfig::default() },
        )
        .unwrap();
        let text_zero = beam_search(
            &pool,
            &table,
            &AssemblyConfig {
                beam_width: 3,
                gamma: 0.0,
                mode: AssemblyMode::TextAugmented,
                record_trace: false,
            },
        )
        .unwrap();
        assert_eq!(visual.chosen, text_zero.chosen);
        assert_eq!(visual.score, text_zero.score);
    }

    #[test]
    fn text_mode_requires_text() {
        let pool = stub_pool(4, 2).unwrap();
        let table = TableScorer::random(&pool, 1);
        let err = beam_search(
            &pool,
            &table,
            &AssemblyConfig { mode: AssemblyMode::TextAugmented, ..AssemblyConfig::default() },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Param(_)));
    }

    #[test]
    fn exhaustive_cap_refusal_names_count() {
        let pool = stub_pool(10, 4).unwrap(); // 4^10 > 10^6
        let table = TableScorer::random(&pool, 1);
        let err = exhaustive_search(&pool, &table).unwrap_err();
        match err {
            Error::Capacity(msg) => assert!(msg.contains("1048576"), "{msg}"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn exhaustive_never_below_beam() {
        // holds for any scorer, structured or not: hash-like scorer here
        struct HashScorer;
        impl Scorer for HashScorer {
            fn score(&self, shots: &[&Shot]) -> Result<f64> {
                use std::collections::hash_map::DefaultHasher;
                use std::hash::{Hash, Hasher};
                let mut h = DefaultHasher::new();
                for s in shots {
                    s.id.hash(&mut h);
                }
                Ok((h.finish() % 10_000) as f64 / 10_000.0)
            }
        }
        for seed in 0..10u64 {
            let n = 4 + (seed as usize % 3);
            let k = 2 + (seed as usize % 2);
            let pool = stub_pool(n, k).unwrap();
            let oracle = exhaustive_search(&pool, &HashScorer).unwrap();
            for m in [1usize, 2, 5] {
                let beam = beam_search(
                    &pool,
                    &HashScorer,
                    &AssemblyConfig { beam_width: m, ..AssemblyConfig::default() },
                )
                .unwrap();
                assert!(oracle.score.unwrap() >= beam.score.unwrap());
            }
        }
    }
}
