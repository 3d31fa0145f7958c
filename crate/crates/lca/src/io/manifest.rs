//! JSON manifests: candidate pools, contrastive triplets, and rated samples,
//! all referencing shots by id inside one embedding file.
//!
//! `embedding_file` paths are resolved relative to the manifest's directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembly::{CandidatePool, PoolPosition};
use crate::data::{ContrastiveTriplet, RatedSequence, Shot, ShotSequence};
use crate::error::{Error, Result};
use crate::io::embedding_file::load_embeddings;
use crate::metrics::GroundTruth;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolManifest {
    pub embedding_file: String,
    pub positions: Vec<ManifestPosition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestPosition {
    pub candidates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_similarity: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TripletManifest {
    pub embedding_file: String,
    pub triplets: Vec<ManifestTriplet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestTriplet {
    pub anchor: Vec<String>,
    pub positive: Vec<String>,
    pub negatives: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatedManifest {
    pub embedding_file: String,
    pub samples: Vec<ManifestRated>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRated {
    pub shots: Vec<String>,
    pub rating: f64,
}

/// Shots from one embedding file, indexed by id.
pub struct ShotIndex {
    shots: HashMap<String, Shot>,
}

impl ShotIndex {
    pub fn load(path: &Path) -> Result<Self> {
        let shots = load_embeddings(path)?;
        let mut map = HashMap::with_capacity(shots.len());
        for shot in shots {
            if map.insert(shot.id.clone(), shot).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate shot id in embedding file: {}",
                    path.display()
                )));
            }
        }
        Ok(Self { shots: map })
    }

    pub fn get(&self, id: &str) -> Result<&Shot> {
        self.shots
            .get(id)
            .ok_or_else(|| Error::Validation(format!("shot id {id:?} not in embedding file")))
    }

    pub fn sequence(&self, source_id: &str, ids: &[String]) -> Result<ShotSequence> {
        let shots = ids
            .iter()
            .map(|id| self.get(id).cloned())
            .collect::<Result<Vec<_>>>()?;
        ShotSequence::new(source_id, shots)
    }
}

fn resolve(manifest_path: &Path, embedding_file: &str) -> PathBuf {
    let p = Path::new(embedding_file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest_path.parent().unwrap_or_else(|| Path::new(".")).join(p)
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    crate::io::atomic_write(path, text.as_bytes())
}

/// A pool manifest resolved against its embedding file.
pub struct LoadedPool {
    pub pool: CandidatePool,
    pub ground_truth: Option<GroundTruth>,
    pub manifest: PoolManifest,
}

pub fn load_pool(manifest_path: &Path) -> Result<LoadedPool> {
    let manifest: PoolManifest = read_json(manifest_path)?;
    let index = ShotIndex::load(&resolve(manifest_path, &manifest.embedding_file))?;
    let positions = manifest
        .positions
        .iter()
        .map(|p| -> Result<PoolPosition> {
            let candidates = p
                .candidates
                .iter()
                .map(|id| index.get(id).cloned())
                .collect::<Result<Vec<_>>>()?;
            Ok(PoolPosition {
                candidates,
                text_similarity: p.text_similarity.clone(),
                caption_embeddings: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pool = CandidatePool::new(positions)?;
    let ground_truth = manifest
        .ground_truth
        .as_ref()
        .map(|ids| GroundTruth::new(ids.clone()))
        .transpose()?;
    Ok(LoadedPool { pool, ground_truth, manifest })
}

pub fn load_triplets(manifest_path: &Path) -> Result<Vec<ContrastiveTriplet>> {
    let manifest: TripletManifest = read_json(manifest_path)?;
    let index = ShotIndex::load(&resolve(manifest_path, &manifest.embedding_file))?;
    manifest
        .triplets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let anchor = index.sequence(&format!("anchor{i}"), &t.anchor)?;
            let positive = index.sequence(&format!("positive{i}"), &t.positive)?;
            let negatives = t
                .negatives
                .iter()
                .enumerate()
                .map(|(j, ids)| index.sequence(&format!("negative{i}_{j}"), ids))
                .collect::<Result<Vec<_>>>()?;
            ContrastiveTriplet::new(anchor, positive, negatives)
        })
        .collect()
}

pub fn load_rated(manifest_path: &Path) -> Result<Vec<RatedSequence>> {
    let manifest: RatedManifest = read_json(manifest_path)?;
    let index = ShotIndex::load(&resolve(manifest_path, &manifest.embedding_file))?;
    manifest
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let seq = index.sequence(&format!("rated{i}"), &s.shots)?;
            RatedSequence::new(seq, s.rating)
        })
        .collect()
}
