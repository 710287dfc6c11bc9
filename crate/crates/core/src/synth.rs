//! Synthetic score files and embedding stores with known separability.
//!
//! With equal-variance Gaussian genuine and impostor scores whose means are
//! `Δμ` apart, the EER is `Φ(-Δμ / 2σ)`, which gives the metric engine an
//! analytic target.

use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal, StandardNormal};
use thiserror::Error;

use crate::acoustic::{Embedding, EmbeddingSource, EmbeddingStore};
use crate::group::GroupKey;
use crate::manifest::DatasetIndex;
use crate::rng::{self, tag};
use crate::scoring::{ScoreFile, ScoreProvenance, ScoreRecord};
use crate::splits::TestRoster;
use crate::trials::{Label, UttKey};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("group {group}: {what} must be positive and finite")]
    InvalidParam { group: GroupKey, what: &'static str },
    #[error("embedding dimension must be at least 2, got {0}")]
    DimTooSmall(usize),
    #[error("spread must be positive and finite, got {0}")]
    InvalidSpread(f64),
    #[error("roster speaker {0} is not in the dataset index")]
    UnknownSpeaker(alloc::string::String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupScoreParams {
    pub genuine_mean: f64,
    pub genuine_sd: f64,
    pub impostor_mean: f64,
    pub impostor_sd: f64,
    pub n_genuine: usize,
    pub n_impostor: usize,
}

/// Score distribution per group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupScoreSpec {
    groups: BTreeMap<GroupKey, GroupScoreParams>,
}

impl GroupScoreSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, group: GroupKey, p: GroupScoreParams) -> Result<(), SynthError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let checks = [
            (positive(p.genuine_sd), "genuine_sd"),
            (positive(p.impostor_sd), "impostor_sd"),
            (p.genuine_mean.is_finite(), "genuine_mean"),
            (p.impostor_mean.is_finite(), "impostor_mean"),
            (p.n_genuine > 0, "n_genuine"),
            (p.n_impostor > 0, "n_impostor"),
        ];
        if let Some((_, what)) = checks.iter().find(|(ok, _)| !ok) {
            return Err(SynthError::InvalidParam { group, what });
        }
        self.groups.insert(group, p);
        Ok(())
    }

    pub fn groups(&self) -> &BTreeMap<GroupKey, GroupScoreParams> {
        &self.groups
    }
}

fn stream(seed: u64, domain: u64, key: &str) -> rng::Rng {
    rng::rng_from(rng::derive(
        rng::derive(seed, domain),
        rng::fnv1a(key.as_bytes()),
    ))
}

/// Gaussian genuine/impostor similarities per group, clamped to [-1, 1].
/// Records are ordered by group, genuine before impostor.
pub fn synth_scores(spec: &GroupScoreSpec, seed: u64) -> ScoreFile {
    let mut records = Vec::new();
    for (group, p) in &spec.groups {
        let mut rng = stream(seed, tag::SYNTH_SCORES, &group.to_string());
        let classes = [
            (Label::Genuine, p.genuine_mean, p.genuine_sd, p.n_genuine),
            (
                Label::Impostor,
                p.impostor_mean,
                p.impostor_sd,
                p.n_impostor,
            ),
        ];
        for (label, mean, sd, n) in classes {
            let dist = Normal::new(mean, sd).expect("validated on insert");
            for _ in 0..n {
                records.push(ScoreRecord {
                    pair_id: records.len() as u64,
                    label,
                    similarity: dist.sample(&mut rng).clamp(-1.0, 1.0),
                    group: group.clone(),
                    epoch: None,
                });
            }
        }
    }
    ScoreFile {
        records,
        provenance: ScoreProvenance {
            train_split_id: "synthetic".into(),
            trial_file_id: "synthetic".into(),
            embedding_source: EmbeddingSource::Synthetic.as_str().into(),
        },
    }
}

/// Cluster spread per group; groups not listed use `default`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadSpec {
    pub default: f64,
    pub per_group: BTreeMap<GroupKey, f64>,
}

impl SpreadSpec {
    pub fn uniform(spread: f64) -> Self {
        SpreadSpec {
            default: spread,
            per_group: BTreeMap::new(),
        }
    }

    pub fn spread_for(&self, group: &GroupKey) -> f64 {
        self.per_group.get(group).copied().unwrap_or(self.default)
    }
}

/// Embeddings for every utterance of every roster speaker: a unit-norm
/// random centroid per speaker plus isotropic Gaussian noise whose expected
/// norm is the speaker's group spread (per-component sd = spread / √dim).
pub fn synth_embeddings(
    roster: &TestRoster,
    index: &DatasetIndex,
    dim: usize,
    spread: &SpreadSpec,
    seed: u64,
) -> Result<EmbeddingStore, SynthError> {
    if dim < 2 {
        return Err(SynthError::DimTooSmall(dim));
    }
    let spreads = core::iter::once(spread.default).chain(spread.per_group.values().copied());
    for s in spreads {
        if !(s > 0.0 && s.is_finite()) {
            return Err(SynthError::InvalidSpread(s));
        }
    }
    let mut store = EmbeddingStore::new();
    for (group, id) in roster.speakers() {
        let record = index
            .get(id)
            .ok_or_else(|| SynthError::UnknownSpeaker(id.to_string()))?;
        let mut rng = stream(seed, tag::SYNTH_EMBED, id);
        let centroid = loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect::<Vec<f64>>();
            }
        };
        let sd = spread.spread_for(group) / libm::sqrt(dim as f64);
        for utt in &record.utterances {
            let v = centroid
                .iter()
                .map(|c| {
                    c + sd
                        * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                })
                .collect();
            let emb = Embedding::new(v, EmbeddingSource::Synthetic)
                .expect("finite centroid plus finite noise");
            store
                .insert(UttKey::new(id, &utt.utterance_id), emb)
                .expect("roster speakers and utterance ids are unique");
        }
    }
    Ok(store)
}
