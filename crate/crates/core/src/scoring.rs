//! Cosine scoring of trial pairs.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::acoustic::{Embedding, EmbeddingStore};
use crate::group::GroupKey;
use crate::trials::{Label, TrialFile, UttKey};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScoringError {
    #[error("embedding dimensions differ ({0} vs {1})")]
    DimMismatch(usize, usize),
    #[error("zero-norm embedding")]
    ZeroVector,
    #[error("zero-norm embedding for {0}")]
    ZeroVectorFor(UttKey),
    #[error("no embedding for {0}")]
    MissingEmbedding(UttKey),
}

/// `a·b / (|a| |b|)`, clamped to [-1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, ScoringError> {
    if a.len() != b.len() {
        return Err(ScoringError::DimMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(ScoringError::ZeroVector);
    }
    Ok((dot / (libm::sqrt(na) * libm::sqrt(nb))).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub pair_id: u64,
    pub label: Label,
    pub similarity: f64,
    /// Group of the enrollment speaker.
    pub group: GroupKey,
    pub epoch: Option<u32>,
}

/// Where a score file came from. Free-form identifiers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScoreProvenance {
    pub train_split_id: String,
    pub trial_file_id: String,
    pub embedding_source: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreFile {
    pub records: Vec<ScoreRecord>,
    pub provenance: ScoreProvenance,
}

impl ScoreFile {
    pub fn new(records: Vec<ScoreRecord>) -> Self {
        ScoreFile {
            records,
            provenance: ScoreProvenance::default(),
        }
    }

    /// Returns a copy with every record tagged with `epoch`.
    pub fn with_epoch(mut self, epoch: u32) -> Self {
        for r in &mut self.records {
            r.epoch = Some(epoch);
        }
        self
    }
}

fn lookup<'a>(store: &'a EmbeddingStore, key: &UttKey) -> Result<&'a Embedding, ScoringError> {
    store
        .get(key)
        .ok_or_else(|| ScoringError::MissingEmbedding(key.clone()))
}

/// One record per pair, in trial-file order.
pub fn score_trials(
    trials: &TrialFile,
    store: &EmbeddingStore,
    provenance: ScoreProvenance,
) -> Result<ScoreFile, ScoringError> {
    let records = trials
        .pairs
        .iter()
        .map(|pair| {
            let a = lookup(store, &pair.enroll)?;
            let b = lookup(store, &pair.probe)?;
            let similarity = cosine(a.as_slice(), b.as_slice()).map_err(|e| match e {
                ScoringError::ZeroVector => {
                    let zero = if a.as_slice().iter().all(|&v| v == 0.0) {
                        &pair.enroll
                    } else {
                        &pair.probe
                    };
                    ScoringError::ZeroVectorFor(zero.clone())
                }
                other => other,
            })?;
            Ok(ScoreRecord {
                pair_id: pair.pair_id,
                label: pair.label,
                similarity,
                group: pair.current_group.clone(),
                epoch: None,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScoreFile {
        records,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustic::EmbeddingSource;
    use crate::manifest::fixtures::index_with_counts;
    use crate::splits::{select_test_roster, SplitConfig};
    use crate::trials::{gen_trials, TestMode, TrialConfig};
    use alloc::vec;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        assert_abs_diff_eq!(
            cosine(&[3.0, 4.0], &[3.0, 4.0]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), -1.0);
        assert_eq!(
            cosine(&[0.0, 0.0], &[1.0, 0.0]),
            Err(ScoringError::ZeroVector)
        );
        assert_eq!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(ScoringError::DimMismatch(1, 2))
        );
    }

    fn fixture() -> (TrialFile, EmbeddingStore) {
        let idx = index_with_counts("english", [3; 4], 4);
        let mut cfg = SplitConfig::new(1);
        cfg.test_users_per_group = 3;
        let roster = select_test_roster(&idx, &cfg, 0).unwrap();
        let trials = gen_trials(&roster, &idx, TestMode::Random, &TrialConfig::new(1)).unwrap();
        let mut store = EmbeddingStore::new();
        for (i, r) in idx.records().enumerate() {
            for (j, u) in r.utterances.iter().enumerate() {
                let v = vec![1.0 + i as f64, (j as f64) * 0.1, 0.5];
                store
                    .insert(
                        UttKey::new(&r.speaker_id, &u.utterance_id),
                        Embedding::new(v, EmbeddingSource::External).unwrap(),
                    )
                    .unwrap();
            }
        }
        (trials, store)
    }

    #[test]
    fn score_preserves_order_labels_groups() {
        let (trials, store) = fixture();
        let scores = score_trials(&trials, &store, ScoreProvenance::default()).unwrap();
        assert_eq!(scores.records.len(), trials.pairs.len());
        for (r, p) in scores.records.iter().zip(&trials.pairs) {
            assert_eq!(r.pair_id, p.pair_id);
            assert_eq!(r.label, p.label);
            assert_eq!(r.group, p.current_group);
            assert!((-1.0..=1.0).contains(&r.similarity));
        }
    }

    #[test]
    fn missing_embedding_is_named() {
        let (trials, _) = fixture();
        let err =
            score_trials(&trials, &EmbeddingStore::new(), ScoreProvenance::default()).unwrap_err();
        assert_eq!(
            err,
            ScoringError::MissingEmbedding(trials.pairs[0].enroll.clone())
        );
    }

    #[test]
    fn identical_embeddings_score_one() {
        let (mut trials, mut store) = fixture();
        trials.pairs.truncate(1);
        let p = trials.pairs[0].clone();
        let mut fresh = EmbeddingStore::new();
        let v = store.get(&p.enroll).unwrap().clone();
        fresh.insert(p.enroll.clone(), v.clone()).unwrap();
        fresh.insert(p.probe.clone(), v).unwrap();
        store = fresh;
        let s = score_trials(&trials, &store, ScoreProvenance::default()).unwrap();
        assert_abs_diff_eq!(s.records[0].similarity, 1.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn symmetric_and_scale_invariant(
            a in prop::collection::vec(-10.0f64..10.0, 3),
            b in prop::collection::vec(-10.0f64..10.0, 3),
            alpha in 0.01f64..100.0,
        ) {
            prop_assume!(a.iter().any(|v| v.abs() > 1e-3) && b.iter().any(|v| v.abs() > 1e-3));
            let ab = cosine(&a, &b).unwrap();
            prop_assert_eq!(ab, cosine(&b, &a).unwrap());
            let scaled: Vec<f64> = a.iter().map(|v| v * alpha).collect();
            prop_assert!((cosine(&scaled, &b).unwrap() - ab).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }
}
