//! Test rosters and training-set recipes.
//!
//! All samplers draw uniformly without replacement from streams derived
//! from `(seed, fold, group)`, so each fold and each group is reproducible
//! on its own.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::seq::index;
use thiserror::Error;

use crate::group::{GroupKey, Language, DEFAULT_SPLIT_AGE};
use crate::manifest::DatasetIndex;
use crate::rng::{self, tag};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SplitError {
    #[error("group {group} has {size} speakers, fewer than the {required} test users required")]
    UndersizedGroup {
        group: GroupKey,
        size: usize,
        required: usize,
    },
    #[error("group {0} has no speakers left after excluding the test roster")]
    EmptyGroup(GroupKey),
    #[error("group {0} has no utterances left after excluding the test roster")]
    NoUtterances(GroupKey),
    #[error("roster speaker {0} is not in the dataset index")]
    UnknownRosterSpeaker(String),
    #[error("cannot merge splits built with different recipes ({0} and {1})")]
    MixedRecipes(TrainRecipe, TrainRecipe),
    #[error("language {0} appears in more than one split")]
    OverlappingLanguages(Language),
    #[error("no splits to merge")]
    NoSplits,
    #[error("test_users_per_group must be positive")]
    ZeroTestUsers,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitConfig {
    pub seed: u64,
    pub test_users_per_group: usize,
    pub n_folds: u32,
    pub split_age: u32,
}

impl SplitConfig {
    pub fn new(seed: u64) -> Self {
        SplitConfig {
            seed,
            test_users_per_group: 25,
            n_folds: 3,
            split_age: DEFAULT_SPLIT_AGE,
        }
    }

    pub fn fold_seed(&self, fold: u32) -> u64 {
        rng::fold_seed(self.seed, fold)
    }
}

/// Test speakers of one fold, per group. Member lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestRoster {
    pub fold_id: u32,
    pub members: BTreeMap<GroupKey, Vec<String>>,
}

impl TestRoster {
    pub fn empty(fold_id: u32) -> Self {
        TestRoster {
            fold_id,
            members: BTreeMap::new(),
        }
    }

    /// `(group, speaker)` in roster order: group key order, then speaker id.
    pub fn speakers(&self) -> impl Iterator<Item = (&GroupKey, &str)> {
        self.members
            .iter()
            .flat_map(|(k, ids)| ids.iter().map(move |id| (k, id.as_str())))
    }

    pub fn len(&self) -> usize {
        self.members.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, speaker_id: &str) -> bool {
        self.members
            .values()
            .any(|ids| ids.iter().any(|id| id == speaker_id))
    }

    pub fn group_of(&self, speaker_id: &str) -> Option<&GroupKey> {
        self.speakers()
            .find(|(_, id)| *id == speaker_id)
            .map(|(k, _)| k)
    }

    pub fn languages(&self) -> BTreeSet<Language> {
        self.members.keys().map(|k| k.language.clone()).collect()
    }

    pub fn restrict_to(&self, language: &Language) -> Self {
        TestRoster {
            fold_id: self.fold_id,
            members: self
                .members
                .iter()
                .filter(|(k, _)| &k.language == language)
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrainRecipe {
    /// Same number of speakers per group.
    UserBalanced,
    /// Every non-test utterance.
    Unbalanced,
    /// Same number of utterances per group.
    UtteranceBalanced,
}

impl TrainRecipe {
    pub const ALL: [TrainRecipe; 3] = [
        TrainRecipe::UserBalanced,
        TrainRecipe::Unbalanced,
        TrainRecipe::UtteranceBalanced,
    ];

    /// Recipe number as used in file names (`train1`..`train3`).
    pub fn number(self) -> u8 {
        match self {
            TrainRecipe::UserBalanced => 1,
            TrainRecipe::Unbalanced => 2,
            TrainRecipe::UtteranceBalanced => 3,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        TrainRecipe::ALL.into_iter().find(|r| r.number() == n)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrainRecipe::UserBalanced => "user_balanced",
            TrainRecipe::Unbalanced => "unbalanced",
            TrainRecipe::UtteranceBalanced => "utterance_balanced",
        }
    }
}

impl fmt::Display for TrainRecipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SplitItem {
    pub speaker_id: String,
    pub utterance_id: String,
    pub group: GroupKey,
}

/// A training file. Items are kept sorted by (speaker_id, utterance_id).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainSplit {
    pub recipe: TrainRecipe,
    pub languages: BTreeSet<Language>,
    pub items: Vec<SplitItem>,
}

impl TrainSplit {
    fn new(recipe: TrainRecipe, languages: BTreeSet<Language>, mut items: Vec<SplitItem>) -> Self {
        items.sort();
        TrainSplit {
            recipe,
            languages,
            items,
        }
    }

    pub fn speakers(&self) -> BTreeSet<&str> {
        self.items.iter().map(|i| i.speaker_id.as_str()).collect()
    }

    pub fn speaker_counts(&self) -> BTreeMap<GroupKey, usize> {
        let mut seen: BTreeMap<GroupKey, BTreeSet<&str>> = BTreeMap::new();
        for item in &self.items {
            seen.entry(item.group.clone())
                .or_default()
                .insert(&item.speaker_id);
        }
        seen.into_iter().map(|(k, s)| (k, s.len())).collect()
    }

    pub fn utterance_counts(&self) -> BTreeMap<GroupKey, usize> {
        let mut counts = BTreeMap::new();
        for item in &self.items {
            *counts.entry(item.group.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn restrict_to(&self, language: &Language) -> Self {
        let mut languages = BTreeSet::new();
        if self.languages.contains(language) {
            languages.insert(language.clone());
        }
        TrainSplit {
            recipe: self.recipe,
            languages,
            items: self
                .items
                .iter()
                .filter(|i| &i.group.language == language)
                .cloned()
                .collect(),
        }
    }
}

fn group_stream(seed: u64, domain: u64, group: &GroupKey) -> rng::Rng {
    rng::rng_from(rng::derive(
        rng::derive(seed, domain),
        rng::fnv1a(group.to_string().as_bytes()),
    ))
}

/// `k` of `pool` uniformly without replacement, returned in pool order.
fn sample_subset<T: Clone>(pool: &[T], k: usize, rng: &mut rng::Rng) -> Vec<T> {
    if k >= pool.len() {
        return pool.to_vec();
    }
    let mut picked = index::sample(rng, pool.len(), k).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| pool[i].clone()).collect()
}

/// Samples `test_users_per_group` speakers from every group of the index.
pub fn select_test_roster(
    index: &DatasetIndex,
    cfg: &SplitConfig,
    fold: u32,
) -> Result<TestRoster, SplitError> {
    let n = cfg.test_users_per_group;
    if n == 0 {
        return Err(SplitError::ZeroTestUsers);
    }
    let seed = cfg.fold_seed(fold);
    let mut members = BTreeMap::new();
    for (group, ids) in index.group_index() {
        if ids.len() < n {
            return Err(SplitError::UndersizedGroup {
                group: group.clone(),
                size: ids.len(),
                required: n,
            });
        }
        let mut rng = group_stream(seed, tag::ROSTER, group);
        let mut chosen = sample_subset(ids, n, &mut rng);
        chosen.sort();
        members.insert(group.clone(), chosen);
    }
    Ok(TestRoster {
        fold_id: fold,
        members,
    })
}

/// Non-test speakers per group.
fn remaining_speakers<'a>(
    index: &'a DatasetIndex,
    roster: &TestRoster,
) -> Result<BTreeMap<GroupKey, Vec<&'a str>>, SplitError> {
    let excluded: BTreeSet<&str> = roster.speakers().map(|(_, id)| id).collect();
    for id in &excluded {
        if index.get(id).is_none() {
            return Err(SplitError::UnknownRosterSpeaker(id.to_string()));
        }
    }
    Ok(index
        .group_index()
        .iter()
        .map(|(k, ids)| {
            let left = ids
                .iter()
                .map(String::as_str)
                .filter(|id| !excluded.contains(id))
                .collect();
            (k.clone(), left)
        })
        .collect())
}

fn utterance_items(index: &DatasetIndex, group: &GroupKey, speaker_id: &str) -> Vec<SplitItem> {
    index
        .get(speaker_id)
        .map(|r| {
            r.utterances
                .iter()
                .map(|u| SplitItem {
                    speaker_id: speaker_id.to_string(),
                    utterance_id: u.utterance_id.clone(),
                    group: group.clone(),
                })
                .collect()
        })
        .unwrap_or_default()
}

/// Per-language minimum of `size`, then capped at the cross-language minimum.
fn balanced_count<T>(
    groups: &BTreeMap<GroupKey, Vec<T>>,
    empty: impl Fn(GroupKey) -> SplitError,
) -> Result<usize, SplitError> {
    let mut cap = usize::MAX;
    for (group, items) in groups {
        if items.is_empty() {
            return Err(empty(group.clone()));
        }
        cap = cap.min(items.len());
    }
    Ok(if cap == usize::MAX { 0 } else { cap })
}

/// Train-1: the same number of speakers from every group, all their utterances.
pub fn build_train_user_balanced(
    index: &DatasetIndex,
    roster: &TestRoster,
    cfg: &SplitConfig,
) -> Result<TrainSplit, SplitError> {
    let remaining = remaining_speakers(index, roster)?;
    let m = balanced_count(&remaining, SplitError::EmptyGroup)?;
    let seed = cfg.fold_seed(roster.fold_id);
    let mut items = Vec::new();
    for (group, ids) in &remaining {
        let mut rng = group_stream(seed, tag::TRAIN_USERS, group);
        for id in sample_subset(ids, m, &mut rng) {
            items.extend(utterance_items(index, group, id));
        }
    }
    Ok(TrainSplit::new(
        TrainRecipe::UserBalanced,
        index.languages(),
        items,
    ))
}

/// Train-2: every utterance of every non-test speaker.
pub fn build_train_unbalanced(
    index: &DatasetIndex,
    roster: &TestRoster,
) -> Result<TrainSplit, SplitError> {
    let remaining = remaining_speakers(index, roster)?;
    let items = remaining
        .iter()
        .flat_map(|(group, ids)| ids.iter().flat_map(|id| utterance_items(index, group, id)))
        .collect();
    Ok(TrainSplit::new(
        TrainRecipe::Unbalanced,
        index.languages(),
        items,
    ))
}

/// Train-3: the same number of utterances from every group, pooled over its speakers.
pub fn build_train_utterance_balanced(
    index: &DatasetIndex,
    roster: &TestRoster,
    cfg: &SplitConfig,
) -> Result<TrainSplit, SplitError> {
    let remaining = remaining_speakers(index, roster)?;
    let pools: BTreeMap<GroupKey, Vec<SplitItem>> = remaining
        .iter()
        .map(|(group, ids)| {
            let pool = ids
                .iter()
                .flat_map(|id| utterance_items(index, group, id))
                .collect();
            (group.clone(), pool)
        })
        .collect();
    let u = balanced_count(&pools, SplitError::NoUtterances)?;
    let seed = cfg.fold_seed(roster.fold_id);
    let mut items = Vec::new();
    for (group, pool) in &pools {
        let mut rng = group_stream(seed, tag::TRAIN_UTTS, group);
        items.extend(sample_subset(pool, u, &mut rng));
    }
    Ok(TrainSplit::new(
        TrainRecipe::UtteranceBalanced,
        index.languages(),
        items,
    ))
}

/// Unions per-language splits of one recipe. For the balanced recipes every
/// group is then trimmed (uniformly, from `seed`) to the smallest group count
/// so that each language contributes equally.
pub fn merge_language_splits(splits: &[TrainSplit], seed: u64) -> Result<TrainSplit, SplitError> {
    let first = splits.first().ok_or(SplitError::NoSplits)?;
    let mut languages = BTreeSet::new();
    for split in splits {
        if split.recipe != first.recipe {
            return Err(SplitError::MixedRecipes(first.recipe, split.recipe));
        }
        for lang in &split.languages {
            if !languages.insert(lang.clone()) {
                return Err(SplitError::OverlappingLanguages(lang.clone()));
            }
        }
    }
    let items: Vec<SplitItem> = splits
        .iter()
        .flat_map(|s| s.items.iter().cloned())
        .collect();
    let merged = TrainSplit::new(first.recipe, languages, items);
    match merged.recipe {
        TrainRecipe::Unbalanced => Ok(merged),
        TrainRecipe::UserBalanced => Ok(equalize_speakers(merged, seed)),
        TrainRecipe::UtteranceBalanced => Ok(equalize_utterances(merged, seed)),
    }
}

fn equalize_speakers(split: TrainSplit, seed: u64) -> TrainSplit {
    let counts = split.speaker_counts();
    let Some(&m) = counts.values().min() else {
        return split;
    };
    if counts.values().all(|&c| c == m) {
        return split;
    }
    let mut keep: BTreeSet<String> = BTreeSet::new();
    for group in counts.keys() {
        let ids: Vec<String> = split
            .items
            .iter()
            .filter(|i| &i.group == group)
            .map(|i| i.speaker_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut rng = group_stream(seed, tag::MERGE, group);
        keep.extend(sample_subset(&ids, m, &mut rng));
    }
    let items = split
        .items
        .into_iter()
        .filter(|i| keep.contains(&i.speaker_id))
        .collect();
    TrainSplit::new(split.recipe, split.languages, items)
}

fn equalize_utterances(split: TrainSplit, seed: u64) -> TrainSplit {
    let counts = split.utterance_counts();
    let Some(&u) = counts.values().min() else {
        return split;
    };
    if counts.values().all(|&c| c == u) {
        return split;
    }
    let mut items = Vec::new();
    for group in counts.keys() {
        let pool: Vec<SplitItem> = split
            .items
            .iter()
            .filter(|i| &i.group == group)
            .cloned()
            .collect();
        let mut rng = group_stream(seed, tag::MERGE, group);
        items.extend(sample_subset(&pool, u, &mut rng));
    }
    TrainSplit::new(split.recipe, split.languages, items)
}
