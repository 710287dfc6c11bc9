//! Speaker records, eligibility filtering and demographic grouping.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::group::{AgeBucket, Gender, GroupKey, Language};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ManifestError {
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: empty value in column `{column}`")]
    EmptyField { row: usize, column: &'static str },
    #[error("row {row}: unrecognized gender token {token:?} (expected female or male)")]
    InvalidGender { row: usize, token: String },
    #[error("row {row}: unparsable age {token:?} (expected non-negative integer years)")]
    InvalidAge { row: usize, token: String },
    #[error("row {row}: duplicate utterance ({speaker_id}, {utterance_id})")]
    DuplicateUtterance {
        row: usize,
        speaker_id: String,
        utterance_id: String,
    },
    #[error("row {row}: speaker {speaker_id} has conflicting {field} across rows")]
    InconsistentSpeaker {
        row: usize,
        speaker_id: String,
        field: &'static str,
    },
    #[error("speaker {0} appears more than once")]
    DuplicateSpeaker(String),
    #[error("speaker {0} has no utterances")]
    NoUtterances(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceRef {
    pub utterance_id: String,
    /// Path as written in the manifest; resolved against a data root by the caller.
    pub audio_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeakerRecord {
    pub speaker_id: String,
    pub language: Language,
    pub gender: Gender,
    pub age_years: u32,
    pub utterances: Vec<UtteranceRef>,
}

impl SpeakerRecord {
    pub fn utterance(&self, utterance_id: &str) -> Option<&UtteranceRef> {
        self.utterances
            .iter()
            .find(|u| u.utterance_id == utterance_id)
    }
}

/// Maps a speaker onto its demographic cell.
pub fn assign_group(record: &SpeakerRecord, split_age: u32) -> GroupKey {
    GroupKey::new(
        record.language.clone(),
        record.gender,
        AgeBucket::from_age(record.age_years, split_age),
    )
}

/// One raw manifest row, before validation. `row` is the 1-based data row number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub row: usize,
    pub speaker_id: String,
    pub utterance_id: Option<String>,
    pub gender: String,
    pub age: String,
    pub utterance_path: String,
}

/// Identifier derived from a path: the final component without its extension.
pub fn utterance_id_from_path(path: &str) -> String {
    let name = path.rsplit(['/', '\\']).next().unwrap_or(path);
    match name.rfind('.') {
        Some(dot) if dot > 0 => String::from(&name[..dot]),
        _ => String::from(name),
    }
}

/// Immutable speaker index with its group partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetIndex {
    records: BTreeMap<String, SpeakerRecord>,
    group_index: BTreeMap<GroupKey, Vec<String>>,
    split_age: u32,
}

impl DatasetIndex {
    pub fn empty(split_age: u32) -> Self {
        DatasetIndex {
            records: BTreeMap::new(),
            group_index: BTreeMap::new(),
            split_age,
        }
    }

    /// Builds an index from validated records.
    pub fn from_records(
        records: impl IntoIterator<Item = SpeakerRecord>,
        split_age: u32,
    ) -> Result<Self, ManifestError> {
        let mut map = BTreeMap::new();
        for record in records {
            if record.utterances.is_empty() {
                return Err(ManifestError::NoUtterances(record.speaker_id));
            }
            let mut seen = BTreeSet::new();
            for u in &record.utterances {
                if !seen.insert(u.utterance_id.as_str()) {
                    return Err(ManifestError::DuplicateUtterance {
                        row: 0,
                        speaker_id: record.speaker_id.clone(),
                        utterance_id: u.utterance_id.clone(),
                    });
                }
            }
            if map.contains_key(&record.speaker_id) {
                return Err(ManifestError::DuplicateSpeaker(record.speaker_id));
            }
            map.insert(record.speaker_id.clone(), record);
        }
        Ok(Self::with_records(map, split_age))
    }

    /// Builds an index from per-utterance manifest rows of one language.
    /// Utterance order within a speaker follows row order.
    pub fn from_rows(
        rows: impl IntoIterator<Item = ManifestRow>,
        language: &Language,
        split_age: u32,
    ) -> Result<Self, ManifestError> {
        let mut records: BTreeMap<String, SpeakerRecord> = BTreeMap::new();
        for row in rows {
            let n = row.row;
            let speaker_id = non_empty(row.speaker_id, n, "speaker_id")?;
            let path = non_empty(row.utterance_path, n, "utterance_path")?;
            let gender: Gender = row
                .gender
                .parse()
                .map_err(|_| ManifestError::InvalidGender {
                    row: n,
                    token: row.gender.clone(),
                })?;
            let age_years: u32 = row
                .age
                .trim()
                .parse()
                .map_err(|_| ManifestError::InvalidAge {
                    row: n,
                    token: row.age.clone(),
                })?;
            let utterance_id = match row.utterance_id {
                Some(id) if !id.trim().is_empty() => String::from(id.trim()),
                _ => utterance_id_from_path(&path),
            };

            let record = records
                .entry(speaker_id.clone())
                .or_insert_with(|| SpeakerRecord {
                    speaker_id: speaker_id.clone(),
                    language: language.clone(),
                    gender,
                    age_years,
                    utterances: Vec::new(),
                });
            if record.gender != gender {
                return Err(ManifestError::InconsistentSpeaker {
                    row: n,
                    speaker_id,
                    field: "gender",
                });
            }
            if record.age_years != age_years {
                return Err(ManifestError::InconsistentSpeaker {
                    row: n,
                    speaker_id,
                    field: "age",
                });
            }
            if record.utterance(&utterance_id).is_some() {
                return Err(ManifestError::DuplicateUtterance {
                    row: n,
                    speaker_id,
                    utterance_id,
                });
            }
            record.utterances.push(UtteranceRef {
                utterance_id,
                audio_path: path,
            });
        }
        Ok(Self::with_records(records, split_age))
    }

    fn with_records(records: BTreeMap<String, SpeakerRecord>, split_age: u32) -> Self {
        let mut group_index: BTreeMap<GroupKey, Vec<String>> = BTreeMap::new();
        let languages: BTreeSet<&Language> = records.values().map(|r| &r.language).collect();
        for language in languages {
            for cell in GroupKey::cells(language) {
                group_index.insert(cell, Vec::new());
            }
        }
        for record in records.values() {
            group_index
                .get_mut(&assign_group(record, split_age))
                .expect("every language has its four cells")
                .push(record.speaker_id.clone());
        }
        DatasetIndex {
            records,
            group_index,
            split_age,
        }
    }

    pub fn split_age(&self) -> u32 {
        self.split_age
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, speaker_id: &str) -> Option<&SpeakerRecord> {
        self.records.get(speaker_id)
    }

    /// Records in speaker-id order.
    pub fn records(&self) -> impl Iterator<Item = &SpeakerRecord> {
        self.records.values()
    }

    /// Group → speaker ids (sorted). Every language present has all four cells.
    pub fn group_index(&self) -> &BTreeMap<GroupKey, Vec<String>> {
        &self.group_index
    }

    pub fn group_of(&self, speaker_id: &str) -> Option<GroupKey> {
        self.get(speaker_id)
            .map(|r| assign_group(r, self.split_age))
    }

    pub fn languages(&self) -> BTreeSet<Language> {
        self.records.values().map(|r| r.language.clone()).collect()
    }

    /// Number of speakers per group.
    pub fn group_counts(&self) -> BTreeMap<GroupKey, usize> {
        self.group_index
            .iter()
            .map(|(k, v)| (k.clone(), v.len()))
            .collect()
    }

    /// Keeps exactly the speakers with at least `min_count` utterances.
    pub fn filter_min_utterances(&self, min_count: usize) -> Self {
        let kept = self
            .records
            .iter()
            .filter(|(_, r)| r.utterances.len() >= min_count)
            .map(|(k, r)| (k.clone(), r.clone()))
            .collect();
        Self::with_records(kept, self.split_age)
    }

    /// Index restricted to one language.
    pub fn restrict_to(&self, language: &Language) -> Self {
        let kept = self
            .records
            .iter()
            .filter(|(_, r)| &r.language == language)
            .map(|(k, r)| (k.clone(), r.clone()))
            .collect();
        Self::with_records(kept, self.split_age)
    }

    /// Union of indices (typically one per language). Speaker ids must be disjoint.
    pub fn merge(&self, other: &DatasetIndex) -> Result<Self, ManifestError> {
        let mut records = self.records.clone();
        for (k, r) in &other.records {
            if records.insert(k.clone(), r.clone()).is_some() {
                return Err(ManifestError::DuplicateSpeaker(k.clone()));
            }
        }
        Ok(Self::with_records(records, self.split_age))
    }
}

fn non_empty(value: String, row: usize, column: &'static str) -> Result<String, ManifestError> {
    let trimmed = value.trim();
    if trimmed.is_empty() {
        Err(ManifestError::EmptyField { row, column })
    } else {
        Ok(String::from(trimmed))
    }
}
