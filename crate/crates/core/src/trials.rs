//! Verification trial lists.
//!
//! For every roster speaker a trial file holds `n_same` genuine pairs (two
//! distinct utterances of the speaker) followed by `n_diff` impostor pairs
//! whose probe comes from another roster speaker picked by the [`TestMode`]
//! rule. Each speaker draws from its own seeded streams, so the output does
//! not depend on the order in which speakers are processed.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::index;
use rand::Rng as _;
use thiserror::Error;

use crate::group::{GroupKey, Language, UnknownToken};
use crate::manifest::DatasetIndex;
use crate::rng::{self, tag};
use crate::splits::TestRoster;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrialError {
    #[error("roster is empty")]
    EmptyRoster,
    #[error("roster spans several languages ({0}); generate one trial file per language")]
    MixedLanguages(usize),
    #[error("roster speaker {0} is not in the dataset index")]
    UnknownSpeaker(String),
    #[error(
        "speaker {speaker_id} has {count} utterance(s); at least 2 are needed for genuine pairs"
    )]
    TooFewUtterances { speaker_id: String, count: usize },
    #[error("speaker {speaker_id} has no eligible impostor partner under mode {mode}")]
    NoEligiblePartner { speaker_id: String, mode: TestMode },
    #[error("pair counts must be positive (n_same = {n_same}, n_diff = {n_diff})")]
    ZeroPairs { n_same: usize, n_diff: usize },
}

/// Impostor partner rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TestMode {
    /// Test-1: partner shares the speaker's age bucket.
    SameAge,
    /// Test-2: partner shares the speaker's gender.
    SameGender,
    /// Test-3: any other roster speaker.
    Random,
}

impl TestMode {
    pub const ALL: [TestMode; 3] = [TestMode::SameAge, TestMode::SameGender, TestMode::Random];

    pub fn number(self) -> u8 {
        match self {
            TestMode::SameAge => 1,
            TestMode::SameGender => 2,
            TestMode::Random => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TestMode::SameAge => "same_age",
            TestMode::SameGender => "same_gender",
            TestMode::Random => "random",
        }
    }

    /// Whether `partner` may serve as impostor for `current`.
    pub fn admits(self, current: &GroupKey, partner: &GroupKey) -> bool {
        match self {
            TestMode::SameAge => current.age_bucket == partner.age_bucket,
            TestMode::SameGender => current.gender == partner.gender,
            TestMode::Random => true,
        }
    }
}

impl fmt::Display for TestMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestMode {
    type Err = UnknownToken;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "test1" | "1" | "same_age" => Ok(TestMode::SameAge),
            "test2" | "2" | "same_gender" => Ok(TestMode::SameGender),
            "test3" | "3" | "random" => Ok(TestMode::Random),
            _ => Err(UnknownToken(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Impostor = 0,
    Genuine = 1,
}

impl Label {
    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Label::Impostor),
            1 => Some(Label::Genuine),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UttKey {
    pub speaker_id: String,
    pub utterance_id: String,
}

impl UttKey {
    pub fn new(speaker_id: &str, utterance_id: &str) -> Self {
        UttKey {
            speaker_id: speaker_id.to_string(),
            utterance_id: utterance_id.to_string(),
        }
    }
}

impl fmt::Display for UttKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.speaker_id, self.utterance_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialPair {
    pub pair_id: u64,
    pub enroll: UttKey,
    pub probe: UttKey,
    pub label: Label,
    /// Group of the enrollment speaker.
    pub current_group: GroupKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialFile {
    pub mode: TestMode,
    pub fold_id: u32,
    pub language: Language,
    pub pairs: Vec<TrialPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialConfig {
    pub n_same: usize,
    pub n_diff: usize,
    pub seed: u64,
}

impl TrialConfig {
    pub fn new(seed: u64) -> Self {
        TrialConfig {
            n_same: 64,
            n_diff: 64,
            seed,
        }
    }
}

fn speaker_stream(seed: u64, domain: u64, speaker_id: &str) -> rng::Rng {
    rng::rng_from(rng::derive(
        rng::derive(seed, domain),
        rng::fnv1a(speaker_id.as_bytes()),
    ))
}

/// Generates the trial file of a single-language roster.
pub fn gen_trials(
    roster: &TestRoster,
    index: &DatasetIndex,
    mode: TestMode,
    cfg: &TrialConfig,
) -> Result<TrialFile, TrialError> {
    if cfg.n_same == 0 || cfg.n_diff == 0 {
        return Err(TrialError::ZeroPairs {
            n_same: cfg.n_same,
            n_diff: cfg.n_diff,
        });
    }
    let languages = roster.languages();
    if languages.len() > 1 {
        return Err(TrialError::MixedLanguages(languages.len()));
    }
    let language = languages
        .into_iter()
        .next()
        .ok_or(TrialError::EmptyRoster)?;
    if roster.is_empty() {
        return Err(TrialError::EmptyRoster);
    }

    let mut speakers = Vec::with_capacity(roster.len());
    for (group, id) in roster.speakers() {
        let record = index
            .get(id)
            .ok_or_else(|| TrialError::UnknownSpeaker(id.to_string()))?;
        if record.utterances.len() < 2 {
            return Err(TrialError::TooFewUtterances {
                speaker_id: id.to_string(),
                count: record.utterances.len(),
            });
        }
        speakers.push((group, record));
    }

    let mut pairs = Vec::with_capacity(speakers.len() * (cfg.n_same + cfg.n_diff));
    for &(group, record) in &speakers {
        let utts = &record.utterances;
        let id = record.speaker_id.as_str();

        let mut rng = speaker_stream(cfg.seed, tag::GENUINE, id);
        for (i, j) in genuine_indices(utts.len(), cfg.n_same, &mut rng) {
            pairs.push(TrialPair {
                pair_id: pairs.len() as u64,
                enroll: UttKey::new(id, &utts[i].utterance_id),
                probe: UttKey::new(id, &utts[j].utterance_id),
                label: Label::Genuine,
                current_group: group.clone(),
            });
        }

        let partners: Vec<_> = speakers
            .iter()
            .filter(|(g, r)| r.speaker_id != record.speaker_id && mode.admits(group, g))
            .map(|(_, r)| *r)
            .collect();
        if partners.is_empty() {
            return Err(TrialError::NoEligiblePartner {
                speaker_id: id.to_string(),
                mode,
            });
        }
        let mut rng = speaker_stream(cfg.seed, tag::IMPOSTOR, id);
        for _ in 0..cfg.n_diff {
            let enroll = &utts[rng.random_range(0..utts.len())];
            let partner = partners[rng.random_range(0..partners.len())];
            let probe = &partner.utterances[rng.random_range(0..partner.utterances.len())];
            pairs.push(TrialPair {
                pair_id: pairs.len() as u64,
                enroll: UttKey::new(id, &enroll.utterance_id),
                probe: UttKey::new(&partner.speaker_id, &probe.utterance_id),
                label: Label::Impostor,
                current_group: group.clone(),
            });
        }
    }

    Ok(TrialFile {
        mode,
        fold_id: roster.fold_id,
        language,
        pairs,
    })
}

/// `n` unordered pairs `(i, j)`, `i < j < k`. Sampled without replacement
/// when there are at least `n` distinct pairs, with replacement otherwise.
fn genuine_indices(k: usize, n: usize, rng: &mut rng::Rng) -> Vec<(usize, usize)> {
    let all: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .collect();
    if all.len() >= n {
        index::sample(rng, all.len(), n)
            .into_iter()
            .map(|p| all[p])
            .collect()
    } else {
        (0..n)
            .map(|_| all[rng.random_range(0..all.len())])
            .collect()
    }
}

/// A defect found by [`validate_trials`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    CountMismatch {
        speaker_id: String,
        genuine: usize,
        impostor: usize,
    },
    GenuineSelfPair {
        pair_id: u64,
    },
    GenuineSpeakerMismatch {
        pair_id: u64,
    },
    ImpostorSameSpeaker {
        pair_id: u64,
    },
    ModeConstraint {
        pair_id: u64,
    },
    NotInRoster {
        pair_id: u64,
        speaker_id: String,
    },
    UnknownUtterance {
        pair_id: u64,
        utterance: UttKey,
    },
    GroupMismatch {
        pair_id: u64,
    },
    LanguageMismatch {
        pair_id: u64,
    },
    DuplicatePairId {
        pair_id: u64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::CountMismatch {
                speaker_id,
                genuine,
                impostor,
            } => write!(
                f,
                "speaker {speaker_id}: {genuine} genuine / {impostor} impostor pairs"
            ),
            Violation::GenuineSelfPair { pair_id } => {
                write!(
                    f,
                    "pair {pair_id}: genuine pair uses the same utterance twice"
                )
            }
            Violation::GenuineSpeakerMismatch { pair_id } => {
                write!(f, "pair {pair_id}: genuine pair spans two speakers")
            }
            Violation::ImpostorSameSpeaker { pair_id } => {
                write!(f, "pair {pair_id}: impostor pair uses one speaker")
            }
            Violation::ModeConstraint { pair_id } => {
                write!(f, "pair {pair_id}: impostor partner violates the test mode")
            }
            Violation::NotInRoster {
                pair_id,
                speaker_id,
            } => write!(
                f,
                "pair {pair_id}: speaker {speaker_id} is not in the roster"
            ),
            Violation::UnknownUtterance { pair_id, utterance } => {
                write!(f, "pair {pair_id}: unknown utterance {utterance}")
            }
            Violation::GroupMismatch { pair_id } => {
                write!(
                    f,
                    "pair {pair_id}: group annotation differs from the enrollment speaker's"
                )
            }
            Violation::LanguageMismatch { pair_id } => {
                write!(f, "pair {pair_id}: language differs from the file's")
            }
            Violation::DuplicatePairId { pair_id } => write!(f, "pair id {pair_id} repeats"),
        }
    }
}

/// Checks a trial file against its roster and index. An empty report means valid.
pub fn validate_trials(
    file: &TrialFile,
    roster: &TestRoster,
    index: &DatasetIndex,
    n_same: usize,
    n_diff: usize,
) -> Vec<Violation> {
    let mut report = Vec::new();
    let roster_groups: BTreeMap<&str, &GroupKey> =
        roster.speakers().map(|(g, id)| (id, g)).collect();
    let mut counts: BTreeMap<&str, (usize, usize)> = roster
        .speakers()
        .filter(|(g, _)| g.language == file.language)
        .map(|(_, id)| (id, (0, 0)))
        .collect();
    let mut ids = BTreeSet::new();

    for pair in &file.pairs {
        let pid = pair.pair_id;
        if !ids.insert(pid) {
            report.push(Violation::DuplicatePairId { pair_id: pid });
        }
        if pair.current_group.language != file.language {
            report.push(Violation::LanguageMismatch { pair_id: pid });
        }
        for utt in [&pair.enroll, &pair.probe] {
            if !roster_groups.contains_key(utt.speaker_id.as_str()) {
                report.push(Violation::NotInRoster {
                    pair_id: pid,
                    speaker_id: utt.speaker_id.clone(),
                });
            }
            let exists = index
                .get(&utt.speaker_id)
                .is_some_and(|r| r.utterance(&utt.utterance_id).is_some());
            if !exists {
                report.push(Violation::UnknownUtterance {
                    pair_id: pid,
                    utterance: utt.clone(),
                });
            }
        }
        if let Some(g) = roster_groups.get(pair.enroll.speaker_id.as_str()) {
            if **g != pair.current_group {
                report.push(Violation::GroupMismatch { pair_id: pid });
            }
        }
        let same_speaker = pair.enroll.speaker_id == pair.probe.speaker_id;
        match pair.label {
            Label::Genuine => {
                if !same_speaker {
                    report.push(Violation::GenuineSpeakerMismatch { pair_id: pid });
                } else if pair.enroll.utterance_id == pair.probe.utterance_id {
                    report.push(Violation::GenuineSelfPair { pair_id: pid });
                }
            }
            Label::Impostor => {
                if same_speaker {
                    report.push(Violation::ImpostorSameSpeaker { pair_id: pid });
                } else if let (Some(a), Some(b)) = (
                    roster_groups.get(pair.enroll.speaker_id.as_str()),
                    roster_groups.get(pair.probe.speaker_id.as_str()),
                ) {
                    if !file.mode.admits(a, b) || a.language != b.language {
                        report.push(Violation::ModeConstraint { pair_id: pid });
                    }
                }
            }
        }
        if let Some(c) = counts.get_mut(pair.enroll.speaker_id.as_str()) {
            match pair.label {
                Label::Genuine => c.0 += 1,
                Label::Impostor => c.1 += 1,
            }
        }
    }

    for (speaker_id, (genuine, impostor)) in counts {
        if genuine != n_same || impostor != n_diff {
            report.push(Violation::CountMismatch {
                speaker_id: speaker_id.to_string(),
                genuine,
                impostor,
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Gender;
    use crate::manifest::fixtures::index_with_counts;
    use crate::manifest::{SpeakerRecord, UtteranceRef};
    use crate::splits::{select_test_roster, SplitConfig};
    use alloc::format;
    use proptest::prelude::*;

    fn roster_and_index(per_group: usize, utts: usize) -> (TestRoster, DatasetIndex) {
        let idx = index_with_counts("english", [per_group; 4], utts);
        let mut cfg = SplitConfig::new(1);
        cfg.test_users_per_group = per_group;
        (select_test_roster(&idx, &cfg, 0).unwrap(), idx)
    }

    #[test]
    fn full_roster_pair_count() {
        let (roster, idx) = roster_and_index(25, 5);
        for mode in TestMode::ALL {
            let file = gen_trials(&roster, &idx, mode, &TrialConfig::new(4)).unwrap();
            assert_eq!(file.pairs.len(), 12_800);
            assert!(validate_trials(&file, &roster, &idx, 64, 64).is_empty());
        }
    }

    #[test]
    fn five_utterances_force_repetition_without_self_pairs() {
        let (roster, idx) = roster_and_index(2, 5);
        let file = gen_trials(&roster, &idx, TestMode::Random, &TrialConfig::new(9)).unwrap();
        let (_, first) = roster.speakers().next().unwrap();
        let genuine: Vec<_> = file
            .pairs
            .iter()
            .filter(|p| p.label == Label::Genuine && p.enroll.speaker_id == first)
            .collect();
        assert_eq!(genuine.len(), 64);
        let distinct: BTreeSet<(&str, &str)> = genuine
            .iter()
            .map(|p| {
                (
                    p.enroll.utterance_id.as_str(),
                    p.probe.utterance_id.as_str(),
                )
            })
            .collect();
        // C(5, 2) = 10 unordered pairs exist; 64 draws cannot avoid repeats
        assert!(distinct.len() <= 10);
        assert!(genuine
            .iter()
            .all(|p| p.enroll.utterance_id != p.probe.utterance_id));
    }

    #[test]
    fn many_utterances_sample_without_replacement() {
        // C(12, 2) = 66 >= 64
        let (roster, idx) = roster_and_index(1, 12);
        let file = gen_trials(&roster, &idx, TestMode::Random, &TrialConfig::new(9)).unwrap();
        let (_, first) = roster.speakers().next().unwrap();
        let distinct: BTreeSet<(&str, &str)> = file
            .pairs
            .iter()
            .filter(|p| p.label == Label::Genuine && p.enroll.speaker_id == first)
            .map(|p| {
                (
                    p.enroll.utterance_id.as_str(),
                    p.probe.utterance_id.as_str(),
                )
            })
            .collect();
        assert_eq!(distinct.len(), 64);
    }

    #[test]
    fn mode_constraints_hold() {
        let (roster, idx) = roster_and_index(6, 5);
        for mode in TestMode::ALL {
            let file = gen_trials(&roster, &idx, mode, &TrialConfig::new(2)).unwrap();
            for p in file.pairs.iter().filter(|p| p.label == Label::Impostor) {
                let a = idx.group_of(&p.enroll.speaker_id).unwrap();
                let b = idx.group_of(&p.probe.speaker_id).unwrap();
                assert_ne!(p.enroll.speaker_id, p.probe.speaker_id);
                match mode {
                    TestMode::SameAge => assert_eq!(a.age_bucket, b.age_bucket),
                    TestMode::SameGender => assert_eq!(a.gender, b.gender),
                    TestMode::Random => {}
                }
            }
        }
    }

    #[test]
    fn genuine_pairs_identical_across_modes() {
        let (roster, idx) = roster_and_index(3, 6);
        let cfg = TrialConfig::new(5);
        let a = gen_trials(&roster, &idx, TestMode::SameAge, &cfg).unwrap();
        let b = gen_trials(&roster, &idx, TestMode::SameGender, &cfg).unwrap();
        let genuine = |f: &TrialFile| -> Vec<TrialPair> {
            f.pairs
                .iter()
                .filter(|p| p.label == Label::Genuine)
                .cloned()
                .collect()
        };
        assert_eq!(genuine(&a).len(), genuine(&b).len());
        for (x, y) in genuine(&a).iter().zip(genuine(&b).iter()) {
            assert_eq!((&x.enroll, &x.probe), (&y.enroll, &y.probe));
        }
        assert_eq!(
            a,
            gen_trials(&roster, &idx, TestMode::SameAge, &cfg).unwrap()
        );
    }

    #[test]
    fn too_few_utterances() {
        let (roster, idx) = roster_and_index(2, 1);
        let err = gen_trials(&roster, &idx, TestMode::Random, &TrialConfig::new(1)).unwrap_err();
        assert!(matches!(err, TrialError::TooFewUtterances { count: 1, .. }));
    }

    #[test]
    fn no_eligible_partner() {
        // Only one young speaker: under same-age it has nobody to pair with.
        let lang = Language::new("english");
        let mk = |id: &str, gender, age| SpeakerRecord {
            speaker_id: id.into(),
            language: lang.clone(),
            gender,
            age_years: age,
            utterances: (0..3)
                .map(|u| UtteranceRef {
                    utterance_id: format!("u{u}"),
                    audio_path: format!("{id}/{u}.wav"),
                })
                .collect(),
        };
        let idx = DatasetIndex::from_records(
            [
                mk("a", Gender::Female, 20),
                mk("b", Gender::Female, 60),
                mk("c", Gender::Male, 61),
            ],
            40,
        )
        .unwrap();
        let mut roster = TestRoster::empty(0);
        for id in ["a", "b", "c"] {
            roster
                .members
                .entry(idx.group_of(id).unwrap())
                .or_default()
                .push(id.into());
        }
        let err = gen_trials(&roster, &idx, TestMode::SameAge, &TrialConfig::new(1)).unwrap_err();
        assert_eq!(
            err,
            TrialError::NoEligiblePartner {
                speaker_id: "a".into(),
                mode: TestMode::SameAge
            }
        );
        assert!(gen_trials(&roster, &idx, TestMode::Random, &TrialConfig::new(1)).is_ok());
        let file = gen_trials(&roster, &idx, TestMode::SameGender, &TrialConfig::new(1));
        assert!(matches!(file, Err(TrialError::NoEligiblePartner { .. })));
    }

    #[test]
    fn multi_language_roster_rejected() {
        let idx = index_with_counts("english", [2; 4], 3)
            .merge(&index_with_counts("spanish", [2; 4], 3))
            .unwrap();
        let mut cfg = SplitConfig::new(1);
        cfg.test_users_per_group = 2;
        let roster = select_test_roster(&idx, &cfg, 0).unwrap();
        assert_eq!(
            gen_trials(&roster, &idx, TestMode::Random, &TrialConfig::new(1)).unwrap_err(),
            TrialError::MixedLanguages(2)
        );
        let es = roster.restrict_to(&Language::new("spanish"));
        let file = gen_trials(&es, &idx, TestMode::Random, &TrialConfig::new(1)).unwrap();
        assert!(file
            .pairs
            .iter()
            .all(|p| p.probe.speaker_id.starts_with("spanish")));
        assert_eq!(
            gen_trials(
                &TestRoster::empty(0),
                &idx,
                TestMode::Random,
                &TrialConfig::new(1)
            ),
            Err(TrialError::EmptyRoster)
        );
    }

    #[test]
    fn validation_catches_injected_faults() {
        let (roster, idx) = roster_and_index(3, 5);
        let file = gen_trials(&roster, &idx, TestMode::SameAge, &TrialConfig::new(3)).unwrap();
        assert!(validate_trials(&file, &roster, &idx, 64, 64).is_empty());

        let mut broken = file.clone();
        let p = broken
            .pairs
            .iter_mut()
            .find(|p| p.label == Label::Genuine)
            .unwrap();
        p.probe.utterance_id = p.enroll.utterance_id.clone();
        let report = validate_trials(&broken, &roster, &idx, 64, 64);
        assert_eq!(report.len(), 1);
        assert!(matches!(report[0], Violation::GenuineSelfPair { .. }));

        let mut short = file.clone();
        let drop = short
            .pairs
            .iter()
            .position(|p| p.label == Label::Genuine)
            .unwrap();
        short.pairs.remove(drop);
        let report = validate_trials(&short, &roster, &idx, 64, 64);
        assert_eq!(report.len(), 1);
        assert!(matches!(
            report[0],
            Violation::CountMismatch {
                genuine: 63,
                impostor: 64,
                ..
            }
        ));

        let mut wrong_mode = file.clone();
        wrong_mode.mode = TestMode::SameGender;
        assert!(validate_trials(&wrong_mode, &roster, &idx, 64, 64)
            .iter()
            .any(|v| matches!(v, Violation::ModeConstraint { .. })));

        let mut ghost = file;
        ghost.pairs[0].probe.utterance_id = "nope".into();
        let report = validate_trials(&ghost, &roster, &idx, 64, 64);
        assert!(matches!(report[0], Violation::UnknownUtterance { .. }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn generated_files_always_validate(
            per_group in 1usize..5,
            utts in 2usize..9,
            n_same in 1usize..40,
            n_diff in 1usize..40,
            seed in any::<u64>(),
            mode_ix in 0usize..3,
        ) {
            let (roster, idx) = roster_and_index(per_group.max(2), utts);
            let mode = TestMode::ALL[mode_ix];
            let cfg = TrialConfig { n_same, n_diff, seed };
            let file = gen_trials(&roster, &idx, mode, &cfg).unwrap();
            prop_assert_eq!(file.pairs.len(), roster.len() * (n_same + n_diff));
            prop_assert!(validate_trials(&file, &roster, &idx, n_same, n_diff).is_empty());
        }
    }
}
