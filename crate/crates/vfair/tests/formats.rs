mod common;

use std::path::Path;

use proptest::prelude::*;

use vfair::core::acoustic::{
    Embedding, EmbeddingSource, EmbeddingStore, FeatureKind, FeatureMatrix,
};
use vfair::core::error::{AcousticError, ManifestError};
use vfair::core::metrics::evaluate;
use vfair::core::scoring::{ScoreFile, ScoreRecord};
use vfair::core::splits::{build_train_unbalanced, select_test_roster, SplitConfig, TrainRecipe};
use vfair::core::trials::{gen_trials, Label, TestMode, TrialConfig, UttKey};
use vfair::core::{Error as CoreError, Gender, GroupKey, Language};
use vfair::formats::*;
use vfair::Error;

const ORIGIN: &str = "fixture.csv";

fn origin() -> &'static Path {
    Path::new(ORIGIN)
}

fn english() -> Language {
    Language::new("english")
}

fn manifest(text: &str) -> Result<vfair::core::manifest::DatasetIndex, Error> {
    decode_manifest(
        text.as_bytes(),
        origin(),
        &english(),
        &ManifestOptions::default(),
    )
}

fn manifest_error(text: &str) -> ManifestError {
    match manifest(text).unwrap_err().as_core() {
        Some(CoreError::Manifest(e)) => e.clone(),
        other => panic!("expected a manifest error, got {other:?}"),
    }
}

#[test]
fn manifest_reads_rows_and_derives_utterance_ids() {
    let index = manifest(
        "speaker_id,gender,age,utterance_path,site\n\
         s1,F,23,s1/a.wav,x\n\
         s1,F,23,s1/b.wav,y\n\
         s2,male,61,clips/s2_0.wav,z\n",
    )
    .unwrap();
    assert_eq!(index.len(), 2);
    let s1 = index.get("s1").unwrap();
    assert_eq!(s1.gender, Gender::Female);
    let ids: Vec<&str> = s1
        .utterances
        .iter()
        .map(|u| u.utterance_id.as_str())
        .collect();
    assert_eq!(ids, ["a", "b"]);
    assert_eq!(index.get("s2").unwrap().utterances[0].utterance_id, "s2_0");
    assert_eq!(
        index.group_of("s2").unwrap().to_string(),
        "english/old-male"
    );
}

#[test]
fn manifest_prefers_explicit_utterance_ids_and_custom_delimiters() {
    let text = "Speaker_ID;utterance_id;Gender;Age;utterance_path\n\
                s1;first;f;30;s1/x.wav\n\
                s1;second;f;30;s1/x2.wav\n";
    let opts = ManifestOptions {
        delimiter: b';',
        split_age: 40,
    };
    let index = decode_manifest(text.as_bytes(), origin(), &english(), &opts).unwrap();
    let ids: Vec<&str> = index
        .get("s1")
        .unwrap()
        .utterances
        .iter()
        .map(|u| u.utterance_id.as_str())
        .collect();
    assert_eq!(ids, ["first", "second"]);
}

#[test]
fn manifest_missing_column_names_it() {
    let e = manifest_error("speaker_id,gender,utterance_path\ns1,f,a.wav\n");
    assert_eq!(e, ManifestError::MissingColumn("age".into()));
}

#[test]
fn manifest_row_errors_carry_row_numbers() {
    let e = manifest_error("speaker_id,gender,age,utterance_path\ns1,f,30,a.wav\ns2,x,30,b.wav\n");
    assert_eq!(
        e,
        ManifestError::InvalidGender {
            row: 2,
            token: "x".into()
        }
    );
    let e = manifest_error("speaker_id,gender,age,utterance_path\ns1,f,thirty,a.wav\n");
    assert_eq!(
        e,
        ManifestError::InvalidAge {
            row: 1,
            token: "thirty".into()
        }
    );
    let e =
        manifest_error("speaker_id,gender,age,utterance_path\ns1,f,30,d/a.wav\ns1,f,30,e/a.wav\n");
    assert!(
        matches!(e, ManifestError::DuplicateUtterance { row: 2, .. }),
        "{e:?}"
    );
}

#[test]
fn manifest_error_message_names_module_and_file() {
    let msg = manifest("speaker_id,gender,utterance_path\n")
        .unwrap_err()
        .to_string();
    assert!(
        msg.starts_with("manifest: missing required column `age`"),
        "{msg}"
    );
    assert!(msg.contains(ORIGIN), "{msg}");
}

#[test]
fn manifest_encoding_round_trips() {
    let index = common::index_with("english", [3, 2, 4, 1], common::five_to_eight);
    let bytes = encode_manifest(&index);
    let back = manifest(std::str::from_utf8(&bytes).unwrap()).unwrap();
    assert_eq!(back, index);
    assert_eq!(encode_manifest(&back), bytes);
}

#[test]
fn group_counts_cover_every_cell() {
    let index = common::index_with("english", [3, 0, 4, 1], |_, _| 2);
    let text = String::from_utf8(encode_group_counts(&index)).unwrap();
    assert_eq!(
        text,
        "language,gender,age_bucket,speakers,utterances\n\
         english,female,young,3,6\n\
         english,female,old,0,0\n\
         english,male,young,4,8\n\
         english,male,old,1,2\n"
    );
}

fn fixture_roster() -> (
    vfair::core::manifest::DatasetIndex,
    vfair::core::splits::TestRoster,
) {
    let index = common::index_with("english", [8, 8, 8, 8], common::five_to_eight);
    let mut cfg = SplitConfig::new(5);
    cfg.test_users_per_group = 4;
    let roster = select_test_roster(&index, &cfg, 1).unwrap();
    (index, roster)
}

#[test]
fn roster_round_trips_and_checks_fold() {
    let (_, roster) = fixture_roster();
    let bytes = encode_roster(&roster);
    assert!(bytes.starts_with(b"fold,language,gender,age_bucket,speaker_id\n"));
    assert_eq!(decode_roster(&bytes, origin(), 1).unwrap(), roster);
    let err = decode_roster(&bytes, origin(), 0).unwrap_err().to_string();
    assert!(err.contains("row 1") && err.contains("fold 1"), "{err}");
}

#[test]
fn split_file_is_sorted_and_round_trips() {
    let (index, roster) = fixture_roster();
    let split = build_train_unbalanced(&index, &roster).unwrap();
    let bytes = encode_split(&split);
    let text = std::str::from_utf8(&bytes).unwrap();
    assert!(text.starts_with("speaker_id,utterance_id,language,gender,age_bucket\n"));
    let keys: Vec<(&str, &str)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let mut f = l.split(',');
            (f.next().unwrap(), f.next().unwrap())
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert_eq!(
        decode_split(&bytes, origin(), TrainRecipe::Unbalanced).unwrap(),
        split
    );
}

#[test]
fn trial_file_round_trips() {
    let (index, roster) = fixture_roster();
    let file = gen_trials(&roster, &index, TestMode::SameGender, &TrialConfig::new(3)).unwrap();
    let bytes = encode_trials(&file);
    let first = std::str::from_utf8(&bytes).unwrap().lines().next().unwrap();
    assert_eq!(
        first,
        "pair_id,label,enroll_speaker,enroll_utt,probe_speaker,probe_utt,language,gender,age_bucket"
    );
    assert_eq!(
        decode_trials(&bytes, origin(), TestMode::SameGender, 1).unwrap(),
        file
    );
}

#[test]
fn trial_file_rejects_bad_labels_and_empty_files() {
    let header = "pair_id,label,enroll_speaker,enroll_utt,probe_speaker,probe_utt,language,gender,age_bucket\n";
    let bad = format!("{header}0,2,a,1,a,2,english,female,young\n");
    let e = decode_trials(bad.as_bytes(), origin(), TestMode::Random, 0)
        .unwrap_err()
        .to_string();
    assert!(e.contains("row 1") && e.contains("label"), "{e}");
    assert!(decode_trials(header.as_bytes(), origin(), TestMode::Random, 0).is_err());
}

fn group(gender: Gender, old: bool) -> GroupKey {
    use vfair::core::AgeBucket;
    GroupKey::new(
        english(),
        gender,
        if old {
            AgeBucket::Old
        } else {
            AgeBucket::Young
        },
    )
}

#[test]
fn score_file_layout() {
    let file = ScoreFile::new(vec![
        ScoreRecord {
            pair_id: 0,
            label: Label::Genuine,
            similarity: 0.123_456_789,
            group: group(Gender::Female, false),
            epoch: None,
        },
        ScoreRecord {
            pair_id: 1,
            label: Label::Impostor,
            similarity: -1e-9,
            group: group(Gender::Male, true),
            epoch: None,
        },
    ]);
    let text = String::from_utf8(encode_scores(&file)).unwrap();
    assert_eq!(
        text,
        "pair_id,label,similarity,language,gender,age_bucket,epoch\n\
         0,1,0.123457,english,female,young,\n\
         1,0,0.000000,english,male,old,\n"
    );
    let tagged = String::from_utf8(encode_scores(&file.clone().with_epoch(7))).unwrap();
    assert!(tagged.lines().nth(1).unwrap().ends_with(",7"));
}

#[test]
fn score_reader_accepts_files_without_epoch_column() {
    let text = "pair_id,label,similarity,language,gender,age_bucket\n3,1,0.5,english,m,o\n";
    let file = decode_scores(text.as_bytes(), origin()).unwrap();
    assert_eq!(file.records[0].group, group(Gender::Male, true));
    assert_eq!(file.records[0].epoch, None);
}

#[test]
fn score_reader_rejects_non_finite_similarities() {
    let text = "pair_id,label,similarity,language,gender,age_bucket,epoch\n0,1,NaN,english,f,y,\n";
    assert!(decode_scores(text.as_bytes(), origin()).is_err());
}

fn store(rows: &[(&str, &str, Vec<f64>)]) -> EmbeddingStore {
    let mut s = EmbeddingStore::new();
    for (spk, utt, v) in rows {
        s.insert(
            UttKey::new(spk, utt),
            Embedding::new(v.clone(), EmbeddingSource::External).unwrap(),
        )
        .unwrap();
    }
    s
}

#[test]
fn embeddings_round_trip_exactly() {
    let s = store(&[
        ("b", "1", vec![0.1, -2.5e-12, 3.0]),
        ("a", "2", vec![std::f64::consts::PI, 0.0, -1.0]),
    ]);
    let bytes = encode_embeddings(&s);
    assert!(bytes.starts_with(b"speaker_id,utterance_id,e0,e1,e2\na,2,"));
    let back = decode_embeddings(&bytes, origin(), EmbeddingSource::External).unwrap();
    assert_eq!(encode_embeddings(&back), bytes);
    assert_eq!(
        back.get(&UttKey::new("a", "2")).unwrap().as_slice(),
        &[std::f64::consts::PI, 0.0, -1.0]
    );
}

fn embedding_error(text: &str) -> (Option<usize>, AcousticError) {
    match decode_embeddings(text.as_bytes(), origin(), EmbeddingSource::External).unwrap_err() {
        Error::Core {
            row,
            source: CoreError::Acoustic(e),
            ..
        } => (row, e),
        other => panic!("expected an acoustic error, got {other}"),
    }
}

#[test]
fn embedding_import_rejects_ragged_duplicate_and_nan_rows() {
    let (row, e) = embedding_error("speaker_id,utterance_id,e0,e1\na,1,0.1,0.2\nb,1,0.1,0.2,0.3\n");
    assert_eq!(row, Some(2));
    assert!(
        matches!(
            e,
            AcousticError::DimMismatch {
                expected: 2,
                got: 3,
                ..
            }
        ),
        "{e:?}"
    );

    let (row, e) = embedding_error("speaker_id,utterance_id,e0\na,1,0.1\na,1,0.2\n");
    assert_eq!(row, Some(2));
    assert_eq!(e, AcousticError::DuplicateEmbedding(UttKey::new("a", "1")));

    let (_, e) = embedding_error("speaker_id,utterance_id,e0,e1\na,1,0.1,NaN\n");
    assert_eq!(e, AcousticError::NonFiniteEmbedding(1));
}

#[test]
fn embedding_header_must_be_positional() {
    let text = "speaker_id,utterance_id,e1,e0\na,1,0.1,0.2\n";
    assert!(decode_embeddings(text.as_bytes(), origin(), EmbeddingSource::External).is_err());
}

#[test]
fn features_round_trip_exactly() {
    let mut map = std::collections::BTreeMap::new();
    map.insert(
        UttKey::new("s", "u"),
        FeatureMatrix::from_rows(
            FeatureKind::LogMel,
            2,
            3,
            vec![1.0, -2.0, 0.5, 1e-300, 7.25, -0.0],
        ),
    );
    map.insert(
        UttKey::new("r", "v"),
        FeatureMatrix::from_rows(FeatureKind::LogMel, 1, 3, vec![9.0, 8.0, 7.0]),
    );
    let bytes = encode_features(&map);
    let back = decode_features(&bytes, origin(), FeatureKind::LogMel).unwrap();
    assert_eq!(back.len(), 2);
    for (k, m) in &map {
        assert_eq!(back[k].frames(), m.frames());
        assert_eq!(back[k].data(), m.data());
    }
}

#[test]
fn group_labels_parse_back() {
    for g in GroupKey::cells(&english()) {
        assert_eq!(parse_group_label(&g.to_string()), Some(g));
    }
    assert_eq!(parse_group_label("english-old"), None);
    assert_eq!(parse_group_label("/old-male"), None);
}

fn scores_strategy() -> impl Strategy<Value = ScoreFile> {
    let cells = GroupKey::cells(&english());
    prop::collection::vec((0usize..4, any::<bool>(), -1.0f64..1.0), 8..80).prop_map(move |rows| {
        let mut records: Vec<ScoreRecord> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (c, genuine, s))| ScoreRecord {
                pair_id: i as u64,
                label: if genuine {
                    Label::Genuine
                } else {
                    Label::Impostor
                },
                similarity: s,
                group: cells[c].clone(),
                epoch: None,
            })
            .collect();
        // both classes in every cell, so that evaluation is defined
        for (c, cell) in cells.iter().enumerate() {
            for label in [Label::Genuine, Label::Impostor] {
                records.push(ScoreRecord {
                    pair_id: (1000 + 2 * c + label.bit() as usize) as u64,
                    label,
                    similarity: 0.25 * c as f64 - 0.3,
                    group: cell.clone(),
                    epoch: None,
                });
            }
        }
        ScoreFile::new(records)
    })
}

proptest! {
    #[test]
    fn score_files_round_trip_at_six_decimals(file in scores_strategy()) {
        let bytes = encode_scores(&file);
        let back = decode_scores(&bytes, origin()).unwrap();
        prop_assert_eq!(back.records.len(), file.records.len());
        for (a, b) in file.records.iter().zip(&back.records) {
            prop_assert_eq!(a.pair_id, b.pair_id);
            prop_assert_eq!(a.label, b.label);
            prop_assert_eq!(&a.group, &b.group);
            prop_assert!((a.similarity - b.similarity).abs() <= 5e-7 + 1e-15);
        }
        prop_assert_eq!(encode_scores(&back), bytes);
    }

    #[test]
    fn metrics_round_trip_exactly(file in scores_strategy()) {
        let (metrics, _) = evaluate(&file).unwrap();
        let bytes = encode_metrics(&metrics);
        let back = decode_metrics(&bytes, origin()).unwrap();
        prop_assert_eq!(back, metrics);
    }
}
