//! Fixture builders shared by the integration tests.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use vfair::core::manifest::{DatasetIndex, SpeakerRecord, UtteranceRef};
use vfair::core::{AgeBucket, GroupKey, Language};

/// Speaker id of speaker `i` in cell `cell` (cells in key order:
/// young-female, old-female, young-male, old-male).
pub fn speaker_id(language: &str, cell: usize, i: usize) -> String {
    format!("{}{cell}s{i:04}", &language[..2])
}

fn age_of(bucket: AgeBucket) -> u32 {
    match bucket {
        AgeBucket::Young => 25,
        AgeBucket::Old => 55,
    }
}

/// Index with `counts[c]` speakers in cell `c`; speaker `i` of cell `c`
/// gets `utts(c, i)` utterances.
pub fn index_with(
    language: &str,
    counts: [usize; 4],
    utts: impl Fn(usize, usize) -> usize,
) -> DatasetIndex {
    let lang = Language::new(language);
    let mut records = Vec::new();
    for (c, (&n, key)) in counts.iter().zip(GroupKey::cells(&lang)).enumerate() {
        for i in 0..n {
            let id = speaker_id(language, c, i);
            records.push(SpeakerRecord {
                speaker_id: id.clone(),
                language: lang.clone(),
                gender: key.gender,
                age_years: age_of(key.age_bucket),
                utterances: (0..utts(c, i))
                    .map(|u| UtteranceRef {
                        utterance_id: format!("u{u:02}"),
                        audio_path: format!("{id}/u{u:02}.wav"),
                    })
                    .collect(),
            });
        }
    }
    DatasetIndex::from_records(records, 40).expect("fixture index is valid")
}

/// Manifest text for the same population as [`index_with`].
pub fn manifest_text(
    language: &str,
    counts: [usize; 4],
    utts: impl Fn(usize, usize) -> usize,
) -> String {
    let mut out = String::from("speaker_id,gender,age,utterance_path\n");
    let lang = Language::new(language);
    for (c, (&n, key)) in counts.iter().zip(GroupKey::cells(&lang)).enumerate() {
        for i in 0..n {
            let id = speaker_id(language, c, i);
            for u in 0..utts(c, i) {
                writeln!(
                    out,
                    "{id},{},{},{id}/u{u:02}.wav",
                    key.gender.as_str(),
                    age_of(key.age_bucket)
                )
                .unwrap();
            }
        }
    }
    out
}

/// Deterministic utterance count in 5..=8.
pub fn five_to_eight(c: usize, i: usize) -> usize {
    5 + (c * 7 + i * 3) % 4
}

/// Writes a config plus one manifest per language into `dir`.
pub fn write_project(dir: &Path, languages: &[(&str, [usize; 4])], body: &str) -> PathBuf {
    let mut cfg = String::new();
    cfg.push_str(body);
    cfg.push_str("\n[languages]\n");
    for (lang, counts) in languages {
        let name = format!("{lang}.csv");
        fs::write(dir.join(&name), manifest_text(lang, *counts, five_to_eight)).unwrap();
        writeln!(cfg, "{lang} = \"{name}\"").unwrap();
    }
    let path = dir.join("vfair.toml");
    fs::write(&path, cfg).unwrap();
    path
}

/// Every regular file under `root`, as sorted (relative path, bytes) pairs.
pub fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

/// A sum of sinusoids, scaled to peak at 0.5.
pub fn tones(freqs: &[f64], seconds: f64, rate: u32) -> Vec<f64> {
    let n = (seconds * f64::from(rate)).round() as usize;
    let k = freqs.len().max(1) as f64;
    (0..n)
        .map(|i| {
            let t = i as f64 / f64::from(rate);
            0.5 * freqs
                .iter()
                .map(|f| (2.0 * std::f64::consts::PI * f * t).sin())
                .sum::<f64>()
                / k
        })
        .collect()
}
