//! Delimiter-separated text formats for every artifact the pipeline exchanges.
//!
//! Each format has an `encode_*` function producing the exact bytes written to
//! disk and a `decode_*` function taking those bytes plus the path they came
//! from, which is only used in diagnostics. Encoders sort their rows so that
//! identical inputs always produce identical files. Real values that must
//! survive a round trip exactly are written in Rust's shortest round-trip
//! notation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use csv::StringRecord;

use vfair_core::acoustic::{
    AcousticError, Embedding, EmbeddingSource, EmbeddingStore, FeatureKind, FeatureMatrix,
};
use vfair_core::manifest::{DatasetIndex, ManifestError, ManifestRow};
use vfair_core::metrics::{DisparityReport, EerResult, GroupMetrics, Slice, SliceMetrics};
use vfair_core::scoring::{ScoreFile, ScoreRecord};
use vfair_core::splits::{SplitItem, TestRoster, TrainRecipe, TrainSplit};
use vfair_core::trials::{Label, TestMode, TrialFile, TrialPair, UttKey};
use vfair_core::{AgeBucket, Gender, GroupKey, Language};

use crate::error::{Error, Result};

pub const MANIFEST_COLUMNS: [&str; 5] = [
    "speaker_id",
    "utterance_id",
    "gender",
    "age",
    "utterance_path",
];
pub const ROSTER_COLUMNS: [&str; 5] = ["fold", "language", "gender", "age_bucket", "speaker_id"];
pub const SPLIT_COLUMNS: [&str; 5] = [
    "speaker_id",
    "utterance_id",
    "language",
    "gender",
    "age_bucket",
];
pub const TRIAL_COLUMNS: [&str; 9] = [
    "pair_id",
    "label",
    "enroll_speaker",
    "enroll_utt",
    "probe_speaker",
    "probe_utt",
    "language",
    "gender",
    "age_bucket",
];
pub const SCORE_COLUMNS: [&str; 7] = [
    "pair_id",
    "label",
    "similarity",
    "language",
    "gender",
    "age_bucket",
    "epoch",
];
pub const METRIC_COLUMNS: [&str; 10] = [
    "scope",
    "name",
    "eer",
    "eer_threshold",
    "far_at_eer",
    "frr_at_eer",
    "far",
    "frr",
    "n_genuine",
    "n_impostor",
];

// ---------------------------------------------------------------------------
// shared plumbing

fn writer(columns: &[&str]) -> csv::Writer<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(columns)
        .expect("writing to memory cannot fail");
    w
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("writing to memory cannot fail")
}

fn put<I, S>(w: &mut csv::Writer<Vec<u8>>, fields: I)
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(fields)
        .expect("writing to memory cannot fail");
}

/// Header-addressed reader over one delimited document.
struct Table<'a> {
    origin: &'a Path,
    headers: Vec<String>,
    records: csv::StringRecordsIntoIter<&'a [u8]>,
    row: usize,
}

impl<'a> Table<'a> {
    fn open(bytes: &'a [u8], origin: &'a Path, delimiter: u8, flexible: bool) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .flexible(flexible)
            .from_reader(bytes);
        let headers = reader
            .headers()
            .map_err(|e| Error::format(origin, format!("unreadable header row: {e}")))?
            .iter()
            .map(|h| h.trim().trim_start_matches('\u{feff}').to_lowercase())
            .collect();
        Ok(Table {
            origin,
            headers,
            records: reader.into_records(),
            row: 0,
        })
    }

    fn find(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.find(name)
            .ok_or_else(|| Error::format(self.origin, format!("missing column '{name}'")))
    }

    fn require_all<const N: usize>(&self, names: [&str; N]) -> Result<[usize; N]> {
        let mut out = [0; N];
        for (slot, name) in out.iter_mut().zip(names) {
            *slot = self.require(name)?;
        }
        Ok(out)
    }

    /// Next data record with its 1-based row number.
    fn next_record(&mut self) -> Result<Option<(usize, StringRecord)>> {
        match self.records.next() {
            None => Ok(None),
            Some(Err(e)) => Err(Error::format(
                self.origin,
                format!("row {}: {e}", self.row + 1),
            )),
            Some(Ok(rec)) => {
                self.row += 1;
                Ok(Some((self.row, rec)))
            }
        }
    }

    fn bad(&self, row: usize, msg: impl std::fmt::Display) -> Error {
        Error::format(self.origin, format!("row {row}: {msg}"))
    }
}

fn field(rec: &StringRecord, i: usize) -> &str {
    rec.get(i).unwrap_or("").trim()
}

fn parse_num<T: std::str::FromStr>(t: &Table, row: usize, column: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| {
        t.bad(
            row,
            format!("column '{column}' has unparsable value '{raw}'"),
        )
    })
}

fn parse_group(t: &Table, row: usize, lang: &str, gender: &str, age: &str) -> Result<GroupKey> {
    if lang.is_empty() {
        return Err(t.bad(row, "empty language"));
    }
    let gender: Gender = gender
        .parse()
        .map_err(|_| t.bad(row, format!("unrecognized gender '{gender}'")))?;
    let age: AgeBucket = age
        .parse()
        .map_err(|_| t.bad(row, format!("unrecognized age bucket '{age}'")))?;
    Ok(GroupKey::new(Language::new(lang), gender, age))
}

/// Parses the `language/age-gender` label used for cells, e.g. `english/old-female`.
pub fn parse_group_label(label: &str) -> Option<GroupKey> {
    let (lang, rest) = label.split_once('/')?;
    let (age, gender) = rest.split_once('-')?;
    if lang.is_empty() {
        return None;
    }
    Some(GroupKey::new(
        Language::new(lang),
        gender.parse().ok()?,
        age.parse().ok()?,
    ))
}

fn group_fields(g: &GroupKey) -> [&str; 3] {
    [
        g.language.as_str(),
        g.gender.as_str(),
        g.age_bucket.as_str(),
    ]
}

/// Fixed six-decimal rendering, without a sign on zero.
fn fixed6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

// ---------------------------------------------------------------------------
// manifest

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ManifestOptions {
    pub delimiter: u8,
    pub split_age: u32,
}

impl Default for ManifestOptions {
    fn default() -> Self {
        ManifestOptions {
            delimiter: b',',
            split_age: vfair_core::group::DEFAULT_SPLIT_AGE,
        }
    }
}

/// Reads a per-language manifest: header row required, one row per
/// utterance. `utterance_id` is optional and defaults to the file stem of
/// `utterance_path`; unknown columns are ignored.
pub fn load_manifest(
    path: &Path,
    language: &Language,
    opts: &ManifestOptions,
) -> Result<DatasetIndex> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_manifest(&bytes, path, language, opts)
}

pub fn decode_manifest(
    bytes: &[u8],
    origin: &Path,
    language: &Language,
    opts: &ManifestOptions,
) -> Result<DatasetIndex> {
    let mut t = Table::open(bytes, origin, opts.delimiter, false)?;
    let mut cols = [0; 4];
    for (slot, name) in cols
        .iter_mut()
        .zip(["speaker_id", "gender", "age", "utterance_path"])
    {
        *slot = t
            .find(name)
            .ok_or_else(|| Error::core(origin, ManifestError::MissingColumn(name.to_string())))?;
    }
    let [speaker, gender, age, path] = cols;
    let utt = t.find("utterance_id");
    let mut rows = Vec::new();
    while let Some((row, rec)) = t.next_record()? {
        rows.push(ManifestRow {
            row,
            speaker_id: field(&rec, speaker).to_string(),
            utterance_id: utt
                .map(|i| field(&rec, i).to_string())
                .filter(|s| !s.is_empty()),
            gender: field(&rec, gender).to_string(),
            age: field(&rec, age).to_string(),
            utterance_path: field(&rec, path).to_string(),
        });
    }
    DatasetIndex::from_rows(rows, language, opts.split_age).map_err(|e| Error::core(origin, e))
}

/// Normalized manifest of every speaker in `index`, sorted by speaker with
/// utterances in index order. Readable by [`load_manifest`].
pub fn encode_manifest(index: &DatasetIndex) -> Vec<u8> {
    let mut w = writer(&MANIFEST_COLUMNS);
    for rec in index.records() {
        let age = rec.age_years.to_string();
        for u in &rec.utterances {
            put(
                &mut w,
                [
                    rec.speaker_id.as_str(),
                    u.utterance_id.as_str(),
                    rec.gender.as_str(),
                    age.as_str(),
                    u.audio_path.as_str(),
                ],
            );
        }
    }
    finish(w)
}

/// Speaker and utterance totals per group cell.
pub fn encode_group_counts(index: &DatasetIndex) -> Vec<u8> {
    let mut w = writer(&["language", "gender", "age_bucket", "speakers", "utterances"]);
    for (group, ids) in index.group_index() {
        let utts: usize = ids
            .iter()
            .filter_map(|id| index.get(id))
            .map(|r| r.utterances.len())
            .sum();
        let [l, g, a] = group_fields(group);
        put(&mut w, [l, g, a, &ids.len().to_string(), &utts.to_string()]);
    }
    finish(w)
}

// ---------------------------------------------------------------------------
// roster and training splits

pub fn encode_roster(roster: &TestRoster) -> Vec<u8> {
    let mut w = writer(&ROSTER_COLUMNS);
    let fold = roster.fold_id.to_string();
    for (group, id) in roster.speakers() {
        let [l, g, a] = group_fields(group);
        put(&mut w, [fold.as_str(), l, g, a, id]);
    }
    finish(w)
}

/// Reads a roster; every row must belong to `fold`.
pub fn decode_roster(bytes: &[u8], origin: &Path, fold: u32) -> Result<TestRoster> {
    let mut t = Table::open(bytes, origin, b',', false)?;
    let [f, l, g, a, s] = t.require_all(ROSTER_COLUMNS)?;
    let mut roster = TestRoster::empty(fold);
    while let Some((row, rec)) = t.next_record()? {
        let row_fold: u32 = parse_num(&t, row, "fold", field(&rec, f))?;
        if row_fold != fold {
            return Err(t.bad(row, format!("fold {row_fold} in a roster for fold {fold}")));
        }
        let group = parse_group(&t, row, field(&rec, l), field(&rec, g), field(&rec, a))?;
        let id = field(&rec, s);
        if id.is_empty() {
            return Err(t.bad(row, "empty speaker_id"));
        }
        roster
            .members
            .entry(group)
            .or_default()
            .push(id.to_string());
    }
    for ids in roster.members.values_mut() {
        ids.sort();
        ids.dedup();
    }
    Ok(roster)
}

pub fn encode_split(split: &TrainSplit) -> Vec<u8> {
    let mut w = writer(&SPLIT_COLUMNS);
    for item in &split.items {
        let [l, g, a] = group_fields(&item.group);
        put(
            &mut w,
            [
                item.speaker_id.as_str(),
                item.utterance_id.as_str(),
                l,
                g,
                a,
            ],
        );
    }
    finish(w)
}

pub fn decode_split(bytes: &[u8], origin: &Path, recipe: TrainRecipe) -> Result<TrainSplit> {
    let mut t = Table::open(bytes, origin, b',', false)?;
    let [s, u, l, g, a] = t.require_all(SPLIT_COLUMNS)?;
    let mut items = Vec::new();
    let mut languages = BTreeSet::new();
    while let Some((row, rec)) = t.next_record()? {
        let group = parse_group(&t, row, field(&rec, l), field(&rec, g), field(&rec, a))?;
        languages.insert(group.language.clone());
        items.push(SplitItem {
            speaker_id: field(&rec, s).to_string(),
            utterance_id: field(&rec, u).to_string(),
            group,
        });
    }
    items.sort();
    Ok(TrainSplit {
        recipe,
        languages,
        items,
    })
}

// ---------------------------------------------------------------------------
// trials

pub fn encode_trials(file: &TrialFile) -> Vec<u8> {
    let mut w = writer(&TRIAL_COLUMNS);
    for p in &file.pairs {
        let [l, g, a] = group_fields(&p.current_group);
        put(
            &mut w,
            [
                p.pair_id.to_string().as_str(),
                &p.label.bit().to_string(),
                &p.enroll.speaker_id,
                &p.enroll.utterance_id,
                &p.probe.speaker_id,
                &p.probe.utterance_id,
                l,
                g,
                a,
            ],
        );
    }
    finish(w)
}

fn parse_label(t: &Table, row: usize, raw: &str) -> Result<Label> {
    raw.parse::<u8>()
        .ok()
        .and_then(Label::from_bit)
        .ok_or_else(|| t.bad(row, format!("label must be 0 or 1, found '{raw}'")))
}

/// Reads a trial file. Mode and fold are not stored in the rows and come
/// from the caller (they are encoded in the file name by the pipeline).
pub fn decode_trials(bytes: &[u8], origin: &Path, mode: TestMode, fold: u32) -> Result<TrialFile> {
    let mut t = Table::open(bytes, origin, b',', false)?;
    let [id, lab, es, eu, ps, pu, l, g, a] = t.require_all(TRIAL_COLUMNS)?;
    let mut pairs = Vec::new();
    let mut language: Option<Language> = None;
    while let Some((row, rec)) = t.next_record()? {
        let group = parse_group(&t, row, field(&rec, l), field(&rec, g), field(&rec, a))?;
        match &language {
            None => language = Some(group.language.clone()),
            Some(lang) if *lang != group.language => {
                return Err(t.bad(
                    row,
                    format!("language {} in a {lang} trial file", group.language),
                ))
            }
            Some(_) => {}
        }
        pairs.push(TrialPair {
            pair_id: parse_num(&t, row, "pair_id", field(&rec, id))?,
            enroll: UttKey::new(field(&rec, es), field(&rec, eu)),
            probe: UttKey::new(field(&rec, ps), field(&rec, pu)),
            label: parse_label(&t, row, field(&rec, lab))?,
            current_group: group,
        });
    }
    let language = language.ok_or_else(|| Error::format(origin, "trial file has no pairs"))?;
    Ok(TrialFile {
        mode,
        fold_id: fold,
        language,
        pairs,
    })
}

// ---------------------------------------------------------------------------
// scores

/// Score file with similarities at six decimals; `epoch` is empty when untagged.
pub fn encode_scores(file: &ScoreFile) -> Vec<u8> {
    let mut w = writer(&SCORE_COLUMNS);
    for r in &file.records {
        let [l, g, a] = group_fields(&r.group);
        let epoch = r.epoch.map(|e| e.to_string()).unwrap_or_default();
        put(
            &mut w,
            [
                r.pair_id.to_string().as_str(),
                &r.label.bit().to_string(),
                &fixed6(r.similarity),
                l,
                g,
                a,
                &epoch,
            ],
        );
    }
    finish(w)
}

pub fn decode_scores(bytes: &[u8], origin: &Path) -> Result<ScoreFile> {
    let mut t = Table::open(bytes, origin, b',', false)?;
    let [id, lab, sim, l, g, a] = t.require_all([
        "pair_id",
        "label",
        "similarity",
        "language",
        "gender",
        "age_bucket",
    ])?;
    let ep = t.find("epoch");
    let mut records = Vec::new();
    while let Some((row, rec)) = t.next_record()? {
        let similarity: f64 = parse_num(&t, row, "similarity", field(&rec, sim))?;
        if !similarity.is_finite() {
            return Err(t.bad(row, "similarity is not finite"));
        }
        let epoch = match ep.map(|i| field(&rec, i)) {
            None | Some("") => None,
            Some(raw) => Some(parse_num(&t, row, "epoch", raw)?),
        };
        records.push(ScoreRecord {
            pair_id: parse_num(&t, row, "pair_id", field(&rec, id))?,
            label: parse_label(&t, row, field(&rec, lab))?,
            similarity,
            group: parse_group(&t, row, field(&rec, l), field(&rec, g), field(&rec, a))?,
            epoch,
        });
    }
    Ok(ScoreFile::new(records))
}

// ---------------------------------------------------------------------------
// embeddings and features

pub fn encode_embeddings(store: &EmbeddingStore) -> Vec<u8> {
    let dim = store.dim().unwrap_or(0);
    let mut columns = vec!["speaker_id".to_string(), "utterance_id".to_string()];
    columns.extend((0..dim).map(|i| format!("e{i}")));
    let header: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut w = writer(&header);
    for (key, emb) in store.iter() {
        let mut row = vec![key.speaker_id.clone(), key.utterance_id.clone()];
        row.extend(emb.as_slice().iter().map(|v| v.to_string()));
        put(&mut w, &row);
    }
    finish(w)
}

/// Reads `speaker_id,utterance_id,e0,...,e{d-1}`. Ragged rows, duplicate keys
/// and non-finite components are rejected with the offending row number.
pub fn decode_embeddings(
    bytes: &[u8],
    origin: &Path,
    source: EmbeddingSource,
) -> Result<EmbeddingStore> {
    let mut t = Table::open(bytes, origin, b',', true)?;
    let [s, u] = t.require_all(["speaker_id", "utterance_id"])?;
    if (s, u) != (0, 1) {
        return Err(Error::format(
            origin,
            "speaker_id and utterance_id must be the first two columns",
        ));
    }
    let dim = t.headers.len() - 2;
    for (i, h) in t.headers[2..].iter().enumerate() {
        if *h != format!("e{i}") {
            return Err(Error::format(
                origin,
                format!("column {} should be 'e{i}', found '{h}'", i + 3),
            ));
        }
    }
    let mut store = EmbeddingStore::new();
    while let Some((row, rec)) = t.next_record()? {
        let key = UttKey::new(field(&rec, s), field(&rec, u));
        let got = rec.len().saturating_sub(2);
        if got != dim {
            return Err(Error::core_at(
                origin,
                row,
                AcousticError::DimMismatch {
                    key,
                    expected: dim,
                    got,
                },
            ));
        }
        let values = (2..rec.len())
            .map(|i| parse_num(&t, row, &t.headers[i], field(&rec, i)))
            .collect::<Result<Vec<f64>>>()?;
        let emb = Embedding::new(values, source).map_err(|e| Error::core_at(origin, row, e))?;
        store
            .insert(key, emb)
            .map_err(|e| Error::core_at(origin, row, e))?;
    }
    Ok(store)
}

/// Per-utterance feature matrices, one row per frame.
pub fn encode_features(features: &BTreeMap<UttKey, FeatureMatrix>) -> Vec<u8> {
    let bins = features.values().next().map_or(0, FeatureMatrix::bins);
    let mut columns = vec![
        "speaker_id".to_string(),
        "utterance_id".to_string(),
        "frame".to_string(),
    ];
    columns.extend((0..bins).map(|i| format!("b{i}")));
    let header: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut w = writer(&header);
    for (key, m) in features {
        for (frame, values) in m.rows().enumerate() {
            let mut row = vec![
                key.speaker_id.clone(),
                key.utterance_id.clone(),
                frame.to_string(),
            ];
            row.extend(values.iter().map(|v| v.to_string()));
            put(&mut w, &row);
        }
    }
    finish(w)
}

pub fn decode_features(
    bytes: &[u8],
    origin: &Path,
    kind: FeatureKind,
) -> Result<BTreeMap<UttKey, FeatureMatrix>> {
    let mut t = Table::open(bytes, origin, b',', false)?;
    let [s, u, fr] = t.require_all(["speaker_id", "utterance_id", "frame"])?;
    let bins = t.headers.len() - 3;
    let mut acc: BTreeMap<UttKey, (usize, Vec<f64>)> = BTreeMap::new();
    while let Some((row, rec)) = t.next_record()? {
        let key = UttKey::new(field(&rec, s), field(&rec, u));
        let frame: usize = parse_num(&t, row, "frame", field(&rec, fr))?;
        let entry = acc.entry(key).or_default();
        if frame != entry.0 {
            return Err(t.bad(row, format!("expected frame {}, found {frame}", entry.0)));
        }
        for i in 3..rec.len() {
            entry
                .1
                .push(parse_num(&t, row, &t.headers[i], field(&rec, i))?);
        }
        entry.0 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(k, (frames, data))| (k, FeatureMatrix::from_rows(kind, frames, bins, data)))
        .collect())
}

// ---------------------------------------------------------------------------
// evaluation results

fn metric_row(w: &mut csv::Writer<Vec<u8>>, scope: &str, name: &str, m: &SliceMetrics) {
    put(
        w,
        [
            scope.to_string(),
            name.to_string(),
            m.eer.eer.to_string(),
            m.eer.threshold.to_string(),
            m.eer.far_at_t.to_string(),
            m.eer.frr_at_t.to_string(),
            m.far.to_string(),
            m.frr.to_string(),
            m.n_genuine.to_string(),
            m.n_impostor.to_string(),
        ],
    );
}

/// Slice rows first (overall, old, young, female, male), then one row per cell.
/// FAR and FRR are measured at the shared threshold, the overall EER threshold.
pub fn encode_metrics(m: &GroupMetrics) -> Vec<u8> {
    let mut w = writer(&METRIC_COLUMNS);
    for (slice, sm) in &m.slices {
        metric_row(&mut w, "slice", slice.as_str(), sm);
    }
    for (cell, sm) in &m.cells {
        metric_row(&mut w, "cell", &cell.to_string(), sm);
    }
    finish(w)
}

pub fn decode_metrics(bytes: &[u8], origin: &Path) -> Result<GroupMetrics> {
    let mut t = Table::open(bytes, origin, b',', false)?;
    let cols = t.require_all(METRIC_COLUMNS)?;
    let mut slices = BTreeMap::new();
    let mut cells = BTreeMap::new();
    while let Some((row, rec)) = t.next_record()? {
        let real = |i: usize| parse_num::<f64>(&t, row, METRIC_COLUMNS[i], field(&rec, cols[i]));
        let sm = SliceMetrics {
            eer: EerResult {
                eer: real(2)?,
                threshold: real(3)?,
                far_at_t: real(4)?,
                frr_at_t: real(5)?,
            },
            far: real(6)?,
            frr: real(7)?,
            n_genuine: parse_num(&t, row, "n_genuine", field(&rec, cols[8]))?,
            n_impostor: parse_num(&t, row, "n_impostor", field(&rec, cols[9]))?,
        };
        let name = field(&rec, cols[1]);
        match field(&rec, cols[0]) {
            "slice" => {
                let slice = Slice::parse(name)
                    .ok_or_else(|| t.bad(row, format!("unknown slice '{name}'")))?;
                slices.insert(slice, sm);
            }
            "cell" => {
                let cell = parse_group_label(name)
                    .ok_or_else(|| t.bad(row, format!("unknown cell '{name}'")))?;
                cells.insert(cell, sm);
            }
            other => {
                return Err(t.bad(
                    row,
                    format!("scope must be 'slice' or 'cell', found '{other}'"),
                ))
            }
        }
    }
    if let Some(missing) = Slice::ALL.into_iter().find(|s| !slices.contains_key(s)) {
        return Err(Error::format(
            origin,
            format!("no row for slice '{missing}'"),
        ));
    }
    Ok(GroupMetrics {
        threshold: slices[&Slice::Overall].eer.threshold,
        slices,
        cells,
    })
}

pub fn encode_disparity(d: &DisparityReport) -> Vec<u8> {
    let mut w = writer(&["group_a", "group_b", "ds"]);
    put(&mut w, ["young", "old", &d.ds_young_old.to_string()]);
    put(&mut w, ["male", "female", &d.ds_male_female.to_string()]);
    for (a, b, ds) in &d.pairwise {
        put(&mut w, [a.to_string(), b.to_string(), ds.to_string()]);
    }
    finish(w)
}
