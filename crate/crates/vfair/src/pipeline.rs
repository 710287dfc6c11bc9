//! Pipeline stages and the on-disk run layout.
//!
//! ```text
//! <out>/<config-hash>-seed<seed>/
//!     ingest/<lang>.csv, group_counts.csv
//!     fold<k>/split/roster.csv, train<r>_<lang>.csv, train<r>_<l1>+<l2>.csv
//!     fold<k>/trials/<lang>_test<m>.csv
//!     fold<k>/extract/<lang>.<kind>.csv
//!     fold<k>/embed/embeddings.csv
//!     fold<k>/score/<lang>_test<m>.csv, synthetic.csv
//!     fold<k>/eval/<name>.metrics.csv, <name>.disparity.csv
//!     fold<k>/report/<train>__<test>__fold<k>.{md,csv}
//!     fold<k>/series/<name>.csv
//! ```
//!
//! Every artifact has a `.prov.json` sidecar. Stages read only what earlier
//! stages wrote, so external embeddings can be dropped in at `embed/`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use vfair_core::acoustic::{self, baseline_embed, EmbeddingSource, EmbeddingStore, FeatureKind};
use vfair_core::manifest::DatasetIndex;
use vfair_core::metrics::{epoch_series, evaluate};
use vfair_core::rng;
use vfair_core::scoring::{score_trials, ScoreProvenance};
use vfair_core::splits::{
    build_train_unbalanced, build_train_user_balanced, build_train_utterance_balanced,
    merge_language_splits, select_test_roster, TestRoster, TrainRecipe, TrainSplit,
};
use vfair_core::synth::{synth_embeddings, synth_scores};
use vfair_core::trials::{gen_trials, validate_trials, TestMode, UttKey};
use vfair_core::Language;

use crate::artifact::{self, input_ref, sidecar_path, InputRef, Provenance, TOOLKIT_VERSION};
use crate::config::{sha256_hex, EmbeddingChoice, RunConfig, DATA_ROOT_ENV};
use crate::error::{Error, Result};
use crate::formats::{self, ManifestOptions};
use crate::report::{emit_series, emit_table, report_file_name, ResultRow, TableFormat};
use crate::wav::load_wav;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Split,
    Trials,
    Extract,
    Embed,
    Synth,
    Score,
    Eval,
    Report,
    Series,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Ingest,
        Stage::Split,
        Stage::Trials,
        Stage::Extract,
        Stage::Embed,
        Stage::Synth,
        Stage::Score,
        Stage::Eval,
        Stage::Report,
        Stage::Series,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Split => "split",
            Stage::Trials => "trials",
            Stage::Extract => "extract",
            Stage::Embed => "embed",
            Stage::Synth => "synth",
            Stage::Score => "score",
            Stage::Eval => "eval",
            Stage::Report => "report",
            Stage::Series => "series",
        }
    }

    /// Directory the stage writes into. `embed` and `synth` share `embed/`.
    fn dir_name(self) -> &'static str {
        match self {
            Stage::Synth => "embed",
            s => s.as_str(),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage '{s}'")))
    }
}

/// Command-line level choices layered over the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config_path: PathBuf,
    pub seed: Option<u64>,
    pub fold: u32,
    /// Empty means all three.
    pub modes: Vec<TestMode>,
    /// Empty means all three.
    pub recipes: Vec<TrainRecipe>,
    /// Empty means every language in the config.
    pub languages: Vec<String>,
    pub out: Option<PathBuf>,
    pub force: bool,
    /// Replaces `data_root`; the CLI fills it from the environment.
    pub data_root: Option<PathBuf>,
}

impl RunOptions {
    pub fn new(config_path: impl Into<PathBuf>) -> Self {
        RunOptions {
            config_path: config_path.into(),
            ..Default::default()
        }
    }

    pub fn data_root_from_env(mut self) -> Self {
        if let Some(v) = std::env::var_os(DATA_ROOT_ENV).filter(|v| !v.is_empty()) {
            self.data_root = Some(PathBuf::from(v));
        }
        self
    }
}

/// A resolved run: configuration, selection and output location.
#[derive(Debug)]
pub struct Run {
    cfg: RunConfig,
    seed: u64,
    fold: u32,
    modes: Vec<TestMode>,
    recipes: Vec<TrainRecipe>,
    languages: Vec<Language>,
    manifests: BTreeMap<Language, (String, Vec<u8>)>,
    data_root: PathBuf,
    import_path: Option<PathBuf>,
    run_dir: PathBuf,
    config_hash: String,
    force: bool,
    warnings: Vec<String>,
}

fn pick<T: Clone>(given: &[T], all: &[T]) -> Vec<T> {
    if given.is_empty() { all } else { given }.to_vec()
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Run {
    pub fn open(opts: &RunOptions) -> Result<Run> {
        let (mut cfg, warnings) = RunConfig::load(&opts.config_path)?;
        let base = opts
            .config_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let seed = opts.seed.or(cfg.seed).ok_or_else(|| {
            Error::Config("a seed is mandatory: set `seed` in the config or pass --seed".into())
        })?;
        if cfg.split.n_folds == 0 {
            return Err(Error::Config("split.n_folds must be at least 1".into()));
        }
        if opts.fold >= cfg.split.n_folds {
            return Err(Error::Config(format!(
                "fold {} is out of range: the config declares {} fold(s)",
                opts.fold, cfg.split.n_folds
            )));
        }
        if cfg.languages.is_empty() {
            return Err(Error::Config(
                "[languages] must list at least one manifest".into(),
            ));
        }
        let configured: BTreeMap<Language, &PathBuf> = cfg
            .languages
            .iter()
            .map(|(k, v)| (Language::new(k), v))
            .collect();
        let languages: Vec<Language> = if opts.languages.is_empty() {
            configured.keys().cloned().collect()
        } else {
            let mut picked: Vec<Language> =
                opts.languages.iter().map(|l| Language::new(l)).collect();
            picked.sort();
            picked.dedup();
            if let Some(l) = picked.iter().find(|l| !configured.contains_key(*l)) {
                return Err(Error::Config(format!(
                    "language '{l}' has no manifest under [languages]"
                )));
            }
            picked
        };
        let mut manifests = BTreeMap::new();
        for lang in &languages {
            let given = configured[lang];
            let path = resolve(&base, given);
            let bytes = std::fs::read(&path).map_err(|e| {
                Error::Config(format!("manifest for {lang} at {}: {e}", path.display()))
            })?;
            manifests.insert(lang.clone(), (given.to_string_lossy().into_owned(), bytes));
        }
        if let Some(root) = &opts.data_root {
            cfg.data_root = root.clone();
        }
        let data_root = resolve(&base, &cfg.data_root);
        if !data_root.is_dir() {
            return Err(Error::Config(format!(
                "data_root {} is not a directory",
                data_root.display()
            )));
        }
        let import_path = match cfg.embedding_choice()? {
            EmbeddingChoice::Baseline => None,
            EmbeddingChoice::Import(p) => {
                let p = resolve(&base, &p);
                if !p.is_file() {
                    return Err(Error::Config(format!(
                        "embedding import file {} does not exist",
                        p.display()
                    )));
                }
                Some(p)
            }
        };
        // Fail early on malformed sections rather than halfway through a stage.
        cfg.manifest_options()?;
        cfg.feature_config()?;
        cfg.spread_spec()?;
        cfg.score_spec(&languages)?;

        let bytes: Vec<Vec<u8>> = manifests.values().map(|(_, b)| b.clone()).collect();
        let config_hash = cfg.digest(&languages, &bytes);
        let out = opts
            .out
            .clone()
            .or_else(|| cfg.out.as_ref().map(|o| resolve(&base, o)))
            .unwrap_or_else(|| PathBuf::from("runs"));
        let run_dir = out.join(format!("{config_hash}-seed{seed}"));
        Ok(Run {
            seed,
            fold: opts.fold,
            modes: pick(&opts.modes, &TestMode::ALL),
            recipes: pick(&opts.recipes, &TrainRecipe::ALL),
            languages,
            manifests,
            data_root,
            import_path,
            run_dir,
            config_hash,
            force: opts.force,
            warnings,
            cfg,
        })
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn languages(&self) -> &[Language] {
        &self.languages
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        match stage {
            Stage::Ingest => self.run_dir.join("ingest"),
            s => self
                .run_dir
                .join(format!("fold{}", self.fold))
                .join(s.dir_name()),
        }
    }

    fn fold_seed(&self) -> u64 {
        self.cfg.split_config(self.seed).fold_seed(self.fold)
    }

    /// Runs one stage and returns the artifacts it wrote or confirmed.
    /// `series_inputs` and `series_name` are only used by [`Stage::Series`].
    pub fn execute(
        &self,
        stage: Stage,
        series_inputs: &[PathBuf],
        series_name: &str,
    ) -> Result<Vec<PathBuf>> {
        let mut out = Outputs::new(self, stage);
        match stage {
            Stage::Ingest => self.ingest(&mut out)?,
            Stage::Split => self.split(&mut out)?,
            Stage::Trials => self.trials(&mut out)?,
            Stage::Extract => self.extract(&mut out)?,
            Stage::Embed => self.embed(&mut out)?,
            Stage::Synth => self.synth(&mut out)?,
            Stage::Score => self.score(&mut out)?,
            Stage::Eval => self.eval(&mut out)?,
            Stage::Report => self.report(&mut out)?,
            Stage::Series => self.series(&mut out, series_inputs, series_name)?,
        }
        Ok(out.written)
    }

    // ----- inputs

    /// Reads an artifact produced by `stage`, mapping absence to a dependency error.
    fn need(&self, stage: Stage, path: &Path) -> Result<(Vec<u8>, InputRef)> {
        match std::fs::read(path) {
            Ok(bytes) => {
                let r = input_ref(&self.run_dir, path, &bytes);
                Ok((bytes, r))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingStage {
                stage: stage.as_str(),
                path: path.to_path_buf(),
            }),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    fn ingested_index(&self, refs: &mut Vec<InputRef>) -> Result<DatasetIndex> {
        let opts = ManifestOptions {
            delimiter: b',',
            split_age: self.cfg.split.split_age,
        };
        let mut index = DatasetIndex::empty(opts.split_age);
        for lang in &self.languages {
            let path = self.stage_dir(Stage::Ingest).join(format!("{lang}.csv"));
            let (bytes, r) = self.need(Stage::Ingest, &path)?;
            refs.push(r);
            let part = formats::decode_manifest(&bytes, &path, lang, &opts)?;
            index = index.merge(&part).map_err(|e| Error::core(&path, e))?;
        }
        Ok(index)
    }

    fn roster(&self, refs: &mut Vec<InputRef>) -> Result<TestRoster> {
        let path = self.stage_dir(Stage::Split).join("roster.csv");
        let (bytes, r) = self.need(Stage::Split, &path)?;
        refs.push(r);
        let roster = formats::decode_roster(&bytes, &path, self.fold)?;
        Ok(roster)
    }

    fn trial_name(lang: &Language, mode: TestMode) -> String {
        format!("{lang}_test{}", mode.number())
    }

    /// Whether a score or eval file named `stem` belongs to the selection.
    fn selected(&self, stem: &str) -> bool {
        for lang in &self.languages {
            for mode in TestMode::ALL {
                if stem == Self::trial_name(lang, mode) {
                    return self.modes.contains(&mode);
                }
            }
        }
        !self
            .cfg
            .languages
            .keys()
            .any(|l| stem.starts_with(&format!("{}_test", Language::new(l))))
    }

    /// Sorted `(stem, path)` of the selected artifacts in a stage directory
    /// whose names end in `suffix`. A missing directory lists as empty.
    fn listing(&self, stage: Stage, suffix: &str) -> Result<Vec<(String, PathBuf)>> {
        let dir = self.stage_dir(stage);
        let entries = match std::fs::read_dir(&dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&dir, e)),
        };
        let mut found = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            let name = path
                .file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            if name.starts_with('.') || artifact::is_sidecar(&path) {
                continue;
            }
            if let Some(stem) = name.strip_suffix(suffix) {
                if self.selected(stem) {
                    found.push((stem.to_string(), path));
                }
            }
        }
        found.sort();
        Ok(found)
    }

    // ----- stages

    fn ingest(&self, out: &mut Outputs) -> Result<()> {
        let opts = self.cfg.manifest_options()?;
        let mut merged = DatasetIndex::empty(opts.split_age);
        for lang in &self.languages {
            let (given, bytes) = &self.manifests[lang];
            let origin = Path::new(given);
            let mut index = formats::decode_manifest(bytes, origin, lang, &opts)?;
            if self.cfg.manifest.min_utterances > 0 {
                index = index.filter_min_utterances(self.cfg.manifest.min_utterances);
            }
            let input = InputRef {
                path: given.clone(),
                sha256: sha256_hex(bytes),
            };
            out.emit(
                &format!("{lang}.csv"),
                formats::encode_manifest(&index),
                vec![input],
                vec![],
            )?;
            merged = merged.merge(&index).map_err(|e| Error::core(origin, e))?;
        }
        let refs = out.written_refs();
        out.emit(
            "group_counts.csv",
            formats::encode_group_counts(&merged),
            refs,
            vec![],
        )
    }

    fn split(&self, out: &mut Outputs) -> Result<()> {
        let mut refs = Vec::new();
        let index = self.ingested_index(&mut refs)?;
        let scfg = self.cfg.split_config(self.seed);
        let roster = select_test_roster(&index, &scfg, self.fold).map_err(Error::from_core)?;
        out.emit(
            "roster.csv",
            formats::encode_roster(&roster),
            refs.clone(),
            vec![],
        )?;
        for &recipe in &self.recipes {
            let full = match recipe {
                TrainRecipe::UserBalanced => build_train_user_balanced(&index, &roster, &scfg),
                TrainRecipe::Unbalanced => build_train_unbalanced(&index, &roster),
                TrainRecipe::UtteranceBalanced => {
                    build_train_utterance_balanced(&index, &roster, &scfg)
                }
            }
            .map_err(Error::from_core)?;
            let per_language: Vec<TrainSplit> =
                self.languages.iter().map(|l| full.restrict_to(l)).collect();
            for (lang, split) in self.languages.iter().zip(&per_language) {
                let name = format!("train{}_{lang}.csv", recipe.number());
                out.emit(&name, formats::encode_split(split), refs.clone(), vec![])?;
            }
            if per_language.len() > 1 {
                let seed = rng::derive(self.fold_seed(), u64::from(recipe.number()));
                let merged =
                    merge_language_splits(&per_language, seed).map_err(Error::from_core)?;
                let names: Vec<&str> = self.languages.iter().map(Language::as_str).collect();
                let name = format!("train{}_{}.csv", recipe.number(), names.join("+"));
                out.emit(&name, formats::encode_split(&merged), refs.clone(), vec![])?;
            }
        }
        Ok(())
    }

    fn trials(&self, out: &mut Outputs) -> Result<()> {
        let mut refs = Vec::new();
        let index = self.ingested_index(&mut refs)?;
        let roster = self.roster(&mut refs)?;
        let tcfg = self.cfg.trial_config(self.fold_seed());
        for lang in &self.languages {
            let sub = roster.restrict_to(lang);
            for &mode in &self.modes {
                let file = gen_trials(&sub, &index, mode, &tcfg).map_err(Error::from_core)?;
                let violations = validate_trials(&file, &sub, &index, tcfg.n_same, tcfg.n_diff);
                if let Some(v) = violations.first() {
                    return Err(Error::Config(format!(
                        "trials: generated {lang} {mode} file failed validation: {v}"
                    )));
                }
                let name = format!("{}.csv", Self::trial_name(lang, mode));
                out.emit(&name, formats::encode_trials(&file), refs.clone(), vec![])?;
            }
        }
        Ok(())
    }

    fn extract(&self, out: &mut Outputs) -> Result<()> {
        let mut refs = Vec::new();
        let index = self.ingested_index(&mut refs)?;
        let roster = self.roster(&mut refs)?;
        let (fcfg, kind) = self.cfg.feature_config()?;
        for lang in &self.languages {
            let mut features = BTreeMap::new();
            for (_, speaker) in roster.restrict_to(lang).speakers() {
                let record = index.get(speaker).ok_or_else(|| {
                    Error::Config(format!(
                        "extract: roster speaker {speaker} is not in the ingested index"
                    ))
                })?;
                for u in &record.utterances {
                    let path = self.data_root.join(&u.audio_path);
                    let wave = load_wav(&path)?;
                    let m = match kind {
                        FeatureKind::LogMel => acoustic::logmel(&wave, &fcfg),
                        FeatureKind::Spectrogram => acoustic::spectrogram(&wave, &fcfg),
                    }
                    .map_err(|e| Error::core(&path, e))?;
                    features.insert(UttKey::new(speaker, &u.utterance_id), m);
                }
            }
            let name = format!("{lang}.{kind}.csv");
            let notes = vec![format!(
                "audio read from data_root {}",
                self.cfg.data_root.display()
            )];
            out.emit(
                &name,
                formats::encode_features(&features),
                refs.clone(),
                notes,
            )?;
        }
        Ok(())
    }

    fn embed(&self, out: &mut Outputs) -> Result<()> {
        let mut refs = Vec::new();
        let (store, source) = match &self.import_path {
            Some(path) => {
                let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
                refs.push(InputRef {
                    path: self.cfg.embedding.source.clone(),
                    sha256: sha256_hex(&bytes),
                });
                (
                    formats::decode_embeddings(&bytes, path, EmbeddingSource::External)?,
                    "import",
                )
            }
            None => {
                let (_, kind) = self.cfg.feature_config()?;
                let mut store = EmbeddingStore::new();
                for lang in &self.languages {
                    let path = self
                        .stage_dir(Stage::Extract)
                        .join(format!("{lang}.{kind}.csv"));
                    let (bytes, r) = self.need(Stage::Extract, &path)?;
                    refs.push(r);
                    for (key, m) in formats::decode_features(&bytes, &path, kind)? {
                        let e = baseline_embed(&m).map_err(|e| Error::core(&path, e))?;
                        store.insert(key, e).map_err(|e| Error::core(&path, e))?;
                    }
                }
                (store, "baseline")
            }
        };
        let notes = vec![source_note(source)];
        out.emit(
            "embeddings.csv",
            formats::encode_embeddings(&store),
            refs,
            notes,
        )
    }

    fn synth(&self, out: &mut Outputs) -> Result<()> {
        let mut refs = Vec::new();
        let index = self.ingested_index(&mut refs)?;
        let roster = self.roster(&mut refs)?;
        let seed = self.fold_seed();
        let spread = self.cfg.spread_spec()?;
        let store = synth_embeddings(&roster, &index, self.cfg.synth.dim, &spread, seed)
            .map_err(Error::from_core)?;
        let notes = vec![source_note("synthetic")];
        out.emit(
            "embeddings.csv",
            formats::encode_embeddings(&store),
            refs,
            notes,
        )?;
        if let Some(spec) = self.cfg.score_spec(&self.languages)? {
            let scores = synth_scores(&spec, seed);
            let path = self.stage_dir(Stage::Score).join("synthetic.csv");
            out.emit_at(
                &path,
                formats::encode_scores(&scores),
                vec![],
                vec![source_note("synthetic scores")],
            )?;
        }
        Ok(())
    }

    fn score(&self, out: &mut Outputs) -> Result<()> {
        let emb_path = self.stage_dir(Stage::Embed).join("embeddings.csv");
        let (bytes, emb_ref) = self.need(Stage::Embed, &emb_path)?;
        let store = formats::decode_embeddings(&bytes, &emb_path, EmbeddingSource::External)?;
        let notes: Vec<String> = read_notes(&emb_path);
        for lang in &self.languages {
            for &mode in &self.modes {
                let name = Self::trial_name(lang, mode);
                let path = self.stage_dir(Stage::Trials).join(format!("{name}.csv"));
                let (tbytes, tref) = self.need(Stage::Trials, &path)?;
                let trials = formats::decode_trials(&tbytes, &path, mode, self.fold)?;
                let provenance = ScoreProvenance {
                    train_split_id: String::new(),
                    trial_file_id: name.clone(),
                    embedding_source: notes.first().cloned().unwrap_or_default(),
                };
                let scores =
                    score_trials(&trials, &store, provenance).map_err(|e| Error::core(&path, e))?;
                out.emit(
                    &format!("{name}.csv"),
                    formats::encode_scores(&scores),
                    vec![emb_ref.clone(), tref],
                    notes.clone(),
                )?;
            }
        }
        Ok(())
    }

    fn eval(&self, out: &mut Outputs) -> Result<()> {
        let files = self.listing(Stage::Score, ".csv")?;
        if files.is_empty() {
            return Err(Error::MissingStage {
                stage: Stage::Score.as_str(),
                path: self.stage_dir(Stage::Score),
            });
        }
        for (stem, path) in files {
            let (bytes, r) = self.need(Stage::Score, &path)?;
            let scores = formats::decode_scores(&bytes, &path)?;
            let (metrics, disparity) = evaluate(&scores).map_err(|e| Error::core(&path, e))?;
            let notes = read_notes(&path);
            out.emit(
                &format!("{stem}.metrics.csv"),
                formats::encode_metrics(&metrics),
                vec![r.clone()],
                notes.clone(),
            )?;
            out.emit(
                &format!("{stem}.disparity.csv"),
                formats::encode_disparity(&disparity),
                vec![r],
                notes,
            )?;
        }
        Ok(())
    }

    fn report(&self, out: &mut Outputs) -> Result<()> {
        let files = self.listing(Stage::Eval, ".metrics.csv")?;
        if files.is_empty() {
            return Err(Error::MissingStage {
                stage: Stage::Eval.as_str(),
                path: self.stage_dir(Stage::Eval),
            });
        }
        let mut rows = Vec::new();
        let mut refs = Vec::new();
        for (stem, path) in files {
            let (bytes, r) = self.need(Stage::Eval, &path)?;
            let metrics = formats::decode_metrics(&bytes, &path)?;
            let train_id = match &self.cfg.report.train_id {
                Some(id) => id.clone(),
                None => read_notes(&path)
                    .iter()
                    .find_map(|n| n.strip_prefix(SOURCE_NOTE))
                    .map(|s| s.replace(' ', "-"))
                    .unwrap_or_else(|| "unknown".into()),
            };
            let row = ResultRow::from_metrics(&train_id, &stem, self.cfg.report.accuracy, &metrics);
            for format in [TableFormat::Markdown, TableFormat::Csv] {
                let text = emit_table(std::slice::from_ref(&row), format)?;
                let name = report_file_name(&train_id, &stem, self.fold, format);
                out.emit(&name, text.into_bytes(), vec![r.clone()], vec![])?;
            }
            rows.push(row);
            refs.push(r);
        }
        if rows.len() > 1 {
            for format in [TableFormat::Markdown, TableFormat::Csv] {
                let text = emit_table(&rows, format)?;
                let name = format!("summary__fold{}.{}", self.fold, format.extension());
                out.emit(&name, text.into_bytes(), refs.clone(), vec![])?;
            }
        }
        Ok(())
    }

    fn series(&self, out: &mut Outputs, inputs: &[PathBuf], name: &str) -> Result<()> {
        if inputs.is_empty() {
            return Err(Error::Config(
                "series: pass the epoch-tagged score files to combine".into(),
            ));
        }
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(Error::Config(format!(
                "series: '{name}' is not a valid file name"
            )));
        }
        let mut files = Vec::new();
        let mut refs = Vec::new();
        for path in inputs {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            refs.push(InputRef {
                path: path
                    .file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned(),
                sha256: sha256_hex(&bytes),
            });
            files.push(formats::decode_scores(&bytes, path)?);
        }
        let series = epoch_series(&files).map_err(Error::from_core)?;
        out.emit(
            &format!("{name}.csv"),
            emit_series(&series)?.into_bytes(),
            refs,
            vec![],
        )
    }
}

const SOURCE_NOTE: &str = "embedding source: ";

fn source_note(source: &str) -> String {
    format!("{SOURCE_NOTE}{source}")
}

/// Notes of an artifact's sidecar, or none when it has no readable sidecar.
fn read_notes(artifact: &Path) -> Vec<String> {
    std::fs::read(sidecar_path(artifact))
        .ok()
        .and_then(|b| serde_json::from_slice::<Provenance>(&b).ok())
        .map(|p| p.notes)
        .unwrap_or_default()
}

impl Error {
    fn from_core(e: impl Into<vfair_core::Error>) -> Self {
        Error::CoreBare(e.into())
    }
}

/// Collects the artifacts written by one stage.
struct Outputs<'a> {
    run: &'a Run,
    stage: Stage,
    written: Vec<PathBuf>,
    refs: Vec<InputRef>,
}

impl<'a> Outputs<'a> {
    fn new(run: &'a Run, stage: Stage) -> Self {
        Outputs {
            run,
            stage,
            written: Vec::new(),
            refs: Vec::new(),
        }
    }

    fn written_refs(&self) -> Vec<InputRef> {
        self.refs.clone()
    }

    fn emit(
        &mut self,
        name: &str,
        bytes: Vec<u8>,
        inputs: Vec<InputRef>,
        notes: Vec<String>,
    ) -> Result<()> {
        let path = self.run.stage_dir(self.stage).join(name);
        self.emit_at(&path, bytes, inputs, notes)
    }

    fn emit_at(
        &mut self,
        path: &Path,
        bytes: Vec<u8>,
        inputs: Vec<InputRef>,
        notes: Vec<String>,
    ) -> Result<()> {
        let run = self.run;
        let prov = Provenance {
            artifact: artifact::relative(&run.run_dir, path),
            stage: self.stage.as_str().to_string(),
            config_hash: run.config_hash.clone(),
            seed: run.seed,
            fold: (self.stage != Stage::Ingest).then_some(run.fold),
            toolkit_version: TOOLKIT_VERSION.to_string(),
            sha256: sha256_hex(&bytes),
            inputs,
            notes,
        };
        artifact::write_atomic(path, &bytes, run.force)?;
        artifact::write_atomic(&sidecar_path(path), &prov.to_bytes(), run.force)?;
        self.refs.push(input_ref(&run.run_dir, path, &bytes));
        self.written.push(path.to_path_buf());
        Ok(())
    }
}
