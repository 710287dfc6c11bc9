//! TOML run configuration.
//!
//! ```toml
//! seed = 7
//! data_root = "audio"            # wav paths in manifests are relative to this
//! out = "runs"
//!
//! [languages]                    # one manifest per language
//! english = "manifests/english.csv"
//!
//! [manifest]
//! delimiter = ","
//! min_utterances = 2
//!
//! [split]
//! n_folds = 3
//! test_users_per_group = 25
//! split_age = 40
//!
//! [trials]
//! n_same = 64
//! n_diff = 64
//!
//! [features]                     # any subset of the front-end parameters
//! n_mels = 40
//! kind = "logmel"                # or "spectrogram"
//!
//! [embedding]
//! source = "baseline"            # or "import:<path>"
//!
//! [synth]
//! dim = 64
//! spread = 0.5
//! spread_per_group = { "english/old-male" = 0.9 }
//!
//! [report]
//! train_id = "baseline"
//! accuracy = 91.5
//!
//! [training]                     # accepted for compatibility, ignored
//! epochs = 30
//! ```
//!
//! Relative paths are resolved against the directory holding the config
//! file. The `VFAIR_DATA_ROOT` environment variable overrides `data_root`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use vfair_core::acoustic::{FeatureConfig, FeatureKind, WindowFn};
use vfair_core::splits::SplitConfig;
use vfair_core::synth::{GroupScoreParams, GroupScoreSpec, SpreadSpec};
use vfair_core::trials::TrialConfig;
use vfair_core::{GroupKey, Language};

use crate::error::{Error, Result};
use crate::formats::{parse_group_label, ManifestOptions};

pub const DATA_ROOT_ENV: &str = "VFAIR_DATA_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default = "default_data_root")]
    pub data_root: PathBuf,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub languages: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub manifest: ManifestSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub trials: TrialSection,
    #[serde(default)]
    pub features: FeatureSection,
    #[serde(default)]
    pub embedding: EmbeddingSection,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub report: ReportSection,
    #[serde(default, skip_serializing)]
    pub training: Option<toml::Table>,
}

fn default_data_root() -> PathBuf {
    PathBuf::from(".")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManifestSection {
    pub delimiter: char,
    pub min_utterances: usize,
}

impl Default for ManifestSection {
    fn default() -> Self {
        ManifestSection {
            delimiter: ',',
            min_utterances: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub n_folds: u32,
    pub test_users_per_group: usize,
    pub split_age: u32,
}

impl Default for SplitSection {
    fn default() -> Self {
        let c = SplitConfig::new(0);
        SplitSection {
            n_folds: c.n_folds,
            test_users_per_group: c.test_users_per_group,
            split_age: c.split_age,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialSection {
    pub n_same: usize,
    pub n_diff: usize,
}

impl Default for TrialSection {
    fn default() -> Self {
        let c = TrialConfig::new(0);
        TrialSection {
            n_same: c.n_same,
            n_diff: c.n_diff,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSection {
    pub window_ms: Option<u32>,
    pub hop_ms: Option<u32>,
    pub fft_size: Option<usize>,
    pub n_mels: Option<usize>,
    pub fmin_hz: Option<f64>,
    pub fmax_hz: Option<f64>,
    pub log_floor: Option<f64>,
    pub window_fn: Option<String>,
    pub kind: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingSection {
    pub source: String,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            source: "baseline".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub dim: usize,
    pub spread: f64,
    pub spread_per_group: BTreeMap<String, f64>,
    pub scores: Option<ScoreSynthSection>,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            dim: 64,
            spread: 0.5,
            spread_per_group: BTreeMap::new(),
            scores: None,
        }
    }
}

/// Gaussian score model: defaults for every cell, optional per-cell overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSynthSection {
    pub genuine_mean: f64,
    pub genuine_sd: f64,
    pub impostor_mean: f64,
    pub impostor_sd: f64,
    pub n_genuine: usize,
    pub n_impostor: usize,
    #[serde(default)]
    pub per_group: BTreeMap<String, ScoreParamsOverride>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreParamsOverride {
    pub genuine_mean: Option<f64>,
    pub genuine_sd: Option<f64>,
    pub impostor_mean: Option<f64>,
    pub impostor_sd: Option<f64>,
    pub n_genuine: Option<usize>,
    pub n_impostor: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    pub train_id: Option<String>,
    /// Training accuracy in percent, shown in the "Acc." column.
    pub accuracy: Option<f64>,
}

/// Where `embed` takes its vectors from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbeddingChoice {
    Baseline,
    Import(PathBuf),
}

impl RunConfig {
    /// Parses TOML text, returning warnings for ignored keys.
    pub fn parse(text: &str) -> Result<(Self, Vec<String>)> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut warnings = Vec::new();
        if let Some(t) = cfg.training.as_ref().filter(|t| !t.is_empty()) {
            let keys: Vec<&str> = t.keys().map(String::as_str).collect();
            warnings.push(format!(
                "config: [training] keys are ignored because this toolkit does not train models: {}",
                keys.join(", ")
            ));
        }
        Ok((cfg, warnings))
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<String>)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn split_config(&self, seed: u64) -> SplitConfig {
        SplitConfig {
            seed,
            test_users_per_group: self.split.test_users_per_group,
            n_folds: self.split.n_folds,
            split_age: self.split.split_age,
        }
    }

    pub fn trial_config(&self, seed: u64) -> TrialConfig {
        TrialConfig {
            n_same: self.trials.n_same,
            n_diff: self.trials.n_diff,
            seed,
        }
    }

    pub fn manifest_options(&self) -> Result<ManifestOptions> {
        let d = self.manifest.delimiter;
        if !d.is_ascii() || d == '"' || d == '\n' {
            return Err(Error::Config(format!(
                "manifest.delimiter must be one ASCII character, found {d:?}"
            )));
        }
        Ok(ManifestOptions {
            delimiter: d as u8,
            split_age: self.split.split_age,
        })
    }

    pub fn feature_config(&self) -> Result<(FeatureConfig, FeatureKind)> {
        let f = &self.features;
        let mut c = FeatureConfig::default();
        c.window_ms = f.window_ms.unwrap_or(c.window_ms);
        c.hop_ms = f.hop_ms.unwrap_or(c.hop_ms);
        c.fft_size = f.fft_size.unwrap_or(c.fft_size);
        c.n_mels = f.n_mels.unwrap_or(c.n_mels);
        c.fmin_hz = f.fmin_hz.unwrap_or(c.fmin_hz);
        c.fmax_hz = f.fmax_hz.unwrap_or(c.fmax_hz);
        c.log_floor = f.log_floor.unwrap_or(c.log_floor);
        if let Some(w) = &f.window_fn {
            c.window_fn = match w.to_lowercase().as_str() {
                "hamming" => WindowFn::Hamming,
                "hann" => WindowFn::Hann,
                "rectangular" => WindowFn::Rectangular,
                other => {
                    return Err(Error::Config(format!(
                        "features.window_fn must be hamming, hann or rectangular, found '{other}'"
                    )))
                }
            };
        }
        let kind = match f.kind.as_deref().map(str::to_lowercase).as_deref() {
            None | Some("logmel") => FeatureKind::LogMel,
            Some("spectrogram") => FeatureKind::Spectrogram,
            Some(other) => {
                return Err(Error::Config(format!(
                    "features.kind must be logmel or spectrogram, found '{other}'"
                )))
            }
        };
        c.validate(vfair_core::acoustic::TARGET_SAMPLE_RATE)
            .map_err(|e| Error::Config(format!("features: {e}")))?;
        Ok((c, kind))
    }

    pub fn embedding_choice(&self) -> Result<EmbeddingChoice> {
        let s = self.embedding.source.trim();
        if s == "baseline" {
            Ok(EmbeddingChoice::Baseline)
        } else if let Some(p) = s.strip_prefix("import:").filter(|p| !p.is_empty()) {
            Ok(EmbeddingChoice::Import(PathBuf::from(p)))
        } else {
            Err(Error::Config(format!(
                "embedding.source must be 'baseline' or 'import:<path>', found '{s}'"
            )))
        }
    }

    pub fn spread_spec(&self) -> Result<SpreadSpec> {
        let mut per_group = BTreeMap::new();
        for (label, &v) in &self.synth.spread_per_group {
            per_group.insert(group_label(label, "synth.spread_per_group")?, v);
        }
        Ok(SpreadSpec {
            default: self.synth.spread,
            per_group,
        })
    }

    /// Score model over every cell of `languages`, or `None` when not configured.
    pub fn score_spec(&self, languages: &[Language]) -> Result<Option<GroupScoreSpec>> {
        let Some(s) = &self.synth.scores else {
            return Ok(None);
        };
        let mut overrides = BTreeMap::new();
        for (label, o) in &s.per_group {
            overrides.insert(group_label(label, "synth.scores.per_group")?, o);
        }
        let mut spec = GroupScoreSpec::new();
        for lang in languages {
            for cell in GroupKey::cells(lang) {
                let o = overrides.remove(&cell).cloned().unwrap_or_default();
                let p = GroupScoreParams {
                    genuine_mean: o.genuine_mean.unwrap_or(s.genuine_mean),
                    genuine_sd: o.genuine_sd.unwrap_or(s.genuine_sd),
                    impostor_mean: o.impostor_mean.unwrap_or(s.impostor_mean),
                    impostor_sd: o.impostor_sd.unwrap_or(s.impostor_sd),
                    n_genuine: o.n_genuine.unwrap_or(s.n_genuine),
                    n_impostor: o.n_impostor.unwrap_or(s.n_impostor),
                };
                spec.insert(cell, p)
                    .map_err(|e| Error::Config(format!("synth.scores: {e}")))?;
            }
        }
        if let Some(cell) = overrides.keys().next() {
            return Err(Error::Config(format!(
                "synth.scores.per_group names {cell}, which is not a cell of the selected languages"
            )));
        }
        Ok(Some(spec))
    }

    /// Digest of everything that shapes the artifacts apart from seed and fold:
    /// the effective settings, the selected languages and the manifest bytes.
    pub fn digest(&self, languages: &[Language], manifest_bytes: &[Vec<u8>]) -> String {
        #[derive(Serialize)]
        struct Input<'a> {
            config: &'a RunConfig,
            languages: Vec<&'a str>,
            manifests: Vec<String>,
        }
        let mut normalized = self.clone();
        normalized.seed = None;
        let input = Input {
            config: &normalized,
            languages: languages.iter().map(Language::as_str).collect(),
            manifests: manifest_bytes.iter().map(|b| sha256_hex(b)).collect(),
        };
        let json = serde_json::to_vec(&input).expect("config serializes");
        sha256_hex(&json)[..16].to_string()
    }
}

fn group_label(label: &str, key: &str) -> Result<GroupKey> {
    parse_group_label(label).ok_or_else(|| {
        Error::Config(format!(
            "{key}: '{label}' is not a cell label like 'english/old-female'"
        ))
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
