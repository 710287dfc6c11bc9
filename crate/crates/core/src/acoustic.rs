//! Acoustic front-ends and utterance embeddings.
//!
//! Two feature kinds are produced from a 16 kHz mono [`Waveform`]: the
//! magnitude spectrogram and the log-mel filterbank (HTK mel scale). The
//! baseline embedder pools log-mel frames into per-band statistics; any
//! other model's embeddings can be brought in through [`EmbeddingStore`].

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use thiserror::Error;

use crate::trials::UttKey;

/// Sample rate every waveform is brought to before feature extraction.
pub const TARGET_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcousticError {
    #[error("audio has no samples")]
    EmptyAudio,
    #[error("invalid sample rate {0} Hz")]
    InvalidSampleRate(u32),
    #[error("invalid channel count {0}")]
    InvalidChannels(usize),
    #[error("audio sample {0} is not finite")]
    NonFiniteSample(usize),
    #[error("audio has {samples} samples, shorter than one {window}-sample window")]
    TooShort { samples: usize, window: usize },
    #[error("invalid feature configuration: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} features, got {got}")]
    WrongFeatureKind {
        expected: FeatureKind,
        got: FeatureKind,
    },
    #[error("{0} frame(s) given; pooling needs at least 2")]
    TooFewFrames(usize),
    #[error("embedding is empty")]
    EmptyEmbedding,
    #[error("embedding component {0} is not finite")]
    NonFiniteEmbedding(usize),
    #[error("embedding for {key} has dimension {got}, store dimension is {expected}")]
    DimMismatch {
        key: UttKey,
        expected: usize,
        got: usize,
    },
    #[error("duplicate embedding for {0}")]
    DuplicateEmbedding(UttKey),
}

/// Mono audio with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AcousticError> {
        if sample_rate == 0 {
            return Err(AcousticError::InvalidSampleRate(sample_rate));
        }
        if samples.is_empty() {
            return Err(AcousticError::EmptyAudio);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AcousticError::NonFiniteSample(i));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    /// Averages interleaved channels down to mono.
    pub fn from_interleaved(
        interleaved: &[f64],
        channels: usize,
        sample_rate: u32,
    ) -> Result<Self, AcousticError> {
        if channels == 0 {
            return Err(AcousticError::InvalidChannels(channels));
        }
        let mono = interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect();
        Self::new(mono, sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Linear-interpolation resampling. Output length is `round(n * to / from)`.
    pub fn resample_linear(&self, to: u32) -> Result<Self, AcousticError> {
        if to == 0 {
            return Err(AcousticError::InvalidSampleRate(to));
        }
        if to == self.sample_rate {
            return Ok(self.clone());
        }
        let n = self.samples.len() as u64;
        let from = self.sample_rate as u64;
        let out_len = ((n * to as u64 + from / 2) / from).max(1) as usize;
        let step = self.sample_rate as f64 / to as f64;
        let last = self.samples.len() - 1;
        let samples = (0..out_len)
            .map(|i| {
                let pos = i as f64 * step;
                let lo = (pos as usize).min(last);
                let hi = (lo + 1).min(last);
                let frac = pos - lo as f64;
                self.samples[lo] * (1.0 - frac) + self.samples[hi] * frac
            })
            .collect();
        Self::new(samples, to)
    }

    /// Brings the waveform to [`TARGET_SAMPLE_RATE`].
    pub fn normalized(self) -> Result<Self, AcousticError> {
        if self.sample_rate == TARGET_SAMPLE_RATE {
            Ok(self)
        } else {
            self.resample_linear(TARGET_SAMPLE_RATE)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowFn {
    Hamming,
    Hann,
    Rectangular,
}

impl WindowFn {
    /// Symmetric window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![1.0];
        }
        let denom = (n - 1) as f64;
        (0..n)
            .map(|i| {
                let c = libm::cos(2.0 * PI * i as f64 / denom);
                match self {
                    WindowFn::Hamming => 0.54 - 0.46 * c,
                    WindowFn::Hann => 0.5 - 0.5 * c,
                    WindowFn::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub window_ms: u32,
    pub hop_ms: u32,
    pub fft_size: usize,
    pub n_mels: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub log_floor: f64,
    pub window_fn: WindowFn,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            window_ms: 25,
            hop_ms: 10,
            fft_size: 512,
            n_mels: 40,
            fmin_hz: 0.0,
            fmax_hz: 8000.0,
            log_floor: 1e-10,
            window_fn: WindowFn::Hamming,
        }
    }
}

impl FeatureConfig {
    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (self.window_ms as u64 * sample_rate as u64 / 1000) as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop_ms as u64 * sample_rate as u64 / 1000) as usize
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn validate(&self, sample_rate: u32) -> Result<(), AcousticError> {
        let bad = |msg: String| Err(AcousticError::InvalidConfig(msg));
        let window = self.window_samples(sample_rate);
        let hop = self.hop_samples(sample_rate);
        if hop == 0 || window == 0 {
            return bad(alloc::format!(
                "window {} ms / hop {} ms round to zero samples",
                self.window_ms,
                self.hop_ms
            ));
        }
        if self.window_ms < self.hop_ms {
            return bad(alloc::format!(
                "window {} ms shorter than hop {} ms",
                self.window_ms,
                self.hop_ms
            ));
        }
        if !self.fft_size.is_power_of_two() {
            return bad(alloc::format!(
                "fft_size {} is not a power of two",
                self.fft_size
            ));
        }
        if self.fft_size < window {
            return bad(alloc::format!(
                "fft_size {} shorter than the {window}-sample window",
                self.fft_size
            ));
        }
        if self.n_mels == 0 {
            return bad("n_mels must be positive".into());
        }
        let nyquist = sample_rate as f64 / 2.0;
        if !(self.fmin_hz >= 0.0 && self.fmin_hz < self.fmax_hz && self.fmax_hz <= nyquist) {
            return bad(alloc::format!(
                "need 0 <= fmin < fmax <= {nyquist} Hz, got {}..{}",
                self.fmin_hz,
                self.fmax_hz
            ));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return bad("log_floor must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Spectrogram,
    LogMel,
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::Spectrogram => "spectrogram",
            FeatureKind::LogMel => "logmel",
        })
    }
}

/// Frames × bins, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub kind: FeatureKind,
    frames: usize,
    bins: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    /// Panics if `data.len() != frames * bins`.
    pub fn from_rows(kind: FeatureKind, frames: usize, bins: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            frames * bins,
            "feature data does not match its shape"
        );
        FeatureMatrix {
            kind,
            frames,
            bins,
            data,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        &self.data[frame * self.bins..(frame + 1) * self.bins]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.bins.max(1))
    }

    pub fn get(&self, frame: usize, bin: usize) -> f64 {
        self.data[frame * self.bins + bin]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// `floor((n - window) / hop) + 1` for `n >= window`.
pub fn frame_count(n_samples: usize, window: usize, hop: usize) -> usize {
    if n_samples < window || hop == 0 {
        0
    } else {
        (n_samples - window) / hop + 1
    }
}

/// In-place iterative radix-2 FFT with precomputed twiddles.
struct Fft {
    n: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Fft {
    fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        let half = n / 2;
        let (cos, sin) = (0..half)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                (libm::cos(a), libm::sin(a))
            })
            .unzip();
        Fft { n, cos, sin }
    }

    fn run(&self, re: &mut [f64], im: &mut [f64]) {
        let n = self.n;
        let bits = n.trailing_zeros();
        if bits > 0 {
            for i in 0..n {
                let j = i.reverse_bits() >> (usize::BITS - bits);
                if i < j {
                    re.swap(i, j);
                    im.swap(i, j);
                }
            }
        }
        let mut len = 2;
        while len <= n {
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..len / 2 {
                    let (wr, wi) = (self.cos[k * stride], self.sin[k * stride]);
                    let a = start + k;
                    let b = a + len / 2;
                    let tr = re[b] * wr - im[b] * wi;
                    let ti = re[b] * wi + im[b] * wr;
                    re[b] = re[a] - tr;
                    im[b] = im[a] - ti;
                    re[a] += tr;
                    im[a] += ti;
                }
            }
            len <<= 1;
        }
    }
}

fn check_input(wave: &Waveform, cfg: &FeatureConfig) -> Result<(usize, usize), AcousticError> {
    cfg.validate(wave.sample_rate())?;
    let window = cfg.window_samples(wave.sample_rate());
    let hop = cfg.hop_samples(wave.sample_rate());
    if wave.len() < window {
        return Err(AcousticError::TooShort {
            samples: wave.len(),
            window,
        });
    }
    Ok((window, hop))
}

/// Per-frame |X(k)|^2 or |X(k)| for k in 0..=fft_size/2.
fn stft(wave: &Waveform, cfg: &FeatureConfig, power: bool) -> Result<FeatureMatrix, AcousticError> {
    let (window, hop) = check_input(wave, cfg)?;
    let frames = frame_count(wave.len(), window, hop);
    let bins = cfg.n_bins();
    let coeffs = cfg.window_fn.coefficients(window);
    let fft = Fft::new(cfg.fft_size);
    let mut re = vec![0.0; cfg.fft_size];
    let mut im = vec![0.0; cfg.fft_size];
    let mut data = Vec::with_capacity(frames * bins);
    for f in 0..frames {
        let chunk = &wave.samples()[f * hop..f * hop + window];
        re.iter_mut().for_each(|x| *x = 0.0);
        im.iter_mut().for_each(|x| *x = 0.0);
        for (dst, (s, w)) in re.iter_mut().zip(chunk.iter().zip(&coeffs)) {
            *dst = s * w;
        }
        fft.run(&mut re, &mut im);
        data.extend((0..bins).map(|k| {
            let p = re[k] * re[k] + im[k] * im[k];
            if power {
                p
            } else {
                libm::sqrt(p)
            }
        }));
    }
    Ok(FeatureMatrix::from_rows(
        FeatureKind::Spectrogram,
        frames,
        bins,
        data,
    ))
}

/// Magnitude short-time Fourier transform, `fft_size / 2 + 1` bins per frame.
pub fn spectrogram(wave: &Waveform, cfg: &FeatureConfig) -> Result<FeatureMatrix, AcousticError> {
    stft(wave, cfg, false)
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * libm::log10(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (libm::pow(10.0, mel / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the HTK mel scale.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    /// `n_mels + 2` edge frequencies in Hz; filter `m` spans edges `m..=m+2`.
    edges_hz: Vec<f64>,
    /// `n_mels` rows of `n_bins` weights.
    weights: Vec<Vec<f64>>,
}

impl MelFilterbank {
    pub fn new(cfg: &FeatureConfig, sample_rate: u32) -> Self {
        let lo = hz_to_mel(cfg.fmin_hz);
        let hi = hz_to_mel(cfg.fmax_hz);
        let n_edges = cfg.n_mels + 2;
        let edges_hz: Vec<f64> = (0..n_edges)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_edges - 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / cfg.fft_size as f64;
        let weights = (0..cfg.n_mels)
            .map(|m| {
                let (l, c, r) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
                (0..cfg.n_bins())
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        let rising = (f - l) / (c - l);
                        let falling = (r - f) / (r - c);
                        rising.min(falling).max(0.0)
                    })
                    .collect()
            })
            .collect();
        MelFilterbank { edges_hz, weights }
    }

    pub fn n_mels(&self) -> usize {
        self.weights.len()
    }

    pub fn center_hz(&self, band: usize) -> f64 {
        self.edges_hz[band + 1]
    }

    pub fn edges_hz(&self) -> &[f64] {
        &self.edges_hz
    }

    /// Filter energies of one power-spectrum frame.
    pub fn apply<'a>(&'a self, power: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        self.weights
            .iter()
            .map(move |w| w.iter().zip(power).map(|(a, b)| a * b).sum())
    }
}

/// Natural log of mel-filtered power spectra, floored at `log_floor`.
pub fn logmel(wave: &Waveform, cfg: &FeatureConfig) -> Result<FeatureMatrix, AcousticError> {
    let power = stft(wave, cfg, true)?;
    let bank = MelFilterbank::new(cfg, wave.sample_rate());
    let floor = cfg.log_floor;
    let mut data = Vec::with_capacity(power.frames() * cfg.n_mels);
    for row in power.rows() {
        data.extend(bank.apply(row).map(|e| libm::log(e.max(floor))));
    }
    Ok(FeatureMatrix::from_rows(
        FeatureKind::LogMel,
        power.frames(),
        cfg.n_mels,
        data,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingSource {
    Baseline,
    External,
    Synthetic,
}

impl EmbeddingSource {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingSource::Baseline => "baseline",
            EmbeddingSource::External => "external",
            EmbeddingSource::Synthetic => "synthetic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    vector: Vec<f64>,
    pub source: EmbeddingSource,
}

impl Embedding {
    pub fn new(vector: Vec<f64>, source: EmbeddingSource) -> Result<Self, AcousticError> {
        if vector.is_empty() {
            return Err(AcousticError::EmptyEmbedding);
        }
        if let Some(i) = vector.iter().position(|v| !v.is_finite()) {
            return Err(AcousticError::NonFiniteEmbedding(i));
        }
        Ok(Embedding { vector, source })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vector
    }
}

/// Pools a log-mel matrix into `2 * n_mels` values: after subtracting the
/// utterance-wide mean, the per-band mean followed by the per-band
/// (population) standard deviation.
pub fn baseline_embed(features: &FeatureMatrix) -> Result<Embedding, AcousticError> {
    if features.kind != FeatureKind::LogMel {
        return Err(AcousticError::WrongFeatureKind {
            expected: FeatureKind::LogMel,
            got: features.kind,
        });
    }
    let frames = features.frames();
    if frames < 2 {
        return Err(AcousticError::TooFewFrames(frames));
    }
    let bins = features.bins();
    let n = frames as f64;
    let global = features.data().iter().sum::<f64>() / (n * bins as f64);
    let mut mean = vec![0.0; bins];
    for row in features.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v - global;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; bins];
    for row in features.rows() {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - global - m;
            *s += d * d;
        }
    }
    let std = var.into_iter().map(|s| libm::sqrt(s / n));
    let mut vector = mean.clone();
    vector.extend(std);
    Embedding::new(vector, EmbeddingSource::Baseline)
}

/// Embeddings keyed by utterance, all of one dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingStore {
    dim: Option<usize>,
    entries: BTreeMap<UttKey, Embedding>,
}

impl EmbeddingStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: UttKey, embedding: Embedding) -> Result<(), AcousticError> {
        match self.dim {
            Some(d) if d != embedding.dim() => {
                return Err(AcousticError::DimMismatch {
                    key,
                    expected: d,
                    got: embedding.dim(),
                })
            }
            _ => {}
        }
        if self.entries.contains_key(&key) {
            return Err(AcousticError::DuplicateEmbedding(key));
        }
        self.dim = Some(embedding.dim());
        self.entries.insert(key, embedding);
        Ok(())
    }

    pub fn get(&self, key: &UttKey) -> Option<&Embedding> {
        self.entries.get(key)
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&UttKey, &Embedding)> {
        self.entries.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn tone(freq: f64, seconds: f64, rate: u32, amp: f64) -> Waveform {
        let n = (seconds * rate as f64) as usize;
        let samples = (0..n)
            .map(|i| amp * libm::sin(2.0 * PI * freq * i as f64 / rate as f64))
            .collect();
        Waveform::new(samples, rate).unwrap()
    }

    /// Direct O(N^2) DFT magnitude of one windowed frame.
    fn dft_magnitudes(frame: &[f64], n_fft: usize) -> Vec<f64> {
        (0..=n_fft / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, x) in frame.iter().enumerate() {
                    let a = -2.0 * PI * (k * t) as f64 / n_fft as f64;
                    re += x * libm::cos(a);
                    im += x * libm::sin(a);
                }
                libm::sqrt(re * re + im * im)
            })
            .collect()
    }

    #[test]
    fn one_second_gives_98_frames() {
        assert_eq!(frame_count(16_000, 400, 160), 98);
        let cfg = FeatureConfig::default();
        let w = tone(300.0, 1.0, 16_000, 0.5);
        let s = spectrogram(&w, &cfg).unwrap();
        assert_eq!((s.frames(), s.bins()), (98, 257));
        let m = logmel(&w, &cfg).unwrap();
        assert_eq!((m.frames(), m.bins()), (98, 40));
    }

    #[test]
    fn silence() {
        let cfg = FeatureConfig::default();
        let w = Waveform::new(vec![0.0; 16_000], 16_000).unwrap();
        assert!(spectrogram(&w, &cfg)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        let floor = libm::log(1e-10);
        assert!(logmel(&w, &cfg).unwrap().data().iter().all(|&v| v == floor));
    }

    #[test]
    fn fft_matches_direct_dft() {
        let cfg = FeatureConfig::default();
        let w = tone(1000.0, 0.1, 16_000, 0.8);
        let s = spectrogram(&w, &cfg).unwrap();
        let coeffs = WindowFn::Hamming.coefficients(400);
        let frame: Vec<f64> = w.samples()[160..560]
            .iter()
            .zip(&coeffs)
            .map(|(a, b)| a * b)
            .collect();
        let oracle = dft_magnitudes(&frame, 512);
        for (a, b) in s.row(1).iter().zip(&oracle) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        // 1 kHz sits exactly on bin 1000 / (16000 / 512) = 32
        for row in s.rows() {
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax, 32);
        }
    }

    #[test]
    fn tone_lands_in_its_mel_band() {
        let cfg = FeatureConfig::default();
        let bank = MelFilterbank::new(&cfg, 16_000);
        // oracle: band whose centre is nearest 440 Hz on the mel axis
        let target = hz_to_mel(440.0);
        let expected = (0..bank.n_mels())
            .min_by(|&a, &b| {
                let da = (hz_to_mel(bank.center_hz(a)) - target).abs();
                let db = (hz_to_mel(bank.center_hz(b)) - target).abs();
                da.total_cmp(&db)
            })
            .unwrap();
        let m = logmel(&tone(440.0, 1.0, 16_000, 0.5), &cfg).unwrap();
        for row in m.rows() {
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax, expected);
        }
    }

    #[test]
    fn mel_scale_round_trip() {
        assert_abs_diff_eq!(hz_to_mel(700.0), 2595.0 * libm::log10(2.0), epsilon = 1e-12);
        for hz in [0.0, 100.0, 1000.0, 8000.0] {
            assert_abs_diff_eq!(mel_to_hz(hz_to_mel(hz)), hz, epsilon = 1e-9);
        }
        let bank = MelFilterbank::new(&FeatureConfig::default(), 16_000);
        assert_abs_diff_eq!(bank.edges_hz()[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(*bank.edges_hz().last().unwrap(), 8000.0, epsilon = 1e-6);
    }

    #[test]
    fn too_short_and_bad_config() {
        let cfg = FeatureConfig::default();
        let w = Waveform::new(vec![0.1; 399], 16_000).unwrap();
        assert_eq!(
            spectrogram(&w, &cfg).unwrap_err(),
            AcousticError::TooShort {
                samples: 399,
                window: 400
            }
        );
        let w = Waveform::new(vec![0.1; 400], 16_000).unwrap();
        assert_eq!(logmel(&w, &cfg).unwrap().frames(), 1);
        let mut bad = cfg.clone();
        bad.fft_size = 256;
        assert!(matches!(
            spectrogram(&w, &bad),
            Err(AcousticError::InvalidConfig(_))
        ));
        let mut bad = cfg.clone();
        bad.fmax_hz = 9000.0;
        assert!(matches!(
            spectrogram(&w, &bad),
            Err(AcousticError::InvalidConfig(_))
        ));
        let mut bad = cfg;
        bad.hop_ms = 30;
        assert!(matches!(
            spectrogram(&w, &bad),
            Err(AcousticError::InvalidConfig(_))
        ));
    }

    #[test]
    fn waveform_construction() {
        assert_eq!(
            Waveform::new(vec![], 16_000),
            Err(AcousticError::EmptyAudio)
        );
        assert_eq!(
            Waveform::new(vec![0.0], 0),
            Err(AcousticError::InvalidSampleRate(0))
        );
        let w = Waveform::from_interleaved(&[1.0, 0.0, -0.5, 0.5], 2, 16_000).unwrap();
        assert_eq!(w.samples(), &[0.5, 0.0]);
    }

    #[test]
    fn resampling_lengths() {
        let w = Waveform::new(vec![0.0; 16_000], 16_000).unwrap();
        assert_eq!(w.clone().normalized().unwrap().len(), 16_000);
        let w8 = tone(200.0, 1.0, 8_000, 0.5);
        let up = w8.clone().normalized().unwrap();
        assert_eq!((up.len(), up.sample_rate()), (16_000, 16_000));
        // even output samples coincide with the input samples
        for i in 0..100 {
            assert_abs_diff_eq!(up.samples()[2 * i], w8.samples()[i], epsilon = 1e-12);
        }
        let w44 = Waveform::new(vec![0.25; 44_100], 44_100).unwrap();
        assert_eq!(w44.normalized().unwrap().len(), 16_000);
    }

    #[test]
    fn baseline_embedding_shapes() {
        let constant = FeatureMatrix::from_rows(FeatureKind::LogMel, 5, 40, vec![-3.0; 200]);
        let e = baseline_embed(&constant).unwrap();
        assert_eq!(e.dim(), 80);
        assert!(e.as_slice().iter().all(|&v| v == 0.0));

        let single = FeatureMatrix::from_rows(FeatureKind::LogMel, 1, 40, vec![0.0; 40]);
        assert_eq!(baseline_embed(&single), Err(AcousticError::TooFewFrames(1)));
        let spec = FeatureMatrix::from_rows(FeatureKind::Spectrogram, 3, 2, vec![0.0; 6]);
        assert!(matches!(
            baseline_embed(&spec),
            Err(AcousticError::WrongFeatureKind { .. })
        ));
    }

    #[test]
    fn baseline_embedding_hand_fixture() {
        // 3 frames x 2 bands; global mean 3
        // band 0: 1, 2, 3 -> centred -2, -1, 0 -> mean -1, var 2/3
        // band 1: 4, 4, 4 -> centred 1, 1, 1 -> mean 1, var 0
        let m = FeatureMatrix::from_rows(
            FeatureKind::LogMel,
            3,
            2,
            vec![1.0, 4.0, 2.0, 4.0, 3.0, 4.0],
        );
        let e = baseline_embed(&m).unwrap();
        let expected = [-1.0, 1.0, libm::sqrt(2.0 / 3.0), 0.0];
        for (a, b) in e.as_slice().iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        // duplicating every frame leaves the pooled statistics unchanged
        let dup = FeatureMatrix::from_rows(
            FeatureKind::LogMel,
            6,
            2,
            vec![1.0, 4.0, 1.0, 4.0, 2.0, 4.0, 2.0, 4.0, 3.0, 4.0, 3.0, 4.0],
        );
        let e2 = baseline_embed(&dup).unwrap();
        for (a, b) in e.as_slice().iter().zip(e2.as_slice()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn store_rules() {
        let mut store = EmbeddingStore::new();
        let e = |v: Vec<f64>| Embedding::new(v, EmbeddingSource::External).unwrap();
        for i in 0..3 {
            store
                .insert(
                    UttKey::new("s", &alloc::format!("u{i}")),
                    e(vec![1.0, 2.0, 3.0, 4.0]),
                )
                .unwrap();
        }
        assert_eq!((store.len(), store.dim()), (3, Some(4)));
        assert!(matches!(
            store.insert(UttKey::new("t", "u"), e(vec![1.0; 5])),
            Err(AcousticError::DimMismatch {
                expected: 4,
                got: 5,
                ..
            })
        ));
        assert!(matches!(
            store.insert(UttKey::new("s", "u0"), e(vec![1.0; 4])),
            Err(AcousticError::DuplicateEmbedding(_))
        ));
        assert_eq!(
            Embedding::new(vec![1.0, f64::NAN], EmbeddingSource::External),
            Err(AcousticError::NonFiniteEmbedding(1))
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn frame_formula(n in 400usize..5000, hop_ms in 1u32..25) {
            let cfg = FeatureConfig { hop_ms, ..FeatureConfig::default() };
            let w = Waveform::new(vec![0.01; n], 16_000).unwrap();
            let hop = (hop_ms * 16) as usize;
            let s = spectrogram(&w, &cfg).unwrap();
            prop_assert_eq!(s.frames(), (n - 400) / hop + 1);
        }

        #[test]
        fn scaling_laws(seed in any::<u64>(), alpha in 0.1f64..4.0) {
            use rand::Rng;
            let mut rng = crate::rng::rng_from(seed);
            let x: Vec<f64> = (0..1200).map(|_| rng.random_range(-0.2..0.2)).collect();
            let cfg = FeatureConfig::default();
            let a = Waveform::new(x.clone(), 16_000).unwrap();
            let b = Waveform::new(x.iter().map(|v| v * alpha).collect(), 16_000).unwrap();
            let (sa, sb) = (spectrogram(&a, &cfg).unwrap(), spectrogram(&b, &cfg).unwrap());
            for (p, q) in sa.data().iter().zip(sb.data()) {
                prop_assert!((p * alpha - q).abs() <= 1e-9 * (1.0 + q.abs()));
            }
            let (la, lb) = (logmel(&a, &cfg).unwrap(), logmel(&b, &cfg).unwrap());
            let floor = libm::log(cfg.log_floor);
            for (p, q) in la.data().iter().zip(lb.data()) {
                if *p > floor + 1.0 && *q > floor + 1.0 {
                    prop_assert!((p + 2.0 * libm::log(alpha) - q).abs() < 1e-8);
                }
            }
        }

        #[test]
        fn embedding_ignores_frame_order(seed in any::<u64>(), frames in 2usize..12) {
            use rand::seq::SliceRandom;
            use rand::Rng;
            let mut rng = crate::rng::rng_from(seed);
            let bins = 4;
            let rows: Vec<Vec<f64>> = (0..frames)
                .map(|_| (0..bins).map(|_| rng.random_range(-5.0..5.0)).collect())
                .collect();
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rng);
            let a = FeatureMatrix::from_rows(FeatureKind::LogMel, frames, bins, rows.concat());
            let b = FeatureMatrix::from_rows(FeatureKind::LogMel, frames, bins, shuffled.concat());
            let (ea, eb) = (baseline_embed(&a).unwrap(), baseline_embed(&b).unwrap());
            for (p, q) in ea.as_slice().iter().zip(eb.as_slice()) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }
    }
}
