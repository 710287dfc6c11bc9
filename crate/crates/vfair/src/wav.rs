//! RIFF/WAV decoding into 16 kHz mono waveforms.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use vfair_core::acoustic::{AcousticError, Waveform};

use crate::error::{Error, Result};

fn wav_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Wav {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Decodes integer PCM (8 to 32 bit) or 32-bit float audio, scales integer
/// samples by 2^(bits-1), averages channels and resamples to 16 kHz.
pub fn load_wav(path: &Path) -> Result<Waveform> {
    let reader = WavReader::open(path).map_err(|e| wav_err(path, e.to_string()))?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ 1..=32) => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / scale))
                .collect::<Result<_, _>>()
                .map_err(|e| wav_err(path, e.to_string()))?
        }
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| wav_err(path, e.to_string()))?,
        (format, bits) => {
            return Err(wav_err(
                path,
                format!("unsupported encoding: {bits}-bit {format:?}"),
            ))
        }
    };
    if interleaved.is_empty() {
        return Err(Error::core(path, AcousticError::EmptyAudio));
    }
    Waveform::from_interleaved(&interleaved, usize::from(spec.channels), spec.sample_rate)
        .and_then(Waveform::normalized)
        .map_err(|e| Error::core(path, e))
}

/// Writes mono 16-bit PCM, clipping samples to [-1, 1].
pub fn write_pcm16(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).map_err(|e| wav_err(path, e.to_string()))?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_sample(v)
            .map_err(|e| wav_err(path, e.to_string()))?;
    }
    w.finalize().map_err(|e| wav_err(path, e.to_string()))
}
