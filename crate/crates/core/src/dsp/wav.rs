//! WAV reading and writing.

use std::path::Path;

use super::{resample, Waveform};
use crate::error::{Error, Result};

/// Read a WAV file as a mono waveform at its native rate. Multichannel audio
/// is averaged to mono.
pub fn load_wav(path: &Path) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path)
        .map_err(|e| Error::Decode { path: path.into(), reason: e.to_string() })?;
    let spec = reader.spec();
    let channels = spec.channels as usize;

    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Decode { path: path.into(), reason: e.to_string() })?,
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Decode { path: path.into(), reason: e.to_string() })?
        }
    };

    if interleaved.is_empty() {
        return Err(Error::EmptyInput(format!("{} contains no samples", path.display())));
    }

    let frames = interleaved.len() / channels;
    let mut mono = Vec::with_capacity(frames);
    for f in 0..frames {
        let sum: f64 = interleaved[f * channels..(f + 1) * channels].iter().sum();
        mono.push(sum / channels as f64);
    }
    Waveform::new(mono, spec.sample_rate)
}

/// Load a WAV file, downmix to mono, resample to `target_rate`, and cap the
/// peak at 1.
pub fn load_and_resample(path: &Path, target_rate: u32) -> Result<Waveform> {
    let raw = load_wav(path)?;
    let samples = if raw.sample_rate == target_rate {
        raw.samples
    } else {
        resample(&raw.samples, raw.sample_rate, target_rate)
    };
    let mut w = Waveform::new(samples, target_rate)?;
    let peak = w.peak();
    if peak > 1.0 {
        for s in &mut w.samples {
            *s /= peak;
        }
    }
    Ok(w)
}

/// Write a mono waveform as 16-bit PCM.
pub fn write_wav_16bit(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    for &s in &w.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer
            .write_sample(v)
            .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    }
    writer
        .finalize()
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    Ok(())
}
