//! Deterministic synthetic multi-speaker corpus.
//!
//! Each speaker is a fixed "vocal tract": a base pitch, three formant
//! resonators, and a spectral tilt. Each utterance index is a fixed
//! "sentence": a sequence of vowel segments with pitch movement shared by
//! every speaker. Rendering speaker `s` saying sentence `u` gives audio
//! whose content varies by `u` and whose timbre varies by `s`, which is all
//! the structure conversion training needs, with no external data.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::{write_wav_16bit, Waveform};
use crate::error::{Error, Result};
use crate::seeds::{self, tag};
use crate::training::{write_manifest, ManifestEntry};

const SAMPLE_RATE: u32 = 16000;

struct SpeakerVoice {
    base_f0: f64,
    formants: [f64; 3],
    formant_gains: [f64; 3],
    breathiness: f64,
}

fn speaker_voice(index: usize) -> SpeakerVoice {
    // Spread voices over pitch and formant space so statistics pooling can
    // tell them apart.
    let i = index as f64;
    SpeakerVoice {
        base_f0: 95.0 + 42.0 * (i % 5.0) + 7.0 * (i / 5.0).floor(),
        formants: [
            380.0 + 110.0 * (i % 4.0),
            1150.0 + 240.0 * ((i + 1.0) % 4.0),
            2300.0 + 330.0 * ((i + 2.0) % 4.0),
        ],
        formant_gains: [1.0, 0.5 + 0.12 * (i % 3.0), 0.22 + 0.08 * ((i + 1.0) % 3.0)],
        breathiness: 0.015 + 0.008 * (i % 3.0),
    }
}

struct Segment {
    frac: f64,
    vowel: usize,
    pitch_mult: f64,
}

/// The shared "sentence" for utterance index `u`: identical for every
/// speaker given the same corpus seed.
fn sentence(seed: u64, utt: usize) -> Vec<Segment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, &[tag::CORPUS, utt as u64]));
    let n = rng.random_range(4..8usize);
    let mut fracs: Vec<f64> = (0..n).map(|_| rng.random_range(0.6..1.4)).collect();
    let total: f64 = fracs.iter().sum();
    for f in &mut fracs {
        *f /= total;
    }
    fracs
        .into_iter()
        .map(|frac| Segment {
            frac,
            vowel: rng.random_range(0..3usize),
            pitch_mult: rng.random_range(0.85..1.25),
        })
        .collect()
}

/// Duration in seconds for utterance index `u` (around two seconds, varied
/// so batches exercise unequal lengths).
fn utterance_secs(utt: usize) -> f64 {
    1.5 + 0.15 * (utt % 5) as f64
}

/// Two-pole resonator bank applied in place of a vocal tract.
struct Resonator {
    b0: f64,
    a1: f64,
    a2: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq: f64, bandwidth: f64) -> Self {
        let r = (-std::f64::consts::PI * bandwidth / SAMPLE_RATE as f64).exp();
        let omega = 2.0 * std::f64::consts::PI * freq / SAMPLE_RATE as f64;
        Resonator { b0: (1.0 - r * r) * 1.0, a1: 2.0 * r * omega.cos(), a2: -(r * r), y1: 0.0, y2: 0.0 }
    }

    fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

const VOWEL_SHIFTS: [[f64; 3]; 3] = [
    [0.82, 0.90, 0.97],
    [1.0, 1.0, 1.0],
    [1.22, 1.12, 1.05],
];

/// Render one utterance for one speaker.
pub fn synthesize_utterance(seed: u64, speaker: usize, utt: usize) -> Waveform {
    let voice = speaker_voice(speaker);
    let segments = sentence(seed, utt);
    let total_samples = (utterance_secs(utt) * SAMPLE_RATE as f64) as usize;
    let mut noise_rng =
        ChaCha8Rng::seed_from_u64(seeds::derive(seed, &[tag::CORPUS, speaker as u64, utt as u64]));

    let mut samples = Vec::with_capacity(total_samples);
    let fade = (0.02 * SAMPLE_RATE as f64) as usize;
    let mut cursor = 0usize;
    for seg in &segments {
        let seg_len = ((seg.frac * total_samples as f64) as usize).max(fade * 2);
        let seg_len = seg_len.min(total_samples.saturating_sub(cursor));
        if seg_len == 0 {
            break;
        }
        let f0 = voice.base_f0 * seg.pitch_mult;
        let shifts = VOWEL_SHIFTS[seg.vowel];
        let mut bank: Vec<Resonator> = (0..3)
            .map(|i| Resonator::new(voice.formants[i] * shifts[i], 90.0 + 40.0 * i as f64))
            .collect();

        let mut phase = 0.0f64;
        for n in 0..seg_len {
            // Slow pitch glide inside the segment keeps it speech-like.
            let glide = 1.0 + 0.04 * (n as f64 / seg_len as f64 - 0.5);
            phase += f0 * glide / SAMPLE_RATE as f64;
            if phase >= 1.0 {
                phase -= 1.0;
            }
            let source = 2.0 * phase - 1.0;
            let breath = voice.breathiness * noise_rng.random_range(-1.0..1.0);
            let excitation = source * 0.6 + breath;
            let mut y = 0.0;
            for (i, res) in bank.iter_mut().enumerate() {
                y += voice.formant_gains[i] * res.process(excitation);
            }
            let env_in = (n.min(fade) as f64) / fade as f64;
            let env_out = ((seg_len - n).min(fade) as f64) / fade as f64;
            samples.push(y * env_in.min(env_out));
            cursor += 1;
        }
    }
    while samples.len() < total_samples {
        samples.push(0.0);
    }

    let peak = samples.iter().fold(0.0f64, |m, &s| m.max(s.abs())).max(1e-9);
    for s in &mut samples {
        *s *= 0.9 / peak;
    }
    Waveform { samples, sample_rate: SAMPLE_RATE }
}

/// Generate `num_speakers x utts_per_speaker` WAV files plus a manifest.
/// Identical arguments produce byte-identical output.
pub fn make_toy_corpus(
    out_dir: &Path,
    num_speakers: usize,
    utts_per_speaker: usize,
    seed: u64,
) -> Result<PathBuf> {
    if num_speakers == 0 {
        return Err(Error::Validation("num_speakers must be at least 1".into()));
    }
    if utts_per_speaker == 0 {
        return Err(Error::Validation("utts_per_speaker must be at least 1".into()));
    }
    let wav_dir = out_dir.join("wavs");
    std::fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;

    let mut entries = Vec::with_capacity(num_speakers * utts_per_speaker);
    for speaker in 0..num_speakers {
        for utt in 0..utts_per_speaker {
            let wave = synthesize_utterance(seed, speaker, utt);
            let name = format!("spk{speaker}_utt{utt}.wav");
            write_wav_16bit(&wav_dir.join(&name), &wave)?;
            entries.push(ManifestEntry {
                utterance_id: format!("spk{speaker}_utt{utt}"),
                speaker_id: format!("spk{speaker}"),
                wav_path: PathBuf::from("wavs").join(&name),
            });
        }
    }
    let manifest = out_dir.join("manifest.json");
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{load_wav, mel_spectrogram, MelConfig};
    use crate::evaluation::cosine_similarity;
    use sha2::{Digest, Sha256};

    fn dir_digest(dir: &Path) -> String {
        let mut paths: Vec<PathBuf> = walk(dir);
        paths.sort();
        let mut h = Sha256::new();
        for p in paths {
            h.update(p.strip_prefix(dir).unwrap().to_string_lossy().as_bytes());
            h.update(std::fs::read(&p).unwrap());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn walk(dir: &Path) -> Vec<PathBuf> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                out.extend(walk(&p));
            } else {
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        make_toy_corpus(d1.path(), 4, 5, 7).unwrap();
        make_toy_corpus(d2.path(), 4, 5, 7).unwrap();
        assert_eq!(dir_digest(d1.path()), dir_digest(d2.path()));

        let d3 = tempfile::tempdir().unwrap();
        make_toy_corpus(d3.path(), 4, 5, 8).unwrap();
        assert_ne!(dir_digest(d1.path()), dir_digest(d3.path()));
    }

    #[test]
    fn counts_and_format() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = make_toy_corpus(dir.path(), 2, 2, 1).unwrap();
        let entries = crate::training::read_manifest(&manifest).unwrap();
        assert_eq!(entries.len(), 4);
        for e in &entries {
            let w = load_wav(&dir.path().join(&e.wav_path)).unwrap();
            assert_eq!(w.sample_rate, 16000);
            assert!(w.duration_secs() > 1.0);
            assert!(w.peak() <= 1.0);
        }
    }

    #[test]
    fn zero_speakers_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            make_toy_corpus(dir.path(), 0, 5, 1),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            make_toy_corpus(dir.path(), 2, 0, 1),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn speakers_are_spectrally_separable() {
        // Mean Mel spectra should be closer within a speaker than across
        // speakers, otherwise the toy corpus cannot support the evaluation.
        let cfg = MelConfig::default();
        let mean_mel = |spk: usize, utt: usize| -> Vec<f64> {
            let w = synthesize_utterance(3, spk, utt);
            let mel = mel_spectrogram(&w, &cfg).unwrap();
            (0..mel.num_bins())
                .map(|j| mel.values.column(j).sum() / mel.num_frames() as f64)
                .collect()
        };
        let mut within = Vec::new();
        let mut across = Vec::new();
        let profiles: Vec<Vec<Vec<f64>>> =
            (0..3).map(|s| (0..3).map(|u| mean_mel(s, u)).collect()).collect();
        for s in 0..3 {
            for u1 in 0..3 {
                for u2 in (u1 + 1)..3 {
                    within.push(cosine_similarity(&profiles[s][u1], &profiles[s][u2]).unwrap());
                }
                for s2 in (s + 1)..3 {
                    across.push(cosine_similarity(&profiles[s][u1], &profiles[s2][u1]).unwrap());
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&within) > mean(&across),
            "within {} <= across {}",
            mean(&within),
            mean(&across)
        );
    }

    #[test]
    fn content_is_shared_across_speakers() {
        // The same utterance index must yield the same segment structure.
        let a = sentence(9, 2);
        let b = sentence(9, 2);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.vowel, y.vowel);
            assert_eq!(x.pitch_mult, y.pitch_mult);
            assert_eq!(x.frac, y.frac);
        }
        let c = sentence(9, 3);
        assert!(a.len() != c.len() || a.iter().zip(c.iter()).any(|(x, y)| x.vowel != y.vowel));
    }
}
