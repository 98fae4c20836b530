//! Log-Mel spectrogram extraction.

use ndarray::Array2;

use super::{stft_magnitude, Waveform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub num_bins: usize,
    pub hop_length: usize,
    pub win_length: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// Floor applied before the log: `ln(max(x, log_floor))`.
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            sample_rate: 16000,
            num_bins: 80,
            hop_length: 256,
            win_length: 1024,
            fmin: 0.0,
            fmax: 8000.0,
            log_floor: 1e-5,
        }
    }
}

/// Log-amplitude Mel energies, `[num_frames, num_bins]`.
///
/// Values are quantized to f32 precision at extraction time so feature files
/// (f32 on disk) round-trip bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Array2<f64>,
    pub sample_rate: u32,
    pub hop_length: usize,
    pub win_length: usize,
}

impl MelSpectrogram {
    pub fn num_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.values.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_frames() == 0 {
            return Err(Error::EmptyInput("mel spectrogram has no frames".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput("mel spectrogram has non-finite entries".into()));
        }
        Ok(())
    }
}

fn hz_to_mel(f: f64) -> f64 {
    // Slaney scale: linear below 1 kHz, logarithmic above.
    let f_sp = 200.0 / 3.0;
    let min_log_hz = 1000.0;
    let min_log_mel = min_log_hz / f_sp;
    let logstep = (6.4f64).ln() / 27.0;
    if f >= min_log_hz {
        min_log_mel + (f / min_log_hz).ln() / logstep
    } else {
        f / f_sp
    }
}

fn mel_to_hz(m: f64) -> f64 {
    let f_sp = 200.0 / 3.0;
    let min_log_hz = 1000.0;
    let min_log_mel = min_log_hz / f_sp;
    let logstep = (6.4f64).ln() / 27.0;
    if m >= min_log_mel {
        min_log_hz * (logstep * (m - min_log_mel)).exp()
    } else {
        f_sp * m
    }
}

/// Triangular Mel filterbank `[num_bins, win/2 + 1]` with Slaney area
/// normalization.
pub fn mel_filterbank(cfg: &MelConfig) -> Array2<f64> {
    let n_fft = cfg.win_length;
    let n_freqs = n_fft / 2 + 1;
    let mel_min = hz_to_mel(cfg.fmin);
    let mel_max = hz_to_mel(cfg.fmax);
    let edges: Vec<f64> = (0..cfg.num_bins + 2)
        .map(|i| mel_to_hz(mel_min + (mel_max - mel_min) * i as f64 / (cfg.num_bins + 1) as f64))
        .collect();

    let mut fb = Array2::zeros((cfg.num_bins, n_freqs));
    for m in 0..cfg.num_bins {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (right - left);
        for k in 0..n_freqs {
            let f = k as f64 * cfg.sample_rate as f64 / n_fft as f64;
            let up = (f - left) / (center - left);
            let down = (right - f) / (right - center);
            let w = up.min(down).max(0.0);
            fb[[m, k]] = w * norm;
        }
    }
    fb
}

/// Log-Mel spectrogram of a 16 kHz waveform.
pub fn mel_spectrogram(w: &Waveform, cfg: &MelConfig) -> Result<MelSpectrogram> {
    if w.sample_rate != cfg.sample_rate {
        return Err(Error::ConfigMismatch(format!(
            "waveform rate {} does not match the configured {}",
            w.sample_rate, cfg.sample_rate
        )));
    }
    if w.samples.is_empty() {
        return Err(Error::EmptyInput("cannot extract features from empty audio".into()));
    }

    let mag = stft_magnitude(&w.samples, cfg.win_length, cfg.hop_length);
    let fb = mel_filterbank(cfg);
    let mel = mag.dot(&fb.t());
    let values = mel.mapv(|x| {
        let v = x.max(cfg.log_floor).ln();
        // Quantize through f32 so on-disk features are exact.
        v as f32 as f64
    });

    Ok(MelSpectrogram {
        values,
        sample_rate: cfg.sample_rate,
        hop_length: cfg.hop_length,
        win_length: cfg.win_length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(len: usize, freq: f64, rate: u32) -> Waveform {
        let samples = (0..len)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect();
        Waveform::new(samples, rate).unwrap()
    }

    #[test]
    fn one_second_is_63_by_80() {
        let mel = mel_spectrogram(&tone(16000, 440.0, 16000), &MelConfig::default()).unwrap();
        assert_eq!(mel.values.dim(), (63, 80));
    }

    #[test]
    fn one_hop_is_two_frames() {
        let mel = mel_spectrogram(&tone(256, 440.0, 16000), &MelConfig::default()).unwrap();
        assert_eq!(mel.values.dim(), (2, 80));
    }

    #[test]
    fn zeros_hit_the_log_floor() {
        let w = Waveform { samples: vec![0.0; 16000], sample_rate: 16000 };
        let mel = mel_spectrogram(&w, &MelConfig::default()).unwrap();
        let floor = (1e-5f64.ln() as f32) as f64;
        assert!(mel.values.iter().all(|&v| v == floor));
    }

    #[test]
    fn wrong_sample_rate_is_refused() {
        let w = tone(8000, 440.0, 8000);
        let err = mel_spectrogram(&w, &MelConfig::default()).unwrap_err();
        assert!(matches!(err, Error::ConfigMismatch(_)));
    }

    #[test]
    fn extraction_is_deterministic() {
        let w = tone(10000, 523.25, 16000);
        let a = mel_spectrogram(&w, &MelConfig::default()).unwrap();
        let b = mel_spectrogram(&w, &MelConfig::default()).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn all_entries_finite_for_quiet_noise() {
        let samples: Vec<f64> =
            (0..5000u64).map(|i| ((i * 2654435761) % 1000) as f64 * 1e-9).collect();
        let w = Waveform::new(samples, 16000).unwrap();
        let mel = mel_spectrogram(&w, &MelConfig::default()).unwrap();
        assert!(mel.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn filterbank_rows_cover_passband() {
        let fb = mel_filterbank(&MelConfig::default());
        assert_eq!(fb.dim(), (80, 513));
        for (i, row) in fb.rows().into_iter().enumerate() {
            assert!(row.sum() > 0.0, "filter {i} is empty");
        }
    }

    #[test]
    fn tone_energy_concentrates_near_expected_mel_band() {
        let mel = mel_spectrogram(&tone(16000, 440.0, 16000), &MelConfig::default()).unwrap();
        let mid = mel.values.row(31);
        let peak_bin = mid
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        // 440 Hz sits in the lower quarter of an 80-band 0-8 kHz Mel axis.
        assert!(peak_bin < 25, "peak bin {peak_bin}");
    }
}
