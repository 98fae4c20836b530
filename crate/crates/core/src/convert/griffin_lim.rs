//! Mel inversion and iterative phase reconstruction.
//!
//! The Mel filterbank is inverted by projected gradient descent (nonnegative
//! least squares per frame, run jointly as one matrix problem), then the
//! classic alternating magnitude/phase projection recovers a waveform. The
//! result is intelligible demo audio, not production vocoding.

use ndarray::Array2;
use rustfft::num_complex::Complex;

use crate::dsp::{istft, mel_filterbank, stft_complex, MelConfig, MelSpectrogram, Waveform};
use crate::error::{Error, Result};

/// Largest singular value of the filterbank via deterministic power
/// iteration, used as the NNLS step-size bound.
fn spectral_norm(fb: &Array2<f64>) -> f64 {
    let (rows, cols) = fb.dim();
    let mut v = vec![1.0 / (cols as f64).sqrt(); cols];
    let mut sigma = 1.0;
    for _ in 0..30 {
        let mut u = vec![0.0; rows];
        for r in 0..rows {
            let mut acc = 0.0;
            for c in 0..cols {
                acc += fb[[r, c]] * v[c];
            }
            u[r] = acc;
        }
        let mut w = vec![0.0; cols];
        for c in 0..cols {
            let mut acc = 0.0;
            for r in 0..rows {
                acc += fb[[r, c]] * u[r];
            }
            w[c] = acc;
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        sigma = norm.sqrt();
        for c in 0..cols {
            v[c] = w[c] / norm;
        }
    }
    sigma
}

/// Nonnegative linear-spectrogram estimate `[T, bins]` from Mel amplitudes.
fn mel_to_linear(mel_amp: &Array2<f64>, fb: &Array2<f64>) -> Array2<f64> {
    // mel_amp: [T, n_mels], fb: [n_mels, bins]. Solve per frame:
    // min ||fb^T' x - mel||^2, x >= 0 via projected gradient.
    let sigma = spectral_norm(fb);
    let step = 1.0 / (sigma * sigma);
    let mut x = mel_amp.dot(fb); // [T, bins], nonnegative init
    for _ in 0..120 {
        // residual = x @ fb^T - mel_amp  (per frame: fb @ x_t - m_t)
        let residual = x.dot(&fb.t()) - mel_amp;
        let grad = residual.dot(fb);
        x.zip_mut_with(&grad, |xv, &g| {
            *xv = (*xv - step * g).max(0.0);
        });
    }
    x
}

/// Reconstruct a waveform from a log-Mel matrix by NNLS filterbank inversion
/// followed by `iterations` rounds of phase re-estimation.
pub fn vocode_griffin_lim(
    mel: &MelSpectrogram,
    cfg: &MelConfig,
    iterations: usize,
) -> Result<Waveform> {
    if iterations == 0 {
        return Err(Error::Validation("griffin-lim needs at least one iteration".into()));
    }
    mel.validate()?;
    if mel.num_bins() != cfg.num_bins {
        return Err(Error::Shape(format!(
            "mel has {} bins, config expects {}",
            mel.num_bins(),
            cfg.num_bins
        )));
    }

    let fb = mel_filterbank(cfg);
    let amp = mel.values.mapv(f64::exp);
    let mag = mel_to_linear(&amp, &fb); // [T, bins]

    let (frames, bins) = mag.dim();
    // Zero initial phase; each loop projects onto the magnitude constraint
    // and re-estimates phase through a synthesis/analysis round trip.
    let mut spec = Array2::from_shape_fn((frames, bins), |(t, k)| Complex::new(mag[[t, k]], 0.0));
    for _ in 0..iterations {
        let wave = istft(&spec, cfg.win_length, cfg.hop_length);
        if wave.is_empty() {
            break;
        }
        let reanalyzed = stft_complex(&wave, cfg.win_length, cfg.hop_length);
        let t_common = reanalyzed.nrows().min(frames);
        for t in 0..t_common {
            for k in 0..bins {
                let c = reanalyzed[[t, k]];
                let norm = c.norm();
                let phase = if norm > 1e-12 { c / norm } else { Complex::new(1.0, 0.0) };
                spec[[t, k]] = phase * mag[[t, k]];
            }
        }
    }

    let mut samples = istft(&spec, cfg.win_length, cfg.hop_length);
    if samples.is_empty() {
        samples = vec![0.0];
    }
    let peak = samples.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    if peak > 0.0 {
        for s in &mut samples {
            *s *= 0.95 / peak;
        }
    }
    Waveform::new(samples, cfg.sample_rate)
}
