//! Short-time Fourier transform and its inverse.

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i % period;
    if m < 0 {
        m += period;
    }
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

fn padded_sample(x: &[f64], i: isize) -> f64 {
    x[reflect_index(i, x.len())]
}

/// Center-padded (reflect) complex STFT: `[frames, win/2 + 1]`.
///
/// Frame `t` is centered on sample `t * hop`; the frame count is
/// `x.len() / hop + 1`.
pub fn stft_complex(x: &[f64], win: usize, hop: usize) -> Array2<Complex<f64>> {
    assert!(!x.is_empty());
    let window = hann_window(win);
    let pad = win / 2;
    let frames = x.len() / hop + 1;
    let bins = win / 2 + 1;

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(win);
    let mut out = Array2::from_elem((frames, bins), Complex::new(0.0, 0.0));
    let mut buf = vec![Complex::new(0.0, 0.0); win];

    for t in 0..frames {
        let start = t as isize * hop as isize - pad as isize;
        for (j, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(padded_sample(x, start + j as isize) * window[j], 0.0);
        }
        fft.process(&mut buf);
        for k in 0..bins {
            out[[t, k]] = buf[k];
        }
    }
    out
}

/// Magnitude STFT, same framing as [`stft_complex`].
pub fn stft_magnitude(x: &[f64], win: usize, hop: usize) -> Array2<f64> {
    stft_complex(x, win, hop).mapv(|c| c.norm())
}

/// Inverse STFT by windowed overlap-add with squared-window normalization.
///
/// Returns `(frames - 1) * hop` samples, the center-padded dual of the
/// forward transform.
pub fn istft(spec: &Array2<Complex<f64>>, win: usize, hop: usize) -> Vec<f64> {
    let frames = spec.nrows();
    let bins = spec.ncols();
    assert_eq!(bins, win / 2 + 1, "spectrogram bins do not match window");
    assert!(frames >= 1);

    let window = hann_window(win);
    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(win);

    let padded_len = (frames - 1) * hop + win;
    let mut acc = vec![0.0; padded_len];
    let mut norm = vec![0.0; padded_len];
    let mut buf = vec![Complex::new(0.0, 0.0); win];

    for t in 0..frames {
        // Rebuild the conjugate-symmetric spectrum of a real frame.
        for k in 0..bins {
            buf[k] = spec[[t, k]];
        }
        for k in bins..win {
            buf[k] = spec[[t, win - k]].conj();
        }
        ifft.process(&mut buf);
        let start = t * hop;
        for j in 0..win {
            let sample = buf[j].re / win as f64;
            acc[start + j] += sample * window[j];
            norm[start + j] += window[j] * window[j];
        }
    }

    let pad = win / 2;
    let out_len = (frames - 1) * hop;
    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let w = norm[pad + i];
        out.push(if w > 1e-10 { acc[pad + i] / w } else { 0.0 });
    }
    out
}
