//! Windowed-sinc rational resampler.

/// Resample `input` from `from_rate` to `to_rate`.
///
/// Output length is `round(n * to_rate / from_rate)`. Each output sample is a
/// Hann-windowed sinc interpolation of the input at the exact rational
/// position, with per-sample gain normalization so DC and slow ramps pass
/// through unchanged.
pub fn resample(input: &[f64], from_rate: u32, to_rate: u32) -> Vec<f64> {
    assert!(from_rate > 0 && to_rate > 0, "sample rates must be positive");
    if from_rate == to_rate || input.is_empty() {
        return input.to_vec();
    }

    let n_in = input.len();
    let n_out = ((n_in as u64 * to_rate as u64 + from_rate as u64 / 2) / from_rate as u64) as usize;
    let ratio = to_rate as f64 / from_rate as f64;
    // Anti-aliasing cutoff, slightly below the narrower Nyquist.
    let cutoff = 0.95 * ratio.min(1.0);
    // Half-width of the kernel in input samples.
    const LOBES: f64 = 16.0;
    let half_width = LOBES / cutoff;

    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out {
        let pos = n as f64 / ratio;
        let j_min = (pos - half_width).ceil() as isize;
        let j_max = (pos + half_width).floor() as isize;
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for j in j_min..=j_max {
            let t = j as f64 - pos;
            let w = windowed_sinc(cutoff * t, LOBES);
            wsum += w;
            if j >= 0 && (j as usize) < n_in {
                acc += w * input[j as usize];
            }
        }
        out.push(if wsum != 0.0 { acc / wsum } else { 0.0 });
    }
    out
}

fn windowed_sinc(x: f64, lobes: f64) -> f64 {
    let u = x / lobes;
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let window = 0.5 * (1.0 + (std::f64::consts::PI * u).cos());
    sinc(x) * window
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_rate_is_passthrough() {
        let x = vec![0.1, -0.2, 0.3];
        assert_eq!(resample(&x, 16000, 16000), x);
    }

    #[test]
    fn output_length_follows_rational_formula() {
        for (n, from, to) in [
            (48000usize, 48000u32, 16000u32),
            (16000, 16000, 16000),
            (44100, 44100, 16000),
            (8000, 8000, 16000),
            (12345, 22050, 16000),
        ] {
            let x = vec![0.0; n];
            let want = ((n as u64 * to as u64 + from as u64 / 2) / from as u64) as usize;
            assert_eq!(resample(&x, from, to).len(), want, "{n} @ {from}->{to}");
        }
    }

    #[test]
    fn downsampled_sine_keeps_frequency() {
        // 440 Hz at 48 kHz, one second.
        let from = 48000u32;
        let x: Vec<f64> = (0..from)
            .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / from as f64).sin())
            .collect();
        let y = resample(&x, from, 16000);
        assert_eq!(y.len(), 16000);
        // Compare against an ideal 16 kHz sine away from the edges.
        let mut err = 0.0;
        for i in 1000..15000 {
            let want = (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 16000.0).sin();
            err += (y[i] - want).abs();
        }
        assert!(err / 14000.0 < 0.01, "mean abs error {}", err / 14000.0);
    }

    #[test]
    fn dc_passthrough() {
        let x = vec![0.5; 4800];
        let y = resample(&x, 48000, 16000);
        // Stay clear of the kernel half-width (~51 input = ~17 output samples).
        for &v in &y[60..y.len() - 60] {
            assert!((v - 0.5).abs() < 1e-6);
        }
    }
}
