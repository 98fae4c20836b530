//! Leading/trailing silence removal.

use super::Waveform;

#[derive(Debug, Clone)]
pub struct TrimConfig {
    /// Frames whose RMS falls below this many dB relative to the waveform
    /// peak are treated as silence.
    pub threshold_db: f64,
    pub frame_length: usize,
    pub hop_length: usize,
}

impl Default for TrimConfig {
    fn default() -> Self {
        TrimConfig { threshold_db: -40.0, frame_length: 1024, hop_length: 256 }
    }
}

#[derive(Debug, Clone)]
pub struct TrimResult {
    pub waveform: Waveform,
    /// Set when no frame reached the threshold; the waveform is then the
    /// unmodified input.
    pub all_silent: bool,
}

/// Remove leading and trailing regions whose frame RMS is below
/// `threshold_db` relative to the waveform peak. Interior frames are never
/// touched. Only complete frames are scanned, and cuts land on frame
/// boundaries, which makes the operation idempotent.
pub fn trim_silence(w: &Waveform, cfg: &TrimConfig) -> TrimResult {
    let n = w.samples.len();
    let peak = w.peak();
    if peak == 0.0 {
        return TrimResult { waveform: w.clone(), all_silent: true };
    }
    let rms_floor = peak * 10f64.powf(cfg.threshold_db / 20.0);

    let frame = cfg.frame_length.min(n);
    let hop = cfg.hop_length;
    let num_frames = if n >= cfg.frame_length { (n - cfg.frame_length) / hop + 1 } else { 1 };

    let loud = |i: usize| -> bool {
        let start = i * hop;
        let end = (start + frame).min(n);
        let sum_sq: f64 = w.samples[start..end].iter().map(|s| s * s).sum();
        let rms = (sum_sq / (end - start) as f64).sqrt();
        rms >= rms_floor
    };

    let first = (0..num_frames).find(|&i| loud(i));
    let Some(first) = first else {
        return TrimResult { waveform: w.clone(), all_silent: true };
    };
    let last = (0..num_frames).rev().find(|&i| loud(i)).unwrap();

    // A loud boundary frame keeps everything on its side, so a waveform with
    // no quiet edges passes through untouched.
    let start = first * hop;
    let end = if last == num_frames - 1 { n } else { (last * hop + frame).min(n) };
    let waveform = Waveform {
        samples: w.samples[start..end].to_vec(),
        sample_rate: w.sample_rate,
    };
    TrimResult { waveform, all_silent: false }
}
