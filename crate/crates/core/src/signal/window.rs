//! Cuts a scalogram into fixed-width images centred on label timestamps.

use super::Scalogram;
use crate::trajectory::TrajectorySample;

/// 64 samples, 32 ms at 2 kHz.
pub const WINDOW_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletImage {
    pub n_channels: usize,
    pub n_frequencies: usize,
    /// Flat `[channel][frequency][time]`, time-minor.
    pub values: Vec<f64>,
    pub label_t_ms: u64,
    pub label: TrajectorySample,
}

impl WaveletImage {
    pub fn get(&self, ch: usize, f: usize, t: usize) -> f64 {
        self.values[(ch * self.n_frequencies + f) * WINDOW_SAMPLES + t]
    }
}

/// First sample index of the window centred on `t_ms`, or `None` when the
/// window would leave the `n`-sample scalogram starting at `t0_ms`.
pub fn window_start(t_ms: u64, t0_ms: u64, sample_rate_hz: f64, n: usize) -> Option<usize> {
    if t_ms < t0_ms {
        return None;
    }
    let centre = ((t_ms - t0_ms) as f64 * sample_rate_hz / 1000.0).round() as usize;
    let half = WINDOW_SAMPLES / 2;
    if centre < half || centre + half > n {
        return None;
    }
    Some(centre - half)
}

pub fn window(scalogram: &Scalogram, trajectory: &[TrajectorySample]) -> Vec<WaveletImage> {
    let n = scalogram.n_samples();
    let n_ch = scalogram.values.len();
    let n_f = scalogram.frequencies.len();
    let mut out: Vec<WaveletImage> = Vec::new();
    for s in trajectory {
        if out.last().is_some_and(|last| last.label_t_ms >= s.t_ms) {
            continue;
        }
        let Some(start) = window_start(s.t_ms, scalogram.t0_ms, scalogram.sample_rate_hz, n) else {
            continue;
        };
        let mut values = Vec::with_capacity(n_ch * n_f * WINDOW_SAMPLES);
        for rows in &scalogram.values {
            for row in rows {
                values.extend_from_slice(&row[start..start + WINDOW_SAMPLES]);
            }
        }
        out.push(WaveletImage {
            n_channels: n_ch,
            n_frequencies: n_f,
            values,
            label_t_ms: s.t_ms,
            label: *s,
        });
    }
    out
}
