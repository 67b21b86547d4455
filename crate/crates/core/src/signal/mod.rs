//! LFP synthesis and wavelet preprocessing.

pub mod export;
pub mod lfp;
pub mod morlet;
pub mod norm;
pub mod window;

pub use export::{write_wavelet_tensors, ExportConfig, TensorExport};
pub use lfp::{synthesize_lfp, LfpGenConfig};
pub use morlet::{default_frequencies, MorletBank};
pub use norm::{fit_norm_stats, normalize, CenterStat, NormStats, SCALE_FLOOR};
pub use window::{window, WaveletImage, WINDOW_SAMPLES};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct LfpRecording {
    pub sample_rate_hz: f64,
    pub channels: Vec<Vec<f64>>,
    pub t0_ms: u64,
}

impl LfpRecording {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Wavelet magnitudes, `values[channel][frequency][sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scalogram {
    pub frequencies: Vec<f64>,
    pub values: Vec<Vec<Vec<f64>>>,
    pub sample_rate_hz: f64,
    pub t0_ms: u64,
}

impl Scalogram {
    pub fn n_samples(&self) -> usize {
        self.values
            .first()
            .and_then(|c| c.first())
            .map_or(0, |r| r.len())
    }
}

pub fn morlet_transform(recording: &LfpRecording, frequencies: &[f64]) -> Result<Scalogram> {
    let bank = MorletBank::new(frequencies, recording.sample_rate_hz)?;
    Ok(Scalogram {
        frequencies: frequencies.to_vec(),
        values: recording
            .channels
            .iter()
            .map(|x| bank.transform_channel(x))
            .collect(),
        sample_rate_hz: recording.sample_rate_hz,
        t0_ms: recording.t0_ms,
    })
}
