//! Continuous wavelet transform with the Morlet wavelet
//! ψ(t) = π^(-1/4) · exp(iω₀t) · exp(-t²/2), ω₀ = 6.
//!
//! For scale `s` the transform at sample `n` is
//! `W[n] = Σ_m x[m] · ψ*((m - n)·δt / s) · sqrt(δt / s)`, with the wavelet
//! truncated where |t/s| ≥ 4 and the signal zero-padded outside its extent.
//! Scale and centre frequency are related by f = (ω₀ + sqrt(2 + ω₀²)) / (4π s).
//! Rows are computed by overlap-save FFT convolution.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const OMEGA0: f64 = 6.0;
/// Support half-width in units of the wavelet's Gaussian standard deviation.
pub const SUPPORT_SD: f64 = 4.0;

pub fn morlet(t: f64) -> Complex64 {
    let envelope = PI.powf(-0.25) * (-t * t / 2.0).exp();
    Complex64::from_polar(envelope, OMEGA0 * t)
}

pub fn scale_for_frequency(freq_hz: f64) -> f64 {
    (OMEGA0 + (2.0 + OMEGA0 * OMEGA0).sqrt()) / (4.0 * PI * freq_hz)
}

pub fn frequency_for_scale(scale_s: f64) -> f64 {
    (OMEGA0 + (2.0 + OMEGA0 * OMEGA0).sqrt()) / (4.0 * PI * scale_s)
}

/// `n` log-spaced centre frequencies from `lo` to `hi` inclusive.
pub fn log_frequencies(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (ratio * i as f64).exp()).collect()
}

/// 26 log-spaced frequencies, 2–250 Hz.
pub fn default_frequencies() -> Vec<f64> {
    log_frequencies(2.0, 250.0, 26)
}

/// Sampled, scale-normalised wavelet taps for offsets -h..=h.
pub fn wavelet_taps(freq_hz: f64, sample_rate_hz: f64) -> Vec<Complex64> {
    let s = scale_for_frequency(freq_hz);
    let dt = 1.0 / sample_rate_hz;
    let norm = (dt / s).sqrt();
    let mut h = 0i64;
    while ((h + 1) as f64 * dt / s) < SUPPORT_SD {
        h += 1;
    }
    (-h..=h).map(|j| morlet(j as f64 * dt / s) * norm).collect()
}

pub struct MorletBank {
    frequencies: Vec<f64>,
    half: usize,
    block: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    /// Spectrum of each frequency's taps, padded to the common half-width.
    spectra: Vec<Vec<Complex64>>,
}

impl MorletBank {
    pub fn new(frequencies: &[f64], sample_rate_hz: f64) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::invalid("no wavelet frequencies given"));
        }
        let nyquist = sample_rate_hz / 2.0;
        if let Some(f) = frequencies.iter().find(|f| !(**f > 0.0 && **f <= nyquist)) {
            return Err(Error::invalid(format!(
                "frequency {f} Hz outside (0, {nyquist}] Hz"
            )));
        }
        if frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("frequencies must be strictly increasing"));
        }
        let taps: Vec<Vec<Complex64>> = frequencies
            .iter()
            .map(|&f| wavelet_taps(f, sample_rate_hz))
            .collect();
        let half = taps.iter().map(|t| t.len() / 2).max().unwrap();
        let block = (8 * (2 * half + 1)).next_power_of_two().max(4096);
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(block);
        let ifft = planner.plan_fft_inverse(block);
        let spectra = taps
            .iter()
            .map(|t| {
                let h = t.len() / 2;
                let mut buf = vec![Complex64::new(0.0, 0.0); block];
                for (j, v) in t.iter().enumerate() {
                    buf[half - h + j] = *v;
                }
                fft.process(&mut buf);
                buf
            })
            .collect();
        Ok(MorletBank {
            frequencies: frequencies.to_vec(),
            half,
            block,
            fft,
            ifft,
            spectra,
        })
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Magnitudes of the transform of `x` at frequency index `f`.
    pub fn transform_row(&self, x: &[f64], f: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        self.for_each_block(x, &[f], |_, _, chunk| out.extend_from_slice(chunk));
        out
    }

    /// All frequency rows for one channel, `[frequency][time]`.
    pub fn transform_channel(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut rows = vec![Vec::with_capacity(x.len()); self.frequencies.len()];
        self.transform_channel_with(x, |f, _, chunk| rows[f].extend_from_slice(chunk));
        rows
    }

    /// Streams the channel's magnitudes block by block as
    /// `sink(frequency_index, first_sample, magnitudes)`. Each input block is
    /// transformed once and shared by every frequency.
    pub fn transform_channel_with<S: FnMut(usize, usize, &[f64])>(&self, x: &[f64], sink: S) {
        let all: Vec<usize> = (0..self.frequencies.len()).collect();
        self.for_each_block(x, &all, sink);
    }

    fn for_each_block<S: FnMut(usize, usize, &[f64])>(&self, x: &[f64], freqs: &[usize], mut sink: S) {
        let n = x.len();
        let valid = self.block - 2 * self.half;
        let scale = 1.0 / self.block as f64;
        let zero = Complex64::new(0.0, 0.0);
        let mut input = vec![zero; self.block];
        let mut buf = vec![zero; self.block];
        let mut mags = Vec::with_capacity(valid);
        let mut n0 = 0;
        while n0 < n {
            for (i, b) in input.iter_mut().enumerate() {
                let m = n0 as i64 - self.half as i64 + i as i64;
                *b = if m >= 0 && (m as usize) < n {
                    Complex64::new(x[m as usize], 0.0)
                } else {
                    zero
                };
            }
            self.fft.process(&mut input);
            let take = valid.min(n - n0);
            for &f in freqs {
                for ((b, a), g) in buf.iter_mut().zip(&input).zip(&self.spectra[f]) {
                    *b = a * g;
                }
                self.ifft.process(&mut buf);
                mags.clear();
                mags.extend(buf[2 * self.half..2 * self.half + take].iter().map(|c| c.norm() * scale));
                sink(f, n0, &mags);
            }
            n0 += take;
        }
    }
}
