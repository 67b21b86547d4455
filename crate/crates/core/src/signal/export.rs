//! Streaming route from a recording to normalised train/test image tensors.
//!
//! A full session holds millions of samples per channel, so the scalogram is
//! never materialised for all channels at once: each channel is transformed,
//! normalised with statistics from its training bins and cut into images
//! before the next one starts. Magnitudes are held as f32, the tensor's own
//! precision.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::morlet::MorletBank;
use super::norm::{fit_series, CenterStat, NormStats};
use super::window::{window_start, WINDOW_SAMPLES};
use super::LfpRecording;
use crate::error::{Error, Result};
use crate::tensor::SlabWriter;
use crate::trajectory::TrajectorySample;

#[derive(Debug, Clone, PartialEq)]
pub struct ExportConfig {
    pub frequencies: Vec<f64>,
    pub center: CenterStat,
    /// Labels before this time form the training split; the scalogram bins
    /// before it are the ones normalisation statistics are fitted on.
    pub split_t_ms: u64,
    /// Keep every n-th image of each split.
    pub image_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorExport {
    pub frequencies: Vec<f64>,
    pub stats: NormStats,
    pub train_labels: Vec<u64>,
    pub test_labels: Vec<u64>,
}

/// Writes `train` and `test` BSLM tensors and returns what went into them.
pub fn write_wavelet_tensors(
    recording: &LfpRecording,
    labels: &[TrajectorySample],
    cfg: &ExportConfig,
    train_path: &Path,
    test_path: &Path,
) -> Result<TensorExport> {
    if cfg.image_stride == 0 {
        return Err(Error::invalid("image stride must be at least 1"));
    }
    let bank = MorletBank::new(&cfg.frequencies, recording.sample_rate_hz)?;
    let n = recording.len();
    let fs = recording.sample_rate_hz;
    let split_idx = ((cfg.split_t_ms.saturating_sub(recording.t0_ms)) as f64 * fs / 1000.0).round() as usize;
    let split_idx = split_idx.min(n);
    if split_idx == 0 {
        return Err(Error::invalid("training split holds no scalogram bins"));
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut last = None;
    for s in labels {
        if last.is_some_and(|t| t >= s.t_ms) {
            continue;
        }
        if let Some(start) = window_start(s.t_ms, recording.t0_ms, fs, n) {
            last = Some(s.t_ms);
            if s.t_ms < cfg.split_t_ms {
                train.push((s.t_ms, start));
            } else {
                test.push((s.t_ms, start));
            }
        }
    }
    let train: Vec<_> = train.into_iter().step_by(cfg.image_stride).collect();
    let test: Vec<_> = test.into_iter().step_by(cfg.image_stride).collect();

    let n_ch = recording.channels.len();
    let n_f = cfg.frequencies.len();
    let dims = |k: usize| [k, n_ch, n_f, WINDOW_SAMPLES];
    let stamps = |v: &[(u64, usize)]| v.iter().map(|p| p.0).collect::<Vec<_>>();
    let mut train_w = SlabWriter::create(train_path, dims(train.len()), &stamps(&train))?;
    let mut test_w = SlabWriter::create(test_path, dims(test.len()), &stamps(&test))?;

    let mut stats = NormStats {
        center: vec![vec![0.0; n_f]; n_ch],
        scale: vec![vec![0.0; n_f]; n_ch],
    };
    let mut rows = vec![vec![0f32; n]; n_f];
    let mut slab = vec![0f32; n_f * WINDOW_SAMPLES];
    for (ch, x) in recording.channels.iter().enumerate() {
        if x.len() != n {
            return Err(Error::invalid("recording channels differ in length"));
        }
        bank.transform_channel_with(x, |f, off, chunk| {
            for (d, v) in rows[f][off..off + chunk.len()].iter_mut().zip(chunk) {
                *d = *v as f32;
            }
        });
        for (f, row) in rows.iter_mut().enumerate() {
            let training: Vec<f64> = row[..split_idx].iter().map(|&v| v as f64).collect();
            let (c, s) = fit_series(&training, cfg.center);
            stats.center[ch][f] = c;
            stats.scale[ch][f] = s;
            for v in row.iter_mut() {
                *v = ((*v as f64 - c) / s) as f32;
            }
        }
        for (writer, images) in [(&mut train_w, &train), (&mut test_w, &test)] {
            for (img, &(_, start)) in images.iter().enumerate() {
                for (f, row) in rows.iter().enumerate() {
                    slab[f * WINDOW_SAMPLES..(f + 1) * WINDOW_SAMPLES]
                        .copy_from_slice(&row[start..start + WINDOW_SAMPLES]);
                }
                writer.write_slab(img, ch, &slab)?;
            }
        }
    }
    Ok(TensorExport {
        frequencies: cfg.frequencies.clone(),
        stats,
        train_labels: stamps(&train),
        test_labels: stamps(&test),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;
    use crate::signal::{fit_norm_stats, morlet_transform, normalize, window, Scalogram};
    use crate::tensor::Tensor4;

    #[test]
    fn streamed_tensors_match_in_memory_route() {
        let n = 6000;
        let mut state = 7u64;
        let mut noise = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let channels: Vec<Vec<f64>> = (0..3)
            .map(|c| (0..n).map(|i| ((i * (c + 3)) as f64 * 0.021).sin() + noise()).collect())
            .collect();
        let rec = LfpRecording { sample_rate_hz: 2000.0, channels, t0_ms: 1000 };
        let labels: Vec<TrajectorySample> = (0..=75)
            .map(|i| TrajectorySample { t_ms: 1000 + i * 40, position: Point::ORIGIN, speed: 0.0, direction: 0.0 })
            .collect();
        let cfg = ExportConfig {
            frequencies: vec![6.0, 25.0, 110.0],
            center: CenterStat::Median,
            split_t_ms: 3400,
            image_stride: 2,
        };
        let dir = tempfile::tempdir().unwrap();
        let (tp, sp) = (dir.path().join("train.bslm"), dir.path().join("test.bslm"));
        let ex = write_wavelet_tensors(&rec, &labels, &cfg, &tp, &sp).unwrap();

        let sc = morlet_transform(&rec, &cfg.frequencies).unwrap();
        let split = 2 * 2400;
        let training = Scalogram {
            values: sc.values.iter().map(|rs| rs.iter().map(|r| r[..split].to_vec()).collect()).collect(),
            ..sc.clone()
        };
        let st = fit_norm_stats(&[training], CenterStat::Median).unwrap();
        let imgs = window(&normalize(&sc, &st).unwrap(), &labels);
        let (tr, te): (Vec<_>, Vec<_>) = imgs.into_iter().partition(|im| im.label_t_ms < 3400);
        let tr: Vec<_> = tr.into_iter().step_by(2).collect();
        let te: Vec<_> = te.into_iter().step_by(2).collect();

        for (path, want, stamps) in [(&tp, &tr, &ex.train_labels), (&sp, &te, &ex.test_labels)] {
            let t = Tensor4::load(path).unwrap();
            assert_eq!(t.dims, [want.len(), 3, 3, 64]);
            assert_eq!(&t.timestamps, stamps);
            for (k, im) in want.iter().enumerate() {
                assert_eq!(t.timestamps[k], im.label_t_ms);
                for (i, (a, b)) in t.image(k).iter().zip(&im.values).enumerate() {
                    let (ch, f) = (i / (3 * 64), (i / 64) % 3);
                    // f32 storage of the raw magnitude, magnified by 1/scale
                    let raw = (b * st.scale[ch][f] + st.center[ch][f]).abs();
                    let tol = 1e-6 * (raw / st.scale[ch][f] + 1.0);
                    assert!((*a as f64 - b).abs() <= tol, "{a} vs {b}");
                }
            }
        }
        assert!(!ex.train_labels.is_empty() && !ex.test_labels.is_empty());
    }

    #[test]
    fn rejects_empty_training_split() {
        let rec = LfpRecording { sample_rate_hz: 2000.0, channels: vec![vec![0.0; 400]], t0_ms: 0 };
        let cfg = ExportConfig { frequencies: vec![10.0], center: CenterStat::Median, split_t_ms: 0, image_stride: 1 };
        let dir = tempfile::tempdir().unwrap();
        let r = write_wavelet_tensors(&rec, &[], &cfg, &dir.path().join("a"), &dir.path().join("b"));
        assert!(r.is_err());
    }
}
