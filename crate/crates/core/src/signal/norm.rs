//! Robust per-(channel, frequency) normalisation: subtract a centre and
//! divide by the median absolute deviation from it.

use serde::{Deserialize, Serialize};

use super::Scalogram;
use crate::error::{Error, Result};

pub const SCALE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterStat {
    #[default]
    Median,
    Mean,
}

impl std::str::FromStr for CenterStat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(CenterStat::Median),
            "mean" => Ok(CenterStat::Mean),
            other => Err(Error::invalid(format!("unknown centre statistic '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    /// `center[channel][frequency]`
    pub center: Vec<Vec<f64>>,
    pub scale: Vec<Vec<f64>>,
}

/// Median of a scratch buffer; reorders it. Even lengths average the two
/// middle values.
pub fn median_in_place(v: &mut [f64]) -> f64 {
    let n = v.len();
    let mid = n / 2;
    let (lo, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *m;
    if n % 2 == 1 {
        upper
    } else {
        let lower = lo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Centre and floored MAD of one series.
pub fn fit_series(values: &[f64], center: CenterStat) -> (f64, f64) {
    let mut scratch = values.to_vec();
    let c = match center {
        CenterStat::Median => median_in_place(&mut scratch),
        CenterStat::Mean => values.iter().sum::<f64>() / values.len() as f64,
    };
    for (s, v) in scratch.iter_mut().zip(values) {
        *s = (v - c).abs();
    }
    let mad = median_in_place(&mut scratch);
    (c, mad.max(SCALE_FLOOR))
}

/// Fits statistics over the concatenated time bins of all training scalograms.
pub fn fit_norm_stats(training: &[Scalogram], center: CenterStat) -> Result<NormStats> {
    let first = training
        .first()
        .ok_or_else(|| Error::invalid("no training scalograms"))?;
    let n_ch = first.values.len();
    let n_f = first.frequencies.len();
    if training
        .iter()
        .any(|s| s.values.len() != n_ch || s.frequencies.len() != n_f)
    {
        return Err(Error::invalid("training scalograms differ in shape"));
    }
    if training.iter().all(|s| s.n_samples() == 0) {
        return Err(Error::invalid("training scalograms hold no time bins"));
    }
    let mut stats = NormStats {
        center: vec![vec![0.0; n_f]; n_ch],
        scale: vec![vec![0.0; n_f]; n_ch],
    };
    for ch in 0..n_ch {
        for f in 0..n_f {
            let all: Vec<f64> = training
                .iter()
                .flat_map(|s| s.values[ch][f].iter().copied())
                .collect();
            let (c, s) = fit_series(&all, center);
            stats.center[ch][f] = c;
            stats.scale[ch][f] = s;
        }
    }
    Ok(stats)
}

pub fn normalize(scalogram: &Scalogram, stats: &NormStats) -> Result<Scalogram> {
    let mut out = scalogram.clone();
    for (ch, rows) in out.values.iter_mut().enumerate() {
        for (f, row) in rows.iter_mut().enumerate() {
            let (c, s) = stats
                .center
                .get(ch)
                .and_then(|r| r.get(f))
                .zip(stats.scale.get(ch).and_then(|r| r.get(f)))
                .ok_or_else(|| {
                    Error::invalid(format!("no normalisation stats for channel {ch}, frequency {f}"))
                })?;
            for v in row.iter_mut() {
                *v = (*v - c) / s;
            }
        }
    }
    Ok(out)
}
