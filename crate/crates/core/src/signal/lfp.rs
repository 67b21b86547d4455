//! Synthetic multichannel LFP.
//!
//! Every channel carries independent pink noise, a shared 8 Hz theta rhythm
//! whose amplitude grows with running speed, and a place-tuned oscillatory
//! burst: the channel owns a Gaussian place field on the maze and a carrier
//! frequency in 30–120 Hz, and the burst amplitude peaks inside the field and
//! is modulated by the direction of travel.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::LfpRecording;
use crate::error::{Error, Result};
use crate::geom::Point;
use crate::maze::MazeSkeleton;
use crate::trajectory::TrajectorySample;

pub const SAMPLE_RATE_HZ: f64 = 2000.0;
pub const N_CHANNELS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfpGenConfig {
    pub place_centers: Vec<Point>,
    pub carriers_hz: Vec<f64>,
    /// Preferred travel direction of each channel's burst, degrees.
    pub preferred_dirs_deg: Vec<f64>,
    pub place_sigma_cm: f64,
    pub place_amplitude: f64,
    /// Depth of the cosine direction modulation, in [0, 1].
    pub direction_depth: f64,
    pub theta_hz: f64,
    pub theta_base: f64,
    pub theta_gain_per_cm_s: f64,
    pub pink_amplitude: f64,
}

impl LfpGenConfig {
    /// Sixteen channels with place fields spread evenly along the skeleton.
    pub fn for_maze(maze: &MazeSkeleton) -> Self {
        let total = maze.total_length();
        let place_centers = (0..N_CHANNELS)
            .map(|c| {
                let mut arc = (c as f64 + 0.5) / N_CHANNELS as f64 * total;
                for s in &maze.segments {
                    if arc <= s.length() {
                        return s.point_at(arc);
                    }
                    arc -= s.length();
                }
                maze.segments.last().unwrap().b
            })
            .collect();
        let carriers_hz = (0..N_CHANNELS)
            .map(|c| 30.0 + 90.0 * c as f64 / (N_CHANNELS - 1) as f64)
            .collect();
        let preferred_dirs_deg = (0..N_CHANNELS).map(|c| 90.0 * (c % 4) as f64).collect();
        LfpGenConfig {
            place_centers,
            carriers_hz,
            preferred_dirs_deg,
            place_sigma_cm: 15.0,
            place_amplitude: 3.0,
            direction_depth: 0.5,
            theta_hz: 8.0,
            theta_base: 0.5,
            theta_gain_per_cm_s: 0.05,
            pink_amplitude: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.place_centers.len();
        if n == 0 || self.carriers_hz.len() != n || self.preferred_dirs_deg.len() != n {
            return Err(Error::invalid("per-channel generator settings must have equal, non-zero length"));
        }
        if !(self.place_sigma_cm > 0.0) {
            return Err(Error::invalid("place field width must be positive"));
        }
        Ok(())
    }
}

/// Pink noise via Paul Kellet's refined 7-pole filter over white noise.
struct PinkNoise {
    b: [f64; 7],
}

impl PinkNoise {
    fn new() -> Self {
        PinkNoise { b: [0.0; 7] }
    }

    fn next(&mut self, white: f64) -> f64 {
        let b = &mut self.b;
        b[0] = 0.99886 * b[0] + white * 0.0555179;
        b[1] = 0.99332 * b[1] + white * 0.0750759;
        b[2] = 0.96900 * b[2] + white * 0.1538520;
        b[3] = 0.86650 * b[3] + white * 0.3104856;
        b[4] = 0.55000 * b[4] + white * 0.5329522;
        b[5] = -0.7616 * b[5] - white * 0.0168980;
        let out = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + white * 0.5362;
        b[6] = white * 0.115926;
        out * 0.11
    }
}

pub fn synthesize_lfp(trajectory: &[TrajectorySample], gen: &LfpGenConfig, seed: u64) -> Result<LfpRecording> {
    if trajectory.is_empty() {
        return Err(Error::invalid("cannot synthesise LFP for an empty trajectory"));
    }
    gen.validate()?;
    let t0 = trajectory[0].t_ms;
    let duration = trajectory.last().unwrap().t_ms - t0;
    let n = (duration as f64 * SAMPLE_RATE_HZ / 1000.0) as usize;
    let n_ch = gen.place_centers.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta_phase: f64 = rng.random::<f64>() * 2.0 * PI;
    let phases: Vec<f64> = (0..n_ch).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
    let mut pink: Vec<PinkNoise> = (0..n_ch).map(|_| PinkNoise::new()).collect();
    let mut channels = vec![Vec::with_capacity(n); n_ch];

    let two_sigma_sq = 2.0 * gen.place_sigma_cm * gen.place_sigma_cm;
    let mut seg = 0usize;
    for i in 0..n {
        let t_ms = t0 as f64 + i as f64 * 1000.0 / SAMPLE_RATE_HZ;
        while seg + 1 < trajectory.len() - 1 && (trajectory[seg + 1].t_ms as f64) <= t_ms {
            seg += 1;
        }
        let (a, b) = if trajectory.len() == 1 {
            (&trajectory[0], &trajectory[0])
        } else {
            (&trajectory[seg], &trajectory[seg + 1])
        };
        let span = (b.t_ms - a.t_ms) as f64;
        let u = if span > 0.0 { ((t_ms - a.t_ms as f64) / span).clamp(0.0, 1.0) } else { 0.0 };
        let pos = a.position.lerp(b.position, u);
        let speed = a.speed + (b.speed - a.speed) * u;
        let dir = if u < 1.0 { a.direction } else { b.direction };

        let t_s = (t_ms - t0 as f64) / 1000.0;
        let theta = (gen.theta_base + gen.theta_gain_per_cm_s * speed)
            * (2.0 * PI * gen.theta_hz * t_s + theta_phase).sin();
        for c in 0..n_ch {
            let d2 = {
                let d = pos - gen.place_centers[c];
                d.x * d.x + d.y * d.y
            };
            let tuning = 1.0 + gen.direction_depth * (dir - gen.preferred_dirs_deg[c]).to_radians().cos();
            let burst = gen.place_amplitude
                * (-d2 / two_sigma_sq).exp()
                * tuning
                * (2.0 * PI * gen.carriers_hz[c] * t_s + phases[c]).sin();
            let white: f64 = rng.sample(StandardNormal);
            let v = gen.pink_amplitude * pink[c].next(white) + theta + burst;
            channels[c].push(v);
        }
    }
    Ok(LfpRecording {
        sample_rate_hz: SAMPLE_RATE_HZ,
        channels,
        t0_ms: t0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maze::build_default_maze;
    use rustfft::{num_complex::Complex64, FftPlanner};

    fn parked(at: Point, speed: f64, seconds: u64) -> Vec<TrajectorySample> {
        (0..=seconds * 25)
            .map(|i| TrajectorySample { t_ms: i * 40, position: at, speed, direction: 0.0 })
            .collect()
    }

    /// Welch power spectral density: Hann-windowed 1 s segments, half overlap.
    fn welch_band_power(x: &[f64], fs: f64, lo: f64, hi: f64) -> f64 {
        let seg = fs as usize;
        let fft = FftPlanner::new().plan_fft_forward(seg);
        let win: Vec<f64> = (0..seg).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg as f64).cos()).collect();
        let mut psd = vec![0.0; seg / 2 + 1];
        let mut count = 0;
        let mut start = 0;
        while start + seg <= x.len() {
            let mut buf: Vec<Complex64> = (0..seg).map(|i| Complex64::new(x[start + i] * win[i], 0.0)).collect();
            fft.process(&mut buf);
            for (k, p) in psd.iter_mut().enumerate() {
                *p += buf[k].norm_sqr();
            }
            count += 1;
            start += seg / 2;
        }
        let df = fs / seg as f64;
        psd.iter()
            .enumerate()
            .filter(|(k, _)| (*k as f64 * df) >= lo && (*k as f64 * df) <= hi)
            .map(|(_, p)| p / count as f64)
            .sum()
    }

    #[test]
    fn shape_and_length() {
        let maze = build_default_maze();
        let gen = LfpGenConfig::for_maze(&maze);
        let traj = parked(Point::new(65.0, 10.0), 10.0, 3);
        let rec = synthesize_lfp(&traj, &gen, 1).unwrap();
        assert_eq!(rec.channels.len(), 16);
        assert!(rec.channels.iter().all(|c| c.len() == 3000 * 2));
        assert!(synthesize_lfp(&[], &gen, 1).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let maze = build_default_maze();
        let gen = LfpGenConfig::for_maze(&maze);
        let traj = parked(Point::new(65.0, 10.0), 10.0, 1);
        assert_eq!(synthesize_lfp(&traj, &gen, 5).unwrap(), synthesize_lfp(&traj, &gen, 5).unwrap());
        assert_ne!(synthesize_lfp(&traj, &gen, 5).unwrap(), synthesize_lfp(&traj, &gen, 6).unwrap());
    }

    #[test]
    fn place_field_raises_carrier_power() {
        let maze = build_default_maze();
        let gen = LfpGenConfig::for_maze(&maze);
        let c = 3;
        let inside = parked(gen.place_centers[c], 0.0, 4);
        let far = gen.place_centers.iter().copied().max_by(|a, b| {
            a.dist(gen.place_centers[c]).total_cmp(&b.dist(gen.place_centers[c]))
        }).unwrap();
        let outside = parked(far, 0.0, 4);
        let f = gen.carriers_hz[c];
        let p_in = welch_band_power(&synthesize_lfp(&inside, &gen, 9).unwrap().channels[c], 2000.0, f - 2.0, f + 2.0);
        let p_out = welch_band_power(&synthesize_lfp(&outside, &gen, 9).unwrap().channels[c], 2000.0, f - 2.0, f + 2.0);
        assert!(p_in > p_out, "{p_in} vs {p_out}");
    }

    #[test]
    fn running_speed_raises_theta_power() {
        let maze = build_default_maze();
        let gen = LfpGenConfig::for_maze(&maze);
        let far = Point::new(65.0, 85.0);
        let slow = synthesize_lfp(&parked(far, 0.0, 4), &gen, 4).unwrap();
        let fast = synthesize_lfp(&parked(far, 40.0, 4), &gen, 4).unwrap();
        for ch in [0, 7, 15] {
            let ps = welch_band_power(&slow.channels[ch], 2000.0, 6.0, 10.0);
            let pf = welch_band_power(&fast.channels[ch], 2000.0, 6.0, 10.0);
            assert!(pf > ps, "channel {ch}: {pf} vs {ps}");
        }
    }
}
