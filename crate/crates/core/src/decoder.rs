//! Decodings of position, speed and direction: a noisy oracle over ground
//! truth whose noise is calibrated to target mean absolute errors, plus CSV
//! exchange with external decoders.
//!
//! Noise model per sample: independent Gaussian error on each position axis,
//! Gaussian speed error clipped so speed stays ≥ 0, and a direction that is
//! either replaced by a random wrong cardinal (probability `cardinal_flip_prob`)
//! or jittered by a von Mises draw with concentration `kappa_dir`.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::csvio::{self, KinematicsRow};
use crate::error::{Error, Result};
use crate::geom::{abs_diff_deg, wrap_deg, Point};
use crate::maze::Cardinal;
use crate::trajectory::TrajectorySample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decoding {
    pub t_ms: u64,
    pub position: Point,
    pub speed: f64,
    pub direction: f64,
}

impl Decoding {
    pub fn exact(s: &TrajectorySample) -> Self {
        Decoding { t_ms: s.t_ms, position: s.position, speed: s.speed, direction: s.direction }
    }

    pub fn to_row(&self) -> KinematicsRow {
        KinematicsRow {
            t_ms: self.t_ms as f64,
            x_cm: self.position.x,
            y_cm: self.position.y,
            speed_cm_s: self.speed,
            direction_deg: self.direction,
        }
    }
}

/// `kappa_dir = ∞` means no direction jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub sigma_xy: f64,
    #[serde(serialize_with = "ser_kappa", deserialize_with = "de_kappa")]
    pub kappa_dir: f64,
    pub sigma_speed: f64,
    pub cardinal_flip_prob: f64,
}

// JSON has no infinity; an absent concentration is written as null.
fn ser_kappa<S: Serializer>(k: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if k.is_finite() {
        s.serialize_some(k)
    } else {
        s.serialize_none()
    }
}

fn de_kappa<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl NoiseProfile {
    pub const ZERO: NoiseProfile = NoiseProfile {
        sigma_xy: 0.0,
        kappa_dir: f64::INFINITY,
        sigma_speed: 0.0,
        cardinal_flip_prob: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma_xy >= 0.0
            && self.sigma_speed >= 0.0
            && self.kappa_dir >= 0.0
            && !self.kappa_dir.is_nan()
            && (0.0..=1.0).contains(&self.cardinal_flip_prob)
            && self.sigma_xy.is_finite()
            && self.sigma_speed.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid noise profile {self:?}")))
        }
    }

    /// All noise magnitudes multiplied by `k`: sigmas scale linearly, the
    /// flip probability linearly (capped at 1) and the von Mises
    /// concentration by 1/k², which scales its small-angle spread by k.
    pub fn scaled(&self, k: f64) -> NoiseProfile {
        NoiseProfile {
            sigma_xy: self.sigma_xy * k,
            kappa_dir: if k == 0.0 { f64::INFINITY } else { self.kappa_dir / (k * k) },
            sigma_speed: self.sigma_speed * k,
            cardinal_flip_prob: (self.cardinal_flip_prob * k).min(1.0),
        }
    }

    /// Named preset: `zero`, or `rat1`..`rat3` calibrated to their targets.
    pub fn preset(name: &str) -> Result<NoiseProfile> {
        if name == "zero" {
            return Ok(NoiseProfile::ZERO);
        }
        calibrate(&MaeTargets::preset(name)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaeTargets {
    pub location_mae_cm: f64,
    pub direction_mae_deg: f64,
    pub speed_mae_cm_s: f64,
}

/// Per-animal decoding errors of the reference decoder.
pub const RAT_TARGETS: [(&str, MaeTargets); 3] = [
    ("rat1", MaeTargets { location_mae_cm: 2.188, direction_mae_deg: 7.816, speed_mae_cm_s: 0.486 }),
    ("rat2", MaeTargets { location_mae_cm: 1.641, direction_mae_deg: 6.997, speed_mae_cm_s: 0.316 }),
    ("rat3", MaeTargets { location_mae_cm: 1.849, direction_mae_deg: 12.354, speed_mae_cm_s: 1.487 }),
];

impl MaeTargets {
    pub fn preset(name: &str) -> Result<MaeTargets> {
        RAT_TARGETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::invalid(format!("unknown noise preset '{name}' (expected zero, rat1, rat2 or rat3)")))
    }
}

/// Best & Fisher (1979) rejection sampler; returns radians in (-π, π].
pub fn sample_von_mises<R: Rng + ?Sized>(rng: &mut R, kappa: f64) -> f64 {
    if kappa.is_infinite() {
        return 0.0;
    }
    if kappa < 1e-8 {
        return PI * (2.0 * rng.random::<f64>() - 1.0);
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let u3: f64 = rng.random();
            let a = f.clamp(-1.0, 1.0).acos();
            return if u3 < 0.5 { -a } else { a };
        }
    }
}

/// Iterator of oracle decodings. Two independent streams keep the fixed
/// per-sample draws aligned across profiles: the von Mises rejection loop
/// consumes a variable number of values from its own stream.
pub struct NoisyOracle<'a> {
    truth: std::slice::Iter<'a, TrajectorySample>,
    profile: NoiseProfile,
    rng: ChaCha8Rng,
    angle_rng: ChaCha8Rng,
}

pub fn noisy_oracle(trajectory: &[TrajectorySample], profile: NoiseProfile, seed: u64) -> Result<NoisyOracle<'_>> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut angle_rng = rng.clone();
    rng.set_stream(0);
    angle_rng.set_stream(1);
    Ok(NoisyOracle { truth: trajectory.iter(), profile, rng, angle_rng })
}

impl NoisyOracle<'_> {
    fn perturb(&mut self, s: &TrajectorySample) -> Decoding {
        let p = self.profile;
        let zx: f64 = self.rng.sample(StandardNormal);
        let zy: f64 = self.rng.sample(StandardNormal);
        let zs: f64 = self.rng.sample(StandardNormal);
        let u_flip: f64 = self.rng.random();
        let pick: u32 = self.rng.random_range(0..3);
        let jitter = sample_von_mises(&mut self.angle_rng, p.kappa_dir);

        let direction = if u_flip < p.cardinal_flip_prob {
            let own = Cardinal::nearest(s.direction);
            let others: Vec<Cardinal> = Cardinal::ALL.into_iter().filter(|c| *c != own).collect();
            others[pick as usize].degrees()
        } else {
            wrap_deg(s.direction + jitter.to_degrees())
        };
        Decoding {
            t_ms: s.t_ms,
            position: Point::new(s.position.x + p.sigma_xy * zx, s.position.y + p.sigma_xy * zy),
            speed: (s.speed + p.sigma_speed * zs).max(0.0),
            direction,
        }
    }
}

impl Iterator for NoisyOracle<'_> {
    type Item = Decoding;
    fn next(&mut self) -> Option<Decoding> {
        let s = self.truth.next()?;
        Some(self.perturb(s))
    }
}

/// Mean absolute errors of `decodings` against `truth`, paired in order.
/// Location error is Euclidean distance; direction error the minimal angle.
pub fn decoding_maes(truth: &[TrajectorySample], decodings: &[Decoding]) -> Result<MaeTargets> {
    if truth.len() != decodings.len() || truth.is_empty() {
        return Err(Error::invalid("decodings and truth must be non-empty and of equal length"));
    }
    let n = truth.len() as f64;
    let mut acc = [0.0; 3];
    for (t, d) in truth.iter().zip(decodings) {
        acc[0] += t.position.dist(d.position);
        acc[1] += abs_diff_deg(t.direction, d.direction);
        acc[2] += (t.speed - d.speed).abs();
    }
    Ok(MaeTargets { location_mae_cm: acc[0] / n, direction_mae_deg: acc[1] / n, speed_mae_cm_s: acc[2] / n })
}

/// E|θ| in degrees for a von Mises(0, κ) angle, by Simpson quadrature.
pub fn von_mises_mean_abs_deg(kappa: f64) -> f64 {
    if kappa.is_infinite() {
        return 0.0;
    }
    let n = 20_000;
    let h = PI / n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..=n {
        let th = i as f64 * h;
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let dens = (kappa * (th.cos() - 1.0)).exp();
        num += w * th * dens;
        den += w * dens;
    }
    (num / den).to_degrees()
}

/// Share of the direction error budget carried by cardinal flips.
pub const FLIP_SHARE: f64 = 0.1;
/// Mean error of a flip to a uniformly chosen wrong cardinal: (90 + 180 + 90) / 3.
pub const FLIP_MEAN_ERROR_DEG: f64 = 120.0;
pub const CALIBRATION_DRAWS: usize = 100_000;
pub const CALIBRATION_TOLERANCE: f64 = 0.02;
const CALIBRATION_SEED: u64 = 0x5eed_ca1b;
const MAX_BISECTIONS: usize = 64;

/// Finds `κ` with `E|θ| = target_deg` by bisection on ln κ.
pub fn kappa_for_mean_abs(target_deg: f64) -> Result<f64> {
    if target_deg <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let (mut lo, mut hi) = (-12.0f64, 25.0f64);
    if !(von_mises_mean_abs_deg(hi.exp()) < target_deg && target_deg < von_mises_mean_abs_deg(lo.exp())) {
        return Err(Error::NonConvergent(format!(
            "direction error {target_deg}° is outside the range a von Mises jitter can produce"
        )));
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let m = von_mises_mean_abs_deg(mid.exp());
        if (m - target_deg).abs() <= 1e-9 * target_deg {
            return Ok(mid.exp());
        }
        if m > target_deg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NonConvergent(format!(
        "concentration bisection for {target_deg}° did not converge in {MAX_BISECTIONS} iterations"
    )))
}

/// Reference truth for calibration checks: constant 30 cm/s so the speed
/// clip at zero never engages, directions cycling through the cardinals.
pub fn calibration_reference(n: usize) -> Vec<TrajectorySample> {
    (0..n)
        .map(|i| TrajectorySample {
            t_ms: i as u64 * 40,
            position: Point::new(50.0, 50.0),
            speed: 30.0,
            direction: 90.0 * (i % 4) as f64,
        })
        .collect()
}

/// Empirical MAEs of `profile` over `n` reference draws.
pub fn simulate_maes(profile: NoiseProfile, n: usize, seed: u64) -> Result<MaeTargets> {
    let truth = calibration_reference(n);
    let decoded: Vec<Decoding> = noisy_oracle(&truth, profile, seed)?.collect();
    decoding_maes(&truth, &decoded)
}

pub fn calibrate(targets: &MaeTargets) -> Result<NoiseProfile> {
    let t = targets;
    if !(t.location_mae_cm > 0.0 && t.direction_mae_deg > 0.0 && t.speed_mae_cm_s > 0.0) {
        return Err(Error::invalid("calibration targets must be positive"));
    }
    let flip = (FLIP_SHARE * t.direction_mae_deg / FLIP_MEAN_ERROR_DEG).min(1.0);
    let jitter_target = (t.direction_mae_deg - flip * FLIP_MEAN_ERROR_DEG) / (1.0 - flip);
    let profile = NoiseProfile {
        sigma_xy: t.location_mae_cm * (2.0 / PI).sqrt(),
        kappa_dir: kappa_for_mean_abs(jitter_target)?,
        sigma_speed: t.speed_mae_cm_s * (PI / 2.0).sqrt(),
        cardinal_flip_prob: flip,
    };
    let got = simulate_maes(profile, CALIBRATION_DRAWS, CALIBRATION_SEED)?;
    for (name, g, want) in [
        ("location", got.location_mae_cm, t.location_mae_cm),
        ("direction", got.direction_mae_deg, t.direction_mae_deg),
        ("speed", got.speed_mae_cm_s, t.speed_mae_cm_s),
    ] {
        if (g - want).abs() > CALIBRATION_TOLERANCE * want {
            return Err(Error::NonConvergent(format!(
                "calibrated {name} error {g:.4} misses target {want} by more than 2%"
            )));
        }
    }
    Ok(profile)
}

pub fn save_decodings(path: &Path, decodings: &[Decoding]) -> Result<()> {
    csvio::write_kinematics_file(path, decodings.iter().map(Decoding::to_row))
}

pub fn load_decodings(path: &Path) -> Result<Vec<Decoding>> {
    Ok(csvio::read_kinematics_file(path)?
        .into_iter()
        .map(|(t_ms, r)| Decoding {
            t_ms,
            position: Point::new(r.x_cm, r.y_cm),
            speed: r.speed_cm_s,
            direction: r.direction_deg,
        })
        .collect())
}
