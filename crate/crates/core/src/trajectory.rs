//! Simulated rodent sessions on the maze and kinematic labels derived from
//! tracked positions.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::csvio::{self, KinematicsRow};
use crate::error::{Error, Result};
use crate::geom::Point;
use crate::maze::{quantize_direction, MazeSkeleton, Turn};

/// Tracking cadence: 25 Hz.
pub const SAMPLE_PERIOD_MS: u64 = 40;

/// Ground-truth kinematics at one tracking timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t_ms: u64,
    pub position: Point,
    /// cm/s
    pub speed: f64,
    /// degrees in [0, 360)
    pub direction: f64,
}

impl TrajectorySample {
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

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TurnRule {
    /// Choose the same arm as the forced turn.
    Match,
    Mismatch,
}

impl TurnRule {
    pub fn choice(self, forced: Turn) -> Turn {
        match self {
            TurnRule::Match => forced,
            TurnRule::Mismatch => forced.opposite(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub n_trials: u32,
    pub mean_speed_cm_s: f64,
    /// Standard deviation of the per-step target speed.
    pub speed_jitter_cm_s: f64,
    pub max_speed_cm_s: f64,
    pub pause_ms_at_reward: u64,
    /// Rest in the start box after each choice epoch.
    pub intertrial_pause_ms: u64,
    pub turn_rule: TurnRule,
    pub rng_seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            n_trials: 20,
            mean_speed_cm_s: 20.0,
            speed_jitter_cm_s: 5.0,
            max_speed_cm_s: 60.0,
            pause_ms_at_reward: 2000,
            intertrial_pause_ms: 40000,
            turn_rule: TurnRule::Match,
            rng_seed: 42,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::invalid("n_trials must be positive"));
        }
        if !(self.mean_speed_cm_s > 0.0) || !self.mean_speed_cm_s.is_finite() {
            return Err(Error::invalid("mean speed must be positive"));
        }
        if !(self.max_speed_cm_s >= self.mean_speed_cm_s) {
            return Err(Error::invalid("max speed must be at least the mean speed"));
        }
        if !(self.speed_jitter_cm_s >= 0.0) {
            return Err(Error::invalid("speed jitter must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub forced: Turn,
    pub choice: Turn,
    pub forced_start_ms: u64,
    pub choice_start_ms: u64,
    pub end_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub samples: Vec<TrajectorySample>,
    pub trials: Vec<TrialRecord>,
}

impl Session {
    pub fn duration_ms(&self) -> u64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t_ms - a.t_ms,
            _ => 0,
        }
    }
}

/// Polyline parametrised by arc length.
struct Route {
    points: Vec<Point>,
    cum: Vec<f64>,
}

impl Route {
    fn new(points: Vec<Point>) -> Self {
        let mut cum = vec![0.0];
        for w in points.windows(2) {
            cum.push(cum.last().unwrap() + w[0].dist(w[1]));
        }
        Route { points, cum }
    }

    fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn arc_of_vertex(&self, p: Point) -> Option<f64> {
        self.points.iter().position(|q| *q == p).map(|i| self.cum[i])
    }

    fn at(&self, s: f64) -> Point {
        let s = s.clamp(0.0, self.length());
        let i = match self.cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => return self.points[i],
            Err(i) => i - 1,
        };
        let seg = self.cum[i + 1] - self.cum[i];
        self.points[i].lerp(self.points[i + 1], (s - self.cum[i]) / seg)
    }
}

struct Walker<'a> {
    rng: ChaCha8Rng,
    target: Normal<f64>,
    cfg: &'a SessionConfig,
    t_ms: u64,
    speed: f64,
    positions: Vec<(u64, Point)>,
}

impl Walker<'_> {
    fn emit(&mut self, p: Point) {
        self.t_ms += SAMPLE_PERIOD_MS;
        self.positions.push((self.t_ms, p));
    }

    fn hold(&mut self, p: Point, ms: u64) {
        for _ in 0..ms / SAMPLE_PERIOD_MS {
            self.emit(p);
        }
        self.speed = 0.0;
    }

    /// Moves along `route` from arc `from` to arc `to`, with a low-pass
    /// filtered, Gaussian-perturbed target speed.
    fn travel(&mut self, route: &Route, from: f64, to: f64) {
        const SMOOTHING: f64 = 0.1;
        let dt = SAMPLE_PERIOD_MS as f64 / 1000.0;
        let mut s = from;
        while s < to {
            let target = self.target.sample(&mut self.rng);
            self.speed += SMOOTHING * (target - self.speed);
            self.speed = self.speed.clamp(0.0, self.cfg.max_speed_cm_s);
            s = (s + self.speed * dt).min(to);
            self.emit(route.at(s));
        }
    }
}

/// Simulates a full recording session. Each trial is a forced-turn epoch
/// followed by a choice epoch obeying the turn rule; the agent pauses at the
/// reward site on the choice epoch only, then rests in the start box.
pub fn simulate_session(maze: &MazeSkeleton, config: &SessionConfig) -> Result<Session> {
    config.validate()?;
    let routes = [Turn::Left, Turn::Right]
        .map(|side| maze.epoch_route(side).map(Route::new));
    let [left, right] = routes;
    let (left, right) = (left?, right?);
    let route_for = |side: Turn| match side {
        Turn::Left => &left,
        Turn::Right => &right,
    };

    let mut walker = Walker {
        rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
        target: Normal::new(config.mean_speed_cm_s, config.speed_jitter_cm_s)
            .map_err(|e| Error::invalid(e.to_string()))?,
        cfg: config,
        t_ms: 0,
        speed: 0.0,
        positions: vec![(0, maze.start())],
    };
    let mut trials = Vec::with_capacity(config.n_trials as usize);
    for _ in 0..config.n_trials {
        let forced = if walker.rng.random_bool(0.5) { Turn::Left } else { Turn::Right };
        let choice = config.turn_rule.choice(forced);
        let forced_start_ms = walker.t_ms;

        let r = route_for(forced);
        walker.travel(r, 0.0, r.length());

        let choice_start_ms = walker.t_ms;
        let r = route_for(choice);
        let reward_arc = r
            .arc_of_vertex(maze.reward_site(choice).expect("route exists"))
            .expect("reward site lies on its route");
        walker.travel(r, 0.0, reward_arc);
        walker.hold(r.at(reward_arc), config.pause_ms_at_reward);
        walker.travel(r, reward_arc, r.length());
        walker.hold(r.at(r.length()), config.intertrial_pause_ms);

        trials.push(TrialRecord {
            forced,
            choice,
            forced_start_ms,
            choice_start_ms,
            end_ms: walker.t_ms,
        });
    }
    let samples = derive_kinematics(&walker.positions)?;
    Ok(Session { samples, trials })
}

/// Speed and direction from successive positions. Directions within ±10° of
/// a cardinal snap to it; others stay raw. Stationary samples carry the
/// previous direction (leading stationary samples take the first moving
/// direction), and the first sample copies the second's kinematics.
pub fn derive_kinematics(positions: &[(u64, Point)]) -> Result<Vec<TrajectorySample>> {
    if positions.len() < 2 {
        return Err(Error::invalid("need at least two positions to derive kinematics"));
    }
    for w in positions.windows(2) {
        if w[1].0 == w[0].0 {
            return Err(Error::invalid(format!("duplicate timestamp {} ms", w[0].0)));
        }
        if w[1].0 < w[0].0 {
            return Err(Error::invalid(format!("timestamps decrease at {} ms", w[1].0)));
        }
    }
    let mut out: Vec<TrajectorySample> = Vec::with_capacity(positions.len());
    let mut heading: Option<f64> = None;
    for w in positions.windows(2) {
        let (t0, p0) = w[0];
        let (t1, p1) = w[1];
        let dist = p1.dist(p0);
        let speed = dist / ((t1 - t0) as f64 / 1000.0);
        if dist > 0.0 {
            let raw = p1.heading_from(p0);
            heading = Some(quantize_direction(raw).map_or(raw, |c| c.degrees()));
        }
        out.push(TrajectorySample {
            t_ms: t1,
            position: p1,
            speed,
            direction: heading.unwrap_or(f64::NAN),
        });
    }
    let first_heading = out.iter().map(|s| s.direction).find(|d| !d.is_nan()).unwrap_or(0.0);
    for s in out.iter_mut().take_while(|s| s.direction.is_nan()) {
        s.direction = first_heading;
    }
    let second = out[0];
    out.insert(
        0,
        TrajectorySample {
            t_ms: positions[0].0,
            position: positions[0].1,
            ..second
        },
    );
    Ok(out)
}

pub fn save_csv(path: &Path, samples: &[TrajectorySample]) -> Result<()> {
    csvio::write_kinematics_file(path, samples.iter().map(TrajectorySample::to_row))
}

pub fn load_csv(path: &Path) -> Result<Vec<TrajectorySample>> {
    Ok(csvio::read_kinematics_file(path)?
        .into_iter()
        .map(|(t, r)| TrajectorySample {
            t_ms: t,
            position: Point::new(r.x_cm, r.y_cm),
            speed: r.speed_cm_s,
            direction: r.direction_deg,
        })
        .collect())
}
