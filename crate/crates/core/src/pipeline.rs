//! Session orchestration: the per-step SLAM loop, its report and artifacts.
//!
//! Each step runs, in order: read the decoding, match or create a view
//! cell, inject at a matched cell's pose, network dynamics, path integration
//! with the decoded odometry, experience-map update, and recording the pose
//! estimate against ground truth.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decoder::{self, decoding_maes, noisy_oracle, Decoding, NoiseProfile};
use crate::error::{Error, Result};
use crate::experience_map::{render_svg, ExperienceMap, OdometryDelta};
use crate::geom::{signed_diff_deg, Point};
use crate::maze::{build_default_maze, MazeSkeleton, Segment};
use crate::metrics::{location_mae, procrustes};
use crate::pose_cells::{PoseCellConfig, PoseCellNetwork, PoseEstimate};
use crate::trajectory::{self, simulate_session, SessionConfig, TrajectorySample};
use crate::view_cells::{ViewCellRegistry, INJECT_ENERGY, MATCH_THRESHOLD_CM};

/// Slack added to the aliasing allowance for decoding noise on both nodes.
pub const ALIASING_MARGIN_CM: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectorySource {
    Simulate(SessionConfig),
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderSource {
    Oracle { profile: NoiseProfile, seed: u64 },
    Csv(PathBuf),
}

/// Parameters of the SLAM loop itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlamParams {
    pub pose_cells: PoseCellConfig,
    pub match_threshold_cm: f64,
    pub inject_energy: f64,
    /// When false, view cells are still matched but nothing is injected.
    pub loop_closure: bool,
    #[serde(skip)]
    pub record_trace: bool,
}

impl Default for SlamParams {
    fn default() -> Self {
        SlamParams {
            pose_cells: PoseCellConfig::default(),
            match_threshold_cm: MATCH_THRESHOLD_CM,
            inject_energy: INJECT_ENERGY,
            loop_closure: true,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// `None` selects the built-in maze.
    pub maze: Option<PathBuf>,
    pub trajectory: TrajectorySource,
    pub decoder: DecoderSource,
    pub slam: SlamParams,
    /// Fraction of the session before the SLAM (test) part starts.
    pub split_fraction: f64,
    /// Where artifacts go; not part of the recorded config, so identical runs
    /// written to different directories stay byte-identical.
    #[serde(skip)]
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            maze: None,
            trajectory: TrajectorySource::Simulate(SessionConfig::default()),
            decoder: DecoderSource::Oracle { profile: NoiseProfile::ZERO, seed: 1 },
            slam: SlamParams::default(),
            split_fraction: 0.8,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::invalid("split fraction must lie in (0, 1)"));
        }
        for p in [self.maze.as_ref(), self.trajectory_path(), self.decodings_path()].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::invalid(format!("{} does not exist", p.display())));
            }
        }
        if let DecoderSource::Oracle { profile, .. } = &self.decoder {
            profile.validate()?;
        }
        if let TrajectorySource::Simulate(s) = &self.trajectory {
            s.validate()?;
        }
        self.slam.pose_cells.validate()?;
        if !(self.slam.match_threshold_cm > 0.0) || !(self.slam.inject_energy > 0.0) {
            return Err(Error::invalid("match threshold and injection energy must be positive"));
        }
        Ok(())
    }

    fn trajectory_path(&self) -> Option<&PathBuf> {
        match &self.trajectory {
            TrajectorySource::Csv(p) => Some(p),
            _ => None,
        }
    }

    fn decodings_path(&self) -> Option<&PathBuf> {
        match &self.decoder {
            DecoderSource::Csv(p) => Some(p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    ReadDecoding,
    MatchView,
    Inject,
    Dynamics,
    PathIntegrate,
    MapUpdate,
    Record,
}

impl Stage {
    pub const ORDER: [Stage; 7] = [
        Stage::ReadDecoding,
        Stage::MatchView,
        Stage::Inject,
        Stage::Dynamics,
        Stage::PathIntegrate,
        Stage::MapUpdate,
        Stage::Record,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub online_location_mae_cm: f64,
    pub direction_mae_deg: f64,
    pub speed_mae_cm_s: f64,
    /// `None` when the map is too small or collinear to align.
    pub map_fidelity_rmse_cm: Option<f64>,
    pub map_scale: Option<f64>,
    pub endpoint_error_cm: f64,
    pub n_steps: usize,
    pub n_view_cells: usize,
    pub n_experience_nodes: usize,
    pub n_links: usize,
    pub n_injections: usize,
    pub aliasing_violations: usize,
    pub border_truncation_events: u64,
    pub loop_closure: bool,
}

/// One recorded step, positions in maze coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub t_ms: u64,
    pub x_cm: f64,
    pub y_cm: f64,
    pub theta_deg: f64,
    pub truth_x_cm: f64,
    pub truth_y_cm: f64,
}

impl PoseRecord {
    pub fn estimate(&self) -> Point {
        Point::new(self.x_cm, self.y_cm)
    }

    pub fn truth(&self) -> Point {
        Point::new(self.truth_x_cm, self.truth_y_cm)
    }
}

#[derive(Debug, Clone)]
pub struct SlamOutcome {
    pub report: SessionReport,
    pub poses: Vec<PoseRecord>,
    pub registry: ViewCellRegistry,
    pub map: ExperienceMap,
    /// Ground truth at each node's creation, indexed by node id.
    pub node_truth: Vec<Point>,
    pub trace: Vec<Stage>,
    pub network: PoseCellNetwork,
    /// Added to maze coordinates to get pose-grid coordinates.
    pub grid_offset: Point,
}

/// Offset that centres the maze's bounding box in the pose-cell grid,
/// rounded to whole cells so maze coordinates on the cell pitch land on
/// cell centres.
pub fn grid_offset(maze: &MazeSkeleton, cfg: &PoseCellConfig) -> Result<Point> {
    let (ex, ey) = cfg.extent_cm();
    let (w, h) = maze.bounding_box;
    if w > ex || h > ey {
        return Err(Error::invalid(format!(
            "maze ({w} × {h} cm) does not fit the pose-cell grid ({ex} × {ey} cm)"
        )));
    }
    let m = maze.min_corner();
    let cs = cfg.cell_size_cm;
    let snap = |v: f64| (v / cs).round() * cs;
    Ok(Point::new(snap((ex - w) / 2.0) - m.x, snap((ey - h) / 2.0) - m.y))
}

/// Runs the SLAM loop over paired decodings and ground truth. The first
/// decoding places the initial activity packet; steps run from the second.
pub fn run_slam(
    maze: &MazeSkeleton,
    truth: &[TrajectorySample],
    decodings: &[Decoding],
    params: &SlamParams,
    diagnostics: Option<&Path>,
) -> Result<SlamOutcome> {
    if truth.len() != decodings.len() {
        return Err(Error::invalid("decodings and ground truth must pair up one to one"));
    }
    if decodings.len() < 2 {
        return Err(Error::invalid("a session needs at least two decodings"));
    }
    if let Some((t, d)) = truth.iter().zip(decodings).find(|(t, d)| t.t_ms != d.t_ms) {
        return Err(Error::invalid(format!("decoding at {} ms paired with truth at {} ms", d.t_ms, t.t_ms)));
    }
    let offset = grid_offset(maze, &params.pose_cells)?;
    let to_grid = |p: Point, theta: f64| PoseEstimate { x_cm: p.x + offset.x, y_cm: p.y + offset.y, theta_deg: theta };
    let to_maze = |e: PoseEstimate| PoseEstimate { x_cm: e.x_cm - offset.x, y_cm: e.y_cm - offset.y, theta_deg: e.theta_deg };

    let first = decodings[0];
    let mut net = PoseCellNetwork::with_packet(params.pose_cells, to_grid(first.position, first.direction))?;
    let mut registry = ViewCellRegistry::new(params.match_threshold_cm, params.inject_energy);
    let mut map = ExperienceMap::new();
    let mut poses = Vec::with_capacity(decodings.len() - 1);
    let mut trace = Vec::new();
    let mut node_truth: Vec<Point> = Vec::new();
    let max_speed = truth.iter().map(|s| s.speed).fold(0.0, f64::max);
    let mut active_since = first.t_ms;
    let mut aliasing = 0;
    let mut injections = 0;
    let mut mark = |s: Stage| {
        if params.record_trace {
            trace.push(s);
        }
    };

    for i in 1..decodings.len() {
        mark(Stage::ReadDecoding);
        let d = decodings[i];
        let dt = (d.t_ms - decodings[i - 1].t_ms) as f64;

        mark(Stage::MatchView);
        let before = net.center_of_activation()?;
        let (view, is_new) = registry.match_or_create(d.position, before, d.t_ms)?;

        mark(Stage::Inject);
        if params.loop_closure && registry.on_match_inject(&mut net)? {
            injections += 1;
        }

        mark(Stage::Dynamics);
        let backup = diagnostics.map(|_| net.clone());
        if let Err(e) = net.step_dynamics() {
            if let (Some(dir), Some(b)) = (diagnostics, backup) {
                b.snapshot(d.t_ms).save(&dir.join("extinguished.bslm"))?;
            }
            return Err(e);
        }

        mark(Stage::PathIntegrate);
        let heading = net.center_of_activation()?.theta_deg;
        let rotation = signed_diff_deg(d.direction, heading);
        net.path_integrate(d.speed, rotation, dt)?;

        mark(Stage::MapUpdate);
        let after = to_maze(net.center_of_activation()?);
        let prev_node = map.active_node();
        let odo = OdometryDelta::from_motion(d.speed, d.direction, rotation, dt);
        map.on_step(view, is_new, after, odo, d.t_ms)?;
        if is_new {
            node_truth.push(truth[i].position);
        }
        let node = map.active_node().expect("map has an active node after a step");
        if let Some(prev) = prev_node.filter(|p| *p != node) {
            let gap_s = (d.t_ms - active_since) as f64 / 1000.0;
            let allowance = max_speed * gap_s + 2.0 * params.match_threshold_cm + ALIASING_MARGIN_CM;
            if node_truth[prev].dist(node_truth[node]) > allowance {
                aliasing += 1;
            }
            active_since = d.t_ms;
        }

        mark(Stage::Record);
        poses.push(PoseRecord {
            t_ms: d.t_ms,
            x_cm: after.x_cm,
            y_cm: after.y_cm,
            theta_deg: after.theta_deg,
            truth_x_cm: truth[i].position.x,
            truth_y_cm: truth[i].position.y,
        });
    }

    let est: Vec<Point> = poses.iter().map(PoseRecord::estimate).collect();
    let tru: Vec<Point> = poses.iter().map(PoseRecord::truth).collect();
    let dec = decoding_maes(truth, decodings)?;
    let map_pts: Vec<Point> = map.nodes().iter().map(|n| n.position()).collect();
    let fit = procrustes(&map_pts, &node_truth).ok();
    let report = SessionReport {
        online_location_mae_cm: location_mae(&est, &tru)?,
        direction_mae_deg: dec.direction_mae_deg,
        speed_mae_cm_s: dec.speed_mae_cm_s,
        map_fidelity_rmse_cm: fit.map(|f| f.rmse),
        map_scale: fit.map(|f| f.scale),
        endpoint_error_cm: est.last().unwrap().dist(*tru.last().unwrap()),
        n_steps: poses.len(),
        n_view_cells: registry.len(),
        n_experience_nodes: map.nodes().len(),
        n_links: map.links().len(),
        n_injections: injections,
        aliasing_violations: aliasing,
        border_truncation_events: net.truncation_events(),
        loop_closure: params.loop_closure,
    };
    Ok(SlamOutcome { report, poses, registry, map, node_truth, trace, network: net, grid_offset: offset })
}

/// Index of the first test sample when `n` samples are split at `fraction`.
/// Both parts keep at least one sample, the test part at least two.
pub fn split_index(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).floor() as usize).clamp(1, n.saturating_sub(2).max(1))
}

/// Ground truth and decodings for the test split of a configured session.
pub struct SessionInputs {
    pub maze: MazeSkeleton,
    pub truth: Vec<TrajectorySample>,
    pub decodings: Vec<Decoding>,
}

pub fn prepare_inputs(cfg: &RunConfig) -> Result<SessionInputs> {
    cfg.validate()?;
    let maze = match &cfg.maze {
        Some(p) => MazeSkeleton::load(p)?,
        None => build_default_maze(),
    };
    let samples = match &cfg.trajectory {
        TrajectorySource::Simulate(s) => simulate_session(&maze, s)?.samples,
        TrajectorySource::Csv(p) => trajectory::load_csv(p)?,
    };
    if samples.len() < 3 {
        return Err(Error::invalid("trajectory too short to split"));
    }
    let split = split_index(samples.len(), cfg.split_fraction);
    let split_t = samples[split].t_ms;
    let (truth, decodings) = match &cfg.decoder {
        DecoderSource::Oracle { profile, seed } => {
            let test = samples[split..].to_vec();
            let d = noisy_oracle(&test, *profile, *seed)?.collect();
            (test, d)
        }
        DecoderSource::Csv(p) => {
            let by_t: HashMap<u64, &TrajectorySample> = samples.iter().map(|s| (s.t_ms, s)).collect();
            let d: Vec<Decoding> = decoder::load_decodings(p)?.into_iter().filter(|d| d.t_ms >= split_t).collect();
            let t = d
                .iter()
                .map(|d| {
                    by_t.get(&d.t_ms).map(|s| **s).ok_or_else(|| {
                        Error::invalid(format!("decoding at {} ms has no ground-truth sample", d.t_ms))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (t, d)
        }
    };
    Ok(SessionInputs { maze, truth, decodings })
}

/// Full session: inputs, SLAM loop, and artifacts when an output directory
/// is configured.
pub fn run_session(cfg: &RunConfig) -> Result<SlamOutcome> {
    let inputs = prepare_inputs(cfg)?;
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let out = run_slam(&inputs.maze, &inputs.truth, &inputs.decodings, &cfg.slam, cfg.output_dir.as_deref())?;
    if let Some(dir) = &cfg.output_dir {
        write_artifacts(dir, cfg, &inputs, &out)?;
    }
    Ok(out)
}

pub const ARTIFACTS: [&str; 8] = [
    "run.json",
    "trajectory.csv",
    "decodings.csv",
    "registry.csv",
    "map.json",
    "map.svg",
    "poses.csv",
    "report.json",
];

/// Skeleton segments expressed in the frame of a map whose first node was
/// created at `origin` (maze coordinates).
pub fn skeleton_in_map_frame(maze: &MazeSkeleton, origin: PoseEstimate) -> Vec<Segment> {
    let o = Point::new(origin.x_cm, origin.y_cm);
    maze.segments.iter().map(|s| Segment::new(s.a - o, s.b - o)).collect()
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::invalid(e.to_string()))?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn write_artifacts(dir: &Path, cfg: &RunConfig, inputs: &SessionInputs, out: &SlamOutcome) -> Result<()> {
    write_json(&dir.join("run.json"), cfg)?;
    trajectory::save_csv(&dir.join("trajectory.csv"), &inputs.truth)?;
    decoder::save_decodings(&dir.join("decodings.csv"), &inputs.decodings)?;
    out.registry.save_csv(&dir.join("registry.csv"))?;
    out.map.save(&dir.join("map.json"))?;
    let overlay = out.map.origin().map(|o| skeleton_in_map_frame(&inputs.maze, o));
    let svg = render_svg(&out.map, overlay.as_deref());
    let p = dir.join("map.svg");
    std::fs::write(&p, svg).map_err(|e| Error::io(&p, e))?;
    save_poses(&dir.join("poses.csv"), &out.poses)?;
    write_json(&dir.join("report.json"), &out.report)
}

pub fn save_poses(path: &Path, poses: &[PoseRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    for p in poses {
        w.serialize(p).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_poses(path: &Path) -> Result<Vec<PoseRecord>> {
    let origin = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(&origin, 0, e.to_string()))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse(&origin, i as u64 + 2, e.to_string())))
        .collect()
}

/// Recomputes the metric fields of a report from a run's artifacts. Counters
/// that need the live loop (injections, aliasing, border truncation) are
/// carried over from the stored report.
pub fn report_from_artifacts(dir: &Path) -> Result<SessionReport> {
    let truth = trajectory::load_csv(&dir.join("trajectory.csv"))?;
    let decodings = decoder::load_decodings(&dir.join("decodings.csv"))?;
    let poses = load_poses(&dir.join("poses.csv"))?;
    let map = ExperienceMap::load(&dir.join("map.json"))?;
    let stored: SessionReport = {
        let p = dir.join("report.json");
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(p.display().to_string(), e.line() as u64, e.to_string()))?
    };
    let n_view_cells = {
        let p = dir.join("registry.csv");
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        text.lines().count().saturating_sub(1)
    };
    let dec = decoding_maes(&truth, &decodings)?;
    let est: Vec<Point> = poses.iter().map(PoseRecord::estimate).collect();
    let tru: Vec<Point> = poses.iter().map(PoseRecord::truth).collect();
    let by_t: HashMap<u64, Point> = truth.iter().map(|s| (s.t_ms, s.position)).collect();
    let node_truth = map
        .nodes()
        .iter()
        .map(|n| {
            by_t.get(&n.created_t_ms)
                .copied()
                .ok_or_else(|| Error::invalid(format!("no ground truth at node {}'s creation time", n.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let map_pts: Vec<Point> = map.nodes().iter().map(|n| n.position()).collect();
    let fit = procrustes(&map_pts, &node_truth).ok();
    Ok(SessionReport {
        online_location_mae_cm: location_mae(&est, &tru)?,
        direction_mae_deg: dec.direction_mae_deg,
        speed_mae_cm_s: dec.speed_mae_cm_s,
        map_fidelity_rmse_cm: fit.map(|f| f.rmse),
        map_scale: fit.map(|f| f.scale),
        endpoint_error_cm: match (est.last(), tru.last()) {
            (Some(a), Some(b)) => a.dist(*b),
            _ => return Err(Error::invalid("poses.csv holds no steps")),
        },
        n_steps: poses.len(),
        n_view_cells,
        n_experience_nodes: map.nodes().len(),
        n_links: map.links().len(),
        ..stored
    })
}
