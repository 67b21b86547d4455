//! Maze skeleton geometry: the piecewise-linear track the agent is confined to,
//! projection of raw positions onto it, and cardinal direction quantisation.
//!
//! The canonical maze is a figure-of-eight double-T: a central stem running
//! from the start box up to the choice point, a top crossbar whose two halves
//! are the left and right choice arms, return arms down both sides, and a
//! bottom crossbar leading back to the stem. Coordinates (cm, origin at the
//! bottom-left corner):
//!
//! ```text
//!  (0,170) R ------ (65,170) ------ R (130,170)
//!     |                 |                |
//!     |                 |                |
//!   (0,0) ---------- (65,0) ---------- (130,0)
//! ```
//!
//! Text format: one segment per line as `x1 y1 x2 y2`, reward sites as
//! `R x y`, `#` starts a comment. The first segment is the stem, written from
//! the start box towards the choice point.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{wrap_deg, Point};

const ON_SEGMENT_EPS: f64 = 1e-9;

/// Direction quantisation half-width around each cardinal, degrees.
pub const CARDINAL_TOLERANCE_DEG: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub fn new(a: Point, b: Point) -> Self {
        Segment { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.dist(self.b)
    }

    pub fn is_axis_aligned(&self) -> bool {
        let dx = self.a.x != self.b.x;
        let dy = self.a.y != self.b.y;
        dx ^ dy
    }

    pub fn point_at(&self, offset: f64) -> Point {
        let len = self.length();
        if len == 0.0 {
            return self.a;
        }
        self.a.lerp(self.b, offset / len)
    }

    /// Closest point on the segment: (offset along the segment, point).
    fn closest(&self, p: Point) -> (f64, Point) {
        let len = self.length();
        if len == 0.0 {
            return (0.0, self.a);
        }
        let ux = (self.b.x - self.a.x) / len;
        let uy = (self.b.y - self.a.y) / len;
        let t = ((p.x - self.a.x) * ux + (p.y - self.a.y) * uy).clamp(0.0, len);
        // Snap exact endpoints so positions on a vertex are bit-identical.
        let q = if t == 0.0 {
            self.a
        } else if t == len {
            self.b
        } else {
            Point::new(self.a.x + ux * t, self.a.y + uy * t)
        };
        (t, q)
    }

    pub fn distance_to(&self, p: Point) -> f64 {
        self.closest(p).1.dist(p)
    }

    fn contains(&self, p: Point) -> bool {
        self.distance_to(p) <= ON_SEGMENT_EPS
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkeletonPoint {
    pub segment_index: usize,
    pub offset_cm: f64,
    pub position: Point,
    /// Distance from the projected input to `position`.
    pub distance_cm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Turn {
    Left,
    Right,
}

impl Turn {
    pub fn opposite(self) -> Turn {
        match self {
            Turn::Left => Turn::Right,
            Turn::Right => Turn::Left,
        }
    }
}

/// The four directions of travel available on an axis-aligned skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cardinal {
    East,
    North,
    West,
    South,
}

impl Cardinal {
    pub const ALL: [Cardinal; 4] = [Cardinal::East, Cardinal::North, Cardinal::West, Cardinal::South];

    pub fn degrees(self) -> f64 {
        match self {
            Cardinal::East => 0.0,
            Cardinal::North => 90.0,
            Cardinal::West => 180.0,
            Cardinal::South => 270.0,
        }
    }

    pub fn nearest(angle_deg: f64) -> Cardinal {
        let idx = (wrap_deg(angle_deg) / 90.0).round() as usize % 4;
        Cardinal::ALL[idx]
    }
}

/// Quantise a heading to a cardinal direction when it lies within ±10° of one.
///
/// Returns `None` for headings in the gaps between cardinal windows; the caller
/// decides whether to snap (`Cardinal::nearest`) or keep the raw angle.
pub fn quantize_direction(angle_deg: f64) -> Option<Cardinal> {
    let c = Cardinal::nearest(angle_deg);
    let d = crate::geom::abs_diff_deg(angle_deg, c.degrees());
    (d <= CARDINAL_TOLERANCE_DEG).then_some(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MazeSkeleton {
    pub segments: Vec<Segment>,
    pub reward_sites: Vec<Point>,
    /// (width_cm, height_cm) of the axis-aligned extent of all segments.
    pub bounding_box: (f64, f64),
}

/// Canonical figure-of-eight double-T maze, 130 cm × 170 cm.
pub fn build_default_maze() -> MazeSkeleton {
    let p = Point::new;
    let segments = vec![
        Segment::new(p(65.0, 0.0), p(65.0, 170.0)),   // stem
        Segment::new(p(65.0, 170.0), p(0.0, 170.0)),  // left choice arm
        Segment::new(p(65.0, 170.0), p(130.0, 170.0)), // right choice arm
        Segment::new(p(0.0, 170.0), p(0.0, 0.0)),     // left return arm
        Segment::new(p(130.0, 170.0), p(130.0, 0.0)), // right return arm
        Segment::new(p(0.0, 0.0), p(65.0, 0.0)),      // bottom crossbar, left half
        Segment::new(p(130.0, 0.0), p(65.0, 0.0)),    // bottom crossbar, right half
    ];
    MazeSkeleton::new(segments, vec![p(0.0, 170.0), p(130.0, 170.0)])
        .expect("canonical maze is valid")
}

impl MazeSkeleton {
    /// Builds a skeleton, checking it is non-empty and connected.
    pub fn new(segments: Vec<Segment>, reward_sites: Vec<Point>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::invalid("maze skeleton has no segments"));
        }
        if segments
            .iter()
            .any(|s| !s.a.is_finite() || !s.b.is_finite() || s.length() == 0.0)
        {
            return Err(Error::invalid("maze segments must be finite and non-degenerate"));
        }
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for s in &segments {
            for q in [s.a, s.b] {
                x0 = x0.min(q.x);
                y0 = y0.min(q.y);
                x1 = x1.max(q.x);
                y1 = y1.max(q.y);
            }
        }
        let maze = MazeSkeleton {
            segments,
            reward_sites,
            bounding_box: (x1 - x0, y1 - y0),
        };
        if !maze.is_connected() {
            return Err(Error::invalid("maze skeleton is not connected"));
        }
        Ok(maze)
    }

    pub fn is_axis_aligned(&self) -> bool {
        self.segments.iter().all(Segment::is_axis_aligned)
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    /// Lower-left corner of the bounding box.
    pub fn min_corner(&self) -> Point {
        let mut m = Point::new(f64::MAX, f64::MAX);
        for s in &self.segments {
            for q in [s.a, s.b] {
                m.x = m.x.min(q.x);
                m.y = m.y.min(q.y);
            }
        }
        m
    }

    /// Two segments touch when an endpoint of one lies on the other.
    fn touches(&self, i: usize, j: usize) -> bool {
        let (s, t) = (&self.segments[i], &self.segments[j]);
        t.contains(s.a) || t.contains(s.b) || s.contains(t.a) || s.contains(t.b)
    }

    /// Breadth-first search over touching segments.
    pub fn is_connected(&self) -> bool {
        let n = self.segments.len();
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if !seen[j] && self.touches(i, j) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Closest skeleton point to `p`. Ties go to the lowest segment index,
    /// then the lowest offset.
    pub fn project(&self, p: Point) -> SkeletonPoint {
        let mut best: Option<SkeletonPoint> = None;
        for (i, s) in self.segments.iter().enumerate() {
            let (offset, q) = s.closest(p);
            let d = q.dist(p);
            let better = match &best {
                None => true,
                Some(b) => d < b.distance_cm,
            };
            if better {
                best = Some(SkeletonPoint {
                    segment_index: i,
                    offset_cm: offset,
                    position: q,
                    distance_cm: d,
                });
            }
        }
        best.expect("skeleton is non-empty")
    }

    pub fn start(&self) -> Point {
        self.segments[0].a
    }

    pub fn choice_point(&self) -> Point {
        self.segments[0].b
    }

    /// Reward site on the given side of the stem, judged by the sign of the
    /// cross product between the stem direction and the site offset.
    pub fn reward_site(&self, side: Turn) -> Option<Point> {
        let stem = &self.segments[0];
        let (dx, dy) = (stem.b.x - stem.a.x, stem.b.y - stem.a.y);
        let cp = self.choice_point();
        self.reward_sites.iter().copied().find(|r| {
            let cross = dx * (r.y - cp.y) - dy * (r.x - cp.x);
            match side {
                Turn::Left => cross > 0.0,
                Turn::Right => cross < 0.0,
            }
        })
    }

    /// Closed route for one epoch: up the stem, along the chosen arm to its
    /// reward site, then back to the start without reusing any track.
    pub fn epoch_route(&self, side: Turn) -> Result<Vec<Point>> {
        let reward = self
            .reward_site(side)
            .ok_or_else(|| Error::invalid(format!("maze has no {side:?} reward site")))?;
        let graph = TrackGraph::build(self);
        let start = graph.vertex(self.start());
        let choice = graph.vertex(self.choice_point());
        let goal = graph.vertex(reward);
        let (Some(start), Some(choice), Some(goal)) = (start, choice, goal) else {
            return Err(Error::invalid("start, choice point or reward site is not a track vertex"));
        };
        let mut used = vec![false; graph.edges.len()];
        let mut path = vec![start];
        for target in [choice, goal, start] {
            let from = *path.last().unwrap();
            let leg = graph
                .shortest_path(from, target, &used)
                .ok_or_else(|| Error::invalid("no route through the maze for this epoch"))?;
            for w in leg.windows(2) {
                if let Some(e) = graph.edge_between(w[0], w[1]) {
                    used[e] = true;
                }
            }
            path.extend_from_slice(&leg[1..]);
        }
        Ok(path.into_iter().map(|v| graph.vertices[v]).collect())
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut segments = Vec::new();
        let mut rewards = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i as u64 + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields: Vec<&str> = line.split_whitespace().collect();
            let is_reward = fields[0] == "R" || fields[0] == "r";
            if is_reward {
                fields.remove(0);
            }
            let nums = fields
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(origin, line_no, format!("bad number: {e}")))?;
            match (is_reward, nums.as_slice()) {
                (true, [x, y]) => rewards.push(Point::new(*x, *y)),
                (false, [x1, y1, x2, y2]) => {
                    segments.push(Segment::new(Point::new(*x1, *y1), Point::new(*x2, *y2)))
                }
                (true, _) => {
                    return Err(Error::parse(origin, line_no, "reward line needs `R x y`"))
                }
                (false, _) => {
                    return Err(Error::parse(origin, line_no, "segment line needs `x1 y1 x2 y2`"))
                }
            }
        }
        MazeSkeleton::new(segments, rewards)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# maze skeleton: x1 y1 x2 y2 (cm); reward sites: R x y\n");
        for s in &self.segments {
            let _ = writeln!(out, "{} {} {} {}", s.a.x, s.a.y, s.b.x, s.b.y);
        }
        for r in &self.reward_sites {
            let _ = writeln!(out, "R {} {}", r.x, r.y);
        }
        out
    }
}

/// Track as an undirected graph, with segments split wherever another
/// segment's endpoint lands on them (T-junctions).
struct TrackGraph {
    vertices: Vec<Point>,
    edges: Vec<(usize, usize, f64)>,
}

impl TrackGraph {
    fn build(maze: &MazeSkeleton) -> Self {
        let mut vertices: Vec<Point> = Vec::new();
        let intern = |p: Point, vs: &mut Vec<Point>| -> usize {
            if let Some(i) = vs.iter().position(|v| v.dist(p) <= ON_SEGMENT_EPS) {
                i
            } else {
                vs.push(p);
                vs.len() - 1
            }
        };
        for s in &maze.segments {
            intern(s.a, &mut vertices);
            intern(s.b, &mut vertices);
        }
        for r in &maze.reward_sites {
            if maze.segments.iter().any(|s| s.contains(*r)) {
                intern(*r, &mut vertices);
            }
        }
        let mut edges = Vec::new();
        for s in &maze.segments {
            let mut on: Vec<(f64, usize)> = vertices
                .iter()
                .enumerate()
                .filter(|(_, v)| s.contains(**v))
                .map(|(i, v)| (s.a.dist(*v), i))
                .collect();
            on.sort_by(|x, y| x.0.total_cmp(&y.0));
            for w in on.windows(2) {
                let len = w[1].0 - w[0].0;
                if len > 0.0 {
                    edges.push((w[0].1, w[1].1, len));
                }
            }
        }
        TrackGraph { vertices, edges }
    }

    fn vertex(&self, p: Point) -> Option<usize> {
        self.vertices.iter().position(|v| v.dist(p) <= ON_SEGMENT_EPS)
    }

    fn edge_between(&self, u: usize, v: usize) -> Option<usize> {
        self.edges
            .iter()
            .position(|&(a, b, _)| (a == u && b == v) || (a == v && b == u))
    }

    /// Dijkstra over unused edges; ties resolved towards lower vertex indices.
    fn shortest_path(&self, from: usize, to: usize, used: &[bool]) -> Option<Vec<usize>> {
        let n = self.vertices.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut done = vec![false; n];
        dist[from] = 0.0;
        loop {
            let u = (0..n)
                .filter(|&i| !done[i] && dist[i].is_finite())
                .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))?;
            if u == to {
                break;
            }
            done[u] = true;
            for (e, &(a, b, w)) in self.edges.iter().enumerate() {
                if used[e] {
                    continue;
                }
                let v = if a == u {
                    b
                } else if b == u {
                    a
                } else {
                    continue;
                };
                if dist[u] + w < dist[v] {
                    dist[v] = dist[u] + w;
                    prev[v] = u;
                }
            }
        }
        let mut path = vec![to];
        while *path.last().unwrap() != from {
            path.push(prev[*path.last().unwrap()]);
        }
        path.reverse();
        Some(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_maze_dimensions() {
        let m = build_default_maze();
        assert_eq!(m.bounding_box, (130.0, 170.0));
        assert!(m.is_axis_aligned());
        assert!(m.is_connected());
        assert_eq!(m.reward_sites.len(), 2);
        assert_eq!(m.total_length(), 770.0);
    }

    #[test]
    fn point_on_segment_projects_to_itself() {
        let m = build_default_maze();
        let sp = m.project(Point::new(65.0, 40.0));
        assert_eq!(sp.segment_index, 0);
        assert_eq!(sp.position, Point::new(65.0, 40.0));
        assert_eq!(sp.distance_cm, 0.0);
    }

    #[test]
    fn perpendicular_offset_projects_to_foot() {
        let m = build_default_maze();
        let sp = m.project(Point::new(68.0, 85.0));
        assert_eq!(sp.segment_index, 0);
        assert_eq!(sp.position, Point::new(65.0, 85.0));
        assert!((sp.distance_cm - 3.0).abs() < 1e-12);
    }

    #[test]
    fn equidistant_point_goes_to_lower_index() {
        // Brute force confirms (32.5, 85) sits 32.5 cm from both the stem (0)
        // and the left return arm (3).
        let m = build_default_maze();
        let p = Point::new(32.5, 85.0);
        let d: Vec<f64> = m.segments.iter().map(|s| s.distance_to(p)).collect();
        assert_eq!(d[0], d[3]);
        let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(min, d[0]);
        assert_eq!(m.project(p).segment_index, 0);
    }

    #[test]
    fn direction_quantisation_windows() {
        assert_eq!(quantize_direction(7.0), Some(Cardinal::East));
        assert_eq!(quantize_direction(270.0), Some(Cardinal::South));
        assert_eq!(quantize_direction(45.0), None);
        assert_eq!(quantize_direction(350.0), Some(Cardinal::East));
        assert_eq!(quantize_direction(100.0), Some(Cardinal::North));
        assert_eq!(quantize_direction(100.5), None);
    }

    #[test]
    fn text_round_trip_and_errors() {
        let m = build_default_maze();
        let back = MazeSkeleton::from_text(&m.to_text(), "mem").unwrap();
        assert_eq!(back, m);

        let err = MazeSkeleton::from_text("0 0 10 0\n0 0 10\n", "bad.txt").unwrap_err();
        assert!(err.to_string().contains("bad.txt:2"), "{err}");

        let disconnected = MazeSkeleton::from_text("0 0 10 0\n50 50 60 50\n", "x");
        assert!(disconnected.is_err());
    }

    #[test]
    fn loader_accepts_diagonal_segments() {
        let m = MazeSkeleton::from_text("# diag\n0 0 10 10\n10 10 20 10\n", "x").unwrap();
        assert!(!m.is_axis_aligned());
    }

    #[test]
    fn t_junctions_count_as_connected() {
        let m = MazeSkeleton::from_text("50 0 50 100\n0 100 100 100\n", "x").unwrap();
        assert!(m.is_connected());
    }

    #[test]
    fn epoch_routes_go_up_the_stem_first() {
        let m = build_default_maze();
        let right = m.epoch_route(Turn::Right).unwrap();
        let expect = [(65., 0.), (65., 170.), (130., 170.), (130., 0.), (65., 0.)];
        let got: Vec<(f64, f64)> = right.iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(got, expect);
        let left = m.epoch_route(Turn::Left).unwrap();
        assert_eq!(left[2], Point::new(0.0, 170.0));
        assert_eq!(m.reward_site(Turn::Left), Some(Point::new(0.0, 170.0)));
    }

    #[test]
    fn routes_work_on_unsplit_crossbars() {
        // Same maze written with whole crossbars: the stem meets them mid-span.
        let text = "65 0 65 170\n0 170 130 170\n0 0 0 170\n130 0 130 170\n0 0 130 0\nR 0 170\nR 130 170\n";
        let m = MazeSkeleton::from_text(text, "x").unwrap();
        let r = m.epoch_route(Turn::Left).unwrap();
        let got: Vec<(f64, f64)> = r.iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(got, [(65., 0.), (65., 170.), (0., 170.), (0., 0.), (65., 0.)]);
    }
}
