//! Experience map: nodes tied one-to-one to view cells, placed at the pose
//! estimate when first seen, and links carrying the odometry accumulated
//! between consecutive activations.
//!
//! Positions are relative to the first node, which sits at (0, 0, 0). Node
//! positions are never revised after creation.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{signed_diff_deg, wrap_deg, Point};
use crate::maze::Segment;
use crate::pose_cells::PoseEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperienceNode {
    pub id: usize,
    pub x_cm: f64,
    pub y_cm: f64,
    pub theta_deg: f64,
    pub view_cell_id: usize,
    pub created_t_ms: u64,
}

impl ExperienceNode {
    pub fn position(&self) -> Point {
        Point::new(self.x_cm, self.y_cm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperienceLink {
    pub from: usize,
    pub to: usize,
    pub dx_cm: f64,
    pub dy_cm: f64,
    pub dtheta_deg: f64,
    pub traversals: u64,
}

/// Movement over one step or accumulated over several.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OdometryDelta {
    pub dx_cm: f64,
    pub dy_cm: f64,
    pub dtheta_deg: f64,
}

impl OdometryDelta {
    /// Displacement of `speed * dt` along `heading_deg`, plus a rotation.
    pub fn from_motion(speed_cm_s: f64, heading_deg: f64, rotation_deg: f64, dt_ms: f64) -> Self {
        let d = speed_cm_s * dt_ms / 1000.0;
        let h = heading_deg.to_radians();
        OdometryDelta { dx_cm: d * h.cos(), dy_cm: d * h.sin(), dtheta_deg: rotation_deg }
    }

    fn accumulate(&mut self, o: OdometryDelta) {
        self.dx_cm += o.dx_cm;
        self.dy_cm += o.dy_cm;
        self.dtheta_deg = signed_diff_deg(self.dtheta_deg + o.dtheta_deg, 0.0);
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperienceMap {
    nodes: Vec<ExperienceNode>,
    links: Vec<ExperienceLink>,
    active: Option<usize>,
    /// Absolute pose the first node was created at.
    origin: Option<PoseEstimate>,
    node_of_view: HashMap<usize, usize>,
    link_index: HashMap<(usize, usize), usize>,
    pending: OdometryDelta,
}

/// On-disk form of the map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFile {
    pub nodes: Vec<ExperienceNode>,
    pub links: Vec<ExperienceLink>,
    pub active_node: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<PoseEstimate>,
}

impl ExperienceMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &[ExperienceNode] {
        &self.nodes
    }

    pub fn links(&self) -> &[ExperienceLink] {
        &self.links
    }

    pub fn active_node(&self) -> Option<usize> {
        self.active
    }

    pub fn origin(&self) -> Option<PoseEstimate> {
        self.origin
    }

    /// 1 for the active node, 0 otherwise.
    pub fn activation(&self, node_id: usize) -> u8 {
        u8::from(self.active == Some(node_id))
    }

    pub fn node_for_view_cell(&self, view_cell_id: usize) -> Option<usize> {
        self.node_of_view.get(&view_cell_id).copied()
    }

    /// One pipeline step. `odometry` is this step's movement; it is summed
    /// until the active node changes and then stored on the link taken.
    pub fn on_step(
        &mut self,
        view_cell_id: usize,
        is_new_view_cell: bool,
        pose: PoseEstimate,
        odometry: OdometryDelta,
        t_ms: u64,
    ) -> Result<()> {
        if !(pose.x_cm.is_finite() && pose.y_cm.is_finite() && pose.theta_deg.is_finite()) {
            return Err(Error::invalid("pose must be finite"));
        }
        if self.active.is_some() {
            self.pending.accumulate(odometry);
        }
        let target = if is_new_view_cell {
            if self.node_of_view.contains_key(&view_cell_id) {
                return Err(Error::invalid(format!("view cell {view_cell_id} already has an experience")));
            }
            let origin = *self.origin.get_or_insert(pose);
            let id = self.nodes.len();
            self.nodes.push(ExperienceNode {
                id,
                x_cm: pose.x_cm - origin.x_cm,
                y_cm: pose.y_cm - origin.y_cm,
                theta_deg: wrap_deg(pose.theta_deg - origin.theta_deg),
                view_cell_id,
                created_t_ms: t_ms,
            });
            self.node_of_view.insert(view_cell_id, id);
            id
        } else {
            self.node_of_view
                .get(&view_cell_id)
                .copied()
                .ok_or_else(|| Error::invalid(format!("unknown view cell {view_cell_id}")))?
        };
        if let Some(prev) = self.active {
            if prev != target {
                self.record_link(prev, target);
                self.pending = OdometryDelta::default();
            }
        }
        self.active = Some(target);
        Ok(())
    }

    fn record_link(&mut self, from: usize, to: usize) {
        let d = self.pending;
        match self.link_index.get(&(from, to)) {
            Some(&i) => {
                let l = &mut self.links[i];
                l.dx_cm = d.dx_cm;
                l.dy_cm = d.dy_cm;
                l.dtheta_deg = d.dtheta_deg;
                l.traversals += 1;
            }
            None => {
                self.link_index.insert((from, to), self.links.len());
                self.links.push(ExperienceLink {
                    from,
                    to,
                    dx_cm: d.dx_cm,
                    dy_cm: d.dy_cm,
                    dtheta_deg: d.dtheta_deg,
                    traversals: 1,
                });
            }
        }
    }

    pub fn to_file(&self) -> MapFile {
        MapFile { nodes: self.nodes.clone(), links: self.links.clone(), active_node: self.active, origin: self.origin }
    }

    pub fn from_file(f: MapFile) -> Result<Self> {
        let mut map = ExperienceMap { active: f.active_node, origin: f.origin, ..Self::default() };
        for (i, n) in f.nodes.iter().enumerate() {
            if n.id != i {
                return Err(Error::invalid(format!("node ids must run 0..n in order, found {} at {i}", n.id)));
            }
            if map.node_of_view.insert(n.view_cell_id, i).is_some() {
                return Err(Error::invalid(format!("view cell {} has two experiences", n.view_cell_id)));
            }
        }
        let n = f.nodes.len();
        for (i, l) in f.links.iter().enumerate() {
            if l.from >= n || l.to >= n || l.from == l.to {
                return Err(Error::invalid(format!("link {}→{} is invalid", l.from, l.to)));
            }
            if map.link_index.insert((l.from, l.to), i).is_some() {
                return Err(Error::invalid(format!("duplicate link {}→{}", l.from, l.to)));
            }
        }
        if f.active_node.is_some_and(|a| a >= n) {
            return Err(Error::invalid("active node does not exist"));
        }
        map.nodes = f.nodes;
        map.links = f.links;
        Ok(map)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file()).expect("map serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let f: MapFile = serde_json::from_str(text)
            .map_err(|e| Error::parse(origin, e.line() as u64, e.to_string()))?;
        Self::from_file(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }
}

/// SVG drawing of the map: links as lines, nodes as dots, and optionally a
/// reference skeleton (already expressed in map coordinates) underneath.
pub fn render_svg(map: &ExperienceMap, overlay: Option<&[Segment]>) -> String {
    const PX_PER_CM: f64 = 3.0;
    const MARGIN: f64 = 20.0;
    let mut pts: Vec<Point> = map.nodes().iter().map(|n| n.position()).collect();
    if let Some(segs) = overlay {
        pts.extend(segs.iter().flat_map(|s| [s.a, s.b]));
    }
    let (min_x, max_x, min_y, max_y) = if pts.is_empty() {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        pts.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), p| (a.min(p.x), b.max(p.x), c.min(p.y), d.max(p.y)),
        )
    };
    let w = (max_x - min_x) * PX_PER_CM + 2.0 * MARGIN;
    let h = (max_y - min_y) * PX_PER_CM + 2.0 * MARGIN;
    // SVG y grows downwards
    let tx = |p: Point| ((p.x - min_x) * PX_PER_CM + MARGIN, (max_y - p.y) * PX_PER_CM + MARGIN);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1}" height="{h:.1}" viewBox="0 0 {w:.1} {h:.1}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if let Some(segs) = overlay {
        let _ = writeln!(s, r##"<g id="skeleton" stroke="#9ab" stroke-width="6" stroke-linecap="round" opacity="0.6">"##);
        for seg in segs {
            let ((x1, y1), (x2, y2)) = (tx(seg.a), tx(seg.b));
            let _ = writeln!(s, r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}"/>"#);
        }
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(s, r##"<g id="links" stroke="#c33" stroke-width="1">"##);
    for l in map.links() {
        let ((x1, y1), (x2, y2)) = (tx(map.nodes()[l.from].position()), tx(map.nodes()[l.to].position()));
        let _ = writeln!(s, r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}"/>"#);
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r##"<g id="nodes" fill="#222">"##);
    for n in map.nodes() {
        let (cx, cy) = tx(n.position());
        let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2"/>"#);
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose(x: f64, y: f64, t: f64) -> PoseEstimate {
        PoseEstimate { x_cm: x, y_cm: y, theta_deg: t }
    }

    fn step(dx: f64) -> OdometryDelta {
        OdometryDelta { dx_cm: dx, dy_cm: 0.0, dtheta_deg: 0.0 }
    }

    #[test]
    fn first_node_sits_at_origin() {
        let mut m = ExperienceMap::new();
        m.on_step(0, true, pose(40.0, 60.0, 90.0), OdometryDelta::default(), 0).unwrap();
        let n = m.nodes()[0];
        assert_eq!((n.x_cm, n.y_cm, n.theta_deg), (0.0, 0.0, 0.0));
        assert_eq!(m.activation(0), 1);
    }

    #[test]
    fn second_node_offset_by_movement() {
        let mut m = ExperienceMap::new();
        m.on_step(0, true, pose(40.0, 60.0, 0.0), OdometryDelta::default(), 0).unwrap();
        m.on_step(1, true, pose(50.0, 60.0, 0.0), step(10.0), 40).unwrap();
        let n = m.nodes()[1];
        assert_eq!((n.x_cm, n.y_cm, n.theta_deg), (10.0, 0.0, 0.0));
        let l = m.links()[0];
        assert_eq!((l.from, l.to, l.dx_cm, l.dy_cm, l.dtheta_deg, l.traversals), (0, 1, 10.0, 0.0, 0.0, 1));
    }

    #[test]
    fn revisit_reactivates_single_node() {
        let mut m = ExperienceMap::new();
        m.on_step(0, true, pose(0.0, 0.0, 0.0), step(0.0), 0).unwrap();
        m.on_step(1, true, pose(10.0, 0.0, 0.0), step(10.0), 40).unwrap();
        m.on_step(2, true, pose(20.0, 0.0, 0.0), step(10.0), 80).unwrap();
        m.on_step(0, false, pose(0.0, 0.0, 0.0), step(-20.0), 120).unwrap();
        assert_eq!(m.active_node(), Some(0));
        assert_eq!((0..3).map(|i| m.activation(i) as u32).sum::<u32>(), 1);
        assert_eq!(m.links().len(), 3);
        assert_eq!(m.links()[2].dx_cm, -20.0);
    }

    #[test]
    fn repeated_traversal_counts_and_keeps_latest_delta() {
        let mut m = ExperienceMap::new();
        m.on_step(0, true, pose(0.0, 0.0, 0.0), step(0.0), 0).unwrap();
        m.on_step(1, true, pose(10.0, 0.0, 0.0), step(10.0), 40).unwrap();
        m.on_step(0, false, pose(0.0, 0.0, 0.0), step(-10.0), 80).unwrap();
        m.on_step(1, false, pose(10.0, 0.0, 0.0), step(9.0), 120).unwrap();
        let l = m.links()[0];
        assert_eq!((l.from, l.to, l.traversals, l.dx_cm), (0, 1, 2, 9.0));
        assert_eq!(m.links().len(), 2);
    }

    #[test]
    fn staying_on_one_node_accumulates() {
        let mut m = ExperienceMap::new();
        m.on_step(0, true, pose(0.0, 0.0, 0.0), step(0.0), 0).unwrap();
        m.on_step(0, false, pose(2.0, 0.0, 0.0), step(2.0), 40).unwrap();
        m.on_step(0, false, pose(4.0, 0.0, 0.0), step(2.0), 80).unwrap();
        m.on_step(1, true, pose(6.0, 0.0, 0.0), step(2.0), 120).unwrap();
        assert_eq!(m.links()[0].dx_cm, 6.0);
        assert!(m.links().iter().all(|l| l.from != l.to));
    }

    #[test]
    fn unknown_view_cell_is_an_error() {
        let mut m = ExperienceMap::new();
        assert!(m.on_step(3, false, pose(0.0, 0.0, 0.0), step(0.0), 0).is_err());
        m.on_step(3, true, pose(0.0, 0.0, 0.0), step(0.0), 0).unwrap();
        assert!(m.on_step(3, true, pose(0.0, 0.0, 0.0), step(0.0), 40).is_err());
    }

    #[test]
    fn empty_map_exports_empty_lists() {
        let f = ExperienceMap::new().to_file();
        assert!(f.nodes.is_empty() && f.links.is_empty());
        let back = ExperienceMap::from_json(&ExperienceMap::new().to_json(), "m").unwrap();
        assert_eq!(back, ExperienceMap::new());
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let mut m = ExperienceMap::new();
        m.on_step(0, true, pose(1.0 / 3.0, 2.0, 10.0), step(0.0), 0).unwrap();
        m.on_step(1, true, pose(10.1, 0.7, 350.0), step(9.8), 40).unwrap();
        m.on_step(2, true, pose(20.3, -1.0, 5.0), OdometryDelta { dx_cm: 10.2, dy_cm: -1.7, dtheta_deg: 15.0 }, 80).unwrap();
        let j1 = m.to_json();
        let j2 = ExperienceMap::from_json(&j1, "m").unwrap().to_json();
        assert_eq!(j1, j2);
        let f = m.to_file();
        assert_eq!(f.links.len(), 2);
        assert_eq!((f.links[0].from, f.links[0].to, f.links[1].from, f.links[1].to), (0, 1, 1, 2));
        assert_eq!(f.links[1].dx_cm, 10.2);
    }

    #[test]
    fn import_rejects_broken_graphs() {
        let mut f = ExperienceMap::new().to_file();
        f.nodes.push(ExperienceNode { id: 0, x_cm: 0.0, y_cm: 0.0, theta_deg: 0.0, view_cell_id: 0, created_t_ms: 0 });
        f.links.push(ExperienceLink { from: 0, to: 1, dx_cm: 0.0, dy_cm: 0.0, dtheta_deg: 0.0, traversals: 1 });
        assert!(ExperienceMap::from_file(f).is_err());
        assert!(ExperienceMap::from_json("{", "m").is_err());
    }

    #[test]
    fn svg_has_one_element_per_node_and_link() {
        let mut m = ExperienceMap::new();
        m.on_step(0, true, pose(0.0, 0.0, 0.0), step(0.0), 0).unwrap();
        m.on_step(1, true, pose(10.0, 0.0, 0.0), step(10.0), 40).unwrap();
        let overlay = [Segment::new(Point::new(0.0, 0.0), Point::new(0.0, 50.0))];
        let svg = render_svg(&m, Some(&overlay));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert_eq!(svg.matches("<line").count(), 2);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }
}
