//! Local view cells keyed by decoded position.
//!
//! A decoding within the match threshold of a stored position re-activates
//! that cell, and its linked pose receives an energy injection before the
//! network dynamics run. Anything further away creates a new cell linked to
//! the current centre of activation.
//!
//! A cell only closes loops once it is familiar, that is after a decoding has
//! landed more than [`LEAVE_FACTOR`] match thresholds away from it. While the
//! agent is still moving away from the spot where a cell was just created,
//! every match lies behind it and injecting there would drag the bump
//! backwards.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::pose_cells::{PoseCellNetwork, PoseEstimate};

/// 20 px at 2.9 mm/px.
pub const MATCH_THRESHOLD_CM: f64 = 5.8;
pub const INJECT_ENERGY: f64 = 0.02;
/// Distance, in match thresholds, a decoding must reach before a cell counts
/// as left behind.
pub const LEAVE_FACTOR: f64 = 2.0;
pub const REGISTRY_HEADER: &str = "id,x_cm,y_cm,pose_x_cm,pose_y_cm,pose_theta_deg,created_t_ms";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewCell {
    pub id: usize,
    pub stored_position: Point,
    pub linked_pose: PoseEstimate,
    pub created_t_ms: u64,
    /// Set once a decoding has landed far from this cell.
    pub familiar: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewCellRegistry {
    cells: Vec<ViewCell>,
    current_active: Option<usize>,
    matched_this_step: bool,
    pub match_threshold_cm: f64,
    pub inject_energy: f64,
}

impl Default for ViewCellRegistry {
    fn default() -> Self {
        Self::new(MATCH_THRESHOLD_CM, INJECT_ENERGY)
    }
}

impl ViewCellRegistry {
    pub fn new(match_threshold_cm: f64, inject_energy: f64) -> Self {
        ViewCellRegistry {
            cells: Vec::new(),
            current_active: None,
            matched_this_step: false,
            match_threshold_cm,
            inject_energy,
        }
    }

    pub fn cells(&self) -> &[ViewCell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn current_active(&self) -> Option<usize> {
        self.current_active
    }

    pub fn get(&self, id: usize) -> Option<&ViewCell> {
        self.cells.get(id)
    }

    /// Returns `(cell_id, is_new)`. Ids are creation indices, so the
    /// earliest-created cell wins distance ties.
    pub fn match_or_create(&mut self, decoded: Point, current_pose: PoseEstimate, t_ms: u64) -> Result<(usize, bool)> {
        if !decoded.is_finite() {
            return Err(Error::invalid("decoded position must be finite"));
        }
        let leave = LEAVE_FACTOR * self.match_threshold_cm;
        let mut best: Option<(usize, f64)> = None;
        for c in &mut self.cells {
            let d = c.stored_position.dist(decoded);
            if d > leave {
                c.familiar = true;
            }
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((c.id, d));
            }
        }
        let (id, is_new) = match best {
            Some((id, d)) if d < self.match_threshold_cm => (id, false),
            _ => {
                let id = self.cells.len();
                self.cells.push(ViewCell {
                    id,
                    stored_position: decoded,
                    linked_pose: current_pose,
                    created_t_ms: t_ms,
                    familiar: false,
                });
                (id, true)
            }
        };
        self.current_active = Some(id);
        self.matched_this_step = !is_new;
        Ok((id, is_new))
    }

    /// Injects at the active cell's linked pose when this step matched an
    /// existing, familiar cell; returns whether anything was injected.
    pub fn on_match_inject(&self, network: &mut PoseCellNetwork) -> Result<bool> {
        match self.current_active {
            Some(id) if self.matched_this_step && self.cells[id].familiar => {
                network.inject(self.cells[id].linked_pose, self.inject_energy)?;
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::invalid(format!("writing registry: {e}"));
        w.write_record(REGISTRY_HEADER.split(',')).map_err(io)?;
        for c in &self.cells {
            w.write_record([
                c.id.to_string(),
                c.stored_position.x.to_string(),
                c.stored_position.y.to_string(),
                c.linked_pose.x_cm.to_string(),
                c.linked_pose.y_cm.to_string(),
                c.linked_pose.theta_deg.to_string(),
                c.created_t_ms.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::invalid(format!("writing registry: {e}")))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}
