//! Competitive 3D attractor network over (x, y, θ).
//!
//! Each dynamics step applies, in order: excitatory self-convolution added to
//! the activity, inhibitory convolution added (the inhibitory kernel carries a
//! negative sum), global inhibition `max(0, P - ψ)`, and normalisation to unit
//! sum. Only θ wraps; x and y have hard borders.
//!
//! Both Gaussian kernels factor into three identical 1D kernels, so the
//! convolutions run as three 1D passes restricted to a bounding box around
//! the nonzero activity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::wrap_deg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseCellConfig {
    pub nx: usize,
    pub ny: usize,
    pub ntheta: usize,
    pub cell_size_cm: f64,
    pub exc_variance: f64,
    pub exc_radius: usize,
    pub inh_variance: f64,
    pub inh_radius: usize,
    /// Inhibitory kernel weights sum to minus this value.
    pub inhibition_amplitude: f64,
    /// Global inhibition constant ψ.
    pub global_inhibition: f64,
}

impl Default for PoseCellConfig {
    fn default() -> Self {
        PoseCellConfig {
            nx: 40,
            ny: 40,
            ntheta: 36,
            cell_size_cm: 5.0,
            exc_variance: 1.0,
            exc_radius: 3,
            inh_variance: 2.0,
            inh_radius: 4,
            inhibition_amplitude: 0.4,
            global_inhibition: 2e-5,
        }
    }
}

impl PoseCellConfig {
    pub fn theta_step_deg(&self) -> f64 {
        360.0 / self.ntheta as f64
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.ntheta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest representable x and y, in cm.
    pub fn extent_cm(&self) -> (f64, f64) {
        (
            (self.nx - 1) as f64 * self.cell_size_cm,
            (self.ny - 1) as f64 * self.cell_size_cm,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.ntheta == 0 {
            return Err(Error::invalid("pose-cell grid dimensions must be positive"));
        }
        if !(self.cell_size_cm > 0.0) {
            return Err(Error::invalid("cell size must be positive"));
        }
        if !(self.global_inhibition >= 0.0) || !(self.inhibition_amplitude >= 0.0) {
            return Err(Error::invalid("inhibition constants must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelSign {
    Excitatory,
    /// Weights sum to minus the given amplitude.
    Inhibitory(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub sign: KernelSign,
    pub variance: f64,
    pub radius_cells: usize,
    /// Dense weights of side `2r+1`, indexed `[(a*side + b)*side + c]` for
    /// offsets `(a-r, b-r, c-r)`.
    pub weights: Vec<f64>,
    /// Unit-sum 1D factor; `weights = amplitude * f[a] f[b] f[c]`.
    factor: Vec<f64>,
    amplitude: f64,
}

impl Kernel {
    pub fn side(&self) -> usize {
        2 * self.radius_cells + 1
    }

    pub fn weight(&self, a: isize, b: isize, c: isize) -> f64 {
        let r = self.radius_cells as isize;
        if a.abs() > r || b.abs() > r || c.abs() > r {
            return 0.0;
        }
        let s = self.side();
        let idx = (((a + r) as usize * s) + (b + r) as usize) * s + (c + r) as usize;
        self.weights[idx]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Truncated 3D discrete Gaussian, normalised to +1 (excitatory) or to
/// minus the inhibitory amplitude.
pub fn build_kernel(variance: f64, radius_cells: usize, sign: KernelSign) -> Result<Kernel> {
    if !(variance > 0.0) || radius_cells < 1 {
        return Err(Error::invalid("kernel needs variance > 0 and radius >= 1"));
    }
    let amplitude = match sign {
        KernelSign::Excitatory => 1.0,
        KernelSign::Inhibitory(g) => -g,
    };
    let r = radius_cells as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|a| (-((a * a) as f64) / (2.0 * variance)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    let factor: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let side = factor.len();
    let mut weights = Vec::with_capacity(side * side * side);
    for fa in &factor {
        for fb in &factor {
            for fc in &factor {
                weights.push(amplitude * fa * fb * fc);
            }
        }
    }
    Ok(Kernel {
        sign,
        variance,
        radius_cells,
        weights,
        factor,
        amplitude,
    })
}

/// Pose in grid coordinates: cm from cell (0, 0) and degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub x_cm: f64,
    pub y_cm: f64,
    pub theta_deg: f64,
}

/// Inclusive x/y index box; θ is always taken whole.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Region {
    i0: usize,
    i1: usize,
    j0: usize,
    j1: usize,
}

impl Region {
    fn expand(self, r: usize, nx: usize, ny: usize) -> Region {
        Region {
            i0: self.i0.saturating_sub(r),
            i1: (self.i1 + r).min(nx - 1),
            j0: self.j0.saturating_sub(r),
            j1: (self.j1 + r).min(ny - 1),
        }
    }

    fn union(self, o: Region) -> Region {
        Region {
            i0: self.i0.min(o.i0),
            i1: self.i1.max(o.i1),
            j0: self.j0.min(o.j0),
            j1: self.j1.max(o.j1),
        }
    }

    fn width(&self) -> usize {
        self.i1 - self.i0 + 1
    }

    fn height(&self) -> usize {
        self.j1 - self.j0 + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseCellNetwork {
    cfg: PoseCellConfig,
    activity: Vec<f64>,
    /// Superset of the cells holding nonzero activity; `None` when all zero.
    support: Option<Region>,
    exc: Kernel,
    inh: Kernel,
    packet: Kernel,
    truncation_events: u64,
    truncated_mass: f64,
}

impl PoseCellNetwork {
    /// All-zero network.
    pub fn new(cfg: PoseCellConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(PoseCellNetwork {
            activity: vec![0.0; cfg.len()],
            support: None,
            exc: build_kernel(cfg.exc_variance, cfg.exc_radius, KernelSign::Excitatory)?,
            inh: build_kernel(
                cfg.inh_variance,
                cfg.inh_radius,
                KernelSign::Inhibitory(cfg.inhibition_amplitude),
            )?,
            packet: build_kernel(1.0, 3, KernelSign::Excitatory)?,
            cfg,
            truncation_events: 0,
            truncated_mass: 0.0,
        })
    }

    /// Network holding a unit packet at `pose`.
    pub fn with_packet(cfg: PoseCellConfig, pose: PoseEstimate) -> Result<Self> {
        let mut net = Self::new(cfg)?;
        net.inject(pose, 1.0)?;
        Ok(net)
    }

    pub fn config(&self) -> &PoseCellConfig {
        &self.cfg
    }

    pub fn activity(&self) -> &[f64] {
        &self.activity
    }

    pub fn excitatory_kernel(&self) -> &Kernel {
        &self.exc
    }

    pub fn inhibitory_kernel(&self) -> &Kernel {
        &self.inh
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.cfg.ny + j) * self.cfg.ntheta + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.activity[self.index(i, j, k)]
    }

    /// Replaces the activity wholesale (e.g. to set up a test state).
    pub fn set_activity(&mut self, activity: Vec<f64>) -> Result<()> {
        if activity.len() != self.cfg.len() || activity.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("activity must match the grid and be non-negative"));
        }
        self.activity = activity;
        self.support = Some(Region {
            i0: 0,
            i1: self.cfg.nx - 1,
            j0: 0,
            j1: self.cfg.ny - 1,
        });
        self.tighten_support();
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.activity.iter().sum()
    }

    /// Number of shifts that pushed mass off an x/y border.
    pub fn truncation_events(&self) -> u64 {
        self.truncation_events
    }

    pub fn truncated_mass(&self) -> f64 {
        self.truncated_mass
    }

    pub fn nearest_cell(&self, pose: PoseEstimate) -> Result<(usize, usize, usize)> {
        let (ex, ey) = self.cfg.extent_cm();
        let ok = |v: f64, hi: f64| v.is_finite() && v >= 0.0 && v <= hi;
        if !ok(pose.x_cm, ex) || !ok(pose.y_cm, ey) || !pose.theta_deg.is_finite() {
            return Err(Error::invalid(format!(
                "pose ({:.2}, {:.2}) cm lies outside the pose-cell grid",
                pose.x_cm, pose.y_cm
            )));
        }
        let cs = self.cfg.cell_size_cm;
        let i = (pose.x_cm / cs).round() as usize;
        let j = (pose.y_cm / cs).round() as usize;
        let k = (wrap_deg(pose.theta_deg) / self.cfg.theta_step_deg()).round() as usize % self.cfg.ntheta;
        Ok((i, j, k))
    }

    /// Adds `energy` times a unit-sum Gaussian packet centred on the cell
    /// nearest `pose`. Mass falling outside the x/y borders is dropped.
    pub fn inject(&mut self, pose: PoseEstimate, energy: f64) -> Result<()> {
        if !(energy > 0.0) || !energy.is_finite() {
            return Err(Error::invalid("injected energy must be positive"));
        }
        let (ci, cj, ck) = self.nearest_cell(pose)?;
        let r = self.packet.radius_cells as isize;
        let (nx, ny, nt) = (self.cfg.nx as isize, self.cfg.ny as isize, self.cfg.ntheta as isize);
        for a in -r..=r {
            let i = ci as isize + a;
            if i < 0 || i >= nx {
                continue;
            }
            for b in -r..=r {
                let j = cj as isize + b;
                if j < 0 || j >= ny {
                    continue;
                }
                for c in -r..=r {
                    let k = (ck as isize + c).rem_euclid(nt) as usize;
                    let idx = self.index(i as usize, j as usize, k);
                    self.activity[idx] += energy * self.packet.weight(a, b, c);
                }
            }
        }
        let added = Region {
            i0: ci.saturating_sub(r as usize),
            i1: (ci + r as usize).min(self.cfg.nx - 1),
            j0: cj.saturating_sub(r as usize),
            j1: (cj + r as usize).min(self.cfg.ny - 1),
        };
        self.support = Some(self.support.map_or(added, |s| s.union(added)));
        Ok(())
    }

    /// One full dynamics step: excitation, inhibition, global inhibition,
    /// normalisation.
    pub fn step_dynamics(&mut self) -> Result<()> {
        let Some(region) = self.support else {
            return Err(Error::NetworkExtinguished);
        };
        let region = self.convolve_add(region, Kernels::Excitatory);
        let region = self.convolve_add(region, Kernels::Inhibitory);

        let psi = self.cfg.global_inhibition;
        let mut total = 0.0;
        for i in region.i0..=region.i1 {
            for j in region.j0..=region.j1 {
                let base = self.index(i, j, 0);
                for v in &mut self.activity[base..base + self.cfg.ntheta] {
                    *v = (*v - psi).max(0.0);
                    total += *v;
                }
            }
        }
        if !(total > 0.0) {
            self.support = None;
            return Err(Error::NetworkExtinguished);
        }
        for i in region.i0..=region.i1 {
            for j in region.j0..=region.j1 {
                let base = self.index(i, j, 0);
                for v in &mut self.activity[base..base + self.cfg.ntheta] {
                    *v /= total;
                }
            }
        }
        self.support = Some(region);
        self.tighten_support();
        Ok(())
    }

    /// `P += K * P` over `region` expanded by the kernel radius; returns the
    /// expanded region.
    fn convolve_add(&mut self, region: Region, which: Kernels) -> Region {
        let kernel = match which {
            Kernels::Excitatory => &self.exc,
            Kernels::Inhibitory => &self.inh,
        };
        let r = kernel.radius_cells;
        let f = &kernel.factor;
        let amp = kernel.amplitude;
        let (nx, ny, nt) = (self.cfg.nx, self.cfg.ny, self.cfg.ntheta);
        let out = region.expand(r, nx, ny);
        let (w_in, h_in) = (region.width(), region.height());
        let (w_out, h_out) = (out.width(), out.height());

        // θ pass (wrapping) over the input region.
        let mut a = vec![0.0; w_in * h_in * nt];
        for (ii, i) in (region.i0..=region.i1).enumerate() {
            for (jj, j) in (region.j0..=region.j1).enumerate() {
                let src = &self.activity[self.index(i, j, 0)..self.index(i, j, 0) + nt];
                let dst = &mut a[(ii * h_in + jj) * nt..(ii * h_in + jj + 1) * nt];
                for (c, &w) in f.iter().enumerate() {
                    let off = c as isize - r as isize;
                    for (k, d) in dst.iter_mut().enumerate() {
                        let ks = (k as isize - off).rem_euclid(nt as isize) as usize;
                        *d += w * src[ks];
                    }
                }
            }
        }
        // y pass into the output rows.
        let mut b = vec![0.0; w_in * h_out * nt];
        for ii in 0..w_in {
            for (jo, j) in (out.j0..=out.j1).enumerate() {
                let dst = (ii * h_out + jo) * nt;
                for (c, &w) in f.iter().enumerate() {
                    let js = j as isize + c as isize - r as isize;
                    if js < region.j0 as isize || js > region.j1 as isize {
                        continue;
                    }
                    let src = (ii * h_in + (js as usize - region.j0)) * nt;
                    for k in 0..nt {
                        b[dst + k] += w * a[src + k];
                    }
                }
            }
        }
        // x pass, accumulated straight into the activity.
        let mut conv = vec![0.0; w_out * h_out * nt];
        for (io, i) in (out.i0..=out.i1).enumerate() {
            for (c, &w) in f.iter().enumerate() {
                let is = i as isize + c as isize - r as isize;
                if is < region.i0 as isize || is > region.i1 as isize {
                    continue;
                }
                let ii = is as usize - region.i0;
                for jo in 0..h_out {
                    let src = (ii * h_out + jo) * nt;
                    let dst = (io * h_out + jo) * nt;
                    for k in 0..nt {
                        conv[dst + k] += w * b[src + k];
                    }
                }
            }
        }
        for (io, i) in (out.i0..=out.i1).enumerate() {
            for (jo, j) in (out.j0..=out.j1).enumerate() {
                let base = self.index(i, j, 0);
                let src = (io * h_out + jo) * nt;
                for k in 0..nt {
                    self.activity[base + k] += amp * conv[src + k];
                }
            }
        }
        out
    }

    /// Shrinks the support box to the cells that are actually nonzero.
    fn tighten_support(&mut self) {
        let Some(s) = self.support else { return };
        let nt = self.cfg.ntheta;
        let mut tight: Option<Region> = None;
        for i in s.i0..=s.i1 {
            for j in s.j0..=s.j1 {
                let base = self.index(i, j, 0);
                if self.activity[base..base + nt].iter().any(|&v| v != 0.0) {
                    let cell = Region { i0: i, i1: i, j0: j, j1: j };
                    tight = Some(tight.map_or(cell, |t| t.union(cell)));
                }
            }
        }
        self.support = tight;
    }

    /// Odometry update: rotate along θ by `relative_rotation_deg`, then
    /// translate in x/y by `speed * dt` along the rotated heading estimate.
    /// Fractional shifts split mass linearly between neighbouring cells.
    pub fn path_integrate(&mut self, speed_cm_s: f64, relative_rotation_deg: f64, dt_ms: f64) -> Result<()> {
        if !(dt_ms > 0.0) || !dt_ms.is_finite() {
            return Err(Error::invalid("path integration needs dt > 0"));
        }
        if !speed_cm_s.is_finite() || !relative_rotation_deg.is_finite() {
            return Err(Error::invalid("odometry must be finite"));
        }
        if self.support.is_none() {
            return Ok(());
        }
        let heading = wrap_deg(self.center_of_activation()?.theta_deg + relative_rotation_deg);
        if relative_rotation_deg != 0.0 {
            self.shift_theta(relative_rotation_deg / self.cfg.theta_step_deg());
        }
        let dist_cells = speed_cm_s * dt_ms / 1000.0 / self.cfg.cell_size_cm;
        if dist_cells != 0.0 {
            let h = heading.to_radians();
            self.shift_xy(dist_cells * h.cos(), dist_cells * h.sin());
        }
        Ok(())
    }

    fn shift_theta(&mut self, cells: f64) {
        let Some(s) = self.support else { return };
        let nt = self.cfg.ntheta;
        let whole = cells.floor();
        let frac = cells - whole;
        let n = (whole as i64).rem_euclid(nt as i64) as usize;
        let mut row = vec![0.0; nt];
        for i in s.i0..=s.i1 {
            for j in s.j0..=s.j1 {
                let base = self.index(i, j, 0);
                row.iter_mut().for_each(|v| *v = 0.0);
                let src = &self.activity[base..base + nt];
                for (k, &v) in src.iter().enumerate() {
                    if frac == 0.0 {
                        row[(k + n) % nt] += v;
                    } else {
                        row[(k + n) % nt] += (1.0 - frac) * v;
                        row[(k + n + 1) % nt] += frac * v;
                    }
                }
                self.activity[base..base + nt].copy_from_slice(&row);
            }
        }
    }

    fn shift_xy(&mut self, dx: f64, dy: f64) {
        let Some(s) = self.support else { return };
        let (nx, ny, nt) = (self.cfg.nx as i64, self.cfg.ny as i64, self.cfg.ntheta);
        let (fx, fy) = (dx.floor(), dy.floor());
        let (ax, ay) = (dx - fx, dy - fy);
        let (sx, sy) = (fx as i64, fy as i64);
        let taps = [
            (0i64, 0i64, (1.0 - ax) * (1.0 - ay)),
            (1, 0, ax * (1.0 - ay)),
            (0, 1, (1.0 - ax) * ay),
            (1, 1, ax * ay),
        ];
        let w_in = s.width();
        let h_in = s.height();
        let old: Vec<f64> = {
            let mut buf = Vec::with_capacity(w_in * h_in * nt);
            for i in s.i0..=s.i1 {
                for j in s.j0..=s.j1 {
                    let base = self.index(i, j, 0);
                    buf.extend_from_slice(&self.activity[base..base + nt]);
                    self.activity[base..base + nt].iter_mut().for_each(|v| *v = 0.0);
                }
            }
            buf
        };
        let mut lost = 0.0;
        let mut dest: Option<Region> = None;
        for (ii, i) in (s.i0..=s.i1).enumerate() {
            for (jj, j) in (s.j0..=s.j1).enumerate() {
                let src = &old[(ii * h_in + jj) * nt..(ii * h_in + jj + 1) * nt];
                let mass: f64 = src.iter().sum();
                if mass == 0.0 {
                    continue;
                }
                for &(oi, oj, w) in &taps {
                    if w == 0.0 {
                        continue;
                    }
                    let ti = i as i64 + sx + oi;
                    let tj = j as i64 + sy + oj;
                    if ti < 0 || ti >= nx || tj < 0 || tj >= ny {
                        lost += w * mass;
                        continue;
                    }
                    let (ti, tj) = (ti as usize, tj as usize);
                    let base = self.index(ti, tj, 0);
                    for (d, &v) in self.activity[base..base + nt].iter_mut().zip(src) {
                        *d += w * v;
                    }
                    let cell = Region { i0: ti, i1: ti, j0: tj, j1: tj };
                    dest = Some(dest.map_or(cell, |r| r.union(cell)));
                }
            }
        }
        if lost > 0.0 {
            self.truncation_events += 1;
            self.truncated_mass += lost;
        }
        self.support = dest;
        self.tighten_support();
    }

    /// Activity-weighted mean pose; θ uses the circular (vector-sum) mean.
    pub fn center_of_activation(&self) -> Result<PoseEstimate> {
        let Some(s) = self.support else {
            return Err(Error::invalid("center of activation of an all-zero network"));
        };
        let nt = self.cfg.ntheta;
        let step = self.cfg.theta_step_deg().to_radians();
        let (cos_k, sin_k): (Vec<f64>, Vec<f64>) =
            (0..nt).map(|k| ((k as f64 * step).cos(), (k as f64 * step).sin())).unzip();
        let (mut m, mut mx, mut my, mut mc, mut ms) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in s.i0..=s.i1 {
            for j in s.j0..=s.j1 {
                let base = self.index(i, j, 0);
                let row = &self.activity[base..base + nt];
                let mut rm = 0.0;
                for (k, &v) in row.iter().enumerate() {
                    rm += v;
                    mc += v * cos_k[k];
                    ms += v * sin_k[k];
                }
                m += rm;
                mx += rm * i as f64;
                my += rm * j as f64;
            }
        }
        if !(m > 0.0) {
            return Err(Error::invalid("center of activation of an all-zero network"));
        }
        let cs = self.cfg.cell_size_cm;
        Ok(PoseEstimate {
            x_cm: mx / m * cs,
            y_cm: my / m * cs,
            theta_deg: wrap_deg(ms.atan2(mc).to_degrees()),
        })
    }

    /// Activity as a single-image tensor with dims (N_x, N_y, N_θ).
    pub fn snapshot(&self, t_ms: u64) -> crate::tensor::Tensor4 {
        crate::tensor::Tensor4 {
            dims: [1, self.cfg.nx, self.cfg.ny, self.cfg.ntheta],
            timestamps: vec![t_ms],
            values: self.activity.iter().map(|&v| v as f32).collect(),
        }
    }
}

#[derive(Clone, Copy)]
enum Kernels {
    Excitatory,
    Inhibitory,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PoseCellConfig {
        PoseCellConfig { nx: 16, ny: 14, ntheta: 12, ..Default::default() }
    }

    fn pose(net: &PoseCellNetwork, i: usize, j: usize, k: usize) -> PoseEstimate {
        let c = net.config();
        PoseEstimate {
            x_cm: i as f64 * c.cell_size_cm,
            y_cm: j as f64 * c.cell_size_cm,
            theta_deg: k as f64 * c.theta_step_deg(),
        }
    }

    /// Dense reference: direct evaluation with the full 3D weight arrays.
    fn dense_step(net: &PoseCellNetwork, p: &[f64]) -> Vec<f64> {
        let c = net.config();
        let (nx, ny, nt) = (c.nx as isize, c.ny as isize, c.ntheta as isize);
        let idx = |i: isize, j: isize, k: isize| ((i * ny + j) * nt + k) as usize;
        let conv = |src: &[f64], kern: &Kernel| {
            let mut out = src.to_vec();
            let r = kern.radius_cells as isize;
            for i in 0..nx {
                for j in 0..ny {
                    for k in 0..nt {
                        let mut acc = 0.0;
                        for a in -r..=r {
                            for b in -r..=r {
                                for cc in -r..=r {
                                    let (si, sj) = (i + a, j + b);
                                    if si < 0 || si >= nx || sj < 0 || sj >= ny {
                                        continue;
                                    }
                                    let sk = (k + cc).rem_euclid(nt);
                                    acc += kern.weight(a, b, cc) * src[idx(si, sj, sk)];
                                }
                            }
                        }
                        out[idx(i, j, k)] += acc;
                    }
                }
            }
            out
        };
        let p = conv(p, net.excitatory_kernel());
        let p = conv(&p, net.inhibitory_kernel());
        let p: Vec<f64> = p.iter().map(|v| (v - c.global_inhibition).max(0.0)).collect();
        let s: f64 = p.iter().sum();
        p.iter().map(|v| v / s).collect()
    }

    #[test]
    fn kernel_symmetry_and_sums() {
        let k = build_kernel(1.0, 3, KernelSign::Excitatory).unwrap();
        let center = k.weight(0, 0, 0);
        assert!(k.weights.iter().all(|&w| w <= center));
        let n = [k.weight(1, 0, 0), k.weight(-1, 0, 0), k.weight(0, 1, 0), k.weight(0, -1, 0), k.weight(0, 0, 1), k.weight(0, 0, -1)];
        assert!(n.iter().all(|&w| w == n[0]));
        assert!((k.sum() - 1.0).abs() < 1e-12);
        assert!((k.weight(1, 0, 0) / center - (-0.5f64).exp()).abs() < 1e-12);
        assert!((k.weight(1, 0, 0) / center - 0.6065).abs() < 1e-4);

        let inh = build_kernel(2.0, 4, KernelSign::Inhibitory(0.4)).unwrap();
        assert!((inh.sum() + 0.4).abs() < 1e-12);
        for (a, b, c) in [(1, 2, 3), (4, 0, -2), (-3, 1, 1)] {
            let w = inh.weight(a, b, c);
            assert_eq!(w, inh.weight(-a, b, c));
            assert_eq!(w, inh.weight(a, -b, c));
            assert_eq!(w, inh.weight(a, b, -c));
        }
        assert!(build_kernel(0.0, 3, KernelSign::Excitatory).is_err());
        assert!(build_kernel(1.0, 0, KernelSign::Excitatory).is_err());
    }

    #[test]
    fn separable_step_matches_dense_reference() {
        let mut net = PoseCellNetwork::new(small()).unwrap();
        let p1 = pose(&net, 3, 4, 0);
        let p2 = pose(&net, 10, 9, 7);
        net.inject(p1, 0.3).unwrap();
        net.inject(p2, 0.5).unwrap();
        for _ in 0..3 {
            let expect = dense_step(&net, net.activity());
            net.step_dynamics().unwrap();
            for (a, b) in net.activity().iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inject_mass_accounting_and_wrap() {
        let mut net = PoseCellNetwork::new(PoseCellConfig::default()).unwrap();
        net.inject(pose(&net, 20, 20, 18), 0.1).unwrap();
        assert!((net.total() - 0.1).abs() < 1e-12);

        let mut net = PoseCellNetwork::new(PoseCellConfig::default()).unwrap();
        net.inject(pose(&net, 20, 20, 0), 0.1).unwrap();
        assert!(net.get(20, 20, 1) > 0.0);
        assert!(net.get(20, 20, 35) > 0.0);
        assert_eq!(net.get(20, 20, 1), net.get(20, 20, 35));

        let mut once = PoseCellNetwork::new(PoseCellConfig::default()).unwrap();
        let mut twice = once.clone();
        let p = pose(&once, 12, 30, 5);
        once.inject(p, 0.1).unwrap();
        twice.inject(p, 0.05).unwrap();
        twice.inject(p, 0.05).unwrap();
        for (a, b) in once.activity().iter().zip(twice.activity()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn inject_rejects_out_of_grid_pose() {
        let mut net = PoseCellNetwork::new(PoseCellConfig::default()).unwrap();
        let bad = PoseEstimate { x_cm: -10.0, y_cm: 10.0, theta_deg: 0.0 };
        assert!(net.inject(bad, 0.1).is_err());
        let bad = PoseEstimate { x_cm: 10.0, y_cm: 500.0, theta_deg: 0.0 };
        assert!(net.inject(bad, 0.1).is_err());
        assert!(net.inject(pose(&net, 1, 1, 1), 0.0).is_err());
    }

    #[test]
    fn border_injection_drops_mass() {
        let mut net = PoseCellNetwork::new(PoseCellConfig::default()).unwrap();
        net.inject(pose(&net, 0, 20, 3), 0.1).unwrap();
        let t = net.total();
        assert!(t < 0.1 && t > 0.05);
    }

    #[test]
    fn extinguished_network_errors() {
        let cfg = PoseCellConfig { global_inhibition: 1.0, ..small() };
        let mut net = PoseCellNetwork::with_packet(cfg, PoseEstimate { x_cm: 30.0, y_cm: 30.0, theta_deg: 0.0 }).unwrap();
        assert!(matches!(net.step_dynamics(), Err(Error::NetworkExtinguished)));
        let mut empty = PoseCellNetwork::new(small()).unwrap();
        assert!(matches!(empty.step_dynamics(), Err(Error::NetworkExtinguished)));
    }

    #[test]
    fn bump_stays_at_injection_cell() {
        let mut net = PoseCellNetwork::new(PoseCellConfig::default()).unwrap();
        net.inject(pose(&net, 20, 20, 10), 0.1).unwrap();
        for _ in 0..50 {
            net.step_dynamics().unwrap();
            assert!((net.total() - 1.0).abs() < 1e-9);
        }
        let (mut best, mut arg) = (0.0, 0);
        for (n, &v) in net.activity().iter().enumerate() {
            if v > best {
                best = v;
                arg = n;
            }
        }
        assert_eq!(arg, net.index(20, 20, 10));
        let c = net.center_of_activation().unwrap();
        assert!((c.x_cm - 100.0).abs() < 1e-9 && (c.y_cm - 100.0).abs() < 1e-9);
        assert!((c.theta_deg - 100.0).abs() < 1e-9);
    }

    #[test]
    fn stronger_of_two_packets_gains_mass() {
        // Golden values from running the dense dynamics on this setup: the two
        // equal-shaped bumps barely interact, so the share of the stronger one
        // grows slowly (0.5238 → 0.5429 after 200 steps, ≥ 0.5574 after 300).
        let cfg = PoseCellConfig { nx: 40, ny: 40, ntheta: 36, ..Default::default() };
        let mut net = PoseCellNetwork::new(cfg).unwrap();
        net.inject(pose(&net, 10, 20, 10), 0.1).unwrap();
        net.inject(pose(&net, 30, 20, 10), 0.11).unwrap();
        let share = |n: &PoseCellNetwork| -> f64 {
            let mut s = 0.0;
            for i in 25..40 {
                for j in 0..40 {
                    for k in 0..36 {
                        s += n.get(i, j, k);
                    }
                }
            }
            s / n.total()
        };
        let mut last = share(&net);
        assert!((last - 0.11 / 0.21).abs() < 1e-12);
        for step in 1..=200 {
            net.step_dynamics().unwrap();
            let s = share(&net);
            assert!(s >= last - 1e-12, "share fell at step {step}");
            last = s;
        }
        assert!((last - 0.5429).abs() < 5e-4, "{last}");
    }

    #[test]
    fn coa_single_cell_and_wrap() {
        let mut net = PoseCellNetwork::new(small()).unwrap();
        let mut a = vec![0.0; small().len()];
        a[net.index(3, 5, 7)] = 1.0;
        net.set_activity(a).unwrap();
        let c = net.center_of_activation().unwrap();
        assert_eq!((c.x_cm, c.y_cm), (15.0, 25.0));
        assert!((c.theta_deg - 210.0).abs() < 1e-9);

        let mut a = vec![0.0; small().len()];
        a[net.index(3, 5, 0)] = 0.5;
        a[net.index(3, 5, 11)] = 0.5;
        net.set_activity(a).unwrap();
        let c = net.center_of_activation().unwrap();
        // halfway across the wrap: -15° → 345°
        assert!((c.theta_deg - 345.0).abs() < 1e-9, "{}", c.theta_deg);

        assert!(PoseCellNetwork::new(small()).unwrap().center_of_activation().is_err());
    }

    #[test]
    fn rotation_sixty_cells_at_360() {
        let cfg = PoseCellConfig { nx: 8, ny: 8, ntheta: 360, ..Default::default() };
        let mut net = PoseCellNetwork::new(cfg).unwrap();
        let before = {
            net.inject(PoseEstimate { x_cm: 15.0, y_cm: 15.0, theta_deg: 340.0 }, 1.0).unwrap();
            net.activity().to_vec()
        };
        net.path_integrate(0.0, 60.0, 40.0).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                for k in 0..360 {
                    assert_eq!(net.get(i, j, (k + 60) % 360), before[(i * 8 + j) * 360 + k]);
                }
            }
        }
    }

    #[test]
    fn zero_odometry_is_identity() {
        let mut net = PoseCellNetwork::with_packet(small(), PoseEstimate { x_cm: 30.0, y_cm: 30.0, theta_deg: 90.0 }).unwrap();
        net.step_dynamics().unwrap();
        let before = net.clone();
        net.path_integrate(0.0, 0.0, 40.0).unwrap();
        assert_eq!(net, before);
        assert!(net.path_integrate(10.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn half_cell_shift_splits_mass() {
        let mut net = PoseCellNetwork::new(small()).unwrap();
        let mut a = vec![0.0; small().len()];
        a[net.index(7, 7, 0)] = 1.0;
        net.set_activity(a).unwrap();
        // heading 0°, 0.5 cell = 2.5 cm in 40 ms → 62.5 cm/s
        net.path_integrate(62.5, 0.0, 40.0).unwrap();
        assert!((net.get(7, 7, 0) - 0.5).abs() < 1e-12);
        assert!((net.get(8, 7, 0) - 0.5).abs() < 1e-12);
        assert!((net.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_turn_returns_to_start() {
        let mut net = PoseCellNetwork::with_packet(PoseCellConfig::default(), PoseEstimate { x_cm: 90.0, y_cm: 80.0, theta_deg: 40.0 }).unwrap();
        for _ in 0..5 {
            net.step_dynamics().unwrap();
        }
        let before = net.activity().to_vec();
        net.path_integrate(0.0, 360.0, 40.0).unwrap();
        for (a, b) in net.activity().iter().zip(&before) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn shift_off_border_counts_truncation() {
        let mut net = PoseCellNetwork::with_packet(small(), PoseEstimate { x_cm: 5.0, y_cm: 30.0, theta_deg: 180.0 }).unwrap();
        net.path_integrate(100.0, 0.0, 100.0).unwrap();
        assert_eq!(net.truncation_events(), 1);
        assert!(net.total() < 1.0);
        assert!(net.truncated_mass() > 0.0);
    }

    #[test]
    fn snapshot_has_grid_dims() {
        let net = PoseCellNetwork::with_packet(small(), PoseEstimate { x_cm: 30.0, y_cm: 30.0, theta_deg: 0.0 }).unwrap();
        let t = net.snapshot(120);
        assert_eq!(t.dims, [1, 16, 14, 12]);
        assert_eq!(t.values.len(), small().len());
    }
}
