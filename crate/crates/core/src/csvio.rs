//! Shared CSV schema for trajectories and decodings:
//! `t_ms,x_cm,y_cm,speed_cm_s,direction_deg`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const KINEMATICS_HEADER: [&str; 5] = ["t_ms", "x_cm", "y_cm", "speed_cm_s", "direction_deg"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicsRow {
    pub t_ms: f64,
    pub x_cm: f64,
    pub y_cm: f64,
    pub speed_cm_s: f64,
    pub direction_deg: f64,
}

/// Writes rows with shortest round-trip float formatting; `t_ms` is written
/// as an integer.
pub fn write_kinematics<W: Write>(out: W, rows: impl IntoIterator<Item = KinematicsRow>) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(KINEMATICS_HEADER)?;
    for r in rows {
        w.write_record([
            format!("{}", r.t_ms as u64),
            format!("{}", r.x_cm),
            format!("{}", r.y_cm),
            format!("{}", r.speed_cm_s),
            format!("{}", r.direction_deg),
        ])?;
    }
    w.flush()
}

/// Parses and validates rows: finite values, integral non-negative
/// timestamps that strictly increase, speed ≥ 0, direction in [0, 360).
/// Errors name the 1-based file line.
pub fn read_kinematics<R: Read>(input: R, origin: &str) -> Result<Vec<(u64, KinematicsRow)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(origin, 1, e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    if headers.iter().collect::<Vec<_>>() != KINEMATICS_HEADER {
        return Err(Error::parse(
            origin,
            1,
            format!("expected header `{}`", KINEMATICS_HEADER.join(",")),
        ));
    }
    let mut rows = Vec::new();
    let mut last_t: Option<u64> = None;
    for rec in rdr.deserialize::<KinematicsRow>() {
        let row = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(origin, line, format!("malformed row: {e}"))
        })?;
        let line = rows.len() as u64 + 2;
        let fail = |m: &str| Err(Error::parse(origin, line, m.to_string()));
        if ![row.t_ms, row.x_cm, row.y_cm, row.speed_cm_s, row.direction_deg]
            .iter()
            .all(|v| v.is_finite())
        {
            return fail("non-finite value");
        }
        if row.t_ms < 0.0 || row.t_ms.fract() != 0.0 {
            return fail("t_ms must be a non-negative integer");
        }
        if row.speed_cm_s < 0.0 {
            return fail("negative speed");
        }
        if !(0.0..360.0).contains(&row.direction_deg) {
            return fail("direction outside [0, 360)");
        }
        let t = row.t_ms as u64;
        if last_t.is_some_and(|p| t <= p) {
            return fail("timestamps must strictly increase");
        }
        last_t = Some(t);
        rows.push((t, row));
    }
    Ok(rows)
}

pub fn read_kinematics_file(path: &Path) -> Result<Vec<(u64, KinematicsRow)>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_kinematics(std::io::BufReader::new(f), &path.display().to_string())
}

pub fn write_kinematics_file(path: &Path, rows: impl IntoIterator<Item = KinematicsRow>) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_kinematics(std::io::BufWriter::new(f), rows).map_err(|e| Error::io(path, e))
}
