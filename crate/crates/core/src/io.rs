//! File formats: orbit records as JSON lines, continuation curves and
//! sampled trajectories as CSV.
//!
//! Times in curve and trajectory files are written in units of `T̄`.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::porbits::{ContinuationCurve, Family, OrbitRecord};

pub fn write_orbit_records<W: Write>(mut w: W, records: &[OrbitRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads JSON-lines orbit records; blank lines are skipped.
pub fn read_orbit_records<R: BufRead>(r: R) -> Result<Vec<OrbitRecord>> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", k + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub const CURVE_HEADER: [&str; 7] = ["family", "p", "x40", "vy40", "T0", "res1", "res2"];

/// One line of a curve file. `T0` is in units of `T̄`; `res1`, `res2` are
/// `y4(T0)` and `vx4(T0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub family: String,
    pub p: Option<u32>,
    pub x40: f64,
    pub vy40: f64,
    #[serde(rename = "T0")]
    pub t0: f64,
    pub res1: f64,
    pub res2: f64,
}

pub fn curve_rows(curve: &ContinuationCurve, t_bar: f64) -> Vec<CurveRow> {
    (0..curve.len())
        .map(|k| {
            let pt = &curve.points[k];
            CurveRow {
                family: curve.family.tag().to_string(),
                p: curve.family.parameter(),
                x40: pt.x40(),
                vy40: pt.vy40(),
                t0: curve.t0(k, t_bar) / t_bar,
                res1: pt.y4,
                res2: pt.vx4,
            }
        })
        .collect()
}

/// CSV writer for curve files. The header is written even when no rows follow.
pub struct CurveWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> CurveWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        inner.write_record(CURVE_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write_rows(&mut self, rows: &[CurveRow]) -> Result<()> {
        for r in rows {
            self.inner.serialize(r)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(e.error().to_string()))
    }
}

pub fn write_curve<W: Write>(w: W, curve: &ContinuationCurve, t_bar: f64) -> Result<()> {
    let mut cw = CurveWriter::new(w)?;
    cw.write_rows(&curve_rows(curve, t_bar))?;
    cw.finish()?;
    Ok(())
}

pub fn read_curve<R: Read>(r: R) -> Result<Vec<CurveRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != CURVE_HEADER {
        return Err(Error::Parse(format!("unexpected curve header {header:?}")));
    }
    rdr.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Parses a family tag as written in curve files.
pub fn parse_family(tag: &str, p: Option<u32>) -> Result<Family> {
    match (tag, p) {
        ("cy", Some(p)) => Ok(Family::Y { p }),
        ("cvx", Some(q)) => Ok(Family::Vx { q }),
        ("cr", _) => Ok(Family::R),
        _ => Err(Error::Parse(format!("unknown family {tag} with parameter {p:?}"))),
    }
}

/// `t, x1, y1, vx1, vy1, x2, ...`
pub fn trajectory_header(n_bodies: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for i in 1..=n_bodies {
        for c in ["x", "y", "vx", "vy"] {
            h.push(format!("{c}{i}"));
        }
    }
    h
}

/// Samples `traj` every `step` time units (plus its end point) and writes
/// one row per sample. Returns the number of rows.
pub fn write_trajectory<W: Write>(w: W, traj: &Trajectory, step: f64, t_bar: f64) -> Result<usize> {
    let states = traj.sample(step)?;
    let n = states.first().map_or(0, |s| s.n_bodies());
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(trajectory_header(n))?;
    for s in &states {
        let mut row = Vec::with_capacity(1 + 4 * n);
        row.push((s.t / t_bar).to_string());
        for i in 0..n {
            let [x, y] = s.position(i);
            let [vx, vy] = s.velocity(i);
            row.extend([x, y, vx, vy].iter().map(f64::to_string));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(states.len())
}
