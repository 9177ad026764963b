//! CSV emission for trajectories, grids, and experiment reports. All floats
//! are printed with 17 significant digits so re-runs diff cleanly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::coupling::TvRow;
use crate::engine::Trajectory;
use crate::error::Result;

/// 17 significant digits; round-trips f64 exactly.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Skeleton export: `k,time,type,phantom,x_1..x_d,y_1..y_d` with one row per
/// event (k starting at 1; the initial state is time 0 of the grid export).
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let d = traj.init.dim();
    let mut header = String::from("k,time,type,phantom");
    for i in 1..=d {
        header.push_str(&format!(",x_{i}"));
    }
    for i in 1..=d {
        header.push_str(&format!(",y_{i}"));
    }
    let rows: Vec<Vec<String>> = traj
        .events
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let mut row = vec![
                (k + 1).to_string(),
                fmt_float(e.time),
                e.mech.to_string(),
                (e.phantom as u8).to_string(),
            ];
            row.extend(e.state_after.x.iter().map(|v| fmt_float(*v)));
            row.extend(e.state_after.y.iter().map(|v| fmt_float(*v)));
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// Grid export: `t,x_1..x_d,y_1..y_d`.
pub fn write_grid_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let d = traj.init.dim();
    let mut header = String::from("t");
    for i in 1..=d {
        header.push_str(&format!(",x_{i}"));
    }
    for i in 1..=d {
        header.push_str(&format!(",y_{i}"));
    }
    let rows: Vec<Vec<String>> = traj
        .grid
        .iter()
        .map(|(t, s)| {
            let mut row = vec![fmt_float(*t)];
            row.extend(s.x.iter().map(|v| fmt_float(*v)));
            row.extend(s.y.iter().map(|v| fmt_float(*v)));
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// Coupling report: `t,p_decouple,stderr,bound,pass`.
pub fn write_tv_report_csv(path: &Path, rows: &[TvRow]) -> Result<()> {
    let out: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_float(r.t),
                fmt_float(r.p_decouple),
                fmt_float(r.stderr),
                fmt_float(r.bound),
                (r.pass as u8).to_string(),
            ]
        })
        .collect();
    write_csv(path, "t,p_decouple,stderr,bound,pass", &out)
}
