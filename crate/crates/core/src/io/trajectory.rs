use std::fs::File;
use std::path::Path;

use super::{read_json, write_json};
use crate::error::{Error, Result};
use crate::motion::{ReplanScript, TimingReport};
use crate::types::{Obstacle, Pose, Trajectory};

fn numbers(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("{what}: '{v}' is not a number")))
        })
        .collect()
}

/// Parses `x,y,z;qw,qx,qy,qz` (any dimensions). The orientation is
/// normalized.
pub fn parse_pose(text: &str) -> Result<Pose> {
    let (pos, ori) = text.split_once(';').ok_or_else(|| {
        Error::invalid(format!("pose '{text}' must look like 'x,y,z;qw,qx,qy,qz'"))
    })?;
    Pose::from_raw(
        numbers(pos, "pose position")?,
        &numbers(ori, "pose orientation")?,
    )
}

/// Parses `c1,...,cn,r,eta`.
pub fn parse_obstacle(text: &str) -> Result<Obstacle> {
    let mut v = numbers(text, "obstacle")?;
    if v.len() < 3 {
        return Err(Error::invalid(format!(
            "obstacle '{text}' must look like 'cx,cy,cz,r,eta'"
        )));
    }
    let eta = v.pop().unwrap_or_default();
    let r = v.pop().unwrap_or_default();
    Obstacle::new(v, r, eta)
}

/// CSV text with columns `t, x0.., q0..`.
pub fn trajectory_csv(trajectory: &Trajectory) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write_rows(&mut w, trajectory)?;
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

fn write_rows<W: std::io::Write>(w: &mut csv::Writer<W>, trajectory: &Trajectory) -> Result<()> {
    let Some((_, first)) = trajectory.samples.first() else {
        return Err(Error::invalid("empty trajectory"));
    };
    let mut header = vec!["t".to_string()];
    header.extend((0..first.n()).map(|i| format!("x{i}")));
    header.extend((0..first.orientation.len()).map(|i| format!("q{i}")));
    let csv_err = |e: csv::Error| Error::invalid(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (t, pose) in &trajectory.samples {
        let row = std::iter::once(*t)
            .chain(pose.position.iter().copied())
            .chain(pose.orientation.iter().copied())
            .map(|v| v.to_string());
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::invalid(e.to_string()))
}

pub fn save_trajectory(trajectory: &Trajectory, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    write_rows(&mut w, trajectory)
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let where_ = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(&where_, e.to_string()))?;
    let header = r
        .headers()
        .map_err(|e| Error::format(&where_, e.to_string()))?
        .clone();
    let n = header.iter().filter(|h| h.starts_with('x')).count();
    let q = header.iter().filter(|h| h.starts_with('q')).count();
    if header.get(0) != Some("t") || n + q + 1 != header.len() || q < 2 {
        return Err(Error::format(&where_, "header must be t, x0.., q0.."));
    }
    let mut samples = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(&where_, e.to_string()))?;
        let vals = rec
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(format!("{where_}: row {}", i + 1), e.to_string()))?;
        let pose = Pose::new(vals[1..1 + n].to_vec(), vals[1 + n..].to_vec())
            .map_err(|e| Error::format(format!("{where_}: row {}", i + 1), e.to_string()))?;
        samples.push((vals[0], pose));
    }
    Trajectory::new(samples).map_err(|e| Error::format(&where_, e.to_string()))
}

pub fn load_script(path: &Path) -> Result<ReplanScript> {
    let script: ReplanScript = read_json(path)?;
    script
        .validate()
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    Ok(script)
}

pub fn save_script(script: &ReplanScript, path: &Path) -> Result<()> {
    write_json(path, script)
}

pub fn save_timing_report(report: &TimingReport, path: &Path) -> Result<()> {
    write_json(path, report)
}
