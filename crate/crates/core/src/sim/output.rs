use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::PieceKind;
use crate::worldmodel::Vec2;

use super::engine::SimRun;

/// One executed transfer or hold, as cubic coefficients in `t - t0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub agent: usize,
    pub kind: PieceKind,
    pub goal: usize,
    pub t0: f64,
    pub tf: f64,
    pub coeffs_x: [f64; 4],
    pub coeffs_y: [f64; 4],
    /// `∫|u|²` over the piece.
    pub energy: f64,
}

pub fn trajectory_records(run: &SimRun) -> Vec<TrajectoryRecord> {
    let mut out = Vec::new();
    for tl in &run.timelines {
        for p in tl.pieces().iter().filter(|p| p.kind != PieceKind::Track) {
            let c = |k: usize| p.coeffs.get(k).copied().unwrap_or(Vec2::ZERO);
            let tf = if p.t1.is_finite() { p.t1 } else { p.t0 };
            out.push(TrajectoryRecord {
                agent: tl.agent,
                kind: p.kind,
                goal: p.goal,
                t0: p.t0,
                tf,
                coeffs_x: [c(0).x, c(1).x, c(2).x, c(3).x],
                coeffs_y: [c(0).y, c(1).y, c(2).y, c(3).y],
                energy: p.control_cost(p.t0, tf),
            });
        }
    }
    out
}

/// Number of trace samples per agent: `⌈horizon/dt⌉ + 1`.
pub fn trace_len(horizon: f64, dt: f64) -> usize {
    (horizon / dt).ceil() as usize + 1
}

/// Trace CSV sampled every `dt_scan` from 0 through the horizon.
pub fn trace_csv(run: &SimRun) -> String {
    let dt = run.config.params.dt_scan;
    let mut s = String::from("t,agent,px,py,vx,vy,ux,uy,goal\n");
    for n in 0..trace_len(run.horizon, dt) {
        let t = n as f64 * dt;
        for tl in &run.timelines {
            let piece = tl.piece_at(t);
            let (p, v, u) = (piece.position(t), piece.velocity(t), piece.control(t));
            let _ = writeln!(
                s,
                "{t},{},{},{},{},{},{},{},{}",
                tl.agent, p.x, p.y, v.x, v.y, u.x, u.y, piece.goal
            );
        }
    }
    s
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for it in items {
        s += &serde_json::to_string(it).expect("record serializes");
        s.push('\n');
    }
    s
}

pub fn events_jsonl(run: &SimRun) -> String {
    jsonl(&run.log)
}

pub fn metrics_json(run: &SimRun) -> String {
    serde_json::to_string_pretty(&run.metrics).expect("metrics serialize") + "\n"
}

fn write(path: PathBuf, body: &str) -> Result<PathBuf> {
    fs::write(&path, body).map_err(|source| Error::Io {
        context: path.display().to_string(),
        source,
    })?;
    Ok(path)
}

/// Writes `trace.csv` (optional), `events.jsonl`, `metrics.json`,
/// `trajectories.jsonl` and `failures.jsonl` into `dir`.
pub fn emit_outputs(run: &SimRun, dir: &Path, trace: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        context: dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();
    if trace {
        written.push(write(dir.join("trace.csv"), &trace_csv(run))?);
    }
    written.push(write(dir.join("events.jsonl"), &events_jsonl(run))?);
    written.push(write(dir.join("metrics.json"), &metrics_json(run))?);
    written.push(write(dir.join("trajectories.jsonl"), &jsonl(&trajectory_records(run)))?);
    written.push(write(dir.join("failures.jsonl"), &jsonl(&run.failures))?);
    Ok(written)
}
