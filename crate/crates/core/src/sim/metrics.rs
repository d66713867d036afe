use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::energy::reported_energy;
use crate::error::Result;
use crate::protocol::{ConvergenceReport, ProtocolState};
use crate::trajectory::{check_piece_limits, min_separation, PieceKind, RepairFailure, Timeline};
use crate::worldmodel::ScenarioConfig;

/// Summary of one run. Energies are ½∫|u|² in kJ/kg, summed up to the
/// agent's final arrival.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub agent_energy_kj_per_kg: BTreeMap<usize, f64>,
    pub total_energy_kj_per_kg: f64,
    pub total_arrival_time_s: f64,
    /// Closest approach over all pairs up to the horizon; `None` with fewer
    /// than two agents.
    pub min_separation_cm: Option<f64>,
    pub total_bans: usize,
    pub premise_held: bool,
    pub premise_violations: usize,
    pub repair_failures: usize,
    /// Agents whose goal-tracking phase exceeds a speed or control limit.
    pub tracking_limit_flags: Vec<usize>,
    pub converged: bool,
    pub unique_arrival: bool,
    /// Largest `|p(t_f) - p*(t_f)|` at the final arrivals, in metres.
    pub max_arrival_error_m: f64,
}

pub(crate) fn compute_metrics(
    cfg: &ScenarioConfig,
    timelines: &[Timeline],
    state: &ProtocolState,
    conv: &ConvergenceReport,
    failures: &mut Vec<RepairFailure>,
    horizon: f64,
) -> Result<RunMetrics> {
    let p = &cfg.params;
    let mut energy = BTreeMap::new();
    let mut max_err: f64 = 0.0;
    let mut flags = Vec::new();
    for tl in timelines {
        let arrival = tl.arrival_time().unwrap_or(0.0);
        energy.insert(tl.agent, reported_energy(tl.control_cost(0.0, arrival)) / 1000.0);
        let goal_id = tl.goal_at(arrival);
        if let Some(g) = cfg.goal(goal_id) {
            max_err = max_err.max((tl.state_at(arrival).p - g.position(arrival)).norm());
        }
        if let Some(track) = tl.pieces().last().filter(|p| p.kind == PieceKind::Track) {
            let until = horizon.max(track.t0);
            if !check_piece_limits(track, until, p.v_max, p.u_max)?.is_empty() {
                flags.push(tl.agent);
            }
        }
    }

    let mut min_sep: Option<f64> = None;
    for (k, a) in timelines.iter().enumerate() {
        for b in &timelines[k + 1..] {
            let Some((t, d)) = min_separation(a.pieces(), b.pieces(), 0.0, horizon)? else {
                continue;
            };
            min_sep = Some(min_sep.map_or(d, |m: f64| m.min(d)));
            let recorded = failures.iter().any(|f| f.agent == a.agent || f.agent == b.agent);
            if d < 2.0 * p.radius * (1.0 - 1e-9) && !recorded {
                failures.push(RepairFailure {
                    agent: b.agent,
                    t,
                    reason: format!(
                        "audit: agents {} and {} reach {:.6} m < 2R without a repair attempt",
                        a.agent, b.agent, d
                    ),
                });
            }
        }
    }

    Ok(RunMetrics {
        total_energy_kj_per_kg: energy.values().sum(),
        agent_energy_kj_per_kg: energy,
        total_arrival_time_s: conv.final_arrival_time,
        min_separation_cm: min_sep.map(|d| d * 100.0),
        total_bans: state.total_bans(),
        premise_held: conv.premise_held,
        premise_violations: conv.premise_violations.len(),
        repair_failures: failures.len(),
        tracking_limit_flags: flags,
        converged: conv.unique_arrival,
        unique_arrival: conv.unique_arrival,
        max_arrival_error_m: max_err,
    })
}
