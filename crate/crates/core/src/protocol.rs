//! Event-driven banning and reassignment.
//!
//! Each agent solves its local assignment and keeps the goal it gets for
//! itself (its *prescribed* goal). Neighbors that prescribe themselves the
//! same goal compete for it; every contender except the one with the highest
//! priority bans the goal for good and solves its assignment again. Bans are
//! never lifted, each round adds at least one, and a banned goal always
//! stays held by the agent that won it, so the local assignment stays
//! feasible and the cascade terminates.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::assignment::{build_cost_matrix_with, solve_assignment, BanSets};
use crate::error::{Error, Result};
use crate::worldmodel::{AgentState, GoalTrajectory};

/// What an agent contributes to a priority comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorityContext {
    pub id: usize,
    pub neighborhood_size: usize,
    /// Unconstrained energy to the contested goal.
    pub energy: f64,
}

/// Total order on contenders: larger neighborhood first, then strictly lower
/// energy, then lower id. `Greater` means `i` outranks `j`.
pub fn priority_cmp(i: &PriorityContext, j: &PriorityContext) -> Ordering {
    i.neighborhood_size
        .cmp(&j.neighborhood_size)
        .then_with(|| j.energy.total_cmp(&i.energy))
        .then_with(|| j.id.cmp(&i.id))
}

/// `true` iff `i` has priority over `j`.
pub fn priority(i: &PriorityContext, j: &PriorityContext) -> Result<bool> {
    if i.id == j.id {
        return Err(Error::Domain(format!("agent {} compared with itself", i.id)));
    }
    Ok(priority_cmp(i, j) == Ordering::Greater)
}

/// The agent that must keep clear of the other: the one without priority.
pub fn responsible_agent(i: &PriorityContext, j: &PriorityContext) -> Result<usize> {
    Ok(if priority(i, j)? { j.id } else { i.id })
}

/// Neighbors of `i` that prescribe themselves the same goal as `i`.
pub fn competing_set(
    i: usize,
    prescribed: &BTreeMap<usize, usize>,
    nbhd: &BTreeSet<usize>,
) -> BTreeSet<usize> {
    let Some(mine) = prescribed.get(&i) else {
        return BTreeSet::new();
    };
    nbhd.iter()
        .copied()
        .filter(|&j| j != i && prescribed.get(&j) == Some(mine))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogKind {
    Assign,
    Ban,
    Conflict,
    Arrive,
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: f64,
    #[serde(rename = "type")]
    pub kind: LogKind,
    pub agent: usize,
    pub goal: usize,
    #[serde(rename = "E_star")]
    pub e_star: f64,
    pub competing_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub t: f64,
    pub goal: usize,
    pub e_star: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgentRecord {
    pub prescribed: Option<usize>,
    bans: BTreeSet<usize>,
    /// Every plan committed for this agent, in time order.
    pub history: Vec<PlanRecord>,
}

impl AgentRecord {
    pub fn bans(&self) -> &BTreeSet<usize> {
        &self.bans
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolState {
    agents: BTreeMap<usize, AgentRecord>,
    goal_count: usize,
    pub log: Vec<LogRecord>,
}

impl ProtocolState {
    pub fn new(agent_ids: impl IntoIterator<Item = usize>, goal_count: usize) -> Self {
        ProtocolState {
            agents: agent_ids
                .into_iter()
                .map(|i| (i, AgentRecord::default()))
                .collect(),
            goal_count,
            log: Vec::new(),
        }
    }

    pub fn agent(&self, i: usize) -> Option<&AgentRecord> {
        self.agents.get(&i)
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.agents.keys().copied()
    }

    pub fn prescribed(&self) -> BTreeMap<usize, usize> {
        self.agents
            .iter()
            .filter_map(|(&i, r)| r.prescribed.map(|g| (i, g)))
            .collect()
    }

    pub fn ban_sets(&self) -> BanSets {
        self.agents.iter().map(|(&i, r)| (i, r.bans.clone())).collect()
    }

    pub fn total_bans(&self) -> usize {
        self.agents.values().map(|r| r.bans.len()).sum()
    }

    fn record_mut(&mut self, i: usize) -> Result<&mut AgentRecord> {
        self.agents.get_mut(&i).ok_or(Error::UnknownAgent(i))
    }

    fn ban(&mut self, t: f64, i: usize, goal: usize, e_star: f64) -> Result<()> {
        let limit = self.goal_count.saturating_sub(1);
        let rec = self.record_mut(i)?;
        if !rec.bans.insert(goal) {
            return Err(Error::ProtocolViolation {
                t,
                msg: format!("agent {i} banned twice from goal {goal}"),
            });
        }
        if rec.bans.len() > limit {
            return Err(Error::ProtocolViolation {
                t,
                msg: format!("agent {i} banned from every goal"),
            });
        }
        rec.prescribed = None;
        self.log.push(LogRecord {
            t,
            kind: LogKind::Ban,
            agent: i,
            goal,
            e_star,
            competing_ids: Vec::new(),
        });
        Ok(())
    }

    fn prescribe(&mut self, t: f64, i: usize, goal: usize, e_star: f64) -> Result<()> {
        let rec = self.record_mut(i)?;
        if rec.bans.contains(&goal) {
            return Err(Error::ProtocolViolation {
                t,
                msg: format!("agent {i} assigned its banned goal {goal}"),
            });
        }
        rec.prescribed = Some(goal);
        rec.history.push(PlanRecord { t, goal, e_star });
        self.log.push(LogRecord {
            t,
            kind: LogKind::Assign,
            agent: i,
            goal,
            e_star,
            competing_ids: Vec::new(),
        });
        Ok(())
    }

    /// Records a re-plan towards the current goal (e.g. after a repair).
    pub fn record_replan(&mut self, t: f64, i: usize, e_star: f64) -> Result<()> {
        let rec = self.record_mut(i)?;
        let goal = rec.prescribed.ok_or(Error::ProtocolViolation {
            t,
            msg: format!("agent {i} re-planned without a goal"),
        })?;
        rec.history.push(PlanRecord { t, goal, e_star });
        Ok(())
    }

    pub fn record_arrival(&mut self, t: f64, i: usize, goal: usize) {
        self.log.push(LogRecord {
            t,
            kind: LogKind::Arrive,
            agent: i,
            goal,
            e_star: 0.0,
            competing_ids: Vec::new(),
        });
    }
}

/// What the protocol needs from the world at one event instant.
pub trait EventContext {
    fn time(&self) -> f64;
    fn goals(&self) -> &[GoalTrajectory];
    fn state_of(&self, agent: usize) -> AgentState;
    fn neighborhood(&self, agent: usize) -> BTreeSet<usize>;
    /// Assignment cost of a pair at the current instant.
    fn energy(&mut self, agent: usize, goal: usize) -> Result<f64>;
    /// Plans the agent's trajectory to `goal`; returns the unconstrained cost.
    fn replan(&mut self, agent: usize, goal: usize) -> Result<f64>;
}

/// Solves agent `i`'s local assignment and returns the goal it gives `i`.
pub fn solve_local<C: EventContext>(state: &ProtocolState, ctx: &mut C, i: usize) -> Result<(usize, f64)> {
    let t = ctx.time();
    let members: Vec<AgentState> = ctx.neighborhood(i).iter().map(|&j| ctx.state_of(j)).collect();
    let bans: BanSets = members
        .iter()
        .map(|a| {
            let b = state.agent(a.id).map(|r| r.bans.clone()).unwrap_or_default();
            (a.id, b)
        })
        .collect();
    let goals = ctx.goals().to_vec();
    let infeasible = |e: Error| match e {
        Error::Infeasible(msg) => Error::ProtocolViolation { t, msg },
        other => other,
    };
    let cm = build_cost_matrix_with(&members, &goals, &bans, |a, g| ctx.energy(a.id, g.id))
        .map_err(infeasible)?;
    let sol = solve_assignment(&cm).map_err(infeasible)?;
    let goal = sol.goal_of(i).ok_or(Error::ProtocolViolation {
        t,
        msg: format!("agent {i} missing from its own assignment"),
    })?;
    Ok((goal, cm.get(i, goal).unwrap_or(f64::NAN)))
}

fn assign<C: EventContext>(state: &mut ProtocolState, ctx: &mut C, i: usize) -> Result<()> {
    let (goal, _) = solve_local(state, ctx, i)?;
    let e = ctx.replan(i, goal)?;
    state.prescribe(ctx.time(), i, goal, e)
}

/// Every agent solves its assignment and plans (the start of a run).
pub fn initial_assignment<C: EventContext>(state: &mut ProtocolState, ctx: &mut C) -> Result<usize> {
    let ids: Vec<usize> = state.agent_ids().collect();
    for &i in &ids {
        assign(state, ctx, i)?;
    }
    resolve_conflicts(state, ctx)
}

/// Runs ban-and-reassign rounds until no agent has a competitor in its
/// neighborhood. Returns the number of bans issued.
pub fn resolve_conflicts<C: EventContext>(state: &mut ProtocolState, ctx: &mut C) -> Result<usize> {
    let t = ctx.time();
    let ids: Vec<usize> = state.agent_ids().collect();
    let mut issued = 0;
    loop {
        let prescribed = state.prescribed();
        let nbhds: BTreeMap<usize, BTreeSet<usize>> =
            ids.iter().map(|&i| (i, ctx.neighborhood(i))).collect();
        let mut losers = Vec::new();
        for &i in &ids {
            let rivals = competing_set(i, &prescribed, &nbhds[&i]);
            if rivals.is_empty() {
                continue;
            }
            let goal = prescribed[&i];
            let me = PriorityContext {
                id: i,
                neighborhood_size: nbhds[&i].len(),
                energy: ctx.energy(i, goal)?,
            };
            let mut lost = false;
            for &j in &rivals {
                let them = PriorityContext {
                    id: j,
                    neighborhood_size: nbhds[&j].len(),
                    energy: ctx.energy(j, goal)?,
                };
                lost |= priority(&them, &me)?;
            }
            state.log.push(LogRecord {
                t,
                kind: LogKind::Conflict,
                agent: i,
                goal,
                e_star: me.energy,
                competing_ids: rivals.into_iter().collect(),
            });
            if lost {
                losers.push((i, goal, me.energy));
            }
        }
        if losers.is_empty() {
            return Ok(issued);
        }
        for &(i, goal, e) in &losers {
            state.ban(t, i, goal, e)?;
            issued += 1;
        }
        for &(i, _, _) in &losers {
            assign(state, ctx, i)?;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiseViolation {
    pub agent: usize,
    pub goal: usize,
    pub t1: f64,
    pub e1: f64,
    pub t2: f64,
    pub e2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub unique_arrival: bool,
    pub final_arrival_time: f64,
    pub premise_held: bool,
    pub premise_violations: Vec<PremiseViolation>,
    pub total_bans: usize,
}

/// End-of-run audit: unique arrival, and whether the unconstrained energy to
/// a goal never rose between successive plans towards that goal.
pub fn convergence_audit(
    state: &ProtocolState,
    arrivals: &BTreeMap<usize, Option<f64>>,
) -> ConvergenceReport {
    let prescribed = state.prescribed();
    let goals: BTreeSet<_> = prescribed.values().collect();
    let all_assigned = state.agents.keys().all(|i| prescribed.contains_key(i));
    let all_arrived = state
        .agents
        .keys()
        .all(|i| arrivals.get(i).copied().flatten().is_some());
    let unique_arrival = all_assigned && all_arrived && goals.len() == prescribed.len();
    let final_arrival_time = arrivals
        .values()
        .flatten()
        .copied()
        .fold(0.0, f64::max);

    let mut premise_violations = Vec::new();
    for (&i, rec) in &state.agents {
        let mut last: BTreeMap<usize, &PlanRecord> = BTreeMap::new();
        for p in &rec.history {
            if let Some(prev) = last.get(&p.goal) {
                if p.e_star > prev.e_star * (1.0 + 1e-9) + 1e-12 {
                    premise_violations.push(PremiseViolation {
                        agent: i,
                        goal: p.goal,
                        t1: prev.t,
                        e1: prev.e_star,
                        t2: p.t,
                        e2: p.e_star,
                    });
                }
            }
            last.insert(p.goal, p);
        }
    }
    ConvergenceReport {
        unique_arrival,
        final_arrival_time,
        premise_held: premise_violations.is_empty(),
        premise_violations,
        total_bans: state.total_bans(),
    }
}

/// Replays ban records; true iff every ban adds a goal not already banned.
pub fn bans_monotone(log: &[LogRecord]) -> bool {
    let mut seen: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut last_t = f64::NEG_INFINITY;
    log.iter().filter(|r| r.kind == LogKind::Ban).all(|r| {
        let ok = r.t >= last_t && seen.entry(r.agent).or_default().insert(r.goal);
        last_t = r.t;
        ok
    })
}
