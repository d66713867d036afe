//! Event loop: scans neighborhoods at `dt_scan`, refines crossings by
//! bisection, and runs the protocol and safety pass at every event.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{
    initial_assignment, priority_cmp, resolve_conflicts, EventContext, PriorityContext,
    ProtocolState,
};
use crate::trajectory::{
    check_safety, plan_within_limits, repair_trajectory, ArrivalRule, Piece, PieceKind,
    RepairContext, RepairFailure, Timeline, TrajectorySegment,
};
use crate::worldmodel::{neighborhoods, AgentState, GoalTrajectory, ScenarioConfig};

use super::metrics::{compute_metrics, RunMetrics};
use crate::protocol::{convergence_audit, ConvergenceReport, LogRecord};

/// Crossing times are refined until the bracket is this narrow.
pub const EVENT_TIME_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub rule: RuleChoice,
    /// Longest hold tried when repairing a separation violation.
    pub max_hold: f64,
    pub max_events: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RuleChoice {
    Optimal,
    Fixed(f64),
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            rule: RuleChoice::Optimal,
            max_hold: 3.0,
            max_events: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimEventKind {
    NeighborhoodEnter,
    NeighborhoodExit,
    Arrival,
    ConflictResolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub t: f64,
    pub kind: SimEventKind,
    pub participants: Vec<usize>,
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub config: ScenarioConfig,
    pub events: Vec<SimEvent>,
    pub log: Vec<LogRecord>,
    pub timelines: Vec<Timeline>,
    pub protocol: ProtocolState,
    pub failures: Vec<RepairFailure>,
    pub convergence: ConvergenceReport,
    pub metrics: RunMetrics,
    /// Last arrival plus the configured tail.
    pub horizon: f64,
}

impl SimRun {
    pub fn timeline(&self, agent: usize) -> Option<&Timeline> {
        self.timelines.iter().find(|t| t.agent == agent)
    }
}

struct World<'a> {
    cfg: &'a ScenarioConfig,
    rule: ArrivalRule,
    opts: &'a SimOptions,
    t: f64,
    timelines: BTreeMap<usize, Timeline>,
    segments: BTreeMap<usize, TrajectorySegment>,
    nbhd: BTreeMap<usize, BTreeSet<usize>>,
    cache: BTreeMap<(usize, usize), f64>,
    failures: Vec<RepairFailure>,
}

impl<'a> World<'a> {
    fn goal(&self, id: usize) -> Result<&'a GoalTrajectory> {
        self.cfg
            .goal(id)
            .ok_or_else(|| Error::Domain(format!("unknown goal {id}")))
    }

    fn states_at(&self, t: f64) -> Vec<AgentState> {
        self.timelines.values().map(|tl| tl.state_at(t)).collect()
    }

    fn set_time(&mut self, t: f64) {
        if t != self.t {
            self.cache.clear();
        }
        self.t = t;
    }

    fn refresh_neighborhoods(&mut self) {
        self.nbhd = neighborhoods(&self.states_at(self.t), self.cfg.params.h);
    }

    fn fail(&mut self, f: RepairFailure) {
        if !self
            .failures
            .iter()
            .any(|g| g.agent == f.agent && g.reason == f.reason)
        {
            self.failures.push(f);
        }
    }

    fn commit(&mut self, agent: usize, pieces: Vec<Piece>, seg: TrajectorySegment) -> Result<()> {
        let t = self.t;
        let tl = self.timelines.get_mut(&agent).ok_or(Error::UnknownAgent(agent))?;
        tl.replace_from(t, pieces)?;
        self.segments.insert(agent, seg);
        Ok(())
    }

    fn arrival_of(&self, agent: usize) -> f64 {
        self.timelines[&agent].arrival_time().unwrap_or(self.t)
    }

    /// Lower-priority agents re-check their plans against higher-priority
    /// neighbors and repair on violation.
    fn safety_pass(&mut self, state: &mut ProtocolState) -> Result<()> {
        let t = self.t;
        let prescribed = state.prescribed();
        let mut order = Vec::with_capacity(prescribed.len());
        for (&i, &g) in &prescribed {
            order.push(PriorityContext {
                id: i,
                neighborhood_size: self.nbhd[&i].len(),
                energy: self.energy(i, g)?,
            });
        }
        order.sort_by(|a, b| priority_cmp(b, a));

        let radius = self.cfg.params.radius;
        let tail = self.cfg.params.tail;
        for rank in 1..order.len() {
            let i = order[rank].id;
            let goal = self.goal(prescribed[&i])?;
            let higher: Vec<usize> = order[..rank]
                .iter()
                .map(|c| c.id)
                .filter(|j| self.nbhd[&i].contains(j))
                .collect();
            let mut report = crate::trajectory::ConstraintReport::default();
            for &j in &higher {
                let to = self.arrival_of(i).max(self.arrival_of(j)).max(t) + tail;
                let r = check_safety(
                    self.timelines[&i].from(t),
                    self.timelines[&j].from(t),
                    j,
                    radius,
                    t,
                    to,
                )?;
                report.safety_violations.extend(r.safety_violations);
            }
            if report.is_empty() {
                continue;
            }
            let seg = self.segments[&i].clone();
            let others: Vec<(usize, &[Piece])> = higher
                .iter()
                .map(|&j| (j, self.timelines[&j].from(t)))
                .collect();
            let ctx = RepairContext {
                t0: t,
                state: self.timelines[&i].state_at(t),
                goal,
                rule: self.rule,
                v_max: self.cfg.params.v_max,
                u_max: self.cfg.params.u_max,
                radius,
                others,
                tail,
                max_hold: self.opts.max_hold,
            };
            match repair_trajectory(&seg, &report, &ctx) {
                Ok(rep) => {
                    let pieces = rep.pieces(goal);
                    let e = rep.e_star;
                    self.commit(i, pieces, rep.segment)?;
                    state.record_replan(t, i, e)?;
                }
                Err(mut f) => {
                    let mut who: Vec<usize> =
                        report.safety_violations.iter().map(|v| v.other).collect();
                    who.dedup();
                    f.reason = format!("{} (against {:?})", f.reason, who);
                    self.fail(f);
                }
            }
        }
        Ok(())
    }
}

impl EventContext for World<'_> {
    fn time(&self) -> f64 {
        self.t
    }

    fn goals(&self) -> &[GoalTrajectory] {
        &self.cfg.goals
    }

    fn state_of(&self, agent: usize) -> AgentState {
        self.timelines[&agent].state_at(self.t)
    }

    fn neighborhood(&self, agent: usize) -> BTreeSet<usize> {
        self.nbhd.get(&agent).cloned().unwrap_or_default()
    }

    fn energy(&mut self, agent: usize, goal: usize) -> Result<f64> {
        if let Some(&e) = self.cache.get(&(agent, goal)) {
            return Ok(e);
        }
        let g = self.goal(goal)?;
        let (_, e) = self.rule.choose(self.t, &self.state_of(agent), g)?;
        self.cache.insert((agent, goal), e);
        Ok(e)
    }

    fn replan(&mut self, agent: usize, goal: usize) -> Result<f64> {
        let t = self.t;
        let g = self.goal(goal)?;
        let state = self.state_of(agent);
        let (dur, e) = self.rule.choose(t, &state, g)?;
        let p = &self.cfg.params;
        let (seg, _, ok) = plan_within_limits(t, &state, g, dur, p.v_max, p.u_max)?;
        if !ok {
            self.fail(RepairFailure {
                agent,
                t,
                reason: format!(
                    "speed/control limits not cleared by arrival-time dilation up to 3.0 (goal {goal})"
                ),
            });
        }
        let pieces = vec![seg.to_piece(), Piece::track(seg.tf, g)];
        self.commit(agent, pieces, seg)?;
        Ok(e)
    }
}

fn pair_distance(a: &Timeline, b: &Timeline, t: f64) -> f64 {
    (a.state_at(t).p - b.state_at(t).p).norm()
}

/// Bisects the first membership change of a pair inside `(lo, hi]`.
fn refine_crossing(a: &Timeline, b: &Timeline, h: f64, mut lo: f64, mut hi: f64) -> f64 {
    let inside_lo = pair_distance(a, b, lo) <= h;
    for _ in 0..200 {
        let d_hi = pair_distance(a, b, hi);
        if hi - lo <= EVENT_TIME_TOL && (d_hi - h).abs() <= EVENT_TIME_TOL * h {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (pair_distance(a, b, mid) <= h) == inside_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Runs a scenario to completion.
pub fn run_simulation(cfg: &ScenarioConfig) -> Result<SimRun> {
    run_simulation_with(cfg, &SimOptions::default())
}

pub fn run_simulation_with(cfg: &ScenarioConfig, opts: &SimOptions) -> Result<SimRun> {
    cfg.validate()?;
    let p = &cfg.params;
    let rule = match opts.rule {
        RuleChoice::Optimal => ArrivalRule::Optimal {
            t_min: p.t_min,
            t_max: p.t_max,
        },
        RuleChoice::Fixed(t) if t > 0.0 => ArrivalRule::Fixed(t),
        RuleChoice::Fixed(t) => {
            return Err(Error::Domain(format!("fixed arrival time must be positive, got {t}")))
        }
    };
    let mut world = World {
        cfg,
        rule,
        opts,
        t: 0.0,
        timelines: cfg.agents.iter().map(|a| (a.id, Timeline::new(a))).collect(),
        segments: BTreeMap::new(),
        nbhd: BTreeMap::new(),
        cache: BTreeMap::new(),
        failures: Vec::new(),
    };
    world.refresh_neighborhoods();

    let mut state = ProtocolState::new(cfg.agents.iter().map(|a| a.id), cfg.goals.len());
    let mut events = Vec::new();

    let bans = initial_assignment(&mut state, &mut world)?;
    if bans > 0 {
        events.push(SimEvent {
            t: 0.0,
            kind: SimEventKind::ConflictResolution,
            participants: state.agent_ids().collect(),
        });
    }
    world.safety_pass(&mut state)?;

    let ids: Vec<usize> = cfg.agents.iter().map(|a| a.id).collect();
    let mut logged_arrival: BTreeMap<usize, f64> = BTreeMap::new();
    let t_limit = p.t_max * 3.0 + opts.max_hold * opts.max_events as f64;
    let mut handled = 0usize;

    loop {
        let t = world.t;
        let pending: Vec<(usize, f64)> = ids
            .iter()
            .map(|&i| (i, world.arrival_of(i)))
            .filter(|&(i, a)| logged_arrival.get(&i) != Some(&a) && a >= t)
            .collect();
        if pending.is_empty() {
            break;
        }
        if handled > opts.max_events || t > t_limit {
            return Err(Error::ProtocolViolation {
                t,
                msg: "run did not settle within the event budget".into(),
            });
        }
        let next_arrival = pending.iter().map(|&(_, a)| a).fold(f64::INFINITY, f64::min);
        let t_next = (t + p.dt_scan).min(next_arrival);

        if p.h.is_finite() {
            let nb_next = neighborhoods(&world.states_at(t_next), p.h);
            if nb_next != world.nbhd {
                let mut earliest: Option<(f64, usize, usize, bool)> = None;
                for (k, &i) in ids.iter().enumerate() {
                    for &j in &ids[k + 1..] {
                        let before = world.nbhd[&i].contains(&j);
                        if nb_next[&i].contains(&j) == before {
                            continue;
                        }
                        let tc = refine_crossing(
                            &world.timelines[&i],
                            &world.timelines[&j],
                            p.h,
                            t,
                            t_next,
                        );
                        if earliest.is_none_or(|(e, ..)| tc < e) {
                            earliest = Some((tc, i, j, !before));
                        }
                    }
                }
                if let Some((tc, i, j, entered)) = earliest {
                    world.set_time(tc);
                    world.refresh_neighborhoods();
                    events.push(SimEvent {
                        t: tc,
                        kind: if entered {
                            SimEventKind::NeighborhoodEnter
                        } else {
                            SimEventKind::NeighborhoodExit
                        },
                        participants: vec![i, j],
                    });
                    let bans = resolve_conflicts(&mut state, &mut world)?;
                    if bans > 0 {
                        let mut who: Vec<usize> = state
                            .log
                            .iter()
                            .rev()
                            .take_while(|r| r.t == tc)
                            .map(|r| r.agent)
                            .collect();
                        who.sort_unstable();
                        who.dedup();
                        events.push(SimEvent {
                            t: tc,
                            kind: SimEventKind::ConflictResolution,
                            participants: who,
                        });
                    }
                    world.safety_pass(&mut state)?;
                    handled += 1;
                    continue;
                }
            }
        }

        world.set_time(t_next);
        if t_next == next_arrival {
            for &(i, a) in &pending {
                if a == t_next {
                    let goal = world.timelines[&i].goal_at(a);
                    state.record_arrival(a, i, goal);
                    logged_arrival.insert(i, a);
                    events.push(SimEvent {
                        t: a,
                        kind: SimEventKind::Arrival,
                        participants: vec![i],
                    });
                }
            }
            handled += 1;
        }
    }

    let arrivals: BTreeMap<usize, Option<f64>> = ids
        .iter()
        .map(|&i| (i, world.timelines[&i].arrival_time()))
        .collect();
    let convergence = convergence_audit(&state, &arrivals);
    let horizon = convergence.final_arrival_time + p.tail;
    let timelines: Vec<Timeline> = world.timelines.into_values().collect();
    let mut failures = world.failures;
    let metrics = compute_metrics(cfg, &timelines, &state, &convergence, &mut failures, horizon)?;
    debug_assert!(timelines
        .iter()
        .all(|tl| tl.pieces().iter().any(|p| p.kind == PieceKind::Transfer)));

    Ok(SimRun {
        config: cfg.clone(),
        events,
        log: state.log.clone(),
        timelines,
        protocol: state,
        failures,
        convergence,
        metrics,
        horizon,
    })
}
