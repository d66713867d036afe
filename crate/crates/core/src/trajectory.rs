//! Minimum-energy transfers, per-agent timelines and exact constraint checks.
//!
//! Every piece of an agent's motion is a planar polynomial in local time
//! `s = t - t0`: a cubic transfer, a hold (brake to rest, then wait), or
//! exact tracking of the goal after arrival. Squared speed, squared control and squared
//! inter-agent distance are then scalar polynomials, so limits and
//! separation are checked through their critical points instead of by
//! sampling.

use serde::{Deserialize, Serialize};

use crate::energy::{boundary_coefficients, minimize_energy, positive_real_roots};
use crate::error::{Error, Result};
use crate::poly;
use crate::worldmodel::{AgentState, GoalTrajectory, Vec2};

/// Relative slack before a limit counts as exceeded.
const LIMIT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PieceKind {
    Transfer,
    Hold,
    Track,
}

/// Motion on `[t0, t1)` with position `Σ coeffs[l] (t - t0)^l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub t0: f64,
    pub t1: f64,
    pub goal: usize,
    pub kind: PieceKind,
    pub coeffs: Vec<Vec2>,
}

impl Piece {
    pub fn position(&self, t: f64) -> Vec2 {
        poly::eval_vec(&self.coeffs, t - self.t0)
    }

    pub fn velocity(&self, t: f64) -> Vec2 {
        poly::eval_vec(&poly::derivative_vec(&self.coeffs), t - self.t0)
    }

    pub fn control(&self, t: f64) -> Vec2 {
        poly::eval_vec(
            &poly::derivative_vec(&poly::derivative_vec(&self.coeffs)),
            t - self.t0,
        )
    }

    /// Coefficients re-expressed around absolute time `origin`.
    fn coeffs_from(&self, origin: f64) -> Vec<Vec2> {
        poly::shift_vec(&self.coeffs, origin - self.t0)
    }

    /// Exact `∫|u|²` over `[from, to]`.
    pub fn control_cost(&self, from: f64, to: f64) -> f64 {
        let u = poly::derivative_vec(&poly::derivative_vec(&self.coeffs));
        let sq = poly::norm_sq_vec(&u);
        let anti: Vec<f64> = std::iter::once(0.0)
            .chain(sq.iter().enumerate().map(|(l, &c)| c / (l + 1) as f64))
            .collect();
        poly::eval(&anti, to - self.t0) - poly::eval(&anti, from - self.t0)
    }

    /// Brakes at `u_max` against the current velocity until at rest, then
    /// stays put, over `[t0, t1]`. An agent already at rest just stays.
    pub fn hold(t0: f64, t1: f64, state: &AgentState, goal: usize, u_max: f64) -> Vec<Piece> {
        let speed = state.v.norm();
        let piece = |t0, t1, coeffs| Piece {
            t0,
            t1,
            goal,
            kind: PieceKind::Hold,
            coeffs,
        };
        if speed == 0.0 {
            return vec![piece(t0, t1, vec![state.p])];
        }
        let decel = state.v * (-u_max / speed);
        let t_stop = t0 + speed / u_max;
        let braking = piece(t0, t_stop.min(t1), vec![state.p, state.v, decel * 0.5]);
        if t_stop >= t1 {
            return vec![braking];
        }
        let rest = braking.position(t_stop);
        vec![braking, piece(t_stop, t1, vec![rest])]
    }

    /// Exact tracking of `goal` (absolute time) from `t0` onwards.
    pub fn track(t0: f64, goal: &GoalTrajectory) -> Piece {
        Piece {
            t0,
            t1: f64::INFINITY,
            goal: goal.id,
            kind: PieceKind::Track,
            coeffs: goal.rebased(t0).coeffs,
        }
    }
}

/// Unconstrained cubic transfer from a boundary state to a goal.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySegment {
    pub t0: f64,
    pub tf: f64,
    pub goal: usize,
    /// Position coefficients in `s = t - t0`: `[p0, v0, b/2, a/6]`.
    pub coeffs: [Vec2; 4],
    pub a: Vec2,
    pub b: Vec2,
    pub start: (Vec2, Vec2),
    pub end: (Vec2, Vec2),
    /// `∫|u|²` over the segment.
    pub energy: f64,
}

impl TrajectorySegment {
    pub fn duration(&self) -> f64 {
        self.tf - self.t0
    }

    pub fn position(&self, t: f64) -> Vec2 {
        poly::eval_vec(&self.coeffs, t - self.t0)
    }

    pub fn velocity(&self, t: f64) -> Vec2 {
        let s = t - self.t0;
        self.coeffs[1] + self.b * s + self.a * (0.5 * s * s)
    }

    pub fn control(&self, t: f64) -> Vec2 {
        self.a * (t - self.t0) + self.b
    }

    pub fn to_piece(&self) -> Piece {
        Piece {
            t0: self.t0,
            t1: self.tf,
            goal: self.goal,
            kind: PieceKind::Transfer,
            coeffs: self.coeffs.to_vec(),
        }
    }
}

/// Transfer in the planning frame (`t0 = 0`, goal already rebased).
pub fn plan_unconstrained(
    state: &AgentState,
    goal: &GoalTrajectory,
    t_star: f64,
) -> Result<TrajectorySegment> {
    let bc = boundary_coefficients(state, goal, t_star)?;
    let end = (goal.position(t_star), goal.velocity(t_star));
    Ok(TrajectorySegment {
        t0: 0.0,
        tf: t_star,
        goal: goal.id,
        coeffs: [state.p, state.v, bc.b * 0.5, bc.a * (1.0 / 6.0)],
        a: bc.a,
        b: bc.b,
        start: (state.p, state.v),
        end,
        energy: bc.energy(),
    })
}

/// Transfer starting at absolute time `t0` towards a goal given in absolute
/// time.
pub fn plan_from(
    t0: f64,
    state: &AgentState,
    goal: &GoalTrajectory,
    duration: f64,
) -> Result<TrajectorySegment> {
    let mut seg = plan_unconstrained(state, &goal.rebased(t0), duration)?;
    seg.t0 = t0;
    seg.tf = t0 + duration;
    Ok(seg)
}

/// How a transfer's duration is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArrivalRule {
    /// Minimize the unconstrained energy over `[t_min, t_max]`.
    Optimal { t_min: f64, t_max: f64 },
    /// Always use this duration.
    Fixed(f64),
}

impl ArrivalRule {
    /// Duration and unconstrained cost for a transfer starting at `t0`.
    pub fn choose(&self, t0: f64, state: &AgentState, goal: &GoalTrajectory) -> Result<(f64, f64)> {
        let local = goal.rebased(t0);
        match *self {
            ArrivalRule::Optimal { t_min, t_max } => {
                let prof = minimize_energy(state, &local, t_min, t_max)?;
                Ok((prof.t_star, prof.e_star))
            }
            ArrivalRule::Fixed(t) => Ok((t, crate::energy::energy_at(state, &local, t)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitViolation {
    pub t_start: f64,
    pub t_end: f64,
    pub peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyViolation {
    pub other: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub min_distance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub v_violations: Vec<LimitViolation>,
    pub u_violations: Vec<LimitViolation>,
    pub safety_violations: Vec<SafetyViolation>,
}

impl ConstraintReport {
    pub fn is_empty(&self) -> bool {
        self.v_violations.is_empty() && self.u_violations.is_empty() && self.safety_violations.is_empty()
    }

    pub fn has_limit_violations(&self) -> bool {
        !self.v_violations.is_empty() || !self.u_violations.is_empty()
    }
}

/// Intervals of `[0, len]` where `√q(s)` exceeds `limit`, for a
/// non-negative polynomial `q`. Times are offset by `t0`.
fn exceedances(q: &[f64], limit: f64, t0: f64, len: f64) -> Result<Vec<LimitViolation>> {
    if !(len > 0.0) {
        return Ok(Vec::new());
    }
    let f = poly::add(q, &[-limit * limit]);
    let mut knots = vec![0.0];
    if poly::trim(&f).len() > 1 {
        knots.extend(positive_real_roots(&f, 0.0, len)?);
    }
    knots.push(len);
    knots.dedup();

    let dq = poly::derivative(q);
    let crit = if poly::trim(&dq).is_empty() {
        Vec::new()
    } else {
        positive_real_roots(&dq, 0.0, len)?
    };

    let mut out: Vec<LimitViolation> = Vec::new();
    for w in knots.windows(2) {
        let (s0, s1) = (w[0], w[1]);
        if s1 <= s0 || poly::eval(&f, 0.5 * (s0 + s1)) <= 0.0 {
            continue;
        }
        let peak_sq = crit
            .iter()
            .copied()
            .filter(|&c| c > s0 && c < s1)
            .chain([s0, s1])
            .map(|s| poly::eval(q, s))
            .fold(f64::NEG_INFINITY, f64::max);
        let peak = peak_sq.max(0.0).sqrt();
        if peak <= limit * (1.0 + LIMIT_SLACK) {
            continue;
        }
        match out.last_mut() {
            Some(prev) if prev.t_end == t0 + s0 => {
                prev.t_end = t0 + s1;
                prev.peak = prev.peak.max(peak);
            }
            _ => out.push(LimitViolation {
                t_start: t0 + s0,
                t_end: t0 + s1,
                peak,
            }),
        }
    }
    Ok(out)
}

/// Speed and control limit check of a polynomial piece over `[t0, until]`.
pub fn check_piece_limits(piece: &Piece, until: f64, v_max: f64, u_max: f64) -> Result<ConstraintReport> {
    let vel = poly::derivative_vec(&piece.coeffs);
    let acc = poly::derivative_vec(&vel);
    let len = until - piece.t0;
    Ok(ConstraintReport {
        v_violations: exceedances(&poly::norm_sq_vec(&vel), v_max, piece.t0, len)?,
        u_violations: exceedances(&poly::norm_sq_vec(&acc), u_max, piece.t0, len)?,
        safety_violations: Vec::new(),
    })
}

pub fn check_limits(seg: &TrajectorySegment, v_max: f64, u_max: f64) -> Result<ConstraintReport> {
    check_piece_limits(&seg.to_piece(), seg.tf, v_max, u_max)
}

fn piece_at(pieces: &[Piece], t: f64) -> Option<&Piece> {
    pieces.iter().find(|p| p.t0 <= t && t < p.t1).or_else(|| {
        pieces
            .last()
            .filter(|p| t >= p.t0 && p.t1.is_infinite())
    })
}

/// Sub-intervals of `[from, to]` on which both piece lists are a single
/// polynomial, with the squared distance polynomial in `s = t - start`.
fn distance_pieces(a: &[Piece], b: &[Piece], from: f64, to: f64) -> Vec<(f64, f64, Vec<f64>)> {
    let mut cuts: Vec<f64> = a
        .iter()
        .chain(b)
        .flat_map(|p| [p.t0, p.t1])
        .filter(|&t| t > from && t < to)
        .collect();
    cuts.push(from);
    cuts.push(to);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.windows(2)
        .filter_map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let pa = piece_at(a, mid)?;
            let pb = piece_at(b, mid)?;
            let diff = poly::sub_vec(&pa.coeffs_from(w[0]), &pb.coeffs_from(w[0]));
            Some((w[0], w[1], poly::norm_sq_vec(&diff)))
        })
        .collect()
}

/// Closest approach `(time, distance)` of two motions over `[from, to]`.
pub fn min_separation(a: &[Piece], b: &[Piece], from: f64, to: f64) -> Result<Option<(f64, f64)>> {
    let mut best: Option<(f64, f64)> = None;
    for (t0, t1, d2) in distance_pieces(a, b, from, to) {
        let len = t1 - t0;
        let dd = poly::derivative(&d2);
        let mut cands = vec![0.0, len];
        if !poly::trim(&dd).is_empty() && len > 0.0 {
            cands.extend(positive_real_roots(&dd, 0.0, len)?);
        }
        for s in cands {
            let d = poly::eval(&d2, s).max(0.0).sqrt();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((t0 + s, d));
            }
        }
    }
    Ok(best)
}

/// Intervals of `[from, to]` where the two motions are closer than `2R`.
pub fn check_safety(
    a: &[Piece],
    b: &[Piece],
    other: usize,
    radius: f64,
    from: f64,
    to: f64,
) -> Result<ConstraintReport> {
    let lim = 2.0 * radius;
    let mut out: Vec<SafetyViolation> = Vec::new();
    for (t0, t1, d2) in distance_pieces(a, b, from, to) {
        let len = t1 - t0;
        if !(len > 0.0) {
            continue;
        }
        let f = poly::add(&d2, &[-lim * lim]);
        let mut knots = vec![0.0];
        if poly::trim(&f).len() > 1 {
            knots.extend(positive_real_roots(&f, 0.0, len)?);
        }
        knots.push(len);
        knots.dedup();
        let dd = poly::derivative(&d2);
        let crit = if poly::trim(&dd).is_empty() {
            Vec::new()
        } else {
            positive_real_roots(&dd, 0.0, len)?
        };
        for w in knots.windows(2) {
            let (s0, s1) = (w[0], w[1]);
            if s1 <= s0 || poly::eval(&f, 0.5 * (s0 + s1)) >= 0.0 {
                continue;
            }
            let min_d = crit
                .iter()
                .copied()
                .filter(|&c| c > s0 && c < s1)
                .chain([s0, s1])
                .map(|s| poly::eval(&d2, s).max(0.0).sqrt())
                .fold(f64::INFINITY, f64::min);
            if min_d >= lim * (1.0 - LIMIT_SLACK) {
                continue;
            }
            match out.last_mut() {
                Some(prev) if prev.t_end == t0 + s0 => {
                    prev.t_end = t0 + s1;
                    prev.min_distance = prev.min_distance.min(min_d);
                }
                _ => out.push(SafetyViolation {
                    other,
                    t_start: t0 + s0,
                    t_end: t0 + s1,
                    min_distance: min_d,
                }),
            }
        }
    }
    Ok(ConstraintReport {
        safety_violations: out,
        ..Default::default()
    })
}

/// Dilation factors tried for speed/control violations.
pub fn dilation_factors() -> impl Iterator<Item = f64> {
    (11..=30).map(|k| k as f64 / 10.0)
}

/// Hold durations tried for separation violations.
pub fn hold_durations(max_hold: f64) -> impl Iterator<Item = f64> {
    (1..).map(|k| k as f64 / 10.0).take_while(move |&d| d <= max_hold + 1e-12)
}

/// What a repair has to respect.
#[derive(Debug, Clone)]
pub struct RepairContext<'a> {
    /// Absolute time the repaired motion starts from.
    pub t0: f64,
    pub state: AgentState,
    pub goal: &'a GoalTrajectory,
    pub rule: ArrivalRule,
    pub v_max: f64,
    pub u_max: f64,
    pub radius: f64,
    /// Committed motions of higher-priority agents.
    pub others: Vec<(usize, &'a [Piece])>,
    /// Extra checking time after the later of the two arrivals.
    pub tail: f64,
    pub max_hold: f64,
}

/// A repaired motion: a hold (possibly empty) followed by a transfer.
#[derive(Debug, Clone, PartialEq)]
pub struct Repaired {
    pub hold: Vec<Piece>,
    pub segment: TrajectorySegment,
    /// Unconstrained cost of the chosen transfer, before any dilation.
    pub e_star: f64,
    pub dilation: f64,
}

impl Repaired {
    /// Full motion from the repair start, ending with exact goal tracking.
    pub fn pieces(&self, goal: &GoalTrajectory) -> Vec<Piece> {
        let mut out = self.hold.clone();
        out.push(self.segment.to_piece());
        out.push(Piece::track(self.segment.tf, goal));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairFailure {
    pub agent: usize,
    pub t: f64,
    pub reason: String,
}

/// Transfer starting at `t0` whose speed and control limits hold, dilating
/// the arrival time by the smallest factor in 1.1, 1.2, …, 3.0 if needed.
/// Returns the segment and the factor used (1.0 when none was needed).
pub fn plan_within_limits(
    t0: f64,
    state: &AgentState,
    goal: &GoalTrajectory,
    duration: f64,
    v_max: f64,
    u_max: f64,
) -> Result<(TrajectorySegment, f64, bool)> {
    let seg = plan_from(t0, state, goal, duration)?;
    if !check_limits(&seg, v_max, u_max)?.has_limit_violations() {
        return Ok((seg, 1.0, true));
    }
    for s in dilation_factors() {
        let cand = plan_from(t0, state, goal, duration * s)?;
        if !check_limits(&cand, v_max, u_max)?.has_limit_violations() {
            return Ok((cand, s, true));
        }
    }
    Ok((seg, 1.0, false))
}

fn safety_clear(ctx: &RepairContext<'_>, pieces: &[Piece], arrival: f64) -> Result<bool> {
    for &(other, theirs) in &ctx.others {
        let their_arrival = theirs
            .iter()
            .filter(|p| p.kind != PieceKind::Track)
            .map(|p| p.t1)
            .fold(ctx.t0, f64::max);
        let to = arrival.max(their_arrival) + ctx.tail;
        if !check_safety(pieces, theirs, other, ctx.radius, ctx.t0, to)?.is_empty() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Heuristic, non-optimal repair of a transfer that violates its limits or
/// the separation to higher-priority agents.
///
/// Limit violations are handled by arrival-time dilation. Separation
/// violations are handled by holding for 0.1 s, 0.2 s, … up to `max_hold`
/// and replanning from the end of the hold; a moving agent brakes to rest
/// at `u_max` first (see [`Piece::hold`]).
pub fn repair_trajectory(
    seg: &TrajectorySegment,
    violations: &ConstraintReport,
    ctx: &RepairContext<'_>,
) -> std::result::Result<Repaired, RepairFailure> {
    let fail = |reason: String| RepairFailure {
        agent: ctx.state.id,
        t: ctx.t0,
        reason,
    };
    let e_star = seg.energy;
    if violations.is_empty() {
        return Ok(Repaired {
            hold: Vec::new(),
            segment: seg.clone(),
            e_star,
            dilation: 1.0,
        });
    }
    let run = || -> Result<Option<Repaired>> {
        if violations.safety_violations.is_empty() {
            let (cand, s, ok) = plan_within_limits(
                ctx.t0,
                &ctx.state,
                ctx.goal,
                seg.duration(),
                ctx.v_max,
                ctx.u_max,
            )?;
            let rep = Repaired {
                hold: Vec::new(),
                segment: cand,
                e_star,
                dilation: s,
            };
            let clear = ok && safety_clear(ctx, &rep.pieces(ctx.goal), rep.segment.tf)?;
            return Ok(clear.then_some(rep));
        }
        for delta in hold_durations(ctx.max_hold) {
            let hold = Piece::hold(ctx.t0, ctx.t0 + delta, &ctx.state, ctx.goal.id, ctx.u_max);
            let last = hold.last().expect("hold has a piece");
            let t1 = last.t1;
            let held = AgentState::new(ctx.state.id, last.position(t1), last.velocity(t1));
            let (dur, e) = ctx.rule.choose(t1, &held, ctx.goal)?;
            let (cand, s, ok) = plan_within_limits(t1, &held, ctx.goal, dur, ctx.v_max, ctx.u_max)?;
            if !ok {
                continue;
            }
            let rep = Repaired {
                hold,
                segment: cand,
                e_star: e,
                dilation: s,
            };
            if safety_clear(ctx, &rep.pieces(ctx.goal), rep.segment.tf)? {
                return Ok(Some(rep));
            }
        }
        Ok(None)
    };
    match run() {
        Ok(Some(rep)) => Ok(rep),
        Ok(None) => Err(fail(if violations.safety_violations.is_empty() {
            "speed/control limits not cleared by arrival-time dilation up to 3.0".into()
        } else {
            format!("separation not cleared by holding up to {} s", ctx.max_hold)
        })),
        Err(e) => Err(fail(e.to_string())),
    }
}

/// Executed and planned motion of one agent, as contiguous pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub agent: usize,
    pieces: Vec<Piece>,
}

impl Timeline {
    /// An agent holding its initial state until its first plan is committed.
    pub fn new(initial: &AgentState) -> Self {
        Timeline {
            agent: initial.id,
            pieces: vec![Piece {
                t0: 0.0,
                t1: f64::INFINITY,
                goal: 0,
                kind: PieceKind::Hold,
                coeffs: vec![initial.p, initial.v],
            }],
        }
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Pieces overlapping `[t, ∞)`.
    pub fn from(&self, t: f64) -> &[Piece] {
        let k = self.pieces.iter().position(|p| p.t1 > t).unwrap_or(self.pieces.len());
        &self.pieces[k..]
    }

    pub fn piece_at(&self, t: f64) -> &Piece {
        piece_at(&self.pieces, t).unwrap_or_else(|| self.pieces.last().expect("timeline is never empty"))
    }

    pub fn state_at(&self, t: f64) -> AgentState {
        let p = self.piece_at(t);
        AgentState::new(self.agent, p.position(t), p.velocity(t))
    }

    /// Replaces everything from `t` on with `future`, which must start at `t`.
    pub fn replace_from(&mut self, t: f64, future: Vec<Piece>) -> Result<()> {
        if future.first().is_none_or(|p| p.t0 != t) {
            return Err(Error::Domain("replacement must start at the cut time".into()));
        }
        self.pieces.retain(|p| p.t0 < t);
        if let Some(last) = self.pieces.last_mut() {
            last.t1 = t;
        }
        self.pieces.extend(future);
        Ok(())
    }

    /// Time of the last transfer's end, or `None` if the agent never planned.
    pub fn arrival_time(&self) -> Option<f64> {
        self.pieces
            .iter()
            .rev()
            .find(|p| p.kind == PieceKind::Transfer)
            .map(|p| p.t1)
    }

    /// Goal pursued at time `t` (0 before the first plan).
    pub fn goal_at(&self, t: f64) -> usize {
        self.piece_at(t).goal
    }

    /// Exact `∫|u|²` over `[from, to]`.
    pub fn control_cost(&self, from: f64, to: f64) -> f64 {
        self.pieces
            .iter()
            .filter_map(|p| {
                let lo = p.t0.max(from);
                let hi = p.t1.min(to);
                (hi > lo).then(|| p.control_cost(lo, hi))
            })
            .sum()
    }
}
