//! Agents, goals, scenario files and the geometric queries built on them.
//!
//! Units are SI throughout: positions in meters, velocities in m/s and
//! accelerations in m/s². Energies are per unit mass.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Vec2 { x, y }
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Position and velocity of a double-integrator agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: usize,
    pub p: Vec2,
    pub v: Vec2,
}

impl AgentState {
    pub fn new(id: usize, p: Vec2, v: Vec2) -> Self {
        AgentState { id, p, v }
    }

    pub fn at_rest(id: usize, p: Vec2) -> Self {
        AgentState { id, p, v: Vec2::ZERO }
    }
}

/// A goal moving along `p*(t) = sum_l c_l t^l`.
///
/// The constructor accepts any non-empty coefficient list; the degree >= 2
/// requirement is enforced when a scenario is validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalTrajectory {
    pub id: usize,
    pub coeffs: Vec<Vec2>,
}

impl GoalTrajectory {
    pub fn new(id: usize, coeffs: Vec<Vec2>) -> Self {
        GoalTrajectory { id, coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn position(&self, t: f64) -> Vec2 {
        poly::eval_vec(&self.coeffs, t)
    }

    pub fn velocity(&self, t: f64) -> Vec2 {
        poly::eval_vec(&poly::derivative_vec(&self.coeffs), t)
    }

    pub fn acceleration(&self, t: f64) -> Vec2 {
        poly::eval_vec(&poly::derivative_vec(&poly::derivative_vec(&self.coeffs)), t)
    }

    /// The same goal expressed in a frame whose time origin sits at absolute
    /// time `t0`.
    pub fn rebased(&self, t0: f64) -> GoalTrajectory {
        GoalTrajectory {
            id: self.id,
            coeffs: poly::shift_vec(&self.coeffs, t0),
        }
    }
}

/// Position and velocity of a goal at time `t`.
pub fn eval_goal(goal: &GoalTrajectory, t: f64) -> (Vec2, Vec2) {
    (goal.position(t), goal.velocity(t))
}

pub fn distance(a: &AgentState, b: &AgentState) -> f64 {
    (a.p - b.p).norm()
}

/// Agents within sensing range `h` of agent `i`, including `i` itself.
pub fn neighborhood(agents: &[AgentState], i: usize, h: f64) -> Result<BTreeSet<usize>> {
    let me = agents
        .iter()
        .find(|a| a.id == i)
        .ok_or(Error::UnknownAgent(i))?;
    Ok(agents
        .iter()
        .filter(|a| distance(me, a) <= h)
        .map(|a| a.id)
        .collect())
}

/// Every agent's neighborhood at once.
pub fn neighborhoods(agents: &[AgentState], h: f64) -> BTreeMap<usize, BTreeSet<usize>> {
    let mut out: BTreeMap<usize, BTreeSet<usize>> =
        agents.iter().map(|a| (a.id, BTreeSet::from([a.id]))).collect();
    for (n, a) in agents.iter().enumerate() {
        for b in &agents[n + 1..] {
            if distance(a, b) <= h {
                out.get_mut(&a.id).unwrap().insert(b.id);
                out.get_mut(&b.id).unwrap().insert(a.id);
            }
        }
    }
    out
}

/// Model parameters shared by every agent in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Sensing and communication horizon. Infinite means global information.
    #[serde(with = "horizon_serde")]
    pub h: f64,
    /// Safety disk radius; pairwise separation must stay at or above `2R`.
    #[serde(rename = "R")]
    pub radius: f64,
    pub v_max: f64,
    pub u_max: f64,
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_dt_scan")]
    pub dt_scan: f64,
    #[serde(default)]
    pub seed: u64,
    /// Extra simulated time after the last arrival.
    #[serde(default = "default_tail")]
    pub tail: f64,
}

fn default_t_min() -> f64 {
    1e-3
}
fn default_t_max() -> f64 {
    1e4
}
fn default_dt_scan() -> f64 {
    0.01
}
fn default_tail() -> f64 {
    0.5
}

/// Serializes an infinite horizon as the string `"inf"`.
pub mod horizon_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(h: &f64, s: S) -> Result<S::Ok, S::Error> {
        if h.is_infinite() && *h > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*h)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Text(s) => super::parse_horizon(&s).map_err(de::Error::custom),
        }
    }
}

/// Parses a horizon literal: a positive number, `inf` or `∞`.
pub fn parse_horizon(s: &str) -> std::result::Result<f64, String> {
    match s.trim() {
        "inf" | "Inf" | "infinity" | "∞" => Ok(f64::INFINITY),
        other => other
            .parse::<f64>()
            .map_err(|_| format!("invalid horizon {other:?}")),
    }
}

/// Box from which initial agent positions are drawn when a scenario asks for
/// random agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomAgents {
    pub count: usize,
    pub min: Vec2,
    pub max: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScenarioFile {
    #[serde(default)]
    agents: Vec<AgentState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    random_agents: Option<RandomAgents>,
    goals: Vec<GoalTrajectory>,
    params: Params,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub agents: Vec<AgentState>,
    pub goals: Vec<GoalTrajectory>,
    pub params: Params,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        let p = &self.params;
        let n = self.agents.len();
        let m = self.goals.len();
        if n == 0 {
            return fail("scenario has no agents".into());
        }
        if m < n {
            return fail(format!("M ≥ N violated (M={m}, N={n})"));
        }
        let mut ids = BTreeSet::new();
        for a in &self.agents {
            if !ids.insert(a.id) {
                return fail(format!("duplicate agent id {}", a.id));
            }
            if !a.p.is_finite() || !a.v.is_finite() {
                return fail(format!("agent {} has a non-finite state", a.id));
            }
            if a.v.norm() > p.v_max {
                return fail(format!("agent {} initial speed exceeds v_max", a.id));
            }
        }
        let mut gids = BTreeSet::new();
        for g in &self.goals {
            if !gids.insert(g.id) {
                return fail(format!("duplicate goal id {}", g.id));
            }
            if g.coeffs.len() < 3 {
                return fail(format!("goal {}: goal degree η < 2", g.id));
            }
            if g.coeffs.iter().any(|c| !c.is_finite()) {
                return fail(format!("goal {} has a non-finite coefficient", g.id));
            }
        }
        if !(p.radius > 0.0 && p.radius.is_finite()) {
            return fail("R must be positive and finite".into());
        }
        if !(p.h >= 4.0 * p.radius) {
            return fail(format!("h ≥ 4R violated (h={}, R={})", p.h, p.radius));
        }
        if !(p.v_max > 0.0 && p.u_max > 0.0) {
            return fail("v_max and u_max must be positive".into());
        }
        if !(p.t_min > 0.0) {
            return fail("t_min must be positive".into());
        }
        if !(p.t_max > p.t_min && p.t_max.is_finite()) {
            return fail("t_max must be finite and exceed t_min".into());
        }
        if !(p.dt_scan > 0.0 && p.dt_scan.is_finite()) {
            return fail("dt_scan must be positive".into());
        }
        if !(p.tail >= 0.0 && p.tail.is_finite()) {
            return fail("tail must be non-negative".into());
        }
        for (k, a) in self.agents.iter().enumerate() {
            for b in &self.agents[k + 1..] {
                if distance(a, b) < 2.0 * p.radius {
                    return fail(format!(
                        "agents {} and {} start closer than 2R",
                        a.id, b.id
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn agent(&self, id: usize) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn goal(&self, id: usize) -> Option<&GoalTrajectory> {
        self.goals.iter().find(|g| g.id == id)
    }

    /// Serializes the scenario with its agents materialized.
    pub fn to_json(&self) -> String {
        let file = ScenarioFile {
            agents: self.agents.clone(),
            random_agents: None,
            goals: self.goals.clone(),
            params: self.params.clone(),
        };
        serde_json::to_string_pretty(&file).expect("scenario serializes")
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(source: &str) -> Result<ScenarioConfig> {
    let file: ScenarioFile =
        serde_json::from_str(source).map_err(|e| Error::Parse(e.to_string()))?;
    let mut agents = file.agents;
    if let Some(draw) = &file.random_agents {
        let first_id = agents.iter().map(|a| a.id).max().map_or(1, |m| m + 1);
        let mut generated =
            random_positions(draw, file.params.radius, file.params.seed, &agents)?;
        for (k, p) in generated.drain(..).enumerate() {
            agents.push(AgentState::at_rest(first_id + k, p));
        }
    }
    let cfg = ScenarioConfig {
        agents,
        goals: file.goals,
        params: file.params,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scenario_file(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        context: format!("reading {}", path.display()),
        source,
    })?;
    load_scenario(&text)
}

const MAX_REJECTIONS: usize = 100_000;

/// Uniform positions in the box, rejecting draws closer than `2R` to any
/// earlier agent.
pub fn random_positions(
    draw: &RandomAgents,
    radius: f64,
    seed: u64,
    existing: &[AgentState],
) -> Result<Vec<Vec2>> {
    if !(draw.max.x > draw.min.x && draw.max.y > draw.min.y) {
        return Err(Error::Validation("random_agents box is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placed: Vec<Vec2> = existing.iter().map(|a| a.p).collect();
    let mut out = Vec::with_capacity(draw.count);
    let mut rejections = 0;
    while out.len() < draw.count {
        let p = Vec2::new(
            rng.gen_range(draw.min.x..draw.max.x),
            rng.gen_range(draw.min.y..draw.max.y),
        );
        if placed.iter().all(|q| (p - *q).norm() >= 2.0 * radius) {
            placed.push(p);
            out.push(p);
        } else {
            rejections += 1;
            if rejections > MAX_REJECTIONS {
                return Err(Error::Validation(
                    "could not place random agents with 2R separation".into(),
                ));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(id: usize, x: f64, y: f64) -> AgentState {
        AgentState::at_rest(id, Vec2::new(x, y))
    }

    fn formation_goal(id: usize, offset: Vec2) -> GoalTrajectory {
        // v*(t) = (0.05t^3 - 0.3t^2 + 0.45t, 0.02t + 0.05)
        GoalTrajectory::new(
            id,
            vec![
                offset,
                Vec2::new(0.0, 0.05),
                Vec2::new(0.225, 0.01),
                Vec2::new(-0.1, 0.0),
                Vec2::new(0.0125, 0.0),
            ],
        )
    }

    #[test]
    fn eval_goal_at_origin_and_later() {
        let g = GoalTrajectory::new(1, vec![Vec2::new(1.0, 0.0), Vec2::ZERO, Vec2::new(1.0, 0.0)]);
        assert_eq!(eval_goal(&g, 0.0), (Vec2::new(1.0, 0.0), Vec2::ZERO));
        assert_eq!(eval_goal(&g, 2.0), (Vec2::new(5.0, 0.0), Vec2::new(4.0, 0.0)));
    }

    #[test]
    fn formation_velocity_polynomial() {
        let (_, v) = eval_goal(&formation_goal(1, Vec2::ZERO), 1.0);
        assert!((v.x - 0.2).abs() < 1e-12);
        assert!((v.y - 0.07).abs() < 1e-12);
    }

    #[test]
    fn distance_cases() {
        assert_eq!(distance(&at(1, 0.0, 0.0), &at(2, 0.0, 0.0)), 0.0);
        assert_eq!(distance(&at(1, 0.0, 0.0), &at(2, 3.0, 4.0)), 5.0);
    }

    #[test]
    fn neighborhood_threshold() {
        let near = [at(1, 0.0, 0.0), at(2, 0.4, 0.0)];
        assert_eq!(neighborhood(&near, 1, 0.5).unwrap(), BTreeSet::from([1, 2]));
        assert_eq!(neighborhood(&near, 2, 0.5).unwrap(), BTreeSet::from([1, 2]));
        let far = [at(1, 0.0, 0.0), at(2, 0.6, 0.0)];
        assert_eq!(neighborhood(&far, 1, 0.5).unwrap(), BTreeSet::from([1]));
        assert_eq!(neighborhood(&far, 2, 0.5).unwrap(), BTreeSet::from([2]));
        let spread: Vec<_> = (1..=5).map(|i| at(i, 100.0 * i as f64, 0.0)).collect();
        for i in 1..=5 {
            assert_eq!(neighborhood(&spread, i, f64::INFINITY).unwrap().len(), 5);
        }
    }

    #[test]
    fn neighborhood_unknown_agent() {
        assert!(matches!(
            neighborhood(&[at(1, 0.0, 0.0)], 7, 1.0),
            Err(Error::UnknownAgent(7))
        ));
    }

    #[test]
    fn rebased_goal_matches_absolute_time() {
        let g = formation_goal(3, Vec2::new(0.5, -1.0));
        let r = g.rebased(1.7);
        for &s in &[0.0, 0.3, 2.0] {
            assert!((r.position(s) - g.position(s + 1.7)).norm() < 1e-12);
            assert!((r.velocity(s) - g.velocity(s + 1.7)).norm() < 1e-12);
        }
    }

    fn scenario_json(n_agents: usize, n_goals: usize, degree: usize) -> String {
        let agents: Vec<String> = (1..=n_agents)
            .map(|i| format!(r#"{{"id":{i},"p":[{},0.0],"v":[0.0,0.0]}}"#, i as f64))
            .collect();
        let coeffs: Vec<String> = (0..=degree).map(|_| "[0.1,0.2]".to_string()).collect();
        let goals: Vec<String> = (1..=n_goals)
            .map(|k| format!(r#"{{"id":{k},"coeffs":[{}]}}"#, coeffs.join(",")))
            .collect();
        format!(
            r#"{{"agents":[{}],"goals":[{}],"params":{{"h":"inf","R":0.1,"v_max":2.0,"u_max":3.0,"t_min":0.001,"t_max":10000.0,"dt_scan":0.01,"seed":7}}}}"#,
            agents.join(","),
            goals.join(",")
        )
    }

    #[test]
    fn load_valid_ten_by_ten() {
        let cfg = load_scenario(&scenario_json(10, 10, 4)).unwrap();
        assert_eq!(cfg.agents.len(), 10);
        assert_eq!(cfg.goals.len(), 10);
        assert!(cfg.params.h.is_infinite());
    }

    #[test]
    fn load_rejects_low_degree_goal() {
        let err = load_scenario(&scenario_json(2, 2, 1)).unwrap_err();
        assert!(err.to_string().contains("goal degree η < 2"), "{err}");
    }

    #[test]
    fn load_rejects_too_few_goals() {
        let err = load_scenario(&scenario_json(10, 9, 2)).unwrap_err();
        assert!(err.to_string().contains("M ≥ N violated"), "{err}");
    }

    #[test]
    fn load_rejects_overlap_and_small_horizon() {
        let text = scenario_json(2, 2, 2).replace(r#""p":[2,0.0]"#, r#""p":[1.05,0.0]"#);
        let err = load_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("closer than 2R"), "{err}");
        let text = scenario_json(2, 2, 2).replace(r#""h":"inf""#, r#""h":0.3"#);
        let err = load_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("h ≥ 4R"), "{err}");
    }

    #[test]
    fn load_reports_parse_errors() {
        assert!(matches!(load_scenario("{not json"), Err(Error::Parse(_))));
    }

    #[test]
    fn random_agents_are_seeded_and_separated() {
        let text = r#"{"random_agents":{"count":10,"min":[-1,-1],"max":[1,1]},
            "goals":[{"id":1,"coeffs":[[0,0],[0,0],[1,0]]},{"id":2,"coeffs":[[0,0],[0,0],[1,0]]},
                     {"id":3,"coeffs":[[0,0],[0,0],[1,0]]},{"id":4,"coeffs":[[0,0],[0,0],[1,0]]},
                     {"id":5,"coeffs":[[0,0],[0,0],[1,0]]},{"id":6,"coeffs":[[0,0],[0,0],[1,0]]},
                     {"id":7,"coeffs":[[0,0],[0,0],[1,0]]},{"id":8,"coeffs":[[0,0],[0,0],[1,0]]},
                     {"id":9,"coeffs":[[0,0],[0,0],[1,0]]},{"id":10,"coeffs":[[0,0],[0,0],[1,0]]}],
            "params":{"h":1.0,"R":0.1,"v_max":1,"u_max":1,"seed":42}}"#;
        let a = load_scenario(text).unwrap();
        let b = load_scenario(text).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.agents.len(), 10);
        assert_eq!(a.agents[0].id, 1);
        let c = load_scenario(&text.replace("\"seed\":42", "\"seed\":43")).unwrap();
        assert_ne!(a.agents, c.agents);
    }
}
