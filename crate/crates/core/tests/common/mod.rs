#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swarmgoal::{energy_at, load_scenario, AgentState, GoalTrajectory, ScenarioConfig, Vec2};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn vec_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vec2 {
    Vec2::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi))
}

pub fn random_state(rng: &mut ChaCha8Rng, id: usize) -> AgentState {
    AgentState::new(id, vec_in(rng, -2.0, 2.0), vec_in(rng, -1.0, 1.0))
}

/// Goal of exactly the given degree; higher coefficients shrink like 1/l!.
pub fn random_goal(rng: &mut ChaCha8Rng, id: usize, degree: usize) -> GoalTrajectory {
    let mut fact = 1.0;
    let mut coeffs = Vec::with_capacity(degree + 1);
    for l in 0..=degree {
        if l > 0 {
            fact *= l as f64;
        }
        let scale = if l == 0 { 2.0 } else { 1.0 / fact };
        let mut c = vec_in(rng, -scale, scale);
        if l == degree && c.x.abs() < 0.1 * scale {
            c.x = 0.1 * scale;
        }
        coeffs.push(c);
    }
    GoalTrajectory::new(id, coeffs)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(move |k| {
        if k == 0 {
            lo
        } else if k == n - 1 {
            hi
        } else {
            10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64)
        }
    })
}

/// Minimum of `E(T)` over a log grid, evaluated from the boundary
/// coefficients directly.
pub fn grid_min(state: &AgentState, goal: &GoalTrajectory, lo: f64, hi: f64, n: usize) -> f64 {
    log_grid(lo, hi, n)
        .map(|t| energy_at(state, goal, t).unwrap())
        .fold(f64::INFINITY, f64::min)
}

/// Adaptive Simpson quadrature.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Position coefficients of the moving formation used by the example
/// scenarios, shifted by `offset`.
pub fn formation_goal(id: usize, offset: (f64, f64)) -> String {
    format!(
        r#"{{"id":{id},"coeffs":[[{},{}],[0.0,0.05],[0.225,0.01],[-0.1,0.0],[0.0125,0.0]]}}"#,
        offset.0, offset.1
    )
}

/// Ten random agents in a 4 m box and ten goals on a 2×5 grid.
pub fn random_scenario(seed: u64, h: f64) -> ScenarioConfig {
    let goals: Vec<String> = [0.3, -0.3]
        .iter()
        .flat_map(|&y| [-1.2, -0.6, 0.0, 0.6, 1.2].map(move |x| (x, y)))
        .enumerate()
        .map(|(k, off)| formation_goal(k + 1, off))
        .collect();
    let h = if h.is_infinite() { "\"inf\"".to_string() } else { h.to_string() };
    let text = format!(
        r#"{{"random_agents":{{"count":10,"min":[-2,-2],"max":[2,2]}},
            "goals":[{}],
            "params":{{"h":{h},"R":0.1,"v_max":3.0,"u_max":5.0,"seed":{seed}}}}}"#,
        goals.join(",")
    );
    load_scenario(&text).unwrap()
}

pub fn golden() -> ScenarioConfig {
    swarmgoal::load_scenario_file(std::path::Path::new(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../scenarios/golden.json"
    )))
    .unwrap()
}
