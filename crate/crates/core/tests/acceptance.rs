//! Acceptance run: one PASS/FAIL line per criterion.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;

use swarmgoal::energy::{energy_from_alphas, minimize_energy};
use swarmgoal::protocol::bans_monotone;
use swarmgoal::sim::{compare_fixed_t, run_simulation, sweep_h, SimRun};
use swarmgoal::trajectory::{check_safety, plan_from};
use swarmgoal::{
    brute_force_assignment, solve_assignment, AgentState, CostMatrix, GoalTrajectory, Vec2,
};

use common::*;

const T_MIN: f64 = 1e-3;
const T_MAX: f64 = 1e4;
const H_VALUES: [f64; 5] = [0.5, 0.75, 1.0, 1.25, f64::INFINITY];

/// Total-energy reduction of the golden scenario against T = 5 s, pinned
/// after the first run.
const GOLDEN_REDUCTION_PERCENT: f64 = 65.158_089_895_998_66;

/// Golden sweep rows for h = ∞, 1.25, 1.0, 0.75, 0.5:
/// (min separation [cm], E [kJ/kg], t_f [s], bans).
const GOLDEN_SWEEP: [(f64, f64, f64, usize); 5] = [
    (41.914531050138855, 0.0009457091269562895, 4.554680496023606, 0),
    (31.158064716311973, 0.0034221819936563727, 4.686876933317812, 5),
    (12.968849827907386, 0.0029195548071395488, 5.3703345266035845, 4),
    (0.0, 0.34056913729904, 9.97698694296461, 23),
    (0.0, 1.2099634286283578, 11.914595937260454, 36),
];

/// Order-preserving parallel map over scoped threads.
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    let chunk = items.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<U>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    })
}

struct Instance {
    state: AgentState,
    goal: GoalTrajectory,
}

fn instances() -> &'static Vec<Instance> {
    static CELL: OnceLock<Vec<Instance>> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut r = rng(1);
        (0..500)
            .map(|k| Instance {
                state: random_state(&mut r, 1),
                goal: random_goal(&mut r, 1, 2 + k % 3),
            })
            .collect()
    })
}

struct ScenarioRun {
    seed: u64,
    h: f64,
    run: SimRun,
}

fn scenario_runs() -> &'static Vec<ScenarioRun> {
    static CELL: OnceLock<Vec<ScenarioRun>> = OnceLock::new();
    CELL.get_or_init(|| {
        let cases: Vec<(u64, f64)> = (0..20)
            .flat_map(|seed| H_VALUES.map(|h| (seed, h)))
            .collect();
        par_map(&cases, |&(seed, h)| {
            let run = run_simulation(&random_scenario(seed, h))
                .unwrap_or_else(|e| panic!("seed {seed}, h {h}: {e}"));
            ScenarioRun { seed, h, run }
        })
    })
}

fn criterion_1() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for inst in instances() {
        let prof = minimize_energy(&inst.state, &inst.goal, T_MIN, T_MAX).unwrap();
        let e = prof.energy(prof.t_star);
        let grid = grid_min(&inst.state, &inst.goal, T_MIN, T_MAX, 100_000);
        worst = worst.max((e - grid).abs() / (1.0 + e));
    }
    let anchor = GoalTrajectory::new(1, vec![Vec2::new(1.0, 0.0), Vec2::ZERO, Vec2::new(1.0, 0.0)]);
    let prof = minimize_energy(&AgentState::at_rest(1, Vec2::ZERO), &anchor, T_MIN, T_MAX).unwrap();
    let dt = (prof.t_star - 3f64.sqrt()).abs();
    let de = (prof.e_star - 16.0 / 3f64.sqrt()).abs();
    (
        worst <= 1e-6 && dt <= 1e-8 && de <= 1e-6,
        format!("500 instances, worst relative gap {worst:.2e}; anchor |Δt*| {dt:.1e}, |ΔE*| {de:.1e}"),
    )
}

/// Enumerates injective maps; returns the minimum row-order objective.
fn oracle_min(cost: &[Vec<Option<f64>>]) -> Option<f64> {
    fn rec(cost: &[Vec<Option<f64>>], r: usize, used: &mut Vec<bool>, acc: f64, best: &mut Option<f64>) {
        if r == cost.len() {
            if best.is_none_or(|b| acc < b) {
                *best = Some(acc);
            }
            return;
        }
        for (c, cell) in cost[r].iter().enumerate() {
            if let (Some(v), false) = (cell, used[c]) {
                used[c] = true;
                rec(cost, r + 1, used, acc + v, best);
                used[c] = false;
            }
        }
    }
    let mut best = None;
    let cols = cost.first().map_or(0, Vec::len);
    rec(cost, 0, &mut vec![false; cols], 0.0, &mut best);
    best
}

fn criterion_2() -> (bool, String) {
    let mut r = rng(2);
    let mut mismatches = 0;
    let mut done = 0;
    while done < 1000 {
        let n = r.gen_range(1..=8);
        let m = r.gen_range(n..=10);
        let cost: Vec<Vec<Option<f64>>> = (0..n)
            .map(|_| {
                (0..m)
                    .map(|_| (!r.gen_bool(0.25)).then(|| r.gen_range(0.0..10.0)))
                    .collect()
            })
            .collect();
        let Some(best) = oracle_min(&cost) else {
            continue;
        };
        let c = CostMatrix::new((1..=n).collect(), (1..=m).collect(), cost).unwrap();
        let solved = solve_assignment(&c).unwrap();
        let brute = brute_force_assignment(&c).unwrap();
        if solved.objective != best || brute.objective != best || solved.pairs != brute.pairs {
            mismatches += 1;
        }
        done += 1;
    }
    (
        mismatches == 0,
        format!("1000 feasible matrices (N ≤ 8, M ≤ 10), {mismatches} objective mismatches"),
    )
}

fn criterion_3() -> (bool, String) {
    let mut bad = Vec::new();
    let mut max_bans = 0;
    for sr in scenario_runs() {
        let run = &sr.run;
        let n = run.config.agents.len();
        let m = run.config.goals.len();
        let prescribed = run.protocol.prescribed();
        let distinct: BTreeSet<usize> = prescribed.values().copied().collect();
        let tracked = run
            .timelines
            .iter()
            .all(|tl| Some(&tl.pieces().last().unwrap().goal) == prescribed.get(&tl.agent));
        max_bans = max_bans.max(run.metrics.total_bans);
        let ok = run.metrics.unique_arrival
            && distinct.len() == n
            && tracked
            && run.metrics.total_bans <= n * (m - 1)
            && bans_monotone(&run.log);
        if !ok {
            bad.push(format!("seed {} h {}", sr.seed, sr.h));
        }
    }
    (
        bad.is_empty(),
        format!("100 runs, {} failing {:?}, max bans {max_bans}", bad.len(), bad),
    )
}

fn criterion_4() -> (bool, String) {
    let cmps = par_map(scenario_runs(), |sr| compare_fixed_t(&sr.run.config, 5.0).unwrap());
    let not_dominated = cmps.iter().filter(|c| !c.all_pairs_dominated).count();
    let reductions: Vec<f64> = cmps.iter().map(|c| c.reduction_percent).collect();
    let golden = compare_fixed_t(&golden(), 5.0).unwrap();
    let pinned = (golden.reduction_percent - GOLDEN_REDUCTION_PERCENT).abs() <= 1e-6;
    let lo = reductions.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = reductions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (
        not_dominated == 0 && golden.reduction_percent > 0.0 && pinned && golden.all_pairs_dominated,
        format!(
            "100 scenarios, {not_dominated} with E*(t*) > E(5); reductions {lo:.1}%..{hi:.1}%; golden {:.4}% (pinned {GOLDEN_REDUCTION_PERCENT:.4}%)",
            golden.reduction_percent
        ),
    )
}

fn criterion_5() -> (bool, String) {
    let mut r = rng(5);
    let (mut worst_bc, mut worst_q): (f64, f64) = (0.0, 0.0);
    for k in 0..500 {
        let state = random_state(&mut r, 1);
        let goal = random_goal(&mut r, 1, 2 + k % 3);
        let t0 = r.gen_range(0.0..3.0);
        let dur = r.gen_range(0.1..5.0);
        let seg = plan_from(t0, &state, &goal, dur).unwrap();
        let tf = t0 + dur;
        for d in [
            seg.position(t0) - state.p,
            seg.velocity(t0) - state.v,
            seg.position(tf) - goal.position(tf),
            seg.velocity(tf) - goal.velocity(tf),
        ] {
            worst_bc = worst_bc.max(d.norm());
        }
        let q = simpson(&|t| seg.control(t).norm_sq(), t0, tf, 1e-12 * (1.0 + seg.energy));
        worst_q = worst_q.max((q - seg.energy).abs() / seg.energy.max(1e-300));
    }
    (
        worst_bc <= 1e-9 && worst_q <= 1e-8,
        format!("500 plans, worst boundary residual {worst_bc:.1e}, worst quadrature gap {worst_q:.1e}"),
    )
}

fn criterion_6() -> (bool, String) {
    let mut checked = 0;
    let mut failed = 0;
    for inst in instances() {
        let prof = minimize_energy(&inst.state, &inst.goal, T_MIN, T_MAX).unwrap();
        if !prof.is_nondegenerate() {
            continue;
        }
        checked += 1;
        let lo = energy_from_alphas(&prof.alphas, T_MIN / 10.0);
        let hi = energy_from_alphas(&prof.alphas, T_MAX * 10.0);
        if !(lo > prof.e_star && hi > prof.e_star) {
            failed += 1;
        }
    }
    (
        failed == 0 && checked > 0,
        format!("{checked} non-degenerate instances, {failed} without blow-up at both ends"),
    )
}

fn criterion_7() -> (bool, String) {
    let rows = sweep_h(&golden(), &[f64::INFINITY, 1.25, 1.0, 0.75, 0.5]).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + b.abs());
    let mut mismatches = Vec::new();
    for (row, want) in rows.iter().zip(GOLDEN_SWEEP) {
        let ok = row.error.is_none()
            && close(row.min_separation_cm.unwrap(), want.0)
            && close(row.energy_kj_per_kg.unwrap(), want.1)
            && close(row.t_f.unwrap(), want.2)
            && row.total_bans == Some(want.3);
        if !ok {
            mismatches.push(format!("{row:?}"));
        }
    }
    let inf_bans = rows[0].total_bans;
    (
        rows.len() == 5 && inf_bans == Some(0) && mismatches.is_empty(),
        format!("5 rows, h=∞ bans {inf_bans:?}, {} rows off the pinned values {mismatches:?}", mismatches.len()),
    )
}

fn criterion_8() -> (bool, String) {
    let mut clean = 0;
    let mut flagged = 0;
    let mut silent = Vec::new();
    let golden_runs: Vec<SimRun> = H_VALUES
        .iter()
        .map(|&h| {
            let mut cfg = golden();
            cfg.params.h = h;
            run_simulation(&cfg).unwrap()
        })
        .collect();
    let runs = scenario_runs().iter().map(|s| &s.run).chain(&golden_runs);
    for run in runs {
        if !run.metrics.converged {
            continue;
        }
        let radius = run.config.params.radius;
        let mut violated = false;
        for (k, a) in run.timelines.iter().enumerate() {
            for b in &run.timelines[k + 1..] {
                let rep = check_safety(a.pieces(), b.pieces(), b.agent, radius, 0.0, run.horizon).unwrap();
                violated |= !rep.is_empty();
            }
        }
        match (violated, run.failures.is_empty()) {
            (false, _) => clean += 1,
            (true, false) => flagged += 1,
            (true, true) => silent.push(run.config.params.seed),
        }
    }
    (
        silent.is_empty(),
        format!("{clean} runs with separation ≥ 2R, {flagged} flagged by repair-failure records, {} silent", silent.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> (bool, String)); 8] = [
        ("minimizer matches log-grid oracle", criterion_1),
        ("assignment equals enumeration", criterion_2),
        ("protocol converges", criterion_3),
        ("optimal arrival dominates T = 5 s", criterion_4),
        ("trajectory boundary and energy fidelity", criterion_5),
        ("energy blows up at both ends", criterion_6),
        ("sensing-distance sweep", criterion_7),
        ("separation audited", criterion_8),
    ];
    let mut all = true;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            });
        all &= ok;
        println!(
            "criterion {} {}: {} ({detail}; {:.1}s)",
            k + 1,
            if ok { "PASS" } else { "FAIL" },
            name,
            start.elapsed().as_secs_f64()
        );
    }
    if !all {
        std::process::exit(1);
    }
}
