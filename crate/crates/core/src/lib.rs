//! Decentralized, energy-optimal goal assignment for double-integrator
//! swarms converging on a moving polynomial formation.
//!
//! ```
//! use swarmgoal::{minimize_energy, AgentState, GoalTrajectory, Vec2};
//!
//! let agent = AgentState::at_rest(1, Vec2::ZERO);
//! let goal = GoalTrajectory::new(1, vec![Vec2::new(1.0, 0.0), Vec2::ZERO, Vec2::new(1.0, 0.0)]);
//! let prof = minimize_energy(&agent, &goal, 1e-3, 1e4).unwrap();
//! assert!((prof.t_star - 3f64.sqrt()).abs() < 1e-8);
//! ```

pub mod assignment;
pub mod energy;
pub mod error;
pub mod poly;
pub mod protocol;
pub mod sim;
pub mod trajectory;
pub mod worldmodel;

pub use assignment::{
    brute_force_assignment, build_cost_matrix, satisfies_constraints, solve_assignment, Assignment,
    BanSets, CostMatrix,
};
pub use energy::{energy_at, energy_poly, minimize_energy, reported_energy, EnergyProfile};
pub use error::{Error, Result};
pub use protocol::{EventContext, LogKind, LogRecord, ProtocolState};
pub use sim::{compare_fixed_t, emit_outputs, run_simulation, sweep_h, RunMetrics, SimRun};
pub use trajectory::{
    check_limits, check_safety, plan_unconstrained, repair_trajectory, Timeline, TrajectorySegment,
};
pub use worldmodel::{
    eval_goal, load_scenario, load_scenario_file, neighborhood, AgentState, GoalTrajectory, Params,
    ScenarioConfig, Vec2,
};

/// Every chapter of the guide compiles and runs as a doc-test.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    pub struct Intro;
    #[doc = include_str!("../../../book/src/scenarios.md")]
    pub struct Scenarios;
    #[doc = include_str!("../../../book/src/energy.md")]
    pub struct Energy;
    #[doc = include_str!("../../../book/src/assignment.md")]
    pub struct Assignment;
    #[doc = include_str!("../../../book/src/protocol.md")]
    pub struct Protocol;
    #[doc = include_str!("../../../book/src/trajectory.md")]
    pub struct Trajectory;
    #[doc = include_str!("../../../book/src/simulation.md")]
    pub struct Simulation;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
