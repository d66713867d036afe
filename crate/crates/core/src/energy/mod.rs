//! Unconstrained transfer energy and its minimization over arrival time.
//!
//! An agent leaving `(p0, v0)` at local time zero and meeting goal `k` at
//! time `T` with matched position and velocity follows the cubic whose
//! control is `u(t) = a t + b`. Its cost
//!
//! ```text
//! E(T) = |a|² T³/3 + (a·b) T² + |b|² T
//! ```
//!
//! is the integral of `|u|²` (no factor ½; see [`reported_energy`]).
//! Substituting a polynomial goal of degree η turns `T³ a` and `T² b` into
//! polynomials of degree η in `T`, so `E(T) = P(T) / T³` with `P` of degree
//! 2η. Stationary points of `E` are the roots of `T P'(T) - 3 P(T)`.
//!
//! All functions work in the planning frame: time zero is "now". Goals given
//! in absolute time must first be moved with [`GoalTrajectory::rebased`].

mod roots;

pub use roots::positive_real_roots;

use crate::error::{Error, Result};
use crate::poly;
use crate::worldmodel::{AgentState, GoalTrajectory, Vec2};

/// Coefficients of the optimal control `u(t) = a t + b` over `[0, arrival]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCoefficients {
    pub a: Vec2,
    pub b: Vec2,
    pub arrival: f64,
}

impl BoundaryCoefficients {
    pub fn energy(&self) -> f64 {
        let t = self.arrival;
        self.a.norm_sq() * t.powi(3) / 3.0 + self.a.dot(self.b) * t * t + self.b.norm_sq() * t
    }
}

pub fn boundary_coefficients(
    state: &AgentState,
    goal: &GoalTrajectory,
    arrival: f64,
) -> Result<BoundaryCoefficients> {
    if !(arrival > 0.0) {
        return Err(Error::Domain(format!("arrival time must be positive, got {arrival}")));
    }
    let t = arrival;
    let (gp, gv) = (goal.position(t), goal.velocity(t));
    let dp = state.p - gp;
    let a = dp * (12.0 / t.powi(3)) + (state.v + gv) * (6.0 / (t * t));
    let b = dp * (-6.0 / (t * t)) - (state.v * 2.0 + gv) * (2.0 / t);
    Ok(BoundaryCoefficients { a, b, arrival })
}

/// `∫₀ᵀ |u|²` of the unconstrained transfer arriving at `arrival`.
pub fn energy_at(state: &AgentState, goal: &GoalTrajectory, arrival: f64) -> Result<f64> {
    Ok(boundary_coefficients(state, goal, arrival)?.energy())
}

/// The ½∫|u|² convention used for reported energies.
pub fn reported_energy(cost: f64) -> f64 {
    0.5 * cost
}

/// Coefficients `α₀ … α_{2η}` with `E(T) = Σ αₗ T^(l-3)`.
pub fn energy_poly(state: &AgentState, goal: &GoalTrajectory) -> Vec<f64> {
    let n = goal.coeffs.len().max(2);
    let mut ax = vec![0.0; n];
    let mut ay = vec![0.0; n];
    let mut bx = vec![0.0; n];
    let mut by = vec![0.0; n];
    for l in 0..n {
        let c = goal.coeffs.get(l).copied().unwrap_or(Vec2::ZERO);
        let lf = l as f64;
        // T³a = 12(p0 - p*(T)) + 6T(v0 + v*(T))
        let mut a = c * (6.0 * lf - 12.0);
        // T²b = -6(p0 - p*(T)) - 2T(2v0 + v*(T))
        let mut b = c * (6.0 - 2.0 * lf);
        if l == 0 {
            a += state.p * 12.0;
            b += state.p * -6.0;
        }
        if l == 1 {
            a += state.v * 6.0;
            b += state.v * -4.0;
        }
        ax[l] = a.x;
        ay[l] = a.y;
        bx[l] = b.x;
        by[l] = b.y;
    }
    let aa = poly::add(&poly::mul(&ax, &ax), &poly::mul(&ay, &ay));
    let ab = poly::add(&poly::mul(&ax, &bx), &poly::mul(&ay, &by));
    let bb = poly::add(&poly::mul(&bx, &bx), &poly::mul(&by, &by));
    aa.iter()
        .zip(&ab)
        .zip(&bb)
        .map(|((&aa, &ab), &bb)| aa / 3.0 + ab + bb)
        .collect()
}

/// `Σ αₗ t^(l-3)`.
pub fn energy_from_alphas(alphas: &[f64], t: f64) -> f64 {
    poly::eval(alphas, t) / (t * t * t)
}

/// Energy profile of one agent-goal pair and its global minimizer on
/// `[t_min, t_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyProfile {
    pub alphas: Vec<f64>,
    pub t_star: f64,
    pub e_star: f64,
}

impl EnergyProfile {
    pub fn energy(&self, t: f64) -> f64 {
        energy_from_alphas(&self.alphas, t)
    }

    /// Whether the end-behaviour coefficients are strictly positive, i.e.
    /// the energy diverges at both ends of `(0, ∞)`.
    pub fn is_nondegenerate(&self) -> bool {
        self.alphas.len() >= 5
            && self.alphas.first().is_some_and(|&a| a > 0.0)
            && self.alphas.last().is_some_and(|&a| a > 0.0)
    }
}

pub fn minimize_energy(
    state: &AgentState,
    goal: &GoalTrajectory,
    t_min: f64,
    t_max: f64,
) -> Result<EnergyProfile> {
    minimize_profile(energy_poly(state, goal), t_min, t_max)
}

/// Global minimizer of `Σ αₗ t^(l-3)` over `[t_min, t_max]`: every critical
/// point in the interval and both endpoints are evaluated.
pub fn minimize_profile(alphas: Vec<f64>, t_min: f64, t_max: f64) -> Result<EnergyProfile> {
    if !(t_min > 0.0 && t_max > t_min && t_max.is_finite()) {
        return Err(Error::Domain(format!(
            "arrival bounds must satisfy 0 < t_min < t_max, got [{t_min}, {t_max}]"
        )));
    }
    if alphas.iter().any(|a| !a.is_finite()) {
        return Err(Error::Numeric("non-finite energy coefficient".into()));
    }
    // t P'(t) - 3 P(t)
    let critical: Vec<f64> = alphas
        .iter()
        .enumerate()
        .map(|(l, &a)| (l as f64 - 3.0) * a)
        .collect();
    let mut candidates = vec![t_min];
    if !poly::trim(&critical).is_empty() {
        candidates.extend(positive_real_roots(&critical, t_min, t_max)?);
    }
    candidates.push(t_max);

    let mut best = (t_min, f64::INFINITY);
    for &t in &candidates {
        let e = energy_from_alphas(&alphas, t);
        if !e.is_finite() {
            return Err(Error::Numeric(format!("energy not finite at t={t}")));
        }
        if e < best.1 {
            best = (t, e);
        }
    }
    Ok(EnergyProfile {
        alphas,
        t_star: best.0,
        e_star: best.1.max(0.0),
    })
}
