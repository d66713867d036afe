use serde::{Deserialize, Serialize};

use crate::energy::{energy_at, minimize_energy, reported_energy};
use crate::error::{Error, Result};
use crate::worldmodel::{horizon_serde, ScenarioConfig};

use super::engine::{run_simulation_with, RuleChoice, SimOptions, SimRun};

/// Relative slack allowed when checking `E*(t*) ≤ E(T)` per pair.
pub const DOMINANCE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub agent: usize,
    pub goal: usize,
    pub t_star: f64,
    pub e_star: f64,
    pub e_fixed: f64,
}

impl PairComparison {
    pub fn dominated(&self) -> bool {
        self.e_star <= self.e_fixed * (1.0 + DOMINANCE_SLACK)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub total_energy_kj_per_kg: f64,
    pub total_arrival_time_s: f64,
    pub converged: bool,
    pub repair_failures: usize,
}

impl From<&SimRun> for RunSummary {
    fn from(run: &SimRun) -> Self {
        RunSummary {
            total_energy_kj_per_kg: run.metrics.total_energy_kj_per_kg,
            total_arrival_time_s: run.metrics.total_arrival_time_s,
            converged: run.metrics.converged,
            repair_failures: run.metrics.repair_failures,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub t_fixed: f64,
    /// Every agent-goal pair at the initial states.
    pub pairs: Vec<PairComparison>,
    pub all_pairs_dominated: bool,
    pub optimized: RunSummary,
    pub fixed: RunSummary,
    /// `100·(E_fixed − E_opt)/E_fixed`.
    pub reduction_percent: f64,
}

impl Comparison {
    pub fn to_table(&self) -> String {
        let mut s = String::from("method,energy_kj_per_kg,arrival_time_s\n");
        s += &format!(
            "optimized,{},{}\n",
            self.optimized.total_energy_kj_per_kg, self.optimized.total_arrival_time_s
        );
        s += &format!(
            "fixed_T={},{},{}\n",
            self.t_fixed, self.fixed.total_energy_kj_per_kg, self.fixed.total_arrival_time_s
        );
        s
    }
}

/// Runs the scenario with optimal arrival times and with every transfer
/// forced to last `t_fixed`.
pub fn compare_fixed_t(cfg: &ScenarioConfig, t_fixed: f64) -> Result<Comparison> {
    compare_fixed_t_with(cfg, t_fixed, &SimOptions::default())
}

pub fn compare_fixed_t_with(cfg: &ScenarioConfig, t_fixed: f64, opts: &SimOptions) -> Result<Comparison> {
    if !(t_fixed > 0.0 && t_fixed.is_finite()) {
        return Err(Error::Domain(format!("fixed arrival time must be positive, got {t_fixed}")));
    }
    cfg.validate()?;
    let p = &cfg.params;
    let mut pairs = Vec::new();
    for a in &cfg.agents {
        for g in &cfg.goals {
            let prof = minimize_energy(a, g, p.t_min, p.t_max)?;
            pairs.push(PairComparison {
                agent: a.id,
                goal: g.id,
                t_star: prof.t_star,
                e_star: reported_energy(prof.e_star) / 1000.0,
                e_fixed: reported_energy(energy_at(a, g, t_fixed)?) / 1000.0,
            });
        }
    }
    let optimized = run_simulation_with(cfg, &SimOptions { rule: RuleChoice::Optimal, ..opts.clone() })?;
    let fixed = run_simulation_with(cfg, &SimOptions { rule: RuleChoice::Fixed(t_fixed), ..opts.clone() })?;
    let (eo, ef) = (
        optimized.metrics.total_energy_kj_per_kg,
        fixed.metrics.total_energy_kj_per_kg,
    );
    Ok(Comparison {
        t_fixed,
        all_pairs_dominated: pairs.iter().all(PairComparison::dominated),
        pairs,
        optimized: (&optimized).into(),
        fixed: (&fixed).into(),
        reduction_percent: if ef > 0.0 { 100.0 * (ef - eo) / ef } else { 0.0 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(with = "horizon_serde")]
    pub h: f64,
    pub min_separation_cm: Option<f64>,
    pub energy_kj_per_kg: Option<f64>,
    pub t_f: Option<f64>,
    pub total_bans: Option<usize>,
    pub error: Option<String>,
}

/// One run per sensing distance. Failing runs keep their row with the error.
pub fn sweep_h(cfg: &ScenarioConfig, h_values: &[f64]) -> Result<Vec<SweepRow>> {
    sweep_h_with(cfg, h_values, &SimOptions::default())
}

pub fn sweep_h_with(cfg: &ScenarioConfig, h_values: &[f64], opts: &SimOptions) -> Result<Vec<SweepRow>> {
    if h_values.is_empty() {
        return Err(Error::Validation("sweep needs at least one h".into()));
    }
    if let Some(h) = h_values.iter().find(|h| !(**h > 0.0)) {
        return Err(Error::Validation(format!("sensing distance must be positive, got {h}")));
    }
    Ok(h_values
        .iter()
        .map(|&h| {
            let mut c = cfg.clone();
            c.params.h = h;
            match run_simulation_with(&c, opts) {
                Ok(run) => SweepRow {
                    h,
                    min_separation_cm: run.metrics.min_separation_cm,
                    energy_kj_per_kg: Some(run.metrics.total_energy_kj_per_kg),
                    t_f: Some(run.metrics.total_arrival_time_s),
                    total_bans: Some(run.metrics.total_bans),
                    error: None,
                },
                Err(e) => SweepRow {
                    h,
                    min_separation_cm: None,
                    energy_kj_per_kg: None,
                    t_f: None,
                    total_bans: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

fn cell<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("h_m,min_separation_cm,energy_kj_per_kg,t_f_s,total_bans,error\n");
    for r in rows {
        let h = if r.h.is_infinite() { "inf".to_string() } else { r.h.to_string() };
        let err = r.error.as_deref().unwrap_or("").replace(['"', ',', '\n'], " ");
        s += &format!(
            "{h},{},{},{},{},{err}\n",
            cell(&r.min_separation_cm),
            cell(&r.energy_kj_per_kg),
            cell(&r.t_f),
            cell(&r.total_bans)
        );
    }
    s
}
