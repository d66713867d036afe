//! Local minimum-energy assignment of neighbors to goals with banned pairs.
//!
//! Banned pairs are deleted edges of the bipartite graph, not large costs.
//! The optimum comes from a shortest-augmenting-path (Hungarian) solver on
//! the rectangular matrix; ties between optimal assignments are then broken
//! toward the lexicographically smallest goal vector (agents in id order)
//! by fixing one agent at a time.

use std::collections::{BTreeMap, BTreeSet};

use crate::energy::minimize_energy;
use crate::error::{Error, Result};
use crate::worldmodel::{AgentState, GoalTrajectory};

/// Two objectives within this relative distance are treated as a tie.
pub const TIE_EPS: f64 = 1e-12;

pub const BRUTE_FORCE_LIMIT: usize = 9;

pub type BanSets = BTreeMap<usize, BTreeSet<usize>>;

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    /// Agent ids, ascending.
    pub rows: Vec<usize>,
    /// Goal ids, ascending.
    pub cols: Vec<usize>,
    /// `None` marks a banned pair.
    pub cost: Vec<Vec<Option<f64>>>,
}

impl CostMatrix {
    /// Builds a matrix from dense rows, sorting rows and columns by id.
    pub fn new(rows: Vec<usize>, cols: Vec<usize>, cost: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if cost.len() != rows.len() || cost.iter().any(|r| r.len() != cols.len()) {
            return Err(Error::Domain("cost matrix shape mismatch".into()));
        }
        if cost.iter().flatten().flatten().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Domain("costs must be finite and non-negative".into()));
        }
        let mut row_order: Vec<usize> = (0..rows.len()).collect();
        row_order.sort_by_key(|&r| rows[r]);
        let mut col_order: Vec<usize> = (0..cols.len()).collect();
        col_order.sort_by_key(|&c| cols[c]);
        Ok(CostMatrix {
            rows: row_order.iter().map(|&r| rows[r]).collect(),
            cols: col_order.iter().map(|&c| cols[c]).collect(),
            cost: row_order
                .iter()
                .map(|&r| col_order.iter().map(|&c| cost[r][c]).collect())
                .collect(),
        })
    }

    /// Convenience constructor with ids `1..=n` and `1..=m`.
    pub fn from_dense(cost: Vec<Vec<Option<f64>>>) -> Result<Self> {
        let m = cost.first().map_or(0, |r| r.len());
        CostMatrix::new((1..=cost.len()).collect(), (1..=m).collect(), cost)
    }

    pub fn get(&self, agent: usize, goal: usize) -> Option<f64> {
        let r = self.rows.iter().position(|&a| a == agent)?;
        let c = self.cols.iter().position(|&g| g == goal)?;
        self.cost[r][c]
    }

    fn objective(&self, cols: &[usize]) -> f64 {
        cols.iter()
            .enumerate()
            .map(|(r, &c)| self.cost[r][c].expect("assigned pair is allowed"))
            .fold(0.0, |acc, c| acc + c)
    }

    fn assignment(&self, cols: &[usize]) -> Assignment {
        Assignment {
            pairs: self
                .rows
                .iter()
                .zip(cols)
                .map(|(&a, &c)| (a, self.cols[c]))
                .collect(),
            objective: self.objective(cols),
        }
    }
}

/// Agent to goal map and its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub pairs: BTreeMap<usize, usize>,
    pub objective: f64,
}

impl Assignment {
    pub fn goal_of(&self, agent: usize) -> Option<usize> {
        self.pairs.get(&agent).copied()
    }
}

/// Cost of every member-goal pair at its optimal arrival time, with banned
/// pairs removed.
pub fn build_cost_matrix(
    members: &[AgentState],
    goals: &[GoalTrajectory],
    bans: &BanSets,
    t_min: f64,
    t_max: f64,
) -> Result<CostMatrix> {
    build_cost_matrix_with(members, goals, bans, |a, g| {
        Ok(minimize_energy(a, g, t_min, t_max)?.e_star)
    })
}

/// Like [`build_cost_matrix`] with a caller-supplied pair cost.
/// First row left without a goal by a maximum bipartite matching over the
/// allowed entries, or `None` when every row can be matched.
fn unmatched_row(rows: &[Vec<Option<f64>>]) -> Option<usize> {
    fn augment(
        r: usize,
        rows: &[Vec<Option<f64>>],
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for (c, cell) in rows[r].iter().enumerate() {
            if cell.is_none() || seen[c] {
                continue;
            }
            seen[c] = true;
            if owner[c].is_none_or(|o| augment(o, rows, seen, owner)) {
                owner[c] = Some(r);
                return true;
            }
        }
        false
    }
    let cols = rows.first().map_or(0, Vec::len);
    let mut owner = vec![None; cols];
    (0..rows.len()).find(|&r| !augment(r, rows, &mut vec![false; cols], &mut owner))
}

pub fn build_cost_matrix_with<F>(
    members: &[AgentState],
    goals: &[GoalTrajectory],
    bans: &BanSets,
    mut cost: F,
) -> Result<CostMatrix>
where
    F: FnMut(&AgentState, &GoalTrajectory) -> Result<f64>,
{
    if members.is_empty() {
        return Err(Error::Domain("assignment needs at least one member".into()));
    }
    if members.len() > goals.len() {
        return Err(Error::Infeasible(format!(
            "{} members but only {} goals",
            members.len(),
            goals.len()
        )));
    }
    let empty = BTreeSet::new();
    let mut rows = Vec::with_capacity(members.len());
    for a in members {
        let banned = bans.get(&a.id).unwrap_or(&empty);
        let row = goals
            .iter()
            .map(|g| {
                if banned.contains(&g.id) {
                    Ok(None)
                } else {
                    cost(a, g).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if let Some(r) = unmatched_row(&rows) {
        return Err(Error::Infeasible(format!(
            "agent {} cannot be matched to a distinct allowed goal",
            members[r].id
        )));
    }
    CostMatrix::new(
        members.iter().map(|a| a.id).collect(),
        goals.iter().map(|g| g.id).collect(),
        rows,
    )
}

fn is_tie(candidate: f64, best: f64) -> bool {
    candidate <= best + TIE_EPS * (1.0 + best.abs())
}

/// Minimum-cost column per row over allowed entries, or `None` when no
/// complete assignment exists.
fn hungarian(cost: &[Vec<Option<f64>>], m: usize) -> Option<Vec<usize>> {
    let n = cost.len();
    if n > m {
        return None;
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // owner[j]: 1-based row matched to column j, 0 if free
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                if let Some(c) = cost[i0 - 1][j - 1] {
                    let reduced = c - u[i0] - v[j];
                    if reduced < minv[j] {
                        minv[j] = reduced;
                        way[j] = j0;
                    }
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if j1 == 0 {
                return None;
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut cols = vec![0; n];
    for j in 1..=m {
        if owner[j] > 0 {
            cols[owner[j] - 1] = j - 1;
        }
    }
    Some(cols)
}

/// Exact minimum-cost assignment with lexicographic tie-breaking.
pub fn solve_assignment(c: &CostMatrix) -> Result<Assignment> {
    let m = c.cols.len();
    let best = hungarian(&c.cost, m)
        .ok_or_else(|| Error::Infeasible(format!("no complete assignment for agents {:?}", c.rows)))?;
    let target = c.objective(&best);

    let mut restricted = c.cost.clone();
    let mut chosen = best;
    for r in 0..c.rows.len() {
        let row = restricted[r].clone();
        let mut fixed = false;
        for col in 0..m {
            if row[col].is_none() {
                continue;
            }
            restricted[r] = (0..m).map(|k| if k == col { row[col] } else { None }).collect();
            if let Some(cols) = hungarian(&restricted, m) {
                if is_tie(c.objective(&cols), target) {
                    chosen = cols;
                    fixed = true;
                    break;
                }
            }
        }
        if !fixed {
            // Unreachable unless the optimum sits exactly on the tie boundary;
            // keep the last feasible optimum and release the row.
            restricted[r] = row;
        }
    }
    Ok(c.assignment(&chosen))
}

/// Exhaustive enumeration over injective maps, used as an oracle.
pub fn brute_force_assignment(c: &CostMatrix) -> Result<Assignment> {
    let n = c.rows.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::SizeGuard {
            rows: n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let m = c.cols.len();
    let mut used = vec![false; m];
    let mut cols = Vec::with_capacity(n);

    let mut best = f64::INFINITY;
    search_min(c, 0, 0.0, &mut used, &mut cols, &mut best);
    if !best.is_finite() {
        return Err(Error::Infeasible(format!("no complete assignment for agents {:?}", c.rows)));
    }
    let bound = best + TIE_EPS * (1.0 + best.abs());
    let first = search_first(c, 0, 0.0, bound, &mut used, &mut cols)
        .expect("optimal assignment is within its own tie bound");
    Ok(c.assignment(&first))
}

fn search_min(
    c: &CostMatrix,
    r: usize,
    partial: f64,
    used: &mut [bool],
    cols: &mut Vec<usize>,
    best: &mut f64,
) {
    if partial > *best {
        return;
    }
    if r == c.rows.len() {
        *best = best.min(c.objective(cols));
        return;
    }
    for k in 0..used.len() {
        if let (false, Some(x)) = (used[k], c.cost[r][k]) {
            used[k] = true;
            cols.push(k);
            search_min(c, r + 1, partial + x, used, cols, best);
            cols.pop();
            used[k] = false;
        }
    }
}

fn search_first(
    c: &CostMatrix,
    r: usize,
    partial: f64,
    bound: f64,
    used: &mut [bool],
    cols: &mut Vec<usize>,
) -> Option<Vec<usize>> {
    if partial > bound {
        return None;
    }
    if r == c.rows.len() {
        return (c.objective(cols) <= bound).then(|| cols.clone());
    }
    for k in 0..used.len() {
        if let (false, Some(x)) = (used[k], c.cost[r][k]) {
            used[k] = true;
            cols.push(k);
            let found = search_first(c, r + 1, partial + x, bound, used, cols);
            cols.pop();
            used[k] = false;
            if found.is_some() {
                return found;
            }
        }
    }
    None
}

/// Checks one-goal-per-agent, no shared goals and no banned pairs.
pub fn satisfies_constraints(a: &Assignment, c: &CostMatrix) -> bool {
    let every_row = c.rows.iter().all(|r| a.pairs.contains_key(r)) && a.pairs.len() == c.rows.len();
    let goals: BTreeSet<_> = a.pairs.values().collect();
    let distinct = goals.len() == a.pairs.len();
    let allowed = a.pairs.iter().all(|(&r, &g)| c.get(r, g).is_some());
    every_row && distinct && allowed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldmodel::Vec2;

    fn dense(rows: &[&[f64]]) -> CostMatrix {
        CostMatrix::from_dense(rows.iter().map(|r| r.iter().map(|&x| Some(x)).collect()).collect())
            .unwrap()
    }

    #[test]
    fn two_by_two_prefers_cross_assignment() {
        let c = dense(&[&[1.0, 2.0], &[2.0, 4.0]]);
        let a = solve_assignment(&c).unwrap();
        assert_eq!(a.pairs, BTreeMap::from([(1, 2), (2, 1)]));
        assert_eq!(a.objective, 4.0);
    }

    #[test]
    fn ban_forces_identity() {
        let c = CostMatrix::from_dense(vec![
            vec![Some(1.0), None],
            vec![Some(2.0), Some(4.0)],
        ])
        .unwrap();
        let a = solve_assignment(&c).unwrap();
        assert_eq!(a.pairs, BTreeMap::from([(1, 1), (2, 2)]));
        assert_eq!(a.objective, 5.0);
        assert_eq!(brute_force_assignment(&c).unwrap(), a);
    }

    #[test]
    fn single_row_takes_minimum() {
        let a = solve_assignment(&dense(&[&[7.0, 3.0, 9.0]])).unwrap();
        assert_eq!(a.pairs, BTreeMap::from([(1, 2)]));
        assert_eq!(a.objective, 3.0);
    }

    #[test]
    fn equal_costs_give_identity_by_tie_break() {
        let c = dense(&[&[2.5; 4], &[2.5; 4], &[2.5; 4], &[2.5; 4]]);
        for a in [solve_assignment(&c).unwrap(), brute_force_assignment(&c).unwrap()] {
            assert_eq!(a.pairs, (1..=4).map(|i| (i, i)).collect());
            assert_eq!(a.objective, 10.0);
        }
    }

    #[test]
    fn single_allowed_column_is_forced() {
        let c = CostMatrix::from_dense(vec![
            vec![None, None, Some(9.0)],
            vec![Some(1.0), Some(1.0), Some(0.0)],
        ])
        .unwrap();
        for a in [solve_assignment(&c).unwrap(), brute_force_assignment(&c).unwrap()] {
            assert_eq!(a.goal_of(1), Some(3));
        }
    }

    #[test]
    fn infeasible_matrix_is_reported() {
        let c = CostMatrix::from_dense(vec![vec![Some(1.0), None], vec![Some(1.0), None]]).unwrap();
        assert!(matches!(solve_assignment(&c), Err(Error::Infeasible(_))));
        assert!(matches!(brute_force_assignment(&c), Err(Error::Infeasible(_))));
    }

    #[test]
    fn brute_force_guard() {
        let c = dense(&vec![&[1.0; 10][..]; 10]);
        assert!(matches!(brute_force_assignment(&c), Err(Error::SizeGuard { .. })));
    }

    #[test]
    fn rows_and_columns_are_sorted_by_id() {
        let c = CostMatrix::new(
            vec![5, 2],
            vec![9, 3],
            vec![vec![Some(1.0), Some(2.0)], vec![Some(3.0), Some(4.0)]],
        )
        .unwrap();
        assert_eq!(c.rows, vec![2, 5]);
        assert_eq!(c.cols, vec![3, 9]);
        assert_eq!(c.get(2, 3), Some(4.0));
        assert_eq!(c.get(5, 9), Some(1.0));
    }

    fn quad_goal(id: usize, x: f64) -> GoalTrajectory {
        GoalTrajectory::new(id, vec![Vec2::new(x, 0.0), Vec2::ZERO, Vec2::new(0.1, 0.0)])
    }

    #[test]
    fn cost_matrix_marks_bans() {
        let members = [
            AgentState::at_rest(1, Vec2::new(0.0, -1.0)),
            AgentState::at_rest(2, Vec2::new(1.0, -1.0)),
        ];
        let goals = [quad_goal(1, 0.0), quad_goal(2, 1.0)];
        let bans = BanSets::from([(1, BTreeSet::from([2]))]);
        let c = build_cost_matrix(&members, &goals, &bans, 1e-3, 1e4).unwrap();
        assert_eq!(c.get(1, 2), None);
        assert!(c.get(1, 1).unwrap() > 0.0);
        assert!(c.get(2, 2).unwrap() > 0.0);

        let one = build_cost_matrix(&members[..1], &goals, &BanSets::new(), 1e-3, 1e4).unwrap();
        assert_eq!(one.cost[0].iter().flatten().count(), 2);
    }

    #[test]
    fn identical_agents_get_identical_rows() {
        let p = Vec2::new(0.3, -0.7);
        let members = [AgentState::at_rest(1, p), AgentState::at_rest(2, p)];
        let goals = [quad_goal(1, 0.0), quad_goal(2, 1.0)];
        let c = build_cost_matrix(&members, &goals, &BanSets::new(), 1e-3, 1e4).unwrap();
        for k in 0..2 {
            let (x, y) = (c.cost[0][k].unwrap(), c.cost[1][k].unwrap());
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn cost_matrix_shape_infeasibility_names_agent() {
        let members = [
            AgentState::at_rest(1, Vec2::new(0.0, -1.0)),
            AgentState::at_rest(2, Vec2::new(1.0, -1.0)),
        ];
        let goals = [quad_goal(1, 0.0), quad_goal(2, 1.0)];
        // one ban still leaves a perfect matching
        let bans = BanSets::from([(2, BTreeSet::from([1]))]);
        assert!(build_cost_matrix(&members, &goals, &bans, 1e-3, 1e4).is_ok());
        let bans = BanSets::from([(1, BTreeSet::from([1])), (2, BTreeSet::from([1]))]);
        let err = build_cost_matrix(&members, &goals, &bans, 1e-3, 1e4).unwrap_err();
        assert!(err.to_string().contains("agent 2"), "{err}");
    }
}
