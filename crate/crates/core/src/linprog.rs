//! Minimal dense two-phase simplex, just enough for the coalition-family
//! feasibility checks: a few dozen rows over at most a dozen nonnegative
//! variables. Bland's rule keeps it cycle-free.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    /// Optimal solution over the structural variables plus objective value.
    Optimal {
        x: Vec<f64>,
        objective: f64,
    },
    Infeasible,
    Unbounded,
}

const TOL: f64 = 1e-9;

/// Maximize `objective . x` subject to the constraints, x >= 0 elementwise.
pub fn maximize(num_vars: usize, constraints: &[Constraint], objective: &[f64]) -> LpOutcome {
    assert_eq!(objective.len(), num_vars);
    let m = constraints.len();

    // Column layout: structural | one slack/surplus per inequality | artificials.
    let num_slack = constraints
        .iter()
        .filter(|c| c.relation != Relation::Eq)
        .count();
    let num_art = constraints
        .iter()
        .filter(|c| c.relation != Relation::Le || c.rhs < 0.0)
        .count();
    // Recomputed below after rhs normalization; worst case is fine to reserve.
    let total = num_vars + num_slack + num_art;

    let mut a = vec![vec![0.0f64; total]; m];
    let mut b = vec![0.0f64; m];
    let mut basis = vec![usize::MAX; m];
    let mut art_cols: Vec<usize> = Vec::new();

    let mut next_slack = num_vars;
    let mut next_art = num_vars + num_slack;

    for (i, c) in constraints.iter().enumerate() {
        assert_eq!(c.coeffs.len(), num_vars);
        let flip = c.rhs < 0.0;
        let sign = if flip { -1.0 } else { 1.0 };
        for (j, &v) in c.coeffs.iter().enumerate() {
            a[i][j] = sign * v;
        }
        b[i] = sign * c.rhs;
        let relation = match (c.relation, flip) {
            (Relation::Eq, _) => Relation::Eq,
            (Relation::Le, false) | (Relation::Ge, true) => Relation::Le,
            (Relation::Ge, false) | (Relation::Le, true) => Relation::Ge,
        };
        match relation {
            Relation::Le => {
                a[i][next_slack] = 1.0;
                basis[i] = next_slack;
                next_slack += 1;
            }
            Relation::Ge => {
                a[i][next_slack] = -1.0;
                next_slack += 1;
                a[i][next_art] = 1.0;
                basis[i] = next_art;
                art_cols.push(next_art);
                next_art += 1;
            }
            Relation::Eq => {
                a[i][next_art] = 1.0;
                basis[i] = next_art;
                art_cols.push(next_art);
                next_art += 1;
            }
        }
    }
    let used = next_art;
    for row in &mut a {
        row.truncate(used);
    }
    let is_artificial = {
        let mut flags = vec![false; used];
        for &c in &art_cols {
            flags[c] = true;
        }
        flags
    };

    // Phase 1: drive the artificial variables to zero.
    if !art_cols.is_empty() {
        let mut cost = vec![0.0f64; used];
        for &c in &art_cols {
            cost[c] = -1.0;
        }
        let value = run_simplex(&mut a, &mut b, &mut basis, &cost, |_| true);
        match value {
            Some(v) if v > -1e-7 => {}
            Some(_) => return LpOutcome::Infeasible,
            None => return LpOutcome::Infeasible, // phase 1 is always bounded
        }
    }

    // Phase 2: original objective; artificial columns may not re-enter.
    let mut cost = vec![0.0f64; used];
    cost[..num_vars].copy_from_slice(objective);
    match run_simplex(&mut a, &mut b, &mut basis, &cost, |j| !is_artificial[j]) {
        Some(objective) => {
            let mut x = vec![0.0f64; num_vars];
            for (i, &col) in basis.iter().enumerate() {
                if col < num_vars {
                    x[col] = b[i];
                }
            }
            LpOutcome::Optimal { x, objective }
        }
        None => LpOutcome::Unbounded,
    }
}

/// Bland-rule simplex on a basis-canonical tableau. Returns the objective
/// value at optimality, or None when unbounded.
fn run_simplex(
    a: &mut [Vec<f64>],
    b: &mut [f64],
    basis: &mut [usize],
    cost: &[f64],
    may_enter: impl Fn(usize) -> bool,
) -> Option<f64> {
    let m = a.len();
    let total = cost.len();

    // Reduced costs: start from the raw costs and cancel the basic columns.
    let mut reduced = cost.to_vec();
    let mut objective = 0.0f64;
    for i in 0..m {
        let f = reduced[basis[i]];
        if f != 0.0 {
            for j in 0..total {
                reduced[j] -= f * a[i][j];
            }
            objective += f * b[i];
        }
    }

    let max_iters = 2000 * (m + total).max(1);
    for _ in 0..max_iters {
        // Bland: the lowest-index improving column enters.
        let entering = (0..total).find(|&j| may_enter(j) && reduced[j] > TOL);
        let Some(j) = entering else {
            return Some(objective);
        };

        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if a[i][j] > TOL {
                let ratio = b[i] / a[i][j];
                let better = match leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < lr - TOL || (ratio < lr + TOL && basis[i] < basis[li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((pivot_row, _)) = leave else {
            return None;
        };

        let pivot = a[pivot_row][j];
        for v in a[pivot_row].iter_mut() {
            *v /= pivot;
        }
        b[pivot_row] /= pivot;
        for i in 0..m {
            if i == pivot_row {
                continue;
            }
            let f = a[i][j];
            if f != 0.0 {
                for k in 0..total {
                    a[i][k] -= f * a[pivot_row][k];
                }
                b[i] -= f * b[pivot_row];
                if b[i] < 0.0 && b[i] > -1e-12 {
                    b[i] = 0.0;
                }
            }
        }
        let f = reduced[j];
        if f != 0.0 {
            for k in 0..total {
                reduced[k] -= f * a[pivot_row][k];
            }
            objective += f * b[pivot_row];
        }
        basis[pivot_row] = j;
    }
    // Bland's rule cannot cycle; hitting the cap means numerical trouble.
    Some(objective)
}
