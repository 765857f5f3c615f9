//! Exact optimal-weight solving for quota-based weighted majority voting.
//!
//! A coalition family is the set of expert coalitions whose total weight
//! clears the quota. Realizable families are upward closed (adding a voter
//! never breaks a passing coalition), shift closed under the weight wedge
//! (replacing a member with a stronger expert preserves passing), and exclude
//! complements (a coalition and its complement cannot both pass under the
//! 2Q budget). The solver branches over the family indicators in descending
//! scenario-probability order, propagates those closure rules, bounds by the
//! undecided probability mass, and certifies leaves with a linear
//! feasibility check that also maximizes the margin around the quota.
//!
//! Expert index 0 carries the highest competency and hence the largest
//! weight; competency inputs must be sorted descending.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linprog::{maximize, Constraint, LpOutcome, Relation};

/// Hard cap for the exact branch-and-bound solve.
pub const MIP_EXACT_LIMIT: usize = 10;
/// Hard cap for scenario enumeration.
pub const SCENARIO_LIMIT: usize = 20;
/// Hard cap for the family-enumeration oracle.
pub const BRUTE_FORCE_FAMILY_LIMIT: usize = 4;

/// All 2^N voting scenarios with their probabilities under independence.
/// Scenario `mask` has bit `i` set when expert `i` votes correctly.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTable {
    n: usize,
    probs: Vec<f64>,
}

impl ScenarioTable {
    pub fn num_experts(&self) -> usize {
        self.n
    }

    pub fn prob(&self, mask: usize) -> f64 {
        self.probs[mask]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Probability of every coalition: prod p_i over members times prod (1-p_j)
/// over non-members.
pub fn scenario_probs(p: &[f64]) -> Result<ScenarioTable> {
    let n = p.len();
    if n > SCENARIO_LIMIT {
        return Err(Error::EnumerationTooLarge {
            n,
            limit: SCENARIO_LIMIT,
        });
    }
    for &x in p {
        if !(0.0..=1.0).contains(&x) || x.is_nan() {
            return Err(Error::InvalidProbability(x));
        }
    }
    let mut probs = vec![0.0f64; 1 << n];
    probs[0] = 1.0;
    for (i, &pi) in p.iter().enumerate() {
        let bit = 1usize << i;
        for mask in 0..bit {
            let with = probs[mask] * pi;
            probs[mask] *= 1.0 - pi;
            probs[mask | bit] = with;
        }
    }
    Ok(ScenarioTable { n, probs })
}

/// Binary indicator per scenario: true when the coalition passes the quota.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionFamily {
    n: usize,
    z: Vec<bool>,
}

impl CoalitionFamily {
    pub fn from_fn(n: usize, f: impl Fn(usize) -> bool) -> Self {
        let z = (0..1usize << n).map(f).collect();
        Self { n, z }
    }

    /// Every coalition containing the given expert passes.
    pub fn dictator(n: usize, expert: usize) -> Self {
        Self::from_fn(n, |mask| mask & (1 << expert) != 0)
    }

    /// Strict simple majority: more than half the experts.
    pub fn majority(n: usize) -> Self {
        Self::from_fn(n, |mask| 2 * mask.count_ones() as usize > n)
    }

    pub fn num_experts(&self) -> usize {
        self.n
    }

    pub fn passes(&self, mask: usize) -> bool {
        self.z[mask]
    }

    pub fn indicators(&self) -> &[bool] {
        &self.z
    }

    /// Objective value z . p_S.
    pub fn dot(&self, scenarios: &ScenarioTable) -> f64 {
        self.z
            .iter()
            .zip(scenarios.probs())
            .filter(|(&zi, _)| zi)
            .map(|(_, &p)| p)
            .sum()
    }

    /// No coalition passes together with its complement.
    pub fn respects_complement_exclusion(&self) -> bool {
        let full = (1usize << self.n) - 1;
        self.z
            .iter()
            .enumerate()
            .all(|(mask, &zi)| !(zi && self.z[full ^ mask]))
    }

    /// Closed under adding a member and under swapping a member for a
    /// stronger (lower-index) expert.
    pub fn is_closed(&self) -> bool {
        (0..self.z.len()).all(|mask| {
            !self.z[mask]
                || strengthen_neighbors(mask, self.n)
                    .iter()
                    .all(|&t| self.z[t])
        })
    }
}

/// Immediate dominators of a coalition: one extra member, or one member
/// swapped for the next-stronger expert.
fn strengthen_neighbors(mask: usize, n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let bit = 1usize << k;
        if mask & bit == 0 {
            out.push(mask | bit);
        } else if k > 0 && mask & (bit >> 1) == 0 {
            out.push((mask & !bit) | (bit >> 1));
        }
    }
    out
}

/// Immediate dominated coalitions: one member removed, or one member swapped
/// for the next-weaker expert.
fn weaken_neighbors(mask: usize, n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let bit = 1usize << k;
        if mask & bit != 0 {
            out.push(mask & !bit);
            if k + 1 < n && mask & (bit << 1) == 0 {
                out.push((mask & !bit) | (bit << 1));
            }
        }
    }
    out
}

/// A partially decided coalition family.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialAssignment {
    n: usize,
    values: Vec<Option<bool>>,
}

impl PartialAssignment {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            values: vec![None; 1 << n],
        }
    }

    pub fn with(mut self, mask: usize, value: bool) -> Self {
        self.values[mask] = Some(value);
        self
    }

    pub fn get(&self, mask: usize) -> Option<bool> {
        self.values[mask]
    }

    pub fn num_experts(&self) -> usize {
        self.n
    }
}

/// Result of closing a partial assignment under the family rules.
#[derive(Debug, Clone, PartialEq)]
pub enum Propagation {
    Closed(PartialAssignment),
    Contradiction,
}

/// Fixpoint of the closure rules: a passing coalition forces all its
/// dominators to pass and its complement to fail; a failing coalition forces
/// all dominated coalitions to fail.
pub fn propagate(partial: &PartialAssignment) -> Propagation {
    let seeds: Vec<(usize, bool)> = partial
        .values
        .iter()
        .enumerate()
        .filter_map(|(m, v)| v.map(|v| (m, v)))
        .collect();
    // Re-derive from scratch so every seed's consequences fire.
    let mut values = vec![None; partial.values.len()];
    let mut trail = Vec::new();
    for (seed, v) in seeds {
        if !close_from(&mut values, seed, v, partial.n, &mut trail) {
            return Propagation::Contradiction;
        }
    }
    Propagation::Closed(PartialAssignment {
        n: partial.n,
        values,
    })
}

/// Propagates the consequences of `mask := value` through `values`, appending
/// every newly assigned mask to `trail`. Returns false on contradiction.
fn close_from(
    values: &mut [Option<bool>],
    mask: usize,
    value: bool,
    n: usize,
    trail: &mut Vec<usize>,
) -> bool {
    let full = (1usize << n) - 1;
    let mut queue = vec![(mask, value)];
    while let Some((m, v)) = queue.pop() {
        match values[m] {
            Some(w) if w == v => continue,
            Some(_) => return false,
            None => {
                values[m] = Some(v);
                trail.push(m);
            }
        }
        if v {
            for t in strengthen_neighbors(m, n) {
                queue.push((t, true));
            }
            queue.push((full ^ m, false));
        } else {
            for t in weaken_neighbors(m, n) {
                queue.push((t, false));
            }
        }
    }
    true
}

/// Weights realizing a coalition family, with the achieved quota margin.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleWeights {
    pub theta: Vec<f64>,
    /// Distance from the quota to the nearest coalition weight on either
    /// side; perturbations below margin/N cannot change the family.
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BudgetMode {
    /// The sum of weights pinned to 2Q.
    Exact,
    /// Q <= sum <= 2Q, the pre-tightening form.
    Relaxed,
}

/// Searches for nonnegative weights realizing the family: passing coalitions
/// weigh at least Q + eps_mip, failing ones at most Q, weights sum to 2Q and
/// descend with at least eps_wedge between neighbors. Returns None when no
/// such weights exist.
pub fn family_feasible(
    family: &CoalitionFamily,
    quota: f64,
    eps_mip: f64,
    eps_wedge: f64,
) -> Option<FeasibleWeights> {
    feasible_inner(family, quota, eps_mip, eps_wedge, BudgetMode::Exact)
}

/// [`family_feasible`] with the budget relaxed to Q <= ||theta||_1 <= 2Q.
pub fn family_feasible_relaxed(
    family: &CoalitionFamily,
    quota: f64,
    eps_mip: f64,
    eps_wedge: f64,
) -> Option<FeasibleWeights> {
    feasible_inner(family, quota, eps_mip, eps_wedge, BudgetMode::Relaxed)
}

fn feasible_inner(
    family: &CoalitionFamily,
    quota: f64,
    eps_mip: f64,
    eps_wedge: f64,
    budget: BudgetMode,
) -> Option<FeasibleWeights> {
    if !family.respects_complement_exclusion() || !family.is_closed() {
        return None;
    }
    let n = family.n;
    let (min_pass, max_fail) = frontier(&family.z, n);
    solve_frontier_lp(n, &min_pass, &max_fail, quota, eps_mip, eps_wedge, budget)
}

/// Minimal passing and maximal failing coalitions of a closed family. Only
/// these bind: every other row is dominated.
fn frontier(z: &[bool], n: usize) -> (Vec<usize>, Vec<usize>) {
    let mut min_pass = Vec::new();
    let mut max_fail = Vec::new();
    for (mask, &zi) in z.iter().enumerate() {
        if zi {
            if weaken_neighbors(mask, n).iter().all(|&t| !z[t]) {
                min_pass.push(mask);
            }
        } else if strengthen_neighbors(mask, n).iter().all(|&t| z[t]) {
            max_fail.push(mask);
        }
    }
    (min_pass, max_fail)
}

fn coalition_row(mask: usize, n: usize, margin_coeff: f64) -> Vec<f64> {
    let mut row = vec![0.0; n + 1];
    for (i, slot) in row.iter_mut().enumerate().take(n) {
        if mask & (1 << i) != 0 {
            *slot = 1.0;
        }
    }
    row[n] = margin_coeff;
    row
}

fn solve_frontier_lp(
    n: usize,
    min_pass: &[usize],
    max_fail: &[usize],
    quota: f64,
    eps_mip: f64,
    eps_wedge: f64,
    budget: BudgetMode,
) -> Option<FeasibleWeights> {
    // Variables: theta_0..theta_{n-1}, then the quota margin.
    let mut cons = Vec::with_capacity(min_pass.len() + max_fail.len() + n + 2);
    for &mask in min_pass {
        cons.push(Constraint {
            coeffs: coalition_row(mask, n, -1.0),
            relation: Relation::Ge,
            rhs: quota + eps_mip,
        });
    }
    for &mask in max_fail {
        cons.push(Constraint {
            coeffs: coalition_row(mask, n, 1.0),
            relation: Relation::Le,
            rhs: quota,
        });
    }
    let mut budget_row = vec![1.0; n + 1];
    budget_row[n] = 0.0;
    match budget {
        BudgetMode::Exact => cons.push(Constraint {
            coeffs: budget_row,
            relation: Relation::Eq,
            rhs: 2.0 * quota,
        }),
        BudgetMode::Relaxed => {
            cons.push(Constraint {
                coeffs: budget_row.clone(),
                relation: Relation::Ge,
                rhs: quota,
            });
            cons.push(Constraint {
                coeffs: budget_row,
                relation: Relation::Le,
                rhs: 2.0 * quota,
            });
        }
    }
    for j in 0..n.saturating_sub(1) {
        let mut row = vec![0.0; n + 1];
        row[j] = 1.0;
        row[j + 1] = -1.0;
        cons.push(Constraint {
            coeffs: row,
            relation: Relation::Ge,
            rhs: eps_wedge,
        });
    }

    let mut objective = vec![0.0; n + 1];
    objective[n] = 1.0;
    match maximize(n + 1, &cons, &objective) {
        LpOutcome::Optimal { x, objective } => Some(FeasibleWeights {
            theta: x[..n].to_vec(),
            margin: objective,
        }),
        _ => None,
    }
}

/// Tunables for the exact solver.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Strict-pass slack above the quota; defaults to 1e-7 * Q.
    pub eps_mip: Option<f64>,
    /// Minimum separation between adjacent weights; 0 disables strict ordering.
    pub eps_wedge: f64,
    /// Interior feasibility checks run every this many branch levels.
    pub interior_check_depth: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            eps_mip: None,
            eps_wedge: 1e-6,
            interior_check_depth: 8,
        }
    }
}

/// An optimal weight assignment: the realizing weights, the induced family,
/// the objective, and the feasibility margin certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSolution {
    /// Weights in expert order (descending, matching the competency sort).
    pub theta: Vec<f64>,
    pub quota: f64,
    /// Expected accuracy of the induced family under the given competencies.
    pub objective: f64,
    pub family: CoalitionFamily,
    /// Quota margin of the returned weights.
    pub certificate: f64,
}

fn validate_solver_input(p: &[f64], quota: f64, limit: usize) -> Result<()> {
    if p.is_empty() {
        return Err(Error::EmptyCommittee);
    }
    if p.len() > limit {
        return Err(Error::ExactSolveLimit { n: p.len(), limit });
    }
    for &x in p {
        if !(0.0..=1.0).contains(&x) || x.is_nan() {
            return Err(Error::InvalidProbability(x));
        }
    }
    for i in 1..p.len() {
        if p[i] > p[i - 1] {
            return Err(Error::NotSorted(i));
        }
    }
    if quota <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "quota",
            reason: format!("must be positive, got {quota}"),
        });
    }
    Ok(())
}

/// Globally optimal weighted-voting weights for descending competencies,
/// with default options.
pub fn solve_optimal_weights(p: &[f64], quota: f64) -> Result<WeightSolution> {
    solve_optimal_weights_with(p, quota, &SolverOptions::default())
}

/// Depth-first branch-and-bound over the family indicators.
pub fn solve_optimal_weights_with(
    p: &[f64],
    quota: f64,
    opts: &SolverOptions,
) -> Result<WeightSolution> {
    validate_solver_input(p, quota, MIP_EXACT_LIMIT)?;
    let n = p.len();
    let scenarios = scenario_probs(p)?;
    let eps_mip = opts.eps_mip.unwrap_or(1e-7 * quota);

    let mut order: Vec<usize> = (0..1usize << n).collect();
    order.sort_by(|&a, &b| {
        scenarios.probs[b]
            .partial_cmp(&scenarios.probs[a])
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut search = Search {
        n,
        probs: &scenarios.probs,
        order: &order,
        quota,
        eps_mip,
        eps_wedge: opts.eps_wedge,
        check_depth: opts.interior_check_depth.max(1),
        values: vec![None; 1 << n],
        decided_value: 0.0,
        undecided_mass: scenarios.probs.iter().sum(),
        incumbent: None,
    };

    // The full coalition always passes (weight 2Q > Q) and the empty one
    // never does; seed both before branching.
    let full = (1usize << n) - 1;
    let mut trail = Vec::new();
    if !search.assign(full, true, &mut trail) {
        return Err(Error::Internal("root propagation failed".into()));
    }
    search.dfs(0);

    let incumbent = search
        .incumbent
        .ok_or_else(|| Error::Internal("no feasible family found".into()))?;
    let family = CoalitionFamily { n, z: incumbent.z };
    let objective = family.dot(&scenarios);
    Ok(WeightSolution {
        theta: incumbent.weights.theta,
        quota,
        objective,
        family,
        certificate: incumbent.weights.margin,
    })
}

struct Incumbent {
    objective: f64,
    z: Vec<bool>,
    weights: FeasibleWeights,
}

struct Search<'a> {
    n: usize,
    probs: &'a [f64],
    order: &'a [usize],
    quota: f64,
    eps_mip: f64,
    eps_wedge: f64,
    check_depth: usize,
    values: Vec<Option<bool>>,
    decided_value: f64,
    undecided_mass: f64,
    incumbent: Option<Incumbent>,
}

impl Search<'_> {
    /// Assign-and-propagate; records every newly set mask in `trail` and
    /// keeps the value/mass accumulators in sync. False on contradiction.
    fn assign(&mut self, mask: usize, value: bool, trail: &mut Vec<usize>) -> bool {
        let before = trail.len();
        let ok = close_from(&mut self.values, mask, value, self.n, trail);
        for &m in &trail[before..] {
            self.undecided_mass -= self.probs[m];
            if self.values[m] == Some(true) {
                self.decided_value += self.probs[m];
            }
        }
        ok
    }

    fn undo(&mut self, trail: &[usize], from: usize) {
        for &m in &trail[from..] {
            self.undecided_mass += self.probs[m];
            if self.values[m] == Some(true) {
                self.decided_value -= self.probs[m];
            }
            self.values[m] = None;
        }
    }

    fn incumbent_objective(&self) -> f64 {
        self.incumbent
            .as_ref()
            .map_or(f64::NEG_INFINITY, |i| i.objective)
    }

    fn partial_frontier(&self) -> (Vec<usize>, Vec<usize>) {
        let mut min_pass = Vec::new();
        let mut max_fail = Vec::new();
        for (mask, v) in self.values.iter().enumerate() {
            match v {
                Some(true) => {
                    // Propagation keeps assigned sets closed, so dominance can
                    // be read off the immediate neighbors.
                    if weaken_neighbors(mask, self.n)
                        .iter()
                        .all(|&t| self.values[t] != Some(true))
                    {
                        min_pass.push(mask);
                    }
                }
                Some(false) => {
                    if strengthen_neighbors(mask, self.n)
                        .iter()
                        .all(|&t| self.values[t] != Some(false))
                    {
                        max_fail.push(mask);
                    }
                }
                None => {}
            }
        }
        (min_pass, max_fail)
    }

    fn feasible_now(&self) -> Option<FeasibleWeights> {
        let (min_pass, max_fail) = self.partial_frontier();
        solve_frontier_lp(
            self.n,
            &min_pass,
            &max_fail,
            self.quota,
            self.eps_mip,
            self.eps_wedge,
            BudgetMode::Exact,
        )
    }

    fn dfs(&mut self, depth: usize) {
        if self.decided_value + self.undecided_mass <= self.incumbent_objective() + 1e-12 {
            return;
        }
        if depth > 0 && depth % self.check_depth == 0 && self.feasible_now().is_none() {
            return;
        }
        let next = self
            .order
            .iter()
            .copied()
            .find(|&m| self.values[m].is_none());
        let Some(mask) = next else {
            if let Some(weights) = self.feasible_now() {
                let objective = self.decided_value;
                if objective > self.incumbent_objective() {
                    self.incumbent = Some(Incumbent {
                        objective,
                        z: self.values.iter().map(|v| v.unwrap()).collect(),
                        weights,
                    });
                }
            }
            return;
        };
        for value in [true, false] {
            let mut trail = Vec::new();
            if self.assign(mask, value, &mut trail) {
                self.dfs(depth + 1);
            }
            self.undo(&trail, 0);
        }
    }
}

/// Oracle: enumerate every complement-excluding, upward-closed family, keep
/// the realizable ones, and return the best. Test support only.
pub fn enumerate_families_bruteforce(p: &[f64], quota: f64) -> Result<WeightSolution> {
    enumerate_families_bruteforce_with(p, quota, &SolverOptions::default())
}

pub fn enumerate_families_bruteforce_with(
    p: &[f64],
    quota: f64,
    opts: &SolverOptions,
) -> Result<WeightSolution> {
    validate_solver_input(p, quota, BRUTE_FORCE_FAMILY_LIMIT)?;
    let n = p.len();
    let scenarios = scenario_probs(p)?;
    let eps_mip = opts.eps_mip.unwrap_or(1e-7 * quota);
    let num_scenarios = 1usize << n;
    let full = num_scenarios - 1;
    let mut best: Option<WeightSolution> = None;
    'families: for fam_bits in 0u32..(1u32 << num_scenarios) {
        // Cheap bit filters before materializing: complement exclusion and
        // one-step upward closure.
        for s in 0..num_scenarios {
            if fam_bits & (1 << s) == 0 {
                continue;
            }
            if fam_bits & (1 << (full ^ s)) != 0 {
                continue 'families;
            }
            for k in 0..n {
                if s & (1 << k) == 0 && fam_bits & (1 << (s | (1 << k))) == 0 {
                    continue 'families;
                }
            }
        }
        let family = CoalitionFamily {
            n,
            z: (0..num_scenarios)
                .map(|s| fam_bits & (1 << s) != 0)
                .collect(),
        };
        let Some(weights) = family_feasible(&family, quota, eps_mip, opts.eps_wedge) else {
            continue;
        };
        let objective = family.dot(&scenarios);
        if best.as_ref().map_or(true, |b| objective > b.objective) {
            best = Some(WeightSolution {
                theta: weights.theta,
                quota,
                objective,
                family,
                certificate: weights.margin,
            });
        }
    }
    best.ok_or_else(|| Error::Internal("no feasible family in enumeration".into()))
}
