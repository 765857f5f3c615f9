//! The online learners: successive expert elimination, online weighted
//! majority voting with optimistic estimates, the targeted-m burn-in wrapper,
//! and the combinatorial-UCB and zooming baselines, plus regret accounting.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{EstimatorTable, ExpertId};
use crate::mip::{solve_optimal_weights_with, SolverOptions, WeightSolution};
use crate::votemath::{conservative_advantage, p_maj_egalitarian_dp, p_maj_weighted};

/// Candidate set and elimination history of a successive-elimination run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeeState {
    candidates: Vec<usize>,
    eliminations: Vec<(u64, Vec<usize>)>,
    round: u64,
}

impl SeeState {
    pub fn new(n: usize) -> Self {
        Self {
            candidates: (0..n).collect(),
            eliminations: Vec::new(),
            round: 0,
        }
    }

    /// Start from an explicit candidate subset (targeted-m hand-off).
    pub fn with_candidates(candidates: Vec<usize>) -> Self {
        Self {
            candidates,
            eliminations: Vec::new(),
            round: 0,
        }
    }

    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    pub fn eliminations(&self) -> &[(u64, Vec<usize>)] {
        &self.eliminations
    }
}

/// One elimination round: on a breakage whose removal test certifies that no
/// suffix of the weaker group can help, truncate the candidate set, then play
/// the remaining candidates as an egalitarian committee.
///
/// Breakages are attempted from the strongest witness downward, deeper splits
/// first, and at most one truncation is applied per round; fresh intervals
/// re-trigger the remaining ones on later rounds.
pub fn see_round(state: &SeeState, table: &EstimatorTable) -> (SeeState, Vec<usize>) {
    let mut next = state.clone();
    next.round += 1;

    let ids: Vec<ExpertId> = next.candidates.iter().map(|&i| ExpertId(i)).collect();
    let mut pairs = table.detect_breakages_among(&ids);
    // Deepest split first among breakages sharing the top witness.
    pairs.sort_by(|a, b| {
        table
            .mean(b.0)
            .partial_cmp(&table.mean(a.0))
            .unwrap()
            .then(table.mean(a.1).partial_cmp(&table.mean(b.1)).unwrap())
            .then(a.cmp(b))
    });

    let mut attempted: Vec<usize> = Vec::new();
    for (_, j) in pairs {
        if attempted.contains(&j.0) {
            continue;
        }
        attempted.push(j.0);
        let split_mean = table.mean(j);

        let mut below: Vec<usize> = next
            .candidates
            .iter()
            .copied()
            .filter(|&c| table.mean(ExpertId(c)) <= split_mean)
            .collect();
        // Ascending by estimate: below[k-1] is the strongest of the group.
        below.sort_by(|&a, &b| {
            table
                .mean(ExpertId(a))
                .partial_cmp(&table.mean(ExpertId(b)))
                .unwrap()
                .then(a.cmp(&b))
        });
        let kept: Vec<usize> = next
            .candidates
            .iter()
            .copied()
            .filter(|c| !below.contains(c))
            .collect();
        if kept.is_empty() || below.is_empty() {
            continue;
        }

        let kept_pessimistic: Vec<f64> = kept
            .iter()
            .map(|&c| table.pessimistic(ExpertId(c)))
            .collect();
        // Nested suffixes of the weaker group, strongest member first.
        let removable = (1..=below.len()).all(|take| {
            let suffix: Vec<f64> = below
                .iter()
                .rev()
                .take(take)
                .map(|&c| table.optimistic(ExpertId(c)))
                .collect();
            conservative_advantage(&kept_pessimistic, &suffix)
                .map(|a| a <= 0.0)
                .unwrap_or(false)
        });
        if removable {
            next.candidates.retain(|c| !below.contains(c));
            next.eliminations.push((next.round, below));
            break;
        }
    }

    let play = next.candidates.clone();
    (next, play)
}

/// Weights in play for one round of online weighted majority voting.
#[derive(Debug, Clone, PartialEq)]
pub struct WmvPlay {
    /// Weight per expert in original index order.
    pub theta: Vec<f64>,
    pub quota: f64,
    /// The underlying solve, in competency-sorted order.
    pub solution: WeightSolution,
    /// order[k] = original index of the expert ranked k by optimistic estimate.
    pub order: Vec<usize>,
}

/// Online weighted-majority-voting learner state.
#[derive(Debug, Clone)]
pub struct WmvState {
    quota: f64,
    resolve_period: u64,
    solver: SolverOptions,
    round: u64,
    current: Option<WmvPlay>,
}

impl WmvState {
    pub fn new(quota: f64, resolve_period: u64) -> Self {
        Self {
            quota,
            resolve_period: resolve_period.max(1),
            solver: SolverOptions::default(),
            round: 0,
            current: None,
        }
    }

    pub fn round(&self) -> u64 {
        self.round
    }
}

/// One round: periodically re-solve the exact weighted-voting problem with
/// clamped optimistic competencies min(1, p-hat + radius), then play the
/// current weights.
pub fn wmv_round(state: &WmvState, table: &EstimatorTable) -> Result<(WmvState, WmvPlay)> {
    let mut next = state.clone();
    next.round += 1;
    let stale = (next.round - 1) % next.resolve_period == 0;
    if stale || next.current.is_none() {
        let n = table.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            table
                .optimistic(ExpertId(b))
                .partial_cmp(&table.optimistic(ExpertId(a)))
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut optimistic: Vec<f64> = order
            .iter()
            .map(|&i| table.optimistic(ExpertId(i)))
            .collect();
        // Exact duplicates break the heterogeneity assumption; nudge them
        // apart below floating-visibility of the solve.
        for k in 1..optimistic.len() {
            if optimistic[k] >= optimistic[k - 1] {
                optimistic[k] = (optimistic[k - 1] - 1e-9).max(0.0);
            }
        }
        let solution = solve_optimal_weights_with(&optimistic, next.quota, &next.solver)?;
        let mut theta = vec![0.0; n];
        for (rank, &orig) in order.iter().enumerate() {
            theta[orig] = solution.theta[rank];
        }
        next.current = Some(WmvPlay {
            theta,
            quota: next.quota,
            solution,
            order,
        });
    }
    let play = next.current.clone().expect("solve populated current");
    Ok((next, play))
}

/// Burn-in group of a targeted-m schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurnInGroup {
    pub experts: Vec<usize>,
    pub rounds: u64,
}

/// Partition N experts into ceil(N/m) groups, each scheduled for t0
/// consecutive rounds; the last group keeps the remainder.
pub fn targeted_m_schedule(n: usize, m: usize, t0: u64) -> Result<Vec<BurnInGroup>> {
    if m == 0 {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: "must be at least 1".into(),
        });
    }
    if n == 0 {
        return Err(Error::EmptyCommittee);
    }
    Ok((0..n)
        .collect::<Vec<_>>()
        .chunks(m)
        .map(|chunk| BurnInGroup {
            experts: chunk.to_vec(),
            rounds: t0,
        })
        .collect())
}

/// Successive elimination behind a targeted-m burn-in: each group is queried
/// alone for its window, then the base algorithm takes over on the full set
/// with the accumulated estimates.
#[derive(Debug, Clone)]
pub struct TargetedSeeState {
    schedule: Vec<BurnInGroup>,
    phase: usize,
    phase_round: u64,
    see: SeeState,
}

impl TargetedSeeState {
    pub fn new(n: usize, m: usize, t0: u64) -> Result<Self> {
        Ok(Self {
            schedule: targeted_m_schedule(n, m, t0)?,
            phase: 0,
            phase_round: 0,
            see: SeeState::new(n),
        })
    }

    pub fn burn_in_rounds(&self) -> u64 {
        self.schedule.iter().map(|g| g.rounds).sum()
    }

    pub fn in_burn_in(&self) -> bool {
        self.phase < self.schedule.len()
    }

    pub fn see(&self) -> &SeeState {
        &self.see
    }
}

pub fn targeted_see_round(
    state: &TargetedSeeState,
    table: &EstimatorTable,
) -> (TargetedSeeState, Vec<usize>) {
    let mut next = state.clone();
    if next.phase < next.schedule.len() {
        let play = next.schedule[next.phase].experts.clone();
        next.phase_round += 1;
        if next.phase_round >= next.schedule[next.phase].rounds {
            next.phase += 1;
            next.phase_round = 0;
        }
        return (next, play);
    }
    let (see, play) = see_round(&next.see, table);
    next.see = see;
    (next, play)
}

/// UCB1 over an enumerated committee-arm space.
#[derive(Debug, Clone)]
pub struct CucbState {
    arms: Vec<Vec<usize>>,
    counts: Vec<u64>,
    sums: Vec<f64>,
    plays: u64,
}

impl CucbState {
    /// All nonempty subsets as arms; intended for N <= 10.
    pub fn all_subsets(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyCommittee);
        }
        if n > 10 {
            return Err(Error::ExactSolveLimit { n, limit: 10 });
        }
        let arms = (1usize..1 << n)
            .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
            .collect();
        Ok(Self::from_arms(arms))
    }

    /// Prefix arms of a given expert ordering; the committee-size analogue of
    /// top-K selection, used when the full subset space is too large.
    pub fn prefixes(order: &[usize]) -> Result<Self> {
        if order.is_empty() {
            return Err(Error::EmptyCommittee);
        }
        let arms = (1..=order.len()).map(|k| order[..k].to_vec()).collect();
        Ok(Self::from_arms(arms))
    }

    fn from_arms(arms: Vec<Vec<usize>>) -> Self {
        let k = arms.len();
        Self {
            arms,
            counts: vec![0; k],
            sums: vec![0.0; k],
            plays: 0,
        }
    }

    pub fn arms(&self) -> &[Vec<usize>] {
        &self.arms
    }

    /// Unplayed arms first (lowest index), then the highest UCB index
    /// mean + sqrt(2 ln t / n).
    pub fn select(&self) -> usize {
        if let Some(idx) = self.counts.iter().position(|&c| c == 0) {
            return idx;
        }
        let t = self.plays.max(1) as f64;
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (idx, (&count, &sum)) in self.counts.iter().zip(&self.sums).enumerate() {
            let score = sum / count as f64 + (2.0 * t.ln() / count as f64).sqrt();
            if score > best_score {
                best_score = score;
                best = idx;
            }
        }
        best
    }

    pub fn observe(&mut self, arm: usize, reward: f64) {
        self.counts[arm] += 1;
        self.sums[arm] += reward;
        self.plays += 1;
    }
}

/// Zooming over a fixed lattice of weight vectors on the simplex
/// ||theta||_1 = 2Q, with L1 distances and horizon-scaled radii.
#[derive(Debug, Clone)]
pub struct ZoomingState {
    arms: Vec<Vec<f64>>,
    quota: f64,
    active: Vec<bool>,
    counts: Vec<u64>,
    sums: Vec<f64>,
    ln_horizon: f64,
    /// Last active arm seen covering this inactive arm; rescan only when the
    /// witness's ball has shrunk away.
    cover_witness: Vec<Option<usize>>,
}

/// The candidate lattice: seeded random simplex points plus the dictator
/// vertices and the equal-weight point, all summing to 2Q.
pub fn zooming_candidates(
    n: usize,
    quota: f64,
    lattice: usize,
    rng: &mut impl Rng,
) -> Vec<Vec<f64>> {
    let budget = 2.0 * quota;
    let mut arms = Vec::with_capacity(lattice + n + 1);
    for i in 0..n {
        let mut v = vec![0.0; n];
        v[i] = budget;
        arms.push(v);
    }
    arms.push(vec![budget / n as f64; n]);
    for _ in 0..lattice {
        // Exponential spacings normalize to a uniform simplex point.
        let mut v: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
        let s: f64 = v.iter().sum();
        for x in &mut v {
            *x *= budget / s;
        }
        arms.push(v);
    }
    arms
}

fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

impl ZoomingState {
    pub fn new(arms: Vec<Vec<f64>>, quota: f64, horizon: f64) -> Self {
        let k = arms.len();
        Self {
            arms,
            quota,
            active: vec![false; k],
            counts: vec![0; k],
            sums: vec![0.0; k],
            ln_horizon: horizon.max(1.0).ln(),
            cover_witness: vec![None; k],
        }
    }

    pub fn arm(&self, idx: usize) -> &[f64] {
        &self.arms[idx]
    }

    pub fn quota(&self) -> f64 {
        self.quota
    }

    /// Confidence radius sqrt(2 log T / n); infinite for an unplayed arm.
    pub fn radius(&self, idx: usize) -> f64 {
        if self.counts[idx] == 0 {
            f64::INFINITY
        } else {
            (2.0 * self.ln_horizon / self.counts[idx] as f64).sqrt()
        }
    }

    fn covers(&self, y: usize, x: usize) -> bool {
        self.active[y] && l1_distance(&self.arms[x], &self.arms[y]) <= self.radius(y)
    }

    /// Activate candidates not covered by any active arm's radius, then play
    /// the active arm with the best optimistic index. An arm activated
    /// mid-scan covers the rest of the scan with its unplayed (infinite)
    /// radius, so at most one arm activates per round.
    pub fn select(&mut self) -> usize {
        if !self.active.iter().any(|&a| a) {
            self.active[0] = true;
            return 0;
        }
        for idx in 0..self.arms.len() {
            if self.active[idx] {
                continue;
            }
            if let Some(y) = self.cover_witness[idx] {
                if self.covers(y, idx) {
                    continue;
                }
            }
            match (0..self.arms.len()).find(|&y| self.covers(y, idx)) {
                Some(y) => self.cover_witness[idx] = Some(y),
                None => {
                    self.active[idx] = true;
                    self.cover_witness[idx] = None;
                }
            }
        }
        let mut best = usize::MAX;
        let mut best_score = f64::NEG_INFINITY;
        for idx in 0..self.arms.len() {
            if !self.active[idx] {
                continue;
            }
            let score = if self.counts[idx] == 0 {
                f64::INFINITY
            } else {
                self.sums[idx] / self.counts[idx] as f64 + self.radius(idx)
            };
            if score > best_score {
                best_score = score;
                best = idx;
            }
        }
        best
    }

    pub fn observe(&mut self, arm: usize, reward: f64) {
        self.counts[arm] += 1;
        self.sums[arm] += reward;
    }
}

/// What an algorithm put on the table in one round.
#[derive(Debug, Clone, PartialEq)]
pub enum Play {
    Committee(Vec<usize>),
    Weights { theta: Vec<f64>, quota: f64 },
}

impl Play {
    /// Compact digest for trace files: committee bitmask or weight list.
    pub fn digest(&self) -> String {
        match self {
            Play::Committee(members) => {
                let mask: u64 = members.iter().fold(0, |m, &i| m | (1 << i));
                format!("c{mask:x}")
            }
            Play::Weights { theta, .. } => {
                let parts: Vec<String> = theta.iter().map(|w| format!("{w:.6}")).collect();
                format!("w{}", parts.join("|"))
            }
        }
    }
}

/// Expected accuracy of a play under the true competencies.
pub fn played_value(p_true: &[f64], play: &Play) -> Result<f64> {
    match play {
        Play::Committee(members) => {
            let chosen: Vec<f64> = members.iter().map(|&i| p_true[i]).collect();
            p_maj_egalitarian_dp(&chosen)
        }
        Play::Weights { theta, quota } => p_maj_weighted(p_true, theta, *quota),
    }
}

/// Instantaneous expected regret of a played configuration.
pub fn regret_step(p_true: &[f64], play: &Play, optimum_value: f64) -> Result<f64> {
    Ok(optimum_value - played_value(p_true, play)?)
}

/// Per-round regret record of one trial.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub instantaneous: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub digests: Vec<String>,
}

impl RegretTrace {
    pub fn push(&mut self, instantaneous: f64, digest: String) {
        let prev = self.cumulative.last().copied().unwrap_or(0.0);
        self.instantaneous.push(instantaneous);
        self.cumulative.push(prev + instantaneous);
        self.digests.push(digest);
    }

    /// Total cumulative regret R_T.
    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.instantaneous.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instantaneous.is_empty()
    }
}
