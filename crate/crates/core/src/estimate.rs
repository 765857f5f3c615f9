//! Per-expert competency estimation: empirical means, confidence radii,
//! breakage detection, and PAC sample thresholds.
//!
//! Tables are immutable snapshots. Every operation returns a value or a new
//! table, so snapshots can be shared freely across threads; the round loop
//! advances by replacing its snapshot.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of an expert, stable for the lifetime of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExpertId(pub usize);

impl std::fmt::Display for ExpertId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// Confidence-parameter schedule for the radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DeltaMode {
    /// Horizon known up front: delta = 1/T for the whole run.
    FixedHorizon { horizon: u64 },
    /// No horizon: delta shrinks as 1/t_i^2 in the expert's own sample count.
    Anytime,
}

impl DeltaMode {
    fn delta(&self, samples: u64) -> f64 {
        match *self {
            DeltaMode::FixedHorizon { horizon } => 1.0 / horizon.max(1) as f64,
            DeltaMode::Anytime => {
                let t = samples.max(1) as f64;
                1.0 / (t * t)
            }
        }
    }
}

/// A two-sided confidence interval clamped to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
}

impl ConfidenceInterval {
    /// The vacuous interval of an unsampled expert.
    pub const VACUOUS: ConfidenceInterval = ConfidenceInterval {
        lower: 0.0,
        upper: 1.0,
    };

    /// True when `other` lies strictly below this interval: upper(other) < lower(self).
    pub fn strictly_above(&self, other: &ConfidenceInterval) -> bool {
        other.upper < self.lower
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct ExpertStats {
    samples: u64,
    successes: u64,
    variance_bound: f64,
}

/// Per-expert observation counts and empirical competencies with confidence radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorTable {
    stats: Vec<ExpertStats>,
    delta_mode: DeltaMode,
}

/// Default sub-Gaussian variance bound: the worst case for a Bernoulli mean.
pub const DEFAULT_VARIANCE_BOUND: f64 = 0.25;

impl EstimatorTable {
    /// Fresh table for `n` experts with the default variance bound.
    pub fn new(n: usize, delta_mode: DeltaMode) -> Self {
        Self::with_variance_bounds(vec![DEFAULT_VARIANCE_BOUND; n], delta_mode)
    }

    /// Fresh table with a per-expert variance bound (each in (0, 0.25]).
    pub fn with_variance_bounds(bounds: Vec<f64>, delta_mode: DeltaMode) -> Self {
        let stats = bounds
            .into_iter()
            .map(|variance_bound| ExpertStats {
                samples: 0,
                successes: 0,
                variance_bound,
            })
            .collect();
        Self { stats, delta_mode }
    }

    /// Table seeded with explicit (samples, successes) counts per expert.
    pub fn from_counts(counts: &[(u64, u64)], delta_mode: DeltaMode) -> Self {
        let stats = counts
            .iter()
            .map(|&(samples, successes)| ExpertStats {
                samples,
                successes: successes.min(samples),
                variance_bound: DEFAULT_VARIANCE_BOUND,
            })
            .collect();
        Self { stats, delta_mode }
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn delta_mode(&self) -> DeltaMode {
        self.delta_mode
    }

    pub fn samples(&self, i: ExpertId) -> u64 {
        self.stats[i.0].samples
    }

    pub fn successes(&self, i: ExpertId) -> u64 {
        self.stats[i.0].successes
    }

    /// Empirical competency, or 0.5 for an unsampled expert (midpoint of the
    /// vacuous interval; callers should gate on `samples` when it matters).
    pub fn mean(&self, i: ExpertId) -> f64 {
        let s = &self.stats[i.0];
        if s.samples == 0 {
            0.5
        } else {
            s.successes as f64 / s.samples as f64
        }
    }

    /// Returns a copy with one more observation recorded per listed expert;
    /// experts not listed are untouched.
    pub fn update_estimates(&self, outcomes: &[(ExpertId, bool)]) -> EstimatorTable {
        let mut next = self.clone();
        for &(id, correct) in outcomes {
            let s = &mut next.stats[id.0];
            s.samples += 1;
            if correct {
                s.successes += 1;
            }
        }
        next
    }

    /// Shrinkage radius sqrt(2 sigma_i^2 log(4/delta) / t_i).
    ///
    /// An unsampled expert gets the maximal radius 1.0 so its interval is the
    /// whole of [0, 1], forcing initial exploration.
    pub fn ucb_radius(&self, i: ExpertId) -> f64 {
        let s = &self.stats[i.0];
        if s.samples == 0 {
            return 1.0;
        }
        let delta = self.delta_mode.delta(s.samples);
        (2.0 * s.variance_bound * (4.0 / delta).ln() / s.samples as f64).sqrt()
    }

    /// p-hat +- radius, clamped to [0, 1]. Unsampled experts yield [0, 1].
    pub fn interval(&self, i: ExpertId) -> ConfidenceInterval {
        if self.stats[i.0].samples == 0 {
            return ConfidenceInterval::VACUOUS;
        }
        let mean = self.mean(i);
        let radius = self.ucb_radius(i);
        ConfidenceInterval {
            lower: (mean - radius).max(0.0),
            upper: (mean + radius).min(1.0),
        }
    }

    /// All intervals, indexed by expert.
    pub fn intervals(&self) -> Vec<ConfidenceInterval> {
        (0..self.len())
            .map(|i| self.interval(ExpertId(i)))
            .collect()
    }

    /// Optimistic estimate min(1, p-hat + radius).
    pub fn optimistic(&self, i: ExpertId) -> f64 {
        self.interval(i).upper
    }

    /// Pessimistic estimate max(0, p-hat - radius).
    pub fn pessimistic(&self, i: ExpertId) -> f64 {
        self.interval(i).lower
    }

    /// Every ordered pair (i, j) whose intervals are strictly disjoint with i
    /// above j. Pairs are sorted descending by p-hat of i, then descending by
    /// p-hat of j.
    pub fn detect_breakages(&self) -> Vec<(ExpertId, ExpertId)> {
        let ids: Vec<ExpertId> = (0..self.len()).map(ExpertId).collect();
        self.detect_breakages_among(&ids)
    }

    /// Breakage detection restricted to a candidate subset.
    pub fn detect_breakages_among(&self, candidates: &[ExpertId]) -> Vec<(ExpertId, ExpertId)> {
        let mut pairs = Vec::new();
        for &i in candidates {
            let hi = self.interval(i);
            for &j in candidates {
                if i == j {
                    continue;
                }
                if hi.strictly_above(&self.interval(j)) {
                    pairs.push((i, j));
                }
            }
        }
        pairs.sort_by(|a, b| {
            self.mean(b.0)
                .partial_cmp(&self.mean(a.0))
                .unwrap()
                .then(self.mean(b.1).partial_cmp(&self.mean(a.1)).unwrap())
                .then(a.cmp(b))
        });
        pairs
    }
}

/// Smallest integer t0 with t0 >= 32 sigma^2 log(4/delta) / gap^2: the sample
/// count after which a breakage across `gap` holds with probability 1 - delta.
pub fn pac_threshold(variance_bound: f64, delta: f64, gap: f64) -> Result<u64> {
    if gap == 0.0 {
        return Err(Error::DegenerateGap);
    }
    if gap < 0.0 {
        return Err(Error::InvalidParameter {
            name: "gap",
            reason: format!("must be positive, got {gap}"),
        });
    }
    // log(4/delta) must stay positive; delta is normally in (0,1) but the
    // formula is well-defined up to 4.
    if delta <= 0.0 || delta >= 4.0 {
        return Err(Error::InvalidParameter {
            name: "delta",
            reason: format!("must be in (0,4), got {delta}"),
        });
    }
    let t0 = 32.0 * variance_bound * (4.0 / delta).ln() / (gap * gap);
    Ok(t0.ceil() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(horizon: u64) -> DeltaMode {
        DeltaMode::FixedHorizon { horizon }
    }

    #[test]
    fn counting_updates() {
        let t = EstimatorTable::new(2, fixed(100));
        let t = t.update_estimates(&[(ExpertId(0), true)]);
        assert_eq!(t.samples(ExpertId(0)), 1);
        assert_eq!(t.successes(ExpertId(0)), 1);
        assert_eq!(t.mean(ExpertId(0)), 1.0);
        assert_eq!(t.samples(ExpertId(1)), 0);

        let mut t4 = EstimatorTable::new(1, fixed(100));
        for correct in [true, false, true, false] {
            t4 = t4.update_estimates(&[(ExpertId(0), correct)]);
        }
        let t5 = t4.update_estimates(&[(ExpertId(0), false)]);
        assert_eq!(t5.samples(ExpertId(0)), 5);
        assert_eq!(t5.successes(ExpertId(0)), 2);
        assert!((t5.mean(ExpertId(0)) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn update_is_order_insensitive() {
        // Final counts depend only on the tally of outcomes, not their order.
        let outcomes = [true, false, false, true, true, false, true];
        let mut forward = EstimatorTable::new(1, fixed(10));
        for &c in &outcomes {
            forward = forward.update_estimates(&[(ExpertId(0), c)]);
        }
        let mut backward = EstimatorTable::new(1, fixed(10));
        for &c in outcomes.iter().rev() {
            backward = backward.update_estimates(&[(ExpertId(0), c)]);
        }
        assert_eq!(forward, backward);
    }

    #[test]
    fn radius_closed_form() {
        // sigma^2 = 0.25, delta = 0.04, t = 100 -> sqrt(0.5 ln(100) / 100)
        let mut t = EstimatorTable::new(1, fixed(25)); // delta = 1/25 = 0.04
        for _ in 0..100 {
            t = t.update_estimates(&[(ExpertId(0), true)]);
        }
        let r = t.ucb_radius(ExpertId(0));
        assert!((r - 0.151742).abs() < 1e-6, "radius {r}");
    }

    #[test]
    fn radius_unsampled_is_vacuous() {
        let t = EstimatorTable::new(1, fixed(100));
        assert_eq!(t.ucb_radius(ExpertId(0)), 1.0);
        assert_eq!(t.interval(ExpertId(0)), ConfidenceInterval::VACUOUS);
    }

    #[test]
    fn radius_inverse_sqrt_scaling() {
        let mut t1 = EstimatorTable::new(1, fixed(1000));
        for _ in 0..50 {
            t1 = t1.update_estimates(&[(ExpertId(0), true)]);
        }
        let mut t4 = t1.clone();
        for _ in 0..150 {
            t4 = t4.update_estimates(&[(ExpertId(0), true)]);
        }
        let r1 = t1.ucb_radius(ExpertId(0));
        let r4 = t4.ucb_radius(ExpertId(0));
        assert!((r1 / r4 - 2.0).abs() < 1e-12, "quadrupling t halves radius");
    }

    #[test]
    fn radius_monotone_shrinkage() {
        // Strictly decreasing in t for fixed delta and sigma^2.
        let mut t = EstimatorTable::new(1, fixed(20_000));
        let mut prev = f64::INFINITY;
        for _ in 0..10_000u32 {
            t = t.update_estimates(&[(ExpertId(0), true)]);
            let r = t.ucb_radius(ExpertId(0));
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn pac_threshold_values() {
        assert_eq!(pac_threshold(0.25, 0.05, 0.1).unwrap(), 3506);
        // log term exactly 1 when delta = 4/e
        let t = pac_threshold(0.25, 4.0 / std::f64::consts::E, 1.0).unwrap();
        assert_eq!(t, 8);
        assert!(matches!(
            pac_threshold(0.25, 0.05, 0.0),
            Err(Error::DegenerateGap)
        ));
    }

    #[test]
    fn pac_threshold_quadratic_scaling() {
        let t1 = pac_threshold(0.25, 0.05, 0.1).unwrap() as f64;
        let t2 = pac_threshold(0.25, 0.05, 0.2).unwrap() as f64;
        assert!((t1 / t2 - 4.0).abs() < 0.01, "doubling gap divides t0 by 4");
    }

    #[test]
    fn interval_clamping() {
        // p-hat = 0.99 with a radius around 0.05 clamps the upper end to 1.
        let mut t = EstimatorTable::new(1, fixed(1_000_000));
        for k in 0..100 {
            t = t.update_estimates(&[(ExpertId(0), k != 0)]);
        }
        let iv = t.interval(ExpertId(0));
        assert!(iv.upper <= 1.0 && iv.lower >= 0.0 && iv.lower <= iv.upper);
    }

    #[test]
    fn breakage_direct_inequality() {
        // Hand-built stats: p-hat [0.9, 0.5] with radii small enough to separate.
        let mut t = EstimatorTable::new(2, fixed(10_000));
        for k in 0..1000 {
            t = t.update_estimates(&[(ExpertId(0), k % 10 != 0), (ExpertId(1), k % 2 == 0)]);
        }
        // radii ~ sqrt(0.5*10.6/1000) ~ 0.073; 0.5+0.073 < 0.9-0.073
        let pairs = t.detect_breakages();
        assert_eq!(pairs, vec![(ExpertId(0), ExpertId(1))]);
    }

    #[test]
    fn breakage_overlap_is_empty() {
        let mut t = EstimatorTable::new(2, fixed(100));
        for k in 0..20 {
            t = t.update_estimates(&[(ExpertId(0), k % 5 != 0), (ExpertId(1), k % 2 == 0)]);
        }
        // Radii ~ sqrt(0.5*ln(400)/20) ~ 0.39: intervals overlap.
        assert!(t.detect_breakages().is_empty());
    }

    #[test]
    fn breakage_transitive_separation() {
        let mut t = EstimatorTable::new(3, fixed(100_000));
        for k in 0..5000u32 {
            t = t.update_estimates(&[
                (ExpertId(0), k % 20 != 0), // ~0.95
                (ExpertId(1), k % 2 == 0),  // 0.5
                (ExpertId(2), k % 20 == 0), // ~0.05
            ]);
        }
        let pairs = t.detect_breakages();
        assert_eq!(
            pairs,
            vec![
                (ExpertId(0), ExpertId(1)),
                (ExpertId(0), ExpertId(2)),
                (ExpertId(1), ExpertId(2)),
            ]
        );
    }
}
