//! Exact majority-voting accuracy, advantage functions, optimal egalitarian
//! committee construction, log-odds weights, and related diagnostics.
//!
//! All functions here are pure and operate on competency slices; experts are
//! assumed independent. Two routes exist for the egalitarian accuracy: full
//! scenario enumeration (reference, exponential) and a count-distribution
//! dynamic program (production, O(N^2)). They agree to 1e-12 and the tests
//! hold them to it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mip::{scenario_probs, CoalitionFamily};

/// Hard cap for scenario enumeration routes.
pub const ENUMERATION_LIMIT: usize = 25;
/// Hard cap for the brute-force committee oracle.
pub const BRUTE_FORCE_LIMIT: usize = 15;

/// A chosen expert subset together with its egalitarian voting accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Committee {
    /// Member indices into the competency vector the committee was built from.
    pub members: Vec<usize>,
    /// Its egalitarian majority-vote accuracy.
    pub value: f64,
}

fn validate_probs(p: &[f64]) -> Result<()> {
    for &x in p {
        if !(0.0..=1.0).contains(&x) || x.is_nan() {
            return Err(Error::InvalidProbability(x));
        }
    }
    Ok(())
}

/// Majority-vote accuracy of a committee by full scenario enumeration:
/// strict-majority scenarios count fully, exact ties (even committees) count
/// half.
pub fn p_maj_egalitarian(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::EmptyCommittee);
    }
    if p.len() > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            n: p.len(),
            limit: ENUMERATION_LIMIT,
        });
    }
    validate_probs(p)?;
    let n = p.len();
    let mut total = 0.0;
    for mask in 0u32..(1u32 << n) {
        let correct = mask.count_ones() as usize;
        if 2 * correct < n {
            continue;
        }
        let mut prob = 1.0;
        for (i, &pi) in p.iter().enumerate() {
            if mask & (1 << i) != 0 {
                prob *= pi;
            } else {
                prob *= 1.0 - pi;
            }
        }
        if 2 * correct > n {
            total += prob;
        } else {
            total += 0.5 * prob;
        }
    }
    Ok(total)
}

/// Egalitarian accuracy via the distribution of the correct-vote count.
///
/// `dp[k]` is the probability that exactly `k` members vote correctly; one
/// pass per expert updates it in place. Equivalent to [`p_maj_egalitarian`]
/// without the exponential blowup.
pub fn p_maj_egalitarian_dp(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::EmptyCommittee);
    }
    validate_probs(p)?;
    Ok(count_distribution_accuracy(p))
}

/// Internal variant with the convention value(empty) = 0.
fn p_maj_or_zero(p: &[f64]) -> f64 {
    if p.is_empty() {
        0.0
    } else {
        count_distribution_accuracy(p)
    }
}

fn count_distribution_accuracy(p: &[f64]) -> f64 {
    let n = p.len();
    let mut dp = vec![0.0f64; n + 1];
    dp[0] = 1.0;
    for (used, &pi) in p.iter().enumerate() {
        for k in (0..=used + 1).rev() {
            let stay = if k <= used { dp[k] * (1.0 - pi) } else { 0.0 };
            let gain = if k > 0 { dp[k - 1] * pi } else { 0.0 };
            dp[k] = stay + gain;
        }
    }
    let mut total = 0.0;
    for (k, &prob) in dp.iter().enumerate() {
        if 2 * k > n {
            total += prob;
        } else if 2 * k == n {
            total += 0.5 * prob;
        }
    }
    total
}

/// Weighted majority-vote accuracy: the probability mass of coalitions whose
/// total weight strictly exceeds the quota. Exact-quota coalitions lose.
pub fn p_maj_weighted(p: &[f64], theta: &[f64], quota: f64) -> Result<f64> {
    if p.len() != theta.len() {
        return Err(Error::InvalidParameter {
            name: "theta",
            reason: format!("length {} does not match {} experts", theta.len(), p.len()),
        });
    }
    if quota <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "quota",
            reason: format!("must be positive, got {quota}"),
        });
    }
    if let Some(&w) = theta.iter().find(|w| **w < 0.0 || w.is_nan()) {
        return Err(Error::InvalidParameter {
            name: "theta",
            reason: format!("weights must be nonnegative, got {w}"),
        });
    }
    if p.len() > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            n: p.len(),
            limit: ENUMERATION_LIMIT,
        });
    }
    validate_probs(p)?;
    let n = p.len();
    let mut total = 0.0;
    for mask in 0u32..(1u32 << n) {
        let mut weight = 0.0;
        for i in 0..n {
            if mask & (1 << i) != 0 {
                weight += theta[i];
            }
        }
        if weight <= quota {
            continue;
        }
        let mut prob = 1.0;
        for (i, &pi) in p.iter().enumerate() {
            if mask & (1 << i) != 0 {
                prob *= pi;
            } else {
                prob *= 1.0 - pi;
            }
        }
        total += prob;
    }
    Ok(total)
}

/// Change in egalitarian accuracy from adding `addition` to `candidate`,
/// with value(empty) = 0. The two sets must be disjoint.
pub fn advantage(p: &[f64], candidate: &[usize], addition: &[usize]) -> Result<f64> {
    validate_probs(p)?;
    let mut seen = vec![false; p.len()];
    for &i in candidate.iter().chain(addition) {
        if i >= p.len() {
            return Err(Error::InvalidParameter {
                name: "members",
                reason: format!("expert {i} out of range for {} competencies", p.len()),
            });
        }
        if seen[i] {
            return Err(Error::OverlappingCommittees(i));
        }
        seen[i] = true;
    }
    let base: Vec<f64> = candidate.iter().map(|&i| p[i]).collect();
    let mut joint = base.clone();
    joint.extend(addition.iter().map(|&i| p[i]));
    Ok(p_maj_or_zero(&joint) - p_maj_or_zero(&base))
}

/// Advantage evaluated with pessimistic competencies for the kept set and
/// optimistic competencies for the candidate-removal set. Nonpositive values
/// certify that dropping the candidates cannot hurt.
pub fn conservative_advantage(
    kept_pessimistic: &[f64],
    addition_optimistic: &[f64],
) -> Result<f64> {
    validate_probs(kept_pessimistic)?;
    validate_probs(addition_optimistic)?;
    let mut joint = kept_pessimistic.to_vec();
    joint.extend_from_slice(addition_optimistic);
    Ok(p_maj_or_zero(&joint) - p_maj_or_zero(kept_pessimistic))
}

fn ensure_sorted_descending(p: &[f64]) -> Result<()> {
    for i in 1..p.len() {
        if p[i] > p[i - 1] {
            return Err(Error::NotSorted(i));
        }
    }
    Ok(())
}

/// Optimal egalitarian committee over a descending competency vector: the
/// best Top-K prefix, scanning K = 1..N. Ties break toward the smaller K.
pub fn oec_prefix(p_sorted: &[f64]) -> Result<Committee> {
    if p_sorted.is_empty() {
        return Err(Error::EmptyCommittee);
    }
    validate_probs(p_sorted)?;
    ensure_sorted_descending(p_sorted)?;
    let mut best_k = 1;
    let mut best_value = count_distribution_accuracy(&p_sorted[..1]);
    for k in 2..=p_sorted.len() {
        let value = count_distribution_accuracy(&p_sorted[..k]);
        if value > best_value {
            best_value = value;
            best_k = k;
        }
    }
    Ok(Committee {
        members: (0..best_k).collect(),
        value: best_value,
    })
}

/// Greedy committee construction: sort by competency, start from the best
/// expert, and repeatedly extend by the shortest run of next-best experts
/// whose joint advantage is strictly positive. Runs of length two matter:
/// adding a single expert to an odd committee often gains nothing while
/// adding a pair does.
///
/// Members refer to positions in the *input* vector.
pub fn greedy_oec(p: &[f64]) -> Result<Committee> {
    if p.is_empty() {
        return Err(Error::EmptyCommittee);
    }
    validate_probs(p)?;
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[b].partial_cmp(&p[a]).unwrap().then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| p[i]).collect();

    let mut k = 1;
    let mut value = count_distribution_accuracy(&sorted[..1]);
    loop {
        let mut extended = false;
        for next in k + 1..=sorted.len() {
            let candidate = count_distribution_accuracy(&sorted[..next]);
            if candidate > value {
                k = next;
                value = candidate;
                extended = true;
                break;
            }
        }
        if !extended {
            break;
        }
    }
    let mut members: Vec<usize> = order[..k].to_vec();
    members.sort_unstable();
    Ok(Committee { members, value })
}

/// Oracle: maximize egalitarian accuracy over all nonempty subsets. Ties
/// break toward smaller committees, then lexicographically. Test support
/// only; exponential in N.
pub fn brute_force_oec(p: &[f64]) -> Result<Committee> {
    if p.is_empty() {
        return Err(Error::EmptyCommittee);
    }
    if p.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::ExactSolveLimit {
            n: p.len(),
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    validate_probs(p)?;
    let n = p.len();
    let mut best: Option<(f64, u32)> = None;
    let mut scratch = Vec::with_capacity(n);
    for mask in 1u32..(1u32 << n) {
        scratch.clear();
        for (i, &pi) in p.iter().enumerate() {
            if mask & (1 << i) != 0 {
                scratch.push(pi);
            }
        }
        let value = count_distribution_accuracy(&scratch);
        let better = match best {
            None => true,
            Some((bv, bm)) => {
                value > bv
                    || (value == bv
                        && (mask.count_ones() < bm.count_ones()
                            || (mask.count_ones() == bm.count_ones() && mask < bm)))
            }
        };
        if better {
            best = Some((value, mask));
        }
    }
    let (value, mask) = best.unwrap();
    let members = (0..n).filter(|i| mask & (1 << i) != 0).collect();
    Ok(Committee { members, value })
}

/// Log-odds weights log(p / (1 - p)), the optimal per-expert weights for
/// binary outcomes.
pub fn log_odds_weights(p: &[f64]) -> Result<Vec<f64>> {
    p.iter()
        .map(|&pi| {
            if !(0.0..=1.0).contains(&pi) || pi.is_nan() {
                Err(Error::InvalidProbability(pi))
            } else if pi == 0.0 || pi == 1.0 {
                Err(Error::DegenerateCompetency(pi))
            } else {
                Ok((pi / (1.0 - pi)).ln())
            }
        })
        .collect()
}

const SIGN_TOLERANCE: f64 = 1e-12;

fn sign_of(x: f64) -> i8 {
    if x > SIGN_TOLERANCE {
        1
    } else if x < -SIGN_TOLERANCE {
        -1
    } else {
        0
    }
}

/// Largest confidence radius at which the conservative advantage keeps the
/// same sign as the true advantage across every competency-ordered bisection.
///
/// Found by bisection on the radius over [0, 1] to 1e-6 absolute tolerance;
/// each probe checks all N-1 bisections. A single expert has no bisection and
/// returns the cap 1.0.
pub fn consistency_gap(p_sorted: &[f64]) -> Result<f64> {
    if p_sorted.is_empty() {
        return Err(Error::EmptyCommittee);
    }
    validate_probs(p_sorted)?;
    ensure_sorted_descending(p_sorted)?;
    let n = p_sorted.len();
    if n == 1 {
        return Ok(1.0);
    }

    let true_signs: Vec<i8> = (1..n)
        .map(|j| {
            let a = p_maj_or_zero(p_sorted) - p_maj_or_zero(&p_sorted[..j]);
            sign_of(a)
        })
        .collect();

    let admissible = |radius: f64| -> bool {
        for j in 1..n {
            let kept: Vec<f64> = p_sorted[..j]
                .iter()
                .map(|&x| (x - radius).max(0.0))
                .collect();
            let mut joint = kept.clone();
            joint.extend(p_sorted[j..].iter().map(|&x| (x + radius).min(1.0)));
            let a = p_maj_or_zero(&joint) - p_maj_or_zero(&kept);
            if sign_of(a) != true_signs[j - 1] {
                return false;
            }
        }
        true
    };

    if admissible(1.0) {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if admissible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Checks the scenario-probability bounding inequality
/// sum(p_upper) - z'p_S(upper) >= sum(p_lower) - z'p_S(lower)
/// for a given coalition family.
pub fn check_bounding_assumption(
    p_upper: &[f64],
    p_lower: &[f64],
    family: &CoalitionFamily,
) -> Result<bool> {
    validate_probs(p_upper)?;
    validate_probs(p_lower)?;
    if p_upper.len() != p_lower.len() {
        return Err(Error::InvalidParameter {
            name: "p_lower",
            reason: "length mismatch with p_upper".into(),
        });
    }
    for (i, (&hi, &lo)) in p_upper.iter().zip(p_lower).enumerate() {
        if lo > hi {
            return Err(Error::InvalidParameter {
                name: "p_lower",
                reason: format!("entry {i} exceeds p_upper"),
            });
        }
    }
    let upper = scenario_probs(p_upper)?;
    let lower = scenario_probs(p_lower)?;
    let lhs: f64 = p_upper.iter().sum::<f64>() - family.dot(&upper);
    let rhs: f64 = p_lower.iter().sum::<f64>() - family.dot(&lower);
    Ok(lhs >= rhs - 1e-12)
}
