//! Earth Mover's Distance assignments under squared Euclidean ground cost.
//!
//! [`solve_exact`] runs a shortest-augmenting-path Hungarian method, O(n^3).
//! [`solve_approx`] is an epsilon-scaling forward auction for large clouds.
//! [`solve_unbalanced`] replicates the smaller cloud so that every point
//! carries integer mass and the replicated instance is square.

use std::collections::VecDeque;

use crate::cloud::{squared_distance, PointCloud};
use crate::error::{Error, Result};

/// Above this size [`solve`] switches from the Hungarian method to the auction.
pub const EXACT_LIMIT: usize = 1024;

/// Default bid budget for [`solve_approx`].
pub const DEFAULT_BID_BUDGET: usize = 50_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentPlan {
    source_to_target: Vec<usize>,
    pairs: Vec<(usize, usize)>,
    cost: f64,
    n_target: usize,
}

impl AssignmentPlan {
    /// One target per source. For a replicated source this is the nearest of
    /// the targets it carries.
    pub fn source_to_target(&self) -> &[usize] {
        &self.source_to_target
    }

    /// Every matched `(source, target)` pair, sorted. Balanced plans have one
    /// pair per source; replicated plans have one pair per unit of mass.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn n_source(&self) -> usize {
        self.source_to_target.len()
    }

    pub fn n_target(&self) -> usize {
        self.n_target
    }

    pub fn is_balanced(&self) -> bool {
        self.n_source() == self.n_target
    }

    /// Recomputed transport cost of the stored pairs.
    pub fn recompute_cost(&self, source: &PointCloud, target: &PointCloud) -> f64 {
        plan_cost(source, target, &self.pairs)
    }

    fn from_pairs(source: &PointCloud, target: &PointCloud, mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        let mut source_to_target = vec![usize::MAX; source.len()];
        let mut best = vec![f64::INFINITY; source.len()];
        for &(s, t) in &pairs {
            let d = source.squared_distance(s, target, t);
            if d < best[s] {
                best[s] = d;
                source_to_target[s] = t;
            }
        }
        let cost = plan_cost(source, target, &pairs);
        Self {
            source_to_target,
            pairs,
            cost,
            n_target: target.len(),
        }
    }
}

/// Sum of squared pair distances, accumulated in ascending order so the
/// result does not depend on point ordering.
fn plan_cost(source: &PointCloud, target: &PointCloud, pairs: &[(usize, usize)]) -> f64 {
    let mut terms: Vec<f64> = pairs
        .iter()
        .map(|&(s, t)| source.squared_distance(s, target, t))
        .collect();
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

fn check_inputs(source: &PointCloud, target: &PointCloud) -> Result<()> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if source.dim() != target.dim() {
        return Err(Error::SizeMismatch(format!(
            "dimension {} vs {}",
            source.dim(),
            target.dim()
        )));
    }
    Ok(())
}

fn cost_matrix(source: &PointCloud, target: &PointCloud) -> Vec<f64> {
    let mut c = Vec::with_capacity(source.len() * target.len());
    for s in source.points() {
        for t in target.points() {
            c.push(squared_distance(s, t));
        }
    }
    c
}

/// Minimum-cost perfect matching on a square `n x n` row-major matrix.
/// Returns the column assigned to each row.
pub fn hungarian(n: usize, cost: &[f64]) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    // 1-based potentials; column 0 is the virtual root of each search.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            assignment[row_of[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Globally optimal bijection between equal-size clouds.
pub fn solve_exact(source: &PointCloud, target: &PointCloud) -> Result<AssignmentPlan> {
    check_inputs(source, target)?;
    if source.len() != target.len() {
        return Err(Error::SizeMismatch(format!(
            "{} source vs {} target points",
            source.len(),
            target.len()
        )));
    }
    let n = source.len();
    let assignment = hungarian(n, &cost_matrix(source, target));
    let pairs = assignment.into_iter().enumerate().collect();
    Ok(AssignmentPlan::from_pairs(source, target, pairs))
}

/// Exact transport between clouds of any sizes. Each point of the smaller
/// cloud carries either `floor(M/m)` or `ceil(M/m)` units so the totals match.
pub fn solve_unbalanced(source: &PointCloud, target: &PointCloud) -> Result<AssignmentPlan> {
    check_inputs(source, target)?;
    if source.len() == target.len() {
        return solve_exact(source, target);
    }
    let source_small = source.len() < target.len();
    let (small, large) = if source_small {
        (source, target)
    } else {
        (target, source)
    };
    let m = small.len();
    let big_n = large.len();
    let base = big_n / m;
    let rem = big_n % m;
    let copies = base + usize::from(rem > 0);
    let size = m * copies;
    let dummies = size - big_n;

    let d = cost_matrix(small, large);
    let max_cost = d.iter().copied().fold(0.0f64, f64::max);
    let forbidden = (max_cost + 1.0) * (size as f64 + 1.0) * 4.0;

    // Row s*copies + c is copy c of small point s; copy index `base` is optional.
    let mut cost = vec![0.0; size * size];
    for s in 0..m {
        for c in 0..copies {
            let row = &mut cost[(s * copies + c) * size..(s * copies + c + 1) * size];
            row[..big_n].copy_from_slice(&d[s * big_n..(s + 1) * big_n]);
            let dummy_cost = if c >= base { 0.0 } else { forbidden };
            row[big_n..].iter_mut().for_each(|x| *x = dummy_cost);
        }
    }
    debug_assert!(dummies < m || rem == 0);
    let assignment = hungarian(size, &cost);
    let mut pairs = Vec::with_capacity(big_n);
    for (row, &col) in assignment.iter().enumerate() {
        if col >= big_n {
            continue;
        }
        let s = row / copies;
        pairs.push(if source_small { (s, col) } else { (col, s) });
    }
    Ok(AssignmentPlan::from_pairs(source, target, pairs))
}

/// Auction assignment; cost is within `n * epsilon` of optimal.
pub fn solve_approx(source: &PointCloud, target: &PointCloud, epsilon: f64) -> Result<AssignmentPlan> {
    solve_approx_with_budget(source, target, epsilon, DEFAULT_BID_BUDGET)
}

pub fn solve_approx_with_budget(
    source: &PointCloud,
    target: &PointCloud,
    epsilon: f64,
    bid_budget: usize,
) -> Result<AssignmentPlan> {
    check_inputs(source, target)?;
    if source.len() != target.len() {
        return Err(Error::SizeMismatch(format!(
            "{} source vs {} target points",
            source.len(),
            target.len()
        )));
    }
    assert!(epsilon > 0.0, "epsilon must be positive");
    let n = source.len();
    let cost = cost_matrix(source, target);
    let max_cost = cost.iter().copied().fold(0.0f64, f64::max);

    // Scaled run: epsilon shrinks geometrically, prices carry over.
    let mut prices = vec![0.0f64; n];
    let mut eps = (max_cost / 4.0).max(epsilon);
    let mut remaining = bid_budget;
    let scaled = loop {
        let assigned = auction_phase(n, &cost, &mut prices, eps, &mut remaining)
            .ok_or(Error::NonConvergence(bid_budget))?;
        if eps <= epsilon {
            break assigned;
        }
        eps = (eps / 5.0).max(epsilon);
    };
    let scaled = AssignmentPlan::from_pairs(source, target, scaled.into_iter().enumerate().collect());

    // A short unscaled run from zero prices resolves easy instances (e.g.
    // near-identical clouds) exactly; keep whichever plan is cheaper.
    let mut direct_budget = 8 * n;
    let mut zero = vec![0.0f64; n];
    if let Some(direct) = auction_phase(n, &cost, &mut zero, epsilon, &mut direct_budget) {
        let direct = AssignmentPlan::from_pairs(source, target, direct.into_iter().enumerate().collect());
        if direct.cost() < scaled.cost() {
            return Ok(direct);
        }
    }
    Ok(scaled)
}

/// One Gauss-Seidel forward auction at fixed `eps`. Returns the object of
/// each person, or `None` once `budget` bids are spent.
fn auction_phase(
    n: usize,
    cost: &[f64],
    prices: &mut [f64],
    eps: f64,
    budget: &mut usize,
) -> Option<Vec<usize>> {
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut assigned: Vec<Option<usize>> = vec![None; n];
    let mut queue: VecDeque<usize> = (0..n).collect();
    while let Some(person) = queue.pop_front() {
        if *budget == 0 {
            return None;
        }
        *budget -= 1;
        let row = &cost[person * n..(person + 1) * n];
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        let mut second = f64::NEG_INFINITY;
        for (obj, (&c, &p)) in row.iter().zip(prices.iter()).enumerate() {
            let value = -c - p;
            if value > best.1 {
                second = best.1;
                best = (obj, value);
            } else if value > second {
                second = value;
            }
        }
        let (obj, v1) = best;
        let increment = if second.is_finite() { v1 - second } else { 0.0 };
        prices[obj] += increment + eps;
        if let Some(prev) = owner[obj].replace(person) {
            assigned[prev] = None;
            queue.push_back(prev);
        }
        assigned[person] = Some(obj);
    }
    Some(assigned.into_iter().map(|o| o.expect("every person holds an object")).collect())
}

/// Picks the exact solver at desk scale and the auction above [`EXACT_LIMIT`].
pub fn solve(source: &PointCloud, target: &PointCloud) -> Result<AssignmentPlan> {
    if source.len() != target.len() {
        return solve_unbalanced(source, target);
    }
    if source.len() <= EXACT_LIMIT {
        return solve_exact(source, target);
    }
    check_inputs(source, target)?;
    let mean = cost_matrix(source, target).iter().sum::<f64>() / (source.len() * target.len()) as f64;
    solve_approx(source, target, (mean * 1e-6).max(f64::MIN_POSITIVE))
}
