//! Bijective Earth Mover's Distance: an exact shortest-augmenting-path
//! solver and an epsilon-scaling auction.

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Largest problem the exact O(N³) solver accepts by default.
pub const DEFAULT_EXACT_CAP: usize = 512;
/// Largest problem the auction accepts by default.
pub const DEFAULT_AUCTION_CAP: usize = 8192;

/// How an EMD cost is reduced over the matched pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    /// Total matched distance.
    Sum,
    /// Total divided by N.
    #[default]
    Mean,
}

impl Reduction {
    pub fn apply(self, total: f64, n: usize) -> f64 {
        match self {
            Reduction::Sum => total,
            Reduction::Mean => total / n as f64,
        }
    }
}

/// A bijection from indices of X to indices of Y with its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `mapping[i]` is the index in Y matched to X's point `i`.
    pub mapping: Vec<usize>,
    /// Sum of matched Euclidean distances.
    pub cost: f64,
}

impl Assignment {
    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.mapping.len()];
        self.mapping
            .iter()
            .all(|&j| j < seen.len() && !std::mem::replace(&mut seen[j], true))
    }
}

/// Sum of matched distances, accumulated in row order.
pub fn assignment_cost(x: &PointCloud, y: &PointCloud, mapping: &[usize]) -> f64 {
    x.iter()
        .zip(mapping)
        .map(|(p, &j)| p.dist(y.points()[j]))
        .sum()
}

fn check_sizes(x: &PointCloud, y: &PointCloud) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "EMD needs equal sizes, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(x.len())
}

fn dense_costs(x: &PointCloud, y: &PointCloud) -> Vec<f64> {
    let n = y.len();
    let mut c = vec![0.0; x.len() * n];
    for (i, p) in x.iter().enumerate() {
        for (j, q) in y.iter().enumerate() {
            c[i * n + j] = p.dist(*q);
        }
    }
    c
}

/// Optimal assignment for a dense square cost matrix (row-major, `n × n`)
/// by successive shortest augmenting paths with dual potentials.
pub fn solve_assignment(costs: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(costs.len(), n * n);
    // 1-based arrays with a virtual column 0, as in the classic formulation.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let row = &costs[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
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

    let mut mapping = vec![0usize; n];
    for j in 1..=n {
        if row_of[j] != 0 {
            mapping[row_of[j] - 1] = j - 1;
        }
    }
    mapping
}

/// Exact EMD with the default size cap.
pub fn emd_exact(
    x: &PointCloud,
    y: &PointCloud,
    reduction: Reduction,
) -> Result<(f64, Assignment)> {
    emd_exact_capped(x, y, reduction, DEFAULT_EXACT_CAP)
}

pub fn emd_exact_capped(
    x: &PointCloud,
    y: &PointCloud,
    reduction: Reduction,
    cap: usize,
) -> Result<(f64, Assignment)> {
    let n = check_sizes(x, y)?;
    if n > cap {
        return Err(Error::Capacity {
            solver: "exact EMD",
            cap,
            got: n,
        });
    }
    let mapping = solve_assignment(&dense_costs(x, y), n);
    let cost = assignment_cost(x, y, &mapping);
    Ok((reduction.apply(cost, n), Assignment { mapping, cost }))
}

/// Epsilon-scaling forward auction for a minimum-cost assignment.
///
/// `cost(i, j)` must be non-negative. The returned matching's cost is within
/// `n * epsilon` of optimal.
pub fn auction_assignment(
    n: usize,
    epsilon: f64,
    cost: impl Fn(usize, usize) -> f64,
) -> Vec<usize> {
    if n == 1 {
        return vec![0];
    }
    let mut max_cost = 0.0f64;
    // Scan a bounded sample of rows to set the starting epsilon.
    for i in (0..n).step_by((n / 64).max(1)) {
        for j in 0..n {
            max_cost = max_cost.max(cost(i, j));
        }
    }
    let mut prices = vec![0.0f64; n];
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut assigned: Vec<Option<usize>> = vec![None; n];
    let mut eps = (max_cost / 4.0).max(epsilon);
    let mut queue: Vec<usize> = Vec::with_capacity(n);
    loop {
        owner.fill(None);
        assigned.fill(None);
        queue.clear();
        queue.extend((0..n).rev());
        while let Some(i) = queue.pop() {
            // Best and second-best net value, value = -cost - price.
            let mut best_j = 0usize;
            let mut best = f64::NEG_INFINITY;
            let mut second = f64::NEG_INFINITY;
            for (j, &p) in prices.iter().enumerate() {
                let val = -cost(i, j) - p;
                if val > best {
                    second = best;
                    best = val;
                    best_j = j;
                } else if val > second {
                    second = val;
                }
            }
            prices[best_j] += best - second + eps;
            if let Some(prev) = owner[best_j].replace(i) {
                assigned[prev] = None;
                queue.push(prev);
            }
            assigned[i] = Some(best_j);
        }
        if eps <= epsilon {
            break;
        }
        eps = (eps / 5.0).max(epsilon);
    }
    assigned
        .into_iter()
        .map(|a| a.expect("auction ends fully assigned"))
        .collect()
}

/// EMD through the auction algorithm, within `N * epsilon` of the optimal
/// summed cost.
pub fn emd_auction(
    x: &PointCloud,
    y: &PointCloud,
    epsilon: f64,
    reduction: Reduction,
) -> Result<f64> {
    emd_auction_capped(x, y, epsilon, reduction, DEFAULT_AUCTION_CAP).map(|(v, _)| v)
}

pub fn emd_auction_capped(
    x: &PointCloud,
    y: &PointCloud,
    epsilon: f64,
    reduction: Reduction,
    cap: usize,
) -> Result<(f64, Assignment)> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::param(
            "epsilon",
            format!("must be finite and > 0, got {epsilon}"),
        ));
    }
    let n = check_sizes(x, y)?;
    if n > cap {
        return Err(Error::Capacity {
            solver: "auction EMD",
            cap,
            got: n,
        });
    }
    let (xp, yp) = (x.points(), y.points());
    let mapping = auction_assignment(n, epsilon, |i, j| xp[i].dist(yp[j]));
    let cost = assignment_cost(x, y, &mapping);
    Ok((reduction.apply(cost, n), Assignment { mapping, cost }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point3;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = rng_from_seed(seed);
        PointCloud::new(
            (0..n)
                .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
                .collect(),
        )
        .unwrap()
    }

    fn pair() -> (PointCloud, PointCloud) {
        (
            PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap(),
            PointCloud::from_xyz(&[[0.5, 0.0, 0.0], [1.5, 0.0, 0.0]]).unwrap(),
        )
    }

    #[test]
    fn exact_identity_is_zero() {
        let x = random_cloud(30, 1);
        let (v, a) = emd_exact(&x, &x, Reduction::Mean).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(a.cost, 0.0);
        assert!(a.is_bijection());
    }

    #[test]
    fn exact_two_point_pair() {
        let (x, y) = pair();
        let (v, a) = emd_exact(&x, &y, Reduction::Mean).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        assert_eq!(a.mapping, vec![0, 1]);
        let (s, _) = emd_exact(&x, &y, Reduction::Sum).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_rejects_mismatch_and_cap() {
        let x = random_cloud(5, 2);
        let y = random_cloud(6, 3);
        assert!(matches!(
            emd_exact(&x, &y, Reduction::Sum),
            Err(Error::InvalidInput(_))
        ));
        let big = random_cloud(10, 4);
        let err = emd_exact_capped(&big, &big, Reduction::Sum, 8).unwrap_err();
        assert!(err.to_string().contains('8'));
        assert!(matches!(
            err,
            Error::Capacity {
                cap: 8,
                got: 10,
                ..
            }
        ));
    }

    #[test]
    fn assignment_cost_matches_reported_cost() {
        let x = random_cloud(40, 5);
        let y = random_cloud(40, 6);
        let (v, a) = emd_exact(&x, &y, Reduction::Sum).unwrap();
        assert!(a.is_bijection());
        assert_eq!(v, assignment_cost(&x, &y, &a.mapping));
    }

    #[test]
    fn auction_examples() {
        let x = random_cloud(50, 7);
        let v = emd_auction(&x, &x, 1e-3, Reduction::Sum).unwrap();
        assert!((0.0..=50.0 * 1e-3).contains(&v));
        let (x, y) = pair();
        let v = emd_auction(&x, &y, 1e-4, Reduction::Mean).unwrap();
        assert!((v - 0.5).abs() <= 2e-4);
        assert!(emd_auction(&x, &y, 0.0, Reduction::Mean).is_err());
        assert!(emd_auction(&x, &y, f64::NAN, Reduction::Mean).is_err());
    }

    #[test]
    fn auction_within_bound_of_exact() {
        for seed in 0..5 {
            let x = random_cloud(128, 10 + seed);
            let y = random_cloud(128, 20 + seed);
            let (opt, _) = emd_exact(&x, &y, Reduction::Sum).unwrap();
            let (got, a) =
                emd_auction_capped(&x, &y, 1e-3, Reduction::Sum, DEFAULT_AUCTION_CAP).unwrap();
            assert!(a.is_bijection());
            assert!(
                got - opt >= 0.0 && got - opt <= 128.0 * 1e-3,
                "gap {}",
                got - opt
            );
        }
    }
}
