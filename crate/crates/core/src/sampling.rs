//! Farthest point sampling, k-nearest-neighbour graphs and inverse-distance
//! feature interpolation.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::spatial::KdTree;

pub const DEFAULT_INTERPOLATION_K: usize = 3;
pub const DEFAULT_INTERPOLATION_POWER: f64 = 2.0;

/// Greedy farthest point sampling.
///
/// Starts from `seed_index`; every next pick maximizes the distance to the
/// already selected set, ties going to the lowest index.
pub fn farthest_point_sample(
    cloud: &PointCloud,
    m: usize,
    seed_index: usize,
) -> Result<Vec<usize>> {
    let n = cloud.len();
    if m == 0 || m > n {
        return Err(Error::param("m", format!("must be in 1..={n}, got {m}")));
    }
    if seed_index >= n {
        return Err(Error::param(
            "seed_index",
            format!("{seed_index} out of range for {n} points"),
        ));
    }
    let pts = cloud.points();
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut selected = Vec::with_capacity(m);
    let mut taken = vec![false; n];
    let mut current = seed_index;
    loop {
        selected.push(current);
        taken[current] = true;
        if selected.len() == m {
            break;
        }
        let c = pts[current];
        let mut best = usize::MAX;
        let mut best_d2 = f64::NEG_INFINITY;
        for (i, (p, d)) in pts.iter().zip(min_d2.iter_mut()).enumerate() {
            let d2 = p.dist_squared(c);
            if d2 < *d {
                *d = d2;
            }
            if !taken[i] && *d > best_d2 {
                best_d2 = *d;
                best = i;
            }
        }
        current = best;
    }
    Ok(selected)
}

/// For each query point, its `k` nearest other points, ascending by distance.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    k: usize,
    /// `(neighbor index, distance)` per query.
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl NeighborGraph {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, query: usize) -> &[(usize, f64)] {
        &self.neighbors[query]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[(usize, f64)]> {
        self.neighbors.iter().map(Vec::as_slice)
    }

    /// Debug dump with header `query,rank,neighbor,distance`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("query,rank,neighbor,distance\n");
        for (q, row) in self.neighbors.iter().enumerate() {
            for (rank, (j, d)) in row.iter().enumerate() {
                let _ = writeln!(out, "{q},{rank},{j},{d}");
            }
        }
        out
    }
}

/// k nearest neighbours of every point, excluding the point itself. Ties
/// resolve to the lower index.
pub fn knn(cloud: &PointCloud, k: usize) -> Result<NeighborGraph> {
    let n = cloud.len();
    if k == 0 || k >= n {
        return Err(Error::param("k", format!("must be in 1..{n}, got {k}")));
    }
    let tree = KdTree::new(cloud.points());
    let neighbors = cloud
        .points()
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            tree.nearest_k(p, k, Some(i))
                .into_iter()
                .map(|(d2, j)| (j, d2.sqrt()))
                .collect()
        })
        .collect();
    Ok(NeighborGraph { k, neighbors })
}

/// Per-point feature vectors of uniform width.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    width: usize,
    data: Vec<f64>,
}

impl FeatureTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if width == 0 {
            return Err(Error::InvalidInput("feature rows must be non-empty".into()));
        }
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidInput("feature rows differ in width".into()));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("features must be finite".into()));
        }
        Ok(FeatureTable { width, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }
}

/// Interpolate source features at query positions as the inverse-distance
/// weighted mean over each query's `k` nearest sources, `w = 1 / d^power`.
/// A query within 1e-12 of a source copies that source's feature.
pub fn inverse_distance_interpolate(
    sources: &PointCloud,
    features: &FeatureTable,
    queries: &PointCloud,
    k: usize,
    power: f64,
) -> Result<FeatureTable> {
    if features.len() != sources.len() {
        return Err(Error::InvalidInput(format!(
            "{} feature rows for {} sources",
            features.len(),
            sources.len()
        )));
    }
    if k == 0 || k > sources.len() {
        return Err(Error::param(
            "k",
            format!("must be in 1..={}, got {k}", sources.len()),
        ));
    }
    if !power.is_finite() || power < 0.0 {
        return Err(Error::param("power", "must be finite and >= 0"));
    }
    let tree = KdTree::new(sources.points());
    let w = features.width();
    let rows: Vec<Vec<f64>> = queries
        .points()
        .par_iter()
        .map(|&q| {
            let nn = tree.nearest_k(q, k, None);
            let (d0, j0) = nn[0];
            if d0.sqrt() < 1e-12 {
                return features.row(j0).to_vec();
            }
            let mut acc = vec![0.0; w];
            let mut total = 0.0;
            for (d2, j) in nn {
                let wt = 1.0 / d2.sqrt().powf(power);
                total += wt;
                for (a, f) in acc.iter_mut().zip(features.row(j)) {
                    *a += wt * f;
                }
            }
            acc.iter_mut().for_each(|a| *a /= total);
            acc
        })
        .collect();
    FeatureTable::new(rows)
}
