//! Monte-Carlo sliced Wasserstein distance (p = 1) and its gradient.
//!
//! For every direction both clouds are projected to scalars, sorted, and
//! paired rank by rank; the 1D W₁ distance is the mean absolute difference
//! of the pairs. The estimate is the mean over directions.
//!
//! Directions are processed in parallel but each direction's value (or each
//! fixed-size block's gradient) is reduced in direction order, so results
//! are bit-identical for any thread count.

use rayon::prelude::*;

use crate::cloud::{DirectionSet, Point3, PointCloud};
use crate::error::{Error, Result};
use crate::metrics::Gradient;

/// Directions per parallel work item in the gradient.
const GRADIENT_BLOCK: usize = 8;

fn check_sizes(x: &PointCloud, y: &PointCloud) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "sliced Wasserstein needs equal sizes, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

#[inline]
fn project_sorted(points: &[Point3], dir: Point3, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend(points.iter().map(|p| p.dot(dir)));
    buf.sort_unstable_by(f64::total_cmp);
}

/// 1D W₁ between the projections of X and Y on `dir`.
pub fn sliced_w1(x: &[Point3], y: &[Point3], dir: Point3) -> f64 {
    let mut a = Vec::with_capacity(x.len());
    let mut b = Vec::with_capacity(y.len());
    w1_with_buffers(x, y, dir, &mut a, &mut b)
}

fn w1_with_buffers(
    x: &[Point3],
    y: &[Point3],
    dir: Point3,
    a: &mut Vec<f64>,
    b: &mut Vec<f64>,
) -> f64 {
    project_sorted(x, dir, a);
    project_sorted(y, dir, b);
    let total: f64 = a.iter().zip(b.iter()).map(|(u, v)| (u - v).abs()).sum();
    total / x.len() as f64
}

/// Per-direction 1D distances, in direction order.
pub fn swd_per_direction(x: &PointCloud, y: &PointCloud, dirs: &DirectionSet) -> Result<Vec<f64>> {
    check_sizes(x, y)?;
    let (xp, yp) = (x.points(), y.points());
    Ok(dirs
        .directions()
        .par_iter()
        .map_init(
            || (Vec::with_capacity(xp.len()), Vec::with_capacity(yp.len())),
            |(a, b), &d| w1_with_buffers(xp, yp, d, a, b),
        )
        .collect())
}

/// Sliced Wasserstein distance estimated over a fixed direction set.
pub fn swd(x: &PointCloud, y: &PointCloud, dirs: &DirectionSet) -> Result<f64> {
    let per_dir = swd_per_direction(x, y, dirs)?;
    Ok(per_dir.iter().sum::<f64>() / dirs.len() as f64)
}

/// Gradient contribution of one direction, accumulated into `grad`.
fn accumulate_direction(
    x: &[Point3],
    y: &[Point3],
    dir: Point3,
    weight: f64,
    order: &mut Vec<usize>,
    proj: &mut Vec<f64>,
    sorted_y: &mut Vec<f64>,
    grad: &mut [Point3],
) {
    proj.clear();
    proj.extend(x.iter().map(|p| p.dot(dir)));
    order.clear();
    order.extend(0..x.len());
    order.sort_unstable_by(|&i, &j| proj[i].total_cmp(&proj[j]).then(i.cmp(&j)));
    project_sorted(y, dir, sorted_y);
    for (rank, &i) in order.iter().enumerate() {
        let diff = proj[i] - sorted_y[rank];
        if diff > 0.0 {
            grad[i] += dir * weight;
        } else if diff < 0.0 {
            grad[i] -= dir * weight;
        }
    }
}

/// Gradient of [`swd`] with respect to the points of X. Exact ties between
/// a projection and its rank partner contribute zero.
pub fn swd_gradient(x: &PointCloud, y: &PointCloud, dirs: &DirectionSet) -> Result<Gradient> {
    check_sizes(x, y)?;
    let (xp, yp) = (x.points(), y.points());
    let n = xp.len();
    let weight = 1.0 / (n as f64 * dirs.len() as f64);
    let blocks: Vec<Vec<Point3>> = dirs
        .directions()
        .par_chunks(GRADIENT_BLOCK)
        .map(|block| {
            let mut grad = vec![Point3::ZERO; n];
            let (mut order, mut proj, mut sy) = (Vec::new(), Vec::new(), Vec::new());
            for &d in block {
                accumulate_direction(xp, yp, d, weight, &mut order, &mut proj, &mut sy, &mut grad);
            }
            grad
        })
        .collect();
    let mut total = vec![Point3::ZERO; n];
    for block in blocks {
        for (t, g) in total.iter_mut().zip(block) {
            *t += g;
        }
    }
    Ok(Gradient(total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::assignment::{emd_exact, Reduction};
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

    fn x_axis() -> DirectionSet {
        DirectionSet::from_vectors(vec![Point3::new(1.0, 0.0, 0.0)]).unwrap()
    }

    #[test]
    fn identity_is_exactly_zero() {
        let x = random_cloud(50, 1);
        let d = DirectionSet::sample(32, 3).unwrap();
        assert_eq!(swd(&x, &x, &d).unwrap(), 0.0);
        assert!(swd_gradient(&x, &x, &d)
            .unwrap()
            .0
            .iter()
            .all(|g| *g == Point3::ZERO));
    }

    #[test]
    fn collinear_pair_matches_hand_value() {
        let x = PointCloud::from_xyz(&[[0.0; 3], [1.0, 0.0, 0.0]]).unwrap();
        let y = PointCloud::from_xyz(&[[0.5, 0.0, 0.0], [1.5, 0.0, 0.0]]).unwrap();
        assert_eq!(swd(&x, &y, &x_axis()).unwrap(), 0.5);
        let (emd, _) = emd_exact(&x, &y, Reduction::Mean).unwrap();
        assert!((emd - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_point_gradient() {
        let x = PointCloud::from_xyz(&[[0.0; 3]]).unwrap();
        let y = PointCloud::from_xyz(&[[1.0, 0.0, 0.0]]).unwrap();
        let g = swd_gradient(&x, &y, &x_axis()).unwrap();
        assert_eq!(g.0, vec![Point3::new(-1.0, 0.0, 0.0)]);
    }

    #[test]
    fn size_mismatch_rejected() {
        let d = x_axis();
        assert!(swd(&random_cloud(3, 1), &random_cloud(4, 2), &d).is_err());
        assert!(swd_gradient(&random_cloud(3, 1), &random_cloud(4, 2), &d).is_err());
    }

    #[test]
    fn permutation_invariant_bitwise() {
        let x = random_cloud(64, 4);
        let y = random_cloud(64, 5);
        let mut pts = x.points().to_vec();
        pts.reverse();
        pts.swap(3, 40);
        let xr = PointCloud::new(pts).unwrap();
        let d = DirectionSet::sample(16, 6).unwrap();
        assert_eq!(
            swd(&x, &y, &d).unwrap().to_bits(),
            swd(&xr, &y, &d).unwrap().to_bits()
        );
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let x = random_cloud(500, 7);
        let y = random_cloud(500, 8);
        let d = DirectionSet::sample(40, 9).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| (swd(&x, &y, &d).unwrap(), swd_gradient(&x, &y, &d).unwrap()))
        };
        let (v1, g1) = run(1);
        let (v3, g3) = run(3);
        assert_eq!(v1.to_bits(), v3.to_bits());
        assert_eq!(g1, g3);
    }
}
