//! Nearest-neighbour metrics: Chamfer and Hausdorff, plus the Chamfer
//! gradient with correspondences held fixed.

use rayon::prelude::*;

use crate::cloud::{Point3, PointCloud};
use crate::error::Result;
use crate::metrics::Gradient;
use crate::spatial::KdTree;

/// Squared distance from every point of `from` to its nearest point in `to`.
/// Per-point values are computed independently and returned in input order.
fn nn_sq_dists(from: &PointCloud, to: &PointCloud) -> Vec<f64> {
    let tree = KdTree::new(to.points());
    from.points()
        .par_iter()
        .map(|&p| tree.nearest(p).0)
        .collect()
}

/// Symmetric Chamfer distance: mean squared nearest-neighbour distance from
/// X to Y plus the same from Y to X.
pub fn chamfer(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    let xy: f64 = nn_sq_dists(x, y).iter().sum();
    let yx: f64 = nn_sq_dists(y, x).iter().sum();
    Ok(xy / x.len() as f64 + yx / y.len() as f64)
}

/// Hausdorff distance with unsquared Euclidean distances.
pub fn hausdorff(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    let a = nn_sq_dists(x, y).into_iter().fold(0.0, f64::max);
    let b = nn_sq_dists(y, x).into_iter().fold(0.0, f64::max);
    Ok(a.max(b).sqrt())
}

/// Nearest neighbour of `q`, or `None` when the two closest candidates are
/// equidistant (the gradient is undefined there).
fn unique_nearest(tree: &KdTree<'_>, q: Point3) -> Option<usize> {
    let nn = tree.nearest_k(q, 2, None);
    match nn.as_slice() {
        [(d0, i0), (d1, _)] if d0 < d1 => Some(*i0),
        [(_, i0)] => Some(*i0),
        _ => None,
    }
}

/// Gradient of [`chamfer`] with respect to the points of `x`.
///
/// Terms whose nearest neighbour is tied contribute zero.
pub fn chamfer_gradient(x: &PointCloud, y: &PointCloud) -> Result<Gradient> {
    let nx = x.len() as f64;
    let ny = y.len() as f64;
    let ty = KdTree::new(y.points());
    let mut grad: Vec<Point3> = x
        .points()
        .par_iter()
        .map(|&p| match unique_nearest(&ty, p) {
            Some(j) => (p - y.points()[j]) * (2.0 / nx),
            None => Point3::ZERO,
        })
        .collect();

    let tx = KdTree::new(x.points());
    let pulls: Vec<Option<usize>> = y
        .points()
        .par_iter()
        .map(|&q| unique_nearest(&tx, q))
        .collect();
    for (q, owner) in y.points().iter().zip(pulls) {
        if let Some(i) = owner {
            grad[i] += (x.points()[i] - *q) * (2.0 / ny);
        }
    }
    Ok(Gradient(grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn cloud(c: &[[f64; 3]]) -> PointCloud {
        PointCloud::from_xyz(c).unwrap()
    }

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = rng_from_seed(seed);
        PointCloud::new(
            (0..n)
                .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
                .collect(),
        )
        .unwrap()
    }

    fn brute_chamfer(x: &PointCloud, y: &PointCloud) -> f64 {
        let one = |a: &PointCloud, b: &PointCloud| {
            a.iter()
                .map(|p| {
                    b.iter()
                        .map(|q| p.dist_squared(*q))
                        .fold(f64::INFINITY, f64::min)
                })
                .sum::<f64>()
                / a.len() as f64
        };
        one(x, y) + one(y, x)
    }

    fn brute_hausdorff(x: &PointCloud, y: &PointCloud) -> f64 {
        let one = |a: &PointCloud, b: &PointCloud| {
            a.iter()
                .map(|p| b.iter().map(|q| p.dist(*q)).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max)
        };
        one(x, y).max(one(y, x))
    }

    #[test]
    fn chamfer_examples() {
        let x = random_cloud(20, 1);
        assert_eq!(chamfer(&x, &x).unwrap(), 0.0);
        assert_eq!(
            chamfer(&cloud(&[[0.0; 3]]), &cloud(&[[1.0, 0.0, 0.0]])).unwrap(),
            2.0
        );
    }

    #[test]
    fn chamfer_and_hausdorff_match_quadratic_scan() {
        for seed in 0..10 {
            let x = random_cloud(32, seed);
            let y = random_cloud(32 + seed as usize, seed + 100);
            assert!((chamfer(&x, &y).unwrap() - brute_chamfer(&x, &y)).abs() < 1e-9);
            assert!((hausdorff(&x, &y).unwrap() - brute_hausdorff(&x, &y)).abs() < 1e-9);
            assert_eq!(chamfer(&x, &y).unwrap(), chamfer(&y, &x).unwrap());
        }
    }

    #[test]
    fn hausdorff_examples() {
        let x = random_cloud(20, 3);
        assert_eq!(hausdorff(&x, &x).unwrap(), 0.0);
        let a = cloud(&[[0.0; 3], [2.0, 0.0, 0.0]]);
        let b = cloud(&[[0.0; 3]]);
        assert_eq!(hausdorff(&a, &b).unwrap(), 2.0);
    }

    #[test]
    fn chamfer_gradient_examples() {
        let x = random_cloud(10, 4);
        assert!(chamfer_gradient(&x, &x)
            .unwrap()
            .0
            .iter()
            .all(|g| *g == Point3::ZERO));
        let g = chamfer_gradient(&cloud(&[[0.0; 3]]), &cloud(&[[1.0, 0.0, 0.0]])).unwrap();
        assert_eq!(g.0, vec![Point3::new(-4.0, 0.0, 0.0)]);
    }

    #[test]
    fn chamfer_gradient_zero_on_tied_neighbour() {
        // Point at the midpoint of two targets: the X->Y term is tied.
        let x = cloud(&[[0.0; 3]]);
        let y = cloud(&[[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let g = chamfer_gradient(&x, &y).unwrap();
        // Only the Y->X pulls remain: 2(x - y)/2 for each target, which cancel.
        assert_eq!(g.0[0], Point3::ZERO);
    }
}
