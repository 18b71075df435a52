//! Synthetic scans and fixtures with known structure.

use std::f64::consts::TAU;

use rand::Rng as _;

use crate::cloud::{normalize_to_unit_sphere, Point3, PointCloud};
use crate::lidar::{extract_patches, Projection};
use crate::rng::rng_from_seed;

/// Range of a smooth synthetic street scene along a cell's ray: a ground
/// band below the horizon, walls of varying distance elsewhere.
fn scene_range(proj: &Projection, row: usize, col: usize, phase: f64) -> f64 {
    let az = (col as f64 + 0.5) / proj.cols as f64 * TAU;
    let v = (row as f64 + 0.5) / proj.rows as f64;
    let wall = 12.0 + 5.0 * (2.0 * az + phase).sin() + 2.0 * (7.0 * az).cos();
    let ground = 4.0 + 30.0 * (1.0 - v).powi(2);
    wall.min(ground).max(2.0)
}

/// A fully occupied scan: one return on every cell-center ray, in row-major
/// order, so rasterizing with `proj` puts each point back in its own cell.
pub fn full_scan(proj: Projection, seed: u64) -> PointCloud {
    let phase = rng_from_seed(seed).random_range(0.0..TAU);
    let mut pts = Vec::with_capacity(proj.rows * proj.cols);
    for row in 0..proj.rows {
        for col in 0..proj.cols {
            pts.push(proj.cell_center_ray(row, col) * scene_range(&proj, row, col, phase));
        }
    }
    PointCloud::new(pts).expect("synthetic scan is finite and non-empty")
}

/// Like [`full_scan`] but each cell is kept with probability `occupancy`.
pub fn partial_scan(proj: Projection, occupancy: f64, seed: u64) -> PointCloud {
    let mut rng = rng_from_seed(seed ^ 0x5ca1_ab1e);
    let full = full_scan(proj, seed);
    let mut kept: Vec<Point3> = full
        .iter()
        .copied()
        .filter(|_| rng.random::<f64>() < occupancy)
        .collect();
    if kept.is_empty() {
        kept.push(full.points()[0]);
    }
    PointCloud::new(kept).unwrap()
}

/// Points evenly spaced on horizontal rings; invariant under reflection
/// `y -> -y` and under yaw by multiples of `2π / per_ring`.
pub fn ring_cloud(rings: usize, per_ring: usize) -> PointCloud {
    let mut pts = Vec::with_capacity(rings * per_ring);
    for r in 0..rings {
        let radius = 1.0 + 0.5 * r as f64;
        let z = 0.2 * r as f64;
        for k in 0..per_ring {
            let a = TAU * k as f64 / per_ring as f64;
            pts.push(Point3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    PointCloud::new(pts).unwrap()
}

/// A unit-normalized patch of `size` points cut from a synthetic 64×2048
/// scan.
pub fn lidar_patch(size: usize, seed: u64) -> PointCloud {
    let cloud = full_scan(Projection::default(), seed);
    let patch =
        extract_patches(&cloud, "synthetic", size, 1, seed).expect("patch fits in the scan");
    normalize_to_unit_sphere(&patch[0].cloud).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lidar::rasterize;

    #[test]
    fn full_scan_round_trips_through_raster() {
        let proj = Projection {
            rows: 16,
            cols: 128,
            ..Default::default()
        };
        let cloud = full_scan(proj, 1);
        let img = rasterize(&cloud, proj).unwrap();
        assert_eq!(img.occupied(), cloud.len());
        for row in 0..proj.rows {
            for col in 0..proj.cols {
                let c = img.cell(row, col).expect("occupied");
                assert_eq!(c.index, row * proj.cols + col);
            }
        }
    }

    #[test]
    fn ring_cloud_is_reflection_symmetric() {
        let c = ring_cloud(3, 12);
        for p in c.iter() {
            let m = Point3::new(p.x, -p.y, p.z);
            assert!(c.iter().any(|q| q.dist(m) < 1e-12));
        }
    }

    #[test]
    fn lidar_patch_is_normalized() {
        let p = lidar_patch(256, 2);
        assert_eq!(p.len(), 256);
        assert!(p.centroid().norm() < 1e-9);
        let r = p.iter().map(|q| q.norm()).fold(0.0, f64::max);
        assert!((r - 1.0).abs() < 1e-9);
    }
}
