//! Points, point clouds, direction sets and the rigid perturbations used by
//! the sensitivity experiments.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// A point (or displacement) in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ZERO: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    #[inline]
    pub fn dot(self, other: Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn dist_squared(self, other: Point3) -> f64 {
        (self - other).norm_squared()
    }

    #[inline]
    pub fn dist(self, other: Point3) -> f64 {
        self.dist_squared(other).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn coord(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    #[inline]
    pub fn coord_mut(&mut self, axis: usize) -> &mut f64 {
        match axis {
            0 => &mut self.x,
            1 => &mut self.y,
            _ => &mut self.z,
        }
    }

    /// Rotate about the z axis.
    pub fn rotate_yaw(self, angle: f64) -> Point3 {
        let (s, c) = angle.sin_cos();
        Point3::new(c * self.x - s * self.y, s * self.x + c * self.y, self.z)
    }
}

impl Add for Point3 {
    type Output = Point3;
    #[inline]
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Point3 {
    #[inline]
    fn add_assign(&mut self, o: Point3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Point3 {
    type Output = Point3;
    #[inline]
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Point3 {
    #[inline]
    fn sub_assign(&mut self, o: Point3) {
        self.x -= o.x;
        self.y -= o.y;
        self.z -= o.z;
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    #[inline]
    fn mul(self, k: f64) -> Point3 {
        Point3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Div<f64> for Point3 {
    type Output = Point3;
    #[inline]
    fn div(self, k: f64) -> Point3 {
        Point3::new(self.x / k, self.y / k, self.z / k)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    #[inline]
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

/// Ordered, non-empty set of finite points. Indices are stable identities.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("point cloud must not be empty".into()));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "point {i} has a non-finite coordinate"
            )));
        }
        Ok(PointCloud { points })
    }

    pub fn from_xyz(coords: &[[f64; 3]]) -> Result<Self> {
        Self::new(coords.iter().copied().map(Point3::from).collect())
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with slices.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    pub fn centroid(&self) -> Point3 {
        let sum = self.points.iter().fold(Point3::ZERO, |acc, &p| acc + p);
        sum / self.points.len() as f64
    }

    /// Apply `f` to every point. Panics in debug if `f` produces non-finite
    /// coordinates from finite input.
    pub fn map(&self, f: impl Fn(Point3) -> Point3) -> PointCloud {
        let points: Vec<Point3> = self.points.iter().map(|&p| f(p)).collect();
        debug_assert!(points.iter().all(|p| p.is_finite()));
        PointCloud { points }
    }

    /// Keep the points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<PointCloud> {
        let points = indices
            .iter()
            .map(|&i| {
                self.points.get(i).copied().ok_or_else(|| {
                    Error::InvalidInput(format!("index {i} out of range for {} points", self.len()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        PointCloud::new(points)
    }

    /// Largest distance of any point from `center`.
    pub fn radius_about(&self, center: Point3) -> f64 {
        self.points
            .iter()
            .map(|p| p.dist(center))
            .fold(0.0, f64::max)
    }
}

impl<'a> IntoIterator for &'a PointCloud {
    type Item = &'a Point3;
    type IntoIter = std::slice::Iter<'a, Point3>;
    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

/// A fixed set of unit directions on the sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    directions: Vec<Point3>,
    seed: Option<u64>,
}

impl DirectionSet {
    /// Draw `count` i.i.d. uniform directions by normalizing isotropic
    /// Gaussian triples.
    pub fn sample(count: usize, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::param(
                "directions",
                "at least one direction is required",
            ));
        }
        let mut rng = rng_from_seed(seed);
        let mut directions = Vec::with_capacity(count);
        while directions.len() < count {
            let g = Point3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            let n = g.norm();
            if n > 1e-12 {
                directions.push(g / n);
            }
        }
        Ok(DirectionSet {
            directions,
            seed: Some(seed),
        })
    }

    /// Build from explicit vectors; each is normalized.
    pub fn from_vectors(vectors: Vec<Point3>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::param(
                "directions",
                "at least one direction is required",
            ));
        }
        let directions = vectors
            .into_iter()
            .map(|v| {
                let n = v.norm();
                if !n.is_finite() || n < 1e-12 {
                    Err(Error::param(
                        "directions",
                        "direction vectors must be finite and non-zero",
                    ))
                } else {
                    Ok(v / n)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DirectionSet {
            directions,
            seed: None,
        })
    }

    pub fn directions(&self) -> &[Point3] {
        &self.directions
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// The seed this set was sampled with, if it was sampled.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// The same set with every direction rotated about z.
    pub fn rotate_yaw(&self, angle: f64) -> DirectionSet {
        DirectionSet {
            directions: self
                .directions
                .iter()
                .map(|d| d.rotate_yaw(angle))
                .collect(),
            seed: self.seed,
        }
    }
}

/// Add independent zero-mean Gaussian noise of standard deviation `sigma` to
/// every coordinate.
pub fn jitter(cloud: &PointCloud, sigma: f64, seed: u64) -> Result<PointCloud> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::param(
            "sigma",
            format!("must be finite and >= 0, got {sigma}"),
        ));
    }
    if sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let mut rng = rng_from_seed(seed);
    let points = cloud
        .iter()
        .map(|&p| {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            let dz: f64 = rng.sample(StandardNormal);
            p + Point3::new(dx, dy, dz) * sigma
        })
        .collect();
    PointCloud::new(points)
}

/// Rotate every point about the vertical (z) axis.
pub fn rotate_yaw(cloud: &PointCloud, angle: f64) -> Result<PointCloud> {
    if !angle.is_finite() {
        return Err(Error::param("angle", "must be finite"));
    }
    if angle == 0.0 {
        return Ok(cloud.clone());
    }
    let (s, c) = angle.sin_cos();
    Ok(cloud.map(|p| Point3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z)))
}

pub fn sample_directions(count: usize, seed: u64) -> Result<DirectionSet> {
    DirectionSet::sample(count, seed)
}

/// Center at the centroid and scale so the farthest point has norm 1.
///
/// Returns the normalized cloud together with the `(center, scale)` needed
/// to invert the transform. A cloud of coincident points gets scale 1.
pub fn normalize_to_unit_sphere(cloud: &PointCloud) -> (PointCloud, Point3, f64) {
    let center = cloud.centroid();
    let radius = cloud.radius_about(center);
    let scale = if radius > 1e-12 { radius } else { 1.0 };
    (cloud.map(|p| (p - center) / scale), center, scale)
}

/// Inverse of [`normalize_to_unit_sphere`].
pub fn denormalize(cloud: &PointCloud, center: Point3, scale: f64) -> PointCloud {
    cloud.map(|p| p * scale + center)
}

/// Kind and magnitude of a sensitivity-experiment transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RigidPerturbation {
    GaussianJitter { sigma: f64, seed: u64 },
    YawRotation { angle: f64 },
}

impl RigidPerturbation {
    pub fn apply(&self, cloud: &PointCloud) -> Result<PointCloud> {
        match *self {
            RigidPerturbation::GaussianJitter { sigma, seed } => jitter(cloud, sigma, seed),
            RigidPerturbation::YawRotation { angle } => rotate_yaw(cloud, angle),
        }
    }

    /// Magnitude for reporting: sigma, or the angle reduced to [0, 2π).
    /// A full turn reports 2π rather than 0 so sweep axes stay ascending.
    pub fn magnitude(&self) -> f64 {
        match *self {
            RigidPerturbation::GaussianJitter { sigma, .. } => sigma,
            RigidPerturbation::YawRotation { angle } => {
                let tau = std::f64::consts::TAU;
                let r = angle.rem_euclid(tau);
                if r == 0.0 && angle != 0.0 {
                    tau
                } else {
                    r
                }
            }
        }
    }
}
