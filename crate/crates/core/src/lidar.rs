//! Lidar scans: KITTI-style binary records, cylindrical rasterization,
//! scan-line decimation and patch extraction.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cloud::{normalize_to_unit_sphere, Point3, PointCloud};
use crate::error::{Error, Result};
use crate::io::write_xyz;
use crate::rng::rng_from_seed;
use crate::sampling::farthest_point_sample;

pub const DEFAULT_ROWS: usize = 64;
pub const DEFAULT_COLS: usize = 2048;
pub const DEFAULT_FOV_UP_DEG: f64 = 2.0;
pub const DEFAULT_FOV_DOWN_DEG: f64 = -24.8;

/// Bytes per scan record: x, y, z, intensity as little-endian `f32`.
pub const RECORD_BYTES: usize = 16;

/// A decoded scan with the number of records dropped for non-finite
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub cloud: PointCloud,
    pub skipped_non_finite: usize,
}

pub fn decode_scan(bytes: &[u8], origin: &Path) -> Result<Scan> {
    if bytes.len() % RECORD_BYTES != 0 {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            offset: (bytes.len() - bytes.len() % RECORD_BYTES) as u64,
            reason: format!("length {} is not a multiple of {RECORD_BYTES}", bytes.len()),
        });
    }
    let mut points = Vec::with_capacity(bytes.len() / RECORD_BYTES);
    let mut skipped = 0;
    for rec in bytes.chunks_exact(RECORD_BYTES) {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap()) as f64;
        let p = Point3::new(f(0), f(1), f(2));
        if p.is_finite() {
            points.push(p);
        } else {
            skipped += 1;
        }
    }
    if skipped > 0 {
        log::warn!(
            "{}: skipped {skipped} records with non-finite coordinates",
            origin.display()
        );
    }
    let cloud = PointCloud::new(points).map_err(|_| Error::Parse {
        path: origin.to_path_buf(),
        offset: 0,
        reason: "scan contains no usable records".into(),
    })?;
    Ok(Scan {
        cloud,
        skipped_non_finite: skipped,
    })
}

/// Read a KITTI-layout scan, dropping intensity.
pub fn read_scan(path: impl AsRef<Path>) -> Result<Scan> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_scan(&bytes, path)
}

/// Encode in the KITTI layout with zero intensity.
pub fn encode_scan(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * RECORD_BYTES);
    for p in cloud {
        for v in [p.x as f32, p.y as f32, p.z as f32, 0.0f32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_scan(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_scan(cloud)).map_err(|e| Error::io(path, e))
}

/// Vertical field of view and grid size of a spinning lidar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Projection {
    pub rows: usize,
    pub cols: usize,
    pub fov_up_deg: f64,
    pub fov_down_deg: f64,
}

impl Default for Projection {
    fn default() -> Self {
        Projection {
            rows: DEFAULT_ROWS,
            cols: DEFAULT_COLS,
            fov_up_deg: DEFAULT_FOV_UP_DEG,
            fov_down_deg: DEFAULT_FOV_DOWN_DEG,
        }
    }
}

impl Projection {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::param(
                "rows/cols",
                "grid dimensions must be at least 1",
            ));
        }
        if !(self.fov_up_deg.is_finite() && self.fov_down_deg.is_finite())
            || self.fov_up_deg <= self.fov_down_deg
        {
            return Err(Error::param(
                "fov",
                format!(
                    "need fov_up > fov_down, got {} and {}",
                    self.fov_up_deg, self.fov_down_deg
                ),
            ));
        }
        Ok(())
    }

    /// Grid cell of a point, or `None` for a point at the sensor origin.
    pub fn cell_of(&self, p: Point3) -> Option<(usize, usize, f64)> {
        let range = p.norm();
        if range < 1e-9 {
            return None;
        }
        let elevation = (p.z / range).clamp(-1.0, 1.0).asin();
        let azimuth = p.y.atan2(p.x);
        let up = self.fov_up_deg.to_radians();
        let down = self.fov_down_deg.to_radians();
        let r = ((up - elevation) / (up - down) * self.rows as f64).floor();
        let row = r.clamp(0.0, (self.rows - 1) as f64) as usize;
        let c = ((azimuth + PI) / (2.0 * PI) * self.cols as f64).floor() as i64;
        let col = c.rem_euclid(self.cols as i64) as usize;
        Some((row, col, range))
    }

    /// Unit ray through the center of a cell; inverse of [`cell_of`](Self::cell_of).
    pub fn cell_center_ray(&self, row: usize, col: usize) -> Point3 {
        let up = self.fov_up_deg.to_radians();
        let down = self.fov_down_deg.to_radians();
        let elevation = up - (row as f64 + 0.5) / self.rows as f64 * (up - down);
        let azimuth = (col as f64 + 0.5) / self.cols as f64 * 2.0 * PI - PI;
        Point3::new(
            elevation.cos() * azimuth.cos(),
            elevation.cos() * azimuth.sin(),
            elevation.sin(),
        )
    }
}

/// One occupied range-image cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub depth: f64,
    /// Index of the point in the rasterized cloud.
    pub index: usize,
}

/// Cylindrical grid of lidar returns, one point per cell at most.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    projection: Projection,
    cells: Vec<Option<Cell>>,
    points: Vec<Point3>,
    collisions: usize,
    rejected_at_origin: usize,
}

impl RangeImage {
    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn rows(&self) -> usize {
        self.projection.rows
    }

    pub fn cols(&self) -> usize {
        self.projection.cols
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<Cell> {
        self.cells[row * self.cols() + col]
    }

    /// Point stored in a cell, in original coordinates.
    pub fn point(&self, cell: Cell) -> Point3 {
        self.points[cell.index]
    }

    pub fn occupied(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Points that lost a cell to a nearer return.
    pub fn collisions(&self) -> usize {
        self.collisions
    }

    pub fn rejected_at_origin(&self) -> usize {
        self.rejected_at_origin
    }

    /// Points in row-major cell order, restricted to rows accepted by `keep`.
    fn collect_rows(&self, keep: impl Fn(usize) -> bool) -> Vec<Point3> {
        let cols = self.cols();
        self.cells
            .iter()
            .enumerate()
            .filter(|(k, _)| keep(k / cols))
            .filter_map(|(_, c)| c.map(|c| self.points[c.index]))
            .collect()
    }

    /// Every stored point in row-major order.
    pub fn all_points(&self) -> Result<PointCloud> {
        let pts = self.collect_rows(|_| true);
        PointCloud::new(pts)
            .map_err(|_| Error::EmptyResult("range image has no occupied cells".into()))
    }

    /// Text grid of depths: a `P2` header, then one line per row with depths
    /// in millimeters, `0` for empty cells.
    pub fn to_pgm_text(&self) -> String {
        let mm: Vec<u64> = self
            .cells
            .iter()
            .map(|c| c.map_or(0, |c| (c.depth * 1000.0).round().max(1.0) as u64))
            .collect();
        let max = mm.iter().copied().max().unwrap_or(0).max(1);
        let mut out = format!("P2\n{} {}\n{}\n", self.cols(), self.rows(), max);
        for row in mm.chunks(self.cols()) {
            let line: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }
}

/// Project a cloud onto a cylindrical grid. When two points fall in the same
/// cell the nearer one wins (first one on an exact tie); points at the origin
/// are skipped.
pub fn rasterize(cloud: &PointCloud, projection: Projection) -> Result<RangeImage> {
    projection.validate()?;
    let mut cells: Vec<Option<Cell>> = vec![None; projection.rows * projection.cols];
    let mut collisions = 0;
    let mut rejected = 0;
    for (index, &p) in cloud.iter().enumerate() {
        let Some((row, col, depth)) = projection.cell_of(p) else {
            rejected += 1;
            continue;
        };
        let slot = &mut cells[row * projection.cols + col];
        match slot {
            Some(existing) if existing.depth <= depth => collisions += 1,
            Some(_) => {
                collisions += 1;
                *slot = Some(Cell { depth, index });
            }
            None => *slot = Some(Cell { depth, index }),
        }
    }
    if rejected > 0 {
        log::warn!("rasterize: skipped {rejected} points at the sensor origin");
    }
    Ok(RangeImage {
        projection,
        cells,
        points: cloud.points().to_vec(),
        collisions,
        rejected_at_origin: rejected,
    })
}

fn check_factor(img: &RangeImage, factor: usize, phase: usize) -> Result<()> {
    if factor < 2 {
        return Err(Error::param(
            "factor",
            format!("must be at least 2, got {factor}"),
        ));
    }
    if img.rows() % factor != 0 {
        return Err(Error::param(
            "factor",
            format!("{factor} does not divide the row count {}", img.rows()),
        ));
    }
    if phase >= factor {
        return Err(Error::param(
            "phase",
            format!("must be below the factor {factor}, got {phase}"),
        ));
    }
    Ok(())
}

/// Keep rows with `row % factor == phase` and return their original points.
pub fn decimate_rows_with_phase(
    img: &RangeImage,
    factor: usize,
    phase: usize,
) -> Result<PointCloud> {
    check_factor(img, factor, phase)?;
    let pts = img.collect_rows(|r| r % factor == phase);
    PointCloud::new(pts)
        .map_err(|_| Error::EmptyResult("no occupied cells survive decimation".into()))
}

/// Keep every `factor`-th scan line starting with row 0.
pub fn decimate_rows(img: &RangeImage, factor: usize) -> Result<PointCloud> {
    decimate_rows_with_phase(img, factor, 0)
}

/// Low/high resolution training pair: `high` holds every occupied cell,
/// `low` only the surviving scan lines.
pub fn make_pair(
    img: &RangeImage,
    factor: usize,
    phase: usize,
) -> Result<(PointCloud, PointCloud)> {
    let low = decimate_rows_with_phase(img, factor, phase)?;
    let high = img.all_points()?;
    Ok((low, high))
}

/// A fixed-size neighbourhood cut from a scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub cloud: PointCloud,
    pub scan_id: String,
    pub center_index: usize,
}

/// `k` nearest points to `center` (itself included), ascending by
/// `(distance, index)`.
fn nearest_block(cloud: &PointCloud, center: usize, k: usize) -> Vec<usize> {
    let c = cloud.points()[center];
    let mut d: Vec<(f64, usize)> = cloud
        .iter()
        .enumerate()
        .map(|(i, p)| (p.dist_squared(c), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < d.len() {
        d.select_nth_unstable_by(k - 1, cmp);
        d.truncate(k);
    }
    d.sort_unstable_by(cmp);
    d.into_iter().map(|(_, i)| i).collect()
}

/// Cut `n_patches` patches of `patch_size` points. Centers come from
/// farthest point sampling started at a seed-chosen index; each patch is
/// its center's nearest neighbours ordered by distance.
pub fn extract_patches(
    cloud: &PointCloud,
    scan_id: &str,
    patch_size: usize,
    n_patches: usize,
    seed: u64,
) -> Result<Vec<Patch>> {
    let n = cloud.len();
    if patch_size == 0 || patch_size > n {
        return Err(Error::param(
            "patch_size",
            format!("must be in 1..={n}, got {patch_size}"),
        ));
    }
    if n_patches == 0 {
        return Err(Error::param("n_patches", "must be at least 1"));
    }
    let start = rng_from_seed(seed).random_range(0..n);
    let centers = farthest_point_sample(cloud, n_patches, start)?;
    centers
        .into_iter()
        .map(|c| {
            Ok(Patch {
                cloud: cloud.select(&nearest_block(cloud, c, patch_size))?,
                scan_id: scan_id.to_string(),
                center_index: c,
            })
        })
        .collect()
}

/// Manifest entry for one patch file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub file: String,
    pub scan_id: String,
    pub center_index: usize,
    pub seed: u64,
    pub patch_size: usize,
    pub normalized: bool,
}

/// Write patches as `patch_NNNN.xyz` plus `manifest.json` into `dir`.
/// With `normalize`, each patch is centered and scaled to the unit sphere
/// before writing.
pub fn write_patch_set(
    dir: &Path,
    patches: &[Patch],
    seed: u64,
    normalize: bool,
) -> Result<Vec<PatchRecord>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::with_capacity(patches.len());
    for (i, p) in patches.iter().enumerate() {
        let file = format!("patch_{i:04}.xyz");
        let cloud = if normalize {
            normalize_to_unit_sphere(&p.cloud).0
        } else {
            p.cloud.clone()
        };
        write_xyz(dir.join(&file), &cloud)?;
        records.push(PatchRecord {
            file,
            scan_id: p.scan_id.clone(),
            center_index: p.center_index,
            seed,
            patch_size: p.cloud.len(),
            normalized: normalize,
        });
    }
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&records)?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn scan_records_decode_in_order() {
        let mut bytes = Vec::new();
        for v in [1.0f32, 2.0, 3.0, 0.5, -4.0, 5.5, 6.0, 0.1] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let s = decode_scan(&bytes, Path::new("mem")).unwrap();
        assert_eq!(
            s.cloud.points(),
            &[Point3::new(1.0, 2.0, 3.0), Point3::new(-4.0, 5.5, 6.0)]
        );
        assert!(decode_scan(&[], Path::new("mem")).is_err());
        assert!(matches!(
            decode_scan(&bytes[..20], Path::new("mem")),
            Err(Error::Parse { offset: 16, .. })
        ));
    }

    #[test]
    fn non_finite_records_are_skipped() {
        let mut bytes = encode_scan(&PointCloud::from_xyz(&[[1.0, 1.0, 1.0]]).unwrap());
        for v in [f32::NAN, 0.0, 0.0, 0.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let s = decode_scan(&bytes, Path::new("mem")).unwrap();
        assert_eq!(s.cloud.len(), 1);
        assert_eq!(s.skipped_non_finite, 1);
    }

    #[test]
    fn point_on_x_axis_lands_mid_grid() {
        let proj = Projection::default();
        let mid = (proj.fov_up_deg + proj.fov_down_deg) / 2.0;
        let el = mid.to_radians();
        let p = Point3::new(10.0 * el.cos(), 0.0, 10.0 * el.sin());
        let (row, col, _) = proj.cell_of(p).unwrap();
        assert_eq!(col, proj.cols / 2);
        assert!(row == proj.rows / 2 || row + 1 == proj.rows / 2);
    }

    #[test]
    fn nearer_point_wins_collision() {
        let c = PointCloud::from_xyz(&[[7.0, 0.0, -0.5], [5.0, 0.0, -0.5 * 5.0 / 7.0]]).unwrap();
        let img = rasterize(&c, Projection::default()).unwrap();
        assert_eq!(img.occupied(), 1);
        assert_eq!(img.collisions(), 1);
        let cell = img.cells.iter().flatten().next().unwrap();
        assert_eq!(cell.index, 1);
        assert!((cell.depth - img.point(*cell).norm()).abs() < 1e-12);
    }

    #[test]
    fn origin_points_are_rejected() {
        let c = PointCloud::from_xyz(&[[0.0; 3], [3.0, 1.0, 0.0]]).unwrap();
        let img = rasterize(&c, Projection::default()).unwrap();
        assert_eq!(img.rejected_at_origin(), 1);
        assert_eq!(img.occupied(), 1);
    }

    #[test]
    fn bad_projection_rejected() {
        let c = PointCloud::from_xyz(&[[3.0, 1.0, 0.0]]).unwrap();
        let p = Projection {
            fov_up_deg: -30.0,
            ..Default::default()
        };
        assert!(rasterize(&c, p).is_err());
    }

    #[test]
    fn decimation_keeps_even_rows() {
        let proj = Projection {
            rows: 8,
            cols: 16,
            ..Default::default()
        };
        let cloud = synth::full_scan(proj, 3);
        let img = rasterize(&cloud, proj).unwrap();
        let low = decimate_rows(&img, 2).unwrap();
        assert_eq!(low.len(), 4 * 16);
        for p in low.iter() {
            assert_eq!(proj.cell_of(*p).unwrap().0 % 2, 0);
        }
        assert!(decimate_rows(&img, 3).is_err());
        assert!(decimate_rows(&img, 1).is_err());
    }

    #[test]
    fn single_odd_row_point_decimates_to_empty_error() {
        let proj = Projection {
            rows: 4,
            cols: 8,
            ..Default::default()
        };
        let p = proj.cell_center_ray(1, 3) * 10.0;
        let img = rasterize(&PointCloud::new(vec![p]).unwrap(), proj).unwrap();
        assert!(matches!(decimate_rows(&img, 2), Err(Error::EmptyResult(_))));
    }

    #[test]
    fn pgm_dump_shape() {
        let proj = Projection {
            rows: 2,
            cols: 3,
            ..Default::default()
        };
        let p = proj.cell_center_ray(0, 1) * 2.5;
        let img = rasterize(&PointCloud::new(vec![p]).unwrap(), proj).unwrap();
        assert_eq!(img.to_pgm_text(), "P2\n3 2\n2500\n0 2500 0\n0 0 0\n");
    }

    #[test]
    fn whole_cloud_single_patch() {
        let c = PointCloud::from_xyz(&[[0.0; 3], [3.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        let p = extract_patches(&c, "s", 3, 1, 0).unwrap();
        assert_eq!(p.len(), 1);
        let center = c.points()[p[0].center_index];
        let d: Vec<f64> = p[0].cloud.iter().map(|q| q.dist(center)).collect();
        assert!(d.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(p[0].cloud.points()[0], center);
        assert!(extract_patches(&c, "s", 4, 1, 0).is_err());
    }
}
