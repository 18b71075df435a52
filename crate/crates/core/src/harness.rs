//! Sensitivity sweeps (jitter and yaw rotation) with max-normalized curves,
//! and batch evaluation of paired prediction / ground-truth directories.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{jitter, rotate_yaw, DirectionSet, PointCloud};
use crate::error::{Error, Result};
use crate::io::read_cloud;
use crate::metrics::{evaluate_pair, Metric, MetricConfig, MetricReport};
use crate::rng::derive_seed;

pub const DEFAULT_JITTER_LEVELS: usize = 20;
pub const DEFAULT_ROTATION_ANGLES: usize = 25;
/// Metrics evaluated by a sweep unless the caller asks otherwise.
pub const DEFAULT_SWEEP_METRICS: [Metric; 4] = [Metric::Cd, Metric::Hd, Metric::Emd, Metric::Swd];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Jitter,
    Rotation,
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepKind::Jitter => "jitter",
            SweepKind::Rotation => "rotation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub metric: Metric,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub magnitudes: Vec<f64>,
    pub curves: Vec<Curve>,
    /// Jitter seed; unused by rotation sweeps.
    pub seed: u64,
    pub direction_seed: Option<u64>,
    pub direction_count: usize,
}

impl SweepResult {
    pub fn curve(&self, metric: Metric) -> Option<&Curve> {
        self.curves.iter().find(|c| c.metric == metric)
    }

    pub fn metrics(&self) -> Vec<Metric> {
        self.curves.iter().map(|c| c.metric).collect()
    }

    /// `magnitude,metric,raw,normalized`, grouped by metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("magnitude,metric,raw,normalized\n");
        for c in &self.curves {
            for ((m, r), n) in self.magnitudes.iter().zip(&c.raw).zip(&c.normalized) {
                out.push_str(&format!("{m},{},{r},{n}\n", c.metric));
            }
        }
        out
    }
}

/// Divide by the curve maximum; an all-zero curve stays all zero.
pub fn normalize_curve(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        raw.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; raw.len()]
    }
}

/// 0 followed by `levels - 1` log-spaced values from 1e-3·radius to 1e-1·radius.
pub fn default_jitter_levels(radius: f64, levels: usize) -> Vec<f64> {
    let mut out = vec![0.0];
    let steps = levels.saturating_sub(1);
    for i in 0..steps {
        let t = if steps == 1 {
            1.0
        } else {
            i as f64 / (steps - 1) as f64
        };
        out.push(radius * 10f64.powf(-3.0 + 2.0 * t));
    }
    out
}

/// `count` angles evenly spaced over [0, 2π], both ends included.
pub fn default_rotation_angles(count: usize) -> Vec<f64> {
    let count = count.max(2);
    (0..count)
        .map(|i| {
            if i + 1 == count {
                TAU
            } else {
                TAU * i as f64 / (count - 1) as f64
            }
        })
        .collect()
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either input has no spread.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn check_magnitudes(magnitudes: &[f64]) -> Result<()> {
    if magnitudes.is_empty() {
        return Err(Error::param("magnitudes", "at least one level is required"));
    }
    if magnitudes.iter().any(|m| !m.is_finite()) {
        return Err(Error::param("magnitudes", "levels must be finite"));
    }
    if magnitudes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param(
            "magnitudes",
            "levels must be strictly ascending",
        ));
    }
    Ok(())
}

fn unique_metrics(metrics: &[Metric]) -> Result<Vec<Metric>> {
    let mut out: Vec<Metric> = Vec::new();
    for &m in metrics {
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::param("metrics", "at least one metric is required"));
    }
    Ok(out)
}

/// Core sweep loop with an explicit direction set.
pub fn sweep_with_directions(
    kind: SweepKind,
    cloud: &PointCloud,
    magnitudes: &[f64],
    metrics: &[Metric],
    cfg: &MetricConfig,
    dirs: &DirectionSet,
    seed: u64,
) -> Result<SweepResult> {
    cfg.validate()?;
    check_magnitudes(magnitudes)?;
    let metrics = unique_metrics(metrics)?;
    match kind {
        SweepKind::Jitter => {
            if magnitudes[0] != 0.0 {
                return Err(Error::param("sigmas", "the first level must be 0"));
            }
            if magnitudes.iter().any(|&s| s < 0.0) {
                return Err(Error::param("sigmas", "levels must be >= 0"));
            }
        }
        SweepKind::Rotation => {}
    }
    // Entropic self-distance is subtracted so the curve starts at zero.
    let sinkhorn_floor = if metrics.contains(&Metric::Sinkhorn) {
        Metric::Sinkhorn.evaluate(cloud, cloud, cfg, dirs)?
    } else {
        0.0
    };
    let rows: Vec<Vec<f64>> = magnitudes
        .par_iter()
        .enumerate()
        .map(|(i, &m)| {
            let moved = match kind {
                SweepKind::Jitter => jitter(cloud, m, derive_seed(seed, i as u64))?,
                SweepKind::Rotation => rotate_yaw(cloud, m)?,
            };
            metrics
                .iter()
                .map(|&metric| {
                    let v = metric.evaluate(cloud, &moved, cfg, dirs)?;
                    Ok(if metric == Metric::Sinkhorn {
                        (v - sinkhorn_floor).max(0.0)
                    } else {
                        v
                    })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let curves = metrics
        .iter()
        .enumerate()
        .map(|(j, &metric)| {
            let raw: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            Curve {
                metric,
                normalized: normalize_curve(&raw),
                raw,
            }
        })
        .collect();
    Ok(SweepResult {
        kind,
        magnitudes: magnitudes.to_vec(),
        curves,
        seed,
        direction_seed: dirs.seed(),
        direction_count: dirs.len(),
    })
}

/// Distances between `cloud` and jittered copies of it, one per sigma.
pub fn jitter_sweep(
    cloud: &PointCloud,
    sigmas: &[f64],
    metrics: &[Metric],
    cfg: &MetricConfig,
    seed: u64,
) -> Result<SweepResult> {
    cfg.validate()?;
    sweep_with_directions(
        SweepKind::Jitter,
        cloud,
        sigmas,
        metrics,
        cfg,
        &cfg.directions()?,
        seed,
    )
}

/// Distances between `cloud` and yaw-rotated copies of it, one per angle.
pub fn rotation_sweep(
    cloud: &PointCloud,
    angles: &[f64],
    metrics: &[Metric],
    cfg: &MetricConfig,
) -> Result<SweepResult> {
    cfg.validate()?;
    sweep_with_directions(
        SweepKind::Rotation,
        cloud,
        angles,
        metrics,
        cfg,
        &cfg.directions()?,
        0,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetReport {
    pub rows: Vec<MetricReport>,
    pub aggregate: Option<MetricReport>,
    /// Files present in only one of the two directories.
    pub unmatched: Vec<String>,
}

impl DatasetReport {
    /// Per-pair rows followed by the `mean` row.
    pub fn to_csv(&self) -> String {
        let mut all = self.rows.clone();
        all.extend(self.aggregate.clone());
        crate::metrics::reports_to_csv(&all)
    }
}

fn list_files(dir: &Path) -> Result<BTreeMap<String, std::path::PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() {
            out.insert(entry.file_name().to_string_lossy().into_owned(), path);
        }
    }
    Ok(out)
}

/// Evaluate every same-named file pair of `pred_dir` and `gt_dir`.
pub fn evaluate_dataset(
    pred_dir: &Path,
    gt_dir: &Path,
    cfg: &MetricConfig,
) -> Result<DatasetReport> {
    cfg.validate()?;
    let pred = list_files(pred_dir)?;
    let gt = list_files(gt_dir)?;
    let unmatched: Vec<String> = pred
        .keys()
        .filter(|k| !gt.contains_key(*k))
        .chain(gt.keys().filter(|k| !pred.contains_key(*k)))
        .cloned()
        .collect();
    for name in &unmatched {
        log::warn!("no counterpart for `{name}`, skipped");
    }
    let pairs: Vec<(&String, &std::path::PathBuf, &std::path::PathBuf)> = pred
        .iter()
        .filter_map(|(k, p)| gt.get(k).map(|g| (k, p, g)))
        .collect();
    let rows = pairs
        .par_iter()
        .map(|(name, p, g)| evaluate_pair(name, &read_cloud(p)?, &read_cloud(g)?, cfg))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = MetricReport::aggregate(&rows, "mean");
    Ok(DatasetReport {
        rows,
        aggregate,
        unmatched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point3;
    use crate::metrics::EmdKind;

    fn small_cfg() -> MetricConfig {
        MetricConfig {
            swd_directions: 32,
            ..Default::default()
        }
    }

    #[test]
    fn normalization_contract() {
        let n = normalize_curve(&[0.0, 2.0, 1.0, 4.0]);
        assert_eq!(n, vec![0.0, 0.5, 0.25, 1.0]);
        assert_eq!(normalize_curve(&n), n);
        assert_eq!(normalize_curve(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn default_levels() {
        let s = default_jitter_levels(2.0, 20);
        assert_eq!(s.len(), 20);
        assert_eq!(s[0], 0.0);
        assert!((s[1] - 2e-3).abs() < 1e-15 && (s[19] - 0.2).abs() < 1e-12);
        assert!(s.windows(2).all(|w| w[1] > w[0]));
        let a = default_rotation_angles(25);
        assert_eq!((a[0], a[24], a.len()), (0.0, TAU, 25));
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), 0.0);
        // Ties get the average rank.
        assert!(
            (spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]) - 0.9486832980505138).abs()
                < 1e-12
        );
    }

    #[test]
    fn jitter_sweep_zero_row_and_bounds() {
        let c = crate::synth::ring_cloud(4, 32);
        let sigmas = default_jitter_levels(1.0, 6);
        let all = [
            Metric::Cd,
            Metric::Hd,
            Metric::Emd,
            Metric::Swd,
            Metric::Sinkhorn,
        ];
        let r = jitter_sweep(&c, &sigmas, &all, &small_cfg(), 3).unwrap();
        for curve in &r.curves {
            assert_eq!(curve.raw[0], 0.0, "{}", curve.metric);
            assert!(curve.normalized.iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(curve.normalized.iter().copied().fold(0.0, f64::max), 1.0);
            assert!(spearman(&sigmas, &curve.raw) > 0.9, "{}", curve.metric);
        }
        assert_eq!(r, jitter_sweep(&c, &sigmas, &all, &small_cfg(), 3).unwrap());
        assert_eq!(r.to_csv().lines().count(), 1 + 5 * sigmas.len());
    }

    #[test]
    fn sweep_rejects_bad_levels() {
        let c = crate::synth::ring_cloud(2, 8);
        let cfg = small_cfg();
        assert!(jitter_sweep(&c, &[0.1, 0.2], &[Metric::Cd], &cfg, 0).is_err());
        assert!(jitter_sweep(&c, &[0.0, 0.2, 0.1], &[Metric::Cd], &cfg, 0).is_err());
        assert!(jitter_sweep(&c, &[0.0, 0.1], &[], &cfg, 0).is_err());
        assert!(rotation_sweep(&c, &[0.0, 0.0], &[Metric::Cd], &cfg).is_err());
    }

    #[test]
    fn rotation_curve_symmetric_on_ring() {
        let c = crate::synth::ring_cloud(3, 17);
        // Direction set closed under y -> -y, matching the ring's mirror symmetry.
        let base = DirectionSet::sample(16, 5).unwrap();
        let mut v = base.directions().to_vec();
        v.extend(
            base.directions()
                .iter()
                .map(|d| Point3::new(d.x, -d.y, d.z)),
        );
        let dirs = DirectionSet::from_vectors(v).unwrap();
        let angles = default_rotation_angles(25);
        let all = [
            Metric::Cd,
            Metric::Hd,
            Metric::Emd,
            Metric::Swd,
            Metric::Sinkhorn,
        ];
        let r = sweep_with_directions(
            SweepKind::Rotation,
            &c,
            &angles,
            &all,
            &small_cfg(),
            &dirs,
            0,
        )
        .unwrap();
        for curve in &r.curves {
            let n = angles.len();
            for i in 0..n {
                assert!(
                    (curve.raw[i] - curve.raw[n - 1 - i]).abs() < 1e-6,
                    "{} at {i}",
                    curve.metric
                );
            }
            assert!(
                curve.normalized[0] <= 1e-6 && curve.normalized[n - 1] <= 1e-6,
                "{}",
                curve.metric
            );
        }
    }

    #[test]
    fn dataset_evaluation() {
        let dir = tempfile::tempdir().unwrap();
        let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
        std::fs::create_dir_all(&pred).unwrap();
        std::fs::create_dir_all(&gt).unwrap();
        let a = crate::synth::ring_cloud(2, 16);
        let b = jitter(&a, 0.05, 1).unwrap();
        crate::io::write_xyz(pred.join("a.xyz"), &a).unwrap();
        crate::io::write_xyz(gt.join("a.xyz"), &a).unwrap();
        let same = evaluate_dataset(&pred, &gt, &small_cfg()).unwrap();
        let agg = same.aggregate.clone().unwrap();
        assert_eq!((agg.cd, agg.hd, agg.emd, agg.swd), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(
            MetricReport {
                pair_id: "a.xyz".into(),
                ..agg
            },
            same.rows[0]
        );

        crate::io::write_xyz(pred.join("b.xyz"), &b).unwrap();
        crate::io::write_xyz(gt.join("b.xyz"), &a).unwrap();
        crate::io::write_xyz(gt.join("c.xyz"), &a).unwrap();
        let r = evaluate_dataset(&pred, &gt, &small_cfg()).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.unmatched, vec!["c.xyz".to_string()]);
        assert!(r.aggregate.as_ref().unwrap().cd > 0.0);
        assert_eq!(r.to_csv().lines().count(), 4);
        assert_eq!(r, evaluate_dataset(&pred, &gt, &small_cfg()).unwrap());
    }

    #[test]
    fn dataset_emd_kind_follows_cap() {
        let dir = tempfile::tempdir().unwrap();
        let a = crate::synth::lidar_patch(2048, 1);
        let b = jitter(&a, 0.01, 2).unwrap();
        crate::io::write_f32_triples(dir.path().join("p.bin32"), &a).unwrap();
        let gt = dir.path().join("gt");
        std::fs::create_dir(&gt).unwrap();
        crate::io::write_f32_triples(gt.join("p.bin32"), &b).unwrap();
        let pred = dir.path().join("pred");
        std::fs::create_dir(&pred).unwrap();
        std::fs::rename(dir.path().join("p.bin32"), pred.join("p.bin32")).unwrap();
        let r = evaluate_dataset(&pred, &gt, &small_cfg()).unwrap();
        assert_eq!(r.rows[0].emd_kind, EmdKind::Auction);
        let raised = MetricConfig {
            emd_exact_cap: 2048,
            ..small_cfg()
        };
        assert_eq!(
            evaluate_dataset(&pred, &gt, &raised).unwrap().rows[0].emd_kind,
            EmdKind::Exact
        );
    }
}
