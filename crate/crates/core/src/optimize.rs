//! Free-point gradient descent: the output points themselves are the
//! parameters, and a chosen loss (sliced Wasserstein, Chamfer or auction
//! EMD) is minimized against a target cloud.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cloud::{jitter, DirectionSet, Point3, PointCloud};
use crate::error::{Error, Result};
use crate::metrics::{
    chamfer, chamfer_gradient, emd_auction_capped, swd, swd_gradient, Gradient, Reduction,
    DEFAULT_AUCTION_CAP,
};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    Swd,
    Chamfer,
    EmdAuction,
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Loss::Swd => "swd",
            Loss::Chamfer => "chamfer",
            Loss::EmdAuction => "emd-auction",
        })
    }
}

impl FromStr for Loss {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "swd" => Ok(Loss::Swd),
            "chamfer" | "cd" => Ok(Loss::Chamfer),
            "emd-auction" | "emd" => Ok(Loss::EmdAuction),
            _ => Err(Error::param(
                "loss",
                format!("unknown loss `{s}` (expected swd, chamfer or emd-auction)"),
            )),
        }
    }
}

/// Whether SWD directions are redrawn every step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionMode {
    #[default]
    PerStep,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizationConfig {
    pub loss: Loss,
    pub iterations: usize,
    pub step_size: f64,
    pub directions_per_step: usize,
    pub upsample_ratio: usize,
    pub init_jitter_sigma: f64,
    pub seed: u64,
    pub resample_directions: DirectionMode,
    pub auction_epsilon: f64,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        OptimizationConfig {
            loss: Loss::Swd,
            iterations: 500,
            step_size: 0.5,
            directions_per_step: 128,
            upsample_ratio: 2,
            init_jitter_sigma: 0.01,
            seed: 0,
            resample_directions: DirectionMode::PerStep,
            auction_epsilon: 1e-3,
        }
    }
}

impl OptimizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::param("iterations", "must be at least 1"));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::param("step_size", "must be finite and > 0"));
        }
        if self.directions_per_step == 0 {
            return Err(Error::param("directions_per_step", "must be at least 1"));
        }
        if self.upsample_ratio == 0 {
            return Err(Error::param("upsample_ratio", "must be at least 1"));
        }
        if !(self.init_jitter_sigma.is_finite() && self.init_jitter_sigma >= 0.0) {
            return Err(Error::param("init_jitter_sigma", "must be finite and >= 0"));
        }
        if !(self.auction_epsilon.is_finite() && self.auction_epsilon > 0.0) {
            return Err(Error::param("auction_epsilon", "must be finite and > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationTrace {
    /// Loss before each step.
    pub losses: Vec<f64>,
    #[serde(skip)]
    pub final_cloud: PointCloud,
    pub wall_time_secs: f64,
    pub config: OptimizationConfig,
}

impl OptimizationTrace {
    /// `step,loss` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            out.push_str(&format!("{i},{l}\n"));
        }
        out
    }
}

/// `r` copies of every source point; the first copy is exact and the others
/// get Gaussian jitter. Output order is copy-major: the first `N` points are
/// the source.
pub fn init_upsample(
    source: &PointCloud,
    ratio: usize,
    sigma: f64,
    seed: u64,
) -> Result<PointCloud> {
    if ratio == 0 {
        return Err(Error::param("upsample_ratio", "must be at least 1"));
    }
    let mut pts = Vec::with_capacity(source.len() * ratio);
    pts.extend_from_slice(source.points());
    for copy in 1..ratio {
        pts.extend_from_slice(jitter(source, sigma, derive_seed(seed, copy as u64))?.points());
    }
    PointCloud::new(pts)
}

fn emd_loss_and_gradient(x: &PointCloud, y: &PointCloud, epsilon: f64) -> Result<(f64, Gradient)> {
    let (loss, a) = emd_auction_capped(x, y, epsilon, Reduction::Mean, DEFAULT_AUCTION_CAP)?;
    let n = x.len() as f64;
    let grad = x
        .iter()
        .zip(&a.mapping)
        .map(|(&p, &j)| {
            let d = p - y.points()[j];
            let len = d.norm();
            if len > 0.0 {
                d / (len * n)
            } else {
                Point3::ZERO
            }
        })
        .collect();
    Ok((loss, Gradient(grad)))
}

/// Loss value and gradient at `x` for one step.
pub fn loss_and_gradient(
    loss: Loss,
    x: &PointCloud,
    target: &PointCloud,
    dirs: &DirectionSet,
    auction_epsilon: f64,
) -> Result<(f64, Gradient)> {
    match loss {
        Loss::Swd => Ok((swd(x, target, dirs)?, swd_gradient(x, target, dirs)?)),
        Loss::Chamfer => Ok((chamfer(x, target)?, chamfer_gradient(x, target)?)),
        Loss::EmdAuction => emd_loss_and_gradient(x, target, auction_epsilon),
    }
}

/// Plain fixed-step gradient descent from `init` towards `target`.
pub fn minimize(
    init: &PointCloud,
    target: &PointCloud,
    cfg: &OptimizationConfig,
) -> Result<OptimizationTrace> {
    minimize_with(init, target, cfg, None)
}

/// As [`minimize`], optionally pinning the SWD directions to `fixed`.
pub fn minimize_with(
    init: &PointCloud,
    target: &PointCloud,
    cfg: &OptimizationConfig,
    fixed: Option<&DirectionSet>,
) -> Result<OptimizationTrace> {
    cfg.validate()?;
    if cfg.loss != Loss::Chamfer && init.len() != target.len() {
        return Err(Error::InvalidInput(format!(
            "{} loss needs equal sizes, got {} and {}",
            cfg.loss,
            init.len(),
            target.len()
        )));
    }
    let started = Instant::now();
    let fixed_dirs = match fixed {
        Some(d) => Some(d.clone()),
        None if cfg.resample_directions == DirectionMode::Fixed => {
            Some(DirectionSet::sample(cfg.directions_per_step, cfg.seed)?)
        }
        None => None,
    };
    let mut points = init.points().to_vec();
    let mut losses = Vec::with_capacity(cfg.iterations);
    let mut limit = f64::INFINITY;
    for step in 0..cfg.iterations {
        let current = PointCloud::new(points)?;
        let dirs = match &fixed_dirs {
            Some(d) => d.clone(),
            None => {
                DirectionSet::sample(cfg.directions_per_step, derive_seed(cfg.seed, step as u64))?
            }
        };
        let (loss, grad) =
            loss_and_gradient(cfg.loss, &current, target, &dirs, cfg.auction_epsilon)?;
        if step == 0 {
            limit = 1e6 * loss;
        }
        if !loss.is_finite() || (limit > 0.0 && loss > limit) {
            return Err(Error::Divergence { step, loss, limit });
        }
        losses.push(loss);
        points = current.into_points();
        for (p, g) in points.iter_mut().zip(&grad.0) {
            *p -= *g * cfg.step_size;
        }
    }
    Ok(OptimizationTrace {
        losses,
        final_cloud: PointCloud::new(points)?,
        wall_time_secs: started.elapsed().as_secs_f64(),
        config: cfg.clone(),
    })
}

/// Parallel horizontal scan lines, the fixture for line-recovery runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanLines {
    pub cloud: PointCloud,
    /// Height of every line, ascending.
    pub levels: Vec<f64>,
    pub spacing: f64,
}

/// `lines` scan lines of `per_line` points each, stacked in z with unit
/// total height, running along x over [-0.5, 0.5] on a gently curved wall.
pub fn scan_lines(lines: usize, per_line: usize) -> ScanLines {
    assert!(lines >= 2 && per_line >= 2);
    let spacing = 1.0 / (lines - 1) as f64;
    let levels: Vec<f64> = (0..lines).map(|k| -0.5 + k as f64 * spacing).collect();
    let mut pts = Vec::with_capacity(lines * per_line);
    for &z in &levels {
        for i in 0..per_line {
            let x = -0.5 + i as f64 / (per_line - 1) as f64;
            pts.push(Point3::new(x, 0.1 * (3.0 * x).sin(), z));
        }
    }
    ScanLines {
        cloud: PointCloud::new(pts).unwrap(),
        levels,
        spacing,
    }
}

impl ScanLines {
    /// Every `factor`-th line starting with the first, as a new fixture.
    pub fn decimate(&self, factor: usize) -> ScanLines {
        let per_line = self.cloud.len() / self.levels.len();
        let keep: Vec<usize> = (0..self.levels.len()).filter(|k| k % factor == 0).collect();
        let pts = keep
            .iter()
            .flat_map(|&k| {
                self.cloud.points()[k * per_line..(k + 1) * per_line]
                    .iter()
                    .copied()
            })
            .collect();
        ScanLines {
            cloud: PointCloud::new(pts).unwrap(),
            levels: keep.iter().map(|&k| self.levels[k]).collect(),
            spacing: self.spacing * factor as f64,
        }
    }

    /// Fraction of lines with at least one point of `cloud` within half a
    /// line spacing in height.
    pub fn occupancy(&self, cloud: &PointCloud) -> f64 {
        let half = 0.5 * self.spacing;
        let hit = self
            .levels
            .iter()
            .filter(|&&z| cloud.iter().any(|p| (p.z - z).abs() <= half))
            .count();
        hit as f64 / self.levels.len() as f64
    }
}
