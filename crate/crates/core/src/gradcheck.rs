//! Central finite-difference checks of the analytic SWD and Chamfer gradients.
//!
//! Both losses are piecewise smooth: SWD kinks where a projected source point
//! meets its matched target or two projected source points swap, Chamfer
//! where a nearest neighbour changes. Configurations with such an event
//! inside the difference stencil are flagged as tie-adjacent and skipped.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cloud::{DirectionSet, Point3, PointCloud};
use crate::error::{Error, Result};
use crate::metrics::{chamfer, chamfer_gradient, swd, swd_gradient, Gradient};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckedLoss {
    Swd,
    Chamfer,
}

impl fmt::Display for CheckedLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckedLoss::Swd => "swd",
            CheckedLoss::Chamfer => "chamfer",
        })
    }
}

impl FromStr for CheckedLoss {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "swd" => Ok(CheckedLoss::Swd),
            "chamfer" | "cd" => Ok(CheckedLoss::Chamfer),
            _ => Err(Error::param(
                "loss",
                format!("unknown loss `{s}` (expected swd or chamfer)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub loss: CheckedLoss,
    pub n: usize,
    pub directions: usize,
    pub seed: u64,
    /// Number of accepted (non tie-adjacent) configurations.
    pub configs: usize,
    pub step: f64,
    pub tie_margin: f64,
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            loss: CheckedLoss::Swd,
            n: 24,
            directions: 8,
            seed: 1,
            configs: 1,
            step: 1e-5,
            tie_margin: 1e-6,
            tolerance: 1e-4,
        }
    }
}

impl GradcheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::param("n", "must be at least 2"));
        }
        if self.directions == 0 {
            return Err(Error::param("directions", "must be at least 1"));
        }
        if self.configs == 0 {
            return Err(Error::param("configs", "must be at least 1"));
        }
        for (name, v) in [
            ("step", self.step),
            ("tie_margin", self.tie_margin),
            ("tolerance", self.tolerance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, "must be finite and > 0"));
            }
        }
        Ok(())
    }

    /// Half-width within which a kink invalidates the difference quotient.
    fn exclusion(&self) -> f64 {
        self.tie_margin.max(self.step)
    }
}

/// One random configuration: source, target and directions.
#[derive(Debug, Clone)]
pub struct Configuration {
    pub source: PointCloud,
    pub target: PointCloud,
    pub directions: DirectionSet,
}

impl Configuration {
    /// Uniform points in [-1, 1]³ for both clouds, seeded per configuration.
    pub fn random(n: usize, directions: usize, seed: u64) -> Result<Self> {
        let cloud = |s: u64| {
            let mut rng = rng_from_seed(s);
            PointCloud::new(
                (0..n)
                    .map(|_| {
                        Point3::new(
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                        )
                    })
                    .collect(),
            )
        };
        Ok(Configuration {
            source: cloud(derive_seed(seed, 0))?,
            target: cloud(derive_seed(seed, 1))?,
            directions: DirectionSet::sample(directions, derive_seed(seed, 2))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckOutcome {
    /// Largest |analytic − numeric| over all coordinates, divided by the
    /// largest gradient component of either.
    pub relative_error: f64,
    pub absolute_error: f64,
    /// Smallest distance to a kink in the same units as the perturbation.
    pub tie_gap: f64,
}

fn loss_value(loss: CheckedLoss, x: &PointCloud, c: &Configuration) -> Result<f64> {
    match loss {
        CheckedLoss::Swd => swd(x, &c.target, &c.directions),
        CheckedLoss::Chamfer => chamfer(x, &c.target),
    }
}

fn analytic(loss: CheckedLoss, c: &Configuration) -> Result<Gradient> {
    match loss {
        CheckedLoss::Swd => swd_gradient(&c.source, &c.target, &c.directions),
        CheckedLoss::Chamfer => chamfer_gradient(&c.source, &c.target),
    }
}

/// Central differences over every coordinate of the source cloud.
pub fn numeric_gradient(loss: CheckedLoss, c: &Configuration, step: f64) -> Result<Vec<Point3>> {
    let mut pts = c.source.points().to_vec();
    let mut out = vec![Point3::ZERO; pts.len()];
    for i in 0..pts.len() {
        for axis in 0..3 {
            let orig = pts[i].coord(axis);
            *pts[i].coord_mut(axis) = orig + step;
            let up = loss_value(loss, &PointCloud::new(pts.clone())?, c)?;
            *pts[i].coord_mut(axis) = orig - step;
            let down = loss_value(loss, &PointCloud::new(pts.clone())?, c)?;
            *pts[i].coord_mut(axis) = orig;
            *out[i].coord_mut(axis) = (up - down) / (2.0 * step);
        }
    }
    Ok(out)
}

/// Distance from the configuration to the nearest kink of `loss`.
pub fn tie_gap(loss: CheckedLoss, c: &Configuration) -> f64 {
    let x = c.source.points();
    let y = c.target.points();
    let mut gap = f64::INFINITY;
    match loss {
        CheckedLoss::Swd => {
            for &d in c.directions.directions() {
                let mut px: Vec<f64> = x.iter().map(|p| p.dot(d)).collect();
                let mut py: Vec<f64> = y.iter().map(|p| p.dot(d)).collect();
                px.sort_by(f64::total_cmp);
                py.sort_by(f64::total_cmp);
                for k in 0..px.len() {
                    gap = gap.min((px[k] - py[k]).abs());
                    if k + 1 < px.len() {
                        gap = gap.min(px[k + 1] - px[k]);
                    }
                }
            }
        }
        CheckedLoss::Chamfer => {
            let two_nearest = |q: Point3, set: &[Point3]| {
                let mut best = [f64::INFINITY; 2];
                for p in set {
                    let d = q.dist(*p);
                    if d < best[0] {
                        best = [d, best[0]];
                    } else if d < best[1] {
                        best[1] = d;
                    }
                }
                best
            };
            // Only one source point moves at a time, so a source-side gap
            // closes twice as fast as a target-side one.
            for &q in x {
                let [a, b] = two_nearest(q, y);
                gap = gap.min((b - a) / 2.0);
            }
            for &q in y {
                let [a, b] = two_nearest(q, x);
                gap = gap.min(b - a);
            }
        }
    }
    gap
}

/// Compare analytic and numeric gradients on one configuration.
pub fn check(loss: CheckedLoss, c: &Configuration, step: f64) -> Result<CheckOutcome> {
    let a = analytic(loss, c)?;
    let f = numeric_gradient(loss, c, step)?;
    let mut abs_err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (ga, gf) in a.0.iter().zip(&f) {
        for axis in 0..3 {
            abs_err = abs_err.max((ga.coord(axis) - gf.coord(axis)).abs());
            scale = scale.max(ga.coord(axis).abs()).max(gf.coord(axis).abs());
        }
    }
    let relative_error = if scale > 0.0 {
        abs_err / scale
    } else {
        abs_err
    };
    Ok(CheckOutcome {
        relative_error,
        absolute_error: abs_err,
        tie_gap: tie_gap(loss, c),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub config: GradcheckConfig,
    pub checked: usize,
    pub skipped_tie_adjacent: usize,
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub passed: bool,
}

impl GradcheckReport {
    pub fn to_csv(&self) -> String {
        format!(
            "loss,n,directions,seed,checked,skipped_tie_adjacent,max_relative_error,max_absolute_error,tolerance,passed\n{},{},{},{},{},{},{},{},{},{}\n",
            self.config.loss,
            self.config.n,
            self.config.directions,
            self.config.seed,
            self.checked,
            self.skipped_tie_adjacent,
            self.max_relative_error,
            self.max_absolute_error,
            self.config.tolerance,
            self.passed
        )
    }
}

/// Check `cfg.configs` random configurations, skipping tie-adjacent ones.
pub fn run(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    cfg.validate()?;
    let mut checked = 0;
    let mut skipped = 0;
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut k = 0u64;
    while checked < cfg.configs {
        if skipped > 10 * cfg.configs + 100 {
            return Err(Error::InvalidInput(format!(
                "{skipped} of {} configurations were tie-adjacent; use fewer points or directions",
                skipped + checked
            )));
        }
        let c = Configuration::random(cfg.n, cfg.directions, derive_seed(cfg.seed, k))?;
        k += 1;
        if tie_gap(cfg.loss, &c) <= cfg.exclusion() {
            skipped += 1;
            continue;
        }
        let out = check(cfg.loss, &c, cfg.step)?;
        max_rel = max_rel.max(out.relative_error);
        max_abs = max_abs.max(out.absolute_error);
        checked += 1;
    }
    Ok(GradcheckReport {
        config: cfg.clone(),
        checked,
        skipped_tie_adjacent: skipped,
        max_relative_error: max_rel,
        max_absolute_error: max_abs,
        passed: max_rel < cfg.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_gradients_match_differences() {
        for loss in [CheckedLoss::Swd, CheckedLoss::Chamfer] {
            let r = run(&GradcheckConfig {
                loss,
                configs: 5,
                ..Default::default()
            })
            .unwrap();
            assert!(r.passed, "{loss}: {}", r.max_relative_error);
            assert_eq!(r.checked, 5);
        }
    }

    #[test]
    fn tie_adjacent_configuration_detected() {
        let mut c = Configuration::random(6, 2, 3).unwrap();
        let mut x = c.source.points().to_vec();
        x[1] = x[0];
        c.source = PointCloud::new(x).unwrap();
        assert_eq!(tie_gap(CheckedLoss::Swd, &c), 0.0);
        let mut y = c.target.points().to_vec();
        y[0] = c.source.points()[2] + Point3::new(0.3, 0.0, 0.0);
        y[1] = c.source.points()[2] - Point3::new(0.3, 0.0, 0.0);
        c.target = PointCloud::new(y).unwrap();
        assert!(tie_gap(CheckedLoss::Chamfer, &c) < 1e-12);
    }

    #[test]
    fn wrong_gradient_would_be_caught() {
        let c = Configuration::random(8, 4, 9).unwrap();
        let f = numeric_gradient(CheckedLoss::Chamfer, &c, 1e-5).unwrap();
        let a = chamfer_gradient(&c.source, &c.target).unwrap();
        let scaled: f64 =
            a.0.iter()
                .zip(&f)
                .map(|(a, f)| (*a * 1.01 - *f).norm())
                .fold(0.0, f64::max);
        assert!(scaled / a.max_norm() > 1e-4);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(run(&GradcheckConfig {
            n: 1,
            ..Default::default()
        })
        .is_err());
        assert!(run(&GradcheckConfig {
            step: 0.0,
            ..Default::default()
        })
        .is_err());
        assert!("hd".parse::<CheckedLoss>().is_err());
    }
}
