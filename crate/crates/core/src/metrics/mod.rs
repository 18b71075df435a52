//! Point-set distances and their gradients.
//!
//! | metric | function | sizes |
//! |--------|----------|-------|
//! | Chamfer (squared NN) | [`chamfer`] | any |
//! | Hausdorff | [`hausdorff`] | any |
//! | exact EMD | [`emd_exact`] | equal, N ≤ cap |
//! | auction EMD | [`emd_auction`] | equal |
//! | Sinkhorn | [`sinkhorn`] | any |
//! | sliced Wasserstein | [`swd`] | equal |

pub mod assignment;
pub mod nearest;
pub mod sinkhorn;
pub mod sliced;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cloud::{DirectionSet, Point3, PointCloud};
use crate::error::{Error, Result};

pub use assignment::{
    emd_auction, emd_auction_capped, emd_exact, emd_exact_capped, Assignment, Reduction,
    DEFAULT_AUCTION_CAP, DEFAULT_EXACT_CAP,
};
pub use nearest::{chamfer, chamfer_gradient, hausdorff};
pub use sinkhorn::{sinkhorn, sinkhorn_solve, SinkhornSolution};
pub use sliced::{swd, swd_gradient, swd_per_direction};

/// Per-point gradient, aligned with the differentiated cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient(pub Vec<Point3>);

impl Gradient {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_norm(&self) -> f64 {
        self.0.iter().map(|g| g.norm()).fold(0.0, f64::max)
    }
}

/// Parameters shared by every metric evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub emd_reduction: Reduction,
    pub swd_directions: usize,
    pub swd_seed: u64,
    pub sinkhorn_regularization: f64,
    pub sinkhorn_max_iters: usize,
    pub auction_epsilon: f64,
    /// Largest N evaluated with the exact solver; above it the auction runs.
    pub emd_exact_cap: usize,
    pub emd_auction_cap: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            emd_reduction: Reduction::Mean,
            swd_directions: 128,
            swd_seed: 0,
            sinkhorn_regularization: 0.01,
            sinkhorn_max_iters: 1000,
            auction_epsilon: 1e-3,
            emd_exact_cap: DEFAULT_EXACT_CAP,
            emd_auction_cap: DEFAULT_AUCTION_CAP,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swd_directions == 0 {
            return Err(Error::param("swd_directions", "must be at least 1"));
        }
        if !(self.sinkhorn_regularization.is_finite() && self.sinkhorn_regularization > 0.0) {
            return Err(Error::param(
                "sinkhorn_regularization",
                "must be finite and > 0",
            ));
        }
        if !(self.auction_epsilon.is_finite() && self.auction_epsilon > 0.0) {
            return Err(Error::param("auction_epsilon", "must be finite and > 0"));
        }
        if self.sinkhorn_max_iters == 0 {
            return Err(Error::param("sinkhorn_max_iters", "must be at least 1"));
        }
        Ok(())
    }

    pub fn directions(&self) -> Result<DirectionSet> {
        DirectionSet::sample(self.swd_directions, self.swd_seed)
    }

    /// EMD through the exact solver when N fits under the cap, else auction.
    pub fn emd(&self, x: &PointCloud, y: &PointCloud) -> Result<(f64, EmdKind)> {
        if x.len() <= self.emd_exact_cap {
            let (v, _) = emd_exact_capped(x, y, self.emd_reduction, self.emd_exact_cap)?;
            Ok((v, EmdKind::Exact))
        } else {
            let (v, _) = emd_auction_capped(
                x,
                y,
                self.auction_epsilon,
                self.emd_reduction,
                self.emd_auction_cap,
            )?;
            Ok((v, EmdKind::Auction))
        }
    }
}

/// Which solver produced an EMD value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmdKind {
    Exact,
    Auction,
}

impl fmt::Display for EmdKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmdKind::Exact => "exact",
            EmdKind::Auction => "auction",
        })
    }
}

/// Selectable metric for sweeps and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Cd,
    Hd,
    Emd,
    Swd,
    Sinkhorn,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Cd,
        Metric::Hd,
        Metric::Emd,
        Metric::Swd,
        Metric::Sinkhorn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Cd => "cd",
            Metric::Hd => "hd",
            Metric::Emd => "emd",
            Metric::Swd => "swd",
            Metric::Sinkhorn => "sinkhorn",
        }
    }

    /// Evaluate with an explicit direction set (used only by SWD).
    pub fn evaluate(
        self,
        x: &PointCloud,
        y: &PointCloud,
        cfg: &MetricConfig,
        dirs: &DirectionSet,
    ) -> Result<f64> {
        match self {
            Metric::Cd => chamfer(x, y),
            Metric::Hd => hausdorff(x, y),
            Metric::Emd => cfg.emd(x, y).map(|(v, _)| v),
            Metric::Swd => swd(x, y, dirs),
            Metric::Sinkhorn => sinkhorn(x, y, cfg.sinkhorn_regularization, cfg.sinkhorn_max_iters),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::param(
                    "metric",
                    format!("unknown metric `{s}` (expected cd, hd, emd, swd or sinkhorn)"),
                )
            })
    }
}

/// One row of a metric table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pair_id: String,
    pub cd: f64,
    pub hd: f64,
    pub emd: f64,
    pub emd_kind: EmdKind,
    pub swd: f64,
}

pub const REPORT_CSV_HEADER: &str = "pair_id,cd,hd,emd,emd_kind,swd";

impl MetricReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.pair_id, self.cd, self.hd, self.emd, self.emd_kind, self.swd
        )
    }

    /// Mean over rows; the EMD kind is `auction` if any row used it.
    pub fn aggregate(rows: &[MetricReport], pair_id: &str) -> Option<MetricReport> {
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let mean = |f: fn(&MetricReport) -> f64| rows.iter().map(f).sum::<f64>() / n;
        Some(MetricReport {
            pair_id: pair_id.to_string(),
            cd: mean(|r| r.cd),
            hd: mean(|r| r.hd),
            emd: mean(|r| r.emd),
            emd_kind: if rows.iter().any(|r| r.emd_kind == EmdKind::Auction) {
                EmdKind::Auction
            } else {
                EmdKind::Exact
            },
            swd: mean(|r| r.swd),
        })
    }
}

pub fn reports_to_csv(rows: &[MetricReport]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Evaluate all four table metrics for one predicted/ground-truth pair.
pub fn evaluate_pair(
    pair_id: &str,
    pred: &PointCloud,
    gt: &PointCloud,
    cfg: &MetricConfig,
) -> Result<MetricReport> {
    cfg.validate()?;
    let dirs = cfg.directions()?;
    let (emd, emd_kind) = cfg.emd(pred, gt)?;
    Ok(MetricReport {
        pair_id: pair_id.to_string(),
        cd: chamfer(pred, gt)?,
        hd: hausdorff(pred, gt)?,
        emd,
        emd_kind,
        swd: swd(pred, gt, &dirs)?,
    })
}
