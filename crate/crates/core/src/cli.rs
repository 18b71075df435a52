//! Command-line front end.
//!
//! Every subcommand resolves its parameters in three layers: built-in
//! defaults, then an optional `--config` JSON object, then flags. The
//! resolved parameters are written to `run_manifest.json` in the output
//! directory, and `replay --manifest` reruns a subcommand from that file.
//!
//! Exit status: 0 on success, 1 on invalid arguments or data, 2 on I/O
//! failures.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::cloud::{normalize_to_unit_sphere, PointCloud};
use crate::error::{Error, Result};
use crate::gradcheck::GradcheckConfig;
use crate::harness::{
    default_jitter_levels, default_rotation_angles, evaluate_dataset, sweep_with_directions,
    SweepKind, DEFAULT_JITTER_LEVELS, DEFAULT_ROTATION_ANGLES, DEFAULT_SWEEP_METRICS,
};
use crate::io::{read_cloud, to_xyz_string};
use crate::lidar::{extract_patches, make_pair, rasterize, write_patch_set, Projection};
use crate::metrics::{evaluate_pair, reports_to_csv, Metric, MetricConfig};
use crate::optimize::{init_upsample, minimize, OptimizationConfig};

/// Environment variable holding the default worker cap.
pub const THREADS_ENV: &str = "LIDAR_OT_THREADS";
pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Debug, Parser)]
#[command(
    name = "lidar-ot",
    version,
    about = "Point-set optimal transport tools for lidar upsampling"
)]
struct Cli {
    /// Worker threads (0 = all cores). Defaults to $LIDAR_OT_THREADS, else 0.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON object of parameters; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Project a scan onto a range image.
    Rasterize(RasterizeArgs),
    /// Split a scan into low/high resolution clouds by dropping scan lines.
    Decimate(DecimateArgs),
    /// Cut fixed-size patches around farthest-point-sampled centers.
    Patch(PatchArgs),
    /// CD/HD/EMD/SWD report for one pair of clouds or two directories.
    Metrics(MetricsArgs),
    /// Metric response to growing jitter or yaw rotation.
    Sweep(SweepArgs),
    /// Upsample a cloud by gradient descent on free points.
    Upsample(UpsampleArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Rerun a subcommand from its run manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Default, Args, Serialize)]
struct ProjectionArgs {
    /// Range-image rows (scan lines).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    rows: Option<usize>,
    /// Range-image columns (azimuth bins).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    cols: Option<usize>,
    /// Upper edge of the vertical field of view, degrees.
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    fov_up_deg: Option<f64>,
    /// Lower edge of the vertical field of view, degrees.
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    fov_down_deg: Option<f64>,
}

#[derive(Debug, Default, Args, Serialize)]
struct MetricArgs {
    /// Number of SWD projection directions.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    swd_directions: Option<usize>,
    /// Seed of the SWD direction set.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    swd_seed: Option<u64>,
    /// EMD reduction: mean or sum.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    emd_reduction: Option<String>,
    /// Auction epsilon for EMD above the exact cap.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    auction_epsilon: Option<f64>,
    /// Largest size solved exactly.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    emd_exact_cap: Option<usize>,
    /// Largest size accepted by the auction solver.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    emd_auction_cap: Option<usize>,
    /// Sinkhorn entropic regularization.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sinkhorn_regularization: Option<f64>,
    /// Sinkhorn iteration budget.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sinkhorn_max_iters: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct RasterizeArgs {
    /// Input scan (.bin KITTI records, .xyz text, or packed f32 triples).
    #[arg(long = "in", alias = "input", value_name = "PATH")]
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[command(flatten)]
    projection: ProjectionArgs,
}

#[derive(Debug, Args, Serialize)]
struct DecimateArgs {
    /// Input scan.
    #[arg(long = "in", alias = "input", value_name = "PATH")]
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Keep one scan line out of every `factor`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    factor: Option<usize>,
    /// Index of the first kept line, below `factor`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    phase: Option<usize>,
    #[command(flatten)]
    projection: ProjectionArgs,
}

#[derive(Debug, Args, Serialize)]
struct PatchArgs {
    /// Input cloud or scan.
    #[arg(long = "in", alias = "input", value_name = "PATH")]
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Points per patch.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    patch_size: Option<usize>,
    /// Number of patches.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    patches: Option<usize>,
    /// Seed choosing the first patch center.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Center and scale each patch to the unit sphere.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    normalize: Option<bool>,
}

#[derive(Debug, Args, Serialize)]
struct MetricsArgs {
    /// Predicted cloud.
    #[arg(long, value_name = "PATH")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pred: Option<PathBuf>,
    /// Ground-truth cloud.
    #[arg(long, value_name = "PATH")]
    #[serde(skip_serializing_if = "Option::is_none")]
    gt: Option<PathBuf>,
    /// Directory of predicted clouds, paired with --gt-dir by file name.
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pred_dir: Option<PathBuf>,
    /// Directory of ground-truth clouds.
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    gt_dir: Option<PathBuf>,
    /// Output directory (the report is always printed).
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[command(flatten)]
    metric: MetricArgs,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    /// Perturbation to sweep.
    #[arg(value_parser = ["jitter", "rotation"])]
    kind: String,
    /// Input cloud; without it a synthetic lidar patch is used.
    #[arg(long = "in", alias = "input", value_name = "PATH")]
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,
    /// Size of the synthetic patch.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    synthetic_points: Option<usize>,
    /// Seed of the synthetic patch.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    synthetic_seed: Option<u64>,
    /// Normalize the input to the unit sphere first.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    normalize: Option<bool>,
    /// Number of sweep levels (default 20 for jitter, 25 for rotation).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    levels: Option<usize>,
    /// Comma-separated metrics: cd, hd, emd, swd, sinkhorn.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<Vec<String>>,
    /// Jitter seed.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[command(flatten)]
    metric: MetricArgs,
}

#[derive(Debug, Default, Args, Serialize)]
struct OptimizationArgs {
    /// Loss: swd, chamfer or emd-auction.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    loss: Option<String>,
    /// Gradient steps.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    /// Step size.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    step_size: Option<f64>,
    /// SWD directions per step.
    #[arg(long, alias = "dirs")]
    #[serde(skip_serializing_if = "Option::is_none")]
    directions_per_step: Option<usize>,
    /// Output points per input point.
    #[arg(long, alias = "ratio")]
    #[serde(skip_serializing_if = "Option::is_none")]
    upsample_ratio: Option<usize>,
    /// Jitter applied to the duplicated copies.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    init_jitter_sigma: Option<f64>,
    /// Seed for initialization and directions.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// per-step or fixed.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    resample_directions: Option<String>,
    /// Auction epsilon for the emd-auction loss.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    auction_epsilon: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct UpsampleArgs {
    /// Low-resolution source cloud.
    #[arg(long = "in", alias = "input", value_name = "PATH")]
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,
    /// Target cloud the free points are fitted to.
    #[arg(long, value_name = "PATH")]
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[command(flatten)]
    optimization: OptimizationArgs,
}

#[derive(Debug, Default, Args, Serialize)]
struct GradcheckFlags {
    /// Loss to check: swd or chamfer.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    loss: Option<String>,
    /// Points per cloud.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    /// SWD directions.
    #[arg(long = "dirs", alias = "directions")]
    #[serde(skip_serializing_if = "Option::is_none")]
    directions: Option<usize>,
    /// Seed of the random configurations and directions.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Number of configurations to check.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    configs: Option<usize>,
    /// Finite-difference step.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    step: Option<f64>,
    /// Maximum accepted relative error.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tolerance: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct GradcheckArgs {
    /// Output directory (the report is always printed).
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[command(flatten)]
    gradcheck: GradcheckFlags,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// A run_manifest.json written by an earlier run.
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Write outputs here instead of the recorded directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RasterizeParams {
    input: Option<PathBuf>,
    out: Option<PathBuf>,
    projection: Projection,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DecimateParams {
    input: Option<PathBuf>,
    out: Option<PathBuf>,
    factor: usize,
    phase: usize,
    projection: Projection,
}

impl Default for DecimateParams {
    fn default() -> Self {
        DecimateParams {
            input: None,
            out: None,
            factor: 2,
            phase: 0,
            projection: Projection::default(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PatchParams {
    input: Option<PathBuf>,
    out: Option<PathBuf>,
    patch_size: usize,
    patches: usize,
    seed: u64,
    normalize: bool,
}

impl Default for PatchParams {
    fn default() -> Self {
        PatchParams {
            input: None,
            out: None,
            patch_size: 2048,
            patches: 8,
            seed: 0,
            normalize: false,
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MetricsParams {
    pred: Option<PathBuf>,
    gt: Option<PathBuf>,
    pred_dir: Option<PathBuf>,
    gt_dir: Option<PathBuf>,
    out: Option<PathBuf>,
    metric: MetricConfig,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepParams {
    kind: SweepKind,
    input: Option<PathBuf>,
    synthetic_points: usize,
    synthetic_seed: u64,
    normalize: bool,
    levels: Option<usize>,
    metrics: Vec<Metric>,
    seed: u64,
    out: Option<PathBuf>,
    metric: MetricConfig,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            kind: SweepKind::Jitter,
            input: None,
            synthetic_points: 2048,
            synthetic_seed: 0,
            normalize: false,
            levels: None,
            metrics: DEFAULT_SWEEP_METRICS.to_vec(),
            seed: 0,
            out: None,
            metric: MetricConfig::default(),
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct UpsampleParams {
    input: Option<PathBuf>,
    target: Option<PathBuf>,
    out: Option<PathBuf>,
    optimization: OptimizationConfig,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GradcheckParams {
    out: Option<PathBuf>,
    gradcheck: GradcheckConfig,
}

/// Record of one successful run, written as `run_manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Fully resolved parameters, including input and output paths.
    pub config: Value,
    pub inputs: Vec<PathBuf>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
    pub seeds: BTreeMap<String, u64>,
    pub threads: usize,
    pub version: String,
    pub wall_time_secs: f64,
}

/// Files produced by a subcommand, all inside one directory.
struct Outputs {
    dir: Option<PathBuf>,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: Option<PathBuf>) -> Result<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        Ok(Outputs {
            dir,
            files: Vec::new(),
        })
    }

    fn required(dir: Option<PathBuf>) -> Result<Self> {
        if dir.is_none() {
            return Err(Error::param("out", "an output directory is required"));
        }
        Outputs::new(dir)
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        if let Some(d) = &self.dir {
            let path = d.join(name);
            fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
            self.files.push(name.to_string());
        }
        Ok(())
    }

    fn record(&mut self, name: String) {
        self.files.push(name);
    }
}

/// What a subcommand hands back to the dispatcher.
struct Finished {
    outputs: Outputs,
    inputs: Vec<PathBuf>,
    status: i32,
}

fn deep_merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Defaults, then `file`, then `flags`, deserialized into `P`.
fn resolve<P: Default + Serialize + DeserializeOwned>(
    file: Option<&Value>,
    flags: Value,
) -> Result<(P, Value)> {
    let mut merged = serde_json::to_value(P::default())?;
    if let Some(f) = file {
        deep_merge(&mut merged, f.clone());
    }
    deep_merge(&mut merged, flags);
    let params: P = serde_json::from_value(merged)
        .map_err(|e| Error::InvalidInput(format!("configuration: {e}")))?;
    let resolved = serde_json::to_value(&params)?;
    Ok((params, resolved))
}

fn collect_seeds(prefix: &str, v: &Value, out: &mut BTreeMap<String, u64>) {
    if let Value::Object(m) = v {
        for (k, child) in m {
            let key = if prefix.is_empty() {
                k.clone()
            } else {
                format!("{prefix}.{k}")
            };
            match child {
                Value::Object(_) => collect_seeds(&key, child, out),
                Value::Number(n) if k.contains("seed") => {
                    if let Some(s) = n.as_u64() {
                        out.insert(key, s);
                    }
                }
                _ => {}
            }
        }
    }
}

fn need(path: Option<PathBuf>, name: &'static str) -> Result<PathBuf> {
    path.ok_or_else(|| Error::param(name, "this path is required"))
}

fn run_rasterize(p: RasterizeParams) -> Result<Finished> {
    let input = need(p.input, "input")?;
    p.projection.validate()?;
    let mut out = Outputs::required(p.out)?;
    let cloud = read_cloud(&input)?;
    let img = rasterize(&cloud, p.projection)?;
    out.write("range.pgm", img.to_pgm_text())?;
    let mut cells = String::from("row,col,range,index,x,y,z\n");
    for r in 0..img.rows() {
        for c in 0..img.cols() {
            if let Some(cell) = img.cell(r, c) {
                let q = img.point(cell);
                cells.push_str(&format!(
                    "{r},{c},{},{},{},{},{}\n",
                    cell.depth, cell.index, q.x, q.y, q.z
                ));
            }
        }
    }
    out.write("cells.csv", cells)?;
    let summary = serde_json::json!({
        "points": cloud.len(),
        "rows": img.rows(),
        "cols": img.cols(),
        "occupied": img.occupied(),
        "collisions": img.collisions(),
        "rejected_at_origin": img.rejected_at_origin(),
    });
    out.write(
        "summary.json",
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(Finished {
        outputs: out,
        inputs: vec![input],
        status: 0,
    })
}

fn run_decimate(p: DecimateParams) -> Result<Finished> {
    let input = need(p.input, "input")?;
    p.projection.validate()?;
    let mut out = Outputs::required(p.out)?;
    let cloud = read_cloud(&input)?;
    let img = rasterize(&cloud, p.projection)?;
    let (low, high) = make_pair(&img, p.factor, p.phase)?;
    out.write("low.xyz", to_xyz_string(&low))?;
    out.write("high.xyz", to_xyz_string(&high))?;
    log::info!(
        "decimated {} points to {} (factor {})",
        high.len(),
        low.len(),
        p.factor
    );
    Ok(Finished {
        outputs: out,
        inputs: vec![input],
        status: 0,
    })
}

fn run_patch(p: PatchParams) -> Result<Finished> {
    let input = need(p.input, "input")?;
    let mut out = Outputs::required(p.out)?;
    let cloud = read_cloud(&input)?;
    let scan_id = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let patches = extract_patches(&cloud, &scan_id, p.patch_size, p.patches, p.seed)?;
    let dir = out.dir.clone().expect("output directory checked above");
    for r in write_patch_set(&dir, &patches, p.seed, p.normalize)? {
        out.record(r.file);
    }
    out.record("manifest.json".to_string());
    Ok(Finished {
        outputs: out,
        inputs: vec![input],
        status: 0,
    })
}

fn run_metrics(p: MetricsParams) -> Result<Finished> {
    p.metric.validate()?;
    let mut out = Outputs::new(p.out)?;
    match (p.pred, p.gt, p.pred_dir, p.gt_dir) {
        (Some(pred), Some(gt), None, None) => {
            let id = pred
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let report = evaluate_pair(&id, &read_cloud(&pred)?, &read_cloud(&gt)?, &p.metric)?;
            let csv = reports_to_csv(std::slice::from_ref(&report));
            print!("{csv}");
            out.write("metrics.csv", csv)?;
            Ok(Finished {
                outputs: out,
                inputs: vec![pred, gt],
                status: 0,
            })
        }
        (None, None, Some(pred_dir), Some(gt_dir)) => {
            let report = evaluate_dataset(&pred_dir, &gt_dir, &p.metric)?;
            let csv = report.to_csv();
            print!("{csv}");
            out.write("metrics.csv", csv)?;
            let status = if report.unmatched.is_empty() {
                0
            } else {
                eprintln!("unmatched files skipped: {}", report.unmatched.join(", "));
                out.write("unmatched.txt", report.unmatched.join("\n") + "\n")?;
                1
            };
            Ok(Finished {
                outputs: out,
                inputs: vec![pred_dir, gt_dir],
                status,
            })
        }
        _ => Err(Error::param(
            "pred/gt",
            "give either --pred and --gt, or --pred-dir and --gt-dir",
        )),
    }
}

fn run_sweep(p: SweepParams) -> Result<Finished> {
    p.metric.validate()?;
    let mut out = Outputs::required(p.out)?;
    let (cloud, inputs) = match &p.input {
        Some(path) => (read_cloud(path)?, vec![path.clone()]),
        None => {
            if p.synthetic_points == 0 {
                return Err(Error::param("synthetic_points", "must be at least 1"));
            }
            (
                crate::synth::lidar_patch(p.synthetic_points, p.synthetic_seed),
                Vec::new(),
            )
        }
    };
    let cloud: PointCloud = if p.normalize {
        normalize_to_unit_sphere(&cloud).0
    } else {
        cloud
    };
    let magnitudes = match p.kind {
        SweepKind::Jitter => {
            let levels = p.levels.unwrap_or(DEFAULT_JITTER_LEVELS);
            if levels < 2 {
                return Err(Error::param(
                    "levels",
                    "a jitter sweep needs at least 2 levels",
                ));
            }
            default_jitter_levels(cloud.radius_about(cloud.centroid()), levels)
        }
        SweepKind::Rotation => {
            let levels = p.levels.unwrap_or(DEFAULT_ROTATION_ANGLES);
            if levels < 2 {
                return Err(Error::param(
                    "levels",
                    "a rotation sweep needs at least 2 angles",
                ));
            }
            default_rotation_angles(levels)
        }
    };
    let dirs = p.metric.directions()?;
    let result = sweep_with_directions(
        p.kind,
        &cloud,
        &magnitudes,
        &p.metrics,
        &p.metric,
        &dirs,
        p.seed,
    )?;
    out.write("sweep.csv", result.to_csv())?;
    let meta = serde_json::json!({
        "result": result,
        "normalization": "max",
        "input_normalized": p.normalize,
        "directions": "one direction set shared by every level",
        "sinkhorn_baseline": if p.metrics.contains(&Metric::Sinkhorn) { "self-distance subtracted" } else { "n/a" },
        "metric_config": p.metric,
    });
    out.write("sweep.json", serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(Finished {
        outputs: out,
        inputs,
        status: 0,
    })
}

fn run_upsample(p: UpsampleParams) -> Result<Finished> {
    let input = need(p.input, "input")?;
    let target_path = need(p.target, "target")?;
    p.optimization.validate()?;
    let mut out = Outputs::required(p.out)?;
    let source = read_cloud(&input)?;
    let target = read_cloud(&target_path)?;
    let cfg = &p.optimization;
    let init = init_upsample(&source, cfg.upsample_ratio, cfg.init_jitter_sigma, cfg.seed)?;
    let trace = minimize(&init, &target, cfg)?;
    out.write("upsampled.xyz", to_xyz_string(&trace.final_cloud))?;
    out.write("trace.csv", trace.to_csv())?;
    let summary = serde_json::json!({
        "points": trace.final_cloud.len(),
        "initial_loss": trace.losses.first(),
        "final_loss": trace.losses.last(),
    });
    out.write(
        "summary.json",
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(Finished {
        outputs: out,
        inputs: vec![input, target_path],
        status: 0,
    })
}

fn run_gradcheck(p: GradcheckParams) -> Result<Finished> {
    let mut out = Outputs::new(p.out)?;
    let report = crate::gradcheck::run(&p.gradcheck)?;
    let csv = report.to_csv();
    print!("{csv}");
    out.write("gradcheck.csv", csv)?;
    let status = if report.passed {
        0
    } else {
        eprintln!(
            "max relative error {} is not below {}",
            report.max_relative_error, p.gradcheck.tolerance
        );
        1
    };
    Ok(Finished {
        outputs: out,
        inputs: Vec::new(),
        status,
    })
}

fn execute(subcommand: &str, file: Option<&Value>, flags: Value, threads: usize) -> Result<i32> {
    let started = Instant::now();
    let (finished, resolved) = match subcommand {
        "rasterize" => {
            let (p, v) = resolve::<RasterizeParams>(file, flags)?;
            (run_rasterize(p)?, v)
        }
        "decimate" => {
            let (p, v) = resolve::<DecimateParams>(file, flags)?;
            (run_decimate(p)?, v)
        }
        "patch" => {
            let (p, v) = resolve::<PatchParams>(file, flags)?;
            (run_patch(p)?, v)
        }
        "metrics" => {
            let (p, v) = resolve::<MetricsParams>(file, flags)?;
            (run_metrics(p)?, v)
        }
        "sweep" => {
            let (p, v) = resolve::<SweepParams>(file, flags)?;
            (run_sweep(p)?, v)
        }
        "upsample" => {
            let (p, v) = resolve::<UpsampleParams>(file, flags)?;
            (run_upsample(p)?, v)
        }
        "gradcheck" => {
            let (p, v) = resolve::<GradcheckParams>(file, flags)?;
            (run_gradcheck(p)?, v)
        }
        other => return Err(Error::InvalidInput(format!("unknown subcommand `{other}`"))),
    };
    if let Some(dir) = &finished.outputs.dir {
        let mut seeds = BTreeMap::new();
        collect_seeds("", &resolved, &mut seeds);
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            config: resolved,
            inputs: finished.inputs,
            outputs: finished.outputs.files.clone(),
            seeds,
            threads,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_secs: started.elapsed().as_secs_f64(),
        };
        let path = dir.join(RUN_MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .map_err(|e| Error::io(&path, e))?;
    }
    Ok(finished.status)
}

fn replay(args: ReplayArgs, threads: usize) -> Result<i32> {
    let text = fs::read_to_string(&args.manifest).map_err(|e| Error::io(&args.manifest, e))?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    let mut config = manifest.config;
    if let Some(out) = args.out {
        match &mut config {
            Value::Object(m) => {
                m.insert("out".to_string(), serde_json::to_value(out)?);
            }
            _ => {
                return Err(Error::InvalidInput(
                    "manifest config is not an object".into(),
                ))
            }
        }
    }
    execute(
        &manifest.subcommand,
        Some(&config),
        Value::Object(Map::new()),
        threads,
    )
}

fn default_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

fn dispatch(cli: Cli) -> Result<i32> {
    let threads = cli.threads.unwrap_or_else(default_threads);
    let file = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let v: Value = serde_json::from_str(&text)?;
            if !v.is_object() {
                return Err(Error::InvalidInput(format!(
                    "{}: config must be a JSON object",
                    path.display()
                )));
            }
            Some(v)
        }
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    pool.install(|| {
        let (name, flags) = match cli.command {
            Command::Rasterize(a) => ("rasterize", serde_json::to_value(a)?),
            Command::Decimate(a) => ("decimate", serde_json::to_value(a)?),
            Command::Patch(a) => ("patch", serde_json::to_value(a)?),
            Command::Metrics(a) => ("metrics", serde_json::to_value(a)?),
            Command::Sweep(a) => ("sweep", serde_json::to_value(a)?),
            Command::Upsample(a) => ("upsample", serde_json::to_value(a)?),
            Command::Gradcheck(a) => ("gradcheck", serde_json::to_value(a)?),
            Command::Replay(a) => return replay(a, threads),
        };
        execute(name, file.as_ref(), flags, threads)
    })
}

/// Run the CLI on `argv` (program name first) and return the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

/// Paths of every file a manifest lists, resolved against `dir`.
pub fn manifest_outputs(dir: &Path) -> Result<Vec<PathBuf>> {
    let path = dir.join(RUN_MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: RunManifest = serde_json::from_str(&text)?;
    Ok(m.outputs.iter().map(|f| dir.join(f)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_prefers_later_layers() {
        let file = serde_json::json!({"metric": {"swd_directions": 7, "swd_seed": 3}});
        let flags = serde_json::json!({"metric": {"swd_seed": 9}});
        let (p, _) = resolve::<MetricsParams>(Some(&file), flags).unwrap();
        assert_eq!((p.metric.swd_directions, p.metric.swd_seed), (7, 9));
        assert_eq!(
            p.metric.auction_epsilon,
            MetricConfig::default().auction_epsilon
        );
    }

    #[test]
    fn unknown_config_keys_rejected() {
        let file = serde_json::json!({"metric": {"swd_dirs": 7}});
        assert!(resolve::<MetricsParams>(Some(&file), Value::Object(Map::new())).is_err());
    }

    #[test]
    fn seeds_collected_from_nested_config() {
        let mut s = BTreeMap::new();
        collect_seeds(
            "",
            &serde_json::json!({"seed": 1, "metric": {"swd_seed": 2, "x": 3}}),
            &mut s,
        );
        assert_eq!(s.len(), 2);
        assert_eq!(s["metric.swd_seed"], 2);
    }

    #[test]
    fn help_exits_zero_and_bad_flag_exits_one() {
        assert_eq!(run(["lidar-ot", "--help"]), 0);
        assert_eq!(run(["lidar-ot", "metrics", "--bogus"]), 1);
        assert_eq!(run(["lidar-ot"]), 1);
    }
}
