//! C ABI over the `lidar-ot` metrics.
//!
//! Clouds and direction sets cross the boundary as opaque heap handles that
//! the caller releases with the matching `_free` function. Every fallible
//! call returns a [`LidarOtStatus`]; on failure a message is kept per thread
//! and can be read with [`lidar_ot_last_error`]. Point buffers are packed
//! `x, y, z` doubles, three per point.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lidar_ot::metrics::{
    chamfer, chamfer_gradient, emd_auction, emd_exact, hausdorff, sinkhorn, swd, swd_gradient,
    Gradient, Reduction,
};
use lidar_ot::{DirectionSet, Error, Point3, PointCloud};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LidarOtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    InvalidParameter = 3,
    Capacity = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// How an EMD total is reduced over matched pairs.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LidarOtReduction {
    Mean = 0,
    Sum = 1,
}

/// Opaque point cloud.
pub struct LidarOtCloud {
    cloud: PointCloud,
}

/// Opaque set of unit projection directions.
pub struct LidarOtDirections {
    dirs: DirectionSet,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> LidarOtStatus {
    match err {
        Error::InvalidParameter { .. } => LidarOtStatus::InvalidParameter,
        Error::Capacity { .. } => LidarOtStatus::Capacity,
        _ => LidarOtStatus::InvalidInput,
    }
}

/// Run `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), LidarOtStatus>) -> LidarOtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LidarOtStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            LidarOtStatus::Panic
        }
    }
}

fn fail(err: Error) -> LidarOtStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn null(what: &str) -> LidarOtStatus {
    set_error(&format!("{what} is null"));
    LidarOtStatus::NullPointer
}

unsafe fn cloud_ref<'a>(
    p: *const LidarOtCloud,
    what: &str,
) -> Result<&'a PointCloud, LidarOtStatus> {
    p.as_ref().map(|c| &c.cloud).ok_or_else(|| null(what))
}

unsafe fn dirs_ref<'a>(p: *const LidarOtDirections) -> Result<&'a DirectionSet, LidarOtStatus> {
    p.as_ref()
        .map(|d| &d.dirs)
        .ok_or_else(|| null("directions"))
}

unsafe fn write_scalar(out: *mut f64, value: Result<f64, Error>) -> Result<(), LidarOtStatus> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = value.map_err(fail)?;
    Ok(())
}

unsafe fn write_points(
    points: &[Point3],
    out: *mut f64,
    capacity_points: usize,
) -> Result<(), LidarOtStatus> {
    if out.is_null() {
        return Err(null("out"));
    }
    if capacity_points < points.len() {
        set_error(&format!(
            "buffer holds {capacity_points} points, need {}",
            points.len()
        ));
        return Err(LidarOtStatus::BufferTooSmall);
    }
    let buf = std::slice::from_raw_parts_mut(out, points.len() * 3);
    for (chunk, p) in buf.chunks_exact_mut(3).zip(points) {
        chunk.copy_from_slice(&[p.x, p.y, p.z]);
    }
    Ok(())
}

unsafe fn write_gradient(
    g: Result<Gradient, Error>,
    out: *mut f64,
    capacity_points: usize,
) -> Result<(), LidarOtStatus> {
    let g = g.map_err(fail)?;
    write_points(&g.0, out, capacity_points)
}

fn reduction(r: LidarOtReduction) -> Reduction {
    match r {
        LidarOtReduction::Mean => Reduction::Mean,
        LidarOtReduction::Sum => Reduction::Sum,
    }
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn lidar_ot_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lidar_ot_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a cloud from `n_points` packed `x, y, z` triples.
///
/// # Safety
/// `xyz` must point to `3 * n_points` readable doubles and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn lidar_ot_cloud_new(
    xyz: *const f64,
    n_points: usize,
    out: *mut *mut LidarOtCloud,
) -> LidarOtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if xyz.is_null() {
            return Err(null("xyz"));
        }
        let flat = std::slice::from_raw_parts(xyz, n_points * 3);
        let pts = flat
            .chunks_exact(3)
            .map(|c| Point3::new(c[0], c[1], c[2]))
            .collect();
        let cloud = PointCloud::new(pts).map_err(fail)?;
        *out = Box::into_raw(Box::new(LidarOtCloud { cloud }));
        Ok(())
    })
}

/// Release a cloud. Null is ignored.
///
/// # Safety
/// `cloud` must come from [`lidar_ot_cloud_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn lidar_ot_cloud_free(cloud: *mut LidarOtCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Number of points, or 0 for null.
///
/// # Safety
/// `cloud` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lidar_ot_cloud_len(cloud: *const LidarOtCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.cloud.len())
}

/// Copy the points into `out` (`3 * capacity_points` doubles).
///
/// # Safety
/// `cloud` must be a live handle and `out` must hold `3 * capacity_points`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lidar_ot_cloud_points(
    cloud: *const LidarOtCloud,
    out: *mut f64,
    capacity_points: usize,
) -> LidarOtStatus {
    guard(|| write_points(cloud_ref(cloud, "cloud")?.points(), out, capacity_points))
}

/// `count` uniform unit directions, deterministic per `seed`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lidar_ot_directions_sample(
    count: usize,
    seed: u64,
    out: *mut *mut LidarOtDirections,
) -> LidarOtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let dirs = DirectionSet::sample(count, seed).map_err(fail)?;
        *out = Box::into_raw(Box::new(LidarOtDirections { dirs }));
        Ok(())
    })
}

/// Directions from `n` packed vectors, each normalized to unit length.
///
/// # Safety
/// `xyz` must point to `3 * n` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lidar_ot_directions_new(
    xyz: *const f64,
    n: usize,
    out: *mut *mut LidarOtDirections,
) -> LidarOtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if xyz.is_null() {
            return Err(null("xyz"));
        }
        let flat = std::slice::from_raw_parts(xyz, n * 3);
        let v = flat
            .chunks_exact(3)
            .map(|c| Point3::new(c[0], c[1], c[2]))
            .collect();
        let dirs = DirectionSet::from_vectors(v).map_err(fail)?;
        *out = Box::into_raw(Box::new(LidarOtDirections { dirs }));
        Ok(())
    })
}

/// Release a direction set. Null is ignored.
///
/// # Safety
/// `dirs` must come from a `lidar_ot_directions_*` constructor and not be
/// freed twice.
#[no_mangle]
pub unsafe extern "C" fn lidar_ot_directions_free(dirs: *mut LidarOtDirections) {
    if !dirs.is_null() {
        drop(Box::from_raw(dirs));
    }
}

/// Number of directions, or 0 for null.
///
/// # Safety
/// `dirs` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lidar_ot_directions_len(dirs: *const LidarOtDirections) -> usize {
    dirs.as_ref().map_or(0, |d| d.dirs.len())
}

/// Sliced Wasserstein distance over the given directions.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lidar_ot_swd(
    x: *const LidarOtCloud,
    y: *const LidarOtCloud,
    dirs: *const LidarOtDirections,
    out: *mut f64,
) -> LidarOtStatus {
    guard(|| {
        write_scalar(
            out,
            swd(cloud_ref(x, "x")?, cloud_ref(y, "y")?, dirs_ref(dirs)?),
        )
    })
}

/// Symmetric Chamfer distance (mean squared nearest-neighbour distances).
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lidar_ot_chamfer(
    x: *const LidarOtCloud,
    y: *const LidarOtCloud,
    out: *mut f64,
) -> LidarOtStatus {
    guard(|| write_scalar(out, chamfer(cloud_ref(x, "x")?, cloud_ref(y, "y")?)))
}

/// Symmetric Hausdorff distance.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lidar_ot_hausdorff(
    x: *const LidarOtCloud,
    y: *const LidarOtCloud,
    out: *mut f64,
) -> LidarOtStatus {
    guard(|| write_scalar(out, hausdorff(cloud_ref(x, "x")?, cloud_ref(y, "y")?)))
}

/// Exact EMD (optimal bijection) for equal sizes up to the solver cap.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lidar_ot_emd_exact(
    x: *const LidarOtCloud,
    y: *const LidarOtCloud,
    reduce: LidarOtReduction,
    out: *mut f64,
) -> LidarOtStatus {
    guard(|| {
        let v =
            emd_exact(cloud_ref(x, "x")?, cloud_ref(y, "y")?, reduction(reduce)).map(|(v, _)| v);
        write_scalar(out, v)
    })
}

/// Auction EMD within `N * epsilon` of the optimum (sum reduction).
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lidar_ot_emd_auction(
    x: *const LidarOtCloud,
    y: *const LidarOtCloud,
    epsilon: f64,
    reduce: LidarOtReduction,
    out: *mut f64,
) -> LidarOtStatus {
    guard(|| {
        write_scalar(
            out,
            emd_auction(
                cloud_ref(x, "x")?,
                cloud_ref(y, "y")?,
                epsilon,
                reduction(reduce),
            ),
        )
    })
}

/// Entropy-regularized transport cost.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lidar_ot_sinkhorn(
    x: *const LidarOtCloud,
    y: *const LidarOtCloud,
    regularization: f64,
    max_iters: usize,
    out: *mut f64,
) -> LidarOtStatus {
    guard(|| {
        write_scalar(
            out,
            sinkhorn(
                cloud_ref(x, "x")?,
                cloud_ref(y, "y")?,
                regularization,
                max_iters,
            ),
        )
    })
}

/// Gradient of the SWD with respect to the points of `x`, written as
/// `3 * len(x)` doubles.
///
/// # Safety
/// Handles must be live; `out` must hold `3 * capacity_points` doubles.
#[no_mangle]
pub unsafe extern "C" fn lidar_ot_swd_gradient(
    x: *const LidarOtCloud,
    y: *const LidarOtCloud,
    dirs: *const LidarOtDirections,
    out: *mut f64,
    capacity_points: usize,
) -> LidarOtStatus {
    guard(|| {
        let g = swd_gradient(cloud_ref(x, "x")?, cloud_ref(y, "y")?, dirs_ref(dirs)?);
        write_gradient(g, out, capacity_points)
    })
}

/// Gradient of the Chamfer distance with respect to the points of `x`.
///
/// # Safety
/// Handles must be live; `out` must hold `3 * capacity_points` doubles.
#[no_mangle]
pub unsafe extern "C" fn lidar_ot_chamfer_gradient(
    x: *const LidarOtCloud,
    y: *const LidarOtCloud,
    out: *mut f64,
    capacity_points: usize,
) -> LidarOtStatus {
    guard(|| {
        let g = chamfer_gradient(cloud_ref(x, "x")?, cloud_ref(y, "y")?);
        write_gradient(g, out, capacity_points)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;

    #[test]
    fn status_codes_are_stable() {
        assert_eq!(LidarOtStatus::Ok as i32, 0);
        assert_eq!(LidarOtStatus::Panic as i32, 6);
    }

    #[test]
    fn error_message_is_set_and_cleared() {
        let mut h = ptr::null_mut();
        let s = unsafe { lidar_ot_cloud_new(ptr::null(), 3, &mut h) };
        assert_eq!(s, LidarOtStatus::NullPointer);
        let msg = unsafe { CStr::from_ptr(lidar_ot_last_error()) }
            .to_str()
            .unwrap()
            .to_string();
        assert!(msg.contains("xyz"));
        let xyz = [0.0, 0.0, 0.0];
        assert_eq!(
            unsafe { lidar_ot_cloud_new(xyz.as_ptr(), 1, &mut h) },
            LidarOtStatus::Ok
        );
        assert!(unsafe { CStr::from_ptr(lidar_ot_last_error()) }
            .to_bytes()
            .is_empty());
        unsafe { lidar_ot_cloud_free(h) };
    }
}
