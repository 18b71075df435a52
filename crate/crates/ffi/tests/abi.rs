use std::ffi::CStr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use lidar_ot::metrics::{chamfer, chamfer_gradient, hausdorff, swd, swd_gradient};
use lidar_ot::{DirectionSet, PointCloud};
use lidar_ot_ffi::*;

const A: [f64; 12] = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
const B: [f64; 12] = [0.2, 0.1, 0.0, 1.0, 0.3, 0.0, 0.0, 0.9, 0.4, 0.5, 0.5, 0.5];

struct Handles {
    x: *mut LidarOtCloud,
    y: *mut LidarOtCloud,
    dirs: *mut LidarOtDirections,
}

impl Handles {
    fn new() -> Self {
        let mut h = Handles {
            x: ptr::null_mut(),
            y: ptr::null_mut(),
            dirs: ptr::null_mut(),
        };
        unsafe {
            assert_eq!(
                lidar_ot_cloud_new(A.as_ptr(), 4, &mut h.x),
                LidarOtStatus::Ok
            );
            assert_eq!(
                lidar_ot_cloud_new(B.as_ptr(), 4, &mut h.y),
                LidarOtStatus::Ok
            );
            assert_eq!(
                lidar_ot_directions_sample(32, 5, &mut h.dirs),
                LidarOtStatus::Ok
            );
        }
        h
    }
}

impl Drop for Handles {
    fn drop(&mut self) {
        unsafe {
            lidar_ot_cloud_free(self.x);
            lidar_ot_cloud_free(self.y);
            lidar_ot_directions_free(self.dirs);
        }
    }
}

fn cloud(xyz: &[f64]) -> PointCloud {
    let pts: Vec<[f64; 3]> = xyz.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    PointCloud::from_xyz(&pts).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(lidar_ot_last_error()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn metrics_match_the_rust_api() {
    let h = Handles::new();
    let (x, y) = (cloud(&A), cloud(&B));
    let dirs = DirectionSet::sample(32, 5).unwrap();
    let mut v = 0.0;
    unsafe {
        assert_eq!(lidar_ot_swd(h.x, h.y, h.dirs, &mut v), LidarOtStatus::Ok);
        assert_eq!(v, swd(&x, &y, &dirs).unwrap());
        assert_eq!(lidar_ot_chamfer(h.x, h.y, &mut v), LidarOtStatus::Ok);
        assert_eq!(v, chamfer(&x, &y).unwrap());
        assert_eq!(lidar_ot_hausdorff(h.x, h.y, &mut v), LidarOtStatus::Ok);
        assert_eq!(v, hausdorff(&x, &y).unwrap());
    }
}

#[test]
fn emd_variants_agree() {
    let h = Handles::new();
    let (mut exact, mut auction, mut entropic) = (0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(
            lidar_ot_emd_exact(h.x, h.y, LidarOtReduction::Sum, &mut exact),
            LidarOtStatus::Ok
        );
        assert_eq!(
            lidar_ot_emd_auction(h.x, h.y, 1e-4, LidarOtReduction::Sum, &mut auction),
            LidarOtStatus::Ok
        );
        assert_eq!(
            lidar_ot_sinkhorn(h.x, h.y, 1e-3, 100_000, &mut entropic),
            LidarOtStatus::Ok
        );
    }
    assert!(
        auction >= exact - 1e-12 && auction <= exact + 4.0 * 1e-4,
        "{auction} vs {exact}"
    );
    assert!(
        (entropic - exact / 4.0).abs() < 0.01 * exact,
        "{entropic} vs {exact}"
    );
}

#[test]
fn gradients_match_the_rust_api() {
    let h = Handles::new();
    let (x, y) = (cloud(&A), cloud(&B));
    let dirs = DirectionSet::sample(32, 5).unwrap();
    let mut buf = [0.0; 12];
    unsafe {
        assert_eq!(
            lidar_ot_swd_gradient(h.x, h.y, h.dirs, buf.as_mut_ptr(), 4),
            LidarOtStatus::Ok
        );
    }
    let g = swd_gradient(&x, &y, &dirs).unwrap();
    let flat: Vec<f64> = g.0.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
    assert_eq!(buf.to_vec(), flat);
    unsafe {
        assert_eq!(
            lidar_ot_chamfer_gradient(h.x, h.y, buf.as_mut_ptr(), 4),
            LidarOtStatus::Ok
        );
    }
    let g = chamfer_gradient(&x, &y).unwrap();
    let flat: Vec<f64> = g.0.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
    assert_eq!(buf.to_vec(), flat);
}

#[test]
fn cloud_round_trips_points() {
    let h = Handles::new();
    let mut buf = [0.0; 12];
    unsafe {
        assert_eq!(lidar_ot_cloud_len(h.x), 4);
        assert_eq!(
            lidar_ot_cloud_points(h.x, buf.as_mut_ptr(), 4),
            LidarOtStatus::Ok
        );
        assert_eq!(lidar_ot_directions_len(h.dirs), 32);
        assert_eq!(lidar_ot_cloud_len(ptr::null()), 0);
    }
    assert_eq!(buf, A);
}

#[test]
fn error_codes() {
    let h = Handles::new();
    let mut v = 0.0;
    let mut buf = [0.0; 6];
    let mut c = ptr::null_mut();
    unsafe {
        assert_eq!(
            lidar_ot_chamfer(h.x, ptr::null(), &mut v),
            LidarOtStatus::NullPointer
        );
        assert!(last_error().contains('y'));
        assert_eq!(
            lidar_ot_chamfer(h.x, h.y, ptr::null_mut()),
            LidarOtStatus::NullPointer
        );
        assert_eq!(
            lidar_ot_swd_gradient(h.x, h.y, h.dirs, buf.as_mut_ptr(), 2),
            LidarOtStatus::BufferTooSmall
        );
        assert_eq!(
            lidar_ot_cloud_new(A.as_ptr(), 0, &mut c),
            LidarOtStatus::InvalidInput
        );
        assert!(c.is_null());
        assert!(!last_error().is_empty());
        let nan = [f64::NAN, 0.0, 0.0];
        assert_eq!(
            lidar_ot_cloud_new(nan.as_ptr(), 1, &mut c),
            LidarOtStatus::InvalidInput
        );
        assert_eq!(
            lidar_ot_sinkhorn(h.x, h.y, -1.0, 10, &mut v),
            LidarOtStatus::InvalidParameter
        );
        let mut d = ptr::null_mut();
        assert_eq!(
            lidar_ot_directions_sample(0, 1, &mut d),
            LidarOtStatus::InvalidParameter
        );
        let zero = [0.0; 3];
        assert_ne!(
            lidar_ot_directions_new(zero.as_ptr(), 1, &mut d),
            LidarOtStatus::Ok
        );
        assert!(d.is_null());
    }
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(lidar_ot_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps/
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = manifest.join("include/lidar_ot.h");
    assert!(header.exists(), "missing {}", header.display());
    let lib = target_dir().join("liblidar_ot_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler on PATH; skipping link check");
        return;
    }
    assert!(lib.exists(), "missing {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
