//! Point-cloud file formats: plain-text XYZ and packed little-endian `f32`
//! triples.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::cloud::{Point3, PointCloud};
use crate::error::{Error, Result};

/// Render as one `x y z` line per point. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn to_xyz_string(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 32);
    for p in cloud {
        out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    out
}

pub fn parse_xyz(text: &str, origin: &Path) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len() as u64;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                offset: start,
                reason: format!("expected 3 coordinates, found {}", fields.len()),
            });
        }
        let mut xyz = [0.0; 3];
        for (slot, field) in xyz.iter_mut().zip(&fields[..3]) {
            *slot = field.parse::<f64>().map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                offset: start,
                reason: format!("bad coordinate `{field}`: {e}"),
            })?;
        }
        points.push(Point3::from(xyz));
    }
    PointCloud::new(points).map_err(|e| match e {
        Error::InvalidInput(reason) => Error::Parse {
            path: origin.to_path_buf(),
            offset: 0,
            reason,
        },
        other => other,
    })
}

pub fn read_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_xyz(&text, path)
}

pub fn write_xyz(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_xyz_string(cloud)).map_err(|e| Error::io(path, e))
}

pub fn encode_f32_triples(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * 12);
    for p in cloud {
        for v in [p.x, p.y, p.z] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_f32_triples(bytes: &[u8], origin: &Path) -> Result<PointCloud> {
    if bytes.len() % 12 != 0 {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            offset: (bytes.len() - bytes.len() % 12) as u64,
            reason: format!("length {} is not a multiple of 12", bytes.len()),
        });
    }
    let mut points = Vec::with_capacity(bytes.len() / 12);
    for (i, rec) in bytes.chunks_exact(12).enumerate() {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap()) as f64;
        let p = Point3::new(f(0), f(1), f(2));
        if !p.is_finite() {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                offset: (i * 12) as u64,
                reason: "non-finite coordinate".into(),
            });
        }
        points.push(p);
    }
    PointCloud::new(points).map_err(|_| Error::Parse {
        path: origin.to_path_buf(),
        offset: 0,
        reason: "no points".into(),
    })
}

pub fn write_f32_triples(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_f32_triples(cloud))
        .map_err(|e| Error::io(path, e))
}

pub fn read_f32_triples(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_f32_triples(&bytes, path)
}

/// Read a cloud, picking the format from the extension: `.xyz`/`.txt` are
/// text, `.bin` is a KITTI scan, anything else is packed `f32` triples.
pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("xyz") | Some("txt") => read_xyz(path),
        Some("bin") => crate::lidar::read_scan(path).map(|s| s.cloud),
        _ => read_f32_triples(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn xyz_parse_skips_comments_and_reports_offsets() {
        let p = Path::new("mem");
        let c = parse_xyz("# header\n1 2 3\n\n4 5 6\n", p).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.points()[1], Point3::new(4.0, 5.0, 6.0));
        match parse_xyz("1 2 3\n4 x 6\n", p) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_xyz("", p).is_err());
    }

    #[test]
    fn f32_triples_reject_ragged_length() {
        let err = decode_f32_triples(&[0u8; 13], Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 12, .. }));
    }

    proptest! {
        #[test]
        fn xyz_text_round_trips_exactly(coords in prop::collection::vec(prop::array::uniform3(-1e4f64..1e4), 1..50)) {
            let c = PointCloud::from_xyz(&coords).unwrap();
            let back = parse_xyz(&to_xyz_string(&c), Path::new("mem")).unwrap();
            prop_assert_eq!(back, c);
        }

        #[test]
        fn f32_triples_round_trip_f32_values(coords in prop::collection::vec(prop::array::uniform3(-1e4f32..1e4), 1..50)) {
            let c = PointCloud::new(coords.iter().map(|a| Point3::new(a[0] as f64, a[1] as f64, a[2] as f64)).collect()).unwrap();
            let bytes = encode_f32_triples(&c);
            let back = decode_f32_triples(&bytes, Path::new("mem")).unwrap();
            prop_assert_eq!(encode_f32_triples(&back), bytes);
            prop_assert_eq!(back, c);
        }
    }
}
