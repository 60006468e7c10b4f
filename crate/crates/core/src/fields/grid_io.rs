//! Flat binary grid format.
//!
//! One ASCII header line with eight space-separated fields, then little-endian f32 payload:
//!
//! ```text
//! NSRGRID1 triplane 64x64x3 4 -1,-1,-1,1,1,1 f32 le 49152
//! NSRGRID1 voxel 32x32x32 4 -1,-1,-1,1,1,1 f32 le 131072
//! ```
//!
//! Tri-plane payloads store the XY, YZ and ZX planes in order, each `(v * R + u) * C + c`.
//! Voxel payloads store nodes x-fastest with `(r, g, b, sigma)` per node.

use std::path::Path;

use super::{AnyField, PlaneAxes, RadianceField, TriPlaneGrid, VoxelGrid};
use crate::error::{Error, Result};
use crate::math::Aabb;

pub const GRID_MAGIC: &str = "NSRGRID1";

fn bad(reason: impl Into<String>) -> Error {
    Error::Format {
        format: "grid",
        reason: reason.into(),
    }
}

fn bbox_string(b: &Aabb) -> String {
    let v: Vec<String> = b.min.iter().chain(b.max.iter()).map(|x| format!("{x}")).collect();
    v.join(",")
}

pub fn encode_grid(field: &AnyField) -> Result<Vec<u8>> {
    let (kind, res, channels, bounds, payload): (_, _, _, _, Vec<f32>) = match field {
        AnyField::TriPlane(t) => {
            let r = t.resolution();
            let mut data = Vec::with_capacity(3 * r * r * t.channels());
            for p in PlaneAxes::ALL {
                data.extend_from_slice(t.plane(p));
            }
            ("triplane", format!("{r}x{r}x3"), t.channels(), t.bounds(), data)
        }
        AnyField::Voxel(v) => {
            let [x, y, z] = v.resolution();
            ("voxel", format!("{x}x{y}x{z}"), 4, v.bounds(), v.data().to_vec())
        }
        AnyField::Sdf(_) => return Err(Error::InvalidArgument("analytic scenes have no grid form".into())),
    };
    let header = format!(
        "{GRID_MAGIC} {kind} {res} {channels} {} f32 le {}\n",
        bbox_string(&bounds),
        payload.len()
    );
    let mut out = header.into_bytes();
    out.reserve(payload.len() * 4);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_grid(bytes: &[u8]) -> Result<AnyField> {
    let nl = bytes.iter().position(|b| *b == b'\n').ok_or_else(|| bad("missing header line"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("non-ascii header"))?;
    let f: Vec<&str> = header.split_ascii_whitespace().collect();
    if f.len() != 8 {
        return Err(bad(format!("header has {} fields, expected 8", f.len())));
    }
    if f[0] != GRID_MAGIC {
        return Err(bad(format!("bad magic {:?}", f[0])));
    }
    if f[5] != "f32" || f[6] != "le" {
        return Err(bad("only little-endian f32 payloads are supported"));
    }
    let res: Vec<usize> = f[2]
        .split('x')
        .map(|s| s.parse().map_err(|_| bad("bad resolution")))
        .collect::<Result<_>>()?;
    let channels: usize = f[3].parse().map_err(|_| bad("bad channel count"))?;
    let bb: Vec<f64> = f[4]
        .split(',')
        .map(|s| s.parse().map_err(|_| bad("bad bbox")))
        .collect::<Result<_>>()?;
    if bb.len() != 6 {
        return Err(bad("bbox needs six numbers"));
    }
    let bounds = Aabb::new([bb[0], bb[1], bb[2]], [bb[3], bb[4], bb[5]]);
    let count: usize = f[7].parse().map_err(|_| bad("bad count"))?;
    let payload = &bytes[nl + 1..];
    if payload.len() != count * 4 {
        return Err(bad(format!("payload has {} bytes, header says {}", payload.len(), count * 4)));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    match (f[1], res.as_slice()) {
        ("triplane", [r, r2, 3]) if r == r2 => {
            let n = r * r * channels;
            if data.len() != 3 * n {
                return Err(Error::mismatch(3 * n, data.len()));
            }
            let planes = [data[..n].to_vec(), data[n..2 * n].to_vec(), data[2 * n..].to_vec()];
            Ok(AnyField::TriPlane(TriPlaneGrid::from_planes(*r, channels, bounds, planes)?))
        }
        ("voxel", [x, y, z]) => {
            if channels != 4 {
                return Err(bad("voxel grids carry 4 channels"));
            }
            Ok(AnyField::Voxel(VoxelGrid::from_data([*x, *y, *z], bounds, data)?))
        }
        (kind, _) => Err(bad(format!("unsupported grid {kind} {}", f[2]))),
    }
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<AnyField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_grid(&bytes)
}

pub fn write_grid(path: impl AsRef<Path>, field: &AnyField) -> Result<()> {
    crate::io::write_atomic(path, &encode_grid(field)?)
}
