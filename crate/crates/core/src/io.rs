//! File formats: PFM float maps, 8-bit PNG previews, atomic writes.
//!
//! PFM files are written little-endian (scale `-1.0`) with rows stored bottom to top,
//! as the format requires. `Pf` holds one channel, `PF` three.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::raster::Raster;

pub fn encode_pfm(raster: &Raster) -> Result<Vec<u8>> {
    let tag = match raster.channels() {
        1 => "Pf",
        3 => "PF",
        c => {
            return Err(Error::InvalidArgument(format!(
                "PFM stores 1 or 3 channels, raster has {c}"
            )))
        }
    };
    let (w, h) = raster.dims();
    let mut out = format!("{tag}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(raster.byte_size());
    let stride = w * raster.channels();
    for row in (0..h).rev() {
        for v in &raster.data()[row * stride..(row + 1) * stride] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Raster> {
    let bad = |reason: &str| Error::Format {
        format: "PFM",
        reason: reason.to_string(),
    };
    // header: three whitespace-separated tokens groups, each terminated by a newline
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
    }
    // exactly one whitespace byte separates the header from the payload
    pos += 1;
    let channels = match tokens[0] {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(bad("unknown magic")),
    };
    let w: usize = tokens[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = tokens[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f32 = tokens[3].parse().map_err(|_| bad("bad scale"))?;
    let little = scale < 0.0;
    let n = w * h * channels;
    let payload = bytes.get(pos..).ok_or_else(|| bad("missing payload"))?;
    if payload.len() < n * 4 {
        return Err(bad("payload shorter than header claims"));
    }
    let mut data = vec![0f32; n];
    let stride = w * channels;
    for (i, chunk) in payload[..n * 4].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let file_row = i / stride;
        let col = i % stride;
        data[(h - 1 - file_row) * stride + col] = v;
    }
    Raster::from_vec(w, h, channels, data)
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes)
}

pub fn write_pfm(path: impl AsRef<Path>, raster: &Raster) -> Result<()> {
    write_atomic(path, &encode_pfm(raster)?)
}

/// 8-bit RGB encoding of a 3-channel raster with values clamped to [0, 1].
pub fn encode_png(raster: &Raster) -> Result<Vec<u8>> {
    if raster.channels() != 3 {
        return Err(Error::InvalidArgument("PNG preview needs 3 channels".into()));
    }
    let (w, h) = raster.dims();
    let bytes: Vec<u8> = raster
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = image::RgbImage::from_raw(w as u32, h as u32, bytes)
        .ok_or_else(|| Error::InvalidArgument("raster size overflow".into()))?;
    let mut out = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png)?;
    Ok(out)
}

pub fn write_png(path: impl AsRef<Path>, raster: &Raster) -> Result<()> {
    write_atomic(path, &encode_png(raster)?)
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let tmp = temp_sibling(path);
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = res {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pfm_header_is_little_endian_bottom_up() {
        let r = Raster::from_fn(2, 2, |x, y| (x + 2 * y) as f32);
        let bytes = encode_pfm(&r).unwrap();
        assert!(bytes.starts_with(b"Pf\n2 2\n-1.0\n"));
        // first stored row is the bottom image row: values 2, 3
        let payload = &bytes[b"Pf\n2 2\n-1.0\n".len()..];
        assert_eq!(f32::from_le_bytes(payload[0..4].try_into().unwrap()), 2.0);
    }

    #[test]
    fn pfm_rejects_other_channel_counts() {
        assert!(encode_pfm(&Raster::new(2, 2, 2)).is_err());
        assert!(decode_pfm(b"P7\n1 1\n-1\n0000").is_err());
        assert!(decode_pfm(b"Pf\n4 4\n-1.0\n").is_err());
    }

    proptest! {
        #[test]
        fn pfm_roundtrip_is_bit_exact(w in 1usize..6, h in 1usize..6, three in any::<bool>(), seed in any::<u32>()) {
            let c = if three { 3 } else { 1 };
            let data: Vec<f32> = (0..w * h * c)
                .map(|i| f32::from_bits((seed as u32).wrapping_mul(2654435761).wrapping_add(i as u32 * 40503) & 0x7f7f_ffff))
                .collect();
            let r = Raster::from_vec(w, h, c, data).unwrap();
            let back = decode_pfm(&encode_pfm(&r).unwrap()).unwrap();
            prop_assert_eq!(back, r);
        }
    }

    #[test]
    fn atomic_write_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pfm");
        write_pfm(&p, &Raster::filled(3, 3, 1, 1.5)).unwrap();
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
        assert_eq!(read_pfm(&p).unwrap().get(1, 1, 0), 1.5);
    }

    #[test]
    fn png_encodes() {
        let png = encode_png(&Raster::filled(4, 3, 3, 0.5)).unwrap();
        assert_eq!(&png[1..4], b"PNG");
    }
}
