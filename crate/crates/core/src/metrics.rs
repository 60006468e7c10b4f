//! Image and depth error metrics.
//!
//! The view-sweep harness that uses them lives in [`crate::pipeline`] and is re-exported here.

use crate::error::{Error, Result};
use crate::math::CompensatedSum;
use crate::raster::Raster;

pub use crate::pipeline::{consistency_sweep, ConsistencyReport, ViewScore};

fn check_same(a: &Raster, b: &Raster) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::mismatch(
            format!("{}x{}x{}", a.width(), a.height(), a.channels()),
            format!("{}x{}x{}", b.width(), b.height(), b.channels()),
        ));
    }
    Ok(())
}

fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub fn mse(a: &Raster, b: &Raster) -> Result<f64> {
    check_same(a, b)?;
    let s: CompensatedSum = a.data().iter().zip(b.data()).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).collect();
    Ok(s.value() / a.data().len().max(1) as f64)
}

/// `10 log10(peak^2 / MSE)`; identical images give `f64::INFINITY`.
pub fn psnr(a: &Raster, b: &Raster, peak: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

/// PSNR over pixels where `mask > 0.5` (all channels of those pixels).
pub fn psnr_masked(a: &Raster, b: &Raster, mask: &Raster, peak: f64) -> Result<f64> {
    check_same(a, b)?;
    mask.ensure_dims(a.width(), a.height())?;
    let c = a.channels();
    let mut s = CompensatedSum::default();
    let mut n = 0usize;
    for (i, m) in mask.data().iter().enumerate() {
        if *m > 0.5 {
            for k in 0..c {
                s.add((a.data()[i * c + k] as f64 - b.data()[i * c + k] as f64).powi(2));
            }
            n += c;
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument("mask selects no pixels".into()));
    }
    Ok(psnr_from_mse(s.value() / n as f64, peak))
}

/// Rec. 601 luma of a 3-channel image; single-channel input is returned as is.
pub fn luma(img: &Raster) -> Result<Raster> {
    match img.channels() {
        1 => Ok(img.clone()),
        3 => Ok(Raster::from_fn(img.width(), img.height(), |x, y| {
            let p = img.pixel(x, y);
            (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) as f32
        })),
        c => Err(Error::InvalidArgument(format!("luma needs 1 or 3 channels, got {c}"))),
    }
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable "valid" filtering of a row-major f64 plane.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM on luma with an 11x11 Gaussian window (sigma 1.5), dynamic range 1, over
/// windows fully inside the image.
pub fn ssim(a: &Raster, b: &Raster) -> Result<f64> {
    check_same(a, b)?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels")));
    }
    let la: Vec<f64> = luma(a)?.data().iter().map(|v| *v as f64).collect();
    let lb: Vec<f64> = luma(b)?.data().iter().map(|v| *v as f64).collect();
    let k = gaussian_kernel();
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter_valid(&la, w, h, &k);
    let mu_b = filter_valid(&lb, w, h, &k);
    let aa = filter_valid(&prod(&la, &la), w, h, &k);
    let bb = filter_valid(&prod(&lb, &lb), w, h, &k);
    let ab = filter_valid(&prod(&la, &lb), w, h, &k);
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let s: CompensatedSum = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .collect();
    Ok(s.value() / mu_a.len() as f64)
}

/// Root-mean-square difference over pixels where `mask > 0.5`.
pub fn depth_rmse(a: &Raster, b: &Raster, mask: &Raster) -> Result<f64> {
    check_same(a, b)?;
    if a.channels() != 1 {
        return Err(Error::InvalidArgument("depth maps are single-channel".into()));
    }
    mask.ensure_dims(a.width(), a.height())?;
    let mut s = CompensatedSum::default();
    let mut n = 0usize;
    for ((x, y), m) in a.data().iter().zip(b.data()).zip(mask.data()) {
        if *m > 0.5 {
            s.add((*x as f64 - *y as f64).powi(2));
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument("mask selects no pixels".into()));
    }
    Ok((s.value() / n as f64).sqrt())
}

/// Serializes non-finite scores as the strings `"inf"` / `"-inf"` / `"nan"`.
pub mod score_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("not a score: {other}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(w: usize, h: usize, c: usize, seed: u64) -> Raster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = Raster::new(w, h, c);
        r.data_mut().iter_mut().for_each(|v| *v = rng.random());
        r
    }

    fn add_noise(a: &Raster, amp: f32, seed: u64) -> Raster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = a.clone();
        b.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-amp..amp));
        b
    }

    #[test]
    fn psnr_examples() {
        let a = noise(16, 16, 3, 1);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let p = psnr(&Raster::filled(8, 8, 1, 0.25), &Raster::filled(8, 8, 1, 0.75), 1.0).unwrap();
        assert!((p - 6.0206).abs() < 1e-3);
        assert!(psnr(&a, &noise(16, 8, 3, 1), 1.0).is_err());
    }

    #[test]
    fn psnr_of_uniform_noise_matches_variance() {
        let a = Raster::filled(256, 256, 1, 0.5);
        let b = add_noise(&a, 0.01, 3);
        let want = 10.0 * (1.0f64 / (1e-4 / 3.0)).log10();
        assert!((psnr(&a, &b, 1.0).unwrap() - want).abs() < 0.2);
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let a = noise(64, 64, 3, 4);
        let scores: Vec<f64> = [0.01, 0.02, 0.05, 0.1, 0.2].iter().map(|amp| psnr(&a, &add_noise(&a, *amp, 9), 1.0).unwrap()).collect();
        assert!(scores.windows(2).all(|p| p[0] > p[1]), "{scores:?}");
    }

    #[test]
    fn masked_psnr_ignores_unmasked() {
        let a = Raster::filled(4, 4, 3, 0.5);
        let mut b = a.clone();
        b.pixel_mut(0, 0).fill(0.0);
        let mut m = Raster::filled(4, 4, 1, 1.0);
        m.set(0, 0, 0, 0.0);
        assert_eq!(psnr_masked(&a, &b, &m, 1.0).unwrap(), f64::INFINITY);
        assert!(psnr_masked(&a, &b, &Raster::new(4, 4, 1), 1.0).is_err());
    }

    #[test]
    fn ssim_examples() {
        let a = noise(32, 24, 3, 5);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let inv = a.map(|v| 1.0 - v);
        assert!(ssim(&a, &inv).unwrap() < 1.0);
        assert!(ssim(&a, &noise(8, 8, 3, 1)).is_err());
    }

    #[test]
    fn ssim_symmetric_and_bounded() {
        for s in 0..200 {
            let a = noise(12, 12, 1, 2 * s);
            let b = noise(12, 12, 1, 2 * s + 1);
            let (x, y) = (ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
            assert!((x - y).abs() < 1e-12);
            assert!((-1.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn depth_rmse_examples() {
        let a = noise(10, 10, 1, 7);
        let m = Raster::filled(10, 10, 1, 1.0);
        assert_eq!(depth_rmse(&a, &a, &m).unwrap(), 0.0);
        let shifted = a.map(|v| v + 0.25);
        assert!((depth_rmse(&a, &shifted, &m).unwrap() - 0.25).abs() < 1e-6);
        assert!(depth_rmse(&a, &a, &Raster::new(10, 10, 1)).is_err());
    }

    #[test]
    fn infinite_scores_serialize_as_text() {
        #[derive(serde::Serialize, serde::Deserialize)]
        struct S {
            #[serde(with = "score_serde")]
            v: f64,
        }
        assert_eq!(serde_json::to_string(&S { v: f64::INFINITY }).unwrap(), r#"{"v":"inf"}"#);
        let back: S = serde_json::from_str(r#"{"v":"inf"}"#).unwrap();
        assert_eq!(back.v, f64::INFINITY);
        let back: S = serde_json::from_str(r#"{"v":31.5}"#).unwrap();
        assert_eq!(back.v, 31.5);
    }
}
