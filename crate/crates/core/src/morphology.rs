//! Grayscale erosion/dilation and the three-channel aggregated depth map.
//!
//! Borders replicate the edge pixel. Background pixels are expected to carry a far
//! sentinel depth already, so dilation near silhouettes picks up "background" as the far
//! layer while erosion keeps the foreground surface.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

/// Square `(2k+1)^2` window with optional additive offsets `B(s, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuringElement {
    pub k: usize,
    /// Row-major over `t` then `s`, both in `-k..=k`. `None` is flat.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<f64>>,
}

impl Default for StructuringElement {
    fn default() -> Self {
        Self::flat(1)
    }
}

impl StructuringElement {
    pub fn flat(k: usize) -> Self {
        Self { k, offsets: None }
    }

    pub fn with_offsets(k: usize, offsets: Vec<f64>) -> Result<Self> {
        let se = Self { k, offsets: Some(offsets) };
        se.validate()?;
        Ok(se)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(b) = &self.offsets {
            let n = (2 * self.k + 1).pow(2);
            if b.len() != n {
                return Err(Error::mismatch(n, b.len()));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("structuring element offsets must be finite".into()));
            }
        }
        Ok(())
    }

    fn offset(&self, s: isize, t: isize) -> f64 {
        match &self.offsets {
            None => 0.0,
            Some(b) => {
                let w = 2 * self.k as isize + 1;
                b[((t + self.k as isize) * w + s + self.k as isize) as usize]
            }
        }
    }
}

fn filter(depth: &Raster, se: &StructuringElement, dilate: bool) -> Result<Raster> {
    se.validate()?;
    if depth.channels() != 1 {
        return Err(Error::InvalidArgument("morphology works on single-channel maps".into()));
    }
    let (w, h) = depth.dims();
    let k = se.k as isize;
    let mut out = Raster::new(w, h, 1);
    out.data_mut().par_chunks_mut(w.max(1)).enumerate().for_each(|(y, row)| {
        for (x, v) in row.iter_mut().enumerate() {
            let mut best = if dilate { f64::NEG_INFINITY } else { f64::INFINITY };
            for t in -k..=k {
                for s in -k..=k {
                    let d = depth.get_clamped(x as isize + s, y as isize + t, 0) as f64;
                    if dilate {
                        best = best.max(d + se.offset(s, t));
                    } else {
                        best = best.min(d - se.offset(s, t));
                    }
                }
            }
            *v = best as f32;
        }
    });
    Ok(out)
}

/// `min` over the window of `D(x+s, y+t) - B(s, t)`.
pub fn erode(depth: &Raster, se: &StructuringElement) -> Result<Raster> {
    filter(depth, se, false)
}

/// `max` over the window of `D(x+s, y+t) + B(s, t)`.
pub fn dilate(depth: &Raster, se: &StructuringElement) -> Result<Raster> {
    filter(depth, se, true)
}

/// Channels `(eroded, original, dilated)` plus the foreground mask.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedDepth {
    pub channels: Raster,
    pub mask: Raster,
}

impl AggregatedDepth {
    pub fn channel(&self, c: usize) -> Raster {
        self.channels.channel(c)
    }
}

/// `depth` must already hold the far sentinel on background pixels.
pub fn aggregate(depth: &Raster, mask: &Raster, se: &StructuringElement) -> Result<AggregatedDepth> {
    mask.ensure_dims(depth.width(), depth.height())?;
    if mask.channels() != 1 || depth.channels() != 1 {
        return Err(Error::InvalidArgument("depth and mask must be single-channel".into()));
    }
    if depth.data().iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidArgument("depth map contains non-finite values".into()));
    }
    let ero = erode(depth, se)?;
    let dil = dilate(depth, se)?;
    Ok(AggregatedDepth {
        channels: Raster::stack(&[&ero, depth, &dil])?,
        mask: mask.clone(),
    })
}
