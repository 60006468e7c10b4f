//! Dense float images (depth, normal, color, alpha maps).

use crate::error::{Error, Result};

/// Row-major, channel-interleaved `f32` image.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::mismatch(
                format!("{} values for {width}x{height}x{channels}", width * height * channels),
                data.len(),
            ));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds a single-channel raster from `f(x, y)`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            channels: 1,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn byte_size(&self) -> usize {
        self.data.len() * std::mem::size_of::<f32>()
    }

    #[inline]
    fn offset(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * self.channels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[self.offset(x, y) + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        let o = self.offset(x, y) + c;
        self.data[o] = v;
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let o = self.offset(x, y);
        &mut self.data[o..o + self.channels]
    }

    /// Rows as mutable slices, for parallel fills.
    pub fn rows_mut(&mut self) -> std::slice::ChunksMut<'_, f32> {
        let stride = (self.width * self.channels).max(1);
        self.data.chunks_mut(stride)
    }

    /// Clamped-coordinate fetch.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize, c: usize) -> f32 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.get(xc, yc, c)
    }

    pub fn channel(&self, c: usize) -> Raster {
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        Raster {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Interleaves equally sized single-channel rasters.
    pub fn stack(planes: &[&Raster]) -> Result<Raster> {
        let first = planes
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot stack zero planes".into()))?;
        let (w, h) = first.dims();
        for p in planes {
            if p.dims() != (w, h) || p.channels != 1 {
                return Err(Error::mismatch(
                    format!("{w}x{h}x1"),
                    format!("{}x{}x{}", p.width, p.height, p.channels),
                ));
            }
        }
        let n = planes.len();
        let mut out = Raster::new(w, h, n);
        for (c, p) in planes.iter().enumerate() {
            for (i, v) in p.data.iter().enumerate() {
                out.data[i * n + c] = *v;
            }
        }
        Ok(out)
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.dims() == other.dims() && self.channels == other.channels
    }

    pub fn ensure_dims(&self, width: usize, height: usize) -> Result<()> {
        if self.dims() != (width, height) {
            return Err(Error::mismatch(
                format!("{width}x{height}"),
                format!("{}x{}", self.width, self.height),
            ));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Raster {
        Raster {
            data: self.data.iter().map(|v| f(*v)).collect(),
            ..self.clone()
        }
    }

    /// Bilinear resampling to `factor`x resolution with pixel centres at half-integer
    /// coordinates and clamped borders.
    pub fn upsample_bilinear(&self, factor: usize) -> Raster {
        let (w, h) = (self.width * factor, self.height * factor);
        let mut out = Raster::new(w, h, self.channels);
        let f = factor as f64;
        for y in 0..h {
            let sy = (y as f64 + 0.5) / f - 0.5;
            let y0 = sy.floor();
            let ty = (sy - y0) as f32;
            for x in 0..w {
                let sx = (x as f64 + 0.5) / f - 0.5;
                let x0 = sx.floor();
                let tx = (sx - x0) as f32;
                let (x0, y0) = (x0 as isize, y0 as isize);
                for c in 0..self.channels {
                    let a = self.get_clamped(x0, y0, c);
                    let b = self.get_clamped(x0 + 1, y0, c);
                    let cc = self.get_clamped(x0, y0 + 1, c);
                    let d = self.get_clamped(x0 + 1, y0 + 1, c);
                    let top = a + (b - a) * tx;
                    let bot = cc + (d - cc) * tx;
                    out.set(x, y, c, top + (bot - top) * ty);
                }
            }
        }
        out
    }

    pub fn upsample_nearest(&self, factor: usize) -> Raster {
        let (w, h) = (self.width * factor, self.height * factor);
        let mut out = Raster::new(w, h, self.channels);
        for y in 0..h {
            for x in 0..w {
                let src = self.offset(x / factor, y / factor);
                let dst = out.offset(x, y);
                out.data[dst..dst + self.channels]
                    .copy_from_slice(&self.data[src..src + self.channels]);
            }
        }
        out
    }
}
