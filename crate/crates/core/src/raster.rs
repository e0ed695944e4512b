//! Dense single-channel rasters and masked scalar fields.

use crate::angle;
use nalgebra::Point2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("buffer of length {len} does not match {width}x{height}")]
    SizeMismatch {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("rasters have different dimensions: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
}

/// Row-major `f64` image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self, RasterError> {
        if data.len() != width * height {
            return Err(RasterError::SizeMismatch {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn ensure_same_dims(&self, other: &Image) -> Result<(), RasterError> {
        if self.dims() != other.dims() {
            return Err(RasterError::DimensionMismatch(self.dims(), other.dims()));
        }
        Ok(())
    }
}

/// A scalar field with a per-pixel validity mask (AoLP, DoLP, depth, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    values: Image,
    mask: Vec<bool>,
}

/// Bilinear footprint of a sub-pixel position: up to four `(x, y, weight)` taps.
fn footprint(width: usize, height: usize, p: &Point2<f64>) -> Option<[(usize, usize, f64); 4]> {
    if !(p.x.is_finite() && p.y.is_finite()) {
        return None;
    }
    let x0 = p.x.floor();
    let y0 = p.y.floor();
    let tx = p.x - x0;
    let ty = p.y - y0;
    let mut taps = [(0usize, 0usize, 0.0f64); 4];
    let corners = [
        (x0, y0, (1.0 - tx) * (1.0 - ty)),
        (x0 + 1.0, y0, tx * (1.0 - ty)),
        (x0, y0 + 1.0, (1.0 - tx) * ty),
        (x0 + 1.0, y0 + 1.0, tx * ty),
    ];
    for (slot, &(cx, cy, w)) in taps.iter_mut().zip(corners.iter()) {
        if w == 0.0 {
            continue;
        }
        if cx < 0.0 || cy < 0.0 || cx >= width as f64 || cy >= height as f64 {
            return None;
        }
        *slot = (cx as usize, cy as usize, w);
    }
    Some(taps)
}

impl ScalarMap {
    pub fn new(values: Image, mask: Vec<bool>) -> Result<Self, RasterError> {
        if mask.len() != values.data.len() {
            return Err(RasterError::SizeMismatch {
                width: values.width,
                height: values.height,
                len: mask.len(),
            });
        }
        Ok(Self { values, mask })
    }

    /// All pixels valid.
    pub fn dense(values: Image) -> Self {
        let mask = vec![true; values.data.len()];
        Self { values, mask }
    }

    pub fn values(&self) -> &Image {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn width(&self) -> usize {
        self.values.width
    }

    pub fn height(&self) -> usize {
        self.values.height
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.values.width + x]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.values.width + x;
        self.mask[i].then(|| self.values.data[i])
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Iterator over `(x, y, value)` of valid pixels, row-major.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let w = self.values.width;
        self.mask
            .iter()
            .zip(self.values.data.iter())
            .enumerate()
            .filter(|(_, (&m, _))| m)
            .map(move |(i, (_, &v))| (i % w, i / w, v))
    }

    /// Intersects the mask with another mask of the same size.
    pub fn restrict(&mut self, other: &[bool]) {
        for (m, &o) in self.mask.iter_mut().zip(other) {
            *m &= o;
        }
    }

    /// Applies `f` to every value, masking pixels where it returns `None`.
    pub fn map_valid(&self, f: impl Fn(f64) -> Option<f64>) -> Self {
        let mut out = self.clone();
        for (v, m) in out.values.data.iter_mut().zip(out.mask.iter_mut()) {
            if !*m {
                continue;
            }
            match f(*v) {
                Some(nv) => *v = nv,
                None => *m = false,
            }
        }
        out
    }

    /// Value at the pixel nearest to `p`.
    pub fn sample_nearest(&self, p: &Point2<f64>) -> Option<f64> {
        let x = p.x.round();
        let y = p.y.round();
        if !(x >= 0.0 && y >= 0.0 && x < self.width() as f64 && y < self.height() as f64) {
            return None;
        }
        self.get(x as usize, y as usize)
    }

    /// Bilinear interpolation; `None` when any tap with nonzero weight is
    /// outside the raster or masked.
    pub fn sample_bilinear(&self, p: &Point2<f64>) -> Option<f64> {
        let taps = footprint(self.width(), self.height(), p)?;
        let mut acc = 0.0;
        for (x, y, w) in taps {
            if w == 0.0 {
                continue;
            }
            acc += w * self.get(x, y)?;
        }
        Some(acc)
    }

    /// Bilinear interpolation of an axial (mod-π) field: interpolates
    /// `(cos 2φ, sin 2φ)` and halves the resulting angle. Output in `[0, π)`.
    pub fn sample_angle(&self, p: &Point2<f64>) -> Option<f64> {
        let taps = footprint(self.width(), self.height(), p)?;
        let (mut c, mut s) = (0.0, 0.0);
        for (x, y, w) in taps {
            if w == 0.0 {
                continue;
            }
            let phi = self.get(x, y)?;
            c += w * (2.0 * phi).cos();
            s += w * (2.0 * phi).sin();
        }
        if c == 0.0 && s == 0.0 {
            return None;
        }
        Some(angle::canonical(0.5 * s.atan2(c)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn size_checks() {
        assert!(Image::from_vec(2, 2, vec![0.0; 3]).is_err());
        let img = Image::filled(2, 2, 1.0);
        assert!(ScalarMap::new(img, vec![true; 5]).is_err());
    }

    #[test]
    fn bilinear_on_linear_field_is_exact() {
        let img = Image::from_fn(5, 4, |x, y| 2.0 * x as f64 - 3.0 * y as f64 + 1.0);
        let map = ScalarMap::dense(img);
        let v = map.sample_bilinear(&Point2::new(1.25, 2.5)).unwrap();
        assert!((v - (2.0 * 1.25 - 3.0 * 2.5 + 1.0)).abs() < 1e-12);
        // integer positions need only one tap, even on the last row/column
        assert_eq!(
            map.sample_bilinear(&Point2::new(4.0, 3.0)),
            Some(8.0 - 9.0 + 1.0)
        );
        assert_eq!(map.sample_bilinear(&Point2::new(4.5, 3.0)), None);
        assert_eq!(map.sample_bilinear(&Point2::new(-0.25, 0.0)), None);
    }

    #[test]
    fn masked_taps_invalidate_samples() {
        let img = Image::filled(3, 3, 1.0);
        let mut mask = vec![true; 9];
        mask[4] = false;
        let map = ScalarMap::new(img, mask).unwrap();
        assert_eq!(map.sample_bilinear(&Point2::new(0.5, 0.5)), None);
        assert_eq!(map.sample_bilinear(&Point2::new(0.0, 0.0)), Some(1.0));
        assert_eq!(map.sample_nearest(&Point2::new(1.2, 0.9)), None);
        assert_eq!(map.sample_nearest(&Point2::new(0.4, 0.4)), Some(1.0));
        assert_eq!(map.valid_count(), 8);
    }

    #[test]
    fn angle_sampling_crosses_the_seam() {
        // φ just below π next to φ just above 0: the average must sit at the seam
        let img = Image::from_vec(2, 1, vec![PI - 0.1, 0.1]).unwrap();
        let map = ScalarMap::dense(img);
        let a = map.sample_angle(&Point2::new(0.5, 0.0)).unwrap();
        assert!(angle::distance(a, 0.0) < 1e-12, "got {a}");
        let naive = map.sample_bilinear(&Point2::new(0.5, 0.0)).unwrap();
        assert!((naive - PI / 2.0).abs() < 1e-12);
        let q = map.sample_angle(&Point2::new(0.25, 0.0)).unwrap();
        assert!(angle::distance(q, PI - 0.05) < 1e-3);
    }
}
