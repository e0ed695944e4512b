//! Polarization state from four-orientation intensity images.
//!
//! The intensity behind a linear polarizer at angle `a` follows
//! `I(a) = I_avg + ρ I_avg cos(2(a - φ))`. A division-of-focal-plane sensor
//! samples `a ∈ {0, π/4, π/2, 3π/4}`, which is enough for the linear Stokes
//! vector and hence `(I_avg, ρ, φ)`.

use crate::angle;
use crate::camera::{CameraIntrinsics, GeometryError};
use crate::raster::{Image, RasterError, ScalarMap};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Blur applied to intensities before Stokes extraction unless configured otherwise.
pub const DEFAULT_BLUR_SIGMA: f64 = 1.0;
/// Pixels with DoLP at or below this value are excluded.
pub const DEFAULT_DOLP_THRESHOLD: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolarizationError {
    #[error("mosaic dimensions {0}x{1} must both be even")]
    OddMosaic(usize, usize),
    #[error("mosaic pattern must contain each orientation exactly once")]
    PatternNotPermutation,
    #[error("unknown polarizer orientation {0:?}")]
    UnknownOrientation(String),
    #[error("blur sigma must be finite and non-negative, got {0}")]
    NegativeSigma(f64),
    #[error("DoLP threshold must lie in [0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("intensity images must be non-negative and finite")]
    InvalidIntensity,
    #[error("intensity images do not match the {0}x{1} intrinsics")]
    IntrinsicsMismatch(u32, u32),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Micro-polarizer orientation of one mosaic cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [
        Orientation::Deg0,
        Orientation::Deg45,
        Orientation::Deg90,
        Orientation::Deg135,
    ];

    pub fn radians(self) -> f64 {
        use std::f64::consts::FRAC_PI_4;
        match self {
            Orientation::Deg0 => 0.0,
            Orientation::Deg45 => FRAC_PI_4,
            Orientation::Deg90 => 2.0 * FRAC_PI_4,
            Orientation::Deg135 => 3.0 * FRAC_PI_4,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Orientation {
    type Err = PolarizationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "0" => Ok(Orientation::Deg0),
            "45" => Ok(Orientation::Deg45),
            "90" => Ok(Orientation::Deg90),
            "135" => Ok(Orientation::Deg135),
            other => Err(PolarizationError::UnknownOrientation(other.to_string())),
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Orientation::Deg0 => "0",
            Orientation::Deg45 => "45",
            Orientation::Deg90 => "90",
            Orientation::Deg135 => "135",
        };
        f.write_str(s)
    }
}

/// 2x2 micro-polarizer layout, indexed `[row][col]`.
///
/// Serialized as in dataset configs: `[["0","45"],["135","90"]]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "[[String; 2]; 2]", into = "[[String; 2]; 2]")]
pub struct MosaicPattern([[Orientation; 2]; 2]);

impl MosaicPattern {
    pub fn new(cells: [[Orientation; 2]; 2]) -> Result<Self, PolarizationError> {
        let mut seen = [false; 4];
        for o in cells.iter().flatten() {
            if seen[o.index()] {
                return Err(PolarizationError::PatternNotPermutation);
            }
            seen[o.index()] = true;
        }
        Ok(Self(cells))
    }

    pub fn cells(&self) -> [[Orientation; 2]; 2] {
        self.0
    }

    /// `(row, col)` offset of an orientation within the 2x2 cell.
    pub fn offset_of(&self, o: Orientation) -> (usize, usize) {
        for r in 0..2 {
            for c in 0..2 {
                if self.0[r][c] == o {
                    return (r, c);
                }
            }
        }
        unreachable!("pattern is a permutation")
    }
}

impl Default for MosaicPattern {
    fn default() -> Self {
        use Orientation::*;
        Self([[Deg0, Deg45], [Deg135, Deg90]])
    }
}

impl TryFrom<[[String; 2]; 2]> for MosaicPattern {
    type Error = PolarizationError;

    fn try_from(raw: [[String; 2]; 2]) -> Result<Self, Self::Error> {
        let mut cells = [[Orientation::Deg0; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                cells[r][c] = raw[r][c].parse()?;
            }
        }
        Self::new(cells)
    }
}

impl From<MosaicPattern> for [[String; 2]; 2] {
    fn from(p: MosaicPattern) -> Self {
        p.0.map(|row| row.map(|o| o.to_string()))
    }
}

/// Four co-registered intensity images behind polarizers at 0, π/4, π/2, 3π/4.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationFrame {
    pub i0: Image,
    pub i45: Image,
    pub i90: Image,
    pub i135: Image,
    pub intrinsics: CameraIntrinsics,
}

impl PolarizationFrame {
    pub fn new(
        i0: Image,
        i45: Image,
        i90: Image,
        i135: Image,
        intrinsics: CameraIntrinsics,
    ) -> Result<Self, PolarizationError> {
        i0.ensure_same_dims(&i45)?;
        i0.ensure_same_dims(&i90)?;
        i0.ensure_same_dims(&i135)?;
        if i0.dims() != (intrinsics.width() as usize, intrinsics.height() as usize) {
            return Err(PolarizationError::IntrinsicsMismatch(
                intrinsics.width(),
                intrinsics.height(),
            ));
        }
        let ok = [&i0, &i45, &i90, &i135]
            .iter()
            .all(|img| img.data().iter().all(|v| v.is_finite() && *v >= 0.0));
        if !ok {
            return Err(PolarizationError::InvalidIntensity);
        }
        Ok(Self {
            i0,
            i45,
            i90,
            i135,
            intrinsics,
        })
    }

    pub fn image(&self, o: Orientation) -> &Image {
        match o {
            Orientation::Deg0 => &self.i0,
            Orientation::Deg45 => &self.i45,
            Orientation::Deg90 => &self.i90,
            Orientation::Deg135 => &self.i135,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.i0.dims()
    }

    /// Blurs all four channels with the same kernel.
    pub fn blurred(&self, sigma: f64) -> Result<Self, PolarizationError> {
        Ok(Self {
            i0: gaussian_blur(&self.i0, sigma)?,
            i45: gaussian_blur(&self.i45, sigma)?,
            i90: gaussian_blur(&self.i90, sigma)?,
            i135: gaussian_blur(&self.i135, sigma)?,
            intrinsics: self.intrinsics,
        })
    }
}

/// Linear Stokes components per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct StokesImage {
    pub s0: Image,
    pub s1: Image,
    pub s2: Image,
}

/// Per-pixel polarization state. All three maps share one mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationState {
    /// Phase angle (AoLP) in `[0, π)`.
    pub aolp: ScalarMap,
    /// Degree of linear polarization in `[0, 1]`.
    pub dolp: ScalarMap,
    pub iavg: ScalarMap,
}

/// Splits a raw DoFP mosaic into four half-resolution images by plain 2x2
/// subsampling. `intrinsics` describe the raw sensor.
pub fn decode_mosaic(
    raw: &Image,
    pattern: &MosaicPattern,
    intrinsics: &CameraIntrinsics,
) -> Result<PolarizationFrame, PolarizationError> {
    let (w, h) = raw.dims();
    if w % 2 != 0 || h % 2 != 0 {
        return Err(PolarizationError::OddMosaic(w, h));
    }
    if (w, h) != (intrinsics.width() as usize, intrinsics.height() as usize) {
        return Err(PolarizationError::IntrinsicsMismatch(
            intrinsics.width(),
            intrinsics.height(),
        ));
    }
    let channel = |o: Orientation| {
        let (r, c) = pattern.offset_of(o);
        Image::from_fn(w / 2, h / 2, |x, y| raw.get(2 * x + c, 2 * y + r))
    };
    PolarizationFrame::new(
        channel(Orientation::Deg0),
        channel(Orientation::Deg45),
        channel(Orientation::Deg90),
        channel(Orientation::Deg135),
        intrinsics.halved()?,
    )
}

/// `s0 = I(0) + I(π/2)`, `s1 = I(0) - I(π/2)`, `s2 = I(π/4) - I(3π/4)`.
pub fn compute_stokes(frame: &PolarizationFrame) -> StokesImage {
    let (w, h) = frame.dims();
    let zip = |f: fn(f64, f64) -> f64, a: &Image, b: &Image| {
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Image::from_vec(w, h, data).expect("same dimensions")
    };
    StokesImage {
        s0: zip(|a, b| a + b, &frame.i0, &frame.i90),
        s1: zip(|a, b| a - b, &frame.i0, &frame.i90),
        s2: zip(|a, b| a - b, &frame.i45, &frame.i135),
    }
}

/// Polarization state of a single Stokes vector: `(I_avg, ρ, φ)`.
///
/// Degenerate inputs (`s0 = 0` or `ρ = 0`) give `φ = 0`.
pub fn state_from_stokes(s0: f64, s1: f64, s2: f64) -> (f64, f64, f64) {
    let iavg = 0.5 * s0;
    if s0 <= 0.0 {
        return (iavg, 0.0, 0.0);
    }
    let lin = s1.hypot(s2);
    let rho = (lin / s0).min(1.0);
    let phi = if lin > 0.0 {
        angle::canonical(0.5 * s2.atan2(s1))
    } else {
        0.0
    };
    (iavg, rho, phi)
}

/// Extracts `(I_avg, ρ, φ)` maps. A pixel is valid iff `s0 > 0` and `ρ > threshold`.
pub fn extract_state(
    stokes: &StokesImage,
    dolp_threshold: f64,
) -> Result<PolarizationState, PolarizationError> {
    if !(0.0..1.0).contains(&dolp_threshold) {
        return Err(PolarizationError::InvalidThreshold(dolp_threshold));
    }
    let (w, h) = stokes.s0.dims();
    let n = w * h;
    let mut aolp = Vec::with_capacity(n);
    let mut dolp = Vec::with_capacity(n);
    let mut iavg = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    for i in 0..n {
        let s0 = stokes.s0.data()[i];
        let (ia, rho, phi) = state_from_stokes(s0, stokes.s1.data()[i], stokes.s2.data()[i]);
        aolp.push(phi);
        dolp.push(rho);
        iavg.push(ia);
        mask.push(s0 > 0.0 && rho > dolp_threshold);
    }
    Ok(PolarizationState {
        aolp: ScalarMap::new(Image::from_vec(w, h, aolp)?, mask.clone())?,
        dolp: ScalarMap::new(Image::from_vec(w, h, dolp)?, mask.clone())?,
        iavg: ScalarMap::new(Image::from_vec(w, h, iavg)?, mask)?,
    })
}

/// The four intensities behind polarizers at 0, π/4, π/2, 3π/4.
pub fn synthesize_intensities(iavg: f64, rho: f64, phi: f64) -> [f64; 4] {
    Orientation::ALL.map(|o| iavg + rho * iavg * (2.0 * (o.radians() - phi)).cos())
}

/// Normalized 1-D Gaussian taps for offsets `-r..=r`, `r = ⌈3σ⌉`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>, PolarizationError> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(PolarizationError::NegativeSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(vec![1.0]);
    }
    let r = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    Ok(taps.into_iter().map(|t| t / sum).collect())
}

/// Separable Gaussian blur with border replication. `sigma = 0` is the identity.
pub fn gaussian_blur(image: &Image, sigma: f64) -> Result<Image, PolarizationError> {
    let kernel = gaussian_kernel(sigma)?;
    if kernel.len() == 1 {
        return Ok(image.clone());
    }
    let (w, h) = image.dims();
    if w == 0 || h == 0 {
        return Ok(image.clone());
    }
    let r = (kernel.len() / 2) as i64;
    let src = image.data();

    let mut tmp = vec![0.0; w * h];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let line = &src[y * w..(y + 1) * w];
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &t) in kernel.iter().enumerate() {
                let xx = (x as i64 + k as i64 - r).clamp(0, w as i64 - 1) as usize;
                acc += t * line[xx];
            }
            *out = acc;
        }
    });

    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (k, &t) in kernel.iter().enumerate() {
            let yy = (y as i64 + k as i64 - r).clamp(0, h as i64 - 1) as usize;
            let line = &tmp[yy * w..(yy + 1) * w];
            for (o, &v) in row.iter_mut().zip(line) {
                *o += t * v;
            }
        }
    });
    Ok(Image::from_vec(w, h, out)?)
}

/// Blurs the values of a masked map; the mask is unchanged.
pub fn gaussian_blur_map(map: &ScalarMap, sigma: f64) -> Result<ScalarMap, PolarizationError> {
    Ok(ScalarMap::new(
        gaussian_blur(map.values(), sigma)?,
        map.mask().to_vec(),
    )?)
}

/// Blur (if any) → Stokes → state, the standard preprocessing chain.
pub fn process_frame(
    frame: &PolarizationFrame,
    blur_sigma: f64,
    dolp_threshold: f64,
) -> Result<PolarizationState, PolarizationError> {
    let stokes = if blur_sigma > 0.0 {
        compute_stokes(&frame.blurred(blur_sigma)?)
    } else {
        if blur_sigma < 0.0 || !blur_sigma.is_finite() {
            return Err(PolarizationError::NegativeSigma(blur_sigma));
        }
        compute_stokes(frame)
    };
    extract_state(&stokes, dolp_threshold)
}
