//! File formats and the on-disk dataset layout.
//!
//! ```text
//! <root>/scene.json             SceneSpec
//! <root>/manifest.json          view count, config hash
//! <root>/view_000/i0.png ...    16-bit intensities (i0, i45, i90, i135)
//! <root>/view_000/gt_aolp.pfm   ground-truth maps, NaN where masked
//! <root>/view_000/gt_dolp.pfm
//! <root>/view_000/gt_depth.pfm
//! <root>/view_000/mask.png      8-bit, 0 / 255
//! <root>/view_000/pose.json
//! ```

use crate::camera::{CameraIntrinsics, Pose};
use crate::polarization::{PolarizationError, PolarizationFrame};
use crate::raster::{Image, RasterError, ScalarMap};
use crate::synth::{RenderedView, SceneSpec};
use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Polarization(#[from] PolarizationError),
}

fn file_err(path: &Path) -> impl FnOnce(io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Writes a single-channel little-endian PFM; masked pixels become NaN.
pub fn write_pfm_to<W: Write>(mut out: W, map: &ScalarMap) -> io::Result<()> {
    let (w, h) = map.dims();
    write!(out, "Pf\n{w} {h}\n-1.0\n")?;
    let mut row = Vec::with_capacity(4 * w);
    // PFM stores the bottom row first
    for y in (0..h).rev() {
        row.clear();
        for x in 0..w {
            let v = map.get(x, y).map_or(f32::NAN, |v| v as f32);
            row.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&row)?;
    }
    Ok(())
}

pub fn write_pfm(path: &Path, map: &ScalarMap) -> Result<(), IoError> {
    let file = File::create(path).map_err(file_err(path))?;
    let mut out = BufWriter::new(file);
    write_pfm_to(&mut out, map).map_err(file_err(path))?;
    out.flush().map_err(file_err(path))
}

fn header_line<R: BufRead>(r: &mut R, path: &Path) -> Result<String, IoError> {
    let mut line = String::new();
    r.read_line(&mut line).map_err(file_err(path))?;
    Ok(line.trim().to_string())
}

/// Reads a PFM. Colour files keep their first channel; NaN and infinite
/// samples are masked.
pub fn read_pfm(path: &Path) -> Result<ScalarMap, IoError> {
    let file = File::open(path).map_err(file_err(path))?;
    let mut r = BufReader::new(file);
    let channels = match header_line(&mut r, path)?.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(format_err(path, format!("bad PFM magic {other:?}"))),
    };
    let dims = header_line(&mut r, path)?;
    let parsed: Vec<usize> = dims
        .split_whitespace()
        .map(|s| {
            s.parse()
                .map_err(|_| format_err(path, format!("bad dimensions {dims:?}")))
        })
        .collect::<Result<_, _>>()?;
    let [w, h] = parsed[..] else {
        return Err(format_err(path, format!("bad dimensions {dims:?}")));
    };
    let scale_line = header_line(&mut r, path)?;
    let scale: f32 = scale_line
        .parse()
        .map_err(|_| format_err(path, format!("bad scale {scale_line:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(format_err(path, "scale must be nonzero"));
    }
    let little = scale < 0.0;

    let mut bytes = vec![0u8; w * h * channels * 4];
    r.read_exact(&mut bytes).map_err(file_err(path))?;
    let mut values = vec![0.0; w * h];
    let mut mask = vec![false; w * h];
    for (i, chunk) in bytes.chunks_exact(4 * channels).enumerate() {
        let raw: [u8; 4] = chunk[..4].try_into().expect("chunk of 4 bytes");
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (x, y_up) = (i % w, i / w);
        let idx = (h - 1 - y_up) * w + x;
        if v.is_finite() {
            values[idx] = v as f64;
            mask[idx] = true;
        }
    }
    Ok(ScalarMap::new(Image::from_vec(w, h, values)?, mask)?)
}

fn encode_png(
    path: &Path,
    bytes: &[u8],
    w: usize,
    h: usize,
    color: ExtendedColorType,
) -> Result<(), IoError> {
    let file = File::create(path).map_err(file_err(path))?;
    let out = BufWriter::new(file);
    PngEncoder::new_with_quality(out, CompressionType::Fast, FilterType::Sub)
        .write_image(bytes, w as u32, h as u32, color)
        .map_err(|source| IoError::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// 16-bit grayscale PNG of values in `[0, 1]` (clamped).
pub fn write_png16(path: &Path, image: &Image) -> Result<(), IoError> {
    let bytes: Vec<u8> = image
        .data()
        .iter()
        .flat_map(|v| ((v.clamp(0.0, 1.0) * 65535.0).round() as u16).to_ne_bytes())
        .collect();
    encode_png(
        path,
        &bytes,
        image.width(),
        image.height(),
        ExtendedColorType::L16,
    )
}

/// 8-bit grayscale PNG of values in `[0, 1]` (clamped).
pub fn write_png8(path: &Path, image: &Image) -> Result<(), IoError> {
    let bytes: Vec<u8> = image
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    encode_png(
        path,
        &bytes,
        image.width(),
        image.height(),
        ExtendedColorType::L8,
    )
}

/// Reads an 8- or 16-bit grayscale PNG into `[0, 1]`.
pub fn read_png(path: &Path) -> Result<Image, IoError> {
    let img = image::open(path)
        .map_err(|source| IoError::Image {
            path: path.to_path_buf(),
            source,
        })?
        .into_luma16();
    let (w, h) = img.dimensions();
    let data = img
        .into_raw()
        .into_iter()
        .map(|v| v as f64 / 65535.0)
        .collect();
    Ok(Image::from_vec(w as usize, h as usize, data)?)
}

pub fn write_mask(path: &Path, mask: &[bool], width: usize, height: usize) -> Result<(), IoError> {
    let bytes: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    if bytes.len() != width * height {
        return Err(RasterError::SizeMismatch {
            width,
            height,
            len: bytes.len(),
        }
        .into());
    }
    encode_png(path, &bytes, width, height, ExtendedColorType::L8)
}

/// Nonzero pixels are valid.
pub fn read_mask(path: &Path) -> Result<(Vec<bool>, usize, usize), IoError> {
    let img = read_png(path)?;
    let (w, h) = img.dims();
    Ok((img.data().iter().map(|&v| v > 0.0).collect(), w, h))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(file_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(file_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_intrinsics(path: &Path) -> Result<CameraIntrinsics, IoError> {
    read_json(path)
}

pub fn read_pose(path: &Path) -> Result<Pose, IoError> {
    read_json(path)
}

/// Hex SHA-256 of the scene's canonical JSON.
pub fn config_hash(spec: &SceneSpec) -> String {
    let json = serde_json::to_vec(spec).expect("scene serializes");
    hex::encode(Sha256::digest(&json))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub views: usize,
    pub config_hash: String,
    pub files: Vec<String>,
}

pub const VIEW_FILES: [&str; 9] = [
    "i0.png",
    "i45.png",
    "i90.png",
    "i135.png",
    "gt_aolp.pfm",
    "gt_dolp.pfm",
    "gt_depth.pfm",
    "mask.png",
    "pose.json",
];

pub fn view_dir(root: &Path, view: usize) -> PathBuf {
    root.join(format!("view_{view:03}"))
}

/// Writes one rendered view into its `view_k` directory.
pub fn write_view(root: &Path, view: &RenderedView) -> Result<(), IoError> {
    let dir = view_dir(root, view.view_index);
    fs::create_dir_all(&dir).map_err(file_err(&dir))?;
    let f = &view.frame;
    for (name, img) in [
        ("i0", &f.i0),
        ("i45", &f.i45),
        ("i90", &f.i90),
        ("i135", &f.i135),
    ] {
        write_png16(&dir.join(format!("{name}.png")), img)?;
    }
    write_pfm(&dir.join("gt_aolp.pfm"), &view.gt_aolp)?;
    write_pfm(&dir.join("gt_dolp.pfm"), &view.gt_dolp)?;
    write_pfm(&dir.join("gt_depth.pfm"), &view.gt_depth)?;
    let (w, h) = view.gt_aolp.dims();
    write_mask(&dir.join("mask.png"), view.gt_aolp.mask(), w, h)?;
    write_json(&dir.join("pose.json"), &view.pose)
}

/// Writes `scene.json` and `manifest.json`. Views are written separately.
pub fn write_scene(root: &Path, spec: &SceneSpec) -> Result<(), IoError> {
    fs::create_dir_all(root).map_err(file_err(root))?;
    write_json(&root.join("scene.json"), spec)?;
    let mut files = vec!["scene.json".to_string()];
    for k in 0..spec.poses.len() {
        for f in VIEW_FILES {
            files.push(format!("view_{k:03}/{f}"));
        }
    }
    let manifest = Manifest {
        views: spec.poses.len(),
        config_hash: config_hash(spec),
        files,
    };
    write_json(&root.join("manifest.json"), &manifest)
}

/// A view read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredView {
    pub frame: PolarizationFrame,
    pub pose: Pose,
    pub mask: Vec<bool>,
    pub gt_aolp: Option<ScalarMap>,
    pub gt_depth: Option<ScalarMap>,
}

/// Dataset directory opened for streaming access, one view at a time.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub scene: SceneSpec,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self, IoError> {
        let scene: SceneSpec = read_json(&root.join("scene.json"))?;
        Ok(Self {
            root: root.to_path_buf(),
            scene,
        })
    }

    pub fn len(&self) -> usize {
        self.scene.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scene.poses.is_empty()
    }

    pub fn load_view(&self, view: usize) -> Result<StoredView, IoError> {
        let dir = view_dir(&self.root, view);
        let load = |name: &str| read_png(&dir.join(format!("{name}.png")));
        let frame = PolarizationFrame::new(
            load("i0")?,
            load("i45")?,
            load("i90")?,
            load("i135")?,
            self.scene.intrinsics,
        )?;
        let pose = read_pose(&dir.join("pose.json"))?;
        let (mask, w, h) = read_mask(&dir.join("mask.png"))?;
        if (w, h) != frame.dims() {
            return Err(format_err(
                &dir.join("mask.png"),
                "mask size differs from images",
            ));
        }
        let optional = |name: &str| -> Result<Option<ScalarMap>, IoError> {
            let p = dir.join(name);
            if p.exists() {
                read_pfm(&p).map(Some)
            } else {
                Ok(None)
            }
        };
        Ok(StoredView {
            frame,
            pose,
            mask,
            gt_aolp: optional("gt_aolp.pfm")?,
            gt_depth: optional("gt_depth.pfm")?,
        })
    }
}
