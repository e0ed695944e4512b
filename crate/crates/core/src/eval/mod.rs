//! Experiment drivers behind the `ppa` command line.
//!
//! Every command reads views one at a time from a [`SceneSource`] (an
//! in-memory synthetic scene or a dataset directory), reduces per-view
//! results in view order, and emits an [`ErrorReport`].

pub mod accuracy;
pub mod contours;
pub mod estimate;
pub mod report;
pub mod stats;

use crate::angle;
use crate::camera::{CameraIntrinsics, Pose};
use crate::contour::ContourError;
use crate::io::{Dataset, IoError};
use crate::normal::EstimationError;
use crate::phase::ModelKind;
use crate::polarization::{process_frame, PolarizationError, PolarizationFrame};
use crate::raster::ScalarMap;
use crate::synth::{render_view, Board, DolpMode, NoiseSpec, PoseSampler, SceneSpec, SynthError};
pub use report::{Check, ErrorReport, Provenance, Section, SCHEMA_VERSION};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("insufficient views: need {needed}, dataset has {available}")]
    InsufficientViews { needed: usize, available: usize },
    #[error("missing ground truth: {0}")]
    MissingGroundTruth(String),
    #[error("no contour seed lies inside the valid region")]
    SeedsOutsideMask,
    #[error("report schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("section {0:?} appears in more than one report")]
    DuplicateSection(String),
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Polarization(#[from] PolarizationError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Contour(#[from] ContourError),
}

/// Which phase models a command evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModelSelection {
    Opa,
    Ppa,
    #[default]
    Both,
}

impl ModelSelection {
    pub fn models(self) -> Vec<ModelKind> {
        match self {
            ModelSelection::Opa => vec![ModelKind::Opa],
            ModelSelection::Ppa => vec![ModelKind::Ppa],
            ModelSelection::Both => ModelKind::ALL.to_vec(),
        }
    }
}

/// Parameters of the default synthetic scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub width: u32,
    pub height: u32,
    pub hfov_deg: f64,
    pub views: usize,
    pub distance_mm: (f64, f64),
    pub angular_range_deg: f64,
    pub refractive_index: f64,
    pub noise_aolp_deg: f64,
    pub noise_intensity: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            hfov_deg: 86.6,
            views: 282,
            distance_mm: (350.0, 700.0),
            angular_range_deg: 40.0,
            refractive_index: 1.5,
            noise_aolp_deg: 0.0,
            noise_intensity: 0.0,
        }
    }
}

impl SceneParams {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics, EvalError> {
        CameraIntrinsics::from_horizontal_fov(self.width, self.height, self.hfov_deg.to_radians())
            .map_err(|e| EvalError::InvalidConfig(e.to_string()))
    }

    /// Specular board seen from randomly sampled poses.
    pub fn build(&self, seed: u64) -> Result<SceneSpec, EvalError> {
        let k = self.intrinsics()?;
        let board = Board::default();
        let sampler = PoseSampler::new(self.distance_mm, self.angular_range_deg.to_radians());
        let poses = sampler.sample(self.views, &board, &k, seed)?;
        let mut spec = SceneSpec::new(
            board,
            poses,
            k,
            DolpMode::SpecularFresnel {
                refractive_index: self.refractive_index,
            },
            seed,
        );
        spec.noise = NoiseSpec {
            intensity_sigma: self.noise_intensity,
            aolp_sigma: self.noise_aolp_deg.to_radians(),
        };
        Ok(spec)
    }
}

/// Shared evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub dataset: Option<PathBuf>,
    pub model: ModelSelection,
    pub dolp_threshold: f64,
    pub blur_sigma: f64,
    /// Views per multi-view trial (K).
    pub views: usize,
    pub trials: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Used when no dataset is given.
    pub scene: SceneParams,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            model: ModelSelection::Both,
            dolp_threshold: crate::polarization::DEFAULT_DOLP_THRESHOLD,
            blur_sigma: crate::polarization::DEFAULT_BLUR_SIGMA,
            views: 3,
            trials: 1000,
            seed: 7,
            out: PathBuf::from("out"),
            scene: SceneParams::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(0.0..1.0).contains(&self.dolp_threshold) {
            return Err(EvalError::InvalidConfig(format!(
                "dolp threshold {} outside [0, 1)",
                self.dolp_threshold
            )));
        }
        if !(self.blur_sigma >= 0.0 && self.blur_sigma.is_finite()) {
            return Err(EvalError::InvalidConfig(format!(
                "blur sigma {}",
                self.blur_sigma
            )));
        }
        if self.views < 1 || self.trials < 1 {
            return Err(EvalError::InvalidConfig(
                "views and trials must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// The configured dataset, or the default synthetic scene in memory.
    pub fn source(&self) -> Result<SceneSource, EvalError> {
        self.validate()?;
        match &self.dataset {
            Some(path) => Ok(SceneSource::Disk(Dataset::open(path)?)),
            None => Ok(SceneSource::Memory(self.scene.build(self.seed)?)),
        }
    }
}

/// One view's measurements and the ground truth needed to score them.
#[derive(Debug, Clone)]
pub struct ViewInput {
    pub index: usize,
    pub frame: PolarizationFrame,
    pub pose: Pose,
    /// Pixels that see the board.
    pub gt_mask: Vec<bool>,
}

#[derive(Debug, Clone)]
pub enum SceneSource {
    Memory(SceneSpec),
    Disk(Dataset),
}

impl SceneSource {
    pub fn scene(&self) -> &SceneSpec {
        match self {
            SceneSource::Memory(s) => s,
            SceneSource::Disk(d) => &d.scene,
        }
    }

    pub fn len(&self) -> usize {
        self.scene().poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_memory(&self) -> bool {
        matches!(self, SceneSource::Memory(_))
    }

    pub fn load(&self, view: usize) -> Result<ViewInput, EvalError> {
        match self {
            SceneSource::Memory(spec) => {
                let r = render_view(spec, view)?;
                Ok(ViewInput {
                    index: view,
                    gt_mask: r.gt_aolp.mask().to_vec(),
                    frame: r.frame,
                    pose: r.pose,
                })
            }
            SceneSource::Disk(ds) => {
                let v = ds.load_view(view)?;
                Ok(ViewInput {
                    index: view,
                    frame: v.frame,
                    pose: v.pose,
                    gt_mask: v.mask,
                })
            }
        }
    }

    pub fn provenance(&self, command: &str, config: &EvalConfig) -> Provenance {
        let scene = self.scene();
        let mut deviations =
            vec!["synthetic pose sampling replaces external view selection".to_string()];
        if !self.is_memory() {
            deviations.push("intensities read from 16-bit PNG (quantized)".to_string());
        }
        Provenance {
            command: command.to_string(),
            source: if self.is_memory() {
                "synthetic"
            } else {
                "dataset"
            }
            .to_string(),
            dataset: config.dataset.as_ref().map(|p| {
                p.file_name()
                    .unwrap_or(p.as_os_str())
                    .to_string_lossy()
                    .into_owned()
            }),
            config_hash: crate::io::config_hash(scene),
            seed: config.seed,
            views: scene.poses.len(),
            noise_aolp_deg: scene.noise.aolp_sigma.to_degrees(),
            blur_sigma: config.blur_sigma,
            dolp_threshold: config.dolp_threshold,
            deviations,
        }
    }
}

/// Measured phase with the scene's polarization shift removed, restricted to
/// board pixels with sufficient DoLP.
pub fn measured_phase(
    view: &ViewInput,
    aolp_shift: f64,
    config: &EvalConfig,
) -> Result<ScalarMap, EvalError> {
    let state = process_frame(&view.frame, config.blur_sigma, config.dolp_threshold)?;
    let mut aolp = state
        .aolp
        .map_valid(|a| Some(angle::canonical(a - aolp_shift)));
    aolp.restrict(&view.gt_mask);
    Ok(aolp)
}

/// Creates the output directory.
pub fn ensure_dir(path: &Path) -> Result<(), EvalError> {
    std::fs::create_dir_all(path).map_err(|source| EvalError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), EvalError> {
    std::fs::write(path, text).map_err(|source| EvalError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Renders every view of `spec` and writes the dataset under `root`.
pub fn write_dataset(spec: &SceneSpec, root: &Path) -> Result<(), EvalError> {
    use rayon::prelude::*;
    crate::io::write_scene(root, spec)?;
    (0..spec.poses.len())
        .into_par_iter()
        .try_for_each(|k| -> Result<(), EvalError> {
            let view = render_view(spec, k)?;
            crate::io::write_view(root, &view)?;
            Ok(())
        })
}
