//! Synthetic polarization camera viewing a planar board.
//!
//! Each pixel ray is intersected with a finite rectangular board. Hits get the
//! perspective phase of the board normal (plus an optional π/2 shift), a DoLP
//! from the selected mode, and four polarizer intensities from the Malus
//! sinusoid on top of an unpolarized floor.

use crate::angle;
use crate::camera::{CameraIntrinsics, GeometryError, Pose};
use crate::contour::PlaneModel;
use crate::phase::{self, ppa_phase};
use crate::polarization::{Orientation, PolarizationError, PolarizationFrame};
use crate::raster::{Image, RasterError, ScalarMap};
use nalgebra::{Matrix3, Point2, Point3, Rotation3, Unit, UnitVector3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("board is not visible from view {0}")]
    PlaneBehindCamera(usize),
    #[error("view index {index} out of range ({count} poses)")]
    ViewOutOfRange { index: usize, count: usize },
    #[error("infeasible pose sampling: {0}")]
    InfeasibleRanges(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error(transparent)]
    Polarization(#[from] PolarizationError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Finite rectangular board; `normal` points towards the cameras.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Board {
    pub center: Point3<f64>,
    pub normal: UnitVector3<f64>,
    /// In-plane direction of the board's width.
    pub x_axis: UnitVector3<f64>,
    pub width_mm: f64,
    pub height_mm: f64,
}

impl Default for Board {
    /// 400 x 300 mm board in the world plane z = 0, facing +z.
    fn default() -> Self {
        Self {
            center: Point3::origin(),
            normal: Vector3::z_axis(),
            x_axis: Vector3::x_axis(),
            width_mm: 400.0,
            height_mm: 300.0,
        }
    }
}

impl Board {
    pub fn plane(&self) -> PlaneModel {
        PlaneModel::through_point(self.normal, &self.center)
    }

    pub fn y_axis(&self) -> UnitVector3<f64> {
        Unit::new_normalize(self.normal.cross(&self.x_axis))
    }

    /// Board point at normalized coordinates `(s, t) ∈ [-1, 1]²`.
    pub fn point(&self, s: f64, t: f64) -> Point3<f64> {
        self.center
            + self.x_axis.into_inner() * (0.5 * self.width_mm * s)
            + self.y_axis().into_inner() * (0.5 * self.height_mm * t)
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let d = p - self.center;
        d.dot(&self.x_axis).abs() <= 0.5 * self.width_mm
            && d.dot(&self.y_axis()).abs() <= 0.5 * self.height_mm
    }

    /// Fraction of a 21 x 21 grid of board points that project into the image.
    pub fn visible_fraction(&self, pose: &Pose, intrinsics: &CameraIntrinsics) -> f64 {
        const N: usize = 21;
        let mut seen = 0;
        for i in 0..N {
            for j in 0..N {
                let s = -1.0 + 2.0 * i as f64 / (N - 1) as f64;
                let t = -1.0 + 2.0 * j as f64 / (N - 1) as f64;
                let pc = pose.world_to_camera(&self.point(s, t));
                if let Some(px) = intrinsics.project(&pc) {
                    if intrinsics.contains(&px) {
                        seen += 1;
                    }
                }
            }
        }
        seen as f64 / (N * N) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DolpMode {
    Constant { rho: f64 },
    SpecularFresnel { refractive_index: f64 },
}

impl DolpMode {
    /// Phase offset between the polarization direction and the plane of incidence.
    pub fn default_shift(&self) -> f64 {
        match self {
            DolpMode::Constant { .. } => 0.0,
            DolpMode::SpecularFresnel { .. } => FRAC_PI_2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Gaussian intensity noise, as a fraction of `I_avg`.
    pub intensity_sigma: f64,
    /// Gaussian phase noise in radians, applied inside the sinusoid.
    pub aolp_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub board: Board,
    pub poses: Vec<Pose>,
    pub intrinsics: CameraIntrinsics,
    pub dolp_mode: DolpMode,
    pub aolp_shift: f64,
    pub noise: NoiseSpec,
    /// Unpolarized intensity of the board.
    pub iavg: f64,
    /// Unpolarized ambient intensity added everywhere.
    pub floor: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// Glossy board, noiseless, shift matching the DoLP mode.
    pub fn new(
        board: Board,
        poses: Vec<Pose>,
        intrinsics: CameraIntrinsics,
        dolp_mode: DolpMode,
        seed: u64,
    ) -> Self {
        Self {
            board,
            poses,
            intrinsics,
            aolp_shift: dolp_mode.default_shift(),
            dolp_mode,
            noise: NoiseSpec::default(),
            iavg: 0.4,
            floor: 0.05,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidScene(m.to_string()));
        if !(self.iavg > 0.0 && self.iavg.is_finite()) {
            return bad("iavg must be positive");
        }
        if !(self.floor >= 0.0 && self.floor.is_finite()) {
            return bad("floor must be non-negative");
        }
        if !(self.noise.intensity_sigma >= 0.0 && self.noise.aolp_sigma >= 0.0) {
            return bad("noise sigmas must be non-negative");
        }
        if !(self.board.width_mm > 0.0 && self.board.height_mm > 0.0) {
            return bad("board extent must be positive");
        }
        if self.board.normal.dot(&self.board.x_axis).abs() > 1e-9 {
            return bad("board x axis must lie in the board plane");
        }
        match self.dolp_mode {
            DolpMode::Constant { rho } if !(0.0..=1.0).contains(&rho) => bad("rho outside [0, 1]"),
            DolpMode::SpecularFresnel { refractive_index }
                if refractive_index.is_nan() || refractive_index <= 1.0 =>
            {
                bad("refractive index must exceed 1")
            }
            _ => Ok(()),
        }
    }
}

/// Specular-reflection degree of polarization for a dielectric.
/// Zero at normal incidence and one at the Brewster angle.
pub fn specular_dolp(zenith: f64, refractive_index: f64) -> f64 {
    let s2 = zenith.sin().powi(2);
    let n2 = refractive_index * refractive_index;
    let num = 2.0 * s2 * zenith.cos() * (n2 - s2).sqrt();
    let den = n2 - s2 - n2 * s2 + 2.0 * s2 * s2;
    if den <= 0.0 {
        return 1.0;
    }
    (num / den).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub frame: PolarizationFrame,
    /// Noise-free phase including the scene's shift, in `[0, π)`.
    pub gt_aolp: ScalarMap,
    /// DoLP the extraction should measure (floor included).
    pub gt_dolp: ScalarMap,
    /// Camera-frame z of the board point, millimeters.
    pub gt_depth: ScalarMap,
    pub normal_world: UnitVector3<f64>,
    pub normal_camera: UnitVector3<f64>,
    pub pose: Pose,
    pub view_index: usize,
}

/// Per-pixel geometry of the board as seen from one pose.
#[derive(Debug, Clone, Copy)]
struct Hit {
    depth: f64,
    phase: f64,
    rho: f64,
}

fn hit_at(
    spec: &SceneSpec,
    pose: &Pose,
    n_cam: &UnitVector3<f64>,
    px: &Point2<f64>,
) -> Option<Hit> {
    let v = spec.intrinsics.ray_unchecked(px);
    if n_cam.dot(&v) >= 0.0 {
        return None;
    }
    let dir_world = pose.direction_to_world(&v);
    let plane = spec.board.plane();
    let t = plane.intersect_ray(pose.center(), &dir_world)?;
    if t <= 0.0
        || !spec
            .board
            .contains(&(pose.center() + dir_world.into_inner() * t))
    {
        return None;
    }
    let phase = ppa_phase(n_cam, &v).ok()?;
    let rho = match spec.dolp_mode {
        DolpMode::Constant { rho } => rho,
        DolpMode::SpecularFresnel { refractive_index } => {
            specular_dolp(phase::viewing_angle(n_cam, &v), refractive_index)
        }
    };
    Some(Hit {
        depth: t * v.z,
        phase: angle::canonical(phase + spec.aolp_shift),
        rho: rho.clamp(0.0, 1.0),
    })
}

fn row_rng(seed: u64, view: usize, row: usize) -> ChaCha8Rng {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (view as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(row as u64);
    rng
}

/// Renders view `view` of the scene. Identical specs give bit-identical output
/// regardless of thread count: every image row draws from its own RNG stream.
pub fn render_view(spec: &SceneSpec, view: usize) -> Result<RenderedView, SynthError> {
    spec.validate()?;
    let pose = *spec.poses.get(view).ok_or(SynthError::ViewOutOfRange {
        index: view,
        count: spec.poses.len(),
    })?;
    let k = &spec.intrinsics;
    let (w, h) = (k.width() as usize, k.height() as usize);
    let n_cam = pose.transform_normal(&spec.board.normal);
    let angles = Orientation::ALL.map(|o| o.radians());
    let aolp_noise = Normal::new(0.0, spec.noise.aolp_sigma).expect("validated sigma");
    let int_noise =
        Normal::new(0.0, spec.noise.intensity_sigma * spec.iavg).expect("validated sigma");

    // per pixel: 4 intensities, aolp, dolp, depth, valid
    type Px = ([f64; 4], f64, f64, f64, bool);
    let rows: Vec<Vec<Px>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut rng = row_rng(spec.seed, view, y);
            (0..w)
                .map(|x| {
                    let px = Point2::new(x as f64, y as f64);
                    let hit = hit_at(spec, &pose, &n_cam, &px);
                    let (rho, phi) = hit.map_or((0.0, 0.0), |h| (h.rho, h.phase));
                    let phi_obs = if spec.noise.aolp_sigma > 0.0 {
                        phi + aolp_noise.sample(&mut rng)
                    } else {
                        phi
                    };
                    let intensities = angles.map(|a| {
                        let mut i =
                            spec.floor + spec.iavg * (1.0 + rho * (2.0 * (a - phi_obs)).cos());
                        if spec.noise.intensity_sigma > 0.0 {
                            i += int_noise.sample(&mut rng);
                        }
                        i.max(0.0)
                    });
                    match hit {
                        Some(h) => (
                            intensities,
                            h.phase,
                            h.rho * spec.iavg / (spec.iavg + spec.floor),
                            h.depth,
                            true,
                        ),
                        None => (intensities, 0.0, 0.0, 0.0, false),
                    }
                })
                .collect()
        })
        .collect();

    let pixels: Vec<Px> = rows.into_iter().flatten().collect();
    if !pixels.iter().any(|p| p.4) {
        return Err(SynthError::PlaneBehindCamera(view));
    }
    let channel = |c: usize| Image::from_vec(w, h, pixels.iter().map(|p| p.0[c]).collect());
    let frame = PolarizationFrame::new(channel(0)?, channel(1)?, channel(2)?, channel(3)?, *k)?;
    let mask: Vec<bool> = pixels.iter().map(|p| p.4).collect();
    let layer = |f: fn(&Px) -> f64| -> Result<ScalarMap, RasterError> {
        ScalarMap::new(
            Image::from_vec(w, h, pixels.iter().map(f).collect())?,
            mask.clone(),
        )
    };
    Ok(RenderedView {
        frame,
        gt_aolp: layer(|p| p.1)?,
        gt_dolp: layer(|p| p.2)?,
        gt_depth: layer(|p| p.3)?,
        normal_world: spec.board.normal,
        normal_camera: n_cam,
        pose,
        view_index: view,
    })
}

/// Camera whose optical axis passes through `target`, with the image x axis
/// aligned to the board's width direction and then rolled by `roll`.
pub fn look_at(
    center: Point3<f64>,
    target: Point3<f64>,
    board: &Board,
    roll: f64,
) -> Result<Pose, SynthError> {
    let z = (target - center).normalize();
    let mut x = board.x_axis.into_inner() - z * z.dot(&board.x_axis);
    if x.norm() < 1e-9 {
        x = board.y_axis().into_inner() - z * z.dot(&board.y_axis());
    }
    let x = x.normalize();
    let y = z.cross(&x);
    let base = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    let rolled = crate::camera::rotation_z(roll).matrix() * base;
    Ok(Pose::new(Rotation3::from_matrix_unchecked(rolled), center)?)
}

/// Random viewpoints over a board.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSampler {
    /// Camera-to-target distance range, millimeters.
    pub distance: (f64, f64),
    /// Maximum tilt of the viewing direction from the board normal, and
    /// maximum roll about the optical axis, radians.
    pub angular_range: f64,
    /// Look-at targets are drawn from this fraction of the board's half extents.
    pub target_spread: f64,
    /// Minimum fraction of the board that must project into the image.
    pub min_visible: f64,
    pub max_attempts: usize,
}

impl PoseSampler {
    pub fn new(distance: (f64, f64), angular_range: f64) -> Self {
        Self {
            distance,
            angular_range,
            target_spread: 0.25,
            min_visible: 0.5,
            max_attempts: 1000,
        }
    }

    fn check(&self) -> Result<(), SynthError> {
        let (lo, hi) = self.distance;
        let err = |m: String| Err(SynthError::InfeasibleRanges(m));
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return err(format!("distance range [{lo}, {hi}]"));
        }
        if !(0.0..FRAC_PI_2).contains(&self.angular_range) {
            return err(format!(
                "angular range {} outside [0, π/2)",
                self.angular_range
            ));
        }
        if !(0.0..=1.0).contains(&self.target_spread) || !(0.0..=1.0).contains(&self.min_visible) {
            return err("target spread and visibility must lie in [0, 1]".into());
        }
        Ok(())
    }

    /// Draws `n` poses deterministically from `seed`; each sees at least
    /// `min_visible` of the board.
    pub fn sample(
        &self,
        n: usize,
        board: &Board,
        intrinsics: &CameraIntrinsics,
        seed: u64,
    ) -> Result<Vec<Pose>, SynthError> {
        self.check()?;
        if n == 0 {
            return Err(SynthError::InfeasibleRanges(
                "need at least one pose".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut poses = Vec::with_capacity(n);
        let cos_max = self.angular_range.cos();
        while poses.len() < n {
            let mut accepted = None;
            for _ in 0..self.max_attempts {
                let cos_t = 1.0 - rng.random::<f64>() * (1.0 - cos_max);
                let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
                let az = rng.random::<f64>() * 2.0 * PI;
                let d = self.distance.0 + rng.random::<f64>() * (self.distance.1 - self.distance.0);
                let s = self.target_spread * (2.0 * rng.random::<f64>() - 1.0);
                let t = self.target_spread * (2.0 * rng.random::<f64>() - 1.0);
                let roll = self.angular_range * (2.0 * rng.random::<f64>() - 1.0);

                let target = board.point(s, t);
                let dir = board.x_axis.into_inner() * (sin_t * az.cos())
                    + board.y_axis().into_inner() * (sin_t * az.sin())
                    + board.normal.into_inner() * cos_t;
                let pose = look_at(target + dir * d, target, board, roll)?;
                if board.visible_fraction(&pose, intrinsics) >= self.min_visible {
                    accepted = Some(pose);
                    break;
                }
            }
            match accepted {
                Some(p) => poses.push(p),
                None => {
                    return Err(SynthError::InfeasibleRanges(format!(
                        "no pose sees {:.0}% of the board after {} attempts",
                        100.0 * self.min_visible,
                        self.max_attempts
                    )))
                }
            }
        }
        Ok(poses)
    }
}

/// Convenience wrapper around [`PoseSampler`] with default spread and visibility.
pub fn sample_poses(
    n: usize,
    distance: (f64, f64),
    angular_range: f64,
    board: &Board,
    intrinsics: &CameraIntrinsics,
    seed: u64,
) -> Result<Vec<Pose>, SynthError> {
    PoseSampler::new(distance, angular_range).sample(n, board, intrinsics, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polarization::{compute_stokes, extract_state};
    use approx::assert_abs_diff_eq;

    fn camera() -> CameraIntrinsics {
        CameraIntrinsics::from_horizontal_fov(160, 120, 86.6f64.to_radians()).unwrap()
    }

    /// Fresnel amplitude reflectances; DoLP of the reflected light is (Rs - Rp) / (Rs + Rp).
    fn fresnel_oracle(theta: f64, n: f64) -> f64 {
        let cos_i = theta.cos();
        let cos_t = (1.0 - (theta.sin() / n).powi(2)).sqrt();
        let rs = ((cos_i - n * cos_t) / (cos_i + n * cos_t)).powi(2);
        let rp = ((cos_t - n * cos_i) / (cos_t + n * cos_i)).powi(2);
        (rs - rp) / (rs + rp)
    }

    #[test]
    fn specular_dolp_values() {
        assert_eq!(specular_dolp(0.0, 1.5), 0.0);
        let brewster = 1.5f64.atan();
        assert_abs_diff_eq!(specular_dolp(brewster, 1.5), 1.0, epsilon = 1e-12);
        let v = specular_dolp(30f64.to_radians(), 1.5);
        assert!(v > 0.0 && v < 1.0);
        for deg in [5.0, 30.0, 45.0, 70.0, 85.0] {
            let t = f64::to_radians(deg);
            assert_abs_diff_eq!(
                specular_dolp(t, 1.5),
                fresnel_oracle(t, 1.5),
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                specular_dolp(t, 1.8),
                fresnel_oracle(t, 1.8),
                epsilon = 1e-12
            );
        }
    }

    fn fronto_scene() -> SceneSpec {
        let board = Board::default();
        let pose = look_at(Point3::new(0.0, 0.0, 500.0), Point3::origin(), &board, 0.0).unwrap();
        SceneSpec::new(
            board,
            vec![pose],
            camera(),
            DolpMode::Constant { rho: 0.5 },
            1,
        )
    }

    #[test]
    fn fronto_plane_masks_principal_point() {
        let k = CameraIntrinsics::new(100.0, 100.0, 80.0, 60.0, 160, 120).unwrap();
        let mut spec = fronto_scene();
        spec.intrinsics = k;
        let view = render_view(&spec, 0).unwrap();
        assert!(!view.gt_aolp.is_valid(80, 60));
        assert!(view.gt_aolp.is_valid(81, 60));
        assert_abs_diff_eq!(view.gt_depth.get(81, 60).unwrap(), 500.0, epsilon = 1e-9);
    }

    #[test]
    fn tilted_plane_pixel_phase() {
        // camera-frame normal (0, 1, -1)/√2; pixel (99, 20) has the ray (1, 0, 1)/√2
        let k = CameraIntrinsics::new(50.0, 50.0, 49.0, 20.0, 100, 40).unwrap();
        let board = Board {
            center: Point3::new(0.0, 0.0, 0.0),
            normal: Unit::new_normalize(Vector3::new(0.0, 1.0, -1.0)),
            x_axis: Vector3::x_axis(),
            width_mm: 4000.0,
            height_mm: 4000.0,
        };
        let pose = Pose::new(Rotation3::identity(), Point3::new(0.0, 0.0, -300.0)).unwrap();
        let spec = SceneSpec::new(board, vec![pose], k, DolpMode::Constant { rho: 0.5 }, 3);
        let view = render_view(&spec, 0).unwrap();
        let v = k.ray_unchecked(&Point2::new(99.0, 20.0));
        assert_abs_diff_eq!(
            v.into_inner(),
            Vector3::new(1.0, 0.0, 1.0).normalize(),
            epsilon = 1e-15
        );
        // image-plane trace of span(v, n): z × (v × n) ∝ (-1, -1, 0) = [cos φ, -sin φ] at φ = 3π/4
        let d = Vector3::z().cross(&v.cross(&board.normal));
        let phi_geometric = angle::canonical((-d.y).atan2(d.x));
        assert_abs_diff_eq!(
            phi_geometric,
            3.0 * std::f64::consts::FRAC_PI_4,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            view.gt_aolp.get(99, 20).unwrap(),
            phi_geometric,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(view.gt_depth.get(99, 20).unwrap(), 300.0, epsilon = 1e-9);

        let mut shifted = spec.clone();
        shifted.aolp_shift = FRAC_PI_2;
        let view = render_view(&shifted, 0).unwrap();
        assert_abs_diff_eq!(
            view.gt_aolp.get(99, 20).unwrap(),
            std::f64::consts::FRAC_PI_4,
            epsilon = 1e-12
        );
    }

    #[test]
    fn noiseless_round_trip_and_depth() {
        let board = Board::default();
        let sampler = PoseSampler::new((400.0, 600.0), 0.6);
        let poses = sampler.sample(3, &board, &camera(), 11).unwrap();
        let spec = SceneSpec::new(
            board,
            poses,
            camera(),
            DolpMode::SpecularFresnel {
                refractive_index: 1.5,
            },
            5,
        );
        for view in 0..3 {
            let r = render_view(&spec, view).unwrap();
            let state = extract_state(&compute_stokes(&r.frame), 0.1).unwrap();
            let mut checked = 0;
            for (x, y, gt) in r.gt_aolp.iter_valid() {
                let d = r.gt_dolp.get(x, y).unwrap();
                assert_abs_diff_eq!(state.dolp.values().get(x, y), d, epsilon = 1e-12);
                if d > 0.1 {
                    assert!(angle::distance(state.aolp.get(x, y).unwrap(), gt) < 1e-9);
                    checked += 1;
                }
                let z = r.gt_depth.get(x, y).unwrap();
                assert!(z > 0.0);
                let p = Point3::from(
                    spec.intrinsics
                        .back_project(&Point2::new(x as f64, y as f64))
                        * z,
                );
                let q = spec.intrinsics.project(&p).unwrap();
                assert!((q - Point2::new(x as f64, y as f64)).norm() < 1e-9);
                let world = r.pose.camera_to_world(&p);
                assert!(board.plane().signed_distance(&world).abs() < 1e-9);
            }
            assert!(checked > 100);
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let mut spec = fronto_scene();
        spec.noise = NoiseSpec {
            intensity_sigma: 0.01,
            aolp_sigma: 0.03,
        };
        let a = render_view(&spec, 0).unwrap();
        let b = render_view(&spec, 0).unwrap();
        assert_eq!(a, b);
        spec.seed += 1;
        let c = render_view(&spec, 0).unwrap();
        assert_ne!(a.frame, c.frame);
    }

    #[test]
    fn invisible_board_is_an_error() {
        let board = Board::default();
        let pose = look_at(
            Point3::new(0.0, 0.0, 500.0),
            Point3::new(0.0, 0.0, 1000.0),
            &board,
            0.0,
        )
        .unwrap();
        let spec = SceneSpec::new(
            board,
            vec![pose],
            camera(),
            DolpMode::Constant { rho: 0.5 },
            1,
        );
        assert!(matches!(
            render_view(&spec, 0),
            Err(SynthError::PlaneBehindCamera(0))
        ));
        assert!(matches!(
            render_view(&spec, 1),
            Err(SynthError::ViewOutOfRange { .. })
        ));
    }

    #[test]
    fn pose_sampling() {
        let board = Board::default();
        let k = camera();
        let fronto = PoseSampler {
            target_spread: 0.0,
            ..PoseSampler::new((500.0, 500.0), 0.0)
        };
        let p = fronto.sample(1, &board, &k, 3).unwrap();
        assert_abs_diff_eq!(
            p[0].center().coords,
            Vector3::new(0.0, 0.0, 500.0),
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            p[0].transform_normal(&board.normal).into_inner(),
            -Vector3::z(),
            epsilon = 1e-12
        );

        let a = sample_poses(282, (400.0, 700.0), 0.7, &board, &k, 7).unwrap();
        let b = sample_poses(282, (400.0, 700.0), 0.7, &board, &k, 7).unwrap();
        assert_eq!(a.len(), 282);
        assert_eq!(a, b);
        assert!(a.iter().all(|p| board.visible_fraction(p, &k) >= 0.5));

        assert!(matches!(
            sample_poses(1, (600.0, 500.0), 0.1, &board, &k, 0),
            Err(SynthError::InfeasibleRanges(_))
        ));
        // far too close to ever see half the board
        let close = PoseSampler {
            max_attempts: 20,
            ..PoseSampler::new((10.0, 20.0), 0.1)
        };
        assert!(matches!(
            close.sample(1, &board, &k, 0),
            Err(SynthError::InfeasibleRanges(_))
        ));
    }
}
