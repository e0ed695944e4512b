//! Least-squares normal estimation from stacked phase-angle constraints.
//!
//! Rows are scaled to unit length and accumulated into `MᵀM`; the normal is
//! the eigenvector of the smallest eigenvalue. Its sign is chosen so the
//! surface faces the camera (`n·v < 0` for the reference ray).

use crate::camera::{CameraIntrinsics, GeometryError, Pose};
use crate::eigen::symmetric_eigen3;
use crate::phase::{self, ConstraintRow, ModelKind, PhaseError};
use crate::raster::ScalarMap;
use nalgebra::{Matrix3, Point2, Unit, UnitVector3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_CONDITION_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("need at least 2 constraint rows, got {0}")]
    EmptySystem(usize),
    #[error("constraint system is ill-conditioned: λ2/λ3 = {ratio:e}, gap (λ2-λ1)/λ3 = {gap:e}")]
    IllConditioned { ratio: f64, gap: f64 },
    #[error("no requested pixel has a valid phase angle")]
    NoValidPixels,
    #[error("need at least 2 views, got {0}")]
    TooFewViews(usize),
    #[error("constraint row is not finite")]
    NonFiniteRow,
    #[error(transparent)]
    Phase(#[from] PhaseError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Camera,
    World,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Minimum λ2/λ3 and minimum (λ2-λ1)/λ3.
    pub condition_threshold: f64,
    /// One pass of 3×MAD residual trimming before the final solve.
    pub trim_outliers: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            condition_threshold: DEFAULT_CONDITION_THRESHOLD,
            trim_outliers: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    pub rows: Vec<ConstraintRow>,
    pub frame: Frame,
}

impl ConstraintSystem {
    pub fn new(rows: Vec<ConstraintRow>, frame: Frame) -> Self {
        Self { rows, frame }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalEstimate {
    pub normal: UnitVector3<f64>,
    /// Eigenvalues of the normalized `MᵀM`, ascending.
    pub eigenvalues: [f64; 3],
    /// λ2/λ3.
    pub condition_ratio: f64,
    pub inlier_count: usize,
}

/// Running `Σ m̂ m̂ᵀ` over unit-normalized rows; O(1) memory in the row count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramAccumulator {
    gram: Matrix3<f64>,
    count: usize,
}

impl Default for GramAccumulator {
    fn default() -> Self {
        Self {
            gram: Matrix3::zeros(),
            count: 0,
        }
    }
}

impl GramAccumulator {
    pub fn add(&mut self, m: &Vector3<f64>) -> Result<(), EstimationError> {
        let norm = m.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(EstimationError::NonFiniteRow);
        }
        let u = m / norm;
        self.gram += u * u.transpose();
        self.count += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &GramAccumulator) {
        self.gram += other.gram;
        self.count += other.count;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn gram(&self) -> &Matrix3<f64> {
        &self.gram
    }

    /// Smallest-eigenvalue direction, oriented against `reference_ray`.
    pub fn solve(
        &self,
        reference_ray: &UnitVector3<f64>,
        options: &SolveOptions,
    ) -> Result<NormalEstimate, EstimationError> {
        if self.count < 2 {
            return Err(EstimationError::EmptySystem(self.count));
        }
        let eig = symmetric_eigen3(&self.gram);
        let [l1, l2, l3] = eig.values.map(|l| l.max(0.0));
        let ratio = if l3 > 0.0 { l2 / l3 } else { 0.0 };
        let gap = if l3 > 0.0 { (l2 - l1) / l3 } else { 0.0 };
        if ratio < options.condition_threshold || gap < options.condition_threshold {
            return Err(EstimationError::IllConditioned { ratio, gap });
        }
        let mut n = eig.vector(0);
        if n.dot(reference_ray) > 0.0 {
            n = -n;
        }
        Ok(NormalEstimate {
            normal: Unit::new_normalize(n),
            eigenvalues: [l1, l2, l3],
            condition_ratio: ratio,
            inlier_count: self.count,
        })
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn accumulate<'a>(
    rows: impl Iterator<Item = &'a ConstraintRow>,
) -> Result<GramAccumulator, EstimationError> {
    let mut acc = GramAccumulator::default();
    for row in rows {
        acc.add(&row.m)?;
    }
    Ok(acc)
}

/// Solves `M n = 0` in the least-squares sense.
pub fn solve_normal(
    system: &ConstraintSystem,
    reference_ray: &UnitVector3<f64>,
    options: &SolveOptions,
) -> Result<NormalEstimate, EstimationError> {
    if system.rows.len() < 2 {
        return Err(EstimationError::EmptySystem(system.rows.len()));
    }
    let estimate = accumulate(system.rows.iter())?.solve(reference_ray, options)?;
    if !options.trim_outliers {
        return Ok(estimate);
    }

    let n = estimate.normal.into_inner();
    let residuals: Vec<f64> = system
        .rows
        .iter()
        .map(|r| (r.m.dot(&n) / r.m.norm()).abs())
        .collect();
    let med = median(&mut residuals.clone());
    let mut deviations: Vec<f64> = residuals.iter().map(|r| (r - med).abs()).collect();
    let mad = median(&mut deviations);
    let kept = system
        .rows
        .iter()
        .zip(&residuals)
        .filter(|(_, &r)| (r - med).abs() <= 3.0 * mad)
        .map(|(row, _)| row);
    let trimmed = accumulate(kept)?;
    if trimmed.count() < 2 {
        return Ok(estimate);
    }
    trimmed.solve(reference_ray, options)
}

/// Phase at a pixel: exact lookup at integer positions, mod-π bilinear otherwise.
pub fn sample_phase(aolp: &ScalarMap, pixel: &Point2<f64>) -> Option<f64> {
    if pixel.x.fract() == 0.0 && pixel.y.fract() == 0.0 && pixel.x >= 0.0 && pixel.y >= 0.0 {
        let (x, y) = (pixel.x as usize, pixel.y as usize);
        if x < aolp.width() && y < aolp.height() {
            return aolp.get(x, y);
        }
        return None;
    }
    aolp.sample_angle(pixel)
}

/// One camera-frame row per valid requested pixel.
pub fn build_single_view_system(
    aolp: &ScalarMap,
    pixels: &[Point2<f64>],
    intrinsics: &CameraIntrinsics,
    model: ModelKind,
) -> Result<ConstraintSystem, EstimationError> {
    let mut rows = Vec::with_capacity(pixels.len());
    for px in pixels {
        let Some(phi) = sample_phase(aolp, px) else {
            continue;
        };
        let v = intrinsics.pixel_to_ray(px)?;
        rows.push(phase::constraint_row(model, phi, &v)?.with_provenance(0, *px));
    }
    if rows.is_empty() {
        return Err(EstimationError::NoValidPixels);
    }
    Ok(ConstraintSystem::new(rows, Frame::Camera))
}

/// A phase measurement of one surface point in one posed view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub phase: f64,
    pub pixel: Point2<f64>,
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
}

impl Observation {
    /// Viewing ray of the observation expressed in the world frame.
    pub fn world_ray(&self) -> Result<UnitVector3<f64>, GeometryError> {
        let v = self.intrinsics.pixel_to_ray(&self.pixel)?;
        Ok(self.pose.direction_to_world(&v))
    }
}

/// World-frame rows `m_kᵀ R_k`, one per view.
pub fn build_multi_view_system(
    observations: &[Observation],
    model: ModelKind,
) -> Result<ConstraintSystem, EstimationError> {
    if observations.len() < 2 {
        return Err(EstimationError::TooFewViews(observations.len()));
    }
    let rows = observations
        .iter()
        .enumerate()
        .map(|(k, obs)| {
            let v = obs.intrinsics.pixel_to_ray(&obs.pixel)?;
            let row = phase::constraint_row(model, obs.phase, &v)?;
            let m_world = obs.pose.rotation().matrix().transpose() * row.m;
            Ok(ConstraintRow {
                m: m_world,
                ..row.with_provenance(k, obs.pixel)
            })
        })
        .collect::<Result<Vec<_>, EstimationError>>()?;
    Ok(ConstraintSystem::new(rows, Frame::World))
}

/// Builds and solves the multi-view system, orienting the normal towards the first view.
pub fn estimate_multi_view(
    observations: &[Observation],
    model: ModelKind,
    options: &SolveOptions,
) -> Result<NormalEstimate, EstimationError> {
    let system = build_multi_view_system(observations, model)?;
    let reference = observations[0].world_ray()?;
    solve_normal(&system, &reference, options)
}

/// Normal of a planar region from a single phase map. `region` selects
/// pixels (row-major, same size as the map); masked phases are skipped.
/// The mean viewing ray of the used pixels fixes the sign.
pub fn estimate_plane_normal_map(
    aolp: &ScalarMap,
    region: &[bool],
    intrinsics: &CameraIntrinsics,
    model: ModelKind,
    options: &SolveOptions,
) -> Result<NormalEstimate, EstimationError> {
    let w = aolp.width();
    let selected = aolp
        .iter_valid()
        .filter(|&(x, y, _)| region.get(y * w + x).copied().unwrap_or(false));

    if options.trim_outliers {
        let mut rows = Vec::new();
        let mut ray_sum = Vector3::zeros();
        for (x, y, phi) in selected {
            let px = Point2::new(x as f64, y as f64);
            let v = intrinsics.pixel_to_ray(&px)?;
            ray_sum += v.into_inner();
            rows.push(phase::constraint_row(model, phi, &v)?.with_provenance(0, px));
        }
        if rows.is_empty() {
            return Err(EstimationError::EmptySystem(0));
        }
        let reference = Unit::new_normalize(ray_sum);
        return solve_normal(
            &ConstraintSystem::new(rows, Frame::Camera),
            &reference,
            options,
        );
    }

    let mut acc = GramAccumulator::default();
    let mut ray_sum = Vector3::zeros();
    for (x, y, phi) in selected {
        let px = Point2::new(x as f64, y as f64);
        let v = intrinsics.pixel_to_ray(&px)?;
        ray_sum += v.into_inner();
        acc.add(&phase::constraint_row(model, phi, &v)?.m)?;
    }
    if acc.count() < 2 {
        return Err(EstimationError::EmptySystem(acc.count()));
    }
    acc.solve(&Unit::new_normalize(ray_sum), options)
}

/// Angle between two directions, accurate near zero.
pub fn angular_error(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::rotation_x;
    use crate::phase::{opa_constraint_row, ppa_phase};
    use crate::raster::Image;
    use approx::assert_abs_diff_eq;
    use nalgebra::Point3;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    fn unit(x: f64, y: f64, z: f64) -> UnitVector3<f64> {
        Unit::new_normalize(Vector3::new(x, y, z))
    }

    #[test]
    fn single_view_three_rays() {
        let n = unit(0.0, 0.0, -1.0);
        let rays = [
            unit(0.1, 0.0, 1.0),
            unit(0.0, 0.1, 1.0),
            unit(-0.1, 0.1, 1.0),
        ];
        let rows: Vec<ConstraintRow> = rays
            .iter()
            .map(|v| phase::ppa_constraint_row(ppa_phase(&n, v).unwrap(), v).unwrap())
            .collect();
        // the forward model fixes the rows independently of the solver
        assert_abs_diff_eq!(rows[0].m, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(rows[1].m, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(
            rows[2].m,
            Vector3::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0),
            epsilon = 1e-12
        );
        let system = ConstraintSystem::new(rows, Frame::Camera);
        let est = solve_normal(&system, &rays[0], &SolveOptions::default()).unwrap();
        assert_abs_diff_eq!(est.normal.into_inner(), -Vector3::z(), epsilon = 1e-12);
        assert_eq!(est.inlier_count, 3);
        assert!(est.eigenvalues[0] < 1e-15);
    }

    #[test]
    fn duplicate_rows_are_ill_conditioned() {
        let rows = vec![opa_constraint_row(0.0), opa_constraint_row(0.0)];
        let err = solve_normal(
            &ConstraintSystem::new(rows, Frame::Camera),
            &Vector3::z_axis(),
            &SolveOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, EstimationError::IllConditioned { .. }));
    }

    #[test]
    fn empty_and_tied_systems() {
        let one = ConstraintSystem::new(vec![opa_constraint_row(0.0)], Frame::Camera);
        assert_eq!(
            solve_normal(&one, &Vector3::z_axis(), &SolveOptions::default()),
            Err(EstimationError::EmptySystem(1))
        );
        // three orthogonal rows: λ1 = λ2, no distinguished null direction
        let rows = [Vector3::x(), Vector3::y(), Vector3::z()]
            .map(|m| ConstraintRow::new(m, ModelKind::Ppa))
            .to_vec();
        let err = solve_normal(
            &ConstraintSystem::new(rows, Frame::Camera),
            &Vector3::z_axis(),
            &SolveOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, EstimationError::IllConditioned { .. }));
    }

    #[test]
    fn multi_view_hand_stacked() {
        let k = CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap();
        let center = Point2::new(50.0, 50.0);
        let n_world = unit(1.0, 0.0, -1.0);
        let pose_a = Pose::identity();
        let pose_b = Pose::new(rotation_x(FRAC_PI_2), Point3::origin()).unwrap();
        let z = Vector3::z_axis();

        let phi_a = ppa_phase(&pose_a.transform_normal(&n_world), &z).unwrap();
        let phi_b = ppa_phase(&pose_b.transform_normal(&n_world), &z).unwrap();
        assert_abs_diff_eq!(phi_b, 3.0 * std::f64::consts::FRAC_PI_4, epsilon = 1e-12);

        let obs = [
            Observation {
                phase: phi_a,
                pixel: center,
                intrinsics: k,
                pose: pose_a,
            },
            Observation {
                phase: phi_b,
                pixel: center,
                intrinsics: k,
                pose: pose_b,
            },
        ];
        let system = build_multi_view_system(&obs, ModelKind::Ppa).unwrap();
        assert_eq!(system.frame, Frame::World);
        assert_abs_diff_eq!(
            system.rows[0].m,
            Vector3::new(0.0, 1.0, 0.0),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            system.rows[1].m,
            Vector3::new(FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2),
            epsilon = 1e-12
        );
        let est = estimate_multi_view(&obs, ModelKind::Ppa, &SolveOptions::default()).unwrap();
        assert_abs_diff_eq!(
            est.normal.into_inner(),
            n_world.into_inner(),
            epsilon = 1e-12
        );

        assert_eq!(
            build_multi_view_system(&obs[..1], ModelKind::Ppa),
            Err(EstimationError::TooFewViews(1))
        );
        let dup = [obs[0], obs[0]];
        let err = estimate_multi_view(&dup, ModelKind::Ppa, &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, EstimationError::IllConditioned { .. }));
    }

    #[test]
    fn single_view_builder_counts_and_masks() {
        let k = CameraIntrinsics::new(100.0, 100.0, 2.0, 2.0, 4, 4).unwrap();
        let mut mask = vec![true; 16];
        mask[5] = false;
        let aolp = ScalarMap::new(Image::filled(4, 4, 0.3), mask).unwrap();
        let pixels = [
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 3.0),
            Point2::new(3.0, 1.0),
        ];
        let sys = build_single_view_system(&aolp, &pixels, &k, ModelKind::Ppa).unwrap();
        assert_eq!(sys.len(), 3);
        assert_eq!(sys.rows[1].pixel, Some(pixels[1]));
        let masked = [Point2::new(1.0, 1.0)];
        assert_eq!(
            build_single_view_system(&aolp, &masked, &k, ModelKind::Ppa),
            Err(EstimationError::NoValidPixels)
        );
    }

    #[test]
    fn tiny_region_fails() {
        let k = CameraIntrinsics::new(100.0, 100.0, 2.0, 2.0, 4, 4).unwrap();
        let aolp = ScalarMap::dense(Image::filled(4, 4, 0.3));
        let mut region = vec![false; 16];
        region[6] = true;
        let err =
            estimate_plane_normal_map(&aolp, &region, &k, ModelKind::Ppa, &SolveOptions::default());
        assert_eq!(err, Err(EstimationError::EmptySystem(1)));
    }

    #[test]
    fn trimming_rejects_gross_outliers() {
        let n = unit(0.2, -0.3, -1.0);
        let mut rows = Vec::new();
        for i in 0..40 {
            let a = i as f64 * 0.15;
            let v = unit(0.4 * a.cos(), 0.3 * a.sin(), 1.0);
            let phi = ppa_phase(&n, &v).unwrap();
            // every fifth row is corrupted by a large phase error
            let phi = if i % 5 == 0 { phi + 0.8 } else { phi };
            rows.push(phase::ppa_constraint_row(phi, &v).unwrap());
        }
        let system = ConstraintSystem::new(rows, Frame::Camera);
        let z = Vector3::z_axis();
        let plain = solve_normal(&system, &z, &SolveOptions::default()).unwrap();
        let opts = SolveOptions {
            trim_outliers: true,
            ..Default::default()
        };
        let trimmed = solve_normal(&system, &z, &opts).unwrap();
        let e_plain = angular_error(&plain.normal, &n);
        let e_trim = angular_error(&trimmed.normal, &n);
        assert!(trimmed.inlier_count < 40);
        assert!(e_trim < e_plain, "{e_trim} vs {e_plain}");
    }

    #[test]
    fn angular_error_is_accurate_near_zero() {
        let a = Vector3::new(1.0, 0.0, 0.0);
        let b = Vector3::new(1.0, 1e-10, 0.0);
        assert!((angular_error(&a, &b) - 1e-10).abs() < 1e-20);
    }
}
