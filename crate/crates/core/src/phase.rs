//! Phase-angle models relating surface normals to measured AoLP.
//!
//! * OPA (orthographic): the phase angle is the image-plane azimuth of the
//!   normal, `φ_o = -atan2(n_y, n_x)`, constraining `[sin φ, cos φ, 0]·n = 0`.
//! * PPA (perspective): the phase angle is the direction of the line where the
//!   plane of incidence `span(v, n)` cuts the image plane,
//!   `z × (v × n) ∥ d = [cos φ_p, -sin φ_p, 0]`, giving
//!   `φ_p = -atan2(-v_z n_y + v_y n_z, -v_z n_x + v_x n_z)` and the constraint
//!   `[sin φ, cos φ, -(v_y cos φ + v_x sin φ) / v_z]·n = 0`.
//!
//! All phases are reported in `[0, π)`. The `*_directed` variants keep the full
//! `(-π, π]` direction, which is what [`normal_from_angles`] consumes.

use crate::angle;
use crate::camera::rotation_exp;
use nalgebra::{Point2, Unit, UnitVector3, Vector3};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Below this, `‖v × n‖` or `‖d × v‖` is treated as zero.
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;
/// Tolerance used when testing the model-equivalence conditions.
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseError {
    #[error("normal is parallel to the optical axis; the orthographic phase is undefined")]
    DegenerateNormal,
    #[error("viewing ray is parallel to the normal; the plane of incidence is undefined")]
    DegenerateRayNormal,
    #[error("viewing ray has v_z = {0} <= 0")]
    RayBehindCamera(f64),
    #[error("rotation axis is undefined: image-plane direction is parallel to the ray")]
    DegenerateAxis,
    #[error("angle {0} outside [0, π/2)")]
    InvalidZenith(f64),
    #[error("unknown model {0:?}, expected \"opa\" or \"ppa\"")]
    UnknownModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Opa,
    Ppa,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Opa, ModelKind::Ppa];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Opa => "opa",
            ModelKind::Ppa => "ppa",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = PhaseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "opa" => Ok(ModelKind::Opa),
            "ppa" => Ok(ModelKind::Ppa),
            _ => Err(PhaseError::UnknownModel(s.to_string())),
        }
    }
}

/// One linear constraint `m·n = 0` with its provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintRow {
    pub m: Vector3<f64>,
    pub model: ModelKind,
    pub view_index: usize,
    pub pixel: Option<Point2<f64>>,
}

impl ConstraintRow {
    pub fn new(m: Vector3<f64>, model: ModelKind) -> Self {
        Self {
            m,
            model,
            view_index: 0,
            pixel: None,
        }
    }

    pub fn with_provenance(mut self, view_index: usize, pixel: Point2<f64>) -> Self {
        self.view_index = view_index;
        self.pixel = Some(pixel);
        self
    }

    /// Residual `m·n`.
    pub fn residual(&self, n: &Vector3<f64>) -> f64 {
        self.m.dot(n)
    }
}

/// `-atan2(n_y, n_x)` in `(-π, π]`.
pub fn opa_phase_directed(n: &UnitVector3<f64>) -> Result<f64, PhaseError> {
    if n.x.hypot(n.y) < DEGENERACY_TOLERANCE {
        return Err(PhaseError::DegenerateNormal);
    }
    Ok(-n.y.atan2(n.x))
}

/// Orthographic phase angle in `[0, π)`.
pub fn opa_phase(n: &UnitVector3<f64>) -> Result<f64, PhaseError> {
    opa_phase_directed(n).map(angle::canonical)
}

/// `-atan2(-v_z n_y + v_y n_z, -v_z n_x + v_x n_z)` in `(-π, π]`.
pub fn ppa_phase_directed(n: &UnitVector3<f64>, v: &UnitVector3<f64>) -> Result<f64, PhaseError> {
    if v.cross(n).norm() < DEGENERACY_TOLERANCE {
        return Err(PhaseError::DegenerateRayNormal);
    }
    let a = -v.z * n.x + v.x * n.z;
    let b = -v.z * n.y + v.y * n.z;
    // zero only if the plane of incidence is the image plane, impossible for v_z > 0
    if a.hypot(b) < DEGENERACY_TOLERANCE {
        return Err(PhaseError::DegenerateRayNormal);
    }
    Ok(-b.atan2(a))
}

/// Perspective phase angle in `[0, π)`.
pub fn ppa_phase(n: &UnitVector3<f64>, v: &UnitVector3<f64>) -> Result<f64, PhaseError> {
    ppa_phase_directed(n, v).map(angle::canonical)
}

/// Phase predicted by `model` for normal `n` seen along `v` (both camera frame).
pub fn predict_phase(
    model: ModelKind,
    n: &UnitVector3<f64>,
    v: &UnitVector3<f64>,
) -> Result<f64, PhaseError> {
    match model {
        ModelKind::Opa => opa_phase(n),
        ModelKind::Ppa => ppa_phase(n, v),
    }
}

pub fn opa_coefficients(phi: f64) -> Vector3<f64> {
    let (s, c) = phi.sin_cos();
    Vector3::new(s, c, 0.0)
}

pub fn ppa_coefficients(phi: f64, v: &UnitVector3<f64>) -> Result<Vector3<f64>, PhaseError> {
    if v.z <= 0.0 {
        return Err(PhaseError::RayBehindCamera(v.z));
    }
    let (s, c) = phi.sin_cos();
    Ok(Vector3::new(s, c, -(v.y * c + v.x * s) / v.z))
}

/// `[sin φ, cos φ, 0]`.
pub fn opa_constraint_row(phi: f64) -> ConstraintRow {
    ConstraintRow::new(opa_coefficients(phi), ModelKind::Opa)
}

/// `[sin φ, cos φ, -(v_y cos φ + v_x sin φ) / v_z]`.
pub fn ppa_constraint_row(phi: f64, v: &UnitVector3<f64>) -> Result<ConstraintRow, PhaseError> {
    Ok(ConstraintRow::new(
        ppa_coefficients(phi, v)?,
        ModelKind::Ppa,
    ))
}

pub fn constraint_row(
    model: ModelKind,
    phi: f64,
    v: &UnitVector3<f64>,
) -> Result<ConstraintRow, PhaseError> {
    match model {
        ModelKind::Opa => Ok(opa_constraint_row(phi)),
        ModelKind::Ppa => ppa_constraint_row(phi, v),
    }
}

/// Rotation axis of the normal parameterization `n = -exp(θ a^) v`.
fn parameterization_axis(
    model: ModelKind,
    phi: f64,
    v: &UnitVector3<f64>,
) -> Result<UnitVector3<f64>, PhaseError> {
    let (s, c) = phi.sin_cos();
    match model {
        ModelKind::Opa => Ok(Unit::new_unchecked(Vector3::new(-s, -c, 0.0))),
        ModelKind::Ppa => {
            let d = Vector3::new(c, -s, 0.0);
            let axis = v.cross(&d);
            let norm = axis.norm();
            if norm < DEGENERACY_TOLERANCE {
                return Err(PhaseError::DegenerateAxis);
            }
            Ok(Unit::new_unchecked(axis / norm))
        }
    }
}

/// Normal obtained by rotating `-v` by `theta` about the model's axis.
///
/// `phi` is the directed phase (as from [`ppa_phase_directed`] or
/// [`opa_phase_directed`]); `theta` is the viewing angle between `-v` and `n`.
/// The axes are oriented so that
/// `normal_from_angles(Ppa, ppa_phase_directed(n, v), angle(-v, n), v) == n`,
/// and for `v = z` the OPA branch gives
/// `[cos φ sin θ, -sin φ sin θ, -cos θ]`. A phase folded into `[0, π)` may
/// select the mirror-image normal on the other side of `-v`.
pub fn normal_from_angles(
    model: ModelKind,
    phi: f64,
    theta: f64,
    v: &UnitVector3<f64>,
) -> Result<UnitVector3<f64>, PhaseError> {
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&theta) {
        return Err(PhaseError::InvalidZenith(theta));
    }
    let axis = parameterization_axis(model, phi, v)?;
    let n = rotation_exp(&axis, theta) * (-v.into_inner());
    Ok(Unit::new_normalize(n))
}

/// Angle between `-v` and `n`.
pub fn viewing_angle(n: &UnitVector3<f64>, v: &UnitVector3<f64>) -> f64 {
    (-v.dot(n)).clamp(-1.0, 1.0).acos()
}

/// Conditions under which OPA and PPA coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EquivalenceCase {
    /// `v = [0, 0, 1]`: the ray is the optical axis (orthographic limit).
    RayOnAxis = 1,
    /// `[v_x, v_y] ∥ [n_x, n_y]`: plane of incidence perpendicular to the image plane.
    IncidencePlaneUpright = 2,
    /// `n_z → 1`: normal along the optical axis.
    NormalOnAxis = 3,
    /// `n_z = 0`: normal parallel to the image plane.
    NormalInImagePlane = 4,
}

impl EquivalenceCase {
    pub fn number(self) -> u8 {
        self as u8
    }
}

/// Which equivalence conditions hold for `(n, v)`, within [`EQUIVALENCE_TOLERANCE`].
pub fn classify_equivalence(n: &UnitVector3<f64>, v: &UnitVector3<f64>) -> Vec<EquivalenceCase> {
    let tol = EQUIVALENCE_TOLERANCE;
    let mut cases = Vec::new();
    if (v.into_inner() - Vector3::z()).norm() < tol {
        cases.push(EquivalenceCase::RayOnAxis);
    }
    let v_xy = v.x.hypot(v.y);
    let n_xy = n.x.hypot(n.y);
    if v_xy > tol && n_xy > tol && (v.x * n.y - v.y * n.x).abs() < tol * v_xy * n_xy {
        cases.push(EquivalenceCase::IncidencePlaneUpright);
    }
    if n.z > 1.0 - tol {
        cases.push(EquivalenceCase::NormalOnAxis);
    }
    if n.z.abs() < tol {
        cases.push(EquivalenceCase::NormalInImagePlane);
    }
    cases
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI};

    fn unit(x: f64, y: f64, z: f64) -> UnitVector3<f64> {
        Unit::new_normalize(Vector3::new(x, y, z))
    }

    #[test]
    fn opa_phase_examples() {
        assert_eq!(opa_phase(&unit(1.0, 0.0, 0.0)).unwrap(), 0.0);
        assert_abs_diff_eq!(
            opa_phase(&unit(0.0, 1.0, 0.0)).unwrap(),
            FRAC_PI_2,
            epsilon = 1e-15
        );
        assert_eq!(
            opa_phase(&unit(0.0, 0.0, 1.0)),
            Err(PhaseError::DegenerateNormal)
        );
    }

    #[test]
    fn ppa_phase_examples() {
        let n = unit(1.0, 0.0, 1.0);
        let p = ppa_phase(&n, &Vector3::z_axis()).unwrap();
        assert!(angle::distance(p, 0.0) < 1e-15);
        assert!(angle::distance(p, opa_phase(&n).unwrap()) < 1e-15);

        let v = unit(1.0, 0.0, 1.0);
        let n = unit(0.0, 1.0, 1.0);
        assert_abs_diff_eq!(ppa_phase(&n, &v).unwrap(), FRAC_PI_4, epsilon = 1e-15);
        assert_abs_diff_eq!(opa_phase(&n).unwrap(), FRAC_PI_2, epsilon = 1e-15);

        let z = Vector3::z_axis();
        assert_eq!(ppa_phase(&z, &z), Err(PhaseError::DegenerateRayNormal));
    }

    #[test]
    fn constraint_row_examples() {
        assert_abs_diff_eq!(opa_constraint_row(0.0).m, Vector3::new(0.0, 1.0, 0.0));
        assert_abs_diff_eq!(
            opa_constraint_row(FRAC_PI_2).m,
            Vector3::new(1.0, 0.0, 0.0),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            opa_constraint_row(FRAC_PI_4).m,
            Vector3::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0),
            epsilon = 1e-15
        );

        let v = unit(1.0, 0.0, 1.0);
        let row = ppa_constraint_row(FRAC_PI_4, &v).unwrap();
        assert_abs_diff_eq!(
            row.m,
            Vector3::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(row.residual(&unit(0.0, 1.0, 1.0)), 0.0, epsilon = 1e-15);

        for phi in [0.3, 1.1, 2.9] {
            let row = ppa_constraint_row(phi, &Vector3::z_axis()).unwrap();
            assert_abs_diff_eq!(row.m, opa_constraint_row(phi).m, epsilon = 1e-15);
        }

        let row = ppa_constraint_row(0.0, &unit(0.0, 1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(row.m, Vector3::new(0.0, 1.0, -1.0), epsilon = 1e-15);

        let behind = Unit::new_normalize(Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(
            ppa_constraint_row(0.0, &behind),
            Err(PhaseError::RayBehindCamera(0.0))
        );
    }

    #[test]
    fn normal_from_angles_examples() {
        let z = Vector3::z_axis();
        for model in ModelKind::ALL {
            let n = normal_from_angles(model, 0.7, 0.0, &z).unwrap();
            assert_abs_diff_eq!(n.into_inner(), -Vector3::z(), epsilon = 1e-15);
        }
        // OPA at v = z: the xy part follows the azimuth parameterization, n faces the camera.
        for phi in [0.0, 0.4, 2.0, -1.3] {
            let theta = FRAC_PI_4;
            let n = normal_from_angles(ModelKind::Opa, phi, theta, &z).unwrap();
            let expect = Vector3::new(
                phi.cos() * theta.sin(),
                -phi.sin() * theta.sin(),
                -theta.cos(),
            );
            assert_abs_diff_eq!(n.into_inner(), expect, epsilon = 1e-15);
            assert!(angle::distance(opa_phase(&n).unwrap(), phi) < 1e-12);
        }
        let n = normal_from_angles(ModelKind::Opa, 0.0, FRAC_PI_4, &z).unwrap();
        assert_abs_diff_eq!(
            n.into_inner(),
            Vector3::new(FRAC_1_SQRT_2, 0.0, -FRAC_1_SQRT_2),
            epsilon = 1e-15
        );
        assert_eq!(
            normal_from_angles(ModelKind::Ppa, 0.0, FRAC_PI_2, &z),
            Err(PhaseError::InvalidZenith(FRAC_PI_2))
        );
    }

    #[test]
    fn parameterization_axis_degenerates_for_grazing_rays() {
        // d = [1, 0, 0] parallel to a ray in the image plane
        let v = Vector3::x_axis();
        assert_eq!(
            normal_from_angles(ModelKind::Ppa, 0.0, 0.1, &v),
            Err(PhaseError::DegenerateAxis)
        );
    }

    #[test]
    fn equivalence_examples() {
        let z = Vector3::z_axis();
        assert!(
            classify_equivalence(&unit(0.2, -0.4, -1.0), &z).contains(&EquivalenceCase::RayOnAxis)
        );
        let cases = classify_equivalence(&unit(1.0, 0.0, -1.0), &unit(1.0, 0.0, 1.0));
        assert!(cases.contains(&EquivalenceCase::IncidencePlaneUpright));
        let cases = classify_equivalence(&unit(1.0, 0.0, 0.0), &unit(0.3, 0.2, 1.0));
        assert!(cases.contains(&EquivalenceCase::NormalInImagePlane));
        assert!(
            classify_equivalence(&z, &unit(0.3, 0.2, 1.0)).contains(&EquivalenceCase::NormalOnAxis)
        );
        assert!(classify_equivalence(&unit(0.3, -0.5, -1.0), &unit(0.2, 0.4, 1.0)).is_empty());
    }

    #[test]
    fn normal_on_axis_rows_converge_to_orthographic_form() {
        // As n approaches the optical axis, the PPA row built from the PPA phase
        // loses its third coefficient and the OPA constraint at that phase holds.
        let v = unit(0.4, -0.3, 1.0);
        for eps in [1e-3, 1e-5, 1e-7] {
            let n = unit(eps * 0.8, eps * 0.6, 1.0);
            let phi = ppa_phase(&n, &v).unwrap();
            let row = ppa_constraint_row(phi, &v).unwrap();
            assert!(row.m.z.abs() < 2.0 * eps);
            assert!(opa_constraint_row(phi).residual(&n).abs() < 2.0 * eps);
        }
    }

    fn ray_strategy() -> impl Strategy<Value = UnitVector3<f64>> {
        (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(x, y)| unit(x, y, 1.0))
    }

    fn normal_strategy() -> impl Strategy<Value = UnitVector3<f64>> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("non-zero", |(x, y, z)| x * x + y * y + z * z > 1e-4)
            .prop_map(|(x, y, z)| unit(x, y, z))
    }

    proptest! {
        #[test]
        fn ppa_constraint_is_exact(n in normal_strategy(), v in ray_strategy()) {
            prop_assume!(v.cross(&n).norm() > 1e-6);
            let phi = ppa_phase(&n, &v).unwrap();
            prop_assert!((0.0..PI).contains(&phi));
            let row = ppa_constraint_row(phi, &v).unwrap();
            prop_assert!(row.residual(&n).abs() < 1e-12);
        }

        #[test]
        fn opa_constraint_is_exact(n in normal_strategy()) {
            prop_assume!(n.x.hypot(n.y) > 1e-6);
            let phi = opa_phase(&n).unwrap();
            prop_assert!(opa_constraint_row(phi).residual(&n).abs() < 1e-12);
        }

        #[test]
        fn phases_are_pi_periodic(n in normal_strategy(), v in ray_strategy()) {
            prop_assume!(v.cross(&n).norm() > 1e-6 && n.x.hypot(n.y) > 1e-6);
            let flipped = -n;
            prop_assert!(angle::distance(ppa_phase(&n, &v).unwrap(), ppa_phase(&flipped, &v).unwrap()) < 1e-12);
            prop_assert!(angle::distance(opa_phase(&n).unwrap(), opa_phase(&flipped).unwrap()) < 1e-12);
        }

        #[test]
        fn ppa_parameterization_round_trip(n in normal_strategy(), v in ray_strategy()) {
            let n = if n.dot(&v) > 0.0 { -n } else { n };
            prop_assume!(v.cross(&n).norm() > 1e-6);
            let phi = ppa_phase_directed(&n, &v).unwrap();
            let theta = viewing_angle(&n, &v);
            let back = normal_from_angles(ModelKind::Ppa, phi, theta, &v).unwrap();
            prop_assert!((back.into_inner() - n.into_inner()).norm() < 1e-9);
            // any phase gives a normal whose PPA phase is that phase mod π
            let folded = angle::canonical(phi);
            let other = normal_from_angles(ModelKind::Ppa, folded, theta, &v).unwrap();
            prop_assert!(angle::distance(ppa_phase(&other, &v).unwrap(), folded) < 1e-9);
        }

        #[test]
        fn opa_parameterization_round_trip(n in normal_strategy()) {
            let z = Vector3::z_axis();
            let n = if n.z > 0.0 { -n } else { n };
            prop_assume!(n.x.hypot(n.y) > 1e-6);
            let phi = opa_phase_directed(&n).unwrap();
            let back = normal_from_angles(ModelKind::Opa, phi, viewing_angle(&n, &z), &z).unwrap();
            prop_assert!((back.into_inner() - n.into_inner()).norm() < 1e-9);
        }

        #[test]
        fn upright_incidence_plane_equivalence(az in -PI..PI, tilt in 0.05f64..1.2, off in 0.01f64..0.9, flip in proptest::bool::ANY) {
            // v and n share the image-plane azimuth (or its opposite)
            let (s, c) = az.sin_cos();
            let v = unit(off * c, off * s, 1.0);
            let sign = if flip { -1.0 } else { 1.0 };
            let n = unit(sign * tilt.sin() * c, sign * tilt.sin() * s, -tilt.cos());
            prop_assume!(v.cross(&n).norm() > 1e-6);
            prop_assert!(classify_equivalence(&n, &v).contains(&EquivalenceCase::IncidencePlaneUpright));
            let d = angle::distance(ppa_phase(&n, &v).unwrap(), opa_phase(&n).unwrap());
            prop_assert!(d < 1e-9);
        }

        #[test]
        fn normal_in_image_plane_equivalence(az in -PI..PI, v in ray_strategy()) {
            let n = unit(az.cos(), az.sin(), 0.0);
            prop_assert!(classify_equivalence(&n, &v).contains(&EquivalenceCase::NormalInImagePlane));
            let d = angle::distance(ppa_phase(&n, &v).unwrap(), opa_phase(&n).unwrap());
            prop_assert!(d < 1e-9);
        }
    }
}
