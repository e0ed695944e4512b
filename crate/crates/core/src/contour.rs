//! Contour tracing on phase maps.
//!
//! [`trace_iso_depth`] follows the image direction perpendicular to the
//! measured phase, which under the orthographic model is an iso-depth curve,
//! and assigns every point the seed depth. [`trace_ppa`] keeps the same 2D
//! track but lifts each pixel onto a plane propagated from the previous point
//! with an estimated normal. All 3D points are in the tracing camera's frame.

use crate::camera::{CameraIntrinsics, GeometryError, Pose};
use crate::raster::ScalarMap;
use nalgebra::{Point2, Point3, Unit, UnitVector3, Vector3};
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use thiserror::Error;

/// Default propagation step, in pixels.
pub const DEFAULT_STEP: f64 = 0.5;
/// `|n·v|` below this means the ray does not cut the propagation plane.
pub const PARALLEL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContourError {
    #[error("seed pixel ({0}, {1}) has no valid phase")]
    SeedMasked(f64, f64),
    #[error("seed pixel ({0}, {1}) lies outside the image")]
    SeedOutOfBounds(f64, f64),
    #[error("step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("seed depth must be positive and finite, got {0}")]
    InvalidDepth(f64),
    #[error("ray is parallel to the propagation plane at track index {0}")]
    RayParallelToPlane(usize),
    #[error("contour is empty")]
    EmptyContour,
    #[error("track has {track} points but {normals} normals were supplied")]
    NormalCountMismatch { track: usize, normals: usize },
    #[error("seed index {index} outside track of length {len}")]
    SeedIndexOutOfRange { index: usize, len: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Plane `normal·P + offset = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneModel {
    pub normal: UnitVector3<f64>,
    pub offset: f64,
}

impl PlaneModel {
    pub fn new(normal: UnitVector3<f64>, offset: f64) -> Self {
        Self { normal, offset }
    }

    pub fn through_point(normal: UnitVector3<f64>, point: &Point3<f64>) -> Self {
        Self {
            normal,
            offset: -normal.dot(&point.coords),
        }
    }

    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&p.coords) + self.offset
    }

    /// Ray parameter `t` with `origin + t·dir` on the plane, if the ray is not parallel.
    pub fn intersect_ray(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let denom = self.normal.dot(dir);
        if denom.abs() < PARALLEL_TOLERANCE {
            return None;
        }
        Some(-self.signed_distance(origin) / denom)
    }

    /// The same plane expressed in a camera frame.
    pub fn to_camera(&self, pose: &Pose) -> PlaneModel {
        PlaneModel {
            normal: pose.transform_normal(&self.normal),
            offset: self.offset + self.normal.dot(&pose.center().coords),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour3D {
    pub points: Vec<Point3<f64>>,
    pub seed: Point3<f64>,
    /// Position of the seed within `points` / `pixel_track`.
    pub seed_index: usize,
    pub pixel_track: Vec<Point2<f64>>,
}

impl Contour3D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points mapped from the camera frame of `pose` to the world frame.
    pub fn to_world(&self, pose: &Pose) -> Contour3D {
        Contour3D {
            points: self
                .points
                .iter()
                .map(|p| pose.camera_to_world(p))
                .collect(),
            seed: pose.camera_to_world(&self.seed),
            seed_index: self.seed_index,
            pixel_track: self.pixel_track.clone(),
        }
    }
}

fn tangent(phi: f64) -> Vector3<f64> {
    Vector3::new(phi.sin(), phi.cos(), 0.0)
}

fn walk(
    aolp: &ScalarMap,
    intrinsics: &CameraIntrinsics,
    start: Point2<f64>,
    first_dir: Vector3<f64>,
    step: f64,
    max_steps: usize,
) -> Vec<Point2<f64>> {
    let mut out = Vec::new();
    let mut pos = start;
    let mut prev = first_dir;
    for _ in 0..max_steps {
        let Some(phi) = aolp.sample_angle(&pos) else {
            break;
        };
        let mut t = tangent(phi);
        if t.dot(&prev) < 0.0 {
            t = -t;
        }
        let next = Point2::new(pos.x + step * t.x, pos.y + step * t.y);
        if !intrinsics.contains(&next) || aolp.sample_angle(&next).is_none() {
            break;
        }
        out.push(next);
        pos = next;
        prev = t;
    }
    out
}

/// Traces the iso-depth contour through `seed_pixel` in both directions.
/// Each direction takes at most `max_steps` steps of `step` pixels and stops
/// before leaving the image or the valid phase region.
pub fn trace_iso_depth(
    aolp: &ScalarMap,
    seed_pixel: &Point2<f64>,
    seed_depth: f64,
    intrinsics: &CameraIntrinsics,
    step: f64,
    max_steps: usize,
) -> Result<Contour3D, ContourError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(ContourError::InvalidStep(step));
    }
    if !(seed_depth > 0.0 && seed_depth.is_finite()) {
        return Err(ContourError::InvalidDepth(seed_depth));
    }
    if !intrinsics.contains(seed_pixel) {
        return Err(ContourError::SeedOutOfBounds(seed_pixel.x, seed_pixel.y));
    }
    let phi0 = aolp
        .sample_angle(seed_pixel)
        .ok_or(ContourError::SeedMasked(seed_pixel.x, seed_pixel.y))?;
    let t0 = tangent(phi0);

    let forward = walk(aolp, intrinsics, *seed_pixel, t0, step, max_steps);
    let backward = walk(aolp, intrinsics, *seed_pixel, -t0, step, max_steps);

    let mut track: Vec<Point2<f64>> = backward.into_iter().rev().collect();
    let seed_index = track.len();
    track.push(*seed_pixel);
    track.extend(forward);

    let lift = |px: &Point2<f64>| Point3::from(intrinsics.back_project(px) * seed_depth);
    Ok(Contour3D {
        points: track.iter().map(lift).collect(),
        seed: lift(seed_pixel),
        seed_index,
        pixel_track: track,
    })
}

/// Normals used to propagate [`trace_ppa`], camera frame.
#[derive(Debug, Clone, PartialEq)]
pub enum NormalSource {
    /// One normal for the whole contour.
    Constant(UnitVector3<f64>),
    /// One normal per track point; the normal at the current point defines
    /// the plane used to reach its neighbour.
    PerStep(Vec<UnitVector3<f64>>),
}

impl NormalSource {
    fn at(&self, k: usize) -> &UnitVector3<f64> {
        match self {
            NormalSource::Constant(n) => n,
            NormalSource::PerStep(ns) => &ns[k],
        }
    }
}

/// Lifts a pixel track to 3D by plane propagation from `seed_point`, which
/// sits at `pixel_track[seed_index]`.
pub fn trace_ppa(
    pixel_track: &[Point2<f64>],
    seed_index: usize,
    seed_point: &Point3<f64>,
    normals: &NormalSource,
    intrinsics: &CameraIntrinsics,
) -> Result<Contour3D, ContourError> {
    let len = pixel_track.len();
    if seed_index >= len {
        return Err(ContourError::SeedIndexOutOfRange {
            index: seed_index,
            len,
        });
    }
    if let NormalSource::PerStep(ns) = normals {
        if ns.len() != len {
            return Err(ContourError::NormalCountMismatch {
                track: len,
                normals: ns.len(),
            });
        }
    }

    let mut points = vec![Point3::origin(); len];
    points[seed_index] = *seed_point;
    let step =
        |from: usize, to: usize, points: &[Point3<f64>]| -> Result<Point3<f64>, ContourError> {
            let plane = PlaneModel::through_point(*normals.at(from), &points[from]);
            let ray = intrinsics.back_project(&pixel_track[to]);
            let t = plane
                .intersect_ray(&Point3::origin(), &ray)
                .ok_or(ContourError::RayParallelToPlane(to))?;
            Ok(Point3::from(ray * t))
        };
    for k in seed_index + 1..len {
        points[k] = step(k - 1, k, &points)?;
    }
    for k in (0..seed_index).rev() {
        points[k] = step(k + 1, k, &points)?;
    }
    Ok(Contour3D {
        points,
        seed: *seed_point,
        seed_index,
        pixel_track: pixel_track.to_vec(),
    })
}

/// Root-mean-square point-to-plane distance.
pub fn plane_rmse(contour: &Contour3D, plane: &PlaneModel) -> Result<f64, ContourError> {
    if contour.points.is_empty() {
        return Err(ContourError::EmptyContour);
    }
    let ss: f64 = contour
        .points
        .iter()
        .map(|p| plane.signed_distance(p).powi(2))
        .sum();
    Ok((ss / contour.points.len() as f64).sqrt())
}

/// CSV with columns `step,u,v,X,Y,Z,point_to_plane_mm`; `step` counts from the seed.
pub fn write_contour_csv<W: Write>(
    mut out: W,
    contour: &Contour3D,
    plane: &PlaneModel,
) -> io::Result<()> {
    writeln!(out, "step,u,v,X,Y,Z,point_to_plane_mm")?;
    for (k, (px, p)) in contour.pixel_track.iter().zip(&contour.points).enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            k as i64 - contour.seed_index as i64,
            px.x,
            px.y,
            p.x,
            p.y,
            p.z,
            plane.signed_distance(p)
        )?;
    }
    Ok(())
}

/// Unit normal from a vector, for callers building [`NormalSource`]s.
pub fn unit(v: Vector3<f64>) -> UnitVector3<f64> {
    Unit::new_normalize(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::ppa_phase;
    use crate::raster::Image;
    use approx::assert_abs_diff_eq;

    fn intrinsics() -> CameraIntrinsics {
        // 86.6° horizontal field of view at 200 px width
        CameraIntrinsics::from_horizontal_fov(200, 150, 86.6f64.to_radians()).unwrap()
    }

    fn tilted_plane() -> PlaneModel {
        let n = unit(Vector3::new(
            0.0,
            (40f64).to_radians().sin(),
            -(40f64).to_radians().cos(),
        ));
        PlaneModel::through_point(n, &Point3::new(0.0, 0.0, 500.0))
    }

    fn ppa_map(k: &CameraIntrinsics, plane: &PlaneModel) -> ScalarMap {
        let w = k.width() as usize;
        let h = k.height() as usize;
        let img = Image::from_fn(w, h, |x, y| {
            let v = k.ray_unchecked(&Point2::new(x as f64, y as f64));
            ppa_phase(&plane.normal, &v).unwrap()
        });
        ScalarMap::dense(img)
    }

    #[test]
    fn uniform_field_gives_straight_track() {
        let k = intrinsics();
        let phi = 0.3;
        let aolp = ScalarMap::dense(Image::filled(200, 150, phi));
        let c = trace_iso_depth(&aolp, &Point2::new(100.0, 75.0), 400.0, &k, 0.5, 30).unwrap();
        assert_eq!(c.len(), 61);
        assert_eq!(c.seed_index, 30);
        let dir = Vector3::new(phi.sin(), phi.cos(), 0.0);
        for w in c.pixel_track.windows(2) {
            let d = w[1] - w[0];
            assert!((d.norm() - 0.5).abs() < 1e-6);
            assert!((d.x * dir.y - d.y * dir.x).abs() < 1e-12);
        }
        assert!(c.points.iter().all(|p| p.z == 400.0));
    }

    #[test]
    fn zero_steps_and_seed_errors() {
        let k = intrinsics();
        let mut mask = vec![true; 200 * 150];
        mask[10 * 200 + 10] = false;
        let aolp = ScalarMap::new(Image::filled(200, 150, 1.0), mask).unwrap();
        let c = trace_iso_depth(&aolp, &Point2::new(50.0, 50.0), 300.0, &k, 0.5, 0).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.points[0], c.seed);
        assert_eq!(
            trace_iso_depth(&aolp, &Point2::new(10.0, 10.0), 300.0, &k, 0.5, 5),
            Err(ContourError::SeedMasked(10.0, 10.0))
        );
        assert_eq!(
            trace_iso_depth(&aolp, &Point2::new(-3.0, 10.0), 300.0, &k, 0.5, 5),
            Err(ContourError::SeedOutOfBounds(-3.0, 10.0))
        );
        assert!(matches!(
            trace_iso_depth(&aolp, &Point2::new(5.0, 5.0), 300.0, &k, 0.0, 5),
            Err(ContourError::InvalidStep(_))
        ));
    }

    #[test]
    fn tracing_stops_at_mask_boundary() {
        let k = intrinsics();
        let mask: Vec<bool> = (0..200 * 150).map(|i| i % 200 < 120).collect();
        // phase π/2 gives the horizontal tangent (1, 0)
        let aolp =
            ScalarMap::new(Image::filled(200, 150, std::f64::consts::FRAC_PI_2), mask).unwrap();
        let c = trace_iso_depth(&aolp, &Point2::new(100.0, 40.0), 300.0, &k, 0.5, 1000).unwrap();
        let last = c.pixel_track.last().unwrap();
        let first = c.pixel_track.first().unwrap();
        assert!(last.x <= 119.0 && last.x > 118.0);
        assert!(first.x >= 0.0 && first.x < 0.5);
    }

    #[test]
    fn iso_depth_leaves_tilted_plane_but_ppa_stays() {
        let k = intrinsics();
        let plane = tilted_plane();
        let aolp = ppa_map(&k, &plane);
        let seed_px = Point2::new(160.0, 30.0);
        let ray = k.back_project(&seed_px);
        let t = plane.intersect_ray(&Point3::origin(), &ray).unwrap();
        let seed = Point3::from(ray * t);

        let iso = trace_iso_depth(&aolp, &seed_px, seed.z, &k, 0.5, 400).unwrap();
        assert!(iso.points.iter().all(|p| p.z == seed.z));
        let iso_rmse = plane_rmse(&iso, &plane).unwrap();
        assert!(iso_rmse > 1.0, "{iso_rmse}");

        let ppa = trace_ppa(
            &iso.pixel_track,
            iso.seed_index,
            &seed,
            &NormalSource::Constant(plane.normal),
            &k,
        )
        .unwrap();
        for (p, px) in ppa.points.iter().zip(&ppa.pixel_track) {
            assert!(plane.signed_distance(p).abs() < 1e-9);
            let q = k.project(p).unwrap();
            assert!((q - px).norm() < 1e-6);
        }
        assert!(plane_rmse(&ppa, &plane).unwrap() < 1e-9);
    }

    #[test]
    fn ppa_rejects_parallel_rays() {
        let k = intrinsics();
        let track = [k.principal_point(), Point2::new(120.0, 75.0)];
        // plane containing the optical axis: the ray through the next pixel grazes it
        let n = unit(Vector3::new(1.0, 0.0, 0.0));
        let seed = Point3::new(0.0, 0.0, 100.0);
        let track2 = [Point2::new(k.cx(), 10.0), Point2::new(k.cx(), 40.0)];
        assert_eq!(
            trace_ppa(&track2, 0, &seed, &NormalSource::Constant(n), &k),
            Err(ContourError::RayParallelToPlane(1))
        );
        assert!(trace_ppa(&track, 0, &seed, &NormalSource::Constant(n), &k).is_ok());
        assert!(matches!(
            trace_ppa(&track, 0, &seed, &NormalSource::PerStep(vec![n]), &k),
            Err(ContourError::NormalCountMismatch { .. })
        ));
    }

    #[test]
    fn rmse_arithmetic() {
        let plane = PlaneModel::new(Vector3::z_axis(), 0.0);
        let contour = |zs: &[f64]| Contour3D {
            points: zs.iter().map(|&z| Point3::new(1.0, 2.0, z)).collect(),
            seed: Point3::origin(),
            seed_index: 0,
            pixel_track: vec![Point2::origin(); zs.len()],
        };
        assert_eq!(plane_rmse(&contour(&[0.0, 0.0]), &plane).unwrap(), 0.0);
        assert_eq!(plane_rmse(&contour(&[3.0]), &plane).unwrap(), 3.0);
        assert_abs_diff_eq!(
            plane_rmse(&contour(&[3.0, -4.0]), &plane).unwrap(),
            12.5f64.sqrt(),
            epsilon = 1e-12
        );
        assert_eq!(
            plane_rmse(&contour(&[]), &plane),
            Err(ContourError::EmptyContour)
        );
    }

    #[test]
    fn plane_camera_transform() {
        let plane = tilted_plane();
        let pose = Pose::new(
            crate::camera::rotation_y(0.3),
            Point3::new(10.0, -20.0, 5.0),
        )
        .unwrap();
        let cam = plane.to_camera(&pose);
        let p_world = Point3::new(0.0, 0.0, 500.0);
        assert!(cam.signed_distance(&pose.world_to_camera(&p_world)).abs() < 1e-9);
        let q = Point3::new(30.0, 40.0, 600.0);
        assert_abs_diff_eq!(
            cam.signed_distance(&pose.world_to_camera(&q)),
            plane.signed_distance(&q),
            epsilon = 1e-9
        );
    }

    #[test]
    fn csv_layout() {
        let plane = PlaneModel::new(Vector3::z_axis(), -1.0);
        let c = Contour3D {
            points: vec![Point3::new(0.0, 0.0, 1.0), Point3::new(1.0, 0.0, 3.0)],
            seed: Point3::new(1.0, 0.0, 3.0),
            seed_index: 1,
            pixel_track: vec![Point2::new(1.0, 2.0), Point2::new(1.5, 2.0)],
        };
        let mut buf = Vec::new();
        write_contour_csv(&mut buf, &c, &plane).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "step,u,v,X,Y,Z,point_to_plane_mm\n-1,1,2,0,0,1,0\n0,1.5,2,1,0,3,2\n"
        );
    }
}
