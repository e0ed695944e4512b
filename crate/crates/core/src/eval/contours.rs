//! Iso-depth tracing versus PPA propagation along the same image tracks.

use super::report::{Check, ErrorReport, Section, TableRow};
use super::{measured_phase, EvalConfig, EvalError, SceneSource};
use crate::camera::Pose;
use crate::contour::{
    plane_rmse, trace_iso_depth, trace_ppa, write_contour_csv, Contour3D, ContourError,
    NormalSource, PlaneModel, DEFAULT_STEP,
};
use crate::normal::{angular_error, estimate_multi_view, Observation, SolveOptions};
use crate::phase::ModelKind;
use crate::raster::ScalarMap;
use crate::synth::{look_at, Board, DolpMode, NoiseSpec, SceneSpec};
use nalgebra::{Point2, Point3, Vector3};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;

pub const SECTION: &str = "contours";
pub const DEFAULT_SEEDS: usize = 20;
/// Seeds lie on the board outline shrunk to this fraction of its half extents.
pub const SEED_INSET: f64 = 0.9;
pub const DEFAULT_MAX_STEPS: usize = 2000;
pub const RATIO_THRESHOLD: f64 = 0.25;
pub const NOISELESS_RMSE_MM: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContourOptions {
    pub seeds: usize,
    pub step: f64,
    pub max_steps: usize,
}

impl Default for ContourOptions {
    fn default() -> Self {
        Self {
            seeds: DEFAULT_SEEDS,
            step: DEFAULT_STEP,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

/// Two-view scene of a tilted board: view 0 traces, view 1 supplies the
/// second set of phase constraints.
pub fn contour_scene(config: &EvalConfig) -> Result<SceneSpec, EvalError> {
    let params = &config.scene;
    let k = params.intrinsics()?;
    let board = Board::default();
    let camera = |distance: f64, tilt_deg: f64, azimuth_deg: f64| -> Result<Pose, EvalError> {
        let (t, a) = (tilt_deg.to_radians(), azimuth_deg.to_radians());
        let dir = Vector3::new(t.sin() * a.cos(), t.sin() * a.sin(), t.cos());
        let center = board.center + board_frame(&board) * dir * distance;
        Ok(look_at(center, board.center, &board, 0.0)?)
    };
    let poses = vec![camera(500.0, 40.0, 30.0)?, camera(550.0, 35.0, 160.0)?];
    let mut spec = SceneSpec::new(
        board,
        poses,
        k,
        DolpMode::SpecularFresnel {
            refractive_index: params.refractive_index,
        },
        config.seed,
    );
    spec.noise = NoiseSpec {
        intensity_sigma: params.noise_intensity,
        aolp_sigma: params.noise_aolp_deg.to_radians(),
    };
    Ok(spec)
}

fn board_frame(board: &Board) -> nalgebra::Matrix3<f64> {
    nalgebra::Matrix3::from_columns(&[
        board.x_axis.into_inner(),
        board.y_axis().into_inner(),
        board.normal.into_inner(),
    ])
}

/// `n` points evenly spaced along the inset board outline, in world coordinates.
pub fn edge_seeds(board: &Board, n: usize) -> Vec<Point3<f64>> {
    let (w, h) = (board.width_mm, board.height_mm);
    // corners in normalized board coordinates, walked counter-clockwise
    let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    let lengths = [w, h, w, h];
    let perimeter = 2.0 * (w + h);
    (0..n)
        .map(|i| {
            let mut d = (i as f64 + 0.5) / n as f64 * perimeter;
            let mut edge = 0;
            while edge < 3 && d >= lengths[edge] {
                d -= lengths[edge];
                edge += 1;
            }
            let f = d / lengths[edge];
            let (s0, t0) = corners[edge];
            let (s1, t1) = corners[(edge + 1) % 4];
            board.point(
                SEED_INSET * (s0 + f * (s1 - s0)),
                SEED_INSET * (t0 + f * (t1 - t0)),
            )
        })
        .collect()
}

/// Result of one seed.
#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: usize,
    pub iso_depth: Contour3D,
    pub ppa: Contour3D,
    pub normal_error_deg: f64,
    pub rmse_opa: f64,
    pub rmse_ppa: f64,
}

fn observation(
    aolp: &ScalarMap,
    pose: &Pose,
    source: &SceneSource,
    p: &Point2<f64>,
) -> Option<Observation> {
    let (x, y) = (p.x.round(), p.y.round());
    if x < 0.0 || y < 0.0 || x >= aolp.width() as f64 || y >= aolp.height() as f64 {
        return None;
    }
    Some(Observation {
        phase: aolp.get(x as usize, y as usize)?,
        pixel: Point2::new(x, y),
        intrinsics: source.scene().intrinsics,
        pose: *pose,
    })
}

/// PPA normal of the board around one track, in the tracing camera's frame.
/// Rows come from the track's pixels in view A and from the pixels of view B
/// that see the same board points.
fn track_normal(
    track: &[Point2<f64>],
    views: [(&ScalarMap, &Pose); 2],
    source: &SceneSource,
) -> Result<Vector3<f64>, EvalError> {
    let scene = source.scene();
    let plane = scene.board.plane();
    let (aolp_a, pose_a) = views[0];
    let (aolp_b, pose_b) = views[1];
    let mut obs = Vec::new();
    let mut last = None;
    for px in track {
        let rounded = (px.x.round(), px.y.round());
        if last == Some(rounded) {
            continue;
        }
        last = Some(rounded);
        let Some(oa) = observation(aolp_a, pose_a, source, px) else {
            continue;
        };
        obs.push(oa);
        let ray = pose_a.direction_to_world(&scene.intrinsics.ray_unchecked(&oa.pixel));
        let Some(t) = plane.intersect_ray(pose_a.center(), &ray) else {
            continue;
        };
        let world = pose_a.center() + ray.into_inner() * t;
        if let Some(pb) = scene.intrinsics.project(&pose_b.world_to_camera(&world)) {
            obs.extend(observation(aolp_b, pose_b, source, &pb));
        }
    }
    let est = estimate_multi_view(&obs, ModelKind::Ppa, &SolveOptions::default())?;
    Ok(pose_a.transform_normal(&est.normal).into_inner())
}

/// Outcome of the contours command, before it is written out.
#[derive(Debug, Clone)]
pub struct ContourOutput {
    pub report: ErrorReport,
    pub seeds: Vec<SeedResult>,
    pub skipped_seeds: usize,
    pub rmse_opa: f64,
    pub rmse_ppa: f64,
    /// Board plane in the tracing camera's frame.
    pub plane: PlaneModel,
}

impl ContourOutput {
    pub fn ratio(&self) -> f64 {
        self.rmse_ppa / self.rmse_opa
    }
}

fn pooled_rmse<'a>(contours: impl Iterator<Item = &'a Contour3D>, plane: &PlaneModel) -> f64 {
    let (mut ss, mut n) = (0.0, 0usize);
    for c in contours {
        for p in &c.points {
            ss += plane.signed_distance(p).powi(2);
            n += 1;
        }
    }
    (ss / n as f64).sqrt()
}

pub fn run(
    config: &EvalConfig,
    source: &SceneSource,
    options: &ContourOptions,
) -> Result<ContourOutput, EvalError> {
    if source.len() < 2 {
        return Err(EvalError::InsufficientViews {
            needed: 2,
            available: source.len(),
        });
    }
    let scene = source.scene();
    let intr = scene.intrinsics;
    let view_a = source.load(0)?;
    let view_b = source.load(1)?;
    let aolp_a = measured_phase(&view_a, scene.aolp_shift, config)?;
    let aolp_b = measured_phase(&view_b, scene.aolp_shift, config)?;
    let plane = scene.board.plane().to_camera(&view_a.pose);
    let n_gt = view_a.pose.transform_normal(&scene.board.normal);

    let results: Vec<Option<SeedResult>> = edge_seeds(&scene.board, options.seeds)
        .par_iter()
        .enumerate()
        .map(|(i, world)| -> Result<Option<SeedResult>, EvalError> {
            let seed_point = view_a.pose.world_to_camera(world);
            let Some(seed_px) = intr.project(&seed_point) else {
                return Ok(None);
            };
            let iso = match trace_iso_depth(
                &aolp_a,
                &seed_px,
                seed_point.z,
                &intr,
                options.step,
                options.max_steps,
            ) {
                Ok(c) => c,
                Err(ContourError::SeedMasked(..) | ContourError::SeedOutOfBounds(..)) => {
                    return Ok(None)
                }
                Err(e) => return Err(e.into()),
            };
            let normal = track_normal(
                &iso.pixel_track,
                [(&aolp_a, &view_a.pose), (&aolp_b, &view_b.pose)],
                source,
            )?;
            let ppa = trace_ppa(
                &iso.pixel_track,
                iso.seed_index,
                &seed_point,
                &NormalSource::Constant(crate::contour::unit(normal)),
                &intr,
            )?;
            Ok(Some(SeedResult {
                seed: i,
                rmse_opa: plane_rmse(&iso, &plane)?,
                rmse_ppa: plane_rmse(&ppa, &plane)?,
                normal_error_deg: angular_error(&normal, &n_gt).to_degrees(),
                iso_depth: iso,
                ppa,
            }))
        })
        .collect::<Result<_, _>>()?;
    let skipped = results.iter().filter(|r| r.is_none()).count();
    let seeds: Vec<SeedResult> = results.into_iter().flatten().collect();
    if seeds.is_empty() {
        return Err(EvalError::SeedsOutsideMask);
    }

    let rmse_opa = pooled_rmse(seeds.iter().map(|s| &s.iso_depth), &plane);
    let rmse_ppa = pooled_rmse(seeds.iter().map(|s| &s.ppa), &plane);
    let ratio = rmse_ppa / rmse_opa;
    let points: usize = seeds.iter().map(|s| s.iso_depth.len()).sum();

    let table = vec![
        row("opa", "plane_rmse_mm", rmse_opa),
        row("ppa", "plane_rmse_mm", rmse_ppa),
        row("ppa", "rmse_ratio_to_opa", ratio),
    ];
    let per_seed: Vec<serde_json::Value> = seeds
        .iter()
        .map(|s| {
            serde_json::json!({
                "seed": s.seed,
                "points": s.iso_depth.len(),
                "opa_plane_rmse_mm": s.rmse_opa,
                "ppa_plane_rmse_mm": s.rmse_ppa,
                "normal_error_deg": s.normal_error_deg,
            })
        })
        .collect();
    let results = serde_json::json!({
        "seeds_requested": options.seeds,
        "seeds_traced": seeds.len(),
        "seeds_skipped": skipped,
        "step_px": options.step,
        "max_steps": options.max_steps,
        "points_per_method": points,
        "opa_plane_rmse_mm": rmse_opa,
        "ppa_plane_rmse_mm": rmse_ppa,
        "rmse_ratio": ratio,
        "per_seed": per_seed,
    });

    let mut checks = vec![Check::at_most(
        SECTION,
        "ppa_to_opa_rmse_ratio_at_most_0.25",
        Some(ratio),
        RATIO_THRESHOLD,
    )];
    let noise = scene.noise;
    if noise.aolp_sigma == 0.0
        && noise.intensity_sigma == 0.0
        && config.blur_sigma == 0.0
        && source.is_memory()
    {
        checks.push(Check::below(
            SECTION,
            "noiseless_ppa_rmse_below_1e-6_mm",
            Some(rmse_ppa),
            NOISELESS_RMSE_MM,
        ));
    }
    let section = Section {
        provenance: source.provenance("contours", config),
        table,
        results,
    };
    Ok(ContourOutput {
        report: ErrorReport::single(SECTION, section, checks),
        seeds,
        skipped_seeds: skipped,
        rmse_opa,
        rmse_ppa,
        plane,
    })
}

fn row(model: &str, metric: &str, value: f64) -> TableRow {
    TableRow {
        model: model.into(),
        metric: metric.into(),
        value: Some(value),
    }
}

/// Runs the command and writes the report and one CSV per contour into `config.out`.
pub fn run_and_write(
    config: &EvalConfig,
    source: &SceneSource,
    options: &ContourOptions,
) -> Result<ErrorReport, EvalError> {
    let out = run(config, source, options)?;
    out.report.write(&config.out, SECTION)?;
    let dir = config.out.join("contours");
    super::ensure_dir(&dir)?;
    let mut summary = String::from("seed,method,points,plane_rmse_mm\n");
    for s in &out.seeds {
        for (method, c, rmse) in [
            ("opa", &s.iso_depth, s.rmse_opa),
            ("ppa", &s.ppa, s.rmse_ppa),
        ] {
            let mut buf = Vec::new();
            write_contour_csv(&mut buf, c, &out.plane).expect("writing to memory");
            let path = dir.join(format!("seed_{:02}_{method}.csv", s.seed));
            std::fs::write(&path, buf).map_err(|source| EvalError::Write { path, source })?;
            let _ = writeln!(summary, "{},{method},{},{rmse}", s.seed, c.len());
        }
    }
    super::write_text(&config.out.join("contours_seeds.csv"), &summary)?;
    Ok(out.report)
}
