//! Per-pixel phase-model accuracy against measured AoLP.

use super::report::{Check, ErrorReport, Section, TableRow};
use super::stats::{ErrorStats, Histogram, Summary};
use super::{measured_phase, EvalConfig, EvalError, SceneSource};
use crate::angle;
use crate::io::write_pfm;
use crate::phase::{predict_phase, viewing_angle, ModelKind};
use crate::raster::{Image, ScalarMap};
use nalgebra::{Point2, UnitVector3};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;

pub const SECTION: &str = "model_accuracy";
/// Every this-many-th pixel of a view goes into the per-pixel CSV.
pub const PIXEL_CSV_STRIDE: usize = 997;
/// Radius fraction of the central disk and inner edge of the outer annulus.
pub const CENTER_FRACTION: f64 = 0.2;
pub const EDGE_FRACTION: f64 = 0.8;

/// Accumulated errors of one model, in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelAccumulator {
    pub all: ErrorStats,
    pub center: ErrorStats,
    pub edge: ErrorStats,
    pub viewing_angle: Histogram,
    pub azimuth_difference: Histogram,
    pub zenith: Histogram,
    pub degenerate: u64,
}

impl Default for ModelAccumulator {
    fn default() -> Self {
        Self {
            all: ErrorStats::default(),
            center: ErrorStats::default(),
            edge: ErrorStats::default(),
            viewing_angle: Histogram::new(0.0, 90.0, 2.0),
            azimuth_difference: Histogram::new(-180.0, 180.0, 4.0),
            zenith: Histogram::new(0.0, 90.0, 2.0),
            degenerate: 0,
        }
    }
}

impl ModelAccumulator {
    fn merge(&mut self, o: &ModelAccumulator) {
        self.all.merge(&o.all);
        self.center.merge(&o.center);
        self.edge.merge(&o.edge);
        self.viewing_angle.merge(&o.viewing_angle);
        self.azimuth_difference.merge(&o.azimuth_difference);
        self.zenith.merge(&o.zenith);
        self.degenerate += o.degenerate;
    }
}

/// Angles describing one pixel's geometry, in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelGeometry {
    pub viewing_angle: f64,
    pub azimuth_difference: f64,
    pub zenith: f64,
}

/// Viewing angle `∠(-v, n)`, zenith `∠(n, -z)`, and the image-plane azimuth of
/// `v` minus that of `n` wrapped to `(-180, 180]`.
pub fn pixel_geometry(n: &UnitVector3<f64>, v: &UnitVector3<f64>) -> PixelGeometry {
    let az = v.y.atan2(v.x) - n.y.atan2(n.x);
    let mut az = az.to_degrees().rem_euclid(360.0);
    if az > 180.0 {
        az -= 360.0;
    }
    PixelGeometry {
        viewing_angle: viewing_angle(n, v).to_degrees(),
        azimuth_difference: az,
        zenith: (-n.z).clamp(-1.0, 1.0).acos().to_degrees(),
    }
}

struct ViewResult {
    index: usize,
    models: Vec<ModelAccumulator>,
    pixel_rows: String,
}

fn evaluate_view(
    source: &SceneSource,
    k: usize,
    models: &[ModelKind],
    config: &EvalConfig,
) -> Result<ViewResult, EvalError> {
    let scene = source.scene();
    let view = source.load(k)?;
    let aolp = measured_phase(&view, scene.aolp_shift, config)?;
    let n_cam = view.pose.transform_normal(&scene.board.normal);
    let intr = &scene.intrinsics;
    let pp = intr.principal_point();
    let w = intr.width() as f64;
    let h = intr.height() as f64;
    let r_max = (pp.x.max(w - 1.0 - pp.x)).hypot(pp.y.max(h - 1.0 - pp.y));

    let mut accs = vec![ModelAccumulator::default(); models.len()];
    let mut pixel_rows = String::new();
    for (x, y, phi) in aolp.iter_valid() {
        let px = Point2::new(x as f64, y as f64);
        let v = intr.ray_unchecked(&px);
        let g = pixel_geometry(&n_cam, &v);
        let r = (px - pp).norm() / r_max;
        let sampled = (y * aolp.width() + x) % PIXEL_CSV_STRIDE == 0;
        for (acc, &model) in accs.iter_mut().zip(models) {
            let Ok(pred) = predict_phase(model, &n_cam, &v) else {
                acc.degenerate += 1;
                continue;
            };
            let e = angle::signed_difference(phi, pred).to_degrees();
            acc.all.add(e);
            if r <= CENTER_FRACTION {
                acc.center.add(e);
            }
            if r >= EDGE_FRACTION {
                acc.edge.add(e);
            }
            acc.viewing_angle.add(g.viewing_angle, e);
            acc.azimuth_difference.add(g.azimuth_difference, e);
            acc.zenith.add(g.zenith, e);
            if sampled {
                let _ = writeln!(
                    pixel_rows,
                    "{k},{x},{y},{},{e},{},{},{}",
                    model.name(),
                    g.viewing_angle,
                    g.azimuth_difference,
                    g.zenith
                );
            }
        }
    }
    Ok(ViewResult {
        index: k,
        models: accs,
        pixel_rows,
    })
}

#[derive(Debug, Clone, Serialize)]
struct ModelResults {
    summary: Summary,
    center_disk: Summary,
    edge_annulus: Summary,
    degenerate_pixels: u64,
}

/// Phase maps predicted from ground truth for one view (for inspection).
pub fn predicted_map(
    source: &SceneSource,
    k: usize,
    model: ModelKind,
) -> Result<ScalarMap, EvalError> {
    let scene = source.scene();
    let view = source.load(k)?;
    let n_cam = view.pose.transform_normal(&scene.board.normal);
    let intr = &scene.intrinsics;
    let (w, h) = (intr.width() as usize, intr.height() as usize);
    let mut mask = view.gt_mask.clone();
    let img = Image::from_fn(w, h, |x, y| {
        let v = intr.ray_unchecked(&Point2::new(x as f64, y as f64));
        match predict_phase(model, &n_cam, &v) {
            Ok(p) => p,
            Err(_) => {
                mask[y * w + x] = false;
                0.0
            }
        }
    });
    Ok(ScalarMap::new(img, mask).expect("sizes agree"))
}

/// Outcome of the accuracy command, before it is written out.
#[derive(Debug, Clone)]
pub struct AccuracyOutput {
    pub report: ErrorReport,
    pub per_model: Vec<(ModelKind, ModelAccumulator)>,
    pub views_csv: String,
    pub bins_csv: String,
    pub pixels_csv: String,
}

pub fn run(config: &EvalConfig, source: &SceneSource) -> Result<AccuracyOutput, EvalError> {
    let models = config.model.models();
    let results: Vec<ViewResult> = (0..source.len())
        .into_par_iter()
        .map(|k| evaluate_view(source, k, &models, config))
        .collect::<Result<_, _>>()?;

    let mut totals = vec![ModelAccumulator::default(); models.len()];
    let mut views_csv = String::from("view,model,count,mean_deg,rmse_deg\n");
    let mut pixels_csv = String::from(
        "view,u,v,model,signed_error_deg,viewing_angle_deg,azimuth_difference_deg,zenith_deg\n",
    );
    for r in &results {
        for (t, (acc, model)) in totals.iter_mut().zip(r.models.iter().zip(&models)) {
            t.merge(acc);
            let s = acc.all.summary();
            let _ = writeln!(
                views_csv,
                "{},{},{},{},{}",
                r.index,
                model.name(),
                s.count,
                fmt_opt(s.mean),
                fmt_opt(s.rmse)
            );
        }
        pixels_csv.push_str(&r.pixel_rows);
    }

    let mut bins_csv = String::from("model,axis,lo_deg,hi_deg,count,mean_deg,rmse_deg\n");
    let mut table = Vec::new();
    let mut per_model_json = serde_json::Map::new();
    for (acc, model) in totals.iter().zip(&models) {
        for (axis, hist) in [
            ("viewing_angle", &acc.viewing_angle),
            ("azimuth_difference", &acc.azimuth_difference),
            ("zenith", &acc.zenith),
        ] {
            for b in hist.table() {
                let _ = writeln!(
                    bins_csv,
                    "{},{axis},{},{},{},{},{}",
                    model.name(),
                    b.lo,
                    b.hi,
                    b.count,
                    fmt_opt(b.mean),
                    fmt_opt(b.rmse)
                );
            }
        }
        let s = acc.all.summary();
        for (metric, value) in [
            ("count", Some(s.count as f64)),
            ("mean_deg", s.mean),
            ("rmse_deg", s.rmse),
            ("center_mean_abs_deg", acc.center.mean_abs()),
            ("edge_mean_abs_deg", acc.edge.mean_abs()),
        ] {
            table.push(TableRow {
                model: model.name().into(),
                metric: metric.into(),
                value,
            });
        }
        let mr = ModelResults {
            summary: s,
            center_disk: acc.center.summary(),
            edge_annulus: acc.edge.summary(),
            degenerate_pixels: acc.degenerate,
        };
        per_model_json.insert(
            model.name().into(),
            serde_json::to_value(mr).expect("serializable"),
        );
    }

    let checks = checks(config, source, &models, &totals);
    let section = Section {
        provenance: source.provenance("model-accuracy", config),
        table,
        results: serde_json::json!({
            "units": "degrees",
            "error_convention": "measured minus predicted, mod 180 mapped to (-90, 90]",
            "center_fraction": CENTER_FRACTION,
            "edge_fraction": EDGE_FRACTION,
            "models": per_model_json,
        }),
    };
    Ok(AccuracyOutput {
        report: ErrorReport::single(SECTION, section, checks),
        per_model: models.into_iter().zip(totals).collect(),
        views_csv,
        bins_csv,
        pixels_csv,
    })
}

fn checks(
    config: &EvalConfig,
    source: &SceneSource,
    models: &[ModelKind],
    totals: &[ModelAccumulator],
) -> Vec<Check> {
    let get = |m: ModelKind| models.iter().position(|&x| x == m).map(|i| &totals[i]);
    let noise = source.scene().noise;
    let noiseless = noise.aolp_sigma == 0.0 && noise.intensity_sigma == 0.0;
    let mut out = Vec::new();
    if let Some(opa) = get(ModelKind::Opa) {
        let gap = opa
            .edge
            .mean_abs()
            .zip(opa.center.mean_abs())
            .map(|(e, c)| e - c);
        out.push(Check {
            detail: "edge-annulus mean |error| - center-disk mean |error| > 0".into(),
            ..Check::above(SECTION, "opa_edge_error_exceeds_center", gap, 0.0)
        });
        if noiseless && config.blur_sigma == 0.0 && source.is_memory() {
            out.push(Check::above(
                SECTION,
                "opa_rmse_above_5_deg",
                opa.all.rmse(),
                5.0,
            ));
        }
    }
    if let Some(ppa) = get(ModelKind::Ppa) {
        if let Some(opa) = get(ModelKind::Opa) {
            out.push(Check::below(
                SECTION,
                "ppa_rmse_below_opa_rmse",
                ppa.all.rmse(),
                opa.all.rmse().unwrap_or(0.0),
            ));
        }
        if config.blur_sigma == 0.0 && source.is_memory() {
            if noiseless {
                out.push(Check::below(
                    SECTION,
                    "ppa_rmse_below_1e-7_deg",
                    ppa.all.rmse(),
                    1e-7,
                ));
            } else if noise.intensity_sigma == 0.0 {
                let sigma = noise.aolp_sigma.to_degrees();
                let rel = ppa.all.rmse().map(|r| (r - sigma).abs() / sigma);
                out.push(Check::below(
                    SECTION,
                    "ppa_rmse_within_10pct_of_noise",
                    rel,
                    0.1,
                ));
            }
        }
    }
    out
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// Runs the command and writes its JSON, CSV and PFM outputs into `config.out`.
pub fn run_and_write(config: &EvalConfig, source: &SceneSource) -> Result<ErrorReport, EvalError> {
    let out = run(config, source)?;
    let dir = &config.out;
    out.report.write(dir, SECTION)?;
    super::write_text(&dir.join("model_accuracy_views.csv"), &out.views_csv)?;
    super::write_text(&dir.join("model_accuracy_bins.csv"), &out.bins_csv)?;
    super::write_text(&dir.join("model_accuracy_pixels.csv"), &out.pixels_csv)?;
    if !source.is_empty() {
        for model in config.model.models() {
            let map = predicted_map(source, 0, model)?;
            write_pfm(
                &dir.join(format!("predicted_{}_view000.pfm", model.name())),
                &map,
            )?;
        }
    }
    Ok(out.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Unit, Vector3};

    #[test]
    fn geometry_angles() {
        let n = Unit::new_normalize(Vector3::new(0.0, 0.0, -1.0));
        let v = Unit::new_normalize(Vector3::new(1.0, 0.0, 1.0));
        let g = pixel_geometry(&n, &v);
        assert!((g.viewing_angle - 45.0).abs() < 1e-12);
        assert_eq!(g.zenith, 0.0);
        let n = Unit::new_normalize(Vector3::new(0.0, 1.0, -1.0));
        let g = pixel_geometry(&n, &v);
        assert!((g.zenith - 45.0).abs() < 1e-12);
        assert!((g.azimuth_difference + 90.0).abs() < 1e-12);
    }
}
