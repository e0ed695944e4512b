//! Single-view and multi-view normal-estimation benchmarks.

use super::report::{Check, ErrorReport, Section, TableRow};
use super::stats::{cdf, fraction_below, median};
use super::{measured_phase, EvalConfig, EvalError, SceneSource};
use crate::normal::{
    angular_error, estimate_multi_view, estimate_plane_normal_map, EstimationError, Observation,
    SolveOptions,
};
use crate::phase::ModelKind;
use nalgebra::{Point2, Point3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;

pub const SECTION: &str = "estimate";
/// Threshold of the "fraction of small errors" statistic, degrees.
pub const SMALL_ERROR_DEG: f64 = 25.0;
/// Allowed increase of the mean error from one K to the next in the sweep, degrees.
pub const SWEEP_TOLERANCE_DEG: f64 = 0.5;
/// Trial points are drawn from this fraction of the board's half extents.
pub const TRIAL_EXTENT: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateOptions {
    pub single_view: bool,
    pub multi_view: bool,
    /// Largest K of the per-K sweep; below 3 disables it.
    pub sweep_max_k: usize,
    pub solve: SolveOptions,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            single_view: true,
            multi_view: true,
            sweep_max_k: 20,
            solve: SolveOptions::default(),
        }
    }
}

/// Outcome of one estimate, in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrialOutcome {
    Error(f64),
    IllConditioned,
    Failed,
}

fn outcome(result: Result<f64, EstimationError>) -> TrialOutcome {
    match result {
        Ok(e) => TrialOutcome::Error(e),
        Err(EstimationError::IllConditioned { .. }) => TrialOutcome::IllConditioned,
        Err(_) => TrialOutcome::Failed,
    }
}

/// Error summary of one model over a set of estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub estimates: usize,
    pub ill_conditioned: usize,
    pub failed: usize,
    pub mean_deg: Option<f64>,
    pub median_deg: Option<f64>,
    pub rmse_deg: Option<f64>,
    pub max_deg: Option<f64>,
    pub fraction_below_25_deg: Option<f64>,
    /// `(threshold_deg, fraction <= threshold)` for thresholds 0..=90.
    pub cdf: Vec<(f64, f64)>,
}

pub fn summarize(outcomes: &[TrialOutcome]) -> ErrorSummary {
    let errors: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| match o {
            TrialOutcome::Error(e) => Some(*e),
            _ => None,
        })
        .collect();
    let n = errors.len();
    let count = |t: TrialOutcome| outcomes.iter().filter(|&&o| o == t).count();
    ErrorSummary {
        estimates: n,
        ill_conditioned: count(TrialOutcome::IllConditioned),
        failed: count(TrialOutcome::Failed),
        mean_deg: (n > 0).then(|| errors.iter().sum::<f64>() / n as f64),
        median_deg: median(&errors),
        rmse_deg: (n > 0).then(|| (errors.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt()),
        max_deg: errors.iter().copied().reduce(f64::max),
        fraction_below_25_deg: fraction_below(&errors, SMALL_ERROR_DEG),
        cdf: cdf(&errors, 1.0, 90.0),
    }
}

/// Per-view plane-normal errors, indexed `[model][view]`.
pub fn single_view_outcomes(
    config: &EvalConfig,
    source: &SceneSource,
    models: &[ModelKind],
    solve: &SolveOptions,
) -> Result<Vec<Vec<TrialOutcome>>, EvalError> {
    let scene = source.scene();
    let per_view: Vec<Vec<TrialOutcome>> = (0..source.len())
        .into_par_iter()
        .map(|k| -> Result<Vec<TrialOutcome>, EvalError> {
            let view = source.load(k)?;
            let aolp = measured_phase(&view, scene.aolp_shift, config)?;
            let n_gt = view.pose.transform_normal(&scene.board.normal);
            let region = vec![true; aolp.mask().len()];
            Ok(models
                .iter()
                .map(|&m| {
                    outcome(
                        estimate_plane_normal_map(&aolp, &region, &scene.intrinsics, m, solve)
                            .map(|est| angular_error(&est.normal, &n_gt).to_degrees()),
                    )
                })
                .collect())
        })
        .collect::<Result<_, _>>()?;
    Ok((0..models.len())
        .map(|i| per_view.iter().map(|v| v[i]).collect())
        .collect())
}

/// A multi-view trial: a board point and the order in which views are tried.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub point: Point3<f64>,
    pub order: Vec<usize>,
}

pub fn sample_trials(source: &SceneSource, trials: usize, seed: u64) -> Vec<Trial> {
    let scene = source.scene();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7472_6961_6c73);
    (0..trials)
        .map(|_| {
            let s = TRIAL_EXTENT * (2.0 * rng.random::<f64>() - 1.0);
            let t = TRIAL_EXTENT * (2.0 * rng.random::<f64>() - 1.0);
            let mut order: Vec<usize> = (0..source.len()).collect();
            order.shuffle(&mut rng);
            Trial {
                point: scene.board.point(s, t),
                order,
            }
        })
        .collect()
}

/// Observations of every trial point, `[trial][view]`. The phase is read at
/// the pixel nearest to the point's projection, and that pixel's ray is used.
pub fn gather_observations(
    config: &EvalConfig,
    source: &SceneSource,
    trials: &[Trial],
) -> Result<Vec<Vec<Option<Observation>>>, EvalError> {
    let scene = source.scene();
    let intr = scene.intrinsics;
    let per_view: Vec<Vec<Option<Observation>>> = (0..source.len())
        .into_par_iter()
        .map(|k| -> Result<Vec<Option<Observation>>, EvalError> {
            let view = source.load(k)?;
            let aolp = measured_phase(&view, scene.aolp_shift, config)?;
            Ok(trials
                .iter()
                .map(|t| {
                    let p = intr.project(&view.pose.world_to_camera(&t.point))?;
                    let (x, y) = (p.x.round(), p.y.round());
                    if x < 0.0 || y < 0.0 || x >= aolp.width() as f64 || y >= aolp.height() as f64 {
                        return None;
                    }
                    let phase = aolp.get(x as usize, y as usize)?;
                    Some(Observation {
                        phase,
                        pixel: Point2::new(x, y),
                        intrinsics: intr,
                        pose: view.pose,
                    })
                })
                .collect())
        })
        .collect::<Result<_, _>>()?;
    Ok((0..trials.len())
        .map(|t| per_view.iter().map(|v| v[t]).collect())
        .collect())
}

/// Observations of one trial in its view order, valid ones only.
fn ordered(trial: &Trial, obs: &[Option<Observation>]) -> Vec<Observation> {
    trial.order.iter().filter_map(|&k| obs[k]).collect()
}

fn multi_view_error(
    obs: &[Observation],
    model: ModelKind,
    source: &SceneSource,
    solve: &SolveOptions,
) -> TrialOutcome {
    let n_gt = source.scene().board.normal;
    outcome(
        estimate_multi_view(obs, model, solve)
            .map(|est| angular_error(&est.normal, &n_gt).to_degrees()),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub model: ModelKind,
    pub trials: usize,
    pub summary_mean_deg: Option<f64>,
    pub ill_conditioned: usize,
}

/// Outcome of the estimate command, before it is written out.
#[derive(Debug, Clone)]
pub struct EstimateOutput {
    pub report: ErrorReport,
    pub single: Vec<(ModelKind, ErrorSummary)>,
    pub multi: Vec<(ModelKind, ErrorSummary)>,
    pub sweep: Vec<SweepRow>,
    pub insufficient_trials: usize,
    pub trials_csv: String,
}

pub fn run(
    config: &EvalConfig,
    source: &SceneSource,
    options: &EstimateOptions,
) -> Result<EstimateOutput, EvalError> {
    let models = config.model.models();
    let solve = &options.solve;
    let mut table = Vec::new();
    let mut results = serde_json::Map::new();
    let mut trials_csv = String::from("mode,trial,k,model,status,error_deg\n");
    let push_rows =
        |csv: &mut String, mode: &str, k: usize, per_model: &[(ModelKind, Vec<TrialOutcome>)]| {
            for (model, outs) in per_model {
                for (i, o) in outs.iter().enumerate() {
                    let (status, e) = match o {
                        TrialOutcome::Error(e) => ("ok", e.to_string()),
                        TrialOutcome::IllConditioned => ("ill_conditioned", String::new()),
                        TrialOutcome::Failed => ("failed", String::new()),
                    };
                    let _ = writeln!(csv, "{mode},{i},{k},{},{status},{e}", model.name());
                }
            }
        };

    let mut single = Vec::new();
    if options.single_view {
        let outs = single_view_outcomes(config, source, &models, solve)?;
        let per_model: Vec<(ModelKind, Vec<TrialOutcome>)> =
            models.iter().copied().zip(outs).collect();
        push_rows(&mut trials_csv, "single", 1, &per_model);
        let mut json = serde_json::Map::new();
        for (model, outs) in &per_model {
            let s = summarize(outs);
            add_rows(&mut table, "single", *model, &s);
            json.insert(
                model.name().into(),
                serde_json::to_value(&s).expect("serializable"),
            );
            single.push((*model, s));
        }
        results.insert("single_view".into(), json.into());
    }

    let mut multi = Vec::new();
    let mut sweep = Vec::new();
    let mut insufficient = 0;
    if options.multi_view {
        let k = config.views;
        if k < 2 {
            return Err(EvalError::InvalidConfig(format!(
                "multi-view estimation needs at least 2 views per trial, got {k}"
            )));
        }
        if source.len() < k {
            return Err(EvalError::InsufficientViews {
                needed: k,
                available: source.len(),
            });
        }
        let trials = sample_trials(source, config.trials, config.seed);
        let observations = gather_observations(config, source, &trials)?;
        let ordered_obs: Vec<Vec<Observation>> = trials
            .iter()
            .zip(&observations)
            .map(|(t, o)| ordered(t, o))
            .collect();

        let mut per_model = Vec::new();
        for &model in &models {
            let outs: Vec<TrialOutcome> = ordered_obs
                .iter()
                .map(|obs| {
                    if obs.len() < k {
                        TrialOutcome::Failed
                    } else {
                        multi_view_error(&obs[..k], model, source, solve)
                    }
                })
                .collect();
            per_model.push((model, outs));
        }
        insufficient = ordered_obs.iter().filter(|o| o.len() < k).count();
        push_rows(&mut trials_csv, "multi", k, &per_model);
        let mut json = serde_json::Map::new();
        for (model, outs) in &per_model {
            let s = summarize(outs);
            add_rows(&mut table, "multi", *model, &s);
            json.insert(
                model.name().into(),
                serde_json::to_value(&s).expect("serializable"),
            );
            multi.push((*model, s));
        }
        json.insert("views_per_trial".into(), k.into());
        json.insert("trials".into(), config.trials.into());
        json.insert("insufficient_view_trials".into(), insufficient.into());
        results.insert("multi_view".into(), json.into());

        let max_k = options.sweep_max_k.min(source.len());
        if max_k >= 3 {
            // nested prefixes of the same trials, restricted to trials that reach max_k views
            let eligible: Vec<&Vec<Observation>> =
                ordered_obs.iter().filter(|o| o.len() >= max_k).collect();
            for kk in 2..=max_k {
                for &model in &models {
                    let outs: Vec<TrialOutcome> = eligible
                        .iter()
                        .map(|obs| multi_view_error(&obs[..kk], model, source, solve))
                        .collect();
                    let s = summarize(&outs);
                    sweep.push(SweepRow {
                        k: kk,
                        model,
                        trials: outs.len(),
                        summary_mean_deg: s.mean_deg,
                        ill_conditioned: s.ill_conditioned,
                    });
                }
            }
            results.insert(
                "sweep".into(),
                serde_json::to_value(&sweep).expect("serializable"),
            );
        }
    }

    let checks = checks(source, config, &single, &multi, &sweep);
    let section = Section {
        provenance: source.provenance("estimate", config),
        table,
        results: results.into(),
    };
    Ok(EstimateOutput {
        report: ErrorReport::single(SECTION, section, checks),
        single,
        multi,
        sweep,
        insufficient_trials: insufficient,
        trials_csv,
    })
}

fn add_rows(table: &mut Vec<TableRow>, mode: &str, model: ModelKind, s: &ErrorSummary) {
    for (metric, value) in [
        ("estimates", Some(s.estimates as f64)),
        ("ill_conditioned", Some(s.ill_conditioned as f64)),
        ("mean_deg", s.mean_deg),
        ("median_deg", s.median_deg),
        ("fraction_below_25_deg", s.fraction_below_25_deg),
    ] {
        table.push(TableRow {
            model: model.name().into(),
            metric: format!("{mode}_{metric}"),
            value,
        });
    }
}

/// True when each mean is at most the previous one plus `tolerance`.
pub fn non_increasing(means: &[f64], tolerance: f64) -> bool {
    means.windows(2).all(|w| w[1] <= w[0] + tolerance)
}

fn checks(
    source: &SceneSource,
    config: &EvalConfig,
    single: &[(ModelKind, ErrorSummary)],
    multi: &[(ModelKind, ErrorSummary)],
    sweep: &[SweepRow],
) -> Vec<Check> {
    let mut out = Vec::new();
    let find = |list: &[(ModelKind, ErrorSummary)], m: ModelKind| {
        list.iter().find(|(k, _)| *k == m).map(|(_, s)| s.clone())
    };
    let noise = source.scene().noise;
    if noise.aolp_sigma == 0.0
        && noise.intensity_sigma == 0.0
        && config.blur_sigma == 0.0
        && source.is_memory()
    {
        if let Some(s) = find(single, ModelKind::Ppa) {
            out.push(Check::below(
                SECTION,
                "single_view_ppa_max_error_below_1e-6_rad",
                s.max_deg.map(f64::to_radians),
                1e-6,
            ));
        }
    }
    if let (Some(p), Some(o)) = (find(multi, ModelKind::Ppa), find(multi, ModelKind::Opa)) {
        // a missing OPA statistic leaves the check failed with a zero threshold
        let failed = |mut c: Check, opa: Option<f64>| {
            if opa.is_none() {
                c.passed = false;
            }
            c
        };
        out.push(failed(
            Check::above(
                SECTION,
                "ppa_fraction_below_25_exceeds_opa",
                p.fraction_below_25_deg,
                o.fraction_below_25_deg.unwrap_or(0.0),
            ),
            o.fraction_below_25_deg,
        ));
        out.push(failed(
            Check::below(
                SECTION,
                "ppa_median_below_half_opa_median",
                p.median_deg,
                0.5 * o.median_deg.unwrap_or(0.0),
            ),
            o.median_deg,
        ));
    }
    let ppa_means: Vec<f64> = sweep
        .iter()
        .filter(|r| r.model == ModelKind::Ppa)
        .map(|r| r.summary_mean_deg.unwrap_or(f64::NAN))
        .collect();
    if !ppa_means.is_empty() {
        let worst = ppa_means
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max);
        out.push(Check {
            passed: non_increasing(&ppa_means, SWEEP_TOLERANCE_DEG),
            ..Check::at_most(
                SECTION,
                "ppa_mean_error_non_increasing_in_k",
                worst.is_finite().then_some(worst),
                SWEEP_TOLERANCE_DEG,
            )
        });
    }
    out
}

/// Runs the command and writes its JSON and CSV outputs into `config.out`.
pub fn run_and_write(
    config: &EvalConfig,
    source: &SceneSource,
    options: &EstimateOptions,
) -> Result<ErrorReport, EvalError> {
    let out = run(config, source, options)?;
    let dir = &config.out;
    out.report.write(dir, SECTION)?;
    super::write_text(&dir.join("estimate_trials.csv"), &out.trials_csv)?;
    let mut cdf_csv = String::from("mode,model,threshold_deg,fraction\n");
    for (mode, list) in [("single", &out.single), ("multi", &out.multi)] {
        for (model, s) in list {
            for (t, f) in &s.cdf {
                let _ = writeln!(cdf_csv, "{mode},{},{t},{f}", model.name());
            }
        }
    }
    super::write_text(&dir.join("estimate_cdf.csv"), &cdf_csv)?;
    let mut sweep_csv = String::from("k,model,trials,mean_deg,ill_conditioned\n");
    for r in &out.sweep {
        let m = r.summary_mean_deg.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(
            sweep_csv,
            "{},{},{},{m},{}",
            r.k,
            r.model.name(),
            r.trials,
            r.ill_conditioned
        );
    }
    super::write_text(&dir.join("estimate_sweep.csv"), &sweep_csv)?;
    Ok(out.report)
}
