use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ppa_core::eval::contours::{self, ContourOptions};
use ppa_core::eval::estimate::{self, EstimateOptions};
use ppa_core::eval::{
    accuracy, report, write_dataset, ErrorReport, EvalConfig, ModelSelection, SceneParams,
    SceneSource,
};
use ppa_core::normal::SolveOptions;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ppa",
    version,
    about = "Perspective and orthographic phase-angle models: synthesis and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset to disk.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Number of views to render.
        #[arg(long, default_value_t = 282)]
        views: usize,
    },
    /// Per-pixel phase error of each model against the measured phase.
    ModelAccuracy {
        #[command(flatten)]
        common: Common,
    },
    /// Single-view and multi-view normal estimation benchmarks.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Views per multi-view trial (K).
        #[arg(long, default_value_t = 3)]
        views: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, value_enum, default_value_t = Mode::Both)]
        mode: Mode,
        /// Largest K of the per-K sweep (0 disables it).
        #[arg(long, default_value_t = 20)]
        sweep_max_k: usize,
        #[arg(long, default_value_t = ppa_core::normal::DEFAULT_CONDITION_THRESHOLD)]
        condition_threshold: f64,
    },
    /// Iso-depth contours versus PPA propagation on the same image tracks.
    Contours {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = contours::DEFAULT_SEEDS)]
        seeds: usize,
        /// Step along the image track, pixels.
        #[arg(long, default_value_t = ppa_core::contour::DEFAULT_STEP)]
        step: f64,
        /// Steps per direction from each seed.
        #[arg(long, default_value_t = contours::DEFAULT_MAX_STEPS)]
        max_steps: usize,
    },
    /// Merge reports; exits nonzero if any embedded check fails.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Single,
    Multi,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Opa,
    Ppa,
    Both,
}

#[derive(Args)]
struct Common {
    /// Dataset directory; a synthetic scene is rendered in memory when omitted.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModelArg::Both)]
    model: ModelArg,
    #[arg(long, default_value_t = 0.0)]
    noise_aolp_deg: f64,
    /// Intensity noise, fraction of the average intensity.
    #[arg(long, default_value_t = 0.0)]
    noise_intensity: f64,
    #[arg(long, default_value_t = ppa_core::polarization::DEFAULT_DOLP_THRESHOLD)]
    dolp_threshold: f64,
    #[arg(long, default_value_t = ppa_core::polarization::DEFAULT_BLUR_SIGMA)]
    blur_sigma: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Views of the in-memory scene used when no dataset is given.
    #[arg(long, default_value_t = 282)]
    scene_views: usize,
    #[arg(long, default_value_t = 640)]
    width: u32,
    #[arg(long, default_value_t = 480)]
    height: u32,
    #[arg(long, default_value_t = 86.6)]
    hfov_deg: f64,
}

impl Common {
    fn config(&self) -> EvalConfig {
        EvalConfig {
            dataset: self.dataset.clone(),
            model: match self.model {
                ModelArg::Opa => ModelSelection::Opa,
                ModelArg::Ppa => ModelSelection::Ppa,
                ModelArg::Both => ModelSelection::Both,
            },
            dolp_threshold: self.dolp_threshold,
            blur_sigma: self.blur_sigma,
            seed: self.seed,
            out: self.out.clone(),
            scene: SceneParams {
                width: self.width,
                height: self.height,
                hfov_deg: self.hfov_deg,
                views: self.scene_views,
                noise_aolp_deg: self.noise_aolp_deg,
                noise_intensity: self.noise_intensity,
                ..SceneParams::default()
            },
            ..EvalConfig::default()
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("PPA_NUM_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("PPA_NUM_THREADS={v:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn print_checks(report: &ErrorReport) {
    for c in &report.checks {
        let value = c.value.map_or("n/a".to_string(), |v| format!("{v:.6e}"));
        println!(
            "{} {}: {value} ({})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let report = match cli.command {
        Command::Synth { common, views } => {
            let mut config = common.config();
            config.scene.views = views;
            config.validate()?;
            let spec = config.scene.build(config.seed)?;
            write_dataset(&spec, &config.out)?;
            println!("wrote {views} views to {}", config.out.display());
            return Ok(());
        }
        Command::ModelAccuracy { common } => {
            let config = common.config();
            accuracy::run_and_write(&config, &config.source()?)?
        }
        Command::Estimate {
            common,
            views,
            trials,
            mode,
            sweep_max_k,
            condition_threshold,
        } => {
            let config = EvalConfig {
                views,
                trials,
                ..common.config()
            };
            let options = EstimateOptions {
                single_view: matches!(mode, Mode::Single | Mode::Both),
                multi_view: matches!(mode, Mode::Multi | Mode::Both),
                sweep_max_k,
                solve: SolveOptions {
                    condition_threshold,
                    ..SolveOptions::default()
                },
            };
            estimate::run_and_write(&config, &config.source()?, &options)?
        }
        Command::Contours {
            common,
            seeds,
            step,
            max_steps,
        } => {
            let config = common.config();
            config.validate()?;
            let source = match &config.dataset {
                Some(_) => config.source()?,
                None => SceneSource::Memory(contours::contour_scene(&config)?),
            };
            let options = ContourOptions {
                seeds,
                step,
                max_steps,
            };
            contours::run_and_write(&config, &source, &options)?
        }
        Command::Report { inputs, out } => {
            let reports = inputs
                .iter()
                .map(|p| ErrorReport::read(p).with_context(|| format!("reading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let merged = report::merge(&reports)?;
            merged.write(&out, "report")?;
            print_checks(&merged);
            if !merged.all_passed() {
                bail!(
                    "{} of {} checks failed",
                    merged.checks.iter().filter(|c| !c.passed).count(),
                    merged.checks.len()
                );
            }
            return Ok(());
        }
    };
    print_checks(&report);
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
