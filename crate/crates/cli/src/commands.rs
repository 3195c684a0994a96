use std::path::Path;

use stepwise_core::domain::VideoRecord;
use stepwise_core::erasion::mine;
use stepwise_core::eval::EvalConfig;
use stepwise_core::io::{
    ablation_csv, write_atomic, GroundTruthFile, MetricsFile, ResultsFile, ScoreFile, TraceFile, WorldFile,
};
use stepwise_core::pipeline::{ablate, detect_all, evaluate, simulate, step_plan, with_jobs, PipelineConfig};
use stepwise_core::provider::ScoreProvider;
use stepwise_core::sim::Simulator;
use stepwise_core::Error;

use crate::config::{existing, ConfigFile};
use crate::{Cli, Command, Overrides, Result, Source};

pub fn run(cli: Cli) -> Result<()> {
    let jobs = cli.overrides.jobs;
    with_jobs(jobs, move || dispatch(cli.command, &cli.overrides))?
}

fn settings(config: Option<&Path>, overrides: &Overrides) -> Result<ConfigFile> {
    let mut file = ConfigFile::load_or_default(config)?;
    overrides.apply(&mut file.pipeline)?;
    file.sweep.validate()?;
    Ok(file)
}

#[allow(clippy::large_enum_variant)]
enum Input {
    World(WorldFile),
    Scores(ScoreFile),
}

impl Input {
    fn load(source: &Source) -> Result<Self> {
        match (&source.world, &source.scores) {
            (Some(w), None) => Ok(Input::World(WorldFile::load(&existing(w)?)?)),
            (None, Some(s)) => Ok(Input::Scores(ScoreFile::load(&existing(s)?)?)),
            _ => Err(Error::InvalidConfig("give exactly one of --world or --scores".into())),
        }
    }

    fn labels(&self) -> Vec<String> {
        match self {
            Input::World(w) => w.world.label_table.clone(),
            Input::Scores(s) => s.label_table.clone(),
        }
    }

    /// Runs `f` with the input's videos and score provider.
    fn with_provider<R>(&self, f: impl FnOnce(&[VideoRecord], &dyn ScoreProvider<f64>) -> Result<R>) -> Result<R> {
        match self {
            Input::World(w) => f(&w.world.records(), &Simulator::new(&w.world)),
            Input::Scores(s) => {
                let (records, provider) = s.provider()?;
                f(&records, &provider)
            }
        }
    }
}

fn dispatch(command: Command, overrides: &Overrides) -> Result<()> {
    match command {
        Command::Simulate { config, out, gt } => {
            let cfg = settings(config.as_deref(), overrides)?.pipeline;
            let world = simulate(&cfg.world)?;
            if let Some(gt) = gt {
                GroundTruthFile::from_world(&world)?.save(&gt)?;
            }
            WorldFile::new(world).save(&out)
        }
        Command::Mine { config, source, out } => {
            let mut cfg = settings(config.as_deref(), overrides)?.pipeline;
            let input = Input::load(&source)?;
            if let Input::World(w) = &input {
                cfg.world = w.world.config.clone();
            }
            let mined = input.with_provider(|videos, provider| mine(videos, provider, &cfg.erasion))?;
            TraceFile::new(cfg, mined.trace, &mined.handles).save(&out)
        }
        Command::Detect {
            config,
            source,
            trace,
            steps,
            out,
        } => {
            let trace = TraceFile::load(&existing(&trace)?)?;
            let mut cfg = match &config {
                Some(_) => settings(config.as_deref(), &Overrides::default())?.pipeline,
                None => trace.params.clone(),
            };
            overrides.apply(&mut cfg)?;
            if steps.is_some() {
                cfg.steps = steps;
            }
            cfg.validate()?;
            let input = Input::load(&source)?;
            if let Input::World(w) = &input {
                cfg.world = w.world.config.clone();
            }
            let labels = input.labels();
            let (videos, detections) = input.with_provider(|videos, provider| {
                let handles = trace.restore(videos)?;
                let plan = step_plan(&trace.trace, provider.n_classes(), handles.len(), cfg.steps)?;
                let dets = detect_all(provider, videos, &handles, &plan, &cfg.detect_options())?;
                Ok((videos.to_vec(), dets))
            })?;
            ResultsFile::new(cfg, labels, &videos, &detections)?.save(&out)
        }
        Command::Eval {
            config,
            results,
            gt,
            tiou,
            average,
            out,
            csv,
        } => {
            let results = ResultsFile::load(&existing(&results)?)?;
            let gt = load_ground_truth(&existing(&gt)?)?;
            results.validate_against(&gt)?;
            let mut params = match &config {
                Some(_) => settings(config.as_deref(), overrides)?.pipeline,
                None => results.params.clone(),
            };
            if tiou.is_some() || average {
                let grid = tiou.unwrap_or_else(|| params.eval.tiou_thresholds.clone());
                params.eval = EvalConfig::new(grid, average || params.eval.average)?;
            }
            let report = evaluate(&results.detections(), &gt.segments()?, &params.eval)?;
            let csv = csv.unwrap_or_else(|| out.with_extension("csv"));
            MetricsFile::new(params, gt.labels.clone(), report).save(&out, &csv)
        }
        Command::Ablate {
            config,
            world,
            sweep,
            out,
        } => {
            let mut file = settings(config.as_deref(), overrides)?;
            if let Some(p) = sweep {
                file.sweep = stepwise_core::io::read_versioned::<SweepFile>(&existing(&p)?, SweepFile::FORMAT)?.sweep;
                file.sweep.validate()?;
            }
            let world = WorldFile::load(&existing(&world)?)?.world;
            let cfg = PipelineConfig {
                world: world.config.clone(),
                ..file.pipeline
            };
            let rows = ablate(&world, &cfg, &file.sweep)?;
            write_atomic(&out, ablation_csv(&rows).as_bytes())
        }
    }
}

/// `{"format": "sweep", "version": 1, "sweep": {...}}`.
#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    #[allow(dead_code)]
    format: String,
    #[allow(dead_code)]
    version: u32,
    sweep: stepwise_core::pipeline::SweepSpec,
}

impl SweepFile {
    const FORMAT: &'static str = "sweep";
}

/// Accepts either a ground-truth file or a world file.
fn load_ground_truth(path: &Path) -> Result<GroundTruthFile> {
    let text = std::fs::read_to_string(path)?;
    let format = serde_json::from_str::<serde_json::Value>(&text)?
        .get("format")
        .and_then(|f| f.as_str().map(str::to_owned));
    match format.as_deref() {
        Some(WorldFile::FORMAT) => GroundTruthFile::from_world(&WorldFile::load(path)?.world),
        _ => GroundTruthFile::load(path),
    }
}
