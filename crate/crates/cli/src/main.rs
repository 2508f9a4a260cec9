use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use jointsync::artifacts::read_angles;
use jointsync::config::parse_override;
use jointsync::plot::render_svg;
use jointsync::synth::{read_scene_spec, scene_spec, synthesize, Preset};
use jointsync::{ConfigError, Pipeline, PipelineConfig, RunOptions, Stage};
use serde_json::Value;

#[derive(Parser)]
#[command(
    name = "jointsync",
    version,
    about = "Joint angles from two unsynchronized, uncalibrated videos"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline: preproc, sync, track, lift, angles, metrics.
    Run {
        #[command(flatten)]
        common: Common,
        /// Run only these stages (repeatable).
        #[arg(long, value_enum)]
        stage: Vec<Stage>,
    },
    /// Synchronize frame clocks and pair the views.
    Sync(Common),
    /// Track the subject in both views.
    Track(Common),
    /// Reconstruct 3D joints.
    Lift(Common),
    /// Compute joint-angle series.
    Angles(Common),
    /// Plot an angle series, optionally against a reference.
    Plot {
        /// Estimated series, `timestamp_ms,angle_deg` CSV
        #[arg(long)]
        angles: PathBuf,
        /// Reference series in the same format, drawn in red
        #[arg(long)]
        reference: Option<PathBuf>,
        /// SVG output path
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "")]
        title: String,
    },
    /// Write a synthetic two-camera scene with fixtures and a config.
    Synthgen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "clean")]
        preset: Preset,
        /// Scene spec JSON, replacing the preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Scene spec override `key=value` (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
}

#[derive(Args)]
struct Common {
    /// Pipeline config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Config override `key=value`, dotted keys (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Use recorded agent replies from this directory.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Output directory, replacing the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip stages whose outputs already exist and parse.
    #[arg(long)]
    resume: bool,
}

enum Failure {
    Config(anyhow::Error),
    Stage(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.into())
    }
}

fn overrides(sets: &[String]) -> Result<Vec<(String, Value)>, ConfigError> {
    sets.iter().map(|s| parse_override(s)).collect()
}

fn load(common: &Common) -> Result<PipelineConfig, ConfigError> {
    let mut config = PipelineConfig::load(&common.config, &overrides(&common.sets)?)?;
    if let Some(dir) = &common.fixtures {
        config.use_fixtures(dir.clone());
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn run_pipeline(common: &Common, stages: Vec<Stage>) -> Result<(), Failure> {
    let config = load(common)?;
    let options = RunOptions {
        stages,
        resume: common.resume,
    };
    Pipeline::new(&config)
        .run(&options)
        .map(|_| ())
        .map_err(|e| Failure::Stage(e.into()))
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { common, stage } => run_pipeline(&common, stage),
        Command::Sync(c) => run_pipeline(&c, vec![Stage::Sync]),
        Command::Track(c) => run_pipeline(&c, vec![Stage::Track]),
        Command::Lift(c) => run_pipeline(&c, vec![Stage::Lift]),
        Command::Angles(c) => run_pipeline(&c, vec![Stage::Angles]),
        Command::Plot {
            angles,
            reference,
            out,
            title,
        } => {
            let plot = || -> anyhow::Result<()> {
                let est = read_angles(&angles)?;
                let reference = reference.as_deref().map(read_angles).transpose()?;
                let svg = render_svg(&est, reference.as_deref(), &title)?;
                std::fs::write(&out, svg).with_context(|| format!("writing {}", out.display()))
            };
            plot().map_err(Failure::Stage)
        }
        Command::Synthgen {
            out,
            preset,
            spec,
            seed,
            sets,
        } => {
            let base = match &spec {
                Some(path) => read_scene_spec(path).map_err(Failure::Config)?,
                None => preset.spec(),
            };
            let spec = scene_spec(base, seed, &overrides(&sets)?).map_err(Failure::Config)?;
            let config = synthesize(&spec, &out).map_err(Failure::Stage)?;
            println!("{}", config.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
