//! Command-line entry point for the video augmentation pipeline.

mod commands;
mod config;
mod runs;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use vfxaug::pipeline::AblationMode;
use vfxaug::planner::PlannerKind;

use crate::commands::{Ctx, EditArgs, EvalArgs};
use crate::config::AppConfig;

#[derive(Parser, Debug)]
#[command(name = "vfxaug", version, about = "Insert new dynamic content into videos with a toy video diffusion transformer")]
struct Cli {
    /// TOML configuration file; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every seeded stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overwrite an existing run directory.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the synthetic corpus with ground-truth masks.
    CorpusGen,
    /// Train the toy video diffusion transformer.
    Train {
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Invert a corpus scene and cache its attention keys/values.
    Invert {
        #[arg(long)]
        scene: String,
    },
    /// Run the full edit on an inverted scene.
    Edit {
        #[arg(long)]
        scene: String,
        /// Overrides the scene's stored instruction.
        #[arg(long)]
        instruction: Option<String>,
        #[arg(long)]
        planner: Option<PlannerKind>,
    },
    /// Run one ablation mode or baseline on an inverted scene.
    Ablate {
        #[arg(long)]
        scene: String,
        #[arg(long)]
        mode: AblationMode,
        #[arg(long)]
        instruction: Option<String>,
        #[arg(long)]
        planner: Option<PlannerKind>,
        /// SDEdit strength override for the SDEdit modes.
        #[arg(long)]
        strength: Option<f64>,
    },
    /// Score an edited frame sequence against its source.
    Eval {
        /// Run name under `runs/eval/`.
        #[arg(long)]
        name: String,
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        edited: PathBuf,
        /// Mask frames excluded from the SSIM.
        #[arg(long)]
        exclude: Option<PathBuf>,
        #[arg(long)]
        prompt: String,
        #[arg(long, default_value = "a scene")]
        source_prompt: String,
        #[arg(long)]
        object: String,
    },
    /// Aggregate every run report into one table.
    Report,
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    };
    if let Some(s) = cli.seed {
        config = config.with_seed(s);
    }
    let ctx = Ctx {
        config,
        force: cli.force,
    };
    match &cli.command {
        Command::CorpusGen => commands::corpus_gen(&ctx),
        Command::Train { steps } => commands::train(&ctx, *steps),
        Command::Invert { scene } => commands::invert(&ctx, scene),
        Command::Edit {
            scene,
            instruction,
            planner,
        } => commands::edit(
            &ctx,
            &EditArgs {
                scene,
                mode: AblationMode::Full,
                instruction: instruction.as_deref(),
                planner: *planner,
                strength: None,
            },
        ),
        Command::Ablate {
            scene,
            mode,
            instruction,
            planner,
            strength,
        } => commands::edit(
            &ctx,
            &EditArgs {
                scene,
                mode: *mode,
                instruction: instruction.as_deref(),
                planner: *planner,
                strength: *strength,
            },
        ),
        Command::Eval {
            name,
            original,
            edited,
            exclude,
            prompt,
            source_prompt,
            object,
        } => commands::eval(
            &ctx,
            &EvalArgs {
                name,
                original,
                edited,
                exclude: exclude.as_deref(),
                prompt,
                source_prompt,
                object,
            },
        ),
        Command::Report => commands::report(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = runs::category(&e);
            eprintln!("error: {e:#}");
            eprintln!("error-category: {category}");
            ExitCode::from(runs::exit_code(category) as u8)
        }
    }
}
