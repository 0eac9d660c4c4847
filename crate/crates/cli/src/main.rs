//! Single-binary pipeline driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use surfmap_cli::commands::{self, EvalArgs, ExportArgs, ExportWhat, RenderArgs};
use surfmap_cli::config::RunConfig;
use surfmap_cli::error::CliError;

#[derive(Parser)]
#[command(
    name = "surfmap",
    about = "Parameterize implicit surfaces onto sphere/polycube domains; bake, edit and re-render textures",
    version = version_string()
)]
struct Cli {
    /// Worker threads (1 = fully deterministic mode).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

fn version_string() -> &'static str {
    concat!(
        env!("CARGO_PKG_VERSION"),
        " (checkpoint format v1)"
    )
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-view dataset for every scene object.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the training pipeline (two-phase image mode or geometry mode).
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue phase C from a checkpoint stem.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Export meshes, metrics or textures from a checkpoint.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        what: String,
        #[arg(long)]
        object: Option<String>,
        #[arg(long, default_value_t = 64)]
        resolution: u32,
        #[arg(long, default_value_t = 256)]
        texture_width: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a single frame, honoring edit flags.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        object: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Camera file, optionally with :INDEX suffix.
        #[arg(long)]
        camera: Option<String>,
        #[arg(long)]
        resolution: Option<u32>,
        #[arg(long, default_value_t = 64)]
        samples_per_ray: usize,
        /// Atlas directory used as the material source.
        #[arg(long)]
        texture_override: Option<PathBuf>,
        /// Take the shading code from another object.
        #[arg(long)]
        shading_from: Option<String>,
        /// Replace the parametric domain from a domain file.
        #[arg(long)]
        domain: Option<PathBuf>,
    },
    /// PSNR on held-out views plus chamfer distance against analytic truth.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated held-out view indices.
        #[arg(long, value_delimiter = ',')]
        heldout: Vec<usize>,
        #[arg(long)]
        object: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        samples_per_ray: usize,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::usage(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::GenData { config, out } => {
            let cfg = RunConfig::load(&config)?;
            commands::cmd_gen_data(&cfg, out.as_deref())
        }
        Command::Train { config, resume } => {
            let cfg = RunConfig::load(&config)?;
            commands::cmd_train(&cfg, resume.as_deref())
        }
        Command::Export {
            checkpoint,
            what,
            object,
            resolution,
            texture_width,
            out,
        } => {
            let what: ExportWhat = what.parse().map_err(CliError::usage)?;
            commands::cmd_export(&ExportArgs {
                checkpoint: &checkpoint,
                what,
                object: object.as_deref(),
                resolution,
                texture_width,
                out: out.as_deref(),
            })
        }
        Command::Render {
            checkpoint,
            object,
            out,
            camera,
            resolution,
            samples_per_ray,
            texture_override,
            shading_from,
            domain,
        } => commands::cmd_render(&RenderArgs {
            checkpoint: &checkpoint,
            object: object.as_deref(),
            out: &out,
            camera: camera.as_deref(),
            resolution,
            samples_per_ray,
            texture_override: texture_override.as_deref(),
            shading_from: shading_from.as_deref(),
            domain: domain.as_deref(),
        }),
        Command::Eval {
            checkpoint,
            dataset,
            heldout,
            object,
            out,
            samples_per_ray,
        } => commands::cmd_eval(&EvalArgs {
            checkpoint: &checkpoint,
            dataset: &dataset,
            heldout,
            object: object.as_deref(),
            out: out.as_deref(),
            samples_per_ray,
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind.code())
        }
    }
}
