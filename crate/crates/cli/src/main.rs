//! `sif`: fit, inspect, and evaluate structured implicit shapes from the
//! command line. Every subcommand is deterministic for a fixed seed.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sif_core::{
    DEFAULT_EXTRACTION_RESOLUTION, DEFAULT_INFLUENCE_EPSILON, DEFAULT_ISOLEVEL,
    DEFAULT_MIN_COMPONENT_AREA, DEFAULT_TRUNCATION,
};

use commands::{EvalOptions, ExtractOptions, FitOptions, SampleOptions};
use config::Settings;

#[derive(Parser)]
#[command(name = "sif", version, about = "Structured implicit functions toolkit")]
struct Cli {
    /// key=value file supplying defaults; explicit flags win
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Master seed for every random draw
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Progress notes on stderr
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SampleArgs {
    /// Voxel cells per axis for inside/outside labeling
    #[arg(long)]
    resolution: Option<usize>,

    /// Extra empty cell layers around the voxel domain
    #[arg(long)]
    padding: Option<usize>,

    /// Samples per set (uniform, surface, near-surface)
    #[arg(long)]
    count: Option<usize>,

    /// Near-surface band half-width
    #[arg(long)]
    truncation: Option<f64>,

    /// Write plain-text sample files instead of binary
    #[arg(long)]
    text: bool,
}

#[derive(Args)]
struct FitArgs {
    /// Number of shape elements
    #[arg(long)]
    elements: Option<usize>,

    /// Optimization steps
    #[arg(long)]
    steps: Option<usize>,

    /// Initial learning rate
    #[arg(long)]
    lr: Option<f64>,

    /// Final learning rate of the cosine schedule
    #[arg(long)]
    lr_final: Option<f64>,

    /// Adam first-moment decay
    #[arg(long)]
    beta1: Option<f64>,

    /// Adam second-moment decay
    #[arg(long)]
    beta2: Option<f64>,

    /// Adam denominator epsilon
    #[arg(long)]
    adam_eps: Option<f64>,

    /// Uniform samples per step
    #[arg(long)]
    batch_uniform: Option<usize>,

    /// Near-surface samples per step
    #[arg(long)]
    batch_surface: Option<usize>,

    /// Trace row every this many steps
    #[arg(long)]
    log_every: Option<usize>,

    /// Sigmoid sharpness of the soft classifier
    #[arg(long)]
    alpha: Option<f64>,

    /// Extra weight on misclassified inside points
    #[arg(long)]
    beta: Option<f64>,

    /// Weight of the uniform classification term
    #[arg(long)]
    w_uniform: Option<f64>,

    /// Weight of the near-surface classification term
    #[arg(long)]
    w_surface: Option<f64>,

    /// Center-containment weight inside the shape box
    #[arg(long)]
    w_center_inside: Option<f64>,

    /// Center-containment weight outside the shape box
    #[arg(long)]
    w_center_outside: Option<f64>,

    /// Level-set threshold the template stores
    #[arg(long)]
    isolevel: Option<f64>,
}

#[derive(Args)]
struct ExtractArgs {
    /// Marching-cubes grid resolution
    #[arg(long)]
    res: Option<usize>,

    /// Per-element influence cutoff (0 disables culling)
    #[arg(long)]
    epsilon: Option<f64>,

    /// Drop connected components with less surface area
    #[arg(long)]
    min_area: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Voxelize a mesh and emit labeled training samples
    Sample {
        /// Input OBJ mesh
        mesh: PathBuf,
        /// Output directory
        out_dir: PathBuf,
        #[command(flatten)]
        args: SampleArgs,
    },
    /// Fit a template to a sample directory
    Fit {
        /// Directory produced by `sample`
        sample_dir: PathBuf,
        /// Output template path
        #[arg(long, default_value = "template.json")]
        out: PathBuf,
        /// Loss trace CSV (default: alongside the template)
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        args: FitArgs,
    },
    /// Extract the level-set mesh of a template
    Extract {
        /// Input template JSON
        template: PathBuf,
        /// Output OBJ path
        #[arg(long, default_value = "mesh.obj")]
        out: PathBuf,
        /// Override the template's stored isolevel
        #[arg(long)]
        isolevel: Option<f64>,
        #[command(flatten)]
        args: ExtractArgs,
    },
    /// Match source vertices to destination vertices via template coordinates
    Correspond {
        /// Source mesh (OBJ)
        src_mesh: PathBuf,
        /// Source template JSON
        src_template: PathBuf,
        /// Destination mesh (OBJ)
        dst_mesh: PathBuf,
        /// Destination template JSON
        dst_template: PathBuf,
        /// Output CSV path
        #[arg(long, default_value = "correspondence.csv")]
        out: PathBuf,
        /// Coordinate magnitude channel: per-element or total-field
        #[arg(long)]
        magnitude: Option<String>,
    },
    /// Blend templates with convex weights
    Interpolate {
        /// Input template JSON files
        #[arg(required = true)]
        templates: Vec<PathBuf>,
        /// Comma-separated weights, one per template, summing to 1
        #[arg(long)]
        weights: String,
        /// Output template path
        #[arg(long, default_value = "interpolated.json")]
        out: PathBuf,
    },
    /// Print the F-score between two meshes (0..100)
    Eval {
        /// Predicted mesh (OBJ)
        pred: PathBuf,
        /// Ground-truth mesh (OBJ)
        gt: PathBuf,
        /// Squared-distance threshold for a point to count as matched
        #[arg(long)]
        tau: Option<f64>,
        /// Points sampled per mesh
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Run sample, fit, and extract end to end
    Pipeline {
        /// Input OBJ mesh
        mesh: PathBuf,
        /// Output directory
        out_dir: PathBuf,
        #[command(flatten)]
        sample: SampleArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        extract: ExtractArgs,
    },
}

fn sample_options(
    args: &SampleArgs,
    settings: &Settings,
    seed: u64,
    verbose: bool,
) -> anyhow::Result<SampleOptions> {
    Ok(SampleOptions {
        resolution: settings.resolve(args.resolution, "resolution", 128)?,
        padding: settings.resolve(args.padding, "padding", 2)?,
        count: settings.resolve(args.count, "count", 100_000)?,
        truncation: settings.resolve(args.truncation, "truncation", DEFAULT_TRUNCATION)?,
        text: settings.resolve_switch(args.text, "text")?,
        seed,
        verbose,
    })
}

fn fit_options(
    args: &FitArgs,
    settings: &Settings,
    seed: u64,
    verbose: bool,
) -> anyhow::Result<FitOptions> {
    Ok(FitOptions {
        elements: settings.resolve(args.elements, "elements", 100)?,
        steps: settings.resolve(args.steps, "steps", 5000)?,
        lr: settings.resolve(args.lr, "lr", 1e-2)?,
        lr_final: settings.resolve(args.lr_final, "lr-final", 1e-4)?,
        beta1: settings.resolve(args.beta1, "beta1", 0.9)?,
        beta2: settings.resolve(args.beta2, "beta2", 0.999)?,
        adam_eps: settings.resolve(args.adam_eps, "adam-eps", 1e-8)?,
        batch_uniform: settings.resolve(args.batch_uniform, "batch-uniform", 3000)?,
        batch_surface: settings.resolve(args.batch_surface, "batch-surface", 3000)?,
        log_every: settings.resolve(args.log_every, "log-every", 100)?,
        seed,
        isolevel: settings.resolve(args.isolevel, "isolevel", DEFAULT_ISOLEVEL)?,
        alpha: settings.resolve(args.alpha, "alpha", 100.0)?,
        beta: settings.resolve(args.beta, "beta", 10.0)?,
        w_uniform: settings.resolve(args.w_uniform, "w-uniform", 1.0)?,
        w_surface: settings.resolve(args.w_surface, "w-surface", 0.1)?,
        w_center_inside: settings.resolve(args.w_center_inside, "w-center-inside", 10.0 / 3.0)?,
        w_center_outside: settings.resolve(args.w_center_outside, "w-center-outside", 0.01)?,
        verbose,
    })
}

fn extract_options(
    args: &ExtractArgs,
    isolevel: Option<f64>,
    settings: &Settings,
    verbose: bool,
) -> anyhow::Result<ExtractOptions> {
    Ok(ExtractOptions {
        res: settings.resolve(args.res, "res", DEFAULT_EXTRACTION_RESOLUTION)?,
        epsilon: settings.resolve(args.epsilon, "epsilon", DEFAULT_INFLUENCE_EPSILON)?,
        min_area: settings.resolve(args.min_area, "min-area", DEFAULT_MIN_COMPONENT_AREA)?,
        isolevel,
        verbose,
    })
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let settings = Settings::load(cli.config.as_deref())?;
    let seed = settings.resolve(cli.seed, "seed", 0)?;
    let threads = settings.resolve(cli.threads, "threads", 0)?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| sif_core::Error::InvalidInput(format!("thread pool: {e}")))?;
    }
    let verbose = cli.verbose;

    match &cli.command {
        Command::Sample { mesh, out_dir, args } => {
            let opts = sample_options(args, &settings, seed, verbose)?;
            commands::cmd_sample(mesh, out_dir, &opts)
        }
        Command::Fit { sample_dir, out, trace, args } => {
            let opts = fit_options(args, &settings, seed, verbose)?;
            commands::cmd_fit(sample_dir, out, trace.as_deref(), &opts)
        }
        Command::Extract { template, out, isolevel, args } => {
            let iso = settings.resolve_opt(*isolevel, "isolevel")?;
            let opts = extract_options(args, iso, &settings, verbose)?;
            commands::cmd_extract(template, out, &opts)
        }
        Command::Correspond {
            src_mesh,
            src_template,
            dst_mesh,
            dst_template,
            out,
            magnitude,
        } => {
            let raw = settings.resolve(
                magnitude.clone(),
                "magnitude",
                "per-element".to_string(),
            )?;
            let magnitude = commands::parse_magnitude(&raw)?;
            commands::cmd_correspond(
                src_mesh,
                src_template,
                dst_mesh,
                dst_template,
                out,
                magnitude,
                verbose,
            )
        }
        Command::Interpolate { templates, weights, out } => {
            let weights = config::parse_weights(weights)?;
            commands::cmd_interpolate(templates, &weights, out)
        }
        Command::Eval { pred, gt, tau, samples } => {
            let opts = EvalOptions {
                tau: settings.resolve(*tau, "tau", 1e-4)?,
                samples: settings.resolve(*samples, "samples", 100_000)?,
                seed,
            };
            commands::cmd_eval(pred, gt, &opts)
        }
        Command::Pipeline { mesh, out_dir, sample, fit, extract } => {
            let sample_opts = sample_options(sample, &settings, seed, verbose)?;
            let fit_opts = fit_options(fit, &settings, seed, verbose)?;
            let extract_opts = extract_options(extract, None, &settings, verbose)?;
            commands::cmd_pipeline(mesh, out_dir, &sample_opts, &fit_opts, &extract_opts)
        }
    }
}

/// 0 success, 2 bad input, 3 I/O, 4 malformed file, 5 numerical failure,
/// 1 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    use sif_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::InvalidInput(_) | E::Mismatch(_) => 2,
                E::Io { .. } => 3,
                E::Parse { .. }
                | E::Version { .. }
                | E::EmptyMesh
                | E::ZeroExtent
                | E::ZeroArea
                | E::NoInsideCells => 4,
                E::NonFinite { .. } | E::RetryBudget { .. } => 5,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            for cause in err.chain().skip(1) {
                eprintln!("  caused by: {cause}");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
