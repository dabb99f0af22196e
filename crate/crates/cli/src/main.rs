use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fieldspace_cli::commands::{self, CheckParams, CliError, Outcome, Suite};

/// Field-space calculus on model files.
#[derive(Debug, Parser)]
#[command(name = "fieldspace", version)]
struct Cli {
    /// Emit line-delimited JSON records instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Euler–Lagrange equations of the model's Lagrangian.
    El { file: PathBuf },
    /// Action of a plot over a box.
    Action {
        file: PathBuf,
        #[arg(long)]
        plot: PathBuf,
        /// Bounds `a,b` (every coordinate) or `a1,b1,a2,b2,...`.
        #[arg(long = "box")]
        bounds: Option<String>,
    },
    /// First variation of the action along a variation plot.
    Variation {
        file: PathBuf,
        #[arg(long)]
        plot: PathBuf,
        #[arg(long)]
        delta: PathBuf,
        #[arg(long = "box")]
        bounds: Option<String>,
    },
    /// Whether a plot solves the Euler–Lagrange equations.
    Critical {
        file: PathBuf,
        #[arg(long)]
        plot: PathBuf,
    },
    /// Smallest odd probe order on which the Lagrangian is nontrivial.
    OddOrder {
        file: PathBuf,
        #[arg(long, default_value_t = 4)]
        max: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Randomized verification suites.
    Check {
        file: PathBuf,
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Relative tolerance of the finite-difference oracle.
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        /// Grid spacing of the discretized action.
        #[arg(long = "grid-h", default_value_t = 1e-2)]
        grid_h: f64,
        /// Step of the central difference along the variation.
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
    },
    /// Simplicial identities and horn filling on a truncation in JSON.
    Kan {
        file: PathBuf,
        /// `n,k` followed by the faces, as labels or indices.
        #[arg(long)]
        horn: Option<String>,
        /// Additional face, for labels containing commas.
        #[arg(long)]
        face: Vec<String>,
        /// List every filler instead of the first.
        #[arg(long)]
        all: bool,
    },
    /// Builds the groupoid declared in a model and checks it.
    Groupoid {
        file: PathBuf,
        /// Top level of the nerve for gauge groupoids.
        #[arg(long, default_value_t = 3)]
        dim: usize,
        /// Write the truncation as JSON for `kan`.
        #[arg(long)]
        emit: Option<PathBuf>,
    },
    /// Taylor polynomial through the infinitesimal disk.
    Taylor {
        #[arg(long)]
        expr: String,
        #[arg(long)]
        at: String,
        #[arg(long)]
        order: u32,
        #[arg(long, default_value = "x")]
        var: String,
    },
}

fn workers() -> Result<(), String> {
    let Ok(v) = std::env::var("FIELDSPACE_WORKERS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("FIELDSPACE_WORKERS must be a positive integer, found `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(cmd: Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::El { file } => commands::el(&file),
        Command::Action { file, plot, bounds } => commands::action(&file, &plot, bounds.as_deref()),
        Command::Variation {
            file,
            plot,
            delta,
            bounds,
        } => commands::variation(&file, &plot, &delta, bounds.as_deref()),
        Command::Critical { file, plot } => commands::critical(&file, &plot),
        Command::OddOrder { file, max, seed } => commands::odd_order(&file, max, seed),
        Command::Check {
            file,
            suite,
            seed,
            samples,
            tolerance,
            grid_h,
            step,
        } => {
            if !(grid_h > 0.0 && grid_h <= 1.0 && step > 0.0 && tolerance > 0.0) {
                return Err(CliError::Usage("--grid-h must lie in (0, 1]; --step and --tolerance must be positive".into()));
            }
            commands::check(
                &file,
                suite,
                CheckParams {
                    seed,
                    samples,
                    tolerance,
                    grid_h,
                    step,
                },
            )
        }
        Command::Kan { file, horn, face, all } => commands::kan(&file, horn.as_deref(), &face, all),
        Command::Groupoid { file, dim, emit } => commands::groupoid(&file, dim, emit.as_deref()),
        Command::Taylor { expr, at, order, var } => commands::taylor(&expr, &at, order, &var),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = workers() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(out) => {
            if cli.json {
                for r in &out.records {
                    println!("{r}");
                }
            } else {
                for l in &out.human {
                    println!("{l}");
                }
            }
            if out.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
