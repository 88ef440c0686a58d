use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use kfreg::cli::{self, metrics_markdown, validate_config, RunOptions};
use kfreg::curve::{build_curve, Scalarization};
use kfreg::error::{Error, Result};
use kfreg::sgd::Trajectory;

#[derive(Parser)]
#[command(name = "kfreg", version, about = "SGD + Kalman consolidated linear regression experiments")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write its report and plot data.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for candidate training.
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Parse and range-check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Rebuild a weight-versus-loss curve CSV from a trajectory CSV.
    Curves {
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ScalarizationArg::Norm)]
        scalarization: ScalarizationArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalarizationArg {
    Norm,
    First,
    Mean,
}

impl From<ScalarizationArg> for Scalarization {
    fn from(a: ScalarizationArg) -> Self {
        match a {
            ScalarizationArg::Norm => Scalarization::Norm,
            ScalarizationArg::First => Scalarization::First,
            ScalarizationArg::Mean => Scalarization::Mean,
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            out,
            parallel,
        } => {
            let cfg = validate_config(&config)?;
            let dir = out.clone().unwrap_or_else(|| cfg.output_dir.clone());
            let options = RunOptions {
                parallel,
                output_dir: out,
            };
            let report = cli::run_experiment(&cfg, &options)?;
            let sel = &report.selection;
            println!(
                "optimal candidate: {} (area {:.6})",
                sel.optimal_id, sel.min_area
            );
            print!("{}", metrics_markdown(&report));
            for f in &report.failures {
                eprintln!("warning: {} failed: {}", f.id, f.error);
            }
            println!("artifacts written to {}", dir.display());
        }
        Command::Validate { config } => {
            let cfg = validate_config(&config)?;
            println!(
                "ok: {} candidate(s), {} baseline(s), digest {}",
                cfg.candidates.len(),
                cfg.baselines.len(),
                cfg.digest()
            );
        }
        Command::Curves {
            from,
            out,
            scalarization,
        } => {
            let file = File::open(&from).map_err(|e| Error::Io {
                path: from.clone(),
                source: e,
            })?;
            let trajectory = Trajectory::read_csv(file)?;
            let id = from
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let curve = build_curve(&trajectory, id, scalarization.into())?;
            let file = File::create(&out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            curve.write_csv(file)?;
            println!(
                "{} points, area {:.6} -> {}",
                curve.points().len(),
                kfreg::curve::auc_trapezoid(&curve),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args.command) {
        Ok(()) => ExitCode::from(cli::EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
