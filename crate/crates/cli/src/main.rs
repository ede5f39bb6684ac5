use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use heatlab_cli::run::{
    classify_report, field_csv, ground_state_report, run_experiment, to_json, verify_csv, verify_rows, write_atomic,
};
use heatlab_cli::sweep::{sweep, Axis};
use heatlab_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "heatlab", version, about = "Semilinear heat equation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (flat TOML).
    config: PathBuf,
    /// Output directory; overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for random probes; overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write trajectory.csv, summary.json, constants.json.
    Solve(Common),
    /// Variational constants by both routes plus the extremal profile.
    GroundState(Common),
    /// Place the initial datum relative to the stable and unstable sets.
    Classify(Common),
    /// Semigroup decay, Gaussian-bound and space-time checks as CSV.
    Verify(Common),
    /// One run per axis value, in parallel, plus sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `key=v1,v2,...`
        #[arg(long)]
        axis: String,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config { key: "threads".into(), message: e.to_string() })?;
    }
    Ok(cfg)
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Solve(common) => {
            let cfg = load(&common)?;
            let s = run_experiment(&cfg)?;
            println!("{} (t_final {}, halt {:?}) -> {}", s.verdict.label(), s.t_final, s.halt, cfg.out_dir.display());
        }
        Command::GroundState(common) => {
            let cfg = load(&common)?;
            let (doc, profile) = ground_state_report(&cfg)?;
            let json = to_json(&doc);
            write_atomic(&cfg.out_dir, "ground_state.json", json.as_bytes())?;
            write_atomic(&cfg.out_dir, "extremal.csv", field_csv(&profile).as_bytes())?;
            print!("{json}");
        }
        Command::Classify(common) => {
            let cfg = load(&common)?;
            let json = to_json(&classify_report(&cfg)?);
            write_atomic(&cfg.out_dir, "classification.json", json.as_bytes())?;
            print!("{json}");
        }
        Command::Verify(common) => {
            let cfg = load(&common)?;
            let csv = verify_csv(&verify_rows(&cfg)?);
            write_atomic(&cfg.out_dir, "verify.csv", csv.as_bytes())?;
            print!("{csv}");
        }
        Command::Sweep { common, axis } => {
            let cfg = load(&common)?;
            let axis = Axis::parse(&axis)?;
            for row in sweep(&cfg, &axis)? {
                match (row.verdict(), &row.error) {
                    (Some(v), _) => println!("{}={}: {}", axis.key, row.value, v.label()),
                    (None, e) => println!("{}={}: failed: {}", axis.key, row.value, e.as_deref().unwrap_or("")),
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
