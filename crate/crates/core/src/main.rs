use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use blowup::cli::verify::{verify, VerifyOptions};
use blowup::cli::{check_table, load_grid_field, run, run_with_field, Overrides, RunConfig, RunMode, RunReport, OUT_DIR_ENV};
use blowup::fields::SolutionField;
use blowup::Error;

/// Quadratic blow-ups of Δu = χ{|∇u|>0}: synthetic fields, grid solves and
/// log-scale diagnostics.
#[derive(Parser)]
#[command(name = "blowup", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a synthetic-field config.
    Synth(RunArgs),
    /// Solve on the grid, then run the scale sweep.
    Solve(RunArgs),
    /// Re-run the sweep and checks on a saved grid snapshot.
    Analyze {
        #[command(flatten)]
        run: RunArgs,
        /// Snapshot base path (`<base>.bin` and `<base>.mask.bin`).
        #[arg(long)]
        snapshot: PathBuf,
    },
    /// Run the bundled acceptance matrix.
    Verify {
        /// Output directory (flag > $BLOWUP_OUT_DIR > "verify-out").
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Replace k_max in every run.
        #[arg(long)]
        k_max: Option<usize>,
    },
}

/// Flags override the config file; `$BLOWUP_OUT_DIR` sits between them for
/// the output directory only.
#[derive(Args)]
struct RunArgs {
    /// JSON run config.
    config: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Output file stem.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    k_max: Option<usize>,
    /// Sampling seed; selects sampled integration.
    #[arg(long)]
    seed: Option<u64>,
    /// Samples per region; selects sampled integration.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Grid cells per axis (solve runs).
    #[arg(long)]
    cells: Option<usize>,
}

impl RunArgs {
    fn load(&self, mode: RunMode) -> Result<RunConfig, Error> {
        let mut cfg = RunConfig::from_file(&self.config)?;
        if cfg.mode != mode {
            return Err(Error::config(format!(
                "{} has mode {:?}; use the matching subcommand",
                self.config.display(),
                cfg.mode
            )));
        }
        cfg.apply(&Overrides {
            out_dir: self.out_dir.clone(),
            name: self.name.clone(),
            k_max: self.k_max,
            seed: self.seed,
            samples: self.samples,
            t_end: self.t_end,
            steps: self.steps,
            cells: self.cells,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn finish(report: &RunReport) -> ExitCode {
    print!("{}", check_table(&report.checks));
    for note in &report.notices {
        println!("notice: {note}");
    }
    println!(
        "wrote {} and {}.json in {}",
        report.csv,
        report.config.output.name,
        report.config.output.dir.display()
    );
    for (stage, secs) in &report.timings {
        eprintln!("{stage}: {secs:.3} s");
    }
    if report.passed {
        ExitCode::SUCCESS
    } else {
        let failed: Vec<&str> = report.failures().iter().map(|c| c.anchor.as_str()).collect();
        eprintln!("hard check failures: {}", failed.join(", "));
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => args.load(RunMode::Synth).and_then(|c| run(&c)).map(|r| finish(&r)),
        Command::Solve(args) => args.load(RunMode::Solve).and_then(|c| run(&c)).map(|r| finish(&r)),
        Command::Analyze { run: args, snapshot } => args.load(RunMode::Solve).and_then(|c| {
            let field: Arc<dyn SolutionField> = Arc::new(load_grid_field(&snapshot)?);
            run_with_field(&c, field, None).map(|r| finish(&r))
        }),
        Command::Verify { out_dir, k_max } => {
            let dir = out_dir
                .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("verify-out"));
            let options = VerifyOptions {
                k_max,
                ..VerifyOptions::default()
            };
            verify(&dir, &options).map(|report| {
                print!("{}", report.table());
                for (stage, secs) in &report.timings {
                    eprintln!("{stage}: {secs:.3} s");
                }
                if report.passed {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            })
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}
