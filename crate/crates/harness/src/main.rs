use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use orsa_core::ensemble::Mode;
use orsa_harness::config::{GenerateConfig, Overrides, SweepConfig, TrainConfig};
use orsa_harness::{files, lof_file, report, run, sweep, Error, Result};

#[derive(Parser)]
#[command(name = "orsa", version, about = "Outlier-robust stacked aggregation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Min,
    Max,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Min => Mode::SoftMin,
            ModeArg::Max => Mode::SoftMax,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (device CSVs + manifest.json).
    Generate {
        /// TOML generate config; the stock experiment when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the aggregation net on a dataset directory.
    Train {
        dataset: PathBuf,
        /// TOML train config, or a previous run's run.json to replay.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k_s: Option<usize>,
        #[arg(long)]
        k_lof: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Train one run per (k_s, k_lof) grid point.
    Sweep {
        dataset: PathBuf,
        /// TOML sweep config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated; with --k-lof replaces the config grid by the
        /// cartesian product.
        #[arg(long, value_delimiter = ',')]
        k_s: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        k_lof: Vec<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// LOF scores for a file with one number per line.
    Lof {
        input: PathBuf,
        #[arg(long)]
        k_lof: usize,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge a run's artifacts into report.json.
    Report {
        run: PathBuf,
        /// Report path; <run>/report.json when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Generate { config, seed, out } => {
            let mut cfg = match &config {
                Some(path) => GenerateConfig::load(path)?,
                None => GenerateConfig::reference(0),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let manifest = orsa_harness::generate(&cfg, &out)?;
            println!("wrote {} devices to {}", manifest.devices.len(), out.display());
        }
        Command::Train {
            dataset,
            config,
            seed,
            out,
            k_s,
            k_lof,
            mode,
        } => {
            let (mut cfg, checksum) = match &config {
                Some(path) => run::load_train_config(path)?,
                None => (TrainConfig::default(), None),
            };
            cfg.apply(&Overrides {
                seed,
                k_s,
                k_lof,
                mode: mode.map(Mode::from),
            });
            let manifest = run::train(&dataset, &cfg, checksum.as_deref(), &out)?;
            println!(
                "trained k_s={} k_lof={} for {} steps in {:.1}s; artifacts in {}",
                manifest.orsa.k_s,
                manifest.orsa.k_lof,
                manifest.orsa.steps,
                manifest.wall_clock_seconds,
                out.display()
            );
        }
        Command::Sweep {
            dataset,
            config,
            seed,
            out,
            k_s,
            k_lof,
            mode,
        } => {
            let mut cfg = match &config {
                Some(path) => SweepConfig::load(path)?,
                None => SweepConfig::default(),
            };
            if !k_s.is_empty() || !k_lof.is_empty() {
                if k_s.is_empty() || k_lof.is_empty() {
                    return Err(Error::invalid("--k-s and --k-lof must be given together"));
                }
                cfg.grid.clear();
                cfg.k_s = k_s;
                cfg.k_lof = k_lof;
            }
            let overrides = Overrides {
                seed,
                mode: mode.map(Mode::from),
                ..Overrides::default()
            };
            let manifest = sweep::sweep(&dataset, &cfg, &overrides, &out)?;
            for r in &manifest.rows {
                println!(
                    "k_s={:<3} k_lof={:<3} rmse_min={:.4} rmse_mean={:.4} rmse_oracle={:.4}",
                    r.k_s, r.k_lof, r.rmse_min, r.rmse_mean, r.rmse_oracle
                );
            }
        }
        Command::Lof { input, k_lof, out } => {
            let values = lof_file::read_column(&input)?;
            let scores = lof_file::scores(&values, k_lof)?;
            let bytes = lof_file::to_csv(&values, &scores);
            match out {
                Some(path) => files::write_bytes(&path, &bytes)?,
                None => std::io::stdout()
                    .write_all(&bytes)
                    .map_err(|source| Error::Io {
                        path: "<stdout>".into(),
                        source,
                    })?,
            }
        }
        Command::Report { run, out } => {
            let (_, path) = report::report(&run, out.as_deref())?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let reason = msg.split("\n\nUsage:").next().unwrap_or(&msg);
            eprintln!("error: usage: {}", files::single_line(reason.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.kind(), files::single_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
