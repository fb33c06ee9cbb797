use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semgkit_cli::benchmark::cmd_benchmark;
use semgkit_cli::commands::{cmd_evaluate, cmd_import, cmd_preprocess, cmd_report, cmd_synth, cmd_train};
use semgkit_cli::config::{Precision, RunConfig};
use semgkit_cli::data::output_dir;
use semgkit_cli::exit;

/// Long-term sEMG gesture recognition: synthesis, training, calibration
/// schemes and reports.
///
/// Settings come from a TOML file (--config); flags override the file, and
/// the file overrides built-in defaults. Exit codes: 0 success, 1 usage
/// error, 2 data error, 3 numerical fault. SEMGKIT_WORKERS sets the number
/// of parallel training jobs (default: available cores).
#[derive(Parser)]
#[command(name = "semgkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Common {
    /// TOML configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output`).
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Write into a non-empty output directory, overwriting files with the
    /// same names. Nothing else is deleted.
    #[arg(long)]
    force: bool,
    /// Canonical dataset directory (overrides `dataset.path`).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Comma-separated seeds (overrides `seeds`).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated schemes: no_calibration, recalibration,
    /// delayed_calibration, tadann (overrides `schemes`).
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    /// Comma-separated participant numbers (overrides `participants`).
    #[arg(long, value_delimiter = ',')]
    participants: Option<Vec<u32>>,
    /// Maximum training epochs (overrides `train.max_epochs`).
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Minibatch size (overrides `train.batch_size`).
    #[arg(long)]
    batch_size: Option<usize>,
    /// Initial Adam learning rate (overrides `train.lr`).
    #[arg(long)]
    lr: Option<f64>,
    /// Floating-point precision of training: f32 or f64.
    #[arg(long, value_parser = ["f32", "f64"])]
    precision: Option<String>,
}

impl Common {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        if let Some(o) = &self.output {
            cfg.output = Some(o.clone());
        }
        if let Some(d) = &self.dataset {
            cfg.dataset.path = Some(d.clone());
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(s) = &self.schemes {
            cfg.schemes = s.clone();
        }
        if let Some(p) = &self.participants {
            cfg.participants = p.clone();
        }
        if let Some(e) = self.max_epochs {
            cfg.train.max_epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.train.batch_size = b;
        }
        if let Some(lr) = self.lr {
            cfg.train.lr = lr;
        }
        if let Some(p) = &self.precision {
            cfg.precision = if p == "f64" { Precision::F64 } else { Precision::F32 };
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-session dataset in canonical form.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Generator seed (overrides `dataset.synth.seed`).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Convert a CSV export tree into canonical form.
    Import {
        /// Directory holding participant_*/session_* CSV exports.
        #[arg(long)]
        source: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Filter and window a dataset; writes per-window metadata.
    Preprocess {
        #[command(flatten)]
        common: Common,
    },
    /// Train one scheme for the configured participants and a single seed.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Replay a checkpoint on its session and report accuracies and bins.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `train` or `benchmark`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Seconds after each cue excluded from binned analyses
        /// (overrides `analysis.trim_transitions_s`).
        #[arg(long)]
        trim_transitions: Option<f64>,
    },
    /// Run every scheme × seed × participant and write all reports.
    Benchmark {
        #[command(flatten)]
        common: Common,
    },
    /// Rebuild summary tables from a run directory's accuracy.csv.
    Report {
        /// Run directory written by `benchmark` or `train`.
        #[arg(long)]
        input: PathBuf,
        /// Where to write rebuilt tables; prints only when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth { common, seed } => {
            let cfg = common.resolve()?;
            let out = output_dir(&cfg)?;
            let checksum = cmd_synth(&cfg, &out, seed, common.force)?;
            println!("wrote {} (checksum {checksum})", out.display());
        }
        Command::Import { source, output, force } => {
            let checksum = cmd_import(&source, &output, force)?;
            println!("wrote {} (checksum {checksum})", output.display());
        }
        Command::Preprocess { common } => {
            let cfg = common.resolve()?;
            let out = output_dir(&cfg)?;
            let n = cmd_preprocess(&cfg, &out, common.force)?;
            println!("wrote {n} windows to {}", out.display());
        }
        Command::Train { common } => {
            let cfg = common.resolve()?;
            let out = output_dir(&cfg)?;
            let run = cmd_train(&cfg, &out, common.force)?;
            print!("{}", semgkit_cli::report::render_text(&run.table));
        }
        Command::Evaluate {
            common,
            checkpoint,
            trim_transitions,
        } => {
            let cfg = common.resolve()?;
            print!("{}", cmd_evaluate(&cfg, &checkpoint, trim_transitions)?.render());
        }
        Command::Benchmark { common } => {
            let cfg = common.resolve()?;
            let out = output_dir(&cfg)?;
            let run = cmd_benchmark(&cfg, &out, common.force)?;
            print!("{}", semgkit_cli::report::render_text(&run.table));
        }
        Command::Report { input, output, force } => {
            print!("{}", cmd_report(&input, output.as_deref(), force)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::SUCCESS };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code_for(&e) as u8)
        }
    }
}
