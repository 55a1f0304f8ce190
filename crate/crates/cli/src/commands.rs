use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use fdem_core::RunControl;

use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::error::{exit, CliError, Result};
use crate::run::{invert, simulate, Payload, RunKind};
use crate::{plot, report};

#[derive(Debug, Parser)]
#[command(name = "fdem", version, about = "Layered-earth FDEM simulation and inversion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a dataset (data.csv) and its truth (truth.csv).
    Simulate(Common),
    /// Invert one sounding over all truncation indices.
    Invert(InvertArgs),
    /// Invert every sounding of a section.
    Invert2d(InvertArgs),
    /// Redraw the figures of a finished run.
    Gallery {
        /// `result.json` written by invert or invert2d.
        #[arg(long)]
        result: PathBuf,
        /// Defaults to the directory holding the result.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set inversion.reg_order=1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Noise seed; overrides `seed` of the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "fdem-out")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset to invert; synthesized from the configuration when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Truth profiles (as written by simulate) for error reporting.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut sets = self.set.clone();
        if let Some(seed) = self.seed {
            sets.push(format!("seed={seed}"));
        }
        RunConfig::load(self.config.as_deref(), &sets)
    }

    fn output_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.output_dir).map_err(|e| CliError::io(&self.output_dir, e))?;
        Ok(&self.output_dir)
    }
}

/// Run `cli`; the value is the process exit code.
pub fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Simulate(common) => {
            let config = common.config()?;
            let dir = common.output_dir()?;
            let synthetic = simulate(&config)?;
            let disc = config.soil.discretization()?;
            synthetic.dataset.write(&dir.join("data.csv"))?;
            report::write_file(
                dir,
                "truth.csv",
                &report::truth_csv(&disc.tops(), &disc.midpoints(), &synthetic.truth),
            )?;
            report::write_file(dir, "config.toml", &config.to_toml())?;
            println!(
                "wrote {} column(s), {} readings each, to {}",
                synthetic.dataset.columns.len(),
                synthetic.dataset.columns[0].len(),
                dir.display()
            );
            Ok(exit::OK)
        }
        Command::Invert(args) => run_inversion(args, RunKind::Profile),
        Command::Invert2d(args) => run_inversion(args, RunKind::Section),
        Command::Gallery { result, output_dir } => {
            let payload = report::read_payload(result)?;
            let dir = match output_dir {
                Some(d) => d.clone(),
                None => result.parent().map(Path::to_path_buf).unwrap_or_default(),
            };
            std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
            for path in plot::write_plots(&payload, &dir)? {
                println!("wrote {}", path.display());
            }
            Ok(exit::OK)
        }
    }
}

fn run_inversion(args: &InvertArgs, kind: RunKind) -> Result<i32> {
    let config = args.common.config()?;
    let (dataset, mut truth) = match &args.data {
        Some(path) => (Dataset::read(path)?, None),
        None => {
            let s = simulate(&config)?;
            (s.dataset, Some(s.truth))
        }
    };
    if let Some(path) = &args.truth {
        truth = Some(report::read_truth(path)?);
    }
    let payload = invert(&config, &dataset, truth, kind, &RunControl::default())?;
    let dir = args.common.output_dir()?;
    report::write_tables(&payload, dir)?;
    if payload.config.output.plots {
        plot::write_plots(&payload, dir)?;
    }
    summarize(&payload);
    Ok(if payload.complete() { exit::OK } else { exit::INCOMPLETE })
}

fn summarize(p: &Payload) {
    for (c, col) in p.columns.iter().enumerate() {
        match col.result() {
            Some(r) => {
                let s = r.selected();
                let mut line = format!(
                    "column {c}: ell {}/{} ({}), residual {:.3e}, {}",
                    r.selected_ell, r.ell_max, r.selection.applied, s.residual_norm, s.termination
                );
                if let Some(e) = p.relative_error(c, r.selected_ell) {
                    line.push_str(&format!(", relative error {e:.3}"));
                }
                println!("{line}");
            }
            None => {
                if let fdem_core::invert::ColumnOutcome::Failed { error } = &col.outcome {
                    println!("column {c}: failed: {error}");
                }
            }
        }
    }
}
