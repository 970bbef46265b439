//! `burstseg`: screen tag streams for bursts, fit segmentations, score jumps
//! and rank bursts. Every run writes its tables plus a `manifest.txt` that
//! `burstseg replay` can re-run and verify byte for byte.
//!
//! Exit codes: 0 success, 1 the analysis came back empty or degenerate,
//! 2 usage or I/O error.

mod commands;
mod manifest;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use commands::{BurstsArgs, FitArgs, JumpsArgs, Run, ScreenArgs, SimulateArgs, Status};
use manifest::RunManifest;

#[derive(Parser, Debug)]
#[command(name = "burstseg", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scan-statistic permutation test for every stream
    Screen {
        #[command(flatten)]
        args: ScreenArgs,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Penalized segmentation of one stream
    Fit {
        #[command(flatten)]
        args: FitArgs,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample-splitting p-values for the jumps of one stream
    Jumps {
        #[command(flatten)]
        args: JumpsArgs,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Bursts above baseline, ranked across streams
    Bursts {
        #[command(flatten)]
        args: BurstsArgs,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a stream file from a piecewise specification
    Simulate {
        #[command(flatten)]
        args: SimulateArgs,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run a recorded manifest and compare the outputs
    Replay {
        /// Manifest written by an earlier run
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
}

fn execute(command: &Command) -> Result<(Run, &Path)> {
    Ok(match command {
        Command::Screen { args, out } => (commands::screen(args)?, out),
        Command::Fit { args, out } => (commands::fit(args)?, out),
        Command::Jumps { args, out } => (commands::jumps(args)?, out),
        Command::Bursts { args, out } => (commands::bursts(args)?, out),
        Command::Simulate { args, out } => (commands::simulate(args)?, out),
        Command::Replay { .. } => bail!("replay cannot be nested"),
    })
}

fn write_run(mut run: Run, out: &Path) -> Result<Status> {
    run.manifest.outputs = run.outputs.digests();
    run.outputs.add(manifest::FILE_NAME, run.manifest.render().into_bytes());
    run.outputs.write_all(out)?;
    Ok(run.status)
}

fn replay(manifest_path: &Path, out: &Path) -> Result<Status> {
    let recorded = RunManifest::read(manifest_path)?;
    if let (Some(expected), Some(actual)) = (&recorded.input_sha256, commands::input_digest(&recorded)?) {
        if *expected != actual {
            bail!("recorded input has changed since the run (sha256 {actual}, manifest {expected})");
        }
    }
    let mut argv = recorded.argv();
    argv.push("--out".into());
    argv.push(out.display().to_string());
    let cli = Cli::try_parse_from(&argv)?;
    let (run, out) = execute(&cli.command)?;
    let fresh = run.outputs.digests();

    let mut mismatches = Vec::new();
    for (name, digest) in &recorded.outputs {
        match fresh.iter().find(|(n, _)| n == name) {
            Some((_, d)) if d == digest => println!("identical\t{name}"),
            Some(_) => mismatches.push(format!("differs\t{name}")),
            None => mismatches.push(format!("missing\t{name}")),
        }
    }
    for (name, _) in &fresh {
        if !recorded.outputs.iter().any(|(n, _)| n == name) {
            mismatches.push(format!("unexpected\t{name}"));
        }
    }
    write_run(run, out)?;
    if mismatches.is_empty() {
        Ok(Status::Done)
    } else {
        for m in &mismatches {
            println!("{m}");
        }
        Ok(Status::Empty(format!("{} output(s) did not reproduce", mismatches.len())))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Replay { manifest, out } => replay(manifest, out),
        other => execute(other).and_then(|(run, out)| write_run(run, out)),
    };
    match result {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::Empty(msg)) => {
            eprintln!("burstseg: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("burstseg: error: {e:#}");
            ExitCode::from(2)
        }
    }
}
