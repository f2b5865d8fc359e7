use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use seqest::calibration::{calibrate, CalibrationPlan};
use seqest::estimators::SchemeKind;
use seqest::experiments::{self, grid_points, world_for, Aggregate, ExperimentConfig, InfoGrid};

#[derive(Parser)]
#[command(name = "seqest", version, about = "Sequential decentralized estimation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate thresholds and quantizer ranges for the first grid point.
    Calibrate(Common),
    /// Run a config that has exactly one grid point.
    Run(Common),
    /// Run every grid point of a config.
    Sweep(Common),
    /// Run the nine figure sweeps and write one CSV per figure.
    Figures(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config file (flat key=value).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per scheme and grid point.
    #[arg(long)]
    trials: Option<u64>,
    /// Output file, or directory for `figures`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Restrict to these schemes.
    #[arg(long = "scheme")]
    schemes: Vec<SchemeKind>,
    /// Suppress progress lines.
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::from_path(p).with_context(|| format!("loading {}", p.display()))?,
            None => bail!("--config is required"),
        };
        if let Some(s) = self.seed {
            c.master_seed = s;
        }
        if let Some(t) = self.trials {
            c.trials = t;
        }
        if !self.schemes.is_empty() {
            c.schemes = self.schemes.clone();
        }
        c.validate()?;
        Ok(c)
    }

    fn progress(&self, label: &str, a: &Aggregate) {
        if !self.quiet {
            eprintln!(
                "{label}{:<10} J={:<10.4} K={:<3} snr={:<5} X={:<8.4} mse={:.4e} ±{:.2e} E[T]={:.3}",
                a.scheme.name(),
                a.info_target,
                a.sensors,
                a.snr_db,
                a.x_bound,
                a.mse,
                a.mse_ci95,
                a.mean_stop
            );
        }
    }
}

fn write_rows(rows: &[Aggregate], out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => experiments::emit_csv(rows, p).with_context(|| format!("writing {}", p.display())),
        None => {
            let stdout = std::io::stdout();
            experiments::write_csv(stdout.lock(), rows)?;
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Calibrate(c) | Command::Run(c) | Command::Sweep(c) | Command::Figures(c) => c,
    };
    if let Some(n) = common.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        seqest::par::configure_threads(n);
    }
    match &cli.command {
        Command::Calibrate(c) => {
            let cfg = c.load()?;
            let p = &grid_points(&cfg)[0];
            let world = world_for(&cfg, p.sensors, p.snr_db, p.x_bound)?;
            let pick = |list: &[f64]| match cfg.info {
                InfoGrid::TargetMse { .. } => None,
                _ => ExperimentConfig::interval_at(list, 0),
            };
            let plan = CalibrationPlan {
                interval_v: pick(&cfg.interval_v),
                interval_u: pick(&cfg.interval_u),
                percentile_samples: cfg.calibration_samples,
                paths: cfg.calibration_paths,
                rel_tol: cfg.calibration_tol,
                ..CalibrationPlan::new(p.x_bound, cfg.master_seed)
            };
            let report = calibrate(&world.sensors, &plan)?;
            match &c.out {
                Some(p) => std::fs::write(p, report.to_text()).with_context(|| format!("writing {}", p.display()))?,
                None => std::io::stdout().write_all(report.to_text().as_bytes())?,
            }
        }
        Command::Run(c) | Command::Sweep(c) => {
            let cfg = c.load()?;
            if matches!(cli.command, Command::Run(_)) && grid_points(&cfg).len() != 1 {
                bail!("run needs a config with exactly one grid point; use sweep");
            }
            let rows = experiments::run_sweep_with(&cfg, &mut |a| c.progress("", a))?;
            write_rows(&rows, c.out.as_deref().or(cfg.output.as_deref()))?;
        }
        Command::Figures(c) => {
            if c.config.is_some() {
                bail!("figures uses built-in presets; --config is not accepted");
            }
            let out = c.out.clone().unwrap_or_else(|| PathBuf::from("figures"));
            let configs = experiments::preset_configs(c.trials, c.seed, &c.schemes)?;
            let written = experiments::run_figures(&configs, &out, &mut |name, a| c.progress(&format!("{name}: "), a))?;
            for p in written {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}
