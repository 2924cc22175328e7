//! `ambc` — run ambient-backscatter link simulations from the terminal.
//!
//! Subcommands:
//!   run      simulate a single point and write CSV reports
//!   sweep    simulate every sweep point of the config
//!   selftest run the built-in property suite

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use ambc_core::harness::{
    emit_report, load_config, run_point, run_sweep, summary_lines, ExperimentConfig, Mode,
};

#[derive(Parser)]
#[command(name = "ambc", version, about = "Ambient backscatter link-level simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the fidelity mode (grid | waveform).
    #[arg(long)]
    mode: Option<Mode>,
    /// Output directory for the CSV reports.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Size the worker pool explicitly (defaults to all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the base configuration as a single point.
    Run {
        #[command(flatten)]
        common: RunArgs,
        /// Also dump the channel-estimate series to this CSV path.
        #[arg(long)]
        dump_estimates: Option<PathBuf>,
    },
    /// Simulate the cartesian product of the sweep axes.
    Sweep {
        #[command(flatten)]
        common: RunArgs,
    },
    /// Run the built-in property checks and exit nonzero on failure.
    Selftest,
    /// Print the default configuration as TOML.
    DefaultConfig,
}

fn load(args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => load_config(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn install_pool(workers: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("building worker pool")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(ok) => {
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> anyhow::Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { common, dump_estimates } => {
            install_pool(common.workers)?;
            let cfg = load(&common)?;
            let point = cfg
                .sweep_points()
                .into_iter()
                .next()
                .expect("at least one point");
            if let Some(path) = dump_estimates {
                let spec = cfg.resolve(&point)?;
                dump_estimate_series(&cfg, &spec, &path)?;
            }
            let report = run_point(&cfg, &point)?;
            for line in summary_lines(std::slice::from_ref(&report)) {
                println!("{line}");
            }
            let paths = emit_report(std::slice::from_ref(&report), &common.out)?;
            for p in paths {
                println!("wrote {}", p.display());
            }
            Ok(true)
        }
        Command::Sweep { common } => {
            install_pool(common.workers)?;
            let cfg = load(&common)?;
            let reports = run_sweep(&cfg)?;
            for line in summary_lines(&reports) {
                println!("{line}");
            }
            let paths = emit_report(&reports, &common.out)?;
            for p in paths {
                println!("wrote {}", p.display());
            }
            Ok(true)
        }
        Command::Selftest => {
            let checks = ambc_core::selftest::run_all();
            let mut all_pass = true;
            for c in &checks {
                println!(
                    "{} {} — {}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
                all_pass &= c.pass;
            }
            Ok(all_pass)
        }
        Command::DefaultConfig => {
            print!("{}", ExperimentConfig::default().to_toml());
            Ok(true)
        }
    }
}

/// Re-simulate the point's observables and write the estimate CSV.
fn dump_estimate_series(
    cfg: &ExperimentConfig,
    spec: &ambc_core::harness::RunSpec,
    path: &PathBuf,
) -> anyhow::Result<()> {
    use ambc_core::harness::simulate_observables;
    use ambc_core::zed::ReflectionPattern;

    if cfg.duration_s > 600.0 {
        bail!("estimate dumps are limited to 600 s of observation");
    }
    let frame = ambc_core::bitseq::build_frame_with_sync(&spec.receiver.sync, &spec.payload)?;
    let pattern = if spec.zed_enabled {
        let mut p = ReflectionPattern::new(&frame, spec.fsk.clone())?;
        p.start_s = spec.zed_start_slots as f64 * ambc_core::lte::SLOT_S;
        p.clock_scale = spec.zed_clock_scale;
        Some(p)
    } else {
        None
    };
    let (series, _) = simulate_observables(spec, pattern.as_ref())?;
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    series.write_csv(std::io::BufWriter::new(file))?;
    println!("wrote {}", path.display());
    Ok(())
}
