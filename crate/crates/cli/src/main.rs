use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use adcsim_core::chanest::{build_mse_table, MseTable};
use adcsim_core::montecarlo::{verify_suite, VerifyOptions};
use adcsim_core::quantization::MapCache;
use adcsim_core::sweep::{run_sweep, validate_config, Evaluator};
use adcsim_core::{Error, Exec, SweepPlan};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "adcsim", version, about = "Sum rate and energy efficiency of mmWave receivers with low-resolution ADCs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct RunOpts {
    /// Worker threads (defaults to all cores).
    #[arg(long, env = "ADCSIM_THREADS")]
    threads: Option<usize>,
    /// Run every loop on the calling thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the sweep described by a configuration file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Channel-estimation MSE table to use for every point.
        #[arg(long)]
        mse_table: Option<PathBuf>,
        /// Directory for cached correlation maps.
        #[arg(long)]
        map_cache: Option<PathBuf>,
        #[command(flatten)]
        run: RunOpts,
    },
    /// Write the channel-estimation MSE table for a configuration.
    MseTable {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunOpts,
    },
    /// Run the Monte-Carlo oracle suite.
    Verify {
        #[arg(long, default_value_t = VerifyOptions::default().seed)]
        seed: u64,
        /// Divide every sample count by this factor.
        #[arg(long, default_value_t = 1)]
        reduce: usize,
        #[command(flatten)]
        run: RunOpts,
    },
    /// Check a configuration file and print its normalized form.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn setup(run: &RunOpts) -> Result<Exec> {
    if let Some(n) = run.threads {
        anyhow::ensure!(n > 0, "--threads must be at least 1");
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    Ok(if run.sequential { Exec::Sequential } else { Exec::Parallel })
}

fn load(config: &PathBuf) -> Result<SweepPlan> {
    let exp = validate_config(config)?;
    Ok(SweepPlan::new(&exp)?)
}

fn simulate(config: PathBuf, out: PathBuf, seed: Option<u64>, mse_table: Option<PathBuf>, map_cache: Option<PathBuf>, run: RunOpts) -> Result<()> {
    let exec = setup(&run)?;
    let mut plan = load(&config)?;
    if let Some(s) = seed {
        plan = plan.with_seed(s);
    }
    let sys = &plan.experiment.system;
    eprintln!("{} points x {} realizations", plan.len(), sys.realizations);
    let mut cache = MapCache::new(sys.quantizer, sys.grid_threshold, exec);
    if let Some(dir) = map_cache {
        cache = cache.with_dir(dir);
    }
    let mut eval = Evaluator::new(cache, exec);
    if let Some(p) = mse_table {
        let table = MseTable::read_csv(&p).with_context(|| format!("reading {}", p.display()))?;
        eval = eval.with_mse_table(table);
    }
    let manifest = run_sweep(&plan, &mut eval, &out)?;
    eprintln!("wrote {} files to {} in {:.1} s", manifest.files.len() + 1, out.display(), manifest.wall_time_s);
    Ok(())
}

fn mse_table(config: PathBuf, out: PathBuf, run: RunOpts) -> Result<()> {
    let exec = setup(&run)?;
    let plan = load(&config)?;
    let table = build_mse_table(&plan.experiment.system, &MseTable::default_grid(), exec)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    table.write_csv(&out)?;
    eprintln!("wrote {} rows to {}", table.snr_db.len(), out.display());
    Ok(())
}

fn verify(seed: u64, reduce: usize, run: RunOpts) -> Result<bool> {
    let exec = setup(&run)?;
    let opts = VerifyOptions { seed, ..VerifyOptions::default() }.reduced(reduce);
    let checks = verify_suite(opts, exec)?;
    let mut ok = true;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        ok &= c.passed;
    }
    println!("{}/{} checks passed", checks.iter().filter(|c| c.passed).count(), checks.len());
    Ok(ok)
}

fn validate(config: PathBuf) -> Result<()> {
    let plan = load(&config)?;
    println!("{}", plan.experiment.to_json_pretty());
    eprintln!("{}: valid, {} points", config.display(), plan.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out, seed, mse_table: table, map_cache, run } => simulate(config, out, seed, table, map_cache, run).map(|_| true),
        Command::MseTable { config, out, run } => mse_table(config, out, run).map(|_| true),
        Command::Verify { seed, reduce, run } => verify(seed, reduce, run),
        Command::Validate { config } => validate(config).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            match e.downcast_ref::<Error>() {
                Some(Error::Config(diags)) => {
                    eprintln!("error: invalid configuration");
                    for d in diags {
                        eprintln!("  {d}");
                    }
                }
                _ => eprintln!("error: {e:#}"),
            }
            ExitCode::from(2)
        }
    }
}
