use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use recycling_gibbs::depgraph::{self, DataTable, FitSettings, Statistic};
use recycling_gibbs::harness::{self, RunOptions};
use recycling_gibbs::report::{fmt_f64, write_text};
use recycling_gibbs::Error;

#[derive(Parser)]
#[command(name = "rg", version, about = "Recycling Gibbs sampler benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file and write its CSV report.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Overrides the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: RG_WORKERS, else all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print quadrature moments of a 2-D toy target (gauss, bimodal, donut).
    Oracle {
        target: String,
        /// Grid points per axis.
        #[arg(long = "n")]
        grid: Option<usize>,
    },
    /// Test every pair of columns of a CSV file for dependence.
    Depgraph {
        data: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 99)]
        surrogates: usize,
        #[arg(long, default_value = "std")]
        statistic: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn exit_code(err: &Error) -> u8 {
    if err.is_validation() {
        2
    } else if err.is_numerical() {
        3
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            workers,
        } => run(&config, &out, seed, workers),
        Command::Oracle { target, grid } => oracle(&target, grid),
        Command::Depgraph {
            data,
            alpha,
            surrogates,
            statistic,
            seed,
            out,
            workers,
        } => dep(&data, alpha, surrogates, &statistic, seed, &out, workers),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("rg: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(config: &Path, out: &Path, seed: Option<u64>, workers: Option<usize>) -> Result<u8, Error> {
    let text = std::fs::read_to_string(config).map_err(|e| Error::io(config, e))?;
    let mut spec = harness::parse_spec(&text)?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    if let Some(data) = &spec.data {
        if data.is_relative() {
            let base = config.parent().unwrap_or(Path::new("."));
            spec.data = Some(base.join(data));
        }
    }
    let options = RunOptions {
        workers,
        cache_dir: Some(out.join("cache")),
    };
    let result = harness::run_experiment(&spec, &options)?;
    for path in harness::write_outputs(&result, out)? {
        println!("{}", path.display());
    }
    for f in &result.failures {
        eprintln!(
            "rg: {} failed at T={} M={} sigma={}: {}",
            f.method, f.point.sweeps, f.point.inner_steps, f.point.sigma, f.message
        );
    }
    Ok(if result.has_numerical_failure() { 3 } else { 0 })
}

fn oracle(target: &str, grid: Option<usize>) -> Result<u8, Error> {
    let m = harness::oracle(target, grid)?;
    let s = m.std();
    println!("quantity,value");
    for (name, v) in [
        ("mu_1", m.mean[0]),
        ("mu_2", m.mean[1]),
        ("cov_11", m.cov[0][0]),
        ("cov_12", m.cov[0][1]),
        ("cov_22", m.cov[1][1]),
        ("std_1", s[0]),
        ("std_2", s[1]),
    ] {
        println!("{name},{}", fmt_f64(v));
    }
    Ok(0)
}

fn dep(
    data: &Path,
    alpha: f64,
    surrogates: usize,
    statistic: &str,
    seed: u64,
    out: &Path,
    workers: Option<usize>,
) -> Result<u8, Error> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Usage(format!("--alpha must lie in (0, 1), got {alpha}")));
    }
    if surrogates == 0 {
        return Err(Error::Usage("--surrogates must be positive".into()));
    }
    let stat = Statistic::ALL
        .into_iter()
        .find(|s| s.name() == statistic)
        .ok_or_else(|| Error::Usage(format!("--statistic must be mean, median or std, got {statistic:?}")))?;
    let table = DataTable::read_csv(data)?;
    let pool = rayon_pool(workers)?;
    let pairs = depgraph::all_pairs(table.names.len());
    let results = pool.install(|| depgraph::analyze(&table, &pairs, surrogates, &FitSettings::default(), seed))?;
    let dot = depgraph::emit_graph(&results, alpha, stat)?;
    let stem = data.file_stem().and_then(|s| s.to_str()).unwrap_or("depgraph");
    let csv_path = out.join(format!("{stem}_results.csv"));
    let dot_path = out.join(format!("{stem}.dot"));
    write_text(&csv_path, &depgraph::results_csv(&results))?;
    write_text(&dot_path, &dot)?;
    println!("{}", csv_path.display());
    println!("{}", dot_path.display());
    Ok(0)
}

fn rayon_pool(workers: Option<usize>) -> Result<rayon::ThreadPool, Error> {
    let n = workers.unwrap_or_else(harness::default_workers);
    if n == 0 {
        return Err(Error::Usage("--workers must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Usage(format!("--workers: {e}")))
}
