use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cascade_bo::benchmarks::{build, optimum_budget, registry, true_optimum};
use cascade_bo::harness::{read_config, run, write_outputs, Method};

#[derive(Parser)]
#[command(name = "cascade-bo", version, about = "Bayesian optimization of cascade processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        method: Option<String>,
        /// Run this single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the registered benchmarks.
    ListBenchmarks,
    /// Print the numerical optimum of a benchmark.
    Oracle {
        #[arg(long)]
        benchmark: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> cascade_bo::Result<()> {
    match command {
        Command::Run {
            config,
            method,
            seed,
            iters,
            out,
        } => {
            let mut cfg = read_config(&config)?;
            if let Some(m) = method {
                cfg.method = m.parse::<Method>()?;
            }
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(t) = iters {
                cfg.iterations = t;
            }
            if let Some(o) = out {
                cfg.output = o;
            }
            cfg.validate()?;
            let trace = run(&cfg)?;
            write_outputs(&trace, &cfg.output)?;
            for s in &trace.summary.seeds {
                match (&s.error, s.final_regret) {
                    (Some(e), _) => println!("seed {}: failed: {e}", s.seed),
                    (None, Some(r)) => println!("seed {}: final simple regret {r}", s.seed),
                    (None, None) => println!("seed {}: no final-stage observation", s.seed),
                }
            }
            println!("wrote {}", cfg.output.display());
        }
        Command::ListBenchmarks => {
            for spec in registry() {
                let dims: Vec<String> = spec.control_dims.iter().map(usize::to_string).collect();
                let optimum = match spec.analytic_optimum() {
                    Some(v) => format!("analytic({v})"),
                    None => "numeric".to_string(),
                };
                println!(
                    "{:<20} N={} dims=[{}] box=[{}, {}] F*={}",
                    spec.name,
                    spec.n_stages(),
                    dims.join(","),
                    spec.lo,
                    spec.hi,
                    optimum
                );
            }
        }
        Command::Oracle { benchmark, seed } => {
            let bench = build(&benchmark, seed)?;
            let opt = true_optimum(&bench.cascade, &optimum_budget(seed))?;
            println!("{}", opt.value);
            let controls: Vec<String> = opt
                .controls
                .iter()
                .map(|x| x.iter().map(f64::to_string).collect::<Vec<_>>().join(";"))
                .collect();
            println!("{}", controls.join(" | "));
        }
    }
    Ok(())
}
