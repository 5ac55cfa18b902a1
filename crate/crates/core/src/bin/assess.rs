use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use gridlattice::report::{run, Method, RunConfig, SummaryRow};
use gridlattice::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Dichotomy,
    Se,
    Mcs,
    #[value(name = "dichotomy+fmcs")]
    DichotomyFmcs,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Dichotomy => Method::Dichotomy,
            MethodArg::Se => Method::Se,
            MethodArg::Mcs => Method::Mcs,
            MethodArg::DichotomyFmcs => Method::DichotomyFmcs,
        }
    }
}

/// Composite reliability assessment (LOLP, EENS) of a power system.
#[derive(Debug, Parser)]
#[command(name = "assess", version)]
struct Args {
    /// System JSON file, or a bundled fixture name (`rbts`, `rts79`).
    #[arg(long)]
    system: String,

    #[arg(long, value_enum)]
    method: MethodArg,

    /// Stop once the last ten failed lattices average below 10^-N.
    #[arg(long, value_name = "N", allow_negative_numbers = true)]
    dn: Option<i32>,

    /// Stop after this many OPF evaluations.
    #[arg(long, value_name = "N")]
    max_opf: Option<u64>,

    /// Stop once the unresolved probability mass drops below X.
    #[arg(long, value_name = "X")]
    mixed_mass: Option<f64>,

    /// Target coefficient of variation for sampling methods.
    #[arg(long, value_name = "X")]
    beta: Option<f64>,

    /// Cap on the number of samples for sampling methods.
    #[arg(long, value_name = "N")]
    max_samples: Option<u64>,

    /// Highest contingency level enumerated by `se`.
    #[arg(long, value_name = "K")]
    max_level: Option<u32>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Worker threads for enumeration (defaults to all cores).
    #[arg(long, value_name = "N")]
    threads: Option<usize>,

    /// Keep every N-th sample in samples.csv.
    #[arg(long, value_name = "N", default_value_t = 1)]
    trace_stride: u64,

    #[arg(long, value_name = "DIR", default_value = "assess-out")]
    out: PathBuf,

    /// Evaluate the maximum of each new lattice as well, retiring normal
    /// lattices early.
    #[arg(long)]
    classify_max: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();

    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    }

    let config = RunConfig {
        system: args.system,
        method: args.method.into(),
        dn: args.dn,
        max_opf: args.max_opf,
        mixed_mass: args.mixed_mass,
        beta: args.beta,
        max_samples: args.max_samples,
        max_level: args.max_level,
        seed: args.seed,
        classify_max: args.classify_max,
        trace_stride: args.trace_stride,
        threads: args.threads,
    };

    match run(&config, &args.out) {
        Ok(artifacts) => {
            println!("{}", SummaryRow::HEADER);
            println!("{}", artifacts.summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io { .. } | Error::Parse(_) | Error::Invalid { .. } | Error::Config(_) => {
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            }
        }
    }
}
