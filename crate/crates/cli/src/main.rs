use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use weno_fem::benchmarks::{cdr_convergence, run_benchmark, RunSummary};
use weno_fem::config::{parse_config, Benchmark, RunConfig};
use weno_fem::hyperbolic::Scheme;
use weno_fem::output::{write_convergence_csv, write_csv_file};
use weno_fem::Error;

#[derive(Parser)]
#[command(name = "weno-fem", version, about = "Finite element WENO stabilization benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Galerkin,
    LowOnly,
    Weno,
    RbWeno,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Galerkin => Scheme::Galerkin,
            SchemeArg::LowOnly => Scheme::LowOnly,
            SchemeArg::Weno => Scheme::Weno,
            SchemeArg::RbWeno => Scheme::RbWeno,
        }
    }
}

#[derive(clap::Args, Default)]
struct Overrides {
    /// Elements per direction (repeat for anisotropic meshes).
    #[arg(long, num_args = 1..=2)]
    elements: Option<Vec<usize>>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip writing files.
    #[arg(long)]
    no_output: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the benchmark described by a TOML configuration file.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a registered benchmark with its defaults.
    Bench {
        name: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Convergence table of a steady benchmark.
    Convergence {
        #[arg(long)]
        problem: String,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the default configuration of a benchmark.
    Defaults { name: String },
    /// Quick consistency checks of the installed build.
    Selftest,
}

fn apply(cfg: &mut RunConfig, o: &Overrides) -> anyhow::Result<()> {
    if let Some(e) = &o.elements {
        cfg.elements = match (cfg.benchmark.dim(), e.as_slice()) {
            (1, [n]) => vec![*n],
            (2, [n]) => vec![*n, *n],
            (2, [nx, ny]) => vec![*nx, *ny],
            _ => bail!("--elements takes {} value(s) for {}", cfg.benchmark.dim(), cfg.benchmark.name()),
        };
    }
    if let Some(p) = o.degree {
        cfg.degree = p;
        cfg.rk_order = (p + 1).min(3);
    }
    if let Some(t) = o.theta {
        cfg.weno.theta = t;
    }
    if let Some(s) = o.scheme {
        cfg.scheme = s.into();
    }
    if let Some(t) = o.t_final {
        cfg.t_final = t;
    }
    if let Some(c) = o.cfl {
        cfg.cfl = c;
    }
    if o.max_steps.is_some() {
        cfg.max_steps = o.max_steps;
    }
    if let Some(d) = &o.out {
        cfg.output.directory = d.to_string_lossy().into_owned();
    }
    cfg.validate().map_err(|(key, msg)| anyhow::anyhow!("invalid `{key}`: {msg}"))
}

fn report(s: &RunSummary) {
    println!("benchmark  {}", s.benchmark);
    if s.convergence.is_empty() {
        println!("steps      {}", s.steps);
        println!("time       {:.6}", s.t);
        println!("min        {:?}", s.min);
        println!("max        {:?}", s.max);
        println!("mass       {:?}", s.mass);
    } else {
        print_table(&s.convergence);
    }
    for p in &s.outputs {
        println!("wrote      {}", p.display());
    }
    println!("wall time  {:.2} s", s.wall_time_s);
}

fn print_table(rows: &[weno_fem::cdr::ConvergenceRow]) {
    println!("{:>10} {:>8} {:>12} {:>12} {:>7} {:>7} {:>6}", "h", "dofs", "err_L2", "err_S", "rate_L2", "rate_S", "iters");
    let fmt = |r: Option<f64>| r.map_or("-".to_string(), |v| format!("{v:.3}"));
    for r in rows {
        println!(
            "{:>10.5} {:>8} {:>12.4e} {:>12.4e} {:>7} {:>7} {:>6}",
            r.h,
            r.dofs,
            r.err_l2,
            r.err_s,
            fmt(r.rate_l2),
            fmt(r.rate_s),
            r.picard_iters
        );
    }
}

fn run(cfg: &RunConfig, write: bool) -> anyhow::Result<ExitCode> {
    match run_benchmark(cfg, write) {
        Ok(s) => {
            report(&s);
            Ok(ExitCode::SUCCESS)
        }
        Err(e @ (Error::BlowUp { .. } | Error::Inadmissible { .. })) => {
            eprintln!("error: {e}");
            Ok(ExitCode::from(2))
        }
        Err(e) => Err(e.into()),
    }
}

fn selftest() -> anyhow::Result<ExitCode> {
    let mut failed = 0;
    let mut check = |name: &str, ok: anyhow::Result<bool>| {
        let ok = matches!(ok, Ok(true));
        println!("{} {name}", if ok { "ok  " } else { "FAIL" });
        if !ok {
            failed += 1;
        }
    };
    for b in Benchmark::ALL {
        let mut cfg = RunConfig::defaults(b);
        let text = cfg.to_toml()?;
        check(&format!("config round trip {}", b.name()), Ok(parse_config(&text)? == cfg));
        cfg.elements = if b.dim() == 1 { vec![20] } else { vec![4, 4] };
        cfg.max_steps = Some(3);
        cfg.cdr.levels = 2;
        check(
            &format!("short run {}", b.name()),
            run_benchmark(&cfg, false).map(|s| s.min.iter().chain(&s.max).all(|v| v.is_finite())).map_err(Into::into),
        );
    }
    let mut cfg = RunConfig::defaults(Benchmark::CdrMms);
    cfg.degree = 1;
    check(
        "cdr p=1 L2 rate",
        cdr_convergence(&cfg, 3).map(|r| r[2].rate_l2.is_some_and(|v| v > 1.8)).map_err(Into::into),
    );
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve { config, overrides } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut cfg = parse_config(&text).with_context(|| format!("in {}", config.display()))?;
            apply(&mut cfg, &overrides)?;
            run(&cfg, !overrides.no_output)
        }
        Command::Bench { name, overrides } => {
            let mut cfg = RunConfig::defaults(Benchmark::from_name(&name)?);
            apply(&mut cfg, &overrides)?;
            run(&cfg, !overrides.no_output)
        }
        Command::Convergence { problem, levels, overrides } => {
            let b = Benchmark::from_name(&problem)?;
            if !b.is_cdr() {
                bail!("`{problem}` is not a steady problem (use cdr_mms or cdr_layer)");
            }
            let mut cfg = RunConfig::defaults(b);
            cfg.cdr.levels = levels;
            apply(&mut cfg, &overrides)?;
            let rows = cdr_convergence(&cfg, levels)?;
            print_table(&rows);
            if !overrides.no_output {
                let p = PathBuf::from(&cfg.output.directory).join("convergence.csv");
                write_csv_file(&p, |w| write_convergence_csv(w, &rows))?;
                println!("wrote {}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Defaults { name } => {
            print!("{}", RunConfig::defaults(Benchmark::from_name(&name)?).to_toml()?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => selftest(),
    }
}
