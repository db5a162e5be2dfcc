//! `obscal`: generate, optimize, simulate and compare calibration
//! trajectories from the command line.
//!
//! Exit codes: 0 on success, 1 when a run fails (for `experiment`, when any
//! entry lands in `failures.json`), 2 on configuration or input errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use obscal::experiment::{
    calibrate_run, derive_seed, describe_trajectory, generate_spline, optimize_spline, run_experiment,
    write_run_series, ExperimentConfig, Method,
};
use obscal::sim::{simulate_run, QualityLevel};
use obscal::UniformSpline;

#[derive(Parser, Debug)]
#[command(name = "obscal", version, about = "Observability-aware calibration trajectories")]
struct Cli {
    /// Experiment configuration (JSON). Defaults apply to missing keys.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides `master_seed` from the configuration.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir` from the configuration.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a feasible random spline.
    Gen,
    /// Optimize a spline for one method.
    Optimize {
        spline: PathBuf,
        #[arg(long, value_name = "NAME")]
        method: String,
    },
    /// Simulate sensors along a spline and run the calibration filter.
    Simulate {
        spline: PathBuf,
        #[arg(long, value_name = "N")]
        quality: u32,
    },
    /// Run the full comparison protocol.
    Experiment {
        /// Restrict to these methods (repeatable).
        #[arg(long, value_name = "NAME")]
        method: Vec<String>,
        /// Restrict to these landmark counts (repeatable).
        #[arg(long, value_name = "N")]
        quality: Vec<u32>,
    },
    /// Print kinematics, costs and observability ranks of a spline.
    Describe { spline: PathBuf },
}

enum Failure {
    /// Bad configuration or input: exit code 2.
    Config(String),
    /// A run did not complete: exit code 1.
    Run(String),
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Failure::Config(e.to_string())
    }

    fn run(e: impl std::fmt::Display) -> Self {
        Failure::Run(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(Failure::config)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn load_spline(path: &Path) -> Result<UniformSpline, Failure> {
    UniformSpline::load(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "spline".into())
}

fn create_out(cfg: &ExperimentConfig) -> Result<&Path, Failure> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| {
        Failure::Config(format!("cannot create {}: {e}", cfg.output_dir.display()))
    })?;
    Ok(&cfg.output_dir)
}

fn gen(cfg: &ExperimentConfig) -> Outcome {
    let spline = generate_spline(cfg, cfg.master_seed).map_err(Failure::run)?;
    let path = create_out(cfg)?.join(format!("random_seed{}.spline", cfg.master_seed));
    spline.save(&path).map_err(Failure::run)?;
    println!("{}", path.display());
    Ok(())
}

fn optimize(cfg: &ExperimentConfig, spline_path: &Path, method: &str) -> Outcome {
    let method: Method = method.parse().map_err(Failure::config)?;
    if method.cost_kind().is_none() {
        return Err(Failure::Config(format!("method `{method}` has no cost to optimize")));
    }
    let spline = load_spline(spline_path)?;
    let out = create_out(cfg)?;
    let res = optimize_spline(cfg, &spline, method).map_err(Failure::run)?;
    let name = format!("{}_{method}", stem(spline_path));
    let path = out.join(format!("{name}.spline"));
    res.spline.save(&path).map_err(Failure::run)?;
    std::fs::write(out.join(format!("{name}_log.csv")), res.log_csv()).map_err(Failure::run)?;
    println!(
        "{method}: cost {:.6e} -> {:.6e} in {} iterations ({} evaluations)",
        res.initial_cost,
        res.final_cost,
        res.log.len(),
        res.evaluations
    );
    for d in &res.diagnostics {
        println!("  note: {d}");
    }
    println!("{}", path.display());
    Ok(())
}

fn simulate(cfg: &ExperimentConfig, spline_path: &Path, quality: u32) -> Outcome {
    if quality == 0 {
        return Err(Failure::Config("quality must be at least one landmark".into()));
    }
    cfg.validate().map_err(Failure::config)?;
    let spline = load_spline(spline_path)?;
    let out = create_out(cfg)?;
    let q = QualityLevel::new(quality);
    let sim_seed = derive_seed(cfg.master_seed, &[1, 0, quality as u64]);
    let run = simulate_run(&spline, &cfg.truth, &cfg.noise, &cfg.rates, q, sim_seed).map_err(Failure::run)?;
    let res = calibrate_run(cfg, &run, derive_seed(cfg.master_seed, &[2, 0])).map_err(Failure::run)?;
    let path = out.join(format!("{}_q{quality}.csv", stem(spline_path)));
    write_run_series(&path, &res).map_err(Failure::run)?;
    let last = res.trans_error.last().copied().unwrap_or_default();
    println!("updates          {}", res.times.len());
    println!("sum sq error     {:.6e} m^2", res.sum_sq_error);
    println!("final error      {:.6e} m  ({:.4}, {:.4}, {:.4})", last.norm(), last.x, last.y, last.z);
    println!("final rot error  {:.6e} rad", res.rot_error.last().copied().unwrap_or_default());
    println!("{}", path.display());
    Ok(())
}

fn experiment(mut cfg: ExperimentConfig, methods: &[String], qualities: &[u32]) -> Outcome {
    if !methods.is_empty() {
        cfg.methods = methods
            .iter()
            .map(|m| m.parse())
            .collect::<Result<_, _>>()
            .map_err(Failure::config)?;
    }
    if !qualities.is_empty() {
        cfg.qualities = qualities.iter().map(|&q| QualityLevel::new(q)).collect();
    }
    cfg.validate().map_err(Failure::config)?;
    create_out(&cfg)?;
    let report = run_experiment(&cfg).map_err(Failure::run)?;
    print!("{}", obscal::experiment::format_table(&report));
    if report.failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Run(format!(
            "{} run(s) failed; see {}",
            report.failures.len(),
            cfg.output_dir.join("failures.json").display()
        )))
    }
}

fn describe(cfg: &ExperimentConfig, spline_path: &Path) -> Outcome {
    cfg.validate().map_err(Failure::config)?;
    let spline = load_spline(spline_path)?;
    let report = describe_trajectory(&spline, cfg).map_err(Failure::run)?;
    print!("{report}");
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    let cfg = load_config(&cli)?;
    if cli.dump_config {
        println!("{}", cfg.to_json());
        return Ok(());
    }
    match cli.command {
        None => Err(Failure::Config("no subcommand given (try --help)".into())),
        Some(Command::Gen) => gen(&cfg),
        Some(Command::Optimize { spline, method }) => optimize(&cfg, &spline, &method),
        Some(Command::Simulate { spline, quality }) => simulate(&cfg, &spline, quality),
        Some(Command::Experiment { method, quality }) => experiment(cfg, &method, &quality),
        Some(Command::Describe { spline }) => describe(&cfg, &spline),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
