use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use risloc::config::{Estimator, ExperimentConfig};
use risloc::geometry::angles_between;
use risloc::harness::{self, ResultRow};
use risloc::Error;

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_ALL_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "risloc", version, about = "Multi-RIS uplink 3D localization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured Monte Carlo sweep and write CSV rows.
    Simulate(RunArgs),
    /// Compute the position error bound for every sweep value.
    Peb(RunArgs),
    /// Run one trial and print every stage.
    Single {
        #[command(flatten)]
        run: RunArgs,
        /// Sweep value index.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Trial index within the sweep point.
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long)]
        verbose: bool,
    },
    /// Parse and validate a configuration file.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output CSV; defaults to the config's `out`, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_parser = parse_estimator)]
    estimator: Option<Estimator>,
}

fn parse_estimator(s: &str) -> Result<Estimator, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    if let Some(n) = args.threads {
        cfg.threads = Some(n);
    }
    if let Some(e) = args.estimator {
        cfg.estimator = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(rows: &[ResultRow], out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => harness::write_csv_file(path, rows)?,
        None => harness::write_csv(std::io::stdout().lock(), rows)?,
    }
    Ok(())
}

fn simulate(args: &RunArgs) -> Result<u8, Failure> {
    let cfg = load(args)?;
    let rows = harness::run_sweep(&cfg)?;
    emit(&rows, cfg.out.as_deref())?;
    let dead: Vec<f64> = rows
        .iter()
        .filter(|r| r.rmse_m.is_none())
        .map(|r| r.sweep_value)
        .collect();
    if !dead.is_empty() {
        eprintln!("all trials failed at {} = {:?}", cfg.sweep_variable.name(), dead);
        return Ok(EXIT_ALL_FAILED);
    }
    Ok(0)
}

fn peb(args: &RunArgs) -> Result<u8, Failure> {
    let cfg = load(args)?;
    let rows = harness::peb_sweep(&cfg)?;
    emit(&rows, cfg.out.as_deref())?;
    Ok(0)
}

fn single(args: &RunArgs, index: usize, trial: usize, verbose: bool) -> Result<u8, Failure> {
    let cfg = load(args)?;
    if index >= cfg.values.len() {
        return Err(Failure::Config(format!(
            "--index {index} out of range for {} sweep values",
            cfg.values.len()
        )));
    }
    let point = harness::operating_point(&cfg, index)?;
    let scene = &point.scene;
    let seed = harness::trial_seed(cfg.seed, index as u64, trial as u64);
    println!(
        "{} = {}, trial {trial}, noise seed {seed}",
        cfg.sweep_variable.name(),
        cfg.values[index]
    );
    if verbose {
        println!(
            "scene: N = {}, M = {}, T = {}, P = {:.3e} W, rho = {:.3e} W",
            scene.num_bs_antennas(),
            scene.num_ris(),
            scene.training_slots,
            scene.radio.tx_power,
            scene.radio.noise_var
        );
        let norms: Vec<String> = (0..scene.num_ris())
            .map(|m| format!("{:.4}", point.combiner.column(m).norm()))
            .collect();
        println!(
            "zf: ||w_m|| = [{}], spread {:.2}",
            norms.join(", "),
            point.balance_ratio()
        );
    }
    let record = match point.run_trial(seed) {
        Ok(r) => r,
        Err(e) => {
            println!("trial failed: {e}");
            return Ok(EXIT_ALL_FAILED);
        }
    };
    if verbose {
        for (m, est) in record.aoa.iter().enumerate() {
            let truth = angles_between(&scene.ris[m].position, &scene.ue_position)?;
            println!(
                "ris {m}: anm iterations {}, gammas ({:.6}, {:.6}), aoa (az {:.6}, el {:.6}) vs truth (az {:.6}, el {:.6}), error {:.3e} rad{}",
                record.anm_iterations[m],
                est.gammas.0,
                est.gammas.1,
                est.angles.azimuth,
                est.angles.elevation,
                truth.azimuth,
                truth.elevation,
                record.angle_errors[m],
                if est.low_confidence { " [low confidence]" } else { "" }
            );
        }
        println!("ls condition number {:.3}", record.condition_number);
    }
    let err = |p: &risloc::Position| p.distance(&scene.ue_position);
    println!(
        "p_ls = ({:.6}, {:.6}, {:.6}), error {:.4e} m",
        record.p_ls.x,
        record.p_ls.y,
        record.p_ls.z,
        err(&record.p_ls)
    );
    if let Some(p) = record.p_ml {
        println!("p_ml = ({:.6}, {:.6}, {:.6}), error {:.4e} m", p.x, p.y, p.z, err(&p));
    }
    if verbose {
        match point.peb() {
            Ok(r) => println!("peb {:.4e} m", r.peb),
            Err(e) => println!("peb unavailable: {e}"),
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Peb(a) => peb(a),
        Command::Single {
            run,
            index,
            trial,
            verbose,
        } => single(run, *index, *trial, *verbose),
        Command::ValidateConfig { config } => ExperimentConfig::from_path(config)
            .map(|c| {
                println!(
                    "ok: {} RIS, N = {}, sweep {} over {} values, {} trials",
                    c.scene.num_ris(),
                    c.scene.num_bs_antennas(),
                    c.sweep_variable.name(),
                    c.values.len(),
                    c.trials
                );
                0
            })
            .map_err(Failure::from),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
