//! `bd-moments`: equilibria, trajectories, supersolutions and uniform moment
//! bound experiments for truncated Becker-Döring systems.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bd_core::experiments::{
    emit_report, prepare, run_corpus, run_sweep, run_uniform_moment_experiment,
    supersolution_for_profile, ExperimentConfig, ExperimentOutcome,
};
use bd_core::solver::uniform_grid;
use bd_core::{check_assumptions, integrate, tail_density, Error, IntegrateOptions, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bd-moments", version, about)]
struct Cli {
    /// More log output (repeat for debug); RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment configuration (TOML); built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Critical values and the equilibrium for the configured density.
    Equilibrium {
        #[command(flatten)]
        config: ConfigArg,
        /// Also write `equilibrium.json` and `profile.csv` here.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Integrate and write the trajectory CSV (stdout without `--out`).
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Also dump the full state at every output time.
        #[arg(long)]
        states: bool,
    },
    /// Build and verify a supersolution over the initial tail profile, or
    /// check a random corpus with `--random`.
    Supersolution {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Number of random cases to draw instead of using the config.
        #[arg(long, value_name = "N")]
        random: Option<usize>,
        /// Seed for `--random`.
        #[arg(long, value_name = "U64", default_value_t = 0)]
        seed: u64,
    },
    /// Check the rate hypotheses on the truncation.
    Verify {
        #[command(flatten)]
        config: ConfigArg,
        /// Relative tolerance of the ratio-limit check.
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Run the full uniform moment bound pipeline.
    Experiment {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Run several configurations on a worker pool.
    Sweep {
        /// Configuration files; reports go to `<out>/<file stem>/`.
        #[arg(required = true, value_name = "PATH")]
        configs: Vec<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long, value_name = "N", default_value_t = 1)]
        workers: usize,
    },
    /// Print the default configuration with comments.
    ConfigTemplate,
}

fn load(arg: &ConfigArg) -> Result<ExperimentConfig> {
    match &arg.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn existing_dir(dir: &Path) -> Result<&Path> {
    if dir.is_dir() {
        Ok(dir)
    } else {
        Err(Error::io(
            dir,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "output directory does not exist",
            ),
        ))
    }
}

fn pretty(value: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn equilibrium(config: &ConfigArg, out: Option<&Path>) -> Result<i32> {
    let cfg = load(config)?;
    let setup = prepare(&cfg)?;
    let eq = &setup.equilibrium;
    print!("{}", eq.to_key_value());
    println!("omega={:.15e}", setup.omega);
    if let Some(dir) = out {
        let dir = existing_dir(dir)?;
        write(&dir.join("equilibrium.json"), &pretty(eq.as_ref())?)?;
        let mut csv = String::from("i,Q_i\n");
        for (k, q) in eq.profile.iter().enumerate() {
            csv.push_str(&format!("{},{q:.16e}\n", k + 1));
        }
        write(&dir.join("profile.csv"), &csv)?;
    }
    Ok(0)
}

fn simulate(config: &ConfigArg, out: Option<&Path>, states: bool) -> Result<i32> {
    let cfg = load(config)?;
    let setup = prepare(&cfg)?;
    let opts = IntegrateOptions {
        rel_tol: cfg.run.rel_tol,
        abs_tol: cfg.run.abs_tol,
        output_times: uniform_grid(0.0, cfg.run.t_end, cfg.run.outputs),
        tail_threshold: cfg.run.tail_threshold,
        moments: cfg.moments.k.clone(),
        stretched: cfg.moments.stretched.clone(),
        equilibrium: Some(setup.equilibrium.clone()),
        ..Default::default()
    };
    let traj = integrate(&setup.initial, &setup.model, cfg.run.t_end, &opts)?;
    let header: Vec<(String, String)> = std::iter::once(("model".to_string(), cfg.model.label()))
        .chain(
            setup
                .equilibrium
                .summary()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v)),
        )
        .collect();
    match out {
        Some(dir) => {
            let dir = existing_dir(dir)?;
            traj.write_csv(&dir.join("trajectory.csv"), &header)?;
            if states {
                traj.write_state_dumps(dir)?;
            }
            log::info!("max relative mass drift {:e}", traj.max_mass_drift());
        }
        None => print!("{}", traj.to_csv(&header)),
    }
    Ok(0)
}

fn supersolution(
    config: &ConfigArg,
    out: Option<&Path>,
    random: Option<usize>,
    seed: u64,
) -> Result<i32> {
    if let Some(count) = random {
        let results = run_corpus(seed, count);
        let failed: Vec<usize> = results
            .iter()
            .filter(|r| !r.passed())
            .map(|r| r.case.index)
            .collect();
        println!(
            "corpus seed {seed}: {} of {count} cases passed",
            count - failed.len()
        );
        if !failed.is_empty() {
            println!("failing cases: {failed:?}");
        }
        if let Some(dir) = out {
            write(&existing_dir(dir)?.join("corpus.json"), &pretty(&results)?)?;
        }
        return Ok(if failed.is_empty() { 0 } else { 2 });
    }
    let cfg = load(config)?;
    let setup = prepare(&cfg)?;
    let g = tail_density(&setup.initial.c).g;
    let (sup, verdict) = supersolution_for_profile(
        &setup.model,
        setup.equilibrium.z_s,
        setup.omega,
        setup.rho,
        cfg.supersolution.delta,
        cfg.supersolution.tol_tail,
        &g,
    )?;
    let dominates = sup.r.iter().zip(&g).all(|(r, g)| r >= g);
    let witness = serde_json::json!({
        "witness": sup.witness(),
        "verdict": verdict,
        "dominates_initial_tail": dominates,
    });
    print!("{}", pretty(&witness)?);
    if let Some(dir) = out {
        let dir = existing_dir(dir)?;
        write(&dir.join("supersolution.csv"), &sup.to_csv())?;
        write(&dir.join("witness.json"), &pretty(&witness)?)?;
    }
    Ok(if verdict.holds && dominates { 0 } else { 2 })
}

fn verify(config: &ConfigArg, tol: f64) -> Result<i32> {
    let cfg = load(config)?;
    cfg.validate()?;
    let model = cfg.build_model()?;
    let report = check_assumptions(&model, cfg.run.n, tol)?;
    print!("{}", pretty(&report)?);
    Ok(if report.all_hold() { 0 } else { 2 })
}

fn summarize(outcome: &ExperimentOutcome) {
    let r = &outcome.report;
    println!(
        "{}: verdict {}{}",
        r.model,
        r.verdict,
        r.failed_stage
            .map(|s| format!(" (failed at {s:?})"))
            .unwrap_or_default()
    );
    for b in &r.moment_bounds {
        println!(
            "  {}: observed sup {:.6e}, certified {:.6e}",
            b.weight, b.observed_sup, b.certified
        );
    }
}

fn experiment(config: &ConfigArg, out: Option<&Path>) -> Result<i32> {
    let cfg = load(config)?;
    if let Some(dir) = out {
        existing_dir(dir)?;
    }
    let outcome = run_uniform_moment_experiment(&cfg)?;
    if let Some(dir) = out {
        emit_report(&outcome, dir)?;
    }
    summarize(&outcome);
    Ok(outcome.report.exit_code())
}

fn sweep(paths: &[PathBuf], out: Option<&Path>, workers: usize) -> Result<i32> {
    let configs = paths
        .iter()
        .map(|p| ExperimentConfig::load(p))
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = out {
        existing_dir(dir)?;
    }
    let results = run_sweep(&configs, workers)?;
    let mut code = 0;
    for (path, result) in paths.iter().zip(results) {
        match result {
            Ok(outcome) => {
                if let Some(dir) = out {
                    let stem = path
                        .file_stem()
                        .map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
                    let sub = dir.join(stem);
                    std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
                    emit_report(&outcome, &sub)?;
                }
                summarize(&outcome);
                code = code.max(outcome.report.exit_code());
            }
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                code = code.max(e.exit_code());
            }
        }
    }
    Ok(code)
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Equilibrium { config, out } => equilibrium(&config, out.as_deref()),
        Command::Simulate {
            config,
            out,
            states,
        } => simulate(&config, out.as_deref(), states),
        Command::Supersolution {
            config,
            out,
            random,
            seed,
        } => supersolution(&config, out.as_deref(), random, seed),
        Command::Verify { config, tol } => verify(&config, tol),
        Command::Experiment { config, out } => experiment(&config, out.as_deref()),
        Command::Sweep {
            configs,
            out,
            workers,
        } => sweep(&configs, out.as_deref(), workers),
        Command::ConfigTemplate => {
            print!("{}", ExperimentConfig::template());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
