//! Command-line front end: load a JSON experiment document, dispatch
//! to the harness, and emit CSV/JSON/SVG artifacts.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime or assert
//! failure, 3 diagnostic failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mnlkb_core::config::ExperimentConfig;
use mnlkb_core::{harness, planner, Error as CoreError};

mod output;

#[derive(Parser)]
#[command(
    name = "mnlkb",
    about = "MNL bandit with knapsacks: simulate, benchmark, diagnose"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write runs.csv,
    /// diagnostics.json, and (with horizons configured)
    /// regret_curve.svg into the output directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the document seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the document replication count.
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Solve the fluid benchmark for an explicit instance and print
    /// its value and support.
    Opt {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the statistical diagnostics; exits nonzero if any check
    /// fails.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
    },
}

enum CliError {
    Config(String),
    Runtime(String),
    Diagnostic(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Diagnostic(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) | CliError::Diagnostic(m) => m,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(_) | CoreError::InvalidArgument(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            replications,
        } => cmd_run(&config, &out, seed, replications),
        Command::Opt { config } => cmd_opt(&config),
        Command::Diagnose { config } => cmd_diagnose(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    ExperimentConfig::from_json_str(&text).map_err(CliError::from)
}

fn cmd_run(
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    replications: Option<usize>,
) -> Result<(), CliError> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = replications {
        if r == 0 {
            return Err(CliError::Config("replications must be at least 1".into()));
        }
        cfg.replications = r;
    }
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;

    // Inventory asserts in the run loop panic; map those to the
    // runtime exit code with a dump the user can inspect.
    let outcome = std::panic::catch_unwind(|| -> Result<(), CliError> {
        let (stats, traces) = harness::run_experiment_with_traces(&cfg).map_err(CliError::from)?;
        output::write_atomic(&out.join("runs.csv"), harness::runs_csv(&stats).as_bytes())
            .map_err(CliError::Runtime)?;

        let report = harness::diagnostics(&cfg).map_err(CliError::from)?;
        let json =
            serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
        output::write_atomic(&out.join("diagnostics.json"), json.as_bytes())
            .map_err(CliError::Runtime)?;

        if cfg.run_options.record_periods {
            let mut epochs = String::new();
            for (policy, policy_traces) in &traces {
                let csv = harness::epochs_csv(policy, policy_traces);
                if epochs.is_empty() {
                    epochs = csv;
                } else {
                    // Drop the duplicate header.
                    epochs.push_str(csv.split_once('\n').map(|x| x.1).unwrap_or(""));
                }
            }
            output::write_atomic(&out.join("epochs.csv"), epochs.as_bytes())
                .map_err(CliError::Runtime)?;
        }

        if let Some(horizons) = &cfg.horizons {
            let scaling = harness::regret_scaling(&cfg, horizons).map_err(CliError::from)?;
            output::write_atomic(
                &out.join("regret_curve.svg"),
                output::regret_curve_svg(&scaling).as_bytes(),
            )
            .map_err(CliError::Runtime)?;
        }
        println!("wrote {}", out.join("runs.csv").display());
        Ok(())
    });
    match outcome {
        Ok(r) => r,
        Err(panic) => {
            let msg = panic_message(&panic);
            let dump = out.join("abort.txt");
            let _ = std::fs::write(&dump, &msg);
            Err(CliError::Runtime(format!(
                "run aborted: {msg} (dump at {})",
                dump.display()
            )))
        }
    }
}

fn panic_message(panic: &Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = panic.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic".to_string()
    }
}

fn cmd_opt(config: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    if !cfg.instance.is_explicit() {
        return Err(CliError::Config(
            "the opt command needs an explicit instance (generators are sampled per run)".into(),
        ));
    }
    let inst = cfg.instance.realize(cfg.seed).map_err(CliError::from)?;
    let (value, dist) = planner::solve_opt_lp(&inst).map_err(CliError::from)?;
    println!("opt_lp_value,{value}");
    println!("opt,{}", inst.horizon() as f64 * value);
    print!("{}", harness::distribution_csv(&dist));
    Ok(())
}

fn cmd_diagnose(config: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let report = harness::diagnostics(&cfg).map_err(CliError::from)?;
    for check in &report.checks {
        println!(
            "{}: statistic {} expected {} +/- {} ... {}",
            check.name,
            check.statistic,
            check.expected,
            check.tolerance,
            if check.pass { "pass" } else { "FAIL" }
        );
    }
    if report.all_pass() {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        Err(CliError::Diagnostic(format!(
            "failed checks: {}",
            failed.join(", ")
        )))
    }
}
