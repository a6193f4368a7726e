use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use thrustwalk::experiment::{
    run_collect, run_comparison, run_eval, run_scenario, run_train, Check, ControllerKind, ExperimentConfig, Scenario,
};

#[derive(Parser)]
#[command(name = "thrustwalk", version, about = "Thruster-assisted quadruped: data collection, training and closed-loop experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect a training dataset with the nominal controller.
    Collect(Common),
    /// Train the contact residual network on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV (overrides the config).
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Initial weights, e.g. for fine-tuning with frozen layers.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Compare nominal and augmented dynamics on the held-out split.
    EvalRmse {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Run a closed-loop scenario.
    Run {
        #[command(flatten)]
        common: Common,
        /// Scenario to run when no config file sets one.
        #[arg(long, value_enum)]
        scenario: Option<RunScenario>,
        #[arg(long, value_enum)]
        controller: Option<Controller>,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Run both controllers on the same seed and compare them.
        #[arg(long)]
        compare: bool,
    },
    /// Print the default configuration of a scenario as TOML.
    DefaultConfig {
        #[arg(long, value_enum, default_value = "push-recovery")]
        scenario: AnyScenario,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Controller {
    Nominal,
    Crd,
}

#[derive(Clone, Copy, ValueEnum)]
enum RunScenario {
    PushRecovery,
    CatGait,
    NormalGait,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnyScenario {
    Collect,
    Train,
    EvalRmse,
    PushRecovery,
    CatGait,
    NormalGait,
}

impl From<RunScenario> for Scenario {
    fn from(s: RunScenario) -> Self {
        match s {
            RunScenario::PushRecovery => Scenario::PushRecovery,
            RunScenario::CatGait => Scenario::CatGait,
            RunScenario::NormalGait => Scenario::NormalGait,
        }
    }
}

impl From<AnyScenario> for Scenario {
    fn from(s: AnyScenario) -> Self {
        match s {
            AnyScenario::Collect => Scenario::Collect,
            AnyScenario::Train => Scenario::Train,
            AnyScenario::EvalRmse => Scenario::EvalRmse,
            AnyScenario::PushRecovery => Scenario::PushRecovery,
            AnyScenario::CatGait => Scenario::CatGait,
            AnyScenario::NormalGait => Scenario::NormalGait,
        }
    }
}

/// Load the config (or defaults) and force the subcommand's scenario.
fn load(common: &Common, scenario: Option<Scenario>) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = scenario {
        cfg.scenario = s;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn print_checks(checks: &[Check]) {
    for c in checks {
        println!("  {} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Collect(common) => {
            let mut cfg = load(&common, Some(Scenario::Collect))?;
            if let Some(seed) = common.seed {
                cfg.collect.seed = seed;
            }
            let s = run_collect(&cfg)?;
            println!(
                "collected {} samples from {} rollouts ({} discarded): {} train, {} held out",
                s.n_samples,
                s.n_rollouts,
                s.n_discarded,
                s.n_train,
                s.n_held_out
            );
            println!("dataset written to {}", s.dataset.display());
        }
        Command::Train { common, dataset, weights } => {
            let mut cfg = load(&common, Some(Scenario::Train))?;
            if let Some(seed) = common.seed {
                cfg.train.seed = seed;
            }
            cfg.dataset = dataset.or(cfg.dataset);
            cfg.weights = weights.or(cfg.weights);
            let s = run_train(&cfg)?;
            for w in &s.dataset_warnings {
                eprintln!("warning: {w}");
            }
            if let (Some(first), Some(last)) = (s.history.first(), s.history.last()) {
                println!("L_grf {:.4e} -> {:.4e} over {} epochs", first.grf, last.grf, s.history.len());
            }
            if let Some(h) = &s.held_out {
                println!("held-out RMSE nominal {:.3?}, augmented {:.3?}", h.nominal, h.augmented);
            }
            println!("weights written to {}", s.weights.display());
        }
        Command::EvalRmse { common, dataset, weights } => {
            let mut cfg = load(&common, Some(Scenario::EvalRmse))?;
            cfg.dataset = dataset.or(cfg.dataset);
            cfg.weights = weights.or(cfg.weights);
            let s = run_eval(&cfg)?;
            for w in &s.dataset_warnings {
                eprintln!("warning: {w}");
            }
            let r = &s.report;
            println!("held-out samples: {}", r.n_samples);
            println!("RMSE nominal   (roll, pitch, yaw): {:.4?}", r.nominal);
            println!("RMSE augmented (roll, pitch, yaw): {:.4?}", r.augmented);
            println!("contact accuracy: {:.4}", r.contact_accuracy);
            print_checks(&s.checks);
        }
        Command::Run { common, scenario, controller, weights, compare } => {
            let mut cfg = load(&common, scenario.map(Into::into))?;
            if !cfg.scenario.is_closed_loop() {
                bail!("scenario {} is not a closed-loop run; use its own subcommand", cfg.scenario.name());
            }
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            cfg.weights = weights.or(cfg.weights);
            if let Some(c) = controller {
                cfg.controller = match c {
                    Controller::Nominal => ControllerKind::Nominal,
                    Controller::Crd => ControllerKind::Crd,
                };
            }
            if compare {
                cfg.controller = ControllerKind::Crd;
                cfg.validate()?;
                let cmp = run_comparison(&cfg)?;
                for (name, m) in [("nominal", &cmp.nominal), ("crd", &cmp.crd)] {
                    println!(
                        "{name:8} recovered {:5} at {:>8}  max roll {:6.2} deg  roll RMSE {:.5} rad  thrust {:.4} N",
                        m.recovered,
                        m.recovery_time.map_or("-".into(), |t| format!("{t:.3} s")),
                        m.max_abs_roll_deg,
                        m.roll_rmse,
                        m.mean_thruster_force
                    );
                }
                print_checks(&cmp.checks);
            } else {
                let out = run_scenario(&cfg)?;
                let m = &out.metrics;
                println!(
                    "{} / {}: recovered {} at {}, max roll {:.2} deg, roll RMSE {:.5} rad, mean thrust {:.4} N",
                    cfg.scenario.name(),
                    cfg.controller.name(),
                    m.recovered,
                    m.recovery_time.map_or("-".into(), |t| format!("{t:.3} s")),
                    m.max_abs_roll_deg,
                    m.roll_rmse,
                    m.mean_thruster_force
                );
                print_checks(&out.verdict.checks);
            }
            println!("outputs written to {}", cfg.out_dir.display());
        }
        Command::DefaultConfig { scenario } => {
            let cfg = ExperimentConfig { scenario: scenario.into(), ..Default::default() };
            print!("{}", cfg.to_toml()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
