//! `spg`: build, analyze and simulate capacitated service-provision games.

mod figures;
mod spec;
mod tasks;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use spec::{DynAlgo, ExperimentSpec, SignOpt, Task, TaskOptions};
use spg_core::ensemble::{ActivityModel, EnsembleParams};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "spg",
    about = "Capacitated service-provision games: ensembles, dynamics, and equilibrium landscapes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every task.
#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment spec JSON; command-line flags override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; all randomness derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of ensemble instances.
    #[arg(long)]
    instances: Option<usize>,
    /// Run on a single instance file instead of an ensemble.
    #[arg(long)]
    instance: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct EnsembleFlags {
    #[arg(long)]
    n_users: Option<usize>,
    #[arg(long)]
    n_units: Option<usize>,
    #[arg(long)]
    capacity: Option<u32>,
    /// Edge probability q.
    #[arg(long, short = 'q')]
    edge_prob: Option<f64>,
    #[arg(long)]
    w_min: Option<u32>,
    #[arg(long)]
    w_max: Option<u32>,
    #[arg(long)]
    v_min: Option<u32>,
    #[arg(long)]
    v_max: Option<u32>,
    /// Weight/value Pearson correlation c.
    #[arg(long, short = 'c', allow_hyphen_values = true)]
    correlation: Option<f64>,
    /// Draw per-user activity probabilities uniformly in (0, 1).
    #[arg(long)]
    stochastic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sample instances from the random ensemble and write them as JSON.
    Gen {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ensemble: EnsembleFlags,
    },
    /// Run an equilibrium-reaching dynamics and record per-run outcomes.
    Dyn {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ensemble: EnsembleFlags,
        /// greedy | br | brb | gbr | ad
        #[arg(long)]
        algo: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<f64>,
        /// Comma-separated γ grid (gbr only), e.g. "-4,-2,0,2,4".
        #[arg(long, allow_hyphen_values = true)]
        gamma_grid: Option<String>,
        #[arg(long)]
        runs: Option<usize>,
        /// Arrivals/departures steps (default 100·N).
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
    },
    /// Belief propagation at a single bias value.
    Bp {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ensemble: EnsembleFlags,
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        damping: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Warm-started μ sweep; emits landscape CSVs and a transition report.
    Musweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ensemble: EnsembleFlags,
        #[arg(long, allow_hyphen_values = true)]
        mu_from: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        mu_to: Option<f64>,
        #[arg(long)]
        mu_step: Option<f64>,
        /// Sweep both directions (default true).
        #[arg(long)]
        both_directions: Option<bool>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        damping: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Reinforced Max-Sum for extremal-utility equilibria.
    Maxsum {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ensemble: EnsembleFlags,
        /// max | min
        #[arg(long)]
        sign: Option<String>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// BP-guided decimation to one concrete equilibrium.
    Decimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ensemble: EnsembleFlags,
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<f64>,
    },
    /// Mirror-message BP for stochastic participation.
    Mirror {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ensemble: EnsembleFlags,
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<f64>,
    },
    /// Validate the mirror approximation against activity sampling.
    MirrorValidate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ensemble: EnsembleFlags,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Exhaustively enumerate the Nash equilibria (small instances).
    Enumerate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ensemble: EnsembleFlags,
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Quenched average of the observables over user activity.
    Quenched {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ensemble: EnsembleFlags,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        exhaustive: Option<bool>,
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Digest task outputs into plot-ready curve files.
    FigureData {
        #[command(flatten)]
        common: Common,
        /// entropy-curve | gamma-scan | mirror-hist
        #[arg(long)]
        kind: Option<String>,
        /// Directory holding the task outputs.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        good_threshold: Option<f64>,
    },
}

fn base_spec(
    task: Task,
    common: &Common,
    ensemble: Option<&EnsembleFlags>,
) -> Result<ExperimentSpec> {
    let mut spec = match &common.spec {
        Some(path) => {
            let loaded = ExperimentSpec::load(path)?;
            if loaded.task != task {
                bail!(
                    "spec file task {:?} does not match the invoked subcommand {:?}",
                    loaded.task,
                    task
                );
            }
            loaded
        }
        None => ExperimentSpec {
            task,
            ensemble: None,
            instance_file: None,
            instances: 1,
            seed: 0,
            out: PathBuf::from("out"),
            options: TaskOptions::default(),
        },
    };
    if let Some(out) = &common.out {
        spec.out = out.clone();
    }
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    if let Some(n) = common.instances {
        spec.instances = n;
    }
    if let Some(path) = &common.instance {
        spec.instance_file = Some(path.clone());
    }
    if let Some(flags) = ensemble {
        apply_ensemble_flags(&mut spec, flags);
    }
    Ok(spec)
}

fn apply_ensemble_flags(spec: &mut ExperimentSpec, flags: &EnsembleFlags) {
    let any = flags.n_users.is_some()
        || flags.n_units.is_some()
        || flags.capacity.is_some()
        || flags.edge_prob.is_some()
        || flags.w_min.is_some()
        || flags.w_max.is_some()
        || flags.v_min.is_some()
        || flags.v_max.is_some()
        || flags.correlation.is_some()
        || flags.stochastic;
    if !any && spec.ensemble.is_none() {
        return;
    }
    let mut params = spec.ensemble.clone().unwrap_or(EnsembleParams {
        n_users: 100,
        n_units: 10,
        capacity: 50,
        edge_prob: 0.3,
        w_min: 6,
        w_max: 15,
        v_min: 1,
        v_max: 10,
        correlation: 0.0,
        seed: 0,
        activity: ActivityModel::AllActive,
    });
    if let Some(x) = flags.n_users {
        params.n_users = x;
    }
    if let Some(x) = flags.n_units {
        params.n_units = x;
    }
    if let Some(x) = flags.capacity {
        params.capacity = x;
    }
    if let Some(x) = flags.edge_prob {
        params.edge_prob = x;
    }
    if let Some(x) = flags.w_min {
        params.w_min = x;
    }
    if let Some(x) = flags.w_max {
        params.w_max = x;
    }
    if let Some(x) = flags.v_min {
        params.v_min = x;
    }
    if let Some(x) = flags.v_max {
        params.v_max = x;
    }
    if let Some(x) = flags.correlation {
        params.correlation = x;
    }
    if flags.stochastic {
        params.activity = ActivityModel::UniformIid;
    }
    spec.ensemble = Some(params);
}

fn parse_algo(s: &str) -> Result<DynAlgo> {
    Ok(match s {
        "greedy" => DynAlgo::Greedy,
        "br" => DynAlgo::Br,
        "brb" => DynAlgo::Brb,
        "gbr" => DynAlgo::Gbr,
        "ad" => DynAlgo::Ad,
        other => bail!("unknown dynamics '{other}' (greedy | br | brb | gbr | ad)"),
    })
}

fn main() -> Result<()> {
    if let Ok(workers) = std::env::var("SPG_WORKERS") {
        let n: usize = workers.parse().map_err(|_| {
            anyhow::anyhow!("SPG_WORKERS must be a positive integer, got '{workers}'")
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
    let cli = Cli::parse();
    let spec = match &cli.command {
        Command::Gen { common, ensemble } => base_spec(Task::Gen, common, Some(ensemble))?,
        Command::Dyn {
            common,
            ensemble,
            algo,
            gamma,
            gamma_grid,
            runs,
            steps,
            burn_in,
        } => {
            let mut spec = base_spec(Task::Dyn, common, Some(ensemble))?;
            if let Some(a) = algo {
                spec.options.algo = Some(parse_algo(a)?);
            }
            if gamma.is_some() {
                spec.options.gamma = *gamma;
            }
            if let Some(grid) = gamma_grid {
                let parsed: Result<Vec<f64>, _> =
                    grid.split(',').map(|s| s.trim().parse::<f64>()).collect();
                spec.options.gamma_grid = Some(parsed.map_err(|e| anyhow::anyhow!("{e}"))?);
            }
            if runs.is_some() {
                spec.options.runs = *runs;
            }
            if steps.is_some() {
                spec.options.steps = *steps;
            }
            if burn_in.is_some() {
                spec.options.burn_in = *burn_in;
            }
            spec
        }
        Command::Bp {
            common,
            ensemble,
            mu,
            tol,
            damping,
            max_iter,
        } => {
            let mut spec = base_spec(Task::Bp, common, Some(ensemble))?;
            override_bp(&mut spec.options, *mu, *tol, *damping, *max_iter);
            spec
        }
        Command::Musweep {
            common,
            ensemble,
            mu_from,
            mu_to,
            mu_step,
            both_directions,
            tol,
            damping,
            max_iter,
        } => {
            let mut spec = base_spec(Task::Musweep, common, Some(ensemble))?;
            if mu_from.is_some() {
                spec.options.mu_from = *mu_from;
            }
            if mu_to.is_some() {
                spec.options.mu_to = *mu_to;
            }
            if mu_step.is_some() {
                spec.options.mu_step = *mu_step;
            }
            if both_directions.is_some() {
                spec.options.both_directions = *both_directions;
            }
            override_bp(&mut spec.options, None, *tol, *damping, *max_iter);
            spec
        }
        Command::Maxsum {
            common,
            ensemble,
            sign,
            rho,
            restarts,
        } => {
            let mut spec = base_spec(Task::Maxsum, common, Some(ensemble))?;
            if let Some(s) = sign {
                spec.options.sign = Some(match s.as_str() {
                    "max" => SignOpt::Max,
                    "min" => SignOpt::Min,
                    other => bail!("unknown sign '{other}' (max | min)"),
                });
            }
            if rho.is_some() {
                spec.options.rho = *rho;
            }
            if restarts.is_some() {
                spec.options.restarts = *restarts;
            }
            spec
        }
        Command::Decimate { common, ensemble, mu } => {
            let mut spec = base_spec(Task::Decimate, common, Some(ensemble))?;
            if mu.is_some() {
                spec.options.mu = *mu;
            }
            spec
        }
        Command::Mirror { common, ensemble, mu } => {
            let mut spec = base_spec(Task::Mirror, common, Some(ensemble))?;
            if mu.is_some() {
                spec.options.mu = *mu;
            }
            spec
        }
        Command::MirrorValidate {
            common,
            ensemble,
            samples,
        } => {
            let mut spec = base_spec(Task::MirrorValidate, common, Some(ensemble))?;
            if samples.is_some() {
                spec.options.samples = *samples;
            }
            spec
        }
        Command::Enumerate {
            common,
            ensemble,
            budget,
        } => {
            let mut spec = base_spec(Task::Enumerate, common, Some(ensemble))?;
            if budget.is_some() {
                spec.options.budget = *budget;
            }
            spec
        }
        Command::Quenched {
            common,
            ensemble,
            samples,
            exhaustive,
            budget,
        } => {
            let mut spec = base_spec(Task::Quenched, common, Some(ensemble))?;
            if samples.is_some() {
                spec.options.samples = *samples;
            }
            if exhaustive.is_some() {
                spec.options.exhaustive = *exhaustive;
            }
            if budget.is_some() {
                spec.options.budget = *budget;
            }
            spec
        }
        Command::FigureData {
            common,
            kind,
            input,
            bins,
            good_threshold,
        } => {
            let mut spec = base_spec(Task::FigureData, common, None)?;
            if kind.is_some() {
                spec.options.kind = kind.clone();
            }
            if input.is_some() {
                spec.options.input = input.clone();
            }
            if bins.is_some() {
                spec.options.bins = *bins;
            }
            if good_threshold.is_some() {
                spec.options.good_threshold = *good_threshold;
            }
            spec
        }
    };
    let summary = tasks::run(&spec)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn override_bp(
    options: &mut TaskOptions,
    mu: Option<f64>,
    tol: Option<f64>,
    damping: Option<f64>,
    max_iter: Option<usize>,
) {
    if mu.is_some() {
        options.mu = mu;
    }
    if tol.is_some() {
        options.tol = tol;
    }
    if damping.is_some() {
        options.damping = damping;
    }
    if max_iter.is_some() {
        options.max_iter = max_iter;
    }
}
