//! Task runners: each experiment fans out over instances (parallel), and
//! every random stream is derived from (seed, instance index, run index).

use crate::spec::{DynAlgo, ExperimentSpec, SignOpt, Task, TaskOptions};
use anyhow::{anyhow, bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use spg_core::bp::{
    bethe_thermodynamics, decimate, marginals, mu_sweep, run_bp, transition_report, BpOptions,
    DecimateOptions, FactorGraph, SweepOptions,
};
use spg_core::dynamics::{
    arrivals_departures, best_response_run, greedy, init_assignment, InitRule,
};
use spg_core::ensemble::{derive_seed, sample_instance, utility_upper_bound_deterministic};
use spg_core::game::GameInstance;
use spg_core::io;
use spg_core::maxsum::{run_maxsum, MaxSumOptions, Sign};
use spg_core::mirror::{
    run_bp_mirror, stochastic_thermodynamics, validate_mirror, MirrorValidationOptions,
};
use spg_core::oracle::{
    enumerate_nash, quenched_average, ObservableKind, QuenchedMode, DEFAULT_STATE_BUDGET,
};
use std::fmt::Write as _;
use std::path::Path;

pub fn run(spec: &ExperimentSpec) -> Result<serde_json::Value> {
    spec.validate()?;
    std::fs::create_dir_all(&spec.out)
        .with_context(|| format!("creating output dir {}", spec.out.display()))?;
    let summary = match spec.task {
        Task::Gen => run_gen(spec)?,
        Task::Enumerate => run_enumerate(spec)?,
        Task::Quenched => run_quenched(spec)?,
        Task::Dyn => run_dyn(spec)?,
        Task::Bp => run_bp_task(spec)?,
        Task::Musweep => run_musweep(spec)?,
        Task::Maxsum => run_maxsum_task(spec)?,
        Task::Decimate => run_decimate(spec)?,
        Task::Mirror => run_mirror(spec)?,
        Task::MirrorValidate => run_mirror_validate(spec)?,
        Task::FigureData => crate::figures::run(spec)?,
    };
    let path = spec.out.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// The instances of this experiment, materialized in index order.
fn instances(spec: &ExperimentSpec) -> Result<Vec<GameInstance>> {
    if let Some(path) = &spec.instance_file {
        let inst = io::read_instance(path).map_err(|e| anyhow!("{e}"))?;
        return Ok(vec![inst; spec.instances]);
    }
    let params = spec.ensemble.as_ref().expect("validated");
    (0..spec.instances)
        .map(|i| {
            let mut p = params.clone();
            p.seed = derive_seed(spec.seed, i as u64);
            sample_instance(&p).map_err(|e| anyhow!("{e}"))
        })
        .collect()
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::with_capacity(rows.len() * 32 + header.len() + 1);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Mean and standard deviation of the mean.
fn mean_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn aggregate(metrics: &[(&str, Vec<f64>)], instances: usize) -> serde_json::Value {
    let mut obj = serde_json::Map::new();
    obj.insert("instances".into(), json!(instances));
    for (name, values) in metrics {
        let (mean, sem) = mean_sem(values);
        obj.insert(
            (*name).to_string(),
            json!({"mean": mean, "std_of_mean": sem, "n": values.len()}),
        );
    }
    serde_json::Value::Object(obj)
}

fn bp_options(opts: &TaskOptions, seed: u64) -> BpOptions {
    BpOptions {
        damping: opts.damping.unwrap_or(0.0),
        tol: opts.tol.unwrap_or(1e-10),
        max_iter: opts.max_iter.unwrap_or(2000),
        schedule_seed: seed,
        domain: spg_core::bp::DomainChoice::Auto,
    }
}

fn run_gen(spec: &ExperimentSpec) -> Result<serde_json::Value> {
    let insts = instances(spec)?;
    let mut edge_counts = Vec::new();
    for (i, inst) in insts.iter().enumerate() {
        let mut params = spec.ensemble.clone();
        if let Some(p) = params.as_mut() {
            p.seed = derive_seed(spec.seed, i as u64);
        }
        io::write_instance(&spec.out.join(format!("instance_{i:03}.json")), inst, params)
            .map_err(|e| anyhow!("{e}"))?;
        edge_counts.push(inst.n_edges() as f64);
    }
    Ok(aggregate(&[("edges", edge_counts)], insts.len()))
}

fn run_enumerate(spec: &ExperimentSpec) -> Result<serde_json::Value> {
    let insts = instances(spec)?;
    let budget = spec.options.budget.unwrap_or(DEFAULT_STATE_BUDGET);
    let mut counts = Vec::new();
    let mut u_min = Vec::new();
    let mut u_max = Vec::new();
    for (i, inst) in insts.iter().enumerate() {
        let census = enumerate_nash(inst, None, budget).map_err(|e| anyhow!("{e}"))?;
        io::write_census(&spec.out.join(format!("census_{i:03}.json")), &census)
            .map_err(|e| anyhow!("{e}"))?;
        counts.push(census.count as f64);
        u_min.push(census.min_utility().unwrap_or(0) as f64);
        u_max.push(census.max_utility().unwrap_or(0) as f64);
    }
    Ok(aggregate(
        &[
            ("equilibria", counts),
            ("min_utility", u_min),
            ("max_utility", u_max),
        ],
        insts.len(),
    ))
}

fn run_quenched(spec: &ExperimentSpec) -> Result<serde_json::Value> {
    let insts = instances(spec)?;
    let budget = spec.options.budget.unwrap_or(DEFAULT_STATE_BUDGET);
    let exhaustive = spec.options.exhaustive.unwrap_or(true);
    let samples = spec.options.samples.unwrap_or(1000);
    let mut by_kind: [Vec<f64>; 3] = Default::default();
    for (i, inst) in insts.iter().enumerate() {
        let mut vals = Vec::new();
        for (k, kind) in [
            ObservableKind::Utility,
            ObservableKind::Disconnected,
            ObservableKind::SpareCapacity,
        ]
        .into_iter()
        .enumerate()
        {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, (i * 3 + k) as u64));
            let mode = if exhaustive {
                QuenchedMode::Exhaustive
            } else {
                QuenchedMode::Sampled(samples, &mut rng)
            };
            let v = quenched_average(inst, kind, mode, budget).map_err(|e| anyhow!("{e}"))?;
            by_kind[k].push(v);
            vals.push(v);
        }
        std::fs::write(
            spec.out.join(format!("quenched_{i:03}.json")),
            serde_json::to_string_pretty(&json!({
                "utility": vals[0], "disconnected": vals[1], "spare_capacity": vals[2]
            }))?,
        )?;
    }
    Ok(aggregate(
        &[
            ("utility", by_kind[0].clone()),
            ("disconnected", by_kind[1].clone()),
            ("spare_capacity", by_kind[2].clone()),
        ],
        insts.len(),
    ))
}

struct DynRow {
    run_id: usize,
    gamma: Option<f64>,
    init_u: i64,
    final_u: i64,
    disconnected: usize,
    spare: i64,
    rounds: usize,
}

fn one_dyn_run(
    inst: &GameInstance,
    algo: DynAlgo,
    gamma: f64,
    steps: usize,
    burn_in: usize,
    seed: u64,
) -> DynRow {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all_active = vec![true; inst.n_users()];
    let (x, init_u, rounds) = match algo {
        DynAlgo::Greedy => {
            let run = greedy(inst, &mut rng);
            (run.final_assignment, run.init_utility, run.rounds)
        }
        DynAlgo::Br | DynAlgo::Brb | DynAlgo::Gbr => {
            let rule = match algo {
                DynAlgo::Br => InitRule::Random,
                DynAlgo::Brb => InitRule::Worst,
                _ => InitRule::Gamma(gamma),
            };
            let x0 = init_assignment(inst, rule, &all_active, &mut rng);
            let init_u = inst.utility(&x0);
            let run = best_response_run(inst, x0, &mut rng, false);
            (run.final_assignment, init_u, run.rounds)
        }
        DynAlgo::Ad => {
            let run = arrivals_departures(inst, steps, burn_in, &mut rng);
            (run.final_assignment, 0, steps)
        }
    };
    assert!(inst.is_nash(&x), "dynamics must certify an equilibrium");
    let obs = inst.observables(&x).expect("final state feasible");
    DynRow {
        run_id: 0,
        gamma: None,
        init_u,
        final_u: obs.total_utility,
        disconnected: obs.disconnected,
        spare: obs.spare_capacity,
        rounds,
    }
}

fn run_dyn(spec: &ExperimentSpec) -> Result<serde_json::Value> {
    let algo = spec
        .options
        .algo
        .ok_or_else(|| anyhow!("dyn requires --algo"))?;
    let runs = spec.options.runs.unwrap_or(100);
    let insts = instances(spec)?;
    let gammas: Vec<Option<f64>> = match (&spec.options.gamma_grid, spec.options.gamma) {
        (Some(grid), _) if algo == DynAlgo::Gbr => grid.iter().copied().map(Some).collect(),
        (_, g) => vec![if algo == DynAlgo::Gbr {
            Some(g.unwrap_or(0.0))
        } else {
            None
        }],
    };
    let mut final_means = Vec::new();
    let mut init_means = Vec::new();
    for (i, inst) in insts.iter().enumerate() {
        let steps = spec.options.steps.unwrap_or(100 * inst.n_users());
        let burn_in = spec.options.burn_in.unwrap_or(steps / 10);
        let rows: Vec<DynRow> = gammas
            .par_iter()
            .flat_map(|g| {
                (0..runs).into_par_iter().map(move |r| {
                    let gamma = g.unwrap_or(0.0);
                    let salt = (r as u64) ^ (g.map_or(0, |x| x.to_bits()).rotate_left(17));
                    let seed = derive_seed(derive_seed(spec.seed, i as u64), salt);
                    let mut row = one_dyn_run(inst, algo, gamma, steps, burn_in, seed);
                    row.run_id = r;
                    row.gamma = *g;
                    row
                })
            })
            .collect();
        let mut sorted: Vec<&DynRow> = rows.iter().collect();
        sorted.sort_by(|a, b| {
            a.gamma
                .unwrap_or(0.0)
                .total_cmp(&b.gamma.unwrap_or(0.0))
                .then(a.run_id.cmp(&b.run_id))
        });
        let csv_rows: Vec<String> = sorted
            .iter()
            .map(|r| {
                let mut s = String::new();
                write!(
                    s,
                    "{},{},{},{},{},{}",
                    r.run_id, r.init_u, r.final_u, r.disconnected, r.spare, r.rounds
                )
                .unwrap();
                if let Some(g) = r.gamma {
                    write!(s, ",{g}").unwrap();
                }
                s
            })
            .collect();
        let header = if gammas[0].is_some() {
            "run_id,init_U,final_U,D,Cstar,rounds,gamma"
        } else {
            "run_id,init_U,final_U,D,Cstar,rounds"
        };
        write_csv(&spec.out.join(format!("dyn_{i:03}.csv")), header, &csv_rows)?;
        let fu: Vec<f64> = rows.iter().map(|r| r.final_u as f64).collect();
        let iu: Vec<f64> = rows.iter().map(|r| r.init_u as f64).collect();
        final_means.push(fu.iter().sum::<f64>() / fu.len() as f64);
        init_means.push(iu.iter().sum::<f64>() / iu.len() as f64);
    }
    Ok(aggregate(
        &[("final_U", final_means), ("init_U", init_means)],
        insts.len(),
    ))
}

fn run_bp_task(spec: &ExperimentSpec) -> Result<serde_json::Value> {
    let mu = spec.options.mu.unwrap_or(0.0);
    let insts = instances(spec)?;
    let mut entropies = Vec::new();
    let mut utilities = Vec::new();
    let mut converged_all = true;
    for (i, inst) in insts.iter().enumerate() {
        let opts = bp_options(&spec.options, derive_seed(spec.seed, i as u64));
        let (ms, report) = run_bp(inst, mu, &opts, None).map_err(|e| anyhow!("{e}"))?;
        let graph = FactorGraph::new(inst);
        let point = bethe_thermodynamics(&graph, &ms, report.converged, report.iterations);
        converged_all &= report.converged;
        entropies.push(point.entropy);
        utilities.push(point.utility);
        std::fs::write(
            spec.out.join(format!("bp_{i:03}.json")),
            serde_json::to_string_pretty(&point)?,
        )?;
        let m = marginals(&graph, &ms);
        let rows: Vec<String> = inst
            .edges()
            .iter()
            .enumerate()
            .map(|(id, e)| format!("{},{},{}", e.user, e.unit, m.edge_serve[id]))
            .collect();
        write_csv(
            &spec.out.join(format!("bp_marginals_{i:03}.csv")),
            "user,unit,m",
            &rows,
        )?;
    }
    if !converged_all {
        eprintln!("warning: BP did not converge on every instance");
    }
    Ok(aggregate(
        &[("entropy", entropies), ("utility", utilities)],
        insts.len(),
    ))
}

fn sweep_grid(opts: &TaskOptions) -> Result<Vec<f64>> {
    let from = opts.mu_from.unwrap_or(-1.0);
    let to = opts.mu_to.unwrap_or(1.0);
    let step = opts.mu_step.unwrap_or(0.1);
    if step <= 0.0 || to < from {
        bail!("musweep needs mu_from <= mu_to and a positive mu_step");
    }
    let n = ((to - from) / step).round() as usize + 1;
    Ok((0..n).map(|k| from + k as f64 * step).collect())
}

fn sweep_csv(result: &spg_core::bp::SweepResult) -> Vec<String> {
    result
        .points
        .iter()
        .map(|p| {
            format!(
                "{},{},{},{},{},{},{},{},{}",
                p.mu,
                p.utility,
                p.disconnected,
                p.spare_capacity,
                p.entropy,
                p.free_energy,
                p.converged,
                p.iterations,
                p.branch
            )
        })
        .collect()
}

const SWEEP_HEADER: &str = "mu,U,D,Cstar,S,muF,converged,iterations,branch";

fn run_musweep(spec: &ExperimentSpec) -> Result<serde_json::Value> {
    let grid = sweep_grid(&spec.options)?;
    let both = spec.options.both_directions.unwrap_or(true);
    let insts = instances(spec)?;
    let mut branch_counts = Vec::new();
    for (i, inst) in insts.iter().enumerate() {
        let opts = SweepOptions {
            bp: bp_options(&spec.options, derive_seed(spec.seed, i as u64)),
            ..SweepOptions::default()
        };
        let up = mu_sweep(inst, &grid, &opts, None);
        write_csv(
            &spec.out.join(format!("musweep_up_{i:03}.csv")),
            SWEEP_HEADER,
            &sweep_csv(&up),
        )?;
        branch_counts.push(up.n_branches as f64);
        if both {
            let mut rev: Vec<f64> = grid.clone();
            rev.reverse();
            let down = mu_sweep(inst, &rev, &opts, None);
            write_csv(
                &spec.out.join(format!("musweep_down_{i:03}.csv")),
                SWEEP_HEADER,
                &sweep_csv(&down),
            )?;
            let u_plus = utility_upper_bound_deterministic(inst) as f64;
            let report = transition_report(&up, &down, u_plus);
            std::fs::write(
                spec.out.join(format!("transition_{i:03}.json")),
                serde_json::to_string_pretty(&report)?,
            )?;
        }
    }
    Ok(aggregate(&[("branches", branch_counts)], insts.len()))
}

fn run_maxsum_task(spec: &ExperimentSpec) -> Result<serde_json::Value> {
    let sign = match spec.options.sign.unwrap_or(SignOpt::Max) {
        SignOpt::Max => Sign::Maximize,
        SignOpt::Min => Sign::Minimize,
    };
    let opts = MaxSumOptions {
        rho: spec.options.rho.unwrap_or(1e-3),
        restarts: spec.options.restarts.unwrap_or(10),
        ..MaxSumOptions::default()
    };
    let insts = instances(spec)?;
    let mut utilities = Vec::new();
    let mut repaired = Vec::new();
    for (i, inst) in insts.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, i as u64));
        let result = run_maxsum(inst, sign, &opts, &mut rng);
        // Certificate line: utility, disconnections, spare capacity, Nash.
        println!(
            "instance {i}: U={} D={} Cstar={} is_nash={}",
            result.utility, result.disconnected, result.spare_capacity, result.is_nash
        );
        std::fs::write(
            spec.out.join(format!("maxsum_{i:03}.json")),
            serde_json::to_string_pretty(&result)?,
        )?;
        std::fs::write(
            spec.out.join(format!("assignment_{i:03}.json")),
            serde_json::to_string(&result.assignment)?,
        )?;
        utilities.push(result.utility as f64);
        repaired.push(if result.repaired { 1.0 } else { 0.0 });
    }
    Ok(aggregate(
        &[("utility", utilities), ("repaired", repaired)],
        insts.len(),
    ))
}

fn run_decimate(spec: &ExperimentSpec) -> Result<serde_json::Value> {
    let mu = spec.options.mu.unwrap_or(0.0);
    let insts = instances(spec)?;
    let mut utilities = Vec::new();
    for (i, inst) in insts.iter().enumerate() {
        let opts = DecimateOptions {
            bp: bp_options(&spec.options, derive_seed(spec.seed, i as u64)),
            ..DecimateOptions::default()
        };
        let (x, report) = decimate(inst, mu, &opts).map_err(|e| anyhow!("{e}"))?;
        if report.failed {
            bail!("decimation failed on instance {i}");
        }
        io::write_assignment(&spec.out.join(format!("assignment_{i:03}.json")), &x)
            .map_err(|e| anyhow!("{e}"))?;
        let obs = inst.observables(&x).map_err(|e| anyhow!("{e}"))?;
        std::fs::write(
            spec.out.join(format!("decimate_{i:03}.json")),
            serde_json::to_string_pretty(&json!({
                "utility": obs.total_utility,
                "disconnected": obs.disconnected,
                "spare_capacity": obs.spare_capacity,
                "repaired": report.repaired,
                "retries": report.retries,
            }))?,
        )?;
        utilities.push(obs.total_utility as f64);
    }
    Ok(aggregate(&[("utility", utilities)], insts.len()))
}

fn run_mirror(spec: &ExperimentSpec) -> Result<serde_json::Value> {
    let mu = spec.options.mu.unwrap_or(0.0);
    let insts = instances(spec)?;
    let mut utilities = Vec::new();
    let mut entropies = Vec::new();
    for (i, inst) in insts.iter().enumerate() {
        let opts = bp_options(&spec.options, derive_seed(spec.seed, i as u64));
        let (ms, report) = run_bp_mirror(inst, mu, &opts, None).map_err(|e| anyhow!("{e}"))?;
        let point = stochastic_thermodynamics(inst, &ms, report.converged, report.iterations);
        std::fs::write(
            spec.out.join(format!("mirror_{i:03}.json")),
            serde_json::to_string_pretty(&point)?,
        )?;
        let graph = FactorGraph::new(inst);
        let m = marginals(&graph, &ms);
        let rows: Vec<String> = inst
            .edges()
            .iter()
            .enumerate()
            .map(|(id, e)| format!("{},{},{}", e.user, e.unit, m.edge_serve[id]))
            .collect();
        write_csv(
            &spec.out.join(format!("mirror_marginals_{i:03}.csv")),
            "user,unit,m",
            &rows,
        )?;
        utilities.push(point.utility);
        entropies.push(point.entropy);
    }
    Ok(aggregate(
        &[("utility", utilities), ("entropy", entropies)],
        insts.len(),
    ))
}

fn run_mirror_validate(spec: &ExperimentSpec) -> Result<serde_json::Value> {
    let insts = instances(spec)?;
    let mut mean_err = Vec::new();
    let mut ks_p = Vec::new();
    for (i, inst) in insts.iter().enumerate() {
        let opts = MirrorValidationOptions {
            n_samples: spec.options.samples.unwrap_or(1000),
            mu: spec.options.mu.unwrap_or(0.0),
            bp: bp_options(&spec.options, derive_seed(spec.seed, i as u64)),
            seed: derive_seed(spec.seed, (i + 7_000_000) as u64),
            ..MirrorValidationOptions::default()
        };
        let report = validate_mirror(inst, &opts).map_err(|e| anyhow!("{e}"))?;
        let rows: Vec<String> = report
            .per_edge
            .iter()
            .map(|e| {
                format!(
                    "{},{},{},{},{},{},{}",
                    e.user,
                    e.unit,
                    e.mirror,
                    e.sampled,
                    e.sigma,
                    e.delta,
                    e.normalized.map_or(String::new(), |d| d.to_string())
                )
            })
            .collect();
        write_csv(
            &spec.out.join(format!("mirror_validate_{i:03}.csv")),
            "user,unit,m,m_bar,sigma,delta,delta_norm",
            &rows,
        )?;
        std::fs::write(
            spec.out.join(format!("mirror_validate_{i:03}.json")),
            serde_json::to_string_pretty(&json!({
                "n_samples_used": report.n_samples_used,
                "dropped_samples": report.dropped_samples,
                "zero_sigma_edges": report.zero_sigma_edges,
                "mean_abs_delta_over_mean_m": report.mean_abs_delta_over_mean_m,
                "ks_statistic": report.ks_statistic,
                "ks_p_value": report.ks_p_value,
            }))?,
        )?;
        mean_err.push(report.mean_abs_delta_over_mean_m);
        ks_p.push(report.ks_p_value);
    }
    Ok(aggregate(
        &[("mean_abs_delta_over_mean_m", mean_err), ("ks_p_value", ks_p)],
        insts.len(),
    ))
}
