//! BP-guided decimation: iteratively clamp the most polarized user to her
//! most probable action under the current marginals, conditioned on all
//! previous clamps, until the whole profile is fixed. With μ strongly
//! positive (negative) this constructs concrete high- (low-) utility
//! equilibria.

use crate::bp::engine::{
    marginals, run_bp_clamped, BpError, BpOptions, FactorGraph, MessageSet, UserClamp,
};
use crate::dynamics::best_response_run;
use crate::game::{Assignment, Choice, GameInstance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct DecimateOptions {
    pub bp: BpOptions,
    /// Alternative clamp targets tried after a contradiction.
    pub max_retries: usize,
}

impl Default for DecimateOptions {
    fn default() -> Self {
        DecimateOptions {
            bp: BpOptions::default(),
            max_retries: 5,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DecimationReport {
    /// True when the decoded profile needed a best-response repair pass.
    pub repaired: bool,
    pub retries: usize,
    /// BP runs that ended unconverged (decimation proceeds on the last
    /// messages anyway).
    pub unconverged_steps: usize,
    pub failed: bool,
}

/// Candidate actions of a user ordered by posterior mass; units beat the
/// disconnected action on ties and lower unit ids win among units.
fn ranked_actions(
    graph: &FactorGraph,
    dist: &[f64],
    disconnect: f64,
    u: usize,
) -> Vec<(f64, Choice)> {
    let inst = graph.inst;
    let mut actions: Vec<(f64, Choice)> = graph.user_sorted[u]
        .iter()
        .zip(dist)
        .map(|(&id, &p)| (p, Choice::Unit(inst.edge(id).unit)))
        .collect();
    actions.push((disconnect, Choice::Disconnected));
    actions.sort_by(|a, b| {
        b.0.total_cmp(&a.0).then_with(|| match (a.1, b.1) {
            (Choice::Unit(x), Choice::Unit(y)) => x.cmp(&y),
            (Choice::Unit(_), Choice::Disconnected) => std::cmp::Ordering::Less,
            (Choice::Disconnected, Choice::Unit(_)) => std::cmp::Ordering::Greater,
            _ => std::cmp::Ordering::Equal,
        })
    });
    actions
}

pub fn decimate(
    inst: &GameInstance,
    mu: f64,
    opts: &DecimateOptions,
) -> Result<(Assignment, DecimationReport), BpError> {
    let graph = FactorGraph::new(inst);
    let n = inst.n_users();
    let mut clamps: Vec<Option<UserClamp>> = vec![None; n];
    let mut report = DecimationReport::default();
    let mut warm: Option<MessageSet> = None;
    while clamps.iter().any(|c| c.is_none()) {
        let (ms, bp_report) = run_bp_clamped(inst, mu, &opts.bp, warm.take(), &clamps)?;
        if !bp_report.converged {
            report.unconverged_steps += 1;
        }
        let m = marginals(&graph, &ms);
        // Rank unfixed users by polarization (their top action mass).
        let mut order: Vec<(f64, usize)> = (0..n)
            .filter(|&u| clamps[u].is_none())
            .map(|u| {
                let best = ranked_actions(&graph, &m.serve_dist[u], m.disconnect[u], u)[0].0;
                (best, u)
            })
            .collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut advanced = false;
        for (attempt, &(_, u)) in order.iter().enumerate() {
            if attempt > opts.max_retries {
                break;
            }
            let action = ranked_actions(&graph, &m.serve_dist[u], m.disconnect[u], u)[0].1;
            let clamp = match action {
                Choice::Unit(a) => UserClamp::Serve(a),
                Choice::Disconnected => UserClamp::Disconnect,
            };
            clamps[u] = Some(clamp);
            match run_bp_clamped(inst, mu, &opts.bp, None, &clamps) {
                Ok((ms_next, rep_next)) => {
                    if !rep_next.converged {
                        report.unconverged_steps += 1;
                    }
                    warm = Some(ms_next);
                    advanced = true;
                    break;
                }
                Err(_) => {
                    clamps[u] = None;
                    report.retries += 1;
                }
            }
        }
        if !advanced {
            report.failed = true;
            break;
        }
    }
    // Decode the clamps into a profile; feasibility holds by construction
    // unless decimation failed half-way.
    let mut x = Assignment::empty(n);
    for (u, c) in clamps.iter().enumerate() {
        x.choice[u] = match c {
            Some(UserClamp::Serve(a)) => Choice::Unit(*a),
            _ => Choice::Disconnected,
        };
    }
    if !inst.is_feasible(&x) {
        // Drop over-capacity picks greedily; repair below reconnects.
        let mut loads = vec![0i64; inst.n_units()];
        for u in 0..n {
            if let Choice::Unit(a) = x.choice[u] {
                let e = inst.edge_between(u, a).expect("edge exists");
                let w = inst.edge(e).weight as i64;
                if loads[a] + w > inst.capacity(a) as i64 {
                    x.choice[u] = Choice::Disconnected;
                } else {
                    loads[a] += w;
                }
            }
        }
        report.repaired = true;
    }
    if !inst.is_nash(&x) {
        report.repaired = true;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.bp.schedule_seed);
        x = best_response_run(inst, x, &mut rng, false).final_assignment;
    }
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{example_instance, reduced, star_instance};

    #[test]
    fn star_decimation_finds_both_extremes() {
        let inst = star_instance();
        let opts = DecimateOptions::default();
        let (best, rep) = decimate(&inst, 4.0, &opts).unwrap();
        assert!(!rep.failed);
        assert_eq!(best.choice[0], Choice::Unit(0));
        assert_eq!(best.choice[1], Choice::Disconnected);
        let (worst, _) = decimate(&inst, -4.0, &opts).unwrap();
        assert_eq!(worst.choice[1], Choice::Unit(0));
        assert_eq!(inst.utility(&worst), 4);
    }

    #[test]
    fn example_decimation_matches_census_extremes() {
        let inst = example_instance();
        let opts = DecimateOptions::default();
        let (best, rep) = decimate(&inst, 4.0, &opts).unwrap();
        assert!(!rep.failed);
        assert_eq!(best, reduced(&inst, [false, true, false]));
        assert_eq!(inst.utility(&best), 5);
        let (worst, rep) = decimate(&inst, -4.0, &opts).unwrap();
        assert!(!rep.failed);
        assert_eq!(worst, reduced(&inst, [true, false, false]));
        assert_eq!(inst.utility(&worst), 3);
    }
}
