//! Equilibrium-reaching processes: greedy placement, best-response rounds
//! from several initializations, and the arrivals/departures chain for
//! stochastic participation. Every process terminates at a certified Nash
//! equilibrium; the aggregate utility is an exact potential, so each
//! applied improvement raises it (strictly, once every value is >= 1).

use crate::game::{Assignment, BestResponse, Choice, GameInstance, UnitId, UserId};
use rand::seq::SliceRandom;
use rand::Rng;

/// Trace of one dynamics run.
#[derive(Debug, Clone)]
pub struct DynamicsRun {
    pub final_assignment: Assignment,
    /// Best-response rounds executed (including the final empty sweep).
    pub rounds: usize,
    pub init_utility: i64,
    /// Utility after each applied move, when recording is on.
    pub trajectory_utilities: Option<Vec<i64>>,
    /// Full profile after each applied move, when recording is on.
    pub trajectory_states: Option<Vec<Assignment>>,
}

fn permutation<R: Rng>(n: usize, rng: &mut R) -> Vec<UserId> {
    let mut order: Vec<UserId> = (0..n).collect();
    order.shuffle(rng);
    order
}

/// Units currently able to host user `u` (her own load removed first).
fn available_units(inst: &GameInstance, loads: &[i64], x: &Assignment, u: UserId) -> Vec<(UnitId, u32)> {
    let own = x.choice[u].unit();
    inst.user_edges(u)
        .iter()
        .filter_map(|&id| {
            let e = inst.edge(id);
            let mut load = loads[e.unit];
            if own == Some(e.unit) {
                load -= e.weight as i64;
            }
            (load + e.weight as i64 <= inst.capacity(e.unit) as i64).then_some((e.unit, e.value))
        })
        .collect()
}

/// Greedy assignment: a random user permutation, each user taking the best
/// currently available unit (ties toward the lowest unit id) or staying
/// disconnected. Nash by construction, which the run asserts.
pub fn greedy<R: Rng>(inst: &GameInstance, rng: &mut R) -> DynamicsRun {
    greedy_over(inst, &vec![true; inst.n_users()], rng)
}

pub fn greedy_over<R: Rng>(inst: &GameInstance, active: &[bool], rng: &mut R) -> DynamicsRun {
    let mut x = Assignment::with_activity(inst.n_users(), active.to_vec());
    let mut loads = vec![0i64; inst.n_units()];
    for u in permutation(inst.n_users(), rng) {
        if !active[u] {
            continue;
        }
        place_greedy(inst, &mut x, &mut loads, u);
    }
    assert!(inst.is_nash(&x), "greedy must end at an equilibrium");
    let u0 = inst.utility(&x);
    DynamicsRun {
        final_assignment: x,
        rounds: 0,
        init_utility: u0,
        trajectory_utilities: None,
        trajectory_states: None,
    }
}

fn place_greedy(inst: &GameInstance, x: &mut Assignment, loads: &mut [i64], u: UserId) {
    let mut best: Option<(u32, UnitId)> = None;
    for &(a, v) in &available_units(inst, loads, x, u) {
        let better = match best {
            None => true,
            Some((bv, ba)) => v > bv || (v == bv && a < ba),
        };
        if better {
            best = Some((v, a));
        }
    }
    if let Some((_, a)) = best {
        let e = inst.edge_between(u, a).expect("edge exists");
        x.choice[u] = Choice::Unit(a);
        loads[a] += inst.edge(e).weight as i64;
    }
}

/// How the initial profile of a best-response run is drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitRule {
    /// Uniformly random available unit.
    Random,
    /// Worst available unit (lowest value, ties toward the lowest id).
    Worst,
    /// Available unit `a` with probability proportional to `v_ua^gamma`.
    /// Beyond |gamma| = 64 the draw switches to the exact argmax/argmin
    /// limit to avoid overflowing `v^gamma`.
    Gamma(f64),
}

const GAMMA_CUTOFF: f64 = 64.0;

/// Sequential random-permutation placement under the given rule; users with
/// no available unit start disconnected.
pub fn init_assignment<R: Rng>(
    inst: &GameInstance,
    rule: InitRule,
    active: &[bool],
    rng: &mut R,
) -> Assignment {
    let mut x = Assignment::with_activity(inst.n_users(), active.to_vec());
    let mut loads = vec![0i64; inst.n_units()];
    for u in permutation(inst.n_users(), rng) {
        if !active[u] {
            continue;
        }
        let avail = available_units(inst, &loads, &x, u);
        if avail.is_empty() {
            continue;
        }
        let pick = match rule {
            InitRule::Random => avail[rng.gen_range(0..avail.len())].0,
            InitRule::Worst => pick_extreme(&avail, false),
            InitRule::Gamma(g) if g >= GAMMA_CUTOFF => pick_extreme(&avail, true),
            InitRule::Gamma(g) if g <= -GAMMA_CUTOFF => pick_extreme(&avail, false),
            InitRule::Gamma(g) => pick_gamma(&avail, g, rng),
        };
        let e = inst.edge_between(u, pick).expect("edge exists");
        x.choice[u] = Choice::Unit(pick);
        loads[pick] += inst.edge(e).weight as i64;
    }
    x
}

fn pick_extreme(avail: &[(UnitId, u32)], maximize: bool) -> UnitId {
    let mut best = avail[0];
    for &(a, v) in &avail[1..] {
        let better = if maximize {
            v > best.1 || (v == best.1 && a < best.0)
        } else {
            v < best.1 || (v == best.1 && a < best.0)
        };
        if better {
            best = (a, v);
        }
    }
    best.0
}

fn pick_gamma<R: Rng>(avail: &[(UnitId, u32)], gamma: f64, rng: &mut R) -> UnitId {
    let weights: Vec<f64> = avail.iter().map(|&(_, v)| (v as f64).powf(gamma)).collect();
    // Zero-value edges: v^gamma is +inf for gamma < 0 (those edges dominate)
    // and 0 for gamma > 0 (those edges are never picked unless all are zero).
    if weights.iter().any(|w| w.is_infinite()) {
        let infs: Vec<UnitId> = avail
            .iter()
            .zip(&weights)
            .filter(|(_, w)| w.is_infinite())
            .map(|((a, _), _)| *a)
            .collect();
        return infs[rng.gen_range(0..infs.len())];
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return avail[rng.gen_range(0..avail.len())].0;
    }
    let mut r = rng.gen::<f64>() * total;
    for (&(a, _), &w) in avail.iter().zip(&weights) {
        r -= w;
        if r <= 0.0 {
            return a;
        }
    }
    avail.last().unwrap().0
}

pub fn init_random<R: Rng>(inst: &GameInstance, rng: &mut R) -> Assignment {
    init_assignment(inst, InitRule::Random, &vec![true; inst.n_users()], rng)
}

pub fn init_worst<R: Rng>(inst: &GameInstance, rng: &mut R) -> Assignment {
    init_assignment(inst, InitRule::Worst, &vec![true; inst.n_users()], rng)
}

pub fn init_gamma<R: Rng>(inst: &GameInstance, gamma: f64, rng: &mut R) -> Assignment {
    init_assignment(inst, InitRule::Gamma(gamma), &vec![true; inst.n_users()], rng)
}

/// Best-response rounds with an injectable sweep order, so improvement
/// paths can be replayed deterministically. `next_order` produces the user
/// permutation for each round. Stops at the first round with no move.
pub fn best_response_run_with<F>(
    inst: &GameInstance,
    x0: Assignment,
    mut next_order: F,
    record: bool,
) -> DynamicsRun
where
    F: FnMut(usize) -> Vec<UserId>,
{
    debug_assert!(inst.is_feasible(&x0));
    let init_utility = inst.utility(&x0);
    let mut x = x0;
    let mut trajectory_utilities = record.then(Vec::new);
    let mut trajectory_states = record.then(Vec::new);
    let mut rounds = 0;
    loop {
        rounds += 1;
        let mut moved = false;
        for u in next_order(rounds - 1) {
            if !x.active[u] {
                continue;
            }
            if let BestResponse::MoveTo(a) = inst.best_response_of(&x, u) {
                let before = inst.utility(&x);
                x.choice[u] = Choice::Unit(a);
                let after = inst.utility(&x);
                debug_assert!(after >= before);
                moved = true;
                if let Some(t) = trajectory_utilities.as_mut() {
                    t.push(after);
                }
                if let Some(t) = trajectory_states.as_mut() {
                    t.push(x.clone());
                }
            }
        }
        if !moved {
            break;
        }
    }
    debug_assert!(inst.is_nash(&x));
    DynamicsRun {
        final_assignment: x,
        rounds,
        init_utility,
        trajectory_utilities,
        trajectory_states,
    }
}

/// Best-response rounds with a fresh random permutation each round.
pub fn best_response_run<R: Rng>(
    inst: &GameInstance,
    x0: Assignment,
    rng: &mut R,
    record: bool,
) -> DynamicsRun {
    let n = inst.n_users();
    best_response_run_with(inst, x0, |_| permutation(n, rng), record)
}

/// One time-series sample of the arrivals/departures chain.
#[derive(Debug, Clone, Copy)]
pub struct AdSample {
    pub step: usize,
    pub active_users: usize,
    pub utility: i64,
    pub disconnected: usize,
    pub spare_capacity: i64,
}

#[derive(Debug, Clone)]
pub struct AdRun {
    pub final_assignment: Assignment,
    pub series: Vec<AdSample>,
}

/// Arrivals/departures: per step, in a fresh random permutation, each
/// active user leaves with probability (1 - p_u)/N and each inactive user
/// arrives with probability p_u/N, greedily picking the best available
/// unit; best response then runs to convergence over the active users, so
/// every recorded state is an equilibrium for the current participation.
/// Starts all-inactive; the first `burn_in` steps are discarded.
pub fn arrivals_departures<R: Rng>(
    inst: &GameInstance,
    n_steps: usize,
    burn_in: usize,
    rng: &mut R,
) -> AdRun {
    let n = inst.n_users();
    let mut x = Assignment::with_activity(n, vec![false; n]);
    let mut series = Vec::new();
    for step in 0..n_steps {
        let mut loads = inst.loads(&x);
        for u in permutation(n, rng) {
            if x.active[u] {
                if rng.gen::<f64>() < (1.0 - inst.activity_prob(u)) / n as f64 {
                    if let Choice::Unit(a) = x.choice[u] {
                        let e = inst.edge_between(u, a).expect("edge exists");
                        loads[a] -= inst.edge(e).weight as i64;
                    }
                    x.choice[u] = Choice::Disconnected;
                    x.active[u] = false;
                }
            } else if rng.gen::<f64>() < inst.activity_prob(u) / n as f64 {
                x.active[u] = true;
                place_greedy(inst, &mut x, &mut loads, u);
            }
        }
        let run = best_response_run(inst, x, rng, false);
        x = run.final_assignment;
        debug_assert!(inst.is_nash(&x));
        if step >= burn_in {
            let obs = inst.observables(&x).expect("state is feasible");
            series.push(AdSample {
                step,
                active_users: x.active.iter().filter(|&&t| t).count(),
                utility: obs.total_utility,
                disconnected: obs.disconnected,
                spare_capacity: obs.spare_capacity,
            });
        }
    }
    AdRun {
        final_assignment: x,
        series,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{sample_instance, ActivityModel, EnsembleParams};
    use crate::game::Edge;
    use crate::oracle::{enumerate_nash, DEFAULT_STATE_BUDGET};
    use crate::testkit::{example_instance, reduced};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_ensemble(seed: u64) -> GameInstance {
        sample_instance(&EnsembleParams {
            n_users: 40,
            n_units: 6,
            capacity: 30,
            edge_prob: 0.5,
            w_min: 2,
            w_max: 6,
            v_min: 1,
            v_max: 5,
            correlation: 0.0,
            seed,
            activity: ActivityModel::AllActive,
        })
        .unwrap()
    }

    #[test]
    fn greedy_follows_hand_simulation() {
        let inst = example_instance();
        // Permutation (2, 1, 3): user 2 takes a, user 1 falls back to b,
        // user 3 takes b; that is the good equilibrium.
        let mut x = Assignment::empty(3);
        let mut loads = vec![0i64; 2];
        for &u in &[1usize, 0, 2] {
            place_greedy(&inst, &mut x, &mut loads, u);
        }
        assert_eq!(x, reduced(&inst, [false, true, false]));
        assert_eq!(inst.utility(&x), 5);

        // Permutation (1, 2, 3) ends at the saturated equilibrium.
        let mut x = Assignment::empty(3);
        let mut loads = vec![0i64; 2];
        for &u in &[0usize, 1, 2] {
            place_greedy(&inst, &mut x, &mut loads, u);
        }
        assert_eq!(x, reduced(&inst, [true, false, false]));
        let census = enumerate_nash(&inst, None, DEFAULT_STATE_BUDGET).unwrap();
        assert!(census.equilibria.iter().any(|eq| eq.choice == x.choice));
    }

    #[test]
    fn greedy_on_starved_instance_disconnects_everyone() {
        let inst = GameInstance::deterministic(
            3,
            1,
            vec![
                Edge { user: 0, unit: 0, weight: 5, value: 1 },
                Edge { user: 1, unit: 0, weight: 5, value: 2 },
                Edge { user: 2, unit: 0, weight: 5, value: 3 },
            ],
            vec![4],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let run = greedy(&inst, &mut rng);
        assert_eq!(inst.utility(&run.final_assignment), 0);
        assert!(run
            .final_assignment
            .choice
            .iter()
            .all(|c| *c == Choice::Disconnected));
    }

    #[test]
    fn best_response_path_visits_the_intermediate_profile() {
        let inst = example_instance();
        let x0 = reduced(&inst, [false, false, true]);
        let run = best_response_run_with(&inst, x0, |_| vec![1usize, 2, 0], true);
        let states = run.trajectory_states.unwrap();
        assert_eq!(states.len(), 2);
        assert_eq!(states[0], reduced(&inst, [false, true, true]));
        assert_eq!(states[1], reduced(&inst, [false, true, false]));
        assert_eq!(inst.utility(&run.final_assignment), 5);
        assert_eq!(run.trajectory_utilities.unwrap(), vec![4, 5]);
    }

    #[test]
    fn nash_start_means_zero_moves() {
        let inst = example_instance();
        let x0 = reduced(&inst, [false, true, false]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let run = best_response_run(&inst, x0.clone(), &mut rng, true);
        assert_eq!(run.final_assignment, x0);
        assert_eq!(run.rounds, 1);
        assert!(run.trajectory_utilities.unwrap().is_empty());
    }

    #[test]
    fn applied_moves_bounded_by_value_bound() {
        // With v >= 1 each move raises the integer utility, so the move
        // count never exceeds the per-user best-value bound.
        let inst = small_ensemble(5);
        let bound = crate::ensemble::utility_upper_bound_deterministic(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x0 = init_random(&inst, &mut rng);
            let run = best_response_run(&inst, x0, &mut rng, true);
            let traj = run.trajectory_utilities.unwrap();
            assert!((traj.len() as i64) <= bound);
            // Strictly increasing along the improvement path.
            let mut prev = run.init_utility;
            for &u in &traj {
                assert!(u > prev);
                prev = u;
            }
            assert!(inst.is_nash(&run.final_assignment));
        }
    }

    #[test]
    fn worst_init_on_example() {
        let inst = example_instance();
        // Permutation (1, 2, 3): user 1 -> b, user 2 -> b, user 3 -> a.
        let mut x = Assignment::empty(3);
        let mut loads = vec![0i64; 2];
        for &u in &[0usize, 1, 2] {
            let avail = available_units(&inst, &loads, &x, u);
            let pick = pick_extreme(&avail, false);
            let e = inst.edge_between(u, pick).unwrap();
            x.choice[u] = Choice::Unit(pick);
            loads[pick] += inst.edge(e).weight as i64;
        }
        assert_eq!(x, reduced(&inst, [false, false, true]));
        assert_eq!(inst.utility(&x), 1);
    }

    #[test]
    fn gamma_zero_matches_random_init_law() {
        // Same seed stream, same distribution: compare mean init utility.
        let inst = small_ensemble(2);
        let reps = 4000;
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mean_random: f64 = (0..reps)
            .map(|_| inst.utility(&init_random(&inst, &mut rng)) as f64)
            .sum::<f64>()
            / reps as f64;
        let mean_gamma: f64 = (0..reps)
            .map(|_| inst.utility(&init_gamma(&inst, 0.0, &mut rng)) as f64)
            .sum::<f64>()
            / reps as f64;
        assert!(
            (mean_random - mean_gamma).abs() < 3.0,
            "{mean_random} vs {mean_gamma}"
        );
    }

    #[test]
    fn init_utility_grows_with_gamma() {
        let inst = small_ensemble(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let reps = 2000;
        let mut means = Vec::new();
        for &g in &[-4.0, -2.0, 0.0, 2.0, 4.0] {
            let mean: f64 = (0..reps)
                .map(|_| inst.utility(&init_gamma(&inst, g, &mut rng)) as f64)
                .sum::<f64>()
                / reps as f64;
            means.push(mean);
        }
        for w in means.windows(2) {
            assert!(w[1] >= w[0] - 0.5, "means not increasing: {means:?}");
        }
        // The extreme-gamma draws collapse onto the worst/greedy rules.
        let worst_mean: f64 = (0..reps)
            .map(|_| inst.utility(&init_worst(&inst, &mut rng)) as f64)
            .sum::<f64>()
            / reps as f64;
        let cutoff_mean: f64 = (0..reps)
            .map(|_| inst.utility(&init_gamma(&inst, -1e9, &mut rng)) as f64)
            .sum::<f64>()
            / reps as f64;
        assert!((worst_mean - cutoff_mean).abs() < 2.0);
    }

    #[test]
    fn arrivals_departures_stay_empty_at_p_zero() {
        let edges = vec![
            Edge { user: 0, unit: 0, weight: 1, value: 1 },
            Edge { user: 1, unit: 0, weight: 1, value: 2 },
        ];
        let inst = GameInstance::new(2, 1, edges, vec![2], vec![0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let run = arrivals_departures(&inst, 50, 0, &mut rng);
        assert!(run.series.iter().all(|s| s.active_users == 0 && s.utility == 0));
    }

    #[test]
    fn arrivals_departures_absorb_at_p_one() {
        let inst = small_ensemble(7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let run = arrivals_departures(&inst, 30 * inst.n_users(), 0, &mut rng);
        // p = 1: activations only; once everyone is active the utility
        // series is frozen at a Nash value.
        let n = inst.n_users();
        let absorbed: Vec<_> = run.series.iter().filter(|s| s.active_users == n).collect();
        assert!(!absorbed.is_empty());
        let u_final = absorbed.last().unwrap().utility;
        assert!(absorbed.iter().all(|s| s.utility <= u_final));
        let tail: Vec<_> = run
            .series
            .iter()
            .rev()
            .take(20)
            .map(|s| s.utility)
            .collect();
        assert!(tail.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn arrivals_departures_activity_matches_stationary_law() {
        let edges = vec![
            Edge { user: 0, unit: 0, weight: 1, value: 2 },
            Edge { user: 1, unit: 0, weight: 1, value: 1 },
        ];
        let inst = GameInstance::new(2, 1, edges, vec![2], vec![0.7, 0.3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let steps = 40_000;
        let run = arrivals_departures(&inst, steps, steps / 10, &mut rng);
        let mean_active: f64 = run
            .series
            .iter()
            .map(|s| s.active_users as f64)
            .sum::<f64>()
            / run.series.len() as f64;
        // Stationary mean activity is p_0 + p_1 = 1.0; the chain mixes in
        // O(N) steps so the time average has little residual correlation.
        assert!((mean_active - 1.0).abs() < 0.06, "mean {mean_active}");
    }
}
