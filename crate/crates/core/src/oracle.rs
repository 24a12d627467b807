//! Exhaustive ground truth on small instances: enumerate every Nash
//! equilibrium by brute force and average observables over stochastic
//! user participation. Deliberately simple; the solvers are validated
//! against this module, so it must stay obviously correct.

use crate::game::{Assignment, Choice, GameInstance, UserId};
use rand::Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

pub const DEFAULT_STATE_BUDGET: f64 = 1e7;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("state space of {states:.3e} assignments exceeds the budget of {budget:.3e}")]
    BudgetExceeded { states: f64, budget: f64 },
    #[error("exhaustive quenched average needs <= {limit} free users, instance has {got}")]
    TooManyUsers { limit: usize, got: usize },
}

/// Full census of the Nash equilibria for one activity realization.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumCensus {
    pub equilibria: Vec<Assignment>,
    pub utility_histogram: BTreeMap<i64, usize>,
    pub count: usize,
}

impl EquilibriumCensus {
    pub fn utilities(&self, inst: &GameInstance) -> Vec<i64> {
        self.equilibria.iter().map(|x| inst.utility(x)).collect()
    }

    pub fn max_utility(&self) -> Option<i64> {
        self.utility_histogram.keys().next_back().copied()
    }

    pub fn min_utility(&self) -> Option<i64> {
        self.utility_histogram.keys().next().copied()
    }

    /// Fraction of equilibria in which edge `id` is serving, under the
    /// exponential tilt `exp(mu * U)`; `mu = 0` gives plain frequencies.
    pub fn edge_serve_frequency(&self, inst: &GameInstance, mu: f64) -> Vec<f64> {
        let utilities = self.utilities(inst);
        let max_u = utilities.iter().copied().max().unwrap_or(0);
        let mut weight_sum = 0.0;
        let mut freq = vec![0.0; inst.n_edges()];
        for (x, &u) in self.equilibria.iter().zip(&utilities) {
            let w = (mu * (u - max_u) as f64).exp();
            weight_sum += w;
            for user in 0..inst.n_users() {
                if let Choice::Unit(a) = x.choice[user] {
                    let id = inst.edge_between(user, a).expect("edge exists");
                    freq[id] += w;
                }
            }
        }
        for f in &mut freq {
            *f /= weight_sum;
        }
        freq
    }

    /// Log of the tilted partition function `sum_eq exp(mu * U)` and the
    /// tilted mean utility; the exact references for the Bethe estimates.
    pub fn tilted_log_z_and_mean_utility(&self, inst: &GameInstance, mu: f64) -> (f64, f64) {
        let utilities = self.utilities(inst);
        let max_u = utilities.iter().copied().max().unwrap_or(0) as f64;
        let mut z = 0.0;
        let mut mean = 0.0;
        for &u in &utilities {
            let w = (mu * (u as f64 - max_u)).exp();
            z += w;
            mean += w * u as f64;
        }
        (z.ln() + mu * max_u, mean / z)
    }
}

/// Number of assignments the enumeration would visit.
fn state_count(inst: &GameInstance, active: &[bool]) -> f64 {
    let mut total = 1.0f64;
    for u in 0..inst.n_users() {
        if active[u] {
            total *= (inst.degree_of_user(u) + 1) as f64;
        }
        if total > 1e300 {
            return f64::INFINITY;
        }
    }
    total
}

/// Enumerates every Nash equilibrium of the instance restricted to the
/// active users. The budget is checked against the product of per-user
/// option counts before any work happens.
pub fn enumerate_nash(
    inst: &GameInstance,
    active: Option<&[bool]>,
    budget: f64,
) -> Result<EquilibriumCensus, OracleError> {
    let all_active = vec![true; inst.n_users()];
    let active = active.unwrap_or(&all_active);
    let states = state_count(inst, active);
    if states > budget {
        return Err(OracleError::BudgetExceeded { states, budget });
    }
    let mut census = EquilibriumCensus {
        equilibria: Vec::new(),
        utility_histogram: BTreeMap::new(),
        count: 0,
    };
    let mut x = Assignment::with_activity(inst.n_users(), active.to_vec());
    let mut loads = vec![0i64; inst.n_units()];
    recurse(inst, active, 0, &mut x, &mut loads, &mut census);
    debug_assert!(census.count >= 1, "every instance has at least one equilibrium");
    Ok(census)
}

fn recurse(
    inst: &GameInstance,
    active: &[bool],
    u: UserId,
    x: &mut Assignment,
    loads: &mut [i64],
    census: &mut EquilibriumCensus,
) {
    if u == inst.n_users() {
        if inst.is_nash(x) {
            let utility = inst.utility(x);
            *census.utility_histogram.entry(utility).or_insert(0) += 1;
            census.equilibria.push(x.clone());
            census.count += 1;
        }
        return;
    }
    if !active[u] {
        recurse(inst, active, u + 1, x, loads, census);
        return;
    }
    // Disconnected branch.
    x.choice[u] = Choice::Disconnected;
    recurse(inst, active, u + 1, x, loads, census);
    // One branch per unit whose remaining capacity fits the user.
    for &id in inst.user_edges(u) {
        let e = inst.edge(id);
        if loads[e.unit] + e.weight as i64 <= inst.capacity(e.unit) as i64 {
            x.choice[u] = Choice::Unit(e.unit);
            loads[e.unit] += e.weight as i64;
            recurse(inst, active, u + 1, x, loads, census);
            loads[e.unit] -= e.weight as i64;
        }
    }
    x.choice[u] = Choice::Disconnected;
}

/// Observable evaluated on equilibria by the quenched average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ObservableKind {
    Utility,
    Disconnected,
    SpareCapacity,
}

fn observable_of(inst: &GameInstance, x: &Assignment, kind: ObservableKind) -> f64 {
    let obs = inst.observables(x).expect("census members are feasible");
    match kind {
        ObservableKind::Utility => obs.total_utility as f64,
        ObservableKind::Disconnected => obs.disconnected as f64,
        ObservableKind::SpareCapacity => obs.spare_capacity as f64,
    }
}

pub enum QuenchedMode<'a> {
    /// Sum over all activity vectors; users with p strictly between 0 and 1
    /// must number at most 20.
    Exhaustive,
    /// Monte Carlo over activity vectors.
    Sampled(usize, &'a mut dyn rand::RngCore),
}

/// The double average `<O> = sum_t P(t) (1/N(t)) sum_eq O(eq)`: for each
/// activity realization, equilibria are weighted uniformly within that
/// realization. `N(t) >= 1` always holds (greedy from the empty profile is
/// an equilibrium), and the enumeration asserts it.
pub fn quenched_average(
    inst: &GameInstance,
    kind: ObservableKind,
    mode: QuenchedMode,
    budget: f64,
) -> Result<f64, OracleError> {
    match mode {
        QuenchedMode::Exhaustive => {
            let mut total = 0.0;
            for_each_activity(inst, |active, prob| {
                let census = enumerate_nash(inst, Some(active), budget)?;
                assert!(census.count >= 1);
                let mean: f64 = census
                    .equilibria
                    .iter()
                    .map(|x| observable_of(inst, x, kind))
                    .sum::<f64>()
                    / census.count as f64;
                total += prob * mean;
                Ok(())
            })?;
            Ok(total)
        }
        QuenchedMode::Sampled(n, rng) => {
            let mut total = 0.0;
            for _ in 0..n {
                let active: Vec<bool> = (0..inst.n_users())
                    .map(|u| rng.gen_bool(inst.activity_prob(u)))
                    .collect();
                let census = enumerate_nash(inst, Some(&active), budget)?;
                assert!(census.count >= 1);
                total += census
                    .equilibria
                    .iter()
                    .map(|x| observable_of(inst, x, kind))
                    .sum::<f64>()
                    / census.count as f64;
            }
            Ok(total / n as f64)
        }
    }
}

/// Exact quenched average of the per-edge serving marginal
/// `<P[y_ua = S]>`, the reference for the mirror-message approximation.
pub fn quenched_edge_serve_frequency(
    inst: &GameInstance,
    budget: f64,
) -> Result<Vec<f64>, OracleError> {
    let mut freq = vec![0.0; inst.n_edges()];
    for_each_activity(inst, |active, prob| {
        let census = enumerate_nash(inst, Some(active), budget)?;
        let per_t = census.edge_serve_frequency(inst, 0.0);
        for (f, p) in freq.iter_mut().zip(&per_t) {
            *f += prob * p;
        }
        Ok(())
    })?;
    Ok(freq)
}

/// Exact quenched average of `log N(t)`.
pub fn quenched_log_count(inst: &GameInstance, budget: f64) -> Result<f64, OracleError> {
    let mut total = 0.0;
    for_each_activity(inst, |active, prob| {
        let census = enumerate_nash(inst, Some(active), budget)?;
        total += prob * (census.count as f64).ln();
        Ok(())
    })?;
    Ok(total)
}

/// Enumerates activity vectors: users with p = 0 or p = 1 are pinned, the
/// rest (at most 20) are toggled exhaustively.
fn for_each_activity<F>(inst: &GameInstance, mut f: F) -> Result<(), OracleError>
where
    F: FnMut(&[bool], f64) -> Result<(), OracleError>,
{
    let free: Vec<UserId> = (0..inst.n_users())
        .filter(|&u| {
            let p = inst.activity_prob(u);
            p > 0.0 && p < 1.0
        })
        .collect();
    if free.len() > 20 {
        return Err(OracleError::TooManyUsers {
            limit: 20,
            got: free.len(),
        });
    }
    let mut active: Vec<bool> = (0..inst.n_users())
        .map(|u| inst.activity_prob(u) == 1.0)
        .collect();
    for mask in 0u64..(1u64 << free.len()) {
        let mut prob = 1.0;
        for (bit, &u) in free.iter().enumerate() {
            let on = mask >> bit & 1 == 1;
            active[u] = on;
            let p = inst.activity_prob(u);
            prob *= if on { p } else { 1.0 - p };
        }
        f(&active, prob)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::Edge;
    use crate::testkit::{example_instance, star_instance, star_instance_half_active};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn example_census_has_two_equilibria() {
        let inst = example_instance();
        let census = enumerate_nash(&inst, None, DEFAULT_STATE_BUDGET).unwrap();
        assert_eq!(census.count, 2);
        // Utilities 5 and 3 (the saturated equilibrium earns
        // v_1a + v_2b + v_3b = 2 + 0 + 1).
        let hist: Vec<(i64, usize)> = census.utility_histogram.clone().into_iter().collect();
        assert_eq!(hist, vec![(3, 1), (5, 1)]);
        for eq in &census.equilibria {
            assert!(inst.is_nash(eq));
        }
    }

    #[test]
    fn star_census() {
        let inst = star_instance();
        let census = enumerate_nash(&inst, None, DEFAULT_STATE_BUDGET).unwrap();
        assert_eq!(census.count, 2);
        let hist: Vec<(i64, usize)> = census.utility_histogram.clone().into_iter().collect();
        assert_eq!(hist, vec![(4, 1), (7, 1)]);
    }

    #[test]
    fn undersized_unit_leaves_single_empty_equilibrium() {
        let inst = GameInstance::deterministic(
            1,
            1,
            vec![Edge { user: 0, unit: 0, weight: 2, value: 1 }],
            vec![1],
        )
        .unwrap();
        let census = enumerate_nash(&inst, None, DEFAULT_STATE_BUDGET).unwrap();
        assert_eq!(census.count, 1);
        assert_eq!(census.equilibria[0].choice[0], Choice::Disconnected);
    }

    #[test]
    fn budget_is_checked_before_work() {
        let inst = example_instance();
        // 3 users x 3 options each = 27 states > 10.
        assert!(matches!(
            enumerate_nash(&inst, None, 10.0),
            Err(OracleError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn quenched_reduces_to_uniform_when_deterministic() {
        let inst = example_instance();
        let avg = quenched_average(
            &inst,
            ObservableKind::Utility,
            QuenchedMode::Exhaustive,
            DEFAULT_STATE_BUDGET,
        )
        .unwrap();
        assert!((avg - 4.0).abs() < 1e-12); // (5 + 3) / 2
    }

    #[test]
    fn quenched_star_average() {
        let inst = star_instance_half_active();
        let avg = quenched_average(
            &inst,
            ObservableKind::Utility,
            QuenchedMode::Exhaustive,
            DEFAULT_STATE_BUDGET,
        )
        .unwrap();
        // (1/4)(0) + (1/4)(7) + (1/4)(4) + (1/4)(11/2) = 4.125
        assert!((avg - 4.125).abs() < 1e-12);

        let freq = quenched_edge_serve_frequency(&inst, DEFAULT_STATE_BUDGET).unwrap();
        assert!((freq[0] - 0.375).abs() < 1e-12);
        assert!((freq[1] - 0.375).abs() < 1e-12);
    }

    #[test]
    fn quenched_all_inactive_is_zero() {
        let edges = vec![
            Edge { user: 0, unit: 0, weight: 1, value: 7 },
            Edge { user: 1, unit: 0, weight: 1, value: 4 },
        ];
        let inst = GameInstance::new(2, 1, edges, vec![1], vec![0.0, 0.0]).unwrap();
        let u = quenched_average(
            &inst,
            ObservableKind::Utility,
            QuenchedMode::Exhaustive,
            DEFAULT_STATE_BUDGET,
        )
        .unwrap();
        let d = quenched_average(
            &inst,
            ObservableKind::Disconnected,
            QuenchedMode::Exhaustive,
            DEFAULT_STATE_BUDGET,
        )
        .unwrap();
        assert_eq!(u, 0.0);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn sampled_quenched_agrees_with_exhaustive() {
        let inst = star_instance_half_active();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let avg = quenched_average(
            &inst,
            ObservableKind::Utility,
            QuenchedMode::Sampled(20000, &mut rng),
            DEFAULT_STATE_BUDGET,
        )
        .unwrap();
        assert!((avg - 4.125).abs() < 0.1);
    }

    #[test]
    fn random_profiles_outside_census_fail_nash_or_feasibility() {
        let inst = example_instance();
        let census = enumerate_nash(&inst, None, DEFAULT_STATE_BUDGET).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut x = Assignment::empty(3);
            for u in 0..3 {
                let pick = rng.gen_range(0..=inst.degree_of_user(u));
                x.choice[u] = if pick == 0 {
                    Choice::Disconnected
                } else {
                    Choice::Unit(inst.edge(inst.user_edges(u)[pick - 1]).unit)
                };
            }
            let in_census = census.equilibria.iter().any(|eq| eq.choice == x.choice);
            assert_eq!(in_census, inst.is_nash(&x));
        }
    }
}
