//! Core model of the capacitated service-provision game.
//!
//! An instance is a bipartite graph between users and service units. Each
//! edge `(u, a)` carries an integer load `w` that user `u` would place on
//! unit `a` and an integer value `v` that `u` assigns to being served by
//! `a`. Units have integer capacities. A user is served by at most one
//! unit, units cannot exceed their capacity, and a profile is a Nash
//! equilibrium when no user can strictly improve her value by unilaterally
//! switching to a unit with enough spare capacity.
//!
//! The same equilibria admit an edge-state encoding with labels
//! U (unavailable), A (available but unused) and S (serving); this module
//! provides the lift between the two representations and the validity
//! predicate on edge states, which is what the message-passing solvers
//! operate on.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type UserId = usize;
pub type UnitId = usize;
pub type EdgeId = usize;

/// One user/unit adjacency with its load and value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub user: UserId,
    pub unit: UnitId,
    pub weight: u32,
    pub value: u32,
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error("edge ({user}, {unit}) references a node outside the instance")]
    InvalidEdge { user: UserId, unit: UnitId },
    #[error("duplicate edge ({user}, {unit})")]
    DuplicateEdge { user: UserId, unit: UnitId },
    #[error("edge ({user}, {unit}) has zero weight; loads must be >= 1")]
    ZeroWeight { user: UserId, unit: UnitId },
    #[error("unit {unit} has zero capacity; capacities must be >= 1")]
    ZeroCapacity { unit: UnitId },
    #[error("user {user} has activity probability {p} outside [0, 1]")]
    BadProbability { user: UserId, p: f64 },
    #[error("instance has {expected} users/units but got {got} entries for {what}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("assignment places user {user} on unit {unit} without an edge")]
    MalformedAssignment { user: UserId, unit: UnitId },
    #[error("assignment length {got} does not match {expected} users")]
    MalformedLength { expected: usize, got: usize },
    #[error("assignment is infeasible: {0:?}")]
    Infeasible(Vec<Violation>),
}

/// A single broken feasibility constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    /// Unit load exceeds its capacity.
    OverCapacity { unit: UnitId, load: i64, capacity: i64 },
    /// An inactive user is marked as served.
    InactiveServing { user: UserId },
}

/// Action of one user: a unit from her neighborhood or no unit at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    Unit(UnitId),
    Disconnected,
}

impl Choice {
    pub fn unit(self) -> Option<UnitId> {
        match self {
            Choice::Unit(a) => Some(a),
            Choice::Disconnected => None,
        }
    }
}

/// An action profile, plus per-user activity flags for stochastic play.
/// Deterministic instances keep every user active.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub choice: Vec<Choice>,
    pub active: Vec<bool>,
}

impl Assignment {
    pub fn empty(n_users: usize) -> Self {
        Assignment {
            choice: vec![Choice::Disconnected; n_users],
            active: vec![true; n_users],
        }
    }

    pub fn with_activity(n_users: usize, active: Vec<bool>) -> Self {
        Assignment {
            choice: vec![Choice::Disconnected; n_users],
            active,
        }
    }

    /// Integer encoding used by the on-disk format: unit id, or -1 when
    /// disconnected (or inactive).
    pub fn to_int_vec(&self) -> Vec<i64> {
        self.choice
            .iter()
            .map(|c| match c {
                Choice::Unit(a) => *a as i64,
                Choice::Disconnected => -1,
            })
            .collect()
    }

    pub fn from_int_vec(raw: &[i64]) -> Self {
        Assignment {
            choice: raw
                .iter()
                .map(|&x| {
                    if x < 0 {
                        Choice::Disconnected
                    } else {
                        Choice::Unit(x as usize)
                    }
                })
                .collect(),
            active: vec![true; raw.len()],
        }
    }
}

/// Per-edge label of the constraint-satisfaction encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeState {
    Unavailable,
    Available,
    Serving,
}

/// Edge labels for a whole instance, indexed by edge id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeStateConfig {
    pub states: Vec<EdgeState>,
}

/// Aggregate observables of a feasible profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservableReport {
    pub total_utility: i64,
    /// Active users served by no unit.
    pub disconnected: usize,
    pub spare_capacity: i64,
    pub total_load: i64,
    pub per_unit_load: Vec<i64>,
}

/// Outcome of a best-response query for one user.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BestResponse {
    MoveTo(UnitId),
    /// Kept for interface completeness; dropping service never strictly
    /// improves a feasible profile, so current rules never produce it.
    Disconnect,
    Stay,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

/// Immutable game instance. Adjacency is precomputed in both directions so
/// `∂u` and `∂a` queries are O(degree).
#[derive(Debug, Clone, PartialEq)]
pub struct GameInstance {
    n_users: usize,
    n_units: usize,
    edges: Vec<Edge>,
    capacities: Vec<u32>,
    activity_prob: Vec<f64>,
    user_edges: Vec<Vec<EdgeId>>,
    unit_edges: Vec<Vec<EdgeId>>,
}

impl GameInstance {
    /// Builds and validates an instance. Weights and capacities must be
    /// positive; values may be zero (the reference three-user fixture uses
    /// zero-value edges).
    pub fn new(
        n_users: usize,
        n_units: usize,
        edges: Vec<Edge>,
        capacities: Vec<u32>,
        activity_prob: Vec<f64>,
    ) -> Result<Self, GameError> {
        if capacities.len() != n_units {
            return Err(GameError::LengthMismatch {
                what: "capacities",
                expected: n_units,
                got: capacities.len(),
            });
        }
        if activity_prob.len() != n_users {
            return Err(GameError::LengthMismatch {
                what: "activity probabilities",
                expected: n_users,
                got: activity_prob.len(),
            });
        }
        for (a, &c) in capacities.iter().enumerate() {
            if c == 0 {
                return Err(GameError::ZeroCapacity { unit: a });
            }
        }
        for (u, &p) in activity_prob.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(GameError::BadProbability { user: u, p });
            }
        }
        let mut user_edges = vec![Vec::new(); n_users];
        let mut unit_edges = vec![Vec::new(); n_units];
        let mut seen = std::collections::HashSet::new();
        for (id, e) in edges.iter().enumerate() {
            if e.user >= n_users || e.unit >= n_units {
                return Err(GameError::InvalidEdge {
                    user: e.user,
                    unit: e.unit,
                });
            }
            if !seen.insert((e.user, e.unit)) {
                return Err(GameError::DuplicateEdge {
                    user: e.user,
                    unit: e.unit,
                });
            }
            if e.weight == 0 {
                return Err(GameError::ZeroWeight {
                    user: e.user,
                    unit: e.unit,
                });
            }
            user_edges[e.user].push(id);
            unit_edges[e.unit].push(id);
        }
        Ok(GameInstance {
            n_users,
            n_units,
            edges,
            capacities,
            activity_prob,
            user_edges,
            unit_edges,
        })
    }

    /// Instance where every user is always active.
    pub fn deterministic(
        n_users: usize,
        n_units: usize,
        edges: Vec<Edge>,
        capacities: Vec<u32>,
    ) -> Result<Self, GameError> {
        let p = vec![1.0; n_users];
        Self::new(n_users, n_units, edges, capacities, p)
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id]
    }

    pub fn capacity(&self, a: UnitId) -> u32 {
        self.capacities[a]
    }

    pub fn capacities(&self) -> &[u32] {
        &self.capacities
    }

    pub fn total_capacity(&self) -> i64 {
        self.capacities.iter().map(|&c| c as i64).sum()
    }

    pub fn activity_prob(&self, u: UserId) -> f64 {
        self.activity_prob[u]
    }

    pub fn activity_probs(&self) -> &[f64] {
        &self.activity_prob
    }

    /// True when every user is active with probability one.
    pub fn is_deterministic(&self) -> bool {
        self.activity_prob.iter().all(|&p| p == 1.0)
    }

    /// Edge ids incident to user `u`.
    pub fn user_edges(&self, u: UserId) -> &[EdgeId] {
        &self.user_edges[u]
    }

    /// Edge ids incident to unit `a`.
    pub fn unit_edges(&self, a: UnitId) -> &[EdgeId] {
        &self.unit_edges[a]
    }

    pub fn edge_between(&self, u: UserId, a: UnitId) -> Option<EdgeId> {
        self.user_edges[u]
            .iter()
            .copied()
            .find(|&id| self.edges[id].unit == a)
    }

    pub fn degree_of_user(&self, u: UserId) -> usize {
        self.user_edges[u].len()
    }

    pub fn degree_of_unit(&self, a: UnitId) -> usize {
        self.unit_edges[a].len()
    }

    fn validate_assignment(&self, x: &Assignment) -> Result<(), GameError> {
        if x.choice.len() != self.n_users || x.active.len() != self.n_users {
            return Err(GameError::MalformedLength {
                expected: self.n_users,
                got: x.choice.len(),
            });
        }
        for (u, c) in x.choice.iter().enumerate() {
            if let Choice::Unit(a) = c {
                if self.edge_between(u, *a).is_none() {
                    return Err(GameError::MalformedAssignment { user: u, unit: *a });
                }
            }
        }
        Ok(())
    }

    /// Per-unit loads of a structurally valid assignment.
    pub fn loads(&self, x: &Assignment) -> Vec<i64> {
        let mut loads = vec![0i64; self.n_units];
        for (u, c) in x.choice.iter().enumerate() {
            if let Choice::Unit(a) = c {
                let e = self.edge_between(u, *a).expect("edge exists");
                loads[*a] += self.edges[e].weight as i64;
            }
        }
        loads
    }

    /// Feasibility verdict plus the list of violated constraints. A choice
    /// outside `∂u` is a structural error, not an infeasibility.
    pub fn check_feasible(&self, x: &Assignment) -> Result<FeasibilityReport, GameError> {
        self.validate_assignment(x)?;
        let mut violations = Vec::new();
        for u in 0..self.n_users {
            if !x.active[u] && x.choice[u] != Choice::Disconnected {
                violations.push(Violation::InactiveServing { user: u });
            }
        }
        let loads = self.loads(x);
        for a in 0..self.n_units {
            if loads[a] > self.capacities[a] as i64 {
                violations.push(Violation::OverCapacity {
                    unit: a,
                    load: loads[a],
                    capacity: self.capacities[a] as i64,
                });
            }
        }
        Ok(FeasibilityReport {
            feasible: violations.is_empty(),
            violations,
        })
    }

    pub fn is_feasible(&self, x: &Assignment) -> bool {
        matches!(self.check_feasible(x), Ok(r) if r.feasible)
    }

    /// Lifts an action profile to edge states: `S` on the serving edge,
    /// otherwise `A` exactly when the unit's spare capacity fits the edge
    /// weight, else `U`. Projecting the serving edges back recovers `x`.
    pub fn lift_to_edge_states(&self, x: &Assignment) -> Result<EdgeStateConfig, GameError> {
        let report = self.check_feasible(x)?;
        if !report.feasible {
            return Err(GameError::Infeasible(report.violations));
        }
        let loads = self.loads(x);
        let states = self
            .edges
            .iter()
            .map(|e| {
                if x.choice[e.user] == Choice::Unit(e.unit) {
                    EdgeState::Serving
                } else if loads[e.unit] + e.weight as i64 <= self.capacities[e.unit] as i64 {
                    EdgeState::Available
                } else {
                    EdgeState::Unavailable
                }
            })
            .collect();
        Ok(EdgeStateConfig { states })
    }

    /// Inverse of the lift: read the serving edges back into choices.
    pub fn project_to_assignment(&self, y: &EdgeStateConfig, active: &[bool]) -> Assignment {
        let mut x = Assignment::with_activity(self.n_users, active.to_vec());
        for (id, s) in y.states.iter().enumerate() {
            if *s == EdgeState::Serving {
                let e = &self.edges[id];
                x.choice[e.user] = Choice::Unit(e.unit);
            }
        }
        x
    }

    /// Validity of an edge-state configuration under activity vector
    /// `active`: (i) at most `t_u` serving edges per user, (ii) unit loads
    /// within capacity, (iii) availability labels consistent with spare
    /// capacity, (iv) for active users, an available edge demands service
    /// elsewhere at a value at least as large. A configuration passing all
    /// four is a Nash equilibrium of the game restricted to active users.
    pub fn check_valid(&self, y: &EdgeStateConfig, active: &[bool]) -> bool {
        assert_eq!(y.states.len(), self.edges.len());
        assert_eq!(active.len(), self.n_users);
        // (i) per-user serving count, and the per-user best served value.
        let mut served_value: Vec<Option<u32>> = vec![None; self.n_users];
        for u in 0..self.n_users {
            let mut count = 0;
            for &id in &self.user_edges[u] {
                if y.states[id] == EdgeState::Serving {
                    count += 1;
                    served_value[u] = Some(self.edges[id].value);
                }
            }
            let budget = if active[u] { 1 } else { 0 };
            if count > budget {
                return false;
            }
        }
        // (ii) capacity.
        let mut loads = vec![0i64; self.n_units];
        for (id, s) in y.states.iter().enumerate() {
            if *s == EdgeState::Serving {
                loads[self.edges[id].unit] += self.edges[id].weight as i64;
            }
        }
        for a in 0..self.n_units {
            if loads[a] > self.capacities[a] as i64 {
                return false;
            }
        }
        // (iii) availability labels; the reference load for an edge excludes
        // its own (non-serving) contribution, so the unit load as computed
        // is the right-hand side for U/A edges.
        for (id, s) in y.states.iter().enumerate() {
            let e = &self.edges[id];
            if *s != EdgeState::Serving {
                let fits = loads[e.unit] + e.weight as i64 <= self.capacities[e.unit] as i64;
                let want = if fits {
                    EdgeState::Available
                } else {
                    EdgeState::Unavailable
                };
                if *s != want {
                    return false;
                }
            }
        }
        // (iv) Nash condition on active users.
        for (id, s) in y.states.iter().enumerate() {
            let e = &self.edges[id];
            if *s == EdgeState::Available && active[e.user] {
                match served_value[e.user] {
                    Some(v) if v >= e.value => {}
                    _ => return false,
                }
            }
        }
        true
    }

    /// Value user `u` currently enjoys; `None` when not served.
    pub fn current_value(&self, x: &Assignment, u: UserId) -> Option<u32> {
        match x.choice[u] {
            Choice::Unit(a) => {
                let id = self.edge_between(u, a).expect("edge exists");
                Some(self.edges[id].value)
            }
            Choice::Disconnected => None,
        }
    }

    /// Best response of active user `u` to the rest of the profile: the
    /// available unit of maximal value (her own load removed when computing
    /// spare capacity), if it strictly improves on her current value. A
    /// disconnected user improves by connecting anywhere, including
    /// zero-value edges. Ties break toward the lowest unit id.
    pub fn best_response_of(&self, x: &Assignment, u: UserId) -> BestResponse {
        debug_assert!(x.active[u], "best response queried for inactive user");
        let mut loads = self.loads(x);
        if let Choice::Unit(a) = x.choice[u] {
            let id = self.edge_between(u, a).expect("edge exists");
            loads[a] -= self.edges[id].weight as i64;
        }
        let current = self.current_value(x, u);
        let mut best: Option<(u32, UnitId)> = None;
        for &id in &self.user_edges[u] {
            let e = &self.edges[id];
            if loads[e.unit] + e.weight as i64 > self.capacities[e.unit] as i64 {
                continue;
            }
            let better = match best {
                None => true,
                Some((bv, ba)) => e.value > bv || (e.value == bv && e.unit < ba),
            };
            if better {
                best = Some((e.value, e.unit));
            }
        }
        match best {
            Some((v, a)) => {
                let improves = match current {
                    None => true,
                    Some(c) => v > c,
                };
                if improves && x.choice[u] != Choice::Unit(a) {
                    BestResponse::MoveTo(a)
                } else {
                    BestResponse::Stay
                }
            }
            None => BestResponse::Stay,
        }
    }

    /// Nash test in action space: feasible, and no active user has a
    /// strictly improving move. Equivalent to `check_valid` of the lift.
    pub fn is_nash(&self, x: &Assignment) -> bool {
        if !self.is_feasible(x) {
            return false;
        }
        for u in 0..self.n_users {
            if !x.active[u] {
                continue;
            }
            if self.best_response_of(x, u) != BestResponse::Stay {
                return false;
            }
        }
        true
    }

    /// Aggregate observables of a feasible profile.
    pub fn observables(&self, x: &Assignment) -> Result<ObservableReport, GameError> {
        let report = self.check_feasible(x)?;
        if !report.feasible {
            return Err(GameError::Infeasible(report.violations));
        }
        let mut total_utility = 0i64;
        let mut disconnected = 0usize;
        for u in 0..self.n_users {
            match x.choice[u] {
                Choice::Unit(a) => {
                    let id = self.edge_between(u, a).expect("edge exists");
                    total_utility += self.edges[id].value as i64;
                }
                Choice::Disconnected => {
                    if x.active[u] {
                        disconnected += 1;
                    }
                }
            }
        }
        let per_unit_load = self.loads(x);
        let total_load: i64 = per_unit_load.iter().sum();
        Ok(ObservableReport {
            total_utility,
            disconnected,
            spare_capacity: self.total_capacity() - total_load,
            total_load,
            per_unit_load,
        })
    }

    /// Total utility of a feasible profile (panics on structural errors).
    pub fn utility(&self, x: &Assignment) -> i64 {
        let mut total = 0i64;
        for u in 0..self.n_users {
            if let Choice::Unit(a) = x.choice[u] {
                let id = self.edge_between(u, a).expect("edge exists");
                total += self.edges[id].value as i64;
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{example_instance, reduced, star_instance};

    #[test]
    fn example_feasibility() {
        let inst = example_instance();
        // (1,0,0): user 1 on a, users 2 and 3 on b.
        assert!(inst.is_feasible(&reduced(&inst, [true, false, false])));
        assert!(inst.is_feasible(&reduced(&inst, [false, true, false])));
        assert!(inst.is_feasible(&reduced(&inst, [false, false, true])));
        assert!(inst.is_feasible(&reduced(&inst, [false, true, true])));
        // (1,1,0) overloads unit a: 3 + 1 > 3.
        let bad = reduced(&inst, [true, true, false]);
        let report = inst.check_feasible(&bad).unwrap();
        assert!(!report.feasible);
        assert_eq!(
            report.violations,
            vec![Violation::OverCapacity {
                unit: 0,
                load: 4,
                capacity: 3
            }]
        );
        // All-disconnected is trivially feasible.
        assert!(inst.is_feasible(&Assignment::empty(3)));
    }

    #[test]
    fn malformed_assignment_is_a_structural_error() {
        let inst = star_instance();
        let mut x = Assignment::empty(2);
        x.choice[0] = Choice::Unit(7);
        assert!(matches!(
            inst.check_feasible(&x),
            Err(GameError::MalformedAssignment { user: 0, unit: 7 })
        ));
    }

    #[test]
    fn lift_matches_hand_computation() {
        let inst = example_instance();
        // (0,1,0): user 2 on a, users 1 and 3 on b.
        let x = reduced(&inst, [false, true, false]);
        let y = inst.lift_to_edge_states(&x).unwrap();
        let s = |u: UserId, a: UnitId| y.states[inst.edge_between(u, a).unwrap()];
        assert_eq!(s(0, 0), EdgeState::Unavailable); // spare 2 < w=3
        assert_eq!(s(0, 1), EdgeState::Serving);
        assert_eq!(s(1, 0), EdgeState::Serving);
        assert_eq!(s(1, 1), EdgeState::Unavailable); // spare 1 < w=2
        assert_eq!(s(2, 0), EdgeState::Available); // spare 2 >= 1
        assert_eq!(s(2, 1), EdgeState::Serving);
        let back = inst.project_to_assignment(&y, &x.active);
        assert_eq!(back, x);
    }

    #[test]
    fn lift_of_isolated_user() {
        // Single user, single unit; the user stays disconnected.
        let fits = GameInstance::deterministic(
            1,
            1,
            vec![Edge {
                user: 0,
                unit: 0,
                weight: 2,
                value: 1,
            }],
            vec![3],
        )
        .unwrap();
        let y = fits.lift_to_edge_states(&Assignment::empty(1)).unwrap();
        assert_eq!(y.states[0], EdgeState::Available);

        let too_small = GameInstance::deterministic(
            1,
            1,
            vec![Edge {
                user: 0,
                unit: 0,
                weight: 5,
                value: 1,
            }],
            vec![3],
        )
        .unwrap();
        let y = too_small.lift_to_edge_states(&Assignment::empty(1)).unwrap();
        assert_eq!(y.states[0], EdgeState::Unavailable);
    }

    #[test]
    fn check_valid_example_profiles() {
        let inst = example_instance();
        let active = vec![true; 3];
        let nash = inst
            .lift_to_edge_states(&reduced(&inst, [false, true, false]))
            .unwrap();
        assert!(inst.check_valid(&nash, &active));

        // (0,1,1): edge (3, b) is available while user 3 is served at value 0.
        let not_nash = inst
            .lift_to_edge_states(&reduced(&inst, [false, true, true]))
            .unwrap();
        assert!(!inst.check_valid(&not_nash, &active));

        // All-U is invalid whenever some unit could host some user.
        let all_u = EdgeStateConfig {
            states: vec![EdgeState::Unavailable; inst.n_edges()],
        };
        assert!(!inst.check_valid(&all_u, &active));
    }

    #[test]
    fn nash_certification_example() {
        let inst = example_instance();
        let good = reduced(&inst, [false, true, false]);
        assert!(inst.is_nash(&good));
        assert_eq!(inst.observables(&good).unwrap().total_utility, 5);

        let saturated = reduced(&inst, [true, false, false]);
        assert!(inst.is_nash(&saturated));
        let obs = inst.observables(&saturated).unwrap();
        assert_eq!(obs.per_unit_load, vec![3, 4]);
        assert_eq!(obs.spare_capacity, 0);
        // v_1a + v_2b + v_3b = 2 + 0 + 1.
        assert_eq!(obs.total_utility, 3);

        assert!(!inst.is_nash(&reduced(&inst, [false, false, true])));
    }

    #[test]
    fn observables_example() {
        let inst = example_instance();
        let obs = inst
            .observables(&reduced(&inst, [false, true, false]))
            .unwrap();
        assert_eq!(obs.total_utility, 5);
        assert_eq!(obs.disconnected, 0);
        assert_eq!(obs.per_unit_load, vec![1, 3]);
        assert_eq!(obs.spare_capacity, 3);

        let empty = inst.observables(&Assignment::empty(3)).unwrap();
        assert_eq!(empty.total_utility, 0);
        assert_eq!(empty.disconnected, 3);
        assert_eq!(empty.spare_capacity, 7);

        let infeasible = reduced(&inst, [true, true, false]);
        assert!(matches!(
            inst.observables(&infeasible),
            Err(GameError::Infeasible(_))
        ));
    }

    #[test]
    fn best_response_example() {
        let inst = example_instance();
        // From (0,0,1) user 2 moves to unit a.
        let x = reduced(&inst, [false, false, true]);
        assert_eq!(inst.best_response_of(&x, 1), BestResponse::MoveTo(0));
        // At the good equilibrium user 1 stays put.
        let nash = reduced(&inst, [false, true, false]);
        assert_eq!(inst.best_response_of(&nash, 0), BestResponse::Stay);
        // A disconnected user connects to her only available unit.
        let star = star_instance();
        let empty = Assignment::empty(2);
        assert_eq!(star.best_response_of(&empty, 0), BestResponse::MoveTo(0));
    }

    #[test]
    fn disconnected_user_with_available_unit_is_not_nash_even_at_zero_value() {
        // Value 0 edge: the CSP constraints still force the user to connect.
        let inst = GameInstance::deterministic(
            1,
            1,
            vec![Edge {
                user: 0,
                unit: 0,
                weight: 1,
                value: 0,
            }],
            vec![1],
        )
        .unwrap();
        assert!(!inst.is_nash(&Assignment::empty(1)));
        let mut served = Assignment::empty(1);
        served.choice[0] = Choice::Unit(0);
        assert!(inst.is_nash(&served));
    }

    #[test]
    fn best_response_moves_leave_other_utilities_unchanged() {
        // The aggregate utility is an exact potential: a unilateral move
        // changes only the mover's own value.
        let inst = example_instance();
        let x = reduced(&inst, [false, false, true]);
        let per_user = |x: &Assignment| -> Vec<Option<u32>> {
            (0..3).map(|u| inst.current_value(x, u)).collect()
        };
        if let BestResponse::MoveTo(a) = inst.best_response_of(&x, 1) {
            let before = per_user(&x);
            let mut after_x = x.clone();
            after_x.choice[1] = Choice::Unit(a);
            let after = per_user(&after_x);
            assert_eq!(before[0], after[0]);
            assert_eq!(before[2], after[2]);
            assert!(after[1] > before[1]);
        } else {
            panic!("user 2 must have an improving move");
        }
    }

    #[test]
    fn instance_validation_errors() {
        let mk = |edges: Vec<Edge>, caps: Vec<u32>| GameInstance::deterministic(2, 1, edges, caps);
        let e = |w: u32| Edge {
            user: 0,
            unit: 0,
            weight: w,
            value: 1,
        };
        assert!(matches!(mk(vec![e(0)], vec![1]), Err(GameError::ZeroWeight { .. })));
        assert!(matches!(mk(vec![e(1)], vec![0]), Err(GameError::ZeroCapacity { .. })));
        assert!(matches!(
            mk(vec![e(1), e(2)], vec![1]),
            Err(GameError::DuplicateEdge { .. })
        ));
        assert!(matches!(
            GameInstance::new(2, 1, vec![e(1)], vec![1], vec![0.5, 1.5]),
            Err(GameError::BadProbability { .. })
        ));
    }
}
