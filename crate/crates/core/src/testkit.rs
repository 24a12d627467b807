//! Shared fixtures and small generators used by the test suites and
//! benchmarks. Not part of the solver API.

use crate::game::{Assignment, Choice, Edge, GameInstance};
use rand::Rng;

/// The three-user / two-unit reference instance: weights
/// w = (3,1),(1,2),(1,2), values v = (2,1),(3,0),(0,1), capacities (3,4).
/// It has exactly two Nash equilibria.
pub fn example_instance() -> GameInstance {
    let edges = vec![
        Edge { user: 0, unit: 0, weight: 3, value: 2 },
        Edge { user: 0, unit: 1, weight: 1, value: 1 },
        Edge { user: 1, unit: 0, weight: 1, value: 3 },
        Edge { user: 1, unit: 1, weight: 2, value: 0 },
        Edge { user: 2, unit: 0, weight: 1, value: 0 },
        Edge { user: 2, unit: 1, weight: 2, value: 1 },
    ];
    GameInstance::deterministic(3, 2, edges, vec![3, 4]).unwrap()
}

/// Builds the reference-instance profile from reduced coordinates
/// `(x_1a, x_2a, x_3a)`: `true` puts the user on unit 0 (a), `false` on
/// unit 1 (b). Every user is connected in this encoding.
pub fn reduced(inst: &GameInstance, on_a: [bool; 3]) -> Assignment {
    let mut x = Assignment::empty(inst.n_users());
    for (u, &flag) in on_a.iter().enumerate() {
        x.choice[u] = Choice::Unit(if flag { 0 } else { 1 });
    }
    x
}

/// One unit of capacity 1 contested by two unit-weight users with values
/// 7 and 4: exactly two equilibria, one per served user.
pub fn star_instance() -> GameInstance {
    let edges = vec![
        Edge { user: 0, unit: 0, weight: 1, value: 7 },
        Edge { user: 1, unit: 0, weight: 1, value: 4 },
    ];
    GameInstance::deterministic(2, 1, edges, vec![1]).unwrap()
}

/// Same star with both users active with probability 1/2.
pub fn star_instance_half_active() -> GameInstance {
    let edges = vec![
        Edge { user: 0, unit: 0, weight: 1, value: 7 },
        Edge { user: 1, unit: 0, weight: 1, value: 4 },
    ];
    GameInstance::new(2, 1, edges, vec![1], vec![0.5, 0.5]).unwrap()
}

/// Random bipartite tree instance with at most `max_edges` edges. Nodes are
/// added one at a time, each attached to a uniformly chosen node of the
/// other side, so the user/unit graph is a tree (edges = nodes - 1).
pub fn random_tree_instance<R: Rng>(rng: &mut R, max_edges: usize) -> GameInstance {
    let n_nodes = rng.gen_range(2..=max_edges + 1);
    // Node 0 is a user or a unit with equal probability; each subsequent
    // node picks a parent of the opposite kind.
    let mut users: Vec<usize> = Vec::new();
    let mut units: Vec<usize> = Vec::new();
    let mut edges: Vec<(usize, usize)> = Vec::new(); // (user, unit) by local index
    let first_is_user = rng.gen_bool(0.5);
    if first_is_user {
        users.push(0);
    } else {
        units.push(0);
    }
    for _ in 1..n_nodes {
        let make_user = if users.is_empty() {
            true
        } else if units.is_empty() {
            false
        } else {
            rng.gen_bool(0.5)
        };
        if make_user {
            let u = users.len();
            let a = rng.gen_range(0..units.len());
            users.push(u);
            edges.push((u, a));
        } else {
            let a = units.len();
            let u = rng.gen_range(0..users.len());
            units.push(a);
            edges.push((u, a));
        }
    }
    if users.is_empty() || edges.is_empty() {
        // Degenerate draw (single node); retry.
        return random_tree_instance(rng, max_edges);
    }
    let edge_list: Vec<Edge> = edges
        .iter()
        .map(|&(u, a)| Edge {
            user: u,
            unit: a,
            weight: rng.gen_range(1..=4),
            value: rng.gen_range(1..=6),
        })
        .collect();
    let caps: Vec<u32> = (0..units.len()).map(|_| rng.gen_range(1..=6)).collect();
    GameInstance::deterministic(users.len(), units.len(), edge_list, caps).unwrap()
}
