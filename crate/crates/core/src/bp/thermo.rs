//! Bethe thermodynamics at a BP fixed point: averages of the utility,
//! disconnections and spare capacity under the tilted equilibrium measure,
//! plus the entropy from the node/edge normalizers. Every variable has
//! degree two, so log Z = Σ_users log Z_ψ + Σ_units log Z_φ − Σ_edges log Z_e
//! with normalized fixed-point messages.

use crate::bp::engine::{marginals, Domain, FactorGraph, MessageSet};
use crate::bp::kernels::{unit_update_all, user_aggregate, UnitNeighbor, UserNeighbor, A, S, U};
use crate::semiring::{Linear, LogProb, Semiring};
use serde::Serialize;

/// One converged point of the equilibrium landscape.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LandscapePoint {
    pub mu: f64,
    pub utility: f64,
    pub disconnected: f64,
    pub spare_capacity: f64,
    pub entropy: f64,
    /// μF = μ·utility + entropy = log Z.
    pub free_energy: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Filled by sweeps; single evaluations leave it 0.
    pub branch: usize,
}

pub fn bethe_thermodynamics(
    graph: &FactorGraph,
    ms: &MessageSet,
    converged: bool,
    iterations: usize,
) -> LandscapePoint {
    match ms.domain {
        Domain::Linear => bethe_impl::<Linear>(graph, ms, converged, iterations),
        Domain::Log => bethe_impl::<LogProb>(graph, ms, converged, iterations),
    }
}

fn bethe_impl<Sr: Semiring>(
    graph: &FactorGraph,
    ms: &MessageSet,
    converged: bool,
    iterations: usize,
) -> LandscapePoint {
    let inst = graph.inst;
    let mu = ms.mu;
    let m = marginals(graph, ms);
    let mut utility = 0.0;
    let mut load = 0.0;
    for (id, e) in inst.edges().iter().enumerate() {
        utility += e.value as f64 * m.edge_serve[id];
        load += e.weight as f64 * m.edge_serve[id];
    }
    let mut disconnected = 0.0;
    for u in 0..inst.n_users() {
        if inst.user_edges(u).is_empty() {
            // Isolated users are always disconnected while active.
            disconnected += if ms.mirror.is_some() {
                inst.activity_prob(u)
            } else {
                1.0
            };
        } else {
            disconnected += m.disconnect[u];
        }
    }
    let log_z = bethe_log_z::<Sr>(graph, ms);
    let entropy = log_z - mu * utility;
    LandscapePoint {
        mu,
        utility,
        disconnected,
        spare_capacity: inst.total_capacity() as f64 - load,
        entropy,
        free_energy: mu * utility + entropy,
        converged,
        iterations,
        branch: 0,
    }
}

/// Deterministic Bethe log-partition value; the mirror correction for
/// stochastic instances lives in the mirror module.
pub(crate) fn bethe_log_z<Sr: Semiring>(graph: &FactorGraph, ms: &MessageSet) -> f64 {
    let inst = graph.inst;
    let mut log_z = 0.0;
    for u in 0..inst.n_users() {
        log_z += Sr::to_log(user_partition::<Sr>(graph, ms, u));
    }
    let mut entries: Vec<UnitNeighbor> = Vec::new();
    let mut out: Vec<[f64; 3]> = Vec::new();
    for a in 0..inst.n_units() {
        let ids = inst.unit_edges(a);
        if ids.is_empty() {
            continue; // empty unit contributes a single valid state
        }
        entries.clear();
        for &id in ids {
            entries.push(UnitNeighbor {
                weight: inst.edge(id).weight,
                msg: ms.to_unit[id],
            });
        }
        out.clear();
        out.resize(ids.len(), [Sr::ZERO; 3]);
        let partition = unit_update_all::<Sr>(inst.capacity(a) as usize, &entries, &mut out);
        log_z += Sr::to_log(partition);
    }
    for id in 0..inst.n_edges() {
        let z_edge = Sr::add(
            Sr::add(
                Sr::mul(ms.to_unit[id][U], ms.to_user[id][U]),
                Sr::mul(ms.to_unit[id][A], ms.to_user[id][A]),
            ),
            Sr::mul(ms.to_unit[id][S], ms.to_user[id][S]),
        );
        log_z -= Sr::to_log(z_edge);
    }
    log_z
}

/// User-factor normalizer with the incoming messages, including the mirror
/// mixture when fields are present.
pub(crate) fn user_partition<Sr: Semiring>(
    graph: &FactorGraph,
    ms: &MessageSet,
    u: usize,
) -> f64 {
    let inst = graph.inst;
    let neighbors: Vec<UserNeighbor> = graph.user_sorted[u]
        .iter()
        .map(|&id| {
            let e = inst.edge(id);
            UserNeighbor {
                value: e.value,
                msg: ms.to_user[id],
                bias: Sr::from_exponent(ms.mu * e.value as f64),
            }
        })
        .collect();
    let agg = user_aggregate::<Sr>(&neighbors);
    match (&ms.mirror, inst.activity_prob(u)) {
        (Some(mirror), p) if p < 1.0 => {
            let q0 = Sr::from_prob(mirror.q[u][0]);
            let q1 = Sr::from_prob(mirror.q[u][1]);
            Sr::add(Sr::mul(q0, agg.all_g), Sr::mul(q1, agg.active_partition))
        }
        _ => agg.active_partition,
    }
}
