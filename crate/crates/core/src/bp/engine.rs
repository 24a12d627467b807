//! Asynchronous belief-propagation engine over the user/unit factor graph.
//! One code path serves the deterministic measure, the stochastic measure
//! with per-user mirror fields, and clamped (decimation) runs; the message
//! domain switches to logs for strongly biased measures.

use crate::bp::kernels::{
    unit_update_all, user_aggregate, user_update, user_update_mirror, UnitNeighbor,
    UserNeighbor, A, S, U,
};
use crate::game::{EdgeId, GameInstance, UnitId, UserId};
use crate::semiring::{Linear, LogProb, Semiring};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BpError {
    #[error("contradictory messages on edge {edge}: no state satisfies the constraints")]
    Contradiction { edge: EdgeId },
    #[error("mirror contradiction at user {user}: the system forbids a required activity state")]
    MirrorContradiction { user: UserId },
}

/// Storage representation of the messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainChoice {
    /// Log domain for |μ| > 8, linear otherwise.
    Auto,
    Linear,
    Log,
}

#[derive(Debug, Clone)]
pub struct BpOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Seed of the sweep-order shuffles.
    pub schedule_seed: u64,
    pub domain: DomainChoice,
}

impl Default for BpOptions {
    fn default() -> Self {
        BpOptions {
            damping: 0.0,
            tol: 1e-10,
            max_iter: 2000,
            schedule_seed: 0,
            domain: DomainChoice::Auto,
        }
    }
}

impl BpOptions {
    fn resolve_domain(&self, mu: f64) -> Domain {
        match self.domain {
            DomainChoice::Linear => Domain::Linear,
            DomainChoice::Log => Domain::Log,
            DomainChoice::Auto => {
                if mu.abs() > 8.0 {
                    Domain::Log
                } else {
                    Domain::Linear
                }
            }
        }
    }
}

/// Per-user mirror pairs (probability scale, normalized).
#[derive(Debug, Clone)]
pub struct MirrorFields {
    pub q: Vec<[f64; 2]>,
    pub q_hat: Vec<[f64; 2]>,
}

impl MirrorFields {
    fn fresh(inst: &GameInstance) -> Self {
        let q = (0..inst.n_users())
            .map(|u| {
                let p = inst.activity_prob(u);
                [1.0 - p, p]
            })
            .collect();
        MirrorFields {
            q,
            q_hat: vec![[0.5, 0.5]; inst.n_users()],
        }
    }
}

/// Directed message triples for every edge, plus mirror fields when the
/// stochastic system is active. Triples are normalized in their domain.
#[derive(Debug, Clone)]
pub struct MessageSet {
    pub mu: f64,
    pub domain: Domain,
    /// Unit-to-user message per edge id.
    pub to_user: Vec<[f64; 3]>,
    /// User-to-unit message per edge id (carries the μ bias).
    pub to_unit: Vec<[f64; 3]>,
    pub mirror: Option<MirrorFields>,
}

impl MessageSet {
    pub fn uniform(inst: &GameInstance, mu: f64, domain: Domain, mirror: bool) -> Self {
        let triple = match domain {
            Domain::Linear => [1.0 / 3.0; 3],
            Domain::Log => [-(3.0f64.ln()); 3],
        };
        MessageSet {
            mu,
            domain,
            to_user: vec![triple; inst.n_edges()],
            to_unit: vec![triple; inst.n_edges()],
            mirror: mirror.then(|| MirrorFields::fresh(inst)),
        }
    }

    /// Probability-scale view of a stored triple.
    pub fn prob(&self, triple: [f64; 3]) -> [f64; 3] {
        match self.domain {
            Domain::Linear => triple,
            Domain::Log => [triple[0].exp(), triple[1].exp(), triple[2].exp()],
        }
    }

    pub fn convert(&mut self, domain: Domain) {
        if self.domain == domain {
            return;
        }
        let map: fn(f64) -> f64 = match domain {
            Domain::Linear => |x| x.exp(),
            Domain::Log => |x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY },
        };
        for t in self.to_user.iter_mut().chain(self.to_unit.iter_mut()) {
            for x in t.iter_mut() {
                *x = map(*x);
            }
        }
        self.domain = domain;
    }

    /// Largest probability-scale difference against another set.
    pub fn max_delta(&self, other: &MessageSet) -> f64 {
        let mut delta: f64 = 0.0;
        for (a, b) in self
            .to_user
            .iter()
            .chain(self.to_unit.iter())
            .zip(other.to_user.iter().chain(other.to_unit.iter()))
        {
            let pa = self.prob(*a);
            let pb = other.prob(*b);
            for k in 0..3 {
                delta = delta.max((pa[k] - pb[k]).abs());
            }
        }
        delta
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BpReport {
    pub converged: bool,
    pub iterations: usize,
    pub max_delta: f64,
}

/// A user pinned to one action during decimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserClamp {
    Serve(UnitId),
    Disconnect,
}

/// Precomputed sweep structure: per-user neighbor order sorted by value.
pub struct FactorGraph<'a> {
    pub inst: &'a GameInstance,
    /// Edge ids of each user, sorted by (value, edge id) ascending.
    pub user_sorted: Vec<Vec<EdgeId>>,
}

impl<'a> FactorGraph<'a> {
    pub fn new(inst: &'a GameInstance) -> Self {
        let user_sorted = (0..inst.n_users())
            .map(|u| {
                let mut ids = inst.user_edges(u).to_vec();
                ids.sort_by_key(|&id| (inst.edge(id).value, id));
                ids
            })
            .collect();
        FactorGraph { inst, user_sorted }
    }
}

enum Node {
    User(UserId),
    Unit(UnitId),
}

pub(crate) struct Sweeper<'a> {
    pub graph: &'a FactorGraph<'a>,
    pub mu: f64,
    pub damping: f64,
    pub mirror_on: bool,
    pub clamps: Option<&'a [Option<UserClamp>]>,
}

impl<'a> Sweeper<'a> {
    fn clamp_of(&self, u: UserId) -> Option<UserClamp> {
        self.clamps.and_then(|c| c[u])
    }

    /// One asynchronous pass over all nodes in the given order. Returns the
    /// largest probability-scale message change.
    fn sweep<Sr: Semiring>(&self, ms: &mut MessageSet, order: &[Node]) -> Result<f64, BpError> {
        let inst = self.graph.inst;
        let mut delta: f64 = 0.0;
        let mut neighbors: Vec<UserNeighbor> = Vec::new();
        let mut entries: Vec<UnitNeighbor> = Vec::new();
        let mut out: Vec<[f64; 3]> = Vec::new();
        for node in order {
            match node {
                Node::User(u) => {
                    let u = *u;
                    if let Some(clamp) = self.clamp_of(u) {
                        self.write_clamped::<Sr>(ms, u, clamp);
                        continue;
                    }
                    neighbors.clear();
                    for &id in &self.graph.user_sorted[u] {
                        let e = inst.edge(id);
                        neighbors.push(UserNeighbor {
                            value: e.value,
                            msg: ms.to_user[id],
                            bias: Sr::from_exponent(self.mu * e.value as f64),
                        });
                    }
                    let (q0, q1) = if self.mirror_on {
                        self.refresh_mirror::<Sr>(ms, u, &neighbors)?
                    } else {
                        (Sr::ZERO, Sr::ONE)
                    };
                    let use_mirror = self.mirror_on && inst.activity_prob(u) < 1.0;
                    for (k, &id) in self.graph.user_sorted[u].iter().enumerate() {
                        let target = neighbors[k];
                        let others: Vec<UserNeighbor> = neighbors
                            .iter()
                            .enumerate()
                            .filter(|(j, _)| *j != k)
                            .map(|(_, n)| *n)
                            .collect();
                        let mut msg = if use_mirror {
                            user_update_mirror::<Sr>(&others, target.value, target.bias, q0, q1)
                        } else {
                            user_update::<Sr>(&others, target.value, target.bias)
                        };
                        if Sr::normalize(&mut msg).is_none() {
                            return Err(BpError::Contradiction { edge: id });
                        }
                        delta = delta.max(self.store::<Sr>(&mut ms.to_unit[id], msg));
                    }
                }
                Node::Unit(a) => {
                    let a = *a;
                    let ids = inst.unit_edges(a);
                    if ids.is_empty() {
                        continue;
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
                    unit_update_all::<Sr>(inst.capacity(a) as usize, &entries, &mut out);
                    for (k, &id) in ids.iter().enumerate() {
                        let mut msg = out[k];
                        if Sr::normalize(&mut msg).is_none() {
                            return Err(BpError::Contradiction { edge: id });
                        }
                        delta = delta.max(self.store::<Sr>(&mut ms.to_user[id], msg));
                    }
                }
            }
        }
        Ok(delta)
    }

    /// Clamped users emit fixed messages: the serving edge is pure S, the
    /// other edges may be U, or A when their value does not beat the
    /// clamped one (the equilibrium constraint still binds them).
    fn write_clamped<Sr: Semiring>(&self, ms: &mut MessageSet, u: UserId, clamp: UserClamp) {
        let inst = self.graph.inst;
        let clamp_value = match clamp {
            UserClamp::Serve(a) => {
                let id = inst.edge_between(u, a).expect("clamp must follow an edge");
                Some(inst.edge(id).value)
            }
            UserClamp::Disconnect => None,
        };
        for &id in &self.graph.user_sorted[u] {
            let e = inst.edge(id);
            let triple = match (clamp, clamp_value) {
                (UserClamp::Serve(a), _) if e.unit == a => [Sr::ZERO, Sr::ZERO, Sr::ONE],
                (_, Some(cv)) if e.value <= cv => {
                    let mut t = [Sr::ONE, Sr::ONE, Sr::ZERO];
                    Sr::normalize(&mut t);
                    t
                }
                _ => [Sr::ONE, Sr::ZERO, Sr::ZERO],
            };
            ms.to_unit[id] = triple;
        }
    }

    /// Refreshes Q̂ and Q for user u from the current incoming messages and
    /// returns (q0, q1) as semiring elements.
    fn refresh_mirror<Sr: Semiring>(
        &self,
        ms: &mut MessageSet,
        u: UserId,
        neighbors: &[UserNeighbor],
    ) -> Result<(f64, f64), BpError> {
        let p = self.graph.inst.activity_prob(u);
        let mirror = ms.mirror.as_mut().expect("mirror fields present");
        if p == 1.0 {
            mirror.q[u] = [0.0, 1.0];
            mirror.q_hat[u] = [0.0, 1.0];
            return Ok((Sr::ZERO, Sr::ONE));
        }
        if p == 0.0 {
            mirror.q[u] = [1.0, 0.0];
            mirror.q_hat[u] = [1.0, 0.0];
            return Ok((Sr::ONE, Sr::ZERO));
        }
        let agg = user_aggregate::<Sr>(neighbors);
        // Probability-scale Q̂ from the two branch weights.
        let l0 = Sr::to_log(agg.all_g);
        let l1 = Sr::to_log(agg.active_partition);
        let (h0, h1) = normalize_log_pair(l0, l1);
        if h1 == 0.0 && p > 0.0 {
            return Err(BpError::MirrorContradiction { user: u });
        }
        if h0 == 0.0 && p < 1.0 {
            return Err(BpError::MirrorContradiction { user: u });
        }
        mirror.q_hat[u] = [h0, h1];
        let q0 = (1.0 - p) * h1;
        let q1 = p * h0;
        let z = q0 + q1;
        mirror.q[u] = [q0 / z, q1 / z];
        Ok((Sr::from_prob(q0 / z), Sr::from_prob(q1 / z)))
    }

    fn store<Sr: Semiring>(&self, slot: &mut [f64; 3], new: [f64; 3]) -> f64 {
        let old = *slot;
        let mixed = if self.damping > 0.0 {
            let mut m = [0.0; 3];
            for k in 0..3 {
                // Damping mixes on the stored scale (probabilities in the
                // linear domain, log-probabilities in the log domain).
                m[k] = self.damping * old[k] + (1.0 - self.damping) * new[k];
            }
            Sr::normalize(&mut m);
            m
        } else {
            new
        };
        let mut delta: f64 = 0.0;
        for k in 0..3 {
            delta = delta.max((Sr::to_prob(mixed[k]) - Sr::to_prob(old[k])).abs());
        }
        *slot = mixed;
        delta
    }
}

fn normalize_log_pair(l0: f64, l1: f64) -> (f64, f64) {
    if l0 == f64::NEG_INFINITY && l1 == f64::NEG_INFINITY {
        return (0.0, 0.0);
    }
    let m = l0.max(l1);
    let e0 = (l0 - m).exp();
    let e1 = (l1 - m).exp();
    (e0 / (e0 + e1), e1 / (e0 + e1))
}

pub(crate) struct RunConfig<'a> {
    pub mirror: bool,
    pub clamps: Option<&'a [Option<UserClamp>]>,
}

pub(crate) fn run_engine(
    graph: &FactorGraph,
    mu: f64,
    opts: &BpOptions,
    warm: Option<MessageSet>,
    cfg: RunConfig,
) -> Result<(MessageSet, BpReport), BpError> {
    let inst = graph.inst;
    let domain = opts.resolve_domain(mu);
    let mut ms = match warm {
        Some(mut prev) => {
            prev.convert(domain);
            prev.mu = mu;
            if cfg.mirror && prev.mirror.is_none() {
                prev.mirror = Some(MirrorFields::fresh(inst));
            }
            prev
        }
        None => MessageSet::uniform(inst, mu, domain, cfg.mirror),
    };
    let mut order: Vec<Node> = (0..inst.n_users())
        .map(Node::User)
        .chain((0..inst.n_units()).map(Node::Unit))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.schedule_seed);
    let sweeper = Sweeper {
        graph,
        mu,
        damping: opts.damping,
        mirror_on: cfg.mirror,
        clamps: cfg.clamps,
    };
    let mut report = BpReport {
        converged: false,
        iterations: 0,
        max_delta: f64::INFINITY,
    };
    for it in 1..=opts.max_iter {
        order.shuffle(&mut rng);
        let delta = match domain {
            Domain::Linear => sweeper.sweep::<Linear>(&mut ms, &order)?,
            Domain::Log => sweeper.sweep::<LogProb>(&mut ms, &order)?,
        };
        report.iterations = it;
        report.max_delta = delta;
        if delta < opts.tol {
            report.converged = true;
            break;
        }
    }
    Ok((ms, report))
}

/// Plain BP over the deterministic measure `exp(μ U) C(y)`.
pub fn run_bp(
    inst: &GameInstance,
    mu: f64,
    opts: &BpOptions,
    warm: Option<MessageSet>,
) -> Result<(MessageSet, BpReport), BpError> {
    let graph = FactorGraph::new(inst);
    run_engine(
        &graph,
        mu,
        opts,
        warm,
        RunConfig {
            mirror: false,
            clamps: None,
        },
    )
}

/// BP with some users pinned to fixed actions (decimation).
pub fn run_bp_clamped(
    inst: &GameInstance,
    mu: f64,
    opts: &BpOptions,
    warm: Option<MessageSet>,
    clamps: &[Option<UserClamp>],
) -> Result<(MessageSet, BpReport), BpError> {
    let graph = FactorGraph::new(inst);
    run_engine(
        &graph,
        mu,
        opts,
        warm,
        RunConfig {
            mirror: false,
            clamps: Some(clamps),
        },
    )
}

/// Per-edge serving marginals and per-user action distributions at a fixed
/// point. The edge marginal multiplies the two directed messages (the bias
/// already sits inside the user-to-unit one); the user distribution over
/// `∂u ∪ {disconnected}` comes from the user-side belief and sums to one.
pub struct Marginals {
    /// P[y_ua = S] per edge id.
    pub edge_serve: Vec<f64>,
    /// Per user: probability of being served by each sorted neighbor, in
    /// `FactorGraph::user_sorted` order.
    pub serve_dist: Vec<Vec<f64>>,
    /// Per user: probability of staying unserved while active.
    pub disconnect: Vec<f64>,
    /// Per user: probability of being inactive (mirror runs only; zero in
    /// deterministic runs).
    pub inactive: Vec<f64>,
}

pub fn marginals(graph: &FactorGraph, ms: &MessageSet) -> Marginals {
    match ms.domain {
        Domain::Linear => marginals_impl::<Linear>(graph, ms),
        Domain::Log => marginals_impl::<LogProb>(graph, ms),
    }
}

fn marginals_impl<Sr: Semiring>(graph: &FactorGraph, ms: &MessageSet) -> Marginals {
    let inst = graph.inst;
    let mut edge_serve = vec![0.0; inst.n_edges()];
    for id in 0..inst.n_edges() {
        let b = [
            Sr::mul(ms.to_unit[id][U], ms.to_user[id][U]),
            Sr::mul(ms.to_unit[id][A], ms.to_user[id][A]),
            Sr::mul(ms.to_unit[id][S], ms.to_user[id][S]),
        ];
        let probs = normalize_to_prob::<Sr>(b);
        edge_serve[id] = probs[2];
    }
    let mut serve_dist = Vec::with_capacity(inst.n_users());
    let mut disconnect = vec![0.0; inst.n_users()];
    let mut inactive = vec![0.0; inst.n_users()];
    for u in 0..inst.n_users() {
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
        let (q0, q1) = match (&ms.mirror, inst.activity_prob(u)) {
            (Some(m), p) if p < 1.0 => (m.q[u][0], m.q[u][1]),
            _ => (0.0, 1.0),
        };
        let q0e = Sr::from_prob(q0);
        let q1e = Sr::from_prob(q1);
        // Weights: inactive branch, active-disconnected, serve via each edge.
        let w_inactive = Sr::mul(q0e, agg.all_g);
        let w_disc = Sr::mul(q1e, agg.all_u);
        let mut weights = vec![Sr::to_log(w_inactive), Sr::to_log(w_disc)];
        for &t in &agg.serve_terms {
            weights.push(Sr::to_log(Sr::mul(q1e, t)));
        }
        let max_w = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lin: Vec<f64> = weights.iter().map(|&w| (w - max_w).exp()).collect();
        let z: f64 = lin.iter().sum();
        inactive[u] = lin[0] / z;
        disconnect[u] = lin[1] / z;
        serve_dist.push(lin[2..].iter().map(|&x| x / z).collect());
    }
    Marginals {
        edge_serve,
        serve_dist,
        disconnect,
        inactive,
    }
}

fn normalize_to_prob<Sr: Semiring>(mut t: [f64; 3]) -> [f64; 3] {
    match Sr::normalize(&mut t) {
        Some(_) => [Sr::to_prob(t[0]), Sr::to_prob(t[1]), Sr::to_prob(t[2])],
        None => [0.0, 0.0, 0.0],
    }
}
