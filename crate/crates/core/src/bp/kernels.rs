//! Single-factor update kernels shared by sum-product BP (linear or log
//! domain) and Max-Sum. Message triples are indexed U = 0, A = 1, S = 2.
//!
//! User side: the constraint allows either no serving edge (then every
//! edge is U) or exactly one serving edge b, with edges of value strictly
//! above v_b forced to U and the rest free to be U or A. The Gibbs bias on
//! the served value is owned by this side: incoming S-components are
//! weighted by exp(μ v) and so is the S output.
//!
//! Unit side: a knapsack convolution over the load T of the other edges,
//! evaluated against a reference load R that decides availability; the
//! outgoing U/A/S components read windows of the leave-one-out tables.

use crate::semiring::Semiring;

pub const U: usize = 0;
pub const A: usize = 1;
pub const S: usize = 2;

/// Incoming state of one user-side neighbor: the unit-to-user message on
/// that edge, the edge value, and the bias element for exp(μ v).
#[derive(Debug, Clone, Copy)]
pub struct UserNeighbor {
    pub value: u32,
    pub msg: [f64; 3],
    pub bias: f64,
}

impl UserNeighbor {
    #[inline(always)]
    fn u(&self) -> f64 {
        self.msg[U]
    }
    #[inline(always)]
    fn g<Sr: Semiring>(&self) -> f64 {
        Sr::add(self.msg[U], self.msg[A])
    }
    #[inline(always)]
    fn s<Sr: Semiring>(&self) -> f64 {
        Sr::mul(self.bias, self.msg[S])
    }
}

/// The three building blocks of a user update toward one edge, computed
/// from the other neighbors (`others` must be sorted by value ascending):
/// the all-U product, the serve-sums over all / value-qualified neighbors,
/// and the product for the serving output. `all_g` is the product of
/// (U + A) over the others, needed by the stochastic variant.
#[derive(Debug, Clone, Copy)]
pub struct UserUpdateParts {
    pub all_u: f64,
    pub all_g: f64,
    /// Σ_b s_b · Π_{v_i > v_b} u_i · Π_{v_i ≤ v_b, i≠b} g_i over all others.
    pub serve_any: f64,
    /// Same sum restricted to others with value ≥ the target's value.
    pub serve_ge: f64,
    /// Π over others of (u_i if v_i > v_target else g_i).
    pub serve_ctx: f64,
}

/// Core pass over the sorted neighbor list. O(d) after sorting: neighbors
/// are grouped into equal-value classes; for a serving neighbor, strictly
/// higher classes contribute their U components and everything else its
/// U + A, with same-class peers handled by within-class prefix/suffix
/// products.
pub fn user_update_parts<Sr: Semiring>(others: &[UserNeighbor], target_value: u32) -> UserUpdateParts {
    let n = others.len();
    debug_assert!(others.windows(2).all(|w| w[0].value <= w[1].value));
    let mut all_u = Sr::ONE;
    let mut all_g = Sr::ONE;
    let mut serve_ctx = Sr::ONE;
    for o in others {
        all_u = Sr::mul(all_u, o.u());
        all_g = Sr::mul(all_g, o.g::<Sr>());
        let ctx = if o.value > target_value {
            o.u()
        } else {
            o.g::<Sr>()
        };
        serve_ctx = Sr::mul(serve_ctx, ctx);
    }
    // Suffix products of U over whole classes.
    let mut class_ends = Vec::new(); // exclusive end index per class
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && others[j].value == others[i].value {
            j += 1;
        }
        class_ends.push(j);
        i = j;
    }
    let n_classes = class_ends.len();
    let mut suffix_u = vec![Sr::ONE; n_classes + 1];
    for c in (0..n_classes).rev() {
        let start = if c == 0 { 0 } else { class_ends[c - 1] };
        let mut prod = suffix_u[c + 1];
        for o in &others[start..class_ends[c]] {
            prod = Sr::mul(prod, o.u());
        }
        suffix_u[c] = prod;
    }
    let mut serve_any = Sr::ZERO;
    let mut serve_ge = Sr::ZERO;
    let mut prefix_g = Sr::ONE;
    let mut scratch: Vec<f64> = Vec::new();
    for c in 0..n_classes {
        let start = if c == 0 { 0 } else { class_ends[c - 1] };
        let end = class_ends[c];
        let members = &others[start..end];
        // Within-class leave-one-out products of g.
        scratch.clear();
        scratch.resize(members.len(), Sr::ONE);
        let mut acc = Sr::ONE;
        for (k, m) in members.iter().enumerate() {
            scratch[k] = acc;
            acc = Sr::mul(acc, m.g::<Sr>());
        }
        let mut back = Sr::ONE;
        for (k, m) in members.iter().enumerate().rev() {
            scratch[k] = Sr::mul(scratch[k], back);
            back = Sr::mul(back, m.g::<Sr>());
        }
        let mut class_sum = Sr::ZERO;
        for (k, m) in members.iter().enumerate() {
            let term = Sr::mul(m.s::<Sr>(), Sr::mul(scratch[k], Sr::mul(prefix_g, suffix_u[c + 1])));
            class_sum = Sr::add(class_sum, term);
        }
        serve_any = Sr::add(serve_any, class_sum);
        if members[0].value >= target_value {
            serve_ge = Sr::add(serve_ge, class_sum);
        }
        prefix_g = Sr::mul(prefix_g, acc);
    }
    UserUpdateParts {
        all_u,
        all_g,
        serve_any,
        serve_ge,
        serve_ctx,
    }
}

/// Deterministic (always-active) user update toward one edge; returns the
/// unnormalized triple.
pub fn user_update<Sr: Semiring>(
    others: &[UserNeighbor],
    target_value: u32,
    target_bias: f64,
) -> [f64; 3] {
    let p = user_update_parts::<Sr>(others, target_value);
    [
        Sr::add(p.all_u, p.serve_any),
        p.serve_ge,
        Sr::mul(target_bias, p.serve_ctx),
    ]
}

/// Stochastic user update: the inactive branch (weight q0) leaves every
/// edge freely U or A; the active branch (weight q1) is the deterministic
/// update. Serving requires activity.
pub fn user_update_mirror<Sr: Semiring>(
    others: &[UserNeighbor],
    target_value: u32,
    target_bias: f64,
    q0: f64,
    q1: f64,
) -> [f64; 3] {
    let p = user_update_parts::<Sr>(others, target_value);
    let inactive = Sr::mul(q0, p.all_g);
    [
        Sr::add(inactive, Sr::mul(q1, Sr::add(p.all_u, p.serve_any))),
        Sr::add(inactive, Sr::mul(q1, p.serve_ge)),
        Sr::mul(q1, Sr::mul(target_bias, p.serve_ctx)),
    ]
}

/// Full-neighborhood aggregate for a user: the partition value of the
/// active branch (all-U plus every serve term), the all-(U+A) product of
/// the inactive branch, and the individual serve terms (used for service
/// distributions and decimation).
#[derive(Debug, Clone)]
pub struct UserAggregate {
    pub all_u: f64,
    pub all_g: f64,
    /// One term per neighbor, in input order: s_b · Π context.
    pub serve_terms: Vec<f64>,
    pub active_partition: f64,
}

pub fn user_aggregate<Sr: Semiring>(neighbors: &[UserNeighbor]) -> UserAggregate {
    let n = neighbors.len();
    debug_assert!(neighbors.windows(2).all(|w| w[0].value <= w[1].value));
    let mut all_u = Sr::ONE;
    let mut all_g = Sr::ONE;
    for o in neighbors {
        all_u = Sr::mul(all_u, o.u());
        all_g = Sr::mul(all_g, o.g::<Sr>());
    }
    let mut serve_terms = vec![Sr::ZERO; n];
    // Class structure as in `user_update_parts`.
    let mut class_ends = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && neighbors[j].value == neighbors[i].value {
            j += 1;
        }
        class_ends.push(j);
        i = j;
    }
    let n_classes = class_ends.len();
    let mut suffix_u = vec![Sr::ONE; n_classes + 1];
    for c in (0..n_classes).rev() {
        let start = if c == 0 { 0 } else { class_ends[c - 1] };
        let mut prod = suffix_u[c + 1];
        for o in &neighbors[start..class_ends[c]] {
            prod = Sr::mul(prod, o.u());
        }
        suffix_u[c] = prod;
    }
    let mut prefix_g = Sr::ONE;
    let mut scratch: Vec<f64> = Vec::new();
    for c in 0..n_classes {
        let start = if c == 0 { 0 } else { class_ends[c - 1] };
        let end = class_ends[c];
        let members = &neighbors[start..end];
        scratch.clear();
        scratch.resize(members.len(), Sr::ONE);
        let mut acc = Sr::ONE;
        for (k, m) in members.iter().enumerate() {
            scratch[k] = acc;
            acc = Sr::mul(acc, m.g::<Sr>());
        }
        let mut back = Sr::ONE;
        for (k, m) in members.iter().enumerate().rev() {
            scratch[k] = Sr::mul(scratch[k], back);
            back = Sr::mul(back, m.g::<Sr>());
        }
        for (k, m) in members.iter().enumerate() {
            serve_terms[start + k] =
                Sr::mul(m.s::<Sr>(), Sr::mul(scratch[k], Sr::mul(prefix_g, suffix_u[c + 1])));
        }
        prefix_g = Sr::mul(prefix_g, acc);
    }
    let mut active_partition = all_u;
    for &t in &serve_terms {
        active_partition = Sr::add(active_partition, t);
    }
    UserAggregate {
        all_u,
        all_g,
        serve_terms,
        active_partition,
    }
}

/// Incoming state of one unit-side neighbor: the user-to-unit message and
/// the edge load.
#[derive(Debug, Clone, Copy)]
pub struct UnitNeighbor {
    pub weight: u32,
    pub msg: [f64; 3],
}

/// Messages from a unit to all of its neighbors, plus the unit partition
/// value (the normalizer of the full constraint, needed by the Bethe free
/// energy). `out` is written in the order of `entries`.
pub fn unit_update_all<Sr: Semiring>(
    cap: usize,
    entries: &[UnitNeighbor],
    out: &mut [[f64; 3]],
) -> f64 {
    debug_assert_eq!(entries.len(), out.len());
    let d = entries.len();
    for o in out.iter_mut() {
        *o = [Sr::ZERO, Sr::ZERO, Sr::ZERO];
    }
    let mut partition = Sr::ZERO;
    if d == 0 {
        // Empty unit: only the zero-load state, valid at any reference.
        return Sr::ONE;
    }
    // Reference loads R share a band when they sit on the same side of
    // every availability threshold cap - w_i.
    let mut cuts: Vec<usize> = vec![0, cap + 1];
    for e in entries {
        let t = cap as i64 - e.weight as i64 + 1;
        if t > 0 && (t as usize) <= cap {
            cuts.push(t as usize);
        }
    }
    cuts.sort_unstable();
    cuts.dedup();
    let mut factors: Vec<SparseFactor> = Vec::with_capacity(d);
    let mut l1o: Vec<Vec<f64>> = vec![Vec::new(); d];
    let mut full: Vec<f64> = Vec::new();
    for win in cuts.windows(2) {
        let (lo, hi) = (win[0], win[1]); // R in [lo, hi)
        factors.clear();
        for e in entries {
            let available = lo as i64 <= cap as i64 - e.weight as i64;
            factors.push(SparseFactor {
                g: if available { e.msg[A] } else { e.msg[U] },
                w: e.weight as usize,
                s: e.msg[S],
            });
        }
        full.clear();
        full.resize(cap + 1, Sr::ZERO);
        full[0] = Sr::ONE;
        for f in &factors {
            conv_in_place::<Sr>(&mut full, f);
        }
        for r in lo..hi.min(cap + 1) {
            partition = Sr::add(partition, full[r]);
        }
        leave_one_out::<Sr>(&factors, cap, &mut l1o);
        for (i, e) in entries.iter().enumerate() {
            let w = e.weight as usize;
            let table = &l1o[i];
            // U: R in (cap - w, cap], T = R.
            let u_lo = (cap as i64 - w as i64 + 1).max(lo as i64) as usize;
            for r in u_lo..hi.min(cap + 1) {
                out[i][U] = Sr::add(out[i][U], table[r]);
            }
            // A: R in [0, cap - w], T = R.
            if w <= cap {
                let a_hi = (cap - w + 1).min(hi).min(cap + 1);
                for r in lo..a_hi {
                    out[i][A] = Sr::add(out[i][A], table[r]);
                }
                // S: R in [w, cap], T = R - w.
                let s_lo = w.max(lo);
                for r in s_lo..hi.min(cap + 1) {
                    out[i][S] = Sr::add(out[i][S], table[r - w]);
                }
            }
        }
    }
    partition
}

#[derive(Debug, Clone, Copy)]
struct SparseFactor {
    g: f64,
    w: usize,
    s: f64,
}

/// acc <- acc * (g + s x^w), truncated at the capacity.
fn conv_in_place<Sr: Semiring>(acc: &mut [f64], f: &SparseFactor) {
    let cap = acc.len() - 1;
    for t in (0..=cap).rev() {
        let mut val = Sr::mul(f.g, acc[t]);
        if t >= f.w {
            val = Sr::add(val, Sr::mul(f.s, acc[t - f.w]));
        }
        acc[t] = val;
    }
}

/// Leave-one-out products of sparse factors by divide and conquer; no
/// division, O(d log d) truncated convolutions.
fn leave_one_out<Sr: Semiring>(factors: &[SparseFactor], cap: usize, out: &mut [Vec<f64>]) {
    let mut identity = vec![Sr::ZERO; cap + 1];
    identity[0] = Sr::ONE;
    rec::<Sr>(factors, 0, factors.len(), identity, out);
}

fn rec<Sr: Semiring>(
    factors: &[SparseFactor],
    lo: usize,
    hi: usize,
    acc: Vec<f64>,
    out: &mut [Vec<f64>],
) {
    if hi - lo == 1 {
        out[lo] = acc;
        return;
    }
    let mid = (lo + hi) / 2;
    let mut acc_right = acc.clone();
    for f in &factors[lo..mid] {
        conv_in_place::<Sr>(&mut acc_right, f);
    }
    let mut acc_left = acc;
    for f in &factors[mid..hi] {
        conv_in_place::<Sr>(&mut acc_left, f);
    }
    rec::<Sr>(factors, lo, mid, acc_left, out);
    rec::<Sr>(factors, mid, hi, acc_right, out);
}
