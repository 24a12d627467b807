//! Random instance ensemble: Erdős–Rényi bipartite topology with edge
//! weight/value pairs drawn from the maximum-entropy joint distribution on
//! an integer grid with uniform marginals and a target Pearson
//! correlation. The family is the exponential coupling
//! `p(w, v) ∝ exp(λ w v + a_w + b_v)` with the row/column potentials fitted
//! so both marginals stay uniform; λ = 0 gives independent uniforms and
//! λ → ±∞ converges to the (anti)diagonal affine maps of correlation ±1.
//! (The free-marginal tilt `exp(λ w v)` cannot reach |c| beyond ~0.24 on
//! these grids: it collapses onto a corner of the grid as |λ| grows.)

use crate::game::{Edge, GameInstance};
use num_rational::Ratio;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid ensemble parameter: {0}")]
    InvalidParams(String),
    #[error("|c| = 1 requires equal range lengths, got {w_len} weights vs {v_len} values")]
    UnequalRanges { w_len: usize, v_len: usize },
    #[error("mean-field bound infeasible: required mean value {required} exceeds v_max {v_max}")]
    MeanFieldInfeasible { required: f64, v_max: u32 },
}

/// How per-user activity probabilities are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ActivityModel {
    /// Deterministic play: p ≡ 1.
    #[default]
    AllActive,
    /// Stochastic play with p_u drawn uniformly in (0, 1).
    UniformIid,
    /// Common fixed probability for every user.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleParams {
    pub n_users: usize,
    pub n_units: usize,
    pub capacity: u32,
    pub edge_prob: f64,
    pub w_min: u32,
    pub w_max: u32,
    pub v_min: u32,
    pub v_max: u32,
    pub correlation: f64,
    pub seed: u64,
    #[serde(default)]
    pub activity: ActivityModel,
}

impl EnsembleParams {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.n_users == 0 || self.n_units == 0 {
            return Err(EnsembleError::InvalidParams("empty instance".into()));
        }
        if !(self.edge_prob > 0.0 && self.edge_prob <= 1.0) {
            return Err(EnsembleError::InvalidParams(format!(
                "edge probability {} outside (0, 1]",
                self.edge_prob
            )));
        }
        if self.w_min == 0 || self.w_min > self.w_max || self.v_min > self.v_max {
            return Err(EnsembleError::InvalidParams(
                "weight/value ranges must be non-empty with w_min >= 1".into(),
            ));
        }
        if self.capacity == 0 {
            return Err(EnsembleError::InvalidParams("capacity must be >= 1".into()));
        }
        if !(-1.0..=1.0).contains(&self.correlation) {
            return Err(EnsembleError::InvalidParams(format!(
                "correlation {} outside [-1, 1]",
                self.correlation
            )));
        }
        let w_len = (self.w_max - self.w_min + 1) as usize;
        let v_len = (self.v_max - self.v_min + 1) as usize;
        if self.correlation.abs() == 1.0 && w_len != v_len {
            return Err(EnsembleError::UnequalRanges { w_len, v_len });
        }
        if self.correlation != 0.0 && (w_len == 1 || v_len == 1) {
            return Err(EnsembleError::InvalidParams(
                "degenerate range cannot carry a nonzero correlation".into(),
            ));
        }
        if let ActivityModel::Fixed(p) = self.activity {
            if !(0.0..=1.0).contains(&p) {
                return Err(EnsembleError::InvalidParams(format!(
                    "fixed activity probability {p} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn delta(&self) -> i64 {
        self.w_max as i64 - self.v_max as i64
    }
}

/// Sampler for (weight, value) pairs at a fixed correlation.
#[derive(Debug, Clone)]
pub struct WvSampler {
    w_min: u32,
    v_min: u32,
    w_len: usize,
    v_len: usize,
    lambda: f64,
    /// Cumulative distribution over the grid, row-major in (w, v); empty
    /// for the deterministic |c| = 1 cases.
    cdf: Vec<f64>,
    diagonal: Option<bool>, // Some(true): w = v + delta; Some(false): anti-diagonal
}

impl WvSampler {
    pub fn new(
        correlation: f64,
        w_range: (u32, u32),
        v_range: (u32, u32),
    ) -> Result<Self, EnsembleError> {
        let (w_min, w_max) = w_range;
        let (v_min, v_max) = v_range;
        let w_len = (w_max - w_min + 1) as usize;
        let v_len = (v_max - v_min + 1) as usize;
        if correlation.abs() == 1.0 {
            if w_len != v_len {
                return Err(EnsembleError::UnequalRanges { w_len, v_len });
            }
            return Ok(WvSampler {
                w_min,
                v_min,
                w_len,
                v_len,
                lambda: if correlation > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY },
                cdf: Vec::new(),
                diagonal: Some(correlation > 0.0),
            });
        }
        let lambda = tune_lambda(correlation, w_range, v_range)?;
        let pdf = tilt_pdf(lambda, w_range, v_range);
        let mut cdf = Vec::with_capacity(pdf.len());
        let mut acc = 0.0;
        for p in pdf {
            acc += p;
            cdf.push(acc);
        }
        Ok(WvSampler {
            w_min,
            v_min,
            w_len,
            v_len,
            lambda,
            cdf,
            diagonal: None,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> (u32, u32) {
        if let Some(diag) = self.diagonal {
            let k = rng.gen_range(0..self.v_len) as u32;
            let v = self.v_min + k;
            let w = if diag {
                self.w_min + k
            } else {
                self.w_min + (self.w_len as u32 - 1 - k)
            };
            return (w, v);
        }
        let r: f64 = rng.gen();
        let idx = self.cdf.partition_point(|&c| c < r).min(self.cdf.len() - 1);
        let wi = idx / self.v_len;
        let vi = idx % self.v_len;
        (self.w_min + wi as u32, self.v_min + vi as u32)
    }
}

/// Joint pmf of the tilted coupling with uniform marginals, row-major in
/// (w, v). Log-domain Sinkhorn fitting of the row/column potentials.
fn tilt_pdf(lambda: f64, (w_min, w_max): (u32, u32), (v_min, v_max): (u32, u32)) -> Vec<f64> {
    let w_len = (w_max - w_min + 1) as usize;
    let v_len = (v_max - v_min + 1) as usize;
    let log_kernel: Vec<f64> = (0..w_len * v_len)
        .map(|idx| {
            let w = (w_min + (idx / v_len) as u32) as f64;
            let v = (v_min + (idx % v_len) as u32) as f64;
            lambda * w * v
        })
        .collect();
    let mut row = vec![0.0f64; w_len];
    let mut col = vec![0.0f64; v_len];
    let row_target = -(w_len as f64).ln();
    let col_target = -(v_len as f64).ln();
    let lse = |terms: &mut dyn Iterator<Item = f64>| -> f64 {
        let vals: Vec<f64> = terms.collect();
        let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + vals.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
    };
    for _ in 0..20_000 {
        for (i, r) in row.iter_mut().enumerate() {
            let s = lse(&mut (0..v_len).map(|j| log_kernel[i * v_len + j] + col[j]));
            *r = row_target - s;
        }
        let mut max_step: f64 = 0.0;
        for (j, c) in col.iter_mut().enumerate() {
            let s = lse(&mut (0..w_len).map(|i| log_kernel[i * v_len + j] + row[i]));
            let next = col_target - s;
            max_step = max_step.max((next - *c).abs());
            *c = next;
        }
        if max_step < 1e-13 {
            break;
        }
    }
    let mut pdf: Vec<f64> = (0..w_len * v_len)
        .map(|idx| (log_kernel[idx] + row[idx / v_len] + col[idx % v_len]).exp())
        .collect();
    let total: f64 = pdf.iter().sum();
    for p in &mut pdf {
        *p /= total;
    }
    pdf
}

/// Pearson correlation of the tilted grid distribution, by exact summation.
pub fn pearson_of_lambda(
    lambda: f64,
    w_range: (u32, u32),
    v_range: (u32, u32),
) -> f64 {
    let pdf = tilt_pdf(lambda, w_range, v_range);
    let v_len = (v_range.1 - v_range.0 + 1) as usize;
    let (mut ew, mut ev, mut eww, mut evv, mut ewv) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (idx, &p) in pdf.iter().enumerate() {
        let w = (w_range.0 + (idx / v_len) as u32) as f64;
        let v = (v_range.0 + (idx % v_len) as u32) as f64;
        ew += p * w;
        ev += p * v;
        eww += p * w * w;
        evv += p * v * v;
        ewv += p * w * v;
    }
    let var_w = eww - ew * ew;
    let var_v = evv - ev * ev;
    if var_w <= 0.0 || var_v <= 0.0 {
        return 0.0;
    }
    (ewv - ew * ev) / (var_w * var_v).sqrt()
}

/// Finds the tilt parameter hitting the target correlation. The map
/// λ ↦ Pearson is strictly increasing, so bisection over an adaptively
/// widened bracket converges; the result satisfies |Pearson − c| ≤ 1e-9.
pub fn tune_lambda(
    c: f64,
    w_range: (u32, u32),
    v_range: (u32, u32),
) -> Result<f64, EnsembleError> {
    if c.abs() >= 1.0 {
        return Err(EnsembleError::InvalidParams(
            "tune_lambda requires |c| < 1".into(),
        ));
    }
    if c == 0.0 {
        return Ok(0.0);
    }
    let f = |l: f64| pearson_of_lambda(l, w_range, v_range) - c;
    let mut half_width = 1.0;
    loop {
        if f(-half_width) <= 0.0 && f(half_width) >= 0.0 {
            break;
        }
        half_width *= 2.0;
        if half_width > 1e6 {
            return Err(EnsembleError::InvalidParams(format!(
                "no bracket found for correlation {c}"
            )));
        }
    }
    let (mut lo, mut hi) = (-half_width, half_width);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let val = f(mid);
        if val.abs() <= 1e-10 {
            return Ok(mid);
        }
        if val < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Draws one instance: each of the N·M candidate edges appears
/// independently with probability q, with (w, v) from the tilted sampler.
/// Degree-zero users are kept. Fully reproducible from the seed.
pub fn sample_instance(params: &EnsembleParams) -> Result<GameInstance, EnsembleError> {
    params.validate()?;
    let sampler = WvSampler::new(
        params.correlation,
        (params.w_min, params.w_max),
        (params.v_min, params.v_max),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut edges = Vec::new();
    for u in 0..params.n_users {
        for a in 0..params.n_units {
            if rng.gen::<f64>() < params.edge_prob {
                let (weight, value) = sampler.sample(&mut rng);
                edges.push(Edge { user: u, unit: a, weight, value });
            }
        }
    }
    let p: Vec<f64> = match params.activity {
        ActivityModel::AllActive => vec![1.0; params.n_users],
        ActivityModel::Fixed(p) => vec![p; params.n_users],
        ActivityModel::UniformIid => (0..params.n_users)
            .map(|_| {
                // Open interval (0, 1).
                loop {
                    let p: f64 = rng.gen();
                    if p > 0.0 && p < 1.0 {
                        break p;
                    }
                }
            })
            .collect(),
    };
    let caps = vec![params.capacity; params.n_units];
    GameInstance::new(params.n_users, params.n_units, edges, caps, p)
        .map_err(|e| EnsembleError::InvalidParams(e.to_string()))
}

/// Derives a per-instance seed stream from a base seed, splittable by index.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // SplitMix64 step, a standard stream splitter.
    let mut z = base
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Activity-weighted lower and upper total-capacity requirements:
/// Σ p_u min w and Σ p_u max w over each user's edges. Degree-zero users
/// contribute nothing; deterministic instances give integers.
pub fn capacity_bounds(inst: &GameInstance) -> (f64, f64) {
    let mut lower = 0.0;
    let mut upper = 0.0;
    for u in 0..inst.n_users() {
        let ws: Vec<i64> = inst
            .user_edges(u)
            .iter()
            .map(|&id| inst.edge(id).weight as i64)
            .collect();
        if let (Some(&min), Some(&max)) = (ws.iter().min(), ws.iter().max()) {
            lower += inst.activity_prob(u) * min as f64;
            upper += inst.activity_prob(u) * max as f64;
        }
    }
    (lower, upper)
}

/// Activity-weighted upper bound on the total utility, Σ p_u max v.
pub fn utility_upper_bound(inst: &GameInstance) -> f64 {
    (0..inst.n_users())
        .map(|u| {
            inst.user_edges(u)
                .iter()
                .map(|&id| inst.edge(id).value as i64)
                .max()
                .map_or(0.0, |m| inst.activity_prob(u) * m as f64)
        })
        .sum()
}

/// All-active integer version of the utility bound, Σ max v.
pub fn utility_upper_bound_deterministic(inst: &GameInstance) -> i64 {
    (0..inst.n_users())
        .map(|u| {
            inst.user_edges(u)
                .iter()
                .map(|&id| inst.edge(id).value as i64)
                .max()
                .unwrap_or(0)
        })
        .sum()
}

/// Mean-field utility range for the fully correlated ensemble (c = 1,
/// w = v + δ on every edge). The maximum comes from the capacity
/// constraint (N − D)(v̄ + δ) ≤ MC; the minimum from requiring the average
/// spare capacity per unit not to exceed the average weight,
/// C − L/M ≤ v̄ + δ. Exact rational arithmetic.
pub fn mean_field_bounds(
    params: &EnsembleParams,
) -> Result<(Ratio<i64>, Ratio<i64>), EnsembleError> {
    params.validate()?;
    if params.correlation != 1.0 {
        return Err(EnsembleError::InvalidParams(
            "mean-field bounds are defined for the c = 1 ensemble".into(),
        ));
    }
    let n = params.n_users as i64;
    let m = params.n_units as i64;
    let c = params.capacity as i64;
    let delta = params.delta();
    let v_min = Ratio::from_integer(params.v_min as i64);
    let v_max = Ratio::from_integer(params.v_max as i64);
    let total_cap = Ratio::from_integer(m * c);

    // U_max = max over v̄, D of (N − D) v̄ with (N − D)(v̄ + δ) ≤ MC:
    // monotone in v̄, so v̄ = v_max and U = min(N v_max, MC v_max/(v_max+δ)).
    let unconstrained = Ratio::from_integer(n) * v_max;
    let capped = total_cap * v_max / (v_max + Ratio::from_integer(delta));
    let u_max = unconstrained.min(capped);

    // U_min at D = 0: v̄ ≥ CM/(M+N) − δ, clamped into the value range (a
    // requirement above v_max means the spare-capacity constraint cannot
    // bind and every equilibrium is near-optimal).
    let required = total_cap / Ratio::from_integer(m + n) - Ratio::from_integer(delta);
    let v_bar = required.max(v_min).min(v_max);
    let u_min = (Ratio::from_integer(n) * v_bar).min(u_max);
    if u_min > u_max {
        return Err(EnsembleError::MeanFieldInfeasible {
            required: *required.numer() as f64 / *required.denom() as f64,
            v_max: params.v_max,
        });
    }
    Ok((u_min, u_max))
}
