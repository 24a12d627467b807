//! Warm-started μ sweeps across the equilibrium landscape, branch
//! segmentation, and the first-order-transition report built from an
//! upward and a downward sweep (hysteresis window plus the free-energy
//! crossing between branches).

use crate::bp::engine::{run_bp, BpOptions, MessageSet};
use crate::bp::thermo::{bethe_thermodynamics, LandscapePoint};
use crate::bp::FactorGraph;
use crate::ensemble::utility_upper_bound_deterministic;
use crate::game::GameInstance;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub bp: BpOptions,
    /// A utility step larger than this fraction of U+ between consecutive
    /// converged points starts a new branch.
    pub jump_fraction: f64,
    /// Fixed points with entropy below -this are unphysical.
    pub entropy_tol: f64,
    /// Fixed points with utility above U+ + this are unphysical.
    pub utility_tol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            bp: BpOptions::default(),
            jump_fraction: 0.05,
            entropy_tol: 1e-6,
            utility_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    /// One point per grid value, in grid order.
    pub points: Vec<LandscapePoint>,
    /// Physical-fixed-point flags (false marks S < 0 or U > U+ points,
    /// which truncate their branch and reset the warm start).
    pub physical: Vec<bool>,
    pub n_branches: usize,
}

impl SweepResult {
    /// Converged, physical points only.
    pub fn good_points(&self) -> impl Iterator<Item = &LandscapePoint> {
        self.points
            .iter()
            .zip(&self.physical)
            .filter(|(p, &ok)| ok && p.converged)
            .map(|(p, _)| p)
    }
}

/// Runs BP along the grid, carrying the messages from one μ to the next.
/// Non-converged points are recorded and the sweep continues; unphysical
/// fixed points are flagged and the warm start is reset so later points
/// are not poisoned.
pub fn mu_sweep(
    inst: &GameInstance,
    grid: &[f64],
    opts: &SweepOptions,
    warm: Option<MessageSet>,
) -> SweepResult {
    let graph = FactorGraph::new(inst);
    let u_plus = utility_upper_bound_deterministic(inst) as f64;
    let mut points = Vec::with_capacity(grid.len());
    let mut physical = Vec::with_capacity(grid.len());
    let mut carry = warm;
    for &mu in grid {
        match run_bp(inst, mu, &opts.bp, carry.take()) {
            Ok((ms, report)) => {
                let point = bethe_thermodynamics(&graph, &ms, report.converged, report.iterations);
                let ok = point.entropy >= -opts.entropy_tol
                    && point.utility <= u_plus + opts.utility_tol
                    && point.utility.is_finite()
                    && point.entropy.is_finite();
                physical.push(ok);
                points.push(point);
                carry = ok.then_some(ms);
            }
            Err(_) => {
                // Contradictions behave like non-convergence at this μ.
                points.push(LandscapePoint {
                    mu,
                    utility: f64::NAN,
                    disconnected: f64::NAN,
                    spare_capacity: f64::NAN,
                    entropy: f64::NAN,
                    free_energy: f64::NAN,
                    converged: false,
                    iterations: 0,
                    branch: 0,
                });
                physical.push(false);
                carry = None;
            }
        }
    }
    let n_branches = tag_branches(&mut points, &physical, opts.jump_fraction * u_plus.max(1.0));
    SweepResult {
        points,
        physical,
        n_branches,
    }
}

fn tag_branches(points: &mut [LandscapePoint], physical: &[bool], jump: f64) -> usize {
    let mut branch = 0usize;
    let mut last_u: Option<f64> = None;
    let mut any = false;
    for (p, &ok) in points.iter_mut().zip(physical) {
        if !(ok && p.converged) {
            last_u = None; // a hole in the curve also separates branches
            continue;
        }
        if let Some(prev) = last_u {
            if (p.utility - prev).abs() > jump {
                branch += 1;
            }
        } else if any {
            branch += 1;
        }
        p.branch = branch;
        last_u = Some(p.utility);
        any = true;
    }
    if any {
        branch + 1
    } else {
        0
    }
}

/// Landscape summary built from an upward and a downward sweep over the
/// same grid. Branch membership is decided by splitting the pooled
/// utilities at their midpoint, which separates cleanly exactly when the
/// landscape has a genuine gap.
#[derive(Debug, Clone, Serialize)]
pub struct TransitionReport {
    /// Free-energy crossing of the two branches.
    pub mu_star: Option<f64>,
    /// Upward sweep: first grid μ that lands on the high branch.
    pub mu_jump_up: Option<f64>,
    /// Downward sweep: smallest μ still on the high branch.
    pub mu_high_min: Option<f64>,
    /// (largest low-branch utility, smallest high-branch utility).
    pub gap: Option<(f64, f64)>,
    pub two_branches: bool,
}

pub fn transition_report(up: &SweepResult, down: &SweepResult, u_plus: f64) -> TransitionReport {
    let pooled: Vec<&LandscapePoint> = up.good_points().chain(down.good_points()).collect();
    if pooled.is_empty() {
        return TransitionReport {
            mu_star: None,
            mu_jump_up: None,
            mu_high_min: None,
            gap: None,
            two_branches: false,
        };
    }
    let u_min = pooled.iter().map(|p| p.utility).fold(f64::INFINITY, f64::min);
    let u_max = pooled
        .iter()
        .map(|p| p.utility)
        .fold(f64::NEG_INFINITY, f64::max);
    let split = 0.5 * (u_min + u_max);
    let is_high = |p: &LandscapePoint| p.utility >= split;
    let low_max = pooled
        .iter()
        .filter(|p| !is_high(p))
        .map(|p| p.utility)
        .fold(f64::NEG_INFINITY, f64::max);
    let high_min = pooled
        .iter()
        .filter(|p| is_high(p))
        .map(|p| p.utility)
        .fold(f64::INFINITY, f64::min);
    // Two branches only when the split separates by a real margin.
    let two_branches = low_max.is_finite()
        && high_min.is_finite()
        && high_min - low_max > 0.01 * u_plus.max(1.0);
    if !two_branches {
        return TransitionReport {
            mu_star: None,
            mu_jump_up: None,
            mu_high_min: None,
            gap: None,
            two_branches: false,
        };
    }
    let mu_jump_up = {
        let mut found = None;
        let mut seen_low = false;
        for p in up.good_points() {
            if is_high(p) {
                if seen_low {
                    found = Some(p.mu);
                }
                break;
            }
            seen_low = true;
        }
        found
    };
    let mu_high_min = down
        .good_points()
        .filter(|p| is_high(p))
        .map(|p| p.mu)
        .fold(f64::INFINITY, f64::min);
    let mu_high_min = mu_high_min.is_finite().then_some(mu_high_min);
    // Free-energy curves per branch on the pooled points, keyed by μ.
    let mut low: Vec<(f64, f64)> = pooled
        .iter()
        .filter(|p| !is_high(p))
        .map(|p| (p.mu, p.free_energy))
        .collect();
    let mut high: Vec<(f64, f64)> = pooled
        .iter()
        .filter(|p| is_high(p))
        .map(|p| (p.mu, p.free_energy))
        .collect();
    low.sort_by(|a, b| a.0.total_cmp(&b.0));
    high.sort_by(|a, b| a.0.total_cmp(&b.0));
    low.dedup_by(|a, b| a.0 == b.0);
    high.dedup_by(|a, b| a.0 == b.0);
    let mu_star = crossing(&low, &high);
    TransitionReport {
        mu_star,
        mu_jump_up,
        mu_high_min,
        gap: Some((low_max, high_min)),
        two_branches,
    }
}

/// Root of f_high(μ) − f_low(μ) by linear interpolation on the overlap of
/// the two curves.
fn crossing(low: &[(f64, f64)], high: &[(f64, f64)]) -> Option<f64> {
    let interp = |curve: &[(f64, f64)], mu: f64| -> Option<f64> {
        if curve.len() < 2 || mu < curve[0].0 || mu > curve[curve.len() - 1].0 {
            return None;
        }
        let idx = curve.partition_point(|&(m, _)| m <= mu).min(curve.len() - 1);
        let (m1, f1) = curve[idx - 1];
        let (m2, f2) = curve[idx];
        if m2 == m1 {
            return Some(f1);
        }
        Some(f1 + (f2 - f1) * (mu - m1) / (m2 - m1))
    };
    let mut grid: Vec<f64> = low.iter().chain(high.iter()).map(|&(m, _)| m).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut prev: Option<(f64, f64)> = None;
    for &mu in &grid {
        if let (Some(fl), Some(fh)) = (interp(low, mu), interp(high, mu)) {
            let diff = fh - fl;
            if let Some((pmu, pdiff)) = prev {
                if pdiff.signum() != diff.signum() && pdiff != 0.0 {
                    return Some(pmu + (mu - pmu) * pdiff / (pdiff - diff));
                }
            }
            prev = Some((mu, diff));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::star_instance;

    #[test]
    fn single_point_grid_matches_direct_evaluation() {
        let inst = star_instance();
        let result = mu_sweep(&inst, &[0.0], &SweepOptions::default(), None);
        assert_eq!(result.points.len(), 1);
        assert_eq!(result.n_branches, 1);
        let p = &result.points[0];
        assert!(p.converged);
        assert!((p.entropy - 2.0f64.ln()).abs() < 1e-8);
        assert!((p.free_energy - p.entropy).abs() < 1e-12);
    }

    #[test]
    fn utility_is_monotone_along_a_converged_branch() {
        let inst = star_instance();
        let grid: Vec<f64> = (-8..=8).map(|k| k as f64 * 0.25).collect();
        let result = mu_sweep(&inst, &grid, &SweepOptions::default(), None);
        let us: Vec<f64> = result.good_points().map(|p| p.utility).collect();
        assert_eq!(us.len(), grid.len());
        for w in us.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
    }
}
