//! Commutative semirings the message-passing kernels are generic over:
//! plain probabilities, log-probabilities (for strongly biased measures)
//! and max-plus (for the zero-temperature limit). One set of update
//! kernels serves sum-product BP, its log-domain variant and Max-Sum.

/// Element type is always `f64`; the algebra decides what it means.
pub trait Semiring: Copy + Default + 'static {
    const ZERO: f64;
    const ONE: f64;
    fn add(a: f64, b: f64) -> f64;
    fn mul(a: f64, b: f64) -> f64;
    fn is_zero(x: f64) -> bool;
    /// Maps an exponent `e` (a bias like μ·v, or a Max-Sum value term) to
    /// the multiplicative element representing `exp(e)`.
    fn from_exponent(e: f64) -> f64;
    /// Normalizes a message triple in place and reports the normalizer
    /// (sum, log-sum-exp, or max). Returns `None` when the triple is
    /// identically zero, which signals a contradiction.
    fn normalize(triple: &mut [f64; 3]) -> Option<f64>;
    /// Probability-scale view of a normalized element, for convergence
    /// deltas and marginals.
    fn to_prob(x: f64) -> f64;
    /// Log-scale view of an element's magnitude.
    fn to_log(x: f64) -> f64;
    /// Embeds a probability as a multiplicative element.
    fn from_prob(p: f64) -> f64;
}

/// Ordinary probabilities.
#[derive(Debug, Clone, Copy, Default)]
pub struct Linear;

impl Semiring for Linear {
    const ZERO: f64 = 0.0;
    const ONE: f64 = 1.0;
    #[inline(always)]
    fn add(a: f64, b: f64) -> f64 {
        a + b
    }
    #[inline(always)]
    fn mul(a: f64, b: f64) -> f64 {
        a * b
    }
    #[inline(always)]
    fn is_zero(x: f64) -> bool {
        x <= 0.0
    }
    #[inline(always)]
    fn from_exponent(e: f64) -> f64 {
        e.exp()
    }
    fn normalize(triple: &mut [f64; 3]) -> Option<f64> {
        let sum = triple[0] + triple[1] + triple[2];
        if !sum.is_finite() || sum <= 0.0 {
            return None;
        }
        for x in triple.iter_mut() {
            *x /= sum;
        }
        Some(sum)
    }
    #[inline(always)]
    fn to_prob(x: f64) -> f64 {
        x
    }
    #[inline(always)]
    fn to_log(x: f64) -> f64 {
        if x > 0.0 {
            x.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
    #[inline(always)]
    fn from_prob(p: f64) -> f64 {
        p
    }
}

#[inline(always)]
fn log_sum_exp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Log-probabilities; numerically safe for |μ| large.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogProb;

impl Semiring for LogProb {
    const ZERO: f64 = f64::NEG_INFINITY;
    const ONE: f64 = 0.0;
    #[inline(always)]
    fn add(a: f64, b: f64) -> f64 {
        log_sum_exp2(a, b)
    }
    #[inline(always)]
    fn mul(a: f64, b: f64) -> f64 {
        a + b
    }
    #[inline(always)]
    fn is_zero(x: f64) -> bool {
        x == f64::NEG_INFINITY
    }
    #[inline(always)]
    fn from_exponent(e: f64) -> f64 {
        e
    }
    fn normalize(triple: &mut [f64; 3]) -> Option<f64> {
        let z = log_sum_exp2(log_sum_exp2(triple[0], triple[1]), triple[2]);
        if z == f64::NEG_INFINITY || !z.is_finite() {
            return None;
        }
        for x in triple.iter_mut() {
            *x -= z;
        }
        Some(z)
    }
    #[inline(always)]
    fn to_prob(x: f64) -> f64 {
        x.exp()
    }
    #[inline(always)]
    fn to_log(x: f64) -> f64 {
        x
    }
    #[inline(always)]
    fn from_prob(p: f64) -> f64 {
        if p > 0.0 {
            p.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Max-plus: messages are max-marginal offsets, normalized to max 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaxPlus;

impl Semiring for MaxPlus {
    const ZERO: f64 = f64::NEG_INFINITY;
    const ONE: f64 = 0.0;
    #[inline(always)]
    fn add(a: f64, b: f64) -> f64 {
        a.max(b)
    }
    #[inline(always)]
    fn mul(a: f64, b: f64) -> f64 {
        a + b
    }
    #[inline(always)]
    fn is_zero(x: f64) -> bool {
        x == f64::NEG_INFINITY
    }
    #[inline(always)]
    fn from_exponent(e: f64) -> f64 {
        e
    }
    fn normalize(triple: &mut [f64; 3]) -> Option<f64> {
        let m = triple[0].max(triple[1]).max(triple[2]);
        if m == f64::NEG_INFINITY || !m.is_finite() {
            return None;
        }
        for x in triple.iter_mut() {
            *x -= m;
        }
        Some(m)
    }
    #[inline(always)]
    fn to_prob(x: f64) -> f64 {
        x.exp()
    }
    #[inline(always)]
    fn to_log(x: f64) -> f64 {
        x
    }
    #[inline(always)]
    fn from_prob(p: f64) -> f64 {
        if p > 0.0 {
            p.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}
