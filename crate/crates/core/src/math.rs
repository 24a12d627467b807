//! Small statistics helpers: the standard normal CDF and the one-sample
//! Kolmogorov–Smirnov test against it.

/// Φ(x) via the error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Asymptotic Kolmogorov survival function Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut total = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        total += if k % 2 == 1 { term } else { -term };
        if term < 1e-14 {
            break;
        }
    }
    (2.0 * total).clamp(0.0, 1.0)
}

/// One-sample KS statistic and asymptotic p-value of `sample` against the
/// standard normal distribution.
pub fn ks_test_standard_normal(sample: &[f64]) -> (f64, f64) {
    assert!(!sample.is_empty());
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = normal_cdf(x);
        let hi = (i as f64 + 1.0) / n - cdf;
        let lo = cdf - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    (d, kolmogorov_q(lambda))
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx).powi(2);
        vy += (y - my).powi(2);
    }
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normal_cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-12);
        assert!((normal_cdf(1.96) - 0.975).abs() < 1e-3);
        assert!((normal_cdf(-1.0) - 0.158655).abs() < 1e-5);
    }

    #[test]
    fn ks_accepts_normal_samples_and_rejects_shifted_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // Box-Muller standard normals.
        let normals: Vec<f64> = (0..2000)
            .map(|_| {
                let u1: f64 = rng.gen::<f64>().max(1e-12);
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let (_, p) = ks_test_standard_normal(&normals);
        assert!(p > 0.01, "p = {p}");
        let shifted: Vec<f64> = normals.iter().map(|x| x + 0.5).collect();
        let (_, p) = ks_test_standard_normal(&shifted);
        assert!(p < 1e-6);
    }
}
