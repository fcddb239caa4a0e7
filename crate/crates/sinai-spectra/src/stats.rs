//! Goodness-of-fit helpers: one- and two-sample Kolmogorov–Smirnov tests
//! and small summary-statistics utilities.

/// Statistic and asymptotic p-value of a KS test.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_sf(z: f64) -> f64 {
    if z <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * z * z).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test against a continuous CDF.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    // Stephens' finite-sample correction of the asymptotic distribution.
    let z = d * (n.sqrt() + 0.12 + 0.11 / n.sqrt());
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf(z),
    }
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|u, v| u.partial_cmp(v).unwrap());
    ys.sort_by(|u, v| u.partial_cmp(v).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let mut d = 0.0f64;
    let (mut i, mut j) = (0usize, 0usize);
    while i < n && j < m {
        let t = xs[i].min(ys[j]);
        while i < n && xs[i] <= t {
            i += 1;
        }
        while j < m && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n as f64 * m as f64) / (n as f64 + m as f64);
    let z = d * (n_eff.sqrt() + 0.12 + 0.11 / n_eff.sqrt());
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf(z),
    }
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    crate::numeric::kahan_sum(xs.iter().copied()) / xs.len() as f64
}

/// Standard error of the sample mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let var = crate::numeric::kahan_sum(xs.iter().map(|&x| (x - m) * (x - m)))
        / (xs.len().saturating_sub(1)) as f64;
    (var / xs.len() as f64).sqrt()
}

/// Standard error of a Bernoulli frequency estimate.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
