//! Shared numerical kernels: compensated summation, log-domain reductions
//! and a pivoted tridiagonal solver.

/// Kahan compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Compensated sum of a slice.
pub fn kahan_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = KahanSum::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// log(e^a + e^b) without overflow.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// log Σ e^{x_i} with a running max and compensated accumulation.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let mut acc = KahanSum::new();
    for &x in xs {
        acc.add((x - m).exp());
    }
    m + acc.value().ln()
}

/// Complementary error function (rational approximation, absolute error
/// below 1.5e-7).
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    poly * (-x * x).exp()
}

/// Composite Simpson rule on [a, b] with n (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 0 { n } else { n + 1 };
    let h = (b - a) / n as f64;
    let mut acc = KahanSum::new();
    acc.add(f(a));
    acc.add(f(b));
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc.add(w * f(a + i as f64 * h));
    }
    acc.value() * h / 3.0
}

/// Solve a tridiagonal system with partial pivoting.
///
/// `sub[i]` couples row i+1 to i, `sup[i]` couples row i to i+1. The
/// right-hand side is consumed and the solution returned in its place.
/// Returns `None` when a pivot collapses to zero (singular matrix).
pub fn solve_tridiagonal(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    mut rhs: Vec<f64>,
) -> Option<Vec<f64>> {
    let n = diag.len();
    assert!(n >= 1 && sub.len() == n - 1 && sup.len() == n - 1 && rhs.len() == n);

    // Working bands: partial pivoting introduces a second super-diagonal.
    let mut d = diag.to_vec();
    let mut u1 = sup.to_vec();
    u1.push(0.0);
    let mut u2 = vec![0.0; n];
    let mut l = sub.to_vec();
    l.push(0.0);

    for i in 0..n - 1 {
        if l[i].abs() > d[i].abs() {
            // Swap row i and i+1.
            d.swap(i, i + 1);
            // After the swap the rows read:
            //   row i:   l[i]  d[i+1] u1[i+1]
            //   row i+1: d_old u1_old 0
            let (a0, a1, a2) = (l[i], d[i], u1[i + 1]);
            let (b0, b1) = (d[i + 1], u1[i]);
            d[i] = a0;
            u1[i] = a1;
            u2[i] = a2;
            // Eliminate with multiplier m = b0 / a0.
            if d[i] == 0.0 {
                return None;
            }
            let m = b0 / d[i];
            d[i + 1] = b1 - m * u1[i];
            u1[i + 1] = -m * u2[i];
            let r = rhs[i];
            rhs[i] = rhs[i + 1];
            rhs[i + 1] = r - m * rhs[i];
        } else {
            if d[i] == 0.0 {
                return None;
            }
            let m = l[i] / d[i];
            d[i + 1] -= m * u1[i];
            u1[i + 1] -= m * u2[i];
            rhs[i + 1] -= m * rhs[i];
        }
        u2[i + 1] = if i + 2 < n { u2[i + 1] } else { 0.0 };
    }
    if d[n - 1] == 0.0 {
        return None;
    }

    // Back substitution.
    rhs[n - 1] /= d[n - 1];
    if n >= 2 {
        rhs[n - 2] = (rhs[n - 2] - u1[n - 2] * rhs[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        rhs[i] = (rhs[i] - u1[i] * rhs[i + 1] - u2[i] * rhs[i + 2]) / d[i];
    }
    Some(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_exp_large_arguments() {
        let v = log_add_exp(1234.0, 1232.0);
        // 1234 + ln(1 + e^-2)
        assert!((v - (1234.0 + (1.0 + (-2.0f64).exp()).ln())).abs() < 1e-12);
        assert!((1234.0f64.exp() + 1232.0f64.exp()).is_infinite());
    }

    #[test]
    fn log_sum_exp_matches_direct() {
        let xs: [f64; 4] = [0.3, -1.2, 2.0, 0.0];
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - direct).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_empty_and_neg_inf() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn simpson_integrates_polynomial_exactly() {
        // Simpson is exact on cubics.
        let v = simpson(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 16);
        let exact = 4.0 - 4.0 + 2.0;
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn tridiagonal_solver_random_systems() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = rng.gen_range(1..12);
            let diag: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let sub: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sup: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // rhs = A x
            let mut rhs = vec![0.0; n];
            for i in 0..n {
                rhs[i] = diag[i] * x[i];
                if i > 0 {
                    rhs[i] += sub[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    rhs[i] += sup[i] * x[i + 1];
                }
            }
            if let Some(sol) = solve_tridiagonal(&sub, &diag, &sup, rhs) {
                for i in 0..n {
                    assert!(
                        (sol[i] - x[i]).abs() < 1e-8,
                        "n={n} i={i} got {} want {}",
                        sol[i],
                        x[i]
                    );
                }
            }
        }
    }
}
