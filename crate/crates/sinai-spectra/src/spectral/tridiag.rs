//! Sturm bisection eigensolver for symmetric tridiagonal matrices.
//!
//! Counting eigenvalues below a shift via the LDL^T pivot signs is exact,
//! so bisection produces reliably ordered eigenvalues even when the bottom
//! of the spectrum is exponentially small. Eigenvectors come from shifted
//! inverse iteration on the same matrix.

use crate::numeric::solve_tridiagonal;
use rand::Rng;

/// Symmetric tridiagonal matrix (diagonal + one off-diagonal band).
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert!(!diag.is_empty() && off.len() + 1 == diag.len());
        Self { diag, off }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Infinity norm, used to scale tolerances.
    pub fn norm(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let l = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
                let r = if i + 1 < n { self.off[i].abs() } else { 0.0 };
                self.diag[i].abs() + l + r
            })
            .fold(0.0, f64::max)
    }

    /// Number of eigenvalues strictly below `lambda` (negative LDL^T pivots).
    pub fn count_below(&self, lambda: f64) -> usize {
        let n = self.dim();
        let guard = 1e-300;
        let mut count = 0usize;
        let mut q = self.diag[0] - lambda;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..n {
            let q_safe = if q.abs() < guard {
                if q >= 0.0 {
                    guard
                } else {
                    -guard
                }
            } else {
                q
            };
            q = (self.diag[i] - lambda) - self.off[i - 1] * self.off[i - 1] / q_safe;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::MAX;
        let mut hi = f64::MIN;
        for i in 0..n {
            let l = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
            let r = if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - l - r);
            hi = hi.max(self.diag[i] + l + r);
        }
        let pad = 1e-12 * (1.0 + hi.abs().max(lo.abs()));
        (lo - pad, hi + pad)
    }

    /// Eigenvalue of index `k` (ascending, 0-based) by bisection, refined
    /// to high relative accuracy.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let (mut a, mut b) = self.gershgorin();
        for _ in 0..300 {
            let mid = 0.5 * (a + b);
            let width = b - a;
            if width <= 1e-15 * mid.abs().max(1e-300) || width <= f64::MIN_POSITIVE {
                break;
            }
            if self.count_below(mid) <= k {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    /// All eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.eigenvalue(k)).collect()
    }

    /// Eigenvalue closest to `lambda`.
    pub fn nearest_eigenvalue(&self, lambda: f64) -> f64 {
        let below = self.count_below(lambda);
        let mut best = f64::INFINITY;
        let mut arg = lambda;
        if below > 0 {
            let e = self.eigenvalue(below - 1);
            if (e - lambda).abs() < best {
                best = (e - lambda).abs();
                arg = e;
            }
        }
        if below < self.dim() {
            let e = self.eigenvalue(below);
            if (e - lambda).abs() < best {
                arg = e;
            }
        }
        arg
    }

    /// Apply the matrix to a vector.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for i in 0..n {
            out[i] = self.diag[i] * v[i];
            if i > 0 {
                out[i] += self.off[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                out[i] += self.off[i] * v[i + 1];
            }
        }
        out
    }

    /// Unit eigenvector for an eigenvalue estimate, by inverse iteration
    /// with one orthogonalization pass against `prior` vectors.
    pub fn eigenvector(&self, lambda: f64, prior: &[Vec<f64>]) -> Vec<f64> {
        let n = self.dim();
        if n == 1 {
            return vec![1.0];
        }
        let scale = self.norm();
        // Perturb the shift off the exact eigenvalue so the solve stays
        // finite; the tiny offset does not move the dominant direction.
        let shift = lambda + 1e-14 * scale.max(1e-300);
        let diag: Vec<f64> = self.diag.iter().map(|d| d - shift).collect();
        let mut rng = crate::rng::substream(0x5eed_e1e5, n as u64);
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        normalize(&mut v);
        let mut best = v.clone();
        let mut best_res = f64::INFINITY;
        for pass in 0..6 {
            match solve_tridiagonal(&self.off, &diag, &self.off, v.clone()) {
                Some(mut w) => {
                    if pass >= 1 {
                        for p in prior {
                            let dot: f64 = w.iter().zip(p).map(|(a, b)| a * b).sum();
                            for (wi, pi) in w.iter_mut().zip(p) {
                                *wi -= dot * pi;
                            }
                        }
                    }
                    if !normalize(&mut w) {
                        break;
                    }
                    v = w;
                }
                None => break,
            }
            let res = self.residual(lambda, &v);
            if res < best_res {
                best_res = res;
                best = v.clone();
            }
            if res <= 1e-13 * scale {
                break;
            }
        }
        best
    }

    /// || (T - lambda) v || for a unit vector v.
    pub fn residual(&self, lambda: f64, v: &[f64]) -> f64 {
        let av = self.apply(v);
        av.iter()
            .zip(v)
            .map(|(a, x)| {
                let r = a - lambda * x;
                r * r
            })
            .sum::<f64>()
            .sqrt()
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    true
}
