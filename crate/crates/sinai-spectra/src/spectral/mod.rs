//! Dirichlet generators of the chain, their exact spectra, and the
//! capacity-based predictions for the metastable bottom of the spectrum.
//!
//! The generator `I - P` restricted to a site set is similar to a symmetric
//! tridiagonal matrix; eigenvalues come from Sturm bisection and are then
//! polished with a Rayleigh quotient evaluated as a positive bond sum, which
//! keeps full relative accuracy even for exponentially small eigenvalues.

pub mod tridiag;

use crate::environment::{rescale, Environment, Window};
use crate::error::{Error, Result};
use crate::extrema::{good_path_certificate, GoodPathCertificate};
use crate::numeric::{log_add_exp, KahanSum};
use crate::potential_theory::{
    equilibrium_general, lambda_equilibrium, Chain, EquilibriumPotential,
};
use serde::Serialize;
use tridiag::SymTridiag;

/// Generator with Dirichlet (killing) conditions outside a site set.
#[derive(Debug, Clone)]
pub struct DirichletGenerator {
    sites: Vec<i64>,
    omega: Vec<f64>,
    log_mu: Vec<f64>,
    /// Index ranges of maximal runs of consecutive sites.
    blocks: Vec<(usize, usize)>,
}

/// Build the killed generator on `interval` minus `holes`.
pub fn build_generator(
    chain: &Chain,
    interval: Window,
    holes: &[i64],
) -> Result<DirichletGenerator> {
    if !chain.window().contains(interval.lo) || !chain.window().contains(interval.hi) {
        return Err(Error::WindowTooSmall(format!(
            "generator interval [{}, {}] exceeds the chain window",
            interval.lo, interval.hi
        )));
    }
    let sites: Vec<i64> = interval.iter().filter(|x| !holes.contains(x)).collect();
    if sites.is_empty() {
        return Err(Error::BadSiteSets("empty Dirichlet domain".into()));
    }
    let omega = sites.iter().map(|&x| chain.omega(x)).collect();
    let log_mu = sites.iter().map(|&x| chain.log_mu(x)).collect();
    let mut blocks = Vec::new();
    let mut start = 0usize;
    for i in 0..sites.len() {
        if i + 1 == sites.len() || sites[i + 1] != sites[i] + 1 {
            blocks.push((start, i + 1));
            start = i + 1;
        }
    }
    Ok(DirichletGenerator {
        sites,
        omega,
        log_mu,
        blocks,
    })
}

impl DirichletGenerator {
    pub fn dim(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[i64] {
        &self.sites
    }

    pub fn site_index(&self, site: i64) -> Option<usize> {
        self.sites.binary_search(&site).ok()
    }

    pub fn is_interval(&self) -> bool {
        self.blocks.len() == 1
    }

    pub fn mu(&self, i: usize) -> f64 {
        self.log_mu[i].exp()
    }

    pub fn log_mu(&self, i: usize) -> f64 {
        self.log_mu[i]
    }

    /// Apply the killed generator to a coefficient vector.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut v = f[i];
            if i > 0 && self.sites[i - 1] + 1 == self.sites[i] {
                v -= (1.0 - self.omega[i]) * f[i - 1];
            }
            if i + 1 < n && self.sites[i] + 1 == self.sites[i + 1] {
                v -= self.omega[i] * f[i + 1];
            }
            out[i] = v;
        }
        out
    }

    /// Quadratic form of the killed generator as a sum of positive bond
    /// terms (interior bonds plus the killing bonds at block edges).
    pub fn dirichlet_form(&self, f: &[f64]) -> f64 {
        let mut acc = KahanSum::new();
        for &(s, e) in &self.blocks {
            // Killing bond entering the block from the left: weight
            // mu(s)(1 - omega_s) by detailed balance.
            acc.add(self.mu(s) * (1.0 - self.omega[s]) * f[s] * f[s]);
            for i in s..e - 1 {
                let d = f[i + 1] - f[i];
                acc.add(self.mu(i) * self.omega[i] * d * d);
            }
            let last = e - 1;
            acc.add(self.mu(last) * self.omega[last] * f[last] * f[last]);
        }
        acc.value()
    }

    /// Squared norm in the reversible metric.
    pub fn norm_mu_sq(&self, f: &[f64]) -> f64 {
        let mut acc = KahanSum::new();
        for i in 0..self.dim() {
            acc.add(self.mu(i) * f[i] * f[i]);
        }
        acc.value()
    }

    /// Residual of an eigenpair in the reversible metric.
    pub fn residual(&self, lambda: f64, psi: &[f64]) -> f64 {
        let lp = self.apply(psi);
        let mut acc = KahanSum::new();
        for i in 0..self.dim() {
            let r = lp[i] - lambda * psi[i];
            acc.add(self.mu(i) * r * r);
        }
        acc.value().sqrt()
    }
}

/// Symmetrize the generator block by block.
///
/// Conjugating by the square root of the reversible weights turns each
/// block into a symmetric tridiagonal matrix with strictly negative
/// off-diagonal `-sqrt(omega_i (1 - omega_{i+1}))`.
pub fn symmetrize(gen: &DirichletGenerator) -> Vec<((usize, usize), SymTridiag)> {
    gen.sym_blocks()
}

impl DirichletGenerator {
    fn sym_blocks(&self) -> Vec<((usize, usize), SymTridiag)> {
        self.blocks
            .iter()
            .map(|&(s, e)| {
                let diag = vec![1.0; e - s];
                let off = (s..e - 1)
                    .map(|i| -(self.omega[i] * (1.0 - self.omega[i + 1])).sqrt())
                    .collect();
                ((s, e), SymTridiag::new(diag, off))
            })
            .collect()
    }
}

/// Full eigendecomposition, ascending, eigenvectors orthonormal in the
/// reversible metric.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

/// Eigenpair stream without storing the basis: eigenvalue, eigenvector at a
/// marked site, and its mass over two site sets.
#[derive(Debug, Clone)]
pub struct PropagatorCoefficients {
    pub eigenvalues: Vec<f64>,
    pub at_origin: Vec<f64>,
    pub mass_marked: Vec<f64>,
    pub mass_domain: Vec<f64>,
}

fn block_eigenpairs(
    gen: &DirichletGenerator,
    block: (usize, usize),
    h: &SymTridiag,
    mut consume: impl FnMut(f64, &[f64], f64),
) {
    let (s, e) = block;
    let m = e - s;
    let mut prior: Vec<Vec<f64>> = Vec::new();
    for k in 0..m {
        let lam_bis = h.eigenvalue(k);
        let phi = h.eigenvector(lam_bis, &prior);
        // Map back: psi(x) = phi(x) / sqrt(mu(x)); mu-orthonormal.
        let mut psi = vec![0.0; gen.dim()];
        for i in 0..m {
            psi[s + i] = phi[i] * (-0.5 * gen.log_mu(s + i)).exp();
        }
        // Rayleigh polish through the positive bond form: exact sign
        // structure makes this relatively accurate at any magnitude.
        let rq = gen.dirichlet_form(&psi) / gen.norm_mu_sq(&psi);
        let lambda = if (rq - lam_bis).abs() <= 1e-8 * h.norm().max(1.0) {
            rq
        } else {
            lam_bis
        };
        let res = gen.residual(lambda, &psi);
        consume(lambda, &psi, res);
        prior.push(phi);
    }
}

/// Compute every eigenpair of the killed generator.
pub fn full_spectrum(gen: &DirichletGenerator) -> Spectrum {
    let mut triples: Vec<(f64, Vec<f64>, f64)> = Vec::with_capacity(gen.dim());
    for (block, h) in gen.sym_blocks() {
        block_eigenpairs(gen, block, &h, |lam, psi, res| {
            triples.push((lam, psi.to_vec(), res));
        });
    }
    triples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut spectrum = Spectrum {
        eigenvalues: Vec::with_capacity(triples.len()),
        eigenvectors: Vec::with_capacity(triples.len()),
        residuals: Vec::with_capacity(triples.len()),
    };
    for (lam, psi, res) in triples {
        spectrum.eigenvalues.push(lam);
        spectrum.eigenvectors.push(psi);
        spectrum.residuals.push(res);
    }
    spectrum
}

/// Eigenpair functionals for propagator sums, O(dim) memory.
pub fn propagator_coefficients(
    gen: &DirichletGenerator,
    origin: i64,
    marked: &[i64],
) -> Result<PropagatorCoefficients> {
    let oi = gen
        .site_index(origin)
        .ok_or_else(|| Error::BadSiteSets(format!("origin {origin} not in domain")))?;
    let marked_idx: Vec<usize> = marked.iter().filter_map(|&x| gen.site_index(x)).collect();
    let mut out = PropagatorCoefficients {
        eigenvalues: Vec::with_capacity(gen.dim()),
        at_origin: Vec::with_capacity(gen.dim()),
        mass_marked: Vec::with_capacity(gen.dim()),
        mass_domain: Vec::with_capacity(gen.dim()),
    };
    for (block, h) in gen.sym_blocks() {
        block_eigenpairs(gen, block, &h, |lam, psi, _| {
            out.eigenvalues.push(lam);
            out.at_origin.push(psi[oi]);
            let mut m_marked = KahanSum::new();
            for &i in &marked_idx {
                m_marked.add(gen.mu(i) * psi[i]);
            }
            let mut m_dom = KahanSum::new();
            for i in 0..gen.dim() {
                m_dom.add(gen.mu(i) * psi[i]);
            }
            out.mass_marked.push(m_marked.value());
            out.mass_domain.push(m_dom.value());
        });
    }
    // Keep eigenvalues ascending across blocks for reproducible reports.
    let mut order: Vec<usize> = (0..out.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| out.eigenvalues[a].partial_cmp(&out.eigenvalues[b]).unwrap());
    let permute = |v: &Vec<f64>| order.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    Ok(PropagatorCoefficients {
        eigenvalues: permute(&out.eigenvalues),
        at_origin: permute(&out.at_origin),
        mass_marked: permute(&out.mass_marked),
        mass_domain: permute(&out.mass_domain),
    })
}

/// Number of eigenvalues strictly below `lambda`, with a flag raised when
/// `lambda` sits within counting tolerance of an eigenvalue.
pub fn count_below(gen: &DirichletGenerator, lambda: f64) -> (usize, bool) {
    let blocks = gen.sym_blocks();
    let count: usize = blocks.iter().map(|(_, h)| h.count_below(lambda)).sum();
    let tol = 1e-13 * lambda.abs().max(1.0);
    let lo: usize = blocks.iter().map(|(_, h)| h.count_below(lambda - tol)).sum();
    let hi: usize = blocks.iter().map(|(_, h)| h.count_below(lambda + tol)).sum();
    (count, lo != hi)
}

/// Smallest eigenpair; the eigenvector is normalized in the reversible
/// metric and oriented nonnegative.
pub fn principal_pair(gen: &DirichletGenerator) -> (f64, Vec<f64>) {
    let blocks = gen.sym_blocks();
    let (bi, lam) = blocks
        .iter()
        .enumerate()
        .map(|(i, (_, h))| (i, h.eigenvalue(0)))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .expect("nonempty domain");
    let (block, h) = &blocks[bi];
    let phi = h.eigenvector(lam, &[]);
    let mut psi = vec![0.0; gen.dim()];
    for i in 0..block.1 - block.0 {
        psi[block.0 + i] = phi[i] * (-0.5 * gen.log_mu(block.0 + i)).exp();
    }
    let rq = gen.dirichlet_form(&psi) / gen.norm_mu_sq(&psi);
    let lambda = if (rq - lam).abs() <= 1e-8 * h.norm().max(1.0) {
        rq
    } else {
        lam
    };
    let total: f64 = psi.iter().sum();
    if total < 0.0 {
        psi.iter_mut().for_each(|v| *v = -*v);
    }
    // Normalize in the reversible metric.
    let nrm = gen.norm_mu_sq(&psi).sqrt();
    psi.iter_mut().for_each(|v| *v /= nrm);
    (lambda, psi)
}

/// Explicit ellipticity-derived constants for the eigenvalue brackets.
///
/// `log_upper`: log of the constant in `lambda <= c e^{-depth}`;
/// `log_lower(len)`: log of the constant in `lambda >= c / len^3 e^{-depth}`.
#[derive(Debug, Clone, Copy)]
pub struct BracketConstants {
    pub c_kappa: f64,
    pub log_upper: f64,
    pub log_lower_prefactor: f64,
}

impl BracketConstants {
    pub fn for_kappa(kappa: f64) -> Self {
        let c_kappa = ((1.0 - kappa) / kappa).ln();
        // Upper: indicator test function over the trap loses at most one
        // lattice step of potential on each side.
        let log_upper = (1.0 + c_kappa.exp()).ln();
        // Lower: the exit-time route pays the ellipticity constant and a
        // cubic factor in the domain length.
        let log_lower_prefactor = kappa.ln() - c_kappa;
        Self {
            c_kappa,
            log_upper,
            log_lower_prefactor,
        }
    }

    pub fn log_lower(&self, domain_len: f64) -> f64 {
        self.log_lower_prefactor - 3.0 * domain_len.ln()
    }

    /// Log of the splitting constant in
    /// `lambda_k <= C len^3 e^{-delta sqrt(N)} lambda_{k+1}`.
    pub fn log_splitting(&self, domain_len: f64) -> f64 {
        self.log_upper - self.log_lower(domain_len)
    }
}

/// Exact versus capacity-predicted description of the metastable spectrum.
#[derive(Debug, Clone, Serialize)]
pub struct MetastabilityReport {
    #[serde(rename = "N")]
    pub n: i64,
    pub h: f64,
    pub delta: f64,
    pub q: usize,
    pub lambda_exact: Vec<f64>,
    pub lambda_pred: Vec<f64>,
    pub rel_err: Vec<f64>,
    pub vec_dist: Vec<f64>,
    pub lambda_star: f64,
    pub brackets_ok: bool,
    pub splitting_ok: bool,
    pub residuals: Vec<f64>,
    /// Marked false when the predicted bottom eigenvalue sits below the
    /// double-precision solver floor.
    pub resolvable: bool,
    #[serde(skip_serializing)]
    pub certificate: GoodPathCertificate,
    #[serde(skip_serializing)]
    pub labeled_sites: Vec<i64>,
    #[serde(skip_serializing)]
    pub count_below_star: usize,
    #[serde(skip_serializing)]
    pub lambda_bar: Vec<f64>,
}

/// Solver floor below which predicted eigenvalues are reported, not asserted.
pub const SOLVER_FLOOR: f64 = 1e-12;

struct MetastableFrame {
    boundary: (i64, i64),
    labeled_sites: Vec<i64>,
    certificate: GoodPathCertificate,
}

fn metastable_frame(chain: &Chain, n: i64, h: f64, delta: f64) -> Result<MetastableFrame> {
    let rescaled = rescale(chain.potential(), n)?;
    let path = rescaled.path_on(-1.0, 1.0)?;
    let certificate = good_path_certificate(&path, h, delta)?;
    if !certificate.verdict.is_accepted() {
        return Err(Error::CertificateRejected(format!("{:?}", certificate.verdict)));
    }
    let labeled_sites = certificate
        .labeling
        .iter()
        .map(|&t| rescaled.site_of(t))
        .collect();
    Ok(MetastableFrame {
        boundary: (-n, n),
        labeled_sites,
        certificate,
    })
}

impl MetastableFrame {
    /// Dirichlet anchors after labeling the first `k` minima, the boundary
    /// included; `skip` removes one site from the list.
    fn anchors(&self, k: usize, skip: Option<i64>) -> Vec<i64> {
        let mut v: Vec<i64> = self.labeled_sites[..k]
            .iter()
            .copied()
            .filter(|&s| Some(s) != skip)
            .collect();
        v.push(self.boundary.0);
        v.push(self.boundary.1);
        v.sort_unstable();
        v
    }
}

/// Log capacity between a site and its nearest anchors on both sides.
fn log_capacity_to_anchors(chain: &Chain, x: i64, anchors: &[i64]) -> f64 {
    let left = anchors.iter().filter(|&&s| s < x).max().copied();
    let right = anchors.iter().filter(|&&s| s > x).min().copied();
    match (left, right) {
        (Some(l), Some(r)) => log_add_exp(-chain.log_exp_sum(l, x), -chain.log_exp_sum(x, r)),
        _ => unreachable!("boundary anchors straddle every interior site"),
    }
}

/// Build the full metastability report for one environment at scale `n`.
pub fn metastability_report(
    env: &Environment,
    n: i64,
    h: f64,
    delta: f64,
) -> Result<MetastabilityReport> {
    let chain = Chain::from_environment(env)?;
    let frame = metastable_frame(&chain, n, h, delta)?;
    let q = frame.labeled_sites.len();
    let interval = Window::new(-n + 1, n - 1)?;

    let gen0 = build_generator(&chain, interval, &[])?;
    let spectrum = full_spectrum(&gen0);
    let lambda_exact: Vec<f64> = spectrum.eigenvalues[..q].to_vec();
    let residuals: Vec<f64> = spectrum.residuals[..q].to_vec();

    // Threshold: principal eigenvalue with every labeled minimum killed.
    let gen_star = build_generator(&chain, interval, &frame.labeled_sites)?;
    let (lambda_star, _) = principal_pair(&gen_star);
    let (count_below_star, _) = count_below(&gen0, lambda_star);

    // Capacity predictions and eigenvector overlaps.
    let sqrt_n = (n as f64).sqrt();
    let mut lambda_pred = Vec::with_capacity(q);
    let mut rel_err = Vec::with_capacity(q);
    let mut vec_dist = Vec::with_capacity(q);
    for k in 0..q {
        let x = frame.labeled_sites[k];
        let anchors = frame.anchors(k, None);
        let h_k = equilibrium_general(&chain, &[x], &anchors)?;
        let log_cap = log_capacity_to_anchors(&chain, x, &anchors);
        let log_norm_sq = h_k.log_norm_sq(&chain);
        let pred = (log_cap - log_norm_sq).exp();
        lambda_pred.push(pred);
        rel_err.push((lambda_exact[k] / pred - 1.0).abs());

        let psi = &spectrum.eigenvectors[k];
        let half_log_norm = 0.5 * log_norm_sq;
        let mut overlap = KahanSum::new();
        for (i, &site) in gen0.sites().iter().enumerate() {
            let hn = (h_k.log_value(site) - half_log_norm).exp();
            overlap.add(gen0.mu(i) * psi[i] * hn);
        }
        let sign = if overlap.value() < 0.0 { -1.0 } else { 1.0 };
        let mut dist_sq = KahanSum::new();
        for (i, &site) in gen0.sites().iter().enumerate() {
            let hn = (h_k.log_value(site) - half_log_norm).exp();
            let d = sign * psi[i] - hn;
            dist_sq.add(gen0.mu(i) * d * d);
        }
        vec_dist.push(dist_sq.value().max(0.0).sqrt());
    }

    // Bracket and splitting booleans with the derived constants.
    let consts = BracketConstants::for_kappa(env.kappa());
    let len = (2 * n) as f64;
    let log_lower = consts.log_lower(len);
    let mut brackets_ok = true;
    let mut lambda_bar = Vec::with_capacity(q);
    for k in 0..q {
        let gen_k = build_generator(&chain, interval, &frame.labeled_sites[..k])?;
        let (bar, _) = principal_pair(&gen_k);
        lambda_bar.push(bar);
        let depth = sqrt_n * frame.certificate.depths[k];
        for lam in [bar, lambda_exact[k]] {
            let log_lam = lam.ln();
            if log_lam > consts.log_upper - depth + 1e-9
                || log_lam < log_lower - depth - 1e-9
            {
                brackets_ok = false;
            }
        }
    }
    let mut splitting_ok = true;
    let log_split = consts.log_splitting(len) - delta * sqrt_n;
    for k in 0..q.saturating_sub(1) {
        if lambda_exact[k].ln() > log_split + lambda_exact[k + 1].ln() + 1e-9 {
            splitting_ok = false;
        }
    }

    let resolvable = lambda_pred.iter().all(|&p| p >= SOLVER_FLOOR);
    Ok(MetastabilityReport {
        n,
        h,
        delta,
        q,
        lambda_exact,
        lambda_pred,
        rel_err,
        vec_dist,
        lambda_star,
        brackets_ok,
        splitting_ok,
        residuals,
        resolvable,
        certificate: frame.certificate,
        labeled_sites: frame.labeled_sites,
        count_below_star,
        lambda_bar,
    })
}

/// The k x k interaction matrix of the first `k` labeled minima at shift
/// `lambda`, split into its capacity, overlap and shift-correction parts.
#[derive(Debug, Clone)]
pub struct CapacityMatrix {
    pub k: usize,
    pub lambda: f64,
    /// Minima in labeling order.
    pub sites: Vec<i64>,
    pub e_hat: Vec<f64>,
    pub k_matrix: Vec<f64>,
    pub a_matrix: Vec<f64>,
    pub b_matrix: Vec<f64>,
    /// True when the capacity part is exactly tridiagonal in site order.
    pub tridiagonal_ok: bool,
    /// True when every shift-correction entry obeys the resolvent bound
    /// |B_ij| <= |lambda| / dist(lambda, spectrum of the killed operator).
    pub b_bound_ok: bool,
}

struct CapacityParts {
    sites: Vec<i64>,
    log_norms: Vec<f64>,
    h_plain: Vec<EquilibriumPotential>,
    k_matrix: Vec<f64>,
    a_matrix: Vec<f64>,
}

fn capacity_parts(chain: &Chain, frame: &MetastableFrame, k: usize) -> Result<CapacityParts> {
    let sites = frame.labeled_sites[..k].to_vec();
    let mut h_plain = Vec::with_capacity(k);
    let mut log_norms = Vec::with_capacity(k);
    for &x in &sites {
        let anchors = frame.anchors(k, Some(x));
        let hx = equilibrium_general(chain, &[x], &anchors)?;
        log_norms.push(0.5 * hx.log_norm_sq(chain));
        h_plain.push(hx);
    }
    // Site order for tridiagonality.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&i| sites[i]);
    let rank_of = |i: usize| order.iter().position(|&j| j == i).unwrap();

    let w = chain.window();
    let mut k_matrix = vec![0.0; k * k];
    let mut a_matrix = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            if rank_of(i).abs_diff(rank_of(j)) > 1 {
                continue; // disjoint supports: exactly zero
            }
            let mut bond = KahanSum::new();
            let mut mass = KahanSum::new();
            for x in w.lo..=w.hi {
                let fi = h_plain[i].value(x);
                let fj = h_plain[j].value(x);
                if x < w.hi {
                    let di = h_plain[i].value(x + 1) - fi;
                    let dj = h_plain[j].value(x + 1) - fj;
                    if di != 0.0 && dj != 0.0 {
                        bond.add(chain.mu(x) * chain.omega(x) * di * dj);
                    }
                }
                if fi != 0.0 && fj != 0.0 {
                    mass.add(chain.mu(x) * fi * fj);
                }
            }
            let scale = (-(log_norms[i] + log_norms[j])).exp();
            k_matrix[i * k + j] = bond.value() * scale;
            if i != j {
                a_matrix[i * k + j] = mass.value() * scale;
            }
        }
    }
    Ok(CapacityParts {
        sites,
        log_norms,
        h_plain,
        k_matrix,
        a_matrix,
    })
}

fn assemble_e_hat(
    chain: &Chain,
    frame: &MetastableFrame,
    parts: &CapacityParts,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = parts.sites.len();
    let mut b_matrix = vec![0.0; k * k];
    for j in 0..k {
        let x = parts.sites[j];
        let anchors = frame.anchors(k, Some(x));
        let h_lam = lambda_equilibrium(chain, &[x], &anchors, lambda)?;
        for i in 0..k {
            let mut mass = KahanSum::new();
            for s in chain.window().iter() {
                let fi = parts.h_plain[i].value(s);
                if fi == 0.0 {
                    continue;
                }
                let delta_h = h_lam.value(s) - parts.h_plain[j].value(s);
                mass.add(chain.mu(s) * fi * delta_h);
            }
            b_matrix[i * k + j] =
                mass.value() * (-(parts.log_norms[i] + parts.log_norms[j])).exp();
        }
    }
    let mut e_hat = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let idx = i * k + j;
            e_hat[idx] = parts.k_matrix[idx]
                - lambda * ((i == j) as u8 as f64)
                - lambda * parts.a_matrix[idx]
                - lambda * b_matrix[idx];
        }
    }
    Ok((e_hat, b_matrix))
}

/// Assemble the interaction matrix of the first `k` minima at shift `lambda`.
pub fn capacity_matrix(
    env: &Environment,
    n: i64,
    h: f64,
    delta: f64,
    k: usize,
    lambda: f64,
) -> Result<CapacityMatrix> {
    let chain = Chain::from_environment(env)?;
    let frame = metastable_frame(&chain, n, h, delta)?;
    if k == 0 || k > frame.labeled_sites.len() {
        return Err(Error::InvalidArgument(format!(
            "k must be in 1..={}, got {k}",
            frame.labeled_sites.len()
        )));
    }
    let parts = capacity_parts(&chain, &frame, k)?;
    let (e_hat, b_matrix) = assemble_e_hat(&chain, &frame, &parts, lambda)?;

    // Resolvent bound on the shift correction.
    let interval = Window::new(-n + 1, n - 1)?;
    let gen_k = build_generator(&chain, interval, &frame.labeled_sites[..k])?;
    let (bar_k, _) = principal_pair(&gen_k);
    let dist = (bar_k - lambda).abs();
    let bound = lambda.abs() / dist.max(1e-300);
    let b_bound_ok = b_matrix.iter().all(|&b| b.abs() <= bound * (1.0 + 1e-9) + 1e-15);

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&i| parts.sites[i]);
    let mut tridiagonal_ok = true;
    for (ri, &i) in order.iter().enumerate() {
        for (rj, &j) in order.iter().enumerate() {
            if ri.abs_diff(rj) > 1 && parts.k_matrix[i * k + j] != 0.0 {
                tridiagonal_ok = false;
            }
        }
    }
    Ok(CapacityMatrix {
        k,
        lambda,
        sites: parts.sites.clone(),
        e_hat,
        k_matrix: parts.k_matrix,
        a_matrix: parts.a_matrix,
        b_matrix,
        tridiagonal_ok,
        b_bound_ok,
    })
}

fn det_dense(m: &[f64], k: usize) -> f64 {
    let mut a = m.to_vec();
    let mut det = 1.0;
    for col in 0..k {
        let mut piv = col;
        for r in col + 1..k {
            if a[r * k + col].abs() > a[piv * k + col].abs() {
                piv = r;
            }
        }
        if a[piv * k + col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            for c in 0..k {
                a.swap(col * k + c, piv * k + c);
            }
            det = -det;
        }
        det *= a[col * k + col];
        for r in col + 1..k {
            let f = a[r * k + col] / a[col * k + col];
            for c in col..k {
                a[r * k + c] -= f * a[col * k + c];
            }
        }
    }
    det
}

/// Locate the roots of the interaction-matrix determinant below the
/// principal eigenvalue of the k-fold killed operator.
///
/// The determinant is scanned on a logarithmic grid and each sign change is
/// bisected; the roots are the bottom eigenvalues of the full generator.
pub fn determinant_root_locate(
    env: &Environment,
    n: i64,
    h: f64,
    delta: f64,
    k: usize,
) -> Result<Vec<f64>> {
    let chain = Chain::from_environment(env)?;
    let frame = metastable_frame(&chain, n, h, delta)?;
    if k == 0 || k > frame.labeled_sites.len() {
        return Err(Error::InvalidArgument(format!(
            "k must be in 1..={}, got {k}",
            frame.labeled_sites.len()
        )));
    }
    let parts = capacity_parts(&chain, &frame, k)?;
    let interval = Window::new(-n + 1, n - 1)?;
    let gen_k = build_generator(&chain, interval, &frame.labeled_sites[..k])?;
    let (bar_k, _) = principal_pair(&gen_k);

    let det_at = |lambda: f64| -> Result<f64> {
        let (e_hat, _) = assemble_e_hat(&chain, &frame, &parts, lambda)?;
        Ok(det_dense(&e_hat, k))
    };

    let mut roots = Vec::new();
    for refine in 0..2 {
        roots.clear();
        let points = 240 * (refine + 1) * k;
        let lo = (1e-16f64).ln();
        let hi = (bar_k * (1.0 - 1e-9)).ln();
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..=points {
            let lam = (lo + (hi - lo) * i as f64 / points as f64).exp();
            let d = det_at(lam)?;
            if let Some((plam, pd)) = prev {
                if pd.signum() != d.signum() && pd != 0.0 {
                    // Bisect in log scale.
                    let (mut a, mut b) = (plam, lam);
                    let mut fa = pd;
                    for _ in 0..120 {
                        let mid = (0.5 * (a.ln() + b.ln())).exp();
                        let mid = if mid.is_finite() && mid > a && mid < b {
                            mid
                        } else {
                            0.5 * (a + b)
                        };
                        let fm = det_at(mid)?;
                        if fm == 0.0 {
                            a = mid;
                            b = mid;
                            break;
                        }
                        if fa.signum() == fm.signum() {
                            a = mid;
                            fa = fm;
                        } else {
                            b = mid;
                        }
                        if (b - a) <= 1e-12 * b {
                            break;
                        }
                    }
                    roots.push(0.5 * (a + b));
                }
            }
            prev = Some((lam, d));
        }
        if roots.len() >= k {
            break;
        }
    }
    Ok(roots)
}

/// Structural verdicts for one computed spectrum.
#[derive(Debug, Clone, Serialize)]
pub struct StructuralReport {
    pub sign_counts_ok: bool,
    pub parity_ok: Option<bool>,
    pub simple_ok: bool,
    pub notes: Vec<String>,
}

/// Sign changes of the linear interpolant of a vector.
pub fn sign_changes(v: &[f64]) -> usize {
    let mut count = 0;
    let mut last = 0.0f64;
    for &x in v {
        if x == 0.0 {
            continue;
        }
        if last != 0.0 && x.signum() != last.signum() {
            count += 1;
        }
        last = x;
    }
    count
}

/// Oscillation, parity and simplicity checks on an interval spectrum.
pub fn structural_checks(spectrum: &Spectrum, gen: &DirichletGenerator) -> StructuralReport {
    let mut notes = Vec::new();
    let m = spectrum.eigenvalues.len();
    let mut simple_ok = true;
    for w in spectrum.eigenvalues.windows(2) {
        if w[1] <= w[0] {
            simple_ok = false;
        }
    }
    if !gen.is_interval() {
        notes.push("domain has holes: oscillation and parity checks skipped".into());
        return StructuralReport {
            sign_counts_ok: true,
            parity_ok: None,
            simple_ok,
            notes,
        };
    }
    let mut sign_counts_ok = true;
    for (j, v) in spectrum.eigenvectors.iter().enumerate() {
        if sign_changes(v) != j {
            sign_counts_ok = false;
            notes.push(format!(
                "eigenvector {} has {} sign changes, expected {}",
                j + 1,
                sign_changes(v),
                j
            ));
        }
    }
    // Spectrum of the jump matrix is antisymmetric: eigenvalues of the
    // generator pair up to sum 2, with parity-flipped eigenvectors.
    let mut parity_ok = true;
    for i in 0..m {
        let j = m - 1 - i;
        if (spectrum.eigenvalues[i] + spectrum.eigenvalues[j] - 2.0).abs() > 1e-10 {
            parity_ok = false;
        }
    }
    if parity_ok {
        for i in 0..m {
            let j = m - 1 - i;
            let vi = &spectrum.eigenvectors[i];
            let vj = &spectrum.eigenvectors[j];
            let mut overlap = KahanSum::new();
            for (idx, &site) in gen.sites().iter().enumerate() {
                let flip = if site.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                overlap.add(gen.mu(idx) * flip * vi[idx] * vj[idx]);
            }
            if (overlap.value().abs() - 1.0).abs() > 1e-8 {
                parity_ok = false;
                notes.push(format!("parity pairing failed for index {}", i + 1));
                break;
            }
        }
    }
    StructuralReport {
        sign_counts_ok,
        parity_ok: Some(parity_ok),
        simple_ok,
        notes,
    }
}

/// Principal eigenvalues decrease strictly under domain growth.
pub fn principal_monotone_under_nesting(
    chain: &Chain,
    inner: Window,
    inner_holes: &[i64],
    outer: Window,
    outer_holes: &[i64],
) -> Result<bool> {
    let gi = build_generator(chain, inner, inner_holes)?;
    let go = build_generator(chain, outer, outer_holes)?;
    let (li, _) = principal_pair(&gi);
    let (lo, _) = principal_pair(&go);
    Ok(lo < li)
}

/// At most `k` eigenvalues of the interval operator sit below the principal
/// eigenvalue of the k-fold punctured operator.
pub fn interlacing_ceiling_ok(chain: &Chain, interval: Window, holes: &[i64]) -> Result<bool> {
    let gen = build_generator(chain, interval, &[])?;
    let punched = build_generator(chain, interval, holes)?;
    let (gamma, _) = principal_pair(&punched);
    let count: usize = gen
        .sym_blocks()
        .iter()
        .map(|(_, h_blk)| h_blk.count_below(gamma * (1.0 + 1e-14)))
        .sum();
    Ok(count <= holes.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_environment, DisorderLaw};
    use crate::potential_theory::hitting_moments;
    use std::f64::consts::PI;

    fn flat_chain(lo: i64, hi: i64) -> Chain {
        let w = Window::new(lo, hi).unwrap();
        let env = Environment::new(w, vec![0.5; w.len()], 0.4, 0).unwrap();
        Chain::from_environment(&env).unwrap()
    }

    fn random_chain(kappa: f64, lo: i64, hi: i64, seed: u64) -> Chain {
        let law = DisorderLaw::symmetric_uniform(kappa).unwrap();
        let env = sample_environment(&law, Window::new(lo, hi).unwrap(), seed).unwrap();
        Chain::from_environment(&env).unwrap()
    }

    #[test]
    fn fair_generator_is_symmetric_tridiagonal() {
        let chain = flat_chain(0, 4);
        let gen = build_generator(&chain, Window::new(1, 3).unwrap(), &[]).unwrap();
        let f = vec![1.0, 0.0, 0.0];
        let lf = gen.apply(&f);
        assert_eq!(lf, vec![1.0, -0.5, 0.0]);
        let blocks = symmetrize(&gen);
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].1.diag, vec![1.0; 3]);
        assert!(blocks[0].1.off.iter().all(|&o| (o + 0.5).abs() < 1e-15));
    }

    #[test]
    fn hole_splits_into_independent_blocks() {
        let chain = random_chain(0.3, -6, 6, 1);
        let gen = build_generator(&chain, Window::new(-4, 4).unwrap(), &[0]).unwrap();
        assert_eq!(gen.sym_blocks().len(), 2);
        // No coupling across the hole.
        let mut f = vec![0.0; gen.dim()];
        let idx = gen.site_index(-1).unwrap();
        f[idx] = 1.0;
        let lf = gen.apply(&f);
        let right = gen.site_index(1).unwrap();
        assert_eq!(lf[right], 0.0);
    }

    #[test]
    fn generator_is_self_adjoint_in_mu() {
        let chain = random_chain(0.25, -10, 10, 7);
        let gen = build_generator(&chain, Window::new(-8, 8).unwrap(), &[-2]).unwrap();
        use rand::Rng;
        let mut rng = crate::rng::master(3);
        for _ in 0..20 {
            let f: Vec<f64> = (0..gen.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g: Vec<f64> = (0..gen.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lf = gen.apply(&f);
            let lg = gen.apply(&g);
            let a: f64 = (0..gen.dim()).map(|i| gen.mu(i) * g[i] * lf[i]).sum();
            let b: f64 = (0..gen.dim()).map(|i| gen.mu(i) * f[i] * lg[i]).sum();
            assert!((a - b).abs() < 1e-14 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn flat_spectrum_matches_discrete_laplacian() {
        let chain = flat_chain(-2, 6);
        let gen = build_generator(&chain, Window::new(1, 3).unwrap(), &[]).unwrap();
        let spec = full_spectrum(&gen);
        let expect = [
            1.0 - (PI / 4.0).cos(),
            1.0,
            1.0 + (PI / 4.0).cos(),
        ];
        for (a, b) in spec.eigenvalues.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        // Single-site domain has the single eigenvalue 1.
        let g1 = build_generator(&chain, Window::new(2, 2).unwrap(), &[]).unwrap();
        assert_eq!(full_spectrum(&g1).eigenvalues, vec![1.0]);
    }

    #[test]
    fn spectrum_matches_dense_oracle() {
        use nalgebra::DMatrix;
        let chain = random_chain(0.2, -12, 12, 5);
        let gen = build_generator(&chain, Window::new(-10, 10).unwrap(), &[]).unwrap();
        let spec = full_spectrum(&gen);
        // Dense symmetric eigen of the conjugated matrix.
        let m = gen.dim();
        let blocks = gen.sym_blocks();
        let h = &blocks[0].1;
        let mut dense = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            dense[(i, i)] = h.diag[i];
            if i + 1 < m {
                dense[(i, i + 1)] = h.off[i];
                dense[(i + 1, i)] = h.off[i];
            }
        }
        let mut oracle: Vec<f64> = dense.symmetric_eigenvalues().iter().cloned().collect();
        oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in spec.eigenvalues.iter().zip(oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        // Residuals in the reversible metric.
        for (lam, psi) in spec.eigenvalues.iter().zip(&spec.eigenvectors) {
            assert!(gen.residual(*lam, psi) < 1e-10 * 2.0);
        }
        // Rayleigh quotients reproduce the eigenvalues to high relative
        // accuracy.
        for (lam, psi) in spec.eigenvalues.iter().zip(&spec.eigenvectors) {
            let rq = gen.dirichlet_form(psi) / gen.norm_mu_sq(psi);
            assert!((rq / lam - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn count_below_flat_examples() {
        let chain = flat_chain(-2, 6);
        let gen = build_generator(&chain, Window::new(1, 3).unwrap(), &[]).unwrap();
        let (c, flag) = count_below(&gen, 1.0);
        assert_eq!(c, 1);
        assert!(flag, "1.0 is an eigenvalue and must raise the boundary flag");
        assert_eq!(count_below(&gen, -0.5).0, 0);
        assert_eq!(count_below(&gen, 3.0).0, 3);
    }

    #[test]
    fn principal_pair_flat_closed_form() {
        let chain = flat_chain(-2, 6);
        let gen = build_generator(&chain, Window::new(1, 3).unwrap(), &[]).unwrap();
        let (lam, psi) = principal_pair(&gen);
        assert!((lam - (1.0 - (PI / 4.0).cos())).abs() < 1e-12);
        // Eigenvector proportional to sin(j pi / 4), all positive.
        assert!(psi.iter().all(|&v| v > 0.0));
        let ratio = psi[1] / psi[0];
        assert!((ratio - (2.0 * PI / 4.0).sin() / (PI / 4.0).sin()).abs() < 1e-10);
    }

    #[test]
    fn rayleigh_variational_characterization() {
        let chain = random_chain(0.3, -9, 9, 11);
        let gen = build_generator(&chain, Window::new(-7, 7).unwrap(), &[]).unwrap();
        let (lam, _) = principal_pair(&gen);
        use rand::Rng;
        let mut rng = crate::rng::master(5);
        for _ in 0..100 {
            let f: Vec<f64> = (0..gen.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let rq = gen.dirichlet_form(&f) / gen.norm_mu_sq(&f);
            assert!(rq >= lam - 1e-12);
        }
    }

    #[test]
    fn donsker_varadhan_lower_bound() {
        let chain = random_chain(0.25, -15, 15, 13);
        let gen = build_generator(&chain, Window::new(-11, 11).unwrap(), &[]).unwrap();
        let (lam, _) = principal_pair(&gen);
        let mut worst = 0.0f64;
        for x in -11..=11 {
            worst = worst.max(hitting_moments(&chain, x, -12, 12).unwrap().mean_exit);
        }
        assert!(lam >= 1.0 / worst - 1e-12);
    }

    #[test]
    fn principal_vector_is_shifted_equilibrium_potential() {
        // The principal eigenvector of the once-killed operator matches the
        // shifted hitting probability of the deepest minimum.
        let chain = random_chain(0.25, -40, 40, 17);
        let gen = build_generator(&chain, Window::new(-39, 39).unwrap(), &[]).unwrap();
        let (lam, psi) = principal_pair(&gen);
        // Deepest minimum = site of the largest principal-vector weight.
        let x_star = {
            let mut best = (0usize, f64::NEG_INFINITY);
            for i in 0..gen.dim() {
                let w = gen.mu(i) * psi[i] * psi[i];
                if w > best.1 {
                    best = (i, w);
                }
            }
            gen.sites()[best.0]
        };
        let h = lambda_equilibrium(&chain, &[x_star], &[-40, 40], lam).unwrap();
        let mut norm = KahanSum::new();
        for (i, &s) in gen.sites().iter().enumerate() {
            norm.add(gen.mu(i) * h.value(s) * h.value(s));
        }
        let nrm = norm.value().sqrt();
        let mut dist = KahanSum::new();
        for (i, &s) in gen.sites().iter().enumerate() {
            let d = psi[i] - h.value(s) / nrm;
            dist.add(gen.mu(i) * d * d);
        }
        assert!(dist.value().sqrt() < 1e-8, "distance {}", dist.value().sqrt());
    }

    #[test]
    fn structural_checks_flat_interval() {
        let chain = flat_chain(-2, 6);
        let gen = build_generator(&chain, Window::new(1, 3).unwrap(), &[]).unwrap();
        let spec = full_spectrum(&gen);
        // Second eigenvector is (1, 0, -1)-shaped: one sign change.
        assert_eq!(sign_changes(&spec.eigenvectors[1]), 1);
        let report = structural_checks(&spec, &gen);
        assert!(report.sign_counts_ok);
        assert_eq!(report.parity_ok, Some(true));
        assert!(report.simple_ok);
    }

    #[test]
    fn structural_checks_random_interval_and_punched() {
        let chain = random_chain(0.3, -14, 14, 23);
        let gen = build_generator(&chain, Window::new(-11, 11).unwrap(), &[]).unwrap();
        let spec = full_spectrum(&gen);
        let report = structural_checks(&spec, &gen);
        assert!(report.sign_counts_ok, "{:?}", report.notes);
        assert_eq!(report.parity_ok, Some(true));
        // Punched domain: skip with notice.
        let punched = build_generator(&chain, Window::new(-11, 11).unwrap(), &[3]).unwrap();
        let spec2 = full_spectrum(&punched);
        let report2 = structural_checks(&spec2, &punched);
        assert!(report2.parity_ok.is_none());
        // Interlacing ceiling and nesting monotonicity.
        assert!(interlacing_ceiling_ok(&chain, Window::new(-11, 11).unwrap(), &[3]).unwrap());
        assert!(principal_monotone_under_nesting(
            &chain,
            Window::new(-6, 6).unwrap(),
            &[],
            Window::new(-11, 11).unwrap(),
            &[],
        )
        .unwrap());
    }

    #[test]
    fn metastability_report_on_embedded_double_well() {
        // Two-well shape at amplitude 0.3: q = 2, counting exact, capacity
        // formula within 5%, eigenvectors close to hitting probabilities.
        let n = 100i64;
        let env = crate::spectral::tests_support::zigzag_env(n, 0.3);
        let report = metastability_report(&env, n, 0.3, 0.29).unwrap();
        assert_eq!(report.q, 2);
        assert_eq!(report.count_below_star, 2);
        assert!(report.resolvable);
        for k in 0..2 {
            assert!(report.rel_err[k] <= 0.05, "rel_err {:?}", report.rel_err);
            assert!(report.vec_dist[k] <= 0.05, "vec_dist {:?}", report.vec_dist);
        }
        assert!(report.brackets_ok);
        assert!(report.splitting_ok);
        // The two metastable eigenvalues sit far below the third.
        let chain = Chain::from_environment(&env).unwrap();
        let gen = build_generator(&chain, Window::new(-n + 1, n - 1).unwrap(), &[]).unwrap();
        let spec = full_spectrum(&gen);
        assert!(spec.eigenvalues[1] < 1e-2 * spec.eigenvalues[2]);
    }

    #[test]
    fn capacity_matrix_structure_and_scalar_root() {
        let n = 100i64;
        let env = crate::spectral::tests_support::zigzag_env(n, 0.3);
        let report = metastability_report(&env, n, 0.3, 0.29).unwrap();
        let lam = report.lambda_exact[0] * 0.5;
        let cm = capacity_matrix(&env, n, 0.3, 0.29, 2, lam).unwrap();
        assert!(cm.tridiagonal_ok);
        assert!(cm.b_bound_ok);
        // Diagonal of the capacity part matches cap / norm^2 for k = q.
        let chain = Chain::from_environment(&env).unwrap();
        let frame = super::metastable_frame(&chain, n, 0.3, 0.29).unwrap();
        for (i, &x) in frame.labeled_sites.iter().enumerate() {
            let anchors = frame.anchors(2, Some(x));
            let hx = equilibrium_general(&chain, &[x], &anchors).unwrap();
            let log_cap = super::log_capacity_to_anchors(&chain, x, &anchors);
            let expect = (log_cap - hx.log_norm_sq(&chain)).exp();
            let got = cm.k_matrix[i * 2 + i];
            assert!(
                (got / expect - 1.0).abs() < 1e-9,
                "diagonal {i}: {got} vs {expect}"
            );
        }
        // Scalar secular equation at k = 1 recovers the bottom eigenvalue.
        let roots = determinant_root_locate(&env, n, 0.3, 0.29, 1).unwrap();
        assert_eq!(roots.len(), 1);
        assert!(
            (roots[0] / report.lambda_exact[0] - 1.0).abs() < 1e-8,
            "root {} vs {}",
            roots[0],
            report.lambda_exact[0]
        );
    }

    #[test]
    fn determinant_roots_match_bottom_spectrum() {
        let n = 100i64;
        let env = crate::spectral::tests_support::zigzag_env(n, 0.3);
        let report = metastability_report(&env, n, 0.3, 0.29).unwrap();
        let roots = determinant_root_locate(&env, n, 0.3, 0.29, 2).unwrap();
        assert_eq!(roots.len(), 2);
        for (r, e) in roots.iter().zip(&report.lambda_exact) {
            assert!((r / e - 1.0).abs() < 1e-6, "{r} vs {e}");
        }
    }

    #[test]
    fn shifted_potential_sandwich() {
        // h <= h^lambda <= h (1 + small) componentwise at the principal
        // shift of the once-killed operator.
        let n = 100i64;
        let env = crate::spectral::tests_support::zigzag_env(n, 0.3);
        let chain = Chain::from_environment(&env).unwrap();
        let frame = super::metastable_frame(&chain, n, 0.3, 0.29).unwrap();
        let x1 = frame.labeled_sites[0];
        let anchors = frame.anchors(0, None);
        let interval = Window::new(-n + 1, n - 1).unwrap();
        let gen0 = build_generator(&chain, interval, &[]).unwrap();
        let (bar0, _) = principal_pair(&gen0);
        let h_plain = equilibrium_general(&chain, &[x1], &anchors).unwrap();
        let h_shift = lambda_equilibrium(&chain, &[x1], &anchors, bar0).unwrap();
        let mut inflation = 0.0f64;
        for s in interval.iter() {
            let (p, q) = (h_plain.value(s), h_shift.value(s));
            if p > 1e-300 {
                assert!(q >= p * (1.0 - 1e-9), "site {s}: {q} < {p}");
                inflation = inflation.max(q / p - 1.0);
            }
        }
        assert!(inflation < 0.05, "inflation {inflation}");
    }

    #[test]
    fn propagator_coefficients_match_full_spectrum() {
        let chain = random_chain(0.3, -10, 10, 31);
        let gen = build_generator(&chain, Window::new(-8, 8).unwrap(), &[]).unwrap();
        let marked: Vec<i64> = (-2..=3).collect();
        let pc = propagator_coefficients(&gen, 0, &marked).unwrap();
        let spec = full_spectrum(&gen);
        let oi = gen.site_index(0).unwrap();
        for j in 0..gen.dim() {
            assert!((pc.eigenvalues[j] - spec.eigenvalues[j]).abs() < 1e-12);
            let psi = &spec.eigenvectors[j];
            let mass: f64 = marked
                .iter()
                .map(|&x| {
                    let i = gen.site_index(x).unwrap();
                    gen.mu(i) * psi[i]
                })
                .sum();
            // Signs may differ; compare the products that enter propagators.
            let lhs = pc.at_origin[j] * pc.mass_marked[j];
            let rhs = psi[oi] * mass;
            assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()));
        }
    }
}

#[cfg(test)]
pub mod tests_support {
    use crate::environment::{environment_of, Environment, Potential, Window};

    /// Piecewise-linear two-well profile through (-1,0), (-1/2,-2), (0,1),
    /// (1/2,-3), (1,2), scaled by `amplitude`.
    pub fn zigzag_profile(t: f64, amplitude: f64) -> f64 {
        let ts = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let ys = [0.0, -2.0, 1.0, -3.0, 2.0];
        let mut i = 0;
        while i + 2 < ts.len() && t > ts[i + 1] {
            i += 1;
        }
        let s = (t - ts[i]) / (ts[i + 1] - ts[i]);
        amplitude * (ys[i] + s * (ys[i + 1] - ys[i]))
    }

    /// Environment whose rescaled potential at scale `n` is the two-well
    /// profile, built from exact vertex values.
    pub fn zigzag_env(n: i64, amplitude: f64) -> Environment {
        let sqrt_n = (n as f64).sqrt();
        let w = Window::new(-n - 2, n + 2).unwrap();
        let values: Vec<f64> = w
            .iter()
            .map(|k| sqrt_n * zigzag_profile((k as f64 / n as f64).clamp(-1.0, 1.0), amplitude))
            .collect();
        let pot = Potential::new(w, values).unwrap();
        environment_of(&pot, 0.05).unwrap()
    }
}
