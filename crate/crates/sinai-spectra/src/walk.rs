//! Trajectory simulation, the valley covering the origin, localization via
//! exact propagators, and exponential relaxation across a box hierarchy.
//!
//! Time scales are astronomical here: instead of stepping the chain, the
//! exact propagator is evaluated through the eigendecomposition of the
//! killed generator, so curves in `t` are closed-form. A two-step parity
//! average removes the period-2 oscillation of the lattice walk from the
//! reported curves.

use crate::environment::{potential_of, sample_environment, DisorderLaw, Environment, Window};
use crate::error::{Error, Result};
use crate::extrema::{extract_extrema, rg_decimation, Path};
use crate::numeric::{simpson, KahanSum};
use crate::parallel::par_map_indexed;
use crate::potential_theory::{equilibrium_general, Chain};
use crate::rng::{batch_seed, substream};
use crate::spectral::{build_generator, propagator_coefficients, PropagatorCoefficients};
use crate::stats::{ks_test, KsResult};
use rand::Rng;
use serde::Serialize;
use std::f64::consts::PI;

/// Outcome of one simulated trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct WalkSummary {
    pub endpoint: i64,
    pub steps: u64,
    /// Number of time indices in `1..=steps` spent inside each tracked set.
    pub occupations: Vec<u64>,
}

/// Run the nearest-neighbor walk for a fixed number of steps.
///
/// The walk must stay strictly inside the environment window; leaving it is
/// an error naming the exit step.
pub fn simulate(
    env: &Environment,
    start: i64,
    steps: u64,
    seed: u64,
    sets: &[Vec<i64>],
) -> Result<WalkSummary> {
    let w = env.window();
    if !w.contains(start) {
        return Err(Error::BadWindow { lo: w.lo, hi: w.hi });
    }
    let mut rng = substream(seed, 0);
    let mut x = start;
    let mut occupations = vec![0u64; sets.len()];
    for n in 1..=steps {
        x += if rng.gen::<f64>() < env.omega(x) { 1 } else { -1 };
        if !w.contains(x) {
            return Err(Error::WindowExit { step: n });
        }
        for (i, set) in sets.iter().enumerate() {
            if set.contains(&x) {
                occupations[i] += 1;
            }
        }
    }
    Ok(WalkSummary {
        endpoint: x,
        steps,
        occupations,
    })
}

/// Monte Carlo estimates of hitting probabilities and exit moments.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HittingEstimate {
    pub trials: u64,
    pub p_hit_a: f64,
    pub p_se: f64,
    pub mean_exit: f64,
    pub mean_exit_se: f64,
    pub cond_mean_a: f64,
    pub cond_mean_a_se: f64,
}

/// Estimate `P(tau_A < tau_B)`, the exit time of `A u B`, and the hitting
/// time of `A` conditioned on arriving there first.
pub fn mc_hitting(
    env: &Environment,
    x: i64,
    a_set: &[i64],
    b_set: &[i64],
    trials: u64,
    seed: u64,
) -> Result<HittingEstimate> {
    let w = env.window();
    for &s in a_set.iter().chain(b_set).chain(std::iter::once(&x)) {
        if !w.contains(s) {
            return Err(Error::BadWindow { lo: w.lo, hi: w.hi });
        }
    }
    let chunk = 1024u64;
    let chunks = trials.div_ceil(chunk);
    let partials: Vec<Result<(u64, f64, f64, f64, f64)>> = par_map_indexed(chunks as usize, |c| {
        let mut rng = substream(batch_seed(seed, c as u64), 4);
        let lo = c as u64 * chunk;
        let hi = (lo + chunk).min(trials);
        let mut hits = 0u64;
        let (mut sum_t, mut sum_t2) = (0.0f64, 0.0f64);
        let (mut sum_a, mut sum_a2) = (0.0f64, 0.0f64);
        for _ in lo..hi {
            let mut pos = x;
            let mut t = 0u64;
            loop {
                pos += if rng.gen::<f64>() < env.omega(pos) { 1 } else { -1 };
                t += 1;
                if !w.contains(pos) {
                    return Err(Error::WindowExit { step: t });
                }
                if a_set.contains(&pos) {
                    hits += 1;
                    sum_a += t as f64;
                    sum_a2 += (t as f64) * (t as f64);
                    break;
                }
                if b_set.contains(&pos) {
                    break;
                }
            }
            sum_t += t as f64;
            sum_t2 += (t as f64) * (t as f64);
        }
        Ok((hits, sum_t, sum_t2, sum_a, sum_a2))
    });
    let mut hits = 0u64;
    let (mut sum_t, mut sum_t2, mut sum_a, mut sum_a2) = (0.0, 0.0, 0.0, 0.0);
    for p in partials {
        let (h, t, t2, a, a2) = p?;
        hits += h;
        sum_t += t;
        sum_t2 += t2;
        sum_a += a;
        sum_a2 += a2;
    }
    let nf = trials as f64;
    let p = hits as f64 / nf;
    let mean_exit = sum_t / nf;
    let var_exit = (sum_t2 / nf - mean_exit * mean_exit).max(0.0);
    let cond_mean_a = if hits > 0 { sum_a / hits as f64 } else { f64::NAN };
    let var_a = if hits > 1 {
        (sum_a2 / hits as f64 - cond_mean_a * cond_mean_a).max(0.0)
    } else {
        0.0
    };
    Ok(HittingEstimate {
        trials,
        p_hit_a: p,
        p_se: (p * (1.0 - p) / nf).sqrt(),
        mean_exit,
        mean_exit_se: (var_exit / nf).sqrt(),
        cond_mean_a,
        cond_mean_a_se: (var_a / hits.max(1) as f64).sqrt(),
    })
}

/// Flanking maxima and bottom of the depth-`h` valley covering the origin
/// of a path: `(left_max, bottom, right_max)`.
pub fn valley_of_path(path: &Path, h: f64) -> Result<(f64, f64, f64)> {
    let ex = extract_extrema(path, h)?;
    let m1 = ex
        .maxima
        .iter()
        .filter(|e| e.t < 0.0)
        .map(|e| e.t)
        .fold(f64::NEG_INFINITY, f64::max);
    let m2 = ex
        .maxima
        .iter()
        .filter(|e| e.t >= 0.0)
        .map(|e| e.t)
        .fold(f64::INFINITY, f64::min);
    if !m1.is_finite() || !m2.is_finite() {
        return Err(Error::WindowTooSmall(
            "no flanking maxima around the origin at this depth scale".into(),
        ));
    }
    let bottoms: Vec<f64> = ex
        .minima
        .iter()
        .filter(|e| m1 < e.t && e.t < m2)
        .map(|e| e.t)
        .collect();
    if bottoms.len() != 1 {
        return Err(Error::Degenerate(format!(
            "expected a unique valley bottom, found {}",
            bottoms.len()
        )));
    }
    Ok((m1, bottoms[0], m2))
}

/// The `ln n`-valley of the potential covering the origin.
#[derive(Debug, Clone, Serialize)]
pub struct OriginValley {
    pub n: f64,
    pub h: f64,
    pub left_max: i64,
    pub bottom: i64,
    pub right_max: i64,
    pub delta_n: f64,
    /// Open valley interior.
    pub box_window: Window,
    /// Target window around the bottom, clipped to the box.
    pub d_window: Window,
    /// Barrier height above the bottom.
    pub depth: f64,
}

/// Locate the valley at time scale `n` with the default window function.
pub fn origin_valley(env: &Environment, n: f64) -> Result<OriginValley> {
    origin_valley_with(env, n, 1.0)
}

/// Locate the valley; `rho_factor` scales the localization window
/// `delta_n = rho_factor * ln(ln n) / ln n`.
pub fn origin_valley_with(env: &Environment, n: f64, rho_factor: f64) -> Result<OriginValley> {
    if n <= std::f64::consts::E {
        return Err(Error::InvalidArgument(format!("need n > e, got {n}")));
    }
    let h = n.ln();
    let potential = potential_of(env)?;
    let path = potential.to_path();
    let ex = extract_extrema(&path, h)?;
    let left = ex.maxima.iter().filter(|e| e.t < 0.0).last_max_t();
    let right = ex.maxima.iter().filter(|e| e.t >= 0.0).first_min_t();
    let (left, right) = match (left, right) {
        (Some(l), Some(r)) if !l.endpoint_clause && !r.endpoint_clause => (l, r),
        _ => {
            return Err(Error::WindowTooSmall(format!(
                "no interior flanking maxima at depth {h:.3}; widen the environment window"
            )))
        }
    };
    let bottoms: Vec<_> = ex
        .minima
        .iter()
        .filter(|e| left.t < e.t && e.t < right.t)
        .collect();
    if bottoms.len() != 1 {
        return Err(Error::Degenerate(format!(
            "expected a unique valley bottom, found {}",
            bottoms.len()
        )));
    }
    let bottom = bottoms[0];
    let ln2n = h * h;
    let delta_n = rho_factor * h.ln() / h;
    let (a, m, b) = (left.t as i64, bottom.t as i64, right.t as i64);
    let box_window = Window::new(a + 1, b - 1)?;
    let lo = ((m as f64 - delta_n * ln2n).floor() as i64 + 1).max(box_window.lo);
    let hi = ((m as f64 + delta_n * ln2n).ceil() as i64 - 1).min(box_window.hi);
    let d_window = Window::new(lo, hi)?;
    Ok(OriginValley {
        n,
        h,
        left_max: a,
        bottom: m,
        right_max: b,
        delta_n,
        box_window,
        d_window,
        depth: left.value.min(right.value) - bottom.value,
    })
}

/// Small extension trait to keep the flank search readable.
trait FlankSearch<'a>: Iterator<Item = &'a crate::extrema::Extremum> + Sized {
    fn last_max_t(self) -> Option<&'a crate::extrema::Extremum> {
        self.max_by(|a, b| a.t.partial_cmp(&b.t).unwrap())
    }
    fn first_min_t(self) -> Option<&'a crate::extrema::Extremum> {
        self.min_by(|a, b| a.t.partial_cmp(&b.t).unwrap())
    }
}

impl<'a, I: Iterator<Item = &'a crate::extrema::Extremum>> FlankSearch<'a> for I {}

/// Screening thresholds for the valley geometry.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScreenParams {
    pub delta: f64,
    pub delta_prime: f64,
    pub beta: f64,
    pub rho_factor: f64,
}

impl Default for ScreenParams {
    fn default() -> Self {
        Self {
            delta: 0.3,
            delta_prime: 0.2,
            beta: 0.05,
            rho_factor: 1.0,
        }
    }
}

/// Which of the six geometric screening conditions hold.
#[derive(Debug, Clone, Serialize)]
pub struct ScreenVerdict {
    pub pass: bool,
    pub conditions: [bool; 6],
}

/// Evaluate the valley screen at scale `n` on the integer lattice.
///
/// The conditions are stated for the diffusively rescaled potential; on the
/// integer lattice the depth scale is `ln n`, lengths scale with `ln^2 n`
/// and potential margins with `ln n`.
pub fn valley_screen(
    env: &Environment,
    valley: &OriginValley,
    params: &ScreenParams,
) -> Result<ScreenVerdict> {
    let h = valley.h;
    let ln2n = h * h;
    let reach = (ln2n / params.delta_prime).ceil() as i64;
    let w = env.window();
    if w.lo > -reach || w.hi < reach {
        return Err(Error::WindowTooSmall(format!(
            "screen needs the window to cover [{}, {}]",
            -reach, reach
        )));
    }
    let potential = potential_of(env)?;
    let path = potential.to_path();
    let v = |x: i64| potential.value(x);
    let max_on = |l: i64, r: i64| (l..=r).map(v).fold(f64::NEG_INFINITY, f64::max);
    let (m1, m, m2) = (valley.left_max, valley.bottom, valley.right_max);

    let c1 = -m1 <= reach && m2 <= reach;
    let ex = extract_extrema(&path, h)?;
    let c2 = ex
        .minima
        .iter()
        .any(|e| -(reach as f64) <= e.t && e.t < m as f64)
        && ex
            .minima
            .iter()
            .any(|e| (m as f64) < e.t && e.t <= reach as f64);
    // Stability of the minima set across the depth band h(1 +- delta).
    let in_reach = |t: f64| -(reach as f64) <= t && t <= reach as f64;
    let lo_set: Vec<f64> = extract_extrema(&path, h * (1.0 - params.delta))?
        .minima
        .iter()
        .map(|e| e.t)
        .filter(|&t| in_reach(t))
        .collect();
    let hi_set: Vec<f64> = extract_extrema(&path, h * (1.0 + params.delta))?
        .minima
        .iter()
        .map(|e| e.t)
        .filter(|&t| in_reach(t))
        .collect();
    let c3 = lo_set == hi_set;
    let flank = v(m1).min(v(m2));
    let c4 = flank >= max_on(0.min(m), 0.max(m)) + params.delta * h;
    let c5 = v(m) >= -h / params.delta;
    let beta_reach = (params.beta * ln2n).ceil() as i64;
    let c6 = flank >= max_on(m - beta_reach, m + beta_reach) + params.delta * h;
    let conditions = [c1, c2, c3, c4, c5, c6];
    Ok(ScreenVerdict {
        pass: conditions.iter().all(|&c| c),
        conditions,
    })
}

/// `base^t` for integer `t`, sign handled separately so negative bases
/// (top of the jump-matrix spectrum) are fine.
fn pow_signed(base: f64, t: f64) -> f64 {
    if base == 0.0 {
        return if t == 0.0 { 1.0 } else { 0.0 };
    }
    let mag = (t * base.abs().ln()).exp();
    if base < 0.0 && (t as u64) % 2 == 1 {
        -mag
    } else {
        mag
    }
}

/// In-box propagator mass on the marked set after `t` steps.
pub fn propagator_mass(pc: &PropagatorCoefficients, t: f64) -> f64 {
    let mut acc = KahanSum::new();
    for j in 0..pc.eigenvalues.len() {
        let w = pow_signed(1.0 - pc.eigenvalues[j], t);
        acc.add(w * pc.at_origin[j] * pc.mass_marked[j]);
    }
    acc.value()
}

/// Survival probability in the box after `t` steps.
pub fn propagator_survival(pc: &PropagatorCoefficients, t: f64) -> f64 {
    let mut acc = KahanSum::new();
    for j in 0..pc.eigenvalues.len() {
        let w = pow_signed(1.0 - pc.eigenvalues[j], t);
        acc.add(w * pc.at_origin[j] * pc.mass_domain[j]);
    }
    acc.value()
}

/// Localization verdict at one time scale.
#[derive(Debug, Clone, Serialize)]
pub struct LocalizationReport {
    pub n: u64,
    pub bottom: i64,
    pub box_len: usize,
    pub d_len: usize,
    pub screen: ScreenVerdict,
    /// Exact in-box probability of finishing inside the target window; a
    /// lower bound for the unrestricted walk.
    pub spectral_lower_bound: Option<f64>,
    /// Monte Carlo estimate of the unrestricted probability with its
    /// standard error, when trials were requested.
    pub mc_estimate: Option<(f64, f64)>,
    /// Diagnostics `|h(0)-1|`, `|(h,1_D)/||h||^2-1|`, `|(||1_D||/||h||)-1|`.
    pub overlap_diagnostics: (f64, f64, f64),
    pub mc_only: bool,
}

/// Spectral size cap beyond which only Monte Carlo estimates are produced.
pub const SPECTRAL_SIZE_CAP: usize = 100_000;

/// Exact spectral localization bound plus optional Monte Carlo estimate.
pub fn localization_report(
    env: &Environment,
    n: u64,
    params: &ScreenParams,
    mc_trials: u64,
    seed: u64,
) -> Result<LocalizationReport> {
    let valley = origin_valley_with(env, n as f64, params.rho_factor)?;
    let screen = valley_screen(env, &valley, params)?;
    let chain = Chain::from_environment(env)?;
    let d_sites: Vec<i64> = valley.d_window.iter().collect();
    let box_len = valley.box_window.len();
    let mc_only = box_len > SPECTRAL_SIZE_CAP;

    let mut spectral = None;
    let mut diags = (f64::NAN, f64::NAN, f64::NAN);
    if !mc_only {
        let gen = build_generator(&chain, valley.box_window, &[])?;
        let pc = propagator_coefficients(&gen, 0, &d_sites)?;
        spectral = Some(propagator_mass(&pc, n as f64));
        // Hitting-probability overlap diagnostics.
        let h = equilibrium_general(
            &chain,
            &[valley.bottom],
            &[valley.left_max, valley.right_max],
        )?;
        let mut norm_sq = KahanSum::new();
        let mut mass_d = KahanSum::new();
        let mut mass_d_sq = KahanSum::new();
        for x in valley.box_window.iter() {
            let hv = h.value(x);
            norm_sq.add(chain.mu(x) * hv * hv);
            if valley.d_window.contains(x) {
                mass_d.add(chain.mu(x) * hv);
                mass_d_sq.add(chain.mu(x));
            }
        }
        diags = (
            (h.value(0) - 1.0).abs(),
            (mass_d.value() / norm_sq.value() - 1.0).abs(),
            ((mass_d_sq.value() / norm_sq.value()).sqrt() - 1.0).abs(),
        );
    }

    let mc_estimate = if mc_trials > 0 {
        let hits: Vec<u64> = par_map_indexed(mc_trials as usize, |i| {
            let mut rng = substream(batch_seed(seed, i as u64), 5);
            let mut x = 0i64;
            let w = env.window();
            for _ in 0..n {
                x += if rng.gen::<f64>() < env.omega(x) { 1 } else { -1 };
                if x <= w.lo || x >= w.hi {
                    return 0; // treat escapes from the sampled window as misses
                }
            }
            u64::from(valley.d_window.contains(x))
        });
        let p = hits.iter().sum::<u64>() as f64 / mc_trials as f64;
        Some((p, (p * (1.0 - p) / mc_trials as f64).sqrt()))
    } else {
        None
    };

    Ok(LocalizationReport {
        n,
        bottom: valley.bottom,
        box_len,
        d_len: valley.d_window.len(),
        screen,
        spectral_lower_bound: spectral,
        mc_estimate,
        overlap_diagnostics: diags,
        mc_only,
    })
}

/// Relaxation curve of one box in the hierarchy.
#[derive(Debug, Clone, Serialize)]
pub struct RelaxationCurve {
    pub k: usize,
    pub n_scale: f64,
    pub bottom: i64,
    /// Relaxation rate: second eigenvalue of the killed generator.
    pub rate: f64,
    pub t_grid: Vec<f64>,
    /// Parity-averaged in-box probabilities at `t / rate` steps.
    pub probabilities: Vec<f64>,
    pub sup_deviation: f64,
    /// Second-mode mass at the intermediate time scale, expected near -1.
    pub intermediate_identity: Option<f64>,
    /// Depth thresholds (rescaled) at which the valley holds 1, 2, 3 minima.
    pub depth_thresholds: Option<(f64, f64, f64)>,
    pub screen: ScreenVerdict,
    /// Spectral separation diagnostics: rate/lambda_1 and lambda_3/rate.
    pub rate_over_bottom: f64,
    pub third_over_rate: f64,
}

/// Build the box hierarchy from `n0` and evaluate the relaxation law
/// `P(in target at t/rate) -> 1 - e^{-t}` on each box.
pub fn relaxation(
    env: &Environment,
    n0: f64,
    t_grid: &[f64],
    params: &ScreenParams,
    max_boxes: usize,
) -> Result<Vec<RelaxationCurve>> {
    if t_grid.is_empty() || t_grid.iter().any(|&t| t < 0.0) {
        return Err(Error::InvalidArgument("t grid must be nonnegative".into()));
    }
    let chain = Chain::from_environment(env)?;
    let mut curves = Vec::new();
    let mut n = n0;
    let mut prev_bottom: Option<i64> = None;
    for k in 0..max_boxes {
        // Advance n until the valley bottom moves.
        let valley = loop {
            let valley = match origin_valley_with(env, n, params.rho_factor) {
                Ok(v) => v,
                Err(Error::WindowTooSmall(_)) => return Ok(curves), // partial output
                Err(e) => return Err(e),
            };
            match prev_bottom {
                Some(b) if valley.bottom == b => {
                    n *= 1.05;
                    if n > 1e300 {
                        return Ok(curves);
                    }
                }
                _ => break valley,
            }
        };
        prev_bottom = Some(valley.bottom);
        let screen = match valley_screen(env, &valley, params) {
            Ok(s) => s,
            Err(Error::WindowTooSmall(_)) => return Ok(curves),
            Err(e) => return Err(e),
        };

        let gen = build_generator(&chain, valley.box_window, &[])?;
        let d_sites: Vec<i64> = valley.d_window.iter().collect();
        let pc = propagator_coefficients(&gen, 0, &d_sites)?;
        if pc.eigenvalues.len() < 3 {
            n *= 1.05;
            continue;
        }
        let rate = pc.eigenvalues[1];
        let mut probabilities = Vec::with_capacity(t_grid.len());
        let mut sup_dev = 0.0f64;
        for &t in t_grid {
            let steps = (t / rate).floor();
            let p = 0.5 * (propagator_mass(&pc, steps) + propagator_mass(&pc, steps + 1.0));
            sup_dev = sup_dev.max((p - (1.0 - (-t).exp())).abs());
            probabilities.push(p);
        }

        // Depth thresholds of the valley: the three largest decimation
        // variations of the potential restricted to the flanking maxima.
        let h = valley.h;
        let restricted = restrict_path(chain.potential().to_path(), valley.left_max, valley.right_max);
        let thresholds = rg_decimation(&restricted, 0.05 * h).ok().and_then(|rg| {
            let vars = rg.variations();
            let q = vars.len();
            (q >= 3).then(|| {
                (
                    vars[q - 1] / h,
                    vars[q - 2] / h,
                    vars[q - 3] / h,
                )
            })
        });
        let intermediate_identity = thresholds.map(|(_, h2, h3)| {
            let t_mid = valley.n.powf(0.5 * (h2 + h3));
            let w = pow_signed(1.0 - rate, t_mid);
            let mut acc = 0.0;
            // Second-mode contribution only.
            let j = 1;
            acc += w * pc.at_origin[j] * pc.mass_marked[j];
            acc
        });
        curves.push(RelaxationCurve {
            k,
            n_scale: valley.n,
            bottom: valley.bottom,
            rate,
            t_grid: t_grid.to_vec(),
            probabilities,
            sup_deviation: sup_dev,
            intermediate_identity,
            depth_thresholds: thresholds,
            screen,
            rate_over_bottom: rate / pc.eigenvalues[0],
            third_over_rate: pc.eigenvalues[2] / rate,
        });
        n *= 1.05;
    }
    Ok(curves)
}

fn restrict_path(path: Path, lo: i64, hi: i64) -> Path {
    let ts = path.abscissae();
    let ys = path.ordinates();
    let mut nts = Vec::new();
    let mut nys = Vec::new();
    for i in 0..ts.len() {
        if ts[i] >= lo as f64 && ts[i] <= hi as f64 {
            nts.push(ts[i]);
            nys.push(ys[i]);
        }
    }
    Path::new(nts, nys).expect("restriction keeps at least two vertices")
}

/// Density of the annealed limit of the rescaled valley bottom.
pub fn annealed_density(x: f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..200 {
        let a = (2 * k + 1) as f64;
        let term = (-a * a * PI * PI * x.abs() / 8.0).exp() / a;
        acc += if k % 2 == 0 { term } else { -term };
        if term < 1e-15 {
            break;
        }
    }
    (2.0 / PI) * acc
}

/// CDF of the annealed limit law.
pub fn annealed_cdf(x: f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..200 {
        let a = (2 * k + 1) as f64;
        let rate = a * a * PI * PI / 8.0;
        let term = (1.0 - (-rate * x.abs()).exp()) / (a * rate);
        acc += if k % 2 == 0 { term } else { -term };
        if term.abs() < 1e-16 {
            break;
        }
    }
    let half = (2.0 / PI) * acc;
    if x >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

/// Empirical law of the rescaled valley bottom against the annealed limit.
#[derive(Debug, Clone, Serialize)]
pub struct AnnealedReport {
    pub n: f64,
    pub environments: usize,
    pub ks: KsResult,
    pub density_integral: f64,
    pub samples: Vec<f64>,
}

/// Sample valley bottoms over many environments (potential only, no walk)
/// and compare their rescaled law with the annealed limit density.
pub fn annealed_limit_check(
    law: &DisorderLaw,
    n: f64,
    m_envs: usize,
    seed: u64,
) -> Result<AnnealedReport> {
    if m_envs < 10 {
        return Err(Error::InvalidArgument("need at least 10 environments".into()));
    }
    let h = n.ln();
    let sigma2 = law.sigma2();
    let base = (6.0 * h * h / sigma2).ceil() as i64;
    let law = *law;
    let bottoms: Vec<Result<i64>> = par_map_indexed(m_envs, |i| {
        let env_seed = batch_seed(seed, i as u64);
        let mut reach = base;
        loop {
            let env = sample_environment(&law, Window::new(-reach, reach)?, env_seed)?;
            match origin_valley(&env, n) {
                Ok(v) => return Ok(v.bottom),
                Err(Error::WindowTooSmall(_)) | Err(Error::Degenerate(_)) => {
                    reach *= 2;
                    if reach > (1 << 24) {
                        return Err(Error::WindowTooSmall(
                            "valley not found within the growth cap".into(),
                        ));
                    }
                }
                Err(e) => return Err(e),
            }
        }
    });
    let mut samples = Vec::with_capacity(m_envs);
    for b in bottoms {
        samples.push(sigma2 * b? as f64 / (h * h));
    }
    let ks = ks_test(&samples, annealed_cdf);
    let density_integral = simpson(annealed_density, -40.0, 40.0, 200_000);
    Ok(AnnealedReport {
        n,
        environments: m_envs,
        ks,
        density_integral,
        samples,
    })
}
