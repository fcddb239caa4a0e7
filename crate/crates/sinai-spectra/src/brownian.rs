//! Brownian path sampling and the renewal statistics of its h-extrema:
//! slope heights and spacings, the spacing density and first-renewal law,
//! one-sided tail bounds, and a distributional comparison against rescaled
//! potentials.

use crate::environment::{potential_of, rescale, sample_environment, DisorderLaw, Window};
use crate::error::{Error, Result};
use crate::extrema::{extract_extrema, good_path_certificate, Extremum, Path};
use crate::parallel::par_map_indexed;
use crate::rng::substream;
use crate::stats::{binomial_se, ks_test, ks_two_sample, mean, standard_error, KsResult};
use rand_distr::{Distribution, Normal};
use serde::Serialize;

/// Sampled Brownian path on a uniform grid.
#[derive(Debug, Clone)]
pub struct BrownianSample {
    pub sigma: f64,
    pub dt: f64,
    pub span: (f64, f64),
    pub seed: u64,
    pub path: Path,
}

/// Default grid step: resolves sub-depth fluctuations for event counting.
pub fn default_grid_step(h: f64, sigma: f64) -> f64 {
    (h / sigma).powi(2) / 400.0
}

/// Statistics-grade grid step.
///
/// Discrete monitoring clips every extremum by about `0.5826 sigma
/// sqrt(dt)`, which inflates the effective detection threshold and with it
/// the measured spacings by `(1 + 1.165 sqrt(dt) sigma/h)^2`. This step
/// keeps that inflation near one percent, inside the two-percent gate on
/// the spacing mean.
pub fn statistics_grid_step(h: f64, sigma: f64) -> f64 {
    (h / sigma).powi(2) / 50_000.0
}

/// Sample a two-sided Brownian path anchored at the origin.
///
/// The two halves use independent generator streams, and the grid is
/// `{k dt}` intersected with the span. Deterministic for a fixed seed.
pub fn sample_path(sigma: f64, dt: f64, span: (f64, f64), seed: u64) -> Result<BrownianSample> {
    if !(dt > 0.0) || !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("need positive sigma and dt, got {sigma}, {dt}")));
    }
    if !(span.0 <= 0.0 && span.1 > span.0 && span.1 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "span must contain the origin, got ({}, {})",
            span.0, span.1
        )));
    }
    let step = Normal::new(0.0, sigma * dt.sqrt()).expect("valid normal");
    let right_steps = (span.1 / dt).round() as usize;
    let left_steps = (-span.0 / dt).round() as usize;
    let mut right = Vec::with_capacity(right_steps);
    let mut rng_r = substream(seed, 1);
    let mut acc = 0.0;
    for _ in 0..right_steps {
        acc += step.sample(&mut rng_r);
        right.push(acc);
    }
    let mut rng_l = substream(seed, 2);
    let mut left = Vec::with_capacity(left_steps);
    acc = 0.0;
    for _ in 0..left_steps {
        acc += step.sample(&mut rng_l);
        left.push(acc);
    }
    let mut ts = Vec::with_capacity(left_steps + right_steps + 1);
    let mut ys = Vec::with_capacity(ts.capacity());
    for i in (1..=left_steps).rev() {
        ts.push(-(i as f64) * dt);
        ys.push(left[i - 1]);
    }
    ts.push(0.0);
    ys.push(0.0);
    for (i, &v) in right.iter().enumerate() {
        ts.push((i + 1) as f64 * dt);
        ys.push(v);
    }
    Ok(BrownianSample {
        sigma,
        dt,
        span,
        seed,
        path: Path::new(ts, ys)?,
    })
}

/// Batch of independent paths, one seed stream each.
pub fn sample_paths(
    sigma: f64,
    dt: f64,
    span: (f64, f64),
    count: usize,
    seed: u64,
) -> Result<Vec<BrownianSample>> {
    let out = par_map_indexed(count, |i| {
        sample_path(sigma, dt, span, crate::rng::batch_seed(seed, i as u64))
    });
    out.into_iter().collect()
}

/// Halve the grid step by inserting Brownian-bridge midpoints.
///
/// Conditionally exact refinement: the skeleton keeps its law, so extrema
/// counts should be stable once dt resolves the depth scale.
pub fn refine_bridge(sample: &BrownianSample, seed: u64) -> BrownianSample {
    let ts = sample.path.abscissae();
    let ys = sample.path.ordinates();
    let mid_sd = sample.sigma * (sample.dt / 4.0).sqrt();
    let normal = Normal::new(0.0, mid_sd).expect("valid normal");
    let mut rng = substream(seed, 3);
    let mut new_ts = Vec::with_capacity(ts.len() * 2 - 1);
    let mut new_ys = Vec::with_capacity(new_ts.capacity());
    for i in 0..ts.len() - 1 {
        new_ts.push(ts[i]);
        new_ys.push(ys[i]);
        new_ts.push(0.5 * (ts[i] + ts[i + 1]));
        new_ys.push(0.5 * (ys[i] + ys[i + 1]) + normal.sample(&mut rng));
    }
    new_ts.push(*ts.last().unwrap());
    new_ys.push(*ys.last().unwrap());
    BrownianSample {
        sigma: sample.sigma,
        dt: sample.dt / 2.0,
        span: sample.span,
        seed: sample.seed,
        path: Path::new(new_ts, new_ys).expect("refined grid is increasing"),
    }
}

/// Interior renewal slopes of one path: (t0, v0, t1, v1, contains_origin).
fn interior_slopes(extrema: &[(Extremum, bool)]) -> Vec<(f64, f64, f64, f64, bool)> {
    let m = extrema.len();
    if m < 4 {
        return Vec::new();
    }
    // Drop the first and last slope: they touch the span boundary.
    (1..m - 2)
        .map(|i| {
            let (a, _) = extrema[i];
            let (b, _) = extrema[i + 1];
            (a.t, a.value, b.t, b.value, a.t <= 0.0 && 0.0 < b.t)
        })
        .collect()
}

/// Height and spacing samples with their law verdicts.
#[derive(Debug, Clone, Serialize)]
pub struct SlopeStatistics {
    pub h: f64,
    pub sigma: f64,
    pub slope_count: usize,
    pub heights: Vec<f64>,
    pub spacings: Vec<f64>,
    pub height_ks: KsResult,
    pub spacing_mean: f64,
    pub spacing_mean_target: f64,
    /// (lambda, empirical transform, target, standard error)
    pub laplace: Vec<(f64, f64, f64, f64)>,
    pub height_ks_pass: bool,
    pub spacing_mean_pass: bool,
    pub laplace_pass: bool,
}

/// Excess heights and spacings of interior slopes across a batch of paths.
///
/// Excludes the two boundary slopes always and the origin-covering slope
/// from the spacing sample (its length is size-biased).
pub fn slope_statistics(samples: &[BrownianSample], h: f64) -> Result<SlopeStatistics> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no paths supplied".into()));
    }
    let sigma = samples[0].sigma;
    let per_path: Vec<(Vec<f64>, Vec<f64>)> = crate::parallel::par_map(
        samples.iter().collect::<Vec<_>>(),
        |s| {
            let ex = extract_extrema(&s.path, h).expect("positive depth scale");
            let slopes = interior_slopes(&ex.merged());
            let heights: Vec<f64> = slopes
                .iter()
                .map(|&(_, v0, _, v1, _)| (v1 - v0).abs() - h)
                .collect();
            let spacings: Vec<f64> = slopes
                .iter()
                .filter(|&&(_, _, _, _, origin)| !origin)
                .map(|&(t0, _, t1, _, _)| t1 - t0)
                .collect();
            (heights, spacings)
        },
    );
    let mut heights = Vec::new();
    let mut spacings = Vec::new();
    for (hs, sp) in per_path {
        heights.extend(hs);
        spacings.extend(sp);
    }
    summarize_slopes(sigma, h, heights, spacings)
}

/// Slope statistics over freshly sampled paths, one at a time, so the grid
/// can be fine without holding the whole ensemble in memory.
pub fn slope_statistics_streamed(
    sigma: f64,
    dt: f64,
    span: (f64, f64),
    paths: usize,
    h: f64,
    seed: u64,
) -> Result<SlopeStatistics> {
    let per_path: Vec<Result<(Vec<f64>, Vec<f64>)>> = par_map_indexed(paths, |i| {
        let s = sample_path(sigma, dt, span, crate::rng::batch_seed(seed, i as u64))?;
        let ex = extract_extrema(&s.path, h)?;
        let slopes = interior_slopes(&ex.merged());
        let heights: Vec<f64> = slopes
            .iter()
            .map(|&(_, v0, _, v1, _)| (v1 - v0).abs() - h)
            .collect();
        let spacings: Vec<f64> = slopes
            .iter()
            .filter(|&&(_, _, _, _, origin)| !origin)
            .map(|&(t0, _, t1, _, _)| t1 - t0)
            .collect();
        Ok((heights, spacings))
    });
    let mut heights = Vec::new();
    let mut spacings = Vec::new();
    for r in per_path {
        let (hs, sp) = r?;
        heights.extend(hs);
        spacings.extend(sp);
    }
    summarize_slopes(sigma, h, heights, spacings)
}

fn summarize_slopes(
    sigma: f64,
    h: f64,
    heights: Vec<f64>,
    spacings: Vec<f64>,
) -> Result<SlopeStatistics> {
    if heights.len() < 100 {
        return Err(Error::InsufficientSpan(heights.len(), 100));
    }
    let height_ks = ks_test(&heights, |x| {
        if x < 0.0 {
            0.0
        } else {
            1.0 - (-x / h).exp()
        }
    });
    let spacing_mean = mean(&spacings);
    let spacing_mean_target = h * h / (sigma * sigma);
    let mut laplace = Vec::new();
    let mut laplace_pass = true;
    for factor in [0.5, 1.0, 2.0] {
        let lam = factor / spacing_mean_target;
        let transformed: Vec<f64> = spacings.iter().map(|&t| (-lam * t).exp()).collect();
        let emp = mean(&transformed);
        let se = standard_error(&transformed);
        let target = 1.0 / (h * (2.0 * lam).sqrt() / sigma).cosh();
        if (emp - target).abs() > 3.0 * se {
            laplace_pass = false;
        }
        laplace.push((lam, emp, target, se));
    }
    let spacing_mean_pass =
        (spacing_mean - spacing_mean_target).abs() <= 0.02 * spacing_mean_target;
    Ok(SlopeStatistics {
        h,
        sigma,
        slope_count: heights.len(),
        height_ks_pass: height_ks.p_value > 0.01,
        height_ks,
        spacing_mean,
        spacing_mean_target,
        laplace,
        spacing_mean_pass,
        laplace_pass,
        heights,
        spacings,
    })
}

/// Fraction of paths whose extrema count is unchanged by one bridge
/// refinement: the discretization adequacy gate.
pub fn refinement_stability(
    sigma: f64,
    dt: f64,
    span: (f64, f64),
    paths: usize,
    h: f64,
    seed: u64,
) -> Result<f64> {
    let stable: Vec<Result<bool>> = par_map_indexed(paths, |i| {
        let s = sample_path(sigma, dt, span, crate::rng::batch_seed(seed, i as u64))?;
        let before = extract_extrema(&s.path, h)?.minima.len();
        let refined = refine_bridge(&s, crate::rng::batch_seed(seed ^ 0xa5a5, i as u64));
        let after = extract_extrema(&refined.path, h)?.minima.len();
        Ok(after == before)
    });
    let mut ok = 0usize;
    for r in &stable {
        if *r.as_ref().map_err(|e| Error::InvalidArgument(e.to_string()))? {
            ok += 1;
        }
    }
    Ok(ok as f64 / paths as f64)
}

/// Truncated alternating series for the standardized spacing law (unit
/// mean), i.e. the exit time of a standard Brownian motion from (-1, 1).
///
/// Two dual representations are used: the spectral series for moderate and
/// large arguments, and the reflection series below `CROSSOVER` where the
/// spectral one converges too slowly. Both have the Laplace transform
/// `1/cosh(sqrt(2 lambda))`.
#[derive(Debug, Clone)]
pub struct SpacingLaw {
    pub kmax_used: usize,
}

const CROSSOVER: f64 = 0.5;

impl SpacingLaw {
    fn series<F: Fn(usize, f64) -> f64>(x: f64, kmax: usize, term: F) -> (f64, usize) {
        let mut acc = 0.0;
        let mut k = 0;
        loop {
            let t = term(k, x);
            acc += if k % 2 == 0 { t } else { -t };
            if t.abs() < 1e-13 * (1.0 + acc.abs()) {
                break;
            }
            k += 1;
            if k > kmax.max(10_000) {
                break;
            }
        }
        (acc, k)
    }

    /// Density of the unit-mean standardized spacing.
    pub fn density_std(x: f64, kmax: usize) -> (f64, usize) {
        if x <= 0.0 {
            return (0.0, 0);
        }
        if x < CROSSOVER {
            let norm = 2.0 / (2.0 * std::f64::consts::PI * x.powi(3)).sqrt();
            let (v, k) = Self::series(x, kmax, |k, x| {
                let c = 2.0 * k as f64 + 1.0;
                c * (-c * c / (2.0 * x)).exp()
            });
            return ((norm * v).max(0.0), k);
        }
        let (v, k) = Self::series(x, kmax, |k, x| {
            let a = k as f64 + 0.5;
            std::f64::consts::PI * a * (-std::f64::consts::PI.powi(2) * a * a * x / 2.0).exp()
        });
        (v.max(0.0), k)
    }

    /// CDF of the standardized spacing, term-by-term integral of the series.
    pub fn cdf_std(x: f64, kmax: usize) -> (f64, usize) {
        if x <= 0.0 {
            return (0.0, 0);
        }
        if x < CROSSOVER {
            let (v, k) = Self::series(x, kmax, |k, x| {
                let c = 2.0 * k as f64 + 1.0;
                crate::numeric::erfc(c / (2.0 * x).sqrt())
            });
            return ((2.0 * v).clamp(0.0, 1.0), k);
        }
        let (v, k) = Self::series(x, kmax, |k, x| {
            let a = k as f64 + 0.5;
            (2.0 / std::f64::consts::PI) / a
                * (-std::f64::consts::PI.powi(2) * a * a * x / 2.0).exp()
        });
        ((1.0 - v).clamp(0.0, 1.0), k)
    }

    /// Partial mean of the standardized spacing over [0, x].
    pub fn partial_mean_std(x: f64, kmax: usize) -> (f64, usize) {
        if x <= 0.0 {
            return (0.0, 0);
        }
        if x < CROSSOVER {
            let (v, k) = Self::series(x, kmax, |k, x| {
                let c = 2.0 * k as f64 + 1.0;
                c * (2.0 * x / std::f64::consts::PI).sqrt() * (-c * c / (2.0 * x)).exp()
                    - c * c * crate::numeric::erfc(c / (2.0 * x).sqrt())
            });
            return ((2.0 * v).clamp(0.0, 1.0), k);
        }
        let (v, k) = Self::series(x, kmax, |k, x| {
            let a = std::f64::consts::PI.powi(2) * (k as f64 + 0.5).powi(2) / 2.0;
            std::f64::consts::PI * (k as f64 + 0.5) * (1.0 - (-a * x).exp() * (1.0 + a * x)) / (a * a)
        });
        (v.clamp(0.0, 1.0), k)
    }

    /// Agreement of the two representations near the crossover.
    #[cfg(test)]
    fn dual_gap(x: f64) -> f64 {
        let norm = 2.0 / (2.0 * std::f64::consts::PI * x.powi(3)).sqrt();
        let (img, _) = Self::series(x, 200, |k, x| {
            let c = 2.0 * k as f64 + 1.0;
            c * (-c * c / (2.0 * x)).exp()
        });
        let (spec, _) = Self::series(x, 200, |k, x| {
            let a = k as f64 + 0.5;
            std::f64::consts::PI * a * (-std::f64::consts::PI.powi(2) * a * a * x / 2.0).exp()
        });
        (norm * img - spec).abs()
    }

    /// Spacing density for depth scale `h` and diffusion scale `sigma`.
    pub fn density(x: f64, h: f64, sigma: f64, kmax: usize) -> f64 {
        let r = (sigma / h).powi(2);
        r * Self::density_std(x * r, kmax).0
    }

    /// Length-biased density of the origin-covering slope.
    pub fn density_origin_slope(x: f64, h: f64, sigma: f64, kmax: usize) -> f64 {
        let r = (sigma / h).powi(2);
        x * r * r * Self::density_std(x * r, kmax).0
    }

    /// CDF of the first renewal point to the right of the origin:
    /// `[t P(X > t) + E(X; X <= t)] / E(X)` for the stationary spacing X.
    pub fn first_renewal_cdf(t: f64, h: f64, sigma: f64, kmax: usize) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let mean_x = (h / sigma).powi(2);
        let s = t / mean_x;
        let tail = 1.0 - Self::cdf_std(s, kmax).0;
        let partial = mean_x * Self::partial_mean_std(s, kmax).0;
        ((t * tail + partial) / mean_x).clamp(0.0, 1.0)
    }
}

/// Tabulated spacing laws on a grid, as produced by the CLI suites.
#[derive(Debug, Clone, Serialize)]
pub struct SpacingLawTable {
    pub h: f64,
    pub sigma: f64,
    pub x_grid: Vec<f64>,
    pub density: Vec<f64>,
    pub density_origin_slope: Vec<f64>,
    pub cdf: Vec<f64>,
    pub first_renewal_cdf: Vec<f64>,
    pub kmax_used: usize,
}

/// Evaluate the spacing density, its CDF, the origin-slope variant and the
/// first-renewal CDF on a positive grid.
pub fn spacing_law(x_grid: &[f64], h: f64, sigma: f64, kmax: usize) -> Result<SpacingLawTable> {
    if kmax < 10 {
        return Err(Error::InvalidArgument(format!("kmax must be >= 10, got {kmax}")));
    }
    if x_grid.iter().any(|&x| x <= 0.0) {
        return Err(Error::InvalidArgument("grid must be positive".into()));
    }
    let r = (sigma / h).powi(2);
    let mut kmax_used = 0;
    let mut density = Vec::with_capacity(x_grid.len());
    let mut cdf = Vec::with_capacity(x_grid.len());
    let mut origin = Vec::with_capacity(x_grid.len());
    let mut first = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let (d, k1) = SpacingLaw::density_std(x * r, kmax);
        let (c, k2) = SpacingLaw::cdf_std(x * r, kmax);
        density.push(d * r);
        cdf.push(c);
        origin.push(x * r * r * d);
        first.push(SpacingLaw::first_renewal_cdf(x, h, sigma, kmax));
        kmax_used = kmax_used.max(k1).max(k2);
    }
    Ok(SpacingLawTable {
        h,
        sigma,
        x_grid: x_grid.to_vec(),
        density,
        density_origin_slope: origin,
        cdf,
        first_renewal_cdf: first,
        kmax_used,
    })
}

/// One-sided tail frequencies over a path ensemble.
#[derive(Debug, Clone, Serialize)]
pub struct TailReport {
    pub paths: usize,
    /// (n, empirical frequency of >= n extrema in [-1,1], evaluated bound)
    pub count_tail: Vec<(usize, f64, f64)>,
    /// Some adjacent slope inside [-1,1] has height below h + delta.
    pub freq_shallow_slope: f64,
    /// Two distinct (minimum, maximum) pairs have depths within delta.
    pub freq_near_degenerate: f64,
    /// Some extremum is re-approached within eps outside a beta-window.
    pub freq_reapproach: f64,
}

/// Empirical frequencies of the rare-path events entering the good-path
/// estimates, evaluated on `[-1, 1]` from paths spanning a larger window.
pub fn tail_checks(
    samples: &[BrownianSample],
    h: f64,
    delta: f64,
    beta: f64,
    eps: f64,
) -> Result<TailReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no paths supplied".into()));
    }
    let sigma = samples[0].sigma;
    let flags: Vec<(usize, bool, bool, bool)> = crate::parallel::par_map(
        samples.iter().collect::<Vec<_>>(),
        |s| {
            let ex = extract_extrema(&s.path, h).expect("positive depth scale");
            let merged = ex.merged();
            let in_unit: Vec<&(Extremum, bool)> = merged
                .iter()
                .filter(|(e, _)| (-1.0..=1.0).contains(&e.t))
                .collect();
            let count = in_unit.len();

            let mut shallow = false;
            for w in merged.windows(2) {
                let (a, b) = (&w[0].0, &w[1].0);
                if (-1.0..=1.0).contains(&a.t)
                    && (-1.0..=1.0).contains(&b.t)
                    && (a.value - b.value).abs() < h + delta
                {
                    shallow = true;
                }
            }

            let mut depths: Vec<f64> = Vec::new();
            for (e_min, is_max) in &merged {
                if *is_max || !(-1.0..=1.0).contains(&e_min.t) {
                    continue;
                }
                for (e_max, is_max2) in &merged {
                    if !is_max2 || !(-1.0..=1.0).contains(&e_max.t) {
                        continue;
                    }
                    depths.push((e_min.value - e_max.value).abs());
                }
            }
            let mut near_degenerate = false;
            for i in 0..depths.len() {
                for j in 0..i {
                    if (depths[i] - depths[j]).abs() < delta {
                        near_degenerate = true;
                    }
                }
            }

            let mut reapproach = false;
            let (ts, ys) = (s.path.abscissae(), s.path.ordinates());
            for (e, _) in &merged {
                if !(-1.0..=1.0).contains(&e.t) {
                    continue;
                }
                let idx = ts.partition_point(|&u| u < e.t);
                // Scan right to the h-departure time, looking for a return
                // within eps outside the beta-window.
                let mut scan = |dir: i64| {
                    let mut i = idx as i64;
                    loop {
                        i += dir;
                        if i < 0 || i as usize >= ts.len() {
                            break;
                        }
                        let dv = (ys[i as usize] - e.value).abs();
                        if dv >= h {
                            break;
                        }
                        if (ts[i as usize] - e.t).abs() > beta && dv < eps {
                            reapproach = true;
                            break;
                        }
                    }
                };
                scan(1);
                scan(-1);
                if reapproach {
                    break;
                }
            }
            (count, shallow, near_degenerate, reapproach)
        },
    );
    let m = samples.len() as f64;
    let mut count_tail = Vec::new();
    for n in [4usize, 8, 12, 16, 20] {
        let freq = flags.iter().filter(|f| f.0 >= n).count() as f64 / m;
        let bound = std::f64::consts::E * (1.0 + h * h / (2.0 * sigma * sigma)).powi(-(n as i32));
        count_tail.push((n, freq, bound));
    }
    Ok(TailReport {
        paths: samples.len(),
        count_tail,
        freq_shallow_slope: flags.iter().filter(|f| f.1).count() as f64 / m,
        freq_near_degenerate: flags.iter().filter(|f| f.2).count() as f64 / m,
        freq_reapproach: flags.iter().filter(|f| f.3).count() as f64 / m,
    })
}

/// Frequency of the 3-d radial process dipping below `eps` after time `t`,
/// against the reflection bound `sqrt(2) eps / sqrt(pi t)`.
pub fn bessel3_lower_tail(
    t: f64,
    eps: f64,
    horizon: f64,
    dt: f64,
    paths: usize,
    seed: u64,
) -> (f64, f64) {
    let steps = (horizon / dt).ceil() as usize;
    let start = (t / dt).ceil() as usize;
    let hits = par_map_indexed(paths, |p| {
        let mut rng = substream(seed, 10_000 + p as u64);
        let normal = Normal::new(0.0, dt.sqrt()).expect("valid normal");
        let mut w = [0.0f64; 3];
        for s in 0..steps {
            for wi in w.iter_mut() {
                *wi += normal.sample(&mut rng);
            }
            if s >= start {
                let z2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
                if z2 < eps * eps {
                    return 1usize;
                }
            }
        }
        0usize
    });
    let freq = hits.iter().sum::<usize>() as f64 / paths as f64;
    let bound = (2.0f64).sqrt() * eps / (std::f64::consts::PI * t).sqrt();
    (freq, bound)
}

/// Distributional comparison between rescaled potentials and Brownian paths.
#[derive(Debug, Clone, Serialize)]
pub struct KmtReport {
    pub n: i64,
    pub paths: usize,
    pub ks_max: KsResult,
    pub ks_depth: KsResult,
    /// Per extrema-count bucket: (count, freq potential, freq brownian, ok
    /// within three standard errors)
    pub count_buckets: Vec<(usize, f64, f64, bool)>,
    pub counts_ok: bool,
    pub accept_freq_potential: f64,
    pub accept_freq_brownian: f64,
}

/// Compare path functionals (supremum, extrema count, deepest trap) of the
/// rescaled potential ensemble against Brownian samples with the matching
/// diffusion scale, and record good-path acceptance frequencies.
pub fn kmt_diagnostic(
    law: &DisorderLaw,
    n: i64,
    m_paths: usize,
    h: f64,
    delta: f64,
    seed: u64,
) -> Result<KmtReport> {
    if m_paths < 10 {
        return Err(Error::InvalidArgument("need at least 10 paths".into()));
    }
    let sigma = law.sigma2().sqrt();
    let law = *law;
    let v_stats: Vec<(f64, usize, f64, bool)> = par_map_indexed(m_paths, |i| {
        let env = sample_environment(&law, Window::new(-n, n).unwrap(), seed + i as u64).unwrap();
        let pot = potential_of(&env).unwrap();
        let path = rescale(&pot, n).unwrap().path_on(-1.0, 1.0).unwrap();
        path_functionals(&path, h, delta)
    });
    // Matched discretization: the potential lives on a 1/n grid, so the
    // Brownian comparison paths are monitored on the same grid.
    let dt = 1.0 / n as f64;
    let b_stats: Vec<(f64, usize, f64, bool)> = par_map_indexed(m_paths, |i| {
        let s = sample_path(sigma, dt, (-1.0, 1.0), crate::rng::batch_seed(seed ^ 0xb10b, i as u64))
            .unwrap();
        path_functionals(&s.path, h, delta)
    });

    let max_v: Vec<f64> = v_stats.iter().map(|s| s.0).collect();
    let max_b: Vec<f64> = b_stats.iter().map(|s| s.0).collect();
    let depth_v: Vec<f64> = v_stats.iter().map(|s| s.2).collect();
    let depth_b: Vec<f64> = b_stats.iter().map(|s| s.2).collect();
    let ks_max = ks_two_sample(&max_v, &max_b);
    let ks_depth = ks_two_sample(&depth_v, &depth_b);

    let max_count = v_stats
        .iter()
        .chain(&b_stats)
        .map(|s| s.1)
        .max()
        .unwrap_or(0);
    let mut count_buckets = Vec::new();
    let mut counts_ok = true;
    for c in 0..=max_count {
        let pv = v_stats.iter().filter(|s| s.1 == c).count() as f64 / m_paths as f64;
        let pb = b_stats.iter().filter(|s| s.1 == c).count() as f64 / m_paths as f64;
        let pooled = 0.5 * (pv + pb);
        let se = binomial_se(pooled, m_paths) * std::f64::consts::SQRT_2;
        let ok = (pv - pb).abs() <= 3.0 * se.max(1e-9);
        if !ok {
            counts_ok = false;
        }
        count_buckets.push((c, pv, pb, ok));
    }
    let accept_v = v_stats.iter().filter(|s| s.3).count() as f64 / m_paths as f64;
    let accept_b = b_stats.iter().filter(|s| s.3).count() as f64 / m_paths as f64;
    Ok(KmtReport {
        n,
        paths: m_paths,
        ks_max,
        ks_depth,
        count_buckets,
        counts_ok,
        accept_freq_potential: accept_v,
        accept_freq_brownian: accept_b,
    })
}

fn path_functionals(path: &Path, h: f64, delta: f64) -> (f64, usize, f64, bool) {
    let (lo, hi) = path.span();
    let sup = path.max_on(lo, hi);
    let ex = extract_extrema(path, h).expect("positive depth scale");
    let count = ex.minima.len();
    let deepest = ex
        .minima
        .iter()
        .map(|m| {
            crate::extrema::depth(path, m.t, &[lo, hi]).unwrap_or(0.0)
        })
        .fold(0.0f64, f64::max);
    let accepted = good_path_certificate(path, h, delta)
        .map(|c| c.verdict.is_accepted())
        .unwrap_or(false);
    (sup, count, deepest, accepted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::simpson;

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_path(1.0, 0.01, (-2.0, 3.0), 7).unwrap();
        let b = sample_path(1.0, 0.01, (-2.0, 3.0), 7).unwrap();
        assert_eq!(a.path, b.path);
        assert_eq!(a.path.value_at(0.0), 0.0);
    }

    #[test]
    fn unit_time_variance_matches_sigma() {
        let sigma = 1.3f64;
        let n = 4000;
        let vals: Vec<f64> = (0..n)
            .map(|i| {
                let s = sample_path(sigma, 0.05, (0.0, 1.0), 1000 + i).unwrap();
                s.path.value_at(1.0)
            })
            .collect();
        let m2: Vec<f64> = vals.iter().map(|v| v * v).collect();
        let mean2 = mean(&m2);
        let se = standard_error(&m2);
        assert!(
            (mean2 - sigma * sigma).abs() <= 3.0 * se,
            "var {mean2} vs {} (se {se})",
            sigma * sigma
        );
    }

    #[test]
    fn diffusive_rescaling_preserves_extrema_counts() {
        // Counts of h-extrema match those of the 1/a-depth extrema of the
        // time-rescaled path, in distribution.
        let a = 2.0f64;
        let h = 1.0f64;
        let mut c1 = Vec::new();
        let mut c2 = Vec::new();
        for i in 0..400 {
            let s1 = sample_path(1.0, 0.002, (-4.0, 4.0), 50_000 + i).unwrap();
            let e1 = extract_extrema(&s1.path, h).unwrap();
            c1.push(e1.minima.len() as f64 + e1.maxima.len() as f64);
            // Span and step scaled by a^2, threshold by 1/a -> same law.
            let s2 = sample_path(1.0, 0.002 * a * a, (-4.0 * a * a, 4.0 * a * a), 90_000 + i)
                .unwrap();
            let e2 = extract_extrema(&s2.path, h * a).unwrap();
            c2.push(e2.minima.len() as f64 + e2.maxima.len() as f64);
        }
        let r = ks_two_sample(&c1, &c2);
        assert!(r.p_value > 0.001, "p = {}", r.p_value);
    }

    #[test]
    fn slope_heights_and_spacings_follow_the_renewal_laws() {
        let dt = statistics_grid_step(1.0, 1.0);
        let stats = slope_statistics_streamed(1.0, dt, (-25.0, 25.0), 10, 1.0, 77).unwrap();
        assert!(stats.slope_count >= 400, "{} slopes", stats.slope_count);
        assert!(stats.height_ks_pass, "height KS p = {}", stats.height_ks.p_value);
        assert!(
            (stats.spacing_mean - 1.0).abs() < 0.05,
            "spacing mean {}",
            stats.spacing_mean
        );
        assert!(stats.laplace_pass, "laplace: {:?}", stats.laplace);
    }

    #[test]
    fn insufficient_span_is_rejected() {
        let samples = vec![sample_path(1.0, 0.01, (-2.0, 2.0), 3).unwrap()];
        assert!(matches!(
            slope_statistics(&samples, 1.0),
            Err(Error::InsufficientSpan(_, _))
        ));
    }

    #[test]
    fn spacing_density_normalizes_and_vanishes_left() {
        // Quadrature oracle for the series density.
        let integral = simpson(|x| SpacingLaw::density_std(x, 200).0, 1e-9, 40.0, 40_000);
        assert!((integral - 1.0).abs() < 1e-6, "integral {integral}");
        assert_eq!(SpacingLaw::density_std(-0.5, 100).0, 0.0);
        assert_eq!(SpacingLaw::density_std(0.0, 100).0, 0.0);
        // Unit mean.
        let mean_v = simpson(|x| x * SpacingLaw::density_std(x, 200).0, 1e-9, 40.0, 40_000);
        assert!((mean_v - 1.0).abs() < 1e-6, "mean {mean_v}");
    }

    #[test]
    fn spacing_series_representations_agree_near_crossover() {
        for i in 0..=10 {
            let x = 0.4 + 0.05 * i as f64;
            assert!(SpacingLaw::dual_gap(x) < 1e-12, "x={x}");
        }
    }

    #[test]
    fn spacing_cdf_matches_density_quadrature() {
        for x in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let c = SpacingLaw::cdf_std(x, 200).0;
            let q = simpson(|u| SpacingLaw::density_std(u, 200).0, 1e-9, x, 20_000);
            assert!((c - q).abs() < 3e-6, "x={x}: {c} vs {q}");
        }
    }

    #[test]
    fn partial_mean_matches_quadrature_and_first_renewal_cdf_is_monotone() {
        for x in [0.2, 1.0, 3.0] {
            let p = SpacingLaw::partial_mean_std(x, 200).0;
            let q = simpson(|u| u * SpacingLaw::density_std(u, 200).0, 1e-9, x, 20_000);
            assert!((p - q).abs() < 3e-6, "x={x}: {p} vs {q}");
        }
        let mut prev = 0.0;
        for i in 1..=60 {
            let t = i as f64 * 0.1;
            let g = SpacingLaw::first_renewal_cdf(t, 1.0, 1.0, 200);
            assert!(g >= prev - 1e-12);
            prev = g;
        }
        assert!(prev > 0.98, "first-renewal CDF should approach 1, got {prev}");
    }

    #[test]
    fn spacing_law_grid_has_consistent_columns() {
        let grid: Vec<f64> = (1..=50).map(|i| i as f64 * 0.1).collect();
        let table = spacing_law(&grid, 1.5, 0.9, 64).unwrap();
        // Origin-slope density is the length-biased spacing density.
        let mean_x = (1.5f64 / 0.9).powi(2);
        for i in 0..grid.len() {
            let expect = grid[i] * table.density[i] / mean_x;
            assert!((table.density_origin_slope[i] - expect).abs() < 1e-12);
        }
        assert!(spacing_law(&grid, 1.0, 1.0, 5).is_err());
        assert!(spacing_law(&[0.0], 1.0, 1.0, 64).is_err());
    }

    #[test]
    fn spacing_histogram_matches_series_law() {
        let dt = statistics_grid_step(1.0, 1.0);
        let stats = slope_statistics_streamed(1.0, dt, (-25.0, 25.0), 10, 1.0, 911).unwrap();
        let r = ks_test(&stats.spacings, |x| SpacingLaw::cdf_std(x, 200).0);
        assert!(r.p_value > 0.01, "p = {}", r.p_value);
    }

    #[test]
    fn tail_frequencies_respect_the_count_bound() {
        let samples = sample_paths(1.0, 1.0 / 400.0, (-3.0, 3.0), 400, 5001).unwrap();
        let report = tail_checks(&samples, 1.0, 0.2, 0.05, 0.1).unwrap();
        for &(n, freq, bound) in &report.count_tail {
            if n >= 12 {
                let se = binomial_se(freq.max(1.0 / 400.0), 400);
                assert!(freq <= bound + 3.0 * se, "n={n}: freq {freq} bound {bound}");
            }
        }
    }

    #[test]
    fn reapproach_frequency_decreases_in_eps() {
        let samples = sample_paths(1.0, 1.0 / 400.0, (-3.0, 3.0), 300, 6002).unwrap();
        let wide = tail_checks(&samples, 1.0, 0.2, 0.05, 0.3).unwrap();
        let narrow = tail_checks(&samples, 1.0, 0.2, 0.05, 0.05).unwrap();
        assert!(narrow.freq_reapproach <= wide.freq_reapproach + 1e-12);
    }

    #[test]
    fn bessel_tail_respects_reflection_bound() {
        let (freq, bound) = bessel3_lower_tail(1.0, 0.1, 20.0, 2e-3, 2000, 9);
        let se = binomial_se(freq.max(1e-3), 2000);
        assert!(freq <= bound + 3.0 * se, "freq {freq} vs bound {bound}");
        // Shape: decreasing in eps.
        let (freq2, _) = bessel3_lower_tail(1.0, 0.05, 20.0, 2e-3, 2000, 9);
        assert!(freq2 <= freq + 1e-12);
    }

    #[test]
    fn bridge_refinement_only_reveals_extrema() {
        // Refinement adds points, so amplitudes and counts never shrink.
        for i in 0..50 {
            let s = sample_path(1.0, 1.0 / 400.0, (-2.0, 2.0), 40_000 + i).unwrap();
            let before = extract_extrema(&s.path, 1.0).unwrap().minima.len();
            let refined = refine_bridge(&s, 77 + i);
            assert_eq!(refined.dt, s.dt / 2.0);
            let after = extract_extrema(&refined.path, 1.0).unwrap().minima.len();
            assert!(after >= before, "path {i}: {after} < {before}");
        }
    }

    #[test]
    fn refinement_stability_gate_at_fine_step() {
        // At the coarse counting step a visible fraction of paths still
        // gains an extremum pair under refinement; at the statistics-grade
        // step the counts are stable on at least 99 of 100 paths.
        let coarse = refinement_stability(1.0, default_grid_step(1.0, 1.0), (-2.0, 2.0), 100, 1.0, 5).unwrap();
        let fine = refinement_stability(1.0, statistics_grid_step(1.0, 1.0), (-2.0, 2.0), 100, 1.0, 5).unwrap();
        assert!(fine >= 0.99, "fine-step stability {fine}");
        assert!(fine >= coarse - 1e-12);
    }

    #[test]
    fn kmt_functionals_agree_at_moderate_scale() {
        let law = DisorderLaw::two_point(0.3).unwrap();
        let report = kmt_diagnostic(&law, 400, 300, 1.0, 0.3, 17).unwrap();
        assert!(report.ks_max.p_value > 0.01, "max KS p = {}", report.ks_max.p_value);
        assert!(report.counts_ok);
    }
}
