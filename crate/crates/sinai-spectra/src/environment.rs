//! Random environments, their potential landscape, diffusive rescaling and
//! the reversible measure of the induced chain.
//!
//! An environment is a family of jump-right probabilities `omega_x` on an
//! integer window, bounded away from 0 and 1 by an ellipticity margin
//! `kappa`. The potential accumulates `ln((1-omega_x)/omega_x)` increments
//! with `V(0) = 0`, and the chain with those jump probabilities is
//! reversible for `mu(x) = exp(-V(x)) / omega_x`.
//!
//! Sampling draws each site from its own seed stream, so enlarging the
//! window never changes the values already sampled.

use crate::error::{Error, Result};
use crate::extrema::Path;
use crate::numeric::simpson;
use crate::rng::{site_stream, substream};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufWriter, Write as _};
use std::path::Path as FsPath;

/// Inclusive integer interval of lattice sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
}

impl Window {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if lo > hi {
            return Err(Error::BadWindow { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: i64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }

    fn offset(&self, x: i64) -> usize {
        debug_assert!(self.contains(x), "site {x} outside window");
        (x - self.lo) as usize
    }
}

/// Site disorder law, symmetric under `omega -> 1 - omega`.
///
/// The symmetry forces the log-ratio `ln(omega/(1-omega))` to be centered,
/// which is the recurrent regime for the walk. `sigma2` is the variance of
/// that log-ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DisorderLaw {
    /// `omega in {p, 1-p}` with probability 1/2 each.
    TwoPoint { p: f64 },
    /// `omega` uniform on `[kappa, 1-kappa]`.
    SymmetricUniform { kappa: f64 },
}

impl DisorderLaw {
    pub fn two_point(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidLaw(format!("two-point p must be in (0,1), got {p}")));
        }
        Ok(Self::TwoPoint { p })
    }

    pub fn symmetric_uniform(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 0.5) {
            return Err(Error::InvalidKappa(kappa));
        }
        Ok(Self::SymmetricUniform { kappa })
    }

    /// Ellipticity margin guaranteed by the law, strictly inside (0, 1/2).
    pub fn ellipticity(&self) -> f64 {
        match *self {
            Self::TwoPoint { p } => p.min(1.0 - p).min(0.5 - 1e-12),
            Self::SymmetricUniform { kappa } => kappa,
        }
    }

    /// Variance of `ln(omega/(1-omega))`.
    ///
    /// Closed form for the two-point law; high-order quadrature for the
    /// uniform family.
    pub fn sigma2(&self) -> f64 {
        match *self {
            Self::TwoPoint { p } => {
                let r = ((1.0 - p) / p).ln();
                r * r
            }
            Self::SymmetricUniform { kappa } => {
                let f = |w: f64| {
                    let r = (w / (1.0 - w)).ln();
                    r * r
                };
                simpson(f, kappa, 1.0 - kappa, 1 << 20) / (1.0 - 2.0 * kappa)
            }
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            Self::TwoPoint { p } => {
                if rng.gen::<bool>() {
                    p
                } else {
                    1.0 - p
                }
            }
            Self::SymmetricUniform { kappa } => rng.gen_range(kappa..=1.0 - kappa),
        }
    }
}

/// Jump-right probabilities on a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    window: Window,
    omega: Vec<f64>,
    kappa: f64,
    seed: u64,
}

impl Environment {
    pub fn new(window: Window, omega: Vec<f64>, kappa: f64, seed: u64) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 0.5) {
            return Err(Error::InvalidKappa(kappa));
        }
        if omega.len() != window.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} omega values, got {}",
                window.len(),
                omega.len()
            )));
        }
        let slack = 1e-12;
        for (i, &w) in omega.iter().enumerate() {
            if !(w >= kappa - slack && w <= 1.0 - kappa + slack) {
                return Err(Error::InvalidArgument(format!(
                    "omega at site {} is {} outside [{kappa}, {}]",
                    window.lo + i as i64,
                    w,
                    1.0 - kappa
                )));
            }
        }
        Ok(Self {
            window,
            omega,
            kappa,
            seed,
        })
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Jump-right probability at `x`. Panics outside the window.
    #[inline]
    pub fn omega(&self, x: i64) -> f64 {
        self.omega[self.window.offset(x)]
    }
}

/// Draw i.i.d. jump probabilities on `window`.
///
/// Each site uses its own generator stream derived from `seed`, so two
/// windows sampled from the same seed agree on their overlap.
pub fn sample_environment(law: &DisorderLaw, window: Window, seed: u64) -> Result<Environment> {
    let omega: Vec<f64> = window
        .iter()
        .map(|x| law.draw(&mut substream(seed, site_stream(x))))
        .collect();
    Environment::new(window, omega, law.ellipticity(), seed)
}

/// Potential landscape, anchored at `V(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    window: Window,
    values: Vec<f64>,
}

impl Potential {
    pub fn new(window: Window, values: Vec<f64>) -> Result<Self> {
        if values.len() != window.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} potential values, got {}",
                window.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite potential value".into()));
        }
        Ok(Self { window, values })
    }

    pub fn window(&self) -> Window {
        self.window
    }

    #[inline]
    pub fn value(&self, x: i64) -> f64 {
        self.values[self.window.offset(x)]
    }

    /// Increment `V(x) - V(x-1)`; defined for `x` in `(lo, hi]`.
    #[inline]
    pub fn increment(&self, x: i64) -> f64 {
        self.value(x) - self.value(x - 1)
    }

    /// Piecewise-linear interpolation through the integer lattice values.
    pub fn to_path(&self) -> Path {
        let ts: Vec<f64> = self.window.iter().map(|x| x as f64).collect();
        Path::new(ts, self.values.clone()).expect("lattice abscissae are strictly increasing")
    }
}

/// Accumulate the potential of an environment. Requires `0` in the window.
pub fn potential_of(env: &Environment) -> Result<Potential> {
    let w = env.window();
    if !w.contains(0) {
        return Err(Error::BadWindow { lo: w.lo, hi: w.hi });
    }
    let mut values = vec![0.0; w.len()];
    let zero = w.offset(0);
    // Forward from the origin: V(x) = V(x-1) + ln((1-omega_x)/omega_x).
    for x in 1..=w.hi {
        let step = ((1.0 - env.omega(x)) / env.omega(x)).ln();
        values[w.offset(x)] = values[w.offset(x - 1)] + step;
    }
    // Backward: V(x-1) = V(x) - ln((1-omega_x)/omega_x).
    for x in (w.lo + 1..=0).rev() {
        let step = ((1.0 - env.omega(x)) / env.omega(x)).ln();
        values[w.offset(x - 1)] = values[w.offset(x)] - step;
    }
    let _ = zero;
    Potential::new(w, values)
}

/// Recover jump probabilities from potential increments.
///
/// The result lives on `(lo, hi]` since the increment at the left edge is
/// undefined. Rejects any increment beyond the ellipticity bound, naming
/// the offending site.
pub fn environment_of(potential: &Potential, kappa: f64) -> Result<Environment> {
    if !(kappa > 0.0 && kappa < 0.5) {
        return Err(Error::InvalidKappa(kappa));
    }
    let w = potential.window();
    if w.len() < 2 {
        return Err(Error::BadWindow { lo: w.lo, hi: w.hi });
    }
    let bound = ((1.0 - kappa) / kappa).ln();
    let slack = 1e-12 * (1.0 + bound);
    let mut omega = Vec::with_capacity(w.len() - 1);
    for x in w.lo + 1..=w.hi {
        let d = potential.increment(x);
        if d.abs() > bound + slack {
            return Err(Error::EllipticityViolation {
                site: x,
                increment: d,
                bound,
            });
        }
        omega.push(1.0 / (1.0 + d.exp()));
    }
    Environment::new(Window::new(w.lo + 1, w.hi)?, omega, kappa, 0)
}

/// Potential on the refined lattice, shrunk diffusively.
///
/// Site `k` of the base potential sits at abscissa `k/N` with value
/// `V(k)/sqrt(N)`, and the function is extended linearly in between.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledPotential {
    n: i64,
    window: Window,
    values: Vec<f64>,
}

impl RescaledPotential {
    pub fn scale(&self) -> i64 {
        self.n
    }

    /// Base-lattice window carried over from the potential.
    pub fn site_window(&self) -> Window {
        self.window
    }

    /// Abscissa of base site `k`.
    pub fn abscissa(&self, k: i64) -> f64 {
        k as f64 / self.n as f64
    }

    /// Value at base site `k`, i.e. at abscissa `k/N`.
    #[inline]
    pub fn value_at_site(&self, k: i64) -> f64 {
        self.values[self.window.offset(k)]
    }

    /// Piecewise-linear evaluation at an arbitrary abscissa.
    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.n as f64;
        let u = t * n;
        let k = u.floor() as i64;
        let k = k.clamp(self.window.lo, self.window.hi - 1);
        let s = u - k as f64;
        (1.0 - s) * self.value_at_site(k) + s * self.value_at_site(k + 1)
    }

    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        self.abscissa(self.window.lo) <= lo && hi <= self.abscissa(self.window.hi)
    }

    /// Nearest base site to abscissa `t`.
    pub fn site_of(&self, t: f64) -> i64 {
        (t * self.n as f64).round() as i64
    }

    /// Path through every lattice vertex.
    pub fn to_path(&self) -> Path {
        let ts: Vec<f64> = self.window.iter().map(|k| self.abscissa(k)).collect();
        Path::new(ts, self.values.clone()).expect("lattice abscissae are strictly increasing")
    }

    /// Path restricted to `[lo, hi]`, which must be covered by the window.
    pub fn path_on(&self, lo: f64, hi: f64) -> Result<Path> {
        if !self.covers(lo, hi) {
            return Err(Error::WindowTooSmall(format!(
                "rescaled window [{}, {}] does not cover [{lo}, {hi}]",
                self.abscissa(self.window.lo),
                self.abscissa(self.window.hi)
            )));
        }
        let n = self.n as f64;
        let k_lo = (lo * n).ceil() as i64;
        let k_hi = (hi * n).floor() as i64;
        let mut ts = Vec::new();
        let mut ys = Vec::new();
        if (k_lo as f64) / n > lo {
            ts.push(lo);
            ys.push(self.value_at(lo));
        }
        for k in k_lo..=k_hi {
            ts.push(self.abscissa(k));
            ys.push(self.value_at_site(k));
        }
        if (k_hi as f64) / n < hi {
            ts.push(hi);
            ys.push(self.value_at(hi));
        }
        Path::new(ts, ys)
    }

    /// Lipschitz constant of the rescaled path under ellipticity `kappa`.
    pub fn lipschitz_bound(n: i64, kappa: f64) -> f64 {
        (n as f64).sqrt() * ((1.0 - kappa) / kappa).ln()
    }
}

/// Shrink a potential onto the lattice `Z/N`.
pub fn rescale(potential: &Potential, n: i64) -> Result<RescaledPotential> {
    if n < 1 {
        return Err(Error::InvalidArgument(format!("scale must be >= 1, got {n}")));
    }
    let sqrt_n = (n as f64).sqrt();
    let values = potential
        .window()
        .iter()
        .map(|k| potential.value(k) / sqrt_n)
        .collect();
    Ok(RescaledPotential {
        n,
        window: potential.window(),
        values,
    })
}

/// Reversible weights `mu(x) = exp(-V(x)) / omega_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReversibleMeasure {
    window: Window,
    log_weights: Vec<f64>,
}

impl ReversibleMeasure {
    pub fn window(&self) -> Window {
        self.window
    }

    #[inline]
    pub fn weight(&self, x: i64) -> f64 {
        self.log_weight(x).exp()
    }

    #[inline]
    pub fn log_weight(&self, x: i64) -> f64 {
        self.log_weights[self.window.offset(x)]
    }
}

/// Build the reversible measure of an environment.
pub fn reversible_measure(env: &Environment) -> Result<ReversibleMeasure> {
    let potential = potential_of(env)?;
    let w = env.window();
    let log_weights = w
        .iter()
        .map(|x| -potential.value(x) - env.omega(x).ln())
        .collect();
    Ok(ReversibleMeasure {
        window: w,
        log_weights,
    })
}

/// Write an environment as a `kappa=` header plus `x,omega` lines.
pub fn write_environment(path: &FsPath, env: &Environment) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "kappa={}", env.kappa())?;
    for x in env.window().iter() {
        writeln!(out, "{},{}", x, env.omega(x))?;
    }
    Ok(())
}

/// Read an environment written by [`write_environment`].
pub fn read_environment(path: &FsPath) -> Result<Environment> {
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty environment file".into()))??;
    let kappa: f64 = header
        .strip_prefix("kappa=")
        .ok_or_else(|| Error::Parse(format!("expected kappa= header, got {header:?}")))?
        .trim()
        .parse()
        .map_err(|e| Error::Parse(format!("bad kappa: {e}")))?;
    let mut sites = Vec::new();
    let mut omega = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (x, w) = split_pair(&line)?;
        sites.push(x as i64);
        omega.push(w);
    }
    if sites.is_empty() {
        return Err(Error::Parse("environment file has no sites".into()));
    }
    let window = Window::new(sites[0] as i64, *sites.last().unwrap() as i64)?;
    if !sites
        .iter()
        .enumerate()
        .all(|(i, &x)| x == window.lo + i as i64)
    {
        return Err(Error::Parse("sites must be consecutive and sorted".into()));
    }
    Environment::new(window, omega, kappa, 0)
}

/// Write a potential as `x,V` lines.
pub fn write_potential(path: &FsPath, potential: &Potential) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for x in potential.window().iter() {
        writeln!(out, "{},{}", x, potential.value(x))?;
    }
    Ok(())
}

/// Read a potential written by [`write_potential`].
pub fn read_potential(path: &FsPath) -> Result<Potential> {
    let file = std::fs::File::open(path)?;
    let mut sites = Vec::new();
    let mut values = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (x, v) = split_pair(&line)?;
        sites.push(x);
        values.push(v);
    }
    if sites.is_empty() {
        return Err(Error::Parse("potential file has no sites".into()));
    }
    let window = Window::new(sites[0] as i64, *sites.last().unwrap() as i64)?;
    Potential::new(window, values)
}

fn split_pair(line: &str) -> Result<(i64, f64)> {
    let mut parts = line.splitn(2, ',');
    let x = parts
        .next()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .ok_or_else(|| Error::Parse(format!("bad site in line {line:?}")))?;
    let v = parts
        .next()
        .and_then(|s| s.trim().parse::<f64>().ok())
        .ok_or_else(|| Error::Parse(format!("bad value in line {line:?}")))?;
    Ok((x, v))
}
