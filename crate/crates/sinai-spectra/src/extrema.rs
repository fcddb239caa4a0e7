//! h-extrema of piecewise-linear paths, saddle points between site sets,
//! depth-ordered labelings of trapped minima, and the decimation procedure
//! that reproduces the same labeling bottom-up.
//!
//! A point is a trapped minimum at depth scale `h` when the path rises by at
//! least `h` on both sides before dropping below it; maxima are defined
//! symmetrically, with one-sided clauses at the interval ends. Extraction
//! runs in O(n log n): the path is reduced to its turning points and
//! sub-`h` oscillations are removed smallest-first. Interval ends are
//! trimmed one point at a time, which preserves the one-sided clauses.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BinaryHeap;

/// Continuous piecewise-linear function given by its vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    ts: Vec<f64>,
    ys: Vec<f64>,
}

impl Path {
    pub fn new(ts: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if ts.len() < 2 || ts.len() != ys.len() {
            return Err(Error::BadPath(format!(
                "need at least 2 matching vertices, got {} abscissae and {} values",
                ts.len(),
                ys.len()
            )));
        }
        if ts.iter().any(|t| !t.is_finite()) || ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::BadPath("non-finite vertex".into()));
        }
        if ts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::BadPath("abscissae must be strictly increasing".into()));
        }
        Ok(Self { ts, ys })
    }

    pub fn vertex_count(&self) -> usize {
        self.ts.len()
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.ts
    }

    pub fn ordinates(&self) -> &[f64] {
        &self.ys
    }

    pub fn span(&self) -> (f64, f64) {
        (self.ts[0], *self.ts.last().unwrap())
    }

    /// Largest vertex index with abscissa <= t.
    fn segment_of(&self, t: f64) -> usize {
        let i = self.ts.partition_point(|&u| u <= t);
        i.saturating_sub(1).min(self.ts.len() - 2)
    }

    /// Linear interpolation; `t` must lie inside the span.
    pub fn value_at(&self, t: f64) -> f64 {
        let (lo, hi) = self.span();
        debug_assert!(t >= lo && t <= hi, "abscissa {t} outside [{lo}, {hi}]");
        let i = self.segment_of(t);
        let (t0, t1) = (self.ts[i], self.ts[i + 1]);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        if t == t0 {
            return y0;
        }
        if t == t1 {
            return y1;
        }
        let s = (t - t0) / (t1 - t0);
        y0 + s * (y1 - y0)
    }

    /// Maximum over `[lo, hi]` (attained at a vertex or a clipped end).
    pub fn max_on(&self, lo: f64, hi: f64) -> f64 {
        debug_assert!(lo <= hi);
        let mut m = self.value_at(lo).max(self.value_at(hi));
        let i0 = self.ts.partition_point(|&u| u <= lo);
        let i1 = self.ts.partition_point(|&u| u < hi);
        for i in i0..i1 {
            m = m.max(self.ys[i]);
        }
        m
    }

    /// Minimum over `[lo, hi]`.
    pub fn min_on(&self, lo: f64, hi: f64) -> f64 {
        let mut m = self.value_at(lo).min(self.value_at(hi));
        let i0 = self.ts.partition_point(|&u| u <= lo);
        let i1 = self.ts.partition_point(|&u| u < hi);
        for i in i0..i1 {
            m = m.min(self.ys[i]);
        }
        m
    }

    /// Vertex indices of turning points: strict direction changes plus both
    /// ends, with equal-value runs collapsed onto their first vertex.
    fn turning_points(&self) -> Vec<usize> {
        let n = self.ts.len();
        let mut distinct = Vec::with_capacity(n);
        distinct.push(0);
        for i in 1..n {
            if self.ys[i] != self.ys[*distinct.last().unwrap()] {
                distinct.push(i);
            }
        }
        if distinct.len() == 1 {
            return distinct;
        }
        let mut turns = Vec::with_capacity(distinct.len());
        turns.push(distinct[0]);
        for w in distinct.windows(3) {
            let (a, b, c) = (self.ys[w[0]], self.ys[w[1]], self.ys[w[2]]);
            if (b > a) != (c > b) {
                turns.push(w[1]);
            }
        }
        turns.push(*distinct.last().unwrap());
        turns
    }
}

/// One extremum with its representative abscissa.
///
/// `endpoint_clause` marks maxima supported by one side only (they sit at or
/// near an interval end and may not survive an extension of the path).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub t: f64,
    pub value: f64,
    pub endpoint_clause: bool,
}

/// All h-extrema of a path, smallest representative per equivalence class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremaSet {
    pub h: f64,
    pub minima: Vec<Extremum>,
    pub maxima: Vec<Extremum>,
}

impl ExtremaSet {
    /// Minima and maxima merged in abscissa order; these alternate.
    pub fn merged(&self) -> Vec<(Extremum, bool)> {
        let mut all: Vec<(Extremum, bool)> = self
            .minima
            .iter()
            .map(|&e| (e, false))
            .chain(self.maxima.iter().map(|&e| (e, true)))
            .collect();
        all.sort_by(|a, b| a.0.t.partial_cmp(&b.0.t).unwrap());
        all
    }

    pub fn minima_abscissae(&self) -> Vec<f64> {
        self.minima.iter().map(|e| e.t).collect()
    }
}

#[derive(PartialEq)]
struct Bond {
    var: f64,
    pos: usize,
    left: usize,
    right: usize,
}

impl Eq for Bond {}

impl Ord for Bond {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Max-heap pops the smallest variation; ties pop the rightmost bond
        // so equal-valued classes keep their leftmost representative.
        other
            .var
            .partial_cmp(&self.var)
            .unwrap()
            .then_with(|| self.pos.cmp(&other.pos))
    }
}

impl PartialOrd for Bond {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

struct NodeList {
    value: Vec<f64>,
    vertex: Vec<usize>,
    prev: Vec<usize>,
    next: Vec<usize>,
    alive: Vec<bool>,
    head: usize,
    tail: usize,
}

const NIL: usize = usize::MAX;

impl NodeList {
    fn remove(&mut self, i: usize) {
        let (p, n) = (self.prev[i], self.next[i]);
        self.alive[i] = false;
        if p != NIL {
            self.next[p] = n;
        } else {
            self.head = n;
        }
        if n != NIL {
            self.prev[n] = p;
        } else {
            self.tail = p;
        }
    }
}

/// Extract all h-extrema of a path.
pub fn extract_extrema(path: &Path, h: f64) -> Result<ExtremaSet> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("depth scale must be positive, got {h}")));
    }
    let turns = path.turning_points();
    let mut nodes = NodeList {
        value: turns.iter().map(|&i| path.ordinates()[i]).collect(),
        vertex: turns.clone(),
        prev: (0..turns.len()).map(|i| if i == 0 { NIL } else { i - 1 }).collect(),
        next: (0..turns.len())
            .map(|i| if i + 1 == turns.len() { NIL } else { i + 1 })
            .collect(),
        alive: vec![true; turns.len()],
        head: 0,
        tail: turns.len().saturating_sub(1),
    };

    let mut heap = BinaryHeap::new();
    for i in 0..turns.len().saturating_sub(1) {
        heap.push(Bond {
            var: (nodes.value[i + 1] - nodes.value[i]).abs(),
            pos: nodes.vertex[i],
            left: i,
            right: i + 1,
        });
    }

    let mut cleared = turns.len() < 2;
    while let Some(bond) = heap.pop() {
        if cleared {
            break;
        }
        let (l, r) = (bond.left, bond.right);
        if !nodes.alive[l] || !nodes.alive[r] || nodes.next[l] != r {
            continue;
        }
        if bond.var >= h {
            break;
        }
        let l_is_head = l == nodes.head;
        let r_is_tail = r == nodes.tail;
        match (l_is_head, r_is_tail) {
            (true, true) => {
                // Whole path oscillates below h: no extrema at all.
                nodes.alive.iter_mut().for_each(|a| *a = false);
                cleared = true;
            }
            (true, false) => nodes.remove(l),
            (false, true) => nodes.remove(r),
            (false, false) => {
                let p = nodes.prev[l];
                let n = nodes.next[r];
                nodes.remove(l);
                nodes.remove(r);
                heap.push(Bond {
                    var: (nodes.value[n] - nodes.value[p]).abs(),
                    pos: nodes.vertex[p],
                    left: p,
                    right: n,
                });
            }
        }
    }

    let survivors: Vec<usize> = {
        let mut v = Vec::new();
        if !cleared {
            let mut i = nodes.head;
            while i != NIL {
                v.push(i);
                i = nodes.next[i];
            }
        }
        v
    };

    let mut minima = Vec::new();
    let mut maxima = Vec::new();
    if survivors.len() >= 2 {
        for (k, &s) in survivors.iter().enumerate() {
            let is_max = if k + 1 < survivors.len() {
                nodes.value[s] > nodes.value[survivors[k + 1]]
            } else {
                nodes.value[s] > nodes.value[survivors[k - 1]]
            };
            let interior = k > 0 && k + 1 < survivors.len();
            let vi = canonical_representative(path, nodes.vertex[s], h, is_max);
            let e = Extremum {
                t: path.abscissae()[vi],
                value: path.ordinates()[vi],
                endpoint_clause: !interior,
            };
            if is_max {
                maxima.push(e);
            } else if interior {
                minima.push(e);
            }
            // Boundary minima are dropped: a trapped minimum needs support
            // on both sides, which the trimmed ends cannot provide.
        }
    }
    Ok(ExtremaSet { h, minima, maxima })
}

/// Walk left from a surviving extremum to the earliest vertex of its
/// equivalence class (same value, oscillation below h in between).
fn canonical_representative(path: &Path, vi: usize, h: f64, is_max: bool) -> usize {
    let ys = path.ordinates();
    let v = ys[vi];
    let mut best = vi;
    let mut i = vi;
    while i > 0 {
        i -= 1;
        let dev = if is_max { v - ys[i] } else { ys[i] - v };
        if dev < 0.0 || dev >= h {
            break;
        }
        if ys[i] == v {
            best = i;
        }
    }
    best
}

/// Saddle abscissa and barrier value between two site sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddlePoint {
    pub t: f64,
    pub value: f64,
}

/// Lowest barrier the path must cross between `a_set` and `b_set`; the
/// reported abscissa is the smallest one attaining that barrier inside the
/// hull of the two sets.
pub fn saddle_point(path: &Path, a_set: &[f64], b_set: &[f64]) -> Result<SaddlePoint> {
    if a_set.is_empty() || b_set.is_empty() {
        return Err(Error::BadSiteSets("saddle endpoints must be nonempty".into()));
    }
    let (lo, hi) = path.span();
    for &t in a_set.iter().chain(b_set) {
        if t < lo || t > hi {
            return Err(Error::BadSiteSets(format!("abscissa {t} outside [{lo}, {hi}]")));
        }
    }
    if a_set.iter().any(|a| b_set.contains(a)) {
        return Err(Error::BadSiteSets("sets must be disjoint".into()));
    }
    let mut barrier = f64::INFINITY;
    for &a in a_set {
        for &b in b_set {
            let (l, r) = if a <= b { (a, b) } else { (b, a) };
            barrier = barrier.min(path.max_on(l, r));
        }
    }
    let hull_lo = a_set.iter().chain(b_set).cloned().fold(f64::INFINITY, f64::min);
    let hull_hi = a_set.iter().chain(b_set).cloned().fold(f64::NEG_INFINITY, f64::max);
    let t = first_hit(path, hull_lo, hull_hi, barrier)
        .expect("barrier value is attained inside the hull");
    Ok(SaddlePoint { t, value: barrier })
}

/// Smallest abscissa in `[lo, hi]` where the path attains `level`.
fn first_hit(path: &Path, lo: f64, hi: f64, level: f64) -> Option<f64> {
    let va = path.value_at(lo);
    if va == level {
        return Some(lo);
    }
    let ts = path.abscissae();
    let ys = path.ordinates();
    let mut prev_t = lo;
    let mut prev_v = va;
    let i0 = ts.partition_point(|&u| u <= lo);
    let i1 = ts.partition_point(|&u| u < hi);
    for i in i0..=i1 {
        let (t, v) = if i < i1 { (ts[i], ys[i]) } else { (hi, path.value_at(hi)) };
        if (prev_v < level && v >= level) || (prev_v > level && v <= level) {
            if v == level {
                return Some(t);
            }
            let s = (level - prev_v) / (v - prev_v);
            return Some(prev_t + s * (t - prev_t));
        }
        if v == level {
            return Some(t);
        }
        prev_t = t;
        prev_v = v;
    }
    None
}

/// Barrier height seen from `x` toward the forbidden set `s`.
pub fn depth(path: &Path, x: f64, s: &[f64]) -> Result<f64> {
    if s.contains(&x) {
        return Err(Error::SiteInForbiddenSet(x));
    }
    let saddle = saddle_point(path, &[x], s)?;
    Ok(saddle.value - path.value_at(x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected { reason: String },
}

impl Verdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Verdict::Accepted)
    }
}

/// Depth-ordered labeling of the trapped minima with separation margins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodPathCertificate {
    pub h: f64,
    pub delta: f64,
    /// Minima in decreasing trap-depth order.
    pub labeling: Vec<f64>,
    pub depths: Vec<f64>,
    pub saddles: Vec<SaddlePoint>,
    pub verdict: Verdict,
    /// Worst slack over both separation conditions; negative when rejected
    /// for insufficient separation.
    pub margin: f64,
}

impl GoodPathCertificate {
    pub fn q(&self) -> usize {
        self.labeling.len()
    }
}

fn tie_tolerance(path: &Path) -> f64 {
    let m = path.ordinates().iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    1e-12 * (1.0 + m)
}

/// Greedy depth-ordered labeling: repeatedly pick the minimum with the
/// largest barrier toward the boundary and the already-labeled minima.
fn greedy_labeling(
    path: &Path,
    minima: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<SaddlePoint>)> {
    let (lo, hi) = path.span();
    let mut anchors = vec![lo, hi];
    let mut remaining: Vec<f64> = minima.to_vec();
    let mut labeling = Vec::new();
    let mut depths = Vec::new();
    let mut saddles = Vec::new();
    while !remaining.is_empty() {
        let mut best: Option<(usize, f64, SaddlePoint)> = None;
        let mut runner_up = f64::NEG_INFINITY;
        for (i, &x) in remaining.iter().enumerate() {
            let sad = saddle_point(path, &[x], &anchors)?;
            let d = sad.value - path.value_at(x);
            match &best {
                Some((_, bd, _)) if d <= *bd => runner_up = runner_up.max(d),
                _ => {
                    if let Some((_, bd, _)) = &best {
                        runner_up = runner_up.max(*bd);
                    }
                    best = Some((i, d, sad));
                }
            }
        }
        let (i, d, sad) = best.unwrap();
        if remaining.len() > 1 && (d - runner_up).abs() < tol {
            return Err(Error::Degenerate(format!(
                "tied trap depths {d} and {runner_up} at tolerance {tol}"
            )));
        }
        let x = remaining.remove(i);
        anchors.push(x);
        labeling.push(x);
        depths.push(d);
        saddles.push(sad);
    }
    Ok((labeling, depths, saddles))
}

/// Classify a path by the separation of its trap depths.
///
/// Accepted means: every minimum is at least `h + delta` below its barrier
/// toward the other minima and the boundary, and consecutive ordered depths
/// are separated by at least `delta`.
pub fn good_path_certificate(path: &Path, h: f64, delta: f64) -> Result<GoodPathCertificate> {
    if !(h > 0.0 && delta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "h and delta must be positive, got h={h} delta={delta}"
        )));
    }
    let extrema = extract_extrema(path, h)?;
    let minima = extrema.minima_abscissae();
    if minima.is_empty() {
        return Ok(GoodPathCertificate {
            h,
            delta,
            labeling: Vec::new(),
            depths: Vec::new(),
            saddles: Vec::new(),
            verdict: Verdict::Rejected {
                reason: "no_minima".into(),
            },
            margin: f64::NEG_INFINITY,
        });
    }
    let tol = tie_tolerance(path);
    let (lo, hi) = path.span();
    let (labeling, depths, saddles) = match greedy_labeling(path, &minima, tol) {
        Ok(ok) => ok,
        Err(Error::Degenerate(reason)) => {
            return Ok(GoodPathCertificate {
                h,
                delta,
                labeling: Vec::new(),
                depths: Vec::new(),
                saddles: Vec::new(),
                verdict: Verdict::Rejected {
                    reason: format!("degenerate: {reason}"),
                },
                margin: f64::NEG_INFINITY,
            })
        }
        Err(e) => return Err(e),
    };

    // Separation away from everything else, for every minimum.
    let mut margin = f64::INFINITY;
    let mut threshold_ok = true;
    for &x in &minima {
        let mut others: Vec<f64> = minima.iter().cloned().filter(|&y| y != x).collect();
        others.push(lo);
        others.push(hi);
        let d = depth(path, x, &others)?;
        let slack = d - (h + delta);
        margin = margin.min(slack);
        if slack < 0.0 {
            threshold_ok = false;
        }
    }
    // Separation between consecutive ordered depths.
    let mut order_ok = true;
    let mut degenerate = false;
    for k in 0..depths.len().saturating_sub(1) {
        let gap = depths[k] - depths[k + 1];
        margin = margin.min(gap - delta);
        if (gap - delta).abs() < tol && gap < delta {
            // Knife-edge below delta counts as a failure, not a tie.
            order_ok = false;
        } else if gap < delta {
            order_ok = false;
        }
        if gap.abs() < tol {
            degenerate = true;
        }
    }
    let verdict = if degenerate {
        Verdict::Rejected {
            reason: "degenerate: tied depths".into(),
        }
    } else if !threshold_ok {
        Verdict::Rejected {
            reason: "below_threshold: a trap is shallower than h + delta".into(),
        }
    } else if !order_ok {
        Verdict::Rejected {
            reason: "insufficient_separation: consecutive depths closer than delta".into(),
        }
    } else {
        Verdict::Accepted
    };
    Ok(GoodPathCertificate {
        h,
        delta,
        labeling,
        depths,
        saddles,
        verdict,
        margin,
    })
}

/// One decimation stage: the removed bond, the minimum it contained, the
/// variation that triggered the removal, and the surviving extrema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgStage {
    pub bond: (f64, f64),
    pub decimated_minimum: f64,
    pub decimated_value: f64,
    pub smallest_variation: f64,
    pub surviving: Vec<f64>,
}

/// Transcript of the smallest-variation decimation of a path's extrema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgTranscript {
    pub h: f64,
    pub stages: Vec<RgStage>,
}

impl RgTranscript {
    /// Decimated minima in removal order.
    pub fn minima_order(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.decimated_minimum).collect()
    }

    pub fn variations(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.smallest_variation).collect()
    }
}

/// Remove the shallowest valley repeatedly until a single well remains.
///
/// Each stage deletes the adjacent extrema pair with the smallest value
/// variation; a tie among variations makes the stage ill-defined and is
/// reported as degenerate.
pub fn rg_decimation(path: &Path, h: f64) -> Result<RgTranscript> {
    let extrema = extract_extrema(path, h)?;
    let q = extrema.minima.len();
    if q == 0 {
        return Err(Error::NoMinima);
    }
    let tol = tie_tolerance(path);
    let mut pts: Vec<(f64, f64)> = extrema.merged().iter().map(|(e, _)| (e.t, e.value)).collect();
    let mut stages = Vec::with_capacity(q);
    for _ in 0..q {
        let mut k_min = 0usize;
        let mut best = f64::INFINITY;
        for k in 0..pts.len() - 1 {
            let var = (pts[k + 1].1 - pts[k].1).abs();
            if var < best {
                best = var;
                k_min = k;
            }
        }
        for k in 0..pts.len() - 1 {
            let var = (pts[k + 1].1 - pts[k].1).abs();
            if k != k_min && (var - best).abs() < tol {
                return Err(Error::Degenerate(format!(
                    "tied variations {best} and {var} at tolerance {tol}"
                )));
            }
        }
        let (l, r) = (pts[k_min], pts[k_min + 1]);
        let (y, yv) = if l.1 < r.1 { l } else { r };
        pts.drain(k_min..=k_min + 1);
        stages.push(RgStage {
            bond: (l.0, r.0),
            decimated_minimum: y,
            decimated_value: yv,
            smallest_variation: best,
            surviving: pts.iter().map(|p| p.0).collect(),
        });
    }
    Ok(RgTranscript { h, stages })
}

/// Check that greedy labeling and decimation agree: the k-th deepest
/// minimum is the (q-k+1)-th decimated one, with matching depths.
pub fn verify_rg_equivalence(path: &Path, h: f64) -> Result<bool> {
    let extrema = extract_extrema(path, h)?;
    let minima = extrema.minima_abscissae();
    if minima.is_empty() {
        return Err(Error::NoMinima);
    }
    let tol = tie_tolerance(path);
    let (labeling, depths, _) = greedy_labeling(path, &minima, tol)?;
    let rg = rg_decimation(path, h)?;
    let q = labeling.len();
    let rg_minima = rg.minima_order();
    let rg_vars = rg.variations();
    for k in 0..q {
        if labeling[k] != rg_minima[q - k - 1] {
            return Ok(false);
        }
        if (depths[k] - rg_vars[q - k - 1]).abs() > 1e-12 * (1.0 + depths[k].abs()) {
            return Ok(false);
        }
    }
    Ok(true)
}
