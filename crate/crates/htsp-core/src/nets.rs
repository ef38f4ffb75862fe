//! Nested separated nets over a finite point set, with per-point minimax
//! line fits, flatness coefficients, flat pairs, and the variation excess
//! of chains between them.

use crate::geom::{self, dist, FitMode, GeomError, Line, Point};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum NetsError {
    #[error("empty input")]
    EmptyInput,
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("no root: {0}")]
    NoRoot(String),
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

/// Scale and flatness parameters shared by the whole construction.
#[derive(Clone, Debug)]
pub struct Params {
    /// Mass exponent, s >= 1.
    pub s: f64,
    /// Lower bound on the scale ratio rho_{k+1}/rho_k.
    pub xi1: f64,
    /// Upper bound on the scale ratio.
    pub xi2: f64,
    /// Net constant C*; parents sit within C* rho_{k+1} r0.
    pub cstar: f64,
    /// Flatness cutoff in (0, 1/16].
    pub alpha0: f64,
    pub fit: FitMode,
}

impl Params {
    /// Parameters for a fixed scale ratio; alpha0 defaults to the largest
    /// cutoff kept safe by both the spacing and the tube threshold.
    pub fn new(s: f64, ratio: f64) -> Result<Params, NetsError> {
        if !(s >= 1.0) {
            return Err(NetsError::BadParameter(format!("s = {s} must be >= 1")));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(NetsError::BadParameter(format!(
                "ratio = {ratio} must lie in (0,1)"
            )));
        }
        let cstar = 2.0_f64.max(1.0 / ratio);
        let a1 = alpha_one(cstar, ratio, ratio);
        let alpha0 = match tube_threshold(s, cstar, ratio, ratio) {
            Ok(eps) => a1.min(eps),
            Err(_) => a1,
        };
        Ok(Params {
            s,
            xi1: ratio,
            xi2: ratio,
            cstar,
            alpha0,
            fit: FitMode::Refine,
        })
    }

    pub fn with_alpha0(mut self, alpha0: f64) -> Params {
        self.alpha0 = alpha0;
        self
    }

    pub fn with_fit(mut self, fit: FitMode) -> Params {
        self.fit = fit;
        self
    }

    /// A* = C*/(1 - xi2); radius factor for windows and edge lengths.
    pub fn astar(&self) -> f64 {
        self.cstar / (1.0 - self.xi2)
    }
}

/// Nested nets V_0 subset of V_1 subset of ... over a point cloud. Levels
/// hold indices into `points`; rho[k] is the relative scale with rho[0] = 1.
#[derive(Clone, Debug)]
pub struct NetHierarchy {
    pub points: Vec<Point>,
    pub levels: Vec<Vec<usize>>,
    pub rho: Vec<f64>,
    pub r0: f64,
    pub x0: usize,
    pub params: Params,
}

impl NetHierarchy {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, k: usize) -> &[usize] {
        &self.levels[k]
    }

    pub fn point(&self, i: usize) -> &Point {
        &self.points[i]
    }

    /// rho_k * r0, the separation scale of V_k.
    pub fn scale(&self, k: usize) -> f64 {
        self.rho[k] * self.r0
    }
}

#[derive(Clone, Debug, Default)]
pub struct NetOptions {
    /// Override for r0 (default: diameter of the input, 1 if degenerate).
    pub r0: Option<f64>,
    /// Override for the base point index (default: 0).
    pub x0: Option<usize>,
    /// Farthest-point insertion instead of input-order sweeps.
    pub farthest_point: bool,
}

/// Greedy maximal separated nets: V_{k+1} extends V_k by sweeping the input
/// (or repeatedly taking the farthest remaining point) and admitting points
/// at distance >= rho_{k+1} r0 from everything chosen.
pub fn build_nets(
    e: &[Point],
    depth: usize,
    params: &Params,
) -> Result<NetHierarchy, NetsError> {
    build_nets_opt(e, depth, params, &NetOptions::default())
}

pub fn build_nets_opt(
    e: &[Point],
    depth: usize,
    params: &Params,
    opts: &NetOptions,
) -> Result<NetHierarchy, NetsError> {
    if e.is_empty() {
        return Err(NetsError::EmptyInput);
    }
    let dim = e[0].len();
    if e.iter().any(|p| p.len() != dim) {
        return Err(GeomError::DimensionMismatch(dim).into());
    }
    let x0 = opts.x0.unwrap_or(0);
    if x0 >= e.len() {
        return Err(NetsError::BadParameter(format!("x0 = {x0} out of range")));
    }
    let d = geom::diameter(e);
    let r0 = opts.r0.unwrap_or(if d > 0.0 { d } else { 1.0 });
    if !(r0 > 0.0) {
        return Err(NetsError::BadParameter("r0 must be positive".into()));
    }
    let ratio = params.xi2;
    let mut rho = Vec::with_capacity(depth + 1);
    rho.push(1.0);
    for _ in 0..depth {
        rho.push(rho.last().unwrap() * ratio);
    }

    let sweep: Vec<usize> = std::iter::once(x0)
        .chain((0..e.len()).filter(|&i| i != x0))
        .collect();
    let mut levels: Vec<Vec<usize>> = Vec::with_capacity(depth + 1);
    let mut current: Vec<usize> = Vec::new();
    for r in rho.iter().take(depth + 1) {
        let sep = r * r0;
        if opts.farthest_point {
            loop {
                let mut best: Option<(f64, usize)> = None;
                for &i in &sweep {
                    if current.contains(&i) {
                        continue;
                    }
                    let dmin = current
                        .iter()
                        .map(|&j| dist(&e[i], &e[j]))
                        .fold(f64::INFINITY, f64::min);
                    if dmin >= sep && best.map_or(true, |(b, _)| dmin > b) {
                        best = Some((dmin, i));
                    }
                }
                match best {
                    Some((_, i)) => current.push(i),
                    None => break,
                }
            }
        } else {
            for &i in &sweep {
                if current.contains(&i) {
                    continue;
                }
                if current.iter().all(|&j| dist(&e[i], &e[j]) >= sep) {
                    current.push(i);
                }
            }
        }
        levels.push(current.clone());
    }
    Ok(NetHierarchy {
        points: e.to_vec(),
        levels,
        rho,
        r0,
        x0,
        params: params.clone(),
    })
}

/// Nets for the flat-continuum pipeline: V_0 is a diameter pair, the scale
/// ratio is 1/2, C* = 2, and alpha0 = 1/16. Later levels extend greedily.
pub fn build_flat_nets(e: &[Point], depth: usize, s: f64) -> Result<NetHierarchy, NetsError> {
    if e.len() < 2 {
        return Err(NetsError::BadParameter(
            "flat nets need at least two points".into(),
        ));
    }
    let dim = e[0].len();
    if e.iter().any(|p| p.len() != dim) {
        return Err(GeomError::DimensionMismatch(dim).into());
    }
    let (i0, i1) = geom::far_pair(e).unwrap();
    let d = dist(&e[i0], &e[i1]);
    if !(d > 0.0) {
        return Err(NetsError::BadParameter(
            "flat nets need a nondegenerate diameter".into(),
        ));
    }
    let params = Params::new(s, 0.5)?.with_alpha0(1.0 / 16.0);
    let mut rho = Vec::with_capacity(depth + 1);
    rho.push(1.0);
    for _ in 0..depth {
        rho.push(rho.last().unwrap() * 0.5);
    }
    let mut levels = Vec::with_capacity(depth + 1);
    let mut current = vec![i0, i1];
    levels.push(current.clone());
    for r in rho.iter().skip(1) {
        let sep = r * d;
        for i in 0..e.len() {
            if current.contains(&i) {
                continue;
            }
            if current.iter().all(|&j| dist(&e[i], &e[j]) >= sep) {
                current.push(i);
            }
        }
        levels.push(current.clone());
    }
    Ok(NetHierarchy {
        points: e.to_vec(),
        levels,
        rho,
        r0: d,
        x0: i0,
        params,
    })
}

/// Line fits for the flat-continuum pipeline. The window at v in V_k is the
/// whole sample inside the closed ball of radius min(120 rho_k, 1) r0, the
/// flatness number is the relative width of that ball, and alpha is the same
/// width rescaled by rho_{k+1} r0. Returns the fit table, the largest ball
/// width seen, and its witness (point index, radius, width).
pub fn flat_fit_lines(
    h: &NetHierarchy,
    mode: FitMode,
) -> Result<(LineFitTable, f64, Option<(usize, f64, f64)>), NetsError> {
    let mut table = Vec::with_capacity(h.depth());
    let mut beta_max = 0.0f64;
    let mut witness = None;
    for k in 0..h.depth() {
        let radius = (120.0 * h.rho[k]).min(1.0) * h.r0;
        let tol = 1e-12 * radius;
        let mut map = HashMap::new();
        for &v in h.level(k) {
            let pts: Vec<Point> = h
                .points
                .iter()
                .filter(|p| dist(h.point(v), p) <= radius + tol)
                .cloned()
                .collect();
            let (line, maxd) = geom::minimax_line(&pts, mode)?;
            let beta = maxd / (2.0 * radius);
            if beta > beta_max {
                beta_max = beta;
                witness = Some((v, radius, beta));
            }
            let window: Vec<usize> = h
                .level(k + 1)
                .iter()
                .copied()
                .filter(|&w| dist(h.point(v), h.point(w)) <= radius + tol)
                .collect();
            map.insert(
                v,
                LineFit {
                    line,
                    alpha: maxd / h.scale(k + 1),
                    window,
                },
            );
        }
        table.push(map);
    }
    Ok((table, beta_max, witness))
}

/// Structural checks on the hierarchy; returns human-readable violations.
pub fn validate_nets(h: &NetHierarchy) -> Vec<String> {
    let mut bad = Vec::new();
    let p = &h.params;
    if (h.rho[0] - 1.0).abs() > 1e-12 {
        bad.push("rho[0] != 1".into());
    }
    for k in 0..h.rho.len() - 1 {
        let q = h.rho[k + 1] / h.rho[k];
        if q < p.xi1 - 1e-12 || q > p.xi2 + 1e-12 {
            bad.push(format!("rho ratio at level {k} is {q}, outside [xi1, xi2]"));
        }
    }
    for &v in &h.levels[0] {
        if dist(h.point(v), h.point(h.x0)) > p.cstar * h.r0 + 1e-9 * h.r0 {
            bad.push(format!("level-0 point {v} escapes the base ball"));
        }
    }
    for k in 0..h.levels.len() {
        let lv = &h.levels[k];
        if k + 1 < h.levels.len() {
            let next = &h.levels[k + 1];
            if !lv.iter().all(|v| next.contains(v)) {
                bad.push(format!("V_{k} not contained in V_{}", k + 1));
            }
        }
        let sep = h.scale(k);
        for i in 0..lv.len() {
            for j in i + 1..lv.len() {
                if dist(h.point(lv[i]), h.point(lv[j])) < sep * (1.0 - 1e-9) {
                    bad.push(format!(
                        "points {} and {} of V_{k} are under-separated",
                        lv[i], lv[j]
                    ));
                }
            }
        }
        for i in 0..h.points.len() {
            let dmin = lv
                .iter()
                .map(|&v| dist(h.point(i), h.point(v)))
                .fold(f64::INFINITY, f64::min);
            if dmin > sep * (1.0 + 1e-9) {
                bad.push(format!("point {i} is uncovered at level {k}"));
            }
        }
        if k > 0 {
            let prev = &h.levels[k - 1];
            let reach = p.cstar * h.scale(k) * (1.0 + 1e-9);
            for &v in lv {
                let dmin = prev
                    .iter()
                    .map(|&w| dist(h.point(v), h.point(w)))
                    .fold(f64::INFINITY, f64::min);
                if dmin > reach {
                    bad.push(format!("point {v} of V_{k} has no nearby parent"));
                }
            }
        }
    }
    bad
}

/// Minimax line fit around one net point, with the flatness coefficient
/// alpha = (max distance over the window) / (rho_{k+1} r0).
#[derive(Clone, Debug)]
pub struct LineFit {
    pub line: Line,
    pub alpha: f64,
    /// Point indices of V_{k+1} inside the closed window ball.
    pub window: Vec<usize>,
}

/// fits[k][v] for v in V_k, k < depth; windows are closed balls of radius
/// 30 A* rho_k r0 intersected with V_{k+1}.
pub type LineFitTable = Vec<HashMap<usize, LineFit>>;

pub fn fit_lines(h: &NetHierarchy, mode: FitMode) -> Result<LineFitTable, NetsError> {
    let astar = h.params.astar();
    let mut table = Vec::with_capacity(h.depth());
    for k in 0..h.depth() {
        let radius = 30.0 * astar * h.scale(k);
        let tol = 1e-12 * radius.max(1.0);
        let mut map = HashMap::new();
        for &v in h.level(k) {
            let window: Vec<usize> = h
                .level(k + 1)
                .iter()
                .copied()
                .filter(|&w| dist(h.point(v), h.point(w)) <= radius + tol)
                .collect();
            let pts: Vec<Point> = window.iter().map(|&w| h.point(w).clone()).collect();
            let (line, maxd) = geom::minimax_line(&pts, mode)?;
            map.insert(
                v,
                LineFit {
                    line,
                    alpha: maxd / h.scale(k + 1),
                    window,
                },
            );
        }
        table.push(map);
    }
    Ok(table)
}

/// Indices sorted by position along the line (ties by index).
pub fn order_points(pts: &[Point], ids: &[usize], line: &Line) -> Vec<usize> {
    let mut v: Vec<usize> = ids.to_vec();
    v.sort_by(|&a, &b| {
        line.coord(&pts[a])
            .partial_cmp(&line.coord(&pts[b]))
            .unwrap()
            .then(a.cmp(&b))
    });
    v
}

/// Flat pairs of V_k: alpha_{k,v} < alpha0, separation in
/// [rho_k r0, 14 A* rho_k r0), and v' the first point of the open ball on
/// its side of the fitted line at v. Unordered, deduplicated, sorted.
pub fn flat_pairs(
    h: &NetHierarchy,
    fits: &LineFitTable,
    k: usize,
) -> Vec<(usize, usize)> {
    let astar = h.params.astar();
    let lo = h.scale(k);
    let hi = 14.0 * astar * h.scale(k);
    let mut out: Vec<(usize, usize)> = Vec::new();
    for &v in h.level(k) {
        let fit = &fits[k][&v];
        if !(fit.alpha < h.params.alpha0) {
            continue;
        }
        let cv = fit.line.coord(h.point(v));
        for side in [-1.0, 1.0] {
            let mut first: Option<(f64, usize)> = None;
            for &w in h.level(k) {
                if w == v || dist(h.point(v), h.point(w)) >= hi {
                    continue;
                }
                let dc = fit.line.coord(h.point(w)) - cv;
                if dc * side <= 0.0 {
                    continue;
                }
                let key = dc * side;
                if first.map_or(true, |(b, _)| key < b) {
                    first = Some((key, w));
                }
            }
            if let Some((_, w)) = first {
                if dist(h.point(v), h.point(w)) >= lo {
                    let pair = (v.min(w), v.max(w));
                    if !out.contains(&pair) {
                        out.push(pair);
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// Ordered flat-pair membership: alpha_{k,v} < alpha0, separation in
/// [rho_k r0, 14 A* rho_k r0), and w first on its side of the line at v.
pub fn is_flat_pair(
    h: &NetHierarchy,
    fits: &LineFitTable,
    k: usize,
    v: usize,
    w: usize,
) -> bool {
    let fit = &fits[k][&v];
    if !(fit.alpha < h.params.alpha0) || v == w {
        return false;
    }
    let d = dist(h.point(v), h.point(w));
    let hi = 14.0 * h.params.astar() * h.scale(k);
    if d < h.scale(k) || d >= hi {
        return false;
    }
    let cv = fit.line.coord(h.point(v));
    let dcw = fit.line.coord(h.point(w)) - cv;
    if dcw == 0.0 {
        return false;
    }
    let side = dcw.signum();
    for &x in h.level(k) {
        if x == v || x == w || dist(h.point(v), h.point(x)) >= hi {
            continue;
        }
        let dc = fit.line.coord(h.point(x)) - cv;
        if dc * side > 0.0 && dc * side < dcw * side {
            return false;
        }
    }
    true
}

/// Points of V_{k+1} in the open ball of radius 14 A* rho_k r0 at v whose
/// projections onto the fitted line at v land between v and vp, ordered
/// from v to vp.
pub fn chain_between(
    h: &NetHierarchy,
    fits: &LineFitTable,
    k: usize,
    v: usize,
    vp: usize,
) -> Vec<usize> {
    let astar = h.params.astar();
    let radius = 14.0 * astar * h.scale(k);
    let line = &fits[k][&v].line;
    let cv = line.coord(h.point(v));
    let cw = line.coord(h.point(vp));
    let (lo, hi) = (cv.min(cw), cv.max(cw));
    let band = 1e-12 * (hi - lo).abs().max(1.0);
    let mut ids: Vec<usize> = h
        .level(k + 1)
        .iter()
        .copied()
        .filter(|&w| {
            if w == v || w == vp {
                return true;
            }
            if dist(h.point(v), h.point(w)) >= radius {
                return false;
            }
            let c = line.coord(h.point(w));
            c >= lo - band && c <= hi + band
        })
        .collect();
    ids.sort_by(|&a, &b| {
        line.coord(h.point(a))
            .partial_cmp(&line.coord(h.point(b)))
            .unwrap()
            .then(a.cmp(&b))
    });
    if cv > cw {
        ids.reverse();
    }
    ids
}

/// Normalized s-variation excess of an ordered chain against the chord
/// between its first and last points.
pub fn variation_excess_chain(pts: &[Point], s: f64) -> f64 {
    if pts.len() < 2 {
        return 0.0;
    }
    let chord = dist(&pts[0], &pts[pts.len() - 1]).powf(s);
    if chord == 0.0 {
        return 0.0;
    }
    let total: f64 = pts
        .windows(2)
        .map(|w| dist(&w[0], &w[1]).powf(s))
        .sum();
    ((total - chord) / chord).max(0.0)
}

/// Variation excess tau_s of the flat pair (v, vp) at level k.
pub fn variation_excess(
    h: &NetHierarchy,
    fits: &LineFitTable,
    k: usize,
    v: usize,
    vp: usize,
    s: f64,
) -> f64 {
    let chain = chain_between(h, fits, k, v, vp);
    let pts: Vec<Point> = chain.iter().map(|&i| h.point(i).clone()).collect();
    variation_excess_chain(&pts, s)
}

/// Largest alpha0 for which a two-link detour through the window cannot
/// increase s-variation: the root in (0, 1/4] of
/// ((1 + 3 a^2) - c)^s + c^s = 1 with c = xi1 / (14 A*). Needs s > 1.
pub fn tube_threshold(s: f64, cstar: f64, xi1: f64, xi2: f64) -> Result<f64, NetsError> {
    if !(s > 1.0) {
        return Err(NetsError::NoRoot(format!(
            "threshold equation has no root for s = {s} <= 1"
        )));
    }
    let astar = cstar / (1.0 - xi2);
    let c = xi1 / (14.0 * astar);
    if !(c > 0.0 && c < 1.0) {
        return Err(NetsError::BadParameter(format!("degenerate c = {c}")));
    }
    let f = |a: f64| ((1.0 + 3.0 * a * a) - c).powf(s) + c.powf(s) - 1.0;
    let (mut lo, mut hi) = (0.0_f64, 0.25_f64);
    if f(hi) <= 0.0 {
        return Err(NetsError::NoRoot(
            "no sign change on (0, 1/4]".into(),
        ));
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((0.5 * (lo + hi)).min(1.0 / 16.0))
}

/// Spacing-safe flatness cutoff min{1/16, sqrt(xi1 / (42 A*))}.
pub fn alpha_one(cstar: f64, xi1: f64, xi2: f64) -> f64 {
    let astar = cstar / (1.0 - xi2);
    (1.0 / 16.0_f64).min((xi1 / (42.0 * astar)).sqrt())
}

/// Sum over all fitted levels of alpha^2 (rho_k r0)^s.
pub fn s_sum(h: &NetHierarchy, fits: &LineFitTable, s: f64) -> f64 {
    alpha_power_sum(h, fits, 2.0, s)
}

/// Sum over all fitted levels of alpha^power (rho_k r0)^s.
pub fn alpha_power_sum(h: &NetHierarchy, fits: &LineFitTable, power: f64, s: f64) -> f64 {
    let mut total = 0.0;
    for (k, map) in fits.iter().enumerate() {
        let w = h.scale(k).powf(s);
        for fit in map.values() {
            total += fit.alpha.powf(power) * w;
        }
    }
    total
}

/// Localized flatness sum: levels k >= j, net points inside the closed ball
/// of radius lambda rho_j r0 around w. Requires lambda >= C*.
pub fn carleson_sum(
    h: &NetHierarchy,
    fits: &LineFitTable,
    j: usize,
    w: &Point,
    lambda: f64,
) -> Result<f64, NetsError> {
    if lambda < h.params.cstar {
        return Err(NetsError::BadParameter(format!(
            "lambda = {lambda} below C* = {}",
            h.params.cstar
        )));
    }
    if j >= fits.len() {
        return Err(NetsError::BadParameter(format!("level {j} has no fits")));
    }
    let radius = lambda * h.scale(j);
    let mut total = 0.0;
    for (k, map) in fits.iter().enumerate().skip(j) {
        let ws = h.scale(k).powf(h.params.s);
        for (&v, fit) in map {
            if dist(h.point(v), w) <= radius * (1.0 + 1e-12) {
                total += fit.alpha * fit.alpha * ws;
            }
        }
    }
    Ok(total)
}

/// Partial sums of powers of the scale sequence: (sum_{j>=k} rho_j^s,
/// sum_{j<=k} rho_j^{-s}). Both are controlled by the geometric bounds
/// rho_k^s / (1 - xi2^s) and rho_k^{-s} / (1 - xi2^s).
pub fn power_sums(rho: &[f64], s: f64, k: usize) -> (f64, f64) {
    let tail: f64 = rho[k..].iter().map(|r| r.powf(s)).sum();
    let head: f64 = rho[..=k].iter().map(|r| r.powf(-s)).sum();
    (tail, head)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts1d(xs: &[f64]) -> Vec<Point> {
        xs.iter().map(|&x| vec![x, 0.0]).collect()
    }

    #[test]
    fn greedy_levels_on_the_line() {
        let e = pts1d(&[0.0, 0.3, 0.55, 1.0]);
        let p = Params::new(1.0, 0.5).unwrap();
        let h = build_nets(&e, 2, &p).unwrap();
        assert_eq!(h.r0, 1.0);
        assert_eq!(h.levels[0], vec![0, 3]);
        assert_eq!(h.levels[1], vec![0, 3]);
        assert_eq!(h.levels[2], vec![0, 3, 1, 2]);
        assert!(validate_nets(&h).is_empty());
    }

    #[test]
    fn validate_catches_tampering() {
        let e = pts1d(&[0.0, 0.3, 0.55, 1.0]);
        let p = Params::new(1.0, 0.5).unwrap();
        let mut h = build_nets(&e, 2, &p).unwrap();
        h.rho[1] = 0.9;
        assert!(!validate_nets(&h).is_empty());
        let mut h2 = build_nets(&e, 2, &p).unwrap();
        h2.levels[2] = vec![0, 3, 1, 2, 2];
        // duplicate index breaks separation
        assert!(!validate_nets(&h2).is_empty());
    }

    #[test]
    fn farthest_point_mode_builds_valid_nets() {
        let e = pts1d(&[0.0, 0.1, 0.2, 0.35, 0.5, 0.8, 1.0]);
        let p = Params::new(1.0, 0.5).unwrap();
        let opts = NetOptions {
            farthest_point: true,
            ..Default::default()
        };
        let h = build_nets_opt(&e, 3, &p, &opts).unwrap();
        assert!(validate_nets(&h).is_empty());
    }

    #[test]
    fn fit_alpha_of_a_bump() {
        let e = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 0.02]];
        let p = Params::new(1.0, 0.5).unwrap().with_fit(FitMode::Exact2d);
        let h = build_nets(&e, 1, &p).unwrap();
        assert_eq!(h.levels[1].len(), 3);
        let fits = fit_lines(&h, FitMode::Exact2d).unwrap();
        // minimax distance of the three points is half the bump height
        let alpha = fits[0][&0].alpha;
        assert!((alpha - 0.01 / 0.5).abs() < 1e-9, "alpha = {alpha}");
    }

    #[test]
    fn flat_pairs_on_integer_points() {
        let e = pts1d(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let p = Params::new(1.0, 0.5).unwrap().with_fit(FitMode::Exact2d);
        let h = build_nets(&e, 4, &p).unwrap();
        assert_eq!(h.levels[2], vec![0, 5, 2]);
        assert_eq!(h.levels[3].len(), 6);
        let fits = fit_lines(&h, FitMode::Exact2d).unwrap();
        assert_eq!(flat_pairs(&h, &fits, 2), vec![(0, 2), (2, 5)]);
        // consecutive integers at the maximal level
        assert_eq!(
            flat_pairs(&h, &fits, 3),
            vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]
        );
        // straight chain has no excess
        assert_eq!(variation_excess(&h, &fits, 2, 0, 2, 2.0), 0.0);
        assert_eq!(variation_excess(&h, &fits, 2, 0, 2, 1.0), 0.0);
    }

    #[test]
    fn variation_excess_of_a_bumped_chain() {
        let mut e = pts1d(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        e[1][1] = 0.05;
        let p = Params::new(1.0, 0.5).unwrap().with_fit(FitMode::Exact2d);
        let h = build_nets(&e, 4, &p).unwrap();
        let fits = fit_lines(&h, FitMode::Exact2d).unwrap();
        let pairs = flat_pairs(&h, &fits, 2);
        assert!(pairs.contains(&(0, 2)));
        let chain = chain_between(&h, &fits, 2, 0, 2);
        assert_eq!(chain, vec![0, 1, 2]);
        let tau = variation_excess(&h, &fits, 2, 0, 2, 1.0);
        let oracle = (1.0_f64 + 0.05 * 0.05).sqrt() - 1.0;
        assert!((tau - oracle).abs() < 1e-12, "tau = {tau}");
        // chain orientation follows the first argument
        let rev = chain_between(&h, &fits, 2, 2, 0);
        assert_eq!(rev, vec![2, 1, 0]);
    }

    #[test]
    fn tube_threshold_oracle() {
        let eps = tube_threshold(2.0, 2.0, 0.5, 0.5).unwrap();
        let c: f64 = 0.5 / (14.0 * 4.0);
        let closed = ((c + (1.0 - c * c).sqrt() - 1.0) / 3.0).sqrt();
        assert!((eps - closed).abs() < 1e-10, "eps = {eps}, closed = {closed}");
        assert!((eps - 0.054433).abs() < 1e-5);
        // the defining equation balances at the root
        let a = (1.0 + 3.0 * eps * eps - c).powi(2) + c * c;
        assert!((a - 1.0).abs() < 1e-10);
        assert!(tube_threshold(1.0, 2.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn alpha_one_oracle() {
        let a1 = alpha_one(2.0, 0.5, 0.5);
        assert!((a1 - (1.0_f64 / 336.0).sqrt()).abs() < 1e-12);
        assert!(a1 < 1.0 / 16.0);
        // default alpha0 for s = 1 falls back to the spacing cutoff
        let p = Params::new(1.0, 0.5).unwrap();
        assert!((p.alpha0 - a1).abs() < 1e-12);
        // for s = 2 the tube threshold is smaller and wins
        let p2 = Params::new(2.0, 0.5).unwrap();
        assert!((p2.alpha0 - tube_threshold(2.0, 2.0, 0.5, 0.5).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn power_sum_bounds_geometric() {
        let rho: Vec<f64> = (0..20).map(|k| 0.5_f64.powi(k)).collect();
        for s in [1.0, 1.5, 2.0] {
            for k in [0, 3, 7] {
                let (tail, head) = power_sums(&rho, s, k);
                let xi2 = 0.5_f64;
                assert!(tail <= rho[k].powf(s) / (1.0 - xi2.powf(s)) + 1e-9);
                assert!(head <= rho[k].powf(-s) / (1.0 - xi2.powf(s)) + 1e-9);
            }
        }
    }

    #[test]
    fn carleson_sum_matches_global_sum() {
        let e = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.1],
            vec![2.0, -0.05],
            vec![3.0, 0.02],
            vec![4.0, 0.0],
            vec![1.5, 0.3],
            vec![2.5, -0.2],
        ];
        let p = Params::new(1.0, 0.5).unwrap();
        let h = build_nets(&e, 4, &p).unwrap();
        let fits = fit_lines(&h, FitMode::Exact2d).unwrap();
        let s1 = s_sum(&h, &fits, 1.0);
        let x0 = h.point(h.x0).clone();
        let c = carleson_sum(&h, &fits, 0, &x0, 1e9).unwrap();
        assert!((s1 - c).abs() < 1e-12 * s1.max(1.0));
        assert!(carleson_sum(&h, &fits, 0, &x0, 1.0).is_err());
        assert!(s1 > 0.0);
    }

    #[test]
    fn order_points_breaks_ties_by_index() {
        let pts = vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![1.0, 2.0]];
        let line = Line::new(vec![0.0, 0.0], vec![1.0, 0.0]);
        assert_eq!(order_points(&pts, &[0, 1, 2], &line), vec![1, 0, 2]);
    }
}
