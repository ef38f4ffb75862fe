//! Euclidean primitives: points, lines, projections, minimax line fitting,
//! dyadic cubes, and Jones beta numbers with their multiscale sums.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

/// A point of R^N; the dimension is fixed per dataset.
pub type Point = Vec<f64>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum GeomError {
    #[error("empty input")]
    EmptyInput,
    #[error("exact2d fitter requires dimension 2, got {0}")]
    DimensionMismatch(usize),
    #[error("bad parameter: {0}")]
    BadParameter(String),
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Point {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Point {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], c: f64) -> Point {
    a.iter().map(|x| x * c).collect()
}

/// a + t(b - a).
pub fn lerp(a: &[f64], b: &[f64], t: f64) -> Point {
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

pub fn diameter(pts: &[Point]) -> f64 {
    let mut d2 = 0.0f64;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d2 = d2.max(dist2(&pts[i], &pts[j]));
        }
    }
    d2.sqrt()
}

/// The pair of indices realizing the diameter (first by scan order).
pub fn far_pair(pts: &[Point]) -> Option<(usize, usize)> {
    if pts.len() < 2 {
        return None;
    }
    let (mut bi, mut bj, mut bd) = (0, 1, -1.0);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = dist2(&pts[i], &pts[j]);
            if d > bd {
                bd = d;
                bi = i;
                bj = j;
            }
        }
    }
    Some((bi, bj))
}

/// A line of R^N through `base` with unit `dir`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Line {
    pub base: Point,
    pub dir: Point,
}

impl Line {
    pub fn new(base: Point, dir: Point) -> Line {
        let n = norm(&dir);
        assert!(n > 0.0, "line direction must be nonzero");
        Line {
            base,
            dir: scale(&dir, 1.0 / n),
        }
    }

    /// Line through two points; a degenerate pair falls back to the first axis.
    pub fn through(a: &[f64], b: &[f64]) -> Line {
        let d = sub(b, a);
        if norm(&d) == 0.0 {
            let mut e = vec![0.0; a.len()];
            e[0] = 1.0;
            Line {
                base: a.to_vec(),
                dir: e,
            }
        } else {
            Line::new(a.to_vec(), d)
        }
    }

    /// Scalar coordinate of the projection of `p` along the line.
    pub fn coord(&self, p: &[f64]) -> f64 {
        dot(&sub(p, &self.base), &self.dir)
    }

    pub fn point_at(&self, t: f64) -> Point {
        add(&self.base, &scale(&self.dir, t))
    }

    pub fn dist(&self, p: &[f64]) -> f64 {
        let t = self.coord(p);
        dist(p, &self.point_at(t))
    }

    pub fn reversed(&self) -> Line {
        Line {
            base: self.base.clone(),
            dir: scale(&self.dir, -1.0),
        }
    }
}

/// Orthogonal projection of `x` onto the line.
pub fn project(x: &[f64], l: &Line) -> Point {
    l.point_at(l.coord(x))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitMode {
    Exact2d,
    FarPair,
    Refine,
}

/// exact2d in the plane, refine elsewhere.
pub fn default_mode(dim: usize) -> FitMode {
    if dim == 2 {
        FitMode::Exact2d
    } else {
        FitMode::Refine
    }
}

fn cross2(o: &[f64], a: &[f64], b: &[f64]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Monotone-chain convex hull (strict turns; collinear points dropped).
pub fn convex_hull_2d(pts: &[Point]) -> Vec<Point> {
    let mut p: Vec<Point> = pts.to_vec();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    p.dedup();
    let n = p.len();
    if n <= 2 {
        return p;
    }
    let chain = |iter: &mut dyn Iterator<Item = &Point>| -> Vec<Point> {
        let mut half: Vec<Point> = Vec::new();
        for pt in iter {
            while half.len() >= 2
                && cross2(&half[half.len() - 2], &half[half.len() - 1], pt) <= 0.0
            {
                half.pop();
            }
            half.push(pt.clone());
        }
        half.pop();
        half
    };
    let mut hull = chain(&mut p.iter());
    hull.extend(chain(&mut p.iter().rev()));
    if hull.len() < 2 {
        // all points collinear: keep the extreme pair
        let (i, j) = far_pair(&p).unwrap();
        return vec![p[i].clone(), p[j].clone()];
    }
    hull
}

fn minimax_exact2d(pts: &[Point]) -> (Line, f64) {
    let hull = convex_hull_2d(pts);
    if hull.len() == 1 {
        return (Line::through(&hull[0], &hull[0]), 0.0);
    }
    if hull.len() == 2 {
        return (Line::through(&hull[0], &hull[1]), 0.0);
    }
    // Minimal-width strip: one side of the optimal strip contains a hull edge.
    let h = hull.len();
    let mut best: Option<(f64, usize, f64)> = None; // (width, edge index, signed far offset)
    for i in 0..h {
        let a = &hull[i];
        let b = &hull[(i + 1) % h];
        let e = sub(b, a);
        let len = norm(&e);
        if len == 0.0 {
            continue;
        }
        let nrm = [-e[1] / len, e[0] / len];
        let mut lo = 0.0f64;
        let mut hi = 0.0f64;
        for v in &hull {
            let off = (v[0] - a[0]) * nrm[0] + (v[1] - a[1]) * nrm[1];
            lo = lo.min(off);
            hi = hi.max(off);
        }
        let width = hi - lo;
        if best.is_none() || width < best.unwrap().0 {
            best = Some((width, i, (lo + hi) / 2.0));
        }
    }
    let (width, i, mid) = best.unwrap();
    let a = &hull[i];
    let b = &hull[(i + 1) % h];
    let e = sub(b, a);
    let len = norm(&e);
    let nrm = [-e[1] / len, e[0] / len];
    let base = vec![a[0] + mid * nrm[0], a[1] + mid * nrm[1]];
    (Line::new(base, e), width / 2.0)
}

fn max_dist_to(pts: &[Point], l: &Line) -> f64 {
    pts.iter().map(|p| l.dist(p)).fold(0.0, f64::max)
}

// halfwidth and strip midline offset of the point cloud in direction theta
fn strip_2d(pts: &[Point], theta: f64) -> (f64, f64) {
    let nrm = [-theta.sin(), theta.cos()];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in pts {
        let off = p[0] * nrm[0] + p[1] * nrm[1];
        lo = lo.min(off);
        hi = hi.max(off);
    }
    ((hi - lo) / 2.0, (lo + hi) / 2.0)
}

fn refine_2d(pts: &[Point]) -> (Line, f64) {
    let n = 1024usize;
    let step = std::f64::consts::PI / n as f64;
    let mut best = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let th = i as f64 * step;
        let (w, _) = strip_2d(pts, th);
        if w < best.0 {
            best = (w, th);
        }
    }
    // golden-section polish inside the bracketing grid cell
    let (mut a, mut b) = (best.1 - step, best.1 + step);
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut x1, mut x2) = (b - phi * (b - a), a + phi * (b - a));
    let (mut f1, mut f2) = (strip_2d(pts, x1).0, strip_2d(pts, x2).0);
    for _ in 0..80 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = strip_2d(pts, x1).0;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = strip_2d(pts, x2).0;
        }
    }
    let th = if f1 < f2 { x1 } else { x2 };
    let (w, mid) = strip_2d(pts, th);
    let nrm = [-th.sin(), th.cos()];
    (
        Line::new(
            vec![mid * nrm[0], mid * nrm[1]],
            vec![th.cos(), th.sin()],
        ),
        w,
    )
}

fn descend(pts: &[Point], seed: Line, diam: f64) -> (Line, f64) {
    let dim = pts[0].len();
    let mut line = seed;
    let mut best = max_dist_to(pts, &line);
    let mut step = 0.25f64;
    for _ in 0..200 {
        if step < 1e-10 {
            break;
        }
        let mut improved = false;
        for c in 0..dim {
            for sgn in [-1.0, 1.0] {
                let mut cand = line.clone();
                cand.base[c] += sgn * step * diam;
                let d = max_dist_to(pts, &cand);
                if d < best {
                    best = d;
                    line = cand;
                    improved = true;
                }
                let mut dir = line.dir.clone();
                dir[c] += sgn * step;
                if norm(&dir) > 1e-12 {
                    let cand = Line::new(line.base.clone(), dir);
                    let d = max_dist_to(pts, &cand);
                    if d < best {
                        best = d;
                        line = cand;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (line, best)
}

fn minimax_refine(pts: &[Point]) -> (Line, f64) {
    let (i, j) = match far_pair(pts) {
        Some(p) => p,
        None => return (Line::through(&pts[0], &pts[0]), 0.0),
    };
    let diam = dist(&pts[i], &pts[j]);
    let seed = Line::through(&pts[i], &pts[j]);
    if diam == 0.0 {
        let d = max_dist_to(pts, &seed);
        return (seed, d);
    }
    if pts[0].len() == 2 {
        return refine_2d(pts);
    }
    // higher dimensions: coordinate descent from the far pair and from each
    // axis direction through the centroid, best result wins
    let dim = pts[0].len();
    let mut centroid = vec![0.0; dim];
    for p in pts {
        for c in 0..dim {
            centroid[c] += p[c] / pts.len() as f64;
        }
    }
    let mut out = descend(pts, seed, diam);
    for axis in 0..dim {
        let mut dir = vec![0.0; dim];
        dir[axis] = 1.0;
        let cand = descend(pts, Line::new(centroid.clone(), dir), diam);
        if cand.1 < out.1 {
            out = cand;
        }
    }
    out
}

/// Best-fit line under the sup metric.
///
/// `Exact2d` returns the true minimizer (hull-edge strip enumeration, dim 2
/// only). `FarPair` returns the line through a diameter pair. `Refine` runs
/// coordinate descent on (base, direction) from the far-pair seed: 200
/// iterations, 1e-10 step tolerance.
pub fn minimax_line(pts: &[Point], mode: FitMode) -> Result<(Line, f64), GeomError> {
    if pts.is_empty() {
        return Err(GeomError::EmptyInput);
    }
    if pts.len() == 1 {
        return Ok((Line::through(&pts[0], &pts[0]), 0.0));
    }
    match mode {
        FitMode::Exact2d => {
            if pts[0].len() != 2 {
                return Err(GeomError::DimensionMismatch(pts[0].len()));
            }
            Ok(minimax_exact2d(pts))
        }
        FitMode::FarPair => {
            let (i, j) = far_pair(pts).unwrap();
            let line = Line::through(&pts[i], &pts[j]);
            let d = max_dist_to(pts, &line);
            Ok((line, d))
        }
        FitMode::Refine => Ok(minimax_refine(pts)),
    }
}

/// Heuristic minimax hyperplane fit: returns (unit normal, offset, max |n.x - c|).
/// Used only as a diagnostic for (N-1)-plane flatness of generator output.
pub fn hyperplane_minimax(pts: &[Point]) -> Result<(Point, f64, f64), GeomError> {
    if pts.is_empty() {
        return Err(GeomError::EmptyInput);
    }
    let dim = pts[0].len();
    let eval = |n: &[f64]| -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in pts {
            let t = dot(n, p);
            lo = lo.min(t);
            hi = hi.max(t);
        }
        ((lo + hi) / 2.0, (hi - lo) / 2.0)
    };
    let mut best_n: Point = vec![0.0; dim];
    let mut best = f64::INFINITY;
    let mut best_c = 0.0;
    for axis in 0..dim {
        let mut n = vec![0.0; dim];
        n[axis] = 1.0;
        let (c, w) = eval(&n);
        if w < best {
            best = w;
            best_n = n;
            best_c = c;
        }
    }
    let mut step = 0.25f64;
    for _ in 0..200 {
        if step < 1e-10 {
            break;
        }
        let mut improved = false;
        for c in 0..dim {
            for sgn in [-1.0, 1.0] {
                let mut n = best_n.clone();
                n[c] += sgn * step;
                let len = norm(&n);
                if len < 1e-12 {
                    continue;
                }
                let n = scale(&n, 1.0 / len);
                let (off, w) = eval(&n);
                if w < best {
                    best = w;
                    best_n = n;
                    best_c = off;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((best_n, best_c, best))
}

/// The closed cube prod_i [2^k m_i, 2^k (m_i + 1)].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DyadicCube {
    pub scale_exp: i32,
    pub corner: Vec<i64>,
}

impl DyadicCube {
    pub fn side(&self) -> f64 {
        (self.scale_exp as f64).exp2()
    }

    pub fn diam(&self) -> f64 {
        self.side() * (self.corner.len() as f64).sqrt()
    }

    pub fn center(&self) -> Point {
        let s = self.side();
        self.corner.iter().map(|m| (*m as f64 + 0.5) * s).collect()
    }

    /// Closed containment in the concentric `factor`-dilation.
    pub fn dilated_contains(&self, p: &[f64], factor: f64) -> bool {
        let s = self.side();
        let half = factor * s / 2.0;
        let tol = 1e-12 * s.max(1.0);
        self.corner
            .iter()
            .zip(p)
            .all(|(m, x)| (x - (*m as f64 + 0.5) * s).abs() <= half + tol)
    }
}

/// The regions Q appearing in beta numbers: closed balls and dilated cubes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Region {
    Ball { center: Point, radius: f64 },
    DilatedCube { cube: DyadicCube, factor: f64 },
}

impl Region {
    pub fn contains(&self, p: &[f64]) -> bool {
        match self {
            Region::Ball { center, radius } => {
                dist(center, p) <= radius + 1e-12 * radius.max(1.0)
            }
            Region::DilatedCube { cube, factor } => cube.dilated_contains(p, *factor),
        }
    }

    pub fn diam(&self) -> f64 {
        match self {
            Region::Ball { radius, .. } => 2.0 * radius,
            Region::DilatedCube { cube, factor } => factor * cube.diam(),
        }
    }
}

/// Jones beta number of E over the region Q: minimax max-distance of E cap Q
/// to a line, divided by diam Q; zero on empty intersection.
pub fn beta_number(e: &[Point], q: &Region, mode: FitMode) -> Result<f64, GeomError> {
    let inside: Vec<Point> = e.iter().filter(|p| q.contains(p)).cloned().collect();
    if inside.is_empty() {
        return Ok(0.0);
    }
    let d = q.diam();
    if d <= 0.0 {
        return Err(GeomError::BadParameter("region has zero diameter".into()));
    }
    let (_, md) = minimax_line(&inside, mode)?;
    Ok(md / d)
}

/// All dyadic cubes with scale_exp in [k_min, k_max] whose closed cube meets E,
/// sorted lexicographically by (scale_exp, corner). Boundary points belong to
/// every closed cube containing them.
pub fn dyadic_cubes_meeting(e: &[Point], k_min: i32, k_max: i32) -> Vec<DyadicCube> {
    let mut out = BTreeSet::new();
    if e.is_empty() {
        return Vec::new();
    }
    let dim = e[0].len();
    for k in k_min..=k_max {
        let side = (k as f64).exp2();
        for p in e {
            // candidate corner ranges per axis, with boundary slack
            let ranges: Vec<(i64, i64)> = (0..dim)
                .map(|i| {
                    let t = p[i] / side;
                    let tol = 1e-9 * t.abs().max(1.0);
                    (((t - tol).floor() - 1.0) as i64, (t + tol).floor() as i64)
                })
                .collect();
            let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
            loop {
                let cube = DyadicCube {
                    scale_exp: k,
                    corner: idx.clone(),
                };
                if cube.dilated_contains(p, 1.0) {
                    out.insert(cube);
                }
                let mut carry = 0;
                while carry < dim {
                    idx[carry] += 1;
                    if idx[carry] <= ranges[carry].1 {
                        break;
                    }
                    idx[carry] = ranges[carry].0;
                    carry += 1;
                }
                if carry == dim {
                    break;
                }
            }
        }
    }
    out.into_iter().collect()
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub enum SumVariant {
    /// beta^2 diam Q
    Square,
    /// (diam Q)^s over cubes with beta >= threshold
    Threshold(f64),
    /// beta^p (diam Q)^s
    Power(f64),
}

/// Per-scale contributions of the multiscale beta sum over all dyadic cubes Q
/// whose 3-fold dilation meets E. Returns (scale_exp, contribution) pairs.
pub fn beta_sums_by_scale(
    e: &[Point],
    s: f64,
    variant: SumVariant,
    k_min: i32,
    k_max: i32,
    mode: FitMode,
) -> Result<Vec<(i32, f64)>, GeomError> {
    let mut out = Vec::new();
    if e.is_empty() {
        return Ok((k_min..=k_max).map(|k| (k, 0.0)).collect());
    }
    let dim = e[0].len();
    for k in k_min..=k_max {
        let side = (k as f64).exp2();
        // hash points by containing cell, then gather 3Q = 4^dim neighbor cells
        let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (pi, p) in e.iter().enumerate() {
            let cell: Vec<i64> = p.iter().map(|x| (x / side).floor() as i64).collect();
            cells.entry(cell).or_default().push(pi);
        }
        // candidate cubes: cells within offset {-2..=1} of an occupied cell
        let mut cand: BTreeSet<Vec<i64>> = BTreeSet::new();
        for cell in cells.keys() {
            let mut idx = vec![0i64; dim];
            'outer: loop {
                let c: Vec<i64> = cell.iter().zip(&idx).map(|(a, b)| a + b - 2).collect();
                cand.insert(c);
                let mut carry = 0;
                while carry < dim {
                    idx[carry] += 1;
                    if idx[carry] <= 3 {
                        break;
                    }
                    idx[carry] = 0;
                    carry += 1;
                }
                if carry == dim {
                    break 'outer;
                }
            }
        }
        let mut total = 0.0;
        for corner in cand {
            let cube = DyadicCube {
                scale_exp: k,
                corner,
            };
            // gather E in the closed 3Q via neighbor cells, then filter exactly
            let mut pts: Vec<Point> = Vec::new();
            let mut idx = vec![0i64; dim];
            'cells: loop {
                let c: Vec<i64> = cube
                    .corner
                    .iter()
                    .zip(&idx)
                    .map(|(a, b)| a + b - 1)
                    .collect();
                if let Some(list) = cells.get(&c) {
                    for &pi in list {
                        if cube.dilated_contains(&e[pi], 3.0) {
                            pts.push(e[pi].clone());
                        }
                    }
                }
                let mut carry = 0;
                while carry < dim {
                    idx[carry] += 1;
                    if idx[carry] <= 2 {
                        break;
                    }
                    idx[carry] = 0;
                    carry += 1;
                }
                if carry == dim {
                    break 'cells;
                }
            }
            if pts.len() < 2 {
                continue;
            }
            let (_, md) = minimax_line(&pts, mode)?;
            let beta = md / (3.0 * cube.diam());
            let dq = cube.diam();
            total += match variant {
                SumVariant::Square => beta * beta * dq,
                SumVariant::Threshold(b0) => {
                    if beta >= b0 - 1e-12 {
                        dq.powf(s)
                    } else {
                        0.0
                    }
                }
                SumVariant::Power(p) => beta.powf(p) * dq.powf(s),
            };
        }
        out.push((k, total));
    }
    Ok(out)
}

/// Total multiscale beta sum over the scale range.
pub fn beta_sums(
    e: &[Point],
    s: f64,
    variant: SumVariant,
    k_min: i32,
    k_max: i32,
    mode: FitMode,
) -> Result<f64, GeomError> {
    Ok(beta_sums_by_scale(e, s, variant, k_min, k_max, mode)?
        .into_iter()
        .map(|(_, v)| v)
        .sum())
}
