//! Mass functional on interval trees.
//!
//! Each interval of a construction state carries the supremum of boundary
//! sums sum (diam f(I'))^s over admissible finite subtrees, where a subtree
//! either keeps an interval as a leaf or expands all of its children. The
//! recursion max{(diam)^s, sum of children} computes the truncated value
//! exactly; it is a lower bound for the untruncated supremum except on
//! bridge and frozen intervals, where it is exact at every depth. The
//! module also books phantom mass at terminal flat plateaus, locates
//! special bridge intervals, and produces the two comparison reports: the
//! variation-excess upper bound and the Hausdorff covering lower bound.

use thiserror::Error;

use crate::construct::{Kind, LevelState};
use crate::geom::dist;
use crate::nets::{self, LineFitTable, NetHierarchy};

/// Enumeration ceiling for `brute_force_mass`, in candidate trees per node.
const BRUTE_CAP: usize = 2_000_000;

#[derive(Debug, Error)]
pub enum MassError {
    #[error("brute force needs a small tree: {0}")]
    DepthTooLarge(String),
}

/// Per-record mass values for a state sequence, plus phantom bookkeeping.
#[derive(Debug, Clone)]
pub struct MassTable {
    pub s: f64,
    /// mass[k][i] for states[k].records[i], truncated at the deepest level.
    pub mass: Vec<Vec<f64>>,
    /// Mass of [0,1]: the sum over level-0 records.
    pub total: f64,
    /// Phantom constant P; zero until `attach_phantoms` runs.
    pub phantom_p: f64,
    /// phantoms[k][i]: P (rho_k r0)^s at 1-sided and twice that at 2-sided
    /// terminal flat plateaus, zero elsewhere.
    pub phantoms: Vec<Vec<f64>>,
}

impl MassTable {
    pub fn phantom_total(&self) -> f64 {
        self.phantoms.iter().flatten().sum()
    }
}

/// Indices of the level-(k+1) records inside each level-k record's span.
/// Children tile their parent exactly, so midpoint containment decides.
pub fn child_map(parent: &LevelState, child: &LevelState) -> Vec<Vec<usize>> {
    let mut map: Vec<Vec<usize>> = vec![Vec::new(); parent.records.len()];
    let mut pi = 0usize;
    for (ci, c) in child.records.iter().enumerate() {
        let mid = 0.5 * (c.a + c.b);
        while pi + 1 < parent.records.len() && mid > parent.records[pi].b + 1e-15 {
            pi += 1;
        }
        map[pi].push(ci);
    }
    map
}

/// Truncated mass by the bottom-up recursion, with (diam)^s at the deepest
/// built level. Exact for bridge and frozen intervals at every depth.
pub fn compute_mass(states: &[LevelState], s: f64) -> MassTable {
    let m = states.len() - 1;
    let mut mass: Vec<Vec<f64>> = states
        .iter()
        .map(|st| vec![0.0; st.records.len()])
        .collect();
    for (i, r) in states[m].records.iter().enumerate() {
        mass[m][i] = r.image_diam().powf(s);
    }
    for k in (0..m).rev() {
        let map = child_map(&states[k], &states[k + 1]);
        for (i, r) in states[k].records.iter().enumerate() {
            let kids: f64 = map[i].iter().map(|&c| mass[k + 1][c]).sum();
            mass[k][i] = kids.max(r.image_diam().powf(s));
        }
    }
    let total = mass[0].iter().sum();
    MassTable {
        s,
        mass,
        total,
        phantom_p: 0.0,
        phantoms: states
            .iter()
            .map(|st| vec![0.0; st.records.len()])
            .collect(),
    }
}

fn tree_sums(
    states: &[LevelState],
    maps: &[Vec<Vec<usize>>],
    k: usize,
    i: usize,
    s: f64,
) -> Result<Vec<f64>, MassError> {
    let d = states[k].records[i].image_diam().powf(s);
    if k == states.len() - 1 || maps[k][i].is_empty() {
        return Ok(vec![d]);
    }
    let mut combos = vec![0.0f64];
    for &c in &maps[k][i] {
        let sub = tree_sums(states, maps, k + 1, c, s)?;
        if combos.len() * sub.len() > BRUTE_CAP {
            return Err(MassError::DepthTooLarge(format!(
                "enumeration exceeds {BRUTE_CAP} trees at level {k}"
            )));
        }
        let mut next = Vec::with_capacity(combos.len() * sub.len());
        for &a in &combos {
            for &b in &sub {
                next.push(a + b);
            }
        }
        combos = next;
    }
    combos.push(d);
    Ok(combos)
}

/// Exhaustive oracle: enumerate every admissible subtree rooted at each
/// record (leaf, or all children expanded) and take the best boundary sum.
pub fn brute_force_mass(
    states: &[LevelState],
    s: f64,
    max_depth: usize,
) -> Result<MassTable, MassError> {
    if max_depth > 4 {
        return Err(MassError::DepthTooLarge(format!(
            "max_depth {max_depth} exceeds the enumeration limit 4"
        )));
    }
    let m = states.len().saturating_sub(1);
    if m > max_depth {
        return Err(MassError::DepthTooLarge(format!(
            "{m} refinement levels exceed max_depth {max_depth}"
        )));
    }
    let maps: Vec<Vec<Vec<usize>>> = (0..m)
        .map(|k| child_map(&states[k], &states[k + 1]))
        .collect();
    let mut mass: Vec<Vec<f64>> = states
        .iter()
        .map(|st| vec![0.0; st.records.len()])
        .collect();
    for k in 0..states.len() {
        for i in 0..states[k].records.len() {
            let sums = tree_sums(states, &maps, k, i, s)?;
            mass[k][i] = sums.iter().copied().fold(0.0, f64::max);
        }
    }
    let total = mass[0].iter().sum();
    Ok(MassTable {
        s,
        mass,
        total,
        phantom_p: 0.0,
        phantoms: states
            .iter()
            .map(|st| vec![0.0; st.records.len()])
            .collect(),
    })
}

/// Phantom constant P, the fixed point of [P + 2(1.1 C*)^s] xi2^s = P.
pub fn phantom_constant(s: f64, cstar: f64, xi2: f64) -> f64 {
    debug_assert!(xi2 < 1.0);
    2.0 * (1.1 * cstar).powf(s) / (1.0 - xi2.powf(s))
}

/// 0, 1 or 2 occupied sides of the fitted line among same-level points
/// within 14 A* rho_k r0: 1 free side means 1-sided terminal, 2 free sides
/// (isolated) means 2-sided terminal.
fn occupied_sides(h: &NetHierarchy, fits: &LineFitTable, k: usize, v: usize) -> usize {
    let fit = &fits[k][&v];
    let pv = h.point(v);
    let cv = fit.line.coord(pv);
    let reach = 14.0 * h.params.astar() * h.scale(k);
    let mut occ = [false; 2];
    for &w in h.level(k) {
        if w == v || dist(h.point(w), pv) >= reach {
            continue;
        }
        let dc = fit.line.coord(h.point(w)) - cv;
        if dc > 0.0 {
            occ[0] = true;
        } else if dc < 0.0 {
            occ[1] = true;
        }
    }
    occ.iter().filter(|&&b| b).count()
}

/// Assign phantom mass to every terminal flat plateau: P (rho_k r0)^s when
/// one side is occupied, 2 P (rho_k r0)^s when the point is isolated in its
/// 14 A* rho_k r0 ball. States must be the run output, one per level.
pub fn attach_phantoms(
    table: &mut MassTable,
    states: &[LevelState],
    h: &NetHierarchy,
    fits: &LineFitTable,
) {
    let p = phantom_constant(table.s, h.params.cstar, h.params.xi2);
    table.phantom_p = p;
    for (k, st) in states.iter().enumerate() {
        if k >= fits.len() {
            break;
        }
        let w = h.scale(k).powf(table.s);
        for (i, r) in st.records.iter().enumerate() {
            table.phantoms[k][i] = 0.0;
            if r.kind != Kind::NetPoint {
                continue;
            }
            let v = r.vertex();
            if !(fits[k][&v].alpha < h.params.alpha0) {
                continue;
            }
            table.phantoms[k][i] = match occupied_sides(h, fits, k, v) {
                1 => p * w,
                0 => 2.0 * p * w,
                _ => 0.0,
            };
        }
    }
}

/// Indices of the special bridge records at level k: bridges born at k
/// whose level-(k-1) parent is an edge with a flat endpoint, i.e. the
/// bridges inserted by chain subdivision over gaps >= 14 A* rho_k r0.
pub fn special_bridges(
    states: &[LevelState],
    h: &NetHierarchy,
    fits: &LineFitTable,
    k: usize,
) -> Vec<usize> {
    if k == 0 || k >= states.len() {
        return Vec::new();
    }
    let alpha0 = h.params.alpha0;
    let flat = |v: usize| fits[k - 1][&v].alpha < alpha0;
    let map = child_map(&states[k - 1], &states[k]);
    let mut out = Vec::new();
    for (pi, p) in states[k - 1].records.iter().enumerate() {
        if p.kind != Kind::Edge || !(flat(p.ends.0) || flat(p.ends.1)) {
            continue;
        }
        for &ci in &map[pi] {
            let c = &states[k].records[ci];
            if c.kind == Kind::Bridge && c.born == k {
                out.push(ci);
            }
        }
    }
    out
}

/// Mass against the variation-excess bound: the right-hand side is
/// r0^s + sum tau_s (rho_k r0)^s over flat pairs (with ordered multiplicity)
/// plus sum (rho_k r0)^s over non-flat vertices. The comparison constant is
/// implicit, so only the ratio is reported.
#[derive(Debug, Clone)]
pub struct MassBoundReport {
    pub mass: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub base: f64,
    pub tau_sum: f64,
    pub alpha_sum: f64,
}

pub fn mass_bound_report(
    table: &MassTable,
    h: &NetHierarchy,
    fits: &LineFitTable,
) -> MassBoundReport {
    let s = table.s;
    let base = h.r0.powf(s);
    let mut tau_sum = 0.0;
    let mut alpha_sum = 0.0;
    for k in 0..fits.len() {
        let w = h.scale(k).powf(s);
        for (a, b) in nets::flat_pairs(h, fits, k) {
            let mult = nets::is_flat_pair(h, fits, k, a, b) as usize
                + nets::is_flat_pair(h, fits, k, b, a) as usize;
            let tau = nets::variation_excess(h, fits, k, a, b, s);
            tau_sum += mult.max(1) as f64 * tau * w;
        }
        for &v in h.level(k) {
            if !(fits[k][&v].alpha < h.params.alpha0) {
                alpha_sum += w;
            }
        }
    }
    let rhs = base + tau_sum + alpha_sum;
    let ratio = if rhs > 0.0 { table.total / rhs } else { 0.0 };
    MassBoundReport {
        mass: table.total,
        rhs,
        ratio,
        base,
        tau_sum,
        alpha_sum,
    }
}

/// Covering estimate for the s-dimensional Hausdorff measure of the closure
/// of the net union: balls of radius C* rho_{m+1} r0 / (1 - xi2) around the
/// deepest net points, compared against (2 C* xi2 / (1 - xi2))^s times the
/// total mass.
#[derive(Debug, Clone)]
pub struct HausdorffReport {
    pub level: usize,
    pub count: usize,
    pub cover_radius: f64,
    pub cover_sum: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn hausdorff_lower_check(table: &MassTable, h: &NetHierarchy) -> HausdorffReport {
    let s = table.s;
    let m = table.mass.len().saturating_sub(1).min(h.depth());
    let xi2 = h.params.xi2;
    let rho_next = if m + 1 < h.rho.len() {
        h.rho[m + 1]
    } else {
        h.rho[m] * xi2
    };
    let radius = h.params.cstar * rho_next * h.r0 / (1.0 - xi2);
    let count = h.level(m).len();
    let cover_sum = count as f64 * (2.0 * radius).powf(s);
    let bound = (2.0 * h.params.cstar * xi2 / (1.0 - xi2)).powf(s) * table.total;
    HausdorffReport {
        level: m,
        count,
        cover_radius: radius,
        cover_sum,
        bound,
        holds: cover_sum <= bound * (1.0 + 1e-9),
    }
}
