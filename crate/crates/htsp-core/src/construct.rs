//! Interval-refinement tour algorithm: evolve labeled partitions of [0,1]
//! and piecewise-linear maps f_k over a net hierarchy so that the structural
//! properties (P1)-(P7) hold at every level. Also contains the flat-continuum
//! variant and the essentially-2-to-1 bridge rerouting.

use crate::geom::{self, dist, Point};
use crate::nets::{self, LineFitTable, NetHierarchy, NetsError};
use crate::tour::{self, SimpleGraph, Slot, TourError};
use std::collections::{HashMap, HashSet};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum ConstructError {
    #[error("property {0} violated: {1}")]
    PropertyViolation(String, String),
    #[error("flatness violated at {x:?}, r = {r}: beta = {beta}")]
    FlatnessViolated { x: Point, r: f64, beta: f64 },
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Nets(#[from] NetsError),
    #[error(transparent)]
    Tour(#[from] TourError),
}

/// The four interval species: live vertex plateaus, retired plateaus,
/// active chords, and permanently straight connectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kind {
    NetPoint,
    Frozen,
    Edge,
    Bridge,
}

impl Kind {
    pub fn is_closed(self) -> bool {
        matches!(self, Kind::NetPoint | Kind::Frozen)
    }
}

/// One interval of the partition. Closed records (NetPoint/Frozen) are
/// constancy intervals with `from == to`; open records (Edge/Bridge) map
/// affinely from `from` at `a` to `to` at `b`. `ends` holds the net-point
/// indices of the images, in traversal order.
#[derive(Clone, Debug)]
pub struct IntervalRecord {
    pub a: f64,
    pub b: f64,
    pub kind: Kind,
    pub ends: (usize, usize),
    pub from: Point,
    pub to: Point,
    pub born: usize,
}

impl IntervalRecord {
    pub fn is_closed(&self) -> bool {
        self.kind.is_closed()
    }

    pub fn image_diam(&self) -> f64 {
        dist(&self.from, &self.to)
    }

    pub fn vertex(&self) -> usize {
        self.ends.0
    }
}

/// The partition and piecewise-linear map of one level.
#[derive(Clone, Debug)]
pub struct LevelState {
    pub level: usize,
    pub records: Vec<IntervalRecord>,
    pub flat_mode: bool,
}

impl LevelState {
    pub fn eval(&self, t: f64) -> Point {
        let recs = &self.records;
        let t = t.clamp(0.0, 1.0);
        let (mut lo, mut hi) = (0usize, recs.len() - 1);
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            if recs[mid].a <= t {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        let r = &recs[lo];
        if r.is_closed() || r.b <= r.a {
            return r.from.clone();
        }
        geom::lerp(&r.from, &r.to, (t - r.a) / (r.b - r.a))
    }

    /// All record endpoints, sorted and deduplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .records
            .iter()
            .flat_map(|r| [r.a, r.b])
            .collect();
        out.sort_by(|x, y| x.partial_cmp(y).unwrap());
        out.dedup();
        out
    }

    pub fn count(&self, kind: Kind) -> usize {
        self.records.iter().filter(|r| r.kind == kind).count()
    }
}

/// Deterministic resolutions of the algorithm's free choices. The fixed
/// rules: of a twin pair the positionally earlier interval keeps the live
/// plateaus; tours start toward the lowest-index neighbor; components are
/// ordered by smallest contained vertex; non-flat plateaus are processed
/// left to right. `alpha_relax`, if set, widens the flatness band so that
/// plateaus with alpha in [alpha0, alpha_relax) are left unchanged instead
/// of being retoured; `None` reproduces the strict construction.
#[derive(Clone, Debug, Default)]
pub struct ChoiceLedger {
    pub alpha_relax: Option<f64>,
}

/// Uniform distance between the maps of two levels, exact for the
/// piecewise-linear representation (evaluated on the union of breakpoints).
pub fn sup_distance(a: &LevelState, b: &LevelState) -> f64 {
    let mut pts = a.breakpoints();
    pts.extend(b.breakpoints());
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    pts.iter()
        .map(|&t| dist(&a.eval(t), &b.eval(t)))
        .fold(0.0, f64::max)
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

struct Proto {
    weight: f64,
    kind: Kind,
    ends: (usize, usize),
    born: usize,
}

fn plateau(v: usize, designated: bool, born: usize) -> Proto {
    Proto {
        weight: 1.0,
        kind: if designated { Kind::NetPoint } else { Kind::Frozen },
        ends: (v, v),
        born,
    }
}

struct Plan {
    designated: HashSet<usize>,
    edge_count: HashMap<(usize, usize), usize>,
}

impl Plan {
    fn new() -> Plan {
        Plan {
            designated: HashSet::new(),
            edge_count: HashMap::new(),
        }
    }
}

/// Lay out a tour of the local graph `(ids, edges)` anchored at local index
/// `anchor` as a proto sequence. Vertices in `designate` (global ids) that
/// are not yet designated get live plateaus at their tour-designated slot.
/// With `v_r` set, a graph edge keeps both interval copies as edges only if
/// both endpoints are in `v_r`; with one endpoint in `v_r` only the copy
/// adjacent to that endpoint's designated slot stays an edge and the other
/// becomes a bridge.
fn tour_protos(
    ids: &[usize],
    pts: Vec<Point>,
    edges: &[(usize, usize)],
    anchor: usize,
    designate: &HashSet<usize>,
    v_r: Option<&HashSet<usize>>,
    plan: &mut Plan,
    born: usize,
) -> Result<Vec<Proto>, ConstructError> {
    let g = SimpleGraph {
        vertices: pts,
        edges: edges.to_vec(),
    };
    let t = tour::graph_tour(&g, anchor, (0.0, 1.0))?;
    let mut edge_slots: HashSet<usize> = HashSet::new();
    match v_r {
        None => {
            for (i, s) in t.slots.iter().enumerate() {
                if matches!(s, Slot::Edge { .. }) {
                    edge_slots.insert(i);
                }
            }
        }
        Some(vr) => {
            let mut per: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
            for (i, s) in t.slots.iter().enumerate() {
                if let Slot::Edge { from, to } = s {
                    per.entry(key(*from, *to)).or_default().push(i);
                }
            }
            for ((a, b), slots) in per {
                let (ina, inb) = (vr.contains(&ids[a]), vr.contains(&ids[b]));
                if ina && inb {
                    edge_slots.extend(slots);
                } else {
                    let vp = if ina { a } else { b };
                    let des = t.designated[&vp];
                    let pick = slots
                        .iter()
                        .copied()
                        .find(|&i| i + 1 == des || i == des + 1)
                        .unwrap_or(slots[0]);
                    edge_slots.insert(pick);
                }
            }
        }
    }
    let mut out = Vec::with_capacity(t.slots.len());
    for (i, s) in t.slots.iter().enumerate() {
        match s {
            Slot::Vertex { v, designated } => {
                let gv = ids[*v];
                let ok =
                    *designated && designate.contains(&gv) && !plan.designated.contains(&gv);
                if ok {
                    plan.designated.insert(gv);
                }
                out.push(plateau(gv, ok, born));
            }
            Slot::Edge { from, to } => {
                let (gf, gt) = (ids[*from], ids[*to]);
                let kind = if edge_slots.contains(&i) {
                    *plan.edge_count.entry(key(gf, gt)).or_insert(0) += 1;
                    Kind::Edge
                } else {
                    Kind::Bridge
                };
                out.push(Proto {
                    weight: 1.0,
                    kind,
                    ends: (gf, gt),
                    born,
                });
            }
        }
    }
    Ok(out)
}

fn assemble(
    h: &NetHierarchy,
    span: (f64, f64),
    protos: Vec<Proto>,
) -> Vec<IntervalRecord> {
    let total: f64 = protos.iter().map(|p| p.weight).sum();
    let len = span.1 - span.0;
    let n = protos.len();
    let mut out = Vec::with_capacity(n);
    let mut cum = span.0;
    for (i, p) in protos.into_iter().enumerate() {
        let b = if i + 1 == n {
            span.1
        } else {
            cum + len * p.weight / total
        };
        out.push(IntervalRecord {
            a: cum,
            b,
            kind: p.kind,
            ends: p.ends,
            from: h.points[p.ends.0].clone(),
            to: h.points[p.ends.1].clone(),
            born: p.born,
        });
        cum = b;
    }
    out
}

/// Connected components of the index graph, each sorted ascending, ordered
/// by smallest contained vertex.
fn index_components(ids: &[usize], edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let local: HashMap<usize, usize> = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let g = SimpleGraph {
        vertices: ids.iter().map(|_| vec![0.0]).collect(),
        edges: edges.iter().map(|&(a, b)| (local[&a], local[&b])).collect(),
    };
    let mut comps: Vec<Vec<usize>> = tour::component_indices(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|i| ids[i]).collect();
            v.sort_unstable();
            v
        })
        .collect();
    comps.sort_by_key(|c| c[0]);
    comps
}

fn component_protos(
    h: &NetHierarchy,
    comp: &[usize],
    anchor: usize,
    designate: &HashSet<usize>,
    v_r: Option<&HashSet<usize>>,
    edges_global: &[(usize, usize)],
    plan: &mut Plan,
    born: usize,
) -> Result<Vec<Proto>, ConstructError> {
    let local: HashMap<usize, usize> = comp.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let edges: Vec<(usize, usize)> = edges_global
        .iter()
        .filter(|(a, b)| local.contains_key(a) && local.contains_key(b))
        .map(|&(a, b)| (local[&a], local[&b]))
        .collect();
    let pts: Vec<Point> = comp.iter().map(|&v| h.points[v].clone()).collect();
    tour_protos(comp, pts, &edges, local[&anchor], designate, v_r, plan, born)
}

/// Tour a possibly disconnected local graph around the hub vertex `hub`:
/// the hub's component (if any) first, then each remaining component framed
/// by a pair of bridges to its anchor, separated by hub plateaus.
#[allow(clippy::too_many_arguments)]
fn multi_component_protos(
    h: &NetHierarchy,
    hub: usize,
    ids: &[usize],
    edges_global: &[(usize, usize)],
    designate: &HashSet<usize>,
    v_r: Option<&HashSet<usize>>,
    anchor_pool: &HashSet<usize>,
    plan: &mut Plan,
    born: usize,
) -> Result<Vec<Proto>, ConstructError> {
    let mut comps = index_components(ids, edges_global);
    let hub_pos = comps.iter().position(|c| c.contains(&hub));
    let mut protos = Vec::new();
    let mut rest: Vec<Vec<usize>> = Vec::new();
    match hub_pos {
        Some(i) => {
            let c = comps.remove(i);
            rest.extend(comps);
            protos.extend(component_protos(
                h, &c, hub, designate, v_r, edges_global, plan, born,
            )?);
        }
        None => {
            rest.extend(comps);
            let ok = designate.contains(&hub) && !plan.designated.contains(&hub);
            if ok {
                plan.designated.insert(hub);
            }
            protos.push(plateau(hub, ok, born));
        }
    }
    for c in rest {
        let anchor = c
            .iter()
            .copied()
            .find(|v| anchor_pool.contains(v))
            .ok_or_else(|| {
                ConstructError::PropertyViolation(
                    "component anchor".into(),
                    format!("component {c:?} has no admissible anchor"),
                )
            })?;
        protos.push(Proto {
            weight: 1.0,
            kind: Kind::Bridge,
            ends: (hub, anchor),
            born,
        });
        protos.extend(component_protos(
            h, &c, anchor, designate, v_r, edges_global, plan, born,
        )?);
        protos.push(Proto {
            weight: 1.0,
            kind: Kind::Bridge,
            ends: (anchor, hub),
            born,
        });
        let ok = designate.contains(&hub) && !plan.designated.contains(&hub);
        if ok {
            plan.designated.insert(hub);
        }
        protos.push(plateau(hub, ok, born));
    }
    Ok(protos)
}

/// Step 0: lay out the level-0 state on [0,1], touring the graph of flat
/// pairs anchored at the base point, with bridges between components.
pub fn initialize(
    h: &NetHierarchy,
    fits: &LineFitTable,
) -> Result<LevelState, ConstructError> {
    let v0 = h.x0;
    let lvl = h.level(0);
    let mut plan = Plan::new();
    let protos = if lvl.len() == 1 {
        vec![plateau(lvl[0], true, 0)]
    } else {
        if fits.is_empty() {
            return Err(ConstructError::BadParameter(
                "hierarchy has no fitted levels".into(),
            ));
        }
        let pairs = nets::flat_pairs(h, fits, 0);
        let designate: HashSet<usize> = lvl.iter().copied().collect();
        multi_component_protos(
            h, v0, lvl, &pairs, &designate, None, &designate, &mut plan, 0,
        )?
    };
    Ok(LevelState {
        level: 0,
        records: assemble(h, (0.0, 1.0), protos),
        flat_mode: false,
    })
}

/// One refinement step k -> k+1, following the stage order: bridges stay,
/// edges with a flat endpoint subdivide along the chain of next-level
/// points, edges with no flat endpoint become bridges, frozen stay, flat
/// plateaus refine by terminal type, non-flat plateaus get local graph
/// tours, left to right.
pub fn refine(
    state: &LevelState,
    h: &NetHierarchy,
    fits: &LineFitTable,
    ledger: &ChoiceLedger,
) -> Result<LevelState, ConstructError> {
    let k = state.level;
    let kp = k + 1;
    if kp >= fits.len() || kp >= h.levels.len() {
        return Err(ConstructError::BadParameter(format!(
            "cannot refine level {k}: no fits at level {kp}"
        )));
    }
    let astar = h.params.astar();
    let alpha0 = h.params.alpha0;
    let alpha = |v: usize| fits[k][&v].alpha;
    let flat = |v: usize| alpha(v) < alpha0;
    let relaxed = |v: usize| match ledger.alpha_relax {
        Some(a) => alpha(v) >= alpha0 && alpha(v) < a,
        None => false,
    };
    let next_pairs = nets::flat_pairs(h, fits, kp);
    let next_level: HashSet<usize> = h.level(kp).iter().copied().collect();
    let edge_split = 14.0 * astar * h.scale(kp);
    let window = h.params.cstar * h.scale(kp);

    let n = state.records.len();
    let mut children: Vec<Option<Vec<Proto>>> = (0..n).map(|_| None).collect();
    let mut plan = Plan::new();

    // edges with at least one flat endpoint: twin pairs, primary first
    let mut groups: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (i, r) in state.records.iter().enumerate() {
        if r.kind == Kind::Edge {
            groups.entry(key(r.ends.0, r.ends.1)).or_default().push(i);
        }
    }
    let mut flat_edge_groups: Vec<Vec<usize>> = groups
        .values()
        .filter(|idxs| {
            let e = state.records[idxs[0]].ends;
            flat(e.0) || flat(e.1)
        })
        .cloned()
        .collect();
    flat_edge_groups.sort_by_key(|idxs| idxs[0]);
    for idxs in &flat_edge_groups {
        if idxs.len() != 2 {
            return Err(ConstructError::PropertyViolation(
                "P4".into(),
                format!("edge image with {} copies at level {k}", idxs.len()),
            ));
        }
        let (pi, ti) = (idxs[0].min(idxs[1]), idxs[0].max(idxs[1]));
        let prim = &state.records[pi];
        let ball = if flat(prim.ends.0) {
            prim.ends.0
        } else {
            prim.ends.1
        };
        let other = if ball == prim.ends.0 {
            prim.ends.1
        } else {
            prim.ends.0
        };
        let mut chain = nets::chain_between(h, fits, k, ball, other);
        if chain.first() != Some(&prim.ends.0) {
            chain.reverse();
        }
        if chain.first() != Some(&prim.ends.0) || chain.last() != Some(&prim.ends.1) {
            return Err(ConstructError::PropertyViolation(
                "chain".into(),
                format!("chain between {:?} does not join the edge ends", prim.ends),
            ));
        }
        let l = chain.len();
        let gaps: Vec<f64> = chain
            .windows(2)
            .map(|w| dist(&h.points[w[0]], &h.points[w[1]]))
            .collect();
        let gap_total: f64 = gaps.iter().sum();
        let mut prim_children = Vec::with_capacity(2 * l - 3);
        for i in 0..l - 1 {
            let kind = if gaps[i] < edge_split {
                Kind::Edge
            } else {
                Kind::Bridge
            };
            let w = if l == 2 {
                1.0
            } else {
                0.95 * gaps[i] / gap_total
            };
            if kind == Kind::Edge {
                *plan.edge_count.entry(key(chain[i], chain[i + 1])).or_insert(0) += 1;
            }
            prim_children.push(Proto {
                weight: w,
                kind,
                ends: (chain[i], chain[i + 1]),
                born: kp,
            });
            if i + 2 < l {
                let v = chain[i + 1];
                let ok = !plan.designated.contains(&v);
                if ok {
                    plan.designated.insert(v);
                }
                let mut p = plateau(v, ok, kp);
                p.weight = 0.05 / (l - 2) as f64;
                prim_children.push(p);
            }
        }
        // twin: same chain oriented to the twin's own traversal direction,
        // all plateaus retired
        let twin = &state.records[ti];
        let same_dir = twin.ends == prim.ends;
        if !same_dir && twin.ends != (prim.ends.1, prim.ends.0) {
            return Err(ConstructError::PropertyViolation(
                "P4".into(),
                format!("twin ends {:?} vs {:?}", twin.ends, prim.ends),
            ));
        }
        let mut twin_children: Vec<Proto> = Vec::with_capacity(prim_children.len());
        let iter: Vec<&Proto> = if same_dir {
            prim_children.iter().collect()
        } else {
            prim_children.iter().rev().collect()
        };
        for p in iter {
            let ends = if same_dir { p.ends } else { (p.ends.1, p.ends.0) };
            let kind = match p.kind {
                Kind::NetPoint | Kind::Frozen => Kind::Frozen,
                e => e,
            };
            if kind == Kind::Edge {
                *plan.edge_count.entry(key(ends.0, ends.1)).or_insert(0) += 1;
            }
            twin_children.push(Proto {
                weight: p.weight,
                kind,
                ends,
                born: kp,
            });
        }
        children[pi] = Some(prim_children);
        children[ti] = Some(twin_children);
    }

    // bridges stay; frozen stay; edges with no flat endpoint become bridges
    for (i, r) in state.records.iter().enumerate() {
        if children[i].is_some() {
            continue;
        }
        match r.kind {
            Kind::Bridge => {
                children[i] = Some(vec![Proto {
                    weight: 1.0,
                    kind: Kind::Bridge,
                    ends: r.ends,
                    born: r.born,
                }]);
            }
            Kind::Edge => {
                children[i] = Some(vec![Proto {
                    weight: 1.0,
                    kind: Kind::Bridge,
                    ends: r.ends,
                    born: kp,
                }]);
            }
            Kind::Frozen => {
                children[i] = Some(vec![Proto {
                    weight: 1.0,
                    kind: Kind::Frozen,
                    ends: r.ends,
                    born: r.born,
                }]);
            }
            Kind::NetPoint => {}
        }
    }

    // flat plateaus by terminal type, left to right
    for i in 0..n {
        if children[i].is_some() {
            continue;
        }
        let r = &state.records[i];
        let v = r.vertex();
        if !(flat(v) || relaxed(v)) {
            continue;
        }
        if relaxed(v) {
            let ok = !plan.designated.contains(&v);
            if ok {
                plan.designated.insert(v);
            }
            children[i] = Some(vec![plateau(v, ok, kp)]);
            continue;
        }
        let fit = &fits[k][&v];
        let pv = &h.points[v];
        let cv = fit.line.coord(pv);
        let reach = 14.0 * astar * h.scale(k);
        let mut sides: [Option<f64>; 2] = [None, None];
        for &w in h.level(k) {
            if w == v || dist(&h.points[w], pv) >= reach {
                continue;
            }
            let dc = fit.line.coord(&h.points[w]) - cv;
            let side = if dc > 0.0 {
                0
            } else if dc < 0.0 {
                1
            } else {
                continue;
            };
            let best = sides[side].get_or_insert(dc.abs());
            if dc.abs() < *best {
                *best = dc.abs();
            }
        }
        let n_sides = sides.iter().filter(|s| s.is_some()).count();
        let protos = match n_sides {
            2 => {
                // non-terminal: unchanged
                let ok = !plan.designated.contains(&v);
                if ok {
                    plan.designated.insert(v);
                }
                vec![plateau(v, ok, kp)]
            }
            _ => {
                // terminal: tour the next-level points of the near window,
                // one-sided away from the partner, or the full ball
                let dir: Option<f64> = if n_sides == 1 {
                    Some(if sides[0].is_some() { -1.0 } else { 1.0 })
                } else {
                    None
                };
                let mut ids: Vec<usize> = h
                    .level(kp)
                    .iter()
                    .copied()
                    .filter(|&w| {
                        if w == v {
                            return true;
                        }
                        if dist(&h.points[w], pv) >= window {
                            return false;
                        }
                        match dir {
                            Some(d) => (fit.line.coord(&h.points[w]) - cv) * d > 0.0,
                            None => true,
                        }
                    })
                    .collect();
                ids.sort_by(|&a, &b| {
                    fit.line
                        .coord(&h.points[a])
                        .partial_cmp(&fit.line.coord(&h.points[b]))
                        .unwrap()
                        .then(a.cmp(&b))
                });
                if ids.len() == 1 {
                    let ok = !plan.designated.contains(&v);
                    if ok {
                        plan.designated.insert(v);
                    }
                    vec![plateau(v, ok, kp)]
                } else {
                    let designate: HashSet<usize> = ids.iter().copied().collect();
                    let edges: Vec<(usize, usize)> =
                        ids.windows(2).map(|w| (w[0], w[1])).collect();
                    component_protos(
                        h, &ids, v, &designate, None, &edges, &mut plan, kp,
                    )?
                }
            }
        };
        children[i] = Some(protos);
    }

    // non-flat plateaus, left to right, over what remains
    for i in 0..n {
        if children[i].is_some() {
            continue;
        }
        let r = &state.records[i];
        debug_assert_eq!(r.kind, Kind::NetPoint);
        let v = r.vertex();
        let pv = &h.points[v];
        let v_r: HashSet<usize> = h
            .level(kp)
            .iter()
            .copied()
            .filter(|&w| dist(&h.points[w], pv) < window && !plan.designated.contains(&w))
            .collect();
        let l_r: Vec<(usize, usize)> = next_pairs
            .iter()
            .copied()
            .filter(|&(a, b)| {
                (v_r.contains(&a) || v_r.contains(&b))
                    && plan.edge_count.get(&(a, b)).copied().unwrap_or(0) < 2
            })
            .collect();
        let mut tilde: Vec<usize> = v_r.iter().copied().collect();
        for &(a, b) in &l_r {
            tilde.push(a);
            tilde.push(b);
        }
        tilde.sort_unstable();
        tilde.dedup();
        let protos = if tilde.is_empty() {
            vec![plateau(v, false, kp)]
        } else if tilde == [v] && l_r.is_empty() {
            let ok = !plan.designated.contains(&v);
            if ok {
                plan.designated.insert(v);
            }
            vec![plateau(v, ok, kp)]
        } else {
            debug_assert!(tilde.iter().all(|w| next_level.contains(w)));
            multi_component_protos(
                h, v, &tilde, &l_r, &v_r.clone(), Some(&v_r), &v_r, &mut plan, kp,
            )?
        };
        children[i] = Some(protos);
    }

    let mut records = Vec::new();
    for (i, r) in state.records.iter().enumerate() {
        let protos = children[i].take().expect("every record refined");
        records.extend(assemble(h, (r.a, r.b), protos));
    }
    Ok(LevelState {
        level: kp,
        records,
        flat_mode: false,
    })
}

/// Pass/fail per structural property, with witnesses.
#[derive(Debug, Default)]
pub struct PropertyReport {
    pub violations: Vec<(String, String)>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, prop: &str, witness: String) {
        self.violations.push((prop.to_string(), witness));
    }
}

/// True if the two segments touch anywhere other than at endpoints of both.
fn segments_conflict(p1: &Point, q1: &Point, p2: &Point, q2: &Point, tol: f64) -> bool {
    let d1 = geom::sub(q1, p1);
    let d2 = geom::sub(q2, p2);
    let r = geom::sub(p1, p2);
    let (a, e, f) = (geom::dot(&d1, &d1), geom::dot(&d2, &d2), geom::dot(&d2, &r));
    // degenerate segments are reported under (P2), not here
    if a <= 0.0 || e <= 0.0 {
        return false;
    }
    let c = geom::dot(&d1, &r);
    let b = geom::dot(&d1, &d2);
    let denom = a * e - b * b;
    // nearly parallel: check collinear overlap explicitly
    if denom.abs() <= 1e-12 * a * e {
        let line = geom::Line::new(p1.clone(), d1.clone());
        if line.dist(p2) < tol && line.dist(q2) < tol {
            let (s1, e1) = (line.coord(p1), line.coord(q1));
            let (s2, e2) = (line.coord(p2), line.coord(q2));
            let (lo1, hi1) = (s1.min(e1), s1.max(e1));
            let (lo2, hi2) = (s2.min(e2), s2.max(e2));
            let overlap = hi1.min(hi2) - lo1.max(lo2);
            return overlap > tol;
        }
        return false;
    }
    let mut s = (b * f - c * e) / denom;
    s = s.clamp(0.0, 1.0);
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    let x = geom::lerp(p1, q1, s);
    let y = geom::lerp(p2, q2, t);
    if dist(&x, &y) >= tol {
        return false;
    }
    let eps = 1e-9;
    let interior1 = s > eps && s < 1.0 - eps;
    let interior2 = t > eps && t < 1.0 - eps;
    interior1 && interior2
}

/// Structural checks (P1)-(P7) against the hierarchy; in flat mode edges
/// are one-to-one and plateau designation is checked jointly.
pub fn check_properties(
    state: &LevelState,
    h: &NetHierarchy,
    fits: &LineFitTable,
) -> PropertyReport {
    let mut rep = PropertyReport::default();
    let k = state.level;
    let recs = &state.records;
    let tol = 1e-9 * h.r0.max(1.0);

    // (P1) alternating partition of [0,1]
    if recs.is_empty() {
        rep.push("P1", "no records".into());
        return rep;
    }
    if recs[0].a != 0.0 || recs[recs.len() - 1].b != 1.0 {
        rep.push("P1", "records do not span [0,1]".into());
    }
    if recs.len() % 2 == 0 {
        rep.push("P1", "even record count".into());
    }
    for (i, r) in recs.iter().enumerate() {
        let want_closed = i % 2 == 0;
        if r.is_closed() != want_closed {
            rep.push("P1", format!("record {i} breaks closed/open alternation"));
        }
        if r.b < r.a || (r.is_closed() && !state.flat_mode && r.b <= r.a) {
            rep.push("P1", format!("record {i} degenerate: [{}, {}]", r.a, r.b));
        }
        if i > 0 && recs[i - 1].b != r.a {
            rep.push("P1", format!("gap or overlap before record {i}"));
        }
    }

    // (P2) representation: plateaus constant, passes have distinct ends
    for (i, r) in recs.iter().enumerate() {
        if r.is_closed() && r.from != r.to {
            rep.push("P2", format!("plateau {i} is not constant"));
        }
        if !r.is_closed() && (r.ends.0 == r.ends.1 || r.from == r.to) {
            rep.push("P2", format!("record {i} maps onto a degenerate segment"));
        }
    }

    // continuity across boundaries
    for i in 1..recs.len() {
        if dist(&recs[i - 1].to, &recs[i].from) > tol {
            rep.push("continuity", format!("jump at boundary of records {i}"));
        }
    }

    // (P3) edge images below the scale bound; flat mode is tighter
    let bound = if state.flat_mode {
        3.0 * h.scale(k)
    } else {
        14.0 * h.params.astar() * h.scale(k)
    };
    for (i, r) in recs.iter().enumerate() {
        if r.kind == Kind::Edge && r.image_diam() >= bound * (1.0 + 1e-9) {
            rep.push(
                "P3",
                format!("edge {i} has diameter {} >= {bound}", r.image_diam()),
            );
        }
    }

    // (P4) edges pair up exactly (or are unique in flat mode) and distinct
    // images meet only at endpoints
    let mut groups: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (i, r) in recs.iter().enumerate() {
        if r.kind == Kind::Edge {
            groups.entry(key(r.ends.0, r.ends.1)).or_default().push(i);
        }
    }
    let want = if state.flat_mode { 1 } else { 2 };
    for (kk, v) in &groups {
        if v.len() != want {
            rep.push("P4", format!("edge image {kk:?} has {} copies", v.len()));
        }
    }
    let keys: Vec<(usize, usize)> = groups.keys().copied().collect();
    for i in 0..keys.len() {
        for j in i + 1..keys.len() {
            let (a, b) = (keys[i], keys[j]);
            if segments_conflict(
                &h.points[a.0],
                &h.points[a.1],
                &h.points[b.0],
                &h.points[b.1],
                tol,
            ) {
                rep.push("P4", format!("edge images {a:?} and {b:?} overlap"));
            }
        }
    }

    // (P5) flat pairs are realized by edges, and edges with a flat endpoint
    // are flat pairs
    if k < fits.len() {
        for (v, vp) in nets::flat_pairs(h, fits, k) {
            if !groups.contains_key(&key(v, vp)) {
                rep.push("P5", format!("flat pair ({v},{vp}) has no edge"));
            }
        }
        for (i, r) in recs.iter().enumerate() {
            if r.kind != Kind::Edge {
                continue;
            }
            for (e, o) in [(r.ends.0, r.ends.1), (r.ends.1, r.ends.0)] {
                if fits[k][&e].alpha < h.params.alpha0
                    && !nets::is_flat_pair(h, fits, k, e, o)
                {
                    rep.push("P5", format!("edge {i} with flat end {e} is not a flat pair"));
                }
            }
        }
    }

    // (P6) plateau images are current net points; designation enumerates V_k
    let lvl: HashSet<usize> = h.level(k).iter().copied().collect();
    let mut designated: HashMap<usize, usize> = HashMap::new();
    for (i, r) in recs.iter().enumerate() {
        if r.is_closed() {
            if !lvl.contains(&r.vertex()) {
                rep.push("P6", format!("plateau {i} images a non-net point"));
            }
            if r.kind == Kind::NetPoint {
                *designated.entry(r.vertex()).or_insert(0) += 1;
            }
        }
    }
    if state.flat_mode {
        // jointly: two live plateaus total, holding the domain endpoints
        let live: Vec<&IntervalRecord> =
            recs.iter().filter(|r| r.kind == Kind::NetPoint).collect();
        if live.len() != 2 || live[0].a != 0.0 || live[1].b != 1.0 {
            rep.push("P6'", format!("{} live plateaus or wrong placement", live.len()));
        }
        if state.count(Kind::Bridge) != 0 {
            rep.push("P7'", "flat mode admits no bridges".into());
        }
        // every net point owns exactly one constancy interval
        let mut owners: HashMap<usize, usize> = HashMap::new();
        for r in recs.iter().filter(|r| r.is_closed()) {
            *owners.entry(r.vertex()).or_insert(0) += 1;
        }
        for &v in h.level(k) {
            match owners.get(&v).copied().unwrap_or(0) {
                1 => {}
                c => rep.push("P6'", format!("net point {v} owns {c} plateaus")),
            }
        }
        // terminal type: the end plateaus have partners on one side only,
        // every other net point on both sides
        if k < fits.len() {
            let mut sides: HashMap<usize, [usize; 2]> = HashMap::new();
            for (a, b) in nets::flat_pairs(h, fits, k) {
                for (v, w) in [(a, b), (b, a)] {
                    let line = &fits[k][&v].line;
                    let dc = line.coord(&h.points[w]) - line.coord(&h.points[v]);
                    let e = sides.entry(v).or_insert([0, 0]);
                    e[if dc > 0.0 { 0 } else { 1 }] += 1;
                }
            }
            let endv: HashSet<usize> =
                [recs[0].vertex(), recs[recs.len() - 1].vertex()].into();
            for &v in h.level(k) {
                let occ = sides
                    .get(&v)
                    .map_or(0, |c| c.iter().filter(|&&n| n > 0).count());
                let want = if endv.contains(&v) { 1 } else { 2 };
                if occ != want {
                    rep.push(
                        "P7'",
                        format!("net point {v} has partners on {occ} sides, expected {want}"),
                    );
                }
            }
        }
    } else {
        for &v in h.level(k) {
            match designated.get(&v).copied().unwrap_or(0) {
                1 => {}
                c => rep.push("P6", format!("net point {v} designated {c} times")),
            }
        }
    }

    // (P7) designated plateaus touch a copy of every incident edge image
    if !state.flat_mode {
        for (i, r) in recs.iter().enumerate() {
            if r.kind != Kind::NetPoint {
                continue;
            }
            let v = r.vertex();
            for (kk, members) in &groups {
                if kk.0 != v && kk.1 != v {
                    continue;
                }
                let touches = members.iter().any(|&m| {
                    let e = &recs[m];
                    e.b == r.a || r.b == e.a
                });
                if !touches {
                    rep.push(
                        "P7",
                        format!("plateau {i} at {v} not adjacent to an edge copy {kk:?}"),
                    );
                }
            }
        }
    }
    rep
}

/// Full construction: Step 0 plus refinements through the deepest fitted
/// level, validating every state and the uniform refinement bound.
pub fn run(
    h: &NetHierarchy,
    fits: &LineFitTable,
    ledger: &ChoiceLedger,
) -> Result<Vec<LevelState>, ConstructError> {
    let first = initialize(h, fits)?;
    let rep = check_properties(&first, h, fits);
    if let Some((p, w)) = rep.violations.into_iter().next() {
        return Err(ConstructError::PropertyViolation(p, format!("level 0: {w}")));
    }
    let mut states = vec![first];
    let max_level = fits.len().saturating_sub(1);
    for k in 0..max_level {
        let next = refine(&states[k], h, fits, ledger)?;
        let rep = check_properties(&next, h, fits);
        if let Some((p, w)) = rep.violations.into_iter().next() {
            return Err(ConstructError::PropertyViolation(
                p,
                format!("level {}: {w}", k + 1),
            ));
        }
        let bound = 30.0 * h.params.astar() * h.scale(k + 1);
        let d = sup_distance(&states[k], &next);
        if d > bound * (1.0 + 1e-9) {
            return Err(ConstructError::PropertyViolation(
                "refine bound".into(),
                format!("|f_{} - f_{}| = {d} > {bound}", k + 1, k),
            ));
        }
        states.push(next);
    }
    Ok(states)
}

/// Largest relative ball width tolerated by the flat-continuum pipeline;
/// the flatness cutoff is 512 times this, i.e. 1/16.
pub const FLAT_BETA_CAP: f64 = 1.0 / 8192.0;

/// Output of the flat-continuum pipeline.
#[derive(Debug)]
pub struct FlatRun {
    pub hierarchy: NetHierarchy,
    pub fits: LineFitTable,
    pub states: Vec<LevelState>,
    /// Largest relative ball width seen over all fitted balls.
    pub beta_max: f64,
}

/// One refinement step of the flat-continuum variant: edges subdivide along
/// their chains with every interior plateau retired, frozen plateaus stay,
/// and only the two live end plateaus refine, extending the curve outward
/// past the current endpoint. No interval ever becomes a bridge.
pub fn refine_flat(
    state: &LevelState,
    h: &NetHierarchy,
    fits: &LineFitTable,
) -> Result<LevelState, ConstructError> {
    let k = state.level;
    let kp = k + 1;
    if !state.flat_mode {
        return Err(ConstructError::BadParameter(
            "refine_flat needs a flat-mode state".into(),
        ));
    }
    if kp >= fits.len() || kp >= h.levels.len() {
        return Err(ConstructError::BadParameter(format!(
            "cannot refine level {k}: no fits at level {kp}"
        )));
    }
    let astar = h.params.astar();
    let window = h.params.cstar * h.scale(kp);
    let n = state.records.len();
    let mut children: Vec<Option<Vec<Proto>>> = (0..n).map(|_| None).collect();

    for (i, r) in state.records.iter().enumerate() {
        match r.kind {
            Kind::Bridge => {
                return Err(ConstructError::PropertyViolation(
                    "P7'".into(),
                    format!("bridge at level {k} in flat mode"),
                ));
            }
            Kind::Frozen => {
                children[i] = Some(vec![Proto {
                    weight: 1.0,
                    kind: Kind::Frozen,
                    ends: r.ends,
                    born: r.born,
                }]);
            }
            Kind::Edge => {
                let mut chain = nets::chain_between(h, fits, k, r.ends.0, r.ends.1);
                if chain.first() != Some(&r.ends.0) {
                    chain.reverse();
                }
                if chain.first() != Some(&r.ends.0) || chain.last() != Some(&r.ends.1) {
                    return Err(ConstructError::PropertyViolation(
                        "chain".into(),
                        format!("chain between {:?} does not join the edge ends", r.ends),
                    ));
                }
                let l = chain.len();
                let gaps: Vec<f64> = chain
                    .windows(2)
                    .map(|w| dist(&h.points[w[0]], &h.points[w[1]]))
                    .collect();
                let gap_total: f64 = gaps.iter().sum();
                let split = 14.0 * astar * h.scale(kp);
                let mut kids = Vec::with_capacity(2 * l - 3);
                for j in 0..l - 1 {
                    if gaps[j] >= split {
                        // the sample leaves a gap no connected flat set could:
                        // report the emptiest ball over that gap
                        let mid =
                            geom::lerp(&h.points[chain[j]], &h.points[chain[j + 1]], 0.5);
                        let rad = gaps[j] / 2.0;
                        let inball: Vec<Point> = h
                            .points
                            .iter()
                            .filter(|p| dist(p, &mid) <= rad)
                            .cloned()
                            .collect();
                        let beta = match geom::minimax_line(&inball, h.params.fit) {
                            Ok((_, w)) => w / (2.0 * rad),
                            Err(_) => f64::INFINITY,
                        };
                        return Err(ConstructError::FlatnessViolated { x: mid, r: rad, beta });
                    }
                    let w = if l == 2 { 1.0 } else { 0.95 * gaps[j] / gap_total };
                    kids.push(Proto {
                        weight: w,
                        kind: Kind::Edge,
                        ends: (chain[j], chain[j + 1]),
                        born: kp,
                    });
                    if j + 2 < l {
                        let mut p = plateau(chain[j + 1], false, kp);
                        p.weight = 0.05 / (l - 2) as f64;
                        kids.push(p);
                    }
                }
                children[i] = Some(kids);
            }
            Kind::NetPoint => {
                if i != 0 && i != n - 1 {
                    return Err(ConstructError::PropertyViolation(
                        "P6'".into(),
                        format!("live plateau in the interior at level {k}"),
                    ));
                }
            }
        }
    }

    // the two end plateaus extend away from their one partner side
    for (i, at_one) in [(0usize, false), (n - 1, true)] {
        let r = &state.records[i];
        if r.kind != Kind::NetPoint {
            return Err(ConstructError::PropertyViolation(
                "P6'".into(),
                format!("end interval at level {k} is not a live plateau"),
            ));
        }
        let v = r.vertex();
        let fit = &fits[k][&v];
        let pv = &h.points[v];
        let cv = fit.line.coord(pv);
        let reach = 14.0 * astar * h.scale(k);
        let mut sides: [bool; 2] = [false, false];
        for &w in h.level(k) {
            if w == v || dist(&h.points[w], pv) >= reach {
                continue;
            }
            let dc = fit.line.coord(&h.points[w]) - cv;
            if dc > 0.0 {
                sides[0] = true;
            } else if dc < 0.0 {
                sides[1] = true;
            }
        }
        if sides[0] && sides[1] {
            return Err(ConstructError::PropertyViolation(
                "P7'".into(),
                format!("end plateau at {v} has partners on both sides"),
            ));
        }
        // away direction; with no partner at all keep the positive side
        let dir = if sides[0] { -1.0 } else { 1.0 };
        let mut ids: Vec<usize> = h
            .level(kp)
            .iter()
            .copied()
            .filter(|&w| {
                w == v
                    || (dist(&h.points[w], pv) < window
                        && (fit.line.coord(&h.points[w]) - cv) * dir > 0.0)
            })
            .collect();
        // order outward-first for the left end, outward-last for the right
        ids.sort_by(|&a, &b| {
            let ca = (fit.line.coord(&h.points[a]) - cv) * dir;
            let cb = (fit.line.coord(&h.points[b]) - cv) * dir;
            if at_one {
                ca.partial_cmp(&cb).unwrap().then(a.cmp(&b))
            } else {
                cb.partial_cmp(&ca).unwrap().then(a.cmp(&b))
            }
        });
        let l = ids.len();
        let mut kids = Vec::with_capacity(2 * l - 1);
        for (j, &w) in ids.iter().enumerate() {
            // the live plateau sits at the domain endpoint
            let live = if at_one { j == l - 1 } else { j == 0 };
            kids.push(Proto {
                weight: 1.0,
                kind: if live { Kind::NetPoint } else { Kind::Frozen },
                ends: (w, w),
                born: kp,
            });
            if j + 1 < l {
                kids.push(Proto {
                    weight: 1.0,
                    kind: Kind::Edge,
                    ends: (w, ids[j + 1]),
                    born: kp,
                });
            }
        }
        children[i] = Some(kids);
    }

    let mut records = Vec::new();
    for (i, r) in state.records.iter().enumerate() {
        let protos = children[i].take().expect("every record refined");
        records.extend(assemble(h, (r.a, r.b), protos));
    }
    Ok(LevelState {
        level: kp,
        records,
        flat_mode: true,
    })
}

/// Flat-continuum pipeline: diameter-pair nets at ratio 1/2, whole-sample
/// ball fits, and the no-bridge refinement. Errors with `FlatnessViolated`
/// if any fitted ball is wider than `FLAT_BETA_CAP` times its diameter, or
/// if the refinement meets a gap no connected flat set could leave.
pub fn run_flat_continuum(
    sample: &[Point],
    depth: usize,
    s: f64,
) -> Result<FlatRun, ConstructError> {
    if !(s > 1.0) {
        return Err(ConstructError::BadParameter(format!(
            "s = {s} must exceed 1"
        )));
    }
    let h = nets::build_flat_nets(sample, depth, s)?;
    if let Some(w) = nets::validate_nets(&h).into_iter().next() {
        return Err(ConstructError::PropertyViolation("nets".into(), w));
    }
    let (fits, beta_max, witness) = nets::flat_fit_lines(&h, h.params.fit)?;
    if beta_max > FLAT_BETA_CAP {
        let (vi, r, beta) = witness.unwrap();
        return Err(ConstructError::FlatnessViolated {
            x: h.points[vi].clone(),
            r,
            beta,
        });
    }

    // Step 0: the diameter pair holds the ends, one edge between
    let (i0, i1) = (h.level(0)[0], h.level(0)[1]);
    let first = LevelState {
        level: 0,
        records: assemble(
            &h,
            (0.0, 1.0),
            vec![
                Proto {
                    weight: 1.0,
                    kind: Kind::NetPoint,
                    ends: (i0, i0),
                    born: 0,
                },
                Proto {
                    weight: 1.0,
                    kind: Kind::Edge,
                    ends: (i0, i1),
                    born: 0,
                },
                Proto {
                    weight: 1.0,
                    kind: Kind::NetPoint,
                    ends: (i1, i1),
                    born: 0,
                },
            ],
        ),
        flat_mode: true,
    };
    let rep = check_properties(&first, &h, &fits);
    if let Some((p, w)) = rep.violations.into_iter().next() {
        return Err(ConstructError::PropertyViolation(p, format!("level 0: {w}")));
    }
    let mut states = vec![first];
    let max_level = fits.len().saturating_sub(1);
    for k in 0..max_level {
        let next = refine_flat(&states[k], &h, &fits)?;
        let rep = check_properties(&next, &h, &fits);
        if let Some((p, w)) = rep.violations.into_iter().next() {
            return Err(ConstructError::PropertyViolation(
                p,
                format!("level {}: {w}", k + 1),
            ));
        }
        let bound = 30.0 * h.params.astar() * h.scale(k + 1);
        let d = sup_distance(&states[k], &next);
        if d > bound * (1.0 + 1e-9) {
            return Err(ConstructError::PropertyViolation(
                "refine bound".into(),
                format!("|f_{} - f_{}| = {d} > {bound}", k + 1, k),
            ));
        }
        states.push(next);
    }
    Ok(FlatRun {
        hierarchy: h,
        fits,
        states,
        beta_max,
    })
}

/// A level's map with every bridge pair bent at its midpoint so that the
/// image meets the edge skeleton and the other bridges in finitely many
/// points, while each bent bridge stays within its length budget.
#[derive(Clone, Debug)]
pub struct ReroutedLevel {
    pub state: LevelState,
    /// Per record: the interior waypoint of a bent bridge.
    pub bends: Vec<Option<Point>>,
}

impl ReroutedLevel {
    pub fn eval(&self, t: f64) -> Point {
        let recs = &self.state.records;
        let t = t.clamp(0.0, 1.0);
        let (mut lo, mut hi) = (0usize, recs.len() - 1);
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            if recs[mid].a <= t {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        let r = &recs[lo];
        match &self.bends[lo] {
            Some(m) if r.b > r.a => {
                let u = (t - r.a) / (r.b - r.a);
                if u <= 0.5 {
                    geom::lerp(&r.from, m, 2.0 * u)
                } else {
                    geom::lerp(m, &r.to, 2.0 * u - 1.0)
                }
            }
            _ => self.state.eval(t),
        }
    }

    /// Arc length of the image of record `i`.
    pub fn record_length(&self, i: usize) -> f64 {
        let r = &self.state.records[i];
        match &self.bends[i] {
            Some(m) => dist(&r.from, m) + dist(m, &r.to),
            None => r.image_diam(),
        }
    }
}

/// Unit vector perpendicular to `u`, built from the axis least aligned
/// with it.
fn perp_axis(u: &Point) -> Option<Point> {
    if u.len() < 2 {
        return None;
    }
    let axis = (0..u.len())
        .min_by(|&a, &b| u[a].abs().partial_cmp(&u[b].abs()).unwrap())
        .unwrap();
    let mut n: Point = vec![0.0; u.len()];
    n[axis] = 1.0;
    let d = geom::dot(&n, u);
    let mut v = geom::sub(&n, &geom::scale(u, d));
    let nv = geom::norm(&v);
    if nv <= 0.0 {
        return None;
    }
    for c in v.iter_mut() {
        *c /= nv;
    }
    Some(v)
}

fn reroute_level(st: &LevelState, h: &NetHierarchy) -> Result<ReroutedLevel, ConstructError> {
    let mut bends: Vec<Option<Point>> = vec![None; st.records.len()];
    let mut groups: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (i, r) in st.records.iter().enumerate() {
        if r.kind == Kind::Bridge {
            groups.entry(key(r.ends.0, r.ends.1)).or_default().push(i);
        }
    }
    let mut ordered: Vec<((usize, usize), Vec<usize>)> = groups.into_iter().collect();
    ordered.sort_by_key(|(_, idxs)| idxs[0]);
    let slack = h.scale(st.level);
    for (j, (kk, idxs)) in ordered.into_iter().enumerate() {
        if idxs.len() != 2 {
            return Err(ConstructError::PropertyViolation(
                "bridge pairing".into(),
                format!("bridge image {kk:?} has {} copies", idxs.len()),
            ));
        }
        let (p, q) = (&h.points[kk.0], &h.points[kk.1]);
        let chord = dist(p, q);
        if chord <= 0.0 {
            continue;
        }
        // bending by delta adds at most 4 delta^2 / (2 chord) of length, so
        // any delta below sqrt(2 chord slack + slack^2)/2 keeps the image
        // within chord + slack; the per-pair taper keeps apex heights
        // distinct so parallel chords cannot produce overlapping legs
        let delta = 0.45
            * (2.0 * chord * slack + slack * slack).sqrt()
            * (1.0 - (j as f64 + 1.0) * 2.0f64.powi(-20));
        let u = geom::scale(&geom::sub(q, p), 1.0 / chord);
        let nvec = perp_axis(&u).ok_or_else(|| {
            ConstructError::BadParameter("rerouting needs ambient dimension >= 2".into())
        })?;
        let m = geom::add(&geom::lerp(p, q, 0.5), &geom::scale(&nvec, delta));
        for &i in &idxs {
            bends[i] = Some(m.clone());
        }
    }
    Ok(ReroutedLevel {
        state: st.clone(),
        bends,
    })
}

/// Bend every bridge pair of every level. The two copies of a pair share
/// the bent waypoint, so they traverse the same rerouted image in opposite
/// directions; distinct pairs get distinct apex heights.
pub fn make_essentially_two_to_one(
    states: &[LevelState],
    h: &NetHierarchy,
) -> Result<Vec<ReroutedLevel>, ConstructError> {
    states.iter().map(|st| reroute_level(st, h)).collect()
}

/// True if the segments run along a common line for a stretch longer than
/// `tol` (meeting in one point is fine, sharing a subsegment is not).
fn segments_overlap_positively(
    p1: &Point,
    q1: &Point,
    p2: &Point,
    q2: &Point,
    tol: f64,
) -> bool {
    let d1 = geom::sub(q1, p1);
    if geom::dot(&d1, &d1) <= 0.0 {
        return false;
    }
    let line = geom::Line::new(p1.clone(), d1);
    if line.dist(p2) >= tol || line.dist(q2) >= tol {
        return false;
    }
    let (s1, e1) = (line.coord(p1), line.coord(q1));
    let (s2, e2) = (line.coord(p2), line.coord(q2));
    let (lo1, hi1) = (s1.min(e1), s1.max(e1));
    let (lo2, hi2) = (s2.min(e2), s2.max(e2));
    hi1.min(hi2) - lo1.max(lo2) > tol
}

/// Post-reroute checks: bent bridges stay within chord + rho_k r0, and no
/// two distinct pieces (edge images, bridge legs) share a subsegment.
pub fn reroute_report(rr: &ReroutedLevel, h: &NetHierarchy) -> Vec<String> {
    let mut bad = Vec::new();
    let slack = h.scale(rr.state.level);
    let tol = 1e-9 * h.r0.max(1.0);
    let mut pieces: HashMap<(Kind, usize, usize), Vec<(Point, Point)>> = HashMap::new();
    for (i, r) in rr.state.records.iter().enumerate() {
        let kk = key(r.ends.0, r.ends.1);
        match r.kind {
            Kind::Edge => {
                pieces
                    .entry((Kind::Edge, kk.0, kk.1))
                    .or_insert_with(|| vec![(r.from.clone(), r.to.clone())]);
            }
            Kind::Bridge => {
                let budget = r.image_diam() + slack * (1.0 + 1e-12);
                if rr.record_length(i) > budget {
                    bad.push(format!(
                        "bridge {i} is {} long, budget {budget}",
                        rr.record_length(i)
                    ));
                }
                pieces
                    .entry((Kind::Bridge, kk.0, kk.1))
                    .or_insert_with(|| match &rr.bends[i] {
                        Some(m) => {
                            vec![(r.from.clone(), m.clone()), (m.clone(), r.to.clone())]
                        }
                        None => vec![(r.from.clone(), r.to.clone())],
                    });
            }
            _ => {}
        }
    }
    let keys: Vec<(Kind, usize, usize)> = pieces.keys().copied().collect();
    for i in 0..keys.len() {
        for j in i + 1..keys.len() {
            for (a1, b1) in &pieces[&keys[i]] {
                for (a2, b2) in &pieces[&keys[j]] {
                    if segments_overlap_positively(a1, b1, a2, b2, tol) {
                        bad.push(format!(
                            "pieces {:?} and {:?} share a subsegment",
                            keys[i], keys[j]
                        ));
                    }
                }
            }
        }
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::FitMode;
    use crate::nets::Params;

    fn setup(e: &[Point], depth: usize, s: f64) -> (NetHierarchy, LineFitTable) {
        let p = Params::new(s, 0.5).unwrap().with_fit(FitMode::Exact2d);
        let h = nets::build_nets(e, depth, &p).unwrap();
        let fits = nets::fit_lines(&h, FitMode::Exact2d).unwrap();
        (h, fits)
    }

    #[test]
    fn singleton_cloud() {
        let e = vec![vec![0.25, 0.75]];
        let (h, fits) = setup(&e, 1, 1.0);
        let states = run(&h, &fits, &ChoiceLedger::default()).unwrap();
        assert_eq!(states[0].records.len(), 1);
        assert_eq!(states[0].records[0].kind, Kind::NetPoint);
        assert_eq!(states[0].eval(0.5), vec![0.25, 0.75]);
    }

    #[test]
    fn two_point_cloud_stays_two_edges() {
        let e = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let (h, fits) = setup(&e, 4, 1.0);
        let states = run(&h, &fits, &ChoiceLedger::default()).unwrap();
        assert_eq!(states.len(), 4);
        for st in &states {
            assert_eq!(st.count(Kind::Edge), 2, "level {}", st.level);
            assert_eq!(st.count(Kind::Bridge), 0);
            assert!(check_properties(st, &h, &fits).passed());
        }
        // anchored at the base point on both ends
        assert_eq!(states[2].eval(0.0), vec![0.0, 0.0]);
        assert_eq!(states[2].eval(1.0), vec![0.0, 0.0]);
    }

    #[test]
    fn midpoint_split_gives_two_edge_pairs_and_frozen_twins() {
        let e = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 0.0]];
        let (h, fits) = setup(&e, 2, 1.0);
        assert_eq!(h.levels[0], vec![0, 1]);
        assert_eq!(h.levels[1].len(), 3);
        let states = run(&h, &fits, &ChoiceLedger::default()).unwrap();
        let s1 = &states[1];
        assert_eq!(s1.count(Kind::Edge), 4);
        assert_eq!(s1.count(Kind::NetPoint), 3);
        assert_eq!(s1.count(Kind::Frozen), 2);
        assert_eq!(s1.count(Kind::Bridge), 0);
    }

    #[test]
    fn collinear_cloud_never_bridges() {
        let e: Vec<Point> = (0..6).map(|i| vec![i as f64, 0.0]).collect();
        let (h, fits) = setup(&e, 4, 1.0);
        let states = run(&h, &fits, &ChoiceLedger::default()).unwrap();
        for st in &states {
            assert_eq!(st.count(Kind::Bridge), 0, "level {}", st.level);
            // edge images cover the segment exactly twice
            let total: f64 = st
                .records
                .iter()
                .filter(|r| r.kind == Kind::Edge)
                .map(|r| r.image_diam())
                .sum();
            let expect = 2.0 * 5.0;
            assert!(
                (total - expect).abs() < 1e-9,
                "level {}: edge length {total}",
                st.level
            );
        }
    }

    #[test]
    fn scattered_triangle_uses_bridges() {
        // flat pairs are empty at level 0 (high alpha), so Step 0 is the
        // disconnected case with plateau components and bridges
        let e = vec![vec![0.0, 0.0], vec![4.0, 0.0], vec![2.0, 3.0]];
        let (h, fits) = setup(&e, 2, 1.0);
        assert_eq!(h.levels[0], vec![0, 1]);
        let states = run(&h, &fits, &ChoiceLedger::default()).unwrap();
        let s0 = &states[0];
        assert_eq!(s0.count(Kind::Bridge), 2);
        assert_eq!(s0.count(Kind::Edge), 0);
        let s1 = &states[1];
        assert_eq!(s1.count(Kind::NetPoint), 3);
        assert!(s1.count(Kind::Bridge) >= 4);
        assert!(check_properties(s1, &h, &fits).passed());
    }

    #[test]
    fn corrupted_state_fails_p4() {
        let e = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let (h, fits) = setup(&e, 2, 1.0);
        let mut states = run(&h, &fits, &ChoiceLedger::default()).unwrap();
        let st = &mut states[1];
        let i = st
            .records
            .iter()
            .position(|r| r.kind == Kind::Edge)
            .unwrap();
        st.records[i].ends = (st.records[i].ends.0, st.records[i].ends.0);
        let rep = check_properties(st, &h, &fits);
        assert!(!rep.passed());
        assert!(rep.violations.iter().any(|(p, _)| p == "P4"));
    }

    #[test]
    fn random_cloud_smoke() {
        // small deterministic cloud; the full fuzz lives in the acceptance suite
        let mut seed = 0x12345678u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        let e: Vec<Point> = (0..12).map(|_| vec![rnd(), rnd()]).collect();
        let (h, fits) = setup(&e, 4, 1.0);
        let states = run(&h, &fits, &ChoiceLedger::default()).unwrap();
        assert_eq!(states.len(), 4);
        for st in &states {
            assert!(check_properties(st, &h, &fits).passed(), "level {}", st.level);
        }
        // every deepest-level net point appears in the image
        let last = states.last().unwrap();
        for &v in h.level(last.level) {
            let hit = last
                .records
                .iter()
                .any(|r| r.is_closed() && r.vertex() == v);
            assert!(hit, "net point {v} missing a plateau");
        }
    }

    #[test]
    fn sup_distance_exact_on_plateau_shift() {
        let mk = |y: f64| LevelState {
            level: 0,
            records: vec![
                IntervalRecord {
                    a: 0.0,
                    b: 0.4,
                    kind: Kind::NetPoint,
                    ends: (0, 0),
                    from: vec![0.0, y],
                    to: vec![0.0, y],
                    born: 0,
                },
                IntervalRecord {
                    a: 0.4,
                    b: 0.6,
                    kind: Kind::Edge,
                    ends: (0, 1),
                    from: vec![0.0, y],
                    to: vec![1.0, 0.0],
                    born: 0,
                },
                IntervalRecord {
                    a: 0.6,
                    b: 1.0,
                    kind: Kind::NetPoint,
                    ends: (1, 1),
                    from: vec![1.0, 0.0],
                    to: vec![1.0, 0.0],
                    born: 0,
                },
            ],
            flat_mode: false,
        };
        let d = sup_distance(&mk(0.0), &mk(0.25));
        assert!((d - 0.25).abs() < 1e-12);
    }

    #[test]
    fn flat_segment_run_structure() {
        let e: Vec<Point> = (0..=512).map(|i| vec![i as f64 / 512.0, 0.0]).collect();
        let fr = run_flat_continuum(&e, 6, 1.5).unwrap();
        assert_eq!(fr.states.len(), 6);
        assert!(fr.beta_max < 1e-15);
        let r0 = fr.hierarchy.r0;
        assert!((r0 - 1.0).abs() < 1e-12);
        for st in &fr.states {
            assert_eq!(st.count(Kind::Bridge), 0);
            assert_eq!(st.count(Kind::NetPoint), 2);
            let first = &st.records[0];
            let last = &st.records[st.records.len() - 1];
            assert_eq!(first.kind, Kind::NetPoint);
            assert_eq!(last.kind, Kind::NetPoint);
            // edges are one-to-one: combined length equals one sweep
            let total: f64 = st
                .records
                .iter()
                .filter(|r| r.kind == Kind::Edge)
                .map(|r| r.image_diam())
                .sum();
            assert!((total - 1.0).abs() < 1e-9, "level {}", st.level);
        }
        // level 0 is the thirds layout between the diameter pair
        let s0 = &fr.states[0];
        assert_eq!(s0.records.len(), 3);
        assert!((s0.records[0].b - 1.0 / 3.0).abs() < 1e-12);
        assert!((s0.records[1].b - 2.0 / 3.0).abs() < 1e-12);
        let e0 = s0.eval(0.0)[0];
        let e1 = s0.eval(1.0)[0];
        assert!((e0 - e1).abs() == 1.0);
    }

    #[test]
    fn flat_arc_run_passes_checks() {
        let amp = 2e-5;
        let e: Vec<Point> = (0..=800)
            .map(|i| {
                let x = i as f64 / 800.0;
                vec![x, amp * (std::f64::consts::PI * x).sin()]
            })
            .collect();
        let fr = run_flat_continuum(&e, 5, 1.25).unwrap();
        assert!(fr.beta_max > 0.0 && fr.beta_max <= FLAT_BETA_CAP);
        let last = fr.states.last().unwrap();
        let verts = fr.hierarchy.level(last.level).len();
        assert!(verts > 8, "only {verts} net points at the last level");
        // one plateau per net point, all retired except the two ends
        let closed = last.records.iter().filter(|r| r.is_closed()).count();
        assert_eq!(closed, verts);
        assert_eq!(last.count(Kind::NetPoint), 2);
    }

    #[test]
    fn flat_two_point_run_shallow_ok_deep_fails() {
        let e = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let fr = run_flat_continuum(&e, 2, 2.0).unwrap();
        for st in &fr.states {
            assert_eq!(st.records.len(), 3);
        }
        // with no points between the ends, the single edge eventually
        // breaks the flat diameter bound
        let err = run_flat_continuum(&e, 4, 2.0).unwrap_err();
        assert!(matches!(err, ConstructError::PropertyViolation(ref p, _) if p == "P3"));
    }

    #[test]
    fn bent_sample_fails_flatness_check() {
        let e: Vec<Point> = (0..=100)
            .map(|i| {
                let x = i as f64 / 50.0;
                vec![x, 0.5 * (1.0 - (x - 1.0).abs())]
            })
            .collect();
        match run_flat_continuum(&e, 3, 1.5) {
            Err(ConstructError::FlatnessViolated { beta, .. }) => {
                assert!(beta > FLAT_BETA_CAP);
            }
            other => panic!("expected a flatness error, got {other:?}"),
        }
    }

    #[test]
    fn reroute_bends_bridge_pairs_apart() {
        let e = vec![vec![0.0, 0.0], vec![4.0, 0.0], vec![2.0, 3.0]];
        let (h, fits) = setup(&e, 2, 1.0);
        let states = run(&h, &fits, &ChoiceLedger::default()).unwrap();
        let rerouted = make_essentially_two_to_one(&states, &h).unwrap();
        for rr in &rerouted {
            let bad = reroute_report(rr, &h);
            assert!(bad.is_empty(), "level {}: {bad:?}", rr.state.level);
        }
        // the two copies of the level-0 pair share their waypoint and pass
        // through it at the middle of each interval
        let rr0 = &rerouted[0];
        let idxs: Vec<usize> = rr0
            .state
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.kind == Kind::Bridge)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(idxs.len(), 2);
        let m = rr0.bends[idxs[0]].clone().unwrap();
        assert_eq!(Some(&m), rr0.bends[idxs[1]].as_ref());
        let r = &rr0.state.records[idxs[0]];
        let mid = 0.5 * (r.a + r.b);
        assert!(dist(&rr0.eval(mid), &m) < 1e-12);
        let chord_mid = geom::lerp(&r.from, &r.to, 0.5);
        assert!(dist(&m, &chord_mid) > 0.1);
        // within the length budget but strictly longer than the chord
        let len = rr0.record_length(idxs[0]);
        assert!(len > r.image_diam());
        assert!(len <= r.image_diam() + h.scale(0));
    }

    #[test]
    fn reroute_separates_collinear_bridge_chords() {
        let e = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]];
        let p = Params::new(1.0, 0.5).unwrap().with_fit(FitMode::Exact2d);
        let h = nets::build_nets(&e, 0, &p).unwrap();
        let seg = |a: f64, b: f64, kind, ends: (usize, usize)| IntervalRecord {
            a,
            b,
            kind,
            ends,
            from: e[ends.0].clone(),
            to: e[ends.1].clone(),
            born: 0,
        };
        let st = LevelState {
            level: 0,
            records: vec![
                seg(0.0, 0.1, Kind::NetPoint, (0, 0)),
                seg(0.1, 0.3, Kind::Bridge, (0, 2)),
                seg(0.3, 0.4, Kind::Frozen, (2, 2)),
                seg(0.4, 0.5, Kind::Bridge, (2, 0)),
                seg(0.5, 0.6, Kind::Frozen, (0, 0)),
                seg(0.6, 0.7, Kind::Bridge, (0, 1)),
                seg(0.7, 0.8, Kind::Frozen, (1, 1)),
                seg(0.8, 0.9, Kind::Bridge, (1, 0)),
                seg(0.9, 1.0, Kind::Frozen, (0, 0)),
            ],
            flat_mode: false,
        };
        // straight chords overlap along [0,1] x {0}
        let straight = ReroutedLevel {
            state: st.clone(),
            bends: vec![None; 9],
        };
        let bad = reroute_report(&straight, &h);
        assert!(bad.iter().any(|m| m.contains("share a subsegment")), "{bad:?}");
        // bending separates them: distinct apex heights, no shared stretch
        let rr = make_essentially_two_to_one(&[st], &h).unwrap().remove(0);
        assert!(reroute_report(&rr, &h).is_empty());
        let m1 = rr.bends[1].clone().unwrap();
        let m2 = rr.bends[5].clone().unwrap();
        assert!(dist(&m1, &m2) > 0.1);
    }
}
