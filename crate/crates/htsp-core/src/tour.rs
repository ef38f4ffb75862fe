//! Tours on connected finite simple graphs of maximum valence 2: cycles wind
//! twice, arcs walk there and back, and every vertex gets a designated
//! constancy slot adjacent to a preimage of each incident edge.

use crate::geom::Point;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum TourError {
    #[error("graph is not connected")]
    NotConnected,
    #[error("vertex {0} has valence {1} > 2")]
    ValenceExceeded(usize, usize),
    #[error("bad parameter: {0}")]
    BadParameter(String),
}

#[derive(Clone, Debug)]
pub struct SimpleGraph {
    pub vertices: Vec<Point>,
    /// Unordered index pairs; no loops, no duplicates.
    pub edges: Vec<(usize, usize)>,
}

impl SimpleGraph {
    pub fn valences(&self) -> Vec<usize> {
        let mut v = vec![0; self.vertices.len()];
        for &(a, b) in &self.edges {
            v[a] += 1;
            v[b] += 1;
        }
        v
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for &(a, b) in &self.edges {
            if a == v {
                out.push(b);
            } else if b == v {
                out.push(a);
            }
        }
        out.sort_unstable();
        out
    }
}

/// Connected components as original-index vertex lists, each sorted ascending;
/// components ordered by smallest contained vertex.
pub fn component_indices(g: &SimpleGraph) -> Vec<Vec<usize>> {
    let n = g.vertices.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in &g.edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut comps = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut stack = vec![start];
        seen[start] = true;
        let mut comp = Vec::new();
        while let Some(v) = stack.pop() {
            comp.push(v);
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

/// Connected components as subgraphs, vertex order preserved.
pub fn components(g: &SimpleGraph) -> Vec<SimpleGraph> {
    component_indices(g)
        .into_iter()
        .map(|idx| {
            let back: HashMap<usize, usize> =
                idx.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            SimpleGraph {
                vertices: idx.iter().map(|&v| g.vertices[v].clone()).collect(),
                edges: g
                    .edges
                    .iter()
                    .filter(|(a, b)| back.contains_key(a) && back.contains_key(b))
                    .map(|&(a, b)| (back[&a], back[&b]))
                    .collect(),
            }
        })
        .collect()
}

/// One slot of a tour: a constancy component at a vertex or a linear pass
/// over an edge.
#[derive(Clone, Debug, PartialEq)]
pub enum Slot {
    Vertex { v: usize, designated: bool },
    Edge { from: usize, to: usize },
}

/// A tour of the graph laid out on `delta`: alternating vertex/edge slots,
/// equal spans (lengths are reassigned downstream), endpoints at the anchor.
#[derive(Clone, Debug)]
pub struct Tour {
    pub slots: Vec<Slot>,
    /// Equal-length spans of the slots inside `delta`, in order.
    pub spans: Vec<(f64, f64)>,
    /// Graph vertex index -> slot position of its designated constancy slot.
    pub designated: HashMap<usize, usize>,
    pub delta: (f64, f64),
}

impl Tour {
    /// Piecewise map value at parameter t (constancy on vertex slots, linear
    /// interpolation on edge slots).
    pub fn eval(&self, g: &SimpleGraph, t: f64) -> Point {
        let t = t.clamp(self.delta.0, self.delta.1);
        for (slot, &(a, b)) in self.slots.iter().zip(&self.spans) {
            if t <= b {
                return match slot {
                    Slot::Vertex { v, .. } => g.vertices[*v].clone(),
                    Slot::Edge { from, to } => {
                        let u = (t - a) / (b - a);
                        crate::geom::lerp(&g.vertices[*from], &g.vertices[*to], u)
                    }
                };
            }
        }
        match self.slots.last().unwrap() {
            Slot::Vertex { v, .. } => g.vertices[*v].clone(),
            Slot::Edge { to, .. } => g.vertices[*to].clone(),
        }
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Vertex sequence of the tour walk: cycles wind twice in one direction, arcs
/// go anchor -> near end -> far end -> anchor. The first leg moves toward the
/// anchor's lowest-index neighbor.
fn walk_sequence(g: &SimpleGraph, v0: usize) -> Result<Vec<usize>, TourError> {
    let n = g.vertices.len();
    let val = g.valences();
    if let Some(v) = (0..n).find(|&v| val[v] > 2) {
        return Err(TourError::ValenceExceeded(v, val[v]));
    }
    if component_indices(g).len() != 1 {
        return Err(TourError::NotConnected);
    }
    if n == 1 {
        return Ok(vec![v0]);
    }
    let is_cycle = g.edges.len() == n && val.iter().all(|&v| v == 2);
    if is_cycle {
        // cycle order starting at v0, first toward the lowest-index neighbor
        let mut order = vec![v0];
        let mut prev = v0;
        let mut cur = g.neighbors(v0)[0];
        while cur != v0 {
            order.push(cur);
            let next = *g
                .neighbors(cur)
                .iter()
                .find(|&&w| w != prev)
                .expect("cycle step");
            prev = cur;
            cur = next;
        }
        let mut ws = Vec::with_capacity(2 * n + 1);
        ws.extend(order.iter().copied());
        ws.extend(order.iter().copied());
        ws.push(v0);
        return Ok(ws);
    }
    // arc: find the path order from one endpoint
    let start = (0..n).find(|&v| val[v] <= 1).expect("arc endpoint");
    let mut path = vec![start];
    let mut prev = usize::MAX;
    let mut cur = start;
    while path.len() < n {
        let next = *g
            .neighbors(cur)
            .iter()
            .find(|&&w| w != prev)
            .expect("path step");
        path.push(next);
        prev = cur;
        cur = next;
    }
    let j = path.iter().position(|&v| v == v0).expect("anchor on path");
    // orient so the first leg heads toward the lowest-index neighbor of v0
    let toward_front = if j == 0 {
        false
    } else if j == n - 1 {
        true
    } else {
        path[j - 1] < path[j + 1]
    };
    let p: Vec<usize> = if toward_front {
        path
    } else {
        path.into_iter().rev().collect()
    };
    let j = p.iter().position(|&v| v == v0).unwrap();
    let mut ws = Vec::with_capacity(2 * n - 1);
    for i in (0..=j).rev() {
        ws.push(p[i]);
    }
    for item in p.iter().take(n).skip(1) {
        ws.push(*item);
    }
    for i in (j..n - 1).rev() {
        ws.push(p[i]);
    }
    Ok(ws)
}

/// Lay out a tour of `g` anchored at `v0` on the compact interval `delta`.
pub fn graph_tour(
    g: &SimpleGraph,
    v0: usize,
    delta: (f64, f64),
) -> Result<Tour, TourError> {
    if v0 >= g.vertices.len() {
        return Err(TourError::BadParameter(format!("anchor {v0} out of range")));
    }
    if !(delta.0 < delta.1) {
        return Err(TourError::BadParameter("degenerate interval".into()));
    }
    let ws = walk_sequence(g, v0)?;
    let mut slots = Vec::with_capacity(2 * ws.len() - 1);
    for (i, &v) in ws.iter().enumerate() {
        if i > 0 {
            slots.push(Slot::Edge {
                from: ws[i - 1],
                to: v,
            });
        }
        slots.push(Slot::Vertex {
            v,
            designated: false,
        });
    }
    // designated slot per vertex: first constancy occurrence whose adjacent
    // slots cover every incident edge
    let mut incident: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    for &(a, b) in &g.edges {
        incident.entry(a).or_default().push(edge_key(a, b));
        incident.entry(b).or_default().push(edge_key(a, b));
    }
    let mut designated: HashMap<usize, usize> = HashMap::new();
    for i in 0..slots.len() {
        let v = match slots[i] {
            Slot::Vertex { v, .. } => v,
            _ => continue,
        };
        if designated.contains_key(&v) {
            continue;
        }
        let mut near = Vec::new();
        if i > 0 {
            if let Slot::Edge { from, to } = slots[i - 1] {
                near.push(edge_key(from, to));
            }
        }
        if i + 1 < slots.len() {
            if let Slot::Edge { from, to } = slots[i + 1] {
                near.push(edge_key(from, to));
            }
        }
        let inc = incident.get(&v).cloned().unwrap_or_default();
        if inc.iter().all(|e| near.contains(e)) {
            designated.insert(v, i);
            if let Slot::Vertex { designated: d, .. } = &mut slots[i] {
                *d = true;
            }
        }
    }
    debug_assert_eq!(designated.len(), g.vertices.len());
    let m = slots.len();
    let w = (delta.1 - delta.0) / m as f64;
    let spans: Vec<(f64, f64)> = (0..m)
        .map(|i| (delta.0 + i as f64 * w, delta.0 + (i + 1) as f64 * w))
        .collect();
    Ok(Tour {
        slots,
        spans,
        designated,
        delta,
    })
}

/// Structural check of the tour properties (1)-(4); returns the violations.
pub fn tour_check(g: &SimpleGraph, t: &Tour) -> Vec<String> {
    let mut bad = Vec::new();
    let anchor_of = |s: &Slot| match s {
        Slot::Vertex { v, .. } => Some(*v),
        _ => None,
    };
    let first = anchor_of(&t.slots[0]);
    let last = anchor_of(t.slots.last().unwrap());
    if first != last || first.is_none() {
        bad.push("endpoints do not rest at the anchor".into());
    }
    // alternation and continuity
    for (i, s) in t.slots.iter().enumerate() {
        let even = i % 2 == 0;
        match (even, s) {
            (true, Slot::Vertex { .. }) | (false, Slot::Edge { .. }) => {}
            _ => bad.push(format!("slot {i} breaks alternation")),
        }
        if i > 0 {
            let prev_end = match &t.slots[i - 1] {
                Slot::Vertex { v, .. } => *v,
                Slot::Edge { to, .. } => *to,
            };
            let cur_start = match s {
                Slot::Vertex { v, .. } => *v,
                Slot::Edge { from, .. } => *from,
            };
            if prev_end != cur_start {
                bad.push(format!("discontinuity before slot {i}"));
            }
        }
    }
    // edge coverage exactly twice
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for s in &t.slots {
        if let Slot::Edge { from, to } = s {
            *count.entry(edge_key(*from, *to)).or_insert(0) += 1;
        }
    }
    for &(a, b) in &g.edges {
        if count.get(&edge_key(a, b)).copied().unwrap_or(0) != 2 {
            bad.push(format!("edge ({a},{b}) not covered exactly twice"));
        }
    }
    if count.len() != g.edges.len() {
        bad.push("tour traverses a non-edge".into());
    }
    // every vertex visited and designated adjacency
    for v in 0..g.vertices.len() {
        match t.designated.get(&v) {
            None => bad.push(format!("vertex {v} has no designated slot")),
            Some(&i) => {
                let mut near = Vec::new();
                if i > 0 {
                    if let Slot::Edge { from, to } = t.slots[i - 1] {
                        near.push(edge_key(from, to));
                    }
                }
                if i + 1 < t.slots.len() {
                    if let Slot::Edge { from, to } = t.slots[i + 1] {
                        near.push(edge_key(from, to));
                    }
                }
                for &(a, b) in &g.edges {
                    if (a == v || b == v) && !near.contains(&edge_key(a, b)) {
                        bad.push(format!(
                            "designated slot of {v} misses incident edge ({a},{b})"
                        ));
                    }
                }
            }
        }
    }
    bad
}
