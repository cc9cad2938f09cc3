//! Separating-set memory and the candidate sets searched by the removal phases.

use crate::graph::{canonical_key, node_less, EndMark, NodeRef, WindowGraph};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

pub type PairKey = (usize, usize, usize);

/// Recorded separating sets and minimum absolute test statistics, one entry
/// per homologous pair class. Sets are stored with the later endpoint at lag 0.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SepSetStore {
    sets: BTreeMap<PairKey, BTreeSet<Vec<NodeRef>>>,
    imin: BTreeMap<PairKey, f64>,
}

fn placement(a: NodeRef, b: NodeRef) -> (PairKey, usize) {
    (canonical_key(a, b).0, a.lag.min(b.lag))
}

impl SepSetStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a separating set of `a` and `b`, given in the placement of the pair.
    /// Endpoints and nodes after both endpoints are dropped.
    pub fn add(&mut self, a: NodeRef, b: NodeRef, set: &[NodeRef]) {
        let (key, d) = placement(a, b);
        let mut s: Vec<NodeRef> = set
            .iter()
            .filter(|&&v| v != a && v != b)
            .filter_map(|v| v.toward_present(d))
            .collect();
        s.sort();
        s.dedup();
        self.sets.entry(key).or_default().insert(s);
    }

    /// Recorded separating sets of `a` and `b`, in the placement of the pair.
    pub fn get(&self, a: NodeRef, b: NodeRef) -> Vec<Vec<NodeRef>> {
        let (key, d) = placement(a, b);
        match self.sets.get(&key) {
            Some(ss) => ss.iter().map(|s| s.iter().map(|v| v.past(d)).collect()).collect(),
            None => Vec::new(),
        }
    }

    pub fn has_sepset(&self, a: NodeRef, b: NodeRef) -> bool {
        self.sets.get(&placement(a, b).0).is_some_and(|s| !s.is_empty())
    }

    pub fn imin(&self, a: NodeRef, b: NodeRef) -> f64 {
        self.imin.get(&placement(a, b).0).copied().unwrap_or(f64::INFINITY)
    }

    pub fn update_imin(&mut self, a: NodeRef, b: NodeRef, statistic: f64) {
        if statistic.is_nan() {
            return;
        }
        let e = self.imin.entry(placement(a, b).0).or_insert(f64::INFINITY);
        *e = e.min(statistic.abs());
    }

    /// All recorded sets, keyed canonically.
    pub fn iter(&self) -> impl Iterator<Item = (&PairKey, &BTreeSet<Vec<NodeRef>>)> {
        self.sets.iter()
    }

    pub fn n_pairs(&self) -> usize {
        self.sets.len()
    }
}

pub(crate) fn directed(g: &WindowGraph, u: NodeRef, v: NodeRef) -> bool {
    g.mark_at(u, v) == Some(EndMark::Tail) && g.mark_at(v, u) == Some(EndMark::Head)
}

/// Window nodes `u` with `u -> v`.
pub fn parents(g: &WindowGraph, v: NodeRef) -> Vec<NodeRef> {
    g.neighbors(v).into_iter().filter(|&u| directed(g, u, v)).collect()
}

/// `pa({a, b}) \ {a, b}`.
pub fn parents_of_pair(g: &WindowGraph, a: NodeRef, b: NodeRef) -> BTreeSet<NodeRef> {
    let mut out: BTreeSet<NodeRef> = parents(g, a).into_iter().chain(parents(g, b)).collect();
    out.remove(&a);
    out.remove(&b);
    out
}

/// `nodes` together with everything connected to them by a chain of edges
/// carrying a tail at the upstream node.
pub fn known_ancestors(g: &WindowGraph, nodes: &[NodeRef]) -> BTreeSet<NodeRef> {
    let mut out = BTreeSet::new();
    let mut stack: Vec<NodeRef> = nodes.to_vec();
    while let Some(v) = stack.pop() {
        if !out.insert(v) {
            continue;
        }
        for u in g.neighbors(v) {
            if g.mark_at(u, v) == Some(EndMark::Tail) && !out.contains(&u) {
                stack.push(u);
            }
        }
    }
    out
}

/// Non-future adjacencies `w != y` of `x` without a head at `w`.
pub fn apds_t(g: &WindowGraph, x: NodeRef, y: NodeRef) -> BTreeSet<NodeRef> {
    g.neighbors(x)
        .into_iter()
        .filter(|&w| w != y && w.lag >= x.lag && g.mark_at(w, x) != Some(EndMark::Head))
        .collect()
}

/// Candidate D-Sep nodes of `b` relative to `a` for pairs where neither is an
/// ancestor of the other. Requires the collider rule to have been applied.
pub fn napds_t(g: &WindowGraph, b: NodeRef, a: NodeRef) -> BTreeSet<NodeRef> {
    let mark = |at: NodeRef, other: NodeRef| g.mark_at(at, other);
    let tail = |at, other| mark(at, other) == Some(EndMark::Tail);
    let head = |at, other| mark(at, other) == Some(EndMark::Head);
    // conflict marks may hide a head, so they pass as colliders
    let headish = |at, other| matches!(mark(at, other), Some(EndMark::Head) | Some(EndMark::Conflict));

    let mut out: BTreeSet<NodeRef> = apds_t(g, b, a).into_iter().filter(|&w| !tail(a, w)).collect();

    let later_ok = |w: NodeRef| {
        !tail(b, w) && !tail(a, w) && !(head(w, b) && head(w, a)) && !(w.lag < b.lag && w.lag < a.lag)
    };
    let mut seen: BTreeSet<(NodeRef, NodeRef)> = BTreeSet::new();
    let mut queue = VecDeque::new();
    for l in g.neighbors(b) {
        if l == a || tail(b, l) || head(l, a) || l.lag < a.lag {
            continue;
        }
        out.insert(l);
        if seen.insert((b, l)) {
            queue.push_back((b, l));
        }
    }
    while let Some((prev, cur)) = queue.pop_front() {
        if tail(cur, prev) {
            continue;
        }
        for w in g.neighbors(cur) {
            if w == a || w == b || w == prev || tail(cur, w) {
                continue;
            }
            if !g.adjacent(prev, w) && !(headish(cur, prev) && headish(cur, w)) {
                continue;
            }
            if !later_ok(w) {
                continue;
            }
            out.insert(w);
            if seen.insert((cur, w)) {
                queue.push_back((cur, w));
            }
        }
    }
    out.remove(&a);
    out.remove(&b);
    out
}

/// Order a search set by descending `imin(anchor, .)`, ties by lag then pair key.
pub(crate) fn sort_search(set: &BTreeSet<NodeRef>, anchor: NodeRef, imin: &SepSetStore) -> Vec<NodeRef> {
    let mut v: Vec<(f64, NodeRef)> = set.iter().map(|&w| (imin.imin(anchor, w), w)).collect();
    v.sort_by(|x, y| {
        y.0.total_cmp(&x.0)
            .then(x.1.lag.cmp(&y.1.lag))
            .then(canonical_key(anchor, x.1).0.cmp(&canonical_key(anchor, y.1).0))
    });
    v.into_iter().map(|(_, w)| w).collect()
}

/// Unshielded triples `(a, b, c)` placed so their latest node is at lag 0.
/// Each triple appears once with `a < c`.
pub(crate) fn placed_triples(g: &WindowGraph) -> Vec<(NodeRef, NodeRef, NodeRef)> {
    let mut out = Vec::new();
    for b in g.nodes() {
        let nb = g.neighbors(b);
        for &a in &nb {
            for &c in &nb {
                if !node_less(a, c) || g.adjacent(a, c) {
                    continue;
                }
                if a.lag.min(b.lag).min(c.lag) == 0 {
                    out.push((a, b, c));
                }
            }
        }
    }
    out
}
