//! Window graphs over time-lagged nodes with middle marks.
//!
//! Every edge is stored once per homologous class, keyed by `(i, tau, j)` with
//! `j` at lag 0 (and `i < j` when `tau == 0`). Queries between time-shifted
//! copies resolve to the same slot, so stationarity holds by construction.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Variable `var` at time `t - lag`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeRef {
    pub var: usize,
    pub lag: usize,
}

impl NodeRef {
    pub const fn new(var: usize, lag: usize) -> Self {
        NodeRef { var, lag }
    }

    /// The same variable `delta` steps further in the past.
    pub fn past(self, delta: usize) -> Self {
        NodeRef::new(self.var, self.lag + delta)
    }

    /// Shift towards the present; `None` when the result would lie in the future.
    pub fn toward_present(self, delta: usize) -> Option<Self> {
        self.lag.checked_sub(delta).map(|lag| NodeRef::new(self.var, lag))
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lag == 0 {
            write!(f, "X{}(t)", self.var)
        } else {
            write!(f, "X{}(t-{})", self.var, self.lag)
        }
    }
}

/// Fixed total order: `u < v` iff `u` is earlier, or contemporaneous with a smaller index.
pub fn node_less(u: NodeRef, v: NodeRef) -> bool {
    u.lag > v.lag || (u.lag == v.lag && u.var < v.var)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EndMark {
    #[serde(rename = "tail")]
    Tail,
    #[serde(rename = "head")]
    Head,
    #[serde(rename = "circle")]
    Circle,
    #[serde(rename = "x")]
    Conflict,
}

impl EndMark {
    pub fn symbol(self) -> char {
        match self {
            EndMark::Tail => '-',
            EndMark::Head => '>',
            EndMark::Circle => 'o',
            EndMark::Conflict => 'x',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MiddleMark {
    Unknown,
    L,
    R,
    Bang,
    Empty,
}

impl MiddleMark {
    pub fn symbol(self) -> &'static str {
        match self {
            MiddleMark::Unknown => "?",
            MiddleMark::L => "L",
            MiddleMark::R => "R",
            MiddleMark::Bang => "!",
            MiddleMark::Empty => "",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "?" => MiddleMark::Unknown,
            "L" => MiddleMark::L,
            "R" => MiddleMark::R,
            "!" => MiddleMark::Bang,
            "" => MiddleMark::Empty,
            _ => return None,
        })
    }

    fn strength(self) -> u8 {
        match self {
            MiddleMark::Unknown => 0,
            MiddleMark::L | MiddleMark::R => 1,
            MiddleMark::Bang => 2,
            MiddleMark::Empty => 3,
        }
    }

    /// Symbolic update `self + new`: `?` is neutral, empty absorbs, `L + R = !`.
    /// Any other pair resolves to the stronger of the two marks.
    pub fn combine(self, new: MiddleMark) -> MiddleMark {
        use MiddleMark::*;
        match (self, new) {
            (Unknown, m) | (m, Unknown) => m,
            (Empty, _) | (_, Empty) => Empty,
            (L, R) | (R, L) => Bang,
            (a, b) => {
                if a.strength() >= b.strength() {
                    a
                } else {
                    b
                }
            }
        }
    }
}

/// Marks stored in a canonical slot, from the perspective of `(i, tau) -- (j, 0)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EdgeMarks {
    pub at_i: EndMark,
    pub middle: MiddleMark,
    pub at_j: EndMark,
}

/// An edge seen from `a` towards `b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub a: NodeRef,
    pub b: NodeRef,
    pub mark_at_a: EndMark,
    pub mark_at_b: EndMark,
    pub middle: MiddleMark,
}

impl Edge {
    pub fn new(a: NodeRef, b: NodeRef, mark_at_a: EndMark, middle: MiddleMark, mark_at_b: EndMark) -> Self {
        Edge { a, b, mark_at_a, mark_at_b, middle }
    }

    pub fn reversed(self) -> Self {
        Edge { a: self.b, b: self.a, mark_at_a: self.mark_at_b, mark_at_b: self.mark_at_a, middle: self.middle }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let left = match self.mark_at_a {
            EndMark::Head => '<',
            m => m.symbol(),
        };
        let mid = match self.middle {
            MiddleMark::Empty => "-",
            m => m.symbol(),
        };
        write!(f, "{} {}{}{} {}", self.a, left, mid, self.mark_at_b.symbol(), self.b)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("self edge at {0}")]
    SelfEdge(NodeRef),
    #[error("node {0} outside window (n_vars {1}, tau_max {2})")]
    OutOfWindow(NodeRef, usize, usize),
    #[error("edge {0} points backward in time")]
    BackwardInTime(String),
    #[error("graph dimensions differ: {0}")]
    Dimension(String),
    #[error("invalid graph json: {0}")]
    Json(String),
}

/// Canonical key `(i, tau, j)` of the homologous class containing `u -- v`,
/// plus whether `u` plays the role of the `(i, tau)` endpoint.
pub fn canonical_key(u: NodeRef, v: NodeRef) -> ((usize, usize, usize), bool) {
    if u.lag > v.lag || (u.lag == v.lag && u.var < v.var) {
        ((u.var, u.lag - v.lag, v.var), true)
    } else {
        ((v.var, v.lag - u.lag, u.var), false)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowGraph {
    n_vars: usize,
    tau_max: usize,
    slots: Vec<Option<EdgeMarks>>,
}

impl WindowGraph {
    pub fn empty(n_vars: usize, tau_max: usize) -> Self {
        WindowGraph { n_vars, tau_max, slots: vec![None; (tau_max + 1) * n_vars * n_vars] }
    }

    /// Complete graph with lagged links `o-L->` and contemporaneous links `o-?-o`.
    pub fn complete_initial(n_vars: usize, tau_max: usize) -> Self {
        let mut g = Self::empty(n_vars, tau_max);
        for (i, tau, j) in g.all_keys() {
            let marks = if tau == 0 {
                EdgeMarks { at_i: EndMark::Circle, middle: MiddleMark::Unknown, at_j: EndMark::Circle }
            } else {
                EdgeMarks { at_i: EndMark::Circle, middle: MiddleMark::L, at_j: EndMark::Head }
            };
            let idx = g.index(i, tau, j);
            g.slots[idx] = Some(marks);
        }
        g
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn tau_max(&self) -> usize {
        self.tau_max
    }

    fn index(&self, i: usize, tau: usize, j: usize) -> usize {
        (tau * self.n_vars + i) * self.n_vars + j
    }

    /// All canonical keys of the window, in storage order.
    pub fn all_keys(&self) -> Vec<(usize, usize, usize)> {
        let mut keys = Vec::new();
        for tau in 0..=self.tau_max {
            for i in 0..self.n_vars {
                for j in 0..self.n_vars {
                    if tau == 0 && i >= j {
                        continue;
                    }
                    keys.push((i, tau, j));
                }
            }
        }
        keys
    }

    pub fn contains_node(&self, u: NodeRef) -> bool {
        u.var < self.n_vars && u.lag <= self.tau_max
    }

    /// All window nodes, ordered by lag then variable.
    pub fn nodes(&self) -> Vec<NodeRef> {
        let mut out = Vec::with_capacity(self.n_vars * (self.tau_max + 1));
        for lag in 0..=self.tau_max {
            for var in 0..self.n_vars {
                out.push(NodeRef::new(var, lag));
            }
        }
        out
    }

    fn slot(&self, u: NodeRef, v: NodeRef) -> Option<(usize, bool)> {
        if u == v {
            return None;
        }
        let ((i, tau, j), u_is_i) = canonical_key(u, v);
        if i >= self.n_vars || j >= self.n_vars || tau > self.tau_max {
            return None;
        }
        Some((self.index(i, tau, j), u_is_i))
    }

    pub fn slot_marks(&self, i: usize, tau: usize, j: usize) -> Option<EdgeMarks> {
        if tau > self.tau_max || i >= self.n_vars || j >= self.n_vars || (tau == 0 && i >= j) {
            return None;
        }
        self.slots[self.index(i, tau, j)]
    }

    pub fn set_slot(&mut self, i: usize, tau: usize, j: usize, marks: Option<EdgeMarks>) -> Result<(), GraphError> {
        let a = NodeRef::new(i, tau);
        let b = NodeRef::new(j, 0);
        match marks {
            Some(m) => self.set_edge(Edge::new(a, b, m.at_i, m.middle, m.at_j)),
            None => {
                self.remove(a, b);
                Ok(())
            }
        }
    }

    pub fn get(&self, u: NodeRef, v: NodeRef) -> Option<Edge> {
        let (idx, u_is_i) = self.slot(u, v)?;
        let m = self.slots[idx]?;
        Some(if u_is_i {
            Edge::new(u, v, m.at_i, m.middle, m.at_j)
        } else {
            Edge::new(u, v, m.at_j, m.middle, m.at_i)
        })
    }

    pub fn adjacent(&self, u: NodeRef, v: NodeRef) -> bool {
        self.get(u, v).is_some()
    }

    /// Mark at `at` on the edge `at -- other`.
    pub fn mark_at(&self, at: NodeRef, other: NodeRef) -> Option<EndMark> {
        self.get(at, other).map(|e| e.mark_at_a)
    }

    pub fn middle(&self, u: NodeRef, v: NodeRef) -> Option<MiddleMark> {
        self.get(u, v).map(|e| e.middle)
    }

    /// Write an edge to its canonical slot (and thus to all homologous copies).
    pub fn set_edge(&mut self, e: Edge) -> Result<(), GraphError> {
        if e.a == e.b {
            return Err(GraphError::SelfEdge(e.a));
        }
        for n in [e.a, e.b] {
            if n.var >= self.n_vars {
                return Err(GraphError::OutOfWindow(n, self.n_vars, self.tau_max));
            }
        }
        // a tail at the later endpoint would make it an ancestor of its own past
        if (e.a.lag > e.b.lag && e.mark_at_b == EndMark::Tail) || (e.b.lag > e.a.lag && e.mark_at_a == EndMark::Tail) {
            return Err(GraphError::BackwardInTime(e.to_string()));
        }
        let (idx, a_is_i) = self
            .slot(e.a, e.b)
            .ok_or(GraphError::OutOfWindow(e.a, self.n_vars, self.tau_max))?;
        self.slots[idx] = Some(if a_is_i {
            EdgeMarks { at_i: e.mark_at_a, middle: e.middle, at_j: e.mark_at_b }
        } else {
            EdgeMarks { at_i: e.mark_at_b, middle: e.middle, at_j: e.mark_at_a }
        });
        Ok(())
    }

    pub fn remove(&mut self, u: NodeRef, v: NodeRef) {
        if let Some((idx, _)) = self.slot(u, v) {
            self.slots[idx] = None;
        }
    }

    /// Set the mark at `at` on an existing edge `at -- other`.
    pub fn set_mark(&mut self, at: NodeRef, other: NodeRef, mark: EndMark) -> Result<(), GraphError> {
        if let Some(mut e) = self.get(at, other) {
            e.mark_at_a = mark;
            self.set_edge(e)?;
        }
        Ok(())
    }

    pub fn set_middle(&mut self, u: NodeRef, v: NodeRef, middle: MiddleMark) {
        if let Some((idx, _)) = self.slot(u, v) {
            if let Some(m) = self.slots[idx].as_mut() {
                m.middle = middle;
            }
        }
    }

    /// Window nodes adjacent to `u`.
    pub fn neighbors(&self, u: NodeRef) -> Vec<NodeRef> {
        let mut out = Vec::new();
        for lag in 0..=self.tau_max {
            for var in 0..self.n_vars {
                let v = NodeRef::new(var, lag);
                if v != u && self.adjacent(u, v) {
                    out.push(v);
                }
            }
        }
        out
    }

    /// Stored edges as `(i, tau, j, marks)`, in canonical order.
    pub fn canonical_edges(&self) -> Vec<(usize, usize, usize, EdgeMarks)> {
        self.all_keys()
            .into_iter()
            .filter_map(|(i, tau, j)| self.slots[self.index(i, tau, j)].map(|m| (i, tau, j, m)))
            .collect()
    }

    pub fn n_edges(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    /// Graph with variables relabelled by `perm[old] = new`.
    pub fn permuted(&self, perm: &[usize]) -> WindowGraph {
        let mut g = WindowGraph::empty(self.n_vars, self.tau_max);
        for (i, tau, j, m) in self.canonical_edges() {
            let e = Edge::new(NodeRef::new(perm[i], tau), NodeRef::new(perm[j], 0), m.at_i, m.middle, m.at_j);
            g.set_edge(e).expect("permutation preserves time order");
        }
        g
    }

    /// Canonical edges whose marks differ between `self` and `other`, rendered for humans.
    pub fn diff(&self, other: &WindowGraph) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_vars != other.n_vars || self.tau_max != other.tau_max {
            out.push(format!(
                "dimensions differ: ({}, {}) vs ({}, {})",
                self.n_vars, self.tau_max, other.n_vars, other.tau_max
            ));
            return out;
        }
        for (i, tau, j) in self.all_keys() {
            let a = NodeRef::new(i, tau);
            let b = NodeRef::new(j, 0);
            let x = self.get(a, b);
            let y = other.get(a, b);
            if x != y {
                let show = |e: Option<Edge>| e.map(|e| e.to_string()).unwrap_or_else(|| format!("{a}   {b} (absent)"));
                out.push(format!("{}  vs  {}", show(x), show(y)));
            }
        }
        out
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            n_vars: self.n_vars,
            tau_max: self.tau_max,
            edges: self
                .canonical_edges()
                .into_iter()
                .map(|(i, tau, j, m)| EdgeJson {
                    i,
                    tau,
                    j,
                    mark_i: m.at_i,
                    mark_j: m.at_j,
                    middle: match m.middle {
                        MiddleMark::Empty => None,
                        mm => Some(mm.symbol().to_string()),
                    },
                })
                .collect(),
        }
    }

    pub fn from_json(js: &GraphJson) -> Result<WindowGraph, GraphError> {
        let mut g = WindowGraph::empty(js.n_vars, js.tau_max);
        for e in &js.edges {
            if e.tau > js.tau_max || e.i >= js.n_vars || e.j >= js.n_vars {
                return Err(GraphError::Json(format!("edge ({}, {}, {}) outside window", e.i, e.tau, e.j)));
            }
            let middle = match &e.middle {
                None => MiddleMark::Empty,
                Some(s) => MiddleMark::parse(s).ok_or_else(|| GraphError::Json(format!("unknown middle mark {s:?}")))?,
            };
            let a = NodeRef::new(e.i, e.tau);
            let b = NodeRef::new(e.j, 0);
            if g.adjacent(a, b) {
                return Err(GraphError::Json(format!("duplicate edge ({}, {}, {})", e.i, e.tau, e.j)));
            }
            g.set_edge(Edge::new(a, b, e.mark_i, middle, e.mark_j))?;
        }
        Ok(g)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("graph json serializes")
    }

    pub fn from_json_str(s: &str) -> Result<WindowGraph, GraphError> {
        let js: GraphJson = serde_json::from_str(s).map_err(|e| GraphError::Json(e.to_string()))?;
        Self::from_json(&js)
    }
}

impl fmt::Display for WindowGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, tau, j, m) in self.canonical_edges() {
            let e = Edge::new(NodeRef::new(i, tau), NodeRef::new(j, 0), m.at_i, m.middle, m.at_j);
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeJson {
    pub i: usize,
    pub tau: usize,
    pub j: usize,
    pub mark_i: EndMark,
    pub mark_j: EndMark,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub middle: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub n_vars: usize,
    pub tau_max: usize,
    pub edges: Vec<EdgeJson>,
}
