//! Orientation rules for graphs with middle marks, the sepset votes they rely
//! on, and weak minimization of separating sets.

use super::sets::{apds_t, directed, parents_of_pair, placed_triples, PairKey};
use super::{DiscoveryError, DiscoveryState};
use crate::ci::CiTest;
use crate::fci::{self, Proposals, Vote};
use crate::graph::{canonical_key, node_less, EndMark, MiddleMark, NodeRef, WindowGraph};
use crate::oracle::combinations;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleId {
    ER0a,
    ER0b,
    ER0c,
    ER0d,
    ER1,
    ER2,
    ER3,
    ER4,
    R4,
    ER8,
    ER9,
    ER10,
    APR,
    MMR,
}

impl RuleId {
    /// Rules run after removals in the ancestral phase, on lagged links only.
    pub const LAGGED: [RuleId; 7] = [RuleId::APR, RuleId::MMR, RuleId::ER8, RuleId::ER2, RuleId::ER1, RuleId::ER9, RuleId::ER10];

    pub const FINAL: [RuleId; 13] = [
        RuleId::APR,
        RuleId::MMR,
        RuleId::ER8,
        RuleId::ER2,
        RuleId::ER1,
        RuleId::ER0d,
        RuleId::ER0c,
        RuleId::ER3,
        RuleId::R4,
        RuleId::ER9,
        RuleId::ER10,
        RuleId::ER0b,
        RuleId::ER0a,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleId::ER0a => "ER0a",
            RuleId::ER0b => "ER0b",
            RuleId::ER0c => "ER0c",
            RuleId::ER0d => "ER0d",
            RuleId::ER1 => "ER1",
            RuleId::ER2 => "ER2",
            RuleId::ER3 => "ER3",
            RuleId::ER4 => "ER4",
            RuleId::R4 => "R4",
            RuleId::ER8 => "ER8",
            RuleId::ER9 => "ER9",
            RuleId::ER10 => "ER10",
            RuleId::APR => "APR",
            RuleId::MMR => "MMR",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RuleId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let all = [
            RuleId::ER0a,
            RuleId::ER0b,
            RuleId::ER0c,
            RuleId::ER0d,
            RuleId::ER1,
            RuleId::ER2,
            RuleId::ER3,
            RuleId::ER4,
            RuleId::R4,
            RuleId::ER8,
            RuleId::ER9,
            RuleId::ER10,
            RuleId::APR,
            RuleId::MMR,
        ];
        all.into_iter().find(|r| r.name() == s).ok_or_else(|| format!("unknown rule {s:?}"))
    }
}

/// Everything a rule proposes in one sweep.
#[derive(Default)]
pub(crate) struct Changes {
    pub(crate) marks: Proposals,
    pub(crate) middles: BTreeMap<PairKey, (NodeRef, NodeRef, MiddleMark)>,
    pub(crate) removals: BTreeMap<PairKey, (NodeRef, NodeRef, Vec<Vec<NodeRef>>)>,
}

impl Changes {
    fn orient(&mut self, at: NodeRef, other: NodeRef, m: EndMark) {
        self.marks.propose(at, other, m);
    }

    fn middle(&mut self, u: NodeRef, v: NodeRef, m: MiddleMark) {
        let e = self.middles.entry(canonical_key(u, v).0).or_insert((u, v, MiddleMark::Unknown));
        e.2 = e.2.combine(m);
    }

    fn remove(&mut self, u: NodeRef, v: NodeRef, cond: Vec<NodeRef>) {
        self.removals.entry(canonical_key(u, v).0).or_insert((u, v, Vec::new())).2.push(cond);
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.marks.is_empty() && self.middles.is_empty() && self.removals.is_empty()
    }
}

fn is(g: &WindowGraph, at: NodeRef, other: NodeRef, m: EndMark) -> bool {
    g.mark_at(at, other) == Some(m)
}

/// Adjacent with a non-conflict mark at `at`.
fn star(g: &WindowGraph, at: NodeRef, other: NodeRef) -> bool {
    matches!(g.mark_at(at, other), Some(m) if m != EndMark::Conflict)
}

fn potentially_directed(g: &WindowGraph, u: NodeRef, v: NodeRef) -> bool {
    matches!(g.mark_at(u, v), Some(EndMark::Tail) | Some(EndMark::Circle))
        && matches!(g.mark_at(v, u), Some(EndMark::Head) | Some(EndMark::Circle))
}

/// Middle mark on `b -- c` asserts something about `pa(c)`.
fn about_c(g: &WindowGraph, b: NodeRef, c: NodeRef) -> bool {
    match g.middle(b, c) {
        Some(MiddleMark::Bang) => true,
        Some(MiddleMark::R) => node_less(b, c),
        Some(MiddleMark::L) => node_less(c, b),
        _ => false,
    }
}

fn shift3(a: NodeRef, b: NodeRef, c: NodeRef) -> Option<(NodeRef, NodeRef, NodeRef)> {
    let d = a.lag.min(c.lag);
    Some((a.toward_present(d)?, b.toward_present(d)?, c.toward_present(d)?))
}

/// Recorded separating sets of `a`, `c`, plus (when `search`) all sets
/// `S ∪ pa({a, c})` with `S` a subset of an `apds_t` set that separate.
/// The pair must be placed with its later node at lag 0.
fn pair_sets(st: &mut DiscoveryState, ci: &mut dyn CiTest, a: NodeRef, c: NodeRef, search: bool) -> Result<Rc<BTreeSet<Vec<NodeRef>>>, DiscoveryError> {
    let (a, c) = if node_less(a, c) { (a, c) } else { (c, a) };
    if let Some(s) = st.vote_cache.get(&(a, c, search)) {
        return Ok(s.clone());
    }
    let mut out: BTreeSet<Vec<NodeRef>> = st.sepsets.get(a, c).into_iter().collect();
    if search {
        let z = parents_of_pair(&st.graph, a, c);
        for (x, y) in [(a, c), (c, a)] {
            let cand: Vec<NodeRef> = apds_t(&st.graph, x, y).difference(&z).copied().collect();
            for size in 0..=cand.len() {
                for s in combinations(&cand, size) {
                    let cond: BTreeSet<NodeRef> = s.into_iter().chain(z.iter().copied()).collect();
                    let cond: Vec<NodeRef> = cond.into_iter().collect();
                    let r = st.test(ci, "vote", a, c, &cond)?;
                    if st.independent(r) {
                        out.insert(cond);
                    }
                }
            }
        }
    }
    let out = Rc::new(out);
    st.vote_cache.insert((a, c, search), out.clone());
    Ok(out)
}

fn count_in(sets: &BTreeSet<Vec<NodeRef>>, b: NodeRef) -> usize {
    sets.iter().filter(|s| s.contains(&b)).count()
}

/// The majority of separating sets of `a`, `c` does not contain `b`.
pub(crate) fn not_in(st: &mut DiscoveryState, ci: &mut dyn CiTest, a: NodeRef, b: NodeRef, c: NodeRef) -> Result<bool, DiscoveryError> {
    let Some((a, b, c)) = shift3(a, b, c) else { return Ok(true) };
    let sets = pair_sets(st, ci, a, c, true)?;
    if sets.is_empty() {
        return Err(DiscoveryError::NoSepset(a, c));
    }
    Ok(2 * count_in(&sets, b) < sets.len())
}

/// The majority of separating sets of `a`, `c` contains `b`. Only recorded
/// sets are used unless both edges at `b` have empty middle marks.
pub(crate) fn is_in(st: &mut DiscoveryState, ci: &mut dyn CiTest, a: NodeRef, b: NodeRef, c: NodeRef) -> Result<bool, DiscoveryError> {
    let Some((a, b, c)) = shift3(a, b, c) else { return Ok(false) };
    let search = st.graph.middle(a, b) == Some(MiddleMark::Empty) && st.graph.middle(b, c) == Some(MiddleMark::Empty);
    let sets = pair_sets(st, ci, a, c, search)?;
    if sets.is_empty() {
        return Err(DiscoveryError::NoSepset(a, c));
    }
    Ok(2 * count_in(&sets, b) > sets.len())
}

/// Modified majority vote on whether `b` separates the non-adjacent pair `a`, `c`.
pub fn sepset_vote(st: &mut DiscoveryState, ci: &mut dyn CiTest, a: NodeRef, b: NodeRef, c: NodeRef) -> Result<Vote, DiscoveryError> {
    let yes = is_in(st, ci, a, b, c)?;
    let no = not_in(st, ci, a, b, c)?;
    Ok(match (yes, no) {
        (true, false) => Vote::In,
        (false, true) => Vote::NotIn,
        _ => Vote::Ambiguous,
    })
}

/// Majority rule over all separating subsets of the adjacencies of `a` and
/// of `c`, optionally only subsets of at most `max_size` nodes.
pub fn plain_majority_vote(
    g: &WindowGraph,
    ci: &mut dyn CiTest,
    alpha: f64,
    max_size: Option<usize>,
    a: NodeRef,
    b: NodeRef,
    c: NodeRef,
) -> Result<Vote, DiscoveryError> {
    let Some((a, b, c)) = shift3(a, b, c) else { return Ok(Vote::NotIn) };
    let mut sets: BTreeSet<Vec<NodeRef>> = BTreeSet::new();
    for (x, y) in [(a, c), (c, a)] {
        let adj: Vec<NodeRef> = g.neighbors(x).into_iter().filter(|&w| w != y).collect();
        for size in 0..=max_size.unwrap_or(adj.len()).min(adj.len()) {
            for mut s in combinations(&adj, size) {
                s.sort();
                let r = match ci.test(a, c, &s) {
                    Ok(r) => Some(r),
                    Err(crate::ci::CiError::Degenerate(_)) => None,
                    Err(source) => return Err(DiscoveryError::Ci { query: format!("{a} _|_ {c} | {s:?}"), source }),
                };
                if r.is_some_and(|r| r.p_value > alpha) {
                    sets.insert(s);
                }
            }
        }
    }
    if sets.is_empty() {
        return Ok(Vote::Ambiguous);
    }
    let k = count_in(&sets, b);
    Ok(if 2 * k > sets.len() {
        Vote::In
    } else if 2 * k < sets.len() {
        Vote::NotIn
    } else {
        Vote::Ambiguous
    })
}

/// Test `x`, `y` given `[S_ac ∪ pa({x, y})]` minus the pair and nodes after
/// both, for each recorded `S_ac`. Returns the shifted pair and conditioning
/// set of the first independence found.
fn dependence_check(
    st: &mut DiscoveryState,
    ci: &mut dyn CiTest,
    x: NodeRef,
    y: NodeRef,
    a: NodeRef,
    c: NodeRef,
) -> Result<Option<(NodeRef, NodeRef, Vec<NodeRef>)>, DiscoveryError> {
    let sets = st.sepsets.get(a, c);
    if sets.is_empty() {
        return Err(DiscoveryError::NoSepset(a, c));
    }
    let d = x.lag.min(y.lag);
    let (xs, ys) = (x.toward_present(d).unwrap(), y.toward_present(d).unwrap());
    let pa = parents_of_pair(&st.graph, xs, ys);
    let tau_max = st.config.tau_max;
    for s in sets {
        let cond: BTreeSet<NodeRef> = s
            .iter()
            .filter_map(|v| v.toward_present(d))
            .filter(|v| v.lag <= tau_max && *v != xs && *v != ys)
            .chain(pa.iter().copied())
            .collect();
        let cond: Vec<NodeRef> = cond.into_iter().collect();
        let r = st.test(ci, "rule", xs, ys, &cond)?;
        if st.independent(r) {
            return Ok(Some((xs, ys, cond)));
        }
    }
    Ok(None)
}

fn both_orders(t: &[(NodeRef, NodeRef, NodeRef)]) -> Vec<(NodeRef, NodeRef, NodeRef)> {
    t.iter().flat_map(|&(a, b, c)| [(a, b, c), (c, b, a)]).collect()
}

fn ordered_pairs(g: &WindowGraph, b: NodeRef) -> Vec<(NodeRef, NodeRef)> {
    let nb = g.neighbors(b);
    let mut out = Vec::new();
    for &a in &nb {
        for &c in &nb {
            if a != c {
                out.push((a, c));
            }
        }
    }
    out
}

fn er0a(st: &mut DiscoveryState, ci: &mut dyn CiTest) -> Result<Changes, DiscoveryError> {
    let g = st.graph.clone();
    let mut ch = Changes::default();
    for (a, b, c) in placed_triples(&g) {
        let open = |x| matches!(g.mark_at(b, x), Some(EndMark::Circle) | Some(EndMark::Head));
        if !open(a) || !open(c) || (is(&g, b, a, EndMark::Head) && is(&g, b, c, EndMark::Head)) {
            continue;
        }
        let mut removal = false;
        for x in [a, c] {
            if g.middle(x, b) == Some(MiddleMark::Empty) {
                continue;
            }
            if let Some((u, v, cond)) = dependence_check(st, ci, x, b, a, c)? {
                ch.remove(u, v, cond);
                removal = true;
            }
        }
        if !removal && not_in(st, ci, a, b, c)? {
            ch.orient(b, a, EndMark::Head);
            ch.orient(b, c, EndMark::Head);
        }
    }
    Ok(ch)
}

fn er0b(st: &mut DiscoveryState, ci: &mut dyn CiTest) -> Result<Changes, DiscoveryError> {
    let g = st.graph.clone();
    let mut ch = Changes::default();
    for (a, b, c) in both_orders(&placed_triples(&g)) {
        if !is(&g, b, a, EndMark::Head) || !is(&g, b, c, EndMark::Circle) || !star(&g, c, b) || !about_c(&g, b, c) {
            continue;
        }
        if g.middle(a, b) != Some(MiddleMark::Empty) {
            if let Some((u, v, cond)) = dependence_check(st, ci, a, b, a, c)? {
                ch.remove(u, v, cond);
                continue;
            }
        }
        if not_in(st, ci, a, b, c)? {
            ch.orient(b, c, EndMark::Head);
        }
    }
    Ok(ch)
}

fn er0c(st: &mut DiscoveryState, ci: &mut dyn CiTest) -> Result<Changes, DiscoveryError> {
    let g = st.graph.clone();
    let mut ch = Changes::default();
    for (a, b, c) in both_orders(&placed_triples(&g)) {
        if g.middle(a, b) != Some(MiddleMark::Empty) || !is(&g, b, c, EndMark::Circle) || !star(&g, c, b) || !about_c(&g, b, c) {
            continue;
        }
        if not_in(st, ci, a, b, c)? {
            ch.orient(b, c, EndMark::Head);
        }
    }
    Ok(ch)
}

fn er0d(st: &mut DiscoveryState, ci: &mut dyn CiTest) -> Result<Changes, DiscoveryError> {
    let g = st.graph.clone();
    let mut ch = Changes::default();
    for (a, b, c) in both_orders(&placed_triples(&g)) {
        if g.middle(a, b) != Some(MiddleMark::Empty) || g.middle(b, c) != Some(MiddleMark::Empty) {
            continue;
        }
        if !matches!(g.mark_at(b, a), Some(EndMark::Circle) | Some(EndMark::Head)) || !is(&g, b, c, EndMark::Circle) {
            continue;
        }
        if not_in(st, ci, a, b, c)? {
            ch.orient(b, a, EndMark::Head);
            ch.orient(b, c, EndMark::Head);
        }
    }
    Ok(ch)
}

fn er1(st: &mut DiscoveryState, ci: &mut dyn CiTest) -> Result<Changes, DiscoveryError> {
    let g = st.graph.clone();
    let mut ch = Changes::default();
    for (a, b, c) in both_orders(&placed_triples(&g)) {
        if !is(&g, b, a, EndMark::Head) || !is(&g, b, c, EndMark::Circle) || !star(&g, c, b) {
            continue;
        }
        if is_in(st, ci, a, b, c)? {
            ch.orient(b, c, EndMark::Tail);
            ch.orient(c, b, EndMark::Head);
        }
    }
    Ok(ch)
}

fn er2(g: &WindowGraph) -> Changes {
    let mut ch = Changes::default();
    for b in g.nodes() {
        for (a, c) in ordered_pairs(g, b) {
            if !g.adjacent(a, c) || !is(g, c, a, EndMark::Circle) || !star(g, a, c) {
                continue;
            }
            let first = directed(g, a, b) && is(g, c, b, EndMark::Head);
            let second = is(g, b, a, EndMark::Head) && directed(g, b, c);
            if first || second {
                ch.orient(c, a, EndMark::Head);
            }
        }
    }
    ch
}

fn er3(st: &mut DiscoveryState, ci: &mut dyn CiTest) -> Result<Changes, DiscoveryError> {
    let g = st.graph.clone();
    let mut ch = Changes::default();
    for (a, b, c) in fci::unshielded_triples(&g) {
        if !is(&g, b, a, EndMark::Head) || !is(&g, b, c, EndMark::Head) {
            continue;
        }
        for d in g.neighbors(b) {
            if d == a || d == c || !g.adjacent(d, a) || !g.adjacent(d, c) {
                continue;
            }
            let ok = is(&g, d, a, EndMark::Circle)
                && star(&g, a, d)
                && is(&g, d, c, EndMark::Circle)
                && star(&g, c, d)
                && is(&g, b, d, EndMark::Circle)
                && star(&g, d, b);
            if ok && is_in(st, ci, a, d, c)? {
                ch.orient(b, d, EndMark::Head);
            }
        }
    }
    Ok(ch)
}

fn er8(g: &WindowGraph) -> Changes {
    let mut ch = Changes::default();
    for b in g.nodes() {
        for (a, c) in ordered_pairs(g, b) {
            if directed(g, a, b) && directed(g, b, c) && is(g, a, c, EndMark::Circle) && star(g, c, a) {
                ch.orient(a, c, EndMark::Tail);
                ch.orient(c, a, EndMark::Head);
            }
        }
    }
    ch
}

/// Step condition on a path `prev, mid, next`: `mid -> next`, or `mid` is
/// voted into the separating set of `next` and `prev`.
fn step_ok(st: &mut DiscoveryState, ci: &mut dyn CiTest, prev: NodeRef, mid: NodeRef, next: NodeRef) -> Result<bool, DiscoveryError> {
    if directed(&st.graph, mid, next) {
        return Ok(true);
    }
    is_in(st, ci, next, mid, prev)
}

/// Extend `path` along uncovered potentially directed edges to `target`,
/// checking the step condition at every interior node.
fn path_to(
    st: &mut DiscoveryState,
    ci: &mut dyn CiTest,
    g: &WindowGraph,
    path: &mut Vec<NodeRef>,
    target: NodeRef,
    avoid: NodeRef,
) -> Result<bool, DiscoveryError> {
    let q = path[path.len() - 1];
    if q == target {
        return Ok(true);
    }
    let p = path[path.len() - 2];
    for w in g.neighbors(q) {
        if w == avoid || path.contains(&w) || !potentially_directed(g, q, w) || g.adjacent(p, w) {
            continue;
        }
        if !step_ok(st, ci, p, q, w)? {
            continue;
        }
        path.push(w);
        let found = path_to(st, ci, g, path, target, avoid)?;
        path.pop();
        if found {
            return Ok(true);
        }
    }
    Ok(false)
}

fn er9(st: &mut DiscoveryState, ci: &mut dyn CiTest) -> Result<Changes, DiscoveryError> {
    let g = st.graph.clone();
    let mut ch = Changes::default();
    for a1 in g.nodes() {
        for an in g.neighbors(a1) {
            if !is(&g, a1, an, EndMark::Circle) || !is(&g, an, a1, EndMark::Head) {
                continue;
            }
            let mut fire = false;
            for a2 in g.neighbors(a1) {
                if a2 == an || g.adjacent(a2, an) || !potentially_directed(&g, a1, a2) {
                    continue;
                }
                // the step at a1 uses a0 = an
                if !step_ok(st, ci, an, a1, a2)? {
                    continue;
                }
                let mut path = vec![a1, a2];
                if ends_at(st, ci, &g, &mut path, an)? {
                    fire = true;
                    break;
                }
            }
            if fire {
                ch.orient(a1, an, EndMark::Tail);
            }
        }
    }
    Ok(ch)
}

/// Like [`path_to`], checking the step condition on the final edge into `target` too.
fn ends_at(st: &mut DiscoveryState, ci: &mut dyn CiTest, g: &WindowGraph, path: &mut Vec<NodeRef>, target: NodeRef) -> Result<bool, DiscoveryError> {
    let q = path[path.len() - 1];
    let p = path[path.len() - 2];
    for w in g.neighbors(q) {
        if path.contains(&w) || !potentially_directed(g, q, w) || g.adjacent(p, w) {
            continue;
        }
        if !step_ok(st, ci, p, q, w)? {
            continue;
        }
        if w == target {
            return Ok(true);
        }
        path.push(w);
        let found = ends_at(st, ci, g, path, target)?;
        path.pop();
        if found {
            return Ok(true);
        }
    }
    Ok(false)
}

fn er10(st: &mut DiscoveryState, ci: &mut dyn CiTest) -> Result<Changes, DiscoveryError> {
    let g = st.graph.clone();
    let mut ch = Changes::default();
    for a in g.nodes() {
        for d in g.neighbors(a) {
            if !is(&g, a, d, EndMark::Circle) || !is(&g, d, a, EndMark::Head) {
                continue;
            }
            let parents: Vec<NodeRef> = g.neighbors(d).into_iter().filter(|&x| x != a && directed(&g, x, d)).collect();
            if parents.len() < 2 {
                continue;
            }
            let mut seconds: Vec<BTreeSet<NodeRef>> = Vec::new();
            for &x in &parents {
                let mut sec = BTreeSet::new();
                for mu in g.neighbors(a) {
                    if mu == d || !potentially_directed(&g, a, mu) {
                        continue;
                    }
                    let mut path = vec![a, mu];
                    if path_to(st, ci, &g, &mut path, x, d)? {
                        sec.insert(mu);
                    }
                }
                seconds.push(sec);
            }
            let mut fire = false;
            'outer: for x in 0..parents.len() {
                for y in x + 1..parents.len() {
                    for &mu in &seconds[x] {
                        for &om in &seconds[y] {
                            if mu != om && !g.adjacent(mu, om) && is_in(st, ci, mu, a, om)? {
                                fire = true;
                                break 'outer;
                            }
                        }
                    }
                }
            }
            if fire {
                ch.orient(a, d, EndMark::Tail);
            }
        }
    }
    Ok(ch)
}

fn discriminating_paths(g: &WindowGraph) -> Vec<Vec<NodeRef>> {
    let mut out = Vec::new();
    for beta in g.nodes() {
        for gamma in g.neighbors(beta) {
            if is(g, beta, gamma, EndMark::Circle) {
                if let Some(p) = fci::discriminating_path(g, beta, gamma) {
                    out.push(p);
                }
            }
        }
    }
    out
}

fn orient_discriminating(st: &mut DiscoveryState, ci: &mut dyn CiTest, path: &[NodeRef], ch: &mut Changes) -> Result<(), DiscoveryError> {
    let k = path.len();
    let (theta, alpha, beta, gamma) = (path[0], path[k - 3], path[k - 2], path[k - 1]);
    if is_in(st, ci, theta, beta, gamma)? {
        ch.orient(beta, gamma, EndMark::Tail);
        ch.orient(gamma, beta, EndMark::Head);
    }
    if not_in(st, ci, theta, beta, gamma)? {
        ch.orient(beta, alpha, EndMark::Head);
        ch.orient(beta, gamma, EndMark::Head);
        ch.orient(gamma, beta, EndMark::Head);
    }
    Ok(())
}

/// Standard discriminating path rule, batched over all `beta o-* gamma`.
fn r4(st: &mut DiscoveryState, ci: &mut dyn CiTest) -> Result<Changes, DiscoveryError> {
    let g = st.graph.clone();
    let mut ch = Changes::default();
    for path in discriminating_paths(&g) {
        orient_discriminating(st, ci, &path, &mut ch)?;
    }
    Ok(ch)
}

/// Discriminating path rule that first re-tests the edges along the path.
fn er4(st: &mut DiscoveryState, ci: &mut dyn CiTest) -> Result<Changes, DiscoveryError> {
    let g = st.graph.clone();
    let mut ch = Changes::default();
    for path in discriminating_paths(&g) {
        let k = path.len();
        let (theta, gamma) = (path[0], path[k - 1]);
        let mut pairs: Vec<(NodeRef, NodeRef)> = path[..k - 1].windows(2).map(|w| (w[0], w[1])).collect();
        pairs.extend(path[1..k - 1].iter().map(|&v| (v, gamma)));
        let mut removal = false;
        for (x, y) in pairs {
            if g.middle(x, y) == Some(MiddleMark::Empty) {
                continue;
            }
            if let Some((u, v, cond)) = dependence_check(st, ci, x, y, theta, gamma)? {
                ch.remove(u, v, cond);
                removal = true;
            }
        }
        if !removal {
            orient_discriminating(st, ci, &path, &mut ch)?;
        }
    }
    Ok(ch)
}

fn apr(g: &WindowGraph) -> Changes {
    let mut ch = Changes::default();
    for (i, tau, j, m) in g.canonical_edges() {
        let (a, b) = (NodeRef::new(i, tau), NodeRef::new(j, 0));
        for (u, v) in [(a, b), (b, a)] {
            if !directed(g, u, v) {
                continue;
            }
            let fire = match m.middle {
                MiddleMark::Bang => true,
                MiddleMark::L => node_less(v, u),
                MiddleMark::R => node_less(u, v),
                _ => false,
            };
            if fire {
                ch.middle(u, v, MiddleMark::Empty);
            }
        }
    }
    ch
}

fn mmr(g: &WindowGraph) -> Changes {
    let mut ch = Changes::default();
    for (i, tau, j, m) in g.canonical_edges() {
        let (a, b) = (NodeRef::new(i, tau), NodeRef::new(j, 0));
        for (u, v) in [(a, b), (b, a)] {
            if !is(g, v, u, EndMark::Head) {
                continue;
            }
            let upd = if node_less(u, v) { MiddleMark::L } else { MiddleMark::R };
            if m.middle.combine(upd) != m.middle {
                ch.middle(u, v, upd);
            }
        }
    }
    ch
}

pub(crate) fn apply_rule(rule: RuleId, st: &mut DiscoveryState, ci: &mut dyn CiTest) -> Result<Changes, DiscoveryError> {
    match rule {
        RuleId::ER0a => er0a(st, ci),
        RuleId::ER0b => er0b(st, ci),
        RuleId::ER0c => er0c(st, ci),
        RuleId::ER0d => er0d(st, ci),
        RuleId::ER1 => er1(st, ci),
        RuleId::ER2 => Ok(er2(&st.graph)),
        RuleId::ER3 => er3(st, ci),
        RuleId::ER4 => er4(st, ci),
        RuleId::R4 => r4(st, ci),
        RuleId::ER8 => Ok(er8(&st.graph)),
        RuleId::ER9 => er9(st, ci),
        RuleId::ER10 => er10(st, ci),
        RuleId::APR => Ok(apr(&st.graph)),
        RuleId::MMR => Ok(mmr(&st.graph)),
    }
}

/// Weakly minimal subsets of `set` reachable by dropping nodes that are not
/// known ancestors of `x` or `y`, one at a time, while `separates` holds.
/// Every branch is followed, so the result does not depend on node order.
pub fn weakly_minimize_with(
    x: NodeRef,
    y: NodeRef,
    set: &[NodeRef],
    known_ancestors: &BTreeSet<NodeRef>,
    separates: &mut dyn FnMut(&[NodeRef]) -> Result<bool, DiscoveryError>,
) -> Result<Vec<Vec<NodeRef>>, DiscoveryError> {
    let mut start: Vec<NodeRef> = set.to_vec();
    start.sort();
    start.dedup();
    if !separates(&start)? {
        return Err(DiscoveryError::NotSeparating(x, y, format!("{start:?}")));
    }
    let mut out = BTreeSet::new();
    let mut seen = BTreeSet::new();
    let mut stack = vec![start];
    while let Some(z) = stack.pop() {
        if !seen.insert(z.clone()) {
            continue;
        }
        let mut smaller = Vec::new();
        for &c in &z {
            if known_ancestors.contains(&c) {
                continue;
            }
            let rest: Vec<NodeRef> = z.iter().copied().filter(|&v| v != c).collect();
            if separates(&rest)? {
                smaller.push(rest);
            }
        }
        if smaller.is_empty() {
            out.insert(z);
        } else {
            stack.extend(smaller);
        }
    }
    Ok(out.into_iter().collect())
}

/// [`weakly_minimize_with`] using a CI test at level `alpha`.
pub fn weakly_minimize(
    ci: &mut dyn CiTest,
    alpha: f64,
    x: NodeRef,
    y: NodeRef,
    set: &[NodeRef],
    known_ancestors: &BTreeSet<NodeRef>,
) -> Result<Vec<Vec<NodeRef>>, DiscoveryError> {
    let mut sep = |z: &[NodeRef]| -> Result<bool, DiscoveryError> {
        match ci.test(x, y, z) {
            Ok(r) => Ok(r.p_value > alpha),
            Err(crate::ci::CiError::Degenerate(_)) => Ok(false),
            Err(source) => Err(DiscoveryError::Ci { query: format!("{x} _|_ {y} | {z:?}"), source }),
        }
    };
    weakly_minimize_with(x, y, set, known_ancestors, &mut sep)
}
