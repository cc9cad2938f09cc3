//! LPCMCI: iterated ancestral removal with parent carry-over, non-ancestral
//! removal and orientation with middle marks, on a stationary window graph.

mod rules;
mod sets;

pub use rules::{plain_majority_vote, sepset_vote, weakly_minimize, weakly_minimize_with, RuleId};
pub use sets::{apds_t, known_ancestors, napds_t, parents, parents_of_pair, PairKey, SepSetStore};

use crate::ci::{CachedCi, CiError, CiResult, CiTest};
use crate::fci::Proposals;
use crate::graph::{Edge, EndMark, MiddleMark, NodeRef, WindowGraph};
use crate::oracle::combinations;
use rules::{apply_rule, Changes};
use serde::Serialize;
use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error("CI test {query} failed: {source}")]
    Ci {
        query: String,
        #[source]
        source: CiError,
    },
    #[error("no separating set known for {0} and {1}")]
    NoSepset(NodeRef, NodeRef),
    #[error("{0} and {1} are not separated by {2}")]
    NotSeparating(NodeRef, NodeRef, String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

fn fmt_set(s: &[NodeRef]) -> String {
    let parts: Vec<String> = s.iter().map(|v| v.to_string()).collect();
    format!("{{{}}}", parts.join(", "))
}

#[derive(Clone, Debug)]
pub struct LpcmciConfig {
    pub tau_max: usize,
    pub alpha: f64,
    /// Preliminary iterations with parent carry-over.
    pub k: usize,
    /// Cap on `|S|` (excluding default conditions) in the non-ancestral phase.
    pub max_cond_nonancestral: Option<usize>,
    /// Stop after the final ancestral phase; middle marks may then remain `!`.
    pub skip_nonancestral: bool,
    pub lagged_rules: Vec<RuleId>,
    pub final_rules: Vec<RuleId>,
    /// Record every CI test in the state's trace.
    pub trace: bool,
}

impl LpcmciConfig {
    pub fn new(tau_max: usize, alpha: f64, k: usize) -> Self {
        LpcmciConfig {
            tau_max,
            alpha,
            k,
            max_cond_nonancestral: Some(3),
            skip_nonancestral: false,
            lagged_rules: RuleId::LAGGED.to_vec(),
            final_rules: RuleId::FINAL.to_vec(),
            trace: false,
        }
    }

    pub fn validate(&self) -> Result<(), DiscoveryError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(DiscoveryError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

/// One CI test as seen by the removal phases and rules.
#[derive(Clone, Debug, Serialize)]
pub struct TraceEvent {
    pub phase: &'static str,
    pub x: NodeRef,
    pub y: NodeRef,
    pub cond: Vec<NodeRef>,
    pub p_value: Option<f64>,
    pub action: String,
}

/// Points at which an observer sees the state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Reinitialized,
    RemovalRound,
    Orientation,
}

pub struct DiscoveryState {
    pub graph: WindowGraph,
    pub sepsets: SepSetStore,
    /// Links `(parent var, lag difference, child var)` marked as parents since re-initialization.
    pub ever_parents: BTreeSet<(usize, usize, usize)>,
    pub config: LpcmciConfig,
    pub trace: Vec<TraceEvent>,
    pub warnings: Vec<String>,
    pub(crate) vote_cache: HashMap<(NodeRef, NodeRef, bool), Rc<BTreeSet<Vec<NodeRef>>>>,
}

impl DiscoveryState {
    pub fn new(n_vars: usize, config: LpcmciConfig) -> Self {
        DiscoveryState {
            graph: WindowGraph::complete_initial(n_vars, config.tau_max),
            sepsets: SepSetStore::new(),
            ever_parents: BTreeSet::new(),
            config,
            trace: Vec::new(),
            warnings: Vec::new(),
            vote_cache: HashMap::new(),
        }
    }

    /// Run a test. Degenerate tests count as dependent and return `None`.
    pub(crate) fn test(
        &mut self,
        ci: &mut dyn CiTest,
        phase: &'static str,
        x: NodeRef,
        y: NodeRef,
        cond: &[NodeRef],
    ) -> Result<Option<CiResult>, DiscoveryError> {
        let res = match ci.test(x, y, cond) {
            Ok(r) => Some(r),
            Err(CiError::Degenerate(msg)) => {
                self.warnings.push(format!("{phase}: {x} _|_ {y} | {} degenerate ({msg}), kept as dependent", fmt_set(cond)));
                None
            }
            Err(source) => {
                return Err(DiscoveryError::Ci { query: format!("{x} _|_ {y} | {}", fmt_set(cond)), source });
            }
        };
        if self.config.trace {
            let action = match res {
                None => "degenerate".to_string(),
                Some(r) if r.p_value > self.config.alpha => "independent".to_string(),
                Some(_) => "dependent".to_string(),
            };
            self.trace.push(TraceEvent { phase, x, y, cond: cond.to_vec(), p_value: res.map(|r| r.p_value), action });
        }
        Ok(res)
    }

    pub(crate) fn independent(&self, r: Option<CiResult>) -> bool {
        r.is_some_and(|r| r.p_value > self.config.alpha)
    }

    /// Nodes in the window that were ever marked as parents of `a` or `b`.
    pub fn ever_parents_of_pair(&self, a: NodeRef, b: NodeRef) -> BTreeSet<NodeRef> {
        let mut out = BTreeSet::new();
        for &(pv, d, cv) in &self.ever_parents {
            for x in [a, b] {
                if cv == x.var && x.lag + d <= self.config.tau_max {
                    out.insert(NodeRef::new(pv, x.lag + d));
                }
            }
        }
        out.remove(&a);
        out.remove(&b);
        out
    }

    pub(crate) fn record_parents(&mut self) {
        let links = self.parent_links();
        self.ever_parents.extend(links);
    }

    /// Directed links `(parent var, lag difference, child var)` of the current graph.
    pub fn parent_links(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for (i, tau, j, m) in self.graph.canonical_edges() {
            if m.at_i == EndMark::Tail && m.at_j == EndMark::Head {
                out.push((i, tau, j));
            } else if tau == 0 && m.at_j == EndMark::Tail && m.at_i == EndMark::Head {
                out.push((j, 0, i));
            }
        }
        out
    }

    /// Fresh complete graph with the given parent links as `-?->`; forgets
    /// separating sets and statistics.
    pub fn reinitialize(&mut self, carried: &[(usize, usize, usize)]) {
        self.graph = WindowGraph::complete_initial(self.graph.n_vars(), self.config.tau_max);
        for &(p, d, c) in carried {
            let e = Edge::new(NodeRef::new(p, d), NodeRef::new(c, 0), EndMark::Tail, MiddleMark::Unknown, EndMark::Head);
            self.graph.set_edge(e).expect("carried links point forward in time");
        }
        self.sepsets = SepSetStore::new();
        self.ever_parents = carried.iter().copied().collect();
        self.vote_cache.clear();
    }

    fn middles_all(&self, ok: impl Fn(MiddleMark) -> bool) -> bool {
        self.graph.canonical_edges().iter().all(|e| ok(e.3.middle))
    }
}

pub(crate) struct Env<'a> {
    pub ci: &'a mut dyn CiTest,
    pub obs: &'a mut dyn FnMut(Stage, &DiscoveryState),
}

/// Apply collected changes: orientations, then middle marks, then removals
/// with weak minimization of their separating sets.
pub(crate) fn apply_changes(st: &mut DiscoveryState, env: &mut Env, mut ch: Changes, only_lagged: bool) -> Result<bool, DiscoveryError> {
    if only_lagged {
        ch.marks.retain_lagged();
    }
    let marks = std::mem::take(&mut ch.marks);
    let mut changed = Proposals::apply(marks, &mut st.graph);
    for (_, (u, v, m)) in ch.middles {
        if let Some(cur) = st.graph.middle(u, v) {
            let new = cur.combine(m);
            if new != cur {
                st.graph.set_middle(u, v, new);
                changed = true;
            }
        }
    }
    let mut removed = Vec::new();
    for (_, (u, v, conds)) in ch.removals {
        if st.graph.adjacent(u, v) {
            st.graph.remove(u, v);
            removed.push((u, v, conds));
            changed = true;
        }
    }
    for (u, v, conds) in removed {
        let anc = known_ancestors(&st.graph, &[u, v]);
        for cond in conds {
            let minimal = {
                let alpha = st.config.alpha;
                let mut sep = |z: &[NodeRef]| -> Result<bool, DiscoveryError> {
                    let r = st.test(&mut *env.ci, "minimize", u, v, z)?;
                    Ok(r.is_some_and(|r| r.p_value > alpha))
                };
                weakly_minimize_with(u, v, &cond, &anc, &mut sep)?
            };
            for s in minimal {
                st.sepsets.add(u, v, &s);
            }
        }
    }
    if changed {
        st.vote_cache.clear();
        st.record_parents();
    }
    Ok(changed)
}

pub(crate) fn orientation_phase_env(st: &mut DiscoveryState, env: &mut Env, rules: &[RuleId], only_lagged: bool) -> Result<(), DiscoveryError> {
    st.vote_cache.clear();
    let mut i = 0;
    while i < rules.len() {
        let ch = apply_rule(rules[i], st, &mut *env.ci)?;
        if !ch.is_empty() && apply_changes(st, env, ch, only_lagged)? {
            i = 0;
        } else {
            i += 1;
        }
    }
    (env.obs)(Stage::Orientation, st);
    Ok(())
}

/// Apply `rules` until none of them changes the graph.
pub fn orientation_phase(st: &mut DiscoveryState, ci: &mut dyn CiTest, rules: &[RuleId], only_lagged: bool) -> Result<(), DiscoveryError> {
    let mut obs = |_: Stage, _: &DiscoveryState| {};
    orientation_phase_env(st, &mut Env { ci, obs: &mut obs }, rules, only_lagged)
}

fn in_class(m: isize, i: usize, tau: usize, j: usize) -> bool {
    if m < 0 {
        i == j
    } else {
        i != j && tau == m as usize
    }
}

/// Test `a`, `b` given `s ∪ s_def` for every `p`-subset `s` of `search`;
/// records the first separating set found.
fn search_separation(
    st: &mut DiscoveryState,
    env: &mut Env,
    phase: &'static str,
    a: NodeRef,
    b: NodeRef,
    search: &[NodeRef],
    s_def: &BTreeSet<NodeRef>,
    p: usize,
) -> Result<bool, DiscoveryError> {
    for s in combinations(search, p) {
        let cond: BTreeSet<NodeRef> = s.iter().chain(s_def.iter()).copied().collect();
        let cond: Vec<NodeRef> = cond.into_iter().collect();
        let r = st.test(&mut *env.ci, phase, a, b, &cond)?;
        if let Some(r) = r {
            st.sepsets.update_imin(a, b, r.statistic);
        }
        if st.independent(r) {
            st.sepsets.add(a, b, &cond);
            return Ok(true);
        }
    }
    Ok(false)
}

fn set_minus(a: &BTreeSet<NodeRef>, b: &BTreeSet<NodeRef>) -> BTreeSet<NodeRef> {
    a.difference(b).copied().collect()
}

pub(crate) fn ancestral_removal_env(st: &mut DiscoveryState, env: &mut Env) -> Result<(), DiscoveryError> {
    let tau_max = st.config.tau_max as isize;
    let mut p = 0usize;
    loop {
        let mut any_removed = false;
        for m in -1..=tau_max {
            let snapshot = st.sepsets.clone();
            let mut to_remove = Vec::new();
            for (i, tau, j, _) in st.graph.canonical_edges() {
                if !in_class(m, i, tau, j) {
                    continue;
                }
                let (a, b) = (NodeRef::new(i, tau), NodeRef::new(j, 0));
                let s_def = parents_of_pair(&st.graph, a, b);
                let mut removed = false;
                for (x, y, exhausted) in [(b, a, MiddleMark::R), (a, b, MiddleMark::L)] {
                    let mid = st.graph.middle(a, b).expect("edge present");
                    let testable = match exhausted {
                        MiddleMark::R => matches!(mid, MiddleMark::Unknown | MiddleMark::L),
                        _ => matches!(mid, MiddleMark::Unknown | MiddleMark::R),
                    };
                    if !testable {
                        continue;
                    }
                    let search = sets::sort_search(&set_minus(&apds_t(&st.graph, x, y), &s_def), x, &snapshot);
                    if search.len() < p {
                        st.graph.set_middle(a, b, mid.combine(exhausted));
                        continue;
                    }
                    removed |= search_separation(st, env, "ancestral", a, b, &search, &s_def, p)?;
                }
                if removed {
                    to_remove.push((a, b));
                }
            }
            for &(a, b) in &to_remove {
                st.graph.remove(a, b);
            }
            if !to_remove.is_empty() {
                any_removed = true;
                st.vote_cache.clear();
                (env.obs)(Stage::RemovalRound, st);
            }
        }
        if any_removed {
            let rules = st.config.lagged_rules.clone();
            orientation_phase_env(st, env, &rules, true)?;
            p = 0;
        } else {
            p += 1;
        }
        if st.middles_all(|m| matches!(m, MiddleMark::Bang | MiddleMark::Empty)) {
            break;
        }
    }
    let rules = st.config.final_rules.clone();
    orientation_phase_env(st, env, &rules, false)
}

/// Remove edges between pairs where one node is an ancestor of the other,
/// testing subsets of `apds_t` sets with known parents as default conditions.
pub fn ancestral_removal(st: &mut DiscoveryState, ci: &mut dyn CiTest) -> Result<(), DiscoveryError> {
    let mut obs = |_: Stage, _: &DiscoveryState| {};
    ancestral_removal_env(st, &mut Env { ci, obs: &mut obs })
}

pub(crate) fn nonancestral_removal_env(st: &mut DiscoveryState, env: &mut Env) -> Result<(), DiscoveryError> {
    let tau_max = st.config.tau_max as isize;
    let mut p = 0usize;
    loop {
        if st.middles_all(|m| m == MiddleMark::Empty) {
            break;
        }
        if st.config.max_cond_nonancestral.is_some_and(|cap| p > cap) {
            for (i, tau, j, _) in st.graph.canonical_edges() {
                st.graph.set_middle(NodeRef::new(i, tau), NodeRef::new(j, 0), MiddleMark::Empty);
            }
            break;
        }
        let mut any_removed = false;
        for m in -1..=tau_max {
            let snapshot = st.sepsets.clone();
            let mut to_remove = Vec::new();
            for (i, tau, j, marks) in st.graph.canonical_edges() {
                if marks.middle == MiddleMark::Empty || !in_class(m, i, tau, j) {
                    continue;
                }
                let (a, b) = (NodeRef::new(i, tau), NodeRef::new(j, 0));
                let s1_def = parents_of_pair(&st.graph, a, b);
                let s2_def = st.ever_parents_of_pair(a, b);
                let defaults: BTreeSet<NodeRef> = s1_def.union(&s2_def).copied().collect();
                let napds_ba = napds_t(&st.graph, b, a);
                let s1 = sets::sort_search(&set_minus(&napds_ba, &defaults), b, &snapshot);
                let second = if tau == 0 {
                    let napds_ab = napds_t(&st.graph, a, b);
                    let s2 = sets::sort_search(&set_minus(&napds_ab, &defaults), a, &snapshot);
                    Some((napds_ab, s2))
                } else {
                    None
                };
                if s1.len() < p || second.as_ref().is_some_and(|(_, s2)| s2.len() < p) {
                    st.graph.set_middle(a, b, MiddleMark::Empty);
                    continue;
                }
                let with_ever = |napds: &BTreeSet<NodeRef>| -> BTreeSet<NodeRef> {
                    s1_def.iter().copied().chain(s2_def.intersection(napds).copied()).collect()
                };
                let mut removed = search_separation(st, env, "nonancestral", a, b, &s1, &with_ever(&napds_ba), p)?;
                if let Some((napds_ab, s2)) = &second {
                    removed |= search_separation(st, env, "nonancestral", a, b, s2, &with_ever(napds_ab), p)?;
                }
                if removed {
                    to_remove.push((a, b));
                }
            }
            for &(a, b) in &to_remove {
                st.graph.remove(a, b);
            }
            if !to_remove.is_empty() {
                any_removed = true;
                st.vote_cache.clear();
                (env.obs)(Stage::RemovalRound, st);
            }
        }
        if any_removed {
            let rules = st.config.final_rules.clone();
            orientation_phase_env(st, env, &rules, false)?;
            p = 0;
        } else {
            p += 1;
        }
    }
    let rules = st.config.final_rules.clone();
    orientation_phase_env(st, env, &rules, false)
}

/// Remove remaining false links between pairs where neither node is an
/// ancestor of the other, testing subsets of `napds_t` sets.
pub fn nonancestral_removal(st: &mut DiscoveryState, ci: &mut dyn CiTest) -> Result<(), DiscoveryError> {
    let mut obs = |_: Stage, _: &DiscoveryState| {};
    nonancestral_removal_env(st, &mut Env { ci, obs: &mut obs })
}

/// Full LPCMCI run. CI results are cached for the duration of the run.
pub fn run_lpcmci(ci: &mut dyn CiTest, config: &LpcmciConfig) -> Result<DiscoveryState, DiscoveryError> {
    run_lpcmci_observed(ci, config, &mut |_, _| {})
}

/// As [`run_lpcmci`], calling `obs` after every removal round, orientation
/// phase and re-initialization.
pub fn run_lpcmci_observed(
    ci: &mut dyn CiTest,
    config: &LpcmciConfig,
    obs: &mut dyn FnMut(Stage, &DiscoveryState),
) -> Result<DiscoveryState, DiscoveryError> {
    config.validate()?;
    let mut cached = CachedCi::new(ci);
    let mut st = DiscoveryState::new(cached.n_vars(), config.clone());
    let mut env = Env { ci: &mut cached, obs };
    for _ in 0..config.k {
        ancestral_removal_env(&mut st, &mut env)?;
        let carried = st.parent_links();
        st.reinitialize(&carried);
        (env.obs)(Stage::Reinitialized, &st);
    }
    ancestral_removal_env(&mut st, &mut env)?;
    if !st.middles_all(|m| matches!(m, MiddleMark::Bang | MiddleMark::Empty)) {
        return Err(DiscoveryError::Internal("ancestral phase ended with undecided middle marks".into()));
    }
    if !config.skip_nonancestral {
        nonancestral_removal_env(&mut st, &mut env)?;
        if !st.middles_all(|m| m == MiddleMark::Empty) {
            return Err(DiscoveryError::Internal("non-ancestral phase ended with non-empty middle marks".into()));
        }
    }
    Ok(st)
}
