//! SVAR-FCI and SVAR-RFCI baselines, plus plain FCI with the majority rule.
//!
//! Edges live in canonical slots, so every removal and orientation applies to
//! all homologous copies at once.

use crate::ci::{CachedCi, CiError, CiTest};
use crate::discovery::{plain_majority_vote, DiscoveryError, SepSetStore};
use crate::fci::{self, OrientationOracle, Vote};
use crate::graph::{NodeRef, WindowGraph};
use crate::oracle::combinations;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig {
    pub tau_max: usize,
    pub alpha: f64,
    /// Cap on conditioning sets in the skeleton phase.
    pub max_cond_skeleton: Option<usize>,
    /// Cap on conditioning sets in the Possible-D-Sep phase.
    pub max_cond_pds: Option<usize>,
    /// Cap on subset size in the majority vote.
    pub max_cond_vote: Option<usize>,
}

impl BaselineConfig {
    pub fn new(tau_max: usize, alpha: f64) -> Self {
        BaselineConfig { tau_max, alpha, max_cond_skeleton: None, max_cond_pds: Some(3), max_cond_vote: Some(3) }
    }

    /// No caps anywhere.
    pub fn uncapped(tau_max: usize, alpha: f64) -> Self {
        BaselineConfig { tau_max, alpha, max_cond_skeleton: None, max_cond_pds: None, max_cond_vote: None }
    }
}

#[derive(Clone, Debug)]
pub struct BaselineResult {
    pub graph: WindowGraph,
    pub sepsets: SepSetStore,
    pub warnings: Vec<String>,
}

struct Runner<'a> {
    ci: CachedCi<&'a mut dyn CiTest>,
    cfg: BaselineConfig,
    sepsets: SepSetStore,
    warnings: Vec<String>,
}

impl<'a> Runner<'a> {
    fn new(ci: &'a mut dyn CiTest, cfg: &BaselineConfig) -> Result<Self, DiscoveryError> {
        if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
            return Err(DiscoveryError::Config(format!("alpha must lie in (0, 1), got {}", cfg.alpha)));
        }
        Ok(Runner { ci: CachedCi::new(ci), cfg: cfg.clone(), sepsets: SepSetStore::new(), warnings: Vec::new() })
    }

    /// Independence at level alpha; degenerate tests count as dependent.
    fn independent(&mut self, x: NodeRef, y: NodeRef, cond: &[NodeRef]) -> Result<bool, DiscoveryError> {
        match self.ci.test(x, y, cond) {
            Ok(r) => {
                self.sepsets.update_imin(x, y, r.statistic);
                Ok(r.p_value > self.cfg.alpha)
            }
            Err(CiError::Degenerate(m)) => {
                self.warnings.push(format!("{x} _|_ {y} | {cond:?}: {m}"));
                Ok(false)
            }
            Err(source) => Err(DiscoveryError::Ci { query: format!("{x} _|_ {y} | {cond:?}"), source }),
        }
    }

    fn skeleton(&mut self, n_vars: usize) -> Result<WindowGraph, DiscoveryError> {
        let mut g = WindowGraph::complete_initial(n_vars, self.cfg.tau_max);
        fci::reset_to_skeleton(&mut g);
        let adj = |g: &WindowGraph, x: NodeRef, _y: NodeRef| -> BTreeSet<NodeRef> { g.neighbors(x).into_iter().collect() };
        self.removal_phase(&mut g, self.cfg.max_cond_skeleton, &adj)?;
        Ok(g)
    }

    /// Level-wise removals given subsets of `candidates(graph, x, y)`. Candidate
    /// sets come from the graph at the start of each level and removals are
    /// deferred to its end.
    fn removal_phase(
        &mut self,
        g: &mut WindowGraph,
        cap: Option<usize>,
        candidates: &dyn Fn(&WindowGraph, NodeRef, NodeRef) -> BTreeSet<NodeRef>,
    ) -> Result<(), DiscoveryError> {
        let mut p = 0;
        loop {
            if cap.is_some_and(|c| p > c) {
                return Ok(());
            }
            let snapshot = g.clone();
            let fixed = |_: &WindowGraph, x: NodeRef, y: NodeRef| candidates(&snapshot, x, y);
            let any = self.one_level(g, p, &fixed)?;
            if !any {
                return Ok(());
            }
            p += 1;
        }
    }

    fn one_level(
        &mut self,
        g: &mut WindowGraph,
        p: usize,
        candidates: &dyn Fn(&WindowGraph, NodeRef, NodeRef) -> BTreeSet<NodeRef>,
    ) -> Result<bool, DiscoveryError> {
        let mut any = false;
        let mut removals: BTreeMap<(usize, usize, usize), (NodeRef, NodeRef)> = BTreeMap::new();
        for (i, tau, j, _) in g.canonical_edges() {
            let (a, b) = (NodeRef::new(i, tau), NodeRef::new(j, 0));
            'dirs: for (x, y) in [(b, a), (a, b)] {
                let mut cand: Vec<NodeRef> = candidates(g, x, y).into_iter().filter(|&v| v != a && v != b).collect();
                cand.sort();
                if cand.len() < p {
                    continue;
                }
                any = true;
                for s in combinations(&cand, p) {
                    if self.independent(a, b, &s)? {
                        self.sepsets.add(a, b, &s);
                        removals.insert((i, tau, j), (a, b));
                        break 'dirs;
                    }
                }
            }
        }
        for (a, b) in removals.into_values() {
            g.remove(a, b);
        }
        Ok(any)
    }
}

/// Colombo-Maathuis majority rule over adjacency subsets.
struct Majority<'r, 'a> {
    run: &'r mut Runner<'a>,
}

impl OrientationOracle for Majority<'_, '_> {
    type Error = DiscoveryError;

    fn vote(&mut self, g: &WindowGraph, a: NodeRef, b: NodeRef, c: NodeRef) -> Result<Vote, DiscoveryError> {
        let alpha = self.run.cfg.alpha;
        let cap = self.run.cfg.max_cond_vote;
        plain_majority_vote(g, &mut self.run.ci, alpha, cap, a, b, c)
    }
}

/// Majority rule plus the RFCI checks on discriminating paths.
struct RfciOracle<'r, 'a> {
    run: &'r mut Runner<'a>,
}

impl RfciOracle<'_, '_> {
    /// Shift `(x, y, s)` so the later of `x`, `y` sits at lag 0, dropping
    /// conditions that leave the window or lie after both.
    fn placed(&self, x: NodeRef, y: NodeRef, s: &[NodeRef]) -> (NodeRef, NodeRef, Vec<NodeRef>) {
        let d = x.lag.min(y.lag);
        let (xs, ys) = (x.toward_present(d).unwrap(), y.toward_present(d).unwrap());
        let tau_max = self.run.cfg.tau_max;
        let cond: BTreeSet<NodeRef> = s
            .iter()
            .filter_map(|v| v.toward_present(d))
            .filter(|v| v.lag <= tau_max && *v != xs && *v != ys)
            .collect();
        (xs, ys, cond.into_iter().collect())
    }

    /// Remove `x -- y` if independent given the recorded sepset of `u`, `v`.
    fn check_pair(&mut self, g: &mut WindowGraph, x: NodeRef, y: NodeRef, u: NodeRef, v: NodeRef) -> Result<bool, DiscoveryError> {
        let base = self.run.sepsets.get(u, v).into_iter().next().unwrap_or_default();
        let (xs, ys, cond) = self.placed(x, y, &base);
        if self.run.independent(xs, ys, &cond)? {
            let min = minimal_subset(self.run, xs, ys, &cond)?;
            self.run.sepsets.add(xs, ys, &min);
            g.remove(xs, ys);
            return Ok(true);
        }
        Ok(false)
    }
}

impl OrientationOracle for RfciOracle<'_, '_> {
    type Error = DiscoveryError;

    fn vote(&mut self, g: &WindowGraph, a: NodeRef, b: NodeRef, c: NodeRef) -> Result<Vote, DiscoveryError> {
        Majority { run: self.run }.vote(g, a, b, c)
    }

    fn discriminating_path(&mut self, g: &mut WindowGraph, path: &[NodeRef]) -> Result<Vote, DiscoveryError> {
        let k = path.len();
        let (theta, gamma) = (path[0], path[k - 1]);
        let mut removed = false;
        for w in path[..k - 1].windows(2) {
            removed |= self.check_pair(g, w[0], w[1], theta, gamma)?;
        }
        for &v in &path[1..k - 1] {
            removed |= self.check_pair(g, v, gamma, theta, gamma)?;
        }
        if removed {
            return Ok(Vote::Ambiguous);
        }
        self.vote(g, theta, path[k - 2], gamma)
    }
}

/// Drop elements of a separating set one at a time while it still separates.
fn minimal_subset(run: &mut Runner, x: NodeRef, y: NodeRef, set: &[NodeRef]) -> Result<Vec<NodeRef>, DiscoveryError> {
    let mut cur = set.to_vec();
    loop {
        let mut shrunk = false;
        for k in 0..cur.len() {
            let mut rest = cur.clone();
            rest.remove(k);
            if run.independent(x, y, &rest)? {
                cur = rest;
                shrunk = true;
                break;
            }
        }
        if !shrunk {
            return Ok(cur);
        }
    }
}

fn finish(run: Runner, graph: WindowGraph) -> BaselineResult {
    BaselineResult { graph, sepsets: run.sepsets, warnings: run.warnings }
}

/// SVAR-FCI: stationarized skeleton search over adjacency subsets, collider
/// orientation, a second removal phase over window Possible-D-Sep sets, then
/// re-orientation with the full rule set.
pub fn run_svarfci(ci: &mut dyn CiTest, cfg: &BaselineConfig) -> Result<BaselineResult, DiscoveryError> {
    let n = ci.n_vars();
    let mut run = Runner::new(ci, cfg)?;
    let mut g = run.skeleton(n)?;
    fci::apply_r0(&mut g, &mut Majority { run: &mut run })?;
    let pds = |g: &WindowGraph, x: NodeRef, y: NodeRef| -> BTreeSet<NodeRef> { fci::possible_d_sep(g, x, y) };
    let cap = cfg.max_cond_pds;
    let frozen = pds_fixed(&g, &pds);
    run.removal_phase(&mut g, cap, &frozen)?;
    fci::reset_to_skeleton(&mut g);
    fci::orient_complete(&mut g, &mut Majority { run: &mut run })?;
    Ok(finish(run, g))
}

/// Possible-D-Sep sets are computed on the graph after collider orientation
/// and kept fixed during the second removal phase.
fn pds_fixed<'g>(
    g: &WindowGraph,
    pds: &'g dyn Fn(&WindowGraph, NodeRef, NodeRef) -> BTreeSet<NodeRef>,
) -> impl Fn(&WindowGraph, NodeRef, NodeRef) -> BTreeSet<NodeRef> + 'g {
    let frozen = g.clone();
    move |_: &WindowGraph, x: NodeRef, y: NodeRef| pds(&frozen, x, y)
}

/// SVAR-RFCI: skeleton search, the RFCI unshielded-triple checks, collider
/// orientation and the remaining rules with RFCI's discriminating-path tests.
pub fn run_svarrfci(ci: &mut dyn CiTest, cfg: &BaselineConfig) -> Result<BaselineResult, DiscoveryError> {
    let n = ci.n_vars();
    let mut run = Runner::new(ci, cfg)?;
    let mut g = run.skeleton(n)?;
    loop {
        let mut removals: BTreeMap<(usize, usize, usize), (NodeRef, NodeRef, Vec<NodeRef>)> = BTreeMap::new();
        for (a, b, c) in fci::unshielded_triples(&g) {
            let o = RfciOracle { run: &mut run };
            let base = o.run.sepsets.get(a, c).into_iter().next().unwrap_or_default();
            for x in [a, c] {
                let (xs, bs, cond) = o.placed(x, b, &base);
                let key = crate::graph::canonical_key(xs, bs).0;
                if removals.contains_key(&key) {
                    continue;
                }
                if o.run.independent(xs, bs, &cond)? {
                    let min = minimal_subset(o.run, xs, bs, &cond)?;
                    removals.insert(key, (xs, bs, min));
                }
            }
        }
        if removals.is_empty() {
            break;
        }
        for (x, y, s) in removals.into_values() {
            run.sepsets.add(x, y, &s);
            g.remove(x, y);
        }
    }
    fci::reset_to_skeleton(&mut g);
    fci::orient_complete(&mut g, &mut RfciOracle { run: &mut run })?;
    Ok(finish(run, g))
}

/// FCI orientation with the plain majority rule on a given skeleton and
/// separating sets; the heads found by an uncapped vote are the only ones used.
pub fn orient_plain_majority(ci: &mut dyn CiTest, skeleton: &WindowGraph, alpha: f64) -> Result<WindowGraph, DiscoveryError> {
    let cfg = BaselineConfig::uncapped(skeleton.tau_max(), alpha);
    let mut run = Runner::new(ci, &cfg)?;
    let mut g = skeleton.clone();
    fci::reset_to_skeleton(&mut g);
    fci::orient_complete(&mut g, &mut Majority { run: &mut run })?;
    Ok(g)
}
