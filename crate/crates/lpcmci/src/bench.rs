//! Graph comparison metrics and the replication harness.

use crate::ci::{CiError, CiResult, CiTest, GTest, OracleCi, ParCorr};
use crate::discovery::{run_lpcmci, DiscoveryError, LpcmciConfig};
use crate::graph::{canonical_key, EndMark, NodeRef, WindowGraph};
use crate::model::GroundTruthModel;
use crate::oracle::{true_pag_with, validate_lpcmci_pag, Oracle};
use crate::simulate::{random_model, sample, ModelConfig};
use crate::svarfci::{run_svarfci, run_svarrfci, BaselineConfig};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("graphs differ in shape: {0}")]
    Dimension(String),
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error("could not build thread pool: {0}")]
    Pool(String),
    #[error("report serialization failed: {0}")]
    Serialize(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkClass {
    LaggedCross,
    Contemporaneous,
    Auto,
}

impl LinkClass {
    pub const ALL: [LinkClass; 3] = [LinkClass::LaggedCross, LinkClass::Contemporaneous, LinkClass::Auto];

    pub fn of(i: usize, tau: usize, j: usize) -> LinkClass {
        if i == j {
            LinkClass::Auto
        } else if tau == 0 {
            LinkClass::Contemporaneous
        } else {
            LinkClass::LaggedCross
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LinkClass::LaggedCross => "lagged_cross",
            LinkClass::Contemporaneous => "contemporaneous",
            LinkClass::Auto => "auto",
        }
    }
}

/// A ratio with its raw counts. `zero_count` marks an empty denominator, in
/// which case `value` takes the vacuous convention of the metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub value: f64,
    pub num: u64,
    pub den: u64,
    pub zero_count: bool,
}

impl Rate {
    fn new(num: u64, den: u64, vacuous: f64) -> Rate {
        if den == 0 {
            Rate { value: vacuous, num, den, zero_count: true }
        } else {
            Rate { value: num as f64 / den as f64, num, den, zero_count: false }
        }
    }
}

/// Raw counts for one link class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub true_adj: u64,
    pub true_adj_found: u64,
    pub true_nonadj: u64,
    pub false_adj: u64,
    /// Non-circle marks in the truth, and how many the estimate matches.
    pub true_marks: u64,
    pub true_marks_hit: u64,
    /// Non-circle marks in the estimate, and how many are correct.
    pub est_marks: u64,
    pub est_marks_correct: u64,
}

impl ClassCounts {
    fn add(&mut self, o: &ClassCounts) {
        self.true_adj += o.true_adj;
        self.true_adj_found += o.true_adj_found;
        self.true_nonadj += o.true_nonadj;
        self.false_adj += o.false_adj;
        self.true_marks += o.true_marks;
        self.true_marks_hit += o.true_marks_hit;
        self.est_marks += o.est_marks;
        self.est_marks_correct += o.est_marks_correct;
    }

    pub fn metrics(&self) -> ClassMetrics {
        ClassMetrics {
            adj_tpr: Rate::new(self.true_adj_found, self.true_adj, 1.0),
            adj_fpr: Rate::new(self.false_adj, self.true_nonadj, 0.0),
            edgemark_recall: Rate::new(self.true_marks_hit, self.true_marks, 1.0),
            edgemark_precision: Rate::new(self.est_marks_correct, self.est_marks, 1.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub adj_tpr: Rate,
    pub adj_fpr: Rate,
    pub edgemark_recall: Rate,
    pub edgemark_precision: Rate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub lagged_cross: ClassMetrics,
    pub contemporaneous: ClassMetrics,
    pub auto: ClassMetrics,
    /// Mean over true links of the smallest |statistic| seen for that link.
    pub mean_min_abs_statistic: Option<f64>,
    /// Mean of the largest conditioning set used in a run.
    pub mean_max_cond: Option<f64>,
    pub wall_time_s: f64,
}

impl Metrics {
    pub fn class(&self, c: LinkClass) -> &ClassMetrics {
        match c {
            LinkClass::LaggedCross => &self.lagged_cross,
            LinkClass::Contemporaneous => &self.contemporaneous,
            LinkClass::Auto => &self.auto,
        }
    }
}

/// Counts for all three classes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphCounts {
    pub lagged_cross: ClassCounts,
    pub contemporaneous: ClassCounts,
    pub auto: ClassCounts,
}

impl GraphCounts {
    fn class_mut(&mut self, c: LinkClass) -> &mut ClassCounts {
        match c {
            LinkClass::LaggedCross => &mut self.lagged_cross,
            LinkClass::Contemporaneous => &mut self.contemporaneous,
            LinkClass::Auto => &mut self.auto,
        }
    }

    fn add(&mut self, o: &GraphCounts) {
        self.lagged_cross.add(&o.lagged_cross);
        self.contemporaneous.add(&o.contemporaneous);
        self.auto.add(&o.auto);
    }

    fn metrics(&self) -> Metrics {
        Metrics {
            lagged_cross: self.lagged_cross.metrics(),
            contemporaneous: self.contemporaneous.metrics(),
            auto: self.auto.metrics(),
            mean_min_abs_statistic: None,
            mean_max_cond: None,
            wall_time_s: 0.0,
        }
    }
}

fn scored(m: EndMark) -> bool {
    m != EndMark::Circle
}

/// Count agreement of `est` with `truth` over canonical slots.
pub fn count_graphs(est: &WindowGraph, truth: &WindowGraph) -> Result<GraphCounts, BenchError> {
    if est.n_vars() != truth.n_vars() || est.tau_max() != truth.tau_max() {
        return Err(BenchError::Dimension(format!(
            "estimate has N={}, tau_max={}; truth has N={}, tau_max={}",
            est.n_vars(),
            est.tau_max(),
            truth.n_vars(),
            truth.tau_max()
        )));
    }
    let mut out = GraphCounts::default();
    for (i, tau, j) in truth.all_keys() {
        let c = out.class_mut(LinkClass::of(i, tau, j));
        let t = truth.slot_marks(i, tau, j);
        let e = est.slot_marks(i, tau, j);
        match (t, e) {
            (Some(_), Some(_)) => {
                c.true_adj += 1;
                c.true_adj_found += 1;
            }
            (Some(_), None) => c.true_adj += 1,
            (None, Some(_)) => {
                c.true_nonadj += 1;
                c.false_adj += 1;
            }
            (None, None) => c.true_nonadj += 1,
        }
        let tm = t.map(|m| [m.at_i, m.at_j]);
        let em = e.map(|m| [m.at_i, m.at_j]);
        for side in 0..2 {
            let tv = tm.map(|m| m[side]);
            let ev = em.map(|m| m[side]);
            if let Some(tv) = tv.filter(|&m| scored(m)) {
                c.true_marks += 1;
                if ev == Some(tv) {
                    c.true_marks_hit += 1;
                }
            }
            // conflicts are scored but can never be correct
            if let Some(ev) = ev.filter(|&m| scored(m)) {
                c.est_marks += 1;
                if tv == Some(ev) {
                    c.est_marks_correct += 1;
                }
            }
        }
    }
    Ok(out)
}

pub fn compare_graphs(est: &WindowGraph, truth: &WindowGraph) -> Result<Metrics, BenchError> {
    Ok(count_graphs(est, truth)?.metrics())
}

/// Pass-through CI test recording the smallest |statistic| per canonical
/// pair and the largest conditioning set.
pub struct RecordingCi<T> {
    inner: T,
    min_abs: BTreeMap<(usize, usize, usize), f64>,
    max_cond: usize,
}

impl<T: CiTest> RecordingCi<T> {
    pub fn new(inner: T) -> Self {
        RecordingCi { inner, min_abs: BTreeMap::new(), max_cond: 0 }
    }

    pub fn min_abs(&self, i: usize, tau: usize, j: usize) -> Option<f64> {
        self.min_abs.get(&(i, tau, j)).copied()
    }

    pub fn max_cond(&self) -> usize {
        self.max_cond
    }
}

impl<T: CiTest> CiTest for RecordingCi<T> {
    fn test(&mut self, x: NodeRef, y: NodeRef, cond: &[NodeRef]) -> Result<CiResult, CiError> {
        let r = self.inner.test(x, y, cond)?;
        self.max_cond = self.max_cond.max(cond.len());
        let e = self.min_abs.entry(canonical_key(x, y).0).or_insert(f64::INFINITY);
        *e = e.min(r.statistic.abs());
        Ok(r)
    }

    fn n_vars(&self) -> usize {
        self.inner.n_vars()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lpcmci,
    Svarfci,
    Svarrfci,
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "lpcmci" => Ok(Method::Lpcmci),
            "svarfci" | "svar-fci" => Ok(Method::Svarfci),
            "svarrfci" | "svar-rfci" => Ok(Method::Svarrfci),
            _ => Err(format!("unknown method '{s}' (expected lpcmci, svarfci or svarrfci)")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Lpcmci => "lpcmci",
            Method::Svarfci => "svarfci",
            Method::Svarrfci => "svarrfci",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiKind {
    Parcorr,
    Gtest,
    Oracle,
}

impl FromStr for CiKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "parcorr" => Ok(CiKind::Parcorr),
            "gtest" | "g-test" => Ok(CiKind::Gtest),
            "oracle" => Ok(CiKind::Oracle),
            _ => Err(format!("unknown CI test '{s}' (expected parcorr, gtest or oracle)")),
        }
    }
}

/// Method and its tuning parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodSpec {
    pub method: Method,
    pub k: usize,
    pub alpha: f64,
    pub tau_max: usize,
    /// Cap on conditioning sets in the expensive phase (non-ancestral for
    /// LPCMCI, Possible-D-Sep for the baselines); `None` keeps the default of 3.
    pub max_cond: Option<usize>,
}

pub struct MethodOutput {
    pub graph: WindowGraph,
    pub warnings: Vec<String>,
}

pub fn run_method(spec: &MethodSpec, ci: &mut dyn CiTest) -> Result<MethodOutput, DiscoveryError> {
    match spec.method {
        Method::Lpcmci => {
            let mut cfg = LpcmciConfig::new(spec.tau_max, spec.alpha, spec.k);
            if spec.max_cond.is_some() {
                cfg.max_cond_nonancestral = spec.max_cond;
            }
            let st = run_lpcmci(ci, &cfg)?;
            Ok(MethodOutput { graph: st.graph, warnings: st.warnings })
        }
        Method::Svarfci | Method::Svarrfci => {
            let mut cfg = BaselineConfig::new(spec.tau_max, spec.alpha);
            if spec.max_cond.is_some() {
                cfg.max_cond_pds = spec.max_cond;
            }
            let r = if spec.method == Method::Svarfci { run_svarfci(ci, &cfg)? } else { run_svarrfci(ci, &cfg)? };
            Ok(MethodOutput { graph: r.graph, warnings: r.warnings })
        }
    }
}

/// One grid cell of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: Method,
    #[serde(default)]
    pub k: usize,
    pub ci: CiKind,
    pub alpha: f64,
    pub tau_max: usize,
    pub model: ModelConfig,
    #[serde(rename = "T")]
    pub t: usize,
    pub reps: usize,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default)]
    pub max_cond: Option<usize>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(BenchError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.reps == 0 {
            return Err(BenchError::Config("reps must be positive".into()));
        }
        if self.ci != CiKind::Oracle && self.t <= self.tau_max + 10 {
            return Err(BenchError::Config(format!("T = {} must exceed tau_max + 10", self.t)));
        }
        if (self.ci == CiKind::Gtest) != self.model.n_bin.is_some() {
            return Err(BenchError::Config("gtest goes with discrete models (n_bin) and vice versa".into()));
        }
        self.model.validate().map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn method_spec(&self) -> MethodSpec {
        MethodSpec { method: self.method, k: self.k, alpha: self.alpha, tau_max: self.tau_max, max_cond: self.max_cond }
    }
}

/// Accepts a single cell or a list of cells.
pub fn parse_experiments(s: &str) -> Result<Vec<ExperimentConfig>, BenchError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(Box<ExperimentConfig>),
        Many(Vec<ExperimentConfig>),
    }
    match serde_json::from_str::<OneOrMany>(s) {
        Ok(OneOrMany::One(c)) => Ok(vec![*c]),
        Ok(OneOrMany::Many(v)) => Ok(v),
        Err(_) => {
            // re-parse as a single cell for a useful message
            serde_json::from_str::<ExperimentConfig>(s).map(|c| vec![c]).map_err(|e| BenchError::Config(e.to_string()))
        }
    }
}

/// Model and data seeds of replication `seed`.
pub fn replication_seeds(seed: u64) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (rng.next_u64(), rng.next_u64())
}

#[derive(Clone, Debug)]
pub struct Replication {
    pub seed: u64,
    pub counts: GraphCounts,
    pub min_abs_statistic: Option<f64>,
    pub max_cond: usize,
    pub wall_time_s: f64,
}

/// Run one replication of a cell.
pub fn run_replication(cfg: &ExperimentConfig, seed: u64) -> Result<Replication, String> {
    let (model_seed, data_seed) = replication_seeds(seed);
    let model = random_model(&cfg.model, model_seed).map_err(|e| e.to_string())?;
    let oracle = Oracle::new(&model.graph(), cfg.tau_max).map_err(|e| e.to_string())?;
    let truth = true_pag_with(&oracle).map_err(|e| e.to_string())?;
    let spec = cfg.method_spec();
    let start = Instant::now();
    let (out, rec_min, max_cond) = match cfg.ci {
        CiKind::Oracle => run_recorded(&spec, OracleCi::new(&oracle), &truth)?,
        CiKind::Parcorr | CiKind::Gtest => {
            let data = sample(&model, cfg.t, data_seed).map_err(|e| e.to_string())?;
            if cfg.ci == CiKind::Parcorr {
                run_recorded(&spec, ParCorr::new(&data), &truth)?
            } else {
                run_recorded(&spec, GTest::new(&data), &truth)?
            }
        }
    };
    let wall_time_s = start.elapsed().as_secs_f64();
    let counts = count_graphs(&out, &truth).map_err(|e| e.to_string())?;
    Ok(Replication { seed, counts, min_abs_statistic: rec_min, max_cond, wall_time_s })
}

fn run_recorded<T: CiTest>(
    spec: &MethodSpec,
    ci: T,
    truth: &WindowGraph,
) -> Result<(WindowGraph, Option<f64>, usize), String> {
    let mut rec = RecordingCi::new(ci);
    let out = run_method(spec, &mut rec).map_err(|e| e.to_string())?;
    let mut mins: Vec<f64> = truth
        .canonical_edges()
        .into_iter()
        .filter_map(|(i, tau, j, _)| rec.min_abs(i, tau, j))
        .filter(|v| v.is_finite())
        .collect();
    let mean = sorted_mean(&mut mins);
    Ok((out.graph, mean, rec.max_cond()))
}

/// Mean of `v` summed in sorted order, so the result does not depend on input order.
fn sorted_mean(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v.iter().sum::<f64>() / v.len() as f64)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub mean_s: f64,
    pub q05_s: f64,
    pub q95_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepError {
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub config: ExperimentConfig,
    pub n_ok: usize,
    pub errors: Vec<RepError>,
    /// More than 10% of replications errored.
    pub failed: bool,
    pub counts: GraphCounts,
    pub metrics: Metrics,
    pub runtime: Runtime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub crate_version: String,
    pub os: String,
    pub arch: String,
}

impl Environment {
    pub fn current() -> Self {
        Environment {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub cells: Vec<CellReport>,
    pub environment: Environment,
}

impl Report {
    pub fn to_json_string(&self) -> Result<String, BenchError> {
        serde_json::to_string_pretty(self).map_err(|e| BenchError::Serialize(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Report, BenchError> {
        serde_json::from_str(s).map_err(|e| BenchError::Serialize(e.to_string()))
    }

    /// Copy with all timing fields zeroed.
    pub fn without_timing(&self) -> Report {
        let mut r = self.clone();
        for c in &mut r.cells {
            c.metrics.wall_time_s = 0.0;
            c.runtime = Runtime { mean_s: 0.0, q05_s: 0.0, q95_s: 0.0 };
        }
        r
    }

    /// One row per cell and link class.
    pub fn to_csv(&self) -> Result<String, BenchError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| BenchError::Serialize(e.to_string());
        w.write_record([
            "cell", "method", "k", "ci", "alpha", "autocorr", "n_total", "T", "class", "adj_tpr", "adj_fpr",
            "edgemark_recall", "edgemark_precision", "n_ok", "failed", "runtime_mean_s",
        ])
        .map_err(err)?;
        for (n, c) in self.cells.iter().enumerate() {
            for class in LinkClass::ALL {
                let m = c.metrics.class(class);
                w.write_record([
                    n.to_string(),
                    c.config.method.to_string(),
                    c.config.k.to_string(),
                    format!("{:?}", c.config.ci).to_lowercase(),
                    c.config.alpha.to_string(),
                    c.config.model.autocorr.to_string(),
                    c.config.model.n_total.to_string(),
                    c.config.t.to_string(),
                    class.name().to_string(),
                    m.adj_tpr.value.to_string(),
                    m.adj_fpr.value.to_string(),
                    m.edgemark_recall.value.to_string(),
                    m.edgemark_precision.value.to_string(),
                    c.n_ok.to_string(),
                    c.failed.to_string(),
                    c.runtime.mean_s.to_string(),
                ])
                .map_err(err)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| BenchError::Serialize(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| BenchError::Serialize(e.to_string()))
    }
}

/// Fold replications into a cell report. The result does not depend on the
/// order of `reps`.
pub fn aggregate(config: &ExperimentConfig, reps: Vec<Result<Replication, RepError>>) -> CellReport {
    let mut counts = GraphCounts::default();
    let mut errors = Vec::new();
    let (mut mins, mut conds, mut times) = (Vec::new(), Vec::new(), Vec::new());
    for r in reps {
        match r {
            Ok(r) => {
                counts.add(&r.counts);
                mins.extend(r.min_abs_statistic);
                conds.push(r.max_cond as f64);
                times.push(r.wall_time_s);
            }
            Err(e) => errors.push(e),
        }
    }
    errors.sort_by_key(|e| e.seed);
    let n_ok = times.len();
    let mut metrics = counts.metrics();
    metrics.mean_min_abs_statistic = sorted_mean(&mut mins);
    metrics.mean_max_cond = sorted_mean(&mut conds);
    let mean_t = sorted_mean(&mut times).unwrap_or(0.0);
    metrics.wall_time_s = mean_t;
    let runtime = Runtime { mean_s: mean_t, q05_s: quantile(&times, 0.05), q95_s: quantile(&times, 0.95) };
    let total = n_ok + errors.len();
    CellReport { config: config.clone(), n_ok, failed: errors.len() * 10 > total, errors, counts, metrics, runtime }
}

/// Run every cell with `jobs` worker threads. Replication `r` of a cell uses
/// seed `seed_base + r`.
pub fn run_experiment(cells: &[ExperimentConfig], jobs: usize) -> Result<Report, BenchError> {
    for c in cells {
        c.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| BenchError::Pool(e.to_string()))?;
    let cells = pool.install(|| {
        cells
            .iter()
            .map(|cfg| {
                let reps: Vec<_> = (0..cfg.reps as u64)
                    .into_par_iter()
                    .map(|r| {
                        let seed = cfg.seed_base.wrapping_add(r);
                        run_replication(cfg, seed).map_err(|message| RepError { seed, message })
                    })
                    .collect();
                aggregate(cfg, reps)
            })
            .collect()
    });
    Ok(Report { cells, environment: Environment::current() })
}

/// Outcome of running LPCMCI with the oracle CI test on one model.
pub struct OracleCheck {
    pub estimated: WindowGraph,
    pub expected: WindowGraph,
    /// Edges that differ, as printed by [`WindowGraph::diff`].
    pub diff: Vec<String>,
    /// Unsound marks in the estimate relative to the true MAG.
    pub violations: Vec<String>,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.diff.is_empty()
    }
}

/// Run LPCMCI(k) with oracle answers and compare to `expected`, or to the
/// true PAG when `expected` is `None`.
pub fn oracle_check(model: &GroundTruthModel, tau_max: usize, k: usize, expected: Option<&WindowGraph>) -> Result<OracleCheck, String> {
    let oracle = Oracle::new(&model.graph(), tau_max).map_err(|e| e.to_string())?;
    let expected = match expected {
        Some(g) => g.clone(),
        None => true_pag_with(&oracle).map_err(|e| e.to_string())?,
    };
    let cfg = LpcmciConfig::new(tau_max, 0.5, k);
    let st = run_lpcmci(&mut OracleCi::new(&oracle), &cfg).map_err(|e| e.to_string())?;
    if st.graph.n_vars() != expected.n_vars() || st.graph.tau_max() != expected.tau_max() {
        return Err(format!(
            "expected graph has N={}, tau_max={} but the model gives N={}, tau_max={}",
            expected.n_vars(),
            expected.tau_max(),
            st.graph.n_vars(),
            st.graph.tau_max()
        ));
    }
    let diff = st.graph.diff(&expected);
    let violations = validate_lpcmci_pag(&st.graph, &oracle).map_err(|e| e.to_string())?;
    Ok(OracleCheck { estimated: st.graph, expected, diff, violations })
}

/// Model family of the oracle suite: model `index` has 3 to 6 variables,
/// 30% latent, lags up to 2, and autocorrelation cycling through a fixed grid.
pub fn oracle_suite_config(index: usize) -> ModelConfig {
    const AUTOCORR: [f64; 6] = [0.0, 0.3, 0.5, 0.7, 0.9, 0.95];
    let mut cfg = ModelConfig::new(3 + index % 4, AUTOCORR[(index / 4) % AUTOCORR.len()]);
    cfg.p_ts = 2;
    cfg.latent_frac = 0.3;
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, MiddleMark};
    use EndMark::*;

    fn edge(g: &mut WindowGraph, a: (usize, usize), b: (usize, usize), ma: EndMark, mb: EndMark) {
        g.set_edge(Edge::new(NodeRef::new(a.0, a.1), NodeRef::new(b.0, b.1), ma, MiddleMark::Empty, mb)).unwrap();
    }

    #[test]
    fn identical_graphs_score_perfectly() {
        let mut g = WindowGraph::empty(3, 2);
        edge(&mut g, (0, 1), (1, 0), Tail, Head);
        edge(&mut g, (1, 0), (2, 0), Head, Head);
        edge(&mut g, (2, 1), (2, 0), Tail, Head);
        let m = compare_graphs(&g, &g).unwrap();
        for c in LinkClass::ALL {
            let m = m.class(c);
            assert_eq!(m.adj_tpr.value, 1.0);
            assert_eq!(m.adj_fpr.value, 0.0);
            assert_eq!(m.edgemark_recall.value, 1.0);
            assert_eq!(m.edgemark_precision.value, 1.0);
        }
    }

    #[test]
    fn edgeless_estimate_has_zero_recall_and_flagged_precision() {
        let mut truth = WindowGraph::empty(2, 1);
        edge(&mut truth, (0, 1), (1, 0), Tail, Head);
        let m = compare_graphs(&WindowGraph::empty(2, 1), &truth).unwrap();
        let l = m.lagged_cross;
        assert_eq!(l.adj_tpr.value, 0.0);
        assert_eq!(l.edgemark_recall.value, 0.0);
        assert_eq!(l.edgemark_precision.value, 1.0);
        assert!(l.edgemark_precision.zero_count);
    }

    #[test]
    fn spurious_lagged_link_fpr_by_hand() {
        // N=3, tau_max=2: lagged cross slots are 6 ordered pairs times 2 lags = 12
        let mut truth = WindowGraph::empty(3, 2);
        edge(&mut truth, (0, 1), (1, 0), Tail, Head);
        let mut est = truth.clone();
        edge(&mut est, (2, 2), (1, 0), Circle, Head);
        let m = compare_graphs(&est, &truth).unwrap();
        assert_eq!(m.lagged_cross.adj_fpr.den, 11);
        assert_eq!(m.lagged_cross.adj_fpr.num, 1);
        assert!((m.lagged_cross.adj_fpr.value - 1.0 / 11.0).abs() < 1e-15);
        assert_eq!(m.lagged_cross.adj_tpr.value, 1.0);
        // the spurious head is a wrong estimated mark
        assert_eq!(m.lagged_cross.edgemark_precision.den, 3);
        assert_eq!(m.lagged_cross.edgemark_precision.num, 2);
    }

    #[test]
    fn conflicts_and_circles() {
        let mut truth = WindowGraph::empty(2, 0);
        edge(&mut truth, (0, 0), (1, 0), Circle, Head);
        let mut est = WindowGraph::empty(2, 0);
        edge(&mut est, (0, 0), (1, 0), Circle, Conflict);
        let c = count_graphs(&est, &truth).unwrap().contemporaneous;
        assert_eq!((c.true_marks, c.true_marks_hit, c.est_marks, c.est_marks_correct), (1, 0, 1, 0));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(compare_graphs(&WindowGraph::empty(2, 1), &WindowGraph::empty(3, 1)).is_err());
        assert!(compare_graphs(&WindowGraph::empty(2, 1), &WindowGraph::empty(2, 2)).is_err());
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.0);
        assert!((quantile(&v, 0.05) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn parses_single_and_list() {
        let one = r#"{"method":"lpcmci","k":1,"ci":"oracle","alpha":0.05,"tau_max":1,
            "model":{"n_total":3,"autocorr":0.5},"T":100,"reps":2,"seed_base":7}"#;
        let cells = parse_experiments(one).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].model.n_links(), 3);
        let many = format!("[{one},{one}]");
        assert_eq!(parse_experiments(&many).unwrap().len(), 2);
        assert!(parse_experiments(r#"{"method":"nope"}"#).is_err());
    }
}
