//! Conditional independence tests behind one query interface, and the
//! analytic stationary covariance of linear models.
//!
//! A query node `(var, lag)` refers to column `var` shifted back by `lag`
//! steps. Queries are shifted so their latest node is at lag 0, then samples
//! are aligned over rows `max_lag..T`.

use crate::data::DataFrame;
use crate::graph::NodeRef;
use crate::model::{GroundTruthModel, NoiseDist};
use crate::oracle::Oracle;
use nalgebra::DMatrix;
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CiResult {
    /// Absolute effect measure; used for the minimum-statistic memory.
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum CiError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("insufficient samples: need {needed}, have {available}")]
    InsufficientSamples { needed: usize, available: usize },
    #[error("degenerate test: {0}")]
    Degenerate(String),
    #[error("oracle: {0}")]
    Oracle(String),
    #[error("covariance: {0}")]
    Covariance(String),
}

pub trait CiTest {
    fn test(&mut self, x: NodeRef, y: NodeRef, cond: &[NodeRef]) -> Result<CiResult, CiError>;

    /// Number of columns the test operates on.
    fn n_vars(&self) -> usize;
}

impl<T: CiTest + ?Sized> CiTest for &mut T {
    fn test(&mut self, x: NodeRef, y: NodeRef, cond: &[NodeRef]) -> Result<CiResult, CiError> {
        (**self).test(x, y, cond)
    }

    fn n_vars(&self) -> usize {
        (**self).n_vars()
    }
}

impl<T: CiTest + ?Sized> CiTest for Box<T> {
    fn test(&mut self, x: NodeRef, y: NodeRef, cond: &[NodeRef]) -> Result<CiResult, CiError> {
        (**self).test(x, y, cond)
    }

    fn n_vars(&self) -> usize {
        (**self).n_vars()
    }
}

fn check_query(x: NodeRef, y: NodeRef, cond: &[NodeRef], n_vars: usize) -> Result<(), CiError> {
    if x == y {
        return Err(CiError::InvalidQuery(format!("x and y are both {x}")));
    }
    for &z in cond {
        if z == x || z == y {
            return Err(CiError::InvalidQuery(format!("{z} is tested and conditioned on")));
        }
    }
    for v in cond.iter().chain([&x, &y]) {
        if v.var >= n_vars {
            return Err(CiError::InvalidQuery(format!("{v} refers to a missing column")));
        }
    }
    Ok(())
}

/// Aligned samples of `nodes`, one series per node, over rows `max_lag..T`.
fn aligned(columns: &[Vec<f64>], nodes: &[NodeRef]) -> (usize, Vec<Vec<f64>>) {
    let t = columns.first().map(|c| c.len()).unwrap_or(0);
    let min_lag = nodes.iter().map(|v| v.lag).min().unwrap_or(0);
    let max_lag = nodes.iter().map(|v| v.lag).max().unwrap_or(0) - min_lag;
    let n = t.saturating_sub(max_lag);
    let series = nodes
        .iter()
        .map(|v| (max_lag..t).map(|r| columns[v.var][r + min_lag - v.lag]).collect())
        .collect();
    (n, series)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn variance(a: &[f64]) -> f64 {
    let n = a.len() as f64;
    let m = a.iter().sum::<f64>() / n;
    a.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

/// Orthonormal basis of the span of an intercept and `cols` (modified
/// Gram-Schmidt with re-orthogonalization); dependent columns are dropped.
fn orthonormal_basis(n: usize, cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = vec![vec![1.0 / (n as f64).sqrt(); n]];
    for c in cols {
        let mut v = c.clone();
        let norm0 = dot(&v, &v).sqrt();
        for _ in 0..2 {
            for q in &basis {
                let proj = dot(&v, q);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= proj * qi;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-10 * norm0.max(f64::MIN_POSITIVE) && norm > 0.0 {
            for vi in &mut v {
                *vi /= norm;
            }
            basis.push(v);
        }
    }
    basis
}

fn residual(v: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut r = v.to_vec();
    for q in basis {
        let proj = dot(&r, q);
        for (ri, qi) in r.iter_mut().zip(q) {
            *ri -= proj * qi;
        }
    }
    r
}

/// Two-sided p-value of a sample partial correlation with `dof` degrees of freedom.
pub fn parcorr_p_value(r: f64, dof: f64) -> f64 {
    if r.abs() >= 1.0 - 1e-12 {
        return 0.0;
    }
    let t = r * (dof / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Partial correlation test: residualize both series on the conditions by
/// least squares (with intercept), then a Student-t test on the residual correlation.
#[derive(Clone, Debug)]
pub struct ParCorr {
    columns: Vec<Vec<f64>>,
}

impl ParCorr {
    pub fn new(data: &DataFrame) -> Self {
        ParCorr { columns: (0..data.n_cols()).map(|c| data.column(c)).collect() }
    }

    /// Sample partial correlation and the number of aligned samples.
    pub fn partial_correlation(&self, x: NodeRef, y: NodeRef, cond: &[NodeRef]) -> Result<(f64, usize), CiError> {
        check_query(x, y, cond, self.columns.len())?;
        let mut nodes = vec![x, y];
        nodes.extend_from_slice(cond);
        let (n, mut series) = aligned(&self.columns, &nodes);
        let needed = cond.len() + 3;
        if n < needed {
            return Err(CiError::InsufficientSamples { needed, available: n });
        }
        let zs = series.split_off(2);
        let basis = orthonormal_basis(n, &zs);
        let mut res = Vec::with_capacity(2);
        for (v, node) in series.iter().zip([x, y]) {
            let r = residual(v, &basis);
            let var_in = variance(v);
            let var_out = dot(&r, &r) / n as f64;
            if var_in <= 0.0 || var_out < 1e-12 * var_in {
                return Err(CiError::Degenerate(format!(
                    "{node} is (numerically) a linear function of the conditions {cond:?}"
                )));
            }
            res.push(r);
        }
        let r = dot(&res[0], &res[1]) / (dot(&res[0], &res[0]) * dot(&res[1], &res[1])).sqrt();
        Ok((r.clamp(-1.0, 1.0), n))
    }
}

impl CiTest for ParCorr {
    fn test(&mut self, x: NodeRef, y: NodeRef, cond: &[NodeRef]) -> Result<CiResult, CiError> {
        let (r, n) = self.partial_correlation(x, y, cond)?;
        let dof = (n - cond.len() - 2) as f64;
        Ok(CiResult { statistic: r.abs(), p_value: parcorr_p_value(r, dof) })
    }

    fn n_vars(&self) -> usize {
        self.columns.len()
    }
}

/// G statistic and degrees of freedom for one contingency table given as
/// `(x, y)` category pairs. Empty rows and columns never arise because only
/// observed categories are tabulated.
pub fn g_statistic(pairs: &[(i64, i64)]) -> (f64, usize) {
    let mut table: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    let mut rows: BTreeMap<i64, f64> = BTreeMap::new();
    let mut cols: BTreeMap<i64, f64> = BTreeMap::new();
    for &(a, b) in pairs {
        *table.entry((a, b)).or_default() += 1.0;
        *rows.entry(a).or_default() += 1.0;
        *cols.entry(b).or_default() += 1.0;
    }
    let n = pairs.len() as f64;
    let mut g = 0.0;
    for (&(a, b), &o) in &table {
        let e = rows[&a] * cols[&b] / n;
        g += o * (o / e).ln();
    }
    let dof = rows.len().saturating_sub(1) * cols.len().saturating_sub(1);
    (2.0 * g, dof)
}

/// G-test of conditional independence for discrete data: one contingency
/// table per observed configuration of the conditions, statistics and
/// degrees of freedom summed over tables.
#[derive(Clone, Debug)]
pub struct GTest {
    columns: Vec<Vec<i64>>,
}

impl GTest {
    pub fn new(data: &DataFrame) -> Self {
        let columns = (0..data.n_cols())
            .map(|c| data.column(c).into_iter().map(|v| v.round() as i64).collect())
            .collect();
        GTest { columns }
    }

    /// Total G statistic and degrees of freedom.
    pub fn statistic(&self, x: NodeRef, y: NodeRef, cond: &[NodeRef]) -> Result<(f64, usize), CiError> {
        check_query(x, y, cond, self.columns.len())?;
        let t = self.columns.first().map(|c| c.len()).unwrap_or(0);
        let (x, y, cond) = canonical_query(x, y, cond);
        let cond = &cond[..];
        let max_lag = cond.iter().chain([&x, &y]).map(|v| v.lag).max().unwrap_or(0);
        if t <= max_lag {
            return Err(CiError::InsufficientSamples { needed: max_lag + 1, available: t });
        }
        let mut strata: BTreeMap<Vec<i64>, Vec<(i64, i64)>> = BTreeMap::new();
        for r in max_lag..t {
            let key: Vec<i64> = cond.iter().map(|z| self.columns[z.var][r - z.lag]).collect();
            strata
                .entry(key)
                .or_default()
                .push((self.columns[x.var][r - x.lag], self.columns[y.var][r - y.lag]));
        }
        let mut g = 0.0;
        let mut dof = 0;
        for pairs in strata.values() {
            let (gs, ds) = g_statistic(pairs);
            g += gs;
            dof += ds;
        }
        Ok((g, dof))
    }
}

impl CiTest for GTest {
    fn test(&mut self, x: NodeRef, y: NodeRef, cond: &[NodeRef]) -> Result<CiResult, CiError> {
        let (g, dof) = self.statistic(x, y, cond)?;
        if dof < 1 {
            return Ok(CiResult { statistic: g, p_value: 1.0 });
        }
        let p = ChiSquared::new(dof as f64).expect("positive dof").sf(g).clamp(0.0, 1.0);
        Ok(CiResult { statistic: g, p_value: p })
    }

    fn n_vars(&self) -> usize {
        self.columns.len()
    }
}

/// Perfect CI decisions read off d-separation in the true time series graph.
pub struct OracleCi<'a> {
    oracle: &'a Oracle,
}

impl<'a> OracleCi<'a> {
    pub fn new(oracle: &'a Oracle) -> Self {
        OracleCi { oracle }
    }
}

impl CiTest for OracleCi<'_> {
    fn test(&mut self, x: NodeRef, y: NodeRef, cond: &[NodeRef]) -> Result<CiResult, CiError> {
        check_query(x, y, cond, self.oracle.n_observed())?;
        let sep = self.oracle.d_separated(x, y, cond).map_err(|e| CiError::Oracle(e.to_string()))?;
        Ok(if sep {
            CiResult { statistic: 0.0, p_value: 1.0 }
        } else {
            CiResult { statistic: 1.0, p_value: 0.0 }
        })
    }

    fn n_vars(&self) -> usize {
        self.oracle.n_observed()
    }
}

/// Query in canonical form: `x <= y` and sorted conditions, shifted so the
/// latest node sits at lag 0.
pub fn canonical_query(x: NodeRef, y: NodeRef, cond: &[NodeRef]) -> (NodeRef, NodeRef, Vec<NodeRef>) {
    let shift = cond.iter().chain([&x, &y]).map(|v| v.lag).min().unwrap_or(0);
    let s = |v: NodeRef| NodeRef::new(v.var, v.lag - shift);
    let (a, b) = if x <= y { (s(x), s(y)) } else { (s(y), s(x)) };
    let mut c: Vec<NodeRef> = cond.iter().map(|&v| s(v)).collect();
    c.sort();
    c.dedup();
    (a, b, c)
}

/// Memoizing wrapper keyed on [`canonical_query`].
pub struct CachedCi<T> {
    inner: T,
    cache: HashMap<(NodeRef, NodeRef, Vec<NodeRef>), CiResult>,
    calls: usize,
}

impl<T: CiTest> CachedCi<T> {
    pub fn new(inner: T) -> Self {
        CachedCi { inner, cache: HashMap::new(), calls: 0 }
    }

    /// Queries answered so far, including cache hits.
    pub fn calls(&self) -> usize {
        self.calls
    }

    /// Distinct queries evaluated by the inner test.
    pub fn evaluated(&self) -> usize {
        self.cache.len()
    }

    pub fn into_inner(self) -> T {
        self.inner
    }
}

impl<T: CiTest> CiTest for CachedCi<T> {
    fn test(&mut self, x: NodeRef, y: NodeRef, cond: &[NodeRef]) -> Result<CiResult, CiError> {
        self.calls += 1;
        let key = canonical_query(x, y, cond);
        if let Some(r) = self.cache.get(&key) {
            return Ok(*r);
        }
        let r = self.inner.test(key.0, key.1, &key.2)?;
        self.cache.insert(key, r);
        Ok(r)
    }

    fn n_vars(&self) -> usize {
        self.inner.n_vars()
    }
}

/// Lagged covariances `gamma[k] = Cov(V_t, V_{t-k})` of a stable linear model,
/// over all model variables (`n_vars` of the model, not just the observed ones).
#[derive(Clone, Debug)]
pub struct StationaryCovariance {
    pub gamma: Vec<DMatrix<f64>>,
}

impl StationaryCovariance {
    pub fn max_lag(&self) -> usize {
        self.gamma.len() - 1
    }

    /// `Cov(V^a_{t-a.lag}, V^b_{t-b.lag})` for model variables.
    pub fn cov(&self, a: NodeRef, b: NodeRef) -> Result<f64, CiError> {
        let (k, first, second) = if b.lag >= a.lag { (b.lag - a.lag, a.var, b.var) } else { (a.lag - b.lag, b.var, a.var) };
        let g = self
            .gamma
            .get(k)
            .ok_or_else(|| CiError::Covariance(format!("lag difference {k} beyond computed range {}", self.max_lag())))?;
        Ok(g[(first, second)])
    }

    pub fn joint(&self, nodes: &[NodeRef]) -> Result<DMatrix<f64>, CiError> {
        let m = nodes.len();
        let mut out = DMatrix::zeros(m, m);
        for r in 0..m {
            for c in 0..m {
                out[(r, c)] = self.cov(nodes[r], nodes[c])?;
            }
        }
        Ok(out)
    }
}

fn noise_variance(model: &GroundTruthModel, j: usize) -> f64 {
    let n = &model.noise[j];
    match n.dist {
        NoiseDist::Gauss | NoiseDist::Weibull => n.scale * n.scale,
        NoiseDist::Binom => n.scale / 4.0,
    }
}

/// Companion matrix and innovation covariance of the reduced form
/// `V_t = sum_k B_k V_{t-k} + M eta_t` with `B_k = (I - A_0)^{-1} A_k`.
fn reduced_form(model: &GroundTruthModel) -> Result<(Vec<DMatrix<f64>>, DMatrix<f64>), CiError> {
    if !model.is_linear() {
        return Err(CiError::Covariance("model has nonlinear links".into()));
    }
    model.validate().map_err(|e| CiError::Covariance(e.to_string()))?;
    let n = model.n_vars;
    let p = model.max_lag();
    let mut a = vec![DMatrix::<f64>::zeros(n, n); p + 1];
    for l in &model.links {
        a[l.tau][(l.j, l.i)] += l.coeff;
    }
    let m = (DMatrix::<f64>::identity(n, n) - &a[0])
        .try_inverse()
        .ok_or_else(|| CiError::Covariance("contemporaneous system is singular".into()))?;
    let b: Vec<DMatrix<f64>> = (1..=p).map(|k| &m * &a[k]).collect();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, (0..n).map(|j| noise_variance(model, j))));
    let sigma = &m * d * m.transpose();
    Ok((b, sigma))
}

/// Companion matrix of the reduced form; empty when the model has no lagged links.
pub fn companion_matrix(model: &GroundTruthModel) -> Result<DMatrix<f64>, CiError> {
    let (b, _) = reduced_form(model)?;
    Ok(companion(&b, model.n_vars))
}

fn companion(b: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let p = b.len();
    let d = n * p;
    let mut f = DMatrix::zeros(d, d);
    for (k, bk) in b.iter().enumerate() {
        f.view_mut((0, k * n), (n, n)).copy_from(bk);
    }
    for k in 1..p {
        f.view_mut((k * n, (k - 1) * n), (n, n)).copy_from(&DMatrix::identity(n, n));
    }
    f
}

pub fn spectral_radius(f: &DMatrix<f64>) -> f64 {
    if f.nrows() == 0 {
        return 0.0;
    }
    // the uncapped Schur iteration behind `complex_eigenvalues` can fail to
    // terminate on defective matrices, so cap it and fall back to Gelfand's formula
    match nalgebra::linalg::Schur::try_new(f.clone(), f64::EPSILON, 10_000) {
        Some(s) => s.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max),
        None => gelfand_radius(f),
    }
}

/// `||F^(2^k)||^(1/2^k)` with rescaling, for `k` up to 40.
fn gelfand_radius(f: &DMatrix<f64>) -> f64 {
    let mut m = f.clone();
    let mut log_scale = 0.0;
    let mut est = f.norm();
    for k in 1..=40 {
        m = &m * &m;
        log_scale *= 2.0;
        let nrm = m.norm();
        if nrm == 0.0 {
            return 0.0;
        }
        m /= nrm;
        log_scale += nrm.ln();
        est = (log_scale / 2f64.powi(k)).exp();
    }
    est
}

/// Solve `X = F X F^T + Q` by doubling, falling back to the Kronecker system.
fn solve_lyapunov(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>, CiError> {
    let mut x = q.clone();
    let mut fk = f.clone();
    for _ in 0..200 {
        let inc = &fk * &x * fk.transpose();
        let scale = 1.0 + x.amax();
        x += &inc;
        fk = &fk * &fk;
        if inc.amax() < 1e-12 * scale {
            return Ok(x);
        }
    }
    let d = f.nrows();
    if d > 60 {
        return Err(CiError::Covariance("Lyapunov iteration did not converge".into()));
    }
    let kron = f.kronecker(f);
    let lhs = DMatrix::<f64>::identity(d * d, d * d) - kron;
    let rhs = nalgebra::DVector::from_iterator(d * d, q.iter().copied());
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| CiError::Covariance("Kronecker system is singular".into()))?;
    Ok(DMatrix::from_iterator(d, d, sol.iter().copied()))
}

/// Exact lagged covariances `Gamma(0..=max_lag)` of a stable linear model.
pub fn stationary_covariance(model: &GroundTruthModel, max_lag: usize) -> Result<StationaryCovariance, CiError> {
    let (b, sigma) = reduced_form(model)?;
    let n = model.n_vars;
    let p = b.len();
    let mut gamma = Vec::with_capacity(max_lag + 1);
    if p == 0 {
        gamma.push(sigma);
        gamma.extend((0..max_lag).map(|_| DMatrix::zeros(n, n)));
        return Ok(StationaryCovariance { gamma });
    }
    let f = companion(&b, n);
    let rho = spectral_radius(&f);
    if rho >= 1.0 {
        return Err(CiError::Covariance(format!("model is not stable (spectral radius {rho:.6})")));
    }
    let d = n * p;
    let mut q = DMatrix::zeros(d, d);
    q.view_mut((0, 0), (n, n)).copy_from(&sigma);
    let x = solve_lyapunov(&f, &q)?;
    // block (0, k) of the companion covariance is Cov(V_t, V_{t-k})
    for k in 0..p.min(max_lag + 1) {
        gamma.push(x.view((0, k * n), (n, n)).into_owned());
    }
    while gamma.len() <= max_lag {
        let k = gamma.len();
        let mut g = DMatrix::zeros(n, n);
        for (tau, bt) in b.iter().enumerate() {
            let lag = tau + 1;
            let prev = if k >= lag { gamma[k - lag].clone() } else { gamma[lag - k].transpose() };
            g += bt * prev;
        }
        gamma.push(g);
    }
    Ok(StationaryCovariance { gamma })
}

/// Population partial correlation of `x` and `y` given `cond` (model variable
/// indices), from the inverse of the joint covariance.
pub fn population_parcorr(cov: &StationaryCovariance, x: NodeRef, y: NodeRef, cond: &[NodeRef]) -> Result<f64, CiError> {
    let mut nodes = vec![x, y];
    nodes.extend_from_slice(cond);
    let joint = cov.joint(&nodes)?;
    let chol = joint
        .cholesky()
        .ok_or_else(|| CiError::Covariance(format!("joint covariance of {nodes:?} is not positive definite")))?;
    let prec = chol.inverse();
    Ok(-prec[(0, 1)] / (prec[(0, 0)] * prec[(1, 1)]).sqrt())
}
