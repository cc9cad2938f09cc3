//! Ground-truth structural models and their time series graphs.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkFunc {
    #[serde(rename = "linear")]
    Linear,
    #[serde(rename = "nonlin_f1")]
    NonlinF1,
}

impl LinkFunc {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            LinkFunc::Linear => x,
            LinkFunc::NonlinF1 => (1.0 + 5.0 * x * (-x * x / 20.0).exp()) * x,
        }
    }
}

/// Link `V^i_{t-tau} -> V^j_t` with weight `coeff` applied to `func(V^i_{t-tau})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelLink {
    pub i: usize,
    pub tau: usize,
    pub j: usize,
    pub coeff: f64,
    pub func: LinkFunc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseDist {
    #[serde(rename = "gauss")]
    Gauss,
    #[serde(rename = "weibull")]
    Weibull,
    #[serde(rename = "binom")]
    Binom,
}

/// Noise of one variable. For `gauss` and `weibull` the scale is the standard
/// deviation; for `binom` it is the number of trials `n_bin`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub dist: NoiseDist,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthModel {
    pub n_vars: usize,
    pub links: Vec<ModelLink>,
    /// Observed variables; position in this list is the column index of the data.
    pub observed: Vec<usize>,
    pub noise: Vec<NoiseSpec>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("link {0:?} references a variable outside 0..{1}")]
    VarOutOfRange((usize, usize, usize), usize),
    #[error("contemporaneous self link at variable {0}")]
    ContemporaneousSelfLink(usize),
    #[error("contemporaneous links contain a cycle")]
    ContemporaneousCycle,
    #[error("observed list is invalid: {0}")]
    Observed(String),
    #[error("expected {expected} noise specs, found {found}")]
    NoiseCount { expected: usize, found: usize },
    #[error("invalid model json: {0}")]
    Json(String),
}

impl GroundTruthModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.graph().validate()?;
        if self.noise.len() != self.n_vars {
            return Err(ModelError::NoiseCount { expected: self.n_vars, found: self.noise.len() });
        }
        Ok(())
    }

    pub fn graph(&self) -> GroundTruthGraph {
        let links: BTreeSet<(usize, usize, usize)> = self.links.iter().map(|l| (l.i, l.tau, l.j)).collect();
        GroundTruthGraph { n_vars_total: self.n_vars, links: links.into_iter().collect(), observed: self.observed.clone() }
    }

    pub fn is_linear(&self) -> bool {
        self.links.iter().all(|l| l.func == LinkFunc::Linear)
    }

    pub fn is_discrete(&self) -> bool {
        self.noise.iter().any(|n| n.dist == NoiseDist::Binom)
    }

    pub fn max_lag(&self) -> usize {
        self.links.iter().map(|l| l.tau).max().unwrap_or(0)
    }

    pub fn from_json_str(s: &str) -> Result<Self, ModelError> {
        let m: GroundTruthModel = serde_json::from_str(s).map_err(|e| ModelError::Json(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("model json serializes")
    }

    /// The model with observed columns reordered so that column `k` becomes `perm[k]`.
    pub fn with_permuted_observed(&self, perm: &[usize]) -> GroundTruthModel {
        let mut observed = vec![0; self.observed.len()];
        for (k, &v) in self.observed.iter().enumerate() {
            observed[perm[k]] = v;
        }
        GroundTruthModel { observed, ..self.clone() }
    }

    /// The three-variable latent confounder example: auto-coefficients 0.9,
    /// cross-coefficients 0.6, a hidden white-noise `U_t` driving `X_t` and
    /// `Y_t`, and `Y_{t-1} -> Z_t`. Observed columns are `X, Y, Z`; `U` is variable 3.
    pub fn latent_confounder_example() -> GroundTruthModel {
        let lin = |i, tau, j, coeff| ModelLink { i, tau, j, coeff, func: LinkFunc::Linear };
        GroundTruthModel {
            n_vars: 4,
            links: vec![
                lin(0, 1, 0, 0.9),
                lin(1, 1, 1, 0.9),
                lin(2, 1, 2, 0.9),
                lin(3, 0, 0, 0.6),
                lin(3, 0, 1, 0.6),
                lin(1, 1, 2, 0.6),
            ],
            observed: vec![0, 1, 2],
            noise: vec![NoiseSpec { dist: NoiseDist::Gauss, scale: 1.0 }; 4],
        }
    }
}

/// Structure of a ground-truth model: links `(i, tau, j)` meaning `V^i_{t-tau} -> V^j_t`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthGraph {
    pub n_vars_total: usize,
    pub links: Vec<(usize, usize, usize)>,
    pub observed: Vec<usize>,
}

impl GroundTruthGraph {
    pub fn new(n_vars_total: usize, links: Vec<(usize, usize, usize)>, observed: Vec<usize>) -> Self {
        let set: BTreeSet<_> = links.into_iter().collect();
        GroundTruthGraph { n_vars_total, links: set.into_iter().collect(), observed }
    }

    /// Largest lag among the links (`p_ts`).
    pub fn p_ts(&self) -> usize {
        self.links.iter().map(|l| l.1).max().unwrap_or(0)
    }

    pub fn n_observed(&self) -> usize {
        self.observed.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.n_vars_total;
        for &(i, tau, j) in &self.links {
            if i >= n || j >= n {
                return Err(ModelError::VarOutOfRange((i, tau, j), n));
            }
            if tau == 0 && i == j {
                return Err(ModelError::ContemporaneousSelfLink(i));
            }
        }
        if self.contemporaneous_order().is_none() {
            return Err(ModelError::ContemporaneousCycle);
        }
        let mut seen = BTreeSet::new();
        for &v in &self.observed {
            if v >= n {
                return Err(ModelError::Observed(format!("variable {v} out of range")));
            }
            if !seen.insert(v) {
                return Err(ModelError::Observed(format!("variable {v} listed twice")));
            }
        }
        Ok(())
    }

    /// Topological order of the contemporaneous subgraph, `None` if cyclic.
    pub fn contemporaneous_order(&self) -> Option<Vec<usize>> {
        let n = self.n_vars_total;
        let mut indeg = vec![0usize; n];
        let mut children = vec![Vec::new(); n];
        for &(i, tau, j) in &self.links {
            if tau == 0 && i < n && j < n {
                indeg[j] += 1;
                children[i].push(j);
            }
        }
        let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        ready.reverse();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop() {
            order.push(v);
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.push(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }
}
