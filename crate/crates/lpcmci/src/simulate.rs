//! Random structural VAR models and sampling from them.
//!
//! All randomness comes from `ChaCha8Rng`, whose output stream for a given
//! seed is specified by the algorithm and identical on every platform.

use crate::ci::{companion_matrix, spectral_radius};
use crate::data::DataFrame;
use crate::model::{GroundTruthModel, LinkFunc, ModelError, ModelLink, NoiseDist, NoiseSpec};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal, Weibull};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

const GAMMA_1_5: f64 = 0.886_226_925_452_758;
const MAX_ATTEMPTS: usize = 1000;
const PROBE_STEPS: usize = 500;
const EXPLOSION: f64 = 1e4;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("no stationary model after {attempts} draws (last: {last})")]
    NonStationary { attempts: usize, last: String },
    #[error("trajectory exploded at step {step}, variable {var}: {value}")]
    Explosion { step: usize, var: usize, value: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("sample: {0}")]
    Sample(String),
}

fn d_coeff_min() -> f64 {
    0.2
}
fn d_coeff_max() -> f64 {
    0.8
}
fn d_contemp() -> f64 {
    0.3
}
fn d_p_ts() -> usize {
    3
}
fn d_sigma_min() -> f64 {
    0.5
}
fn d_sigma_max() -> f64 {
    2.0
}
fn d_latent() -> f64 {
    0.3
}
fn d_funcs() -> Vec<LinkFunc> {
    vec![LinkFunc::Linear]
}

/// Parameters of the random model family. Missing JSON fields take the
/// defaults of the standard experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_total: usize,
    /// Number of cross links; defaults to `n_total`.
    #[serde(default)]
    pub n_links: Option<usize>,
    pub autocorr: f64,
    #[serde(default = "d_coeff_min")]
    pub coeff_min: f64,
    #[serde(default = "d_coeff_max")]
    pub coeff_max: f64,
    #[serde(default = "d_contemp")]
    pub contemp_frac: f64,
    #[serde(default = "d_p_ts")]
    pub p_ts: usize,
    #[serde(default = "d_sigma_min")]
    pub sigma_min: f64,
    #[serde(default = "d_sigma_max")]
    pub sigma_max: f64,
    /// Fraction of variables with Weibull (shape 2) instead of Gaussian noise.
    #[serde(default)]
    pub weibull_frac: f64,
    /// Link functions, drawn uniformly per cross link.
    #[serde(default = "d_funcs")]
    pub funcs: Vec<LinkFunc>,
    #[serde(default = "d_latent")]
    pub latent_frac: f64,
    /// Discrete variant with binomial noise of `n_bin` trials.
    #[serde(default)]
    pub n_bin: Option<usize>,
}

impl ModelConfig {
    pub fn new(n_total: usize, autocorr: f64) -> Self {
        ModelConfig {
            n_total,
            n_links: None,
            autocorr,
            coeff_min: d_coeff_min(),
            coeff_max: d_coeff_max(),
            contemp_frac: d_contemp(),
            p_ts: d_p_ts(),
            sigma_min: d_sigma_min(),
            sigma_max: d_sigma_max(),
            weibull_frac: 0.0,
            funcs: d_funcs(),
            latent_frac: d_latent(),
            n_bin: None,
        }
    }

    pub fn n_links(&self) -> usize {
        self.n_links.unwrap_or(self.n_total)
    }

    /// `ceil((1 - latent_frac) * n_total)`, guarded against rounding noise.
    pub fn n_observed(&self) -> usize {
        ((1.0 - self.latent_frac) * self.n_total as f64 - 1e-9).ceil().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if self.n_total == 0 {
            return bad("n_total must be positive");
        }
        if !(0.0..1.0).contains(&self.autocorr) {
            return bad("autocorr must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.latent_frac) {
            return bad("latent_frac must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.contemp_frac) || !(0.0..=1.0).contains(&self.weibull_frac) {
            return bad("fractions must lie in [0, 1]");
        }
        if !(0.0 <= self.coeff_min && self.coeff_min <= self.coeff_max) || !(0.0 <= self.sigma_min && self.sigma_min <= self.sigma_max) {
            return bad("ranges must satisfy 0 <= min <= max");
        }
        if self.funcs.is_empty() {
            return bad("funcs must not be empty");
        }
        if self.n_links() > 0 && self.n_total < 2 {
            return bad("cross links need at least two variables");
        }
        if self.p_ts == 0 && self.contemp_frac < 1.0 && self.n_links() > 0 {
            return bad("p_ts = 0 allows only contemporaneous links (set contemp_frac = 1)");
        }
        if let Some(nb) = self.n_bin {
            if nb == 0 || nb % 2 != 0 {
                return bad("n_bin must be a positive even number");
            }
        }
        let capacity = self.n_total * (self.n_total - 1) * self.p_ts + self.n_total * (self.n_total - 1) / 2;
        if self.n_links() > capacity {
            return bad("more links requested than distinct links exist");
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn draw_model(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<GroundTruthModel, SimError> {
    let n = cfg.n_total;
    let mut links = Vec::new();
    for j in 0..n {
        let a = uniform(rng, (cfg.autocorr - 0.3).max(0.0), cfg.autocorr);
        if a > 0.0 {
            links.push(ModelLink { i: j, tau: 1, j, coeff: a, func: LinkFunc::Linear });
        }
    }
    // contemporaneous links run from lower to higher rank in a hidden order
    let mut rank: Vec<usize> = (0..n).collect();
    for k in (1..n).rev() {
        rank.swap(k, rng.random_range(0..=k));
    }
    let mut used: BTreeSet<(usize, usize, usize)> = BTreeSet::new();
    for _ in 0..cfg.n_links() {
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i == j {
                continue;
            }
            let contemp = cfg.p_ts == 0 || rng.random::<f64>() < cfg.contemp_frac;
            let (i, j, tau) = if contemp {
                if rank[i] < rank[j] {
                    (i, j, 0)
                } else {
                    (j, i, 0)
                }
            } else {
                (i, j, rng.random_range(1..=cfg.p_ts))
            };
            if !used.insert((i, tau, j)) {
                continue;
            }
            let mag = uniform(rng, cfg.coeff_min, cfg.coeff_max);
            let coeff = if rng.random::<bool>() { mag } else { -mag };
            let func = cfg.funcs[rng.random_range(0..cfg.funcs.len())];
            links.push(ModelLink { i, tau, j, coeff, func });
            placed = true;
            break;
        }
        if !placed {
            return Err(SimError::Config("could not place distinct links".into()));
        }
    }
    let noise = (0..n)
        .map(|_| match cfg.n_bin {
            Some(nb) => NoiseSpec { dist: NoiseDist::Binom, scale: nb as f64 },
            None => {
                let dist = if rng.random::<f64>() < cfg.weibull_frac { NoiseDist::Weibull } else { NoiseDist::Gauss };
                NoiseSpec { dist, scale: uniform(rng, cfg.sigma_min, cfg.sigma_max) }
            }
        })
        .collect();
    let mut observed: Vec<usize> = sample_indices(rng, n, cfg.n_observed()).into_vec();
    observed.sort_unstable();
    let m = GroundTruthModel { n_vars: n, links, observed, noise };
    m.validate()?;
    Ok(m)
}

/// Why a drawn model was rejected, or `None` when it is stationary.
fn screen(m: &GroundTruthModel, probe_seed: u64) -> Option<String> {
    if m.is_linear() {
        let rho = match companion_matrix(m) {
            Ok(f) => spectral_radius(&f),
            Err(e) => return Some(e.to_string()),
        };
        return (rho >= 1.0).then(|| format!("spectral radius {rho:.4}"));
    }
    match simulate(m, PROBE_STEPS, 0, probe_seed) {
        Ok(_) => None,
        Err(e) => Some(e.to_string()),
    }
}

/// Draw a stationary model; non-stationary draws are discarded and redrawn.
pub fn random_model(cfg: &ModelConfig, seed: u64) -> Result<GroundTruthModel, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = String::new();
    for _ in 0..MAX_ATTEMPTS {
        let m = draw_model(cfg, &mut rng)?;
        let probe_seed = rng.random();
        match screen(&m, probe_seed) {
            None => return Ok(m),
            Some(why) => last = why,
        }
    }
    Err(SimError::NonStationary { attempts: MAX_ATTEMPTS, last })
}

/// Burn-in used by [`sample`]: `max(200, 20 p_ts)` steps.
pub fn default_burn_in(model: &GroundTruthModel) -> usize {
    200.max(20 * model.max_lag())
}

/// `T` steps of the observed columns after the default burn-in, from a zero initial state.
pub fn sample(model: &GroundTruthModel, t: usize, seed: u64) -> Result<DataFrame, SimError> {
    sample_with_burn_in(model, t, default_burn_in(model), seed)
}

pub fn sample_with_burn_in(model: &GroundTruthModel, t: usize, burn_in: usize, seed: u64) -> Result<DataFrame, SimError> {
    model.validate()?;
    let full = simulate(model, t, burn_in, seed)?;
    let shift = if model.is_discrete() { model.noise.iter().map(|n| n.scale).fold(0.0, f64::max) / 2.0 } else { 0.0 };
    let rows: Vec<Vec<f64>> = full.iter().map(|row| model.observed.iter().map(|&v| row[v] + shift).collect()).collect();
    let mut df = DataFrame::from_rows(&rows).map_err(|e| SimError::Sample(e.to_string()))?;
    if rows.is_empty() {
        df = DataFrame::from_columns(&vec![Vec::new(); model.observed.len()]).map_err(|e| SimError::Sample(e.to_string()))?;
    }
    Ok(df)
}

struct NoiseDraw {
    weibull: Weibull<f64>,
    binom: Vec<Option<Binomial>>,
}

impl NoiseDraw {
    fn new(model: &GroundTruthModel) -> Result<Self, SimError> {
        let weibull = Weibull::new(1.0, 2.0).map_err(|e| SimError::Sample(e.to_string()))?;
        let binom = model
            .noise
            .iter()
            .map(|n| match n.dist {
                NoiseDist::Binom => Binomial::new(n.scale as u64, 0.5).map(Some).map_err(|e| SimError::Sample(e.to_string())),
                _ => Ok(None),
            })
            .collect::<Result<_, _>>()?;
        Ok(NoiseDraw { weibull, binom })
    }

    /// Zero-mean noise with standard deviation `scale` (continuous), or
    /// `b - n_bin / 2` with `b ~ Bin(n_bin, 0.5)`.
    fn draw(&self, spec: &NoiseSpec, j: usize, rng: &mut ChaCha8Rng) -> f64 {
        match spec.dist {
            NoiseDist::Gauss => spec.scale * rng.sample::<f64, _>(StandardNormal),
            NoiseDist::Weibull => {
                let sd = (1.0 - GAMMA_1_5 * GAMMA_1_5).sqrt();
                spec.scale * (self.weibull.sample(rng) - GAMMA_1_5) / sd
            }
            NoiseDist::Binom => self.binom[j].as_ref().expect("binomial noise").sample(rng) as f64 - spec.scale / 2.0,
        }
    }
}

/// Round to the nearest integer and clip to `[-n_bin/2, n_bin/2]`.
fn discretize(x: f64, n_bin: f64) -> f64 {
    let h = n_bin / 2.0;
    x.round().clamp(-h, h)
}

/// All variables for `t` steps after `burn_in` discarded steps.
fn simulate(model: &GroundTruthModel, t: usize, burn_in: usize, seed: u64) -> Result<Vec<Vec<f64>>, SimError> {
    let n = model.n_vars;
    let order = model.graph().contemporaneous_order().ok_or(ModelError::ContemporaneousCycle)?;
    let mut incoming: Vec<Vec<&ModelLink>> = vec![Vec::new(); n];
    for l in &model.links {
        incoming[l.j].push(l);
    }
    let noise = NoiseDraw::new(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = burn_in + t;
    let mut hist: Vec<Vec<f64>> = Vec::with_capacity(total);
    let mut eta = vec![0.0; n];
    for step in 0..total {
        for (j, e) in eta.iter_mut().enumerate() {
            *e = noise.draw(&model.noise[j], j, &mut rng);
        }
        let mut row = vec![0.0; n];
        for &j in &order {
            let mut v = eta[j];
            for l in &incoming[j] {
                let x = if l.tau == 0 {
                    row[l.i]
                } else if step >= l.tau {
                    hist[step - l.tau][l.i]
                } else {
                    0.0
                };
                v += l.coeff * l.func.apply(x);
            }
            if model.noise[j].dist == NoiseDist::Binom {
                v = discretize(v, model.noise[j].scale);
            }
            if !v.is_finite() || v.abs() > EXPLOSION {
                return Err(SimError::Explosion { step, var: j, value: v });
            }
            row[j] = v;
        }
        hist.push(row);
    }
    Ok(hist.split_off(burn_in))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ar1(a: f64, sigma: f64) -> GroundTruthModel {
        GroundTruthModel {
            n_vars: 1,
            links: vec![ModelLink { i: 0, tau: 1, j: 0, coeff: a, func: LinkFunc::Linear }],
            observed: vec![0],
            noise: vec![NoiseSpec { dist: NoiseDist::Gauss, scale: sigma }],
        }
    }

    #[test]
    fn no_links_gives_independent_noise() {
        let mut cfg = ModelConfig::new(4, 0.0);
        cfg.n_links = Some(0);
        cfg.latent_frac = 0.0;
        let m = random_model(&cfg, 3).unwrap();
        assert!(m.links.is_empty());
        assert_eq!(m.observed, vec![0, 1, 2, 3]);
    }

    #[test]
    fn same_seed_same_model() {
        let cfg = ModelConfig::new(6, 0.9);
        assert_eq!(random_model(&cfg, 11).unwrap(), random_model(&cfg, 11).unwrap());
        assert_ne!(random_model(&cfg, 11).unwrap(), random_model(&cfg, 12).unwrap());
    }

    #[test]
    fn random_models_respect_config() {
        let cfg = ModelConfig::new(7, 0.95);
        for seed in 0..30 {
            let m = random_model(&cfg, seed).unwrap();
            assert_eq!(m.observed.len(), 5);
            let cross: Vec<_> = m.links.iter().filter(|l| l.i != l.j).collect();
            assert_eq!(cross.len(), 7);
            for l in &m.links {
                if l.i == l.j {
                    assert!(l.coeff >= 0.65 && l.coeff < 0.95);
                } else {
                    assert!(l.coeff.abs() >= 0.2 && l.coeff.abs() <= 0.8);
                    assert!(l.tau <= 3);
                }
            }
            assert!(spectral_radius(&companion_matrix(&m).unwrap()) < 1.0);
        }
    }

    #[test]
    fn rounding_of_observed_count() {
        let cfg = ModelConfig::new(10, 0.5);
        assert_eq!(cfg.n_observed(), 7);
        assert_eq!(ModelConfig::new(3, 0.5).n_observed(), 3);
    }

    #[test]
    fn ar1_variance_matches_closed_form() {
        let df = sample(&ar1(0.9, 1.0), 100_000, 5).unwrap();
        let x = df.column(0);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
        let expected = 1.0 / (1.0 - 0.81);
        assert!((var - expected).abs() / expected < 0.1, "{var}");
    }

    #[test]
    fn zero_noise_stays_at_zero() {
        let df = sample(&ar1(0.5, 0.0), 50, 1).unwrap();
        assert!(df.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn discrete_values_in_range() {
        let mut cfg = ModelConfig::new(4, 0.8);
        cfg.n_bin = Some(4);
        cfg.latent_frac = 0.0;
        let m = random_model(&cfg, 2).unwrap();
        let df = sample(&m, 500, 9).unwrap();
        for c in 0..df.n_cols() {
            assert!(df.column(c).iter().all(|&v| v.fract() == 0.0 && (0.0..=4.0).contains(&v)));
        }
    }

    #[test]
    fn explosive_model_is_rejected() {
        let err = sample(&ar1(1.5, 1.0), 100, 0).unwrap_err();
        assert!(matches!(err, SimError::Explosion { .. }));
    }

    #[test]
    fn nonlinear_models_are_screened() {
        let mut cfg = ModelConfig::new(5, 0.6);
        cfg.funcs = vec![LinkFunc::Linear, LinkFunc::NonlinF1];
        cfg.weibull_frac = 0.33;
        let m = random_model(&cfg, 4).unwrap();
        sample(&m, 300, 1).unwrap();
    }

    #[test]
    fn weibull_noise_is_standardized() {
        let mut m = ar1(0.0, 2.0);
        m.links.clear();
        m.noise[0].dist = NoiseDist::Weibull;
        let x = sample(&m, 50_000, 3).unwrap().column(0);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
        assert!(mean.abs() < 0.05 && (var - 4.0).abs() < 0.2, "{mean} {var}");
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = ModelConfig::new(3, 1.0);
        assert!(random_model(&cfg, 0).is_err());
        cfg.autocorr = 0.5;
        cfg.latent_frac = 1.0;
        assert!(random_model(&cfg, 0).is_err());
        cfg.latent_frac = 0.0;
        cfg.n_bin = Some(3);
        assert!(random_model(&cfg, 0).is_err());
    }
}
