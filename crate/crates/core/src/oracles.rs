//! Closed-form reference values and a brute-force fine-step simulator.
//!
//! The brute-force simulator shares nothing with [`crate::engine`]: it uses a
//! fixed tiny step, Bernoulli branching per step and endpoint-only boundary
//! checks, so it can be used to cross-check the bridge-corrected engine.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::engine::ProcessParams;
use crate::replicas::{run_replicas, Execution};
use crate::rng::{tags, RngStream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("outside the domain: {0}")]
    Domain(String),
    #[error("brute-force budget exceeded: {0}")]
    Budget(String),
}

/// Width, shift and band parameters of the strip comparisons.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoryParams {
    pub k: f64,
    pub a: f64,
    pub l: f64,
}

impl TheoryParams {
    /// `K_A = K - A / sqrt(2)`.
    pub fn k_a(&self) -> Result<f64, OracleError> {
        let ka = self.k - self.a / SQRT_2;
        if ka > 0.0 {
            Ok(ka)
        } else {
            Err(OracleError::Domain(format!("K_A = {ka} is not positive")))
        }
    }
}

/// Critical drift `sqrt(2 - pi^2 / K^2)` of the strip `(0, K)`.
pub fn mu_for_width(k: f64) -> Result<f64, OracleError> {
    if !(k > 0.0) {
        return Err(OracleError::Domain(format!("width must be positive, got {k}")));
    }
    let radicand = 2.0 - PI * PI / (k * k);
    if radicand < -1e-12 {
        return Err(OracleError::Domain(format!(
            "width {k} is below pi/sqrt(2); critical drift would be imaginary"
        )));
    }
    Ok(radicand.max(0.0).sqrt())
}

/// Leading-order velocity `sqrt(2) - pi^2 / (2 sqrt(2) L^2)` of the L-BBM.
pub fn theoretical_velocity(l: f64) -> Result<f64, OracleError> {
    if !(l > 0.0) {
        return Err(OracleError::Domain(format!("L must be positive, got {l}")));
    }
    Ok(SQRT_2 - gap_constant() / (l * l))
}

/// `pi^2 / (2 sqrt(2))`, the coefficient of `1/L^2` in the velocity gap.
pub fn gap_constant() -> f64 {
    PI * PI / (2.0 * SQRT_2)
}

/// Strip comparison bracket for `v_L`:
/// `(mu(L(1-eps)) - eps/L^2, mu(L(1+eps)) + eps/L^2)`.
pub fn velocity_bracket(l: f64, eps: f64) -> Result<(f64, f64), OracleError> {
    if !(l > 0.0) || !(eps >= 0.0) {
        return Err(OracleError::Domain(format!("need L > 0 and eps >= 0, got ({l}, {eps})")));
    }
    let slack = eps / (l * l);
    Ok((
        mu_for_width(l * (1.0 - eps))? - slack,
        mu_for_width(l * (1.0 + eps))? + slack,
    ))
}

/// Population size matched to band width `L` by `L = log N / sqrt(2)`.
pub fn equivalent_n(l: f64) -> f64 {
    (SQRT_2 * l).exp()
}

/// Inverse of [`equivalent_n`].
pub fn equivalent_l(n: f64) -> f64 {
    n.ln() / SQRT_2
}

/// `2 sqrt(2) / (3 pi^2)`: extinction time over `x^3` for drift `-sqrt(2)`
/// absorbed at 0, started at large `x`.
pub fn extinction_constant() -> f64 {
    2.0 * SQRT_2 / (3.0 * PI * PI)
}

/// `P(M(t) = k)` for a unit-rate Yule process started from one particle.
pub fn yule_pmf(t: f64, k: u64) -> Result<f64, OracleError> {
    if k < 1 {
        return Err(OracleError::Domain("population size starts at 1".into()));
    }
    if !(t > 0.0) {
        return Err(OracleError::Domain(format!("t must be positive, got {t}")));
    }
    let p = (-t).exp();
    Ok((1.0 - p).powf((k - 1) as f64) * p)
}

/// Upper tail of the standard normal distribution.
pub fn normal_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z / SQRT_2)
}

/// Longest horizon the brute-force simulator accepts.
pub const BRUTE_FORCE_MAX_HORIZON: f64 = 2.0;
/// Largest expected population the brute-force simulator accepts.
pub const BRUTE_FORCE_MAX_EXPECTED: f64 = 32.0;
/// Per-replica particle count at which a brute-force run is abandoned.
pub const BRUTE_FORCE_HARD_LIMIT: usize = 4096;

#[derive(Clone, Debug)]
pub struct BruteForceConfig {
    pub start: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub params: ProcessParams,
    /// Open interval particles must stay in, checked at step endpoints only.
    pub strip: Option<(f64, f64)>,
    pub replicas: u64,
    pub seed: u64,
    pub exec: Execution,
}

/// Final configurations of every brute-force replica.
#[derive(Clone, Debug, PartialEq)]
pub struct BruteForceDistribution {
    pub finals: Vec<Vec<f64>>,
}

impl BruteForceDistribution {
    pub fn replicas(&self) -> usize {
        self.finals.len()
    }

    /// Frequency of a nonempty final population, with its binomial SE.
    pub fn survival(&self) -> (f64, f64) {
        self.frequency(|c| !c.is_empty())
    }

    /// Frequency of final population size `k`, with its binomial SE.
    pub fn size_frequency(&self, k: usize) -> (f64, f64) {
        self.frequency(|c| c.len() == k)
    }

    fn frequency(&self, pred: impl Fn(&Vec<f64>) -> bool) -> (f64, f64) {
        let n = self.finals.len() as f64;
        let p = self.finals.iter().filter(|c| pred(c)).count() as f64 / n;
        (p, (p * (1.0 - p) / n).sqrt())
    }
}

/// Simulates tiny instances with a plain fixed-step scheme.
pub fn brute_force_small_instance(cfg: &BruteForceConfig) -> Result<BruteForceDistribution, OracleError> {
    if cfg.start.is_empty() {
        return Err(OracleError::Domain("empty initial configuration".into()));
    }
    if !(cfg.horizon >= 0.0) || cfg.horizon > BRUTE_FORCE_MAX_HORIZON {
        return Err(OracleError::Budget(format!(
            "horizon {} outside [0, {BRUTE_FORCE_MAX_HORIZON}]",
            cfg.horizon
        )));
    }
    let expected = cfg.start.len() as f64 * (cfg.params.branch_rate() * cfg.horizon).exp();
    if expected > BRUTE_FORCE_MAX_EXPECTED {
        return Err(OracleError::Budget(format!(
            "expected population {expected:.1} above {BRUTE_FORCE_MAX_EXPECTED}"
        )));
    }
    if cfg.horizon > 0.0 && !(cfg.dt > 0.0) {
        return Err(OracleError::Domain(format!("step must be positive, got {}", cfg.dt)));
    }
    let steps = if cfg.horizon == 0.0 {
        0
    } else {
        (cfg.horizon / cfg.dt).round() as u64
    };
    let h = if steps == 0 { 0.0 } else { cfg.horizon / steps as f64 };
    let split = 1.0 - (-cfg.params.branch_rate() * h).exp();
    let shift = cfg.params.drift() * h;
    let scale = (cfg.params.diffusion() * h).sqrt();

    let finals = run_replicas(cfg.replicas, cfg.exec, |r| {
        let mut rng = RngStream::new(cfg.seed, r, tags::ORACLE);
        let mut xs = cfg.start.clone();
        let mut born = Vec::new();
        for _ in 0..steps {
            xs.retain_mut(|x| {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x += shift + scale * z;
                if let Some((lo, hi)) = cfg.strip {
                    if *x <= lo || *x >= hi {
                        return false;
                    }
                }
                if rng.random::<f64>() < split {
                    born.push(*x);
                }
                true
            });
            xs.append(&mut born);
            if xs.is_empty() || xs.len() > BRUTE_FORCE_HARD_LIMIT {
                break;
            }
        }
        xs
    });
    if finals.iter().any(|c| c.len() > BRUTE_FORCE_HARD_LIMIT) {
        return Err(OracleError::Budget(format!(
            "a replica exceeded {BRUTE_FORCE_HARD_LIMIT} particles"
        )));
    }
    Ok(BruteForceDistribution { finals })
}
