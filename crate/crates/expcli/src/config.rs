//! Experiment configuration.
//!
//! Config files are flat TOML (`key = value`). Every key is optional; missing
//! keys take scenario-specific defaults, several of which depend on other keys
//! (the default horizon of a velocity run scales with `l`, the default drift
//! of a strip run is the critical drift of `k`, and so on). Unknown keys are
//! rejected.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use branchsel::engine::{Grid, ProcessParams, DEFAULT_POPULATION_CAP};
use branchsel::oracles::{equivalent_l, mu_for_width, theoretical_velocity};
use branchsel::replicas::Execution;
use serde::{Deserialize, Serialize};

use crate::error::ExpError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    YuleCheck,
    ManyToOne,
    ZMartingale,
    StripHits,
    ExtinctionTime,
    CoupledInclusion,
    Envelope,
    VelocitySweep,
    NbbmVelocitySweep,
}

impl Scenario {
    pub const ALL: [Scenario; 9] = [
        Scenario::YuleCheck,
        Scenario::ManyToOne,
        Scenario::ZMartingale,
        Scenario::StripHits,
        Scenario::ExtinctionTime,
        Scenario::CoupledInclusion,
        Scenario::Envelope,
        Scenario::VelocitySweep,
        Scenario::NbbmVelocitySweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::YuleCheck => "yule-check",
            Scenario::ManyToOne => "many-to-one",
            Scenario::ZMartingale => "z-martingale",
            Scenario::StripHits => "strip-hits",
            Scenario::ExtinctionTime => "extinction-time",
            Scenario::CoupledInclusion => "coupled-inclusion",
            Scenario::Envelope => "envelope",
            Scenario::VelocitySweep => "velocity-sweep",
            Scenario::NbbmVelocitySweep => "nbbm-velocity-sweep",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = ExpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL.into_iter().find(|sc| sc.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Scenario::ALL.iter().map(|s| s.name()).collect();
            ExpError::config("scenario", format!("unknown scenario `{s}`, expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Regression,
    Renewal,
    Both,
}

/// Raw contents of a config file.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: Option<Scenario>,
    pub replicas: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub record_every: Option<usize>,
    pub branch_rate: Option<f64>,
    pub drift: Option<f64>,
    pub diffusion: Option<f64>,
    pub cap: Option<usize>,
    pub kill_record_cap: Option<usize>,
    pub start: Option<Vec<f64>>,
    pub l: Option<f64>,
    pub n: Option<usize>,
    pub k: Option<f64>,
    pub a: Option<f64>,
    pub theta: Option<f64>,
    pub level: Option<f64>,
    pub times: Option<Vec<f64>>,
    pub starts: Option<Vec<f64>>,
    pub burn_in: Option<f64>,
    pub eps: Option<f64>,
    pub estimator: Option<Estimator>,
    pub gamma: Option<f64>,
    pub d: Option<Vec<f64>>,
    pub r: Option<Vec<f64>>,
    pub kmax: Option<u64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ExpError> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .and_then(|span| key_at(text, span.start))
                .unwrap_or_else(|| "<file>".to_owned());
            ExpError::config(field, e.message().to_owned())
        })
    }

    pub fn load(path: &Path) -> Result<Self, ExpError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExpError::io(path, e))?;
        Self::parse(&text)
    }
}

/// Key of the `key = value` line containing byte offset `at`.
fn key_at(text: &str, at: usize) -> Option<String> {
    let start = text[..at.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
    let line = text[start..].lines().next()?;
    let key = line.split('=').next()?.trim();
    (!key.is_empty()).then(|| key.to_owned())
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub scenario: Option<Scenario>,
    pub seed: Option<u64>,
    pub replicas: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// Fully resolved configuration of one scenario run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub replicas: u64,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub horizon: f64,
    pub dt: f64,
    pub record_every: usize,
    pub branch_rate: f64,
    pub drift: f64,
    pub diffusion: f64,
    pub cap: usize,
    pub kill_record_cap: usize,
    pub start: Vec<f64>,
    pub l: f64,
    pub n: usize,
    pub k: f64,
    pub a: f64,
    pub theta: f64,
    pub level: f64,
    pub times: Vec<f64>,
    pub starts: Vec<f64>,
    pub burn_in: f64,
    pub eps: f64,
    pub estimator: Estimator,
    pub gamma: f64,
    pub d: Vec<f64>,
    pub r: Vec<f64>,
    pub kmax: u64,
}

fn positive(field: &str, x: f64) -> Result<f64, ExpError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(ExpError::config(field, format!("must be positive and finite, got {x}")))
    }
}

fn finite_list(field: &str, xs: &[f64]) -> Result<(), ExpError> {
    if xs.is_empty() {
        return Err(ExpError::config(field, "must not be empty"));
    }
    if let Some(x) = xs.iter().find(|x| !x.is_finite()) {
        return Err(ExpError::config(field, format!("entries must be finite, got {x}")));
    }
    Ok(())
}

/// Rounds `horizon` up to a whole number of steps.
fn on_grid(horizon: f64, dt: f64) -> f64 {
    (horizon / dt - 1e-9).ceil() * dt
}

impl ExperimentConfig {
    /// Resolves `file` and `over` into a complete configuration.
    pub fn resolve(file: &ConfigFile, over: &Overrides) -> Result<Self, ExpError> {
        use Scenario::*;
        let scenario = over
            .scenario
            .or(file.scenario)
            .ok_or_else(|| ExpError::config("scenario", "no scenario given"))?;

        let l = positive("l", file.l.unwrap_or(if scenario == VelocitySweep { 4.0 } else { 3.0 }))?;
        let n = file.n.unwrap_or(100);
        if n == 0 {
            return Err(ExpError::config("n", "must be at least 1"));
        }
        let k = positive("k", file.k.unwrap_or(if scenario == StripHits { 8.0 } else { 5.0 }))?;
        let a = file.a.unwrap_or(0.0);
        let theta = positive("theta", file.theta.unwrap_or(1.0))?;
        let width = k - a / SQRT_2;
        let strip_mu = match scenario {
            ZMartingale | StripHits => {
                if !(width > 0.0) {
                    return Err(ExpError::config("a", format!("shifted width k - a/sqrt(2) = {width} is not positive")));
                }
                Some(mu_for_width(k).map_err(|e| ExpError::config("k", e.to_string()))?)
            }
            _ => None,
        };
        let l_eff = match scenario {
            NbbmVelocitySweep => equivalent_l(n as f64),
            _ => l,
        };
        let times = file.times.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
        let starts = file.starts.clone().unwrap_or_else(|| vec![5.0, 7.0, 9.0]);

        let dt = positive(
            "dt",
            file.dt.unwrap_or(match scenario {
                YuleCheck | ManyToOne => file.horizon.unwrap_or(if scenario == YuleCheck { 1.0 } else { 2.0 }),
                StripHits | ExtinctionTime => 0.05,
                _ => 0.01,
            }),
        )?;
        let horizon = positive(
            "horizon",
            file.horizon.unwrap_or(match scenario {
                YuleCheck => 1.0,
                ManyToOne => 2.0,
                ZMartingale => times.iter().cloned().fold(0.0, f64::max),
                StripHits => on_grid(theta * k.powi(3), dt),
                ExtinctionTime => 1000.0,
                CoupledInclusion => 7.0,
                Envelope => 10.0,
                VelocitySweep | NbbmVelocitySweep => on_grid(50.0 * l_eff * l_eff, 1.0),
            }),
        )?;
        let steps = Grid::new(dt, 1)
            .and_then(|g| g.steps_for(horizon))
            .map_err(|e| {
                let derived_from_times = scenario == ZMartingale && file.horizon.is_none();
                ExpError::config(if derived_from_times { "times" } else { "horizon" }, e.to_string())
            })?;
        let unit = ((1.0 / dt).round() as usize).max(1);
        let record_every = file.record_every.unwrap_or(match scenario {
            YuleCheck | ManyToOne | CoupledInclusion | ZMartingale => 1,
            Envelope => 10,
            StripHits => steps,
            _ => unit,
        });
        if record_every == 0 {
            return Err(ExpError::config("record_every", "must be at least 1"));
        }

        let drift = file.drift.unwrap_or(match scenario {
            ZMartingale | StripHits => -strip_mu.unwrap(),
            ExtinctionTime => -SQRT_2,
            VelocitySweep | NbbmVelocitySweep => -theoretical_velocity(l_eff).map_or(0.0, |v| v.max(0.0)),
            _ => 0.0,
        });
        let params = ProcessParams::new(file.branch_rate.unwrap_or(1.0), drift, file.diffusion.unwrap_or(1.0))
            .map_err(|e| {
                let field = if file.branch_rate.is_some_and(|r| !(r > 0.0)) { "branch_rate" } else { "diffusion" };
                ExpError::config(field, e.to_string())
            })?;
        if !drift.is_finite() {
            return Err(ExpError::config("drift", format!("must be finite, got {drift}")));
        }

        let start = file.start.clone().unwrap_or_else(|| match scenario {
            ZMartingale => vec![width / 2.0],
            StripHits => vec![k - 1.0],
            _ => vec![0.0],
        });
        finite_list("start", &start)?;

        let replicas = over.replicas.or(file.replicas).unwrap_or(match scenario {
            YuleCheck => 100_000,
            ManyToOne | ZMartingale => 10_000,
            StripHits => 2000,
            ExtinctionTime => 500,
            CoupledInclusion => 100,
            Envelope => 200,
            VelocitySweep | NbbmVelocitySweep => 32,
        });
        if replicas == 0 {
            return Err(ExpError::config("replicas", "must be at least 1"));
        }
        let threads = over.threads.or(file.threads);
        if threads == Some(0) {
            return Err(ExpError::config("threads", "must be at least 1"));
        }

        let burn_in = file.burn_in.unwrap_or(horizon / 5.0);
        if !(0.0..horizon).contains(&burn_in) {
            return Err(ExpError::config("burn_in", format!("must lie in [0, {horizon}), got {burn_in}")));
        }
        let eps = file.eps.unwrap_or(0.3);
        if !(eps > 0.0 && eps < 1.0) {
            return Err(ExpError::config("eps", format!("must lie in (0, 1), got {eps}")));
        }
        let gamma = file.gamma.unwrap_or(0.25);
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(ExpError::config("gamma", format!("must be nonnegative, got {gamma}")));
        }
        let d = file.d.clone().unwrap_or_else(|| vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0]);
        let r = file.r.clone().unwrap_or_else(|| vec![0.0, 1.0, 2.0, 4.0, 8.0]);
        let kmax = file.kmax.unwrap_or(20);
        if kmax == 0 {
            return Err(ExpError::config("kmax", "must be at least 1"));
        }
        let level = file.level.unwrap_or(1.0);
        if !level.is_finite() {
            return Err(ExpError::config("level", "must be finite"));
        }

        let cfg = ExperimentConfig {
            scenario,
            replicas,
            seed: over.seed.or(file.seed).unwrap_or(1),
            out: over.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
            threads,
            horizon,
            dt,
            record_every,
            branch_rate: params.branch_rate(),
            drift,
            diffusion: params.diffusion(),
            cap: file.cap.unwrap_or(DEFAULT_POPULATION_CAP),
            kill_record_cap: file
                .kill_record_cap
                .unwrap_or(if scenario == StripHits { u32::MAX as usize } else { 0 }),
            start,
            l,
            n,
            k,
            a,
            theta,
            level,
            times,
            starts,
            burn_in,
            eps,
            estimator: file.estimator.unwrap_or(Estimator::Regression),
            gamma,
            d,
            r,
            kmax,
        };
        cfg.check_scenario_fields(steps)?;
        Ok(cfg)
    }

    fn check_scenario_fields(&self, steps: usize) -> Result<(), ExpError> {
        match self.scenario {
            Scenario::ZMartingale => {
                finite_list("times", &self.times)?;
                let record_dt = self.dt * self.record_every as f64;
                for &t in &self.times {
                    let on_record_grid = ((t / record_dt).round() * record_dt - t).abs() < 1e-9 * t.max(1.0);
                    if !(t > 0.0 && t <= self.horizon + 1e-9) || !on_record_grid {
                        return Err(ExpError::config(
                            "times",
                            format!("{t} is not a record time in (0, {}] with spacing {record_dt}", self.horizon),
                        ));
                    }
                }
                let width = self.k - self.a / SQRT_2;
                if let Some(x) = self.start.iter().find(|&&x| !(x > 0.0 && x < width)) {
                    return Err(ExpError::config("start", format!("{x} lies outside the strip (0, {width})")));
                }
            }
            Scenario::StripHits => {
                if self.horizon + 1e-9 < self.theta * self.k.powi(3) {
                    return Err(ExpError::config("horizon", "must cover [0, theta k^3]"));
                }
                if let Some(x) = self.start.iter().find(|&&x| !(x > 0.0 && x < self.k)) {
                    return Err(ExpError::config("start", format!("{x} lies outside the strip (0, {})", self.k)));
                }
            }
            Scenario::ExtinctionTime => {
                finite_list("starts", &self.starts)?;
                if let Some(x) = self.starts.iter().find(|&&x| x <= 0.0) {
                    return Err(ExpError::config("starts", format!("{x} is not above the barrier at 0")));
                }
            }
            Scenario::Envelope => {
                finite_list("d", &self.d)?;
                finite_list("r", &self.r)?;
                if self.horizon < 1.0 {
                    return Err(ExpError::config("horizon", "must be at least 1"));
                }
            }
            Scenario::VelocitySweep | Scenario::NbbmVelocitySweep => {
                if steps / self.record_every < 2 {
                    return Err(ExpError::config("record_every", "fewer than two record times"));
                }
            }
            Scenario::YuleCheck | Scenario::ManyToOne | Scenario::CoupledInclusion => {}
        }
        Ok(())
    }

    pub fn params(&self) -> ProcessParams {
        ProcessParams::new(self.branch_rate, self.drift, self.diffusion).expect("validated at resolution")
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.dt, self.record_every).expect("validated at resolution")
    }

    pub fn execution(&self) -> Execution {
        match self.threads {
            Some(n) => Execution::Threads(n),
            None => Execution::Parallel,
        }
    }

    /// Strip width `K_A = K - A/sqrt(2)`.
    pub fn width(&self) -> f64 {
        self.k - self.a / SQRT_2
    }

    /// Width of the selection band for the velocity scenarios.
    pub fn effective_l(&self) -> f64 {
        match self.scenario {
            Scenario::NbbmVelocitySweep => equivalent_l(self.n as f64),
            _ => self.l,
        }
    }
}
