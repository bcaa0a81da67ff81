//! Population functionals and velocity estimators.
//!
//! Standard errors are always computed from replica-level quantities. Records
//! within one path are autocorrelated and are never treated as independent
//! samples.

use std::f64::consts::{PI, SQRT_2};

use thiserror::Error;

use crate::bridges::Side;
use crate::engine::{Population, SnapshotSeries};
use crate::selection::{KillCause, KillRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("outside the domain: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("not enough data: {0}")]
    Insufficient(String),
}

/// Minimum number of replicas for a replica-level standard error.
pub const MIN_REPLICAS_FOR_STDERR: usize = 8;

/// Sample mean and standard error of the mean. The SE is 0 for one sample.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn max_position(pop: &Population) -> Option<f64> {
    pop.positions().reduce(f64::max)
}

pub(crate) fn z_sum(xs: impl Iterator<Item = f64>, mu: f64, width: f64) -> f64 {
    xs.map(|x| (mu * x).exp() * (PI * x / width).sin()).sum()
}

pub(crate) fn v_sum(xs: impl Iterator<Item = f64>, mu: f64) -> f64 {
    xs.map(|x| x * (mu * x).exp()).sum()
}

/// `sum_k e^{mu x_k} sin(pi x_k / width)`.
pub fn z_functional(pop: &Population, mu: f64, width: f64) -> Result<f64, StatsError> {
    if !(width > 0.0) {
        return Err(StatsError::Config(format!("strip width must be positive, got {width}")));
    }
    let outside = pop.positions().filter(|&x| !(0.0..=width).contains(&x)).count();
    if outside > 0 {
        log::warn!("{outside} particle(s) outside [0, {width}] contribute to Z with negative weight");
    }
    Ok(z_sum(pop.positions(), mu, width))
}

/// `sum_k x_k e^{mu x_k}`.
pub fn v_functional(pop: &Population, mu: f64) -> f64 {
    v_sum(pop.positions(), mu)
}

/// Both strip functionals of a configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StripFunctionals {
    pub z: f64,
    pub v: f64,
    pub mu: f64,
    pub width: f64,
}

impl StripFunctionals {
    pub fn of(pop: &Population, mu: f64, width: f64) -> Result<Self, StatsError> {
        Ok(Self {
            z: z_functional(pop, mu, width)?,
            v: v_functional(pop, mu),
            mu,
            width,
        })
    }
}

/// Centering of the BBM maximum, `sqrt(2) t - 3/(2 sqrt 2) log t`.
pub fn m_centering(t: f64) -> Result<f64, StatsError> {
    if !(t > 0.0) {
        return Err(StatsError::Domain(format!("t must be positive, got {t}")));
    }
    Ok(SQRT_2 * t - 3.0 / (2.0 * SQRT_2) * t.ln())
}

/// Upper-wall hits of a strip run in `[0, theta K^3]` and `[K^{5/2}, theta K^3]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HitCounts {
    pub r: u64,
    pub r_prime: u64,
    pub theta: f64,
}

pub fn hit_counter(records: &[KillRecord], k: f64, theta: f64) -> HitCounts {
    let end = theta * k.powi(3);
    let late = k.powf(2.5);
    let mut counts = HitCounts { r: 0, r_prime: 0, theta };
    for rec in records {
        if rec.cause != KillCause::Boundary(Side::Upper) || rec.time < 0.0 || rec.time > end {
            continue;
        }
        counts.r += 1;
        if rec.time >= late {
            counts.r_prime += 1;
        }
    }
    counts
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VelocityMethod {
    Regression,
    Renewal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VelocityEstimate {
    pub slope: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub method: VelocityMethod,
    pub replicas: usize,
}

fn ols_slope(ts: &[f64], ys: &[f64]) -> f64 {
    let n = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut sty, mut stt) = (0.0, 0.0);
    for (t, y) in ts.iter().zip(ys) {
        sty += (t - tm) * (y - ym);
        stt += (t - tm) * (t - tm);
    }
    sty / stt
}

/// Per-replica least-squares slopes of the maximum against time over
/// `[burn_in, end]`, with the common fitting window.
pub fn regression_slopes(series: &[SnapshotSeries], burn_in: f64) -> Result<(Vec<f64>, (f64, f64)), StatsError> {
    let first = series
        .first()
        .ok_or_else(|| StatsError::Insufficient("no replicas".into()))?;
    let times: Vec<f64> = first.record_times().filter(|&t| t >= burn_in).collect();
    if times.len() < 2 {
        return Err(StatsError::Insufficient(format!(
            "{} record time(s) after burn-in {burn_in}",
            times.len()
        )));
    }
    let mut slopes = Vec::with_capacity(series.len());
    for (i, s) in series.iter().enumerate() {
        let (ts, ys): (Vec<f64>, Vec<f64>) = s
            .records
            .iter()
            .filter(|r| r.time >= burn_in)
            .map(|r| {
                r.max
                    .map(|m| (r.time, m))
                    .ok_or_else(|| StatsError::Insufficient(format!("replica {i} is extinct at {}", r.time)))
            })
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .unzip();
        if ts != times {
            return Err(StatsError::Config(format!(
                "replica {i} does not share the record grid of replica 0"
            )));
        }
        slopes.push(ols_slope(&ts, &ys));
    }
    Ok((slopes, (times[0], *times.last().unwrap())))
}

/// Least-squares slope of the maximum against time over `[burn_in, end]`,
/// averaged over replicas. Positions are taken to be measured in a frame
/// moving at `frame_velocity`, which is added back to the slope.
pub fn velocity_regression(
    series: &[SnapshotSeries],
    burn_in: f64,
    frame_velocity: f64,
) -> Result<VelocityEstimate, StatsError> {
    if series.len() < MIN_REPLICAS_FOR_STDERR {
        return Err(StatsError::Insufficient(format!(
            "{} replicas, need at least {MIN_REPLICAS_FOR_STDERR}",
            series.len()
        )));
    }
    let (slopes, window) = regression_slopes(series, burn_in)?;
    let (slope, stderr) = mean_and_stderr(&slopes);
    Ok(VelocityEstimate {
        slope: slope + frame_velocity,
        stderr,
        window,
        method: VelocityMethod::Regression,
        replicas: series.len(),
    })
}

/// Completed cycles between returns of the population size to one. A new
/// cycle can only close at least one time unit after the previous renewal.
fn renewal_cycles(s: &SnapshotSeries) -> Vec<(f64, f64)> {
    let mut cycles = Vec::new();
    let mut last: Option<(f64, f64)> = None;
    for r in &s.records {
        if r.size != 1 {
            continue;
        }
        let m = r.max.expect("a population of size one has a maximum");
        match last {
            None => last = Some((r.time, m)),
            Some((t0, m0)) if r.time >= t0 + 1.0 - 1e-9 => {
                cycles.push((m - m0, r.time - t0));
                last = Some((r.time, m));
            }
            Some(_) => {}
        }
    }
    cycles
}

/// Ratio of mean maximum displacement to mean duration over renewal cycles.
pub fn renewal_velocity(series: &[SnapshotSeries], frame_velocity: f64) -> Result<VelocityEstimate, StatsError> {
    let per_replica: Vec<Vec<(f64, f64)>> = series.iter().map(renewal_cycles).collect();
    let total: usize = per_replica.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(StatsError::Insufficient("no completed renewal cycle".into()));
    }
    // replica-level sums when there are several replicas, cycle-level
    // otherwise (cycles are i.i.d. by the strong Markov property)
    let units: Vec<(f64, f64)> = if series.len() >= 2 {
        per_replica
            .iter()
            .map(|c| c.iter().fold((0.0, 0.0), |(a, b), (dm, dt)| (a + dm, b + dt)))
            .collect()
    } else {
        per_replica.concat()
    };
    let n = units.len() as f64;
    let sum_a: f64 = units.iter().map(|u| u.0).sum();
    let sum_b: f64 = units.iter().map(|u| u.1).sum();
    let ratio = sum_a / sum_b;
    let stderr = if units.len() >= 2 {
        let mean_b = sum_b / n;
        let resid: f64 = units.iter().map(|(a, b)| (a - ratio * b).powi(2)).sum();
        (resid / (n * (n - 1.0))).sqrt() / mean_b
    } else {
        f64::NAN
    };
    let start = series
        .iter()
        .filter_map(|s| s.records.iter().find(|r| r.size == 1).map(|r| r.time))
        .fold(f64::INFINITY, f64::min);
    let end = series
        .iter()
        .filter_map(|s| s.records.last().map(|r| r.time))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(VelocityEstimate {
        slope: ratio + frame_velocity,
        stderr,
        window: (start, end),
        method: VelocityMethod::Renewal,
        replicas: series.len(),
    })
}

/// Weighted least-squares fit of `sqrt(2) - v_L ≈ c / L^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct GapFit {
    pub coefficient: f64,
    pub stderr: f64,
    /// `gap - c / L^2` per input row, in input order.
    pub residuals: Vec<f64>,
    /// Weighted sum of squared residuals.
    pub chi2: f64,
}

pub fn gap_scaling_fit(estimates: &[(f64, VelocityEstimate)]) -> Result<GapFit, StatsError> {
    let mut ls: Vec<f64> = estimates.iter().map(|(l, _)| *l).collect();
    ls.sort_by(f64::total_cmp);
    ls.dedup();
    if ls.len() < 3 {
        return Err(StatsError::Insufficient(format!(
            "{} distinct L value(s), need at least 3",
            ls.len()
        )));
    }
    if let Some((l, _)) = estimates.iter().find(|(l, _)| !(*l > 0.0)) {
        return Err(StatsError::Domain(format!("L must be positive, got {l}")));
    }
    let rows: Vec<(f64, f64, f64)> = estimates
        .iter()
        .map(|(l, e)| {
            let se = e.stderr.max(f64::EPSILON);
            (1.0 / (l * l), SQRT_2 - e.slope, 1.0 / (se * se))
        })
        .collect();
    let sxx: f64 = rows.iter().map(|(x, _, w)| w * x * x).sum();
    let sxy: f64 = rows.iter().map(|(x, y, w)| w * x * y).sum();
    let c = sxy / sxx;
    let residuals: Vec<f64> = rows.iter().map(|(x, y, _)| y - c * x).collect();
    let chi2 = rows.iter().zip(&residuals).map(|((_, _, w), r)| w * r * r).sum();
    Ok(GapFit {
        coefficient: c,
        stderr: sxx.sqrt().recip(),
        residuals,
        chi2,
    })
}

/// Positions at record times plus parent links, enough to recover the
/// ancestor of any recorded particle at any earlier record time.
#[derive(Clone, Debug, Default)]
pub struct Genealogy {
    frames: Vec<Frame>,
    parents: Vec<u64>,
}

#[derive(Clone, Debug)]
struct Frame {
    time: f64,
    ids: Vec<u64>,
    positions: Vec<f64>,
}

impl Genealogy {
    pub(crate) fn push_frame(&mut self, pop: &Population) {
        let mut rows: Vec<(u64, f64)> = pop.particles().iter().map(|p| (p.id.0, p.position)).collect();
        rows.sort_unstable_by_key(|r| r.0);
        let (ids, positions) = rows.into_iter().unzip();
        self.frames.push(Frame {
            time: pop.time(),
            ids,
            positions,
        });
    }

    pub(crate) fn set_parent_links(&mut self, links: Vec<u64>) {
        self.parents = links;
    }

    pub fn frame_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.frames.iter().map(|f| f.time)
    }

    /// Position at frame `frame` of the ancestor of particle `id`.
    fn ancestor_position(&self, mut id: u64, frame: usize) -> Option<f64> {
        let f = &self.frames[frame];
        loop {
            if let Ok(i) = f.ids.binary_search(&id) {
                return Some(f.positions[i]);
            }
            id = *self.parents.get(id as usize)?;
            if id == u64::MAX {
                return None;
            }
        }
    }
}

/// Whether some particle alive at time `t` ends above `m(t) - d` along a path
/// that never drops below `(s/t) m(t) - max(r, min(s^a, (t-s)^a))`,
/// `a = 1/2 + gamma`, at any recorded time `s`. The run must start at time 0.
pub fn envelope_check(
    genealogy: Option<&Genealogy>,
    t: f64,
    gamma: f64,
    r: f64,
    d: f64,
) -> Result<bool, StatsError> {
    let g = genealogy.ok_or_else(|| StatsError::Config("genealogy was not recorded for this run".into()))?;
    if !(t >= 1.0) {
        return Err(StatsError::Domain(format!("t must be at least 1, got {t}")));
    }
    let last = g
        .frames
        .iter()
        .rposition(|f| (f.time - t).abs() <= 1e-9 * t)
        .ok_or_else(|| StatsError::Config(format!("no recorded frame at t = {t}")))?;
    let mt = m_centering(t)?;
    let a = 0.5 + gamma;
    let floor = |s: f64| s / t * mt - r.max(s.powf(a).min((t - s).max(0.0).powf(a)));
    let terminal = &g.frames[last];
    for (&id, &x) in terminal.ids.iter().zip(&terminal.positions) {
        if x < mt - d {
            continue;
        }
        let mut ok = true;
        for (k, f) in g.frames[..=last].iter().enumerate().rev() {
            let Some(y) = g.ancestor_position(id, k) else {
                return Err(StatsError::Config(format!(
                    "particle {id} has no ancestor recorded at time {}",
                    f.time
                )));
            };
            if y < floor(f.time) {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(true);
        }
    }
    Ok(false)
}
