//! Scenario registry: one simulation plan and one statistic per scenario.

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;

use branchsel::engine::{init_population, simulate, EngineError, SimConfig, SnapshotSeries, StripWeights};
use branchsel::oracles::{extinction_constant, mu_for_width, normal_tail, theoretical_velocity, yule_pmf};
use branchsel::replicas::run_replicas;
use branchsel::rng::{tags, RngStream};
use branchsel::selection::{multiset_included, simulate_coupled_lbbm, BarrierSide, SelectionRule};
use branchsel::stats::{
    envelope_check, hit_counter, mean_and_stderr, regression_slopes, renewal_velocity, velocity_regression,
    VelocityEstimate, VelocityMethod,
};
use serde_json::{json, Value};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::config::{Estimator, ExperimentConfig, Scenario};
use crate::error::ExpError;
use crate::output::{write_atomic, Cell, Table};
use crate::GIT_DESCRIBE;

/// Significance level of the Yule goodness-of-fit test.
pub const YULE_ALPHA: f64 = 0.01;

/// Results of one scenario run, before persistence.
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub scenario: Scenario,
    /// One row per replica (per replica and sub-case for the long formats).
    pub table: Table,
    pub estimates: Value,
    /// Headline statistic `(name, value, stderr)` used by sweeps.
    pub primary: (String, f64, f64),
    pub velocity: Option<VelocityEstimate>,
    pub capacity_failures: u64,
    pub first_capacity_time: Option<f64>,
}

enum Outcome<T> {
    Done(T),
    Capacity,
}

struct Replicated<T> {
    outcomes: Vec<Outcome<T>>,
    failed: u64,
    first_time: Option<f64>,
}

impl<T> Replicated<T> {
    fn done(&self) -> impl Iterator<Item = &T> {
        self.outcomes.iter().filter_map(|o| match o {
            Outcome::Done(v) => Some(v),
            Outcome::Capacity => None,
        })
    }
}

/// Runs `f` on streams `offset .. offset + n`, separating capacity failures
/// from results. Other engine errors abort the run.
fn replicate<T, F>(cfg: &ExperimentConfig, offset: u64, n: u64, f: F) -> Result<Replicated<T>, ExpError>
where
    T: Send,
    F: Fn(&mut RngStream) -> Result<T, EngineError> + Sync + Send,
{
    let raw = run_replicas(n, cfg.execution(), |r| {
        let mut rng = RngStream::new(cfg.seed, offset + r, tags::SIMULATION);
        f(&mut rng)
    });
    let mut out = Replicated {
        outcomes: Vec::with_capacity(raw.len()),
        failed: 0,
        first_time: None,
    };
    for res in raw {
        match res {
            Ok(v) => out.outcomes.push(Outcome::Done(v)),
            Err(EngineError::Capacity { time, .. }) => {
                out.failed += 1;
                out.first_time = Some(out.first_time.map_or(time, |t: f64| t.min(time)));
                out.outcomes.push(Outcome::Capacity);
            }
            Err(e) => return Err(ExpError::Estimation(format!("simulation failed: {e}"))),
        }
    }
    Ok(out)
}

fn status<T>(o: &Outcome<T>) -> Cell {
    match o {
        Outcome::Done(_) => Cell::from("ok"),
        Outcome::Capacity => Cell::from("capacity"),
    }
}

fn sim_config(cfg: &ExperimentConfig, rule: SelectionRule) -> SimConfig {
    let mut sim = SimConfig::new(cfg.params(), rule, cfg.grid(), cfg.horizon);
    sim.cap = cfg.cap;
    sim.kill_record_cap = cfg.kill_record_cap;
    sim
}

fn start_population(cfg: &ExperimentConfig) -> Result<branchsel::engine::Population, EngineError> {
    init_population(&cfg.start, 0.0)
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        mean_and_stderr(xs)
    }
}

pub fn run_scenario(cfg: &ExperimentConfig) -> Result<ScenarioRun, ExpError> {
    log::info!("running {} with {} replicas (seed {})", cfg.scenario, cfg.replicas, cfg.seed);
    match cfg.scenario {
        Scenario::YuleCheck => yule_check(cfg),
        Scenario::ManyToOne => many_to_one(cfg),
        Scenario::ZMartingale => z_martingale(cfg),
        Scenario::StripHits => strip_hits(cfg),
        Scenario::ExtinctionTime => extinction_time(cfg),
        Scenario::CoupledInclusion => coupled_inclusion(cfg),
        Scenario::Envelope => envelope(cfg),
        Scenario::VelocitySweep | Scenario::NbbmVelocitySweep => velocity(cfg),
    }
}

fn finish(
    cfg: &ExperimentConfig,
    table: Table,
    estimates: Value,
    primary: (&str, f64, f64),
    failed: u64,
    first_time: Option<f64>,
) -> ScenarioRun {
    ScenarioRun {
        scenario: cfg.scenario,
        table,
        estimates,
        primary: (primary.0.to_owned(), primary.1, primary.2),
        velocity: None,
        capacity_failures: failed,
        first_capacity_time: first_time,
    }
}

/// Pearson chi-square of observed sizes against the Yule law at `rate_t`.
/// Sizes `1..=kmax` get their own bin and larger sizes share a tail bin;
/// trailing bins with expected count below 5 are merged into the tail.
/// Returns `(chi2, degrees of freedom, p-value)`.
pub fn yule_gof(sizes: &[u64], rate_t: f64, kmax: u64) -> Result<(f64, usize, f64), ExpError> {
    let n = sizes.len() as f64;
    let mut probs = Vec::new();
    for k in 1..=kmax {
        probs.push(yule_pmf(rate_t, k).map_err(|e| ExpError::Estimation(e.to_string()))?);
    }
    while probs.len() > 1 && n * probs[probs.len() - 1] < 5.0 {
        probs.pop();
    }
    let top = probs.len() as u64;
    let mut observed = vec![0.0; probs.len() + 1];
    for &m in sizes {
        let bin = if (1..=top).contains(&m) { (m - 1) as usize } else { probs.len() };
        observed[bin] += 1.0;
    }
    let tail = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    probs.push(tail);
    let chi2: f64 = observed
        .iter()
        .zip(&probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(o, p)| (o - n * p).powi(2) / (n * p))
        .sum();
    let dof = probs.iter().filter(|&&p| p > 0.0).count() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| ExpError::Estimation(e.to_string()))?;
    Ok((chi2, dof, dist.sf(chi2)))
}

fn yule_check(cfg: &ExperimentConfig) -> Result<ScenarioRun, ExpError> {
    let sim = sim_config(cfg, SelectionRule::None);
    let rep = replicate(cfg, 0, cfg.replicas, |rng| {
        simulate(start_population(cfg)?, &sim, rng).map(|o| o.final_population.len() as u64)
    })?;
    let mut table = Table::new(&["replica", "status", "m_t"]);
    for (r, o) in rep.outcomes.iter().enumerate() {
        let m = match o {
            Outcome::Done(m) => Cell::from(*m),
            Outcome::Capacity => Cell::Empty,
        };
        table.push(vec![Cell::from(r), status(o), m]);
    }
    let sizes: Vec<u64> = rep.done().copied().collect();
    let (mean, se) = mean_se(&sizes.iter().map(|&m| m as f64).collect::<Vec<_>>());
    let rate_t = cfg.branch_rate * cfg.horizon;
    let expected = cfg.start.len() as f64 * rate_t.exp();
    let gof = if cfg.start.len() == 1 && !sizes.is_empty() {
        let (chi2, dof, p) = yule_gof(&sizes, rate_t, cfg.kmax)?;
        json!({"chi2": chi2, "dof": dof, "p_value": p, "alpha": YULE_ALPHA, "pass": p > YULE_ALPHA})
    } else {
        Value::Null
    };
    let est = json!({
        "mean": mean, "stderr": se, "expected_mean": expected,
        "z_score": (mean - expected) / se, "gof": gof,
    });
    Ok(finish(cfg, table, est, ("mean_m_t", mean, se), rep.failed, rep.first_time))
}

fn many_to_one(cfg: &ExperimentConfig) -> Result<ScenarioRun, ExpError> {
    let sim = sim_config(cfg, SelectionRule::None);
    let level = cfg.level;
    let discount = (-cfg.branch_rate * cfg.horizon).exp();
    let rep = replicate(cfg, 0, cfg.replicas, |rng| {
        let out = simulate(start_population(cfg)?, &sim, rng)?;
        Ok(out.final_population.positions().filter(|&x| x >= level).count() as u64)
    })?;
    let mut table = Table::new(&["replica", "status", "count_above", "weighted"]);
    for (r, o) in rep.outcomes.iter().enumerate() {
        let (c, w) = match o {
            Outcome::Done(c) => (Cell::from(*c), Cell::from(*c as f64 * discount)),
            Outcome::Capacity => (Cell::Empty, Cell::Empty),
        };
        table.push(vec![Cell::from(r), status(o), c, w]);
    }
    let weighted: Vec<f64> = rep.done().map(|&c| c as f64 * discount).collect();
    let (mean, se) = mean_se(&weighted);
    let spread = (cfg.diffusion * cfg.horizon).sqrt();
    let target: f64 = cfg
        .start
        .iter()
        .map(|x| normal_tail((level - x - cfg.drift * cfg.horizon) / spread))
        .sum();
    let est = json!({"mean": mean, "stderr": se, "target": target, "z_score": (mean - target) / se});
    Ok(finish(cfg, table, est, ("discounted_count", mean, se), rep.failed, rep.first_time))
}

fn z_martingale(cfg: &ExperimentConfig) -> Result<ScenarioRun, ExpError> {
    let width = cfg.width();
    let mu = mu_for_width(cfg.k).map_err(|e| ExpError::config("k", e.to_string()))?;
    let mut sim = sim_config(cfg, SelectionRule::Strip { lo: 0.0, hi: width });
    sim.record.strip = Some(StripWeights { mu, width });
    let z0: f64 = cfg.start.iter().map(|&x| (mu * x).exp() * (PI * x / width).sin()).sum();
    let times = &cfg.times;
    let rep = replicate(cfg, 0, cfg.replicas, |rng| {
        let out = simulate(start_population(cfg)?, &sim, rng)?;
        Ok(times
            .iter()
            .map(|&t| {
                out.series
                    .records
                    .iter()
                    .find(|s| (s.time - t).abs() < 1e-9 * t.max(1.0))
                    .map_or(0.0, |s| s.z.expect("strip weights recorded") / z0)
            })
            .collect::<Vec<f64>>())
    })?;
    let mut table = Table::new(&["replica", "status", "time", "z_ratio"]);
    for (r, o) in rep.outcomes.iter().enumerate() {
        for (i, &t) in times.iter().enumerate() {
            let z = match o {
                Outcome::Done(v) => Cell::from(v[i]),
                Outcome::Capacity => Cell::Empty,
            };
            table.push(vec![Cell::from(r), status(o), Cell::from(t), z]);
        }
    }
    let rho = 1.0 - mu * mu / 2.0 - PI * PI / (2.0 * width * width);
    let per_time: Vec<Value> = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let xs: Vec<f64> = rep.done().map(|v| v[i]).collect();
            let (m, se) = mean_se(&xs);
            json!({"time": t, "mean": m, "stderr": se, "predicted": (rho * t).exp()})
        })
        .collect();
    let last: Vec<f64> = rep.done().map(|v| v[times.len() - 1]).collect();
    let (m, se) = mean_se(&last);
    let est = json!({"mu": mu, "width": width, "z0": z0, "exponent": rho, "times": per_time});
    Ok(finish(cfg, table, est, ("z_ratio_last", m, se), rep.failed, rep.first_time))
}

fn strip_hits(cfg: &ExperimentConfig) -> Result<ScenarioRun, ExpError> {
    let k = cfg.k;
    let mu = mu_for_width(k).map_err(|e| ExpError::config("k", e.to_string()))?;
    let sim = sim_config(cfg, SelectionRule::Strip { lo: 0.0, hi: k });
    let theta = cfg.theta;
    let rep = replicate(cfg, 0, cfg.replicas, |rng| {
        let out = simulate(start_population(cfg)?, &sim, rng)?;
        Ok(out.kills.is_complete().then(|| hit_counter(out.kills.records(), k, theta)))
    })?;
    if rep.done().any(Option::is_none) {
        return Err(ExpError::Estimation(
            "kill log overflowed; raise kill_record_cap to count hits exactly".into(),
        ));
    }
    let mut table = Table::new(&["replica", "status", "r", "r_prime"]);
    for (r, o) in rep.outcomes.iter().enumerate() {
        let (a, b) = match o {
            Outcome::Done(Some(h)) => (Cell::from(h.r), Cell::from(h.r_prime)),
            _ => (Cell::Empty, Cell::Empty),
        };
        table.push(vec![Cell::from(r), status(o), a, b]);
    }
    let hits: Vec<_> = rep.done().flatten().collect();
    let (mr, ser) = mean_se(&hits.iter().map(|h| h.r as f64).collect::<Vec<_>>());
    let (mp, sep) = mean_se(&hits.iter().map(|h| h.r_prime as f64).collect::<Vec<_>>());
    let z0: f64 = cfg.start.iter().map(|&x| (mu * x).exp() * (PI * x / k).sin()).sum();
    let damp = (-mu * k).exp();
    let leading = 2.0 * SQRT_2 * PI * theta * k * damp * z0;
    // outflow of the principal mode through the upper wall, integrated over
    // the late window [K^2.5, theta K^3]
    let spectral = PI * z0 * damp / (k * k) * (theta * k.powi(3) - k.powf(2.5)).max(0.0);
    let ratio = mp / leading;
    let est = json!({
        "mean_r": mr, "stderr_r": ser, "mean_r_prime": mp, "stderr_r_prime": sep,
        "z0": z0, "mu": mu, "leading_term": leading, "ratio_to_leading": ratio,
        "within_factor_2": (0.5..=2.0).contains(&ratio),
        "spectral_prediction": spectral, "r_prime_le_r": mp <= mr,
    });
    Ok(finish(cfg, table, est, ("mean_r_prime", mp, sep), rep.failed, rep.first_time))
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn extinction_time(cfg: &ExperimentConfig) -> Result<ScenarioRun, ExpError> {
    let barrier = SelectionRule::LinearBarrier {
        intercept: 0.0,
        slope: 0.0,
        side: BarrierSide::Below,
    };
    let sim = sim_config(cfg, barrier);
    let mut table = Table::new(&["replica", "status", "start", "extinction_time"]);
    let mut per_start = Vec::new();
    let (mut failed, mut first_time) = (0, None::<f64>);
    let mut ratios = Vec::new();
    for (i, &x) in cfg.starts.iter().enumerate() {
        let rep = replicate(cfg, i as u64 * cfg.replicas, cfg.replicas, |rng| {
            simulate(init_population(&[x], 0.0)?, &sim, rng).map(|o| o.series.extinct_at)
        })?;
        failed += rep.failed;
        first_time = match (first_time, rep.first_time) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        for (r, o) in rep.outcomes.iter().enumerate() {
            let t = match o {
                Outcome::Done(t) => Cell::from(*t),
                Outcome::Capacity => Cell::Empty,
            };
            table.push(vec![Cell::from(r), status(o), Cell::from(x), t]);
        }
        // survivors to the horizon and capacity failures count as +inf:
        // both outlive every recorded extinction
        let mut times: Vec<f64> = rep
            .outcomes
            .iter()
            .map(|o| match o {
                Outcome::Done(Some(t)) => *t,
                _ => f64::INFINITY,
            })
            .collect();
        let survived = rep.done().filter(|t| t.is_none()).count();
        let med = median(&mut times);
        let ratio = if med.is_finite() { med / x.powi(3) } else { f64::NAN };
        ratios.push(ratio);
        per_start.push(json!({
            "start": x, "median": med.is_finite().then_some(med), "median_over_cube": ratio,
            "survived_horizon": survived, "capacity_failures": rep.failed,
        }));
    }
    let increasing = ratios.windows(2).all(|w| w[0] < w[1]);
    let last = *ratios.last().expect("starts is non-empty");
    let est = json!({
        "constant": extinction_constant(), "per_start": per_start, "ratios_increasing": increasing,
    });
    Ok(finish(cfg, table, est, ("median_over_cube_last", last, f64::NAN), failed, first_time))
}

fn coupled_inclusion(cfg: &ExperimentConfig) -> Result<ScenarioRun, ExpError> {
    let params = cfg.params();
    let rep = replicate(cfg, 0, cfg.replicas, |rng| {
        let out = simulate_coupled_lbbm(start_population(cfg)?, cfg.horizon, &params, cfg.l, cfg.grid(), cfg.cap, rng)?;
        let mut violations = 0u64;
        for (full, sel) in out.full.records.iter().zip(&out.selected.records) {
            let (f, s) = (full.positions.as_deref(), sel.positions.as_deref());
            if !multiset_included(s.unwrap_or(&[]), f.unwrap_or(&[])) {
                violations += 1;
            }
        }
        let sizes = |s: &SnapshotSeries| s.records.last().map_or(0, |r| r.size);
        Ok((out.full.records.len(), violations, sizes(&out.full), sizes(&out.selected)))
    })?;
    let mut table = Table::new(&["replica", "status", "grid_times", "violations", "full_size", "selected_size"]);
    for (r, o) in rep.outcomes.iter().enumerate() {
        let cells = match o {
            Outcome::Done((g, v, f, s)) => vec![Cell::from(*g), Cell::from(*v), Cell::from(*f), Cell::from(*s)],
            Outcome::Capacity => vec![Cell::Empty; 4],
        };
        let mut row = vec![Cell::from(r), status(o)];
        row.extend(cells);
        table.push(row);
    }
    let violations: u64 = rep.done().map(|d| d.1).sum();
    let checked: usize = rep.done().map(|d| d.0).sum();
    let est = json!({"inclusion_violations": violations, "grid_times_checked": checked});
    Ok(finish(cfg, table, est, ("inclusion_violations", violations as f64, 0.0), rep.failed, rep.first_time))
}

fn envelope(cfg: &ExperimentConfig) -> Result<ScenarioRun, ExpError> {
    let mut sim = sim_config(cfg, SelectionRule::None);
    sim.record.genealogy = true;
    let pairs: Vec<(f64, f64)> = cfg.d.iter().flat_map(|&d| cfg.r.iter().map(move |&r| (d, r))).collect();
    let t = cfg.horizon;
    let rep = replicate(cfg, 0, cfg.replicas, |rng| {
        let out = simulate(start_population(cfg)?, &sim, rng)?;
        Ok(pairs
            .iter()
            .map(|&(d, r)| envelope_check(out.genealogy.as_ref(), t, cfg.gamma, r, d))
            .collect::<Result<Vec<bool>, _>>())
    })?;
    let mut results = Vec::new();
    for o in &rep.outcomes {
        results.push(match o {
            Outcome::Done(Ok(v)) => Some(v.clone()),
            Outcome::Done(Err(e)) => return Err(e.clone().into()),
            Outcome::Capacity => None,
        });
    }
    let mut table = Table::new(&["replica", "status", "d", "r", "inside"]);
    for (i, (o, res)) in rep.outcomes.iter().zip(&results).enumerate() {
        for (j, &(d, r)) in pairs.iter().enumerate() {
            let inside = res.as_ref().map_or(Cell::Empty, |v| Cell::from(v[j] as u64));
            table.push(vec![Cell::from(i), status(o), Cell::from(d), Cell::from(r), inside]);
        }
    }
    let ok: Vec<&Vec<bool>> = results.iter().flatten().collect();
    let freq: Vec<Value> = pairs
        .iter()
        .enumerate()
        .map(|(j, &(d, r))| {
            let xs: Vec<f64> = ok.iter().map(|v| v[j] as u8 as f64).collect();
            let (m, se) = mean_se(&xs);
            json!({"d": d, "r": r, "frequency": m, "stderr": se})
        })
        .collect();
    let first: Vec<f64> = ok.iter().map(|v| v[0] as u8 as f64).collect();
    let (m, se) = mean_se(&first);
    let est = json!({"time": t, "gamma": cfg.gamma, "frequencies": freq});
    Ok(finish(cfg, table, est, ("envelope_frequency_first", m, se), rep.failed, rep.first_time))
}

fn estimate_json(e: &VelocityEstimate) -> Value {
    let method = match e.method {
        VelocityMethod::Regression => "regression",
        VelocityMethod::Renewal => "renewal",
    };
    json!({
        "method": method, "slope": e.slope, "stderr": e.stderr,
        "window": [e.window.0, e.window.1], "replicas": e.replicas,
    })
}

/// `velocity_bracket(l, eps)` with a missing edge where the strip it compares
/// against is too narrow to sustain a population.
pub fn partial_bracket(l: f64, eps: f64) -> (Option<f64>, Option<f64>) {
    let slack = eps / (l * l);
    (
        mu_for_width(l * (1.0 - eps)).ok().map(|m| m - slack),
        mu_for_width(l * (1.0 + eps)).ok().map(|m| m + slack),
    )
}

fn velocity(cfg: &ExperimentConfig) -> Result<ScenarioRun, ExpError> {
    let rule = match cfg.scenario {
        Scenario::NbbmVelocitySweep => SelectionRule::NBest(cfg.n),
        _ => SelectionRule::LBand(cfg.l),
    };
    let sim = sim_config(cfg, rule);
    let frame = -cfg.drift;
    let rep = replicate(cfg, 0, cfg.replicas, |rng| simulate(start_population(cfg)?, &sim, rng).map(|o| o.series))?;
    let series: Vec<SnapshotSeries> = rep.done().cloned().collect();
    let (slopes, _) = regression_slopes(&series, cfg.burn_in)?;
    let mut table = Table::new(&["replica", "status", "slope", "final_time", "final_max"]);
    let mut done = slopes.iter();
    for (r, o) in rep.outcomes.iter().enumerate() {
        let cells = match o {
            Outcome::Done(s) => {
                let last = s.records.last().expect("series starts with a record");
                let slope = done.next().expect("one slope per finished replica") + frame;
                vec![Cell::from(slope), Cell::from(last.time), Cell::from(last.max)]
            }
            Outcome::Capacity => vec![Cell::Empty; 3],
        };
        let mut row = vec![Cell::from(r), status(o)];
        row.extend(cells);
        table.push(row);
    }
    let mut methods = Vec::new();
    let mut primary = None;
    if cfg.estimator != Estimator::Renewal {
        let e = velocity_regression(&series, cfg.burn_in, frame)?;
        methods.push(estimate_json(&e));
        primary = Some(e);
    }
    if cfg.estimator != Estimator::Regression {
        let e = renewal_velocity(&series, frame)?;
        methods.push(estimate_json(&e));
        primary.get_or_insert(e);
    }
    let e = primary.expect("at least one estimator runs");
    let l_eff = cfg.effective_l();
    let (lo, hi) = partial_bracket(l_eff, cfg.eps);
    let est = json!({
        "l_effective": l_eff, "n": (cfg.scenario == Scenario::NbbmVelocitySweep).then_some(cfg.n),
        "frame_velocity": frame, "theoretical_velocity": theoretical_velocity(l_eff).ok(),
        "bracket": {"eps": cfg.eps, "lo": lo, "hi": hi}, "estimates": methods,
    });
    let mut run = finish(cfg, table, est, ("velocity", e.slope, e.stderr), rep.failed, rep.first_time);
    run.velocity = Some(e);
    Ok(run)
}

/// JSON line describing one run.
pub fn summary_line(cfg: &ExperimentConfig, run: &ScenarioRun) -> Value {
    json!({
        "scenario": run.scenario.name(),
        "git_describe": GIT_DESCRIBE,
        "config": cfg,
        "estimates": run.estimates,
        "primary": {"name": run.primary.0, "value": run.primary.1, "stderr": run.primary.2},
        "capacity_failures": run.capacity_failures,
        "first_capacity_time": run.first_capacity_time,
    })
}

/// Writes `<scenario>.csv` and `<scenario>.summary.jsonl` into `dir`.
pub fn persist(cfg: &ExperimentConfig, run: &ScenarioRun, dir: &Path) -> Result<(), ExpError> {
    let name = run.scenario.name();
    write_atomic(&dir.join(format!("{name}.csv")), &run.table.to_csv())?;
    let mut line = serde_json::to_vec(&summary_line(cfg, run)).expect("summary serializes");
    line.push(b'\n');
    write_atomic(&dir.join(format!("{name}.summary.jsonl")), &line)
}

/// Runs, persists to `cfg.out`, and turns capacity failures into an error
/// after the partial results are on disk.
pub fn execute(cfg: &ExperimentConfig) -> Result<ScenarioRun, ExpError> {
    execute_in(cfg, &cfg.out)
}

pub fn execute_in(cfg: &ExperimentConfig, dir: &Path) -> Result<ScenarioRun, ExpError> {
    let run = run_scenario(cfg)?;
    persist(cfg, &run, dir)?;
    if run.capacity_failures > 0 {
        return Err(ExpError::Capacity {
            failed: run.capacity_failures,
            replicas: cfg.replicas * if cfg.scenario == Scenario::ExtinctionTime { cfg.starts.len() as u64 } else { 1 },
            first_time: run.first_capacity_time.unwrap_or(f64::NAN),
        });
    }
    Ok(run)
}
