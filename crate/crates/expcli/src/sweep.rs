//! Parameter sweeps over `L`, `N` or `K`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use branchsel::oracles::{equivalent_l, theoretical_velocity};
use branchsel::rng::{tags, RngStream};
use branchsel::stats::{gap_scaling_fit, GapFit, VelocityEstimate, VelocityMethod};
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use crate::config::{ConfigFile, ExperimentConfig, Overrides, Scenario};
use crate::error::ExpError;
use crate::output::{write_atomic, Cell, Table};
use crate::scenarios::execute_in;
use crate::GIT_DESCRIBE;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    L,
    N,
    K,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::L => "L",
            SweepParam::N => "N",
            SweepParam::K => "K",
        })
    }
}

impl FromStr for SweepParam {
    type Err = ExpError;

    fn from_str(s: &str) -> Result<Self, ExpError> {
        match s {
            "L" | "l" => Ok(SweepParam::L),
            "N" | "n" => Ok(SweepParam::N),
            "K" | "k" => Ok(SweepParam::K),
            _ => Err(ExpError::config("param", format!("expected L, N or K, got `{s}`"))),
        }
    }
}

impl SweepParam {
    fn default_scenario(self) -> Scenario {
        match self {
            SweepParam::L => Scenario::VelocitySweep,
            SweepParam::N => Scenario::NbbmVelocitySweep,
            SweepParam::K => Scenario::StripHits,
        }
    }

    fn accepts(self, s: Scenario) -> bool {
        match self {
            SweepParam::L => s == Scenario::VelocitySweep,
            SweepParam::N => s == Scenario::NbbmVelocitySweep,
            SweepParam::K => matches!(s, Scenario::ZMartingale | Scenario::StripHits),
        }
    }

    /// Band width the value stands for, when it has one.
    fn effective_l(self, value: f64) -> Option<f64> {
        match self {
            SweepParam::L => Some(value),
            SweepParam::N => Some(equivalent_l(value)),
            SweepParam::K => None,
        }
    }

    fn set(self, file: &mut ConfigFile, value: f64) -> Result<(), ExpError> {
        match self {
            SweepParam::L => file.l = Some(value),
            SweepParam::K => file.k = Some(value),
            SweepParam::N => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(ExpError::config("values", format!("N must be a positive integer, got {value}")));
                }
                file.n = Some(value as usize);
            }
        }
        Ok(())
    }
}

/// Parses a comma-separated list of values.
pub fn parse_values(s: &str) -> Result<Vec<f64>, ExpError> {
    let values: Vec<f64> = s
        .split(',')
        .map(|v| {
            let v = v.trim();
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| ExpError::config("values", format!("`{v}` is not a finite number")))
        })
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(ExpError::config("values", "no values given"));
    }
    Ok(values)
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub value: f64,
    pub l_effective: Option<f64>,
    pub name: String,
    pub estimate: f64,
    pub stderr: f64,
    pub replicas: u64,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
    pub fit: Option<GapFit>,
    pub table: Table,
    pub out: PathBuf,
}

fn fit_rows(rows: &[SweepRow]) -> Result<Option<GapFit>, ExpError> {
    let pairs: Vec<(f64, VelocityEstimate)> = rows
        .iter()
        .filter_map(|r| {
            r.l_effective.map(|l| {
                let e = VelocityEstimate {
                    slope: r.estimate,
                    stderr: r.stderr,
                    window: (f64::NAN, f64::NAN),
                    method: VelocityMethod::Regression,
                    replicas: r.replicas as usize,
                };
                (l, e)
            })
        })
        .collect();
    if pairs.is_empty() {
        return Ok(None);
    }
    Ok(Some(gap_scaling_fit(&pairs)?))
}

fn sweep_table(param: SweepParam, rows: &[SweepRow], fit: Option<&GapFit>) -> Table {
    let mut t = Table::new(&[
        "kind", "param", "value", "l_effective", "statistic", "estimate", "stderr", "replicas", "residual", "chi2",
    ]);
    let p = param.to_string();
    for (i, r) in rows.iter().enumerate() {
        t.push(vec![
            Cell::from("estimate"),
            Cell::from(p.as_str()),
            Cell::from(r.value),
            Cell::from(r.l_effective),
            Cell::from(r.name.as_str()),
            Cell::from(r.estimate),
            Cell::from(r.stderr),
            Cell::from(r.replicas),
            Cell::from(fit.map(|f| f.residuals[i])),
            Cell::Empty,
        ]);
    }
    if let Some(f) = fit {
        t.push(vec![
            Cell::from("fit"),
            Cell::from(p.as_str()),
            Cell::Empty,
            Cell::Empty,
            Cell::from("gap_coefficient"),
            Cell::from(f.coefficient),
            Cell::from(f.stderr),
            Cell::Empty,
            Cell::Empty,
            Cell::from(f.chi2),
        ]);
    }
    t
}

/// Runs one scenario per value, each in its own subdirectory of the output
/// directory, then writes `sweep.csv` and `sweep.summary.jsonl`.
///
/// With `synthetic_noise`, no simulation runs: each estimate is the
/// theoretical velocity plus Gaussian noise of that standard deviation, which
/// exercises the fit end to end.
pub fn run_sweep(
    base: &ConfigFile,
    over: &Overrides,
    param: SweepParam,
    values: &[f64],
    synthetic_noise: Option<f64>,
) -> Result<SweepResult, ExpError> {
    let scenario = over.scenario.or(base.scenario).unwrap_or(param.default_scenario());
    if !param.accepts(scenario) {
        return Err(ExpError::config("param", format!("cannot sweep {param} for scenario {scenario}")));
    }
    if values.is_empty() {
        return Err(ExpError::config("values", "no values given"));
    }
    let over = Overrides {
        scenario: Some(scenario),
        ..over.clone()
    };
    let mut configs = Vec::with_capacity(values.len());
    for &v in values {
        let mut file = base.clone();
        let wrap = |e: ExpError| ExpError::Sweep {
            param: param.to_string(),
            value: v,
            source: Box::new(e),
        };
        param.set(&mut file, v).map_err(wrap)?;
        configs.push(ExperimentConfig::resolve(&file, &over).map_err(wrap)?);
    }
    let out = configs[0].out.clone();

    let mut rows = Vec::with_capacity(values.len());
    match synthetic_noise {
        Some(noise) => {
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(ExpError::config("synthetic_noise", format!("must be nonnegative, got {noise}")));
            }
            for (i, (&v, cfg)) in values.iter().zip(&configs).enumerate() {
                let l = param
                    .effective_l(v)
                    .ok_or_else(|| ExpError::config("param", "synthetic injection needs an L or N sweep"))?;
                let truth = theoretical_velocity(l).map_err(|e| ExpError::config("values", e.to_string()))?;
                let mut rng = RngStream::new(cfg.seed, i as u64, tags::SYNTHETIC);
                let z: f64 = StandardNormal.sample(&mut rng);
                rows.push(SweepRow {
                    value: v,
                    l_effective: Some(l),
                    name: "synthetic".into(),
                    estimate: truth + noise * z,
                    stderr: noise,
                    replicas: 0,
                });
            }
        }
        None => {
            for (&v, cfg) in values.iter().zip(&configs) {
                let dir = out.join(format!("{param}-{v}"));
                log::info!("sweep {param} = {v} -> {}", dir.display());
                let run = execute_in(cfg, &dir).map_err(|e| ExpError::Sweep {
                    param: param.to_string(),
                    value: v,
                    source: Box::new(e),
                })?;
                rows.push(SweepRow {
                    value: v,
                    l_effective: param.effective_l(v),
                    name: run.primary.0.clone(),
                    estimate: run.primary.1,
                    stderr: run.primary.2,
                    replicas: cfg.replicas,
                });
            }
        }
    }

    let fit = fit_rows(&rows)?;
    let table = sweep_table(param, &rows, fit.as_ref());
    write_atomic(&out.join("sweep.csv"), &table.to_csv())?;
    let summary = json!({
        "param": param.to_string(),
        "values": values,
        "scenario": scenario.name(),
        "synthetic_noise": synthetic_noise,
        "git_describe": GIT_DESCRIBE,
        "config": configs[0],
        "fit": fit.as_ref().map(|f| json!({
            "coefficient": f.coefficient, "stderr": f.stderr, "residuals": f.residuals, "chi2": f.chi2,
        })),
    });
    let mut line = serde_json::to_vec(&summary).expect("summary serializes");
    line.push(b'\n');
    write_atomic(&out.join("sweep.summary.jsonl"), &line)?;
    Ok(SweepResult {
        param,
        rows,
        fit,
        table,
        out,
    })
}
