//! Killing rules and the canonical coupling of a BBM with its L-BBM.
//!
//! The L-band rule kills every particle strictly more than `L` below the
//! highest particle of the selected system. Removing low particles never
//! moves the maximum, so a single pass over the survivors is exact and
//! independent of removal order. A particle sitting exactly at `max - L`
//! survives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bridges::{self, Side};
use crate::engine::{
    self, Absorber, EngineError, Grid, ParticleId, Population, ProcessParams, RecordOptions,
    Snapshot, SnapshotSeries, StepContext,
};

/// Default number of full kill records kept per run.
pub const DEFAULT_KILL_RECORD_CAP: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("invalid selection rule: {0}")]
    InvalidRule(String),
    #[error("previous positions do not line up with the population ({expected} particles, {got} positions)")]
    Misaligned { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BarrierSide {
    /// Particles below the barrier are killed.
    Below,
    /// Particles above the barrier are killed.
    Above,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SelectionRule {
    None,
    LBand(f64),
    NBest(usize),
    Strip { lo: f64, hi: f64 },
    LinearBarrier { intercept: f64, slope: f64, side: BarrierSide },
}

impl SelectionRule {
    pub fn validate(&self) -> Result<(), SelectionError> {
        match *self {
            SelectionRule::None => Ok(()),
            SelectionRule::LBand(l) if l > 0.0 => Ok(()),
            SelectionRule::LBand(l) => Err(SelectionError::InvalidRule(format!(
                "L must be positive, got {l}"
            ))),
            SelectionRule::NBest(0) => Err(SelectionError::InvalidRule("N must be at least 1".into())),
            SelectionRule::NBest(_) => Ok(()),
            SelectionRule::Strip { lo, hi } if lo.is_finite() && hi.is_finite() && lo < hi => Ok(()),
            SelectionRule::Strip { lo, hi } => Err(SelectionError::InvalidRule(format!(
                "strip needs finite lo < hi, got ({lo}, {hi})"
            ))),
            SelectionRule::LinearBarrier { intercept, slope, .. }
                if intercept.is_finite() && slope.is_finite() =>
            {
                Ok(())
            }
            SelectionRule::LinearBarrier { intercept, slope, .. } => Err(SelectionError::InvalidRule(
                format!("barrier needs finite intercept and slope, got ({intercept}, {slope})"),
            )),
        }
    }

    /// The absorbing boundary the engine must check inside each step, if any.
    pub fn absorber(&self) -> Option<Absorber> {
        match *self {
            SelectionRule::Strip { lo, hi } => Some(Absorber::Strip { lo, hi }),
            SelectionRule::LinearBarrier {
                intercept,
                slope,
                side,
            } => Some(Absorber::Linear {
                intercept,
                slope,
                side,
            }),
            _ => None,
        }
    }

    /// Grid-resolution part of the rule. Absorbing rules are enforced inside
    /// the step and do nothing here.
    pub fn apply(&self, pop: &mut Population, log: &mut KillLog) -> Result<usize, SelectionError> {
        match *self {
            SelectionRule::LBand(l) => apply_l_selection(pop, l, log),
            SelectionRule::NBest(n) => apply_n_selection(pop, n, log),
            _ => Ok(0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KillCause {
    Selection,
    Boundary(Side),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KillRecord {
    pub time: f64,
    pub particle: ParticleId,
    pub position_at_kill: f64,
    pub cause: KillCause,
}

/// Kill events of one run. Counts are always exact; full records are kept
/// up to `cap` and reservoir-sampled beyond it.
#[derive(Clone, Debug)]
pub struct KillLog {
    cap: usize,
    records: Vec<KillRecord>,
    selection: u64,
    lower: u64,
    upper: u64,
    reservoir: ChaCha8Rng,
}

impl KillLog {
    pub fn with_cap(cap: usize) -> Self {
        Self {
            cap,
            records: Vec::new(),
            selection: 0,
            lower: 0,
            upper: 0,
            reservoir: ChaCha8Rng::seed_from_u64(0x6b69_6c6c),
        }
    }

    /// A log that keeps counts but no records.
    pub fn counting_only() -> Self {
        Self::with_cap(0)
    }

    pub fn record(&mut self, rec: KillRecord) {
        match rec.cause {
            KillCause::Selection => self.selection += 1,
            KillCause::Boundary(Side::Lower) => self.lower += 1,
            KillCause::Boundary(Side::Upper) => self.upper += 1,
        }
        if self.cap == 0 {
            return;
        }
        let seen = self.total();
        if self.records.len() < self.cap {
            self.records.push(rec);
        } else {
            let j = self.reservoir.random_range(0..seen);
            if (j as usize) < self.cap {
                self.records[j as usize] = rec;
            }
        }
    }

    pub fn records(&self) -> &[KillRecord] {
        &self.records
    }

    pub fn total(&self) -> u64 {
        self.selection + self.lower + self.upper
    }

    pub fn count(&self, cause: KillCause) -> u64 {
        match cause {
            KillCause::Selection => self.selection,
            KillCause::Boundary(Side::Lower) => self.lower,
            KillCause::Boundary(Side::Upper) => self.upper,
        }
    }

    /// True when every kill is present in [`records`](Self::records).
    pub fn is_complete(&self) -> bool {
        self.records.len() as u64 == self.total()
    }
}

fn kill_where(
    pop: &mut Population,
    log: &mut KillLog,
    mut doomed: impl FnMut(&engine::Particle) -> bool,
) -> usize {
    let t = pop.time();
    let before = pop.len();
    pop.particles_mut().retain(|p| {
        if doomed(p) {
            log.record(KillRecord {
                time: t,
                particle: p.id,
                position_at_kill: p.position,
                cause: KillCause::Selection,
            });
            false
        } else {
            true
        }
    });
    before - pop.len()
}

/// Kills every particle strictly more than `l` below the current maximum.
pub fn apply_l_selection(pop: &mut Population, l: f64, log: &mut KillLog) -> Result<usize, SelectionError> {
    if !(l > 0.0) {
        return Err(SelectionError::InvalidRule(format!("L must be positive, got {l}")));
    }
    let Some(max) = pop.positions().reduce(f64::max) else {
        return Ok(0);
    };
    let threshold = max - l;
    if pop.positions().all(|x| x >= threshold) {
        return Ok(0);
    }
    Ok(kill_where(pop, log, |p| p.position < threshold))
}

/// Keeps the `n` highest particles. Among equal positions the larger
/// (younger) id survives.
pub fn apply_n_selection(pop: &mut Population, n: usize, log: &mut KillLog) -> Result<usize, SelectionError> {
    if n == 0 {
        return Err(SelectionError::InvalidRule("N must be at least 1".into()));
    }
    if pop.len() <= n {
        return Ok(0);
    }
    let t = pop.time();
    let particles = pop.particles_mut();
    // highest first; ties resolved by id, newest first
    particles.select_nth_unstable_by(n - 1, |a, b| {
        b.position
            .total_cmp(&a.position)
            .then_with(|| b.id.cmp(&a.id))
    });
    let killed = particles.len() - n;
    for p in particles.drain(n..) {
        log.record(KillRecord {
            time: t,
            particle: p.id,
            position_at_kill: p.position,
            cause: KillCause::Selection,
        });
    }
    Ok(killed)
}

/// Enforces the strip `(lo, hi)` on a population whose particle `i` moved
/// from `prev_positions[i]` over the last `dt`. Endpoints outside are killed;
/// endpoints inside are killed with the bridge crossing probability of each
/// wall. Kill positions are recorded at the wall.
#[allow(clippy::too_many_arguments)]
pub fn apply_strip<R: Rng + ?Sized>(
    prev_positions: &[f64],
    pop: &mut Population,
    lo: f64,
    hi: f64,
    dt: f64,
    diffusion: f64,
    rng: &mut R,
    log: &mut KillLog,
) -> Result<usize, SelectionError> {
    if prev_positions.len() != pop.len() {
        return Err(SelectionError::Misaligned {
            expected: pop.len(),
            got: prev_positions.len(),
        });
    }
    SelectionRule::Strip { lo, hi }.validate()?;
    let t = pop.time();
    let mut verdicts = Vec::with_capacity(pop.len());
    for (p, &x0) in pop.particles().iter().zip(prev_positions) {
        verdicts.push(bridges::strip_segment(x0, p.position, lo, hi, dt, diffusion, rng));
    }
    let before = pop.len();
    let mut verdict = verdicts.into_iter();
    pop.particles_mut().retain(|p| match verdict.next().flatten() {
        Some(side) => {
            log.record(KillRecord {
                time: t,
                particle: p.id,
                position_at_kill: if side == Side::Lower { lo } else { hi },
                cause: KillCause::Boundary(side),
            });
            false
        }
        None => true,
    });
    pop.settle_extinction(t);
    Ok(before - pop.len())
}

/// Drops coupled membership of particles more than `l` below the highest
/// coupled particle. Returns the number unmarked.
fn unmark_l_band(pop: &mut Population, l: f64) -> usize {
    let Some(max) = pop.coupled_positions().reduce(f64::max) else {
        return 0;
    };
    let threshold = max - l;
    let mut n = 0;
    for p in pop.particles_mut().iter_mut() {
        if p.coupled && p.position < threshold {
            p.coupled = false;
            n += 1;
        }
    }
    n
}

/// Paired observations of a BBM and the L-BBM it drives.
#[derive(Clone, Debug, Default)]
pub struct CoupledSeries {
    pub full: SnapshotSeries,
    pub selected: SnapshotSeries,
}

/// Runs a BBM and its canonically coupled L-BBM on one realization. Both
/// series record full configurations at every record time. `l` may be
/// `f64::INFINITY`, in which case the two series coincide.
pub fn simulate_coupled_lbbm<R: Rng + ?Sized>(
    mut pop: Population,
    horizon: f64,
    params: &ProcessParams,
    l: f64,
    grid: Grid,
    cap: usize,
    rng: &mut R,
) -> Result<CoupledSeries, EngineError> {
    if !(l > 0.0) {
        return Err(SelectionError::InvalidRule(format!("L must be positive, got {l}")).into());
    }
    let steps = grid.steps_for(horizon)?;
    let t0 = pop.time();
    for p in pop.particles_mut().iter_mut() {
        p.coupled = true;
    }
    unmark_l_band(&mut pop, l);

    let opts = RecordOptions {
        positions: true,
        ..Default::default()
    };
    let mut out = CoupledSeries::default();
    let record = |pop: &Population, out: &mut CoupledSeries| {
        out.full.push(snapshot_of(pop.time(), pop.positions(), &opts));
        out.selected
            .push(snapshot_of(pop.time(), pop.coupled_positions(), &opts));
    };
    record(&pop, &mut out);

    let ctx = StepContext {
        params,
        absorber: None,
        cap,
    };
    let mut sink = KillLog::counting_only();
    for k in 1..=steps {
        engine::advance_with(&mut pop, grid.step, &ctx, &mut sink, rng)?;
        pop.pin_time(t0 + k as f64 * grid.step);
        unmark_l_band(&mut pop, l);
        if k % grid.record_every == 0 || k == steps {
            record(&pop, &mut out);
        }
    }
    Ok(out)
}

fn snapshot_of(time: f64, positions: impl Iterator<Item = f64>, opts: &RecordOptions) -> Snapshot {
    let xs: Vec<f64> = positions.collect();
    Snapshot {
        time,
        size: xs.len(),
        max: xs.iter().copied().reduce(f64::max),
        min: xs.iter().copied().reduce(f64::min),
        positions: opts.positions.then_some(xs),
        z: None,
        v: None,
    }
}

/// Multiset inclusion `sub ⊆ sup` of two configurations.
pub fn multiset_included(sub: &[f64], sup: &[f64]) -> bool {
    let mut a = sub.to_vec();
    let mut b = sup.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut j = 0;
    for x in a {
        while j < b.len() && b[j] < x {
            j += 1;
        }
        if j == b.len() || b[j] != x {
            return false;
        }
        j += 1;
    }
    true
}
