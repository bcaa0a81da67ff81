//! Event-driven simulation of drifted branching Brownian motion.
//!
//! Each particle carries its own exponential branching clock, so branch times
//! are exact: a grid step `[t, t + dt]` is cut into segments at every branch
//! event and each segment gets an exact Gaussian increment. Only interaction
//! with moving selection barriers is resolved at grid resolution. Fixed
//! absorbing boundaries (strips and linear barriers) are checked per segment
//! with a Brownian-bridge correction, see [`crate::bridges`].

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use thiserror::Error;

use crate::bridges::{self, Side};
use crate::selection::{self, KillCause, KillLog, KillRecord, SelectionRule};
use crate::stats::{self, Genealogy};

/// Default hard cap on the number of live particles.
pub const DEFAULT_POPULATION_CAP: usize = 1 << 22;

/// Default grid step for selection enforcement.
pub const DEFAULT_GRID_STEP: f64 = 0.01;

const NO_PARENT: u64 = u64::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("population cap of {cap} exceeded at time {time} ({size} particles)")]
    Capacity { time: f64, size: usize, cap: usize },
    #[error(transparent)]
    Selection(#[from] selection::SelectionError),
}

/// Identifier of a particle, unique within one run. Children always receive
/// larger ids than their parent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParticleId(pub u64);

#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    pub id: ParticleId,
    pub position: f64,
    /// Absolute time of the next binary split; `None` until the clock is
    /// first drawn.
    pub next_branch_time: Option<f64>,
    /// Set only when the population tracks genealogy.
    pub parent: Option<ParticleId>,
    /// Membership in a coupled selected subsystem. Children inherit it.
    pub coupled: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProcessParams {
    branch_rate: f64,
    drift: f64,
    diffusion: f64,
}

impl ProcessParams {
    pub fn new(branch_rate: f64, drift: f64, diffusion: f64) -> Result<Self, EngineError> {
        if !(branch_rate > 0.0 && branch_rate.is_finite()) {
            return Err(EngineError::Config(format!(
                "branch_rate must be positive, got {branch_rate}"
            )));
        }
        if !(diffusion > 0.0 && diffusion.is_finite()) {
            return Err(EngineError::Config(format!(
                "diffusion must be positive, got {diffusion}"
            )));
        }
        if !drift.is_finite() {
            return Err(EngineError::Config(format!("drift must be finite, got {drift}")));
        }
        Ok(Self {
            branch_rate,
            drift,
            diffusion,
        })
    }

    /// Unit branching and diffusion with the given drift.
    pub fn with_drift(drift: f64) -> Self {
        Self {
            drift,
            ..Self::default()
        }
    }

    pub fn branch_rate(&self) -> f64 {
        self.branch_rate
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }
}

impl Default for ProcessParams {
    fn default() -> Self {
        Self {
            branch_rate: 1.0,
            drift: 0.0,
            diffusion: 1.0,
        }
    }
}

/// A timestamped multiset of particles.
#[derive(Clone, Debug)]
pub struct Population {
    time: f64,
    particles: Vec<Particle>,
    extinct_at: Option<f64>,
    ids: IdAllocator,
}

#[derive(Clone, Debug)]
struct IdAllocator {
    next_id: u64,
    /// `parent_links[id]` is the parent of `id`, or `NO_PARENT`.
    parent_links: Option<Vec<u64>>,
}

impl IdAllocator {
    fn fresh(&mut self, parent: ParticleId) -> ParticleId {
        let id = ParticleId(self.next_id);
        self.next_id += 1;
        if let Some(links) = self.parent_links.as_mut() {
            links.push(parent.0);
        }
        id
    }

    fn tracking(&self) -> bool {
        self.parent_links.is_some()
    }
}

/// Builds a population at `t0` with one fresh particle per position.
pub fn init_population(positions: &[f64], t0: f64) -> Result<Population, EngineError> {
    Population::new(positions, t0)
}

impl Population {
    pub fn new(positions: &[f64], t0: f64) -> Result<Self, EngineError> {
        if positions.is_empty() {
            return Err(EngineError::Config("initial configuration is empty".into()));
        }
        if let Some(bad) = positions.iter().find(|x| !x.is_finite()) {
            return Err(EngineError::Config(format!("non-finite initial position {bad}")));
        }
        if !t0.is_finite() {
            return Err(EngineError::Config(format!("non-finite start time {t0}")));
        }
        let particles = positions
            .iter()
            .enumerate()
            .map(|(i, &position)| Particle {
                id: ParticleId(i as u64),
                position,
                next_branch_time: None,
                parent: None,
                coupled: true,
            })
            .collect();
        Ok(Self {
            time: t0,
            particles,
            extinct_at: None,
            ids: IdAllocator {
                next_id: positions.len() as u64,
                parent_links: None,
            },
        })
    }

    /// Starts recording parent links for every future birth.
    pub fn track_genealogy(&mut self) {
        if self.ids.parent_links.is_none() {
            self.ids.parent_links = Some(vec![NO_PARENT; self.ids.next_id as usize]);
        }
    }

    pub fn tracks_genealogy(&self) -> bool {
        self.ids.tracking()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn is_extinct(&self) -> bool {
        self.extinct_at.is_some()
    }

    pub fn extinct_at(&self) -> Option<f64> {
        self.extinct_at
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        self.particles.iter().map(|p| p.position)
    }

    /// Positions of the coupled subsystem.
    pub fn coupled_positions(&self) -> impl Iterator<Item = f64> + '_ {
        self.particles.iter().filter(|p| p.coupled).map(|p| p.position)
    }

    pub(crate) fn parent_links(&self) -> Option<&[u64]> {
        self.ids.parent_links.as_deref()
    }

    pub(crate) fn particles_mut(&mut self) -> &mut Vec<Particle> {
        &mut self.particles
    }

    pub(crate) fn pin_time(&mut self, t: f64) {
        self.time = t;
    }

    /// Marks the population extinct if no particle is left.
    pub(crate) fn settle_extinction(&mut self, when: f64) {
        if self.particles.is_empty() && self.extinct_at.is_none() {
            self.extinct_at = Some(when);
        }
    }
}

/// Fixed absorbing boundary checked inside every path segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Absorber {
    /// Particles must stay in the open interval `(lo, hi)`.
    Strip { lo: f64, hi: f64 },
    /// Barrier at `intercept + slope * t`; particles on `side` of it die.
    Linear {
        intercept: f64,
        slope: f64,
        side: selection::BarrierSide,
    },
}

impl Absorber {
    fn segment_kill<R: Rng + ?Sized>(
        &self,
        x0: f64,
        x1: f64,
        t0: f64,
        t1: f64,
        diffusion: f64,
        rng: &mut R,
    ) -> Option<(Side, f64)> {
        let h = t1 - t0;
        match *self {
            Absorber::Strip { lo, hi } => {
                bridges::strip_segment(x0, x1, lo, hi, h, diffusion, rng).map(|side| {
                    let at = match side {
                        Side::Lower => lo,
                        Side::Upper => hi,
                    };
                    (side, at)
                })
            }
            Absorber::Linear {
                intercept,
                slope,
                side,
            } => {
                let level0 = intercept + slope * t0;
                let level1 = intercept + slope * t1;
                let (o0, o1, wall) = match side {
                    selection::BarrierSide::Below => (x0 - level0, x1 - level1, Side::Lower),
                    selection::BarrierSide::Above => (level0 - x0, level1 - x1, Side::Upper),
                };
                bridges::barrier_segment(o0, o1, h, diffusion, rng).then_some((wall, level1))
            }
        }
    }

    /// True when `x` is already outside the allowed region at time `t`.
    pub fn excludes(&self, x: f64, t: f64) -> Option<(Side, f64)> {
        match *self {
            Absorber::Strip { lo, hi } => {
                if x <= lo {
                    Some((Side::Lower, lo))
                } else if x >= hi {
                    Some((Side::Upper, hi))
                } else {
                    None
                }
            }
            Absorber::Linear {
                intercept,
                slope,
                side,
            } => {
                let level = intercept + slope * t;
                match side {
                    selection::BarrierSide::Below if x <= level => Some((Side::Lower, level)),
                    selection::BarrierSide::Above if x >= level => Some((Side::Upper, level)),
                    _ => None,
                }
            }
        }
    }
}

/// Everything `advance_with` needs besides the population and the stream.
#[derive(Clone, Copy, Debug)]
pub struct StepContext<'a> {
    pub params: &'a ProcessParams,
    pub absorber: Option<&'a Absorber>,
    pub cap: usize,
}

/// Advances `pop` by `dt` with no absorption and the default cap.
pub fn advance<R: Rng + ?Sized>(
    pop: &mut Population,
    dt: f64,
    params: &ProcessParams,
    rng: &mut R,
) -> Result<(), EngineError> {
    let ctx = StepContext {
        params,
        absorber: None,
        cap: DEFAULT_POPULATION_CAP,
    };
    let mut sink = KillLog::counting_only();
    advance_with(pop, dt, &ctx, &mut sink, rng)
}

/// Advances `pop` by `dt`, splitting particles at their branch events and
/// killing paths that leave the absorber.
pub fn advance_with<R: Rng + ?Sized>(
    pop: &mut Population,
    dt: f64,
    ctx: &StepContext<'_>,
    kills: &mut KillLog,
    rng: &mut R,
) -> Result<(), EngineError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(EngineError::Config(format!("step must be positive, got {dt}")));
    }
    let t_start = pop.time;
    let t_end = t_start + dt;
    if pop.is_extinct() {
        pop.time = t_end;
        return Ok(());
    }

    let mut stepper = Stepper {
        params: ctx.params,
        absorber: ctx.absorber,
        t_end,
        sigma: ctx.params.diffusion.sqrt(),
        last_kill: None,
    };

    let mut pending: Vec<(Particle, f64)> = Vec::new();
    let mut any_dead = false;
    let Population { particles, ids, .. } = pop;
    let n = particles.len();
    for p in particles.iter_mut() {
        if !stepper.evolve(p, t_start, ids, &mut pending, kills, rng) {
            p.position = f64::NAN;
            any_dead = true;
        }
        if n + pending.len() > ctx.cap {
            return Err(EngineError::Capacity {
                time: t_end,
                size: n + pending.len(),
                cap: ctx.cap,
            });
        }
    }
    while let Some((mut child, born)) = pending.pop() {
        if stepper.evolve(&mut child, born, ids, &mut pending, kills, rng) {
            particles.push(child);
        }
        if particles.len() + pending.len() > ctx.cap {
            return Err(EngineError::Capacity {
                time: t_end,
                size: particles.len() + pending.len(),
                cap: ctx.cap,
            });
        }
    }
    if any_dead {
        pop.particles.retain(|p| !p.position.is_nan());
    }
    pop.time = t_end;
    if pop.particles.is_empty() {
        pop.extinct_at = Some(stepper.last_kill.unwrap_or(t_end));
    }
    Ok(())
}

struct Stepper<'a> {
    params: &'a ProcessParams,
    absorber: Option<&'a Absorber>,
    t_end: f64,
    sigma: f64,
    last_kill: Option<f64>,
}

impl Stepper<'_> {
    fn clock<R: Rng + ?Sized>(&self, from: f64, rng: &mut R) -> f64 {
        let e: f64 = Exp1.sample(rng);
        from + e / self.params.branch_rate
    }

    /// Runs `p` from `from` to the end of the step. Returns false if it died.
    fn evolve<R: Rng + ?Sized>(
        &mut self,
        p: &mut Particle,
        from: f64,
        ids: &mut IdAllocator,
        pending: &mut Vec<(Particle, f64)>,
        kills: &mut KillLog,
        rng: &mut R,
    ) -> bool {
        let mut now = from;
        loop {
            let branch_at = match p.next_branch_time {
                Some(t) => t,
                None => {
                    let t = self.clock(now, rng);
                    p.next_branch_time = Some(t);
                    t
                }
            };
            let splits = branch_at <= self.t_end;
            let seg_end = if splits { branch_at } else { self.t_end };
            let h = seg_end - now;
            if h > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                let x1 = p.position + self.params.drift * h + self.sigma * h.sqrt() * z;
                if let Some(absorber) = self.absorber {
                    if let Some((side, level)) =
                        absorber.segment_kill(p.position, x1, now, seg_end, self.params.diffusion, rng)
                    {
                        kills.record(KillRecord {
                            time: seg_end,
                            particle: p.id,
                            position_at_kill: level,
                            cause: KillCause::Boundary(side),
                        });
                        self.last_kill = Some(self.last_kill.map_or(seg_end, |t| t.max(seg_end)));
                        return false;
                    }
                }
                p.position = x1;
            }
            now = seg_end;
            if !splits {
                return true;
            }
            let parent = p.id;
            let track = ids.tracking();
            let first = ids.fresh(parent);
            let second = ids.fresh(parent);
            let sibling = Particle {
                id: second,
                position: p.position,
                next_branch_time: Some(self.clock(now, rng)),
                parent: track.then_some(parent),
                coupled: p.coupled,
            };
            pending.push((sibling, now));
            p.id = first;
            p.parent = track.then_some(parent);
            p.next_branch_time = Some(self.clock(now, rng));
        }
    }
}

/// Recording grid: the simulation advances by `step` and records every
/// `record_every` steps, plus at the start and at the horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub step: f64,
    pub record_every: usize,
}

impl Grid {
    pub fn new(step: f64, record_every: usize) -> Result<Self, EngineError> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(EngineError::Config(format!("grid step must be positive, got {step}")));
        }
        if record_every == 0 {
            return Err(EngineError::Config("record_every must be at least 1".into()));
        }
        Ok(Self { step, record_every })
    }

    /// Number of steps that cover `horizon`; the horizon must be a whole
    /// number of steps.
    pub fn steps_for(&self, horizon: f64) -> Result<usize, EngineError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(EngineError::Config(format!("horizon must be positive, got {horizon}")));
        }
        let n = (horizon / self.step).round();
        if n < 1.0 || (n * self.step - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(EngineError::Config(format!(
                "horizon {horizon} is not a whole number of grid steps of {}",
                self.step
            )));
        }
        Ok(n as usize)
    }
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            step: DEFAULT_GRID_STEP,
            record_every: 100,
        }
    }
}

/// Weights for the strip functionals recorded with each snapshot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StripWeights {
    pub mu: f64,
    pub width: f64,
}

/// Which observables go into each snapshot.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RecordOptions {
    pub positions: bool,
    pub strip: Option<StripWeights>,
    pub genealogy: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub size: usize,
    pub max: Option<f64>,
    pub min: Option<f64>,
    pub positions: Option<Vec<f64>>,
    pub z: Option<f64>,
    pub v: Option<f64>,
}

impl Snapshot {
    fn take(pop: &Population, opts: &RecordOptions) -> Self {
        let (min, max) = pop
            .positions()
            .fold(None, |acc: Option<(f64, f64)>, x| match acc {
                None => Some((x, x)),
                Some((lo, hi)) => Some((lo.min(x), hi.max(x))),
            })
            .map_or((None, None), |(lo, hi)| (Some(lo), Some(hi)));
        let (z, v) = match opts.strip {
            Some(w) => (
                Some(stats::z_sum(pop.positions(), w.mu, w.width)),
                Some(stats::v_sum(pop.positions(), w.mu)),
            ),
            None => (None, None),
        };
        Snapshot {
            time: pop.time(),
            size: pop.len(),
            max,
            min,
            positions: opts.positions.then(|| pop.positions().collect()),
            z,
            v,
        }
    }
}

/// Time-indexed observables of one run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SnapshotSeries {
    pub records: Vec<Snapshot>,
    pub extinct_at: Option<f64>,
}

impl SnapshotSeries {
    pub fn record_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.time)
    }

    pub fn is_extinct(&self) -> bool {
        self.extinct_at.is_some()
    }

    pub(crate) fn push(&mut self, s: Snapshot) {
        debug_assert!(self.records.last().is_none_or(|r| r.time < s.time));
        self.records.push(s);
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub params: ProcessParams,
    pub rule: SelectionRule,
    pub grid: Grid,
    pub horizon: f64,
    pub cap: usize,
    pub record: RecordOptions,
    pub kill_record_cap: usize,
}

impl SimConfig {
    pub fn new(params: ProcessParams, rule: SelectionRule, grid: Grid, horizon: f64) -> Self {
        Self {
            params,
            rule,
            grid,
            horizon,
            cap: DEFAULT_POPULATION_CAP,
            record: RecordOptions::default(),
            kill_record_cap: selection::DEFAULT_KILL_RECORD_CAP,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimOutcome {
    pub series: SnapshotSeries,
    pub kills: KillLog,
    pub genealogy: Option<Genealogy>,
    pub final_population: Population,
}

/// Runs `pop0` for `cfg.horizon`, enforcing the selection rule after every
/// grid step. Extinction truncates the series; it is not an error.
pub fn simulate<R: Rng + ?Sized>(
    mut pop: Population,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<SimOutcome, EngineError> {
    cfg.rule.validate()?;
    let steps = cfg.grid.steps_for(cfg.horizon)?;
    let t0 = pop.time();
    let absorber = cfg.rule.absorber();
    let mut kills = KillLog::with_cap(cfg.kill_record_cap);
    let mut genealogy = None;
    if cfg.record.genealogy {
        pop.track_genealogy();
        genealogy = Some(Genealogy::default());
    }

    enforce_initial(&mut pop, cfg, absorber.as_ref(), &mut kills)?;

    let mut series = SnapshotSeries::default();
    let record = |pop: &Population, series: &mut SnapshotSeries, gen: &mut Option<Genealogy>| {
        series.push(Snapshot::take(pop, &cfg.record));
        if let Some(g) = gen.as_mut() {
            g.push_frame(pop);
        }
    };
    record(&pop, &mut series, &mut genealogy);

    let ctx = StepContext {
        params: &cfg.params,
        absorber: absorber.as_ref(),
        cap: cfg.cap,
    };
    for k in 1..=steps {
        if pop.is_extinct() {
            break;
        }
        advance_with(&mut pop, cfg.grid.step, &ctx, &mut kills, rng)?;
        // keep the clock on the grid over long runs
        pop.pin_time(t0 + k as f64 * cfg.grid.step);
        cfg.rule.apply(&mut pop, &mut kills)?;
        if pop.is_extinct() {
            break;
        }
        if k % cfg.grid.record_every == 0 || k == steps {
            record(&pop, &mut series, &mut genealogy);
        }
    }
    if let (Some(g), Some(links)) = (genealogy.as_mut(), pop.parent_links()) {
        g.set_parent_links(links.to_vec());
    }
    series.extinct_at = pop.extinct_at();
    Ok(SimOutcome {
        series,
        kills,
        genealogy,
        final_population: pop,
    })
}

/// Removes particles the rule would never have allowed at the start time.
fn enforce_initial(
    pop: &mut Population,
    cfg: &SimConfig,
    absorber: Option<&Absorber>,
    kills: &mut KillLog,
) -> Result<(), EngineError> {
    if let Some(abs) = absorber {
        let t = pop.time();
        pop.particles.retain(|p| match abs.excludes(p.position, t) {
            Some((side, level)) => {
                kills.record(KillRecord {
                    time: t,
                    particle: p.id,
                    position_at_kill: level,
                    cause: KillCause::Boundary(side),
                });
                false
            }
            None => true,
        });
        pop.settle_extinction(t);
    }
    cfg.rule.apply(pop, kills)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn singleton_init() {
        let pop = init_population(&[0.0], 0.0).unwrap();
        assert_eq!(pop.len(), 1);
        assert_eq!(pop.time(), 0.0);
        assert_eq!(pop.particles()[0].position, 0.0);
        assert_eq!(pop.particles()[0].next_branch_time, None);
    }

    #[test]
    fn duplicate_positions_are_distinct_particles() {
        let pop = init_population(&[1.0, 1.0], 0.0).unwrap();
        assert_eq!(pop.len(), 2);
        assert_ne!(pop.particles()[0].id, pop.particles()[1].id);
        assert!(pop.positions().all(|x| x == 1.0));
    }

    #[test]
    fn empty_or_nonfinite_init_rejected() {
        assert!(matches!(init_population(&[], 0.0), Err(EngineError::Config(_))));
        assert!(init_population(&[f64::NAN], 0.0).is_err());
        assert!(init_population(&[0.0], f64::INFINITY).is_err());
    }

    #[test]
    fn params_validated() {
        assert!(ProcessParams::new(0.0, 0.0, 1.0).is_err());
        assert!(ProcessParams::new(1.0, 0.0, -1.0).is_err());
        assert!(ProcessParams::new(1.0, f64::NAN, 1.0).is_err());
        let p = ProcessParams::new(2.0, -1.5, 0.5).unwrap();
        assert_eq!((p.branch_rate(), p.drift(), p.diffusion()), (2.0, -1.5, 0.5));
    }

    #[test]
    fn advance_keeps_clock_invariants() {
        let mut rng = RngStream::new(3, 0, 0);
        let mut pop = init_population(&[0.0, 1.0], 0.0).unwrap();
        let params = ProcessParams::default();
        for _ in 0..200 {
            advance(&mut pop, 0.01, &params, &mut rng).unwrap();
            let t = pop.time();
            for p in pop.particles() {
                assert!(p.position.is_finite());
                assert!(p.next_branch_time.unwrap() >= t);
            }
        }
        assert!((pop.time() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn ids_unique_and_children_larger() {
        let mut rng = RngStream::new(5, 0, 0);
        let mut pop = init_population(&[0.0], 0.0).unwrap();
        pop.track_genealogy();
        advance(&mut pop, 3.0, &ProcessParams::default(), &mut rng).unwrap();
        let mut ids: Vec<u64> = pop.particles().iter().map(|p| p.id.0).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), pop.len());
        for p in pop.particles() {
            if let Some(parent) = p.parent {
                assert!(p.id > parent);
            }
        }
        let links = pop.parent_links().unwrap();
        for (id, &parent) in links.iter().enumerate() {
            if parent != NO_PARENT {
                assert!((parent as usize) < id);
            }
        }
    }

    #[test]
    fn rejects_nonpositive_step() {
        let mut rng = RngStream::new(0, 0, 0);
        let mut pop = init_population(&[0.0], 0.0).unwrap();
        assert!(advance(&mut pop, 0.0, &ProcessParams::default(), &mut rng).is_err());
        assert!(advance(&mut pop, -1.0, &ProcessParams::default(), &mut rng).is_err());
    }

    #[test]
    fn capacity_error_reports_time() {
        let mut rng = RngStream::new(0, 0, 0);
        let pop = init_population(&[0.0], 0.0).unwrap();
        let mut cfg = SimConfig::new(
            ProcessParams::default(),
            SelectionRule::None,
            Grid::new(0.5, 1).unwrap(),
            20.0,
        );
        cfg.cap = 64;
        match simulate(pop, &cfg, &mut rng) {
            Err(EngineError::Capacity { time, size, cap }) => {
                assert_eq!(cap, 64);
                assert!(size > 64);
                assert!(time > 0.0 && time <= 20.0);
            }
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn simulate_matches_single_advance() {
        let params = ProcessParams::default();
        let pop = init_population(&[0.0], 0.0).unwrap();
        let cfg = SimConfig {
            record: RecordOptions {
                positions: true,
                ..Default::default()
            },
            ..SimConfig::new(params, SelectionRule::None, Grid::new(1.0, 1).unwrap(), 1.0)
        };
        let out = simulate(pop.clone(), &cfg, &mut RngStream::new(9, 0, 0)).unwrap();
        let mut direct = pop;
        advance(&mut direct, 1.0, &params, &mut RngStream::new(9, 0, 0)).unwrap();
        let last = out.series.records.last().unwrap();
        assert_eq!(last.time, 1.0);
        assert_eq!(last.positions.as_deref().unwrap(), direct.positions().collect::<Vec<_>>());
    }

    #[test]
    fn grid_must_divide_horizon() {
        let g = Grid::new(0.3, 1).unwrap();
        assert!(g.steps_for(1.0).is_err());
        assert_eq!(g.steps_for(0.9).unwrap(), 3);
        assert!(Grid::new(0.0, 1).is_err());
        assert!(Grid::new(0.1, 0).is_err());
    }

    #[test]
    fn record_times_follow_grid() {
        let pop = init_population(&[0.0], 0.0).unwrap();
        let cfg = SimConfig::new(
            ProcessParams::default(),
            SelectionRule::LBand(2.0),
            Grid::new(0.01, 50).unwrap(),
            2.25,
        );
        let out = simulate(pop, &cfg, &mut RngStream::new(1, 0, 0)).unwrap();
        let times: Vec<f64> = out.series.record_times().collect();
        let expected = [0.0, 0.5, 1.0, 1.5, 2.0, 2.25];
        assert_eq!(times.len(), expected.len());
        for (a, b) in times.iter().zip(expected) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn strip_run_goes_extinct_sometimes() {
        let mut extinct = 0;
        for r in 0..200 {
            let pop = init_population(&[1.0], 0.0).unwrap();
            let cfg = SimConfig::new(
                ProcessParams::default(),
                SelectionRule::Strip { lo: 0.0, hi: 2.0 },
                Grid::new(0.01, 100).unwrap(),
                10.0,
            );
            let out = simulate(pop, &cfg, &mut RngStream::new(4, r, 0)).unwrap();
            if let Some(t) = out.series.extinct_at {
                extinct += 1;
                assert!(t <= 10.0);
                assert!(out.series.records.last().unwrap().time <= t);
            }
        }
        assert!(extinct > 0);
    }

    #[test]
    fn linear_barrier_kills_at_barrier_level() {
        let pop = init_population(&[0.5], 0.0).unwrap();
        let cfg = SimConfig::new(
            ProcessParams::with_drift(-2.0),
            SelectionRule::LinearBarrier {
                intercept: 0.0,
                slope: 0.0,
                side: selection::BarrierSide::Below,
            },
            Grid::new(0.05, 1).unwrap(),
            50.0,
        );
        let out = simulate(pop, &cfg, &mut RngStream::new(2, 0, 0)).unwrap();
        assert!(out.series.is_extinct());
        assert!(out.kills.total() > 0);
        for k in out.kills.records() {
            assert_eq!(k.position_at_kill, 0.0);
            assert_eq!(k.cause, KillCause::Boundary(Side::Lower));
        }
    }

    #[test]
    fn initial_particles_outside_strip_culled() {
        let pop = init_population(&[-1.0, 1.0, 3.0], 0.0).unwrap();
        let cfg = SimConfig::new(
            ProcessParams::default(),
            SelectionRule::Strip { lo: 0.0, hi: 2.0 },
            Grid::new(0.1, 1).unwrap(),
            0.1,
        );
        let out = simulate(pop, &cfg, &mut RngStream::new(2, 0, 0)).unwrap();
        assert_eq!(out.series.records[0].size, 1);
        assert_eq!(out.kills.total(), 2);
    }
}
