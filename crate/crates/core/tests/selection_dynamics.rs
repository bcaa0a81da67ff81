use branchsel::engine::{init_population, simulate, Grid, ProcessParams, RecordOptions, SimConfig, DEFAULT_POPULATION_CAP};
use branchsel::replicas::{run_replicas, Execution};
use branchsel::rng::{tags, RngStream};
use branchsel::selection::{multiset_included, simulate_coupled_lbbm, BarrierSide, KillCause, SelectionRule};
use branchsel::stats::envelope_check;

#[test]
fn recorded_l_band_configurations_stay_within_width() {
    let l = 2.5;
    let mut cfg = SimConfig::new(ProcessParams::default(), SelectionRule::LBand(l), Grid::new(0.01, 1).unwrap(), 8.0);
    cfg.record = RecordOptions {
        positions: true,
        ..Default::default()
    };
    for r in 0..8 {
        let mut rng = RngStream::new(5, r, tags::SIMULATION);
        let start = init_population(&[0.0, -1.0, -4.0, 0.5], 0.0).unwrap();
        let out = simulate(start, &cfg, &mut rng).unwrap();
        // the particle at -4 is culled before the first record
        assert_eq!(out.series.records[0].size, 3);
        for s in &out.series.records {
            assert!(s.max.unwrap() - s.min.unwrap() <= l, "t = {}", s.time);
        }
    }
}

#[test]
fn recorded_n_best_populations_stay_below_n() {
    let n = 17;
    let cfg = SimConfig::new(ProcessParams::default(), SelectionRule::NBest(n), Grid::new(0.05, 1).unwrap(), 10.0);
    let mut rng = RngStream::new(6, 0, tags::SIMULATION);
    let out = simulate(init_population(&[0.0], 0.0).unwrap(), &cfg, &mut rng).unwrap();
    assert!(out.series.records.iter().all(|s| s.size <= n));
    assert_eq!(out.series.records.last().unwrap().size, n);
    assert!(out.kills.count(KillCause::Selection) > 0);
}

#[test]
fn coupled_l_bbm_is_included_in_its_driver() {
    let grid = Grid::new(0.01, 1).unwrap();
    let violations: Vec<usize> = run_replicas(20, Execution::Parallel, |r| {
        let mut rng = RngStream::new(900, r, tags::SIMULATION);
        let pop = init_population(&[0.0], 0.0).unwrap();
        let c = simulate_coupled_lbbm(pop, 7.0, &ProcessParams::default(), 3.0, grid, DEFAULT_POPULATION_CAP, &mut rng)
            .unwrap();
        assert_eq!(c.full.records.len(), c.selected.records.len());
        c.full
            .records
            .iter()
            .zip(&c.selected.records)
            .filter(|(f, s)| {
                !multiset_included(s.positions.as_deref().unwrap(), f.positions.as_deref().unwrap())
            })
            .count()
    });
    assert!(violations.iter().all(|&v| v == 0), "{violations:?}");
}

#[test]
fn killed_lineages_can_overtake_the_selected_front() {
    let grid = Grid::new(0.01, 10).unwrap();
    let overtakes: Vec<bool> = run_replicas(100, Execution::Parallel, |r| {
        let mut rng = RngStream::new(901, r, tags::SIMULATION);
        let pop = init_population(&[0.0], 0.0).unwrap();
        let c = simulate_coupled_lbbm(pop, 7.0, &ProcessParams::default(), 3.0, grid, DEFAULT_POPULATION_CAP, &mut rng)
            .unwrap();
        c.full
            .records
            .iter()
            .zip(&c.selected.records)
            .any(|(f, s)| f.max.unwrap() > s.max.unwrap())
    });
    let n = overtakes.iter().filter(|&&b| b).count();
    assert!(n > 0 && n < 100, "{n} of 100 replicas");
}

#[test]
fn coupled_run_matches_plain_selection_law() {
    // the selected half of the coupling is an L-BBM in its own right
    let l = 2.0;
    let grid = Grid::new(0.01, 100).unwrap();
    let coupled: Vec<f64> = run_replicas(3000, Execution::Parallel, |r| {
        let mut rng = RngStream::new(902, r, tags::SIMULATION);
        let pop = init_population(&[0.0], 0.0).unwrap();
        let c = simulate_coupled_lbbm(pop, 4.0, &ProcessParams::default(), l, grid, DEFAULT_POPULATION_CAP, &mut rng)
            .unwrap();
        c.selected.records.last().unwrap().size as f64
    });
    let cfg = SimConfig::new(ProcessParams::default(), SelectionRule::LBand(l), grid, 4.0);
    let plain: Vec<f64> = run_replicas(3000, Execution::Parallel, |r| {
        let mut rng = RngStream::new(903, r, tags::SIMULATION);
        let out = simulate(init_population(&[0.0], 0.0).unwrap(), &cfg, &mut rng).unwrap();
        out.series.records.last().unwrap().size as f64
    });
    let (a, sa) = branchsel::stats::mean_and_stderr(&coupled);
    let (b, sb) = branchsel::stats::mean_and_stderr(&plain);
    assert!((a - b).abs() < 3.0 * sa.hypot(sb), "{a} vs {b}");
}

fn strip_extinction_frequency(seed: u64) -> (f64, f64) {
    let cfg = SimConfig::new(
        ProcessParams::default(),
        SelectionRule::Strip { lo: 0.0, hi: 2.0 },
        Grid::new(0.01, 1000).unwrap(),
        10.0,
    );
    let n = 10_000u64;
    let dead: Vec<bool> = run_replicas(n, Execution::Parallel, |r| {
        let mut rng = RngStream::new(seed, r, tags::SIMULATION);
        simulate(init_population(&[1.0], 0.0).unwrap(), &cfg, &mut rng).unwrap().series.is_extinct()
    });
    let p = dead.iter().filter(|&&d| d).count() as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

#[test]
fn narrow_strip_dies_out_with_positive_probability() {
    let (p1, s1) = strip_extinction_frequency(70);
    let (p2, s2) = strip_extinction_frequency(71);
    assert!(p1 > 0.0 && p1 < 1.0, "{p1}");
    assert!((p1 - p2).abs() < 3.0 * s1.hypot(s2), "{p1} vs {p2}");
}

#[test]
fn barrier_kills_are_recorded_on_the_barrier() {
    let cfg = SimConfig::new(
        ProcessParams::with_drift(-2.0),
        SelectionRule::LinearBarrier {
            intercept: -1.0,
            slope: 0.5,
            side: BarrierSide::Below,
        },
        Grid::new(0.05, 20).unwrap(),
        4.0,
    );
    let mut rng = RngStream::new(3, 0, tags::SIMULATION);
    let out = simulate(init_population(&[0.0, 0.5], 0.0).unwrap(), &cfg, &mut rng).unwrap();
    assert!(out.kills.total() > 0);
    for k in out.kills.records() {
        assert!((k.position_at_kill - (-1.0 + 0.5 * k.time)).abs() < 1e-9, "{k:?}");
    }
}

#[test]
fn envelope_frequency_is_monotone_in_slack() {
    let t = 10.0;
    let mut cfg = SimConfig::new(ProcessParams::default(), SelectionRule::None, Grid::new(0.01, 10).unwrap(), t);
    cfg.record.genealogy = true;
    let slacks = [0.0, 0.5, 1.0, 2.0, 4.0, 1e3];
    let outcomes: Vec<Vec<bool>> = run_replicas(200, Execution::Parallel, |r| {
        let mut rng = RngStream::new(44, r, tags::SIMULATION);
        let out = simulate(init_population(&[0.0], 0.0).unwrap(), &cfg, &mut rng).unwrap();
        let g = out.genealogy.as_ref();
        slacks.iter().map(|&s| envelope_check(g, t, 0.25, s, s).unwrap()).collect()
    });
    let freq: Vec<f64> = (0..slacks.len())
        .map(|i| outcomes.iter().filter(|o| o[i]).count() as f64 / outcomes.len() as f64)
        .collect();
    assert!(freq.windows(2).all(|w| w[0] <= w[1]), "{freq:?}");
    assert_eq!(*freq.last().unwrap(), 1.0);
    assert!(freq[0] < freq[freq.len() - 2], "{freq:?}");
}
