use branchsel::engine::{advance, init_population, simulate, Grid, ProcessParams, SimConfig};
use branchsel::oracles::{brute_force_small_instance, normal_tail, yule_pmf, BruteForceConfig};
use branchsel::replicas::{run_replicas, Execution};
use branchsel::rng::{tags, RngStream};
use branchsel::selection::SelectionRule;
use branchsel::stats::mean_and_stderr;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn yule_sizes(replicas: u64, t: f64, seed: u64) -> Vec<usize> {
    let params = ProcessParams::default();
    run_replicas(replicas, Execution::Parallel, |r| {
        let mut rng = RngStream::new(seed, r, tags::SIMULATION);
        let mut pop = init_population(&[0.0], 0.0).unwrap();
        advance(&mut pop, t, &params, &mut rng).unwrap();
        pop.len()
    })
}

fn chi_square_p_value(sizes: &[usize], t: f64, kmax: usize) -> f64 {
    let n = sizes.len() as f64;
    let mut observed = vec![0.0; kmax + 1];
    for &k in sizes {
        observed[k.min(kmax + 1) - 1] += 1.0;
    }
    let mut expected: Vec<f64> = (1..=kmax as u64).map(|k| n * yule_pmf(t, k).unwrap()).collect();
    expected.push(n - expected.iter().sum::<f64>());
    let stat: f64 = observed.iter().zip(&expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    1.0 - ChiSquared::new(kmax as f64).unwrap().cdf(stat)
}

#[test]
fn population_size_is_geometric() {
    let sizes = yule_sizes(100_000, 1.0, 2024);
    let p = chi_square_p_value(&sizes, 1.0, 20);
    assert!(p > 0.01, "chi-square p-value {p}");
    let xs: Vec<f64> = sizes.iter().map(|&k| k as f64).collect();
    let (mean, se) = mean_and_stderr(&xs);
    assert!((mean - std::f64::consts::E).abs() < 3.0 * se, "mean {mean} se {se}");
    let ones = sizes.iter().filter(|&&k| k == 1).count() as f64 / xs.len() as f64;
    let e1 = (-1.0f64).exp();
    assert!((ones - e1).abs() < 3.0 * (e1 * (1.0 - e1) / xs.len() as f64).sqrt());
}

#[test]
fn chi_square_rejects_wrong_horizon() {
    let sizes = yule_sizes(20_000, 1.2, 5);
    assert!(chi_square_p_value(&sizes, 1.0, 20) < 1e-6);
}

#[test]
fn many_to_one_counting() {
    let (t, a) = (2.0, 1.0);
    let params = ProcessParams::default();
    let counts: Vec<f64> = run_replicas(10_000, Execution::Parallel, |r| {
        let mut rng = RngStream::new(77, r, tags::SIMULATION);
        let mut pop = init_population(&[0.0], 0.0).unwrap();
        advance(&mut pop, t, &params, &mut rng).unwrap();
        (-t).exp() * pop.positions().filter(|&x| x >= a).count() as f64
    });
    let (mean, se) = mean_and_stderr(&counts);
    let target = normal_tail(a / t.sqrt());
    assert!((mean - target).abs() < 3.0 * se, "{mean} vs {target} (se {se})");
}

#[test]
fn many_to_one_with_drift() {
    let (t, a, drift) = (1.5, 0.5, -0.4);
    let params = ProcessParams::with_drift(drift);
    let counts: Vec<f64> = run_replicas(10_000, Execution::Parallel, |r| {
        let mut rng = RngStream::new(78, r, tags::SIMULATION);
        let mut pop = init_population(&[0.0], 0.0).unwrap();
        advance(&mut pop, t, &params, &mut rng).unwrap();
        (-t).exp() * pop.positions().filter(|&x| x >= a).count() as f64
    });
    let (mean, se) = mean_and_stderr(&counts);
    let target = normal_tail((a - drift * t) / t.sqrt());
    assert!((mean - target).abs() < 3.0 * se, "{mean} vs {target} (se {se})");
}

#[test]
fn short_step_increment_variance() {
    let dt = 1e-3;
    let params = ProcessParams::new(1.0, 0.0, 2.0).unwrap();
    let sq: Vec<f64> = run_replicas(50_000, Execution::Parallel, |r| {
        let mut rng = RngStream::new(3, r, tags::SIMULATION);
        let mut pop = init_population(&[0.0], 0.0).unwrap();
        advance(&mut pop, dt, &params, &mut rng).unwrap();
        pop.particles()[0].position.powi(2) / dt
    });
    let (mean, se) = mean_and_stderr(&sq);
    assert!((mean - 2.0).abs() < 3.0 * se, "{mean} (se {se})");
}

#[test]
fn brute_force_matches_yule_pmf() {
    let cfg = BruteForceConfig {
        start: vec![0.0],
        horizon: 1.0,
        dt: 1e-3,
        params: ProcessParams::default(),
        strip: None,
        replicas: 100_000,
        seed: 9,
        exec: Execution::Parallel,
    };
    let dist = brute_force_small_instance(&cfg).unwrap();
    for k in 1..=5 {
        let (freq, se) = dist.size_frequency(k);
        let p = yule_pmf(1.0, k as u64).unwrap();
        assert!((freq - p).abs() < 3.0 * se.max(1e-12), "k = {k}: {freq} vs {p} (se {se})");
    }
}

#[test]
fn brute_force_zero_horizon_is_identity() {
    let cfg = BruteForceConfig {
        start: vec![0.3, -1.0, 0.3],
        horizon: 0.0,
        dt: 0.0,
        params: ProcessParams::default(),
        strip: Some((-2.0, 2.0)),
        replicas: 5,
        seed: 1,
        exec: Execution::Sequential,
    };
    let dist = brute_force_small_instance(&cfg).unwrap();
    assert!(dist.finals.iter().all(|c| c == &vec![0.3, -1.0, 0.3]));
}

#[test]
fn brute_force_budget_is_enforced() {
    let mut cfg = BruteForceConfig {
        start: vec![0.0],
        horizon: 3.0,
        dt: 0.01,
        params: ProcessParams::default(),
        strip: None,
        replicas: 1,
        seed: 1,
        exec: Execution::Sequential,
    };
    assert!(brute_force_small_instance(&cfg).is_err());
    cfg.horizon = 2.0;
    cfg.start = vec![0.0; 8];
    assert!(brute_force_small_instance(&cfg).is_err());
}

fn series_fingerprint(exec: Execution) -> Vec<Vec<u64>> {
    let cfg = SimConfig::new(
        ProcessParams::default(),
        SelectionRule::LBand(3.0),
        Grid::new(0.01, 25).unwrap(),
        5.0,
    );
    run_replicas(24, exec, |r| {
        let mut rng = RngStream::new(123, r, tags::SIMULATION);
        let out = simulate(init_population(&[0.0], 0.0).unwrap(), &cfg, &mut rng).unwrap();
        out.series
            .records
            .iter()
            .flat_map(|s| [s.size as u64, s.max.unwrap().to_bits(), s.min.unwrap().to_bits()])
            .collect()
    })
}

#[test]
fn replicas_are_bit_identical_across_schedules() {
    let reference = series_fingerprint(Execution::Sequential);
    for exec in [Execution::Parallel, Execution::Threads(1), Execution::Threads(4), Execution::Threads(16)] {
        assert_eq!(series_fingerprint(exec), reference, "{exec:?}");
    }
}

#[test]
fn halving_the_step_leaves_l_band_front_unchanged() {
    // replica-mean front position of an L-BBM at t = 10
    let run = |dt: f64, seed: u64| {
        let cfg = SimConfig::new(
            ProcessParams::default(),
            SelectionRule::LBand(2.0),
            Grid::new(dt, 1).unwrap(),
            10.0,
        );
        let maxima: Vec<f64> = run_replicas(4000, Execution::Parallel, |r| {
            let mut rng = RngStream::new(seed, r, tags::SIMULATION);
            let out = simulate(init_population(&[0.0], 0.0).unwrap(), &cfg, &mut rng).unwrap();
            out.series.records.last().unwrap().max.unwrap()
        });
        mean_and_stderr(&maxima)
    };
    let (coarse, se_c) = run(0.01, 31);
    let (fine, se_f) = run(0.005, 32);
    let combined = se_c.hypot(se_f);
    assert!((coarse - fine).abs() < 3.0 * combined, "{coarse} vs {fine} (se {combined})");
}
