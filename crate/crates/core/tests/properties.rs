//! Property suites for every module's invariants.

use std::fs::File;

use proptest::prelude::*;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete};

use contagion_core::calibration::{load_balance_sheets, stability_scan, summarize, CalibrationSummary};
use contagion_core::cascade::{
    initialize_banks, monte_carlo, run_cascade, sweep_liabilities, BalanceSheetSpec, BankPopulation, CascadeConfig,
    Recovery,
};
use contagion_core::meanfield::{
    branching_number, classify_fixed_points, collateral_transform, equilibrium, hysteresis_bounds, iterate_map, Regime,
    Stability,
};
use contagion_core::netgen::{
    assign_loans, complete, core_periphery, erdos_renyi, watts_strogatz, ExposureNetwork, NetworkSpec,
};
use contagion_core::rng::{substream, trial_stream, Stream};
use contagion_core::{LocationScaleDistribution, MeanFieldParams};

const N: LocationScaleDistribution = LocationScaleDistribution::Normal;

fn dist_strategy() -> impl Strategy<Value = LocationScaleDistribution> {
    prop_oneof![
        Just(N),
        (0.5f64..30.0).prop_map(|dof| LocationScaleDistribution::StudentT { dof }),
    ]
}

fn monotone(theta: f64, q: f64) -> CascadeConfig {
    CascadeConfig::new(theta, q, Recovery::Monotone, 10_000).unwrap()
}

// Distributions.

proptest! {
    #[test]
    fn cdf_is_bounded_and_increasing(d in dist_strategy(), x in -10.0f64..10.0, dx in 1e-3f64..1.0) {
        let (lo, hi) = (d.std_cdf(x), d.std_cdf(x + dx));
        prop_assert!((0.0..=1.0).contains(&lo));
        prop_assert!(hi >= lo);
        // Near 1 the CDF saturates in double precision, so strictness is
        // checked on whichever tail is representable.
        if x >= 0.0 {
            prop_assert!(d.std_sf(x + dx) < d.std_sf(x));
        } else {
            prop_assert!(hi > lo);
        }
    }

    #[test]
    fn cdf_is_symmetric(d in dist_strategy(), x in -40.0f64..40.0) {
        prop_assert!((d.std_cdf(x) + d.std_cdf(-x) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf(d in dist_strategy(), p in 0.001f64..0.999) {
        prop_assert!((d.std_cdf(d.std_quantile(p)) - p).abs() <= 1e-9);
    }
}

#[test]
fn peak_density_is_numerical_maximum() {
    for d in [
        N,
        LocationScaleDistribution::StudentT { dof: 2.0 },
        LocationScaleDistribution::StudentT { dof: 0.7 },
    ] {
        // Golden-section search on [-1, 1] as an independent maximizer.
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        while hi - lo > 1e-10 {
            let (x1, x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
            if d.std_pdf(x1) < d.std_pdf(x2) {
                lo = x1;
            } else {
                hi = x2;
            }
        }
        let numeric = d.std_pdf(0.5 * (lo + hi));
        assert!((numeric - d.peak_density()).abs() <= 1e-9, "{d}");
    }
}

// Mean-field map.

proptest! {
    #[test]
    fn map_is_monotone(d in dist_strategy(), a in -10.0f64..20.0, b in 0.0f64..20.0, x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let params = MeanFieldParams::new(a, b, d).unwrap();
        let (lo, hi) = (x.min(y), x.max(y));
        prop_assert!(iterate_map(&params, lo) <= iterate_map(&params, hi));
    }

    #[test]
    fn roots_are_fixed_points(d in dist_strategy(), a in -5.0f64..20.0, b in 0.0f64..20.0) {
        let params = MeanFieldParams::new(a, b, d).unwrap();
        for r in classify_fixed_points(&params).roots {
            prop_assert!((r.p - iterate_map(&params, r.p)).abs() <= 1e-10);
        }
    }

    #[test]
    fn branching_number_matches_finite_difference(d in dist_strategy(), a in -5.0f64..15.0, b in 0.0f64..15.0, x in 0.01f64..0.99) {
        let params = MeanFieldParams::new(a, b, d).unwrap();
        let h = 1e-6;
        let fd = (iterate_map(&params, x + h) - iterate_map(&params, x - h)) / (2.0 * h);
        prop_assert!((fd - branching_number(&params, x)).abs() <= 1e-6);
    }

    #[test]
    fn stability_follows_branching_number(a in -3.0f64..17.0, b in 0.0f64..15.0) {
        let params = MeanFieldParams::normal(a, b).unwrap();
        for r in classify_fixed_points(&params).roots {
            let z = branching_number(&params, r.p);
            match r.stability {
                Stability::Stable => prop_assert!(z < 1.0 + 1e-9),
                Stability::Unstable => prop_assert!(z > 1.0 - 1e-9),
                Stability::Marginal => prop_assert!((z - 1.0).abs() <= 1e-6),
            }
        }
    }

    #[test]
    fn iteration_reaches_extreme_stable_roots(a in -3.0f64..17.0, b in 0.0f64..15.0) {
        let params = MeanFieldParams::normal(a, b).unwrap();
        if let Some((a1, a2)) = hysteresis_bounds(b, &N) {
            prop_assume!((a - a1).abs() > 1e-3 && (a - a2).abs() > 1e-3);
        }
        let sol = classify_fixed_points(&params);
        let stable: Vec<f64> = sol.stable_roots().map(|r| r.p).collect();
        prop_assert!((equilibrium(&params, 1.0).unwrap() - stable.last().unwrap()).abs() < 1e-9);
        prop_assert!((equilibrium(&params, 0.0).unwrap() - stable[0]).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn root_count_law(a in -3.0f64..17.0, b in 2.51f64..15.0) {
        let (a1, a2) = hysteresis_bounds(b, &N).unwrap();
        prop_assume!((a - a1).abs() >= 1e-6 && (a - a2).abs() >= 1e-6);
        let count = classify_fixed_points(&MeanFieldParams::normal(a, b).unwrap()).roots.len();
        prop_assert_eq!(count, if a > a1 && a < a2 { 3 } else { 1 });
    }
}

#[test]
fn collateral_moves_from_bistable_to_monostable() {
    // sigma = 58.3, zJ = 300: bistable without collateral at mu_L = 880.
    let regimes: Vec<Regime> = (0..=10)
        .map(|k| {
            let p = collateral_transform(880.0, 700.0, 300.0, 58.3, k as f64 / 10.0, N).unwrap();
            classify_fixed_points(&p).regime
        })
        .collect();
    assert_eq!(regimes[0], Regime::Bistable);
    let first_mono = regimes.iter().position(|r| *r == Regime::Monostable).unwrap();
    assert!(regimes[first_mono..].iter().all(|r| *r == Regime::Monostable));

    let full = collateral_transform(880.0, 700.0, 300.0, 58.3, 1.0, N).unwrap();
    let a_minus_b = (880.0 - 1000.0) / 58.3;
    let expected = 1.0 - N.std_cdf(a_minus_b);
    assert!((equilibrium(&full, 1.0).unwrap() - expected).abs() < 1e-12);
}

// Network generators.

fn edge_set(net: &ExposureNetwork) -> Vec<(usize, usize)> {
    net.edges().map(|(s, d, _)| (s, d)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generators_are_seed_deterministic(seed in any::<u64>()) {
        for spec in [
            NetworkSpec::ErdosRenyi { alpha: 0.05 },
            NetworkSpec::WattsStrogatz { c: 6, beta: 0.2 },
            NetworkSpec::CORE_PERIPHERY_DENSE,
        ] {
            let x = spec.generate(200, &mut substream(seed, &[1])).unwrap();
            let y = spec.generate(200, &mut substream(seed, &[1])).unwrap();
            prop_assert_eq!(edge_set(&x), edge_set(&y));
        }
    }
}

#[test]
fn er_out_degrees_fit_binomial() {
    let (m, alpha) = (200usize, 0.05);
    let mut counts = vec![0u64; m];
    for seed in 0..100 {
        let net = erdos_renyi(m, alpha, &mut substream(seed, &[2])).unwrap();
        for i in 0..m {
            counts[net.out_degree(i)] += 1;
        }
    }
    let total = (100 * m) as f64;
    let binomial = Binomial::new(alpha, (m - 1) as u64).unwrap();
    // Pool the tails so each cell expects at least 5 observations.
    let expected: Vec<f64> = (0..m as u64).map(|k| total * binomial.pmf(k)).collect();
    let (mut stat, mut cells) = (0.0, 0);
    let (mut obs_acc, mut exp_acc) = (0.0, 0.0);
    for k in 0..m {
        obs_acc += counts[k] as f64;
        exp_acc += expected[k];
        if exp_acc >= 5.0 && expected[k + 1..].iter().sum::<f64>() >= 5.0 {
            stat += (obs_acc - exp_acc).powi(2) / exp_acc;
            cells += 1;
            obs_acc = 0.0;
            exp_acc = 0.0;
        }
    }
    stat += (obs_acc - exp_acc).powi(2) / exp_acc;
    cells += 1;
    let p_value = ChiSquared::new((cells - 1) as f64).unwrap().sf(stat);
    assert!(p_value > 0.001, "chi-square {stat} on {} dof, p = {p_value}", cells - 1);
}

#[test]
fn ws_clustering_limits() {
    let (m, c) = (500, 12);
    let lattice = watts_strogatz(m, c, 0.0, &mut substream(3, &[])).unwrap();
    let analytic = 3.0 * (c as f64 - 2.0) / (4.0 * (c as f64 - 1.0));
    assert!((lattice.average_clustering() - analytic).abs() < 1e-12);

    let random = watts_strogatz(m, c, 1.0, &mut substream(4, &[])).unwrap();
    let er_level = c as f64 / (m - 1) as f64;
    assert!(
        (random.average_clustering() - er_level).abs() < 0.02,
        "{}",
        random.average_clustering()
    );
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2]) as f64
    }
}

#[test]
fn seed_banks_dominate_periphery_degree() {
    for seed in 0..100 {
        let net = core_periphery(50, 0.1, 450, 15, &mut substream(seed, &[5])).unwrap();
        let degrees = net.degrees();
        let core = median(degrees[..50].to_vec());
        let periphery = median(degrees[50..].to_vec());
        assert!(core > periphery, "seed {seed}: core {core} vs periphery {periphery}");
    }
}

// Cascade.

fn trial_inputs(seed: u64, m: usize, mu_l: f64, alpha: f64, theta: f64) -> (BankPopulation, ExposureNetwork) {
    let sheet = BalanceSheetSpec {
        m,
        ..BalanceSheetSpec::default()
    }
    .with_mu_l(mu_l);
    let banks = initialize_banks(
        &sheet,
        &mut trial_stream(seed, 0, Stream::Assets),
        &mut trial_stream(seed, 0, Stream::Liabilities),
    )
    .unwrap();
    let net = erdos_renyi(m, alpha, &mut trial_stream(seed, 0, Stream::Network)).unwrap();
    let net = assign_loans(net, theta, &banks.assets0).unwrap();
    (banks, net)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cascade_is_permutation_invariant(seed in any::<u64>(), mu_l in 850.0f64..950.0, perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let m = 120;
        let (banks, net) = trial_inputs(seed, m, mu_l, 0.08, 0.3);
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut substream(perm_seed, &[]));
        let mut a = vec![0.0; m];
        let mut l = vec![0.0; m];
        for i in 0..m {
            a[perm[i]] = banks.assets0[i];
            l[perm[i]] = banks.liabilities[i];
        }
        let moved = ExposureNetwork::from_edges(m, net.edges().map(|(s, d, w)| (perm[s], perm[d], w)), "permuted").unwrap();
        for recovery in [Recovery::Monotone, Recovery::Reversible] {
            let cfg = CascadeConfig { recovery, ..monotone(0.3, 0.0) };
            let x = run_cascade(&banks, &net, &cfg);
            let y = run_cascade(&BankPopulation::new(a.clone(), l.clone()).unwrap(), &moved, &cfg);
            if let (Ok(x), Ok(y)) = (x, y) {
                prop_assert!((0..m).all(|i| x.final_state[i] == y.final_state[perm[i]]));
                prop_assert_eq!(x.survivors_per_round, y.survivors_per_round);
            }
        }
    }

    #[test]
    fn monotone_cascade_ends_within_m_rounds(seed in any::<u64>(), mu_l in 800.0f64..1000.0, alpha in 0.005f64..0.2) {
        let m = 150;
        let (banks, net) = trial_inputs(seed, m, mu_l, alpha, 0.3);
        let r = run_cascade(&banks, &net, &monotone(0.3, 0.0)).unwrap();
        prop_assert!(r.rounds <= m);
        prop_assert!(r.survivors_per_round.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn survival_is_nondecreasing_in_collateral(seed in any::<u64>(), mu_l in 850.0f64..950.0, q1 in 0.0f64..1.0, q2 in 0.0f64..1.0) {
        let (banks, net) = trial_inputs(seed, 150, mu_l, 0.1, 0.3);
        let (lo, hi) = (q1.min(q2), q1.max(q2));
        let p_lo = run_cascade(&banks, &net, &monotone(0.3, lo)).unwrap().p_final;
        let p_hi = run_cascade(&banks, &net, &monotone(0.3, hi)).unwrap().p_final;
        prop_assert!(p_hi >= p_lo);
    }

    #[test]
    fn full_collateral_equals_no_coupling(seed in any::<u64>(), mu_l in 850.0f64..950.0) {
        let (banks, net) = trial_inputs(seed, 150, mu_l, 0.1, 0.3);
        let r = run_cascade(&banks, &net, &monotone(0.3, 1.0)).unwrap();
        prop_assert_eq!(r.p_final, banks.solvent_fraction());
    }
}

#[test]
fn ensemble_is_seed_deterministic() {
    let sheet = BalanceSheetSpec {
        m: 200,
        ..BalanceSheetSpec::default()
    };
    let net = NetworkSpec::WattsStrogatz { c: 8, beta: 0.1 };
    let x = monte_carlo(&net, &sheet, &monotone(0.3, 0.0), 12, 99).unwrap();
    let y = monte_carlo(&net, &sheet, &monotone(0.3, 0.0), 12, 99).unwrap();
    assert_eq!(x, y);
    let z = monte_carlo(&net, &sheet, &monotone(0.3, 0.0), 12, 100).unwrap();
    assert_ne!(x.p_values(), z.p_values());
}

#[test]
fn complete_network_matches_meanfield() {
    // Mean-field is exact in the all-to-all limit; compare within three
    // ensemble standard errors away from the bistable wedge.
    let m = 500;
    let sheet = BalanceSheetSpec {
        m,
        ..BalanceSheetSpec::default()
    };
    let trials = 40;
    for theta in [0.1, 0.3] {
        for mu_l in [820.0, 860.0, 940.0, 1000.0] {
            let s = sheet.with_mu_l(mu_l);
            let params = s.meanfield_params(theta, 0.0).unwrap();
            if let Some((a1, a2)) = hysteresis_bounds(params.b, &N) {
                if (params.a - a1).abs() < 0.1 || (params.a - a2).abs() < 0.1 {
                    continue;
                }
            }
            let stats = monte_carlo(&NetworkSpec::Complete, &s, &monotone(theta, 0.0), trials, 5).unwrap();
            let target = equilibrium(&params, 1.0).unwrap();
            let se = stats.std_p / (trials as f64).sqrt();
            // Floor the error bar at one bank out of M for degenerate ensembles.
            let tol = 3.0 * se.max(1.0 / m as f64);
            assert!(
                (stats.mean_p - target).abs() <= tol,
                "theta {theta}, mu_L {mu_l}: {} vs {target} (tol {tol})",
                stats.mean_p
            );
        }
    }
}

#[test]
fn heavy_tails_jump_at_lower_liabilities() {
    let grid: Vec<f64> = (0..=60).map(|k| 780.0 + 4.0 * k as f64).collect();
    let net = NetworkSpec::ErdosRenyi { alpha: 0.1 };
    let jump = |dist| {
        let sheet = BalanceSheetSpec::default().with_dist(dist);
        let pts = sweep_liabilities(&net, &sheet, &monotone(0.3, 0.0), &grid, 40, 17).unwrap();
        let drops: Vec<f64> = pts.windows(2).map(|w| w[0].stats.mean_p - w[1].stats.mean_p).collect();
        let k = drops.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).unwrap().0;
        grid[k]
    };
    let (normal, heavy) = (jump(N), jump(LocationScaleDistribution::StudentT { dof: 2.0 }));
    assert!(heavy < normal, "t(2) jump at {heavy}, normal at {normal}");
}

// Calibration.

fn fixture(country: &str, year: i32) -> CalibrationSummary {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/bank_balance_sheets.csv");
    summarize(&load_balance_sheets(File::open(path).unwrap()).unwrap(), country, year).unwrap()
}

const THETAS: [f64; 9] = [0.0, 0.03, 0.07, 0.10, 0.11, 0.13, 0.3, 0.4, 0.5];

fn f_grid() -> Vec<f64> {
    (1..=100).map(|k| k as f64 / 100.0).collect()
}

#[test]
fn scan_identity_holds_on_fixtures() {
    for (country, year) in [("UK", 2007), ("UK", 2012), ("US", 2007), ("US", 2012)] {
        let scan = stability_scan(&fixture(country, year), &THETAS, &f_grid(), &N, 1.0).unwrap();
        for c in scan.iter() {
            assert!((c.a - c.b + 1.0 / c.f).abs() <= 1e-12 * (1.0 / c.f));
        }
    }
}

#[test]
fn survival_decreases_with_interbank_share_past_the_jump() {
    for country in ["UK", "US"] {
        let scan = stability_scan(&fixture(country, 2007), &THETAS, &f_grid(), &N, 1.0).unwrap();
        for j in 0..scan.f_grid.len() {
            let column: Vec<f64> = (0..THETAS.len()).map(|i| scan.get(i, j).p).collect();
            // Past the jump: from the first theta whose p fell below one half.
            if let Some(start) = column.iter().position(|p| *p < 0.5) {
                assert!(
                    column[start..].windows(2).all(|w| w[1] <= w[0] + 1e-9),
                    "{country} f = {}: {column:?}",
                    scan.f_grid[j]
                );
            }
        }
    }
}

#[test]
fn uk_2007_is_weakly_less_stable_than_2012() {
    let thetas: Vec<f64> = THETAS.iter().copied().filter(|t| *t >= 0.07).collect();
    let s07 = stability_scan(&fixture("UK", 2007), &thetas, &f_grid(), &N, 1.0).unwrap();
    let s12 = stability_scan(&fixture("UK", 2012), &thetas, &f_grid(), &N, 1.0).unwrap();
    for (x, y) in s07.iter().zip(s12.iter()) {
        assert!(x.p <= y.p + 1e-9, "theta {} f {}: {} > {}", x.theta, x.f, x.p, y.p);
    }
}

#[test]
fn complete_graph_has_all_pairs() {
    assert_eq!(complete(7).edge_count(), 42);
}
