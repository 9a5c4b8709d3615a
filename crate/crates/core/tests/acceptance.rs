//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trf_core::covariance::{spacetime_cov, Dof, MaternSpec, SpaceTimeCovSpec};
use trf_core::cutoff::{cutoff_surface, fit_logistic_harmonics, select_h, wet_probability_surface, CutoffModel};
use trf_core::depth::{band_counts, band_counts_naive, fbox_summary, CurveEnsemble};
use trf_core::fitting::{
    criterion, fit, match_grf_range, simulate_tables, spatial_targets, CriterionSpec, CutoffRule, FitOptions,
    MatchOptions, ModelKind, Theta,
};
use trf_core::gauge::{GaugeNetwork, OccurrenceField, Site};
use trf_core::simulation::{
    marginal_cutoff, simulate_replications, simulate_spatial_trf, threshold_values, Cutoff, ScalingProcess,
    ScalingRange, SimConfig, TrfSimulator,
};
use trf_core::special::{chi_square_cdf, student_t_cdf};
use trf_core::stats::{cond_prob_table, median_curve, simultaneous_rain_pmf, CondProbTable, OccKind};
use trf_core::{SiteSeries, TimeGrid};

const P_DRY: f64 = 0.975;

fn report(n: u32, ok: bool, detail: &str) {
    println!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" });
}

/// Twelve sites drawn uniformly in the unit square.
fn unit_square_network(seed: u64) -> GaugeNetwork {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    GaugeNetwork::from_planar(
        (0..12)
            .map(|i| Site::new(format!("g{i:02}"), r.random::<f64>(), r.random::<f64>()))
            .collect(),
    )
    .unwrap()
}

fn spatial_occurrence(net: &GaugeNetwork, alpha: f64, nu: Dof, reps: usize, seed: u64) -> SiteSeries<bool> {
    let y = simulate_spatial_trf(net, &MaternSpec::whittle(alpha), nu, reps, seed).unwrap();
    threshold_values(&y, Cutoff::Scalar(marginal_cutoff(P_DRY, nu).unwrap())).unwrap()
}

#[test]
fn criterion_1_conditional_rain_ordering_in_nu() {
    let net = unit_square_network(1);
    let nus = [Dof::Finite(3), Dof::Finite(5), Dof::Finite(7), Dof::Infinite];
    let curves: Vec<Vec<Option<f64>>> = nus
        .iter()
        .map(|&nu| {
            let occ = spatial_occurrence(&net, 0.5, nu, 10_000, 11);
            median_curve(&cond_prob_table(&occ, &net).unwrap(), OccKind::Rain)
        })
        .collect();
    let at = |k: usize, j: usize| curves[k][j].unwrap_or(f64::NAN);
    let heavier_than_gaussian = (1..=6).all(|j| at(0, j) > at(3, j));
    let monotone = (1..=3).all(|j| (0..3).all(|k| at(k, j) >= at(k + 1, j)));
    for (nu, c) in nus.iter().zip(&curves) {
        let line: Vec<String> = c.iter().map(|v| v.map_or("-".into(), |x| format!("{x:.3}"))).collect();
        println!("  nu={nu}: {}", line.join(" "));
    }
    let ok = heavier_than_gaussian && monotone;
    report(1, ok, &format!("(nu=3 > nu=inf at j=1..6: {heavier_than_gaussian}; monotone at j=1..3: {monotone})"));
    assert!(ok);
}

fn psi_se(a: f64, b: f64, n: usize) -> f64 {
    (a * (1.0 - a) / n as f64 + b * (1.0 - b) / n as f64).sqrt()
}

#[test]
fn criterion_2_matched_grf_overstates_near_neighbour_rain() {
    let net = unit_square_network(1);
    let p = net.len();
    let targets = spatial_targets(&net, &MaternSpec::whittle(0.5), Dof::Finite(3), P_DRY, 100_000, 21).unwrap();
    let matched = match_grf_range(&net, 1.0, P_DRY, targets, &MatchOptions { seed: 22, ..Default::default() }).unwrap();
    println!("  targets {targets:?}; matched {matched:?}");

    // validation runs independent of the matching; 4e5 replications resolve
    // differences of about 0.01 in the conditional rain probability
    let n = 400_000;
    let trf = spatial_occurrence(&net, 0.5, Dof::Finite(3), n, 31);
    let grf = spatial_occurrence(&net, matched.alpha, Dof::Infinite, n, 32);
    let psi_t = simultaneous_rain_pmf(&trf).psi;
    let psi_g = simultaneous_rain_pmf(&grf).psi;
    let psi_ok = (0..=p).all(|j| (psi_g[j] - psi_t[j]).abs() <= 3.0 * psi_se(psi_g[j], psi_t[j], n));
    for j in 0..=p {
        println!(
            "  psi({j:2}) trf {:.5} grf {:.5} diff/se {:+.2}",
            psi_t[j],
            psi_g[j],
            (psi_g[j] - psi_t[j]) / psi_se(psi_g[j], psi_t[j], n).max(1e-300)
        );
    }

    // median conditional rain probability at j = 1, bootstrap standard errors
    let phi_r1 = |occ: &SiteSeries<bool>| median_curve(&cond_prob_table(occ, &net).unwrap(), OccKind::Rain)[1].unwrap();
    let boot_se = |occ: &SiteSeries<bool>, seed: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<f64> = (0..200)
            .map(|_| {
                let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
                let rows: Vec<Vec<bool>> = (0..p).map(|i| idx.iter().map(|&t| occ.get(i, t)).collect()).collect();
                phi_r1(&SiteSeries::from_rows(&rows).unwrap())
            })
            .collect();
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        (draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt()
    };
    let mean = phi_r1(&grf) - phi_r1(&trf);
    let se = (boot_se(&grf, 33).powi(2) + boot_se(&trf, 34).powi(2)).sqrt();
    let phi_ok = mean > 3.0 * se;
    let range_ok = matched.alpha > 0.5;
    let ok = psi_ok && phi_ok && range_ok;
    report(
        2,
        ok,
        &format!(
            "(alpha_matched {:.3} > 0.5: {range_ok}; phi_R(1) grf - trf = {mean:.4}, se {se:.4}: {phi_ok}; psi within 3 se: {psi_ok})",
            matched.alpha
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_3_circulant_embedding_covariance() {
    let net = GaugeNetwork::from_planar(vec![
        Site::new("a", 0.0, 0.0),
        Site::new("b", 0.0, 0.3),
        Site::new("c", 0.4, 0.1),
    ])
    .unwrap();
    let cov = SpaceTimeCovSpec {
        matern: MaternSpec::whittle(0.5),
        beta: 0.5,
        gamma_coefs: vec![0.1, 0.2, 0.0],
        spectrum_coefs: vec![0.0, 0.3, 0.0],
        direction: [1.0, 0.0],
    };
    let n_steps = 64;
    let reps = 50_000;
    let max_lag = 5;
    let start = std::time::Instant::now();
    let config = SimConfig {
        network: net.clone(),
        n_steps,
        cov: cov.clone(),
        alpha_u: ScalingRange::Steps(1.0),
        nu: Dof::Infinite,
        seed: 5,
        replications: reps,
    };
    let fields = simulate_replications(&config).unwrap();
    let n_embed = trf_core::simulation::embedding_len(n_steps);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    let mut checks = 0;
    for i in 0..3 {
        for j in 0..3 {
            for lag in 0..=max_lag {
                let stats: Vec<f64> = fields
                    .iter()
                    .map(|f| {
                        let (a, b) = (f.y.row(i), f.y.row(j));
                        (0..n_steps - lag).map(|t| a[t + lag] * b[t]).sum::<f64>() / (n_steps - lag) as f64
                    })
                    .collect();
                let mean = stats.iter().sum::<f64>() / reps as f64;
                let var = stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
                let se = (var / reps as f64).sqrt();
                let target = spacetime_cov(net.distance(i, j), lag as i64, &cov, net.d_max(), n_embed).unwrap();
                let z = (mean - target) / se;
                worst = worst.max(z.abs());
                checks += 1;
                if z.abs() > 3.0 {
                    failures += 1;
                    println!("  pair ({i},{j}) lag {lag}: mean {mean:.5} target {target:.5} z {z:+.2}");
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = failures == 0 && elapsed.as_secs() < 120;
    report(
        3,
        ok,
        &format!("({checks} cross-covariances, largest |z| {worst:.2}, {failures} beyond 3 se, {elapsed:.1?})"),
    );
    assert!(ok);
}

fn ks_distance(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = cdf(x);
            (f - k as f64 / n).abs().max((f - (k + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn criterion_4_marginal_laws() {
    let n = 100_000;
    let crit = 1.628 / (n as f64).sqrt();
    let t_star = 5;
    let net = GaugeNetwork::from_planar(vec![Site::new("a", 0.0, 0.0), Site::new("b", 0.0, 1.0)]).unwrap();
    let mut ok = true;
    let mut lines = Vec::new();
    for nu in [1u32, 3, 7] {
        let sp = ScalingProcess::new(16, 3.0).unwrap();
        let chi: Vec<f64> = (0..n as u64)
            .map(|r| f64::from(nu) * sp.sample_u(nu, 40 + u64::from(nu), r)[t_star].powi(2))
            .collect();
        let d_chi = ks_distance(chi, |x| chi_square_cdf(x, f64::from(nu)));
        let sim = TrfSimulator::new(
            &net,
            &SpaceTimeCovSpec { beta: 0.4, ..Default::default() },
            16,
            ScalingRange::Steps(3.0),
            Dof::Finite(nu),
            50 + u64::from(nu),
        )
        .unwrap();
        let ys: Vec<f64> = (0..n as u64).map(|r| sim.replicate(r).y.get(0, t_star)).collect();
        let d_t = ks_distance(ys, |x| student_t_cdf(x, f64::from(nu)));
        ok &= d_chi < crit && d_t < crit;
        lines.push(format!("nu={nu}: D(chi2) {d_chi:.5}, D(t) {d_t:.5}"));
    }
    report(4, ok, &format!("(critical {crit:.5}; {})", lines.join("; ")));
    assert!(ok);
}

fn recovery_spec(net: &GaugeNetwork, obs: CondProbTable, seed_base: u64) -> CriterionSpec {
    CriterionSpec {
        network: net.clone(),
        obs,
        n_steps: 2000,
        grid: TimeGrid::default(),
        cov: SpaceTimeCovSpec::default(),
        alpha_u_units: ScalingRange::FractionOfHorizon(0.0),
        cutoff: CutoffRule::Marginal { p_dry: P_DRY },
        replications: 50,
        seed_base,
    }
}

fn truth() -> Theta {
    Theta {
        alpha: 0.5,
        beta: 0.5,
        alpha_u: 0.2,
        nu: Dof::Finite(3),
    }
}

/// One observed season drawn from `truth()` with its own seed.
fn observed_table(net: &GaugeNetwork, seed: u64) -> CondProbTable {
    let placeholder = cond_prob_table(&SiteSeries::filled(net.len(), 1, false), net).unwrap();
    simulate_tables(&truth(), &recovery_spec(net, placeholder, 0), 1, seed).unwrap().remove(0)
}

#[test]
fn criterion_5_fit_recovers_range_and_dof() {
    let net = unit_square_network(1);
    let start = std::time::Instant::now();
    let trials = 20;
    let mut hits = 0;
    for k in 0..trials {
        let spec = recovery_spec(&net, observed_table(&net, 500 + k), 900 + k);
        let f = fit(&spec, ModelKind::Trf, &FitOptions::default()).unwrap();
        let nu_ok = matches!(f.theta.nu, Dof::Finite(2..=4));
        let alpha_ok = (f.theta.alpha - 0.5).abs() <= 0.15;
        hits += usize::from(nu_ok && alpha_ok);
        let at_truth = criterion(&truth(), &spec).unwrap().value;
        println!(
            "  trial {k:2}: nu {} alpha {:.3} beta {:.3} alpha_u {:.3} value {:.5} (at truth {at_truth:.5}) evals {}",
            f.theta.nu, f.theta.alpha, f.theta.beta, f.theta.alpha_u, f.value, f.evaluations
        );
    }
    let elapsed = start.elapsed();
    let ok = hits * 5 >= trials as usize * 4 && elapsed.as_secs() < 30 * 60;
    report(5, ok, &format!("({hits}/{trials} trials with nu in 2..=4 and |alpha - 0.5| <= 0.15, {elapsed:.0?})"));
    assert!(ok);
}

#[test]
fn criterion_6_fast_band_depth_matches_enumeration() {
    let mut r = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = r.random_range(3..=50);
        let t = r.random_range(1..=11);
        let curves: Vec<Vec<Option<f64>>> = (0..n)
            .map(|_| {
                (0..t)
                    .map(|_| (r.random::<f64>() > 0.1).then(|| f64::from(r.random_range(0..8u8)) / 7.0))
                    .collect()
            })
            .collect();
        let e = CurveEnsemble::new(&curves).unwrap();
        if band_counts(&e).unwrap() != band_counts_naive(&e).unwrap() {
            mismatches += 1;
        }
    }
    report(6, mismatches == 0, &format!("({mismatches} of 200 ensembles differ)"));
    assert_eq!(mismatches, 0);
}

/// Median conditional dry curve at j = 2..=11.
fn dry_curve(table: &CondProbTable) -> Vec<Option<f64>> {
    median_curve(table, OccKind::Dry)[2..=11].to_vec()
}

#[test]
fn criterion_7_validation_loop_containment() {
    let net = unit_square_network(1);
    let obs = observed_table(&net, 7001);
    let spec = recovery_spec(&net, obs.clone(), 7002);
    let trf = fit(&spec, ModelKind::Trf, &FitOptions::default()).unwrap();
    let grf = fit(&spec, ModelKind::Grf, &FitOptions::default()).unwrap();
    let obs_curve = dry_curve(&obs);
    let inside = |theta: &Theta, seed: u64| {
        let curves: Vec<Vec<Option<f64>>> = simulate_tables(theta, &spec, 1000, seed)
            .unwrap()
            .iter()
            .map(dry_curve)
            .collect();
        let s = fbox_summary(&CurveEnsemble::new(&curves).unwrap()).unwrap();
        s.central_containment(&obs_curve).iter().filter(|c| **c == Some(true)).count()
    };
    let in_trf = inside(&trf.theta, 7003);
    let in_grf = inside(&grf.theta, 7004);
    println!("  fitted tRF {:?} value {:.5}; fitted GRF {:?} value {:.5}", trf.theta, trf.value, grf.theta, grf.value);
    let ok = in_trf >= 8 && in_grf < in_trf;
    report(7, ok, &format!("(observed dry curve inside the central region: tRF {in_trf}/10, GRF {in_grf}/10)"));
    assert!(ok);
}

#[test]
fn criterion_8_logistic_cutoff() {
    let truth = CutoffModel {
        intercepts: vec![-3.6, -3.3, -3.8],
        cos: vec![0.6, -0.2],
        sin: vec![0.3, 0.25],
        period: 24.0,
        nu_ref: Dof::Infinite,
    };
    let grid = TimeGrid::new(1_088_640_000, 15);
    let n = 1_000_000;
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let mut occ = SiteSeries::filled(3, n, false);
    for t in 0..n {
        let h = grid.hour_of_day(t);
        for i in 0..3 {
            occ.set(i, t, r.random::<f64>() < truth.wet_probability(i, h));
        }
    }
    let field = OccurrenceField::new(occ, grid);
    let fit = fit_logistic_harmonics(&field, 2).unwrap();
    let z: Vec<f64> = fit
        .model
        .coefficients()
        .iter()
        .zip(truth.coefficients())
        .zip(&fit.std_errors)
        .map(|((e, t), se)| (e - t) / se)
        .collect();
    let coef_ok = z.iter().all(|v| v.abs() < 3.0);
    let selected = select_h(&field, 4).unwrap().order();

    // thresholding a unit-marginal tRF at the fitted surface
    let nu = Dof::Finite(4);
    let steps = 96;
    let surface = cutoff_surface(&fit.model, grid, steps, nu).unwrap();
    let probs = wet_probability_surface(&fit.model, grid, steps);
    let net = GaugeNetwork::from_planar(vec![
        Site::new("a", 0.0, 0.0),
        Site::new("b", 0.0, 0.5),
        Site::new("c", 0.5, 0.2),
    ])
    .unwrap();
    let sim = TrfSimulator::new(&net, &SpaceTimeCovSpec::default(), steps, ScalingRange::Steps(8.0), nu, 81).unwrap();
    let reps = 100_000;
    let cells = [(0usize, 3usize), (1, 40), (2, 77)];
    let mut wet = [0usize; 3];
    for rep in 0..reps as u64 {
        let y = sim.replicate(rep).y;
        for (k, &(i, t)) in cells.iter().enumerate() {
            wet[k] += usize::from(y.get(i, t) > surface.c.get(i, t));
        }
    }
    let mut cell_ok = true;
    let mut lines = Vec::new();
    for (k, &(i, t)) in cells.iter().enumerate() {
        let p = probs.get(i, t);
        let frac = wet[k] as f64 / reps as f64;
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        cell_ok &= (frac - p).abs() < 3.0 * se;
        lines.push(format!("cell ({i},{t}) p {p:.4} wet {frac:.4}"));
    }
    let ok = coef_ok && cell_ok && selected == 2;
    report(
        8,
        ok,
        &format!("(coefficient z-scores {z:.2?}; selected H {selected}; {})", lines.join(", ")),
    );
    assert!(ok);
}

#[test]
fn criterion_9_bitwise_reproducible_across_thread_counts() {
    let net = unit_square_network(1);
    let run = || {
        let cov = SpaceTimeCovSpec {
            beta: 0.5,
            gamma_coefs: vec![0.0, 0.2, 0.0],
            ..Default::default()
        };
        let config = SimConfig {
            network: net.clone(),
            n_steps: 500,
            cov,
            alpha_u: ScalingRange::FractionOfHorizon(0.2),
            nu: Dof::Finite(4),
            seed: 9,
            replications: 8,
        };
        let fields = simulate_replications(&config).unwrap();
        let c = marginal_cutoff(0.9, Dof::Finite(4)).unwrap();
        let occ: Vec<SiteSeries<bool>> = fields.iter().map(|f| threshold_values(&f.y, Cutoff::Scalar(c)).unwrap()).collect();
        let field = OccurrenceField::new(occ[0].clone(), TimeGrid::default());
        let cutoff = select_h(&field, 2).unwrap();
        let tables: Vec<CondProbTable> = occ.iter().map(|o| cond_prob_table(o, &net).unwrap()).collect();
        let mut spec = recovery_spec(&net, tables[0].clone(), 3);
        spec.n_steps = 300;
        spec.replications = 6;
        spec.cutoff = CutoffRule::Seasonal(cutoff.best.model.clone());
        let options = FitOptions {
            nu_grid: vec![3, 4],
            nelder_mead: trf_core::optim::NelderMeadOptions { max_evals: 25, ..Default::default() },
            ..Default::default()
        };
        let fitted = fit(&spec, ModelKind::Trf, &options).unwrap();
        let targets = spatial_targets(&net, &MaternSpec::whittle(0.5), Dof::Finite(3), 0.9, 5000, 4).unwrap();
        let matched = match_grf_range(&net, 1.0, 0.9, targets, &MatchOptions { mc_budget: 5000, seed: 5, ..Default::default() }).unwrap();
        let curves: Vec<Vec<Option<f64>>> = simulate_tables(&fitted.theta, &spec, 30, 6).unwrap().iter().map(dry_curve).collect();
        let summary = fbox_summary(&CurveEnsemble::new(&curves).unwrap()).unwrap();
        format!("{fields:?}{cutoff:?}{tables:?}{fitted:?}{matched:?}{summary:?}")
    };
    let in_pool = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(run)
    };
    let one = in_pool(1);
    let four = in_pool(4);
    let ok = one == four;
    report(9, ok, &format!("(1 vs 4 worker threads, {} bytes of debug output compared)", one.len()));
    assert!(ok);
}
