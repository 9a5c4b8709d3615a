//! Cross-module properties of simulated and ingested occurrence fields.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trf_core::covariance::{Dof, MaternSpec, SpaceTimeCovSpec};
use trf_core::gauge::{aggregate_occurrence, ingest_tips, to_occurrence, GaugeNetwork, OccurrenceField, Site, TipRecord};
use trf_core::simulation::{marginal_cutoff, simulate_spatial_trf, threshold_values, Cutoff, ScalingRange, TrfSimulator};
use trf_core::stats::{cond_prob_table, simultaneous_rain_pmf, OccKind};
use trf_core::{SiteSeries, TimeGrid};

fn network(p: usize, seed: u64) -> GaugeNetwork {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    GaugeNetwork::from_planar(
        (0..p)
            .map(|i| Site::new(format!("s{i}"), r.random::<f64>(), r.random::<f64>()))
            .collect(),
    )
    .unwrap()
}

fn wet_counts(occ: &SiteSeries<bool>) -> Vec<usize> {
    (0..occ.steps())
        .map(|t| (0..occ.sites()).filter(|&i| occ.get(i, t)).count())
        .collect()
}

#[test]
fn t_field_puts_more_steps_above_k_wet_sites_than_gaussian() {
    // same seed => same Z; only the scaling differs
    let net = network(12, 1);
    let reps = 10_000;
    let p_dry = 0.975;
    let matern = MaternSpec::whittle(0.5);
    let count_at_least = |nu: Dof, k: usize| {
        let y = simulate_spatial_trf(&net, &matern, nu, reps, 41).unwrap();
        let occ = threshold_values(&y, Cutoff::Scalar(marginal_cutoff(p_dry, nu).unwrap())).unwrap();
        wet_counts(&occ).iter().filter(|&&w| w >= k).count()
    };
    for k in [6, 9, 12] {
        let (t, g) = (count_at_least(Dof::Finite(3), k), count_at_least(Dof::Infinite, k));
        assert!(t >= g, "k = {k}: tRF {t} < GRF {g}");
    }
}

#[test]
fn sign_flip_symmetry_of_occurrence() {
    // Y > c and Y < -c have the same law; compare per-replication wet counts
    let net = network(6, 2);
    let cov = SpaceTimeCovSpec {
        beta: 0.3,
        ..SpaceTimeCovSpec::default()
    };
    let sim = TrfSimulator::new(&net, &cov, 256, ScalingRange::Steps(20.0), Dof::Finite(4), 77).unwrap();
    let c = marginal_cutoff(0.9, Dof::Finite(4)).unwrap();
    let reps = 400;
    let diffs: Vec<f64> = (0..reps)
        .map(|r| {
            let y = sim.replicate(r).y;
            let up = y.as_slice().iter().filter(|&&v| v > c).count() as f64;
            let down = y.as_slice().iter().filter(|&&v| v < -c).count() as f64;
            up - down
        })
        .collect();
    let mean = diffs.iter().sum::<f64>() / reps as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (reps - 1) as f64;
    let se = (var / reps as f64).sqrt();
    assert!(mean.abs() < 4.0 * se, "mean difference {mean}, se {se}");

    // the flipped path is exactly the mirror image
    let y = sim.replicate(0).y;
    let neg = y.map(|v| -v);
    let a = threshold_values(&neg, Cutoff::Scalar(c)).unwrap();
    let b = y.map(|v| v < -c);
    assert_eq!(a, b);
}

#[test]
fn simulated_tables_satisfy_bookkeeping_identities() {
    let net = network(8, 3);
    let sim = TrfSimulator::new(&net, &SpaceTimeCovSpec::default(), 1500, ScalingRange::FractionOfHorizon(0.05), Dof::Finite(3), 5).unwrap();
    let occ = threshold_values(&sim.replicate(0).y, Cutoff::Scalar(marginal_cutoff(0.85, Dof::Finite(3)).unwrap())).unwrap();
    let table = cond_prob_table(&occ, &net).unwrap();
    for i in 0..8 {
        let (d, r) = (table.phi_d(i, 0).unwrap(), table.phi_r(i, 0).unwrap());
        assert_eq!(d + r, 1.0);
        for kind in [OccKind::Dry, OccKind::Rain] {
            for j in 1..8 {
                assert!(table.count(kind, i, j) <= table.count(kind, i, j - 1));
            }
        }
    }
    let psi = simultaneous_rain_pmf(&occ);
    assert!((psi.psi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let all_dry = wet_counts(&occ).iter().filter(|&&w| w == 0).count();
    assert_eq!(psi.psi[0], all_dry as f64 / 1500.0);
}

fn field(rows: Vec<Vec<bool>>) -> OccurrenceField {
    OccurrenceField::new(SiteSeries::from_rows(&rows).unwrap(), TimeGrid::new(0, 5))
}

proptest! {
    #[test]
    fn aggregation_composes_and_is_monotone(
        a in 1usize..4,
        b in 1usize..4,
        blocks in 1usize..6,
        bits in proptest::collection::vec(any::<bool>(), 90),
    ) {
        let n = a * b * blocks;
        let rows = vec![bits[..n].to_vec(), bits[45..45 + n].to_vec()];
        let f = field(rows);
        let once = aggregate_occurrence(&f, a * b).unwrap();
        let twice = aggregate_occurrence(&aggregate_occurrence(&f, a).unwrap(), b).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.wet_fraction() >= f.wet_fraction());
        for i in 0..2 {
            for t in 0..n {
                if f.occ.get(i, t) {
                    prop_assert!(once.occ.get(i, t / (a * b)));
                }
            }
        }
    }

    #[test]
    fn ingestion_marks_exactly_the_tipped_intervals(
        tips in proptest::collection::vec((0usize..3, 0i64..7200), 0..60),
    ) {
        let net = network(3, 9);
        let records: Vec<TipRecord> = tips
            .iter()
            .map(|&(s, t)| TipRecord { site_id: format!("s{s}"), time: 1000 + t })
            .collect();
        let rep = ingest_tips(records, 15, 1000, 1000 + 7200, &net).unwrap();
        let occ = to_occurrence(&rep.rates);
        for s in 0..3 {
            for k in 0..8 {
                let tipped = tips.iter().any(|&(ts, t)| ts == s && t / 900 == k as i64);
                prop_assert_eq!(occ.occ.get(s, k), tipped);
            }
        }
        prop_assert_eq!(rep.skipped, 0);
    }
}
