//! Property tests against independent oracles.

mod common;

use common::{brute_force_matching, enumerate, random_cohort};
use nearfar::cohort::{read_cohort, write_cohort, Cohort, Provenance, Schema, Subject};
use nearfar::debias::{build_mip, check_constraints, solve_mip, DebiasConfig, Solver};
use nearfar::dgp::{generate_partially_linear_cohort, ComplianceMix, PartiallyLinearSpec};
use nearfar::efficiency::are;
use nearfar::inference::{pair_stats, run_test, wald_estimate, Side, TestMethod};
use nearfar::matching::blossom::min_weight_perfect;
use nearfar::matching::{strengthen, DistanceSpec, Encouragement};
use nearfar::sensitivity::{rubin_pool, sensitivity_interval, SensitivityOptions, SensitivityZone};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6..1e6f64,
        prop::num::f64::NORMAL,
        prop::num::f64::SUBNORMAL,
        Just(0.0),
        Just(-0.0),
    ]
}

fn cohort_strategy() -> impl Strategy<Value = Cohort> {
    (2usize..12, 0usize..4).prop_flat_map(|(n, p)| {
        prop::collection::vec(
            (
                finite(),
                any::<bool>(),
                finite(),
                prop::collection::vec(finite(), p),
            ),
            n,
        )
        .prop_map(move |rows| {
            let subjects = rows
                .into_iter()
                .enumerate()
                .map(|(i, (dose, treatment, outcome, covariates))| Subject {
                    id: format!("id{i}"),
                    dose,
                    treatment,
                    outcome,
                    covariates,
                    latent_u: None,
                    latent_class: None,
                    potential_outcomes: None,
                })
                .collect();
            let names = (1..=p).map(|j| format!("x{j}")).collect();
            Cohort::new(
                subjects,
                names,
                Provenance::Derived {
                    note: "prop".into(),
                },
            )
            .unwrap()
        })
    })
}

/// Random outcomes so that adjusted pair differences have no ties.
fn with_noise(c: &Cohort, seed: u64) -> Cohort {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let outcomes: Vec<f64> = (0..c.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
    c.with_responses(None, &outcomes).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cohort_csv_round_trip_is_bit_exact(c in cohort_strategy()) {
        let mut buf = Vec::new();
        write_cohort(&c, &mut buf).unwrap();
        let back = read_cohort(buf.as_slice(), &Schema::default(), Provenance::Derived { note: "rt".into() }).unwrap();
        prop_assert_eq!(back.len(), c.len());
        prop_assert_eq!(back.covariate_names(), c.covariate_names());
        for (a, b) in c.subjects().iter().zip(back.subjects()) {
            prop_assert_eq!(&a.id, &b.id);
            prop_assert_eq!(a.dose.to_bits(), b.dose.to_bits());
            prop_assert_eq!(a.outcome.to_bits(), b.outcome.to_bits());
            prop_assert_eq!(a.treatment, b.treatment);
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a.covariates), bits(&b.covariates));
        }
    }

    #[test]
    fn blossom_matches_exhaustive_search(half in 1usize..5, seed in any::<u64>()) {
        let n = 2 * half;
        let mut costs = vec![0.0; n * n];
        let mut s = seed | 1;
        for i in 0..n {
            for j in i + 1..n {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                let w = (s % 1000) as f64 / 10.0;
                costs[i * n + j] = w;
                costs[j * n + i] = w;
            }
        }
        let mate = min_weight_perfect(n, &costs).unwrap();
        let total: f64 = (0..n).filter(|&i| mate[i] > i).map(|i| costs[i * n + mate[i]]).sum();
        let best = brute_force_matching(n, |i, j| costs[i * n + j]).unwrap();
        prop_assert!((total - best).abs() <= 1e-9 * best.max(1.0), "blossom {total} vs exhaustive {best}");
        for i in 0..n {
            prop_assert_eq!(mate[mate[i]], i);
        }
    }

    #[test]
    fn designs_partition_the_cohort(n in 6usize..24, seed in any::<u64>(), caliper in 0.0..3.0f64, frac in 0.0..0.5f64, higher in any::<bool>()) {
        let c = random_cohort(n, 2, seed);
        let enc = if higher { Encouragement::HigherDose } else { Encouragement::LowerDose };
        let spec = DistanceSpec::default().with_caliper(caliper).with_sinks((frac * n as f64) as usize).with_encouragement(enc);
        let d = strengthen(&c, &spec).unwrap();
        let mut seen = vec![0u8; n];
        for &(e, k) in &d.pairs {
            seen[e] += 1;
            seen[k] += 1;
            let (ze, zk) = (c.subject(e).dose, c.subject(k).dose);
            let oriented = if higher { ze > zk } else { ze < zk };
            prop_assert!(oriented);
        }
        for &i in &d.dropped {
            seen[i] += 1;
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        if !d.pairs.is_empty() {
            prop_assert_eq!(d.compliance_hat.unwrap(), d.compute_compliance(&c).unwrap());
        }
    }

    #[test]
    fn wald_and_rank_tests_shift_with_the_effect(n in 10usize..40, seed in any::<u64>(), b in -3.0..3.0f64, beta0 in -1.0..1.0f64) {
        let c = with_noise(&random_cohort(n, 2, seed), seed);
        let d = strengthen(&c, &DistanceSpec::default()).unwrap();
        prop_assume!(d.compute_compliance(&c).unwrap().abs() > 1e-9);
        let shifted: Vec<f64> = c.subjects().iter().map(|s| s.outcome + b * s.d()).collect();
        let c2 = c.with_responses(None, &shifted).unwrap();
        let w1 = wald_estimate(&d, &c, None).unwrap().beta_hat;
        let w2 = wald_estimate(&d, &c2, None).unwrap().beta_hat;
        prop_assert!((w2 - w1 - b).abs() <= 1e-8 * (1.0 + w1.abs() + b.abs()));
        for m in [TestMethod::Wilcoxon, TestMethod::Sign] {
            let p1 = run_test(&pair_stats(&d, &c, beta0).unwrap(), m, Side::TwoSided).p_value;
            let p2 = run_test(&pair_stats(&d, &c2, beta0 + b).unwrap(), m, Side::TwoSided).p_value;
            prop_assert!((0.0..=1.0).contains(&p1));
            prop_assert!((p1 - p2).abs() < 1e-9);
        }
    }

    #[test]
    fn rubin_pool_matches_its_definition(est in prop::collection::vec(-5.0..5.0f64, 2..12), w in 0.01..3.0f64) {
        let k = est.len() as f64;
        let within: Vec<f64> = est.iter().enumerate().map(|(i, _)| w * (1.0 + i as f64 / 10.0)).collect();
        let p = rubin_pool(&est, &within).unwrap();
        let mean = est.iter().sum::<f64>() / k;
        let b = est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
        let wbar = within.iter().sum::<f64>() / k;
        let t = wbar + (1.0 + 1.0 / k) * b;
        prop_assert!((p.total_var - t).abs() <= 1e-12 * t);
        prop_assert!((p.total_var - p.recompute_total()).abs() <= 1e-12 * t);
        if b > 1e-9 {
            let r = wbar / ((1.0 + 1.0 / k) * b);
            let dof = (k - 1.0) * (1.0 + r).powi(2);
            prop_assert!((p.dof.unwrap() - dof).abs() <= 1e-9 * dof);
        }
    }

    #[test]
    fn are_is_the_squared_compliance_ratio(c1 in 0.05..0.95f64, c2 in 0.05..0.95f64, a1 in 0.0..1.0f64, a2 in 0.0..1.0f64, sign in any::<bool>()) {
        let m1 = ComplianceMix::new(c1, a1 * (1.0 - c1)).unwrap();
        let m2 = ComplianceMix::new(c2, a2 * (1.0 - c2)).unwrap();
        let test = if sign { TestMethod::Sign } else { TestMethod::Wilcoxon };
        let r = are(&m1, &m2, test).unwrap();
        let oracle = (c2 / c1).powi(2);
        prop_assert!((r - oracle).abs() <= 1e-6 * oracle, "{r} vs {oracle}");
    }

    #[test]
    fn debias_frontier_is_monotone_and_exact(n in 4usize..9, seed in any::<u64>(), d in 0.02..0.5f64, phi1 in 0.0..4.0f64, step in 0.0..3.0f64) {
        let c = random_cohort(n, 2, seed);
        let deltas = [d, d * 1.5];
        let mut last = usize::MAX;
        for phi in [phi1, phi1 + step] {
            let inst = build_mip(&c, &deltas, phi).unwrap();
            let sol = solve_mip(&inst, &DebiasConfig { solver: Solver::ExactBnb, ..DebiasConfig::with_phi(phi) }).unwrap();
            prop_assert_eq!(sol.pairs.len(), enumerate(&c, &deltas, phi));
            prop_assert!(check_constraints(&c, &sol.pairs, &deltas, phi).is_empty());
            prop_assert!(sol.pairs.len() <= last);
            last = sol.pairs.len();
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sensitivity_interval_grows_with_the_zone(seed in 0u64..1000, inner in 0.05..0.5f64, extra in 0.01..0.5f64) {
        let c = generate_partially_linear_cohort(&PartiallyLinearSpec::sin_log_sin(0.5, 1.0), 120, seed).unwrap();
        let d = strengthen(&c, &DistanceSpec::default().with_encouragement(Encouragement::HigherDose)).unwrap();
        let opts = SensitivityOptions { k: 5, seed, ..Default::default() };
        let outer = inner + extra;
        let small = SensitivityZone::new(vec![-inner, 0.0, inner], vec![0.01], vec![1.0]).unwrap();
        let large = SensitivityZone::new(vec![-outer, -inner, 0.0, inner, outer], vec![0.01], vec![1.0]).unwrap();
        let a = sensitivity_interval(&d, &c, &small, &opts).unwrap();
        let b = sensitivity_interval(&d, &c, &large, &opts).unwrap();
        prop_assert!(b.lower <= a.lower && a.upper <= b.upper);
    }
}
