//! Acceptance harness: one PASS/FAIL line per criterion.
//!
//! Oracle criteria (1, 4, 9, 10, 11) also fail the process; Monte-Carlo
//! criteria only report. Set `NEARFAR_ACCEPTANCE=1,4,9` to run a subset.

mod common;

use std::time::Instant;

use common::{brute_force_matching, enumerate, random_cohort};
use nearfar::debias::{build_mip, check_constraints, solve_mip, DebiasConfig, Solver};
use nearfar::density::ErrorDensity;
use nearfar::dgp::ComplianceMix;
use nearfar::efficiency::{are, psi_sign, psi_wilcoxon, required_sample_size};
use nearfar::inference::TestMethod;
use nearfar::matching::{build_distance_matrix, solve_nonbipartite, DistanceSpec};
use nearfar::presets::{
    audit_preset, run_table5, run_table6, table3_size_scenario, table3_study, NuisanceRule,
    Table2Config, Table5Config, Table6Config, STRENGTH_PAIRS,
};
use nearfar::sensitivity::{
    gamma_model_audit, power_study_with_progress, rubin_pool, PowerRow, PowerScenario,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: u8, name: &str, oracle: bool, out: &Outcome, failures: &mut Vec<u8>) {
    let tag = if out.pass { "PASS" } else { "FAIL" };
    println!("criterion {id:>2} [{tag}] {name}: {}", out.detail);
    if oracle && !out.pass {
        failures.push(id);
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn c1_are() -> Outcome {
    let t = Instant::now();
    let expected_2dp = [1.44, 3.06, 7.11];
    let mut pass = true;
    let mut parts = Vec::new();
    for (&(w, s), &expected) in STRENGTH_PAIRS.iter().zip(&expected_2dp) {
        let mw = ComplianceMix::new(w, 0.0).unwrap();
        let ms = ComplianceMix::new(s, 0.0).unwrap();
        let v = are(&mw, &ms, TestMethod::Wilcoxon).unwrap();
        let oracle = (s * s) / (w * w);
        let rounded = (v * 100.0).round() / 100.0;
        pass &= (v - oracle).abs() <= 1e-10 && rounded == expected;
        parts.push(format!("{v:.6} (oracle {oracle:.6}, 2dp {rounded})"));
    }
    let secs = t.elapsed().as_secs_f64();
    pass &= secs < 1.0;
    Outcome {
        pass,
        detail: format!("{} in {secs:.3}s", parts.join(", ")),
    }
}

/// Approximate Monte-Carlo standard error of `n_weak / n_strong`.
///
/// Power near the target behaves like `Φ(c√n − z_α)`, whose slope in `n` is
/// `φ(z_γ)(z_α + z_γ)/(2n)`; the power SE divided by that slope is the SE of `n`.
fn ratio_se(n_weak: usize, n_strong: usize, cfg: &Table2Config, power: f64) -> f64 {
    let z = Normal::standard();
    let (za, zg) = (z.inverse_cdf(1.0 - cfg.alpha), z.inverse_cdf(power));
    let se_p = (power * (1.0 - power) / cfg.reps as f64).sqrt();
    let rel = se_p * 2.0 / (z.pdf(zg) * (za + zg));
    let r = n_weak as f64 / n_strong as f64;
    r * (2.0 * rel * rel).sqrt()
}

fn c2_c3_table2() -> (Outcome, Outcome) {
    let cfg = Table2Config {
        reps: 5000,
        ..Table2Config::preset()
    };
    let t = Instant::now();
    let size = |iota: f64, rule| {
        required_sample_size(&cfg.request(iota, rule, 0.8).unwrap())
            .unwrap()
            .pairs
    };
    let (w0, s0) = (size(0.5, NuisanceRule::Zero), size(0.6, NuisanceRule::Zero));
    let secs = t.elapsed().as_secs_f64();
    let r0 = w0 as f64 / s0 as f64;
    let pass2 = within(r0, 1.44, 0.15) && within(w0 as f64, 2590.0, 0.08 * 2590.0) && secs < 600.0;
    let c2 = Outcome {
        pass: pass2,
        detail: format!("n(0.5)={w0} n(0.6)={s0} ratio {r0:.3} (target 1.44 +/- 0.15, n within 8% of 2590) in {secs:.0}s"),
    };
    let (w1, s1) = (
        size(0.5, NuisanceRule::HalfRemainder),
        size(0.6, NuisanceRule::HalfRemainder),
    );
    let r1 = w1 as f64 / s1 as f64;
    let band =
        1.96 * (ratio_se(w0, s0, &cfg, 0.8).powi(2) + ratio_se(w1, s1, &cfg, 0.8).powi(2)).sqrt();
    let c3 = Outcome {
        pass: (r1 - r0).abs() < band,
        detail: format!(
            "iota_A=(1-iota_C)/2: n(0.5)={w1} n(0.6)={s1} ratio {r1:.3}; |change| {:.3} vs MC band {band:.3}",
            (r1 - r0).abs()
        ),
    };
    (c2, c3)
}

fn c4_matching() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut with_sinks = 0;
    let mut mismatches = 0;
    for k in 0..200u64 {
        let n = rng.random_range(4..=8usize);
        let sinks = if k % 2 == 0 {
            rng.random_range(0..=(10 - n).min(n - 1))
        } else {
            0
        };
        let cohort = random_cohort(n, 2, 500 + k);
        let spec = DistanceSpec::default()
            .with_caliper(rng.random_range(0.0..4.0))
            .with_sinks(sinks);
        let m = build_distance_matrix(&cohort, &spec).unwrap();
        if m.sinks() > 0 {
            with_sinks += 1;
        }
        let got = solve_nonbipartite(&m, &cohort).unwrap().total_distance;
        let want = brute_force_matching(m.size(), |a, b| m.entry(a, b)).unwrap();
        let err = (got - want).abs() / want.abs().max(1.0);
        worst = worst.max(err);
        if err > 1e-12 {
            mismatches += 1;
        }
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!("200 instances ({with_sinks} with sinks), {mismatches} mismatches, max rel diff {worst:.1e}"),
    }
}

fn fmt_row(r: &PowerRow) -> String {
    format!(
        "{} power {:.3} (bias {:.2}/sd {:.2}, compliance {:.2})",
        r.design, r.power, r.mean_bias, r.mean_sd, r.compliance
    )
}

fn c5_c6_power() -> (Outcome, Outcome) {
    let a = PowerScenario {
        beta: 0.8,
        xi: 1.0,
        delta_sup: 0.5,
        tau: 0.01,
        lambda1: 1.0,
    };
    let b = PowerScenario {
        beta: 4.0,
        xi: 4.0,
        delta_sup: 10.0,
        tau: 0.01,
        lambda1: 6.0,
    };
    let study = table3_study(vec![table3_size_scenario(), a, b], 2000, 7);
    let t = Instant::now();
    let rows = power_study_with_progress(&study, |r| {
        if (r + 1) % 250 == 0 {
            eprintln!(
                "  power study: {} / 2000 reps ({:.0}s)",
                r + 1,
                t.elapsed().as_secs_f64()
            );
        }
    })
    .unwrap();
    let find = |s: &PowerScenario, d: &str| {
        rows.iter()
            .find(|r| {
                r.design == d
                    && r.beta == Some(s.beta)
                    && r.xi == Some(s.xi)
                    && r.lambda1 == s.lambda1
            })
            .unwrap()
            .clone()
    };
    let size = table3_size_scenario();
    let (s0, s1) = (find(&size, "M0"), find(&size, "M1"));
    let c5 = Outcome {
        pass: within(s0.power, 0.053, 0.015) && within(s1.power, 0.054, 0.015),
        detail: format!(
            "M0 {:.3} (0.053 +/- 0.015), M1 {:.3} (0.054 +/- 0.015)",
            s0.power, s1.power
        ),
    };
    let (a0, a1, b0, b1) = (
        find(&a, "M0"),
        find(&a, "M1"),
        find(&b, "M0"),
        find(&b, "M1"),
    );
    let pass = a1.power > a0.power
        && within(a1.power, 0.83, 0.06)
        && within(a0.power, 0.70, 0.06)
        && b0.power > b1.power
        && within(b0.power, 0.67, 0.06)
        && within(b1.power, 0.52, 0.06);
    let c6 = Outcome {
        pass,
        detail: format!(
            "beta 0.8: {} | {} (targets M1 0.83, M0 0.70); beta 4: {} | {} (targets M0 0.67, M1 0.52)",
            fmt_row(&a0),
            fmt_row(&a1),
            fmt_row(&b0),
            fmt_row(&b1)
        ),
    };
    (c5, c6)
}

fn c7_table5() -> Outcome {
    let cfg = Table5Config {
        reps: 2000,
        ..Table5Config::preset()
    };
    let res = run_table5(&cfg).unwrap();
    let targets = [
        ((0.32, 0.37), "[0.9, 1.2]"),
        ((0.50, 0.89), "< 0.5"),
        ((0.50, 0.89), "> 2"),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (r, ((t0, t1), rule)) in res.iter().zip(targets) {
        let d = r.regime.delta_ratio;
        let ok_ratio = match r.model {
            1 => (0.9..=1.2).contains(&d),
            2 => d < 0.5,
            _ => d > 2.0,
        };
        let (c0, c1) = (
            r.regime.columns[0].compliance,
            r.regime.columns[1].compliance,
        );
        let ok = ok_ratio && within(c0, t0, 0.05) && within(c1, t1, 0.05);
        pass &= ok;
        parts.push(format!(
            "model {} Delta {d:.2} ({rule}) compliance ({c0:.2}, {c1:.2}) vs ({t0}, {t1}){}",
            r.model,
            if ok { "" } else { " MISS" }
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn c8_audit() -> Outcome {
    let reqs = audit_preset(200, 3);
    let hi = gamma_model_audit(&reqs[0]).unwrap();
    let lo = gamma_model_audit(&reqs[1]).unwrap();
    let strong = hi.runs.iter().filter(|r| r.p_value < 0.01).count() as f64 / hi.runs.len() as f64;
    let pass = strong >= 0.95
        && hi.min_qualifying_pairs >= 500
        && (0.03..=0.07).contains(&lo.rejection_rate);
    Outcome {
        pass,
        detail: format!(
            "gamma=1: p<0.01 in {:.1}% of runs (min {} qualifying pairs); gamma=0: rejection rate {:.3}",
            100.0 * strong,
            hi.min_qualifying_pairs,
            lo.rejection_rate
        ),
    }
}

fn c9_rubin() -> Outcome {
    let p = rubin_pool(&[1.0, 3.0], &[0.5, 0.5]).unwrap();
    let pass = p.point == 2.0 && p.total_var == 3.5 && p.dof == Some(49.0 / 36.0);
    Outcome {
        pass,
        detail: format!(
            "point {}, total variance {}, dof {:?}",
            p.point, p.total_var, p.dof
        ),
    }
}

fn c10_debias() -> Outcome {
    let (cohort, out) = run_table6(&Table6Config::preset()).unwrap();
    let violations = check_constraints(&cohort, &out.solution.pairs, &out.deltas, out.phi);
    let (c1, c2) = (
        out.stage_one.compliance_hat.unwrap(),
        out.stage_two.compliance_hat.unwrap(),
    );
    let mut agree = 0;
    let total = 60u64;
    for seed in 0..total {
        let n = 4 + (seed as usize % 9);
        let c = random_cohort(n, 2, 9000 + seed);
        let deltas = [0.05 + 0.05 * (seed % 3) as f64, 0.1];
        let phi = 1.0 + (seed % 5) as f64;
        let inst = build_mip(&c, &deltas, phi).unwrap();
        let cfg = DebiasConfig {
            solver: Solver::ExactBnb,
            ..DebiasConfig::with_phi(phi)
        };
        if solve_mip(&inst, &cfg).unwrap().pairs.len() == enumerate(&c, &deltas, phi) {
            agree += 1;
        }
    }
    let pass = violations.is_empty() && c2 > c1 && agree == total;
    Outcome {
        pass,
        detail: format!(
            "200 subjects: {} violations, compliance {c1:.3} -> {c2:.3} with {} -> {} pairs; exact = enumeration on {agree}/{total} instances (L <= 12)",
            violations.len(),
            out.stage_one.n_pairs(),
            out.stage_two.n_pairs()
        ),
    }
}

/// CDF of `ε` and of `ε₁ + ε₂` from closed forms.
type Cdf = Box<dyn Fn(f64) -> f64>;

fn cdfs(density: &ErrorDensity) -> (Cdf, Cdf) {
    match *density {
        ErrorDensity::Normal { sd } => {
            let one = Normal::new(0.0, sd).unwrap();
            let two = Normal::new(0.0, sd * 2f64.sqrt()).unwrap();
            (Box::new(move |x| one.cdf(x)), Box::new(move |x| two.cdf(x)))
        }
        ErrorDensity::Laplace { scale: b } => {
            let one = move |x: f64| {
                if x < 0.0 {
                    0.5 * (x / b).exp()
                } else {
                    1.0 - 0.5 * (-x / b).exp()
                }
            };
            // Survival of the sum at t >= 0 is (2 + t/b) e^{-t/b} / 4.
            let two = move |x: f64| {
                let s = (2.0 + x.abs() / b) * (-x.abs() / b).exp() / 4.0;
                if x < 0.0 {
                    s
                } else {
                    1.0 - s
                }
            };
            (Box::new(one), Box::new(two))
        }
        _ => unreachable!(),
    }
}

/// `P(X > 0)` and `P(X₁ + X₂ > 0)` for the pair statistic at effect `e`.
fn mixture_probabilities(mix: &ComplianceMix, e: f64) -> (f64, f64) {
    let (f1, f2) = cdfs(&mix.error_density);
    // (weight, control mean, d_T, d_C) per class: complier, always, never.
    let classes = [
        (mix.iota_c, mix.mu_c, 1.0, 0.0),
        (mix.iota_a, mix.mu_a, 1.0, 1.0),
        (mix.iota_n, mix.mu_n, 0.0, 0.0),
    ];
    let mut comps = Vec::new();
    for &(we, me, dt, _) in &classes {
        for &(wc, mc, _, dc) in &classes {
            comps.push((we * wc, me - mc + e * (dt - dc)));
        }
    }
    let p1: f64 = comps.iter().map(|&(w, loc)| w * (1.0 - f1(-loc))).sum();
    let mut p2 = 0.0;
    for &(wa, la) in &comps {
        for &(wb, lb) in &comps {
            p2 += wa * wb * (1.0 - f2(-(la + lb)));
        }
    }
    (p1, p2)
}

fn c11_psi() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // Small step: the Laplace density has a kink at 0, so the difference is only O(h) there.
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let c = rng.random_range(0.1..0.9);
        let a = rng.random_range(0.0..(1.0 - c));
        let mus: [f64; 3] = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let width = rng.random_range(0.5..2.0);
        for density in [
            ErrorDensity::Normal { sd: width },
            ErrorDensity::Laplace { scale: width },
        ] {
            let mix = ComplianceMix::new(c, a)
                .unwrap()
                .with_means(mus[0], mus[1], mus[2])
                .with_density(density);
            let (up1, up2) = mixture_probabilities(&mix, h);
            let (dn1, dn2) = mixture_probabilities(&mix, -h);
            let fd_sign = (up1 - dn1) / (2.0 * h);
            let fd_wilc = (up2 - dn2) / (2.0 * h);
            worst = worst.max((psi_sign(&mix).unwrap() - fd_sign).abs());
            worst = worst.max((psi_wilcoxon(&mix).unwrap().value - fd_wilc).abs());
        }
    }
    Outcome {
        pass: worst < 1e-4,
        detail: format!("40 mixtures, max |psi - finite difference| = {worst:.2e}"),
    }
}

fn main() {
    let only: Option<Vec<u8>> = std::env::var("NEARFAR_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let run = |id: u8| only.as_ref().is_none_or(|v| v.contains(&id));
    let mut failures = Vec::new();
    let started = Instant::now();

    if run(1) {
        report(1, "ARE closed form", true, &c1_are(), &mut failures);
    }
    if run(2) || run(3) {
        let (c2, c3) = c2_c3_table2();
        report(2, "sample-size ratio", false, &c2, &mut failures);
        report(3, "nuisance invariance", false, &c3, &mut failures);
    }
    if run(4) {
        report(4, "matching oracle", true, &c4_matching(), &mut failures);
    }
    if run(5) || run(6) {
        let (c5, c6) = c5_c6_power();
        report(5, "sensitivity size", false, &c5, &mut failures);
        report(6, "power reversal", false, &c6, &mut failures);
    }
    if run(7) {
        report(7, "bias regimes", false, &c7_table5(), &mut failures);
    }
    if run(8) {
        report(8, "exclusion audit", false, &c8_audit(), &mut failures);
    }
    if run(9) {
        report(9, "Rubin pooling", true, &c9_rubin(), &mut failures);
    }
    if run(10) {
        report(10, "debiased matching", true, &c10_debias(), &mut failures);
    }
    if run(11) {
        report(
            11,
            "psi finite differences",
            true,
            &c11_psi(),
            &mut failures,
        );
    }
    println!(
        "acceptance finished in {:.0}s",
        started.elapsed().as_secs_f64()
    );
    if !failures.is_empty() {
        eprintln!("oracle criteria failed: {failures:?}");
        std::process::exit(1);
    }
}
