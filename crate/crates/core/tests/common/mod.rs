//! Oracles shared by the integration test targets.
#![allow(dead_code)]

use nearfar::cohort::{Cohort, Provenance, Subject};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_cohort(n: usize, p: usize, seed: u64) -> Cohort {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subjects = (0..n)
        .map(|i| Subject {
            id: format!("s{i:02}"),
            dose: rng.random_range(0.0..10.0),
            treatment: rng.random_bool(0.5),
            outcome: 0.0,
            covariates: (0..p).map(|_| rng.random_range(-1.0..1.0)).collect(),
            latent_u: None,
            latent_class: None,
            potential_outcomes: None,
        })
        .collect();
    let names = (0..p).map(|j| format!("x{}", j + 1)).collect();
    Cohort::new(
        subjects,
        names,
        Provenance::Derived {
            note: "test".into(),
        },
    )
    .unwrap()
}

/// Feasibility straight from the definitions, sharing nothing with the solver.
pub fn oracle_feasible(c: &Cohort, pairs: &[(usize, usize)], deltas: &[f64], phi: f64) -> bool {
    if pairs.is_empty() {
        return true;
    }
    let i = pairs.len() as f64;
    let tol = 1e-9 * 10.0 * c.len() as f64;
    for (j, d) in deltas.iter().enumerate() {
        let mut near = 0.0;
        let mut far = 0.0;
        for &(a, b) in pairs {
            let (lo, hi) = if c.subject(a).dose <= c.subject(b).dose {
                (a, b)
            } else {
                (b, a)
            };
            near += c.subject(lo).covariates[j];
            far += c.subject(hi).covariates[j];
        }
        if (near - far).abs() > d * i + tol {
            return false;
        }
    }
    let gap: f64 = pairs
        .iter()
        .map(|&(a, b)| (c.subject(a).dose - c.subject(b).dose).abs())
        .sum();
    gap >= phi * i - tol
}

/// Largest feasible pair count over every partial pairing.
pub fn enumerate(c: &Cohort, deltas: &[f64], phi: f64) -> usize {
    fn rec(
        c: &Cohort,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        d: &[f64],
        phi: f64,
        best: &mut usize,
    ) {
        let Some(s) = used.iter().position(|u| !u) else {
            if cur.len() > *best && oracle_feasible(c, cur, d, phi) {
                *best = cur.len();
            }
            return;
        };
        used[s] = true;
        for m in s + 1..used.len() {
            if !used[m] {
                used[m] = true;
                cur.push((s, m));
                rec(c, used, cur, d, phi, best);
                cur.pop();
                used[m] = false;
            }
        }
        rec(c, used, cur, d, phi, best);
        used[s] = false;
    }
    let mut best = 0;
    rec(
        c,
        &mut vec![false; c.len()],
        &mut Vec::new(),
        deltas,
        phi,
        &mut best,
    );
    best
}

/// Minimum total weight of a perfect matching on a dense matrix, by exhaustion.
pub fn brute_force_matching(n: usize, w: impl Fn(usize, usize) -> f64) -> Option<f64> {
    fn rec(used: &mut Vec<bool>, w: &dyn Fn(usize, usize) -> f64) -> Option<f64> {
        let Some(first) = used.iter().position(|u| !u) else {
            return Some(0.0);
        };
        used[first] = true;
        let mut best: Option<f64> = None;
        for j in first + 1..used.len() {
            let c = w(first, j);
            if used[j] || !c.is_finite() {
                continue;
            }
            used[j] = true;
            if let Some(rest) = rec(used, w) {
                best = Some(best.map_or(rest + c, |b| b.min(rest + c)));
            }
            used[j] = false;
        }
        used[first] = false;
        best
    }
    rec(&mut vec![false; n], &w)
}
