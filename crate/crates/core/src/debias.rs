//! Two-step debiased matching.
//!
//! Stage one is an ordinary near/far match whose near-minus-far covariate
//! mean gaps `δ_i` become tolerances. Stage two selects as many disjoint pairs
//! as possible subject to every covariate gap staying within `δ_i` and the
//! mean dose gap reaching `φ`. Within a pair the lower-dose member is "near".

use std::io::Write;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::matching::{encode_encouragement, strengthen, DistanceSpec, MatchedDesign};
use crate::stats;

/// Largest instance the exact solver accepts.
pub const EXACT_CEILING: usize = 60;

/// Orientation-fixed near/far indices: lower dose first.
fn orient(cohort: &Cohort, a: usize, b: usize) -> (usize, usize) {
    if cohort.subject(a).dose <= cohort.subject(b).dose {
        (a, b)
    } else {
        (b, a)
    }
}

/// `|mean_near(X_i) − mean_far(X_i)|` of the stage-one design.
pub fn design_tolerances(cohort: &Cohort, design: &MatchedDesign) -> Result<Vec<f64>> {
    if design.pairs.is_empty() {
        return Err(Error::validation("stage-one design has no pairs"));
    }
    let i = design.pairs.len() as f64;
    Ok((0..cohort.p())
        .map(|j| {
            let s: f64 = design
                .pairs
                .iter()
                .map(|&(a, b)| {
                    let (near, far) = orient(cohort, a, b);
                    cohort.subject(near).covariates[j] - cohort.subject(far).covariates[j]
                })
                .sum();
            (s / i).abs()
        })
        .collect())
}

/// Runs the stage-one match and returns its tolerances.
pub fn stage1_tolerances(cohort: &Cohort, spec: &DistanceSpec) -> Result<Vec<f64>> {
    design_tolerances(cohort, &strengthen(cohort, spec)?)
}

/// Kind of a linear constraint row `Σ_vars c · a ≤ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RowKind {
    /// `Σ a (x_near − x_far − δ_i) ≤ 0`
    BalanceUpper { covariate: usize },
    /// `Σ a (x_far − x_near − δ_i) ≤ 0`
    BalanceLower { covariate: usize },
    /// `Σ a (φ − (z_far − z_near)) ≤ 0`
    Separation,
}

/// The stage-two integer program over binary pair variables `a_lm`, `l < m`.
///
/// Every non-degree row is homogeneous, so a selection is feasible exactly
/// when each row sum over selected pairs is `≤ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MipInstance {
    pub n: usize,
    pub deltas: Vec<f64>,
    pub phi: f64,
    doses: Vec<f64>,
    /// Row-major `n × p`.
    covariates: Vec<f64>,
    p: usize,
    /// Skip variables whose members share a dose.
    pub forbid_dose_ties: bool,
}

pub fn build_mip(cohort: &Cohort, deltas: &[f64], phi: f64) -> Result<MipInstance> {
    if deltas.len() != cohort.p() {
        return Err(Error::validation("one tolerance per covariate is required"));
    }
    if !(phi >= 0.0) || deltas.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::validation("phi and tolerances must be nonnegative"));
    }
    let p = cohort.p();
    Ok(MipInstance {
        n: cohort.len(),
        deltas: deltas.to_vec(),
        phi,
        doses: cohort.doses(),
        covariates: cohort
            .subjects()
            .iter()
            .flat_map(|s| s.covariates.iter().copied())
            .collect(),
        p,
        forbid_dose_ties: true,
    })
}

impl MipInstance {
    pub fn n_variables(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    pub fn n_degree_rows(&self) -> usize {
        self.n
    }

    pub fn row_kinds(&self) -> Vec<RowKind> {
        let mut v: Vec<RowKind> = (0..self.p)
            .flat_map(|j| {
                [
                    RowKind::BalanceUpper { covariate: j },
                    RowKind::BalanceLower { covariate: j },
                ]
            })
            .collect();
        v.push(RowKind::Separation);
        v
    }

    /// Near and far member of variable `(l, m)`.
    pub fn orientation(&self, l: usize, m: usize) -> (usize, usize) {
        if self.doses[l] <= self.doses[m] {
            (l, m)
        } else {
            (m, l)
        }
    }

    pub fn dose_gap(&self, l: usize, m: usize) -> f64 {
        (self.doses[l] - self.doses[m]).abs()
    }

    pub fn allowed(&self, l: usize, m: usize) -> bool {
        l != m && !(self.forbid_dose_ties && self.doses[l] == self.doses[m])
    }

    /// Coefficients of variable `(l, m)` in the rows of [`Self::row_kinds`].
    pub fn coefficients(&self, l: usize, m: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.p + 1);
        self.coefficients_into(l, m, &mut out);
        out
    }

    fn coefficients_into(&self, l: usize, m: usize, out: &mut Vec<f64>) {
        out.clear();
        let (near, far) = self.orientation(l, m);
        for j in 0..self.p {
            let w = self.covariates[near * self.p + j] - self.covariates[far * self.p + j];
            out.push(w - self.deltas[j]);
            out.push(-w - self.deltas[j]);
        }
        out.push(self.phi - (self.doses[far] - self.doses[near]));
    }

    /// Dense constraint matrix (rows × variables) with variables in `(l, m)` lexicographic order.
    pub fn constraint_matrix(&self) -> Vec<Vec<f64>> {
        let rows = 2 * self.p + 1;
        let mut mat = vec![Vec::with_capacity(self.n_variables()); rows];
        for l in 0..self.n {
            for m in l + 1..self.n {
                for (r, c) in self.coefficients(l, m).into_iter().enumerate() {
                    mat[r].push(c);
                }
            }
        }
        mat
    }

    /// Row sums for a selection of pairs; feasible iff all are `≤ tolerance`.
    pub fn row_values(&self, pairs: &[(usize, usize)]) -> Vec<f64> {
        let mut sums = vec![0.0; 2 * self.p + 1];
        let mut buf = Vec::new();
        for &(l, m) in pairs {
            self.coefficients_into(l, m, &mut buf);
            for (s, c) in sums.iter_mut().zip(&buf) {
                *s += c;
            }
        }
        sums
    }

    /// Absolute slack allowed for rounding in row sums.
    pub fn tolerance(&self) -> f64 {
        let scale = self
            .doses
            .iter()
            .chain(&self.covariates)
            .fold(1.0_f64, |m, v| m.max(v.abs()));
        1e-9 * scale * self.n as f64
    }

    pub fn is_feasible(&self, pairs: &[(usize, usize)]) -> bool {
        let tol = self.tolerance();
        let mut seen = vec![false; self.n];
        for &(l, m) in pairs {
            if !self.allowed(l, m) || seen[l] || seen[m] {
                return false;
            }
            seen[l] = true;
            seen[m] = true;
        }
        self.row_values(pairs).iter().all(|&v| v <= tol)
    }

    /// Upper bound on the pair count from the separation row alone: `I`
    /// pairs can reach at most the top-`I` minus bottom-`I` dose sum.
    pub fn separation_bound(&self) -> usize {
        let mut z = self.doses.clone();
        z.sort_by(f64::total_cmp);
        let n = z.len();
        let (mut best, mut total) = (0, 0.0);
        for i in 1..=n / 2 {
            total += z[n - i] - z[i - 1];
            if total >= self.phi * i as f64 - self.tolerance() {
                best = i;
            }
        }
        best
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiTarget {
    Phi(f64),
    /// `φ = k ×` stage-one mean dose gap.
    K(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Exact up to [`EXACT_CEILING`] subjects, local search beyond.
    #[default]
    Auto,
    ExactBnb,
    LocalSearch,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DebiasConfig {
    pub target: PhiTarget,
    #[serde(default)]
    pub solver: Solver,
    /// Seconds.
    #[serde(default = "default_budget")]
    pub time_budget: f64,
    #[serde(default)]
    pub min_pairs: usize,
}

fn default_budget() -> f64 {
    60.0
}

impl DebiasConfig {
    pub fn with_phi(phi: f64) -> Self {
        DebiasConfig {
            target: PhiTarget::Phi(phi),
            solver: Solver::Auto,
            time_budget: default_budget(),
            min_pairs: 0,
        }
    }

    pub fn with_k(k: f64) -> Self {
        DebiasConfig {
            target: PhiTarget::K(k),
            ..Self::with_phi(0.0)
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match self.target {
            PhiTarget::Phi(v) | PhiTarget::K(v) => v,
        };
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::validation(
                "phi and k must be finite and nonnegative",
            ));
        }
        if !(self.time_budget > 0.0) {
            return Err(Error::validation("time budget must be positive"));
        }
        Ok(())
    }
}

/// Solver outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MipSolution {
    /// `(near, far)` index pairs.
    pub pairs: Vec<(usize, usize)>,
    pub total_gap: f64,
    /// Proven optimal pair count.
    pub optimal: bool,
    pub upper_bound: Option<usize>,
    /// `upper_bound − pairs.len()` when a bound is known.
    pub gap: Option<usize>,
    pub solver: Solver,
    pub nodes: u64,
}

/// `(count, total gap, reverse-lexicographic pairs)` ordering of candidates.
fn better(inst: &MipInstance, a: &[(usize, usize)], b: &[(usize, usize)]) -> bool {
    if a.len() != b.len() {
        return a.len() > b.len();
    }
    let ga: f64 = a.iter().map(|&(l, m)| inst.dose_gap(l, m)).sum();
    let gb: f64 = b.iter().map(|&(l, m)| inst.dose_gap(l, m)).sum();
    if (ga - gb).abs() > 1e-12 * (1.0 + ga.abs()) {
        return ga > gb;
    }
    let key = |v: &[(usize, usize)]| {
        let mut k: Vec<(usize, usize)> = v.iter().map(|&(l, m)| (l.min(m), l.max(m))).collect();
        k.sort_unstable();
        k
    };
    key(a) < key(b)
}

/// Solves the instance; the result is always feasible.
pub fn solve_mip(inst: &MipInstance, config: &DebiasConfig) -> Result<MipSolution> {
    config.validate()?;
    solve_with_start(inst, config, &[])
}

fn solve_with_start(
    inst: &MipInstance,
    config: &DebiasConfig,
    warm: &[Vec<(usize, usize)>],
) -> Result<MipSolution> {
    let solver = match config.solver {
        Solver::Auto if inst.n <= EXACT_CEILING => Solver::ExactBnb,
        Solver::Auto => Solver::LocalSearch,
        s => s,
    };
    if solver == Solver::ExactBnb && inst.n > EXACT_CEILING {
        return Err(Error::validation(format!(
            "exact solver accepts at most {EXACT_CEILING} subjects, got {}",
            inst.n
        )));
    }
    let deadline = Instant::now() + Duration::from_secs_f64(config.time_budget);
    let bound = inst.separation_bound();
    let mut sol = match solver {
        Solver::ExactBnb => {
            let mut b = Bnb::new(inst, deadline);
            for w in warm {
                if inst.is_feasible(w) && better(inst, w, &b.best) {
                    b.best = w.clone();
                }
            }
            b.run();
            MipSolution {
                optimal: !b.timed_out,
                pairs: b.best,
                total_gap: 0.0,
                upper_bound: Some(bound),
                gap: None,
                solver,
                nodes: b.nodes,
            }
        }
        _ => {
            let pairs = local_search(inst, warm, deadline);
            MipSolution {
                optimal: pairs.len() == bound,
                pairs,
                total_gap: 0.0,
                upper_bound: Some(bound),
                gap: None,
                solver,
                nodes: 0,
            }
        }
    };
    sol.pairs = sol
        .pairs
        .iter()
        .map(|&(l, m)| inst.orientation(l, m))
        .collect();
    sol.pairs.sort_unstable();
    if sol.optimal {
        sol.upper_bound = Some(sol.pairs.len());
    }
    sol.gap = sol.upper_bound.map(|b| b.saturating_sub(sol.pairs.len()));
    sol.total_gap = sol.pairs.iter().map(|&(l, m)| inst.dose_gap(l, m)).sum();
    if !inst.is_feasible(&sol.pairs) {
        return Err(Error::numerical("solver returned an infeasible selection"));
    }
    if sol.pairs.len() < config.min_pairs {
        return Err(Error::infeasible(format!(
            "best selection has {} pairs, below the floor of {}",
            sol.pairs.len(),
            config.min_pairs
        )));
    }
    Ok(sol)
}

/// Depth-first branch and bound over partial pairings.
struct Bnb<'a> {
    inst: &'a MipInstance,
    /// Per subject: partners sorted by dose gap descending.
    partners: Vec<Vec<usize>>,
    /// Per row: most negative coefficient over all variables (or 0).
    row_min: Vec<f64>,
    tol: f64,
    used: Vec<bool>,
    current: Vec<(usize, usize)>,
    sums: Vec<f64>,
    best: Vec<(usize, usize)>,
    nodes: u64,
    deadline: Instant,
    timed_out: bool,
}

impl<'a> Bnb<'a> {
    fn new(inst: &'a MipInstance, deadline: Instant) -> Self {
        let n = inst.n;
        let rows = 2 * inst.p + 1;
        let mut row_min = vec![0.0_f64; rows];
        let mut partners = vec![Vec::new(); n];
        for (l, list) in partners.iter_mut().enumerate() {
            for m in 0..n {
                if inst.allowed(l, m) {
                    list.push(m);
                    if l < m {
                        for (r, c) in inst.coefficients(l, m).into_iter().enumerate() {
                            row_min[r] = row_min[r].min(c);
                        }
                    }
                }
            }
            list.sort_by(|&a, &b| {
                inst.dose_gap(l, b)
                    .total_cmp(&inst.dose_gap(l, a))
                    .then(a.cmp(&b))
            });
        }
        Bnb {
            inst,
            partners,
            row_min,
            tol: inst.tolerance(),
            used: vec![false; n],
            current: Vec::new(),
            sums: vec![0.0; rows],
            best: Vec::new(),
            nodes: 0,
            deadline,
            timed_out: false,
        }
    }

    fn run(&mut self) {
        self.visit(0, self.inst.n);
    }

    fn visit(&mut self, start: usize, free: usize) {
        self.nodes += 1;
        if self.nodes.is_multiple_of(4096) && Instant::now() > self.deadline {
            self.timed_out = true;
        }
        if self.timed_out {
            return;
        }
        let reachable = self.current.len() + free / 2;
        if reachable < self.best.len() {
            return;
        }
        let extra = (free / 2) as f64;
        if self
            .sums
            .iter()
            .zip(&self.row_min)
            .any(|(s, m)| s + extra * m > self.tol)
        {
            return;
        }
        let Some(s) = (start..self.inst.n).find(|&i| !self.used[i]) else {
            if self.sums.iter().all(|&v| v <= self.tol)
                && better(self.inst, &self.current, &self.best)
            {
                self.best = self.current.clone();
            }
            return;
        };
        self.used[s] = true;
        let coeff_len = self.sums.len();
        let mut buf = Vec::with_capacity(coeff_len);
        for k in 0..self.partners[s].len() {
            let m = self.partners[s][k];
            if self.used[m] {
                continue;
            }
            self.used[m] = true;
            self.inst.coefficients_into(s, m, &mut buf);
            for (x, c) in self.sums.iter_mut().zip(&buf) {
                *x += c;
            }
            self.current.push((s, m));
            self.visit(s + 1, free - 2);
            self.current.pop();
            self.inst.coefficients_into(s, m, &mut buf);
            for (x, c) in self.sums.iter_mut().zip(&buf) {
                *x -= c;
            }
            self.used[m] = false;
        }
        // Leave `s` unmatched.
        self.visit(s + 1, free - 1);
        self.used[s] = false;
    }
}

/// Total positive row excess.
fn violation(sums: &[f64], tol: f64) -> f64 {
    sums.iter().map(|&v| (v - tol).max(0.0)).sum()
}

/// Removes pairs greedily until the selection is feasible.
fn repair(inst: &MipInstance, pairs: &mut Vec<(usize, usize)>) {
    let tol = inst.tolerance();
    let mut sums = inst.row_values(pairs);
    let mut coeffs: Vec<Vec<f64>> = pairs
        .iter()
        .map(|&(l, m)| inst.coefficients(l, m))
        .collect();
    while violation(&sums, tol) > 0.0 {
        let mut best = (f64::INFINITY, 0);
        for (k, c) in coeffs.iter().enumerate() {
            let after: Vec<f64> = sums.iter().zip(c).map(|(s, c)| s - c).collect();
            let v = violation(&after, tol);
            if v < best.0 {
                best = (v, k);
            }
        }
        let k = best.1;
        for (s, c) in sums.iter_mut().zip(&coeffs[k]) {
            *s -= c;
        }
        pairs.swap_remove(k);
        coeffs.swap_remove(k);
    }
}

/// Adds feasible pairs among unmatched subjects, then tries one-out-two-in swaps.
fn augment(inst: &MipInstance, pairs: &mut Vec<(usize, usize)>, deadline: Instant) {
    let tol = inst.tolerance();
    let mut buf = Vec::new();
    loop {
        if Instant::now() > deadline {
            return;
        }
        let mut used = vec![false; inst.n];
        for &(l, m) in pairs.iter() {
            used[l] = true;
            used[m] = true;
        }
        let free: Vec<usize> = (0..inst.n).filter(|&i| !used[i]).collect();
        let sums = inst.row_values(pairs);
        // Best single addition: keep feasibility, maximize the smallest slack.
        let mut best: Option<((usize, usize), f64)> = None;
        for (a, &l) in free.iter().enumerate() {
            for &m in &free[a + 1..] {
                if !inst.allowed(l, m) {
                    continue;
                }
                inst.coefficients_into(l, m, &mut buf);
                let worst = sums
                    .iter()
                    .zip(&buf)
                    .map(|(s, c)| s + c)
                    .fold(f64::NEG_INFINITY, f64::max);
                if worst <= tol && best.is_none_or(|(_, w)| worst < w) {
                    best = Some(((l, m), worst));
                }
            }
        }
        if let Some((pair, _)) = best {
            pairs.push(pair);
            continue;
        }
        if !swap_once(inst, pairs, &free, &sums, deadline) {
            return;
        }
    }
}

/// Replaces one selected pair by two pairs drawn from its members and the
/// free subjects. Returns whether a swap was made.
fn swap_once(
    inst: &MipInstance,
    pairs: &mut Vec<(usize, usize)>,
    free: &[usize],
    sums: &[f64],
    deadline: Instant,
) -> bool {
    let tol = inst.tolerance();
    let mut buf = Vec::new();
    let mut buf2 = Vec::new();
    for k in 0..pairs.len() {
        if Instant::now() > deadline {
            return false;
        }
        let (l0, m0) = pairs[k];
        let c0 = inst.coefficients(l0, m0);
        let base: Vec<f64> = sums.iter().zip(&c0).map(|(s, c)| s - c).collect();
        let mut pool: Vec<usize> = free.to_vec();
        pool.push(l0);
        pool.push(m0);
        // First pair: any allowed pair in the pool whose addition keeps a
        // chance of feasibility; second pair must restore it.
        for (a, &l) in pool.iter().enumerate() {
            for &m in &pool[a + 1..] {
                if !inst.allowed(l, m) {
                    continue;
                }
                inst.coefficients_into(l, m, &mut buf);
                let mid: Vec<f64> = base.iter().zip(&buf).map(|(s, c)| s + c).collect();
                for (b, &l2) in pool.iter().enumerate() {
                    if l2 == l || l2 == m {
                        continue;
                    }
                    for &m2 in &pool[b + 1..] {
                        if m2 == l || m2 == m || !inst.allowed(l2, m2) {
                            continue;
                        }
                        inst.coefficients_into(l2, m2, &mut buf2);
                        if mid.iter().zip(&buf2).all(|(s, c)| s + c <= tol) {
                            pairs.swap_remove(k);
                            pairs.push((l, m));
                            pairs.push((l2, m2));
                            return true;
                        }
                    }
                }
            }
        }
    }
    false
}

fn local_search(
    inst: &MipInstance,
    warm: &[Vec<(usize, usize)>],
    deadline: Instant,
) -> Vec<(usize, usize)> {
    let mut best: Vec<(usize, usize)> = Vec::new();
    let mut starts: Vec<Vec<(usize, usize)>> = warm.to_vec();
    starts.push(Vec::new());
    for mut s in starts {
        s.retain(|&(l, m)| inst.allowed(l, m));
        repair(inst, &mut s);
        augment(inst, &mut s, deadline);
        if better(inst, &s, &best) {
            best = s;
        }
        if Instant::now() > deadline {
            break;
        }
    }
    best
}

/// Independent recomputation of every stage-two constraint from raw data.
///
/// Returns human-readable violations; empty means the design is certified.
pub fn check_constraints(
    cohort: &Cohort,
    pairs: &[(usize, usize)],
    deltas: &[f64],
    phi: f64,
) -> Vec<String> {
    let mut out = Vec::new();
    let mut count = vec![0usize; cohort.len()];
    for &(a, b) in pairs {
        if a >= cohort.len() || b >= cohort.len() || a == b {
            out.push(format!("invalid pair ({a}, {b})"));
            continue;
        }
        count[a] += 1;
        count[b] += 1;
    }
    for (i, &c) in count.iter().enumerate() {
        if c > 1 {
            out.push(format!(
                "subject {} appears in {c} pairs",
                cohort.subject(i).id
            ));
        }
    }
    if !out.is_empty() || pairs.is_empty() {
        return out;
    }
    let i = pairs.len() as f64;
    let scale = cohort
        .subjects()
        .iter()
        .flat_map(|s| s.covariates.iter().copied().chain([s.dose]))
        .fold(1.0_f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * scale * cohort.len() as f64;
    for (j, d) in deltas.iter().enumerate() {
        let gap: f64 = pairs
            .iter()
            .map(|&(a, b)| {
                let (near, far) = orient(cohort, a, b);
                cohort.subject(near).covariates[j] - cohort.subject(far).covariates[j]
            })
            .sum();
        if gap.abs() > d * i + tol {
            out.push(format!(
                "covariate {} mean gap {:.6} exceeds tolerance {:.6}",
                cohort.covariate_names()[j],
                gap.abs() / i,
                d
            ));
        }
    }
    let dose_gap: f64 = pairs
        .iter()
        .map(|&(a, b)| (cohort.subject(a).dose - cohort.subject(b).dose).abs())
        .sum();
    if dose_gap < phi * i - tol {
        out.push(format!(
            "mean dose gap {:.6} is below phi {:.6}",
            dose_gap / i,
            phi
        ));
    }
    out
}

/// One row of the stage comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    /// One value per design column.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageComparison {
    pub designs: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

impl StageComparison {
    /// Columns: `row`, then one per design.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["row".to_string()];
        header.extend(self.designs.iter().cloned());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.label.clone()];
            rec.extend(r.values.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn comparison(cohort: &Cohort, designs: &[(&str, &MatchedDesign)]) -> Result<StageComparison> {
    let mut compliance = Vec::new();
    for (_, d) in designs {
        compliance.push(d.compute_compliance(cohort)?);
    }
    let mut rows = vec![ComparisonRow {
        label: "compliance".into(),
        values: compliance.clone(),
    }];
    for j in 0..cohort.p() {
        let sd = stats::sd(&cohort.covariate(j));
        let name = &cohort.covariate_names()[j];
        let diffs: Vec<f64> = designs
            .iter()
            .map(|(_, d)| {
                let t = design_tolerances(cohort, d).map(|t| t[j]).unwrap_or(0.0);
                if sd > 0.0 {
                    t / sd
                } else {
                    0.0
                }
            })
            .collect();
        let normalized = diffs.iter().zip(&compliance).map(|(d, c)| d / c).collect();
        rows.push(ComparisonRow {
            label: format!("{name}_std_diff"),
            values: diffs,
        });
        rows.push(ComparisonRow {
            label: format!("{name}_normalized"),
            values: normalized,
        });
    }
    rows.push(ComparisonRow {
        label: "pairs".into(),
        values: designs.iter().map(|(_, d)| d.n_pairs() as f64).collect(),
    });
    Ok(StageComparison {
        designs: designs.iter().map(|(n, _)| n.to_string()).collect(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DebiasOutcome {
    pub stage_one: MatchedDesign,
    pub stage_two: MatchedDesign,
    /// Half-sample sink design for comparison.
    pub sink_design: Option<MatchedDesign>,
    pub deltas: Vec<f64>,
    pub phi: f64,
    pub solution: MipSolution,
    pub comparison: StageComparison,
    /// Output of the independent checker; always empty on success.
    pub violations: Vec<String>,
}

/// Stage one with `spec`, then the constrained stage-two selection.
///
/// When `sink_caliper` is given, a half-sample sink design with that caliper
/// is added to the comparison.
pub fn two_step_debias(
    cohort: &Cohort,
    spec: &DistanceSpec,
    config: &DebiasConfig,
    sink_caliper: Option<f64>,
) -> Result<DebiasOutcome> {
    config.validate()?;
    let stage_one = strengthen(cohort, spec)?;
    let deltas = design_tolerances(cohort, &stage_one)?;
    let phi = match config.target {
        PhiTarget::Phi(v) => v,
        PhiTarget::K(k) => k * stage_one.mean_dose_gap(cohort),
    };
    let mut inst = build_mip(cohort, &deltas, phi)?;
    inst.forbid_dose_ties = spec.forbid_dose_ties;
    let mut warm = vec![stage_one.pairs.clone()];
    let sink_design = match sink_caliper {
        Some(lambda) => {
            let sinks = cohort.len() / 2;
            let d = strengthen(cohort, &spec.clone().with_caliper(lambda).with_sinks(sinks))?;
            warm.push(d.pairs.clone());
            Some(d)
        }
        None => None,
    };
    // Extra starts: caliper-at-φ sink designs of decreasing size.
    if inst.n > EXACT_CEILING || config.solver == Solver::LocalSearch {
        for frac in [8, 4, 2] {
            let sinks = cohort.len() / frac;
            if let Ok(d) = strengthen(cohort, &spec.clone().with_caliper(phi).with_sinks(sinks)) {
                warm.push(d.pairs);
            }
        }
    }
    let solution = solve_with_start(&inst, config, &warm)?;
    let violations = check_constraints(cohort, &solution.pairs, &deltas, phi);
    if !violations.is_empty() {
        return Err(Error::numerical(format!(
            "stage-two design failed certification: {}",
            violations.join("; ")
        )));
    }
    if solution.pairs.is_empty() {
        return Err(Error::infeasible("stage two retained no pairs"));
    }
    let raw = MatchedDesign::from_pairs(solution.pairs.clone(), spec.encouragement);
    let stage_two = encode_encouragement(&raw, cohort, spec.forbid_dose_ties)?;
    let mut cols: Vec<(&str, &MatchedDesign)> = vec![("M0", &stage_one)];
    if let Some(d) = &sink_design {
        cols.push(("M1", d));
    }
    cols.push(("two_stage", &stage_two));
    let comparison = comparison(cohort, &cols)?;
    Ok(DebiasOutcome {
        stage_one,
        stage_two,
        sink_design,
        deltas,
        phi,
        solution,
        comparison,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{Provenance, Subject};

    fn toy(doses: &[f64], x: &[f64]) -> Cohort {
        let subjects = doses
            .iter()
            .zip(x)
            .enumerate()
            .map(|(i, (&z, &v))| Subject {
                id: format!("s{i}"),
                dose: z,
                treatment: false,
                outcome: 0.0,
                covariates: vec![v],
                latent_u: None,
                latent_class: None,
                potential_outcomes: None,
            })
            .collect();
        Cohort::new(
            subjects,
            vec!["x1".into()],
            Provenance::Derived { note: "toy".into() },
        )
        .unwrap()
    }

    #[test]
    fn counts_for_four_subjects() {
        let c = toy(&[0.0, 1.0, 2.0, 3.0], &[0.0, 0.1, 0.2, 0.3]);
        let inst = build_mip(&c, &[0.5], 0.0).unwrap();
        assert_eq!(inst.n_variables(), 6);
        assert_eq!(inst.n_degree_rows(), 4);
        assert_eq!(inst.row_kinds().len(), 3);
        assert_eq!(inst.constraint_matrix()[0].len(), 6);
    }

    #[test]
    fn unconstrained_keeps_every_subject() {
        let c = toy(
            &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            &[0.0, 5.0, -3.0, 2.0, 1.0, 9.0],
        );
        let inst = build_mip(&c, &[1e9], 0.0).unwrap();
        let s = solve_mip(&inst, &DebiasConfig::with_phi(0.0)).unwrap();
        assert_eq!(s.pairs.len(), 3);
        assert!(s.optimal);
    }

    #[test]
    fn separation_bound_is_tight_for_sorted_pairing() {
        let c = toy(&[0.0, 1.0, 2.0, 3.0], &[0.0; 4]);
        // Top-2 minus bottom-2: (3 − 0) + (2 − 1) = 4, so φ = 2 admits 2 pairs.
        assert_eq!(build_mip(&c, &[1.0], 2.0).unwrap().separation_bound(), 2);
        assert_eq!(build_mip(&c, &[1.0], 2.5).unwrap().separation_bound(), 1);
    }
}
