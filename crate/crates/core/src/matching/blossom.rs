//! Maximum-weight matching in dense general graphs.
//!
//! Primal-dual Edmonds blossom algorithm on an adjacency matrix with integer
//! weights, O(n³). Dual labels are stored doubled so every slack stays
//! integral. A weight of 0 means "no edge".
//!
//! The solver is used through [`min_weight_perfect`], which maps a
//! minimum-weight perfect matching problem onto a maximum-weight one by
//! complementing weights against a constant large enough that every perfect
//! matching outweighs every imperfect one.

use std::collections::VecDeque;

const NIL: usize = 0;

#[derive(Clone, Copy, Default)]
struct Edge {
    u: u32,
    v: u32,
    w: i64,
}

/// Dense weighted blossom state. Vertices are 1-based internally; blossom
/// ids live in `n+1 ..= 2n`.
struct Blossom {
    n: usize,
    perfect: bool,
    n_x: usize,
    stride: usize,
    g: Vec<Edge>,
    lab: Vec<i64>,
    mate: Vec<usize>,
    slack: Vec<usize>,
    st: Vec<usize>,
    pa: Vec<usize>,
    flower_from: Vec<u32>,
    label: Vec<i8>,
    vis: Vec<u64>,
    vis_stamp: u64,
    flower: Vec<Vec<usize>>,
    queue: VecDeque<usize>,
}

impl Blossom {
    fn new(n: usize) -> Self {
        let size = 2 * n + 1;
        let mut g = vec![Edge::default(); size * size];
        for u in 0..size {
            for v in 0..size {
                g[u * size + v] = Edge {
                    u: u as u32,
                    v: v as u32,
                    w: 0,
                };
            }
        }
        Self {
            n,
            perfect: false,
            n_x: n,
            stride: size,
            g,
            lab: vec![0; size],
            mate: vec![NIL; size],
            slack: vec![NIL; size],
            st: (0..size).map(|x| if x <= n { x } else { NIL }).collect(),
            pa: vec![NIL; size],
            flower_from: vec![0; size * (n + 1)],
            label: vec![-1; size],
            vis: vec![0; size],
            vis_stamp: 0,
            flower: vec![Vec::new(); size],
            queue: VecDeque::new(),
        }
    }

    #[inline]
    fn edge(&self, u: usize, v: usize) -> Edge {
        self.g[u * self.stride + v]
    }

    #[inline]
    fn edge_mut(&mut self, u: usize, v: usize) -> &mut Edge {
        &mut self.g[u * self.stride + v]
    }

    #[inline]
    fn ff(&self, b: usize, x: usize) -> usize {
        self.flower_from[b * (self.n + 1) + x] as usize
    }

    #[inline]
    fn set_ff(&mut self, b: usize, x: usize, val: usize) {
        let n1 = self.n + 1;
        self.flower_from[b * n1 + x] = val as u32;
    }

    #[inline]
    fn e_delta(&self, e: Edge) -> i64 {
        self.lab[e.u as usize] + self.lab[e.v as usize]
            - self.edge(e.u as usize, e.v as usize).w * 2
    }

    #[inline]
    fn update_slack(&mut self, u: usize, x: usize) {
        let s = self.slack[x];
        if s == NIL || self.e_delta(self.edge(u, x)) < self.e_delta(self.edge(s, x)) {
            self.slack[x] = u;
        }
    }

    fn set_slack(&mut self, x: usize) {
        self.slack[x] = NIL;
        for u in 1..=self.n {
            if self.edge(u, x).w > 0 && self.st[u] != x && self.label[self.st[u]] == 0 {
                self.update_slack(u, x);
            }
        }
    }

    fn q_push(&mut self, x: usize) {
        if x <= self.n {
            self.queue.push_back(x);
        } else {
            for i in 0..self.flower[x].len() {
                let y = self.flower[x][i];
                self.q_push(y);
            }
        }
    }

    fn set_st(&mut self, x: usize, b: usize) {
        self.st[x] = b;
        if x > self.n {
            for i in 0..self.flower[x].len() {
                let y = self.flower[x][i];
                self.set_st(y, b);
            }
        }
    }

    fn get_pr(&mut self, b: usize, xr: usize) -> usize {
        let pr = self.flower[b]
            .iter()
            .position(|&x| x == xr)
            .expect("vertex not in blossom");
        if pr % 2 == 1 {
            self.flower[b][1..].reverse();
            self.flower[b].len() - pr
        } else {
            pr
        }
    }

    fn set_match(&mut self, u: usize, v: usize) {
        let e = self.edge(u, v);
        self.mate[u] = e.v as usize;
        if u > self.n {
            let xr = self.ff(u, e.u as usize);
            let pr = self.get_pr(u, xr);
            for i in 0..pr {
                let a = self.flower[u][i];
                let b = self.flower[u][i ^ 1];
                self.set_match(a, b);
            }
            self.set_match(xr, v);
            self.flower[u].rotate_left(pr);
        }
    }

    fn augment(&mut self, mut u: usize, mut v: usize) {
        loop {
            let xnv = self.st[self.mate[u]];
            self.set_match(u, v);
            if xnv == NIL {
                return;
            }
            let next = self.st[self.pa[xnv]];
            self.set_match(xnv, next);
            u = next;
            v = xnv;
        }
    }

    fn get_lca(&mut self, mut u: usize, mut v: usize) -> usize {
        self.vis_stamp += 1;
        let t = self.vis_stamp;
        while u != NIL || v != NIL {
            if u != NIL {
                if self.vis[u] == t {
                    return u;
                }
                self.vis[u] = t;
                u = self.st[self.mate[u]];
                if u != NIL {
                    u = self.st[self.pa[u]];
                }
            }
            std::mem::swap(&mut u, &mut v);
        }
        NIL
    }

    fn add_blossom(&mut self, u: usize, lca: usize, v: usize) {
        let mut b = self.n + 1;
        while b <= self.n_x && self.st[b] != NIL {
            b += 1;
        }
        if b > self.n_x {
            self.n_x += 1;
        }
        self.lab[b] = 0;
        self.label[b] = 0;
        self.mate[b] = self.mate[lca];
        let mut fl = vec![lca];
        let mut x = u;
        while x != lca {
            fl.push(x);
            let y = self.st[self.mate[x]];
            fl.push(y);
            self.q_push(y);
            x = self.st[self.pa[y]];
        }
        fl[1..].reverse();
        let mut x = v;
        while x != lca {
            fl.push(x);
            let y = self.st[self.mate[x]];
            fl.push(y);
            self.q_push(y);
            x = self.st[self.pa[y]];
        }
        self.flower[b] = fl;
        self.set_st(b, b);
        for x in 1..=self.n_x {
            self.edge_mut(b, x).w = 0;
            self.edge_mut(x, b).w = 0;
        }
        for x in 1..=self.n {
            self.set_ff(b, x, 0);
        }
        for i in 0..self.flower[b].len() {
            let xs = self.flower[b][i];
            for x in 1..=self.n_x {
                let bx = self.edge(b, x);
                let xsx = self.edge(xs, x);
                if bx.w == 0 || self.e_delta(xsx) < self.e_delta(bx) {
                    *self.edge_mut(b, x) = xsx;
                    let xxs = self.edge(x, xs);
                    *self.edge_mut(x, b) = xxs;
                }
            }
            for x in 1..=self.n {
                if self.ff(xs, x) != 0 {
                    self.set_ff(b, x, xs);
                }
            }
        }
        self.set_slack(b);
    }

    fn expand_blossom(&mut self, b: usize) {
        for i in 0..self.flower[b].len() {
            let x = self.flower[b][i];
            self.set_st(x, x);
        }
        let root_edge = self.edge(b, self.pa[b]);
        let xr = self.ff(b, root_edge.u as usize);
        let pr = self.get_pr(b, xr);
        let mut i = 0;
        while i < pr {
            let xs = self.flower[b][i];
            let xns = self.flower[b][i + 1];
            self.pa[xs] = self.edge(xns, xs).u as usize;
            self.label[xs] = 1;
            self.label[xns] = 0;
            self.slack[xs] = NIL;
            self.set_slack(xns);
            self.q_push(xns);
            i += 2;
        }
        self.label[xr] = 1;
        self.pa[xr] = self.pa[b];
        for i in (pr + 1)..self.flower[b].len() {
            let xs = self.flower[b][i];
            self.label[xs] = -1;
            self.set_slack(xs);
        }
        self.st[b] = NIL;
    }

    fn on_found_edge(&mut self, e: Edge) -> bool {
        let u = self.st[e.u as usize];
        let v = self.st[e.v as usize];
        if self.label[v] == -1 {
            self.pa[v] = e.u as usize;
            self.label[v] = 1;
            let nu = self.st[self.mate[v]];
            self.slack[v] = NIL;
            self.slack[nu] = NIL;
            self.label[nu] = 0;
            self.q_push(nu);
        } else if self.label[v] == 0 {
            let lca = self.get_lca(u, v);
            if lca == NIL {
                self.augment(u, v);
                self.augment(v, u);
                return true;
            }
            self.add_blossom(u, lca, v);
        }
        false
    }

    fn augment_once(&mut self) -> bool {
        for x in 1..=self.n_x {
            self.label[x] = -1;
            self.slack[x] = NIL;
        }
        self.queue.clear();
        for x in 1..=self.n_x {
            if self.st[x] == x && self.mate[x] == NIL {
                self.pa[x] = NIL;
                self.label[x] = 0;
                self.q_push(x);
            }
        }
        if self.queue.is_empty() {
            return false;
        }
        loop {
            while let Some(u) = self.queue.pop_front() {
                if self.label[self.st[u]] == 1 {
                    continue;
                }
                for v in 1..=self.n {
                    let e = self.edge(u, v);
                    if e.w > 0 && self.st[u] != self.st[v] {
                        if self.e_delta(e) == 0 {
                            if self.on_found_edge(e) {
                                return true;
                            }
                        } else {
                            let sv = self.st[v];
                            self.update_slack(u, sv);
                        }
                    }
                }
            }
            let mut d = i64::MAX;
            for b in (self.n + 1)..=self.n_x {
                if self.st[b] == b && self.label[b] == 1 {
                    d = d.min(self.lab[b] / 2);
                }
            }
            for x in 1..=self.n_x {
                if self.st[x] == x && self.slack[x] != NIL {
                    let delta = self.e_delta(self.edge(self.slack[x], x));
                    if self.label[x] == -1 {
                        d = d.min(delta);
                    } else if self.label[x] == 0 {
                        d = d.min(delta / 2);
                    }
                }
            }
            if d == i64::MAX {
                return false;
            }
            for u in 1..=self.n {
                match self.label[self.st[u]] {
                    0 => {
                        if !self.perfect && self.lab[u] <= d {
                            return false;
                        }
                        self.lab[u] -= d;
                    }
                    1 => self.lab[u] += d,
                    _ => {}
                }
            }
            for b in (self.n + 1)..=self.n_x {
                if self.st[b] == b {
                    match self.label[b] {
                        0 => self.lab[b] += d * 2,
                        1 => self.lab[b] -= d * 2,
                        _ => {}
                    }
                }
            }
            self.queue.clear();
            for x in 1..=self.n_x {
                let s = self.slack[x];
                if self.st[x] == x && s != NIL && self.st[s] != x {
                    let e = self.edge(s, x);
                    if self.e_delta(e) == 0 && self.on_found_edge(e) {
                        return true;
                    }
                }
            }
            for b in (self.n + 1)..=self.n_x {
                if self.st[b] == b && self.label[b] == 1 && self.lab[b] == 0 {
                    self.expand_blossom(b);
                }
            }
        }
    }

    fn init_flowers(&mut self) {
        let n = self.n;
        for u in 1..=n {
            for v in 1..=n {
                self.set_ff(u, v, if u == v { u } else { 0 });
            }
        }
    }

    fn solve(&mut self) {
        self.init_flowers();
        let mut w_max = 0;
        for u in 1..=self.n {
            for v in 1..=self.n {
                w_max = w_max.max(self.edge(u, v).w);
            }
        }
        for u in 1..=self.n {
            self.lab[u] = w_max;
        }
        while self.augment_once() {}
    }

    /// Runs from a dual-feasible start: `labels` satisfy the edge constraints
    /// and `mates` lists disjoint tight edges (0-based).
    fn solve_from(&mut self, labels: &[i64], mates: &[(usize, usize)]) {
        self.init_flowers();
        for (u, &l) in labels.iter().enumerate() {
            self.lab[u + 1] = l;
        }
        for &(a, b) in mates {
            self.mate[a + 1] = b + 1;
            self.mate[b + 1] = a + 1;
        }
        while self.augment_once() {}
    }
}

/// Maximum-weight matching on a dense symmetric weight matrix.
///
/// `weights[i * n + j]` is the weight of edge `{i, j}`; zero or negative
/// entries are treated as absent. Returns `mate[i] = Some(j)` for matched
/// vertices.
pub fn max_weight_matching(n: usize, weights: &[i64]) -> Vec<Option<usize>> {
    assert_eq!(weights.len(), n * n, "weight matrix must be n x n");
    if n == 0 {
        return Vec::new();
    }
    let mut bl = Blossom::new(n);
    for i in 0..n {
        for j in 0..n {
            if i != j && weights[i * n + j] > 0 {
                bl.edge_mut(i + 1, j + 1).w = weights[i * n + j];
            }
        }
    }
    bl.solve();
    bl.mates()
}

impl Blossom {
    fn mates(&self) -> Vec<Option<usize>> {
        (1..=self.n)
            .map(|u| match self.mate[u] {
                NIL => None,
                v => Some(v - 1),
            })
            .collect()
    }
}

/// Largest quantized cost.
const MAX_QUANTUM: i64 = 1 << 44;

fn quantize(n: usize, costs: &[f64], total: usize) -> (Vec<Option<i64>>, i64) {
    let max_cost = costs
        .iter()
        .filter(|c| c.is_finite())
        .fold(0.0_f64, |m, &c| m.max(c.abs()));
    let q_max = ((1_i64 << 58) / total as i64).min(MAX_QUANTUM);
    let scale = if max_cost > 0.0 {
        q_max as f64 / max_cost
    } else {
        0.0
    };
    let quantized = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            let c = costs[k];
            (i != j && c.is_finite()).then(|| (c * scale).round() as i64)
        })
        .collect();
    (quantized, q_max)
}

/// Pairs along each cycle of a permutation; odd cycles leave one vertex out.
fn cycle_pairs(perm: &[usize]) -> Vec<(usize, usize)> {
    let n = perm.len();
    let mut mates = Vec::with_capacity(n / 2);
    let mut seen = vec![false; n];
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut x = start;
        while !seen[x] {
            seen[x] = true;
            cycle.push(x);
            x = perm[x];
        }
        for pair in cycle.chunks_exact(2) {
            mates.push((pair[0], pair[1]));
        }
    }
    mates
}

/// Minimum-weight perfect matching on a dense symmetric cost matrix.
///
/// `costs[i * n + j]` is the cost of pairing `i` with `j`; non-finite
/// entries forbid the pair. Costs are quantized to integers on a grid of
/// `max_cost / 2^44` (coarser for very large `n`), so the result is optimal
/// up to that resolution. Returns `None` when no perfect matching over
/// finite edges exists.
///
/// The search is seeded from the optimal fractional matching obtained from
/// the bipartite assignment relaxation; only its odd cycles need blossom
/// augmentation.
pub fn min_weight_perfect(n: usize, costs: &[f64]) -> Option<Vec<usize>> {
    min_weight_perfect_with_sinks(n, costs, 0)
}

/// Minimum-weight perfect matching of `n` subjects plus `sinks` extra nodes
/// that pair with any subject at zero cost and never with each other.
///
/// Indices `n..n + sinks` in the result are sinks. Equivalent to
/// [`min_weight_perfect`] on the augmented `(n + sinks)`-square matrix, but
/// the relaxation is solved on the subject block only.
pub fn min_weight_perfect_with_sinks(n: usize, costs: &[f64], sinks: usize) -> Option<Vec<usize>> {
    assert_eq!(costs.len(), n * n, "cost matrix must be n x n");
    let total = n + sinks;
    if total % 2 == 1 || sinks > n {
        return None;
    }
    if total == 0 {
        return Some(Vec::new());
    }
    let (quantized, q_max) = quantize(n, costs, total);
    // Weights 2·(C − q) stay positive and even; even weights keep every dual
    // update integral.
    let big_c = q_max + 1;
    let mut bl = Blossom::new(total);
    bl.perfect = true;
    for i in 0..n {
        for j in 0..n {
            if let Some(q) = quantized[i * n + j] {
                bl.edge_mut(i + 1, j + 1).w = 2 * (big_c - q);
            }
        }
        for s in n..total {
            bl.edge_mut(i + 1, s + 1).w = 2 * big_c;
            bl.edge_mut(s + 1, i + 1).w = 2 * big_c;
        }
    }

    let warm = if sinks == 0 {
        super::assignment::solve(n, &quantized)
    } else {
        let mut full = vec![None; total * total];
        for i in 0..n {
            full[i * total..i * total + n].copy_from_slice(&quantized[i * n..(i + 1) * n]);
            for s in n..total {
                full[i * total + s] = Some(0);
                full[s * total + i] = Some(0);
            }
        }
        super::assignment::solve(total, &full)
    };
    let (mut labels, mates) = match warm {
        Some(relax) => {
            let labels: Vec<i64> = (0..total)
                .map(|i| 2 * big_c - 2 * (relax.u[i] + relax.v[i]))
                .collect();
            (labels, cycle_pairs(&relax.perm))
        }
        None if sinks == 0 => return None,
        None => {
            let w_max = 2 * big_c;
            (vec![w_max; n], Vec::new())
        }
    };
    if sinks > 0 && labels.len() == n {
        let min_lab = labels.iter().copied().min().unwrap_or(0);
        labels.extend(std::iter::repeat_n(4 * big_c - min_lab, sinks));
    }
    bl.solve_from(&labels, &mates);
    bl.mates().into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_min(n: usize, costs: &[f64]) -> Option<f64> {
        fn rec(n: usize, costs: &[f64], used: &mut Vec<bool>) -> Option<f64> {
            let first = match used.iter().position(|&u| !u) {
                Some(f) => f,
                None => return Some(0.0),
            };
            used[first] = true;
            let mut best: Option<f64> = None;
            for j in (first + 1)..n {
                if used[j] || !costs[first * n + j].is_finite() {
                    continue;
                }
                used[j] = true;
                if let Some(rest) = rec(n, costs, used) {
                    let total = rest + costs[first * n + j];
                    best = Some(best.map_or(total, |b: f64| b.min(total)));
                }
                used[j] = false;
            }
            used[first] = false;
            best
        }
        rec(n, costs, &mut vec![false; n])
    }

    #[test]
    fn four_node_cheap_pairs() {
        let mut c = vec![10.0; 16];
        c[1] = 1.0;
        c[4] = 1.0;
        c[2 * 4 + 3] = 1.0;
        c[3 * 4 + 2] = 1.0;
        let mate = min_weight_perfect(4, &c).unwrap();
        assert_eq!(mate, vec![1, 0, 3, 2]);
    }

    #[test]
    fn odd_order_is_infeasible() {
        assert!(min_weight_perfect(3, &[0.0; 9]).is_none());
    }

    #[test]
    fn forbidden_edges_block_perfect_matching() {
        let inf = f64::INFINITY;
        // node 3 can only pair with nothing
        let c = vec![
            inf, 1.0, 1.0, inf, //
            1.0, inf, 1.0, inf, //
            1.0, 1.0, inf, inf, //
            inf, inf, inf, inf,
        ];
        assert!(min_weight_perfect(4, &c).is_none());
    }

    #[test]
    fn random_instances_match_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..300 {
            let n = 2 * rng.random_range(1..=5);
            let mut c = vec![f64::INFINITY; n * n];
            for i in 0..n {
                for j in (i + 1)..n {
                    let w = if trial % 3 == 0 {
                        rng.random_range(0..4) as f64
                    } else {
                        rng.random::<f64>() * 10.0
                    };
                    c[i * n + j] = w;
                    c[j * n + i] = w;
                }
            }
            let mate = min_weight_perfect(n, &c).unwrap();
            let total: f64 = (0..n)
                .filter(|&i| mate[i] > i)
                .map(|i| c[i * n + mate[i]])
                .sum();
            let best = brute_force_min(n, &c).unwrap();
            assert!(
                (total - best).abs() <= 1e-12 * (1.0 + best),
                "trial {trial}: {total} vs {best}"
            );
        }
    }

    fn perfect_cost(n: usize, c: &[f64], mate: &[usize]) -> f64 {
        (0..n)
            .filter(|&i| mate[i] > i)
            .map(|i| c[i * n + mate[i]])
            .sum()
    }

    #[test]
    fn sink_entry_point_matches_augmented_matrix() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.random_range(2..=8);
            let sinks = rng.random_range(0..=n);
            if (n + sinks) % 2 == 1 {
                continue;
            }
            let mut c = vec![f64::INFINITY; n * n];
            for i in 0..n {
                for j in (i + 1)..n {
                    let w = rng.random_range(0..20) as f64
                        + if rng.random_bool(0.3) { 1000.0 } else { 0.0 };
                    c[i * n + j] = w;
                    c[j * n + i] = w;
                }
            }
            let m = n + sinks;
            let mut full = vec![f64::INFINITY; m * m];
            for i in 0..m {
                for j in 0..m {
                    if i != j && (i < n || j < n) {
                        full[i * m + j] = if i < n && j < n { c[i * n + j] } else { 0.0 };
                    }
                }
            }
            let mate = min_weight_perfect_with_sinks(n, &c, sinks).unwrap();
            assert_eq!(
                perfect_cost(m, &full, &mate),
                brute_force_min(m, &full).unwrap()
            );
        }
    }

    #[test]
    fn seeded_solver_agrees_with_plain_blossom_on_larger_graphs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let n = 2 * rng.random_range(10..=30);
            let mut c = vec![f64::INFINITY; n * n];
            let mut w = vec![0_i64; n * n];
            for i in 0..n {
                for j in (i + 1)..n {
                    let q = rng.random_range(0..1000_i64);
                    c[i * n + j] = q as f64;
                    c[j * n + i] = q as f64;
                    // complement so every perfect matching beats imperfect ones
                    w[i * n + j] = 1_000_000 - q;
                    w[j * n + i] = 1_000_000 - q;
                }
            }
            let seeded = min_weight_perfect(n, &c).unwrap();
            let plain: Vec<usize> = max_weight_matching(n, &w)
                .into_iter()
                .map(|m| m.unwrap())
                .collect();
            assert_eq!(perfect_cost(n, &c, &seeded), perfect_cost(n, &c, &plain));
        }
    }
}
