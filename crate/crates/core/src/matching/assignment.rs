//! Dense linear assignment by shortest augmenting paths with potentials.

/// Optimal assignment for an `n x n` integer cost matrix.
///
/// `None` entries are forbidden. Returns the row-to-column permutation and
/// dual potentials `(u, v)` with `u[i] + v[j] <= cost[i][j]` on every allowed
/// entry and equality on assigned ones, or `None` when every complete
/// assignment uses a forbidden entry.
pub(crate) struct Assignment {
    pub perm: Vec<usize>,
    pub u: Vec<i64>,
    pub v: Vec<i64>,
}

const FORBIDDEN: i64 = i64::MAX / 4;

// Indices are 1-based with a virtual root, so range loops read best.
#[allow(clippy::needless_range_loop)]
pub(crate) fn solve(n: usize, cost: &[Option<i64>]) -> Option<Assignment> {
    debug_assert_eq!(cost.len(), n * n);
    let a: Vec<i64> = cost.iter().map(|c| c.unwrap_or(FORBIDDEN)).collect();
    let inf = i64::MAX;
    let mut u = vec![0_i64; n + 1];
    let mut v = vec![0_i64; n + 1];
    // p[j]: row (1-based) assigned to column j; column 0 is a virtual root.
    let mut p = vec![0_usize; n + 1];
    let mut way = vec![0_usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];

    // Column reduction with greedy assignment of each column to its cheapest
    // free row.
    let mut row_taken = vec![false; n + 1];
    for j in 1..=n {
        let (mut best, mut arg) = (inf, 0);
        for i in 1..=n {
            let c = a[(i - 1) * n + j - 1];
            if c < best || (c == best && row_taken[arg] && !row_taken[i]) {
                best = c;
                arg = i;
            }
        }
        v[j] = best;
        if !row_taken[arg] && best < FORBIDDEN / 2 {
            row_taken[arg] = true;
            p[j] = arg;
        }
    }
    for i in 1..=n {
        if !row_taken[i] {
            let row = &a[(i - 1) * n..i * n];
            u[i] = (1..=n).map(|j| row[j - 1] - v[j]).min().unwrap_or(0);
        }
    }

    for i in 1..=n {
        if row_taken[i] {
            continue;
        }
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = &a[(i0 - 1) * n..i0 * n];
            let ui0 = u[i0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - ui0 - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    // Prefer free columns on ties so the search stops early.
                    if minv[j] < delta || (minv[j] == delta && p[j] == 0 && p[j1] != 0) {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            if delta >= FORBIDDEN / 2 {
                return None;
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    if (0..n).any(|i| cost[i * n + perm[i]].is_none()) {
        return None;
    }
    Some(Assignment {
        perm,
        u: u[1..].to_vec(),
        v: v[1..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_by_three() {
        let c = [4, 1, 3, 2, 0, 5, 3, 2, 2].map(Some);
        let a = solve(3, &c).unwrap();
        let total: i64 = (0..3).map(|i| c[i * 3 + a.perm[i]].unwrap()).sum();
        assert_eq!(total, 5);
        for i in 0..3 {
            for j in 0..3 {
                assert!(a.u[i] + a.v[j] <= c[i * 3 + j].unwrap());
            }
            assert_eq!(a.u[i] + a.v[a.perm[i]], c[i * 3 + a.perm[i]].unwrap());
        }
    }

    #[test]
    fn forbidden_everywhere_in_a_row() {
        let c = [None, None, Some(1), Some(2)];
        assert!(solve(2, &c).is_none());
    }
}
