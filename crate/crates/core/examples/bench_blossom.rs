//! Times the blossom solver on dense random instances with and without sinks.

use nearfar::matching::blossom::{min_weight_perfect, min_weight_perfect_with_sinks};
use rand::{Rng, SeedableRng};
use std::time::Instant;

fn main() {
    for &(n, sinks) in &[(1000usize, 0usize), (1000, 500), (400, 0), (400, 200)] {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<(f64, f64, f64)> = (0..n)
            .map(|_| (rng.random(), rng.random(), rng.random::<f64>() * 3.0))
            .collect();
        let mut c = vec![f64::INFINITY; n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let d = (pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2);
                let pen = if (pts[i].2 - pts[j].2).abs() <= 1.0 {
                    3000.0
                } else {
                    0.0
                };
                c[i * n + j] = d + pen;
            }
        }
        let t = Instant::now();
        let r = min_weight_perfect_with_sinks(n, &c, sinks).unwrap();
        let cost: f64 = (0..n)
            .filter(|&i| r[i] < n && r[i] > i)
            .map(|i| c[i * n + r[i]])
            .sum();
        println!("n={n} sinks={sinks} cost={cost:.6} {:?}", t.elapsed());
        if n <= 400 {
            let m = n + sinks;
            let mut full = vec![f64::INFINITY; m * m];
            for i in 0..m {
                for j in 0..m {
                    if i == j || (i >= n && j >= n) {
                        continue;
                    }
                    full[i * m + j] = if i < n && j < n { c[i * n + j] } else { 0.0 };
                }
            }
            let r2 = min_weight_perfect(m, &full).unwrap();
            let cost2: f64 = (0..n)
                .filter(|&i| r2[i] < n && r2[i] > i)
                .map(|i| c[i * n + r2[i]])
                .sum();
            println!("   full cost={cost2:.6}");
        }
    }
}
