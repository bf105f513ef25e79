//! Helpers shared by the integration suites.

#![allow(dead_code)]

/// Adjusted Rand index between two hard labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let ka = a.iter().max().map_or(0, |&m| m + 1);
    let kb = b.iter().max().map_or(0, |&m| m + 1);
    let mut table = vec![0u64; ka * kb];
    let mut rows = vec![0u64; ka];
    let mut cols = vec![0u64; kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
        rows[x] += 1;
        cols[y] += 1;
    }
    let choose2 = |x: u64| -> f64 { (x * x.saturating_sub(1)) as f64 / 2.0 };
    let sum_ij: f64 = table.iter().map(|&x| choose2(x)).sum();
    let sum_a: f64 = rows.iter().map(|&x| choose2(x)).sum();
    let sum_b: f64 = cols.iter().map(|&x| choose2(x)).sum();
    let total = choose2(n as u64);
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() < 1e-12 {
        return 1.0;
    }
    (sum_ij - expected) / (max_index - expected)
}

/// Two-sided Kolmogorov-Smirnov distance of a sample from Uniform(0, 1).
pub fn ks_distance_uniform(sample: &[f64]) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).expect("finite p-values"));
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let upper = (i as f64 + 1.0) / n - x;
        let lower = x - i as f64 / n;
        d = d.max(upper.max(lower));
    }
    d
}

/// Empirical edge density of an adjacency view.
pub fn edge_density(view: &multiview::graph::AdjacencyView) -> f64 {
    let n = view.n() as f64;
    view.edge_count() as f64 / (n * (n - 1.0) / 2.0)
}

/// Pearson correlation.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    cov / (vx.sqrt() * vy.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ari_is_one_for_identical_partitions_and_low_for_independent() {
        let a: Vec<usize> = (0..40).map(|i| i % 2).collect();
        assert!((adjusted_rand_index(&a, &a) - 1.0).abs() < 1e-12);
        let b: Vec<usize> = (0..40).map(|i| (i / 2) % 2).collect();
        assert!(adjusted_rand_index(&a, &b).abs() < 0.3);
    }
}
