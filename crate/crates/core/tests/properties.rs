//! Property-based invariants over randomized inputs.

mod common;

use multiview::coupling::{coupling_from_joint, sinkhorn_project, OptimizerConfig};
use multiview::graph::{align_views, AdjacencyView};
use multiview::inference::{compute_pvalue, PValueRule};
use multiview::pseudolik::{
    block_counts, fit_multinomial_mixture, multinomial_log_pmf, EmConfig, MixtureInit,
};
use ndarray::Array2;
use proptest::prelude::*;

/// Exact multinomial log pmf via integer factorials (d stays small enough
/// for u128 arithmetic to be exact).
fn factorial_oracle(b: &[u32], eta: &[f64]) -> f64 {
    let d: u32 = b.iter().sum();
    let fact = |x: u32| -> u128 { (1..=x as u128).product::<u128>().max(1) };
    let mut coefficient = fact(d) as f64;
    for &bm in b {
        coefficient /= fact(bm) as f64;
    }
    let mut log_prob = coefficient.ln();
    for (&bm, &em) in b.iter().zip(eta) {
        if bm > 0 {
            log_prob += bm as f64 * em.ln();
        }
    }
    log_prob
}

fn label_pairs(max_label: usize, len: usize) -> impl Strategy<Value = Vec<(String, String)>> {
    prop::collection::vec((0..max_label, 0..max_label), 1..len).prop_map(|raw| {
        raw.into_iter()
            .map(|(a, b)| (format!("n{a}"), format!("n{b}")))
            .collect()
    })
}

proptest! {
    #[test]
    fn align_views_is_input_order_independent(
        pairs1 in label_pairs(12, 40),
        pairs2 in label_pairs(12, 40),
        seed in 0u64..1000,
    ) {
        let mut shuffled1 = pairs1.clone();
        let mut shuffled2 = pairs2.clone();
        use rand::seq::SliceRandom;
        let mut rng = multiview::rng::derived_rng(seed, 0);
        shuffled1.shuffle(&mut rng);
        shuffled2.shuffle(&mut rng);
        let a = align_views(&pairs1, &pairs2);
        let b = align_views(&shuffled1, &shuffled2);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.view1, b.view1);
                prop_assert_eq!(a.view2, b.view2);
                prop_assert_eq!(a.universe, b.universe);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "one ordering failed, the other succeeded"),
        }
    }

    #[test]
    fn aligned_views_have_no_self_loops_and_consistent_degrees(
        pairs1 in label_pairs(10, 30),
        pairs2 in label_pairs(10, 30),
    ) {
        if let Ok(aligned) = align_views(&pairs1, &pairs2) {
            for view in [&aligned.view1, &aligned.view2] {
                for &(i, j) in view.edges() {
                    prop_assert!(i < j);
                }
                let total: u32 = view.degrees().iter().sum();
                prop_assert_eq!(total as usize, 2 * view.edge_count());
            }
        }
    }

    #[test]
    fn multinomial_log_pmf_matches_factorial_oracle(
        b in prop::collection::vec(0u32..8, 1..5),
        raw_eta in prop::collection::vec(0.05f64..1.0, 1..5),
    ) {
        prop_assume!(b.len() == raw_eta.len());
        let total: f64 = raw_eta.iter().sum();
        let eta: Vec<f64> = raw_eta.iter().map(|e| e / total).collect();
        let d: u32 = b.iter().sum();
        let bf: Vec<f64> = b.iter().map(|&x| x as f64).collect();
        let got = multinomial_log_pmf(&bf, d, &eta).unwrap();
        let expected = factorial_oracle(&b, &eta);
        prop_assert!((got - expected).abs() < 1e-10, "{} vs {}", got, expected);
    }

    #[test]
    fn pvalue_formula_is_exactly_the_tie_inclusive_count(
        observed in -5.0f64..5.0,
        perms in prop::collection::vec(-5.0f64..5.0, 1..60),
    ) {
        let p = compute_pvalue(observed, &perms, PValueRule::PlainCount);
        let count = perms.iter().filter(|&&x| observed <= x).count();
        prop_assert!((p * perms.len() as f64 - count as f64).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&p));
        let p1 = compute_pvalue(observed, &perms, PValueRule::AddOne);
        prop_assert!(p1 > 0.0 && p1 <= 1.0);
    }

    #[test]
    fn sinkhorn_reaches_weighted_marginals(
        entries in prop::collection::vec(0.05f64..20.0, 4..=4),
        raw1 in prop::collection::vec(0.1f64..1.0, 2..=2),
        raw2 in prop::collection::vec(0.1f64..1.0, 2..=2),
    ) {
        let o = Array2::from_shape_vec((2, 2), entries).unwrap();
        let s1: f64 = raw1.iter().sum();
        let s2: f64 = raw2.iter().sum();
        let pi1: Vec<f64> = raw1.iter().map(|x| x / s1).collect();
        let pi2: Vec<f64> = raw2.iter().map(|x| x / s2).collect();
        let cfg = OptimizerConfig::default();
        let c = sinkhorn_project(&o, &pi1, &pi2, &cfg).unwrap();
        for k in 0..2 {
            let row: f64 = (0..2).map(|kp| c[[k, kp]] * pi2[kp]).sum();
            prop_assert!((row - 1.0).abs() < 1e-7);
        }
        for kp in 0..2 {
            let col: f64 = (0..2).map(|k| c[[k, kp]] * pi1[k]).sum();
            prop_assert!((col - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn coupling_from_joint_round_trips(
        raw in prop::collection::vec(0.05f64..1.0, 6..=6),
    ) {
        let total: f64 = raw.iter().sum();
        let p = Array2::from_shape_vec((2, 3), raw.iter().map(|x| x / total).collect()).unwrap();
        let cm = coupling_from_joint(&p).unwrap();
        let back = cm.joint();
        for (a, b) in back.iter().zip(p.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!(cm.max_marginal_violation() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn em_responsibilities_are_row_stochastic(
        edges in prop::collection::vec((0usize..12, 0usize..12), 4..40),
        seed in 0u64..100,
    ) {
        let clean: Vec<(usize, usize)> = edges.into_iter().filter(|(a, b)| a != b).collect();
        prop_assume!(!clean.is_empty());
        let view = AdjacencyView::from_edges(12, clean).unwrap();
        let mut rng = multiview::rng::derived_rng(seed, 0);
        use rand::Rng;
        let labels: Vec<usize> = (0..12).map(|_| rng.random_range(0..2)).collect();
        let bc = block_counts(&view, &labels, 2).unwrap();
        let fit = fit_multinomial_mixture(&bc, 2, MixtureInit::Labels(&labels), &EmConfig::default()).unwrap();
        for row in fit.responsibilities.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            for &r in row.iter() {
                prop_assert!(r >= 0.0);
            }
        }
        for w in fit.trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9);
        }
    }
}
