use gxe_robust::data::{kaplan_meier_weights, sort_and_weight, RawObservations};
use gxe_robust::eval::{roc_from_labels, InteractionRanking};
use ndarray::Array2;
use proptest::prelude::*;

/// Product-limit survival curve: weights are its jumps.
fn km_jumps(delta: &[bool]) -> Vec<f64> {
    let n = delta.len();
    let mut s = 1.0;
    delta
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let at_risk = (n - i) as f64;
            let next = if d { s * (1.0 - 1.0 / at_risk) } else { s };
            let jump = s - next;
            s = next;
            jump
        })
        .collect()
}

/// Mann-Whitney estimate with half credit for ties.
fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &a) in scores.iter().enumerate() {
        for (j, &b) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                wins += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
            }
        }
    }
    wins / pairs
}

proptest! {
    #[test]
    fn km_weights_are_survival_jumps(delta in prop::collection::vec(any::<bool>(), 1..60)) {
        let w = kaplan_meier_weights(&delta);
        let oracle = km_jumps(&delta);
        for (a, b) in w.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(*a >= 0.0);
        }
        let total: f64 = w.iter().sum();
        prop_assert!(total <= 1.0 + 1e-12);
        if *delta.last().unwrap() {
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_matches_mann_whitney(
        cells in prop::collection::vec((0u8..6, any::<bool>()), 4..40)
    ) {
        let labels: Vec<bool> = cells.iter().map(|c| c.1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let scores: Vec<f64> = cells.iter().map(|c| c.0 as f64).collect();
        let packed: Vec<[f64; 2]> = scores.iter().map(|&s| [s, 0.0]).collect();
        let ranking = InteractionRanking::from_scores("t", scores.len(), 1, &packed).unwrap();
        let roc = roc_from_labels(&ranking, |g, _| labels[g]).unwrap();
        prop_assert!((roc.auc - mann_whitney(&scores, &labels)).abs() < 1e-12);

        let flipped: Vec<[f64; 2]> = scores.iter().map(|&s| [-s, 0.0]).collect();
        let reversed = InteractionRanking::from_scores("t", scores.len(), 1, &flipped).unwrap();
        let back = roc_from_labels(&reversed, |g, _| labels[g]).unwrap();
        prop_assert!((roc.auc + back.auc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_columns_have_weighted_moments(
        seed in any::<u64>(),
        n in 8usize..40,
        shift in -5.0f64..5.0,
        spread in 0.1f64..10.0,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let raw = RawObservations {
            y: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
            delta: (0..n).map(|i| i == 0 || rng.random_bool(0.7)).collect(),
            x: Array2::from_shape_fn((n, 2), |_| shift + spread * rng.random_range(-1.0..1.0)),
            z: Array2::from_shape_fn((n, 1), |_| rng.random_range(-1.0..1.0)),
        };
        let ds = sort_and_weight(raw).unwrap();
        let design = ds.working_design(0).unwrap();
        let w = design.weights_slice();
        for k in (1..design.dim()).filter(|&k| design.active[k]) {
            let col = design.column(k);
            let mean: f64 = col.iter().zip(w).map(|(u, w)| u * w).sum();
            let sq: f64 = col.iter().zip(w).map(|(u, w)| u * u * w).sum();
            prop_assert!(mean.abs() < 1e-9 * (n as f64));
            prop_assert!((sq - n as f64).abs() < 1e-9 * (n as f64));
        }
        let y = design.y_slice();
        prop_assert!(y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>().abs() < 1e-9);
    }
}
