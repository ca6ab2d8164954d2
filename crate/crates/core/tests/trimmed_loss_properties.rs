use artl::losses::{artl_value, inner_min_xi, trimmed_loss, v_h_subgradient, v_h_value, TrimSpec};
use proptest::prelude::*;

fn residuals() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, 1..40)
}

fn trims(n: usize) -> Vec<TrimSpec> {
    let mut hs = vec![1, n.div_ceil(2), (9 * n).div_ceil(10), n];
    hs.dedup();
    hs.into_iter().map(|h| TrimSpec::new(h, n).unwrap()).collect()
}

/// Minimum over all size-`h` index subsets of `(1/n) Σ_{i∈I} r_i²`.
fn subset_minimum(r: &[f64], h: usize) -> f64 {
    let n = r.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != h {
            continue;
        }
        let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| r[i] * r[i]).sum();
        best = best.min(s / n as f64);
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn inner_minimum_is_half_the_trimmed_loss(r in residuals()) {
        let n = r.len();
        for trim in trims(n) {
            let (xi, value) = inner_min_xi(&r, trim);
            let half = 0.5 * trimmed_loss(&r, trim);
            prop_assert!((value - half).abs() <= 1e-12 * n as f64);
            let f = artl_value(&r, &xi, trim, 0.0, 0.0);
            prop_assert!((f - half).abs() <= 1e-12 * n as f64 * half.max(1.0));
        }
    }

    #[test]
    fn subgradient_inequality(
        pair in (1usize..30).prop_flat_map(|n| (
            prop::collection::vec(-10.0..10.0f64, n),
            prop::collection::vec(-10.0..10.0f64, n),
            1..=n,
        ))
    ) {
        let (xi, other, h) = pair;
        let trim = TrimSpec::new(h, xi.len()).unwrap();
        let v = v_h_subgradient(&xi, trim);
        let linear: f64 = v.iter().zip(other.iter().zip(&xi)).map(|(g, (a, b))| g * (a - b)).sum();
        prop_assert!(v_h_value(&other, trim) >= v_h_value(&xi, trim) + linear - 1e-12);
    }

    #[test]
    fn trimmed_loss_grows_with_h(r in residuals()) {
        let n = r.len();
        let mut prev = 0.0;
        for h in 1..=n {
            let t = trimmed_loss(&r, TrimSpec::new(h, n).unwrap());
            prop_assert!(t >= prev);
            prev = t;
        }
    }

    #[test]
    fn trimmed_loss_ignores_order(r in residuals(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = r.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        for trim in trims(r.len()) {
            prop_assert_eq!(trimmed_loss(&r, trim), trimmed_loss(&shuffled, trim));
        }
    }

    #[test]
    fn trimmed_loss_is_best_subset(r in prop::collection::vec(-5.0..5.0f64, 1..=8)) {
        let n = r.len();
        for h in 1..=n {
            let trim = TrimSpec::new(h, n).unwrap();
            let brute = subset_minimum(&r, h);
            prop_assert!((trimmed_loss(&r, trim) - brute).abs() <= 1e-12 * brute.max(1.0));
        }
    }
}
