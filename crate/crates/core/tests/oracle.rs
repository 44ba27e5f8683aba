use conelab::combinat::k_transform;
use conelab::oracle::{
    exact_suite, oracle_lp_sum, random_configuration_function, random_ground_set,
    random_pair_function, verify_bernoulli_duality, verify_minlos_1, verify_minlos_2,
    EXACT_TOLERANCE,
};
use conelab::{ConfigurationFunction, FunctionSpec, GroundSet};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn weight(ground: &GroundSet, mask: u64) -> f64 {
    (0..ground.len())
        .filter(|i| mask >> i & 1 == 1)
        .map(|i| ground.weights()[i])
        .product()
}

/// Minlos 1 left side by scanning all mask pairs and discarding overlaps.
fn minlos_1_lhs_by_pairs(
    g: &ConfigurationFunction,
    h: &dyn Fn(&conelab::FiniteConfiguration, &conelab::FiniteConfiguration) -> f64,
    ground: &GroundSet,
) -> f64 {
    let full = 1u64 << ground.len();
    let mut acc = 0.0;
    for a in 0..full {
        for b in 0..full {
            if a & b == 0 {
                acc += weight(ground, a)
                    * weight(ground, b)
                    * g.evaluate(&ground.subset(a | b))
                    * h(&ground.subset(a), &ground.subset(b));
            }
        }
    }
    acc
}

/// Bernoulli duality right side with the K-transform taken pointwise.
fn bernoulli_rhs(g: &ConfigurationFunction, ground: &GroundSet) -> f64 {
    let pi = ground.inclusion().unwrap();
    let n = ground.len();
    (0..1u64 << n)
        .map(|m| {
            let p: f64 = (0..n)
                .map(|i| if m >> i & 1 == 1 { pi[i] } else { 1.0 - pi[i] })
                .product();
            p * k_transform(g, &ground.subset(m)).unwrap()
        })
        .sum()
}

#[test]
fn suite_of_500_instances_passes() {
    let rows = exact_suite(7, 500).unwrap();
    assert_eq!(rows.len(), 1500);
    let worst = rows.iter().map(|r| r.check.abs_diff).fold(0.0, f64::max);
    assert!(rows.iter().all(|r| r.pass), "worst {worst}");
    assert!(worst <= EXACT_TOLERANCE);
}

#[test]
fn suite_is_deterministic() {
    assert_eq!(exact_suite(3, 20).unwrap(), exact_suite(3, 20).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn minlos_1_matches_pair_scan(seed in any::<u64>(), n in 0usize..=7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ground = random_ground_set(&mut rng, n, false);
        let g = random_configuration_function(seed ^ 1);
        let h = random_pair_function(seed ^ 2);
        let check = verify_minlos_1(&g, h.clone(), &ground).unwrap();
        let oracle = minlos_1_lhs_by_pairs(&g, &h, &ground);
        prop_assert!((check.lhs - oracle).abs() <= 1e-12);
        prop_assert!(check.passes(EXACT_TOLERANCE));
    }

    #[test]
    fn bernoulli_matches_pointwise_transform(seed in any::<u64>(), n in 0usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ground = random_ground_set(&mut rng, n, true);
        let g = random_configuration_function(seed ^ 3);
        let check = verify_bernoulli_duality(&g, &ground).unwrap();
        prop_assert!((check.rhs - bernoulli_rhs(&g, &ground)).abs() <= 1e-12);
        prop_assert!(check.passes(EXACT_TOLERANCE));
    }

    #[test]
    fn minlos_2_constant_counts_points(seed in any::<u64>(), n in 0usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ground = random_ground_set(&mut rng, n, false);
        let check = verify_minlos_2(|_, _| 1.0, &ground).unwrap();
        // Σ_η w(η)|η| = Σ_i w_i Π_{j≠i}(1 + w_j)
        let w = ground.weights();
        let expected: f64 = (0..n)
            .map(|i| w[i] * (0..n).filter(|j| *j != i).map(|j| 1.0 + w[j]).product::<f64>())
            .sum();
        prop_assert!((check.lhs - expected).abs() <= 1e-12 * expected.max(1.0));
        prop_assert!(check.passes(EXACT_TOLERANCE));
    }

    #[test]
    fn coherent_lp_sum_is_a_product(seed in any::<u64>(), n in 0usize..=12, c in -1.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ground = random_ground_set(&mut rng, n, false);
        let f = FunctionSpec::LinearMark(vec![c]);
        let sum = oracle_lp_sum(&ConfigurationFunction::coherent(f.clone()), &ground).unwrap();
        let product: f64 = ground
            .atoms()
            .iter()
            .zip(ground.weights())
            .map(|(p, w)| 1.0 + w * f.evaluate(p.velocity(), p.position()))
            .product();
        prop_assert!((sum - product).abs() <= 1e-12 * product.abs().max(1.0));
    }
}
