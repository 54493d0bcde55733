mod common;

use common::*;
use freqreg::ZigzagPlan;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn counts_and_masks_match_enumeration() {
    let mut r = rng(21);
    for _ in 0..40 {
        let shape = random_shape(&mut r, 4, 9);
        let plan = ZigzagPlan::build(&shape).unwrap();
        for eps in 1..=plan.full_threshold() + 1 {
            let expect = brute_count(&shape, eps);
            assert_eq!(plan.count(eps), expect, "{shape:?} eps={eps}");
            let mask = plan.mask(eps).unwrap();
            assert_eq!(mask.data().iter().sum::<f64>() as usize, expect);
        }
    }
}

#[test]
fn counts_increase_then_saturate() {
    let plan = ZigzagPlan::build(&[3, 5, 2]).unwrap();
    let full = plan.full_threshold();
    assert_eq!(full, 2 + 4 + 1 + 1);
    assert_eq!(plan.count(1), 1);
    for e in 1..full {
        assert!(plan.count(e + 1) > plan.count(e));
    }
    assert_eq!(plan.count(full), 30);
    assert_eq!(plan.count(full + 5), 30);
}

#[test]
fn order_is_norm_then_lexicographic() {
    let shape = [3, 4, 2];
    let plan = ZigzagPlan::build(&shape).unwrap();
    let keys: Vec<(usize, Vec<usize>)> = plan
        .order()
        .iter()
        .map(|&f| {
            let idx = multi_index(f, &shape);
            (idx.iter().sum(), idx)
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    let mut seen = plan.order().to_vec();
    seen.sort_unstable();
    assert_eq!(seen, (0..24).collect::<Vec<_>>());
}

#[test]
fn plan_is_a_pure_function_of_shape() {
    assert_eq!(ZigzagPlan::build(&[5, 3, 2]).unwrap(), ZigzagPlan::build(&[5, 3, 2]).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ratio_threshold_is_tight(shape in prop::collection::vec(1usize..=16, 1..=4), ratio in 0.001f64..=1.0, keep_frac in 0.0f64..0.2) {
        prop_assume!(shape.iter().product::<usize>() <= 4096);
        let plan = ZigzagPlan::build(&shape).unwrap();
        let total = plan.total();
        let min_keep = ((keep_frac * total as f64) as usize).max(1);
        let (eps, kept) = plan.threshold_for_ratio(ratio, min_keep).unwrap();
        let target = min_keep.max((ratio * total as f64).ceil() as usize);
        prop_assert_eq!(kept, brute_count(&shape, eps));
        prop_assert!(kept >= 1);
        prop_assert!(kept <= target);
        if eps < plan.full_threshold() {
            prop_assert!(brute_count(&shape, eps + 1) > target);
        }
    }
}

#[test]
fn ratio_one_keeps_everything() {
    let mut r = rng(8);
    for _ in 0..20 {
        let shape = random_shape(&mut r, 4, 7);
        let plan = ZigzagPlan::build(&shape).unwrap();
        let (eps, kept) = plan.threshold_for_ratio(1.0, r.random_range(1..=plan.total())).unwrap();
        assert_eq!(eps, plan.full_threshold());
        assert_eq!(kept, plan.total());
    }
}
