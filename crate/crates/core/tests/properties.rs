//! Property-based checks of the numeric and structural invariants.

use proptest::prelude::*;

use somrules::dataset::{Dataset, PartitionSpec};
use somrules::inference::{firing_min, firing_product, soft_match};
use somrules::rulebase::{FuzzyClause, FuzzyRule, RuleBase, TNorm, RULEBASE_VERSION};
use somrules::seeded_rng;
use somrules::sofm::{init_sofm, train_sofm, SofmSchedule};

fn membership_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6..=1.0f64, 1..8)
}

fn nonzero_q() -> impl Strategy<Value = f64> {
    prop_oneof![-50.0..=-1e-3, 1e-3..=50.0f64]
}

proptest! {
    #[test]
    fn soft_match_stays_between_min_and_max(v in membership_vec(), q in nonzero_q()) {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sm = soft_match(&v, q).unwrap();
        prop_assert!(sm >= lo - 1e-9 * lo.max(1.0), "SM({q}) = {sm} < min {lo}");
        prop_assert!(sm <= hi + 1e-9 * hi.max(1.0), "SM({q}) = {sm} > max {hi}");
    }

    #[test]
    fn soft_match_is_monotone_in_q(v in membership_vec(), a in nonzero_q(), b in nonzero_q()) {
        let (q1, q2) = if a <= b { (a, b) } else { (b, a) };
        prop_assume!(q1 != 0.0 && q2 != 0.0);
        let s1 = soft_match(&v, q1).unwrap();
        let s2 = soft_match(&v, q2).unwrap();
        prop_assert!(s2 >= s1 - 1e-9, "SM({q1}) = {s1} > SM({q2}) = {s2}");
    }

    #[test]
    fn soft_match_at_one_is_the_arithmetic_mean(v in membership_vec()) {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        prop_assert_eq!(soft_match(&v, 1.0).unwrap(), mean);
    }

    #[test]
    fn product_firing_never_exceeds_min_firing(
        centers in prop::collection::vec(-5.0..5.0f64, 1..6),
        x_off in prop::collection::vec(-3.0..3.0f64, 1..6),
        sigma in 0.1..4.0f64,
    ) {
        let p = centers.len().min(x_off.len());
        let rule = FuzzyRule {
            id: 0,
            class: 0,
            q: -10.0,
            clauses: centers[..p]
                .iter()
                .map(|&c| FuzzyClause { center: c, sigma })
                .collect(),
        };
        let x: Vec<f64> = centers[..p].iter().zip(&x_off[..p]).map(|(c, o)| c + o).collect();
        let prod = firing_product(&rule, &x);
        let min = firing_min(&rule, &x);
        prop_assert!(prod <= min + f64::EPSILON, "product {prod} > min {min}");
    }

    #[test]
    fn rulebase_json_round_trip_is_exact(
        centers in prop::collection::vec(
            prop_oneof![-1e6..1e6f64, -1.0..1.0f64],
            2..8,
        ),
        sigmas in prop::collection::vec(1e-6..1e3f64, 2..8),
        q in nonzero_q(),
        threshold in 0.0..0.99f64,
    ) {
        let p = centers.len().min(sigmas.len());
        let mk_rule = |id: usize, class: usize, shift: f64| FuzzyRule {
            id,
            class,
            q,
            clauses: centers[..p]
                .iter()
                .zip(&sigmas[..p])
                .map(|(&c, &s)| FuzzyClause { center: c + shift, sigma: s })
                .collect(),
        };
        let rb = RuleBase {
            version: RULEBASE_VERSION,
            p,
            c: 2,
            tnorm: TNorm::Softmin,
            firing_threshold: threshold,
            k_w: 5.0,
            rules: vec![mk_rule(0, 0, 0.0), mk_rule(1, 1, 0.5)],
        };
        let text = serde_json::to_string(&rb).unwrap();
        let back: RuleBase = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, rb);
    }

    #[test]
    fn trained_sofm_weights_stay_inside_the_data_box(
        seed in 0u64..500,
        m in 1usize..6,
    ) {
        let mut rng = seeded_rng(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..40 {
            let t = i as f64 / 39.0;
            xs.push(vec![t * 10.0 - 5.0, (t * 7.0).sin()]);
            ys.push(i % 2);
        }
        let data = Dataset::new(xs, ys, 2).unwrap();
        let grid = init_sofm(m, &data, &mut rng).unwrap();
        let schedule = SofmSchedule::defaults(m, data.len());
        let trained = train_sofm(&grid, &data, &schedule, &mut rng).unwrap();
        let ranges = data.feature_ranges().unwrap();
        for w in &trained.weights {
            for (j, &(lo, hi)) in ranges.iter().enumerate() {
                prop_assert!(w[j] >= lo - 1e-9 && w[j] <= hi + 1e-9,
                    "weight {} outside [{lo}, {hi}]", w[j]);
            }
        }
    }

    #[test]
    fn stratified_partition_draws_exact_counts(seed in 0u64..1000) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..30 {
            xs.push(vec![i as f64]);
            ys.push(i % 3);
        }
        let data = Dataset::new(xs, ys, 3).unwrap();
        let spec = PartitionSpec { train_counts: vec![4, 7, 2], seed };
        let (train, test) = data.stratified_partition(&spec).unwrap();
        prop_assert_eq!(train.class_histogram(), vec![4, 7, 2]);
        prop_assert_eq!(train.len() + test.len(), data.len());
        // disjointness: every feature value is unique in this construction
        let mut seen: Vec<i64> = train
            .samples()
            .iter()
            .chain(test.samples())
            .map(|s| s.x[0] as i64)
            .collect();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), data.len());
    }
}
