use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rwt_core::align::{residual_label, rwt_backup_exact, rwt_pseudo_label, DensityRatioProvider};
use rwt_core::env::{argmax, perturbed_source, random_tabular_mdp, value_iteration, TransitionSample};
use rwt_core::harness::{parse_seeds, BatchSplit, ExperimentConfig, Variant};
use rwt_core::kernel::{KernelSpec, UncertaintyState};
use rwt_core::learners::{bonus_from_variances, compute_bonus, optimistic_q, BonusParams};

fn variant_strategy() -> impl Strategy<Value = Variant> {
    prop_oneof![
        Just(Variant::RwtTabular),
        Just(Variant::TargetOnly),
        Just(Variant::NaivePooled),
        Just(Variant::RwtKernelOfu),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn argmax_ignores_shift_and_positive_scale(
        q in prop::collection::vec(-10.0f64..10.0, 1..8),
        shift in -5.0f64..5.0,
        scale in 0.1f64..10.0,
    ) {
        let base = argmax(q.iter().copied());
        prop_assert_eq!(argmax(q.iter().map(|v| v * scale + shift)), base);
        prop_assert!(q.iter().all(|&v| v <= q[base]));
    }

    #[test]
    fn bonus_never_grows_with_more_data(
        pts in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 1..12),
        x in prop::collection::vec(-1.0f64..1.0, 2),
        ridge in 0.1f64..2.0,
    ) {
        let params = BonusParams::practical(4, 1.0);
        let src = UncertaintyState::new(KernelSpec::rbf(0.5), ridge).unwrap();
        let mut tgt = UncertaintyState::new(KernelSpec::rbf(0.5), ridge).unwrap();
        let mut prev = compute_bonus(&src, &tgt, &x, &params, 10, 0).unwrap();
        for p in pts {
            tgt.push(p).unwrap();
            let b = compute_bonus(&src, &tgt, &x, &params, 10, 0).unwrap();
            prop_assert!(b <= prev + 1e-12, "bonus rose from {prev} to {b}");
            prev = b;
        }
    }

    #[test]
    fn bonus_is_monotone_in_variance(v1 in 0.0f64..5.0, v2 in 0.0f64..5.0, vs in 0.0f64..5.0) {
        let params = BonusParams::practical(4, 1.0);
        let (lo, hi) = if v1 <= v2 { (v1, v2) } else { (v2, v1) };
        prop_assert!(bonus_from_variances(vs, lo, &params, 3, 0) <= bonus_from_variances(vs, hi, &params, 3, 0));
    }

    #[test]
    fn clipped_values_stay_in_range(q in -20.0f64..20.0, b in 0.0f64..20.0, h in 0usize..6) {
        let v = optimistic_q(q, b, h, 6, true);
        prop_assert!((0.0..=(6 - h) as f64).contains(&v));
        prop_assert_eq!(optimistic_q(q, b, h, 6, false), q + b);
    }

    #[test]
    fn residuals_of_the_exact_backup_average_to_zero(seed in 0u64..1000, gamma in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = random_tabular_mdp::<f64, _>(3, 2, 3, gamma, &mut rng).unwrap();
        let (_, v) = value_iteration(&target);
        for h in 0..3 {
            let v_next: Vec<f64> = if h + 1 < 3 { v.stage(h + 1).to_vec() } else { vec![0.0; 3] };
            let backup = |s: usize, a: usize| {
                target.reward(h, s, a) + gamma * (0..3).map(|j| target.transition_prob(h, s, a, j) * v_next[j]).sum::<f64>()
            };
            for s in 0..3 {
                for a in 0..2 {
                    let mean: f64 = (0..3)
                        .map(|j| {
                            let x = TransitionSample { task_id: 0, stage: h, state: s, action: a, reward: target.reward(h, s, a), next_state: j };
                            target.transition_prob(h, s, a, j) * residual_label(&x, backup, &v_next, gamma).value
                        })
                        .sum();
                    prop_assert!(mean.abs() < 1e-12, "mean residual {mean}");
                }
            }
        }
    }

    #[test]
    fn reweighted_source_labels_recover_the_target_backup(seed in 0u64..1000, mix in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = random_tabular_mdp::<f64, _>(3, 2, 2, 0.9, &mut rng).unwrap();
        let source = perturbed_source(&target, mix, 0.3, &mut rng).unwrap();
        let omega = DensityRatioProvider::exact(&target, &source).unwrap();
        let v_next = [0.7, -0.2, 1.5];
        for s in 0..3 {
            for a in 0..2 {
                let aligned = rwt_backup_exact(&source, &omega, &v_next, 0, s, a).unwrap();
                let target_backup = target.reward(0, s, a)
                    + 0.9 * (0..3).map(|j| target.transition_prob(0, s, a, j) * v_next[j]).sum::<f64>();
                let reward_gap = source.reward(0, s, a) - target.reward(0, s, a);
                prop_assert!((aligned - target_backup - reward_gap).abs() < 1e-10);

                let sampled: f64 = (0..3)
                    .map(|j| {
                        let x = TransitionSample { task_id: 1, stage: 0, state: s, action: a, reward: source.reward(0, s, a), next_state: j };
                        let w = omega.ratio(0, s, a, j).unwrap();
                        source.transition_prob(0, s, a, j) * rwt_pseudo_label(&x, w, &v_next, 0.9).value
                    })
                    .sum();
                prop_assert!((sampled - aligned).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn config_survives_a_flat_round_trip(
        variant in variant_strategy(),
        episodes in 1usize..5000,
        lr in 0.001f64..1.0,
        seeds in prop::collection::vec(0u64..1000, 1..6),
        equal in any::<bool>(),
        updates in 1usize..32,
    ) {
        let mut c = ExperimentConfig::for_variant(variant);
        c.episodes = episodes;
        c.schedule.total_episodes = episodes;
        c.lr = lr;
        c.seeds = seeds;
        c.batch_split = if equal { BatchSplit::Equal } else { BatchSplit::Proportional };
        c.updates_per_stage = updates;
        let back = ExperimentConfig::parse_flat(&c.to_flat()).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn seed_ranges_expand(a in 0u64..100, len in 0u64..20) {
        let seeds = parse_seeds(&format!("{}..{}", a, a + len)).unwrap();
        prop_assert_eq!(seeds, (a..a + len).collect::<Vec<_>>());
    }
}
