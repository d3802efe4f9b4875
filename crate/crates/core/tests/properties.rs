use std::collections::HashSet;

use proptest::prelude::*;

use ham_core::attention::{
    mhca, multi_head_attention, placm_block, AlignmentStage, AlignmentState, AttentionWeights,
    KeyMask, MhaWeights, PlacmWeights,
};
use ham_core::head::{acc_at_iou, group_by_instance, matching_loss, IdentificationStrategy};
use ham_core::language::{mask_words, TokenSeq, UNK_ID};
use ham_core::oracle::{finite_difference_grad, random_box, random_cloud, smgm_check};
use ham_core::sampling::{concentration_sampling, dfps, ffps, fusion_sampling};
use ham_core::scene::{iou3d, Box3, SceneObject};
use ham_core::tensor::{argmax, softmax};
use ham_core::{Mat, Rng};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

fn rand_mat(rows: usize, cols: usize, seed: u64) -> Mat {
    Mat::random_normal(rows, cols, 1.0, &mut Rng::new(seed))
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn matmul_is_associative(m in 1usize..6, k in 1usize..6, n in 1usize..6, p in 1usize..6, seed: u64) {
        let a = rand_mat(m, k, seed);
        let b = rand_mat(k, n, seed ^ 1);
        let c = rand_mat(n, p, seed ^ 2);
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right).unwrap() < 1e-9);
    }

    #[test]
    fn softmax_sums_to_one_and_ignores_shifts(
        v in prop::collection::vec(-50.0f64..50.0, 1..40),
        shift in -100.0f64..100.0,
    ) {
        let p = softmax(&v).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
        let q = softmax(&shifted).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn iou_is_symmetric_and_bounded(seed: u64) {
        let mut rng = Rng::new(seed);
        let a = random_box(&mut rng);
        let b = random_box(&mut rng);
        let ab = iou3d(&a, &b);
        prop_assert_eq!(ab, iou3d(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((iou3d(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iou_shrinks_as_boxes_separate(seed: u64, d1 in 0.0f64..3.0, d2 in 0.0f64..3.0) {
        let mut rng = Rng::new(seed);
        let a = random_box(&mut rng);
        let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let shifted = |d: f64| Box3 { center: [a.center[0] + d, a.center[1], a.center[2]], size: a.size };
        prop_assert!(iou3d(&a, &shifted(near)) >= iou3d(&a, &shifted(far)));
    }

    #[test]
    fn acc_is_monotone_in_threshold(seed: u64, t1 in 0.01f64..0.99, t2 in 0.01f64..0.99) {
        let mut rng = Rng::new(seed);
        let pred: Vec<Box3> = (0..30).map(|_| random_box(&mut rng)).collect();
        let gt: Vec<Box3> = (0..30).map(|_| random_box(&mut rng)).collect();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(acc_at_iou(&pred, &gt, lo).unwrap() >= acc_at_iou(&pred, &gt, hi).unwrap());
    }

    #[test]
    fn loss_is_shift_invariant(
        logits in prop::collection::vec(-10.0f64..10.0, 2..64),
        shift in -50.0f64..50.0,
        pick: prop::sample::Index,
    ) {
        let mut labels = vec![0.0; logits.len()];
        labels[pick.index(logits.len())] = 1.0;
        let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
        let a = matching_loss(&logits, &labels).unwrap();
        let b = matching_loss(&shifted, &labels).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn argmax_survives_positive_affine_maps(
        logits in prop::collection::vec(-10.0f64..10.0, 1..64),
        scale in 0.01f64..100.0,
        offset in -100.0f64..100.0,
    ) {
        let mapped: Vec<f64> = logits.iter().map(|x| scale * x + offset).collect();
        let i = argmax(&logits).unwrap();
        let j = argmax(&mapped).unwrap();
        // distinct logits closer than rounding can merge; only check clear winners
        let runner_up = logits.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
        if logits[i] - runner_up > 1e-9 {
            prop_assert_eq!(i, j);
        }
    }

    #[test]
    fn mask_words_respects_the_ratio(len in 1usize..60, ratio in 0.0f64..=1.0, seed: u64) {
        let tokens = TokenSeq { tokens: (0..len as u32).map(|t| t + 2).collect() };
        let out = mask_words(&tokens, ratio, &mut Rng::new(seed)).unwrap();
        let masked = out.tokens.iter().filter(|&&t| t == UNK_ID).count();
        prop_assert_eq!(out.len(), len);
        prop_assert!(masked <= (ratio * len as f64).floor() as usize);
        for (a, b) in tokens.tokens.iter().zip(&out.tokens) {
            prop_assert!(a == b || *b == UNK_ID);
        }
    }

    #[test]
    fn max_pool_dominates_mean_pool(seed: u64, n in 1usize..30) {
        let mut rng = Rng::new(seed);
        let objects: Vec<SceneObject> = (0..3)
            .map(|k| SceneObject {
                instance_id: k,
                class_id: 0,
                bbox: Box3::new([k as f64 * 2.0, 0.0, 0.0], [1.5; 3]).unwrap(),
            })
            .collect();
        let points: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.below(3) as f64 * 2.0 + rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7), 0.0])
            .collect();
        let feats = Mat::random_normal(n, 5, 1.0, &mut rng);
        let max = group_by_instance(&points, &feats, &objects, IdentificationStrategy::MaxPool).unwrap();
        let mean = group_by_instance(&points, &feats, &objects, IdentificationStrategy::MeanPool).unwrap();
        prop_assert_eq!(&max.objects, &mean.objects);
        prop_assert!(max.aggregated.as_slice().iter().zip(mean.aggregated.as_slice()).all(|(a, b)| a >= b));
    }

    #[test]
    fn finite_differences_match_the_analytic_gradient(
        logits in prop::collection::vec(-5.0f64..5.0, 2..32),
        pick: prop::sample::Index,
    ) {
        let mut labels = vec![0.0; logits.len()];
        labels[pick.index(logits.len())] = 1.0;
        let g = ham_core::head::matching_loss_grad(&logits, &labels).unwrap();
        let fd = finite_difference_grad(&logits, &labels, 1e-5);
        for (a, b) in g.iter().zip(&fd) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn dfps_set_ignores_storage_order(seed: u64, n in 1usize..40) {
        let mut rng = Rng::new(seed);
        let cloud = random_cloud(120, 3, &mut rng);
        let start = rng.below(cloud.len());
        let mut order: Vec<usize> = (0..cloud.len()).collect();
        rng.shuffle(&mut order);
        let permuted = cloud.permuted(&order);
        let new_start = order.iter().position(|&o| o == start).unwrap();
        let a: HashSet<usize> = dfps(&cloud, n, start).unwrap().indices.into_iter().collect();
        let b: HashSet<usize> = dfps(&permuted, n, new_start).unwrap().indices.into_iter().map(|k| order[k]).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn concentration_sampling_has_exact_size(seed: u64, len in 1usize..150, frac in 0.0f64..=1.0) {
        let mut rng = Rng::new(seed);
        let cloud = random_cloud(len, 4, &mut rng);
        let n = ((len as f64 * frac).round() as usize).max(1);
        let w = vec![1.0; 7];
        let ids = concentration_sampling(&cloud, n, 0, &w).unwrap().indices;
        prop_assert_eq!(ids.len(), n);
        prop_assert_eq!(ids.iter().collect::<HashSet<_>>().len(), n);
    }

    #[test]
    fn fusion_duplicates_equal_the_overlap(seed: u64, half in 1usize..40) {
        let mut rng = Rng::new(seed);
        let cloud = random_cloud(100, 3, &mut rng);
        let w: Vec<f64> = (0..6).map(|_| rng.uniform(0.0, 3.0)).collect();
        let fs = fusion_sampling(&cloud, 2 * half, 0, &w).unwrap();
        let d: HashSet<_> = dfps(&cloud, half, 0).unwrap().indices.into_iter().collect();
        let f: HashSet<_> = ffps(&cloud, half, 0, &w).unwrap().indices.into_iter().collect();
        prop_assert_eq!(fs.duplicate_count(), d.intersection(&f).count());
    }

    #[test]
    fn ffps_without_attributes_is_dfps(seed: u64, n in 1usize..50) {
        let mut rng = Rng::new(seed);
        let cloud = random_cloud(90, 6, &mut rng);
        let w = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        prop_assert_eq!(ffps(&cloud, n, 5, &w).unwrap().indices, dfps(&cloud, n, 5).unwrap().indices);
    }

    #[test]
    fn mhca_ignores_key_order(seed: u64, q in 1usize..6, k in 1usize..10) {
        let mut rng = Rng::new(seed);
        let w = MhaWeights::random(8, 2, seed, "p");
        let x = Mat::random_normal(q, 8, 1.0, &mut rng);
        let y = Mat::random_normal(k, 8, 1.0, &mut rng);
        let keep: Vec<usize> = (0..q).map(|_| rng.below(k)).collect();
        let vis: Vec<bool> = (0..q * k).map(|_| rng.below(2) == 0).collect();
        let mask = KeyMask::from_fn(q, k, |i, j| j == keep[i] || vis[i * k + j]);
        let mut order: Vec<usize> = (0..k).collect();
        rng.shuffle(&mut order);
        let y_perm = y.select_rows(&order);
        let mask_perm = KeyMask::from_fn(q, k, |i, j| mask.get(i, order[j]));
        let a = mhca(&x, &y, &w, Some(&mask)).unwrap();
        let b = mhca(&x, &y_perm, &w, Some(&mask_perm)).unwrap();
        prop_assert!(a.max_abs_diff(&b).unwrap() <= 1e-9);
    }

    #[test]
    fn all_visible_mask_is_bit_identical(seed: u64, m in 1usize..8, n in 1usize..12, t in 1usize..6) {
        let mut rng = Rng::new(seed);
        let w = PlacmWeights::random(8, 2, 1, seed, "p");
        let q = AlignmentState { q: Mat::random_normal(m, 8, 1.0, &mut rng), stage: AlignmentStage::Raw };
        let keys = Mat::random_normal(n, 8, 1.0, &mut rng);
        let words = Mat::random_normal(t, 8, 1.0, &mut rng);
        let sentence = Mat::random_normal(1, 8, 1.0, &mut rng);
        let full = KeyMask::all_visible(m, n);
        let a = placm_block(&q, &keys, &words, &sentence, &w, None).unwrap();
        let b = placm_block(&q, &keys, &words, &sentence, &w, Some(&full)).unwrap();
        prop_assert_eq!(a.q.as_slice(), b.q.as_slice());
        prop_assert_eq!(b.stage, AlignmentStage::SentenceAligned);
    }

    #[test]
    fn masked_keys_get_zero_weight(seed: u64, q in 1usize..6, k in 1usize..10) {
        let mut rng = Rng::new(seed);
        let w = AttentionWeights::random(8, 4, seed, "a");
        let x = Mat::random_normal(q, 8, 1.0, &mut rng);
        let y = Mat::random_normal(k, 8, 1.0, &mut rng);
        let mask = KeyMask::from_fn(q, k, |i, j| (i + j) % 2 == 0 || j == 0);
        let mut probe = Vec::new();
        multi_head_attention(&x, &y, &w, Some(&mask), Some(&mut probe)).unwrap();
        prop_assert_eq!(probe.len(), 4);
        for p in &probe {
            for i in 0..q {
                prop_assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for j in 0..k {
                    if !mask.get(i, j) {
                        prop_assert_eq!(p[(i, j)], 0.0);
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(config(6))]

    #[test]
    fn masked_local_branch_equals_region_split(seed: u64) {
        let report = smgm_check(seed, 1, 48, 12, 16, 2).unwrap();
        prop_assert!(report.passed, "{:?}", report);
    }
}
