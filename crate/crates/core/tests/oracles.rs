//! Reference computations written independently of the library code paths.

// index loops mirror the textbook formulas on purpose
#![allow(clippy::needless_range_loop)]

use std::time::Instant;

use ham_core::attention::{
    mhca, multi_head_attention, placm_block, positional_embed_points, positional_embed_text,
    AlignmentStage, AlignmentState, AttentionWeights, KeyMask, Linear, MhaWeights, PlacmWeights,
};
use ham_core::head::{
    acc_at_iou, adapt_identification, match_scores, IdentificationInput, IdentificationStrategy,
    MatchWeights,
};
use ham_core::language::{gru_encode, GruWeights};
use ham_core::oracle::{iou_by_corners, random_box};
use ham_core::sampling::{build_key_points, dfps, select_proposals, ProposalBoxes};
use ham_core::scene::{
    generate_labeled_scene, generate_scene, iou3d, Box3, GeneratorConfig, Scene,
};
use ham_core::{Mat, Rng};

#[test]
fn splitmix64_matches_golden_sequence() {
    let golden = include_str!("data/splitmix64_seed0.txt");
    let mut rng = Rng::new(0);
    let mut count = 0;
    for line in golden.lines() {
        let expected = u64::from_str_radix(line.trim_start_matches("0x"), 16).unwrap();
        assert_eq!(rng.next_u64(), expected, "output {count}");
        count += 1;
    }
    assert_eq!(count, 64);
    assert_eq!(Rng::new(0).next_u64(), 0xE220A8397B1DCDAF);
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn lin(x: &[f64], w: &Mat, b: &[f64], j: usize) -> f64 {
    let mut acc = 0.0;
    for (k, xv) in x.iter().enumerate() {
        acc += xv * w[(k, j)];
    }
    acc + b[j]
}

#[test]
fn gru_matches_scalar_loop() {
    let (input, hidden, steps) = (7, 5, 5);
    let w = GruWeights::random(input, hidden, 11, "g");
    let x = Mat::random_normal(steps, input, 1.0, &mut Rng::new(3));
    let out = gru_encode(&x, &w, 16).unwrap();

    let mut h = vec![0.0; hidden];
    for t in 0..steps {
        let xt = x.row(t);
        let mut next = vec![0.0; hidden];
        for j in 0..hidden {
            let z = sig(lin(xt, &w.w_iz, &w.b_iz, j) + lin(&h, &w.w_hz, &w.b_hz, j));
            let r = sig(lin(xt, &w.w_ir, &w.b_ir, j) + lin(&h, &w.w_hr, &w.b_hr, j));
            let n = (lin(xt, &w.w_in, &w.b_in, j) + r * lin(&h, &w.w_hn, &w.b_hn, j)).tanh();
            next[j] = (1.0 - z) * n + z * h[j];
        }
        h = next;
        for j in 0..hidden {
            assert!((out.word[(t, j)] - h[j]).abs() < 1e-12);
        }
    }
    for j in 0..hidden {
        assert!((out.sentence[(0, j)] - h[j]).abs() < 1e-12);
    }
    for t in steps..16 {
        assert!(out.word.row(t).iter().all(|&v| v == 0.0));
    }
}

#[test]
fn gru_edge_cases() {
    let x = Mat::random_normal(4, 3, 1.0, &mut Rng::new(1));
    let zero = gru_encode(&x, &GruWeights::zeros(3, 6), 8).unwrap();
    assert!(zero.word.as_slice().iter().all(|&v| v == 0.0));
    let w = GruWeights::random(3, 6, 2, "g");
    let one = gru_encode(&x.head_rows(1), &w, 8).unwrap();
    assert_eq!(one.sentence.row(0), one.word.row(0));
}

#[test]
fn text_position_embedding_closed_form() {
    let c = 288;
    let pe = positional_embed_text(10, c);
    for j in 0..c {
        let expected0 = if j % 2 == 0 { 0.0 } else { 1.0 };
        assert_eq!(pe[(0, j)], expected0);
    }
    for i in 0..c / 2 {
        let angle = 3.0 / 10000f64.powf(2.0 * i as f64 / c as f64);
        assert!((pe[(3, 2 * i)] - angle.sin()).abs() < 1e-12);
        assert!((pe[(3, 2 * i + 1)] - angle.cos()).abs() < 1e-12);
    }
    assert!(pe.as_slice().iter().all(|v| v.abs() <= 1.0));
}

#[test]
fn point_position_embedding_matches_direct_matmul() {
    let mut rng = Rng::new(9);
    let n = 6;
    let feats = Mat::random_normal(n, 8, 1.0, &mut rng);
    let pts: Vec<[f64; 3]> = (0..n).map(|_| [rng.normal(), rng.normal(), rng.normal()]).collect();
    let boxes: Vec<Box3> = (0..n).map(|_| random_box(&mut rng)).collect();
    let w = Linear::random(9, 8, 4, "pe");
    let got = positional_embed_points(&feats, &pts, Some(&boxes), &w).unwrap();
    for i in 0..n {
        let raw: Vec<f64> = pts[i]
            .iter()
            .chain(&boxes[i].center)
            .chain(&boxes[i].size)
            .copied()
            .collect();
        for j in 0..8 {
            let mut acc = 0.0;
            for k in 0..9 {
                acc += raw[k] * w.weight[(k, j)];
            }
            assert_eq!(got[(i, j)], feats[(i, j)] + (acc + w.bias[j]));
        }
    }
    let zero = Linear::zeros(3, 8);
    assert_eq!(positional_embed_points(&feats, &pts, None, &zero).unwrap(), feats);
}

#[test]
fn attention_scores_match_direct_formula() {
    let mut rng = Rng::new(5);
    let (c, heads) = (8, 2);
    let w = AttentionWeights::random(c, heads, 6, "a");
    let x = Mat::random_normal(3, c, 1.0, &mut rng);
    let y = Mat::random_normal(4, c, 1.0, &mut rng);
    let mut probe = Vec::new();
    multi_head_attention(&x, &y, &w, None, Some(&mut probe)).unwrap();
    let q = x.affine(&w.q_weight, &w.q_bias).unwrap();
    let k = y.affine(&w.k_weight, &w.k_bias).unwrap();
    let d = c / heads;
    for h in 0..heads {
        for i in 0..3 {
            let scores: Vec<f64> = (0..4)
                .map(|j| (0..d).map(|t| q[(i, h * d + t)] * k[(j, h * d + t)]).sum::<f64>() / (d as f64).sqrt())
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
            for j in 0..4 {
                assert!((probe[h][(i, j)] - (scores[j] - max).exp() / z).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn single_visible_key_gets_all_weight() {
    let mut rng = Rng::new(8);
    let w = AttentionWeights::random(8, 2, 1, "a");
    let x = Mat::random_normal(3, 8, 1.0, &mut rng);
    let y = Mat::random_normal(5, 8, 1.0, &mut rng);
    let mask = KeyMask::from_fn(3, 5, |i, j| j == i + 1);
    let mut probe = Vec::new();
    multi_head_attention(&x, &y, &w, Some(&mask), Some(&mut probe)).unwrap();
    for p in &probe {
        for i in 0..3 {
            for j in 0..5 {
                assert_eq!(p[(i, j)], if j == i + 1 { 1.0 } else { 0.0 });
            }
        }
    }
    let blocked = KeyMask::from_fn(3, 5, |i, _| i != 1);
    let mw = MhaWeights::random(8, 2, 1, "m");
    assert!(mhca(&x, &y, &mw, Some(&blocked)).is_err());
}

#[test]
fn placm_reacts_to_words_and_survives_empty_key_rows() {
    let mut rng = Rng::new(12);
    let w = PlacmWeights::random(16, 4, 1, 3, "p");
    let q = AlignmentState {
        q: Mat::random_normal(5, 16, 1.0, &mut rng),
        stage: AlignmentStage::Raw,
    };
    let keys = Mat::random_normal(9, 16, 1.0, &mut rng);
    let mut words = Mat::random_normal(4, 16, 1.0, &mut rng);
    let sentence = Mat::random_normal(1, 16, 1.0, &mut rng);
    let a = placm_block(&q, &keys, &words, &sentence, &w, None).unwrap();
    words[(2, 7)] += 0.5;
    let b = placm_block(&q, &keys, &words, &sentence, &w, None).unwrap();
    assert!(a.q.max_abs_diff(&b.q).unwrap() > 0.0);

    let none = KeyMask::from_fn(5, 9, |_, _| false);
    let c = placm_block(&q, &keys, &words, &sentence, &w, Some(&none)).unwrap();
    assert!(c.q.is_finite());
    assert_eq!(c.q.shape(), (5, 16));
}

#[test]
fn match_head_softmax_example() {
    let mut w = MatchWeights::zeros(4);
    for j in 0..4 {
        w.w1[(j, j)] = 1.0;
    }
    w.w2[(0, 0)] = 1.0;
    w.b2 = -10.0;
    let mut fused = Mat::zeros(4, 4);
    fused[(3, 0)] = 20.0;
    let boxes = vec![Box3::new([0.0; 3], [1.0; 3]).unwrap(); 4];
    let r = match_scores(&fused, &boxes, &w).unwrap();
    assert_eq!(r.logits, vec![-10.0, -10.0, -10.0, 10.0]);
    let tiny = (-20.0f64).exp() / (1.0 + 3.0 * (-20.0f64).exp());
    for i in 0..3 {
        assert!((r.probs[i] - tiny).abs() < 1e-20);
        assert!((r.probs[i] - 2.06e-9).abs() < 1e-11);
    }
    assert_eq!(r.best_index, 3);
}

#[test]
fn acc_matches_pairwise_oracle() {
    let mut rng = Rng::new(21);
    let pred: Vec<Box3> = (0..1000).map(|_| random_box(&mut rng)).collect();
    let gt: Vec<Box3> = (0..1000).map(|_| random_box(&mut rng)).collect();
    for t in [0.1, 0.25, 0.5] {
        let hits = pred.iter().zip(&gt).filter(|(p, g)| iou_by_corners(p, g) > t).count();
        assert_eq!(acc_at_iou(&pred, &gt, t).unwrap(), hits as f64 / 1000.0);
    }
    assert_eq!(acc_at_iou(&pred, &pred, 0.5).unwrap(), 1.0);
}

#[test]
fn center_distance_matches_nearest_center_scan() {
    let scene = generate_scene(4, &GeneratorConfig { n_points: 2000, ..Default::default() }).unwrap();
    let mut rng = Rng::new(4);
    for _ in 0..50 {
        let pred = random_box(&mut rng);
        let input = IdentificationInput {
            objects: &scene.objects,
            predicted_box: pred,
            proposal_points: &[],
            features: None,
            match_weights: None,
        };
        let got = adapt_identification(&input, IdentificationStrategy::CenterDistance).unwrap();
        let mut best = (f64::INFINITY, 0);
        for o in &scene.objects {
            let d = ((0..3).map(|a| (o.bbox.center[a] - pred.center[a]).powi(2)).sum::<f64>()).sqrt();
            if d < best.0 {
                best = (d, o.instance_id);
            }
        }
        assert_eq!(got.instance_id, best.1);
    }
}

#[test]
fn generated_points_stay_inside_their_boxes() {
    let labeled = generate_labeled_scene(7, &GeneratorConfig { n_objects: 5, n_points: 5000, ..Default::default() }).unwrap();
    let scene = &labeled.scene;
    let mut foreground = 0;
    for (i, owner) in labeled.point_object.iter().enumerate() {
        if let Some(k) = owner {
            let b = &scene.objects[*k].bbox;
            assert!(b.contains(scene.cloud.positions()[i], 1e-6));
            foreground += 1;
        }
    }
    assert!(foreground > 0);
    for n in scene.cloud.attributes().iter_rows() {
        let norm = (n[3] * n[3] + n[4] * n[4] + n[5] * n[5]).sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }
}

#[test]
fn large_scene_round_trip_is_fast_and_exact() {
    let scene = generate_scene(1, &GeneratorConfig::default()).unwrap();
    assert_eq!(scene.cloud.len(), 50_000);
    let start = Instant::now();
    let bytes = scene.to_bytes();
    let back = Scene::from_bytes(&bytes).unwrap();
    let again = back.to_bytes();
    let elapsed = start.elapsed();
    assert_eq!(bytes, again);
    assert_eq!(back, scene);
    assert!(elapsed.as_secs_f64() < 1.0, "{elapsed:?}");
}

fn min_pairwise(points: &[[f64; 3]]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d: f64 = (0..3).map(|a| (points[i][a] - points[j][a]).powi(2)).sum();
            best = best.min(d);
        }
    }
    best.sqrt()
}

#[test]
fn proposals_are_more_spread_than_random_subsets() {
    let scene = generate_scene(2, &GeneratorConfig { n_points: 8000, ..Default::default() }).unwrap();
    let sample = dfps(&scene.cloud, 1024, 0).unwrap();
    let keys = build_key_points(&scene.cloud, &scene.objects, &sample, 16, 2).unwrap();
    let props = select_proposals(&keys, 512, &ProposalBoxes::default()).unwrap();
    let spread = min_pairwise(&props.points);
    let mut rng = Rng::new(99);
    for _ in 0..100 {
        let ids = rng.choose_distinct(keys.len(), 512);
        let pts: Vec<[f64; 3]> = ids.iter().map(|&i| keys.points[i]).collect();
        assert!(spread >= min_pairwise(&pts));
    }
}

#[test]
fn iou_hand_case() {
    let a = Box3::new([0.0; 3], [2.0; 3]).unwrap();
    let b = Box3::new([1.0, 0.0, 0.0], [2.0; 3]).unwrap();
    assert!((iou3d(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
}
