//! Independent reference computations and the self-check suites run by
//! `ham oracle`. Each reference takes the slow, obvious route and shares no
//! code path with the implementation it checks beyond the primitives it
//! compares.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::attention::{multi_head_attention, AttentionWeights, KeyMask, PlacmWeights};
use crate::error::Result;
use crate::head::{matching_loss, matching_loss_grad};
use crate::rng::Rng;
use crate::sampling::{self, dfps, ffps};
use crate::scene::{iou3d, Box3, Bounds, PointCloud};
use crate::smgm::{build_partition, local_branch_by_regions, smgm_forward, SmgmWeights};
use crate::tensor::Mat;

/// Greedy farthest-point order recomputing every min-distance from scratch at
/// each step. `O(n^2 L)`.
pub fn brute_force_fps(vectors: &[Vec<f64>], n: usize, start: usize) -> Vec<usize> {
    let mut selected = vec![start];
    while selected.len() < n {
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in vectors.iter().enumerate() {
            if selected.contains(&i) {
                continue;
            }
            let d = selected
                .iter()
                .map(|&s| {
                    vectors[s]
                        .iter()
                        .zip(v)
                        .map(|(a, b)| (a - b) * (a - b))
                        .fold(0.0, |acc, x| acc + x)
                })
                .fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        selected.push(best.expect("n <= L").0);
    }
    selected
}

/// Central finite-difference gradient of the matching loss.
pub fn finite_difference_grad(logits: &[f64], labels: &[f64], h: f64) -> Vec<f64> {
    (0..logits.len())
        .map(|i| {
            let mut plus = logits.to_vec();
            let mut minus = logits.to_vec();
            plus[i] += h;
            minus[i] -= h;
            let lp = matching_loss(&plus, labels).expect("valid");
            let lm = matching_loss(&minus, labels).expect("valid");
            (lp - lm) / (2.0 * h)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl SuiteReport {
    fn new(name: &str, cases: usize, max_deviation: f64, tolerance: f64, detail: String) -> Self {
        Self {
            name: name.to_owned(),
            cases,
            max_deviation,
            tolerance,
            passed: max_deviation <= tolerance,
            detail,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Sampling,
    Smgm,
    Grad,
    Softmax,
    Iou,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Sampling, Suite::Smgm, Suite::Grad, Suite::Softmax, Suite::Iou];
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    match suite {
        Suite::Sampling => sampling_suite(seed, 100),
        Suite::Smgm => smgm_suite(seed, 20),
        Suite::Grad => grad_suite(seed, 100),
        Suite::Softmax => softmax_suite(seed),
        Suite::Iou => iou_suite(seed),
    }
}

/// Random cloud with `attrs` supplementary channels in a unit-ish cube.
pub fn random_cloud(n: usize, attrs: usize, rng: &mut Rng) -> PointCloud {
    let pos = (0..n)
        .map(|_| [rng.uniform(0.0, 4.0), rng.uniform(0.0, 3.0), rng.uniform(0.0, 2.0)])
        .collect();
    let a = Mat::from_vec(n, attrs, (0..n * attrs).map(|_| rng.next_f64()).collect())
        .expect("sized");
    PointCloud::new(pos, a).expect("nonempty")
}

/// D-FPS and F-FPS against [`brute_force_fps`] (mismatched positions count as
/// deviation), concentration sampling uniqueness, and the fusion duplicate count.
pub fn sampling_suite(seed: u64, trials: usize) -> Result<SuiteReport> {
    let mut rng = Rng::derive_named(seed, "oracle.sampling");
    let mut mismatches = 0usize;
    let n = 64;
    for _ in 0..trials {
        let cloud = random_cloud(500, 6, &mut rng);
        let start = rng.below(cloud.len());
        let weights: Vec<f64> = (0..9).map(|_| rng.uniform(0.5, 2.0)).collect();
        let pos: Vec<Vec<f64>> = cloud.positions().iter().map(|p| p.to_vec()).collect();
        let feat: Vec<Vec<f64>> = cloud
            .positions()
            .iter()
            .zip(cloud.attributes().iter_rows())
            .map(|(p, a)| p.iter().chain(a).zip(&weights).map(|(v, w)| v * w).collect())
            .collect();
        let d = dfps(&cloud, n, start)?.indices;
        let f = ffps(&cloud, n, start, &weights)?.indices;
        mismatches += count_mismatch(&d, &brute_force_fps(&pos, n, start));
        mismatches += count_mismatch(&f, &brute_force_fps(&feat, n, start));

        let cs = sampling::concentration_sampling(&cloud, n, start, &weights)?.indices;
        let unique: HashSet<_> = cs.iter().collect();
        if cs.len() != n || unique.len() != n {
            mismatches += 1;
        }
        let fs = sampling::fusion_sampling(&cloud, n, start, &weights)?;
        let dset: HashSet<_> = fs.indices[..n / 2].iter().collect();
        let fset: HashSet<_> = fs.indices[n / 2..].iter().collect();
        if fs.duplicate_count() != dset.intersection(&fset).count() {
            mismatches += 1;
        }
    }
    Ok(SuiteReport::new(
        "sampling",
        trials,
        mismatches as f64,
        0.0,
        format!("{mismatches} mismatched entries over {trials} clouds of 500 points, n={n}"),
    ))
}

fn count_mismatch(a: &[usize], b: &[usize]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count() + a.len().abs_diff(b.len())
}

/// Masked local branch against the per-region split on random scenes,
/// `r` cycling through 2, 3, 4.
pub fn smgm_suite(seed: u64, scenes: usize) -> Result<SuiteReport> {
    smgm_check(seed, scenes, 256, 64, 32, 4)
}

pub fn smgm_check(
    seed: u64,
    scenes: usize,
    n_keys: usize,
    n_props: usize,
    width: usize,
    heads: usize,
) -> Result<SuiteReport> {
    let mut rng = Rng::derive_named(seed, "oracle.smgm");
    let mut worst = 0.0f64;
    for s in 0..scenes {
        let r = 2 + s % 3;
        let (keys, kpts) = random_tokens(n_keys, width, &mut rng);
        let (props, ppts) = random_tokens(n_props, width, &mut rng);
        let words = Mat::random_normal(1 + rng.below(12), width, 1.0, &mut rng);
        let sentence = Mat::random_normal(1, width, 1.0, &mut rng);
        let bounds = Bounds {
            min: [0.0; 3],
            max: [4.0, 3.0, 2.0],
        };
        let partition = build_partition(&bounds, r, &kpts, &ppts)?;
        let weights = SmgmWeights {
            global: PlacmWeights::random(width, heads, 1, seed ^ s as u64, "g"),
            local: PlacmWeights::random(width, heads, 1, seed ^ s as u64, "l"),
        };
        let out = smgm_forward(&props, &keys, &words, &sentence, &weights, &partition)?;
        let split = local_branch_by_regions(&props, &keys, &words, &sentence, &weights.local, &partition)?;
        worst = worst.max(out.local_features.max_abs_diff(&split)?);
    }
    Ok(SuiteReport::new(
        "smgm",
        scenes,
        worst,
        1e-9,
        format!("{scenes} scenes, N={n_keys}, M={n_props}, C={width}, r in {{2,3,4}}"),
    ))
}

fn random_tokens(n: usize, width: usize, rng: &mut Rng) -> (Mat, Vec<[f64; 3]>) {
    let pts = (0..n)
        .map(|_| [rng.uniform(0.0, 4.0), rng.uniform(0.0, 3.0), rng.uniform(0.0, 2.0)])
        .collect();
    (Mat::random_normal(n, width, 1.0, rng), pts)
}

/// Analytic matching-loss gradient against central differences, `h = 1e-5`.
pub fn grad_suite(seed: u64, trials: usize) -> Result<SuiteReport> {
    let mut rng = Rng::derive_named(seed, "oracle.grad");
    let mut worst = 0.0f64;
    let sizes = [2usize, 16, 64];
    for &m in &sizes {
        for _ in 0..trials {
            let logits: Vec<f64> = (0..m).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let mut labels = vec![0.0; m];
            labels[rng.below(m)] = 1.0;
            let g = matching_loss_grad(&logits, &labels)?;
            let fd = finite_difference_grad(&logits, &labels, 1e-5);
            for (a, b) in g.iter().zip(&fd) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok(SuiteReport::new(
        "grad",
        trials * sizes.len(),
        worst,
        1e-6,
        format!("M in {sizes:?}, {trials} trials each"),
    ))
}

/// Attention rows sum to one and masked keys get exactly zero weight.
pub fn softmax_suite(seed: u64) -> Result<SuiteReport> {
    let mut rng = Rng::derive_named(seed, "oracle.softmax");
    let mut worst = 0.0f64;
    let width = 16;
    for t in 0..50 {
        let w = AttentionWeights::random(width, 4, seed ^ t, "a");
        let q = 1 + rng.below(10);
        let k = 1 + rng.below(20);
        let x = Mat::random_normal(q, width, 1.0, &mut rng);
        let y = Mat::random_normal(k, width, 1.0, &mut rng);
        let keep: Vec<usize> = (0..q).map(|_| rng.below(k)).collect();
        let hide: Vec<bool> = (0..q * k).map(|_| rng.below(2) == 0).collect();
        let mask = KeyMask::from_fn(q, k, |i, j| j == keep[i] || !hide[i * k + j]);
        let mut probe = Vec::new();
        multi_head_attention(&x, &y, &w, Some(&mask), Some(&mut probe))?;
        for p in &probe {
            for i in 0..q {
                worst = worst.max((p.row(i).iter().sum::<f64>() - 1.0).abs());
                for j in 0..k {
                    if !mask.get(i, j) {
                        worst = worst.max(p[(i, j)].abs());
                    }
                }
            }
        }
    }
    Ok(SuiteReport::new(
        "softmax",
        50,
        worst,
        1e-12,
        "row sums and masked weights over 50 random masked attentions".into(),
    ))
}

/// Hand case, symmetry and a per-pair volume oracle for IoU.
pub fn iou_suite(seed: u64) -> Result<SuiteReport> {
    let mut rng = Rng::derive_named(seed, "oracle.iou");
    let a = Box3::new([0.0; 3], [2.0; 3])?;
    let b = Box3::new([1.0, 0.0, 0.0], [2.0; 3])?;
    let mut worst = (iou3d(&a, &b) - 1.0 / 3.0).abs();
    for _ in 0..1000 {
        let p = random_box(&mut rng);
        let q = random_box(&mut rng);
        worst = worst.max((iou3d(&p, &q) - iou3d(&q, &p)).abs());
        worst = worst.max((iou3d(&p, &q) - iou_by_corners(&p, &q)).abs());
    }
    Ok(SuiteReport::new(
        "iou",
        1001,
        worst,
        1e-12,
        "unit-offset cubes plus 1000 random pairs".into(),
    ))
}

pub fn random_box(rng: &mut Rng) -> Box3 {
    Box3 {
        center: [rng.uniform(0.0, 3.0), rng.uniform(0.0, 3.0), rng.uniform(0.0, 3.0)],
        size: [rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0)],
    }
}

/// IoU from explicit corner intervals.
pub fn iou_by_corners(a: &Box3, b: &Box3) -> f64 {
    let mut inter = 1.0;
    for axis in 0..3 {
        let a_lo = a.center[axis] - a.size[axis] / 2.0;
        let a_hi = a.center[axis] + a.size[axis] / 2.0;
        let b_lo = b.center[axis] - b.size[axis] / 2.0;
        let b_hi = b.center[axis] + b.size[axis] / 2.0;
        let lo = if a_lo > b_lo { a_lo } else { b_lo };
        let hi = if a_hi < b_hi { a_hi } else { b_hi };
        if hi <= lo {
            return 0.0;
        }
        inter *= hi - lo;
    }
    let va = a.size[0] * a.size[1] * a.size[2];
    let vb = b.size[0] * b.size[1] * b.size[2];
    inter / (va + vb - inter)
}
