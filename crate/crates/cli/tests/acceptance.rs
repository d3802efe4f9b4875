//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ham_core::attention::{placm_block, AlignmentStage, AlignmentState, KeyMask, PlacmWeights};
use ham_core::head::{
    acc_at_iou, adapt_identification, group_by_instance, matching_loss, total_loss,
    IdentificationInput, IdentificationStrategy, LossWeights, MatchWeights,
};
use ham_core::language::Vocabulary;
use ham_core::oracle::{
    grad_suite, iou_by_corners, random_box, sampling_suite, smgm_check, softmax_suite,
};
use ham_core::pipeline::{run_forward, HamWeights, PipelineConfig};
use ham_core::scene::{iou3d, read_queries, Box3, GeneratorConfig, Scene, generate_scene};
use ham_core::{Mat, Rng};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn ham() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ham"))
}

fn run_ok(cmd: &mut Command) -> Result<(), String> {
    let out = cmd.output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn smgm_equivalence() -> Outcome {
    let start = Instant::now();
    let report = match smgm_check(7, 20, 256, 64, 32, 4) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let secs = start.elapsed().as_secs_f64();
    outcome(
        report.max_deviation < 1e-9 && secs < 60.0,
        format!(
            "20 scenes, r in {{2,3,4}}, N=256, M=64: max |diff| {:.3e} (tol 1e-9), {secs:.1}s (limit 60s)",
            report.max_deviation
        ),
    )
}

fn sampling_exactness() -> Outcome {
    match sampling_suite(11, 100) {
        Ok(r) => outcome(
            r.passed,
            format!("{} ({} mismatches)", r.detail, r.max_deviation),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn gradient_check() -> Outcome {
    match grad_suite(13, 100) {
        Ok(r) => outcome(
            r.max_deviation < 1e-6,
            format!("{}: max |analytic - fd| {:.3e} (tol 1e-6)", r.detail, r.max_deviation),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn loss_closed_forms() -> Outcome {
    let uniform = |m: usize| {
        let mut labels = vec![0.0; m];
        labels[m / 3] = 1.0;
        matching_loss(&vec![0.37; m], &labels).unwrap()
    };
    let e4 = (uniform(4) - 4f64.ln()).abs();
    let e512 = (uniform(512) - 6.238324625039508).abs();
    let total = total_loss(1.0, 1.0, 1.0, LossWeights::default()).l_total;
    outcome(
        e4 < 1e-12 && e512 < 1e-12 && total == 10.2,
        format!("|L-ln4| {e4:.1e}, |L-ln512| {e512:.1e} (tol 1e-12), total(1,1,1) = {total}"),
    )
}

fn iou_metrics() -> Outcome {
    let a = Box3::new([0.0; 3], [2.0; 3]).unwrap();
    let b = Box3::new([1.0, 0.0, 0.0], [2.0; 3]).unwrap();
    let hand = (iou3d(&a, &b) - 1.0 / 3.0).abs();
    let mut rng = Rng::new(17);
    let pred: Vec<Box3> = (0..1000).map(|_| random_box(&mut rng)).collect();
    let gt: Vec<Box3> = (0..1000).map(|_| random_box(&mut rng)).collect();
    let mut exact = true;
    let mut last = f64::INFINITY;
    let mut monotone = true;
    for step in 1..100 {
        let t = step as f64 / 100.0;
        let hits = pred.iter().zip(&gt).filter(|(p, g)| iou_by_corners(p, g) > t).count();
        let acc = acc_at_iou(&pred, &gt, t).unwrap();
        exact &= acc == hits as f64 / 1000.0;
        monotone &= acc <= last;
        last = acc;
    }
    outcome(
        hand < 1e-12 && exact && monotone,
        format!(
            "unit-offset cubes |iou-1/3| {hand:.1e}; 1000 pairs exact at 99 thresholds: {exact}; monotone: {monotone}"
        ),
    )
}

fn softmax_semantics() -> Outcome {
    let report = match softmax_suite(19) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut rng = Rng::new(19);
    let mut identical = true;
    for t in 0..10 {
        let w = PlacmWeights::random(16, 4, 2, t, "p");
        let m = 1 + rng.below(12);
        let n = 1 + rng.below(30);
        let q = AlignmentState {
            q: Mat::random_normal(m, 16, 1.0, &mut rng),
            stage: AlignmentStage::Raw,
        };
        let keys = Mat::random_normal(n, 16, 1.0, &mut rng);
        let words = Mat::random_normal(1 + rng.below(10), 16, 1.0, &mut rng);
        let sentence = Mat::random_normal(1, 16, 1.0, &mut rng);
        let full = KeyMask::all_visible(m, n);
        let a = placm_block(&q, &keys, &words, &sentence, &w, None).unwrap();
        let b = placm_block(&q, &keys, &words, &sentence, &w, Some(&full)).unwrap();
        identical &= a.q.as_slice().iter().zip(b.q.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits());
    }
    outcome(
        report.passed && identical,
        format!(
            "masked weight / row-sum max deviation {:.1e} (tol 1e-12); all-true mask bit-identical on 10 cases: {identical}",
            report.max_deviation
        ),
    )
}

const SMALL_CONFIG: &str = r#"{"n_points": 4000, "n_keys": 256, "n_proposals": 64, "width": 32, "heads": 4, "word_dim": 24}"#;

fn determinism(dir: &Path) -> Outcome {
    let cfg = dir.join("small.json");
    fs::write(&cfg, SMALL_CONFIG).unwrap();
    let gen = dir.join("det");
    let step = || -> Result<(Vec<u8>, Vec<u8>), String> {
        run_ok(ham().args(["--seed", "42", "--config"]).arg(&cfg).arg("generate").arg("--out-dir").arg(&gen))?;
        let mut outs = Vec::new();
        for name in ["a.json", "b.json"] {
            run_ok(
                ham()
                    .args(["--seed", "42", "--config"])
                    .arg(&cfg)
                    .arg("forward")
                    .arg("--scene")
                    .arg(gen.join("scene.hamp"))
                    .arg("--queries")
                    .arg(gen.join("queries.jsonl"))
                    .arg("--dump-logits")
                    .arg("--out")
                    .arg(dir.join(name)),
            )?;
            outs.push(fs::read(dir.join(name)).map_err(|e| e.to_string())?);
        }
        Ok((outs.remove(0), outs.remove(0)))
    };
    let first = Rng::new(0).next_u64();
    match step() {
        Ok((a, b)) => outcome(
            a == b && !a.is_empty() && first == 0xE220A8397B1DCDAF,
            format!(
                "two `ham forward --seed 42` runs byte-identical: {} ({} bytes); splitmix64 seed 0 first output {first:#018X}",
                a == b,
                a.len()
            ),
        ),
        Err(e) => outcome(false, e),
    }
}

fn peak_rss_kib() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find(|l| l.starts_with("VmHWM:"))?
        .split_whitespace()
        .nth(1)?
        .parse()
        .ok()
}

fn scale_smoke(dir: &Path) -> Outcome {
    let gen = dir.join("scale");
    let aug = gen.join("queries_aug.jsonl");
    let prepared = run_ok(ham().args(["--seed", "42", "generate", "--out-dir"]).arg(&gen)).and_then(|_| {
        run_ok(
            ham()
                .args(["--seed", "42", "prompt", "--mask", "0.2", "--intra", "1,6", "--inter", "8", "--in"])
                .arg(gen.join("queries.jsonl"))
                .arg("--out")
                .arg(&aug),
        )
    });
    if let Err(e) = prepared {
        return outcome(false, e);
    }
    let scene = Scene::load(gen.join("scene.hamp")).unwrap();
    let queries: Vec<_> = read_queries(&aug).unwrap().into_iter().take(8).collect();
    let config = PipelineConfig {
        seed: 42,
        ..PipelineConfig::default()
    };
    let vocab = Vocabulary::builtin();
    let start = Instant::now();
    let weights = HamWeights::random(&config, vocab.len());
    let report = run_forward(&scene, &queries, &vocab, &weights, &config, false);
    let secs = start.elapsed().as_secs_f64();
    let peak_mib = peak_rss_kib().map(|k| k as f64 / 1024.0);
    match report {
        Ok(r) => {
            let mem_ok = peak_mib.is_some_and(|m| m < 4096.0);
            outcome(
                r.results.len() == 8 && secs < 300.0 && mem_ok,
                format!(
                    "L={} N={} M={} C={} r={}, {} queries: {secs:.1}s (limit 300s), peak RSS {} (limit 4096 MiB)",
                    r.scene.points,
                    config.n_keys,
                    config.n_proposals,
                    config.width,
                    config.resolution,
                    r.results.len(),
                    peak_mib.map_or("unavailable".into(), |m| format!("{m:.0} MiB")),
                ),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn identification() -> Outcome {
    let c = 6;
    let mut weights = MatchWeights::zeros(c);
    for j in 0..c {
        weights.w1[(j, j)] = 1.0;
        weights.w2[(j, 0)] = 1.0;
    }
    let mut cases = 0;
    let mut correct = 0;
    let mut dominated = true;
    for seed in 0..5 {
        let scene = generate_scene(seed, &GeneratorConfig { n_points: 3000, ..Default::default() }).unwrap();
        let mut rng = Rng::new(seed);
        let mut points = Vec::new();
        for o in &scene.objects {
            for _ in 0..4 {
                let p = [0, 1, 2].map(|a| o.bbox.center[a] + rng.uniform(-0.1, 0.1) * o.bbox.size[a]);
                points.push(p);
            }
        }
        for target in &scene.objects {
            let predicted = target.bbox;
            // proposal evidence decays with distance from the predicted box
            let feats = Mat::from_vec(
                points.len(),
                c,
                points
                    .iter()
                    .flat_map(|p| {
                        let d = ham_core::scene::distance(*p, predicted.center);
                        vec![(-d).exp(); c]
                    })
                    .collect(),
            )
            .unwrap();
            let input = IdentificationInput {
                objects: &scene.objects,
                predicted_box: predicted,
                proposal_points: &points,
                features: Some(&feats),
                match_weights: Some(&weights),
            };
            for s in IdentificationStrategy::ALL {
                cases += 1;
                if adapt_identification(&input, s).is_ok_and(|r| r.instance_id == target.instance_id) {
                    correct += 1;
                }
            }
            let noisy = Mat::random_normal(points.len(), c, 1.0, &mut rng);
            let max = group_by_instance(&points, &noisy, &scene.objects, IdentificationStrategy::MaxPool).unwrap();
            let mean = group_by_instance(&points, &noisy, &scene.objects, IdentificationStrategy::MeanPool).unwrap();
            dominated &= max.aggregated.as_slice().iter().zip(mean.aggregated.as_slice()).all(|(a, b)| a >= b);
        }
    }
    outcome(
        correct == cases && dominated,
        format!("{correct}/{cases} strategy selections hit the predicted instance; max-pool >= mean-pool: {dominated}"),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    type Criterion<'a> = (&'a str, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("scale smoke", Box::new(|| scale_smoke(dir.path()))),
        ("smgm equivalence", Box::new(smgm_equivalence)),
        ("sampling correctness", Box::new(sampling_exactness)),
        ("gradient check", Box::new(gradient_check)),
        ("loss closed forms", Box::new(loss_closed_forms)),
        ("iou and metrics", Box::new(iou_metrics)),
        ("softmax and mask semantics", Box::new(softmax_semantics)),
        ("determinism", Box::new(|| determinism(dir.path()))),
        ("identification adaptation", Box::new(identification)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let o = check();
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {}", o.detail);
        if !o.passed {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
