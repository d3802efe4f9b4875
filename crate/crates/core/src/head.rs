//! Grounding head: matching scores, label assignment, losses, accuracy
//! metrics and the identification-setting adaptation strategies.

use serde::{Deserialize, Serialize};

use crate::container::TensorStore;
use crate::error::{shape_err, Error, Result};
use crate::sampling::ProposalSet;
use crate::scene::{distance, iou3d, Box3, Scene, SceneObject};
use crate::tensor::{argmax, log_sum_exp, softmax, Mat};

/// Two-layer perceptron `C -> C -> 1` with a ReLU between.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchWeights {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: f64,
}

impl MatchWeights {
    pub fn zeros(width: usize) -> Self {
        Self {
            w1: Mat::zeros(width, width),
            b1: vec![0.0; width],
            w2: Mat::zeros(width, 1),
            b2: 0.0,
        }
    }

    pub fn random(width: usize, seed: u64, prefix: &str) -> Self {
        Self {
            w1: crate::attention::dense(width, width, seed, &format!("{prefix}.w1")),
            b1: crate::attention::small_bias(width, seed, &format!("{prefix}.b1")),
            w2: crate::attention::dense(width, 1, seed, &format!("{prefix}.w2")),
            b2: 0.0,
        }
    }

    pub fn store(&self, prefix: &str, store: &mut TensorStore) {
        store.insert_mat(format!("{prefix}.w1"), &self.w1);
        store.insert_vector(format!("{prefix}.b1"), &self.b1);
        store.insert_mat(format!("{prefix}.w2"), &self.w2);
        store.insert_vector(format!("{prefix}.b2"), &[self.b2]);
    }

    pub fn load(prefix: &str, store: &TensorStore) -> Result<Self> {
        let b2 = store.vector(&format!("{prefix}.b2"))?;
        Ok(Self {
            w1: store.mat(&format!("{prefix}.w1"))?,
            b1: store.vector(&format!("{prefix}.b1"))?,
            w2: store.mat(&format!("{prefix}.w2"))?,
            b2: *b2.first().ok_or_else(|| shape_err("MatchWeights::load", "empty b2"))?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub best_index: usize,
    pub best_box: Box3,
}

/// One logit per row of `fused`.
pub fn match_logits(fused: &Mat, w: &MatchWeights) -> Result<Vec<f64>> {
    let hidden = fused.affine(&w.w1, &w.b1)?.map(|v| v.max(0.0));
    let out = hidden.affine(&w.w2, &[w.b2])?;
    if out.cols() != 1 {
        return Err(shape_err("match_logits", "second layer must map to one logit"));
    }
    Ok(out.into_vec())
}

/// Logits, their softmax, and the highest-scoring box (lowest index on ties).
pub fn match_scores(fused: &Mat, boxes: &[Box3], w: &MatchWeights) -> Result<MatchResult> {
    if boxes.len() != fused.rows() || boxes.is_empty() {
        return Err(shape_err(
            "match_scores",
            format!("{} boxes for {} feature rows", boxes.len(), fused.rows()),
        ));
    }
    let logits = match_logits(fused, w)?;
    let probs = softmax(&logits)?;
    let best_index = argmax(&probs).expect("nonempty");
    Ok(MatchResult {
        logits,
        probs,
        best_index,
        best_box: boxes[best_index],
    })
}

/// One-hot label at the box with the highest IoU against `gt`; ties, including
/// the all-zero case, go to the lowest index.
pub fn assign_labels(boxes: &[Box3], gt: &Box3) -> Result<Vec<f64>> {
    let ious: Vec<f64> = boxes.iter().map(|b| iou3d(b, gt)).collect();
    let best = argmax(&ious).ok_or_else(|| Error::InvalidArgument("no boxes to label".into()))?;
    let mut labels = vec![0.0; boxes.len()];
    labels[best] = 1.0;
    Ok(labels)
}

fn check_labels(logits: &[f64], labels: &[f64]) -> Result<()> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(shape_err(
            "matching_loss",
            format!("{} logits vs {} labels", logits.len(), labels.len()),
        ));
    }
    Ok(())
}

/// Softmax cross-entropy `-sum y_i log softmax(logits)_i`, via log-sum-exp.
pub fn matching_loss(logits: &[f64], labels: &[f64]) -> Result<f64> {
    check_labels(logits, labels)?;
    let lse = log_sum_exp(logits);
    Ok(labels
        .iter()
        .zip(logits)
        .filter(|(y, _)| **y != 0.0)
        .map(|(y, l)| -y * (l - lse))
        .sum())
}

/// Gradient of [`matching_loss`] with respect to the logits: `softmax - labels`
/// (for labels summing to one).
pub fn matching_loss_grad(logits: &[f64], labels: &[f64]) -> Result<Vec<f64>> {
    check_labels(logits, labels)?;
    let total: f64 = labels.iter().sum();
    let p = softmax(logits)?;
    Ok(p.iter().zip(labels).map(|(p, y)| total * p - y).collect())
}

/// Linear language-to-object classifier, `C x K`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierWeights {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

impl ClassifierWeights {
    pub fn zeros(width: usize, classes: usize) -> Self {
        Self {
            weight: Mat::zeros(width, classes),
            bias: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.weight.cols()
    }
}

/// Cross-entropy of the sentence embedding's class prediction.
pub fn cls_loss(sentence: &Mat, w: &ClassifierWeights, target_class: usize) -> Result<f64> {
    if target_class >= w.classes() {
        return Err(Error::ClassOutOfRange {
            class: target_class,
            count: w.classes(),
        });
    }
    if sentence.rows() != 1 {
        return Err(shape_err("cls_loss", "sentence embedding must be a single row"));
    }
    let logits = sentence.affine(&w.weight, &w.bias)?;
    let row = logits.row(0);
    Ok(log_sum_exp(row) - row[target_class])
}

/// Huber loss with unit threshold.
pub fn smooth_l1(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        0.5 * x * x
    } else {
        a - 0.5
    }
}

const BCE_EPS: f64 = 1e-12;

/// Simplified detection loss, averaged over proposals:
/// objectness binary cross-entropy (positive iff the proposal point lies in a
/// ground-truth box), plus for positives the smooth-L1 center offset to the
/// nearest ground-truth center and the L1 log-size residual against that box.
pub fn det_loss_simplified(proposals: &ProposalSet, objectness: &[f64], scene: &Scene) -> Result<f64> {
    if scene.objects.is_empty() {
        return Err(Error::InvalidArgument("detection loss needs at least one object".into()));
    }
    if objectness.len() != proposals.len() || proposals.boxes.len() != proposals.len() {
        return Err(shape_err(
            "det_loss_simplified",
            format!("{} objectness values for {} proposals", objectness.len(), proposals.len()),
        ));
    }
    if proposals.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for ((p, b), &obj) in proposals.points.iter().zip(&proposals.boxes).zip(objectness) {
        let positive = scene.objects.iter().any(|o| o.bbox.contains(*p, 0.0));
        let o = obj.clamp(BCE_EPS, 1.0 - BCE_EPS);
        total += if positive { -o.ln() } else { -(1.0 - o).ln() };
        if positive {
            let gt = nearest_center(&b.center, &scene.objects);
            for a in 0..3 {
                total += smooth_l1(b.center[a] - gt.center[a]);
                total += (b.size[a].ln() - gt.size[a].ln()).abs();
            }
        }
    }
    Ok(total / proposals.len() as f64)
}

fn nearest_center<'a>(p: &[f64; 3], objects: &'a [SceneObject]) -> &'a Box3 {
    let d: Vec<f64> = objects
        .iter()
        .map(|o| -crate::scene::distance(*p, o.bbox.center))
        .collect();
    &objects[argmax(&d).expect("nonempty")].bbox
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub det: f64,
    pub matching: f64,
    pub cls: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            det: 10.0,
            matching: 0.1,
            cls: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_match: f64,
    pub l_det: f64,
    pub l_cls: f64,
    pub l_total: f64,
    pub weights: LossWeights,
}

pub fn total_loss(l_det: f64, l_match: f64, l_cls: f64, weights: LossWeights) -> LossReport {
    LossReport {
        l_match,
        l_det,
        l_cls,
        l_total: weights.det * l_det + weights.matching * l_match + weights.cls * l_cls,
        weights,
    }
}

/// Fraction of pairs whose IoU strictly exceeds `threshold`.
pub fn acc_at_iou(pred: &[Box3], gt: &[Box3], threshold: f64) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(shape_err(
            "acc_at_iou",
            format!("{} predictions vs {} ground truths", pred.len(), gt.len()),
        ));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "IoU threshold must lie in (0, 1), got {threshold}"
        )));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let hits = pred
        .iter()
        .zip(gt)
        .filter(|(p, g)| iou3d(p, g) > threshold)
        .count();
    Ok(hits as f64 / pred.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdentificationStrategy {
    CenterDistance,
    Iou,
    MeanPool,
    MaxPool,
}

impl IdentificationStrategy {
    pub const ALL: [IdentificationStrategy; 4] = [
        IdentificationStrategy::CenterDistance,
        IdentificationStrategy::Iou,
        IdentificationStrategy::MeanPool,
        IdentificationStrategy::MaxPool,
    ];
}

/// Proposals grouped by the ground-truth instance containing them.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceGroups {
    /// Index into the object list for each proposal, `None` when it lies in no box.
    pub assignment: Vec<Option<usize>>,
    /// Object indices of the aggregated rows, ascending.
    pub objects: Vec<usize>,
    /// One pooled feature row per entry of `objects`.
    pub aggregated: Mat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pool {
    Mean,
    Max,
}

/// Assigns each proposal to the containing box with the nearest center (ties
/// to the lower object index) and pools member features per object.
/// Proposals inside no box are dropped.
pub fn group_by_instance(
    points: &[[f64; 3]],
    features: &Mat,
    objects: &[SceneObject],
    strategy: IdentificationStrategy,
) -> Result<InstanceGroups> {
    let pool = match strategy {
        IdentificationStrategy::MeanPool => Pool::Mean,
        IdentificationStrategy::MaxPool => Pool::Max,
        _ => {
            return Err(Error::InvalidArgument(
                "grouping needs a pooling strategy".into(),
            ))
        }
    };
    if points.len() != features.rows() {
        return Err(shape_err(
            "group_by_instance",
            format!("{} points for {} feature rows", points.len(), features.rows()),
        ));
    }
    let assignment: Vec<Option<usize>> = points
        .iter()
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for (k, o) in objects.iter().enumerate() {
                if !o.bbox.contains(*p, 0.0) {
                    continue;
                }
                let d = distance(*p, o.bbox.center);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((k, d));
                }
            }
            best.map(|(k, _)| k)
        })
        .collect();
    let mut rows = Vec::new();
    let mut members_of = Vec::new();
    for k in 0..objects.len() {
        let members: Vec<usize> = (0..points.len()).filter(|&i| assignment[i] == Some(k)).collect();
        if !members.is_empty() {
            members_of.push(k);
            rows.push(pool_rows(features, &members, pool));
        }
    }
    if rows.is_empty() {
        return Err(Error::Aggregation);
    }
    Ok(InstanceGroups {
        assignment,
        objects: members_of,
        aggregated: Mat::from_rows(&rows)?,
    })
}

fn pool_rows(features: &Mat, members: &[usize], pool: Pool) -> Vec<f64> {
    let c = features.cols();
    match pool {
        Pool::Max => {
            let mut out = vec![f64::NEG_INFINITY; c];
            for &i in members {
                for (o, v) in out.iter_mut().zip(features.row(i)) {
                    *o = o.max(*v);
                }
            }
            out
        }
        Pool::Mean => {
            let mut out = vec![0.0; c];
            for &i in members {
                for (o, v) in out.iter_mut().zip(features.row(i)) {
                    *o += v;
                }
            }
            out.iter_mut().for_each(|o| *o /= members.len() as f64);
            out
        }
    }
}

/// Inputs shared by every identification strategy.
pub struct IdentificationInput<'a> {
    pub objects: &'a [SceneObject],
    /// The box predicted by the grounding head.
    pub predicted_box: Box3,
    pub proposal_points: &'a [[f64; 3]],
    /// Proposal features fed to the matching head when pooling.
    pub features: Option<&'a Mat>,
    pub match_weights: Option<&'a MatchWeights>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Identification {
    pub instance_id: u32,
    pub groups: Option<InstanceGroups>,
    pub match_result: Option<MatchResult>,
}

/// Maps a grounding-by-detection prediction onto a given ground-truth instance.
pub fn adapt_identification(
    input: &IdentificationInput<'_>,
    strategy: IdentificationStrategy,
) -> Result<Identification> {
    let objects = input.objects;
    if objects.is_empty() {
        return Err(Error::InvalidArgument("identification needs ground-truth objects".into()));
    }
    let simple = |k: usize| Identification {
        instance_id: objects[k].instance_id,
        groups: None,
        match_result: None,
    };
    match strategy {
        IdentificationStrategy::CenterDistance => {
            let neg: Vec<f64> = objects
                .iter()
                .map(|o| -input.predicted_box.center_distance(&o.bbox))
                .collect();
            Ok(simple(argmax(&neg).expect("nonempty")))
        }
        IdentificationStrategy::Iou => {
            let ious: Vec<f64> = objects
                .iter()
                .map(|o| iou3d(&input.predicted_box, &o.bbox))
                .collect();
            Ok(simple(argmax(&ious).expect("nonempty")))
        }
        IdentificationStrategy::MeanPool | IdentificationStrategy::MaxPool => {
            let (features, weights) = input.features.zip(input.match_weights).ok_or_else(|| {
                Error::InvalidArgument("pooling strategies need features and match weights".into())
            })?;
            let groups = group_by_instance(input.proposal_points, features, objects, strategy)?;
            let boxes: Vec<Box3> = groups.objects.iter().map(|&k| objects[k].bbox).collect();
            let m = match_scores(&groups.aggregated, &boxes, weights)?;
            Ok(Identification {
                instance_id: objects[groups.objects[m.best_index]].instance_id,
                groups: Some(groups),
                match_result: Some(m),
            })
        }
    }
}
