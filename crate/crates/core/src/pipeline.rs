//! End-to-end forward pass: scene preparation shared by all queries, then a
//! per-query language encoding, SMGM and matching step.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{positional_embed_points, positional_embed_text, Linear, PlacmWeights};
use crate::container::TensorStore;
use crate::error::{Error, Result};
use crate::head::{
    assign_labels, cls_loss, det_loss_simplified, match_scores, matching_loss, total_loss,
    ClassifierWeights, LossReport, LossWeights, MatchResult, MatchWeights,
};
use crate::language::{embed, gru_encode, random_embedding_table, tokenize, GruWeights, Vocabulary};
use crate::sampling::{self, build_key_points, select_proposals, KeyPointSet, ProposalBoxes, ProposalSet, Strategy};
use crate::scene::{iou3d, Box3, QueryRecord, Scene, CLASS_NAMES};
use crate::smgm::{build_partition, smgm_forward, SmgmWeights, SpacePartition};
use crate::tensor::Mat;

/// Every tunable of the forward pass. Defaults follow the reference setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Raw points per generated scene (L).
    pub n_points: usize,
    /// Key points (N).
    pub n_keys: usize,
    /// Proposal points (M).
    pub n_proposals: usize,
    /// Feature width (C).
    pub width: usize,
    /// Maximum sentence length (T).
    pub max_len: usize,
    /// Space partition cells per axis (r).
    pub resolution: usize,
    pub heads: usize,
    pub placm_depth: usize,
    pub mask_ratio: f64,
    pub seed: u64,
    /// Width of the word embedding table fed to the GRU.
    pub word_dim: usize,
    pub proposal_edge: f64,
    pub n_classes: usize,
    pub sampling: Strategy,
    pub start_id: usize,
    /// Per-channel F-FPS weights; `None` means all ones.
    pub channel_weights: Option<Vec<f64>>,
    pub loss_weights: LossWeights,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_points: 50_000,
            n_keys: 1024,
            n_proposals: 512,
            width: 288,
            max_len: crate::language::MAX_LEN,
            resolution: crate::smgm::DEFAULT_RESOLUTION,
            heads: 8,
            placm_depth: 1,
            mask_ratio: 0.2,
            seed: 0,
            word_dim: 300,
            proposal_edge: 0.5,
            n_classes: CLASS_NAMES.len(),
            sampling: Strategy::Cs,
            start_id: 0,
            channel_weights: None,
            loss_weights: LossWeights::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_proposals == 0 || self.n_proposals > self.n_keys {
            return bad(format!(
                "need 1 <= M <= N, got M={} N={}",
                self.n_proposals, self.n_keys
            ));
        }
        if self.n_keys > self.n_points {
            return bad(format!("need N <= L, got N={} L={}", self.n_keys, self.n_points));
        }
        if self.heads == 0 || !self.width.is_multiple_of(self.heads) {
            return bad(format!("width {} not divisible by {} heads", self.width, self.heads));
        }
        if self.resolution == 0 {
            return bad("resolution must be at least 1".into());
        }
        if self.placm_depth == 0 {
            return bad("placm depth must be at least 1".into());
        }
        if self.max_len == 0 {
            return bad("max sentence length must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return bad(format!("mask ratio {} outside [0, 1]", self.mask_ratio));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// All learnable parameters of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct HamWeights {
    pub embedding: Mat,
    pub gru: GruWeights,
    pub pos_key: Linear,
    pub pos_proposal: Linear,
    pub smgm: SmgmWeights,
    pub matcher: MatchWeights,
    pub objectness: Linear,
    pub classifier: ClassifierWeights,
}

impl HamWeights {
    /// Seeded random weights. Each tensor draws from its own named stream.
    pub fn random(config: &PipelineConfig, vocab_size: usize) -> Self {
        let (c, seed) = (config.width, config.seed);
        let mut classifier = ClassifierWeights::zeros(c, config.n_classes);
        classifier.weight = crate::attention::dense(c, config.n_classes, seed, "classifier.weight");
        Self {
            embedding: random_embedding_table(vocab_size, config.word_dim, seed),
            gru: GruWeights::random(config.word_dim, c, seed, "language.gru"),
            pos_key: Linear::random(3, c, seed, "pos.key"),
            pos_proposal: Linear::random(9, c, seed, "pos.proposal"),
            smgm: SmgmWeights {
                global: PlacmWeights::random(c, config.heads, config.placm_depth, seed, "placm.global"),
                local: PlacmWeights::random(c, config.heads, config.placm_depth, seed, "placm.local"),
            },
            matcher: MatchWeights::random(c, seed, "match"),
            objectness: Linear::random(c, 1, seed, "objectness"),
            classifier,
        }
    }

    pub fn to_store(&self) -> TensorStore {
        let mut s = TensorStore::new();
        s.insert_mat("language.embedding", &self.embedding);
        self.gru.store("language.gru", &mut s);
        self.pos_key.store("pos.key", &mut s);
        self.pos_proposal.store("pos.proposal", &mut s);
        self.smgm.global.store("placm.global", &mut s);
        self.smgm.local.store("placm.local", &mut s);
        self.matcher.store("match", &mut s);
        self.objectness.store("objectness", &mut s);
        s.insert_mat("classifier.weight", &self.classifier.weight);
        s.insert_vector("classifier.bias", &self.classifier.bias);
        s
    }

    pub fn from_store(store: &TensorStore, config: &PipelineConfig) -> Result<Self> {
        Ok(Self {
            embedding: store.mat("language.embedding")?,
            gru: GruWeights::load("language.gru", store)?,
            pos_key: Linear::load("pos.key", store)?,
            pos_proposal: Linear::load("pos.proposal", store)?,
            smgm: SmgmWeights {
                global: PlacmWeights::load("placm.global", config.heads, config.placm_depth, store)?,
                local: PlacmWeights::load("placm.local", config.heads, config.placm_depth, store)?,
            },
            matcher: MatchWeights::load("match", store)?,
            objectness: Linear::load("objectness", store)?,
            classifier: ClassifierWeights {
                weight: store.mat("classifier.weight")?,
                bias: store.vector("classifier.bias")?,
            },
        })
    }
}

/// Query-independent state: sampled key points, proposals with positional
/// embeddings added, and the space partition.
#[derive(Clone, Debug)]
pub struct PreparedScene {
    pub keys: KeyPointSet,
    pub proposals: ProposalSet,
    pub key_features: Mat,
    pub proposal_features: Mat,
    pub objectness: Vec<f64>,
    pub partition: SpacePartition,
}

pub fn prepare_scene(
    scene: &Scene,
    config: &PipelineConfig,
    weights: &HamWeights,
    boxes: &ProposalBoxes,
) -> Result<PreparedScene> {
    config.validate()?;
    let cloud = &scene.cloud;
    let channel_weights = config
        .channel_weights
        .clone()
        .unwrap_or_else(|| sampling::default_channel_weights(cloud));
    let sample = sampling::sample(
        config.sampling,
        cloud,
        config.n_keys,
        config.start_id,
        &channel_weights,
    )?;
    let keys = build_key_points(cloud, &scene.objects, &sample, config.width, config.seed)?;
    let proposals = select_proposals(&keys, config.n_proposals, boxes)?;
    let key_features = positional_embed_points(&keys.features, &keys.points, None, &weights.pos_key)?;
    let proposal_features = positional_embed_points(
        &proposals.features,
        &proposals.points,
        Some(&proposals.boxes),
        &weights.pos_proposal,
    )?;
    let objectness = proposal_features
        .affine(&weights.objectness.weight, &weights.objectness.bias)?
        .into_vec()
        .into_iter()
        .map(|v| 1.0 / (1.0 + (-v).exp()))
        .collect();
    let partition = build_partition(&scene.bounds, config.resolution, &keys.points, &proposals.points)?;
    Ok(PreparedScene {
        keys,
        proposals,
        key_features,
        proposal_features,
        objectness,
        partition,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query_index: usize,
    pub scene_id: String,
    pub text: String,
    pub valid_len: usize,
    pub best_index: usize,
    pub best_prob: f64,
    pub best_box: Box3,
    pub target_instance_ids: Vec<u32>,
    /// IoU of the chosen box with the first target's box.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<f64>>,
}

/// Grounds one query against a prepared scene.
pub fn forward_query(
    scene: &Scene,
    prepared: &PreparedScene,
    query: &QueryRecord,
    vocab: &Vocabulary,
    weights: &HamWeights,
    config: &PipelineConfig,
) -> Result<(MatchResult, Option<LossReport>, usize)> {
    let tokens = tokenize(&query.text, vocab, config.max_len)?;
    let vectors = embed(&tokens, &weights.embedding)?;
    let lang = gru_encode(&vectors, &weights.gru, config.max_len)?;
    let pe = positional_embed_text(lang.valid_len, config.width);
    let words = lang.valid_words().add(&pe)?;
    let sentence = lang.sentence.add(&pe.head_rows(1))?;
    let out = smgm_forward(
        &prepared.proposal_features,
        &prepared.key_features,
        &words,
        &sentence,
        &weights.smgm,
        &prepared.partition,
    )?;
    let result = match_scores(&out.fused, &prepared.proposals.boxes, &weights.matcher)?;

    // supervision uses the first target only
    let loss = match query.target_instance_ids.first().and_then(|&id| scene.object(id)) {
        Some(target) => {
            let labels = assign_labels(&prepared.proposals.boxes, &target.bbox)?;
            let l_match = matching_loss(&result.logits, &labels)?;
            let l_det = det_loss_simplified(&prepared.proposals, &prepared.objectness, scene)?;
            let class = target.class_id as usize;
            let l_cls = if class < weights.classifier.classes() {
                cls_loss(&lang.sentence, &weights.classifier, class)?
            } else {
                return Err(Error::ClassOutOfRange {
                    class,
                    count: weights.classifier.classes(),
                });
            };
            Some(total_loss(l_det, l_match, l_cls, config.loss_weights))
        }
        None => None,
    };
    Ok((result, loss, lang.valid_len))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub points: usize,
    pub keys: usize,
    pub proposals: usize,
    pub occupied_regions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardReport {
    pub config: PipelineConfig,
    pub scene: SceneSummary,
    pub results: Vec<QueryResult>,
}

/// Runs every query against one scene. Queries run in parallel; results keep input order.
pub fn run_forward(
    scene: &Scene,
    queries: &[QueryRecord],
    vocab: &Vocabulary,
    weights: &HamWeights,
    config: &PipelineConfig,
    dump_logits: bool,
) -> Result<ForwardReport> {
    let boxes = ProposalBoxes::Cubes(config.proposal_edge);
    run_forward_with_boxes(scene, queries, vocab, weights, config, &boxes, dump_logits)
}

pub fn run_forward_with_boxes(
    scene: &Scene,
    queries: &[QueryRecord],
    vocab: &Vocabulary,
    weights: &HamWeights,
    config: &PipelineConfig,
    boxes: &ProposalBoxes,
    dump_logits: bool,
) -> Result<ForwardReport> {
    let prepared = prepare_scene(scene, config, weights, boxes)?;
    let results = queries
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            let wrap = |e: Error| Error::Query {
                index: i,
                source: Box::new(e),
            };
            q.validate_against(scene).map_err(wrap)?;
            let (m, loss, valid_len) =
                forward_query(scene, &prepared, q, vocab, weights, config).map_err(wrap)?;
            let target_iou = q
                .target_instance_ids
                .first()
                .and_then(|&id| scene.object(id))
                .map(|o| iou3d(&m.best_box, &o.bbox));
            Ok(QueryResult {
                query_index: i,
                scene_id: q.scene_id.clone(),
                text: q.text.clone(),
                valid_len,
                best_index: m.best_index,
                best_prob: m.probs[m.best_index],
                best_box: m.best_box,
                target_instance_ids: q.target_instance_ids.clone(),
                target_iou,
                loss,
                logits: dump_logits.then_some(m.logits),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (keys_hist, props_hist) = prepared.partition.histogram();
    Ok(ForwardReport {
        config: config.clone(),
        scene: SceneSummary {
            points: scene.cloud.len(),
            keys: keys_hist.iter().sum(),
            proposals: props_hist.iter().sum(),
            occupied_regions: props_hist.iter().filter(|&&c| c > 0).count(),
        },
        results,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub query_index: usize,
    pub target_instance_id: u32,
    pub best_index: usize,
    pub iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc_at_025: f64,
    pub acc_at_05: f64,
    pub n_queries: usize,
    pub per_query: Vec<EvalEntry>,
}

/// Acc@0.25 and Acc@0.5 of a forward report against each query's first target.
pub fn evaluate(scene: &Scene, report: &ForwardReport) -> Result<EvalReport> {
    let mut pred = Vec::new();
    let mut gt = Vec::new();
    let mut per_query = Vec::new();
    for r in &report.results {
        let id = *r
            .target_instance_ids
            .first()
            .ok_or_else(|| Error::InvalidArgument(format!("query {} has no target", r.query_index)))?;
        let target = scene
            .object(id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown instance {id}")))?;
        pred.push(r.best_box);
        gt.push(target.bbox);
        per_query.push(EvalEntry {
            query_index: r.query_index,
            target_instance_id: id,
            best_index: r.best_index,
            iou: iou3d(&r.best_box, &target.bbox),
        });
    }
    Ok(EvalReport {
        acc_at_025: crate::head::acc_at_iou(&pred, &gt, 0.25)?,
        acc_at_05: crate::head::acc_at_iou(&pred, &gt, 0.5)?,
        n_queries: per_query.len(),
        per_query,
    })
}
