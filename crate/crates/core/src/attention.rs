//! Multi-head attention, feed-forward sublayers, positional embeddings and the
//! PLACM block (proposal features aligned to key points plus words, then to
//! key points plus the sentence).
//!
//! Every sublayer is post-norm: `layer_norm(x + f(x))`. Hidden keys are filled
//! with `-inf` before the softmax, so they receive exactly zero weight.

use crate::container::TensorStore;
use crate::error::{shape_err, Error, Result};
use crate::rng::Rng;
use crate::scene::Box3;
use crate::tensor::{softmax_in_place, Mat};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Visibility of key columns to query rows; `true` means visible.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyMask {
    rows: usize,
    cols: usize,
    visible: Vec<bool>,
}

impl KeyMask {
    pub fn all_visible(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            visible: vec![true; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut visible = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                visible.push(f(i, j));
            }
        }
        Self {
            rows,
            cols,
            visible,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.visible[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[bool] {
        &self.visible[row * self.cols..(row + 1) * self.cols]
    }

    pub fn is_all_visible(&self) -> bool {
        self.visible.iter().all(|&v| v)
    }

    /// Appends `extra` always-visible columns on the right.
    pub fn with_visible_columns(&self, extra: usize) -> KeyMask {
        let cols = self.cols + extra;
        let mut visible = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            visible.extend_from_slice(self.row(i));
            visible.extend(std::iter::repeat_n(true, extra));
        }
        KeyMask {
            rows: self.rows,
            cols,
            visible,
        }
    }

    /// Row-major bit packing, each row padded to whole bytes, least significant bit first.
    pub fn pack_bits(&self) -> Vec<u8> {
        let row_bytes = self.cols.div_ceil(8);
        let mut out = vec![0u8; self.rows * row_bytes];
        for i in 0..self.rows {
            for j in 0..self.cols {
                if self.get(i, j) {
                    out[i * row_bytes + j / 8] |= 1 << (j % 8);
                }
            }
        }
        out
    }

    pub fn unpack_bits(rows: usize, cols: usize, bits: &[u8]) -> Result<Self> {
        let row_bytes = cols.div_ceil(8);
        if bits.len() != rows * row_bytes {
            return Err(shape_err(
                "KeyMask::unpack_bits",
                format!("{} bytes for a {rows}x{cols} mask", bits.len()),
            ));
        }
        Ok(Self::from_fn(rows, cols, |i, j| {
            bits[i * row_bytes + j / 8] & (1 << (j % 8)) != 0
        }))
    }
}

/// Query/key/value/output projections of one multi-head attention sublayer
/// plus the layer norm that follows its residual.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights {
    pub heads: usize,
    pub q_weight: Mat,
    pub q_bias: Vec<f64>,
    pub k_weight: Mat,
    pub k_bias: Vec<f64>,
    pub v_weight: Mat,
    pub v_bias: Vec<f64>,
    pub out_weight: Mat,
    pub out_bias: Vec<f64>,
    pub norm_gain: Vec<f64>,
    pub norm_bias: Vec<f64>,
}

impl AttentionWeights {
    pub fn random(width: usize, heads: usize, seed: u64, prefix: &str) -> Self {
        let w = |name: &str| dense(width, width, seed, &format!("{prefix}.{name}"));
        let b = |name: &str| small_bias(width, seed, &format!("{prefix}.{name}"));
        Self {
            heads,
            q_weight: w("q_weight"),
            q_bias: b("q_bias"),
            k_weight: w("k_weight"),
            k_bias: b("k_bias"),
            v_weight: w("v_weight"),
            v_bias: b("v_bias"),
            out_weight: w("out_weight"),
            out_bias: b("out_bias"),
            norm_gain: vec![1.0; width],
            norm_bias: vec![0.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.q_weight.rows()
    }

    fn check(&self) -> Result<()> {
        let c = self.width();
        if self.heads == 0 || !c.is_multiple_of(self.heads) {
            return Err(shape_err(
                "AttentionWeights",
                format!("width {c} not divisible by {} heads", self.heads),
            ));
        }
        let mats = [&self.q_weight, &self.k_weight, &self.v_weight, &self.out_weight];
        let vecs = [
            &self.q_bias,
            &self.k_bias,
            &self.v_bias,
            &self.out_bias,
            &self.norm_gain,
            &self.norm_bias,
        ];
        if mats.iter().any(|m| m.shape() != (c, c)) || vecs.iter().any(|v| v.len() != c) {
            return Err(shape_err("AttentionWeights", "inconsistent projection shapes"));
        }
        Ok(())
    }

    pub fn store(&self, prefix: &str, store: &mut TensorStore) {
        store.insert_mat(format!("{prefix}.q_weight"), &self.q_weight);
        store.insert_vector(format!("{prefix}.q_bias"), &self.q_bias);
        store.insert_mat(format!("{prefix}.k_weight"), &self.k_weight);
        store.insert_vector(format!("{prefix}.k_bias"), &self.k_bias);
        store.insert_mat(format!("{prefix}.v_weight"), &self.v_weight);
        store.insert_vector(format!("{prefix}.v_bias"), &self.v_bias);
        store.insert_mat(format!("{prefix}.out_weight"), &self.out_weight);
        store.insert_vector(format!("{prefix}.out_bias"), &self.out_bias);
        store.insert_vector(format!("{prefix}.norm_gain"), &self.norm_gain);
        store.insert_vector(format!("{prefix}.norm_bias"), &self.norm_bias);
    }

    pub fn load(prefix: &str, heads: usize, store: &TensorStore) -> Result<Self> {
        let w = Self {
            heads,
            q_weight: store.mat(&format!("{prefix}.q_weight"))?,
            q_bias: store.vector(&format!("{prefix}.q_bias"))?,
            k_weight: store.mat(&format!("{prefix}.k_weight"))?,
            k_bias: store.vector(&format!("{prefix}.k_bias"))?,
            v_weight: store.mat(&format!("{prefix}.v_weight"))?,
            v_bias: store.vector(&format!("{prefix}.v_bias"))?,
            out_weight: store.mat(&format!("{prefix}.out_weight"))?,
            out_bias: store.vector(&format!("{prefix}.out_bias"))?,
            norm_gain: store.vector(&format!("{prefix}.norm_gain"))?,
            norm_bias: store.vector(&format!("{prefix}.norm_bias"))?,
        };
        w.check()?;
        Ok(w)
    }
}

/// Two fully-connected layers (`C -> hidden -> C`, ReLU between) and a layer norm.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedForwardWeights {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
    pub norm_gain: Vec<f64>,
    pub norm_bias: Vec<f64>,
}

impl FeedForwardWeights {
    pub fn random(width: usize, hidden: usize, seed: u64, prefix: &str) -> Self {
        Self {
            w1: dense(width, hidden, seed, &format!("{prefix}.w1")),
            b1: small_bias(hidden, seed, &format!("{prefix}.b1")),
            w2: dense(hidden, width, seed, &format!("{prefix}.w2")),
            b2: small_bias(width, seed, &format!("{prefix}.b2")),
            norm_gain: vec![1.0; width],
            norm_bias: vec![0.0; width],
        }
    }

    pub fn store(&self, prefix: &str, store: &mut TensorStore) {
        store.insert_mat(format!("{prefix}.w1"), &self.w1);
        store.insert_vector(format!("{prefix}.b1"), &self.b1);
        store.insert_mat(format!("{prefix}.w2"), &self.w2);
        store.insert_vector(format!("{prefix}.b2"), &self.b2);
        store.insert_vector(format!("{prefix}.norm_gain"), &self.norm_gain);
        store.insert_vector(format!("{prefix}.norm_bias"), &self.norm_bias);
    }

    pub fn load(prefix: &str, store: &TensorStore) -> Result<Self> {
        Ok(Self {
            w1: store.mat(&format!("{prefix}.w1"))?,
            b1: store.vector(&format!("{prefix}.b1"))?,
            w2: store.mat(&format!("{prefix}.w2"))?,
            b2: store.vector(&format!("{prefix}.b2"))?,
            norm_gain: store.vector(&format!("{prefix}.norm_gain"))?,
            norm_bias: store.vector(&format!("{prefix}.norm_bias"))?,
        })
    }
}

/// `N(0, 1/fan_in)` matrix from a named stream.
pub(crate) fn dense(rows: usize, cols: usize, seed: u64, name: &str) -> Mat {
    let mut rng = Rng::derive_named(seed, name);
    Mat::random_normal(rows, cols, 1.0 / (rows.max(1) as f64).sqrt(), &mut rng)
}

pub(crate) fn small_bias(len: usize, seed: u64, name: &str) -> Vec<f64> {
    let mut rng = Rng::derive_named(seed, name);
    (0..len).map(|_| rng.uniform(-0.02, 0.02)).collect()
}

/// A full attention block: attention sublayer followed by the feed-forward sublayer.
#[derive(Clone, Debug, PartialEq)]
pub struct MhaWeights {
    pub attention: AttentionWeights,
    pub ffn: FeedForwardWeights,
}

impl MhaWeights {
    pub fn random(width: usize, heads: usize, seed: u64, prefix: &str) -> Self {
        Self {
            attention: AttentionWeights::random(width, heads, seed, &format!("{prefix}.attn")),
            ffn: FeedForwardWeights::random(width, 4 * width, seed, &format!("{prefix}.ffn")),
        }
    }
}

fn head_slice(m: &Mat, head: usize, head_dim: usize) -> Mat {
    let mut out = Mat::zeros(m.rows(), head_dim);
    for i in 0..m.rows() {
        out.row_mut(i)
            .copy_from_slice(&m.row(i)[head * head_dim..(head + 1) * head_dim]);
    }
    out
}

/// Raw multi-head attention `softmax(q k^T / sqrt(d)) v`, projected back to
/// `C`. Optionally records the per-head attention probabilities.
pub fn multi_head_attention(
    x: &Mat,
    y: &Mat,
    w: &AttentionWeights,
    mask: Option<&KeyMask>,
    mut probe: Option<&mut Vec<Mat>>,
) -> Result<Mat> {
    w.check()?;
    let c = w.width();
    if x.cols() != c || y.cols() != c {
        return Err(shape_err(
            "multi_head_attention",
            format!("inputs {}/{} wide, weights {c}", x.cols(), y.cols()),
        ));
    }
    if let Some(m) = mask {
        if m.rows() != x.rows() || m.cols() != y.rows() {
            return Err(shape_err(
                "multi_head_attention",
                format!(
                    "mask {}x{} for {} queries and {} keys",
                    m.rows(),
                    m.cols(),
                    x.rows(),
                    y.rows()
                ),
            ));
        }
        if let Some(row) = (0..m.rows()).find(|&i| !m.row(i).iter().any(|&v| v)) {
            return Err(Error::DegenerateMask { row });
        }
    }
    if y.rows() == 0 && x.rows() > 0 {
        return Err(Error::DegenerateMask { row: 0 });
    }
    let q = x.affine(&w.q_weight, &w.q_bias)?;
    let k = y.affine(&w.k_weight, &w.k_bias)?;
    let v = y.affine(&w.v_weight, &w.v_bias)?;
    let head_dim = c / w.heads;
    let scale = (head_dim as f64).sqrt();
    let mut context = Mat::zeros(x.rows(), c);
    for h in 0..w.heads {
        let qh = head_slice(&q, h, head_dim);
        let kh = head_slice(&k, h, head_dim);
        let vh = head_slice(&v, h, head_dim);
        let mut scores = qh.matmul_transposed(&kh)?;
        for i in 0..scores.rows() {
            let row = scores.row_mut(i);
            for (j, s) in row.iter_mut().enumerate() {
                if mask.is_some_and(|m| !m.get(i, j)) {
                    *s = f64::NEG_INFINITY;
                } else {
                    *s /= scale;
                }
            }
            softmax_in_place(row).map_err(|_| Error::DegenerateMask { row: i })?;
        }
        let ctx = scores.matmul(&vh)?;
        for i in 0..ctx.rows() {
            context.row_mut(i)[h * head_dim..(h + 1) * head_dim].copy_from_slice(ctx.row(i));
        }
        if let Some(p) = probe.as_deref_mut() {
            p.push(scores);
        }
    }
    context.affine(&w.out_weight, &w.out_bias)
}

/// `layer_norm(x + attention(x, y))`.
pub fn attention_sublayer(
    x: &Mat,
    y: &Mat,
    w: &AttentionWeights,
    mask: Option<&KeyMask>,
    probe: Option<&mut Vec<Mat>>,
) -> Result<Mat> {
    let attended = multi_head_attention(x, y, w, mask, probe)?;
    x.add(&attended)?
        .layer_norm(&w.norm_gain, &w.norm_bias, LAYER_NORM_EPS)
}

/// `layer_norm(x + w2 relu(w1 x + b1) + b2)`.
pub fn feed_forward(x: &Mat, w: &FeedForwardWeights) -> Result<Mat> {
    let hidden = x.affine(&w.w1, &w.b1)?.map(|v| v.max(0.0));
    let out = hidden.affine(&w.w2, &w.b2)?;
    x.add(&out)?
        .layer_norm(&w.norm_gain, &w.norm_bias, LAYER_NORM_EPS)
}

/// Multi-head self-attention block.
pub fn mhsa(x: &Mat, w: &MhaWeights) -> Result<Mat> {
    let a = attention_sublayer(x, x, &w.attention, None, None)?;
    feed_forward(&a, &w.ffn)
}

/// Multi-head cross-attention block of `x` onto `y`.
pub fn mhca(x: &Mat, y: &Mat, w: &MhaWeights, mask: Option<&KeyMask>) -> Result<Mat> {
    let a = attention_sublayer(x, y, &w.attention, mask, None)?;
    feed_forward(&a, &w.ffn)
}

/// A fully-connected layer `x w + b`. Used as the positional embedding for
/// points (3 inputs) or proposals (9 inputs: xyz, box center, box size).
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, width: usize) -> Self {
        Self {
            weight: Mat::zeros(inputs, width),
            bias: vec![0.0; width],
        }
    }

    pub fn random(inputs: usize, width: usize, seed: u64, prefix: &str) -> Self {
        Self {
            weight: dense(inputs, width, seed, &format!("{prefix}.weight")),
            bias: small_bias(width, seed, &format!("{prefix}.bias")),
        }
    }

    pub fn store(&self, prefix: &str, store: &mut TensorStore) {
        store.insert_mat(format!("{prefix}.weight"), &self.weight);
        store.insert_vector(format!("{prefix}.bias"), &self.bias);
    }

    pub fn load(prefix: &str, store: &TensorStore) -> Result<Self> {
        Ok(Self {
            weight: store.mat(&format!("{prefix}.weight"))?,
            bias: store.vector(&format!("{prefix}.bias"))?,
        })
    }
}

/// Adds the embedding of each point (and its box, when given) to its feature row.
pub fn positional_embed_points(
    features: &Mat,
    points: &[[f64; 3]],
    boxes: Option<&[Box3]>,
    w: &Linear,
) -> Result<Mat> {
    if points.len() != features.rows() || boxes.is_some_and(|b| b.len() != points.len()) {
        return Err(shape_err(
            "positional_embed_points",
            format!("{} points for {} feature rows", points.len(), features.rows()),
        ));
    }
    let inputs = if boxes.is_some() { 9 } else { 3 };
    if w.weight.rows() != inputs {
        return Err(shape_err(
            "positional_embed_points",
            format!("embedding expects {} inputs, have {inputs}", w.weight.rows()),
        ));
    }
    let mut raw = Mat::zeros(points.len(), inputs);
    for (i, p) in points.iter().enumerate() {
        let row = raw.row_mut(i);
        row[..3].copy_from_slice(p);
        if let Some(b) = boxes {
            row[3..6].copy_from_slice(&b[i].center);
            row[6..9].copy_from_slice(&b[i].size);
        }
    }
    features.add(&raw.affine(&w.weight, &w.bias)?)
}

/// Sine-cosine table: channel `2i` is `sin(p / 10000^(2i/C))`, channel `2i+1`
/// the matching cosine.
pub fn positional_embed_text(length: usize, width: usize) -> Mat {
    let mut out = Mat::zeros(length, width);
    for p in 0..length {
        for c in 0..width {
            let pair = (c / 2) * 2;
            let angle = p as f64 / 10000f64.powf(pair as f64 / width as f64);
            out[(p, c)] = if c % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlignmentStage {
    Raw,
    WordAligned,
    SentenceAligned,
}

/// Proposal features as they move through the PLACM stages.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentState {
    pub q: Mat,
    pub stage: AlignmentStage,
}

impl AlignmentState {
    pub fn raw(q: Mat) -> Self {
        Self {
            q,
            stage: AlignmentStage::Raw,
        }
    }
}

/// Self-attention, cross-attention and feed-forward sublayers of one PLACM stage.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacmStageWeights {
    pub self_attn: AttentionWeights,
    pub cross_attn: AttentionWeights,
    pub ffn: FeedForwardWeights,
}

impl PlacmStageWeights {
    pub fn random(width: usize, heads: usize, seed: u64, prefix: &str) -> Self {
        Self {
            self_attn: AttentionWeights::random(width, heads, seed, &format!("{prefix}.self_attn")),
            cross_attn: AttentionWeights::random(width, heads, seed, &format!("{prefix}.cross_attn")),
            ffn: FeedForwardWeights::random(width, 4 * width, seed, &format!("{prefix}.ffn")),
        }
    }

    fn store(&self, prefix: &str, store: &mut TensorStore) {
        self.self_attn.store(&format!("{prefix}.self_attn"), store);
        self.cross_attn.store(&format!("{prefix}.cross_attn"), store);
        self.ffn.store(&format!("{prefix}.ffn"), store);
    }

    fn load(prefix: &str, heads: usize, store: &TensorStore) -> Result<Self> {
        Ok(Self {
            self_attn: AttentionWeights::load(&format!("{prefix}.self_attn"), heads, store)?,
            cross_attn: AttentionWeights::load(&format!("{prefix}.cross_attn"), heads, store)?,
            ffn: FeedForwardWeights::load(&format!("{prefix}.ffn"), store)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlacmLayerWeights {
    pub word: PlacmStageWeights,
    pub sentence: PlacmStageWeights,
}

/// Weights of a stack of PLACM layers (one word-level and one sentence-level
/// stage each). Stored as `{prefix}.word{i}.*` / `{prefix}.sentence{i}.*`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacmWeights {
    pub layers: Vec<PlacmLayerWeights>,
}

impl PlacmWeights {
    pub fn random(width: usize, heads: usize, depth: usize, seed: u64, prefix: &str) -> Self {
        Self {
            layers: (0..depth)
                .map(|i| PlacmLayerWeights {
                    word: PlacmStageWeights::random(width, heads, seed, &format!("{prefix}.word{i}")),
                    sentence: PlacmStageWeights::random(
                        width,
                        heads,
                        seed,
                        &format!("{prefix}.sentence{i}"),
                    ),
                })
                .collect(),
        }
    }

    pub fn store(&self, prefix: &str, store: &mut TensorStore) {
        for (i, l) in self.layers.iter().enumerate() {
            l.word.store(&format!("{prefix}.word{i}"), store);
            l.sentence.store(&format!("{prefix}.sentence{i}"), store);
        }
    }

    pub fn load(prefix: &str, heads: usize, depth: usize, store: &TensorStore) -> Result<Self> {
        let layers = (0..depth)
            .map(|i| {
                Ok(PlacmLayerWeights {
                    word: PlacmStageWeights::load(&format!("{prefix}.word{i}"), heads, store)?,
                    sentence: PlacmStageWeights::load(&format!("{prefix}.sentence{i}"), heads, store)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }
}

/// Attention probabilities captured during one PLACM run, per stage and head.
#[derive(Clone, Debug, Default)]
pub struct PlacmTrace {
    pub self_attn: Vec<Vec<Mat>>,
    pub cross_attn: Vec<Vec<Mat>>,
}

/// Masks for the local (region-restricted) form of PLACM.
#[derive(Clone, Copy, Debug, Default)]
pub struct PlacmMasks<'a> {
    /// Proposal-to-key visibility (`M x N`). Language columns are always visible.
    pub keys: Option<&'a KeyMask>,
    /// Proposal-to-proposal visibility (`M x M`) for the self-attention sublayers.
    pub proposals: Option<&'a KeyMask>,
}

/// PLACM: for each layer, the word stage
/// `q <- FFN(MHCA(MHSA(q), [keys | words]))` then the sentence stage
/// `q <- FFN(MHCA(MHSA(q), [keys | sentence]))`.
pub fn placm_block(
    q: &AlignmentState,
    keys: &Mat,
    words: &Mat,
    sentence: &Mat,
    w: &PlacmWeights,
    key_mask: Option<&KeyMask>,
) -> Result<AlignmentState> {
    placm_forward(
        q,
        keys,
        words,
        sentence,
        w,
        PlacmMasks {
            keys: key_mask,
            proposals: None,
        },
        None,
    )
}

pub fn placm_forward(
    q: &AlignmentState,
    keys: &Mat,
    words: &Mat,
    sentence: &Mat,
    w: &PlacmWeights,
    masks: PlacmMasks<'_>,
    mut trace: Option<&mut PlacmTrace>,
) -> Result<AlignmentState> {
    if sentence.rows() != 1 {
        return Err(shape_err(
            "placm_block",
            format!("sentence embedding has {} rows", sentence.rows()),
        ));
    }
    let m = q.q.rows();
    if let Some(km) = masks.keys {
        if km.rows() != m || km.cols() != keys.rows() {
            return Err(shape_err(
                "placm_block",
                format!(
                    "key mask {}x{} for {m} proposals and {} keys",
                    km.rows(),
                    km.cols(),
                    keys.rows()
                ),
            ));
        }
    }
    if let Some(pm) = masks.proposals {
        if pm.rows() != m || pm.cols() != m {
            return Err(shape_err("placm_block", "proposal mask must be M x M"));
        }
    }
    let keys_words = keys.vstack(words)?;
    let keys_sentence = keys.vstack(sentence)?;
    let word_mask = masks.keys.map(|km| km.with_visible_columns(words.rows()));
    let sentence_mask = masks.keys.map(|km| km.with_visible_columns(1));

    let mut x = q.q.clone();
    for layer in &w.layers {
        for (stage, context, mask) in [
            (&layer.word, &keys_words, word_mask.as_ref()),
            (&layer.sentence, &keys_sentence, sentence_mask.as_ref()),
        ] {
            let mut self_probe = Vec::new();
            let mut cross_probe = Vec::new();
            let tracing = trace.is_some();
            let s = attention_sublayer(
                &x,
                &x,
                &stage.self_attn,
                masks.proposals,
                tracing.then_some(&mut self_probe),
            )?;
            let c = attention_sublayer(
                &s,
                context,
                &stage.cross_attn,
                mask,
                tracing.then_some(&mut cross_probe),
            )?;
            x = feed_forward(&c, &stage.ffn)?;
            if let Some(t) = trace.as_deref_mut() {
                t.self_attn.push(self_probe);
                t.cross_attn.push(cross_probe);
            }
        }
    }
    Ok(AlignmentState {
        q: x,
        stage: AlignmentStage::SentenceAligned,
    })
}
