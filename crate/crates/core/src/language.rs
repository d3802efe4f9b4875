//! Text side of the pipeline: vocabulary, tokenization, embedding lookup,
//! GRU sentence encoding and the three prompt-engineering transforms.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::container::TensorStore;
use crate::error::{shape_err, Error, Result};
use crate::rng::Rng;
use crate::scene::{QueryRecord, CLASS_NAMES, COLOR_WORDS};
use crate::tensor::Mat;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
/// Default maximum sentence length.
pub const MAX_LEN: usize = 200;
/// Written in place of masked words at the text level; always tokenizes to UNK.
pub const MASK_TOKEN: &str = "<unk>";

#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds from a word list whose position is the id; ids 0 and 1 are reserved.
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        if words.len() < 2 {
            return Err(Error::InvalidArgument(
                "vocabulary needs at least the PAD and UNK lines".into(),
            ));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate().skip(2) {
            index.entry(w.clone()).or_insert(i as u32);
        }
        Ok(Self { words, index })
    }

    /// Fixed vocabulary covering the synthetic query generator.
    pub fn builtin() -> Self {
        let mut words: Vec<String> = [
            "the", "in", "room", "it", "is", "taller", "than", "next", "to", "near", "a", "of", "on",
            "left", "right", "front", "behind", "between", "and", "with", "this", "that", "there",
        ]
        .iter()
        .chain(CLASS_NAMES.iter())
        .chain(COLOR_WORDS.iter())
        .map(|s| s.to_string())
        .collect();
        words.sort();
        words.dedup();
        let mut all = vec!["<pad>".to_string(), MASK_TOKEN.to_string()];
        all.extend(words);
        Self::from_words(all).expect("builtin vocabulary is well formed")
    }

    /// One token per line, line number = id.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_words(text.lines().map(str::to_owned).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.words.join("\n");
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> u32 {
        if word == "unk" {
            return UNK_ID;
        }
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSeq {
    pub tokens: Vec<u32>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Lowercased alphanumeric runs of `text`.
pub fn split_words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize) -> Result<TokenSeq> {
    let mut tokens: Vec<u32> = split_words(text).iter().map(|w| vocab.id(w)).collect();
    if tokens.is_empty() {
        return Err(Error::EmptyText);
    }
    tokens.truncate(max_len);
    Ok(TokenSeq { tokens })
}

/// Seeded embedding table with std `1/sqrt(width)`; PAD and UNK rows are zero.
pub fn random_embedding_table(vocab_size: usize, width: usize, seed: u64) -> Mat {
    let mut rng = Rng::derive_named(seed, "language.embedding");
    let mut table = Mat::random_normal(vocab_size, width, 1.0 / (width as f64).sqrt(), &mut rng);
    for id in [PAD_ID, UNK_ID] {
        if (id as usize) < vocab_size {
            table.row_mut(id as usize).fill(0.0);
        }
    }
    table
}

/// Row lookup. The UNK row always reads as zero regardless of the table.
pub fn embed(tokens: &TokenSeq, table: &Mat) -> Result<Mat> {
    let mut out = Mat::zeros(tokens.len(), table.cols());
    for (row, &id) in tokens.tokens.iter().enumerate() {
        let id = id as usize;
        if id >= table.rows() {
            return Err(Error::Vocab {
                id,
                size: table.rows(),
            });
        }
        if id != UNK_ID as usize {
            out.row_mut(row).copy_from_slice(table.row(id));
        }
    }
    Ok(out)
}

/// Parameters of one GRU layer, PyTorch gate convention.
#[derive(Clone, Debug, PartialEq)]
pub struct GruWeights {
    /// Input-to-hidden maps, `input_dim x hidden`.
    pub w_iz: Mat,
    pub w_ir: Mat,
    pub w_in: Mat,
    /// Hidden-to-hidden maps, `hidden x hidden`.
    pub w_hz: Mat,
    pub w_hr: Mat,
    pub w_hn: Mat,
    pub b_iz: Vec<f64>,
    pub b_ir: Vec<f64>,
    pub b_in: Vec<f64>,
    pub b_hz: Vec<f64>,
    pub b_hr: Vec<f64>,
    pub b_hn: Vec<f64>,
}

const GRU_MATS: [&str; 6] = ["w_iz", "w_ir", "w_in", "w_hz", "w_hr", "w_hn"];
const GRU_BIASES: [&str; 6] = ["b_iz", "b_ir", "b_in", "b_hz", "b_hr", "b_hn"];

impl GruWeights {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w_iz: Mat::zeros(input_dim, hidden),
            w_ir: Mat::zeros(input_dim, hidden),
            w_in: Mat::zeros(input_dim, hidden),
            w_hz: Mat::zeros(hidden, hidden),
            w_hr: Mat::zeros(hidden, hidden),
            w_hn: Mat::zeros(hidden, hidden),
            b_iz: vec![0.0; hidden],
            b_ir: vec![0.0; hidden],
            b_in: vec![0.0; hidden],
            b_hz: vec![0.0; hidden],
            b_hr: vec![0.0; hidden],
            b_hn: vec![0.0; hidden],
        }
    }

    /// Uniform in `[-1/sqrt(hidden), 1/sqrt(hidden)]`, one named stream per tensor.
    pub fn random(input_dim: usize, hidden: usize, seed: u64, prefix: &str) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let mut w = Self::zeros(input_dim, hidden);
        for (name, m) in GRU_MATS.iter().zip(w.mats_mut()) {
            let mut rng = Rng::derive_named(seed, &format!("{prefix}.{name}"));
            for v in m.as_mut_slice() {
                *v = rng.uniform(-k, k);
            }
        }
        for (name, b) in GRU_BIASES.iter().zip(w.biases_mut()) {
            let mut rng = Rng::derive_named(seed, &format!("{prefix}.{name}"));
            for v in b.iter_mut() {
                *v = rng.uniform(-k, k);
            }
        }
        w
    }

    fn mats_mut(&mut self) -> [&mut Mat; 6] {
        [
            &mut self.w_iz,
            &mut self.w_ir,
            &mut self.w_in,
            &mut self.w_hz,
            &mut self.w_hr,
            &mut self.w_hn,
        ]
    }

    fn biases_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.b_iz,
            &mut self.b_ir,
            &mut self.b_in,
            &mut self.b_hz,
            &mut self.b_hr,
            &mut self.b_hn,
        ]
    }

    pub fn input_dim(&self) -> usize {
        self.w_iz.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w_iz.cols()
    }

    pub fn store(&self, prefix: &str, store: &mut TensorStore) {
        let mut me = self.clone();
        for (name, m) in GRU_MATS.iter().zip(me.mats_mut()) {
            store.insert_mat(format!("{prefix}.{name}"), m);
        }
        for (name, b) in GRU_BIASES.iter().zip(me.biases_mut()) {
            store.insert_vector(format!("{prefix}.{name}"), b);
        }
    }

    pub fn load(prefix: &str, store: &TensorStore) -> Result<Self> {
        let w_iz = store.mat(&format!("{prefix}.w_iz"))?;
        let mut w = Self::zeros(w_iz.rows(), w_iz.cols());
        for (name, m) in GRU_MATS.iter().zip(w.mats_mut()) {
            *m = store.mat(&format!("{prefix}.{name}"))?;
        }
        for (name, b) in GRU_BIASES.iter().zip(w.biases_mut()) {
            *b = store.vector(&format!("{prefix}.{name}"))?;
        }
        w.check()?;
        Ok(w)
    }

    fn check(&self) -> Result<()> {
        let (i, h) = (self.input_dim(), self.hidden());
        let ok = [&self.w_iz, &self.w_ir, &self.w_in]
            .iter()
            .all(|m| m.shape() == (i, h))
            && [&self.w_hz, &self.w_hr, &self.w_hn]
                .iter()
                .all(|m| m.shape() == (h, h))
            && [
                &self.b_iz, &self.b_ir, &self.b_in, &self.b_hz, &self.b_hr, &self.b_hn,
            ]
            .iter()
            .all(|b| b.len() == h);
        if ok {
            Ok(())
        } else {
            Err(shape_err("GruWeights", "inconsistent gate shapes"))
        }
    }
}

/// Word-level (`max_len x C`, zero past `valid_len`) and sentence-level (`1 x C`) embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct LanguageEmbedding {
    pub word: Mat,
    pub sentence: Mat,
    pub valid_len: usize,
}

impl LanguageEmbedding {
    /// The populated word rows.
    pub fn valid_words(&self) -> Mat {
        self.word.head_rows(self.valid_len)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Runs the GRU over `inputs` (one row per step). Row `t` of the word
/// embedding is the hidden state after step `t`; the sentence embedding is
/// the final hidden state.
pub fn gru_encode(inputs: &Mat, w: &GruWeights, max_len: usize) -> Result<LanguageEmbedding> {
    w.check()?;
    let steps = inputs.rows();
    if steps == 0 {
        return Err(Error::InvalidArgument("GRU needs at least one step".into()));
    }
    if inputs.cols() != w.input_dim() {
        return Err(shape_err(
            "gru_encode",
            format!("input width {} vs {}", inputs.cols(), w.input_dim()),
        ));
    }
    if steps > max_len {
        return Err(shape_err(
            "gru_encode",
            format!("{steps} steps exceed max length {max_len}"),
        ));
    }
    let h_dim = w.hidden();
    // input projections for every step at once
    let xz = inputs.affine(&w.w_iz, &w.b_iz)?;
    let xr = inputs.affine(&w.w_ir, &w.b_ir)?;
    let xn = inputs.affine(&w.w_in, &w.b_in)?;

    let mut word = Mat::zeros(max_len, h_dim);
    let mut h = Mat::zeros(1, h_dim);
    for t in 0..steps {
        let hz = h.affine(&w.w_hz, &w.b_hz)?;
        let hr = h.affine(&w.w_hr, &w.b_hr)?;
        let hn = h.affine(&w.w_hn, &w.b_hn)?;
        let mut next = Mat::zeros(1, h_dim);
        for j in 0..h_dim {
            let z = sigmoid(xz[(t, j)] + hz[(0, j)]);
            let r = sigmoid(xr[(t, j)] + hr[(0, j)]);
            let n = (xn[(t, j)] + r * hn[(0, j)]).tanh();
            next[(0, j)] = (1.0 - z) * n + z * h[(0, j)];
        }
        h = next;
        word.row_mut(t).copy_from_slice(h.row(0));
    }
    Ok(LanguageEmbedding {
        word,
        sentence: h,
        valid_len: steps,
    })
}

/// Replaces between 0 and `floor(ratio_max * len)` distinct positions with UNK.
pub fn mask_words(tokens: &TokenSeq, ratio_max: f64, rng: &mut Rng) -> Result<TokenSeq> {
    let positions = mask_positions(tokens.len(), ratio_max, rng)?;
    let mut out = tokens.clone();
    for p in positions {
        out.tokens[p] = UNK_ID;
    }
    Ok(out)
}

fn mask_positions(len: usize, ratio_max: f64, rng: &mut Rng) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&ratio_max) {
        return Err(Error::InvalidArgument(format!(
            "mask ratio must lie in [0, 1], got {ratio_max}"
        )));
    }
    let cap = (ratio_max * len as f64).floor() as usize;
    let k = rng.range_inclusive(0, cap);
    Ok(rng.choose_distinct(len, k))
}

/// Text-level word masking: the text is re-joined from its lowercased words,
/// with masked words written as [`MASK_TOKEN`].
pub fn mask_text(text: &str, ratio_max: f64, rng: &mut Rng) -> Result<String> {
    let mut words = split_words(text);
    for p in mask_positions(words.len(), ratio_max, rng)? {
        words[p] = MASK_TOKEN.to_owned();
    }
    Ok(words.join(" "))
}

/// Fuses `k` (drawn from `k_range`) distinct records of one scene into one
/// record whose text joins theirs with ". " and whose targets are the ordered
/// union of theirs.
pub fn intra_sentence_ensemble(
    records: &[QueryRecord],
    k_range: (usize, usize),
    rng: &mut Rng,
) -> Result<QueryRecord> {
    let (lo, hi) = k_range;
    if records.is_empty() {
        return Err(Error::InvalidArgument("intra-sentence ensemble of zero records".into()));
    }
    if lo == 0 || lo > hi {
        return Err(Error::InvalidArgument(format!("invalid k range [{lo}, {hi}]")));
    }
    let scene = &records[0].scene_id;
    if records.iter().any(|r| &r.scene_id != scene) {
        return Err(Error::InvalidArgument(
            "intra-sentence ensemble mixes scenes".into(),
        ));
    }
    let k = rng.range_inclusive(lo, hi).min(records.len());
    let picks = rng.choose_distinct(records.len(), k);
    if k == 1 {
        return Ok(records[picks[0]].clone());
    }
    let parts: Vec<&str> = picks
        .iter()
        .map(|&i| records[i].text.trim().trim_end_matches('.').trim_end())
        .collect();
    let mut text = parts.join(". ");
    text.push('.');
    let mut targets = Vec::new();
    for &i in &picks {
        for &t in &records[i].target_instance_ids {
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
    }
    Ok(QueryRecord {
        scene_id: scene.clone(),
        text,
        target_instance_ids: targets,
        group: None,
    })
}

/// Splits each scene's records (scenes in first-appearance order) into
/// shuffled groups of exactly `group_size`, topping up the last group by
/// sampling the scene's pool with replacement.
pub fn inter_sentence_ensemble(
    records: &[QueryRecord],
    group_size: usize,
    rng: &mut Rng,
) -> Result<Vec<Vec<QueryRecord>>> {
    if group_size == 0 {
        return Err(Error::InvalidArgument("group size must be at least 1".into()));
    }
    let mut scenes: Vec<&str> = Vec::new();
    let mut pools: HashMap<&str, Vec<&QueryRecord>> = HashMap::new();
    for r in records {
        let pool = pools.entry(r.scene_id.as_str()).or_default();
        if pool.is_empty() {
            scenes.push(r.scene_id.as_str());
        }
        pool.push(r);
    }
    let mut groups = Vec::new();
    for scene in scenes {
        let mut pool = pools[scene].clone();
        rng.shuffle(&mut pool);
        for chunk in pool.chunks(group_size) {
            let mut g: Vec<QueryRecord> = chunk.iter().map(|r| (*r).clone()).collect();
            while g.len() < group_size {
                g.push(pool[rng.below(pool.len())].clone());
            }
            groups.push(g);
        }
    }
    Ok(groups)
}
