//! Down-sampling of raw points into key points, and proposal selection.
//!
//! All four strategies share one greedy farthest-point kernel. They differ
//! only in the vector each point is compared by and in how orders are merged.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scene::{Box3, PointCloud, SceneObject};
use crate::tensor::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Distance-FPS on xyz.
    Dfps,
    /// Feature-FPS on weighted `[xyz | attributes]`.
    Ffps,
    /// Half D-FPS, half F-FPS, duplicates kept.
    Fs,
    /// Concentration sampling: D-FPS and F-FPS merged through an id queue.
    Cs,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Dfps, Strategy::Ffps, Strategy::Fs, Strategy::Cs];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Dfps => "dfps",
            Strategy::Ffps => "ffps",
            Strategy::Fs => "fs",
            Strategy::Cs => "cs",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dfps" | "d-fps" => Ok(Strategy::Dfps),
            "ffps" | "f-fps" => Ok(Strategy::Ffps),
            "fs" | "fusion" => Ok(Strategy::Fs),
            "cs" | "concentration" => Ok(Strategy::Cs),
            other => Err(Error::InvalidArgument(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleResult {
    pub indices: Vec<usize>,
    pub strategy: Strategy,
}

impl SampleResult {
    /// Number of entries that repeat an earlier entry.
    pub fn duplicate_count(&self) -> usize {
        let unique: HashSet<usize> = self.indices.iter().copied().collect();
        self.indices.len() - unique.len()
    }

    pub fn duplicate_fraction(&self) -> f64 {
        if self.indices.is_empty() {
            0.0
        } else {
            self.duplicate_count() as f64 / self.indices.len() as f64
        }
    }
}

/// Greedy farthest-point order over flat `dim`-wide vectors.
///
/// Distances are squared Euclidean; each step picks the point whose distance
/// to the selected set is largest, ties going to the lowest id.
pub fn farthest_point_order(vectors: &[f64], dim: usize, n: usize, start: usize) -> Result<Vec<usize>> {
    let len = vectors.len().checked_div(dim).unwrap_or(0);
    if n > len {
        return Err(Error::Size {
            requested: n,
            available: len,
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if start >= len {
        return Err(Error::InvalidArgument(format!(
            "start id {start} out of range for {len} points"
        )));
    }
    let mut min_dist = vec![f64::INFINITY; len];
    let mut order = Vec::with_capacity(n);
    let mut current = start;
    order.push(current);
    min_dist[current] = f64::NEG_INFINITY;
    while order.len() < n {
        let c = &vectors[current * dim..(current + 1) * dim];
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (i, (md, v)) in min_dist.iter_mut().zip(vectors.chunks_exact(dim)).enumerate() {
            if *md == f64::NEG_INFINITY {
                continue;
            }
            let d = squared_distance(c, v);
            if d < *md {
                *md = d;
            }
            if *md > best_d {
                best_d = *md;
                best = i;
            }
        }
        current = best;
        min_dist[current] = f64::NEG_INFINITY;
        order.push(current);
    }
    Ok(order)
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

fn position_vectors(cloud: &PointCloud) -> Vec<f64> {
    cloud.positions().iter().flatten().copied().collect()
}

/// `[xyz | attributes]` with every channel multiplied by its weight.
pub fn feature_vectors(cloud: &PointCloud, channel_weights: &[f64]) -> Result<Vec<f64>> {
    let dim = 3 + cloud.attribute_dim();
    if channel_weights.len() != dim {
        return Err(Error::InvalidArgument(format!(
            "expected {dim} channel weights, got {}",
            channel_weights.len()
        )));
    }
    let mut out = Vec::with_capacity(cloud.len() * dim);
    for (p, attrs) in cloud.positions().iter().zip(cloud.attributes().iter_rows()) {
        for (v, w) in p.iter().chain(attrs).zip(channel_weights) {
            out.push(v * w);
        }
    }
    Ok(out)
}

/// Unit weights over every channel of `cloud`.
pub fn default_channel_weights(cloud: &PointCloud) -> Vec<f64> {
    vec![1.0; 3 + cloud.attribute_dim()]
}

pub fn dfps(cloud: &PointCloud, n: usize, start_id: usize) -> Result<SampleResult> {
    Ok(SampleResult {
        indices: farthest_point_order(&position_vectors(cloud), 3, n, start_id)?,
        strategy: Strategy::Dfps,
    })
}

pub fn ffps(cloud: &PointCloud, n: usize, start_id: usize, channel_weights: &[f64]) -> Result<SampleResult> {
    let dim = 3 + cloud.attribute_dim();
    let vectors = feature_vectors(cloud, channel_weights)?;
    Ok(SampleResult {
        indices: farthest_point_order(&vectors, dim, n, start_id)?,
        strategy: Strategy::Ffps,
    })
}

/// `dfps(n/2)` followed by `ffps(n/2)`; ids picked by both appear twice.
pub fn fusion_sampling(
    cloud: &PointCloud,
    n: usize,
    start_id: usize,
    channel_weights: &[f64],
) -> Result<SampleResult> {
    if !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "fusion sampling needs an even sample count, got {n}"
        )));
    }
    if n > cloud.len() {
        return Err(Error::Size {
            requested: n,
            available: cloud.len(),
        });
    }
    let mut indices = dfps(cloud, n / 2, start_id)?.indices;
    indices.extend(ffps(cloud, n / 2, start_id, channel_weights)?.indices);
    Ok(SampleResult {
        indices,
        strategy: Strategy::Fs,
    })
}

/// Concentration sampling: `n` unique ids drawn evenly from the D-FPS and
/// F-FPS orders.
pub fn concentration_sampling(
    cloud: &PointCloud,
    n: usize,
    start_id: usize,
    channel_weights: &[f64],
) -> Result<SampleResult> {
    let d = dfps(cloud, n, start_id)?.indices;
    let f = ffps(cloud, n, start_id, channel_weights)?.indices;
    Ok(SampleResult {
        indices: merge_unique(&d, &f, n),
        strategy: Strategy::Cs,
    })
}

/// Alternates turns between the two orders, starting with `first`. On its
/// turn an order pops candidates until one is not yet taken (or it runs
/// out), and that id joins the queue. Stops at `n` ids or when both orders
/// are exhausted.
pub fn merge_unique(first: &[usize], second: &[usize], n: usize) -> Vec<usize> {
    let mut taken = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    let mut cursors = [0usize, 0usize];
    let sources = [first, second];
    let mut turn = 0;
    while out.len() < n && (cursors[0] < first.len() || cursors[1] < second.len()) {
        let src = sources[turn];
        let cur = &mut cursors[turn];
        while *cur < src.len() {
            let id = src[*cur];
            *cur += 1;
            if taken.insert(id) {
                out.push(id);
                break;
            }
        }
        turn ^= 1;
    }
    out
}

pub fn sample(
    strategy: Strategy,
    cloud: &PointCloud,
    n: usize,
    start_id: usize,
    channel_weights: &[f64],
) -> Result<SampleResult> {
    match strategy {
        Strategy::Dfps => dfps(cloud, n, start_id),
        Strategy::Ffps => ffps(cloud, n, start_id, channel_weights),
        Strategy::Fs => fusion_sampling(cloud, n, start_id, channel_weights),
        Strategy::Cs => concentration_sampling(cloud, n, start_id, channel_weights),
    }
}

/// Down-sampled points with `C`-wide features.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyPointSet {
    pub points: Vec<[f64; 3]>,
    pub features: Mat,
    pub source_ids: Vec<usize>,
}

impl KeyPointSet {
    pub fn new(points: Vec<[f64; 3]>, features: Mat, source_ids: Vec<usize>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("a key point set needs at least one point".into()));
        }
        if features.rows() != points.len() || source_ids.len() != points.len() {
            return Err(Error::Shape {
                op: "KeyPointSet::new",
                detail: format!(
                    "{} points, {} feature rows, {} source ids",
                    points.len(),
                    features.rows(),
                    source_ids.len()
                ),
            });
        }
        Ok(Self {
            points,
            features,
            source_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn width(&self) -> usize {
        self.features.cols()
    }
}

/// Fixed stand-in for learned backbone features.
///
/// Each point contributes `[xyz | attributes | distance to nearest object
/// center]`, tiled or truncated to `width` and pushed through one seeded
/// random linear map.
pub fn synthetic_point_features(
    cloud: &PointCloud,
    objects: &[SceneObject],
    ids: &[usize],
    width: usize,
    seed: u64,
) -> Result<Mat> {
    let raw_dim = 3 + cloud.attribute_dim() + 1;
    let mut raw = Mat::zeros(ids.len(), width);
    for (row, &id) in ids.iter().enumerate() {
        let p = cloud.positions()[id];
        let nearest = objects
            .iter()
            .map(|o| crate::scene::distance(p, o.bbox.center))
            .fold(f64::INFINITY, f64::min);
        let nearest = if nearest.is_finite() { nearest } else { 0.0 };
        let mut base = Vec::with_capacity(raw_dim);
        base.extend_from_slice(&p);
        base.extend_from_slice(cloud.attributes().row(id));
        base.push(nearest);
        for (c, v) in raw.row_mut(row).iter_mut().enumerate() {
            *v = base[c % raw_dim];
        }
    }
    let mut rng = Rng::derive_named(seed, "features.projection");
    let projection = Mat::random_normal(width, width, 1.0 / (width as f64).sqrt(), &mut rng);
    raw.matmul(&projection)
}

/// Builds the key point set for sampled ids using [`synthetic_point_features`].
pub fn build_key_points(
    cloud: &PointCloud,
    objects: &[SceneObject],
    sample: &SampleResult,
    width: usize,
    seed: u64,
) -> Result<KeyPointSet> {
    let ids = sample.indices.clone();
    let points = ids.iter().map(|&i| cloud.positions()[i]).collect();
    let features = synthetic_point_features(cloud, objects, &ids, width, seed)?;
    KeyPointSet::new(points, features, ids)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProposalSet {
    pub points: Vec<[f64; 3]>,
    pub features: Mat,
    pub boxes: Vec<Box3>,
    pub key_indices: Vec<usize>,
}

impl ProposalSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Where proposal boxes come from.
#[derive(Clone, Debug, PartialEq)]
pub enum ProposalBoxes {
    /// Cubes of the given edge (meters) centred on each proposal point.
    Cubes(f64),
    /// Externally computed boxes, one per selected proposal, in selection order.
    Provided(Vec<Box3>),
}

impl Default for ProposalBoxes {
    fn default() -> Self {
        ProposalBoxes::Cubes(0.5)
    }
}

/// Chooses `m` proposals among the key points by D-FPS, starting from the
/// key point nearest the key-point centroid.
pub fn select_proposals(keys: &KeyPointSet, m: usize, boxes: &ProposalBoxes) -> Result<ProposalSet> {
    if m > keys.len() {
        return Err(Error::Size {
            requested: m,
            available: keys.len(),
        });
    }
    let n = keys.len() as f64;
    let mut centroid = [0.0; 3];
    for p in &keys.points {
        for a in 0..3 {
            centroid[a] += p[a];
        }
    }
    let centroid = centroid.map(|c| c / n);
    let mut start = 0;
    let mut best = f64::INFINITY;
    for (i, p) in keys.points.iter().enumerate() {
        let d = squared_distance(p, &centroid);
        if d < best {
            best = d;
            start = i;
        }
    }
    let flat: Vec<f64> = keys.points.iter().flatten().copied().collect();
    let key_indices = farthest_point_order(&flat, 3, m, start)?;
    let points: Vec<[f64; 3]> = key_indices.iter().map(|&i| keys.points[i]).collect();
    let boxes = match boxes {
        ProposalBoxes::Cubes(edge) => points
            .iter()
            .map(|&p| Box3::new(p, [*edge; 3]))
            .collect::<Result<Vec<_>>>()?,
        ProposalBoxes::Provided(b) => {
            if b.len() != m {
                return Err(Error::InvalidArgument(format!(
                    "{} provided boxes for {m} proposals",
                    b.len()
                )));
            }
            b.clone()
        }
    };
    Ok(ProposalSet {
        features: keys.features.select_rows(&key_indices),
        points,
        boxes,
        key_indices,
    })
}

/// Sample-id file: `u32 count` then `count` little-endian `u32` ids.
pub fn encode_ids(ids: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * ids.len());
    out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
    for &i in ids {
        out.extend_from_slice(&(i as u32).to_le_bytes());
    }
    out
}

pub fn decode_ids(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut r = crate::container::ByteReader::new(bytes);
    let n = r.u32()? as usize;
    let mut ids = Vec::with_capacity(n.min(bytes.len() / 4));
    for _ in 0..n {
        ids.push(r.u32()? as usize);
    }
    if r.offset() != bytes.len() {
        return Err(Error::Format {
            offset: r.offset(),
            msg: "trailing bytes after id list".into(),
        });
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_cloud() -> PointCloud {
        PointCloud::from_positions(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.4, 0.0, 0.0]]).unwrap()
    }

    #[test]
    fn dfps_hand_cases() {
        assert_eq!(dfps(&line_cloud(), 2, 0).unwrap().indices, vec![0, 1]);
        assert_eq!(dfps(&line_cloud(), 3, 0).unwrap().indices, vec![0, 1, 2]);
        assert!(matches!(dfps(&line_cloud(), 4, 0), Err(Error::Size { .. })));
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let cloud =
            PointCloud::from_positions(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(dfps(&cloud, 2, 0).unwrap().indices, vec![0, 1]);
    }

    #[test]
    fn ffps_separates_coincident_points_by_color() {
        let attrs = Mat::from_rows(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let cloud = PointCloud::new(vec![[0.5; 3], [0.5; 3]], attrs).unwrap();
        let s = ffps(&cloud, 2, 0, &[1.0; 6]).unwrap();
        assert_eq!(s.indices, vec![0, 1]);
    }

    #[test]
    fn ffps_with_zero_attribute_weights_is_dfps() {
        let mut rng = Rng::new(3);
        let pos: Vec<[f64; 3]> = (0..80).map(|_| [rng.next_f64(), rng.next_f64(), rng.next_f64()]).collect();
        let attrs = Mat::random_normal(80, 4, 1.0, &mut rng);
        let cloud = PointCloud::new(pos, attrs).unwrap();
        let w = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(
            ffps(&cloud, 30, 5, &w).unwrap().indices,
            dfps(&cloud, 30, 5).unwrap().indices
        );
        assert!(ffps(&cloud, 3, 0, &[1.0; 3]).is_err());
    }

    #[test]
    fn merge_trace() {
        assert_eq!(merge_unique(&[0, 3, 1], &[0, 2, 3], 4), vec![0, 2, 3, 1]);
        assert_eq!(merge_unique(&[0, 1], &[0, 1], 2), vec![0, 1]);
        assert_eq!(merge_unique(&[5], &[], 3), vec![5]);
    }

    #[test]
    fn fusion_with_identical_orders_duplicates_everything() {
        // no attributes: F-FPS degenerates to D-FPS
        let s = fusion_sampling(&line_cloud(), 2, 0, &[1.0; 3]).unwrap();
        assert_eq!(s.indices, vec![0, 0]);
        assert_eq!(s.duplicate_count(), 1);
        assert!(fusion_sampling(&line_cloud(), 3, 0, &[1.0; 3]).is_err());
    }

    #[test]
    fn proposals_cover_all_keys_when_m_equals_n() {
        let cloud = line_cloud();
        let keys = build_key_points(&cloud, &[], &dfps(&cloud, 3, 0).unwrap(), 4, 1).unwrap();
        let props = select_proposals(&keys, 3, &ProposalBoxes::default()).unwrap();
        let mut k = props.key_indices.clone();
        k.sort_unstable();
        assert_eq!(k, vec![0, 1, 2]);
        assert!(select_proposals(&keys, 4, &ProposalBoxes::default()).is_err());
    }

    #[test]
    fn single_key_point_proposal() {
        let cloud = PointCloud::from_positions(vec![[1.0, 2.0, 3.0]]).unwrap();
        let keys = build_key_points(&cloud, &[], &dfps(&cloud, 1, 0).unwrap(), 2, 1).unwrap();
        let props = select_proposals(&keys, 1, &ProposalBoxes::Cubes(0.5)).unwrap();
        assert_eq!(props.points, vec![[1.0, 2.0, 3.0]]);
        assert_eq!(props.boxes[0].center, [1.0, 2.0, 3.0]);
        assert_eq!(props.boxes[0].size, [0.5; 3]);
    }

    #[test]
    fn id_file_round_trip() {
        let ids = vec![4, 0, 17];
        let bytes = encode_ids(&ids);
        assert_eq!(&bytes[..4], &3u32.to_le_bytes());
        assert_eq!(decode_ids(&bytes).unwrap(), ids);
        assert!(decode_ids(&bytes[..6]).is_err());
    }
}
