//! Spatially multi-granular modeling: the scene is cut into `r^3` equal
//! cells, and PLACM runs twice, once over the whole scene and once with each
//! proposal restricted to key points (and proposals) in its own cell. The two
//! results are summed.

use crate::attention::{placm_forward, AlignmentState, KeyMask, PlacmMasks, PlacmWeights};
use crate::error::{shape_err, Error, Result};
use crate::scene::Bounds;
use crate::tensor::Mat;

/// Default cells per axis.
pub const DEFAULT_RESOLUTION: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct SpacePartition {
    pub r: usize,
    pub bounds: Bounds,
    pub key_region: Vec<usize>,
    pub proposal_region: Vec<usize>,
}

impl SpacePartition {
    pub fn region_count(&self) -> usize {
        self.r * self.r * self.r
    }

    /// Points of each kind per region.
    pub fn histogram(&self) -> (Vec<usize>, Vec<usize>) {
        let mut keys = vec![0; self.region_count()];
        let mut props = vec![0; self.region_count()];
        for &k in &self.key_region {
            keys[k] += 1;
        }
        for &p in &self.proposal_region {
            props[p] += 1;
        }
        (keys, props)
    }
}

/// Cell index along one axis. A coordinate exactly on an internal face
/// belongs to the lower cell; anything outside the bounds is clamped.
fn axis_cell(v: f64, lo: f64, extent: f64, r: usize) -> usize {
    let t = (v - lo) / extent * r as f64;
    let cell = t.ceil() - 1.0;
    if cell < 0.0 {
        0
    } else {
        (cell as usize).min(r - 1)
    }
}

/// Region id `ix * r^2 + iy * r + iz` of a point.
pub fn region_of(p: [f64; 3], bounds: &Bounds, r: usize) -> usize {
    let extent = bounds.extent();
    let ix = axis_cell(p[0], bounds.min[0], extent[0], r);
    let iy = axis_cell(p[1], bounds.min[1], extent[1], r);
    let iz = axis_cell(p[2], bounds.min[2], extent[2], r);
    ix * r * r + iy * r + iz
}

pub fn build_partition(
    bounds: &Bounds,
    r: usize,
    key_points: &[[f64; 3]],
    proposal_points: &[[f64; 3]],
) -> Result<SpacePartition> {
    if r == 0 {
        return Err(Error::InvalidArgument("partition resolution must be at least 1".into()));
    }
    let extent = bounds.extent();
    if let Some(axis) = (0..3).find(|&a| !(extent[a] > 0.0) || !extent[a].is_finite()) {
        return Err(Error::DegenerateBounds { axis });
    }
    Ok(SpacePartition {
        r,
        bounds: *bounds,
        key_region: key_points.iter().map(|&p| region_of(p, bounds, r)).collect(),
        proposal_region: proposal_points.iter().map(|&p| region_of(p, bounds, r)).collect(),
    })
}

/// `mask[p][k]` is true iff proposal `p` and key `k` share a region.
pub fn region_mask(partition: &SpacePartition) -> KeyMask {
    KeyMask::from_fn(
        partition.proposal_region.len(),
        partition.key_region.len(),
        |p, k| partition.proposal_region[p] == partition.key_region[k],
    )
}

/// Proposal-to-proposal visibility within regions, used by the local
/// branch's self-attention sublayers.
pub fn proposal_region_mask(partition: &SpacePartition) -> KeyMask {
    let m = partition.proposal_region.len();
    KeyMask::from_fn(m, m, |a, b| {
        partition.proposal_region[a] == partition.proposal_region[b]
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmgmWeights {
    pub global: PlacmWeights,
    pub local: PlacmWeights,
}

impl SmgmWeights {
    /// Both branches sharing one weight set.
    pub fn tied(w: PlacmWeights) -> Self {
        Self {
            global: w.clone(),
            local: w,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmgmOutput {
    pub global_features: Mat,
    pub local_features: Mat,
    pub fused: Mat,
}

/// Runs the global branch (no masks) and the local branch (region masks)
/// concurrently and sums them.
pub fn smgm_forward(
    proposals: &Mat,
    keys: &Mat,
    words: &Mat,
    sentence: &Mat,
    weights: &SmgmWeights,
    partition: &SpacePartition,
) -> Result<SmgmOutput> {
    if partition.proposal_region.len() != proposals.rows() || partition.key_region.len() != keys.rows() {
        return Err(shape_err(
            "smgm_forward",
            format!(
                "partition covers {} proposals / {} keys, inputs have {} / {}",
                partition.proposal_region.len(),
                partition.key_region.len(),
                proposals.rows(),
                keys.rows()
            ),
        ));
    }
    let state = AlignmentState::raw(proposals.clone());
    let key_mask = region_mask(partition);
    let proposal_mask = proposal_region_mask(partition);
    let (global, local) = rayon::join(
        || placm_forward(&state, keys, words, sentence, &weights.global, PlacmMasks::default(), None),
        || {
            placm_forward(
                &state,
                keys,
                words,
                sentence,
                &weights.local,
                PlacmMasks {
                    keys: Some(&key_mask),
                    proposals: Some(&proposal_mask),
                },
                None,
            )
        },
    );
    let global_features = global?.q;
    let local_features = local?.q;
    let fused = global_features.add(&local_features)?;
    Ok(SmgmOutput {
        global_features,
        local_features,
        fused,
    })
}

/// Reference for the local branch: physically splits proposals and keys by
/// region and runs unmasked PLACM on each group, sharing the language tokens.
pub fn local_branch_by_regions(
    proposals: &Mat,
    keys: &Mat,
    words: &Mat,
    sentence: &Mat,
    weights: &PlacmWeights,
    partition: &SpacePartition,
) -> Result<Mat> {
    let mut out = Mat::zeros(proposals.rows(), proposals.cols());
    for region in 0..partition.region_count() {
        let p_ids: Vec<usize> = (0..proposals.rows())
            .filter(|&i| partition.proposal_region[i] == region)
            .collect();
        if p_ids.is_empty() {
            continue;
        }
        let k_ids: Vec<usize> = (0..keys.rows())
            .filter(|&i| partition.key_region[i] == region)
            .collect();
        let q_r = AlignmentState::raw(proposals.select_rows(&p_ids));
        let k_r = keys.select_rows(&k_ids);
        let res = placm_forward(&q_r, &k_r, words, sentence, weights, PlacmMasks::default(), None)?;
        for (row, &i) in p_ids.iter().enumerate() {
            out.row_mut(i).copy_from_slice(res.q.row(row));
        }
    }
    Ok(out)
}
