//! Scene data model, the `HAMP` point-cloud format, JSON-lines queries and a
//! deterministic synthetic room generator.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::ByteReader;
use crate::error::{shape_err, Error, Result};
use crate::rng::Rng;
use crate::tensor::Mat;

pub const SCENE_MAGIC: &[u8; 4] = b"HAMP";

/// Object categories emitted by the generator, indexed by `class_id`.
pub const CLASS_NAMES: [&str; 18] = [
    "cabinet",
    "bed",
    "chair",
    "sofa",
    "table",
    "door",
    "window",
    "bookshelf",
    "picture",
    "counter",
    "desk",
    "curtain",
    "refrigerator",
    "shower",
    "toilet",
    "sink",
    "bathtub",
    "shelf",
];

/// Axis-aligned box given by its center and full edge lengths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub center: [f64; 3],
    pub size: [f64; 3],
}

impl Box3 {
    pub fn new(center: [f64; 3], size: [f64; 3]) -> Result<Self> {
        if size.iter().any(|&s| !(s > 0.0) || !s.is_finite()) || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "box needs finite center and positive size, got {center:?} / {size:?}"
            )));
        }
        Ok(Self { center, size })
    }

    pub fn min(&self) -> [f64; 3] {
        std::array::from_fn(|a| self.center[a] - self.size[a] / 2.0)
    }

    pub fn max(&self) -> [f64; 3] {
        std::array::from_fn(|a| self.center[a] + self.size[a] / 2.0)
    }

    pub fn volume(&self) -> f64 {
        self.size[0] * self.size[1] * self.size[2]
    }

    /// Closed containment test with a tolerance on every face.
    pub fn contains(&self, p: [f64; 3], tol: f64) -> bool {
        let (lo, hi) = (self.min(), self.max());
        (0..3).all(|a| p[a] >= lo[a] - tol && p[a] <= hi[a] + tol)
    }

    pub fn center_distance(&self, other: &Box3) -> f64 {
        distance(self.center, other.center)
    }
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn overlap_1d(a_lo: f64, a_hi: f64, b_lo: f64, b_hi: f64) -> f64 {
    (a_hi.min(b_hi) - a_lo.max(b_lo)).max(0.0)
}

/// Intersection-over-union of two axis-aligned boxes.
///
/// The intersection extents are computed per axis with `min`/`max`, which are
/// symmetric in their arguments, so `iou3d(a, b) == iou3d(b, a)` bit for bit.
pub fn iou3d(a: &Box3, b: &Box3) -> f64 {
    let (alo, ahi, blo, bhi) = (a.min(), a.max(), b.min(), b.max());
    let inter = overlap_1d(alo[0], ahi[0], blo[0], bhi[0])
        * overlap_1d(alo[1], ahi[1], blo[1], bhi[1])
        * overlap_1d(alo[2], ahi[2], blo[2], bhi[2]);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.volume() + b.volume() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Raw scene points: xyz plus `x` supplementary channels per point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    positions: Vec<[f64; 3]>,
    attributes: Mat,
}

impl PointCloud {
    pub fn new(positions: Vec<[f64; 3]>, attributes: Mat) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidArgument("a point cloud needs at least one point".into()));
        }
        if attributes.rows() != positions.len() {
            return Err(shape_err(
                "PointCloud::new",
                format!(
                    "{} attribute rows for {} points",
                    attributes.rows(),
                    positions.len()
                ),
            ));
        }
        Ok(Self {
            positions,
            attributes,
        })
    }

    /// A cloud with no supplementary channels.
    pub fn from_positions(positions: Vec<[f64; 3]>) -> Result<Self> {
        let n = positions.len();
        Self::new(positions, Mat::zeros(n, 0))
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn attribute_dim(&self) -> usize {
        self.attributes.cols()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn attributes(&self) -> &Mat {
        &self.attributes
    }

    pub fn bounds(&self) -> Bounds {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for p in &self.positions {
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        Bounds { min, max }
    }

    /// Reorders points; `order[k]` is the old id of the new point `k`.
    pub fn permuted(&self, order: &[usize]) -> PointCloud {
        PointCloud {
            positions: order.iter().map(|&i| self.positions[i]).collect(),
            attributes: self.attributes.select_rows(order),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Bounds {
    pub fn extent(&self) -> [f64; 3] {
        std::array::from_fn(|a| self.max[a] - self.min[a])
    }

    pub fn center(&self) -> [f64; 3] {
        std::array::from_fn(|a| (self.max[a] + self.min[a]) / 2.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub instance_id: u32,
    pub class_id: u32,
    pub bbox: Box3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub cloud: PointCloud,
    pub objects: Vec<SceneObject>,
    pub bounds: Bounds,
}

impl Scene {
    pub fn new(cloud: PointCloud, objects: Vec<SceneObject>) -> Result<Self> {
        let mut ids: Vec<u32> = objects.iter().map(|o| o.instance_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate instance ids".into()));
        }
        let bounds = cloud.bounds();
        Ok(Self {
            cloud,
            objects,
            bounds,
        })
    }

    pub fn object(&self, instance_id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.instance_id == instance_id)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let l = self.cloud.len();
        let x = self.cloud.attribute_dim();
        let mut out = Vec::with_capacity(12 + 4 * l * (3 + x) + 4 + 32 * self.objects.len());
        out.extend_from_slice(SCENE_MAGIC);
        out.extend_from_slice(&(l as u32).to_le_bytes());
        out.extend_from_slice(&(x as u32).to_le_bytes());
        for p in self.cloud.positions() {
            for v in p {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        for v in self.cloud.attributes().as_slice() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out.extend_from_slice(&(self.objects.len() as u32).to_le_bytes());
        for o in &self.objects {
            out.extend_from_slice(&o.instance_id.to_le_bytes());
            out.extend_from_slice(&o.class_id.to_le_bytes());
            for v in o.bbox.center.iter().chain(&o.bbox.size) {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.take(4)?;
        if magic != SCENE_MAGIC {
            return Err(Error::Format {
                offset: 0,
                msg: format!("bad magic {magic:?}, expected \"HAMP\""),
            });
        }
        let l = r.u32()? as usize;
        let x = r.u32()? as usize;
        if l == 0 {
            return Err(Error::Format {
                offset: 4,
                msg: "scene has zero points".into(),
            });
        }
        let need = l.saturating_mul(3 + x).saturating_mul(4);
        if need > bytes.len() - r.offset() {
            return Err(Error::Format {
                offset: r.offset(),
                msg: format!("truncated: {l} points need {need} payload bytes"),
            });
        }
        let mut positions = Vec::with_capacity(l);
        for _ in 0..l {
            let mut p = [0.0; 3];
            for v in &mut p {
                let at = r.offset();
                *v = r.f32()? as f64;
                if !v.is_finite() {
                    return Err(Error::Format {
                        offset: at,
                        msg: "non-finite position".into(),
                    });
                }
            }
            positions.push(p);
        }
        let mut attrs = Vec::with_capacity(l * x);
        for _ in 0..l * x {
            let at = r.offset();
            let v = r.f32()? as f64;
            if !v.is_finite() {
                return Err(Error::Format {
                    offset: at,
                    msg: "non-finite attribute".into(),
                });
            }
            attrs.push(v);
        }
        let count = r.u32()? as usize;
        let mut objects = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let at = r.offset();
            let instance_id = r.u32()?;
            let class_id = r.u32()?;
            let mut vals = [0.0; 6];
            for v in &mut vals {
                *v = r.f32()? as f64;
            }
            let bbox = Box3::new([vals[0], vals[1], vals[2]], [vals[3], vals[4], vals[5]])
                .map_err(|e| Error::Format {
                    offset: at,
                    msg: e.to_string(),
                })?;
            objects.push(SceneObject {
                instance_id,
                class_id,
                bbox,
            });
        }
        if r.offset() != bytes.len() {
            return Err(Error::Format {
                offset: r.offset(),
                msg: "trailing bytes after object table".into(),
            });
        }
        let cloud = PointCloud::new(positions, Mat::from_vec(l, x, attrs)?)?;
        Scene::new(cloud, objects).map_err(|e| Error::Format {
            offset: 0,
            msg: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// One referring expression and the instance(s) it points at.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub scene_id: String,
    pub text: String,
    pub target_instance_ids: Vec<u32>,
    /// Inter-sentence group this record was batched into, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<u32>,
}

impl QueryRecord {
    pub fn new(scene_id: impl Into<String>, text: impl Into<String>, targets: Vec<u32>) -> Self {
        Self {
            scene_id: scene_id.into(),
            text: text.into(),
            target_instance_ids: targets,
            group: None,
        }
    }

    pub fn validate_against(&self, scene: &Scene) -> Result<()> {
        if self.target_instance_ids.is_empty() {
            return Err(Error::InvalidArgument("query has no target instance".into()));
        }
        for id in &self.target_instance_ids {
            if scene.object(*id).is_none() {
                return Err(Error::InvalidArgument(format!(
                    "target instance {id} not present in scene `{}`",
                    self.scene_id
                )));
            }
        }
        Ok(())
    }
}

pub fn read_queries(path: impl AsRef<Path>) -> Result<Vec<QueryRecord>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_queries(path: impl AsRef<Path>, records: &[QueryRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// Parameters of the synthetic room generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_objects: usize,
    pub room_size: [f64; 3],
    pub n_points: usize,
    /// Share of points sampled on object surfaces rather than floor and walls.
    pub foreground_fraction: f64,
    /// Boxes whose IoU with an already placed box exceeds this are rejected.
    pub max_overlap: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_objects: 8,
            room_size: [6.0, 5.0, 3.0],
            n_points: 50_000,
            foreground_fraction: 0.7,
            max_overlap: 0.3,
        }
    }
}

const PLACEMENT_ATTEMPTS: usize = 1000;

/// Generated scene plus, for every point, the index of the object it was drawn from.
#[derive(Clone, Debug)]
pub struct LabeledScene {
    pub scene: Scene,
    pub point_object: Vec<Option<usize>>,
}

fn to_f32_precision(v: f64) -> f64 {
    v as f32 as f64
}

/// Deterministic synthetic room: boxes resting on the floor, points on their
/// surfaces, plus floor and wall points. Values are kept at `f32` precision so
/// the in-memory scene equals what the `HAMP` format stores.
pub fn generate_scene(seed: u64, config: &GeneratorConfig) -> Result<Scene> {
    generate_labeled_scene(seed, config).map(|s| s.scene)
}

pub fn generate_labeled_scene(seed: u64, config: &GeneratorConfig) -> Result<LabeledScene> {
    if config.n_objects == 0 {
        return Err(Error::InvalidArgument("n_objects must be at least 1".into()));
    }
    if config.n_points == 0 {
        return Err(Error::InvalidArgument("n_points must be at least 1".into()));
    }
    let room = config.room_size;
    if room.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidArgument(format!("room size must be positive, got {room:?}")));
    }
    let mut rng = Rng::derive_named(seed, "scene");

    let mut objects: Vec<SceneObject> = Vec::with_capacity(config.n_objects);
    let mut colors: Vec<[f64; 3]> = Vec::with_capacity(config.n_objects);
    for index in 0..config.n_objects {
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let size: [f64; 3] = std::array::from_fn(|a| {
                let hi = (0.9 * room[a]).min(if a == 2 { 1.8 } else { 1.5 });
                let lo = (0.5 * hi).min(0.3);
                to_f32_precision(rng.uniform(lo, hi))
            });
            let center = [
                to_f32_precision(rng.uniform(size[0] / 2.0, room[0] - size[0] / 2.0)),
                to_f32_precision(rng.uniform(size[1] / 2.0, room[1] - size[1] / 2.0)),
                to_f32_precision(size[2] / 2.0),
            ];
            let candidate = Box3 { center, size };
            if objects
                .iter()
                .all(|o| iou3d(&o.bbox, &candidate) <= config.max_overlap)
            {
                placed = Some(candidate);
                break;
            }
        }
        let bbox = placed.ok_or(Error::Placement {
            index,
            attempts: PLACEMENT_ATTEMPTS,
        })?;
        objects.push(SceneObject {
            instance_id: index as u32,
            class_id: rng.below(CLASS_NAMES.len()) as u32,
            bbox,
        });
        colors.push(std::array::from_fn(|_| to_f32_precision(rng.next_f64())));
    }

    let n_fg = if config.n_points == 1 {
        1
    } else {
        ((config.n_points as f64 * config.foreground_fraction).round() as usize).min(config.n_points)
    };
    let n_bg = config.n_points - n_fg;
    let mut positions = Vec::with_capacity(config.n_points);
    let mut attrs = Vec::with_capacity(config.n_points * 6);
    let mut point_object = Vec::with_capacity(config.n_points);

    let areas: Vec<f64> = objects.iter().map(|o| surface_area(&o.bbox)).collect();
    let total_area: f64 = areas.iter().sum();
    for _ in 0..n_fg {
        let k = pick_weighted(&areas, total_area, &mut rng);
        let (p, normal) = sample_box_surface(&objects[k].bbox, &mut rng);
        positions.push(p);
        attrs.extend_from_slice(&colors[k]);
        attrs.extend_from_slice(&normal);
        point_object.push(Some(k));
    }

    // floor plus four walls, weighted by area
    let walls = [
        room[0] * room[1],
        room[0] * room[2],
        room[0] * room[2],
        room[1] * room[2],
        room[1] * room[2],
    ];
    let walls_total: f64 = walls.iter().sum();
    const FLOOR_RGB: [f64; 3] = [0.5, 0.45, 0.4];
    const WALL_RGB: [f64; 3] = [0.85, 0.85, 0.8];
    for _ in 0..n_bg {
        let w = pick_weighted(&walls, walls_total, &mut rng);
        let (u, v) = (rng.next_f64(), rng.next_f64());
        let (p, normal, rgb) = match w {
            0 => ([u * room[0], v * room[1], 0.0], [0.0, 0.0, 1.0], FLOOR_RGB),
            1 => ([u * room[0], 0.0, v * room[2]], [0.0, 1.0, 0.0], WALL_RGB),
            2 => ([u * room[0], room[1], v * room[2]], [0.0, -1.0, 0.0], WALL_RGB),
            3 => ([0.0, u * room[1], v * room[2]], [1.0, 0.0, 0.0], WALL_RGB),
            _ => ([room[0], u * room[1], v * room[2]], [-1.0, 0.0, 0.0], WALL_RGB),
        };
        positions.push(p.map(to_f32_precision));
        attrs.extend_from_slice(&rgb.map(to_f32_precision));
        attrs.extend_from_slice(&normal);
        point_object.push(None);
    }

    let n = positions.len();
    let cloud = PointCloud::new(positions, Mat::from_vec(n, 6, attrs)?)?;
    Ok(LabeledScene {
        scene: Scene::new(cloud, objects)?,
        point_object,
    })
}

fn surface_area(b: &Box3) -> f64 {
    let [x, y, z] = b.size;
    2.0 * (x * y + x * z + y * z)
}

fn pick_weighted(weights: &[f64], total: f64, rng: &mut Rng) -> usize {
    let mut t = rng.next_f64() * total;
    for (i, w) in weights.iter().enumerate() {
        if t < *w {
            return i;
        }
        t -= w;
    }
    weights.len() - 1
}

/// Uniform point on the surface of `b` with its outward unit normal.
fn sample_box_surface(b: &Box3, rng: &mut Rng) -> ([f64; 3], [f64; 3]) {
    let [sx, sy, sz] = b.size;
    let faces = [sy * sz, sy * sz, sx * sz, sx * sz, sx * sy, sx * sy];
    let face = pick_weighted(&faces, faces.iter().sum(), rng);
    let axis = face / 2;
    let sign = if face.is_multiple_of(2) { -1.0 } else { 1.0 };
    let (lo, hi) = (b.min(), b.max());
    let mut p = [0.0; 3];
    for a in 0..3 {
        p[a] = if a == axis {
            if sign < 0.0 {
                lo[a]
            } else {
                hi[a]
            }
        } else {
            lo[a] + rng.next_f64() * b.size[a]
        };
        p[a] = to_f32_precision(p[a].clamp(lo[a], hi[a]));
    }
    let mut normal = [0.0; 3];
    normal[axis] = sign;
    (p, normal)
}

/// Deterministic referring expressions for a generated scene. Each query names
/// a target by color and class and relates it to its nearest neighbour.
pub fn synthetic_queries(scene: &Scene, scene_id: &str, n: usize, seed: u64) -> Vec<QueryRecord> {
    let mut rng = Rng::derive_named(seed, "queries");
    let colors = object_colors(scene);
    (0..n)
        .map(|_| {
            let t = rng.below(scene.objects.len());
            let target = &scene.objects[t];
            let mut text = format!(
                "the {} {} in the room.",
                color_word(colors[t]),
                CLASS_NAMES[target.class_id as usize % CLASS_NAMES.len()]
            );
            let neighbour = scene
                .objects
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != t)
                .min_by(|a, b| {
                    a.1.bbox
                        .center_distance(&target.bbox)
                        .total_cmp(&b.1.bbox.center_distance(&target.bbox))
                });
            if let Some((_, other)) = neighbour {
                let rel = if other.bbox.size[2] < target.bbox.size[2] {
                    "taller than"
                } else if rng.below(2) == 0 {
                    "next to"
                } else {
                    "near"
                };
                text.push_str(&format!(
                    " it is {rel} the {}.",
                    CLASS_NAMES[other.class_id as usize % CLASS_NAMES.len()]
                ));
            }
            QueryRecord::new(scene_id, text, vec![target.instance_id])
        })
        .collect()
}

/// Mean rgb of points lying inside each object box, or grey when none do.
fn object_colors(scene: &Scene) -> Vec<[f64; 3]> {
    let attrs = scene.cloud.attributes();
    scene
        .objects
        .iter()
        .map(|o| {
            if attrs.cols() < 3 {
                return [0.5; 3];
            }
            let mut sum = [0.0; 3];
            let mut count = 0usize;
            for (i, p) in scene.cloud.positions().iter().enumerate() {
                if o.bbox.contains(*p, 1e-6) && (p[2] > 1e-6) {
                    for a in 0..3 {
                        sum[a] += attrs[(i, a)];
                    }
                    count += 1;
                }
            }
            if count == 0 {
                [0.5; 3]
            } else {
                sum.map(|s| s / count as f64)
            }
        })
        .collect()
}

pub const COLOR_WORDS: [&str; 8] = [
    "black", "white", "red", "green", "blue", "yellow", "purple", "brown",
];

fn color_word(rgb: [f64; 3]) -> &'static str {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    if max < 0.25 {
        "black"
    } else if min > 0.75 {
        "white"
    } else if r >= g && r >= b {
        if g > 0.6 * r && b < 0.5 * r {
            if g > 0.8 * r {
                "yellow"
            } else {
                "brown"
            }
        } else if b > 0.7 * r {
            "purple"
        } else {
            "red"
        }
    } else if g >= b {
        "green"
    } else {
        "blue"
    }
}
