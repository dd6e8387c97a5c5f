//! Synthetic labeled patches with a ground-truth oracle.
//!
//! Each patch holds small dark dots with sharp boundaries (the true positives)
//! on a bright textured background, loose convex polygons around each dot
//! cluster (recall 1, precision below one half), and low-contrast gray blobs
//! that sit both inside and outside the polygons.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::imaging::io::{load_gray_png, load_mask_png, load_polygons, save_gray_png, save_mask_png, save_polygons};
use crate::imaging::{rasterize_polygons, BinaryMask, GrayImage, ImagingError, Polygon};

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("invalid generator parameters: {0}")]
    Params(String),
    #[error("patch {index}: {reason}")]
    Generation { index: u64, reason: String },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenParams {
    pub patch_size: usize,
    pub clusters_per_patch: [usize; 2],
    pub dots_per_patch: [usize; 2],
    pub dot_radius: [f64; 2],
    pub dot_intensity: [f64; 2],
    pub background_intensity: [f64; 2],
    pub texture_noise_std: f64,
    /// Radius of the circle around each dot center that the polygon encloses.
    pub polygon_slack: f64,
    pub cluster_spread: f64,
    pub distractors_inside: [usize; 2],
    pub distractors_outside: [usize; 2],
    pub distractor_radius: [f64; 2],
    pub distractor_intensity: [f64; 2],
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            patch_size: 64,
            clusters_per_patch: [1, 2],
            dots_per_patch: [3, 6],
            dot_radius: [1.6, 2.6],
            dot_intensity: [10.0, 40.0],
            background_intensity: [185.0, 215.0],
            texture_noise_std: 6.0,
            polygon_slack: 11.0,
            cluster_spread: 9.0,
            distractors_inside: [2, 3],
            distractors_outside: [1, 2],
            distractor_radius: [2.5, 4.0],
            distractor_intensity: [115.0, 150.0],
            seed: 20211130,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::Params(m));
        let ranges_f = [
            ("dot_radius", self.dot_radius),
            ("dot_intensity", self.dot_intensity),
            ("background_intensity", self.background_intensity),
            ("distractor_radius", self.distractor_radius),
            ("distractor_intensity", self.distractor_intensity),
        ];
        for (name, [lo, hi]) in ranges_f {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("{name} range [{lo}, {hi}] is empty"));
            }
        }
        let ranges_u = [
            ("clusters_per_patch", self.clusters_per_patch),
            ("dots_per_patch", self.dots_per_patch),
            ("distractors_inside", self.distractors_inside),
            ("distractors_outside", self.distractors_outside),
        ];
        for (name, [lo, hi]) in ranges_u {
            if lo > hi {
                return bad(format!("{name} range [{lo}, {hi}] is empty"));
            }
        }
        if self.clusters_per_patch[0] == 0 || self.dots_per_patch[0] == 0 {
            return bad("patches need at least one cluster and one dot".into());
        }
        if self.dot_radius[0] <= 0.0 {
            return bad("dot radius must be positive".into());
        }
        if self.polygon_slack < self.dot_radius[1] {
            return bad(format!("polygon_slack {} is below the largest dot radius {}", self.polygon_slack, self.dot_radius[1]));
        }
        if self.patch_size < 16 {
            return bad(format!("patch_size {} is below 16", self.patch_size));
        }
        if self.texture_noise_std < 0.0 || self.cluster_spread < 0.0 {
            return bad("noise and spread must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPatch {
    pub image: GrayImage,
    pub true_mask: BinaryMask,
    pub polygons: Vec<Polygon>,
}

/// Fraction of `mask` pixels covered by `truth` and of `truth` covered by `mask`.
pub fn precision_recall(mask: &BinaryMask, truth: &BinaryMask) -> (f64, f64) {
    let tp = mask.and(truth).count() as f64;
    let ratio = |n: f64, d: usize| if d == 0 { 0.0 } else { n / d as f64 };
    (ratio(tp, mask.count()), ratio(tp, truth.count()))
}

/// Checks the recall-1 and precision-below-one-half guarantees.
pub fn check_patch_invariants(patch: &LabeledPatch) -> Result<(), String> {
    let union = rasterize_polygons(&patch.polygons, patch.image.width(), patch.image.height())
        .map_err(|e| e.to_string())?;
    if !patch.true_mask.is_subset_of(&union) {
        return Err("a true positive lies outside the polygons".into());
    }
    if union.count() < 2 * patch.true_mask.count() {
        return Err(format!(
            "polygon union {} is less than twice the true mask {}",
            union.count(),
            patch.true_mask.count()
        ));
    }
    Ok(())
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn uniform_count(rng: &mut ChaCha8Rng, [lo, hi]: [usize; 2]) -> usize {
    rng.random_range(lo..=hi)
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; counter-clockwise in y-up terms.
fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], *p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], *p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

struct Dot {
    x: f64,
    y: f64,
    r: f64,
    cluster: usize,
}

const PLACEMENT_ATTEMPTS: usize = 200;
const HULL_POINTS: usize = 16;

/// Generates patch `index`; the result depends only on `(params.seed, index)`.
pub fn gen_patch(params: &GenParams, index: u64) -> Result<LabeledPatch, GenError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(index);
    let size = params.patch_size;
    let sz = size as f64;
    let fail = |reason: String| GenError::Generation { index, reason };

    // Background with texture noise.
    let bg = uniform(&mut rng, params.background_intensity);
    let noise = Normal::new(0.0, params.texture_noise_std.max(1e-12)).expect("finite std");
    let mut field: Vec<f64> = (0..size * size).map(|_| bg + noise.sample(&mut rng)).collect();

    // Cluster centers keep the inflated polygons mostly on the patch.
    let n_clusters = uniform_count(&mut rng, params.clusters_per_patch);
    let margin = (params.polygon_slack * 0.5 + params.dot_radius[1] + 1.0).min(sz / 2.0 - 1.0);
    let centers: Vec<[f64; 2]> =
        (0..n_clusters).map(|_| [rng.random_range(margin..sz - margin), rng.random_range(margin..sz - margin)]).collect();

    let n_dots = uniform_count(&mut rng, params.dots_per_patch).max(n_clusters);
    let mut dots: Vec<Dot> = Vec::with_capacity(n_dots);
    for d in 0..n_dots {
        let cluster = if d < n_clusters { d } else { rng.random_range(0..n_clusters) };
        let r = uniform(&mut rng, params.dot_radius);
        let placed = (0..PLACEMENT_ATTEMPTS).find_map(|_| {
            let ang = rng.random_range(0.0..std::f64::consts::TAU);
            let dist = params.cluster_spread * rng.random::<f64>().sqrt();
            let x = centers[cluster][0] + dist * ang.cos();
            let y = centers[cluster][1] + dist * ang.sin();
            let inside = x - r >= 1.0 && y - r >= 1.0 && x + r <= sz - 1.0 && y + r <= sz - 1.0;
            let clear = dots.iter().all(|o| (o.x - x).hypot(o.y - y) > o.r + r + 1.5);
            (inside && clear).then_some((x, y))
        });
        match placed {
            Some((x, y)) => dots.push(Dot { x, y, r, cluster }),
            // Crowded clusters keep the dots already placed.
            None if d >= n_clusters => {}
            None => return Err(fail(format!("could not place dot {d}"))),
        }
    }

    // Polygons: convex hull of circles of radius `polygon_slack` around the
    // dots of each cluster, with vertices pushed outward at random.
    let mut polygons = Vec::new();
    for c in 0..n_clusters {
        let members: Vec<&Dot> = dots.iter().filter(|d| d.cluster == c).collect();
        if members.is_empty() {
            continue;
        }
        let mut pts = Vec::with_capacity(members.len() * HULL_POINTS);
        for d in &members {
            for k in 0..HULL_POINTS {
                let ang = k as f64 / HULL_POINTS as f64 * std::f64::consts::TAU;
                pts.push([d.x + params.polygon_slack * ang.cos(), d.y + params.polygon_slack * ang.sin()]);
            }
        }
        let hull = convex_hull(pts);
        let (cx, cy) = (
            hull.iter().map(|p| p[0]).sum::<f64>() / hull.len() as f64,
            hull.iter().map(|p| p[1]).sum::<f64>() / hull.len() as f64,
        );
        let verts = hull
            .into_iter()
            .map(|p| {
                let s = 1.0 + 0.15 * rng.random::<f64>();
                let q = [cx + s * (p[0] - cx), cy + s * (p[1] - cy)];
                [(q[0] * 4.0).round() / 4.0, (q[1] * 4.0).round() / 4.0]
            })
            .collect();
        polygons.push(Polygon::new(verts)?);
    }
    let union = rasterize_polygons(&polygons, size, size)?;

    // Low-contrast blobs: lighter than the gray threshold, smooth edges.
    let blob = |field: &mut Vec<f64>, x: f64, y: f64, radius: f64, level: f64| {
        let s = radius / 1.2;
        for py in 0..size {
            for px in 0..size {
                let d2 = (px as f64 + 0.5 - x).powi(2) + (py as f64 + 0.5 - y).powi(2);
                if d2 > (3.0 * s).powi(2) {
                    continue;
                }
                let w = (-d2 / (2.0 * s * s)).exp();
                let v = &mut field[py * size + px];
                *v = *v * (1.0 - w) + level * w;
            }
        }
    };
    let far_from_dots = |x: f64, y: f64, radius: f64| dots.iter().all(|d| (d.x - x).hypot(d.y - y) > d.r + radius + 1.5);
    let n_inside = uniform_count(&mut rng, params.distractors_inside);
    for _ in 0..n_inside {
        let radius = uniform(&mut rng, params.distractor_radius);
        let level = uniform(&mut rng, params.distractor_intensity);
        let spot = (0..PLACEMENT_ATTEMPTS).find_map(|_| {
            let (x, y) = (rng.random_range(1.0..sz - 1.0), rng.random_range(1.0..sz - 1.0));
            let cell = union.get(x as usize, y as usize);
            (cell && far_from_dots(x, y, radius)).then_some((x, y))
        });
        if let Some((x, y)) = spot {
            blob(&mut field, x, y, radius, level);
        }
    }
    let n_outside = uniform_count(&mut rng, params.distractors_outside);
    for _ in 0..n_outside {
        let radius = uniform(&mut rng, params.distractor_radius);
        let level = uniform(&mut rng, params.distractor_intensity);
        let reach = radius + 2.0;
        let spot = (0..PLACEMENT_ATTEMPTS).find_map(|_| {
            let (x, y) = (rng.random_range(reach..sz - reach), rng.random_range(reach..sz - reach));
            let clear = (-2..=2).all(|dy| {
                (-2..=2).all(|dx| {
                    let qx = (x + dx as f64 * reach / 2.0).clamp(0.0, sz - 1.0) as usize;
                    let qy = (y + dy as f64 * reach / 2.0).clamp(0.0, sz - 1.0) as usize;
                    !union.get(qx, qy)
                })
            });
            (clear && far_from_dots(x, y, radius)).then_some((x, y))
        });
        if let Some((x, y)) = spot {
            blob(&mut field, x, y, radius, level);
        }
    }

    // Dots last, with hard edges.
    let mut true_mask = BinaryMask::new(size, size);
    for d in &dots {
        let level = uniform(&mut rng, params.dot_intensity);
        for py in 0..size {
            for px in 0..size {
                if (px as f64 + 0.5 - d.x).hypot(py as f64 + 0.5 - d.y) <= d.r {
                    true_mask.set(px, py, true);
                    field[py * size + px] = level + 0.5 * noise.sample(&mut rng);
                }
            }
        }
    }

    let data = field.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    let patch = LabeledPatch { image: GrayImage::new(size, size, data)?, true_mask, polygons };
    check_patch_invariants(&patch).map_err(fail)?;
    Ok(patch)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: u64,
    pub image: String,
    pub true_mask: String,
    pub polygons: String,
}

/// Split membership with paths relative to the corpus directory.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub train: Vec<ManifestEntry>,
    pub val: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn load(corpus_dir: &Path) -> Result<Self, GenError> {
        let text = std::fs::read_to_string(corpus_dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn entry(index: u64) -> ManifestEntry {
    ManifestEntry {
        index,
        image: format!("images/{index:05}.png"),
        true_mask: format!("masks/{index:05}.png"),
        polygons: format!("polygons/{index:05}.json"),
    }
}

/// Writes `n_train + n_val + n_test` patches and `manifest.json` into `out_dir`.
pub fn gen_corpus(params: &GenParams, n_train: usize, n_val: usize, n_test: usize, out_dir: &Path) -> Result<Manifest, GenError> {
    params.validate()?;
    for sub in ["images", "masks", "polygons"] {
        std::fs::create_dir_all(out_dir.join(sub))?;
    }
    let total = (n_train + n_val + n_test) as u64;
    (0..total).into_par_iter().try_for_each(|i| -> Result<(), GenError> {
        let patch = gen_patch(params, i)?;
        let e = entry(i);
        save_gray_png(&patch.image, &out_dir.join(&e.image))?;
        save_mask_png(&patch.true_mask, &out_dir.join(&e.true_mask))?;
        save_polygons(&patch.polygons, &out_dir.join(&e.polygons))?;
        Ok(())
    })?;
    let (a, b) = (n_train as u64, (n_train + n_val) as u64);
    let manifest = Manifest {
        train: (0..a).map(entry).collect(),
        val: (a..b).map(entry).collect(),
        test: (b..total).map(entry).collect(),
    };
    std::fs::write(out_dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// A patch loaded back from disk.
#[derive(Clone, Debug)]
pub struct CorpusItem {
    pub index: u64,
    pub image: GrayImage,
    pub true_mask: BinaryMask,
    pub polygons: Vec<Polygon>,
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub dir: PathBuf,
    pub train: Vec<CorpusItem>,
    pub val: Vec<CorpusItem>,
    pub test: Vec<CorpusItem>,
}

impl Corpus {
    pub fn load(dir: &Path) -> Result<Self, GenError> {
        let manifest = Manifest::load(dir)?;
        let load = |entries: &[ManifestEntry]| -> Result<Vec<CorpusItem>, GenError> {
            entries
                .par_iter()
                .map(|e| {
                    let image = load_gray_png(&dir.join(&e.image))?;
                    let true_mask = load_mask_png(&dir.join(&e.true_mask))?;
                    if true_mask.width() != image.width() || true_mask.height() != image.height() {
                        return Err(ImagingError::Dimensions(format!("mask of patch {} does not match its image", e.index)).into());
                    }
                    let polygons = load_polygons(&dir.join(&e.polygons))?;
                    Ok(CorpusItem { index: e.index, image, true_mask, polygons })
                })
                .collect()
        };
        Ok(Corpus { dir: dir.to_path_buf(), train: load(&manifest.train)?, val: load(&manifest.val)?, test: load(&manifest.test)? })
    }

    /// Generates the corpus in memory without touching the disk.
    pub fn generate(params: &GenParams, n_train: usize, n_val: usize, n_test: usize) -> Result<Self, GenError> {
        let make = |range: std::ops::Range<u64>| -> Result<Vec<CorpusItem>, GenError> {
            range
                .into_par_iter()
                .map(|i| {
                    let p = gen_patch(params, i)?;
                    Ok(CorpusItem { index: i, image: p.image, true_mask: p.true_mask, polygons: p.polygons })
                })
                .collect()
        };
        let (a, b, c) = (n_train as u64, (n_train + n_val) as u64, (n_train + n_val + n_test) as u64);
        Ok(Corpus { dir: PathBuf::new(), train: make(0..a)?, val: make(a..b)?, test: make(b..c)? })
    }

    pub fn split(&self, split: Split) -> &[CorpusItem] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}
