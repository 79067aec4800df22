//! Hypothesis space construction: shape priors, axis scaling plus integer
//! translation, transformed-prior caching, and prior learning from example
//! shapes.
//!
//! Translations never touch pixel data. A hypothesis `(class, s, t)` reads
//! the summary tables of the `(class, s)` transformed prior at coordinates
//! shifted by `-t`, so a grid of a hundred thousand translations shares a
//! handful of resampled priors and table builds.

use crate::bounds::PoseRef;
use crate::field::{BernoulliField, ClampPolicy, FieldError, ProbabilityImage};
use crate::summaries::{Region, SummaryError, SummaryTables};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HypothesesError {
    #[error("scale factors must be positive and finite, got ({sx}, {sy})")]
    InvalidScale { sx: f64, sy: f64 },
    #[error("no hypothesis fits inside the {width}x{height} image")]
    EmptyHypothesisSpace { width: u32, height: u32 },
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Summary(#[from] SummaryError),
}

/// Axis-aligned scaling followed by an integer pixel translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleTranslate {
    pub sx: f64,
    pub sy: f64,
    pub tx: i32,
    pub ty: i32,
}

impl ScaleTranslate {
    pub fn identity() -> Self {
        Self { sx: 1.0, sy: 1.0, tx: 0, ty: 0 }
    }
}

/// A shape class: its prior success rates and the support rectangle outside
/// which the prior is zero.
#[derive(Debug, Clone)]
pub struct PriorClass {
    pub id: String,
    pub prior: ProbabilityImage,
    pub support: Region,
}

impl PriorClass {
    /// Prior whose support is the full extent of the given image.
    pub fn from_image(id: impl Into<String>, prior: ProbabilityImage) -> Self {
        let support = Region::new(0, 0, prior.width(), prior.height());
        Self { id: id.into(), prior, support }
    }
}

/// One pose-and-class hypothesis; `support_img` is the transformed support
/// in image coordinates.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub id: u32,
    pub class: u32,
    pub transform: ScaleTranslate,
    pub support_img: Region,
}

/// A `(class, scale)` prior resampled onto its own grid, with summary
/// tables and the support-restricted normalizer. Shared read-only by every
/// translation of that class and scale.
#[derive(Debug)]
pub struct TransformedPrior {
    pub class: u32,
    pub sx: f64,
    pub sy: f64,
    pub field: BernoulliField,
    pub tables: SummaryTables,
    pub scaled_support: Region,
    pub z_units: i128,
}

impl TransformedPrior {
    pub fn z_h(&self) -> f64 {
        self.z_units as f64 * self.field.policy().unit()
    }
}

fn scaled_len(s: f64, len: u32) -> u32 {
    ((s * len as f64).round() as u32).max(1)
}

/// Support rectangle after scaling, clipped to the scaled prior extent.
fn scaled_support(pc: &PriorClass, sx: f64, sy: f64) -> Region {
    let (out_w, out_h) = (scaled_len(sx, pc.prior.width()), scaled_len(sy, pc.prior.height()));
    let x0 = (((pc.support.x0 as f64) * sx).round() as u32).min(out_w - 1);
    let y0 = (((pc.support.y0 as f64) * sy).round() as u32).min(out_h - 1);
    let w = scaled_len(sx, pc.support.w).min(out_w - x0);
    let h = scaled_len(sy, pc.support.h).min(out_h - y0);
    Region::new(x0, y0, w, h)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Resamples a prior by bilinear interpolation of its success rates at the
/// back-projected center of each output pixel, then clamps log-odds and
/// builds the summary tables. The identity scale reproduces the prior
/// exactly.
pub fn transform_prior(
    pc: &PriorClass,
    class: u32,
    sx: f64,
    sy: f64,
    policy: ClampPolicy,
    m: u32,
) -> Result<TransformedPrior, HypothesesError> {
    if !(sx.is_finite() && sy.is_finite()) || sx <= 0.0 || sy <= 0.0 {
        return Err(HypothesesError::InvalidScale { sx, sy });
    }
    let (in_w, in_h) = (pc.prior.width(), pc.prior.height());
    let (out_w, out_h) = (scaled_len(sx, in_w), scaled_len(sy, in_h));
    let mut p = Vec::with_capacity((out_w as usize) * (out_h as usize));
    for y in 0..out_h {
        let src_y = (((y as f64 + 0.5) / sy) - 0.5).clamp(0.0, (in_h - 1) as f64);
        let y0 = src_y.floor() as u32;
        let fy = src_y - y0 as f64;
        let y1 = (y0 + 1).min(in_h - 1);
        for x in 0..out_w {
            let src_x = (((x as f64 + 0.5) / sx) - 0.5).clamp(0.0, (in_w - 1) as f64);
            let x0 = src_x.floor() as u32;
            let fx = src_x - x0 as f64;
            let x1 = (x0 + 1).min(in_w - 1);
            let top = lerp(pc.prior.get(x0, y0), pc.prior.get(x1, y0), fx);
            let bot = lerp(pc.prior.get(x0, y1), pc.prior.get(x1, y1), fx);
            p.push(lerp(top, bot, fy).clamp(0.0, 1.0));
        }
    }
    let img = ProbabilityImage::new(out_w, out_h, p)?;
    let field = BernoulliField::from_probabilities(&img, policy);
    let tables = SummaryTables::build(&field, m)?;
    let sup = scaled_support(pc, sx, sy);
    let z_units = field.z_region_units(sup.x0, sup.y0, sup.w, sup.h);
    Ok(TransformedPrior { class, sx, sy, field, tables, scaled_support: sup, z_units })
}

/// Translation part of a hypothesis grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TranslationSpec {
    /// Every integer translation whose transformed support fits in the image.
    AllContained,
    /// Explicit translation offsets (applied to the scaled support origin).
    Ranges { tx: Vec<i32>, ty: Vec<i32> },
}

/// The Cartesian hypothesis grid: classes x scales x translations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisGrid {
    pub translations: TranslationSpec,
    pub sx: Vec<f64>,
    pub sy: Vec<f64>,
}

impl HypothesisGrid {
    pub fn all_contained() -> Self {
        Self { translations: TranslationSpec::AllContained, sx: vec![1.0], sy: vec![1.0] }
    }

    fn validate(&self) -> Result<(), HypothesesError> {
        if self.sx.is_empty() || self.sy.is_empty() {
            return Err(HypothesesError::InvalidConfiguration("empty scale set".into()));
        }
        if let TranslationSpec::Ranges { tx, ty } = &self.translations {
            if tx.is_empty() || ty.is_empty() {
                return Err(HypothesesError::InvalidConfiguration("empty translation range".into()));
            }
        }
        for &s in self.sx.iter().chain(self.sy.iter()) {
            if !s.is_finite() || s <= 0.0 {
                return Err(HypothesesError::InvalidScale { sx: s, sy: s });
            }
        }
        Ok(())
    }
}

/// Enumerates classes x scales x translations, keeping only hypotheses whose
/// support lies inside the image. Ids are assigned in lexicographic
/// (class, sy, sx, ty, tx) order.
pub fn enumerate(
    grid: &HypothesisGrid,
    classes: &[PriorClass],
    image_w: u32,
    image_h: u32,
) -> Result<Vec<Hypothesis>, HypothesesError> {
    grid.validate()?;
    let mut sorted_sx = grid.sx.clone();
    let mut sorted_sy = grid.sy.clone();
    sorted_sx.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted_sy.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted_sx.dedup();
    sorted_sy.dedup();

    let mut out = Vec::new();
    for (class_idx, pc) in classes.iter().enumerate() {
        for &sy in &sorted_sy {
            for &sx in &sorted_sx {
                let sup = scaled_support(pc, sx, sy);
                if sup.w > image_w || sup.h > image_h {
                    continue;
                }
                let (txs, tys): (Vec<i32>, Vec<i32>) = match &grid.translations {
                    TranslationSpec::AllContained => {
                        let tx_lo = -(sup.x0 as i64);
                        let tx_hi = image_w as i64 - sup.w as i64 - sup.x0 as i64;
                        let ty_lo = -(sup.y0 as i64);
                        let ty_hi = image_h as i64 - sup.h as i64 - sup.y0 as i64;
                        (
                            (tx_lo..=tx_hi).map(|t| t as i32).collect(),
                            (ty_lo..=ty_hi).map(|t| t as i32).collect(),
                        )
                    }
                    TranslationSpec::Ranges { tx, ty } => {
                        let mut tx = tx.clone();
                        let mut ty = ty.clone();
                        tx.sort_unstable();
                        tx.dedup();
                        ty.sort_unstable();
                        ty.dedup();
                        (tx, ty)
                    }
                };
                for &ty in &tys {
                    let y0 = sup.y0 as i64 + ty as i64;
                    if y0 < 0 || y0 + sup.h as i64 > image_h as i64 {
                        continue;
                    }
                    for &tx in &txs {
                        let x0 = sup.x0 as i64 + tx as i64;
                        if x0 < 0 || x0 + sup.w as i64 > image_w as i64 {
                            continue;
                        }
                        out.push(Hypothesis {
                            id: out.len() as u32,
                            class: class_idx as u32,
                            transform: ScaleTranslate { sx, sy, tx, ty },
                            support_img: Region::new(x0 as u32, y0 as u32, sup.w, sup.h),
                        });
                    }
                }
            }
        }
    }
    if out.is_empty() {
        return Err(HypothesesError::EmptyHypothesisSpace { width: image_w, height: image_h });
    }
    Ok(out)
}

/// Build-once, read-many store of transformed priors keyed by
/// `(class, sx, sy)`.
pub struct PriorTableSet {
    priors: Vec<TransformedPrior>,
    index: HashMap<(u32, u64, u64), usize>,
}

impl PriorTableSet {
    pub fn build(
        classes: &[PriorClass],
        sx_set: &[f64],
        sy_set: &[f64],
        policy: ClampPolicy,
        m: u32,
    ) -> Result<Self, HypothesesError> {
        let mut priors = Vec::new();
        let mut index = HashMap::new();
        for (class_idx, pc) in classes.iter().enumerate() {
            for &sy in sy_set {
                for &sx in sx_set {
                    let key = (class_idx as u32, sx.to_bits(), sy.to_bits());
                    if index.contains_key(&key) {
                        continue;
                    }
                    let tp = transform_prior(pc, class_idx as u32, sx, sy, policy, m)?;
                    index.insert(key, priors.len());
                    priors.push(tp);
                }
            }
        }
        Ok(Self { priors, index })
    }

    pub fn get(&self, class: u32, sx: f64, sy: f64) -> Option<&TransformedPrior> {
        self.index.get(&(class, sx.to_bits(), sy.to_bits())).map(|&i| &self.priors[i])
    }

    pub fn for_hypothesis(&self, h: &Hypothesis) -> &TransformedPrior {
        self.get(h.class, h.transform.sx, h.transform.sy)
            .expect("hypothesis references a prior missing from the table set")
    }

    pub fn len(&self) -> usize {
        self.priors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priors.is_empty()
    }
}

impl Hypothesis {
    /// Where this hypothesis reads the image and prior tables.
    pub fn pose(&self, prior: &TransformedPrior) -> PoseRef {
        PoseRef {
            support_img: self.support_img,
            dx: self.support_img.x0 as i64 - prior.scaled_support.x0 as i64,
            dy: self.support_img.y0 as i64 - prior.scaled_support.y0 as i64,
        }
    }
}

/// A binary shape mask.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), (width as usize) * (height as usize));
        Self { width, height, bits }
    }

    pub fn get(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return false;
        }
        self.bits[(y as usize) * (self.width as usize) + x as usize]
    }

    pub fn count(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    /// Nearest-neighbor rescaling.
    pub fn scaled(&self, sx: f64, sy: f64) -> BinaryMask {
        let (w, h) = (scaled_len(sx, self.width), scaled_len(sy, self.height));
        let mut bits = Vec::with_capacity((w as usize) * (h as usize));
        for y in 0..h {
            let src_y = (((y as f64 + 0.5) / sy) - 0.5).round().clamp(0.0, (self.height - 1) as f64);
            for x in 0..w {
                let src_x =
                    (((x as f64 + 0.5) / sx) - 0.5).round().clamp(0.0, (self.width - 1) as f64);
                bits.push(self.get(src_x as i64, src_y as i64));
            }
        }
        BinaryMask::new(w, h, bits)
    }
}

/// Symmetric-difference pixel count; the smaller mask is padded with
/// background.
pub fn shape_distance(a: &BinaryMask, b: &BinaryMask) -> u64 {
    shape_distance_shifted(a, b, 0, 0)
}

fn shape_distance_shifted(a: &BinaryMask, b: &BinaryMask, tx: i32, ty: i32) -> u64 {
    let x_lo = 0.min(tx as i64);
    let y_lo = 0.min(ty as i64);
    let x_hi = (b.width as i64).max(a.width as i64 + tx as i64);
    let y_hi = (b.height as i64).max(a.height as i64 + ty as i64);
    let mut d = 0;
    for y in y_lo..y_hi {
        for x in x_lo..x_hi {
            if a.get(x - tx as i64, y - ty as i64) != b.get(x, y) {
                d += 1;
            }
        }
    }
    d
}

/// Alignment search space for [`align_shapes`] and [`build_priors`].
#[derive(Debug, Clone)]
pub struct AlignParams {
    pub txs: Vec<i32>,
    pub tys: Vec<i32>,
    pub scales: Vec<f64>,
}

impl AlignParams {
    pub fn identity() -> Self {
        Self { txs: vec![0], tys: vec![0], scales: vec![1.0] }
    }

    pub fn translations(radius: i32) -> Self {
        Self { txs: (-radius..=radius).collect(), tys: (-radius..=radius).collect(), scales: vec![1.0] }
    }
}

/// Exhaustively finds the scale-and-translation of `s1` minimizing the
/// symmetric-difference distance to `s2`. Ties break toward the smallest
/// translation norm, then the scale closest to identity, then
/// lexicographically.
pub fn align_shapes(s1: &BinaryMask, s2: &BinaryMask, params: &AlignParams) -> (ScaleTranslate, u64) {
    let mut best: Option<(u64, f64, f64, ScaleTranslate)> = None;
    for &sy in &params.scales {
        for &sx in &params.scales {
            let scaled = s1.scaled(sx, sy);
            let s_err = (sx - 1.0).powi(2) + (sy - 1.0).powi(2);
            for &ty in &params.tys {
                for &tx in &params.txs {
                    let d = shape_distance_shifted(&scaled, s2, tx, ty);
                    let t_err = (tx as f64).powi(2) + (ty as f64).powi(2);
                    let cand = (d, t_err, s_err, ScaleTranslate { sx, sy, tx, ty });
                    let better = match &best {
                        None => true,
                        Some((bd, bt, bs, bst)) => {
                            (d, t_err, s_err, (sy, sx, ty, tx))
                                < (*bd, *bt, *bs, (bst.sy, bst.sx, bst.ty, bst.tx))
                        }
                    };
                    if better {
                        best = Some(cand);
                    }
                }
            }
        }
    }
    let (d, _, _, st) = best.expect("alignment search space is nonempty");
    (st, d)
}

/// k-medoids clustering state returned by [`kmedoids`].
#[derive(Debug, Clone)]
pub struct KMedoidsResult {
    pub medoids: Vec<usize>,
    pub assignment: Vec<usize>,
    pub objective: u64,
    /// Objective after each accepted swap, including the initial value.
    pub history: Vec<u64>,
}

/// PAM-style swap descent from seeded random starts over a directed
/// distance matrix (`dist[i][j]` = cost of assigning point `i` to medoid
/// `j`). The best of `restarts` runs is kept.
pub fn kmedoids(dist: &[Vec<u64>], k: usize, seed: u64, restarts: u32) -> KMedoidsResult {
    use rand::seq::index::sample;
    use rand::SeedableRng;
    let n = dist.len();
    assert!(k >= 1 && k <= n);
    let objective_of = |medoids: &[usize]| -> (u64, Vec<usize>) {
        let mut total = 0;
        let mut assignment = vec![0usize; n];
        for i in 0..n {
            let (mut best_m, mut best_d) = (medoids[0], dist[i][medoids[0]]);
            for &m in &medoids[1..] {
                if dist[i][m] < best_d {
                    best_d = dist[i][m];
                    best_m = m;
                }
            }
            total += best_d;
            assignment[i] = best_m;
        }
        (total, assignment)
    };

    let mut best: Option<KMedoidsResult> = None;
    for r in 0..restarts.max(1) {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed.wrapping_add(r as u64));
        let mut medoids: Vec<usize> = sample(&mut rng, n, k).into_vec();
        medoids.sort_unstable();
        let (mut obj, mut assignment) = objective_of(&medoids);
        let mut history = vec![obj];
        loop {
            let mut improved = false;
            let mut best_swap: Option<(usize, usize, u64)> = None;
            for mi in 0..k {
                for o in 0..n {
                    if medoids.contains(&o) {
                        continue;
                    }
                    let mut cand = medoids.clone();
                    cand[mi] = o;
                    let (cobj, _) = objective_of(&cand);
                    if cobj < obj && best_swap.map_or(true, |(_, _, b)| cobj < b) {
                        best_swap = Some((mi, o, cobj));
                    }
                }
            }
            if let Some((mi, o, cobj)) = best_swap {
                medoids[mi] = o;
                medoids.sort_unstable();
                obj = cobj;
                assignment = objective_of(&medoids).1;
                history.push(obj);
                improved = true;
            }
            if !improved {
                break;
            }
        }
        let cand = KMedoidsResult { medoids, assignment, objective: obj, history };
        if best.as_ref().map_or(true, |b| cand.objective < b.objective) {
            best = Some(cand);
        }
    }
    best.unwrap()
}

/// Learns `clusters_per_class` priors from a set of example shapes:
/// k-medoids under the aligned symmetric-difference distance, then a
/// per-pixel coverage fraction of the cluster members aligned to their
/// medoid. Supports are the bounding boxes of the nonzero probabilities.
pub fn build_priors(
    shapes: &[BinaryMask],
    clusters_per_class: usize,
    seed: u64,
    align: &AlignParams,
) -> Result<Vec<PriorClass>, HypothesesError> {
    if clusters_per_class == 0 || clusters_per_class > shapes.len() {
        return Err(HypothesesError::InvalidConfiguration(format!(
            "cannot form {clusters_per_class} clusters from {} shapes",
            shapes.len()
        )));
    }
    let n = shapes.len();
    let mut dist = vec![vec![0u64; n]; n];
    let mut best_t = vec![vec![ScaleTranslate::identity(); n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (t, d) = align_shapes(&shapes[i], &shapes[j], align);
            dist[i][j] = d;
            best_t[i][j] = t;
        }
    }

    let result = kmedoids(&dist, clusters_per_class, seed, 8);
    let mut out = Vec::new();
    for (cluster_idx, &medoid) in result.medoids.iter().enumerate() {
        let members: Vec<usize> =
            (0..n).filter(|&i| result.assignment[i] == medoid).collect();
        let canvas = &shapes[medoid];
        let (w, h) = (canvas.width, canvas.height);
        let mut acc = vec![0u32; (w as usize) * (h as usize)];
        for &i in &members {
            let t = if i == medoid { ScaleTranslate::identity() } else { best_t[i][medoid] };
            let aligned = shapes[i].scaled(t.sx, t.sy);
            for y in 0..aligned.height as i64 {
                for x in 0..aligned.width as i64 {
                    if !aligned.get(x, y) {
                        continue;
                    }
                    let (ix, iy) = (x + t.tx as i64, y + t.ty as i64);
                    if ix >= 0 && iy >= 0 && ix < w as i64 && iy < h as i64 {
                        acc[(iy as usize) * (w as usize) + ix as usize] += 1;
                    }
                }
            }
        }
        let denom = members.len() as f64;
        let p: Vec<f64> = acc.iter().map(|&c| c as f64 / denom).collect();
        let img = ProbabilityImage::new(w, h, p)?;
        // support: bounding box of nonzero probability
        let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0u32, 0u32);
        for y in 0..h {
            for x in 0..w {
                if img.get(x, y) > 0.0 {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x + 1);
                    y1 = y1.max(y + 1);
                }
            }
        }
        let support = if x1 > x0 { Region::new(x0, y0, x1 - x0, y1 - y0) } else {
            Region::new(0, 0, w, h)
        };
        out.push(PriorClass { id: format!("cluster{cluster_idx}"), prior: img, support });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> BinaryMask {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        let bits = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        BinaryMask::new(w, h, bits)
    }

    #[test]
    fn identity_transform_reproduces_prior_exactly() {
        let p: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
        let img = ProbabilityImage::new(4, 3, p).unwrap();
        let pc = PriorClass::from_image("t", img.clone());
        let tp = transform_prior(&pc, 0, 1.0, 1.0, ClampPolicy::default(), 1).unwrap();
        for y in 0..3 {
            for x in 0..4 {
                assert_eq!(tp.field.probability(x, y), {
                    let policy = ClampPolicy::default();
                    let pc = img.get(x, y).clamp(policy.p_min(), 1.0 - policy.p_min());
                    // the lattice snap is the only difference
                    let f = BernoulliField::from_probabilities(
                        &ProbabilityImage::new(1, 1, vec![pc]).unwrap(),
                        policy,
                    );
                    f.probability(0, 0)
                });
            }
        }
    }

    #[test]
    fn half_scale_extent() {
        let img = ProbabilityImage::constant(128, 128, 0.7).unwrap();
        let pc = PriorClass::from_image("t", img);
        let tp = transform_prior(&pc, 0, 0.5, 1.0, ClampPolicy::default(), 1).unwrap();
        assert_eq!((tp.field.width(), tp.field.height()), (64, 128));
    }

    #[test]
    fn constant_prior_stays_constant_under_scaling() {
        let img = ProbabilityImage::constant(16, 16, 0.7).unwrap();
        let pc = PriorClass::from_image("t", img);
        for (sx, sy) in [(0.5, 0.5), (1.3, 0.8), (2.0, 2.0)] {
            let tp = transform_prior(&pc, 0, sx, sy, ClampPolicy::default(), 1).unwrap();
            for y in 0..tp.field.height() {
                for x in 0..tp.field.width() {
                    assert!((tp.field.probability(x, y) - 0.7).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn invalid_scale_rejected() {
        let img = ProbabilityImage::constant(4, 4, 0.5).unwrap();
        let pc = PriorClass::from_image("t", img);
        assert!(transform_prior(&pc, 0, 0.0, 1.0, ClampPolicy::default(), 1).is_err());
    }

    #[test]
    fn enumerate_sliding_window_count() {
        let img = ProbabilityImage::constant(128, 128, 0.5).unwrap();
        let pc = PriorClass::from_image("a", img);
        let grid = HypothesisGrid::all_contained();
        let hyps = enumerate(&grid, &[pc], 512, 512).unwrap();
        assert_eq!(hyps.len(), 385 * 385);
    }

    #[test]
    fn enumerate_product_count_without_filtering() {
        // 11x11 translations x 5x5 scalings x 156 classes, image large
        // enough that nothing is filtered out.
        let img = ProbabilityImage::constant(8, 8, 0.5).unwrap();
        let classes: Vec<PriorClass> = (0..156)
            .map(|i| PriorClass::from_image(format!("c{i}"), img.clone()))
            .collect();
        let grid = HypothesisGrid {
            translations: TranslationSpec::Ranges {
                tx: (0..11).collect(),
                ty: (0..11).collect(),
            },
            sx: vec![0.92, 0.96, 1.0, 1.04, 1.08],
            sy: vec![0.92, 0.96, 1.0, 1.04, 1.08],
        };
        let hyps = enumerate(&grid, &classes, 64, 64).unwrap();
        assert_eq!(hyps.len(), 471_900);
    }

    #[test]
    fn enumerate_single_hypothesis() {
        let img = ProbabilityImage::constant(4, 4, 0.5).unwrap();
        let pc = PriorClass::from_image("a", img);
        let grid = HypothesisGrid {
            translations: TranslationSpec::Ranges { tx: vec![0], ty: vec![0] },
            sx: vec![1.0],
            sy: vec![1.0],
        };
        let hyps = enumerate(&grid, &[pc], 4, 4).unwrap();
        assert_eq!(hyps.len(), 1);
        assert_eq!(hyps[0].support_img, Region::new(0, 0, 4, 4));
    }

    #[test]
    fn enumerate_empty_space_is_error() {
        let img = ProbabilityImage::constant(8, 8, 0.5).unwrap();
        let pc = PriorClass::from_image("a", img);
        let grid = HypothesisGrid::all_contained();
        assert!(matches!(
            enumerate(&grid, &[pc], 4, 4),
            Err(HypothesesError::EmptyHypothesisSpace { .. })
        ));
    }

    #[test]
    fn shape_distance_examples() {
        let a = mask_from(&["##", "##"]);
        assert_eq!(shape_distance(&a, &a), 0);
        let b = mask_from(&["..", ".."]);
        assert_eq!(shape_distance(&a, &b), 4);
        let c = mask_from(&["#.", ".#"]);
        let d = mask_from(&[".#", "#."]);
        assert_eq!(shape_distance(&c, &d), 4);
        assert_eq!(shape_distance(&c, &d), shape_distance(&d, &c));
    }

    #[test]
    fn align_recovers_translation() {
        let a = mask_from(&["#..", "##.", "#.."]);
        let b = mask_from(&["...#..", "...##.", "...#.."]);
        let params = AlignParams::translations(4);
        let (t, d) = align_shapes(&a, &b, &params);
        assert_eq!(d, 0);
        assert_eq!((t.tx, t.ty), (3, 0));
        // identity wins on equal shapes
        let (t, d) = align_shapes(&a, &a, &params);
        assert_eq!((d, t.tx, t.ty), (0, 0, 0));
    }

    #[test]
    fn build_priors_unanimous_vote() {
        let a = mask_from(&["#.", "##"]);
        let shapes = vec![a.clone(), a.clone(), a.clone()];
        let priors = build_priors(&shapes, 1, 3, &AlignParams::identity()).unwrap();
        assert_eq!(priors.len(), 1);
        for y in 0..2 {
            for x in 0..2 {
                let expected = if a.get(x as i64, y as i64) { 1.0 } else { 0.0 };
                assert_eq!(priors[0].prior.get(x, y), expected);
            }
        }
    }

    #[test]
    fn build_priors_averages_disjoint_masks() {
        let a = mask_from(&["#.", ".."]);
        let b = mask_from(&["..", ".#"]);
        let priors = build_priors(&[a, b], 1, 0, &AlignParams::identity()).unwrap();
        let p = &priors[0].prior;
        let half_count = (0..2)
            .flat_map(|y| (0..2).map(move |x| (x, y)))
            .filter(|&(x, y)| (p.get(x, y) - 0.5).abs() < 1e-12)
            .count();
        assert_eq!(half_count, 2);
    }

    #[test]
    fn kmedoids_separates_two_families() {
        // two tight families; brute-force optimum assigns one medoid each
        let family_a = [mask_from(&["###", "#..", "#.."]), mask_from(&["###", "#..", "..."])];
        let family_b = [mask_from(&["..#", "..#", "###"]), mask_from(&["...", "..#", "###"])];
        let shapes: Vec<BinaryMask> =
            family_a.iter().chain(family_b.iter()).cloned().collect();
        let mut dist = vec![vec![0u64; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                dist[i][j] = shape_distance(&shapes[i], &shapes[j]);
            }
        }
        let res = kmedoids(&dist, 2, 11, 8);
        let cluster_of: Vec<usize> =
            res.assignment.iter().map(|&m| if m == res.medoids[0] { 0 } else { 1 }).collect();
        assert_eq!(cluster_of[0], cluster_of[1]);
        assert_eq!(cluster_of[2], cluster_of[3]);
        assert_ne!(cluster_of[0], cluster_of[2]);
        // exhaustive check over all medoid pairs
        let mut best = u64::MAX;
        for m1 in 0..4 {
            for m2 in (m1 + 1)..4 {
                let obj: u64 =
                    (0..4).map(|i| dist[i][m1].min(dist[i][m2])).sum();
                best = best.min(obj);
            }
        }
        assert_eq!(res.objective, best);
    }

    #[test]
    fn kmedoids_objective_nonincreasing() {
        let masks: Vec<BinaryMask> = (0..6)
            .map(|i| {
                let bits = (0..16).map(|j| (i * 7 + j * 3) % 4 == 0).collect();
                BinaryMask::new(4, 4, bits)
            })
            .collect();
        let n = masks.len();
        let mut dist = vec![vec![0u64; n]; n];
        for i in 0..n {
            for j in 0..n {
                dist[i][j] = shape_distance(&masks[i], &masks[j]);
            }
        }
        let res = kmedoids(&dist, 2, 5, 4);
        assert!(res.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn z_invariant_under_translation() {
        let img = ProbabilityImage::constant(8, 8, 0.7).unwrap();
        let pc = PriorClass::from_image("t", img);
        let set = PriorTableSet::build(&[pc], &[1.0], &[1.0], ClampPolicy::default(), 2).unwrap();
        let tp = set.get(0, 1.0, 1.0).unwrap();
        // every translation of this class/scale shares the single z value
        let z = tp.z_units;
        assert_eq!(z, tp.field.z_region_units(0, 0, 8, 8));
    }
}
