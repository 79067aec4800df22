//! Per-hypothesis evidence bounds and their incremental refinement.
//!
//! The evidence of a hypothesis is `z_h + sup_q integral of (delta_f +
//! delta_h) * q` over shapes `q` on the support. For any partition of the
//! support into rectangles:
//!
//! - each element contributes the *lower* bound `max(0, mean_f + mean_h)`,
//!   attained by labeling the whole element foreground or background;
//! - each element contributes the *upper* bound obtained by merging the two
//!   m-summaries into one ascending vector of length `4m+2` and integrating
//!   its implied majorant over the top counts (the summaries bound how much
//!   mass can sit at high log-odds, but not where it is).
//!
//! Refinement pops the leaf with (approximately) the greatest local margin
//! from an untidy bucket queue and splits it in four, updating the totals
//! incrementally. Lower totals never decrease and upper totals never
//! increase; both are maintained as exact lattice integers.

use crate::field::BernoulliField;
use crate::summaries::{MSummary, Region, SummaryTables};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BoundsError {
    #[error("hypothesis support {support:?} exceeds the {width}x{height} image")]
    InvalidHypothesis { support: Region, width: u32, height: u32 },
    #[error("prior-side region {region:?} exceeds the {width}x{height} prior grid")]
    InvalidPriorRegion { region: Region, width: u32, height: u32 },
    #[error("image and prior tables use different lattices or m")]
    MismatchedTables,
    #[error("m-summaries have lengths {0} and {1}; they must match")]
    InvalidSummary(usize, usize),
}

/// Refinement knobs: the bucket-queue ratio and the margin floor below
/// which a leaf counts as resolved (relative to `delta_max`).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundParams {
    pub rho: f64,
    pub m_floor_rel: f64,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self { rho: 1.2, m_floor_rel: 1e-6 }
    }
}

/// Where a hypothesis reads its two fields: the support rectangle in image
/// coordinates and the translation taking image coordinates to prior-grid
/// coordinates (`prior = image - (dx, dy)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoseRef {
    pub support_img: Region,
    pub dx: i64,
    pub dy: i64,
}

impl PoseRef {
    pub fn region_pri(&self, region_img: Region) -> Region {
        region_img.translate(-self.dx, -self.dy)
    }
}

/// One partition element with its local summaries and bounds.
///
/// All `_units` quantities live on the shared log-odds lattice; multiply by
/// the owning [`HypothesisBounds::unit`] to convert to log-odds.
#[derive(Debug, Clone)]
pub struct ElementRecord {
    pub region_img: Region,
    pub region_pri: Region,
    pub mean_f_units: i128,
    pub mean_h_units: i128,
    pub msum_f: Vec<u64>,
    pub msum_h: Vec<u64>,
    pub local_lower_units: i128,
    pub local_upper_units: i128,
    pub resolved: bool,
}

impl ElementRecord {
    pub fn margin_units(&self) -> i128 {
        self.local_upper_units - self.local_lower_units
    }

    /// Foreground label of the lower-bound shape on this element.
    pub fn label(&self) -> bool {
        self.mean_f_units + self.mean_h_units > 0
    }
}

/// Untidy bucket priority queue over leaf margins.
///
/// Bucket `j` spans margins `[b_j, b_{j+1})` with `b_{j+1} < rho * b_j`
/// enforced at construction, so a pop from the top non-empty bucket returns
/// an entry whose margin is at least `1/rho` of the true maximum. Insert and
/// pop are O(1); pops within a bucket are LIFO. Out-of-range margins clamp
/// to the extreme buckets.
#[derive(Debug, Clone)]
pub struct MarginQueue {
    boundaries: Vec<f64>,
    buckets: Vec<Vec<u32>>,
    j_max: usize,
    len: usize,
}

impl MarginQueue {
    pub fn new(m_floor: f64, ceiling: f64, rho: f64) -> Self {
        assert!(rho > 1.0 && m_floor > 0.0);
        let mut boundaries = vec![m_floor];
        // Shade each boundary slightly down so that b[j+1] <= rho * b[j]
        // holds in real arithmetic despite rounding.
        while *boundaries.last().unwrap() < ceiling.max(m_floor) {
            let next = boundaries.last().unwrap() * rho * (1.0 - 1e-14);
            boundaries.push(next);
        }
        let buckets = vec![Vec::new(); boundaries.len()];
        Self { boundaries, buckets, j_max: 0, len: 0 }
    }

    fn bucket_index(&self, margin: f64) -> usize {
        let j = self.boundaries.partition_point(|b| *b <= margin);
        j.saturating_sub(1).min(self.buckets.len() - 1)
    }

    pub fn insert(&mut self, margin: f64, id: u32) {
        let j = self.bucket_index(margin);
        self.buckets[j].push(id);
        self.j_max = self.j_max.max(j);
        self.len += 1;
    }

    /// Pops any entry from the top non-empty bucket.
    pub fn pop_max(&mut self) -> Option<u32> {
        if self.len == 0 {
            return None;
        }
        while self.buckets[self.j_max].is_empty() {
            self.j_max -= 1;
        }
        self.len -= 1;
        self.buckets[self.j_max].pop()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Lower bound of one element and its shape label: `max(0, mean_f + mean_h)`
/// with foreground exactly when the sum is strictly positive (ties label
/// background).
pub fn local_lower(mean_f: f64, mean_h: f64) -> (f64, bool) {
    let s = mean_f + mean_h;
    (s.max(0.0), s > 0.0)
}

/// Upper bound of one element from the two m-summaries.
///
/// Merges the summaries ascending (duplicates kept) into a vector of length
/// `4m+2` and returns `(delta_max/m) * sum_{j=2m+1}^{4m+1} (j-2m) *
/// (merged[j+1] - merged[j])` (1-based).
pub fn local_upper(
    msum_f: &MSummary,
    msum_h: &MSummary,
    m: u32,
    delta_max: f64,
) -> Result<f64, BoundsError> {
    let n = 2 * m as usize + 1;
    if msum_f.len() != n || msum_h.len() != n {
        return Err(BoundsError::InvalidSummary(msum_f.len(), msum_h.len()));
    }
    let merged = merge_ascending(&msum_f.values, &msum_h.values);
    let two_m = 2 * m as usize;
    let mut acc = 0.0;
    for j in two_m..=4 * m as usize {
        acc += (j + 1 - two_m) as f64 * (merged[j + 1] - merged[j]);
    }
    Ok(acc * delta_max / m as f64)
}

/// Ascending merge of two m-summaries with duplicates kept; for summaries
/// of length `2m+1` the result has length `4m+2`.
pub fn merge_summaries(a: &MSummary, b: &MSummary) -> Vec<f64> {
    merge_ascending(&a.values, &b.values)
}

fn merge_ascending<T: PartialOrd + Copy>(a: &[T], b: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Integer-lattice version of [`local_upper`]: the weighted sum times
/// `bin = delta_max/m` in lattice units.
fn local_upper_units(msum_f: &[u64], msum_h: &[u64], bin: i64) -> i128 {
    debug_assert_eq!(msum_f.len(), msum_h.len());
    let merged = merge_ascending(msum_f, msum_h);
    let two_m = msum_f.len() - 1; // 2m
    let mut acc: i128 = 0;
    for j in two_m..merged.len() - 1 {
        acc += (j + 1 - two_m) as i128 * (merged[j + 1] - merged[j]) as i128;
    }
    acc * bin as i128
}

/// What one refinement did: the split element, the byte-exact bound
/// bookkeeping, and how many bound pairs it cost.
#[derive(Debug, Clone)]
pub struct RefinementDelta {
    pub split_region: Region,
    pub children: u32,
    pub parent_lower_units: i128,
    pub parent_upper_units: i128,
    pub children_lower_units: i128,
    pub children_upper_units: i128,
    pub lower_units_after: i128,
    pub upper_units_after: i128,
}

enum LeafQueue {
    /// Fresh hypotheses hold at most the root; the bucket queue is built on
    /// the first split so undisturbed hypotheses stay tiny.
    Single(Option<u32>),
    Buckets(MarginQueue),
}

impl LeafQueue {
    fn len(&self) -> usize {
        match self {
            LeafQueue::Single(s) => usize::from(s.is_some()),
            LeafQueue::Buckets(q) => q.len(),
        }
    }
}

/// Anytime evidence bounds of one hypothesis over a quadtree partition of
/// its support.
pub struct HypothesisBounds {
    id: u32,
    pose: PoseRef,
    leaves: Vec<Option<ElementRecord>>,
    free: Vec<u32>,
    live_leaves: usize,
    queue: LeafQueue,
    z_units: i128,
    lower_units: i128,
    upper_units: i128,
    n_refinements: u64,
    bound_pairs: u64,
    m: u32,
    bin: i64,
    unit: f64,
    m_floor_units: i128,
    rho: f64,
    queue_ceiling: f64,
}

impl HypothesisBounds {
    /// Seeds the bounds with a single leaf covering the whole support.
    /// Counts one bound pair.
    pub fn init(
        id: u32,
        img_tables: &SummaryTables,
        prior_tables: &SummaryTables,
        pose: PoseRef,
        z_units: i128,
        params: &BoundParams,
    ) -> Result<Self, BoundsError> {
        if !img_tables.policy().same_lattice(prior_tables.policy())
            || img_tables.m() != prior_tables.m()
        {
            return Err(BoundsError::MismatchedTables);
        }
        let support = pose.support_img;
        if !support.fits_in(img_tables.width(), img_tables.height()) {
            return Err(BoundsError::InvalidHypothesis {
                support,
                width: img_tables.width(),
                height: img_tables.height(),
            });
        }
        if pose.dx > support.x0 as i64 || pose.dy > support.y0 as i64 {
            return Err(BoundsError::InvalidPriorRegion {
                region: support,
                width: prior_tables.width(),
                height: prior_tables.height(),
            });
        }
        let root_pri = pose.region_pri(support);
        if !root_pri.fits_in(prior_tables.width(), prior_tables.height()) {
            return Err(BoundsError::InvalidPriorRegion {
                region: root_pri,
                width: prior_tables.width(),
                height: prior_tables.height(),
            });
        }

        let m = img_tables.m();
        let policy = img_tables.policy();
        let bin = (1i64 << 42) / m as i64;
        let m_floor_units = ((params.m_floor_rel * (1u64 << 42) as f64).round() as i128).max(1);
        let mut this = Self {
            id,
            pose,
            leaves: Vec::new(),
            free: Vec::new(),
            live_leaves: 0,
            queue: LeafQueue::Single(None),
            z_units,
            lower_units: z_units,
            upper_units: z_units,
            n_refinements: 0,
            bound_pairs: 0,
            m,
            bin,
            unit: policy.unit(),
            m_floor_units,
            rho: params.rho,
            queue_ceiling: 2.0 * (1u64 << 42) as f64 * support.area() as f64,
        };
        let root = this.make_element(img_tables, prior_tables, support);
        this.lower_units += root.local_lower_units;
        this.upper_units += root.local_upper_units;
        this.bound_pairs = 1;
        let resolved = root.resolved;
        this.leaves.push(Some(root));
        this.live_leaves = 1;
        if !resolved {
            this.queue = LeafQueue::Single(Some(0));
        }
        Ok(this)
    }

    fn make_element(
        &self,
        img: &SummaryTables,
        pri: &SummaryTables,
        region_img: Region,
    ) -> ElementRecord {
        let region_pri = self.pose.region_pri(region_img);
        let mean_f_units = img.mean_units_unchecked(region_img);
        let mean_h_units = pri.mean_units_unchecked(region_pri);
        let msum_f = img.msum_units_unchecked(region_img);
        let msum_h = pri.msum_units_unchecked(region_pri);
        let local_lower_units = (mean_f_units + mean_h_units).max(0);
        let local_upper_units = local_upper_units(&msum_f, &msum_h, self.bin);
        debug_assert!(local_upper_units >= local_lower_units);
        let margin = local_upper_units - local_lower_units;
        let resolved = region_img.area() == 1 || margin <= self.m_floor_units;
        ElementRecord {
            region_img,
            region_pri,
            mean_f_units,
            mean_h_units,
            msum_f,
            msum_h,
            local_lower_units,
            local_upper_units,
            resolved,
        }
    }

    /// Splits a near-max-margin leaf into quadrants (halves for 1-wide or
    /// 1-tall leaves), updating the totals incrementally. Children that are
    /// 1x1 or whose margin is at most the floor are resolved and not
    /// re-enqueued. Returns `None` once fully refined.
    pub fn refine_once(
        &mut self,
        img: &SummaryTables,
        pri: &SummaryTables,
    ) -> Option<RefinementDelta> {
        let leaf_idx = match &mut self.queue {
            LeafQueue::Single(slot) => slot.take(),
            LeafQueue::Buckets(q) => q.pop_max(),
        }?;
        let parent = self.leaves[leaf_idx as usize].take().expect("queued leaf is live");
        self.free.push(leaf_idx);
        self.live_leaves -= 1;

        let children_regions = split_region(parent.region_img);
        let mut children_lower: i128 = 0;
        let mut children_upper: i128 = 0;
        let n_children = children_regions.len() as u32;
        for region in children_regions {
            let child = self.make_element(img, pri, region);
            children_lower += child.local_lower_units;
            children_upper += child.local_upper_units;
            let enqueue = !child.resolved;
            let margin = child.margin_units();
            let slot = match self.free.pop() {
                Some(s) => {
                    self.leaves[s as usize] = Some(child);
                    s
                }
                None => {
                    self.leaves.push(Some(child));
                    (self.leaves.len() - 1) as u32
                }
            };
            self.live_leaves += 1;
            if enqueue {
                if let LeafQueue::Single(_) = self.queue {
                    self.queue = LeafQueue::Buckets(MarginQueue::new(
                        self.m_floor_units as f64,
                        self.queue_ceiling,
                        self.rho,
                    ));
                }
                match &mut self.queue {
                    LeafQueue::Buckets(q) => q.insert(margin as f64, slot),
                    LeafQueue::Single(_) => unreachable!(),
                }
            }
        }

        // The split refines the partition, so the summed child bounds can
        // only tighten the parent's.
        debug_assert!(children_lower >= parent.local_lower_units);
        debug_assert!(children_upper <= parent.local_upper_units);

        let delta = RefinementDelta {
            split_region: parent.region_img,
            children: n_children,
            parent_lower_units: parent.local_lower_units,
            parent_upper_units: parent.local_upper_units,
            children_lower_units: children_lower,
            children_upper_units: children_upper,
            lower_units_after: self.lower_units - parent.local_lower_units + children_lower,
            upper_units_after: self.upper_units - parent.local_upper_units + children_upper,
        };
        self.lower_units = delta.lower_units_after;
        self.upper_units = delta.upper_units_after;
        self.n_refinements += 1;
        self.bound_pairs += n_children as u64;
        Some(delta)
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn pose(&self) -> &PoseRef {
        &self.pose
    }

    pub fn fully_refined(&self) -> bool {
        self.queue.len() == 0
    }

    pub fn lower_units(&self) -> i128 {
        self.lower_units
    }

    pub fn upper_units(&self) -> i128 {
        self.upper_units
    }

    pub fn margin_units(&self) -> i128 {
        self.upper_units - self.lower_units
    }

    pub fn z_units(&self) -> i128 {
        self.z_units
    }

    pub fn lower_total(&self) -> f64 {
        self.lower_units as f64 * self.unit
    }

    pub fn upper_total(&self) -> f64 {
        self.upper_units as f64 * self.unit
    }

    /// Log-odds per lattice unit.
    pub fn unit(&self) -> f64 {
        self.unit
    }

    pub fn n_refinements(&self) -> u64 {
        self.n_refinements
    }

    pub fn bound_pairs(&self) -> u64 {
        self.bound_pairs
    }

    pub fn live_leaves(&self) -> usize {
        self.live_leaves
    }

    pub fn leaves(&self) -> impl Iterator<Item = &ElementRecord> {
        self.leaves.iter().filter_map(|l| l.as_ref())
    }

    /// Recomputes both totals from the live leaves; must equal the
    /// incrementally maintained values exactly.
    pub fn recomputed_totals_units(&self) -> (i128, i128) {
        let mut lo = self.z_units;
        let mut up = self.z_units;
        for leaf in self.leaves() {
            lo += leaf.local_lower_units;
            up += leaf.local_upper_units;
        }
        (lo, up)
    }

    /// The binary per-leaf shape carried by the lower bound.
    pub fn extract_discrete_shape(&self) -> DiscreteShape {
        let labels = self.leaves().map(|l| (l.region_img, l.label())).collect();
        DiscreteShape { support: self.pose.support_img, labels }
    }

    /// The per-leaf coverage intervals carried by the upper bound.
    pub fn extract_semidiscrete_shape(&self) -> SemidiscreteShape {
        let two_m = 2 * self.m as usize;
        let leaves = self
            .leaves()
            .map(|l| {
                let merged = merge_ascending(&l.msum_f, &l.msum_h);
                let area = l.region_img.area();
                // 1-based entries 2m and 2m+1 of the merged vector.
                let lo = area - merged[two_m];
                let hi = area - merged[two_m - 1];
                (l.region_img, lo as f64, hi as f64)
            })
            .collect();
        SemidiscreteShape { support: self.pose.support_img, leaves }
    }
}

/// Quadrant split with ceil/floor halves; 1-wide or 1-tall regions split in
/// two along their long axis.
fn split_region(r: Region) -> Vec<Region> {
    let mut out = Vec::with_capacity(4);
    let (w1, h1) = (r.w.div_ceil(2), r.h.div_ceil(2));
    let (w2, h2) = (r.w - w1, r.h - h1);
    for (dy, hh) in [(0, h1), (h1, h2)] {
        if hh == 0 {
            continue;
        }
        for (dx, ww) in [(0, w1), (w1, w2)] {
            if ww == 0 {
                continue;
            }
            out.push(Region::new(r.x0 + dx, r.y0 + dy, ww, hh));
        }
    }
    debug_assert!(!out.is_empty() && out.len() <= 4);
    out
}

/// Binary labels per partition element, in image coordinates.
#[derive(Debug, Clone)]
pub struct DiscreteShape {
    pub support: Region,
    pub labels: Vec<(Region, bool)>,
}

impl DiscreteShape {
    /// Full-resolution mask over the support rectangle, row-major.
    pub fn rasterize(&self) -> Vec<bool> {
        let (w, h) = (self.support.w as usize, self.support.h as usize);
        let mut mask = vec![false; w * h];
        for &(r, label) in &self.labels {
            if !label {
                continue;
            }
            for y in r.y0..r.y0 + r.h {
                let row = (y - self.support.y0) as usize * w;
                for x in r.x0..r.x0 + r.w {
                    mask[row + (x - self.support.x0) as usize] = true;
                }
            }
        }
        mask
    }
}

/// Coverage intervals `[lo, hi]` (in pixel-area units) per partition
/// element; the representative coverage is `lo`.
#[derive(Debug, Clone)]
pub struct SemidiscreteShape {
    pub support: Region,
    pub leaves: Vec<(Region, f64, f64)>,
}

impl SemidiscreteShape {
    /// Full-resolution coverage fractions in `[0, 1]` over the support,
    /// using the representative (lower) coverage of each element.
    pub fn rasterize_coverage(&self) -> Vec<f64> {
        let (w, h) = (self.support.w as usize, self.support.h as usize);
        let mut cov = vec![0.0; w * h];
        for &(r, lo, _) in &self.leaves {
            let frac = lo / r.area() as f64;
            for y in r.y0..r.y0 + r.h {
                let row = (y - self.support.y0) as usize * w;
                for x in r.x0..r.x0 + r.w {
                    cov[row + (x - self.support.x0) as usize] = frac;
                }
            }
        }
        cov
    }
}

/// Exact evidence by full pixel scan: `z_h + sum over the support of
/// max(0, delta_f + delta_h)`, in lattice units. Test oracle and naive
/// baseline; never used by the bound path.
pub fn exact_evidence_units(
    img_field: &BernoulliField,
    prior_field: &BernoulliField,
    pose: &PoseRef,
) -> Result<i128, BoundsError> {
    let support = pose.support_img;
    if !support.fits_in(img_field.width(), img_field.height()) {
        return Err(BoundsError::InvalidHypothesis {
            support,
            width: img_field.width(),
            height: img_field.height(),
        });
    }
    if pose.dx > support.x0 as i64 || pose.dy > support.y0 as i64 {
        return Err(BoundsError::InvalidPriorRegion {
            region: support,
            width: prior_field.width(),
            height: prior_field.height(),
        });
    }
    let rp = pose.region_pri(support);
    if !rp.fits_in(prior_field.width(), prior_field.height()) {
        return Err(BoundsError::InvalidPriorRegion {
            region: rp,
            width: prior_field.width(),
            height: prior_field.height(),
        });
    }
    let mut acc: i128 = prior_field.z_region_units(rp.x0, rp.y0, rp.w, rp.h);
    for y in 0..support.h {
        for x in 0..support.w {
            let kf = img_field.k_at(support.x0 + x, support.y0 + y);
            let kh = prior_field.k_at(rp.x0 + x, rp.y0 + y);
            acc += (kf + kh).max(0) as i128;
        }
    }
    Ok(acc)
}

/// [`exact_evidence_units`] in log-odds.
pub fn exact_evidence(
    img_field: &BernoulliField,
    prior_field: &BernoulliField,
    pose: &PoseRef,
) -> Result<f64, BoundsError> {
    Ok(exact_evidence_units(img_field, prior_field, pose)? as f64 * img_field.policy().unit())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ClampPolicy, ProbabilityImage};

    fn field_from_deltas(w: u32, h: u32, deltas: &[f64], delta_max: f64) -> BernoulliField {
        let policy = ClampPolicy::new(delta_max).unwrap();
        let p: Vec<f64> = deltas.iter().map(|&d| 1.0 / (1.0 + (-d).exp())).collect();
        let img = ProbabilityImage::new(w, h, p).unwrap();
        BernoulliField::from_probabilities(&img, policy)
    }

    #[test]
    fn local_lower_examples() {
        assert_eq!(local_lower(3.0, -1.0), (2.0, true));
        assert_eq!(local_lower(-2.0, -3.0), (0.0, false));
        assert_eq!(local_lower(0.0, 0.0), (0.0, false), "tie labels background");
    }

    #[test]
    fn theorem2_hand_cases() {
        // m=1, delta_max=1, area 4; both fields constant +1.
        let a = MSummary { values: vec![0.0, 0.0, 4.0] };
        let up = local_upper(&a, &a, 1, 1.0).unwrap();
        assert_eq!(up, 8.0);
        // +1 against -1: exactly zero.
        let b = MSummary { values: vec![4.0, 4.0, 4.0] };
        let up = local_upper(&a, &b, 1, 1.0).unwrap();
        assert_eq!(up, 0.0);
        // both at -delta_max.
        let up = local_upper(&b, &b, 1, 1.0).unwrap();
        assert_eq!(up, 0.0);
    }

    #[test]
    fn local_upper_rejects_length_mismatch() {
        let a = MSummary { values: vec![0.0, 0.0, 4.0] };
        let c = MSummary { values: vec![0.0, 0.0, 0.0, 0.0, 4.0] };
        assert!(local_upper(&a, &c, 1, 1.0).is_err());
    }

    #[test]
    fn merged_vector_length_and_order() {
        let a = [0u64, 3, 7];
        let b = [1u64, 3, 7];
        let merged = merge_ascending(&a, &b);
        assert_eq!(merged.len(), 6);
        assert!(merged.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(merged.iter().filter(|&&v| v == 3).count(), 2, "duplicates kept");
    }

    #[test]
    fn exact_evidence_toy() {
        // 2x2 image and prior whose per-pixel log-odds sums are
        // {1, -1, 0.5, -2}; the best shape keeps the positive ones.
        let img = field_from_deltas(2, 2, &[2.0, -0.5, 0.25, -1.0], 5.0);
        let pri = field_from_deltas(2, 2, &[-1.0, -0.5, 0.25, -1.0], 5.0);
        let pose =
            PoseRef { support_img: Region::new(0, 0, 2, 2), dx: 0, dy: 0 };
        let z = pri.z_units() as f64 * pri.policy().unit();
        let ev = exact_evidence(&img, &pri, &pose).unwrap();
        assert!((ev - (z + 1.5)).abs() < 1e-9);
    }

    #[test]
    fn init_rejects_out_of_image_support() {
        let img = field_from_deltas(4, 4, &[0.0; 16], 5.0);
        let pri = field_from_deltas(2, 2, &[0.0; 4], 5.0);
        let it = SummaryTables::build(&img, 1).unwrap();
        let pt = SummaryTables::build(&pri, 1).unwrap();
        let pose = PoseRef { support_img: Region::new(3, 3, 2, 2), dx: 3, dy: 3 };
        let err = HypothesisBounds::init(0, &it, &pt, pose, 0, &BoundParams::default());
        assert!(matches!(err, Err(BoundsError::InvalidHypothesis { .. })));
    }

    #[test]
    fn single_pixel_support_is_immediately_refined() {
        let img = field_from_deltas(4, 4, &[0.6; 16], 5.0);
        let pri = field_from_deltas(1, 1, &[0.6], 5.0);
        let it = SummaryTables::build(&img, 4).unwrap();
        let pt = SummaryTables::build(&pri, 4).unwrap();
        let pose = PoseRef { support_img: Region::new(2, 1, 1, 1), dx: 2, dy: 1 };
        let mut b =
            HypothesisBounds::init(7, &it, &pt, pose, 0, &BoundParams::default()).unwrap();
        assert!(b.fully_refined());
        assert_eq!(b.bound_pairs(), 1);
        assert!(b.refine_once(&it, &pt).is_none(), "refining a refined hypothesis is a no-op");
        // one bound pair, slack at most one bin per field
        let slack = 2.0 * 5.0 / 4.0;
        assert!(b.upper_total() - b.lower_total() <= slack + 1e-9);
    }

    #[test]
    fn splitting_uniform_element_preserves_totals() {
        let img = field_from_deltas(8, 8, &[1.3; 64], 5.0);
        let pri = field_from_deltas(8, 8, &[-0.4; 64], 5.0);
        let it = SummaryTables::build(&img, 4).unwrap();
        let pt = SummaryTables::build(&pri, 4).unwrap();
        let pose = PoseRef { support_img: Region::new(0, 0, 8, 8), dx: 0, dy: 0 };
        let mut b =
            HypothesisBounds::init(0, &it, &pt, pose, -10, &BoundParams::default()).unwrap();
        let (lo0, up0) = (b.lower_units(), b.upper_units());
        if let Some(delta) = b.refine_once(&it, &pt) {
            assert_eq!(delta.lower_units_after, lo0);
            assert_eq!(delta.upper_units_after, up0);
        }
    }

    #[test]
    fn refinement_conserves_totals_and_counts_pairs() {
        let deltas: Vec<f64> =
            (0..64).map(|i| ((i * 37 % 64) as f64 / 63.0 - 0.5) * 8.0).collect();
        let img = field_from_deltas(8, 8, &deltas, 5.0);
        let pri = field_from_deltas(8, 8, &deltas, 5.0);
        let it = SummaryTables::build(&img, 2).unwrap();
        let pt = SummaryTables::build(&pri, 2).unwrap();
        let pose = PoseRef { support_img: Region::new(0, 0, 8, 8), dx: 0, dy: 0 };
        let mut b =
            HypothesisBounds::init(0, &it, &pt, pose, 5, &BoundParams::default()).unwrap();
        let mut pairs = 1;
        let (mut lo_before, mut up_before) = (b.lower_units(), b.upper_units());
        while let Some(delta) = b.refine_once(&it, &pt) {
            pairs += delta.children as u64;
            let (lo, up) = b.recomputed_totals_units();
            assert_eq!(lo, b.lower_units());
            assert_eq!(up, b.upper_units());
            // inductive identity: new total = old - parent local + children locals
            assert_eq!(
                delta.lower_units_after,
                lo_before - delta.parent_lower_units + delta.children_lower_units
            );
            assert_eq!(
                delta.upper_units_after,
                up_before - delta.parent_upper_units + delta.children_upper_units
            );
            (lo_before, up_before) = (delta.lower_units_after, delta.upper_units_after);
        }
        assert!(b.fully_refined());
        assert_eq!(b.bound_pairs(), pairs);
    }

    #[test]
    fn degenerate_strips_split_in_two() {
        let r = split_region(Region::new(0, 0, 1, 5));
        assert_eq!(r.len(), 2);
        assert_eq!(r[0], Region::new(0, 0, 1, 3));
        assert_eq!(r[1], Region::new(0, 3, 1, 2));
        let r = split_region(Region::new(2, 2, 5, 1));
        assert_eq!(r.len(), 2);
        assert_eq!(r[0], Region::new(2, 2, 3, 1));
        assert_eq!(r[1], Region::new(5, 2, 2, 1));
        let r = split_region(Region::new(0, 0, 5, 5));
        assert_eq!(r.len(), 4);
        assert_eq!(r[0], Region::new(0, 0, 3, 3));
    }

    #[test]
    fn discrete_shape_all_negative_is_empty() {
        let img = field_from_deltas(4, 4, &[-2.0; 16], 5.0);
        let pri = field_from_deltas(4, 4, &[-1.0; 16], 5.0);
        let it = SummaryTables::build(&img, 1).unwrap();
        let pt = SummaryTables::build(&pri, 1).unwrap();
        let pose = PoseRef { support_img: Region::new(0, 0, 4, 4), dx: 0, dy: 0 };
        let b = HypothesisBounds::init(0, &it, &pt, pose, 0, &BoundParams::default()).unwrap();
        let mask = b.extract_discrete_shape().rasterize();
        assert!(mask.iter().all(|&v| !v));
    }

    #[test]
    fn discrete_shape_positive_leaf_is_foreground() {
        let img = field_from_deltas(2, 2, &[3.0; 4], 5.0);
        let pri = field_from_deltas(2, 2, &[-1.0; 4], 5.0);
        let it = SummaryTables::build(&img, 1).unwrap();
        let pt = SummaryTables::build(&pri, 1).unwrap();
        let pose = PoseRef { support_img: Region::new(0, 0, 2, 2), dx: 0, dy: 0 };
        let b = HypothesisBounds::init(0, &it, &pt, pose, 0, &BoundParams::default()).unwrap();
        assert!(b.extract_discrete_shape().rasterize().iter().all(|&v| v));
    }

    #[test]
    fn semidiscrete_intervals_match_hand_merges() {
        let delta_max = 1.0;
        // both fields at +delta_max: full coverage, pinned.
        let img = field_from_deltas(2, 2, &[1.0; 4], delta_max);
        let it = SummaryTables::build(&img, 1).unwrap();
        let pose = PoseRef { support_img: Region::new(0, 0, 2, 2), dx: 0, dy: 0 };
        let b = HypothesisBounds::init(0, &it, &it, pose, 0, &BoundParams::default()).unwrap();
        let s = b.extract_semidiscrete_shape();
        assert_eq!((s.leaves[0].1, s.leaves[0].2), (4.0, 4.0));

        // both at -delta_max: empty, pinned.
        let img = field_from_deltas(2, 2, &[-1.0; 4], delta_max);
        let it = SummaryTables::build(&img, 1).unwrap();
        let b = HypothesisBounds::init(0, &it, &it, pose, 0, &BoundParams::default()).unwrap();
        let s = b.extract_semidiscrete_shape();
        assert_eq!((s.leaves[0].1, s.leaves[0].2), (0.0, 0.0));

        // +1 against -1: any coverage admissible.
        let fpos = field_from_deltas(2, 2, &[1.0; 4], delta_max);
        let fneg = field_from_deltas(2, 2, &[-1.0; 4], delta_max);
        let it = SummaryTables::build(&fpos, 1).unwrap();
        let pt = SummaryTables::build(&fneg, 1).unwrap();
        let b = HypothesisBounds::init(0, &it, &pt, pose, 0, &BoundParams::default()).unwrap();
        let s = b.extract_semidiscrete_shape();
        assert_eq!((s.leaves[0].1, s.leaves[0].2), (0.0, 4.0));
    }

    #[test]
    fn margin_queue_clamps_and_pops_lifo() {
        let mut q = MarginQueue::new(1.0, 100.0, 1.2);
        q.insert(0.5, 1); // below floor: clamps into bucket 0
        q.insert(1e9, 2); // above ceiling: clamps into the top bucket
        q.insert(50.0, 3);
        assert_eq!(q.len(), 3);
        assert_eq!(q.pop_max(), Some(2));
        assert_eq!(q.pop_max(), Some(3));
        assert_eq!(q.pop_max(), Some(1));
        assert_eq!(q.pop_max(), None);
    }
}
