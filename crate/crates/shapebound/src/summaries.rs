//! O(1) region summaries of a Bernoulli field.
//!
//! Two kinds of summaries drive the evidence bounds: the *mean-summary* of a
//! rectangle is the sum of its log-odds, and the *m-summary* is the vector of
//! `2m+1` counts of pixels at or below equispaced log-odds thresholds
//! `t_j = -delta_max + (j-1) * delta_max / m` (so `t_1 = -delta_max`,
//! `t_{m+1} = 0`, `t_{2m+1} = +delta_max`; thresholds are inclusive).
//! Both are answered in O(1) from summed-area tables.
//!
//! The module also provides exact per-region LCDF oracles (sorted log-odds
//! multisets) used by the tests to verify that the summary-based bounds
//! dominate the exact quantities they approximate.

use crate::field::{BernoulliField, ClampPolicy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SummaryError {
    #[error("region {region:?} exceeds the {width}x{height} grid")]
    RegionOutOfBounds { region: Region, width: u32, height: u32 },
    #[error("m must be a power of two in 1..=65536, got {0}")]
    InvalidM(u32),
    #[error("argument {name} = {value} is outside [0, {max}]")]
    ArgumentRange { name: &'static str, value: f64, max: f64 },
    #[error("summaries have mismatched lengths {0} and {1}")]
    LengthMismatch(usize, usize),
}

/// An axis-aligned rectangle of pixels: inclusive top-left, extents >= 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub x0: u32,
    pub y0: u32,
    pub w: u32,
    pub h: u32,
}

impl Region {
    pub fn new(x0: u32, y0: u32, w: u32, h: u32) -> Self {
        debug_assert!(w >= 1 && h >= 1);
        Self { x0, y0, w, h }
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.w >= 1
            && self.h >= 1
            && (self.x0 as u64 + self.w as u64) <= width as u64
            && (self.y0 as u64 + self.h as u64) <= height as u64
    }

    /// Shifts the rectangle by an integer offset. Caller guarantees the
    /// result stays in the target grid.
    pub fn translate(&self, dx: i64, dy: i64) -> Self {
        Self {
            x0: (self.x0 as i64 + dx) as u32,
            y0: (self.y0 as i64 + dy) as u32,
            w: self.w,
            h: self.h,
        }
    }
}

/// The `2m+1` threshold counts of a region, as real pixel areas.
#[derive(Debug, Clone, PartialEq)]
pub struct MSummary {
    pub values: Vec<f64>,
}

impl MSummary {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Summed-area tables answering mean- and m-summaries of any rectangle in
/// O(1). Immutable after construction; shares freely across threads.
#[derive(Debug, Clone)]
pub struct SummaryTables {
    m: u32,
    width: u32,
    height: u32,
    policy: ClampPolicy,
    /// Thresholds in lattice units, ascending, length 2m+1.
    thresholds: Vec<i64>,
    /// Cumulative sums of lattice log-odds, (w+1)x(h+1), zero top row/left column.
    mean_sat: Vec<i128>,
    /// One cumulative count table per threshold.
    count_sats: Vec<Vec<u32>>,
}

impl SummaryTables {
    /// Builds the tables for a field. `m` must be a power of two so that the
    /// threshold spacing `delta_max / m` is exact on the log-odds lattice.
    pub fn build(field: &BernoulliField, m: u32) -> Result<Self, SummaryError> {
        if m == 0 || !m.is_power_of_two() || m > 1 << 16 {
            return Err(SummaryError::InvalidM(m));
        }
        let policy = *field.policy();
        let bin = policy.bin_units(m);
        let thresholds: Vec<i64> = (0..2 * m as i64 + 1).map(|j| (j - m as i64) * bin).collect();

        let (w, h) = (field.width() as usize, field.height() as usize);
        let stride = w + 1;
        let mut mean_sat = vec![0i128; stride * (h + 1)];
        let mut count_sats = vec![vec![0u32; stride * (h + 1)]; thresholds.len()];
        let k = field.units();
        for y in 0..h {
            let mut row_sum: i128 = 0;
            let mut row_counts = vec![0u32; thresholds.len()];
            for x in 0..w {
                let ku = k[y * w + x];
                row_sum += ku as i128;
                mean_sat[(y + 1) * stride + (x + 1)] = mean_sat[y * stride + (x + 1)] + row_sum;
                for (j, &t) in thresholds.iter().enumerate() {
                    if ku <= t {
                        row_counts[j] += 1;
                    }
                    count_sats[j][(y + 1) * stride + (x + 1)] =
                        count_sats[j][y * stride + (x + 1)] + row_counts[j];
                }
            }
        }

        let tables = Self {
            m,
            width: field.width(),
            height: field.height(),
            policy,
            thresholds,
            mean_sat,
            count_sats,
        };
        // Cross-check against a direct accumulation over the whole grid.
        let direct: i128 = k.iter().map(|&v| v as i128).sum();
        assert_eq!(
            tables.mean_units(Region::new(0, 0, field.width(), field.height())),
            direct,
            "summed-area table disagrees with direct accumulation"
        );
        Ok(tables)
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn policy(&self) -> &ClampPolicy {
        &self.policy
    }

    pub fn thresholds_units(&self) -> &[i64] {
        &self.thresholds
    }

    fn check(&self, r: Region) -> Result<(), SummaryError> {
        if r.fits_in(self.width, self.height) {
            Ok(())
        } else {
            Err(SummaryError::RegionOutOfBounds {
                region: r,
                width: self.width,
                height: self.height,
            })
        }
    }

    #[inline]
    fn sat_query_i128(sat: &[i128], stride: usize, r: Region) -> i128 {
        let (x0, y0) = (r.x0 as usize, r.y0 as usize);
        let (x1, y1) = (x0 + r.w as usize, y0 + r.h as usize);
        sat[y1 * stride + x1] + sat[y0 * stride + x0] - sat[y0 * stride + x1] - sat[y1 * stride + x0]
    }

    #[inline]
    fn sat_query_u32(sat: &[u32], stride: usize, r: Region) -> u64 {
        let (x0, y0) = (r.x0 as usize, r.y0 as usize);
        let (x1, y1) = (x0 + r.w as usize, y0 + r.h as usize);
        sat[y1 * stride + x1] as u64 + sat[y0 * stride + x0] as u64
            - sat[y0 * stride + x1] as u64
            - sat[y1 * stride + x0] as u64
    }

    /// Sum of lattice log-odds over the region. O(1).
    pub(crate) fn mean_units_unchecked(&self, r: Region) -> i128 {
        Self::sat_query_i128(&self.mean_sat, self.width as usize + 1, r)
    }

    pub fn mean_units(&self, r: Region) -> i128 {
        self.check(r).expect("region out of bounds");
        self.mean_units_unchecked(r)
    }

    /// Sum of log-odds over the region (the region's mean-summary). O(1).
    pub fn mean_summary(&self, r: Region) -> Result<f64, SummaryError> {
        self.check(r)?;
        Ok(self.mean_units_unchecked(r) as f64 * self.policy.unit())
    }

    /// Threshold counts over the region, one per threshold. O(m).
    pub(crate) fn msum_units_unchecked(&self, r: Region) -> Vec<u64> {
        let stride = self.width as usize + 1;
        let counts: Vec<u64> =
            self.count_sats.iter().map(|sat| Self::sat_query_u32(sat, stride, r)).collect();
        debug_assert!(counts.windows(2).all(|w| w[0] <= w[1]));
        debug_assert_eq!(*counts.last().unwrap(), r.area());
        counts
    }

    /// The region's m-summary: `values[j] = |{x in r : delta(x) <= t_j}|`.
    pub fn m_summary(&self, r: Region) -> Result<MSummary, SummaryError> {
        self.check(r)?;
        let values = self.msum_units_unchecked(r).into_iter().map(|c| c as f64).collect();
        Ok(MSummary { values })
    }
}

/// Exact sorted log-odds multiset of a region; the oracle the summaries
/// compress. `crossing_area` is the number of strictly negative values.
#[derive(Debug, Clone)]
pub struct Lcdf {
    sorted_units: Vec<i64>,
    unit: f64,
}

impl Lcdf {
    /// Full-scan construction; O(area log area).
    pub fn exact(field: &BernoulliField, r: Region) -> Result<Self, SummaryError> {
        if !r.fits_in(field.width(), field.height()) {
            return Err(SummaryError::RegionOutOfBounds {
                region: r,
                width: field.width(),
                height: field.height(),
            });
        }
        let mut sorted_units = Vec::with_capacity(r.area() as usize);
        for y in r.y0..r.y0 + r.h {
            for x in r.x0..r.x0 + r.w {
                sorted_units.push(field.k_at(x, y));
            }
        }
        sorted_units.sort_unstable();
        Ok(Self { sorted_units, unit: field.policy().unit() })
    }

    /// Builds an oracle directly from log-odds values (test convenience).
    pub fn from_deltas(deltas: &[f64], policy: &ClampPolicy) -> Self {
        let mut sorted_units: Vec<i64> = deltas.iter().map(|&d| policy.quantize(d)).collect();
        sorted_units.sort_unstable();
        Self { sorted_units, unit: policy.unit() }
    }

    pub fn area(&self) -> u64 {
        self.sorted_units.len() as u64
    }

    pub fn sorted_deltas(&self) -> Vec<f64> {
        self.sorted_units.iter().map(|&k| k as f64 * self.unit).collect()
    }

    /// Area where the log-odds are strictly negative.
    pub fn crossing_area(&self) -> u64 {
        self.sorted_units.partition_point(|&k| k < 0) as u64
    }

    /// Best achievable integral of `delta * S` over shapes of mass `s`: the
    /// sum of the `floor(s)` largest values plus a linear fraction of the
    /// next one.
    pub fn top_mass_integral(&self, s: f64) -> Result<f64, SummaryError> {
        let area = self.area() as f64;
        if !s.is_finite() || s < 0.0 || s > area {
            return Err(SummaryError::ArgumentRange { name: "s", value: s, max: area });
        }
        let whole = (s.floor() as u64).min(self.area()) as usize;
        let n = self.sorted_units.len();
        let sum_units: i128 = self.sorted_units[n - whole..].iter().map(|&k| k as i128).sum();
        let mut out = sum_units as f64 * self.unit;
        let frac = s - whole as f64;
        if frac > 0.0 && whole < n {
            out += frac * (self.sorted_units[n - whole - 1] as f64 * self.unit);
        }
        Ok(out)
    }
}

/// Integrates, over `[alpha, area]`, the piecewise-constant majorant of the
/// inverse LCDF implied by an m-summary. For every field consistent with the
/// summary this dominates `top_mass_integral(area - alpha)`.
///
/// The majorant takes the value `t_j = (delta_max/m) * (j - 1 - m)` (1-based
/// `j`) on the count interval `(values[j-1], values[j]]`: mass between two
/// consecutive counts can sit no higher than the first threshold whose count
/// reaches it.
pub fn integrate_inverse_upper(
    ms: &MSummary,
    alpha: f64,
    m: u32,
    delta_max: f64,
    area: f64,
) -> Result<f64, SummaryError> {
    if !alpha.is_finite() || alpha < 0.0 || alpha > area {
        return Err(SummaryError::ArgumentRange { name: "alpha", value: alpha, max: area });
    }
    let n = ms.values.len();
    if n != 2 * m as usize + 1 {
        return Err(SummaryError::LengthMismatch(n, 2 * m as usize + 1));
    }

    let integral = alpha.fract() == 0.0
        && area.fract() == 0.0
        && ms.values.iter().all(|v| v.fract() == 0.0 && *v >= 0.0);
    if integral {
        // Exact integer path on the lattice: one threshold step is
        // `delta_max / m = bin` units.
        let policy = ClampPolicy::new(delta_max).map_err(|_| SummaryError::ArgumentRange {
            name: "delta_max",
            value: delta_max,
            max: f64::INFINITY,
        })?;
        let bin = policy.bin_units(m) as i128;
        let mut total: i128 = 0;
        let mut lo = alpha as i128;
        let area_i = area as i128;
        for (j, &c) in ms.values.iter().enumerate() {
            let hi = (c as i128).min(area_i);
            if hi > lo {
                let t_units = (j as i128 - m as i128) * bin;
                total += t_units * (hi - lo);
                lo = hi;
            }
        }
        // Mass above the last count (only possible for truncated summaries)
        // is bounded by the top threshold.
        if area_i > lo {
            total += (m as i128) * bin * (area_i - lo);
        }
        Ok(total as f64 * policy.unit())
    } else {
        let step = delta_max / m as f64;
        let mut total = 0.0;
        let mut lo = alpha;
        for (j, &c) in ms.values.iter().enumerate() {
            let hi = c.min(area);
            if hi > lo {
                total += (j as f64 - m as f64) * step * (hi - lo);
                lo = hi;
            }
        }
        if area > lo {
            total += delta_max * (area - lo);
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ProbabilityImage;

    fn constant_field(w: u32, h: u32, delta: f64, delta_max: f64) -> BernoulliField {
        let policy = ClampPolicy::new(delta_max).unwrap();
        let p = 1.0 / (1.0 + (-delta).exp());
        let img = ProbabilityImage::constant(w, h, p).unwrap();
        BernoulliField::from_probabilities(&img, policy)
    }

    #[test]
    fn constant_zero_field_counts() {
        let f = constant_field(4, 4, 0.0, 5.0);
        let tables = SummaryTables::build(&f, 1).unwrap();
        let ms = tables.m_summary(Region::new(0, 0, 4, 4)).unwrap();
        assert_eq!(ms.values, vec![0.0, 16.0, 16.0]);
    }

    #[test]
    fn constant_max_field_counts() {
        let f = constant_field(4, 4, 5.0, 5.0);
        let tables = SummaryTables::build(&f, 1).unwrap();
        let ms = tables.m_summary(Region::new(0, 0, 4, 4)).unwrap();
        assert_eq!(ms.values, vec![0.0, 0.0, 16.0]);
        let ms2 = tables.m_summary(Region::new(1, 1, 2, 2)).unwrap();
        assert_eq!(ms2.values, vec![0.0, 0.0, 4.0]);
    }

    #[test]
    fn mean_summary_examples() {
        let f = constant_field(3, 2, -1.25, 5.0);
        let tables = SummaryTables::build(&f, 4).unwrap();
        let full = tables.mean_summary(Region::new(0, 0, 3, 2)).unwrap();
        assert!((full - (-1.25 * 6.0)).abs() < 1e-9);
        let px = tables.mean_summary(Region::new(2, 1, 1, 1)).unwrap();
        assert!((px - -1.25).abs() < 1e-12);
    }

    #[test]
    fn region_out_of_bounds() {
        let f = constant_field(4, 4, 0.0, 5.0);
        let tables = SummaryTables::build(&f, 1).unwrap();
        assert!(matches!(
            tables.m_summary(Region::new(2, 2, 3, 3)),
            Err(SummaryError::RegionOutOfBounds { .. })
        ));
    }

    #[test]
    fn lcdf_examples() {
        let policy = ClampPolicy::new(5.0).unwrap();
        let lcdf = Lcdf::from_deltas(&[-1.0, -1.0, -1.0], &policy);
        assert_eq!(lcdf.crossing_area(), 3);
        let lcdf = Lcdf::from_deltas(&[2.0, -1.0, 0.0], &policy);
        let sorted = lcdf.sorted_deltas();
        assert!((sorted[0] + 1.0).abs() < 1e-12);
        assert!(sorted[1].abs() < 1e-12);
        assert!((sorted[2] - 2.0).abs() < 1e-12);
        assert_eq!(lcdf.crossing_area(), 1);
        assert_eq!(lcdf.crossing_area() + 2, lcdf.area());
    }

    #[test]
    fn top_mass_examples() {
        let policy = ClampPolicy::new(5.0).unwrap();
        let lcdf = Lcdf::from_deltas(&[-1.0, 0.0, 2.0], &policy);
        assert!((lcdf.top_mass_integral(1.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((lcdf.top_mass_integral(3.0).unwrap() - 1.0).abs() < 1e-12);
        // fractional mass interpolates into the next-largest value
        assert!((lcdf.top_mass_integral(1.5).unwrap() - 2.0).abs() < 1e-12);
        assert!(lcdf.top_mass_integral(3.5).is_err());
    }

    #[test]
    fn integrate_inverse_upper_tight_on_uniform_max() {
        let f = constant_field(2, 2, 5.0, 5.0);
        let tables = SummaryTables::build(&f, 1).unwrap();
        let ms = tables.m_summary(Region::new(0, 0, 2, 2)).unwrap();
        assert_eq!(ms.values, vec![0.0, 0.0, 4.0]);
        let v = integrate_inverse_upper(&ms, 0.0, 1, 5.0, 4.0).unwrap();
        assert!((v - 20.0).abs() < 1e-9, "4 * delta_max, got {v}");
        // empty integration range
        let z = integrate_inverse_upper(&ms, 4.0, 1, 5.0, 4.0).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn lemma_part4_top_mass_at_crossing_is_positive_part_sum() {
        let policy = ClampPolicy::new(5.0).unwrap();
        let deltas = [-3.0, -0.5, 0.0, 0.25, 1.0, 4.0, -2.0, 0.75];
        let lcdf = Lcdf::from_deltas(&deltas, &policy);
        let s = (lcdf.area() - lcdf.crossing_area()) as f64;
        let positive_part: f64 = lcdf.sorted_deltas().iter().map(|d| d.max(0.0)).sum();
        assert_eq!(lcdf.top_mass_integral(s).unwrap(), positive_part);
    }
}
