//! Bernoulli-field image model.
//!
//! A Bernoulli field assigns every pixel an independent foreground success
//! rate. Success rates are clamped away from 0 and 1 so that their log-odds
//! stay finite, and the log-odds are snapped to a fixed-point lattice of
//! `delta_max / 2^42` steps. Working on the lattice keeps every downstream
//! bound computation exact: region sums, evidence values and bound totals
//! are integers, so one-sided inequalities never suffer float rounding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Binary log of the number of lattice steps per `delta_max`.
///
/// At 2^42 steps the quantization moves a success rate by less than 3e-13,
/// and region sums over any practical grid still fit comfortably in i128.
const UNIT_SHIFT: u32 = 42;

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("probability at pixel ({x}, {y}) is {value}, outside [0, 1]")]
    InvalidProbability { x: u32, y: u32, value: f64 },
    #[error("grid dimensions {width}x{height} do not match {len} samples")]
    DimensionMismatch { width: u32, height: u32, len: usize },
    #[error("grid dimensions must be positive, got {width}x{height}")]
    EmptyGrid { width: u32, height: u32 },
    #[error("likelihoods are both zero at pixel ({x}, {y})")]
    DegeneratePixel { x: u32, y: u32 },
    #[error("foreground probability {fg_p} must exceed background probability {bg_p}")]
    InvalidForegroundBackground { fg_p: f64, bg_p: f64 },
    #[error("delta_max must be positive and finite, got {0}")]
    InvalidDeltaMax(f64),
    #[error("invalid noise parameter: {0}")]
    InvalidNoise(String),
}

/// Per-pixel foreground success rates in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityImage {
    width: u32,
    height: u32,
    p: Vec<f64>,
}

impl ProbabilityImage {
    pub fn new(width: u32, height: u32, p: Vec<f64>) -> Result<Self, FieldError> {
        if width == 0 || height == 0 {
            return Err(FieldError::EmptyGrid { width, height });
        }
        if p.len() != (width as usize) * (height as usize) {
            return Err(FieldError::DimensionMismatch { width, height, len: p.len() });
        }
        for (i, &v) in p.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(FieldError::InvalidProbability {
                    x: (i % width as usize) as u32,
                    y: (i / width as usize) as u32,
                    value: v,
                });
            }
        }
        Ok(Self { width, height, p })
    }

    pub fn constant(width: u32, height: u32, p: f64) -> Result<Self, FieldError> {
        Self::new(width, height, vec![p; (width as usize) * (height as usize)])
    }

    /// Success rates from per-pixel foreground/background feature likelihoods:
    /// `p = fg / (fg + bg)`. A pixel where both likelihoods vanish carries no
    /// information and is rejected rather than defaulted.
    pub fn from_likelihoods(
        width: u32,
        height: u32,
        fg_lik: &[f64],
        bg_lik: &[f64],
    ) -> Result<Self, FieldError> {
        let n = (width as usize) * (height as usize);
        if fg_lik.len() != n || bg_lik.len() != n {
            return Err(FieldError::DimensionMismatch {
                width,
                height,
                len: fg_lik.len().min(bg_lik.len()),
            });
        }
        let mut p = Vec::with_capacity(n);
        for i in 0..n {
            let (fg, bg) = (fg_lik[i], bg_lik[i]);
            let x = (i % width as usize) as u32;
            let y = (i / width as usize) as u32;
            if !(fg.is_finite() && bg.is_finite()) || fg < 0.0 || bg < 0.0 {
                return Err(FieldError::InvalidProbability { x, y, value: fg.min(bg) });
            }
            if fg + bg == 0.0 {
                return Err(FieldError::DegeneratePixel { x, y });
            }
            p.push(fg / (fg + bg));
        }
        Self::new(width, height, p)
    }

    /// Maps a binary mask to a two-level probability image.
    pub fn from_binary_shape(
        width: u32,
        height: u32,
        mask: &[bool],
        fg_p: f64,
        bg_p: f64,
    ) -> Result<Self, FieldError> {
        if !(fg_p.is_finite() && bg_p.is_finite()) || bg_p < 0.0 || fg_p > 1.0 || fg_p <= bg_p {
            return Err(FieldError::InvalidForegroundBackground { fg_p, bg_p });
        }
        let n = (width as usize) * (height as usize);
        if mask.len() != n {
            return Err(FieldError::DimensionMismatch { width, height, len: mask.len() });
        }
        let p = mask.iter().map(|&m| if m { fg_p } else { bg_p }).collect();
        Self::new(width, height, p)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.p[(y as usize) * (self.width as usize) + x as usize]
    }

    pub fn samples(&self) -> &[f64] {
        &self.p
    }

    /// Applies one of the three noise models. Pure: identical spec and seed
    /// produce identical output.
    pub fn apply_noise(&self, spec: &NoiseSpec) -> Result<Self, FieldError> {
        use rand::{Rng, SeedableRng};
        spec.validate()?;
        let mut p = self.p.clone();
        match spec.kind {
            NoiseKind::Gaussian { sigma } => {
                if sigma > 0.0 {
                    let mut rng = rand::rngs::StdRng::seed_from_u64(spec.seed);
                    let normal = rand_distr::Normal::new(0.0, sigma)
                        .map_err(|e| FieldError::InvalidNoise(e.to_string()))?;
                    for v in &mut p {
                        *v = (*v + rng.sample::<f64, _>(normal)).clamp(0.0, 1.0);
                    }
                }
            }
            NoiseKind::SaltPepper { p: flip_p } => {
                let mut rng = rand::rngs::StdRng::seed_from_u64(spec.seed);
                for v in &mut p {
                    if rng.gen::<f64>() < flip_p {
                        *v = 1.0 - *v;
                    }
                }
            }
            NoiseKind::Structured { ell } => {
                let ell = ell as u32;
                for y in 0..self.height {
                    for x in 0..self.width {
                        let on_row = y > 0 && y % ell == 0;
                        let on_col = x > 0 && x % ell == 0;
                        if on_row || on_col {
                            let i = (y as usize) * (self.width as usize) + x as usize;
                            p[i] = 1.0 - p[i];
                        }
                    }
                }
            }
        }
        Self::new(self.width, self.height, p)
    }
}

/// Noise models for degrading a probability image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    /// Additive zero-mean white Gaussian noise on the success rates,
    /// trimmed back into `[0, 1]`.
    Gaussian { sigma: f64 },
    /// With probability `p` per pixel, the success rate flips to its
    /// complement.
    SaltPepper { p: f64 },
    /// Flips the success rate on every pixel whose row or column index is a
    /// nonzero multiple of `ell` (index 0 is excluded so the border is not
    /// always hit).
    Structured { ell: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), FieldError> {
        match self.kind {
            NoiseKind::Gaussian { sigma } => {
                if !sigma.is_finite() || sigma < 0.0 {
                    return Err(FieldError::InvalidNoise(format!("sigma = {sigma}")));
                }
            }
            NoiseKind::SaltPepper { p } => {
                if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                    return Err(FieldError::InvalidNoise(format!("P = {p}")));
                }
            }
            NoiseKind::Structured { ell } => {
                if ell == 0 {
                    return Err(FieldError::InvalidNoise("ell must be >= 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// Log-odds clamp plus the fixed-point lattice it induces.
///
/// Success rates are clamped to `[p_min, 1 - p_min]` with
/// `p_min = 1 / (1 + e^delta_max)`, so log-odds live in
/// `[-delta_max, +delta_max]`. One lattice unit is `delta_max / 2^42`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampPolicy {
    delta_max: f64,
}

impl ClampPolicy {
    pub fn new(delta_max: f64) -> Result<Self, FieldError> {
        if !delta_max.is_finite() || delta_max <= 0.0 {
            return Err(FieldError::InvalidDeltaMax(delta_max));
        }
        Ok(Self { delta_max })
    }

    pub fn delta_max(&self) -> f64 {
        self.delta_max
    }

    pub fn p_min(&self) -> f64 {
        1.0 / (1.0 + self.delta_max.exp())
    }

    /// One lattice unit in log-odds; exact in f64 (power-of-two scaling).
    pub fn unit(&self) -> f64 {
        self.delta_max * f64::exp2(-(UNIT_SHIFT as f64))
    }

    /// Lattice value of `+delta_max`.
    pub fn max_units(&self) -> i64 {
        1i64 << UNIT_SHIFT
    }

    /// Threshold spacing `delta_max / m` in lattice units. Requires `m` to
    /// be a power of two so the spacing is an exact integer.
    pub(crate) fn bin_units(&self, m: u32) -> i64 {
        debug_assert!(m.is_power_of_two() && (m as u64) <= (1u64 << UNIT_SHIFT));
        (1i64 << UNIT_SHIFT) / m as i64
    }

    pub fn quantize(&self, delta: f64) -> i64 {
        let k = (delta / self.unit()).round();
        let max = self.max_units() as f64;
        k.clamp(-max, max) as i64
    }

    pub fn units_to_delta(&self, k: i64) -> f64 {
        k as f64 * self.unit()
    }

    /// `true` when two policies share the same lattice bit-for-bit.
    pub fn same_lattice(&self, other: &ClampPolicy) -> bool {
        self.delta_max.to_bits() == other.delta_max.to_bits()
    }
}

impl Default for ClampPolicy {
    /// `delta_max = 5`: success rates clamped to about `[0.0067, 0.9933]`.
    fn default() -> Self {
        Self { delta_max: 5.0 }
    }
}

fn logistic(delta: f64) -> f64 {
    1.0 / (1.0 + (-delta).exp())
}

/// `ln(1 + e^x)`, stable across the whole clamp range.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// A probability image after clamping, in log-odds lattice form.
///
/// Stores one lattice value per pixel plus the evidence normalizer
/// `z = sum of ln(1 - p)` over the clamped rates, also on the lattice.
#[derive(Debug, Clone)]
pub struct BernoulliField {
    width: u32,
    height: u32,
    k: Vec<i64>,
    z_units: i128,
    policy: ClampPolicy,
}

impl BernoulliField {
    /// Clamps each success rate, takes log-odds and snaps to the lattice.
    pub fn from_probabilities(img: &ProbabilityImage, policy: ClampPolicy) -> Self {
        let p_min = policy.p_min();
        let p_max = 1.0 - p_min;
        let mut k = Vec::with_capacity(img.p.len());
        let mut z_units: i128 = 0;
        for &p in &img.p {
            let pc = p.clamp(p_min, p_max);
            let ku = policy.quantize((pc / (1.0 - pc)).ln());
            z_units += z_pixel_units(ku, &policy) as i128;
            k.push(ku);
        }
        Self { width: img.width, height: img.height, k, z_units, policy }
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

    /// Log-odds at a pixel.
    pub fn delta(&self, x: u32, y: u32) -> f64 {
        self.policy.units_to_delta(self.k_at(x, y))
    }

    /// Log-odds at a pixel, in lattice units.
    pub fn k_at(&self, x: u32, y: u32) -> i64 {
        self.k[(y as usize) * (self.width as usize) + x as usize]
    }

    pub fn units(&self) -> &[i64] {
        &self.k
    }

    /// Clamped success rate recovered from the stored log-odds.
    pub fn probability(&self, x: u32, y: u32) -> f64 {
        logistic(self.delta(x, y))
    }

    /// `sum over pixels of ln(1 - p_clamped)`.
    pub fn z_term(&self) -> f64 {
        self.z_units as f64 * self.policy.unit()
    }

    pub fn z_units(&self) -> i128 {
        self.z_units
    }

    /// Normalizer restricted to a rectangle, in lattice units. Recomputed
    /// from the per-pixel log-odds with the same quantization used at
    /// construction, so restrictions add up exactly.
    pub fn z_region_units(&self, x0: u32, y0: u32, w: u32, h: u32) -> i128 {
        debug_assert!(x0 + w <= self.width && y0 + h <= self.height);
        let mut z: i128 = 0;
        for y in y0..y0 + h {
            let row = (y as usize) * (self.width as usize);
            for x in x0..x0 + w {
                z += z_pixel_units(self.k[row + x as usize], &self.policy) as i128;
            }
        }
        z
    }
}

/// Per-pixel normalizer `ln(1 - logistic(delta))` on the lattice.
fn z_pixel_units(k: i64, policy: &ClampPolicy) -> i64 {
    let delta = policy.units_to_delta(k);
    let z = -softplus(delta);
    (z / policy.unit()).round() as i64
}
