//! Self-contained experiment scenarios.
//!
//! A scenario is a JSON document with explicit seeds, noise parameters,
//! grid ranges and model constants, so every report can be reproduced from
//! the scenario it embeds.

use crate::glyphs::GlyphKind;
use serde::{Deserialize, Serialize};
use shapebound::field::NoiseKind;
use shapebound::foam::Strategy;
use shapebound::hypotheses::TranslationSpec;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub image: ImageSpec,
    pub priors: PriorSource,
    pub grid: GridSpec,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub foam: FoamSpec,
    #[serde(default)]
    pub truth: Option<TruthSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImageSpec {
    /// Synthesize a two-level image from a glyph mask, then add noise.
    Synthetic {
        width: u32,
        height: u32,
        glyph: GlyphKind,
        glyph_width: u32,
        glyph_height: u32,
        /// Top-left corner of the glyph in the image.
        position: [u32; 2],
        fg_p: f64,
        bg_p: f64,
        #[serde(default)]
        noise: Option<NoiseKind>,
    },
    /// Load an externally prepared probability image.
    Pgm { pgm: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorSource {
    /// Rasterize built-in glyphs as sharp 0/1 priors.
    Builtin { builtin: Vec<BuiltinPrior> },
    /// Load a prior bundle manifest produced by `make-prior`.
    Bundle { bundle: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuiltinPrior {
    pub class: String,
    #[serde(flatten)]
    pub glyph: GlyphKind,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub translations: TranslationSpec,
    pub sx: Vec<f64>,
    pub sy: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Number of positive log-odds thresholds; must be a power of two.
    pub m: u32,
    pub delta_max: f64,
    pub m_floor_rel: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { m: 4, delta_max: 5.0, m_floor_rel: 1e-6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoamSpec {
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub strategy: Strategy,
    #[serde(default)]
    pub max_cycles: Option<u64>,
    #[serde(default)]
    pub parallel: Option<usize>,
    #[serde(default)]
    pub record_trace: bool,
}

impl Default for FoamSpec {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            beta: 0.25,
            rho: 1.2,
            strategy: Strategy::PotentialReduction,
            max_cycles: None,
            parallel: None,
            record_trace: false,
        }
    }
}

/// Ground truth for pose metrics: the generating transform and class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthSpec {
    pub class: String,
    pub sx: f64,
    pub sy: f64,
    pub tx: i32,
    pub ty: i32,
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read scenario {}: {e}", path.display()))?;
        let sc: Scenario =
            serde_json::from_str(&text).map_err(|e| format!("scenario parse error: {e}"))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.model.m == 0 || !self.model.m.is_power_of_two() {
            return Err(format!("model.m must be a power of two, got {}", self.model.m));
        }
        if !(self.model.delta_max.is_finite() && self.model.delta_max > 0.0) {
            return Err(format!("model.delta_max must be positive, got {}", self.model.delta_max));
        }
        if self.grid.sx.is_empty() || self.grid.sy.is_empty() {
            return Err("grid scale sets must be nonempty".into());
        }
        if let ImageSpec::Synthetic {
            width,
            height,
            glyph_width,
            glyph_height,
            position,
            fg_p,
            bg_p,
            noise,
            ..
        } = &self.image
        {
            if glyph_width + position[0] > *width || glyph_height + position[1] > *height {
                return Err("glyph does not fit in the image at the given position".into());
            }
            if !(bg_p < fg_p && *bg_p >= 0.0 && *fg_p <= 1.0) {
                return Err(format!("need 0 <= bg_p < fg_p <= 1, got ({bg_p}, {fg_p})"));
            }
            if let Some(kind) = noise {
                shapebound::field::NoiseSpec { kind: *kind, seed: self.seed }
                    .validate()
                    .map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    }
}
