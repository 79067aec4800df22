//! Hypothesize-and-bound matching of 2D shapes in Bernoulli-field images.
//!
//! The engine jointly estimates the class, pose (axis scaling plus integer
//! translation) and a denoised segmentation of a shape in a noisy image. It
//! never scores a pose by scanning pixels unless it has to: each hypothesis
//! carries cheap lower/upper bounds on a log-evidence functional, computed
//! from O(1) region summaries, and a focus-of-attention scheduler spends
//! refinement cycles where they are expected to shrink the remaining
//! workload fastest. Hypotheses are discarded only when provably suboptimal,
//! so the surviving set always contains every evidence maximizer.
//!
//! Module map:
//! - [`field`]: the Bernoulli-field image model (clamped log-odds, noise).
//! - [`summaries`]: summed-area tables for O(1) mean- and m-summaries,
//!   plus exact LCDF oracles used to verify the bounds.
//! - [`bounds`]: per-hypothesis evidence bounds, quadtree refinement with
//!   an untidy margin queue, and shape extraction.
//! - [`foam`]: the scheduler that allocates refinement cycles across
//!   hypotheses until one is proved optimal or the survivors are proved
//!   indistinguishable.
//! - [`hypotheses`]: priors, transforms, hypothesis enumeration and prior
//!   learning from example shapes.
//! - [`pgm`]: binary PGM serialization for probability images and masks.
//!
//! All evidence arithmetic is carried out on a fixed-point log-odds lattice
//! (see [`field::ClampPolicy`]), which makes every bound comparison exact:
//! the sandwich `lower <= evidence <= upper` and the monotonicity of bounds
//! under refinement hold as integer inequalities, not merely up to float
//! rounding.

pub mod bounds;
pub mod field;
pub mod foam;
pub mod hypotheses;
pub mod pgm;
pub mod summaries;

pub use bounds::{BoundParams, HypothesisBounds, RefinementDelta};
pub use field::{BernoulliField, ClampPolicy, NoiseKind, NoiseSpec, ProbabilityImage};
pub use foam::{FoamConfig, FoamResult, RunStatus, Strategy};
pub use hypotheses::{
    Hypothesis, HypothesisGrid, PriorClass, PriorTableSet, ScaleTranslate, TransformedPrior,
};
pub use summaries::{Lcdf, MSummary, Region, SummaryTables};
