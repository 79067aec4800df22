//! Experiment driver for the shapebound engine: scenario synthesis,
//! matching runs, metrics, and report emission.

pub mod experiment;
pub mod glyphs;
pub mod metrics;
pub mod report;
pub mod scenario;
