//! Run reports and prior bundles on disk.

use crate::metrics::{ConfusionMatrix, MetricsSummary, SolutionDigest};
use crate::scenario::Scenario;
use serde::{Deserialize, Serialize};
use shapebound::field::ProbabilityImage;
use shapebound::foam::RunStatus;
use shapebound::hypotheses::PriorClass;
use shapebound::pgm;
use shapebound::summaries::Region;
use std::path::{Path, PathBuf};

/// Percentages of hypotheses by refinement-cycle count, mirroring the
/// usual cost histogram: most hypotheses should fall in the first bucket.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CycleHistogram {
    /// Bucket upper edges: 0-1, 2-9, 10-99, 100-999, 1000+.
    pub percent_0_to_1: f64,
    pub percent_2_to_9: f64,
    pub percent_10_to_99: f64,
    pub percent_100_to_999: f64,
    pub percent_1000_plus: f64,
}

impl CycleHistogram {
    pub fn from_cycles(cycles: &[u64]) -> Self {
        let n = cycles.len().max(1) as f64;
        let pct = |lo: u64, hi: u64| {
            100.0 * cycles.iter().filter(|&&c| c >= lo && c <= hi).count() as f64 / n
        };
        Self {
            percent_0_to_1: pct(0, 1),
            percent_2_to_9: pct(2, 9),
            percent_10_to_99: pct(10, 99),
            percent_100_to_999: pct(100, 999),
            percent_1000_plus: pct(1000, u64::MAX),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Artifacts {
    pub image_pgm: Option<PathBuf>,
    pub discrete_shape_pgm: Option<PathBuf>,
    pub semidiscrete_shape_pgm: Option<PathBuf>,
    pub trace_jsonl: Option<PathBuf>,
}

/// The self-contained result of one `match` run: re-runnable from the
/// embedded scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub status: RunStatus,
    pub gamma: f64,
    pub hypothesis_count: usize,
    pub solutions: Vec<SolutionDigest>,
    pub metrics: Option<MetricsSummary>,
    pub true_translation_in_solutions: Option<bool>,
    pub tau: f64,
    pub total_bound_pairs: u64,
    pub refine_cycles: u64,
    pub cycle_histogram: CycleHistogram,
    pub confusion: Option<Vec<ConfusionMatrix>>,
    pub artifacts: Artifacts,
}

impl RunReport {
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self).unwrap())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read report {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("report parse error: {e}"))
    }
}

/// Manifest of a prior bundle: one 16-bit PGM per class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleManifest {
    pub delta_max: f64,
    pub provenance: String,
    pub classes: Vec<BundleClass>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleClass {
    pub id: String,
    pub pgm: String,
    pub support: Region,
}

pub fn save_bundle(
    dir: &Path,
    classes: &[PriorClass],
    delta_max: f64,
    provenance: &str,
) -> Result<PathBuf, String> {
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let mut manifest =
        BundleManifest { delta_max, provenance: provenance.into(), classes: Vec::new() };
    for (i, pc) in classes.iter().enumerate() {
        let file = format!("prior_{i:03}_{}.pgm", pc.id);
        let sidecar = pgm::Sidecar { delta_max, provenance: provenance.into() };
        pgm::write_probability_image(&dir.join(&file), &pc.prior, &sidecar)
            .map_err(|e| e.to_string())?;
        manifest.classes.push(BundleClass { id: pc.id.clone(), pgm: file, support: pc.support });
    }
    let manifest_path = dir.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).unwrap())
        .map_err(|e| e.to_string())?;
    Ok(manifest_path)
}

pub fn load_bundle(manifest_path: &Path) -> Result<(Vec<PriorClass>, f64), String> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| format!("cannot read bundle manifest {}: {e}", manifest_path.display()))?;
    let manifest: BundleManifest =
        serde_json::from_str(&text).map_err(|e| format!("manifest parse error: {e}"))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut classes = Vec::new();
    for entry in &manifest.classes {
        let (prior, _) = pgm::read_probability_image(&dir.join(&entry.pgm))
            .map_err(|e| format!("cannot read prior {}: {e}", entry.pgm))?;
        let _ = ProbabilityImage::new(prior.width(), prior.height(), prior.samples().to_vec())
            .map_err(|e| e.to_string())?;
        classes.push(PriorClass { id: entry.id.clone(), prior, support: entry.support });
    }
    Ok((classes, manifest.delta_max))
}

/// Writes a confusion matrix as CSV: a header row of predicted classes,
/// then one row per true class, and a final `p_total` line.
pub fn confusion_csv(matrix: &ConfusionMatrix) -> String {
    let mut out = String::from("true_class");
    for c in &matrix.classes {
        out.push_str(&format!(",{c}"));
    }
    out.push('\n');
    for (i, row) in matrix.fractions.iter().enumerate() {
        out.push_str(&matrix.classes[i]);
        for v in row {
            out.push_str(&format!(",{v:.6}"));
        }
        out.push('\n');
    }
    out.push_str(&format!("p_total,{:.6}\n", matrix.p_total));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_buckets() {
        let cycles = vec![0, 1, 1, 3, 15, 150, 2000, 0];
        let h = CycleHistogram::from_cycles(&cycles);
        assert!((h.percent_0_to_1 - 50.0).abs() < 1e-9);
        assert!((h.percent_2_to_9 - 12.5).abs() < 1e-9);
        assert!((h.percent_10_to_99 - 12.5).abs() < 1e-9);
        assert!((h.percent_100_to_999 - 12.5).abs() < 1e-9);
        assert!((h.percent_1000_plus - 12.5).abs() < 1e-9);
    }

    #[test]
    fn bundle_round_trip() {
        let dir = std::env::temp_dir().join("shapebound_bundle_test");
        let _ = std::fs::remove_dir_all(&dir);
        let img = ProbabilityImage::new(4, 4, (0..16).map(|i| i as f64 / 15.0).collect()).unwrap();
        let pc = PriorClass { id: "x".into(), prior: img, support: Region::new(1, 1, 2, 2) };
        let manifest = save_bundle(&dir, &[pc], 5.0, "test").unwrap();
        let (classes, delta_max) = load_bundle(&manifest).unwrap();
        assert_eq!(delta_max, 5.0);
        assert_eq!(classes.len(), 1);
        assert_eq!(classes[0].support, Region::new(1, 1, 2, 2));
        // 16-bit quantization round trip
        assert!((classes[0].prior.get(3, 3) - 1.0).abs() < 1e-4);
    }
}
