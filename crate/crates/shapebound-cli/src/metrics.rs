//! Pose metrics, solution filtering and confusion matrices over solution
//! sets.

use serde::{Deserialize, Serialize};
use shapebound::hypotheses::ScaleTranslate;

/// Pose accuracy and cost summary of one run.
///
/// `mu_t` is the norm of the mean translation error (bias), `sigma_t` the
/// root mean squared translation error; `mu_s`/`sigma_s` are the analogous
/// scale quantities in percent. `tau` is the average number of bound pairs
/// evaluated per hypothesis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub mu_t: f64,
    pub sigma_t: f64,
    pub mu_s: f64,
    pub sigma_s: f64,
    pub tau: f64,
    pub solution_count: usize,
}

#[derive(Debug, thiserror::Error)]
#[error("cannot compute pose metrics of an empty solution set")]
pub struct EmptyMetrics;

/// Translation bias/RMS (pixels) and scaling bias/RMS (percent) of a
/// solution set against the true transform.
pub fn pose_metrics(
    solutions: &[ScaleTranslate],
    truth: &ScaleTranslate,
    tau: f64,
) -> Result<MetricsSummary, EmptyMetrics> {
    if solutions.is_empty() {
        return Err(EmptyMetrics);
    }
    let n = solutions.len() as f64;
    let (mut sum_dx, mut sum_dy, mut sum_t2) = (0.0, 0.0, 0.0);
    let (mut sum_sx, mut sum_sy, mut sum_s2) = (0.0, 0.0, 0.0);
    for s in solutions {
        let (dx, dy) = ((s.tx - truth.tx) as f64, (s.ty - truth.ty) as f64);
        sum_dx += dx;
        sum_dy += dy;
        sum_t2 += dx * dx + dy * dy;
        let (ex, ey) = (s.sx - 1.0, s.sy - 1.0);
        sum_sx += ex;
        sum_sy += ey;
        sum_s2 += ex * ex + ey * ey;
    }
    Ok(MetricsSummary {
        mu_t: ((sum_dx / n).powi(2) + (sum_dy / n).powi(2)).sqrt(),
        sigma_t: (sum_t2 / n).sqrt(),
        mu_s: 100.0 * ((sum_sx / n).powi(2) + (sum_sy / n).powi(2)).sqrt(),
        sigma_s: 100.0 * (sum_s2 / n).sqrt(),
        tau,
        solution_count: solutions.len(),
    })
}

/// A solution in report form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionDigest {
    pub hypothesis_id: u32,
    pub class: String,
    pub transform: ScaleTranslate,
    pub lower: f64,
    pub upper: f64,
    pub cycles: u64,
}

/// Keeps the solutions whose upper bound reaches
/// `gamma_beta = max_lower + beta * (max_upper - max_lower)`.
/// `beta = 0` keeps everything; `beta = 1` keeps only the max-upper
/// solutions (and ties).
pub fn solution_filter(solutions: &[SolutionDigest], beta: f64) -> Vec<SolutionDigest> {
    if solutions.is_empty() {
        return Vec::new();
    }
    let max_lower = solutions.iter().map(|s| s.lower).fold(f64::NEG_INFINITY, f64::max);
    let max_upper = solutions.iter().map(|s| s.upper).fold(f64::NEG_INFINITY, f64::max);
    let gamma_beta = max_lower + beta * (max_upper - max_lower);
    solutions.iter().filter(|s| s.upper >= gamma_beta).cloned().collect()
}

/// Class-by-class solution fractions pooled over a set of labeled runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub beta: f64,
    pub classes: Vec<String>,
    /// `fractions[i][j]`: share of the solutions of true-class-`i` images
    /// that are of class `j`. Rows with no solutions are all zero.
    pub fractions: Vec<Vec<f64>>,
    /// Correct-class solutions over all solutions.
    pub p_total: f64,
}

/// Builds the confusion matrix at a given `beta` from per-image solution
/// sets. Raw solution counts are pooled, matching the definition of the
/// total performance (correct solutions / total solutions).
pub fn confusion(
    runs: &[(String, Vec<SolutionDigest>)],
    classes: &[String],
    beta: f64,
) -> ConfusionMatrix {
    let idx = |name: &str| classes.iter().position(|c| c == name);
    let k = classes.len();
    let mut counts = vec![vec![0u64; k]; k];
    let (mut correct, mut total) = (0u64, 0u64);
    for (true_class, solutions) in runs {
        let Some(i) = idx(true_class) else { continue };
        for s in solution_filter(solutions, beta) {
            let Some(j) = idx(&s.class) else { continue };
            counts[i][j] += 1;
            total += 1;
            if i == j {
                correct += 1;
            }
        }
    }
    let fractions = counts
        .iter()
        .map(|row| {
            let sum: u64 = row.iter().sum();
            row.iter()
                .map(|&c| if sum > 0 { c as f64 / sum as f64 } else { 0.0 })
                .collect()
        })
        .collect();
    ConfusionMatrix {
        beta,
        classes: classes.to_vec(),
        fractions,
        p_total: if total > 0 { correct as f64 / total as f64 } else { 0.0 },
    }
}
