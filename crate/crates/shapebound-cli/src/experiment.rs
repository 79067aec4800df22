//! Scenario orchestration: synthesize inputs, run the matcher, compute
//! metrics and write artifacts.

use crate::glyphs;
use crate::metrics::{pose_metrics, MetricsSummary, SolutionDigest};
use crate::report::{Artifacts, CycleHistogram, RunReport};
use crate::scenario::{ImageSpec, PriorSource, Scenario};
use shapebound::field::{BernoulliField, ClampPolicy, NoiseSpec, ProbabilityImage};
use shapebound::foam::{self, FoamConfig, FoamResult};
use shapebound::hypotheses::{
    enumerate, Hypothesis, HypothesesError, HypothesisGrid, PriorClass, PriorTableSet,
    ScaleTranslate,
};
use shapebound::pgm;
use shapebound::summaries::SummaryTables;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no hypothesis fits inside the image")]
    EmptyHypothesisSpace,
}

impl ExperimentError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::EmptyHypothesisSpace => 3,
        }
    }
}

fn config_err<E: std::fmt::Display>(e: E) -> ExperimentError {
    ExperimentError::Config(e.to_string())
}

/// Everything needed to run or oracle-scan a scenario.
pub struct PreparedScenario {
    pub scenario: Scenario,
    pub image: ProbabilityImage,
    pub image_field: BernoulliField,
    pub image_tables: SummaryTables,
    pub class_names: Vec<String>,
    pub hypotheses: Vec<Hypothesis>,
    pub priors: PriorTableSet,
    pub policy: ClampPolicy,
}

/// Builds the probability image of a scenario (before the field clamp).
pub fn synthesize_image(scenario: &Scenario) -> Result<ProbabilityImage, ExperimentError> {
    match &scenario.image {
        ImageSpec::Synthetic {
            width,
            height,
            glyph,
            glyph_width,
            glyph_height,
            position,
            fg_p,
            bg_p,
            noise,
        } => {
            let mask = glyphs::rasterize(*glyph, *glyph_width, *glyph_height);
            let mut bits = vec![false; (*width as usize) * (*height as usize)];
            for y in 0..*glyph_height {
                for x in 0..*glyph_width {
                    if mask.get(x as i64, y as i64) {
                        let ix = (position[1] + y) as usize * (*width as usize)
                            + (position[0] + x) as usize;
                        bits[ix] = true;
                    }
                }
            }
            let img = ProbabilityImage::from_binary_shape(*width, *height, &bits, *fg_p, *bg_p)
                .map_err(config_err)?;
            match noise {
                Some(kind) => img
                    .apply_noise(&NoiseSpec { kind: *kind, seed: scenario.seed })
                    .map_err(config_err),
                None => Ok(img),
            }
        }
        ImageSpec::Pgm { pgm: path } => {
            let (img, _) = pgm::read_probability_image(path).map_err(config_err)?;
            Ok(img)
        }
    }
}

/// Builds the prior classes of a scenario. Built-in priors are sharp 0/1
/// masks; bundles come quantized from disk.
pub fn build_classes(scenario: &Scenario) -> Result<Vec<PriorClass>, ExperimentError> {
    match &scenario.priors {
        PriorSource::Builtin { builtin } => builtin
            .iter()
            .map(|bp| {
                let mask = glyphs::rasterize(bp.glyph, bp.width, bp.height);
                let img = ProbabilityImage::from_binary_shape(
                    bp.width,
                    bp.height,
                    &mask.bits,
                    1.0,
                    0.0,
                )
                .map_err(config_err)?;
                Ok(PriorClass::from_image(bp.class.clone(), img))
            })
            .collect(),
        PriorSource::Bundle { bundle } => {
            let (classes, _) = crate::report::load_bundle(bundle).map_err(ExperimentError::Config)?;
            Ok(classes)
        }
    }
}

pub fn prepare(scenario: &Scenario) -> Result<PreparedScenario, ExperimentError> {
    scenario.validate().map_err(ExperimentError::Config)?;
    let policy = ClampPolicy::new(scenario.model.delta_max).map_err(config_err)?;
    let image = synthesize_image(scenario)?;
    let image_field = BernoulliField::from_probabilities(&image, policy);
    let image_tables = SummaryTables::build(&image_field, scenario.model.m).map_err(config_err)?;

    let classes = build_classes(scenario)?;
    if classes.is_empty() {
        return Err(ExperimentError::Config("scenario defines no prior classes".into()));
    }
    let class_names: Vec<String> = classes.iter().map(|c| c.id.clone()).collect();
    let grid = HypothesisGrid {
        translations: scenario.grid.translations.clone(),
        sx: scenario.grid.sx.clone(),
        sy: scenario.grid.sy.clone(),
    };
    let hypotheses = match enumerate(&grid, &classes, image.width(), image.height()) {
        Ok(h) => h,
        Err(HypothesesError::EmptyHypothesisSpace { .. }) => {
            return Err(ExperimentError::EmptyHypothesisSpace)
        }
        Err(e) => return Err(config_err(e)),
    };
    let priors = PriorTableSet::build(&classes, &grid.sx, &grid.sy, policy, scenario.model.m)
        .map_err(config_err)?;
    Ok(PreparedScenario {
        scenario: scenario.clone(),
        image,
        image_field,
        image_tables,
        class_names,
        hypotheses,
        priors,
        policy,
    })
}

fn foam_config(scenario: &Scenario) -> FoamConfig {
    FoamConfig {
        alpha: scenario.foam.alpha,
        beta: scenario.foam.beta,
        rho: scenario.foam.rho,
        m_floor_rel: scenario.model.m_floor_rel,
        strategy: scenario.foam.strategy,
        max_cycles: scenario.foam.max_cycles,
        parallel: scenario.foam.parallel,
        record_trace: scenario.foam.record_trace,
    }
}

/// Runs the matcher on a prepared scenario.
pub fn run_prepared(prep: &PreparedScenario) -> Result<FoamResult, ExperimentError> {
    foam::run(&prep.hypotheses, &prep.image_tables, &prep.priors, &foam_config(&prep.scenario))
        .map_err(config_err)
}

/// Full pipeline: prepare, match, metrics, artifacts, report.
pub fn run_experiment(
    scenario: &Scenario,
    out_dir: Option<&Path>,
) -> Result<(RunReport, FoamResult), ExperimentError> {
    let prep = prepare(scenario)?;
    let result = run_prepared(&prep)?;
    let report = build_report(&prep, &result, out_dir)?;
    Ok((report, result))
}

pub fn build_report(
    prep: &PreparedScenario,
    result: &FoamResult,
    out_dir: Option<&Path>,
) -> Result<RunReport, ExperimentError> {
    let scenario = &prep.scenario;
    let solutions: Vec<SolutionDigest> = result
        .solutions
        .iter()
        .map(|s| {
            let h = &prep.hypotheses[s.hypothesis_id as usize];
            SolutionDigest {
                hypothesis_id: s.hypothesis_id,
                class: prep.class_names[h.class as usize].clone(),
                transform: h.transform,
                lower: s.lower,
                upper: s.upper,
                cycles: s.cycles,
            }
        })
        .collect();

    let tau = result.tau(prep.hypotheses.len());
    let (metrics, true_in) = match &scenario.truth {
        Some(truth) => {
            let truth_t = ScaleTranslate { sx: truth.sx, sy: truth.sy, tx: truth.tx, ty: truth.ty };
            let transforms: Vec<ScaleTranslate> = solutions.iter().map(|s| s.transform).collect();
            let m: Option<MetricsSummary> = pose_metrics(&transforms, &truth_t, tau).ok();
            let hit = solutions.iter().any(|s| {
                s.transform.tx == truth.tx
                    && s.transform.ty == truth.ty
                    && s.transform.sx == truth.sx
                    && s.transform.sy == truth.sy
                    && s.class == truth.class
            });
            (m, Some(hit))
        }
        None => (None, None),
    };

    let mut artifacts = Artifacts::default();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(config_err)?;
        let img_path = dir.join("image.pgm");
        pgm::write_probability_image(
            &img_path,
            &prep.image,
            &pgm::Sidecar {
                delta_max: scenario.model.delta_max,
                provenance: format!("scenario {} seed {}", scenario.name, scenario.seed),
            },
        )
        .map_err(config_err)?;
        artifacts.image_pgm = Some(img_path);

        // Rasterize the shapes of the best solution (greatest upper bound).
        if let Some(best) = result
            .solutions
            .iter()
            .max_by(|a, b| a.upper_units.cmp(&b.upper_units).then(b.hypothesis_id.cmp(&a.hypothesis_id)))
        {
            let support = best.bounds.pose().support_img;
            let discrete = best.bounds.extract_discrete_shape();
            let mask = discrete.rasterize();
            let dpath = dir.join("discrete_shape.pgm");
            pgm::write_mask(&dpath, support.w, support.h, &mask).map_err(config_err)?;
            artifacts.discrete_shape_pgm = Some(dpath);

            let semi = best.bounds.extract_semidiscrete_shape();
            let cov = semi.rasterize_coverage();
            let spath = dir.join("semidiscrete_shape.pgm");
            pgm::write_coverage(&spath, support.w, support.h, &cov).map_err(config_err)?;
            artifacts.semidiscrete_shape_pgm = Some(spath);
        }

        if let Some(trace) = &result.trace {
            let tpath = dir.join("trace.jsonl");
            let mut lines = String::new();
            for rec in trace {
                lines.push_str(&serde_json::to_string(rec).unwrap());
                lines.push('\n');
            }
            std::fs::write(&tpath, lines).map_err(config_err)?;
            artifacts.trace_jsonl = Some(tpath);
        }
    }

    let report = RunReport {
        scenario: scenario.clone(),
        status: result.status,
        gamma: result.gamma,
        hypothesis_count: prep.hypotheses.len(),
        solutions,
        metrics,
        true_translation_in_solutions: true_in,
        tau,
        total_bound_pairs: result.total_bound_pairs,
        refine_cycles: result.refine_cycles,
        cycle_histogram: CycleHistogram::from_cycles(&result.cycles_per_hypothesis),
        confusion: None,
        artifacts,
    };
    if let Some(dir) = out_dir {
        report.save(&dir.join("report.json")).map_err(config_err)?;
    }
    Ok(report)
}

/// One row of the exact-evidence scan.
pub struct OracleRow {
    pub hypothesis_id: u32,
    pub class: String,
    pub transform: ScaleTranslate,
    pub evidence: f64,
    pub evidence_units: i128,
}

/// Evaluates the exact evidence of every hypothesis by full pixel scans
/// (the naive baseline).
pub fn oracle_scan(prep: &PreparedScenario) -> Result<Vec<OracleRow>, ExperimentError> {
    prep.hypotheses
        .iter()
        .map(|h| {
            let tp = prep
                .priors
                .get(h.class, h.transform.sx, h.transform.sy)
                .ok_or_else(|| ExperimentError::Config(format!("missing prior for {}", h.id)))?;
            let units =
                shapebound::bounds::exact_evidence_units(&prep.image_field, &tp.field, &h.pose(tp))
                    .map_err(config_err)?;
            Ok(OracleRow {
                hypothesis_id: h.id,
                class: prep.class_names[h.class as usize].clone(),
                transform: h.transform,
                evidence: units as f64 * prep.policy.unit(),
                evidence_units: units,
            })
        })
        .collect()
}

pub fn oracle_csv(rows: &[OracleRow]) -> String {
    let mut out = String::from("hypothesis_id,class,sx,sy,tx,ty,evidence\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.9}\n",
            r.hypothesis_id, r.class, r.transform.sx, r.transform.sy, r.transform.tx,
            r.transform.ty, r.evidence
        ));
    }
    out
}

/// Scales a synthetic scenario's geometry by an integer factor (image,
/// glyph, position, priors and truth), for resolution sweeps.
pub fn scale_scenario(scenario: &Scenario, factor: u32) -> Result<Scenario, ExperimentError> {
    let mut out = scenario.clone();
    out.name = format!("{}_x{}", scenario.name, factor);
    match &mut out.image {
        ImageSpec::Synthetic {
            width, height, glyph_width, glyph_height, position, ..
        } => {
            *width *= factor;
            *height *= factor;
            *glyph_width *= factor;
            *glyph_height *= factor;
            position[0] *= factor;
            position[1] *= factor;
        }
        ImageSpec::Pgm { .. } => {
            return Err(ExperimentError::Config(
                "resolution sweeps need a synthetic image scenario".into(),
            ))
        }
    }
    match &mut out.priors {
        PriorSource::Builtin { builtin } => {
            for bp in builtin {
                bp.width *= factor;
                bp.height *= factor;
            }
        }
        PriorSource::Bundle { .. } => {
            return Err(ExperimentError::Config(
                "resolution sweeps need built-in priors".into(),
            ))
        }
    }
    if let Some(truth) = &mut out.truth {
        truth.tx *= factor as i32;
        truth.ty *= factor as i32;
    }
    if let shapebound::hypotheses::TranslationSpec::Ranges { tx, ty } =
        &mut out.grid.translations
    {
        for t in tx.iter_mut().chain(ty.iter_mut()) {
            *t *= factor as i32;
        }
    }
    Ok(out)
}
