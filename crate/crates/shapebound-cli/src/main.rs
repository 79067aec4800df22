//! Command-line driver: scenario synthesis, matching, oracle scans,
//! prior learning, resolution benchmarks and confusion matrices.
//!
//! Exit codes: 0 success, 2 configuration error, 3 empty hypothesis
//! space, 4 cycle budget exhausted.

use clap::{Parser, Subcommand};
use shapebound::foam::{RunStatus, Strategy};
use shapebound::hypotheses::{build_priors, AlignParams, BinaryMask};
use shapebound::pgm;
use shapebound_cli::experiment::{
    self, oracle_csv, oracle_scan, prepare, run_experiment, scale_scenario, ExperimentError,
};
use shapebound_cli::metrics::confusion;
use shapebound_cli::report::{confusion_csv, save_bundle, RunReport};
use shapebound_cli::scenario::Scenario;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "shapebound", about = "Shape matching by hypothesize-and-bound search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Default)]
struct Overrides {
    /// Number of positive log-odds thresholds (power of two).
    #[arg(long)]
    m: Option<u32>,
    /// Log-odds clamp.
    #[arg(long)]
    delta_max: Option<f64>,
    /// Scheduling strategy.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    /// Refinement cycle budget.
    #[arg(long)]
    max_cycles: Option<u64>,
    /// Refine up to this many hypotheses concurrently.
    #[arg(long)]
    parallel: Option<usize>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Record and write the per-cycle trace.
    #[arg(long)]
    trace: bool,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    match s {
        "potential_reduction" | "pr" => Ok(Strategy::PotentialReduction),
        "max_upper" | "mu" => Ok(Strategy::MaxUpper),
        other => Err(format!("unknown strategy {other:?}")),
    }
}

impl Overrides {
    fn apply(&self, sc: &mut Scenario) {
        if let Some(m) = self.m {
            sc.model.m = m;
        }
        if let Some(d) = self.delta_max {
            sc.model.delta_max = d;
        }
        if let Some(s) = self.strategy {
            sc.foam.strategy = s;
        }
        if let Some(c) = self.max_cycles {
            sc.foam.max_cycles = Some(c);
        }
        if let Some(p) = self.parallel {
            sc.foam.parallel = Some(p);
        }
        if let Some(seed) = self.seed {
            sc.seed = seed;
        }
        if self.trace {
            sc.foam.record_trace = true;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario end to end and write report.json plus shape rasters.
    Match {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Synthesize a scenario's (noisy) probability image as 16-bit PGM.
    Synth {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Exact evidence of every hypothesis by full pixel scan, as CSV.
    Oracle {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Learn a prior bundle from a directory of binary PGM masks.
    MakePrior {
        /// Directory of 8-bit PGM shape masks.
        #[arg(long)]
        shapes_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Clusters (priors) to learn.
        #[arg(long, default_value_t = 1)]
        clusters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Alignment search radius in pixels.
        #[arg(long, default_value_t = 2)]
        align_radius: i32,
        #[arg(long, default_value_t = 5.0)]
        delta_max: f64,
    },
    /// Resolution sweep: run a synthetic scenario at integer scale factors
    /// and report bound-pair counts, as CSV.
    Bench {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated integer scale factors.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2])]
        factors: Vec<u32>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Pool reports from a directory into confusion matrices, as CSV.
    Confusion {
        /// Directory containing report JSON files.
        #[arg(long)]
        reports_dir: PathBuf,
        /// Output CSV path prefix; one file per beta.
        #[arg(long)]
        out_prefix: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.5, 1.0])]
        betas: Vec<f64>,
    },
}

fn load_scenario(path: &PathBuf, overrides: &Overrides) -> Result<Scenario, ExperimentError> {
    let mut sc = Scenario::from_path(path).map_err(ExperimentError::Config)?;
    overrides.apply(&mut sc);
    sc.validate().map_err(ExperimentError::Config)?;
    Ok(sc)
}

fn run() -> Result<i32, ExperimentError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Match { scenario, out_dir, overrides } => {
            let sc = load_scenario(&scenario, &overrides)?;
            let (report, _result) = run_experiment(&sc, Some(&out_dir))?;
            println!(
                "{}: status={:?} hypotheses={} solutions={} tau={:.3} cycles={}",
                sc.name,
                report.status,
                report.hypothesis_count,
                report.solutions.len(),
                report.tau,
                report.refine_cycles
            );
            if let Some(m) = &report.metrics {
                println!(
                    "pose: mu_t={:.3}px sigma_t={:.3}px mu_s={:.2}% sigma_s={:.2}%",
                    m.mu_t, m.sigma_t, m.mu_s, m.sigma_s
                );
            }
            Ok(if report.status == RunStatus::BudgetExhausted { 4 } else { 0 })
        }
        Command::Synth { scenario, out, overrides } => {
            let sc = load_scenario(&scenario, &overrides)?;
            let img = experiment::synthesize_image(&sc)?;
            pgm::write_probability_image(
                &out,
                &img,
                &pgm::Sidecar {
                    delta_max: sc.model.delta_max,
                    provenance: format!("scenario {} seed {}", sc.name, sc.seed),
                },
            )
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
            println!("wrote {} ({}x{})", out.display(), img.width(), img.height());
            Ok(0)
        }
        Command::Oracle { scenario, out, overrides } => {
            let sc = load_scenario(&scenario, &overrides)?;
            let prep = prepare(&sc)?;
            let rows = oracle_scan(&prep)?;
            std::fs::write(&out, oracle_csv(&rows))
                .map_err(|e| ExperimentError::Config(e.to_string()))?;
            println!("wrote {} ({} hypotheses)", out.display(), rows.len());
            Ok(0)
        }
        Command::MakePrior { shapes_dir, out_dir, clusters, seed, align_radius, delta_max } => {
            let mut entries: Vec<_> = std::fs::read_dir(&shapes_dir)
                .map_err(|e| ExperimentError::Config(e.to_string()))?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
                .collect();
            entries.sort();
            let mut shapes: Vec<BinaryMask> = Vec::new();
            for path in entries {
                let (w, h, bits) =
                    pgm::read_mask(&path).map_err(|e| ExperimentError::Config(e.to_string()))?;
                shapes.push(BinaryMask::new(w, h, bits));
            }
            if shapes.is_empty() {
                return Err(ExperimentError::Config(format!(
                    "no PGM masks found in {}",
                    shapes_dir.display()
                )));
            }
            let align = AlignParams::translations(align_radius);
            let classes = build_priors(&shapes, clusters, seed, &align)
                .map_err(|e| ExperimentError::Config(e.to_string()))?;
            let manifest = save_bundle(
                &out_dir,
                &classes,
                delta_max,
                &format!("make-prior from {} ({} shapes)", shapes_dir.display(), shapes.len()),
            )
            .map_err(ExperimentError::Config)?;
            println!("wrote {} ({} priors)", manifest.display(), classes.len());
            Ok(0)
        }
        Command::Bench { scenario, out, factors, overrides } => {
            let sc = load_scenario(&scenario, &overrides)?;
            let mut csv = String::from(
                "factor,width,height,hypotheses,total_bound_pairs,tau,refine_cycles,solutions\n",
            );
            for &f in &factors {
                if f == 0 {
                    return Err(ExperimentError::Config("scale factor must be >= 1".into()));
                }
                let scaled = scale_scenario(&sc, f)?;
                let (report, _) = run_experiment(&scaled, None)?;
                let (w, h) = match &scaled.image {
                    shapebound_cli::scenario::ImageSpec::Synthetic { width, height, .. } => {
                        (*width, *height)
                    }
                    _ => unreachable!("scale_scenario requires synthetic images"),
                };
                csv.push_str(&format!(
                    "{f},{w},{h},{},{},{:.4},{},{}\n",
                    report.hypothesis_count,
                    report.total_bound_pairs,
                    report.tau,
                    report.refine_cycles,
                    report.solutions.len()
                ));
            }
            std::fs::write(&out, csv).map_err(|e| ExperimentError::Config(e.to_string()))?;
            println!("wrote {}", out.display());
            Ok(0)
        }
        Command::Confusion { reports_dir, out_prefix, betas } => {
            let mut runs = Vec::new();
            let mut classes: Vec<String> = Vec::new();
            let mut entries: Vec<_> = std::fs::read_dir(&reports_dir)
                .map_err(|e| ExperimentError::Config(e.to_string()))?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            entries.sort();
            for path in entries {
                let report = RunReport::load(&path).map_err(ExperimentError::Config)?;
                let Some(truth) = &report.scenario.truth else { continue };
                for s in &report.solutions {
                    if !classes.contains(&s.class) {
                        classes.push(s.class.clone());
                    }
                }
                if !classes.contains(&truth.class) {
                    classes.push(truth.class.clone());
                }
                runs.push((truth.class.clone(), report.solutions.clone()));
            }
            if runs.is_empty() {
                return Err(ExperimentError::Config(format!(
                    "no labeled reports in {}",
                    reports_dir.display()
                )));
            }
            classes.sort();
            for beta in betas {
                let matrix = confusion(&runs, &classes, beta);
                let name = format!(
                    "{}_beta{}.csv",
                    out_prefix.file_name().unwrap_or_default().to_string_lossy(),
                    beta
                );
                let path = out_prefix.with_file_name(name);
                std::fs::write(&path, confusion_csv(&matrix))
                    .map_err(|e| ExperimentError::Config(e.to_string()))?;
                println!("beta={beta}: P={:.4} -> {}", matrix.p_total, path.display());
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
