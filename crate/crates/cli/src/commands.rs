//! Command implementations. Each returns the text to print; `main` only
//! parses flags and maps errors to exit codes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use respose_core::bkk::{self, BoundInputs, BoundReport, CrossCheck};
use respose_core::robust::ransac::{ransac_pose, RansacConfig, SampleScheme};
use respose_core::robust::{generate_scene, SceneGeometry, SyntheticSpec};
use respose_core::solver::{solve_pose, Diagnostics, PoseCandidate, SolutionSet, SolverError, SolverOptions};
use respose_core::Pose;
use serde::Serialize;

use crate::io::{self, PoseEntry, SceneFile, TruthFile};
use crate::{CliError, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Text,
}

#[derive(Debug, Clone, Serialize)]
pub struct LineEntry {
    pub t_base: [f64; 3],
    pub t_dir: [f64; 3],
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateEntry {
    #[serde(flatten)]
    pub pose: PoseEntry,
    pub sampson_total: f64,
    pub eq3_residual_norm: f64,
    pub translation_rank: usize,
    pub cheirality_violations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub triple_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<LineEntry>,
}

impl From<&PoseCandidate> for CandidateEntry {
    fn from(c: &PoseCandidate) -> Self {
        Self {
            pose: PoseEntry::from(&c.pose),
            sampson_total: c.sampson_total,
            eq3_residual_norm: c.eq3_residual_norm,
            translation_rank: c.translation_rank,
            cheirality_violations: c.cheirality_violations,
            triple_error: c.triple_error,
            line: c.line.map(|l| LineEntry {
                t_base: l.t_base.into(),
                t_dir: l.t_dir.into(),
                alpha: l.alpha,
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub format_version: u32,
    pub configuration: String,
    pub diagnostics: Diagnostics,
    pub best: Option<CandidateEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<CandidateEntry>>,
}

fn solver_error(e: SolverError) -> CliError {
    match e {
        SolverError::Unsupported { .. } => CliError::Unsupported(e.to_string()),
        SolverError::Geometry(_) | SolverError::MatchCount(_) => CliError::Input(e.to_string()),
        other => CliError::Solver(other.to_string()),
    }
}

pub fn solve_scene(path: &Path, opts: &SolverOptions) -> Result<SolutionSet, CliError> {
    let scene = io::load_scene(path)?;
    solve_pose(&scene, opts).map_err(solver_error)
}

pub fn solve_report(solution: &SolutionSet, all: bool) -> SolveReport {
    SolveReport {
        format_version: FORMAT_VERSION,
        configuration: solution.diagnostics.config.kind.to_string(),
        diagnostics: solution.diagnostics.clone(),
        best: solution.best().map(CandidateEntry::from),
        candidates: all.then(|| solution.candidates.iter().map(CandidateEntry::from).collect()),
    }
}

fn fmt_pose(p: &PoseEntry) -> String {
    let q = p.quaternion;
    let c = p.center;
    format!(
        "q = [{:+.12}, {:+.12}, {:+.12}, {:+.12}]  center = [{:+.9}, {:+.9}, {:+.9}]",
        q[0], q[1], q[2], q[3], c[0], c[1], c[2]
    )
}

pub fn cmd_solve(path: &Path, all: bool, format: OutputFormat) -> Result<String, CliError> {
    let solution = solve_scene(path, &SolverOptions::default())?;
    let report = solve_report(&solution, all);
    if format == OutputFormat::Json {
        return Ok(serde_json::to_string_pretty(&report).expect("serializable") + "\n");
    }
    let mut out = String::new();
    let d = &report.diagnostics;
    writeln!(out, "format_version {}", report.format_version).ok();
    writeln!(
        out,
        "configuration {}  complex {}  real {}  candidates {}{}",
        report.configuration,
        d.complex_count,
        d.real_count,
        solution.candidates.len(),
        if d.retried { "  (retried in rotated frame)" } else { "" }
    )
    .ok();
    match &report.best {
        Some(b) => writeln!(out, "best  {}  sampson {:.3e}", fmt_pose(&b.pose), b.sampson_total).ok(),
        None => writeln!(out, "no real solution").ok(),
    };
    if let Some(all) = &report.candidates {
        for (i, c) in all.iter().enumerate() {
            writeln!(
                out,
                "{i:>3}  {}  sampson {:.3e}  rank {}  behind {}",
                fmt_pose(&c.pose),
                c.sampson_total,
                c.translation_rank,
                c.cheirality_violations
            )
            .ok();
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct RansacReport {
    pub format_version: u32,
    pub pose: PoseEntry,
    pub inlier_count: usize,
    pub match_count: usize,
    pub iterations: usize,
    pub final_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rotation_error_deg: Option<f64>,
    pub inlier_mask: Vec<bool>,
}

pub struct RansacArgs<'a> {
    pub scene: &'a Path,
    pub config: RansacConfig,
    pub truth: Option<&'a Path>,
    pub history: Option<&'a Path>,
}

/// History CSV. The first line is a comment carrying the format version.
pub fn history_csv(history: &[respose_core::robust::ransac::IterationRecord], truth: Option<&Pose>) -> String {
    let mut out = format!("# respose ransac history, format_version {FORMAT_VERSION}\n");
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["iteration", "best_loss"];
    if truth.is_some() {
        header.push("best_rotation_error_deg");
    }
    header.push("best_inlier_count");
    w.write_record(&header).expect("in-memory write");
    for rec in history {
        let mut row = vec![rec.iteration.to_string(), format!("{:.12e}", rec.best_loss)];
        if let Some(t) = truth {
            row.push(match &rec.best_pose {
                Some(p) => format!("{:.12e}", p.rotation_error_deg(t)),
                None => String::new(),
            });
        }
        row.push(rec.best_inlier_count.to_string());
        w.write_record(&row).expect("in-memory write");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("flushed")).expect("utf8"));
    out
}

pub fn cmd_ransac(args: &RansacArgs<'_>) -> Result<String, CliError> {
    let scene = io::load_scene(args.scene)?;
    let truth = match args.truth {
        Some(p) => Some(io::load_truth(p)?.pose.to_pose().map_err(CliError::Parse)?),
        None => None,
    };
    let result = ransac_pose(&scene, &args.config, &SolverOptions::default()).map_err(|e| CliError::Solver(e.to_string()))?;
    if let Some(path) = args.history {
        std::fs::write(path, history_csv(&result.history, truth.as_ref()))
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    let report = RansacReport {
        format_version: FORMAT_VERSION,
        pose: PoseEntry::from(&result.pose),
        inlier_count: result.inlier_count,
        match_count: scene.matches.len(),
        iterations: result.history.len(),
        final_loss: result.history.last().map_or(f64::INFINITY, |h| h.best_loss),
        rotation_error_deg: truth.as_ref().map(|t| result.pose.rotation_error_deg(t)),
        inlier_mask: result.inlier_mask,
    };
    Ok(serde_json::to_string_pretty(&report).expect("serializable") + "\n")
}

pub struct SynthArgs {
    pub spec: SyntheticSpec,
    pub out: PathBuf,
    pub truth: PathBuf,
}

/// Default truth path next to the scene: `scene.json` → `scene.truth.json`.
pub fn truth_path_for(scene: &Path) -> PathBuf {
    let stem = scene.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    scene.with_file_name(format!("{stem}.truth.json"))
}

pub fn cmd_synth(args: &SynthArgs) -> Result<String, CliError> {
    let s = generate_scene(&args.spec);
    io::write_json(&args.out, &SceneFile::from_scene(&s.scene))?;
    let truth = TruthFile {
        format_version: FORMAT_VERSION,
        pose: PoseEntry::from(&s.truth),
        spec: Some(args.spec.clone()),
        outliers: s.outliers.clone(),
    };
    io::write_json(&args.truth, &truth)?;
    Ok(format!("wrote {} and {}\n", args.out.display(), args.truth.display()))
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsOutput {
    pub format_version: u32,
    pub all_match: bool,
    #[serde(flatten)]
    pub report: BoundReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_check: Option<CrossCheck>,
}

/// Supports with one term removed from the quadratic match polynomial, for
/// exercising the failure path.
pub fn wrong_inputs() -> BoundInputs {
    let mut inputs = BoundInputs::default();
    let dim = inputs.quadratic.dim();
    let kept: Vec<_> = inputs.quadratic.terms().skip(1).cloned().collect();
    inputs.quadratic = bkk::Support::from_terms(dim, kept);
    inputs
}

pub fn cmd_verify_bounds(cross_check: bool, inject_wrong: bool, format: OutputFormat) -> Result<(String, bool), CliError> {
    let inputs = if inject_wrong { wrong_inputs() } else { BoundInputs::default() };
    let report = bkk::verify_bounds(&inputs);
    let check = cross_check.then(|| bkk::random_cross_check(40, 7));
    let ok = report.all_match() && check.as_ref().is_none_or(|c| c.disagreements.is_empty());
    let output = BoundsOutput {
        format_version: FORMAT_VERSION,
        all_match: ok,
        report,
        cross_check: check,
    };
    if format == OutputFormat::Json {
        return Ok((serde_json::to_string_pretty(&output).expect("serializable") + "\n", ok));
    }
    let mut out = format!("format_version {FORMAT_VERSION}\n");
    writeln!(out, "{:<18} {:<13} {:>9} {:>9}  status", "bound", "kind", "computed", "expected").ok();
    for row in &output.report.rows {
        let computed = row.computed.map_or("error".to_string(), |c| c.to_string());
        let status = if row.matches() { "ok" } else { "MISMATCH" };
        writeln!(out, "{:<18} {:<13} {:>9} {:>9}  {status}", row.name, row.kind, computed, row.expected).ok();
        if let Some(e) = &row.error {
            writeln!(out, "    {e}").ok();
        }
    }
    if let Some(c) = &output.cross_check {
        writeln!(out, "inclusion-exclusion cross-check: {}/{} agree", c.agreed, c.trials).ok();
        for d in &c.disagreements {
            writeln!(out, "    {d}").ok();
        }
    }
    Ok((out, ok))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialStats {
    pub seed: u64,
    pub complex_count: usize,
    pub real_count: usize,
    pub candidates: usize,
    /// Rotation error of the best-ranked candidate, degrees.
    pub best_error_deg: f64,
    /// Rotation error of the candidate closest to the truth, degrees.
    pub closest_error_deg: f64,
    pub best_residual: f64,
    pub millis: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let mut sorted = finite.clone();
        sorted.sort_by(f64::total_cmp);
        let median = match sorted.len() {
            0 => f64::NAN,
            n if n % 2 == 1 => sorted[n / 2],
            n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
        };
        Self {
            mean: finite.iter().sum::<f64>() / finite.len().max(1) as f64,
            median,
            max: sorted.last().copied().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub format_version: u32,
    pub trials: usize,
    pub seed: u64,
    pub failures: usize,
    pub best_rotation_error_deg: Summary,
    pub closest_rotation_error_deg: Summary,
    pub max_residual: Summary,
    pub complex_count_histogram: BTreeMap<usize, usize>,
    pub real_count_mean: f64,
    pub real_count_std: f64,
    pub real_count_histogram: BTreeMap<usize, usize>,
    pub millis_per_solve: Summary,
    #[serde(skip)]
    pub per_trial: Vec<TrialStats>,
}

/// Seed of trial `i` under root seed `seed`.
pub fn trial_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add(i as u64)
}

pub fn run_trial(seed: u64, geometry: SceneGeometry, opts: &SolverOptions) -> Option<TrialStats> {
    let s = generate_scene(&SyntheticSpec::minimal(seed).with_geometry(geometry));
    let start = Instant::now();
    let solution = solve_pose(&s.scene, opts).ok()?;
    let millis = start.elapsed().as_secs_f64() * 1e3;
    let best = solution.best();
    Some(TrialStats {
        seed,
        complex_count: solution.diagnostics.complex_count,
        real_count: solution.diagnostics.real_count,
        candidates: solution.candidates.len(),
        best_error_deg: best.map_or(f64::INFINITY, |b| b.pose.rotation_error_deg(&s.truth)),
        closest_error_deg: solution
            .candidates
            .iter()
            .map(|c| c.pose.rotation_error_deg(&s.truth))
            .fold(f64::INFINITY, f64::min),
        best_residual: best.map_or(f64::INFINITY, |b| b.eq3_residual_norm),
        millis,
    })
}

pub fn bench_report(trials: usize, seed: u64, geometry: SceneGeometry) -> BenchReport {
    let opts = SolverOptions::default();
    let results: Vec<Option<TrialStats>> = (0..trials)
        .into_par_iter()
        .map(|i| run_trial(trial_seed(seed, i), geometry, &opts))
        .collect();
    let per_trial: Vec<TrialStats> = results.iter().flatten().cloned().collect();
    let col = |f: fn(&TrialStats) -> f64| per_trial.iter().map(f).collect::<Vec<f64>>();
    let reals = col(|t| t.real_count as f64);
    let n = reals.len().max(1) as f64;
    let mean = reals.iter().sum::<f64>() / n;
    let var = reals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let mut complex_hist = BTreeMap::new();
    let mut real_hist = BTreeMap::new();
    for t in &per_trial {
        *complex_hist.entry(t.complex_count).or_insert(0) += 1;
        *real_hist.entry(t.real_count).or_insert(0) += 1;
    }
    BenchReport {
        format_version: FORMAT_VERSION,
        trials,
        seed,
        failures: trials - per_trial.len(),
        best_rotation_error_deg: Summary::of(&col(|t| t.best_error_deg)),
        closest_rotation_error_deg: Summary::of(&col(|t| t.closest_error_deg)),
        max_residual: Summary::of(&col(|t| t.best_residual)),
        complex_count_histogram: complex_hist,
        real_count_mean: mean,
        real_count_std: var.sqrt(),
        real_count_histogram: real_hist,
        millis_per_solve: Summary::of(&col(|t| t.millis)),
        per_trial,
    }
}

/// Histogram CSV of real and complex solution counts.
pub fn histogram_csv(report: &BenchReport) -> String {
    let mut out = format!("# respose bench histogram, format_version {FORMAT_VERSION}\n");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["count", "real_trials", "complex_trials"]).expect("in-memory write");
    let keys: std::collections::BTreeSet<usize> = report
        .real_count_histogram
        .keys()
        .chain(report.complex_count_histogram.keys())
        .copied()
        .collect();
    for k in keys {
        let r = report.real_count_histogram.get(&k).copied().unwrap_or(0);
        let c = report.complex_count_histogram.get(&k).copied().unwrap_or(0);
        w.write_record([k.to_string(), r.to_string(), c.to_string()]).expect("in-memory write");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("flushed")).expect("utf8"));
    out
}

pub fn cmd_bench(trials: usize, seed: u64, json: Option<&Path>, csv_path: Option<&Path>) -> Result<String, CliError> {
    let report = bench_report(trials, seed, SceneGeometry::General);
    if let Some(p) = json {
        io::write_json(p, &report)?;
    }
    if let Some(p) = csv_path {
        std::fs::write(p, histogram_csv(&report)).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
    }
    let mut out = format!("format_version {FORMAT_VERSION}\n");
    let s = |x: &Summary| format!("mean {:.3e}  median {:.3e}  max {:.3e}", x.mean, x.median, x.max);
    writeln!(out, "trials {}  failures {}  seed {}", report.trials, report.failures, report.seed).ok();
    writeln!(out, "rotation error, best-ranked (deg):  {}", s(&report.best_rotation_error_deg)).ok();
    writeln!(out, "rotation error, closest (deg):      {}", s(&report.closest_rotation_error_deg)).ok();
    writeln!(out, "max normalized residual:            {}", s(&report.max_residual)).ok();
    writeln!(out, "real solutions: mean {:.2}  std {:.2}", report.real_count_mean, report.real_count_std).ok();
    writeln!(out, "complex solutions: {:?}", report.complex_count_histogram).ok();
    writeln!(out, "time per solve (ms):                {}", s(&report.millis_per_solve)).ok();
    Ok(out)
}

pub fn parse_scheme(s: &str) -> Result<SampleScheme, String> {
    match s {
        "3+3" | "three-plus-three" => Ok(SampleScheme::ThreePlusThree),
        "uniform" | "uniform-six" => Ok(SampleScheme::UniformSixFromTwoPlus),
        _ => Err(format!("unknown scheme `{s}` (expected 3+3 or uniform)")),
    }
}
