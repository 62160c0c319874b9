use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use respose_cli::commands::{self, OutputFormat, RansacArgs, SynthArgs};
use respose_cli::CliError;
use respose_core::robust::ransac::RansacConfig;
use respose_core::robust::synth::DEFAULT_FOCAL_PX;
use respose_core::robust::{SceneGeometry, SyntheticSpec};

/// Camera pose from six matches against calibrated cameras.
#[derive(Parser)]
#[command(name = "respose", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Geometry {
    General,
    Collinear,
    FourTwo,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a six-match scene file.
    Solve {
        scene: PathBuf,
        /// Print every candidate, not just the best one.
        #[arg(long)]
        all_solutions: bool,
        #[arg(long, conflicts_with = "text")]
        json: bool,
        #[arg(long)]
        text: bool,
    },
    /// Robust pose from a scene with many matches.
    Ransac {
        scene: PathBuf,
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
        iters: u64,
        /// Inlier threshold in Sampson units (squared normalized distance).
        /// Defaults to 2 px at a focal length of 800 px.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `3+3` (three matches from each of two cameras) or `uniform`.
        #[arg(long, default_value = "3+3", value_parser = commands::parse_scheme)]
        scheme: respose_core::robust::SampleScheme,
        /// Truth file; adds rotation errors to the report and history.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Write the per-iteration history as CSV.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Write a synthetic scene and its ground truth.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        cameras: usize,
        #[arg(long, default_value_t = 6)]
        points: usize,
        #[arg(long, default_value_t = 0.0)]
        noise_px: f64,
        #[arg(long, default_value_t = DEFAULT_FOCAL_PX)]
        focal_px: f64,
        #[arg(long, default_value_t = 0.0)]
        outliers: f64,
        #[arg(long, value_enum, default_value = "general")]
        geometry: Geometry,
        /// Distance of the new camera from the reference line (collinear only).
        #[arg(long, default_value_t = 0.0)]
        deviation: f64,
        /// Add a triple match.
        #[arg(long)]
        triple: bool,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `<out stem>.truth.json`.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Check the Bezout and mixed-volume solution counts.
    VerifyBounds {
        #[arg(long)]
        json: bool,
        /// Also compare both mixed-volume routes on random 2D and 3D polytopes.
        #[arg(long)]
        brute_force_check: bool,
        #[arg(long, hide = true)]
        inject_wrong_support: bool,
    },
    /// Accuracy, solution-count and timing statistics on random scenes.
    Bench {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn format(json: bool) -> OutputFormat {
    if json {
        OutputFormat::Json
    } else {
        OutputFormat::Text
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Solve {
            scene,
            all_solutions,
            json,
            text: _,
        } => commands::cmd_solve(&scene, all_solutions, format(json)),
        Command::Ransac {
            scene,
            iters,
            threshold,
            seed,
            scheme,
            truth,
            history,
        } => {
            let defaults = RansacConfig::default();
            let config = RansacConfig {
                max_iterations: iters as usize,
                inlier_threshold: threshold.unwrap_or(defaults.inlier_threshold),
                seed,
                sample_scheme: scheme,
                ..defaults
            };
            commands::cmd_ransac(&RansacArgs {
                scene: &scene,
                config,
                truth: truth.as_deref(),
                history: history.as_deref(),
            })
        }
        Command::Synth {
            seed,
            cameras,
            points,
            noise_px,
            focal_px,
            outliers,
            geometry,
            deviation,
            triple,
            out,
            truth,
        } => {
            let spec = SyntheticSpec {
                n_cameras: cameras,
                n_points: points,
                noise_px,
                focal_px,
                outlier_fraction: outliers,
                geometry: match geometry {
                    Geometry::General => SceneGeometry::General,
                    Geometry::Collinear => SceneGeometry::Collinear { deviation },
                    Geometry::FourTwo => SceneGeometry::FourTwo,
                },
                triple_match: triple,
                seed,
            };
            let truth = truth.unwrap_or_else(|| commands::truth_path_for(&out));
            commands::cmd_synth(&SynthArgs { spec, out, truth })
        }
        Command::VerifyBounds {
            json,
            brute_force_check,
            inject_wrong_support,
        } => {
            let (text, ok) = commands::cmd_verify_bounds(brute_force_check, inject_wrong_support, format(json))?;
            if ok {
                Ok(text)
            } else {
                print!("{text}");
                Err(CliError::BoundsMismatch)
            }
        }
        Command::Bench { trials, seed, json, csv } => commands::cmd_bench(trials, seed, json.as_deref(), csv.as_deref()),
    }
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("RESPOSE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    // Exit code 2 is reserved for unsupported configurations, so usage
    // errors exit with 1 instead of clap's default.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
