use std::path::PathBuf;
use std::process::ExitCode;

use bearing_cli::commands::{
    self, analyze, render_report, resolve_scenario, run_simulation, target_or_realized, write_trajectory, CliError,
    OutputFormat, EXIT_CONJECTURE, STIFFNESS_WARNING,
};
use bearing_cli::conjecture::{dump_violations, run_batch, ConjectureBatchConfig, GraphModel};
use bearing_cli::export::{report_json, write_matrices};
use bearing_cli::fixtures;
use bearing_core::linalg::DEFAULT_RANK_TOL;
use bearing_core::simulation::{Integrator, SimulationConfig};
use bearing_core::Tolerances;
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

#[derive(Parser)]
#[command(name = "bearing", version, about = "Bearing-only formation analysis and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TolArgs {
    /// Relative singular-value threshold for numeric rank.
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    tol_rank: f64,
}

impl TolArgs {
    fn tolerances(&self) -> Tolerances {
        Tolerances {
            rank_rel: self.tol_rank,
            ..Default::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Classify a scenario: rigidity, persistence, spectrum, null spaces.
    Analyze {
        /// Scenario file or bundled fixture name.
        scenario: String,
        #[command(flatten)]
        tol: TolArgs,
        /// Digits printed in the table.
        #[arg(long, default_value_t = 6)]
        precision: usize,
        /// Print the JSON report instead of the table.
        #[arg(long)]
        json: bool,
        /// Also write `<name>_report.json` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate dp/dt = -L_B p from the scenario's initial configuration.
    Simulate {
        scenario: String,
        #[command(flatten)]
        tol: TolArgs,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, default_value_t = 50.0)]
        t_max: f64,
        /// euler, rk4 or expm-oracle.
        #[arg(long, default_value_t = Integrator::Rk4)]
        integrator: Integrator,
        /// Overrides the scenario's random seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long, default_value_t = 1e-8)]
        convergence_threshold: f64,
        /// Directory for trajectory files; nothing is written without it.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Both)]
        format: OutputFormat,
    },
    /// Randomized search for bearing Laplacians with negative real-part eigenvalues.
    Conjecture {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// erdos-renyi-directed, out-degree-capped or undirected.
        #[arg(long, default_value = "erdos-renyi-directed")]
        model: GraphModel,
        #[arg(long, default_value_t = 3)]
        n_min: usize,
        #[arg(long, default_value_t = 10)]
        n_max: usize,
        #[arg(long, default_value_t = 2)]
        d_min: usize,
        #[arg(long, default_value_t = 3)]
        d_max: usize,
        #[arg(long, default_value_t = 0.35)]
        edge_probability: f64,
        #[arg(long, default_value_t = 2)]
        out_degree_cap: usize,
        #[arg(long, default_value_t = 5.0)]
        box_half_width: f64,
        #[command(flatten)]
        tol: TolArgs,
        /// Worker threads; 0 uses all cores.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Report and violation dumps go here.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Write H, R_B, L_B and null-space bases as text and JSON.
    ExportMatrices {
        scenario: String,
        #[command(flatten)]
        tol: TolArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Names of the bundled scenarios.
    ListFixtures,
}

fn load(arg: &str) -> Result<bearing_cli::scenario::Scenario, CliError> {
    let parsed = resolve_scenario(arg)?;
    for w in &parsed.warnings {
        warn!("{w}");
    }
    Ok(parsed.scenario)
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Analyze {
            scenario,
            tol,
            precision,
            json,
            out,
        } => {
            let s = load(&scenario)?;
            let report = analyze(&s, &tol.tolerances())?;
            if json {
                println!("{}", report_json(&report));
            } else {
                print!("{}", render_report(&s.name, &report, precision));
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                let path = dir.join(format!("{}_report.json", s.name));
                std::fs::write(&path, report_json(&report))?;
                info!("wrote {}", path.display());
            }
        }
        Command::Simulate {
            scenario,
            tol,
            dt,
            t_max,
            integrator,
            seed,
            stride,
            convergence_threshold,
            out,
            format,
        } => {
            let s = load(&scenario)?;
            let cfg = SimulationConfig {
                dt,
                t_max,
                integrator,
                convergence_threshold,
                record_stride: stride,
            };
            let outcome = run_simulation(&s, &cfg, seed, &tol.tolerances())?;
            if outcome.stiffness > STIFFNESS_WARNING {
                warn!(
                    "dt * max|lambda| = {:.3} exceeds {STIFFNESS_WARNING}; consider a smaller --dt",
                    outcome.stiffness
                );
            }
            if let Some(dir) = out {
                for path in write_trajectory(&dir, &s.name, &outcome.trajectory, format)? {
                    info!("wrote {}", path.display());
                }
            }
            println!("{}", outcome.summary());
        }
        Command::Conjecture {
            trials,
            seed,
            model,
            n_min,
            n_max,
            d_min,
            d_max,
            edge_probability,
            out_degree_cap,
            box_half_width,
            tol,
            jobs,
            out,
        } => {
            let cfg = ConjectureBatchConfig {
                trials,
                n_range: [n_min, n_max],
                d_range: [d_min, d_max],
                graph_model: model,
                edge_probability,
                out_degree_cap,
                seed,
                position_box: [-box_half_width, box_half_width],
                tolerances: tol.tolerances(),
            };
            let (report, formations) = run_batch(&cfg, jobs)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join(format!("conjecture_{model}_seed{seed}.json"));
            std::fs::write(&path, serde_json::to_string_pretty(&report).expect("report serializes"))?;
            info!("wrote {}", path.display());
            println!(
                "trials={} aggregate_min_real_part={:.6e} persistent={} rigid={} inconsistent={} violations={}",
                report.trials.len(),
                report.aggregate_min_real_part,
                report.persistent_count,
                report.rigid_count,
                report.inconsistent_count,
                report.violations.len()
            );
            if report.has_violation() {
                for path in dump_violations(&out, &report, &formations)? {
                    warn!("violation candidate written to {}", path.display());
                }
                return Ok(ExitCode::from(EXIT_CONJECTURE));
            }
        }
        Command::ExportMatrices { scenario, tol, out } => {
            let s = load(&scenario)?;
            let tol = tol.tolerances();
            let f = target_or_realized(&s, &tol)?;
            for path in write_matrices(&out, &s.name, &f, tol.rank_rel)? {
                println!("{}", path.display());
            }
        }
        Command::ListFixtures => {
            for name in fixtures::names() {
                let s = fixtures::load(name).expect("bundled").map_err(commands::CliError::from)?.scenario;
                println!("{name:<8} {}", s.notes.unwrap_or_default());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
