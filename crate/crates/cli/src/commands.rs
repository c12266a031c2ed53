//! Command implementations shared by the binary and the tests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bearing_core::analysis::{classify, classify_constraints, laplacian_spectrum, AnalysisReport};
use bearing_core::linalg::LinalgError;
use bearing_core::simulation::{final_shape_check, simulate, ShapeCheck, SimulationConfig, SimulationError, Trajectory};
use bearing_core::{AnalysisError, Formation, FormationError, Tolerances};
use clap::ValueEnum;
use thiserror::Error;

use crate::conjecture::ConjectureError;
use crate::export;
use crate::fixtures;
use crate::scenario::{self, Parsed, Scenario, ScenarioError};

/// Tolerance of the final bearing-equivalence and shape checks after a run.
pub const FINAL_SHAPE_TOL: f64 = 1e-6;
/// `dt * max|λ|` above this triggers a step-size warning.
pub const STIFFNESS_WARNING: f64 = 0.1;

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
pub const EXIT_CONJECTURE: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("'{0}' is neither a readable file nor a bundled fixture (see list-fixtures)")]
    UnknownScenario(String),
    #[error("scenario '{0}' has no initial configuration; pass --seed")]
    MissingInitial(String),
    #[error(transparent)]
    Formation(#[from] FormationError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Conjecture(#[from] ConjectureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn analysis_exit_code(e: &AnalysisError) -> u8 {
    match e {
        AnalysisError::InconsistentRankTests { .. }
        | AnalysisError::CriteriaDisagree { .. }
        | AnalysisError::UnstableSpectrum { .. }
        | AnalysisError::EigenSolverFailed
        | AnalysisError::Linalg(LinalgError::DefectiveZeroEigenvalue { .. }) => EXIT_NUMERICAL,
        _ => EXIT_VALIDATION,
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Analysis(e) => analysis_exit_code(e),
            CliError::Simulation(SimulationError::Analysis(e)) => analysis_exit_code(e),
            _ => EXIT_VALIDATION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
    Both,
}

/// A file path if one exists, otherwise a bundled fixture name.
pub fn resolve_scenario(arg: &str) -> Result<Parsed, CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        return Ok(scenario::parse_file(path)?);
    }
    match fixtures::load(arg) {
        Some(parsed) => Ok(parsed?),
        None => Err(CliError::UnknownScenario(arg.to_owned())),
    }
}

/// The scenario's own target formation, or a realization of its bearings.
pub fn target_or_realized(s: &Scenario, tol: &Tolerances) -> Result<Formation, CliError> {
    match s.target_formation() {
        Some(f) => Ok(f),
        None => Ok(s.constraints().realize(tol.rank_rel)?),
    }
}

pub fn analyze(s: &Scenario, tol: &Tolerances) -> Result<AnalysisReport, CliError> {
    Ok(match s.target_formation() {
        Some(f) => classify(&f, tol)?,
        None => classify_constraints(&s.constraints(), tol)?,
    })
}

fn fmt_vec(v: &[f64], precision: usize) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.precision$}")).collect();
    format!("[{}]", items.join(", "))
}

pub fn render_report(name: &str, r: &AnalysisReport, precision: usize) -> String {
    let mut out = String::new();
    let mut row = |key: &str, value: String| writeln!(out, "{key:<22} {value}").unwrap();
    row("scenario", name.to_owned());
    row("mode", format!("{:?}", r.mode));
    row("agents / dim / edges", format!("{} / {} / {}", r.n, r.d, r.m));
    row("rank R_B", format!("{} (nullity {})", r.rank_rb, r.nullity_rb));
    row("rank L_B", format!("{} (nullity {})", r.rank_lb, r.nullity_lb));
    row("trivial motions", r.trivial_space_dim.to_string());
    row("rigid", r.is_rigid.to_string());
    row("persistent", r.is_persistent.to_string());
    row(
        "out-degree condition",
        match &r.sufficient_condition {
            Some(c) if c.condition_holds => "holds".to_owned(),
            Some(c) => format!("fails at agents {:?}", c.violating_agents),
            None => "n/a (d != 2)".to_owned(),
        },
    );
    row("weakly connected", r.weakly_connected.to_string());
    row("undirected", r.undirected.to_string());
    row(
        "null chain residuals",
        r.null_chain_residuals.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(" "),
    );
    row("min Re(lambda)", format!("{:.precision$e}", r.min_real_part));
    if r.conjecture_violation_candidate {
        row("WARNING", "negative real part beyond tolerance".to_owned());
    }
    let spectrum: Vec<String> = r
        .spectrum
        .iter()
        .map(|[re, im]| {
            if *im == 0.0 {
                format!("{re:.precision$}")
            } else {
                format!("{re:.precision$}{im:+.precision$}i")
            }
        })
        .collect();
    row("spectrum", spectrum.join(" "));
    writeln!(out, "Null(R_B) basis:").unwrap();
    for v in &r.null_rb_basis {
        writeln!(out, "  {}", fmt_vec(v, precision)).unwrap();
    }
    writeln!(out, "Null(L_B) basis:").unwrap();
    for v in &r.null_lb_basis {
        writeln!(out, "  {}", fmt_vec(v, precision)).unwrap();
    }
    out
}

#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub trajectory: Trajectory,
    /// `None` when the run did not converge.
    pub shape: Option<ShapeCheck>,
    pub stiffness: f64,
}

impl SimulationOutcome {
    pub fn summary(&self) -> String {
        let t = &self.trajectory;
        let converged = t.converged_at.map_or_else(|| "none".to_owned(), |c| format!("{c}"));
        let bearing = t
            .final_bearing_error()
            .map_or_else(|| "undefined".to_owned(), |e| format!("{e:.6e}"));
        let verdict = match &self.shape {
            Some(s) => format!("equivalent={} same_shape={}", s.equivalent, s.same_shape),
            None => "equivalent=unknown (not converged)".to_owned(),
        };
        format!(
            "converged_at={converged} final_control_norm={:.6e} final_bearing_error={bearing} {verdict}",
            t.final_control_norm()
        )
    }
}

pub fn run_simulation(
    s: &Scenario,
    cfg: &SimulationConfig,
    seed: Option<u64>,
    tol: &Tolerances,
) -> Result<SimulationOutcome, CliError> {
    let (p0, seed) = s
        .initial_positions(seed)
        .ok_or_else(|| CliError::MissingInitial(s.name.clone()))?;
    let c = s.constraints();
    let stiffness = cfg.dt * laplacian_spectrum(&c)?.spectral_radius();
    let trajectory = simulate(&c, &p0, cfg, seed)?;
    let shape = if trajectory.converged_at.is_some() {
        let target = target_or_realized(s, tol)?;
        Some(final_shape_check(&trajectory, &target, FINAL_SHAPE_TOL)?)
    } else {
        None
    };
    Ok(SimulationOutcome {
        trajectory,
        shape,
        stiffness,
    })
}

pub fn write_trajectory(dir: &Path, name: &str, traj: &Trajectory, format: OutputFormat) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
        let path = dir.join(format!("{name}_trajectory.csv"));
        fs::write(&path, export::trajectory_csv(traj))?;
        written.push(path);
    }
    if matches!(format, OutputFormat::Json | OutputFormat::Both) {
        let path = dir.join(format!("{name}_trajectory.json"));
        fs::write(&path, export::trajectory_json(traj))?;
        written.push(path);
    }
    Ok(written)
}
